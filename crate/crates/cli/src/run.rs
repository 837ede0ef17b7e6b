//! Command execution and output files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use frcb_core::bootstrap::{cb_test, BootstrapConfig, BootstrapMode, TestReport};
use frcb_core::cb_engine::{log_ladder, CbConfig, Estimator};
use frcb_core::deriv_band::{alpha_flat, filter_grid, simultaneous_band, BandConfig, DerivBand};
use frcb_core::estimators::{Bandwidth, Grid, Sample};
use frcb_core::frcb::{frcb_test, Calibration, FrcbConfig};
use frcb_core::shape::{full_adjacency, satisfies, ShapeHypothesis, ShapeKind};
use frcb_core::simkit::{rejection_table, SimDesign, SimFunction, SimTest};
use serde::Serialize;

use crate::args::{Cli, Command, Format, HypothesisArg};
use crate::error::{CliError, Result};
use crate::ingest::{ingest_csv, DataKind};

pub const SCHEMA_VERSION: u32 = 1;
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Files written by a run and a short human-readable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Runs `cli`, on a dedicated pool when a worker count is given.
pub fn run(cli: &Cli) -> Result<RunOutput> {
    match cli.workers {
        Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<RunOutput> {
    if !(cli.alpha > 0.0 && cli.alpha <= 0.5) {
        return Err(CliError::Usage(format!("--alpha must be in (0, 0.5], got {}", cli.alpha)));
    }
    if cli.grid_size < 2 {
        return Err(CliError::Usage("--grid-size must be at least 2".into()));
    }
    if cli.boot == 0 {
        return Err(CliError::Usage("--boot must be at least 1".into()));
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
    match cli.command {
        Command::Test => run_test(cli, DataKind::Regression),
        Command::TestDensity => run_test(cli, DataKind::Density),
        Command::Simulate => run_simulate(cli),
        Command::Band => run_band(cli),
        Command::Paths => run_paths(cli),
    }
}

/// Everything needed to re-run a command; the worker count is left out
/// because it cannot change results.
#[derive(Debug, Serialize)]
struct ConfigEcho<'a> {
    command: Command,
    input: Option<String>,
    hypothesis: String,
    alpha: f64,
    boot: usize,
    seed: u64,
    grid_size: usize,
    no_frcb: bool,
    refilter_per_replication: bool,
    bandwidths: &'a [f64],
    band_bandwidth: Option<f64>,
    level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulation: Option<SimEcho<'a>>,
}

#[derive(Debug, Serialize)]
struct SimEcho<'a> {
    functions: &'a [String],
    sizes: &'a [usize],
    sims: usize,
    noise_sd: f64,
    full_search: bool,
}

#[derive(Debug, Serialize)]
struct DataSummary {
    n: usize,
    x_min: f64,
    x_max: f64,
}

#[derive(Debug, Serialize)]
struct Envelope<'a, T> {
    schema_version: u32,
    library_version: &'static str,
    config: ConfigEcho<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<DataSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<&'a [f64]>,
    result: T,
}

fn hypothesis_for(cli: &Cli) -> HypothesisArg {
    cli.hypothesis.unwrap_or(match cli.command {
        Command::TestDensity => HypothesisArg(ShapeKind::AtMostKModes(1)),
        _ => HypothesisArg(ShapeKind::MonotoneEither),
    })
}

fn echo(cli: &Cli) -> ConfigEcho<'_> {
    ConfigEcho {
        command: cli.command,
        input: cli.input.as_ref().map(|p| p.display().to_string()),
        hypothesis: hypothesis_for(cli).to_string(),
        alpha: cli.alpha,
        boot: cli.boot,
        seed: cli.seed,
        grid_size: cli.grid_size,
        no_frcb: cli.no_frcb,
        refilter_per_replication: cli.refilter_per_replication,
        bandwidths: &cli.bandwidths,
        band_bandwidth: cli.band_bandwidth,
        level: cli.level,
        simulation: (cli.command == Command::Simulate).then_some(SimEcho {
            functions: &cli.functions,
            sizes: &cli.sizes,
            sims: cli.sims,
            noise_sd: cli.noise_sd,
            full_search: cli.full_search,
        }),
    }
}

fn summary_of(sample: &Sample) -> DataSummary {
    let xs = sample.xs();
    DataSummary { n: xs.len(), x_min: xs[0], x_max: xs[xs.len() - 1] }
}

fn load(cli: &Cli, kind: DataKind) -> Result<Sample> {
    let path = cli.input.as_ref().ok_or_else(|| CliError::Usage("--input is required for this command".into()))?;
    ingest_csv(path, kind)
}

fn write_file(path: &Path, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize infallibly");
    s.push('\n');
    s
}

fn extra_bandwidths(cli: &Cli) -> Result<Vec<f64>> {
    cli.bandwidths
        .iter()
        .map(|&h| Bandwidth::new(h).map(Bandwidth::get).map_err(CliError::from))
        .collect()
}

#[derive(Debug, Serialize)]
struct TestResult<'a> {
    cb_config: CbConfig,
    cb: &'a TestReport,
    cb_reject: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    frcb: Option<FrcbSection<'a>>,
}

#[derive(Debug, Serialize)]
struct FrcbSection<'a> {
    band_config: BandConfig,
    alpha_flat: f64,
    retained_fraction: f64,
    segments: &'a [(usize, usize)],
    report: &'a TestReport,
    reject: bool,
    band: &'a DerivBand,
}

fn run_test(cli: &Cli, kind: DataKind) -> Result<RunOutput> {
    let sample = load(cli, kind)?;
    let grid = Grid::spanning(&sample, cli.grid_size)?;
    let hyp = hypothesis_for(cli).hypothesis();
    let (mode, estimator) = match kind {
        DataKind::Regression => (BootstrapMode::ResidualRegression, Estimator::LOCAL_LINEAR),
        DataKind::Density => (BootstrapMode::SmoothedDensity, Estimator::Kde),
    };
    let boot = BootstrapConfig::new(cli.boot, cli.seed, mode);
    let mut cfg = FrcbConfig::new(&sample, cli.alpha, boot)?;
    cfg.band.h_band = cli.band_bandwidth;
    cfg.refilter_per_replication = cli.refilter_per_replication;

    let (cb, report) = if cli.no_frcb {
        (cb_test(&sample, &grid, &hyp, &full_adjacency(&grid), &cfg.cb, &cfg.boot)?, None)
    } else {
        let r = frcb_test(&sample, &grid, &hyp, &cfg)?;
        (r.cb.clone(), Some(r))
    };

    let result = TestResult {
        cb_config: cfg.cb,
        cb: &cb,
        cb_reject: cb.p_value <= cli.alpha,
        frcb: report.as_ref().map(|r| FrcbSection {
            band_config: cfg.band,
            alpha_flat: r.alpha_flat,
            retained_fraction: r.retained_fraction,
            segments: &r.segments,
            report: &r.frcb,
            reject: r.frcb_reject,
            band: &r.band,
        }),
    };

    let mut files = Vec::new();
    match cli.format {
        Format::Json => {
            let env = Envelope {
                schema_version: SCHEMA_VERSION,
                library_version: LIBRARY_VERSION,
                config: echo(cli),
                data: Some(summary_of(&sample)),
                grid: Some(grid.points()),
                result,
            };
            write_file(&cli.out.join("report.json"), &to_json(&env), &mut files)?;
        }
        Format::Csv => {
            let mut csv = String::from("test,statistic,p_value,reject,replications,grid_used\n");
            let mut row = |name: &str, r: &TestReport, reject: bool| {
                let _ = writeln!(
                    csv,
                    "{name},{},{},{reject},{},{}",
                    r.statistic, r.p_value, r.replications_used, r.grid_used
                );
            };
            row("CB", &cb, cb.p_value <= cli.alpha);
            if let Some(r) = &report {
                row("FRCB", &r.frcb, r.frcb_reject);
            }
            write_file(&cli.out.join("report.csv"), &csv, &mut files)?;
        }
    }

    let mut hs = Vec::new();
    if let Some(r) = &report {
        hs.push(r.frcb.statistic);
    }
    hs.push(cb.statistic);
    hs.extend(extra_bandwidths(cli)?);
    let segments = report.as_ref().map_or(&[][..], |r| &r.segments[..]);
    write_file(&cli.out.join("fits.csv"), &fits_csv(&sample, &grid, &hs, estimator, segments)?, &mut files)?;

    let mut summary = format!("CB:   h = {:.6}, p = {:.4}\n", cb.statistic, cb.p_value);
    if let Some(r) = &report {
        write_file(&cli.out.join("band.csv"), &band_csv(&r.band, &r.segments), &mut files)?;
        let h_frcb = Bandwidth::new(r.frcb.statistic)?;
        let fit = estimator.fit(&sample, h_frcb, &grid)?;
        write_file(&cli.out.join("segments.csv"), &segments_csv(&fit.values, &grid, &r.segments, h_frcb.get()), &mut files)?;
        let _ = writeln!(
            summary,
            "FRCB: h = {:.6}, p = {:.4}, retained {:.2} of the grid",
            r.frcb.statistic, r.frcb.p_value, r.retained_fraction
        );
    }
    Ok(RunOutput { files, summary })
}

const PLOT_HEADER: &str = "x,fit,lower,upper,segment_id,h\n";

fn segment_of(segments: &[(usize, usize)], i: usize) -> Option<usize> {
    segments.iter().position(|&(a, b)| (a..=b).contains(&i))
}

fn opt(v: Option<usize>) -> String {
    v.map(|s| s.to_string()).unwrap_or_default()
}

fn fits_csv(sample: &Sample, grid: &Grid, hs: &[f64], estimator: Estimator, segments: &[(usize, usize)]) -> Result<String> {
    let mut out = String::from(PLOT_HEADER);
    for &h in hs {
        let fit = estimator.fit(sample, Bandwidth::new(h)?, grid)?;
        for (i, (x, v)) in grid.points().iter().zip(&fit.values).enumerate() {
            let _ = writeln!(out, "{x},{v},,,{},{h}", opt(segment_of(segments, i)));
        }
    }
    Ok(out)
}

fn band_csv(band: &DerivBand, segments: &[(usize, usize)]) -> String {
    let mut out = String::from(PLOT_HEADER);
    for (i, x) in band.grid.points().iter().enumerate() {
        let _ = writeln!(
            out,
            "{x},{},{},{},{},{}",
            band.estimate[i],
            band.lower[i],
            band.upper[i],
            opt(segment_of(segments, i)),
            band.h_band.get()
        );
    }
    out
}

fn segments_csv(values: &[f64], grid: &Grid, segments: &[(usize, usize)], h: f64) -> String {
    let mut out = String::from(PLOT_HEADER);
    for (id, &(a, b)) in segments.iter().enumerate() {
        for i in a..=b {
            let _ = writeln!(out, "{},{},,,{id},{h}", grid.points()[i], values[i]);
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct BandResult<'a> {
    alpha_flat: f64,
    band_config: BandConfig,
    retained: usize,
    segments: Vec<(usize, usize)>,
    band: &'a DerivBand,
}

fn run_band(cli: &Cli) -> Result<RunOutput> {
    let sample = load(cli, DataKind::Regression)?;
    let grid = Grid::spanning(&sample, cli.grid_size)?;
    let a_flat = alpha_flat(sample.n());
    let level = cli.level.unwrap_or(1.0 - a_flat);
    let band_cfg = BandConfig { h_band: cli.band_bandwidth, ..BandConfig::new(cli.boot, cli.seed) };
    let band = simultaneous_band(&sample, &grid, level, &band_cfg)?;
    let kept = filter_grid(&band, &grid)?;
    let segments = kept.segments();

    let mut files = Vec::new();
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        library_version: LIBRARY_VERSION,
        config: echo(cli),
        data: Some(summary_of(&sample)),
        grid: Some(grid.points()),
        result: BandResult { alpha_flat: a_flat, band_config: band_cfg, retained: kept.len(), segments: segments.clone(), band: &band },
    };
    write_file(&cli.out.join("band.json"), &to_json(&env), &mut files)?;
    write_file(&cli.out.join("band.csv"), &band_csv(&band, &segments), &mut files)?;
    let summary = format!(
        "band at level {level:.4}, h = {:.6}, critical value {:.3}; {} of {} grid points exclude zero\n",
        band.h_band.get(),
        band.critical_value,
        kept.len(),
        grid.len()
    );
    Ok(RunOutput { files, summary })
}

#[derive(Debug, Serialize)]
struct PathPoint {
    h: f64,
    satisfies: bool,
}

fn run_paths(cli: &Cli) -> Result<RunOutput> {
    let sample = load(cli, DataKind::Regression)?;
    let grid = Grid::spanning(&sample, cli.grid_size)?;
    let hyp = hypothesis_for(cli).hypothesis();
    let hs = if cli.bandwidths.is_empty() {
        let cfg = CbConfig::for_sample(&sample)?;
        log_ladder(cfg.h_min, cfg.h_max, 8)
    } else {
        extra_bandwidths(cli)?
    };
    let cons = full_adjacency(&grid);
    let points = hs
        .iter()
        .map(|&h| {
            let fit = Estimator::LOCAL_LINEAR.fit(&sample, Bandwidth::new(h)?, &grid)?;
            Ok(PathPoint { h, satisfies: satisfies(&fit, &hyp, &cons)? })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut files = Vec::new();
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        library_version: LIBRARY_VERSION,
        config: echo(cli),
        data: Some(summary_of(&sample)),
        grid: Some(grid.points()),
        result: &points,
    };
    write_file(&cli.out.join("paths.json"), &to_json(&env), &mut files)?;
    write_file(&cli.out.join("fits.csv"), &fits_csv(&sample, &grid, &hs, Estimator::LOCAL_LINEAR, &[])?, &mut files)?;
    let mut summary = String::new();
    for p in &points {
        let _ = writeln!(summary, "h = {:.6}: {}", p.h, if p.satisfies { "in the null class" } else { "violates" });
    }
    Ok(RunOutput { files, summary })
}

fn run_simulate(cli: &Cli) -> Result<RunOutput> {
    let functions = cli
        .functions
        .iter()
        .map(|f| f.parse::<SimFunction>())
        .collect::<frcb_core::Result<Vec<_>>>()?;
    let hypothesis: ShapeHypothesis = hypothesis_for(cli).hypothesis();
    let mut designs = Vec::new();
    for &f in &functions {
        for &n in &cli.sizes {
            designs.push(SimDesign {
                noise_sd: cli.noise_sd,
                n_sims: cli.sims,
                n_boot: cli.boot,
                alpha: cli.alpha,
                grid_size: cli.grid_size,
                hypothesis,
                ..SimDesign::new(f, n, cli.seed)
            });
        }
    }
    let calibration = if cli.full_search { Calibration::FullSearch } else { Calibration::Exceedance };
    let table = rejection_table(&designs, &[SimTest::Cb, SimTest::Frcb], calibration)?;

    let mut files = Vec::new();
    write_file(&cli.out.join("table.csv"), &table.to_csv(), &mut files)?;
    let pretty = table.to_pretty();
    write_file(&cli.out.join("table.txt"), &pretty, &mut files)?;
    if cli.format == Format::Json {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            library_version: LIBRARY_VERSION,
            config: echo(cli),
            data: None,
            grid: None,
            result: &table,
        };
        write_file(&cli.out.join("table.json"), &to_json(&env), &mut files)?;
    }
    Ok(RunOutput { files, summary: pretty })
}
