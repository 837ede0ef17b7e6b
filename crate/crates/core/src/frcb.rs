//! Flatness-robust critical bandwidth test.
//!
//! Grid points whose derivative band contains zero are dropped, and the
//! ordinary critical bandwidth test runs on what is left. The plain test on
//! the full grid is run alongside with the same bootstrap seed.

use rayon::prelude::*;
use serde::Serialize;

use crate::bootstrap::{cb_test, cb_test_exceedance, p_value, BootstrapConfig, BootstrapMode, Resampler, TestReport};
use crate::cb_engine::{search, CbConfig, NullCheck};
use crate::deriv_band::{alpha_flat, filter_grid, simultaneous_band, BandConfig, DerivBand};
use crate::error::{Error, Result};
use crate::estimators::{Grid, Sample};
use crate::rng::{derive_seed, substream, DOMAIN_BAND, DOMAIN_CB};
use crate::shape::{full_adjacency, ShapeHypothesis, ShapeKind};

/// How bootstrap replications are turned into a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Recompute the critical bandwidth of every replication.
    #[default]
    FullSearch,
    /// Only ask whether each replication satisfies the null at the statistic.
    Exceedance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrcbConfig {
    pub alpha: f64,
    pub cb: CbConfig,
    pub boot: BootstrapConfig,
    pub band: BandConfig,
    /// Rebuild the band and filtered grid inside every replication.
    pub refilter_per_replication: bool,
    pub calibration: Calibration,
}

impl FrcbConfig {
    /// Defaults for `sample`: band replications and seed follow `boot`.
    pub fn new(sample: &Sample, alpha: f64, boot: BootstrapConfig) -> Result<Self> {
        Ok(Self {
            alpha,
            cb: CbConfig::for_sample(sample)?,
            boot,
            band: BandConfig::new(boot.replications, boot.seed),
            refilter_per_replication: false,
            calibration: Calibration::FullSearch,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::InvalidConfig(format!("alpha must be in (0, 0.5], got {}", self.alpha)));
        }
        self.cb.validate()?;
        self.boot.validate()?;
        self.band.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrcbReport {
    pub cb: TestReport,
    pub frcb: TestReport,
    pub band: DerivBand,
    pub alpha_flat: f64,
    pub retained_fraction: f64,
    /// Inclusive runs of retained indices into the full grid.
    pub segments: Vec<(usize, usize)>,
    pub cb_reject: bool,
    pub frcb_reject: bool,
}

impl FrcbReport {
    pub fn filtered_grid(&self) -> Grid {
        let keep: Vec<bool> = self.band.lower.iter().zip(&self.band.upper).map(|(&l, &u)| l > 0.0 || u < 0.0).collect();
        self.band.grid.retain(&keep)
    }
}

/// Runs both tests on a regression or density sample. The bootstrap mode in
/// `cfg` must match the sample.
pub fn frcb_test(sample: &Sample, grid: &Grid, hyp: &ShapeHypothesis, cfg: &FrcbConfig) -> Result<FrcbReport> {
    cfg.validate()?;
    match (cfg.boot.mode, sample.is_density()) {
        (BootstrapMode::ResidualRegression, true) => return Err(Error::MissingResponse),
        (BootstrapMode::SmoothedDensity, false) => return Err(Error::UnexpectedResponse),
        _ => {}
    }
    let a_flat = alpha_flat(sample.n());
    let band = simultaneous_band(sample, grid, 1.0 - a_flat, &cfg.band)?;
    let filtered = filter_grid(&band, grid)?;

    let run = match cfg.calibration {
        Calibration::FullSearch => cb_test,
        Calibration::Exceedance => cb_test_exceedance,
    };
    let cb = run(sample, grid, hyp, &full_adjacency(grid), &cfg.cb, &cfg.boot)?;
    let frcb = if cfg.refilter_per_replication && !filtered.is_empty() {
        refiltered_test(sample, grid, &filtered, hyp, cfg, a_flat)?
    } else {
        run(sample, &filtered, hyp, &full_adjacency(&filtered), &cfg.cb, &cfg.boot)?
    };

    Ok(FrcbReport {
        cb_reject: cb.p_value <= cfg.alpha,
        frcb_reject: frcb.p_value <= cfg.alpha,
        retained_fraction: filtered.len() as f64 / grid.len().max(1) as f64,
        segments: filtered.segments(),
        alpha_flat: a_flat,
        cb,
        frcb,
        band,
    })
}

/// Density version with the null "at most `k_modes` modes".
pub fn frcb_density_test(sample: &Sample, grid: &Grid, k_modes: u32, cfg: &FrcbConfig) -> Result<FrcbReport> {
    if k_modes == 0 {
        return Err(Error::InvalidConfig("a density has at least one mode".into()));
    }
    let cfg = FrcbConfig { boot: BootstrapConfig { mode: BootstrapMode::SmoothedDensity, ..cfg.boot }, ..*cfg };
    frcb_test(sample, grid, &ShapeHypothesis::new(ShapeKind::AtMostKModes(k_modes)), &cfg)
}

/// Each replication filters its own grid with its own band before the
/// critical bandwidth is computed.
fn refiltered_test(
    sample: &Sample,
    grid: &Grid,
    filtered: &Grid,
    hyp: &ShapeHypothesis,
    cfg: &FrcbConfig,
    a_flat: f64,
) -> Result<TestReport> {
    let estimator = cfg.boot.mode.estimator();
    let mut check = NullCheck::new(sample, filtered, hyp, &full_adjacency(filtered), estimator)?;
    let stat = search(&mut check, &cfg.cb).map_err(|h_max| Error::NoSatisfyingBandwidth { h_max, curve: None })?;
    let h_stat = stat.bandwidth.get();
    let resampler = Resampler::new(sample, h_stat, &cfg.boot)?;

    let draws: Vec<(f64, bool)> = (0..cfg.boot.replications)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.boot.seed, DOMAIN_CB, b as u64);
            let star = resampler.draw(&mut rng)?;
            let band_cfg = BandConfig { seed: derive_seed(cfg.band.seed ^ b as u64, DOMAIN_BAND), ..cfg.band };
            let own = filter_grid(&simultaneous_band(&star, grid, 1.0 - a_flat, &band_cfg)?, grid)?;
            let mut check = NullCheck::new(&star, &own, hyp, &full_adjacency(&own), estimator)?;
            if check.is_vacuous() {
                return Ok((cfg.cb.h_min, false));
            }
            Ok(match cfg.calibration {
                Calibration::FullSearch => match search(&mut check, &cfg.cb) {
                    Ok(r) => (r.bandwidth.get(), false),
                    Err(h) => (h, true),
                },
                // Stand-in values on the right side of the statistic.
                Calibration::Exceedance => {
                    if h_stat > cfg.cb.h_min && check.at(h_stat).is_none() {
                        (f64::INFINITY, false)
                    } else {
                        (h_stat.min(cfg.cb.h_min), false)
                    }
                }
            })
        })
        .collect::<Result<_>>()?;

    let exceed = match cfg.calibration {
        Calibration::FullSearch => draws.iter().filter(|(h, _)| *h >= h_stat).count(),
        Calibration::Exceedance if h_stat <= cfg.cb.h_min => draws.len(),
        Calibration::Exceedance => draws.iter().filter(|(h, _)| h.is_infinite()).count(),
    };
    Ok(TestReport {
        statistic: h_stat,
        p_value: p_value(exceed, cfg.boot.replications),
        replications_used: cfg.boot.replications,
        bracket_failures: draws.iter().filter(|(_, f)| *f).count(),
        boot_statistics: match cfg.calibration {
            Calibration::FullSearch => draws.into_iter().map(|(h, _)| h).collect(),
            Calibration::Exceedance => Vec::new(),
        },
        grid_used: filtered.len(),
        direction: stat.direction,
        nesting_anomaly: stat.nesting_anomaly,
        seed: cfg.boot.seed,
    })
}
