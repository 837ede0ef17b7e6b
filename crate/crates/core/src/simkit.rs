//! Monte Carlo harness for rejection rates of the CB and FRCB tests.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bootstrap::{BootstrapConfig, BootstrapMode};
use crate::error::{Error, Result};
use crate::estimators::{Grid, Sample, DEFAULT_GRID_SIZE};
use crate::frcb::{frcb_test, Calibration, FrcbConfig, FrcbReport};
use crate::rng::{derive_seed, substream, DOMAIN_DATA, DOMAIN_SIM_BOOT};
use crate::shape::{ShapeHypothesis, ShapeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SimFunction {
    M1,
    M3,
    M4,
    Flat1,
}

impl SimFunction {
    pub const ALL: [SimFunction; 4] = [SimFunction::M1, SimFunction::Flat1, SimFunction::M3, SimFunction::M4];

    pub fn name(self) -> &'static str {
        match self {
            SimFunction::M1 => "m1",
            SimFunction::M3 => "m3",
            SimFunction::M4 => "m4",
            SimFunction::Flat1 => "flat1",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            SimFunction::M1 => 0.0,
            SimFunction::M3 => x + 0.415 * (-50.0 * (x - 0.5).powi(2)).exp(),
            SimFunction::M4 => {
                let dip = (-100.0 * (x - 0.25).powi(2)).exp();
                if x < 0.5 {
                    10.0 * (x - 0.5).powi(3) - dip
                } else {
                    0.1 * (x - 0.5) - dip
                }
            }
            SimFunction::Flat1 => {
                if x < 0.5 {
                    0.5 * x * (1.0 - x) * 9.0
                } else {
                    0.5 * 0.5 * 0.5 * 9.0
                }
            }
        }
    }

    fn key(self) -> u64 {
        match self {
            SimFunction::M1 => 1,
            SimFunction::M3 => 3,
            SimFunction::M4 => 4,
            SimFunction::Flat1 => 11,
        }
    }
}

impl FromStr for SimFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SimFunction::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownFunction(s.to_string()))
    }
}

/// Evaluates a simulation function by name.
pub fn eval_sim_function(name: &str, x: f64) -> Result<f64> {
    Ok(name.parse::<SimFunction>()?.eval(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimDesign {
    pub function: SimFunction,
    pub n: usize,
    pub noise_sd: f64,
    pub n_sims: usize,
    pub n_boot: usize,
    pub alpha: f64,
    pub seed: u64,
    pub grid_size: usize,
    pub hypothesis: ShapeHypothesis,
}

impl SimDesign {
    pub const DEFAULT_NOISE_SD: f64 = 0.25;
    pub const DEFAULT_ALPHA: f64 = 0.05;
    pub const DEFAULT_SIMS: usize = 200;
    pub const DEFAULT_BOOT: usize = 200;

    pub fn new(function: SimFunction, n: usize, seed: u64) -> Self {
        Self {
            function,
            n,
            noise_sd: Self::DEFAULT_NOISE_SD,
            n_sims: Self::DEFAULT_SIMS,
            n_boot: Self::DEFAULT_BOOT,
            alpha: Self::DEFAULT_ALPHA,
            seed,
            grid_size: DEFAULT_GRID_SIZE,
            hypothesis: ShapeHypothesis::new(ShapeKind::MonotoneEither),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::TooFewObservations { required: 3, actual: self.n });
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise sd must be non-negative, got {}", self.noise_sd)));
        }
        if self.n_sims == 0 || self.n_boot == 0 || self.grid_size < 2 {
            return Err(Error::InvalidConfig("simulations, replications and grid size must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::InvalidConfig(format!("alpha must be in (0, 0.5], got {}", self.alpha)));
        }
        self.hypothesis.validate()
    }

    /// Seed of this (function, n) cell, so cells draw independent data.
    fn cell_seed(&self) -> u64 {
        derive_seed(self.seed, self.function.key() << 32 ^ self.n as u64)
    }
}

/// Dataset `index` of a design: uniform x on [0, 1] and Gaussian noise.
pub fn generate(design: &SimDesign, index: u64) -> Result<Sample> {
    let mut rng = substream(design.cell_seed(), DOMAIN_DATA, index);
    let noise = Normal::new(0.0, design.noise_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let xs: Vec<f64> = (0..design.n).map(|_| rng.random::<f64>()).collect();
    let ys = xs.iter().map(|&x| design.function.eval(x) + noise.sample(&mut rng)).collect();
    Sample::regression(xs, ys)
}

/// Runs both tests on dataset `index` of `design`.
pub fn run_sim(design: &SimDesign, index: u64, calibration: Calibration) -> Result<FrcbReport> {
    let sample = generate(design, index)?;
    let grid = Grid::spanning(&sample, design.grid_size)?;
    let boot_seed = derive_seed(design.cell_seed() ^ index, DOMAIN_SIM_BOOT);
    let boot = BootstrapConfig::new(design.n_boot, boot_seed, BootstrapMode::ResidualRegression);
    let cfg = FrcbConfig { calibration, ..FrcbConfig::new(&sample, design.alpha, boot)? };
    frcb_test(&sample, &grid, &design.hypothesis, &cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SimTest {
    #[serde(rename = "CB")]
    Cb,
    #[serde(rename = "FRCB")]
    Frcb,
}

impl SimTest {
    pub fn name(self) -> &'static str {
        match self {
            SimTest::Cb => "CB",
            SimTest::Frcb => "FRCB",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub function: SimFunction,
    pub n: usize,
    pub test: SimTest,
    pub rejections: usize,
    pub completed: usize,
    pub failed: usize,
    pub proportion: f64,
    /// `sqrt(p (1 - p) / completed)`.
    pub mc_se: f64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionTable {
    pub cells: Vec<TableCell>,
}

/// Rejection proportions of each requested test for every design. Failed
/// simulations are counted and mark their cell incomplete.
pub fn rejection_table(designs: &[SimDesign], tests: &[SimTest], calibration: Calibration) -> Result<RejectionTable> {
    for d in designs {
        d.validate()?;
    }
    let mut cells = Vec::new();
    for design in designs {
        let outcomes: Vec<Option<(bool, bool)>> = (0..design.n_sims as u64)
            .into_par_iter()
            .map(|i| run_sim(design, i, calibration).ok().map(|r| (r.cb_reject, r.frcb_reject)))
            .collect();
        let completed = outcomes.iter().flatten().count();
        for &test in tests {
            let rejections = outcomes
                .iter()
                .flatten()
                .filter(|(cb, frcb)| match test {
                    SimTest::Cb => *cb,
                    SimTest::Frcb => *frcb,
                })
                .count();
            let p = if completed > 0 { rejections as f64 / completed as f64 } else { f64::NAN };
            cells.push(TableCell {
                function: design.function,
                n: design.n,
                test,
                rejections,
                completed,
                failed: design.n_sims - completed,
                proportion: p,
                mc_se: (p * (1.0 - p) / completed as f64).sqrt(),
                complete: completed == design.n_sims,
            });
        }
    }
    Ok(RejectionTable { cells })
}

impl RejectionTable {
    pub fn cell(&self, function: SimFunction, n: usize, test: SimTest) -> Option<&TableCell> {
        self.cells.iter().find(|c| c.function == function && c.n == n && c.test == test)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("function,n,test,rejections,completed,failed,proportion,mc_se,complete\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{:.6},{}",
                c.function.name(),
                c.n,
                c.test.name(),
                c.rejections,
                c.completed,
                c.failed,
                c.proportion,
                c.mc_se,
                c.complete
            );
        }
        out
    }

    /// One row per (function, test), one column per sample size.
    pub fn to_pretty(&self) -> String {
        let mut sizes: Vec<usize> = self.cells.iter().map(|c| c.n).collect();
        sizes.sort_unstable();
        sizes.dedup();
        let mut rows: Vec<(SimFunction, SimTest)> = Vec::new();
        for c in &self.cells {
            if !rows.contains(&(c.function, c.test)) {
                rows.push((c.function, c.test));
            }
        }
        let mut out = format!("{:<12}", "");
        for n in &sizes {
            let _ = write!(out, "{:>14}", format!("n={n}"));
        }
        out.push('\n');
        for (f, t) in rows {
            let _ = write!(out, "{:<12}", format!("{} {}", t.name(), f.name()));
            for &n in &sizes {
                let text = match self.cell(f, n, t) {
                    Some(c) if c.completed > 0 => {
                        format!("{:.2} ({:.3}){}", c.proportion, c.mc_se, if c.complete { "" } else { "*" })
                    }
                    Some(_) => "failed".to_string(),
                    None => "-".to_string(),
                };
                let _ = write!(out, "{text:>14}");
            }
            out.push('\n');
        }
        if self.cells.iter().any(|c| !c.complete) {
            out.push_str("* some simulations failed; proportion over completed runs\n");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formulas() {
        assert_eq!(eval_sim_function("m1", 0.37).unwrap(), 0.0);
        assert!((eval_sim_function("m3", 0.5).unwrap() - 0.915).abs() < 1e-12);
        assert_eq!(eval_sim_function("flat1", 0.7).unwrap(), 1.125);
        assert!((SimFunction::Flat1.eval(0.5 - 1e-13) - 1.125).abs() < 1e-12);
        assert!(matches!(eval_sim_function("m2", 0.1), Err(Error::UnknownFunction(_))));
        // The left branch of m4 at the dip.
        let expect = 10.0 * (-0.25f64).powi(3) - 1.0;
        assert!((SimFunction::M4.eval(0.25) - expect).abs() < 1e-15);
    }

    #[test]
    fn shape_of_functions_on_a_grid() {
        let grid: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
        let diffs = |f: SimFunction| grid.windows(2).map(|w| f.eval(w[1]) - f.eval(w[0])).collect::<Vec<_>>();
        assert!(diffs(SimFunction::M1).iter().all(|&d| d >= 0.0));
        assert!(diffs(SimFunction::Flat1).iter().all(|&d| d >= -1e-12));
        let m4 = diffs(SimFunction::M4);
        let first_down = m4.iter().position(|&d| d < 0.0).unwrap();
        assert!(m4[first_down..].iter().any(|&d| d > 0.0));
    }

    #[test]
    fn noiseless_design_is_exact() {
        let design = SimDesign { noise_sd: 0.0, ..SimDesign::new(SimFunction::M3, 50, 1) };
        let s = generate(&design, 0).unwrap();
        for (x, y) in s.xs().iter().zip(s.ys().unwrap()) {
            assert_eq!(*y, SimFunction::M3.eval(*x));
        }
    }

    #[test]
    fn noise_and_design_moments() {
        let design = SimDesign::new(SimFunction::M4, 10_000, 2);
        let (mut resid, mut xs) = (Vec::new(), Vec::new());
        for i in 0..10 {
            let s = generate(&design, i).unwrap();
            for (x, y) in s.xs().iter().zip(s.ys().unwrap()) {
                resid.push(y - SimFunction::M4.eval(*x));
                xs.push(*x);
            }
        }
        let n = resid.len() as f64;
        let m = resid.iter().sum::<f64>() / n;
        let sd = (resid.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd / 0.25 - 1.0).abs() < 0.02);
        let xm = xs.iter().sum::<f64>() / n;
        assert!((xm - 0.5).abs() < 3.0 * (1.0 / 12f64).sqrt() / n.sqrt());
    }

    #[test]
    fn datasets_are_seeded_per_cell() {
        let a = SimDesign::new(SimFunction::M3, 40, 5);
        assert_eq!(generate(&a, 3).unwrap(), generate(&a, 3).unwrap());
        assert_ne!(generate(&a, 3).unwrap(), generate(&a, 4).unwrap());
        let b = SimDesign { function: SimFunction::M4, ..a };
        assert_ne!(generate(&a, 3).unwrap().xs(), generate(&b, 3).unwrap().xs());
    }

    #[test]
    fn small_table_is_reproducible() {
        let designs: Vec<SimDesign> = [SimFunction::M1, SimFunction::M4]
            .into_iter()
            .map(|f| SimDesign { n_sims: 6, n_boot: 19, ..SimDesign::new(f, 60, 7) })
            .collect();
        let tests = [SimTest::Cb, SimTest::Frcb];
        let a = rejection_table(&designs, &tests, Calibration::Exceedance).unwrap();
        let b = rejection_table(&designs, &tests, Calibration::Exceedance).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.cells.len(), 4);
        assert!(a.to_pretty().contains("FRCB m4"));
        for c in &a.cells {
            assert_eq!(c.completed + c.failed, 6);
            assert!((0.0..=1.0).contains(&c.proportion));
        }
    }
}
