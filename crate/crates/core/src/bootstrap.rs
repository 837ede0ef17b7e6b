//! Bootstrap calibration of the critical bandwidth statistic.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::cb_engine::{search, CbConfig, Estimator, NullCheck};
use crate::error::{Error, Result};
use crate::estimators::{Grid, LocalPoly, Sample};
use crate::rng::{substream, DOMAIN_CB};
use crate::shape::{ConstraintSet, Direction, ShapeHypothesis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    /// Resample centered residuals of the local linear fit at the statistic.
    ResidualRegression,
    /// Draw from the variance-corrected smoothed KDE at the statistic.
    SmoothedDensity,
}

impl BootstrapMode {
    pub fn estimator(self) -> Estimator {
        match self {
            BootstrapMode::ResidualRegression => Estimator::LOCAL_LINEAR,
            BootstrapMode::SmoothedDensity => Estimator::Kde,
        }
    }
}

/// `Identity` reproduces the original sample in every replication; it exists
/// to test the plumbing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    #[default]
    Random,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub seed: u64,
    pub mode: BootstrapMode,
    pub resampling: Resampling,
}

impl BootstrapConfig {
    pub fn new(replications: usize, seed: u64, mode: BootstrapMode) -> Self {
        Self { replications, seed, mode, resampling: Resampling::Random }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("need at least one bootstrap replication".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub statistic: f64,
    pub p_value: f64,
    pub replications_used: usize,
    /// Replications where no bandwidth up to the expanded maximum satisfied
    /// the hypothesis; they enter the p-value at that maximum.
    pub bracket_failures: usize,
    pub boot_statistics: Vec<f64>,
    pub grid_used: usize,
    pub direction: Option<Direction>,
    pub nesting_anomaly: bool,
    pub seed: u64,
}

impl TestReport {
    /// Report for a hypothesis with nothing to check.
    pub(crate) fn vacuous(h_min: f64, grid_used: usize, seed: u64) -> Self {
        Self {
            statistic: h_min,
            p_value: 1.0,
            replications_used: 0,
            bracket_failures: 0,
            boot_statistics: Vec::new(),
            grid_used,
            direction: None,
            nesting_anomaly: false,
            seed,
        }
    }
}

/// Draws bootstrap samples around the fit at the statistic.
pub(crate) enum Resampler<'a> {
    Residual { base: &'a Sample, fitted: Vec<f64>, residuals: Vec<f64> },
    Density { xs: &'a [f64], h: f64 },
    Identity(&'a Sample),
}

impl<'a> Resampler<'a> {
    pub(crate) fn new(sample: &'a Sample, h_stat: f64, boot: &BootstrapConfig) -> Result<Self> {
        if boot.resampling == Resampling::Identity {
            return Ok(Resampler::Identity(sample));
        }
        Ok(match boot.mode {
            BootstrapMode::ResidualRegression => {
                let ys = sample.responses(3)?;
                let mut fitted = vec![0.0; sample.n()];
                LocalPoly::new(sample.xs(), ys, 1).values(sample.xs(), h_stat, &mut fitted)?;
                let raw: Vec<f64> = ys.iter().zip(&fitted).map(|(y, f)| y - f).collect();
                let mean = raw.iter().sum::<f64>() / raw.len() as f64;
                let residuals = raw.iter().map(|r| r - mean).collect();
                Resampler::Residual { base: sample, fitted, residuals }
            }
            BootstrapMode::SmoothedDensity => {
                sample.require_density(1)?;
                Resampler::Density { xs: sample.xs(), h: h_stat }
            }
        })
    }

    pub(crate) fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Sample> {
        match self {
            Resampler::Residual { base, fitted, residuals } => {
                let e = resample_residuals(residuals, rng);
                Ok(base.with_responses(fitted.iter().zip(e).map(|(f, e)| f + e).collect()))
            }
            Resampler::Density { xs, h } => Sample::density(smoothed_density_resample(xs, *h, rng)),
            Resampler::Identity(s) => Ok((*s).clone()),
        }
    }
}

/// `residuals.len()` draws with replacement.
pub fn resample_residuals(residuals: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let n = residuals.len();
    (0..n).map(|_| residuals[rng.random_range(0..n)]).collect()
}

/// Draws from the Gaussian KDE at bandwidth `h`, rescaled so the resample
/// keeps the sample variance.
pub fn smoothed_density_resample(xs: &[f64], h: f64, rng: &mut impl Rng) -> Vec<f64> {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    if var <= 0.0 {
        return vec![mean; n];
    }
    let shrink = 1.0 / (1.0 + h * h / var).sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            mean + (xs[rng.random_range(0..n)] + h * z - mean) * shrink
        })
        .collect()
}

/// Critical bandwidth test: the statistic on `sample` and its bootstrap
/// p-value, with replications drawn on the same grid and constraints.
pub fn cb_test(
    sample: &Sample,
    grid: &Grid,
    hyp: &ShapeHypothesis,
    constraints: &ConstraintSet,
    cfg: &CbConfig,
    boot: &BootstrapConfig,
) -> Result<TestReport> {
    cfg.validate()?;
    boot.validate()?;
    let estimator = boot.mode.estimator();
    let mut check = NullCheck::new(sample, grid, hyp, constraints, estimator)?;
    if check.is_vacuous() {
        return Ok(TestReport::vacuous(cfg.h_min, grid.len(), boot.seed));
    }
    let stat = search(&mut check, cfg).map_err(|h_max| Error::NoSatisfyingBandwidth { h_max, curve: None })?;
    let h_stat = stat.bandwidth.get();
    let resampler = Resampler::new(sample, h_stat, boot)?;

    let draws: Vec<(f64, bool)> = (0..boot.replications)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(boot.seed, DOMAIN_CB, b as u64);
            let star = resampler.draw(&mut rng)?;
            let mut check = NullCheck::new(&star, grid, hyp, constraints, estimator)?;
            Ok(match search(&mut check, cfg) {
                Ok(r) => (r.bandwidth.get(), false),
                Err(h) => (h, true),
            })
        })
        .collect::<Result<_>>()?;

    let exceed = draws.iter().filter(|(h, _)| *h >= h_stat).count();
    Ok(TestReport {
        statistic: h_stat,
        p_value: p_value(exceed, boot.replications),
        replications_used: boot.replications,
        bracket_failures: draws.iter().filter(|(_, failed)| *failed).count(),
        boot_statistics: draws.into_iter().map(|(h, _)| h).collect(),
        grid_used: grid.len(),
        direction: stat.direction,
        nesting_anomaly: stat.nesting_anomaly,
        seed: boot.seed,
    })
}

/// Decision-only variant of [`cb_test`]: each replication fits once at the
/// statistic and counts as exceeding when the null fails there. Under
/// nesting this is the same count as `h* >= h_stat`, at a fraction of the
/// cost. `boot_statistics` is left empty.
pub fn cb_test_exceedance(
    sample: &Sample,
    grid: &Grid,
    hyp: &ShapeHypothesis,
    constraints: &ConstraintSet,
    cfg: &CbConfig,
    boot: &BootstrapConfig,
) -> Result<TestReport> {
    cfg.validate()?;
    boot.validate()?;
    let estimator = boot.mode.estimator();
    let mut check = NullCheck::new(sample, grid, hyp, constraints, estimator)?;
    if check.is_vacuous() {
        return Ok(TestReport::vacuous(cfg.h_min, grid.len(), boot.seed));
    }
    let stat = search(&mut check, cfg).map_err(|h_max| Error::NoSatisfyingBandwidth { h_max, curve: None })?;
    let h_stat = stat.bandwidth.get();
    let mut report = TestReport {
        statistic: h_stat,
        p_value: 1.0,
        replications_used: boot.replications,
        bracket_failures: 0,
        boot_statistics: Vec::new(),
        grid_used: grid.len(),
        direction: stat.direction,
        nesting_anomaly: stat.nesting_anomaly,
        seed: boot.seed,
    };
    // Every replication is at least h_min.
    if h_stat <= cfg.h_min {
        return Ok(report);
    }
    let resampler = Resampler::new(sample, h_stat, boot)?;
    let fails: Vec<bool> = (0..boot.replications)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(boot.seed, DOMAIN_CB, b as u64);
            let star = resampler.draw(&mut rng)?;
            let mut check = NullCheck::new(&star, grid, hyp, constraints, estimator)?;
            Ok(check.at(h_stat).is_none())
        })
        .collect::<Result<_>>()?;
    report.p_value = p_value(fails.iter().filter(|&&f| f).count(), boot.replications);
    Ok(report)
}

pub(crate) fn p_value(exceed: usize, replications: usize) -> f64 {
    (1 + exceed) as f64 / (1 + replications) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::{full_adjacency, ShapeKind};
    use rand::SeedableRng;

    fn wiggly(n: usize, seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let ys = xs
            .iter()
            .map(|&x| x + 0.3 * (12.0 * x).sin() + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Sample::regression(xs, ys).unwrap()
    }

    #[test]
    fn residual_resample_keeps_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let mean = e.iter().sum::<f64>() / 200.0;
        let reps = 2000;
        let avg: f64 = (0..reps)
            .map(|_| resample_residuals(&e, &mut rng).iter().sum::<f64>() / 200.0)
            .sum::<f64>()
            / reps as f64;
        assert!((avg - mean).abs() < 0.01);
    }

    #[test]
    fn smoothed_resample_preserves_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0 + 3.0).collect();
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let target = var(&xs);
        let mut total = 0.0;
        for _ in 0..200 {
            total += var(&smoothed_density_resample(&xs, 0.8, &mut rng));
        }
        assert!((total / 200.0 / target - 1.0).abs() < 0.05);
    }

    #[test]
    fn constant_sample_resamples_to_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(smoothed_density_resample(&[2.0; 5], 0.5, &mut rng), vec![2.0; 5]);
    }

    #[test]
    fn identity_resampling_gives_p_one() {
        let s = wiggly(80, 4);
        let grid = Grid::spanning(&s, 60).unwrap();
        let cfg = CbConfig::for_sample(&s).unwrap();
        let hyp = ShapeHypothesis::new(ShapeKind::MonotoneIncreasing);
        let boot = BootstrapConfig {
            resampling: Resampling::Identity,
            ..BootstrapConfig::new(20, 9, BootstrapMode::ResidualRegression)
        };
        let r = cb_test(&s, &grid, &hyp, &full_adjacency(&grid), &cfg, &boot).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.boot_statistics.iter().all(|&h| h == r.statistic));
    }

    #[test]
    fn p_value_range_and_determinism() {
        let s = wiggly(80, 5);
        let grid = Grid::spanning(&s, 60).unwrap();
        let cfg = CbConfig::for_sample(&s).unwrap();
        let hyp = ShapeHypothesis::new(ShapeKind::MonotoneIncreasing);
        let boot = BootstrapConfig::new(30, 11, BootstrapMode::ResidualRegression);
        let cons = full_adjacency(&grid);
        let a = cb_test(&s, &grid, &hyp, &cons, &cfg, &boot).unwrap();
        let b = cb_test(&s, &grid, &hyp, &cons, &cfg, &boot).unwrap();
        assert_eq!(a, b);
        assert!(a.p_value > 0.0 && a.p_value <= 1.0);
        assert_eq!(a.boot_statistics.len(), 30);
        assert!(a.p_value >= 1.0 / 31.0);
    }

    #[test]
    fn exceedance_agrees_with_full_search() {
        let hyp = ShapeHypothesis::new(ShapeKind::MonotoneIncreasing);
        for seed in 0..4 {
            let s = wiggly(100, 20 + seed);
            let grid = Grid::spanning(&s, 60).unwrap();
            let cons = full_adjacency(&grid);
            let cfg = CbConfig::for_sample(&s).unwrap();
            let boot = BootstrapConfig::new(40, seed, BootstrapMode::ResidualRegression);
            let full = cb_test(&s, &grid, &hyp, &cons, &cfg, &boot).unwrap();
            let fast = cb_test_exceedance(&s, &grid, &hyp, &cons, &cfg, &boot).unwrap();
            assert_eq!(full.statistic, fast.statistic);
            // Replications within one bisection step of the statistic may
            // land on either side.
            let near = full
                .boot_statistics
                .iter()
                .filter(|&&h| (h / full.statistic - 1.0).abs() <= 2.0 * cfg.bisect_tol)
                .count();
            assert!((full.p_value - fast.p_value).abs() <= (near as f64 + 0.5) / 41.0);
        }
    }

    #[test]
    fn density_mode_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs: Vec<f64> = (0..150)
            .map(|i| rng.sample::<f64, _>(StandardNormal) + if i % 2 == 0 { -2.0 } else { 2.0 })
            .collect();
        let s = Sample::density(xs).unwrap();
        let grid = Grid::spanning(&s, 80).unwrap();
        let cfg = CbConfig::for_sample(&s).unwrap();
        let hyp = ShapeHypothesis::new(ShapeKind::AtMostKModes(1));
        let boot = BootstrapConfig::new(40, 3, BootstrapMode::SmoothedDensity);
        let r = cb_test(&s, &grid, &hyp, &full_adjacency(&grid), &cfg, &boot).unwrap();
        assert!(r.statistic > 0.5);
        assert!(r.p_value < 0.2, "well separated bimodal sample, p = {}", r.p_value);
    }

    #[test]
    fn rejects_zero_replications() {
        let s = wiggly(30, 7);
        let grid = Grid::spanning(&s, 20).unwrap();
        let cfg = CbConfig::for_sample(&s).unwrap();
        let hyp = ShapeHypothesis::new(ShapeKind::MonotoneIncreasing);
        let boot = BootstrapConfig::new(0, 1, BootstrapMode::ResidualRegression);
        assert!(cb_test(&s, &grid, &hyp, &full_adjacency(&grid), &cfg, &boot).is_err());
    }
}
