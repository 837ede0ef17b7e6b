//! Simultaneous confidence bands for the first derivative, calibrated by the
//! bootstrap distribution of the maximal studentized deviation.

use rayon::prelude::*;
use serde::Serialize;

use crate::bootstrap::{resample_residuals, smoothed_density_resample};
use crate::error::{Error, Result};
use crate::estimators::{kde_derivative, Bandwidth, DerivativeSmoother, Grid, Sample};
use crate::rng::{substream, DOMAIN_BAND};

/// Miscoverage used for the flatness band: `n^(-1/2)` clamped to `[1e-6, 0.5]`.
pub fn alpha_flat(n: usize) -> f64 {
    (1.0 / (n as f64).sqrt()).clamp(1e-6, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandConfig {
    /// Fixed derivative bandwidth; `None` uses [`band_bandwidth`].
    pub h_band: Option<f64>,
    pub inflation: f64,
    pub replications: usize,
    pub seed: u64,
}

impl BandConfig {
    pub const DEFAULT_INFLATION: f64 = 1.0;

    pub fn new(replications: usize, seed: u64) -> Self {
        Self { h_band: None, inflation: Self::DEFAULT_INFLATION, replications, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("band needs at least one bootstrap replication".into()));
        }
        if !(self.inflation > 0.0 && self.inflation.is_finite()) {
            return Err(Error::InvalidConfig(format!("band inflation must be positive, got {}", self.inflation)));
        }
        if let Some(h) = self.h_band {
            Bandwidth::new(h)?;
        }
        Ok(())
    }

    pub fn bandwidth_for(&self, sample: &Sample) -> Result<Bandwidth> {
        match self.h_band {
            Some(h) => Bandwidth::new(h),
            None => band_bandwidth(sample, self.inflation),
        }
    }
}

/// Rule-of-thumb scale of the x values times `inflation`:
/// `inflation * 0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
pub fn band_bandwidth(sample: &Sample, inflation: f64) -> Result<Bandwidth> {
    let xs = sample.xs();
    let n = xs.len();
    if n < 2 {
        return Err(Error::TooFewObservations { required: 2, actual: n });
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let iqr = quantile_sorted(xs, 0.75) - quantile_sorted(xs, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Bandwidth::new(inflation * 0.9 * spread * (n as f64).powf(-0.2))
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(xs: &[f64], p: f64) -> f64 {
    let pos = p * (xs.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < xs.len() {
        xs[i] + frac * (xs[i + 1] - xs[i])
    } else {
        xs[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivBand {
    pub grid: Grid,
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub h_band: Bandwidth,
    pub critical_value: f64,
}

impl DerivBand {
    pub fn sup_width(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).fold(0.0, f64::max)
    }

    pub fn contains(&self, truth: impl Fn(f64) -> f64) -> bool {
        self.grid
            .points()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&x, (&l, &u))| (l..=u).contains(&truth(x)))
    }
}

/// Simultaneous band for f' (regression) or the density derivative, at
/// coverage `level`.
pub fn simultaneous_band(sample: &Sample, grid: &Grid, level: f64, cfg: &BandConfig) -> Result<DerivBand> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("band level must be in (0, 1), got {level}")));
    }
    cfg.validate()?;
    let h = cfg.bandwidth_for(sample)?;
    let (estimate, se, deviations) = if sample.is_density() {
        density_deviations(sample, grid, h, cfg)?
    } else {
        regression_deviations(sample, grid, h, cfg)?
    };

    // Differences below this are rounding noise, not evidence of slope.
    let (lo, hi) = sample.min_max();
    let x_range = (hi - lo).max(f64::MIN_POSITIVE);
    let y_range = match sample.ys() {
        Some(ys) => ys.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - ys.iter().fold(f64::INFINITY, |a, &b| a.min(b)),
        None => 1.0 / x_range,
    };
    let resolution = 1e-6 * y_range.max(0.0) / x_range;

    let mut maxima: Vec<f64> = deviations
        .iter()
        .map(|dev| {
            dev.iter()
                .zip(&se)
                .map(|(d, s)| if *s > resolution { d.abs() / s } else { 0.0 })
                .fold(0.0, f64::max)
        })
        .collect();
    maxima.sort_by(f64::total_cmp);
    let idx = ((level * maxima.len() as f64).ceil() as usize).clamp(1, maxima.len()) - 1;
    let critical_value = maxima[idx];

    let half: Vec<f64> = se.iter().map(|s| (critical_value * s).max(resolution)).collect();
    Ok(DerivBand {
        grid: grid.clone(),
        lower: estimate.iter().zip(&half).map(|(e, w)| e - w).collect(),
        upper: estimate.iter().zip(&half).map(|(e, w)| e + w).collect(),
        estimate,
        level,
        h_band: h,
        critical_value,
    })
}

type Deviations = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

/// The derivative smoother is linear in y, so a residual-bootstrap deviation
/// is the smoother applied to the resampled residuals.
fn regression_deviations(sample: &Sample, grid: &Grid, h: Bandwidth, cfg: &BandConfig) -> Result<Deviations> {
    let smoother = DerivativeSmoother::new(sample, h, grid)?;
    let deviations = (0..cfg.replications)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.seed, DOMAIN_BAND, b as u64);
            let e = resample_residuals(&smoother.residuals, &mut rng);
            smoother.rows.iter().map(|row| row.apply(&e)).collect()
        })
        .collect();
    Ok((smoother.values, smoother.se, deviations))
}

fn density_deviations(sample: &Sample, grid: &Grid, h: Bandwidth, cfg: &BandConfig) -> Result<Deviations> {
    sample.require_density(2)?;
    let (estimate, se) = kde_derivative(sample.xs(), grid.points(), h.get());
    let deviations = (0..cfg.replications)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(cfg.seed, DOMAIN_BAND, b as u64);
            let mut star = smoothed_density_resample(sample.xs(), 0.0, &mut rng);
            star.sort_by(f64::total_cmp);
            let (values, _) = kde_derivative(&star, grid.points(), h.get());
            values.iter().zip(&estimate).map(|(v, e)| v - e).collect()
        })
        .collect();
    Ok((estimate, se, deviations))
}

/// Grid points where the band excludes zero, keeping their original indices.
pub fn filter_grid(band: &DerivBand, grid: &Grid) -> Result<Grid> {
    if band.grid.points() != grid.points() {
        return Err(Error::InvalidGrid("band was computed on a different grid".into()));
    }
    let keep: Vec<bool> = band.lower.iter().zip(&band.upper).map(|(&l, &u)| l > 0.0 || u < 0.0).collect();
    Ok(grid.retain(&keep))
}
