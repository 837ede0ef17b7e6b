//! Gaussian-kernel point estimators evaluated on a grid: local polynomial
//! regression (levels and first derivative) and kernel density estimation.
//!
//! Local fits are solved in the standardized coordinate `u = (x - at) / s`
//! with `s = min(h, range of x)`, so every normal-equation system has entries
//! of comparable size and the ridge floor means the same thing at every
//! bandwidth.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

/// Gaussian weights beyond this many bandwidths are dropped (`exp(-50)`).
pub const KERNEL_CUTOFF: f64 = 10.0;
/// Minimum total kernel weight at an evaluation point.
pub const MIN_WEIGHT_MASS: f64 = 1e-12;
/// Ridge added to each local system, relative to its mean diagonal.
pub const RIDGE_SCALE: f64 = 1e-10;
/// Default number of grid points.
pub const DEFAULT_GRID_SIZE: usize = 100;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Observed data: regressor values with optional responses, sorted by x.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    xs: Vec<f64>,
    ys: Option<Vec<f64>>,
}

impl Sample {
    /// Paired `(x, y)` observations. Pairs are re-ordered by increasing x.
    pub fn regression(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch { xs: xs.len(), ys: ys.len() });
        }
        check_values(&xs)?;
        check_values(&ys)?;
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let sorted_x = order.iter().map(|&i| xs[i]).collect();
        let sorted_y = order.iter().map(|&i| ys[i]).collect();
        Ok(Self { xs: sorted_x, ys: Some(sorted_y) })
    }

    /// Univariate observations for density estimation.
    pub fn density(mut xs: Vec<f64>) -> Result<Self> {
        check_values(&xs)?;
        xs.sort_by(f64::total_cmp);
        Ok(Self { xs, ys: None })
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> Option<&[f64]> {
        self.ys.as_deref()
    }

    pub fn is_density(&self) -> bool {
        self.ys.is_none()
    }

    /// Responses of a regression sample with at least `min_n` observations.
    pub fn responses(&self, min_n: usize) -> Result<&[f64]> {
        let ys = self.ys.as_deref().ok_or(Error::MissingResponse)?;
        self.require_len(min_n)?;
        Ok(ys)
    }

    pub(crate) fn require_density(&self, min_n: usize) -> Result<()> {
        if self.ys.is_some() {
            return Err(Error::UnexpectedResponse);
        }
        self.require_len(min_n)
    }

    fn require_len(&self, min_n: usize) -> Result<()> {
        if self.n() < min_n {
            return Err(Error::TooFewObservations { required: min_n, actual: self.n() });
        }
        Ok(())
    }

    /// Same regressors with new responses (already in sorted-x order).
    pub(crate) fn with_responses(&self, ys: Vec<f64>) -> Self {
        debug_assert_eq!(ys.len(), self.xs.len());
        Self { xs: self.xs.clone(), ys: Some(ys) }
    }

    pub(crate) fn min_max(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteValue { index }),
        None => Ok(()),
    }
}

/// Strictly increasing evaluation points.
///
/// `origin_index` maps every point to its position in the grid it was
/// filtered from (the identity for an unfiltered grid), which is what shape
/// constraints refer to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    points: Vec<f64>,
    origin_index: Vec<usize>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("grid has no points".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidGrid("grid points must be finite".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("grid points must be strictly increasing".into()));
        }
        let origin_index = (0..points.len()).collect();
        Ok(Self { points, origin_index })
    }

    /// `count` equally spaced points from `lo` to `hi` inclusive.
    pub fn linspace(lo: f64, hi: f64, count: usize) -> Result<Self> {
        match count {
            0 => Err(Error::InvalidGrid("grid size must be positive".into())),
            1 => Self::new(vec![lo]),
            _ => {
                if !(lo < hi) {
                    return Err(Error::InvalidGrid(format!("empty interval [{lo}, {hi}]")));
                }
                let step = (hi - lo) / (count - 1) as f64;
                let mut points: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
                points[count - 1] = hi;
                Self::new(points)
            }
        }
    }

    /// `count` equally spaced points spanning the range of the sample.
    pub fn spanning(sample: &Sample, count: usize) -> Result<Self> {
        let (lo, hi) = sample.min_max();
        Self::linspace(lo, hi, count)
    }

    /// An empty grid, the legal result of filtering every point away.
    pub fn empty() -> Self {
        Self { points: Vec::new(), origin_index: Vec::new() }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn origin_index(&self) -> &[usize] {
        &self.origin_index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sub-grid of the points with `keep[j]`; origin indices are preserved.
    pub fn retain(&self, keep: &[bool]) -> Self {
        assert_eq!(keep.len(), self.len(), "mask length must match grid length");
        let mut points = Vec::new();
        let mut origin_index = Vec::new();
        for ((&p, &o), &k) in self.points.iter().zip(&self.origin_index).zip(keep) {
            if k {
                points.push(p);
                origin_index.push(o);
            }
        }
        Self { points, origin_index }
    }

    /// Maximal runs of consecutive origin indices, as inclusive `(first, last)`.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &o in &self.origin_index {
            match out.last_mut() {
                Some(last) if last.1 + 1 == o => last.1 = o,
                _ => out.push((o, o)),
            }
        }
        out
    }
}

/// A smoothing parameter in regressor units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 {
            Ok(Self(h))
        } else {
            Err(Error::InvalidBandwidth(h))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Estimated curve on a grid at one bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitCurve {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub h: Bandwidth,
    /// The estimate at each observation, in sorted-x order.
    pub fitted_at_data: Vec<f64>,
}

/// First-derivative estimate with pointwise standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeFit {
    pub values: Vec<f64>,
    pub se: Vec<f64>,
}

/// Local polynomial regression with Gaussian weights; the value at each grid
/// point is the intercept of the local weighted least-squares fit.
pub fn fit_local_poly(sample: &Sample, h: Bandwidth, grid: &Grid, degree: usize) -> Result<FitCurve> {
    let ys = sample.responses(3)?;
    check_degree(degree)?;
    let fit = LocalPoly::new(sample.xs(), ys, degree);
    let mut values = vec![0.0; grid.len()];
    fit.values(grid.points(), h.get(), &mut values)?;
    let mut fitted_at_data = vec![0.0; sample.n()];
    fit.values(sample.xs(), h.get(), &mut fitted_at_data)?;
    Ok(FitCurve { grid: grid.clone(), values, h, fitted_at_data })
}

/// Local quadratic estimate of f' with sandwich standard errors.
pub fn fit_derivative(sample: &Sample, h: Bandwidth, grid: &Grid) -> Result<DerivativeFit> {
    let smoother = DerivativeSmoother::new(sample, h, grid)?;
    Ok(DerivativeFit { values: smoother.values, se: smoother.se })
}

/// Gaussian kernel density estimate.
pub fn fit_kde(sample: &Sample, h: Bandwidth, grid: &Grid) -> Result<FitCurve> {
    sample.require_density(1)?;
    let mut values = vec![0.0; grid.len()];
    kde_values(sample.xs(), grid.points(), h.get(), &mut values);
    let mut fitted_at_data = vec![0.0; sample.n()];
    kde_values(sample.xs(), sample.xs(), h.get(), &mut fitted_at_data);
    Ok(FitCurve { grid: grid.clone(), values, h, fitted_at_data })
}

/// Derivative of the Gaussian KDE with the standard error of a sample mean
/// of kernel-derivative terms.
pub fn fit_kde_derivative(sample: &Sample, h: Bandwidth, grid: &Grid) -> Result<DerivativeFit> {
    sample.require_density(2)?;
    let (values, se) = kde_derivative(sample.xs(), grid.points(), h.get());
    Ok(DerivativeFit { values, se })
}

fn check_degree(degree: usize) -> Result<()> {
    if degree > 2 {
        Err(Error::InvalidDegree(degree))
    } else {
        Ok(())
    }
}

/// Index range of sorted `xs` within the kernel window around `at`.
#[inline]
fn window(xs: &[f64], at: f64, h: f64) -> (usize, usize) {
    let reach = KERNEL_CUTOFF * h;
    let lo = xs.partition_point(|&x| x < at - reach);
    let hi = lo + xs[lo..].partition_point(|&x| x <= at + reach);
    (lo, hi)
}

#[inline]
fn gauss(u: f64) -> f64 {
    (-0.5 * u * u).exp()
}

/// Weighted moments `s[k] = sum w u^k` and `t[k] = sum w u^k y` of one local fit.
#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    s: [f64; 5],
    t: [f64; 3],
}

/// Local polynomial smoother over fixed data. Responses are centered on the
/// first observation so constant data is reproduced exactly.
#[derive(Debug, Clone)]
pub(crate) struct LocalPoly<'a> {
    xs: &'a [f64],
    centered: Vec<f64>,
    offset: f64,
    degree: usize,
    range: f64,
}

impl<'a> LocalPoly<'a> {
    pub(crate) fn new(xs: &'a [f64], ys: &[f64], degree: usize) -> Self {
        let offset = ys[0];
        let centered = ys.iter().map(|y| y - offset).collect();
        let range = xs[xs.len() - 1] - xs[0];
        Self { xs, centered, offset, degree, range }
    }

    /// Length unit of the local design at bandwidth `h`.
    #[inline]
    fn design_scale(&self, h: f64) -> f64 {
        if self.range > 0.0 {
            h.min(self.range)
        } else {
            h
        }
    }

    fn moments(&self, at: f64, h: f64) -> Moments {
        let (lo, hi) = window(self.xs, at, h);
        let inv_h = 1.0 / h;
        let inv_s = 1.0 / self.design_scale(h);
        let xs = &self.xs[lo..hi];
        let ys = &self.centered[lo..hi];
        let mut m = Moments::default();
        match self.degree {
            0 => {
                for (&x, &y) in xs.iter().zip(ys) {
                    let w = gauss((x - at) * inv_h);
                    m.s[0] += w;
                    m.t[0] += w * y;
                }
            }
            1 => {
                for (&x, &y) in xs.iter().zip(ys) {
                    let d = x - at;
                    let w = gauss(d * inv_h);
                    let u = d * inv_s;
                    let wu = w * u;
                    m.s[0] += w;
                    m.s[1] += wu;
                    m.s[2] += wu * u;
                    m.t[0] += w * y;
                    m.t[1] += wu * y;
                }
            }
            _ => {
                for (&x, &y) in xs.iter().zip(ys) {
                    let d = x - at;
                    let w = gauss(d * inv_h);
                    let u = d * inv_s;
                    let wu = w * u;
                    let wu2 = wu * u;
                    m.s[0] += w;
                    m.s[1] += wu;
                    m.s[2] += wu2;
                    m.s[3] += wu2 * u;
                    m.s[4] += wu2 * u * u;
                    m.t[0] += w * y;
                    m.t[1] += wu * y;
                    m.t[2] += wu2 * y;
                }
            }
        }
        m
    }

    /// Level estimates at `points` (need not be a grid, but must be sorted
    /// for cache-friendly windows).
    pub(crate) fn values(&self, points: &[f64], h: f64, out: &mut [f64]) -> Result<()> {
        for (o, &at) in out.iter_mut().zip(points) {
            *o = self.value_at(at, h)?;
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn value_at(&self, at: f64, h: f64) -> Result<f64> {
        let m = self.moments(at, h);
        let system = LocalSystem::from_moments(&m, self.degree, at, h)?;
        let coef = system.solve(m.t);
        Ok(self.offset + coef[0])
    }
}

/// Cholesky-factored local normal equations with the ridge floor applied.
struct LocalSystem {
    l: [[f64; 3]; 3],
    dim: usize,
}

impl LocalSystem {
    fn from_moments(m: &Moments, degree: usize, at: f64, h: f64) -> Result<Self> {
        if !(m.s[0] >= MIN_WEIGHT_MASS) {
            return Err(Error::DegenerateFit { at, h, mass: m.s[0] });
        }
        let dim = degree + 1;
        let trace: f64 = (0..dim).map(|k| m.s[2 * k]).sum();
        let ridge = RIDGE_SCALE * trace / dim as f64;
        let mut l = [[0.0; 3]; 3];
        for i in 0..dim {
            for j in 0..=i {
                let mut v = m.s[i + j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if i == j {
                    v += ridge;
                    if !(v > 0.0) {
                        return Err(Error::DegenerateFit { at, h, mass: m.s[0] });
                    }
                    l[i][i] = v.sqrt();
                } else {
                    l[i][j] = v / l[j][j];
                }
            }
        }
        Ok(Self { l, dim })
    }

    fn solve(&self, rhs: [f64; 3]) -> [f64; 3] {
        let n = self.dim;
        let mut z = [0.0; 3];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.l[i][k] * z[k]).sum();
            z[i] = (rhs[i] - s) / self.l[i][i];
        }
        let mut x = [0.0; 3];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.l[k][i] * x[k]).sum();
            x[i] = (z[i] - s) / self.l[i][i];
        }
        x
    }
}

/// Row of a linear smoother: weights for observations `start..start + weights.len()`.
#[derive(Debug, Clone)]
pub(crate) struct SmootherRow {
    pub start: usize,
    pub weights: Vec<f64>,
}

impl SmootherRow {
    #[inline]
    pub(crate) fn apply(&self, v: &[f64]) -> f64 {
        self.weights.iter().zip(&v[self.start..]).map(|(w, x)| w * x).sum()
    }
}

/// Explicit local quadratic derivative smoother on a grid, with the point
/// estimate and sandwich standard errors built from it.
#[derive(Debug, Clone)]
pub(crate) struct DerivativeSmoother {
    pub rows: Vec<SmootherRow>,
    pub values: Vec<f64>,
    pub se: Vec<f64>,
    /// Centered residuals of the local quadratic pilot fit at the data.
    pub residuals: Vec<f64>,
}

impl DerivativeSmoother {
    pub(crate) fn new(sample: &Sample, h: Bandwidth, grid: &Grid) -> Result<Self> {
        let ys = sample.responses(3)?;
        let h = h.get();
        let xs = sample.xs();
        let pilot = LocalPoly::new(xs, ys, 2);
        let mut fitted = vec![0.0; xs.len()];
        pilot.values(xs, h, &mut fitted)?;
        let raw: Vec<f64> = ys.iter().zip(&fitted).map(|(y, f)| y - f).collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;

        let mut rows = Vec::with_capacity(grid.len());
        let mut values = Vec::with_capacity(grid.len());
        let mut se = Vec::with_capacity(grid.len());
        let inv_h = 1.0 / h;
        let inv_s = 1.0 / pilot.design_scale(h);
        for &at in grid.points() {
            let m = pilot.moments(at, h);
            let system = LocalSystem::from_moments(&m, 2, at, h)?;
            values.push(system.solve(m.t)[1] * inv_s);
            let dual = system.solve([0.0, 1.0, 0.0]);
            let (lo, hi) = window(xs, at, h);
            let mut weights = Vec::with_capacity(hi - lo);
            let (mut mass, mut rss, mut sum_sq) = (0.0, 0.0, 0.0);
            for i in lo..hi {
                let d = xs[i] - at;
                let w = gauss(d * inv_h);
                let u = d * inv_s;
                let l = w * (dual[0] + u * (dual[1] + u * dual[2])) * inv_s;
                mass += w;
                rss += w * raw[i] * raw[i];
                sum_sq += l * l;
                weights.push(l);
            }
            se.push((rss / mass * sum_sq).sqrt());
            rows.push(SmootherRow { start: lo, weights });
        }
        let residuals = raw.iter().map(|r| r - mean).collect();
        Ok(Self { rows, values, se, residuals })
    }
}

pub(crate) fn kde_values(xs: &[f64], points: &[f64], h: f64, out: &mut [f64]) {
    let inv_h = 1.0 / h;
    let scale = INV_SQRT_2PI * inv_h / xs.len() as f64;
    for (o, &at) in out.iter_mut().zip(points) {
        let (lo, hi) = window(xs, at, h);
        let sum: f64 = xs[lo..hi].iter().map(|&x| gauss((x - at) * inv_h)).sum();
        *o = sum * scale;
    }
}

pub(crate) fn kde_derivative(xs: &[f64], points: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len() as f64;
    let inv_h = 1.0 / h;
    let c = INV_SQRT_2PI * inv_h * inv_h;
    let mut values = Vec::with_capacity(points.len());
    let mut se = Vec::with_capacity(points.len());
    for &at in points {
        let (lo, hi) = window(xs, at, h);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for &x in &xs[lo..hi] {
            let u = (at - x) * inv_h;
            let term = -c * u * gauss(u);
            sum += term;
            sum_sq += term * term;
        }
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
        values.push(mean);
        se.push((var / n).sqrt());
    }
    (values, se)
}

/// Density of the standard normal, exported for tests and oracles.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}
