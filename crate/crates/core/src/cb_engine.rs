//! Critical bandwidth search: the smallest bandwidth whose estimate lies in
//! the null class, found by bisection on `log h`.
//!
//! Bisection relies on nesting (once the null holds it keeps holding as `h`
//! grows). The search double-checks the point just below its answer; if that
//! point also satisfies the null, nesting has failed and a coarse downward
//! scan picks the lowest satisfying bandwidth instead.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{kde_values, Bandwidth, FitCurve, Grid, LocalPoly, Sample};
use crate::shape::{ConstraintSet, Direction, ResolvedConstraints, ShapeHypothesis};

/// Spacing of the upward bracketing scan, in units of ln h.
const SCAN_STEP: f64 = 0.1;

/// Points in the fallback scan used after a nesting failure.
const FALLBACK_SCAN_POINTS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CbConfig {
    pub h_min: f64,
    pub h_max: f64,
    /// Relative bisection tolerance.
    pub bisect_tol: f64,
    /// How many times `h_max` may be doubled before giving up.
    pub max_expand: u32,
}

impl CbConfig {
    pub const DEFAULT_BISECT_TOL: f64 = 1e-3;
    pub const DEFAULT_MAX_EXPAND: u32 = 6;

    /// Defaults: half the median spacing of the sorted x values up to twice
    /// their range.
    pub fn for_sample(sample: &Sample) -> Result<Self> {
        let xs = sample.xs();
        let mut gaps: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
        if gaps.is_empty() {
            return Err(Error::InvalidConfig("all x values are identical".into()));
        }
        gaps.sort_by(f64::total_cmp);
        let m = gaps.len();
        let median = if m % 2 == 1 { gaps[m / 2] } else { 0.5 * (gaps[m / 2 - 1] + gaps[m / 2]) };
        let range = xs[xs.len() - 1] - xs[0];
        let cfg = Self {
            h_min: 0.5 * median,
            h_max: 2.0 * range,
            bisect_tol: Self::DEFAULT_BISECT_TOL,
            max_expand: Self::DEFAULT_MAX_EXPAND,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.h_min > 0.0
            && self.h_min < self.h_max
            && self.h_max.is_finite()
            && self.bisect_tol > 0.0
            && self.bisect_tol < 0.1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "need 0 < h_min < h_max and bisect_tol in (0, 0.1), got {self:?}"
            )))
        }
    }

    /// Largest bandwidth the search may reach.
    pub fn h_max_expanded(&self) -> f64 {
        self.h_max * 2f64.powi(self.max_expand as i32)
    }
}

/// Which smoother produces the curve being tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    LocalPoly { degree: usize },
    Kde,
}

impl Estimator {
    /// Local linear regression, the default regression smoother.
    pub const LOCAL_LINEAR: Estimator = Estimator::LocalPoly { degree: 1 };

    pub fn fit(&self, sample: &Sample, h: Bandwidth, grid: &Grid) -> Result<FitCurve> {
        match *self {
            Estimator::LocalPoly { degree } => crate::estimators::fit_local_poly(sample, h, grid, degree),
            Estimator::Kde => crate::estimators::fit_kde(sample, h, grid),
        }
    }
}

/// Outcome of a critical bandwidth search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CbSearch {
    pub bandwidth: Bandwidth,
    /// Direction the null held in at `bandwidth` (monotone kinds).
    pub direction: Option<Direction>,
    pub evaluations: usize,
    pub nesting_anomaly: bool,
}

/// Evaluates "estimate at `h` lies in the null class" for one dataset.
pub(crate) struct NullCheck<'a> {
    smoother: Smoother<'a>,
    points: &'a [f64],
    constraints: ResolvedConstraints,
    hyp: ShapeHypothesis,
    buf: Vec<f64>,
    pub evaluations: usize,
}

enum Smoother<'a> {
    Poly(LocalPoly<'a>),
    Kde(&'a [f64]),
}

impl<'a> NullCheck<'a> {
    pub(crate) fn new(
        sample: &'a Sample,
        grid: &'a Grid,
        hyp: &ShapeHypothesis,
        constraints: &ConstraintSet,
        estimator: Estimator,
    ) -> Result<Self> {
        hyp.validate()?;
        let smoother = match estimator {
            Estimator::LocalPoly { degree } => {
                if degree > 2 {
                    return Err(Error::InvalidDegree(degree));
                }
                Smoother::Poly(LocalPoly::new(sample.xs(), sample.responses(3)?, degree))
            }
            Estimator::Kde => {
                sample.require_density(1)?;
                Smoother::Kde(sample.xs())
            }
        };
        Ok(Self {
            smoother,
            points: grid.points(),
            constraints: constraints.resolve(grid)?,
            hyp: *hyp,
            buf: vec![0.0; grid.len()],
            evaluations: 0,
        })
    }

    /// `None` when the null fails at `h`, including when the fit is
    /// degenerate there (no estimate means no evidence for the null).
    pub(crate) fn at(&mut self, h: f64) -> Option<Direction> {
        if self.constraints.is_empty() {
            return Some(Direction::Flat);
        }
        self.evaluations += 1;
        match &self.smoother {
            Smoother::Poly(p) => p.values(self.points, h, &mut self.buf).ok()?,
            Smoother::Kde(xs) => kde_values(xs, self.points, h, &mut self.buf),
        }
        self.constraints.check(&self.buf, &self.hyp)
    }

    pub(crate) fn is_vacuous(&self) -> bool {
        self.constraints.is_empty()
    }
}

/// Smallest bandwidth in `[cfg.h_min, cfg.h_max_expanded()]` at which the
/// estimate satisfies the hypothesis over `constraints`.
pub fn critical_bandwidth(
    sample: &Sample,
    grid: &Grid,
    hyp: &ShapeHypothesis,
    constraints: &ConstraintSet,
    cfg: &CbConfig,
    estimator: Estimator,
) -> Result<CbSearch> {
    cfg.validate()?;
    let mut check = NullCheck::new(sample, grid, hyp, constraints, estimator)?;
    search(&mut check, cfg).map_err(|h_max| Error::NoSatisfyingBandwidth {
        h_max,
        curve: Bandwidth::new(h_max)
            .and_then(|h| estimator.fit(sample, h, grid))
            .ok()
            .map(Box::new),
    })
}

/// Core search; `Err(h)` carries the largest bandwidth tried on failure.
///
/// An upward log-spaced scan finds the first satisfying bandwidth, so a gap
/// in the satisfying set wider than one scan step cannot hide the minimum.
/// Bisection then refines inside that bracket.
pub(crate) fn search(check: &mut NullCheck<'_>, cfg: &CbConfig) -> std::result::Result<CbSearch, f64> {
    let done = |h: f64, direction, check: &NullCheck<'_>, nesting_anomaly| CbSearch {
        bandwidth: Bandwidth::new(h).expect("search bandwidths are positive"),
        direction,
        evaluations: check.evaluations,
        nesting_anomaly,
    };
    if let Some(dir) = check.at(cfg.h_min) {
        return Ok(done(cfg.h_min, Some(dir), check, false));
    }
    let mut lo = cfg.h_min;
    let mut top = cfg.h_max;
    let mut expansions = 0;
    let (mut hi, mut hi_dir) = 'scan: loop {
        let count = ((top / lo).ln() / SCAN_STEP).ceil().max(1.0) as usize + 1;
        for &h in &log_ladder(lo, top, count)[1..] {
            if let Some(dir) = check.at(h) {
                break 'scan (h, dir);
            }
            lo = h;
        }
        if expansions == cfg.max_expand {
            return Err(top);
        }
        top *= 2.0;
        expansions += 1;
    };
    let bracket_lo = lo;
    bisect(check, &mut lo, &mut hi, &mut hi_dir, cfg.bisect_tol);

    let probe = hi * (1.0 - cfg.bisect_tol);
    if probe <= bracket_lo || check.at(probe).is_none() {
        return Ok(done(hi, Some(hi_dir), check, false));
    }

    // Nesting failed inside the bracket: take the lowest satisfying point of
    // a finer scan and refine just beneath it.
    let ladder = log_ladder(bracket_lo, hi, FALLBACK_SCAN_POINTS);
    let mut lowest = ladder.len() - 1;
    let mut lowest_dir = hi_dir;
    for (idx, &h) in ladder.iter().enumerate().rev().skip(1) {
        if let Some(dir) = check.at(h) {
            lowest = idx;
            lowest_dir = dir;
        }
    }
    let (mut lo, mut hi) = (ladder[lowest.saturating_sub(1)], ladder[lowest]);
    if lowest > 0 {
        bisect(check, &mut lo, &mut hi, &mut lowest_dir, cfg.bisect_tol);
    }
    Ok(done(hi, Some(lowest_dir), check, true))
}

fn bisect(check: &mut NullCheck<'_>, lo: &mut f64, hi: &mut f64, hi_dir: &mut Direction, tol: f64) {
    while *lo < *hi * (1.0 - tol) {
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        match check.at(mid) {
            Some(dir) => {
                *hi = mid;
                *hi_dir = dir;
            }
            None => *lo = mid,
        }
    }
}

/// `count` log-spaced bandwidths from `lo` to `hi` inclusive.
pub fn log_ladder(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let step = (b - a) / (count - 1) as f64;
            let mut out: Vec<f64> = (0..count).map(|i| (a + step * i as f64).exp()).collect();
            out[0] = lo;
            out[count - 1] = hi;
            out
        }
    }
}

/// Number of ladder steps where the null holds at `h_ladder[i]` but fails at
/// `h_ladder[i + 1]`.
pub fn check_nesting(
    sample: &Sample,
    grid: &Grid,
    hyp: &ShapeHypothesis,
    constraints: &ConstraintSet,
    h_ladder: &[f64],
    estimator: Estimator,
) -> Result<usize> {
    if h_ladder.len() < 2 || h_ladder.windows(2).any(|w| w[1] <= w[0]) || h_ladder[0] <= 0.0 {
        return Err(Error::InvalidConfig("bandwidth ladder must be increasing with at least 2 entries".into()));
    }
    let mut check = NullCheck::new(sample, grid, hyp, constraints, estimator)?;
    if check.is_vacuous() {
        return Ok(0);
    }
    let held: Vec<bool> = h_ladder.iter().map(|&h| check.at(h).is_some()).collect();
    Ok(held.windows(2).filter(|w| w[0] && !w[1]).count())
}
