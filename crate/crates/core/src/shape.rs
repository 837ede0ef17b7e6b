//! Null shape classes checked on a (possibly filtered) grid.
//!
//! Constraints are pairs of indices into the unfiltered parent grid. Only
//! differences across constraint pairs are inspected; a filtered grid keeps
//! the pairs whose endpoints were adjacent in the parent and both survived.
//!
//! Mode counting works on the sequence of difference signs (ties inert) and
//! treats the domain ends as potential extrema: a sequence that starts
//! downward has a maximum at the left end, one that ends upward has a maximum
//! at the right end.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{FitCurve, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "k")]
pub enum ShapeKind {
    MonotoneIncreasing,
    MonotoneDecreasing,
    MonotoneEither,
    AtMostKModes(u32),
    QuasiConvex,
    QuasiConcave,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeHypothesis {
    pub kind: ShapeKind,
    /// Slack on each difference, in response units.
    pub tolerance: f64,
}

impl ShapeHypothesis {
    pub fn new(kind: ShapeKind) -> Self {
        Self { kind, tolerance: 0.0 }
    }

    pub fn with_tolerance(kind: ShapeKind, tolerance: f64) -> Result<Self> {
        let hyp = Self { kind, tolerance };
        hyp.validate()?;
        Ok(hyp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance >= 0.0) || !self.tolerance.is_finite() {
            return Err(Error::InvalidConfig(format!("shape tolerance {} must be >= 0", self.tolerance)));
        }
        if let ShapeKind::AtMostKModes(0) = self.kind {
            return Err(Error::InvalidConfig("mode count k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Direction in which a monotone hypothesis held.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
    /// Both directions hold (every difference within tolerance of zero).
    Flat,
}

/// Index pairs `(i, i + 1)` of a parent grid whose differences are checked.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ConstraintSet {
    pairs: Vec<(usize, usize)>,
}

impl ConstraintSet {
    pub fn new(mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| j != i + 1) {
            return Err(Error::InvalidConfig(format!("constraint ({i}, {j}) is not an adjacent pair")));
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Translates parent indices to positions within `grid`.
    pub fn resolve(&self, grid: &Grid) -> Result<ResolvedConstraints> {
        let origin = grid.origin_index();
        let locate = |o: usize| {
            origin
                .binary_search(&o)
                .map_err(|_| Error::InvalidConfig(format!("constraint index {o} is not on the grid")))
        };
        let pairs = self
            .pairs
            .iter()
            .map(|&(i, j)| Ok((locate(i)?, locate(j)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ResolvedConstraints { pairs })
    }
}

/// All pairs of grid points that are adjacent in the parent grid.
pub fn full_adjacency(grid: &Grid) -> ConstraintSet {
    let pairs = grid
        .origin_index()
        .windows(2)
        .filter(|w| w[1] == w[0] + 1)
        .map(|w| (w[0], w[1]))
        .collect();
    ConstraintSet { pairs }
}

/// Constraint pairs as positions into a specific curve's value vector.
#[derive(Debug, Clone)]
pub struct ResolvedConstraints {
    pairs: Vec<(usize, usize)>,
}

impl ResolvedConstraints {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `Some(direction)` when `values` lies in the null class. The direction
    /// is only informative for monotone kinds.
    pub fn check(&self, values: &[f64], hyp: &ShapeHypothesis) -> Option<Direction> {
        let tol = hyp.tolerance;
        let diffs = self.pairs.iter().map(|&(i, j)| values[j] - values[i]);
        match hyp.kind {
            ShapeKind::MonotoneIncreasing => diffs.clone().all(|d| d >= -tol).then_some(Direction::Increasing),
            ShapeKind::MonotoneDecreasing => diffs.clone().all(|d| d <= tol).then_some(Direction::Decreasing),
            ShapeKind::MonotoneEither => {
                let up = diffs.clone().all(|d| d >= -tol);
                let down = diffs.clone().all(|d| d <= tol);
                match (up, down) {
                    (true, true) => Some(Direction::Flat),
                    (true, false) => Some(Direction::Increasing),
                    (false, true) => Some(Direction::Decreasing),
                    (false, false) => None,
                }
            }
            ShapeKind::AtMostKModes(k) => (turns(diffs, tol, true) <= k as usize).then_some(Direction::Flat),
            ShapeKind::QuasiConcave => (turns(diffs, tol, true) <= 1).then_some(Direction::Flat),
            ShapeKind::QuasiConvex => (turns(diffs, tol, false) <= 1).then_some(Direction::Flat),
        }
    }
}

/// Number of local maxima (`peaks`) or minima of the sign sequence, with a
/// virtual rise before the first difference and fall after the last one
/// (reversed for minima).
fn turns(diffs: impl Iterator<Item = f64>, tol: f64, peaks: bool) -> usize {
    let flip = if peaks { 1.0 } else { -1.0 };
    let mut rising = true;
    let mut count = 0;
    for d in diffs {
        let d = d * flip;
        if d > tol {
            rising = true;
        } else if d < -tol {
            if rising {
                count += 1;
            }
            rising = false;
        }
    }
    if rising {
        count += 1;
    }
    count
}

/// Whether `curve` lies in the null class over `constraints`. An empty
/// constraint set is satisfied vacuously.
pub fn satisfies(curve: &FitCurve, hyp: &ShapeHypothesis, constraints: &ConstraintSet) -> Result<bool> {
    Ok(satisfied_direction(curve, hyp, constraints)?.is_some())
}

/// Like [`satisfies`], also reporting the direction a monotone null held in.
pub fn satisfied_direction(
    curve: &FitCurve,
    hyp: &ShapeHypothesis,
    constraints: &ConstraintSet,
) -> Result<Option<Direction>> {
    let resolved = constraints.resolve(&curve.grid)?;
    Ok(resolved.check(&curve.values, hyp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Bandwidth;
    use proptest::prelude::*;

    fn curve(values: Vec<f64>) -> FitCurve {
        let grid = Grid::linspace(0.0, 1.0, values.len()).unwrap();
        FitCurve { grid, values, h: Bandwidth::new(1.0).unwrap(), fitted_at_data: vec![] }
    }

    fn holds(values: &[f64], kind: ShapeKind) -> bool {
        let c = curve(values.to_vec());
        let cons = full_adjacency(&c.grid);
        satisfies(&c, &ShapeHypothesis::new(kind), &cons).unwrap()
    }

    /// Local maxima by brute force: runs of equal values count once, ends
    /// count when the neighbouring run is lower.
    fn brute_modes(values: &[f64]) -> usize {
        let mut runs: Vec<f64> = Vec::new();
        for &v in values {
            if runs.last() != Some(&v) {
                runs.push(v);
            }
        }
        if runs.len() <= 1 {
            return 1;
        }
        (0..runs.len())
            .filter(|&i| {
                let left = i == 0 || runs[i - 1] < runs[i];
                let right = i + 1 == runs.len() || runs[i + 1] < runs[i];
                left && right
            })
            .count()
    }

    #[test]
    fn increasing_values() {
        assert!(holds(&[1.0, 2.0, 3.0, 4.0], ShapeKind::MonotoneIncreasing));
        assert!(!holds(&[1.0, 2.0, 3.0, 4.0], ShapeKind::MonotoneDecreasing));
        assert!(holds(&[1.0, 2.0, 3.0, 4.0], ShapeKind::MonotoneEither));
    }

    #[test]
    fn two_modes_reject_unimodality() {
        assert!(!holds(&[0.0, 1.0, 0.5, 2.0], ShapeKind::AtMostKModes(1)));
        assert!(holds(&[0.0, 1.0, 0.5, 2.0], ShapeKind::AtMostKModes(2)));
        assert_eq!(brute_modes(&[0.0, 1.0, 0.5, 2.0]), 2);
    }

    #[test]
    fn subset_constraints_ignore_excluded_dip() {
        let c = curve(vec![1.0, 2.0, 1.5]);
        let hyp = ShapeHypothesis::new(ShapeKind::MonotoneIncreasing);
        assert!(!satisfies(&c, &hyp, &full_adjacency(&c.grid)).unwrap());
        let only_first = ConstraintSet::new(vec![(0, 1)]).unwrap();
        assert!(satisfies(&c, &hyp, &only_first).unwrap());
    }

    #[test]
    fn empty_constraints_are_vacuous() {
        let c = curve(vec![3.0, 1.0, 2.0, 0.0]);
        for kind in [ShapeKind::MonotoneIncreasing, ShapeKind::AtMostKModes(1), ShapeKind::QuasiConvex] {
            assert!(satisfies(&c, &ShapeHypothesis::new(kind), &ConstraintSet::default()).unwrap());
        }
    }

    #[test]
    fn adjacency_of_full_and_filtered_grids() {
        let g = Grid::linspace(0.0, 1.0, 4).unwrap();
        assert_eq!(full_adjacency(&g).pairs(), &[(0, 1), (1, 2), (2, 3)]);
        assert!(full_adjacency(&Grid::new(vec![0.5]).unwrap()).is_empty());
        let parent = Grid::linspace(0.0, 1.0, 8).unwrap();
        let keep = [true, true, false, false, false, true, true, false];
        let filtered = parent.retain(&keep);
        assert_eq!(full_adjacency(&filtered).pairs(), &[(0, 1), (5, 6)]);
    }

    #[test]
    fn quasi_shapes() {
        assert!(holds(&[3.0, 1.0, 2.0], ShapeKind::QuasiConvex));
        assert!(!holds(&[3.0, 1.0, 2.0], ShapeKind::QuasiConcave));
        assert!(holds(&[1.0, 3.0, 2.0], ShapeKind::QuasiConcave));
        assert!(!holds(&[1.0, 3.0, 2.0], ShapeKind::QuasiConvex));
        assert!(holds(&[1.0, 2.0, 3.0], ShapeKind::QuasiConvex));
        assert!(holds(&[1.0, 2.0, 3.0], ShapeKind::QuasiConcave));
    }

    #[test]
    fn tolerance_absorbs_tiny_wiggles() {
        let c = curve(vec![0.0, 1.0, 1.0 - 1e-14, 2.0]);
        let cons = full_adjacency(&c.grid);
        assert!(!satisfies(&c, &ShapeHypothesis::new(ShapeKind::MonotoneIncreasing), &cons).unwrap());
        let slack = ShapeHypothesis::with_tolerance(ShapeKind::MonotoneIncreasing, 1e-12).unwrap();
        assert!(satisfies(&c, &slack, &cons).unwrap());
        assert!(ShapeHypothesis::with_tolerance(ShapeKind::MonotoneIncreasing, -1.0).is_err());
        assert!(ShapeHypothesis::with_tolerance(ShapeKind::AtMostKModes(0), 0.0).is_err());
    }

    #[test]
    fn either_reports_direction() {
        let c = curve(vec![3.0, 2.0, 1.0]);
        let hyp = ShapeHypothesis::new(ShapeKind::MonotoneEither);
        let dir = satisfied_direction(&c, &hyp, &full_adjacency(&c.grid)).unwrap();
        assert_eq!(dir, Some(Direction::Decreasing));
    }

    fn small_values() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((-3i32..=3).prop_map(f64::from), 2..12)
    }

    fn kinds() -> impl Strategy<Value = ShapeKind> {
        prop_oneof![
            Just(ShapeKind::MonotoneIncreasing),
            Just(ShapeKind::MonotoneDecreasing),
            Just(ShapeKind::MonotoneEither),
            (1u32..4).prop_map(ShapeKind::AtMostKModes),
            Just(ShapeKind::QuasiConvex),
            Just(ShapeKind::QuasiConcave),
        ]
    }

    proptest! {
        #[test]
        fn mode_count_matches_brute_force(values in small_values(), k in 1u32..4) {
            prop_assert_eq!(holds(&values, ShapeKind::AtMostKModes(k)), brute_modes(&values) <= k as usize);
        }

        #[test]
        fn dropping_constraints_never_breaks_satisfaction(
            values in small_values(),
            kind in kinds(),
            mask in prop::collection::vec(any::<bool>(), 12),
        ) {
            let c = curve(values);
            let hyp = ShapeHypothesis::new(kind);
            let full = full_adjacency(&c.grid);
            let subset = ConstraintSet::new(
                full.pairs().iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect(),
            ).unwrap();
            if satisfies(&c, &hyp, &full).unwrap() {
                prop_assert!(satisfies(&c, &hyp, &subset).unwrap());
            }
        }

        #[test]
        fn increasing_implies_k_modes(values in small_values(), k in 1u32..4) {
            if holds(&values, ShapeKind::MonotoneIncreasing) {
                prop_assert!(holds(&values, ShapeKind::AtMostKModes(k)));
            }
        }

        #[test]
        fn reversal_swaps_direction(values in small_values()) {
            let mut reversed = values.clone();
            reversed.reverse();
            prop_assert_eq!(
                holds(&values, ShapeKind::MonotoneIncreasing),
                holds(&reversed, ShapeKind::MonotoneDecreasing)
            );
        }
    }
}
