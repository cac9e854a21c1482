//! Shape-feature discovery and basis initialization.
//!
//! A device's *span* is the set of run lengths it produces. Every window of
//! nonzero consumption whose length is in the span is mapped to its
//! first-order relation (an up/down bit pattern); the distinct patterns are
//! the device's shape features. Separately, the normalized windows
//! themselves are kept as *smoothed* bases after pruning every candidate
//! that another candidate covers.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::data::ConsumptionMatrix;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_SPAN: usize = 4;
pub const DEFAULT_COVER_TOL: f64 = 1e-6;
pub const DEFAULT_COMBINATION_BUDGET: usize = 200_000;

/// Set of observed operating durations, in intervals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span(BTreeSet<usize>);

impl Span {
    pub fn new(durations: impl IntoIterator<Item = usize>) -> Result<Self> {
        let set: BTreeSet<usize> = durations.into_iter().collect();
        if set.is_empty() || set.contains(&0) {
            return Err(Error::param(
                "span",
                "must be a non-empty set of positive durations",
            ));
        }
        Ok(Span(set))
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, r: usize) -> bool {
        self.0.contains(&r)
    }

    pub fn max(&self) -> usize {
        *self.0.iter().next_back().expect("span is non-empty")
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.0.iter().copied().collect()
    }
}

/// Binary first-order relation pattern.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ShapePattern(pub Vec<u8>);

impl ShapePattern {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits_string(&self) -> alloc::string::String {
        self.0
            .iter()
            .map(|b| if *b == 1 { '1' } else { '0' })
            .collect()
    }
}

/// A length-`N` basis with its nonzero support.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisVector {
    pub values: Vec<f64>,
    pub support: Vec<usize>,
}

impl BasisVector {
    /// Unit-norm basis with `values` placed at `positions`. `None` if all zero.
    pub fn normalized(n: usize, positions: &[usize], values: &[f64]) -> Option<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let mut full = vec![0.0; n];
        let mut support = Vec::with_capacity(positions.len());
        for (&p, &v) in positions.iter().zip(values) {
            if v != 0.0 {
                full[p] = v / norm;
                support.push(p);
            }
        }
        Some(BasisVector {
            values: full,
            support,
        })
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        BasisVector { values, support }
    }

    pub fn norm(&self) -> f64 {
        self.support
            .iter()
            .map(|&i| self.values[i] * self.values[i])
            .sum::<f64>()
            .sqrt()
    }
}

/// How windows of consumption are enumerated inside a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CombinationPolicy {
    /// Contiguous windows inside maximal nonzero runs.
    #[default]
    Contiguous,
    /// Every order-preserving subsequence of the day's nonzero values.
    /// Exponential; meant for small inputs.
    AllSubsequences,
}

/// Where shape patterns are placed when extended to a full day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    /// At each of these start intervals.
    Starts(Vec<usize>),
    /// At every start interval that fits.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlacementMode {
    #[default]
    Observed,
    All,
}

/// One enumerated combination of nonzero values.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub day: usize,
    pub positions: Vec<usize>,
    pub values: Vec<f64>,
}

/// Maximal runs of nonzero entries as `(start, len)`.
fn runs(column: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < column.len() {
        if column[i] != 0.0 {
            let start = i;
            while i < column.len() && column[i] != 0.0 {
                i += 1;
            }
            out.push((start, i - start));
        } else {
            i += 1;
        }
    }
    out
}

/// Lengths of maximal nonzero runs, capped at `max_span`.
pub fn infer_span(y: &ConsumptionMatrix, max_span: usize) -> Result<Span> {
    let mut lengths = BTreeSet::new();
    let mut any = false;
    for col in y.values.columns() {
        for (_, len) in runs(col) {
            any = true;
            if len <= max_span {
                lengths.insert(len);
            }
        }
    }
    if !any {
        return Err(Error::EmptyInput("consumption matrix is all zero"));
    }
    if lengths.is_empty() {
        return Err(Error::param(
            "max_span",
            alloc::format!("every observed run is longer than {max_span} intervals"),
        ));
    }
    Span::new(lengths)
}

/// Start intervals of maximal nonzero runs across all days, ascending.
pub fn observed_starts(y: &ConsumptionMatrix) -> Vec<usize> {
    let mut starts = BTreeSet::new();
    for col in y.values.columns() {
        for (s, _) in runs(col) {
            starts.insert(s);
        }
    }
    starts.into_iter().collect()
}

/// Up/down encoding of a series.
///
/// The first bit is 1 when the series has a single value, starts with a
/// drop, or starts flat at its maximum. Later bits are 1 on a rise, 0 on a
/// fall and repeat the previous bit when flat.
pub fn first_order_relation(v: &[f64]) -> Result<Vec<u8>> {
    let t = v.len();
    if t == 0 {
        return Err(Error::EmptyInput("first-order relation of an empty series"));
    }
    let mut out = Vec::with_capacity(t);
    if t == 1 {
        out.push(1);
        return Ok(out);
    }
    let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = if v[0] > v[1] || (v[0] == v[1] && v[0] == vmax) {
        1
    } else {
        0
    };
    out.push(first);
    for k in 1..t {
        let bit = if v[k] > v[k - 1] {
            1
        } else if v[k] < v[k - 1] {
            0
        } else {
            out[k - 1]
        };
        out.push(bit);
    }
    Ok(out)
}

/// Visits every window of the matrix in day, start, length order.
///
/// Stops early and returns `false` if `visit` does.
fn for_each_window(
    y: &ConsumptionMatrix,
    span: &Span,
    policy: CombinationPolicy,
    mut visit: impl FnMut(Window) -> bool,
) -> bool {
    for (day, col) in y.values.columns().enumerate() {
        match policy {
            CombinationPolicy::Contiguous => {
                for (run_start, run_len) in runs(col) {
                    for start in run_start..run_start + run_len {
                        for r in span.iter() {
                            if start + r > run_start + run_len {
                                break;
                            }
                            let positions: Vec<usize> = (start..start + r).collect();
                            let values = col[start..start + r].to_vec();
                            if !visit(Window {
                                day,
                                positions,
                                values,
                            }) {
                                return false;
                            }
                        }
                    }
                }
            }
            CombinationPolicy::AllSubsequences => {
                let nz: Vec<usize> = (0..col.len()).filter(|&i| col[i] != 0.0).collect();
                // subsets grouped by their first element, then by length
                for first in 0..nz.len() {
                    for r in span.iter() {
                        let mut chosen = vec![first];
                        if !subsequences(&nz, col, day, r, &mut chosen, &mut visit) {
                            return false;
                        }
                    }
                }
            }
        }
    }
    true
}

fn subsequences(
    nz: &[usize],
    col: &[f64],
    day: usize,
    r: usize,
    chosen: &mut Vec<usize>,
    visit: &mut impl FnMut(Window) -> bool,
) -> bool {
    if chosen.len() == r {
        let positions: Vec<usize> = chosen.iter().map(|&k| nz[k]).collect();
        let values = positions.iter().map(|&p| col[p]).collect();
        return visit(Window {
            day,
            positions,
            values,
        });
    }
    let last = *chosen.last().expect("seeded with the first element");
    for next in last + 1..nz.len() {
        chosen.push(next);
        let keep_going = subsequences(nz, col, day, r, chosen, visit);
        chosen.pop();
        if !keep_going {
            return false;
        }
    }
    true
}

/// Every window whose length is in `span`, in deterministic order.
pub fn enumerate_windows(
    y: &ConsumptionMatrix,
    span: &Span,
    policy: CombinationPolicy,
) -> Vec<Window> {
    let mut out = Vec::new();
    for_each_window(y, span, policy, |w| {
        out.push(w);
        true
    });
    out
}

/// First-order relation of every window.
pub fn consumption_mapping(
    y: &ConsumptionMatrix,
    span: &Span,
    policy: CombinationPolicy,
) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for_each_window(y, span, policy, |w| {
        out.push(first_order_relation(&w.values).expect("windows are non-empty"));
        true
    });
    out
}

/// Distinct patterns ordered by length, then lexicographically.
pub fn shape_features(mapped: &[Vec<u8>]) -> Vec<ShapePattern> {
    let set: BTreeSet<(usize, &[u8])> = mapped.iter().map(|m| (m.len(), m.as_slice())).collect();
    set.into_iter()
        .map(|(_, bits)| ShapePattern(bits.to_vec()))
        .collect()
}

/// Pattern counts in the same canonical order as [`shape_features`].
pub fn shape_feature_counts(mapped: &[Vec<u8>]) -> Vec<(ShapePattern, usize)> {
    let mut counts: BTreeMap<(usize, &[u8]), usize> = BTreeMap::new();
    for m in mapped {
        *counts.entry((m.len(), m.as_slice())).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|((_, bits), c)| (ShapePattern(bits.to_vec()), c))
        .collect()
}

/// Whether `hi`, restricted to the support of `hj` and renormalized, equals `hj`.
pub fn covers(hi: &BasisVector, hj: &BasisVector, tol: f64) -> bool {
    let ss: f64 = hj
        .support
        .iter()
        .map(|&n| hi.values[n] * hi.values[n])
        .sum();
    if ss == 0.0 {
        return false;
    }
    let norm = ss.sqrt();
    hj.support
        .iter()
        .all(|&n| (hi.values[n] / norm - hj.values[n]).abs() <= tol)
}

fn mutually_equal(a: &BasisVector, b: &BasisVector, tol: f64) -> bool {
    a.support == b.support
        && a.support
            .iter()
            .all(|&n| (a.values[n] - b.values[n]).abs() <= tol)
}

/// Options shared by the smoothing and initialization steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeOptions {
    pub max_span: usize,
    pub policy: CombinationPolicy,
    pub placement: PlacementMode,
    pub cover_tol: f64,
    pub budget: usize,
}

impl Default for ShapeOptions {
    fn default() -> Self {
        ShapeOptions {
            max_span: DEFAULT_MAX_SPAN,
            policy: CombinationPolicy::Contiguous,
            placement: PlacementMode::Observed,
            cover_tol: DEFAULT_COVER_TOL,
            budget: DEFAULT_COMBINATION_BUDGET,
        }
    }
}

/// Keeps only candidates that no earlier-kept candidate covers.
///
/// Candidates are visited by decreasing support size; since a basis can only
/// cover bases whose support it contains, and cover is transitive, checking
/// against kept bases alone suffices.
pub fn prune_covered(candidates: Vec<BasisVector>, tol: f64) -> Vec<BasisVector> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .support
            .len()
            .cmp(&candidates[a].support.len())
    });
    let mut kept: Vec<usize> = Vec::new();
    // kept bases indexed by every position of their support
    let mut by_position: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for idx in order {
        let cand = &candidates[idx];
        let Some(&anchor) = cand.support.first() else {
            continue;
        };
        let covered = by_position
            .get(&anchor)
            .map(|ks| ks.iter().any(|&k| covers(&candidates[k], cand, tol)))
            .unwrap_or(false);
        if !covered {
            for &p in &cand.support {
                by_position.entry(p).or_default().push(idx);
            }
            kept.push(idx);
        }
    }
    let mut slots: Vec<Option<BasisVector>> = candidates.into_iter().map(Some).collect();
    kept.into_iter()
        .map(|k| slots[k].take().expect("each candidate kept at most once"))
        .collect()
}

/// Normalized windows with every covered candidate removed.
pub fn smooth_bases(
    y: &ConsumptionMatrix,
    span: &Span,
    opts: &ShapeOptions,
) -> Result<Vec<BasisVector>> {
    if y.values.as_slice().iter().all(|v| *v == 0.0) {
        return Err(Error::EmptyInput("consumption matrix is all zero"));
    }
    let n = y.intervals();
    let mut candidates = Vec::new();
    let mut count = 0usize;
    let within = for_each_window(y, span, opts.policy, |w| {
        count += 1;
        if count > opts.budget {
            return false;
        }
        if let Some(b) = BasisVector::normalized(n, &w.positions, &w.values) {
            candidates.push(b);
        }
        true
    });
    if !within {
        return Err(Error::BudgetExceeded {
            candidates: count,
            budget: opts.budget,
        });
    }
    Ok(prune_covered(candidates, opts.cover_tol))
}

/// Extends a pattern to length `n` at `start` and normalizes it.
pub fn place_pattern(pattern: &ShapePattern, start: usize, n: usize) -> Option<BasisVector> {
    if start + pattern.len() > n {
        return None;
    }
    let positions: Vec<usize> = (start..start + pattern.len()).collect();
    let values: Vec<f64> = pattern.0.iter().map(|&b| b as f64).collect();
    BasisVector::normalized(n, &positions, &values)
}

/// Placed shape patterns united with smoothed bases, duplicates removed.
pub fn init_dictionary(
    patterns: &[ShapePattern],
    smoothed: &[BasisVector],
    placement: &Placement,
    n: usize,
    tol: f64,
) -> Result<Dictionary> {
    let starts: Vec<usize> = match placement {
        Placement::Starts(s) => s.clone(),
        Placement::All => (0..n).collect(),
    };
    let mut bases: Vec<BasisVector> = Vec::new();
    for p in patterns {
        for &s in &starts {
            if let Some(b) = place_pattern(p, s, n) {
                bases.push(b);
            }
        }
    }
    for b in smoothed {
        if b.values.len() != n {
            return Err(Error::shape(n, b.values.len()));
        }
        bases.push(b.clone());
    }
    let mut groups: BTreeMap<&[usize], Vec<usize>> = BTreeMap::new();
    let mut unique: Vec<usize> = Vec::new();
    for (k, b) in bases.iter().enumerate() {
        if b.support.is_empty() {
            continue;
        }
        let group = groups.entry(b.support.as_slice()).or_default();
        if group.iter().any(|&g| mutually_equal(&bases[g], b, tol)) {
            continue;
        }
        group.push(k);
        unique.push(k);
    }
    if unique.is_empty() {
        return Err(Error::EmptyInput(
            "no shape patterns or smoothed bases to initialize from",
        ));
    }
    let mut dict = Dictionary::empty(n);
    for k in unique {
        let b = &bases[k];
        dict.push_column(b.support.iter().map(|&i| (i, b.values[i])));
    }
    dict.normalize_columns();
    Ok(dict)
}

/// Everything discovered for one device.
#[derive(Debug, Clone)]
pub struct ShapeSummary {
    pub span: Span,
    pub patterns: Vec<(ShapePattern, usize)>,
    pub smoothed: Vec<BasisVector>,
    pub dictionary: Dictionary,
}

/// Span, shape features, smoothed bases and the initial dictionary of one device.
pub fn discover(y: &ConsumptionMatrix, opts: &ShapeOptions) -> Result<ShapeSummary> {
    let span = infer_span(y, opts.max_span)?;
    let mapped = consumption_mapping(y, &span, opts.policy);
    let patterns = shape_feature_counts(&mapped);
    let smoothed = smooth_bases(y, &span, opts)?;
    let placement = match opts.placement {
        PlacementMode::Observed => Placement::Starts(observed_starts(y)),
        PlacementMode::All => Placement::All,
    };
    let pattern_list: Vec<ShapePattern> = patterns.iter().map(|(p, _)| p.clone()).collect();
    let dictionary = init_dictionary(
        &pattern_list,
        &smoothed,
        &placement,
        y.intervals(),
        opts.cover_tol,
    )?;
    Ok(ShapeSummary {
        span,
        patterns,
        smoothed,
        dictionary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Device, Matrix};

    fn matrix(n: usize, days: &[&[(usize, f64)]]) -> ConsumptionMatrix {
        let mut m = Matrix::zeros(n, days.len());
        for (p, day) in days.iter().enumerate() {
            for &(i, v) in day.iter() {
                m.set(i, p, v);
            }
        }
        ConsumptionMatrix::new(Device::Toilet, m).unwrap()
    }

    #[test]
    fn first_order_relation_cases() {
        assert_eq!(first_order_relation(&[0.7, 0.8]).unwrap(), vec![0, 1]);
        assert_eq!(first_order_relation(&[0.8, 0.8]).unwrap(), vec![1, 1]);
        assert_eq!(first_order_relation(&[3.2, 1.7]).unwrap(), vec![1, 0]);
        assert_eq!(first_order_relation(&[5.0]).unwrap(), vec![1]);
        // flat below the maximum carries the first bit forward
        assert_eq!(
            first_order_relation(&[1.0, 1.0, 2.0]).unwrap(),
            vec![0, 0, 1]
        );
        assert!(first_order_relation(&[]).is_err());
    }

    #[test]
    fn span_examples() {
        let y = matrix(10, &[&[(2, 1.0)], &[(4, 1.0), (5, 2.0)]]);
        assert_eq!(infer_span(&y, 4).unwrap().to_vec(), vec![1, 2]);
        let y = matrix(10, &[&[(2, 1.0), (3, 1.0), (4, 1.0)]]);
        assert_eq!(infer_span(&y, 4).unwrap().to_vec(), vec![3]);
        let y = matrix(
            12,
            &[
                &[(0, 1.0)],
                &[(2, 1.0), (3, 1.0)],
                &[(5, 1.0), (6, 1.0), (7, 1.0), (8, 1.0), (9, 1.0)],
            ],
        );
        assert_eq!(infer_span(&y, 4).unwrap().to_vec(), vec![1, 2]);
        assert!(infer_span(&matrix(4, &[&[]]), 4).is_err());
    }

    #[test]
    fn all_zero_day_contributes_nothing() {
        let y = matrix(6, &[&[], &[(1, 2.0)]]);
        let span = Span::new([1]).unwrap();
        assert_eq!(
            consumption_mapping(&y, &span, CombinationPolicy::Contiguous),
            vec![vec![1]]
        );
    }

    #[test]
    fn shape_features_are_sorted_and_unique() {
        let mapped = vec![vec![1, 0], vec![1], vec![0, 1], vec![1, 0]];
        let sf = shape_features(&mapped);
        assert_eq!(
            sf,
            vec![
                ShapePattern(vec![1]),
                ShapePattern(vec![0, 1]),
                ShapePattern(vec![1, 0])
            ]
        );
        assert!(shape_features(&[]).is_empty());
    }

    #[test]
    fn cover_basics() {
        let a = BasisVector::from_values(vec![0.6, 0.8, 0.0]);
        let b = BasisVector::from_values(vec![0.0, 0.0, 1.0]);
        let single = BasisVector::from_values(vec![0.0, 1.0, 0.0]);
        assert!(covers(&a, &a, DEFAULT_COVER_TOL));
        assert!(!covers(&a, &b, DEFAULT_COVER_TOL));
        assert!(covers(&a, &single, DEFAULT_COVER_TOL));
        assert!(!covers(&single, &a, DEFAULT_COVER_TOL));
    }

    #[test]
    fn singleton_run_smooths_to_unit_basis() {
        let y = matrix(8, &[&[(3, 2.5)]]);
        let span = Span::new([1]).unwrap();
        let bases = smooth_bases(&y, &span, &ShapeOptions::default()).unwrap();
        assert_eq!(bases.len(), 1);
        assert_eq!(bases[0].support, vec![3]);
        assert_eq!(bases[0].values[3], 1.0);
    }

    #[test]
    fn budget_is_enforced() {
        let y = matrix(8, &[&[(1, 1.0), (2, 2.0), (3, 3.0)]]);
        let span = Span::new([1, 2, 3]).unwrap();
        let opts = ShapeOptions {
            budget: 3,
            ..ShapeOptions::default()
        };
        assert!(matches!(
            smooth_bases(&y, &span, &opts),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn placed_pattern_normalization() {
        let d = init_dictionary(
            &[ShapePattern(vec![1, 1])],
            &[],
            &Placement::Starts(vec![30]),
            96,
            DEFAULT_COVER_TOL,
        )
        .unwrap();
        assert_eq!(d.cols(), 1);
        let col = d.column_dense(0);
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!((col[30] - h).abs() < 1e-15 && (col[31] - h).abs() < 1e-15);
        assert_eq!(col.iter().filter(|v| **v != 0.0).count(), 2);
    }

    #[test]
    fn duplicate_from_both_sources_appears_once() {
        let smoothed = vec![BasisVector::from_values({
            let mut v = vec![0.0; 10];
            v[4] = 1.0;
            v
        })];
        let d = init_dictionary(
            &[ShapePattern(vec![1])],
            &smoothed,
            &Placement::Starts(vec![4]),
            10,
            DEFAULT_COVER_TOL,
        )
        .unwrap();
        assert_eq!(d.cols(), 1);
        assert!(init_dictionary(&[], &[], &Placement::All, 10, DEFAULT_COVER_TOL).is_err());
    }

    #[test]
    fn patterns_that_do_not_fit_are_skipped() {
        let d = init_dictionary(
            &[ShapePattern(vec![1, 0, 1])],
            &[],
            &Placement::All,
            4,
            1e-6,
        )
        .unwrap();
        assert_eq!(d.cols(), 2);
    }
}
