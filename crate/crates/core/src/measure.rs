//! Weighted (pseudo-)norms on finite, purely atomic measure spaces.
//!
//! A vector `x` lives on atoms `0..n` with measures `λ_i > 0`. The largest-K
//! norm `|x|_K` is the best value `Σ_{i∈I} λ_i |x_i|` over index sets `I` with
//! `Σ_{i∈I} λ_i ≤ K`, i.e. a 0/1 knapsack in which every item has
//! value-to-weight ratio `|x_i|`. It is bounded by `‖x‖₁ = Σ λ_i |x_i|`, and
//! `‖x‖₁ − |x|_K = 0` holds exactly when the measure of the support of `x`
//! is at most `K`.

use std::cmp::Ordering;

use crate::error::MeasureError;

/// Entries with `|x_i|` at or below this value count as zero.
pub const ZERO_THRESHOLD: f64 = 1e-10;

/// Budget slack relative to the total measure, absorbing rounding in weight sums.
pub const BUDGET_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasureSpace {
    weights: Vec<f64>,
    total: f64,
}

impl DiscreteMeasureSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self, MeasureError> {
        if weights.is_empty() {
            return Err(MeasureError::Empty);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MeasureError::InvalidWeight { index, value });
            }
        }
        let total = weights.iter().sum();
        Ok(Self { weights, total })
    }

    /// `n` atoms of equal measure `weight`.
    pub fn uniform(n: usize, weight: f64) -> Result<Self, MeasureError> {
        Self::new(vec![weight; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_measure(&self) -> f64 {
        self.total
    }

    pub fn budget_tolerance(&self) -> f64 {
        BUDGET_RTOL * self.total
    }

    fn check_len(&self, x: &[f64]) -> Result<(), MeasureError> {
        if x.len() == self.weights.len() {
            Ok(())
        } else {
            Err(MeasureError::DimensionMismatch {
                expected: self.weights.len(),
                found: x.len(),
            })
        }
    }

    fn check_budget(&self, budget: f64) -> Result<f64, MeasureError> {
        let tol = self.budget_tolerance();
        if !budget.is_finite() || budget < -tol || budget > self.total + tol {
            return Err(MeasureError::BudgetOutOfRange {
                budget,
                total: self.total,
            });
        }
        Ok(budget.clamp(0.0, self.total))
    }
}

/// Index set attaining (or approximating) the largest-K maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    /// Selected atoms in ascending order.
    pub indices: Vec<usize>,
    /// `Σ_{i∈I} λ_i |x_i|`.
    pub value: f64,
    /// `Σ_{i∈I} λ_i`.
    pub weight: f64,
    /// Whether an exact oracle produced the set.
    pub exact: bool,
}

impl KSelection {
    fn from_indices(
        mut indices: Vec<usize>,
        x: &[f64],
        space: &DiscreteMeasureSpace,
        exact: bool,
    ) -> Self {
        indices.sort_unstable();
        let w = space.weights();
        let value = indices.iter().map(|&i| w[i] * x[i].abs()).sum();
        let weight = indices.iter().map(|&i| w[i]).sum();
        Self {
            indices,
            value,
            weight,
            exact,
        }
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Membership mask over `n` atoms.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &i in &self.indices {
            mask[i] = true;
        }
        mask
    }
}

pub fn weighted_l0(x: &[f64], space: &DiscreteMeasureSpace) -> Result<f64, MeasureError> {
    weighted_l0_with_threshold(x, space, ZERO_THRESHOLD)
}

pub fn weighted_l0_with_threshold(
    x: &[f64],
    space: &DiscreteMeasureSpace,
    zero_threshold: f64,
) -> Result<f64, MeasureError> {
    space.check_len(x)?;
    Ok(x.iter()
        .zip(space.weights())
        .filter(|(v, _)| v.abs() > zero_threshold)
        .map(|(_, w)| w)
        .sum())
}

pub fn weighted_l1(x: &[f64], space: &DiscreteMeasureSpace) -> Result<f64, MeasureError> {
    space.check_len(x)?;
    Ok(x.iter().zip(space.weights()).map(|(v, w)| w * v.abs()).sum())
}

/// Atoms ordered by `|x_i|` descending, ties by ascending index.
fn ratio_order(x: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        x[b].abs()
            .partial_cmp(&x[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy knapsack: scan atoms in ratio order and keep each one that still
/// fits the remaining budget.
pub fn largest_k_greedy(
    x: &[f64],
    space: &DiscreteMeasureSpace,
    budget: f64,
) -> Result<KSelection, MeasureError> {
    space.check_len(x)?;
    let budget = space.check_budget(budget)?;
    let limit = budget + space.budget_tolerance();
    let w = space.weights();
    let mut used = 0.0;
    let mut indices = Vec::new();
    for i in ratio_order(x) {
        if x[i].abs() <= ZERO_THRESHOLD {
            break;
        }
        if used + w[i] <= limit {
            used += w[i];
            indices.push(i);
        }
    }
    Ok(KSelection::from_indices(indices, x, space, false))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    /// Largest number of nonzero atoms handled by subset enumeration.
    pub enumeration_atoms: usize,
    /// Largest number of atoms handled by the integer-weight dynamic program.
    pub dp_atoms: usize,
    /// Upper bound on `atoms × (capacity + 1)` for the dynamic program.
    pub dp_cells: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            enumeration_atoms: 25,
            dp_atoms: 10_000,
            dp_cells: 60_000_000,
        }
    }
}

/// Exact largest-K selection with the default [`OracleLimits`].
pub fn largest_k_exact(
    x: &[f64],
    space: &DiscreteMeasureSpace,
    budget: f64,
) -> Result<KSelection, MeasureError> {
    largest_k_exact_with(x, space, budget, &OracleLimits::default())
}

/// Exact largest-K selection: dynamic programming when the weights are
/// integer multiples of a common unit, subset enumeration otherwise.
pub fn largest_k_exact_with(
    x: &[f64],
    space: &DiscreteMeasureSpace,
    budget: f64,
    limits: &OracleLimits,
) -> Result<KSelection, MeasureError> {
    space.check_len(x)?;
    let budget = space.check_budget(budget)?;
    let w = space.weights();
    let mut items = support(x).into_iter();
    if let Some(first) = items.next() {
        if items.all(|i| w[i] == w[first]) {
            // With equal measures the ratio order is optimal.
            let mut sel = largest_k_greedy(x, space, budget)?;
            sel.exact = true;
            return Ok(sel);
        }
    }
    if let Some(sel) = largest_k_dp(x, space, budget, limits)? {
        return Ok(sel);
    }
    largest_k_enumerate(x, space, budget, limits.enumeration_atoms)
}

fn support(x: &[f64]) -> Vec<usize> {
    (0..x.len())
        .filter(|&i| x[i].abs() > ZERO_THRESHOLD)
        .collect()
}

/// Subset sums of `items` indexed by bitmask.
fn half_sums(items: &[usize], x: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let count = 1usize << items.len();
    let mut weight = vec![0.0; count];
    let mut value = vec![0.0; count];
    for mask in 1..count {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        let i = items[low];
        weight[mask] = weight[rest] + w[i];
        value[mask] = value[rest] + w[i] * x[i].abs();
    }
    (weight, value)
}

/// Exact selection by meet-in-the-middle enumeration of all subsets of the
/// support.
pub fn largest_k_enumerate(
    x: &[f64],
    space: &DiscreteMeasureSpace,
    budget: f64,
    max_atoms: usize,
) -> Result<KSelection, MeasureError> {
    space.check_len(x)?;
    let budget = space.check_budget(budget)?;
    let items = support(x);
    if items.len() > max_atoms {
        return Err(MeasureError::OracleLimit {
            atoms: items.len(),
            limit: max_atoms,
        });
    }
    let limit = budget + space.budget_tolerance();
    let w = space.weights();
    let (left, right) = items.split_at(items.len() / 2);
    let (lw, lv) = half_sums(left, x, w);
    let (rw, rv) = half_sums(right, x, w);

    // Right half sorted by weight with running best value.
    let mut order: Vec<usize> = (0..rw.len()).collect();
    order.sort_by(|&a, &b| rw[a].partial_cmp(&rw[b]).unwrap_or(Ordering::Equal));
    let sorted_weight: Vec<f64> = order.iter().map(|&m| rw[m]).collect();
    let mut best_prefix = Vec::with_capacity(order.len());
    let mut best = (f64::NEG_INFINITY, 0usize);
    for &m in &order {
        if rv[m] > best.0 {
            best = (rv[m], m);
        }
        best_prefix.push(best);
    }

    let mut champion = (f64::NEG_INFINITY, 0usize, 0usize);
    for lmask in 0..lw.len() {
        if lw[lmask] > limit {
            continue;
        }
        let room = limit - lw[lmask];
        let fit = sorted_weight.partition_point(|&v| v <= room);
        if fit == 0 {
            continue;
        }
        let (rvalue, rmask) = best_prefix[fit - 1];
        let total = lv[lmask] + rvalue;
        if total > champion.0 {
            champion = (total, lmask, rmask);
        }
    }
    let (_, lmask, rmask) = champion;
    let mut indices: Vec<usize> = Vec::new();
    indices.extend((0..left.len()).filter(|b| lmask >> b & 1 == 1).map(|b| left[b]));
    indices.extend((0..right.len()).filter(|b| rmask >> b & 1 == 1).map(|b| right[b]));
    Ok(KSelection::from_indices(indices, x, space, true))
}

/// Expresses every weight as an integer multiple of a common unit, if one
/// exists with a small denominator relative to the smallest weight.
fn integer_weights(weights: &[f64]) -> Option<(f64, Vec<usize>)> {
    let smallest = weights.iter().copied().fold(f64::INFINITY, f64::min);
    'denominators: for denom in 1..=64usize {
        let unit = smallest / denom as f64;
        let mut ints = Vec::with_capacity(weights.len());
        for &w in weights {
            let ratio = w / unit;
            let k = ratio.round();
            if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) || k > 1e9 {
                continue 'denominators;
            }
            ints.push(k as usize);
        }
        return Some((unit, ints));
    }
    None
}

/// Exact selection by 0/1 knapsack dynamic programming over integer weights.
///
/// Returns `Ok(None)` when the weights are not commensurate or the table
/// would exceed `limits`.
pub fn largest_k_dp(
    x: &[f64],
    space: &DiscreteMeasureSpace,
    budget: f64,
    limits: &OracleLimits,
) -> Result<Option<KSelection>, MeasureError> {
    space.check_len(x)?;
    let budget = space.check_budget(budget)?;
    let items = support(x);
    if items.is_empty() {
        return Ok(Some(KSelection::from_indices(Vec::new(), x, space, true)));
    }
    if items.len() > limits.dp_atoms {
        return Ok(None);
    }
    let w = space.weights();
    let item_weights: Vec<f64> = items.iter().map(|&i| w[i]).collect();
    let Some((unit, ints)) = integer_weights(&item_weights) else {
        return Ok(None);
    };
    let capacity = ((budget + space.budget_tolerance()) / unit + 1e-9).floor() as usize;
    let total_int: usize = ints.iter().sum();
    let capacity = capacity.min(total_int);
    let cols = capacity + 1;
    if items.len().saturating_mul(cols) > limits.dp_cells {
        return Ok(None);
    }
    let mut best = vec![0.0_f64; cols];
    let mut keep = vec![false; items.len() * cols];
    for (k, (&i, &wi)) in items.iter().zip(&ints).enumerate() {
        let value = w[i] * x[i].abs();
        if wi > capacity {
            continue;
        }
        let row = &mut keep[k * cols..(k + 1) * cols];
        for c in (wi..cols).rev() {
            let candidate = best[c - wi] + value;
            if candidate > best[c] {
                best[c] = candidate;
                row[c] = true;
            }
        }
    }
    let mut c = capacity;
    let mut chosen = Vec::new();
    for k in (0..items.len()).rev() {
        if keep[k * cols + c] {
            chosen.push(items[k]);
            c -= ints[k];
        }
    }
    Ok(Some(KSelection::from_indices(chosen, x, space, true)))
}

/// Supremum over fractional `d ∈ [0,1]ⁿ` with `Σ λ_i d_i ≤ K` of
/// `Σ λ_i d_i |x_i|` (fractional knapsack).
pub fn largest_k_relaxed(
    x: &[f64],
    space: &DiscreteMeasureSpace,
    budget: f64,
) -> Result<f64, MeasureError> {
    space.check_len(x)?;
    let budget = space.check_budget(budget)?;
    let w = space.weights();
    let mut remaining = budget;
    let mut value = 0.0;
    for i in ratio_order(x) {
        if remaining <= 0.0 || x[i] == 0.0 {
            break;
        }
        let take = w[i].min(remaining);
        value += take * x[i].abs();
        remaining -= take;
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    /// `‖x‖₁ − |x|_K`, summed directly over the unselected atoms.
    pub gap: f64,
    pub l1: f64,
    pub largest_k: f64,
    /// Whether `largest_k` came from an exact oracle.
    pub exact: bool,
}

/// Reformulation gap using the exact oracle when the instance allows it and
/// the greedy selection otherwise.
pub fn reformulation_gap(
    x: &[f64],
    space: &DiscreteMeasureSpace,
    budget: f64,
) -> Result<GapReport, MeasureError> {
    let selection = match largest_k_exact(x, space, budget) {
        Ok(sel) => sel,
        Err(MeasureError::OracleLimit { .. }) => largest_k_greedy(x, space, budget)?,
        Err(e) => return Err(e),
    };
    gap_for_selection(x, space, &selection)
}

/// Gap `Σ_{i∉I} λ_i |x_i|` for a given selection.
pub fn gap_for_selection(
    x: &[f64],
    space: &DiscreteMeasureSpace,
    selection: &KSelection,
) -> Result<GapReport, MeasureError> {
    space.check_len(x)?;
    let mask = checked_mask(selection, x.len())?;
    let w = space.weights();
    let gap = (0..x.len())
        .filter(|&i| !mask[i])
        .map(|i| w[i] * x[i].abs())
        .sum();
    Ok(GapReport {
        gap,
        l1: weighted_l1(x, space)?,
        largest_k: selection.value,
        exact: selection.exact,
    })
}

fn checked_mask(selection: &KSelection, n: usize) -> Result<Vec<bool>, MeasureError> {
    if let Some(&index) = selection.indices.iter().find(|&&i| i >= n) {
        return Err(MeasureError::StaleSelection { index, atoms: n });
    }
    Ok(selection.mask(n))
}

/// Sign used for selected atoms whose entry is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZeroSign<'a> {
    Zero,
    Plus,
    Minus,
    /// Per-atom values in `[-1, 1]`.
    Given(&'a [f64]),
}

impl ZeroSign<'_> {
    fn at(&self, i: usize) -> f64 {
        match self {
            ZeroSign::Zero => 0.0,
            ZeroSign::Plus => 1.0,
            ZeroSign::Minus => -1.0,
            ZeroSign::Given(a) => a[i].clamp(-1.0, 1.0),
        }
    }
}

/// Subgradient of `|·|_K` at `x` built from an optimal (or greedy) set.
pub fn subgradient_largest_k(
    x: &[f64],
    space: &DiscreteMeasureSpace,
    selection: &KSelection,
    zero_sign: ZeroSign<'_>,
) -> Result<Vec<f64>, MeasureError> {
    space.check_len(x)?;
    if let ZeroSign::Given(a) = zero_sign {
        space.check_len(a)?;
    }
    let mask = checked_mask(selection, x.len())?;
    let w = space.weights();
    Ok((0..x.len())
        .map(|i| {
            if !mask[i] {
                0.0
            } else if x[i] != 0.0 {
                w[i] * x[i].signum()
            } else {
                w[i] * zero_sign.at(i)
            }
        })
        .collect())
}
