//! Turning fractional plans into discrete matchings.

use ndarray::Array2;

use super::assignment::Assignment;
use super::{Marginals, TransportPlan};
use crate::cost::CostMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HardenMode {
    /// One-to-one: each ground truth takes its highest-mass prediction,
    /// conflicts resolved greedily in favor of the larger mass.
    ArgmaxPerGt,
    /// Every pair with `Γ_ji ≥ t`; may be one-to-many.
    Threshold(f64),
    /// Every pair carrying at least this fraction of the largest entry in
    /// its ground truth's column; may be one-to-many. Each ground truth with
    /// any mass keeps its best prediction, however many duplicates share it.
    ColumnRelative(f64),
}

/// Hardens `plan` and prices the resulting pairs with `cost`.
pub fn extract_hard_matches(
    plan: &TransportPlan,
    cost: &CostMatrix,
    mode: HardenMode,
) -> Result<Assignment> {
    let gamma = plan.gamma();
    if gamma.dim() != cost.values().dim() {
        return Err(Error::DimensionMismatch(format!(
            "plan is {:?} but cost is {:?}",
            gamma.dim(),
            cost.values().dim()
        )));
    }
    let (m, n) = gamma.dim();
    let mut pairs: Vec<(usize, usize)> = match mode {
        HardenMode::ArgmaxPerGt => greedy_one_to_one(gamma),
        HardenMode::Threshold(t) => {
            if !t.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "threshold must be finite, got {t}"
                )));
            }
            gamma
                .indexed_iter()
                .filter(|(_, v)| **v > 0.0 && **v >= t)
                .map(|(idx, _)| idx)
                .collect()
        }
        HardenMode::ColumnRelative(f) => {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidParameter(format!(
                    "relative threshold must be in [0, 1], got {f}"
                )));
            }
            let col_max: Vec<f64> = gamma
                .columns()
                .into_iter()
                .map(|c| c.fold(0.0_f64, |a, &v| a.max(v)))
                .collect();
            gamma
                .indexed_iter()
                .filter(|((_, i), v)| **v > 0.0 && **v >= f * col_max[*i])
                .map(|(idx, _)| idx)
                .collect()
        }
    };
    pairs.sort_unstable();
    let mut used = vec![false; m];
    for &(j, _) in &pairs {
        used[j] = true;
    }
    let background = (0..m).filter(|j| !used[*j]).collect();
    let total_cost = pairs.iter().map(|&(j, i)| cost.values()[[j, i]]).sum();
    debug_assert!(pairs.iter().all(|&(_, i)| i < n));
    Ok(Assignment {
        pairs,
        background,
        total_cost,
        one_to_one: matches!(mode, HardenMode::ArgmaxPerGt),
    })
}

fn greedy_one_to_one(gamma: &Array2<f64>) -> Vec<(usize, usize)> {
    let (m, n) = gamma.dim();
    let mut entries: Vec<(f64, usize, usize)> = gamma
        .indexed_iter()
        .filter(|(_, v)| **v > 0.0)
        .map(|((j, i), v)| (*v, i, j))
        .collect();
    // Larger mass first; ties by ground truth, then prediction.
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; m];
    let mut gt_used = vec![false; n];
    let mut pairs = Vec::with_capacity(m.min(n));
    for (_, i, j) in entries {
        if pred_used[j] || gt_used[i] {
            continue;
        }
        pred_used[j] = true;
        gt_used[i] = true;
        pairs.push((j, i));
        if pairs.len() == m.min(n) {
            break;
        }
    }
    pairs
}

/// Plan of a hard assignment: each matched ground truth sends its weight
/// `μ_i` to its prediction; background predictions carry nothing.
pub fn assignment_plan(assignment: &Assignment, marg: &Marginals) -> Result<TransportPlan> {
    let (m, n) = (marg.nu().len(), marg.mu().len());
    let mut gamma = Array2::zeros((m, n));
    for &(j, i) in &assignment.pairs {
        if j >= m || i >= n {
            return Err(Error::DimensionMismatch(format!(
                "pair ({j}, {i}) outside {m}x{n}"
            )));
        }
        gamma[[j, i]] += marg.mu()[i];
    }
    TransportPlan::from_gamma(gamma)
}
