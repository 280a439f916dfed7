use std::path::Path;

use rayon::prelude::*;

use crate::cost::{
    background_augmented_cost_per_row, pairwise_cost_matrix, BackgroundCost, CostWeights,
};
use crate::error::{Error, Result};
use crate::numfmt::g17;
use crate::scenes::Scene;
use crate::solvers::{
    assignment_plan, hungarian_augmented, rtp_objective, rtp_unbalanced, Kappa, Marginals,
    RtpParams, RtpVariant,
};

/// Solver settings shared by every point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kappa2: f64,
    pub variant: RtpVariant,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kappa2: 0.01,
            variant: RtpVariant::Damped,
            tol: 1e-9,
            max_iter: 200_000,
        }
    }
}

/// One ε point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub eps: f64,
    /// `⟨C, Γ⟩`.
    pub transport_cost: f64,
    /// Entropic KL-relaxed objective at the solution.
    pub full_objective: f64,
    /// The same objective evaluated at the Hungarian plan.
    pub hungarian_objective: f64,
    pub entropy: f64,
    pub iterations: usize,
    pub marginal_residual: f64,
    pub converged: bool,
}

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n)
                .map(|k| {
                    if k == n - 1 {
                        stop
                    } else {
                        start + step * k as f64
                    }
                })
                .collect()
        }
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "eps grid needs at least 2 points, got {}",
            grid.len()
        )));
    }
    if let Some(e) = grid.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "eps grid entries must be positive, got {e}"
        )));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(format!(
            "eps grid must be strictly increasing, got {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Solves the regularized plan at every ε of `grid` on one cost matrix.
///
/// Points run in parallel; records come back in grid order. A point that
/// exhausts its iteration budget is kept with `converged = false`.
pub fn epsilon_sweep(
    scene: &Scene,
    weights: &CostWeights,
    grid: &[f64],
    config: &SweepConfig,
) -> Result<Vec<SweepRecord>> {
    validate_grid(grid)?;
    let kappa = Kappa::from_kappa2(config.kappa2)?;
    let cost = pairwise_cost_matrix(scene, weights)?;
    let marg = Marginals::uniform(scene.m(), scene.n())?;
    let bg = BackgroundCost::default().per_prediction(scene, weights);
    let hungarian = hungarian_augmented(&background_augmented_cost_per_row(&cost, &bg)?)?;
    let hard_plan = assignment_plan(&hungarian, &marg)?;

    grid.par_iter()
        .map(|&eps| {
            let params = RtpParams::new(kappa, eps)
                .with_variant(config.variant)
                .with_tol(config.tol)
                .with_max_iter(config.max_iter);
            let plan = rtp_unbalanced(&cost, &marg, &params)?;
            let d = plan.diagnostics();
            Ok(SweepRecord {
                eps,
                transport_cost: d.transport_cost,
                full_objective: rtp_objective(plan.gamma().view(), &cost, &marg, kappa, eps)?,
                hungarian_objective: rtp_objective(
                    hard_plan.gamma().view(),
                    &cost,
                    &marg,
                    kappa,
                    eps,
                )?,
                entropy: d.entropy,
                iterations: d.iterations,
                marginal_residual: d.marginal_residual,
                converged: d.converged,
            })
        })
        .collect()
}

pub fn write_sweep_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    let header = [
        "eps",
        "transport_cost",
        "full_objective",
        "hungarian_objective",
        "entropy",
        "iterations",
        "marginal_residual",
        "converged",
    ];
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                g17(r.eps),
                g17(r.transport_cost),
                g17(r.full_objective),
                g17(r.hungarian_objective),
                g17(r.entropy),
                r.iterations.to_string(),
                g17(r.marginal_residual),
                r.converged.to_string(),
            ]
        })
        .collect();
    super::write_csv(path, &header, &rows)
}
