use std::path::Path;

use rayon::prelude::*;

use super::compare::match_quality;
use crate::cost::{pairwise_cost_matrix, CostMatrix, CostWeights};
use crate::error::{Error, Result};
use crate::numfmt::g17;
use crate::scenes::Scene;
use crate::solvers::{
    adaptive_epsilon, extract_hard_matches, rtp_unbalanced, HardenMode, Kappa, Marginals,
    RtpParams, RtpVariant,
};

/// Mean hardened-match quality of one `(ε₀, κ₂)` setting over a scene set.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub eps0: f64,
    pub kappa2: f64,
    pub mean_f1: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    /// Scenes whose solve hit the iteration cap.
    pub unconverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    /// Row-major over `eps0_grid` then `kappa2_grid`.
    pub cells: Vec<AblationCell>,
    /// Index of the cell with the highest mean F1 (first in grid order on ties).
    pub best: usize,
}

impl AblationTable {
    pub fn best_cell(&self) -> &AblationCell {
        &self.cells[self.best]
    }
}

/// Evaluates argmax-hardened regularized matching for every grid cell,
/// with `ε = ε₀ / ln M` resolved per scene.
pub fn ablation_grid(
    scenes: &[Scene],
    weights: &CostWeights,
    eps0_grid: &[f64],
    kappa2_grid: &[f64],
    variant: RtpVariant,
) -> Result<AblationTable> {
    if scenes.is_empty() || eps0_grid.is_empty() || kappa2_grid.is_empty() {
        return Err(Error::InvalidParameter(
            "ablation needs scenes and nonempty grids".into(),
        ));
    }
    for &e in eps0_grid {
        adaptive_epsilon(e, 3)?;
    }
    let kappas: Vec<Kappa> = kappa2_grid
        .iter()
        .map(|&k| Kappa::from_kappa2(k))
        .collect::<Result<_>>()?;
    let prepared: Vec<(CostMatrix, Marginals)> = scenes
        .par_iter()
        .map(|s| {
            Ok((
                pairwise_cost_matrix(s, weights)?,
                Marginals::uniform(s.m(), s.n())?,
            ))
        })
        .collect::<Result<_>>()?;

    let settings: Vec<(f64, Kappa)> = eps0_grid
        .iter()
        .flat_map(|&e| kappas.iter().map(move |&k| (e, k)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..settings.len())
        .flat_map(|c| (0..scenes.len()).map(move |s| (c, s)))
        .collect();
    let scores: Vec<(f64, f64, f64, bool)> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let (eps0, kappa) = settings[c];
            let (cost, marg) = &prepared[s];
            let eps = adaptive_epsilon(eps0, scenes[s].m())?;
            let plan = rtp_unbalanced(
                cost,
                marg,
                &RtpParams::new(kappa, eps).with_variant(variant),
            )?;
            let hard = extract_hard_matches(&plan, cost, HardenMode::ArgmaxPerGt)?;
            let q = match_quality(&scenes[s], &hard);
            Ok((q.f1, q.precision, q.recall, plan.diagnostics().converged))
        })
        .collect::<Result<_>>()?;

    let count = scenes.len() as f64;
    let cells: Vec<AblationCell> = settings
        .iter()
        .zip(scores.chunks_exact(scenes.len()))
        .map(|(&(eps0, kappa), chunk)| AblationCell {
            eps0,
            kappa2: kappa.kappa2(),
            mean_f1: chunk.iter().map(|s| s.0).sum::<f64>() / count,
            mean_precision: chunk.iter().map(|s| s.1).sum::<f64>() / count,
            mean_recall: chunk.iter().map(|s| s.2).sum::<f64>() / count,
            unconverged: chunk.iter().filter(|s| !s.3).count(),
        })
        .collect();
    let best = cells.iter().enumerate().fold(0, |best, (k, c)| {
        if c.mean_f1 > cells[best].mean_f1 {
            k
        } else {
            best
        }
    });
    Ok(AblationTable { cells, best })
}

pub fn write_ablation_csv(table: &AblationTable, path: &Path) -> Result<()> {
    let header = [
        "eps0",
        "kappa2",
        "mean_f1",
        "mean_precision",
        "mean_recall",
        "unconverged",
        "best",
    ];
    let rows: Vec<Vec<String>> = table
        .cells
        .iter()
        .enumerate()
        .map(|(k, c)| {
            vec![
                g17(c.eps0),
                g17(c.kappa2),
                g17(c.mean_f1),
                g17(c.mean_precision),
                g17(c.mean_recall),
                c.unconverged.to_string(),
                u8::from(k == table.best).to_string(),
            ]
        })
        .collect();
    super::write_csv(path, &header, &rows)
}
