use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{
    emit_heatmap, gt_labels, matrix_hash, pred_labels, write_csv, write_matrix_csv, HeatmapLabels,
};
use crate::cost::{
    background_augmented_cost_per_row, pairwise_cost_matrix, AugmentedCost, BackgroundCost,
    CostMatrix, CostWeights,
};
use crate::error::Result;
use crate::geometry::giou_rescaled;
use crate::numfmt::g17;
use crate::scenes::Scene;
use crate::solvers::{
    assignment_plan, brute_force_augmented, extract_hard_matches, hungarian_augmented,
    rtp_unbalanced, sinkhorn_log_domain, Assignment, HardenMode, Kappa, Marginals, RtpParams,
    RtpVariant, SinkhornParams, TransportPlan, BRUTE_FORCE_LIMIT,
};

/// Entropy level of the near-unregularized transport baseline.
pub const EXACT_OT_EPS: f64 = 1e-3;

/// Fraction of its column's largest entry a pair needs to survive
/// threshold hardening.
pub const RELATIVE_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    /// Entropy weight of the regularized plan.
    pub eps: f64,
    pub kappa2: f64,
    pub variant: RtpVariant,
    pub background: BackgroundCost,
}

impl CompareConfig {
    pub fn new(eps: f64, kappa2: f64) -> Self {
        Self {
            eps,
            kappa2,
            variant: RtpVariant::Damped,
            background: BackgroundCost::default(),
        }
    }
}

/// Match-level precision and recall against the generator's provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchQuality {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores hardened pairs: a pair is correct when the prediction was
/// spawned from that ground truth. Recall counts ground truths with at
/// least one correct pair.
pub fn match_quality(scene: &Scene, assignment: &Assignment) -> MatchQuality {
    let preds = scene.predictions();
    let correct = |&(j, i): &(usize, usize)| preds.get(j).and_then(|p| p.source) == Some(i);
    let n_correct = assignment.pairs.iter().filter(|p| correct(p)).count();
    let mut found = vec![false; scene.n()];
    for &(_, i) in assignment.pairs.iter().filter(|p| correct(p)) {
        found[i] = true;
    }
    let precision = if assignment.pairs.is_empty() {
        0.0
    } else {
        n_correct as f64 / assignment.pairs.len() as f64
    };
    let recall = found.iter().filter(|f| **f).count() as f64 / scene.n() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MatchQuality {
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRecord {
    pub matcher: String,
    pub plan: TransportPlan,
    /// One-to-one hardening (the assignment itself for discrete matchers).
    pub argmax: Assignment,
    /// Relative-threshold hardening at [`RELATIVE_THRESHOLD`]; may be one-to-many.
    pub thresholded: Assignment,
    /// `⟨C, Γ⟩` of the plan.
    pub total_cost: f64,
    /// Summed pair cost of the one-to-one hardening, background excluded.
    pub hard_cost: f64,
    pub argmax_quality: MatchQuality,
    pub threshold_quality: MatchQuality,
    pub iterations: usize,
    pub converged: bool,
    pub cost_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub records: Vec<ComparisonRecord>,
    pub cost: CostMatrix,
    pub cost_hash: String,
    pub augmented: AugmentedCost,
    pub notes: Vec<String>,
}

impl Comparison {
    pub fn record(&self, matcher: &str) -> Option<&ComparisonRecord> {
        self.records.iter().find(|r| r.matcher == matcher)
    }
}

/// Runs background-augmented Hungarian, the small-ε transport baseline,
/// the regularized plan and, for small scenes, the brute-force oracle on
/// one thresholded cost matrix.
pub fn compare_matchers(
    scene: &Scene,
    weights: &CostWeights,
    config: &CompareConfig,
) -> Result<Comparison> {
    let kappa = Kappa::from_kappa2(config.kappa2)?;
    let cost = pairwise_cost_matrix(scene, weights)?;
    let cost_hash = matrix_hash(cost.view());
    let marg = Marginals::uniform(scene.m(), scene.n())?;
    let bg = config.background.per_prediction(scene, weights);
    let augmented = background_augmented_cost_per_row(&cost, &bg)?;
    let mut notes = Vec::new();

    let discrete = |name: &str, assignment: Assignment| -> Result<ComparisonRecord> {
        let plan = assignment_plan(&assignment, &marg)?;
        let q = match_quality(scene, &assignment);
        Ok(ComparisonRecord {
            matcher: name.into(),
            total_cost: crate::solvers::transport_cost(&plan, &cost)?,
            plan,
            hard_cost: pair_cost(&cost, &assignment),
            argmax: assignment.clone(),
            thresholded: assignment,
            argmax_quality: q,
            threshold_quality: q,
            iterations: 0,
            converged: true,
            cost_hash: cost_hash.clone(),
        })
    };
    let fractional = |name: &str, plan: TransportPlan| -> Result<ComparisonRecord> {
        let argmax = extract_hard_matches(&plan, &cost, HardenMode::ArgmaxPerGt)?;
        let thresholded =
            extract_hard_matches(&plan, &cost, HardenMode::ColumnRelative(RELATIVE_THRESHOLD))?;
        let d = plan.diagnostics().clone();
        Ok(ComparisonRecord {
            matcher: name.into(),
            total_cost: d.transport_cost,
            hard_cost: pair_cost(&cost, &argmax),
            argmax_quality: match_quality(scene, &argmax),
            threshold_quality: match_quality(scene, &thresholded),
            plan,
            argmax,
            thresholded,
            iterations: d.iterations,
            converged: d.converged,
            cost_hash: cost_hash.clone(),
        })
    };

    let mut records = vec![discrete("hungarian", hungarian_augmented(&augmented)?)?];

    let exact = sinkhorn_log_domain(
        &cost,
        &marg,
        &SinkhornParams::new(EXACT_OT_EPS)
            .with_tol(1e-7)
            .with_max_iter(100_000),
    )?;
    records.push(fractional("exact_ot", exact)?);

    let rtp = rtp_unbalanced(
        &cost,
        &marg,
        &RtpParams::new(kappa, config.eps)
            .with_variant(config.variant)
            .with_tol(1e-9)
            .with_max_iter(200_000),
    )?;
    records.push(fractional("rtp", rtp)?);

    if scene.m() <= BRUTE_FORCE_LIMIT {
        records.push(discrete("brute_force", brute_force_augmented(&augmented)?)?);
    } else {
        notes.push(format!(
            "brute-force oracle skipped: {} predictions exceed the limit of {BRUTE_FORCE_LIMIT}",
            scene.m()
        ));
    }

    for r in &records {
        if !r.converged {
            notes.push(format!(
                "{} did not converge in {} iterations",
                r.matcher, r.iterations
            ));
        }
    }
    debug_assert!(records.iter().all(|r| r.cost_hash == cost_hash));

    Ok(Comparison {
        records,
        cost,
        cost_hash,
        augmented,
        notes,
    })
}

fn pair_cost(cost: &CostMatrix, a: &Assignment) -> f64 {
    a.pairs.iter().map(|&(j, i)| cost.values()[[j, i]]).sum()
}

/// Indicator matrix of a one-to-one assignment with a trailing background
/// column.
fn assignment_with_background(a: &Assignment, m: usize, n: usize) -> Array2<f64> {
    let mut out = Array2::zeros((m, n + 1));
    for &(j, i) in &a.pairs {
        out[[j, i]] = 1.0;
    }
    for &j in &a.background {
        out[[j, n]] = 1.0;
    }
    out
}

/// Writes the comparison table, per-matcher plans and heatmaps, the cost
/// matrix and both GIoU orientations into `out_dir`. Returns the paths
/// written, in order.
pub fn write_comparison(
    scene: &Scene,
    comparison: &Comparison,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let (m, n) = (scene.m(), scene.n());
    let rows = pred_labels(m);
    let cols = gt_labels(n);
    let mut written = Vec::new();

    let header = [
        "matcher",
        "transport_cost",
        "hard_cost",
        "pairs",
        "background",
        "precision",
        "recall",
        "f1",
        "threshold_pairs",
        "threshold_precision",
        "threshold_recall",
        "threshold_f1",
        "iterations",
        "converged",
        "cost_sha256",
    ];
    let body: Vec<Vec<String>> = comparison
        .records
        .iter()
        .map(|r| {
            vec![
                r.matcher.clone(),
                g17(r.total_cost),
                g17(r.hard_cost),
                r.argmax.pairs.len().to_string(),
                r.argmax.background.len().to_string(),
                g17(r.argmax_quality.precision),
                g17(r.argmax_quality.recall),
                g17(r.argmax_quality.f1),
                r.thresholded.pairs.len().to_string(),
                g17(r.threshold_quality.precision),
                g17(r.threshold_quality.recall),
                g17(r.threshold_quality.f1),
                r.iterations.to_string(),
                r.converged.to_string(),
                r.cost_hash.clone(),
            ]
        })
        .collect();
    let path = out_dir.join("comparison.csv");
    write_csv(&path, &header, &body)?;
    written.push(path);

    for r in &comparison.records {
        let path = out_dir.join(format!("plan_{}.csv", r.matcher));
        write_matrix_csv(&path, r.plan.gamma().view(), &rows, &cols)?;
        written.push(path);

        let path = out_dir.join(format!("heatmap_{}.svg", r.matcher));
        if r.argmax.one_to_one && r.iterations == 0 {
            let grid = assignment_with_background(&r.argmax, m, n);
            emit_heatmap(
                grid.view(),
                &HeatmapLabels::for_plan(&r.matcher, m, n, true),
                &path,
            )?;
        } else {
            emit_heatmap(
                r.plan.gamma().view(),
                &HeatmapLabels::for_plan(&r.matcher, m, n, false),
                &path,
            )?;
        }
        written.push(path);
    }

    let path = out_dir.join("cost.csv");
    write_matrix_csv(&path, comparison.cost.view(), &rows, &cols)?;
    written.push(path);
    let path = out_dir.join("heatmap_cost.svg");
    emit_heatmap(
        comparison.cost.view(),
        &HeatmapLabels::for_plan("cost", m, n, false),
        &path,
    )?;
    written.push(path);

    let similarity = Array2::from_shape_fn((m, n), |(j, i)| {
        giou_rescaled(&scene.predictions()[j].bbox, &scene.ground_truths()[i].bbox)
    });
    let path = out_dir.join("giou_similarity.csv");
    write_matrix_csv(&path, similarity.view(), &rows, &cols)?;
    written.push(path);
    let path = out_dir.join("giou_cost.csv");
    write_matrix_csv(&path, similarity.mapv(|s| 1.0 - s).view(), &rows, &cols)?;
    written.push(path);

    if !comparison.notes.is_empty() {
        let path = out_dir.join("notes.txt");
        std::fs::write(&path, comparison.notes.join("\n") + "\n")?;
        written.push(path);
    }
    Ok(written)
}
