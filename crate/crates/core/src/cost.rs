//! Pairwise matching costs between predictions (rows) and ground truths
//! (columns), and background augmentation for one-to-one solvers.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::geometry::{giou, l1_box_distance};
use crate::scenes::{Scene, PROB_SUM_TOL};

/// Probabilities are floored here before taking the log.
pub const PROB_FLOOR: f64 = 1e-8;

/// Form of the classification term for a probability `p`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ClassCost {
    /// `−log p`, with `p` floored at [`PROB_FLOOR`].
    #[default]
    NegLog,
    /// `1 − p`.
    OneMinus,
}

impl ClassCost {
    pub fn of(self, p: f64) -> f64 {
        match self {
            ClassCost::NegLog => -p.max(PROB_FLOOR).ln(),
            ClassCost::OneMinus => 1.0 - p,
        }
    }
}

/// Weights of the classification, L1 box and GIoU terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub lambda_class: f64,
    pub lambda_bbox: f64,
    pub lambda_giou: f64,
    pub class_cost: ClassCost,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            lambda_class: 1.0,
            lambda_bbox: 5.0,
            lambda_giou: 2.0,
            class_cost: ClassCost::NegLog,
        }
    }
}

impl CostWeights {
    pub fn new(lambda_class: f64, lambda_bbox: f64, lambda_giou: f64) -> Result<Self> {
        let w = Self {
            lambda_class,
            lambda_bbox,
            lambda_giou,
            class_cost: ClassCost::NegLog,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn with_class_cost(self, class_cost: ClassCost) -> Self {
        Self { class_cost, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_class", self.lambda_class),
            ("lambda_bbox", self.lambda_bbox),
            ("lambda_giou", self.lambda_giou),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// `M x N` cost matrix; rows are predictions, columns ground truths.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: Array2<f64>,
    weights: Option<CostWeights>,
}

impl CostMatrix {
    /// Wraps an externally computed matrix. Entries must be finite and
    /// nonnegative, and both dimensions nonzero.
    pub fn from_array(values: Array2<f64>) -> Result<Self> {
        let (m, n) = values.dim();
        if m == 0 || n == 0 {
            return Err(Error::InvalidCost(format!("empty {m}x{n} matrix")));
        }
        if let Some(((j, i), v)) = values
            .indexed_iter()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidCost(format!(
                "entry ({j}, {i}) = {v} is not finite and nonnegative"
            )));
        }
        Ok(Self {
            values,
            weights: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidCost("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), n), flat)
            .map_err(|e| Error::InvalidCost(e.to_string()))?;
        Self::from_array(values)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn weights(&self) -> Option<&CostWeights> {
        self.weights.as_ref()
    }

    /// Number of predictions.
    pub fn m(&self) -> usize {
        self.values.nrows()
    }

    /// Number of ground truths.
    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn max_entry(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Multiplies every entry by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        Ok(Self {
            values: &self.values * factor,
            weights: self.weights,
        })
    }
}

/// `-log p(gt_class)` with `p` floored at [`PROB_FLOOR`].
pub fn classification_cost(class_probs: &[f64], gt_class: usize) -> Result<f64> {
    class_probability(class_probs, gt_class).map(|p| ClassCost::NegLog.of(p))
}

fn class_probability(class_probs: &[f64], gt_class: usize) -> Result<f64> {
    let p = *class_probs.get(gt_class).ok_or_else(|| {
        Error::MalformedScene(format!(
            "class index {gt_class} out of range for {} probabilities",
            class_probs.len()
        ))
    })?;
    let sum: f64 = class_probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::MalformedScene(format!(
            "class probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(p)
}

/// Builds `C[j][i] = λ_class·(−log p_j(c_i)) + λ_bbox·L1(b_i, b̂_j) + λ_giou·(1 − GIoU(b_i, b̂_j))`,
/// with `1 − p_j(c_i)` in place of the log term under [`ClassCost::OneMinus`].
pub fn pairwise_cost_matrix(scene: &Scene, weights: &CostWeights) -> Result<CostMatrix> {
    weights.validate()?;
    let (m, n) = (scene.m(), scene.n());
    if m == 0 || n == 0 {
        return Err(Error::DegenerateScene(format!(
            "{m} predictions and {n} ground truths; both must be nonzero"
        )));
    }
    let mut values = Array2::zeros((m, n));
    for (j, pred) in scene.predictions().iter().enumerate() {
        for (i, gt) in scene.ground_truths().iter().enumerate() {
            let class_term = weights
                .class_cost
                .of(class_probability(&pred.class_probs, gt.class_id)?);
            let l1 = l1_box_distance(&gt.bbox, &pred.bbox);
            let giou_term = 1.0 - giou(&gt.bbox, &pred.bbox);
            values[[j, i]] = weights.lambda_class * class_term
                + weights.lambda_bbox * l1
                + weights.lambda_giou * giou_term;
        }
    }
    Ok(CostMatrix {
        values,
        weights: Some(*weights),
    })
}

/// How each prediction is priced when it is sent to the background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackgroundCost {
    Constant(f64),
    /// The classification term of the no-object slot, `λ_class · (−log q)`
    /// or `λ_class · (1 − q)`, for predictions carrying that slot; the
    /// fallback constant otherwise.
    NoObject {
        fallback: f64,
    },
}

impl Default for BackgroundCost {
    fn default() -> Self {
        BackgroundCost::NoObject { fallback: 1.0 }
    }
}

impl BackgroundCost {
    /// Resolves the per-prediction background cost for a scene.
    pub fn per_prediction(&self, scene: &Scene, weights: &CostWeights) -> Vec<f64> {
        match *self {
            BackgroundCost::Constant(c) => vec![c; scene.m()],
            BackgroundCost::NoObject { fallback } => scene
                .predictions()
                .iter()
                .map(|p| match p.no_object_prob(scene.num_classes()) {
                    Some(q) => weights.lambda_class * weights.class_cost.of(q),
                    None => fallback,
                })
                .collect(),
        }
    }
}

/// A square `M x M` cost matrix whose first `n_gt` columns are real ground
/// truths and the rest virtual background targets.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCost {
    pub matrix: Array2<f64>,
    pub n_gt: usize,
}

/// Appends `M − N` background columns filled with the constant `bg_cost`.
pub fn background_augmented_cost(cost: &CostMatrix, bg_cost: f64) -> Result<AugmentedCost> {
    background_augmented_cost_per_row(cost, &vec![bg_cost; cost.m()])
}

/// Background augmentation with a per-prediction background cost.
pub fn background_augmented_cost_per_row(
    cost: &CostMatrix,
    bg_costs: &[f64],
) -> Result<AugmentedCost> {
    let (m, n) = (cost.m(), cost.n());
    if m < n {
        return Err(Error::UnsupportedDirection { pred: m, gt: n });
    }
    if bg_costs.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} background costs for {m} predictions",
            bg_costs.len()
        )));
    }
    if let Some(bad) = bg_costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "background cost must be finite and >= 0, got {bad}"
        )));
    }
    let mut matrix = Array2::zeros((m, m));
    for j in 0..m {
        for i in 0..n {
            matrix[[j, i]] = cost.values[[j, i]];
        }
        for i in n..m {
            matrix[[j, i]] = bg_costs[j];
        }
    }
    Ok(AugmentedCost { matrix, n_gt: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::scenes::{GroundTruth, Prediction};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn one_pair(p_true: f64, gt_box: BBox, pred_box: BBox) -> Scene {
        Scene::new(
            vec![GroundTruth {
                class_id: 0,
                bbox: gt_box,
            }],
            vec![Prediction {
                class_probs: vec![p_true, 1.0 - p_true],
                bbox: pred_box,
                source: Some(0),
            }],
            2,
            0,
        )
        .unwrap()
    }

    #[test]
    fn one_minus_class_cost() {
        let b = BBox::new(0.5, 0.5, 0.2, 0.2).unwrap();
        let scene = one_pair(0.75, b, b);
        let w = CostWeights::new(1.0, 0.0, 0.0)
            .unwrap()
            .with_class_cost(ClassCost::OneMinus);
        let c = pairwise_cost_matrix(&scene, &w).unwrap();
        assert_abs_diff_eq!(c.values()[[0, 0]], 0.25, epsilon = 1e-15);
        let neglog =
            pairwise_cost_matrix(&scene, &CostWeights::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(neglog.values()[[0, 0]], -(0.75f64).ln(), epsilon = 1e-15);
    }

    #[test]
    fn classification_cost_examples() {
        assert_eq!(classification_cost(&[1.0, 0.0], 0).unwrap(), 0.0);
        let e = (-1.0f64).exp();
        assert_abs_diff_eq!(
            classification_cost(&[e, 1.0 - e], 0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            classification_cost(&[1.0, 0.0], 1).unwrap(),
            -(1e-8f64).ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            classification_cost(&[1.0, 0.0], 1).unwrap(),
            18.420680743952367,
            epsilon = 1e-9
        );
        assert!(matches!(
            classification_cost(&[1.0], 3),
            Err(Error::MalformedScene(_))
        ));
        assert!(classification_cost(&[0.5, 0.4], 0).is_err());
    }

    #[test]
    fn pairwise_examples() {
        let w = CostWeights::default();
        let b = BBox::new(0.5, 0.5, 0.2, 0.2).unwrap();
        let c = pairwise_cost_matrix(&one_pair(1.0, b, b), &w).unwrap();
        assert_eq!(c.values()[[0, 0]], 0.0);

        let e = (-1.0f64).exp();
        let c = pairwise_cost_matrix(&one_pair(e, b, b), &w).unwrap();
        assert_abs_diff_eq!(c.values()[[0, 0]], 1.0, epsilon = 1e-12);

        let a = BBox::new(0.5, 0.5, 1.0, 1.0).unwrap();
        let shifted = BBox::new(1.0, 0.5, 1.0, 1.0).unwrap();
        let c = pairwise_cost_matrix(&one_pair(1.0, a, shifted), &w).unwrap();
        // 5 * 0.5 + 2 * (1 - 1/3)
        assert_abs_diff_eq!(c.values()[[0, 0]], 2.5 + 4.0 / 3.0, epsilon = 1e-12);
        assert_eq!(c.weights(), Some(&w));
    }

    #[test]
    fn self_scene_has_zero_diagonal() {
        let gts: Vec<GroundTruth> = (0..4)
            .map(|i| GroundTruth {
                class_id: i % 3,
                bbox: BBox::new(0.2 + 0.2 * i as f64, 0.5, 0.1, 0.2).unwrap(),
            })
            .collect();
        let scene = Scene::self_scene(gts, 3).unwrap();
        let c = pairwise_cost_matrix(&scene, &CostWeights::default()).unwrap();
        for i in 0..4 {
            assert_eq!(c.values()[[i, i]], 0.0);
        }
    }

    #[test]
    fn augmentation() {
        let c = CostMatrix::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]]).unwrap();
        let aug = background_augmented_cost(&c, 0.7).unwrap();
        assert_eq!(aug.matrix.dim(), (3, 3));
        assert_eq!(aug.n_gt, 2);
        assert!(aug.matrix.column(2).iter().all(|v| *v == 0.7));
        assert_eq!(aug.matrix[[1, 0]], 0.3);

        let square = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(
            &background_augmented_cost(&square, 9.0).unwrap().matrix,
            square.values()
        );

        let wide = CostMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            background_augmented_cost(&wide, 1.0),
            Err(Error::UnsupportedDirection { pred: 1, gt: 2 })
        ));
    }

    #[test]
    fn background_cost_uses_no_object_slot() {
        let b = BBox::new(0.5, 0.5, 0.2, 0.2).unwrap();
        let scene = Scene::new(
            vec![GroundTruth {
                class_id: 0,
                bbox: b,
            }],
            vec![
                Prediction {
                    class_probs: vec![0.5, 0.25, 0.25],
                    bbox: b,
                    source: None,
                },
                Prediction {
                    class_probs: vec![0.5, 0.5],
                    bbox: b,
                    source: None,
                },
            ],
            2,
            0,
        )
        .unwrap();
        let w = CostWeights::default();
        let bg = BackgroundCost::default().per_prediction(&scene, &w);
        assert_abs_diff_eq!(bg[0], 4.0f64.ln(), epsilon = 1e-12);
        assert_eq!(bg[1], 1.0);
    }

    #[test]
    fn rejects_empty_and_invalid_matrices() {
        assert!(CostMatrix::from_array(Array2::zeros((0, 3))).is_err());
        assert!(CostMatrix::from_rows(&[vec![1.0, f64::NAN]]).is_err());
        assert!(CostMatrix::from_rows(&[vec![1.0, -0.5]]).is_err());
        assert!(CostWeights::new(1.0, -1.0, 2.0).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.1..0.9f64, 0.1..0.9f64, 0.02..0.4f64, 0.02..0.4f64)
            .prop_map(|(cx, cy, w, h)| BBox::new(cx, cy, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn cost_monotone_in_weights(
            p in 0.0..1.0f64, a in arb_box(), b in arb_box(),
            base in (0.0..3.0f64, 0.0..6.0f64, 0.0..3.0f64),
            bump in 0.0..2.0f64, which in 0usize..3,
        ) {
            let scene = one_pair(p, a, b);
            let w0 = CostWeights::new(base.0, base.1, base.2).unwrap();
            let mut w1 = w0;
            match which {
                0 => w1.lambda_class += bump,
                1 => w1.lambda_bbox += bump,
                _ => w1.lambda_giou += bump,
            }
            let c0 = pairwise_cost_matrix(&scene, &w0).unwrap().values()[[0, 0]];
            let c1 = pairwise_cost_matrix(&scene, &w1).unwrap().values()[[0, 0]];
            prop_assert!(c1 >= c0 - 1e-12);
            prop_assert!(c0 >= 0.0);
        }

        #[test]
        fn giou_only_cost_in_range(a in arb_box(), b in arb_box(), lg in 0.0..5.0f64) {
            let scene = one_pair(0.3, a, b);
            let w = CostWeights::new(0.0, 0.0, lg).unwrap();
            let c = pairwise_cost_matrix(&scene, &w).unwrap().values()[[0, 0]];
            prop_assert!(c >= 0.0 && c <= 2.0 * lg + 1e-12);
        }
    }
}
