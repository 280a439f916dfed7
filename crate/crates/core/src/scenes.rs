//! Synthetic detection scenes: ground truths, predictions with class
//! probabilities, and their on-disk JSON form.
//!
//! Generation uses ChaCha8 seeded from the scene seed, so a given
//! `(SceneConfig, seed)` pair yields the same scene on every platform.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::numfmt::g17;

/// Tolerance on `sum(class_probs) == 1`.
pub const PROB_SUM_TOL: f64 = 1e-6;

/// Smallest side length a generated box may have after jitter and clamping.
pub const MIN_BOX_SIDE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub class_id: usize,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Probabilities over the scene's classes, optionally followed by one
    /// trailing "no-object" slot.
    pub class_probs: Vec<f64>,
    pub bbox: BBox,
    /// Index of the ground truth this prediction was spawned from; `None`
    /// for clutter or when provenance is unknown.
    pub source: Option<usize>,
}

impl Prediction {
    /// Probability of the trailing no-object slot, when the prediction has one.
    pub fn no_object_prob(&self, num_classes: usize) -> Option<f64> {
        (self.class_probs.len() == num_classes + 1).then(|| self.class_probs[num_classes])
    }

    /// Largest probability over real classes.
    pub fn confidence(&self, num_classes: usize) -> f64 {
        self.class_probs[..num_classes]
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    ground_truths: Vec<GroundTruth>,
    predictions: Vec<Prediction>,
    num_classes: usize,
    seed: u64,
}

impl Scene {
    pub fn new(
        ground_truths: Vec<GroundTruth>,
        predictions: Vec<Prediction>,
        num_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::MalformedScene(
                "num_classes must be at least 1".into(),
            ));
        }
        if ground_truths.is_empty() {
            return Err(Error::DegenerateScene("ground_truths is empty".into()));
        }
        if predictions.is_empty() {
            return Err(Error::DegenerateScene("predictions is empty".into()));
        }
        for (i, gt) in ground_truths.iter().enumerate() {
            if gt.class_id >= num_classes {
                return Err(Error::MalformedScene(format!(
                    "ground_truths[{i}].class_id: {} out of range for {num_classes} classes",
                    gt.class_id
                )));
            }
        }
        for (j, p) in predictions.iter().enumerate() {
            validate_probs(&p.class_probs, num_classes).map_err(|msg| {
                Error::MalformedScene(format!("predictions[{j}].class_probs: {msg}"))
            })?;
            if let Some(src) = p.source {
                if src >= ground_truths.len() {
                    return Err(Error::MalformedScene(format!(
                        "predictions[{j}].source: {src} out of range for {} ground truths",
                        ground_truths.len()
                    )));
                }
            }
        }
        Ok(Self {
            ground_truths,
            predictions,
            num_classes,
            seed,
        })
    }

    pub fn ground_truths(&self) -> &[GroundTruth] {
        &self.ground_truths
    }

    pub fn predictions(&self) -> &[Prediction] {
        &self.predictions
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of predictions (rows of the cost matrix).
    pub fn m(&self) -> usize {
        self.predictions.len()
    }

    /// Number of ground truths (columns of the cost matrix).
    pub fn n(&self) -> usize {
        self.ground_truths.len()
    }

    /// Builds a scene whose predictions are exact one-hot copies of the
    /// given ground truths.
    pub fn self_scene(ground_truths: Vec<GroundTruth>, num_classes: usize) -> Result<Self> {
        let predictions = ground_truths
            .iter()
            .enumerate()
            .map(|(i, gt)| Prediction {
                class_probs: one_hot(gt.class_id, num_classes),
                bbox: gt.bbox,
                source: Some(i),
            })
            .collect();
        Self::new(ground_truths, predictions, num_classes, 0)
    }
}

fn validate_probs(probs: &[f64], num_classes: usize) -> std::result::Result<(), String> {
    if probs.len() != num_classes && probs.len() != num_classes + 1 {
        return Err(format!(
            "length {} does not match {num_classes} classes (or {} with a no-object slot)",
            probs.len(),
            num_classes + 1
        ));
    }
    if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(format!("entry {bad} is not a nonnegative probability"));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(format!("probabilities sum to {sum}, expected 1"));
    }
    Ok(())
}

fn one_hot(class: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[class] = 1.0;
    v
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Parameters of the synthetic scene generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub n_objects: usize,
    /// Mean of the Poisson-distributed number of extra predictions per object.
    pub duplicates_per_object: f64,
    /// Probability that an object spawns no prediction at all.
    pub miss_rate: f64,
    /// Standard deviation of the Gaussian jitter on each box coordinate.
    pub box_jitter: f64,
    /// Class-probability noise level in `[0, 1]`; 0 gives exact one-hot predictions.
    pub class_noise: f64,
    pub num_classes: usize,
    /// Number of spurious predictions drawn uniformly over the image.
    pub clutter: usize,
    /// Append a no-object probability slot to every prediction.
    pub no_object: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_objects: 4,
            duplicates_per_object: 0.5,
            miss_rate: 0.0,
            box_jitter: 0.02,
            class_noise: 0.2,
            num_classes: 5,
            clutter: 1,
            no_object: false,
        }
    }
}

impl SceneConfig {
    /// Settings for the canonical four-object, six-prediction scene used to
    /// reproduce the matcher comparison; pair with [`FIG2_SEED`].
    pub fn fig2() -> Self {
        Self {
            n_objects: 4,
            duplicates_per_object: 0.5,
            miss_rate: 0.0,
            box_jitter: 0.015,
            class_noise: 0.2,
            num_classes: 5,
            clutter: 0,
            no_object: false,
        }
    }

    /// Duplicate-heavy settings: several near-identical predictions per object.
    pub fn duplicate_heavy() -> Self {
        Self {
            n_objects: 4,
            duplicates_per_object: 2.0,
            miss_rate: 0.0,
            box_jitter: 0.02,
            class_noise: 0.2,
            num_classes: 5,
            clutter: 1,
            no_object: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} must be in [0, 1], got {v}"
                )))
            }
        };
        prob("miss_rate", self.miss_rate)?;
        prob("class_noise", self.class_noise)?;
        if !(self.box_jitter >= 0.0 && self.box_jitter.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "box_jitter must be finite and >= 0, got {}",
                self.box_jitter
            )));
        }
        if !(self.duplicates_per_object >= 0.0 && self.duplicates_per_object.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "duplicates_per_object must be finite and >= 0, got {}",
                self.duplicates_per_object
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidParameter(
                "num_classes must be at least 1".into(),
            ));
        }
        if self.n_objects == 0 {
            return Err(Error::DegenerateScene(
                "generator config has n_objects = 0, so the scene would have no ground truths"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Seed that makes [`SceneConfig::fig2`] produce four objects and six
/// predictions, two of them duplicates.
pub const FIG2_SEED: u64 = 2;

/// Generates a scene deterministically from `(config, seed)`.
///
/// Every object spawns `1 + Poisson(duplicates_per_object)` jittered
/// predictions unless it is dropped with probability `miss_rate`; clutter
/// predictions follow. Predictions are padded with clutter until there are
/// at least as many predictions as objects.
pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<Scene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.num_classes;

    let ground_truths: Vec<GroundTruth> = (0..config.n_objects)
        .map(|_| {
            let class_id = rng.gen_range(0..k);
            let w = rng.gen_range(0.05..0.3);
            let h = rng.gen_range(0.05..0.3);
            let cx = rng.gen_range(w / 2.0..1.0 - w / 2.0);
            let cy = rng.gen_range(h / 2.0..1.0 - h / 2.0);
            GroundTruth {
                class_id,
                bbox: BBox::new(cx, cy, w, h).expect("positive extent"),
            }
        })
        .collect();

    let jitter = (config.box_jitter > 0.0)
        .then(|| Normal::new(0.0, config.box_jitter).expect("valid jitter"));
    let dupes = (config.duplicates_per_object > 0.0)
        .then(|| Poisson::new(config.duplicates_per_object).expect("valid mean"));
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut predictions = Vec::new();
    for (i, gt) in ground_truths.iter().enumerate() {
        if rng.gen::<f64>() < config.miss_rate {
            continue;
        }
        let extra = dupes.map_or(0, |d| d.sample(&mut rng) as usize);
        for _ in 0..=extra {
            let bbox = match &jitter {
                Some(noise) => jitter_box(&gt.bbox, noise, &mut rng),
                None => gt.bbox,
            };
            let class_probs = if config.class_noise == 0.0 {
                let mut probs = one_hot(gt.class_id, k);
                if config.no_object {
                    probs.push(0.0);
                }
                probs
            } else {
                let mut logits: Vec<f64> = (0..k)
                    .map(|c| {
                        let signal = if c == gt.class_id {
                            1.0 / config.class_noise
                        } else {
                            0.0
                        };
                        signal + unit.sample(&mut rng)
                    })
                    .collect();
                if config.no_object {
                    logits.push(unit.sample(&mut rng));
                }
                softmax(&logits)
            };
            predictions.push(Prediction {
                class_probs,
                bbox,
                source: Some(i),
            });
        }
    }

    let clutter_needed = config
        .clutter
        .max(ground_truths.len().saturating_sub(predictions.len()));
    for _ in 0..clutter_needed {
        predictions.push(clutter_prediction(config, &unit, &mut rng));
    }

    Scene::new(ground_truths, predictions, k, seed)
}

fn jitter_box(b: &BBox, noise: &Normal<f64>, rng: &mut ChaCha8Rng) -> BBox {
    let cx = b.cx() + noise.sample(rng);
    let cy = b.cy() + noise.sample(rng);
    let w = (b.w() + noise.sample(rng)).max(MIN_BOX_SIDE);
    let h = (b.h() + noise.sample(rng)).max(MIN_BOX_SIDE);
    let jittered = BBox::new(cx, cy, w, h).expect("positive extent");
    let (x0, y0, x1, y1) = jittered.corners();
    if x0 < 0.0 || y0 < 0.0 || x1 > 1.0 || y1 > 1.0 {
        jittered.clamp_to_unit(MIN_BOX_SIDE)
    } else {
        jittered
    }
}

fn clutter_prediction(
    config: &SceneConfig,
    unit: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Prediction {
    let w = rng.gen_range(0.05..0.3);
    let h = rng.gen_range(0.05..0.3);
    let cx = rng.gen_range(w / 2.0..1.0 - w / 2.0);
    let cy = rng.gen_range(h / 2.0..1.0 - h / 2.0);
    let mut logits: Vec<f64> = (0..config.num_classes).map(|_| unit.sample(rng)).collect();
    if config.no_object {
        logits.push(2.0 + unit.sample(rng));
    }
    Prediction {
        class_probs: softmax(&logits),
        bbox: BBox::new(cx, cy, w, h).expect("positive extent"),
        source: None,
    }
}

/// Serializes a scene to its JSON document form, numbers at 17 significant digits.
pub fn scene_to_json(scene: &Scene) -> String {
    let fmt_list = |v: &[f64]| v.iter().map(|x| g17(*x)).collect::<Vec<_>>().join(", ");
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"num_classes\": {},", scene.num_classes);
    let _ = writeln!(out, "  \"seed\": {},", scene.seed);
    out.push_str("  \"ground_truths\": [\n");
    for (i, gt) in scene.ground_truths.iter().enumerate() {
        let sep = if i + 1 < scene.ground_truths.len() {
            ","
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "    {{\"class_id\": {}, \"box\": [{}]}}{sep}",
            gt.class_id,
            fmt_list(&gt.bbox.to_array())
        );
    }
    out.push_str("  ],\n");
    out.push_str("  \"predictions\": [\n");
    for (j, p) in scene.predictions.iter().enumerate() {
        let sep = if j + 1 < scene.predictions.len() {
            ","
        } else {
            ""
        };
        let source = p.source.map_or("null".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "    {{\"class_probs\": [{}], \"box\": [{}], \"source\": {source}}}{sep}",
            fmt_list(&p.class_probs),
            fmt_list(&p.bbox.to_array())
        );
    }
    out.push_str("  ]\n}\n");
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    num_classes: usize,
    #[serde(default)]
    seed: u64,
    ground_truths: Vec<RawGroundTruth>,
    predictions: Vec<RawPrediction>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroundTruth {
    class_id: usize,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrediction {
    class_probs: Vec<f64>,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    #[serde(default)]
    source: Option<usize>,
}

/// Parses and validates a scene document.
pub fn scene_from_json(text: &str) -> Result<Scene> {
    let raw: RawScene = serde_json::from_str(text).map_err(|e| {
        Error::MalformedScene(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    let ground_truths = raw
        .ground_truths
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            let bbox = BBox::try_from(g.bbox)
                .map_err(|e| Error::MalformedScene(format!("ground_truths[{i}].box: {e}")))?;
            Ok(GroundTruth {
                class_id: g.class_id,
                bbox,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let predictions = raw
        .predictions
        .into_iter()
        .enumerate()
        .map(|(j, p)| {
            let bbox = BBox::try_from(p.bbox)
                .map_err(|e| Error::MalformedScene(format!("predictions[{j}].box: {e}")))?;
            Ok(Prediction {
                class_probs: p.class_probs,
                bbox,
                source: p.source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Scene::new(ground_truths, predictions, raw.num_classes, raw.seed)
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, scene_to_json(scene))?;
    Ok(())
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::SceneFile {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    scene_from_json(&text).map_err(|e| Error::SceneFile {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{pairwise_cost_matrix, CostWeights};

    fn noiseless(n: usize) -> SceneConfig {
        SceneConfig {
            n_objects: n,
            duplicates_per_object: 0.0,
            miss_rate: 0.0,
            box_jitter: 0.0,
            class_noise: 0.0,
            num_classes: 3,
            clutter: 0,
            no_object: false,
        }
    }

    #[test]
    fn noiseless_predictions_copy_ground_truths() {
        let scene = generate_scene(&noiseless(5), 11).unwrap();
        assert_eq!(scene.m(), 5);
        for (gt, p) in scene.ground_truths().iter().zip(scene.predictions()) {
            assert_eq!(gt.bbox, p.bbox);
            assert_eq!(p.class_probs[gt.class_id], 1.0);
        }
        let cost = pairwise_cost_matrix(&scene, &CostWeights::default()).unwrap();
        for i in 0..5 {
            assert_eq!(cost.values()[[i, i]], 0.0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SceneConfig::default();
        assert_eq!(
            generate_scene(&cfg, 42).unwrap(),
            generate_scene(&cfg, 42).unwrap()
        );
        assert_ne!(
            generate_scene(&cfg, 42).unwrap(),
            generate_scene(&cfg, 43).unwrap()
        );
    }

    #[test]
    fn predictions_never_fewer_than_objects() {
        let cfg = SceneConfig {
            n_objects: 4,
            duplicates_per_object: 0.5,
            clutter: 1,
            ..SceneConfig::default()
        };
        for seed in 0..100 {
            let scene = generate_scene(&cfg, seed).unwrap();
            assert_eq!(scene.n(), 4);
            assert!(scene.m() >= 4, "seed {seed}: m = {}", scene.m());
        }
        let lossy = SceneConfig {
            miss_rate: 0.9,
            clutter: 0,
            ..cfg
        };
        for seed in 0..50 {
            let scene = generate_scene(&lossy, seed).unwrap();
            assert!(scene.m() >= scene.n());
        }
    }

    #[test]
    fn boxes_stay_in_unit_square() {
        let cfg = SceneConfig {
            box_jitter: 0.3,
            duplicates_per_object: 1.0,
            clutter: 3,
            ..SceneConfig::default()
        };
        for seed in 0..50 {
            let scene = generate_scene(&cfg, seed).unwrap();
            for p in scene.predictions() {
                let (x0, y0, x1, y1) = p.bbox.corners();
                assert!(x0 >= -1e-12 && y0 >= -1e-12 && x1 <= 1.0 + 1e-12 && y1 <= 1.0 + 1e-12);
                assert!(p.bbox.w() > 0.0 && p.bbox.h() > 0.0);
            }
        }
    }

    #[test]
    fn no_object_slot_is_appended() {
        let cfg = SceneConfig {
            no_object: true,
            ..SceneConfig::default()
        };
        let scene = generate_scene(&cfg, 3).unwrap();
        for p in scene.predictions() {
            assert_eq!(p.class_probs.len(), cfg.num_classes + 1);
            assert!(p.no_object_prob(cfg.num_classes).is_some());
        }
    }

    #[test]
    fn fig2_seed_gives_four_objects_six_predictions() {
        let scene = generate_scene(&SceneConfig::fig2(), FIG2_SEED).unwrap();
        assert_eq!(scene.n(), 4);
        assert_eq!(scene.m(), 6);
        assert!(scene.predictions().iter().all(|p| p.source.is_some()));
    }

    #[test]
    fn zero_objects_is_an_error() {
        let cfg = SceneConfig {
            n_objects: 0,
            ..SceneConfig::default()
        };
        assert!(matches!(
            generate_scene(&cfg, 1),
            Err(Error::DegenerateScene(_))
        ));
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let cfg = SceneConfig {
            no_object: true,
            clutter: 2,
            ..SceneConfig::default()
        };
        for seed in [0, 1, u64::MAX] {
            let scene = generate_scene(&cfg, seed).unwrap();
            let back = scene_from_json(&scene_to_json(&scene)).unwrap();
            assert_eq!(back, scene);
        }
    }

    #[test]
    fn rejects_bad_probabilities() {
        let doc = r#"{"num_classes": 2, "seed": 0,
            "ground_truths": [{"class_id": 0, "box": [0.5, 0.5, 0.1, 0.1]}],
            "predictions": [{"class_probs": [0.5, 0.4], "box": [0.5, 0.5, 0.1, 0.1]}]}"#;
        let err = scene_from_json(doc).unwrap_err().to_string();
        assert!(err.contains("predictions[0].class_probs"), "{err}");
    }

    #[test]
    fn rejects_empty_ground_truths() {
        let doc = r#"{"num_classes": 2, "seed": 0, "ground_truths": [],
            "predictions": [{"class_probs": [0.5, 0.5], "box": [0.5, 0.5, 0.1, 0.1]}]}"#;
        assert!(matches!(
            scene_from_json(doc),
            Err(Error::DegenerateScene(_))
        ));
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = scene_from_json("{\n  \"num_classes\": 2,\n  oops\n}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn rejects_zero_area_box_with_field_path() {
        let doc = r#"{"num_classes": 1, "seed": 0,
            "ground_truths": [{"class_id": 0, "box": [0.5, 0.5, 0.0, 0.1]}],
            "predictions": [{"class_probs": [1.0], "box": [0.5, 0.5, 0.1, 0.1]}]}"#;
        let err = scene_from_json(doc).unwrap_err().to_string();
        assert!(err.contains("ground_truths[0].box"), "{err}");
    }
}
