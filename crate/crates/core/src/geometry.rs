//! Axis-aligned boxes in normalized center-size form and the overlap
//! metrics the matching cost is built from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `(cx, cy, w, h)` in normalized image coordinates.
///
/// Width and height are strictly positive; zero-area boxes are rejected at
/// construction so every metric below is total on valid inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if ![cx, cy, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite coordinate in ({cx}, {cy}, {w}, {h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "width and height must be positive, got w={w}, h={h}"
            )));
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Builds a box from corner coordinates.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    /// `(x_min, y_min, x_max, y_max)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        let hw = self.w / 2.0;
        let hh = self.h / 2.0;
        (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.cx + dx, self.cy + dy, self.w, self.h)
    }

    /// Clips the box to the unit square, keeping at least `min_side` of
    /// extent on each axis.
    pub fn clamp_to_unit(&self, min_side: f64) -> Self {
        let (x0, y0, x1, y1) = self.corners();
        let (x0, x1) = clamp_interval(x0, x1, min_side);
        let (y0, y1) = clamp_interval(y0, y1, min_side);
        Self {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }
}

fn clamp_interval(lo: f64, hi: f64, min_side: f64) -> (f64, f64) {
    let lo = lo.clamp(0.0, 1.0 - min_side);
    let hi = hi.clamp(lo + min_side, 1.0);
    (lo, hi)
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

fn corner_area(b: &BBox) -> f64 {
    let (x0, y0, x1, y1) = b.corners();
    (x1 - x0) * (y1 - y0)
}

fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    iw * ih
}

fn enclosing_area(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    (ax1.max(bx1) - ax0.min(bx0)) * (ay1.max(by1) - ay0.min(by0))
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = corner_area(a) + corner_area(b) - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Generalized IoU: IoU minus the share of the enclosing box not covered by
/// the union. Lies in `[-1, 1]`.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = corner_area(a) + corner_area(b) - inter;
    let enclosing = enclosing_area(a, b);
    let value = inter / union - (enclosing - union) / enclosing;
    value.clamp(-1.0, 1.0)
}

/// GIoU mapped affinely onto `[0, 1]` via `(g + 1) / 2`.
pub fn giou_rescaled(a: &BBox, b: &BBox) -> f64 {
    (giou(a, b) + 1.0) / 2.0
}

/// Sum of absolute differences over `(cx, cy, w, h)`.
pub fn l1_box_distance(a: &BBox, b: &BBox) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array().iter())
        .map(|(x, y)| (x - y).abs())
        .sum()
}
