use std::fmt::Write as _;
use std::path::Path;

use ndarray::ArrayView2;

use crate::error::{Error, Result};

pub const MAX_HEATMAP_SIDE: usize = 64;

const CELL: usize = 56;
const MARGIN: usize = 48;
const TITLE_H: usize = 28;

/// Title and axis headers of a heatmap.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapLabels {
    pub title: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
}

impl HeatmapLabels {
    /// `p0..p{m-1}` rows and `g0..g{n-1}` columns, with a trailing `bg`
    /// column when `with_background` is set.
    pub fn for_plan(title: impl Into<String>, m: usize, n: usize, with_background: bool) -> Self {
        let mut cols = super::gt_labels(n);
        if with_background {
            cols.push("bg".into());
        }
        Self {
            title: title.into(),
            rows: super::pred_labels(m),
            cols,
        }
    }
}

/// Writes `matrix` as a standalone SVG grid with one numeric label per cell.
///
/// Cell shading is linear in the value between the matrix minimum (white)
/// and maximum (dark blue).
pub fn emit_heatmap(
    matrix: ArrayView2<'_, f64>,
    labels: &HeatmapLabels,
    path: &Path,
) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::InvalidParameter("heatmap path is empty".into()));
    }
    let (rows, cols) = matrix.dim();
    if rows > MAX_HEATMAP_SIDE || cols > MAX_HEATMAP_SIDE {
        return Err(Error::HeatmapTooLarge { rows, cols });
    }
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter("heatmap matrix is empty".into()));
    }
    if labels.rows.len() != rows || labels.cols.len() != cols {
        return Err(Error::DimensionMismatch(format!(
            "{} row and {} column labels for a {rows}x{cols} matrix",
            labels.rows.len(),
            labels.cols.len()
        )));
    }
    if let Some(v) = matrix.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "heatmap entry {v} is not finite"
        )));
    }
    std::fs::write(path, render(matrix, labels))?;
    Ok(())
}

fn render(matrix: ArrayView2<'_, f64>, labels: &HeatmapLabels) -> String {
    let (rows, cols) = matrix.dim();
    let lo = matrix.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = matrix.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let width = MARGIN + cols * CELL + 8;
    let height = TITLE_H + MARGIN + rows * CELL + 8;
    let top = TITLE_H + MARGIN;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" font-size="14" text-anchor="middle">{}</text>"#,
        width / 2,
        escape(&labels.title)
    );
    for (i, label) in labels.cols.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN + i * CELL + CELL / 2,
            top - 8,
            escape(label)
        );
    }
    for (j, label) in labels.rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            MARGIN - 6,
            top + j * CELL + CELL / 2 + 4,
            escape(label)
        );
    }
    for ((j, i), &v) in matrix.indexed_iter() {
        let t = if span > 0.0 { (v - lo) / span } else { 0.0 };
        let (r, g, b) = shade(t);
        let x = MARGIN + i * CELL;
        let y = top + j * CELL;
        let _ = writeln!(
            s,
            r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#{r:02x}{g:02x}{b:02x}" stroke="#888" stroke-width="0.5"/>"##
        );
        let ink = if t > 0.55 { "white" } else { "black" };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{}</text>"#,
            x + CELL / 2,
            y + CELL / 2 + 4,
            cell_label(v)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn shade(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    (lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

fn cell_label(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn two_by_two_has_four_labeled_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.svg");
        let labels = HeatmapLabels::for_plan("plan", 2, 2, false);
        emit_heatmap(array![[0.5, 0.0], [0.0, 0.5]].view(), &labels, &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_eq!(svg.matches("<rect x=").count(), 4);
        assert_eq!(svg.matches(">0.500<").count(), 2);
        assert!(svg.contains(">p1<") && svg.contains(">g1<"));
    }

    #[test]
    fn background_column_is_labeled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.svg");
        let labels = HeatmapLabels::for_plan("hungarian", 6, 4, true);
        emit_heatmap(Array2::zeros((6, 5)).view(), &labels, &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_eq!(svg.matches("<rect x=").count(), 30);
        assert!(svg.contains(">bg<"));
    }

    #[test]
    fn rejects_oversized_and_empty_path() {
        let big = Array2::<f64>::zeros((65, 2));
        let labels = HeatmapLabels::for_plan("x", 65, 2, false);
        let dir = tempfile::tempdir().unwrap();
        let err = emit_heatmap(big.view(), &labels, &dir.path().join("a.svg")).unwrap_err();
        assert!(err.to_string().contains("CSV"));
        let small = HeatmapLabels::for_plan("x", 1, 1, false);
        assert!(emit_heatmap(array![[1.0]].view(), &small, Path::new("")).is_err());
    }
}
