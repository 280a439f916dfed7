//! Experiment drivers: matcher comparison, ε sweeps, hyperparameter
//! ablation and timing, plus the CSV and SVG writers they share.
//!
//! Every driver except the timing benchmark is a pure function of its
//! inputs. Parallel work is collected in input order, so CSV output is
//! byte-identical across runs and thread counts.

mod ablation;
mod bench;
mod compare;
mod heatmap;
mod sweep;

use std::path::Path;

use ndarray::ArrayView2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numfmt::g17;

pub use ablation::{ablation_grid, write_ablation_csv, AblationCell, AblationTable};
pub use bench::{timing_benchmark, write_bench_csv, BenchRecord, BenchReport, MAX_BENCH_SIZE};
pub use compare::{
    compare_matchers, match_quality, write_comparison, CompareConfig, Comparison, ComparisonRecord,
    MatchQuality, EXACT_OT_EPS, RELATIVE_THRESHOLD,
};
pub use heatmap::{emit_heatmap, HeatmapLabels, MAX_HEATMAP_SIDE};
pub use sweep::{epsilon_sweep, linspace, write_sweep_csv, SweepConfig, SweepRecord};

/// Hex SHA-256 of a matrix's shape and little-endian entries.
pub fn matrix_hash(m: ArrayView2<'_, f64>) -> String {
    let mut h = Sha256::new();
    let (rows, cols) = m.dim();
    h.update((rows as u64).to_le_bytes());
    h.update((cols as u64).to_le_bytes());
    for v in m.iter() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes a header plus rows as comma-separated text.
pub(crate) fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Writes a matrix as CSV with a `row` label column and one column per
/// entry of `col_labels`.
pub fn write_matrix_csv(
    path: &Path,
    matrix: ArrayView2<'_, f64>,
    row_labels: &[String],
    col_labels: &[String],
) -> Result<()> {
    let (rows, cols) = matrix.dim();
    if row_labels.len() != rows || col_labels.len() != cols {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} labels for a {rows}x{cols} matrix",
            row_labels.len(),
            col_labels.len()
        )));
    }
    let mut header = vec!["row"];
    header.extend(col_labels.iter().map(String::as_str));
    let body: Vec<Vec<String>> = matrix
        .rows()
        .into_iter()
        .zip(row_labels)
        .map(|(row, label)| {
            std::iter::once(label.clone())
                .chain(row.iter().map(|v| g17(*v)))
                .collect()
        })
        .collect();
    write_csv(path, &header, &body)
}

pub(crate) fn pred_labels(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("p{j}")).collect()
}

pub(crate) fn gt_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("g{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hash_depends_on_shape_and_values() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let b = array![[1.0, 2.0, 3.0, 4.0]];
        assert_eq!(matrix_hash(a.view()), matrix_hash(a.clone().view()));
        assert_ne!(matrix_hash(a.view()), matrix_hash(b.view()));
        assert_eq!(matrix_hash(a.view()).len(), 64);
    }

    #[test]
    fn matrix_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_matrix_csv(
            &path,
            array![[0.5, 1.0]].view(),
            &pred_labels(1),
            &gt_labels(2),
        )
        .unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "row,g0,g1\np0,0.5,1\n"
        );
        assert!(
            write_matrix_csv(&path, array![[0.5]].view(), &pred_labels(2), &gt_labels(1)).is_err()
        );
    }
}
