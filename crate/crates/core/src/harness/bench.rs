use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numfmt::g17;
use crate::solvers::GibbsKernel;

pub const MAX_BENCH_SIZE: usize = 4096;

const BENCH_EPS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub m: usize,
    pub n: usize,
    /// Median over repeats of wall time per scaling sweep.
    pub seconds_per_iter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    /// Least-squares slope of `ln(time)` against `ln(M·N)`; `None` with
    /// fewer than two distinct sizes.
    pub slope: Option<f64>,
}

/// Times one Sinkhorn scaling sweep on square `s x s` problems.
///
/// The iteration count for each size is `iters` scaled up for small
/// problems so every repeat runs at least about a million kernel entries.
pub fn timing_benchmark(sizes: &[usize], iters: usize, repeats: usize) -> Result<BenchReport> {
    if sizes.is_empty() || iters == 0 || repeats == 0 {
        return Err(Error::InvalidParameter(
            "benchmark needs sizes, iters >= 1 and repeats >= 1".into(),
        ));
    }
    if let Some(s) = sizes.iter().find(|s| **s == 0 || **s > MAX_BENCH_SIZE) {
        return Err(Error::InvalidParameter(format!(
            "benchmark size {s} outside 1..={MAX_BENCH_SIZE}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut records = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let cost = Array2::from_shape_fn((s, s), |_| rng.gen::<f64>());
        let kernel = GibbsKernel::new(cost.view(), BENCH_EPS)?;
        let (m, n) = kernel.dims();
        let nu = vec![1.0 / m as f64; m];
        let mu = vec![1.0 / n as f64; n];
        let iters = iters.max((1 << 20) / (m * n));
        let mut samples = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let mut a = vec![1.0; m];
            let mut b = vec![1.0; n];
            let mut kb = vec![0.0; m];
            let mut kta = vec![0.0; n];
            kernel.sweep(&nu, &mu, &mut a, &mut b, &mut kb, &mut kta);
            let start = Instant::now();
            for _ in 0..iters {
                kernel.sweep(&nu, &mu, &mut a, &mut b, &mut kb, &mut kta);
                black_box(&b);
            }
            samples.push(start.elapsed().as_secs_f64() / iters as f64);
        }
        records.push(BenchRecord {
            m,
            n,
            seconds_per_iter: median(&mut samples),
        });
    }
    let slope = loglog_slope(&records);
    Ok(BenchReport { records, slope })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

fn loglog_slope(records: &[BenchRecord]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (((r.m * r.n) as f64).ln(), r.seconds_per_iter.ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn write_bench_csv(report: &BenchReport, path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .records
        .iter()
        .map(|r| vec![r.m.to_string(), r.n.to_string(), g17(r.seconds_per_iter)])
        .collect();
    super::write_csv(path, &["m", "n", "seconds_per_iter"], &rows)
}
