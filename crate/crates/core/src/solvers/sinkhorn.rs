//! Balanced entropic optimal transport by Sinkhorn scaling, in plain
//! multiplicative form and in log-domain (potential) form.
//!
//! Both variants run the same update schedule: the residual is checked on
//! the prediction marginal just before each row update, after the column
//! update of the previous sweep has made the ground-truth marginal exact.
//! They therefore stop on the same iteration and agree to rounding.

use ndarray::{Array1, Array2, ArrayView2};

use super::{max_abs_diff, Marginals, TransportPlan, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::cost::CostMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    pub eps: f64,
    /// Stop once the max-norm marginal residual is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl SinkhornParams {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_tol(self, tol: f64) -> Self {
        Self { tol, ..self }
    }

    pub fn with_max_iter(self, max_iter: usize) -> Self {
        Self { max_iter, ..self }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Dense `K = exp(−C/ε)` in row-major order.
pub(crate) struct GibbsKernel {
    k: Vec<f64>,
    m: usize,
    n: usize,
}

impl GibbsKernel {
    pub(crate) fn new(cost: ArrayView2<'_, f64>, eps: f64) -> Result<Self> {
        let (m, n) = cost.dim();
        let k: Vec<f64> = cost.iter().map(|c| (-c / eps).exp()).collect();
        for j in 0..m {
            if k[j * n..(j + 1) * n].iter().all(|v| *v == 0.0) {
                return Err(Error::KernelUnderflow(format!("row {j} (eps = {eps})")));
            }
        }
        let mut col_alive = vec![false; n];
        for row in k.chunks_exact(n) {
            for (alive, v) in col_alive.iter_mut().zip(row) {
                *alive |= *v > 0.0;
            }
        }
        if let Some(i) = col_alive.iter().position(|a| !a) {
            return Err(Error::KernelUnderflow(format!("column {i} (eps = {eps})")));
        }
        Ok(Self { k, m, n })
    }

    /// `out = K x`.
    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.k.chunks_exact(self.n)) {
            *o = row.iter().zip(x).map(|(k, x)| k * x).sum();
        }
    }

    /// `out = Kᵀ y`.
    pub(crate) fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (yj, row) in y.iter().zip(self.k.chunks_exact(self.n)) {
            for (o, k) in out.iter_mut().zip(row) {
                *o += yj * k;
            }
        }
    }

    /// One full scaling sweep `a ← ν / Kb`, `b ← μ / Kᵀa`.
    pub(crate) fn sweep(
        &self,
        nu: &[f64],
        mu: &[f64],
        a: &mut [f64],
        b: &mut [f64],
        kb: &mut [f64],
        kta: &mut [f64],
    ) {
        self.apply(b, kb);
        for ((a, nu), kb) in a.iter_mut().zip(nu).zip(kb.iter()) {
            *a = nu / kb;
        }
        self.apply_transpose(a, kta);
        for ((b, mu), kta) in b.iter_mut().zip(mu).zip(kta.iter()) {
            *b = mu / kta;
        }
    }

    pub(crate) fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }
}

fn check_positive(v: &[f64], what: &str, eps: f64) -> Result<()> {
    match v.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
        Some(idx) => Err(Error::KernelUnderflow(format!(
            "{what} {idx} during iteration (eps = {eps})"
        ))),
        None => Ok(()),
    }
}

/// Balanced entropic transport by multiplicative Sinkhorn scaling.
///
/// Returns `Γ = diag(a) K diag(b)`. Exhausting `max_iter` is not an error;
/// the plan comes back with `converged = false`. A row or column of `K`
/// underflowing to zero is an error: use [`sinkhorn_log_domain`].
pub fn sinkhorn_balanced(
    cost: &CostMatrix,
    marg: &Marginals,
    params: &SinkhornParams,
) -> Result<TransportPlan> {
    params.validate()?;
    let (m, n) = (cost.m(), cost.n());
    marg.check_dims(m, n)?;
    let kernel = GibbsKernel::new(cost.view(), params.eps)?;
    let nu = marg.nu().as_slice().unwrap();
    let mu = marg.mu().as_slice().unwrap();

    let mut a = vec![1.0; m];
    let mut b = vec![1.0; n];
    let mut kb = vec![0.0; m];
    let mut kta = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    loop {
        kernel.apply(&b, &mut kb);
        check_positive(&kb, "row", params.eps)?;
        if iterations > 0 {
            let residual = a
                .iter()
                .zip(&kb)
                .zip(nu)
                .map(|((a, kb), nu)| (a * kb - nu).abs())
                .fold(0.0, f64::max);
            if residual <= params.tol {
                converged = true;
                break;
            }
        }
        if iterations == params.max_iter {
            break;
        }
        for ((a, nu), kb) in a.iter_mut().zip(nu).zip(&kb) {
            *a = nu / kb;
        }
        kernel.apply_transpose(&a, &mut kta);
        check_positive(&kta, "column", params.eps)?;
        for ((b, mu), kta) in b.iter_mut().zip(mu).zip(&kta) {
            *b = mu / kta;
        }
        iterations += 1;
    }

    let gamma = Array2::from_shape_fn((m, n), |(j, i)| a[j] * kernel.k[j * n + i] * b[i]);
    Ok(finish_balanced(
        gamma, cost, marg, iterations, converged, params.tol,
    ))
}

fn finish_balanced(
    gamma: Array2<f64>,
    cost: &CostMatrix,
    marg: &Marginals,
    iterations: usize,
    converged: bool,
    tol: f64,
) -> TransportPlan {
    let rows = gamma.sum_axis(ndarray::Axis(1));
    let cols = gamma.sum_axis(ndarray::Axis(0));
    let residual = max_abs_diff(&rows, marg.nu()).max(max_abs_diff(&cols, marg.mu()));
    TransportPlan::finish(
        gamma,
        cost.view(),
        marg,
        iterations,
        residual,
        converged && residual <= tol,
    )
}

/// `log Σ exp(x_k)`, stable for large magnitudes.
pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Potentials of a log-domain scaling solve.
pub(crate) struct LogScaling {
    /// Prediction potentials `f` (length `M`); `a = exp(f/ε)`.
    pub f: Array1<f64>,
    /// Ground-truth potentials `g` (length `N`); `b = exp(g/ε)`.
    pub g: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Generic log-domain scaling loop on the kernel `exp(−C/ε + offset)`.
///
/// Row and column updates are damped by the exponents `tau_rows`,
/// `tau_cols` (`1` gives balanced Sinkhorn). The residual is the max gap
/// between the current row marginal and the row marginal the next update
/// would produce. Potentials start from `init` when given, else from zero.
#[allow(clippy::too_many_arguments)]
pub(crate) fn log_domain_scaling(
    cost: ArrayView2<'_, f64>,
    marg: &Marginals,
    eps: f64,
    offset: f64,
    tau_rows: f64,
    tau_cols: f64,
    tol: f64,
    max_iter: usize,
    init: Option<(Array1<f64>, Array1<f64>)>,
) -> LogScaling {
    let (m, n) = cost.dim();
    let log_nu = marg.nu().mapv(f64::ln);
    let log_mu = marg.mu().mapv(f64::ln);
    let (mut f, mut g) = init.unwrap_or_else(|| (Array1::zeros(m), Array1::zeros(n)));
    let mut row_lse = Array1::<f64>::zeros(m);
    let mut col_lse = Array1::<f64>::zeros(n);
    let mut scratch = vec![0.0; m];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        for j in 0..m {
            let row = cost.row(j);
            row_lse[j] = log_sum_exp(
                row.iter()
                    .zip(g.iter())
                    .map(|(c, g)| (g - c) / eps + offset),
            );
        }
        if iterations > 0 {
            let residual = (0..m)
                .map(|j| {
                    let current = (f[j] / eps + row_lse[j]).exp();
                    let target = (tau_rows * (log_nu[j] - row_lse[j]) + row_lse[j]).exp();
                    (current - target).abs()
                })
                .fold(0.0, f64::max);
            if residual <= tol {
                converged = true;
                break;
            }
        }
        if iterations == max_iter {
            break;
        }
        for j in 0..m {
            f[j] = tau_rows * eps * (log_nu[j] - row_lse[j]);
        }
        for i in 0..n {
            let col = cost.column(i);
            for (s, (c, f)) in scratch.iter_mut().zip(col.iter().zip(f.iter())) {
                *s = (f - c) / eps + offset;
            }
            col_lse[i] = log_sum_exp(scratch.iter().copied());
        }
        for i in 0..n {
            g[i] = tau_cols * eps * (log_mu[i] - col_lse[i]);
        }
        iterations += 1;
    }
    LogScaling {
        f,
        g,
        iterations,
        converged,
    }
}

pub(crate) fn log_plan(
    cost: ArrayView2<'_, f64>,
    f: &Array1<f64>,
    g: &Array1<f64>,
    eps: f64,
    offset: f64,
) -> Array2<f64> {
    Array2::from_shape_fn(cost.dim(), |(j, i)| {
        ((f[j] + g[i] - cost[[j, i]]) / eps + offset).exp()
    })
}

/// Warm-started stages run at most this many iterations each.
const ANNEAL_STAGE_ITERS: usize = 2_000;

/// Balanced Sinkhorn on dual potentials; same contract as
/// [`sinkhorn_balanced`] but never underflows.
///
/// When `ε` is far below the cost scale, the solve is annealed: ε starts
/// at the largest cost entry and halves per stage down to the target,
/// each stage warm-starting from the previous potentials. Iterations of
/// all stages count against `max_iter`.
pub fn sinkhorn_log_domain(
    cost: &CostMatrix,
    marg: &Marginals,
    params: &SinkhornParams,
) -> Result<TransportPlan> {
    params.validate()?;
    marg.check_dims(cost.m(), cost.n())?;
    let mut spent = 0;
    let mut init = None;
    let mut stage_eps = cost.max_entry();
    while stage_eps > 2.0 * params.eps && spent < params.max_iter {
        let budget = ANNEAL_STAGE_ITERS.min(params.max_iter - spent);
        let stage = log_domain_scaling(
            cost.view(),
            marg,
            stage_eps,
            0.0,
            1.0,
            1.0,
            params.tol,
            budget,
            init,
        );
        spent += stage.iterations;
        init = Some((stage.f, stage.g));
        stage_eps /= 2.0;
    }
    let mut sol = log_domain_scaling(
        cost.view(),
        marg,
        params.eps,
        0.0,
        1.0,
        1.0,
        params.tol,
        params.max_iter - spent,
        init,
    );
    sol.iterations += spent;
    let gamma = log_plan(cost.view(), &sol.f, &sol.g, params.eps, 0.0);
    Ok(finish_balanced(
        gamma,
        cost,
        marg,
        sol.iterations,
        sol.converged,
        params.tol,
    ))
}
