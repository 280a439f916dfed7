//! Regularized transport plan: entropic transport with KL-relaxed marginals.
//!
//! Two variants share one entry point:
//!
//! * `Damped` minimizes `⟨C,Γ⟩ + κ₁·KL(Γ1‖ν) + κ₂·KL(Γᵀ1‖μ) − ε·H(Γ)` with
//!   generalized KL and `H(Γ) = −Σ Γ log Γ`. The first-order conditions give
//!   `Γ = diag(a)·K'·diag(b)` with `K' = exp(−C/ε − 1)`, and the scalings
//!   are found by exponent-damped updates `a ← (ν / K'b)^{κ₁/(κ₁+ε)}`,
//!   `b ← (μ / K'ᵀa)^{κ₂/(κ₂+ε)}`, run on log potentials.
//! * `Literal` is balanced Sinkhorn followed by one rescaling pass of the
//!   ground-truth marginal toward `μ` and then of the prediction marginal
//!   toward `ν`. It ignores `κ`.

use super::sinkhorn::{log_domain_scaling, log_plan, sinkhorn_log_domain, SinkhornParams};
use super::{Marginals, TransportPlan, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::cost::CostMatrix;
use crate::error::{Error, Result};

/// Tolerance on `κ₁ + κ₂ = 1`.
pub const KAPPA_SUM_TOL: f64 = 1e-9;

/// Complementary KL weights: `κ₁` on the prediction marginal, `κ₂` on the
/// ground-truth marginal, with `κ₁ + κ₂ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa {
    kappa1: f64,
    kappa2: f64,
}

impl Kappa {
    pub fn new(kappa1: f64, kappa2: f64) -> Result<Self> {
        if !(kappa1 >= 0.0 && kappa2 >= 0.0 && kappa1.is_finite() && kappa2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kappa weights must be finite and >= 0, got ({kappa1}, {kappa2})"
            )));
        }
        if (kappa1 + kappa2 - 1.0).abs() > KAPPA_SUM_TOL {
            return Err(Error::KappaNotComplementary { kappa1, kappa2 });
        }
        Ok(Self { kappa1, kappa2 })
    }

    /// `κ₁ = 1 − κ₂`.
    pub fn from_kappa2(kappa2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&kappa2) {
            return Err(Error::InvalidParameter(format!(
                "kappa2 must be in [0, 1], got {kappa2}"
            )));
        }
        Self::new(1.0 - kappa2, kappa2)
    }

    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RtpVariant {
    Literal,
    #[default]
    Damped,
}

impl std::str::FromStr for RtpVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(RtpVariant::Literal),
            "damped" => Ok(RtpVariant::Damped),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant {other:?}, expected literal or damped"
            ))),
        }
    }
}

impl std::fmt::Display for RtpVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RtpVariant::Literal => "literal",
            RtpVariant::Damped => "damped",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtpParams {
    pub kappa: Kappa,
    pub eps: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub variant: RtpVariant,
}

impl RtpParams {
    pub fn new(kappa: Kappa, eps: f64) -> Self {
        Self {
            kappa,
            eps,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            variant: RtpVariant::Damped,
        }
    }

    pub fn with_variant(self, variant: RtpVariant) -> Self {
        Self { variant, ..self }
    }

    pub fn with_tol(self, tol: f64) -> Self {
        Self { tol, ..self }
    }

    pub fn with_max_iter(self, max_iter: usize) -> Self {
        Self { max_iter, ..self }
    }

    fn sinkhorn(&self) -> SinkhornParams {
        SinkhornParams {
            eps: self.eps,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

/// Solves the regularized transport plan in the chosen variant.
pub fn rtp_unbalanced(
    cost: &CostMatrix,
    marg: &Marginals,
    params: &RtpParams,
) -> Result<TransportPlan> {
    let sk = params.sinkhorn();
    sk.validate()?;
    marg.check_dims(cost.m(), cost.n())?;
    // Re-check in case the weights were built by struct update elsewhere.
    Kappa::new(params.kappa.kappa1, params.kappa.kappa2)?;
    match params.variant {
        RtpVariant::Damped => damped(cost, marg, params),
        RtpVariant::Literal => literal(cost, marg, &sk),
    }
}

fn damped(cost: &CostMatrix, marg: &Marginals, params: &RtpParams) -> Result<TransportPlan> {
    let eps = params.eps;
    let tau = |kappa: f64| kappa / (kappa + eps);
    let (tau_rows, tau_cols) = (tau(params.kappa.kappa1), tau(params.kappa.kappa2));
    let sol = log_domain_scaling(
        cost.view(),
        marg,
        eps,
        -1.0,
        tau_rows,
        tau_cols,
        params.tol,
        params.max_iter,
        None,
    );
    let gamma = log_plan(cost.view(), &sol.f, &sol.g, eps, -1.0);

    // Gap to the KL-proximal marginals on both sides: mass the next update
    // of each scaling would produce, versus mass now.
    let rows = gamma.sum_axis(ndarray::Axis(1));
    let cols = gamma.sum_axis(ndarray::Axis(0));
    let side_gap = |mass: &ndarray::Array1<f64>,
                    target_marg: &ndarray::Array1<f64>,
                    pot: &ndarray::Array1<f64>,
                    tau: f64| {
        mass.iter()
            .zip(target_marg)
            .zip(pot)
            .map(|((&r, &w), &p)| {
                // r = a·(K'b) with a = exp(p/ε); the update sets a to (w/(K'b))^τ.
                if r == 0.0 {
                    return 0.0;
                }
                let log_kb = r.ln() - p / eps;
                let target = (tau * (w.ln() - log_kb) + log_kb).exp();
                (r - target).abs()
            })
            .fold(0.0, f64::max)
    };
    let residual = side_gap(&rows, marg.nu(), &sol.f, tau_rows).max(side_gap(
        &cols,
        marg.mu(),
        &sol.g,
        tau_cols,
    ));
    let converged = sol.converged && residual <= params.tol;
    Ok(TransportPlan::finish(
        gamma,
        cost.view(),
        marg,
        sol.iterations,
        residual,
        converged,
    ))
}

fn literal(cost: &CostMatrix, marg: &Marginals, sk: &SinkhornParams) -> Result<TransportPlan> {
    let base = sinkhorn_log_domain(cost, marg, sk)?;
    let mut gamma = base.gamma().clone();
    for (i, mut col) in gamma.columns_mut().into_iter().enumerate() {
        let sum = col.sum();
        if sum > 0.0 && sum != marg.mu()[i] {
            col.mapv_inplace(|v| v * marg.mu()[i] / sum);
        }
    }
    for (j, mut row) in gamma.rows_mut().into_iter().enumerate() {
        let sum = row.sum();
        if sum > 0.0 && sum != marg.nu()[j] {
            row.mapv_inplace(|v| v * marg.nu()[j] / sum);
        }
    }
    let probe = TransportPlan::from_gamma(gamma.clone())?;
    let residual = probe.balanced_residual(marg);
    let d = base.diagnostics();
    Ok(TransportPlan::finish(
        gamma,
        cost.view(),
        marg,
        d.iterations,
        residual,
        d.converged && residual <= sk.tol,
    ))
}
