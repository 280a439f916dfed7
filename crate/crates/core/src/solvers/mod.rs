//! Matching solvers and the transport-plan types they share.
//!
//! Layout convention throughout: plans and costs are `M x N` with rows
//! indexing predictions and columns ground truths. `nu` (length `M`) is the
//! prediction marginal, `mu` (length `N`) the ground-truth marginal.

mod assignment;
mod hardening;
mod sinkhorn;
mod unbalanced;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scenes::Scene;

pub use assignment::{
    brute_force_assignment, brute_force_augmented, hungarian, hungarian_augmented, Assignment,
    BRUTE_FORCE_LIMIT,
};
pub use hardening::{assignment_plan, extract_hard_matches, HardenMode};
pub use sinkhorn::{sinkhorn_balanced, sinkhorn_log_domain, SinkhornParams};
pub use unbalanced::{rtp_unbalanced, Kappa, RtpParams, RtpVariant};

pub(crate) use sinkhorn::GibbsKernel;

/// Sum-to-one tolerance for marginals.
pub const MARGINAL_SUM_TOL: f64 = 1e-9;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Ground-truth weights `mu` and prediction weights `nu`, each a strictly
/// positive probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    mu: Array1<f64>,
    nu: Array1<f64>,
}

impl Marginals {
    pub fn new(mu: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        check_simplex("mu", &mu)?;
        check_simplex("nu", &nu)?;
        Ok(Self {
            mu: Array1::from(mu),
            nu: Array1::from(nu),
        })
    }

    /// `mu = 1/N`, `nu = 1/M`.
    pub fn uniform(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidMarginals(format!(
                "empty marginal for {m}x{n} problem"
            )));
        }
        Ok(Self {
            mu: Array1::from_elem(n, 1.0 / n as f64),
            nu: Array1::from_elem(m, 1.0 / m as f64),
        })
    }

    /// Uniform `mu`; `nu` proportional to each prediction's maximum class
    /// probability.
    pub fn confidence_weighted(scene: &Scene) -> Result<Self> {
        let k = scene.num_classes();
        let conf: Vec<f64> = scene
            .predictions()
            .iter()
            .map(|p| p.confidence(k).max(1e-12))
            .collect();
        let total: f64 = conf.iter().sum();
        let nu = conf.into_iter().map(|c| c / total).collect();
        let n = scene.n();
        Self::new(vec![1.0 / n as f64; n], nu)
    }

    pub fn mu(&self) -> &Array1<f64> {
        &self.mu
    }

    pub fn nu(&self) -> &Array1<f64> {
        &self.nu
    }

    pub(crate) fn check_dims(&self, m: usize, n: usize) -> Result<()> {
        if self.nu.len() != m || self.mu.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "marginals of length (nu {}, mu {}) for a {m}x{n} cost matrix",
                self.nu.len(),
                self.mu.len()
            )));
        }
        Ok(())
    }
}

fn check_simplex(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidMarginals(format!("{name} is empty")));
    }
    if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::InvalidMarginals(format!(
            "{name} has entry {bad}; entries must be strictly positive"
        )));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > MARGINAL_SUM_TOL {
        return Err(Error::InvalidMarginals(format!(
            "{name} sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// Max-norm violation of the marginal conditions. For balanced solves
    /// this is the hard-constraint gap; for the damped unbalanced solver it
    /// is the gap to the KL-relaxed fixed-point marginals.
    pub marginal_residual: f64,
    pub transport_cost: f64,
    pub entropy: f64,
    /// Generalized KL of the plan's row sums against `nu`.
    pub kl_predictions: f64,
    /// Generalized KL of the plan's column sums against `mu`.
    pub kl_ground_truths: f64,
    pub converged: bool,
}

/// Nonnegative `M x N` coupling with the diagnostics of the solve that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    gamma: Array2<f64>,
    diagnostics: SolverDiagnostics,
}

impl TransportPlan {
    pub fn new(gamma: Array2<f64>, diagnostics: SolverDiagnostics) -> Result<Self> {
        if let Some(((j, i), v)) = gamma
            .indexed_iter()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidParameter(format!(
                "plan entry ({j}, {i}) = {v} is not finite and nonnegative"
            )));
        }
        Ok(Self { gamma, diagnostics })
    }

    /// Wraps a bare coupling; only entropy is filled into the diagnostics.
    pub fn from_gamma(gamma: Array2<f64>) -> Result<Self> {
        let entropy = entropy_of(gamma.view());
        Self::new(
            gamma,
            SolverDiagnostics {
                entropy,
                converged: true,
                ..SolverDiagnostics::default()
            },
        )
    }

    pub fn gamma(&self) -> &Array2<f64> {
        &self.gamma
    }

    pub fn diagnostics(&self) -> &SolverDiagnostics {
        &self.diagnostics
    }

    /// `Γ 1_N`, mass carried by each prediction.
    pub fn row_sums(&self) -> Array1<f64> {
        self.gamma.sum_axis(Axis(1))
    }

    /// `Γᵀ 1_M`, mass received by each ground truth.
    pub fn col_sums(&self) -> Array1<f64> {
        self.gamma.sum_axis(Axis(0))
    }

    pub fn total_mass(&self) -> f64 {
        self.gamma.sum()
    }

    /// `max(‖Γ1 − ν‖∞, ‖Γᵀ1 − μ‖∞)`.
    pub fn balanced_residual(&self, marg: &Marginals) -> f64 {
        max_abs_diff(&self.row_sums(), marg.nu()).max(max_abs_diff(&self.col_sums(), marg.mu()))
    }

    pub(crate) fn finish(
        gamma: Array2<f64>,
        cost: ArrayView2<'_, f64>,
        marg: &Marginals,
        iterations: usize,
        marginal_residual: f64,
        converged: bool,
    ) -> Self {
        let rows = gamma.sum_axis(Axis(1));
        let cols = gamma.sum_axis(Axis(0));
        let diagnostics = SolverDiagnostics {
            iterations,
            marginal_residual,
            transport_cost: frobenius(cost, gamma.view()),
            entropy: entropy_of(gamma.view()),
            kl_predictions: generalized_kl(rows.as_slice().unwrap(), marg.nu().as_slice().unwrap()),
            kl_ground_truths: generalized_kl(
                cols.as_slice().unwrap(),
                marg.mu().as_slice().unwrap(),
            ),
            converged,
        };
        Self { gamma, diagnostics }
    }
}

pub(crate) fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn frobenius(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// `H(Γ) = −Σ Γ_ij log Γ_ij` with `0 log 0 = 0`.
pub fn entropy(plan: &TransportPlan) -> f64 {
    entropy_of(plan.gamma.view())
}

pub fn entropy_of(gamma: ArrayView2<'_, f64>) -> f64 {
    -gamma.iter().copied().map(xlogx).sum::<f64>()
}

/// Frobenius inner product `⟨C, Γ⟩`.
pub fn transport_cost(plan: &TransportPlan, cost: &crate::cost::CostMatrix) -> Result<f64> {
    if plan.gamma.dim() != cost.values().dim() {
        return Err(Error::DimensionMismatch(format!(
            "plan is {:?} but cost is {:?}",
            plan.gamma.dim(),
            cost.values().dim()
        )));
    }
    Ok(frobenius(cost.view(), plan.gamma.view()))
}

/// `Σ p log(p/q)`, the KL divergence for normalized inputs.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&p, &q)| if p > 0.0 { p * (p / q).ln() } else { 0.0 })
        .sum()
}

/// `Σ p log(p/q) − p + q`, the KL divergence extended to unnormalized
/// measures.
pub fn generalized_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&p, &q)| xlogx(p) - p * q.ln() - p + q)
        .sum()
}

/// Value of the entropic KL-relaxed objective
/// `⟨C,Γ⟩ + κ₁·KL(Γ1‖ν) + κ₂·KL(Γᵀ1‖μ) − ε·H(Γ)` (generalized KL).
pub fn rtp_objective(
    gamma: ArrayView2<'_, f64>,
    cost: &crate::cost::CostMatrix,
    marg: &Marginals,
    kappa: Kappa,
    eps: f64,
) -> Result<f64> {
    if gamma.dim() != cost.values().dim() {
        return Err(Error::DimensionMismatch(format!(
            "plan is {:?} but cost is {:?}",
            gamma.dim(),
            cost.values().dim()
        )));
    }
    marg.check_dims(cost.m(), cost.n())?;
    let rows = gamma.sum_axis(Axis(1));
    let cols = gamma.sum_axis(Axis(0));
    Ok(frobenius(cost.view(), gamma)
        + kappa.kappa1() * generalized_kl(rows.as_slice().unwrap(), marg.nu().as_slice().unwrap())
        + kappa.kappa2() * generalized_kl(cols.as_slice().unwrap(), marg.mu().as_slice().unwrap())
        - eps * entropy_of(gamma))
}

/// `ε = ε₀ / ln(m)`, or `ε₀` unchanged when `m < 3`.
pub fn adaptive_epsilon(eps0: f64, m: usize) -> Result<f64> {
    adaptive_epsilon_with_base(eps0, m, std::f64::consts::E)
}

/// `ε = ε₀ / log_base(m)`, or `ε₀` unchanged when `m < 3`.
pub fn adaptive_epsilon_with_base(eps0: f64, m: usize, base: f64) -> Result<f64> {
    if !(eps0 > 0.0 && eps0.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eps0 must be positive, got {eps0}"
        )));
    }
    if !(base > 1.0 && base.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "log base must exceed 1, got {base}"
        )));
    }
    if m < 3 {
        return Ok(eps0);
    }
    Ok(eps0 * base.ln() / (m as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostMatrix;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn entropy_examples() {
        let uniform = TransportPlan::from_gamma(Array2::from_elem((2, 2), 0.25)).unwrap();
        assert_abs_diff_eq!(entropy(&uniform), 4.0f64.ln(), epsilon = 1e-12);
        let perm = TransportPlan::from_gamma(array![[0.5, 0.0], [0.0, 0.5]]).unwrap();
        assert_abs_diff_eq!(entropy(&perm), 2.0f64.ln(), epsilon = 1e-12);
        let one_hot = TransportPlan::from_gamma(array![[0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert_eq!(entropy(&one_hot), 0.0);
    }

    #[test]
    fn transport_cost_examples() {
        let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let zero = CostMatrix::from_array(Array2::zeros((2, 2))).unwrap();
        let uniform = TransportPlan::from_gamma(Array2::from_elem((2, 2), 0.25)).unwrap();
        let perm = TransportPlan::from_gamma(array![[0.5, 0.0], [0.0, 0.5]]).unwrap();
        assert_eq!(transport_cost(&uniform, &zero).unwrap(), 0.0);
        assert_abs_diff_eq!(transport_cost(&uniform, &c).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(transport_cost(&perm, &c).unwrap(), 0.0);
        let wide = CostMatrix::from_rows(&[vec![0.0, 1.0, 2.0]]).unwrap();
        assert!(matches!(
            transport_cost(&perm, &wide),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn adaptive_epsilon_examples() {
        assert_abs_diff_eq!(
            adaptive_epsilon(0.2, 100).unwrap(),
            0.2 / 100f64.ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(adaptive_epsilon(0.2, 100).unwrap(), 0.04343, epsilon = 1e-5);
        assert_abs_diff_eq!(adaptive_epsilon(0.2, 8).unwrap(), 0.0962, epsilon = 1e-4);
        assert_eq!(adaptive_epsilon(0.2, 2).unwrap(), 0.2);
        assert_eq!(adaptive_epsilon(0.2, 1).unwrap(), 0.2);
        assert!(adaptive_epsilon(0.0, 10).is_err());
        assert_abs_diff_eq!(
            adaptive_epsilon_with_base(0.2, 8, 2.0).unwrap(),
            0.2 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn marginals_validation() {
        assert!(Marginals::new(vec![0.5, 0.5], vec![1.0]).is_ok());
        assert!(Marginals::new(vec![0.5, 0.4], vec![1.0]).is_err());
        assert!(Marginals::new(vec![1.0, 0.0], vec![1.0]).is_err());
        assert!(Marginals::new(vec![], vec![1.0]).is_err());
        let u = Marginals::uniform(3, 2).unwrap();
        assert_eq!(u.nu().len(), 3);
        assert_eq!(u.mu().len(), 2);
        assert!(u.check_dims(2, 3).is_err());
    }

    #[test]
    fn kl_conventions() {
        assert_eq!(kl_divergence(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert_abs_diff_eq!(
            generalized_kl(&[0.0, 0.0], &[0.3, 0.7]),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            kl_divergence(&[1.0, 0.0], &[0.5, 0.5]),
            2.0f64.ln(),
            epsilon = 1e-15
        );
        // Mass-matched inputs give identical values.
        let p = [0.2, 0.8];
        let q = [0.6, 0.4];
        assert_abs_diff_eq!(
            generalized_kl(&p, &q),
            kl_divergence(&p, &q),
            epsilon = 1e-15
        );
    }
}
