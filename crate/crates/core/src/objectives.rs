//! Scalar objectives over occupancies and over Q/V tables.
//!
//! Expectations are exact weighted sums over the `S×A` table. Objectives
//! that the oracle probes check are also reachable through [`Formulas`],
//! which can inject a deliberate formula mutation so the probes can be shown
//! to detect it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{weighted_log_sum_exp, Policy, TransitionModel};

pub type QTable = DMatrix<f64>;
pub type VTable = DVector<f64>;

/// Largest `t = (q - v)/β` fed to `exp` in the Extreme-V objective.
pub const EXTREME_V_T_MAX: f64 = 30.0;

/// Formula mutations used to demonstrate that the oracle probes have power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    #[default]
    None,
    /// `δ = exp(-Ψ/(1-α))` on the surrogate side; `+E_d[Ψ]` in the reformulated `f`.
    PsiSignFlip,
    /// The `(1-α)` factors on the constant term of `L̃` and on the KL of the reformulated `f`.
    DropOneMinusAlpha,
    /// `e^t → t` in the exact objective and the Extreme-V loss.
    LinearizeExp,
    /// Behavior weights ignored in the soft value and in QW-BC.
    DropBehaviorWeights,
    /// `+E[δ T[Q]]` instead of `-E[δ T[Q]]` in the non-adversarial objective.
    BellmanSignFlip,
}

impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::PsiSignFlip,
        Mutation::DropOneMinusAlpha,
        Mutation::LinearizeExp,
        Mutation::DropBehaviorWeights,
        Mutation::BellmanSignFlip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mutation::None => "none",
            Mutation::PsiSignFlip => "psi-sign-flip",
            Mutation::DropOneMinusAlpha => "drop-one-minus-alpha",
            Mutation::LinearizeExp => "linearize-exp",
            Mutation::DropBehaviorWeights => "drop-behavior-weights",
            Mutation::BellmanSignFlip => "bellman-sign-flip",
        }
    }
}

impl std::str::FromStr for Mutation {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        std::iter::once(Mutation::None)
            .chain(Mutation::ALL)
            .find(|m| m.name() == s)
            .ok_or_else(|| crate::Error::Invalid(format!("unknown mutation `{s}`")))
    }
}

/// Everything the Q-side objectives share: dynamics, initial states, the
/// union occupancy `d^U` and its behavior policy `μ^U`.
#[derive(Debug, Clone, Copy)]
pub struct DualProblem<'a> {
    pub transition: &'a TransitionModel,
    pub gamma: f64,
    pub p0: &'a DVector<f64>,
    pub d_u: &'a DMatrix<f64>,
    pub mu_u: &'a Policy,
    pub beta: f64,
}

/// `D_KL(d1 ‖ d2)` with `0 log 0 = 0`.
pub fn kl_divergence(d1: &DMatrix<f64>, d2: &DMatrix<f64>) -> Result<f64> {
    if d1.shape() != d2.shape() {
        return Err(Error::Shape("KL arguments differ in shape".into()));
    }
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for s in 0..d1.nrows() {
        for a in 0..d1.ncols() {
            let (p, q) = (d1[(s, a)], d2[(s, a)]);
            if p > 0.0 {
                if q > 0.0 {
                    total += p * (p / q).ln();
                } else {
                    pairs.push((s, a));
                }
            }
        }
    }
    if !pairs.is_empty() {
        return Err(Error::Support {
            context: "KL reference has zero mass where the argument is positive".into(),
            pairs,
        });
    }
    Ok(total)
}

/// `D_KL(d‖d_g) − α D_KL(d‖d_b)`.
pub fn f_objective(d: &DMatrix<f64>, d_g: &DMatrix<f64>, d_b: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    let bad = if alpha == 0.0 { 0.0 } else { alpha * kl_divergence(d, d_b)? };
    Ok(kl_divergence(d, d_g)? - bad)
}

/// `(1−α) D_KL(d‖d_u) − E_d[Ψ]`.
pub fn f_reformulated(d: &DMatrix<f64>, d_u: &DMatrix<f64>, psi: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    Formulas::EXACT.f_reformulated(d, d_u, psi, alpha)
}

/// Largest gap `f(λx₁ + (1−λ)x₂) − [λf(x₁) + (1−λ)f(x₂)]` over the interior
/// grid `λ = k/(n+1)`. Positive values are convexity violations.
pub fn convexity_probe<F>(objective: F, x1: &DMatrix<f64>, x2: &DMatrix<f64>, n_lambdas: usize) -> f64
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    let (f1, f2) = (objective(x1), objective(x2));
    (1..=n_lambdas)
        .map(|k| {
            let lambda = k as f64 / (n_lambdas + 1) as f64;
            let mid = x1 * lambda + x2 * (1.0 - lambda);
            objective(&mid) - (lambda * f1 + (1.0 - lambda) * f2)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `V_Q(s) = β log Σ_a μ(a|s) exp(q(s,a)/β)`.
pub fn soft_value_closed_form(q: &QTable, mu: &Policy, beta: f64) -> VTable {
    Formulas::EXACT.soft_value(q, mu, beta)
}

/// `V^π_Q(s) = Σ_a π(a|s) [q(s,a) − β log(π(a|s)/μ(a|s))]`.
pub fn policy_soft_value(q: &QTable, pi: &Policy, mu: &Policy, beta: f64) -> Result<VTable> {
    let (ns, na) = q.shape();
    let mut pairs = Vec::new();
    let mut v = DVector::zeros(ns);
    for s in 0..ns {
        for a in 0..na {
            let p = pi.prob(s, a);
            if p == 0.0 {
                continue;
            }
            let m = mu.prob(s, a);
            if m <= 0.0 {
                pairs.push((s, a));
                continue;
            }
            v[s] += p * (q[(s, a)] - beta * (p / m).ln());
        }
    }
    if !pairs.is_empty() {
        return Err(Error::Support {
            context: "policy puts mass where the behavior policy has none".into(),
            pairs,
        });
    }
    Ok(v)
}

/// `T[Q](s,a) = q(s,a) − γ Σ_{s'} T(s'|s,a) v(s')`.
pub fn bellman_residual(q: &QTable, v: &VTable, transition: &TransitionModel, gamma: f64) -> DMatrix<f64> {
    q - transition.backup(v) * gamma
}

/// `δ = exp(Ψ/(1−α))`.
pub fn exp_weight(psi: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    Formulas::EXACT.delta(psi, alpha)
}

pub fn l_full(problem: &DualProblem<'_>, q: &QTable, pi: &Policy, psi: &DMatrix<f64>, alpha: f64, clip: Option<(f64, f64)>) -> Result<f64> {
    Formulas::EXACT.l_full(problem, q, pi, psi, alpha, clip)
}

pub fn l_surrogate(problem: &DualProblem<'_>, q: &QTable, pi: &Policy, psi: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    Formulas::EXACT.l_surrogate(problem, q, pi, psi, alpha)
}

pub fn l_surrogate_q(problem: &DualProblem<'_>, q: &QTable, psi: &DMatrix<f64>, alpha: f64) -> f64 {
    Formulas::EXACT.l_surrogate_q(problem, q, psi, alpha)
}

/// Extreme-V loss `E_{d_u}[e^t − t − 1]`, `t = (q(s,a) − v(s))/β`.
pub fn j_extreme_v(v: &VTable, q: &QTable, d_u: &DMatrix<f64>, beta: f64) -> f64 {
    Formulas::EXACT.j_extreme_v(v, q, d_u, beta)
}

fn clamp_t(t: f64) -> f64 {
    if t > EXTREME_V_T_MAX {
        log::warn!("Extreme-V exponent {t:.3e} clamped to {EXTREME_V_T_MAX}");
        EXTREME_V_T_MAX
    } else {
        t
    }
}

/// `∂J/∂v(s) = (1/β) Σ_a d_u(s,a) (1 − e^t)`.
pub fn j_extreme_v_gradient(v: &VTable, q: &QTable, d_u: &DMatrix<f64>, beta: f64) -> VTable {
    let (ns, na) = q.shape();
    DVector::from_fn(ns, |s, _| {
        (0..na)
            .map(|a| {
                let t = clamp_t((q[(s, a)] - v[s]) / beta);
                d_u[(s, a)] * (1.0 - t.exp())
            })
            .sum::<f64>()
            / beta
    })
}

/// Per-state minimizer of the Extreme-V loss:
/// `v(s) = β log Σ_a w(a|s) exp(q(s,a)/β)` with `w` the conditional of `d_u`.
pub fn extreme_v_minimizer(q: &QTable, d_u: &DMatrix<f64>, beta: f64) -> VTable {
    soft_value_closed_form(q, &Policy::from_weights(d_u), beta)
}

/// `(1−γ)E_{p0}[v] − E_{d_u}[w·(q − γE_{s'}[v])]` for per-pair weights `w`.
pub fn l_q_given_v(
    q: &QTable,
    v: &VTable,
    weights: &DMatrix<f64>,
    d_u: &DMatrix<f64>,
    p0: &DVector<f64>,
    transition: &TransitionModel,
    gamma: f64,
) -> f64 {
    let residual = bellman_residual(q, v, transition, gamma);
    (1.0 - gamma) * p0.dot(v) - d_u.component_mul(weights).component_mul(&residual).sum()
}

/// `∂/∂q(s,a)` of [`l_q_given_v`]: `−d_u(s,a)·w(s,a)`.
pub fn l_q_given_v_gradient(weights: &DMatrix<f64>, d_u: &DMatrix<f64>) -> DMatrix<f64> {
    -d_u.component_mul(weights)
}

/// `E_{d_u}[residual² / 2]`.
pub fn chi2_regularizer(residual: &DMatrix<f64>, d_u: &DMatrix<f64>) -> f64 {
    0.5 * d_u.component_mul(&residual.component_mul(residual)).sum()
}

/// Gradient of [`chi2_regularizer`] w.r.t. `q` when `residual = q − γT v`.
pub fn chi2_gradient(residual: &DMatrix<f64>, d_u: &DMatrix<f64>) -> DMatrix<f64> {
    d_u.component_mul(residual)
}

/// The objective formulas, optionally with one injected [`Mutation`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Formulas {
    pub mutation: Mutation,
}

impl Formulas {
    pub const EXACT: Formulas = Formulas {
        mutation: Mutation::None,
    };

    pub fn with(mutation: Mutation) -> Self {
        Formulas { mutation }
    }

    fn is(&self, m: Mutation) -> bool {
        self.mutation == m
    }

    pub fn f_reformulated(&self, d: &DMatrix<f64>, d_u: &DMatrix<f64>, psi: &DMatrix<f64>, alpha: f64) -> Result<f64> {
        let coeff = if self.is(Mutation::DropOneMinusAlpha) { 1.0 } else { 1.0 - alpha };
        let sign = if self.is(Mutation::PsiSignFlip) { -1.0 } else { 1.0 };
        let kl = if coeff == 0.0 { 0.0 } else { coeff * kl_divergence(d, d_u)? };
        Ok(kl - sign * d.component_mul(psi).sum())
    }

    pub fn delta(&self, psi: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
        let sign = if self.is(Mutation::PsiSignFlip) { -1.0 } else { 1.0 };
        psi.map(|p| (sign * p / (1.0 - alpha)).exp())
    }

    pub fn soft_value(&self, q: &QTable, mu: &Policy, beta: f64) -> VTable {
        let (ns, na) = q.shape();
        let uniform = 1.0 / na as f64;
        DVector::from_fn(ns, |s, _| {
            let weight = |a: usize| if self.is(Mutation::DropBehaviorWeights) { uniform } else { mu.prob(s, a) };
            weighted_log_sum_exp((0..na).map(|a| (weight(a), q[(s, a)])), beta)
        })
    }

    /// `(1−γ)E_{p0}[V^π_Q] + (1−α)E_{d_u}[exp((Ψ − T^π[Q])/(1−α))]`, with the
    /// exponent optionally clipped to `[minR, maxR]`.
    pub fn l_full(
        &self,
        problem: &DualProblem<'_>,
        q: &QTable,
        pi: &Policy,
        psi: &DMatrix<f64>,
        alpha: f64,
        clip: Option<(f64, f64)>,
    ) -> Result<f64> {
        check_alpha(alpha)?;
        let v_pi = policy_soft_value(q, pi, problem.mu_u, problem.beta)?;
        let residual = bellman_residual(q, &v_pi, problem.transition, problem.gamma);
        let mut penalty = 0.0;
        for s in 0..q.nrows() {
            for a in 0..q.ncols() {
                let mut x = (psi[(s, a)] - residual[(s, a)]) / (1.0 - alpha);
                if let Some((lo, hi)) = clip {
                    x = x.clamp(lo, hi);
                }
                let e = if self.is(Mutation::LinearizeExp) { x } else { x.exp() };
                penalty += problem.d_u[(s, a)] * e;
            }
        }
        let value = (1.0 - problem.gamma) * problem.p0.dot(&v_pi) + (1.0 - alpha) * penalty;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: "exact objective (exponent overflow; enable clipping)",
                step: 0,
            });
        }
        Ok(value)
    }

    /// `(1−γ)E_{p0}[V^π_Q] − E_{d_u}[δ T^π[Q]] + (1−α)E_{d_u}[δ]`.
    pub fn l_surrogate(&self, problem: &DualProblem<'_>, q: &QTable, pi: &Policy, psi: &DMatrix<f64>, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let delta = self.delta(psi, alpha);
        let v_pi = policy_soft_value(q, pi, problem.mu_u, problem.beta)?;
        let residual = bellman_residual(q, &v_pi, problem.transition, problem.gamma);
        let weighted = problem.d_u.component_mul(&delta);
        let coeff = if self.is(Mutation::DropOneMinusAlpha) { 1.0 } else { 1.0 - alpha };
        Ok((1.0 - problem.gamma) * problem.p0.dot(&v_pi) - weighted.component_mul(&residual).sum() + coeff * weighted.sum())
    }

    /// `(1−γ)E_{p0}[V_Q] − E_{d_u}[δ (q − γE_{s'}[V_Q])]`. The constant
    /// `(1−α)E[δ]` of the surrogate is omitted; it does not move the minimizer.
    pub fn l_surrogate_q(&self, problem: &DualProblem<'_>, q: &QTable, psi: &DMatrix<f64>, alpha: f64) -> f64 {
        let delta = self.delta(psi, alpha);
        let v = self.soft_value(q, problem.mu_u, problem.beta);
        let residual = bellman_residual(q, &v, problem.transition, problem.gamma);
        let sign = if self.is(Mutation::BellmanSignFlip) { -1.0 } else { 1.0 };
        (1.0 - problem.gamma) * problem.p0.dot(&v) - sign * problem.d_u.component_mul(&delta).component_mul(&residual).sum()
    }

    pub fn j_extreme_v(&self, v: &VTable, q: &QTable, d_u: &DMatrix<f64>, beta: f64) -> f64 {
        let (ns, na) = q.shape();
        let mut total = 0.0;
        for s in 0..ns {
            for a in 0..na {
                let w = d_u[(s, a)];
                if w == 0.0 {
                    continue;
                }
                let t = clamp_t((q[(s, a)] - v[s]) / beta);
                let e = if self.is(Mutation::LinearizeExp) { t } else { t.exp() };
                total += w * (e - t - 1.0);
            }
        }
        total
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Invalid(format!("this objective needs 0 ≤ α < 1, got {alpha}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{random_distribution, random_mdp, random_policy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_table(rng: &mut impl Rng, ns: usize, na: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(ns, na, |_, _| scale * (2.0 * rng.gen::<f64>() - 1.0))
    }

    #[test]
    fn kl_cases() {
        let d = random_distribution(3, 2, 1).into_matrix();
        assert_eq!(kl_divergence(&d, &d).unwrap(), 0.0);
        let p = DMatrix::from_row_slice(1, 2, &[0.5, 0.5]);
        let q = DMatrix::from_row_slice(1, 2, &[0.25, 0.75]);
        let expected = 0.5 * 2.0f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl_divergence(&p, &q).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.14384).abs() < 1e-5);
        let hole = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(kl_divergence(&p, &hole).is_err());
        assert_eq!(kl_divergence(&hole, &p).unwrap(), 2.0f64.ln());
        for seed in 0..100 {
            let a = random_distribution(4, 3, seed).into_matrix();
            let b = random_distribution(4, 3, seed + 500).into_matrix();
            assert!(kl_divergence(&a, &b).unwrap() >= 0.0);
        }
    }

    #[test]
    fn f_reductions() {
        let g = random_distribution(3, 3, 1).into_matrix();
        let b = random_distribution(3, 3, 2).into_matrix();
        assert_eq!(f_objective(&g, &g, &b, 0.0).unwrap(), 0.0);
        let at_bad = f_objective(&b, &g, &b, 1.0).unwrap();
        assert!((at_bad - kl_divergence(&b, &g).unwrap()).abs() < 1e-15);

        let u = random_distribution(3, 3, 3).into_matrix();
        let zero = DMatrix::zeros(3, 3);
        assert_eq!(f_reformulated(&g, &u, &zero, 0.0).unwrap(), kl_divergence(&g, &u).unwrap());
        let psi = random_table(&mut ChaCha8Rng::seed_from_u64(1), 3, 3, 2.0);
        assert_eq!(f_reformulated(&g, &u, &psi, 1.0).unwrap(), -g.component_mul(&psi).sum());
    }

    #[test]
    fn soft_value_cases() {
        let mu = Policy::uniform(2, 2);
        let beta = 0.7;
        let constant = DMatrix::from_element(2, 2, 3.25);
        assert!(soft_value_closed_form(&constant, &mu, beta).iter().all(|v| (v - 3.25).abs() < 1e-14));
        let q = DMatrix::from_row_slice(1, 2, &[0.0, beta * 3.0f64.ln()]);
        let v = soft_value_closed_form(&q, &Policy::uniform(1, 2), beta);
        assert!((v[0] - beta * 2.0f64.ln()).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..100 {
            let q = random_table(&mut rng, 5, 3, 10.0);
            let mu = random_policy(5, 3, seed);
            let v = soft_value_closed_form(&q, &mu, 1.3);
            for s in 0..5 {
                let mean: f64 = (0..3).map(|a| mu.prob(s, a) * q[(s, a)]).sum();
                assert!(v[s] >= mean - 1e-12);
            }
        }
    }

    #[test]
    fn bellman_residual_cases() {
        let mdp = random_mdp(4, 2, 0.9, 3).unwrap();
        let zero_q = DMatrix::zeros(4, 2);
        let zero_v = DVector::zeros(4);
        assert_eq!(bellman_residual(&zero_q, &zero_v, &mdp.transition, 0.9), zero_q);
        let q = random_table(&mut ChaCha8Rng::seed_from_u64(1), 4, 2, 1.0);
        let v = DVector::from_fn(4, |s, _| s as f64);
        assert_eq!(bellman_residual(&q, &v, &mdp.transition, 0.0), q);
        let built = mdp.transition.backup(&v) * 0.9;
        assert!(bellman_residual(&built, &v, &mdp.transition, 0.9).amax() < 1e-15);
    }

    fn problem_parts(seed: u64) -> (crate::mdp::TabularMdp, DMatrix<f64>, Policy) {
        let mdp = random_mdp(6, 3, 0.9, seed).unwrap();
        let d_u = random_distribution(6, 3, seed + 1).into_matrix();
        let mu = Policy::from_weights(&d_u);
        (mdp, d_u, mu)
    }

    #[test]
    fn l_full_at_behavior_policy_and_zero_q() {
        let (mdp, d_u, mu) = problem_parts(2);
        let problem = DualProblem {
            transition: &mdp.transition,
            gamma: mdp.gamma,
            p0: &mdp.p0,
            d_u: &d_u,
            mu_u: &mu,
            beta: 2.0,
        };
        let q = DMatrix::zeros(6, 3);
        let psi = DMatrix::zeros(6, 3);
        for alpha in [0.0, 0.3, 0.8] {
            let full = l_full(&problem, &q, &mu, &psi, alpha, None).unwrap();
            assert!((full - (1.0 - alpha)).abs() < 1e-12);
            let sur = l_surrogate(&problem, &q, &mu, &psi, alpha).unwrap();
            assert!((full - sur).abs() < 1e-12);
        }
        assert!(l_full(&problem, &q, &mu, &psi, 1.0, None).is_err());
    }

    #[test]
    fn clipped_exponent_is_bounded() {
        let (mdp, d_u, mu) = problem_parts(3);
        let problem = DualProblem {
            transition: &mdp.transition,
            gamma: mdp.gamma,
            p0: &mdp.p0,
            d_u: &d_u,
            mu_u: &mu,
            beta: 1.0,
        };
        let q = DMatrix::from_element(6, 3, -1e4);
        let psi = DMatrix::zeros(6, 3);
        assert!(l_full(&problem, &q, &mu, &psi, 0.5, None).is_err());
        let clipped = l_full(&problem, &q, &mu, &psi, 0.5, Some((-7.0, 7.0))).unwrap();
        let v = policy_soft_value(&q, &mu, &mu, 1.0).unwrap();
        let expected = 0.1 * mdp.p0.dot(&v) + 0.5 * 7.0f64.exp();
        assert!((clipped - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn surrogate_reduces_to_iq_learn_form() {
        let (mdp, d_u, mu) = problem_parts(5);
        let problem = DualProblem {
            transition: &mdp.transition,
            gamma: mdp.gamma,
            p0: &mdp.p0,
            d_u: &d_u,
            mu_u: &mu,
            beta: 1.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_table(&mut rng, 6, 3, 3.0);
        let pi = random_policy(6, 3, 77);
        let psi = DMatrix::zeros(6, 3);
        let sur = l_surrogate(&problem, &q, &pi, &psi, 0.0).unwrap();
        let v_pi = policy_soft_value(&q, &pi, &mu, 1.5).unwrap();
        let residual = bellman_residual(&q, &v_pi, &mdp.transition, mdp.gamma);
        let iq = 0.1 * mdp.p0.dot(&v_pi) - d_u.component_mul(&residual).sum();
        // The surrogate keeps the constant (1-α)E[δ] = 1.
        assert!((sur - (iq + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn surrogate_q_zero_case() {
        let (mdp, d_u, mu) = problem_parts(6);
        let problem = DualProblem {
            transition: &mdp.transition,
            gamma: mdp.gamma,
            p0: &mdp.p0,
            d_u: &d_u,
            mu_u: &mu,
            beta: 1.0,
        };
        let zero = DMatrix::zeros(6, 3);
        assert!(l_surrogate_q(&problem, &zero, &zero, 0.0).abs() < 1e-15);
    }

    #[test]
    fn extreme_v_cases() {
        let q = DMatrix::from_row_slice(1, 2, &[1.5, -3.0]);
        let d_u = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let v = DVector::from_vec(vec![1.5]);
        assert_eq!(j_extreme_v(&v, &q, &d_u, 2.0), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..50 {
            let q = random_table(&mut rng, 4, 3, 5.0);
            let v = DVector::from_fn(4, |_, _| 5.0 * (2.0 * rng.gen::<f64>() - 1.0));
            let d_u = random_distribution(4, 3, seed).into_matrix();
            assert!(j_extreme_v(&v, &q, &d_u, 0.8) >= 0.0);
            let vstar = extreme_v_minimizer(&q, &d_u, 0.8);
            assert!(j_extreme_v_gradient(&vstar, &q, &d_u, 0.8).amax() < 1e-12);
        }
    }

    #[test]
    fn l_q_given_v_is_affine_in_q() {
        let (mdp, d_u, _) = problem_parts(7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = DVector::from_fn(6, |_, _| rng.gen::<f64>());
        let w = random_table(&mut rng, 6, 3, 1.0).map(f64::exp);
        let f = |q: &DMatrix<f64>| l_q_given_v(q, &v, &w, &d_u, &mdp.p0, &mdp.transition, mdp.gamma);
        for _ in 0..10 {
            let (q1, q2) = (random_table(&mut rng, 6, 3, 4.0), random_table(&mut rng, 6, 3, 4.0));
            let lhs = f(&(&q1 + &q2)) + f(&DMatrix::zeros(6, 3));
            assert!((lhs - f(&q1) - f(&q2)).abs() < 1e-10);
        }
        // Ψ ≡ 0, α = 0: unit weights.
        let ones = exp_weight(&DMatrix::zeros(6, 3), 0.0);
        assert!(ones.iter().all(|x| *x == 1.0));
    }

    #[test]
    fn chi2_cases() {
        let residual = DMatrix::from_row_slice(1, 2, &[2.0, 5.0]);
        let d_u = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_eq!(chi2_regularizer(&residual, &d_u), 2.0);
        assert_eq!(chi2_regularizer(&DMatrix::zeros(1, 2), &d_u), 0.0);
    }

    #[test]
    fn convexity_probe_on_known_functions() {
        let x1 = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let x2 = DMatrix::from_row_slice(1, 1, &[2.0]);
        assert!(convexity_probe(|x| x[(0, 0)] * x[(0, 0)], &x1, &x2, 9) < 0.0);
        assert!(convexity_probe(|x| -x[(0, 0)] * x[(0, 0)], &x1, &x2, 9) > 0.0);
    }

    #[test]
    fn policy_soft_value_support_errors() {
        let q = DMatrix::zeros(1, 2);
        let mu = Policy::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        let pi = Policy::uniform(1, 2);
        assert!(policy_soft_value(&q, &pi, &mu, 1.0).is_err());
        let greedy = Policy::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        assert_eq!(policy_soft_value(&q, &greedy, &mu, 1.0).unwrap()[0], 0.0);
    }
}
