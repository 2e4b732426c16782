//! Finite MDPs, exact occupancy measures and soft value iteration.
//!
//! Occupancies are normalized discounted visitation distributions,
//! `d(s,a) = (1-γ) Σ_t γ^t P(s_t = s, a_t = a)`, so they sum to one and
//! `Σ d·r / (1-γ)` is the expected discounted return.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// Transition probabilities `T(s'|s,a)` stored densely as `S×A×S`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TransitionModel {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Invalid("MDP needs at least one state and one action".into()));
        }
        if probs.len() != n_states * n_actions * n_states {
            return Err(Error::Shape(format!(
                "transition tensor has {} entries, expected {}",
                probs.len(),
                n_states * n_actions * n_states
            )));
        }
        let model = TransitionModel {
            n_states,
            n_actions,
            probs,
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = model.row(s, a);
                if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                    return Err(Error::Invalid(format!("T(.|{s},{a}) has a negative or non-finite entry")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_TOL {
                    return Err(Error::Invalid(format!("T(.|{s},{a}) sums to {total}")));
                }
            }
        }
        Ok(model)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.probs[start..start + self.n_states]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    /// `Σ_{s'} T(s'|s,a) v(s')` for a single pair.
    #[inline]
    pub fn expected(&self, s: usize, a: usize, v: &DVector<f64>) -> f64 {
        self.row(s, a).iter().zip(v.iter()).map(|(p, x)| p * x).sum()
    }

    /// `(T v)(s,a)` for every pair.
    pub fn backup(&self, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_states, self.n_actions, |s, a| self.expected(s, a, v))
    }

    /// State-to-state matrix `P_π[s, s'] = Σ_a π(a|s) T(s'|s,a)`.
    pub fn state_transition(&self, policy: &Policy) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.n_states, self.n_states);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let w = policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (next, t) in self.row(s, a).iter().enumerate() {
                    p[(s, next)] += w * t;
                }
            }
        }
        p
    }
}

/// Stochastic policy `π(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: DMatrix<f64>,
}

impl Policy {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        for s in 0..probs.nrows() {
            let row = probs.row(s);
            if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(Error::Invalid(format!("policy row {s} has a negative or non-finite entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_TOL {
                return Err(Error::Invalid(format!("policy row {s} sums to {total}")));
            }
        }
        Ok(Policy { probs })
    }

    /// Builds a policy from non-negative per-row weights; all-zero rows become uniform.
    pub fn from_weights(weights: &DMatrix<f64>) -> Self {
        let (n_states, n_actions) = weights.shape();
        let mut probs = weights.clone();
        for s in 0..n_states {
            let total: f64 = weights.row(s).iter().sum();
            for a in 0..n_actions {
                probs[(s, a)] = if total > 0.0 {
                    weights[(s, a)] / total
                } else {
                    1.0 / n_actions as f64
                };
            }
        }
        Policy { probs }
    }

    /// Row-wise softmax of `logits`, optionally tilted by a reference policy:
    /// `π(a|s) ∝ reference(a|s) exp(logits(s,a))`.
    pub fn softmax(logits: &DMatrix<f64>, reference: Option<&Policy>) -> Self {
        let (n_states, n_actions) = logits.shape();
        let mut weights = DMatrix::zeros(n_states, n_actions);
        for s in 0..n_states {
            let max = (0..n_actions)
                .filter(|&a| reference.map_or(true, |r| r.prob(s, a) > 0.0))
                .map(|a| logits[(s, a)])
                .fold(f64::NEG_INFINITY, f64::max);
            for a in 0..n_actions {
                let base = reference.map_or(1.0, |r| r.prob(s, a));
                weights[(s, a)] = if base > 0.0 {
                    base * (logits[(s, a)] - max).exp()
                } else {
                    0.0
                };
            }
        }
        Policy::from_weights(&weights)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            probs: DMatrix::from_element(n_states, n_actions, 1.0 / n_actions as f64),
        }
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[(s, a)]
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    /// Largest absolute entry-wise difference between two policies.
    pub fn max_abs_diff(&self, other: &Policy) -> f64 {
        (&self.probs - &other.probs).amax()
    }
}

/// Normalized state-action occupancy `d(s,a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    d: DMatrix<f64>,
}

impl OccupancyMeasure {
    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        if d.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Invalid("occupancy has a negative or non-finite entry".into()));
        }
        let total = d.sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Invalid(format!("occupancy sums to {total}")));
        }
        Ok(OccupancyMeasure { d })
    }

    /// Normalizes non-negative weights into an occupancy.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        let total = weights.sum();
        if !(total > 0.0) {
            return Err(Error::Invalid("occupancy weights have no mass".into()));
        }
        OccupancyMeasure::new(weights / total)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.d
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.d[(s, a)]
    }

    pub fn state_marginal(&self) -> DVector<f64> {
        DVector::from_iterator(self.d.nrows(), self.d.row_iter().map(|r| r.sum()))
    }

    /// Conditional `d(a|s)`; states without mass get the uniform row.
    pub fn conditional(&self) -> Policy {
        Policy::from_weights(&self.d)
    }

    /// Mixture `λ·self + (1-λ)·other`.
    pub fn mix(&self, other: &OccupancyMeasure, lambda: f64) -> OccupancyMeasure {
        OccupancyMeasure {
            d: &self.d * lambda + &other.d * (1.0 - lambda),
        }
    }
}

/// Finite discounted MDP. The reward is environment truth used only for
/// data generation and scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub transition: TransitionModel,
    pub reward: DMatrix<f64>,
    pub p0: DVector<f64>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn new(transition: TransitionModel, reward: DMatrix<f64>, p0: DVector<f64>, gamma: f64) -> Result<Self> {
        let (s, a) = (transition.n_states(), transition.n_actions());
        if reward.shape() != (s, a) {
            return Err(Error::Shape(format!("reward is {:?}, expected ({s}, {a})", reward.shape())));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::Invalid("reward has a non-finite entry".into()));
        }
        if p0.len() != s {
            return Err(Error::Shape(format!("p0 has length {}, expected {s}", p0.len())));
        }
        if p0.iter().any(|p| !(*p >= 0.0)) || (p0.sum() - 1.0).abs() > ROW_TOL {
            return Err(Error::Invalid("p0 is not a probability vector".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Invalid(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        Ok(TabularMdp {
            transition,
            reward,
            p0,
            gamma,
        })
    }

    pub fn n_states(&self) -> usize {
        self.transition.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.transition.n_actions()
    }

    pub fn to_document(&self) -> MdpDocument {
        let (ns, na) = (self.n_states(), self.n_actions());
        MdpDocument {
            n_states: ns,
            n_actions: na,
            gamma: self.gamma,
            p0: self.p0.iter().copied().collect(),
            transition: (0..ns)
                .map(|s| (0..na).map(|a| self.transition.row(s, a).to_vec()).collect())
                .collect(),
            reward: (0..ns).map(|s| self.reward.row(s).iter().copied().collect()).collect(),
        }
    }

    pub fn from_document(doc: &MdpDocument) -> Result<Self> {
        let (ns, na) = (doc.n_states, doc.n_actions);
        if doc.transition.len() != ns || doc.transition.iter().any(|r| r.len() != na) {
            return Err(Error::Shape("transition nesting does not match n_states × n_actions".into()));
        }
        if doc.reward.len() != ns || doc.reward.iter().any(|r| r.len() != na) {
            return Err(Error::Shape("reward nesting does not match n_states × n_actions".into()));
        }
        let mut probs = Vec::with_capacity(ns * na * ns);
        for by_action in &doc.transition {
            for row in by_action {
                if row.len() != ns {
                    return Err(Error::Shape("transition row length does not match n_states".into()));
                }
                probs.extend_from_slice(row);
            }
        }
        let transition = TransitionModel::new(ns, na, probs)?;
        let reward = DMatrix::from_fn(ns, na, |s, a| doc.reward[s][a]);
        TabularMdp::new(transition, reward, DVector::from_vec(doc.p0.clone()), doc.gamma)
    }

    /// Canonical compact JSON. `serde_json` prints the shortest
    /// representation that round-trips each `f64` exactly.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("MDP document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text)?;
        TabularMdp::from_document(&doc)
    }

    /// 64-bit FNV-1a over the canonical JSON bytes.
    pub fn content_hash(&self) -> u64 {
        fnv1a64(self.to_json().as_bytes())
    }
}

/// On-disk MDP layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub p0: Vec<f64>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(PRIME))
}

/// Discounted state marginal `ρ = (1-γ)p0 + γ P_πᵀ ρ`, solved directly.
pub fn state_occupancy(transition: &TransitionModel, p0: &DVector<f64>, gamma: f64, policy: &Policy) -> Result<DVector<f64>> {
    let n = transition.n_states();
    let p_pi = transition.state_transition(policy);
    let system = DMatrix::identity(n, n) - p_pi.transpose() * gamma;
    let rhs = p0 * (1.0 - gamma);
    let rho = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("singular Bellman-flow system".into()))?;
    Ok(rho.map(|x| x.max(0.0)))
}

pub fn occupancy_of_policy(mdp: &TabularMdp, policy: &Policy) -> Result<OccupancyMeasure> {
    check_policy_shape(mdp, policy)?;
    let rho = state_occupancy(&mdp.transition, &mdp.p0, mdp.gamma, policy)?;
    let d = DMatrix::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| rho[s] * policy.prob(s, a));
    let total = d.sum();
    Ok(OccupancyMeasure { d: d / total })
}

/// Max-norm residual of the Bellman-flow constraint for `(d, π)`.
pub fn flow_residual(mdp: &TabularMdp, d: &OccupancyMeasure, policy: &Policy) -> f64 {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut inflow = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        for a in 0..na {
            let w = d.get(s, a);
            for (next, t) in mdp.transition.row(s, a).iter().enumerate() {
                inflow[next] += w * t;
            }
        }
    }
    let mut worst = 0.0f64;
    for s in 0..ns {
        let marginal = (1.0 - mdp.gamma) * mdp.p0[s] + mdp.gamma * inflow[s];
        for a in 0..na {
            worst = worst.max((d.get(s, a) - policy.prob(s, a) * marginal).abs());
        }
    }
    worst
}

/// Numerically stable `β log Σ_a w_a exp(x_a/β)` over entries with `w_a > 0`.
pub fn weighted_log_sum_exp(values: impl Iterator<Item = (f64, f64)> + Clone, beta: f64) -> f64 {
    let max = values
        .clone()
        .filter(|(w, _)| *w > 0.0)
        .map(|(_, x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values
        .filter(|(w, _)| *w > 0.0)
        .map(|(w, x)| w * ((x - max) / beta).exp())
        .sum();
    max + beta * sum.ln()
}

#[derive(Debug, Clone)]
pub struct SoftSolution {
    pub q: DMatrix<f64>,
    pub v: DVector<f64>,
    pub policy: Policy,
    pub iterations: usize,
}

pub const SOFT_VI_TOL: f64 = 1e-10;
pub const SOFT_VI_MAX_ITERS: usize = 100_000;

/// Soft value iteration with a uniform reference policy.
pub fn soft_value_iteration(mdp: &TabularMdp, reward: &DMatrix<f64>, beta: f64) -> Result<SoftSolution> {
    let reference = Policy::uniform(mdp.n_states(), mdp.n_actions());
    soft_value_iteration_with_reference(&mdp.transition, mdp.gamma, reward, beta, &reference, SOFT_VI_MAX_ITERS)
}

/// KL-regularized value iteration:
/// `v(s) = β log Σ_a ref(a|s) exp(q(s,a)/β)`, `q = r + γ T v`,
/// stopped once the max change in `q` falls below [`SOFT_VI_TOL`].
pub fn soft_value_iteration_with_reference(
    transition: &TransitionModel,
    gamma: f64,
    reward: &DMatrix<f64>,
    beta: f64,
    reference: &Policy,
    max_iters: usize,
) -> Result<SoftSolution> {
    if !(beta > 0.0) {
        return Err(Error::Invalid(format!("beta must be positive, got {beta}")));
    }
    let (ns, na) = (transition.n_states(), transition.n_actions());
    if reward.shape() != (ns, na) || reference.probs().shape() != (ns, na) {
        return Err(Error::Shape("reward/reference shape does not match the transition model".into()));
    }
    let soft_v = |q: &DMatrix<f64>| {
        DVector::from_fn(ns, |s, _| {
            weighted_log_sum_exp((0..na).map(|a| (reference.prob(s, a), q[(s, a)])), beta)
        })
    };
    let mut q = reward.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let v = soft_v(&q);
        let next = reward + transition.backup(&v) * gamma;
        residual = (&next - &q).amax();
        q = next;
        if !residual.is_finite() {
            break;
        }
        if residual < SOFT_VI_TOL {
            let v = soft_v(&q);
            let policy = Policy::softmax(&(&q / beta), Some(reference));
            return Ok(SoftSolution {
                q,
                v,
                policy,
                iterations: it,
            });
        }
    }
    Err(Error::NotConverged {
        what: "soft value iteration",
        iterations: max_iters,
        residual,
    })
}

/// Expected discounted return `E[Σ γ^t r_t] = Σ d·r / (1-γ)`.
pub fn policy_return(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    let d = occupancy_of_policy(mdp, policy)?;
    Ok(d.matrix().component_mul(&mdp.reward).sum() / (1.0 - mdp.gamma))
}

/// `(score - random) / (expert - random)`.
pub fn normalized_score(score: f64, random_score: f64, expert_score: f64) -> Result<f64> {
    let span = expert_score - random_score;
    if span.abs() < 1e-300 || !span.is_finite() {
        return Err(Error::Invalid(format!(
            "degenerate normalization: expert {expert_score} vs random {random_score}"
        )));
    }
    Ok((score - random_score) / span)
}

fn check_policy_shape(mdp: &TabularMdp, policy: &Policy) -> Result<()> {
    if policy.probs().shape() != (mdp.n_states(), mdp.n_actions()) {
        return Err(Error::Shape(format!(
            "policy is {:?}, MDP is ({}, {})",
            policy.probs().shape(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}
