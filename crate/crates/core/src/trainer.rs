//! The alternating Q / Extreme-V / QW-BC training loop and its variants.
//!
//! Everything is full-batch over the `S×A` table with exact expectations
//! under the smoothed union occupancy. Q and V steps are diagonally
//! preconditioned by the occupancy mass of each entry, so `lr_q` and `lr_v`
//! are per-sample step sizes independent of how often a pair was visited.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datasets::{build_union, DemonstrationSet, EmpiricalEstimates, Weighting};
use crate::error::{Error, Result};
use crate::mdp::{normalized_score, policy_return, Policy, TabularMdp};
use crate::objectives::{
    bellman_residual, chi2_regularizer, extreme_v_minimizer, j_extreme_v, l_q_given_v, Formulas, Mutation, QTable,
    VTable, EXTREME_V_T_MAX,
};
use crate::ratios::{
    compute_psi, default_psi_clip, exact_psi, ratio_from_discriminator, train_discriminator, Discriminator,
    DiscriminatorInput, PsiTable,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Linear lower-bound objective with weights `exp(Ψ/(1−α))`.
    #[default]
    Surrogate,
    /// Exact exponential objective with its exponent clipped to `[min_r, max_r]`.
    ClippedExp,
    /// `α = 1`: offline RL with reward Ψ.
    AlphaOneRl,
    /// `α ≥ 1` with weights `exp(Ψ)`.
    LargeAlpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub lr_q: f64,
    pub lr_v: f64,
    pub lr_disc: f64,
    pub steps_disc: usize,
    pub steps_main: usize,
    pub epsilon: f64,
    /// Ψ clip bounds; `None` selects [`default_psi_clip`].
    pub clip_lo: Option<f64>,
    pub clip_hi: Option<f64>,
    /// Exponent bounds for [`Mode::ClippedExp`].
    pub min_r: f64,
    pub max_r: f64,
    pub mode: Mode,
    pub occupancy_weighting: Weighting,
    pub discriminator_input: DiscriminatorInput,
    pub seed: u64,
    pub log_every: usize,
    /// Solve the Extreme-V step exactly per state instead of taking a gradient step.
    pub exact_v_solve: bool,
    /// Use the V implied by the target Q inside the χ² term.
    pub chi2_target_v: bool,
    pub chi2_weight: f64,
    /// Q value of unseen pairs in the α = 1 solver; `None` uses `min(Ψ)/(1−γ)`.
    pub off_support_q: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.5,
            beta: 5.0,
            gamma: 0.9,
            tau: 0.005,
            lr_q: 0.01,
            lr_v: 0.01,
            lr_disc: 1.0,
            steps_disc: 2000,
            steps_main: 5000,
            epsilon: 1e-6,
            clip_lo: None,
            clip_hi: None,
            min_r: -7.0,
            max_r: 7.0,
            mode: Mode::Surrogate,
            occupancy_weighting: Weighting::Discounted,
            discriminator_input: DiscriminatorInput::StateAction,
            seed: 0,
            log_every: 100,
            exact_v_solve: true,
            chi2_target_v: false,
            chi2_weight: 1.0,
            off_support_q: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self.mode {
            Mode::Surrogate | Mode::ClippedExp if !(0.0..1.0).contains(&self.alpha) => {
                return bad(format!("{:?} mode needs 0 ≤ alpha < 1, got {}", self.mode, self.alpha))
            }
            Mode::AlphaOneRl if self.alpha != 1.0 => return bad(format!("alpha_one_rl mode needs alpha = 1, got {}", self.alpha)),
            Mode::LargeAlpha if self.alpha < 1.0 => return bad(format!("large_alpha mode needs alpha ≥ 1, got {}", self.alpha)),
            _ => {}
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if !(self.lr_q >= 0.0 && self.lr_v >= 0.0 && self.lr_disc > 0.0) {
            return bad("learning rates must be non-negative (lr_disc positive)".into());
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.min_r > self.max_r {
            return bad("min_r exceeds max_r".into());
        }
        Ok(())
    }

    pub fn psi_clip(&self) -> (f64, f64) {
        let (lo, hi) = default_psi_clip(self.alpha);
        (self.clip_lo.unwrap_or(lo), self.clip_hi.unwrap_or(hi))
    }

    /// Per-pair Q-update weight for the configured mode.
    pub fn weights(&self, psi: &DMatrix<f64>) -> DMatrix<f64> {
        match self.mode {
            Mode::LargeAlpha => psi.map(f64::exp),
            _ => Formulas::EXACT.delta(psi, self.alpha),
        }
    }
}

/// Scores policies against the true MDP.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub mdp: TabularMdp,
    pub random_return: f64,
    pub expert_return: f64,
}

impl Evaluator {
    pub fn new(mdp: TabularMdp, expert: &Policy) -> Result<Self> {
        let random_return = policy_return(&mdp, &Policy::uniform(mdp.n_states(), mdp.n_actions()))?;
        let expert_return = policy_return(&mdp, expert)?;
        Ok(Evaluator {
            mdp,
            random_return,
            expert_return,
        })
    }

    /// `(return, normalized score)`.
    pub fn evaluate(&self, policy: &Policy) -> Result<(f64, f64)> {
        let ret = policy_return(&self.mdp, policy)?;
        Ok((ret, normalized_score(ret, self.random_return, self.expert_return)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: usize,
    pub l_q: f64,
    pub j_v: f64,
    pub mean_psi: f64,
    pub mean_delta: f64,
    pub policy_return: f64,
    pub normalized_score: f64,
}

pub const METRICS_HEADER: &str = "step,l_q,j_v,mean_psi,mean_delta,policy_return,normalized_score";

impl MetricRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.l_q, self.j_v, self.mean_psi, self.mean_delta, self.policy_return, self.normalized_score
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub q: QTable,
    pub v: VTable,
    pub q_target: QTable,
    pub policy: Policy,
    pub step: usize,
    pub metrics_log: Vec<MetricRecord>,
}

impl TrainState {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        let q = DMatrix::zeros(n_states, n_actions);
        TrainState {
            q_target: q.clone(),
            q,
            v: DVector::zeros(n_states),
            policy: Policy::uniform(n_states, n_actions),
            step: 0,
            metrics_log: Vec::new(),
        }
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for record in &self.metrics_log {
            out.push_str(&record.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Where the occupancy ratios come from.
#[derive(Debug, Clone)]
pub enum RatioSource {
    /// Train `c^G` (and `c^B` when bad data exists) on the datasets.
    Train,
    /// Reuse previously trained classifiers.
    Loaded {
        good: Discriminator,
        bad: Option<Discriminator>,
    },
    /// Use Ψ computed from these occupancies instead of classifiers.
    Exact {
        d_g: crate::mdp::OccupancyMeasure,
        d_b: Option<crate::mdp::OccupancyMeasure>,
        d_u: crate::mdp::OccupancyMeasure,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub state: TrainState,
    pub psi: PsiTable,
    pub disc_good: Option<Discriminator>,
    pub disc_bad: Option<Discriminator>,
}

/// Classifiers and Ψ. A missing bad set drops the second Ψ term.
pub fn estimate_psi(
    good: &DemonstrationSet,
    bad: &DemonstrationSet,
    union: &EmpiricalEstimates,
    config: &TrainConfig,
    source: &RatioSource,
) -> Result<(PsiTable, Option<Discriminator>, Option<Discriminator>)> {
    let (lo, hi) = config.psi_clip();
    let estimate = |data: &DemonstrationSet| {
        EmpiricalEstimates::from_data(data, config.gamma, config.epsilon, config.occupancy_weighting)
    };
    match source {
        RatioSource::Exact { d_g, d_b, d_u } => {
            let psi = exact_psi(d_g, if bad.is_empty() { None } else { d_b.as_ref() }, d_u, config.alpha, lo, hi)?;
            Ok((psi, None, None))
        }
        RatioSource::Train | RatioSource::Loaded { .. } => {
            let (disc_good, disc_bad) = match source {
                RatioSource::Loaded { good, bad } => (good.clone(), bad.clone()),
                _ => {
                    let g = estimate(good).map_err(|e| e.context("good dataset"))?;
                    let train = |pos: &EmpiricalEstimates| {
                        train_discriminator(&pos.d_hat, &union.d_hat, config.steps_disc, config.lr_disc, config.discriminator_input)
                    };
                    let disc_good = train(&g).map_err(|e| e.context("training c^G"))?;
                    let disc_bad = if bad.is_empty() {
                        None
                    } else {
                        let b = estimate(bad).map_err(|e| e.context("bad dataset"))?;
                        Some(train(&b).map_err(|e| e.context("training c^B"))?)
                    };
                    (disc_good, disc_bad)
                }
            };
            let ratio_g = ratio_from_discriminator(&disc_good);
            let ratio_b = if bad.is_empty() { None } else { disc_bad.as_ref().map(ratio_from_discriminator) };
            let psi = compute_psi(&ratio_g, ratio_b.as_ref(), config.alpha, lo, hi)?;
            Ok((psi, Some(disc_good), disc_bad))
        }
    }
}

/// Full ContraDICE run on the three datasets.
pub fn train_contradice(
    good: &DemonstrationSet,
    bad: &DemonstrationSet,
    mix: &DemonstrationSet,
    config: &TrainConfig,
    source: &RatioSource,
    evaluator: Option<&Evaluator>,
) -> Result<TrainOutput> {
    config.validate()?;
    if good.is_empty() || mix.is_empty() {
        return Err(Error::Invalid("good and mix datasets must be non-empty".into()));
    }
    let union = build_union(good, mix)?;
    let union_est = EmpiricalEstimates::from_data(&union, config.gamma, config.epsilon, config.occupancy_weighting)
        .map_err(|e| e.context("union dataset"))?;
    let (psi, disc_good, disc_bad) = estimate_psi(good, bad, &union_est, config, source)?;
    let state = match config.mode {
        Mode::AlphaOneRl => train_alpha_one_with_psi(&union_est, &psi, config, evaluator)?,
        _ => train_with_psi(&union_est, &psi, config, evaluator)?,
    };
    Ok(TrainOutput {
        state,
        psi,
        disc_good,
        disc_bad,
    })
}

/// `α = 1`: soft value iteration on reward Ψ over the union support.
pub fn train_alpha_one(
    good: &DemonstrationSet,
    bad: &DemonstrationSet,
    mix: &DemonstrationSet,
    config: &TrainConfig,
    evaluator: Option<&Evaluator>,
) -> Result<TrainOutput> {
    let config = TrainConfig {
        alpha: 1.0,
        mode: Mode::AlphaOneRl,
        ..config.clone()
    };
    train_contradice(good, bad, mix, &config, &RatioSource::Train, evaluator)
}

/// Naive `α ≥ 1` adaptation: the same loop with weights `exp(Ψ)`.
pub fn train_large_alpha(
    good: &DemonstrationSet,
    bad: &DemonstrationSet,
    mix: &DemonstrationSet,
    config: &TrainConfig,
    evaluator: Option<&Evaluator>,
) -> Result<TrainOutput> {
    let config = TrainConfig {
        mode: Mode::LargeAlpha,
        alpha: config.alpha.max(1.0),
        ..config.clone()
    };
    train_contradice(good, bad, mix, &config, &RatioSource::Train, evaluator)
}

/// Value of `V` used inside the χ² term.
fn chi2_v(state: &TrainState, est: &EmpiricalEstimates, config: &TrainConfig) -> VTable {
    if config.chi2_target_v {
        extreme_v_minimizer(&state.q_target, est.d_hat.matrix(), config.beta)
    } else {
        state.v.clone()
    }
}

/// Mode-specific Q-step weights at the current residual. For clipped-exp
/// mode the weight is `exp(clip(x))` with zero gradient outside the clip.
fn q_step_weights(residual: &DMatrix<f64>, weights: &DMatrix<f64>, psi: &PsiTable, config: &TrainConfig) -> DMatrix<f64> {
    match config.mode {
        Mode::ClippedExp => DMatrix::from_fn(residual.nrows(), residual.ncols(), |s, a| {
            let x = (psi.psi[(s, a)] - residual[(s, a)]) / (1.0 - config.alpha);
            if x < config.min_r || x > config.max_r {
                0.0
            } else {
                x.exp()
            }
        }),
        _ => weights.clone(),
    }
}

/// Value of the objective minimized by [`q_update`].
pub fn q_objective(state: &TrainState, psi: &PsiTable, est: &EmpiricalEstimates, config: &TrainConfig) -> f64 {
    let d_u = est.d_hat.matrix();
    let support = est.support_mask.map(|b| if b { 1.0 } else { 0.0 });
    let d_sup = d_u.component_mul(&support);
    let residual = bellman_residual(&state.q, &state.v, &est.transition_hat, config.gamma);
    let chi_residual = bellman_residual(&state.q, &chi2_v(state, est, config), &est.transition_hat, config.gamma);
    let chi = config.chi2_weight * chi2_regularizer(&chi_residual, &d_sup);
    match config.mode {
        Mode::ClippedExp => {
            let penalty: f64 = (0..residual.nrows())
                .flat_map(|s| (0..residual.ncols()).map(move |a| (s, a)))
                .map(|(s, a)| {
                    let x = ((psi.psi[(s, a)] - residual[(s, a)]) / (1.0 - config.alpha)).clamp(config.min_r, config.max_r);
                    d_sup[(s, a)] * x.exp()
                })
                .sum();
            (1.0 - config.gamma) * est.p0_hat.dot(&state.v) + (1.0 - config.alpha) * penalty + chi
        }
        _ => {
            let weights = config.weights(&psi.psi);
            l_q_given_v(&state.q, &state.v, &weights, &d_sup, &est.p0_hat, &est.transition_hat, config.gamma) + chi
        }
    }
}

/// One preconditioned gradient step on `L̃(Q|V) + χ²` over the union support.
/// Off-support entries receive no gradient.
pub fn q_update(state: &mut TrainState, psi: &PsiTable, est: &EmpiricalEstimates, config: &TrainConfig) -> Result<()> {
    let weights = config.weights(&psi.psi);
    let residual = bellman_residual(&state.q, &state.v, &est.transition_hat, config.gamma);
    let chi_residual = if config.chi2_target_v {
        bellman_residual(&state.q, &chi2_v(state, est, config), &est.transition_hat, config.gamma)
    } else {
        residual.clone()
    };
    let step_weights = q_step_weights(&residual, &weights, psi, config);
    for s in 0..state.q.nrows() {
        for a in 0..state.q.ncols() {
            if !est.support_mask[(s, a)] {
                continue;
            }
            // Gradient divided by d_u(s,a).
            let g = config.chi2_weight * chi_residual[(s, a)] - step_weights[(s, a)];
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    what: "Q gradient",
                    step: state.step,
                });
            }
            state.q[(s, a)] -= config.lr_q * g;
        }
    }
    Ok(())
}

/// Extreme-V step against the target Q. Exact mode solves each state's
/// minimizer in closed form; otherwise a gradient step preconditioned by
/// `β²/d_u(s)` (the inverse curvature at the optimum).
pub fn v_update(state: &mut TrainState, est: &EmpiricalEstimates, config: &TrainConfig) -> Result<()> {
    let d_u = est.d_hat.matrix();
    if config.exact_v_solve {
        state.v = extreme_v_minimizer(&state.q_target, d_u, config.beta);
        return Ok(());
    }
    let beta = config.beta;
    for s in 0..state.v.len() {
        let mass: f64 = d_u.row(s).sum();
        if mass <= 0.0 {
            continue;
        }
        let mean_exp: f64 = (0..d_u.ncols())
            .map(|a| {
                let t = ((state.q_target[(s, a)] - state.v[s]) / beta).min(EXTREME_V_T_MAX);
                d_u[(s, a)] * t.exp()
            })
            .sum::<f64>()
            / mass;
        let step = config.lr_v * beta * (mean_exp - 1.0);
        if !step.is_finite() {
            return Err(Error::NonFinite {
                what: "V gradient",
                step: state.step,
            });
        }
        state.v[s] += step;
    }
    Ok(())
}

/// `q_target ← τ q + (1−τ) q_target`.
pub fn target_update(state: &mut TrainState, tau: f64) {
    state.q_target = &state.q * tau + &state.q_target * (1.0 - tau);
}

/// QW-BC: `π(a|s) ∝ N_w(s,a) exp(q(s,a)/β)` with `N_w` the smoothed union
/// counts (so unvisited states come out uniform).
pub fn policy_extract_qwbc(q: &QTable, est: &EmpiricalEstimates, beta: f64) -> Policy {
    policy_extract_qwbc_with(q, est.d_hat.matrix(), beta, Mutation::None)
}

pub fn policy_extract_qwbc_with(q: &QTable, counts: &DMatrix<f64>, beta: f64, mutation: Mutation) -> Policy {
    let reference = if mutation == Mutation::DropBehaviorWeights {
        Policy::uniform(q.nrows(), q.ncols())
    } else {
        Policy::from_weights(counts)
    };
    Policy::softmax(&(q / beta), Some(&reference))
}

/// AW-BC: `π(a|s) ∝ N_w(s,a) exp((q(s,a) − v(s))/β)`.
pub fn policy_extract_awbc(q: &QTable, v: &VTable, est: &EmpiricalEstimates, beta: f64) -> Policy {
    policy_extract_awbc_with(q, v, est.d_hat.matrix(), beta)
}

pub fn policy_extract_awbc_with(q: &QTable, v: &VTable, counts: &DMatrix<f64>, beta: f64) -> Policy {
    let advantage = DMatrix::from_fn(q.nrows(), q.ncols(), |s, a| (q[(s, a)] - v[s]) / beta);
    Policy::softmax(&advantage, Some(&Policy::from_weights(counts)))
}

/// Behavior cloning: the smoothed empirical conditional of `data`.
pub fn train_bc(data: &DemonstrationSet, gamma: f64, epsilon: f64, weighting: Weighting) -> Result<Policy> {
    if data.is_empty() {
        return Err(Error::Invalid("behavior cloning needs a non-empty dataset".into()));
    }
    crate::datasets::empirical_behavior_policy(data, gamma, epsilon, weighting)
}

fn record(
    state: &TrainState,
    psi: &PsiTable,
    est: &EmpiricalEstimates,
    config: &TrainConfig,
    evaluator: Option<&Evaluator>,
) -> Result<MetricRecord> {
    let d_u = est.d_hat.matrix();
    let policy = policy_extract_qwbc(&state.q, est, config.beta);
    let (policy_return, normalized_score) = match evaluator {
        Some(ev) => ev.evaluate(&policy)?,
        None => (f64::NAN, f64::NAN),
    };
    Ok(MetricRecord {
        step: state.step,
        l_q: q_objective(state, psi, est, config),
        j_v: j_extreme_v(&state.v, &state.q_target, d_u, config.beta),
        mean_psi: d_u.component_mul(&psi.psi).sum(),
        mean_delta: d_u.component_mul(&config.weights(&psi.psi)).sum(),
        policy_return,
        normalized_score,
    })
}

/// Training for a fixed Ψ: `steps_main` rounds of Q-update,
/// V-update and soft target update, then QW-BC extraction.
pub fn train_with_psi(
    est: &EmpiricalEstimates,
    psi: &PsiTable,
    config: &TrainConfig,
    evaluator: Option<&Evaluator>,
) -> Result<TrainState> {
    config.validate()?;
    let mut state = TrainState::new(est.n_states(), est.n_actions());
    let log_every = config.log_every.max(1);
    for step in 0..config.steps_main {
        state.step = step;
        q_update(&mut state, psi, est, config).map_err(|e| e.context(format!("Q-update at step {step}")))?;
        v_update(&mut state, est, config).map_err(|e| e.context(format!("V-update at step {step}")))?;
        target_update(&mut state, config.tau);
        state.step = step + 1;
        if state.step % log_every == 0 {
            state.metrics_log.push(record(&state, psi, est, config, evaluator)?);
        }
    }
    if config.steps_main % log_every != 0 || config.steps_main == 0 {
        state.metrics_log.push(record(&state, psi, est, config, evaluator)?);
    }
    state.policy = policy_extract_qwbc(&state.q, est, config.beta);
    Ok(state)
}

/// Soft value iteration on reward Ψ restricted to the union support; unseen
/// pairs are pinned to `off_support_q` (default `min Ψ/(1−γ)`).
pub fn train_alpha_one_with_psi(
    est: &EmpiricalEstimates,
    psi: &PsiTable,
    config: &TrainConfig,
    evaluator: Option<&Evaluator>,
) -> Result<TrainState> {
    let (ns, na) = (est.n_states(), est.n_actions());
    let min_psi = (0..ns)
        .flat_map(|s| (0..na).map(move |a| (s, a)))
        .filter(|&(s, a)| est.support_mask[(s, a)])
        .map(|(s, a)| psi.psi[(s, a)])
        .fold(f64::INFINITY, f64::min);
    let pin = config
        .off_support_q
        .unwrap_or(if min_psi.is_finite() { min_psi / (1.0 - config.gamma) } else { 0.0 });
    let mu = &est.mu_hat;
    let mut q = DMatrix::from_fn(ns, na, |s, a| if est.support_mask[(s, a)] { psi.psi[(s, a)] } else { pin });
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < crate::mdp::SOFT_VI_MAX_ITERS {
        iterations += 1;
        let v = Formulas::EXACT.soft_value(&q, mu, config.beta);
        let backup = est.transition_hat.backup(&v);
        let next = DMatrix::from_fn(ns, na, |s, a| {
            if est.support_mask[(s, a)] {
                psi.psi[(s, a)] + config.gamma * backup[(s, a)]
            } else {
                pin
            }
        });
        residual = (&next - &q).amax();
        q = next;
        if residual < crate::mdp::SOFT_VI_TOL {
            break;
        }
    }
    if residual >= crate::mdp::SOFT_VI_TOL {
        return Err(Error::NotConverged {
            what: "alpha-one soft value iteration",
            iterations,
            residual,
        });
    }
    let v = Formulas::EXACT.soft_value(&q, mu, config.beta);
    let mut state = TrainState::new(ns, na);
    state.q_target = q.clone();
    state.q = q;
    state.v = v;
    state.step = iterations;
    state.policy = policy_extract_qwbc(&state.q, est, config.beta);
    let (policy_return, normalized_score) = match evaluator {
        Some(ev) => ev.evaluate(&state.policy)?,
        None => (f64::NAN, f64::NAN),
    };
    let d_u = est.d_hat.matrix();
    state.metrics_log.push(MetricRecord {
        step: iterations,
        l_q: f64::NAN,
        j_v: j_extreme_v(&state.v, &state.q, d_u, config.beta),
        mean_psi: d_u.component_mul(&psi.psi).sum(),
        mean_delta: f64::NAN,
        policy_return,
        normalized_score,
    });
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{rollout, Role};
    use crate::envs::{random_mdp, random_policy};
    use crate::objectives::soft_value_closed_form;

    fn small_problem(seed: u64) -> (TabularMdp, EmpiricalEstimates) {
        let mdp = random_mdp(8, 3, 0.9, seed).unwrap();
        let data = rollout(&mdp, &random_policy(8, 3, seed + 1), 30, 40, seed, Role::Union).unwrap();
        let est = EmpiricalEstimates::from_data(&data, 0.9, 1e-6, Weighting::Discounted).unwrap();
        (mdp, est)
    }

    fn config() -> TrainConfig {
        TrainConfig {
            alpha: 0.0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_mode_constraints() {
        let mut c = TrainConfig::default();
        c.validate().unwrap();
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        c.mode = Mode::AlphaOneRl;
        c.validate().unwrap();
        c.mode = Mode::LargeAlpha;
        c.alpha = 1.5;
        c.validate().unwrap();
        c.alpha = 0.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn q_stationary_point_with_unit_weights() {
        let (_, est) = small_problem(1);
        let psi = PsiTable::zeros(8, 3, 0.0);
        let cfg = TrainConfig { lr_q: 0.5, ..config() };
        let mut state = TrainState::new(8, 3);
        state.v = DVector::from_fn(8, |s, _| s as f64 * 0.3);
        for _ in 0..200 {
            q_update(&mut state, &psi, &est, &cfg).unwrap();
        }
        let residual = bellman_residual(&state.q, &state.v, &est.transition_hat, 0.9);
        for s in 0..8 {
            for a in 0..3 {
                if est.support_mask[(s, a)] {
                    assert!((residual[(s, a)] - 1.0).abs() < 1e-12);
                } else {
                    assert_eq!(state.q[(s, a)], 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_learning_rate_leaves_q() {
        let (_, est) = small_problem(2);
        let psi = PsiTable::zeros(8, 3, 0.0);
        let cfg = TrainConfig { lr_q: 0.0, ..config() };
        let mut state = TrainState::new(8, 3);
        state.q = DMatrix::from_fn(8, 3, |s, a| (s * 3 + a) as f64);
        let before = state.q.clone();
        q_update(&mut state, &psi, &est, &cfg).unwrap();
        assert_eq!(state.q, before);
    }

    #[test]
    fn q_objective_decreases_at_small_lr() {
        let (_, est) = small_problem(3);
        let mut psi = PsiTable::zeros(8, 3, 0.3);
        psi.psi = DMatrix::from_fn(8, 3, |s, a| ((s + 2 * a) as f64).sin());
        let cfg = TrainConfig {
            lr_q: 0.01,
            alpha: 0.3,
            ..config()
        };
        let mut state = TrainState::new(8, 3);
        state.v = DVector::from_fn(8, |s, _| (s as f64).cos());
        let mut last = q_objective(&state, &psi, &est, &cfg);
        for _ in 0..100 {
            q_update(&mut state, &psi, &est, &cfg).unwrap();
            let now = q_objective(&state, &psi, &est, &cfg);
            assert!(now <= last + 1e-12, "{now} > {last}");
            last = now;
        }
    }

    #[test]
    fn exact_v_solve_matches_closed_form() {
        let (_, est) = small_problem(4);
        let cfg = config();
        let mut state = TrainState::new(8, 3);
        state.q_target = DMatrix::from_fn(8, 3, |s, a| (s as f64) - 2.0 * a as f64);
        v_update(&mut state, &est, &cfg).unwrap();
        let expected = soft_value_closed_form(&state.q_target, &est.mu_hat, cfg.beta);
        assert!((&state.v - expected).amax() < 1e-10);

        state.q_target = DMatrix::from_element(8, 3, 2.5);
        v_update(&mut state, &est, &cfg).unwrap();
        assert!(state.v.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn gradient_v_steps_decrease_extreme_v() {
        let (_, est) = small_problem(5);
        let cfg = TrainConfig {
            exact_v_solve: false,
            lr_v: 0.1,
            ..config()
        };
        let mut state = TrainState::new(8, 3);
        state.q_target = DMatrix::from_fn(8, 3, |s, a| ((s * a) as f64).sin() * 3.0);
        let d_u = est.d_hat.matrix();
        let mut last = j_extreme_v(&state.v, &state.q_target, d_u, cfg.beta);
        for _ in 0..200 {
            v_update(&mut state, &est, &cfg).unwrap();
            let now = j_extreme_v(&state.v, &state.q_target, d_u, cfg.beta);
            assert!(now <= last + 1e-12);
            last = now;
        }
        let exact = extreme_v_minimizer(&state.q_target, d_u, cfg.beta);
        assert!((&state.v - exact).amax() < 1e-6);
    }

    #[test]
    fn target_update_recurrence() {
        let mut state = TrainState::new(2, 2);
        state.q = DMatrix::from_element(2, 2, 1.0);
        target_update(&mut state, 1.0);
        assert_eq!(state.q_target, state.q);

        state.q_target = DMatrix::zeros(2, 2);
        let tau = 0.005;
        let mut gap = 1.0;
        for _ in 0..50 {
            target_update(&mut state, tau);
            let new_gap = (&state.q - &state.q_target).amax();
            assert!((new_gap / gap - (1.0 - tau)).abs() < 1e-12);
            gap = new_gap;
        }
    }

    #[test]
    fn qwbc_cases() {
        let (_, est) = small_problem(6);
        let zero = DMatrix::zeros(8, 3);
        let bc = policy_extract_qwbc(&zero, &est, 5.0);
        assert!(bc.max_abs_diff(&est.mu_hat) < 1e-15);

        let beta = 3.0;
        let counts = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
        let q = DMatrix::from_row_slice(1, 2, &[0.0, beta * 2.0f64.ln()]);
        let pi = policy_extract_qwbc_with(&q, &counts, beta, Mutation::None);
        assert!((pi.prob(0, 0) - 0.5).abs() < 1e-15);

        let q = DMatrix::from_fn(8, 3, |s, a| (s as f64 * 1.7 - a as f64).sin() * 4.0);
        let v = soft_value_closed_form(&q, &est.mu_hat, beta);
        let aw = policy_extract_awbc(&q, &v, &est, beta);
        assert!(aw.max_abs_diff(&policy_extract_qwbc(&q, &est, beta)) <= 1e-12);
        let qv = DMatrix::from_fn(8, 3, |s, _| v[s]);
        assert!(policy_extract_awbc(&qv, &v, &est, beta).max_abs_diff(&est.mu_hat) < 1e-12);
    }

    #[test]
    fn bc_is_qwbc_at_zero() {
        let mdp = random_mdp(5, 2, 0.9, 1).unwrap();
        let data = rollout(&mdp, &random_policy(5, 2, 2), 10, 10, 3, Role::Mix).unwrap();
        let est = EmpiricalEstimates::from_data(&data, 0.9, 1e-6, Weighting::Discounted).unwrap();
        let bc = train_bc(&data, 0.9, 1e-6, Weighting::Discounted).unwrap();
        assert!(bc.max_abs_diff(&policy_extract_qwbc(&DMatrix::zeros(5, 2), &est, 2.0)) < 1e-15);
        assert!(train_bc(&DemonstrationSet::empty(5, 2, Role::Mix, 0), 0.9, 1e-6, Weighting::Discounted).is_err());
    }

    #[test]
    fn alpha_one_with_zero_psi_is_behavior_policy() {
        let (_, est) = small_problem(7);
        let psi = PsiTable::zeros(8, 3, 1.0);
        let cfg = TrainConfig {
            alpha: 1.0,
            mode: Mode::AlphaOneRl,
            ..TrainConfig::default()
        };
        let state = train_alpha_one_with_psi(&est, &psi, &cfg, None).unwrap();
        assert!(state.q.amax() < 1e-9);
        assert!(state.policy.max_abs_diff(&est.mu_hat) < 1e-9);
    }
}
