//! Brute-force verifiers. Each probe draws seeded random instances, checks
//! one identity or inequality with an algorithm that shares no code path
//! with the trainer (grid search, golden-section search, mirror descent in
//! policy space), and reports the worst case it saw.
//!
//! Every probe takes a [`Mutation`]; under the right mutation it must fail.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::datasets::{rollout, trajectory_seed, visit_counts, Role, Weighting};
use crate::envs::{random_distribution, random_mdp, random_policy};
use crate::error::{Error, Result};
use crate::mdp::{occupancy_of_policy, state_occupancy, OccupancyMeasure, Policy, TabularMdp, TransitionModel};
use crate::objectives::{
    bellman_residual, convexity_probe, f_objective, policy_soft_value, DualProblem, Formulas, Mutation,
};
use crate::trainer::{policy_extract_awbc_with, policy_extract_qwbc_with};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub name: String,
    pub n_trials: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub worst_case: serde_json::Value,
    pub passed: bool,
}

impl ProbeReport {
    fn new(name: impl Into<String>, n_trials: usize, tolerance: f64, worst: Worst) -> Self {
        let passed = worst.violation <= tolerance;
        ProbeReport {
            name: name.into(),
            n_trials,
            max_violation: worst.violation,
            tolerance,
            worst_case: worst.case,
            passed,
        }
    }
}

/// Running maximum of a violation and the inputs that produced it.
struct Worst {
    violation: f64,
    case: serde_json::Value,
}

impl Worst {
    fn new() -> Self {
        Worst {
            violation: 0.0,
            case: serde_json::Value::Null,
        }
    }

    fn update(&mut self, violation: f64, case: impl FnOnce() -> serde_json::Value) {
        // NaN counts as the worst possible outcome.
        let violation = if violation.is_nan() { f64::INFINITY } else { violation };
        if violation > self.violation || self.case.is_null() {
            self.violation = self.violation.max(violation);
            self.case = case();
        }
    }
}

fn matrix_json(m: &DMatrix<f64>) -> serde_json::Value {
    json!((0..m.nrows()).map(|s| m.row(s).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

/// `Ψ = log(d_g/d_u) − α log(d_b/d_u)` without clipping.
pub fn psi_unclipped(d_g: &DMatrix<f64>, d_b: &DMatrix<f64>, d_u: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d_g.nrows(), d_g.ncols(), |s, a| {
        (d_g[(s, a)] / d_u[(s, a)]).ln() - alpha * (d_b[(s, a)] / d_u[(s, a)]).ln()
    })
}

/// Identity between the two forms of `f` on random full-support tuples.
pub fn probe_reformulation(n_trials: usize, seed: u64, mutation: Mutation) -> ProbeReport {
    let formulas = Formulas::with(mutation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    for trial in 0..n_trials {
        let (ns, na) = (rng.gen_range(2..7), rng.gen_range(2..5));
        let base = trajectory_seed(seed, trial as u64);
        let draw = |k: u64| random_distribution(ns, na, trajectory_seed(base, k)).into_matrix();
        let (d, d_g, d_b, d_u) = (draw(0), draw(1), draw(2), draw(3));
        let alpha = rng.gen_range(0.0..=1.0);
        let psi = psi_unclipped(&d_g, &d_b, &d_u, alpha);
        let direct = f_objective(&d, &d_g, &d_b, alpha);
        let reformed = formulas.f_reformulated(&d, &d_u, &psi, alpha);
        let violation = match (direct, reformed) {
            (Ok(x), Ok(y)) => (x - y).abs(),
            _ => f64::INFINITY,
        };
        worst.update(violation, || json!({"trial": trial, "alpha": alpha, "d": matrix_json(&d)}));
    }
    ProbeReport::new("reformulation", n_trials, 1e-10, worst)
}

/// Policy evaluation of `T^π[Q] ≡ 0`: the unique `q` with
/// `q = γ T V^π_Q` for a full-support `π`.
fn zero_residual_q(transition: &TransitionModel, gamma: f64, pi: &Policy, mu: &Policy, beta: f64) -> DMatrix<f64> {
    let (ns, na) = (transition.n_states(), transition.n_actions());
    // V^π_Q(s) = Σ_a π q − β KL(π(·|s)‖μ(·|s)); iterate the γ-contraction.
    let kl = DVector::from_fn(ns, |s, _| {
        (0..na)
            .map(|a| {
                let p = pi.prob(s, a);
                if p > 0.0 {
                    p * (p / mu.prob(s, a)).ln()
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    });
    let mut q = DMatrix::zeros(ns, na);
    for _ in 0..2000 {
        let v = DVector::from_fn(ns, |s, _| (0..na).map(|a| pi.prob(s, a) * q[(s, a)]).sum::<f64>() - beta * kl[s]);
        let next = transition.backup(&v) * gamma;
        let change = (&next - &q).amax();
        q = next;
        if change < 1e-15 {
            break;
        }
    }
    q
}

/// `L̃(Q,π) ≤ L(Q,π)` on random draws, with equality when `T^π[Q] ≡ 0`.
pub fn probe_lower_bound(n_trials: usize, seed: u64, mutation: Mutation) -> ProbeReport {
    let formulas = Formulas::with(mutation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    let (ns, na) = (6, 3);
    for trial in 0..n_trials {
        let base = trajectory_seed(seed, trial as u64);
        let mdp = random_mdp(ns, na, rng.gen_range(0.5..0.95), base).expect("random MDP");
        let d_u = random_distribution(ns, na, trajectory_seed(base, 1));
        let mu = d_u.conditional();
        let beta = rng.gen_range(0.5..2.0);
        let alpha = rng.gen_range(0.0..0.9);
        let psi = uniform_matrix(&mut rng, ns, na, -1.0, 1.0);
        let q = uniform_matrix(&mut rng, ns, na, -2.0, 2.0);
        let pi = random_policy(ns, na, trajectory_seed(base, 2));
        let problem = DualProblem {
            transition: &mdp.transition,
            gamma: mdp.gamma,
            p0: &mdp.p0,
            d_u: d_u.matrix(),
            mu_u: &mu,
            beta,
        };
        let gap_at = |q: &DMatrix<f64>, pi: &Policy| -> Result<(f64, f64)> {
            Ok((formulas.l_surrogate(&problem, q, pi, &psi, alpha)?, formulas.l_full(&problem, q, pi, &psi, alpha, None)?))
        };
        let inequality = match gap_at(&q, &pi) {
            Ok((lower, full)) => lower - full,
            Err(_) => f64::INFINITY,
        };
        worst.update(inequality, || json!({"trial": trial, "check": "inequality", "alpha": alpha, "beta": beta}));
        // Equality case at π = μ^U with q solving T^π[Q] ≡ 0.
        let q_eq = zero_residual_q(&mdp.transition, mdp.gamma, &mu, &mu, beta);
        let equality = match gap_at(&q_eq, &mu) {
            Ok((lower, full)) => (lower - full).abs(),
            Err(_) => f64::INFINITY,
        };
        worst.update(equality, || json!({"trial": trial, "check": "equality", "alpha": alpha, "beta": beta}));
    }
    ProbeReport::new("lower-bound", n_trials, 1e-9, worst)
}

/// Grid over the probability simplex in `na ≤ 3` dimensions at `step`.
fn simplex_grid(na: usize, step: f64) -> Vec<Vec<f64>> {
    let n = (1.0 / step).round() as usize;
    match na {
        1 => vec![vec![1.0]],
        2 => (0..=n).map(|i| vec![i as f64 / n as f64, 1.0 - i as f64 / n as f64]).collect(),
        3 => (0..=n)
            .flat_map(|i| (0..=n - i).map(move |j| (i, j)))
            .map(|(i, j)| {
                let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
                vec![x, y, (1.0 - x - y).max(0.0)]
            })
            .collect(),
        _ => panic!("simplex grid supports at most 3 actions"),
    }
}

/// Per-state `Σ_a π (q − β log(π/μ))` for one candidate row.
fn row_soft_value(q: &[f64], mu: &[f64], pi: &[f64], beta: f64) -> f64 {
    q.iter()
        .zip(mu)
        .zip(pi)
        .filter(|(_, p)| **p > 0.0)
        .map(|((q, m), p)| p * (q - beta * (p / m).ln()))
        .sum()
}

/// Inner maximization over π: the simplex grid never beats the closed-form
/// soft value, and the softmax policy attains it. Violations are reported in
/// units of each check's tolerance (1e-4 for the grid, 1e-6 for attainment).
pub fn probe_minimax_softvalue(n_trials: usize, seed: u64, mutation: Mutation) -> ProbeReport {
    const GRID_TOL: f64 = 1e-4;
    const ATTAIN_TOL: f64 = 1e-6;
    let formulas = Formulas::with(mutation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    let ns = 50;
    let grids = [simplex_grid(2, 0.005), simplex_grid(3, 0.005)];
    for trial in 0..n_trials {
        let na = 2 + trial % 2;
        let grid = &grids[na - 2];
        let beta = rng.gen_range(0.2..2.0);
        let q = uniform_matrix(&mut rng, ns, na, -3.0, 3.0);
        let mu = random_policy(ns, na, trajectory_seed(seed, trial as u64));
        let closed = formulas.soft_value(&q, &mu, beta);
        let softmax = Policy::softmax(&(&q / beta), Some(&mu));
        let attained = policy_soft_value(&q, &softmax, &mu, beta).expect("softmax shares the support of mu");
        for s in 0..ns {
            let q_row: Vec<f64> = q.row(s).iter().copied().collect();
            let mu_row: Vec<f64> = mu.probs().row(s).iter().copied().collect();
            let grid_max = grid
                .iter()
                .map(|pi| row_soft_value(&q_row, &mu_row, pi, beta))
                .fold(f64::NEG_INFINITY, f64::max);
            let violation = ((grid_max - closed[s]) / GRID_TOL).max((attained[s] - closed[s]).abs() / ATTAIN_TOL);
            worst.update(violation, || {
                json!({"trial": trial, "state": s, "beta": beta, "q": q_row, "mu": mu_row,
                       "grid_max": grid_max, "closed_form": closed[s], "attained": attained[s]})
            });
        }
    }
    ProbeReport::new("minimax-softvalue", n_trials, 1.0, worst)
}

/// Golden-section minimum of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Per-state golden-section argmin of the Extreme-V loss against the
/// log-sum-exp under the `d_u` conditional.
pub fn probe_extreme_v(n_trials: usize, seed: u64, mutation: Mutation) -> ProbeReport {
    let formulas = Formulas::with(mutation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    let (ns, na) = (10, 3);
    for trial in 0..n_trials {
        let beta = rng.gen_range(0.5..3.0);
        let q = uniform_matrix(&mut rng, ns, na, -3.0, 3.0);
        let d_u = random_distribution(ns, na, trajectory_seed(seed, trial as u64)).into_matrix();
        let reference = Policy::from_weights(&d_u);
        let closed = Formulas::EXACT.soft_value(&q, &reference, beta);
        for s in 0..ns {
            let q_row = DMatrix::from_fn(1, na, |_, a| q[(s, a)]);
            let w_row = DMatrix::from_fn(1, na, |_, a| d_u[(s, a)]);
            let j = |v: f64| formulas.j_extreme_v(&DVector::from_element(1, v), &q_row, &w_row, beta);
            let (lo, hi) = (q_row.min() - 10.0 * beta, q_row.max() + 10.0 * beta);
            let argmin = golden_section(j, lo, hi, 1e-11);
            worst.update((argmin - closed[s]).abs(), || {
                json!({"trial": trial, "state": s, "beta": beta, "argmin": argmin, "closed_form": closed[s]})
            });
        }
    }
    ProbeReport::new("extreme-v", n_trials, 1e-6, worst)
}

/// QW-BC and AW-BC agree row-wise for random `Q`, `V`, datasets and β.
pub fn probe_qwbc_awbc(n_trials: usize, seed: u64, mutation: Mutation) -> ProbeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    let (ns, na) = (10, 4);
    let betas = [0.5, 5.0, 50.0];
    for trial in 0..n_trials {
        let base = trajectory_seed(seed, trial as u64);
        let mdp = random_mdp(ns, na, 0.9, base).expect("random MDP");
        // Short, few trajectories so some states stay unvisited.
        let data = rollout(&mdp, &random_policy(ns, na, base ^ 1), 3, 2, base, Role::Union).expect("rollout");
        let counts = visit_counts(&data, 0.9, Weighting::Discounted);
        let beta = betas[trial % betas.len()];
        let q = uniform_matrix(&mut rng, ns, na, -20.0, 20.0);
        let v = DVector::from_fn(ns, |_, _| rng.gen_range(-50.0..50.0));
        let qw = policy_extract_qwbc_with(&q, &counts, beta, mutation);
        let aw = policy_extract_awbc_with(&q, &v, &counts, beta);
        worst.update(qw.max_abs_diff(&aw), || json!({"trial": trial, "beta": beta, "q": matrix_json(&q)}));
    }
    ProbeReport::new("qwbc-awbc", n_trials, 1e-12, worst)
}

/// Convexity of `f` in `d` along occupancy segments for each `α ≤ 1`, a
/// witnessed violation for each `α > 1`, and convexity of the
/// non-adversarial objective along Q segments. `f` is evaluated in its
/// reformulated form with exact, unclipped Ψ.
pub fn probe_convexity(alphas: &[f64], n_segments: usize, seed: u64, mutation: Mutation) -> Vec<ProbeReport> {
    const N_LAMBDAS: usize = 9;
    let formulas = Formulas::with(mutation);
    let (ns, na) = (5, 3);
    let mut reports = Vec::new();
    for (k, &alpha) in alphas.iter().enumerate() {
        let mut worst = Worst::new();
        let mut largest_gap = f64::NEG_INFINITY;
        for seg in 0..n_segments {
            let base = trajectory_seed(trajectory_seed(seed, k as u64), seg as u64);
            let mdp = random_mdp(ns, na, 0.9, base).expect("random MDP");
            let occ = |i: u64| occupancy_of_policy(&mdp, &random_policy(ns, na, trajectory_seed(base, i))).expect("occupancy");
            let (d1, d2, d_g, d_b, d_u) = (occ(1), occ(2), occ(3), occ(4), occ(5));
            let psi = psi_unclipped(d_g.matrix(), d_b.matrix(), d_u.matrix(), alpha);
            let f = |d: &DMatrix<f64>| formulas.f_reformulated(d, d_u.matrix(), &psi, alpha).unwrap_or(f64::NAN);
            let gap = convexity_probe(f, d1.matrix(), d2.matrix(), N_LAMBDAS);
            largest_gap = largest_gap.max(gap);
            if alpha <= 1.0 {
                worst.update(gap, || json!({"alpha": alpha, "segment": seg, "gap": gap}));
            }
        }
        if alpha <= 1.0 {
            reports.push(ProbeReport::new(format!("convexity-f-alpha-{alpha}"), n_segments, 1e-9, worst));
        } else {
            // Must find a violation above 1e-6; the shortfall is the violation.
            let mut worst = Worst::new();
            worst.update((1e-6 - largest_gap).max(0.0), || json!({"alpha": alpha, "largest_gap": largest_gap}));
            reports.push(ProbeReport::new(format!("nonconvexity-f-alpha-{alpha}"), n_segments, 0.0, worst));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    for seg in 0..n_segments {
        let base = trajectory_seed(seed ^ 0x5eed, seg as u64);
        let mdp = random_mdp(ns, na, rng.gen_range(0.5..0.95), base).expect("random MDP");
        let d_u = random_distribution(ns, na, trajectory_seed(base, 1));
        let mu = d_u.conditional();
        let alpha = rng.gen_range(0.0..0.9);
        let psi = uniform_matrix(&mut rng, ns, na, -1.0, 1.0);
        let problem = DualProblem {
            transition: &mdp.transition,
            gamma: mdp.gamma,
            p0: &mdp.p0,
            d_u: d_u.matrix(),
            mu_u: &mu,
            beta: rng.gen_range(0.5..2.0),
        };
        let q1 = uniform_matrix(&mut rng, ns, na, -5.0, 5.0);
        let q2 = uniform_matrix(&mut rng, ns, na, -5.0, 5.0);
        let objective = |q: &DMatrix<f64>| formulas.l_surrogate_q(&problem, q, &psi, alpha);
        // Scale-aware: objective values reach O(10), so allow rounding at that scale.
        let scale = objective(&q1).abs().max(objective(&q2).abs()).max(1.0);
        let gap = convexity_probe(objective, &q1, &q2, N_LAMBDAS) / scale;
        worst.update(gap, || json!({"segment": seg, "alpha": alpha, "gap": gap}));
    }
    reports.push(ProbeReport::new("convexity-q", n_segments, 1e-9, worst));
    reports
}

/// Every probe at the acceptance sizes.
pub fn run_all_probes(seed: u64, mutation: Mutation) -> Vec<ProbeReport> {
    let mut reports = vec![
        probe_reformulation(100, seed, mutation),
        probe_lower_bound(100, seed, mutation),
        probe_minimax_softvalue(20, seed, mutation),
        probe_extreme_v(20, seed, mutation),
        probe_qwbc_awbc(100, seed, mutation),
    ];
    reports.extend(probe_convexity(&[0.0, 0.5, 1.0, 2.0], 1000, seed, mutation));
    reports
}

/// Result of [`oracle_min_f`].
#[derive(Debug, Clone)]
pub struct MinFSolution {
    pub d: OccupancyMeasure,
    pub policy: Policy,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `Q^π_c` for per-pair cost `c`: solve `(I − γP_π)v = c_π`, then `q = c + γTv`.
fn cost_q(mdp: &TabularMdp, policy: &Policy, cost: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ns = mdp.n_states();
    let p_pi = mdp.transition.state_transition(policy);
    let c_pi = DVector::from_fn(ns, |s, _| policy.probs().row(s).dot(&cost.row(s)));
    let system = DMatrix::identity(ns, ns) - p_pi * mdp.gamma;
    let v = system
        .lu()
        .solve(&c_pi)
        .ok_or_else(|| Error::Internal("policy evaluation system is singular".into()))?;
    Ok(cost + mdp.transition.backup(&v) * mdp.gamma)
}

/// Minimizes `f(d) = KL(d‖d_g) − α KL(d‖d_b)` over occupancies of `mdp` by
/// mirror descent in policy space: the gradient `∇_d f` acts as a cost,
/// `π ← π·exp(−η Q^π_cost)` with backtracking on η. Stops once the
/// objective changes by less than 1e-8 (relative to `1 + |f|`).
pub fn oracle_min_f(mdp: &TabularMdp, d_g: &OccupancyMeasure, d_b: &OccupancyMeasure, alpha: f64, iters: usize) -> Result<MinFSolution> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Invalid(format!("oracle needs 0 ≤ alpha ≤ 1, got {alpha}")));
    }
    if mdp.n_states() * mdp.n_actions() > 200 {
        return Err(Error::Invalid("oracle is limited to S·A ≤ 200".into()));
    }
    let (g, b) = (d_g.matrix(), d_b.matrix());
    let objective = |d: &OccupancyMeasure| f_objective(d.matrix(), g, b, alpha);
    let mut policy = Policy::uniform(mdp.n_states(), mdp.n_actions());
    let mut d = occupancy_of_policy(mdp, &policy)?;
    let mut value = objective(&d)?;
    let mut eta = 1.0;
    for it in 1..=iters {
        let grad = DMatrix::from_fn(g.nrows(), g.ncols(), |s, a| {
            let x = d.get(s, a).max(1e-300);
            (x / g[(s, a)]).ln() + 1.0 - alpha * ((x / b[(s, a)]).ln() + 1.0)
        });
        let q = cost_q(mdp, &policy, &grad)?;
        let mut accepted = None;
        for _ in 0..60 {
            let logits = DMatrix::from_fn(q.nrows(), q.ncols(), |s, a| policy.prob(s, a).ln() - eta * q[(s, a)]);
            let candidate = Policy::softmax(&logits, None);
            let cand_d = occupancy_of_policy(mdp, &candidate)?;
            let cand_value = objective(&cand_d)?;
            if cand_value <= value {
                accepted = Some((candidate, cand_d, cand_value));
                break;
            }
            eta *= 0.5;
        }
        let Some((candidate, cand_d, cand_value)) = accepted else {
            return Ok(MinFSolution { d, policy, value, iterations: it, converged: true });
        };
        let change = value - cand_value;
        policy = candidate;
        d = cand_d;
        value = cand_value;
        eta = (eta * 2.0).min(1e3);
        if change < 1e-8 * (1.0 + value.abs()) {
            return Ok(MinFSolution { d, policy, value, iterations: it, converged: true });
        }
    }
    Ok(MinFSolution {
        d,
        policy,
        value,
        iterations: iters,
        converged: false,
    })
}

/// `V^π(s)` of the KL-regularized return `E[Σ γ^t (r − β log(π/μ))]`, by a
/// direct linear solve.
pub fn regularized_policy_value(
    transition: &TransitionModel,
    gamma: f64,
    reward: &DMatrix<f64>,
    policy: &Policy,
    reference: &Policy,
    beta: f64,
) -> Result<DVector<f64>> {
    let ns = transition.n_states();
    let zero_q = DMatrix::zeros(ns, transition.n_actions());
    let entropy = policy_soft_value(&zero_q, policy, reference, beta)?;
    let r_pi = DVector::from_fn(ns, |s, _| policy.probs().row(s).dot(&reward.row(s)) + entropy[s]);
    let system = DMatrix::identity(ns, ns) - transition.state_transition(policy) * gamma;
    system
        .lu()
        .solve(&r_pi)
        .ok_or_else(|| Error::Internal("policy evaluation system is singular".into()))
}

/// `E_{d^π}[r]` under the true dynamics, with `d^π` normalized.
pub fn expected_under_occupancy(transition: &TransitionModel, p0: &DVector<f64>, gamma: f64, policy: &Policy, r: &DMatrix<f64>) -> Result<f64> {
    let rho = state_occupancy(transition, p0, gamma, policy)?;
    Ok((0..rho.len()).map(|s| rho[s] * policy.probs().row(s).dot(&r.row(s))).sum())
}

/// Stationarity check used by the trainer tests: max over supported pairs
/// of `|q − γ E[v] − w|`.
pub fn stationarity_gap(q: &DMatrix<f64>, v: &DVector<f64>, w: &DMatrix<f64>, support: &DMatrix<bool>, transition: &TransitionModel, gamma: f64) -> f64 {
    let residual = bellman_residual(q, v, transition, gamma);
    (0..q.nrows())
        .flat_map(|s| (0..q.ncols()).map(move |a| (s, a)))
        .filter(|&(s, a)| support[(s, a)])
        .map(|(s, a)| (residual[(s, a)] - w[(s, a)]).abs())
        .fold(0.0, f64::max)
}
