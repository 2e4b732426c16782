//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use contradice::datasets::{build_union, rollout, EmpiricalEstimates, Role, Weighting};
use contradice::envs::{random_mdp, random_policy};
use contradice::experiment::{run_all, sweep, sweep_means, ExperimentConfig, Method, SweepAxis};
use contradice::mdp::{occupancy_of_policy, soft_value_iteration_with_reference};
use contradice::objectives::{
    bellman_residual, chi2_gradient, chi2_regularizer, j_extreme_v, j_extreme_v_gradient, l_q_given_v,
    l_q_given_v_gradient, Mutation,
};
use contradice::oracle::{
    expected_under_occupancy, probe_convexity, probe_extreme_v, probe_lower_bound, probe_minimax_softvalue,
    probe_qwbc_awbc, probe_reformulation, regularized_policy_value, ProbeReport,
};
use contradice::ratios::{
    discriminator_gradient, discriminator_loss, exact_psi, ratio_from_discriminator, train_discriminator,
    DiscriminatorInput,
};
use contradice::trainer::{train_alpha_one_with_psi, Mode, TrainConfig};
use contradice::{OccupancyMeasure, Policy, TabularMdp};
use nalgebra::{DMatrix, DVector};

const SEED: u64 = 0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn probes_outcome(reports: &[ProbeReport]) -> Outcome {
    let passed = reports.iter().all(|r| r.passed);
    let detail = reports
        .iter()
        .map(|r| format!("{} max {:.2e} (tol {:.0e})", r.name, r.max_violation, r.tolerance))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { passed, detail }
}

fn timed(limit_seconds: Option<f64>, run: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut outcome = run();
    let seconds = start.elapsed().as_secs_f64();
    outcome.detail = format!("{}; {seconds:.2}s", outcome.detail);
    if let Some(limit) = limit_seconds {
        if seconds >= limit {
            outcome.passed = false;
            outcome.detail.push_str(&format!(" (limit {limit}s)"));
        }
    }
    outcome
}

fn reformulation() -> Outcome {
    timed(Some(1.0), || probes_outcome(&[probe_reformulation(100, SEED, Mutation::None)]))
}

fn f_convexity() -> Outcome {
    timed(Some(10.0), || {
        let reports = probe_convexity(&[0.0, 0.5, 1.0, 2.0], 1000, SEED, Mutation::None);
        let f_reports: Vec<ProbeReport> = reports.into_iter().filter(|r| r.name != "convexity-q").collect();
        probes_outcome(&f_reports)
    })
}

fn lower_bound() -> Outcome {
    timed(None, || probes_outcome(&[probe_lower_bound(100, SEED, Mutation::None)]))
}

fn q_convexity_and_minimax() -> Outcome {
    timed(None, || {
        let mut reports: Vec<ProbeReport> = probe_convexity(&[], 1000, SEED, Mutation::None);
        reports.push(probe_minimax_softvalue(20, SEED, Mutation::None));
        probes_outcome(&reports)
    })
}

fn extreme_v() -> Outcome {
    timed(None, || probes_outcome(&[probe_extreme_v(20, SEED, Mutation::None)]))
}

fn qwbc_awbc() -> Outcome {
    timed(None, || probes_outcome(&[probe_qwbc_awbc(100, SEED, Mutation::None)]))
}

/// Policy mixed halfway with uniform, so every pair keeps visible mass.
fn spread_policy(ns: usize, na: usize, seed: u64) -> Policy {
    let p = random_policy(ns, na, seed);
    Policy::new(p.probs().map(|x| 0.5 * x + 0.5 / na as f64)).unwrap()
}

/// Exact occupancy of the sampling process: uniform weight on steps `0..horizon`.
fn finite_horizon_occupancy(mdp: &TabularMdp, policy: &Policy, horizon: usize) -> DMatrix<f64> {
    let p_pi = mdp.transition.state_transition(policy);
    let mut p_t = mdp.p0.clone();
    let mut rho = DVector::zeros(mdp.n_states());
    for _ in 0..horizon {
        rho += &p_t;
        p_t = p_pi.transpose() * p_t;
    }
    rho /= horizon as f64;
    DMatrix::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| rho[s] * policy.prob(s, a))
}

fn discriminator_consistency() -> Outcome {
    timed(Some(30.0), || {
        let (ns, na, horizon, n_traj) = (10, 3, 100, 1000);
        let mdp = random_mdp(ns, na, 0.9, 70).unwrap();
        let (pi_g, pi_m) = (spread_policy(ns, na, 71), spread_policy(ns, na, 72));
        let good = rollout(&mdp, &pi_g, horizon, n_traj, 73, Role::Good).unwrap();
        let mix = rollout(&mdp, &pi_m, horizon, n_traj, 74, Role::Mix).unwrap();
        let union = build_union(&good, &mix).unwrap();
        let estimate = |data| EmpiricalEstimates::from_data(data, mdp.gamma, 1e-6, Weighting::Uniform).unwrap();
        let (g, u) = (estimate(&good), estimate(&union));
        let disc = train_discriminator(&g.d_hat, &u.d_hat, 2000, 1.0, DiscriminatorInput::StateAction).unwrap();
        let ratio = ratio_from_discriminator(&disc);
        let d_g = finite_horizon_occupancy(&mdp, &pi_g, horizon);
        let d_u = (&d_g + finite_horizon_occupancy(&mdp, &pi_m, horizon)) * 0.5;
        let worst = (0..ns)
            .flat_map(|s| (0..na).map(move |a| (s, a)))
            .filter(|&(s, a)| d_g[(s, a)] > 0.0 && d_u[(s, a)] > 0.0)
            .map(|(s, a)| {
                let exact = d_g[(s, a)] / d_u[(s, a)];
                (ratio[(s, a)] - exact).abs() / exact
            })
            .fold(0.0, f64::max);
        Outcome {
            passed: worst <= 0.05,
            detail: format!("{} samples per set, max relative error {worst:.4}", horizon * n_traj),
        }
    })
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Worst relative error of `grad` against central differences of `f` over every coordinate.
fn check_gradient(x: &[f64], f: impl Fn(&[f64]) -> f64, grad: &[f64]) -> f64 {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += h;
            minus[i] -= h;
            relative_error(grad[i], (f(&plus) - f(&minus)) / (2.0 * h))
        })
        .fold(0.0, f64::max)
}

fn gradient_checks() -> Outcome {
    timed(None, || {
        let (ns, na) = (6, 3);
        let mdp = random_mdp(ns, na, 0.9, 80).unwrap();
        let d_u = occupancy_of_policy(&mdp, &random_policy(ns, na, 81)).unwrap().into_matrix();
        let q = DMatrix::from_fn(ns, na, |s, a| ((s * na + a) as f64 * 0.37).sin() * 2.0);
        let v = DVector::from_fn(ns, |s, _| (s as f64 * 0.91).cos());
        let weights = DMatrix::from_fn(ns, na, |s, a| ((s + 2 * a) as f64 * 0.3).exp() * 0.2);
        let beta = 0.8;
        let as_q = |x: &[f64]| DMatrix::from_column_slice(ns, na, x);

        let l_q = check_gradient(
            q.as_slice(),
            |x| l_q_given_v(&as_q(x), &v, &weights, &d_u, &mdp.p0, &mdp.transition, mdp.gamma),
            l_q_given_v_gradient(&weights, &d_u).as_slice(),
        );
        let residual = bellman_residual(&q, &v, &mdp.transition, mdp.gamma);
        let chi2 = check_gradient(
            q.as_slice(),
            |x| chi2_regularizer(&bellman_residual(&as_q(x), &v, &mdp.transition, mdp.gamma), &d_u),
            chi2_gradient(&residual, &d_u).as_slice(),
        );
        let j = check_gradient(
            v.as_slice(),
            |x| j_extreme_v(&DVector::from_column_slice(x), &q, &d_u, beta),
            j_extreme_v_gradient(&v, &q, &d_u, beta).as_slice(),
        );
        let pos = occupancy_of_policy(&mdp, &random_policy(ns, na, 82)).unwrap();
        let mut disc =
            train_discriminator(&pos, &OccupancyMeasure::new(d_u.clone()).unwrap(), 20, 0.5, DiscriminatorInput::StateAction)
                .unwrap();
        disc.bias = 0.3;
        let (grad_w, grad_b) = discriminator_gradient(&disc, pos.matrix(), &d_u);
        let mut params = disc.weights.clone();
        params.push(disc.bias);
        let mut grad = grad_w;
        grad.push(grad_b);
        let disc_err = check_gradient(
            &params,
            |x| {
                let mut d = disc.clone();
                d.weights.copy_from_slice(&x[..x.len() - 1]);
                d.bias = x[x.len() - 1];
                discriminator_loss(&d, pos.matrix(), &d_u)
            },
            &grad,
        );
        let worst = l_q.max(chi2).max(j).max(disc_err);
        Outcome {
            passed: worst <= 1e-6,
            detail: format!("l_q {l_q:.1e}, chi2 {chi2:.1e}, J {j:.1e}, discriminator {disc_err:.1e}"),
        }
    })
}

fn end_to_end() -> Outcome {
    timed(Some(300.0), || {
        let config = ExperimentConfig::default();
        let mean = |method: Method| {
            let runs = run_all(&config.with_method(method), None).unwrap();
            runs.iter().map(|r| r.normalized_score).sum::<f64>() / runs.len() as f64
        };
        let (ours, g_only, bc_mix) = (mean(Method::Contradice), mean(Method::ContradiceG), mean(Method::BcMix));
        Outcome {
            passed: ours >= 0.9 && ours > g_only && ours > bc_mix,
            detail: format!("contradice {ours:.4}, contradice_g {g_only:.4}, bc_mix {bc_mix:.4}"),
        }
    })
}

fn sweep_table(axis: SweepAxis) -> Vec<(f64, f64)> {
    sweep_means(&sweep(&ExperimentConfig::default(), axis).unwrap())
}

fn format_table(table: &[(f64, f64)]) -> String {
    table.iter().map(|(v, s)| format!("{v}: {s:.4}")).collect::<Vec<_>>().join(", ")
}

fn bad_size_trend() -> Outcome {
    timed(None, || {
        let table = sweep_table(SweepAxis::BadSize);
        let at = |n: f64| table.iter().find(|(v, _)| *v == n).unwrap().1;
        Outcome {
            passed: at(10.0) >= at(0.0) - 0.05,
            detail: format_table(&table),
        }
    })
}

fn alpha_plateau() -> Outcome {
    timed(None, || {
        let table = sweep_table(SweepAxis::Alpha);
        let best = table.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
        let mut run = 0;
        let mut longest = 0;
        for (_, s) in &table {
            run = if *s >= best - 0.1 { run + 1 } else { 0 };
            longest = longest.max(run);
        }
        Outcome {
            passed: longest >= 3,
            detail: format!("longest near-best run {longest}; {}", format_table(&table)),
        }
    })
}

fn alpha_one_matches_value_iteration() -> Outcome {
    timed(None, || {
        let (ns, na) = (8, 3);
        let mut worst: f64 = 0.0;
        for seed in 0..10 {
            let mdp = random_mdp(ns, na, 0.9, 90 + seed).unwrap();
            let occ = |k: u64| occupancy_of_policy(&mdp, &random_policy(ns, na, 1000 * seed + k)).unwrap();
            let (d_g, d_b, d_mix) = (occ(1), occ(2), occ(3));
            let d_u = d_g.mix(&d_mix, 0.2);
            let config = TrainConfig {
                alpha: 1.0,
                beta: 1.0,
                mode: Mode::AlphaOneRl,
                ..TrainConfig::default()
            };
            let (lo, hi) = config.psi_clip();
            let psi = exact_psi(&d_g, Some(&d_b), &d_u, 1.0, lo, hi).unwrap();
            let est = EmpiricalEstimates::from_occupancy(&d_u, &mdp.transition, &mdp.p0);
            let state = train_alpha_one_with_psi(&est, &psi, &config, None).unwrap();

            let mu = d_u.conditional();
            let oracle =
                soft_value_iteration_with_reference(&mdp.transition, mdp.gamma, &psi.psi, config.beta, &mu, 1_000_000)
                    .unwrap();
            let value = |policy: &Policy| {
                let v = regularized_policy_value(&mdp.transition, mdp.gamma, &psi.psi, policy, &mu, config.beta).unwrap();
                (1.0 - mdp.gamma) * mdp.p0.dot(&v)
            };
            let reward = |policy: &Policy| expected_under_occupancy(&mdp.transition, &mdp.p0, mdp.gamma, policy, &psi.psi).unwrap();
            worst = worst
                .max((value(&state.policy) - value(&oracle.policy)).abs())
                .max((reward(&state.policy) - reward(&oracle.policy)).abs());
        }
        Outcome {
            passed: worst <= 1e-6,
            detail: format!("10 MDPs, max gap {worst:.2e}"),
        }
    })
}

fn mutation_sensitivity() -> Outcome {
    timed(None, || {
        type Probe = fn(Mutation) -> Vec<ProbeReport>;
        let probes: [(&str, Probe); 6] = [
            ("reformulation", |m| vec![probe_reformulation(100, SEED, m)]),
            ("lower-bound", |m| vec![probe_lower_bound(100, SEED, m)]),
            ("minimax-softvalue", |m| vec![probe_minimax_softvalue(2, SEED, m)]),
            ("extreme-v", |m| vec![probe_extreme_v(20, SEED, m)]),
            ("qwbc-awbc", |m| vec![probe_qwbc_awbc(100, SEED, m)]),
            ("convexity", |m| probe_convexity(&[0.0, 0.5, 1.0, 2.0], 200, SEED, m)),
        ];
        let mut parts = Vec::new();
        let mut passed = true;
        for (name, probe) in probes {
            let detected: Vec<&str> = Mutation::ALL
                .iter()
                .filter(|&&m| probe(m).iter().any(|r| !r.passed))
                .map(|m| m.name())
                .collect();
            passed &= !detected.is_empty();
            parts.push(format!("{name} <- [{}]", detected.join(", ")));
        }
        Outcome {
            passed,
            detail: parts.join("; "),
        }
    })
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("f identity", reformulation),
        ("f convexity", f_convexity),
        ("surrogate lower bound", lower_bound),
        ("Q-convexity and softmax inner max", q_convexity_and_minimax),
        ("Extreme-V identity", extreme_v),
        ("QW-BC equals AW-BC", qwbc_awbc),
        ("discriminator consistency", discriminator_consistency),
        ("gradient checks", gradient_checks),
        ("end-to-end gridworld", end_to_end),
        ("bad-size trend", bad_size_trend),
        ("alpha plateau", alpha_plateau),
        ("alpha = 1 versus value iteration", alpha_one_matches_value_iteration),
        ("mutation sensitivity", mutation_sensitivity),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check();
        failures += usize::from(!outcome.passed);
        println!(
            "criterion {:>2} {} {name}: {}",
            i + 1,
            if outcome.passed { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
