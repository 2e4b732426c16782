//! Demonstration sets, empirical occupancy / behavior-policy estimates and
//! JSON-lines persistence.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{OccupancyMeasure, Policy, TabularMdp, TransitionModel};

/// `(state, action, next_state)`.
pub type Step = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn initial_state(&self) -> Option<usize> {
        self.steps.first().map(|s| s.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Good,
    Bad,
    Mix,
    Union,
}

impl Role {
    pub fn file_stem(self) -> &'static str {
        match self {
            Role::Good => "good",
            Role::Bad => "bad",
            Role::Mix => "mix",
            Role::Union => "union",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

/// How visits are weighted when counting: `γ^t` per step or one per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Discounted,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemonstrationSet {
    pub n_states: usize,
    pub n_actions: usize,
    pub role: Role,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
}

impl DemonstrationSet {
    pub fn empty(n_states: usize, n_actions: usize, role: Role, seed: u64) -> Self {
        DemonstrationSet {
            n_states,
            n_actions,
            role,
            seed,
            trajectories: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(|t| t.steps.len()).sum()
    }

    /// Checks indices and that every transition is possible under `mdp`.
    pub fn validate_against(&self, mdp: &TabularMdp) -> Result<()> {
        if (self.n_states, self.n_actions) != (mdp.n_states(), mdp.n_actions()) {
            return Err(Error::Shape(format!(
                "dataset is {}×{}, MDP is {}×{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        for (i, traj) in self.trajectories.iter().enumerate() {
            for &(s, a, next) in &traj.steps {
                if s >= self.n_states || a >= self.n_actions || next >= self.n_states {
                    return Err(Error::Invalid(format!("trajectory {i} has an out-of-range step")));
                }
                if mdp.transition.prob(s, a, next) <= 0.0 {
                    return Err(Error::Invalid(format!(
                        "trajectory {i} uses impossible transition ({s},{a})->{next}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-trajectory generator seed derived from the master seed (splitmix64).
pub fn trajectory_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sample(rng: &mut impl Rng, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Samples `n_traj` fixed-horizon trajectories. Trajectory `i` uses its own
/// generator seeded by [`trajectory_seed`], so output depends only on the inputs.
pub fn rollout(
    mdp: &TabularMdp,
    policy: &Policy,
    horizon: usize,
    n_traj: usize,
    seed: u64,
    role: Role,
) -> Result<DemonstrationSet> {
    if horizon == 0 {
        return Err(Error::Invalid("horizon must be at least 1".into()));
    }
    if policy.probs().shape() != (mdp.n_states(), mdp.n_actions()) {
        return Err(Error::Shape("policy does not match the MDP".into()));
    }
    let trajectories = (0..n_traj)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(seed, i as u64));
            let mut s = sample(&mut rng, mdp.p0.iter().copied());
            let steps = (0..horizon)
                .map(|_| {
                    let a = sample(&mut rng, policy.probs().row(s).iter().copied());
                    let next = sample(&mut rng, mdp.transition.row(s, a).iter().copied());
                    let step = (s, a, next);
                    s = next;
                    step
                })
                .collect();
            Trajectory { steps }
        })
        .collect();
    Ok(DemonstrationSet {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        role,
        seed,
        trajectories,
    })
}

/// `ℬ^U = ℬ^G ∪ ℬ^MIX`. The union keeps the mix seed.
pub fn build_union(good: &DemonstrationSet, mix: &DemonstrationSet) -> Result<DemonstrationSet> {
    if (good.n_states, good.n_actions) != (mix.n_states, mix.n_actions) {
        return Err(Error::Shape(format!(
            "good set is {}×{}, mix set is {}×{}",
            good.n_states, good.n_actions, mix.n_states, mix.n_actions
        )));
    }
    let trajectories = good.trajectories.iter().chain(&mix.trajectories).cloned().collect();
    Ok(DemonstrationSet {
        n_states: mix.n_states,
        n_actions: mix.n_actions,
        role: Role::Union,
        seed: mix.seed,
        trajectories,
    })
}

/// Raw (unnormalized) visit weights per pair.
pub fn visit_counts(data: &DemonstrationSet, gamma: f64, weighting: Weighting) -> DMatrix<f64> {
    let mut counts = DMatrix::zeros(data.n_states, data.n_actions);
    for traj in &data.trajectories {
        let mut w = 1.0;
        for &(s, a, _) in &traj.steps {
            counts[(s, a)] += w;
            if weighting == Weighting::Discounted {
                w *= gamma;
            }
        }
    }
    counts
}

#[derive(Debug, Clone)]
pub struct EmpiricalOccupancy {
    pub d_hat: OccupancyMeasure,
    pub support_mask: DMatrix<bool>,
    pub counts: DMatrix<f64>,
}

/// Smoothed occupancy estimate. Counts are normalized to a distribution `c̃`
/// first, then `d̂ = (c̃ + ε) / (1 + S·A·ε)`, so every entry is at least
/// `ε / (1 + S·A·ε)` regardless of the dataset size.
pub fn empirical_occupancy(
    data: &DemonstrationSet,
    gamma: f64,
    epsilon: f64,
    weighting: Weighting,
) -> Result<EmpiricalOccupancy> {
    if !(epsilon > 0.0) {
        return Err(Error::Invalid(format!("smoothing epsilon must be positive, got {epsilon}")));
    }
    let counts = visit_counts(data, gamma, weighting);
    let total = counts.sum();
    if data.is_empty() || !(total > 0.0) {
        return Err(Error::Invalid(format!("{} dataset is empty", data.role)));
    }
    let n_pairs = (data.n_states * data.n_actions) as f64;
    let d = counts.map(|c| (c / total + epsilon) / (1.0 + n_pairs * epsilon));
    Ok(EmpiricalOccupancy {
        d_hat: OccupancyMeasure::from_weights(d)?,
        support_mask: counts.map(|c| c > 0.0),
        counts,
    })
}

/// Smoothed conditional `μ̂(a|s) = (c̃(s,a) + ε) / (c̃(s) + A·ε)`; unvisited
/// states get the uniform row. This is the conditional of the smoothed
/// occupancy, so both estimates describe the same behavior.
pub fn empirical_behavior_policy(
    data: &DemonstrationSet,
    gamma: f64,
    epsilon: f64,
    weighting: Weighting,
) -> Result<Policy> {
    Ok(empirical_occupancy(data, gamma, epsilon, weighting)?.d_hat.conditional())
}

/// Empirical `T̂(s'|s,a)` from weighted transition counts; pairs never seen
/// self-loop.
pub fn empirical_transition(data: &DemonstrationSet, gamma: f64, weighting: Weighting) -> Result<TransitionModel> {
    let (ns, na) = (data.n_states, data.n_actions);
    let mut probs = vec![0.0; ns * na * ns];
    for traj in &data.trajectories {
        let mut w = 1.0;
        for &(s, a, next) in &traj.steps {
            probs[(s * na + a) * ns + next] += w;
            if weighting == Weighting::Discounted {
                w *= gamma;
            }
        }
    }
    for (pair, row) in probs.chunks_mut(ns).enumerate() {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|x| *x /= total);
            let residue = 1.0 - row.iter().sum::<f64>();
            let argmax = (0..ns).max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap();
            row[argmax] += residue;
        } else {
            row[pair / na] = 1.0;
        }
    }
    TransitionModel::new(ns, na, probs)
}

/// Empirical distribution of trajectory initial states.
pub fn initial_state_distribution(data: &DemonstrationSet) -> Result<DVector<f64>> {
    let mut p0 = DVector::<f64>::zeros(data.n_states);
    for s in data.trajectories.iter().filter_map(Trajectory::initial_state) {
        p0[s] += 1.0;
    }
    let total = p0.sum();
    if !(total > 0.0) {
        return Err(Error::Invalid(format!("{} dataset has no initial states", data.role)));
    }
    Ok(p0 / total)
}

/// Everything the learner derives from one dataset.
#[derive(Debug, Clone)]
pub struct EmpiricalEstimates {
    pub d_hat: OccupancyMeasure,
    pub mu_hat: Policy,
    pub support_mask: DMatrix<bool>,
    pub counts: DMatrix<f64>,
    pub transition_hat: TransitionModel,
    pub p0_hat: DVector<f64>,
    pub epsilon: f64,
}

impl EmpiricalEstimates {
    pub fn from_data(data: &DemonstrationSet, gamma: f64, epsilon: f64, weighting: Weighting) -> Result<Self> {
        let occ = empirical_occupancy(data, gamma, epsilon, weighting)?;
        Ok(EmpiricalEstimates {
            mu_hat: occ.d_hat.conditional(),
            d_hat: occ.d_hat,
            support_mask: occ.support_mask,
            counts: occ.counts,
            transition_hat: empirical_transition(data, gamma, weighting)?,
            p0_hat: initial_state_distribution(data)?,
            epsilon,
        })
    }

    /// Estimates that equal the truth: an exact union occupancy with known
    /// dynamics. Every pair with positive mass counts as supported.
    pub fn from_occupancy(d_u: &OccupancyMeasure, transition: &TransitionModel, p0: &DVector<f64>) -> Self {
        EmpiricalEstimates {
            mu_hat: d_u.conditional(),
            d_hat: d_u.clone(),
            support_mask: d_u.matrix().map(|x| x > 0.0),
            counts: d_u.matrix().clone(),
            transition_hat: transition.clone(),
            p0_hat: p0.clone(),
            epsilon: 0.0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.d_hat.matrix().nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.d_hat.matrix().ncols()
    }

    pub fn state_visited(&self, s: usize) -> bool {
        self.support_mask.row(s).iter().any(|b| *b)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    role: Role,
    seed: u64,
    mdp_hash: String,
    n_states: usize,
    n_actions: usize,
    n_trajectories: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedDataset {
    pub set: DemonstrationSet,
    pub mdp_hash: u64,
    pub warnings: Vec<String>,
}

pub fn save_dataset(path: &Path, set: &DemonstrationSet, mdp_hash: u64) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let header = Header {
        role: set.role,
        seed: set.seed,
        mdp_hash: format!("{mdp_hash:016x}"),
        n_states: set.n_states,
        n_actions: set.n_actions,
        n_trajectories: set.len(),
    };
    let mut write_line = |text: String| writeln!(out, "{text}").map_err(|e| Error::io(path, e));
    write_line(serde_json::to_string(&header)?)?;
    for traj in &set.trajectories {
        write_line(serde_json::to_string(traj)?)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<LoadedDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines();
    let header_text = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header line".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&header_text).map_err(|e| parse_err(1, e.to_string()))?;
    let mdp_hash = u64::from_str_radix(&header.mdp_hash, 16).map_err(|e| parse_err(1, format!("bad mdp_hash: {e}")))?;

    let mut warnings = Vec::new();
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let named = [Role::Good, Role::Bad, Role::Mix, Role::Union]
        .into_iter()
        .find(|r| stem.eq_ignore_ascii_case(r.file_stem()));
    if let Some(named) = named {
        if named != header.role {
            let msg = format!("{}: header role {} does not match file name", path.display(), header.role);
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let mut trajectories = Vec::with_capacity(header.n_trajectories);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let traj: Trajectory = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if traj
            .steps
            .iter()
            .any(|&(s, a, n)| s >= header.n_states || a >= header.n_actions || n >= header.n_states)
        {
            return Err(parse_err(lineno, "step index out of range".into()));
        }
        trajectories.push(traj);
    }
    if trajectories.len() != header.n_trajectories {
        return Err(parse_err(
            trajectories.len() + 2,
            format!(
                "header declares {} trajectories, found {}",
                header.n_trajectories,
                trajectories.len()
            ),
        ));
    }
    Ok(LoadedDataset {
        set: DemonstrationSet {
            n_states: header.n_states,
            n_actions: header.n_actions,
            role: header.role,
            seed: header.seed,
            trajectories,
        },
        mdp_hash,
        warnings,
    })
}
