//! Experiment driver: configs, synthetic data generation, multi-seed runs
//! and sweeps. The CLI is a thin wrapper around this module.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datasets::{rollout, save_dataset, trajectory_seed, DemonstrationSet, Role};
use crate::envs::{random_mdp, trap_suite, GridworldSpec};
use crate::error::{Error, Result};
use crate::mdp::{occupancy_of_policy, soft_value_iteration, OccupancyMeasure, Policy, TabularMdp};
use crate::ratios::Discriminator;
use crate::trainer::{
    train_alpha_one, train_bc, train_contradice, train_large_alpha, Evaluator, MetricRecord, Mode, RatioSource,
    TrainConfig, METRICS_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    #[default]
    Gridworld,
    Random,
}

/// Which learner a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Contradice,
    /// ContraDICE without the bad dataset.
    ContradiceG,
    BcMix,
    BcGood,
    AlphaOne,
    LargeAlpha,
    ClippedExp,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Contradice,
        Method::ContradiceG,
        Method::BcMix,
        Method::BcGood,
        Method::AlphaOne,
        Method::LargeAlpha,
        Method::ClippedExp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Contradice => "contradice",
            Method::ContradiceG => "contradice_g",
            Method::BcMix => "bc_mix",
            Method::BcGood => "bc_good",
            Method::AlphaOne => "alpha_one",
            Method::LargeAlpha => "large_alpha",
            Method::ClippedExp => "clipped_exp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Flat experiment config; every key has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvKind,
    /// Gridworld layout name, or `suite` for every layout.
    pub layout: String,
    pub slip: f64,
    pub random_states: usize,
    pub random_actions: usize,
    pub env_seed: u64,
    pub n_good: usize,
    pub n_bad: usize,
    /// Bad-policy rollouts in the mixed set.
    pub n_mix_bad: usize,
    /// Expert rollouts in the mixed set.
    pub n_mix_expert: usize,
    pub horizon: usize,
    /// Temperature of the soft-optimal expert on `r`.
    pub beta_good: f64,
    /// Temperature of the soft-optimal bad policy on `-r`.
    pub beta_bad: f64,
    /// Draw the bad set from the same rollouts as the bad part of the mixed set.
    pub bad_overlap: bool,
    pub seeds: usize,
    pub method: Method,
    pub exact_psi: bool,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "gridworld".into(),
            env: EnvKind::Gridworld,
            layout: "suite".into(),
            slip: 0.1,
            random_states: 8,
            random_actions: 3,
            env_seed: 0,
            n_good: 1,
            n_bad: 10,
            n_mix_bad: 100,
            n_mix_expert: 5,
            horizon: 30,
            beta_good: 0.001,
            beta_bad: 0.01,
            bad_overlap: true,
            seeds: 5,
            method: Method::Contradice,
            exact_psi: false,
            train: TrainConfig {
                epsilon: 1e-2,
                ..TrainConfig::default()
            },
        }
    }
}

const OPTIONAL_KEYS: [&str; 3] = ["clip_lo", "clip_hi", "off_support_q"];

impl ExperimentConfig {
    pub fn known_keys() -> BTreeSet<String> {
        let table = toml::Table::try_from(ExperimentConfig::default()).expect("default config serializes");
        table.keys().cloned().chain(OPTIONAL_KEYS.iter().map(|k| k.to_string())).collect()
    }

    /// Parses flat `key = value` TOML. Every unknown key is reported at once.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let known = Self::known_keys();
        let unknown: Vec<&str> = table.keys().filter(|k| !known.contains(*k)).map(String::as_str).collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        let config: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.seeds == 0 {
            return Err(Error::Config("horizon and seeds must be positive".into()));
        }
        if self.n_good == 0 {
            return Err(Error::Config("n_good must be positive".into()));
        }
        if self.n_mix_bad + self.n_mix_expert == 0 {
            return Err(Error::Config("the mixed dataset would be empty".into()));
        }
        if !(self.beta_good > 0.0 && self.beta_bad > 0.0) {
            return Err(Error::Config("beta_good and beta_bad must be positive".into()));
        }
        self.training_config().validate()
    }

    /// Train config with the mode the method needs.
    pub fn training_config(&self) -> TrainConfig {
        let mut train = self.train.clone();
        match self.method {
            Method::AlphaOne => {
                train.mode = Mode::AlphaOneRl;
                train.alpha = 1.0;
            }
            Method::LargeAlpha => {
                train.mode = Mode::LargeAlpha;
                train.alpha = train.alpha.max(1.0);
            }
            Method::ClippedExp => train.mode = Mode::ClippedExp,
            Method::ContradiceG => train.alpha = 0.0,
            _ => {}
        }
        train
    }

    pub fn with_method(&self, method: Method) -> Self {
        ExperimentConfig {
            method,
            ..self.clone()
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.train.seed + i).collect()
    }
}

/// One environment of a run.
#[derive(Debug, Clone)]
pub struct Task {
    pub name: String,
    pub mdp: TabularMdp,
}

pub fn build_tasks(config: &ExperimentConfig) -> Result<Vec<Task>> {
    match config.env {
        EnvKind::Random => Ok(vec![Task {
            name: format!("random{}", config.env_seed),
            mdp: random_mdp(config.random_states, config.random_actions, config.train.gamma, config.env_seed)?,
        }]),
        EnvKind::Gridworld => {
            let layouts: Vec<(String, GridworldSpec)> = trap_suite()
                .into_iter()
                .filter(|(name, _)| config.layout == "suite" || *name == config.layout)
                .collect();
            if layouts.is_empty() {
                return Err(Error::Config(format!("unknown gridworld layout `{}`", config.layout)));
            }
            layouts
                .into_iter()
                .map(|(name, spec)| {
                    let spec = GridworldSpec {
                        slip: config.slip,
                        gamma: config.train.gamma,
                        ..spec
                    };
                    Ok(Task { name, mdp: spec.build()? })
                })
                .collect()
        }
    }
}

/// Demonstration policies and the sampled datasets for one seed.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub expert: Policy,
    pub bad_policy: Policy,
    pub good: DemonstrationSet,
    pub bad: DemonstrationSet,
    pub mix: DemonstrationSet,
    /// Trailing expert trajectories in `mix`.
    pub mix_expert_count: usize,
}

impl GeneratedData {
    /// True occupancies `(d^G, d^B, d^U)` implied by the generating policies.
    pub fn exact_occupancies(&self, mdp: &TabularMdp) -> Result<(OccupancyMeasure, OccupancyMeasure, OccupancyMeasure)> {
        let d_g = occupancy_of_policy(mdp, &self.expert)?;
        let d_b = occupancy_of_policy(mdp, &self.bad_policy)?;
        let n_expert = (self.good.len() + self.mix_expert_count) as f64;
        let total = (self.good.len() + self.mix.len()) as f64;
        let d_u = d_g.mix(&d_b, n_expert / total);
        Ok((d_g, d_b, d_u))
    }
}

pub fn demonstration_policies(config: &ExperimentConfig, mdp: &TabularMdp) -> Result<(Policy, Policy)> {
    let expert = soft_value_iteration(mdp, &mdp.reward, config.beta_good)?.policy;
    let bad = soft_value_iteration(mdp, &(-&mdp.reward), config.beta_bad)?.policy;
    Ok((expert, bad))
}

/// Samples `ℬ^G`, `ℬ^B` and `ℬ^MIX` (bad rollouts followed by expert rollouts).
pub fn generate_data(config: &ExperimentConfig, mdp: &TabularMdp, seed: u64) -> Result<GeneratedData> {
    let (expert, bad_policy) = demonstration_policies(config, mdp)?;
    let h = config.horizon;
    let good = rollout(mdp, &expert, h, config.n_good, trajectory_seed(seed, 1), Role::Good)?;
    let mix_bad = rollout(mdp, &bad_policy, h, config.n_mix_bad, trajectory_seed(seed, 2), Role::Mix)?;
    let mix_expert = rollout(mdp, &expert, h, config.n_mix_expert, trajectory_seed(seed, 3), Role::Mix)?;
    let bad_seed = if config.bad_overlap { trajectory_seed(seed, 2) } else { trajectory_seed(seed, 4) };
    let bad = rollout(mdp, &bad_policy, h, config.n_bad, bad_seed, Role::Bad)?;
    let mut mix = mix_bad;
    mix.seed = seed;
    mix.trajectories.extend(mix_expert.trajectories);
    Ok(GeneratedData {
        expert,
        bad_policy,
        good,
        bad,
        mix,
        mix_expert_count: config.n_mix_expert,
    })
}

/// Outcome of one (task, seed) run.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub task: String,
    pub seed: u64,
    pub policy: Policy,
    pub policy_return: f64,
    pub normalized_score: f64,
    pub metrics: Vec<MetricRecord>,
    pub disc_good: Option<Discriminator>,
    pub disc_bad: Option<Discriminator>,
}

impl SeedRun {
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for record in &self.metrics {
            out.push_str(&record.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Trains `config.method` on freshly generated data for one task and seed.
pub fn run_seed(config: &ExperimentConfig, task: &Task, seed: u64, loaded: Option<RatioSource>) -> Result<SeedRun> {
    let data = generate_data(config, &task.mdp, seed)?;
    let evaluator = Evaluator::new(task.mdp.clone(), &data.expert)?;
    let train = config.training_config();
    let empty_bad = DemonstrationSet::empty(data.bad.n_states, data.bad.n_actions, Role::Bad, seed);
    let bad = if config.method == Method::ContradiceG { &empty_bad } else { &data.bad };
    let source = match loaded {
        Some(source) => source,
        None if config.exact_psi => {
            let (d_g, d_b, d_u) = data.exact_occupancies(&task.mdp)?;
            RatioSource::Exact {
                d_g,
                d_b: Some(d_b),
                d_u,
            }
        }
        None => RatioSource::Train,
    };
    let (policy, metrics, disc_good, disc_bad) = match config.method {
        Method::BcMix | Method::BcGood => {
            let set = if config.method == Method::BcMix { &data.mix } else { &data.good };
            let policy = train_bc(set, train.gamma, train.epsilon, train.occupancy_weighting)?;
            (policy, Vec::new(), None, None)
        }
        Method::AlphaOne if matches!(source, RatioSource::Train) => {
            let out = train_alpha_one(&data.good, bad, &data.mix, &train, Some(&evaluator))?;
            (out.state.policy, out.state.metrics_log, out.disc_good, out.disc_bad)
        }
        Method::LargeAlpha if matches!(source, RatioSource::Train) => {
            let out = train_large_alpha(&data.good, bad, &data.mix, &train, Some(&evaluator))?;
            (out.state.policy, out.state.metrics_log, out.disc_good, out.disc_bad)
        }
        _ => {
            let out = train_contradice(&data.good, bad, &data.mix, &train, &source, Some(&evaluator))?;
            (out.state.policy, out.state.metrics_log, out.disc_good, out.disc_bad)
        }
    };
    let (policy_return, normalized_score) = evaluator.evaluate(&policy)?;
    let mut metrics = metrics;
    if metrics.is_empty() {
        metrics.push(MetricRecord {
            step: 0,
            l_q: f64::NAN,
            j_v: f64::NAN,
            mean_psi: f64::NAN,
            mean_delta: f64::NAN,
            policy_return,
            normalized_score,
        });
    }
    Ok(SeedRun {
        task: task.name.clone(),
        seed,
        policy,
        policy_return,
        normalized_score,
        metrics,
        disc_good,
        disc_bad,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub task: String,
    pub seed: u64,
    pub policy_return: f64,
    pub normalized_score: f64,
}

/// Aggregated result of a multi-seed run. Policy returns are exact, so the
/// within-seed evaluation spread is zero and the std is across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub name: String,
    pub method: Method,
    pub config: ExperimentConfig,
    pub scores: Vec<ScoreEntry>,
    pub mean: f64,
    pub std: f64,
    pub metrics_paths: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
}

impl RunResult {
    /// Mean normalized score for one task.
    pub fn task_mean(&self, task: &str) -> Option<f64> {
        let scores: Vec<f64> = self.scores.iter().filter(|e| e.task == task).map(|e| e.normalized_score).collect();
        (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
    }

    pub fn tasks(&self) -> Vec<String> {
        let mut tasks: Vec<String> = Vec::new();
        for entry in &self.scores {
            if !tasks.contains(&entry.task) {
                tasks.push(entry.task.clone());
            }
        }
        tasks
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs every (task, seed) pair, in parallel across threads. Results come
/// back in task-then-seed order regardless of scheduling.
pub fn run_all(config: &ExperimentConfig, loaded: Option<&dyn Fn(&str, u64) -> Result<RatioSource>>) -> Result<Vec<SeedRun>> {
    config.validate()?;
    let tasks = build_tasks(config)?;
    let jobs: Vec<(&Task, u64)> = tasks.iter().flat_map(|t| config.seed_list().into_iter().map(move |s| (t, s))).collect();
    let sources = jobs
        .iter()
        .map(|(task, seed)| loaded.map(|f| f(&task.name, *seed)).transpose())
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<Result<SeedRun>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .zip(sources)
            .map(|((task, seed), source)| {
                scope.spawn(move || {
                    run_seed(config, task, *seed, source)
                        .map_err(|e| e.context(format!("{} on {} seed {}", config.method, task.name, seed)))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Internal("worker thread panicked".into()))))
            .collect()
    });
    results.into_iter().collect()
}

pub fn summarize(config: &ExperimentConfig, runs: &[SeedRun], metrics_paths: Vec<PathBuf>, seconds: f64) -> RunResult {
    let scores: Vec<ScoreEntry> = runs
        .iter()
        .map(|r| ScoreEntry {
            task: r.task.clone(),
            seed: r.seed,
            policy_return: r.policy_return,
            normalized_score: r.normalized_score,
        })
        .collect();
    let values: Vec<f64> = scores.iter().map(|e| e.normalized_score).collect();
    let (mean, std) = mean_std(&values);
    RunResult {
        name: config.name.clone(),
        method: config.method,
        config: config.clone(),
        scores,
        mean,
        std,
        metrics_paths,
        wall_clock_seconds: seconds,
    }
}

/// Directory of one seed's outputs.
pub fn seed_dir(out: &Path, config: &ExperimentConfig, task: &str, seed: u64) -> PathBuf {
    out.join(&config.name).join(task).join(seed.to_string())
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `runs/<name>/<task>/<seed>/{metrics.csv, policy.json}` and `runs/<name>/result.json`.
pub fn train_and_save(
    config: &ExperimentConfig,
    out: &Path,
    save_disc: bool,
    load_disc: Option<&Path>,
) -> Result<RunResult> {
    let start = Instant::now();
    let loader = |task: &str, seed: u64| -> Result<RatioSource> {
        let dir = seed_dir(load_disc.expect("loader only used with a directory"), config, task, seed);
        let good = Discriminator::load(&dir.join("disc_good.json"))?;
        let bad_path = dir.join("disc_bad.json");
        let bad = if bad_path.exists() { Some(Discriminator::load(&bad_path)?) } else { None };
        Ok(RatioSource::Loaded { good, bad })
    };
    let runs = run_all(config, load_disc.map(|_| &loader as &dyn Fn(&str, u64) -> Result<RatioSource>))?;
    let mut paths = Vec::new();
    for run in &runs {
        let dir = seed_dir(out, config, &run.task, run.seed);
        let metrics = dir.join("metrics.csv");
        write(&metrics, &run.metrics_csv())?;
        write(&dir.join("policy.json"), &serde_json::to_string(run.policy.probs().as_slice())?)?;
        if save_disc {
            if let Some(d) = &run.disc_good {
                d.save(&dir.join("disc_good.json"))?;
            }
            if let Some(d) = &run.disc_bad {
                d.save(&dir.join("disc_bad.json"))?;
            }
        }
        paths.push(metrics);
    }
    let result = summarize(config, &runs, paths, start.elapsed().as_secs_f64());
    write(&out.join(&config.name).join("result.json"), &serde_json::to_string_pretty(&result)?)?;
    Ok(result)
}

/// Re-scores saved policies against freshly built tasks.
pub fn evaluate_saved(config: &ExperimentConfig, out: &Path) -> Result<Vec<ScoreEntry>> {
    let tasks = build_tasks(config)?;
    let mut entries = Vec::new();
    for task in &tasks {
        let (expert, _) = demonstration_policies(config, &task.mdp)?;
        let evaluator = Evaluator::new(task.mdp.clone(), &expert)?;
        for seed in config.seed_list() {
            let path = seed_dir(out, config, &task.name, seed).join("policy.json");
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let probs: Vec<f64> = serde_json::from_str(&text)?;
            let matrix = nalgebra::DMatrix::from_vec(task.mdp.n_states(), task.mdp.n_actions(), probs);
            let policy = Policy::new(matrix).map_err(|e| e.context(path.display().to_string()))?;
            let (policy_return, normalized_score) = evaluator.evaluate(&policy)?;
            entries.push(ScoreEntry {
                task: task.name.clone(),
                seed,
                policy_return,
                normalized_score,
            });
        }
    }
    Ok(entries)
}

/// Writes `mdp.json` and the three datasets for one task and seed.
pub fn generate_and_save(config: &ExperimentConfig, out: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let mut written = Vec::new();
    for task in build_tasks(config)? {
        let dir = out.join(&task.name);
        let data = generate_data(config, &task.mdp, seed)?;
        let mdp_path = dir.join("mdp.json");
        write(&mdp_path, &task.mdp.to_json())?;
        written.push(mdp_path);
        let hash = task.mdp.content_hash();
        for set in [&data.good, &data.bad, &data.mix] {
            let path = dir.join(format!("{}.jsonl", set.role.file_stem()));
            save_dataset(&path, set, hash)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Alpha,
    BadSize,
    Beta,
    MixQuality,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepAxis::Alpha),
            "bad_size" => Ok(SweepAxis::BadSize),
            "beta" => Ok(SweepAxis::Beta),
            "mix_quality" => Ok(SweepAxis::MixQuality),
            _ => Err(Error::Config(format!(
                "unknown sweep axis `{s}` (expected alpha, bad_size, beta or mix_quality)"
            ))),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::BadSize => "bad_size",
            SweepAxis::Beta => "beta",
            SweepAxis::MixQuality => "mix_quality",
        }
    }

    pub fn values(self) -> Vec<f64> {
        match self {
            SweepAxis::Alpha => (0..10).map(|i| i as f64 / 10.0).collect(),
            SweepAxis::BadSize => vec![0.0, 1.0, 5.0, 10.0, 25.0],
            SweepAxis::Beta => vec![1.0, 3.0, 5.0, 10.0, 15.0, 20.0, 30.0],
            SweepAxis::MixQuality => vec![0.0, 1.0, 5.0, 10.0, 30.0],
        }
    }

    pub fn apply(self, config: &ExperimentConfig, value: f64) -> ExperimentConfig {
        let mut c = config.clone();
        match self {
            SweepAxis::Alpha => c.train.alpha = value,
            SweepAxis::BadSize => c.n_bad = value as usize,
            SweepAxis::Beta => c.train.beta = value,
            SweepAxis::MixQuality => c.n_mix_expert = value as usize,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub task: String,
    pub seed: u64,
    pub score: f64,
}

/// Runs every grid value of `axis`; rows are in value, task, seed order.
pub fn sweep(config: &ExperimentConfig, axis: SweepAxis) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for value in axis.values() {
        let point = axis.apply(config, value);
        let runs = run_all(&point, None).map_err(|e| e.context(format!("{} = {value}", axis.name())))?;
        rows.extend(runs.into_iter().map(|r| SweepRow {
            axis: axis.name().into(),
            value,
            task: r.task,
            seed: r.seed,
            score: r.normalized_score,
        }));
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("axis,value,task,seed,score\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.axis, r.value, r.task, r.seed, r.score));
    }
    out
}

/// Mean score per axis value, in grid order.
pub fn sweep_means(rows: &[SweepRow]) -> Vec<(f64, f64)> {
    let mut means: Vec<(f64, f64, usize)> = Vec::new();
    for r in rows {
        match means.iter_mut().find(|(v, _, _)| *v == r.value) {
            Some(entry) => {
                entry.1 += r.score;
                entry.2 += 1;
            }
            None => means.push((r.value, r.score, 1)),
        }
    }
    means.into_iter().map(|(v, total, n)| (v, total / n as f64)).collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write(path, text)
}
