//! Synthetic environments: trap gridworlds and seeded random MDPs.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{OccupancyMeasure, Policy, TabularMdp, TransitionModel};

pub const UP: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;

/// Grid layout with an absorbing goal and absorbing traps.
///
/// Coordinates are `(row, col)`. With probability `slip` the move is
/// replaced by a uniformly random direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub traps: Vec<(usize, usize)>,
    pub slip: f64,
    pub gamma: f64,
    pub goal_reward: f64,
    pub trap_reward: f64,
    pub step_reward: f64,
}

impl Default for GridworldSpec {
    fn default() -> Self {
        GridworldSpec {
            width: 5,
            height: 5,
            start: (0, 0),
            goal: (4, 4),
            traps: vec![(1, 1), (1, 3), (3, 1), (3, 3)],
            slip: 0.1,
            gamma: 0.9,
            goal_reward: 1.0,
            trap_reward: -1.0,
            step_reward: 0.0,
        }
    }
}

impl GridworldSpec {
    pub fn state(&self, cell: (usize, usize)) -> usize {
        cell.0 * self.width + cell.1
    }

    pub fn cell(&self, state: usize) -> (usize, usize) {
        (state / self.width, state % self.width)
    }

    pub fn is_terminal(&self, cell: (usize, usize)) -> bool {
        cell == self.goal || self.traps.contains(&cell)
    }

    fn step(&self, cell: (usize, usize), action: usize) -> (usize, usize) {
        let (r, c) = cell;
        match action {
            UP if r > 0 => (r - 1, c),
            RIGHT if c + 1 < self.width => (r, c + 1),
            DOWN if r + 1 < self.height => (r + 1, c),
            LEFT if c > 0 => (r, c - 1),
            _ => cell,
        }
    }

    fn validate(&self) -> Result<()> {
        let inside = |(r, c): (usize, usize)| r < self.height && c < self.width;
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invalid("gridworld needs a positive size".into()));
        }
        if !inside(self.start) || !inside(self.goal) || !self.traps.iter().all(|t| inside(*t)) {
            return Err(Error::Invalid("gridworld cell outside the grid".into()));
        }
        if self.is_terminal(self.start) {
            return Err(Error::Invalid("gridworld start cell is terminal".into()));
        }
        if !(0.0..=1.0).contains(&self.slip) {
            return Err(Error::Invalid(format!("slip must lie in [0, 1], got {}", self.slip)));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<TabularMdp> {
        self.validate()?;
        let ns = self.width * self.height;
        let na = 4;
        let mut probs = vec![0.0; ns * na * ns];
        let mut reward = DMatrix::zeros(ns, na);
        for s in 0..ns {
            let cell = self.cell(s);
            for a in 0..na {
                let row = &mut probs[(s * na + a) * ns..(s * na + a + 1) * ns];
                if self.is_terminal(cell) {
                    row[s] = 1.0;
                    continue;
                }
                for (b, w) in (0..na).map(|b| {
                    let w = self.slip / na as f64 + if b == a { 1.0 - self.slip } else { 0.0 };
                    (b, w)
                }) {
                    row[self.state(self.step(cell, b))] += w;
                }
                let mut r = self.step_reward;
                for (next, p) in row.iter().enumerate() {
                    let next_cell = self.cell(next);
                    if next_cell == self.goal {
                        r += p * self.goal_reward;
                    } else if self.traps.contains(&next_cell) {
                        r += p * self.trap_reward;
                    }
                }
                reward[(s, a)] = r;
            }
        }
        let transition = TransitionModel::new(ns, na, probs)?;
        let mut p0 = DVector::zeros(ns);
        p0[self.state(self.start)] = 1.0;
        TabularMdp::new(transition, reward, p0, self.gamma)
    }
}

/// The trap-gridworld suite used for end-to-end runs.
pub fn trap_suite() -> Vec<(String, GridworldSpec)> {
    let base = GridworldSpec::default();
    vec![
        ("checker".to_string(), base.clone()),
        (
            "corridor".to_string(),
            GridworldSpec {
                traps: vec![(0, 2), (1, 2), (3, 2), (4, 2)],
                ..base.clone()
            },
        ),
        (
            "diagonal".to_string(),
            GridworldSpec {
                traps: vec![(0, 3), (1, 1), (2, 3), (3, 1), (4, 2)],
                ..base
            },
        ),
    ]
}

fn dirichlet_row(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= total);
    // Push the rounding residue into the largest entry so rows sum to one.
    let residue = 1.0 - row.iter().sum::<f64>();
    let argmax = (0..n).max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap();
    row[argmax] += residue;
    row
}

/// Dense random MDP: Dirichlet(1) transitions and `p0`, uniform rewards in `[0, 1)`.
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> Result<TabularMdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        probs.extend(dirichlet_row(&mut rng, n_states));
    }
    let transition = TransitionModel::new(n_states, n_actions, probs)?;
    let reward = DMatrix::from_fn(n_states, n_actions, |_, _| rng.gen::<f64>());
    let p0 = DVector::from_vec(dirichlet_row(&mut rng, n_states));
    TabularMdp::new(transition, reward, p0, gamma)
}

/// Random full-support policy with Dirichlet(1) rows.
pub fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<f64> = (0..n_states).flat_map(|_| dirichlet_row(&mut rng, n_actions)).collect();
    Policy::new(DMatrix::from_row_slice(n_states, n_actions, &rows)).expect("dirichlet rows are stochastic")
}

/// Random full-support distribution over state-action pairs (not
/// necessarily achievable by any policy).
pub fn random_distribution(n_states: usize, n_actions: usize, seed: u64) -> OccupancyMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = dirichlet_row(&mut rng, n_states * n_actions);
    let d = DMatrix::from_row_slice(n_states, n_actions, &w);
    OccupancyMeasure::from_weights(d.map(|x| x.max(1e-300))).expect("positive weights")
}
