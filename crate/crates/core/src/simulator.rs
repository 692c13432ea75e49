//! Stationary-regime simulation of the interacting chains for a fixed
//! environment.
//!
//! Each component i fires at time t with probability
//! `μ + (1-λ) dᵢ(x) / N`, where the drive `dᵢ(x)` counts active excitatory
//! in-neighbours plus silent inhibitory in-neighbours of the previous
//! configuration x. Drives are integers, so they are kept exactly: after each
//! step only the columns of flipped coordinates are revisited, unless more
//! than half the coordinates flipped, in which case all drives are recomputed
//! from packed rows with popcounts.
//!
//! The stationary start is approximated: the chain starts from i.i.d.
//! Bernoulli(m) coordinates and discards a burn-in (see
//! [`ModelParams::default_burn_in`](crate::params::ModelParams::default_burn_in)).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitMatrix;
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::params::TheoreticalConstants;
use crate::rng::{derive_seed, rng_from_seed, stream, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of retained steps T.
    pub t_samples: usize,
    /// Discarded steps; `None` uses the parameter-dependent default.
    pub burn_in: Option<usize>,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(t_samples: usize, seed: u64) -> Self {
        SimConfig { t_samples, burn_in: None, seed }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = Some(burn_in);
        self
    }
}

/// T consecutive configurations, one packed row per time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    states: BitMatrix,
    env_seed: u64,
    burn_in: usize,
}

impl Trajectory {
    pub fn from_states(states: BitMatrix, env_seed: u64, burn_in: usize) -> Self {
        Trajectory { states, env_seed, burn_in }
    }

    /// Build from explicit 0/1 rows (tests, imports).
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        let mut states = BitMatrix::zeros(rows.len(), n);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            for (i, &x) in row.iter().enumerate() {
                match x {
                    0 => {}
                    1 => states.set(t, i, true),
                    v => return Err(Error::Format { what: "trajectory", reason: format!("value {v} at ({t},{i})") }),
                }
            }
        }
        Ok(Trajectory { states, env_seed: 0, burn_in: 0 })
    }

    pub fn t(&self) -> usize {
        self.states.rows()
    }
    pub fn n(&self) -> usize {
        self.states.cols()
    }
    pub fn env_seed(&self) -> u64 {
        self.env_seed
    }
    pub fn burn_in(&self) -> usize {
        self.burn_in
    }
    pub fn states(&self) -> &BitMatrix {
        &self.states
    }
    #[inline]
    pub fn get(&self, t: usize, i: usize) -> bool {
        self.states.get(t, i)
    }
    pub fn row(&self, t: usize) -> Vec<u8> {
        self.states.row_to_vec(t)
    }

    pub fn summarize(&self) -> TrajectorySummary {
        summarize(self)
    }
}

/// Per-component counts and spatial means of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    /// Zᵢ = number of time steps component i was active.
    pub counts: Vec<u64>,
    /// Number of active components at each step.
    pub active: Vec<u32>,
    pub spatial_means: Vec<f64>,
    pub grand_mean: f64,
}

pub fn summarize(traj: &Trajectory) -> TrajectorySummary {
    let (t_len, n) = (traj.t(), traj.n());
    let mut counts = vec![0u64; n];
    let mut active = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let words = traj.states.row_words(t);
        active.push(words.iter().map(|w| w.count_ones()).sum());
        for (w, &word) in words.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                counts[w * 64 + bits.trailing_zeros() as usize] += 1;
                bits &= bits - 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let spatial_means = active.iter().map(|&a| if n == 0 { 0.0 } else { a as f64 / n as f64 }).collect();
    let cells = (t_len * n) as f64;
    TrajectorySummary {
        counts,
        active,
        spatial_means,
        grand_mean: if cells > 0.0 { total as f64 / cells } else { 0.0 },
    }
}

/// How drives are refreshed between steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveUpdate {
    /// Incremental over flipped columns, full recompute above 1/2 flip density.
    Adaptive,
    /// Always recompute from packed rows.
    Full,
}

/// Work counters from a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimStats {
    pub steps: u64,
    pub full_recomputes: u64,
    pub edge_visits: u64,
}

/// Precomputed transition kernel for one environment.
#[derive(Debug, Clone)]
pub struct Simulator {
    n: usize,
    /// θ rows restricted to excitatory columns.
    plus_rows: BitMatrix,
    /// θ rows restricted to inhibitory columns.
    minus_rows: BitMatrix,
    col_start: Vec<usize>,
    col_targets: Vec<u32>,
    col_is_plus: Vec<bool>,
    /// Firing probability indexed by drive 0..=N.
    prob_by_drive: Vec<f64>,
    initial_mean: f64,
    env_seed: u64,
    default_burn_in: usize,
}

impl Simulator {
    pub fn new(env: &Environment) -> Self {
        let n = env.n();
        let params = env.params();
        let theta = env.theta();
        let layout = env.layout();
        let plus_mask = layout.plus_mask();

        let mut plus_rows = BitMatrix::zeros(n, n);
        let mut minus_rows = BitMatrix::zeros(n, n);
        for i in 0..n {
            let row = theta.row_words(i);
            for (w, (&word, &mask)) in row.iter().zip(&plus_mask).enumerate() {
                plus_rows.row_words_mut(i)[w] = word & mask;
                minus_rows.row_words_mut(i)[w] = word & !mask;
            }
        }

        let mut col_start = Vec::with_capacity(n + 1);
        let mut col_targets = Vec::with_capacity(env.edge_count() as usize);
        col_start.push(0);
        for j in 0..n {
            col_targets.extend((0..n).filter(|&i| theta.get(i, j)).map(|i| i as u32));
            col_start.push(col_targets.len());
        }

        let coupling = (1.0 - params.lambda()) / n as f64;
        let mu = params.mu();
        let prob_by_drive = (0..=n).map(|d| (mu + coupling * d as f64).clamp(0.0, 1.0)).collect();

        Simulator {
            n,
            plus_rows,
            minus_rows,
            col_start,
            col_targets,
            col_is_plus: (0..n).map(|j| layout.is_plus(j)).collect(),
            prob_by_drive,
            initial_mean: TheoreticalConstants::from_params(params).m.clamp(0.0, 1.0),
            env_seed: env.seed(),
            default_burn_in: params.default_burn_in(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn pack(&self, state: &[u8]) -> Result<Vec<u64>> {
        if state.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: state.len() });
        }
        let mut words = vec![0u64; self.plus_rows.words_per_row()];
        for (i, &x) in state.iter().enumerate() {
            if x != 0 {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(words)
    }

    #[inline]
    fn drive_of(&self, i: usize, state: &[u64]) -> u32 {
        let plus = self.plus_rows.row_words(i);
        let minus = self.minus_rows.row_words(i);
        let mut d = 0;
        for w in 0..state.len() {
            d += (plus[w] & state[w]).count_ones() + (minus[w] & !state[w]).count_ones();
        }
        d
    }

    fn drives(&self, state: &[u64], out: &mut [u32]) {
        for (i, d) in out.iter_mut().enumerate() {
            *d = self.drive_of(i, state);
        }
    }

    /// Firing probabilities of every component given the previous state.
    pub fn transition_probs(&self, state: &[u8]) -> Result<Vec<f64>> {
        let packed = self.pack(state)?;
        Ok((0..self.n).map(|i| self.prob_by_drive[self.drive_of(i, &packed) as usize]).collect())
    }

    /// One transition from `state`.
    pub fn step(&self, state: &[u8], rng: &mut SimRng) -> Result<Vec<u8>> {
        let probs = self.transition_probs(state)?;
        Ok(probs.iter().map(|&p| (rng.gen::<f64>() < p) as u8).collect())
    }

    pub fn simulate(&self, config: &SimConfig) -> Trajectory {
        self.simulate_with(config, DriveUpdate::Adaptive).0
    }

    pub fn simulate_with(&self, config: &SimConfig, mode: DriveUpdate) -> (Trajectory, SimStats) {
        let n = self.n;
        let burn_in = config.burn_in.unwrap_or(self.default_burn_in);
        let mut rng = rng_from_seed(derive_seed(config.seed, &[stream::CHAIN]));
        let words = self.plus_rows.words_per_row();
        let mut stats = SimStats::default();

        let mut state = vec![0u64; words];
        for i in 0..n {
            if rng.gen::<f64>() < self.initial_mean {
                state[i / 64] |= 1 << (i % 64);
            }
        }
        let mut drive = vec![0u32; n];
        self.drives(&state, &mut drive);

        let mut next = vec![0u64; words];
        let mut out = BitMatrix::with_row_capacity(n, config.t_samples);
        for step in 0..burn_in + config.t_samples {
            next.iter_mut().for_each(|w| *w = 0);
            for (i, &d) in drive.iter().enumerate() {
                if rng.gen::<f64>() < self.prob_by_drive[d as usize] {
                    next[i / 64] |= 1 << (i % 64);
                }
            }
            self.refresh_drives(&state, &next, &mut drive, mode, &mut stats);
            std::mem::swap(&mut state, &mut next);
            stats.steps += 1;
            if step >= burn_in {
                out.push_row(&state);
            }
        }
        (Trajectory { states: out, env_seed: self.env_seed, burn_in }, stats)
    }

    fn refresh_drives(&self, prev: &[u64], next: &[u64], drive: &mut [u32], mode: DriveUpdate, stats: &mut SimStats) {
        let flips: u32 = prev.iter().zip(next).map(|(a, b)| (a ^ b).count_ones()).sum();
        if flips == 0 {
            return;
        }
        if mode == DriveUpdate::Full || 2 * flips as usize > self.n {
            self.drives(next, drive);
            stats.full_recomputes += 1;
            return;
        }
        for (w, (&a, &b)) in prev.iter().zip(next).enumerate() {
            let mut changed = a ^ b;
            while changed != 0 {
                let j = w * 64 + changed.trailing_zeros() as usize;
                changed &= changed - 1;
                let now_active = (b >> (j % 64)) & 1 == 1;
                // an excitatory input adds drive when active, an inhibitory one when silent
                let gain = now_active == self.col_is_plus[j];
                let targets = &self.col_targets[self.col_start[j]..self.col_start[j + 1]];
                stats.edge_visits += targets.len() as u64;
                for &i in targets {
                    let d = &mut drive[i as usize];
                    if gain {
                        *d += 1;
                    } else {
                        *d -= 1;
                    }
                }
            }
        }
    }
}

pub fn transition_probs(env: &Environment, state: &[u8]) -> Result<Vec<f64>> {
    Simulator::new(env).transition_probs(state)
}

pub fn step(env: &Environment, state: &[u8], rng: &mut SimRng) -> Result<Vec<u8>> {
    Simulator::new(env).step(state, rng)
}

pub fn simulate(env: &Environment, config: &SimConfig) -> Result<Trajectory> {
    if config.t_samples == 0 {
        return Err(Error::TooFewSteps { needed: 1, got: 0 });
    }
    Ok(Simulator::new(env).simulate(config))
}
