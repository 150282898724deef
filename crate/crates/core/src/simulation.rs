//! Monte Carlo estimate of extinction probabilities from the embedded jump
//! chain of the MBT: a phase-`i` individual dies with probability `a[i]` or is
//! replaced by a phase-`j` child and a phase-`k` parent with probability
//! `B[i][n*j + k]`. Continuous-time clocks are irrelevant for extinction.
//!
//! An episode is censored (counted as survival) once more than `max_pop`
//! individuals are alive, so estimates are biased low by the probability that
//! a population of that size still dies out.
//!
//! Trials are split into fixed-size blocks; block `b` of start phase `i` draws
//! from ChaCha8 stream `i * 2^32 + b` of the seed. Block counts are summed, so
//! the result does not depend on how blocks are scheduled across threads.

use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::Qve;

pub const GENERATOR: &str = "ChaCha8Rng";
pub const BLOCK_TRIALS: u64 = 4096;

const MASS_RENORMALIZE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Death,
    Birth { child: usize, parent: usize },
}

/// Outcomes of one individual's next event, restricted to positive mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffspringDistribution {
    pub phase: usize,
    pub outcomes: Vec<(Outcome, f64)>,
    /// Total mass minus one before renormalization.
    pub deviation: f64,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl OffspringDistribution {
    pub fn probability(&self, outcome: Outcome) -> f64 {
        self.outcomes
            .iter()
            .find(|(o, _)| *o == outcome)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn total_mass(&self) -> f64 {
        self.outcomes.iter().map(|(_, p)| p).sum()
    }

    /// Outcome at cumulative position `u ∈ [0, 1)`.
    pub fn pick(&self, u: f64) -> Outcome {
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.outcomes[idx.min(self.outcomes.len() - 1)].0
    }
}

pub fn offspring_distribution(q: &Qve, phase: usize) -> Result<OffspringDistribution> {
    let n = q.n();
    if phase >= n {
        return Err(Error::InvalidDimension(format!("phase {phase} out of range for n = {n}")));
    }
    let mut outcomes = Vec::new();
    let death = q.a()[phase];
    if death > 0.0 {
        outcomes.push((Outcome::Death, death));
    }
    for (c, &p) in q.b().row(phase).iter().enumerate() {
        if p > 0.0 {
            outcomes.push((
                Outcome::Birth {
                    child: c / n,
                    parent: c % n,
                },
                p,
            ));
        }
    }
    if outcomes.iter().any(|&(_, p)| !(0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidInput(format!("phase {phase} has a probability outside [0, 1]")));
    }
    let mass: f64 = outcomes.iter().map(|(_, p)| p).sum();
    let deviation = mass - 1.0;
    if deviation.abs() > MASS_RENORMALIZE || outcomes.is_empty() {
        return Err(Error::InvalidDistribution { phase, deviation });
    }
    for (_, p) in &mut outcomes {
        *p /= mass;
    }
    let mut acc = 0.0;
    let cumulative = outcomes
        .iter()
        .map(|&(_, p)| {
            acc += p;
            acc
        })
        .collect();
    Ok(OffspringDistribution {
        phase,
        outcomes,
        deviation,
        cumulative,
    })
}

/// Order in which live individuals are processed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Every live individual acts once per round; per-phase counts are drawn multinomially.
    Generation,
    /// One individual at a time, oldest first.
    Fifo,
    /// One individual at a time, newest first.
    Lifo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeEnd {
    Extinct,
    Censored,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCounts {
    pub trials: u64,
    pub extinct: u64,
    pub censored: u64,
}

impl std::ops::Add for BlockCounts {
    type Output = BlockCounts;

    fn add(self, o: BlockCounts) -> BlockCounts {
        BlockCounts {
            trials: self.trials + o.trials,
            extinct: self.extinct + o.extinct,
            censored: self.censored + o.censored,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub estimates: Vector,
    pub stderr: Vector,
    /// Trials per starting phase.
    pub trials: u64,
    /// Censored episodes summed over all starting phases.
    pub censored: u64,
    pub censored_by_phase: Vec<u64>,
    pub max_pop: u64,
    pub seed: u64,
    pub schedule: Schedule,
    pub generator: String,
}

/// Episode runner bound to one equation and one configuration.
#[derive(Clone, Debug)]
pub struct Simulator {
    dists: Vec<OffspringDistribution>,
    pub trials: u64,
    pub max_pop: u64,
    pub seed: u64,
    pub schedule: Schedule,
}

impl Simulator {
    pub fn new(q: &Qve, trials: u64, max_pop: u64, seed: u64, schedule: Schedule) -> Result<Self> {
        if trials == 0 || max_pop == 0 {
            return Err(Error::InvalidInput("trials and max_pop must be at least 1".into()));
        }
        let dists = (0..q.n()).map(|i| offspring_distribution(q, i)).collect::<Result<_>>()?;
        Ok(Self {
            dists,
            trials,
            max_pop,
            seed,
            schedule,
        })
    }

    pub fn n(&self) -> usize {
        self.dists.len()
    }

    pub fn blocks(&self) -> u64 {
        self.trials.div_ceil(BLOCK_TRIALS)
    }

    fn block_rng(&self, phase: usize, block: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((phase as u64) << 32) | block);
        rng
    }

    /// Runs block `block` of the episodes that start in `phase`.
    pub fn run_block(&self, phase: usize, block: u64) -> BlockCounts {
        let start = block * BLOCK_TRIALS;
        let trials = BLOCK_TRIALS.min(self.trials.saturating_sub(start));
        let mut rng = self.block_rng(phase, block);
        let mut counts = BlockCounts {
            trials,
            ..BlockCounts::default()
        };
        let mut scratch = Scratch::new(self.n());
        for _ in 0..trials {
            let end = match self.schedule {
                Schedule::Generation => self.generation_episode(phase, &mut rng, &mut scratch),
                Schedule::Fifo | Schedule::Lifo => self.keyed_episode(phase, rng.next_u64(), &mut scratch.queue),
            };
            match end {
                EpisodeEnd::Extinct => counts.extinct += 1,
                EpisodeEnd::Censored => counts.censored += 1,
            }
        }
        counts
    }

    pub fn run_phase(&self, phase: usize) -> BlockCounts {
        (0..self.blocks())
            .into_par_iter()
            .map(|b| self.run_block(phase, b))
            .reduce(BlockCounts::default, |x, y| x + y)
    }

    pub fn run(&self) -> Result<SimulationReport> {
        let per_phase: Vec<BlockCounts> = (0..self.n()).map(|i| self.run_phase(i)).collect();
        self.report(&per_phase)
    }

    /// Assembles a report from per-phase counts (one entry per starting phase).
    pub fn report(&self, per_phase: &[BlockCounts]) -> Result<SimulationReport> {
        let t = self.trials as f64;
        let est: Vec<f64> = per_phase.iter().map(|c| c.extinct as f64 / t).collect();
        let se: Vec<f64> = est.iter().map(|&p| (p * (1.0 - p) / t).sqrt()).collect();
        Ok(SimulationReport {
            estimates: Vector::new(est)?,
            stderr: Vector::new(se)?,
            trials: self.trials,
            censored: per_phase.iter().map(|c| c.censored).sum(),
            censored_by_phase: per_phase.iter().map(|c| c.censored).collect(),
            max_pop: self.max_pop,
            seed: self.seed,
            schedule: self.schedule,
            generator: GENERATOR.to_string(),
        })
    }

    fn generation_episode(&self, phase: usize, rng: &mut ChaCha8Rng, s: &mut Scratch) -> EpisodeEnd {
        s.live.fill(0);
        s.live[phase] = 1;
        loop {
            let total: u64 = s.live.iter().sum();
            if total == 0 {
                return EpisodeEnd::Extinct;
            }
            if total > self.max_pop {
                return EpisodeEnd::Censored;
            }
            s.next.fill(0);
            for (ph, &count) in s.live.iter().enumerate() {
                if count > 0 {
                    multinomial_step(&self.dists[ph], count, rng, &mut s.next);
                }
            }
            std::mem::swap(&mut s.live, &mut s.next);
        }
    }

    /// Individual-level episode whose tree is a function of `root_key` alone:
    /// every individual carries a key that fixes its outcome and its offspring's
    /// keys, so FIFO and LIFO walk the same tree.
    fn keyed_episode(&self, phase: usize, root_key: u64, queue: &mut VecDeque<(usize, u64)>) -> EpisodeEnd {
        queue.clear();
        queue.push_back((phase, root_key));
        loop {
            let next = match self.schedule {
                Schedule::Lifo => queue.pop_back(),
                _ => queue.pop_front(),
            };
            let Some((ph, key)) = next else {
                return EpisodeEnd::Extinct;
            };
            let mut node = ChaCha8Rng::seed_from_u64(key);
            let u: f64 = node.gen();
            if let Outcome::Birth { child, parent } = self.dists[ph].pick(u) {
                queue.push_back((child, node.next_u64()));
                queue.push_back((parent, node.next_u64()));
            }
            if queue.len() as u64 > self.max_pop {
                return EpisodeEnd::Censored;
            }
        }
    }
}

struct Scratch {
    live: Vec<u64>,
    next: Vec<u64>,
    queue: VecDeque<(usize, u64)>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            live: vec![0; n],
            next: vec![0; n],
            queue: VecDeque::new(),
        }
    }
}

/// Below this many individuals, outcomes are drawn one by one.
const DIRECT_DRAWS: u64 = 8;

fn add_outcome(outcome: Outcome, times: u64, next: &mut [u64]) {
    if let Outcome::Birth { child, parent } = outcome {
        next[child] += times;
        next[parent] += times;
    }
}

/// Distributes `count` phase-`i` individuals over their outcomes.
fn multinomial_step(dist: &OffspringDistribution, count: u64, rng: &mut ChaCha8Rng, next: &mut [u64]) {
    if count <= DIRECT_DRAWS {
        for _ in 0..count {
            add_outcome(dist.pick(rng.gen()), 1, next);
        }
        return;
    }
    let mut remaining = count;
    let mut mass = 1.0;
    let last = dist.outcomes.len() - 1;
    for (idx, &(outcome, p)) in dist.outcomes.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let k = if idx == last {
            remaining
        } else {
            let ratio = (p / mass).clamp(0.0, 1.0);
            mass -= p;
            if ratio >= 1.0 {
                remaining
            } else {
                Binomial::new(remaining, ratio).map_or(0, |b| b.sample(rng))
            }
        };
        remaining -= k;
        add_outcome(outcome, k, next);
    }
}

/// Extinction frequencies per starting phase under the generation schedule.
pub fn estimate_extinction(q: &Qve, trials: u64, max_pop: u64, seed: u64) -> Result<SimulationReport> {
    Simulator::new(q, trials, max_pop, seed, Schedule::Generation)?.run()
}
