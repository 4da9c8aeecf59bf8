//! Differential evolution over a bounded [`ParamSpace`], maximizing a
//! fitness function.
//!
//! Each generation builds a fresh frontier: for every member, three other
//! distinct members `x, y, z` are drawn, every dimension is replaced with
//! probability `cr` by `x + f * (z - y)` (clipped to the box), and the trial
//! survives only if strictly fitter than the member it challenges. Runs
//! start with one life; every trial that beats the best-so-far earns one
//! more generation, and `iter_cap` bounds the total. With `early_exit` off the
//! lives are still tracked but only `iter_cap` stops the run.
//!
//! Integer dimensions are rounded only when a vector is handed to the
//! fitness function; the stored genome stays continuous.

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{param_space, LearnerKind};
use crate::rng::{self, Rng};
use crate::space::{ParamSpace, ParamVector};

pub const DEFAULT_F: f64 = 0.8;
pub const DEFAULT_CR: f64 = 0.9;
/// Population size per tuned parameter.
pub const NP_PER_DIMENSION: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub np: usize,
    pub f: f64,
    pub cr: f64,
    pub iter_cap: usize,
    pub seed: u64,
    /// Stop as soon as the lives run out. When false only `iter_cap` ends
    /// the run.
    #[serde(default = "early_exit_default")]
    pub early_exit: bool,
}

fn early_exit_default() -> bool {
    true
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.np < 4 {
            return Err(Error::InvalidConfig(format!("np must be at least 4, got {}", self.np)));
        }
        if !(self.f > 0.0) || !self.f.is_finite() {
            return Err(Error::InvalidConfig(format!("f must be positive, got {}", self.f)));
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return Err(Error::InvalidConfig(format!("cr must lie in [0, 1], got {}", self.cr)));
        }
        if self.iter_cap == 0 {
            return Err(Error::InvalidConfig("iter_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Tuning settings for a learner: ten candidates per hyperparameter,
/// `F = 0.8`, `CR = 0.9`, `iter` generations at most.
pub fn default_de_config(kind: LearnerKind, iter: usize) -> DeConfig {
    DeConfig {
        np: NP_PER_DIMENSION * param_space(kind).dims(),
        f: DEFAULT_F,
        cr: DEFAULT_CR,
        iter_cap: iter,
        seed: 0,
        early_exit: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Continuous genome, inside the box.
    pub vector: ParamVector,
    /// Higher is better.
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeState {
    pub frontier: Vec<Candidate>,
    pub best: Candidate,
    pub lives: usize,
    pub generation: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub evaluations: usize,
    /// Lives left when the generation finished.
    pub lives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeOutcome {
    pub best: Candidate,
    /// Row 0 describes the initial population.
    pub history: Vec<GenerationRecord>,
    pub generations: usize,
    pub evaluations: usize,
    /// True when the run ended because no generation improved the best,
    /// false when it hit `iter_cap`.
    pub lives_exhausted: bool,
}

impl DeOutcome {
    /// CSV with columns `generation,best_fitness,evaluations_so_far`.
    pub fn write_history_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["generation", "best_fitness", "evaluations_so_far"])?;
        for h in &self.history {
            w.write_record([
                h.generation.to_string(),
                h.best_fitness.to_string(),
                h.evaluations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn evaluate<F>(space: &ParamSpace, v: &ParamVector, fitness: &F) -> Result<f64>
where
    F: Fn(&ParamVector) -> Result<f64>,
{
    let value = fitness(&space.materialize(v))?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteFitness {
            vector: v.to_string(),
        })
    }
}

fn argmax_first(c: &[Candidate]) -> usize {
    let mut best = 0;
    for (i, cand) in c.iter().enumerate().skip(1) {
        if cand.fitness > c[best].fitness {
            best = i;
        }
    }
    best
}

/// Uniform random population, evaluated. The best is the fittest member,
/// the lowest index on ties.
pub fn initialize<F>(space: &ParamSpace, cfg: &DeConfig, fitness: &F) -> Result<DeState>
where
    F: Fn(&ParamVector) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let mut r = rng::stream(cfg.seed, &[0]);
    let genomes: Vec<ParamVector> = (0..cfg.np)
        .map(|_| {
            space.vector(
                space
                    .specs()
                    .iter()
                    .map(|s| if s.low < s.high { r.random_range(s.low..=s.high) } else { s.low })
                    .collect(),
            )
        })
        .collect();
    let frontier = genomes
        .into_par_iter()
        .map(|v| {
            let fitness = evaluate(space, &v, fitness)?;
            Ok(Candidate { vector: v, fitness })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = frontier[argmax_first(&frontier)].clone();
    Ok(DeState {
        evaluations: frontier.len(),
        frontier,
        best,
        lives: 1,
        generation: 0,
    })
}

/// Donor `x + f * (z - y)`, clipped per dimension to the box.
pub fn mutate(x: &ParamVector, y: &ParamVector, z: &ParamVector, f: f64, space: &ParamSpace) -> ParamVector {
    space.vector(
        space
            .specs()
            .iter()
            .enumerate()
            .map(|(j, s)| s.clip(x.values()[j] + f * (z.values()[j] - y.values()[j])))
            .collect(),
    )
}

/// Mixes `donor` into `old`: each dimension independently takes the donor
/// value when a uniform draw falls below `cr`.
pub fn crossover(old: &ParamVector, donor: &ParamVector, cr: f64, space: &ParamSpace, rng: &mut Rng) -> ParamVector {
    space.vector(
        old.values()
            .iter()
            .zip(donor.values())
            .map(|(&o, &d)| if rng.random::<f64>() < cr { d } else { o })
            .collect(),
    )
}

/// Crossover then greedy selection: the trial replaces `old` only when its
/// fitness is strictly higher.
pub fn crossover_select<F>(
    old: &Candidate,
    donor: &ParamVector,
    cr: f64,
    fitness: &F,
    space: &ParamSpace,
    rng: &mut Rng,
) -> Result<Candidate>
where
    F: Fn(&ParamVector) -> Result<f64>,
{
    let trial = crossover(&old.vector, donor, cr, space, rng);
    let f = evaluate(space, &trial, fitness)?;
    Ok(select(old, Candidate { vector: trial, fitness: f }))
}

fn select(old: &Candidate, trial: Candidate) -> Candidate {
    if trial.fitness > old.fitness {
        trial
    } else {
        old.clone()
    }
}

/// Three distinct frontier indices, none equal to `current`.
fn pick_three(np: usize, current: usize, r: &mut Rng) -> [usize; 3] {
    let picked = sample(r, np - 1, 3);
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(picked.iter()) {
        *o = if p >= current { p + 1 } else { p };
    }
    out
}

/// Runs one generation in place. Trials are built from per-(generation,
/// member) random streams and evaluated in parallel; selection and
/// bookkeeping then proceed in member order.
pub fn step<F>(state: &mut DeState, space: &ParamSpace, cfg: &DeConfig, fitness: &F) -> Result<()>
where
    F: Fn(&ParamVector) -> Result<f64> + Sync,
{
    let generation = state.generation + 1;
    let np = state.frontier.len();
    let frontier = &state.frontier;
    let trials = (0..np)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, &[generation as u64, i as u64]);
            let [x, y, z] = pick_three(np, i, &mut r);
            let donor = mutate(&frontier[x].vector, &frontier[y].vector, &frontier[z].vector, cfg.f, space);
            let trial = crossover(&frontier[i].vector, &donor, cfg.cr, space, &mut r);
            let f = evaluate(space, &trial, fitness)?;
            Ok(Candidate { vector: trial, fitness: f })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut next = Vec::with_capacity(np);
    for (old, trial) in state.frontier.iter().zip(trials) {
        let kept = select(old, trial);
        if kept.fitness > state.best.fitness {
            state.best = kept.clone();
            state.lives += 1;
        }
        next.push(kept);
    }
    state.frontier = next;
    state.evaluations += np;
    state.generation = generation;
    Ok(())
}

pub fn run_de<F>(space: &ParamSpace, cfg: &DeConfig, fitness: F) -> Result<DeOutcome>
where
    F: Fn(&ParamVector) -> Result<f64> + Sync,
{
    let mut state = initialize(space, cfg, &fitness)?;
    let mut history = vec![GenerationRecord {
        generation: 0,
        best_fitness: state.best.fitness,
        evaluations: state.evaluations,
        lives: state.lives,
    }];
    let mut lives_exhausted = false;
    loop {
        if state.generation >= cfg.iter_cap {
            break;
        }
        if state.lives == 0 && cfg.early_exit {
            lives_exhausted = true;
            break;
        }
        state.lives = state.lives.saturating_sub(1);
        step(&mut state, space, cfg, &fitness)?;
        history.push(GenerationRecord {
            generation: state.generation,
            best_fitness: state.best.fitness,
            evaluations: state.evaluations,
            lives: state.lives,
        });
        log::debug!(
            "de generation {}: best {:.6}, lives {}",
            state.generation,
            state.best.fitness,
            state.lives
        );
    }
    Ok(DeOutcome {
        best: state.best,
        history,
        generations: state.generation,
        evaluations: state.evaluations,
        lives_exhausted,
    })
}
