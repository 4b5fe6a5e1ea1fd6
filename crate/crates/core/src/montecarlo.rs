//! Sampled executions.
//!
//! Each run draws an initial world from the prior, outcomes from the outcome
//! model and readings from the sensing model, and follows the controller for
//! at most `step_cap` actions. Run `i` uses a ChaCha8 generator seeded with
//! the report seed on stream `i`, so results do not depend on how runs are
//! spread over threads.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::Serialize;

use crate::belief::{BeliefOptions, BeliefState};
use crate::controller::CompiledController;
use crate::error::{Error, Result};
use crate::exec_exact::Config;
use crate::scalar::Scalar;
use crate::theory::{ActionId, ActionKind, Domain, Formula, ObsId, ResolvedReading, SensorLikelihood, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub runs: usize,
    pub success_rate: f64,
    pub termination_rate: f64,
    /// Runs cut off by the step cap.
    pub truncation_rate: f64,
    pub mean_final_bel: Option<f64>,
    pub std_error: f64,
    pub step_cap: usize,
    pub seed: u64,
}

/// Ten times the number of configurations.
pub fn default_step_cap<W>(c: &CompiledController, d: &Domain<W>) -> usize {
    let states: usize = d.signature.fluents.iter().map(|f| f.values.len()).product();
    10 * c.len() * states
}

/// Formula whose degree of belief is averaged: the goal itself when it is
/// objective, else the first belief or knowledge atom in it.
fn belief_target(f: &Formula) -> Option<&Formula> {
    if f.is_objective() {
        return Some(f);
    }
    match f {
        Formula::Bel { inner, .. } | Formula::Know(inner) => Some(inner),
        Formula::Not(g) => belief_target(g),
        Formula::And(fs) | Formula::Or(fs) => fs.iter().find(|g| !g.is_objective()).and_then(belief_target),
        Formula::Implies(a, b) => belief_target(if a.is_objective() { b } else { a }),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RunResult {
    success: bool,
    terminated: bool,
    truncated: bool,
    final_bel: Option<f64>,
}

fn sample_index<W: Scalar>(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = W> + Clone) -> Option<usize> {
    let total: f64 = weights.clone().map(|x| x.to_f64()).sum();
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (i, x) in weights.enumerate() {
        let x = x.to_f64();
        if x > 0.0 {
            if u < x {
                return Some(i);
            }
            u -= x;
            last = Some(i);
        }
    }
    last
}

fn sample_reading<W: Scalar>(
    d: &Domain<W>,
    a: ActionId,
    real: &WorldState,
    rng: &mut ChaCha8Rng,
) -> Option<ResolvedReading> {
    let model = d.sensing_model(a)?;
    match &model.likelihood {
        SensorLikelihood::Gaussian { mean_fluent, variance } => {
            let normal = Normal::new(real.get(*mean_fluent) as f64, variance.sqrt()).expect("variance is positive");
            let z = normal.sample(rng);
            Some(ResolvedReading {
                index: None,
                value: Some(z),
                observation: model.observation_of_value(z)?,
            })
        }
        SensorLikelihood::Table(_) => {
            let readings = model.reading_likelihoods(real);
            let i = sample_index(rng, readings.iter().map(|(_, l)| l.clone()))?;
            Some(readings[i].0.clone())
        }
    }
}

fn one_run<W: Scalar>(
    c: &CompiledController,
    d: &Domain<W>,
    prior: &WeightedIndex<f64>,
    step_cap: usize,
    track: bool,
    mut rng: ChaCha8Rng,
) -> RunResult {
    let mut real = d.initial[prior.sample(&mut rng)].0.clone();
    let mut belief = track.then(|| BeliefState::initial(d, BeliefOptions::default()));
    let mut q = c.initial;
    let mut steps = 0;
    let epistemic = !d.goal.is_objective();
    loop {
        if c.is_final(q) {
            let success = match (&belief, epistemic) {
                (_, false) => d.goal.eval_objective(&real),
                (Some(b), true) => b.eval_goal(&d.goal),
                (None, true) => false,
            };
            let final_bel = belief.as_ref().and_then(|b| belief_target(&d.goal).map(|f| b.bel(f)));
            return RunResult {
                success,
                terminated: true,
                truncated: false,
                final_bel,
            };
        }
        if steps == step_cap {
            return RunResult {
                truncated: true,
                ..Default::default()
            };
        }
        let a = c.advice[q].expect("non-final states advise an action");
        if d.action(a).kind == ActionKind::Sensing && !d.poss(a, &real) {
            return RunResult::default();
        }
        // readings are taken at the pre-state
        let reading = sample_reading(d, a, &real, &mut rng);
        if d.sensing_model(a).is_some() && reading.is_none() {
            return RunResult::default();
        }
        if d.action(a).kind == ActionKind::Physical {
            let outcomes = d.outcomes_of(a, &real);
            let Some(i) = sample_index(&mut rng, outcomes.iter().map(|(_, l)| l.clone())) else {
                return RunResult::default();
            };
            real = d.apply(outcomes[i].0, &real);
        }
        if let Some(b) = belief.take() {
            let conditioned = match &reading {
                Some(r) => b.condition_resolved(a, r, d).ok(),
                None => Some(b),
            };
            belief = conditioned.and_then(|b| match d.action(a).kind {
                ActionKind::Physical => b.progress(a, d).ok(),
                ActionKind::Sensing => Some(b),
            });
        }
        let o = match &reading {
            Some(r) => r.observation,
            None => d
                .null_observation()
                .expect("actions without a sensor return the null observation"),
        };
        let Some(next) = c.next(q, o) else {
            return RunResult::default();
        };
        q = next;
        steps += 1;
    }
}

/// Largest number of reachable worlds for which transitions are tabulated.
const TABLE_LIMIT: usize = 1 << 16;

enum ReadingTable {
    None,
    Table(Vec<(f64, ObsId)>),
    Gaussian(Normal<f64>),
}

struct Entry {
    possible: bool,
    readings: ReadingTable,
    /// Outcome likelihoods and successor world indices.
    outcomes: Vec<(f64, usize)>,
}

/// Transitions of the advised actions over the reachable worlds. Sampling
/// from it draws exactly the numbers the general path draws.
struct Tables<'a, W> {
    initial: Vec<usize>,
    goal: Vec<bool>,
    /// Indexed by world, then action.
    entries: Vec<Vec<Option<Entry>>>,
    domain: &'a Domain<W>,
}

impl<'a, W: Scalar> Tables<'a, W> {
    fn build(c: &CompiledController, d: &'a Domain<W>) -> Option<Self> {
        let mut advised: Vec<ActionId> = c.advice.iter().flatten().copied().collect();
        advised.sort();
        advised.dedup();
        let mut index: HashMap<WorldState, usize> = HashMap::new();
        let mut worlds: Vec<WorldState> = Vec::new();
        let mut intern = |w: &WorldState, worlds: &mut Vec<WorldState>| {
            *index.entry(w.clone()).or_insert_with(|| {
                worlds.push(w.clone());
                worlds.len() - 1
            })
        };
        let initial: Vec<usize> = d.initial.iter().map(|(w, _)| intern(w, &mut worlds)).collect();
        let mut entries: Vec<Vec<Option<Entry>>> = Vec::new();
        let mut next = 0;
        while next < worlds.len() {
            if worlds.len() > TABLE_LIMIT {
                return None;
            }
            let w = worlds[next].clone();
            let mut row: Vec<Option<Entry>> = (0..d.actions.len()).map(|_| None).collect();
            for &a in &advised {
                let readings = match d.sensing_model(a) {
                    None => ReadingTable::None,
                    Some(m) => match &m.likelihood {
                        SensorLikelihood::Gaussian { mean_fluent, variance } => ReadingTable::Gaussian(
                            Normal::new(w.get(*mean_fluent) as f64, variance.sqrt()).expect("variance is positive"),
                        ),
                        SensorLikelihood::Table(_) => ReadingTable::Table(
                            m.reading_likelihoods(&w)
                                .into_iter()
                                .map(|(r, l)| (l.to_f64(), r.observation))
                                .collect(),
                        ),
                    },
                };
                let outcomes = match d.action(a).kind {
                    ActionKind::Physical => d
                        .outcomes_of(a, &w)
                        .into_iter()
                        .map(|(b, l)| (l.to_f64(), intern(&d.apply(b, &w), &mut worlds)))
                        .collect(),
                    ActionKind::Sensing => Vec::new(),
                };
                row[a] = Some(Entry {
                    possible: d.poss(a, &w),
                    readings,
                    outcomes,
                });
            }
            entries.push(row);
            next += 1;
        }
        Some(Tables {
            initial,
            goal: worlds.iter().map(|w| d.goal.eval_objective(w)).collect(),
            entries,
            domain: d,
        })
    }

    fn run(
        &self,
        c: &CompiledController,
        prior: &WeightedIndex<f64>,
        step_cap: usize,
        mut rng: ChaCha8Rng,
    ) -> RunResult {
        let d = self.domain;
        let mut real = self.initial[prior.sample(&mut rng)];
        let mut q = c.initial;
        for _ in 0..step_cap {
            if c.is_final(q) {
                break;
            }
            let a = c.advice[q].expect("non-final states advise an action");
            let e = self.entries[real][a].as_ref().expect("advised actions are tabulated");
            let sensing = d.action(a).kind == ActionKind::Sensing;
            if sensing && !e.possible {
                return RunResult::default();
            }
            let o = match &e.readings {
                ReadingTable::None => d
                    .null_observation()
                    .expect("actions without a sensor return the null observation"),
                ReadingTable::Table(t) => match sample_index(&mut rng, t.iter().map(|(l, _)| *l)) {
                    Some(i) => t[i].1,
                    None => return RunResult::default(),
                },
                ReadingTable::Gaussian(normal) => {
                    let z = normal.sample(&mut rng);
                    let model = d.sensing_model(a).expect("gaussian readings come from a sensor");
                    match model.observation_of_value(z) {
                        Some(o) => o,
                        None => return RunResult::default(),
                    }
                }
            };
            if !sensing {
                match sample_index(&mut rng, e.outcomes.iter().map(|(l, _)| *l)) {
                    Some(i) => real = e.outcomes[i].1,
                    None => return RunResult::default(),
                }
            }
            match c.next(q, o) {
                Some(next) => q = next,
                None => return RunResult::default(),
            }
        }
        if c.is_final(q) {
            RunResult {
                success: self.goal[real],
                terminated: true,
                truncated: false,
                final_bel: None,
            }
        } else {
            RunResult {
                truncated: true,
                ..Default::default()
            }
        }
    }
}

/// Samples `runs` executions. Epistemic goals are judged at the tracked
/// belief, which is then tracked regardless of `track_belief`.
pub fn simulate<W: Scalar>(
    c: &CompiledController,
    d: &Domain<W>,
    runs: usize,
    step_cap: usize,
    seed: u64,
    track_belief: bool,
) -> Result<SimReport> {
    if runs == 0 || step_cap == 0 {
        return Err(Error::Unsupported("runs and step cap must be positive".into()));
    }
    let prior = WeightedIndex::new(d.initial.iter().map(|(_, w)| w.to_f64()))
        .map_err(|e| Error::InvalidDomain(format!("prior cannot be sampled: {e}")))?;
    let track = track_belief || !d.goal.is_objective();
    let tables = if track { None } else { Tables::build(c, d) };
    let results: Vec<RunResult> = (0..runs)
        .into_par_iter()
        .with_min_len(256)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            match &tables {
                Some(t) => t.run(c, &prior, step_cap, rng),
                None => one_run(c, d, &prior, step_cap, track, rng),
            }
        })
        .collect();
    Ok(report(&results, step_cap, seed))
}

fn report(results: &[RunResult], step_cap: usize, seed: u64) -> SimReport {
    let n = results.len() as f64;
    let count = |f: fn(&RunResult) -> bool| results.iter().filter(|r| f(r)).count() as f64 / n;
    let success_rate = count(|r| r.success);
    let bels: Vec<f64> = results.iter().filter_map(|r| r.final_bel).collect();
    SimReport {
        runs: results.len(),
        success_rate,
        termination_rate: count(|r| r.terminated),
        truncation_rate: count(|r| r.truncated),
        mean_final_bel: (!bels.is_empty()).then(|| bels.iter().sum::<f64>() / bels.len() as f64),
        std_error: (success_rate * (1.0 - success_rate) / n).sqrt(),
        step_cap,
        seed,
    }
}

/// Exact probability that a run reaches the final state with the goal true
/// within `step_cap` actions, by propagating probability mass over
/// configurations. Table sensors and objective goals only.
pub fn absorption_probability<W: Scalar>(c: &CompiledController, d: &Domain<W>, step_cap: usize) -> Result<f64> {
    if !d.goal.is_objective() {
        return Err(Error::EpistemicGoal {
            criterion: "absorption probability",
        });
    }
    let total = d.total_initial_weight().to_f64();
    let mut dist: HashMap<Config, f64> = HashMap::new();
    for (w, weight) in d.positive_initial() {
        *dist.entry(Config::new(c.initial, w.clone())).or_default() += weight.to_f64() / total;
    }
    let mut absorbed = 0.0;
    for step in 0..=step_cap {
        let mut next: HashMap<Config, f64> = HashMap::new();
        for (cfg, p) in dist {
            if c.is_final(cfg.control) {
                if d.goal.eval_objective(&cfg.world) {
                    absorbed += p;
                }
                continue;
            }
            if step == step_cap {
                continue;
            }
            let a = c.advice[cfg.control].expect("non-final states advise an action");
            let observations = d.observation_distribution(a, &cfg.world).ok_or_else(|| {
                Error::Unsupported(format!(
                    "absorption probability needs table sensors; `{}` has a density model",
                    d.action(a).name
                ))
            })?;
            let outcomes: Vec<(ActionId, f64)> = match d.action(a).kind {
                ActionKind::Physical => d
                    .outcomes_of(a, &cfg.world)
                    .into_iter()
                    .map(|(b, l)| (b, l.to_f64()))
                    .collect(),
                ActionKind::Sensing if d.poss(a, &cfg.world) => vec![(a, 1.0)],
                ActionKind::Sensing => Vec::new(),
            };
            let outcome_total: f64 = outcomes.iter().map(|(_, l)| l).sum();
            for (o, po) in &observations {
                let Some(q) = c.next(cfg.control, *o) else {
                    continue;
                };
                for (b, l) in &outcomes {
                    let w = d.apply(*b, &cfg.world);
                    *next.entry(Config::new(q, w)).or_default() += p * po.to_f64() * l / outcome_total;
                }
            }
        }
        dist = next;
    }
    Ok(absorbed)
}
