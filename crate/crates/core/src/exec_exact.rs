//! Execution over world states: deterministic runs and runs over nature's
//! alternative outcomes, with the correctness criteria built on them.
//!
//! Reachability is computed over configurations (control state, world
//! state). The configuration graph is finite, so every criterion here is
//! decided.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::controller::CompiledController;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::theory::{ActionId, Domain, ObsId, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Config {
    pub control: usize,
    pub world: WorldState,
}

impl Config {
    pub fn new(control: usize, world: WorldState) -> Self {
        Config { control, world }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Holds,
    Fails,
    Unknown,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Holds => "holds",
            Status::Fails => "fails",
            Status::Unknown => "unknown",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Status::Holds => 0,
            Status::Fails => 1,
            Status::Unknown => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub from: Config,
    pub action: ActionId,
    pub observation: ObsId,
}

/// An execution from `initial`, ending in `end`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub initial: WorldState,
    pub steps: Vec<TraceStep>,
    pub end: Config,
}

impl Trace {
    pub fn to_json<W: Scalar>(&self, d: &Domain<W>, c: &CompiledController) -> Value {
        let config =
            |cfg: &Config| json!({ "control": c.names[cfg.control], "state": d.signature.state_to_json(&cfg.world) });
        json!({
            "initial": d.signature.state_to_json(&self.initial),
            "steps": self.steps.iter().map(|s| {
                let mut v = config(&s.from);
                v["action"] = json!(d.action(s.action).name);
                v["observation"] = json!(d.observations[s.observation]);
                v
            }).collect::<Vec<_>>(),
            "end": config(&self.end),
        })
    }

    /// Actions and observations along the trace.
    pub fn labels(&self) -> Vec<(ActionId, ObsId)> {
        self.steps.iter().map(|s| (s.action, s.observation)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub status: Status,
    /// Supporting executions: one per initial world for existential
    /// criteria that hold, the offending execution for failures.
    pub witnesses: Vec<Trace>,
    pub counterexample_world: Option<WorldState>,
    pub reason: Option<String>,
    /// Fraction of the prior admitting a goal-reaching execution, when the
    /// criterion measures it.
    pub mass: Option<f64>,
    pub notes: Vec<String>,
}

impl Verdict {
    pub(crate) fn holds(witnesses: Vec<Trace>) -> Self {
        Verdict {
            status: Status::Holds,
            witnesses,
            counterexample_world: None,
            reason: None,
            mass: None,
            notes: Vec::new(),
        }
    }

    pub(crate) fn fails(world: WorldState, witness: Option<Trace>, reason: String) -> Self {
        Verdict {
            status: Status::Fails,
            witnesses: witness.into_iter().collect(),
            counterexample_world: Some(world),
            reason: Some(reason),
            mass: None,
            notes: Vec::new(),
        }
    }

    pub fn to_json<W: Scalar>(&self, d: &Domain<W>, c: &CompiledController) -> Value {
        let mut v = json!({
            "status": self.status.as_str(),
            "witnesses": self.witnesses.iter().map(|t| t.to_json(d, c)).collect::<Vec<_>>(),
        });
        if let Some(w) = &self.counterexample_world {
            v["counterexample_world"] = d.signature.state_to_json(w);
        }
        if let Some(r) = &self.reason {
            v["reason"] = json!(r);
        }
        if let Some(m) = self.mass {
            v["mass"] = json!(m);
        }
        if !self.notes.is_empty() {
            v["notes"] = json!(self.notes);
        }
        v
    }
}

fn require_objective<W: Scalar>(d: &Domain<W>, criterion: &'static str) -> Result<()> {
    if d.goal.is_objective() {
        Ok(())
    } else {
        Err(Error::EpistemicGoal { criterion })
    }
}

/// One deterministic step: the advised action itself, its observation at
/// the pre-state, and the controller's transition. `None` at the final
/// state, when the action is inexecutable, or when no transition applies.
pub fn step_t<W: Scalar>(
    c: &CompiledController,
    d: &Domain<W>,
    cfg: &Config,
) -> Result<Option<(Config, ActionId, ObsId)>> {
    let Some(a) = c.advice[cfg.control] else {
        return Ok(None);
    };
    if c.is_final(cfg.control) || !d.poss(a, &cfg.world) {
        return Ok(None);
    }
    let o = d.exact_observation(a, &cfg.world)?;
    Ok(c.next(cfg.control, o)
        .map(|q| (Config::new(q, d.apply(a, &cfg.world)), a, o)))
}

/// Successors under every executable alternative of the advised action, in
/// the outcome model's order.
pub fn step_u<W: Scalar>(
    c: &CompiledController,
    d: &Domain<W>,
    cfg: &Config,
) -> Result<Vec<(Config, ActionId, ObsId)>> {
    let Some(a) = c.advice[cfg.control] else {
        return Ok(Vec::new());
    };
    if c.is_final(cfg.control) {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (b, _) in d.outcomes_of(a, &cfg.world) {
        let o = d.exact_observation(b, &cfg.world)?;
        if let Some(q) = c.next(cfg.control, o) {
            out.push((Config::new(q, d.apply(b, &cfg.world)), b, o));
        }
    }
    Ok(out)
}

/// Successors sorted by (action name, observation token), for witnesses.
fn sorted_successors<W: Scalar>(
    c: &CompiledController,
    d: &Domain<W>,
    cfg: &Config,
) -> Result<Vec<(Config, ActionId, ObsId)>> {
    let mut next = step_u(c, d, cfg)?;
    next.sort_by(|x, y| (&d.action(x.1).name, &d.observations[x.2]).cmp(&(&d.action(y.1).name, &d.observations[y.2])));
    Ok(next)
}

/// Correctness for deterministic domains: the unique run from every
/// positive-weight initial world reaches the final state with the goal true.
pub fn verify_def4<W: Scalar>(c: &CompiledController, d: &Domain<W>) -> Result<Verdict> {
    if !d.is_acting_deterministic() {
        return Err(Error::NoisyActing { criterion: "def4" });
    }
    require_objective(d, "def4")?;
    let mut witnesses = Vec::new();
    for (w0, _) in d.positive_initial() {
        let mut cfg = Config::new(c.initial, w0.clone());
        let mut steps = Vec::new();
        let mut seen = HashMap::new();
        let failure = loop {
            if c.is_final(cfg.control) {
                if d.eval_objective(&d.goal, &cfg.world) {
                    break None;
                }
                break Some(format!("goal false at final state in {}", d.render_state(&cfg.world)));
            }
            if seen.insert(cfg.clone(), steps.len()).is_some() {
                break Some(format!(
                    "run loops: configuration ({}, {}) repeats",
                    c.names[cfg.control],
                    d.render_state(&cfg.world)
                ));
            }
            let a = c.advice[cfg.control].expect("non-final states advise an action");
            if !d.poss(a, &cfg.world) {
                break Some(format!(
                    "`{}` is inexecutable in {}",
                    d.action(a).name,
                    d.render_state(&cfg.world)
                ));
            }
            let o = d.exact_observation(a, &cfg.world)?;
            let Some(q) = c.next(cfg.control, o) else {
                break Some(format!(
                    "stuck: no transition from `{}` on `{}`",
                    c.names[cfg.control], d.observations[o]
                ));
            };
            let next = Config::new(q, d.apply(a, &cfg.world));
            steps.push(TraceStep {
                from: cfg,
                action: a,
                observation: o,
            });
            cfg = next;
        };
        let trace = Trace {
            initial: w0.clone(),
            steps,
            end: cfg,
        };
        match failure {
            None => witnesses.push(trace),
            Some(reason) => return Ok(Verdict::fails(w0.clone(), Some(trace), reason)),
        }
    }
    Ok(Verdict::holds(witnesses))
}

/// Breadth-first search for a goal-reaching execution from `w0`.
pub fn weak_plan<W: Scalar>(c: &CompiledController, d: &Domain<W>, w0: &WorldState) -> Result<Option<Trace>> {
    let start = Config::new(c.initial, w0.clone());
    let mut parent: HashMap<Config, Option<TraceStep>> = HashMap::new();
    parent.insert(start.clone(), None);
    let mut queue = VecDeque::from([start]);
    while let Some(cfg) = queue.pop_front() {
        if c.is_final(cfg.control) {
            if d.eval_objective(&d.goal, &cfg.world) {
                return Ok(Some(unwind(&parent, w0, cfg)));
            }
            continue;
        }
        for (next, b, o) in sorted_successors(c, d, &cfg)? {
            if !parent.contains_key(&next) {
                parent.insert(
                    next.clone(),
                    Some(TraceStep {
                        from: cfg.clone(),
                        action: b,
                        observation: o,
                    }),
                );
                queue.push_back(next);
            }
        }
    }
    Ok(None)
}

fn unwind(parent: &HashMap<Config, Option<TraceStep>>, w0: &WorldState, end: Config) -> Trace {
    let mut steps = Vec::new();
    let mut cur = &end;
    while let Some(Some(step)) = parent.get(cur) {
        steps.push(step.clone());
        cur = &step.from;
    }
    steps.reverse();
    Trace {
        initial: w0.clone(),
        steps,
        end,
    }
}

/// Weak-plan search for every positive-weight initial world, in order.
fn weak_plans<W: Scalar>(c: &CompiledController, d: &Domain<W>) -> Result<Vec<(WorldState, W, Option<Trace>)>> {
    let worlds: Vec<&(WorldState, W)> = d.positive_initial().collect();
    worlds
        .par_iter()
        .map(|(w, weight)| Ok((w.clone(), weight.clone(), weak_plan(c, d, w)?)))
        .collect()
}

/// Correctness under nondeterministic outcomes: from every positive-weight
/// initial world some execution reaches the final state with the goal true.
pub fn verify_def6<W: Scalar>(c: &CompiledController, d: &Domain<W>) -> Result<Verdict> {
    require_objective(d, "def6")?;
    let mut witnesses = Vec::new();
    for (w, _, plan) in weak_plans(c, d)? {
        match plan {
            Some(t) => witnesses.push(t),
            None => {
                return Ok(Verdict::fails(
                    w.clone(),
                    None,
                    format!(
                        "no execution from {} reaches the final state with the goal true",
                        d.render_state(&w)
                    ),
                ))
            }
        }
    }
    Ok(Verdict::holds(witnesses))
}

/// Every configuration reachable from a positive-weight initial world can
/// still reach the final control state.
pub fn verify_termination<W: Scalar>(c: &CompiledController, d: &Domain<W>) -> Result<Verdict> {
    let mut index: HashMap<Config, usize> = HashMap::new();
    let mut nodes: Vec<Config> = Vec::new();
    let mut edges: Vec<Vec<(usize, ActionId, ObsId)>> = Vec::new();
    let mut roots = Vec::new();
    let mut queue = VecDeque::new();
    let mut intern = |cfg: Config, nodes: &mut Vec<Config>, edges: &mut Vec<_>, queue: &mut VecDeque<usize>| {
        if let Some(&i) = index.get(&cfg) {
            return i;
        }
        let i = nodes.len();
        index.insert(cfg.clone(), i);
        nodes.push(cfg);
        edges.push(Vec::new());
        queue.push_back(i);
        i
    };
    for (w, _) in d.positive_initial() {
        let root = intern(Config::new(c.initial, w.clone()), &mut nodes, &mut edges, &mut queue);
        roots.push((w.clone(), root));
    }
    while let Some(i) = queue.pop_front() {
        let succ = sorted_successors(c, d, &nodes[i])?;
        for (next, b, o) in succ {
            let j = intern(next, &mut nodes, &mut edges, &mut queue);
            edges[i].push((j, b, o));
        }
    }
    // configurations that can reach the final control state
    let mut reverse = vec![Vec::new(); nodes.len()];
    for (i, out) in edges.iter().enumerate() {
        for &(j, _, _) in out {
            reverse[j].push(i);
        }
    }
    let mut live = vec![false; nodes.len()];
    let mut stack: Vec<usize> = (0..nodes.len()).filter(|&i| c.is_final(nodes[i].control)).collect();
    for &i in &stack {
        live[i] = true;
    }
    while let Some(j) = stack.pop() {
        for &i in &reverse[j] {
            if !live[i] {
                live[i] = true;
                stack.push(i);
            }
        }
    }
    for (w, root) in roots {
        // breadth-first from this world for the shortest path to a dead config
        let mut parent: HashMap<usize, Option<(usize, ActionId, ObsId)>> = HashMap::from([(root, None)]);
        let mut queue = VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            if !live[i] {
                let mut steps = Vec::new();
                let mut cur = i;
                while let Some(Some((p, b, o))) = parent.get(&cur) {
                    steps.push(TraceStep {
                        from: nodes[*p].clone(),
                        action: *b,
                        observation: *o,
                    });
                    cur = *p;
                }
                steps.reverse();
                let end = nodes[i].clone();
                let reason = format!(
                    "configuration ({}, {}) cannot reach the final state",
                    c.names[end.control],
                    d.render_state(&end.world)
                );
                let trace = Trace {
                    initial: w.clone(),
                    steps,
                    end,
                };
                return Ok(Verdict::fails(w, Some(trace), reason));
            }
            for &(j, b, o) in &edges[i] {
                if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(j) {
                    e.insert(Some((i, b, o)));
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(Verdict::holds(Vec::new()))
}

/// Every initial world whose weight strictly exceeds `kappa` admits a
/// goal-reaching execution.
pub fn verify_weight_threshold<W: Scalar>(c: &CompiledController, d: &Domain<W>, kappa: &W) -> Result<Verdict> {
    require_objective(d, "weight threshold")?;
    let mut notes = Vec::new();
    let total = d.total_initial_weight();
    if *kappa < W::zero() || *kappa >= total {
        notes.push(format!("threshold {kappa} lies outside [0, {total})"));
    }
    let mut witnesses = Vec::new();
    let mut verdict = None;
    for (w, weight, plan) in weak_plans(c, d)? {
        if weight <= *kappa {
            continue;
        }
        match plan {
            Some(t) => witnesses.push(t),
            None => {
                verdict = Some(Verdict::fails(
                    w.clone(),
                    None,
                    format!(
                        "{} has weight {weight} > {kappa} but no goal-reaching execution",
                        d.render_state(&w)
                    ),
                ));
                break;
            }
        }
    }
    let mut v = verdict.unwrap_or_else(|| Verdict::holds(witnesses));
    v.notes = notes;
    Ok(v)
}

/// The prior mass of initial worlds admitting a goal-reaching execution is
/// at least `kappa`.
pub fn verify_belief_threshold<W: Scalar>(c: &CompiledController, d: &Domain<W>, kappa: &W) -> Result<Verdict> {
    require_objective(d, "mass threshold")?;
    let plans = weak_plans(c, d)?;
    let total = crate::scalar::sum(plans.iter().map(|(_, w, _)| w));
    let failing: Vec<_> = plans.iter().filter(|(_, _, p)| p.is_none()).collect();
    let fail_mass = crate::scalar::sum(failing.iter().map(|(_, w, _)| w));
    let good_mass = crate::scalar::sum(plans.iter().filter(|(_, _, p)| p.is_some()).map(|(_, w, _)| w));
    // mass >= kappa  iff  failing mass <= (1 - kappa) * total
    let slack = W::from_f64(W::tolerance()).unwrap_or_else(W::zero) * total.clone();
    let holds = fail_mass <= (W::one() - kappa.clone()) * total.clone() + slack;
    let mass = if failing.is_empty() {
        1.0
    } else {
        crate::scalar::ratio(&good_mass, &total)
    };
    let mut v = if holds {
        Verdict::holds(plans.into_iter().filter_map(|(_, _, p)| p).collect())
    } else {
        let (w, _, _) = failing[0];
        Verdict::fails(w.clone(), None, format!("goal-reaching mass {mass} is below {kappa}"))
    };
    v.mass = Some(mass);
    Ok(v)
}
