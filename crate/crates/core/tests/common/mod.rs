//! Brute-force oracles shared by the integration tests. They work from the
//! domain's primitive models (preconditions, effects, raw likelihoods) and
//! avoid the engine's search code.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet, VecDeque};

use loopverify::exec_exact::Config;
use loopverify::theory::{ActionId, ActionKind, ObsId};
use loopverify::{CompiledController, Domain, WorldState};

/// Every world state of the signature.
pub fn all_worlds(d: &Domain<f64>) -> Vec<WorldState> {
    let mut out = vec![Vec::new()];
    for f in &d.signature.fluents {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<i64>| {
                f.values.iter().map(move |&v| {
                    let mut w = prefix.clone();
                    w.push(v);
                    w
                })
            })
            .collect();
    }
    out.into_iter().map(WorldState::new).collect()
}

/// Executable alternatives of `a` at `w` with likelihoods normalized over
/// all alternatives, executable or not.
pub fn alternatives(d: &Domain<f64>, a: ActionId, w: &WorldState) -> Vec<(ActionId, f64)> {
    match d.outcome_model(a) {
        None => {
            if d.poss(a, w) {
                vec![(a, 1.0)]
            } else {
                vec![]
            }
        }
        Some(m) => {
            let raw: Vec<(ActionId, f64)> = m.outcomes.iter().map(|(b, l)| (*b, l.eval(w))).collect();
            let total: f64 = raw.iter().map(|(_, l)| l).sum();
            raw.into_iter()
                .filter(|(b, l)| *l > 0.0 && d.poss(*b, w))
                .map(|(b, l)| (b, l / total))
                .collect()
        }
    }
}

/// Observations `a` can return at `w`.
pub fn observations(d: &Domain<f64>, a: ActionId, w: &WorldState) -> Vec<ObsId> {
    match d.sensing_model(a) {
        None => vec![d.null_observation().unwrap()],
        Some(m) => {
            let mut out: Vec<ObsId> = m
                .reading_likelihoods(w)
                .into_iter()
                .filter(|(_, l)| *l > 0.0)
                .map(|(r, _)| r.observation)
                .collect();
            out.sort();
            out.dedup();
            out
        }
    }
}

pub fn successors(d: &Domain<f64>, c: &CompiledController, cfg: &Config) -> Vec<Config> {
    if c.is_final(cfg.control) {
        return vec![];
    }
    let a = c.advice[cfg.control].unwrap();
    let mut out = Vec::new();
    for (b, _) in alternatives(d, a, &cfg.world) {
        for o in observations(d, a, &cfg.world) {
            if let Some(q) = c.next(cfg.control, o) {
                out.push(Config::new(q, d.apply(b, &cfg.world)));
            }
        }
    }
    out
}

/// Configurations from which some execution ends in the final state with
/// the goal true: a backward fixpoint over the whole configuration space.
pub fn goal_reaching(d: &Domain<f64>, c: &CompiledController) -> HashSet<Config> {
    let configs: Vec<Config> = (0..c.len())
        .flat_map(|q| all_worlds(d).into_iter().map(move |w| Config::new(q, w)))
        .collect();
    let mut good: HashSet<Config> = configs
        .iter()
        .filter(|cfg| c.is_final(cfg.control) && d.goal.eval_objective(&cfg.world))
        .cloned()
        .collect();
    loop {
        let before = good.len();
        for cfg in &configs {
            if !good.contains(cfg) && successors(d, c, cfg).iter().any(|s| good.contains(s)) {
                good.insert(cfg.clone());
            }
        }
        if good.len() == before {
            return good;
        }
    }
}

/// Per positive-weight initial world: weight and whether a goal-reaching
/// execution exists.
pub fn weak_plan_worlds(d: &Domain<f64>, c: &CompiledController) -> Vec<(f64, bool)> {
    let good = goal_reaching(d, c);
    d.initial
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(w, weight)| (*weight, good.contains(&Config::new(c.initial, w.clone()))))
        .collect()
}

pub fn def6(d: &Domain<f64>, c: &CompiledController) -> bool {
    weak_plan_worlds(d, c).iter().all(|(_, ok)| *ok)
}

pub fn weight_threshold(d: &Domain<f64>, c: &CompiledController, kappa: f64) -> bool {
    weak_plan_worlds(d, c).iter().all(|(w, ok)| *w <= kappa || *ok)
}

pub fn mass_threshold(d: &Domain<f64>, c: &CompiledController, kappa: f64) -> bool {
    let worlds = weak_plan_worlds(d, c);
    let total: f64 = worlds.iter().map(|(w, _)| w).sum();
    let good: f64 = worlds.iter().filter(|(_, ok)| *ok).map(|(w, _)| w).sum();
    good >= kappa * total - 1e-12 * total
}

/// Deterministic runs, bounded by the number of configurations instead of
/// detecting revisits.
pub fn def4(d: &Domain<f64>, c: &CompiledController) -> bool {
    let bound = c.len() * all_worlds(d).len() + 1;
    d.initial.iter().filter(|(_, w)| *w > 0.0).all(|(w0, _)| {
        let mut cfg = Config::new(c.initial, w0.clone());
        for _ in 0..=bound {
            if c.is_final(cfg.control) {
                return d.goal.eval_objective(&cfg.world);
            }
            let next = successors(d, c, &cfg);
            match next.as_slice() {
                [one] => cfg = one.clone(),
                _ => return false,
            }
        }
        false
    })
}

/// Every reachable configuration can still reach the final state, checked
/// by a separate forward search from each one.
pub fn termination(d: &Domain<f64>, c: &CompiledController) -> bool {
    let mut reachable: HashSet<Config> = HashSet::new();
    let mut stack: Vec<Config> = d
        .initial
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(w, _)| Config::new(c.initial, w.clone()))
        .collect();
    while let Some(cfg) = stack.pop() {
        if reachable.insert(cfg.clone()) {
            stack.extend(successors(d, c, &cfg));
        }
    }
    reachable.iter().all(|start| {
        let mut seen = HashSet::from([start.clone()]);
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(cfg) = queue.pop_front() {
            if c.is_final(cfg.control) {
                return true;
            }
            for s in successors(d, c, &cfg) {
                if seen.insert(s.clone()) {
                    queue.push_back(s);
                }
            }
        }
        false
    })
}

/// A step of a belief scenario: an action, and for sensing a reading token.
#[derive(Debug, Clone)]
pub struct BeliefStep {
    pub action: ActionId,
    pub token: Option<String>,
}

/// Unmerged paths (world, weight) after the steps, one per initial world
/// and outcome sequence. `None` when no weight survives.
pub fn belief_paths(d: &Domain<f64>, steps: &[BeliefStep]) -> Option<Vec<(WorldState, f64)>> {
    let mut paths: Vec<(WorldState, f64)> = d.initial.iter().filter(|(_, w)| *w > 0.0).cloned().collect();
    for step in steps {
        let a = step.action;
        if let (Some(m), Some(t)) = (d.sensing_model(a), &step.token) {
            let i = m.readings.iter().position(|r| &r.token == t).unwrap();
            paths = paths
                .into_iter()
                .map(|(w, p)| {
                    let l = m.reading_likelihoods(&w)[i].1;
                    (w, p * l)
                })
                .filter(|(_, p)| *p > 0.0)
                .collect();
        }
        if d.action(a).kind == ActionKind::Physical {
            paths = paths
                .into_iter()
                .flat_map(|(w, p)| {
                    alternatives(d, a, &w)
                        .into_iter()
                        .map(move |(b, l)| (d.apply(b, &w), p * l))
                        .collect::<Vec<_>>()
                })
                .filter(|(_, p)| *p > 0.0)
                .collect();
        }
        if paths.is_empty() {
            return None;
        }
    }
    Some(paths)
}

/// Normalized weight per world state.
pub fn normalized(paths: &[(WorldState, f64)]) -> BTreeMap<WorldState, f64> {
    let total: f64 = paths.iter().map(|(_, p)| p).sum();
    let mut out = BTreeMap::new();
    for (w, p) in paths {
        *out.entry(w.clone()).or_insert(0.0) += p / total;
    }
    out
}

/// Every labelled controller with at most `max_states` states over `d`'s
/// advisable actions and full observation alphabet, state 0 initial.
/// Unreachable states are allowed; there is no canonicalization.
pub fn all_controllers(d: &Domain<f64>, max_states: usize) -> Vec<CompiledController> {
    let actions = d.advisable_actions().to_vec();
    let n_obs = d.observations.len();
    let mut out = Vec::new();
    for k in 1..=max_states {
        for f in 0..k {
            let movers: Vec<usize> = (0..k).filter(|&q| q != f).collect();
            let slots = movers.len() * n_obs;
            let advice_space = actions.len().pow(movers.len() as u32);
            let delta_space = (k + 1).pow(slots as u32);
            for adv in 0..advice_space {
                for del in 0..delta_space {
                    let mut advice = vec![None; k];
                    let mut delta = vec![vec![None; n_obs]; k];
                    let (mut x, mut t) = (adv, del);
                    for &q in &movers {
                        advice[q] = Some(actions[x % actions.len()]);
                        x /= actions.len();
                        for slot in delta[q].iter_mut() {
                            let v = t % (k + 1);
                            t /= k + 1;
                            *slot = (v < k).then_some(v);
                        }
                    }
                    out.push(CompiledController {
                        names: (0..k).map(|i| format!("s{i}")).collect(),
                        initial: 0,
                        final_state: f,
                        advice,
                        delta,
                    });
                }
            }
        }
    }
    out
}
