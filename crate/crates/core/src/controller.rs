//! Finite memoryless controllers.
//!
//! A controller is a tuple of control states, an initial and a final state,
//! advice mapping each non-final state to an action, and a (possibly partial)
//! transition function on observations. Missing transitions are allowed and
//! mean execution is stuck; `strict` validation rejects them.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::theory::{ActionId, Domain, ObsId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Controller {
    pub states: Vec<String>,
    pub initial: String,
    #[serde(rename = "final")]
    pub final_state: String,
    pub advice: BTreeMap<String, String>,
    #[serde(default)]
    pub transitions: Vec<(String, String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Defect {
    DuplicateState(String),
    UnknownState(String),
    MissingAdvice(String),
    AdviceOnFinal(String),
    UnknownAction { state: String, action: String },
    NotAdvisable { state: String, action: String },
    UnknownObservation { state: String, observation: String },
    TransitionFromFinal { observation: String },
    DuplicateTransition { state: String, observation: String },
    MissingTransition { state: String, observation: String },
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defect::DuplicateState(q) => write!(f, "state `{q}` declared twice"),
            Defect::UnknownState(q) => write!(f, "undeclared state `{q}`"),
            Defect::MissingAdvice(q) => write!(f, "no advice for state `{q}`"),
            Defect::AdviceOnFinal(q) => write!(f, "final state `{q}` has advice"),
            Defect::UnknownAction { state, action } => {
                write!(f, "state `{state}` advises unknown action `{action}`")
            }
            Defect::NotAdvisable { state, action } => {
                write!(f, "state `{state}` advises `{action}`, which only nature executes")
            }
            Defect::UnknownObservation { state, observation } => {
                write!(f, "transition from `{state}` on unknown observation `{observation}`")
            }
            Defect::TransitionFromFinal { observation } => {
                write!(f, "transition from the final state on `{observation}`")
            }
            Defect::DuplicateTransition { state, observation } => {
                write!(f, "two transitions from `{state}` on `{observation}`")
            }
            Defect::MissingTransition { state, observation } => {
                write!(f, "no transition from `{state}` on `{observation}`")
            }
        }
    }
}

impl Controller {
    pub fn from_json(text: &str) -> Result<Controller> {
        serde_json::from_str(text).map_err(|e| Error::Json {
            context: "controller file".into(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("controllers serialize")
    }

    pub fn is_empty_plan(&self) -> bool {
        self.initial == self.final_state
    }

    /// Structural defects against `d`; empty when the controller is valid.
    pub fn validate<W: Scalar>(&self, d: &Domain<W>) -> Vec<Defect> {
        self.check(d, false)
    }

    /// As [`validate`](Self::validate), and additionally requires a
    /// transition for every observation the advised action can produce.
    pub fn validate_strict<W: Scalar>(&self, d: &Domain<W>) -> Vec<Defect> {
        self.check(d, true)
    }

    fn check<W: Scalar>(&self, d: &Domain<W>, strict: bool) -> Vec<Defect> {
        let mut defects = Vec::new();
        let mut declared = BTreeSet::new();
        for q in &self.states {
            if !declared.insert(q.as_str()) {
                defects.push(Defect::DuplicateState(q.clone()));
            }
        }
        let known = |q: &str| declared.contains(q);
        for q in [&self.initial, &self.final_state] {
            if !known(q) {
                defects.push(Defect::UnknownState(q.clone()));
            }
        }
        for q in &self.states {
            if *q == self.final_state {
                if self.advice.contains_key(q) {
                    defects.push(Defect::AdviceOnFinal(q.clone()));
                }
                continue;
            }
            match self.advice.get(q) {
                None => defects.push(Defect::MissingAdvice(q.clone())),
                Some(a) => match d.action_id(a) {
                    None => defects.push(Defect::UnknownAction {
                        state: q.clone(),
                        action: a.clone(),
                    }),
                    Some(id) if !d.advisable_actions().contains(&id) => defects.push(Defect::NotAdvisable {
                        state: q.clone(),
                        action: a.clone(),
                    }),
                    Some(_) => {}
                },
            }
        }
        for q in self.advice.keys() {
            if !known(q) {
                defects.push(Defect::UnknownState(q.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for (from, o, to) in &self.transitions {
            for q in [from, to] {
                if !known(q) {
                    defects.push(Defect::UnknownState(q.clone()));
                }
            }
            if *from == self.final_state {
                defects.push(Defect::TransitionFromFinal { observation: o.clone() });
            }
            if d.observation_id(o).is_none() {
                defects.push(Defect::UnknownObservation {
                    state: from.clone(),
                    observation: o.clone(),
                });
            }
            if !seen.insert((from.as_str(), o.as_str())) {
                defects.push(Defect::DuplicateTransition {
                    state: from.clone(),
                    observation: o.clone(),
                });
            }
        }
        if strict {
            for q in &self.states {
                if *q == self.final_state {
                    continue;
                }
                let Some(a) = self.advice.get(q).and_then(|a| d.action_id(a)) else {
                    continue;
                };
                for o in d.possible_observations(a) {
                    let name = &d.observations[o];
                    if !seen.contains(&(q.as_str(), name.as_str())) {
                        defects.push(Defect::MissingTransition {
                            state: q.clone(),
                            observation: name.clone(),
                        });
                    }
                }
            }
        }
        defects
    }

    /// Resolves names against `d`. Fails when [`validate`](Self::validate)
    /// reports defects.
    pub fn compile<W: Scalar>(&self, d: &Domain<W>) -> Result<CompiledController> {
        let defects = self.validate(d);
        if !defects.is_empty() {
            return Err(Error::InvalidController(
                defects.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
            ));
        }
        let index: HashMap<&str, usize> = self.states.iter().enumerate().map(|(i, q)| (q.as_str(), i)).collect();
        let mut delta = vec![vec![None; d.observations.len()]; self.states.len()];
        for (from, o, to) in &self.transitions {
            delta[index[from.as_str()]][d.observation_id(o).unwrap()] = Some(index[to.as_str()]);
        }
        Ok(CompiledController {
            names: self.states.clone(),
            initial: index[self.initial.as_str()],
            final_state: index[self.final_state.as_str()],
            advice: self
                .states
                .iter()
                .map(|q| self.advice.get(q).map(|a| d.action_id(a).unwrap()))
                .collect(),
            delta,
        })
    }

    /// GraphViz rendering. The initial state is drawn bold and the final
    /// state as a double circle; nodes carry their advice.
    pub fn export_dot(&self) -> String {
        let mut out = String::from("digraph controller {\n  rankdir=LR;\n");
        for q in &self.states {
            let mut attrs = Vec::new();
            attrs.push(format!(
                "shape={}",
                if *q == self.final_state {
                    "doublecircle"
                } else {
                    "circle"
                }
            ));
            if *q == self.initial {
                attrs.push("style=bold".into());
            }
            let label = match self.advice.get(q) {
                Some(a) => format!("{}\\n{}", escape(q), escape(a)),
                None => escape(q),
            };
            attrs.push(format!("label=\"{label}\""));
            out.push_str(&format!("  \"{}\" [{}];\n", escape(q), attrs.join(", ")));
        }
        for (from, o, to) in &self.transitions {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
                escape(from),
                escape(to),
                escape(o)
            ));
        }
        out.push_str("}\n");
        out
    }

    /// Reads back the output of [`export_dot`](Self::export_dot).
    pub fn parse_dot(text: &str) -> Result<Controller> {
        let bad = |line: &str| Error::InvalidController(format!("unrecognised DOT line: {line}"));
        let mut states = Vec::new();
        let mut initial = None;
        let mut final_state = None;
        let mut advice = BTreeMap::new();
        let mut transitions = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with("digraph") || line == "}" || line.starts_with("rankdir") {
                continue;
            }
            let (first, rest) = take_quoted(line).ok_or_else(|| bad(line))?;
            let rest = rest.trim_start();
            if let Some(rest) = rest.strip_prefix("->") {
                let (to, rest) = take_quoted(rest.trim_start()).ok_or_else(|| bad(line))?;
                let label = attr(rest, "label").ok_or_else(|| bad(line))?;
                transitions.push((first, label_text(&label), to));
            } else {
                let shape = attr(rest, "shape").ok_or_else(|| bad(line))?;
                if shape == "doublecircle" {
                    final_state = Some(first.clone());
                }
                if attr(rest, "style").as_deref() == Some("bold") {
                    initial = Some(first.clone());
                }
                let label = label_text(&attr(rest, "label").ok_or_else(|| bad(line))?);
                if let Some((_, a)) = label.split_once('\n') {
                    advice.insert(first.clone(), a.to_string());
                }
                states.push(first);
            }
        }
        Ok(Controller {
            states,
            initial: initial.ok_or_else(|| Error::InvalidController("no initial state".into()))?,
            final_state: final_state.ok_or_else(|| Error::InvalidController("no final state".into()))?,
            advice,
            transitions,
        })
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Splits a leading `"..."` off `s`, unescaping it.
fn take_quoted(s: &str) -> Option<(String, &str)> {
    let s = s.strip_prefix('"')?;
    let mut out = String::new();
    let mut chars = s.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => {
                let (_, next) = chars.next()?;
                if next == 'n' {
                    out.push_str("\\n");
                } else {
                    out.push(next);
                }
            }
            '"' => return Some((out, &s[i + 1..])),
            c => out.push(c),
        }
    }
    None
}

fn attr(s: &str, key: &str) -> Option<String> {
    let start = s.find(&format!("{key}="))? + key.len() + 1;
    let rest = &s[start..];
    if rest.starts_with('"') {
        take_quoted(rest).map(|(v, _)| v)
    } else {
        Some(rest.split([',', ']']).next()?.trim().to_string())
    }
}

/// Label text with the `\n` escape turned into a newline.
fn label_text(s: &str) -> String {
    s.replace("\\n", "\n")
}

/// A controller with names resolved to domain ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompiledController {
    pub names: Vec<String>,
    pub initial: usize,
    pub final_state: usize,
    pub advice: Vec<Option<ActionId>>,
    /// `delta[q][o]`
    pub delta: Vec<Vec<Option<usize>>>,
}

impl CompiledController {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn is_final(&self, q: usize) -> bool {
        q == self.final_state
    }

    pub fn next(&self, q: usize, o: ObsId) -> Option<usize> {
        self.delta[q][o]
    }

    pub fn to_controller<W: Scalar>(&self, d: &Domain<W>) -> Controller {
        let mut advice = BTreeMap::new();
        let mut transitions = Vec::new();
        for (q, name) in self.names.iter().enumerate() {
            if let Some(a) = self.advice[q] {
                advice.insert(name.clone(), d.action(a).name.clone());
            }
            for (o, t) in self.delta[q].iter().enumerate() {
                if let Some(t) = t {
                    transitions.push((name.clone(), d.observations[o].clone(), self.names[*t].clone()));
                }
            }
        }
        Controller {
            states: self.names.clone(),
            initial: self.names[self.initial].clone(),
            final_state: self.names[self.final_state].clone(),
            advice,
            transitions,
        }
    }

    /// Relabels states in breadth-first discovery order from the initial
    /// state, following observations in alphabet order. Unreachable states
    /// are dropped. Two controllers are isomorphic on their reachable part
    /// iff their canonical forms are equal.
    pub fn canonical(&self) -> CompiledController {
        let mut order = vec![self.initial];
        let mut label = vec![None; self.len()];
        label[self.initial] = Some(0);
        let mut queue = VecDeque::from([self.initial]);
        while let Some(q) = queue.pop_front() {
            for t in self.delta[q].iter().flatten() {
                if label[*t].is_none() {
                    label[*t] = Some(order.len());
                    order.push(*t);
                    queue.push_back(*t);
                }
            }
        }
        let final_state = label[self.final_state];
        let names = canonical_names(order.len(), final_state);
        CompiledController {
            initial: 0,
            final_state: final_state.unwrap_or(usize::MAX),
            advice: order.iter().map(|&q| self.advice[q]).collect(),
            delta: order
                .iter()
                .map(|&q| self.delta[q].iter().map(|t| t.and_then(|t| label[t])).collect())
                .collect(),
            names,
        }
    }

    /// Structure of the canonical form, without names.
    pub fn canonical_key(&self) -> Vec<i64> {
        let c = self.canonical();
        let mut key = vec![c.len() as i64, c.final_state as i64];
        for q in 0..c.len() {
            key.push(c.advice[q].map_or(-1, |a| a as i64));
            key.extend(c.delta[q].iter().map(|t| t.map_or(-1, |t| t as i64)));
        }
        key
    }
}

/// `Q0, Q1, ...` in order with the final state called `QF`; a single state
/// that is both initial and final is `Q0`.
fn canonical_names(n: usize, final_state: Option<usize>) -> Vec<String> {
    if n == 1 {
        return vec!["Q0".into()];
    }
    let mut next = 0;
    (0..n)
        .map(|i| {
            if Some(i) == final_state {
                "QF".to_string()
            } else {
                next += 1;
                format!("Q{}", next - 1)
            }
        })
        .collect()
}

/// Which observations get a transition slot during enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationSlots {
    /// Every observation in the alphabet.
    All,
    /// Only observations the advised action can produce.
    Producible,
}

/// Lazy stream of canonical controllers with at most `max_states` states,
/// ordered by size and then by the choice sequence of their breadth-first
/// construction. Within a state the advised action is chosen first (in
/// declaration order), then one target per observation slot from: no
/// transition, an existing state, a fresh ordinary state, a fresh final
/// state. Every yielded controller has all states reachable and its final
/// state reachable from the initial one.
pub struct Enumerator {
    actions: Vec<ActionId>,
    slots: Vec<Vec<ObsId>>,
    n_obs: usize,
    max_states: usize,
    size: usize,
    choices: Vec<(usize, usize)>,
    started: bool,
}

impl Enumerator {
    pub fn new<W: Scalar>(d: &Domain<W>, max_states: usize, slots: ObservationSlots) -> Self {
        let actions = d.advisable_actions().to_vec();
        let slots = actions
            .iter()
            .map(|&a| match slots {
                ObservationSlots::All => (0..d.observations.len()).collect(),
                ObservationSlots::Producible => d.possible_observations(a),
            })
            .collect();
        Enumerator {
            actions,
            slots,
            n_obs: d.observations.len(),
            max_states,
            size: 1,
            choices: Vec::new(),
            started: false,
        }
    }

    /// Replays the current choices. Returns the partial controller and the
    /// number of options at the next decision, or `None` when complete.
    fn replay(&self) -> (Partial, Option<usize>) {
        let mut p = Partial::new(self.n_obs);
        for &(choice, _) in &self.choices {
            p.apply(choice, self);
        }
        let options = p.options(self);
        (p, options)
    }

    /// Extends the current choice prefix with first options until it is
    /// complete. Returns whether a valid controller was reached.
    fn descend(&mut self) -> bool {
        loop {
            let (p, options) = self.replay();
            match options {
                None => return p.valid(self.size),
                Some(0) => return false,
                Some(n) => self.choices.push((0, n)),
            }
        }
    }

    /// Moves to the next choice sequence in lexicographic order.
    fn advance(&mut self) -> bool {
        while let Some((choice, n)) = self.choices.pop() {
            if choice + 1 < n {
                self.choices.push((choice + 1, n));
                return true;
            }
        }
        false
    }

    fn next_compiled(&mut self) -> Option<Partial> {
        loop {
            if self.size > self.max_states || self.max_states == 0 {
                return None;
            }
            if self.size == 1 {
                self.size = 2;
                return Some(Partial::empty_plan(self.n_obs));
            }
            let progressed = if self.started { self.advance() } else { true };
            self.started = true;
            if !progressed {
                self.size += 1;
                self.started = false;
                self.choices.clear();
                continue;
            }
            if self.descend() {
                return Some(self.replay().0);
            }
        }
    }
}

impl Iterator for Enumerator {
    type Item = CompiledController;

    fn next(&mut self) -> Option<CompiledController> {
        let p = self.next_compiled()?;
        Some(p.finish(&self.actions))
    }
}

/// Controller under construction.
struct Partial {
    advice: Vec<Option<usize>>,
    delta: Vec<Vec<Option<usize>>>,
    final_state: Option<usize>,
    /// State being filled in and the next decision within it: 0 for the
    /// action, `k + 1` for the k-th observation slot.
    cursor: usize,
    step: usize,
}

impl Partial {
    fn new(n_obs: usize) -> Self {
        Partial {
            advice: vec![None],
            delta: vec![vec![None; n_obs]],
            final_state: None,
            cursor: 0,
            step: 0,
        }
    }

    fn empty_plan(n_obs: usize) -> Self {
        Partial {
            advice: vec![None],
            delta: vec![vec![None; n_obs]],
            final_state: Some(0),
            cursor: 1,
            step: 0,
        }
    }

    fn count(&self) -> usize {
        self.advice.len()
    }

    /// Skips past the final state and finished states.
    fn normalize(&mut self, e: &Enumerator) {
        loop {
            if self.cursor >= self.count() {
                return;
            }
            if Some(self.cursor) == self.final_state {
                self.cursor += 1;
                self.step = 0;
                continue;
            }
            if self.step > 0 {
                let a = self.advice[self.cursor].unwrap();
                if self.step > e.slots[a].len() {
                    self.cursor += 1;
                    self.step = 0;
                    continue;
                }
            }
            return;
        }
    }

    fn options(&mut self, e: &Enumerator) -> Option<usize> {
        self.normalize(e);
        if self.cursor >= self.count() {
            return None;
        }
        if self.step == 0 {
            return Some(e.actions.len());
        }
        Some(self.targets(e.size).len())
    }

    fn targets(&self, size: usize) -> Vec<Target> {
        let count = self.count();
        let mut out = vec![Target::None];
        out.extend((0..count).map(Target::Existing));
        let reserved = usize::from(self.final_state.is_none());
        if count + 1 + reserved <= size {
            out.push(Target::Fresh);
        }
        if self.final_state.is_none() && count < size {
            out.push(Target::FreshFinal);
        }
        out
    }

    fn apply(&mut self, choice: usize, e: &Enumerator) {
        self.normalize(e);
        let q = self.cursor;
        if self.step == 0 {
            self.advice[q] = Some(choice);
        } else {
            let a = self.advice[q].unwrap();
            let o = e.slots[a][self.step - 1];
            let n_obs = self.delta[0].len();
            let target = match self.targets(e.size)[choice] {
                Target::None => None,
                Target::Existing(t) => Some(t),
                Target::Fresh => {
                    self.advice.push(None);
                    self.delta.push(vec![None; n_obs]);
                    Some(self.count() - 1)
                }
                Target::FreshFinal => {
                    self.advice.push(None);
                    self.delta.push(vec![None; n_obs]);
                    self.final_state = Some(self.count() - 1);
                    Some(self.count() - 1)
                }
            };
            self.delta[q][o] = target;
        }
        self.step += 1;
    }

    fn valid(&self, size: usize) -> bool {
        self.final_state.is_some() && self.count() == size
    }

    fn finish(self, actions: &[ActionId]) -> CompiledController {
        let final_state = self.final_state.unwrap();
        CompiledController {
            names: canonical_names(self.count(), Some(final_state)),
            initial: 0,
            final_state,
            advice: self.advice.iter().map(|a| a.map(|i| actions[i])).collect(),
            delta: self.delta,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Target {
    None,
    Existing(usize),
    Fresh,
    FreshFinal,
}

/// Every valid controller with at most `max_states` states over the full
/// action and observation alphabets of `d`, in canonical order.
pub fn enumerate_controllers<W: Scalar>(d: &Domain<W>, max_states: usize) -> impl Iterator<Item = Controller> + '_ {
    Enumerator::new(d, max_states, ObservationSlots::All).map(move |c| c.to_controller(d))
}

#[cfg(test)]
mod tests;
