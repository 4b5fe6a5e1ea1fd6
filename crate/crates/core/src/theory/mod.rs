//! Grounded finite-domain action theories.
//!
//! A [`Domain`] fixes the fluents with their finite value sets, the ground
//! actions with preconditions and simultaneous effects, the alternative
//! outcomes nature may substitute for an intended action, the sensing models,
//! the weighted initial worlds, and the goal. Situations are represented by
//! their fluent valuation ([`WorldState`]): preconditions, effects and
//! likelihoods only read current fluent values, so two histories reaching the
//! same valuation have the same futures.

mod formula;
mod parse;
pub mod sexpr;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use formula::{parse_formula, parse_value, Cmp, Epistemic, Formula, FormulaError, Threshold, ValueExpr};
pub use parse::parse_domain;

pub type FluentId = usize;
pub type ActionId = usize;
pub type ObsId = usize;

/// Observation returned by actions without a sensing model.
pub const NULL_OBSERVATION: &str = "0";

/// Cap on partial assignments enumerated by the static domain checks.
pub(crate) const ENUMERATION_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    Int,
    Sym,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluentDecl {
    pub name: String,
    pub kind: ValueKind,
    /// Domain in declaration order. Symbolic values are interned codes.
    pub values: Vec<i64>,
    /// Symbol names for symbolic fluents, parallel to `values`.
    pub labels: Vec<String>,
}

impl FluentDecl {
    pub fn ints(name: &str, values: impl IntoIterator<Item = i64>) -> Self {
        FluentDecl {
            name: name.into(),
            kind: ValueKind::Int,
            values: values.into_iter().collect(),
            labels: Vec::new(),
        }
    }

    /// Symbolic fluent; codes are assigned by [`Signature::new`].
    pub fn symbols(name: &str, labels: &[&str]) -> Self {
        FluentDecl {
            name: name.into(),
            kind: ValueKind::Sym,
            values: Vec::new(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn contains(&self, v: i64) -> bool {
        self.values.contains(&v)
    }

    /// Nearest domain value, ties resolved towards the smaller one.
    pub fn clamp(&self, v: i64) -> i64 {
        *self
            .values
            .iter()
            .min_by_key(|&&x| ((x - v).unsigned_abs(), x))
            .expect("fluent domains are nonempty")
    }
}

/// Fluent declarations plus the interned symbol table.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub fluents: Vec<FluentDecl>,
    pub symbols: Vec<String>,
    fluent_index: HashMap<String, FluentId>,
    symbol_index: HashMap<String, i64>,
}

impl Signature {
    pub fn new(mut fluents: Vec<FluentDecl>) -> Self {
        let mut symbols = Vec::new();
        let mut symbol_index = HashMap::new();
        for f in &mut fluents {
            if f.kind == ValueKind::Sym {
                f.values = f
                    .labels
                    .iter()
                    .map(|l| {
                        *symbol_index.entry(l.clone()).or_insert_with(|| {
                            symbols.push(l.clone());
                            (symbols.len() - 1) as i64
                        })
                    })
                    .collect();
            }
        }
        let fluent_index = fluents.iter().enumerate().map(|(i, f)| (f.name.clone(), i)).collect();
        Signature {
            fluents,
            symbols,
            fluent_index,
            symbol_index,
        }
    }

    pub fn fluent_id(&self, name: &str) -> Option<FluentId> {
        self.fluent_index.get(name).copied()
    }

    pub fn symbol_code(&self, name: &str) -> Option<i64> {
        self.symbol_index.get(name).copied()
    }

    pub fn render_const(&self, c: i64, kind: ValueKind) -> String {
        match kind {
            ValueKind::Int => c.to_string(),
            ValueKind::Sym => self.symbols.get(c as usize).cloned().unwrap_or_else(|| format!("#{c}")),
        }
    }

    pub fn render_value(&self, f: FluentId, v: i64) -> String {
        self.render_const(v, self.fluents[f].kind)
    }

    pub fn value_to_json(&self, f: FluentId, v: i64) -> Value {
        match self.fluents[f].kind {
            ValueKind::Int => Value::from(v),
            ValueKind::Sym => Value::from(self.render_value(f, v)),
        }
    }

    /// Reads a single fluent value (integer or symbol name) and checks it
    /// lies in the fluent's domain.
    pub fn value_from_json(&self, f: FluentId, v: &Value) -> Result<i64> {
        let decl = &self.fluents[f];
        let code = match (decl.kind, v) {
            (ValueKind::Int, Value::Number(n)) => n.as_i64(),
            (ValueKind::Sym, Value::String(s)) => self.symbol_code(s),
            _ => None,
        };
        match code {
            Some(c) if decl.contains(c) => Ok(c),
            _ => Err(Error::InvalidDomain(format!(
                "value {v} is not in the domain of fluent `{}`",
                decl.name
            ))),
        }
    }

    pub fn state_to_json(&self, w: &WorldState) -> Value {
        let mut map = Map::new();
        for (i, f) in self.fluents.iter().enumerate() {
            map.insert(f.name.clone(), self.value_to_json(i, w.get(i)));
        }
        Value::Object(map)
    }

    /// Reads a total assignment `{"fluent": value, ...}`.
    pub fn state_from_json(&self, v: &Value) -> Result<WorldState> {
        let Value::Object(map) = v else {
            return Err(Error::InvalidDomain(format!("expected a state object, found {v}")));
        };
        for key in map.keys() {
            if self.fluent_id(key).is_none() {
                return Err(Error::UnknownFluent {
                    name: key.clone(),
                    context: "state".into(),
                });
            }
        }
        let values = self
            .fluents
            .iter()
            .enumerate()
            .map(|(i, f)| match map.get(&f.name) {
                Some(v) => self.value_from_json(i, v),
                None => Err(Error::InvalidDomain(format!(
                    "state does not assign fluent `{}`",
                    f.name
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WorldState::new(values))
    }

    pub fn render_state(&self, w: &WorldState) -> String {
        let mut s = String::from("{");
        for (i, f) in self.fluents.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            s.push_str(&f.name);
            s.push_str(": ");
            s.push_str(&self.render_value(i, w.get(i)));
        }
        s.push('}');
        s
    }

    /// First domain value of every fluent.
    pub fn base_state(&self) -> WorldState {
        WorldState::new(self.fluents.iter().map(|f| f.values[0]).collect())
    }

    /// Calls `visit` on every assignment of `fluents` (other fluents held at
    /// their first value). Returns `Ok(false)` without visiting anything when
    /// the product exceeds `cap`.
    pub(crate) fn for_each_assignment<E>(
        &self,
        fluents: &BTreeSet<FluentId>,
        cap: usize,
        mut visit: impl FnMut(&WorldState) -> std::result::Result<(), E>,
    ) -> std::result::Result<bool, E> {
        let ids: Vec<FluentId> = fluents.iter().copied().collect();
        let mut size: usize = 1;
        for &f in &ids {
            size = size.saturating_mul(self.fluents[f].values.len());
            if size > cap {
                return Ok(false);
            }
        }
        let mut values = self.base_state().0.into_vec();
        let mut digits = vec![0usize; ids.len()];
        loop {
            for (k, &f) in ids.iter().enumerate() {
                values[f] = self.fluents[f].values[digits[k]];
            }
            visit(&WorldState::new(values.clone()))?;
            let mut k = 0;
            loop {
                if k == ids.len() {
                    return Ok(true);
                }
                digits[k] += 1;
                if digits[k] < self.fluents[ids[k]].values.len() {
                    break;
                }
                digits[k] = 0;
                k += 1;
            }
        }
    }
}

/// Total assignment of values to the declared fluents.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WorldState(Box<[i64]>);

impl WorldState {
    pub fn new(values: Vec<i64>) -> Self {
        WorldState(values.into_boxed_slice())
    }

    pub fn get(&self, f: FluentId) -> i64 {
        self.0[f]
    }

    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub fn with(&self, f: FluentId, v: i64) -> Self {
        let mut values = self.0.clone();
        values[f] = v;
        WorldState(values)
    }
}

impl fmt::Debug for WorldState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    Physical,
    Sensing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    pub fluent: FluentId,
    pub value: ValueExpr,
    pub clamp: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundAction {
    pub name: String,
    pub kind: ActionKind,
    pub precondition: Formula,
    pub effects: Vec<Effect>,
}

/// Likelihood of an outcome or reading, possibly depending on the state.
#[derive(Debug, Clone, PartialEq)]
pub enum Likelihood<W> {
    Const(W),
    /// First case whose condition holds, else `otherwise`.
    Cases {
        cases: Vec<(Formula, W)>,
        otherwise: W,
    },
}

impl<W: Scalar> Likelihood<W> {
    pub fn eval(&self, w: &WorldState) -> W {
        match self {
            Likelihood::Const(v) => v.clone(),
            Likelihood::Cases { cases, otherwise } => cases
                .iter()
                .find(|(cond, _)| cond.eval_objective(w))
                .map(|(_, v)| v.clone())
                .unwrap_or_else(|| otherwise.clone()),
        }
    }

    fn collect_fluents(&self, out: &mut BTreeSet<FluentId>) {
        if let Likelihood::Cases { cases, .. } = self {
            for (cond, _) in cases {
                cond.collect_fluents(out);
            }
        }
    }
}

/// Alternatives nature may execute in place of an intended action.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel<W> {
    pub intended: ActionId,
    pub outcomes: Vec<(ActionId, Likelihood<W>)>,
    /// Sum of the declared constant likelihoods before normalization
    /// (one for state-dependent models, which normalize per state).
    pub scale: W,
}

impl<W> OutcomeModel<W> {
    pub fn is_constant(&self) -> bool {
        self.outcomes.iter().all(|(_, l)| matches!(l, Likelihood::Const(_)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadingDecl {
    pub token: String,
    pub value: Option<f64>,
    pub observation: ObsId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorLikelihood<W> {
    /// One likelihood per declared reading.
    Table(Vec<Likelihood<W>>),
    /// `N(z; w[mean_fluent], variance)` evaluated at the reading's value.
    Gaussian { mean_fluent: FluentId, variance: f64 },
}

/// Maps continuous readings below `upper` to `observation`; the last
/// interval has no upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsInterval {
    pub upper: Option<f64>,
    pub observation: ObsId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingModel<W> {
    pub action: ActionId,
    pub readings: Vec<ReadingDecl>,
    pub likelihood: SensorLikelihood<W>,
    pub intervals: Vec<ObsInterval>,
}

/// A sensor reading as supplied at run time: a declared token, a number, or
/// both.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Reading {
    pub token: Option<String>,
    pub value: Option<f64>,
}

impl Reading {
    pub fn token(token: &str) -> Self {
        Reading {
            token: Some(token.into()),
            value: None,
        }
    }

    pub fn value(value: f64) -> Self {
        Reading {
            token: None,
            value: Some(value),
        }
    }
}

impl fmt::Display for Reading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.token, self.value) {
            (Some(t), _) => f.write_str(t),
            (None, Some(v)) => write!(f, "{v}"),
            (None, None) => f.write_str("<none>"),
        }
    }
}

/// A reading matched against a sensing model.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedReading {
    /// Index of the declared reading, when it matches one.
    pub index: Option<usize>,
    pub value: Option<f64>,
    pub observation: ObsId,
}

impl ResolvedReading {
    /// The declared token, else the numeric value.
    pub fn describe<W>(&self, model: &SensingModel<W>) -> String {
        match (self.index, self.value) {
            (Some(i), _) => model.readings[i].token.clone(),
            (None, Some(v)) => format!("{v}"),
            (None, None) => "<none>".into(),
        }
    }
}

impl<W: Scalar> SensingModel<W> {
    pub fn is_quantized(&self) -> bool {
        !self.readings.is_empty()
    }

    pub fn resolve(&self, r: &Reading) -> Option<ResolvedReading> {
        if let Some(token) = &r.token {
            let index = self.readings.iter().position(|d| &d.token == token)?;
            let decl = &self.readings[index];
            return Some(ResolvedReading {
                index: Some(index),
                value: r.value.or(decl.value),
                observation: decl.observation,
            });
        }
        let z = r.value?;
        if let Some(index) = self
            .readings
            .iter()
            .position(|d| d.value.is_some_and(|v| (v - z).abs() <= 1e-9))
        {
            return Some(ResolvedReading {
                index: Some(index),
                value: Some(z),
                observation: self.readings[index].observation,
            });
        }
        match self.likelihood {
            SensorLikelihood::Gaussian { .. } => Some(ResolvedReading {
                index: None,
                value: Some(z),
                observation: self.observation_of_value(z)?,
            }),
            SensorLikelihood::Table(_) => None,
        }
    }

    /// Observation for a continuous value: the interval map when declared,
    /// otherwise the observation of the nearest declared reading.
    pub fn observation_of_value(&self, z: f64) -> Option<ObsId> {
        if !self.intervals.is_empty() {
            return self
                .intervals
                .iter()
                .find(|iv| iv.upper.is_none_or(|u| z < u))
                .map(|iv| iv.observation);
        }
        self.readings
            .iter()
            .filter_map(|d| d.value.map(|v| ((v - z).abs(), d)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, d)| d.observation)
    }

    pub fn likelihood(&self, r: &ResolvedReading, w: &WorldState) -> W {
        match &self.likelihood {
            SensorLikelihood::Table(table) => match r.index {
                Some(i) => table[i].eval(w),
                None => W::zero(),
            },
            SensorLikelihood::Gaussian { mean_fluent, variance } => match r.value {
                Some(z) => W::gaussian_density(z, w.get(*mean_fluent) as f64, *variance)
                    .expect("gaussian models are rejected for exact scalars at parse time"),
                None => W::zero(),
            },
        }
    }

    /// Declared readings with their likelihood at `w`, in declaration order.
    pub fn reading_likelihoods(&self, w: &WorldState) -> Vec<(ResolvedReading, W)> {
        self.readings
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let r = ResolvedReading {
                    index: Some(i),
                    value: d.value,
                    observation: d.observation,
                };
                let l = self.likelihood(&r, w);
                (r, l)
            })
            .collect()
    }

    pub fn observations(&self) -> BTreeSet<ObsId> {
        self.readings
            .iter()
            .map(|d| d.observation)
            .chain(self.intervals.iter().map(|iv| iv.observation))
            .collect()
    }

    fn relevant_fluents(&self) -> BTreeSet<FluentId> {
        let mut out = BTreeSet::new();
        match &self.likelihood {
            SensorLikelihood::Table(table) => table.iter().for_each(|l| l.collect_fluents(&mut out)),
            SensorLikelihood::Gaussian { mean_fluent, .. } => {
                out.insert(*mean_fluent);
            }
        }
        out
    }
}

/// A validated, grounded action theory over weights of type `W`.
#[derive(Debug, Clone)]
pub struct Domain<W> {
    pub signature: Signature,
    pub actions: Vec<GroundAction>,
    outcome_models: Vec<Option<OutcomeModel<W>>>,
    sensing_models: Vec<Option<SensingModel<W>>>,
    /// Observation alphabet in canonical (sorted) order.
    pub observations: Vec<String>,
    /// Initial worlds with their prior weights (duplicates merged).
    pub initial: Vec<(WorldState, W)>,
    pub goal: Formula,
    advisable: Vec<ActionId>,
    acting_deterministic: bool,
    sensing_deterministic: bool,
    null_observation: Option<ObsId>,
}

impl<W: Scalar> Domain<W> {
    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|a| a.name == name)
    }

    pub fn action(&self, a: ActionId) -> &GroundAction {
        &self.actions[a]
    }

    pub fn observation_id(&self, token: &str) -> Option<ObsId> {
        self.observations.iter().position(|o| o == token)
    }

    pub fn null_observation(&self) -> Option<ObsId> {
        self.null_observation
    }

    pub fn outcome_model(&self, a: ActionId) -> Option<&OutcomeModel<W>> {
        self.outcome_models[a].as_ref()
    }

    pub fn sensing_model(&self, a: ActionId) -> Option<&SensingModel<W>> {
        self.sensing_models[a].as_ref()
    }

    pub fn sensing_models(&self) -> impl Iterator<Item = &SensingModel<W>> {
        self.sensing_models.iter().flatten()
    }

    /// Actions a controller may advise: everything except alternatives that
    /// only nature executes.
    pub fn advisable_actions(&self) -> &[ActionId] {
        &self.advisable
    }

    /// Observations `a` can produce, in alphabet order.
    pub fn possible_observations(&self, a: ActionId) -> Vec<ObsId> {
        match self.sensing_model(a) {
            Some(m) => m.observations().into_iter().collect(),
            None => self.null_observation.into_iter().collect(),
        }
    }

    /// Every outcome model has a single alternative.
    pub fn is_acting_deterministic(&self) -> bool {
        self.acting_deterministic
    }

    /// Every sensing model yields exactly one observation in every state.
    pub fn is_sensing_deterministic(&self) -> bool {
        self.sensing_deterministic
    }

    pub fn is_noise_free(&self) -> bool {
        self.acting_deterministic && self.sensing_deterministic
    }

    /// Same theory with a different goal.
    pub fn with_goal(&self, goal: Formula) -> Self {
        let mut d = self.clone();
        d.goal = goal;
        d
    }

    /// Same theory with a different prior.
    pub fn with_initial(&self, initial: Vec<(WorldState, W)>) -> Result<Self> {
        let mut d = self.clone();
        d.initial = parse::merge_initial(initial)?;
        Ok(d)
    }

    pub fn parse_goal(&self, text: &str) -> Result<Formula> {
        parse_formula(text, &self.signature).map_err(|e| Error::Syntax {
            context: "goal".into(),
            offset: e.offset,
            message: e.message,
        })
    }

    /// Initial worlds with positive weight, in declaration order.
    pub fn positive_initial(&self) -> impl Iterator<Item = &(WorldState, W)> {
        self.initial.iter().filter(|(_, w)| w.is_positive())
    }

    pub fn total_initial_weight(&self) -> W {
        crate::scalar::sum(self.initial.iter().map(|(_, w)| w))
    }

    pub fn render_state(&self, w: &WorldState) -> String {
        self.signature.render_state(w)
    }

    pub fn eval_objective(&self, f: &Formula, w: &WorldState) -> bool {
        f.eval_objective(w)
    }

    pub fn poss(&self, a: ActionId, w: &WorldState) -> bool {
        self.actions[a].precondition.eval_objective(w)
    }

    /// Applies the effects of `a` simultaneously against `w`. Unmentioned
    /// fluents keep their values.
    pub fn apply(&self, a: ActionId, w: &WorldState) -> WorldState {
        let action = &self.actions[a];
        if action.effects.is_empty() {
            return w.clone();
        }
        let mut values = w.values().to_vec();
        for e in &action.effects {
            let v = e.value.eval(w);
            let decl = &self.signature.fluents[e.fluent];
            values[e.fluent] = if decl.contains(v) {
                v
            } else {
                debug_assert!(e.clamp, "unchecked out-of-domain effect");
                decl.clamp(v)
            };
        }
        WorldState::new(values)
    }

    /// Alternatives of `a` that are executable at `w`, with their normalized
    /// likelihoods. Alternatives with likelihood zero are dropped. Without an
    /// outcome model, `a` is its own only alternative.
    pub fn outcomes_of(&self, a: ActionId, w: &WorldState) -> Vec<(ActionId, W)> {
        match self.outcome_model(a) {
            None => {
                if self.poss(a, w) {
                    vec![(a, W::one())]
                } else {
                    Vec::new()
                }
            }
            Some(model) => {
                let raw: Vec<(ActionId, W)> = model.outcomes.iter().map(|(b, l)| (*b, l.eval(w))).collect();
                let total = crate::scalar::sum(raw.iter().map(|(_, l)| l));
                if !total.is_positive() {
                    return Vec::new();
                }
                // constant models were normalized when parsed
                let normalize = !model.is_constant();
                raw.into_iter()
                    .filter(|(b, l)| l.is_positive() && self.poss(*b, w))
                    .map(|(b, l)| if normalize { (b, l / total.clone()) } else { (b, l) })
                    .collect()
            }
        }
    }

    /// The unique observation `a` returns at `w` under deterministic sensing.
    pub fn exact_observation(&self, a: ActionId, w: &WorldState) -> Result<ObsId> {
        match self.sensing_model(a) {
            None => Ok(self
                .null_observation
                .expect("null observation exists when some action lacks a sensing model")),
            Some(model) => {
                let observed: BTreeSet<ObsId> = match &model.likelihood {
                    SensorLikelihood::Gaussian { .. } => BTreeSet::new(),
                    SensorLikelihood::Table(_) => model
                        .reading_likelihoods(w)
                        .into_iter()
                        .filter(|(_, l)| l.is_positive())
                        .map(|(r, _)| r.observation)
                        .collect(),
                };
                if observed.len() == 1 {
                    Ok(*observed.first().unwrap())
                } else {
                    Err(Error::NondeterministicSensing {
                        action: self.actions[a].name.clone(),
                        state: self.render_state(w),
                    })
                }
            }
        }
    }

    /// Probability of each observation of `a` at `w` (table models only;
    /// `None` for density models).
    pub fn observation_distribution(&self, a: ActionId, w: &WorldState) -> Option<Vec<(ObsId, W)>> {
        let Some(model) = self.sensing_model(a) else {
            return Some(vec![(self.null_observation?, W::one())]);
        };
        if matches!(model.likelihood, SensorLikelihood::Gaussian { .. }) {
            return None;
        }
        let readings = model.reading_likelihoods(w);
        let total = crate::scalar::sum(readings.iter().map(|(_, l)| l));
        let mut acc: Vec<(ObsId, W)> = Vec::new();
        for (r, l) in readings {
            if !l.is_positive() {
                continue;
            }
            match acc.iter_mut().find(|(o, _)| *o == r.observation) {
                Some((_, m)) => *m = m.clone() + l / total.clone(),
                None => acc.push((r.observation, l / total.clone())),
            }
        }
        acc.sort_by_key(|(o, _)| *o);
        Some(acc)
    }
}
