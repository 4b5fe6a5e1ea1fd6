//! JSON domain files.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Deserialize;
use serde_json::Value;

use super::formula::{parse_formula, parse_value, Formula, ValueExpr};
use super::{
    ActionId, ActionKind, Domain, Effect, FluentDecl, FluentId, GroundAction, Likelihood, ObsInterval, OutcomeModel,
    ReadingDecl, SensingModel, SensorLikelihood, Signature, ValueKind, WorldState, ENUMERATION_CAP, NULL_OBSERVATION,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainFile {
    fluents: Vec<FluentSpec>,
    actions: Vec<ActionSpec>,
    #[serde(default)]
    outcome_models: Vec<OutcomeSpec>,
    #[serde(default)]
    sensing_models: Vec<SensingSpec>,
    initial: Vec<InitialSpec>,
    goal: String,
    #[serde(default, rename = "comment")]
    _comment: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FluentSpec {
    name: String,
    domain: DomainSpec,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DomainSpec {
    Range { range: [i64; 2] },
    Ints(Vec<i64>),
    Symbols(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionSpec {
    name: String,
    #[serde(default = "physical")]
    kind: String,
    #[serde(default = "true_formula")]
    precondition: String,
    #[serde(default)]
    effects: Vec<EffectSpec>,
    advisable: Option<bool>,
    #[serde(default, rename = "comment")]
    _comment: Option<Value>,
}

fn physical() -> String {
    "physical".into()
}

fn true_formula() -> String {
    "true".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EffectSpec {
    fluent: String,
    value: Value,
    #[serde(default)]
    clamp: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeSpec {
    intended: String,
    outcomes: Vec<AlternativeSpec>,
    gaussian: Option<GaussianOutcomeSpec>,
    #[serde(default, rename = "comment")]
    _comment: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianOutcomeSpec {
    mean: f64,
    variance: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AlternativeSpec {
    action: String,
    likelihood: Option<Value>,
    value: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SensingSpec {
    action: String,
    #[serde(default)]
    readings: Vec<ReadingSpec>,
    gaussian: Option<GaussianSensorSpec>,
    #[serde(default)]
    intervals: Vec<IntervalSpec>,
    #[serde(default, rename = "comment")]
    _comment: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianSensorSpec {
    mean_fluent: String,
    variance: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReadingSpec {
    token: Option<String>,
    value: Option<f64>,
    observation: Option<String>,
    likelihood: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalSpec {
    below: Option<f64>,
    observation: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSpec {
    state: BTreeMap<String, Value>,
    weight: Value,
}

fn syntax(context: &str, e: super::FormulaError) -> Error {
    // keep the unknown-fluent case distinguishable for callers
    if let Some(name) = e
        .message
        .strip_prefix("unknown fluent `")
        .and_then(|rest| rest.strip_suffix('`'))
    {
        return Error::UnknownFluent {
            name: name.into(),
            context: context.into(),
        };
    }
    Error::Syntax {
        context: context.into(),
        offset: e.offset,
        message: e.message,
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidDomain(msg.into())
}

fn scalar_from_json<W: Scalar>(v: &Value, context: &str) -> Result<W> {
    let parsed = match v {
        Value::Number(n) => W::from_decimal(&n.to_string()),
        Value::String(s) => W::from_decimal(s),
        _ => None,
    };
    parsed.ok_or_else(|| invalid(format!("{context}: expected a number, found {v}")))
}

/// Parses and validates a domain file.
pub fn parse_domain<W: Scalar>(text: &str) -> Result<Domain<W>> {
    let file: DomainFile = serde_json::from_str(text).map_err(|e| Error::Json {
        context: "domain file".into(),
        message: e.to_string(),
    })?;
    Builder::<W>::default().build(file)
}

struct Builder<W> {
    sig: Option<Signature>,
    action_index: HashMap<String, ActionId>,
    _w: std::marker::PhantomData<W>,
}

impl<W> Default for Builder<W> {
    fn default() -> Self {
        Builder {
            sig: None,
            action_index: HashMap::new(),
            _w: std::marker::PhantomData,
        }
    }
}

impl<W: Scalar> Builder<W> {
    fn sig(&self) -> &Signature {
        self.sig.as_ref().expect("signature built first")
    }

    fn formula(&self, text: &str, context: &str) -> Result<Formula> {
        parse_formula(text, self.sig()).map_err(|e| syntax(context, e))
    }

    fn action(&self, name: &str, context: &str) -> Result<ActionId> {
        self.action_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownAction {
                name: name.into(),
                context: context.into(),
            })
    }

    fn likelihood(&self, v: &Value, context: &str) -> Result<Likelihood<W>> {
        let nonneg = |w: W| {
            if w < W::zero() {
                Err(invalid(format!("{context}: negative likelihood {w}")))
            } else {
                Ok(w)
            }
        };
        match v {
            Value::Object(map) => {
                let cases = map
                    .get("cases")
                    .and_then(Value::as_array)
                    .ok_or_else(|| invalid(format!("{context}: likelihood object needs `cases`")))?;
                let mut out = Vec::new();
                for case in cases {
                    let when = case
                        .get("when")
                        .and_then(Value::as_str)
                        .ok_or_else(|| invalid(format!("{context}: case needs a `when` formula")))?;
                    let value = case
                        .get("value")
                        .ok_or_else(|| invalid(format!("{context}: case needs a `value`")))?;
                    let cond = self.formula(when, context)?;
                    if !cond.is_objective() {
                        return Err(invalid(format!("{context}: likelihood conditions must be objective")));
                    }
                    out.push((cond, nonneg(scalar_from_json(value, context)?)?));
                }
                let otherwise = match map.get("otherwise") {
                    Some(v) => nonneg(scalar_from_json(v, context)?)?,
                    None => W::zero(),
                };
                Ok(Likelihood::Cases { cases: out, otherwise })
            }
            other => Ok(Likelihood::Const(nonneg(scalar_from_json(other, context)?)?)),
        }
    }

    fn build(mut self, file: DomainFile) -> Result<Domain<W>> {
        // fluents
        let mut decls = Vec::new();
        let mut seen = BTreeSet::new();
        for f in &file.fluents {
            if !seen.insert(f.name.clone()) {
                return Err(invalid(format!("fluent `{}` declared twice", f.name)));
            }
            let decl = match &f.domain {
                DomainSpec::Range { range: [lo, hi] } => FluentDecl::ints(&f.name, *lo..=*hi),
                DomainSpec::Ints(vs) => FluentDecl::ints(&f.name, vs.iter().copied()),
                DomainSpec::Symbols(ls) => {
                    FluentDecl::symbols(&f.name, &ls.iter().map(String::as_str).collect::<Vec<_>>())
                }
            };
            let n = decl.values.len().max(decl.labels.len());
            if n == 0 {
                return Err(invalid(format!("fluent `{}` has an empty domain", f.name)));
            }
            let distinct = match decl.kind {
                ValueKind::Int => decl.values.iter().collect::<BTreeSet<_>>().len(),
                ValueKind::Sym => decl.labels.iter().collect::<BTreeSet<_>>().len(),
            };
            if distinct != n {
                return Err(invalid(format!("fluent `{}` has repeated domain values", f.name)));
            }
            decls.push(decl);
        }
        if decls.is_empty() {
            return Err(invalid("no fluents declared"));
        }
        self.sig = Some(Signature::new(decls));

        // actions
        for (i, a) in file.actions.iter().enumerate() {
            if self.action_index.insert(a.name.clone(), i).is_some() {
                return Err(invalid(format!("action `{}` declared twice", a.name)));
            }
        }
        let mut actions = Vec::new();
        for a in &file.actions {
            actions.push(self.ground_action(a)?);
        }

        // outcome models
        let mut outcome_models: Vec<Option<OutcomeModel<W>>> = vec![None; actions.len()];
        for m in &file.outcome_models {
            let context = format!("outcome model for `{}`", m.intended);
            let intended = self.action(&m.intended, &context)?;
            if actions[intended].kind != ActionKind::Physical {
                return Err(invalid(format!("{context}: intended action must be physical")));
            }
            if outcome_models[intended].is_some() {
                return Err(invalid(format!("{context}: declared twice")));
            }
            let model = self.outcome_model(m, intended, &actions, &context)?;
            outcome_models[intended] = Some(model);
        }

        // sensing models
        let mut observation_names: BTreeSet<String> = BTreeSet::new();
        let mut sensing_specs: Vec<Option<&SensingSpec>> = vec![None; actions.len()];
        for s in &file.sensing_models {
            let context = format!("sensing model for `{}`", s.action);
            let a = self.action(&s.action, &context)?;
            if sensing_specs[a].is_some() {
                return Err(invalid(format!("{context}: declared twice")));
            }
            sensing_specs[a] = Some(s);
            for r in &s.readings {
                observation_names.insert(reading_observation(r, &context)?);
            }
            for iv in &s.intervals {
                observation_names.insert(iv.observation.clone());
            }
        }
        for (a, action) in actions.iter().enumerate() {
            if action.kind == ActionKind::Sensing && sensing_specs[a].is_none() {
                return Err(invalid(format!(
                    "sensing action `{}` has no sensing model",
                    action.name
                )));
            }
        }
        let needs_null = sensing_specs.iter().any(Option::is_none);
        if needs_null {
            observation_names.insert(NULL_OBSERVATION.into());
        }
        let observations: Vec<String> = observation_names.into_iter().collect();
        let obs_id = |name: &str| observations.iter().position(|o| o == name).unwrap();

        let mut sensing_models: Vec<Option<SensingModel<W>>> = vec![None; actions.len()];
        for (a, spec) in sensing_specs.iter().enumerate() {
            let Some(spec) = spec else { continue };
            let context = format!("sensing model for `{}`", spec.action);
            if let Some(m) = &outcome_models[a] {
                if m.outcomes.len() != 1 || m.outcomes[0].0 != a {
                    return Err(invalid(format!(
                        "{context}: actions with noisy outcomes cannot also sense"
                    )));
                }
            }
            sensing_models[a] = Some(self.sensing_model(spec, a, &obs_id, &context)?);
        }
        for m in outcome_models.iter().flatten() {
            if m.outcomes.len() > 1 || m.outcomes.first().is_some_and(|(b, _)| *b != m.intended) {
                for (b, _) in &m.outcomes {
                    if sensing_models[*b].is_some() {
                        return Err(invalid(format!(
                            "alternative `{}` of `{}` has a sensing model; noisy outcomes cannot sense",
                            actions[*b].name, actions[m.intended].name
                        )));
                    }
                }
            }
        }

        // initial worlds
        let mut initial = Vec::new();
        for (i, spec) in file.initial.iter().enumerate() {
            let context = format!("initial entry {i}");
            let weight: W = scalar_from_json(&spec.weight, &context)?;
            if weight < W::zero() {
                return Err(invalid(format!("{context}: negative weight")));
            }
            for w in self.expand_initial(&spec.state, &context)? {
                initial.push((w, weight.clone()));
            }
        }
        let initial = merge_initial(initial)?;

        let goal = self.formula(&file.goal, "goal")?;

        // advisable alphabet
        let mut nature_only = BTreeSet::new();
        let mut intended_set = BTreeSet::new();
        for m in outcome_models.iter().flatten() {
            intended_set.insert(m.intended);
            for (b, _) in &m.outcomes {
                if *b != m.intended {
                    nature_only.insert(*b);
                }
            }
        }
        let advisable = file
            .actions
            .iter()
            .enumerate()
            .filter(|(i, spec)| {
                spec.advisable
                    .unwrap_or(!nature_only.contains(i) || intended_set.contains(i))
            })
            .map(|(i, _)| i)
            .collect();

        let acting_deterministic = self.acting_deterministic(&outcome_models)?;
        let sensing_deterministic = self.sensing_deterministic(&sensing_models)?;
        let null_observation = needs_null.then(|| obs_id(NULL_OBSERVATION));

        Ok(Domain {
            signature: self.sig.take().unwrap(),
            actions,
            outcome_models,
            sensing_models,
            observations,
            initial,
            goal,
            advisable,
            acting_deterministic,
            sensing_deterministic,
            null_observation,
        })
    }

    fn ground_action(&self, spec: &ActionSpec) -> Result<GroundAction> {
        let context = format!("precondition of `{}`", spec.name);
        let kind = match spec.kind.as_str() {
            "physical" => ActionKind::Physical,
            "sensing" => ActionKind::Sensing,
            other => return Err(invalid(format!("action `{}`: unknown kind `{other}`", spec.name))),
        };
        let precondition = self.formula(&spec.precondition, &context)?;
        if !precondition.is_objective() {
            return Err(invalid(format!("{context}: preconditions must be objective")));
        }
        if kind == ActionKind::Sensing && !spec.effects.is_empty() {
            return Err(invalid(format!("sensing action `{}` cannot have effects", spec.name)));
        }
        let mut effects: Vec<Effect> = Vec::new();
        for e in &spec.effects {
            let context = format!("effect of `{}` on `{}`", spec.name, e.fluent);
            let fluent = self.sig().fluent_id(&e.fluent).ok_or_else(|| Error::UnknownFluent {
                name: e.fluent.clone(),
                context: context.clone(),
            })?;
            if effects.iter().any(|x| x.fluent == fluent) {
                return Err(invalid(format!("{context}: fluent assigned twice")));
            }
            let text = match &e.value {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                other => return Err(invalid(format!("{context}: bad value {other}"))),
            };
            let (value, kind) = parse_value(&text, self.sig()).map_err(|err| syntax(&context, err))?;
            if kind != self.sig().fluents[fluent].kind {
                return Err(invalid(format!("{context}: value kind does not match the fluent")));
            }
            if e.clamp && kind == ValueKind::Sym {
                return Err(invalid(format!("{context}: clamping applies to integer fluents only")));
            }
            self.check_effect_range(&precondition, fluent, &value, e.clamp, &context)?;
            effects.push(Effect {
                fluent,
                value,
                clamp: e.clamp,
            });
        }
        Ok(GroundAction {
            name: spec.name.clone(),
            kind,
            precondition,
            effects,
        })
    }

    /// Out-of-domain results are an error unless the effect opts into
    /// clamping. Checked over every assignment of the fluents the
    /// precondition and the expression read.
    fn check_effect_range(
        &self,
        precondition: &Formula,
        fluent: FluentId,
        value: &ValueExpr,
        clamp: bool,
        context: &str,
    ) -> Result<()> {
        if clamp {
            return Ok(());
        }
        let sig = self.sig();
        let mut relevant = precondition.fluents();
        value.collect_fluents(&mut relevant);
        let decl = &sig.fluents[fluent];
        let complete = sig.for_each_assignment(&relevant, ENUMERATION_CAP, |w| {
            if precondition.eval_objective(w) {
                let v = value.eval(w);
                if !decl.contains(v) {
                    return Err(invalid(format!(
                        "{context}: value {} at {} is outside the domain of `{}`; declare \"clamp\": true",
                        sig.render_value(fluent, v),
                        sig.render_state(w),
                        decl.name
                    )));
                }
            }
            Ok(())
        })?;
        if !complete {
            return Err(invalid(format!(
                "{context}: too many states to check the effect range; declare \"clamp\": true"
            )));
        }
        Ok(())
    }

    fn outcome_model(
        &self,
        spec: &OutcomeSpec,
        intended: ActionId,
        actions: &[GroundAction],
        context: &str,
    ) -> Result<OutcomeModel<W>> {
        if spec.outcomes.is_empty() {
            return Err(invalid(format!("{context}: no outcomes")));
        }
        let mut outcomes = Vec::new();
        for alt in &spec.outcomes {
            let b = self.action(&alt.action, context)?;
            if actions[b].kind != ActionKind::Physical {
                return Err(invalid(format!(
                    "{context}: alternative `{}` is not physical",
                    alt.action
                )));
            }
            if outcomes.iter().any(|(x, _)| *x == b) {
                return Err(invalid(format!("{context}: alternative `{}` listed twice", alt.action)));
            }
            let likelihood = match (&spec.gaussian, &alt.likelihood, alt.value) {
                (Some(g), None, Some(y)) => {
                    if g.variance <= 0.0 {
                        return Err(invalid(format!("{context}: variance must be positive")));
                    }
                    Likelihood::Const(W::gaussian_density(y, g.mean, g.variance).ok_or_else(|| {
                        Error::Unsupported(format!("{context}: gaussian likelihoods need a floating point scalar"))
                    })?)
                }
                (None, Some(v), None) => self.likelihood(v, context)?,
                (Some(_), _, _) => {
                    return Err(invalid(format!(
                        "{context}: gaussian models give each alternative a `value` only"
                    )))
                }
                (None, _, _) => {
                    return Err(invalid(format!(
                        "{context}: alternative `{}` needs a `likelihood`",
                        alt.action
                    )))
                }
            };
            outcomes.push((b, likelihood));
        }
        let mut model = OutcomeModel {
            intended,
            outcomes,
            scale: W::one(),
        };
        if model.is_constant() {
            let total = crate::scalar::sum(model.outcomes.iter().map(|(_, l)| match l {
                Likelihood::Const(v) => v,
                Likelihood::Cases { .. } => unreachable!(),
            }));
            if !total.is_positive() {
                return Err(invalid(format!("{context}: all likelihoods are zero")));
            }
            for (_, l) in &mut model.outcomes {
                if let Likelihood::Const(v) = l {
                    *v = v.clone() / total.clone();
                }
            }
            let check = crate::scalar::sum(model.outcomes.iter().map(|(_, l)| match l {
                Likelihood::Const(v) => v,
                Likelihood::Cases { .. } => unreachable!(),
            }));
            debug_assert!((check.to_f64() - 1.0).abs() <= 1e-9);
            model.scale = total;
        } else {
            let mut relevant = BTreeSet::new();
            for (_, l) in &model.outcomes {
                l.collect_fluents(&mut relevant);
            }
            let sig = self.sig();
            let complete = sig.for_each_assignment(&relevant, ENUMERATION_CAP, |w| {
                let total =
                    crate::scalar::sum(model.outcomes.iter().map(|(_, l)| l.eval(w)).collect::<Vec<_>>().iter());
                if total.is_positive() {
                    Ok(())
                } else {
                    Err(invalid(format!(
                        "{context}: all likelihoods are zero at {}",
                        sig.render_state(w)
                    )))
                }
            })?;
            if !complete {
                return Err(invalid(format!("{context}: too many states to validate likelihoods")));
            }
        }
        Ok(model)
    }

    fn sensing_model(
        &self,
        spec: &SensingSpec,
        action: ActionId,
        obs_id: &dyn Fn(&str) -> usize,
        context: &str,
    ) -> Result<SensingModel<W>> {
        let sig = self.sig();
        let mut readings = Vec::new();
        for r in &spec.readings {
            let token = match (&r.token, r.value) {
                (Some(t), _) => t.clone(),
                (None, Some(v)) => format_value(v),
                (None, None) => return Err(invalid(format!("{context}: reading needs a token or value"))),
            };
            if readings.iter().any(|d: &ReadingDecl| d.token == token) {
                return Err(invalid(format!("{context}: reading `{token}` declared twice")));
            }
            readings.push(ReadingDecl {
                token,
                value: r.value,
                observation: obs_id(&reading_observation(r, context)?),
            });
        }
        let mut intervals = Vec::new();
        for (i, iv) in spec.intervals.iter().enumerate() {
            let last = i + 1 == spec.intervals.len();
            if iv.below.is_none() != last {
                return Err(invalid(format!("{context}: every interval but the last needs `below`")));
            }
            if let (Some(prev), Some(cur)) = (intervals.last().and_then(|x: &ObsInterval| x.upper), iv.below) {
                if cur <= prev {
                    return Err(invalid(format!("{context}: interval bounds must increase")));
                }
            }
            intervals.push(ObsInterval {
                upper: iv.below,
                observation: obs_id(&iv.observation),
            });
        }
        let likelihood = match &spec.gaussian {
            Some(g) => {
                if spec.readings.iter().any(|r| r.likelihood.is_some()) {
                    return Err(invalid(format!("{context}: gaussian readings take no likelihood")));
                }
                if g.variance.is_nan() || g.variance <= 0.0 {
                    return Err(invalid(format!("{context}: variance must be positive")));
                }
                let mean_fluent = sig.fluent_id(&g.mean_fluent).ok_or_else(|| Error::UnknownFluent {
                    name: g.mean_fluent.clone(),
                    context: context.into(),
                })?;
                if sig.fluents[mean_fluent].kind != ValueKind::Int {
                    return Err(invalid(format!("{context}: mean fluent must be integer valued")));
                }
                if readings.iter().any(|r| r.value.is_none()) {
                    return Err(invalid(format!("{context}: gaussian readings need a `value`")));
                }
                if readings.is_empty() && intervals.is_empty() {
                    return Err(invalid(format!("{context}: declare readings or observation intervals")));
                }
                if W::gaussian_density(0.0, 0.0, 1.0).is_none() {
                    return Err(Error::Unsupported(format!(
                        "{context}: gaussian likelihoods need a floating point scalar"
                    )));
                }
                SensorLikelihood::Gaussian {
                    mean_fluent,
                    variance: g.variance,
                }
            }
            None => {
                if readings.is_empty() {
                    return Err(invalid(format!("{context}: no readings declared")));
                }
                if !intervals.is_empty() {
                    return Err(invalid(format!("{context}: intervals apply to gaussian sensors only")));
                }
                let table = spec
                    .readings
                    .iter()
                    .map(|r| match &r.likelihood {
                        Some(v) => self.likelihood(v, context),
                        None => Err(invalid(format!("{context}: reading needs a `likelihood`"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                SensorLikelihood::Table(table)
            }
        };
        let model = SensingModel {
            action,
            readings,
            likelihood,
            intervals,
        };
        // some reading must be possible in every state
        if let SensorLikelihood::Table(table) = &model.likelihood {
            let mut relevant = BTreeSet::new();
            table.iter().for_each(|l| l.collect_fluents(&mut relevant));
            let complete = sig.for_each_assignment(&relevant, ENUMERATION_CAP, |w| {
                if table.iter().any(|l| l.eval(w).is_positive()) {
                    Ok(())
                } else {
                    Err(invalid(format!(
                        "{context}: no reading has positive likelihood at {}",
                        sig.render_state(w)
                    )))
                }
            })?;
            if !complete {
                return Err(invalid(format!("{context}: too many states to validate the sensor")));
            }
        }
        Ok(model)
    }

    fn expand_initial(&self, state: &BTreeMap<String, Value>, context: &str) -> Result<Vec<WorldState>> {
        let sig = self.sig();
        for key in state.keys() {
            if sig.fluent_id(key).is_none() {
                return Err(Error::UnknownFluent {
                    name: key.clone(),
                    context: context.into(),
                });
            }
        }
        let mut choices: Vec<Vec<i64>> = Vec::new();
        for (i, f) in sig.fluents.iter().enumerate() {
            let v = state
                .get(&f.name)
                .ok_or_else(|| invalid(format!("{context}: fluent `{}` not assigned", f.name)))?;
            let values = match v {
                Value::Array(items) => items
                    .iter()
                    .map(|x| sig.value_from_json(i, x))
                    .collect::<Result<Vec<_>>>()?,
                Value::Object(map) if map.contains_key("range") => {
                    let range = map["range"]
                        .as_array()
                        .filter(|r| r.len() == 2)
                        .and_then(|r| Some((r[0].as_i64()?, r[1].as_i64()?)))
                        .ok_or_else(|| invalid(format!("{context}: bad range for `{}`", f.name)))?;
                    (range.0..=range.1)
                        .map(|x| sig.value_from_json(i, &Value::from(x)))
                        .collect::<Result<Vec<_>>>()?
                }
                other => vec![sig.value_from_json(i, other)?],
            };
            if values.is_empty() {
                return Err(invalid(format!("{context}: no values for `{}`", f.name)));
            }
            choices.push(values);
        }
        let mut out = vec![Vec::new()];
        for values in &choices {
            out = out
                .into_iter()
                .flat_map(|prefix: Vec<i64>| {
                    values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        Ok(out.into_iter().map(WorldState::new).collect())
    }

    fn acting_deterministic(&self, models: &[Option<OutcomeModel<W>>]) -> Result<bool> {
        for m in models.iter().flatten() {
            if m.outcomes.len() != 1 || m.outcomes[0].0 != m.intended {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn sensing_deterministic(&self, models: &[Option<SensingModel<W>>]) -> Result<bool> {
        let sig = self.sig();
        for m in models.iter().flatten() {
            let SensorLikelihood::Table(table) = &m.likelihood else {
                return Ok(false);
            };
            let relevant = m.relevant_fluents();
            let mut deterministic = true;
            let complete = sig.for_each_assignment::<()>(&relevant, ENUMERATION_CAP, |w| {
                let observed: BTreeSet<usize> = table
                    .iter()
                    .zip(&m.readings)
                    .filter(|(l, _)| l.eval(w).is_positive())
                    .map(|(_, r)| r.observation)
                    .collect();
                if observed.len() != 1 {
                    deterministic = false;
                }
                Ok(())
            });
            if !matches!(complete, Ok(true)) || !deterministic {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn reading_observation(r: &ReadingSpec, context: &str) -> Result<String> {
    match (&r.observation, &r.token, r.value) {
        (Some(o), _, _) => Ok(o.clone()),
        (None, Some(t), _) => Ok(t.clone()),
        (None, None, Some(v)) => Ok(format_value(v)),
        (None, None, None) => Err(invalid(format!("{context}: reading needs a token or value"))),
    }
}

fn format_value(v: f64) -> String {
    format!("{v}")
}

/// Merges duplicate initial worlds by adding their weights and checks the
/// total is positive.
pub(crate) fn merge_initial<W: Scalar>(initial: Vec<(WorldState, W)>) -> Result<Vec<(WorldState, W)>> {
    let mut merged: Vec<(WorldState, W)> = Vec::new();
    let mut index: HashMap<WorldState, usize> = HashMap::new();
    for (w, weight) in initial {
        if weight < W::zero() {
            return Err(invalid("negative initial weight"));
        }
        match index.get(&w) {
            Some(&i) => merged[i].1 = merged[i].1.clone() + weight,
            None => {
                index.insert(w.clone(), merged.len());
                merged.push((w, weight));
            }
        }
    }
    if merged.is_empty() {
        return Err(invalid("no initial worlds"));
    }
    let total = crate::scalar::sum(merged.iter().map(|(_, w)| w));
    if !total.is_positive() {
        return Err(invalid("total initial weight is zero"));
    }
    Ok(merged)
}
