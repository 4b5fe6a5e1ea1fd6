//! Execution over belief states.
//!
//! A run pairs the agent's belief with a designated real world. Physical
//! actions progress the belief and move the real world by the outcome nature
//! picked; sensing actions condition the belief on a reading taken at the
//! real world. The controller branches on the reading's observation token.

use std::collections::{HashMap, HashSet, VecDeque};

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::belief::{BeliefOptions, BeliefState};
use crate::controller::CompiledController;
use crate::error::{Error, Result};
use crate::exec_exact::{Config, Status, Trace, TraceStep, Verdict};
use crate::scalar::Scalar;
use crate::theory::{ActionId, ActionKind, Domain, ObsId, Reading, ResolvedReading, WorldState};

/// Rounding step for belief memo keys.
pub const MEMO_STEP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioStep {
    pub action: String,
    pub outcome: Option<String>,
    pub reading: Option<Reading>,
}

/// Readings and outcomes supplied by the environment, one step at a time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub steps: Vec<ScenarioStep>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepSpec {
    #[serde(alias = "advised_action")]
    action: String,
    #[serde(default, alias = "actual_outcome")]
    outcome: Option<String>,
    #[serde(default)]
    reading: Option<ReadingSpec>,
    #[serde(default)]
    #[allow(dead_code)]
    comment: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ReadingSpec {
    Token(String),
    Value(f64),
    Full { token: Option<String>, value: Option<f64> },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScenarioFile {
    List(Vec<StepSpec>),
    Wrapped { steps: Vec<StepSpec> },
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Json {
            context: "scenario".into(),
            message: e.to_string(),
        })?;
        let steps = match file {
            ScenarioFile::List(s) | ScenarioFile::Wrapped { steps: s } => s,
        };
        Ok(Scenario {
            steps: steps
                .into_iter()
                .map(|s| ScenarioStep {
                    action: s.action,
                    outcome: s.outcome,
                    reading: s.reading.map(|r| match r {
                        ReadingSpec::Token(t) => Reading::token(&t),
                        ReadingSpec::Value(v) => Reading::value(v),
                        ReadingSpec::Full { token, value } => Reading { token, value },
                    }),
                })
                .collect(),
        })
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.steps
                .iter()
                .map(|s| {
                    let mut v = json!({ "action": s.action });
                    if let Some(o) = &s.outcome {
                        v["outcome"] = json!(o);
                    }
                    if let Some(r) = &s.reading {
                        v["reading"] = match (&r.token, r.value) {
                            (Some(t), None) => json!(t),
                            (None, Some(z)) => json!(z),
                            (t, z) => json!({ "token": t, "value": z }),
                        };
                    }
                    v
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpistemicOptions {
    /// Check executability at the real world only, instead of at every
    /// possible world.
    pub poss_at_real: bool,
    /// Move the real world by the intended action rather than the outcome.
    pub real_intended: bool,
    pub belief: BeliefOptions,
    pub depth_bound: usize,
}

impl Default for EpistemicOptions {
    fn default() -> Self {
        EpistemicOptions {
            poss_at_real: false,
            real_intended: false,
            belief: BeliefOptions::default(),
            depth_bound: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpistemicConfig<W> {
    pub control: usize,
    pub belief: BeliefState<W>,
    pub real: WorldState,
}

impl<W: Scalar> EpistemicConfig<W> {
    pub fn initial(c: &CompiledController, d: &Domain<W>, real: WorldState, opts: &EpistemicOptions) -> Self {
        EpistemicConfig {
            control: c.initial,
            belief: BeliefState::initial(d, opts.belief),
            real,
        }
    }

    fn key(&self) -> (usize, WorldState, Vec<(WorldState, i64)>) {
        (self.control, self.real.clone(), self.belief.rounded_key(MEMO_STEP))
    }
}

/// What the environment supplies for one step.
#[derive(Debug, Clone, PartialEq)]
struct Choice {
    outcome: Option<ActionId>,
    reading: Option<ResolvedReading>,
}

fn check_poss<W: Scalar>(d: &Domain<W>, cfg: &EpistemicConfig<W>, a: ActionId, opts: &EpistemicOptions) -> Result<()> {
    let ok = if opts.poss_at_real {
        d.poss(a, &cfg.real)
    } else {
        cfg.belief.particles().all(|(w, _, _)| d.poss(a, w))
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InexecutableInBelief {
            action: d.action(a).name.clone(),
        })
    }
}

fn advance<W: Scalar>(
    c: &CompiledController,
    d: &Domain<W>,
    cfg: &EpistemicConfig<W>,
    a: ActionId,
    choice: &Choice,
    opts: &EpistemicOptions,
) -> Result<(EpistemicConfig<W>, ObsId)> {
    // sensing happens at the pre-state, also for physical actions with a sensor
    let (mut belief, o) = match &choice.reading {
        Some(r) => (cfg.belief.condition_resolved(a, r, d)?, r.observation),
        None => (
            cfg.belief.clone(),
            d.null_observation()
                .expect("actions without a sensor return the null observation"),
        ),
    };
    let mut real = cfg.real.clone();
    if d.action(a).kind == ActionKind::Physical {
        belief = belief.progress(a, d)?;
        real = d.apply(choice.outcome.filter(|_| !opts.real_intended).unwrap_or(a), &real);
    }
    let Some(q) = c.next(cfg.control, o) else {
        return Err(Error::Stuck {
            state: c.names[cfg.control].clone(),
            observation: d.observations[o].clone(),
        });
    };
    Ok((
        EpistemicConfig {
            control: q,
            belief,
            real,
        },
        o,
    ))
}

/// Every (outcome, reading) pair with positive likelihood at the real world.
fn choices<W: Scalar>(d: &Domain<W>, real: &WorldState, a: ActionId, opts: &EpistemicOptions) -> Vec<Choice> {
    let outcomes: Vec<Option<ActionId>> = if d.action(a).kind == ActionKind::Physical && !opts.real_intended {
        d.outcomes_of(a, real).into_iter().map(|(b, _)| Some(b)).collect()
    } else {
        vec![None]
    };
    let readings: Vec<Option<ResolvedReading>> = match d.sensing_model(a) {
        Some(m) => m
            .reading_likelihoods(real)
            .into_iter()
            .filter(|(_, l)| l.is_positive())
            .map(|(r, _)| Some(r))
            .collect(),
        None => vec![None],
    };
    let mut out = Vec::new();
    for b in &outcomes {
        for r in &readings {
            out.push(Choice {
                outcome: *b,
                reading: r.clone(),
            });
        }
    }
    out
}

fn invalid(step: usize, message: String) -> Error {
    Error::InvalidScenario { step, message }
}

/// Matches a scenario step against the advised action and the real world.
fn resolve_step<W: Scalar>(
    d: &Domain<W>,
    cfg: &EpistemicConfig<W>,
    a: ActionId,
    step: &ScenarioStep,
    index: usize,
    opts: &EpistemicOptions,
) -> Result<Choice> {
    let name = &d.action(a).name;
    if &step.action != name {
        return Err(invalid(
            index,
            format!("controller advises `{name}`, scenario has `{}`", step.action),
        ));
    }
    let reading = match d.sensing_model(a) {
        Some(model) => match &step.reading {
            Some(r) => {
                let resolved = model
                    .resolve(r)
                    .ok_or_else(|| invalid(index, format!("reading `{r}` is not declared for `{name}`")))?;
                if !model.likelihood(&resolved, &cfg.real).is_positive() {
                    return Err(invalid(
                        index,
                        format!("reading `{r}` has likelihood zero at {}", d.render_state(&cfg.real)),
                    ));
                }
                Some(resolved)
            }
            None => {
                let mut positive = model
                    .reading_likelihoods(&cfg.real)
                    .into_iter()
                    .filter(|(_, l)| l.is_positive());
                match (positive.next(), positive.next()) {
                    (Some((r, _)), None) => Some(r),
                    _ => return Err(invalid(index, format!("`{name}` needs a reading"))),
                }
            }
        },
        None => match &step.reading {
            None => None,
            Some(r)
                if r.value.is_none()
                    && r.token.as_deref() == d.null_observation().map(|o| d.observations[o].as_str()) =>
            {
                None
            }
            Some(r) => {
                return Err(invalid(
                    index,
                    format!("`{name}` has no sensor but reading `{r}` was given"),
                ))
            }
        },
    };
    let outcome = if d.action(a).kind == ActionKind::Physical && !opts.real_intended {
        let outs = d.outcomes_of(a, &cfg.real);
        match &step.outcome {
            Some(b) => {
                let id = d
                    .action_id(b)
                    .ok_or_else(|| invalid(index, format!("unknown outcome `{b}`")))?;
                if !outs.iter().any(|(x, _)| *x == id) {
                    return Err(invalid(
                        index,
                        format!(
                            "`{b}` is not an outcome of `{name}` with positive likelihood at {}",
                            d.render_state(&cfg.real)
                        ),
                    ));
                }
                Some(id)
            }
            None if outs.len() == 1 => Some(outs[0].0),
            None if outs.is_empty() => {
                return Err(invalid(
                    index,
                    format!("`{name}` has no executable outcome at {}", d.render_state(&cfg.real)),
                ))
            }
            None => return Err(invalid(index, format!("`{name}` needs an outcome"))),
        }
    } else {
        match &step.outcome {
            Some(b) if d.action(a).kind == ActionKind::Sensing => {
                return Err(invalid(index, format!("sensing action `{name}` has no outcome `{b}`")))
            }
            _ => None,
        }
    };
    Ok(Choice { outcome, reading })
}

/// One step of the belief-level execution, driven by a scenario step.
/// `index` only labels errors.
pub fn step_v<W: Scalar>(
    c: &CompiledController,
    d: &Domain<W>,
    cfg: &EpistemicConfig<W>,
    step: &ScenarioStep,
    index: usize,
    opts: &EpistemicOptions,
) -> Result<ScenarioRecord<W>> {
    if c.is_final(cfg.control) {
        return Err(invalid(index, "the controller is already in its final state".into()));
    }
    let a = c.advice[cfg.control].expect("non-final states advise an action");
    check_poss(d, cfg, a, opts)?;
    let choice = resolve_step(d, cfg, a, step, index, opts)?;
    let (next, o) = advance(c, d, cfg, a, &choice, opts)?;
    Ok(ScenarioRecord {
        from: cfg.control,
        action: a,
        outcome: choice.outcome,
        reading: choice
            .reading
            .map(|r| r.describe(d.sensing_model(a).expect("readings come from a sensor"))),
        observation: o,
        config: next,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRecord<W> {
    pub from: usize,
    pub action: ActionId,
    pub outcome: Option<ActionId>,
    pub reading: Option<String>,
    pub observation: ObsId,
    /// Configuration after the step.
    pub config: EpistemicConfig<W>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun<W> {
    pub status: Status,
    pub reason: Option<String>,
    pub initial: EpistemicConfig<W>,
    pub steps: Vec<ScenarioRecord<W>>,
}

impl<W: Scalar> ScenarioRun<W> {
    pub fn end(&self) -> &EpistemicConfig<W> {
        self.steps.last().map_or(&self.initial, |s| &s.config)
    }

    pub fn to_json(&self, d: &Domain<W>, c: &CompiledController) -> Value {
        let config = |cfg: &EpistemicConfig<W>| {
            json!({
                "control": c.names[cfg.control],
                "real": d.signature.state_to_json(&cfg.real),
                "belief": cfg.belief.to_json(d),
                "goal": cfg.belief.eval_goal(&d.goal),
            })
        };
        let mut v = json!({
            "status": self.status.as_str(),
            "initial": config(&self.initial),
            "steps": self.steps.iter().map(|s| {
                let mut v = config(&s.config);
                v["from"] = json!(c.names[s.from]);
                v["action"] = json!(d.action(s.action).name);
                if let Some(b) = s.outcome {
                    v["outcome"] = json!(d.action(b).name);
                }
                if let Some(r) = &s.reading {
                    v["reading"] = json!(r);
                }
                v["observation"] = json!(d.observations[s.observation]);
                v
            }).collect::<Vec<_>>(),
        });
        if let Some(r) = &self.reason {
            v["reason"] = json!(r);
        }
        v
    }
}

/// A run that cannot continue: the plan is at fault, not the inputs.
fn dead_end(e: &Error) -> bool {
    matches!(
        e,
        Error::InexecutableInBelief { .. }
            | Error::Stuck { .. }
            | Error::BeliefAnnihilated { .. }
            | Error::ObservationImpossible { .. }
    )
}

/// Runs the controller from `real0` with outcomes and readings taken from
/// `sc`. Holds when the final state is reached with the goal true at the
/// final belief; Unknown when the scenario runs out first.
pub fn run_scenario<W: Scalar>(
    c: &CompiledController,
    d: &Domain<W>,
    real0: &WorldState,
    sc: &Scenario,
    opts: &EpistemicOptions,
) -> Result<ScenarioRun<W>> {
    let initial = EpistemicConfig::initial(c, d, real0.clone(), opts);
    if !initial.belief.weight_of(real0).is_positive() {
        return Err(invalid(0, format!("{} has no prior weight", d.render_state(real0))));
    }
    let mut run = ScenarioRun {
        status: Status::Unknown,
        reason: None,
        initial,
        steps: Vec::new(),
    };
    for (i, step) in sc.steps.iter().enumerate() {
        if c.is_final(run.end().control) {
            return Err(invalid(i, "scenario continues after the final state".into()));
        }
        match step_v(c, d, run.end(), step, i, opts) {
            Ok(rec) => run.steps.push(rec),
            Err(e) if dead_end(&e) => {
                run.status = Status::Fails;
                run.reason = Some(e.to_string());
                return Ok(run);
            }
            Err(e) => return Err(e),
        }
    }
    let end = run.end();
    if !c.is_final(end.control) {
        run.reason = Some(format!(
            "scenario ended in `{}` before the final state",
            c.names[end.control]
        ));
    } else if end.belief.eval_goal(&d.goal) {
        run.status = Status::Holds;
    } else {
        run.status = Status::Fails;
        run.reason = Some("goal false at the final belief".into());
    }
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Def9Mode {
    /// Some positive-likelihood run reaches the final state with the goal.
    Existential,
    /// Every positive-likelihood run does.
    Adversarial,
}

impl std::str::FromStr for Def9Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "existential" => Ok(Def9Mode::Existential),
            "adversarial" => Ok(Def9Mode::Adversarial),
            _ => Err(Error::Unsupported(format!("unknown def9 mode `{s}`"))),
        }
    }
}

struct WorldResult {
    status: Status,
    trace: Option<Trace>,
    reason: Option<String>,
}

fn label<W: Scalar>(cfg: &EpistemicConfig<W>, a: ActionId, choice: &Choice, o: ObsId) -> TraceStep {
    TraceStep {
        from: Config::new(cfg.control, cfg.real.clone()),
        action: choice.outcome.unwrap_or(a),
        observation: o,
    }
}

fn existential<W: Scalar>(
    c: &CompiledController,
    d: &Domain<W>,
    real0: &WorldState,
    opts: &EpistemicOptions,
) -> Result<WorldResult> {
    struct Node<W> {
        cfg: EpistemicConfig<W>,
        depth: usize,
        parent: Option<(usize, TraceStep)>,
    }
    let start = EpistemicConfig::initial(c, d, real0.clone(), opts);
    let mut seen = HashSet::from([start.key()]);
    let mut nodes = vec![Node {
        cfg: start,
        depth: 0,
        parent: None,
    }];
    let mut queue = VecDeque::from([0]);
    let mut cut = false;
    while let Some(i) = queue.pop_front() {
        let cfg = nodes[i].cfg.clone();
        if c.is_final(cfg.control) {
            if cfg.belief.eval_goal(&d.goal) {
                let mut steps = Vec::new();
                let mut cur = i;
                while let Some((p, s)) = &nodes[cur].parent {
                    steps.push(s.clone());
                    cur = *p;
                }
                steps.reverse();
                let trace = Trace {
                    initial: real0.clone(),
                    steps,
                    end: Config::new(cfg.control, cfg.real),
                };
                return Ok(WorldResult {
                    status: Status::Holds,
                    trace: Some(trace),
                    reason: None,
                });
            }
            continue;
        }
        if nodes[i].depth >= opts.depth_bound {
            cut = true;
            continue;
        }
        let a = c.advice[cfg.control].expect("non-final states advise an action");
        match check_poss(d, &cfg, a, opts) {
            Err(e) if dead_end(&e) => continue,
            other => other?,
        }
        for choice in choices(d, &cfg.real, a, opts) {
            let (next, o) = match advance(c, d, &cfg, a, &choice, opts) {
                Ok(x) => x,
                Err(e) if dead_end(&e) => continue,
                Err(e) => return Err(e),
            };
            if seen.insert(next.key()) {
                let step = label(&cfg, a, &choice, o);
                nodes.push(Node {
                    cfg: next,
                    depth: nodes[i].depth + 1,
                    parent: Some((i, step)),
                });
                queue.push_back(nodes.len() - 1);
            }
        }
    }
    Ok(if cut {
        WorldResult {
            status: Status::Unknown,
            trace: None,
            reason: Some(format!(
                "no goal-reaching run from {} within depth {}",
                d.render_state(real0),
                opts.depth_bound
            )),
        }
    } else {
        WorldResult {
            status: Status::Fails,
            trace: None,
            reason: Some(format!(
                "no run from {} reaches the final state with the goal true",
                d.render_state(real0)
            )),
        }
    })
}

type Key = (usize, WorldState, Vec<(WorldState, i64)>);

struct Adversary<'a, W> {
    c: &'a CompiledController,
    d: &'a Domain<W>,
    opts: &'a EpistemicOptions,
    memo: HashMap<Key, Status>,
    on_path: HashSet<Key>,
    path: Vec<TraceStep>,
    failure: Option<(String, Config)>,
}

impl<W: Scalar> Adversary<'_, W> {
    fn fail(&mut self, cfg: &EpistemicConfig<W>, reason: String) -> Status {
        self.failure = Some((reason, Config::new(cfg.control, cfg.real.clone())));
        Status::Fails
    }

    fn visit(&mut self, cfg: &EpistemicConfig<W>, depth: usize) -> Result<Status> {
        let (c, d) = (self.c, self.d);
        if c.is_final(cfg.control) {
            return Ok(if cfg.belief.eval_goal(&d.goal) {
                Status::Holds
            } else {
                self.fail(cfg, "goal false at the final belief".into())
            });
        }
        let key = cfg.key();
        if self.on_path.contains(&key) {
            return Ok(self.fail(
                cfg,
                format!(
                    "run revisits ({}, {}) with the same belief",
                    c.names[cfg.control],
                    d.render_state(&cfg.real)
                ),
            ));
        }
        if let Some(&s) = self.memo.get(&key) {
            return Ok(s);
        }
        if depth >= self.opts.depth_bound {
            return Ok(Status::Unknown);
        }
        let a = c.advice[cfg.control].expect("non-final states advise an action");
        match check_poss(d, cfg, a, self.opts) {
            Err(e) if dead_end(&e) => return Ok(self.fail(cfg, e.to_string())),
            other => other?,
        }
        self.on_path.insert(key.clone());
        let mut result = Status::Holds;
        for choice in choices(d, &cfg.real, a, self.opts) {
            let (next, o) = match advance(c, d, cfg, a, &choice, self.opts) {
                Ok(x) => x,
                Err(e) if dead_end(&e) => {
                    self.path
                        .push(label(cfg, a, &choice, d.null_observation().unwrap_or(0)));
                    result = self.fail(cfg, e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            };
            self.path.push(label(cfg, a, &choice, o));
            match self.visit(&next, depth + 1)? {
                Status::Fails => {
                    result = Status::Fails;
                    break;
                }
                Status::Unknown => result = Status::Unknown,
                Status::Holds => {}
            }
            self.path.pop();
        }
        self.on_path.remove(&key);
        self.memo.insert(key, result);
        Ok(result)
    }
}

fn adversarial<W: Scalar>(
    c: &CompiledController,
    d: &Domain<W>,
    real0: &WorldState,
    opts: &EpistemicOptions,
) -> Result<WorldResult> {
    let mut adv = Adversary {
        c,
        d,
        opts,
        memo: HashMap::new(),
        on_path: HashSet::new(),
        path: Vec::new(),
        failure: None,
    };
    let start = EpistemicConfig::initial(c, d, real0.clone(), opts);
    let status = adv.visit(&start, 0)?;
    Ok(match status {
        Status::Fails => {
            let (reason, end) = adv.failure.expect("failures record a reason");
            let mut steps = adv.path;
            // a dead end inside a step leaves its label on the path
            if steps.last().is_some_and(|s| s.from == end) {
                steps.pop();
            }
            WorldResult {
                status,
                trace: Some(Trace {
                    initial: real0.clone(),
                    steps,
                    end,
                }),
                reason: Some(reason),
            }
        }
        Status::Unknown => WorldResult {
            status,
            trace: None,
            reason: Some(format!(
                "some run from {} exceeds depth {}",
                d.render_state(real0),
                opts.depth_bound
            )),
        },
        Status::Holds => WorldResult {
            status,
            trace: None,
            reason: None,
        },
    })
}

/// Epistemic correctness: for every positive-weight initial world taken as
/// the real world, some (existential) or every (adversarial) run over the
/// declared readings and outcomes reaches the final state with the goal true
/// at the final belief.
pub fn verify_def9<W: Scalar>(
    c: &CompiledController,
    d: &Domain<W>,
    mode: Def9Mode,
    opts: &EpistemicOptions,
) -> Result<Verdict> {
    for a in c.advice.iter().flatten() {
        if let Some(m) = d.sensing_model(*a) {
            if !m.is_quantized() {
                return Err(Error::Unquantized {
                    action: d.action(*a).name.clone(),
                });
            }
        }
    }
    let worlds: Vec<&WorldState> = d.positive_initial().map(|(w, _)| w).collect();
    let results = worlds
        .par_iter()
        .map(|w| match mode {
            Def9Mode::Existential => existential(c, d, w, opts),
            Def9Mode::Adversarial => adversarial(c, d, w, opts),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut witnesses = Vec::new();
    let mut unknown = None;
    for (w, r) in worlds.into_iter().zip(results) {
        match r.status {
            Status::Fails => return Ok(Verdict::fails(w.clone(), r.trace, r.reason.unwrap_or_default())),
            Status::Unknown => {
                unknown.get_or_insert((w.clone(), r.reason));
            }
            Status::Holds => witnesses.extend(r.trace),
        }
    }
    Ok(match unknown {
        Some((w, reason)) => {
            let mut v = Verdict::holds(Vec::new());
            v.status = Status::Unknown;
            v.counterexample_world = Some(w);
            v.reason = reason;
            v
        }
        None => Verdict::holds(witnesses),
    })
}
