use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use loopverify::belief::BeliefOptions;
use loopverify::exec_epistemic::{run_scenario, EpistemicOptions, Scenario};
use loopverify::exec_exact::Trace;
use loopverify::montecarlo::{default_step_cap, simulate};
use loopverify::synth::{synthesize, Criterion, SynthRequest};
use loopverify::{parse_domain, CompiledController, Controller, Domain, Rational, Scalar};

/// Verify, simulate and synthesize finite-state plans under noisy acting
/// and sensing.
#[derive(Parser, Debug)]
#[command(name = "loopverify", version)]
struct Cli {
    /// Print a single JSON document on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Use exact rational weights (table-only domains).
    #[arg(long, global = true)]
    exact: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a controller against a correctness criterion.
    Verify(VerifyArgs),
    /// Run a controller along a scenario of outcomes and readings.
    Trace(TraceArgs),
    /// Sample executions.
    Simulate(SimulateArgs),
    /// Search for controllers up to a state budget.
    Synthesize(SynthesizeArgs),
    /// Render a controller as GraphViz DOT.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
struct Inputs {
    #[arg(long, value_name = "FILE")]
    domain: PathBuf,
    #[arg(long, value_name = "FILE")]
    controller: PathBuf,
    /// Replace the domain's goal.
    #[arg(long, value_name = "FORMULA")]
    goal: Option<String>,
    /// Reject controllers with missing transitions.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug, Clone)]
struct EpistemicFlags {
    /// Check executability at the real world only.
    #[arg(long)]
    poss_at_real: bool,
    /// Move the real world by the intended action instead of the outcome.
    #[arg(long)]
    real_intended: bool,
    /// Keep one particle per outcome history.
    #[arg(long)]
    trace_particles: bool,
    /// Drop particles below this normalized weight (approximate).
    #[arg(long, value_name = "EPS")]
    prune: Option<f64>,
    /// Step bound of the def9 search.
    #[arg(long, value_name = "N", default_value_t = 64)]
    depth_bound: usize,
}

impl EpistemicFlags {
    fn options(&self) -> EpistemicOptions {
        EpistemicOptions {
            poss_at_real: self.poss_at_real,
            real_intended: self.real_intended,
            belief: BeliefOptions {
                trace_particles: self.trace_particles,
                prune: self.prune,
            },
            depth_bound: self.depth_bound,
        }
    }
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// def4, def6, termination, def6+termination, weight:K, mass:K,
    /// def9, def9:existential or def9:adversarial.
    #[arg(long)]
    criterion: String,
    /// Write witnesses to this file.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    #[command(flatten)]
    epistemic: EpistemicFlags,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Real initial world as a JSON object, e.g. '{"d": 6}'.
    #[arg(long, value_name = "JSON")]
    real: String,
    #[arg(long, value_name = "FILE")]
    scenario: PathBuf,
    /// Write the full run to this file.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    #[command(flatten)]
    epistemic: EpistemicFlags,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 10_000)]
    runs: usize,
    #[arg(long)]
    seed: u64,
    /// Defaults to ten times the number of configurations.
    #[arg(long, value_name = "K")]
    step_cap: Option<usize>,
    #[arg(long)]
    track_belief: bool,
}

#[derive(Args, Debug)]
struct SynthesizeArgs {
    #[arg(long, value_name = "FILE")]
    domain: PathBuf,
    #[arg(long, value_name = "FORMULA")]
    goal: Option<String>,
    #[arg(long)]
    criterion: String,
    #[arg(long, value_name = "N")]
    max_states: usize,
    #[arg(long, value_name = "L", default_value_t = 1)]
    limit: usize,
    /// Directory for controller JSON and DOT files.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(flatten)]
    epistemic: EpistemicFlags,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long, value_name = "FILE")]
    controller: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_domain<W: Scalar>(path: &Path, goal: Option<&str>) -> anyhow::Result<Domain<W>> {
    let d: Domain<W> = parse_domain(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    Ok(match goal {
        Some(g) => d.with_goal(d.parse_goal(g).context("in --goal")?),
        None => d,
    })
}

fn load<W: Scalar>(i: &Inputs) -> anyhow::Result<(Domain<W>, CompiledController)> {
    let d = load_domain(&i.domain, i.goal.as_deref())?;
    let c = Controller::from_json(&read(&i.controller)?).with_context(|| format!("in {}", i.controller.display()))?;
    if i.strict {
        let defects = c.validate_strict(&d);
        if !defects.is_empty() {
            let list: Vec<String> = defects.iter().map(|x| x.to_string()).collect();
            bail!("controller is not total: {}", list.join("; "));
        }
    }
    let compiled = c
        .compile(&d)
        .with_context(|| format!("in {}", i.controller.display()))?;
    Ok((d, compiled))
}

fn write_json(path: &Path, v: &Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(v)? + "\n";
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn render_trace<W: Scalar>(t: &Trace, d: &Domain<W>, c: &CompiledController) -> String {
    let mut s = d.render_state(&t.initial);
    for step in &t.steps {
        s.push_str(&format!(
            " | {} {}/{}",
            c.names[step.from.control],
            d.action(step.action).name,
            d.observations[step.observation]
        ));
    }
    s.push_str(&format!(
        " | {} at {}",
        c.names[t.end.control],
        d.render_state(&t.end.world)
    ));
    s
}

struct Report {
    code: u8,
    text: String,
    json: Value,
}

fn verify<W: Scalar>(a: &VerifyArgs) -> anyhow::Result<Report> {
    let (d, c) = load::<W>(&a.inputs)?;
    let criterion: Criterion<W> = a.criterion.parse()?;
    let v = criterion.verify(&c, &d, &a.epistemic.options())?;
    let mut json = v.to_json(&d, &c);
    json["criterion"] = json!(criterion.to_string());
    if let Some(path) = &a.trace {
        write_json(path, &json)?;
    }
    let mut text = format!("{criterion}: {}\n", v.status.as_str());
    if let Some(r) = &v.reason {
        text.push_str(&format!("reason: {r}\n"));
    }
    if let Some(w) = &v.counterexample_world {
        text.push_str(&format!("world: {}\n", d.render_state(w)));
    }
    if let Some(m) = v.mass {
        text.push_str(&format!("mass: {m}\n"));
    }
    for n in &v.notes {
        text.push_str(&format!("note: {n}\n"));
    }
    for t in &v.witnesses {
        text.push_str(&format!("witness: {}\n", render_trace(t, &d, &c)));
    }
    Ok(Report {
        code: v.status.exit_code() as u8,
        text,
        json,
    })
}

fn trace<W: Scalar>(a: &TraceArgs) -> anyhow::Result<Report> {
    let (d, c) = load::<W>(&a.inputs)?;
    let real: Value = serde_json::from_str(&a.real).context("in --real")?;
    let real = d.signature.state_from_json(&real).context("in --real")?;
    let sc = Scenario::from_json(&read(&a.scenario)?).with_context(|| format!("in {}", a.scenario.display()))?;
    let run = run_scenario(&c, &d, &real, &sc, &a.epistemic.options())?;
    let json = run.to_json(&d, &c);
    if let Some(path) = &a.trace {
        write_json(path, &json)?;
    }
    let summary = |b: &loopverify::belief::BeliefState<W>| {
        let total = b.total();
        b.by_state()
            .into_iter()
            .map(|(w, x)| format!("{}:{:.6}", d.render_state(&w), loopverify::scalar::ratio(&x, &total)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut text = format!(
        "start {} real {} belief {}\n",
        c.names[run.initial.control],
        d.render_state(&run.initial.real),
        summary(&run.initial.belief)
    );
    for (i, s) in run.steps.iter().enumerate() {
        let outcome = s
            .outcome
            .map(|b| format!(" -> {}", d.action(b).name))
            .unwrap_or_default();
        let reading = s.reading.as_ref().map(|r| format!(" reading {r}")).unwrap_or_default();
        text.push_str(&format!(
            "{} {} {}{outcome}{reading} obs {} -> {} real {} belief {}\n",
            i + 1,
            c.names[s.from],
            d.action(s.action).name,
            d.observations[s.observation],
            c.names[s.config.control],
            d.render_state(&s.config.real),
            summary(&s.config.belief)
        ));
    }
    text.push_str(&format!(
        "goal at final belief: {}\n",
        run.end().belief.eval_goal(&d.goal)
    ));
    text.push_str(&format!("status: {}\n", run.status.as_str()));
    if let Some(r) = &run.reason {
        text.push_str(&format!("reason: {r}\n"));
    }
    Ok(Report {
        code: run.status.exit_code() as u8,
        text,
        json,
    })
}

fn simulate_cmd<W: Scalar>(a: &SimulateArgs) -> anyhow::Result<Report> {
    let (d, c) = load::<W>(&a.inputs)?;
    let cap = a.step_cap.unwrap_or_else(|| default_step_cap(&c, &d));
    let r = simulate(&c, &d, a.runs, cap, a.seed, a.track_belief)?;
    let json = serde_json::to_value(&r)?;
    let text = serde_json::to_string_pretty(&json)? + "\n";
    Ok(Report { code: 0, text, json })
}

fn synthesize_cmd<W: Scalar>(a: &SynthesizeArgs) -> anyhow::Result<Report> {
    let d = load_domain::<W>(&a.domain, a.goal.as_deref())?;
    let req = SynthRequest {
        criterion: a.criterion.parse()?,
        max_states: a.max_states,
        limit: a.limit,
        epistemic: a.epistemic.options(),
    };
    let out = synthesize(&d, &req)?;
    let controllers: Vec<Controller> = out.controllers.iter().map(|c| c.to_controller(&d)).collect();
    let mut files = Vec::new();
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for (i, c) in controllers.iter().enumerate() {
            let base = dir.join(format!("controller{}", i + 1));
            let json_path = base.with_extension("json");
            let dot_path = base.with_extension("dot");
            fs::write(&json_path, c.to_json() + "\n")
                .with_context(|| format!("cannot write {}", json_path.display()))?;
            fs::write(&dot_path, c.export_dot()).with_context(|| format!("cannot write {}", dot_path.display()))?;
            files.push(json_path.display().to_string());
        }
    }
    let json = json!({
        "criterion": req.criterion.to_string(),
        "max_states": a.max_states,
        "examined": out.examined,
        "controllers": controllers.iter().map(|c| serde_json::to_value(c).unwrap()).collect::<Vec<_>>(),
    });
    let mut text = format!(
        "{}: {} controller(s) found, {} examined\n",
        req.criterion,
        controllers.len(),
        out.examined
    );
    for c in &controllers {
        text.push_str(&c.to_json());
        text.push('\n');
    }
    for f in &files {
        text.push_str(&format!("wrote {f}\n"));
    }
    Ok(Report {
        code: if controllers.is_empty() { 1 } else { 0 },
        text,
        json,
    })
}

fn export(a: &ExportArgs) -> anyhow::Result<Report> {
    let c = Controller::from_json(&read(&a.controller)?).with_context(|| format!("in {}", a.controller.display()))?;
    let dot = c.export_dot();
    let json = json!({ "dot": dot });
    let text = match &a.out {
        Some(path) => {
            fs::write(path, &dot).with_context(|| format!("cannot write {}", path.display()))?;
            format!("wrote {}\n", path.display())
        }
        None => dot,
    };
    Ok(Report { code: 0, text, json })
}

fn dispatch<W: Scalar>(cmd: &Command) -> anyhow::Result<Report> {
    match cmd {
        Command::Verify(a) => verify::<W>(a),
        Command::Trace(a) => trace::<W>(a),
        Command::Simulate(a) => simulate_cmd::<W>(a),
        Command::Synthesize(a) => synthesize_cmd::<W>(a),
        Command::Export(a) => export(a),
    }
}

fn run(cli: &Cli) -> anyhow::Result<Report> {
    let go = || {
        if cli.exact {
            dispatch::<Rational>(&cli.command)
        } else {
            dispatch::<f64>(&cli.command)
        }
    };
    match cli.workers {
        Some(0) => bail!("--workers must be at least 1"),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("cannot start worker pool")?
            .install(go),
        None => go(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(r) => {
            let mut out = std::io::stdout().lock();
            let _ = if cli.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&r.json).unwrap_or_default())
            } else {
                write!(out, "{}", r.text)
            };
            ExitCode::from(r.code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if cli.json {
                println!("{}", json!({ "error": format!("{e:#}") }));
            }
            ExitCode::from(3)
        }
    }
}
