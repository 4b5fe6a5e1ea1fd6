//! Acceptance suite. Prints one line per criterion and exits non-zero when
//! any of them fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use loopverify::belief::{BeliefOptions, BeliefState};
use loopverify::exec_epistemic::{run_scenario, verify_def9, Def9Mode, EpistemicOptions, Scenario};
use loopverify::exec_exact::{
    verify_belief_threshold, verify_def4, verify_def6, verify_termination, verify_weight_threshold, Status, Verdict,
};
use loopverify::generate::{instance, Instance, Noise};
use loopverify::montecarlo::{absorption_probability, simulate};
use loopverify::synth::{synthesize, SynthRequest};
use loopverify::theory::{ActionKind, ObsId};
use loopverify::{parse_domain, CompiledController, Controller, Domain, Reading, WorldState};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::BeliefStep;

const EXACT: &str = include_str!("../../../fixtures/treechop_exact.json");
const NOISYACT: &str = include_str!("../../../fixtures/treechop_noisyact.json");
const METAL: &str = include_str!("../../../fixtures/treechop_metal.json");
const NOISY: &str = include_str!("../../../fixtures/treechop_noisy.json");
const FIG4: &str = include_str!("../../../fixtures/fig4_pickup.json");
const FIG1_C: &str = include_str!("../../../fixtures/fig1.controller.json");
const FIG3_C: &str = include_str!("../../../fixtures/fig3.controller.json");
const FIG4_C: &str = include_str!("../../../fixtures/fig4.controller.json");
const ALPHA: &str = include_str!("../../../fixtures/example5.scenario.json");
const EX6: &str = include_str!("../../../fixtures/example6.scenario.json");

const POPULATION: u64 = 200;

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn load(domain: &str, controller: &str) -> (Domain<f64>, CompiledController) {
    let d: Domain<f64> = parse_domain(domain).unwrap();
    let c = Controller::from_json(controller).unwrap().compile(&d).unwrap();
    (d, c)
}

fn d(n: i64) -> WorldState {
    WorldState::new(vec![n])
}

fn status(v: loopverify::Result<Verdict>) -> Status {
    v.unwrap().status
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn population() -> impl Iterator<Item = Instance<f64>> {
    (0..POPULATION).flat_map(|seed| [instance(seed, Noise::None), instance(seed, Noise::Acting)])
}

fn noise_free() -> impl Iterator<Item = Instance<f64>> {
    (0..POPULATION).map(|seed| instance(seed, Noise::None))
}

fn chop_loop_exact() -> Outcome {
    let (dom, c) = load(EXACT, FIG1_C);
    let (s, t) = timed(|| status(verify_def4(&c, &dom)));
    outcome(
        s == Status::Holds && t < Duration::from_secs(1),
        format!("def4 {}, {t:.2?}", s.as_str()),
    )
}

fn chop_loop_noisy_acting() -> Outcome {
    let (dom, c) = load(NOISYACT, FIG1_C);
    let ((def6, ter), t) = timed(|| (status(verify_def6(&c, &dom)), status(verify_termination(&c, &dom))));
    outcome(
        def6 == Status::Holds && ter == Status::Holds && t < Duration::from_secs(1),
        format!("def6 {}, termination {}, {t:.2?}", def6.as_str(), ter.as_str()),
    )
}

fn metal_thresholds() -> Outcome {
    let (dom, c) = load(METAL, FIG1_C);
    let weight = status(verify_weight_threshold(&c, &dom, &0.3));
    let mass = verify_belief_threshold(&c, &dom, &0.7).unwrap();
    let high = status(verify_belief_threshold(&c, &dom, &0.81));
    let m = mass.mass.unwrap_or(f64::NAN);
    outcome(
        weight == Status::Holds && mass.status == Status::Holds && high == Status::Fails && (m - 0.8).abs() < 1e-12,
        format!(
            "weight .3 {}, mass .7 {}, mass .81 {}, mass {m}",
            weight.as_str(),
            mass.status.as_str(),
            high.as_str()
        ),
    )
}

fn threshold_extremes() -> Outcome {
    let mut n = 0;
    let mut bad = 0;
    for i in population() {
        let (d, c) = (&i.domain, &i.controller);
        let def6 = status(verify_def6(c, d));
        bad += (status(verify_weight_threshold(c, d, &0.0)) != def6) as usize;
        bad += (status(verify_belief_threshold(c, d, &1.0)) != def6) as usize;
        n += 1;
    }
    outcome(n >= 100 && bad == 0, format!("{n} domains, {bad} discrepancies"))
}

fn deterministic_equivalence() -> Outcome {
    let (mut n, mut thm1, mut prop1) = (0, 0, 0);
    for i in noise_free() {
        let (d, c) = (&i.domain, &i.controller);
        let def4 = status(verify_def4(c, d));
        thm1 += (def4 != status(verify_def6(c, d))) as usize;
        if def4 == Status::Holds && status(verify_termination(c, d)) != Status::Holds {
            prop1 += 1;
        }
        n += 1;
    }
    outcome(
        thm1 == 0 && prop1 == 0,
        format!("{n} noise-free domains, def4/def6 {thm1} discrepancies, def4/termination {prop1}"),
    )
}

fn epistemic_implies_correct() -> Outcome {
    let (mut n, mut holds, mut bad) = (0, 0, 0);
    for i in noise_free() {
        let (d, c) = (&i.domain, &i.controller);
        if status(verify_def9(c, d, Def9Mode::Existential, &EpistemicOptions::default())) == Status::Holds {
            holds += 1;
            bad += (status(verify_def4(c, d)) != Status::Holds) as usize;
        }
        n += 1;
    }
    outcome(
        bad == 0,
        format!("{n} noise-free domains, {holds} epistemically correct, {bad} discrepancies"),
    )
}

fn pickup_plan() -> Outcome {
    let (dom, c) = load(FIG4, FIG4_C);
    let ((def9, ter), t) = timed(|| {
        (
            status(verify_def9(
                &c,
                &dom,
                Def9Mode::Existential,
                &EpistemicOptions::default(),
            )),
            verify_termination(&c, &dom).unwrap(),
        )
    });
    let on_noop = ter
        .witnesses
        .first()
        .is_some_and(|w| w.steps.iter().any(|s| dom.action(s.action).name == "noop"));
    outcome(
        def9 == Status::Holds && ter.status == Status::Fails && on_noop && t < Duration::from_secs(1),
        format!(
            "def9 {}, termination {}, witness on noop branch {on_noop}, {t:.2?}",
            def9.as_str(),
            ter.status.as_str()
        ),
    )
}

fn bel(dom: &Domain<f64>, b: &BeliefState<f64>, q: &str) -> f64 {
    b.bel(&dom.parse_goal(q).unwrap())
}

fn oracle_bel(dom: &Domain<f64>, steps: &[BeliefStep], holds: impl Fn(i64) -> bool) -> f64 {
    let paths = common::belief_paths(dom, steps).unwrap();
    common::normalized(&paths)
        .into_iter()
        .filter(|(w, _)| holds(w.get(0)))
        .map(|(_, p)| p)
        .sum()
}

fn blind(dom: &Domain<f64>, action: &str) -> BeliefStep {
    BeliefStep {
        action: dom.action_id(action).unwrap(),
        token: None,
    }
}

fn belief_trace_alpha() -> Outcome {
    let (dom, c) = load(NOISYACT, FIG1_C);
    let dom = dom.with_goal(dom.parse_goal("(> (bel (< d 10)) 0.9)").unwrap());
    let sc = Scenario::from_json(ALPHA).unwrap();
    let run = run_scenario(&c, &dom, &d(1), &sc, &EpistemicOptions::default()).unwrap();
    let last = bel(&dom, &run.end().belief, "(< d 10)");

    let mut b = BeliefState::initial(&dom, BeliefOptions::default());
    let chop = dom.action_id("chop").unwrap();
    for _ in 0..2 {
        b = b.progress(chop, &dom).unwrap();
    }
    let two = bel(&dom, &b, "(< d 10)");
    let oracle = oracle_bel(&dom, &[blind(&dom, "chop"), blind(&dom, "chop")], |x| x < 10);
    outcome(
        run.status == Status::Holds && last == 1.0 && (two - 0.999).abs() <= 1e-9 && (two - oracle).abs() < 1e-12,
        format!("final {last}, after two blind chops {two:.9} (oracle {oracle:.9}, expected .999)"),
    )
}

fn gaussian_directions() -> Outcome {
    let (dom, c) = load(NOISY, FIG3_C);
    let sc = Scenario::from_json(EX6).unwrap();
    let opts = EpistemicOptions {
        poss_at_real: true,
        ..Default::default()
    };
    let run = run_scenario(&c, &dom, &d(6), &sc, &opts).unwrap();

    let mut prefix = Vec::new();
    let mut golden = Vec::new();
    let mut agree = true;
    for (i, s) in sc.steps.iter().enumerate() {
        let token = s.reading.as_ref().and_then(|r| r.value).map(|v| format!("{v}"));
        prefix.push(BeliefStep {
            action: dom.action_id(&s.action).unwrap(),
            token,
        });
        let expected = oracle_bel(&dom, &prefix, |x| x <= 5);
        let got = bel(&dom, &run.steps[i].config.belief, "(<= d 5)");
        agree &= (got - expected).abs() < 1e-9;
        golden.push(expected);
    }
    let goal = run.end().belief.eval_goal(&dom.goal);
    let dirs = [golden[0] > 0.5, golden[1] < 0.5, golden[2] > 0.5, goal];
    let shown: Vec<String> = golden.iter().map(|p| format!("{p:.6}")).collect();
    outcome(
        agree && dirs.iter().all(|&x| x),
        format!(
            "Bel(d<=5) per step [{}], directions {dirs:?}, engine agrees with oracle {agree}",
            shown.join(", ")
        ),
    )
}

fn monte_carlo_agreement() -> Outcome {
    let (dom, c) = load(NOISYACT, FIG1_C);
    let cap = 24;
    let ((within, exact), t) = timed(|| {
        let exact = absorption_probability(&c, &dom, cap).unwrap();
        let within = (0..100)
            .filter(|&seed| {
                let r = simulate(&c, &dom, 100_000, cap, seed, false).unwrap();
                (r.success_rate - exact).abs() <= 3.0 * r.std_error
            })
            .count();
        (within, exact)
    });
    outcome(
        within >= 95 && t < Duration::from_secs(30),
        format!("step cap {cap}, exact {exact:.6}, {within} of 100 seeds within 3 se, {t:.2?}"),
    )
}

fn behavior(dom: &Domain<f64>, c: &CompiledController) -> Vec<Vec<(String, String)>> {
    verify_def4(c, dom)
        .unwrap()
        .witnesses
        .iter()
        .map(|t| {
            t.labels()
                .into_iter()
                .map(|(a, o): (_, ObsId)| (dom.action(a).name.clone(), dom.observations[o].clone()))
                .collect()
        })
        .collect()
}

fn synthesis() -> Outcome {
    let dom: Domain<f64> = parse_domain(EXACT).unwrap();
    let fig1 = Controller::from_json(FIG1_C).unwrap().compile(&dom).unwrap();
    let req = SynthRequest {
        criterion: "def4".parse().unwrap(),
        max_states: 3,
        limit: 1,
        epistemic: EpistemicOptions::default(),
    };
    let (out, t) = timed(|| synthesize(&dom, &req).unwrap());
    let same = out
        .controllers
        .first()
        .is_some_and(|c| behavior(&dom, c) == behavior(&dom, &fig1));
    outcome(
        same && t < Duration::from_secs(60),
        format!(
            "{} examined, equivalent to the fig1 controller {same}, {t:.2?}",
            out.examined
        ),
    )
}

fn belief_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut compared, mut both_empty, mut bad, mut worst) = (0, 0, 0, 0.0f64);
    let mut seed = 0;
    while compared < 50 {
        let i: Instance<f64> = instance(seed, Noise::Noisy);
        seed += 1;
        let d = &i.domain;
        let steps: Vec<BeliefStep> = (0..rng.random_range(1..=3))
            .map(|_| {
                let a = *d.advisable_actions().choose(&mut rng).unwrap();
                let token = d
                    .sensing_model(a)
                    .map(|m| m.readings.choose(&mut rng).unwrap().token.clone());
                BeliefStep { action: a, token }
            })
            .collect();
        let mut b = Ok(BeliefState::initial(d, BeliefOptions::default()));
        for s in &steps {
            b = b.and_then(|b| match &s.token {
                Some(t) => b.condition(s.action, &Reading::token(t), d),
                None => Ok(b),
            });
            if d.action(s.action).kind == ActionKind::Physical {
                b = b.and_then(|b| b.progress(s.action, d));
            }
        }
        match (b, common::belief_paths(d, &steps)) {
            (Ok(b), Some(paths)) => {
                let expected: BTreeMap<WorldState, f64> = common::normalized(&paths);
                let total = b.total();
                let got = b.by_state();
                let mut ok = got.len() == expected.len();
                for (w, x) in got {
                    let err = (x / total - expected.get(&w).copied().unwrap_or(f64::NAN)).abs();
                    worst = worst.max(err);
                    ok &= err < 1e-9;
                }
                bad += !ok as usize;
                compared += 1;
            }
            (Err(_), None) => both_empty += 1,
            _ => bad += 1,
        }
    }
    outcome(
        bad == 0,
        format!(
            "{compared} scenarios compared, {both_empty} annihilated in both, {bad} mismatches, max error {worst:.1e}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Check; 12] = [
        ("the fig1 controller is correct on the exact domain", chop_loop_exact),
        (
            "the fig1 controller is correct and terminating under noisy acting",
            chop_loop_noisy_acting,
        ),
        ("metal tree thresholds", metal_thresholds),
        ("weight 0 and mass 1 agree with def6", threshold_extremes),
        ("def4 matches def6 and implies termination", deterministic_equivalence),
        ("epistemic correctness implies def4", epistemic_implies_correct),
        (
            "the fig4 controller is epistemically correct but not terminating",
            pickup_plan,
        ),
        ("belief trace of scenario alpha", belief_trace_alpha),
        ("gaussian sensing directions", gaussian_directions),
        ("sampled and exact success agree", monte_carlo_agreement),
        ("synthesis recovers the fig1 controller", synthesis),
        ("belief updates match path enumeration", belief_oracle),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.into_iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| outcome(false, "panicked"));
        println!(
            "criterion {:>2}: {} {name}: {}",
            n + 1,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
        failed += !result.pass as usize;
    }
    println!("{} of 12 criteria pass", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
