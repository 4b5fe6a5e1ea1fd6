use super::*;
use crate::scalar::Rational;
use crate::theory::parse_domain;

const EXACT: &str = include_str!("../../../../fixtures/treechop_exact.json");
const NOISYACT: &str = include_str!("../../../../fixtures/treechop_noisyact.json");
const NOISY: &str = include_str!("../../../../fixtures/treechop_noisy.json");

fn d(n: i64) -> WorldState {
    WorldState::new(vec![n])
}

fn f<W: Scalar>(dom: &Domain<W>, text: &str) -> Formula {
    dom.parse_goal(text).unwrap()
}

fn states(b: &BeliefState<f64>) -> Vec<(i64, f64)> {
    b.by_state().into_iter().map(|(w, x)| (w.get(0), x)).collect()
}

fn close(a: &[(i64, f64)], b: &[(i64, f64)]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.0 == y.0 && (x.1 - y.1).abs() < 1e-12)
}

#[test]
fn initial_examples() {
    let dom: Domain<f64> = parse_domain(EXACT).unwrap();
    let b = initial_belief(&dom);
    assert_eq!(b.len(), 10);
    assert!(b.particles().all(|(_, _, w)| *w == 0.1));
    assert!((b.bel(&f(&dom, "(= d 1)")) - 0.1).abs() < 1e-12);

    let single = BeliefState::<f64>::point(d(3));
    assert_eq!(single.len(), 1);

    let two = BeliefState::from_weights([(d(1), 2.0), (d(2), 2.0)], BeliefOptions::default());
    assert_eq!(two.bel(&f(&dom, "(= d 1)")), 0.5);
    assert_eq!(two.bel(&f(&dom, "(= d 2)")), 0.5);
}

#[test]
fn progress_examples() {
    let dom: Domain<f64> = parse_domain(NOISYACT).unwrap();
    let chop = dom.action_id("chop").unwrap();
    let b = BeliefState::from_weights([(d(1), 0.5), (d(2), 0.5)], BeliefOptions::default());
    let next = b.progress(chop, &dom).unwrap();
    assert!(close(&states(&next), &[(0, 0.45), (1, 0.5), (2, 0.05)]));

    let exact: Domain<f64> = parse_domain(EXACT).unwrap();
    let chop = exact.action_id("chop").unwrap();
    let next = BeliefState::point(d(3)).progress(chop, &exact).unwrap();
    assert_eq!(states(&next), vec![(2, 1.0)]);
}

/// Bel(d < 10) after two blind chops from the uniform prior, by direct
/// enumeration of (initial world, outcome, outcome).
fn two_chop_oracle() -> f64 {
    let (mut sat, mut total) = (0.0, 0.0);
    for d0 in 1..=10 {
        for first in [(1, 0.9), (0, 0.1)] {
            let d1 = d0 - first.0;
            if d1 < 1 {
                // the second chop has no executable outcome
                continue;
            }
            for second in [(1, 0.9), (0, 0.1)] {
                let d2 = d1 - second.0;
                let weight = 0.1 * first.1 * second.1;
                total += weight;
                if d2 < 10 {
                    sat += weight;
                }
            }
        }
    }
    sat / total
}

#[test]
fn two_blind_chops() {
    let oracle = two_chop_oracle();
    assert!((oracle - (1.0 - 0.001 / 0.91)).abs() < 1e-15);
    let dom: Domain<f64> = parse_domain(NOISYACT).unwrap();
    let chop = dom.action_id("chop").unwrap();
    let b = initial_belief(&dom)
        .progress(chop, &dom)
        .unwrap()
        .progress(chop, &dom)
        .unwrap();
    assert!((b.bel(&f(&dom, "(< d 10)")) - oracle).abs() < 1e-12);
    // the d = 0 particle after the first chop has no executable alternative
    assert!((b.total() - 0.91).abs() < 1e-12);

    let exact: Domain<Rational> = parse_domain(NOISYACT).unwrap();
    let b = initial_belief(&exact)
        .progress(chop, &exact)
        .unwrap()
        .progress(chop, &exact)
        .unwrap();
    assert_eq!(
        b.bel_exact(&f(&exact, "(< d 10)")),
        Rational::new(909.into(), 910.into())
    );
}

#[test]
fn annihilation_is_an_error() {
    let dom: Domain<f64> = parse_domain(EXACT).unwrap();
    let chop = dom.action_id("chop").unwrap();
    assert!(matches!(
        BeliefState::point(d(0)).progress(chop, &dom),
        Err(Error::BeliefAnnihilated { .. })
    ));
}

#[test]
fn condition_examples() {
    let dom: Domain<f64> = parse_domain(NOISYACT).unwrap();
    let getd = dom.action_id("getd").unwrap();
    let b = BeliefState::from_weights([(d(0), 0.45), (d(1), 0.5), (d(2), 0.05)], BeliefOptions::default());
    let down = b.condition(getd, &Reading::token("down"), &dom).unwrap();
    assert_eq!(states(&down), vec![(0, 0.45)]);
    assert!(matches!(
        BeliefState::point(d(3)).condition(getd, &Reading::token("down"), &dom),
        Err(Error::ObservationImpossible { .. })
    ));
    assert!(matches!(
        b.condition(getd, &Reading::token("sideways"), &dom),
        Err(Error::UnknownReading { .. })
    ));
    // idempotent on exact readings
    let twice = down.condition(getd, &Reading::token("down"), &dom).unwrap();
    assert_eq!(twice, down);
}

#[test]
fn gaussian_reading_on_uniform_prior() {
    let dom: Domain<f64> = parse_domain(NOISY).unwrap();
    let getd = dom.action_id("getd").unwrap();
    let b = initial_belief(&dom)
        .condition(getd, &Reading::value(5.5), &dom)
        .unwrap();
    let weights = b.by_state();
    for k in 1..=5 {
        let lo = weights[&d(k)];
        let hi = weights[&d(11 - k)];
        assert!((lo - hi).abs() <= 1e-15 * lo.max(hi));
    }
    let n = |z: f64, mu: f64| (-(z - mu) * (z - mu) / 0.5).exp() / (2.0 * std::f64::consts::PI * 0.25).sqrt();
    assert!((weights[&d(5)] - 0.1 * n(5.5, 5.0)).abs() < 1e-15);
    // symmetric around 5.5, so the reading leaves d <= 5 at one half
    assert!((b.bel(&f(&dom, "(<= d 5)")) - 0.5).abs() < 1e-12);
}

#[test]
fn uninformative_reading() {
    let text = r#"{
        "fluents": [{"name": "d", "domain": {"range": [0, 3]}}],
        "actions": [{"name": "look", "kind": "sensing"}],
        "sensing_models": [{"action": "look", "readings": [{"token": "nil", "likelihood": 1}]}],
        "initial": [{"state": {"d": [1, 2, 3]}, "weight": 0.25}, {"state": {"d": 1}, "weight": 0.25}],
        "goal": "true"
    }"#;
    let dom: Domain<f64> = parse_domain(text).unwrap();
    let look = dom.action_id("look").unwrap();
    let b = initial_belief(&dom);
    let c = b.condition(look, &Reading::token("nil"), &dom).unwrap();
    for q in ["(= d 1)", "(<= d 2)", "(> d 2)", "true"] {
        assert_eq!(b.bel(&f(&dom, q)), c.bel(&f(&dom, q)));
    }
}

#[test]
fn bel_and_know_examples() {
    let dom: Domain<f64> = parse_domain(EXACT).unwrap();
    let b = initial_belief(&dom);
    assert!((b.bel(&f(&dom, "(= d 1)")) - 0.1).abs() < 1e-12);
    assert_eq!(b.bel(&Formula::True), 1.0);
    assert!((b.bel(&f(&dom, "(<= d 5)")) - 0.5).abs() < 1e-12);
    assert!(BeliefState::<f64>::point(d(0)).know(&f(&dom, "(= d 0)")));
    assert!(b.know(&f(&dom, "(>= d 1)")));
    assert!(!b.know(&f(&dom, "(= d 1)")));
}

#[test]
fn eval_goal_examples() {
    let dom: Domain<f64> = parse_domain(NOISYACT).unwrap();
    let b = initial_belief(&dom);
    assert!(b.eval_goal(&f(&dom, "(>= (bel (= d 3)) 0)")));
    let single = BeliefState::from_weights([(d(0), 0.45)], BeliefOptions::default());
    assert!(single.eval_goal(&f(&dom, "(= d 0)")));
    assert!(!b.eval_goal(&f(&dom, "(= d 1)")));
    // objective parts must hold at every particle
    assert!(!b.eval_goal(&f(&dom, "(and (> (bel (< d 10)) 0.5) (< d 10))")));
    assert!(b.eval_goal(&f(&dom, "(and (> (bel (< d 10)) 0.5) (<= d 10))")));
}

#[test]
fn scaling_leaves_queries_unchanged() {
    let dom: Domain<f64> = parse_domain(NOISYACT).unwrap();
    let chop = dom.action_id("chop").unwrap();
    let getd = dom.action_id("getd").unwrap();
    let run = |scale: f64| {
        let b = BeliefState::from_weights(
            dom.initial.iter().map(|(w, x)| (w.clone(), x * scale)),
            BeliefOptions::default(),
        );
        b.progress(chop, &dom)
            .unwrap()
            .condition(getd, &Reading::token("up"), &dom)
            .unwrap()
    };
    let (a, b) = (run(1.0), run(37.5));
    for q in ["(< d 10)", "(<= d 5)", "(= d 9)"] {
        assert!((a.bel(&f(&dom, q)) - b.bel(&f(&dom, q))).abs() < 1e-12);
    }
}

#[test]
fn progress_conserves_mass_when_nothing_is_blocked() {
    let dom: Domain<Rational> = parse_domain(NOISYACT).unwrap();
    let chop = dom.action_id("chop").unwrap();
    let b = initial_belief(&dom);
    assert_eq!(b.progress(chop, &dom).unwrap().total(), b.total());
}

#[test]
fn traced_particles_keep_histories() {
    let dom: Domain<f64> = parse_domain(NOISYACT).unwrap();
    let chop = dom.action_id("chop").unwrap();
    let opts = BeliefOptions {
        trace_particles: true,
        prune: None,
    };
    let b = BeliefState::from_weights([(d(2), 1.0)], opts)
        .progress(chop, &dom)
        .unwrap()
        .progress(chop, &dom)
        .unwrap();
    // {2 -> 1 -> 0, 2 -> 1 -> 1, 2 -> 2 -> 1, 2 -> 2 -> 2}
    assert_eq!(b.len(), 4);
    assert_eq!(b.by_state().len(), 3);
    let merged = BeliefState::from_weights([(d(2), 1.0)], BeliefOptions::default())
        .progress(chop, &dom)
        .unwrap()
        .progress(chop, &dom)
        .unwrap();
    for (w, x) in merged.by_state() {
        assert!((b.by_state()[&w] - x).abs() < 1e-15);
    }
    let j = b.to_json(&dom);
    assert_eq!(j[0]["history"].as_array().unwrap().len(), 2);
}

#[test]
fn pruning_drops_small_particles() {
    let dom: Domain<f64> = parse_domain(NOISYACT).unwrap();
    let chop = dom.action_id("chop").unwrap();
    let opts = BeliefOptions {
        trace_particles: false,
        prune: Some(0.02),
    };
    let b = BeliefState::from_weights([(d(5), 1.0)], opts)
        .progress(chop, &dom)
        .unwrap()
        .progress(chop, &dom)
        .unwrap();
    // {3: .81, 4: .18, 5: .01} loses the last
    assert_eq!(b.by_state().len(), 2);
}

#[test]
fn exact_know() {
    let dom: Domain<Rational> = parse_domain(EXACT).unwrap();
    let b = initial_belief(&dom);
    assert!(b.know(&f(&dom, "(>= d 1)")));
    assert!(b.eval_goal(&f(&dom, "(= (bel (<= d 5)) 0.5)")));
    assert!(!b.eval_goal(&f(&dom, "(> (bel (<= d 5)) 0.5)")));
}
