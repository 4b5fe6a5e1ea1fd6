use std::collections::HashSet;

use super::*;
use crate::theory::parse_domain;

const EXACT: &str = include_str!("../../../../fixtures/treechop_exact.json");
const FIG1: &str = include_str!("../../../../fixtures/fig1.controller.json");
const FIG4: &str = include_str!("../../../../fixtures/fig4.controller.json");
const FIG4_DOMAIN: &str = include_str!("../../../../fixtures/fig4_pickup.json");

fn exact() -> Domain<f64> {
    parse_domain(EXACT).unwrap()
}

fn fig1() -> Controller {
    Controller::from_json(FIG1).unwrap()
}

/// One physical action, no sensing: a single observation.
fn tiny(actions: usize, sensing: bool) -> Domain<f64> {
    let mut acts: Vec<String> = (0..actions)
        .map(|i| format!(r#"{{"name": "a{i}", "effects": [{{"fluent": "x", "value": 1}}]}}"#))
        .collect();
    let mut models = String::new();
    if sensing {
        acts.push(r#"{"name": "look", "kind": "sensing"}"#.into());
        models = r#", "sensing_models": [{"action": "look", "readings": [
            {"token": "lo", "likelihood": {"cases": [{"when": "(= x 0)", "value": 1}], "otherwise": 0}},
            {"token": "hi", "likelihood": {"cases": [{"when": "(= x 1)", "value": 1}], "otherwise": 0}}
        ]}]"#
            .into();
    }
    let text = format!(
        r#"{{"fluents": [{{"name": "x", "domain": [0, 1]}}], "actions": [{}]{models},
            "initial": [{{"state": {{"x": 0}}, "weight": 1}}], "goal": "(= x 1)"}}"#,
        acts.join(",")
    );
    parse_domain(&text).unwrap()
}

#[test]
fn chop_loop_is_valid() {
    assert!(fig1().validate(&exact()).is_empty());
    assert!(fig1().validate_strict(&exact()).is_empty());
}

#[test]
fn transition_from_final_is_a_defect() {
    let mut c = fig1();
    c.transitions.push(("QF".into(), "up".into(), "Q0".into()));
    assert_eq!(
        c.validate(&exact()),
        vec![Defect::TransitionFromFinal {
            observation: "up".into()
        }]
    );
}

#[test]
fn unknown_action_is_a_defect() {
    let mut c = fig1();
    c.advice.insert("Q0".into(), "saw".into());
    assert_eq!(
        c.validate(&exact()),
        vec![Defect::UnknownAction {
            state: "Q0".into(),
            action: "saw".into()
        }]
    );
}

#[test]
fn strict_flags_partial_transitions() {
    let d = exact();
    let mut c = fig1();
    c.transitions.retain(|(_, o, _)| o != "up");
    assert!(c.validate(&d).is_empty());
    assert_eq!(
        c.validate_strict(&d),
        vec![Defect::MissingTransition {
            state: "Q".into(),
            observation: "up".into()
        }]
    );
}

#[test]
fn other_defects() {
    let d = exact();
    let c = Controller {
        states: vec!["A".into(), "A".into(), "F".into()],
        initial: "A".into(),
        final_state: "F".into(),
        advice: BTreeMap::from([("F".into(), "chop".into())]),
        transitions: vec![
            ("A".into(), "sideways".into(), "F".into()),
            ("A".into(), "sideways".into(), "G".into()),
        ],
    };
    let defects = c.validate(&d);
    assert!(defects.contains(&Defect::DuplicateState("A".into())));
    assert!(defects.contains(&Defect::AdviceOnFinal("F".into())));
    assert!(defects.contains(&Defect::MissingAdvice("A".into())));
    assert!(defects.contains(&Defect::UnknownState("G".into())));
    assert!(defects.iter().any(|x| matches!(x, Defect::UnknownObservation { .. })));
    assert!(defects.iter().any(|x| matches!(x, Defect::DuplicateTransition { .. })));
    assert!(c.compile(&d).is_err());
}

fn count_dot(dot: &str) -> (usize, usize) {
    let edges = dot.lines().filter(|l| l.contains("->")).count();
    let nodes = dot.lines().filter(|l| l.contains("shape=")).count();
    (nodes, edges)
}

#[test]
fn dot_examples() {
    assert_eq!(count_dot(&fig1().export_dot()), (3, 3));
    let empty = Controller {
        states: vec!["Q0".into()],
        initial: "Q0".into(),
        final_state: "Q0".into(),
        advice: BTreeMap::new(),
        transitions: vec![],
    };
    assert_eq!(count_dot(&empty.export_dot()), (1, 0));
    let fig4 = Controller::from_json(FIG4).unwrap();
    assert_eq!(count_dot(&fig4.export_dot()).0, 4);
    let d: Domain<f64> = parse_domain(FIG4_DOMAIN).unwrap();
    assert!(fig4.validate(&d).is_empty());
    assert_eq!(fig1().export_dot(), fig1().export_dot());
}

#[test]
fn dot_round_trip() {
    for c in [fig1(), Controller::from_json(FIG4).unwrap()] {
        assert_eq!(Controller::parse_dot(&c.export_dot()).unwrap(), c);
    }
    let d = exact();
    for c in enumerate_controllers(&d, 3).take(500) {
        assert_eq!(Controller::parse_dot(&c.export_dot()).unwrap(), c);
    }
}

#[test]
fn single_state_bound_gives_empty_plan() {
    let d = exact();
    let all: Vec<_> = enumerate_controllers(&d, 1).collect();
    assert_eq!(all.len(), 1);
    assert!(all[0].is_empty_plan());
    assert!(all[0].validate(&d).is_empty());
}

#[test]
fn chop_loop_is_enumerated() {
    let d = exact();
    let key = fig1().compile(&d).unwrap().canonical_key();
    assert!(Enumerator::new(&d, 3, ObservationSlots::All).any(|c| c.canonical_key() == key));
    assert!(Enumerator::new(&d, 3, ObservationSlots::Producible).any(|c| c.canonical_key() == key));
}

#[test]
fn enumeration_is_stable() {
    let d = exact();
    let a: Vec<_> = enumerate_controllers(&d, 3).map(|c| c.to_json()).collect();
    let b: Vec<_> = enumerate_controllers(&d, 3).map(|c| c.to_json()).collect();
    assert_eq!(a, b);
}

#[test]
fn enumerated_controllers_are_valid_and_canonical() {
    let d = exact();
    let mut keys = HashSet::new();
    for c in Enumerator::new(&d, 3, ObservationSlots::All) {
        assert!(c.to_controller(&d).validate(&d).is_empty());
        assert_eq!(c.canonical(), c);
        assert!(keys.insert(c.canonical_key()));
    }
}

/// Every labelled controller with `k` states, state 0 initial.
fn brute_force(n_actions: usize, n_obs: usize, k: usize) -> Vec<CompiledController> {
    let mut out = Vec::new();
    if k == 1 {
        out.push(CompiledController {
            names: vec!["s0".into()],
            initial: 0,
            final_state: 0,
            advice: vec![None],
            delta: vec![vec![None; n_obs]],
        });
        return out;
    }
    for f in 1..k {
        let movers: Vec<usize> = (0..k).filter(|&q| q != f).collect();
        let slots = movers.len() * n_obs;
        let advice_space = n_actions.pow(movers.len() as u32);
        let delta_space = (k + 1).pow(slots as u32);
        for adv in 0..advice_space {
            for del in 0..delta_space {
                let mut advice = vec![None; k];
                let mut delta = vec![vec![None; n_obs]; k];
                let (mut a, mut t) = (adv, del);
                for &q in &movers {
                    advice[q] = Some(a % n_actions);
                    a /= n_actions;
                    for slot in delta[q].iter_mut() {
                        let v = t % (k + 1);
                        t /= k + 1;
                        *slot = (v < k).then_some(v);
                    }
                }
                let c = CompiledController {
                    names: (0..k).map(|i| format!("s{i}")).collect(),
                    initial: 0,
                    final_state: f,
                    advice,
                    delta,
                };
                if all_reachable(&c) {
                    out.push(c);
                }
            }
        }
    }
    out
}

fn all_reachable(c: &CompiledController) -> bool {
    let mut seen = vec![false; c.len()];
    let mut stack = vec![c.initial];
    seen[c.initial] = true;
    while let Some(q) = stack.pop() {
        for t in c.delta[q].iter().flatten() {
            if !seen[*t] {
                seen[*t] = true;
                stack.push(*t);
            }
        }
    }
    seen.iter().all(|&s| s)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn isomorphic(a: &CompiledController, b: &CompiledController) -> bool {
    if a.len() != b.len() {
        return false;
    }
    permutations(a.len()).into_iter().any(|p| {
        p[a.initial] == b.initial
            && p[a.final_state] == b.final_state
            && (0..a.len()).all(|q| {
                a.advice[q] == b.advice[p[q]]
                    && a.delta[q]
                        .iter()
                        .zip(&b.delta[p[q]])
                        .all(|(x, y)| x.map(|t| p[t]) == *y)
            })
    })
}

fn classes(all: Vec<CompiledController>) -> Vec<CompiledController> {
    let mut reps: Vec<CompiledController> = Vec::new();
    for c in all {
        if !reps.iter().any(|r| isomorphic(r, &c)) {
            reps.push(c);
        }
    }
    reps
}

fn check_against_brute_force(d: &Domain<f64>, max_states: usize) {
    let n_actions = d.advisable_actions().len();
    let n_obs = d.observations.len();
    let enumerated: Vec<_> = Enumerator::new(d, max_states, ObservationSlots::All).collect();
    let mut expected = 0;
    for k in 1..=max_states {
        let reps = classes(brute_force(n_actions, n_obs, k));
        expected += reps.len();
        for r in &reps {
            let matches = enumerated.iter().filter(|e| isomorphic(e, r)).count();
            assert_eq!(matches, 1, "class {r:?} matched {matches} times");
        }
    }
    assert_eq!(enumerated.len(), expected);
}

#[test]
fn enumeration_matches_brute_force() {
    check_against_brute_force(&tiny(1, false), 2);
    check_against_brute_force(&tiny(1, false), 3);
    check_against_brute_force(&tiny(2, false), 3);
    check_against_brute_force(&tiny(1, true), 2);
}

#[test]
fn canonical_form_identifies_relabelings() {
    let d = exact();
    let c = fig1().compile(&d).unwrap();
    let mut relabeled = c.clone();
    // swap the two non-initial states
    relabeled.names.swap(1, 2);
    relabeled.advice.swap(1, 2);
    relabeled.delta.swap(1, 2);
    for row in &mut relabeled.delta {
        for t in row.iter_mut().flatten() {
            *t = match *t {
                1 => 2,
                2 => 1,
                x => x,
            };
        }
    }
    relabeled.final_state = 1;
    assert!(isomorphic(&c, &relabeled));
    assert_eq!(c.canonical_key(), relabeled.canonical_key());
}
