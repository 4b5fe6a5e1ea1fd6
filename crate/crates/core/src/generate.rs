//! Random small instances for property testing.
//!
//! Instances have at most three fluents of at most four values each, at
//! most three advisable actions and a controller of at most four states.
//! Domains are emitted as JSON and go through the regular parser.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::controller::CompiledController;
use crate::scalar::Scalar;
use crate::theory::{parse_domain, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    /// Deterministic acting and sensing.
    None,
    /// One action may slip; sensing is exact.
    Acting,
    /// One action may slip and the sensor may misreport.
    Noisy,
}

#[derive(Debug, Clone)]
pub struct Instance<W> {
    pub seed: u64,
    pub json: Value,
    pub domain: Domain<W>,
    pub controller: CompiledController,
}

struct Shape {
    sizes: Vec<i64>,
}

impl Shape {
    fn name(i: usize) -> String {
        format!("f{i}")
    }

    fn atom(&self, rng: &mut ChaCha8Rng) -> String {
        let f = rng.random_range(0..self.sizes.len());
        let v = rng.random_range(0..self.sizes[f]);
        let op = ["=", ">=", "<="].choose(rng).unwrap();
        format!("({op} {} {v})", Shape::name(f))
    }
}

fn weight(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(1..=9) as f64 / 10.0
}

fn domain_json(rng: &mut ChaCha8Rng, noise: Noise, max_worlds: usize) -> Value {
    let shape = Shape {
        sizes: (0..rng.random_range(1..=3)).map(|_| rng.random_range(2..=4)).collect(),
    };
    let fluents: Vec<Value> = shape
        .sizes
        .iter()
        .enumerate()
        .map(|(i, &k)| json!({ "name": Shape::name(i), "domain": { "range": [0, k - 1] } }))
        .collect();

    let sensing = rng.random_bool(0.6);
    let physical = rng.random_range(1..=if sensing { 2 } else { 3 });
    let mut actions = Vec::new();
    let mut outcome_models = Vec::new();
    for i in 0..physical {
        let f = rng.random_range(0..shape.sizes.len());
        let k = shape.sizes[f];
        let value = match rng.random_range(0..3) {
            0 => json!(rng.random_range(0..k)),
            1 => json!(format!("(+ {} 1)", Shape::name(f))),
            _ => json!(format!("(- {} 1)", Shape::name(f))),
        };
        let precondition = if rng.random_bool(0.5) {
            "true".to_string()
        } else {
            shape.atom(rng)
        };
        let name = format!("a{i}");
        actions.push(json!({
            "name": name,
            "precondition": precondition,
            "effects": [{ "fluent": Shape::name(f), "value": value, "clamp": true }],
        }));
        if noise != Noise::None && i == 0 {
            let slip = format!("{name}_slip");
            actions.push(json!({ "name": slip, "precondition": precondition }));
            let p = rng.random_range(5..=9) as f64 / 10.0;
            outcome_models.push(json!({
                "intended": name,
                "outcomes": [
                    { "action": name, "likelihood": p },
                    { "action": slip, "likelihood": ((1.0 - p) * 10.0).round() / 10.0 },
                ],
            }));
        }
    }
    let mut sensing_models = Vec::new();
    if sensing {
        let f = rng.random_range(0..shape.sizes.len());
        let t = rng.random_range(1..shape.sizes[f]);
        let low = format!("(< {} {t})", Shape::name(f));
        let (hit, miss) = match noise {
            Noise::None | Noise::Acting => (1.0, 0.0),
            Noise::Noisy => {
                let h = rng.random_range(6..=9) as f64 / 10.0;
                (h, ((1.0 - h) * 10.0).round() / 10.0)
            }
        };
        actions.push(json!({ "name": "look", "kind": "sensing" }));
        sensing_models.push(json!({
            "action": "look",
            "readings": [
                { "token": "lo", "likelihood": { "cases": [{ "when": low, "value": hit }], "otherwise": miss } },
                { "token": "hi", "likelihood": { "cases": [{ "when": low, "value": miss }], "otherwise": hit } },
            ],
        }));
    }

    let mut worlds: Vec<Vec<i64>> = Vec::new();
    for _ in 0..rng.random_range(1..=max_worlds) {
        let w: Vec<i64> = shape.sizes.iter().map(|&k| rng.random_range(0..k)).collect();
        if !worlds.contains(&w) {
            worlds.push(w);
        }
    }
    let initial: Vec<Value> = worlds
        .iter()
        .map(|w| {
            let state: serde_json::Map<String, Value> =
                w.iter().enumerate().map(|(i, v)| (Shape::name(i), json!(v))).collect();
            json!({ "state": state, "weight": weight(rng) })
        })
        .collect();

    let goal = if rng.random_bool(0.3) {
        format!("(and {} {})", shape.atom(rng), shape.atom(rng))
    } else {
        shape.atom(rng)
    };

    json!({
        "fluents": fluents,
        "actions": actions,
        "outcome_models": outcome_models,
        "sensing_models": sensing_models,
        "initial": initial,
        "goal": goal,
    })
}

/// A random controller over `d`'s advisable actions with 1 to `max_states`
/// states. Transitions are missing with small probability.
pub fn random_controller<W: Scalar>(d: &Domain<W>, rng: &mut ChaCha8Rng, max_states: usize) -> CompiledController {
    let n = rng.random_range(1..=max_states);
    let final_state = if n == 1 { 0 } else { rng.random_range(1..n) };
    let mut advice = vec![None; n];
    let mut delta = vec![vec![None; d.observations.len()]; n];
    for q in 0..n {
        if q == final_state {
            continue;
        }
        let a = *d
            .advisable_actions()
            .choose(rng)
            .expect("domains have an advisable action");
        advice[q] = Some(a);
        for o in d.possible_observations(a) {
            if rng.random_bool(0.9) {
                delta[q][o] = Some(rng.random_range(0..n));
            }
        }
    }
    CompiledController {
        names: (0..n)
            .map(|i| if i == final_state { "QF".into() } else { format!("Q{i}") })
            .collect(),
        initial: 0,
        final_state,
        advice,
        delta,
    }
}

/// Instance number `seed`: a domain with up to three initial worlds and a
/// random controller of up to four states.
pub fn instance<W: Scalar>(seed: u64, noise: Noise) -> Instance<W> {
    instance_with(seed, noise, 3, 4)
}

pub fn instance_with<W: Scalar>(seed: u64, noise: Noise, max_worlds: usize, max_states: usize) -> Instance<W> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let json = domain_json(&mut rng, noise, max_worlds);
    let domain = parse_domain(&json.to_string()).expect("generated domains are valid");
    let controller = random_controller(&domain, &mut rng, max_states);
    Instance {
        seed,
        json,
        domain,
        controller,
    }
}
