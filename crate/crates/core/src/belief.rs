//! Degrees of belief over possible worlds.
//!
//! A [`BeliefState`] maps possible worlds to unnormalized weights.
//! Progression through an action spreads each world's weight over the
//! executable alternatives of that action; conditioning on a reading
//! multiplies each weight by the reading's likelihood. Normalization only
//! happens when a degree of belief is queried.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::scalar::{ratio, Scalar};
use crate::theory::{ActionId, Cmp, Domain, Epistemic, Formula, Reading, ResolvedReading, Threshold, WorldState};

/// Tolerance for `Know` under floating point weights.
pub const KNOW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BeliefOptions {
    /// Keep one particle per outcome history instead of merging equal
    /// world states.
    pub trace_particles: bool,
    /// Drop particles whose normalized weight falls below this. Makes all
    /// results approximate.
    pub prune: Option<f64>,
}

/// History of alternatives that produced a particle; empty unless particles
/// are traced.
pub type History = Vec<ActionId>;

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState<W> {
    particles: BTreeMap<(WorldState, History), W>,
    options: BeliefOptions,
}

impl<W: Scalar> BeliefState<W> {
    pub fn from_weights(worlds: impl IntoIterator<Item = (WorldState, W)>, options: BeliefOptions) -> Self {
        let mut b = BeliefState {
            particles: BTreeMap::new(),
            options,
        };
        for (w, weight) in worlds {
            b.add((w, Vec::new()), weight);
        }
        b
    }

    /// The prior of `d`.
    pub fn initial(d: &Domain<W>, options: BeliefOptions) -> Self {
        Self::from_weights(d.initial.iter().cloned(), options)
    }

    /// Point belief on a single world.
    pub fn point(w: WorldState) -> Self {
        Self::from_weights([(w, W::one())], BeliefOptions::default())
    }

    pub fn options(&self) -> BeliefOptions {
        self.options
    }

    fn add(&mut self, key: (WorldState, History), weight: W) {
        if !weight.is_positive() {
            return;
        }
        match self.particles.get_mut(&key) {
            Some(w) => *w = w.clone() + weight,
            None => {
                self.particles.insert(key, weight);
            }
        }
    }

    pub fn total(&self) -> W {
        crate::scalar::sum(self.particles.values())
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Particles with positive weight, ordered by world state then history.
    pub fn particles(&self) -> impl Iterator<Item = (&WorldState, &History, &W)> {
        self.particles.iter().map(|((w, h), weight)| (w, h, weight))
    }

    /// Weight per world state, summed over histories.
    pub fn by_state(&self) -> BTreeMap<WorldState, W> {
        let mut out: BTreeMap<WorldState, W> = BTreeMap::new();
        for ((w, _), weight) in &self.particles {
            match out.get_mut(w) {
                Some(x) => *x = x.clone() + weight.clone(),
                None => {
                    out.insert(w.clone(), weight.clone());
                }
            }
        }
        out
    }

    pub fn weight_of(&self, w: &WorldState) -> W {
        crate::scalar::sum(self.particles.iter().filter(|((x, _), _)| x == w).map(|(_, v)| v))
    }

    fn pruned(mut self) -> Self {
        if let Some(eps) = self.options.prune {
            let total = self.total();
            self.particles.retain(|_, w| ratio(w, &total) >= eps);
        }
        self
    }

    /// Progression through the intended action `a`: each particle spreads
    /// its weight over the alternatives executable at its world, weighted by
    /// their likelihood. Particles with no executable alternative lose their
    /// weight.
    pub fn progress(&self, a: ActionId, d: &Domain<W>) -> Result<Self> {
        let mut out = BeliefState {
            particles: BTreeMap::new(),
            options: self.options,
        };
        for ((w, h), weight) in &self.particles {
            for (b, l) in d.outcomes_of(a, w) {
                let history = if self.options.trace_particles {
                    let mut h = h.clone();
                    h.push(b);
                    h
                } else {
                    Vec::new()
                };
                out.add((d.apply(b, w), history), weight.clone() * l);
            }
        }
        if out.is_empty() {
            return Err(Error::BeliefAnnihilated {
                action: d.action(a).name.clone(),
            });
        }
        Ok(out.pruned())
    }

    /// Bayesian conditioning on a reading of `a`'s sensor. Actions without a
    /// sensor return the null observation and leave the belief unchanged.
    pub fn condition(&self, a: ActionId, r: &Reading, d: &Domain<W>) -> Result<Self> {
        let name = &d.action(a).name;
        let Some(model) = d.sensing_model(a) else {
            return match &r.token {
                Some(t) if Some(t.as_str()) == d.null_observation().map(|o| d.observations[o].as_str()) => {
                    Ok(self.clone())
                }
                None if r.value.is_none() => Ok(self.clone()),
                _ => Err(Error::UnknownReading {
                    action: name.clone(),
                    reading: r.to_string(),
                }),
            };
        };
        let resolved = model.resolve(r).ok_or_else(|| Error::UnknownReading {
            action: name.clone(),
            reading: r.to_string(),
        })?;
        self.condition_resolved(a, &resolved, d)
    }

    /// Conditioning on a reading already matched against `a`'s sensor.
    pub fn condition_resolved(&self, a: ActionId, resolved: &ResolvedReading, d: &Domain<W>) -> Result<Self> {
        let Some(model) = d.sensing_model(a) else {
            return Ok(self.clone());
        };
        let mut out = BeliefState {
            particles: BTreeMap::new(),
            options: self.options,
        };
        for (key, weight) in &self.particles {
            out.add(key.clone(), weight.clone() * model.likelihood(resolved, &key.0));
        }
        if out.is_empty() {
            return Err(Error::ObservationImpossible {
                action: d.action(a).name.clone(),
                reading: resolved.describe(model),
            });
        }
        Ok(out.pruned())
    }

    /// Weight of particles satisfying the objective formula `f`, and the
    /// total weight.
    fn mass(&self, f: &Formula) -> (W, W) {
        let sat = crate::scalar::sum(
            self.particles
                .iter()
                .filter(|((w, _), _)| f.eval_objective(w))
                .map(|(_, v)| v),
        );
        (sat, self.total())
    }

    /// Degree of belief in `f`, exactly in the scalar type.
    pub fn bel_exact(&self, f: &Formula) -> W {
        let (sat, total) = self.mass(f);
        sat / total
    }

    /// Degree of belief in the objective formula `f`.
    pub fn bel(&self, f: &Formula) -> f64 {
        let (sat, total) = self.mass(f);
        ratio(&sat, &total)
    }

    /// `f` has degree of belief one.
    pub fn know(&self, f: &Formula) -> bool {
        let (sat, total) = self.mass(f);
        if W::is_exact() {
            sat == total
        } else {
            (ratio(&sat, &total) - 1.0).abs() <= KNOW_TOLERANCE.max(W::tolerance())
        }
    }

    /// `Bel(inner) cmp threshold`.
    pub fn compare_bel(&self, cmp: Cmp, inner: &Formula, threshold: &Threshold) -> bool {
        if W::is_exact() {
            if let Some(k) = W::from_decimal(&threshold.literal) {
                return cmp.apply(&self.bel_exact(inner), &k);
            }
        }
        cmp.apply_tolerant(self.bel(inner), threshold.value, W::tolerance())
    }

    /// Truth of a goal at this belief: epistemic atoms are evaluated on the
    /// whole belief and the formula must hold at every particle.
    pub fn eval_goal(&self, f: &Formula) -> bool {
        let mut cache: Vec<(*const Formula, bool)> = Vec::new();
        let mut oracle = |atom: Epistemic<'_>| {
            let key: *const Formula = match atom {
                Epistemic::Bel { inner, .. } | Epistemic::Know(inner) => inner,
            };
            if let Some((_, v)) = cache.iter().find(|(k, _)| *k == key) {
                return *v;
            }
            let v = match atom {
                Epistemic::Bel { cmp, inner, threshold } => self.compare_bel(cmp, inner, threshold),
                Epistemic::Know(inner) => self.know(inner),
            };
            cache.push((key, v));
            v
        };
        self.particles.keys().all(|(w, _)| f.eval_with(w, &mut oracle))
    }

    /// Normalized weights per world state rounded to multiples of `step`,
    /// for memoizing searches over beliefs.
    pub fn rounded_key(&self, step: f64) -> Vec<(WorldState, i64)> {
        let total = self.total();
        self.by_state()
            .into_iter()
            .map(|(w, weight)| (w, (ratio(&weight, &total) / step).round() as i64))
            .filter(|(_, k)| *k != 0)
            .collect()
    }

    pub fn to_json(&self, d: &Domain<W>) -> Value {
        let total = self.total();
        Value::Array(
            self.particles
                .iter()
                .map(|((w, h), weight)| {
                    let mut v = json!({
                        "state": d.signature.state_to_json(w),
                        "weight": weight.to_f64(),
                        "probability": ratio(weight, &total),
                    });
                    if self.options.trace_particles {
                        v["history"] = json!(h.iter().map(|&b| d.action(b).name.clone()).collect::<Vec<_>>());
                    }
                    v
                })
                .collect(),
        )
    }
}

/// The prior of `d` with default options.
pub fn initial_belief<W: Scalar>(d: &Domain<W>) -> BeliefState<W> {
    BeliefState::initial(d, BeliefOptions::default())
}

#[cfg(test)]
mod tests;
