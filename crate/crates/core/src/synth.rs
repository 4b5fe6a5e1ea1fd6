//! Bounded controller synthesis.
//!
//! Exhaustive: canonical controllers are enumerated by size up to the state
//! budget and each is verified against the requested criterion. There is no
//! heuristic guidance. An empty result proves that no controller within the
//! budget passes.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::controller::{CompiledController, Enumerator, ObservationSlots};
use crate::error::{Error, Result};
use crate::exec_epistemic::{verify_def9, Def9Mode, EpistemicOptions};
use crate::exec_exact::{
    verify_belief_threshold, verify_def4, verify_def6, verify_termination, verify_weight_threshold, Status, Verdict,
};
use crate::scalar::Scalar;
use crate::theory::Domain;

/// Candidates verified per parallel block.
const BLOCK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub enum Criterion<W> {
    Def4,
    Def6,
    Def6Termination,
    Termination,
    /// Every world heavier than κ admits a goal-reaching run.
    Weight(W),
    /// The goal-reaching prior mass is at least κ.
    Mass(W),
    Def9(Def9Mode),
}

impl<W: Scalar> FromStr for Criterion<W> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kappa =
            |text: &str| W::from_decimal(text).ok_or_else(|| Error::Unsupported(format!("bad threshold `{text}`")));
        Ok(match s.split_once(':') {
            None => match s {
                "def4" => Criterion::Def4,
                "def6" => Criterion::Def6,
                "def6+termination" => Criterion::Def6Termination,
                "termination" => Criterion::Termination,
                "def9" => Criterion::Def9(Def9Mode::Existential),
                _ => return Err(Error::Unsupported(format!("unknown criterion `{s}`"))),
            },
            Some(("weight", k)) => Criterion::Weight(kappa(k)?),
            Some(("mass", k)) => Criterion::Mass(kappa(k)?),
            Some(("def9", mode)) => Criterion::Def9(mode.parse()?),
            Some(_) => return Err(Error::Unsupported(format!("unknown criterion `{s}`"))),
        })
    }
}

impl<W: Scalar> fmt::Display for Criterion<W> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::Def4 => f.write_str("def4"),
            Criterion::Def6 => f.write_str("def6"),
            Criterion::Def6Termination => f.write_str("def6+termination"),
            Criterion::Termination => f.write_str("termination"),
            Criterion::Weight(k) => write!(f, "weight:{k}"),
            Criterion::Mass(k) => write!(f, "mass:{k}"),
            Criterion::Def9(Def9Mode::Existential) => f.write_str("def9:existential"),
            Criterion::Def9(Def9Mode::Adversarial) => f.write_str("def9:adversarial"),
        }
    }
}

impl<W: Scalar> Criterion<W> {
    /// Verdict of `c` under this criterion. For the combined criterion the
    /// first failing part is reported.
    pub fn verify(&self, c: &CompiledController, d: &Domain<W>, opts: &EpistemicOptions) -> Result<Verdict> {
        match self {
            Criterion::Def4 => verify_def4(c, d),
            Criterion::Def6 => verify_def6(c, d),
            Criterion::Termination => verify_termination(c, d),
            Criterion::Def6Termination => {
                let v = verify_def6(c, d)?;
                if v.status != Status::Holds {
                    return Ok(v);
                }
                verify_termination(c, d)
            }
            Criterion::Weight(k) => verify_weight_threshold(c, d, k),
            Criterion::Mass(k) => verify_belief_threshold(c, d, k),
            Criterion::Def9(mode) => verify_def9(c, d, *mode, opts),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthRequest<W> {
    pub criterion: Criterion<W>,
    pub max_states: usize,
    /// Stop after this many solutions.
    pub limit: usize,
    pub epistemic: EpistemicOptions,
}

#[derive(Debug, Clone)]
pub struct SynthResult {
    /// Passing controllers in enumeration order, canonically named.
    pub controllers: Vec<CompiledController>,
    /// Candidates verified.
    pub examined: usize,
}

/// Verifies canonical candidates in enumeration order, in parallel blocks,
/// and returns the first `limit` that hold.
pub fn synthesize<W: Scalar>(d: &Domain<W>, r: &SynthRequest<W>) -> Result<SynthResult> {
    if r.max_states == 0 {
        return Err(Error::Unsupported("max states must be at least 1".into()));
    }
    if let Criterion::Def9(_) = r.criterion {
        for m in d.sensing_models() {
            if !m.is_quantized() {
                return Err(Error::Unquantized {
                    action: d.action(m.action).name.clone(),
                });
            }
        }
    }
    let mut candidates = Enumerator::new(d, r.max_states, ObservationSlots::Producible);
    let mut found = Vec::new();
    let mut examined = 0;
    while found.len() < r.limit {
        let block: Vec<CompiledController> = candidates.by_ref().take(BLOCK).collect();
        if block.is_empty() {
            break;
        }
        let verdicts = block
            .par_iter()
            .map(|c| Ok(r.criterion.verify(c, d, &r.epistemic)?.status == Status::Holds))
            .collect::<Result<Vec<bool>>>()?;
        for (c, ok) in block.into_iter().zip(verdicts) {
            examined += 1;
            if ok {
                found.push(c);
                if found.len() == r.limit {
                    break;
                }
            }
        }
    }
    Ok(SynthResult {
        controllers: found,
        examined,
    })
}
