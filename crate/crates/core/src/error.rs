use thiserror::Error;

/// Errors raised while loading inputs or running the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed JSON in {context}: {message}")]
    Json { context: String, message: String },

    #[error("syntax error in {context} at offset {offset}: {message}")]
    Syntax {
        context: String,
        offset: usize,
        message: String,
    },

    #[error("unknown fluent `{name}` in {context}")]
    UnknownFluent { name: String, context: String },

    #[error("unknown action `{name}` in {context}")]
    UnknownAction { name: String, context: String },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid controller: {0}")]
    InvalidController(String),

    #[error("sensing for `{action}` is not deterministic at {state}; use the epistemic semantics (def9)")]
    NondeterministicSensing { action: String, state: String },

    #[error("{criterion} requires a domain without noisy acting; use def6")]
    NoisyActing { criterion: &'static str },

    #[error("{criterion} requires an objective goal; epistemic goals need def9")]
    EpistemicGoal { criterion: &'static str },

    #[error("belief annihilated: `{action}` is inexecutable in every possible world")]
    BeliefAnnihilated { action: String },

    #[error("observation impossible under current belief: `{reading}` for `{action}`")]
    ObservationImpossible { action: String, reading: String },

    #[error("reading `{reading}` is not declared for `{action}`")]
    UnknownReading { action: String, reading: String },

    #[error("`{action}` is inexecutable in belief")]
    InexecutableInBelief { action: String },

    #[error("controller stuck: no transition from `{state}` on observation `{observation}`")]
    Stuck { state: String, observation: String },

    #[error("invalid scenario at step {step}: {message}")]
    InvalidScenario { step: usize, message: String },

    #[error("sensing model for `{action}` has no finite reading set; declare quantized readings")]
    Unquantized { action: String },

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
