use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite iterate at step {step}")]
    NonFiniteIterate { step: usize },

    #[error("iterate magnitude {value:e} at step {step} exceeds 2^40; encoding base multiples are no longer exact")]
    IterateOutOfRange { step: usize, value: f64 },

    #[error("zero-record gradient {gradient:e} at step {step} reaches the clip norm {clip_norm}; the encoding would be clipped")]
    EncodingClipped {
        step: usize,
        gradient: f64,
        clip_norm: f64,
    },

    #[error("non-finite input to the likelihood ratio test: {0}")]
    NonFiniteInput(f64),

    #[error("privacy loss grid would need {required} points (cap {cap}); use a coarser grid spacing")]
    GridTooLarge { required: usize, cap: usize },

    #[error("could not bracket noise multiplier in [{lower}, {upper}] for epsilon {epsilon}, delta {delta}")]
    CalibrationBracket {
        epsilon: f64,
        delta: f64,
        lower: f64,
        upper: f64,
    },

    #[error("trial {trial} in world {world} failed: {source}")]
    Trial {
        world: String,
        trial: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
