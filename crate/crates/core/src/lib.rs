//! Collision-cue pedestrian road-crossing decision models.
//!
//! Pedestrians waiting at an uncontrolled crossing judge each traffic gap by
//! the rate of expansion `θ̇` of the approaching vehicle's visual angle
//! ([`cue`]). A logit on `ln θ̇`, extended with two traffic-flow rules,
//! gives the per-gap acceptance probability ([`decision`]); the delay before
//! stepping off follows a cue-linked shifted Wald or Gaussian law
//! ([`initiation`]). Parameters are fitted by maximum likelihood
//! ([`calibrate`]), compared with BIC and Kolmogorov–Smirnov statistics
//! ([`evaluate`]) and replayed in an agent-based simulation ([`sim`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod cue;
pub mod data;
pub mod decision;
pub mod evaluate;
pub mod initiation;
pub mod optim;
pub mod params;
pub mod quad;
pub mod sim;
pub mod special;

pub use cue::{collision_cue, visual_angle, CollisionCue, VehicleObservation};
pub use decision::{DecisionParams, GapContext};
pub use initiation::{Family, InitiationDist, InitiationParams, SwParams};
pub use params::ModelParams;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("inconsistent gap sequence: {0}")]
    InconsistentSequence(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate link: {0}")]
    DegenerateLink(String),
    #[error("no data to evaluate")]
    EmptyData,
    #[error("record {0} has no initiation time")]
    MissingInitiationTime(usize),
    #[error("objective is not finite at the initial point")]
    NonFiniteObjective,
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("empty sample")]
    EmptySample,
    #[error("model CDF is not monotone near {0}")]
    NonMonotoneCdf(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("observed values have zero variance")]
    ZeroVariance,
    #[error("gap {index} is too small: clear distance {distance_m:.3} m")]
    GapTooSmall { index: usize, distance_m: f64 },
    #[error("Metropolis chain could not start inside the support")]
    ZeroDensityStart,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Ingest(#[from] data::IngestError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Validation problems in user input, as opposed to numerical failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::DegenerateLink(_)
                | Error::NonFiniteObjective
                | Error::NonMonotoneCdf(_)
                | Error::ZeroDensityStart
                | Error::Io(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
