//! Visual looming cue of an approaching vehicle.
//!
//! The pedestrian sees a vehicle of width `w` at longitudinal distance `Z`
//! under the visual angle `θ = 2·atan(w / 2Z)`. For a vehicle closing at
//! speed `v` the angle grows at `θ̇ = w·v / (Z² + w²/4)`, which is the cue
//! every downstream model consumes. All quantities are SI.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Instantaneous kinematic state of one approaching vehicle.
///
/// `distance_m` is measured from the pedestrian's lateral line to the
/// vehicle's front face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleObservation {
    pub width_m: f64,
    pub distance_m: f64,
    pub speed_mps: f64,
}

impl VehicleObservation {
    pub fn new(width_m: f64, distance_m: f64, speed_mps: f64) -> Result<Self> {
        let obs = Self {
            width_m,
            distance_m,
            speed_mps,
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_m > 0.0) || !self.width_m.is_finite() {
            return Err(Error::InvalidObservation(format!(
                "vehicle width must be positive, got {}",
                self.width_m
            )));
        }
        if !(self.distance_m > 0.0) || !self.distance_m.is_finite() {
            return Err(Error::InvalidObservation(format!(
                "vehicle distance must be positive, got {}",
                self.distance_m
            )));
        }
        if !(self.speed_mps >= 0.0) || !self.speed_mps.is_finite() {
            return Err(Error::InvalidObservation(format!(
                "vehicle speed must be non-negative, got {}",
                self.speed_mps
            )));
        }
        Ok(())
    }
}

/// Visual angle and its rate of change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionCue {
    pub theta_rad: f64,
    pub theta_dot_radps: f64,
}

/// Visual angle subtended by the vehicle front, in radians.
pub fn visual_angle(obs: &VehicleObservation) -> Result<f64> {
    check_geometry(obs)?;
    Ok(2.0 * (obs.width_m / (2.0 * obs.distance_m)).atan())
}

/// Visual angle together with its temporal derivative for a vehicle closing
/// at constant speed.
pub fn collision_cue(obs: &VehicleObservation) -> Result<CollisionCue> {
    obs.validate()?;
    let w = obs.width_m;
    let z = obs.distance_m;
    Ok(CollisionCue {
        theta_rad: 2.0 * (w / (2.0 * z)).atan(),
        theta_dot_radps: w * obs.speed_mps / (z * z + 0.25 * w * w),
    })
}

/// Shorthand for `collision_cue(..).theta_dot_radps`.
pub fn theta_dot(width_m: f64, distance_m: f64, speed_mps: f64) -> Result<f64> {
    collision_cue(&VehicleObservation {
        width_m,
        distance_m,
        speed_mps,
    })
    .map(|c| c.theta_dot_radps)
}

// The angle alone does not depend on speed.
fn check_geometry(obs: &VehicleObservation) -> Result<()> {
    VehicleObservation {
        speed_mps: 0.0,
        ..*obs
    }
    .validate()
}

/// Speed unit conversions used at ingestion.
pub mod units {
    pub const MPS_PER_MPH: f64 = 0.44704;

    pub fn mph_to_mps(mph: f64) -> f64 {
        mph * MPS_PER_MPH
    }

    pub fn kmh_to_mps(kmh: f64) -> f64 {
        kmh / 3.6
    }
}
