//! Full model parameter vector and built-in calibrated fixtures.

use serde::{Deserialize, Serialize};

use crate::decision::DecisionParams;
use crate::initiation::{Family, InitiationParams};
use crate::Result;

/// Decision and initiation coefficients of one road-crossing model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub decision: DecisionParams,
    pub initiation: InitiationParams,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.decision.validate()?;
        self.initiation.validate()
    }

    /// Number of free parameters (flow coefficients only count when enabled).
    pub fn free_parameter_count(&self) -> usize {
        decision_parameter_count(&self.decision) + initiation_parameter_count(&self.initiation)
    }
}

pub fn decision_parameter_count(p: &DecisionParams) -> usize {
    if p.flow_rules_enabled {
        4
    } else {
        2
    }
}

pub fn initiation_parameter_count(p: &InitiationParams) -> usize {
    match p.family {
        Family::ShiftedWald => 5,
        Family::Gaussian => 4,
    }
}

/// Reference point estimates and the traffic scenarios they were fitted on.
pub mod fixtures {
    use super::*;

    /// Single-gap dataset, shifted-Wald initiation, no flow rules.
    pub fn single_gap_sw() -> ModelParams {
        ModelParams {
            decision: DecisionParams::without_flow(-2.14, -9.95),
            initiation: InitiationParams::shifted_wald(0.03, 4.48, -0.20, -2.11, 6.06),
        }
    }

    /// Single-gap dataset, Gaussian initiation, no flow rules.
    pub fn single_gap_gauss() -> ModelParams {
        ModelParams {
            decision: DecisionParams::without_flow(-2.14, -9.95),
            initiation: InitiationParams::gaussian(-0.03, 0.15, -0.21, -0.76),
        }
    }

    /// Traffic-flow dataset, shifted-Wald initiation, flow rules on.
    pub fn flow_sw() -> ModelParams {
        ModelParams {
            decision: DecisionParams::with_flow(-2.92, -1.29, -0.50, -13.23),
            initiation: InitiationParams::shifted_wald(0.47, 7.36, 0.04, -1.41, 7.76),
        }
    }

    /// Traffic-flow dataset, Gaussian initiation, flow rules off.
    pub fn flow_gauss() -> ModelParams {
        ModelParams {
            decision: DecisionParams::without_flow(-3.31, -15.50),
            initiation: InitiationParams::gaussian(-0.05, 0.01, -0.10, -0.59),
        }
    }

    pub const VEHICLE_WIDTH_M: f64 = 1.95;
    pub const SPAWN_DISTANCE_M: f64 = 96.0;
    pub const LANE_WIDTH_M: f64 = 3.5;
    pub const PAVEMENT_WIDTH_M: f64 = 1.85;

    /// Speeds of the single-gap design, mph.
    pub const GRID_SPEEDS_MPH: [f64; 3] = [25.0, 30.0, 35.0];
    /// Time gaps of the single-gap design, seconds.
    pub const GRID_GAPS_S: [f64; 4] = [2.0, 3.0, 4.0, 5.0];
    /// Trials collected in the single-gap design.
    pub const GRID_TRIAL_COUNT: usize = 4270;

    /// Speed of the traffic-flow scenarios, mph.
    pub const FLOW_SPEED_MPH: f64 = 30.0;
    pub const SCENARIO_ONE: [f64; 10] = [1.0, 1.0, 1.0, 3.0, 3.0, 3.0, 6.0, 1.0, 1.0, 6.0];
    pub const SCENARIO_TWO: [f64; 11] = [1.0, 1.0, 1.0, 1.0, 3.0, 3.0, 7.0, 1.0, 1.0, 3.0, 8.0];
    pub const SCENARIO_THREE: [f64; 11] = [1.0, 1.0, 1.0, 3.0, 1.0, 3.0, 1.0, 3.0, 5.0, 4.0, 8.0];
    pub const SCENARIO_FOUR: [f64; 11] = [2.0, 3.0, 1.0, 1.0, 3.0, 1.0, 1.0, 1.0, 5.0, 4.0, 7.0];

    pub fn flow_scenarios() -> Vec<(&'static str, Vec<f64>)> {
        vec![
            ("scenario1", SCENARIO_ONE.to_vec()),
            ("scenario2", SCENARIO_TWO.to_vec()),
            ("scenario3", SCENARIO_THREE.to_vec()),
            ("scenario4", SCENARIO_FOUR.to_vec()),
        ]
    }
}
