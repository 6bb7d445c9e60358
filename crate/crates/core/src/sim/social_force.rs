//! Driving force towards a destination plus exponential repulsion from the
//! two crosswalk edges. No pedestrian–pedestrian interaction.

use serde::{Deserialize, Serialize};

use super::run::PedestrianAgent;

/// Social-force constants. Defaults are chosen values, not fitted ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocialForceParams {
    pub desired_speed_mps: f64,
    pub relaxation_s: f64,
    /// Boundary repulsion strength A, m/s².
    pub repulsion_strength: f64,
    /// Boundary repulsion range B, m.
    pub repulsion_range_m: f64,
    /// Speed cap as a multiple of the desired speed.
    pub max_speed_factor: f64,
}

impl Default for SocialForceParams {
    fn default() -> Self {
        Self {
            desired_speed_mps: 1.4,
            relaxation_s: 0.5,
            repulsion_strength: 2.0,
            repulsion_range_m: 0.3,
            max_speed_factor: 1.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneGeometry {
    pub lane_width_m: f64,
    /// Crosswalk band `|x| ≤ crosswalk_width / 2`.
    pub crosswalk_width_m: f64,
}

/// Acceleration on an agent at `position` moving with `velocity`.
pub fn acceleration(
    position: [f64; 2],
    velocity: [f64; 2],
    destination: [f64; 2],
    env: &LaneGeometry,
    p: &SocialForceParams,
) -> [f64; 2] {
    let to_dest = [destination[0] - position[0], destination[1] - position[1]];
    let dist = to_dest[0].hypot(to_dest[1]);
    let dir = if dist > 0.0 {
        [to_dest[0] / dist, to_dest[1] / dist]
    } else {
        [0.0, 0.0]
    };
    let mut acc = [
        (p.desired_speed_mps * dir[0] - velocity[0]) / p.relaxation_s,
        (p.desired_speed_mps * dir[1] - velocity[1]) / p.relaxation_s,
    ];
    let half = 0.5 * env.crosswalk_width_m;
    // left edge pushes towards +x, right edge towards -x
    let from_left = (position[0] + half).max(0.0);
    let from_right = (half - position[0]).max(0.0);
    acc[0] += p.repulsion_strength * (-from_left / p.repulsion_range_m).exp();
    acc[0] -= p.repulsion_strength * (-from_right / p.repulsion_range_m).exp();
    acc
}

/// One explicit integration step of a moving agent.
pub fn social_force_step(
    agent: &PedestrianAgent,
    env: &LaneGeometry,
    p: &SocialForceParams,
    dt: f64,
) -> PedestrianAgent {
    let acc = acceleration(agent.position, agent.velocity, agent.destination, env, p);
    let mut vel = [agent.velocity[0] + acc[0] * dt, agent.velocity[1] + acc[1] * dt];
    let speed = vel[0].hypot(vel[1]);
    let cap = p.max_speed_factor * p.desired_speed_mps;
    if speed > cap {
        vel = [vel[0] * cap / speed, vel[1] * cap / speed];
    }
    let mut next = agent.clone();
    next.velocity = vel;
    next.position = [agent.position[0] + vel[0] * dt, agent.position[1] + vel[1] * dt];
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Phase;

    fn agent_at(x: f64, y: f64, dest: [f64; 2]) -> PedestrianAgent {
        let mut a = PedestrianAgent::new([x, y]);
        a.destination = dest;
        a.phase = Phase::Crossing;
        a
    }

    #[test]
    fn pure_driving_force_from_rest() {
        let p = SocialForceParams::default();
        let wide = LaneGeometry {
            lane_width_m: 3.5,
            crosswalk_width_m: 1e4,
        };
        let a = agent_at(0.0, 1.0, [0.0, 3.5]);
        let next = social_force_step(&a, &wide, &p, 0.02);
        let expected = p.desired_speed_mps * 0.02 / p.relaxation_s;
        assert!(next.velocity[0].abs() < 1e-15);
        assert!((next.velocity[1] - expected).abs() < 1e-15);
    }

    #[test]
    fn repulsions_cancel_on_centerline() {
        let env = LaneGeometry {
            lane_width_m: 3.5,
            crosswalk_width_m: 2.5,
        };
        let acc = acceleration([0.0, 1.0], [0.0, 1.0], [0.0, 3.5], &env, &SocialForceParams::default());
        assert_eq!(acc[0], 0.0);
        let off = acceleration([0.8, 1.0], [0.0, 1.0], [0.8, 3.5], &env, &SocialForceParams::default());
        assert!(off[0] < 0.0, "edge pushes back towards the centre");
    }

    #[test]
    fn crossing_duration_at_defaults() {
        let env = LaneGeometry {
            lane_width_m: 3.5,
            crosswalk_width_m: 2.5,
        };
        let p = SocialForceParams::default();
        let mut a = agent_at(0.0, 0.0, [0.0, 3.5]);
        let dt = 0.02;
        let mut t = 0.0;
        while a.position[1] < env.lane_width_m {
            a = social_force_step(&a, &env, &p, dt);
            t += dt;
            assert!(a.velocity[0].hypot(a.velocity[1]) <= 1.3 * p.desired_speed_mps + 1e-12);
            assert!(t < 10.0);
        }
        assert!((2.0..=3.5).contains(&t), "crossing took {t} s");
    }
}
