//! Robot pose, the discrete action set, and unicycle kinematics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Selectable linear velocities in m/s, indexed by `ActionPair::linear_idx`.
pub const LINEAR_VELOCITIES: [f64; 2] = [0.2, 0.4];

/// Selectable angular velocities in rad/s, indexed by
/// `ActionPair::angular_idx`. Positive turns left.
pub const ANGULAR_VELOCITIES: [f64; 5] = [PI / 6.0, PI / 12.0, 0.0, -PI / 12.0, -PI / 6.0];

pub const N_LINEAR: usize = LINEAR_VELOCITIES.len();
pub const N_ANGULAR: usize = ANGULAR_VELOCITIES.len();

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// Planar pose of the disc-shaped robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, always wrapped into `(-pi, pi]`.
    pub theta: f64,
    /// Body disc radius in meters, > 0.
    pub radius: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64, radius: f64) -> Self {
        RobotState {
            x,
            y,
            theta: wrap_angle(theta),
            radius,
        }
    }

    pub fn position(&self) -> super::geom::Vec2 {
        super::geom::Vec2::new(self.x, self.y)
    }
}

/// One of the ten discrete velocity commands: a linear index into
/// [`LINEAR_VELOCITIES`] and an angular index into [`ANGULAR_VELOCITIES`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionPair {
    linear_idx: u8,
    angular_idx: u8,
}

impl ActionPair {
    pub fn new(linear_idx: usize, angular_idx: usize) -> Result<Self> {
        if linear_idx >= N_LINEAR || angular_idx >= N_ANGULAR {
            return Err(Error::Usage(format!(
                "action indices out of range: linear {linear_idx} (max {}), angular {angular_idx} (max {})",
                N_LINEAR - 1,
                N_ANGULAR - 1
            )));
        }
        Ok(ActionPair {
            linear_idx: linear_idx as u8,
            angular_idx: angular_idx as u8,
        })
    }

    pub fn linear_idx(&self) -> usize {
        self.linear_idx as usize
    }

    pub fn angular_idx(&self) -> usize {
        self.angular_idx as usize
    }

    /// Commanded linear velocity in m/s.
    pub fn v(&self) -> f64 {
        LINEAR_VELOCITIES[self.linear_idx as usize]
    }

    /// Commanded angular velocity in rad/s.
    pub fn omega(&self) -> f64 {
        ANGULAR_VELOCITIES[self.angular_idx as usize]
    }

    /// All ten commands, linear-major.
    pub fn all() -> impl Iterator<Item = ActionPair> {
        (0..N_LINEAR).flat_map(|l| {
            (0..N_ANGULAR).map(move |a| ActionPair {
                linear_idx: l as u8,
                angular_idx: a as u8,
            })
        })
    }
}

/// Exact unicycle integration over one step of length `dt`.
///
/// Zero angular velocity moves the robot along its heading; otherwise the
/// robot follows a circular arc of radius `v/omega`. Total in `(v, omega)`,
/// including `v = 0`.
pub fn integrate_unicycle(state: &RobotState, v: f64, omega: f64, dt: f64) -> RobotState {
    debug_assert!(dt > 0.0);
    if omega == 0.0 {
        RobotState {
            x: state.x + v * state.theta.cos() * dt,
            y: state.y + v * state.theta.sin() * dt,
            ..*state
        }
    } else {
        let r = v / omega;
        let theta_next = state.theta + omega * dt;
        RobotState {
            x: state.x + r * (theta_next.sin() - state.theta.sin()),
            y: state.y - r * (theta_next.cos() - state.theta.cos()),
            theta: wrap_angle(theta_next),
            radius: state.radius,
        }
    }
}

/// Apply one discrete action for `dt` seconds.
pub fn step_robot(state: &RobotState, action: ActionPair, dt: f64) -> RobotState {
    integrate_unicycle(state, action.v(), action.omega(), dt)
}
