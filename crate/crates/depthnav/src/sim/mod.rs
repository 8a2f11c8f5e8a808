//! Deterministic 2D world: geometry, kinematics, collision, raycast depth,
//! and episode semantics.

pub mod env;
pub mod geom;
pub mod robot;
pub mod world;

pub use env::{
    raycast_scan, DepthScan, Env, EnvConfig, EnvStepResult, TerminalCause, COLLISION_PENALTY,
};
pub use geom::{Rect, Shape, Vec2};
pub use robot::{
    integrate_unicycle, step_robot, wrap_angle, ActionPair, RobotState, ANGULAR_VELOCITIES,
    LINEAR_VELOCITIES, N_ANGULAR, N_LINEAR,
};
pub use world::{WorldFile, WorldMap, WORLD_FORMAT};
