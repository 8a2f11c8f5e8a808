//! Depth-scan obstacle avoidance in a 2D world.
//!
//! The crate bundles everything needed to train and evaluate discrete-action
//! obstacle-avoidance policies on simulated raycast depth:
//!
//! - [`sim`] — deterministic 2D world, differential-drive kinematics,
//!   collision tests, raycast depth scans, and episode semantics.
//! - [`sensor`] — scan corruption (blur, noise, dropout) and observation
//!   assembly.
//! - [`neuro`] — a minimal neural engine (1D conv, dense, ReLU,
//!   reverse-mode gradients, Adam) with a finite-difference checker.
//! - [`agent`] — DQN / double DQN / dueling double DQN over the branched
//!   linear/angular action space, with replay and target synchronization.
//! - [`trainer`] — episode orchestration, two-stage curriculum, variant
//!   comparison, CSV metrics, and checkpointing.
//! - [`config`] — the run-configuration file format shared by the CLI.

pub mod agent;
pub mod config;
mod error;
pub mod neuro;
pub mod rng;
pub mod sensor;
pub mod sim;
pub mod trainer;

pub use error::{Error, Result};
