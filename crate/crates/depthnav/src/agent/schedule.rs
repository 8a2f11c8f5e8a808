//! Linear epsilon decay for exploration.

use serde::{Deserialize, Serialize};

/// Linear interpolation from `start` to `end` over `horizon` global steps,
/// clamped at `end` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            horizon: 20_000,
        }
    }
}

/// Epsilon at a global step count.
pub fn epsilon_at(schedule: &EpsilonSchedule, step: u64) -> f64 {
    if step >= schedule.horizon || schedule.horizon == 0 {
        schedule.end
    } else {
        let frac = step as f64 / schedule.horizon as f64;
        schedule.start + (schedule.end - schedule.start) * frac
    }
}
