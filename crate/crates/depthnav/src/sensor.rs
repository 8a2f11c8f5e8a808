//! Scan corruption and observation assembly.
//!
//! Raw raycast scans are too clean to stand in for learned depth, so they
//! are blurred, perturbed with Gaussian noise, and randomly dropped out
//! before the agent sees them. Corruption order is blur -> noise ->
//! dropout -> clamp.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::sim::DepthScan;
use crate::{Error, Result};

/// Sensor corruption parameters. All randomness comes from the caller's
/// RNG stream, so fixed seeds replay bitwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    /// Gaussian noise sigma as a fraction of max range.
    pub gauss_sigma: f64,
    /// Half-width of the triangular blur kernel, in rays.
    pub blur_radius: usize,
    /// Probability a ray is replaced by max range.
    pub dropout_prob: f64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            gauss_sigma: 0.05,
            blur_radius: 2,
            dropout_prob: 0.02,
        }
    }
}

impl CorruptionConfig {
    /// Identity corruption: output equals input for any scan.
    pub fn disabled() -> Self {
        CorruptionConfig {
            gauss_sigma: 0.0,
            blur_radius: 0,
            dropout_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gauss_sigma < 0.0 {
            return Err(Error::Config("gauss_sigma must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::Config("dropout_prob must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Triangular blur of half-width `radius` with edge-clamped indices.
/// Weights (radius+1-|j|) normalize to 1, so constant scans are fixed
/// points.
fn triangular_blur(scan: &[f64], radius: usize) -> Vec<f64> {
    if radius == 0 {
        return scan.to_vec();
    }
    let n = scan.len() as isize;
    let r = radius as isize;
    let norm: f64 = (-r..=r).map(|j| (r + 1 - j.abs()) as f64).sum();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for j in -r..=r {
                let idx = (i + j).clamp(0, n - 1) as usize;
                acc += (r + 1 - j.abs()) as f64 * scan[idx];
            }
            acc / norm
        })
        .collect()
}

/// Corrupt a raw scan: blur, additive Gaussian noise, per-ray dropout to
/// `max_range`, then clamp into `[0, max_range]`.
pub fn corrupt_scan(
    scan: &DepthScan,
    cfg: &CorruptionConfig,
    max_range: f64,
    rng: &mut ChaCha8Rng,
) -> DepthScan {
    let mut out = triangular_blur(scan, cfg.blur_radius);
    if cfg.gauss_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.gauss_sigma * max_range).expect("sigma validated");
        for v in &mut out {
            *v += normal.sample(rng);
        }
    }
    if cfg.dropout_prob > 0.0 {
        for v in &mut out {
            if rng.gen::<f64>() < cfg.dropout_prob {
                *v = max_range;
            }
        }
    }
    for v in &mut out {
        *v = v.clamp(0.0, max_range);
    }
    out
}

/// Normalized, optionally frame-stacked network input. Entries lie in
/// `[0, 1]`; length is `n_rays * stack_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f32>,
    pub stack_k: usize,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Assemble an observation from the most recent corrupted scans
/// (oldest first, newest last). Each scan is divided by `max_range`; if
/// fewer than `stack_k` scans exist the oldest available is repeated.
pub fn make_observation(
    history: &[DepthScan],
    max_range: f64,
    stack_k: usize,
) -> Result<Observation> {
    if history.is_empty() {
        return Err(Error::Usage("make_observation requires >= 1 scan".into()));
    }
    if stack_k == 0 {
        return Err(Error::Usage("stack_k must be >= 1".into()));
    }
    let n = history.len();
    let mut values = Vec::with_capacity(history[0].len() * stack_k);
    for slot in 0..stack_k {
        // Slot 0 is the oldest frame in the stack, slot stack_k-1 the newest.
        let idx = (n + slot).saturating_sub(stack_k).min(n - 1);
        values.extend(history[idx].iter().map(|&d| (d / max_range) as f32));
    }
    Ok(Observation { values, stack_k })
}

/// Rolling scan history sized for `stack_k` frame stacking.
#[derive(Debug, Clone)]
pub struct ScanHistory {
    scans: Vec<DepthScan>,
    stack_k: usize,
}

impl ScanHistory {
    pub fn new(stack_k: usize) -> Self {
        ScanHistory {
            scans: Vec::with_capacity(stack_k.max(1)),
            stack_k: stack_k.max(1),
        }
    }

    pub fn clear(&mut self) {
        self.scans.clear();
    }

    pub fn push(&mut self, scan: DepthScan) {
        if self.scans.len() == self.stack_k {
            self.scans.remove(0);
        }
        self.scans.push(scan);
    }

    pub fn observation(&self, max_range: f64) -> Result<Observation> {
        make_observation(&self.scans, max_range, self.stack_k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, stream};

    fn rng() -> ChaCha8Rng {
        stream_rng(42, stream::SENSOR)
    }

    #[test]
    fn zero_config_is_identity() {
        let scan: DepthScan = vec![0.3, 4.9, 2.2, 0.0, 5.0];
        let out = corrupt_scan(&scan, &CorruptionConfig::disabled(), 5.0, &mut rng());
        assert_eq!(out, scan);
    }

    #[test]
    fn blur_preserves_constant_scans() {
        let scan: DepthScan = vec![2.0; 64];
        let cfg = CorruptionConfig {
            gauss_sigma: 0.0,
            blur_radius: 2,
            dropout_prob: 0.0,
        };
        let out = corrupt_scan(&scan, &cfg, 5.0, &mut rng());
        for v in out {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_kernel_weights_sum_to_one() {
        // A unit impulse must spread without gaining or losing mass
        // (checked away from edges where clamping redistributes).
        let mut scan: DepthScan = vec![0.0; 21];
        scan[10] = 1.0;
        let out = triangular_blur(&scan, 3);
        let total: f64 = out.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((out[10] - 4.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn noise_calibration_monte_carlo() {
        // Frozen bounds for sigma = 0.05 * 5.0 = 0.25 over 1e5 rays.
        let n = 100_000;
        let scan: DepthScan = vec![2.5; n];
        let cfg = CorruptionConfig {
            gauss_sigma: 0.05,
            blur_radius: 0,
            dropout_prob: 0.0,
        };
        let out = corrupt_scan(&scan, &cfg, 5.0, &mut rng());
        let deltas: Vec<f64> = out.iter().zip(&scan).map(|(o, i)| o - i).collect();
        let mean = deltas.iter().sum::<f64>() / n as f64;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((0.24..=0.26).contains(&std), "std {std}");
    }

    #[test]
    fn dropout_replaces_with_max_range() {
        let n = 10_000;
        let scan: DepthScan = vec![1.0; n];
        let cfg = CorruptionConfig {
            gauss_sigma: 0.0,
            blur_radius: 0,
            dropout_prob: 0.5,
        };
        let out = corrupt_scan(&scan, &cfg, 5.0, &mut rng());
        let dropped = out.iter().filter(|&&v| v == 5.0).count();
        assert!(out.iter().all(|&v| v == 1.0 || v == 5.0));
        assert!((dropped as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn corruption_is_reproducible_per_seed() {
        let scan: DepthScan = (0..64).map(|i| (i % 7) as f64 * 0.7).collect();
        let cfg = CorruptionConfig::default();
        let a = corrupt_scan(&scan, &cfg, 5.0, &mut rng());
        let b = corrupt_scan(&scan, &cfg, 5.0, &mut rng());
        let c = corrupt_scan(&scan, &cfg, 5.0, &mut stream_rng(43, stream::SENSOR));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn observation_normalizes_to_unit_interval() {
        let obs = make_observation(&[vec![5.0, 2.5, 0.0]], 5.0, 1).unwrap();
        assert_eq!(obs.values, vec![1.0, 0.5, 0.0]);
    }

    #[test]
    fn observation_repeats_oldest_frame_at_episode_start() {
        let first: DepthScan = vec![2.5, 5.0];
        let obs = make_observation(std::slice::from_ref(&first), 5.0, 4).unwrap();
        assert_eq!(obs.values.len(), 8);
        for chunk in obs.values.chunks(2) {
            assert_eq!(chunk, &[0.5, 1.0]);
        }
    }

    #[test]
    fn observation_orders_frames_newest_last() {
        let history = vec![vec![1.0], vec![2.0], vec![3.0]];
        let obs = make_observation(&history, 5.0, 2).unwrap();
        assert_eq!(obs.values, vec![0.4, 0.6]);
    }

    #[test]
    fn empty_history_is_usage_error() {
        assert!(matches!(
            make_observation(&[], 5.0, 1),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn corrupted_observation_stays_in_bounds() {
        let mut r = rng();
        let cfg = CorruptionConfig {
            gauss_sigma: 0.3,
            blur_radius: 1,
            dropout_prob: 0.1,
        };
        for trial in 0..50 {
            let scan: DepthScan = (0..32).map(|i| ((i + trial) % 11) as f64 * 0.5).collect();
            let out = corrupt_scan(&scan, &cfg, 5.0, &mut r);
            let obs = make_observation(&[out], 5.0, 1).unwrap();
            assert!(obs.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn scan_history_keeps_last_k() {
        let mut h = ScanHistory::new(2);
        h.push(vec![1.0]);
        h.push(vec![2.0]);
        h.push(vec![3.0]);
        let obs = h.observation(5.0).unwrap();
        assert_eq!(obs.values, vec![0.4, 0.6]);
    }
}
