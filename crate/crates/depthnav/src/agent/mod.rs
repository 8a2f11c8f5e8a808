//! Q-learning agents over the branched linear/angular action space.
//!
//! Three variants share one trainer: plain DQN (max over the target
//! network), double DQN (argmax under the online network, evaluated by the
//! target network), and dueling double DQN (double targets plus the
//! value/advantage head split). Each branch is trained against its own TD
//! target with the shared scalar reward.

mod qnet;
mod replay;
mod schedule;

pub use qnet::{
    dueling_combine, DuelingHeads, NetworkPreset, QAdamState, QGrads, QNetwork, QOutput, QTape,
    Variant,
};
pub use replay::{ReplayBuffer, Transition};
pub use schedule::{epsilon_at, EpsilonSchedule};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::neuro::AdamHyper;
use crate::rng::{stream_rng, stream};
use crate::sensor::Observation;
use crate::sim::{ActionPair, N_ANGULAR, N_LINEAR};
use crate::{Error, Result};

/// Learner hyperparameters. Defaults are conventional DQN settings scaled
/// to CPU budgets; every field is exposed in the run-config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub variant: Variant,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    /// Target sync period in learner updates.
    pub sync_period: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Minimum buffered transitions before learning starts.
    pub warmup: usize,
    /// Environment steps per learner update (1 = classic cadence).
    pub train_every: u32,
    pub learning_rate: f64,
    pub huber_delta: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            variant: Variant::D3qn,
            gamma: 0.99,
            epsilon: EpsilonSchedule::default(),
            sync_period: 2_000,
            batch_size: 64,
            buffer_capacity: 50_000,
            warmup: 1_000,
            train_every: 1,
            learning_rate: 1e-4,
            huber_delta: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return Err(Error::Config("gamma must be in (0, 1)".into()));
        }
        for (name, eps) in [("start", self.epsilon.start), ("end", self.epsilon.end)] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::Config(format!("epsilon {name} must be in [0, 1]")));
            }
        }
        if self.sync_period == 0 || self.batch_size == 0 || self.train_every == 0 {
            return Err(Error::Config(
                "sync_period, batch_size, and train_every must be > 0".into(),
            ));
        }
        if self.buffer_capacity < self.batch_size || self.warmup < self.batch_size {
            return Err(Error::Config(
                "buffer_capacity and warmup must be >= batch_size".into(),
            ));
        }
        if self.learning_rate < 0.0 || self.huber_delta <= 0.0 {
            return Err(Error::Config(
                "learning_rate must be >= 0 and huber_delta > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Greedy index with ties broken toward the lowest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy selection applied to each branch independently: with
/// probability `epsilon` a uniform index, otherwise the branch argmax.
pub fn select_action(q: &QOutput, epsilon: f64, rng: &mut ChaCha8Rng) -> ActionPair {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    let pick = |values: &[f64], rng: &mut ChaCha8Rng| -> usize {
        if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
            rng.gen_range(0..values.len())
        } else {
            argmax(values)
        }
    };
    let linear = pick(&q.q_linear, rng);
    let angular = pick(&q.q_angular, rng);
    ActionPair::new(linear, angular).expect("indices in range by construction")
}

/// Per-transition TD targets, one per branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchTargets {
    pub linear: f64,
    pub angular: f64,
}

/// Bootstrap targets for a batch.
///
/// Terminal transitions contribute `y = r` in both branches, independent
/// of gamma and both networks. Otherwise, per branch: dqn uses
/// `r + gamma * max_a Q_target(x', a)`; the double variants select
/// `a* = argmax_a Q_online(x', a)` and evaluate
/// `r + gamma * Q_target(x', a*)`.
pub fn double_q_targets(
    batch: &[Transition],
    online: &QNetwork,
    target: &QNetwork,
    gamma: f64,
    variant: Variant,
) -> Result<Vec<BranchTargets>> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let mut out = Vec::with_capacity(batch.len());
    for t in batch {
        if t.terminal {
            out.push(BranchTargets {
                linear: t.reward,
                angular: t.reward,
            });
            continue;
        }
        let q_target = target.q_values(&t.next_obs.values)?;
        let (lin, ang) = if variant.uses_double_targets() {
            let q_online = online.q_values(&t.next_obs.values)?;
            (
                q_target.q_linear[argmax(&q_online.q_linear)],
                q_target.q_angular[argmax(&q_online.q_angular)],
            )
        } else {
            (
                q_target.q_linear[argmax(&q_target.q_linear)],
                q_target.q_angular[argmax(&q_target.q_angular)],
            )
        };
        out.push(BranchTargets {
            linear: t.reward + gamma * lin,
            angular: t.reward + gamma * ang,
        });
    }
    Ok(out)
}

fn huber(e: f64, delta: f64) -> f64 {
    let a = e.abs();
    if a <= delta {
        0.5 * e * e
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn huber_grad(e: f64, delta: f64) -> f64 {
    e.clamp(-delta, delta)
}

/// Loss statistics from one learner update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub loss: f64,
    pub mean_abs_td: f64,
}

/// A learning agent: online and target networks, optimizer state, replay
/// buffer, and exploration bookkeeping. Single-writer.
#[derive(Debug, Clone)]
pub struct Agent {
    pub cfg: AgentConfig,
    preset: NetworkPreset,
    input_len: usize,
    online: QNetwork,
    target: QNetwork,
    adam: QAdamState,
    pub buffer: ReplayBuffer,
    /// Environment steps taken in training mode; drives the epsilon
    /// schedule.
    pub global_step: u64,
    /// Learner updates applied; drives target syncs.
    pub train_steps: u64,
    /// Completed target synchronizations.
    pub syncs: u64,
    rng: ChaCha8Rng,
}

impl Agent {
    /// Fresh agent with He-initialized online network and a duplicate
    /// target. `seed` fixes both weight init and exploration streams.
    pub fn new(
        cfg: AgentConfig,
        preset: NetworkPreset,
        input_len: usize,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut init_rng = stream_rng(seed, stream::INIT);
        let online = QNetwork::init(preset, cfg.variant, input_len, &mut init_rng)?;
        let target = online.clone_params();
        let adam = online.adam_state(AdamHyper::with_alpha(cfg.learning_rate));
        Ok(Agent {
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            adam,
            target,
            online,
            preset,
            input_len,
            cfg,
            global_step: 0,
            train_steps: 0,
            syncs: 0,
            rng: stream_rng(seed, stream::AGENT),
        })
    }

    /// Rebuild from externally restored parts (checkpoint loading).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        cfg: AgentConfig,
        preset: NetworkPreset,
        input_len: usize,
        online: QNetwork,
        target: QNetwork,
        adam: QAdamState,
        global_step: u64,
        train_steps: u64,
        syncs: u64,
        seed: u64,
    ) -> Self {
        Agent {
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            adam,
            target,
            online,
            preset,
            input_len,
            cfg,
            global_step,
            train_steps,
            syncs,
            rng: stream_rng(seed, stream::AGENT),
        }
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    /// Mutable access for stubbed policies in tests and bindings; call
    /// `sync_target` afterwards to keep the pair coherent.
    pub fn online_mut(&mut self) -> &mut QNetwork {
        &mut self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn adam(&self) -> &QAdamState {
        &self.adam
    }

    pub fn preset(&self) -> NetworkPreset {
        self.preset
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn variant(&self) -> Variant {
        self.cfg.variant
    }

    /// Current exploration rate.
    pub fn epsilon(&self) -> f64 {
        epsilon_at(&self.cfg.epsilon, self.global_step)
    }

    /// Q-values for an observation under the online network.
    pub fn q_values(&self, obs: &Observation) -> Result<QOutput> {
        self.online.q_values(&obs.values)
    }

    /// Epsilon-greedy action from the agent's own exploration stream.
    pub fn act(&mut self, obs: &Observation, epsilon: f64) -> Result<ActionPair> {
        let q = self.online.q_values(&obs.values)?;
        Ok(select_action(&q, epsilon, &mut self.rng))
    }

    /// Store an environment transition.
    pub fn observe(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// Reseed the exploration/sampling stream. The trainer derives one
    /// seed per episode so resumed runs explore identically given
    /// identical parameters.
    pub fn reseed_exploration(&mut self, seed: u64) {
        self.rng = stream_rng(seed, stream::AGENT);
    }

    /// True once the buffer can serve warmup-sized batches.
    pub fn ready_to_train(&self) -> bool {
        self.buffer.len() >= self.cfg.warmup
    }

    /// Copy online parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone_params();
        self.syncs += 1;
    }

    /// Sample a batch and apply one learner update; syncs the target
    /// network every `sync_period` updates.
    pub fn train_step(&mut self) -> Result<TrainStats> {
        if !self.ready_to_train() {
            return Err(Error::Usage(format!(
                "train_step before warmup: buffered {} of {}",
                self.buffer.len(),
                self.cfg.warmup
            )));
        }
        let batch = self.buffer.sample(self.cfg.batch_size, &mut self.rng)?;
        let stats = self.train_on_batch(&batch)?;
        if self.train_steps % self.cfg.sync_period == 0 {
            self.sync_target();
        }
        Ok(stats)
    }

    /// One learner update on an explicit batch. The loss is the mean over
    /// transitions and both branches of the Huber TD error; gradients flow
    /// only through each branch's chosen action.
    pub fn train_on_batch(&mut self, batch: &[Transition]) -> Result<TrainStats> {
        let targets = double_q_targets(
            batch,
            &self.online,
            &self.target,
            self.cfg.gamma,
            self.cfg.variant,
        )?;

        let delta = self.cfg.huber_delta;
        let norm = 1.0 / (2.0 * batch.len() as f64);
        let mut grads = self.online.zero_grads();
        let mut loss = 0.0;
        let mut abs_td = 0.0;
        for (t, y) in batch.iter().zip(&targets) {
            let tape = self.online.forward(&t.obs.values)?;
            let e_lin = tape.q.q_linear[t.action.linear_idx()] - y.linear;
            let e_ang = tape.q.q_angular[t.action.angular_idx()] - y.angular;
            loss += (huber(e_lin, delta) + huber(e_ang, delta)) * norm;
            abs_td += (e_lin.abs() + e_ang.abs()) * norm;

            let mut g_linear = [0.0; N_LINEAR];
            let mut g_angular = [0.0; N_ANGULAR];
            g_linear[t.action.linear_idx()] = huber_grad(e_lin, delta) * norm;
            g_angular[t.action.angular_idx()] = huber_grad(e_ang, delta) * norm;
            self.online
                .backward(&tape, &g_linear, &g_angular, &mut grads)?;
        }

        if !loss.is_finite() || !grads.is_finite() {
            let r_min = batch.iter().map(|t| t.reward).fold(f64::INFINITY, f64::min);
            let r_max = batch
                .iter()
                .map(|t| t.reward)
                .fold(f64::NEG_INFINITY, f64::max);
            return Err(Error::Training(format!(
                "non-finite loss at train step {}: loss={loss}, rewards in [{r_min}, {r_max}], \
                 batch={}, epsilon={:.4}",
                self.train_steps,
                batch.len(),
                self.epsilon()
            )));
        }

        self.online.apply_adam(&grads, &mut self.adam)?;
        self.train_steps += 1;
        Ok(TrainStats {
            loss,
            mean_abs_td: abs_td,
        })
    }
}
