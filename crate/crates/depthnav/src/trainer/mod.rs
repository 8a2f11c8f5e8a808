//! Episode orchestration: training runs with the two-stage curriculum,
//! greedy evaluation, variant comparison, metrics, and checkpointing.

pub mod checkpoint;
pub mod stats;

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, CheckpointMeta};
pub use stats::{EpisodeStats, MovingAverage, CURVE_HEADER, MA_WINDOW};

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, Transition, Variant};
use crate::config::RunConfig;
use crate::rng::{derive_seed, stream_rng};
use crate::sensor::{corrupt_scan, CorruptionConfig, ScanHistory};
use crate::sim::{Env, EnvConfig, RobotState, TerminalCause, WorldMap};
use crate::trainer::stats::{write_atomic, CurveWriter};
use crate::{Error, Result};

/// Stream tags for per-episode seed derivation.
mod ep_stream {
    pub const ENV: u64 = 0x100;
    pub const SENSOR: u64 = 0x200;
    pub const EXPLORE: u64 = 0x300;
    pub const AGENT_NS: u64 = 0x400;
}

/// Env spawn seed for one episode; a pure function of the run seed and
/// episode index so resumed runs replay the same spawn sequence.
fn episode_env_seed(run_seed: u64, episode: u32) -> u64 {
    derive_seed(derive_seed(run_seed, ep_stream::ENV), episode as u64)
}

fn episode_sensor_seed(run_seed: u64, episode: u32) -> u64 {
    derive_seed(derive_seed(run_seed, ep_stream::SENSOR), episode as u64)
}

fn episode_explore_seed(agent_seed: u64, episode: u32) -> u64 {
    derive_seed(derive_seed(agent_seed, ep_stream::EXPLORE), episode as u64)
}

/// Agent init/exploration namespace: depends on the variant so comparison
/// cells share env streams but never weight or exploration streams.
fn agent_seed_for(run_seed: u64, variant: Variant) -> u64 {
    let tag = match variant {
        Variant::Dqn => 1,
        Variant::Ddqn => 2,
        Variant::D3qn => 3,
    };
    derive_seed(run_seed, ep_stream::AGENT_NS + tag)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Scan-to-observation settings shared by training and evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SensorPipeline {
    pub corruption: CorruptionConfig,
    pub stack_k: usize,
    pub max_range: f64,
}

impl SensorPipeline {
    pub fn from_config(cfg: &RunConfig) -> Self {
        SensorPipeline {
            corruption: cfg.corruption_config(),
            stack_k: cfg.sensor.stack_k,
            max_range: cfg.env.max_range,
        }
    }
}

/// Result of one episode, before run-level bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub steps: u32,
    pub ret: f64,
    pub cause: TerminalCause,
    pub loss_mean: Option<f64>,
}

/// Run one episode: observe, corrupt, act, step until terminal. In train
/// mode transitions are buffered, the learner steps every `train_every`
/// environment steps after warmup, and target syncs follow the agent's
/// schedule. In eval mode epsilon is 0 and nothing learns.
pub fn run_episode(
    env: &mut Env,
    agent: &mut Agent,
    mode: Mode,
    pipeline: &SensorPipeline,
    sensor_rng: &mut ChaCha8Rng,
    reset_seed: Option<u64>,
    mut poses: Option<&mut Vec<RobotState>>,
) -> Result<EpisodeOutcome> {
    let scan = env.reset(reset_seed)?;
    let mut history = ScanHistory::new(pipeline.stack_k);
    history.push(corrupt_scan(
        &scan,
        &pipeline.corruption,
        pipeline.max_range,
        sensor_rng,
    ));
    let mut obs = history.observation(pipeline.max_range)?;
    if let Some(p) = poses.as_deref_mut() {
        p.push(*env.state());
    }

    let mut ret = 0.0;
    let mut loss_sum = 0.0;
    let mut loss_count = 0u32;
    loop {
        let epsilon = match mode {
            Mode::Train => agent.epsilon(),
            Mode::Eval => 0.0,
        };
        let action = agent.act(&obs, epsilon)?;
        let res = env.step(action)?;
        ret += res.reward;
        history.push(corrupt_scan(
            &res.observation,
            &pipeline.corruption,
            pipeline.max_range,
            sensor_rng,
        ));
        let next_obs = history.observation(pipeline.max_range)?;
        if let Some(p) = poses.as_deref_mut() {
            p.push(*env.state());
        }

        if mode == Mode::Train {
            agent.observe(Transition {
                obs,
                action,
                reward: res.reward,
                next_obs: next_obs.clone(),
                // Step-limit truncation keeps bootstrapping; only contact
                // cuts the return.
                terminal: res.terminal == TerminalCause::Collision,
            });
            agent.global_step += 1;
            if agent.ready_to_train() && agent.global_step % agent.cfg.train_every as u64 == 0 {
                let stats = agent.train_step()?;
                loss_sum += stats.loss;
                loss_count += 1;
            }
        }

        obs = next_obs;
        if res.terminal.is_terminal() {
            return Ok(EpisodeOutcome {
                steps: res.step_index,
                ret,
                cause: res.terminal,
                loss_mean: (loss_count > 0).then(|| loss_sum / loss_count as f64),
            });
        }
    }
}

/// Per-run artifacts and summary numbers from `train`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub episodes: u32,
    pub env_steps: u64,
    pub final_ma_return: f64,
    pub episodes_to_threshold: Option<u32>,
    pub out_dir: PathBuf,
    pub curve_path: PathBuf,
    pub final_checkpoint: PathBuf,
}

struct StageWorlds {
    stage1: Arc<WorldMap>,
    stage2: Option<Arc<WorldMap>>,
    episodes_stage1: u32,
    total: u32,
}

impl StageWorlds {
    fn load(cfg: &RunConfig) -> Result<Self> {
        let stage1 = Arc::new(WorldMap::load(&cfg.worlds.stage1)?);
        let stage2 = if cfg.run.episodes_stage2 > 0 {
            let path = cfg
                .worlds
                .stage2
                .as_ref()
                .ok_or_else(|| Error::Config("stage2 episodes without stage2 world".into()))?;
            Some(Arc::new(WorldMap::load(path)?))
        } else {
            None
        };
        Ok(StageWorlds {
            stage1,
            stage2,
            episodes_stage1: cfg.run.episodes_stage1,
            total: cfg.run.episodes_stage1 + cfg.run.episodes_stage2,
        })
    }

    fn world_for(&self, episode: u32) -> Arc<WorldMap> {
        if episode < self.episodes_stage1 {
            Arc::clone(&self.stage1)
        } else {
            Arc::clone(self.stage2.as_ref().expect("stage2 validated"))
        }
    }
}

/// Core training loop shared by `train` and `compare_variants`: runs
/// episodes `start..total`, invoking `on_episode` after each one.
fn run_training_loop(
    cfg: &RunConfig,
    worlds: &StageWorlds,
    agent: &mut Agent,
    run_seed: u64,
    start_episode: u32,
    mut on_episode: impl FnMut(&EpisodeStats, &Agent) -> Result<()>,
) -> Result<()> {
    let env_cfg: EnvConfig = cfg.env_config();
    let pipeline = SensorPipeline::from_config(cfg);
    let agent_seed = agent_seed_for(run_seed, agent.variant());
    let mut ma = MovingAverage::default();
    let mut current_world: Option<(bool, Env)> = None;

    for episode in start_episode..worlds.total {
        let stage2 = episode >= worlds.episodes_stage1;
        if current_world.as_ref().map(|(s, _)| *s) != Some(stage2) {
            let env = Env::new(worlds.world_for(episode), env_cfg, run_seed);
            current_world = Some((stage2, env));
        }
        let env = &mut current_world.as_mut().expect("env built above").1;

        let mut sensor_rng = stream_rng(episode_sensor_seed(run_seed, episode), 0);
        agent.reseed_exploration(episode_explore_seed(agent_seed, episode));
        let started = Instant::now();
        let outcome = run_episode(
            env,
            agent,
            Mode::Train,
            &pipeline,
            &mut sensor_rng,
            Some(episode_env_seed(run_seed, episode)),
            None,
        )
        .map_err(|e| Error::Training(format!("episode {episode}: {e}")))?;
        let wall_s = started.elapsed().as_secs_f64();

        let stats = EpisodeStats {
            episode,
            steps: outcome.steps,
            ret: outcome.ret,
            ma_return_100: ma.push(outcome.ret),
            loss_mean: outcome.loss_mean,
            epsilon: agent.epsilon(),
            terminal_cause: outcome.cause,
            wall_s,
        };
        on_episode(&stats, agent)?;
    }
    Ok(())
}

/// Train per the run configuration: stage-1 episodes then stage-2 episodes
/// continuing the same parameters and optimizer state. Writes the
/// learning-curve CSV incrementally, checkpoints on the configured
/// cadence (plus best-so-far and final), and echoes the resolved config
/// into the output directory.
///
/// With `resume`, training continues from the checkpoint's episode
/// counter; epsilon and step counters pick up exactly where they left
/// off (the moving-average window and replay buffer restart).
pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainReport> {
    cfg.validate()?;
    let worlds = StageWorlds::load(cfg)?;
    let out_dir = cfg.run.out_dir.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    write_atomic(out_dir.join("config.toml"), cfg.to_toml()?.as_bytes())?;

    let run_seed = cfg.run.seed;
    let (mut agent, start_episode) = match resume {
        None => (
            Agent::new(
                cfg.agent_config()?,
                cfg.preset()?,
                cfg.input_len(),
                agent_seed_for(run_seed, cfg.variant()?),
            )?,
            0u32,
        ),
        Some(path) => {
            let (agent, meta) = load_checkpoint_for(path, cfg.preset()?, cfg.input_len())?;
            if meta.variant != cfg.variant()? {
                return Err(Error::Checkpoint(format!(
                    "checkpoint variant {} does not match configured {}",
                    meta.variant.as_str(),
                    cfg.variant()?.as_str()
                )));
            }
            if meta.episode >= worlds.total {
                return Err(Error::Usage(format!(
                    "checkpoint already covers {} episodes, run budget is {}",
                    meta.episode, worlds.total
                )));
            }
            (agent, meta.episode)
        }
    };

    let curve_path = out_dir.join("learning_curve.csv");
    let mut curve = if resume.is_some() && curve_path.exists() {
        CurveWriter::append(&curve_path)?
    } else {
        CurveWriter::create(&curve_path)?
    };

    let ckpt_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let final_path = ckpt_dir.join("final.ckpt");
    let best_path = ckpt_dir.join("best.ckpt");

    let mut best_ma = f64::NEG_INFINITY;
    let mut episodes_to_threshold: Option<u32> = None;
    let mut env_steps: u64 = 0;
    let mut final_ma = 0.0;
    let threshold = cfg.run.threshold;
    let every = cfg.run.checkpoint_every.max(1);

    let save_with_meta = |agent: &Agent, path: &Path, episode: u32| -> Result<()> {
        save_checkpoint(agent, path)?;
        checkpoint::write_meta(
            path,
            &CheckpointMeta {
                format: 1,
                variant: agent.variant(),
                preset: agent.preset(),
                input_len: agent.input_len(),
                agent: agent.cfg,
                seed: run_seed,
                episode,
                global_step: agent.global_step,
                train_steps: agent.train_steps,
                syncs: agent.syncs,
                epsilon: agent.epsilon(),
            },
        )
    };

    let loop_result = run_training_loop(
        cfg,
        &worlds,
        &mut agent,
        run_seed,
        start_episode,
        |stats, agent| {
            curve.write(stats)?;
            env_steps += stats.steps as u64;
            final_ma = stats.ma_return_100;
            if episodes_to_threshold.is_none() && stats.ma_return_100 >= threshold {
                episodes_to_threshold = Some(stats.episode + 1);
            }
            let done = stats.episode + 1;
            if done % every == 0 {
                save_with_meta(agent, &ckpt_dir.join(format!("ep_{done:06}.ckpt")), done)?;
            }
            if stats.ma_return_100 > best_ma {
                best_ma = stats.ma_return_100;
                save_with_meta(agent, &best_path, done)?;
            }
            Ok(())
        },
    );
    if let Err(e) = loop_result {
        // Divergence or environment failure: params are still the last
        // accepted values, so persist them for post-mortem and resume.
        let _ = save_with_meta(&agent, &ckpt_dir.join("last_good.ckpt"), start_episode);
        return Err(e);
    }

    save_with_meta(&agent, &final_path, worlds.total)?;
    Ok(TrainReport {
        episodes: worlds.total,
        env_steps,
        final_ma_return: final_ma,
        episodes_to_threshold,
        out_dir,
        curve_path,
        final_checkpoint: final_path,
    })
}

/// Aggregate evaluation metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: u32,
    pub mean_return: f64,
    pub collision_free_rate: f64,
    pub mean_steps: f64,
    pub per_episode: Vec<EvalEpisode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub episode: u32,
    pub ret: f64,
    pub steps: u32,
    pub terminal_cause: TerminalCause,
}

/// Run `n_episodes` greedy episodes (epsilon = 0) with the given sensor
/// pipeline. Never mutates network parameters. Optionally collects the
/// pose trace of every episode for trajectory rendering.
pub fn evaluate(
    agent: &mut Agent,
    world: Arc<WorldMap>,
    env_cfg: EnvConfig,
    pipeline: &SensorPipeline,
    n_episodes: u32,
    seed: u64,
    mut poses_out: Option<&mut Vec<Vec<RobotState>>>,
) -> Result<EvalMetrics> {
    if n_episodes == 0 {
        return Err(Error::Usage("evaluate requires n_episodes > 0".into()));
    }
    let version_before = agent.online().version();
    let mut env = Env::new(world, env_cfg, seed);
    let mut per_episode = Vec::with_capacity(n_episodes as usize);
    let mut sum_return = 0.0;
    let mut sum_steps = 0u64;
    let mut clean = 0u32;
    for episode in 0..n_episodes {
        let mut sensor_rng = stream_rng(episode_sensor_seed(seed, episode), 0);
        let mut poses = poses_out.as_deref_mut().map(|_| Vec::new());
        let outcome = run_episode(
            &mut env,
            agent,
            Mode::Eval,
            pipeline,
            &mut sensor_rng,
            Some(episode_env_seed(seed, episode)),
            poses.as_mut(),
        )
        .map_err(|e| Error::Training(format!("eval episode {episode}: {e}")))?;
        sum_return += outcome.ret;
        sum_steps += outcome.steps as u64;
        if outcome.cause != TerminalCause::Collision {
            clean += 1;
        }
        if let (Some(sink), Some(p)) = (poses_out.as_deref_mut(), poses) {
            sink.push(p);
        }
        per_episode.push(EvalEpisode {
            episode,
            ret: outcome.ret,
            steps: outcome.steps,
            terminal_cause: outcome.cause,
        });
    }
    debug_assert_eq!(version_before, agent.online().version());
    Ok(EvalMetrics {
        episodes: n_episodes,
        mean_return: sum_return / n_episodes as f64,
        collision_free_rate: clean as f64 / n_episodes as f64,
        mean_steps: sum_steps as f64 / n_episodes as f64,
        per_episode,
    })
}

/// One (variant, seed) training cell from a comparison run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareCell {
    pub variant: Variant,
    pub seed_index: u32,
    pub episodes_to_threshold: Option<u32>,
    pub final_ma_return: f64,
    #[serde(skip)]
    pub curve: Vec<EpisodeStats>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub cells: u32,
    pub reached_threshold: u32,
    /// Median episodes until the moving-average return first crossed the
    /// threshold; `None` when the median cell never reached it.
    pub median_episodes_to_threshold: Option<f64>,
    pub median_final_ma_return: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub threshold: f64,
    pub episodes_per_run: u32,
    pub seeds: u32,
    pub cells: Vec<CompareCell>,
    pub summary: Vec<VariantSummary>,
}

fn median_sorted(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Train every requested variant on `n_seeds` seeds with shared
/// environment streams and report learning-speed and plateau metrics.
/// Cells run in parallel; results are deterministic per (variant, seed).
pub fn compare_variants(
    cfg: &RunConfig,
    variants: &[Variant],
    n_seeds: u32,
) -> Result<ComparisonReport> {
    if variants.len() < 2 {
        return Err(Error::Usage("compare needs at least 2 variants".into()));
    }
    if n_seeds < 3 {
        return Err(Error::Usage("compare needs at least 3 seeds".into()));
    }
    cfg.validate()?;

    let mut cell_ids = Vec::new();
    for &variant in variants {
        for seed_index in 0..n_seeds {
            cell_ids.push((variant, seed_index));
        }
    }

    let cells: Vec<CompareCell> = cell_ids
        .par_iter()
        .map(|&(variant, seed_index)| -> Result<CompareCell> {
            let mut cell_cfg = cfg.clone();
            cell_cfg.agent.variant = variant.as_str().to_string();
            let worlds = StageWorlds::load(&cell_cfg)?;
            // Env/sensor streams depend only on the row seed, so variants
            // see identical spawn sequences; weights and exploration get
            // variant-specific streams.
            let run_seed = derive_seed(cfg.run.seed, 0x9000 + seed_index as u64);
            let mut agent = Agent::new(
                cell_cfg.agent_config()?,
                cell_cfg.preset()?,
                cell_cfg.input_len(),
                agent_seed_for(run_seed, variant),
            )?;
            let mut curve = Vec::with_capacity(worlds.total as usize);
            let mut episodes_to_threshold = None;
            let mut final_ma = 0.0;
            run_training_loop(
                &cell_cfg,
                &worlds,
                &mut agent,
                run_seed,
                0,
                |stats, _agent| {
                    if episodes_to_threshold.is_none()
                        && stats.ma_return_100 >= cell_cfg.run.threshold
                    {
                        episodes_to_threshold = Some(stats.episode + 1);
                    }
                    final_ma = stats.ma_return_100;
                    curve.push(stats.clone());
                    Ok(())
                },
            )?;
            Ok(CompareCell {
                variant,
                seed_index,
                episodes_to_threshold,
                final_ma_return: final_ma,
                curve,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = variants
        .iter()
        .map(|&variant| {
            let mine: Vec<&CompareCell> =
                cells.iter().filter(|c| c.variant == variant).collect();
            let reached = mine
                .iter()
                .filter(|c| c.episodes_to_threshold.is_some())
                .count() as u32;
            let budget = cfg.run.episodes_stage1 + cfg.run.episodes_stage2;
            // Censored median: not-reached counts as budget + 1 so a
            // variant that usually fails sorts last instead of vanishing.
            let med = median_sorted(
                mine.iter()
                    .map(|c| {
                        c.episodes_to_threshold
                            .map_or((budget + 1) as f64, f64::from)
                    })
                    .collect(),
            );
            VariantSummary {
                variant,
                cells: mine.len() as u32,
                reached_threshold: reached,
                median_episodes_to_threshold: (med <= budget as f64).then_some(med),
                median_final_ma_return: median_sorted(
                    mine.iter().map(|c| c.final_ma_return).collect(),
                ),
            }
        })
        .collect();

    Ok(ComparisonReport {
        threshold: cfg.run.threshold,
        episodes_per_run: cfg.run.episodes_stage1 + cfg.run.episodes_stage2,
        seeds: n_seeds,
        cells,
        summary,
    })
}

impl ComparisonReport {
    /// Long-format CSV: learning-curve columns prefixed by variant, seed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,seed,");
        out.push_str(CURVE_HEADER);
        out.push('\n');
        for cell in &self.cells {
            for row in &cell.curve {
                out.push_str(&format!(
                    "{},{},{}\n",
                    cell.variant.as_str(),
                    cell.seed_index,
                    row.csv_row()
                ));
            }
        }
        out
    }

    /// Write the combined CSV and a JSON summary into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        write_atomic(dir.join("comparison.csv"), self.to_csv().as_bytes())?;
        let summary = serde_json::to_string_pretty(&self)
            .map_err(|e| Error::Config(format!("summary encode: {e}")))?;
        write_atomic(dir.join("comparison_summary.json"), summary.as_bytes())
    }
}

/// FNV-1a hash over every online-network parameter's bit pattern.
pub fn params_hash(agent: &Agent) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bits: u32| {
        for byte in bits.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    let nets = {
        let mut v = vec![agent.online().trunk.clone()];
        v.extend(agent.online().heads.iter().cloned());
        v
    };
    for net in &nets {
        for layer in net.layers() {
            for w in layer.w.iter().chain(layer.b.iter()) {
                eat(w.to_bits());
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{AgentConfig, EpsilonSchedule, NetworkPreset, QNetwork};
    use crate::sim::{ActionPair, Rect, Shape, Vec2, WorldFile, WORLD_FORMAT};

    fn open_world(half: f64) -> Arc<WorldMap> {
        Arc::new(
            WorldMap::from_file(WorldFile {
                format: WORLD_FORMAT,
                bounds: Rect::new(Vec2::new(-half, -half), Vec2::new(half, half)),
                obstacles: vec![],
                spawn_regions: vec![Rect::new(Vec2::new(-0.1, -0.1), Vec2::new(0.1, 0.1))],
            })
            .unwrap(),
        )
    }

    fn tiny_agent_cfg() -> AgentConfig {
        AgentConfig {
            warmup: 16,
            batch_size: 8,
            buffer_capacity: 512,
            sync_period: 50,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.1,
                horizon: 300,
            },
            learning_rate: 1e-3,
            ..AgentConfig::default()
        }
    }

    fn quiet_pipeline() -> SensorPipeline {
        SensorPipeline {
            corruption: CorruptionConfig::default(),
            stack_k: 1,
            max_range: 5.0,
        }
    }

    /// Stub whose greedy action is always (v=0.4, omega=0).
    fn straight_ahead_agent(input_len: usize) -> Agent {
        let mut agent = Agent::new(
            AgentConfig {
                variant: Variant::Dqn,
                warmup: 8,
                batch_size: 8,
                buffer_capacity: 64,
                ..AgentConfig::default()
            },
            NetworkPreset::Linear,
            input_len,
            1,
        )
        .unwrap();
        let mut stub = QNetwork::zeros(NetworkPreset::Linear, Variant::Dqn, input_len).unwrap();
        stub.set_head_biases(&[0.0, 1.0], &[0.0, 0.0, 1.0, 0.0, 0.0]);
        *agent.online_mut() = stub;
        agent.sync_target();
        agent
    }

    #[test]
    fn straight_policy_saturates_reward_bound() {
        // 100 m empty room: 500 straight steps cover 40 m, no collision.
        let world = open_world(50.0);
        let cfg = EnvConfig::default();
        let mut env = Env::new(world, cfg, 7);
        let mut agent = straight_ahead_agent(cfg.n_rays);
        let mut rng = stream_rng(1, 0);
        let out = run_episode(
            &mut env,
            &mut agent,
            Mode::Eval,
            &quiet_pipeline(),
            &mut rng,
            Some(3),
            None,
        )
        .unwrap();
        assert_eq!(out.steps, 500);
        assert_eq!(out.cause, TerminalCause::StepLimit);
        assert!((out.ret - 40.0).abs() < 1e-9, "return {}", out.ret);
    }

    #[test]
    fn cramped_world_forces_early_collision() {
        // Closed 0.5 m box: whatever the policy, contact comes within a
        // few steps and the return is negative.
        let world = Arc::new(
            WorldMap::from_file(WorldFile {
                format: WORLD_FORMAT,
                bounds: Rect::new(Vec2::new(-0.25, -0.25), Vec2::new(0.25, 0.25)),
                obstacles: vec![],
                spawn_regions: vec![Rect::new(Vec2::new(-0.02, -0.02), Vec2::new(0.02, 0.02))],
            })
            .unwrap(),
        );
        let cfg = EnvConfig::default();
        for seed in 0..5 {
            let mut env = Env::new(Arc::clone(&world), cfg, seed);
            let mut agent = straight_ahead_agent(cfg.n_rays);
            let mut rng = stream_rng(seed, 0);
            let out = run_episode(
                &mut env,
                &mut agent,
                Mode::Eval,
                &quiet_pipeline(),
                &mut rng,
                Some(seed),
                None,
            )
            .unwrap();
            assert_eq!(out.cause, TerminalCause::Collision);
            assert!(out.steps <= 10, "steps {}", out.steps);
            assert!(out.ret < 0.0, "return {}", out.ret);
        }
    }

    #[test]
    fn pose_trace_has_steps_plus_one_vertices() {
        let world = open_world(50.0);
        let cfg = EnvConfig {
            max_steps: 40,
            ..EnvConfig::default()
        };
        let mut env = Env::new(world, cfg, 7);
        let mut agent = straight_ahead_agent(cfg.n_rays);
        let mut rng = stream_rng(1, 0);
        let mut poses = Vec::new();
        let out = run_episode(
            &mut env,
            &mut agent,
            Mode::Eval,
            &quiet_pipeline(),
            &mut rng,
            Some(3),
            Some(&mut poses),
        )
        .unwrap();
        assert_eq!(poses.len() as u32, out.steps + 1);
    }

    fn world_file(half: f64, with_box: bool) -> String {
        let obstacle = if with_box {
            r#"{ "type": "box", "min": [0.8, 0.8], "max": [1.6, 1.6] }"#
        } else {
            ""
        };
        format!(
            r#"{{
  "format": 1,
  "bounds": {{ "min": [{0}, {0}], "max": [{1}, {1}] }},
  "obstacles": [{obstacle}],
  "spawn_regions": [ {{ "min": [{2}, {2}], "max": [{3}, {3}] }} ]
}}"#,
            -half,
            half,
            -half + 0.5,
            half - 0.5
        )
    }

    fn small_run_config(dir: &Path, episodes: u32) -> RunConfig {
        let w1 = dir.join("a.world");
        let w2 = dir.join("b.world");
        std::fs::write(&w1, world_file(3.0, false)).unwrap();
        std::fs::write(&w2, world_file(3.0, true)).unwrap();
        let mut cfg = RunConfig::default();
        cfg.worlds.stage1 = w1;
        cfg.worlds.stage2 = Some(w2);
        cfg.run.episodes_stage1 = episodes;
        cfg.run.episodes_stage2 = 0;
        cfg.run.seed = 11;
        cfg.run.out_dir = dir.join("out");
        cfg.run.checkpoint_every = 4;
        cfg.env.n_rays = 16;
        cfg.env.max_steps = 30;
        cfg.agent.warmup = 16;
        cfg.agent.batch_size = 8;
        cfg.agent.buffer_capacity = 512;
        cfg.agent.sync_period = 50;
        cfg.agent.epsilon_horizon = 300;
        cfg.agent.learning_rate = 1e-3;
        cfg.network.preset = "linear".to_string();
        cfg
    }

    #[test]
    fn stage2_starts_from_stage1_final_params() {
        let dir = tempfile::tempdir().unwrap();
        let mut single = small_run_config(dir.path(), 6);
        single.run.episodes_stage2 = 0;
        let mut two_stage = single.clone();
        two_stage.run.episodes_stage2 = 4;

        let hash_after = |cfg: &RunConfig, upto: u32| -> u64 {
            let worlds = StageWorlds::load(cfg).unwrap();
            let mut agent = Agent::new(
                cfg.agent_config().unwrap(),
                cfg.preset().unwrap(),
                cfg.input_len(),
                agent_seed_for(cfg.run.seed, cfg.variant().unwrap()),
            )
            .unwrap();
            let mut hash = 0;
            run_training_loop(cfg, &worlds, &mut agent, cfg.run.seed, 0, |stats, agent| {
                if stats.episode + 1 == upto {
                    hash = params_hash(agent);
                }
                Ok(())
            })
            .unwrap();
            hash
        };

        // The two-stage run reaches the stage boundary with exactly the
        // parameters the single-stage run finishes with.
        let single_final = hash_after(&single, 6);
        let boundary = hash_after(&two_stage, 6);
        assert_eq!(single_final, boundary);
        assert_ne!(single_final, 0);
    }

    #[test]
    fn training_loop_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_run_config(dir.path(), 8);
        let run = || {
            let worlds = StageWorlds::load(&cfg).unwrap();
            let mut agent = Agent::new(
                cfg.agent_config().unwrap(),
                cfg.preset().unwrap(),
                cfg.input_len(),
                agent_seed_for(cfg.run.seed, cfg.variant().unwrap()),
            )
            .unwrap();
            let mut rows = Vec::new();
            run_training_loop(&cfg, &worlds, &mut agent, cfg.run.seed, 0, |stats, _| {
                let mut r = stats.clone();
                r.wall_s = 0.0;
                rows.push(r);
                Ok(())
            })
            .unwrap();
            rows
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn evaluate_never_mutates_parameters() {
        let world = open_world(4.0);
        let cfg = EnvConfig {
            n_rays: 16,
            max_steps: 50,
            ..EnvConfig::default()
        };
        let mut agent = Agent::new(
            AgentConfig {
                variant: Variant::D3qn,
                ..tiny_agent_cfg()
            },
            NetworkPreset::Linear,
            16,
            21,
        )
        .unwrap();
        let before = params_hash(&agent);
        let version_before = agent.online().version();
        let metrics = evaluate(
            &mut agent,
            world,
            cfg,
            &quiet_pipeline(),
            5,
            3,
            None,
        )
        .unwrap();
        assert_eq!(metrics.episodes, 5);
        assert_eq!(params_hash(&agent), before);
        assert_eq!(agent.online().version(), version_before);
    }

    #[test]
    fn evaluate_zero_episodes_is_usage_error() {
        let world = open_world(4.0);
        let mut agent = Agent::new(tiny_agent_cfg(), NetworkPreset::Linear, 64, 2).unwrap();
        let err = evaluate(
            &mut agent,
            world,
            EnvConfig::default(),
            &quiet_pipeline(),
            0,
            3,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Usage(_)), "{err}");
    }

    #[test]
    fn train_writes_one_row_per_episode_and_final_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_run_config(dir.path(), 8);
        let report = train(&cfg, None).unwrap();
        assert_eq!(report.episodes, 8);
        let text = std::fs::read_to_string(&report.curve_path).unwrap();
        assert_eq!(text.lines().count(), 9, "{text}");
        assert!(report.final_checkpoint.exists());
        assert!(cfg.run.out_dir.join("config.toml").exists());
        assert!(cfg.run.out_dir.join("checkpoints/ep_000004.ckpt").exists());
        assert!(cfg.run.out_dir.join("checkpoints/best.ckpt").exists());
    }

    #[test]
    fn dual_stage_and_degenerate_stage2() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_run_config(dir.path(), 4);
        cfg.run.episodes_stage2 = 3;
        let report = train(&cfg, None).unwrap();
        assert_eq!(report.episodes, 7);
        let text = std::fs::read_to_string(&report.curve_path).unwrap();
        assert_eq!(text.lines().count(), 8);
    }

    #[test]
    fn resume_continues_epsilon_and_counters() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_run_config(dir.path(), 8);
        train(&cfg, None).unwrap();
        let full = std::fs::read_to_string(cfg.run.out_dir.join("learning_curve.csv")).unwrap();

        // Fresh output dir; replay the first 4 episodes, then resume from
        // the ep 4 checkpoint.
        let mut cfg_half = cfg.clone();
        cfg_half.run.out_dir = dir.path().join("out_half");
        cfg_half.run.episodes_stage1 = 4;
        train(&cfg_half, None).unwrap();

        let mut cfg_resumed = cfg_half.clone();
        cfg_resumed.run.episodes_stage1 = 8;
        let ckpt = cfg_half.run.out_dir.join("checkpoints/ep_000004.ckpt");
        let report = train(&cfg_resumed, Some(&ckpt)).unwrap();
        assert_eq!(report.episodes, 8);

        let resumed = std::fs::read_to_string(cfg_resumed.run.out_dir.join("learning_curve.csv"))
            .unwrap();
        let parse = |text: &str| -> Vec<(u32, f64)> {
            text.lines()
                .skip(1)
                .map(|l| {
                    let f: Vec<&str> = l.split(',').collect();
                    (f[0].parse().unwrap(), f[5].parse().unwrap())
                })
                .collect()
        };
        let rows_full = parse(&full);
        let rows_resumed = parse(&resumed);
        assert_eq!(rows_resumed.len(), 8);
        // Episode indices continue without reset across the splice.
        assert_eq!(
            rows_resumed.iter().map(|r| r.0).collect::<Vec<_>>(),
            (0..8).collect::<Vec<_>>()
        );
        // Epsilon continues its decay across the splice: the first resumed
        // episode may not jump back toward the start value.
        assert!(rows_resumed[4].1 <= rows_resumed[3].1 + 1e-12);
        // The un-resumed prefix is bitwise identical.
        assert_eq!(rows_full[..4], rows_resumed[..4]);
    }

    #[test]
    fn compare_requires_enough_variants_and_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_run_config(dir.path(), 4);
        assert!(matches!(
            compare_variants(&cfg, &[Variant::D3qn], 3),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            compare_variants(&cfg, &[Variant::D3qn, Variant::Dqn], 2),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn compare_shares_env_streams_across_variants() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_run_config(dir.path(), 6);
        cfg.run.threshold = 1e9; // never reached; exercise the censored path
        let report = compare_variants(&cfg, &[Variant::Dqn, Variant::D3qn], 3).unwrap();
        assert_eq!(report.cells.len(), 6);
        for s in &report.summary {
            assert_eq!(s.reached_threshold, 0);
            assert!(s.median_episodes_to_threshold.is_none());
        }
        // Same seed row, different variants: identical spawn sequences
        // mean episode 0 starts from the same pose; returns may differ but
        // the curves exist for every cell.
        for cell in &report.cells {
            assert_eq!(cell.curve.len(), 6);
        }
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 1 + 6 * 6);
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median_sorted(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_sorted(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
