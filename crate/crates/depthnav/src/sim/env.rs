//! Episode context: reset, step, reward, and termination semantics.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::robot::{step_robot, ActionPair, RobotState};
use super::world::WorldMap;
use crate::rng::{stream_rng, stream};
use crate::{Error, Result};

/// A fixed-length vector of ray depths in meters.
pub type DepthScan = Vec<f64>;

/// Why (or whether) an episode has ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalCause {
    Running,
    Collision,
    StepLimit,
}

impl TerminalCause {
    pub fn is_terminal(self) -> bool {
        self != TerminalCause::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TerminalCause::Running => "running",
            TerminalCause::Collision => "collision",
            TerminalCause::StepLimit => "step_limit",
        }
    }
}

/// Geometry and timing knobs of the simulated sensor/episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Number of rays per scan, >= 2.
    pub n_rays: usize,
    /// Field of view in radians, centered on the heading.
    pub fov: f64,
    /// Depth clamp in meters.
    pub max_range: f64,
    /// Robot body radius in meters.
    pub robot_radius: f64,
    /// Control period in seconds.
    pub dt: f64,
    /// Episode step cap.
    pub max_steps: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            n_rays: 64,
            fov: PI / 2.0,
            max_range: 5.0,
            robot_radius: 0.2,
            dt: 0.2,
            max_steps: 500,
        }
    }
}

/// Collision penalty added when an episode terminates by contact.
pub const COLLISION_PENALTY: f64 = -10.0;

/// Result of one environment step. The scan is raw (pre-corruption).
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStepResult {
    pub observation: DepthScan,
    pub reward: f64,
    pub terminal: TerminalCause,
    pub step_index: u32,
}

/// Depth scan from `state` in `world`: `n_rays` bearings evenly spanning
/// `fov` around the heading, each clamped to `max_range`.
pub fn raycast_scan(
    world: &WorldMap,
    state: &RobotState,
    n_rays: usize,
    fov: f64,
    max_range: f64,
) -> DepthScan {
    debug_assert!(n_rays >= 2);
    debug_assert!(fov > 0.0 && fov <= 2.0 * PI);
    debug_assert!(max_range > 0.0);
    let origin = state.position();
    let step = fov / (n_rays - 1) as f64;
    (0..n_rays)
        .map(|k| {
            let bearing = state.theta - fov / 2.0 + k as f64 * step;
            world.raycast(origin, bearing, max_range)
        })
        .collect()
}

/// One episode of robot/world interaction. Single-writer; create one per
/// concurrent episode.
#[derive(Debug, Clone)]
pub struct Env {
    world: Arc<WorldMap>,
    cfg: EnvConfig,
    state: RobotState,
    step_index: u32,
    terminal: TerminalCause,
    spawn_rng: ChaCha8Rng,
}

impl Env {
    /// New episode context. `seed` drives spawn sampling; pass the run's
    /// root seed and the environment derives its own stream.
    pub fn new(world: Arc<WorldMap>, cfg: EnvConfig, seed: u64) -> Self {
        Env {
            world,
            cfg,
            state: RobotState::new(0.0, 0.0, 0.0, cfg.robot_radius),
            step_index: 0,
            terminal: TerminalCause::Running,
            spawn_rng: stream_rng(seed, stream::SPAWN),
        }
    }

    pub fn world(&self) -> &WorldMap {
        &self.world
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn step_index(&self) -> u32 {
        self.step_index
    }

    pub fn terminal(&self) -> TerminalCause {
        self.terminal
    }

    /// Scan from the current pose.
    pub fn scan(&self) -> DepthScan {
        raycast_scan(
            &self.world,
            &self.state,
            self.cfg.n_rays,
            self.cfg.fov,
            self.cfg.max_range,
        )
    }

    /// Place the robot at a uniformly sampled collision-free pose inside a
    /// spawn region and zero the step counter. With `Some(seed)` the spawn
    /// stream is reseeded, making the pose a pure function of the seed.
    pub fn reset(&mut self, seed: Option<u64>) -> Result<DepthScan> {
        if let Some(s) = seed {
            self.spawn_rng = ChaCha8Rng::seed_from_u64(s);
        }
        let regions = &self.world.spawn_regions;
        let total_area: f64 = regions.iter().map(|r| r.area()).sum();
        for _ in 0..1000 {
            // Region chosen proportionally to area so the union is uniform.
            let mut pick = self.spawn_rng.gen::<f64>() * total_area;
            let mut region = regions[regions.len() - 1];
            for r in regions {
                if pick < r.area() {
                    region = *r;
                    break;
                }
                pick -= r.area();
            }
            let x = self.spawn_rng.gen_range(region.min.x..region.max.x);
            let y = self.spawn_rng.gen_range(region.min.y..region.max.y);
            // Heading uniform over (-pi, pi].
            let theta = PI - 2.0 * PI * self.spawn_rng.gen::<f64>();
            let candidate = RobotState::new(x, y, theta, self.cfg.robot_radius);
            if !self.world.collides(&candidate) {
                self.state = candidate;
                self.step_index = 0;
                self.terminal = TerminalCause::Running;
                return Ok(self.scan());
            }
        }
        Err(Error::World(
            "no collision-free spawn pose found in 1000 attempts".into(),
        ))
    }

    /// Advance one control period. Errors if the episode already ended.
    pub fn step(&mut self, action: ActionPair) -> Result<EnvStepResult> {
        if self.terminal.is_terminal() {
            return Err(Error::Usage(
                "env_step called on a terminated episode; call reset first".into(),
            ));
        }
        self.state = step_robot(&self.state, action, self.cfg.dt);
        self.step_index += 1;

        let (reward, terminal) = if self.world.collides(&self.state) {
            (COLLISION_PENALTY, TerminalCause::Collision)
        } else {
            let r = action.v() * action.omega().cos() * self.cfg.dt;
            let t = if self.step_index >= self.cfg.max_steps {
                TerminalCause::StepLimit
            } else {
                TerminalCause::Running
            };
            (r, t)
        };
        self.terminal = terminal;

        Ok(EnvStepResult {
            observation: self.scan(),
            reward,
            terminal,
            step_index: self.step_index,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::geom::{Rect, Shape, Vec2};
    use crate::sim::world::{WorldFile, WORLD_FORMAT};

    fn square_room(half: f64) -> Arc<WorldMap> {
        Arc::new(
            WorldMap::from_file(WorldFile {
                format: WORLD_FORMAT,
                bounds: Rect::new(Vec2::new(-half, -half), Vec2::new(half, half)),
                obstacles: vec![],
                spawn_regions: vec![Rect::new(
                    Vec2::new(-half + 0.5, -half + 0.5),
                    Vec2::new(half - 0.5, half - 0.5),
                )],
            })
            .unwrap(),
        )
    }

    #[test]
    fn center_ray_hits_front_wall() {
        let world = square_room(2.0);
        let state = RobotState::new(0.0, 0.0, 0.0, 0.2);
        let scan = raycast_scan(&world, &state, 65, PI / 2.0, 10.0);
        // Odd ray count puts the middle ray exactly on the heading.
        assert!((scan[32] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_ray_reaches_corner() {
        let world = square_room(2.0);
        let state = RobotState::new(0.0, 0.0, 0.0, 0.2);
        // Two rays spanning a 90 degree fov: bearings at -45 and +45 degrees.
        let scan = raycast_scan(&world, &state, 2, PI / 2.0, 10.0);
        assert!((scan[0] - 2.0_f64 * 2.0_f64.sqrt()).abs() < 1e-9);
        assert!((scan[1] - 2.8284271247461903).abs() < 1e-6);
    }

    #[test]
    fn rays_clamp_in_large_room() {
        let world = square_room(5.0);
        let state = RobotState::new(0.0, 0.0, 0.3, 0.2);
        let scan = raycast_scan(&world, &state, 16, PI / 2.0, 3.0);
        assert!(scan.iter().all(|&d| d == 3.0));
    }

    #[test]
    fn straight_step_reward() {
        let world = square_room(10.0);
        let mut env = Env::new(world, EnvConfig::default(), 3);
        env.reset(Some(11)).unwrap();
        let res = env.step(ActionPair::new(1, 2).unwrap()).unwrap();
        // v=0.4, omega=0 -> r = 0.4 * cos(0) * 0.2
        assert_eq!(res.reward, 0.4 * 0.0_f64.cos() * 0.2);
        assert!((res.reward - 0.08).abs() < 1e-12);
        assert_eq!(res.terminal, TerminalCause::Running);
        assert_eq!(res.step_index, 1);
    }

    #[test]
    fn turning_step_reward_matches_formula() {
        let world = square_room(10.0);
        let mut env = Env::new(world, EnvConfig::default(), 3);
        env.reset(Some(11)).unwrap();
        let res = env.step(ActionPair::new(0, 0).unwrap()).unwrap();
        let expected = 0.2 * (PI / 6.0).cos() * 0.2;
        assert_eq!(res.reward, expected);
        assert!((expected - 0.034641).abs() < 1e-6);
    }

    #[test]
    fn collision_gives_penalty_and_terminates() {
        // Tiny closed box: any motion collides almost immediately.
        let world = Arc::new(
            WorldMap::from_file(WorldFile {
                format: WORLD_FORMAT,
                bounds: Rect::new(Vec2::new(-0.25, -0.25), Vec2::new(0.25, 0.25)),
                obstacles: vec![],
                spawn_regions: vec![Rect::new(Vec2::new(-0.02, -0.02), Vec2::new(0.02, 0.02))],
            })
            .unwrap(),
        );
        let mut env = Env::new(world, EnvConfig::default(), 5);
        env.reset(Some(1)).unwrap();
        let mut last = None;
        for _ in 0..10 {
            let res = env.step(ActionPair::new(1, 2).unwrap()).unwrap();
            let done = res.terminal;
            last = Some(res);
            if done.is_terminal() {
                break;
            }
        }
        let last = last.unwrap();
        assert_eq!(last.terminal, TerminalCause::Collision);
        assert_eq!(last.reward, COLLISION_PENALTY);
    }

    #[test]
    fn step_limit_reached_without_collision() {
        let world = square_room(200.0);
        let cfg = EnvConfig {
            max_steps: 5,
            ..EnvConfig::default()
        };
        let mut env = Env::new(world, cfg, 5);
        env.reset(Some(2)).unwrap();
        for i in 1..=5 {
            let res = env.step(ActionPair::new(0, 2).unwrap()).unwrap();
            if i < 5 {
                assert_eq!(res.terminal, TerminalCause::Running);
            } else {
                assert_eq!(res.terminal, TerminalCause::StepLimit);
                assert!(res.reward > 0.0);
            }
        }
        assert!(env.step(ActionPair::new(0, 2).unwrap()).is_err());
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let world = square_room(4.0);
        let mut env = Env::new(world, EnvConfig::default(), 0);
        env.reset(Some(7)).unwrap();
        let first = *env.state();
        env.reset(Some(7)).unwrap();
        assert_eq!(first, *env.state());
    }

    #[test]
    fn distinct_seeds_give_distinct_poses() {
        let world = square_room(4.0);
        let mut env = Env::new(world, EnvConfig::default(), 0);
        let mut distinct = 0;
        for s in 0..100u64 {
            env.reset(Some(s)).unwrap();
            let a = *env.state();
            env.reset(Some(s + 1000)).unwrap();
            let b = *env.state();
            if a != b {
                distinct += 1;
            }
        }
        assert!(distinct >= 99, "only {distinct}/100 pairs distinct");
    }

    #[test]
    fn degenerate_spawn_region_errors() {
        let world = Arc::new(
            WorldMap::from_file(WorldFile {
                format: WORLD_FORMAT,
                bounds: Rect::new(Vec2::new(-4.0, -4.0), Vec2::new(4.0, 4.0)),
                obstacles: vec![Shape::Box {
                    min: Vec2::new(-2.0, -2.0),
                    max: Vec2::new(2.0, 2.0),
                }],
                // Entirely inside the box: rejection sampling must exhaust.
                spawn_regions: vec![Rect::new(Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0))],
            })
            .unwrap(),
        );
        let mut env = Env::new(world, EnvConfig::default(), 9);
        let err = env.reset(Some(1)).unwrap_err();
        assert!(matches!(err, Error::World(_)), "{err}");
    }

    #[test]
    fn step_sequence_is_bitwise_deterministic() {
        let actions: Vec<ActionPair> = (0..40)
            .map(|i| ActionPair::new(i % 2, (i * 3) % 5).unwrap())
            .collect();
        let run = |seed: u64| -> Vec<EnvStepResult> {
            let mut env = Env::new(square_room(4.0), EnvConfig::default(), seed);
            env.reset(Some(seed)).unwrap();
            let mut out = Vec::new();
            for &a in &actions {
                let res = env.step(a).unwrap();
                let done = res.terminal.is_terminal();
                out.push(res);
                if done {
                    break;
                }
            }
            out
        };
        assert_eq!(run(13), run(13));
    }
}
