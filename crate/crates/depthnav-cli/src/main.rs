//! depthnav command line: train, evaluate, compare variants, check
//! gradients, and render trajectories.

mod render;

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use depthnav::agent::{NetworkPreset, Variant};
use depthnav::config::RunConfig;
use depthnav::neuro::grad_check;
use depthnav::rng::{stream_rng, stream};
use depthnav::sim::WorldMap;
use depthnav::trainer::stats::write_atomic;
use depthnav::trainer::{compare_variants, evaluate, load_checkpoint, train, SensorPipeline};

#[derive(Parser)]
#[command(
    name = "depthnav",
    version,
    about = "Depth-scan obstacle avoidance trainer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent (optionally two curriculum stages).
    Train(TrainArgs),
    /// Run greedy evaluation episodes from a checkpoint.
    Eval(EvalArgs),
    /// Train several variants across seeds and compare learning speed.
    Compare(CompareArgs),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Render a world plus pose log into an SVG trajectory figure.
    Render(RenderArgs),
}

/// Flags shared by the commands that resolve a full run configuration.
/// File values override defaults; flags override the file.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Run-configuration TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stage-1 world file override.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Stage-2 world file override.
    #[arg(long)]
    world2: Option<PathBuf>,
    /// Stage-1 episode count override.
    #[arg(long)]
    episodes: Option<u32>,
    /// Stage-2 episode count override.
    #[arg(long)]
    episodes2: Option<u32>,
    /// Agent variant override (dqn, ddqn, d3qn).
    #[arg(long)]
    variant: Option<String>,
    /// Network preset override (linear, dense, conv).
    #[arg(long)]
    preset: Option<String>,
    /// Disable sensor corruption (clean-scan ablation).
    #[arg(long)]
    no_corruption: bool,
    /// Episodes-to-threshold moving-average target override.
    #[arg(long)]
    threshold: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.run.out_dir = out.clone();
        }
        if let Some(world) = &self.world {
            cfg.worlds.stage1 = world.clone();
        }
        if let Some(world2) = &self.world2 {
            cfg.worlds.stage2 = Some(world2.clone());
        }
        if let Some(eps) = self.episodes {
            cfg.run.episodes_stage1 = eps;
        }
        if let Some(eps) = self.episodes2 {
            cfg.run.episodes_stage2 = eps;
        }
        if let Some(variant) = &self.variant {
            cfg.agent.variant = variant.clone();
        }
        if let Some(preset) = &self.preset {
            cfg.network.preset = preset.clone();
        }
        if let Some(threshold) = self.threshold {
            cfg.run.threshold = threshold;
        }
        if self.no_corruption {
            cfg.sensor.enabled = false;
        }
        // Environment overrides: output directory and thread count only.
        if let Ok(dir) = std::env::var("DEPTHNAV_OUT_DIR") {
            cfg.run.out_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Resume from a checkpoint written by a previous run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// `--episodes` sets the greedy episode count here (default 100).
    #[command(flatten)]
    config: ConfigArgs,
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Write one pose-log CSV per episode into the output directory.
    #[arg(long)]
    dump_poses: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated variants to compare.
    #[arg(long, default_value = "dqn,ddqn,d3qn")]
    variants: String,
    /// Seeds per variant.
    #[arg(long, default_value_t = 5)]
    seeds: u32,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Preset to check: linear, dense, conv, or all.
    #[arg(long, default_value = "all")]
    preset: String,
    /// Random instances per preset.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Observation width fed to the presets.
    #[arg(long, default_value_t = 64)]
    input_len: usize,
}

#[derive(Args)]
struct RenderArgs {
    /// World file for the backdrop geometry.
    #[arg(long)]
    world: PathBuf,
    /// Pose-log CSV (header x,y,theta).
    #[arg(long)]
    poses: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
}

fn init_threads() {
    if let Ok(n) = std::env::var("DEPTHNAV_THREADS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let report = train(&cfg, args.resume.as_deref())?;
    println!(
        "trained {} episodes ({} env steps); final ma_return_100 {:.3}{}",
        report.episodes,
        report.env_steps,
        report.final_ma_return,
        match report.episodes_to_threshold {
            Some(e) => format!("; threshold {} reached at episode {e}", cfg.run.threshold),
            None => format!("; threshold {} not reached", cfg.run.threshold),
        }
    );
    println!("learning curve: {}", report.curve_path.display());
    println!("final checkpoint: {}", report.final_checkpoint.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let (mut agent, meta) = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    if meta.input_len != cfg.input_len() {
        bail!(
            "checkpoint expects {} inputs but the configured sensor produces {} \
             (n_rays * stack_k)",
            meta.input_len,
            cfg.input_len()
        );
    }
    let world = Arc::new(WorldMap::load(&cfg.worlds.stage1)?);
    let pipeline = SensorPipeline::from_config(&cfg);
    let n_episodes = args.config.episodes.unwrap_or(100);
    let mut poses: Option<Vec<Vec<depthnav::sim::RobotState>>> = args.dump_poses.then(Vec::new);
    let metrics = evaluate(
        &mut agent,
        world,
        cfg.env_config(),
        &pipeline,
        n_episodes,
        cfg.run.seed,
        poses.as_mut(),
    )?;

    std::fs::create_dir_all(&cfg.run.out_dir)
        .with_context(|| format!("creating {}", cfg.run.out_dir.display()))?;
    let json = serde_json::to_string_pretty(&metrics)?;
    write_atomic(cfg.run.out_dir.join("eval_metrics.json"), json.as_bytes())?;
    if let Some(tracks) = poses {
        for (i, track) in tracks.iter().enumerate() {
            let path = cfg.run.out_dir.join(format!("poses_ep{i:04}.csv"));
            write_atomic(path, render::pose_log_csv(track).as_bytes())?;
        }
    }
    println!(
        "evaluated {} episodes on {}: mean return {:.3}, collision-free {:.1}%, mean steps {:.1}",
        metrics.episodes,
        cfg.worlds.stage1.display(),
        metrics.mean_return,
        metrics.collision_free_rate * 100.0,
        metrics.mean_steps
    );
    println!(
        "metrics: {}",
        cfg.run.out_dir.join("eval_metrics.json").display()
    );
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let variants: Vec<Variant> = args
        .variants
        .split(',')
        .map(|s| s.trim().parse::<Variant>().map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    let report = compare_variants(&cfg, &variants, args.seeds)?;
    std::fs::create_dir_all(&cfg.run.out_dir)
        .with_context(|| format!("creating {}", cfg.run.out_dir.display()))?;
    report.write_artifacts(&cfg.run.out_dir)?;

    println!(
        "compared {:?} over {} seeds, {} episodes/run, threshold {}",
        variants.iter().map(|v| v.as_str()).collect::<Vec<_>>(),
        report.seeds,
        report.episodes_per_run,
        report.threshold
    );
    for s in &report.summary {
        println!(
            "  {:>4}: reached {}/{}; median episodes-to-threshold {}; median final ma {:.3}",
            s.variant.as_str(),
            s.reached_threshold,
            s.cells,
            s.median_episodes_to_threshold
                .map_or("not reached".to_string(), |m| format!("{m:.0}")),
            s.median_final_ma_return
        );
    }
    println!(
        "artifacts: {} and comparison_summary.json",
        cfg.run.out_dir.join("comparison.csv").display()
    );
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let presets: Vec<NetworkPreset> = match args.preset.as_str() {
        "all" => vec![
            NetworkPreset::Linear,
            NetworkPreset::Dense,
            NetworkPreset::Conv,
        ],
        name => vec![name.parse()?],
    };
    let mut worst_overall = 0.0f64;
    let mut failed = false;
    for preset in presets {
        // Trunk plus a representative 5-wide head, checked as one stack.
        let mut specs = preset.trunk_specs(args.input_len);
        let hidden = match preset {
            NetworkPreset::Linear => args.input_len,
            NetworkPreset::Dense => 128,
            NetworkPreset::Conv => 512,
        };
        specs.push(depthnav::neuro::LayerSpec::Dense {
            inputs: hidden,
            outputs: 5,
        });
        let mut rng = stream_rng(0xC0FFEE, stream::INIT);
        let worst = grad_check(&specs, args.trials, &mut rng)?;
        // Pure dense stacks sit near f64 roundoff; conv+relu tolerates
        // finite-difference truncation.
        let tolerance = match preset {
            NetworkPreset::Linear | NetworkPreset::Dense => 1e-6,
            NetworkPreset::Conv => 1e-4,
        };
        let ok = worst < tolerance;
        failed |= !ok;
        worst_overall = worst_overall.max(worst);
        println!(
            "gradcheck {:>6}: max relative error {worst:.3e} (tolerance {tolerance:.0e}) {}",
            preset.as_str(),
            if ok { "ok" } else { "FAILED" }
        );
    }
    if failed {
        bail!("gradient check failed (worst {worst_overall:.3e})");
    }
    Ok(())
}

fn cmd_render(args: &RenderArgs) -> Result<()> {
    let world = WorldMap::load(&args.world)?;
    let text = std::fs::read_to_string(&args.poses)
        .with_context(|| format!("reading pose log {}", args.poses.display()))?;
    let poses = render::parse_pose_log(&text)?;
    render::render_to_file(&world, &poses, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> std::process::ExitCode {
    init_threads();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Render(args) => cmd_render(args),
    };
    match result {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::from(1)
        }
    }
}
