//! Command-line front end: single training runs, hyperparameter sweeps,
//! the LQR benchmark, metric verification, and manifest replay.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use ars::ars_core::{train, ArsConfig, StopCondition, TrainOptions};
use ars::env::EnvDef;
use ars::harness::{
    self, grid_preset, run_lqr_bench, sweep, GridSpec, LqrBenchSpec, SeedSpec, SweepSpec,
    GRID_PRESETS,
};
use ars::policy::ArsVersion;
use ars::rng::DEFAULT_NOISE_TABLE_LEN;

#[derive(Parser)]
#[command(
    name = "ars",
    version,
    about = "Derivative-free random search over linear policies, with an LQR benchmark suite"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy on a built-in environment.
    Train(TrainArgs),
    /// Run a hyperparameter grid over a set of seeds.
    Sweep(SweepArgs),
    /// Stabilization-frequency and relative-cost benchmark on an LQR
    /// instance, against the model-based nominal baseline.
    LqrBench(LqrBenchArgs),
    /// Recompute every metric in an output directory from the curve files
    /// and verify the stored summary.
    Report(ReportArgs),
    /// Re-run a sweep from its manifest; outputs are byte-identical.
    Replay(ReplayArgs),
    /// List the named hyperparameter-grid presets.
    Presets(PresetsArgs),
}

#[derive(Args)]
struct EnvArgs {
    /// Environment: lqr-paper, quadratic, point-mass, or lqr-file:<path>.
    #[arg(long, default_value = "quadratic")]
    env: String,
    /// Per-step bonus subtracted during training rollouts (default: the
    /// environment's own survival bonus).
    #[arg(long)]
    train_bonus: Option<f64>,
}

impl EnvArgs {
    fn resolve(&self) -> anyhow::Result<EnvDef> {
        let name = self.env.parse()?;
        Ok(EnvDef { name, train_bonus: self.train_bonus })
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Step size.
    #[arg(long, default_value_t = 0.02)]
    alpha: f64,
    /// Exploration noise scale.
    #[arg(long, default_value_t = 0.02)]
    nu: f64,
    /// Directions sampled per iteration.
    #[arg(long, default_value_t = 8)]
    num_directions: usize,
    /// Top directions kept for the update (default: all).
    #[arg(long)]
    top_b: Option<usize>,
    /// Algorithm version: v1, v1-t, v2, v2-t.
    #[arg(long, default_value = "v1")]
    version: String,
    /// Rollout horizon.
    #[arg(long, default_value_t = 300)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    master_seed: u64,
    #[arg(long, default_value_t = DEFAULT_NOISE_TABLE_LEN)]
    noise_table_len: usize,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<ArsConfig> {
        let version: ArsVersion = self.version.parse()?;
        Ok(ArsConfig {
            alpha: self.alpha,
            num_directions: self.num_directions,
            nu: self.nu,
            top_b: self.top_b.unwrap_or(self.num_directions),
            version,
            horizon: self.horizon,
            master_seed: self.master_seed,
            noise_table_len: self.noise_table_len,
        })
    }
}

#[derive(Args)]
struct StopArgs {
    #[arg(long)]
    max_iterations: Option<u64>,
    #[arg(long)]
    max_episodes: Option<u64>,
    #[arg(long)]
    max_timesteps: Option<u64>,
    /// Stop once an evaluation reaches this mean reward.
    #[arg(long)]
    reward_threshold: Option<f64>,
}

impl StopArgs {
    fn resolve(&self) -> StopCondition {
        StopCondition {
            max_iterations: self.max_iterations,
            max_episodes: self.max_episodes,
            max_timesteps: self.max_timesteps,
            reward_threshold: self.reward_threshold,
        }
    }
}

#[derive(Args)]
struct SeedArgs {
    /// Explicit seed list, comma separated.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Number of seeds to sample uniformly from [seed-lo, seed-hi).
    #[arg(long)]
    seed_count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed_lo: u64,
    #[arg(long, default_value_t = 1000)]
    seed_hi: u64,
    /// Seed of the seed sampler itself.
    #[arg(long, default_value_t = 0)]
    meta_seed: u64,
}

impl SeedArgs {
    fn resolve(&self) -> anyhow::Result<SeedSpec> {
        match (self.seeds.is_empty(), self.seed_count) {
            (false, None) => Ok(SeedSpec::List(self.seeds.clone())),
            (true, Some(count)) => Ok(SeedSpec::Sample {
                count,
                lo: self.seed_lo,
                hi: self.seed_hi,
                meta_seed: self.meta_seed,
            }),
            (false, Some(_)) => bail!("--seeds and --seed-count are mutually exclusive"),
            (true, None) => bail!("either --seeds or --seed-count is required"),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    stop: StopArgs,
    #[arg(long, default_value_t = 10)]
    eval_every: u64,
    #[arg(long, default_value_t = 100)]
    eval_rollouts: usize,
    /// Worker threads; 0 uses the available parallelism.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Directory for curve.jsonl and train_config.json.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write the final policy checkpoint here.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Attach gain snapshots to evaluated curve points.
    #[arg(long, default_value_t = false)]
    record_gains: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.02")]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.02")]
    nus: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "8")]
    num_directions: Vec<usize>,
    /// Top-direction counts; applies to the -t versions only.
    #[arg(long, value_delimiter = ',')]
    top_bs: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "v1")]
    versions: Vec<String>,
    /// Use a named grid preset for (alphas, nus, num-directions, top-bs).
    #[arg(long)]
    grid_preset: Option<String>,
    #[command(flatten)]
    seeds: SeedArgs,
    #[command(flatten)]
    stop: StopArgs,
    #[arg(long, default_value_t = 300)]
    horizon: usize,
    #[arg(long, default_value_t = DEFAULT_NOISE_TABLE_LEN)]
    noise_table_len: usize,
    #[arg(long, default_value_t = 10)]
    eval_every: u64,
    #[arg(long, default_value_t = 100)]
    eval_rollouts: usize,
    /// Reward threshold for the time-to-threshold summary columns.
    #[arg(long)]
    threshold: Option<f64>,
    /// Timestep budget for the averaged-max-reward summary column.
    #[arg(long)]
    metric_budget: Option<u64>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct LqrBenchArgs {
    /// LQR environment: lqr-paper or lqr-file:<path>.
    #[arg(long, default_value = "lqr-paper")]
    env: String,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    seeds: SeedArgs,
    /// Sample-budget grid in training timesteps, comma separated.
    #[arg(long, value_delimiter = ',')]
    budgets: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    eval_every: u64,
    #[arg(long, default_value_t = 1)]
    eval_rollouts: usize,
    /// Rollout length used by the nominal baseline's excitation data.
    #[arg(long, default_value_t = 10)]
    nominal_rollout_len: usize,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a previous sweep.
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct PresetsArgs {
    /// Print one preset as JSON instead of listing all.
    #[arg(long)]
    name: Option<String>,
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let env = args.env.resolve()?;
    let config = args.config.resolve()?;
    let opts = TrainOptions {
        stop: args.stop.resolve(),
        eval_every: args.eval_every,
        eval_rollouts: args.eval_rollouts,
        workers: args.workers,
        record_gain_snapshots: args.record_gains,
    };
    let result = train(&config, &env, &opts)?;
    for record in &result.records {
        if let Some(reward) = record.eval_reward {
            println!(
                "iter {:>6}  episodes {:>8}  timesteps {:>10}  eval {reward}",
                record.iteration + 1,
                record.episodes_so_far,
                record.timesteps_so_far
            );
        }
    }
    println!(
        "done: {} iterations, {} episodes, {} timesteps ({} eval episodes)",
        result.records.len(),
        result.counters.episodes,
        result.counters.timesteps,
        result.counters.eval_episodes
    );
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        let curve = harness::curve_from_records(&result.records);
        harness::io::write_curve_jsonl(&dir.join("curve.jsonl"), &curve)?;
        harness::io::write_json(&dir.join("train_config.json"), &(&config, &env, &opts))?;
        println!("curve written to {}", dir.join("curve.jsonl").display());
    }
    if let Some(path) = &args.checkpoint {
        result.params.save(path)?;
        println!("checkpoint written to {}", path.display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let versions = args
        .versions
        .iter()
        .map(|v| v.parse::<ArsVersion>().map_err(Into::into))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let grid = match &args.grid_preset {
        Some(name) => {
            let preset = grid_preset(name)
                .with_context(|| format!("unknown grid preset {name:?}; see `ars presets`"))?;
            GridSpec {
                alphas: preset.alphas.to_vec(),
                nus: preset.nus.to_vec(),
                num_directions: preset.num_directions.to_vec(),
                top_bs: preset.top_bs.to_vec(),
                versions,
            }
        }
        None => GridSpec {
            alphas: args.alphas.clone(),
            nus: args.nus.clone(),
            num_directions: args.num_directions.clone(),
            top_bs: args.top_bs.clone(),
            versions,
        },
    };
    let spec = SweepSpec {
        env: args.env.resolve()?,
        grid,
        seeds: args.seeds.resolve()?,
        horizon: args.horizon,
        noise_table_len: args.noise_table_len,
        stop: args.stop.resolve(),
        eval_every: args.eval_every,
        eval_rollouts: args.eval_rollouts,
        threshold: args.threshold,
        metric_budget: args.metric_budget,
        record_gain_snapshots: false,
    };
    let out = sweep::run_experiment(&spec, &args.out_dir, args.workers)?;
    println!(
        "swept {} grid points x {} seeds; outputs in {}",
        out.manifest.grid_points.len(),
        out.manifest.seeds.len(),
        args.out_dir.display()
    );
    for row in out.summary.iter().filter(|r| r.scope == "mean") {
        println!(
            "grid {:>3} {} alpha={} nu={} N={} b={}: mean final {:.4}, mean best {:.4}",
            row.grid_index,
            row.version,
            row.alpha,
            row.nu,
            row.num_directions,
            row.top_b,
            row.final_eval_reward,
            row.best_eval_reward
        );
    }
    Ok(())
}

fn cmd_lqr_bench(args: LqrBenchArgs) -> anyhow::Result<()> {
    let env = EnvDef { name: args.env.parse()?, train_bonus: None };
    let mut budgets = args.budgets.clone();
    if budgets.is_empty() {
        budgets = (1..=10).map(|i| i * 20_000).collect();
    }
    let seeds = match args.seeds.resolve()? {
        SeedSpec::List(seeds) => seeds,
        sample => sample.resolve()?,
    };
    let spec = LqrBenchSpec {
        env,
        config: args.config.resolve()?,
        seeds,
        budgets,
        eval_every: args.eval_every,
        eval_rollouts: args.eval_rollouts,
        nominal_rollout_len: args.nominal_rollout_len,
    };
    let out = run_lqr_bench(&spec, &args.out_dir, args.workers)?;
    println!("budget      ars_stable  median_relcost  nominal_stable");
    for row in &out.rows {
        println!(
            "{:>10}  {:>10.2}  {:>14}  {:>14.2}",
            row.budget_timesteps,
            row.ars_stable_fraction,
            row.relcost_p50.map_or("censored".into(), |v| format!("{v:.4}")),
            row.nominal_stable_fraction
        );
    }
    println!("report written to {}", args.out_dir.join(harness::lqr_bench::LQR_REPORT_FILE).display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    sweep::verify_summary(&args.dir)?;
    let summary: Vec<sweep::SummaryRow> =
        harness::io::read_csv(&args.dir.join(sweep::SUMMARY_FILE))?;
    println!("summary verified: {} rows match their recomputation from curves", summary.len());
    for row in summary.iter().filter(|r| r.scope == "mean") {
        println!(
            "grid {:>3} {} alpha={} nu={} N={} b={}: mean final {:.4}, mean best {:.4}",
            row.grid_index,
            row.version,
            row.alpha,
            row.nu,
            row.num_directions,
            row.top_b,
            row.final_eval_reward,
            row.best_eval_reward
        );
    }
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> anyhow::Result<()> {
    let out = sweep::replay_manifest(&args.manifest, &args.out_dir, args.workers)?;
    println!(
        "replayed {} runs into {}; summary verified",
        out.manifest.entries.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_presets(args: PresetsArgs) -> anyhow::Result<()> {
    match args.name {
        Some(name) => {
            let preset = grid_preset(&name)
                .with_context(|| format!("unknown grid preset {name:?}"))?;
            println!("{}", serde_json::to_string_pretty(preset)?);
        }
        None => {
            for p in GRID_PRESETS {
                println!(
                    "{:<16} alphas {:?}, nus {:?}, N {:?}, b {:?}",
                    p.name, p.alphas, p.nus, p.num_directions, p.top_bs
                );
            }
        }
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train(args) => cmd_train(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::LqrBench(args) => cmd_lqr_bench(args),
        Command::Report(args) => cmd_report(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Presets(args) => cmd_presets(args),
    }
}
