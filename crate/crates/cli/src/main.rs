//! `saferl`: train, evaluate, plot, and self-verify the safety-filtered RL
//! stack. Exit code 0 on success; failures print one diagnostic line on
//! stderr and exit nonzero.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use saferl_core::harness::{
    calibrate_dob, evaluate, load_checkpoint, render_plots, run_gradcheck, run_qp_check, train,
    FilterMode, RunConfig, RunLog,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "saferl", version, about = "Safety-filtered reinforcement learning harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Filter mode override.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<FilterMode>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<FilterMode, String> {
    s.parse()
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                RunConfig::parse(&text).context("parsing configuration")?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = self.mode {
            cfg.filter_mode = mode;
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the training loop and write runlog/checkpoint/config artifacts.
    Train(ConfigArgs),
    /// Evaluate a trained checkpoint deterministically.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Path to a checkpoint.json produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of evaluation episodes.
        #[arg(long, default_value_t = 10)]
        episodes: u32,
    },
    /// Render reward and cost curves from one or more run logs.
    Plot {
        /// runlog.jsonl files.
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Directory for reward.svg and cost.svg.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Estimate the observer's empirical error bound on the configured task.
    CalibrateDob {
        #[command(flatten)]
        config: ConfigArgs,
        /// Rollout length in steps.
        #[arg(long, default_value_t = 2000)]
        steps: u32,
    },
    /// Verify the QP solver against the dense grid oracle.
    QpCheck {
        /// Number of random instances.
        #[arg(long, default_value_t = 100)]
        instances: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Verify analytic network gradients against finite differences.
    Gradcheck {
        /// Number of random networks.
        #[arg(long, default_value_t = 50)]
        nets: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the annotated default configuration.
    Config,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let out = train(&cfg).context("training run failed")?;
            let last = out.log.records.last();
            println!(
                "trained mode={} seed={} iterations={} wall_time={:.1}s",
                cfg.filter_mode,
                cfg.seed,
                out.log.records.len(),
                out.wall_time.as_secs_f64()
            );
            if let Some(r) = last {
                println!(
                    "final: reward={:.3} cost={:.3} violations={} interventions={:.3}",
                    r.mean_episode_reward, r.mean_episode_cost, r.violations, r.intervention_rate
                );
            }
            if let Some(dir) = &cfg.out {
                println!("artifacts written to {}", dir.display());
            }
            Ok(())
        }
        Command::Eval { config, checkpoint, episodes } => {
            let cfg = config.resolve()?;
            let (policy, residual) =
                load_checkpoint(&checkpoint, &cfg).context("loading checkpoint")?;
            let summary =
                evaluate(&policy, residual.as_ref(), &cfg, episodes).context("evaluation failed")?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::Plot { logs, out } => {
            let mut parsed = Vec::new();
            for path in &logs {
                parsed.push(
                    RunLog::read_file(path)
                        .with_context(|| format!("reading {}", path.display()))?,
                );
            }
            let (reward, cost) = render_plots(&parsed);
            std::fs::create_dir_all(&out)?;
            let rp = out.join("reward.svg");
            let cp = out.join("cost.svg");
            std::fs::write(&rp, reward)?;
            std::fs::write(&cp, cost)?;
            println!("wrote {} and {}", rp.display(), cp.display());
            Ok(())
        }
        Command::CalibrateDob { config, steps } => {
            let cfg = config.resolve()?;
            let report = calibrate_dob(&cfg, steps).context("calibration failed")?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            println!(
                "suggested dob.error_bound = {:.6} (p99 over {} steps)",
                report.suggested_bound, report.steps
            );
            Ok(())
        }
        Command::QpCheck { instances, seed } => {
            let out = run_qp_check(instances, seed);
            println!("{}", serde_json::to_string_pretty(&out)?);
            if !out.pass {
                bail!("qp-check failed");
            }
            println!("qp-check: PASS");
            Ok(())
        }
        Command::Gradcheck { nets, seed } => {
            let out = run_gradcheck(nets, seed);
            println!("{}", serde_json::to_string_pretty(&out)?);
            if !out.pass {
                bail!("gradcheck failed");
            }
            println!("gradcheck: PASS");
            Ok(())
        }
        Command::Config => {
            print!("{}", RunConfig::default().render());
            Ok(())
        }
    }
}
