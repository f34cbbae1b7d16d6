use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use tactile_recog::harness::{
    check_library, group_curve, object_summary, run_compare, train_library,
    write_compare_outputs, write_episode_csv, ExperimentConfig, HarnessError, POLICIES,
};
use tactile_recog::model::{load_library, save_library};
use tactile_recog::planner::{run_episode, Policy};

#[derive(Parser)]
#[command(
    name = "tactile-recog",
    version,
    about = "Touch-only object recognition experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the object library and write the model file
    Train {
        /// Experiment configuration (JSON); omit for the built-in desk set
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model output path
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one recognition episode against a trained model
    Recognize {
        /// Experiment configuration (JSON); omit for the built-in desk set
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trained model path
        #[arg(long)]
        model: PathBuf,
        /// Label of the object actually presented
        #[arg(long)]
        object: String,
        /// Wrist policy: tree, greedy, or random
        #[arg(long, default_value = "tree")]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Episode CSV output path
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every (object, policy, seed) cell and write all outputs
    Compare {
        /// Experiment configuration (JSON); omit for the built-in desk set
        #[arg(long)]
        config: Option<PathBuf>,
        /// Reuse a trained model instead of training from scratch
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig, HarnessError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn parse_policy(s: &str) -> Result<Policy, HarnessError> {
    match s {
        "tree" => Ok(Policy::Tree),
        "greedy" => Ok(Policy::Greedy),
        "random" => Ok(Policy::Random),
        other => Err(HarnessError::BadConfig(format!(
            "unknown policy `{other}` (expected tree, greedy, or random)"
        ))),
    }
}

fn run(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Train { config, out } => {
            let cfg = load_config(config.as_ref())?;
            let lib = train_library(&cfg)?;
            save_library(&lib, &out)?;
            for o in lib.objects() {
                println!("{}", object_summary(o));
            }
            println!(
                "pooled action vocabulary: {} keys over {} poses",
                lib.vocab().len(),
                lib.pose_count()
            );
            println!("model written to {}", out.display());
            Ok(())
        }
        Command::Recognize {
            config,
            model,
            object,
            policy,
            seed,
            out,
        } => {
            let cfg = load_config(config.as_ref())?;
            let lib = load_library(&model)?;
            check_library(&cfg, &lib)?;
            let class = cfg.class_of(&object)?;
            let policy = parse_policy(&policy)?;
            let mesh = cfg.mesh(class)?;
            let episode = run_episode(
                &lib,
                &mesh,
                class,
                policy,
                &cfg.planner,
                cfg.max_iterations,
                seed,
            )?;
            write_episode_csv(&out, &cfg.provenance(), &lib, &episode.records)?;
            let last = episode.records.last().expect("episode records initial grasp");
            println!(
                "{}: {} iterations, final prediction {} ({}), episode written to {}",
                object,
                last.iter,
                lib.label(last.predicted),
                if last.correct { "correct" } else { "wrong" },
                out.display()
            );
            Ok(())
        }
        Command::Compare {
            config,
            model,
            out_dir,
        } => {
            let cfg = load_config(config.as_ref())?;
            let lib = match model {
                Some(p) => {
                    let lib = load_library(&p)?;
                    check_library(&cfg, &lib)?;
                    lib
                }
                None => train_library(&cfg)?,
            };
            let results = run_compare(&cfg, &lib)?;
            write_compare_outputs(&cfg, &lib, &results, &out_dir)?;
            for (object, spec) in cfg.objects.iter().enumerate() {
                for &policy in &POLICIES {
                    let ends_correct = results
                        .cells
                        .iter()
                        .filter(|c| c.object == object && c.policy == policy)
                        .filter(|c| c.episode.records.last().is_some_and(|r| r.correct))
                        .count();
                    let curve = group_curve(&results, object, policy);
                    println!(
                        "{} {}: {}/{} episodes end correct, {} iterations max",
                        spec.label,
                        policy.name(),
                        ends_correct,
                        cfg.seeds,
                        curve.iters.len().saturating_sub(1),
                    );
                }
            }
            println!("outputs written to {}", out_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
