use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use distill_mt::cli::{self, CycleArgs};
use distill_mt::config::Config;
use distill_mt::Result;

#[derive(Parser)]
#[command(name = "distill-mt", version, about = "Iterative distillation of compact translation models")]
struct Args {
    /// TOML config, or a manifest.json from an earlier run to replay it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Derive every seed in the config from this one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to a subdirectory of $DISTILL_MT_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the toy corpora.
    Corpus,
    /// Train the base model on the human seed.
    TrainBase {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Score a checkpoint on the test set at 0, 1 and 4 shots.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run the distillation cycles.
    Cycle {
        #[arg(long, required_unless_present = "resume")]
        corpus: Option<PathBuf>,
        #[arg(long, required_unless_present = "resume")]
        base: Option<PathBuf>,
        /// JSON plan to use instead of the one derived from the config.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Continue the run in --out after its last completed iteration.
        #[arg(long)]
        resume: bool,
        /// Stop after this many completed iterations.
        #[arg(long, hide = true)]
        stop_after: Option<u32>,
    },
    /// Compare completed runs in a table.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<Config> {
    let mut cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = seed {
        cfg.reseed(s);
    }
    Ok(cfg)
}

fn run(args: Args) -> Result<()> {
    let cfg = load_config(args.config.as_deref(), args.seed)?;
    let out = args.out.as_deref();
    match args.command {
        Command::Corpus => cli::cmd_corpus(&cfg, &cli::resolve_out(out, "corpus")?),
        Command::TrainBase { corpus } => cli::cmd_train_base(&cfg, &corpus, &cli::resolve_out(out, "base")?),
        Command::Eval { corpus, checkpoint } => {
            for (shots, score) in cli::cmd_eval(&cfg, &corpus, &checkpoint)? {
                println!("{shots}-shot\t{score:.2}");
            }
            Ok(())
        }
        Command::Cycle {
            corpus,
            base,
            plan,
            resume,
            stop_after,
        } => {
            let cycle = CycleArgs {
                corpus,
                base,
                plan,
                resume,
                stop_after,
            };
            cli::cmd_cycle(&cfg, &cycle, &cli::resolve_out(out, "run")?)
        }
        Command::Report { runs } => {
            print!("{}", cli::cmd_report(&runs, out)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("distill-mt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
