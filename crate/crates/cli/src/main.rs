use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use synergy_cli::{config, report, run, Overrides, RunConfig};
use synergy_core::learner::MethodKind;
use synergy_core::Precision;

#[derive(Parser)]
#[command(name = "synergy", version, about = "Continual learning with dual memories and stochastic consolidation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one method over one or more seeds.
    Run(RunArgs),
    /// Run the ablation matrix with shared hyperparameters.
    Ablate(RunArgs),
    /// Stream inspection.
    Stream {
        #[command(subcommand)]
        command: StreamCommand,
    },
    /// Build a comparison table from aggregate.json files.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum StreamCommand {
    /// Print labels and input checksums of the first batches.
    Dump {
        #[command(flatten)]
        run: RunArgs,
        /// Number of batches.
        #[arg(short, long, default_value_t = 10)]
        k: usize,
        /// Which seed of the run to use.
        #[arg(long, default_value_t = 0)]
        seed_index: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<MethodKind>,
    /// One of r-mnist, mnist-360, seq-mnist, gcil-u, gcil-l, synthetic, synthetic-joint.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    buffer_size: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    precision: Option<Precision>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let ov = Overrides {
            method: self.method,
            scenario: self.scenario.clone(),
            buffer_size: self.buffer_size,
            seed: self.seed,
            seeds: self.seeds,
            data_dir: self.data_dir.clone(),
            out: self.out.clone(),
            precision: self.precision,
        };
        config::load(self.config.as_deref(), &ov)
    }
}

#[derive(Args)]
struct ReportArgs {
    /// aggregate.json files or directories searched recursively.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Metric shown in the cells.
    #[arg(long, default_value = "avg_accuracy")]
    metric: String,
    /// Emit CSV instead of Markdown.
    #[arg(long)]
    csv: bool,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_logging(level: &str) {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_secs()
        .init();
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            init_logging(&cfg.log_level);
            let report = run::run_experiment(&cfg)?;
            run::write_outputs(&report, &cfg.output_dir)?;
            for (name, s) in &report.aggregate.metrics {
                println!("{name}: {:.2} ± {:.2}", s.mean, s.std);
            }
            println!("results in {}", cfg.output_dir.display());
        }
        Command::Ablate(args) => {
            let cfg = args.resolve()?;
            init_logging(&cfg.log_level);
            let out = run::run_ablation(&cfg, Some(&cfg.output_dir))?;
            print!("{}", report::emit_markdown(&out, "avg_accuracy"));
        }
        Command::Stream { command: StreamCommand::Dump { run: args, k, seed_index } } => {
            let cfg = args.resolve()?;
            init_logging(&cfg.log_level);
            let lines: Vec<String> = run::stream_dump(&cfg, seed_index, k)?.iter().map(|v| v.to_string()).collect();
            let text = lines.join("\n") + "\n";
            match &args.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join("stream_dump.jsonl");
                    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                }
                None => print!("{text}"),
            }
        }
        Command::Report(args) => {
            init_logging("warn");
            let aggs = report::collect(&args.paths)?;
            anyhow::ensure!(!aggs.is_empty(), "no aggregate.json found");
            let text = if args.csv {
                report::emit_csv(&aggs, &args.metric)
            } else {
                report::emit_markdown(&aggs, &args.metric)
            };
            match args.out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
