use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use csrnet::bench::{
    cmd_bench_epoch, cmd_bench_inference, cmd_size, cmd_train, write_json, BenchEpochConfig, DatasetSpec,
    ExperimentConfig, Sweep, DEFAULT_GAMMA,
};
use csrnet::sparsity::Seed;
use csrnet::tensor::parallel::THREADS_ENV;
use csrnet::train::Backend;
use csrnet::Error;

#[derive(Parser)]
#[command(name = "csrnet", version, about = "Sparse MLP training and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write per-epoch records plus a summary.
    Train {
        #[command(flatten)]
        exp: ExpArgs,
        /// Also export epoch records as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Time training epochs per backend, density and sweep point.
    BenchEpoch {
        #[command(flatten)]
        exp: ExpArgs,
        /// Densities to sweep; defaults to --density.
        #[arg(long, value_delimiter = ',')]
        densities: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "sparse,masked")]
        backends: Vec<Backend>,
        /// Depth sweep: numbers of hidden layers of --hidden units.
        #[arg(long, value_delimiter = ',', conflicts_with = "widths")]
        depths: Vec<usize>,
        /// Width sweep: hidden widths for --depth hidden layers.
        #[arg(long, value_delimiter = ',')]
        widths: Vec<usize>,
        #[arg(long, default_value_t = 1024)]
        hidden: usize,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        /// Skip points whose estimated footprint exceeds this many bytes
        /// (suffixes K, M, G accepted).
        #[arg(long, value_parser = parse_bytes)]
        memory_limit: Option<u64>,
    },
    /// Time single-example inference.
    BenchInference {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
    },
    /// Report predicted and on-disk model size; --out keeps the archive.
    Size {
        #[command(flatten)]
        exp: ExpArgs,
    },
}

#[derive(Args)]
struct ExpArgs {
    #[arg(long, value_delimiter = ',', default_value = "3072,1024,512,10")]
    layers: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    #[arg(long, default_value = "sparse")]
    backend: Backend,
    /// Defaults to 100 for training and 3 for epoch benchmarks.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 100)]
    batch_size: usize,
    /// Initial learning rate; picked from the density when omitted.
    #[arg(long)]
    lr: Option<f64>,
    /// Fractions of the run after which the rate decays; "none" keeps it constant.
    #[arg(long, default_value = "0.5,0.75", value_parser = parse_milestones)]
    lr_milestones: Milestones,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    lr_gamma: f64,
    #[arg(long, default_value_t = Seed::default().0)]
    seed: u64,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    #[arg(long, default_value = "synthetic:train=1000,test=200")]
    dataset: DatasetSpec,
    /// Random flip and crop of training images (CIFAR-10 only).
    #[arg(long)]
    augment: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone)]
struct Milestones(Vec<f64>);

fn parse_milestones(s: &str) -> Result<Milestones, String> {
    if s.is_empty() || s == "none" {
        return Ok(Milestones(Vec::new()));
    }
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()
        .map(Milestones)
}

fn parse_bytes(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (num, mult) = match s.chars().last().map(|c| c.to_ascii_uppercase()) {
        Some('K') => (&s[..s.len() - 1], 1u64 << 10),
        Some('M') => (&s[..s.len() - 1], 1 << 20),
        Some('G') => (&s[..s.len() - 1], 1 << 30),
        _ => (s, 1),
    };
    num.parse::<u64>().map(|n| n * mult).map_err(|e| format!("'{s}': {e}"))
}

impl ExpArgs {
    fn into_config(self, default_epochs: usize) -> ExperimentConfig {
        ExperimentConfig {
            layers: self.layers,
            density: self.density,
            backend: self.backend,
            epochs: self.epochs.unwrap_or(default_epochs),
            batch_size: self.batch_size,
            lr: self.lr,
            lr_milestones: self.lr_milestones.0,
            lr_gamma: self.lr_gamma,
            seed: Seed(self.seed),
            dataset: self.dataset,
            augment: self.augment,
            threads: self.threads,
            out: self.out,
        }
    }
}

fn print_json<S: serde::Serialize>(value: &S) {
    println!("{}", serde_json::to_string_pretty(value).expect("value serializes"));
}

fn run(cli: Cli) -> csrnet::Result<()> {
    match cli.command {
        Command::Train { exp, csv } => {
            let report = cmd_train(&exp.into_config(100), csv.as_deref())?;
            print_json(&report);
        }
        Command::BenchEpoch {
            exp,
            densities,
            backends,
            depths,
            widths,
            hidden,
            depth,
            memory_limit,
        } => {
            let base = exp.into_config(3);
            let sweep = if !depths.is_empty() {
                Sweep::Depth { depths, width: hidden }
            } else if !widths.is_empty() {
                Sweep::Width { widths, depth }
            } else {
                Sweep::Densities
            };
            let config = BenchEpochConfig {
                densities: if densities.is_empty() {
                    vec![base.density]
                } else {
                    densities
                },
                backends,
                sweep,
                epochs: base.epochs,
                memory_limit,
                base,
            };
            let records = cmd_bench_epoch(&config, |r| {
                println!("{}", serde_json::to_string(r).expect("record serializes"));
            })?;
            if let Some(out) = &config.base.out {
                csrnet::bench::write_jsonl(out, &records)?;
            }
        }
        Command::BenchInference { exp, repeats } => {
            let config = exp.into_config(0);
            let report = cmd_bench_inference(&config, repeats)?;
            if let Some(out) = &config.out {
                write_json(out, &report)?;
            }
            print_json(&report);
        }
        Command::Size { exp } => {
            print_json(&cmd_size(&exp.into_config(0))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
