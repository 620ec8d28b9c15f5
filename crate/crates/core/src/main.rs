use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tsslbp::layers::Geometry;
use tsslbp::network::{build_layers, NetworkSpec};
use tsslbp::neuron::NeuronConfig;
use tsslbp::oracle::suite::{loss_battery, phi_equivalence, shift_battery};
use tsslbp::train::session::manifest_for;
use tsslbp::train::{evaluate_checkpoint, profile_checkpoint, run_training, RunConfig};

#[derive(Parser)]
#[command(
    name = "tsslbp",
    version,
    about = "Train and inspect spiking networks with spike-timing backpropagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `[train] seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Process batch samples one at a time on a single thread.
        #[arg(long)]
        serial: bool,
    },
    /// Report accuracy and loss of a checkpoint on a dataset directory.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Run config; defaults to the manifest written next to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check the gradient machinery against independent oracles.
    Gradcheck {
        #[arg(long, value_enum)]
        case: Option<Case>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Histogram of per-neuron spike counts over test samples.
    Sparsity {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Dataset directory; defaults to the test set of the run config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the resolved layer shapes of an architecture string.
    ArchParse {
        arch: String,
        /// Input shape (`N`, `HxW` or `CxHxW`) when the string does not start with one.
        #[arg(long)]
        input: Option<Geometry>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Case {
    Phi,
    Shift,
    Loss,
}

fn load_config(explicit: Option<&Path>, checkpoint: &Path) -> tsslbp::Result<RunConfig> {
    match explicit {
        Some(p) => RunConfig::load(p),
        None => {
            let manifest = manifest_for(checkpoint);
            let text = std::fs::read_to_string(&manifest).map_err(|source| tsslbp::Error::Io {
                path: manifest.clone(),
                source,
            })?;
            RunConfig::parse(&text, &manifest, manifest.parent().unwrap_or(Path::new("")))
        }
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn gradcheck(case: Option<Case>, seed: u64) -> bool {
    let mut ok = true;
    if case.is_none() || case == Some(Case::Phi) {
        let r = phi_equivalence(1000, seed);
        let pass = r.passes(1e-12);
        println!(
            "{} phi: direct formula vs backward pass: {r} (tol 1e-12)",
            verdict(pass)
        );
        ok &= pass;
    }
    if case.is_none() || case == Some(Case::Shift) {
        let r = shift_battery(20, seed, 1e-3, 100);
        let pass = r.median_relative_error <= 0.3;
        println!(
            "{} shift: predicted vs measured firing-time shift: {r} (tol median 0.3)",
            verdict(pass)
        );
        ok &= pass;
    }
    if case.is_none() || case == Some(Case::Loss) {
        let r = loss_battery(100, seed, &[1e-3, 5e-4, 2.5e-4]);
        let pass = r.max_relative_error <= 1e-5 && r.orders.iter().all(|o| (o - 2.0).abs() < 0.25);
        println!("{} loss: central differences: {r} (tol 1e-5, order 2)", verdict(pass));
        ok &= pass;
    }
    ok
}

fn run(cli: Cli) -> tsslbp::Result<bool> {
    match cli.command {
        Command::Train { config, seed, serial } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            cfg.train.serial |= serial;
            let out = run_training(&cfg)?;
            for m in &out.log {
                let acc = m.test_acc.map_or("-".into(), |a| format!("{:.2}%", 100.0 * a));
                println!(
                    "epoch {:>3}  loss {:.5}  test acc {acc}  {} ms",
                    m.epoch, m.train_loss, m.wall_ms
                );
            }
            println!("metrics: {}", out.metrics.display());
            println!("checkpoint: {}", out.final_checkpoint.display());
            Ok(true)
        }
        Command::Eval {
            checkpoint,
            data,
            config,
        } => {
            let cfg = load_config(config.as_deref(), &checkpoint)?;
            let set = cfg.load_dir(&data)?;
            let r = evaluate_checkpoint(&cfg, &checkpoint, &set)?;
            println!(
                "samples {}  correct {}  accuracy {:.2}%  mean loss {:.5}",
                r.samples,
                r.correct,
                100.0 * r.accuracy,
                r.mean_loss
            );
            Ok(true)
        }
        Command::Gradcheck { case, seed } => Ok(gradcheck(case, seed)),
        Command::Sparsity {
            checkpoint,
            samples,
            data,
            config,
        } => {
            let cfg = load_config(config.as_deref(), &checkpoint)?;
            let set = match data {
                Some(d) => cfg.load_dir(&d)?,
                None => cfg.load_test()?,
            };
            print!("{}", profile_checkpoint(&cfg, &checkpoint, &set, samples)?.render());
            Ok(true)
        }
        Command::ArchParse { arch, input } => {
            let (input, layers) = build_layers(&arch, input)?;
            let net = NetworkSpec {
                input,
                layers,
                neuron: NeuronConfig::default(),
                n_steps: 1,
            };
            print!("{}", net.describe());
            if let Err(e) = net.validate() {
                println!("note: not trainable as is: {e}");
            }
            println!("trainable weights: {}", net.parameter_count());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
