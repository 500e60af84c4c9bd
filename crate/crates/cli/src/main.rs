use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use churn_cli::{cmd_compare, cmd_eda, cmd_evaluate, cmd_train, Overrides, Selection, Subset};

#[derive(Parser)]
#[command(
    name = "churn",
    version,
    about = "Telco churn exploration, training and comparison"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment statistics and plot data.
    Eda(Common),
    /// Fit the pipeline and one model, score it on the test split.
    Train(Common),
    /// Score every selected model on the same split.
    Compare(Common),
    /// Score a saved model.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Model file written by `train`.
        #[arg(long = "model-file")]
        model_file: PathBuf,
        /// Defaults to pipeline.json next to the model file.
        #[arg(long)]
        pipeline: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        subset: Subset,
    },
}

#[derive(Args)]
struct Common {
    /// key = value file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long, visible_alias = "max-epochs")]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    cost_fp: Option<f64>,
    #[arg(long)]
    cost_fn: Option<f64>,
    /// mlp, logreg, sgd, tree, forest or all.
    #[arg(long)]
    model: Option<Selection>,
}

impl Common {
    fn resolve(self, command: &str) -> Result<churn_cli::RunConfig> {
        let base = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                Overrides::parse_file(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Overrides::default(),
        };
        let flags = Overrides {
            data: self.data,
            out: self.out,
            seed: self.seed,
            test_fraction: self.test_fraction,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            patience: self.patience,
            cost_fp: self.cost_fp,
            cost_fn: self.cost_fn,
            model: self.model,
        };
        base.merge(flags).resolve(command)
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Eda(c) => {
            let cfg = c.resolve("eda")?;
            let s = cmd_eda(&cfg)?;
            println!(
                "{} rows, churn rate {:.4}; mean MonthlyCharges churned {:.2}, retained {:.2} ({:+.1}%)",
                s.dataset.rows,
                s.dataset.churn_fraction,
                s.charges.churned.mean,
                s.charges.retained.mean,
                s.charges.premium_percent
            );
            println!("wrote {}", cfg.out.display());
        }
        Command::Train(c) => {
            let cfg = c.resolve("train")?;
            let run = cmd_train(&cfg)?;
            print!("{}", run.report);
            println!("wrote {}", cfg.out.display());
        }
        Command::Compare(c) => {
            let cfg = c.resolve("compare")?;
            print!("{}", cmd_compare(&cfg)?.to_text());
            println!("wrote {}", cfg.out.display());
        }
        Command::Evaluate {
            common,
            model_file,
            pipeline,
            subset,
        } => {
            let cfg = common.resolve("evaluate")?;
            let report = cmd_evaluate(&cfg, &model_file, pipeline.as_deref(), subset)?;
            print!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
