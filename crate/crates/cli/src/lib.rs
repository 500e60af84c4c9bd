//! Command implementations behind the `churn` binary.
//!
//! Each command takes a fully resolved [`RunConfig`], writes its outputs
//! into `config.out` and echoes the config there as `config.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use churn_core::eda::{self, ChargeDifferential, ClvDistribution, Histogram};
use churn_core::ingest::{self, DatasetSummary, RawDataset};
use churn_core::metrics::{CostModel, MetricReport};
use churn_core::nn::TrainHistory;
use churn_core::persist::{fit_model, ModelFile, ModelKind, ModelSettings, TrainedModel};
use churn_core::pipeline::{self, PipelineParams, Split, SplitSpec};

/// Which models a command runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Mlp,
    Logreg,
    Sgd,
    Tree,
    Forest,
    All,
}

impl Selection {
    pub fn kinds(self) -> Vec<ModelKind> {
        match self {
            Selection::All => ModelKind::ALL.to_vec(),
            Selection::Mlp => vec![ModelKind::Mlp],
            Selection::Logreg => vec![ModelKind::Logreg],
            Selection::Sgd => vec![ModelKind::Sgd],
            Selection::Tree => vec![ModelKind::Tree],
            Selection::Forest => vec![ModelKind::Forest],
        }
    }
}

impl FromStr for Selection {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mlp" => Selection::Mlp,
            "logreg" => Selection::Logreg,
            "sgd" => Selection::Sgd,
            "tree" => Selection::Tree,
            "forest" => Selection::Forest,
            "all" => Selection::All,
            other => {
                bail!("unknown model `{other}` (expected mlp, logreg, sgd, tree, forest or all)")
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub split: SplitSpec,
    pub models: ModelSettings,
    pub costs: CostModel,
    pub model: Selection,
}

/// Values a user may set, from a config file or from flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub test_fraction: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub patience: Option<usize>,
    pub cost_fp: Option<f64>,
    pub cost_fn: Option<f64>,
    pub model: Option<Selection>,
}

impl Overrides {
    /// Parses `key = value` lines. Keys are the long flag names without
    /// dashes; `#` starts a comment.
    pub fn parse_file(text: &str) -> Result<Overrides> {
        let mut o = Overrides::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
            let (key, value) = (key.trim().replace('_', "-"), value.trim());
            let ctx = || format!("line {}: bad value for `{key}`", n + 1);
            match key.as_str() {
                "data" => o.data = Some(value.into()),
                "out" => o.out = Some(value.into()),
                "seed" => o.seed = Some(value.parse().with_context(ctx)?),
                "test-fraction" => o.test_fraction = Some(value.parse().with_context(ctx)?),
                "epochs" | "max-epochs" => o.epochs = Some(value.parse().with_context(ctx)?),
                "batch-size" => o.batch_size = Some(value.parse().with_context(ctx)?),
                "lr" => o.lr = Some(value.parse().with_context(ctx)?),
                "weight-decay" => o.weight_decay = Some(value.parse().with_context(ctx)?),
                "patience" => o.patience = Some(value.parse().with_context(ctx)?),
                "cost-fp" => o.cost_fp = Some(value.parse().with_context(ctx)?),
                "cost-fn" => o.cost_fn = Some(value.parse().with_context(ctx)?),
                "model" => o.model = Some(value.parse().with_context(ctx)?),
                other => bail!("line {}: unknown key `{other}`", n + 1),
            }
        }
        Ok(o)
    }

    /// Values set in `over` win.
    pub fn merge(self, over: Overrides) -> Overrides {
        Overrides {
            data: over.data.or(self.data),
            out: over.out.or(self.out),
            seed: over.seed.or(self.seed),
            test_fraction: over.test_fraction.or(self.test_fraction),
            epochs: over.epochs.or(self.epochs),
            batch_size: over.batch_size.or(self.batch_size),
            lr: over.lr.or(self.lr),
            weight_decay: over.weight_decay.or(self.weight_decay),
            patience: over.patience.or(self.patience),
            cost_fp: over.cost_fp.or(self.cost_fp),
            cost_fn: over.cost_fn.or(self.cost_fn),
            model: over.model.or(self.model),
        }
    }

    /// Materializes every default. `command` names the default output
    /// directory, `runs/<command>-seed<seed>`.
    pub fn resolve(self, command: &str) -> Result<RunConfig> {
        let seed = self.seed.unwrap_or(42);
        let mut models = ModelSettings::default();
        let mlp = &mut models.mlp;
        mlp.seed = seed;
        mlp.max_epochs = self.epochs.unwrap_or(mlp.max_epochs);
        mlp.batch_size = self.batch_size.unwrap_or(mlp.batch_size);
        mlp.learning_rate = self.lr.unwrap_or(mlp.learning_rate);
        mlp.weight_decay = self.weight_decay.unwrap_or(mlp.weight_decay);
        mlp.patience = self.patience.unwrap_or(mlp.patience);
        let split = SplitSpec {
            test_fraction: self.test_fraction.unwrap_or(0.2),
            seed,
            stratified: true,
        };
        let costs = CostModel::new(self.cost_fp.unwrap_or(1.0), self.cost_fn.unwrap_or(1.0))?;
        Ok(RunConfig {
            data: self
                .data
                .unwrap_or_else(|| PathBuf::from("data/Telco-Customer-Churn.csv")),
            out: self
                .out
                .unwrap_or_else(|| PathBuf::from(format!("runs/{command}-seed{seed}"))),
            seed,
            split,
            models,
            costs,
            model: self.model.unwrap_or(Selection::Mlp),
        })
    }
}

/// Writes through a sibling temp file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path
        .file_name()
        .ok_or_else(|| anyhow!("{} is not a file path", path.display()))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

fn echo_config(cfg: &RunConfig) -> Result<()> {
    write_atomic(
        &cfg.out.join("config.json"),
        serde_json::to_string_pretty(cfg)?.as_bytes(),
    )
}

fn load(cfg: &RunConfig) -> Result<RawDataset> {
    ingest::load_dataset(&cfg.data).with_context(|| format!("loading {}", cfg.data.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaSummary {
    pub dataset: DatasetSummary,
    pub charges: ChargeDifferential,
    pub clv: ClvDistribution,
    pub tenure: Histogram,
}

pub fn cmd_eda(cfg: &RunConfig) -> Result<EdaSummary> {
    let ds = load(cfg)?;
    let summary = EdaSummary {
        dataset: ingest::dataset_summary(&ds)?,
        charges: eda::charge_differential(&ds)?,
        clv: eda::clv_distribution(&ds)?,
        tenure: eda::tenure_histogram(&ds, 1)?,
    };
    write_atomic(
        &cfg.out.join("fig1_charges.csv"),
        eda::charges_csv(&summary.charges).as_bytes(),
    )?;
    write_atomic(
        &cfg.out.join("fig2_clv.csv"),
        eda::clv_csv(&summary.clv).as_bytes(),
    )?;
    write_atomic(
        &cfg.out.join("fig3_tenure.csv"),
        eda::tenure_csv(&summary.tenure).as_bytes(),
    )?;
    write_atomic(
        &cfg.out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    echo_config(cfg)?;
    Ok(summary)
}

/// A model fitted on the training partition and scored on the test one.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub kind: ModelKind,
    pub pipeline: PipelineParams,
    pub model: TrainedModel,
    pub history: Option<TrainHistory>,
    pub report: MetricReport,
}

struct Prepared {
    raw: RawDataset,
    split: Split,
    pipeline: PipelineParams,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let raw = load(cfg)?;
    let split = pipeline::split_indices(&raw.labels(), &cfg.split)?;
    let pipeline = pipeline::fit_pipeline(&raw.subset(&split.train).records)?;
    Ok(Prepared {
        raw,
        split,
        pipeline,
    })
}

fn run_prepared(p: &Prepared, kind: ModelKind, cfg: &RunConfig) -> Result<ModelRun> {
    cfg.models.mlp.validate()?;
    let train = p.pipeline.transform(&p.raw.subset(&p.split.train).records);
    let test = p.pipeline.transform(&p.raw.subset(&p.split.test).records);
    let (model, history) = fit_model(kind, &train, &cfg.models, cfg.seed)?;
    let predicted = model.predict(&test.features)?;
    let report = MetricReport::evaluate(&predicted, &test.labels, cfg.costs)?;
    Ok(ModelRun {
        kind,
        pipeline: p.pipeline.clone(),
        model,
        history,
        report,
    })
}

/// Fits and scores one model without writing anything.
pub fn run_model(cfg: &RunConfig, kind: ModelKind) -> Result<ModelRun> {
    run_prepared(&prepare(cfg)?, kind, cfg)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<ModelRun> {
    let kind = match cfg.model.kinds().as_slice() {
        [k] => *k,
        _ => bail!("train fits a single model; use compare for --model all"),
    };
    let run = run_model(cfg, kind)?;
    let file = ModelFile::new(run.model.clone(), &run.pipeline);
    write_atomic(&cfg.out.join("model.json"), file.to_json().as_bytes())?;
    write_atomic(
        &cfg.out.join("pipeline.json"),
        run.pipeline.to_json().as_bytes(),
    )?;
    write_atomic(
        &cfg.out.join("metrics.json"),
        run.report.to_json().as_bytes(),
    )?;
    if let Some(h) = &run.history {
        write_atomic(&cfg.out.join("history.csv"), h.to_csv().as_bytes())?;
    }
    echo_config(cfg)?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub kind: ModelKind,
    pub method: String,
    pub accuracy: f64,
    pub churn_f1: f64,
    pub weighted_f1: f64,
    pub total_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Index into `rows` of the best value per column; lower is better for
    /// cost, higher for the rest.
    pub best_accuracy: usize,
    pub best_churn_f1: usize,
    pub best_weighted_f1: usize,
    pub best_total_cost: usize,
}

impl Comparison {
    pub fn from_rows(rows: Vec<ComparisonRow>) -> Comparison {
        // First row wins ties.
        let best = |key: &dyn Fn(&ComparisonRow) -> f64, lower: bool| {
            let mut idx = 0;
            for (i, r) in rows.iter().enumerate() {
                let (a, b) = (key(r), key(&rows[idx]));
                if (lower && a < b) || (!lower && a > b) {
                    idx = i;
                }
            }
            idx
        };
        Comparison {
            best_accuracy: best(&|r| r.accuracy, false),
            best_churn_f1: best(&|r| r.churn_f1, false),
            best_weighted_f1: best(&|r| r.weighted_f1, false),
            best_total_cost: best(&|r| r.total_cost, true),
            rows,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,accuracy,churn_f1,weighted_f1,total_cost,best\n");
        for (i, r) in self.rows.iter().enumerate() {
            let marks = self.marks(i).join(";");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.method, r.accuracy, r.churn_f1, r.weighted_f1, r.total_cost, marks
            );
        }
        out
    }

    fn marks(&self, i: usize) -> Vec<&'static str> {
        [
            (self.best_accuracy, "accuracy"),
            (self.best_churn_f1, "churn_f1"),
            (self.best_weighted_f1, "weighted_f1"),
            (self.best_total_cost, "total_cost"),
        ]
        .into_iter()
        .filter(|(b, _)| *b == i)
        .map(|(_, n)| n)
        .collect()
    }

    /// Plain-text table; `*` marks the best value in each column.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<28} {:>10} {:>10} {:>12} {:>12}\n",
            "method", "accuracy", "churn_f1", "weighted_f1", "total_cost"
        );
        let cell = |v: String, best: bool| {
            if best {
                format!("{v}*")
            } else {
                format!("{v} ")
            }
        };
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<28} {:>10} {:>10} {:>12} {:>12}",
                r.method,
                cell(format!("{:.4}", r.accuracy), self.best_accuracy == i),
                cell(format!("{:.4}", r.churn_f1), self.best_churn_f1 == i),
                cell(format!("{:.4}", r.weighted_f1), self.best_weighted_f1 == i),
                cell(format!("{:.1}", r.total_cost), self.best_total_cost == i),
            );
        }
        out
    }
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<Comparison> {
    let prepared = prepare(cfg)?;
    let mut rows = Vec::new();
    for kind in cfg.model.kinds() {
        let run = run_prepared(&prepared, kind, cfg)?;
        rows.push(ComparisonRow {
            kind,
            method: kind.display_name().to_string(),
            accuracy: run.report.accuracy,
            churn_f1: run.report.churn.f1,
            weighted_f1: run.report.weighted.f1,
            total_cost: run.report.total_cost,
        });
    }
    let table = Comparison::from_rows(rows);
    write_atomic(
        &cfg.out.join("comparison.json"),
        serde_json::to_string_pretty(&table)?.as_bytes(),
    )?;
    write_atomic(&cfg.out.join("comparison.csv"), table.to_csv().as_bytes())?;
    write_atomic(&cfg.out.join("comparison.txt"), table.to_text().as_bytes())?;
    echo_config(cfg)?;
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Test,
    All,
}

impl FromStr for Subset {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => Subset::Train,
            "test" => Subset::Test,
            "all" => Subset::All,
            other => bail!("unknown subset `{other}` (expected train, test or all)"),
        })
    }
}

/// `pipeline` defaults to `pipeline.json` next to the model file. The
/// train/test partition is recomputed from the config's seed and fraction.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    model: &Path,
    pipeline: Option<&Path>,
    subset: Subset,
) -> Result<MetricReport> {
    let text = fs::read_to_string(model).with_context(|| format!("reading {}", model.display()))?;
    let file = ModelFile::from_json(&text)
        .with_context(|| format!("loading model {}", model.display()))?;
    let pipeline_path = match pipeline {
        Some(p) => p.to_path_buf(),
        None => model.with_file_name("pipeline.json"),
    };
    let text = fs::read_to_string(&pipeline_path)
        .with_context(|| format!("reading {}", pipeline_path.display()))?;
    let params = PipelineParams::from_json(&text)
        .with_context(|| format!("loading pipeline {}", pipeline_path.display()))?;
    file.check_pipeline(&params).with_context(|| {
        format!(
            "{} does not belong to {}",
            pipeline_path.display(),
            model.display()
        )
    })?;

    let raw = load(cfg)?;
    let records = match subset {
        Subset::All => raw,
        s => {
            let split = pipeline::split_indices(&raw.labels(), &cfg.split)?;
            raw.subset(if s == Subset::Test {
                &split.test
            } else {
                &split.train
            })
        }
    };
    let data = params.transform(&records.records);
    let predicted = file.model.predict(&data.features)?;
    let report = MetricReport::evaluate(&predicted, &data.labels, cfg.costs)?;
    write_atomic(
        &cfg.out.join("evaluation.json"),
        report.to_json().as_bytes(),
    )?;
    echo_config(cfg)?;
    Ok(report)
}
