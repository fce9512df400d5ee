//! Command-line driver: dataset generation, single-model training and
//! inference, and experiment sweeps.
//!
//! Configuration is a JSON [`ExperimentConfig`]; flags override its keys.
//! Exit status is 2 for an invalid configuration, 1 for any other error or a
//! sweep in which every cell failed, 0 otherwise.

mod config;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::cluster::ssc;
use crate::contrastive::train;
use crate::datagen::{
    generate_clean, load_dataset, load_matrix, observe, read_labels_csv, save_dataset, save_matrix, write_labels_csv,
    ObservedDataset, LABELS_FILE,
};
use crate::error::{Error, Result};
use crate::eval::align_and_score;
use crate::mae::train_mae;

pub use config::{parse_list, ClusterSection, DatasetSection, EvalSection, ExperimentConfig, Method, ModelSection};
pub use sweep::{run_ablation, run_sweep, AblationAxis, AblationOutput, CellSeeds, SweepMeta, SweepOutput};

#[derive(Debug, Parser)]
#[command(name = "csc", version, about = "Contrastive subspace clustering for incomplete data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// JSON experiment config; the built-in desk-scale config when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scale every sample to unit norm after masking.
    #[arg(long)]
    pub normalize_columns: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long)]
    pub out: PathBuf,
    /// Concurrent sweep cells.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Comma-separated subset of csc, mae, zf-ssc.
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated sampling rates.
    #[arg(long)]
    pub rho_grid: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Csc,
    Mae,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the built-in desk-scale configuration as JSON.
    Config,
    /// Write a synthetic incomplete dataset and meta.json.
    Generate {
        #[command(flatten)]
        common: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset directory; writes model.json and loss.csv.
    Train {
        #[command(flatten)]
        common: Overrides,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelKind::Csc)]
        model: ModelKind,
    },
    /// Embed every sample of a dataset with a trained model.
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output matrix file (one column per sample).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        normalize_columns: bool,
    },
    /// Run SSC on an embedding matrix or on zero-filled data; writes labels.csv.
    Cluster {
        #[command(flatten)]
        common: Overrides,
        /// Embedding matrix file from `embed`.
        #[arg(long, conflicts_with = "data")]
        embedding: Option<PathBuf>,
        /// Dataset directory, clustered after zero filling.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Number of clusters; defaults to the config's.
        #[arg(long)]
        k: Option<usize>,
        /// Also write coefficients.csv and affinity.csv.
        #[arg(long)]
        dump_affinity: bool,
    },
    /// Clustering error of predicted labels against the truth.
    Score {
        #[arg(long)]
        pred: PathBuf,
        /// Labels file or dataset directory.
        #[arg(long)]
        truth: PathBuf,
        /// Optional CSV with `error,accuracy`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep methods × sampling rates × seeds; writes sweep.csv, summary.csv and meta.json.
    Run(SweepArgs),
    /// Repeat the sweep for each value of one model setting.
    Ablate {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long)]
        axis: AblationAxis,
        /// Comma-separated values; every default value of the axis when omitted.
        #[arg(long)]
        values: Option<String>,
    },
}

impl clap::ValueEnum for AblationAxis {
    fn value_variants<'a>() -> &'a [Self] {
        &[AblationAxis::Depth, AblationAxis::Residual, AblationAxis::BatchSize]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

fn load_config(o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match &o.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk(),
    };
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if o.normalize_columns {
        cfg.dataset.normalize_columns = true;
    }
    Ok(cfg)
}

fn sweep_config(args: &SweepArgs) -> Result<ExperimentConfig> {
    let mut cfg = load_config(&args.common)?;
    if let Some(m) = &args.methods {
        cfg.eval.methods = parse_list(m)?;
    }
    if let Some(g) = &args.rho_grid {
        cfg.eval.rho_grid = parse_list(g)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Serialize)]
struct GenerateMeta<'a> {
    version: &'static str,
    config: &'a ExperimentConfig,
    seed: u64,
    rho: f64,
    samples: usize,
    dim: usize,
    empty_columns: usize,
    observed_fraction: f64,
}

/// Dataset described by the config's synthetic section, with `seed` as the
/// generator seed for both the clean data and the observation.
pub fn synthetic_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<ObservedDataset> {
    let s = cfg
        .dataset
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::config("generate needs dataset.synthetic"))?;
    let mut s = s.clone();
    s.seed = seed;
    let gt = generate_clean(&s)?;
    let mut ds = observe(&gt, s.sigma, s.rho, seed)?;
    if cfg.dataset.normalize_columns {
        ds.normalize_columns();
    }
    Ok(ds)
}

pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let seed = cfg.seed;
    let ds = synthetic_dataset(cfg, seed)?;
    create_dir(out)?;
    save_dataset(&ds, out)?;
    let meta = GenerateMeta {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seed,
        rho: cfg.dataset.synthetic.as_ref().map_or(1.0, |s| s.rho),
        samples: ds.len(),
        dim: ds.dim(),
        empty_columns: ds.empty_columns(),
        observed_fraction: ds.observed_fraction(),
    };
    sweep::write_json(&out.join("meta.json"), &meta)
}

fn check_dim(ds: &ObservedDataset, expected: usize, what: &str) -> Result<()> {
    if ds.dim() != expected {
        return Err(Error::config(format!(
            "{what} input_dim={expected} but the data has dimension {}",
            ds.dim()
        )));
    }
    Ok(())
}

pub fn cmd_train(cfg: &ExperimentConfig, data: &Path, out: &Path, kind: ModelKind) -> Result<()> {
    let mut ds = load_dataset(data)?;
    if cfg.dataset.normalize_columns {
        ds.normalize_columns();
    }
    let (checkpoint, trace) = match kind {
        ModelKind::Csc => {
            check_dim(&ds, cfg.model.backbone.input_dim, "model.backbone")?;
            let mut tcfg = cfg.model.train.clone();
            tcfg.seed = cfg.seed;
            let out = train(&ds, &cfg.model.backbone, &tcfg)?;
            let ck = Checkpoint::Csc {
                config: cfg.model.backbone.clone(),
                params: out.params,
            };
            (ck, out.loss_trace)
        }
        ModelKind::Mae => {
            check_dim(&ds, cfg.model.mae.input_dim, "model.mae")?;
            let mut mcfg = cfg.model.mae.clone();
            mcfg.seed = cfg.seed;
            let out = train_mae(&ds, &mcfg)?;
            let ck = Checkpoint::Mae {
                config: mcfg,
                params: out.params,
            };
            (ck, out.loss_trace)
        }
    };
    create_dir(out)?;
    checkpoint.save(out.join("model.json"))?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in trace.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", e + 1, l));
    }
    let path = out.join("loss.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
}

pub fn cmd_embed(model: &Path, data: &Path, out: &Path, normalize_columns: bool) -> Result<()> {
    let ck = Checkpoint::load(model)?;
    let mut ds = load_dataset(data)?;
    if normalize_columns {
        ds.normalize_columns();
    }
    let h = ck.embed(&ds)?;
    save_matrix(out, &h)
}

pub fn cmd_cluster(
    cfg: &ExperimentConfig,
    input: ClusterInput<'_>,
    k: Option<usize>,
    out: &Path,
    dump_affinity: bool,
) -> Result<()> {
    let h = match input {
        ClusterInput::Embedding(path) => load_matrix(path)?,
        ClusterInput::Data(path) => {
            let mut ds = load_dataset(path)?;
            if cfg.dataset.normalize_columns {
                ds.normalize_columns();
            }
            ds.values().clone()
        }
    };
    let k = match k {
        Some(k) => k,
        None => cfg.clusters()?,
    };
    let result = ssc(&h, &cfg.cluster.ssc(k, cfg.seed))?;
    create_dir(out)?;
    write_labels_csv(&out.join(LABELS_FILE), &result.labels)?;
    if dump_affinity {
        save_matrix(&out.join("coefficients.csv"), result.coefficients.matrix())?;
        save_matrix(&out.join("affinity.csv"), &result.affinity)?;
    }
    if result.isolated > 0 || result.coefficients.zero_columns > 0 {
        eprintln!(
            "warning: {} isolated samples, {} zero columns",
            result.isolated, result.coefficients.zero_columns
        );
    }
    Ok(())
}

pub enum ClusterInput<'a> {
    Embedding(&'a Path),
    Data(&'a Path),
}

pub fn cmd_score(pred: &Path, truth: &Path, out: Option<&Path>) -> Result<f64> {
    let predicted = read_labels_csv(pred)?;
    let truth = if truth.is_dir() {
        read_labels_csv(&truth.join(LABELS_FILE))?
    } else {
        read_labels_csv(truth)?
    };
    let res = align_and_score(&predicted, &truth)?;
    if let Some(out) = out {
        let text = format!("error,accuracy\n{},{}\n", res.error, res.accuracy());
        std::fs::write(out, text).map_err(|e| Error::io(out, e))?;
    }
    Ok(res.error)
}

enum Outcome {
    Done,
    AllFailed,
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Config => println!("{}", ExperimentConfig::desk().to_json()),
        Command::Generate { common, out } => {
            cmd_generate(&load_config(&common)?, &out)?;
        }
        Command::Train {
            common,
            data,
            out,
            model,
        } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            cmd_train(&cfg, &data, &out, model)?;
        }
        Command::Embed {
            model,
            data,
            out,
            normalize_columns,
        } => cmd_embed(&model, &data, &out, normalize_columns)?,
        Command::Cluster {
            common,
            embedding,
            data,
            out,
            k,
            dump_affinity,
        } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let input = match (&embedding, &data) {
                (Some(e), None) => ClusterInput::Embedding(e),
                (None, Some(d)) => ClusterInput::Data(d),
                _ => return Err(Error::config("give exactly one of --embedding and --data")),
            };
            cmd_cluster(&cfg, input, k, &out, dump_affinity)?;
        }
        Command::Score { pred, truth, out } => {
            let error = cmd_score(&pred, &truth, out.as_deref())?;
            println!("error {error}\naccuracy {}", 1.0 - error);
        }
        Command::Run(args) => {
            let cfg = sweep_config(&args)?;
            let output = run_sweep(&cfg, args.jobs)?;
            create_dir(&args.out)?;
            output.write(&args.out)?;
            print!("{}", output.result.summary_csv());
            if output.all_failed() {
                return Ok(Outcome::AllFailed);
            }
        }
        Command::Ablate { sweep, axis, values } => {
            let cfg = sweep_config(&sweep)?;
            let values = match values {
                Some(v) => parse_list::<String>(&v)?,
                None => axis.default_values(),
            };
            let output = run_ablation(&cfg, axis, &values, sweep.jobs)?;
            output.write(&sweep.out)?;
            print!("{}", output.long_csv());
            if output.all_failed() {
                return Ok(Outcome::AllFailed);
            }
        }
    }
    Ok(Outcome::Done)
}

/// Parses `std::env::args` and runs the command.
pub fn main_entry() -> ExitCode {
    run_with(Cli::parse())
}

pub fn run_with(cli: Cli) -> ExitCode {
    match dispatch(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::AllFailed) => {
            eprintln!("error: every sweep cell failed");
            ExitCode::from(1)
        }
        Err(e @ (Error::InvalidConfig(_) | Error::Json { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
