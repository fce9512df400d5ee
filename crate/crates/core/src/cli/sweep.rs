use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::cluster::ssc;
use crate::contrastive::{embed, train, ResidualMode};
use crate::datagen::{generate_clean, load_dataset, observe, ObservedDataset};
use crate::error::{Error, Result};
use crate::eval::{aggregate_sweep, align_and_score, subsample_eval, SweepResult, SweepRow};
use crate::mae::{encode, train_mae};
use crate::numerics::{fnv1a, mix_seed};

use super::config::{ExperimentConfig, Method};

/// Seeds of one (method, ρ, replicate) cell.
///
/// Every seed is `mix_seed(root, [fnv1a(tag), ...])`: the clean data depends
/// on the replicate only, the mask on (ρ index, replicate) and the model on
/// (method, ρ index, replicate). Adding a method or extending the grid leaves
/// the other cells unchanged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSeeds {
    pub method: Method,
    pub rho: f64,
    pub rho_index: usize,
    pub seed: u64,
    pub data_seed: u64,
    pub observe_seed: u64,
    pub eval_seed: u64,
    pub model_seed: u64,
}

impl CellSeeds {
    pub fn derive(root: u64, method: Method, rho_index: usize, rho: f64, seed: u64) -> Self {
        Self {
            method,
            rho,
            rho_index,
            seed,
            data_seed: mix_seed(root, &[fnv1a("clean"), seed]),
            observe_seed: mix_seed(root, &[fnv1a("observe"), rho_index as u64, seed]),
            eval_seed: mix_seed(root, &[fnv1a("eval"), seed]),
            model_seed: mix_seed(root, &[fnv1a(method.name()), rho_index as u64, seed]),
        }
    }
}

/// Incomplete data for one (ρ, replicate) pair, split into training and
/// evaluation samples.
struct Prepared {
    train: ObservedDataset,
    eval: ObservedDataset,
}

fn prepare(cfg: &ExperimentConfig, base: Option<&ObservedDataset>, cell: &CellSeeds) -> Result<Prepared> {
    let mut ds = match (&cfg.dataset.synthetic, base) {
        (Some(s), _) => {
            let mut s = s.clone();
            s.seed = cell.data_seed;
            let gt = generate_clean(&s)?;
            observe(&gt, s.sigma, cell.rho, cell.observe_seed)?
        }
        (None, Some(base)) if cell.rho < 1.0 => base.resample_mask(cell.rho, cell.observe_seed)?,
        (None, Some(base)) => base.clone(),
        (None, None) => return Err(Error::config("no dataset")),
    };
    if cfg.dataset.normalize_columns {
        ds.normalize_columns();
    }
    let n = ds.len();
    let eval_idx = subsample_eval(n, cfg.eval.n_eval, cell.eval_seed)?;
    let train = if cfg.eval.transductive {
        ds.clone()
    } else {
        let mut in_eval = vec![false; n];
        eval_idx.iter().for_each(|&i| in_eval[i] = true);
        let rest: Vec<usize> = (0..n).filter(|&i| !in_eval[i]).collect();
        ds.select(&rest)
    };
    Ok(Prepared {
        train,
        eval: ds.select(&eval_idx),
    })
}

/// Clustering error of one cell.
pub(crate) fn run_cell(cfg: &ExperimentConfig, base: Option<&ObservedDataset>, cell: &CellSeeds) -> Result<f64> {
    let data = prepare(cfg, base, cell)?;
    let k = cfg.clusters()?;
    let embedding = match cell.method {
        Method::ZfSsc => data.eval.values().clone(),
        Method::Csc => {
            let mut tcfg = cfg.model.train.clone();
            tcfg.seed = cell.model_seed;
            let out = train(&data.train, &cfg.model.backbone, &tcfg)?;
            embed(&out.params, &data.eval)?
        }
        Method::Mae => {
            let mut mcfg = cfg.model.mae.clone();
            mcfg.seed = cell.model_seed;
            let out = train_mae(&data.train, &mcfg)?;
            encode(&out.params, &data.eval)?
        }
    };
    let labels = ssc(&embedding, &cfg.cluster.ssc_for(cell.method, k, cell.model_seed))?.labels;
    let truth = data
        .eval
        .labels()
        .ok_or_else(|| Error::InvalidInput("dataset has no labels to score against".into()))?;
    Ok(align_and_score(&labels, truth)?.error)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepMeta {
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub cells: Vec<CellSeeds>,
    pub failed: usize,
}

pub struct SweepOutput {
    pub result: SweepResult,
    pub meta: SweepMeta,
}

impl SweepOutput {
    pub fn all_failed(&self) -> bool {
        self.meta.failed == self.meta.cells.len()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.result.write(dir)?;
        write_json(&dir.join("meta.json"), &self.meta)
    }
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".to_string())
}

/// Runs every (method, ρ, replicate) cell. Failed cells become NaN rows
/// with a reason; only an invalid configuration or unreadable dataset is an
/// error. Cells run on up to `jobs` threads and rows are collected in cell
/// order, so output does not depend on `jobs`.
pub fn run_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<SweepOutput> {
    cfg.validate()?;
    let base = match &cfg.dataset.path {
        Some(path) => {
            let ds = load_dataset(path)?;
            if ds.labels().is_none() {
                return Err(Error::InvalidInput(format!("{} has no labels", path.display())));
            }
            if ds.dim() != cfg.model.backbone.input_dim || ds.dim() != cfg.model.mae.input_dim {
                return Err(Error::config(format!(
                    "model input_dim does not match data dimension {}",
                    ds.dim()
                )));
            }
            Some(ds)
        }
        None => None,
    };
    let mut cells = Vec::new();
    for &method in &cfg.eval.methods {
        for (rho_index, &rho) in cfg.eval.rho_grid.iter().enumerate() {
            for &seed in &cfg.eval.seeds {
                cells.push(CellSeeds::derive(cfg.seed, method, rho_index, rho, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let start = Instant::now();
                let outcome = catch_unwind(AssertUnwindSafe(|| run_cell(cfg, base.as_ref(), cell)));
                let seconds = if cfg.eval.record_timing {
                    start.elapsed().as_secs_f64()
                } else {
                    0.0
                };
                let name = cell.method.name();
                let row = match outcome {
                    Ok(Ok(error)) => SweepRow::ok(name, cell.rho, cell.seed, error, seconds),
                    Ok(Err(e)) => SweepRow::failed(name, cell.rho, cell.seed, seconds, e.to_string()),
                    Err(p) => SweepRow::failed(name, cell.rho, cell.seed, seconds, panic_message(p)),
                };
                match &row.reason {
                    None => log_line(&format!(
                        "{name} rho={} seed={} error={:.4}",
                        cell.rho, cell.seed, row.error
                    )),
                    Some(r) => log_line(&format!("{name} rho={} seed={} failed: {r}", cell.rho, cell.seed)),
                }
                row
            })
            .collect()
    });
    let failed = rows.iter().filter(|r| r.reason.is_some()).count();
    Ok(SweepOutput {
        result: aggregate_sweep(&rows)?,
        meta: SweepMeta {
            version: env!("CARGO_PKG_VERSION"),
            config: cfg.clone(),
            cells,
            failed,
        },
    })
}

fn log_line(msg: &str) {
    if std::env::var_os("CSC_QUIET").is_none() {
        eprintln!("{msg}");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Depth,
    Residual,
    BatchSize,
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(Self::Depth),
            "residual" => Ok(Self::Residual),
            "batch_size" | "batch-size" => Ok(Self::BatchSize),
            _ => Err(Error::config(format!(
                "unknown ablation axis `{s}` (expected depth, residual or batch_size)"
            ))),
        }
    }
}

impl AblationAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Depth => "depth",
            Self::Residual => "residual",
            Self::BatchSize => "batch_size",
        }
    }

    /// Default values: depths 1..=6, every residual mode, batch sizes 64..=256.
    pub fn default_values(self) -> Vec<String> {
        match self {
            Self::Depth => (1..=6).map(|d| d.to_string()).collect(),
            Self::Residual => ResidualMode::ALL.iter().map(|m| m.name().to_string()).collect(),
            Self::BatchSize => ["64", "128", "256"].map(String::from).to_vec(),
        }
    }

    /// Copy of `cfg` with the contrastive model's `value` applied on this axis.
    pub fn apply(self, cfg: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut out = cfg.clone();
        let bad = |e: &dyn std::fmt::Display| Error::config(format!("bad {} value `{value}`: {e}", self.name()));
        match self {
            Self::Depth => out.model.backbone.depth = value.parse().map_err(|e| bad(&e))?,
            Self::Residual => out.model.backbone.residual = value.parse().map_err(|e| bad(&e))?,
            Self::BatchSize => out.model.train.batch_size = value.parse().map_err(|e| bad(&e))?,
        }
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationMeta {
    pub axis: AblationAxis,
    pub values: Vec<String>,
    pub runs: Vec<SweepMeta>,
}

pub struct AblationOutput {
    pub axis: AblationAxis,
    pub runs: Vec<(String, SweepOutput)>,
}

impl AblationOutput {
    pub fn all_failed(&self) -> bool {
        self.runs.iter().all(|(_, r)| r.all_failed())
    }

    /// One row per (value, method, ρ), in run order.
    pub fn long_csv(&self) -> String {
        let mut out = String::from("axis,value,method,rho,mean_error,mean_accuracy,n_ok,n_cells\n");
        for (value, run) in &self.runs {
            let mut counts: BTreeMap<(String, u64), (usize, usize)> = BTreeMap::new();
            for row in &run.result.rows {
                let c = counts.entry((row.method.clone(), row.rho.to_bits())).or_default();
                c.1 += 1;
                if row.reason.is_none() {
                    c.0 += 1;
                }
            }
            for m in &run.result.methods {
                for (i, rho) in run.result.grid.iter().enumerate() {
                    let (ok, total) = counts
                        .get(&(m.method.clone(), rho.to_bits()))
                        .copied()
                        .unwrap_or((0, 0));
                    if total == 0 {
                        continue;
                    }
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        self.axis.name(),
                        value,
                        m.method,
                        rho,
                        num(m.error[i]),
                        num(m.accuracy[i]),
                        ok,
                        total
                    );
                }
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (value, run) in &self.runs {
            run.result.write(&dir.join(format!("{}-{}", self.axis.name(), value)))?;
        }
        let long = dir.join("ablation.csv");
        std::fs::write(&long, self.long_csv()).map_err(|e| Error::io(&long, e))?;
        let meta = AblationMeta {
            axis: self.axis,
            values: self.runs.iter().map(|(v, _)| v.clone()).collect(),
            runs: self.runs.iter().map(|(_, r)| r.meta.clone()).collect(),
        };
        write_json(&dir.join("meta.json"), &meta)
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

/// Runs the sweep once per axis value with everything else held fixed.
pub fn run_ablation(
    cfg: &ExperimentConfig,
    axis: AblationAxis,
    values: &[String],
    jobs: usize,
) -> Result<AblationOutput> {
    if values.is_empty() {
        return Err(Error::config("no ablation values"));
    }
    let configs: Vec<ExperimentConfig> = values.iter().map(|v| axis.apply(cfg, v)).collect::<Result<_>>()?;
    let mut runs = Vec::with_capacity(values.len());
    for (value, c) in values.iter().zip(&configs) {
        runs.push((value.clone(), run_sweep(c, jobs)?));
    }
    Ok(AblationOutput { axis, runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk();
        let s = cfg.dataset.synthetic.as_mut().unwrap();
        s.d = 12;
        s.r = 2;
        s.k = 3;
        s.n_total = 90;
        cfg.model.backbone = crate::contrastive::BackboneConfig::for_input(12);
        cfg.model.backbone.depth = 2;
        cfg.model.backbone.head_out = 8;
        cfg.model.train.epochs = 2;
        cfg.model.train.batch_size = 16;
        cfg.model.mae = crate::mae::MaeConfig::for_input(12);
        cfg.model.mae.epochs = 2;
        cfg.model.mae.batch_size = 16;
        cfg.eval.n_eval = 30;
        cfg.eval.rho_grid = vec![0.5, 0.9];
        cfg.eval.seeds = vec![0, 1];
        cfg
    }

    #[test]
    fn cell_seeds_are_independent_of_other_methods() {
        let a = CellSeeds::derive(5, Method::Csc, 1, 0.3, 2);
        let b = CellSeeds::derive(5, Method::Mae, 1, 0.3, 2);
        assert_eq!(a.data_seed, b.data_seed);
        assert_eq!(a.observe_seed, b.observe_seed);
        assert_ne!(a.model_seed, b.model_seed);
        assert_ne!(
            a.observe_seed,
            CellSeeds::derive(5, Method::Csc, 0, 0.3, 2).observe_seed
        );
    }

    #[test]
    fn sweep_rows_and_failures() {
        std::env::set_var("CSC_QUIET", "1");
        let mut cfg = tiny();
        let out = run_sweep(&cfg, 1).unwrap();
        assert_eq!(out.result.rows.len(), 3 * 2 * 2);
        assert_eq!(out.meta.failed, 0);

        // A batch larger than the training set fails the contrastive cells only.
        cfg.model.train.batch_size = 1000;
        let out = run_sweep(&cfg, 2).unwrap();
        assert_eq!(out.meta.failed, 4);
        assert!(!out.all_failed());
        assert!(out
            .result
            .rows
            .iter()
            .filter(|r| r.method == "csc")
            .all(|r| r.error.is_nan() && r.reason.is_some()));
    }

    #[test]
    fn jobs_do_not_change_results() {
        std::env::set_var("CSC_QUIET", "1");
        let mut cfg = tiny();
        cfg.eval.methods = vec![Method::Csc, Method::ZfSsc];
        let a = run_sweep(&cfg, 1).unwrap();
        let b = run_sweep(&cfg, 3).unwrap();
        assert_eq!(a.result.sweep_csv(), b.result.sweep_csv());
    }

    #[test]
    fn ablation_axis_values() {
        let cfg = tiny();
        assert_eq!(AblationAxis::Residual.default_values(), ["full", "block", "none"]);
        assert_eq!(AblationAxis::Depth.apply(&cfg, "5").unwrap().model.backbone.depth, 5);
        assert!(AblationAxis::Depth.apply(&cfg, "0").is_err());
        assert!(AblationAxis::BatchSize.apply(&cfg, "x").is_err());
        assert!("width".parse::<AblationAxis>().is_err());
    }
}
