use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::SscConfig;
use crate::contrastive::{BackboneConfig, ResidualMode, TrainConfig};
use crate::datagen::SyntheticConfig;
use crate::error::{Error, Result};
use crate::mae::MaeConfig;

/// Representation learner feeding SSC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "csc")]
    Csc,
    #[serde(rename = "mae")]
    Mae,
    #[serde(rename = "zf-ssc")]
    ZfSsc,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Csc, Method::Mae, Method::ZfSsc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Csc => "csc",
            Method::Mae => "mae",
            Method::ZfSsc => "zf-ssc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method `{s}` (expected csc, mae or zf-ssc)")))
    }
}

/// Where samples come from. Exactly one of `synthetic` and `path` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    /// Directory in the dataset file layout; must include labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Number of clusters for an external dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    #[serde(default)]
    pub normalize_columns: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub backbone: BackboneConfig,
    pub train: TrainConfig,
    pub mae: MaeConfig,
}

/// SSC solver settings; `k` comes from the dataset and the seed from the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    pub lambda_rel: f64,
    pub max_iter: usize,
    pub tol: f64,
    #[serde(default = "yes")]
    pub accelerate: bool,
    /// Per-method replacement for `lambda_rel`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub lambda_rel_by_method: BTreeMap<Method, f64>,
}

fn yes() -> bool {
    true
}

impl Default for ClusterSection {
    fn default() -> Self {
        let s = SscConfig::new(2);
        Self {
            lambda_rel: s.lambda_rel,
            max_iter: s.max_iter,
            tol: s.tol,
            accelerate: s.accelerate,
            lambda_rel_by_method: BTreeMap::new(),
        }
    }
}

impl ClusterSection {
    pub fn ssc(&self, k: usize, seed: u64) -> SscConfig {
        SscConfig {
            lambda_rel: self.lambda_rel,
            max_iter: self.max_iter,
            tol: self.tol,
            k,
            seed,
            accelerate: self.accelerate,
        }
    }

    pub fn ssc_for(&self, method: Method, k: usize, seed: u64) -> SscConfig {
        SscConfig {
            lambda_rel: self
                .lambda_rel_by_method
                .get(&method)
                .copied()
                .unwrap_or(self.lambda_rel),
            max_iter: self.max_iter,
            tol: self.tol,
            k,
            seed,
            accelerate: self.accelerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub n_eval: usize,
    pub rho_grid: Vec<f64>,
    /// Replicate identifiers; each one is mixed into the cell seeds.
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Train on every sample instead of only those outside the evaluation subsample.
    #[serde(default)]
    pub transductive: bool,
    /// Fill the `seconds` column with wall-clock time. Off by default because
    /// timings differ between otherwise identical runs.
    #[serde(default)]
    pub record_timing: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            n_eval: 500,
            rho_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            seeds: vec![0, 1, 2],
            methods: Method::ALL.to_vec(),
            transductive: false,
            record_timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed for every derived cell seed.
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// Desk-scale synthetic benchmark: d=64, k=5, r=8, 2000 training and 500
    /// evaluation samples, depth-4 networks trained for 50 epochs.
    ///
    /// Training uses block residuals, batch 32, learning rate 3e-3 and τ = 0.1,
    /// and SSC on contrastive embeddings uses `lambda_rel = 0.02`; these were
    /// picked on root seed 99. The library defaults learn little in 50 epochs
    /// at this size.
    pub fn desk() -> Self {
        let synthetic = SyntheticConfig {
            k: 5,
            r: 8,
            d: 64,
            n_total: 2500,
            sigma: 0.1,
            rho: 0.5,
            seed: 0,
        };
        let d = synthetic.d;
        let backbone = BackboneConfig {
            residual: ResidualMode::Block,
            ..BackboneConfig::for_input(d)
        };
        let train = TrainConfig {
            batch_size: 32,
            learning_rate: 3e-3,
            temperature: 0.1,
            ..TrainConfig::default()
        };
        let mae = MaeConfig {
            batch_size: 32,
            learning_rate: 3e-3,
            ..MaeConfig::for_input(d)
        };
        let mut cluster = ClusterSection::default();
        cluster.lambda_rel_by_method.insert(Method::Csc, 0.02);
        Self {
            seed: 0,
            dataset: DatasetSection {
                synthetic: Some(synthetic),
                path: None,
                clusters: None,
                normalize_columns: false,
            },
            model: ModelSection { backbone, train, mae },
            cluster,
            eval: EvalSection::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Number of clusters the dataset section describes.
    pub fn clusters(&self) -> Result<usize> {
        match (&self.dataset.synthetic, self.dataset.clusters) {
            (Some(s), _) => Ok(s.k),
            (None, Some(k)) => Ok(k),
            (None, None) => Err(Error::config("dataset.clusters is required with dataset.path")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.dataset.synthetic, &self.dataset.path) {
            (Some(s), None) => {
                s.validate()?;
                for (name, dim) in [
                    ("model.backbone.input_dim", self.model.backbone.input_dim),
                    ("model.mae.input_dim", self.model.mae.input_dim),
                ] {
                    if dim != s.d {
                        return Err(Error::config(format!("{name}={dim} but the data has d={}", s.d)));
                    }
                }
            }
            (None, Some(_)) => {}
            _ => return Err(Error::config("set exactly one of dataset.synthetic and dataset.path")),
        }
        self.model.backbone.validate()?;
        self.model.train.validate()?;
        self.model.mae.validate()?;
        let k = self.clusters()?;
        self.cluster.ssc(k, 0).validate()?;
        for &m in self.cluster.lambda_rel_by_method.keys() {
            self.cluster.ssc_for(m, k, 0).validate()?;
        }
        let ev = &self.eval;
        if ev.rho_grid.is_empty() || ev.seeds.is_empty() || ev.methods.is_empty() {
            return Err(Error::config(
                "eval.rho_grid, eval.seeds and eval.methods must be nonempty",
            ));
        }
        if let Some(rho) = ev.rho_grid.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::config(format!("rho {rho} outside (0, 1]")));
        }
        if ev.n_eval < k {
            return Err(Error::config(format!("n_eval={} is smaller than k={k}", ev.n_eval)));
        }
        if let Some(s) = &self.dataset.synthetic {
            if ev.n_eval > s.n_total {
                return Err(Error::config(format!(
                    "n_eval={} exceeds n_total={}",
                    ev.n_eval, s.n_total
                )));
            }
        }
        let mut seeds = ev.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != ev.seeds.len() {
            return Err(Error::config("eval.seeds contains duplicates"));
        }
        Ok(())
    }
}

/// Parses a comma-separated list.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<T>()
                .map_err(|e| Error::config(format!("bad list item `{t}`: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::desk();
        cfg.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn methods_parse() {
        assert_eq!(
            parse_list::<Method>("csc, zf-ssc").unwrap(),
            vec![Method::Csc, Method::ZfSsc]
        );
        assert!("ssc".parse::<Method>().is_err());
        let json = serde_json::to_string(&Method::ALL).unwrap();
        assert_eq!(json, r#"["csc","mae","zf-ssc"]"#);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ExperimentConfig::desk();
        cfg.eval.rho_grid = vec![0.0];
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::desk();
        cfg.model.backbone.input_dim = 10;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::desk();
        cfg.dataset.path = Some("x".into());
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::desk();
        cfg.eval.seeds = vec![1, 1];
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::desk();
        cfg.cluster.lambda_rel = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&ExperimentConfig::desk().to_json()).unwrap();
        v["eval"]["n_evals"] = serde_json::json!(3);
        assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());
    }
}
