//! Sparse subspace clustering: lasso self-expression, `|C| + |C|ᵀ` affinity,
//! normalized spectral clustering and k-means.

mod kmeans;
mod selfexpr;
mod spectral;

use serde::{Deserialize, Serialize};

use crate::datagen::ObservedDataset;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub use kmeans::{kmeans, kmeans_rows, KMeansResult};
pub use selfexpr::{build_affinity, self_expression, SelfExpressionMatrix};
pub use spectral::{spectral_clustering, SpectralOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SscConfig {
    /// Lasso weight relative to the per-column `λ_max`.
    pub lambda_rel: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Number of clusters.
    pub k: usize,
    pub seed: u64,
    /// Nesterov-accelerated (monotone) proximal gradient.
    #[serde(default = "yes")]
    pub accelerate: bool,
}

fn yes() -> bool {
    true
}

impl SscConfig {
    pub fn new(k: usize) -> Self {
        Self {
            lambda_rel: 0.5,
            max_iter: 1000,
            tol: 1e-6,
            k,
            seed: 0,
            accelerate: true,
        }
    }

    pub(crate) fn validate_solver(&self) -> Result<()> {
        if !(self.lambda_rel > 0.0 && self.lambda_rel < 1.0) {
            return Err(Error::config(format!(
                "lambda_rel must lie in (0, 1), got {}",
                self.lambda_rel
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::config("tol must be positive and max_iter nonzero"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_solver()?;
        if self.k < 2 {
            return Err(Error::config("k must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SscOutput {
    pub labels: Vec<usize>,
    pub coefficients: SelfExpressionMatrix,
    pub affinity: Matrix,
    pub isolated: usize,
}

/// Clusters the columns of `h` (p×n).
pub fn ssc(h: &Matrix, cfg: &SscConfig) -> Result<SscOutput> {
    cfg.validate()?;
    if cfg.k > h.cols() {
        return Err(Error::config(format!(
            "cannot form {} clusters from {} samples",
            cfg.k,
            h.cols()
        )));
    }
    let coefficients = self_expression(h, cfg)?;
    let affinity = build_affinity(&coefficients);
    let spectral = spectral_clustering(&affinity, cfg.k, cfg.seed)?;
    Ok(SscOutput {
        labels: spectral.labels,
        coefficients,
        affinity,
        isolated: spectral.isolated,
    })
}

/// SSC on the zero-filled observations.
pub fn zf_ssc(ds: &ObservedDataset, cfg: &SscConfig) -> Result<SscOutput> {
    ssc(ds.values(), cfg)
}
