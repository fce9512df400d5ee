//! Masked-autoencoder baseline with the same MLP building blocks as the
//! contrastive backbone.
//!
//! Each step hides a random `mask_ratio` share of every sample's observed
//! entries, encodes the remaining zero-filled vector, decodes back to `d`
//! dimensions and minimizes squared error over all observed entries (hidden
//! and visible). Unobserved entries never enter the loss.

use serde::{Deserialize, Serialize};

use crate::contrastive::{embed_with, Dense, EmbeddingMatrix, Mlp, Optimizer, OptimizerConfig, ResidualMode};
use crate::datagen::ObservedDataset;
use crate::error::{Error, Result};
use crate::numerics::{stream, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeConfig {
    pub input_dim: usize,
    pub encoder_depth: usize,
    pub width: usize,
    pub bottleneck: usize,
    pub mask_ratio: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl MaeConfig {
    /// Depth 4, widths and bottleneck equal to the input dimension.
    pub fn for_input(input_dim: usize) -> Self {
        Self {
            input_dim,
            encoder_depth: 4,
            width: input_dim,
            bottleneck: input_dim,
            mask_ratio: 0.5,
            batch_size: 128,
            epochs: 50,
            learning_rate: 1e-3,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_depth == 0 {
            return Err(Error::config("encoder_depth must be at least 1"));
        }
        if self.input_dim == 0 || self.width == 0 || self.bottleneck == 0 {
            return Err(Error::config("MAE widths must be at least 1"));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::config("mask_ratio must lie in (0, 1)"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        self.optimizer.validate()
    }

    fn dims(&self, from: usize, to: usize) -> Vec<(usize, usize)> {
        (0..self.encoder_depth)
            .map(|l| {
                let inp = if l == 0 { from } else { self.width };
                let out = if l + 1 == self.encoder_depth { to } else { self.width };
                (inp, out)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeParams {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl MaeParams {
    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }
}

pub fn init_mae(cfg: &MaeConfig) -> Result<MaeParams> {
    cfg.validate()?;
    let mut rng = Rng::with_stream(cfg.seed, stream::INIT);
    let mut build = |dims: Vec<(usize, usize)>| -> Vec<Dense> {
        dims.into_iter()
            .map(|(i, o)| Dense::he_normal(i, o, &mut rng))
            .collect()
    };
    let encoder = Mlp::new(
        build(cfg.dims(cfg.input_dim, cfg.bottleneck)),
        ResidualMode::None,
        false,
    )?;
    let decoder = Mlp::new(build(cfg.dims(cfg.bottleneck, cfg.input_dim)), ResidualMode::None, true)?;
    Ok(MaeParams { encoder, decoder })
}

/// Reconstruction loss restricted to `observed` entries, and its gradient
/// w.r.t. the encoder/decoder parameters.
pub fn masked_loss_and_grad(
    params: &MaeParams,
    input: &Matrix,
    target: &Matrix,
    observed: &Matrix,
) -> (f64, Vec<Dense>, Vec<Dense>) {
    let enc = params.encoder.forward_trace(input);
    let dec = params.decoder.forward_trace(&enc.output);
    let count: f64 = observed.as_slice().iter().sum::<f64>().max(1.0);
    let mut grad = Matrix::zeros(target.rows(), target.cols());
    let mut loss = 0.0;
    for (((g, r), t), m) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(dec.output.as_slice())
        .zip(target.as_slice())
        .zip(observed.as_slice())
    {
        if *m != 0.0 {
            let diff = r - t;
            loss += diff * diff;
            *g = 2.0 * diff / count;
        }
    }
    let (dec_grad, grad_latent) = params.decoder.backward(&dec, &grad);
    let (enc_grad, _) = params.encoder.backward(&enc, &grad_latent);
    (loss / count, enc_grad, dec_grad)
}

#[derive(Debug, Clone)]
pub struct MaeOutput {
    pub params: MaeParams,
    pub loss_trace: Vec<f64>,
}

pub fn train_mae(ds: &ObservedDataset, cfg: &MaeConfig) -> Result<MaeOutput> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty dataset".into()));
    }
    if cfg.input_dim != ds.dim() {
        return Err(Error::DimensionMismatch(format!(
            "MAE expects {} inputs, dataset has dimension {}",
            cfg.input_dim,
            ds.dim()
        )));
    }
    if cfg.batch_size > ds.len() {
        return Err(Error::config(format!(
            "batch_size {} exceeds the {} available samples",
            cfg.batch_size,
            ds.len()
        )));
    }
    let mut params = init_mae(cfg)?;
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut batch_rng = Rng::with_stream(cfg.seed, stream::BATCHES);
    let mut hide_rng = Rng::with_stream(cfg.seed, stream::VIEWS);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let d = ds.dim();
    let values = ds.values();
    let mask = ds.mask();

    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..ds.len()).collect();
        batch_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            let target = Matrix::from_fn(b, d, |i, c| values[(c, chunk[i])]);
            let observed = Matrix::from_fn(b, d, |i, c| mask[(c, chunk[i])]);
            let mut input = target.clone();
            for (v, m) in input.as_mut_slice().iter_mut().zip(observed.as_slice()) {
                if *m != 0.0 && hide_rng.bernoulli(cfg.mask_ratio) {
                    *v = 0.0;
                }
            }
            let (loss, enc_grad, dec_grad) = masked_loss_and_grad(&params, &input, &target, &observed);
            if !loss.is_finite() {
                return Err(Error::NonFinite("reconstruction loss"));
            }
            opt.begin_step();
            params.encoder.for_each_param(&enc_grad, |p, g| opt.update(p, g));
            params.decoder.for_each_param(&dec_grad, |p, g| opt.update(p, g));
            epoch_loss += loss;
            steps += 1;
        }
        if !params.encoder.is_finite() || !params.decoder.is_finite() {
            return Err(Error::NonFinite("model parameters"));
        }
        loss_trace.push(epoch_loss / steps.max(1) as f64);
    }
    Ok(MaeOutput { params, loss_trace })
}

/// Encoder output for every zero-filled sample.
pub fn encode(params: &MaeParams, ds: &ObservedDataset) -> Result<EmbeddingMatrix> {
    embed_with(&params.encoder, ds)
}
