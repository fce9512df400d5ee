//! Contrastive subspace-clustering model: a ReLU backbone, a projection head,
//! NT-Xent training on disjoint masked views, and head-free embedding.

mod loss;
pub mod mlp;
pub mod optim;

use serde::{Deserialize, Serialize};

use crate::augment::{sample_disjoint_views_with, ViewPair};
use crate::datagen::ObservedDataset;
use crate::error::{Error, Result};
use crate::numerics::{stream, Matrix, Rng};

pub use loss::{nt_xent_loss, NtXent};
pub use mlp::{Dense, Mlp, MlpGrad, ResidualMode};
pub use optim::{Optimizer, OptimizerConfig};

/// p×n matrix whose column `i` embeds sample `i`.
pub type EmbeddingMatrix = Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub input_dim: usize,
    /// Number of backbone layers `L`.
    pub depth: usize,
    pub width: usize,
    pub residual: ResidualMode,
    /// Backbone output dimension.
    pub embed_dim: usize,
    pub head_hidden: usize,
    /// Projection dimension.
    pub head_out: usize,
}

impl BackboneConfig {
    /// Depth 4, every width equal to the input dimension, 64-dim projections.
    pub fn for_input(input_dim: usize) -> Self {
        Self {
            input_dim,
            depth: 4,
            width: input_dim,
            residual: ResidualMode::None,
            embed_dim: input_dim,
            head_hidden: input_dim,
            head_out: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("backbone depth must be at least 1"));
        }
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("width", self.width),
            ("embed_dim", self.embed_dim),
            ("head_hidden", self.head_hidden),
            ("head_out", self.head_out),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// (inputs, outputs) of every backbone layer.
    pub fn backbone_dims(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let inp = if l == 0 { self.input_dim } else { self.width };
                let out = if l + 1 == self.depth {
                    self.embed_dim
                } else {
                    self.width
                };
                (inp, out)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Probability of keeping each entry assigned to a view.
    #[serde(default = "one")]
    pub view_keep_prob: f64,
    /// Draw the views once instead of every epoch.
    #[serde(default)]
    pub freeze_views: bool,
}

fn one() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 50,
            learning_rate: 1e-3,
            temperature: 0.5,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            view_keep_prob: 1.0,
            freeze_views: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::config("batch_size must be at least 2"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::config("temperature must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.view_keep_prob > 0.0 && self.view_keep_prob <= 1.0) {
            return Err(Error::config("view_keep_prob must lie in (0, 1]"));
        }
        self.optimizer.validate()
    }
}

/// Backbone `f` and projection head `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub backbone: Mlp,
    pub head: Mlp,
}

#[derive(Debug, Clone)]
pub struct ModelGrad {
    pub backbone: MlpGrad,
    pub head: MlpGrad,
}

impl ModelParams {
    pub fn embed_dim(&self) -> usize {
        self.backbone.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.backbone.input_dim()
    }

    fn apply(&mut self, grads: &ModelGrad, opt: &mut Optimizer) {
        opt.begin_step();
        self.backbone.for_each_param(&grads.backbone, |p, g| opt.update(p, g));
        self.head.for_each_param(&grads.head, |p, g| opt.update(p, g));
    }
}

pub fn init_model(cfg: &BackboneConfig, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = Rng::with_stream(seed, stream::INIT);
    let backbone_layers = cfg
        .backbone_dims()
        .into_iter()
        .map(|(i, o)| Dense::he_normal(i, o, &mut rng))
        .collect();
    let backbone = Mlp::new(backbone_layers, cfg.residual, false)?;
    let head = Mlp::new(
        vec![
            Dense::he_normal(cfg.embed_dim, cfg.head_hidden, &mut rng),
            Dense::he_normal(cfg.head_hidden, cfg.head_out, &mut rng),
        ],
        ResidualMode::None,
        true,
    )?;
    Ok(ModelParams { backbone, head })
}

/// Representation `h = f(x)` and projection `z = g(h)` of a single vector.
pub fn forward(params: &ModelParams, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let batch = Matrix::from_vec(1, x.len(), x.to_vec()).expect("finite input");
    let h = params.backbone.forward(&batch);
    let z = params.head.forward(&h);
    (h.into_vec(), z.into_vec())
}

/// NT-Xent loss of one minibatch of view pairs (rows of `view_a`/`view_b`)
/// and its exact gradient w.r.t. every parameter.
pub fn batch_loss_and_grad(
    params: &ModelParams,
    view_a: &Matrix,
    view_b: &Matrix,
    tau: f64,
) -> Result<(f64, ModelGrad)> {
    let n = view_a.rows();
    let d = view_a.cols();
    let mut stacked = Matrix::zeros(2 * n, d);
    for i in 0..n {
        stacked.row_mut(i).copy_from_slice(view_a.row(i));
        stacked.row_mut(n + i).copy_from_slice(view_b.row(i));
    }
    let back_trace = params.backbone.forward_trace(&stacked);
    let head_trace = params.head.forward_trace(&back_trace.output);
    let z = &head_trace.output;
    let q = z.cols();
    let z_a = Matrix::from_fn(n, q, |i, j| z[(i, j)]);
    let z_b = Matrix::from_fn(n, q, |i, j| z[(n + i, j)]);
    let NtXent { loss, grad_a, grad_b } = nt_xent_loss(&z_a, &z_b, tau)?;
    let mut grad_z = Matrix::zeros(2 * n, q);
    for i in 0..n {
        grad_z.row_mut(i).copy_from_slice(grad_a.row(i));
        grad_z.row_mut(n + i).copy_from_slice(grad_b.row(i));
    }
    let (head, grad_h) = params.head.backward(&head_trace, &grad_z);
    let (backbone, _) = params.backbone.backward(&back_trace, &grad_h);
    Ok((loss, ModelGrad { backbone, head }))
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    /// Mean minibatch loss of every epoch.
    pub loss_trace: Vec<f64>,
}

// Retries for a view pair with an empty side before giving up on it for this epoch.
const VIEW_RETRIES: usize = 16;

/// Draws views for one sample, retrying while either view is empty.
pub(crate) fn draw_views(y: &[f64], m: &[f64], keep_prob: f64, rng: &mut Rng) -> Option<ViewPair> {
    for _ in 0..VIEW_RETRIES {
        let pair = sample_disjoint_views_with(y, m, keep_prob, rng);
        let nonempty = |mask: &[f64]| mask.iter().any(|&v| v != 0.0);
        if nonempty(&pair.mask_a) && nonempty(&pair.mask_b) {
            return Some(pair);
        }
    }
    None
}

/// Contrastive training with NT-Xent on freshly drawn disjoint views.
///
/// Every epoch shuffles the samples, cuts them into minibatches of
/// `batch_size` (a trailing batch with fewer than two samples is dropped) and
/// takes one optimizer step per minibatch. Samples with fewer than two
/// observed entries cannot be split into two nonempty views and are skipped.
pub fn train(ds: &ObservedDataset, bcfg: &BackboneConfig, tcfg: &TrainConfig) -> Result<TrainOutput> {
    bcfg.validate()?;
    tcfg.validate()?;
    if ds.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty dataset".into()));
    }
    if bcfg.input_dim != ds.dim() {
        return Err(Error::DimensionMismatch(format!(
            "backbone expects {} inputs, dataset has dimension {}",
            bcfg.input_dim,
            ds.dim()
        )));
    }
    if tcfg.batch_size > ds.len() {
        return Err(Error::config(format!(
            "batch_size {} exceeds the {} available samples",
            tcfg.batch_size,
            ds.len()
        )));
    }
    let mut params = init_model(bcfg, tcfg.seed)?;
    let mut loss_trace = Vec::with_capacity(tcfg.epochs);
    if tcfg.epochs == 0 {
        return Ok(TrainOutput { params, loss_trace });
    }

    let columns: Vec<(Vec<f64>, Vec<f64>)> = (0..ds.len()).map(|j| (ds.sample(j), ds.sample_mask(j))).collect();
    let trainable: Vec<usize> = (0..ds.len())
        .filter(|&j| columns[j].1.iter().filter(|&&m| m != 0.0).count() >= 2)
        .collect();
    if trainable.len() < 2 {
        return Err(Error::InvalidInput(
            "fewer than two samples have two or more observed entries".into(),
        ));
    }

    let mut batch_rng = Rng::with_stream(tcfg.seed, stream::BATCHES);
    let mut view_rng = Rng::with_stream(tcfg.seed, stream::VIEWS);
    let mut opt = Optimizer::new(tcfg.optimizer, tcfg.learning_rate);
    let mut frozen: Option<Vec<Option<ViewPair>>> = None;
    let d = ds.dim();

    for _epoch in 0..tcfg.epochs {
        let mut order = trainable.clone();
        batch_rng.shuffle(&mut order);

        if tcfg.freeze_views && frozen.is_none() {
            frozen = Some(
                columns
                    .iter()
                    .map(|(y, m)| draw_views(y, m, tcfg.view_keep_prob, &mut view_rng))
                    .collect(),
            );
        }

        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(tcfg.batch_size) {
            let pairs: Vec<ViewPair> = chunk
                .iter()
                .filter_map(|&j| match &frozen {
                    Some(views) => views[j].clone(),
                    None => draw_views(&columns[j].0, &columns[j].1, tcfg.view_keep_prob, &mut view_rng),
                })
                .collect();
            if pairs.len() < 2 {
                continue;
            }
            let view_a = Matrix::from_fn(pairs.len(), d, |i, c| pairs[i].view_a[c]);
            let view_b = Matrix::from_fn(pairs.len(), d, |i, c| pairs[i].view_b[c]);
            let (loss, grads) = batch_loss_and_grad(&params, &view_a, &view_b, tcfg.temperature)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("contrastive loss"));
            }
            params.apply(&grads, &mut opt);
            epoch_loss += loss;
            steps += 1;
        }
        if !params.backbone.is_finite() || !params.head.is_finite() {
            return Err(Error::NonFinite("model parameters"));
        }
        loss_trace.push(if steps > 0 { epoch_loss / steps as f64 } else { f64::NAN });
    }
    Ok(TrainOutput { params, loss_trace })
}

/// Rows of a batch built from dataset columns.
pub(crate) fn columns_as_rows(values: &Matrix, cols: std::ops::Range<usize>) -> Matrix {
    let d = values.rows();
    let start = cols.start;
    Matrix::from_fn(cols.len(), d, |i, c| values[(c, start + i)])
}

/// Backbone embedding of every zero-filled sample; the head is not applied.
pub fn embed(params: &ModelParams, ds: &ObservedDataset) -> Result<EmbeddingMatrix> {
    embed_with(&params.backbone, ds)
}

pub(crate) fn embed_with(net: &Mlp, ds: &ObservedDataset) -> Result<EmbeddingMatrix> {
    if ds.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} inputs, dataset has dimension {}",
            net.input_dim(),
            ds.dim()
        )));
    }
    const CHUNK: usize = 512;
    let n = ds.len();
    let mut out = Matrix::zeros(net.output_dim(), n);
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let h = net.forward(&columns_as_rows(ds.values(), start..end));
        for i in 0..(end - start) {
            out.set_col(start + i, h.row(i));
        }
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model(cfg: &BackboneConfig) -> ModelParams {
        let mut p = init_model(cfg, 0).unwrap();
        for l in p.backbone.layers.iter_mut().chain(p.head.layers.iter_mut()) {
            *l = Dense::zeros(l.inputs(), l.outputs());
        }
        p
    }

    #[test]
    fn init_shapes_and_determinism() {
        let mut cfg = BackboneConfig::for_input(4);
        cfg.depth = 1;
        cfg.head_out = 3;
        let p = init_model(&cfg, 7).unwrap();
        assert_eq!(p.backbone.layers.len(), 1);
        assert_eq!(p.backbone.layers[0].weight.shape(), (4, 4));
        assert_eq!(p.backbone.layers[0].bias, vec![0.0; 4]);
        assert_eq!(p.head.layers.len(), 2);
        assert_eq!(p.head.output_dim(), 3);
        assert_eq!(p, init_model(&cfg, 7).unwrap());
        assert_ne!(p, init_model(&cfg, 8).unwrap());
    }

    #[test]
    fn deep_forward_of_zero_is_finite() {
        let mut cfg = BackboneConfig::for_input(6);
        cfg.depth = 8;
        let p = init_model(&cfg, 1).unwrap();
        let (h, z) = forward(&p, &[0.0; 6]);
        assert!(h.iter().chain(&z).all(|v| v.is_finite()));
    }

    #[test]
    fn residual_width_mismatch_is_invalid() {
        let mut cfg = BackboneConfig::for_input(6);
        cfg.residual = ResidualMode::Full;
        cfg.width = 8;
        assert!(matches!(init_model(&cfg, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let cfg = BackboneConfig::for_input(5);
        let p = init_model(&cfg, 3).unwrap();
        let (h, z) = forward(&p, &[0.0; 5]);
        assert!(h.iter().chain(&z).all(|&v| v == 0.0));
    }

    #[test]
    fn single_identity_layer_is_relu() {
        let mut cfg = BackboneConfig::for_input(3);
        cfg.depth = 1;
        let mut p = init_model(&cfg, 0).unwrap();
        p.backbone.layers[0] = Dense {
            weight: Matrix::identity(3),
            bias: vec![0.0; 3],
        };
        let (h, _) = forward(&p, &[1.5, -2.0, 0.25]);
        assert_eq!(h, vec![1.5, 0.0, 0.25]);
    }

    #[test]
    fn full_residual_with_zero_weights_passes_input() {
        // Three layers, zero weights and biases: each Full layer returns
        // ReLU(0) + u = u, each plain layer returns ReLU(0) = 0.
        let x = [0.5, 2.0, 0.0, 1.25];
        for (mode, expected) in [
            (ResidualMode::Full, x.to_vec()),
            (ResidualMode::None, vec![0.0; 4]),
            (ResidualMode::Block, x.to_vec()),
        ] {
            let mut cfg = BackboneConfig::for_input(4);
            cfg.depth = 3;
            cfg.residual = mode;
            let p = zero_model(&cfg);
            assert_eq!(forward(&p, &x).0, expected, "{mode:?}");
        }
    }

    #[test]
    fn embed_zero_model_and_columnwise() {
        let values = Matrix::from_rows(&[vec![1.0, -1.0, 0.5], vec![0.0, 2.0, 0.25]]).unwrap();
        let ds = ObservedDataset::complete(values, None).unwrap();
        let cfg = BackboneConfig::for_input(2);
        assert!(embed(&zero_model(&cfg), &ds)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));

        let p = init_model(&cfg, 5).unwrap();
        let full = embed(&p, &ds).unwrap();
        for j in 0..3 {
            let single = embed(&p, &ds.select(&[j])).unwrap();
            assert_eq!(single.col(0), full.col(j));
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let values = Matrix::from_fn(3, 6, |i, j| (i + j) as f64 + 1.0);
        let ds = ObservedDataset::complete(values, None).unwrap();
        let cfg = BackboneConfig::for_input(3);
        let tcfg = TrainConfig {
            epochs: 0,
            batch_size: 4,
            seed: 2,
            ..TrainConfig::default()
        };
        let out = train(&ds, &cfg, &tcfg).unwrap();
        assert!(out.loss_trace.is_empty());
        assert_eq!(out.params, init_model(&cfg, 2).unwrap());
    }

    #[test]
    fn batch_larger_than_data_rejected() {
        let ds = ObservedDataset::complete(Matrix::from_fn(3, 4, |i, j| (i * j) as f64 + 1.0), None).unwrap();
        let tcfg = TrainConfig {
            batch_size: 5,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&ds, &BackboneConfig::for_input(3), &tcfg),
            Err(Error::InvalidConfig(_))
        ));
    }
}
