//! JSON checkpoints for trained models.
//!
//! Layout:
//!
//! ```json
//! { "format": 1, "kind": "csc", "config": { ...BackboneConfig... },
//!   "params": { "backbone": <mlp>, "head": <mlp> } }
//! { "format": 1, "kind": "mae", "config": { ...MaeConfig... },
//!   "params": { "encoder": <mlp>, "decoder": <mlp> } }
//! ```
//!
//! An `<mlp>` is `{ "layers": [{ "weight": <matrix>, "bias": [..] }, ..],
//! "residual": "full" | "block" | "none", "linear_output": bool }` and a
//! `<matrix>` is `{ "rows": r, "cols": c, "data": [row-major values] }`.
//! Weights are `outputs × inputs`. Floats are written in shortest
//! round-trip form, so saving and loading is exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contrastive::{BackboneConfig, EmbeddingMatrix, Mlp, ModelParams};
use crate::datagen::ObservedDataset;
use crate::error::{Error, Result};
use crate::mae::{MaeConfig, MaeParams};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Checkpoint {
    Csc {
        config: BackboneConfig,
        params: ModelParams,
    },
    Mae {
        config: MaeConfig,
        params: MaeParams,
    },
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: u32,
    #[serde(flatten)]
    checkpoint: Checkpoint,
}

fn check_dims(net: &Mlp, expected: &[(usize, usize)], what: &str) -> Result<()> {
    net.validate()?;
    let actual: Vec<(usize, usize)> = net.layers.iter().map(|l| (l.inputs(), l.outputs())).collect();
    if actual != expected {
        return Err(Error::DimensionMismatch(format!(
            "{what} layers {actual:?} do not match the configuration {expected:?}"
        )));
    }
    Ok(())
}

impl Checkpoint {
    pub fn kind(&self) -> &'static str {
        match self {
            Checkpoint::Csc { .. } => "csc",
            Checkpoint::Mae { .. } => "mae",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Checkpoint::Csc { params, .. } => params.input_dim(),
            Checkpoint::Mae { params, .. } => params.encoder.input_dim(),
        }
    }

    /// Checks that every layer matrix matches the stored configuration.
    pub fn validate(&self) -> Result<()> {
        match self {
            Checkpoint::Csc { config, params } => {
                config.validate()?;
                if params.backbone.residual != config.residual {
                    return Err(Error::config("backbone residual mode differs from the configuration"));
                }
                check_dims(&params.backbone, &config.backbone_dims(), "backbone")?;
                check_dims(
                    &params.head,
                    &[
                        (config.embed_dim, config.head_hidden),
                        (config.head_hidden, config.head_out),
                    ],
                    "head",
                )
            }
            Checkpoint::Mae { config, params } => {
                config.validate()?;
                let probe = crate::mae::init_mae(config)?;
                let dims = |m: &Mlp| m.layers.iter().map(|l| (l.inputs(), l.outputs())).collect::<Vec<_>>();
                check_dims(&params.encoder, &dims(&probe.encoder), "encoder")?;
                check_dims(&params.decoder, &dims(&probe.decoder), "decoder")
            }
        }
    }

    /// Representation of every sample: backbone output or MAE code.
    pub fn embed(&self, ds: &ObservedDataset) -> Result<EmbeddingMatrix> {
        match self {
            Checkpoint::Csc { params, .. } => crate::contrastive::embed(params, ds),
            Checkpoint::Mae { params, .. } => crate::mae::encode(params, ds),
        }
    }

    pub fn to_json(&self) -> String {
        let env = Envelope {
            format: FORMAT_VERSION,
            checkpoint: self.clone(),
        };
        serde_json::to_string(&env).expect("checkpoint serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let env: Envelope = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if env.format != FORMAT_VERSION {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("unsupported checkpoint format {}", env.format),
            });
        }
        env.checkpoint.validate()?;
        Ok(env.checkpoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrastive::{init_model, ResidualMode};
    use crate::mae::init_mae;

    #[test]
    fn csc_round_trip_is_exact() {
        let mut cfg = BackboneConfig::for_input(7);
        cfg.depth = 3;
        cfg.residual = ResidualMode::Block;
        let params = init_model(&cfg, 11).unwrap();
        let ck = Checkpoint::Csc { config: cfg, params };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_json(), ck.to_json());
    }

    #[test]
    fn mae_round_trip_is_exact() {
        let mut cfg = MaeConfig::for_input(5);
        cfg.bottleneck = 3;
        let ck = Checkpoint::Mae {
            params: init_mae(&cfg).unwrap(),
            config: cfg,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mae.json");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        assert!(ck.to_json().contains("\"kind\":\"mae\""));
    }

    #[test]
    fn mismatched_layers_are_rejected() {
        let cfg = BackboneConfig::for_input(4);
        let params = init_model(&cfg, 0).unwrap();
        let mut wrong = cfg.clone();
        wrong.head_out = 9;
        let ck = Checkpoint::Csc { config: wrong, params };
        assert!(matches!(ck.validate(), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn bad_format_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Json { .. })));
        let ck = Checkpoint::Csc {
            config: BackboneConfig::for_input(2),
            params: init_model(&BackboneConfig::for_input(2), 0).unwrap(),
        };
        std::fs::write(&path, ck.to_json().replace("\"format\":1", "\"format\":7")).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Parse { .. })));
    }
}
