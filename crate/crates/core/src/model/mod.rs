//! Modality encoders and the transformer fusion head.
//!
//! Every encoder maps its input to a `d`-dimensional token. The fusion head
//! prepends a learnable CLS token, adds positional embeddings looked up by
//! modality identity (not by sequence position), runs pre-norm transformer
//! layers and classifies the CLS output into a posterior over the beams.

mod checkpoint;
mod params;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_FILE};
pub use params::{Bound, ParamStore};

use crate::beamcore::{argmax_lowest, BeamIndex};
use crate::error::{Error, Result};
use crate::modality::{Modality, ModalitySet};
use crate::tensor::{Element, Graph, Tensor, Var};

/// Which transformer output feeds the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    Cls,
    /// Mean over the modality tokens, CLS excluded.
    MeanPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_beams: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    /// Output channels of the three convolutions in the image encoders.
    pub conv_channels: [usize; 3],
    /// Square kernel side of the image-encoder convolutions (odd).
    pub conv_kernel: usize,
    /// Side of the adaptive pool before the image-encoder projection.
    pub pool_size: usize,
    /// Width of the normalized GPS feature vector.
    pub gps_width: usize,
    pub readout: Readout,
    pub layer_norm_eps: f64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            num_beams: 64,
            layers: 2,
            heads: 4,
            ffn_mult: 4,
            conv_channels: [8, 16, 16],
            conv_kernel: 3,
            pool_size: 4,
            gps_width: 4,
            readout: Readout::Cls,
            layer_norm_eps: 1e-5,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: &str| Err(Error::config(format!("model.{f}"), m));
        if self.embed_dim == 0 || self.heads == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return bad("embed_dim", "must be a positive multiple of heads");
        }
        if self.num_beams < 2 {
            return bad("num_beams", "need at least two beams");
        }
        if self.ffn_mult == 0 || self.pool_size == 0 || self.conv_channels.contains(&0) {
            return bad("conv_channels", "widths must be positive");
        }
        if self.conv_kernel.is_multiple_of(2) {
            return bad("conv_kernel", "must be odd");
        }
        if self.gps_width == 0 {
            return bad("gps_width", "must be positive");
        }
        Ok(())
    }

    /// Input channels of each image encoder.
    pub fn image_channels(m: Modality) -> Option<usize> {
        match m {
            Modality::Camera => Some(3),
            Modality::Lidar => Some(1),
            Modality::Radar => Some(2),
            _ => None,
        }
    }
}

/// Normalized posterior over the beams.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPosterior(Vec<f64>);

impl BeamPosterior {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.len() < 2 || probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-5 {
            return Err(Error::NumericDomain(format!(
                "posterior of length {} sums to {sum}",
                probs.len()
            )));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

/// Most probable beam, lowest index on ties.
pub fn predict_beam(posterior: &BeamPosterior) -> BeamIndex {
    argmax_lowest(posterior.probs()).unwrap_or(0)
}

/// Handles into the graph produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub logits: Var,
    pub probs: Var,
    /// Fusion input `[n, 1 + k, d]` after positional embeddings.
    pub tokens: Var,
    /// The positional rows that were added, `[1 + k, d]`.
    pub positions: Var,
}

/// The full encoder and fusion model.
#[derive(Debug, Clone)]
pub struct FusionModel<T> {
    config: ModelConfig,
    params: ParamStore<T>,
}

const POSITION_ROWS: usize = 1 + Modality::ALL.len();

fn position_row(m: Option<Modality>) -> usize {
    m.map_or(0, |m| 1 + m.index())
}

impl<T: Element> FusionModel<T> {
    /// Freshly initialized, deterministic in `config.init_seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut p = ParamStore::seeded(config.init_seed);
        let d = config.embed_dim;
        for (m, width) in [(Modality::MmWave, config.num_beams), (Modality::Gps, config.gps_width)] {
            p.linear(&format!("{}.fc1", m.key()), width, 2 * d);
            p.linear(&format!("{}.fc2", m.key()), 2 * d, d);
        }
        for m in [Modality::Camera, Modality::Lidar, Modality::Radar] {
            let mut c_in = ModelConfig::image_channels(m).unwrap();
            for (i, &c_out) in config.conv_channels.iter().enumerate() {
                p.conv(&format!("{}.conv{}", m.key(), i + 1), c_in, c_out, config.conv_kernel);
                c_in = c_out;
            }
            let flat = c_in * config.pool_size * config.pool_size;
            p.linear(&format!("{}.proj", m.key()), flat, d);
        }
        p.normal("fusion.cls", &[d], 0.02);
        p.normal("fusion.pos", &[POSITION_ROWS, d], 0.02);
        for l in 0..config.layers {
            let pre = format!("layer{l}");
            p.layer_norm(&format!("{pre}.ln1"), d);
            for proj in ["q", "k", "v", "o"] {
                p.linear(&format!("{pre}.attn.{proj}"), d, d);
            }
            p.layer_norm(&format!("{pre}.ln2"), d);
            p.linear(&format!("{pre}.ffn.fc1"), d, config.ffn_mult * d);
            p.linear(&format!("{pre}.ffn.fc2"), config.ffn_mult * d, d);
        }
        p.layer_norm("final_ln", d);
        p.linear("head", d, config.num_beams);
        Ok(Self {
            config,
            params: p.finish(),
        })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let reference = FusionModel::<T>::new(config.clone())?;
        for (name, t) in reference.params.iter() {
            let got = params
                .get(name)
                .ok_or_else(|| Error::invalid(format!("parameter '{name}' missing")))?;
            if got.dims() != t.dims() {
                return Err(Error::shape("checkpoint parameter", t.dims(), got.dims()));
            }
        }
        if params.len() != reference.params.len() {
            return Err(Error::invalid("checkpoint has unexpected parameters"));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Element>(&self) -> FusionModel<U> {
        FusionModel {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    /// Registers every parameter on `g` as a trainable leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        self.params.bind(g, true)
    }

    /// Registers every parameter as a constant (inference only).
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Bound {
        self.params.bind(g, false)
    }

    fn linear(&self, g: &mut Graph<T>, p: &Bound, name: &str, x: Var) -> Result<Var> {
        let y = g.matmul(x, p.var(&format!("{name}.w"))?)?;
        g.add(y, p.var(&format!("{name}.b"))?)
    }

    /// Two-layer MLP encoder used for mmWave powers and GPS features.
    pub fn encode_vector(&self, g: &mut Graph<T>, p: &Bound, m: Modality, x: Var) -> Result<Var> {
        let width = match m {
            Modality::MmWave => self.config.num_beams,
            Modality::Gps => self.config.gps_width,
            _ => return Err(Error::invalid(format!("{m} is not a vector modality"))),
        };
        let dims = g.dims(x).to_vec();
        if dims.len() != 2 || dims[1] != width {
            return Err(Error::shape("encode_vector", &dims, &[width]));
        }
        let h = self.linear(g, p, &format!("{}.fc1", m.key()), x)?;
        let h = g.relu(h);
        let h = self.linear(g, p, &format!("{}.fc2", m.key()), h)?;
        Ok(g.relu(h))
    }

    /// Three-conv CNN encoder for camera, LiDAR BEV and radar maps.
    pub fn encode_image(&self, g: &mut Graph<T>, p: &Bound, m: Modality, x: Var) -> Result<Var> {
        let channels =
            ModelConfig::image_channels(m).ok_or_else(|| Error::invalid(format!("{m} is not an image modality")))?;
        let dims = g.dims(x).to_vec();
        if dims.len() != 4 || dims[1] != channels || dims[2] < 4 || dims[3] < 4 {
            return Err(Error::shape("encode_image", &dims, &[channels, 4, 4]));
        }
        let mut h = x;
        for i in 1..=3 {
            let name = format!("{}.conv{i}", m.key());
            h = g.conv2d(
                h,
                p.var(&format!("{name}.w"))?,
                Some(p.var(&format!("{name}.b"))?),
                1,
                self.config.conv_kernel / 2,
            )?;
            h = g.relu(h);
            if i < 3 {
                h = g.maxpool2d(h, 2, 2)?;
            }
        }
        let s = self.config.pool_size;
        h = g.avgpool_adaptive(h, s, s)?;
        let flat = self.config.conv_channels[2] * s * s;
        h = g.reshape(h, &[dims[0], flat])?;
        self.linear(g, p, &format!("{}.proj", m.key()), h)
    }

    pub fn encode(&self, g: &mut Graph<T>, p: &Bound, m: Modality, x: Var) -> Result<Var> {
        match m {
            Modality::MmWave | Modality::Gps => self.encode_vector(g, p, m, x),
            _ => self.encode_image(g, p, m, x),
        }
    }

    /// One pre-norm transformer layer over `x[n, T, d]`.
    pub fn encoder_layer(&self, g: &mut Graph<T>, p: &Bound, layer: usize, x: Var) -> Result<Var> {
        let pre = format!("layer{layer}");
        let eps = self.config.layer_norm_eps;
        let h = g.layer_norm(x, p.var(&format!("{pre}.ln1.g"))?, p.var(&format!("{pre}.ln1.b"))?, eps)?;
        let q = self.linear(g, p, &format!("{pre}.attn.q"), h)?;
        let k = self.linear(g, p, &format!("{pre}.attn.k"), h)?;
        let v = self.linear(g, p, &format!("{pre}.attn.v"), h)?;
        let a = g.scaled_dot_product_attention(q, k, v, self.config.heads)?;
        let o = self.linear(g, p, &format!("{pre}.attn.o"), a)?;
        let x = g.add(x, o)?;
        let h = g.layer_norm(x, p.var(&format!("{pre}.ln2.g"))?, p.var(&format!("{pre}.ln2.b"))?, eps)?;
        let f = self.linear(g, p, &format!("{pre}.ffn.fc1"), h)?;
        let f = g.relu(f);
        let f = self.linear(g, p, &format!("{pre}.ffn.fc2"), f)?;
        g.add(x, f)
    }

    /// Encodes every supplied modality and fuses them into a posterior.
    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, inputs: &BTreeMap<Modality, Var>) -> Result<Forward> {
        let present: ModalitySet = inputs.keys().copied().collect();
        if present.is_empty() {
            return Err(Error::invalid("fusion needs at least one modality"));
        }
        let d = self.config.embed_dim;
        let n = g.dims(inputs[&present.iter().next().unwrap()])[0];
        let zeros = g.input(Tensor::zeros(&[n, 1, d]));
        let mut seq = vec![g.add(zeros, p.var("fusion.cls")?)?];
        let mut rows = vec![position_row(None)];
        for m in present.iter() {
            let x = inputs[&m];
            if g.dims(x)[0] != n {
                return Err(Error::shape("fusion batch", &[n], g.dims(x)));
            }
            let e = self.encode(g, p, m, x)?;
            seq.push(g.reshape(e, &[n, 1, d])?);
            rows.push(position_row(Some(m)));
        }
        let tokens = g.concat(&seq, 1)?;
        let positions = g.embedding_lookup(p.var("fusion.pos")?, &rows)?;
        let tokens = g.add(tokens, positions)?;
        let mut x = tokens;
        for l in 0..self.config.layers {
            x = self.encoder_layer(g, p, l, x)?;
        }
        let x = g.layer_norm(
            x,
            p.var("final_ln.g")?,
            p.var("final_ln.b")?,
            self.config.layer_norm_eps,
        )?;
        let pooled = match self.config.readout {
            Readout::Cls => {
                let c = g.narrow(x, 1, 0, 1)?;
                g.reshape(c, &[n, d])?
            }
            Readout::MeanPool => {
                let t = g.narrow(x, 1, 1, rows.len() - 1)?;
                g.mean_axis(t, 1)?
            }
        };
        let logits = self.linear(g, p, "head", pooled)?;
        let probs = g.softmax(logits, 1)?;
        Ok(Forward {
            logits,
            probs,
            tokens,
            positions,
        })
    }

    /// Inference on concrete inputs, one posterior per sample.
    pub fn predict(&self, inputs: &BTreeMap<Modality, Tensor<T>>) -> Result<Vec<BeamPosterior>> {
        let mut g = Graph::new();
        let p = self.bind_frozen(&mut g);
        let vars = inputs.iter().map(|(m, t)| (*m, g.input(t.clone()))).collect();
        let out = self.forward(&mut g, &p, &vars)?;
        let b = self.config.num_beams;
        g.value(out.probs)
            .data()
            .chunks_exact(b)
            .map(|row| BeamPosterior::new(row.iter().map(|v| v.as_f64()).collect()))
            .collect()
    }
}
