//! MLP classifier with a classification head and a contrastive projector head.
//!
//! ```text
//! x ─ encoder (Linear+ReLU)* ─ h ─┬─ head ─ logits ─ softmax ─ q
//!                                 └─ Linear ─ ReLU ─ Linear ─ l2norm ─ z
//! ```
//!
//! Parameters serialize to a versioned JSON document:
//!
//! ```text
//! { "format": "fairdd-network", "version": 1, "config": {...},
//!   "layers": [ { "name": "encoder.0.weight", "shape": [in, out], "values": [...] }, ... ] }
//! ```
//!
//! Weights are stored `[fan_in, fan_out]` so a batch multiplies as `x · W + b`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

pub const PARAMS_FORMAT: &str = "fairdd-network";
pub const PARAMS_VERSION: u32 = 1;

fn default_projector_dim() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    #[serde(default = "default_projector_dim")]
    pub projector_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.projector_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "network dimensions must be >= 1: {self:?}"
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn encoder_output_dim(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(self.input_dim)
    }

    /// `(name, fan_in, fan_out)` for every linear layer, in parameter order.
    fn layer_dims(&self) -> Vec<(String, usize, usize)> {
        let mut dims = Vec::new();
        let mut fan_in = self.input_dim;
        for (i, &h) in self.hidden_dims.iter().enumerate() {
            dims.push((format!("encoder.{i}"), fan_in, h));
            fan_in = h;
        }
        dims.push(("head".to_string(), fan_in, self.num_classes));
        dims.push(("projector.0".to_string(), fan_in, self.projector_dim));
        dims.push((
            "projector.1".to_string(),
            self.projector_dim,
            self.projector_dim,
        ));
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(_, i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-s..=s))
            .collect();
        Self {
            weight: Tensor::new(vec![fan_in, fan_out], data).expect("consistent shape"),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    encoder: Vec<Linear>,
    head: Linear,
    projector: [Linear; 2],
}

/// Graph handles for one network's parameters.
#[derive(Debug, Clone)]
pub struct BoundNetwork {
    encoder: Vec<(Var, Var)>,
    head: (Var, Var),
    projector: [(Var, Var); 2],
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub logits: Var,
    pub probs: Var,
    pub embeddings: Var,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut layers: Vec<Linear> = config
            .layer_dims()
            .iter()
            .map(|(_, i, o)| Linear::glorot(*i, *o, &mut rng))
            .collect();
        let p1 = layers.pop().expect("projector.1");
        let p0 = layers.pop().expect("projector.0");
        let head = layers.pop().expect("head");
        Ok(Self {
            config,
            encoder: layers,
            head,
            projector: [p0, p1],
        })
    }

    /// Same architecture with every parameter set to zero.
    pub fn zeroed(config: NetworkConfig) -> Result<Self> {
        let mut net = Self::new(config)?;
        for p in net.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Parameters in canonical order: encoder layers, head, projector.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoder
            .iter_mut()
            .chain(std::iter::once(&mut self.head))
            .chain(self.projector.iter_mut())
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.config
            .layer_dims()
            .into_iter()
            .flat_map(|(n, _, _)| [format!("{n}.weight"), format!("{n}.bias")])
            .collect()
    }

    /// Indices of the head's weight and bias within [`Network::params`].
    pub fn head_param_range(&self) -> std::ops::Range<usize> {
        let start = 2 * self.encoder.len();
        start..start + 2
    }

    /// Indices of the projector parameters within [`Network::params`].
    pub fn projector_param_range(&self) -> std::ops::Range<usize> {
        let start = 2 * self.encoder.len() + 2;
        start..start + 4
    }

    fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.encoder
            .iter()
            .chain(std::iter::once(&self.head))
            .chain(self.projector.iter())
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Registers parameters as graph leaves. Non-trainable binding makes them constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundNetwork {
        let mut leaf = |t: &Tensor| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        let mut bind_layer = |l: &Linear| (leaf(&l.weight), leaf(&l.bias));
        let encoder = self.encoder.iter().map(&mut bind_layer).collect();
        let head = bind_layer(&self.head);
        let projector = [
            bind_layer(&self.projector[0]),
            bind_layer(&self.projector[1]),
        ];
        BoundNetwork {
            encoder,
            head,
            projector,
        }
    }

    pub fn check_input(&self, features: &Tensor) -> Result<()> {
        match features.shape() {
            [_, w] if *w == self.config.input_dim => Ok(()),
            other => Err(Error::ShapeMismatch {
                op: "network input",
                lhs: other.to_vec(),
                rhs: vec![0, self.config.input_dim],
            }),
        }
    }

    /// Class probabilities without recording gradients.
    pub fn predict_proba(&self, features: &Tensor) -> Result<Tensor> {
        self.check_input(features)?;
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let x = g.constant(features.clone());
        let (_, probs) = bound.classify(&mut g, x)?;
        Ok(g.value(probs).clone())
    }

    /// Logits, probabilities and embeddings as plain tensors.
    pub fn forward_values(&self, features: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        self.check_input(features)?;
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let x = g.constant(features.clone());
        let out = bound.forward(&mut g, x)?;
        Ok((
            g.value(out.logits).clone(),
            g.value(out.probs).clone(),
            g.value(out.embeddings).clone(),
        ))
    }

    pub fn predict(&self, features: &Tensor) -> Result<Vec<usize>> {
        let q = self.predict_proba(features)?;
        Ok((0..q.rows()).map(|i| argmax(q.row(i))).collect())
    }

    pub fn snapshot(&self) -> NetworkParams {
        let layers = self
            .param_names()
            .into_iter()
            .zip(self.params())
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                values: t.data().to_vec(),
            })
            .collect();
        NetworkParams {
            format: PARAMS_FORMAT.to_string(),
            version: PARAMS_VERSION,
            config: self.config.clone(),
            layers,
        }
    }

    pub fn restore(&mut self, params: &NetworkParams) -> Result<()> {
        params.check_header()?;
        if params.config != self.config {
            return Err(Error::InvalidInput(format!(
                "parameter config {:?} does not match network config {:?}",
                params.config, self.config
            )));
        }
        let names = self.param_names();
        if params.layers.len() != names.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameter tensors, got {}",
                names.len(),
                params.layers.len()
            )));
        }
        for ((name, layer), target) in names.iter().zip(&params.layers).zip(self.params()) {
            if &layer.name != name || layer.shape != target.shape() {
                return Err(Error::InvalidInput(format!(
                    "parameter {} {:?} does not match expected {name} {:?}",
                    layer.name,
                    layer.shape,
                    target.shape()
                )));
            }
        }
        for (layer, target) in params.layers.iter().zip(self.params_mut()) {
            target.data_mut().copy_from_slice(&layer.values);
        }
        Ok(())
    }

    pub fn from_params(params: &NetworkParams) -> Result<Self> {
        let mut net = Self::new(params.config.clone())?;
        net.restore(params)?;
        Ok(net)
    }

    /// Copies these parameters into `target`, which must share the architecture.
    pub fn copy_into(&self, target: &mut Network) -> Result<()> {
        let same_shape = NetworkConfig {
            seed: 0,
            ..self.config.clone()
        } == NetworkConfig {
            seed: 0,
            ..target.config.clone()
        };
        if !same_shape {
            return Err(Error::InvalidInput(
                "cannot copy between networks with different configs".into(),
            ));
        }
        target.clone_from(self);
        Ok(())
    }

    /// SHA-256 over the parameter bit patterns, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for p in self.params() {
            for v in p.data() {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

impl BoundNetwork {
    /// All parameter handles in canonical order.
    pub fn vars(&self) -> Vec<Var> {
        self.encoder
            .iter()
            .chain(std::iter::once(&self.head))
            .chain(self.projector.iter())
            .flat_map(|&(w, b)| [w, b])
            .collect()
    }

    fn encode(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut h = x;
        for &(w, b) in &self.encoder {
            let z = g.matmul(h, w)?;
            let z = g.add(z, b)?;
            h = g.relu(z);
        }
        Ok(h)
    }

    fn head(&self, g: &mut Graph, h: Var) -> Result<(Var, Var)> {
        let logits = g.matmul(h, self.head.0)?;
        let logits = g.add(logits, self.head.1)?;
        let probs = g.softmax(logits);
        Ok((logits, probs))
    }

    /// Logits and probabilities only; skips the projector.
    pub fn classify(&self, g: &mut Graph, x: Var) -> Result<(Var, Var)> {
        let h = self.encode(g, x)?;
        self.head(g, h)
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<ForwardOutput> {
        let h = self.encode(g, x)?;
        let (logits, probs) = self.head(g, h)?;
        let [(w0, b0), (w1, b1)] = self.projector;
        let p = g.matmul(h, w0)?;
        let p = g.add(p, b0)?;
        let p = g.relu(p);
        let p = g.matmul(p, w1)?;
        let p = g.add(p, b1)?;
        let embeddings = g.l2_normalize(p);
        Ok(ForwardOutput {
            logits,
            probs,
            embeddings,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Serializable parameter snapshot; also used as the frozen teacher copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub format: String,
    pub version: u32,
    pub config: NetworkConfig,
    pub layers: Vec<NamedTensor>,
}

impl NetworkParams {
    fn check_header(&self) -> Result<()> {
        if self.format != PARAMS_FORMAT || self.version != PARAMS_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported parameter format {} v{}",
                self.format, self.version
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.check_header()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}
