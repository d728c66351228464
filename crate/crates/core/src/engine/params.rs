//! Flat parameter storage shared by the evaluator and the optimizer.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::dsl::{Activation, MlpDecl, ModelSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Offset of the row-major `fan_out x fan_in` weight block.
    pub weights: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayout {
    pub name: String,
    pub activation: Activation,
    pub layers: Vec<LayerLayout>,
    pub start: usize,
    pub end: usize,
}

/// Where every parameter lives in the flat vector: scalars sorted by name,
/// then networks sorted by name, each layer as weights followed by bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub scalars: Vec<String>,
    pub mlps: Vec<MlpLayout>,
    pub len: usize,
}

impl ParamLayout {
    pub fn from_spec(spec: &ModelSpec) -> ParamLayout {
        let spec = spec.normalized();
        let scalars: Vec<String> = spec.params.iter().map(|p| p.name.clone()).collect();
        let mut offset = scalars.len();
        let mut mlps = Vec::with_capacity(spec.mlps.len());
        for m in &spec.mlps {
            let start = offset;
            let mut layers = Vec::new();
            for (fan_in, fan_out) in m.layer_shapes() {
                let weights = offset;
                offset += fan_in * fan_out;
                let bias = offset;
                offset += fan_out;
                layers.push(LayerLayout {
                    fan_in,
                    fan_out,
                    weights,
                    bias,
                });
            }
            mlps.push(MlpLayout {
                name: m.name.clone(),
                activation: m.activation,
                layers,
                start,
                end: offset,
            });
        }
        ParamLayout {
            scalars,
            mlps,
            len: offset,
        }
    }

    pub fn scalar_index(&self, name: &str) -> Option<usize> {
        self.scalars.binary_search_by(|s| s.as_str().cmp(name)).ok()
    }

    pub fn mlp_index(&self, name: &str) -> Option<usize> {
        self.mlps.iter().position(|m| m.name == name)
    }

    /// Human-readable name of flat entry `i`, e.g. `rho` or `net.l1.w[2,0]`.
    pub fn entry_name(&self, i: usize) -> String {
        if i < self.scalars.len() {
            return self.scalars[i].clone();
        }
        for m in &self.mlps {
            if i >= m.end {
                continue;
            }
            for (l, layer) in m.layers.iter().enumerate() {
                if i < layer.bias {
                    let k = i - layer.weights;
                    return format!("{}.l{}.w[{},{}]", m.name, l, k / layer.fan_in, k % layer.fan_in);
                }
                if i < layer.bias + layer.fan_out {
                    return format!("{}.l{}.b[{}]", m.name, l, i - layer.bias);
                }
            }
        }
        format!("#{i}")
    }
}

/// All optimizable values of one spec.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub layout: Arc<ParamLayout>,
    pub values: Vec<f64>,
}

/// `dL/dw` for every entry of a [`ParamVector`], in the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layout: Arc<ParamLayout>,
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let values = vec![0.0; layout.len];
        Gradients { layout, values }
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.layout.scalar_index(name).map(|i| self.values[i])
    }

    /// First non-finite entry, by name.
    pub fn first_non_finite(&self) -> Option<String> {
        self.values
            .iter()
            .position(|g| !g.is_finite())
            .map(|i| self.layout.entry_name(i))
    }
}

impl ParamVector {
    /// Scalars from their declared inits, networks from [`mlp_init`].
    pub fn init(spec: &ModelSpec, seed: u64) -> ParamVector {
        let layout = Arc::new(ParamLayout::from_spec(spec));
        let mut values = vec![0.0; layout.len];
        for (i, name) in layout.scalars.iter().enumerate() {
            values[i] = spec.param(name).map_or(0.0, |p| p.init);
        }
        for m in &layout.mlps {
            let decl = spec.mlp(&m.name).expect("layout built from this spec");
            let mut at = m.start;
            for layer in mlp_init(decl, seed) {
                values[at..at + layer.weights.len()].copy_from_slice(&layer.weights);
                at += layer.weights.len();
                values[at..at + layer.bias.len()].copy_from_slice(&layer.bias);
                at += layer.bias.len();
            }
        }
        ParamVector { layout, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.layout.scalar_index(name).map(|i| self.values[i])
    }

    pub fn set_scalar(&mut self, name: &str, v: f64) -> bool {
        match self.layout.scalar_index(name) {
            Some(i) => {
                self.values[i] = v;
                true
            }
            None => false,
        }
    }

    /// `(name, value)` for every scalar parameter, name-sorted.
    pub fn scalars(&self) -> impl Iterator<Item = (&str, f64)> {
        self.layout
            .scalars
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), self.values[i]))
    }

    /// Flat weights of one network, or `None` when it is not in the layout.
    pub fn mlp_values(&self, name: &str) -> Option<&[f64]> {
        let m = &self.layout.mlps[self.layout.mlp_index(name)?];
        Some(&self.values[m.start..m.end])
    }

    pub fn mlp_values_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let idx = self.layout.mlp_index(name)?;
        let (start, end) = (self.layout.mlps[idx].start, self.layout.mlps[idx].end);
        Some(&mut self.values[start..end])
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `fan_out x fan_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn name_stream(name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(b)
}

/// Xavier-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
/// The stream is keyed by `(seed, decl.name)` so sibling networks differ.
pub fn mlp_init(decl: &MlpDecl, seed: u64) -> Vec<LayerWeights> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(name_stream(&decl.name));
    decl.layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            LayerWeights {
                fan_in,
                fan_out,
                weights,
                bias: vec![0.0; fan_out],
            }
        })
        .collect()
}
