//! Learned weights, their initialisation and the standalone parameter file.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::{Activation, LayerKind, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

const PARAMS_MAGIC: &[u8; 4] = b"DSGP";
const PARAMS_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerParams<T = f32> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Weights and biases for every layer of a spec, in layer order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams<T = f32> {
    pub layers: Vec<LayerParams<T>>,
    pub init_seed: u64,
}

impl<T: Scalar> NetworkParams<T> {
    /// All-zero parameters shaped for `spec`; doubles as a gradient buffer.
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let layers = spec
            .param_shapes()?
            .iter()
            .map(|s| LayerParams { weight: vec![T::zero(); s.weights()], bias: vec![T::zero(); s.biases()] })
            .collect();
        Ok(Self { layers, init_seed: 0 })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: vec![T::zero(); l.weight.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
            init_seed: self.init_seed,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Every weight and bias array in a fixed order.
    pub fn slices(&self) -> impl Iterator<Item = &[T]> {
        self.layers.iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn global_norm(&self) -> T {
        self.slices().flat_map(|s| s.iter()).map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn scale(&mut self, s: T) {
        for v in self.slices_mut().flat_map(|s| s.iter_mut()) {
            *v *= s;
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.slices_mut().zip(other.slices()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Squared euclidean distance to `other`.
    pub fn distance_sq(&self, other: &Self) -> T {
        self.slices()
            .zip(other.slices())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)))
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.to_f64().unwrap()).unwrap()).collect();
        NetworkParams {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams { weight: conv(&l.weight), bias: conv(&l.bias) })
                .collect(),
            init_seed: self.init_seed,
        }
    }

    pub fn check_shapes(&self, spec: &NetworkSpec) -> Result<()> {
        let shapes = spec.param_shapes()?;
        let ok = shapes.len() == self.layers.len()
            && shapes
                .iter()
                .zip(&self.layers)
                .all(|(s, l)| s.weights() == l.weight.len() && s.biases() == l.bias.len());
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!("parameters do not fit the {} spec", spec.name)))
        }
    }
}

/// Target weight standard deviation for a layer: `sqrt(2 / fan_in)` ahead
/// of rectifiers, `sqrt(1 / fan_in)` ahead of saturating activations.
pub fn init_std(activation: Activation, fan_in: usize) -> f64 {
    let gain = match activation {
        Activation::Tanh | Activation::Sigmoid => 1.0,
        Activation::Relu | Activation::None => 2.0,
    };
    (gain / fan_in as f64).sqrt()
}

/// Fan-in scaled Gaussian weights, zero biases. Seed 0 is an ordinary seed.
pub fn init_params<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<NetworkParams<T>> {
    let shapes = spec.param_shapes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .layers
        .iter()
        .zip(&shapes)
        .map(|(layer, shape)| {
            if !matches!(layer.kind, LayerKind::Conv | LayerKind::FullyConnected) {
                return LayerParams::default();
            }
            let normal = Normal::new(0.0, init_std(layer.activation, shape.cols))
                .expect("positive standard deviation");
            LayerParams {
                weight: (0..shape.weights())
                    .map(|_| T::from_f64(normal.sample(&mut rng)).unwrap())
                    .collect(),
                bias: vec![T::zero(); shape.biases()],
            }
        })
        .collect();
    Ok(NetworkParams { layers, init_seed: seed })
}

/// Serialized parameters prefixed with a format header and the hash of the
/// spec they belong to.
pub fn params_to_bytes(spec: &NetworkSpec, params: &NetworkParams<f32>) -> Result<Vec<u8>> {
    params.check_shapes(spec)?;
    let mut out = Vec::new();
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    out.extend_from_slice(&spec.hash());
    bincode::serialize_into(&mut out, params)
        .map_err(|e| Error::Checkpoint(format!("encode parameters: {e}")))?;
    Ok(out)
}

pub fn params_from_bytes(spec: &NetworkSpec, bytes: &[u8]) -> Result<NetworkParams<f32>> {
    let mut cursor = bytes;
    let mut magic = [0u8; 4];
    let mut version = [0u8; 4];
    let mut hash = [0u8; 32];
    cursor
        .read_exact(&mut magic)
        .and_then(|_| cursor.read_exact(&mut version))
        .and_then(|_| cursor.read_exact(&mut hash))
        .map_err(|_| Error::Checkpoint("truncated parameter header".into()))?;
    if &magic != PARAMS_MAGIC {
        return Err(Error::Checkpoint("not a parameter file".into()));
    }
    let version = u32::from_le_bytes(version);
    if version != PARAMS_VERSION {
        return Err(Error::Checkpoint(format!("unsupported parameter format version {version}")));
    }
    if hash != spec.hash() {
        return Err(Error::Checkpoint(format!(
            "parameters were saved for a different {} spec (hash mismatch)",
            spec.name
        )));
    }
    let params: NetworkParams<f32> = bincode::deserialize(cursor)
        .map_err(|e| Error::Checkpoint(format!("decode parameters: {e}")))?;
    params.check_shapes(spec)?;
    Ok(params)
}

pub fn save_params(path: &Path, spec: &NetworkSpec, params: &NetworkParams<f32>) -> Result<()> {
    let bytes = params_to_bytes(spec, params)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path, spec: &NetworkSpec) -> Result<NetworkParams<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    params_from_bytes(spec, &bytes)
}
