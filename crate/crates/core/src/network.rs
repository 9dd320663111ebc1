//! Network architecture descriptions, parameter containers, and
//! fan-in-scaled initialization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{conv_out_len, Tensor};

/// Shape of the surrogate used for the spike derivative during backward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurrogateKind {
    /// 1/width inside |u| < width/2, zero outside.
    Rectangular { width: f64 },
    /// (slope/2) / (1 + (pi * slope * u / 2)^2).
    Arctangent { slope: f64 },
}

impl Default for SurrogateKind {
    fn default() -> Self {
        SurrogateKind::Rectangular { width: 1.0 }
    }
}

/// Integrate-and-fire neuron settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IfConfig {
    pub v_threshold: f64,
    pub v_reset: f64,
    pub surrogate: SurrogateKind,
}

impl Default for IfConfig {
    fn default() -> Self {
        IfConfig {
            v_threshold: 1.0,
            v_reset: 0.0,
            surrogate: SurrogateKind::default(),
        }
    }
}

impl IfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_threshold > self.v_reset) {
            return Err(Error::Config(format!(
                "v_threshold {} must exceed v_reset {}",
                self.v_threshold, self.v_reset
            )));
        }
        match self.surrogate {
            SurrogateKind::Rectangular { width } if !(width > 0.0) => Err(Error::Config(
                format!("rectangular surrogate width must be > 0, got {width}"),
            )),
            SurrogateKind::Arctangent { slope } if !(slope > 0.0) => Err(Error::Config(
                format!("arctangent surrogate slope must be > 0, got {slope}"),
            )),
            _ => Ok(()),
        }
    }
}

/// One layer in a feedforward spiking network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "kebab-case")]
pub enum LayerSpec {
    Flatten,
    Linear {
        in_features: usize,
        out_features: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    AvgPool {
        k: usize,
    },
    IfNeuron(IfConfig),
    /// Final non-spiking linear layer; its per-timestep outputs are averaged
    /// into the logits.
    Readout {
        in_features: usize,
        out_features: usize,
    },
}

impl LayerSpec {
    pub fn is_weighted(&self) -> bool {
        matches!(
            self,
            LayerSpec::Linear { .. } | LayerSpec::Conv2d { .. } | LayerSpec::Readout { .. }
        )
    }
}

/// Ordered layer list plus the temporal unroll length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub timesteps: usize,
}

impl NetworkSpec {
    /// Check structural invariants and shape chaining for the given
    /// per-timestep input shape; returns the class count.
    pub fn validate(&self, input_shape: &[usize]) -> Result<usize> {
        if self.timesteps == 0 {
            return Err(Error::Config("timesteps must be >= 1".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        match self.layers.last() {
            Some(LayerSpec::Readout { .. }) => {}
            _ => {
                return Err(Error::Config(
                    "last layer must be the non-spiking readout".into(),
                ))
            }
        }
        // Every weighted layer except the readout must reach an if_neuron
        // before the next weighted layer, with only pooling/flatten between.
        for (i, layer) in self.layers.iter().enumerate() {
            if !layer.is_weighted() || matches!(layer, LayerSpec::Readout { .. }) {
                continue;
            }
            let mut fired = false;
            for later in &self.layers[i + 1..] {
                match later {
                    LayerSpec::IfNeuron(_) => {
                        fired = true;
                        break;
                    }
                    LayerSpec::AvgPool { .. } | LayerSpec::Flatten => continue,
                    _ => break,
                }
            }
            if !fired {
                return Err(Error::Config(format!(
                    "weighted layer {i} is not followed by an if_neuron"
                )));
            }
        }
        let mut shape = input_shape.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer_out_shape(layer, &shape).map_err(|e| {
                Error::Config(format!("layer {i} ({layer:?}) shape error: {e}"))
            })?;
        }
        if shape.len() != 1 {
            return Err(Error::Config(format!(
                "readout output must be rank 1, got {shape:?}"
            )));
        }
        Ok(shape[0])
    }

    pub fn class_count(&self) -> Result<usize> {
        match self.layers.last() {
            Some(LayerSpec::Readout { out_features, .. }) => Ok(*out_features),
            _ => Err(Error::Config("network has no readout layer".into())),
        }
    }

    /// Two linear layers plus readout, for flat feature vectors.
    pub fn mlp(in_features: usize, classes: usize, timesteps: usize) -> NetworkSpec {
        NetworkSpec {
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Linear {
                    in_features,
                    out_features: 32,
                },
                LayerSpec::IfNeuron(IfConfig::default()),
                LayerSpec::Linear {
                    in_features: 32,
                    out_features: 16,
                },
                LayerSpec::IfNeuron(IfConfig::default()),
                LayerSpec::Readout {
                    in_features: 16,
                    out_features: classes,
                },
            ],
            timesteps,
        }
    }

    /// Two conv blocks, one hidden linear layer, readout; for [c,h,w] input
    /// with h and w divisible by 4.
    pub fn small_conv(
        in_channels: usize,
        height: usize,
        width: usize,
        classes: usize,
        timesteps: usize,
    ) -> NetworkSpec {
        let flat = 16 * (height / 4) * (width / 4);
        NetworkSpec {
            layers: vec![
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels: 8,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::IfNeuron(IfConfig::default()),
                LayerSpec::AvgPool { k: 2 },
                LayerSpec::Conv2d {
                    in_channels: 8,
                    out_channels: 16,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::IfNeuron(IfConfig::default()),
                LayerSpec::AvgPool { k: 2 },
                LayerSpec::Flatten,
                LayerSpec::Linear {
                    in_features: flat,
                    out_features: 32,
                },
                LayerSpec::IfNeuron(IfConfig::default()),
                LayerSpec::Readout {
                    in_features: 32,
                    out_features: classes,
                },
            ],
            timesteps,
        }
    }
}

/// Output shape of one layer applied to `input_shape`.
pub fn layer_out_shape(layer: &LayerSpec, input_shape: &[usize]) -> Result<Vec<usize>> {
    match layer {
        LayerSpec::Flatten => Ok(vec![input_shape.iter().product()]),
        LayerSpec::Linear {
            in_features,
            out_features,
        }
        | LayerSpec::Readout {
            in_features,
            out_features,
        } => {
            if input_shape.len() != 1 || input_shape[0] != *in_features {
                return Err(Error::Dimension(format!(
                    "linear expects [{in_features}], got {input_shape:?}"
                )));
            }
            Ok(vec![*out_features])
        }
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            if input_shape.len() != 3 || input_shape[0] != *in_channels {
                return Err(Error::Dimension(format!(
                    "conv2d expects [{in_channels}, h, w], got {input_shape:?}"
                )));
            }
            let oh = conv_out_len(input_shape[1], *kernel, *stride, *padding)?;
            let ow = conv_out_len(input_shape[2], *kernel, *stride, *padding)?;
            Ok(vec![*out_channels, oh, ow])
        }
        LayerSpec::AvgPool { k } => {
            if input_shape.len() != 3 {
                return Err(Error::Dimension(format!(
                    "avgpool expects [c,h,w], got {input_shape:?}"
                )));
            }
            let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
            if *k == 0 || h % k != 0 || w % k != 0 {
                return Err(Error::Dimension(format!(
                    "avgpool kernel {k} does not divide {h}x{w}"
                )));
            }
            Ok(vec![c, h / k, w / k])
        }
        LayerSpec::IfNeuron(_) => Ok(input_shape.to_vec()),
    }
}

/// Weight and bias for one weighted layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// All parameters of a network: one entry per layer, populated only for
/// weighted layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<Option<LayerParams>>,
}

impl Params {
    pub fn count(&self) -> usize {
        self.layers
            .iter()
            .flatten()
            .map(|p| p.weight.len() + p.bias.len())
            .sum()
    }

    /// Same layer structure with every value set to zero; the container for
    /// gradients and optimizer velocity.
    pub fn zeros_like(&self) -> Params {
        Params {
            layers: self
                .layers
                .iter()
                .map(|entry| {
                    entry.as_ref().map(|p| LayerParams {
                        weight: Tensor::zeros(p.weight.shape()),
                        bias: Tensor::zeros(p.bias.shape()),
                    })
                })
                .collect(),
        }
    }

    /// All parameter values in layer order, weight before bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        for p in self.layers.iter().flatten() {
            out.extend_from_slice(p.weight.data());
            out.extend_from_slice(p.bias.data());
        }
        out
    }

    /// Overwrite all parameters from a flat vector laid out as `flatten`.
    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.count() {
            return Err(Error::Dimension(format!(
                "flat parameter vector has {} values, network has {}",
                values.len(),
                self.count()
            )));
        }
        let mut at = 0;
        for p in self.layers.iter_mut().flatten() {
            let wn = p.weight.len();
            p.weight.data_mut().copy_from_slice(&values[at..at + wn]);
            at += wn;
            let bn = p.bias.len();
            p.bias.data_mut().copy_from_slice(&values[at..at + bn]);
            at += bn;
        }
        Ok(())
    }
}

/// Draw fresh parameters: weights from U(-sqrt(1/fan_in), +sqrt(1/fan_in)),
/// biases zero. Consumes the rng sequentially in layer order, so the result
/// is fully determined by the rng's seed.
pub fn init_params(spec: &NetworkSpec, rng: &mut Rng) -> Params {
    let mut layers = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        let entry = match layer {
            LayerSpec::Linear {
                in_features,
                out_features,
            }
            | LayerSpec::Readout {
                in_features,
                out_features,
            } => {
                let bound = (1.0 / *in_features as f64).sqrt();
                let n = in_features * out_features;
                let data = (0..n).map(|_| rng.uniform(-bound, bound)).collect();
                Some(LayerParams {
                    weight: Tensor::new(vec![*out_features, *in_features], data)
                        .expect("init shape is consistent by construction"),
                    bias: Tensor::zeros(&[*out_features]),
                })
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let fan_in = in_channels * kernel * kernel;
                let bound = (1.0 / fan_in as f64).sqrt();
                let n = out_channels * fan_in;
                let data = (0..n).map(|_| rng.uniform(-bound, bound)).collect();
                Some(LayerParams {
                    weight: Tensor::new(
                        vec![*out_channels, *in_channels, *kernel, *kernel],
                        data,
                    )
                    .expect("init shape is consistent by construction"),
                    bias: Tensor::zeros(&[*out_channels]),
                })
            }
            _ => None,
        };
        layers.push(entry);
    }
    Params { layers }
}
