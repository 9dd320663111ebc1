//! Integrate-and-fire dynamics and backpropagation through the time unroll.
//!
//! The forward pass runs the layer stack once per timestep; IF layers carry
//! membrane potential across timesteps and emit binary spikes. Logits are
//! the time average of the readout outputs. The backward pass walks the
//! recorded unroll in reverse, substituting a surrogate derivative for the
//! spike nonlinearity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{IfConfig, LayerSpec, NetworkSpec, Params, SurrogateKind};
use crate::pruning::PruneMask;
use crate::tensor::{
    affine, avgpool2d, avgpool2d_backward, conv2d, conv2d_backward, Tensor,
};

/// How the spike nonlinearity behaves in the forward pass.
///
/// `Hard` is the real model: Heaviside spikes, surrogate derivative in
/// backward. `Relaxed` swaps the Heaviside for the arctangent primitive
/// (a smooth sigmoid), making the whole forward differentiable; backward
/// then computes the exact gradient of that smooth forward. Relaxed mode
/// exists so analytic gradients can be checked against finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpikeMode {
    Hard,
    Relaxed,
}

/// One hard integrate-and-fire step: integrate, threshold, reset.
///
/// v_candidate = v_prev + x_t; spikes are 1 where v_candidate >= v_threshold;
/// spiking entries reset to v_reset, the rest keep v_candidate.
pub fn if_step(v_prev: &Tensor, x_t: &Tensor, cfg: &IfConfig) -> Result<(Tensor, Tensor)> {
    if v_prev.shape() != x_t.shape() {
        return Err(Error::Dimension(format!(
            "if_step shapes differ: {:?} vs {:?}",
            v_prev.shape(),
            x_t.shape()
        )));
    }
    let n = v_prev.len();
    let mut v_new = vec![0.0; n];
    let mut spikes = vec![0.0; n];
    for i in 0..n {
        let cand = v_prev.data()[i] + x_t.data()[i];
        if cand >= cfg.v_threshold {
            spikes[i] = 1.0;
            v_new[i] = cfg.v_reset;
        } else {
            v_new[i] = cand;
        }
    }
    Ok((
        Tensor::new(v_prev.shape().to_vec(), v_new)?,
        Tensor::new(v_prev.shape().to_vec(), spikes)?,
    ))
}

/// Surrogate for the Heaviside derivative, evaluated at u = v_candidate -
/// v_threshold.
pub fn surrogate_derivative(u: &Tensor, cfg: &IfConfig) -> Tensor {
    match cfg.surrogate {
        SurrogateKind::Rectangular { width } => u.map(|v| {
            if v.abs() < width / 2.0 {
                1.0 / width
            } else {
                0.0
            }
        }),
        SurrogateKind::Arctangent { slope } => u.map(|v| arctan_derivative(v, slope)),
    }
}

fn arctan_derivative(u: f64, slope: f64) -> f64 {
    let z = std::f64::consts::PI * slope * u / 2.0;
    (slope / 2.0) / (1.0 + z * z)
}

/// Smooth spike used by relaxed mode: the arctangent surrogate's primitive,
/// sigma(u) = arctan(pi * slope * u / 2) / pi + 1/2.
fn arctan_primitive(u: f64, slope: f64) -> f64 {
    (std::f64::consts::PI * slope * u / 2.0).atan() / std::f64::consts::PI + 0.5
}

/// Slope used by relaxed mode: the configured arctangent slope, or 2 when
/// the configured surrogate is rectangular (which has no smooth primitive
/// of this form).
fn relaxed_slope(cfg: &IfConfig) -> f64 {
    match cfg.surrogate {
        SurrogateKind::Arctangent { slope } => slope,
        SurrogateKind::Rectangular { .. } => 2.0,
    }
}

fn if_step_relaxed(v_prev: &Tensor, x_t: &Tensor, cfg: &IfConfig) -> Result<(Tensor, Tensor)> {
    if v_prev.shape() != x_t.shape() {
        return Err(Error::Dimension(format!(
            "if_step shapes differ: {:?} vs {:?}",
            v_prev.shape(),
            x_t.shape()
        )));
    }
    let slope = relaxed_slope(cfg);
    let n = v_prev.len();
    let mut v_new = vec![0.0; n];
    let mut spikes = vec![0.0; n];
    for i in 0..n {
        let cand = v_prev.data()[i] + x_t.data()[i];
        let s = arctan_primitive(cand - cfg.v_threshold, slope);
        spikes[i] = s;
        v_new[i] = cand * (1.0 - s) + cfg.v_reset * s;
    }
    Ok((
        Tensor::new(v_prev.shape().to_vec(), v_new)?,
        Tensor::new(v_prev.shape().to_vec(), spikes)?,
    ))
}

/// Recorded intermediates from one traced forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    mode: SpikeMode,
    /// inputs[t][l] is the tensor entering layer l at timestep t.
    inputs: Vec<Vec<Tensor>>,
    /// Per timestep, per IF layer (in layer order): membrane candidate.
    if_cands: Vec<Vec<Tensor>>,
    /// Per timestep, per IF layer: spike output.
    if_spikes: Vec<Vec<Tensor>>,
}

/// A network's parameters plus its transient simulation state.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub spec: NetworkSpec,
    pub params: Params,
    pub mask: Option<PruneMask>,
    /// Membrane potential per layer after the most recent unroll; None for
    /// non-IF layers and before the first forward.
    membranes: Vec<Option<Tensor>>,
    trace: Option<Trace>,
}

impl NetworkState {
    pub fn new(spec: NetworkSpec, params: Params) -> NetworkState {
        let n = spec.layers.len();
        NetworkState {
            spec,
            params,
            mask: None,
            membranes: vec![None; n],
            trace: None,
        }
    }

    /// Fresh state with fan-in-initialized parameters drawn from `seed`.
    pub fn init(spec: &NetworkSpec, seed: u64) -> NetworkState {
        let mut rng = crate::rng::Rng::new(seed);
        let params = crate::network::init_params(spec, &mut rng);
        NetworkState::new(spec.clone(), params)
    }

    fn if_layer_count(&self) -> usize {
        self.spec
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::IfNeuron(_)))
            .count()
    }

    /// Run the temporal unroll and return logits [C]: the mean over
    /// timesteps of the readout output. `input_seq` has shape
    /// [timesteps, per-step input shape...]. Membranes reset to v_reset at
    /// the start. With `record`, per-timestep intermediates are kept for a
    /// following `backward_temporal`.
    pub fn forward_temporal(
        &mut self,
        input_seq: &Tensor,
        mode: SpikeMode,
        record: bool,
    ) -> Result<Tensor> {
        let seq_shape = input_seq.shape();
        if seq_shape.is_empty() || seq_shape[0] != self.spec.timesteps {
            return Err(Error::Dimension(format!(
                "input sequence shape {seq_shape:?} does not start with timesteps {}",
                self.spec.timesteps
            )));
        }
        let step_shape: Vec<usize> = seq_shape[1..].to_vec();
        let step_len: usize = step_shape.iter().product();
        let t_steps = self.spec.timesteps;
        let classes = self.spec.validate(&step_shape)?;

        for (l, layer) in self.spec.layers.iter().enumerate() {
            self.membranes[l] = match layer {
                LayerSpec::IfNeuron(cfg) => {
                    let shape = shape_before_layer(&self.spec, &step_shape, l)?;
                    Some(Tensor::filled(&shape, cfg.v_reset))
                }
                _ => None,
            };
        }

        let mut trace = Trace {
            mode,
            inputs: Vec::new(),
            if_cands: Vec::new(),
            if_spikes: Vec::new(),
        };
        let mut logits = Tensor::zeros(&[classes]);
        for t in 0..t_steps {
            let mut x = Tensor::new(
                step_shape.clone(),
                input_seq.data()[t * step_len..(t + 1) * step_len].to_vec(),
            )?;
            let mut step_inputs = Vec::new();
            let mut step_cands = Vec::new();
            let mut step_spikes = Vec::new();
            for (l, layer) in self.spec.layers.iter().enumerate() {
                if record {
                    step_inputs.push(x.clone());
                }
                x = match layer {
                    LayerSpec::Flatten => x.reshape(&[x.len()])?,
                    LayerSpec::Linear { .. } | LayerSpec::Readout { .. } => {
                        let p = self.params.layers[l]
                            .as_ref()
                            .ok_or_else(|| Error::State(format!("layer {l} has no parameters")))?;
                        affine(&p.weight, &p.bias, &x)?
                    }
                    LayerSpec::Conv2d { stride, padding, .. } => {
                        let p = self.params.layers[l]
                            .as_ref()
                            .ok_or_else(|| Error::State(format!("layer {l} has no parameters")))?;
                        let mut out = conv2d(&x, &p.weight, *stride, *padding)?;
                        add_channel_bias(&mut out, &p.bias);
                        out
                    }
                    LayerSpec::AvgPool { k } => avgpool2d(&x, *k)?,
                    LayerSpec::IfNeuron(cfg) => {
                        let v_prev = self.membranes[l]
                            .take()
                            .ok_or_else(|| Error::State(format!("layer {l} has no membrane")))?;
                        let cand = v_prev.add(&x)?;
                        let (v_new, spikes) = match mode {
                            SpikeMode::Hard => if_step(&v_prev, &x, cfg)?,
                            SpikeMode::Relaxed => if_step_relaxed(&v_prev, &x, cfg)?,
                        };
                        self.membranes[l] = Some(v_new);
                        if record {
                            step_cands.push(cand);
                            step_spikes.push(spikes.clone());
                        }
                        spikes
                    }
                };
            }
            logits.add_assign(&x)?;
            if record {
                trace.inputs.push(step_inputs);
                trace.if_cands.push(step_cands);
                trace.if_spikes.push(step_spikes);
            }
        }
        let logits = logits.scale(1.0 / t_steps as f64);
        self.trace = if record { Some(trace) } else { None };
        Ok(logits)
    }

    /// Reverse-mode sweep over the recorded unroll. `loss_grad` is the loss
    /// gradient on the logits; the return value is parameter-shaped.
    ///
    /// Hard mode substitutes the configured surrogate for the spike
    /// derivative and detaches the reset gate, so only the non-spiking
    /// membrane path carries gradient across timesteps. Relaxed mode
    /// differentiates its smooth forward exactly, reset gate included.
    pub fn backward_temporal(&self, loss_grad: &Tensor) -> Result<Params> {
        let trace = self.trace.as_ref().ok_or_else(|| {
            Error::State("backward_temporal without a recorded forward pass".into())
        })?;
        let classes = self.spec.class_count()?;
        if loss_grad.shape() != [classes] {
            return Err(Error::Dimension(format!(
                "loss gradient shape {:?}, expected [{classes}]",
                loss_grad.shape()
            )));
        }
        let t_steps = self.spec.timesteps;
        let mut grads = self.params.zeros_like();
        let n_if = self.if_layer_count();
        let mut carries: Vec<Option<Tensor>> = vec![None; n_if];
        let scale = 1.0 / t_steps as f64;

        let if_index_of: Vec<usize> = {
            let mut v = Vec::with_capacity(self.spec.layers.len());
            let mut k = 0;
            for layer in &self.spec.layers {
                v.push(k);
                if matches!(layer, LayerSpec::IfNeuron(_)) {
                    k += 1;
                }
            }
            v
        };

        for t in (0..t_steps).rev() {
            let mut g = loss_grad.scale(scale);
            for (l, layer) in self.spec.layers.iter().enumerate().rev() {
                let x = &trace.inputs[t][l];
                g = match layer {
                    LayerSpec::Flatten => g.reshape(x.shape())?,
                    LayerSpec::Linear { .. } | LayerSpec::Readout { .. } => {
                        let p = self.params.layers[l].as_ref().expect("weighted layer");
                        let gp = grads.layers[l].as_mut().expect("weighted layer");
                        affine_backward(p, gp, x, &g)?
                    }
                    LayerSpec::Conv2d { stride, padding, .. } => {
                        let p = self.params.layers[l].as_ref().expect("weighted layer");
                        let gp = grads.layers[l].as_mut().expect("weighted layer");
                        let (dinput, dkernels) =
                            conv2d_backward(x, &p.weight, *stride, *padding, &g)?;
                        gp.weight.add_assign(&dkernels)?;
                        accumulate_channel_bias_grad(&mut gp.bias, &g);
                        dinput
                    }
                    LayerSpec::AvgPool { k } => avgpool2d_backward(x.shape(), *k, &g)?,
                    LayerSpec::IfNeuron(cfg) => {
                        let k = if_index_of[l];
                        let cand = &trace.if_cands[t][k];
                        let spikes = &trace.if_spikes[t][k];
                        let carry = carries[k].take();
                        let g_cand = if_backward_step(
                            trace.mode, cfg, cand, spikes, &g, carry.as_ref(),
                        )?;
                        carries[k] = Some(g_cand.clone());
                        g_cand
                    }
                };
            }
        }
        Ok(grads)
    }
}

/// Gradient on v_candidate for one IF step, combining the spike-output path
/// with the membrane carry from the following timestep.
fn if_backward_step(
    mode: SpikeMode,
    cfg: &IfConfig,
    cand: &Tensor,
    spikes: &Tensor,
    g_spike: &Tensor,
    carry: Option<&Tensor>,
) -> Result<Tensor> {
    let n = cand.len();
    let mut out = vec![0.0; n];
    match mode {
        SpikeMode::Hard => {
            let u = cand.map(|v| v - cfg.v_threshold);
            let d = surrogate_derivative(&u, cfg);
            for (i, o) in out.iter_mut().enumerate() {
                let mut gi = g_spike.data()[i] * d.data()[i];
                if let Some(c) = carry {
                    gi += c.data()[i] * (1.0 - spikes.data()[i]);
                }
                *o = gi;
            }
        }
        SpikeMode::Relaxed => {
            let slope = relaxed_slope(cfg);
            for (i, o) in out.iter_mut().enumerate() {
                let c_i = cand.data()[i];
                let s_i = spikes.data()[i];
                let d_i = arctan_derivative(c_i - cfg.v_threshold, slope);
                let mut gi = g_spike.data()[i] * d_i;
                if let Some(c) = carry {
                    gi += c.data()[i] * ((1.0 - s_i) + (cfg.v_reset - c_i) * d_i);
                }
                *o = gi;
            }
        }
    }
    Tensor::new(cand.shape().to_vec(), out)
}

/// Accumulate dW and db for an affine layer and return the input gradient.
fn affine_backward(
    p: &crate::network::LayerParams,
    gp: &mut crate::network::LayerParams,
    x: &Tensor,
    g_out: &Tensor,
) -> Result<Tensor> {
    let rows = p.weight.shape()[0];
    let cols = p.weight.shape()[1];
    if x.len() != cols || g_out.len() != rows {
        return Err(Error::Dimension(format!(
            "affine backward: weight [{rows},{cols}], input {}, grad {}",
            x.len(),
            g_out.len()
        )));
    }
    for r in 0..rows {
        let gr = g_out.data()[r];
        let wrow = &mut gp.weight.data_mut()[r * cols..(r + 1) * cols];
        for (c, wv) in wrow.iter_mut().enumerate() {
            *wv += gr * x.data()[c];
        }
        gp.bias.data_mut()[r] += gr;
    }
    let mut g_in = vec![0.0; cols];
    for r in 0..rows {
        let gr = g_out.data()[r];
        let wrow = &p.weight.data()[r * cols..(r + 1) * cols];
        for (c, item) in g_in.iter_mut().enumerate() {
            *item += wrow[c] * gr;
        }
    }
    Tensor::new(vec![cols], g_in)
}

fn add_channel_bias(out: &mut Tensor, bias: &Tensor) {
    let c = out.shape()[0];
    let per = out.len() / c;
    for ci in 0..c {
        let b = bias.data()[ci];
        for v in &mut out.data_mut()[ci * per..(ci + 1) * per] {
            *v += b;
        }
    }
}

fn accumulate_channel_bias_grad(bias_grad: &mut Tensor, g_out: &Tensor) {
    let c = g_out.shape()[0];
    let per = g_out.len() / c;
    for ci in 0..c {
        let mut acc = 0.0;
        for &v in &g_out.data()[ci * per..(ci + 1) * per] {
            acc += v;
        }
        bias_grad.data_mut()[ci] += acc;
    }
}

/// Activation shape entering layer `l` for a given per-timestep input shape.
fn shape_before_layer(
    spec: &NetworkSpec,
    input_shape: &[usize],
    l: usize,
) -> Result<Vec<usize>> {
    let mut shape = input_shape.to_vec();
    for layer in &spec.layers[..l] {
        shape = crate::network::layer_out_shape(layer, &shape)?;
    }
    Ok(shape)
}
