//! Magnitude pruning: rank weights by absolute value, zero the smallest
//! fraction, and keep them zero through training via mask re-application.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{LayerSpec, Params};
use crate::snn::NetworkState;
use crate::tensor::Tensor;

/// Which parameter tensors are candidates for pruning. Readout weights and
/// all biases are never pruned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneScope {
    #[default]
    ConvOnly,
    AllWeighted,
}

/// Whether the magnitude sort runs over all in-scope weights at once or
/// within each tensor separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneRanking {
    #[default]
    Global,
    PerLayer,
}

/// Binary keep/drop masks, one per in-scope weight tensor, indexed parallel
/// to the network's layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneMask {
    pub ratio: f64,
    pub scope: PruneScope,
    pub ranking: PruneRanking,
    pub layers: Vec<Option<Tensor>>,
}

fn in_scope(layer: &LayerSpec, scope: PruneScope) -> bool {
    match scope {
        PruneScope::ConvOnly => matches!(layer, LayerSpec::Conv2d { .. }),
        PruneScope::AllWeighted => {
            matches!(layer, LayerSpec::Conv2d { .. } | LayerSpec::Linear { .. })
        }
    }
}

/// Build the mask for a trained network. Weights are ranked by |w|; the
/// smallest floor(ratio * N) are dropped, ties broken by (layer index, flat
/// element index) so the result is deterministic.
pub fn compute_mask(
    state: &NetworkState,
    ratio: f64,
    scope: PruneScope,
    ranking: PruneRanking,
) -> Result<PruneMask> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Parameter(format!(
            "prune ratio must be in [0,1], got {ratio}"
        )));
    }
    let mut layers: Vec<Option<Tensor>> = vec![None; state.spec.layers.len()];
    let scoped: Vec<usize> = state
        .spec
        .layers
        .iter()
        .enumerate()
        .filter(|(l, layer)| in_scope(layer, scope) && state.params.layers[*l].is_some())
        .map(|(l, _)| l)
        .collect();
    for &l in &scoped {
        let w = &state.params.layers[l].as_ref().expect("in-scope layer").weight;
        layers[l] = Some(Tensor::filled(w.shape(), 1.0));
    }
    match ranking {
        PruneRanking::Global => {
            let mut entries: Vec<(f64, usize, usize)> = Vec::new();
            for &l in &scoped {
                let w = &state.params.layers[l].as_ref().expect("in-scope layer").weight;
                for (i, &v) in w.data().iter().enumerate() {
                    entries.push((v.abs(), l, i));
                }
            }
            entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let drop = (ratio * entries.len() as f64).floor() as usize;
            for &(_, l, i) in entries.iter().take(drop) {
                layers[l].as_mut().expect("scoped mask").data_mut()[i] = 0.0;
            }
        }
        PruneRanking::PerLayer => {
            for &l in &scoped {
                let w = &state.params.layers[l].as_ref().expect("in-scope layer").weight;
                let mut entries: Vec<(f64, usize)> =
                    w.data().iter().enumerate().map(|(i, &v)| (v.abs(), i)).collect();
                entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let drop = (ratio * entries.len() as f64).floor() as usize;
                for &(_, i) in entries.iter().take(drop) {
                    layers[l].as_mut().expect("scoped mask").data_mut()[i] = 0.0;
                }
            }
        }
    }
    Ok(PruneMask {
        ratio,
        scope,
        ranking,
        layers,
    })
}

/// Elementwise weight * mask; idempotent.
pub fn apply_mask(weights: &Tensor, mask: &Tensor) -> Result<Tensor> {
    weights.mul_elem(mask)
}

impl PruneMask {
    /// Zero every masked weight in place.
    pub fn apply(&self, params: &mut Params) -> Result<()> {
        if self.layers.len() != params.layers.len() {
            return Err(Error::Dimension(format!(
                "mask covers {} layers, network has {}",
                self.layers.len(),
                params.layers.len()
            )));
        }
        for (entry, p) in self.layers.iter().zip(params.layers.iter_mut()) {
            let (Some(mask), Some(p)) = (entry, p) else { continue };
            p.weight = apply_mask(&p.weight, mask)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for mask in self.layers.iter().flatten() {
            if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Config("mask entries must be exactly 0 or 1".into()));
            }
        }
        Ok(())
    }
}

/// Zero counts per masked tensor and overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub per_layer: Vec<LayerSparsity>,
    pub total_weights: usize,
    pub total_zeros: usize,
    pub overall_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSparsity {
    pub layer: usize,
    pub weights: usize,
    pub zeros: usize,
    pub fraction: f64,
}

pub fn sparsity_report(mask: &PruneMask) -> SparsityReport {
    let mut per_layer = Vec::new();
    let mut total_weights = 0;
    let mut total_zeros = 0;
    for (l, entry) in mask.layers.iter().enumerate() {
        let Some(m) = entry else { continue };
        let weights = m.len();
        let zeros = m.data().iter().filter(|&&v| v == 0.0).count();
        total_weights += weights;
        total_zeros += zeros;
        per_layer.push(LayerSparsity {
            layer: l,
            weights,
            zeros,
            fraction: zeros as f64 / weights as f64,
        });
    }
    SparsityReport {
        per_layer,
        total_weights,
        total_zeros,
        overall_fraction: if total_weights == 0 {
            0.0
        } else {
            total_zeros as f64 / total_weights as f64
        },
    }
}
