//! Network checkpoints: spec, parameters, and any pruning mask in a single
//! binary file, loadable back into an identical state.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Cursor;
use crate::error::{Error, Result};
use crate::network::{init_params, NetworkSpec, Params};
use crate::pruning::{PruneMask, PruneRanking, PruneScope};
use crate::rng::Rng;
use crate::snn::NetworkState;
use crate::tensor::Tensor;

const CHECKPOINT_MAGIC: &[u8; 4] = b"SNCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MaskMeta {
    ratio: f64,
    scope: PruneScope,
    ranking: PruneRanking,
    /// Which layer slots carry a mask blob, parallel to the spec's layers.
    masked_layers: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointManifest {
    spec: NetworkSpec,
    seed: u64,
    epoch: usize,
    mask: Option<MaskMeta>,
}

/// A saved network: everything needed to resume evaluation or training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub seed: u64,
    pub epoch: usize,
    pub params: Params,
    pub mask: Option<PruneMask>,
}

impl Checkpoint {
    pub fn from_state(state: &NetworkState, seed: u64, epoch: usize) -> Checkpoint {
        Checkpoint {
            spec: state.spec.clone(),
            seed,
            epoch,
            params: state.params.clone(),
            mask: state.mask.clone(),
        }
    }

    /// Rebuild a runnable network, mask installed.
    pub fn into_state(self) -> NetworkState {
        let mut state = NetworkState::new(self.spec, self.params);
        state.mask = self.mask;
        state
    }

    /// Write magic, version, manifest length, JSON manifest, every parameter
    /// as little-endian f64 (layer order, weight before bias), then one byte
    /// per masked weight.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(mask) = &self.mask {
            mask.validate()?;
            if mask.layers.len() != self.spec.layers.len() {
                return Err(Error::Dimension(format!(
                    "mask covers {} layers, spec has {}",
                    mask.layers.len(),
                    self.spec.layers.len()
                )));
            }
        }
        let manifest = serde_json::to_vec(&CheckpointManifest {
            spec: self.spec.clone(),
            seed: self.seed,
            epoch: self.epoch,
            mask: self.mask.as_ref().map(|m| MaskMeta {
                ratio: m.ratio,
                scope: m.scope,
                ranking: m.ranking,
                masked_layers: m.layers.iter().map(|l| l.is_some()).collect(),
            }),
        })?;
        let file = fs::File::create(path)?;
        let mut out = BufWriter::new(file);
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(manifest.len() as u64).to_le_bytes())?;
        out.write_all(&manifest)?;
        for v in self.params.flatten() {
            out.write_all(&v.to_le_bytes())?;
        }
        if let Some(mask) = &self.mask {
            for entry in mask.layers.iter().flatten() {
                let bits: Vec<u8> = entry.data().iter().map(|&v| v as u8).collect();
                out.write_all(&bits)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Read a file written by `save`. Malformed input produces format errors
    /// carrying the byte offset of the problem.
    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut cursor = Cursor::new(&bytes);
        cursor.expect_magic(CHECKPOINT_MAGIC)?;
        let version = cursor.read_u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                4,
                format!("unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"),
            ));
        }
        let manifest_len = cursor.read_u64()? as usize;
        let manifest_bytes = cursor.read_slice(manifest_len, "manifest")?;
        let manifest: CheckpointManifest = serde_json::from_slice(manifest_bytes)
            .map_err(|e| Error::format(16, format!("manifest JSON: {e}")))?;

        let mut params = init_params(&manifest.spec, &mut Rng::new(0)).zeros_like();
        let value_offset = cursor.at;
        let raw = cursor.read_slice(params.count() * 8, "parameter data")?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                (value_offset + bad * 8) as u64,
                format!("non-finite parameter value {}", values[bad]),
            ));
        }
        params.set_flat(&values)?;

        let mask = match manifest.mask {
            None => None,
            Some(meta) => {
                if meta.masked_layers.len() != manifest.spec.layers.len() {
                    return Err(Error::format(
                        16,
                        format!(
                            "mask metadata covers {} layers, spec has {}",
                            meta.masked_layers.len(),
                            manifest.spec.layers.len()
                        ),
                    ));
                }
                let mut layers: Vec<Option<Tensor>> = Vec::with_capacity(meta.masked_layers.len());
                for (l, &masked) in meta.masked_layers.iter().enumerate() {
                    if !masked {
                        layers.push(None);
                        continue;
                    }
                    let weight = params.layers[l]
                        .as_ref()
                        .map(|p| &p.weight)
                        .ok_or_else(|| {
                            Error::format(
                                16,
                                format!("mask declared on layer {l}, which has no weights"),
                            )
                        })?;
                    let blob_offset = cursor.at;
                    let raw = cursor.read_slice(weight.len(), "mask data")?;
                    let mut data = Vec::with_capacity(raw.len());
                    for (i, &b) in raw.iter().enumerate() {
                        if b > 1 {
                            return Err(Error::format(
                                (blob_offset + i) as u64,
                                format!("mask byte {b} is not 0 or 1"),
                            ));
                        }
                        data.push(b as f64);
                    }
                    layers.push(Some(Tensor::new(weight.shape().to_vec(), data)?));
                }
                let mask = PruneMask {
                    ratio: meta.ratio,
                    scope: meta.scope,
                    ranking: meta.ranking,
                    layers,
                };
                mask.validate()?;
                Some(mask)
            }
        };
        if cursor.at != bytes.len() {
            return Err(Error::format(
                cursor.at as u64,
                format!("{} trailing bytes after checkpoint data", bytes.len() - cursor.at),
            ));
        }
        Ok(Checkpoint {
            spec: manifest.spec,
            seed: manifest.seed,
            epoch: manifest.epoch,
            params,
            mask,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pruning::compute_mask;

    fn trained_like_state(seed: u64) -> NetworkState {
        let spec = NetworkSpec::small_conv(1, 8, 8, 4, 4);
        NetworkState::init(&spec, seed)
    }

    #[test]
    fn round_trip_without_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.snck");
        let state = trained_like_state(3);
        let ckpt = Checkpoint::from_state(&state, 3, 17);
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, ckpt);
        let restored = loaded.into_state();
        assert_eq!(restored.params, state.params);
        assert_eq!(restored.spec, state.spec);
    }

    #[test]
    fn round_trip_with_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("masked.snck");
        let mut state = trained_like_state(5);
        let mask = compute_mask(&state, 0.3, PruneScope::default(), PruneRanking::default())
            .unwrap();
        mask.apply(&mut state.params).unwrap();
        state.mask = Some(mask);
        let ckpt = Checkpoint::from_state(&state, 5, 30);
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, ckpt);
        assert_eq!(loaded.mask, state.mask);
    }

    #[test]
    fn loaded_network_forwards_identically() {
        use crate::data::encode_static;
        use crate::snn::SpikeMode;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fwd.snck");
        let mut state = trained_like_state(7);
        Checkpoint::from_state(&state, 7, 0).save(&path).unwrap();
        let mut restored = Checkpoint::load(&path).unwrap().into_state();
        let image = Tensor::filled(&[1, 8, 8], 0.5);
        let seq = encode_static(&image, 4).unwrap();
        let a = state.forward_temporal(&seq, SpikeMode::Hard, false).unwrap();
        let b = restored.forward_temporal(&seq, SpikeMode::Hard, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_magic_and_truncation_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.snck");
        let state = trained_like_state(1);
        Checkpoint::from_state(&state, 1, 1).save(&path).unwrap();
        let good = fs::read(&path).unwrap();

        let mut corrupt = good.clone();
        corrupt[0] = b'Z';
        fs::write(&path, &corrupt).unwrap();
        match Checkpoint::load(&path) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }

        fs::write(&path, &good[..good.len() - 3]).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Format { .. })));

        let mut extended = good.clone();
        extended.extend_from_slice(&[0u8; 4]);
        fs::write(&path, &extended).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn non_finite_parameter_bytes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.snck");
        let state = trained_like_state(2);
        Checkpoint::from_state(&state, 2, 0).save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 8..n].copy_from_slice(&f64::NAN.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Format { .. })));
    }
}
