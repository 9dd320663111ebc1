//! Training reports: per-epoch metrics, final summaries, and deterministic
//! serialization. Wall-clock fields are kept out of the serialized forms so
//! identical runs produce byte-identical artifacts.

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Accuracy on both splits at a single point in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub train_acc_pct: f64,
    pub test_acc_pct: f64,
}

/// Metrics recorded after one training epoch. `epoch` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc_pct: f64,
    pub test_acc_pct: f64,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// End-of-run summary. `best_epoch` 0 refers to the initial evaluation
/// before any update, so it is meaningful even for zero-epoch runs, where
/// `final_train_loss` is absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub train_acc_pct: f64,
    pub test_acc_pct: f64,
    pub best_test_acc_pct: f64,
    pub best_epoch: usize,
    pub final_train_loss: Option<f64>,
}

/// Everything a single training run produces besides the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub run_id: String,
    pub config: serde_json::Value,
    pub initial: EvalSnapshot,
    pub epochs: Vec<EpochMetrics>,
    pub final_metrics: FinalMetrics,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// The epoch table as CSV, one row per epoch.
    pub fn epochs_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc_pct,test_acc_pct\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.train_acc_pct, e.test_acc_pct
            ));
        }
        out
    }
}

/// 64-bit FNV-1a over a byte string.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Stable run identifier: FNV-1a of the run's serialized configuration,
/// rendered as 16 hex digits.
pub fn run_id_for(config: &serde_json::Value) -> Result<String> {
    let canonical = serde_json::to_string(config)?;
    Ok(format!("{:016x}", fnv1a(canonical.as_bytes())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> TrainReport {
        let config = serde_json::json!({"preset": "mlp", "seed": 1});
        TrainReport {
            run_id: run_id_for(&config).unwrap(),
            config,
            initial: EvalSnapshot {
                train_acc_pct: 25.0,
                test_acc_pct: 24.0,
            },
            epochs: vec![
                EpochMetrics {
                    epoch: 1,
                    train_loss: 1.25,
                    train_acc_pct: 50.0,
                    test_acc_pct: 48.0,
                    wall_time_s: 0.7,
                },
                EpochMetrics {
                    epoch: 2,
                    train_loss: 0.75,
                    train_acc_pct: 80.0,
                    test_acc_pct: 78.5,
                    wall_time_s: 0.8,
                },
            ],
            final_metrics: FinalMetrics {
                train_acc_pct: 80.0,
                test_acc_pct: 78.5,
                best_test_acc_pct: 78.5,
                best_epoch: 2,
                final_train_loss: Some(0.75),
            },
            wall_time_s: 1.5,
        }
    }

    #[test]
    fn fnv1a_matches_published_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn run_id_is_stable_and_hex() {
        let config = serde_json::json!({"preset": "mlp", "seed": 1});
        let a = run_id_for(&config).unwrap();
        let b = run_id_for(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        assert!(a.chars().all(|c| c.is_ascii_hexdigit()));
        let other = run_id_for(&serde_json::json!({"preset": "mlp", "seed": 2})).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn json_omits_wall_time_and_is_deterministic() {
        let r = sample_report();
        let json = r.to_json().unwrap();
        assert!(!json.contains("wall_time"));
        let mut r2 = sample_report();
        r2.wall_time_s = 99.0;
        r2.epochs[0].wall_time_s = 42.0;
        assert_eq!(json, r2.to_json().unwrap());
    }

    #[test]
    fn json_round_trips() {
        let r = sample_report();
        let back: TrainReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back.run_id, r.run_id);
        assert_eq!(back.final_metrics, r.final_metrics);
        // Wall times are not serialized, so they come back zeroed.
        assert_eq!(back.wall_time_s, 0.0);
        let mut expected = r.epochs.clone();
        for e in &mut expected {
            e.wall_time_s = 0.0;
        }
        assert_eq!(back.epochs, expected);
    }

    #[test]
    fn csv_has_one_row_per_epoch() {
        let csv = sample_report().epochs_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "epoch,train_loss,train_acc_pct,test_acc_pct");
        assert_eq!(lines[1], "1,1.25,50,48");
        assert_eq!(lines[2], "2,0.75,80,78.5");
    }

    #[test]
    fn zero_epoch_report_serializes_null_loss() {
        let mut r = sample_report();
        r.epochs.clear();
        r.final_metrics.final_train_loss = None;
        r.final_metrics.best_epoch = 0;
        let json = r.to_json().unwrap();
        assert!(json.contains("\"final_train_loss\": null"));
    }
}
