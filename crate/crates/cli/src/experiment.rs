//! Experiment configuration for run-suite: a JSON file merged under the
//! command-line flags, then resolved against built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use spikedistill_core::{Error, OptimizerConfig, Result};

use crate::args::{DataKind, DirectionArg, Preset, RunSuiteArgs};

/// Optional overrides loadable from --config. Field names match the
/// run-suite flags.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub kind: Option<DataKind>,
    pub classes: Option<usize>,
    pub train_per_class: Option<usize>,
    pub test_per_class: Option<usize>,
    pub shape: Option<Vec<usize>>,
    pub noise: Option<f64>,
    pub preset: Option<Preset>,
    pub timesteps: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub batch_size: Option<usize>,
    pub grid: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub teacher_alpha: Option<f64>,
    pub temperature: Option<f64>,
    pub loss_alpha: Option<f64>,
    pub kl_direction: Option<DirectionArg>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Synthetic-data parameters for the suite's generated dataset.
#[derive(Debug, Clone)]
pub struct GenParams {
    pub kind: DataKind,
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub shape: Vec<usize>,
    pub noise: f64,
}

/// Fully resolved run-suite inputs: flag > config file > default.
#[derive(Debug, Clone)]
pub struct SuitePlan {
    pub data: Option<PathBuf>,
    pub gen: GenParams,
    pub preset: Preset,
    pub timesteps: Option<usize>,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub temperature: f64,
    pub loss_alpha: f64,
    pub kl_direction: DirectionArg,
    pub teacher_alpha: f64,
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub resume: bool,
}

impl SuitePlan {
    pub fn resolve(args: &RunSuiteArgs, file: Option<ExperimentConfig>) -> Result<SuitePlan> {
        let file = file.unwrap_or_default();
        let plan = SuitePlan {
            data: args.data.clone().or(file.data),
            gen: GenParams {
                kind: args.kind.or(file.kind).unwrap_or(DataKind::Blobs),
                classes: args.classes.or(file.classes).unwrap_or(4),
                train_per_class: args.train_per_class.or(file.train_per_class).unwrap_or(200),
                test_per_class: args.test_per_class.or(file.test_per_class).unwrap_or(100),
                shape: args
                    .shape
                    .clone()
                    .or(file.shape)
                    .unwrap_or_else(|| vec![1, 8, 8]),
                noise: args.noise.or(file.noise).unwrap_or(0.1),
            },
            preset: args.preset.or(file.preset).unwrap_or(Preset::Mlp),
            timesteps: args.timesteps.or(file.timesteps),
            optimizer: OptimizerConfig {
                lr: args.lr.or(file.lr).unwrap_or(0.1),
                momentum: args.momentum.or(file.momentum).unwrap_or(0.9),
                batch_size: args.batch_size.or(file.batch_size).unwrap_or(32),
            },
            epochs: args.epochs.or(file.epochs).unwrap_or(30),
            temperature: args.temperature.or(file.temperature).unwrap_or(4.0),
            loss_alpha: args.loss_alpha.or(file.loss_alpha).unwrap_or(0.9),
            kl_direction: args
                .kl_direction
                .or(file.kl_direction)
                .unwrap_or(DirectionArg::TeacherFirst),
            teacher_alpha: args.teacher_alpha.or(file.teacher_alpha).unwrap_or(0.91),
            grid: dedup_exact(
                args.grid
                    .clone()
                    .or(file.grid)
                    .unwrap_or_else(|| vec![0.0, 0.1, 0.3, 0.5, 0.7]),
            ),
            seeds: {
                let seeds = args.seeds.clone().or(file.seeds).unwrap_or_else(|| vec![7]);
                let mut out = Vec::new();
                for s in seeds {
                    if !out.contains(&s) {
                        out.push(s);
                    }
                }
                out
            },
            resume: args.resume,
        };
        plan.validate()?;
        Ok(plan)
    }

    fn validate(&self) -> Result<()> {
        if let Some(path) = &self.data {
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "dataset file not found: {}",
                    path.display()
                )));
            }
        }
        for &r in &self.grid {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Parameter(format!(
                    "prune grid values must be in [0,1], got {r}"
                )));
            }
        }
        if self.grid.is_empty() {
            return Err(Error::Parameter("prune grid must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Parameter("seed list must not be empty".into()));
        }
        Ok(())
    }
}

fn dedup_exact(values: Vec<f64>) -> Vec<f64> {
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for v in values {
        if !seen.contains(&v.to_bits()) {
            seen.push(v.to_bits());
            out.push(v);
        }
    }
    out
}
