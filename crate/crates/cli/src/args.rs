//! Flag definitions for every subcommand.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use spikedistill_core::{
    Encoding, KdMode, KlDirection, PruneRanking, PruneScope, Split, SyntheticKind,
};

#[derive(Debug, Parser)]
#[command(
    name = "spikedistill",
    version,
    about = "Train, prune, and distill spiking neural networks on synthetic benchmarks"
)]
pub struct Cli {
    /// Base seed for data generation, initialization, and batch order.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,

    /// Worker threads for evaluation passes (training is single-threaded).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// JSON experiment config consumed by run-suite; explicit flags override
    /// its fields. Other commands ignore it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory receiving all artifacts.
    #[arg(long, global = true, default_value = "runs")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled dataset file.
    GenData(GenDataArgs),
    /// Train a network from scratch with plain cross-entropy.
    Train(TrainArgs),
    /// Magnitude-prune a trained checkpoint into a teacher.
    Prune(PruneArgs),
    /// Train a student against a pruned or virtual teacher.
    Distill(DistillArgs),
    /// Evaluate a checkpoint on one dataset split.
    Eval(EvalArgs),
    /// Render comparison tables and accuracy plots for a run directory.
    Report(ReportArgs),
    /// Run the full pipeline: baseline, prune grid, both KD modes, report.
    RunSuite(RunSuiteArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    /// Static images: one Gaussian bump per class plus pixel noise.
    Blobs,
    /// Event streams: directional sweeps integrated into frame tensors.
    SpikePatterns,
}

impl DataKind {
    pub fn to_core(self) -> SyntheticKind {
        match self {
            DataKind::Blobs => SyntheticKind::Blobs,
            DataKind::SpikePatterns => SyntheticKind::SpikePatterns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Two spiking hidden layers of 32 and 16 units on flattened input.
    Mlp,
    /// Two conv blocks with average pooling, then a spiking hidden layer.
    SmallConv,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Mlp => "mlp",
            Preset::SmallConv => "small-conv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    ConvOnly,
    AllWeighted,
}

impl ScopeArg {
    pub fn to_core(self) -> PruneScope {
        match self {
            ScopeArg::ConvOnly => PruneScope::ConvOnly,
            ScopeArg::AllWeighted => PruneScope::AllWeighted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RankingArg {
    Global,
    PerLayer,
}

impl RankingArg {
    pub fn to_core(self) -> PruneRanking {
        match self {
            RankingArg::Global => PruneRanking::Global,
            RankingArg::PerLayer => PruneRanking::PerLayer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Teacher is a frozen pruned copy of a trained network.
    Sparse,
    /// Teacher is a hand-specified distribution over classes.
    Default,
}

impl ModeArg {
    pub fn to_core(self) -> KdMode {
        match self {
            ModeArg::Sparse => KdMode::Sparse,
            ModeArg::Default => KdMode::Default,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionArg {
    TeacherFirst,
    StudentFirst,
}

impl DirectionArg {
    pub fn to_core(self) -> KlDirection {
        match self {
            DirectionArg::TeacherFirst => KlDirection::TeacherFirst,
            DirectionArg::StudentFirst => KlDirection::StudentFirst,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl SplitArg {
    pub fn to_core(self) -> Split {
        match self {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Test => "test",
        }
    }
}

/// Unroll length used when --timesteps is not given and the data is static.
pub const DEFAULT_STATIC_TIMESTEPS: usize = 4;

/// Unroll length produced by the event generator; event data always unrolls
/// over its own frame count, which is this value for generated sets.
pub const DEFAULT_EVENT_TIMESTEPS: usize = 16;

/// The unroll length a dataset gets when no --timesteps flag is given: 4 for
/// static data, the per-sample frame count for event data.
pub fn default_timesteps(encoding: Encoding, sample_shape: &[usize]) -> usize {
    match encoding {
        Encoding::StaticCurrent => DEFAULT_STATIC_TIMESTEPS,
        Encoding::EventFrames => sample_shape[0],
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value_t = DataKind::Blobs)]
    pub kind: DataKind,

    #[arg(long, default_value_t = 4)]
    pub classes: usize,

    #[arg(long, default_value_t = 200)]
    pub train_per_class: usize,

    #[arg(long, default_value_t = 100)]
    pub test_per_class: usize,

    /// Sample shape as channels,height,width.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1, 8, 8])]
    pub shape: Vec<usize>,

    /// Pixel noise sigma (blobs) or event jitter fraction (spike-patterns).
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,

    /// Output dataset file.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset file produced by gen-data.
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long, value_enum, default_value_t = Preset::Mlp)]
    pub preset: Preset,

    /// Unroll length; defaults to 4 for static data and the frame count for
    /// event data.
    #[arg(long)]
    pub timesteps: Option<usize>,

    #[arg(long, default_value_t = 30)]
    pub epochs: usize,

    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,

    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,

    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    /// Subdirectory of --out-dir receiving checkpoint.snck, report.json, and
    /// epochs.csv.
    #[arg(long, default_value = "baseline")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    /// Trained checkpoint to prune.
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Fraction of in-scope weights to drop, in [0,1].
    #[arg(long)]
    pub ratio: f64,

    /// Which tensors to prune; defaults to conv-only when the network has
    /// conv layers and all-weighted otherwise.
    #[arg(long, value_enum)]
    pub scope: Option<ScopeArg>,

    #[arg(long, value_enum, default_value_t = RankingArg::Global)]
    pub ranking: RankingArg,

    /// Dataset for the post-prune accuracy recorded in prune.json.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Subdirectory of --out-dir; defaults to prune-<ratio>.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// Dataset file produced by gen-data.
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long, value_enum, default_value_t = ModeArg::Sparse)]
    pub mode: ModeArg,

    /// Teacher checkpoint; required in sparse mode.
    #[arg(long)]
    pub teacher: Option<PathBuf>,

    /// Virtual teacher's target-class probability; required in default mode
    /// and must exceed 0.9.
    #[arg(long)]
    pub teacher_alpha: Option<f64>,

    #[arg(long, default_value_t = 4.0)]
    pub temperature: f64,

    /// Weight of the KL term against cross-entropy, in [0,1].
    #[arg(long, default_value_t = 0.9)]
    pub loss_alpha: f64,

    #[arg(long, value_enum, default_value_t = DirectionArg::TeacherFirst)]
    pub kl_direction: DirectionArg,

    /// Student architecture; sparse mode defaults to the teacher's own.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,

    /// Student unroll length; same defaults as train.
    #[arg(long)]
    pub timesteps: Option<usize>,

    /// Permit a sparse teacher whose architecture differs from the student's.
    #[arg(long)]
    pub allow_heterogeneous_teacher: bool,

    #[arg(long, default_value_t = 30)]
    pub epochs: usize,

    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,

    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,

    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    /// Subdirectory of --out-dir; defaults to the mode name.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Dataset file produced by gen-data.
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,

    /// Also write the result JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory holding baseline/ plus distilled-run subdirectories;
    /// defaults to --out-dir.
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunSuiteArgs {
    /// Existing dataset file; a fresh one is generated under --out-dir when
    /// omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub kind: Option<DataKind>,

    #[arg(long)]
    pub classes: Option<usize>,

    #[arg(long)]
    pub train_per_class: Option<usize>,

    #[arg(long)]
    pub test_per_class: Option<usize>,

    /// Sample shape as channels,height,width.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub shape: Option<Vec<usize>>,

    #[arg(long)]
    pub noise: Option<f64>,

    #[arg(long, value_enum)]
    pub preset: Option<Preset>,

    #[arg(long)]
    pub timesteps: Option<usize>,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub momentum: Option<f64>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Teacher prune ratios, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,

    /// Training seeds, comma separated; each gets its own subdirectory.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,

    #[arg(long)]
    pub teacher_alpha: Option<f64>,

    #[arg(long)]
    pub temperature: Option<f64>,

    #[arg(long)]
    pub loss_alpha: Option<f64>,

    #[arg(long, value_enum)]
    pub kl_direction: Option<DirectionArg>,

    /// Skip pipeline steps whose artifacts already exist.
    #[arg(long)]
    pub resume: bool,
}

/// Human-readable label for printed summaries.
pub fn encoding_name(encoding: Encoding) -> &'static str {
    match encoding {
        Encoding::StaticCurrent => "static-current",
        Encoding::EventFrames => "event-frames",
    }
}

/// Pruning scope used when no --scope flag is given: conv-only for networks
/// with conv layers, all weighted tensors otherwise.
pub fn default_scope(spec: &spikedistill_core::NetworkSpec) -> PruneScope {
    let has_conv = spec
        .layers
        .iter()
        .any(|l| matches!(l, spikedistill_core::LayerSpec::Conv2d { .. }));
    if has_conv {
        PruneScope::ConvOnly
    } else {
        PruneScope::AllWeighted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[test]
    fn parses_gen_data_defaults() {
        let cli = Cli::parse_from(["spikedistill", "gen-data", "-o", "d.srkd"]);
        match cli.command {
            Command::GenData(a) => {
                assert_eq!(a.kind, DataKind::Blobs);
                assert_eq!(a.classes, 4);
                assert_eq!(a.shape, vec![1, 8, 8]);
                assert_eq!(a.train_per_class, 200);
                assert_eq!(a.test_per_class, 100);
            }
            _ => panic!("wrong command"),
        }
        assert_eq!(cli.seed, 7);
        assert_eq!(cli.threads, 1);
    }

    #[test]
    fn parses_comma_lists() {
        let cli = Cli::parse_from([
            "spikedistill",
            "run-suite",
            "--grid",
            "0,0.1,0.3",
            "--seeds",
            "1,2,3",
        ]);
        match cli.command {
            Command::RunSuite(a) => {
                assert_eq!(a.grid, Some(vec![0.0, 0.1, 0.3]));
                assert_eq!(a.seeds, Some(vec![1, 2, 3]));
            }
            _ => panic!("wrong command"),
        }
    }

    #[test]
    fn default_timesteps_split_by_encoding() {
        assert_eq!(default_timesteps(Encoding::StaticCurrent, &[1, 8, 8]), 4);
        assert_eq!(
            default_timesteps(Encoding::EventFrames, &[16, 2, 8, 8]),
            16
        );
    }

    #[test]
    fn mlp_gets_all_weighted_scope_and_conv_gets_conv_only() {
        use spikedistill_core::NetworkSpec;
        let mlp = NetworkSpec::mlp(64, 4, 4);
        assert_eq!(default_scope(&mlp), PruneScope::AllWeighted);
        let conv = NetworkSpec::small_conv(1, 8, 8, 4, 4);
        assert_eq!(default_scope(&conv), PruneScope::ConvOnly);
    }

}
