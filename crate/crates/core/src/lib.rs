//! Training engine for spiking neural networks with reverse knowledge
//! distillation.
//!
//! The crate simulates integrate-and-fire networks unrolled over discrete
//! timesteps, trains them with surrogate-gradient backpropagation through
//! time, prunes them by weight magnitude, and distills pruned or virtual
//! teachers back into students. Everything is deterministic: a seed fixes
//! initialization, data generation, batch order, and therefore every
//! artifact byte-for-byte.

// Validation guards are written `!(x > y)` so that NaN fails them; the
// lint's suggested `x <= y` would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod data;
pub mod distill;
pub mod error;
pub mod network;
pub mod ops;
pub mod optim;
pub mod pruning;
pub mod report;
pub mod rng;
pub mod snn;
pub mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use data::{
    encode_static, epoch_order, gen_synthetic, integrate_events, load_dataset, load_event_csv,
    save_dataset, DatasetHandle, DatasetManifest, Encoding, EventNorm, EventRecord, Split,
    SyntheticKind,
};
pub use distill::{
    default_kd_grad, default_kd_loss, distill_train, sparse_kd_grad, sparse_kd_loss,
    virtual_teacher_dist, KdConfig, KdMode, KlDirection, Teacher, VirtualTeacher,
};
pub use error::{Error, Result};
pub use network::{
    init_params, IfConfig, LayerParams, LayerSpec, NetworkSpec, Params, SurrogateKind,
};
pub use ops::{
    cross_entropy, finite_diff_grad, kl_divergence, max_relative_error, softmax,
    softmax_temperature,
};
pub use optim::SgdMomentum;
pub use pruning::{
    apply_mask, compute_mask, sparsity_report, PruneMask, PruneRanking, PruneScope,
    SparsityReport,
};
pub use report::{run_id_for, EpochMetrics, EvalSnapshot, FinalMetrics, TrainReport};
pub use rng::Rng;
pub use snn::{if_step, surrogate_derivative, NetworkState, SpikeMode};
pub use tensor::Tensor;
pub use train::{accuracy_pct, evaluate, fit, train_baseline, Objective, OptimizerConfig};
