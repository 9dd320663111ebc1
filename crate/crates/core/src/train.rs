//! The training loop shared by plain supervised runs and both distillation
//! regimes: traced temporal forward, objective-specific logit gradients,
//! backpropagation through time, and momentum-SGD updates that respect an
//! installed pruning mask.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{epoch_order, DatasetHandle, Split};
use crate::distill::{
    default_kd_grad, default_kd_loss, sparse_kd_grad, sparse_kd_loss, virtual_teacher_dist,
    KdConfig, VirtualTeacher,
};
use crate::error::{Error, Result};
use crate::network::Params;
use crate::ops::{cross_entropy, softmax};
use crate::optim::SgdMomentum;
use crate::report::{fnv1a, run_id_for, EpochMetrics, EvalSnapshot, FinalMetrics, TrainReport};
use crate::snn::{NetworkState, SpikeMode};
use crate::tensor::Tensor;

/// Optimizer and batching settings for one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 0.1,
            momentum: 0.9,
            batch_size: 32,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Parameter(format!(
                "lr must be finite and > 0, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!(
                "momentum must be in [0,1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// What the student is trained against. Teacher networks held here are
/// frozen: they run forward passes only and never receive updates.
#[derive(Debug, Clone)]
pub enum Objective {
    CrossEntropy,
    SparseKd {
        teacher: NetworkState,
        cfg: KdConfig,
    },
    DefaultKd {
        teacher: VirtualTeacher,
        cfg: KdConfig,
    },
}

impl Objective {
    /// Loss and dloss/dlogits for one sample. Network-teacher objectives run
    /// the teacher on the same sample, re-encoded for the teacher's own
    /// timestep count.
    fn loss_and_grad(
        &mut self,
        data: &DatasetHandle,
        split: Split,
        index: usize,
        logits: &[f64],
        label: usize,
    ) -> Result<(f64, Vec<f64>)> {
        match self {
            Objective::CrossEntropy => {
                let probs = softmax(logits)?;
                let loss = cross_entropy(&probs, label)?;
                let mut grad = probs;
                grad[label] -= 1.0;
                Ok((loss, grad))
            }
            Objective::SparseKd { teacher, cfg } => {
                let seq = data.input_sequence(split, index, teacher.spec.timesteps)?;
                let teacher_logits = teacher.forward_temporal(&seq, SpikeMode::Hard, false)?;
                let loss = sparse_kd_loss(logits, teacher_logits.data(), label, cfg)?;
                let grad = sparse_kd_grad(logits, teacher_logits.data(), label, cfg)?;
                Ok((loss, grad))
            }
            Objective::DefaultKd { teacher, cfg } => {
                let probs = virtual_teacher_dist(teacher, label)?;
                let loss = default_kd_loss(logits, &probs, label, cfg)?;
                let grad = default_kd_grad(logits, &probs, label, cfg)?;
                Ok((loss, grad))
            }
        }
    }

    /// A JSON description that feeds the run id: equal objectives hash
    /// equal, and a network teacher is fingerprinted by its parameters.
    fn config_value(&self) -> Result<serde_json::Value> {
        Ok(match self {
            Objective::CrossEntropy => serde_json::json!({"kind": "cross-entropy"}),
            Objective::SparseKd { teacher, cfg } => {
                let mut bytes = Vec::with_capacity(teacher.params.count() * 8);
                for v in teacher.params.flatten() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                serde_json::json!({
                    "kind": "sparse-kd",
                    "kd": serde_json::to_value(cfg)?,
                    "teacher_fingerprint": format!("{:016x}", fnv1a(&bytes)),
                })
            }
            Objective::DefaultKd { teacher, cfg } => serde_json::json!({
                "kind": "default-kd",
                "kd": serde_json::to_value(cfg)?,
                "teacher_classes": teacher.num_classes,
                "teacher_alpha": teacher.teacher_alpha,
            }),
        })
    }
}

/// Count correct argmax predictions on one split. The per-thread tallies are
/// integers, so the result is identical for any thread count.
pub fn evaluate(
    state: &NetworkState,
    data: &DatasetHandle,
    split: Split,
    threads: usize,
) -> Result<(usize, usize)> {
    if threads == 0 {
        return Err(Error::Parameter("threads must be >= 1".into()));
    }
    let (samples, labels) = data.samples(split);
    if samples.is_empty() {
        return Err(Error::Parameter("cannot evaluate an empty split".into()));
    }
    let t_steps = state.spec.timesteps;
    let count_range = |state: &mut NetworkState, lo: usize, hi: usize| -> Result<usize> {
        let mut correct = 0;
        #[allow(clippy::needless_range_loop)]
        for i in lo..hi {
            let seq = data.input_sequence(split, i, t_steps)?;
            let logits = state.forward_temporal(&seq, SpikeMode::Hard, false)?;
            if logits.argmax() == labels[i] {
                correct += 1;
            }
        }
        Ok(correct)
    };
    let n = samples.len();
    let threads = threads.min(n);
    if threads == 1 {
        let mut local = state.clone();
        let correct = count_range(&mut local, 0, n)?;
        return Ok((correct, n));
    }
    let chunk = n.div_ceil(threads);
    let counts: Vec<Result<usize>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for t in 0..threads {
            let lo = t * chunk;
            let hi = ((t + 1) * chunk).min(n);
            let count_range = &count_range;
            handles.push(scope.spawn(move || {
                let mut local = state.clone();
                count_range(&mut local, lo, hi)
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect()
    });
    let mut correct = 0;
    for c in counts {
        correct += c?;
    }
    Ok((correct, n))
}

pub fn accuracy_pct(correct: usize, total: usize) -> f64 {
    100.0 * correct as f64 / total as f64
}

fn snapshot(state: &NetworkState, data: &DatasetHandle) -> Result<EvalSnapshot> {
    let (train_correct, train_total) = evaluate(state, data, Split::Train, 1)?;
    let (test_correct, test_total) = evaluate(state, data, Split::Test, 1)?;
    Ok(EvalSnapshot {
        train_acc_pct: accuracy_pct(train_correct, train_total),
        test_acc_pct: accuracy_pct(test_correct, test_total),
    })
}

fn accumulate(acc: &mut Params, grads: &Params) -> Result<()> {
    for (a, g) in acc.layers.iter_mut().zip(&grads.layers) {
        if let (Some(a), Some(g)) = (a.as_mut(), g.as_ref()) {
            a.weight.add_assign(&g.weight)?;
            a.bias.add_assign(&g.bias)?;
        }
    }
    Ok(())
}

fn scale_in_place(params: &mut Params, factor: f64) {
    for p in params.layers.iter_mut().flatten() {
        p.weight = p.weight.scale(factor);
        p.bias = p.bias.scale(factor);
    }
}

/// Train `student` against `objective` for `epochs` passes over the train
/// split. Batches are visited in a seeded shuffle, gradients are averaged
/// over each batch, and any mask installed on the student survives every
/// update. Training itself is single-threaded; `epochs` 0 performs only the
/// initial evaluation and leaves the student untouched.
pub fn fit(
    student: &mut NetworkState,
    objective: &mut Objective,
    data: &DatasetHandle,
    opt: &OptimizerConfig,
    epochs: usize,
    seed: u64,
) -> Result<TrainReport> {
    opt.validate()?;
    data.validate()?;
    let step_shape = data.step_input_shape();
    let classes = student.spec.validate(&step_shape)?;
    if classes != data.manifest.classes {
        return Err(Error::Config(format!(
            "network outputs {classes} classes, dataset has {}",
            data.manifest.classes
        )));
    }
    let config = serde_json::json!({
        "objective": objective.config_value()?,
        "optimizer": serde_json::to_value(opt)?,
        "epochs": epochs,
        "seed": seed,
        "spec": serde_json::to_value(&student.spec)?,
        "dataset": serde_json::to_value(&data.manifest)?,
    });
    let run_id = run_id_for(&config)?;
    let started = Instant::now();

    let initial = snapshot(student, data)?;
    let mut best_test = initial.test_acc_pct;
    let mut best_epoch = 0;

    let mut optimizer = SgdMomentum::new(opt.lr, opt.momentum, &student.params)?;
    let t_steps = student.spec.timesteps;
    let n = data.train_samples.len();
    let mut epoch_rows = Vec::with_capacity(epochs);

    for epoch in 1..=epochs {
        let epoch_started = Instant::now();
        let order = epoch_order(n, seed, epoch);
        let mut loss_sum = 0.0;
        let mut train_correct = 0usize;
        for batch in order.chunks(opt.batch_size) {
            let mut grad_sum = student.params.zeros_like();
            for &i in batch {
                let seq = data.input_sequence(Split::Train, i, t_steps)?;
                let logits = student.forward_temporal(&seq, SpikeMode::Hard, true)?;
                let label = data.train_labels[i];
                if logits.argmax() == label {
                    train_correct += 1;
                }
                let (loss, dlogits) =
                    objective.loss_and_grad(data, Split::Train, i, logits.data(), label)?;
                loss_sum += loss;
                let grads = student.backward_temporal(&Tensor::vector(&dlogits))?;
                accumulate(&mut grad_sum, &grads)?;
            }
            scale_in_place(&mut grad_sum, 1.0 / batch.len() as f64);
            optimizer.step(&mut student.params, &grad_sum, student.mask.as_ref())?;
        }
        let (test_correct, test_total) = evaluate(student, data, Split::Test, 1)?;
        let test_acc_pct = accuracy_pct(test_correct, test_total);
        if test_acc_pct > best_test {
            best_test = test_acc_pct;
            best_epoch = epoch;
        }
        epoch_rows.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / n as f64,
            train_acc_pct: accuracy_pct(train_correct, n),
            test_acc_pct,
            wall_time_s: epoch_started.elapsed().as_secs_f64(),
        });
    }

    let last = epoch_rows.last();
    let final_metrics = FinalMetrics {
        train_acc_pct: last.map_or(initial.train_acc_pct, |e| e.train_acc_pct),
        test_acc_pct: last.map_or(initial.test_acc_pct, |e| e.test_acc_pct),
        best_test_acc_pct: best_test,
        best_epoch,
        final_train_loss: last.map(|e| e.train_loss),
    };
    Ok(TrainReport {
        run_id,
        config,
        initial,
        epochs: epoch_rows,
        final_metrics,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Initialize a fresh network from `seed` and train it with plain
/// cross-entropy.
pub fn train_baseline(
    spec: &crate::network::NetworkSpec,
    data: &DatasetHandle,
    opt: &OptimizerConfig,
    epochs: usize,
    seed: u64,
) -> Result<(NetworkState, TrainReport)> {
    let mut state = NetworkState::init(spec, seed);
    let report = fit(&mut state, &mut Objective::CrossEntropy, data, opt, epochs, seed)?;
    Ok((state, report))
}
