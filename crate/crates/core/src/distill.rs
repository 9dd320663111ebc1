//! Reverse knowledge distillation: temperature-softened KL losses against
//! either a magnitude-pruned self-teacher or a hand-specified virtual
//! teacher distribution.

use serde::{Deserialize, Serialize};

use crate::data::DatasetHandle;
use crate::error::{Error, Result};
use crate::ops::{cross_entropy, kl_divergence, softmax, softmax_temperature};
use crate::report::TrainReport;
use crate::snn::NetworkState;
use crate::train::{fit, Objective, OptimizerConfig};

/// Which distillation regime is running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KdMode {
    #[default]
    Sparse,
    Default,
}

/// Argument order of the KL term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirection {
    #[default]
    TeacherFirst,
    StudentFirst,
}

/// Distillation hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KdConfig {
    pub mode: KdMode,
    pub temperature: f64,
    pub loss_alpha: f64,
    pub kl_direction: KlDirection,
    /// Permit a teacher whose architecture differs from the student's in
    /// sparse mode. Off by default: the sparse teacher is the student's own
    /// pruned copy, so the specs normally must match.
    pub allow_heterogeneous_teacher: bool,
}

impl Default for KdConfig {
    fn default() -> Self {
        KdConfig {
            mode: KdMode::Sparse,
            temperature: 4.0,
            loss_alpha: 0.9,
            kl_direction: KlDirection::TeacherFirst,
            allow_heterogeneous_teacher: false,
        }
    }
}

impl KdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Parameter(format!(
                "temperature must be finite and > 0, got {}",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.loss_alpha) {
            return Err(Error::Parameter(format!(
                "loss_alpha must be in [0,1], got {}",
                self.loss_alpha
            )));
        }
        Ok(())
    }
}

/// A synthetic teacher that is always right: probability `teacher_alpha` on
/// the correct class, the rest spread uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualTeacher {
    pub num_classes: usize,
    pub teacher_alpha: f64,
}

/// Largest accepted teacher_alpha; a literal 1 would make student-first KL
/// infinite.
pub const TEACHER_ALPHA_MAX: f64 = 1.0 - 1e-6;

impl VirtualTeacher {
    pub fn new(num_classes: usize, teacher_alpha: f64) -> Result<VirtualTeacher> {
        let vt = VirtualTeacher {
            num_classes,
            teacher_alpha,
        };
        vt.validate()?;
        Ok(vt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Parameter(format!(
                "virtual teacher needs at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if !(self.teacher_alpha > 0.9) || self.teacher_alpha > TEACHER_ALPHA_MAX {
            return Err(Error::Parameter(format!(
                "teacher_alpha must be in (0.9, {TEACHER_ALPHA_MAX}], got {}",
                self.teacher_alpha
            )));
        }
        Ok(())
    }
}

/// The virtual teacher's distribution for a given correct class: p[target] =
/// teacher_alpha, every other entry (1 - teacher_alpha) / (C - 1).
///
/// Every entry is snapped to a multiple of 2^-52 and the target entry takes
/// 1 minus the (exact) off-target total. All partial sums of such values
/// below 2 are representable, so the emitted probabilities sum to exactly 1
/// in any summation order. The snapping moves each entry by at most 2^-53
/// from its closed form.
pub fn virtual_teacher_dist(vt: &VirtualTeacher, target: usize) -> Result<Vec<f64>> {
    vt.validate()?;
    if target >= vt.num_classes {
        return Err(Error::Index(format!(
            "target class {target} out of range for {} classes",
            vt.num_classes
        )));
    }
    let grid = (1u64 << 52) as f64;
    let others = (vt.num_classes - 1) as f64;
    let off = ((1.0 - vt.teacher_alpha) / others * grid).round() / grid;
    // off * others carries at most 53 mantissa bits, so both the product and
    // the subtraction are exact.
    let target_mass = 1.0 - off * others;
    if off <= 0.0 || target_mass <= off {
        return Err(Error::Numeric(format!(
            "degenerate virtual teacher distribution (C={}, alpha={})",
            vt.num_classes, vt.teacher_alpha
        )));
    }
    let mut p = vec![off; vt.num_classes];
    p[target] = target_mass;
    Ok(p)
}

fn check_logits(student: &[f64], classes: usize, y: usize) -> Result<()> {
    if student.len() != classes {
        return Err(Error::Dimension(format!(
            "student has {} logits, teacher {classes} classes",
            student.len()
        )));
    }
    if y >= classes {
        return Err(Error::Index(format!(
            "label {y} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Sparse-teacher loss: loss_alpha * T^2 * KL(softened teacher, softened
/// student) + (1 - loss_alpha) * CE(student softmax, y). KL argument order
/// follows cfg.kl_direction (teacher-first by default).
pub fn sparse_kd_loss(
    student_logits: &[f64],
    teacher_logits: &[f64],
    y: usize,
    cfg: &KdConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_logits(student_logits, teacher_logits.len(), y)?;
    let a = cfg.loss_alpha;
    if a == 0.0 {
        return cross_entropy(&softmax(student_logits)?, y);
    }
    let t = cfg.temperature;
    let qs_t = softmax_temperature(student_logits, t)?;
    let qt_t = softmax_temperature(teacher_logits, t)?;
    let kl = match cfg.kl_direction {
        KlDirection::TeacherFirst => kl_divergence(&qt_t, &qs_t)?,
        KlDirection::StudentFirst => kl_divergence(&qs_t, &qt_t)?,
    };
    let kl_term = a * t * t * kl;
    if a == 1.0 {
        return Ok(kl_term);
    }
    let ce = cross_entropy(&softmax(student_logits)?, y)?;
    Ok(kl_term + (1.0 - a) * ce)
}

/// Gradient of `sparse_kd_loss` with respect to the student logits.
pub fn sparse_kd_grad(
    student_logits: &[f64],
    teacher_logits: &[f64],
    y: usize,
    cfg: &KdConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_logits(student_logits, teacher_logits.len(), y)?;
    let c = student_logits.len();
    let a = cfg.loss_alpha;
    let mut grad = vec![0.0; c];
    if a < 1.0 {
        let qs = softmax(student_logits)?;
        for i in 0..c {
            let target = if i == y { 1.0 } else { 0.0 };
            grad[i] += (1.0 - a) * (qs[i] - target);
        }
    }
    if a > 0.0 {
        let t = cfg.temperature;
        let qs_t = softmax_temperature(student_logits, t)?;
        let qt_t = softmax_temperature(teacher_logits, t)?;
        match cfg.kl_direction {
            KlDirection::TeacherFirst => {
                for i in 0..c {
                    grad[i] += a * t * (qs_t[i] - qt_t[i]);
                }
            }
            KlDirection::StudentFirst => {
                let kl = kl_divergence(&qs_t, &qt_t)?;
                for i in 0..c {
                    grad[i] += a * t * qs_t[i] * ((qs_t[i] / qt_t[i]).ln() - kl);
                }
            }
        }
    }
    Ok(grad)
}

/// Virtual-teacher loss: loss_alpha * KL(temperature-flattened teacher,
/// student softmax) + (1 - loss_alpha) * CE(student softmax, y). The teacher
/// is flattened as softmax(ln(probs) / T); the student stays at temperature
/// 1 and no T^2 factor is applied.
pub fn default_kd_loss(
    student_logits: &[f64],
    teacher_probs: &[f64],
    y: usize,
    cfg: &KdConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_logits(student_logits, teacher_probs.len(), y)?;
    let a = cfg.loss_alpha;
    if a == 0.0 {
        return cross_entropy(&softmax(student_logits)?, y);
    }
    let qt_t = flatten_teacher(teacher_probs, cfg.temperature)?;
    let qs = softmax(student_logits)?;
    let kl = match cfg.kl_direction {
        KlDirection::TeacherFirst => kl_divergence(&qt_t, &qs)?,
        KlDirection::StudentFirst => kl_divergence(&qs, &qt_t)?,
    };
    let kl_term = a * kl;
    if a == 1.0 {
        return Ok(kl_term);
    }
    let ce = cross_entropy(&qs, y)?;
    Ok(kl_term + (1.0 - a) * ce)
}

/// Gradient of `default_kd_loss` with respect to the student logits.
pub fn default_kd_grad(
    student_logits: &[f64],
    teacher_probs: &[f64],
    y: usize,
    cfg: &KdConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_logits(student_logits, teacher_probs.len(), y)?;
    let c = student_logits.len();
    let a = cfg.loss_alpha;
    let qs = softmax(student_logits)?;
    let mut grad = vec![0.0; c];
    if a < 1.0 {
        for i in 0..c {
            let target = if i == y { 1.0 } else { 0.0 };
            grad[i] += (1.0 - a) * (qs[i] - target);
        }
    }
    if a > 0.0 {
        let qt_t = flatten_teacher(teacher_probs, cfg.temperature)?;
        match cfg.kl_direction {
            KlDirection::TeacherFirst => {
                for i in 0..c {
                    grad[i] += a * (qs[i] - qt_t[i]);
                }
            }
            KlDirection::StudentFirst => {
                let kl = kl_divergence(&qs, &qt_t)?;
                for i in 0..c {
                    grad[i] += a * qs[i] * ((qs[i] / qt_t[i]).ln() - kl);
                }
            }
        }
    }
    Ok(grad)
}

/// softmax(ln(p) / T): re-softens a probability vector at temperature T.
fn flatten_teacher(probs: &[f64], temperature: f64) -> Result<Vec<f64>> {
    let mut log_p = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::Numeric(format!(
                "teacher probability {p} at index {i} is not positive"
            )));
        }
        log_p.push(p.ln());
    }
    softmax_temperature(&log_p, temperature)
}

/// The teacher side of a distillation run.
#[derive(Debug, Clone)]
pub enum Teacher {
    /// A frozen network, typically the student's own pruned copy.
    Sparse(NetworkState),
    /// The hand-specified distribution of Eq.-style virtual teaching.
    Virtual(VirtualTeacher),
}

/// Train `student` against a frozen teacher. The teacher must agree with
/// `cfg.mode`; in sparse mode the teacher's architecture must equal the
/// student's unless `cfg.allow_heterogeneous_teacher` is set.
pub fn distill_train(
    student: &mut NetworkState,
    teacher: &Teacher,
    data: &DatasetHandle,
    cfg: &KdConfig,
    opt: &OptimizerConfig,
    epochs: usize,
    seed: u64,
) -> Result<TrainReport> {
    cfg.validate()?;
    let mut objective = match (cfg.mode, teacher) {
        (KdMode::Sparse, Teacher::Sparse(t)) => {
            if !cfg.allow_heterogeneous_teacher && t.spec != student.spec {
                return Err(Error::Config(
                    "sparse-mode teacher and student specs differ".into(),
                ));
            }
            Objective::SparseKd {
                teacher: t.clone(),
                cfg: *cfg,
            }
        }
        (KdMode::Default, Teacher::Virtual(vt)) => {
            vt.validate()?;
            if vt.num_classes != student.spec.class_count()? {
                return Err(Error::Config(format!(
                    "virtual teacher has {} classes, student outputs {}",
                    vt.num_classes,
                    student.spec.class_count()?
                )));
            }
            Objective::DefaultKd {
                teacher: *vt,
                cfg: *cfg,
            }
        }
        (KdMode::Sparse, Teacher::Virtual(_)) => {
            return Err(Error::Config(
                "sparse mode requires a network teacher, got a virtual teacher".into(),
            ))
        }
        (KdMode::Default, Teacher::Sparse(_)) => {
            return Err(Error::Config(
                "default mode requires a virtual teacher, got a network teacher".into(),
            ))
        }
    };
    fit(student, &mut objective, data, opt, epochs, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(mode: KdMode, t: f64, a: f64) -> KdConfig {
        KdConfig {
            mode,
            temperature: t,
            loss_alpha: a,
            ..KdConfig::default()
        }
    }

    #[test]
    fn virtual_teacher_ten_classes() {
        let vt = VirtualTeacher::new(10, 0.91).unwrap();
        let p = virtual_teacher_dist(&vt, 3).unwrap();
        assert!((p[3] - 0.91).abs() < 1e-12);
        for (i, &v) in p.iter().enumerate() {
            if i != 3 {
                assert!((v - 0.01).abs() < 1e-12, "p[{i}] = {v}");
            }
        }
        assert_eq!(p.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn virtual_teacher_two_classes() {
        let vt = VirtualTeacher::new(2, 0.95).unwrap();
        let p = virtual_teacher_dist(&vt, 0).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-12);
        assert!((p[1] - 0.05).abs() < 1e-12);
        assert_eq!(p.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn virtual_teacher_rejects_bad_alpha() {
        assert!(VirtualTeacher::new(10, 0.5).is_err());
        assert!(VirtualTeacher::new(10, 0.9).is_err());
        assert!(VirtualTeacher::new(10, 1.0).is_err());
        assert!(VirtualTeacher::new(1, 0.95).is_err());
    }

    #[test]
    fn virtual_teacher_rejects_bad_target() {
        let vt = VirtualTeacher::new(4, 0.95).unwrap();
        assert!(matches!(
            virtual_teacher_dist(&vt, 4),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn sparse_loss_alpha_zero_is_cross_entropy_bitwise() {
        let student = [1.4, -0.3, 0.2];
        let teacher = [0.0, 2.0, -1.0];
        let loss = sparse_kd_loss(&student, &teacher, 2, &cfg(KdMode::Sparse, 4.0, 0.0)).unwrap();
        let ce = cross_entropy(&softmax(&student).unwrap(), 2).unwrap();
        assert_eq!(loss.to_bits(), ce.to_bits());
    }

    #[test]
    fn sparse_loss_alpha_one_identical_nets_is_zero() {
        let logits = [0.7, -1.2, 0.4, 0.0];
        let loss = sparse_kd_loss(&logits, &logits, 1, &cfg(KdMode::Sparse, 4.0, 1.0)).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn sparse_loss_hand_example() {
        // student == teacher == [1,0], y=0, T=2, alpha=0.5: KL term is 0,
        // CE term is -ln(e/(e+1)).
        let loss = sparse_kd_loss(&[1.0, 0.0], &[1.0, 0.0], 0, &cfg(KdMode::Sparse, 2.0, 0.5))
            .unwrap();
        assert!((loss - 0.1566).abs() < 5e-5, "loss = {loss}");
    }

    #[test]
    fn default_loss_alpha_zero_is_cross_entropy_bitwise() {
        let student = [0.5, 0.1, -0.9];
        let vt = VirtualTeacher::new(3, 0.95).unwrap();
        let p = virtual_teacher_dist(&vt, 0).unwrap();
        let loss = default_kd_loss(&student, &p, 0, &cfg(KdMode::Default, 4.0, 0.0)).unwrap();
        let ce = cross_entropy(&softmax(&student).unwrap(), 0).unwrap();
        assert_eq!(loss.to_bits(), ce.to_bits());
    }

    #[test]
    fn default_loss_hand_example() {
        // T=1, uniform student, teacher [0.95, 0.05], y=0:
        // 0.5 * KL(teacher || uniform) + 0.5 * ln 2.
        let loss = default_kd_loss(&[0.0, 0.0], &[0.95, 0.05], 0, &cfg(KdMode::Default, 1.0, 0.5))
            .unwrap();
        assert!((loss - 0.5939).abs() < 5e-5, "loss = {loss}");
    }

    #[test]
    fn default_loss_large_temperature_flattens_teacher() {
        let student = [1.0, -0.5, 0.3];
        let vt = VirtualTeacher::new(3, 0.95).unwrap();
        let p = virtual_teacher_dist(&vt, 1).unwrap();
        let c = cfg(KdMode::Default, 1e6, 1.0);
        let loss = default_kd_loss(&student, &p, 1, &c).unwrap();
        let uniform = [1.0 / 3.0; 3];
        let qs = softmax(&student).unwrap();
        let expect = kl_divergence(&uniform, &qs).unwrap();
        assert!((loss - expect).abs() < 1e-3, "loss {loss} vs {expect}");
    }

    #[test]
    fn default_loss_near_onehot_teacher_approaches_cross_entropy() {
        let student = [0.8, -0.2, 0.1, -1.0];
        let vt = VirtualTeacher::new(4, TEACHER_ALPHA_MAX).unwrap();
        let p = virtual_teacher_dist(&vt, 2).unwrap();
        let loss = default_kd_loss(&student, &p, 2, &cfg(KdMode::Default, 1.0, 0.5)).unwrap();
        let ce = cross_entropy(&softmax(&student).unwrap(), 2).unwrap();
        assert!((loss - ce).abs() < 1e-4, "loss {loss} vs CE {ce}");
    }

    #[test]
    fn gradients_match_finite_differences_both_losses() {
        let mut rng = crate::rng::Rng::new(99);
        for draw in 0..20 {
            let c = 2 + (draw % 5);
            let student: Vec<f64> = (0..c).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let teacher: Vec<f64> = (0..c).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let y = rng.index(c);
            let t = rng.uniform(0.5, 8.0);
            let a = rng.uniform(0.0, 1.0);
            for dir in [KlDirection::TeacherFirst, KlDirection::StudentFirst] {
                let kcfg = KdConfig {
                    mode: KdMode::Sparse,
                    temperature: t,
                    loss_alpha: a,
                    kl_direction: dir,
                    ..KdConfig::default()
                };
                let grad = sparse_kd_grad(&student, &teacher, y, &kcfg).unwrap();
                let x0 = crate::tensor::Tensor::vector(&student);
                let fd = crate::ops::finite_diff_grad(
                    &mut |x| sparse_kd_loss(x.data(), &teacher, y, &kcfg),
                    &x0,
                    1e-6,
                )
                .unwrap();
                let err = crate::ops::max_relative_error(&grad, fd.data(), 1e-3);
                assert!(err < 1e-6, "sparse {dir:?} draw {draw}: err {err}");
            }
            let vt = VirtualTeacher::new(c, 0.91 + 0.08 * rng.next_f64()).unwrap();
            let p = virtual_teacher_dist(&vt, y).unwrap();
            for dir in [KlDirection::TeacherFirst, KlDirection::StudentFirst] {
                let kcfg = KdConfig {
                    mode: KdMode::Default,
                    temperature: t,
                    loss_alpha: a,
                    kl_direction: dir,
                    ..KdConfig::default()
                };
                let grad = default_kd_grad(&student, &p, y, &kcfg).unwrap();
                let x0 = crate::tensor::Tensor::vector(&student);
                let fd = crate::ops::finite_diff_grad(
                    &mut |x| default_kd_loss(x.data(), &p, y, &kcfg),
                    &x0,
                    1e-6,
                )
                .unwrap();
                let err = crate::ops::max_relative_error(&grad, fd.data(), 1e-3);
                assert!(err < 1e-6, "default {dir:?} draw {draw}: err {err}");
            }
        }
    }

    proptest! {
        #[test]
        fn virtual_teacher_always_sums_to_one_exactly(
            c in 2usize..100,
            alpha_pick in 0usize..3,
            target_frac in 0.0..1.0f64,
        ) {
            let alpha = [0.91, 0.95, 0.99][alpha_pick];
            let target = ((c as f64) * target_frac) as usize % c;
            let vt = VirtualTeacher::new(c, alpha).unwrap();
            let p = virtual_teacher_dist(&vt, target).unwrap();
            prop_assert_eq!(p.iter().sum::<f64>(), 1.0);
            let off = p[(target + 1) % c];
            let off_exact = (1.0 - alpha) / (c - 1) as f64;
            prop_assert!((off - off_exact).abs() <= f64::EPSILON);
            prop_assert!((p[target] - alpha).abs() < 1e-12);
            for (i, &v) in p.iter().enumerate() {
                if i != target {
                    prop_assert_eq!(v, off);
                }
            }
        }

        #[test]
        fn sparse_loss_is_non_negative(
            sl in proptest::collection::vec(-5.0..5.0f64, 2..6),
            tl_seed in 0u64..500,
            t in 0.5..8.0f64,
            a in 0.0..1.0f64,
        ) {
            let mut rng = crate::rng::Rng::new(tl_seed);
            let tl: Vec<f64> = (0..sl.len()).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let loss = sparse_kd_loss(&sl, &tl, 0, &cfg(KdMode::Sparse, t, a)).unwrap();
            prop_assert!(loss >= -1e-12, "loss {loss}");
        }
    }
}
