//! Stochastic gradient descent with classical momentum.
//!
//! Every step ends by re-applying any attached prune mask, so weights a
//! mask has zeroed stay exactly zero no matter what gradient they receive.

use crate::error::{Error, Result};
use crate::network::Params;
use crate::pruning::PruneMask;

/// SGD with momentum: v <- momentum * v + g; p <- p - lr * v.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Params,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64, params: &Params) -> Result<SgdMomentum> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Parameter(format!("lr must be finite and > 0, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Parameter(format!(
                "momentum must be in [0,1), got {momentum}"
            )));
        }
        Ok(SgdMomentum {
            lr,
            momentum,
            velocity: params.zeros_like(),
        })
    }

    /// One update in place; re-applies `mask` afterwards when present.
    pub fn step(
        &mut self,
        params: &mut Params,
        grads: &Params,
        mask: Option<&PruneMask>,
    ) -> Result<()> {
        let flat_grads = grads.flatten();
        if let Some(bad) = flat_grads.iter().find(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient {bad}")));
        }
        for (l, gp) in grads.layers.iter().enumerate() {
            let Some(gp) = gp else { continue };
            let vp = self.velocity.layers[l]
                .as_mut()
                .ok_or_else(|| Error::State(format!("velocity missing for layer {l}")))?;
            let pp = params.layers[l]
                .as_mut()
                .ok_or_else(|| Error::State(format!("parameters missing for layer {l}")))?;
            for ((v, g), p) in vp
                .weight
                .data_mut()
                .iter_mut()
                .zip(gp.weight.data())
                .zip(pp.weight.data_mut())
            {
                *v = self.momentum * *v + g;
                *p -= self.lr * *v;
            }
            for ((v, g), p) in vp
                .bias
                .data_mut()
                .iter_mut()
                .zip(gp.bias.data())
                .zip(pp.bias.data_mut())
            {
                *v = self.momentum * *v + g;
                *p -= self.lr * *v;
            }
        }
        if let Some(mask) = mask {
            mask.apply(params)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, NetworkSpec};
    use crate::rng::Rng;

    fn small_params() -> (NetworkSpec, Params) {
        let spec = NetworkSpec::mlp(4, 2, 2);
        let params = init_params(&spec, &mut Rng::new(3));
        (spec, params)
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let (_, params) = small_params();
        assert!(SgdMomentum::new(0.0, 0.9, &params).is_err());
        assert!(SgdMomentum::new(-0.1, 0.9, &params).is_err());
        assert!(SgdMomentum::new(0.1, 1.0, &params).is_err());
        assert!(SgdMomentum::new(0.1, -0.1, &params).is_err());
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let (_, mut params) = small_params();
        let before = params.flatten();
        let grads = params.zeros_like();
        let mut opt = SgdMomentum::new(0.1, 0.9, &params).unwrap();
        opt.step(&mut params, &grads, None).unwrap();
        assert_eq!(params.flatten(), before);
    }

    #[test]
    fn single_weight_update_arithmetic() {
        let (_, mut params) = small_params();
        let mut grads = params.zeros_like();
        params.layers[1].as_mut().unwrap().weight.data_mut()[0] = 1.0;
        grads.layers[1].as_mut().unwrap().weight.data_mut()[0] = 0.5;
        let mut opt = SgdMomentum::new(0.1, 0.0, &params).unwrap();
        opt.step(&mut params, &grads, None).unwrap();
        let w = params.layers[1].as_ref().unwrap().weight.data()[0];
        assert!((w - 0.95).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates_velocity() {
        let (_, mut params) = small_params();
        params.layers[1].as_mut().unwrap().weight.data_mut()[0] = 0.0;
        let mut grads = params.zeros_like();
        grads.layers[1].as_mut().unwrap().weight.data_mut()[0] = 1.0;
        let mut opt = SgdMomentum::new(1.0, 0.5, &params).unwrap();
        opt.step(&mut params, &grads, None).unwrap();
        opt.step(&mut params, &grads, None).unwrap();
        // v1 = 1, p = -1; v2 = 1.5, p = -2.5
        let w = params.layers[1].as_ref().unwrap().weight.data()[0];
        assert!((w - (-2.5)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_a_numeric_error() {
        let (_, mut params) = small_params();
        let mut grads = params.zeros_like();
        grads.layers[1].as_mut().unwrap().weight.data_mut()[0] = f64::NAN;
        let mut opt = SgdMomentum::new(0.1, 0.9, &params).unwrap();
        assert!(matches!(
            opt.step(&mut params, &grads, None),
            Err(Error::Numeric(_))
        ));
    }
}
