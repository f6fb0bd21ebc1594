use serde::{Deserialize, Serialize};

use super::network::{Gradients, NetworkParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// Per coordinate: `E <- rho E + (1 - rho) g^2`, `theta <- theta - eta g / (sqrt(E) + eps)`.
pub fn rmsprop_update(theta: &mut [f64], grad: &[f64], accum: &mut [f64], cfg: &RmsPropConfig) {
    for ((t, &g), e) in theta.iter_mut().zip(grad).zip(accum.iter_mut()) {
        *e = cfg.decay * *e + (1.0 - cfg.decay) * g * g;
        if g != 0.0 {
            *t -= cfg.learning_rate * g / (e.sqrt() + cfg.epsilon);
        }
    }
}

/// Applies one RMSProp step to every trainable tensor. `accum` starts as
/// [`Gradients::zeros_like`] and carries the running mean of squared gradients.
pub fn rmsprop_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    accum: &mut Gradients,
    cfg: &RmsPropConfig,
) -> Result<()> {
    let grads = grads.tensors();
    let mut accum = accum.tensors_mut();
    let mut thetas = params.tensors_mut();
    let same_shape = grads.len() == thetas.len()
        && accum.len() == thetas.len()
        && thetas
            .iter()
            .zip(&grads)
            .zip(&accum)
            .all(|((t, g), a)| t.1.len() == g.1.len() && t.1.len() == a.1.len());
    if !same_shape {
        return Err(Error::Shape("gradients do not match parameter shapes".into()));
    }
    for (((layer, theta), (_, g)), (_, acc)) in thetas.iter_mut().zip(&grads).zip(accum.iter_mut()) {
        rmsprop_update(theta, g, acc, cfg);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                layer: *layer,
                msg: "RMSProp update produced non-finite parameters".into(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_gradient_leaves_parameters() {
        let mut theta = [1.5, -2.0];
        let mut acc = [0.3, 0.0];
        rmsprop_update(&mut theta, &[0.0, 0.0], &mut acc, &RmsPropConfig::default());
        assert_eq!(theta, [1.5, -2.0]);
    }

    #[test]
    fn single_scalar_hand_value() {
        let cfg = RmsPropConfig {
            learning_rate: 0.01,
            decay: 0.9,
            epsilon: 0.0,
        };
        let mut theta = [0.0];
        let mut acc = [0.0];
        rmsprop_update(&mut theta, &[1.0], &mut acc, &cfg);
        // E = 0.1, step = 0.01 / sqrt(0.1)
        assert!((acc[0] - 0.1).abs() < 1e-15);
        assert!((theta[0] + 0.01 / 0.1f64.sqrt()).abs() < 1e-15);
        assert!((theta[0] + 0.031623).abs() < 1e-6);
    }

    #[test]
    fn accumulator_growth_shrinks_steps() {
        let cfg = RmsPropConfig {
            learning_rate: 0.01,
            decay: 0.9,
            epsilon: 0.0,
        };
        let mut theta = [0.0];
        let mut acc = [0.0];
        rmsprop_update(&mut theta, &[1.0], &mut acc, &cfg);
        let first = theta[0];
        rmsprop_update(&mut theta, &[1.0], &mut acc, &cfg);
        let second = theta[0] - first;
        // Second step: E = 0.9 * 0.1 + 0.1 = 0.19.
        assert!((second + 0.01 / 0.19f64.sqrt()).abs() < 1e-15);
        assert!(second.abs() < first.abs());
    }
}
