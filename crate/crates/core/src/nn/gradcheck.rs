//! Central finite-difference check of [`NetworkParams::backward`].

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::loss::Loss;
use super::network::{mlp_specs, Gradients, NetworkParams};
use crate::error::{Error, Result};

/// Floor on the denominator of the relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat parameter index of the worst entry.
    pub worst_index: usize,
    pub n_params: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Loss of a dropout-free training-mode pass (batch statistics for batch norm).
pub fn training_loss(net: &NetworkParams, x: &Array2<f64>, y: &Array2<f64>, loss: Loss) -> Result<f64> {
    let (out, _) = net.forward_with_masks(x, vec![None; net.layers().len()])?;
    loss.value(&out, y)
}

/// Backprop gradients of the dropout-free training-mode loss.
pub fn analytic_gradients(
    net: &NetworkParams,
    x: &Array2<f64>,
    y: &Array2<f64>,
    loss: Loss,
) -> Result<Gradients> {
    let (out, cache) = net.forward_with_masks(x, vec![None; net.layers().len()])?;
    net.backward(&cache, &loss.gradient(&out, y)?)
}

/// Smallest `|z|` over all ReLU pre-activations; a batch is kink-free for step
/// `h` when this exceeds `10 h`.
pub fn relu_margin(net: &NetworkParams, x: &Array2<f64>) -> Result<f64> {
    let (_, cache) = net.forward_with_masks(x, vec![None; net.layers().len()])?;
    Ok(net
        .layers()
        .iter()
        .zip(cache.pre_activations())
        .filter(|(l, _)| l.spec.activation == Activation::Relu)
        .flat_map(|(_, z)| z.iter().map(|v| v.abs()))
        .fold(f64::INFINITY, f64::min))
}

pub fn grad_check(
    net: &NetworkParams,
    x: &Array2<f64>,
    y: &Array2<f64>,
    loss: Loss,
    h: f64,
) -> Result<GradCheckReport> {
    let grads = analytic_gradients(net, x, y, loss)?;
    grad_check_against(net, x, y, loss, h, &grads)
}

/// Compares the supplied gradients against central differences.
pub fn grad_check_against(
    net: &NetworkParams,
    x: &Array2<f64>,
    y: &Array2<f64>,
    loss: Loss,
    h: f64,
    grads: &Gradients,
) -> Result<GradCheckReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("step must be > 0, got {h}")));
    }
    let analytic = grads.flatten();
    let n_params = net.n_params();
    if analytic.len() != n_params {
        return Err(Error::Shape(format!(
            "{} gradient entries for {} parameters",
            analytic.len(),
            n_params
        )));
    }
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        n_params,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let orig = set_param(&mut probe, i, None);
        set_param(&mut probe, i, Some(orig + h));
        let plus = training_loss(&probe, x, y, loss)?;
        set_param(&mut probe, i, Some(orig - h));
        let minus = training_loss(&probe, x, y, loss)?;
        set_param(&mut probe, i, Some(orig));
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(a, numeric);
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}

/// Returns the current value of flat parameter `i`, writing `value` if given.
fn set_param(net: &mut NetworkParams, mut i: usize, value: Option<f64>) -> f64 {
    for (_, t) in net.tensors_mut() {
        if i < t.len() {
            let old = t[i];
            if let Some(v) = value {
                t[i] = v;
            }
            return old;
        }
        i -= t.len();
    }
    panic!("parameter index out of range");
}

/// One randomly drawn network of a [`grad_check_matrix`] run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckCase {
    /// Dense layers including the output layer.
    pub n_layers: usize,
    pub widths: Vec<usize>,
    pub batch_norm: bool,
    pub loss: Loss,
    pub n_params: usize,
    pub max_rel_error: f64,
}

/// Checks `n_nets` random networks with 2 to 6 dense layers, cycling through
/// cross-entropy, L1 and L2 losses and alternating batch normalization.
/// Batches are redrawn until every ReLU pre-activation and every L1 residual
/// is more than `10 h` away from its kink; networks with no such batch are
/// redrawn. Regression networks get small output weights and targets (see
/// [`OUTPUT_WEIGHT_SCALE`]). With `corrupt`, one analytic
/// gradient entry per network is doubled before comparison.
pub fn grad_check_matrix(n_nets: usize, seed: u64, h: f64, corrupt: bool) -> Result<Vec<GradCheckCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(n_nets);
    for i in 0..n_nets {
        let n_layers = 2 + i % 5;
        let loss = [Loss::CrossEntropy, Loss::Lp(1), Loss::Lp(2)][i % 3];
        let batch_norm = (i / 3) % 2 == 1;
        let n_in = rng.random_range(2..=5);
        let width = rng.random_range(3..=6);
        let (n_out, output) = match loss {
            Loss::CrossEntropy => (3, Activation::Softmax),
            _ => (rng.random_range(1..=2), Activation::Linear),
        };
        let hidden = vec![width; n_layers - 1];
        let specs = mlp_specs(n_in, &hidden, n_out, output, batch_norm, 0.0);
        // A dead layer feeding batch norm pins pre-activations at zero, so
        // the network itself is redrawn when no batch clears the kinks.
        let mut drawn = None;
        for _ in 0..100 {
            let mut net = NetworkParams::new(&specs, rng.random())?;
            if loss != Loss::CrossEntropy {
                shrink_output_weights(&mut net);
            }
            if let Some((x, y)) = kink_free_batch(&net, loss, h, &mut rng)? {
                drawn = Some((net, x, y));
                break;
            }
        }
        let (net, x, y) = drawn.ok_or_else(|| Error::Config("no kink-free batch found".into()))?;
        let report = if corrupt {
            let mut g = analytic_gradients(&net, &x, &y, loss)?;
            let w = &mut g.layers[0].weights;
            let (r, c) = (rng.random_range(0..w.nrows()), rng.random_range(0..w.ncols()));
            // A zero entry stays zero when doubled; shift it instead.
            w[(r, c)] = if w[(r, c)] != 0.0 { 2.0 * w[(r, c)] } else { 1.0 };
            grad_check_against(&net, &x, &y, loss, h, &g)?
        } else {
            grad_check(&net, &x, &y, loss, h)?
        };
        cases.push(GradCheckCase {
            n_layers,
            widths: specs.iter().map(|s| s.n_out).collect(),
            batch_norm,
            loss,
            n_params: report.n_params,
            max_rel_error: report.max_rel_error,
        });
    }
    Ok(cases)
}

const BATCH: usize = 8;

/// Along exactly flat directions (L1 sign cancellations, batch-norm shift
/// invariance) the central difference sees only rounding in the loss, which
/// scales with the residual magnitude. Small output weights and targets keep
/// that noise below the relative-error floor.
pub const OUTPUT_WEIGHT_SCALE: f64 = 1e-3;

fn shrink_output_weights(net: &mut NetworkParams) {
    let last = net.layers().len() - 1;
    let mut tensors = net.tensors_mut();
    if let Some((_, w)) = tensors.iter_mut().find(|(l, _)| *l == last) {
        w.iter_mut().for_each(|v| *v *= OUTPUT_WEIGHT_SCALE);
    }
}

fn kink_free_batch(
    net: &NetworkParams,
    loss: Loss,
    h: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(Array2<f64>, Array2<f64>)>> {
    let n_out = net.n_outputs();
    for _ in 0..50 {
        let x = Array2::from_shape_simple_fn((BATCH, net.n_inputs()), || rng.random_range(-1.0..1.0));
        let y = match loss {
            Loss::CrossEntropy => {
                let mut y = Array2::zeros((BATCH, n_out));
                for mut row in y.rows_mut() {
                    row[rng.random_range(0..n_out)] = 1.0;
                }
                y
            }
            _ => Array2::from_shape_simple_fn((BATCH, n_out), || {
                OUTPUT_WEIGHT_SCALE * rng.random_range(-1.0..1.0)
            }),
        };
        if relu_margin(net, &x)? <= 10.0 * h {
            continue;
        }
        if loss == Loss::Lp(1) {
            let (out, _) = net.forward_with_masks(&x, vec![None; net.layers().len()])?;
            if out.iter().zip(y.iter()).any(|(o, t)| (o - t).abs() <= 10.0 * h) {
                continue;
            }
        }
        return Ok(Some((x, y)));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::LayerSpec;

    fn batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn linear_quadratic_case() {
        let net = NetworkParams::new(&[LayerSpec::dense(3, 2, Activation::Linear)], 1).unwrap();
        let x = batch(8, 3, 2);
        let y = batch(8, 2, 3);
        let r = grad_check(&net, &x, &y, Loss::Lp(2), 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-7, "{r:?}");
        assert_eq!(r.n_params, 8);
    }

    #[test]
    fn relu_net_away_from_kinks() {
        let specs = mlp_specs(4, &[6], 3, Activation::Softmax, false, 0.0);
        let h = 1e-5;
        for seed in 0..50 {
            let net = NetworkParams::new(&specs, seed).unwrap();
            let x = batch(8, 4, seed + 100);
            if relu_margin(&net, &x).unwrap() <= 10.0 * h {
                continue;
            }
            let mut y = Array2::zeros((8, 3));
            for i in 0..8 {
                y[(i, i % 3)] = 1.0;
            }
            let r = grad_check(&net, &x, &y, Loss::CrossEntropy, h).unwrap();
            assert!(r.max_rel_error < 1e-5, "{r:?}");
            return;
        }
        panic!("no kink-free batch found");
    }

    #[test]
    fn corrupted_entry_is_reported() {
        let net = NetworkParams::new(&[LayerSpec::dense(3, 2, Activation::Linear)], 1).unwrap();
        let x = batch(8, 3, 2);
        let y = batch(8, 2, 3);
        let mut g = analytic_gradients(&net, &x, &y, Loss::Lp(2)).unwrap();
        g.layers[0].weights[(1, 1)] *= 2.0;
        let r = grad_check_against(&net, &x, &y, Loss::Lp(2), 1e-5, &g).unwrap();
        assert!(r.max_rel_error > 0.1);
        assert_eq!(r.worst_index, 3);
    }

    #[test]
    fn matrix_passes_and_detects_faults() {
        let clean = grad_check_matrix(10, 1, 1e-5, false).unwrap();
        for c in &clean {
            assert!(c.max_rel_error < 1e-4, "{c:?}");
        }
        let faulty = grad_check_matrix(10, 1, 1e-5, true).unwrap();
        assert!(faulty.iter().all(|c| c.max_rel_error > 0.1));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(0.0, 1e-10) - 1e-2).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
