use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    Linear,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Softmax => 1,
            Activation::Linear => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Softmax),
            2 => Some(Activation::Linear),
            _ => None,
        }
    }

    /// Applies the activation row-wise (softmax) or element-wise.
    pub(crate) fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Linear => z.clone(),
            Activation::Relu => z.mapv(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Softmax => {
                let mut out = z.clone();
                for row in out.axis_iter_mut(Axis(0)) {
                    softmax_in_place(row);
                }
                out
            }
        }
    }

    /// Maps dL/d(output) to dL/d(input) given the input `z` and output `a`.
    pub(crate) fn backward(self, z: &Array2<f64>, a: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Linear => {}
            Activation::Relu => grad.zip_mut_with(z, |g, &v| {
                if v <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Softmax => {
                for (mut g, p) in grad.axis_iter_mut(Axis(0)).zip(a.axis_iter(Axis(0))) {
                    let dot: f64 = g.iter().zip(p.iter()).map(|(x, y)| x * y).sum();
                    g.zip_mut_with(&p, |gi, &pi| *gi = pi * (*gi - dot));
                }
            }
        }
    }
}

fn softmax_in_place(mut v: ArrayViewMut1<f64>) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.mapv_inplace(|x| (x - max).exp());
    let total: f64 = v.sum();
    v.mapv_inplace(|x| x / total);
}

/// Softmax with max subtraction, so large inputs do not overflow.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = ndarray::Array1::from(v.to_vec());
    softmax_in_place(out.view_mut());
    out.to_vec()
}

pub(crate) fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_input_gives_uniform_output() {
        for p in softmax(&[0.0, 0.0, 0.0]) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_case() {
        let p = softmax(&[2f64.ln(), 0.0, 0.0]);
        for (got, want) in p.iter().zip([0.5, 0.25, 0.25]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn large_inputs_do_not_overflow() {
        let p = softmax(&[1000.0, 0.0, 0.0]);
        assert_eq!(p[0], 1.0);
        assert!(p[1] > 0.0 && p[1] < 1e-300 || p[1] == 0.0);
        assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn relu_clips_negatives() {
        let z = Array2::from_shape_vec((1, 2), vec![-3.0, 5.0]).unwrap();
        assert_eq!(Activation::Relu.apply(&z).into_raw_vec_and_offset().0, vec![0.0, 5.0]);
    }
}
