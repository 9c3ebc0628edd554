//! Central finite-difference oracles for checking analytic gradients.
//!
//! Everything here only evaluates forward functions; it never touches the
//! backward code it is used to check.

use crate::error::Result;
use crate::nets::{forward, NetworkParams, NetworkSpec};
use crate::tensor::Tensor;

/// Default perturbation for inputs scaled to [0, 1].
pub const DEFAULT_STEP: f64 = 1e-3;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scalar probe objective `sum(forward(input) * weights)` used to reduce a
/// network output to one number.
pub fn projected_output(
    spec: &NetworkSpec,
    params: &NetworkParams<f64>,
    input: &Tensor<f64>,
    weights: &Tensor<f64>,
) -> Result<f64> {
    let out = forward(spec, params, input)?;
    Ok(out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum())
}

/// Numerical gradient of [`projected_output`] with respect to every
/// parameter array (in `NetworkParams::slices` order) and the input.
pub fn numerical_network_gradients(
    spec: &NetworkSpec,
    params: &NetworkParams<f64>,
    input: &Tensor<f64>,
    weights: &Tensor<f64>,
    step: f64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    // surface shape errors before the perturbation loops
    projected_output(spec, params, input, weights)?;
    let mut param_grads = Vec::new();
    let mut work = params.clone();
    for (li, layer) in params.layers.iter().enumerate() {
        for which in 0..2 {
            let base = if which == 0 { &layer.weight } else { &layer.bias };
            let g = central_difference(
                |v| {
                    let slot = if which == 0 { &mut work.layers[li].weight } else { &mut work.layers[li].bias };
                    slot.copy_from_slice(v);
                    projected_output(spec, &work, input, weights).expect("shape checked")
                },
                base,
                step,
            );
            let slot = if which == 0 { &mut work.layers[li].weight } else { &mut work.layers[li].bias };
            slot.copy_from_slice(base);
            param_grads.push(g);
        }
    }
    let (c, h, w) = input.shape();
    let input_grad = central_difference(
        |v| {
            let x = Tensor::from_vec(c, h, w, v.to_vec()).expect("same shape");
            projected_output(spec, params, &x, weights).expect("shape checked")
        },
        input.data(),
        step,
    );
    Ok((param_grads, input_grad))
}
