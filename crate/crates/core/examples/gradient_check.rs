//! Compares backpropagated gradients of a small denoiser (with its skip
//! connections) against central differences in double precision.
//!
//! cargo run --release --example gradient_check

use dsalgan::gradcheck::{numerical_network_gradients, relative_error};
use dsalgan::nets::{backward, build_denoiser_spec, forward_traced, init_params, NetworkParams};
use dsalgan::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// small enough that no perturbation crosses a rectifier kink on this input
const STEP: f64 = 1e-6;

fn main() -> dsalgan::Result<()> {
    let spec = build_denoiser_spec(2, 2)?;
    let mut params: NetworkParams<f64> = init_params(&spec, 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // nonzero biases keep units away from the rectifier kink
    for layer in &mut params.layers {
        layer.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
    }
    let x = Tensor::from_fn(3, 8, 8, |_, _, _| rng.gen_range(0.0..1.0));
    let probe = Tensor::from_fn(3, 8, 8, |_, _, _| rng.gen_range(-1.0..1.0));

    let trace = forward_traced(&spec, &params, &x)?;
    let mut grads = params.zeros_like();
    let dx = backward(&spec, &params, &trace, &probe, &mut grads, true)?.expect("input gradient requested");
    let (numeric, numeric_input) = numerical_network_gradients(&spec, &params, &x, &probe, STEP)?;

    let mut worst = relative_error(dx.data(), &numeric_input);
    println!("{:<10} {:>7} {:>10}", "input", dx.len(), format!("{worst:.2e}"));
    let weighted = spec.layers.iter().filter(|l| l.has_params());
    let pairs = grads.slices().zip(&numeric).collect::<Vec<_>>();
    for (layer, chunk) in weighted.zip(pairs.chunks(2).filter(|c| !c[0].0.is_empty())) {
        for (what, (analytic, num)) in ["weight", "bias"].iter().zip(chunk) {
            let e = relative_error(analytic, num);
            worst = worst.max(e);
            println!("{:<10} {:>7} {:>10}  {what}", layer.name, analytic.len(), format!("{e:.2e}"));
        }
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
