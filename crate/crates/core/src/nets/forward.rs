//! Single-sample forward and reverse-mode passes over a [`NetworkSpec`].
//!
//! Convolutions run as im2col followed by a GEMM. The traced forward keeps
//! every activation plus the column buffers so the backward pass never
//! recomputes anything.

use super::params::{LayerParams, NetworkParams};
use super::spec::{Activation, LayerKind, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

/// Lower bound and complement upper bound applied to every sigmoid output so
/// probabilities stay strictly inside (0, 1).
pub const PROB_EPS: f64 = 1e-7;

enum Saved<T> {
    Nothing,
    Columns(Vec<T>),
    Argmax(Vec<u32>),
}

/// Activations recorded by [`forward_traced`], consumed by [`backward`].
pub struct Trace<T> {
    acts: Vec<Tensor<T>>,
    saved: Vec<Saved<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.acts.last().expect("trace holds the input at least")
    }

    pub fn input(&self) -> &Tensor<T> {
        &self.acts[0]
    }
}

fn apply_activation<T: Scalar>(act: Activation, data: &mut [T]) {
    match act {
        Activation::None => {}
        Activation::Relu => data.iter_mut().for_each(|v| *v = v.max(T::zero())),
        Activation::Tanh => data.iter_mut().for_each(|v| *v = v.tanh()),
        Activation::Sigmoid => {
            let eps = T::lit(PROB_EPS);
            let hi = T::one() - eps;
            data.iter_mut()
                .for_each(|v| *v = (T::one() / (T::one() + (-*v).exp())).max(eps).min(hi));
        }
    }
}

/// Multiplies `grad` in place by the activation derivative, expressed
/// through the activation output `out`.
fn activation_backward<T: Scalar>(act: Activation, out: &[T], grad: &mut [T]) {
    match act {
        Activation::None => {}
        Activation::Relu => grad.iter_mut().zip(out).for_each(|(g, &y)| {
            if y <= T::zero() {
                *g = T::zero();
            }
        }),
        Activation::Tanh => grad.iter_mut().zip(out).for_each(|(g, &y)| *g *= T::one() - y * y),
        Activation::Sigmoid => {
            grad.iter_mut().zip(out).for_each(|(g, &y)| *g *= y * (T::one() - y))
        }
    }
}

struct ConvGeom {
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new(layer: &LayerSpec, input: (usize, usize, usize)) -> Self {
        let (c_in, h, w) = input;
        let (kh, kw) = layer.kernel;
        let (stride, pad) = (layer.stride, layer.padding);
        Self {
            c_in,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
        }
    }

    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn k(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn n(&self) -> usize {
        self.oh * self.ow
    }

    /// Input column index for output column `o` and kernel offset `kx`, or
    /// `None` when it falls in the zero padding.
    #[inline]
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let i = (o * self.stride + k) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < extent).then_some(i as usize)
    }

    fn im2col<T: Scalar>(&self, input: &[T]) -> Vec<T> {
        let n = self.n();
        let mut cols = vec![T::zero(); self.k() * n];
        let mut row = 0;
        for c in 0..self.c_in {
            let plane = &input[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for oy in 0..self.oh {
                        let Some(iy) = self.src(oy, ky, self.h) else { continue };
                        let src_row = &plane[iy * self.w..(iy + 1) * self.w];
                        let dst_row = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if self.stride == 1 {
                            // contiguous span of valid columns
                            let lo = self.pad.saturating_sub(kx);
                            let hi = (self.w + self.pad).saturating_sub(kx).min(self.ow);
                            if lo < hi {
                                let start = lo + kx - self.pad;
                                dst_row[lo..hi].copy_from_slice(&src_row[start..start + hi - lo]);
                            }
                        } else {
                            for (ox, d) in dst_row.iter_mut().enumerate() {
                                if let Some(ix) = self.src(ox, kx, self.w) {
                                    *d = src_row[ix];
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        cols
    }

    fn col2im<T: Scalar>(&self, cols: &[T]) -> Vec<T> {
        let n = self.n();
        let mut out = vec![T::zero(); self.c_in * self.h * self.w];
        let mut row = 0;
        for c in 0..self.c_in {
            let plane = &mut out[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let src = &cols[row * n..(row + 1) * n];
                    for oy in 0..self.oh {
                        let Some(iy) = self.src(oy, ky, self.h) else { continue };
                        let dst_row = &mut plane[iy * self.w..(iy + 1) * self.w];
                        let src_row = &src[oy * self.ow..(oy + 1) * self.ow];
                        for (ox, &g) in src_row.iter().enumerate() {
                            if let Some(ix) = self.src(ox, kx, self.w) {
                                dst_row[ix] += g;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        out
    }
}

fn conv_forward<T: Scalar>(
    layer: &LayerSpec,
    p: &LayerParams<T>,
    input: &Tensor<T>,
) -> (Tensor<T>, Saved<T>) {
    let g = ConvGeom::new(layer, input.shape());
    let c_out = layer.out_channels;
    let n = g.n();
    let mut out = vec![T::zero(); c_out * n];
    for (row, &b) in out.chunks_mut(n).zip(&p.bias) {
        row.fill(b);
    }
    let saved = if g.pointwise() {
        gemm(c_out, g.k(), n, MatRef::rows(&p.weight, g.k()), MatRef::rows(input.data(), n), T::one(), &mut out);
        Saved::Nothing
    } else {
        let cols = g.im2col(input.data());
        gemm(c_out, g.k(), n, MatRef::rows(&p.weight, g.k()), MatRef::rows(&cols, n), T::one(), &mut out);
        Saved::Columns(cols)
    };
    apply_activation(layer.activation, &mut out);
    (Tensor::from_vec(c_out, g.oh, g.ow, out).expect("conv output size"), saved)
}

fn conv_backward<T: Scalar>(
    layer: &LayerSpec,
    p: &LayerParams<T>,
    grad_p: &mut LayerParams<T>,
    input: &Tensor<T>,
    saved: &Saved<T>,
    grad_out: &[T],
    want_input: bool,
) -> Option<Tensor<T>> {
    let g = ConvGeom::new(layer, input.shape());
    let (c_out, k, n) = (layer.out_channels, g.k(), g.n());
    let cols: &[T] = match saved {
        Saved::Columns(c) => c,
        _ => input.data(),
    };
    // dW += dY * cols^T
    gemm(c_out, n, k, MatRef::rows(grad_out, n), MatRef::transposed(cols, n), T::one(), &mut grad_p.weight);
    for (b, row) in grad_p.bias.iter_mut().zip(grad_out.chunks(n)) {
        *b += row.iter().copied().sum::<T>();
    }
    if !want_input {
        return None;
    }
    let mut dcols = vec![T::zero(); k * n];
    gemm(k, c_out, n, MatRef::transposed(&p.weight, k), MatRef::rows(grad_out, n), T::zero(), &mut dcols);
    let dx = if g.pointwise() { dcols } else { g.col2im(&dcols) };
    Some(Tensor::from_vec(g.c_in, g.h, g.w, dx).expect("conv input size"))
}

fn pool_forward<T: Scalar>(input: &Tensor<T>) -> (Tensor<T>, Saved<T>) {
    let (c, h, w) = input.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    let data = input.data();
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                arg.push(best as u32);
            }
        }
    }
    (Tensor::from_vec(c, oh, ow, out).expect("pool size"), Saved::Argmax(arg))
}

fn upsample_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = input.shape();
    Tensor::from_fn(c, h * 2, w * 2, |ch, y, x| input.get(ch, y / 2, x / 2))
}

fn upsample_backward<T: Scalar>(grad: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = grad.shape();
    let mut out = Tensor::zeros(c, h / 2, w / 2);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = out.get(ch, y / 2, x / 2) + grad.get(ch, y, x);
                out.set(ch, y / 2, x / 2, v);
            }
        }
    }
    out
}

fn fc_forward<T: Scalar>(layer: &LayerSpec, p: &LayerParams<T>, input: &Tensor<T>) -> Tensor<T> {
    let units = layer.out_channels;
    let k = input.len();
    let mut out = p.bias.clone();
    gemm(units, k, 1, MatRef::rows(&p.weight, k), MatRef::rows(input.data(), 1), T::one(), &mut out);
    apply_activation(layer.activation, &mut out);
    Tensor::from_vec(units, 1, 1, out).expect("fc size")
}

fn fc_backward<T: Scalar>(
    layer: &LayerSpec,
    p: &LayerParams<T>,
    grad_p: &mut LayerParams<T>,
    input: &Tensor<T>,
    grad_out: &[T],
    want_input: bool,
) -> Option<Tensor<T>> {
    let units = layer.out_channels;
    let k = input.len();
    gemm(units, 1, k, MatRef::rows(grad_out, 1), MatRef::rows(input.data(), k), T::one(), &mut grad_p.weight);
    for (b, &g) in grad_p.bias.iter_mut().zip(grad_out) {
        *b += g;
    }
    if !want_input {
        return None;
    }
    let mut dx = vec![T::zero(); k];
    gemm(k, units, 1, MatRef::transposed(&p.weight, k), MatRef::rows(grad_out, 1), T::zero(), &mut dx);
    let (c, h, w) = input.shape();
    Some(Tensor::from_vec(c, h, w, dx).expect("fc input size"))
}

fn check_input<T: Scalar>(spec: &NetworkSpec, params: &NetworkParams<T>, input: &Tensor<T>) -> Result<()> {
    if params.layers.len() != spec.layers.len() {
        return Err(Error::Shape(format!(
            "{} has {} layers but parameters for {}",
            spec.name,
            spec.layers.len(),
            params.layers.len()
        )));
    }
    spec.propagate(input.shape())?;
    Ok(())
}

fn run<T: Scalar>(
    spec: &NetworkSpec,
    params: &NetworkParams<T>,
    input: &Tensor<T>,
    keep: bool,
) -> Result<Trace<T>> {
    check_input(spec, params, input)?;
    let mut acts = vec![input.clone()];
    let mut saved = Vec::with_capacity(spec.layers.len());
    for (layer, p) in spec.layers.iter().zip(&params.layers) {
        let x = acts.last().unwrap();
        let (y, s) = match layer.kind {
            LayerKind::Conv => conv_forward(layer, p, x),
            LayerKind::Pool => pool_forward(x),
            LayerKind::Upsample => (upsample_forward(x), Saved::Nothing),
            LayerKind::FullyConnected => (fc_forward(layer, p, x), Saved::Nothing),
            LayerKind::Activation => {
                let mut y = x.clone();
                apply_activation(layer.activation, y.data_mut());
                (y, Saved::Nothing)
            }
            LayerKind::SkipAdd => {
                let tap = layer.tap.expect("validated skip");
                let mut y = x.clone();
                y.add_assign(&acts[tap]);
                (y, Saved::Nothing)
            }
        };
        acts.push(y);
        saved.push(if keep { s } else { Saved::Nothing });
    }
    Ok(Trace { acts, saved })
}

/// Inference-only forward pass.
pub fn forward<T: Scalar>(spec: &NetworkSpec, params: &NetworkParams<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    let mut trace = run(spec, params, input, false)?;
    Ok(trace.acts.pop().unwrap())
}

/// Forward pass that keeps what [`backward`] needs.
pub fn forward_traced<T: Scalar>(
    spec: &NetworkSpec,
    params: &NetworkParams<T>,
    input: &Tensor<T>,
) -> Result<Trace<T>> {
    run(spec, params, input, true)
}

/// Reverse-mode pass: accumulates parameter gradients into `grads` and
/// returns the gradient with respect to the network input when asked.
pub fn backward<T: Scalar>(
    spec: &NetworkSpec,
    params: &NetworkParams<T>,
    trace: &Trace<T>,
    grad_output: &Tensor<T>,
    grads: &mut NetworkParams<T>,
    want_input_grad: bool,
) -> Result<Option<Tensor<T>>> {
    if !grad_output.same_shape(trace.output()) {
        return Err(Error::Shape(format!(
            "{} output gradient {:?} does not match output {:?}",
            spec.name,
            grad_output.shape(),
            trace.output().shape()
        )));
    }
    let n = spec.layers.len();
    let mut act_grads: Vec<Option<Tensor<T>>> = (0..=n).map(|_| None).collect();
    act_grads[n] = Some(grad_output.clone());
    for i in (0..n).rev() {
        let layer = &spec.layers[i];
        let Some(mut g) = act_grads[i + 1].take() else { continue };
        let x = &trace.acts[i];
        let y = &trace.acts[i + 1];
        let want = want_input_grad || i > 0;
        let dx = match layer.kind {
            LayerKind::Conv => {
                activation_backward(layer.activation, y.data(), g.data_mut());
                conv_backward(layer, &params.layers[i], &mut grads.layers[i], x, &trace.saved[i], g.data(), want)
            }
            LayerKind::FullyConnected => {
                activation_backward(layer.activation, y.data(), g.data_mut());
                fc_backward(layer, &params.layers[i], &mut grads.layers[i], x, g.data(), want)
            }
            LayerKind::Pool => {
                let Saved::Argmax(arg) = &trace.saved[i] else { unreachable!("pool saves argmax") };
                let (c, h, w) = x.shape();
                let mut dx = Tensor::zeros(c, h, w);
                let d = dx.data_mut();
                for (&a, &gv) in arg.iter().zip(g.data()) {
                    d[a as usize] += gv;
                }
                Some(dx)
            }
            LayerKind::Upsample => Some(upsample_backward(&g)),
            LayerKind::Activation => {
                activation_backward(layer.activation, y.data(), g.data_mut());
                Some(g)
            }
            LayerKind::SkipAdd => {
                let tap = layer.tap.expect("validated skip");
                accumulate(&mut act_grads[tap], &g);
                Some(g)
            }
        };
        if let Some(dx) = dx {
            if want {
                accumulate(&mut act_grads[i], &dx);
            }
        }
    }
    Ok(if want_input_grad { act_grads[0].take() } else { None })
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: &Tensor<T>) {
    match slot {
        Some(t) => t.add_assign(g),
        None => *slot = Some(g.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::params::init_params;
    use crate::nets::spec::*;

    fn toy(layers: Vec<LayerSpec>, c_in: usize, c_out: usize, size: Option<(usize, usize)>) -> NetworkSpec {
        NetworkSpec {
            name: NetworkRole::G1,
            input_channels: c_in,
            output_channels: c_out,
            width_scale: 1.0,
            input_size: size,
            layers,
        }
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let spec = toy(vec![LayerSpec::conv("c", 3, 2, 1, Activation::None)], 2, 2, None);
        let p: NetworkParams<f64> = init_params(&spec, 4).unwrap();
        let x = Tensor::<f64>::from_fn(2, 5, 4, |c, y, x| ((c * 31 + y * 7 + x * 3) % 11) as f64 / 11.0);
        let out = forward(&spec, &p, &x).unwrap();
        assert_eq!(out.shape(), (2, 5, 4));
        for o in 0..2 {
            for y in 0..5 {
                for xx in 0..4 {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (iy, ix) = (y as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                                if iy < 0 || ix < 0 || iy >= 5 || ix >= 4 {
                                    continue;
                                }
                                acc += p.layers[0].weight[o * 18 + c * 9 + ky * 3 + kx]
                                    * x.get(c, iy as usize, ix as usize);
                            }
                        }
                    }
                    assert!((out.get(o, y, xx) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn strided_conv_shape() {
        let layer = LayerSpec { stride: 2, ..LayerSpec::conv("c", 3, 1, 1, Activation::None) };
        let spec = toy(vec![layer], 1, 1, None);
        let p: NetworkParams<f32> = init_params(&spec, 0).unwrap();
        let out = forward(&spec, &p, &Tensor::filled(1, 8, 8, 1.0)).unwrap();
        assert_eq!(out.shape(), (1, 4, 4));
    }

    #[test]
    fn zero_weight_generator_emits_sigmoid_of_bias() {
        let spec = build_saliency_generator_spec(1.0 / 16.0).unwrap();
        let mut p: NetworkParams<f32> = NetworkParams::zeros(&spec).unwrap();
        p.layers.last_mut().unwrap().bias[0] = 0.7;
        let out = forward(&spec, &p, &Tensor::zeros(3, 32, 32)).unwrap();
        let want = 1.0 / (1.0 + (-0.7f32).exp());
        assert_eq!(out.shape(), (1, 32, 32));
        assert!(out.data().iter().all(|&v| (v - want).abs() < 1e-6));
    }

    #[test]
    fn generators_preserve_spatial_size() {
        let g1 = build_denoiser_spec(5, 8).unwrap();
        let p: NetworkParams<f32> = init_params(&g1, 1).unwrap();
        for s in [64, 96, 37] {
            let out = forward(&g1, &p, &Tensor::filled(3, s, s, 0.3)).unwrap();
            assert_eq!(out.shape(), (3, s, s));
            assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn saliency_generator_on_96_pixels_is_in_open_unit_interval() {
        let g2 = build_saliency_generator_spec(1.0 / 16.0).unwrap();
        let p: NetworkParams<f32> = init_params(&g2, 2).unwrap();
        let x = Tensor::from_fn(3, 96, 96, |c, y, x| ((c + y * x) % 17) as f32 / 17.0);
        let out = forward(&g2, &p, &x).unwrap();
        assert_eq!(out.shape(), (1, 96, 96));
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn discriminator_scores_strictly_inside_unit_interval() {
        let d = build_discriminator_spec(3, (96, 96), 0.125).unwrap();
        let mut p: NetworkParams<f32> = init_params(&d, 9).unwrap();
        let out = forward(&d, &p, &Tensor::filled(3, 96, 96, 0.5)).unwrap();
        assert_eq!(out.shape(), (1, 1, 1));
        assert!(out.data()[0] > 0.0 && out.data()[0] < 1.0);
        // saturate the head: the clamp keeps the score off 1.0
        p.layers.last_mut().unwrap().bias[0] = 80.0;
        let s = forward(&d, &p, &Tensor::filled(3, 96, 96, 0.5)).unwrap().data()[0];
        assert!(s < 1.0);
    }

    #[test]
    fn wrong_input_channels_is_an_error() {
        let d = build_discriminator_spec(3, (16, 16), 0.125).unwrap();
        let p: NetworkParams<f32> = init_params(&d, 9).unwrap();
        assert!(forward(&d, &p, &Tensor::zeros(4, 16, 16)).is_err());
        assert!(forward(&d, &p, &Tensor::zeros(3, 24, 16)).is_err());
    }
}
