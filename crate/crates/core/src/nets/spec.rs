//! Declarative layer lists for the four network families.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NetworkRole {
    /// Denoising generator.
    G1,
    /// Saliency generator.
    G2,
    /// Reverse generator, saliency map back to image.
    G3,
    /// Image discriminator.
    D1,
    /// Saliency discriminator, conditioned on the denoised image.
    D2,
}

impl fmt::Display for NetworkRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Pool,
    Upsample,
    FullyConnected,
    Activation,
    SkipAdd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    None,
}

/// One row of a network table.
///
/// Convolution and fully connected rows carry their activation fused, the
/// way the architecture tables list them (`conv (3,3,64), s=1, p=1; ReLU`).
/// `tap` is only meaningful for `SkipAdd` and indexes the network's
/// activation list: 0 is the network input, `i` the output of layer `i - 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub kernel: (usize, usize),
    pub out_channels: usize,
    pub stride: usize,
    pub padding: usize,
    pub activation: Activation,
    #[serde(default)]
    pub tap: Option<usize>,
}

impl LayerSpec {
    pub fn conv(
        name: impl Into<String>,
        kernel: usize,
        out_channels: usize,
        padding: usize,
        activation: Activation,
    ) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::Conv,
            kernel: (kernel, kernel),
            out_channels,
            stride: 1,
            padding,
            activation,
            tap: None,
        }
    }

    /// 2x2 max pooling, stride 2.
    pub fn pool(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::Pool,
            kernel: (2, 2),
            out_channels: 0,
            stride: 2,
            padding: 0,
            activation: Activation::None,
            tap: None,
        }
    }

    /// 2x nearest-neighbour upsampling.
    pub fn upsample(name: impl Into<String>) -> Self {
        Self { kind: LayerKind::Upsample, ..Self::pool(name) }
    }

    pub fn fully_connected(name: impl Into<String>, units: usize, activation: Activation) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::FullyConnected,
            kernel: (1, 1),
            out_channels: units,
            stride: 1,
            padding: 0,
            activation,
            tap: None,
        }
    }

    pub fn activation(name: impl Into<String>, activation: Activation) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::Activation,
            kernel: (1, 1),
            out_channels: 0,
            stride: 1,
            padding: 0,
            activation,
            tap: None,
        }
    }

    pub fn skip_add(name: impl Into<String>, tap: usize) -> Self {
        Self { kind: LayerKind::SkipAdd, tap: Some(tap), ..Self::activation(name, Activation::None) }
    }

    pub fn has_params(&self) -> bool {
        matches!(self.kind, LayerKind::Conv | LayerKind::FullyConnected)
    }
}

/// `(channels, height, width)` of an activation.
pub type Shape3 = (usize, usize, usize);

/// Shapes of one layer's learnable arrays. Weight layout is
/// `[out][in * kh * kw]` for convolutions and `[out][in_features]` for
/// fully connected layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamShape {
    pub rows: usize,
    pub cols: usize,
}

impl ParamShape {
    pub const EMPTY: ParamShape = ParamShape { rows: 0, cols: 0 };

    pub fn weights(&self) -> usize {
        self.rows * self.cols
    }

    pub fn biases(&self) -> usize {
        self.rows
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: NetworkRole,
    pub input_channels: usize,
    pub output_channels: usize,
    pub width_scale: f64,
    /// Fixed spatial input size, required when the network has fully
    /// connected layers.
    #[serde(default)]
    pub input_size: Option<(usize, usize)>,
    pub layers: Vec<LayerSpec>,
}

/// Channel count under a desk-scale multiplier: rounded up, at least 4.
pub fn scaled_channels(channels: usize, width_scale: f64) -> usize {
    ((channels as f64 * width_scale).ceil() as usize).max(4)
}

fn check_width_scale(width_scale: f64) -> Result<()> {
    if !(width_scale > 0.0 && width_scale <= 1.0) {
        return Err(Error::Validation(format!("width_scale {width_scale} outside (0, 1]")));
    }
    Ok(())
}

/// Residual encoder-decoder: `depth_pairs` stride-1 convolutions mirrored
/// by `depth_pairs` decoder convolutions, with the output of every second
/// encoder layer added onto its mirrored decoder layer before the ReLU.
fn red_net(
    role: NetworkRole,
    input_channels: usize,
    output_channels: usize,
    depth_pairs: usize,
    base_channels: usize,
) -> Result<NetworkSpec> {
    if depth_pairs == 0 {
        return Err(Error::Validation("depth_pairs must be at least 1".into()));
    }
    if base_channels == 0 {
        return Err(Error::Validation("base_channels must be positive".into()));
    }
    let mut layers = Vec::new();
    for i in 1..=depth_pairs {
        layers.push(LayerSpec::conv(format!("conv{i}"), 3, base_channels, 1, Activation::Relu));
    }
    // encoder layer i writes activation index i
    for j in 1..=depth_pairs {
        let mirror = depth_pairs - j;
        if j == depth_pairs {
            layers.push(LayerSpec::conv(
                format!("deconv{j}"),
                3,
                output_channels,
                1,
                Activation::Sigmoid,
            ));
        } else if mirror % 2 == 0 {
            layers.push(LayerSpec::conv(format!("deconv{j}"), 3, base_channels, 1, Activation::None));
            layers.push(LayerSpec::skip_add(format!("skip{j}"), mirror));
            layers.push(LayerSpec::activation(format!("relu{j}"), Activation::Relu));
        } else {
            layers.push(LayerSpec::conv(format!("deconv{j}"), 3, base_channels, 1, Activation::Relu));
        }
    }
    let spec = NetworkSpec {
        name: role,
        input_channels,
        output_channels,
        width_scale: 1.0,
        input_size: None,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

/// Denoising generator: RGB in, RGB out, values in (0, 1).
pub fn build_denoiser_spec(depth_pairs: usize, base_channels: usize) -> Result<NetworkSpec> {
    red_net(NetworkRole::G1, 3, 3, depth_pairs, base_channels)
}

/// Reverse generator: saliency map in, RGB out. Mirrors the denoiser.
pub fn build_reverse_generator_spec(depth_pairs: usize, base_channels: usize) -> Result<NetworkSpec> {
    red_net(NetworkRole::G3, 1, 3, depth_pairs, base_channels)
}

/// Encoder-decoder saliency generator with channel counts scaled by
/// `width_scale`.
///
/// The leading 1x1 convolution is listed with padding 1 in the reference
/// table; padding is 0 here so the map keeps the input resolution.
pub fn build_saliency_generator_spec(width_scale: f64) -> Result<NetworkSpec> {
    check_width_scale(width_scale)?;
    let c = |n: usize| scaled_channels(n, width_scale);
    let relu = Activation::Relu;
    let mut layers = vec![
        LayerSpec::conv("conv1_a", 1, c(64), 0, relu),
        LayerSpec::conv("conv1_b", 3, c(64), 1, relu),
        LayerSpec::pool("pool1"),
        LayerSpec::conv("conv2_a", 3, c(128), 1, relu),
        LayerSpec::conv("conv2_b", 3, c(128), 1, relu),
        LayerSpec::pool("pool2"),
    ];
    let triple = |layers: &mut Vec<LayerSpec>, block: usize, ch: usize| {
        for s in ["a", "b", "c"] {
            layers.push(LayerSpec::conv(format!("conv{block}_{s}"), 3, c(ch), 1, relu));
        }
    };
    triple(&mut layers, 3, 256);
    layers.push(LayerSpec::pool("pool3"));
    triple(&mut layers, 4, 512);
    layers.push(LayerSpec::pool("pool4"));
    triple(&mut layers, 5, 512);
    triple(&mut layers, 6, 512);
    layers.push(LayerSpec::upsample("upsample6"));
    triple(&mut layers, 7, 512);
    layers.push(LayerSpec::upsample("upsample7"));
    triple(&mut layers, 8, 256);
    layers.push(LayerSpec::upsample("upsample8"));
    layers.push(LayerSpec::conv("conv9_a", 3, c(128), 1, relu));
    layers.push(LayerSpec::conv("conv9_b", 3, c(128), 1, relu));
    layers.push(LayerSpec::upsample("upsample9"));
    layers.push(LayerSpec::conv("conv10_a", 3, c(64), 1, relu));
    layers.push(LayerSpec::conv("conv10_b", 3, c(64), 1, relu));
    layers.push(LayerSpec::conv("output", 1, 1, 0, Activation::Sigmoid));
    let spec = NetworkSpec {
        name: NetworkRole::G2,
        input_channels: 3,
        output_channels: 1,
        width_scale,
        input_size: None,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

/// Discriminator shared by D1 (RGB input) and D2 (map + RGB, 4 channels).
///
/// `conv1_a` is a 1x1 colour transform to 3 channels and is never scaled;
/// the convolution widths scale with `width_scale`, the fully connected
/// head (100, 2, 1) does not.
pub fn build_discriminator_spec(
    input_channels: usize,
    input_size: (usize, usize),
    width_scale: f64,
) -> Result<NetworkSpec> {
    if ![1, 3, 4].contains(&input_channels) {
        return Err(Error::Validation(format!(
            "discriminator input must have 1, 3 or 4 channels, got {input_channels}"
        )));
    }
    let (h, w) = input_size;
    if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 {
        return Err(Error::Validation(format!(
            "discriminator input {h}x{w} is not divisible by 8"
        )));
    }
    check_width_scale(width_scale)?;
    let c = |n: usize| scaled_channels(n, width_scale);
    let relu = Activation::Relu;
    let layers = vec![
        LayerSpec::conv("conv1_a", 1, 3, 0, relu),
        LayerSpec::conv("conv1_b", 3, c(32), 1, relu),
        LayerSpec::pool("pool1"),
        LayerSpec::conv("conv2_a", 3, c(64), 1, relu),
        LayerSpec::conv("conv2_b", 3, c(64), 1, relu),
        LayerSpec::pool("pool2"),
        LayerSpec::conv("conv3_a", 3, c(64), 1, relu),
        LayerSpec::conv("conv3_b", 3, c(64), 1, relu),
        LayerSpec::pool("pool3"),
        LayerSpec::fully_connected("fc4", 100, Activation::Tanh),
        LayerSpec::fully_connected("fc5", 2, Activation::Tanh),
        LayerSpec::fully_connected("fc6", 1, Activation::Sigmoid),
    ];
    let spec = NetworkSpec {
        name: if input_channels == 3 { NetworkRole::D1 } else { NetworkRole::D2 },
        input_channels,
        output_channels: 1,
        width_scale,
        input_size: Some(input_size),
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

impl NetworkSpec {
    /// Checks structural rules that do not depend on an input size.
    pub fn validate(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |message: String| Error::Layer { index: i, name: layer.name.clone(), message };
            match layer.kind {
                LayerKind::Conv => {
                    if layer.kernel.0 == 0 || layer.kernel.1 == 0 || layer.stride == 0 {
                        return Err(bad("kernel and stride must be positive".into()));
                    }
                    if layer.out_channels == 0 {
                        return Err(bad("no output channels".into()));
                    }
                }
                LayerKind::Pool | LayerKind::Upsample => {
                    if layer.kernel != (2, 2) || layer.stride != 2 || layer.padding != 0 {
                        return Err(bad("pool/upsample layers are 2x2, stride 2, no padding".into()));
                    }
                }
                LayerKind::FullyConnected => {
                    if layer.out_channels == 0 {
                        return Err(bad("no output units".into()));
                    }
                    if self.input_size.is_none() {
                        return Err(bad("fully connected layer needs a fixed input size".into()));
                    }
                }
                LayerKind::SkipAdd => match layer.tap {
                    Some(t) if t <= i => {}
                    _ => return Err(bad("skip connection must tap an earlier activation".into())),
                },
                LayerKind::Activation => {}
            }
        }
        Ok(())
    }

    /// Output shape after every layer for the given input shape.
    pub fn propagate(&self, input: Shape3) -> Result<Vec<Shape3>> {
        if input.0 != self.input_channels {
            return Err(Error::Shape(format!(
                "{} expects {} input channels, got {}",
                self.name, self.input_channels, input.0
            )));
        }
        if let Some(size) = self.input_size {
            if (input.1, input.2) != size {
                return Err(Error::Shape(format!(
                    "{} expects {}x{} input, got {}x{}",
                    self.name, size.0, size.1, input.1, input.2
                )));
            }
        }
        let mut shapes = vec![input];
        for (i, layer) in self.layers.iter().enumerate() {
            let (c, h, w) = *shapes.last().unwrap();
            let bad = |message: String| Error::Layer { index: i, name: layer.name.clone(), message };
            let next = match layer.kind {
                LayerKind::Conv => {
                    let (kh, kw) = layer.kernel;
                    let p = layer.padding;
                    if h + 2 * p < kh || w + 2 * p < kw {
                        return Err(bad(format!("{h}x{w} input smaller than {kh}x{kw} kernel")));
                    }
                    (
                        layer.out_channels,
                        (h + 2 * p - kh) / layer.stride + 1,
                        (w + 2 * p - kw) / layer.stride + 1,
                    )
                }
                LayerKind::Pool => {
                    if h < 2 || w < 2 {
                        return Err(bad(format!("cannot pool a {h}x{w} map")));
                    }
                    (c, h / 2, w / 2)
                }
                LayerKind::Upsample => (c, h * 2, w * 2),
                LayerKind::FullyConnected => (layer.out_channels, 1, 1),
                LayerKind::Activation => (c, h, w),
                LayerKind::SkipAdd => {
                    let tapped = shapes[layer.tap.unwrap_or(usize::MAX).min(i)];
                    if tapped != (c, h, w) {
                        return Err(bad(format!(
                            "cannot add tapped {tapped:?} onto {:?}",
                            (c, h, w)
                        )));
                    }
                    (c, h, w)
                }
            };
            shapes.push(next);
        }
        let out = *shapes.last().unwrap();
        if out.0 != self.output_channels {
            return Err(Error::Shape(format!(
                "{} produces {} channels, declared {}",
                self.name, out.0, self.output_channels
            )));
        }
        Ok(shapes)
    }

    /// Learnable array shapes, one entry per layer (empty for parameter-free
    /// layers). A pure function of the spec.
    pub fn param_shapes(&self) -> Result<Vec<ParamShape>> {
        // Convolutions only need channel counts; any legal spatial size works
        // for fully convolutional networks.
        let (h, w) = self.input_size.unwrap_or((256, 256));
        let shapes = self.propagate((self.input_channels, h, w))?;
        Ok(self
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let (c, h, w) = shapes[i];
                match layer.kind {
                    LayerKind::Conv => ParamShape {
                        rows: layer.out_channels,
                        cols: c * layer.kernel.0 * layer.kernel.1,
                    },
                    LayerKind::FullyConnected => {
                        ParamShape { rows: layer.out_channels, cols: c * h * w }
                    }
                    _ => ParamShape::EMPTY,
                }
            })
            .collect())
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.param_shapes()?.iter().map(|s| s.weights() + s.biases()).sum())
    }

    /// Number of pooling stages; inputs must be divisible by `2^pools`.
    pub fn downsampling_factor(&self) -> usize {
        1 << self.layers.iter().filter(|l| l.kind == LayerKind::Pool).count()
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Validation(format!("spec serialization: {e}")))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let spec: Self =
            toml::from_str(text).map_err(|e| Error::Validation(format!("spec parse: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// SHA-256 of the canonical text form.
    pub fn hash(&self) -> [u8; 32] {
        let text = serde_json::to_string(self).expect("spec is always serializable");
        Sha256::digest(text.as_bytes()).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn denoiser_maps_rgb_to_rgb_at_depth_one() {
        let spec = build_denoiser_spec(1, 8).unwrap();
        let shapes = spec.propagate((3, 20, 28)).unwrap();
        assert_eq!(*shapes.last().unwrap(), (3, 20, 28));
    }

    #[test]
    fn denoiser_depth_five_has_ten_convs_and_two_skips() {
        let spec = build_denoiser_spec(5, 32).unwrap();
        let convs = spec.layers.iter().filter(|l| l.kind == LayerKind::Conv).count();
        let skips: Vec<_> =
            spec.layers.iter().filter(|l| l.kind == LayerKind::SkipAdd).map(|l| l.tap).collect();
        assert_eq!(convs, 10);
        assert_eq!(skips, vec![Some(4), Some(2)]);
    }

    #[test]
    fn zero_depth_is_rejected() {
        assert!(build_denoiser_spec(0, 8).is_err());
    }

    #[test]
    fn saliency_ladder_scales_with_min_clamp() {
        let spec = build_saliency_generator_spec(1.0 / 16.0).unwrap();
        let convs: Vec<usize> = spec
            .layers
            .iter()
            .filter(|l| l.kind == LayerKind::Conv && l.kernel == (3, 3))
            .map(|l| l.out_channels)
            .collect();
        assert_eq!(&convs[..4], &[4, 8, 8, 16]);
        assert!(convs.contains(&32) && convs.contains(&16));
        assert!(build_saliency_generator_spec(0.0).is_err());
        assert!(build_saliency_generator_spec(1.5).is_err());
    }

    #[test]
    fn discriminator_fc4_fan_in_for_96_pixels() {
        let spec = build_discriminator_spec(3, (96, 96), 1.0).unwrap();
        let shapes = spec.param_shapes().unwrap();
        let fc4 = spec.layers.iter().position(|l| l.name == "fc4").unwrap();
        assert_eq!(shapes[fc4].cols, 12 * 12 * 64);
    }

    #[test]
    fn discriminator_rejects_bad_inputs() {
        assert!(build_discriminator_spec(3, (100, 96), 1.0).is_err());
        assert!(build_discriminator_spec(2, (96, 96), 1.0).is_err());
        assert_eq!(build_discriminator_spec(4, (64, 64), 1.0).unwrap().name, NetworkRole::D2);
    }

    #[test]
    fn reverse_generator_differs_only_at_the_ends() {
        let g1 = build_denoiser_spec(5, 16).unwrap();
        let g3 = build_reverse_generator_spec(5, 16).unwrap();
        let (p1, p3) = (g1.param_shapes().unwrap(), g3.param_shapes().unwrap());
        // only the first conv's fan-in changes: 3 input channels vs 1
        let diff: usize = p1.iter().zip(&p3).map(|(a, b)| a.weights().abs_diff(b.weights())).sum();
        assert_eq!(diff, (3 - 1) * 9 * 16);
        assert_eq!(g3.propagate((1, 32, 32)).unwrap().last(), Some(&(3, 32, 32)));
    }

    #[test]
    fn text_round_trip_preserves_hash() {
        let spec = build_discriminator_spec(4, (64, 64), 0.25).unwrap();
        let back = NetworkSpec::from_text(&spec.to_text().unwrap()).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.hash(), spec.hash());
        assert_ne!(spec.hash(), build_discriminator_spec(3, (64, 64), 0.25).unwrap().hash());
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let mut spec = build_denoiser_spec(3, 8).unwrap();
        spec.layers[3].out_channels = 5; // deconv1 no longer matches its skip
        let err = spec.propagate((3, 16, 16)).unwrap_err().to_string();
        assert!(err.contains("skip"), "{err}");
    }
}
