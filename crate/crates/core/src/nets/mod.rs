//! Network specifications, parameters and the forward/backward engine.

mod forward;
mod params;
mod spec;

pub use forward::{backward, forward, forward_traced, Trace, PROB_EPS};
pub use params::{
    init_params, init_std, load_params, params_from_bytes, params_to_bytes, save_params, LayerParams,
    NetworkParams,
};
pub use spec::{
    build_denoiser_spec, build_discriminator_spec, build_reverse_generator_spec,
    build_saliency_generator_spec, scaled_channels, Activation, LayerKind, LayerSpec, NetworkRole,
    NetworkSpec, ParamShape, Shape3,
};
