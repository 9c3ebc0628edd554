//! Three-phase adversarial training: denoiser pretraining, saliency
//! pretraining with the denoiser frozen, then joint finetuning.

mod checkpoint;
mod log;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{derive_seed, SampleTriplet};
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_gen_loss, cycle_loss, denoise_content_loss, discriminator_loss, saliency_bce_loss,
    total_denoise_loss, total_sod_loss, LossReport, LossWeights,
};
use crate::nets::{
    backward, build_denoiser_spec, build_discriminator_spec, build_reverse_generator_spec,
    build_saliency_generator_spec, forward, forward_traced, init_params, NetworkParams, NetworkSpec, Trace,
};
use crate::optim::{clip_global_norm, AdamConfig, AdamState};
use crate::tensor::Tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use log::{read_loss_log, write_loss_log, LogRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PretrainDenoise,
    PretrainSod,
    Joint,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::PretrainDenoise, Phase::PretrainSod, Phase::Joint];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PretrainDenoise => "pretrain_denoise",
            Phase::PretrainSod => "pretrain_sod",
            Phase::Joint => "joint",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown phase {s:?}")))
    }
}

/// Sizes of the five networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Encoder/decoder pairs of the denoiser and the reverse generator.
    pub depth_pairs: usize,
    pub base_channels: usize,
    pub g3_base_channels: usize,
    pub g2_width_scale: f64,
    pub disc_width_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { depth_pairs: 5, base_channels: 8, g3_base_channels: 8, g2_width_scale: 0.125, disc_width_scale: 0.25 }
    }
}

/// Specs of G1, D1, G2, D2 and G3 for one input size.
#[derive(Clone, Debug, PartialEq)]
pub struct NetSpecs {
    pub g1: NetworkSpec,
    pub d1: NetworkSpec,
    pub g2: NetworkSpec,
    pub d2: NetworkSpec,
    pub g3: NetworkSpec,
}

impl NetSpecs {
    pub fn build(net: &NetConfig, size: usize) -> Result<Self> {
        Ok(Self {
            g1: build_denoiser_spec(net.depth_pairs, net.base_channels)?,
            d1: build_discriminator_spec(3, (size, size), net.disc_width_scale)?,
            g2: build_saliency_generator_spec(net.g2_width_scale)?,
            d2: build_discriminator_spec(4, (size, size), net.disc_width_scale)?,
            g3: build_reverse_generator_spec(net.depth_pairs, net.g3_base_channels)?,
        })
    }

    pub fn iter(&self) -> [&NetworkSpec; 5] {
        [&self.g1, &self.d1, &self.g2, &self.d2, &self.g3]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub phase: Phase,
    pub batch_size: usize,
    pub steps: usize,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub d_steps_per_g: usize,
    pub weights: LossWeights,
    pub seed: u64,
    /// Write a checkpoint every this many steps; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub l2_squared: bool,
    /// Global gradient-norm cap per network update; 0 disables clipping.
    pub clip_norm: f64,
    /// Keep G1 out of the saliency gradient during the joint phase.
    pub freeze_g1: bool,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            phase: Phase::PretrainDenoise,
            batch_size: 8,
            steps: 500,
            gen_lr: 1e-4,
            disc_lr: 1e-4,
            d_steps_per_g: 1,
            weights: LossWeights::default(),
            seed: 0,
            checkpoint_every: 0,
            l2_squared: false,
            clip_norm: 5.0,
            freeze_g1: false,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.gen_lr > 0.0 && self.disc_lr > 0.0 && self.gen_lr.is_finite() && self.disc_lr.is_finite()) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.d_steps_per_g == 0 {
            return Err(Error::Config("d_steps_per_g must be at least 1".into()));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::Config("clip_norm must be >= 0".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of everything that shapes the trajectory; the step
    /// budget and checkpoint cadence are excluded so a run can be extended.
    pub fn hash(&self) -> String {
        let mut key = self.clone();
        key.steps = 0;
        key.checkpoint_every = 0;
        let json = serde_json::to_vec(&key).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parameters and optimizer state of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub spec: NetworkSpec,
    pub params: NetworkParams<f32>,
    pub adam: AdamState,
}

impl Slot {
    fn new(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let params = init_params(spec, seed)?;
        Ok(Self { spec: spec.clone(), adam: AdamState::new(&params), params })
    }

    fn update(&mut self, mut grads: NetworkParams<f32>, lr: f64, cfg: &TrainConfig) {
        if cfg.clip_norm > 0.0 {
            clip_global_norm(&mut grads, cfg.clip_norm);
        }
        self.adam.step(&cfg.adam, lr, &mut self.params, &grads);
    }
}

/// Number of optimizer updates applied to each network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateCounters {
    pub g1: u64,
    pub d1: u64,
    pub g2: u64,
    pub d2: u64,
    pub g3: u64,
}

/// Everything needed to continue training bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub g1: Slot,
    pub d1: Slot,
    pub g2: Slot,
    pub d2: Slot,
    pub g3: Slot,
    pub rng: ChaCha8Rng,
    pub phase: Option<Phase>,
    /// Steps taken in the current phase.
    pub step: u64,
    pub phase_done: bool,
    pub completed: Vec<Phase>,
    pub counters: UpdateCounters,
    pub config_hash: String,
}

impl TrainState {
    pub fn new(specs: &NetSpecs, seed: u64) -> Result<Self> {
        let slot = |spec: &NetworkSpec, tag: u64| Slot::new(spec, derive_seed(seed, &[0x6e65_7473, tag]));
        Ok(Self {
            g1: slot(&specs.g1, 1)?,
            d1: slot(&specs.d1, 2)?,
            g2: slot(&specs.g2, 3)?,
            d2: slot(&specs.d2, 4)?,
            g3: slot(&specs.g3, 5)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
            phase: None,
            step: 0,
            phase_done: false,
            completed: Vec::new(),
            counters: UpdateCounters::default(),
            config_hash: String::new(),
        })
    }

    pub fn slots(&self) -> [&Slot; 5] {
        [&self.g1, &self.d1, &self.g2, &self.d2, &self.g3]
    }

    /// Refuses a state built for different network specs.
    pub fn check_specs(&self, specs: &NetSpecs) -> Result<()> {
        for (slot, spec) in self.slots().into_iter().zip(specs.iter()) {
            if slot.spec.hash() != spec.hash() {
                return Err(Error::Checkpoint(format!(
                    "{} in checkpoint does not match the configured network (hash mismatch)",
                    spec.name
                )));
            }
        }
        Ok(())
    }

    pub fn is_completed(&self, phase: Phase) -> bool {
        self.completed.contains(&phase)
    }

    /// Draws `cfg.batch_size` samples uniformly with replacement.
    fn sample_batch<'a>(&mut self, data: &'a [SampleTriplet], batch_size: usize) -> Vec<&'a SampleTriplet> {
        (0..batch_size).map(|_| &data[self.rng.gen_range(0..data.len())]).collect()
    }
}

fn score(t: &Trace<f32>) -> f32 {
    t.output().data()[0]
}

fn scalar_grad(g: f32) -> Tensor<f32> {
    Tensor::filled(1, 1, 1, g)
}

/// Accumulates `backward` over a batch of traces, returning the input
/// gradients when requested.
fn backward_batch(
    slot: &Slot,
    traces: &[Trace<f32>],
    grad_out: &[Tensor<f32>],
    grads: &mut NetworkParams<f32>,
    want_input: bool,
) -> Result<Vec<Tensor<f32>>> {
    let mut inputs = Vec::new();
    for (t, g) in traces.iter().zip(grad_out) {
        if let Some(dx) = backward(&slot.spec, &slot.params, t, g, grads, want_input)? {
            inputs.push(dx);
        }
    }
    Ok(inputs)
}

fn trace_all(slot: &Slot, inputs: &[Tensor<f32>]) -> Result<Vec<Trace<f32>>> {
    inputs.iter().map(|x| forward_traced(&slot.spec, &slot.params, x)).collect()
}

/// Runs `d_steps_per_g` discriminator updates on fixed real and fake
/// inputs; returns the loss measured before the last update.
fn update_discriminator(
    slot: &mut Slot,
    real: &[Tensor<f32>],
    fake: &[Tensor<f32>],
    cfg: &TrainConfig,
    counter: &mut u64,
) -> Result<f64> {
    let mut last = 0.0;
    for _ in 0..cfg.d_steps_per_g {
        let real_t = trace_all(slot, real)?;
        let fake_t = trace_all(slot, fake)?;
        let rs: Vec<f32> = real_t.iter().map(score).collect();
        let fs: Vec<f32> = fake_t.iter().map(score).collect();
        let (value, gr, gf) = discriminator_loss(&rs, &fs, cfg.weights.eps)?;
        let mut grads = slot.params.zeros_like();
        let gr: Vec<_> = gr.into_iter().map(scalar_grad).collect();
        let gf: Vec<_> = gf.into_iter().map(scalar_grad).collect();
        backward_batch(slot, &real_t, &gr, &mut grads, false)?;
        backward_batch(slot, &fake_t, &gf, &mut grads, false)?;
        slot.update(grads, cfg.disc_lr, cfg);
        *counter += 1;
        last = value as f64;
    }
    Ok(last)
}

fn check_finite(report: &LossReport, outputs: &[&[Tensor<f32>]], step: u64) -> Result<()> {
    if report.is_finite() {
        return Ok(());
    }
    let term = LossReport::TERMS
        .iter()
        .zip(report.values())
        .find(|(_, v)| !v.is_finite())
        .map(|(t, _)| t.to_string())
        .unwrap_or_default();
    let sample = outputs
        .iter()
        .filter_map(|batch| batch.iter().position(|t| !t.is_finite()))
        .next()
        .unwrap_or(0);
    Err(Error::NonFinite { term, step, sample })
}

/// One denoising GAN step: D1 on clean versus denoised images, then G1 on
/// content plus `w1` times adversarial loss.
pub fn train_step_denoise(state: &mut TrainState, batch: &[&SampleTriplet], cfg: &TrainConfig) -> Result<LossReport> {
    match state.phase {
        Some(Phase::PretrainDenoise) | Some(Phase::Joint) => {}
        other => return Err(Error::Config(format!("denoise step not allowed in phase {other:?}"))),
    }
    let w = &cfg.weights;
    let noisy: Vec<_> = batch.iter().map(|s| s.noisy.tensor().clone()).collect();
    let clean: Vec<_> = batch.iter().map(|s| s.clean.tensor().clone()).collect();
    let g1_t = trace_all(&state.g1, &noisy)?;
    let denoised: Vec<_> = g1_t.iter().map(|t| t.output().clone()).collect();

    let d1 = update_discriminator(&mut state.d1, &clean, &denoised, cfg, &mut state.counters.d1)?;

    let content = denoise_content_loss(&denoised, &clean, cfg.l2_squared)?;
    let fake_t = trace_all(&state.d1, &denoised)?;
    let adv = adversarial_gen_loss(&fake_t.iter().map(score).collect::<Vec<_>>(), w.eps)?;
    let mut grad_out = content.grads;
    if w.w1 > 0.0 {
        let g: Vec<_> = adv.grads.iter().map(|&g| scalar_grad(g * w.w1 as f32)).collect();
        let mut scratch = state.d1.params.zeros_like();
        let dx = backward_batch(&state.d1, &fake_t, &g, &mut scratch, true)?;
        for (acc, d) in grad_out.iter_mut().zip(&dx) {
            acc.add_assign(d);
        }
    }
    let mut grads = state.g1.params.zeros_like();
    backward_batch(&state.g1, &g1_t, &grad_out, &mut grads, false)?;
    state.g1.update(grads, cfg.gen_lr, cfg);
    state.counters.g1 += 1;

    let (content, adv) = (content.value as f64, adv.value as f64);
    let report = LossReport {
        content,
        adv_denoise: adv,
        total_denoise: total_denoise_loss(content, adv, w),
        d1,
        batch_size: batch.len(),
        ..LossReport::default()
    };
    check_finite(&report, &[&denoised], state.step)?;
    Ok(report)
}

/// One saliency GAN step: D2 on (mask, denoised) versus (G2 map, denoised),
/// then G2 and G3 on BCE plus `w2` adversarial plus `w3` cyclic loss. G1
/// is updated by the same objective only in the joint phase without
/// `freeze_g1`.
pub fn train_step_sod(state: &mut TrainState, batch: &[&SampleTriplet], cfg: &TrainConfig) -> Result<LossReport> {
    let train_g1 = match state.phase {
        Some(Phase::PretrainSod) => false,
        Some(Phase::Joint) => !cfg.freeze_g1,
        other => return Err(Error::Config(format!("saliency step not allowed in phase {other:?}"))),
    };
    let w = &cfg.weights;
    let noisy: Vec<_> = batch.iter().map(|s| s.noisy.tensor().clone()).collect();
    let masks: Vec<_> = batch.iter().map(|s| s.mask.tensor().clone()).collect();
    let (g1_t, denoised) = if train_g1 {
        let t = trace_all(&state.g1, &noisy)?;
        let d: Vec<_> = t.iter().map(|t| t.output().clone()).collect();
        (t, d)
    } else {
        let d = noisy.iter().map(|x| forward(&state.g1.spec, &state.g1.params, x)).collect::<Result<Vec<_>>>()?;
        (Vec::new(), d)
    };
    let g2_t = trace_all(&state.g2, &denoised)?;
    let maps: Vec<_> = g2_t.iter().map(|t| t.output().clone()).collect();

    let pair = |m: &Tensor<f32>, y: &Tensor<f32>| Tensor::concat_channels(&[m, y]);
    let real: Vec<_> = masks.iter().zip(&denoised).map(|(m, y)| pair(m, y)).collect::<Result<_>>()?;
    let fake: Vec<_> = maps.iter().zip(&denoised).map(|(m, y)| pair(m, y)).collect::<Result<_>>()?;
    let d2 = update_discriminator(&mut state.d2, &real, &fake, cfg, &mut state.counters.d2)?;

    let bce = saliency_bce_loss(&maps, &masks, w.eps)?;
    let mut d_maps = bce.grads;
    let mut d_denoised: Vec<Tensor<f32>> = denoised.iter().map(|y| Tensor::zeros(y.channels(), y.height(), y.width())).collect();

    let fake_t = trace_all(&state.d2, &fake)?;
    let adv = adversarial_gen_loss(&fake_t.iter().map(score).collect::<Vec<_>>(), w.eps)?;
    if w.w2 > 0.0 {
        let g: Vec<_> = adv.grads.iter().map(|&g| scalar_grad(g * w.w2 as f32)).collect();
        let mut scratch = state.d2.params.zeros_like();
        let dx = backward_batch(&state.d2, &fake_t, &g, &mut scratch, true)?;
        for ((dm, dy), d) in d_maps.iter_mut().zip(d_denoised.iter_mut()).zip(&dx) {
            let parts = d.split_channels(&[1, dy.channels()])?;
            dm.add_assign(&parts[0]);
            dy.add_assign(&parts[1]);
        }
    }

    let g3_t = trace_all(&state.g3, &maps)?;
    let recon: Vec<_> = g3_t.iter().map(|t| t.output().clone()).collect();
    let cyc = cycle_loss(&recon, &denoised, cfg.l2_squared)?;
    if w.w3 > 0.0 {
        let g: Vec<_> = cyc
            .grads
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.scale(w.w3 as f32);
                g
            })
            .collect();
        let mut grads = state.g3.params.zeros_like();
        let dx = backward_batch(&state.g3, &g3_t, &g, &mut grads, true)?;
        for ((dm, dy), (d, gc)) in d_maps.iter_mut().zip(d_denoised.iter_mut()).zip(dx.iter().zip(&g)) {
            dm.add_assign(d);
            // the cycle target is G1's output too
            let mut neg = gc.clone();
            neg.scale(-1.0);
            dy.add_assign(&neg);
        }
        state.g3.update(grads, cfg.gen_lr, cfg);
        state.counters.g3 += 1;
    }

    let mut grads = state.g2.params.zeros_like();
    let dx = backward_batch(&state.g2, &g2_t, &d_maps, &mut grads, train_g1)?;
    state.g2.update(grads, cfg.gen_lr, cfg);
    state.counters.g2 += 1;

    if train_g1 {
        for (dy, d) in d_denoised.iter_mut().zip(&dx) {
            dy.add_assign(d);
        }
        let mut grads = state.g1.params.zeros_like();
        backward_batch(&state.g1, &g1_t, &d_denoised, &mut grads, false)?;
        state.g1.update(grads, cfg.gen_lr, cfg);
        state.counters.g1 += 1;
    }

    let (bce, adv, cyc) = (bce.value as f64, adv.value as f64, cyc.value as f64);
    let report = LossReport {
        bce,
        adv_sod: adv,
        cyclic: cyc,
        total_sod: total_sod_loss(bce, adv, cyc, w),
        d2,
        batch_size: batch.len(),
        ..LossReport::default()
    };
    check_finite(&report, &[&denoised, &maps, &recon], state.step)?;
    Ok(report)
}

/// One step of the state's current phase on a freshly sampled batch.
pub fn train_step(state: &mut TrainState, data: &[SampleTriplet], cfg: &TrainConfig) -> Result<LossReport> {
    if data.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    let batch = state.sample_batch(data, cfg.batch_size);
    let report = match cfg.phase {
        Phase::PretrainDenoise => train_step_denoise(state, &batch, cfg)?,
        Phase::PretrainSod => train_step_sod(state, &batch, cfg)?,
        Phase::Joint => {
            let den = train_step_denoise(state, &batch, cfg)?;
            let sod = train_step_sod(state, &batch, cfg)?;
            LossReport {
                content: den.content,
                adv_denoise: den.adv_denoise,
                total_denoise: den.total_denoise,
                d1: den.d1,
                ..sod
            }
        }
    };
    if !report.totals_consistent(&cfg.weights) {
        return Err(Error::Validation(format!("step {}: totals disagree with their components", state.step)));
    }
    state.step += 1;
    Ok(report)
}

/// Switches `state` into `cfg.phase`, or checks that it can resume there.
pub fn enter_phase(state: &mut TrainState, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    let resuming = state.phase == Some(cfg.phase) && !state.phase_done;
    if resuming {
        if state.config_hash != cfg.hash() {
            return Err(Error::Checkpoint(format!(
                "checkpoint was written by a different {} configuration",
                cfg.phase
            )));
        }
        return Ok(());
    }
    if cfg.phase == Phase::Joint {
        let missing: Vec<_> =
            [Phase::PretrainDenoise, Phase::PretrainSod].into_iter().filter(|p| !state.is_completed(*p)).collect();
        if !missing.is_empty() {
            let names: Vec<_> = missing.iter().map(|p| p.as_str()).collect();
            return Err(Error::Config(format!("joint phase needs completed {} checkpoints", names.join(" and "))));
        }
    }
    state.phase = Some(cfg.phase);
    state.step = 0;
    state.phase_done = false;
    state.config_hash = cfg.hash();
    state.rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0x7068_6173, cfg.phase as u64]));
    Ok(())
}

/// Where and how often [`run_phase`] writes checkpoints.
#[derive(Clone, Copy, Debug, Default)]
pub struct CheckpointSink<'a> {
    pub dir: Option<&'a Path>,
}

impl CheckpointSink<'_> {
    pub fn path_for(dir: &Path, phase: Phase, step: Option<u64>) -> std::path::PathBuf {
        match step {
            Some(s) => dir.join(format!("{phase}_step{s:06}.ckpt")),
            None => dir.join(format!("{phase}.ckpt")),
        }
    }
}

/// Trains the configured phase to `cfg.steps`, appending to `log`.
pub fn run_phase(
    state: &mut TrainState,
    data: &[SampleTriplet],
    cfg: &TrainConfig,
    sink: CheckpointSink<'_>,
    log: &mut Vec<LogRow>,
) -> Result<()> {
    enter_phase(state, cfg)?;
    while (state.step as usize) < cfg.steps {
        let report = train_step(state, data, cfg)?;
        log.push(LogRow::new(state.step, cfg.phase, &report, &cfg.weights));
        if let Some(dir) = sink.dir {
            if cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every as u64 == 0 {
                save_checkpoint(&CheckpointSink::path_for(dir, cfg.phase, Some(state.step)), state)?;
            }
        }
    }
    state.phase_done = true;
    if !state.is_completed(cfg.phase) {
        state.completed.push(cfg.phase);
    }
    if let Some(dir) = sink.dir {
        save_checkpoint(&CheckpointSink::path_for(dir, cfg.phase, None), state)?;
    }
    Ok(())
}

/// Runs each phase config in order from `state`.
pub fn run_schedule(
    mut state: TrainState,
    data: &[SampleTriplet],
    configs: &[TrainConfig],
    sink: CheckpointSink<'_>,
) -> Result<(TrainState, Vec<LogRow>)> {
    let mut log = Vec::new();
    for cfg in configs {
        ::log::info!("phase {} for {} steps", cfg.phase, cfg.steps);
        run_phase(&mut state, data, cfg, sink, &mut log)?;
    }
    Ok((state, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_shapes_corpus;

    fn tiny() -> (NetSpecs, Vec<SampleTriplet>) {
        let net = NetConfig { depth_pairs: 1, base_channels: 4, g3_base_channels: 4, g2_width_scale: 0.0625, disc_width_scale: 0.125 };
        (NetSpecs::build(&net, 16).unwrap(), make_shapes_corpus(6, 16, &[30.0], 1).unwrap())
    }

    fn cfg(phase: Phase, steps: usize) -> TrainConfig {
        TrainConfig { phase, steps, batch_size: 2, ..TrainConfig::default() }
    }

    #[test]
    fn phase_names_round_trip() {
        for p in Phase::ALL {
            assert_eq!(p.as_str().parse::<Phase>().unwrap(), p);
        }
        assert!("warmup".parse::<Phase>().is_err());
    }

    #[test]
    fn joint_requires_pretraining() {
        let (specs, data) = tiny();
        let state = TrainState::new(&specs, 0).unwrap();
        let err = run_schedule(state, &data, &[cfg(Phase::Joint, 1)], CheckpointSink::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn zero_steps_keep_initialisation() {
        let (specs, data) = tiny();
        let state = TrainState::new(&specs, 3).unwrap();
        let (after, log) =
            run_schedule(state.clone(), &data, &[cfg(Phase::PretrainDenoise, 0)], CheckpointSink::default()).unwrap();
        assert!(log.is_empty());
        assert_eq!(after.g1.params, state.g1.params);
        assert!(after.is_completed(Phase::PretrainDenoise));
    }

    #[test]
    fn d_steps_counted() {
        let (specs, data) = tiny();
        let mut state = TrainState::new(&specs, 0).unwrap();
        let c = TrainConfig { d_steps_per_g: 2, ..cfg(Phase::PretrainDenoise, 3) };
        run_phase(&mut state, &data, &c, CheckpointSink::default(), &mut Vec::new()).unwrap();
        assert_eq!((state.counters.d1, state.counters.g1), (6, 3));
    }

    #[test]
    fn pretrain_sod_freezes_g1() {
        let (specs, data) = tiny();
        let mut state = TrainState::new(&specs, 0).unwrap();
        let before = state.g1.params.clone();
        run_phase(&mut state, &data, &cfg(Phase::PretrainSod, 3), CheckpointSink::default(), &mut Vec::new())
            .unwrap();
        assert_eq!(state.g1.params, before);
        assert_ne!(state.g2.params, init_params::<f32>(&specs.g2, 0).unwrap());
        assert_eq!(state.counters.g2, 3);
    }

    #[test]
    fn joint_updates_every_network() {
        let (specs, data) = tiny();
        let mut state = TrainState::new(&specs, 0).unwrap();
        let mut log = Vec::new();
        for phase in Phase::ALL {
            run_phase(&mut state, &data, &cfg(phase, 2), CheckpointSink::default(), &mut log).unwrap();
        }
        assert_eq!(log.len(), 6);
        let c = state.counters;
        assert_eq!((c.g1, c.d1, c.g2, c.d2, c.g3), (6, 4, 4, 4, 4));
        let last = log.last().unwrap();
        assert!(last.report.content > 0.0 && last.report.bce > 0.0 && last.report.cyclic > 0.0);
    }

    #[test]
    fn resume_with_other_config_is_refused() {
        let (specs, data) = tiny();
        let mut state = TrainState::new(&specs, 0).unwrap();
        let c = cfg(Phase::PretrainDenoise, 2);
        enter_phase(&mut state, &c).unwrap();
        train_step(&mut state, &data, &c).unwrap();
        let other = TrainConfig { gen_lr: 1e-3, ..c.clone() };
        assert!(matches!(enter_phase(&mut state, &other), Err(Error::Checkpoint(_))));
        let longer = TrainConfig { steps: 10, ..c };
        enter_phase(&mut state, &longer).unwrap();
        assert_eq!(state.step, 1);
    }
}
