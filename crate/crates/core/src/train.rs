//! Unpaired training loop and windowed inference.
//!
//! One iteration runs a least-squares-GAN discriminator step followed by
//! a generator step. The generator objective stacks adversarial, cycle,
//! and identity terms with two optional extensions: transport-supervised
//! feature alignment (see [`crate::ot`]) and the modulated Laplace-energy
//! regularizer (see [`crate::mle`]). With both extensions switched off
//! the objective is exactly the CycleGAN baseline.
//!
//! Everything is a deterministic function of `(config, data, seed)`:
//! reruns produce bitwise-identical parameters and reports.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Axis, NodeId, Tape, Tensor};
use crate::error::Error;
use crate::mle::{feature_kappas, laplace_energy, mle_loss_prescaled};
use crate::nets::{
    discriminator_forward_graph, generator_forward_graph, init_params, ArchConfig, Domain,
    Generator, ModelParams, NetLeaves,
};
use crate::ot::{
    barycentric_map, cost_matrix, ots_alignment_loss, sinkhorn, MapDirection, OtConfig,
    OtDiagnostics,
};
use crate::rng::SeedRng;
use crate::signal::{hann_window, overlap_add_weighted, Frame, Signal};
use crate::Result;

/// Full training configuration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub arch: ArchConfig,
    /// Windows per domain per step.
    pub batch: usize,
    pub steps: usize,
    pub lr_gen: f64,
    pub lr_disc: f64,
    pub lambda_adv: f64,
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    pub lambda_ots: f64,
    pub lambda_mle: f64,
    /// Enables transport-supervised feature alignment.
    pub ots_on: bool,
    /// Enables the Laplace-energy regularizer.
    pub mle_on: bool,
    /// Replaces transport supervision with a direct elementwise feature
    /// alignment (mutually exclusive with `ots_on`).
    pub l1_substitute_on: bool,
    pub seed: u64,
    pub ot: OtConfig,
    /// Affine pre-scaling of the raw Laplace energy before the sigmoid
    /// (1 = the written formula).
    pub mle_energy_prescale: f64,
    /// Emit a checkpoint every k steps (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchConfig::default(),
            batch: 8,
            steps: 2000,
            lr_gen: 2e-4,
            lr_disc: 2e-4,
            lambda_adv: 1.0,
            lambda_cyc: 10.0,
            lambda_id: 5.0,
            lambda_ots: 1.0,
            lambda_mle: 0.1,
            ots_on: true,
            mle_on: true,
            l1_substitute_on: false,
            seed: 7,
            ot: OtConfig::default(),
            mle_energy_prescale: 1.0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn window(&self) -> usize {
        self.arch.window
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.ot.validate()?;
        if self.batch == 0 {
            return Err(Error::validation("train config", "batch must be >= 1"));
        }
        if !(self.lr_gen > 0.0 && self.lr_disc > 0.0) {
            return Err(Error::validation("train config", "learning rates must be > 0"));
        }
        let weights = [
            self.lambda_adv,
            self.lambda_cyc,
            self.lambda_id,
            self.lambda_ots,
            self.lambda_mle,
        ];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::validation("train config", "loss weights must be >= 0"));
        }
        if !(self.mle_energy_prescale > 0.0 && self.mle_energy_prescale.is_finite()) {
            return Err(Error::validation(
                "train config",
                "mle_energy_prescale must be finite and > 0",
            ));
        }
        if self.ots_on && self.l1_substitute_on {
            return Err(Error::validation(
                "train config",
                "ots_on and l1_substitute_on are mutually exclusive",
            ));
        }
        Ok(())
    }
}

/// Per-step diagnostics; every field is finite on a healthy run. Loss
/// fields carry their lambda weights, so a toggled-off term is exactly 0.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepReport {
    pub step: usize,
    pub loss_total: f64,
    pub loss_adv: f64,
    pub loss_cycle: f64,
    pub loss_identity: f64,
    pub loss_ots: f64,
    pub loss_mle: f64,
    pub loss_disc: f64,
    pub disc_real_low: f64,
    pub disc_fake_low: f64,
    pub disc_real_high: f64,
    pub disc_fake_high: f64,
    pub sinkhorn_residual: f64,
    pub sinkhorn_iterations: usize,
    pub mean_laplace_energy: f64,
}

impl StepReport {
    fn all_finite(&self) -> bool {
        [
            self.loss_total,
            self.loss_adv,
            self.loss_cycle,
            self.loss_identity,
            self.loss_ots,
            self.loss_mle,
            self.loss_disc,
            self.disc_real_low,
            self.disc_fake_low,
            self.disc_real_high,
            self.disc_fake_high,
            self.sinkhorn_residual,
            self.mean_laplace_energy,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Model state emitted during and after training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
    pub step: usize,
    /// Normalization factor: signals are divided by this before windowing
    /// and outputs multiplied back.
    pub scale: f64,
    pub config: TrainConfig,
}

/// Receives step reports and checkpoints as training progresses.
pub trait TrainSink {
    fn on_step(&mut self, _report: &StepReport) {}
    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint) {}
    /// Called with a diagnostic checkpoint when training aborts on a
    /// non-finite loss.
    fn on_abort(&mut self, _checkpoint: &Checkpoint) {}
}

/// Sink that drops everything.
pub struct NullSink;

impl TrainSink for NullSink {}

/// Sink that keeps step reports in memory.
#[derive(Default)]
pub struct RecordingSink {
    pub reports: Vec<StepReport>,
    pub checkpoints: usize,
}

impl TrainSink for RecordingSink {
    fn on_step(&mut self, report: &StepReport) {
        self.reports.push(report.clone());
    }

    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint) {
        self.checkpoints += 1;
    }
}

/// Supervision targets computed from detached feature values; constants
/// within one generator step.
#[derive(Debug, Clone)]
pub struct SupervisionTargets {
    pub ots_target_low: Option<Tensor>,
    pub ots_target_high: Option<Tensor>,
    pub l1_target: Option<Tensor>,
    pub kappas_low: Option<Vec<f64>>,
    pub kappas_high: Option<Vec<f64>>,
    pub ot_diag: Option<OtDiagnostics>,
}

/// Solves the coupling / computes modulation factors for the current
/// batch's detached features.
pub fn compute_supervision(
    cfg: &TrainConfig,
    feat_low: &Tensor,
    feat_high: &Tensor,
) -> Result<SupervisionTargets> {
    let mut targets = SupervisionTargets {
        ots_target_low: None,
        ots_target_high: None,
        l1_target: None,
        kappas_low: None,
        kappas_high: None,
        ot_diag: None,
    };
    if cfg.ots_on {
        let cost = cost_matrix(feat_low, feat_high)?;
        let plan = sinkhorn(&cost, &cfg.ot)?;
        targets.ot_diag = Some(OtDiagnostics {
            iterations: plan.iterations,
            residual: plan.residual,
            converged: plan.converged,
        });
        targets.ots_target_low = Some(barycentric_map(&plan, feat_high, MapDirection::Forward)?);
        targets.ots_target_high = Some(barycentric_map(&plan, feat_low, MapDirection::Inverse)?);
    } else if cfg.l1_substitute_on {
        targets.l1_target = Some(feat_high.clone());
    }
    if cfg.mle_on {
        targets.kappas_low = Some(feature_kappas(feat_low));
        targets.kappas_high = Some(feature_kappas(feat_high));
    }
    Ok(targets)
}

/// Everything the generator step produces besides gradients.
pub struct GenLossParts {
    pub loss: NodeId,
    pub report: GenLossReport,
    /// The supervision targets actually used (reusable for gradient
    /// checking against finite differences).
    pub targets: SupervisionTargets,
}

/// Weighted term values of one generator objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenLossReport {
    pub total: f64,
    pub adv: f64,
    pub cycle: f64,
    pub identity: f64,
    pub ots: f64,
    pub mle: f64,
    pub sinkhorn_residual: f64,
    pub sinkhorn_iterations: usize,
    pub mean_laplace_energy: f64,
}

fn stack_rows(tape: &mut Tape, parts: &[NodeId]) -> Result<NodeId> {
    tape.concat(parts, Axis::Rows)
}

fn mean_abs_diff(tape: &mut Tape, a: NodeId, b: NodeId) -> Result<NodeId> {
    let d = tape.sub(a, b)?;
    let ad = tape.abs(d);
    Ok(tape.mean(ad, Axis::All))
}

fn mean_square_to(tape: &mut Tape, scores: &[NodeId], target: f64) -> Result<NodeId> {
    let shifted: Vec<NodeId> = scores
        .iter()
        .map(|&s| {
            let c = tape.add_const(s, -target);
            tape.mul(c, c)
        })
        .collect::<Result<_>>()?;
    let cat = tape.concat(&shifted, Axis::Cols)?;
    Ok(tape.mean(cat, Axis::All))
}

/// Builds the full generator objective on the tape.
///
/// When `frozen` is `None` the supervision targets are computed from the
/// current batch's detached features (the normal training path); passing
/// `Some` pins them, which is what finite-difference checking needs.
pub fn build_generator_loss(
    tape: &mut Tape,
    leaves: &NetLeaves,
    cfg: &TrainConfig,
    batch_low: &[Vec<f64>],
    batch_high: &[Vec<f64>],
    frozen: Option<&SupervisionTargets>,
) -> Result<GenLossParts> {
    if batch_low.len() != batch_high.len() || batch_low.is_empty() {
        return Err(Error::validation(
            "generator batch",
            "need equal, non-empty window counts per domain",
        ));
    }
    let arch = &cfg.arch;
    let b = batch_low.len();

    let mut fake_high = Vec::with_capacity(b);
    let mut fake_low = Vec::with_capacity(b);
    let mut feat_low_parts = Vec::with_capacity(b);
    let mut feat_high_parts = Vec::with_capacity(b);
    let mut x_low = Vec::with_capacity(b);
    let mut x_high = Vec::with_capacity(b);

    for i in 0..b {
        let xl = tape.leaf(Tensor::row(&batch_low[i])?);
        let xh = tape.leaf(Tensor::row(&batch_high[i])?);
        x_low.push(xl);
        x_high.push(xh);
        let gl = generator_forward_graph(tape, leaves, arch, Generator::LowToHigh, xl)?;
        fake_high.push(gl.output);
        feat_low_parts.push(gl.features);
        let gh = generator_forward_graph(tape, leaves, arch, Generator::HighToLow, xh)?;
        fake_low.push(gh.output);
        feat_high_parts.push(gh.features);
    }

    // adversarial: push fakes toward the discriminators' real target
    let mut adv_scores_h = Vec::with_capacity(b);
    let mut adv_scores_l = Vec::with_capacity(b);
    for i in 0..b {
        adv_scores_h.push(discriminator_forward_graph(
            tape,
            leaves,
            arch,
            Domain::High,
            fake_high[i],
        )?);
        adv_scores_l.push(discriminator_forward_graph(
            tape,
            leaves,
            arch,
            Domain::Low,
            fake_low[i],
        )?);
    }
    let adv_h = mean_square_to(tape, &adv_scores_h, 1.0)?;
    let adv_l = mean_square_to(tape, &adv_scores_l, 1.0)?;
    let adv = tape.add(adv_h, adv_l)?;

    // cycle consistency both ways
    let mut cyc_low_parts = Vec::with_capacity(b);
    let mut cyc_high_parts = Vec::with_capacity(b);
    for i in 0..b {
        let back_l = generator_forward_graph(tape, leaves, arch, Generator::HighToLow, fake_high[i])?;
        cyc_low_parts.push(back_l.output);
        let back_h = generator_forward_graph(tape, leaves, arch, Generator::LowToHigh, fake_low[i])?;
        cyc_high_parts.push(back_h.output);
    }
    let xl_cat = stack_rows(tape, &x_low)?;
    let xh_cat = stack_rows(tape, &x_high)?;
    let cyc_l_cat = stack_rows(tape, &cyc_low_parts)?;
    let cyc_h_cat = stack_rows(tape, &cyc_high_parts)?;
    let cyc_a = mean_abs_diff(tape, cyc_l_cat, xl_cat)?;
    let cyc_b = mean_abs_diff(tape, cyc_h_cat, xh_cat)?;
    let cycle = tape.add(cyc_a, cyc_b)?;

    // identity: feeding a signal already in the target domain changes nothing
    let mut id_high_parts = Vec::with_capacity(b);
    let mut id_low_parts = Vec::with_capacity(b);
    for i in 0..b {
        let idh = generator_forward_graph(tape, leaves, arch, Generator::LowToHigh, x_high[i])?;
        id_high_parts.push(idh.output);
        let idl = generator_forward_graph(tape, leaves, arch, Generator::HighToLow, x_low[i])?;
        id_low_parts.push(idl.output);
    }
    let id_h_cat = stack_rows(tape, &id_high_parts)?;
    let id_l_cat = stack_rows(tape, &id_low_parts)?;
    let id_a = mean_abs_diff(tape, id_h_cat, xh_cat)?;
    let id_b = mean_abs_diff(tape, id_l_cat, xl_cat)?;
    let identity = tape.add(id_a, id_b)?;

    // feature supervision
    let feat_low = stack_rows(tape, &feat_low_parts)?;
    let feat_high = stack_rows(tape, &feat_high_parts)?;
    let feat_low_val = tape.value(feat_low).clone();
    let feat_high_val = tape.value(feat_high).clone();
    let targets = match frozen {
        Some(t) => t.clone(),
        None => compute_supervision(cfg, &feat_low_val, &feat_high_val)?,
    };

    let mut ots_term = None;
    if cfg.ots_on {
        let t_low = targets
            .ots_target_low
            .as_ref()
            .ok_or_else(|| Error::validation("supervision", "missing transport targets"))?;
        let t_high = targets
            .ots_target_high
            .as_ref()
            .ok_or_else(|| Error::validation("supervision", "missing transport targets"))?;
        ots_term = Some(ots_alignment_loss(tape, feat_low, feat_high, t_low, t_high)?);
    } else if cfg.l1_substitute_on {
        // direct elementwise alignment of unpaired features
        let t = targets
            .l1_target
            .as_ref()
            .ok_or_else(|| Error::validation("supervision", "missing alignment target"))?;
        let tl = tape.leaf(t.clone());
        let d = tape.sub(feat_low, tl)?;
        let sq = tape.mul(d, d)?;
        let s = tape.sum(sq, Axis::All);
        ots_term = Some(tape.scale(s, 1.0 / t.rows() as f64));
    }

    let mut mle_term = None;
    let mut mean_energy = 0.0;
    if cfg.mle_on {
        let kl = targets
            .kappas_low
            .as_ref()
            .ok_or_else(|| Error::validation("supervision", "missing modulation factors"))?;
        let kh = targets
            .kappas_high
            .as_ref()
            .ok_or_else(|| Error::validation("supervision", "missing modulation factors"))?;
        let ml = mle_loss_prescaled(tape, feat_low, kl, cfg.mle_energy_prescale)?;
        let mh = mle_loss_prescaled(tape, feat_high, kh, cfg.mle_energy_prescale)?;
        let s = tape.add(ml, mh)?;
        mle_term = Some(tape.scale(s, 0.5));
        for t in [&feat_low_val, &feat_high_val] {
            for r in 0..t.rows() {
                mean_energy += laplace_energy(t.row_slice(r))?.raw;
            }
        }
        mean_energy /= (feat_low_val.rows() + feat_high_val.rows()) as f64;
    }

    let adv_w = tape.scale(adv, cfg.lambda_adv);
    let cyc_w = tape.scale(cycle, cfg.lambda_cyc);
    let id_w = tape.scale(identity, cfg.lambda_id);
    let mut total = tape.add(adv_w, cyc_w)?;
    total = tape.add(total, id_w)?;
    let mut ots_value = 0.0;
    if let Some(t) = ots_term {
        let w = tape.scale(t, cfg.lambda_ots);
        ots_value = tape.value(w).data()[0];
        total = tape.add(total, w)?;
    }
    let mut mle_value = 0.0;
    if let Some(t) = mle_term {
        let w = tape.scale(t, cfg.lambda_mle);
        mle_value = tape.value(w).data()[0];
        total = tape.add(total, w)?;
    }

    let scalar = |tape: &Tape, id: NodeId| tape.value(id).data()[0];
    let (residual, iterations) = targets
        .ot_diag
        .map(|d| (d.residual, d.iterations))
        .unwrap_or((0.0, 0));
    let report = GenLossReport {
        total: scalar(tape, total),
        adv: cfg.lambda_adv * scalar(tape, adv),
        cycle: cfg.lambda_cyc * scalar(tape, cycle),
        identity: cfg.lambda_id * scalar(tape, identity),
        ots: ots_value,
        mle: mle_value,
        sinkhorn_residual: residual,
        sinkhorn_iterations: iterations,
        mean_laplace_energy: mean_energy,
    };
    Ok(GenLossParts {
        loss: total,
        report,
        targets,
    })
}

/// Evaluates the generator objective without touching parameters.
pub fn total_generator_loss(
    params: &ModelParams,
    cfg: &TrainConfig,
    batch_low: &[Vec<f64>],
    batch_high: &[Vec<f64>],
) -> Result<GenLossReport> {
    let mut tape = Tape::new();
    let leaves = params.leaves(&mut tape);
    let parts = build_generator_loss(&mut tape, &leaves, cfg, batch_low, batch_high, None)?;
    Ok(parts.report)
}

/// Least-squares discriminator objective for one domain's score lists.
pub fn lsgan_disc_loss(real_scores: &[f64], fake_scores: &[f64]) -> f64 {
    let mr: f64 =
        real_scores.iter().map(|r| (r - 1.0) * (r - 1.0)).sum::<f64>() / real_scores.len() as f64;
    let mf: f64 = fake_scores.iter().map(|f| f * f).sum::<f64>() / fake_scores.len() as f64;
    0.5 * (mr + mf)
}

/// Discriminator objective values of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscLossReport {
    pub total: f64,
    pub real_low_mean: f64,
    pub fake_low_mean: f64,
    pub real_high_mean: f64,
    pub fake_high_mean: f64,
}

/// Builds the two-domain LSGAN discriminator objective. `fake_low` and
/// `fake_high` are detached generator outputs.
pub fn build_discriminator_loss(
    tape: &mut Tape,
    leaves: &NetLeaves,
    arch: &ArchConfig,
    batch_low: &[Vec<f64>],
    batch_high: &[Vec<f64>],
    fake_low: &[Vec<f64>],
    fake_high: &[Vec<f64>],
) -> Result<(NodeId, DiscLossReport)> {
    let score =
        |tape: &mut Tape, leaves: &NetLeaves, domain: Domain, frame: &[f64]| -> Result<NodeId> {
            let leaf = tape.leaf(Tensor::row(frame)?);
            discriminator_forward_graph(tape, leaves, arch, domain, leaf)
        };
    let mut real_l = Vec::new();
    let mut fake_l = Vec::new();
    let mut real_h = Vec::new();
    let mut fake_h = Vec::new();
    for frame in batch_low {
        real_l.push(score(tape, leaves, Domain::Low, frame)?);
    }
    for frame in fake_low {
        fake_l.push(score(tape, leaves, Domain::Low, frame)?);
    }
    for frame in batch_high {
        real_h.push(score(tape, leaves, Domain::High, frame)?);
    }
    for frame in fake_high {
        fake_h.push(score(tape, leaves, Domain::High, frame)?);
    }

    let real_l_term = mean_square_to(tape, &real_l, 1.0)?;
    let fake_l_term = mean_square_to(tape, &fake_l, 0.0)?;
    let real_h_term = mean_square_to(tape, &real_h, 1.0)?;
    let fake_h_term = mean_square_to(tape, &fake_h, 0.0)?;
    let low = tape.add(real_l_term, fake_l_term)?;
    let high = tape.add(real_h_term, fake_h_term)?;
    let sum = tape.add(low, high)?;
    let total = tape.scale(sum, 0.5);

    let mean_of = |tape: &Tape, ids: &[NodeId]| {
        ids.iter().map(|&id| tape.value(id).data()[0]).sum::<f64>() / ids.len() as f64
    };
    let report = DiscLossReport {
        total: tape.value(total).data()[0],
        real_low_mean: mean_of(tape, &real_l),
        fake_low_mean: mean_of(tape, &fake_l),
        real_high_mean: mean_of(tape, &real_h),
        fake_high_mean: mean_of(tape, &fake_h),
    };
    Ok((total, report))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
    lr: f64,
}

const ADAM_BETA1: f64 = 0.5;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(len: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(ADAM_BETA1, self.t as f64);
        let c2 = 1.0 - libm::pow(ADAM_BETA2, self.t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (libm::sqrt(vhat) + ADAM_EPS);
        }
    }
}

/// Normalized per-axis sample arrays of one domain, ready for window
/// sampling.
struct DomainPool {
    tracks: Vec<Vec<f64>>,
}

impl DomainPool {
    fn build(signals: &[Signal], scale: f64, window: usize, side: &'static str) -> Result<Self> {
        let mut tracks = Vec::new();
        for s in signals {
            if s.len() < window {
                continue;
            }
            for axis in 0..s.axes() {
                tracks.push(s.axis(axis).iter().map(|v| v / scale).collect());
            }
        }
        if tracks.is_empty() {
            return Err(Error::validation(
                "training data",
                format!("no {side} signal is at least one window long"),
            ));
        }
        Ok(DomainPool { tracks })
    }

    fn sample(&self, rng: &mut SeedRng, window: usize) -> Vec<f64> {
        let track = &self.tracks[rng.index(self.tracks.len())];
        let start = rng.index(track.len() - window + 1);
        track[start..start + window].to_vec()
    }
}

fn collect_grads(tape: &Tape, leaves: &NetLeaves, total_len: usize) -> Vec<f64> {
    let mut grads = vec![0.0; total_len];
    for (entry, &id) in leaves.layout().entries().iter().zip(leaves.ids()) {
        grads[entry.offset..entry.offset + entry.len()].copy_from_slice(tape.grad(id));
    }
    grads
}

/// Index where discriminator parameters begin in the flat array.
fn disc_offset(params: &ModelParams) -> usize {
    params
        .layout()
        .entries()
        .iter()
        .find(|e| e.name.starts_with("disc"))
        .map(|e| e.offset)
        .unwrap_or(params.data().len())
}

/// Runs unpaired training over two directories' worth of signals.
///
/// Alternates one discriminator and one generator Adam step per
/// iteration. Emits a [`StepReport`] per step and checkpoints through
/// the sink; returns the final checkpoint.
pub fn train(
    cfg: &TrainConfig,
    low: &[Signal],
    high: &[Signal],
    sink: &mut dyn TrainSink,
) -> Result<Checkpoint> {
    cfg.validate()?;
    if low.is_empty() || high.is_empty() {
        return Err(Error::validation(
            "training data",
            "need at least one signal per domain",
        ));
    }
    let scale = high.iter().map(|s| s.max_abs()).fold(0.0_f64, f64::max);
    if !(scale > 0.0) {
        return Err(Error::validation(
            "training data",
            "high-cost signals are identically zero",
        ));
    }
    let window = cfg.window();
    let low_pool = DomainPool::build(low, scale, window, "low-cost")?;
    let high_pool = DomainPool::build(high, scale, window, "high-cost")?;

    let mut params = init_params(&cfg.arch, cfg.seed)?;
    let split = disc_offset(&params);
    let total_len = params.data().len();
    let mut adam_gen = Adam::new(split, cfg.lr_gen);
    let mut adam_disc = Adam::new(total_len - split, cfg.lr_disc);
    let mut rng = SeedRng::derive(cfg.seed, 1);

    let checkpoint = |params: &ModelParams, step: usize| Checkpoint {
        params: params.clone(),
        seed: cfg.seed,
        step,
        scale,
        config: cfg.clone(),
    };

    for step in 1..=cfg.steps {
        let batch_low: Vec<Vec<f64>> =
            (0..cfg.batch).map(|_| low_pool.sample(&mut rng, window)).collect();
        let batch_high: Vec<Vec<f64>> =
            (0..cfg.batch).map(|_| high_pool.sample(&mut rng, window)).collect();

        // discriminator step on detached fakes
        let (fake_low, fake_high) = {
            let mut tape = Tape::new();
            let leaves = params.leaves(&mut tape);
            let mut fl = Vec::with_capacity(cfg.batch);
            let mut fh = Vec::with_capacity(cfg.batch);
            for frame in &batch_low {
                let x = tape.leaf(Tensor::row(frame)?);
                let g =
                    generator_forward_graph(&mut tape, &leaves, &cfg.arch, Generator::LowToHigh, x)?;
                fh.push(tape.value(g.output).data().to_vec());
            }
            for frame in &batch_high {
                let x = tape.leaf(Tensor::row(frame)?);
                let g =
                    generator_forward_graph(&mut tape, &leaves, &cfg.arch, Generator::HighToLow, x)?;
                fl.push(tape.value(g.output).data().to_vec());
            }
            (fl, fh)
        };

        let disc_report = {
            let mut tape = Tape::new();
            let leaves = params.leaves(&mut tape);
            let (loss, report) = build_discriminator_loss(
                &mut tape,
                &leaves,
                &cfg.arch,
                &batch_low,
                &batch_high,
                &fake_low,
                &fake_high,
            )?;
            tape.backward(loss)?;
            let grads = collect_grads(&tape, &leaves, total_len);
            adam_disc.step(&mut params.data_mut()[split..], &grads[split..]);
            report
        };

        let gen_report = {
            let mut tape = Tape::new();
            let leaves = params.leaves(&mut tape);
            let parts =
                build_generator_loss(&mut tape, &leaves, cfg, &batch_low, &batch_high, None)?;
            tape.backward(parts.loss)?;
            let grads = collect_grads(&tape, &leaves, total_len);
            adam_gen.step(&mut params.data_mut()[..split], &grads[..split]);
            parts.report
        };

        let report = StepReport {
            step,
            loss_total: gen_report.total,
            loss_adv: gen_report.adv,
            loss_cycle: gen_report.cycle,
            loss_identity: gen_report.identity,
            loss_ots: gen_report.ots,
            loss_mle: gen_report.mle,
            loss_disc: disc_report.total,
            disc_real_low: disc_report.real_low_mean,
            disc_fake_low: disc_report.fake_low_mean,
            disc_real_high: disc_report.real_high_mean,
            disc_fake_high: disc_report.fake_high_mean,
            sinkhorn_residual: gen_report.sinkhorn_residual,
            sinkhorn_iterations: gen_report.sinkhorn_iterations,
            mean_laplace_energy: gen_report.mean_laplace_energy,
        };
        let healthy = report.all_finite() && params.data().iter().all(|v| v.is_finite());
        if !healthy {
            sink.on_abort(&checkpoint(&params, step));
            return Err(Error::Numeric(format!(
                "non-finite loss or parameters at step {step}"
            )));
        }
        sink.on_step(&report);
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps {
            sink.on_checkpoint(&checkpoint(&params, step));
        }
    }

    let final_ckpt = checkpoint(&params, cfg.steps);
    sink.on_checkpoint(&final_ckpt);
    Ok(final_ckpt)
}

/// Enhances a signal with a trained checkpoint: 50%-overlapped
/// Hann-weighted windows through the low-to-high generator, per axis.
/// Output length equals input length; an identity-initialized checkpoint
/// reproduces its input to rounding error.
pub fn enhance(ckpt: &Checkpoint, s: &Signal) -> Result<Signal> {
    let window = ckpt.params.arch.window;
    if s.len() < window {
        return Err(Error::validation(
            "enhance input",
            format!(
                "signal of {} samples is shorter than window {window}",
                s.len()
            ),
        ));
    }
    if !(ckpt.scale > 0.0 && ckpt.scale.is_finite()) {
        return Err(Error::validation("checkpoint", "invalid normalization scale"));
    }
    let hop = window / 2;
    let len = s.len();
    let weights = hann_window(window);
    let mut frames = Vec::new();
    // pad half a window on each side so every sample gets positive
    // Hann weight coverage, then crop
    let mut positions = Vec::new();
    let mut p = 0usize;
    while p < hop + len {
        positions.push(p);
        p += hop;
    }
    let padded_len = positions.last().unwrap() + window;
    for axis in 0..s.axes() {
        let mut padded = vec![0.0; padded_len];
        for (i, &v) in s.axis(axis).iter().enumerate() {
            padded[hop + i] = v / ckpt.scale;
        }
        for &start in &positions {
            let frame = &padded[start..start + window];
            let out = crate::nets::generator_forward(&ckpt.params, Generator::LowToHigh, frame)?;
            frames.push(Frame {
                axis,
                start,
                samples: out.output,
            });
        }
    }
    let merged = overlap_add_weighted(&frames, &weights, s.axes(), padded_len)?;
    let samples: Vec<Vec<f64>> = merged
        .into_iter()
        .map(|axis| axis[hop..hop + len].iter().map(|v| v * ckpt.scale).collect())
        .collect();
    Signal::new(samples, s.dt(), format!("{}+enhanced", s.label()))
}
