//! Acceleration time series: representation, synthetic motion, and the
//! sensor-degradation model (white noise, bias random walk, saturation,
//! quantization).
//!
//! Units are g throughout (1 g = 9.8 m/s²); the sample interval `dt` is
//! seconds. All randomness flows through [`SeedRng`], so every function
//! here is a pure function of its arguments and seed.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::rng::SeedRng;
use crate::Result;

/// Multi-axis, uniformly sampled acceleration series in g.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Signal {
    samples: Vec<Vec<f64>>,
    dt: f64,
    label: String,
}

impl Signal {
    /// Validates and wraps per-axis samples: 1–3 axes of equal length
    /// ≥ 2, finite values, positive `dt`.
    pub fn new(samples: Vec<Vec<f64>>, dt: f64, label: impl Into<String>) -> Result<Self> {
        if samples.is_empty() || samples.len() > 3 {
            return Err(Error::validation(
                "signal axes",
                format!("expected 1-3 axes, got {}", samples.len()),
            ));
        }
        let len = samples[0].len();
        if len < 2 {
            return Err(Error::validation("signal length", "need at least 2 samples"));
        }
        if samples.iter().any(|a| a.len() != len) {
            return Err(Error::validation("signal axes", "axes differ in length"));
        }
        if samples.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
            return Err(Error::validation("signal samples", "non-finite sample"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::validation("signal dt", format!("dt must be > 0, got {dt}")));
        }
        Ok(Signal {
            samples,
            dt,
            label: label.into(),
        })
    }

    pub fn axes(&self) -> usize {
        self.samples.len()
    }

    /// Samples per axis.
    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: len >= 2
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        &self.samples[i]
    }

    pub fn axes_slices(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// Largest |sample| over all axes.
    pub fn max_abs(&self) -> f64 {
        self.samples
            .iter()
            .flatten()
            .fold(0.0_f64, |m, &v| m.max(libm::fabs(v)))
    }

    pub(crate) fn with_samples(&self, samples: Vec<Vec<f64>>, label: String) -> Result<Self> {
        Signal::new(samples, self.dt, label)
    }
}

/// Degradation model applied to a clean signal to emulate a low-cost
/// sensor: additive white noise, a bias random walk, range saturation at
/// `clip_level`, and output quantization.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseModel {
    /// Std-dev of additive white noise, g.
    pub white_sigma: f64,
    /// Per-step std-dev of the bias random walk, g.
    pub bias_rw_sigma: f64,
    /// Quantization step, g (0 disables).
    pub quant_step: f64,
    /// Saturation threshold, g (`f64::INFINITY` disables).
    pub clip_level: f64,
}

impl NoiseModel {
    /// No degradation at all: zero noise, infinite range.
    pub fn ideal() -> Self {
        NoiseModel {
            white_sigma: 0.0,
            bias_rw_sigma: 0.0,
            quant_step: 0.0,
            clip_level: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v >= 0.0 && !v.is_nan();
        if !nonneg(self.white_sigma) || !nonneg(self.bias_rw_sigma) || !nonneg(self.quant_step) {
            return Err(Error::validation("noise model", "negative or NaN field"));
        }
        if !(self.clip_level > 0.0) {
            return Err(Error::validation("noise model", "clip_level must be > 0"));
        }
        Ok(())
    }
}

/// Parameters of a synthetic rest–shake–rest episode.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MotionSpec {
    /// Leading and trailing rest, seconds (≥ 1).
    pub rest_s: f64,
    /// Active shaking duration, seconds.
    pub shake_s: f64,
    /// Target peak magnitude, g.
    pub peak_g: f64,
    /// Number of oscillatory bursts in the shake phase.
    pub n_bursts: usize,
    /// RNG seed.
    pub seed: u64,
}

impl MotionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rest_s >= 1.0) {
            return Err(Error::validation("motion spec", "rest_s must be >= 1.0"));
        }
        if !(self.shake_s > 0.0) {
            return Err(Error::validation("motion spec", "shake_s must be > 0"));
        }
        if !(self.peak_g > 0.0) {
            return Err(Error::validation("motion spec", "peak_g must be > 0"));
        }
        if self.n_bursts == 0 {
            return Err(Error::validation("motion spec", "n_bursts must be >= 1"));
        }
        Ok(())
    }
}

const TWO_PI: f64 = core::f64::consts::TAU;

/// Generates a rest–shake–rest episode.
///
/// Each burst is a periodic-Hann-windowed sinusoid with an integer
/// number of cycles (2 ≤ k ≤ M-2 over the M-sample burst) and random
/// phase, so every burst sums to zero in exact arithmetic and the
/// trapezoid integral of each axis is zero to rounding error. Peak
/// magnitude lands within ±5% of `spec.peak_g` on every axis.
pub fn synth_motion(spec: &MotionSpec, axes: usize, dt: f64) -> Result<Signal> {
    spec.validate()?;
    if axes == 0 || axes > 3 {
        return Err(Error::validation("axes", "expected 1-3 axes"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation("dt", "must be > 0"));
    }
    let n_rest = libm::round(spec.rest_s / dt) as usize;
    let n_shake = libm::round(spec.shake_s / dt) as usize;
    let burst_len = n_shake / spec.n_bursts;
    if burst_len < 8 {
        return Err(Error::validation(
            "motion spec",
            format!(
                "shake phase of {n_shake} samples is too short for {} bursts",
                spec.n_bursts
            ),
        ));
    }
    let total = 2 * n_rest + n_shake;

    let mut samples = Vec::with_capacity(axes);
    for axis in 0..axes {
        let mut rng = SeedRng::derive(spec.seed, axis as u64);
        let mut buf = vec![0.0; total];
        for b in 0..spec.n_bursts {
            let start = n_rest + b * burst_len;
            let m = burst_len as f64;
            // Integer cycle count keeps the discrete burst sum exactly zero.
            let k_hi = core::cmp::min(6, burst_len - 2) as u64;
            let k = rng.int_in(2, k_hi) as f64;
            let phase = rng.uniform_in(0.0, TWO_PI);
            let amp = rng.uniform_in(0.6, 1.0);
            for n in 0..burst_len {
                let t = n as f64 / m;
                let hann = 0.5 * (1.0 - libm::cos(TWO_PI * t));
                buf[start + n] = amp * hann * libm::sin(TWO_PI * k * t + phase);
            }
        }
        let max = buf.iter().fold(0.0_f64, |mx, &v| mx.max(libm::fabs(v)));
        let target = spec.peak_g * (1.0 + rng.uniform_in(-0.05, 0.05));
        let scale = target / max;
        buf.iter_mut().for_each(|v| *v *= scale);
        samples.push(buf);
    }
    Signal::new(samples, dt, format!("synth(seed={})", spec.seed))
}

/// Saturates every sample at ±tau, preserving metadata.
pub fn clip(s: &Signal, tau: f64) -> Result<Signal> {
    if !(tau > 0.0) {
        return Err(Error::validation("clip threshold", "tau must be > 0"));
    }
    let samples = s
        .axes_slices()
        .iter()
        .map(|axis| axis.iter().map(|&v| v.clamp(-tau, tau)).collect())
        .collect();
    s.with_samples(samples, s.label().into())
}

/// Applies the full degradation pipeline:
/// `quantize(clip(x + white + bias_walk))`, deterministic given `seed`.
pub fn degrade(s: &Signal, nm: &NoiseModel, seed: u64) -> Result<Signal> {
    nm.validate()?;
    let mut samples = Vec::with_capacity(s.axes());
    for axis in 0..s.axes() {
        let mut rng = SeedRng::derive(seed, axis as u64);
        let mut bias = 0.0;
        let mut out = Vec::with_capacity(s.len());
        for &x in s.axis(axis) {
            let mut v = x;
            if nm.white_sigma > 0.0 {
                v += nm.white_sigma * rng.normal();
            }
            if nm.bias_rw_sigma > 0.0 {
                bias += nm.bias_rw_sigma * rng.normal();
                v += bias;
            }
            if nm.clip_level.is_finite() {
                v = v.clamp(-nm.clip_level, nm.clip_level);
            }
            if nm.quant_step > 0.0 {
                // round-to-nearest step, ties away from zero
                v = libm::round(v / nm.quant_step) * nm.quant_step;
            }
            out.push(v);
        }
        samples.push(out);
    }
    s.with_samples(samples, format!("{}+degraded", s.label()))
}

/// One windowed slice of a single axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub axis: usize,
    pub start: usize,
    pub samples: Vec<f64>,
}

/// Cuts every axis into frames of `len` samples spaced `stride` apart.
/// Produces `floor((N - len) / stride) + 1` frames per axis.
pub fn window(s: &Signal, len: usize, stride: usize) -> Result<Vec<Frame>> {
    if len == 0 || len > s.len() {
        return Err(Error::validation(
            "window length",
            format!("len {} out of range for signal of {}", len, s.len()),
        ));
    }
    if stride == 0 {
        return Err(Error::validation("window stride", "stride must be >= 1"));
    }
    let per_axis = (s.len() - len) / stride + 1;
    let mut frames = Vec::with_capacity(per_axis * s.axes());
    for axis in 0..s.axes() {
        let data = s.axis(axis);
        for i in 0..per_axis {
            let start = i * stride;
            frames.push(Frame {
                axis,
                start,
                samples: data[start..start + len].to_vec(),
            });
        }
    }
    Ok(frames)
}

/// Periodic Hann window `0.5 * (1 - cos(2*pi*n/len))`.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 * (1.0 - libm::cos(TWO_PI * n as f64 / len as f64)))
        .collect()
}

/// Weighted overlap-add of equal-length frames. Each output sample is
/// the weight-normalized sum of contributions; samples with no positive
/// weight coverage are 0. Uniform weights make this plain averaging, so
/// unmodified frames reconstruct the covered region exactly.
pub fn overlap_add_weighted(
    frames: &[Frame],
    weights: &[f64],
    axes: usize,
    total_len: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut acc = vec![vec![0.0; total_len]; axes];
    let mut wsum = vec![vec![0.0; total_len]; axes];
    for f in frames {
        if f.axis >= axes {
            return Err(Error::validation("overlap_add", "frame axis out of range"));
        }
        if f.samples.len() != weights.len() {
            return Err(Error::validation(
                "overlap_add",
                "frame length does not match weight vector",
            ));
        }
        if f.start + f.samples.len() > total_len {
            return Err(Error::validation("overlap_add", "frame exceeds output length"));
        }
        let a = &mut acc[f.axis][f.start..f.start + f.samples.len()];
        let w = &mut wsum[f.axis][f.start..f.start + f.samples.len()];
        for i in 0..f.samples.len() {
            a[i] += weights[i] * f.samples[i];
            w[i] += weights[i];
        }
    }
    for axis in 0..axes {
        for i in 0..total_len {
            if wsum[axis][i] > 0.0 {
                acc[axis][i] /= wsum[axis][i];
            }
        }
    }
    Ok(acc)
}

/// Overlap-add with plain averaging (the inverse of [`window`] for
/// unmodified frames).
pub fn overlap_add(frames: &[Frame], axes: usize, total_len: usize) -> Result<Vec<Vec<f64>>> {
    let len = frames
        .first()
        .map(|f| f.samples.len())
        .ok_or_else(|| Error::validation("overlap_add", "no frames"))?;
    overlap_add_weighted(frames, &vec![1.0; len], axes, total_len)
}

/// Trapezoid-rule integral of uniformly sampled values.
pub fn trapezoid_integral(samples: &[f64], dt: f64) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let sum: f64 = samples.iter().sum();
    dt * (sum - 0.5 * (samples[0] + samples[samples.len() - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec_example() -> MotionSpec {
        MotionSpec {
            rest_s: 1.0,
            shake_s: 2.0,
            peak_g: 12.0,
            n_bursts: 3,
            seed: 7,
        }
    }

    #[test]
    fn synth_length_and_peak() {
        let s = synth_motion(&spec_example(), 3, 0.005).unwrap();
        assert_eq!(s.len(), 800);
        assert_eq!(s.axes(), 3);
        for axis in 0..3 {
            let max = s.axis(axis).iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
            assert!((10.8..=13.2).contains(&max), "axis {axis} peak {max}");
        }
    }

    #[test]
    fn synth_rejects_zero_shake() {
        let mut spec = spec_example();
        spec.shake_s = 0.0;
        assert!(matches!(
            synth_motion(&spec, 3, 0.005),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn synth_zero_integral() {
        let s = synth_motion(&spec_example(), 3, 0.005).unwrap();
        for axis in 0..3 {
            let integral = trapezoid_integral(s.axis(axis), s.dt());
            assert!(integral.abs() < 1e-9, "axis {axis}: {integral}");
        }
    }

    #[test]
    fn synth_deterministic() {
        let a = synth_motion(&spec_example(), 3, 0.005).unwrap();
        let b = synth_motion(&spec_example(), 3, 0.005).unwrap();
        assert_eq!(a, b);
        let mut other = spec_example();
        other.seed = 8;
        let c = synth_motion(&other, 3, 0.005).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn clip_basic() {
        let s = Signal::new(vec![vec![-10.0, 3.0, 9.0]], 0.01, "t").unwrap();
        let c = clip(&s, 8.0).unwrap();
        assert_eq!(c.axis(0), &[-8.0, 3.0, 8.0]);
        assert_eq!(c.dt(), s.dt());
    }

    #[test]
    fn clip_identity_below_threshold() {
        let s = Signal::new(vec![vec![-1.0, 0.5, 2.0]], 0.01, "t").unwrap();
        let c = clip(&s, 5.0).unwrap();
        assert_eq!(c.axis(0), s.axis(0));
    }

    #[test]
    fn clip_rejects_nonpositive_tau() {
        let s = Signal::new(vec![vec![0.0, 1.0]], 0.01, "t").unwrap();
        assert!(clip(&s, 0.0).is_err());
        assert!(clip(&s, -1.0).is_err());
    }

    #[test]
    fn clip_matches_elementwise_rule_on_synth() {
        let s = synth_motion(&spec_example(), 1, 0.005).unwrap();
        let c = clip(&s, 6.0).unwrap();
        for (orig, clipped) in s.axis(0).iter().zip(c.axis(0)) {
            if orig.abs() > 6.0 {
                assert_eq!(clipped.abs(), 6.0);
                assert_eq!(clipped.signum(), orig.signum());
            } else {
                assert_eq!(clipped, orig);
            }
        }
    }

    #[test]
    fn degrade_identity_with_ideal_model() {
        let s = synth_motion(&spec_example(), 2, 0.005).unwrap();
        let d = degrade(&s, &NoiseModel::ideal(), 99).unwrap();
        for axis in 0..2 {
            for (a, b) in s.axis(axis).iter().zip(d.axis(axis)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn degrade_white_noise_std() {
        let zeros = Signal::new(vec![vec![0.0; 100_000]], 0.005, "z").unwrap();
        let nm = NoiseModel {
            white_sigma: 0.1,
            ..NoiseModel::ideal()
        };
        let d = degrade(&zeros, &nm, 5).unwrap();
        let n = d.len() as f64;
        let mean: f64 = d.axis(0).iter().sum::<f64>() / n;
        let var: f64 = d.axis(0).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((0.097..=0.103).contains(&std), "std {std}");
    }

    #[test]
    fn degrade_quantization() {
        let s = Signal::new(vec![vec![0.3, 0.6]], 0.01, "q").unwrap();
        let nm = NoiseModel {
            quant_step: 0.5,
            ..NoiseModel::ideal()
        };
        let d = degrade(&s, &nm, 0).unwrap();
        assert_eq!(d.axis(0), &[0.5, 0.5]);
    }

    #[test]
    fn degrade_deterministic() {
        let s = synth_motion(&spec_example(), 3, 0.005).unwrap();
        let nm = NoiseModel {
            white_sigma: 0.05,
            bias_rw_sigma: 1e-4,
            quant_step: 0.0,
            clip_level: 6.0,
        };
        let a = degrade(&s, &nm, 3).unwrap();
        let b = degrade(&s, &nm, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_frame_starts() {
        let s = Signal::new(vec![(0..10).map(f64::from).collect()], 0.01, "w").unwrap();
        let frames = window(&s, 4, 2).unwrap();
        assert_eq!(frames.len(), 4);
        let starts: Vec<usize> = frames.iter().map(|f| f.start).collect();
        assert_eq!(starts, vec![0, 2, 4, 6]);
        assert_eq!(frames[1].samples, vec![2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn window_full_length_single_frame() {
        let s = Signal::new(vec![vec![1.0, 2.0, 3.0]], 0.01, "w").unwrap();
        let frames = window(&s, 3, 1).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].samples, s.axis(0));
    }

    #[test]
    fn window_rejects_oversized_len() {
        let s = Signal::new(vec![vec![1.0, 2.0, 3.0]], 0.01, "w").unwrap();
        assert!(window(&s, 4, 1).is_err());
        assert!(window(&s, 2, 0).is_err());
    }

    #[test]
    fn overlap_add_reconstructs() {
        let s = synth_motion(&spec_example(), 2, 0.005).unwrap();
        let frames = window(&s, 64, 16).unwrap();
        let covered = (s.len() - 64) / 16 * 16 + 64;
        let rec = overlap_add(&frames, s.axes(), s.len()).unwrap();
        for axis in 0..s.axes() {
            for i in 0..covered {
                assert!((rec[axis][i] - s.axis(axis)[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn signal_validation() {
        assert!(Signal::new(vec![], 0.01, "x").is_err());
        assert!(Signal::new(vec![vec![1.0]], 0.01, "x").is_err());
        assert!(Signal::new(vec![vec![1.0, 2.0], vec![1.0]], 0.01, "x").is_err());
        assert!(Signal::new(vec![vec![1.0, f64::NAN]], 0.01, "x").is_err());
        assert!(Signal::new(vec![vec![1.0, 2.0]], 0.0, "x").is_err());
        assert!(Signal::new(vec![vec![1.0, 2.0]; 4], 0.01, "x").is_err());
    }

    proptest! {
        #[test]
        fn clip_idempotent_and_contractive(
            values in proptest::collection::vec(-20.0..20.0f64, 2..64),
            tau in 0.1..10.0f64,
        ) {
            let s = Signal::new(vec![values], 0.01, "p").unwrap();
            let once = clip(&s, tau).unwrap();
            let twice = clip(&once, tau).unwrap();
            prop_assert_eq!(&once, &twice);
            for (o, c) in s.axis(0).iter().zip(once.axis(0)) {
                prop_assert!(c.abs() <= o.abs() + 1e-15);
                prop_assert!(c.abs() <= tau);
            }
        }

        #[test]
        fn window_count_formula(n in 2usize..200, len in 1usize..200, stride in 1usize..16) {
            prop_assume!(len <= n);
            let s = Signal::new(vec![vec![0.5; n]], 0.01, "p").unwrap();
            let frames = window(&s, len, stride).unwrap();
            prop_assert_eq!(frames.len(), (n - len) / stride + 1);
        }
    }
}
