//! Evaluation metrics: clipped-signal reconstruction error, zero-velocity
//! residual error, and overlapping Allan deviation with noise-coefficient
//! extraction.

use alloc::vec::Vec;

use crate::error::Error;
use crate::signal::{trapezoid_integral, Signal};
use crate::{Result, G_TO_MS2};

/// Root-mean-square difference over all axes and samples, in g.
pub fn csre(reference: &Signal, recon: &Signal) -> Result<f64> {
    if reference.axes() != recon.axes() || reference.len() != recon.len() {
        return Err(Error::ShapeMismatch {
            op: "csre",
            lhs_rows: reference.axes(),
            lhs_cols: reference.len(),
            rhs_rows: recon.axes(),
            rhs_cols: recon.len(),
        });
    }
    if reference.dt() != recon.dt() {
        return Err(Error::validation("csre", "sample intervals differ"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for axis in 0..reference.axes() {
        for (a, b) in reference.axis(axis).iter().zip(recon.axis(axis)) {
            let d = a - b;
            sum += d * d;
            count += 1;
        }
    }
    Ok(libm::sqrt(sum / count as f64))
}

/// Absolute trapezoid integral of each axis in m/s. Zero for physically
/// consistent rest–motion–rest episodes.
pub fn zvre(s: &Signal) -> Vec<f64> {
    (0..s.axes())
        .map(|axis| libm::fabs(trapezoid_integral(s.axis(axis), s.dt()) * G_TO_MS2))
        .collect()
}

/// Allan deviation curve over log-spaced averaging times.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AllanCurve {
    /// Averaging times, seconds, strictly increasing.
    pub taus: Vec<f64>,
    /// Allan deviation at each tau, g.
    pub adev: Vec<f64>,
}

/// One log-log line fit over a contiguous index range of the curve.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SegmentFit {
    /// First point index of the segment.
    pub lo: usize,
    /// One past the last point index.
    pub hi: usize,
    pub slope: f64,
    /// Intercept of the fit in log10 space.
    pub log_intercept: f64,
    pub rms_residual: f64,
}

/// Extracted noise coefficients. A `None` fit means no segment matched
/// the nominal slope and the coefficient defaults to 0.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseCoefficients {
    /// Quantization noise: slope −1 fit read at τ = √3 s.
    pub qn: f64,
    /// Velocity random walk: slope −1/2 fit read at τ = 1 s.
    pub vrw: f64,
    /// Bias instability: curve minimum divided by 0.664.
    pub bi: f64,
    pub qn_fit: Option<SegmentFit>,
    pub vrw_fit: Option<SegmentFit>,
}

/// Curve plus extracted coefficients.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AllanReport {
    pub curve: AllanCurve,
    pub coefficients: NoiseCoefficients,
}

/// Overlapping Allan deviation of one axis of a static recording.
///
/// For cluster size `m`, `σ²(τ=m·dt) = Σ_k (ȳ_{k+m} - ȳ_k)² / (2(N-2m))`
/// over all `N - 2m` overlapping cluster means ȳ. About 30 log-spaced
/// cluster sizes in `[1, N/5]` are evaluated.
pub fn allan_deviation(s: &Signal, axis: usize) -> Result<AllanCurve> {
    if axis >= s.axes() {
        return Err(Error::validation("allan axis", "axis out of range"));
    }
    let data = s.axis(axis);
    let n = data.len();
    if n < 2000 {
        return Err(Error::validation(
            "allan input",
            "need at least 2000 samples of static signal",
        ));
    }
    let m_max = n / 5;
    let cluster_sizes = log_spaced_sizes(m_max, 30);

    // prefix sums make every cluster mean O(1)
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &x in data {
        acc += x;
        prefix.push(acc);
    }

    let mut taus = Vec::with_capacity(cluster_sizes.len());
    let mut adev = Vec::with_capacity(cluster_sizes.len());
    for &m in &cluster_sizes {
        let terms = n - 2 * m;
        if terms == 0 {
            continue;
        }
        let mf = m as f64;
        let mut sum = 0.0;
        for k in 0..terms {
            let y0 = (prefix[k + m] - prefix[k]) / mf;
            let y1 = (prefix[k + 2 * m] - prefix[k + m]) / mf;
            let d = y1 - y0;
            sum += d * d;
        }
        let avar = sum / (2.0 * terms as f64);
        taus.push(mf * s.dt());
        adev.push(libm::sqrt(avar));
    }
    Ok(AllanCurve { taus, adev })
}

fn log_spaced_sizes(max: usize, count: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(count);
    let lmax = libm::log(max as f64);
    for i in 0..count {
        let t = i as f64 / (count - 1) as f64;
        let m = libm::round(libm::exp(t * lmax)) as usize;
        let m = m.clamp(1, max);
        if sizes.last() != Some(&m) {
            sizes.push(m);
        }
    }
    sizes
}

fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut rss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let e = y - (intercept + slope * x);
        rss += e * e;
    }
    (slope, intercept, libm::sqrt(rss / n))
}

/// Least-squares slope of the log-log curve over `tau ∈ [lo, hi]`.
/// `None` when fewer than 3 usable points fall in the range.
pub fn loglog_slope(curve: &AllanCurve, tau_lo: f64, tau_hi: f64) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, a) in curve.taus.iter().zip(&curve.adev) {
        if *t >= tau_lo && *t <= tau_hi && *a > 0.0 {
            xs.push(libm::log10(*t));
            ys.push(libm::log10(*a));
        }
    }
    if xs.len() < 3 {
        return None;
    }
    Some(line_fit(&xs, &ys).0)
}

const SLOPE_TOLERANCE: f64 = 0.15;
/// Standard scaling between the Allan-deviation minimum and the bias
/// instability coefficient.
const BI_FACTOR: f64 = 0.664;

fn best_segment(xs: &[f64], ys: &[f64], nominal: f64) -> Option<SegmentFit> {
    let n = xs.len();
    let win = core::cmp::max(5, n / 4);
    if n < win {
        return None;
    }
    let mut best: Option<SegmentFit> = None;
    for lo in 0..=(n - win) {
        let hi = lo + win;
        let (slope, intercept, resid) = line_fit(&xs[lo..hi], &ys[lo..hi]);
        if libm::fabs(slope - nominal) > SLOPE_TOLERANCE {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => libm::fabs(slope - nominal) < libm::fabs(b.slope - nominal),
        };
        if better {
            best = Some(SegmentFit {
                lo,
                hi,
                slope,
                log_intercept: intercept,
                rms_residual: resid,
            });
        }
    }
    best
}

/// Reads QN, VRW, and BI off an Allan deviation curve.
///
/// QN and VRW come from log-log line fits over sliding windows whose
/// slope lands within ±0.15 of the nominal −1 and −1/2; a missing
/// segment yields a 0 coefficient with the fit left `None`. BI is the
/// curve minimum scaled by 1/0.664.
pub fn fit_noise_params(curve: &AllanCurve) -> Result<NoiseCoefficients> {
    if curve.taus.len() < 10 {
        return Err(Error::validation(
            "allan curve",
            "need at least 10 points to fit noise parameters",
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, a) in curve.taus.iter().zip(&curve.adev) {
        if *a > 0.0 {
            xs.push(libm::log10(*t));
            ys.push(libm::log10(*a));
        }
    }
    let min_adev = curve.adev.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let bi = if min_adev.is_finite() && min_adev > 0.0 {
        min_adev / BI_FACTOR
    } else {
        0.0
    };
    if xs.len() < 5 {
        // flat-zero or nearly-zero curve: nothing to fit
        return Ok(NoiseCoefficients {
            qn: 0.0,
            vrw: 0.0,
            bi,
            qn_fit: None,
            vrw_fit: None,
        });
    }

    let qn_fit = best_segment(&xs, &ys, -1.0);
    let vrw_fit = best_segment(&xs, &ys, -0.5);
    // read-off conventions: QN at tau = sqrt(3) s, VRW at tau = 1 s
    let qn = qn_fit
        .map(|f| libm::exp10(f.log_intercept + f.slope * libm::log10(libm::sqrt(3.0))))
        .unwrap_or(0.0);
    let vrw = vrw_fit
        .map(|f| libm::exp10(f.log_intercept))
        .unwrap_or(0.0);
    Ok(NoiseCoefficients {
        qn,
        vrw,
        bi,
        qn_fit,
        vrw_fit,
    })
}

/// Convenience wrapper: curve plus coefficients for one axis.
pub fn allan_report(s: &Signal, axis: usize) -> Result<AllanReport> {
    let curve = allan_deviation(s, axis)?;
    let coefficients = fit_noise_params(&curve)?;
    Ok(AllanReport {
        curve,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{clip, degrade, synth_motion, MotionSpec, NoiseModel};
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

    fn white_noise_signal(sigma: f64, n: usize, dt: f64, seed: u64) -> Signal {
        let zeros = Signal::new(vec![vec![0.0; n]], dt, "static").unwrap();
        let nm = NoiseModel {
            white_sigma: sigma,
            ..NoiseModel::ideal()
        };
        degrade(&zeros, &nm, seed).unwrap()
    }

    #[test]
    fn csre_identity_is_zero() {
        let s = synth_motion(&spec_example(), 2, 0.005).unwrap();
        assert_eq!(csre(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn csre_constant_offset() {
        let s = synth_motion(&spec_example(), 2, 0.005).unwrap();
        let shifted: Vec<Vec<f64>> = s
            .axes_slices()
            .iter()
            .map(|a| a.iter().map(|v| v + 0.1).collect())
            .collect();
        let t = Signal::new(shifted, s.dt(), "shifted").unwrap();
        assert!((csre(&s, &t).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn csre_matches_clipped_excess_oracle() {
        let s = synth_motion(&spec_example(), 3, 0.005).unwrap();
        let c = clip(&s, 6.0).unwrap();
        let got = csre(&s, &c).unwrap();
        // independent oracle: direct sum of squared clipped-away excess
        let mut sum = 0.0;
        let mut count = 0usize;
        for axis in 0..s.axes() {
            for &x in s.axis(axis) {
                let excess = (x.abs() - 6.0).max(0.0);
                sum += excess * excess;
                count += 1;
            }
        }
        let expected = (sum / count as f64).sqrt();
        assert!((got - expected).abs() < 1e-12);
        assert!(got > 0.0);
    }

    #[test]
    fn csre_rejects_shape_mismatch() {
        let a = Signal::new(vec![vec![0.0, 1.0]], 0.01, "a").unwrap();
        let b = Signal::new(vec![vec![0.0, 1.0, 2.0]], 0.01, "b").unwrap();
        assert!(matches!(csre(&a, &b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn zvre_of_synth_is_tiny() {
        let s = synth_motion(&spec_example(), 3, 0.005).unwrap();
        for v in zvre(&s) {
            assert!(v < 1e-8, "zvre {v}");
        }
    }

    #[test]
    fn zvre_of_constant_acceleration() {
        // 1 g held for 2 s: (N-1)*dt = 2
        let s = Signal::new(vec![vec![1.0; 401]], 0.005, "c").unwrap();
        let v = zvre(&s)[0];
        assert!((v - 19.6).abs() < 1e-9, "zvre {v}");
    }

    #[test]
    fn zvre_time_reversal_invariant() {
        let s = synth_motion(&spec_example(), 2, 0.005).unwrap();
        let reversed: Vec<Vec<f64>> = s
            .axes_slices()
            .iter()
            .map(|a| a.iter().rev().copied().collect())
            .collect();
        let r = Signal::new(reversed, s.dt(), "rev").unwrap();
        let a = zvre(&s);
        let b = zvre(&r);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn clipping_increases_zvre() {
        let s = synth_motion(&spec_example(), 3, 0.005).unwrap();
        let c = clip(&s, 6.0).unwrap();
        let before = zvre(&s);
        let after = zvre(&c);
        for axis in 0..3 {
            assert!(
                after[axis] > before[axis],
                "axis {axis}: {} !> {}",
                after[axis],
                before[axis]
            );
        }
    }

    #[test]
    fn allan_white_noise_follows_root_tau_law() {
        let sigma = 0.05;
        let dt = 0.005;
        let s = white_noise_signal(sigma, 200_000, dt, 42);
        let curve = allan_deviation(&s, 0).unwrap();
        // expected adev(tau) = sigma * sqrt(dt / tau); check at tau = 100 dt
        let target_tau = 100.0 * dt;
        let (idx, _) = curve
            .taus
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - target_tau)
                    .abs()
                    .partial_cmp(&(b.1 - target_tau).abs())
                    .unwrap()
            })
            .unwrap();
        let expected = sigma * (dt / curve.taus[idx]).sqrt();
        let got = curve.adev[idx];
        assert!(
            (got - expected).abs() / expected < 0.15,
            "adev {got} vs {expected}"
        );
    }

    #[test]
    fn allan_constant_signal_is_zero() {
        let s = Signal::new(vec![vec![0.0; 2000]], 0.01, "const").unwrap();
        let curve = allan_deviation(&s, 0).unwrap();
        assert!(curve.adev.iter().all(|&v| v == 0.0));
        let fit = fit_noise_params(&curve).unwrap();
        assert_eq!(fit.qn, 0.0);
        assert_eq!(fit.vrw, 0.0);
        assert_eq!(fit.bi, 0.0);
        // non-zero constants pick up only prefix-sum rounding noise
        let s = Signal::new(vec![vec![0.37; 2000]], 0.01, "const").unwrap();
        let fit = fit_noise_params(&allan_deviation(&s, 0).unwrap()).unwrap();
        assert!(fit.qn < 1e-12 && fit.vrw < 1e-12 && fit.bi < 1e-12);
    }

    #[test]
    fn allan_shift_invariant() {
        let s = white_noise_signal(0.1, 5000, 0.01, 9);
        let shifted: Vec<Vec<f64>> = s
            .axes_slices()
            .iter()
            .map(|a| a.iter().map(|v| v + 3.0).collect())
            .collect();
        let t = Signal::new(shifted, s.dt(), "shift").unwrap();
        let a = allan_deviation(&s, 0).unwrap();
        let b = allan_deviation(&t, 0).unwrap();
        for (x, y) in a.adev.iter().zip(&b.adev) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn allan_white_noise_slope() {
        let s = white_noise_signal(0.05, 200_000, 0.005, 42);
        let curve = allan_deviation(&s, 0).unwrap();
        let gm = (curve.taus[0] * curve.taus[curve.taus.len() - 1]).sqrt();
        let slope = loglog_slope(&curve, gm / 10f64.sqrt(), gm * 10f64.sqrt()).unwrap();
        assert!((slope + 0.5).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn allan_scales_linearly_with_sigma() {
        let a = white_noise_signal(0.05, 50_000, 0.005, 13);
        let b = white_noise_signal(0.10, 50_000, 0.005, 13);
        let ca = allan_deviation(&a, 0).unwrap();
        let cb = allan_deviation(&b, 0).unwrap();
        for (x, y) in ca.adev.iter().zip(&cb.adev) {
            assert!((y / x - 2.0).abs() < 0.05, "ratio {}", y / x);
        }
    }

    #[test]
    fn allan_rejects_short_signal() {
        let s = Signal::new(vec![vec![0.0; 100]], 0.01, "short").unwrap();
        assert!(allan_deviation(&s, 0).is_err());
    }

    #[test]
    fn fit_recovers_vrw_from_white_noise() {
        let sigma = 0.05;
        let dt = 0.005;
        let s = white_noise_signal(sigma, 200_000, dt, 42);
        let report = allan_report(&s, 0).unwrap();
        let expected = sigma * dt.sqrt(); // adev at tau = 1 s
        let vrw = report.coefficients.vrw;
        assert!(report.coefficients.vrw_fit.is_some());
        assert!(
            (vrw - expected).abs() / expected < 0.15,
            "vrw {vrw} vs {expected}"
        );
    }

    #[test]
    fn fit_flags_absent_vrw_on_bias_walk() {
        let zeros = Signal::new(vec![vec![0.0; 100_000]], 0.005, "rw").unwrap();
        let nm = NoiseModel {
            bias_rw_sigma: 1e-3,
            ..NoiseModel::ideal()
        };
        let s = degrade(&zeros, &nm, 21).unwrap();
        let report = allan_report(&s, 0).unwrap();
        assert!(report.coefficients.vrw_fit.is_none(), "random walk should have no -1/2 segment");
        assert_eq!(report.coefficients.vrw, 0.0);
        assert!(report.coefficients.bi > 0.0);
    }

    #[test]
    fn fit_recovers_qn_from_synthetic_curve() {
        // exact quantization-noise law: adev = sqrt(3) * Q / tau
        let q = 2e-3;
        let taus: Vec<f64> = (0..20).map(|i| 0.01 * 1.5f64.powi(i)).collect();
        let adev: Vec<f64> = taus.iter().map(|t| 3f64.sqrt() * q / t).collect();
        let fit = fit_noise_params(&AllanCurve { taus, adev }).unwrap();
        assert!(fit.qn_fit.is_some());
        assert!((fit.qn - q).abs() / q < 0.01, "qn {} vs {q}", fit.qn);
    }

    #[test]
    fn fit_requires_ten_points() {
        let curve = AllanCurve {
            taus: vec![0.1, 0.2, 0.4],
            adev: vec![1.0, 0.7, 0.5],
        };
        assert!(fit_noise_params(&curve).is_err());
    }

    proptest! {
        #[test]
        fn csre_is_symmetric_and_triangular(
            a in proptest::collection::vec(-5.0..5.0f64, 8),
            b in proptest::collection::vec(-5.0..5.0f64, 8),
            c in proptest::collection::vec(-5.0..5.0f64, 8),
        ) {
            let sa = Signal::new(vec![a], 0.01, "a").unwrap();
            let sb = Signal::new(vec![b], 0.01, "b").unwrap();
            let sc = Signal::new(vec![c], 0.01, "c").unwrap();
            let ab = csre(&sa, &sb).unwrap();
            let ba = csre(&sb, &sa).unwrap();
            prop_assert!((ab - ba).abs() < 1e-15);
            prop_assert_eq!(csre(&sa, &sa).unwrap(), 0.0);
            let ac = csre(&sa, &sc).unwrap();
            let cb = csre(&sc, &sb).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }
    }
}
