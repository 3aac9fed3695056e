//! Modulated Laplace-energy regularization of feature layers.
//!
//! The Laplace energy of a feature vector is the sum of squared discrete
//! second differences — a volatility measure. The regularizer
//! `R = -log(Ẽ) - κ·log(1 - Ẽ)` over the sigmoid-normalized energy
//! `Ẽ = σ(E)` blows up as Ẽ approaches 0 or 1 and has its unique
//! minimum at `Ẽ* = 1/(1+κ)`, so the kurtosis-derived modulation κ
//! decides how much energy a feature is pushed toward: smooth
//! (low-kurtosis) features get energy injected, volatile (high-kurtosis)
//! ones get damped.
//!
//! Internally both log terms are evaluated through softplus,
//! `R(E) = softplus(-E) + κ·softplus(E)`, which is exact and avoids the
//! catastrophic `log(1 - σ(E))` underflow for large energies. Note that
//! `σ(E) ∈ [0.5, 1)` for raw energies `E ≥ 0`: minima at `Ẽ* < 0.5`
//! (κ > 1) therefore pull the energy toward the smallest reachable
//! value, `E = 0`.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{sigmoid, softplus, Axis, NodeId, Tape, Tensor};
use crate::error::Error;
use crate::Result;

/// Clamp range for the kurtosis modulation factor.
pub const KAPPA_MIN: f64 = 0.1;
pub const KAPPA_MAX: f64 = 10.0;

/// Raw and sigmoid-normalized Laplace energy of one feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceEnergy {
    /// Sum of squared second differences, ≥ 0.
    pub raw: f64,
    /// `σ(raw)`, in `[0.5, 1)` for raw ≥ 0.
    pub normalized: f64,
}

/// Sum of squared discrete second differences over interior points.
pub fn laplace_energy(h: &[f64]) -> Result<LaplaceEnergy> {
    if h.len() < 3 {
        return Err(Error::validation(
            "laplace energy",
            format!("need at least 3 elements, got {}", h.len()),
        ));
    }
    let mut raw = 0.0;
    for i in 1..h.len() - 1 {
        let dd = h[i + 1] - 2.0 * h[i] + h[i - 1];
        raw += dd * dd;
    }
    Ok(LaplaceEnergy {
        raw,
        normalized: sigmoid(raw),
    })
}

/// Kurtosis-based modulation factor: raw (non-excess) sample kurtosis
/// `m4 / m2²`, clamped to `[KAPPA_MIN, KAPPA_MAX]`.
pub fn kurtosis_kappa(h: &[f64]) -> Result<f64> {
    if h.len() < 4 {
        return Err(Error::validation(
            "kurtosis",
            format!("need at least 4 elements, got {}", h.len()),
        ));
    }
    let n = h.len() as f64;
    let mean: f64 = h.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for &x in h {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    if libm::sqrt(m2) <= 1e-8 {
        return Err(Error::DegenerateFeature("near-zero variance".into()));
    }
    Ok((m4 / (m2 * m2)).clamp(KAPPA_MIN, KAPPA_MAX))
}

/// The regularizer as a function of the raw energy:
/// `softplus(-E) + κ·softplus(E)`, identical to
/// `-log(σ(E)) - κ·log(1 - σ(E))`.
pub fn r_mle(e_raw: f64, kappa: f64) -> Result<f64> {
    if !(e_raw >= 0.0) {
        return Err(Error::validation("r_mle", "energy must be >= 0"));
    }
    if !(kappa > 0.0) {
        return Err(Error::validation("r_mle", "kappa must be > 0"));
    }
    Ok(softplus(-e_raw) + kappa * softplus(e_raw))
}

/// The regularizer as a function of the normalized energy
/// `Ẽ ∈ (0, 1)`: `-ln(Ẽ) - κ·ln(1 - Ẽ)`. Used to study the minimizer
/// independent of the sigmoid's range restriction.
pub fn r_mle_normalized(e_tilde: f64, kappa: f64) -> Result<f64> {
    if !(e_tilde > 0.0 && e_tilde < 1.0) {
        return Err(Error::validation("r_mle", "normalized energy must be in (0,1)"));
    }
    if !(kappa > 0.0) {
        return Err(Error::validation("r_mle", "kappa must be > 0"));
    }
    Ok(-libm::log(e_tilde) - kappa * libm::log(1.0 - e_tilde))
}

/// Per-row modulation factors for a feature matrix, with the κ = 1
/// fallback for degenerate (near-constant) rows.
pub fn feature_kappas(features: &Tensor) -> Vec<f64> {
    (0..features.rows())
        .map(|r| kurtosis_kappa(features.row_slice(r)).unwrap_or(1.0))
        .collect()
}

/// Statistics surfaced in step reports.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MleDiagnostics {
    /// Mean raw Laplace energy over rows.
    pub mean_energy: f64,
    /// Modulation factor per row.
    pub kappas: Vec<f64>,
}

/// Differentiable mean of `R_MLE` over the rows of a feature matrix.
///
/// κ is computed from the current feature values and treated as a
/// constant of the step: the gradient moves energy, not the kurtosis
/// statistic.
pub fn mle_loss(tape: &mut Tape, features: NodeId) -> Result<(NodeId, MleDiagnostics)> {
    let values = tape.value(features).clone();
    let kappas = feature_kappas(&values);
    let loss = mle_loss_with_kappas(tape, features, &kappas)?;
    let mut mean_energy = 0.0;
    for r in 0..values.rows() {
        mean_energy += laplace_energy(values.row_slice(r))?.raw;
    }
    mean_energy /= values.rows() as f64;
    Ok((loss, MleDiagnostics { mean_energy, kappas }))
}

/// The graph part of [`mle_loss`] with the modulation factors pinned by
/// the caller.
pub fn mle_loss_with_kappas(tape: &mut Tape, features: NodeId, kappas: &[f64]) -> Result<NodeId> {
    mle_loss_prescaled(tape, features, kappas, 1.0)
}

/// [`mle_loss_with_kappas`] with an affine pre-scaling of the raw energy
/// before the sigmoid (`Ẽ = σ(prescale · E)`). The default scale of 1
/// restricts Ẽ to `[0.5, 1)`; smaller scales are an experimentation knob
/// that widens the reachable band around the κ-dependent minimum.
pub fn mle_loss_prescaled(
    tape: &mut Tape,
    features: NodeId,
    kappas: &[f64],
    prescale: f64,
) -> Result<NodeId> {
    if !(prescale > 0.0 && prescale.is_finite()) {
        return Err(Error::validation("mle prescale", "must be finite and > 0"));
    }
    let (n, d) = tape.value(features).shape();
    if d < 4 {
        return Err(Error::validation(
            "mle features",
            format!("feature dimension must be >= 4, got {d}"),
        ));
    }
    if kappas.len() != n {
        return Err(Error::validation("mle kappas", "one kappa per feature row"));
    }
    // second differences over interior points
    let right = tape.slice(features, 0, n, 2, d)?;
    let mid = tape.slice(features, 0, n, 1, d - 1)?;
    let left = tape.slice(features, 0, n, 0, d - 2)?;
    let mid2 = tape.scale(mid, -2.0);
    let dd = tape.add(right, mid2)?;
    let dd = tape.add(dd, left)?;
    let sq = tape.mul(dd, dd)?;
    let energy = tape.sum(sq, Axis::Cols); // (n, 1)
    let energy = if prescale == 1.0 {
        energy
    } else {
        tape.scale(energy, prescale)
    };
    let neg_energy = tape.neg(energy);
    let low_term = tape.softplus(neg_energy);
    let high_term = tape.softplus(energy);
    let kappa_col = tape.leaf(Tensor::column(kappas)?);
    let modulated = tape.mul(kappa_col, high_term)?;
    let per_row = tape.add(low_term, modulated)?;
    Ok(tape.mean(per_row, Axis::All))
}
