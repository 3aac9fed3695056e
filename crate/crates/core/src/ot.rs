//! Entropic optimal transport between feature sets and the transport-
//! supervised alignment loss built on it.
//!
//! The coupling between the two feature distributions is solved with
//! log-domain Sinkhorn iterations under uniform marginals. The cost of
//! pairing two feature vectors is `exp(1 - <f̂, ĝ>)` over unit-normalized
//! rows, which keeps every entry inside `[1, e²]`. The resulting plan is
//! turned into a point map by barycentric projection and used as a fixed
//! supervision target within a training step: gradients never flow
//! through the plan itself.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Axis, NodeId, Tape, Tensor};
use crate::error::Error;
use crate::Result;

/// Sinkhorn solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OtConfig {
    /// Entropic regularization strength.
    pub eps: f64,
    /// Convergence tolerance on the worst marginal deviation.
    pub tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
}

impl Default for OtConfig {
    fn default() -> Self {
        OtConfig {
            eps: 0.05,
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

impl OtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::validation("ot config", "eps must be > 0"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::validation("ot config", "tol must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::validation("ot config", "max_iter must be >= 1"));
        }
        Ok(())
    }
}

/// Pairing costs between two sets of `n` feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    /// Wraps an `n x n` cost table; every entry must be finite and > 0.
    pub fn from_entries(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::validation("cost matrix", "size mismatch"));
        }
        if data.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::validation("cost matrix", "entries must be finite and > 0"));
        }
        Ok(CostMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }
}

fn unit_rows(f: &Tensor, side: &'static str) -> Result<Vec<f64>> {
    let (n, d) = f.shape();
    let mut out = Vec::with_capacity(n * d);
    for r in 0..n {
        let row = f.row_slice(r);
        let norm = libm::sqrt(row.iter().map(|v| v * v).sum());
        if norm < 1e-12 {
            return Err(Error::DegenerateFeature(format!(
                "{side} feature row {r} has zero norm"
            )));
        }
        out.extend(row.iter().map(|v| v / norm));
    }
    Ok(out)
}

/// Builds the cost table `C[i][j] = exp(1 - <f̂_i, ĝ_j>)` over
/// unit-normalized rows of the two feature matrices.
pub fn cost_matrix(f_low: &Tensor, f_high: &Tensor) -> Result<CostMatrix> {
    if f_low.shape() != f_high.shape() {
        let (lr, lc) = f_low.shape();
        let (rr, rc) = f_high.shape();
        return Err(Error::ShapeMismatch {
            op: "cost_matrix",
            lhs_rows: lr,
            lhs_cols: lc,
            rhs_rows: rr,
            rhs_cols: rc,
        });
    }
    let (n, d) = f_low.shape();
    let a = unit_rows(f_low, "low")?;
    let b = unit_rows(f_high, "high")?;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let ra = &a[i * d..(i + 1) * d];
        for j in 0..n {
            let rb = &b[j * d..(j + 1) * d];
            let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
            data[i * n + j] = libm::exp(1.0 - dot);
        }
    }
    CostMatrix::from_entries(n, data)
}

/// Entropic coupling between two uniform discrete distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// Row-major `n x n` coupling, total mass 1.
    pub gamma: Vec<f64>,
    pub n: usize,
    /// Prescribed row marginal (uniform `1/n`).
    pub row_marginal: Vec<f64>,
    /// Prescribed column marginal (uniform `1/n`).
    pub col_marginal: Vec<f64>,
    /// Iterations actually run.
    pub iterations: usize,
    /// Worst marginal deviation of the returned coupling.
    pub residual: f64,
    /// Whether `residual < tol` was reached within the iteration cap.
    pub converged: bool,
}

impl TransportPlan {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.n + j]
    }
}

fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let s: f64 = values.iter().map(|&v| libm::exp(v - m)).sum();
    m + libm::log(s)
}

/// Solves entropy-regularized transport with uniform marginals using
/// log-domain Sinkhorn scaling.
///
/// Stops when the worst marginal deviation drops below `cfg.tol`. If the
/// iteration cap is hit first the plan is still returned with
/// `converged = false` and the final residual recorded.
pub fn sinkhorn(cost: &CostMatrix, cfg: &OtConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    let n = cost.n();
    let eps = cfg.eps;
    let ln_marginal = libm::log(1.0 / n as f64);
    // pre-scaled cost and its transpose keep both update sweeps on
    // contiguous rows
    let scaled: Vec<f64> = cost.entries().iter().map(|c| c / eps).collect();
    let mut scaled_t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            scaled_t[j * n + i] = scaled[i * n + j];
        }
    }
    // potentials are kept divided by eps so the hot loops are add-only
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;

    let marginal_residual = |f: &[f64], g: &[f64]| -> f64 {
        let mut worst = 0.0_f64;
        let mut col = vec![0.0; n];
        let target = 1.0 / n as f64;
        for i in 0..n {
            let crow = &scaled[i * n..(i + 1) * n];
            let fi = f[i];
            let mut row = 0.0;
            for j in 0..n {
                let v = libm::exp(fi + g[j] - crow[j]);
                row += v;
                col[j] += v;
            }
            worst = worst.max(libm::fabs(row - target));
        }
        for j in 0..n {
            worst = worst.max(libm::fabs(col[j] - target));
        }
        worst
    };

    for it in 1..=cfg.max_iter {
        iterations = it;
        for i in 0..n {
            let crow = &scaled[i * n..(i + 1) * n];
            for j in 0..n {
                buf[j] = g[j] - crow[j];
            }
            f[i] = ln_marginal - logsumexp(&buf);
        }
        for j in 0..n {
            let crow = &scaled_t[j * n..(j + 1) * n];
            for i in 0..n {
                buf[i] = f[i] - crow[i];
            }
            g[j] = ln_marginal - logsumexp(&buf);
        }
        if f.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("sinkhorn potentials diverged".into()));
        }
        // marginal check costs a full sweep; amortize it
        if it % 4 == 0 || it == cfg.max_iter {
            residual = marginal_residual(&f, &g);
            if residual < cfg.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        residual = marginal_residual(&f, &g);
        converged = residual < cfg.tol;
    }

    let mut gamma = vec![0.0; n * n];
    for i in 0..n {
        let crow = &scaled[i * n..(i + 1) * n];
        let grow = &mut gamma[i * n..(i + 1) * n];
        for j in 0..n {
            grow[j] = libm::exp(f[i] + g[j] - crow[j]);
        }
    }
    if gamma.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("sinkhorn plan has non-finite entries".into()));
    }
    let marginal = vec![1.0 / n as f64; n];
    Ok(TransportPlan {
        gamma,
        n,
        row_marginal: marginal.clone(),
        col_marginal: marginal,
        iterations,
        residual,
        converged,
    })
}

/// Which side of the coupling indexes the output of the barycentric map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapDirection {
    /// `T`: weight by plan rows; input rows are indexed by columns of the
    /// plan and the output is in row order.
    Forward,
    /// `T⁻¹`: weight by plan columns; output is in column order.
    Inverse,
}

/// Barycentric projection of a coupling: each output row is the
/// plan-weighted average of the input feature rows.
pub fn barycentric_map(plan: &TransportPlan, features: &Tensor, dir: MapDirection) -> Result<Tensor> {
    let (n, d) = features.shape();
    if n != plan.n {
        return Err(Error::ShapeMismatch {
            op: "barycentric_map",
            lhs_rows: plan.n,
            lhs_cols: plan.n,
            rhs_rows: n,
            rhs_cols: d,
        });
    }
    let mut out = vec![0.0; n * d];
    for o in 0..n {
        let mut mass = 0.0;
        let orow = &mut out[o * d..(o + 1) * d];
        for k in 0..n {
            let w = match dir {
                MapDirection::Forward => plan.get(o, k),
                MapDirection::Inverse => plan.get(k, o),
            };
            if w == 0.0 {
                continue;
            }
            mass += w;
            let frow = features.row_slice(k);
            for (acc, v) in orow.iter_mut().zip(frow) {
                *acc += w * v;
            }
        }
        if mass <= 0.0 || !mass.is_finite() {
            return Err(Error::DegeneratePlan(format!(
                "no mass on {} {o}",
                if dir == MapDirection::Forward { "row" } else { "column" }
            )));
        }
        orow.iter_mut().for_each(|v| *v /= mass);
    }
    Tensor::new(n, d, out)
}

/// Sinkhorn solve statistics surfaced in step reports.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OtDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Transport-supervised feature alignment loss.
///
/// `f_gl` and `f_gh` are live graph nodes (the two generators' feature
/// layers); `f_l` and `f_h` are the detached feature values used to
/// solve the coupling. The loss is the mean over rows of
/// `|F_GL - T(F_H)|² + |F_GH - T⁻¹(F_L)|²`, differentiable w.r.t. the
/// live nodes only — the transport targets are constants of the step.
pub fn ots_loss(
    tape: &mut Tape,
    f_gl: NodeId,
    f_gh: NodeId,
    f_l: &Tensor,
    f_h: &Tensor,
    cfg: &OtConfig,
) -> Result<(NodeId, OtDiagnostics)> {
    let cost = cost_matrix(f_l, f_h)?;
    let plan = sinkhorn(&cost, cfg)?;
    let diag = OtDiagnostics {
        iterations: plan.iterations,
        residual: plan.residual,
        converged: plan.converged,
    };
    let target_low = barycentric_map(&plan, f_h, MapDirection::Forward)?;
    let target_high = barycentric_map(&plan, f_l, MapDirection::Inverse)?;
    let loss = ots_alignment_loss(tape, f_gl, f_gh, &target_low, &target_high)?;
    Ok((loss, diag))
}

/// The quadratic alignment part of the OTS loss against fixed targets.
pub fn ots_alignment_loss(
    tape: &mut Tape,
    f_gl: NodeId,
    f_gh: NodeId,
    target_low: &Tensor,
    target_high: &Tensor,
) -> Result<NodeId> {
    let n = target_low.rows() as f64;
    let t_low = tape.leaf(target_low.clone());
    let t_high = tape.leaf(target_high.clone());
    let d1 = tape.sub(f_gl, t_low)?;
    let sq1 = tape.mul(d1, d1)?;
    let s1 = tape.sum(sq1, Axis::All);
    let d2 = tape.sub(f_gh, t_high)?;
    let sq2 = tape.mul(d2, d2)?;
    let s2 = tape.sum(sq2, Axis::All);
    let total = tape.add(s1, s2)?;
    Ok(tape.scale(total, 1.0 / n))
}
