//! Primal-dual solver for `min ‖z‖₁ s.t. ‖y - Az‖₂ ≤ r`.
//!
//! The problem is rescaled by `‖y‖` before iterating so that step sizes and
//! tolerances are scale free; the solution is scaled back on exit.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{norm, LinearOperator};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub radius: f64,
    pub max_iters: usize,
    /// Relative primal optimality residual.
    pub tol_primal: f64,
    /// Relative dual optimality residual; also the allowed constraint
    /// violation, relative to `r` (or to `‖y‖` when `r = 0`).
    pub tol_dual: f64,
    /// `τ/σ` balance; the product `τσ‖A‖²` stays at `0.99²`.
    pub step_ratio: f64,
    /// Rebalance `τ` and `σ` from the residuals.
    pub adaptive: bool,
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl SolverConfig {
    /// Equality-constrained basis pursuit.
    pub fn noiseless() -> Self {
        Self { radius: 0.0, max_iters: 40_000, tol_primal: 1e-9, tol_dual: 1e-9, step_ratio: 0.1, adaptive: true, trace: false }
    }

    pub fn noisy(radius: f64) -> Self {
        Self { radius, tol_primal: 1e-6, tol_dual: 1e-6, ..Self::noiseless() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius >= 0.0) || !self.radius.is_finite() {
            return Err(Error::Argument(format!("radius must be finite and non-negative, got {}", self.radius)));
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return Err(Error::Argument("tolerances must be positive".into()));
        }
        if !(self.step_ratio > 0.0) || self.max_iters == 0 {
            return Err(Error::Argument("step_ratio and max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Partial configuration read from a JSON object such as
/// `{"radius": 0.1, "max_iters": 8000, "tol_primal": 1e-7, "tol_dual": 1e-7}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub radius: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol_primal: Option<f64>,
    pub tol_dual: Option<f64>,
    pub step_ratio: Option<f64>,
    pub adaptive: Option<bool>,
}

impl SolverOverrides {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })
    }

    pub fn apply(&self, base: SolverConfig) -> SolverConfig {
        SolverConfig {
            radius: self.radius.unwrap_or(base.radius),
            max_iters: self.max_iters.unwrap_or(base.max_iters),
            tol_primal: self.tol_primal.unwrap_or(base.tol_primal),
            tol_dual: self.tol_dual.unwrap_or(base.tol_dual),
            step_ratio: self.step_ratio.unwrap_or(base.step_ratio),
            adaptive: self.adaptive.unwrap_or(base.adaptive),
            trace: base.trace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    InfeasibleRadius,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub solution: Vec<Complex64>,
    pub iterations: usize,
    /// `‖y - Az‖₂` at the returned point.
    pub residual: f64,
    /// Relative change in the last step.
    pub primal_change: f64,
    pub objective: f64,
    pub status: SolverStatus,
    pub trace: Vec<TraceRow>,
}

impl SolverResult {
    pub fn write_trace<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_trace(&self.trace, out)
    }
}

/// CSV `iter,objective,residual`.
pub fn write_trace<W: Write>(trace: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iter,objective,residual")?;
    for t in trace {
        writeln!(out, "{},{:.16e},{:.16e}", t.iter, t.objective, t.residual)?;
    }
    Ok(())
}

/// Complex soft-thresholding, the proximal map of `t‖·‖₁`.
#[inline]
pub fn soft_threshold(z: Complex64, t: f64) -> Complex64 {
    let a = z.norm();
    if a > t {
        z * (1.0 - t / a)
    } else {
        ZERO
    }
}

pub fn l1_norm(z: &[Complex64]) -> f64 {
    z.iter().map(|v| v.norm()).sum()
}

/// Chambolle-Pock iteration on the saddle form
/// `min_z max_u ‖z‖₁ + Re⟨u, Az⟩ - ι*_{B(y,r)}(u)`.
///
/// With `adaptive` set, `τ` and `σ` are rebalanced whenever one residual
/// dominates the other while keeping `τσ‖A‖²` fixed.
pub fn solve_qcbp<A: LinearOperator + ?Sized>(op: &A, y: &[Complex64], config: &SolverConfig) -> Result<SolverResult> {
    config.validate()?;
    if y.len() != op.rows() {
        return Err(Error::ShapeMismatch { expected: op.rows(), got: y.len() });
    }
    let (rows, cols) = (op.rows(), op.cols());
    let scale = norm(y);
    if scale == 0.0 {
        return Ok(SolverResult {
            solution: vec![ZERO; cols],
            iterations: 0,
            residual: 0.0,
            primal_change: 0.0,
            objective: 0.0,
            status: SolverStatus::Converged,
            trace: Vec::new(),
        });
    }
    let yn: Vec<Complex64> = y.iter().map(|v| v / scale).collect();
    let r = config.radius / scale;
    // With r = 0 exact feasibility is unreachable, so the tolerance becomes
    // relative to ‖y‖.
    let slack = if r > 0.0 { r * (1.0 + config.tol_dual) } else { config.tol_dual };

    let k = op.norm_bound();
    let mut tau = 0.99 * config.step_ratio / k;
    let mut sigma = 0.99 / (config.step_ratio * k);
    let mut alpha = 0.5;

    let mut z = vec![ZERO; cols];
    op.adjoint(&yn, &mut z);
    let mut z_next = vec![ZERO; cols];
    let mut az = vec![ZERO; rows];
    op.forward(&z, &mut az);
    let mut az_bar = az.clone();
    let mut az_next = vec![ZERO; rows];
    let mut u = vec![ZERO; rows];
    let mut du = vec![ZERO; rows];
    let mut atu = vec![ZERO; cols];
    let mut trace = Vec::new();
    let mut change = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let mut status = SolverStatus::MaxIterations;
    let mut iterations = 0;

    for it in 1..=config.max_iters {
        iterations = it;
        // Dual step: prox of σ ι*_B via Moreau, v - σ P_B(v/σ).
        let mut dev = 0.0;
        for ((di, ui), (ai, yi)) in du.iter_mut().zip(&u).zip(az_bar.iter().zip(&yn)) {
            *di = ui + sigma * ai;
            dev += (*di / sigma - yi).norm_sqr();
        }
        let dev = dev.sqrt();
        let shrink = if dev > r { r / dev } else { 1.0 };
        for ((ui, di), yi) in u.iter_mut().zip(du.iter_mut()).zip(&yn) {
            let v = *di;
            let p = yi + (v / sigma - yi) * shrink;
            let next = v - sigma * p;
            *di = *ui - next;
            *ui = next;
        }
        op.adjoint(&u, &mut atu);
        let mut diff = 0.0;
        let mut size = 0.0;
        for ((zn, zi), gi) in z_next.iter_mut().zip(&z).zip(&atu) {
            *zn = soft_threshold(zi - tau * gi, tau);
            diff += (*zn - zi).norm_sqr();
            size += zn.norm_sqr();
        }
        change = diff.sqrt() / size.sqrt().max(f64::MIN_POSITIVE);
        op.forward(&z_next, &mut az_next);

        // Optimality residuals of the step just taken.
        let primal_res = diff.sqrt() / tau / norm(&atu).max(f64::MIN_POSITIVE);
        let mut dual_sq = 0.0;
        let mut res_sq = 0.0;
        let mut az_sq = 0.0;
        for (((d, ab), an), yi) in du.iter().zip(&az_bar).zip(&az_next).zip(&yn) {
            dual_sq += (d / sigma + ab - an).norm_sqr();
            res_sq += (an - yi).norm_sqr();
            az_sq += an.norm_sqr();
        }
        let dual_res = dual_sq.sqrt() / az_sq.sqrt().max(1.0);
        residual = res_sq.sqrt();

        for ((ab, an), a) in az_bar.iter_mut().zip(&az_next).zip(az.iter_mut()) {
            *ab = 2.0 * an - *a;
            *a = *an;
        }
        std::mem::swap(&mut z, &mut z_next);

        if config.trace {
            trace.push(TraceRow { iter: it, objective: l1_norm(&z) * scale, residual: residual * scale });
        }
        if it > 10 && primal_res < config.tol_primal && dual_res < config.tol_dual && residual <= slack {
            status = SolverStatus::Converged;
            break;
        }
        if config.adaptive {
            if primal_res > 1.5 * dual_res {
                tau /= 1.0 - alpha;
                sigma *= 1.0 - alpha;
                alpha *= 0.95;
            } else if dual_res > 1.5 * primal_res {
                tau *= 1.0 - alpha;
                sigma /= 1.0 - alpha;
                alpha *= 0.95;
            }
        }
    }
    if status != SolverStatus::Converged && residual > slack {
        status = SolverStatus::InfeasibleRadius;
    }
    z.iter_mut().for_each(|v| *v *= scale);
    Ok(SolverResult {
        objective: l1_norm(&z),
        solution: z,
        iterations,
        residual: residual * scale,
        primal_change: change,
        status,
        trace,
    })
}
