//! End-to-end recovery from measurements, plus error metrics.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coeffs::{FourierCoefficients, WignerCoefficients};
use crate::error::{Error, Result};
use crate::operator::{DftOperator, LinearOperator, MeasurementSet};
use crate::solver::{solve_qcbp, SolverConfig, SolverStatus, TraceRow};
use crate::transform::{count_nonzero, BasisTransform, InversionReport, SPARSITY_THRESHOLD};

/// How the constraint radius is derived from a measurement set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RadiusRule {
    /// Equality-constrained basis pursuit.
    Zero,
    /// `√M ε`, the radius of the recovery guarantee.
    Guarantee,
    /// `c √M σ`, the expected noise norm scaled by `c`.
    NoiseNorm(f64),
    Fixed(f64),
}

impl RadiusRule {
    pub fn radius(&self, ms: &MeasurementSet) -> f64 {
        self.radius_for(ms.values.len() as f64, ms.noise_std, ms.eps)
    }

    /// Radius for `m` effective samples (a sum of squared row weights when
    /// rows are weighted).
    pub fn radius_for(&self, m: f64, noise_std: f64, eps: f64) -> f64 {
        let m = m.sqrt();
        match *self {
            RadiusRule::Zero => 0.0,
            RadiusRule::Guarantee => m * eps,
            RadiusRule::NoiseNorm(c) => c * m * noise_std,
            RadiusRule::Fixed(r) => r,
        }
    }
}

/// `‖x - x̂‖² / ‖x‖²` and `-10 log10` of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub normalized_error: f64,
    pub snr_db: f64,
}

/// A zero reference with a zero estimate gives error 0 and SNR `+∞`; a zero
/// reference with a nonzero estimate gives error `+∞` and SNR `-∞`.
pub fn error_metrics(truth: &[Complex64], estimate: &[Complex64]) -> ErrorMetrics {
    let num: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = truth.iter().map(|a| a.norm_sqr()).sum();
    let normalized_error = if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    ErrorMetrics { normalized_error, snr_db: -10.0 * normalized_error.log10() }
}

/// `10 log10(x)`, with `-∞` at 0.
pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub coefficients: WignerCoefficients,
    pub fourier: FourierCoefficients,
    pub status: SolverStatus,
    pub iterations: usize,
    pub radius: f64,
    pub solver_residual: f64,
    pub inversion: InversionReport,
    pub m_rows: usize,
    pub m_phys: usize,
    pub s_d: usize,
    pub s_f: usize,
    /// Against the reference coefficients, when one was supplied.
    pub metrics: Option<ErrorMetrics>,
    /// Empty unless the config asked for a trace.
    pub trace: Vec<TraceRow>,
    pub runtime_s: f64,
}

/// Solves for `b' = √N b`, rescales, and maps back to Wigner coefficients.
pub fn recover_field(
    ms: &MeasurementSet,
    transform: &BasisTransform,
    config: &SolverConfig,
    truth: Option<&WignerCoefficients>,
) -> Result<RecoveryReport> {
    let start = Instant::now();
    if transform.band_limit() != ms.grid.band_limit() {
        return Err(Error::BandLimitMismatch { left: transform.band_limit().n_max(), right: ms.grid.band_limit().n_max() });
    }
    if ms.values.len() != ms.selection.rows.len() {
        return Err(Error::ShapeMismatch { expected: ms.selection.rows.len(), got: ms.values.len() });
    }
    let op = DftOperator::new(&ms.grid, &ms.selection)?;
    let result = solve_qcbp(&op, &ms.values, config)?;
    let scale = op.coefficient_scale();
    let b = FourierCoefficients::from_vec(
        ms.grid.band_limit(),
        ms.grid.dims(),
        result.solution.iter().map(|v| v / scale).collect(),
    )?;
    let (a, inversion) = transform.b_to_a(&b)?;
    let metrics = match truth {
        Some(t) => {
            t.check_same_band(&a)?;
            Some(error_metrics(t.as_slice(), a.as_slice()))
        }
        None => None,
    };
    Ok(RecoveryReport {
        s_d: count_nonzero(a.as_slice(), SPARSITY_THRESHOLD),
        s_f: count_nonzero(b.as_slice(), SPARSITY_THRESHOLD),
        coefficients: a,
        fourier: b,
        status: result.status,
        iterations: result.iterations,
        radius: config.radius,
        solver_residual: result.residual,
        inversion,
        m_rows: ms.selection.m_rows(),
        m_phys: ms.selection.m_phys,
        metrics,
        trace: result.trace,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Full-grid inversion: `b = A* y / √N` (least squares, since the operator
/// has orthonormal columns) followed by `b_to_a`.
pub fn classical_inversion(ms: &MeasurementSet, transform: &BasisTransform) -> Result<(WignerCoefficients, InversionReport)> {
    if ms.selection.m_rows() != ms.grid.len() {
        return Err(Error::Argument(format!(
            "classical inversion needs every grid row, got {} of {}",
            ms.selection.m_rows(),
            ms.grid.len()
        )));
    }
    let op = DftOperator::new(&ms.grid, &ms.selection)?;
    let mut z = vec![Complex64::new(0.0, 0.0); op.cols()];
    op.adjoint(&ms.values, &mut z);
    let scale = op.coefficient_scale();
    z.iter_mut().for_each(|v| *v /= scale);
    let b = FourierCoefficients::from_vec(ms.grid.band_limit(), ms.grid.dims(), z)?;
    transform.b_to_a(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::Dims;
    use crate::grid::{select_rows, PhysicalMap, SampleGrid, SampleSelection};
    use crate::operator::{simulate, NoiseSharing};
    use crate::synth::{random_sparse_coefficients, ValueMode};
    use crate::wigner::BandLimit;

    fn setup(n_max: u32, q: usize) -> (SampleGrid, PhysicalMap, BasisTransform) {
        let bl = BandLimit::new(n_max).unwrap();
        let g = SampleGrid::new(bl, q, Dims::Two).unwrap();
        (g, PhysicalMap::new(&g), BasisTransform::new(bl))
    }

    #[test]
    fn metrics_and_sentinels() {
        let t = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let e = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.9)];
        let m = error_metrics(&t, &e);
        assert!((m.normalized_error - 0.005).abs() < 1e-15);
        assert!((m.snr_db + 10.0 * m.normalized_error.log10()).abs() < 1e-12);
        let z = [Complex64::new(0.0, 0.0); 2];
        assert_eq!(error_metrics(&z, &z).snr_db, f64::INFINITY);
        assert_eq!(error_metrics(&t, &t).snr_db, f64::INFINITY);
        assert_eq!(db(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn full_sampling_noiseless_is_exact() {
        let (g, map, tr) = setup(7, 1);
        let a = random_sparse_coefficients(g.band_limit(), 20, 4, true, ValueMode::RandomPhase).unwrap();
        let ms = simulate(&a, &g, &map, &SampleSelection::full(&g, &map), 0.0, NoiseSharing::Shared, 0).unwrap();
        let rep = recover_field(&ms, &tr, &SolverConfig::noiseless(), Some(&a)).unwrap();
        assert!(rep.metrics.unwrap().normalized_error <= 1e-8);
        let (ac, inv) = classical_inversion(&ms, &tr).unwrap();
        assert!(error_metrics(a.as_slice(), ac.as_slice()).normalized_error <= 1e-20);
        assert!(inv.max_residual() < 1e-10);
    }

    #[test]
    fn zero_field_recovers_zero() {
        let (g, map, tr) = setup(5, 1);
        let a = WignerCoefficients::zeros(g.band_limit());
        let sel = select_rows(&g, &map, 40, 2).unwrap();
        let ms = simulate(&a, &g, &map, &sel, 0.0, NoiseSharing::Shared, 0).unwrap();
        let rep = recover_field(&ms, &tr, &SolverConfig::noiseless(), Some(&a)).unwrap();
        assert_eq!(rep.coefficients.norm_sqr(), 0.0);
        assert_eq!(rep.metrics.unwrap().snr_db, f64::INFINITY);
    }

    #[test]
    fn classical_needs_full_grid() {
        let (g, map, tr) = setup(3, 1);
        let sel = select_rows(&g, &map, 10, 2).unwrap();
        let a = WignerCoefficients::zeros(g.band_limit());
        let ms = simulate(&a, &g, &map, &sel, 0.0, NoiseSharing::Shared, 0).unwrap();
        assert!(classical_inversion(&ms, &tr).is_err());
    }

    #[test]
    fn oversampled_classical_is_exact_without_noise() {
        let (g, map, tr) = setup(5, 3);
        let a = random_sparse_coefficients(g.band_limit(), 10, 9, true, ValueMode::Ones).unwrap();
        let ms = simulate(&a, &g, &map, &SampleSelection::full(&g, &map), 0.0, NoiseSharing::Shared, 0).unwrap();
        let (ac, _) = classical_inversion(&ms, &tr).unwrap();
        assert!(error_metrics(a.as_slice(), ac.as_slice()).normalized_error <= 1e-20);
    }

    #[test]
    fn radius_rules() {
        let (g, map, _) = setup(3, 1);
        let sel = select_rows(&g, &map, 16, 2).unwrap();
        let a = WignerCoefficients::zeros(g.band_limit());
        let ms = simulate(&a, &g, &map, &sel, 0.5, NoiseSharing::Shared, 0).unwrap();
        assert_eq!(RadiusRule::Zero.radius(&ms), 0.0);
        assert!((RadiusRule::Guarantee.radius(&ms) - 4.0 * 1.5).abs() < 1e-12);
        assert!((RadiusRule::NoiseNorm(2.0).radius(&ms) - 4.0).abs() < 1e-12);
        assert_eq!(RadiusRule::Fixed(0.3).radius(&ms), 0.3);
    }
}
