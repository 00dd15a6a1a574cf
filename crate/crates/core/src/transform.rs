//! Block transform between Wigner coefficients and Fourier coefficients.
//!
//! For each subspace `(m, μ)` the Fourier column `b^{mμ}` (indexed by
//! `m' ∈ [-n_max-1, n_max]`) equals `B^{mμ} a^{mμ}` with
//! `B[m', n] = i^{μ-m} Δ_n^{m',μ} Δ_n^{m',m}`. Row 0 is the padded
//! frequency `-n_max-1` and is identically zero.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{Dims, FourierCoefficients, WignerCoefficients};
use crate::error::{Error, Result};
use crate::wigner::{delta_matrix, i_pow, BandLimit, WignerIndex};

/// Relative magnitude below which a coefficient counts as zero.
pub const SPARSITY_THRESHOLD: f64 = 1e-12;

/// Default per-subspace residual above which `b_to_a` flags a block.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-9;

/// The matrix `B^{mμ}` for one subspace.
#[derive(Debug, Clone)]
pub struct SubspaceTransform {
    pub m: i32,
    pub mu: i32,
    n_max: i32,
    matrix: DMatrix<Complex64>,
}

impl SubspaceTransform {
    /// Smallest order present in the subspace, `max(|m|, |μ|)`.
    pub fn n_min(&self) -> i32 {
        self.m.abs().max(self.mu.abs())
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// Frequency `m'` carried by a row.
    pub fn row_frequency(&self, row: usize) -> i32 {
        row as i32 - self.n_max - 1
    }

    /// Order `n` carried by a column.
    pub fn column_order(&self, col: usize) -> i32 {
        self.n_min() + col as i32
    }

    /// Ratio of extreme singular values.
    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix.clone().svd(false, false).singular_values;
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    pub fn apply(&self, a: &[Complex64]) -> Vec<Complex64> {
        let (rows, cols) = self.matrix.shape();
        debug_assert_eq!(a.len(), cols);
        let mut out = vec![Complex64::new(0.0, 0.0); rows];
        for (c, &v) in a.iter().enumerate() {
            if v == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (r, o) in out.iter_mut().enumerate() {
                *o += self.matrix[(r, c)] * v;
            }
        }
        out
    }
}

pub fn build_subspace_transform(m: i32, mu: i32, band_limit: BandLimit) -> Result<SubspaceTransform> {
    let n_max = band_limit.n_max() as i32;
    if m.abs() > n_max || mu.abs() > n_max {
        return Err(Error::InvalidIndex { n: n_max, m, mu, n_max: band_limit.n_max() });
    }
    let n_min = m.abs().max(mu.abs());
    let rows = band_limit.fourier_side();
    let cols = (n_max + 1 - n_min) as usize;
    let phase = i_pow(mu - m);
    let mut matrix = DMatrix::from_element(rows, cols, Complex64::new(0.0, 0.0));
    for (c, n) in (n_min..=n_max).enumerate() {
        let delta = delta_matrix(n as u32)?;
        for mp in -n..=n {
            let r = (mp + n_max + 1) as usize;
            matrix[(r, c)] = phase * (delta.get(mp, mu) * delta.get(mp, m));
        }
    }
    Ok(SubspaceTransform { m, mu, n_max, matrix })
}

#[derive(Debug)]
struct Block {
    transform: SubspaceTransform,
    q: DMatrix<Complex64>,
    r: DMatrix<Complex64>,
}

impl Block {
    fn new(transform: SubspaceTransform) -> Self {
        let qr = transform.matrix.clone().qr();
        Self { q: qr.q(), r: qr.r(), transform }
    }

    /// Least-squares solve; returns the coefficients and the residual norm.
    fn solve(&self, b: &[Complex64]) -> (Vec<Complex64>, f64) {
        let rhs = DVector::from_column_slice(b);
        let qtb = self.q.adjoint() * &rhs;
        let x = self.r.solve_upper_triangular(&qtb).expect("B blocks have full column rank");
        let residual = (&rhs - &self.transform.matrix * &x).norm();
        (x.iter().copied().collect(), residual)
    }
}

/// Residual of one subspace solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceResidual {
    pub m: i32,
    pub mu: i32,
    pub residual: f64,
}

/// Diagnostics from [`BasisTransform::b_to_a`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub residuals: Vec<SubspaceResidual>,
    /// Energy found in slices where `m` or `μ` equals `-n_max-1`.
    pub padded_energy: f64,
    pub tolerance: f64,
}

impl InversionReport {
    pub fn flagged(&self) -> impl Iterator<Item = &SubspaceResidual> {
        self.residuals.iter().filter(move |r| r.residual > self.tolerance)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    pub fn total_residual(&self) -> f64 {
        (self.residuals.iter().map(|r| r.residual * r.residual).sum::<f64>() + self.padded_energy).sqrt()
    }
}

/// All subspace transforms for a band limit, built lazily and cached with
/// their QR factors.
#[derive(Debug)]
pub struct BasisTransform {
    band_limit: BandLimit,
    blocks: Vec<OnceLock<Arc<Block>>>,
    residual_tol: f64,
}

impl BasisTransform {
    pub fn new(band_limit: BandLimit) -> Self {
        let side = 2 * band_limit.n_max() as usize + 1;
        Self { band_limit, blocks: (0..side * side).map(|_| OnceLock::new()).collect(), residual_tol: DEFAULT_RESIDUAL_TOL }
    }

    pub fn with_residual_tol(mut self, tol: f64) -> Self {
        self.residual_tol = tol;
        self
    }

    pub fn band_limit(&self) -> BandLimit {
        self.band_limit
    }

    fn block(&self, m: i32, mu: i32) -> &Block {
        let n_max = self.band_limit.n_max() as i32;
        let side = (2 * n_max + 1) as usize;
        let slot = &self.blocks[(m + n_max) as usize * side + (mu + n_max) as usize];
        slot.get_or_init(|| {
            Arc::new(Block::new(build_subspace_transform(m, mu, self.band_limit).expect("indices within band limit")))
        })
    }

    pub fn subspace(&self, m: i32, mu: i32) -> Result<&SubspaceTransform> {
        let n_max = self.band_limit.n_max() as i32;
        if m.abs() > n_max || mu.abs() > n_max {
            return Err(Error::InvalidIndex { n: n_max, m, mu, n_max: self.band_limit.n_max() });
        }
        Ok(&self.block(m, mu).transform)
    }

    fn subspaces(&self, dims: Dims) -> Vec<(i32, i32)> {
        let n_max = self.band_limit.n_max() as i32;
        let mus: Vec<i32> = match dims {
            Dims::Two => vec![0],
            Dims::Three => (-n_max..=n_max).collect(),
        };
        (-n_max..=n_max).flat_map(|m| mus.iter().map(move |&mu| (m, mu))).collect()
    }

    /// `b^{mμ} = B^{mμ} a^{mμ}` for every subspace. In 2D every `μ ≠ 0`
    /// coefficient of `a` must vanish.
    pub fn a_to_b(&self, a: &WignerCoefficients, dims: Dims) -> Result<FourierCoefficients> {
        if a.band_limit() != self.band_limit {
            return Err(Error::BandLimitMismatch { left: self.band_limit.n_max(), right: a.band_limit().n_max() });
        }
        if dims == Dims::Two && !a.is_mu_zero_only() {
            return Err(Error::Argument("2D transform requires μ = 0 coefficients only".into()));
        }
        let mut b = FourierCoefficients::zeros(self.band_limit, dims);
        let n_max = self.band_limit.n_max() as i32;
        let offset = n_max + 1;
        let side = b.side();
        let per_m = match dims {
            Dims::Two => 1,
            Dims::Three => side,
        };
        b.as_mut_slice().par_chunks_mut(side).enumerate().for_each(|(chunk, out)| {
            let m = (chunk / per_m) as i32 - offset;
            let mu = match dims {
                Dims::Two => 0,
                Dims::Three => (chunk % per_m) as i32 - offset,
            };
            if m < -n_max || mu < -n_max {
                return;
            }
            let coeffs = a.block(m, mu);
            if coeffs.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
                return;
            }
            out.copy_from_slice(&self.block(m, mu).transform.apply(coeffs));
        });
        Ok(b)
    }

    /// Per-subspace least squares against `B^{mμ}`.
    pub fn b_to_a(&self, b: &FourierCoefficients) -> Result<(WignerCoefficients, InversionReport)> {
        if b.band_limit() != self.band_limit {
            return Err(Error::BandLimitMismatch { left: self.band_limit.n_max(), right: b.band_limit().n_max() });
        }
        let n_max = self.band_limit.n_max() as i32;
        let solved: Vec<(i32, i32, Vec<Complex64>, f64)> = self
            .subspaces(b.dims())
            .into_par_iter()
            .map(|(m, mu)| {
                let column = b.block(m, mu).expect("subspace inside cube");
                if column.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
                    let len = (n_max + 1 - m.abs().max(mu.abs())) as usize;
                    return (m, mu, vec![Complex64::new(0.0, 0.0); len], 0.0);
                }
                let (x, res) = self.block(m, mu).solve(column);
                (m, mu, x, res)
            })
            .collect();
        let mut a = WignerCoefficients::zeros(self.band_limit);
        let mut residuals = Vec::with_capacity(solved.len());
        for (m, mu, x, residual) in solved {
            a.block_mut(m, mu).copy_from_slice(&x);
            residuals.push(SubspaceResidual { m, mu, residual });
        }
        let pad = -n_max - 1;
        let padded_energy = b
            .frequencies()
            .zip(b.as_slice())
            .filter(|((_, m, mu), _)| *m == pad || *mu == pad)
            .map(|(_, v)| v.norm_sqr())
            .sum();
        Ok((a, InversionReport { residuals, padded_energy, tolerance: self.residual_tol }))
    }

    /// Largest condition number over all subspaces of the given dimension.
    pub fn max_condition_number(&self, dims: Dims) -> f64 {
        self.subspaces(dims)
            .into_par_iter()
            .map(|(m, mu)| self.block(m, mu).transform.condition_number())
            .reduce(|| 0.0, f64::max)
    }
}

/// Number of entries whose magnitude exceeds `rel` times the largest one.
pub fn count_nonzero(values: &[Complex64], rel: f64) -> usize {
    let peak = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return 0;
    }
    values.iter().filter(|v| v.norm() > rel * peak).count()
}

/// Sparsity of a coefficient set in both bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub s_d: usize,
    pub s_f: usize,
    /// Number of `(m, μ)` subspaces holding a nonzero coefficient.
    pub occupied_subspaces: usize,
    /// `(2n_max+2) · occupied_subspaces`.
    pub worst_case_bound: usize,
    /// `Σ (2 n_max^{mμ} + 1)` over occupied subspaces, where `n_max^{mμ}` is
    /// the highest nonzero order in the subspace.
    pub support_bound: usize,
}

pub fn sparsity_report(transform: &BasisTransform, a: &WignerCoefficients, dims: Dims) -> Result<SparsityReport> {
    let b = transform.a_to_b(a, dims)?;
    let peak = a.as_slice().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let keep = |v: &Complex64| peak > 0.0 && v.norm() > SPARSITY_THRESHOLD * peak;
    let n_max = a.band_limit().n_max() as i32;
    let mut s_d = 0;
    let mut occupied = 0;
    let mut support_bound = 0;
    for m in -n_max..=n_max {
        for mu in -n_max..=n_max {
            let block = a.block(m, mu);
            let n_min = m.abs().max(mu.abs());
            let top = block.iter().enumerate().filter(|(_, v)| keep(v)).map(|(k, _)| n_min + k as i32).max();
            s_d += block.iter().filter(|v| keep(v)).count();
            if let Some(top) = top {
                occupied += 1;
                support_bound += (2 * top + 1) as usize;
            }
        }
    }
    Ok(SparsityReport {
        s_d,
        s_f: count_nonzero(b.as_slice(), SPARSITY_THRESHOLD),
        occupied_subspaces: occupied,
        worst_case_bound: a.band_limit().fourier_side() * occupied,
        support_bound,
    })
}

/// Direct synthesis of `Σ b e^{-i(μα + m'β + mγ)}`.
pub fn fourier_series_value(b: &FourierCoefficients, alpha: f64, beta: f64, gamma: f64) -> Complex64 {
    b.frequencies()
        .zip(b.as_slice())
        .filter(|(_, v)| **v != Complex64::new(0.0, 0.0))
        .map(|((mp, m, mu), v)| v * Complex64::from_polar(1.0, -(mu as f64 * alpha + mp as f64 * beta + m as f64 * gamma)))
        .sum()
}

/// Direct synthesis of the Wigner series `Σ a_n^{mμ} D_n^{μm}(α, β, γ)`.
pub fn wigner_series_value(a: &WignerCoefficients, alpha: f64, beta: f64, gamma: f64) -> Complex64 {
    a.iter_nonzero()
        .map(|(WignerIndex { n, m, mu }, v)| {
            v * crate::wigner::wigner_big_d(n, mu, m, alpha, beta, gamma).expect("index validated by container")
        })
        .sum()
}
