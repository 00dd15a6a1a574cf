//! Wigner d/D functions and the half-angle `Δ` matrices.
//!
//! Conventions: `D_n^{μm}(α, β, γ) = e^{-iμα} d_n^{μm}(β) e^{-imγ}` with the
//! real `d` given by the usual σ-sum (Condon–Shortley phases, so that
//! `d_1^{10}(β) = -sin β / √2`). `Δ_n^{m', m} = d_n^{m' m}(π/2)`.
//!
//! Euler angles follow the passive zyz' convention; a probe pose given by
//! rotations `(r_z, r_y, r_z')` corresponds to `(α, β, γ) = (-r_z', -r_y, -r_z)`.
//! Nothing in this crate converts hardware poses, so that relation is only
//! recorded here.

use std::f64::consts::FRAC_PI_2;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{binomial, binomial_exact, ln_factorial};

/// Highest order the evaluators support.
pub const MAX_ORDER: u32 = 64;

/// Tolerance on the imaginary residue of the `Δ`-sum synthesis.
pub const FOURIER_IDENTITY_TOL: f64 = 1e-10;

/// Series truncation order `n_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BandLimit(u32);

impl BandLimit {
    pub fn new(n_max: u32) -> Result<Self> {
        if n_max > MAX_ORDER {
            return Err(Error::Argument(format!("n_max {n_max} exceeds supported maximum {MAX_ORDER}")));
        }
        Ok(Self(n_max))
    }

    pub fn n_max(self) -> u32 {
        self.0
    }

    /// `N_D = (n+1)(2n+1)(2n+3)/3`, the number of Wigner D functions.
    pub fn wigner_count(self) -> usize {
        let n = self.0 as usize;
        (n + 1) * (2 * n + 1) * (2 * n + 3) / 3
    }

    /// `(n_max + 1)^2`, the number of spherical harmonics.
    pub fn harmonic_count(self) -> usize {
        let n = self.0 as usize + 1;
        n * n
    }

    /// Side of the Fourier frequency cube, `2 n_max + 2`.
    pub fn fourier_side(self) -> usize {
        2 * self.0 as usize + 2
    }

    /// `N_F = (2n_max+2)^3`.
    pub fn fourier_count_3d(self) -> usize {
        self.fourier_side().pow(3)
    }

    /// `N_F2D = (2n_max+2)^2`.
    pub fn fourier_count_2d(self) -> usize {
        self.fourier_side().pow(2)
    }

    pub fn contains(self, idx: WignerIndex) -> bool {
        idx.n >= 0 && idx.n as u32 <= self.0 && idx.m.abs() <= idx.n && idx.mu.abs() <= idx.n
    }
}

/// Index `(n, m, μ)` of a Wigner D coefficient `a_n^{mμ}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WignerIndex {
    pub n: i32,
    pub m: i32,
    pub mu: i32,
}

impl WignerIndex {
    pub fn new(n: i32, m: i32, mu: i32) -> Self {
        Self { n, m, mu }
    }

    pub fn validate(self, band_limit: BandLimit) -> Result<Self> {
        if band_limit.contains(self) {
            Ok(self)
        } else {
            Err(Error::InvalidIndex { n: self.n, m: self.m, mu: self.mu, n_max: band_limit.n_max() })
        }
    }
}

fn check_indices(n: i32, mu: i32, m: i32) -> Result<()> {
    if n < 0 || n as u32 > MAX_ORDER || mu.abs() > n || m.abs() > n {
        return Err(Error::InvalidIndex { n, m, mu, n_max: MAX_ORDER });
    }
    Ok(())
}

#[inline]
fn parity_sign(k: i32) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `sqrt((n+μ)!(n-μ)! / ((n+m)!(n-m)!))`, accumulated in log space.
fn factorial_ratio(n: i32, mu: i32, m: i32) -> f64 {
    let lf = |k: i32| ln_factorial(k as usize);
    (0.5 * (lf(n + mu) + lf(n - mu) - lf(n + m) - lf(n - m))).exp()
}

/// Wigner small-d function `d_n^{μm}(β)`.
pub fn wigner_d(n: i32, mu: i32, m: i32, beta: f64) -> Result<f64> {
    check_indices(n, mu, m)?;
    Ok(wigner_d_unchecked(n, mu, m, beta))
}

/// The σ-sum with the factorial quotient rewritten as
/// `sqrt(ratio) · C(n+m, σ) · C(n-m, n-μ-σ)` so that only one factor is
/// inexact.
pub(crate) fn wigner_d_unchecked(n: i32, mu: i32, m: i32, beta: f64) -> f64 {
    let (s, c) = (0.5 * beta).sin_cos();
    let lo = 0.max(m - mu);
    let hi = (n + m).min(n - mu);
    let mut sum = 0.0;
    for sigma in lo..=hi {
        let weight = binomial((n + m) as usize, sigma as usize) * binomial((n - m) as usize, (n - mu - sigma) as usize);
        let term = weight * c.powi(2 * n - 2 * sigma + m - mu) * s.powi(2 * sigma - m + mu);
        sum += parity_sign(sigma) * term;
    }
    parity_sign(mu - m) * factorial_ratio(n, mu, m) * sum
}

/// Wigner D function `e^{-iμα} d_n^{μm}(β) e^{-imγ}`.
pub fn wigner_big_d(n: i32, mu: i32, m: i32, alpha: f64, beta: f64, gamma: f64) -> Result<Complex64> {
    let d = wigner_d(n, mu, m, beta)?;
    Ok(Complex64::from_polar(d, -(mu as f64) * alpha - (m as f64) * gamma))
}

/// `d_n^{m'm}(π/2)` evaluated with an exact integer σ-sum; the only rounding
/// is in the final scaling.
fn delta_entry(n: i32, mp: i32, m: i32) -> f64 {
    let lo = 0.max(m - mp);
    let hi = (n + m).min(n - mp);
    let mut sum: i128 = 0;
    for sigma in lo..=hi {
        let term = (binomial_exact((n + m) as usize, sigma as usize)
            * binomial_exact((n - m) as usize, (n - mp - sigma) as usize)) as i128;
        if sigma % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum == 0 {
        return 0.0;
    }
    parity_sign(mp - m) * factorial_ratio(n, mp, m) * (sum as f64) * 2f64.powi(-n)
}

/// Table `Δ_n^{m', m}` for `m', m ∈ [-n, n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaMatrix {
    n: i32,
    entries: Vec<f64>,
}

impl DeltaMatrix {
    fn compute(n: i32) -> Self {
        let dim = (2 * n + 1) as usize;
        let mut entries = vec![0.0; dim * dim];
        for mp in -n..=n {
            for m in -n..=n {
                entries[(mp + n) as usize * dim + (m + n) as usize] = delta_entry(n, mp, m);
            }
        }
        Self { n, entries }
    }

    pub fn order(&self) -> i32 {
        self.n
    }

    pub fn dim(&self) -> usize {
        (2 * self.n + 1) as usize
    }

    /// `Δ_n^{m', m}`; zero when either index is outside `[-n, n]`, which is
    /// how the padded frequency `-n_max-1` enters.
    #[inline]
    pub fn get(&self, mp: i32, m: i32) -> f64 {
        if mp.abs() > self.n || m.abs() > self.n {
            return 0.0;
        }
        self.entries[(mp + self.n) as usize * self.dim() + (m + self.n) as usize]
    }

    /// Max-norm of `ΔᵀΔ - I`.
    pub fn orthonormality_residual(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for a in -n..=n {
            for b in -n..=n {
                let dot: f64 = (-n..=n).map(|k| self.get(k, a) * self.get(k, b)).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Cached `Δ_n` matrix. Computed at most once per order per process.
pub fn delta_matrix(n: u32) -> Result<Arc<DeltaMatrix>> {
    static CACHE: OnceLock<Vec<OnceLock<Arc<DeltaMatrix>>>> = OnceLock::new();
    if n > MAX_ORDER {
        return Err(Error::InvalidIndex { n: n as i32, m: 0, mu: 0, n_max: MAX_ORDER });
    }
    let cache = CACHE.get_or_init(|| (0..=MAX_ORDER).map(|_| OnceLock::new()).collect());
    Ok(cache[n as usize].get_or_init(|| Arc::new(DeltaMatrix::compute(n as i32))).clone())
}

/// All `Δ_n` for `n ≤ n_max`, indexed by order.
pub fn delta_tables(band_limit: BandLimit) -> Vec<Arc<DeltaMatrix>> {
    (0..=band_limit.n_max()).map(|n| delta_matrix(n).expect("order within MAX_ORDER")).collect()
}

/// `i^k` for integer `k`.
#[inline]
pub fn i_pow(k: i32) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Evaluates `d_n^{μm}(β)` through its band-limited Fourier series
/// `i^{μ-m} Σ_{m'} Δ_n^{m',μ} Δ_n^{m',m} e^{-im'β}`.
///
/// The series is real in exact arithmetic; an imaginary residue above
/// [`FOURIER_IDENTITY_TOL`] is reported as a consistency error.
pub fn wigner_d_fourier_synthesis(n: i32, mu: i32, m: i32, beta: f64) -> Result<f64> {
    check_indices(n, mu, m)?;
    let delta = delta_matrix(n as u32)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for mp in -n..=n {
        let w = delta.get(mp, mu) * delta.get(mp, m);
        if w != 0.0 {
            acc += Complex64::from_polar(w, -(mp as f64) * beta);
        }
    }
    let value = i_pow(mu - m) * acc;
    if value.im.abs() > FOURIER_IDENTITY_TOL {
        return Err(Error::Consistency { what: "imaginary residue of the Fourier synthesis", residual: value.im.abs() });
    }
    Ok(value.re)
}

/// Spherical harmonic in the convention tied to the D functions,
/// `Y_n^m(θ, φ) = sqrt(2n+1)/(4π) · D_n^{0,-m}(·, θ, φ)`.
pub fn spherical_harmonic(n: i32, m: i32, theta: f64, phi: f64) -> Result<Complex64> {
    let d = wigner_big_d(n, 0, -m, 0.0, theta, phi)?;
    Ok(d * ((2 * n + 1) as f64).sqrt() / (4.0 * std::f64::consts::PI))
}

/// All `d_n^{μm}(β)` at one angle for `n ≤ n_max`, optionally restricted to
/// `μ = 0`.
#[derive(Debug, Clone)]
pub struct SmallDTable {
    n_max: i32,
    mu_zero_only: bool,
    values: Vec<f64>,
    offsets: Vec<usize>,
}

impl SmallDTable {
    pub fn new(band_limit: BandLimit, beta: f64, mu_zero_only: bool) -> Self {
        let n_max = band_limit.n_max() as i32;
        let mut offsets = Vec::with_capacity(n_max as usize + 2);
        let mut values = Vec::new();
        for n in 0..=n_max {
            offsets.push(values.len());
            let dim = (2 * n + 1) as usize;
            let mu_range = if mu_zero_only { 0..=0 } else { -n..=n };
            for mu in mu_range {
                for m in -n..=n {
                    values.push(wigner_d_unchecked(n, mu, m, beta));
                }
            }
            debug_assert_eq!(values.len() - offsets[n as usize], if mu_zero_only { dim } else { dim * dim });
        }
        offsets.push(values.len());
        Self { n_max, mu_zero_only, values, offsets }
    }

    #[inline]
    pub fn get(&self, n: i32, mu: i32, m: i32) -> f64 {
        debug_assert!(n <= self.n_max);
        let dim = (2 * n + 1) as usize;
        let base = self.offsets[n as usize];
        if self.mu_zero_only {
            debug_assert_eq!(mu, 0);
            self.values[base + (m + n) as usize]
        } else {
            self.values[base + (mu + n) as usize * dim + (m + n) as usize]
        }
    }
}

/// Evaluates `d` at `π/2` the slow way; used to cross-check the exact table.
pub fn wigner_d_half_pi(n: i32, mu: i32, m: i32) -> Result<f64> {
    wigner_d(n, mu, m, FRAC_PI_2)
}
