//! Coefficient containers in the Wigner D and Fourier bases.
//!
//! Canonical orderings:
//! * Wigner: `(m, μ)` lexicographic over `[-n_max, n_max]²`, then `n` ascending
//!   from `max(|m|, |μ|)` to `n_max`.
//! * Fourier: `(m, μ, m')` lexicographic with every index in
//!   `[-n_max-1, n_max]`; the 2D variant drops `μ` (fixed at 0).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wigner::{BandLimit, WignerIndex};

/// Which torus the Fourier series lives on. `Two` is the spherical-harmonic
/// special case: only `μ = 0` coefficients, field depends on `(β, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dims {
    Two,
    Three,
}

impl Dims {
    pub fn count(self) -> usize {
        match self {
            Dims::Two => 2,
            Dims::Three => 3,
        }
    }

    pub fn from_count(d: usize) -> Result<Self> {
        match d {
            2 => Ok(Dims::Two),
            3 => Ok(Dims::Three),
            _ => Err(Error::Argument(format!("dims must be 2 or 3, got {d}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct WignerLayout {
    n_max: i32,
    /// Start of each `(m, μ)` block, indexed by `(m + n_max) * (2n_max+1) + (μ + n_max)`.
    offsets: Vec<usize>,
    len: usize,
}

impl WignerLayout {
    fn new(band_limit: BandLimit) -> Self {
        let n_max = band_limit.n_max() as i32;
        let side = (2 * n_max + 1) as usize;
        let mut offsets = Vec::with_capacity(side * side);
        let mut at = 0usize;
        for m in -n_max..=n_max {
            for mu in -n_max..=n_max {
                offsets.push(at);
                at += (n_max + 1 - m.abs().max(mu.abs())) as usize;
            }
        }
        Self { n_max, offsets, len: at }
    }

    #[inline]
    fn block_start(&self, m: i32, mu: i32) -> usize {
        let side = (2 * self.n_max + 1) as usize;
        self.offsets[(m + self.n_max) as usize * side + (mu + self.n_max) as usize]
    }
}

/// Wigner D coefficients `a_n^{mμ}` stored densely in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerCoefficients {
    band_limit: BandLimit,
    layout: WignerLayout,
    values: Vec<Complex64>,
}

impl WignerCoefficients {
    pub fn zeros(band_limit: BandLimit) -> Self {
        let layout = WignerLayout::new(band_limit);
        let values = vec![Complex64::new(0.0, 0.0); layout.len];
        debug_assert_eq!(values.len(), band_limit.wigner_count());
        Self { band_limit, layout, values }
    }

    pub fn band_limit(&self) -> BandLimit {
        self.band_limit
    }

    fn position(&self, idx: WignerIndex) -> Result<usize> {
        let idx = idx.validate(self.band_limit)?;
        let n_min = idx.m.abs().max(idx.mu.abs());
        Ok(self.layout.block_start(idx.m, idx.mu) + (idx.n - n_min) as usize)
    }

    pub fn get(&self, idx: WignerIndex) -> Result<Complex64> {
        Ok(self.values[self.position(idx)?])
    }

    pub fn set(&mut self, idx: WignerIndex, value: Complex64) -> Result<()> {
        let at = self.position(idx)?;
        self.values[at] = value;
        Ok(())
    }

    /// Coefficients of one `(m, μ)` subspace, `n` ascending from `max(|m|,|μ|)`.
    pub fn block(&self, m: i32, mu: i32) -> &[Complex64] {
        let start = self.layout.block_start(m, mu);
        let len = self.block_len(m, mu);
        &self.values[start..start + len]
    }

    pub fn block_mut(&mut self, m: i32, mu: i32) -> &mut [Complex64] {
        let start = self.layout.block_start(m, mu);
        let len = self.block_len(m, mu);
        &mut self.values[start..start + len]
    }

    fn block_len(&self, m: i32, mu: i32) -> usize {
        (self.layout.n_max + 1 - m.abs().max(mu.abs())) as usize
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Every valid index in canonical order.
    pub fn indices(&self) -> impl Iterator<Item = WignerIndex> + '_ {
        let n_max = self.layout.n_max;
        (-n_max..=n_max).flat_map(move |m| {
            (-n_max..=n_max).flat_map(move |mu| (m.abs().max(mu.abs())..=n_max).map(move |n| WignerIndex::new(n, m, mu)))
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (WignerIndex, Complex64)> + '_ {
        self.indices().zip(self.values.iter().copied())
    }

    pub fn iter_nonzero(&self) -> impl Iterator<Item = (WignerIndex, Complex64)> + '_ {
        self.iter().filter(|(_, v)| *v != Complex64::new(0.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// True when every `μ ≠ 0` coefficient vanishes (the spherical-harmonic case).
    pub fn is_mu_zero_only(&self) -> bool {
        self.iter_nonzero().all(|(idx, _)| idx.mu == 0)
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn check_same_band(&self, other: &Self) -> Result<()> {
        if self.band_limit != other.band_limit {
            return Err(Error::BandLimitMismatch { left: self.band_limit.n_max(), right: other.band_limit.n_max() });
        }
        Ok(())
    }
}

/// Fourier coefficients `b_{m'}^{mμ}` on the frequency cube (or square).
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoefficients {
    band_limit: BandLimit,
    dims: Dims,
    values: Vec<Complex64>,
}

impl FourierCoefficients {
    pub fn zeros(band_limit: BandLimit, dims: Dims) -> Self {
        let len = band_limit.fourier_side().pow(dims.count() as u32);
        Self { band_limit, dims, values: vec![Complex64::new(0.0, 0.0); len] }
    }

    pub fn from_vec(band_limit: BandLimit, dims: Dims, values: Vec<Complex64>) -> Result<Self> {
        let len = band_limit.fourier_side().pow(dims.count() as u32);
        if values.len() != len {
            return Err(Error::ShapeMismatch { expected: len, got: values.len() });
        }
        Ok(Self { band_limit, dims, values })
    }

    pub fn band_limit(&self) -> BandLimit {
        self.band_limit
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn side(&self) -> usize {
        self.band_limit.fourier_side()
    }

    /// Offset that maps a frequency in `[-n_max-1, n_max]` to `[0, side)`.
    pub fn offset(&self) -> i32 {
        self.band_limit.n_max() as i32 + 1
    }

    fn in_range(&self, k: i32) -> bool {
        let o = self.offset();
        k >= -o && k < o
    }

    /// Flat position of `(m', m, μ)`; `μ` must be 0 in 2D.
    pub fn position(&self, mp: i32, m: i32, mu: i32) -> Result<usize> {
        let o = self.offset();
        let s = self.side();
        let bad = || Error::InvalidIndex { n: mp, m, mu, n_max: self.band_limit.n_max() };
        if !self.in_range(mp) || !self.in_range(m) || !self.in_range(mu) {
            return Err(bad());
        }
        match self.dims {
            Dims::Three => Ok((((m + o) as usize * s) + (mu + o) as usize) * s + (mp + o) as usize),
            Dims::Two if mu == 0 => Ok((m + o) as usize * s + (mp + o) as usize),
            Dims::Two => Err(bad()),
        }
    }

    pub fn get(&self, mp: i32, m: i32, mu: i32) -> Result<Complex64> {
        Ok(self.values[self.position(mp, m, mu)?])
    }

    pub fn set(&mut self, mp: i32, m: i32, mu: i32, value: Complex64) -> Result<()> {
        let at = self.position(mp, m, mu)?;
        self.values[at] = value;
        Ok(())
    }

    /// The `m'` column for one `(m, μ)` subspace, `m'` ascending from `-n_max-1`.
    pub fn block(&self, m: i32, mu: i32) -> Result<&[Complex64]> {
        let start = self.position(-self.offset(), m, mu)?;
        Ok(&self.values[start..start + self.side()])
    }

    pub fn block_mut(&mut self, m: i32, mu: i32) -> Result<&mut [Complex64]> {
        let start = self.position(-self.offset(), m, mu)?;
        let side = self.side();
        Ok(&mut self.values[start..start + side])
    }

    /// `(m', m, μ)` for every flat position, in canonical order.
    pub fn frequencies(&self) -> impl Iterator<Item = (i32, i32, i32)> + '_ {
        let o = self.offset();
        let mus: Vec<i32> = match self.dims {
            Dims::Three => (-o..o).collect(),
            Dims::Two => vec![0],
        };
        (-o..o).flat_map(move |m| {
            let mus = mus.clone();
            mus.into_iter().flat_map(move |mu| (-o..o).map(move |mp| (mp, m, mu)))
        })
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }
}
