//! Test coefficient sets: random sparse Wigner coefficients, a parametric
//! directive-speaker analog, probe response constants and rotations.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coeffs::WignerCoefficients;
use crate::error::{Error, Result};
use crate::special::spherical_hankel1;
use crate::wigner::{wigner_big_d, BandLimit, WignerIndex, MAX_ORDER};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Speed of sound used to turn preset frequencies into wavenumbers, m/s.
pub const SOUND_SPEED: f64 = 343.0;

/// Default probe-to-source distance, m.
pub const DEFAULT_R_AB: f64 = 0.75;

/// Default geometric decay of the axisymmetric core, dB per order.
pub const DEFAULT_DECAY_DB: f64 = 5.0;

/// Ratio between consecutive `|m|` shells of the asymmetric part.
pub const ASYMMETRY_SHELL_RATIO: f64 = 0.5;

pub fn wavenumber(frequency_hz: f64) -> f64 {
    TAU * frequency_hz / SOUND_SPEED
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ValueMode {
    /// Every selected coefficient equals 1.
    #[default]
    Ones,
    /// Unit modulus with a uniform random phase.
    RandomPhase,
}

/// `s_d` distinct admissible indices, chosen uniformly.
pub fn random_sparse_coefficients(
    band_limit: BandLimit,
    s_d: usize,
    seed: u64,
    mu_zero_only: bool,
    mode: ValueMode,
) -> Result<WignerCoefficients> {
    let mut a = WignerCoefficients::zeros(band_limit);
    let admissible: Vec<WignerIndex> = a.indices().filter(|i| !mu_zero_only || i.mu == 0).collect();
    if s_d == 0 || s_d > admissible.len() {
        return Err(Error::Argument(format!("s_D = {s_d} outside 1..={}", admissible.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in rand::seq::index::sample(&mut rng, admissible.len(), s_d) {
        let v = match mode {
            ValueMode::Ones => Complex64::new(1.0, 0.0),
            ValueMode::RandomPhase => Complex64::from_polar(1.0, rng.random_range(0.0..TAU)),
        };
        a.set(admissible[k], v)?;
    }
    Ok(a)
}

/// Spherical-wave coefficients `A_n^m`, stored `n` ascending then `m`
/// ascending (position `n² + n + m`).
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCoefficients {
    band_limit: BandLimit,
    values: Vec<Complex64>,
}

impl HarmonicCoefficients {
    pub fn zeros(band_limit: BandLimit) -> Self {
        Self { band_limit, values: vec![ZERO; band_limit.harmonic_count()] }
    }

    pub fn band_limit(&self) -> BandLimit {
        self.band_limit
    }

    fn position(&self, n: i32, m: i32) -> Result<usize> {
        if n < 0 || n as u32 > self.band_limit.n_max() || m.abs() > n {
            return Err(Error::InvalidIndex { n, m, mu: 0, n_max: self.band_limit.n_max() });
        }
        Ok((n * n + n + m) as usize)
    }

    pub fn get(&self, n: i32, m: i32) -> Result<Complex64> {
        Ok(self.values[self.position(n, m)?])
    }

    pub fn set(&mut self, n: i32, m: i32, v: Complex64) -> Result<()> {
        let at = self.position(n, m)?;
        self.values[at] = v;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, i32, Complex64)> + '_ {
        let n_max = self.band_limit.n_max() as i32;
        (0..=n_max).flat_map(move |n| (-n..=n).map(move |m| (n, m, self.values[(n * n + n + m) as usize])))
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
    }

    /// Share of `ℓ2²` energy held by `m ≠ 0` entries.
    pub fn asymmetry(&self) -> f64 {
        let total = self.norm_sqr();
        if total == 0.0 {
            return 0.0;
        }
        self.iter().filter(|(_, m, _)| *m != 0).map(|(_, _, v)| v.norm_sqr()).sum::<f64>() / total
    }

    /// Same coefficients at a band limit not above the current one.
    pub fn truncate(&self, band_limit: BandLimit) -> Self {
        let mut out = Self::zeros(band_limit);
        let keep = band_limit.harmonic_count().min(self.values.len());
        out.values[..keep].copy_from_slice(&self.values[..keep]);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerModel {
    pub coefficients: HarmonicCoefficients,
    pub frequency_hz: f64,
    pub asymmetry: f64,
}

/// Directive-speaker analog: an axisymmetric core decaying by `decay_db` per
/// order with random phases, plus random `m ≠ 0` entries carrying exactly
/// `asymmetry` of the energy. Normalized to unit `ℓ2` norm.
pub fn speaker_analog(band_limit: BandLimit, asymmetry: f64, decay_db: f64, seed: u64) -> Result<HarmonicCoefficients> {
    if !(0.0..1.0).contains(&asymmetry) {
        return Err(Error::Argument(format!("asymmetry fraction {asymmetry} outside [0, 1)")));
    }
    let rho = 10f64.powf(-decay_db / 20.0);
    let n_max = band_limit.n_max() as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut core = HarmonicCoefficients::zeros(band_limit);
    let mut side = HarmonicCoefficients::zeros(band_limit);
    for n in 0..=n_max {
        core.set(n, 0, Complex64::from_polar(rho.powi(n), rng.random_range(0.0..TAU)))?;
        for m in (-n..=n).filter(|&m| m != 0) {
            let g = Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            side.set(n, m, g * rho.powi(n) * ASYMMETRY_SHELL_RATIO.powi(m.abs() - 1))?;
        }
    }
    let e_core = core.norm_sqr();
    let e_side = side.norm_sqr();
    let gain = if asymmetry > 0.0 && e_side > 0.0 { (asymmetry / (1.0 - asymmetry) * e_core / e_side).sqrt() } else { 0.0 };
    for (c, s) in core.values.iter_mut().zip(&side.values) {
        *c += s * gain;
    }
    core.normalize();
    Ok(core)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProbeCase {
    /// Ideal probe, `μ = 0` only.
    A,
    /// Adds `μ = ±1` perturbations.
    B,
    /// Adds `μ = ±1` and `μ = ±2` perturbations.
    C,
}

impl ProbeCase {
    pub fn mu_max(self) -> i32 {
        match self {
            ProbeCase::A => 0,
            ProbeCase::B => 1,
            ProbeCase::C => 2,
        }
    }
}

/// Probe response constants `C_n^μ` for `|μ| ≤ 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResponse {
    band_limit: BandLimit,
    values: Vec<Complex64>,
}

impl ProbeResponse {
    const MU_MAX: i32 = 2;

    fn zeros(band_limit: BandLimit) -> Self {
        let width = (2 * Self::MU_MAX + 1) as usize;
        Self { band_limit, values: vec![ZERO; (band_limit.n_max() as usize + 1) * width] }
    }

    fn position(n: i32, mu: i32) -> usize {
        n as usize * (2 * Self::MU_MAX + 1) as usize + (mu + Self::MU_MAX) as usize
    }

    pub fn band_limit(&self) -> BandLimit {
        self.band_limit
    }

    /// Zero for `|μ| > 2` or `|μ| > n`.
    pub fn get(&self, n: i32, mu: i32) -> Complex64 {
        if mu.abs() > Self::MU_MAX || mu.abs() > n || n < 0 || n as u32 > self.band_limit.n_max() {
            return ZERO;
        }
        self.values[Self::position(n, mu)]
    }

    fn set(&mut self, n: i32, mu: i32, v: Complex64) {
        self.values[Self::position(n, mu)] = v;
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|v| **v != ZERO).count()
    }

    /// Axisymmetric constants `C_n^0`.
    pub fn axial(&self) -> Vec<Complex64> {
        (0..=self.band_limit.n_max() as i32).map(|n| self.get(n, 0)).collect()
    }
}

/// `C_n^0 = √(2n+1)/(4π) h_n(k r_ab)`, with Gaussian `μ = ±1` (case b) and
/// `μ = ±2` (case c) constants whose real and imaginary parts have standard
/// deviation `0.01` and `0.001` times `max_n |C_n^0|`.
pub fn probe_response(case: ProbeCase, band_limit: BandLimit, k: f64, r_ab: f64, seed: u64) -> Result<ProbeResponse> {
    if !(k > 0.0 && r_ab > 0.0) {
        return Err(Error::Domain(format!("k and r_ab must be positive, got {k}, {r_ab}")));
    }
    let mut p = ProbeResponse::zeros(band_limit);
    let n_max = band_limit.n_max() as i32;
    for n in 0..=n_max {
        p.set(n, 0, spherical_hankel1(n as u32, k * r_ab)? * ((2 * n + 1) as f64).sqrt() / (4.0 * PI));
    }
    let peak = p.axial().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (mu_abs, scale) in [(1, 0.01), (2, 0.001)] {
        if mu_abs > case.mu_max() {
            break;
        }
        let dist = Normal::new(0.0, scale * peak).expect("positive scale");
        for n in mu_abs..=n_max {
            for mu in [-mu_abs, mu_abs] {
                p.set(n, mu, Complex64::new(dist.sample(&mut rng), dist.sample(&mut rng)));
            }
        }
    }
    Ok(p)
}

/// `a_n^{mμ} = A_n^m C_n^μ`.
pub fn compose(speaker: &HarmonicCoefficients, probe: &ProbeResponse) -> Result<WignerCoefficients> {
    if speaker.band_limit() != probe.band_limit() {
        return Err(Error::BandLimitMismatch { left: speaker.band_limit().n_max(), right: probe.band_limit().n_max() });
    }
    let mut a = WignerCoefficients::zeros(speaker.band_limit());
    for (n, m, v) in speaker.iter() {
        for mu in -n.min(ProbeResponse::MU_MAX)..=n.min(ProbeResponse::MU_MAX) {
            let c = probe.get(n, mu);
            if v != ZERO && c != ZERO {
                a.set(WignerIndex::new(n, m, mu), v * c)?;
            }
        }
    }
    Ok(a)
}

/// Estimate of `A_n^m` from the `μ = 0` slice, `a_n^{m0} / C_n^0`.
pub fn extract_speaker(a: &WignerCoefficients, probe: &ProbeResponse) -> Result<HarmonicCoefficients> {
    let mut out = HarmonicCoefficients::zeros(a.band_limit());
    for n in 0..=a.band_limit().n_max() as i32 {
        let c = probe.get(n, 0);
        for m in -n..=n {
            out.set(n, m, a.get(WignerIndex::new(n, m, 0))? / c)?;
        }
    }
    Ok(out)
}

/// `A'_n^μ = Σ_m D_n^{μm}(α, β, γ) A_n^m`.
pub fn rotate_coefficients(a: &HarmonicCoefficients, alpha: f64, beta: f64, gamma: f64) -> Result<HarmonicCoefficients> {
    let mut out = HarmonicCoefficients::zeros(a.band_limit());
    for n in 0..=a.band_limit().n_max() as i32 {
        for mu in -n..=n {
            let mut acc = ZERO;
            for m in -n..=n {
                acc += wigner_big_d(n, mu, m, alpha, beta, gamma)? * a.get(n, m)?;
            }
            out.set(n, mu, acc)?;
        }
    }
    Ok(out)
}

/// Named speaker-plus-probe configuration, `C1a` … `C3c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Preset {
    pub speaker: u8,
    pub probe: ProbeCase,
}

impl Preset {
    pub const ALL: [&'static str; 9] = ["C1a", "C1b", "C1c", "C2a", "C2b", "C2c", "C3a", "C3b", "C3c"];

    pub fn asymmetry(&self) -> f64 {
        match self.speaker {
            1 => 0.0045,
            2 => 0.0105,
            _ => 0.0222,
        }
    }

    pub fn frequency_hz(&self) -> f64 {
        match self.speaker {
            1 => 1098.0,
            2 => 1400.0,
            _ => 1895.0,
        }
    }

    pub fn speaker_model(&self, band_limit: BandLimit, seed: u64) -> Result<SpeakerModel> {
        Ok(SpeakerModel {
            coefficients: speaker_analog(band_limit, self.asymmetry(), DEFAULT_DECAY_DB, seed)?,
            frequency_hz: self.frequency_hz(),
            asymmetry: self.asymmetry(),
        })
    }

    pub fn probe(&self, band_limit: BandLimit, seed: u64) -> Result<ProbeResponse> {
        probe_response(self.probe, band_limit, wavenumber(self.frequency_hz()), DEFAULT_R_AB, seed)
    }

    /// Speaker, probe and composed Wigner coefficients for one seed.
    pub fn instantiate(&self, band_limit: BandLimit, seed: u64) -> Result<(SpeakerModel, ProbeResponse, WignerCoefficients)> {
        let speaker = self.speaker_model(band_limit, seed)?;
        let probe = self.probe(band_limit, seed.wrapping_add(0x9e37_79b9))?;
        let a = compose(&speaker.coefficients, &probe)?;
        Ok((speaker, probe, a))
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let b = s.as_bytes();
        if b.len() != 3 || !(b[0] == b'C' || b[0] == b'c') {
            return Err(Error::Argument(format!("unknown preset {s:?}, expected C1a..C3c")));
        }
        let speaker = match b[1] {
            b'1' => 1,
            b'2' => 2,
            b'3' => 3,
            _ => return Err(Error::Argument(format!("unknown preset {s:?}, expected C1a..C3c"))),
        };
        let probe = match b[2].to_ascii_lowercase() {
            b'a' => ProbeCase::A,
            b'b' => ProbeCase::B,
            b'c' => ProbeCase::C,
            _ => return Err(Error::Argument(format!("unknown preset {s:?}, expected C1a..C3c"))),
        };
        Ok(Self { speaker, probe })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.probe {
            ProbeCase::A => 'a',
            ProbeCase::B => 'b',
            ProbeCase::C => 'c',
        };
        write!(f, "C{}{}", self.speaker, c)
    }
}

/// Turns measured field coefficients into `A_n^m`: keeps `n ≤ n_max`, divides
/// by `h_n(k r_ab)` and normalizes.
pub fn speaker_from_field_coefficients(
    rows: &[(i32, i32, Complex64)],
    band_limit: BandLimit,
    k: f64,
    r_ab: f64,
) -> Result<HarmonicCoefficients> {
    let mut out = HarmonicCoefficients::zeros(band_limit);
    for &(n, m, v) in rows {
        if n < 0 || m.abs() > n {
            return Err(Error::InvalidIndex { n, m, mu: 0, n_max: band_limit.n_max() });
        }
        if n as u32 > MAX_ORDER {
            return Err(Error::Argument(format!("order {n} exceeds supported maximum {MAX_ORDER}")));
        }
        if n as u32 > band_limit.n_max() {
            continue;
        }
        out.set(n, m, v / spherical_hankel1(n as u32, k * r_ab)?)?;
    }
    out.normalize();
    Ok(out)
}

/// Inverse of [`speaker_from_field_coefficients`] up to normalization.
pub fn field_coefficients(a: &HarmonicCoefficients, k: f64, r_ab: f64) -> Result<Vec<(i32, i32, Complex64)>> {
    a.iter().map(|(n, m, v)| Ok((n, m, v * spherical_hankel1(n as u32, k * r_ab)?))).collect()
}

/// Reads an `n m re im` file of field coefficients, truncates it to
/// `band_limit` and converts it with [`speaker_from_field_coefficients`].
pub fn load_sh_coefficients(path: &Path, band_limit: BandLimit, r_ab: f64, k: f64) -> Result<SpeakerModel> {
    let file = std::fs::File::open(path)?;
    let (_, rows) = crate::io::read_sh(std::io::BufReader::new(file))?;
    let coefficients = speaker_from_field_coefficients(&rows, band_limit, k, r_ab)?;
    Ok(SpeakerModel { asymmetry: coefficients.asymmetry(), coefficients, frequency_hz: k * SOUND_SPEED / TAU })
}

/// Writes `A_n^m h_n(k r_ab)` in the format read by [`load_sh_coefficients`].
pub fn save_sh_coefficients(path: &Path, a: &HarmonicCoefficients, r_ab: f64, k: f64) -> Result<()> {
    let rows = field_coefficients(a, k, r_ab)?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    crate::io::write_sh(&mut file, a.band_limit().n_max(), &rows)?;
    std::io::Write::flush(&mut file)?;
    Ok(())
}
