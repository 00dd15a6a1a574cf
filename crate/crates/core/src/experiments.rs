//! Numerical studies that wire the pipeline together and emit tables.
//!
//! Trials run on the rayon pool with seeds derived from `(seed, tag, trial,
//! point)`, so a table depends only on its [`ExperimentSpec`]. Means are
//! taken over sorted values and do not depend on completion order.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{Dims, FourierCoefficients, WignerCoefficients};
use crate::error::{Error, Result};
use crate::grid::{select_rows, PhysicalMap, SampleGrid, SampleSelection};
use crate::operator::{noise_std_from_db, peak_magnitude, simulate, DenseOperator, DftOperator, NoiseSharing, EPS_FACTOR};
use crate::recovery::{classical_inversion, db, error_metrics, recover_field, RadiusRule};
use crate::solver::{solve_qcbp, SolverConfig, SolverStatus};
use crate::synth::{extract_speaker, random_sparse_coefficients, Preset, ProbeCase, ProbeResponse, SpeakerModel, ValueMode};
use crate::transform::{count_nonzero, sparsity_report, BasisTransform, SPARSITY_THRESHOLD};
use crate::wigner::{BandLimit, SmallDTable, WignerIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentId {
    #[serde(rename = "sparsity")]
    Sparsity,
    #[serde(rename = "compressibility")]
    Compressibility,
    #[serde(rename = "recover")]
    Recover,
    #[serde(rename = "sweep-measurements")]
    SweepMeasurements,
    #[serde(rename = "baseline-wignerD")]
    BaselineWignerD,
    #[serde(rename = "noise-density")]
    NoiseDensity,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::Sparsity,
        ExperimentId::Compressibility,
        ExperimentId::Recover,
        ExperimentId::SweepMeasurements,
        ExperimentId::BaselineWignerD,
        ExperimentId::NoiseDensity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Sparsity => "sparsity",
            ExperimentId::Compressibility => "compressibility",
            ExperimentId::Recover => "recover",
            ExperimentId::SweepMeasurements => "sweep-measurements",
            ExperimentId::BaselineWignerD => "baseline-wignerD",
            ExperimentId::NoiseDensity => "noise-density",
        }
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|id| id.name().eq_ignore_ascii_case(s)).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|id| id.name()).collect();
            Error::Argument(format!("unknown experiment {s:?}, expected one of {}", names.join(", ")))
        })
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    pub preset: Preset,
    pub n_max: u32,
    /// Grid oversampling; the largest `q` visited by `noise-density`.
    pub oversample: usize,
    pub trials: usize,
    pub seed: u64,
    /// Noise variance relative to the peak field magnitude, in dB.
    pub noise_db: Option<f64>,
    pub rows: Option<usize>,
    /// Fraction of grid rows to select.
    pub density: Option<f64>,
    pub sharing: NoiseSharing,
    pub radius: RadiusRule,
    pub max_iters: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(id: ExperimentId) -> Self {
        let (trials, oversample, noise_db) = match id {
            ExperimentId::Sparsity => (100, 1, None),
            ExperimentId::Recover | ExperimentId::Compressibility => (1, 1, None),
            ExperimentId::NoiseDensity => (25, 5, Some(-40.0)),
            _ => (25, 1, None),
        };
        Self {
            id,
            preset: Preset { speaker: 1, probe: ProbeCase::A },
            n_max: 15,
            oversample,
            trials,
            seed: 0,
            noise_db,
            rows: None,
            density: None,
            sharing: NoiseSharing::Shared,
            radius: RadiusRule::NoiseNorm(1.0),
            max_iters: None,
        }
    }

    pub fn validate(&self) -> Result<BandLimit> {
        let bl = BandLimit::new(self.n_max)?;
        if self.trials == 0 {
            return Err(Error::Argument("trials must be at least 1".into()));
        }
        if self.oversample == 0 {
            return Err(Error::Argument("oversample must be at least 1".into()));
        }
        if let Some(d) = self.density {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::Argument(format!("density {d} outside (0, 1]")));
            }
        }
        if self.noise_db.is_some_and(|x| !x.is_finite()) {
            return Err(Error::Argument("noise level must be finite".into()));
        }
        if self.rows == Some(0) || self.max_iters == Some(0) {
            return Err(Error::Argument("rows and max_iters must be positive".into()));
        }
        Ok(bl)
    }

    fn solver_config(&self, m: f64, noise_std: f64) -> SolverConfig {
        let mut cfg = if noise_std > 0.0 {
            SolverConfig::noisy(self.radius.radius_for(m, noise_std, EPS_FACTOR * noise_std))
        } else {
            SolverConfig::noiseless()
        };
        if let Some(k) = self.max_iters {
            cfg.max_iters = k;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Real(v) => write!(f, "{v}"),
            Cell::Text(v) => f.write_str(v),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cell::Int(v) => s.serialize_i64(*v),
            Cell::Real(v) if v.is_finite() => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Result table: `#` metadata lines, a header row and data rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), metadata: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl fmt::Display) {
        self.metadata.push((key.into(), value.to_string()));
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric column by name; text cells become NaN.
    pub fn reals(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.column(name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[c] {
                    Cell::Int(v) => *v as f64,
                    Cell::Real(v) => *v,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::to_string).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii table")
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let meta: serde_json::Map<String, serde_json::Value> =
            self.metadata.iter().map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect();
        let doc = serde_json::json!({
            "name": self.name,
            "metadata": meta,
            "columns": self.columns,
            "rows": self.rows,
        });
        serde_json::to_writer_pretty(out, &doc).map_err(|e| Error::Io(e.into()))
    }
}

/// SplitMix64 over `(base, tag, a, b)`.
pub fn derive_seed(base: u64, tag: u64, a: u64, b: u64) -> u64 {
    let mut x = base;
    for v in [tag, a, b] {
        x = x.wrapping_add(v.wrapping_mul(0xD1B5_4A32_D192_ED03)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x = z ^ (z >> 31);
    }
    x
}

const TAG_INSTANCE: u64 = 1;
const TAG_SELECT: u64 = 2;
const TAG_NOISE: u64 = 3;
const TAG_SPARSE: u64 = 4;

/// Mean over the values sorted by `total_cmp`, so the result is the same
/// for every permutation of the input.
pub fn order_free_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn min_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

fn provenance(table: &mut Table, spec: &ExperimentSpec) {
    table.meta("experiment", spec.id);
    table.meta("library", concat!("sphcs-core ", env!("CARGO_PKG_VERSION")));
    table.meta("spec", serde_json::to_string(spec).expect("spec serializes"));
    table.meta("seed", spec.seed);
    table.meta("trials", spec.trials);
    table.meta("n_max", spec.n_max);
}

pub fn run(spec: &ExperimentSpec) -> Result<Table> {
    match spec.id {
        ExperimentId::Sparsity => run_sparsity_study(spec),
        ExperimentId::Compressibility => run_compressibility_study(spec),
        ExperimentId::Recover => run_recovery(spec),
        ExperimentId::SweepMeasurements => run_measurement_sweep(spec),
        ExperimentId::BaselineWignerD => run_baseline_wigner_d(spec),
        ExperimentId::NoiseDensity => run_noise_density_study(spec),
    }
}

/// Sparsity levels visited by the sparsity study.
pub fn sparsity_levels(admissible: usize) -> Vec<usize> {
    let mut out: Vec<usize> = [1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128, 160, 192, 224, 256]
        .into_iter()
        .filter(|&s| s <= admissible)
        .collect();
    if out.last() != Some(&admissible) {
        out.push(admissible);
    }
    out
}

/// Mean `s_F` against `s_D` for random `μ = 0` sets with unit values.
pub fn run_sparsity_study(spec: &ExperimentSpec) -> Result<Table> {
    let bl = spec.validate()?;
    let tr = BasisTransform::new(bl);
    let mut table = Table::new(
        "sparsity",
        &["s_d", "trials", "mean_s_f", "min_s_f", "max_s_f", "mean_support_bound", "mean_worst_case_bound"],
    );
    provenance(&mut table, spec);
    table.meta("dims", 2);
    table.meta("max_s_f", bl.fourier_count_2d());
    for s in sparsity_levels(bl.harmonic_count()) {
        let reports = (0..spec.trials as u64)
            .into_par_iter()
            .map(|t| {
                let a = random_sparse_coefficients(bl, s, derive_seed(spec.seed, TAG_SPARSE, s as u64, t), true, ValueMode::Ones)?;
                sparsity_report(&tr, &a, Dims::Two)
            })
            .collect::<Result<Vec<_>>>()?;
        let s_f: Vec<f64> = reports.iter().map(|r| r.s_f as f64).collect();
        let support: Vec<f64> = reports.iter().map(|r| r.support_bound as f64).collect();
        let worst: Vec<f64> = reports.iter().map(|r| r.worst_case_bound as f64).collect();
        table.push(vec![
            s.into(),
            spec.trials.into(),
            order_free_mean(&s_f).into(),
            min_of(&s_f).into(),
            s_f.iter().copied().fold(0.0, f64::max).into(),
            order_free_mean(&support).into(),
            order_free_mean(&worst).into(),
        ]);
    }
    Ok(table)
}

/// A speaker, its probe and the composed coefficients.
#[derive(Debug, Clone)]
pub struct Instance {
    pub speaker: SpeakerModel,
    pub probe: ProbeResponse,
    pub a: WignerCoefficients,
}

impl Instance {
    pub fn new(preset: Preset, band_limit: BandLimit, seed: u64) -> Result<Self> {
        let (speaker, probe, a) = preset.instantiate(band_limit, seed)?;
        Ok(Self { speaker, probe, a })
    }

    /// 2D when the probe is ideal, 3D otherwise.
    pub fn dims(&self) -> Dims {
        if self.a.is_mu_zero_only() {
            Dims::Two
        } else {
            Dims::Three
        }
    }

    /// Coefficient SNR on the speaker coefficients.
    pub fn snr(&self, estimate: &WignerCoefficients) -> Result<(f64, f64)> {
        let est = extract_speaker(estimate, &self.probe)?;
        let m = error_metrics(self.speaker.coefficients.as_slice(), est.as_slice());
        Ok((m.normalized_error, m.snr_db))
    }
}

fn sorted_magnitudes(values: &[Complex64]) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = values.iter().map(|c| c.norm()).enumerate().collect();
    v.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    v
}

/// Tail energy beyond each prefix, summed from the tail so it is exactly
/// zero once only zeros remain.
fn tail_fractions(sorted: &[(usize, f64)]) -> Vec<f64> {
    let total: f64 = sorted.iter().map(|(_, m)| m * m).sum();
    let mut tail = vec![0.0; sorted.len() + 1];
    for k in (0..sorted.len()).rev() {
        tail[k] = tail[k + 1] + sorted[k].1 * sorted[k].1;
    }
    tail.iter().map(|t| if total > 0.0 { t / total } else { 0.0 }).collect()
}

/// Largest number of Fourier coefficients kept by the compressibility study.
pub const COMPRESSIBILITY_MAX_TERMS: usize = 2048;

/// Sorted magnitudes and best-`n_c` truncation errors in both bases, plus
/// the error of truncating in the Fourier basis and mapping back.
pub fn run_compressibility_study(spec: &ExperimentSpec) -> Result<Table> {
    let bl = spec.validate()?;
    let tr = BasisTransform::new(bl);
    let inst = Instance::new(spec.preset, bl, derive_seed(spec.seed, TAG_INSTANCE, 0, 0))?;
    let dims = inst.dims();
    let b = tr.a_to_b(&inst.a, dims)?;
    let mu_max = spec.preset.probe.mu_max();
    let wigner: Vec<Complex64> = inst.a.iter().filter(|(idx, _)| idx.mu.abs() <= mu_max).map(|(_, v)| v).collect();
    let ws = sorted_magnitudes(&wigner);
    let fs = sorted_magnitudes(b.as_slice());
    let w_tail = tail_fractions(&ws);
    let f_tail = tail_fractions(&fs);
    let terms = count_nonzero(b.as_slice(), SPARSITY_THRESHOLD).clamp(1, COMPRESSIBILITY_MAX_TERMS);
    let back = (1..=terms)
        .into_par_iter()
        .map(|n_c| {
            let mut kept = FourierCoefficients::zeros(bl, dims);
            for &(i, _) in &fs[..n_c] {
                kept.as_mut_slice()[i] = b.as_slice()[i];
            }
            let (ah, _) = tr.b_to_a(&kept)?;
            Ok(error_metrics(inst.a.as_slice(), ah.as_slice()).normalized_error)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut table = Table::new(
        "compressibility",
        &["n_c", "wigner_mag_db", "fourier_mag_db", "wigner_error_db", "fourier_error_db", "backtransform_error_db"],
    );
    provenance(&mut table, spec);
    table.meta("preset", spec.preset);
    table.meta("dims", dims.count());
    table.meta("wigner_terms", ws.len());
    table.meta("fourier_terms", fs.len());
    let mag_db = |s: &[(usize, f64)], k: usize| match s.get(k) {
        Some(&(_, m)) if s[0].1 > 0.0 => 20.0 * (m / s[0].1).log10(),
        _ => f64::NEG_INFINITY,
    };
    for n_c in 1..=terms {
        table.push(vec![
            n_c.into(),
            mag_db(&ws, n_c - 1).into(),
            mag_db(&fs, n_c - 1).into(),
            db(w_tail[n_c.min(ws.len())]).into(),
            db(f_tail[n_c.min(fs.len())]).into(),
            db(back[n_c - 1]).into(),
        ]);
    }
    Ok(table)
}

/// Outcome of one compressive recovery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsOutcome {
    pub normalized_error: f64,
    pub snr_db: f64,
    pub m_rows: usize,
    pub m_phys: usize,
    pub status: SolverStatus,
    pub iterations: usize,
}

fn noise_std(spec: &ExperimentSpec, tr: &BasisTransform, a: &WignerCoefficients, grid: &SampleGrid) -> Result<f64> {
    match spec.noise_db {
        Some(level) => Ok(noise_std_from_db(level, peak_magnitude(&tr.a_to_b(a, grid.dims())?, grid)?)),
        None => Ok(0.0),
    }
}

fn grid_for(inst: &Instance, bl: BandLimit, q: usize) -> Result<(SampleGrid, PhysicalMap)> {
    let g = SampleGrid::new(bl, q, inst.dims())?;
    let map = PhysicalMap::new(&g);
    Ok((g, map))
}

/// One noisy or noiseless recovery from `m_rows` random rows.
#[allow(clippy::too_many_arguments)]
pub fn cs_trial(
    spec: &ExperimentSpec,
    tr: &BasisTransform,
    inst: &Instance,
    grid: &SampleGrid,
    map: &PhysicalMap,
    m_rows: usize,
    select_seed: u64,
    noise_seed: u64,
) -> Result<CsOutcome> {
    let sel = if m_rows == grid.len() { SampleSelection::full(grid, map) } else { select_rows(grid, map, m_rows, select_seed)? };
    let sd = noise_std(spec, tr, &inst.a, grid)?;
    let ms = simulate(&inst.a, grid, map, &sel, sd, spec.sharing, noise_seed)?;
    let cfg = spec.solver_config(sel.m_rows() as f64, sd);
    let rep = recover_field(&ms, tr, &cfg, None)?;
    let (normalized_error, snr_db) = inst.snr(&rep.coefficients)?;
    Ok(CsOutcome { normalized_error, snr_db, m_rows: sel.m_rows(), m_phys: sel.m_phys, status: rep.status, iterations: rep.iterations })
}

/// Rows used by one trial of the recovery demo; 400 of 1024 on the 2D
/// Nyquist grid at `n_max = 15`.
pub fn default_rows(grid: &SampleGrid) -> usize {
    (grid.len() * 25 / 64).max(1)
}

/// Noiseless demo from a fixed row budget, with the full-grid classical
/// inversion alongside.
pub fn run_recovery(spec: &ExperimentSpec) -> Result<Table> {
    let bl = spec.validate()?;
    let tr = BasisTransform::new(bl);
    let mut table = Table::new(
        "recover",
        &[
            "trial",
            "m_rows",
            "m_phys",
            "s_d",
            "s_f",
            "status",
            "iterations",
            "normalized_error",
            "coef_snr_db",
            "wigner_snr_db",
            "field_snr_db",
            "classical_snr_db",
        ],
    );
    provenance(&mut table, spec);
    table.meta("preset", spec.preset);
    table.meta("oversample", spec.oversample);
    table.meta("classical_min_rows", (2 * spec.n_max + 1) * (spec.n_max + 1));
    let rows = (0..spec.trials as u64)
        .into_par_iter()
        .map(|t| {
            let inst = Instance::new(spec.preset, bl, derive_seed(spec.seed, TAG_INSTANCE, t, 0))?;
            let (g, map) = grid_for(&inst, bl, spec.oversample)?;
            let m_rows = spec.rows.unwrap_or_else(|| default_rows(&g)).min(g.len());
            let sel = select_rows(&g, &map, m_rows, derive_seed(spec.seed, TAG_SELECT, t, m_rows as u64))?;
            let sd = noise_std(spec, &tr, &inst.a, &g)?;
            let noise_seed = derive_seed(spec.seed, TAG_NOISE, t, 0);
            let ms = simulate(&inst.a, &g, &map, &sel, sd, spec.sharing, noise_seed)?;
            let rep = recover_field(&ms, &tr, &spec.solver_config(m_rows as f64, sd), Some(&inst.a))?;
            let (nerr, snr) = inst.snr(&rep.coefficients)?;
            let op = DftOperator::new(&g, &sel)?;
            let truth_b = tr.a_to_b(&inst.a, g.dims())?;
            let field = error_metrics(&op.full_field(truth_b.as_slice()), &op.full_field(rep.fourier.as_slice()));
            let full = SampleSelection::full(&g, &map);
            let ms_full = simulate(&inst.a, &g, &map, &full, sd, spec.sharing, noise_seed)?;
            let (ac, _) = classical_inversion(&ms_full, &tr)?;
            let (_, classical) = inst.snr(&ac)?;
            Ok(vec![
                Cell::from(t as usize),
                rep.m_rows.into(),
                rep.m_phys.into(),
                rep.s_d.into(),
                rep.s_f.into(),
                format!("{:?}", rep.status).into(),
                rep.iterations.into(),
                nerr.into(),
                snr.into(),
                rep.metrics.map_or(f64::NAN, |m| m.snr_db).into(),
                field.snr_db.into(),
                classical.into(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

/// Per-trial results at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub preset: Preset,
    pub outcomes: Vec<CsOutcome>,
}

impl SweepPoint {
    pub fn snrs(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.snr_db).collect()
    }

    pub fn mean_snr(&self) -> f64 {
        order_free_mean(&self.snrs())
    }

    pub fn mean_m_phys(&self) -> f64 {
        order_free_mean(&self.outcomes.iter().map(|o| o.m_phys as f64).collect::<Vec<_>>())
    }

    pub fn converged(&self) -> usize {
        self.outcomes.iter().filter(|o| o.status == SolverStatus::Converged).count()
    }
}

/// `spec.trials` recoveries of `preset` from `m_rows` rows on the
/// `spec.oversample` grid. Trial `t` uses the same speaker at every point.
pub fn sweep_point(spec: &ExperimentSpec, tr: &BasisTransform, preset: Preset, m_rows: usize) -> Result<SweepPoint> {
    let bl = spec.validate()?;
    let outcomes = (0..spec.trials as u64)
        .into_par_iter()
        .map(|t| {
            let inst = Instance::new(preset, bl, derive_seed(spec.seed, TAG_INSTANCE, t, preset.speaker as u64))?;
            let (g, map) = grid_for(&inst, bl, spec.oversample)?;
            let sel_seed = derive_seed(spec.seed, TAG_SELECT, t, m_rows as u64);
            cs_trial(spec, tr, &inst, &g, &map, m_rows.min(g.len()), sel_seed, derive_seed(spec.seed, TAG_NOISE, t, m_rows as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepPoint { preset, outcomes })
}

/// Row counts for a sweep on a grid of `len` rows.
pub fn sweep_rows(spec: &ExperimentSpec, len: usize) -> Vec<usize> {
    if let Some(r) = spec.rows {
        return vec![r.min(len)];
    }
    if let Some(d) = spec.density {
        return vec![((d * len as f64).round() as usize).clamp(1, len)];
    }
    let mut v: Vec<usize> = [10, 15, 20, 25, 30, 40, 50, 64].iter().map(|&k| (len * k / 64).max(1)).collect();
    v.dedup();
    v
}

fn sweep_presets(spec: &ExperimentSpec) -> Vec<Preset> {
    (1..=3).map(|speaker| Preset { speaker, probe: spec.preset.probe }).collect()
}

/// Mean error and SNR against row count for the three speakers.
pub fn run_measurement_sweep(spec: &ExperimentSpec) -> Result<Table> {
    let bl = spec.validate()?;
    let tr = BasisTransform::new(bl);
    let mut table = Table::new(
        "sweep-measurements",
        &["preset", "m_rows", "trials", "mean_m_phys", "mean_normalized_error", "mean_snr_db", "min_snr_db", "converged"],
    );
    provenance(&mut table, spec);
    table.meta("oversample", spec.oversample);
    for preset in sweep_presets(spec) {
        let dims = if preset.probe == ProbeCase::A { Dims::Two } else { Dims::Three };
        let len = SampleGrid::new(bl, spec.oversample, dims)?.len();
        for m_rows in sweep_rows(spec, len) {
            let p = sweep_point(spec, &tr, preset, m_rows)?;
            let errs: Vec<f64> = p.outcomes.iter().map(|o| o.normalized_error).collect();
            table.push(vec![
                preset.to_string().into(),
                m_rows.into(),
                spec.trials.into(),
                p.mean_m_phys().into(),
                order_free_mean(&errs).into(),
                p.mean_snr().into(),
                min_of(&p.snrs()).into(),
                p.converged().into(),
            ]);
        }
    }
    Ok(table)
}

/// Row-weighted `μ = 0` Wigner D matrix on the distinct physical poses of a
/// selection. Row weight `√|sin β|`; columns scaled by `√(2n+1)` so the
/// unknowns are `a_n^{m0} / √(2n+1)`. Returns the operator, the row weights
/// and one representative torus row per pose.
pub fn wigner_d_baseline_operator(
    grid: &SampleGrid,
    map: &PhysicalMap,
    selection: &SampleSelection,
) -> Result<(DenseOperator, Vec<f64>, Vec<usize>)> {
    if grid.dims() != Dims::Two {
        return Err(Error::Argument("the Wigner D baseline is defined on the 2D grid".into()));
    }
    let bl = grid.band_limit();
    let n_max = bl.n_max() as i32;
    let mut seen = std::collections::BTreeSet::new();
    let reps: Vec<usize> = selection.rows.iter().copied().filter(|&r| seen.insert(map.class_of(r))).collect();
    let cols = bl.harmonic_count();
    let mut data = Vec::with_capacity(reps.len() * cols);
    let mut weights = Vec::with_capacity(reps.len());
    for &r in &reps {
        let (_, beta, gamma) = grid.angles(r);
        // sin(π) is not exactly zero in floating point.
        let w = if grid.is_polar(r) { 0.0 } else { beta.sin().abs().sqrt() };
        let table = SmallDTable::new(bl, beta, true);
        for n in 0..=n_max {
            let s = ((2 * n + 1) as f64).sqrt();
            for m in -n..=n {
                data.push(Complex64::from_polar(w * s * table.get(n, 0, m), -(m as f64) * gamma));
            }
        }
        weights.push(w);
    }
    Ok((DenseOperator::new(reps.len(), cols, data)?, weights, reps))
}

/// Wigner coefficients from the unknowns of [`wigner_d_baseline_operator`].
pub fn wigner_d_baseline_coefficients(band_limit: BandLimit, x: &[Complex64]) -> Result<WignerCoefficients> {
    let mut a = WignerCoefficients::zeros(band_limit);
    let mut k = 0;
    for n in 0..=band_limit.n_max() as i32 {
        let s = ((2 * n + 1) as f64).sqrt();
        for m in -n..=n {
            a.set(WignerIndex::new(n, m, 0), x[k] * s)?;
            k += 1;
        }
    }
    Ok(a)
}

/// Paired Fourier and on-grid Wigner D recoveries from the same rows.
pub fn baseline_trial(
    spec: &ExperimentSpec,
    tr: &BasisTransform,
    inst: &Instance,
    m_rows: usize,
    t: u64,
) -> Result<(CsOutcome, f64)> {
    let bl = tr.band_limit();
    let (g, map) = grid_for(inst, bl, spec.oversample)?;
    let m_rows = m_rows.min(g.len());
    let sel_seed = derive_seed(spec.seed, TAG_SELECT, t, m_rows as u64);
    let noise_seed = derive_seed(spec.seed, TAG_NOISE, t, m_rows as u64);
    let fourier = cs_trial(spec, tr, inst, &g, &map, m_rows, sel_seed, noise_seed)?;
    let sel = if m_rows == g.len() { SampleSelection::full(&g, &map) } else { select_rows(&g, &map, m_rows, sel_seed)? };
    let sd = noise_std(spec, tr, &inst.a, &g)?;
    let ms = simulate(&inst.a, &g, &map, &sel, sd, spec.sharing, noise_seed)?;
    let (op, w, reps) = wigner_d_baseline_operator(&g, &map, &sel)?;
    let y: Vec<Complex64> = reps
        .iter()
        .zip(&w)
        .map(|(r, wi)| ms.values[ms.selection.rows.binary_search(r).expect("representative is selected")] * *wi)
        .collect();
    let cfg = spec.solver_config(w.iter().map(|v| v * v).sum(), sd);
    let res = solve_qcbp(&op, &y, &cfg)?;
    let a = wigner_d_baseline_coefficients(bl, &res.solution)?;
    Ok((fourier, inst.snr(&a)?.1))
}

/// Fourier against on-grid Wigner D recovery for the `μ = 0` preset.
pub fn run_baseline_wigner_d(spec: &ExperimentSpec) -> Result<Table> {
    let bl = spec.validate()?;
    if spec.preset.probe != ProbeCase::A {
        return Err(Error::Argument("the Wigner D baseline needs an ideal-probe preset (C1a, C2a, C3a)".into()));
    }
    let tr = BasisTransform::new(bl);
    let mut table = Table::new(
        "baseline-wignerD",
        &["m_rows", "trials", "mean_m_phys", "fourier_snr_db", "wigner_d_snr_db", "fourier_wins"],
    );
    provenance(&mut table, spec);
    table.meta("preset", spec.preset);
    table.meta("row_weight", "sqrt(|sin beta|)");
    let len = SampleGrid::new(bl, spec.oversample, Dims::Two)?.len();
    for m_rows in sweep_rows(spec, len) {
        let pairs = (0..spec.trials as u64)
            .into_par_iter()
            .map(|t| {
                let inst = Instance::new(spec.preset, bl, derive_seed(spec.seed, TAG_INSTANCE, t, spec.preset.speaker as u64))?;
                baseline_trial(spec, &tr, &inst, m_rows, t)
            })
            .collect::<Result<Vec<_>>>()?;
        let f: Vec<f64> = pairs.iter().map(|p| p.0.snr_db).collect();
        let w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let phys: Vec<f64> = pairs.iter().map(|p| p.0.m_phys as f64).collect();
        table.push(vec![
            m_rows.into(),
            spec.trials.into(),
            order_free_mean(&phys).into(),
            order_free_mean(&f).into(),
            order_free_mean(&w).into(),
            f.iter().zip(&w).filter(|(a, b)| a >= b).count().into(),
        ]);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseArm {
    /// Full-grid inversion.
    Classical,
    /// Compressive recovery from a fixed row count.
    FixedRows,
    /// Compressive recovery from a fixed fraction of the grid.
    FixedDensity,
}

impl NoiseArm {
    pub fn name(self) -> &'static str {
        match self {
            NoiseArm::Classical => "classical",
            NoiseArm::FixedRows => "cs-fixed-rows",
            NoiseArm::FixedDensity => "cs-fixed-density",
        }
    }
}

/// Default density of the fixed-density arm.
pub const DEFAULT_DENSITY: f64 = 1.0 / 3.0;

/// Per-trial SNRs of one arm at oversampling `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub arm: NoiseArm,
    pub q: usize,
    pub m_rows: usize,
    pub snrs: Vec<f64>,
    pub m_phys: Vec<f64>,
    pub converged: usize,
}

pub fn noise_arm(spec: &ExperimentSpec, tr: &BasisTransform, arm: NoiseArm, q: usize) -> Result<ArmResult> {
    let bl = spec.validate()?;
    let outcomes = (0..spec.trials as u64)
        .into_par_iter()
        .map(|t| {
            let inst = Instance::new(spec.preset, bl, derive_seed(spec.seed, TAG_INSTANCE, t, spec.preset.speaker as u64))?;
            let (g, map) = grid_for(&inst, bl, q)?;
            let noise_seed = derive_seed(spec.seed, TAG_NOISE, t, q as u64);
            match arm {
                NoiseArm::Classical => {
                    let full = SampleSelection::full(&g, &map);
                    let sd = noise_std(spec, tr, &inst.a, &g)?;
                    let ms = simulate(&inst.a, &g, &map, &full, sd, spec.sharing, noise_seed)?;
                    let (ac, _) = classical_inversion(&ms, tr)?;
                    let (e, s) = inst.snr(&ac)?;
                    Ok(CsOutcome {
                        normalized_error: e,
                        snr_db: s,
                        m_rows: g.len(),
                        m_phys: map.class_count(),
                        status: SolverStatus::Converged,
                        iterations: 0,
                    })
                }
                NoiseArm::FixedRows | NoiseArm::FixedDensity => {
                    let m_rows = arm_rows(spec, arm, &inst, bl, q)?;
                    let sel_seed = derive_seed(spec.seed, TAG_SELECT, t, q as u64);
                    cs_trial(spec, tr, &inst, &g, &map, m_rows, sel_seed, noise_seed)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ArmResult {
        arm,
        q,
        m_rows: outcomes.first().map_or(0, |o| o.m_rows),
        snrs: outcomes.iter().map(|o| o.snr_db).collect(),
        m_phys: outcomes.iter().map(|o| o.m_phys as f64).collect(),
        converged: outcomes.iter().filter(|o| o.status == SolverStatus::Converged).count(),
    })
}

fn arm_rows(spec: &ExperimentSpec, arm: NoiseArm, inst: &Instance, bl: BandLimit, q: usize) -> Result<usize> {
    let len_q = SampleGrid::new(bl, q, inst.dims())?.len();
    Ok(match arm {
        NoiseArm::FixedRows => {
            let base = SampleGrid::new(bl, 1, inst.dims())?;
            spec.rows.unwrap_or_else(|| default_rows(&base)).min(len_q)
        }
        _ => ((spec.density.unwrap_or(DEFAULT_DENSITY) * len_q as f64).round() as usize).clamp(1, len_q),
    })
}

/// Classical and compressive SNR against grid oversampling at fixed noise.
pub fn run_noise_density_study(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    if spec.noise_db.is_none() {
        return Err(Error::Argument("noise-density needs a noise level".into()));
    }
    let tr = BasisTransform::new(BandLimit::new(spec.n_max)?);
    let mut table = Table::new(
        "noise-density",
        &["arm", "q", "m_rows", "mean_m_phys", "mean_snr_db", "min_snr_db", "margin_db", "converged"],
    );
    provenance(&mut table, spec);
    table.meta("preset", spec.preset);
    table.meta("noise_db", spec.noise_db.unwrap_or_default());
    table.meta("density", spec.density.unwrap_or(DEFAULT_DENSITY));
    let qs: Vec<usize> = (1..=spec.oversample).collect();
    let classical = qs.iter().map(|&q| noise_arm(spec, &tr, NoiseArm::Classical, q)).collect::<Result<Vec<_>>>()?;
    for arm in [NoiseArm::Classical, NoiseArm::FixedRows, NoiseArm::FixedDensity] {
        for (i, &q) in qs.iter().enumerate() {
            let r = if arm == NoiseArm::Classical { classical[i].clone() } else { noise_arm(spec, &tr, arm, q)? };
            let mean = order_free_mean(&r.snrs);
            table.push(vec![
                arm.name().into(),
                q.into(),
                r.m_rows.into(),
                order_free_mean(&r.m_phys).into(),
                mean.into(),
                min_of(&r.snrs).into(),
                (mean - order_free_mean(&classical[i].snrs)).into(),
                r.converged.into(),
            ]);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(id: ExperimentId) -> ExperimentSpec {
        ExperimentSpec { n_max: 4, trials: 3, ..ExperimentSpec::new(id) }
    }

    #[test]
    fn ids_round_trip() {
        for id in ExperimentId::ALL {
            assert_eq!(id.name().parse::<ExperimentId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.name()));
        }
        assert!("nope".parse::<ExperimentId>().is_err());
    }

    #[test]
    fn derived_seeds_differ_per_slot() {
        let a = derive_seed(1, 2, 3, 4);
        assert_eq!(a, derive_seed(1, 2, 3, 4));
        assert_ne!(a, derive_seed(1, 2, 4, 3));
        assert_ne!(a, derive_seed(2, 2, 3, 4));
    }

    #[test]
    fn mean_ignores_order() {
        let v = [1e16, 1.0, -1e16, 3.5, 0.1, 0.2];
        let mut w = v;
        w.reverse();
        assert_eq!(order_free_mean(&v).to_bits(), order_free_mean(&w).to_bits());
    }

    #[test]
    fn csv_and_json_layout() {
        let mut t = Table::new("demo", &["a", "b", "c"]);
        t.meta("seed", 3);
        t.push(vec![1usize.into(), f64::NEG_INFINITY.into(), "x".into()]);
        t.push(vec![2usize.into(), 0.5.into(), "y".into()]);
        assert_eq!(t.to_csv_string(), "# seed: 3\na,b,c\n1,-inf,x\n2,0.5,y\n");
        let mut buf = Vec::new();
        t.write_json(&mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["rows"][0][1], "-inf");
        assert_eq!(v["rows"][1][1], 0.5);
        assert_eq!(v["metadata"]["seed"], "3");
        assert_eq!(t.reals("b").unwrap()[1], 0.5);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let s = ExperimentSpec { trials: 0, ..small(ExperimentId::Sparsity) };
        assert!(run(&s).is_err());
        let s = ExperimentSpec { density: Some(1.5), ..small(ExperimentId::Sparsity) };
        assert!(run(&s).is_err());
        let s = ExperimentSpec { preset: "C1b".parse().unwrap(), ..small(ExperimentId::BaselineWignerD) };
        assert!(run(&s).is_err());
    }

    #[test]
    fn baseline_operator_weights_poles_to_zero() {
        let bl = BandLimit::new(3).unwrap();
        let g = SampleGrid::new(bl, 1, Dims::Two).unwrap();
        let map = PhysicalMap::new(&g);
        let sel = SampleSelection::full(&g, &map);
        let (op, w, reps) = wigner_d_baseline_operator(&g, &map, &sel).unwrap();
        use crate::operator::LinearOperator;
        assert_eq!(op.rows(), map.class_count());
        for (r, &wi) in reps.iter().zip(&w) {
            if g.is_polar(*r) {
                assert_eq!(wi, 0.0);
            } else {
                assert!(wi > 0.0);
            }
        }
    }

    #[test]
    fn baseline_operator_reproduces_field() {
        let bl = BandLimit::new(4).unwrap();
        let g = SampleGrid::new(bl, 1, Dims::Two).unwrap();
        let map = PhysicalMap::new(&g);
        let sel = select_rows(&g, &map, 30, 5).unwrap();
        let a = random_sparse_coefficients(bl, 6, 8, true, ValueMode::RandomPhase).unwrap();
        let ms = simulate(&a, &g, &map, &sel, 0.0, NoiseSharing::Shared, 0).unwrap();
        let (op, w, reps) = wigner_d_baseline_operator(&g, &map, &sel).unwrap();
        let mut x = Vec::new();
        for n in 0..=4 {
            for m in -n..=n {
                x.push(a.get(WignerIndex::new(n, m, 0)).unwrap() / ((2 * n + 1) as f64).sqrt());
            }
        }
        use crate::operator::LinearOperator;
        let mut y = vec![Complex64::new(0.0, 0.0); op.rows()];
        op.forward(&x, &mut y);
        for ((yi, r), wi) in y.iter().zip(&reps).zip(&w) {
            let v = ms.values[ms.selection.rows.binary_search(r).unwrap()] * *wi;
            assert!((yi - v).norm() < 1e-12);
        }
        let back = wigner_d_baseline_coefficients(bl, &x).unwrap();
        assert!(error_metrics(a.as_slice(), back.as_slice()).normalized_error < 1e-28);
    }
}
