use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sphcs_core::experiments::{self, derive_seed, Cell, ExperimentId, ExperimentSpec, Table};
use sphcs_core::grid::select_rows;
use sphcs_core::io;
use sphcs_core::operator::{noise_std_from_db, peak_magnitude, simulate};
use sphcs_core::recovery::{error_metrics, recover_field, RadiusRule};
use sphcs_core::synth::{random_sparse_coefficients, save_sh_coefficients, wavenumber, ValueMode, DEFAULT_R_AB};
use sphcs_core::{
    BandLimit, BasisTransform, Dims, NoiseSharing, PhysicalMap, Preset, SampleGrid, SampleSelection, SolverConfig,
    SolverOverrides, SolverStatus,
};

const EXIT_ARGUMENT: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "sphcs", version, about = "Compressive recovery of Wigner D / spherical harmonic series from grid samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Problem and grid sizes.
    Tables(TablesArgs),
    /// Write a coefficient set for a preset or a random sparse draw.
    Synth(SynthArgs),
    /// Sample a coefficient file on the grid.
    Measure(MeasureArgs),
    /// Recover coefficients from a measurement file.
    Recover(RecoverArgs),
    /// Run a numerical study.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Sharing {
    Shared,
    PerRow,
}

impl From<Sharing> for NoiseSharing {
    fn from(s: Sharing) -> Self {
        match s {
            Sharing::Shared => NoiseSharing::Shared,
            Sharing::PerRow => NoiseSharing::PerRow,
        }
    }
}

#[derive(Args)]
struct Output {
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// With `--out`, json also writes a sidecar next to the CSV.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct TablesArgs {
    #[arg(long, default_value_t = 15)]
    nmax: u32,
    /// Largest oversampling factor listed.
    #[arg(long, default_value_t = 1)]
    oversample: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 15)]
    nmax: u32,
    #[arg(long, default_value = "C1a")]
    preset: String,
    /// Draw this many unit coefficients instead of a preset.
    #[arg(long)]
    sparse: Option<usize>,
    /// Let random draws use every μ (3D).
    #[arg(long)]
    all_mu: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Wigner coefficient file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the speaker's field coefficients as `n m re im`.
    #[arg(long)]
    sh_out: Option<PathBuf>,
}

#[derive(Args)]
struct MeasureArgs {
    /// Wigner coefficient file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    oversample: usize,
    #[arg(long, conflicts_with = "density")]
    rows: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise variance relative to the peak field magnitude.
    #[arg(long, allow_hyphen_values = true)]
    noise_db: Option<f64>,
    #[arg(long, value_enum, default_value = "shared")]
    sharing: Sharing,
    /// Measurement file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the selected poses.
    #[arg(long)]
    selection_out: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    /// Measurement file.
    #[arg(long)]
    input: PathBuf,
    /// Reference coefficients for error metrics.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// JSON solver settings: radius, max_iters, tol_primal, tol_dual.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Radius as a multiple of the expected noise norm.
    #[arg(long, default_value_t = 1.0)]
    radius_factor: f64,
    /// Solver trace as CSV `iter,objective,residual`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Recovered Wigner coefficients.
    #[arg(long)]
    coefficients: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ExperimentArgs {
    /// One of sparsity, compressibility, recover, sweep-measurements,
    /// baseline-wignerD, noise-density.
    id: String,
    #[arg(long)]
    nmax: Option<u32>,
    #[arg(long)]
    oversample: Option<usize>,
    #[arg(long, conflicts_with = "density")]
    rows: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    noise_db: Option<f64>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_enum)]
    sharing: Option<Sharing>,
    #[arg(long)]
    radius_factor: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[command(flatten)]
    output: Output,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: EXIT_ARGUMENT, error }
    }
}

impl From<sphcs_core::Error> for Failure {
    fn from(e: sphcs_core::Error) -> Self {
        Self { code: EXIT_ARGUMENT, error: e.into() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ARGUMENT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Tables(a) => tables(a),
        Command::Synth(a) => synth(a),
        Command::Measure(a) => measure(a),
        Command::Recover(a) => recover(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

/// CSV to `--out` (plus a JSON sidecar with `--format json`), or the chosen
/// format on stdout.
fn emit(table: &Table, output: &Output) -> anyhow::Result<()> {
    match &output.out {
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            match output.format {
                Format::Csv => table.write_csv(&mut lock)?,
                Format::Json => {
                    table.write_json(&mut lock)?;
                    writeln!(lock)?;
                }
            }
        }
        Some(path) => {
            let mut w = create(path)?;
            table.write_csv(&mut w)?;
            w.flush()?;
            if output.format == Format::Json {
                let side = path.with_extension("json");
                if side == *path {
                    bail!("--out {} would be overwritten by its JSON sidecar", path.display());
                }
                let mut w = create(&side)?;
                table.write_json(&mut w)?;
                w.flush()?;
            }
        }
    }
    Ok(())
}

fn tables(a: TablesArgs) -> Result<(), Failure> {
    let bl = BandLimit::new(a.nmax)?;
    if a.oversample == 0 {
        return Err(anyhow::anyhow!("--oversample must be at least 1").into());
    }
    let mut t = Table::new(
        "tables",
        &["dims", "q", "side", "rows", "physical_classes", "wigner_unknowns", "fourier_unknowns", "classical_min_rows"],
    );
    t.meta("n_max", a.nmax);
    for dims in [Dims::Two, Dims::Three] {
        for q in 1..=a.oversample {
            let g = SampleGrid::new(bl, q, dims)?;
            let map = PhysicalMap::new(&g);
            let (unknowns, fourier) = match dims {
                Dims::Two => (bl.harmonic_count(), bl.fourier_count_2d()),
                Dims::Three => (bl.wigner_count(), bl.fourier_count_3d()),
            };
            let min_rows = (2 * a.nmax as usize + 1) * (a.nmax as usize + 1);
            t.push(vec![
                dims.count().into(),
                q.into(),
                g.side().into(),
                g.len().into(),
                map.class_count().into(),
                unknowns.into(),
                fourier.into(),
                if dims == Dims::Two { Cell::from(min_rows) } else { Cell::from("") },
            ]);
        }
    }
    emit(&t, &a.output)?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    let bl = BandLimit::new(a.nmax)?;
    let coeffs = match a.sparse {
        Some(s) => {
            if a.sh_out.is_some() {
                return Err(anyhow::anyhow!("--sh-out needs a preset, not --sparse").into());
            }
            random_sparse_coefficients(bl, s, a.seed, !a.all_mu, ValueMode::Ones)?
        }
        None => {
            let preset: Preset = a.preset.parse()?;
            let (speaker, _, coeffs) = preset.instantiate(bl, a.seed)?;
            if let Some(p) = &a.sh_out {
                save_sh_coefficients(p, &speaker.coefficients, DEFAULT_R_AB, wavenumber(speaker.frequency_hz))?;
            }
            coeffs
        }
    };
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            io::write_wigner(&mut w, &coeffs)?;
            w.flush().map_err(anyhow::Error::from)?;
        }
        None => io::write_wigner(std::io::stdout().lock(), &coeffs)?,
    }
    Ok(())
}

fn measure(a: MeasureArgs) -> Result<(), Failure> {
    let coeffs = io::read_wigner(open(&a.input)?)?;
    let bl = coeffs.band_limit();
    let dims = if coeffs.is_mu_zero_only() { Dims::Two } else { Dims::Three };
    let grid = SampleGrid::new(bl, a.oversample, dims)?;
    let map = PhysicalMap::new(&grid);
    let m_rows = match (a.rows, a.density) {
        (Some(r), _) => Some(r),
        (None, Some(d)) if d > 0.0 && d <= 1.0 => Some(((d * grid.len() as f64).round() as usize).max(1)),
        (None, Some(d)) => return Err(anyhow::anyhow!("--density {d} outside (0, 1]").into()),
        (None, None) => None,
    };
    let sel = match m_rows {
        Some(r) if r < grid.len() => select_rows(&grid, &map, r, a.seed)?,
        Some(r) if r > grid.len() => return Err(anyhow::anyhow!("--rows {r} exceeds the {} grid rows", grid.len()).into()),
        _ => SampleSelection::full(&grid, &map),
    };
    let sd = match a.noise_db {
        Some(level) => {
            let b = BasisTransform::new(bl).a_to_b(&coeffs, dims)?;
            noise_std_from_db(level, peak_magnitude(&b, &grid)?)
        }
        None => 0.0,
    };
    let ms = simulate(&coeffs, &grid, &map, &sel, sd, a.sharing.into(), derive_seed(a.seed, 3, 0, 0))?;
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            io::write_measurements(&mut w, &ms)?;
            w.flush().map_err(anyhow::Error::from)?;
        }
        None => io::write_measurements(std::io::stdout().lock(), &ms)?,
    }
    if let Some(p) = &a.selection_out {
        let mut w = create(p)?;
        io::write_selection(&mut w, &grid, &map, &sel)?;
        w.flush().map_err(anyhow::Error::from)?;
    }
    Ok(())
}

fn recover(a: RecoverArgs) -> Result<(), Failure> {
    let ms = io::read_measurements(open(&a.input)?)?;
    let bl = ms.grid.band_limit();
    let truth = a.truth.as_deref().map(|p| io::read_wigner(open(p)?).map_err(anyhow::Error::from)).transpose()?;
    let base = if ms.noise_std > 0.0 {
        SolverConfig::noisy(RadiusRule::NoiseNorm(a.radius_factor).radius(&ms))
    } else {
        SolverConfig::noiseless()
    };
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            SolverOverrides::from_json(&text)?.apply(base)
        }
        None => base,
    };
    cfg.trace = a.trace.is_some();
    cfg.validate()?;
    let tr = BasisTransform::new(bl);
    let report = recover_field(&ms, &tr, &cfg, truth.as_ref())?;
    if let Some(p) = &a.trace {
        let mut w = create(p)?;
        sphcs_core::solver::write_trace(&report.trace, &mut w).map_err(anyhow::Error::from)?;
        w.flush().map_err(anyhow::Error::from)?;
    }
    if let Some(p) = &a.coefficients {
        let mut w = create(p)?;
        io::write_wigner(&mut w, &report.coefficients)?;
        w.flush().map_err(anyhow::Error::from)?;
    }
    let mut t = Table::new(
        "recover",
        &[
            "m_rows",
            "m_phys",
            "status",
            "iterations",
            "radius",
            "residual",
            "s_d",
            "s_f",
            "normalized_error",
            "snr_db",
            "max_inversion_residual",
            "runtime_s",
        ],
    );
    t.meta("input", a.input.display());
    t.meta("n_max", bl.n_max());
    let (nerr, snr) = match (&truth, report.metrics) {
        (Some(truth), _) => {
            let m = error_metrics(truth.as_slice(), report.coefficients.as_slice());
            (m.normalized_error, m.snr_db)
        }
        _ => (f64::NAN, f64::NAN),
    };
    t.push(vec![
        report.m_rows.into(),
        report.m_phys.into(),
        format!("{:?}", report.status).into(),
        report.iterations.into(),
        report.radius.into(),
        report.solver_residual.into(),
        report.s_d.into(),
        report.s_f.into(),
        nerr.into(),
        snr.into(),
        report.inversion.max_residual().into(),
        report.runtime_s.into(),
    ]);
    emit(&t, &a.output)?;
    if report.status != SolverStatus::Converged {
        return Err(Failure {
            code: EXIT_NOT_CONVERGED,
            error: anyhow::anyhow!("solver stopped with status {:?} after {} iterations", report.status, report.iterations),
        });
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<(), Failure> {
    let id: ExperimentId = a.id.parse()?;
    let mut spec = ExperimentSpec::new(id);
    if let Some(v) = a.nmax {
        spec.n_max = v;
    }
    if let Some(v) = a.oversample {
        spec.oversample = v;
    }
    if let Some(v) = a.trials {
        spec.trials = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.preset {
        spec.preset = v.parse()?;
    }
    if let Some(v) = a.sharing {
        spec.sharing = v.into();
    }
    if let Some(c) = a.radius_factor {
        spec.radius = RadiusRule::NoiseNorm(c);
    }
    spec.noise_db = a.noise_db.or(spec.noise_db);
    spec.rows = a.rows;
    spec.density = a.density;
    spec.max_iters = a.max_iters;
    spec.validate()?;
    let table = experiments::run(&spec)?;
    emit(&table, &a.output)?;
    Ok(())
}
