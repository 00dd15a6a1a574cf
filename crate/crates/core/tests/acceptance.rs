//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sphcs_core::experiments::{noise_arm, sweep_point, ExperimentId, ExperimentSpec, Instance, NoiseArm};
use sphcs_core::grid::select_rows;
use sphcs_core::operator::{estimate_norm, simulate, DenseOperator};
use sphcs_core::recovery::error_metrics;
use sphcs_core::solver::solve_qcbp;
use sphcs_core::synth::{random_sparse_coefficients, ValueMode};
use sphcs_core::transform::{sparsity_report, wigner_series_value};
use sphcs_core::wigner::{wigner_d, wigner_d_fourier_synthesis};
use sphcs_core::{
    BandLimit, BasisTransform, Complex64, Dims, DftOperator, LinearOperator, NoiseSharing, PhysicalMap, Preset, SampleGrid,
    SampleSelection, SolverConfig, SolverStatus,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c1a() -> Preset {
    "C1a".parse().unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn fourier_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(0..=16);
        let mu = rng.random_range(-n..=n);
        let m = rng.random_range(-n..=n);
        let beta = rng.random_range(-std::f64::consts::TAU..std::f64::consts::TAU);
        let d = wigner_d(n, mu, m, beta).unwrap();
        let f = wigner_d_fourier_synthesis(n, mu, m, beta).unwrap();
        worst = worst.max((d - f).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-10 && secs < 10.0, format!("max |d - synthesis| {worst:.2e}, {secs:.2} s"))
}

fn synthesis_equivalence() -> Outcome {
    let start = Instant::now();
    let bl = BandLimit::new(7).unwrap();
    let tr = BasisTransform::new(bl);
    let g = SampleGrid::new(bl, 1, Dims::Three).unwrap();
    let map = PhysicalMap::new(&g);
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let a = random_sparse_coefficients(bl, 40, seed, false, ValueMode::RandomPhase).unwrap();
        let sel = select_rows(&g, &map, 200, 100 + seed).unwrap();
        let op = DftOperator::new(&g, &sel).unwrap();
        let b = tr.a_to_b(&a, Dims::Three).unwrap();
        let scaled: Vec<Complex64> = b.as_slice().iter().map(|v| v * op.coefficient_scale()).collect();
        let mut y = vec![ZERO; op.rows()];
        op.forward(&scaled, &mut y);
        for (&row, yi) in sel.rows.iter().zip(&y) {
            let (al, be, ga) = g.angles(row);
            worst = worst.max((wigner_series_value(&a, al, be, ga) - yi).norm());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-9 && secs < 30.0, format!("max |direct - DFT| {worst:.2e} over 5 x 200 points, {secs:.2} s"))
}

fn round_trip() -> Outcome {
    let bl = BandLimit::new(15).unwrap();
    let tr = BasisTransform::new(bl);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for t in 0..100 {
        let s = rng.random_range(1..=200);
        let mu_zero = t % 4 == 0;
        let a = random_sparse_coefficients(bl, s, 1000 + t, mu_zero, ValueMode::RandomPhase).unwrap();
        let dims = if mu_zero { Dims::Two } else { Dims::Three };
        let (back, _) = tr.b_to_a(&tr.a_to_b(&a, dims).unwrap()).unwrap();
        worst = worst.max(error_metrics(a.as_slice(), back.as_slice()).normalized_error.sqrt());
    }
    outcome(worst <= 1e-9, format!("max relative error {worst:.2e} over 100 sets"))
}

fn double_cover() -> Outcome {
    let bl = BandLimit::new(15).unwrap();
    let g = SampleGrid::new(bl, 1, Dims::Two).unwrap();
    let map = PhysicalMap::new(&g);
    let mut sizes_ok = true;
    let (mut polar, mut regular) = (0, 0);
    for c in 0..map.class_count() {
        let rep = map.representative(c);
        let expect = if g.is_polar(rep) { 32 } else { 2 };
        if g.is_polar(rep) {
            polar += 1;
        } else {
            regular += 1;
        }
        sizes_ok &= map.class_size(c) == expect;
    }
    let tr = BasisTransform::new(bl);
    let full = SampleSelection::full(&g, &map);
    let op = DftOperator::new(&g, &full).unwrap();
    let mut spread: f64 = 0.0;
    for seed in 0..4 {
        let a = if seed == 0 {
            Instance::new(c1a(), bl, 0).unwrap().a
        } else {
            random_sparse_coefficients(bl, 60, seed, true, ValueMode::RandomPhase).unwrap()
        };
        let b = tr.a_to_b(&a, Dims::Two).unwrap();
        let mut y = vec![ZERO; op.rows()];
        op.forward(b.as_slice(), &mut y);
        let scale = op.coefficient_scale();
        for r in 0..g.len() {
            let rep = map.representative(map.class_of(r));
            spread = spread.max((y[r] - y[rep]).norm() * scale);
        }
    }
    outcome(
        sizes_ok && polar == 2 && spread <= 1e-9,
        format!("{regular} two-point classes, {polar} pole classes of 32, field spread {spread:.2e}"),
    )
}

fn noiseless_spec(trials: usize) -> ExperimentSpec {
    ExperimentSpec { trials, ..ExperimentSpec::new(ExperimentId::SweepMeasurements) }
}

fn sparse_recovery(tr: &BasisTransform) -> Outcome {
    let start = Instant::now();
    let p = sweep_point(&noiseless_spec(25), tr, c1a(), 400).unwrap();
    let snrs = p.snrs();
    let hits = snrs.iter().filter(|&&s| s >= 25.0).count();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        hits >= 20 && secs < 600.0,
        format!(
            "{hits}/25 trials >= 25 dB, mean {:.1} dB, min {:.1} dB, mean M_phys {:.1}, {secs:.0} s",
            mean(&snrs),
            snrs.iter().copied().fold(f64::INFINITY, f64::min),
            p.mean_m_phys()
        ),
    )
}

fn measurement_sweep(tr: &BasisTransform) -> Outcome {
    let spec = noiseless_spec(25);
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["C1a", "C2a", "C3a"] {
        let preset: Preset = name.parse().unwrap();
        let p = sweep_point(&spec, tr, preset, 400).unwrap();
        let full = sweep_point(&spec, tr, preset, 1024).unwrap();
        let full_min = full.snrs().into_iter().fold(f64::INFINITY, f64::min);
        pass &= p.mean_snr() >= 30.0 && full_min >= 80.0;
        parts.push(format!("{name} {:.1} dB at M_phys {:.0}, full >= {full_min:.0} dB", p.mean_snr(), p.mean_m_phys()));
    }
    outcome(pass, parts.join("; "))
}

fn noise_spec() -> ExperimentSpec {
    ExperimentSpec::new(ExperimentId::NoiseDensity)
}

fn classical_oversampling(tr: &BasisTransform) -> Outcome {
    let spec = noise_spec();
    let q1 = mean(&noise_arm(&spec, tr, NoiseArm::Classical, 1).unwrap().snrs);
    let q5 = mean(&noise_arm(&spec, tr, NoiseArm::Classical, 5).unwrap().snrs);
    let gain = q5 - q1;
    outcome((gain - 15.0).abs() <= 5.0, format!("q=1 {q1:.1} dB, q=5 {q5:.1} dB, gain {gain:.1} dB"))
}

fn density_margin(tr: &BasisTransform) -> Outcome {
    let spec = noise_spec();
    let classical = mean(&noise_arm(&spec, tr, NoiseArm::Classical, 2).unwrap().snrs);
    let arm = noise_arm(&spec, tr, NoiseArm::FixedDensity, 2).unwrap();
    let cs = mean(&arm.snrs);
    outcome(
        cs - classical >= 10.0,
        format!("CS {cs:.1} dB from {} rows, classical {classical:.1} dB, margin {:.1} dB", arm.m_rows, cs - classical),
    )
}

fn sparsity_bounds() -> Outcome {
    let start = Instant::now();
    let transforms: Vec<BasisTransform> = (0..=15).map(|n| BasisTransform::new(BandLimit::new(n).unwrap())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    let mut tightest: f64 = 0.0;
    for t in 0..10_000u64 {
        let n_max = rng.random_range(0..=15u32);
        let bl = BandLimit::new(n_max).unwrap();
        let mu_zero = rng.random_bool(0.5);
        let (a, dims) = if t % 50 == 0 {
            let preset: Preset = Preset::ALL[rng.random_range(0..9)].parse().unwrap();
            let inst = Instance::new(preset, bl, t).unwrap();
            let d = inst.dims();
            (inst.a, d)
        } else {
            let admissible = if mu_zero { bl.harmonic_count() } else { bl.wigner_count() };
            let s = rng.random_range(1..=admissible.min(64));
            let a = random_sparse_coefficients(bl, s, t, mu_zero, ValueMode::RandomPhase).unwrap();
            (a, if mu_zero { Dims::Two } else { Dims::Three })
        };
        let r = sparsity_report(&transforms[n_max as usize], &a, dims).unwrap();
        if r.s_f > r.worst_case_bound || r.s_f > r.support_bound {
            violations += 1;
        }
        tightest = tightest.max(r.s_f as f64 / r.support_bound as f64);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(violations == 0, format!("{violations} violations in 10^4 draws, max s_F / bound {tightest:.3}, {secs:.1} s"))
}

fn solver_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checks = Vec::new();

    let mut adjoint: f64 = 0.0;
    let mut ops: Vec<Box<dyn LinearOperator>> = Vec::new();
    for (n, q, dims, rows) in [(15, 1, Dims::Two, 400), (5, 2, Dims::Two, 300), (4, 1, Dims::Three, 500), (3, 3, Dims::Three, 2000)] {
        let g = SampleGrid::new(BandLimit::new(n).unwrap(), q, dims).unwrap();
        let map = PhysicalMap::new(&g);
        ops.push(Box::new(DftOperator::new(&g, &select_rows(&g, &map, rows, 5).unwrap()).unwrap()));
    }
    ops.push(Box::new(DenseOperator::new(30, 20, random_complex(&mut rng, 600)).unwrap()));
    for op in &ops {
        let x = random_complex(&mut rng, op.cols());
        let y = random_complex(&mut rng, op.rows());
        let mut ax = vec![ZERO; op.rows()];
        let mut aty = vec![ZERO; op.cols()];
        op.forward(&x, &mut ax);
        op.adjoint(&y, &mut aty);
        let lhs: Complex64 = ax.iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
        let rhs: Complex64 = x.iter().zip(&aty).map(|(a, b)| a.conj() * b).sum();
        adjoint = adjoint.max((lhs - rhs).norm() / lhs.norm().max(1.0));
    }
    checks.push((adjoint <= 1e-10, format!("adjoint {adjoint:.1e}")));

    let bl = BandLimit::new(15).unwrap();
    let g = SampleGrid::new(bl, 1, Dims::Two).unwrap();
    let map = PhysicalMap::new(&g);
    let full = DftOperator::new(&g, &SampleSelection::full(&g, &map)).unwrap();
    let mut x = vec![ZERO; full.cols()];
    x[517] = Complex64::new(0.6, -0.8);
    let mut y = vec![ZERO; full.rows()];
    full.forward(&x, &mut y);
    let res = solve_qcbp(&full, &y, &SolverConfig::noiseless()).unwrap();
    let err = error_metrics(&x, &res.solution).normalized_error.sqrt();
    checks.push((res.status == SolverStatus::Converged && err <= 1e-8, format!("1-sparse error {err:.1e}")));

    let a = Instance::new(c1a(), bl, 2).unwrap().a;
    let sel = select_rows(&g, &map, 400, 2).unwrap();
    let op = DftOperator::new(&g, &sel).unwrap();
    let ms = simulate(&a, &g, &map, &sel, 2e-4, NoiseSharing::Shared, 2).unwrap();
    let r = 2e-4 * (400f64).sqrt();
    let res = solve_qcbp(&op, &ms.values, &SolverConfig::noisy(r)).unwrap();
    let feasible = res.status == SolverStatus::Converged && res.residual <= r * (1.0 + 1e-6);
    checks.push((feasible, format!("residual / r {:.6}", res.residual / r)));

    let y3: Vec<Complex64> = ms.values.iter().map(|v| v * 3.0).collect();
    let res3 = solve_qcbp(&op, &y3, &SolverConfig::noisy(3.0 * r)).unwrap();
    let drift = res
        .solution
        .iter()
        .zip(&res3.solution)
        .map(|(a, b)| (a * 3.0 - b).norm())
        .fold(0.0, f64::max)
        / res3.solution.iter().map(|v| v.norm()).fold(0.0, f64::max);
    checks.push((drift <= 1e-10, format!("scale drift {drift:.1e}")));

    let norm = estimate_norm(&op, 30);
    checks.push((norm <= 1.0 + 1e-9, format!("|A| {norm:.6}")));

    let secs = start.elapsed().as_secs_f64();
    let pass = checks.iter().all(|c| c.0) && secs < 60.0;
    let detail: Vec<String> = checks.into_iter().map(|c| c.1).collect();
    outcome(pass, format!("{}, {secs:.1} s", detail.join(", ")))
}

fn main() {
    // `cargo test -- --list` and filtered runs expect no work.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if args.iter().any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str())) {
        return;
    }
    let tr15 = BasisTransform::new(BandLimit::new(15).unwrap());
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("Fourier identity", Box::new(fourier_identity)),
        ("synthesis equivalence", Box::new(synthesis_equivalence)),
        ("round trip", Box::new(round_trip)),
        ("double cover", Box::new(double_cover)),
        ("400-row recovery", Box::new(|| sparse_recovery(&tr15))),
        ("measurement sweep", Box::new(|| measurement_sweep(&tr15))),
        ("classical oversampling gain", Box::new(|| classical_oversampling(&tr15))),
        ("density-1/3 margin", Box::new(|| density_margin(&tr15))),
        ("sparsity bounds", Box::new(sparsity_bounds)),
        ("solver suite", Box::new(solver_suite)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {:<28} {}  {}", i + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
