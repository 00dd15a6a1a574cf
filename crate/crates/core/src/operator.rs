//! Sub-sampled unitary DFT measurement operator and measurement simulation.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::coeffs::{Dims, FourierCoefficients, WignerCoefficients};
use crate::error::{Error, Result};
use crate::grid::{PhysicalMap, SampleGrid, SampleSelection};
use crate::wigner::SmallDTable;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A linear map `ℂ^cols → ℂ^rows` with an exact adjoint.
pub trait LinearOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn forward(&self, x: &[Complex64], out: &mut [Complex64]);
    fn adjoint(&self, y: &[Complex64], out: &mut [Complex64]);

    /// Upper bound on the spectral norm.
    fn norm_bound(&self) -> f64 {
        estimate_norm(self, 20) * 1.05
    }
}

/// Power iteration on `A*A` from a fixed start vector.
pub fn estimate_norm<A: LinearOperator + ?Sized>(op: &A, iters: usize) -> f64 {
    let mut x: Vec<Complex64> =
        (0..op.cols()).map(|k| Complex64::new(1.0 + (k % 7) as f64 * 0.1, (k % 3) as f64 * 0.1)).collect();
    let mut y = vec![ZERO; op.rows()];
    let mut est = 0.0;
    for _ in 0..iters {
        let nx = norm(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        op.forward(&x, &mut y);
        est = norm(&y);
        op.adjoint(&y, &mut x);
    }
    est
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `P_Ω U z / √(L^d)` restricted to the Nyquist frequency cube.
#[derive(Clone)]
pub struct DftOperator {
    grid: SampleGrid,
    rows: Vec<usize>,
    /// Position in the FFT cube of each selected row.
    row_bins: Vec<usize>,
    /// Position in the FFT cube of each column (canonical Fourier order).
    col_bins: Vec<usize>,
    scale: f64,
    forward_fft: Arc<dyn Fft<f64>>,
    inverse_fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DftOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DftOperator").field("grid", &self.grid).field("rows", &self.rows.len()).finish()
    }
}

impl DftOperator {
    pub fn new(grid: &SampleGrid, selection: &SampleSelection) -> Result<Self> {
        let side = grid.side();
        if let Some(&bad) = selection.rows.iter().find(|&&r| r >= grid.len()) {
            return Err(Error::Argument(format!("row {bad} outside grid of {} rows", grid.len())));
        }
        let d = grid.dims();
        let bin = |x: i64| x.rem_euclid(side as i64) as usize;
        let cube = |a: i64, b: i64, c: i64| match d {
            Dims::Two => bin(b) * side + bin(c),
            Dims::Three => (bin(a) * side + bin(b)) * side + bin(c),
        };
        let row_bins = selection
            .rows
            .iter()
            .map(|&r| {
                let (j, k, l) = grid.indices(r);
                cube(j, k, l)
            })
            .collect();
        let template = FourierCoefficients::zeros(grid.band_limit(), d);
        let col_bins = template.frequencies().map(|(mp, m, mu)| cube(mu as i64, mp as i64, m as i64)).collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            grid: *grid,
            rows: selection.rows.clone(),
            row_bins,
            col_bins,
            scale: 1.0 / (grid.len() as f64).sqrt(),
            forward_fft: planner.plan_fft_forward(side),
            inverse_fft: planner.plan_fft_inverse(side),
        })
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn selected_rows(&self) -> &[usize] {
        &self.rows
    }

    /// `√(L^d)`, the factor between `b` and the unknown `b'`.
    pub fn coefficient_scale(&self) -> f64 {
        1.0 / self.scale
    }

    fn fft_cube(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let side = self.grid.side();
        let axes = self.grid.dims().count();
        let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
        let mut line = vec![ZERO; data.len()];
        for axis in 0..axes {
            let stride = side.pow((axes - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = stride * side;
            let mut at = 0;
            for outer in (0..data.len()).step_by(block) {
                for inner in 0..stride {
                    for t in 0..side {
                        line[at + t] = data[outer + inner + t * stride];
                    }
                    at += side;
                }
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            at = 0;
            for outer in (0..data.len()).step_by(block) {
                for inner in 0..stride {
                    for t in 0..side {
                        data[outer + inner + t * stride] = line[at + t];
                    }
                    at += side;
                }
            }
        }
    }

    /// Field on the whole grid from a coefficient vector in canonical order,
    /// in FFT cube layout (bins mod `L`).
    pub fn full_field(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut cube = vec![ZERO; self.grid.len()];
        for (&b, &v) in self.col_bins.iter().zip(x) {
            cube[b] = v;
        }
        self.fft_cube(&mut cube, &self.forward_fft);
        cube
    }

    /// Cube position of a grid row.
    pub fn cube_index(&self, row: usize) -> usize {
        let side = self.grid.side() as i64;
        let (j, k, l) = self.grid.indices(row);
        let bin = |x: i64| x.rem_euclid(side) as usize;
        let s = side as usize;
        match self.grid.dims() {
            Dims::Two => bin(k) * s + bin(l),
            Dims::Three => (bin(j) * s + bin(k)) * s + bin(l),
        }
    }
}

impl LinearOperator for DftOperator {
    fn rows(&self) -> usize {
        self.rows.len()
    }

    fn cols(&self) -> usize {
        self.col_bins.len()
    }

    fn forward(&self, x: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(x.len(), self.cols());
        assert_eq!(out.len(), self.rows());
        let cube = self.full_field(x);
        for (o, &b) in out.iter_mut().zip(&self.row_bins) {
            *o = cube[b] * self.scale;
        }
    }

    fn adjoint(&self, y: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(y.len(), self.rows());
        assert_eq!(out.len(), self.cols());
        let mut cube = vec![ZERO; self.grid.len()];
        for (&b, &v) in self.row_bins.iter().zip(y) {
            cube[b] += v;
        }
        self.fft_cube(&mut cube, &self.inverse_fft);
        for (o, &b) in out.iter_mut().zip(&self.col_bins) {
            *o = cube[b] * self.scale;
        }
    }

    fn norm_bound(&self) -> f64 {
        1.0
    }
}

/// Dense row-major operator, used by the on-grid Wigner D baseline.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl DenseOperator {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

impl LinearOperator for DenseOperator {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn forward(&self, x: &[Complex64], out: &mut [Complex64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn adjoint(&self, y: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = ZERO);
        for (r, &v) in y.iter().enumerate() {
            if v == ZERO {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a.conj() * v;
            }
        }
    }
}

/// How noise realizations are attached to duplicated poses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum NoiseSharing {
    /// One reading per physical pose, reused by every row of its class.
    #[default]
    Shared,
    /// An independent draw for every torus row.
    PerRow,
}

/// Multiple of the noise standard deviation used as the per-sample bound.
pub const EPS_FACTOR: f64 = 3.0;

/// Standard deviation whose variance is `10^{db/10}` times `peak`.
pub fn noise_std_from_db(db: f64, peak: f64) -> f64 {
    (10f64.powf(db / 10.0) * peak).sqrt()
}

/// Measured values on the selected rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub grid: SampleGrid,
    pub selection: SampleSelection,
    pub values: Vec<Complex64>,
    pub noise_std: f64,
    /// Per-sample bound `ε` handed to the solver.
    pub eps: f64,
    pub sharing: NoiseSharing,
    pub noise_seed: u64,
}

/// Evaluates `Σ a D` at every selected row. Rows of one physical class are
/// evaluated once at the class representative.
pub fn synthesize_field(
    a: &WignerCoefficients,
    grid: &SampleGrid,
    map: &PhysicalMap,
    rows: &[usize],
) -> Result<Vec<Complex64>> {
    if a.band_limit() != grid.band_limit() {
        return Err(Error::BandLimitMismatch { left: grid.band_limit().n_max(), right: a.band_limit().n_max() });
    }
    if grid.dims() == Dims::Two && !a.is_mu_zero_only() {
        return Err(Error::Argument("2D grid requires μ = 0 coefficients only".into()));
    }
    let terms: Vec<_> = a.iter_nonzero().collect();
    let mu_zero = grid.dims() == Dims::Two || a.is_mu_zero_only();
    let mut tables: std::collections::BTreeMap<i64, SmallDTable> = std::collections::BTreeMap::new();
    let mut by_class: std::collections::HashMap<usize, Complex64> = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(rows.len());
    for &row in rows {
        let class = map.class_of(row);
        if let Some(v) = by_class.get(&class) {
            out.push(*v);
            continue;
        }
        let rep = map.representative(class);
        let (_, k, _) = grid.indices(rep);
        let (alpha, beta, gamma) = grid.angles(rep);
        let table = tables.entry(k).or_insert_with(|| SmallDTable::new(grid.band_limit(), beta, mu_zero));
        let v: Complex64 = terms
            .iter()
            .map(|(idx, c)| {
                let d = table.get(idx.n, idx.mu, idx.m);
                c * Complex64::from_polar(d, -(idx.mu as f64) * alpha - (idx.m as f64) * gamma)
            })
            .sum();
        by_class.insert(class, v);
        out.push(v);
    }
    Ok(out)
}

/// Noisy samples of the field of `a` on the selected rows.
pub fn simulate(
    a: &WignerCoefficients,
    grid: &SampleGrid,
    map: &PhysicalMap,
    selection: &SampleSelection,
    noise_std: f64,
    sharing: NoiseSharing,
    noise_seed: u64,
) -> Result<MeasurementSet> {
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::Argument(format!("noise_std must be finite and non-negative, got {noise_std}")));
    }
    let mut values = synthesize_field(a, grid, map, &selection.rows)?;
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        rng.set_stream(1);
        let s = noise_std / std::f64::consts::SQRT_2;
        let mut draw = || {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re * s, im * s)
        };
        match sharing {
            NoiseSharing::PerRow => values.iter_mut().for_each(|v| *v += draw()),
            NoiseSharing::Shared => {
                let mut classes: Vec<usize> = selection.rows.iter().map(|&r| map.class_of(r)).collect();
                classes.sort_unstable();
                classes.dedup();
                let noise: std::collections::HashMap<usize, Complex64> =
                    classes.into_iter().map(|c| (c, draw())).collect();
                for (v, &r) in values.iter_mut().zip(&selection.rows) {
                    *v += noise[&map.class_of(r)];
                }
            }
        }
    }
    Ok(MeasurementSet {
        grid: *grid,
        selection: selection.clone(),
        values,
        noise_std,
        eps: EPS_FACTOR * noise_std,
        sharing,
        noise_seed,
    })
}

/// Largest field magnitude over the whole grid.
pub fn peak_magnitude(b: &FourierCoefficients, grid: &SampleGrid) -> Result<f64> {
    if b.dims() != grid.dims() || b.band_limit() != grid.band_limit() {
        return Err(Error::Argument("coefficient and grid shapes differ".into()));
    }
    let map_free = SampleSelection { rows: Vec::new(), m_phys: 0, seed: 0 };
    let op = DftOperator::new(grid, &map_free)?;
    Ok(op.full_field(b.as_slice()).iter().map(|v| v.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::BasisTransform;
    use crate::wigner::{BandLimit, WignerIndex};
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
    }

    fn setup(n_max: u32, q: usize, dims: Dims) -> (SampleGrid, PhysicalMap) {
        let g = SampleGrid::new(BandLimit::new(n_max).unwrap(), q, dims).unwrap();
        let map = PhysicalMap::new(&g);
        (g, map)
    }

    #[test]
    fn full_nyquist_operator_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dims in [Dims::Two, Dims::Three] {
            let (g, map) = setup(3, 1, dims);
            let op = DftOperator::new(&g, &SampleSelection::full(&g, &map)).unwrap();
            let x = random_vec(op.cols(), &mut rng);
            let mut y = vec![ZERO; op.rows()];
            op.forward(&x, &mut y);
            assert!((norm(&y) - norm(&x)).abs() < 1e-12 * norm(&x));
            let mut back = vec![ZERO; op.cols()];
            op.adjoint(&y, &mut back);
            let err: f64 = back.iter().zip(&x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn forward_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (dims, q) in [(Dims::Three, 1), (Dims::Three, 2), (Dims::Two, 3)] {
            for n_max in [1, 2, 3] {
                let (g, map) = setup(n_max, q, dims);
                let op = DftOperator::new(&g, &SampleSelection::full(&g, &map)).unwrap();
                let b = FourierCoefficients::from_vec(g.band_limit(), dims, random_vec(op.cols(), &mut rng)).unwrap();
                let mut y = vec![ZERO; op.rows()];
                op.forward(b.as_slice(), &mut y);
                let l = g.side() as f64;
                for (&row, yv) in op.selected_rows().iter().zip(&y) {
                    let (j, k, ll) = g.indices(row);
                    let naive: Complex64 = b
                        .frequencies()
                        .zip(b.as_slice())
                        .map(|((mp, m, mu), v)| {
                            let ph = -2.0 * PI * ((mu as i64 * j + mp as i64 * k + m as i64 * ll) as f64) / l;
                            v * Complex64::from_polar(1.0, ph)
                        })
                        .sum::<Complex64>()
                        / (g.len() as f64).sqrt();
                    assert!((naive - yv).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn adjoint_dot_product_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (dims, q) in [(Dims::Two, 1), (Dims::Two, 2), (Dims::Three, 1)] {
            let (g, map) = setup(4, q, dims);
            for t in 0..20 {
                let sel = crate::grid::select_rows(&g, &map, g.len() / 3, t).unwrap();
                let op = DftOperator::new(&g, &sel).unwrap();
                let x = random_vec(op.cols(), &mut rng);
                let y = random_vec(op.rows(), &mut rng);
                let mut ax = vec![ZERO; op.rows()];
                let mut aty = vec![ZERO; op.cols()];
                op.forward(&x, &mut ax);
                op.adjoint(&y, &mut aty);
                assert!((dot(&ax, &y) - dot(&x, &aty)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn single_frequency_gives_exponential() {
        let (g, map) = setup(2, 1, Dims::Two);
        let op = DftOperator::new(&g, &SampleSelection::full(&g, &map)).unwrap();
        let mut b = FourierCoefficients::zeros(g.band_limit(), Dims::Two);
        b.set(1, -2, 0, Complex64::new(1.0, 0.0)).unwrap();
        let mut y = vec![ZERO; op.rows()];
        op.forward(b.as_slice(), &mut y);
        for (&row, v) in op.selected_rows().iter().zip(&y) {
            let (_, beta, gamma) = g.angles(row);
            let expect = Complex64::from_polar(1.0 / 6.0, -(beta - 2.0 * gamma));
            assert!((v - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn operator_norm_estimate_is_at_most_one() {
        let (g, map) = setup(3, 2, Dims::Two);
        let sel = crate::grid::select_rows(&g, &map, 100, 3).unwrap();
        let op = DftOperator::new(&g, &sel).unwrap();
        assert!(estimate_norm(&op, 30) <= 1.0 + 1e-12);
    }

    #[test]
    fn noiseless_simulation_matches_transform_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (dims, q) in [(Dims::Three, 1), (Dims::Two, 2)] {
            let (g, map) = setup(4, q, dims);
            let bl = g.band_limit();
            let mut a = WignerCoefficients::zeros(bl);
            let idx: Vec<_> = a.indices().filter(|i| dims == Dims::Three || i.mu == 0).collect();
            for _ in 0..8 {
                let i = idx[rng.random_range(0..idx.len())];
                a.set(i, Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).unwrap();
            }
            let sel = crate::grid::select_rows(&g, &map, g.len() / 2, 5).unwrap();
            let ms = simulate(&a, &g, &map, &sel, 0.0, NoiseSharing::Shared, 0).unwrap();
            let op = DftOperator::new(&g, &sel).unwrap();
            let mut b = BasisTransform::new(bl).a_to_b(&a, dims).unwrap();
            b.scale(op.coefficient_scale());
            let mut y = vec![ZERO; op.rows()];
            op.forward(b.as_slice(), &mut y);
            for (u, v) in y.iter().zip(&ms.values) {
                assert!((u - v).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_field_gives_zero_measurements() {
        let (g, map) = setup(3, 1, Dims::Two);
        let a = WignerCoefficients::zeros(g.band_limit());
        let ms = simulate(&a, &g, &map, &SampleSelection::full(&g, &map), 0.0, NoiseSharing::Shared, 0).unwrap();
        assert!(ms.values.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn shared_noise_is_identical_within_a_class() {
        let (g, map) = setup(3, 1, Dims::Two);
        let mut a = WignerCoefficients::zeros(g.band_limit());
        a.set(WignerIndex::new(2, 1, 0), Complex64::new(1.0, 0.0)).unwrap();
        let full = SampleSelection::full(&g, &map);
        let ms = simulate(&a, &g, &map, &full, 0.1, NoiseSharing::Shared, 42).unwrap();
        for r in 0..g.len() {
            let rep = map.representative(map.class_of(r));
            assert_eq!(ms.values[r], ms.values[rep]);
        }
        let ms = simulate(&a, &g, &map, &full, 0.1, NoiseSharing::PerRow, 42).unwrap();
        let r = (0..g.len()).find(|&r| !g.is_polar(r)).unwrap();
        assert_ne!(ms.values[r], ms.values[g.partner(r)]);
    }

    #[test]
    fn noise_variance_matches_target() {
        let (g, map) = setup(15, 2, Dims::Two);
        let a = WignerCoefficients::zeros(g.band_limit());
        let std = noise_std_from_db(-40.0, 3.0);
        assert!((std * std - 3e-4).abs() < 1e-15);
        let ms = simulate(&a, &g, &map, &SampleSelection::full(&g, &map), std, NoiseSharing::PerRow, 7).unwrap();
        let var = ms.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / ms.values.len() as f64;
        assert!((var / (std * std) - 1.0).abs() < 0.1);
        assert_eq!(ms.eps, 3.0 * std);
    }

    #[test]
    fn dense_operator_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let op = DenseOperator::new(5, 7, random_vec(35, &mut rng)).unwrap();
        let x = random_vec(7, &mut rng);
        let y = random_vec(5, &mut rng);
        let mut ax = vec![ZERO; 5];
        let mut aty = vec![ZERO; 7];
        op.forward(&x, &mut ax);
        op.adjoint(&y, &mut aty);
        assert!((dot(&ax, &y) - dot(&x, &aty)).norm() < 1e-12);
        assert!(DenseOperator::new(2, 2, vec![ZERO; 3]).is_err());
    }
}
