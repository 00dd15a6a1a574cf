//! Equiangular torus grids, their double-cover identification with physical
//! poses, and random row selection.
//!
//! Axis `j` carries `α` (paired with `μ`), `k` carries `β` (paired with
//! `m'`), `l` carries `γ` (paired with `m`). Signed indices run over
//! `[-L/2, L/2)` and the angle is `2π·index/L`. Rows are numbered with `j`
//! slowest; the 2D grid drops `j`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::Dims;
use crate::error::{Error, Result};
use crate::wigner::BandLimit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleGrid {
    band_limit: BandLimit,
    oversample: usize,
    dims: Dims,
}

impl SampleGrid {
    pub fn new(band_limit: BandLimit, oversample: usize, dims: Dims) -> Result<Self> {
        if oversample == 0 {
            return Err(Error::Argument("oversample must be at least 1".into()));
        }
        Ok(Self { band_limit, oversample, dims })
    }

    pub fn band_limit(&self) -> BandLimit {
        self.band_limit
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Points per axis, `q (2 n_max + 2)`.
    pub fn side(&self) -> usize {
        self.oversample * self.band_limit.fourier_side()
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dims.count() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn half(&self) -> i64 {
        (self.side() / 2) as i64
    }

    /// Signed `(j, k, l)` of a row; `j = 0` in 2D.
    pub fn indices(&self, row: usize) -> (i64, i64, i64) {
        let s = self.side();
        let h = self.half();
        match self.dims {
            Dims::Two => (0, (row / s) as i64 - h, (row % s) as i64 - h),
            Dims::Three => ((row / (s * s)) as i64 - h, ((row / s) % s) as i64 - h, (row % s) as i64 - h),
        }
    }

    /// Row of signed indices, each reduced mod `L` into `[-L/2, L/2)`.
    pub fn row_of(&self, j: i64, k: i64, l: i64) -> usize {
        let s = self.side() as i64;
        let h = self.half();
        let wrap = |x: i64| (x + h).rem_euclid(s) as usize;
        match self.dims {
            Dims::Two => wrap(k) * s as usize + wrap(l),
            Dims::Three => (wrap(j) * s as usize + wrap(k)) * s as usize + wrap(l),
        }
    }

    pub fn angle(&self, index: i64) -> f64 {
        2.0 * PI * index as f64 / self.side() as f64
    }

    /// `(α, β, γ)` of a row; `α = 0` in 2D.
    pub fn angles(&self, row: usize) -> (f64, f64, f64) {
        let (j, k, l) = self.indices(row);
        (self.angle(j), self.angle(k), self.angle(l))
    }

    /// Double-cover partner `(j + L/2, -k, l - L/2)`, or `(-k, l - L/2)` in 2D.
    pub fn partner(&self, row: usize) -> usize {
        let (j, k, l) = self.indices(row);
        let h = self.half();
        self.row_of(j + h, -k, l - h)
    }

    /// True when `β` is `0` or `π`.
    pub fn is_polar(&self, row: usize) -> bool {
        let k = self.indices(row).1;
        k == 0 || k == -self.half()
    }

    /// Key identifying the physical pose of a row.
    fn class_key(&self, row: usize) -> (u8, i64, i64) {
        let s = self.side() as i64;
        let (j, k, l) = self.indices(row);
        if k == 0 {
            let key = if self.dims == Dims::Two { 0 } else { (j + l).rem_euclid(s) };
            (0, key, 0)
        } else if k == -self.half() {
            let key = if self.dims == Dims::Two { 0 } else { (j - l).rem_euclid(s) };
            (1, key, 0)
        } else {
            let p = self.partner(row);
            (2, row.min(p) as i64, 0)
        }
    }
}

/// Equivalence classes of torus rows sharing one physical pose.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhysicalMap {
    class_of: Vec<u32>,
    sizes: Vec<u32>,
    representative: Vec<usize>,
}

impl PhysicalMap {
    pub fn new(grid: &SampleGrid) -> Self {
        let n = grid.len();
        let mut class_of = vec![u32::MAX; n];
        let mut sizes = Vec::new();
        let mut representative = Vec::new();
        let mut polar: std::collections::HashMap<(u8, i64), u32> = std::collections::HashMap::new();
        for row in 0..n {
            if class_of[row] != u32::MAX {
                continue;
            }
            let (tag, key, _) = grid.class_key(row);
            let id = if tag < 2 {
                *polar.entry((tag, key)).or_insert_with(|| {
                    sizes.push(0);
                    representative.push(row);
                    (sizes.len() - 1) as u32
                })
            } else {
                sizes.push(0);
                representative.push(row);
                (sizes.len() - 1) as u32
            };
            class_of[row] = id;
            sizes[id as usize] += 1;
            if tag == 2 {
                let p = grid.partner(row);
                if p != row && class_of[p] == u32::MAX {
                    class_of[p] = id;
                    sizes[id as usize] += 1;
                }
            }
        }
        Self { class_of, sizes, representative }
    }

    pub fn class_of(&self, row: usize) -> usize {
        self.class_of[row] as usize
    }

    pub fn class_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn class_size(&self, class: usize) -> usize {
        self.sizes[class] as usize
    }

    /// Lowest row of a class.
    pub fn representative(&self, class: usize) -> usize {
        self.representative[class]
    }

    /// Number of distinct classes touched by a set of rows.
    pub fn distinct_classes(&self, rows: &[usize]) -> usize {
        let mut seen: Vec<usize> = rows.iter().map(|&r| self.class_of(r)).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

/// Selected torus rows, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSelection {
    pub rows: Vec<usize>,
    pub m_phys: usize,
    pub seed: u64,
}

impl SampleSelection {
    pub fn full(grid: &SampleGrid, map: &PhysicalMap) -> Self {
        Self { rows: (0..grid.len()).collect(), m_phys: map.class_count(), seed: 0 }
    }

    pub fn from_rows(mut rows: Vec<usize>, map: &PhysicalMap, seed: u64) -> Self {
        rows.sort_unstable();
        rows.dedup();
        let m_phys = map.distinct_classes(&rows);
        Self { rows, m_phys, seed }
    }

    pub fn m_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Uniformly random `m_rows`-subset of the torus rows.
pub fn select_rows(grid: &SampleGrid, map: &PhysicalMap, m_rows: usize, seed: u64) -> Result<SampleSelection> {
    let total = grid.len();
    if m_rows == 0 || m_rows > total {
        return Err(Error::Argument(format!("row count {m_rows} outside 1..={total}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rand::seq::index::sample(&mut rng, total, m_rows).into_vec();
    Ok(SampleSelection::from_rows(rows, map, seed))
}
