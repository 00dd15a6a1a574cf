//! Factorials, binomials and spherical Hankel functions.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest argument covered by the factorial and binomial tables. Twice the
/// maximum supported order, since the Wigner sums reach `(2n)!`.
pub const TABLE_MAX: usize = 128;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(TABLE_MAX + 1);
        let mut acc = 0.0f64;
        table.push(0.0);
        for k in 1..=TABLE_MAX {
            acc += (k as f64).ln();
            table.push(acc);
        }
        table
    })
}

/// `ln(k!)`, i.e. `ln Γ(k + 1)` at integer arguments.
///
/// Panics if `k > TABLE_MAX`.
pub fn ln_factorial(k: usize) -> f64 {
    ln_factorial_table()[k]
}

fn pascal() -> &'static [Vec<u128>] {
    static TABLE: OnceLock<Vec<Vec<u128>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut rows: Vec<Vec<u128>> = Vec::with_capacity(TABLE_MAX + 1);
        for n in 0..=TABLE_MAX {
            let mut row = vec![1u128; n + 1];
            for k in 1..n {
                row[k] = rows[n - 1][k - 1] + rows[n - 1][k];
            }
            rows.push(row);
        }
        rows
    })
}

/// Exact binomial coefficient `C(n, k)`; zero when `k > n`.
///
/// Every entry up to `C(128, 64) ≈ 2.4e37` fits in a `u128`.
pub fn binomial_exact(n: usize, k: usize) -> u128 {
    if k > n {
        0
    } else {
        pascal()[n][k]
    }
}

/// `C(n, k)` rounded once to `f64`.
pub fn binomial(n: usize, k: usize) -> f64 {
    binomial_exact(n, k) as f64
}

/// Spherical Hankel function of the first kind, `h_n^(1)(x) = j_n(x) + i y_n(x)`.
///
/// Starts from the closed forms for `n = 0, 1` and recurses upward with
/// `h_{n+1} = (2n+1)/x h_n - h_{n-1}`, which is stable because the `y_n`
/// part dominates.
pub fn spherical_hankel1(n: u32, x: f64) -> Result<Complex64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("spherical Hankel argument must be positive, got {x}")));
    }
    let phase = Complex64::from_polar(1.0, x);
    let h0 = Complex64::new(0.0, -1.0) * phase / x;
    if n == 0 {
        return Ok(h0);
    }
    let h1 = -(Complex64::new(1.0 / x, 1.0 / (x * x))) * phase;
    let (mut prev, mut cur) = (h0, h1);
    for k in 1..n {
        let next = cur * ((2 * k + 1) as f64 / x) - prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}
