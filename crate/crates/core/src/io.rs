//! Whitespace-separated text formats.
//!
//! Every file starts with one header line of `key=value` tokens; lines
//! starting with `#` are comments. Reals are written with 17 significant
//! digits so a write/read cycle is bit exact.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_complex::Complex64;

use crate::coeffs::{Dims, FourierCoefficients, WignerCoefficients};
use crate::error::{Error, Result};
use crate::grid::{PhysicalMap, SampleGrid, SampleSelection};
use crate::operator::{MeasurementSet, NoiseSharing};
use crate::wigner::{BandLimit, WignerIndex};

pub type Header = BTreeMap<String, String>;

fn write_header<W: Write>(out: &mut W, pairs: &[(&str, String)]) -> Result<()> {
    let line: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(out, "{}", line.join(" "))?;
    Ok(())
}

/// Header map plus numbered data lines split into tokens.
fn read_table<R: BufRead>(input: R) -> Result<(Header, Vec<(usize, Vec<String>)>)> {
    let mut header = Header::new();
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !seen_header {
            if !t.contains('=') {
                return Err(Error::Parse { line: i + 1, msg: "expected a key=value header line".into() });
            }
            for tok in t.split_whitespace() {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("header token {tok:?} lacks '='") })?;
                header.insert(k.to_string(), v.to_string());
            }
            seen_header = true;
            continue;
        }
        rows.push((i + 1, t.split_whitespace().map(str::to_string).collect()));
    }
    if !seen_header {
        return Err(Error::Parse { line: 0, msg: "missing header line".into() });
    }
    Ok((header, rows))
}

pub fn header_value<T: FromStr>(header: &Header, key: &str) -> Result<T> {
    let raw = header.get(key).ok_or_else(|| Error::Parse { line: 1, msg: format!("header lacks {key}") })?;
    raw.parse().map_err(|_| Error::Parse { line: 1, msg: format!("bad value {raw:?} for {key}") })
}

fn field<T: FromStr>(tokens: &[String], at: usize, line: usize) -> Result<T> {
    let raw = tokens.get(at).ok_or_else(|| Error::Parse { line, msg: format!("expected at least {} columns", at + 1) })?;
    raw.parse().map_err(|_| Error::Parse { line, msg: format!("cannot parse {raw:?}") })
}

fn expect_columns(tokens: &[String], n: usize, line: usize) -> Result<()> {
    if tokens.len() != n {
        return Err(Error::Parse { line, msg: format!("expected {n} columns, found {}", tokens.len()) });
    }
    Ok(())
}

fn band_limit(header: &Header) -> Result<BandLimit> {
    BandLimit::new(header_value(header, "n_max")?)
}

fn dims(header: &Header) -> Result<Dims> {
    Dims::from_count(header_value(header, "dims")?)
}

fn fmt_c(v: Complex64) -> String {
    format!("{:.16e} {:.16e}", v.re, v.im)
}

/// Rows `n m mu re im` for every nonzero coefficient.
pub fn write_wigner<W: Write>(mut out: W, a: &WignerCoefficients) -> Result<()> {
    write_header(&mut out, &[("n_max", a.band_limit().n_max().to_string())])?;
    for (idx, v) in a.iter_nonzero() {
        writeln!(out, "{} {} {} {}", idx.n, idx.m, idx.mu, fmt_c(v))?;
    }
    Ok(())
}

pub fn read_wigner<R: BufRead>(input: R) -> Result<WignerCoefficients> {
    let (header, rows) = read_table(input)?;
    let mut a = WignerCoefficients::zeros(band_limit(&header)?);
    for (line, t) in rows {
        expect_columns(&t, 5, line)?;
        let idx = WignerIndex::new(field(&t, 0, line)?, field(&t, 1, line)?, field(&t, 2, line)?);
        a.set(idx, Complex64::new(field(&t, 3, line)?, field(&t, 4, line)?))?;
    }
    Ok(a)
}

/// Rows `mp m mu re im` for every nonzero coefficient.
pub fn write_fourier<W: Write>(mut out: W, b: &FourierCoefficients) -> Result<()> {
    write_header(&mut out, &[("n_max", b.band_limit().n_max().to_string()), ("dims", b.dims().count().to_string())])?;
    for ((mp, m, mu), v) in b.frequencies().zip(b.as_slice()) {
        if *v != Complex64::new(0.0, 0.0) {
            writeln!(out, "{mp} {m} {mu} {}", fmt_c(*v))?;
        }
    }
    Ok(())
}

pub fn read_fourier<R: BufRead>(input: R) -> Result<FourierCoefficients> {
    let (header, rows) = read_table(input)?;
    let mut b = FourierCoefficients::zeros(band_limit(&header)?, dims(&header)?);
    for (line, t) in rows {
        expect_columns(&t, 5, line)?;
        b.set(field(&t, 0, line)?, field(&t, 1, line)?, field(&t, 2, line)?, Complex64::new(field(&t, 3, line)?, field(&t, 4, line)?))?;
    }
    Ok(b)
}

/// Rows `n m re im` with header `n_max=<int>`.
pub fn write_sh<W: Write>(mut out: W, n_max: u32, rows: &[(i32, i32, Complex64)]) -> Result<()> {
    write_header(&mut out, &[("n_max", n_max.to_string())])?;
    for &(n, m, v) in rows {
        writeln!(out, "{n} {m} {}", fmt_c(v))?;
    }
    Ok(())
}

/// Declared `n_max` and the rows, without truncation.
pub fn read_sh<R: BufRead>(input: R) -> Result<(u32, Vec<(i32, i32, Complex64)>)> {
    let (header, rows) = read_table(input)?;
    let n_max: u32 = header_value(&header, "n_max")?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, t) in rows {
        expect_columns(&t, 4, line)?;
        let (n, m): (i32, i32) = (field(&t, 0, line)?, field(&t, 1, line)?);
        if n < 0 || m.abs() > n || n as u32 > n_max {
            return Err(Error::Parse { line, msg: format!("index (n={n}, m={m}) invalid for n_max={n_max}") });
        }
        out.push((n, m, Complex64::new(field(&t, 2, line)?, field(&t, 3, line)?)));
    }
    Ok((n_max, out))
}

fn grid_pairs(grid: &SampleGrid) -> Vec<(&'static str, String)> {
    vec![
        ("n_max", grid.band_limit().n_max().to_string()),
        ("dims", grid.dims().count().to_string()),
        ("oversample", grid.oversample().to_string()),
    ]
}

fn read_grid(header: &Header) -> Result<SampleGrid> {
    SampleGrid::new(band_limit(header)?, header_value(header, "oversample")?, dims(header)?)
}

/// Rows `row_index re im`; the header carries grid, seeds and noise data.
pub fn write_measurements<W: Write>(mut out: W, ms: &MeasurementSet) -> Result<()> {
    let mut pairs = grid_pairs(&ms.grid);
    pairs.push(("seed", ms.selection.seed.to_string()));
    pairs.push(("noise_seed", ms.noise_seed.to_string()));
    pairs.push(("noise_std", format!("{:.16e}", ms.noise_std)));
    pairs.push(("eps", format!("{:.16e}", ms.eps)));
    let sharing = match ms.sharing {
        NoiseSharing::Shared => "shared",
        NoiseSharing::PerRow => "per-row",
    };
    pairs.push(("sharing", sharing.to_string()));
    write_header(&mut out, &pairs)?;
    for (&r, &v) in ms.selection.rows.iter().zip(&ms.values) {
        writeln!(out, "{r} {}", fmt_c(v))?;
    }
    Ok(())
}

pub fn read_measurements<R: BufRead>(input: R) -> Result<MeasurementSet> {
    let (header, rows) = read_table(input)?;
    let grid = read_grid(&header)?;
    let mut idx = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    let mut last = None;
    for (line, t) in rows {
        expect_columns(&t, 3, line)?;
        let r: usize = field(&t, 0, line)?;
        if r >= grid.len() || last.is_some_and(|p| r <= p) {
            return Err(Error::Parse { line, msg: format!("row {r} out of range or not increasing") });
        }
        last = Some(r);
        idx.push(r);
        values.push(Complex64::new(field(&t, 1, line)?, field(&t, 2, line)?));
    }
    let map = PhysicalMap::new(&grid);
    let sharing = match header.get("sharing").map(String::as_str) {
        None | Some("shared") => NoiseSharing::Shared,
        Some("per-row") => NoiseSharing::PerRow,
        Some(other) => return Err(Error::Parse { line: 1, msg: format!("unknown sharing {other:?}") }),
    };
    Ok(MeasurementSet {
        grid,
        selection: SampleSelection::from_rows(idx, &map, header_value(&header, "seed")?),
        values,
        noise_std: header_value(&header, "noise_std")?,
        eps: header_value(&header, "eps")?,
        sharing,
        noise_seed: header.get("noise_seed").map(|s| s.parse()).transpose().ok().flatten().unwrap_or(0),
    })
}

/// Rows `j k l alpha beta gamma class_id`.
pub fn write_selection<W: Write>(mut out: W, grid: &SampleGrid, map: &PhysicalMap, sel: &SampleSelection) -> Result<()> {
    let mut pairs = grid_pairs(grid);
    pairs.push(("seed", sel.seed.to_string()));
    pairs.push(("m_rows", sel.m_rows().to_string()));
    pairs.push(("m_phys", sel.m_phys.to_string()));
    write_header(&mut out, &pairs)?;
    for &r in &sel.rows {
        let (j, k, l) = grid.indices(r);
        let (a, b, g) = grid.angles(r);
        writeln!(out, "{j} {k} {l} {a:.16e} {b:.16e} {g:.16e} {}", map.class_of(r))?;
    }
    Ok(())
}

pub fn read_selection<R: BufRead>(input: R) -> Result<(SampleGrid, SampleSelection)> {
    let (header, rows) = read_table(input)?;
    let grid = read_grid(&header)?;
    let mut idx = Vec::with_capacity(rows.len());
    for (line, t) in rows {
        expect_columns(&t, 7, line)?;
        idx.push(grid.row_of(field(&t, 0, line)?, field(&t, 1, line)?, field(&t, 2, line)?));
    }
    let map = PhysicalMap::new(&grid);
    Ok((grid, SampleSelection::from_rows(idx, &map, header_value(&header, "seed")?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::select_rows;
    use crate::operator::simulate;
    use crate::synth::{random_sparse_coefficients, ValueMode};
    use proptest::prelude::*;

    #[test]
    fn wigner_file_round_trip_is_bit_exact() {
        let bl = BandLimit::new(5).unwrap();
        let mut a = random_sparse_coefficients(bl, 20, 3, false, ValueMode::RandomPhase).unwrap();
        a.scale(std::f64::consts::PI / 7.0);
        let mut buf = Vec::new();
        write_wigner(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n_max=5\n"));
        assert_eq!(read_wigner(&buf[..]).unwrap(), a);
    }

    #[test]
    fn fourier_file_round_trip_is_bit_exact() {
        let bl = BandLimit::new(2).unwrap();
        let values = (0..216).map(|k| Complex64::new((k as f64).sin() / 3.0, (k as f64 * 0.7).cos())).collect();
        let b = FourierCoefficients::from_vec(bl, Dims::Three, values).unwrap();
        let mut buf = Vec::new();
        write_fourier(&mut buf, &b).unwrap();
        assert_eq!(read_fourier(&buf[..]).unwrap(), b);
    }

    #[test]
    fn measurement_and_selection_round_trip() {
        let bl = BandLimit::new(4).unwrap();
        let g = SampleGrid::new(bl, 2, Dims::Two).unwrap();
        let map = PhysicalMap::new(&g);
        let sel = select_rows(&g, &map, 50, 12).unwrap();
        let a = random_sparse_coefficients(bl, 5, 1, true, ValueMode::Ones).unwrap();
        let ms = simulate(&a, &g, &map, &sel, 0.01, NoiseSharing::Shared, 77).unwrap();
        let mut buf = Vec::new();
        write_measurements(&mut buf, &ms).unwrap();
        assert_eq!(read_measurements(&buf[..]).unwrap(), ms);
        let mut buf = Vec::new();
        write_selection(&mut buf, &g, &map, &sel).unwrap();
        let (g2, sel2) = read_selection(&buf[..]).unwrap();
        assert_eq!(g2, g);
        assert_eq!(sel2, sel);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(read_wigner("0 0 0 1 0\n".as_bytes()).is_err());
        assert!(read_wigner("n_max=2\n0 0 0 1\n".as_bytes()).is_err());
        assert!(read_wigner("n_max=2\n3 0 0 1 0\n".as_bytes()).is_err());
        assert!(read_wigner("n_max=2\n1 0 0 x 0\n".as_bytes()).is_err());
        assert!(read_sh("n_max=2\n1 2 0 0\n".as_bytes()).is_err());
        assert!(read_measurements("n_max=1 dims=2 oversample=1 seed=0 noise_std=0 eps=0\n5 0 0\n3 0 0\n".as_bytes()).is_err());
        let (n, rows) = read_sh("# comment\nn_max=1\n0 0 1 0\n1 -1 0 2\n".as_bytes()).unwrap();
        assert_eq!(n, 1);
        assert_eq!(rows[1], (1, -1, Complex64::new(0.0, 2.0)));
    }

    proptest! {
        #[test]
        fn sh_rows_round_trip(vals in proptest::collection::vec((any::<f64>(), any::<f64>()), 9)) {
            let mut rows = Vec::new();
            let mut k = 0;
            for n in 0..=2 {
                for m in -n..=n {
                    let (re, im) = vals[k];
                    let fix = |x: f64| if x.is_finite() { x } else { 0.0 };
                    rows.push((n, m, Complex64::new(fix(re), fix(im))));
                    k += 1;
                }
            }
            let mut buf = Vec::new();
            write_sh(&mut buf, 2, &rows).unwrap();
            let (n_max, back) = read_sh(&buf[..]).unwrap();
            prop_assert_eq!(n_max, 2);
            prop_assert_eq!(back, rows);
        }
    }
}
