//! Criterion benchmarks for the sphcs kernels; see `benches/kernels.rs`.
//!
//! `cargo bench -p sphcs-bench`
