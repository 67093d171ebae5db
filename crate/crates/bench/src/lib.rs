//! Benchmarks for the copula toolkit; see `benches/copula.rs`.
