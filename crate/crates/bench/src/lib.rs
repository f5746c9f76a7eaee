//! Criterion benchmarks for pesanet-core; see `benches/`.
