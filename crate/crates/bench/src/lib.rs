//! Benchmarks for `fsens-core` live under `benches/`.
