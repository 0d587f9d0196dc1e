//! Criterion benchmarks for the gait pipeline live under `benches/`.
