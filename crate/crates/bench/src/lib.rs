//! Criterion benchmarks for the warp kernels; see `benches/`.
