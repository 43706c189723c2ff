//! Criterion benchmarks of the tracker hot paths live in `benches/`.
