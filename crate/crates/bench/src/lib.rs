//! Criterion benchmarks for parsing, execution, and candidate scoring live in `benches/`.
