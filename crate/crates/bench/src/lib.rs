//! Criterion benchmarks for scoring, replay and command generation.
