//! Criterion benchmarks for the solver pipeline live under benches/.
