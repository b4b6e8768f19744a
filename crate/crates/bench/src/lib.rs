//! Benchmark-only crate; see `benches/platform.rs`. Nothing is exported.
