//! Bench-only crate; see `benches/pipeline.rs` for the timings.
