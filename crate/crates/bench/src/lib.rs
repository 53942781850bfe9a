//! Bench-only crate; the targets live under `benches/`.
