//! Benchmark helpers; see benches/hot_paths.rs.
