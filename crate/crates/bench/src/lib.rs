//! Benchmark harness for the thermovar kernels; see `benches/`.
