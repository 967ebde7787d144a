//! Deterministic fixtures shared by the benchmarks.

use memgrad_core::config::RunConfig;
use memgrad_core::device::TrajectoryBank;
use ndarray::Array2;

/// Smooth, seed-dependent values in [-1, 1] without pulling in an RNG.
pub fn pseudo_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let s = seed as f64 * 0.618_033_988_75;
    Array2::from_shape_fn((rows, cols), |(r, c)| ((r * 131 + c * 17) as f64 * 0.37 + s).sin())
}

/// Rows of {-1, 0, +1} inputs.
pub fn ternary_inputs(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    pseudo_matrix(rows, cols, seed).mapv(|v| {
        if v > 0.33 {
            1.0
        } else if v < -0.33 {
            -1.0
        } else {
            0.0
        }
    })
}

/// Default configuration with its synthetic trajectory bank.
pub fn default_bank() -> (RunConfig, TrajectoryBank) {
    let config = RunConfig::default().resolved();
    let bank = config.device.build_bank().expect("synthetic bank");
    (config, bank)
}
