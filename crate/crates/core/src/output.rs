//! Text formatting shared by the CSV writers.

/// Six significant digits in scientific notation, e.g. `2.46000e-2`.
pub fn sig6(v: f64) -> String {
    format!("{v:.5e}")
}
