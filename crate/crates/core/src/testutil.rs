//! Shared helpers for unit tests.

/// Central difference `(f(h) - f(-h)) / 2h` of a perturbation closure.
pub fn central_difference(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

/// Relative error with a small absolute floor so near-zero gradients are
/// compared on an absolute scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
