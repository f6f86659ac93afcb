#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;

use mll_core::seed::Rng as SeededRng;

pub fn central_difference(mut f: impl FnMut(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn uniform(rng: &mut SeededRng, r: usize, c: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-scale..scale))
}

/// Running tally of gradient comparisons.
#[derive(Default, Debug)]
pub struct GradCheck {
    pub entries: usize,
    pub failures: usize,
    pub worst: f64,
}

impl GradCheck {
    pub fn check(&mut self, analytic: f64, numeric: f64, tol: f64) {
        let e = rel_err(analytic, numeric);
        self.entries += 1;
        self.worst = self.worst.max(e);
        if e >= tol {
            self.failures += 1;
        }
    }
}

pub fn report(name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}
