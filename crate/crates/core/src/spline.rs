//! Periodic cubic spline on a uniform mesh.

use crate::error::{invalid, Result};

#[derive(Debug, Clone)]
pub struct PeriodicSpline {
    x0: f64,
    h: f64,
    period: f64,
    y: Vec<f64>,
    /// Second derivatives at the nodes.
    m: Vec<f64>,
}

impl PeriodicSpline {
    /// Spline through `(x0 + j·period/n, y[j])`, extended periodically.
    pub fn new(x0: f64, period: f64, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if n < 3 {
            return Err(invalid("periodic spline needs at least three nodes"));
        }
        if !(period > 0.0) || !x0.is_finite() {
            return Err(invalid("periodic spline needs a positive period"));
        }
        let h = period / n as f64;
        let rhs: Vec<f64> = (0..n)
            .map(|i| 6.0 * (y[(i + 1) % n] - 2.0 * y[i] + y[(i + n - 1) % n]) / (h * h))
            .collect();
        let m = solve_cyclic(1.0, 4.0, 1.0, &rhs);
        Ok(PeriodicSpline { x0, h, period, y, m })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.y.len();
        let s = (x - self.x0).rem_euclid(self.period) / self.h;
        let i = (s.floor() as usize).min(n - 1);
        (i, (s - i as f64) * self.h)
    }

    fn segment(&self, i: usize) -> (f64, f64, f64, f64) {
        let n = self.y.len();
        let j = (i + 1) % n;
        (self.y[i], self.y[j], self.m[i], self.m[j])
    }

    pub fn value(&self, x: f64) -> f64 {
        let (i, t) = self.locate(x);
        let (y0, y1, m0, m1) = self.segment(i);
        let h = self.h;
        let u = h - t;
        (m0 * u * u * u + m1 * t * t * t) / (6.0 * h) + (y0 / h - m0 * h / 6.0) * u + (y1 / h - m1 * h / 6.0) * t
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (i, t) = self.locate(x);
        let (y0, y1, m0, m1) = self.segment(i);
        let h = self.h;
        let u = h - t;
        (-m0 * u * u + m1 * t * t) / (2.0 * h) + (y1 - y0) / h - (m1 - m0) * h / 6.0
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let (i, t) = self.locate(x);
        let (_, _, m0, m1) = self.segment(i);
        (m0 * (self.h - t) + m1 * t) / self.h
    }
}

/// Solves the cyclic tridiagonal system with constant stencil
/// `(lower, diag, upper)` via Sherman–Morrison.
fn solve_cyclic(lower: f64, diag: f64, upper: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let gamma = -diag;
    let mut d = vec![diag; n];
    d[0] = diag - gamma;
    d[n - 1] = diag - lower * upper / gamma;
    let x = solve_tridiagonal(lower, &d, upper, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = lower;
    let z = solve_tridiagonal(lower, &d, upper, &u);
    let fact = (x[0] + upper * x[n - 1] / gamma) / (1.0 + z[0] + upper * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(a, b)| a - fact * b).collect()
}

fn solve_tridiagonal(lower: f64, d: &[f64], upper: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    c[0] = upper / d[0];
    x[0] = rhs[0] / d[0];
    for i in 1..n {
        let den = d[i] - lower * c[i - 1];
        c[i] = upper / den;
        x[i] = (rhs[i] - lower * x[i - 1]) / den;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}
