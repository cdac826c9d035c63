//! Scaled band Wigner function, factored symbols and their pairings.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::bloch::WaveFunction;
use crate::error::{invalid, Result};
use crate::propagator::apply_momentum_multiplier;
use crate::semiclassics::TransportedMeasure;

/// `W^ε(x, k)` on macroscopic points `x = ε x_j` (micro nodes) times the
/// k-grid, stored row-major by `x`.
#[derive(Debug, Clone)]
pub struct WignerGrid {
    pub epsilon: f64,
    pub x: Vec<f64>,
    pub k: Vec<f64>,
    pub values: Vec<f64>,
    /// Macroscopic spacing of `x`.
    pub dx: f64,
    /// Normalized quadrature weight of one k-point.
    pub dk: f64,
    /// Largest imaginary part discarded when taking the real part.
    pub max_imag: f64,
    pub gamma_star: f64,
}

impl WignerGrid {
    pub fn value(&self, ix: usize, jk: usize) -> f64 {
        self.values[ix * self.k.len() + jk]
    }

    /// `∫∫ W^ε dx dk`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx * self.dk
    }

    /// `∫ W^ε(x, k) dk` at each `x`.
    pub fn position_marginal(&self) -> Vec<f64> {
        let nk = self.k.len();
        (0..self.x.len()).map(|i| self.values[i * nk..(i + 1) * nk].iter().sum::<f64>() * self.dk).collect()
    }

    /// `∫ W^ε(x, k) dx` at each `k`.
    pub fn quasimomentum_marginal(&self) -> Vec<f64> {
        let nk = self.k.len();
        (0..nk).map(|j| (0..self.x.len()).map(|i| self.values[i * nk + j]).sum::<f64>() * self.dx).collect()
    }
}

/// Micro node index of macroscopic point `x`, if it lies on the grid.
fn node_of(psi: &WaveFunction, epsilon: f64, x: f64) -> Result<usize> {
    let g = psi.grid();
    let y = x / epsilon;
    let s = (y - g.x_min()) / g.dx();
    let j = s.round();
    if j < 0.0 || j >= g.n_points() as f64 {
        return Err(invalid(format!("macroscopic point {x} lies outside the box")));
    }
    if (s - j).abs() > 1e-6 {
        return Err(invalid(format!("macroscopic point {x} is not ε times a grid node")));
    }
    Ok(j as usize)
}

/// `W^ε(x, k) = ε⁻¹ Σ_γ ψ(x/ε − γ/2) ψ*(x/ε + γ/2) e^{ikγ}` at the given
/// macroscopic points, which must be `ε` times micro nodes.
pub fn wigner_band(psi: &WaveFunction, epsilon: f64, x_macro: &[f64]) -> Result<WignerGrid> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    let g = *psi.grid();
    let p = g.points_per_cell();
    let nc = g.n_cells();
    let n = g.n_points();
    if !p.is_multiple_of(2) {
        return Err(invalid("half-cell shifts need an even number of points per cell"));
    }
    let nodes: Vec<usize> = x_macro.iter().map(|&x| node_of(psi, epsilon, x)).collect::<Result<_>>()?;
    let fft = FftPlanner::new().plan_fft_inverse(nc);
    let s = psi.samples();
    let half = p / 2;
    let rows: Vec<(Vec<f64>, f64)> = nodes
        .par_iter()
        .map(|&j| {
            let mut buf = vec![Complex64::new(0.0, 0.0); nc];
            let hc = nc as i64 / 2;
            for c in (-hc + 1)..hc {
                let off = c * half as i64;
                let lo = (j as i64 - off).rem_euclid(n as i64) as usize;
                let hi = (j as i64 + off).rem_euclid(n as i64) as usize;
                let term = s[lo] * s[hi].conj();
                // e^{ik_j c a} = (-1)^c e^{2πi jc/Nc}
                buf[c.rem_euclid(nc as i64) as usize] = if c % 2 == 0 { term } else { -term };
            }
            fft.process(&mut buf);
            let im = buf.iter().map(|z| z.im.abs()).fold(0.0, f64::max) / epsilon;
            (buf.iter().map(|z| z.re / epsilon).collect(), im)
        })
        .collect();
    let dx = if x_macro.len() > 1 { x_macro[1] - x_macro[0] } else { epsilon * g.dx() };
    let max_imag = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(WignerGrid {
        epsilon,
        x: x_macro.to_vec(),
        k: g.k_grid(),
        values: rows.into_iter().flat_map(|r| r.0).collect(),
        dx,
        dk: g.dk_weight(),
        max_imag,
        gamma_star: g.lattice().gamma_star(),
    })
}

/// Macroscopic points `ε x_j` every `stride` nodes over the window where
/// `|ψ|` exceeds `threshold · max|ψ|`.
pub fn support_grid(psi: &WaveFunction, epsilon: f64, stride: usize, threshold: f64) -> Vec<f64> {
    let g = psi.grid();
    let s = psi.samples();
    let max = s.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len()).filter(|&j| s[j].norm() > threshold * max).collect();
    let (Some(&lo), Some(&hi)) = (keep.first(), keep.last()) else { return Vec::new() };
    (lo..=hi).step_by(stride.max(1)).map(|j| epsilon * g.x(j)).collect()
}

/// Bounded continuous factor in position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpaceFactor {
    One,
    /// `exp(-(x - center)²/(2 width²))`.
    Gaussian { center: f64, width: f64 },
    /// `1 / (1 + ((x - center)/width)²)`.
    Lorentzian { center: f64, width: f64 },
}

impl SpaceFactor {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SpaceFactor::One => 1.0,
            SpaceFactor::Gaussian { center, width } => (-0.5 * ((x - center) / width).powi(2)).exp(),
            SpaceFactor::Lorentzian { center, width } => 1.0 / (1.0 + ((x - center) / width).powi(2)),
        }
    }
}

/// Real trigonometric polynomial `c₀ + Σ a_m cos(2πmk/P) + b_m sin(2πmk/P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    pub period: f64,
    pub constant: f64,
    pub cos: Vec<(u32, f64)>,
    pub sin: Vec<(u32, f64)>,
}

impl TrigPolynomial {
    pub fn constant(period: f64, c: f64) -> Self {
        TrigPolynomial { period, constant: c, cos: Vec::new(), sin: Vec::new() }
    }

    pub fn cos(period: f64, m: u32) -> Self {
        TrigPolynomial { period, constant: 0.0, cos: vec![(m, 1.0)], sin: Vec::new() }
    }

    pub fn sin(period: f64, m: u32) -> Self {
        TrigPolynomial { period, constant: 0.0, cos: Vec::new(), sin: vec![(m, 1.0)] }
    }

    pub fn eval(&self, k: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * k / self.period;
        self.constant
            + self.cos.iter().map(|&(m, a)| a * (m as f64 * w).cos()).sum::<f64>()
            + self.sin.iter().map(|&(m, b)| b * (m as f64 * w).sin()).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolTerm {
    pub coeff: f64,
    pub f: SpaceFactor,
    pub g: TrigPolynomial,
}

/// `a(x, ξ) = Σ c_i f_i(x) g_i(ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbol {
    pub terms: Vec<SymbolTerm>,
}

impl Symbol {
    pub fn product(f: SpaceFactor, g: TrigPolynomial) -> Self {
        Symbol { terms: vec![SymbolTerm { coeff: 1.0, f, g }] }
    }

    pub fn one(period: f64) -> Self {
        Self::product(SpaceFactor::One, TrigPolynomial::constant(period, 1.0))
    }

    pub fn eval(&self, x: f64, k: f64) -> f64 {
        self.terms.iter().map(|t| t.coeff * t.f.eval(x) * t.g.eval(k)).sum()
    }

    pub fn check_period(&self, gamma_star: f64) -> Result<()> {
        for t in &self.terms {
            if (t.g.period - gamma_star).abs() > 1e-12 * gamma_star {
                return Err(invalid(format!(
                    "symbol period {} differs from the reciprocal lattice constant {gamma_star}",
                    t.g.period
                )));
            }
        }
        Ok(())
    }
}

/// `∫∫ W^ε a dx dk` by quadrature on the grid.
pub fn pair_symbol(w: &WignerGrid, a: &Symbol) -> Result<f64> {
    a.check_period(w.gamma_star)?;
    let nk = w.k.len();
    let s: f64 = w
        .x
        .iter()
        .enumerate()
        .map(|(i, &x)| (0..nk).map(|j| w.values[i * nk + j] * a.eval(x, w.k[j])).sum::<f64>())
        .sum();
    Ok(s * w.dx * w.dk)
}

/// `∫ a dρ(t)` over the transported point masses.
pub fn classical_symbol_expectation(tm: &TransportedMeasure, a: &Symbol) -> f64 {
    tm.integrate(|r, k| a.eval(r, k))
}

/// `f(εx) g(p) ψ`: the quasimomentum factor first, then the position factor.
pub fn product_observable_apply(psi: &WaveFunction, f: &SpaceFactor, g: &TrigPolynomial, epsilon: f64) -> WaveFunction {
    let gp = apply_momentum_multiplier(psi, |xi| Complex64::new(g.eval(xi), 0.0));
    let grid = *psi.grid();
    let samples = gp.samples().iter().enumerate().map(|(j, z)| z * f.eval(epsilon * grid.x(j))).collect();
    WaveFunction::new(grid, samples).expect("same grid")
}

/// `⟨ψ, Σ c_i f_i(εx) g_i(p) ψ⟩`.
pub fn operator_expectation(psi: &WaveFunction, a: &Symbol, epsilon: f64) -> Complex64 {
    a.terms
        .iter()
        .map(|t| psi.inner(&product_observable_apply(psi, &t.f, &t.g, epsilon)).expect("same grid") * t.coeff)
        .sum()
}

/// Six factored symbols used for weak-convergence checks.
pub fn reference_dictionary(gamma_star: f64) -> Vec<Symbol> {
    let gs = gamma_star;
    vec![
        Symbol::product(SpaceFactor::Gaussian { center: 0.2, width: 0.3 }, TrigPolynomial::constant(gs, 1.0)),
        Symbol::product(SpaceFactor::One, TrigPolynomial::cos(gs, 1)),
        Symbol::product(SpaceFactor::One, TrigPolynomial::sin(gs, 1)),
        Symbol::product(SpaceFactor::Gaussian { center: 0.2, width: 0.3 }, TrigPolynomial::cos(gs, 1)),
        Symbol::product(SpaceFactor::Lorentzian { center: 0.1, width: 0.2 }, TrigPolynomial::sin(gs, 1)),
        Symbol::product(
            SpaceFactor::Gaussian { center: 0.0, width: 0.5 },
            TrigPolynomial { period: gs, constant: 1.0, cos: vec![(2, 0.5)], sin: vec![] },
        ),
    ]
}
