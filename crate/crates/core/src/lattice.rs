//! Lattice, reciprocal lattice, Brillouin zone and the commensurate
//! real-space / quasimomentum discretization shared by every other module.
//!
//! Units are ħ = m = 1. Only `dim = 1` is supported; the field is kept so a
//! higher-dimensional extension does not change signatures.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Bravais lattice `aℤ` with reciprocal lattice `γ*ℤ`, `γ* = 2π/a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    a: f64,
    gamma_star: f64,
    dim: usize,
}

impl Lattice {
    pub fn new(a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(invalid(format!("lattice constant must be positive, got {a}")));
        }
        Ok(Lattice { a, gamma_star: 2.0 * PI / a, dim: 1 })
    }

    /// Lattice constant `a`.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Reciprocal lattice constant `2π/a`.
    pub fn gamma_star(&self) -> f64 {
        self.gamma_star
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Brillouin zone `[-γ*/2, γ*/2)` as `(lower, upper)`.
    pub fn brillouin_zone(&self) -> (f64, f64) {
        (-0.5 * self.gamma_star, 0.5 * self.gamma_star)
    }

    /// Reduces `k` onto the principal branch `[-γ*/2, γ*/2)`.
    pub fn reduce_k(&self, k: f64) -> f64 {
        let g = self.gamma_star;
        let r = (k + 0.5 * g).rem_euclid(g) - 0.5 * g;
        // rem_euclid can round up to exactly g
        if r >= 0.5 * g {
            r - g
        } else {
            r
        }
    }
}

/// Free function form of [`Lattice::new`].
pub fn build_lattice(a: f64) -> Result<Lattice> {
    Lattice::new(a)
}

/// Commensurate discretization of a periodic box of `n_cells` unit cells.
///
/// The real-space grid has `n_cells * points_per_cell` points on
/// `[-L/2, L/2)`; the quasimomentum grid has `n_cells` points on the
/// Brillouin zone `[-γ*/2, γ*/2)`. Because the box holds an integer number
/// of cells the discrete Bloch transform between the two is exactly unitary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationGrid {
    lattice: Lattice,
    n_cells: usize,
    points_per_cell: usize,
}

impl SimulationGrid {
    pub fn new(lattice: Lattice, n_cells: usize, points_per_cell: usize) -> Result<Self> {
        for (name, v) in [("n_cells", n_cells), ("points_per_cell", points_per_cell)] {
            if v < 4 || !v.is_power_of_two() {
                return Err(invalid(format!("{name} must be a power of two >= 4, got {v}")));
            }
        }
        Ok(SimulationGrid { lattice, n_cells, points_per_cell })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn points_per_cell(&self) -> usize {
        self.points_per_cell
    }

    /// Total number of real-space points.
    pub fn n_points(&self) -> usize {
        self.n_cells * self.points_per_cell
    }

    pub fn dx(&self) -> f64 {
        self.lattice.a / self.points_per_cell as f64
    }

    /// Box length `L = n_cells · a`.
    pub fn box_length(&self) -> f64 {
        self.n_cells as f64 * self.lattice.a
    }

    /// Left edge `-L/2` of the box.
    pub fn x_min(&self) -> f64 {
        -0.5 * self.box_length()
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min() + j as f64 * self.dx()
    }

    pub fn x_grid(&self) -> Vec<f64> {
        (0..self.n_points()).map(|j| self.x(j)).collect()
    }

    /// Spacing of the quasimomentum grid, `γ*/n_cells`.
    pub fn dk_spacing(&self) -> f64 {
        self.lattice.gamma_star / self.n_cells as f64
    }

    /// Quadrature weight of one k-point under the normalized measure on the
    /// Brillouin zone (total mass one).
    pub fn dk_weight(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn k(&self, j: usize) -> f64 {
        -0.5 * self.lattice.gamma_star + j as f64 * self.dk_spacing()
    }

    pub fn k_grid(&self) -> Vec<f64> {
        (0..self.n_cells).map(|j| self.k(j)).collect()
    }

    /// Angular frequency of FFT bin `l` on the full box.
    pub fn xi(&self, l: usize) -> f64 {
        let n = self.n_points();
        let s = if l < n / 2 { l as f64 } else { l as f64 - n as f64 };
        2.0 * PI * s / self.box_length()
    }

    /// Largest representable kinetic energy `½(π/dx)²`.
    pub fn kinetic_max(&self) -> f64 {
        0.5 * (PI / self.dx()).powi(2)
    }
}

/// Free function form of [`SimulationGrid::new`].
pub fn build_grid(lattice: Lattice, n_cells: usize, points_per_cell: usize) -> Result<SimulationGrid> {
    SimulationGrid::new(lattice, n_cells, points_per_cell)
}

/// `V(x) = Σ_m 2 v_m cos(m γ* x)`, a real lattice-periodic trigonometric
/// polynomial with Fourier coefficients `V̂(±m γ*) = v_m`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPotential {
    cosine_coefficients: Vec<(u32, f64)>,
}

impl PeriodicPotential {
    pub fn new(cosine_coefficients: Vec<(u32, f64)>) -> Result<Self> {
        if let Some((m, v)) = cosine_coefficients.iter().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!("non-finite cosine coefficient v_{m} = {v}")));
        }
        Ok(PeriodicPotential { cosine_coefficients })
    }

    pub fn zero() -> Self {
        PeriodicPotential::default()
    }

    /// Single harmonic `2 v cos(γ* x)`.
    pub fn single(v: f64) -> Self {
        PeriodicPotential { cosine_coefficients: vec![(1, v)] }
    }

    pub fn coefficients(&self) -> &[(u32, f64)] {
        &self.cosine_coefficients
    }

    pub fn is_zero(&self) -> bool {
        self.cosine_coefficients.iter().all(|&(_, v)| v == 0.0)
    }

    pub fn max_harmonic(&self) -> u32 {
        self.cosine_coefficients.iter().map(|&(m, _)| m).max().unwrap_or(0)
    }

    /// Fourier coefficient `V̂(g γ*)` for integer `g`.
    pub fn fourier(&self, g: i64) -> f64 {
        let ga = g.unsigned_abs();
        self.cosine_coefficients
            .iter()
            .filter(|&&(m, _)| m as u64 == ga)
            .map(|&(m, v)| if m == 0 { 2.0 * v } else { v })
            .sum()
    }

    pub fn value(&self, lattice: &Lattice, x: f64) -> f64 {
        let gs = lattice.gamma_star();
        self.cosine_coefficients
            .iter()
            .map(|&(m, v)| 2.0 * v * (m as f64 * gs * x).cos())
            .sum()
    }

    /// Upper bound `Σ 2|v_m|` on `|V|`.
    pub fn sup_bound(&self) -> f64 {
        self.cosine_coefficients.iter().map(|&(_, v)| 2.0 * v.abs()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalKind {
    Gaussian,
    GaussianSum,
}

/// One Gaussian bump `w₀ exp(-(r - r₀)² / 2σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTerm {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

/// Slowly varying external potential `W(r)`, a finite sum of Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPotential {
    kind: ExternalKind,
    terms: Vec<GaussianTerm>,
}

impl ExternalPotential {
    pub fn new(kind: ExternalKind, terms: Vec<GaussianTerm>) -> Result<Self> {
        if kind == ExternalKind::Gaussian && terms.len() > 1 {
            return Err(invalid("external.kind = gaussian takes exactly one term"));
        }
        for t in &terms {
            if !(t.amplitude.is_finite() && t.center.is_finite()) || !(t.width > 0.0) {
                return Err(invalid(format!("bad Gaussian term {t:?}")));
            }
        }
        Ok(ExternalPotential { kind, terms })
    }

    pub fn gaussian(amplitude: f64, center: f64, width: f64) -> Result<Self> {
        Self::new(ExternalKind::Gaussian, vec![GaussianTerm { amplitude, center, width }])
    }

    pub fn zero() -> Self {
        ExternalPotential { kind: ExternalKind::GaussianSum, terms: Vec::new() }
    }

    pub fn kind(&self) -> ExternalKind {
        self.kind
    }

    pub fn terms(&self) -> &[GaussianTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == 0.0)
    }

    pub fn value(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let z = (r - t.center) / t.width;
                t.amplitude * (-0.5 * z * z).exp()
            })
            .sum()
    }

    /// `∇W(r)`.
    pub fn gradient(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let z = (r - t.center) / t.width;
                -t.amplitude * z / t.width * (-0.5 * z * z).exp()
            })
            .sum()
    }

    /// Upper bound `Σ|w₀|` on `|W|`.
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.amplitude.abs()).sum()
    }

    /// Fourier-series coefficient of the micro-scale potential `W(εx)` on a
    /// periodic box of length `box_len`, at wave number `q`:
    /// `(1/L) ∫ W(εx) e^{-iqx} dx`, evaluated in closed form over ℝ.
    pub fn box_fourier(&self, q: f64, epsilon: f64, box_len: f64) -> num_complex::Complex64 {
        let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
        self.terms
            .iter()
            .map(|t| {
                let s = t.width * q / epsilon;
                let mag = t.amplitude * t.width * sqrt_2pi / (epsilon * box_len) * (-0.5 * s * s).exp();
                num_complex::Complex64::from_polar(mag, -q * t.center / epsilon)
            })
            .sum()
    }

    /// Smallest `|q|` beyond which every box Fourier coefficient is below
    /// `rel_tol` relative to the `q = 0` term.
    pub fn fourier_support(&self, epsilon: f64, rel_tol: f64) -> f64 {
        let min_width = self.terms.iter().map(|t| t.width).fold(f64::INFINITY, f64::min);
        if !min_width.is_finite() {
            return 0.0;
        }
        epsilon / min_width * (-2.0 * rel_tol.ln()).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_examples() {
        let l = build_lattice(2.0 * PI).unwrap();
        assert!((l.gamma_star() - 1.0).abs() < 1e-15);
        assert_eq!(l.brillouin_zone(), (-0.5, 0.5));
        let l1 = build_lattice(1.0).unwrap();
        assert!((l1.gamma_star() - 2.0 * PI).abs() < 1e-15);
        assert!(build_lattice(-1.0).is_err());
        assert!(build_lattice(0.0).is_err());
        assert!(build_lattice(f64::NAN).is_err());
    }

    #[test]
    fn gamma_star_times_a_within_ulps() {
        for i in 0..=1000 {
            let a = 0.1 + (100.0 - 0.1) * i as f64 / 1000.0;
            let l = build_lattice(a).unwrap();
            let prod = l.gamma_star() * l.a();
            let ulp = (2.0 * PI) * f64::EPSILON;
            assert!((prod - 2.0 * PI).abs() <= 4.0 * ulp, "a = {a}");
        }
    }

    #[test]
    fn grid_examples() {
        let l = build_lattice(2.0 * PI).unwrap();
        let g = build_grid(l, 8, 16).unwrap();
        assert_eq!(g.n_points(), 128);
        assert!((g.dx() - 2.0 * PI / 16.0).abs() < 1e-15);
        assert!((g.dk_spacing() - 0.125).abs() < 1e-15);

        let g = build_grid(l, 4, 4).unwrap();
        assert!((g.x(0) + 4.0 * PI).abs() < 1e-12);
        assert!((g.x(g.n_points() - 1) + g.dx() - 4.0 * PI).abs() < 1e-12);

        assert!(build_grid(l, 3, 16).is_err());
        assert!(build_grid(l, 8, 2).is_err());
        assert!(build_grid(l, 12, 16).is_err());
    }

    #[test]
    fn grid_tiles_box_and_zone() {
        let l = build_lattice(1.7).unwrap();
        let g = build_grid(l, 32, 8).unwrap();
        let total: f64 = g.x_grid().iter().map(|_| g.dx()).sum();
        assert!((total - g.box_length()).abs() < 1e-10);
        let ks = g.k_grid();
        let (lo, hi) = l.brillouin_zone();
        assert!((ks[0] - lo).abs() < 1e-15);
        assert!((ks[ks.len() - 1] + g.dk_spacing() - hi).abs() < 1e-12);
        let mass: f64 = ks.iter().map(|_| g.dk_weight()).sum();
        assert!((mass - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reduce_k_principal_branch() {
        let l = build_lattice(2.0 * PI).unwrap();
        assert!((l.reduce_k(0.7) + 0.3).abs() < 1e-15);
        assert!((l.reduce_k(-0.5) + 0.5).abs() < 1e-15);
        assert!((l.reduce_k(0.5) + 0.5).abs() < 1e-15);
        assert!((l.reduce_k(3.25) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn external_gradient_matches_difference() {
        let w = ExternalPotential::new(
            ExternalKind::GaussianSum,
            vec![
                GaussianTerm { amplitude: 0.1, center: 0.4, width: 0.5 },
                GaussianTerm { amplitude: -0.05, center: -1.0, width: 0.3 },
            ],
        )
        .unwrap();
        for &r in &[-2.0, -0.7, 0.0, 0.33, 1.5] {
            let h = 1e-6;
            let fd = (w.value(r + h) - w.value(r - h)) / (2.0 * h);
            assert!((fd - w.gradient(r)).abs() < 1e-9);
        }
    }

    #[test]
    fn box_fourier_resums_to_value() {
        // Σ_q Ŵ_q e^{iqx} = W(εx) on the box.
        let w = ExternalPotential::gaussian(0.1, 0.4, 0.5).unwrap();
        let l = build_lattice(2.0 * PI).unwrap();
        let g = build_grid(l, 64, 4).unwrap();
        let eps = 0.2;
        let len = g.box_length();
        for &x in &[-3.0, 0.0, 2.0, 5.5] {
            let mut s = num_complex::Complex64::new(0.0, 0.0);
            for j in -2000i64..=2000 {
                let q = j as f64 * 2.0 * PI / len;
                s += w.box_fourier(q, eps, len) * num_complex::Complex64::from_polar(1.0, q * x);
            }
            assert!((s.re - w.value(eps * x)).abs() < 1e-12);
            assert!(s.im.abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_potential_fourier() {
        let v = PeriodicPotential::new(vec![(1, 0.15), (3, -0.02)]).unwrap();
        assert_eq!(v.fourier(1), 0.15);
        assert_eq!(v.fourier(-1), 0.15);
        assert_eq!(v.fourier(3), -0.02);
        assert_eq!(v.fourier(2), 0.0);
        let l = build_lattice(2.0 * PI).unwrap();
        assert!((v.value(&l, 0.0) - 0.26).abs() < 1e-15);
        assert!(ExternalPotential::new(
            ExternalKind::Gaussian,
            vec![GaussianTerm { amplitude: 1.0, center: 0.0, width: 1.0 }; 2]
        )
        .is_err());
    }
}
