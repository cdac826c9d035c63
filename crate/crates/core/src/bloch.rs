//! Wave functions on the simulation box and the discrete Bloch–Floquet
//! transform onto fibers `(k, y)` with `k` on the quasimomentum grid and `y`
//! in one unit cell.
//!
//! Convention: `(Uψ)(k, y) = Σ_γ e^{-i(y+γ)k} ψ(y+γ)` and
//! `(U⁻¹φ)(x) = ∫ e^{ixk} φ(k, x) dk` with `dk` the normalized measure on the
//! zone, so `‖Uψ‖² = Σ_k dk Σ_y |Uψ(k,y)|² dx = ‖ψ‖²`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::SimulationGrid;

/// A state sampled on the real-space grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: SimulationGrid,
    samples: Vec<Complex64>,
}

impl WaveFunction {
    pub fn new(grid: SimulationGrid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.n_points() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {} points",
                samples.len(),
                grid.n_points()
            )));
        }
        Ok(WaveFunction { grid, samples })
    }

    pub fn zeros(grid: SimulationGrid) -> Self {
        WaveFunction { grid, samples: vec![Complex64::new(0.0, 0.0); grid.n_points()] }
    }

    pub fn from_fn(grid: SimulationGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let samples = (0..grid.n_points()).map(|j| f(grid.x(j))).collect();
        WaveFunction { grid, samples }
    }

    pub fn grid(&self) -> &SimulationGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn norm_sq(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `⟨self, other⟩ = Σ conj(self) other dx`.
    pub fn inner(&self, other: &WaveFunction) -> Result<Complex64> {
        check_same_grid(&self.grid, &other.grid)?;
        let s: Complex64 = self.samples.iter().zip(&other.samples).map(|(a, b)| a.conj() * b).sum();
        Ok(s * self.grid.dx())
    }

    pub fn scale(&mut self, c: Complex64) {
        self.samples.iter_mut().for_each(|z| *z *= c);
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.scale(Complex64::new(1.0 / n, 0.0));
        }
    }

    /// `self - other` in L².
    pub fn distance(&self, other: &WaveFunction) -> Result<f64> {
        check_same_grid(&self.grid, &other.grid)?;
        let s: f64 = self.samples.iter().zip(&other.samples).map(|(a, b)| (a - b).norm_sqr()).sum();
        Ok((s * self.grid.dx()).sqrt())
    }

    pub fn conj(&self) -> WaveFunction {
        WaveFunction { grid: self.grid, samples: self.samples.iter().map(|z| z.conj()).collect() }
    }
}

pub(crate) fn check_same_grid(a: &SimulationGrid, b: &SimulationGrid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!(
            "grids differ: {}x{} vs {}x{}",
            a.n_cells(),
            a.points_per_cell(),
            b.n_cells(),
            b.points_per_cell()
        )));
    }
    Ok(())
}

/// Bloch–Floquet image of a [`WaveFunction`]: one cell-periodic fiber per
/// grid quasimomentum. Storage is k-major, `fibers[j * P + m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberedState {
    grid: SimulationGrid,
    fibers: Vec<Complex64>,
}

impl FiberedState {
    pub fn new(grid: SimulationGrid, fibers: Vec<Complex64>) -> Result<Self> {
        if fibers.len() != grid.n_points() {
            return Err(Error::GridMismatch(format!(
                "{} fiber values for a grid of {} points",
                fibers.len(),
                grid.n_points()
            )));
        }
        Ok(FiberedState { grid, fibers })
    }

    pub fn zeros(grid: SimulationGrid) -> Self {
        FiberedState { grid, fibers: vec![Complex64::new(0.0, 0.0); grid.n_points()] }
    }

    pub fn grid(&self) -> &SimulationGrid {
        &self.grid
    }

    pub fn fiber(&self, j: usize) -> &[Complex64] {
        let p = self.grid.points_per_cell();
        &self.fibers[j * p..(j + 1) * p]
    }

    pub fn fiber_mut(&mut self, j: usize) -> &mut [Complex64] {
        let p = self.grid.points_per_cell();
        &mut self.fibers[j * p..(j + 1) * p]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.fibers
    }

    /// `‖f(k)‖²_{L²(M)}` for grid quasimomentum `j`.
    pub fn fiber_norm_sq(&self, j: usize) -> f64 {
        self.fiber(j).iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn norm_sq(&self) -> f64 {
        (0..self.grid.n_cells()).map(|j| self.fiber_norm_sq(j)).sum::<f64>() * self.grid.dk_weight()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance(&self, other: &FiberedState) -> Result<f64> {
        check_same_grid(&self.grid, &other.grid)?;
        let s: f64 = self.fibers.iter().zip(&other.fibers).map(|(a, b)| (a - b).norm_sqr()).sum();
        Ok((s * self.grid.dx() * self.grid.dk_weight()).sqrt())
    }
}

/// Reusable FFT plans and phase tables for one grid.
#[derive(Clone)]
pub struct BlochTransform {
    grid: SimulationGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `e^{-i y_m k_j}` stored `[j * P + m]`.
    phase: Vec<Complex64>,
}

impl std::fmt::Debug for BlochTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlochTransform").field("grid", &self.grid).finish_non_exhaustive()
    }
}

impl BlochTransform {
    pub fn new(grid: SimulationGrid) -> Self {
        let mut planner = FftPlanner::new();
        let nc = grid.n_cells();
        let p = grid.points_per_cell();
        let mut phase = Vec::with_capacity(nc * p);
        for j in 0..nc {
            let k = grid.k(j);
            for m in 0..p {
                let y = grid.x(m);
                phase.push(Complex64::from_polar(1.0, -y * k));
            }
        }
        BlochTransform {
            grid,
            forward: planner.plan_fft_forward(nc),
            inverse: planner.plan_fft_inverse(nc),
            phase,
        }
    }

    pub fn grid(&self) -> &SimulationGrid {
        &self.grid
    }

    pub fn forward(&self, psi: &WaveFunction) -> Result<FiberedState> {
        check_same_grid(&self.grid, psi.grid())?;
        let nc = self.grid.n_cells();
        let p = self.grid.points_per_cell();
        let mut fibers = vec![Complex64::new(0.0, 0.0); nc * p];
        let mut buf = vec![Complex64::new(0.0, 0.0); nc];
        let samples = psi.samples();
        for m in 0..p {
            // e^{-i c a k_j} = (-1)^c e^{-2πi cj/Nc} since k_0 = -γ*/2
            for (c, b) in buf.iter_mut().enumerate() {
                let v = samples[c * p + m];
                *b = if c % 2 == 0 { v } else { -v };
            }
            self.forward.process(&mut buf);
            for (j, b) in buf.iter().enumerate() {
                fibers[j * p + m] = b * self.phase[j * p + m];
            }
        }
        Ok(FiberedState { grid: self.grid, fibers })
    }

    pub fn inverse(&self, f: &FiberedState) -> Result<WaveFunction> {
        check_same_grid(&self.grid, f.grid())?;
        let nc = self.grid.n_cells();
        let p = self.grid.points_per_cell();
        let mut samples = vec![Complex64::new(0.0, 0.0); nc * p];
        let mut buf = vec![Complex64::new(0.0, 0.0); nc];
        let scale = 1.0 / nc as f64;
        for m in 0..p {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = f.fibers[j * p + m] * self.phase[j * p + m].conj();
            }
            self.inverse.process(&mut buf);
            for (c, b) in buf.iter().enumerate() {
                let v = b * scale;
                samples[c * p + m] = if c % 2 == 0 { v } else { -v };
            }
        }
        Ok(WaveFunction { grid: self.grid, samples })
    }
}

/// One-shot forward transform; build a [`BlochTransform`] to reuse plans.
pub fn bloch_transform(psi: &WaveFunction) -> Result<FiberedState> {
    BlochTransform::new(*psi.grid()).forward(psi)
}

pub fn inverse_bloch_transform(f: &FiberedState) -> Result<WaveFunction> {
    BlochTransform::new(*f.grid()).inverse(f)
}

/// Cell-periodic samples `φ(y_m) = a^{-1/2} Σ_g c_g e^{i g γ* y_m}` of a
/// plane-wave coefficient vector with `g ∈ [-cutoff, cutoff]`.
pub fn fiber_samples(grid: &SimulationGrid, coeffs: &[Complex64]) -> Vec<Complex64> {
    let p = grid.points_per_cell();
    let cutoff = (coeffs.len() as i64 - 1) / 2;
    let norm = 1.0 / grid.lattice().a().sqrt();
    // y_m = x_min + m dx with x_min a lattice vector, so only m matters
    (0..p)
        .map(|m| {
            let mut s = Complex64::new(0.0, 0.0);
            for (i, c) in coeffs.iter().enumerate() {
                let g = i as i64 - cutoff;
                let theta = 2.0 * PI * (g * m as i64).rem_euclid(p as i64) as f64 / p as f64;
                s += c * Complex64::from_polar(1.0, theta);
            }
            s * norm
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_grid, build_lattice};

    fn grid() -> SimulationGrid {
        build_grid(build_lattice(2.0 * PI).unwrap(), 16, 8).unwrap()
    }

    fn pseudo_random(grid: SimulationGrid, seed: u64) -> WaveFunction {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let samples = (0..grid.n_points()).map(|_| Complex64::new(next(), next())).collect();
        WaveFunction::new(grid, samples).unwrap()
    }

    #[test]
    fn plane_wave_occupies_one_fiber() {
        let g = grid();
        let j0 = 11;
        let k0 = g.k(j0);
        let psi = WaveFunction::from_fn(g, |x| Complex64::from_polar(1.0, k0 * x));
        let f = bloch_transform(&psi).unwrap();
        for j in 0..g.n_cells() {
            let n = f.fiber_norm_sq(j);
            if j == j0 {
                assert!((n * g.dk_weight() - psi.norm_sq()).abs() < 1e-9);
            } else {
                assert!(n < 1e-20, "fiber {j} has {n}");
            }
        }
        // k0 + γ* folds onto the same fiber
        let psi2 = WaveFunction::from_fn(g, |x| Complex64::from_polar(1.0, (k0 + 1.0) * x));
        let f2 = bloch_transform(&psi2).unwrap();
        assert!(f2.fiber_norm_sq(j0) * g.dk_weight() > psi2.norm_sq() * (1.0 - 1e-12));
    }

    #[test]
    fn inverse_of_single_fiber_is_plane_wave() {
        let g = grid();
        let j0 = 5;
        let k0 = g.k(j0);
        let mut f = FiberedState::zeros(g);
        // fiber of e^{ik0 x}: (Uψ)(k0, y) = Nc · e^{-i y k0} e^{i y k0} = Nc
        for m in 0..g.points_per_cell() {
            f.fiber_mut(j0)[m] = Complex64::new(g.n_cells() as f64, 0.0);
        }
        let psi = inverse_bloch_transform(&f).unwrap();
        for (j, z) in psi.samples().iter().enumerate() {
            let expect = Complex64::from_polar(1.0, k0 * g.x(j));
            assert!((z - expect).norm() < 1e-12);
        }
        let zero = inverse_bloch_transform(&FiberedState::zeros(g)).unwrap();
        assert!(zero.norm() == 0.0);
    }

    #[test]
    fn unitary_and_round_trip() {
        let g = grid();
        let t = BlochTransform::new(g);
        for seed in 0..20 {
            let psi = pseudo_random(g, seed);
            let f = t.forward(&psi).unwrap();
            assert!((f.norm() - psi.norm()).abs() < 1e-12 * psi.norm().max(1.0));
            let back = t.inverse(&f).unwrap();
            let dev = back.samples().iter().zip(psi.samples()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(dev < 1e-12);
            let g2 = t.inverse(&f).unwrap();
            assert!((g2.norm() - f.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn fibers_are_quasi_periodic_lattice_sums() {
        // direct lattice sum at one (k, y) against the FFT route
        let g = grid();
        let psi = pseudo_random(g, 99);
        let f = bloch_transform(&psi).unwrap();
        let p = g.points_per_cell();
        for &(j, m) in &[(0usize, 0usize), (3, 5), (15, 7)] {
            let k = g.k(j);
            let mut s = Complex64::new(0.0, 0.0);
            for c in 0..g.n_cells() {
                let x = g.x(c * p + m);
                s += Complex64::from_polar(1.0, -x * k) * psi.samples()[c * p + m];
            }
            assert!((s - f.fiber(j)[m]).norm() < 1e-12);
        }
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let g = grid();
        let other = build_grid(*g.lattice(), 8, 8).unwrap();
        let psi = WaveFunction::zeros(other);
        let t = BlochTransform::new(g);
        assert!(matches!(t.forward(&psi), Err(Error::GridMismatch(_))));
        assert!(WaveFunction::new(g, vec![Complex64::new(0.0, 0.0); 3]).is_err());
    }
}
