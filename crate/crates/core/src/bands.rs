//! Fiber Hamiltonians `H_per(k) = ½(D_x + k)² + V` in a truncated plane-wave
//! basis, band structures on a quasimomentum mesh, parallel-transport gauge
//! fixing, band velocities and band projections.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bloch::{fiber_samples, FiberedState};
use crate::error::{invalid, Error, Result};
use crate::lattice::{Lattice, PeriodicPotential, SimulationGrid};

pub const MIN_CUTOFF: usize = 8;

/// Eigen-decomposition of one fiber Hamiltonian. Plane-wave index `i`
/// corresponds to `G = (i - cutoff) γ*`.
#[derive(Debug, Clone)]
pub struct FiberEigenSystem {
    pub k: f64,
    pub cutoff: usize,
    gamma_star: f64,
    /// Ascending.
    pub energies: Vec<f64>,
    /// `vectors[n]` is the coefficient column of eigenvalue `energies[n]`.
    pub vectors: Vec<Vec<Complex64>>,
}

impl FiberEigenSystem {
    pub fn dimension(&self) -> usize {
        2 * self.cutoff + 1
    }

    /// `k + G` for plane-wave index `i`.
    pub fn momentum(&self, i: usize) -> f64 {
        self.k + (i as f64 - self.cutoff as f64) * self.gamma_star
    }

    /// Hellmann–Feynman velocity `Σ_G (k+G)|c_G|²`.
    pub fn velocity(&self, n: usize) -> f64 {
        self.vectors[n].iter().enumerate().map(|(i, c)| self.momentum(i) * c.norm_sqr()).sum()
    }

    /// `⟨φ_m, (D_x + k) φ_n⟩`.
    pub fn momentum_element(&self, m: usize, n: usize) -> Complex64 {
        self.vectors[m]
            .iter()
            .zip(&self.vectors[n])
            .enumerate()
            .map(|(i, (a, b))| a.conj() * b * self.momentum(i))
            .sum()
    }

    /// `‖Q_n ∇_k P_n‖ = (Σ_{m≠n} |⟨φ_m,(D_x+k)φ_n⟩|² / (E_m − E_n)²)^{1/2}`,
    /// the resolvent form of the projection derivative.
    pub fn grad_projection_norm(&self, n: usize) -> f64 {
        (0..self.energies.len())
            .filter(|&m| m != n)
            .map(|m| {
                let gap = self.energies[m] - self.energies[n];
                self.momentum_element(m, n).norm_sqr() / (gap * gap)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest distance from `E_n` to any other eigenvalue in the basis.
    pub fn gap_margin(&self, n: usize) -> f64 {
        self.energies
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != n)
            .map(|(_, e)| (e - self.energies[n]).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Plane-wave matrix `H_{GG'} = ½(k+G)² δ_{GG'} + V̂(G − G')`. Real
/// symmetric because `V` is an even cosine series.
pub fn fiber_hamiltonian(v: &PeriodicPotential, lattice: &Lattice, k: f64, cutoff: usize) -> DMatrix<f64> {
    let dim = 2 * cutoff + 1;
    let gs = lattice.gamma_star();
    DMatrix::from_fn(dim, dim, |r, c| {
        let gr = r as i64 - cutoff as i64;
        let gc = c as i64 - cutoff as i64;
        let mut h = v.fourier(gr - gc);
        if r == c {
            let p = k + gr as f64 * gs;
            h += 0.5 * p * p;
        }
        h
    })
}

pub fn solve_fiber(v: &PeriodicPotential, lattice: &Lattice, k: f64, cutoff: usize) -> Result<FiberEigenSystem> {
    if cutoff < MIN_CUTOFF {
        return Err(invalid(format!("plane-wave cutoff {cutoff} below minimum {MIN_CUTOFF}")));
    }
    if v.max_harmonic() as usize > cutoff {
        return Err(invalid(format!(
            "cutoff {cutoff} cannot hold potential harmonic {}",
            v.max_harmonic()
        )));
    }
    if !k.is_finite() {
        return Err(invalid("non-finite quasimomentum"));
    }
    let h = fiber_hamiltonian(v, lattice, k, cutoff);
    let eig = h.symmetric_eigen();
    let dim = 2 * cutoff + 1;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let col = eig.eigenvectors.column(i);
            let mut c: Vec<Complex64> = col.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            canonical_phase(&mut c);
            c
        })
        .collect();
    Ok(FiberEigenSystem { k, cutoff, gamma_star: lattice.gamma_star(), energies, vectors })
}

/// Rotates `c` so its largest-magnitude entry is real and positive.
fn canonical_phase(c: &mut [Complex64]) {
    let (imax, _) = c
        .iter()
        .enumerate()
        .fold((0, -1.0), |acc, (i, z)| if z.norm() > acc.1 + 1e-14 { (i, z.norm()) } else { acc });
    let z = c[imax];
    if z.norm() > 0.0 {
        let rot = z.conj() / z.norm();
        c.iter_mut().for_each(|x| *x *= rot);
    }
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Band data on a uniform mesh `k_j = -γ*/2 + (j + offset) γ*/n_k`.
#[derive(Debug, Clone)]
pub struct BandStructure {
    lattice: Lattice,
    potential: PeriodicPotential,
    cutoff: usize,
    n_k: usize,
    offset: f64,
    gap_floor: f64,
    energies: Vec<Vec<f64>>,
    vectors: Vec<Vec<Vec<Complex64>>>,
    velocities: Vec<Vec<f64>>,
    gap_margins: Vec<Vec<f64>>,
    isolated: Vec<bool>,
    gauge_fixed: Vec<bool>,
    zak: Vec<Option<f64>>,
}

/// Band structure on the quasimomentum grid of `grid`, with every isolated
/// band gauge-fixed.
pub fn compute_band_structure(
    v: &PeriodicPotential,
    grid: &SimulationGrid,
    cutoff: usize,
    n_bands: usize,
    gap_floor: f64,
) -> Result<BandStructure> {
    BandStructure::on_mesh(v, grid.lattice(), grid.n_cells(), 0.0, cutoff, n_bands, gap_floor)
}

impl BandStructure {
    /// Band structure on a mesh of `n_k` points shifted by `offset` (a
    /// fraction of the mesh spacing in `[0, 1)`).
    pub fn on_mesh(
        v: &PeriodicPotential,
        lattice: &Lattice,
        n_k: usize,
        offset: f64,
        cutoff: usize,
        n_bands: usize,
        gap_floor: f64,
    ) -> Result<Self> {
        if n_bands == 0 {
            return Err(invalid("n_bands must be positive"));
        }
        if n_bands > cutoff {
            return Err(invalid(format!(
                "n_bands = {n_bands} needs a plane-wave basis larger than 2*cutoff+1 = {}",
                2 * cutoff + 1
            )));
        }
        if n_k < 2 {
            return Err(invalid("mesh needs at least two k-points"));
        }
        if !(0.0..1.0).contains(&offset) {
            return Err(invalid(format!("mesh offset {offset} outside [0, 1)")));
        }
        let gs = lattice.gamma_star();
        let ks: Vec<f64> = (0..n_k).map(|j| -0.5 * gs + (j as f64 + offset) * gs / n_k as f64).collect();
        let fibers: Vec<FiberEigenSystem> =
            ks.par_iter().map(|&k| solve_fiber(v, lattice, k, cutoff)).collect::<Result<_>>()?;

        let mut bs = BandStructure {
            lattice: *lattice,
            potential: v.clone(),
            cutoff,
            n_k,
            offset,
            gap_floor,
            energies: vec![Vec::with_capacity(n_k); n_bands],
            vectors: vec![Vec::with_capacity(n_k); n_bands],
            velocities: vec![Vec::with_capacity(n_k); n_bands],
            gap_margins: vec![Vec::with_capacity(n_k); n_bands],
            isolated: vec![false; n_bands],
            gauge_fixed: vec![false; n_bands],
            zak: vec![None; n_bands],
        };
        for f in &fibers {
            for n in 0..n_bands {
                bs.energies[n].push(f.energies[n]);
                bs.vectors[n].push(f.vectors[n].clone());
                bs.velocities[n].push(f.velocity(n));
                bs.gap_margins[n].push(f.gap_margin(n));
            }
        }
        for n in 0..n_bands {
            bs.isolated[n] = bs.gap_margins[n].iter().all(|&g| g > gap_floor);
        }
        for n in 0..n_bands {
            if bs.isolated[n] {
                bs.gauge_fix_band(n)?;
            }
        }
        Ok(bs)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn potential(&self) -> &PeriodicPotential {
        &self.potential
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn n_bands(&self) -> usize {
        self.energies.len()
    }

    pub fn gap_floor(&self) -> f64 {
        self.gap_floor
    }

    pub fn mesh_offset(&self) -> f64 {
        self.offset
    }

    pub fn dk(&self) -> f64 {
        self.lattice.gamma_star() / self.n_k as f64
    }

    pub fn k(&self, j: usize) -> f64 {
        -0.5 * self.lattice.gamma_star() + (j as f64 + self.offset) * self.dk()
    }

    pub fn k_grid(&self) -> Vec<f64> {
        (0..self.n_k).map(|j| self.k(j)).collect()
    }

    fn check_band(&self, n: usize) -> Result<()> {
        if n >= self.n_bands() {
            return Err(invalid(format!("band index {n} out of range (n_bands = {})", self.n_bands())));
        }
        Ok(())
    }

    pub fn energies(&self, n: usize) -> &[f64] {
        &self.energies[n]
    }

    pub fn vector(&self, n: usize, j: usize) -> &[Complex64] {
        &self.vectors[n][j]
    }

    pub fn gap_margins(&self, n: usize) -> &[f64] {
        &self.gap_margins[n]
    }

    pub fn is_isolated(&self, n: usize) -> bool {
        self.isolated.get(n).copied().unwrap_or(false)
    }

    pub fn is_gauge_fixed(&self, n: usize) -> bool {
        self.gauge_fixed.get(n).copied().unwrap_or(false)
    }

    /// Holonomy recorded while gauge fixing band `n`, in `(-π, π]`.
    pub fn zak_phase(&self, n: usize) -> Option<f64> {
        self.zak.get(n).copied().flatten()
    }

    pub fn require_isolated(&self, n: usize) -> Result<()> {
        self.check_band(n)?;
        if !self.isolated[n] {
            let (j, m) = self.gap_margins[n]
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (j, &m)| if m < acc.1 { (j, m) } else { acc });
            return Err(Error::NotIsolated { band: n, k: self.k(j), margin: m });
        }
        Ok(())
    }

    /// Whether the mesh coincides with the quasimomentum grid of `grid`.
    pub fn check_grid(&self, grid: &SimulationGrid) -> Result<()> {
        if self.n_k != grid.n_cells() || self.offset != 0.0 || self.lattice != *grid.lattice() {
            return Err(Error::GridMismatch(format!(
                "band mesh ({} points, offset {}) does not match grid with {} cells",
                self.n_k,
                self.offset,
                grid.n_cells()
            )));
        }
        Ok(())
    }

    /// `⟨φ_{n1}(k_i), φ_{n2}(k_j + s γ*)⟩` using the quasi-periodic extension
    /// `φ(k + sγ*, x) = e^{-isγ*x} φ(k, x)`.
    pub fn overlap(&self, n1: usize, i: usize, n2: usize, j: usize, s: i64) -> Complex64 {
        let a = &self.vectors[n1][i];
        let b = &self.vectors[n2][j];
        let dim = a.len() as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for g in 0..dim {
            let h = g + s;
            if (0..dim).contains(&h) {
                acc += a[g as usize].conj() * b[h as usize];
            }
        }
        acc
    }

    /// Parallel-transport gauge for band `n`: consecutive overlaps made real
    /// and positive, the closing holonomy recorded as the Zak phase and
    /// spread as `e^{-iθ j/n_k}` so the family is periodic on the torus.
    pub fn gauge_fix_band(&mut self, n: usize) -> Result<()> {
        self.check_band(n)?;
        if !self.isolated[n] {
            let j = self.gap_margins[n]
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (j, &m)| if m < acc.1 { (j, m) } else { acc })
                .0;
            return Err(Error::Gauge {
                band: n,
                k: self.k(j),
                reason: format!("band not isolated (gap floor {})", self.gap_floor),
            });
        }
        for j in 1..self.n_k {
            let ov = inner(&self.vectors[n][j - 1], &self.vectors[n][j]);
            if ov.norm() < 0.5 {
                return Err(Error::Gauge {
                    band: n,
                    k: self.k(j),
                    reason: format!("neighbour overlap {:.3} too small; refine the mesh", ov.norm()),
                });
            }
            let rot = ov.conj() / ov.norm();
            self.vectors[n][j].iter_mut().for_each(|c| *c *= rot);
        }
        let close = self.overlap(n, self.n_k - 1, n, 0, 1);
        if close.norm() < 0.5 {
            return Err(Error::Gauge {
                band: n,
                k: self.k(self.n_k - 1),
                reason: format!("closing overlap {:.3} too small", close.norm()),
            });
        }
        let theta = -close.arg();
        for j in 0..self.n_k {
            let rot = Complex64::from_polar(1.0, -theta * j as f64 / self.n_k as f64);
            self.vectors[n][j].iter_mut().for_each(|c| *c *= rot);
        }
        // global phase: largest coefficient real positive at the k nearest 0
        let j0 = (0..self.n_k)
            .min_by(|&a, &b| self.k(a).abs().total_cmp(&self.k(b).abs()))
            .unwrap_or(0);
        let mut probe = self.vectors[n][j0].clone();
        let before = probe[0];
        canonical_phase(&mut probe);
        let rot = if before.norm() > 0.0 { probe[0] / before } else {
            let i = probe.iter().position(|z| z.norm() > 0.0).unwrap_or(0);
            probe[i] / self.vectors[n][j0][i]
        };
        for j in 0..self.n_k {
            self.vectors[n][j].iter_mut().for_each(|c| *c *= rot);
        }
        self.zak[n] = Some(theta);
        self.gauge_fixed[n] = true;
        Ok(())
    }

    /// Cell-periodic samples of `φ_n(k_j, ·)` on the grid's unit cell,
    /// renormalized in the discrete inner product. Layout `[j * P + m]`.
    pub fn band_fibers(&self, grid: &SimulationGrid, n: usize) -> Result<Vec<Complex64>> {
        self.check_band(n)?;
        self.check_grid(grid)?;
        let dx = grid.dx();
        let mut out = Vec::with_capacity(grid.n_points());
        for j in 0..self.n_k {
            let mut s = fiber_samples(grid, &self.vectors[n][j]);
            let norm = (s.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx).sqrt();
            s.iter_mut().for_each(|z| *z /= norm);
            out.extend(s);
        }
        Ok(out)
    }

    /// Band velocities; the band must be isolated.
    pub fn band_velocity(&self, n: usize) -> Result<&[f64]> {
        self.require_isolated(n)?;
        Ok(&self.velocities[n])
    }

    /// `‖Q_n(k)∇_k P_n(k)‖` on the mesh; the band must be isolated.
    pub fn grad_projection_norm(&self, n: usize) -> Result<Vec<f64>> {
        self.require_isolated(n)?;
        (0..self.n_k)
            .into_par_iter()
            .map(|j| {
                solve_fiber(&self.potential, &self.lattice, self.k(j), self.cutoff)
                    .map(|f| f.grad_projection_norm(n))
            })
            .collect()
    }
}

/// Free function: gauge-fix every isolated band of `bs`.
pub fn gauge_fix(mut bs: BandStructure) -> Result<BandStructure> {
    for n in 0..bs.n_bands() {
        if bs.is_isolated(n) {
            bs.gauge_fix_band(n)?;
        }
    }
    Ok(bs)
}

pub fn band_velocity(bs: &BandStructure, n: usize) -> Result<Vec<f64>> {
    bs.band_velocity(n).map(|v| v.to_vec())
}

pub fn grad_projection_norm(bs: &BandStructure, n: usize) -> Result<Vec<f64>> {
    bs.grad_projection_norm(n)
}

/// Bloch coefficients `ψ_n(k) = ⟨φ_n(k), (Uψ)(k)⟩_{L²(M)}` of one band.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochCoefficients {
    pub band: usize,
    pub values: Vec<Complex64>,
    dk_weight: f64,
}

impl BlochCoefficients {
    pub fn new(band: usize, values: Vec<Complex64>) -> Self {
        let dk_weight = 1.0 / values.len().max(1) as f64;
        BlochCoefficients { band, values, dk_weight }
    }

    /// `Σ_k |ψ_n(k)|² dk`.
    pub fn population(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dk_weight
    }
}

pub fn project_band(f: &FiberedState, bs: &BandStructure, n: usize) -> Result<BlochCoefficients> {
    let phi = bs.band_fibers(f.grid(), n)?;
    Ok(project_with(f, &phi, n))
}

/// Projection with precomputed band fibers from [`BandStructure::band_fibers`].
pub fn project_with(f: &FiberedState, phi: &[Complex64], n: usize) -> BlochCoefficients {
    let grid = f.grid();
    let p = grid.points_per_cell();
    let dx = grid.dx();
    let values = (0..grid.n_cells())
        .map(|j| {
            let s: Complex64 = phi[j * p..(j + 1) * p].iter().zip(f.fiber(j)).map(|(a, b)| a.conj() * b).sum();
            s * dx
        })
        .collect();
    BlochCoefficients::new(n, values)
}

/// `Σ_k g(k) φ_n(k, ·)` as a fibered state.
pub fn lift_with(grid: &SimulationGrid, phi: &[Complex64], coeffs: &[Complex64]) -> Result<FiberedState> {
    if coeffs.len() != grid.n_cells() || phi.len() != grid.n_points() {
        return Err(Error::GridMismatch("coefficient length does not match the k-grid".into()));
    }
    let p = grid.points_per_cell();
    let mut out = Vec::with_capacity(grid.n_points());
    for (j, g) in coeffs.iter().enumerate() {
        out.extend(phi[j * p..(j + 1) * p].iter().map(|z| z * g));
    }
    FiberedState::new(*grid, out)
}

pub fn lift_band(grid: &SimulationGrid, bs: &BandStructure, n: usize, coeffs: &[Complex64]) -> Result<FiberedState> {
    let phi = bs.band_fibers(grid, n)?;
    lift_with(grid, &phi, coeffs)
}

/// `f − P_n f` fiberwise.
pub fn remove_band(f: &FiberedState, phi: &[Complex64], coeffs: &BlochCoefficients) -> Result<FiberedState> {
    let grid = *f.grid();
    let p = grid.points_per_cell();
    let mut out = f.values().to_vec();
    for (j, g) in coeffs.values.iter().enumerate() {
        for m in 0..p {
            out[j * p + m] -= phi[j * p + m] * g;
        }
    }
    FiberedState::new(grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{BlochTransform, WaveFunction};
    use crate::lattice::{build_grid, build_lattice};
    use std::f64::consts::PI;

    fn lat() -> Lattice {
        build_lattice(2.0 * PI).unwrap()
    }

    #[test]
    fn free_fiber_spectrum() {
        let f = solve_fiber(&PeriodicPotential::zero(), &lat(), 0.0, 8).unwrap();
        let expect = [0.0, 0.5, 0.5, 2.0, 2.0];
        for (e, x) in f.energies.iter().zip(expect) {
            assert!((e - x).abs() < 1e-12);
        }
        let f = solve_fiber(&PeriodicPotential::zero(), &lat(), 0.25, 8).unwrap();
        assert!((f.energies[0] - 0.03125).abs() < 1e-14);
        assert!((f.velocity(0) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn cutoff_errors() {
        assert!(solve_fiber(&PeriodicPotential::zero(), &lat(), 0.0, 7).is_err());
        let v = PeriodicPotential::new(vec![(9, 0.1)]).unwrap();
        assert!(solve_fiber(&v, &lat(), 0.0, 8).is_err());
    }

    #[test]
    fn residual_and_orthonormality() {
        let v = PeriodicPotential::new(vec![(1, 0.3), (2, -0.1)]).unwrap();
        let l = lat();
        for &k in &[-0.5, -0.13, 0.0, 0.31] {
            let f = solve_fiber(&v, &l, k, 10).unwrap();
            let h = fiber_hamiltonian(&v, &l, k, 10);
            for n in 0..f.dimension() {
                let c: Vec<f64> = f.vectors[n].iter().map(|z| z.re).collect();
                let hv = &h * nalgebra::DVector::from_vec(c.clone());
                let res: f64 = hv.iter().zip(&c).map(|(a, b)| (a - f.energies[n] * b).powi(2)).sum::<f64>().sqrt();
                assert!(res <= 1e-10 * (1.0 + f.energies[n].abs()));
                for m in 0..f.dimension() {
                    let ip = inner(&f.vectors[m], &f.vectors[n]);
                    let want = if m == n { 1.0 } else { 0.0 };
                    assert!((ip.re - want).abs() < 1e-12 && ip.im.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn free_band_one_is_not_isolated() {
        let g = build_grid(lat(), 16, 8).unwrap();
        let bs = compute_band_structure(&PeriodicPotential::zero(), &g, 8, 3, 0.0).unwrap();
        assert!(!bs.is_isolated(0));
        assert!(bs.gap_margins(0)[0] < 1e-12);
        assert!(matches!(bs.band_velocity(0), Err(Error::NotIsolated { .. })));
        let mut bs2 = bs.clone();
        match bs2.gauge_fix_band(0) {
            Err(Error::Gauge { band, k, .. }) => {
                assert_eq!(band, 0);
                assert!((k + 0.5).abs() < 1e-12);
            }
            other => panic!("expected gauge error, got {other:?}"),
        }
    }

    #[test]
    fn band_count_limits() {
        let g = build_grid(lat(), 8, 8).unwrap();
        let v = PeriodicPotential::single(0.05);
        assert!(compute_band_structure(&v, &g, 8, 5, 0.0).is_ok());
        assert!(compute_band_structure(&v, &g, 8, 40, 0.0).is_err());
    }

    #[test]
    fn gauge_overlaps_real_positive_before_twist() {
        let g = build_grid(lat(), 32, 8).unwrap();
        let v = PeriodicPotential::single(0.15);
        let bs = compute_band_structure(&v, &g, 10, 3, 0.05).unwrap();
        assert!(bs.is_isolated(0));
        let theta = bs.zak_phase(0).unwrap();
        let n_k = bs.n_k() as f64;
        for j in 0..bs.n_k() - 1 {
            // undo the uniform twist e^{-iθ/n_k} per link
            let ov = bs.overlap(0, j, 0, j + 1, 0) * Complex64::from_polar(1.0, theta / n_k);
            assert!(ov.re > 0.0);
            assert!(ov.im.abs() < 1e-12);
        }
        let close = bs.overlap(0, bs.n_k() - 1, 0, 0, 1) * Complex64::from_polar(1.0, theta / n_k);
        assert!(close.re > 0.0 && close.im.abs() < 1e-12);
    }

    #[test]
    fn projection_of_band_data_is_complete() {
        let g = build_grid(lat(), 16, 16).unwrap();
        let v = PeriodicPotential::single(0.15);
        let bs = compute_band_structure(&v, &g, 10, 4, 0.05).unwrap();
        let coeffs: Vec<Complex64> =
            (0..16).map(|j| Complex64::new((-(g.k(j) - 0.1f64).powi(2) / 0.02).exp(), 0.3 * j as f64)).collect();
        let f = lift_band(&g, &bs, 0, &coeffs).unwrap();
        let c0 = project_band(&f, &bs, 0).unwrap();
        let c1 = project_band(&f, &bs, 1).unwrap();
        assert!((c0.population() - f.norm_sq()).abs() < 1e-10);
        assert!(c1.population() < 1e-10);
        let zero = project_band(&FiberedState::zeros(g), &bs, 0).unwrap();
        assert!(zero.values.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn plane_wave_population_in_free_folded_band() {
        let g = build_grid(lat(), 16, 16).unwrap();
        let bs = compute_band_structure(&PeriodicPotential::zero(), &g, 8, 4, 0.0).unwrap();
        // k0 = 0.25 + 1: band 3 or 4 at k = 0.25 after folding; band 2 for 0.25 - 1
        let j = 12;
        let k0 = g.k(j);
        let psi = WaveFunction::from_fn(g, |x| Complex64::from_polar(1.0, (k0 - 1.0) * x));
        let f = BlochTransform::new(g).forward(&psi).unwrap();
        let pops: Vec<f64> = (0..4).map(|n| project_band(&f, &bs, n).unwrap().population()).collect();
        let total: f64 = pops.iter().sum();
        assert!((total - psi.norm_sq()).abs() < 1e-9 * psi.norm_sq());
        assert!((pops[1] - psi.norm_sq()).abs() < 1e-9 * psi.norm_sq(), "{pops:?}");
    }

    #[test]
    fn grad_projection_vanishes_for_free_interior() {
        let f = solve_fiber(&PeriodicPotential::zero(), &lat(), 0.2, 8).unwrap();
        assert!(f.grad_projection_norm(0) < 1e-14);
    }

    #[test]
    fn grad_projection_finite_and_gap_monotone() {
        let g = build_grid(lat(), 32, 8).unwrap();
        let small = compute_band_structure(&PeriodicPotential::single(0.05), &g, 10, 3, 0.01).unwrap();
        let large = compute_band_structure(&PeriodicPotential::single(0.3), &g, 10, 3, 0.01).unwrap();
        let a = small.grad_projection_norm(0).unwrap();
        let b = large.grad_projection_norm(0).unwrap();
        assert!(a.iter().chain(&b).all(|x| x.is_finite()));
        // the edge of the zone is where the gap is set by the potential
        assert!(b[0] < a[0]);
    }

    #[test]
    fn spectrum_periodic_in_k() {
        let v = PeriodicPotential::new(vec![(1, 0.2), (2, 0.05)]).unwrap();
        let l = lat();
        for &k in &[-0.4, 0.0, 0.27] {
            let a = solve_fiber(&v, &l, k, 16).unwrap();
            let b = solve_fiber(&v, &l, k + 1.0, 16).unwrap();
            for n in 0..5 {
                assert!((a.energies[n] - b.energies[n]).abs() < 1e-10);
            }
        }
    }
}
