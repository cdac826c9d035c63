//! One-band effective dynamics on `L²(M*)`: the overlap-weighted potential
//! `W̃` and its semiclassical form `W(iε∇_k)`, effective propagators, and
//! the interband coupling `‖Q_n W P_n‖`.
//!
//! With `(Uψ)(k) = Σ_γ e^{-ik(x+γ)}ψ(x+γ)` the position operator acts on
//! band coefficients as `i∇_k`, so the semiclassical potential is `W(iε∇_k)`.
//! On the discrete torus `g(k) = Σ_c ĝ_c e^{-ikγ_c}` and `W(iε∇_k)`
//! multiplies `ĝ_c` by `W(εγ_c)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::bands::{lift_with, project_with, BandStructure, BlochCoefficients};
use crate::bloch::{BlochTransform, WaveFunction};
use crate::error::{invalid, Error, Result};
use crate::lattice::{ExternalPotential, SimulationGrid};

/// Coefficients of one band on the k-grid.
pub type EffectiveState = BlochCoefficients;

/// Relative size below which Fourier coefficients of `W(εx)` are dropped.
pub const FOURIER_CUTOFF: f64 = 1e-14;
/// Required fraction of `‖(1 - P_n) W P_n ψ‖²` captured by the band bank.
pub const BANK_COMPLETENESS: f64 = 0.99;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Dense matrix of `W̃` on the k-grid of a band structure.
#[derive(Debug, Clone)]
pub struct EffectivePotentialOperator {
    pub band: usize,
    pub epsilon: f64,
    pub matrix: DMatrix<Complex64>,
}

impl EffectivePotentialOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `max |M_ij - conj(M_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let m = &self.matrix;
        let n = m.nrows();
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                d = d.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        d
    }

    pub fn apply(&self, g: &[Complex64]) -> Vec<Complex64> {
        let v = DVector::from_column_slice(g);
        (&self.matrix * v).iter().copied().collect()
    }

    /// Largest `|M_ij|` with `|i - j|` (cyclic) at least `offset`, relative
    /// to the largest entry.
    pub fn off_diagonal_decay(&self, offset: usize) -> f64 {
        let n = self.dim();
        let max = self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut tail: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = (i as i64 - j as i64).rem_euclid(n as i64) as usize;
                if d.min(n - d) >= offset {
                    tail = tail.max(self.matrix[(i, j)].norm());
                }
            }
        }
        if max > 0.0 {
            tail / max
        } else {
            0.0
        }
    }

    /// `exp(-i dt M)` through the Hermitian eigendecomposition.
    pub fn exponential(&self, dt: f64) -> DMatrix<Complex64> {
        let h = hermitian_part(&self.matrix);
        let eig = h.symmetric_eigen();
        let q = &eig.eigenvectors;
        let phases = DVector::from_iterator(
            eig.eigenvalues.len(),
            eig.eigenvalues.iter().map(|&l| Complex64::from_polar(1.0, -dt * l)),
        );
        let scaled = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * phases[j]);
        scaled * q.adjoint()
    }
}

fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Spectral norm of a Hermitian matrix.
pub fn hermitian_norm(m: &DMatrix<Complex64>) -> f64 {
    hermitian_part(m).symmetric_eigenvalues().iter().fold(0.0, |a: f64, l| a.max(l.abs()))
}

/// Shifts `s` (in units of `γ*`) such that `Ŵ(dk + sγ*)` can exceed the cutoff
/// for some `dk ∈ (-γ*, γ*)`.
fn shift_range(w: &ExternalPotential, epsilon: f64, gamma_star: f64) -> i64 {
    let support = w.fourier_support(epsilon, FOURIER_CUTOFF);
    (support / gamma_star).ceil() as i64 + 1
}

fn check_band(bs: &BandStructure, n: usize) -> Result<()> {
    bs.require_isolated(n)?;
    if !bs.is_gauge_fixed(n) {
        return Err(Error::Gauge { band: n, k: bs.k(0), reason: "band is not gauge-fixed".into() });
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid(format!("epsilon = {epsilon} outside (0, 1]")));
    }
    Ok(())
}

/// Matrix entries `Σ_s Ŵ(k_i - k_j + sγ*) ⟨φ_{m}(k_i), φ_{n}(k_j - sγ*)⟩`,
/// the coupling of band `n` at `k_j` into band `m` at `k_i`.
fn coupling_matrix(bs: &BandStructure, m: usize, n: usize, w: &ExternalPotential, epsilon: f64) -> DMatrix<Complex64> {
    let nk = bs.n_k();
    let gs = bs.lattice().gamma_star();
    let box_len = nk as f64 * bs.lattice().a();
    let smax = shift_range(w, epsilon, gs);
    let w0 = w.box_fourier(0.0, epsilon, box_len).norm();
    let rows: Vec<Vec<Complex64>> = (0..nk)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![ZERO; nk];
            for (j, entry) in row.iter_mut().enumerate() {
                let dk = bs.k(i) - bs.k(j);
                for s in -smax..=smax {
                    let wq = w.box_fourier(dk + s as f64 * gs, epsilon, box_len);
                    if wq.norm() <= FOURIER_CUTOFF * w0 {
                        continue;
                    }
                    *entry += wq * bs.overlap(m, i, n, j, -s);
                }
            }
            row
        })
        .collect();
    DMatrix::from_fn(nk, nk, |i, j| rows[i][j])
}

/// `W̃` for band `n` on the band mesh.
pub fn build_effective_potential(
    bs: &BandStructure,
    n: usize,
    w: &ExternalPotential,
    epsilon: f64,
) -> Result<EffectivePotentialOperator> {
    check_epsilon(epsilon)?;
    check_band(bs, n)?;
    Ok(EffectivePotentialOperator { band: n, epsilon, matrix: coupling_matrix(bs, n, n, w, epsilon) })
}

/// Signed lattice index of DFT bin `c`.
fn signed(c: usize, n: usize) -> i64 {
    if c < n / 2 {
        c as i64
    } else {
        c as i64 - n as i64
    }
}

/// Dense matrix of `W(iε∇_k)` on an `n_k`-point torus of lattice constant `a`.
pub fn semiclassical_potential_matrix(n_k: usize, a: f64, w: &ExternalPotential, epsilon: f64) -> DMatrix<Complex64> {
    let mut col: Vec<Complex64> =
        (0..n_k).map(|c| Complex64::new(w.value(epsilon * a * signed(c, n_k) as f64) / n_k as f64, 0.0)).collect();
    // M[i][j] = (1/N) Σ_c W(εγ_c) e^{-2πi(i-j)c/N}
    FftPlanner::new().plan_fft_forward(n_k).process(&mut col);
    DMatrix::from_fn(n_k, n_k, |i, j| col[(i + n_k - j) % n_k])
}

/// `‖W̃ − W(iε∇_k)‖` in operator norm.
pub fn sc_operator_distance(op: &EffectivePotentialOperator, bs: &BandStructure, w: &ExternalPotential) -> f64 {
    let sc = semiclassical_potential_matrix(bs.n_k(), bs.lattice().a(), w, op.epsilon);
    hermitian_norm(&(&op.matrix - sc))
}

/// Strang steps `e^{-i dt E/2} e^{-i dt W(iε∇_k)} e^{-i dt E/2}`.
pub struct SemiclassicalPropagator {
    energy_half: Vec<f64>,
    w_phase: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl SemiclassicalPropagator {
    pub fn new(energies: &[f64], a: f64, w: &ExternalPotential, epsilon: f64) -> Self {
        let n = energies.len();
        let mut planner = FftPlanner::new();
        SemiclassicalPropagator {
            energy_half: energies.to_vec(),
            w_phase: (0..n).map(|c| w.value(epsilon * a * signed(c, n) as f64)).collect(),
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        }
    }

    pub fn run(&self, g: &mut [Complex64], dt: f64, steps: usize) {
        let n = g.len();
        let half: Vec<Complex64> = self.energy_half.iter().map(|e| Complex64::from_polar(1.0, -0.5 * dt * e)).collect();
        let wp: Vec<Complex64> = self.w_phase.iter().map(|w| Complex64::from_polar(1.0, -dt * w) / n as f64).collect();
        for _ in 0..steps {
            g.iter_mut().zip(&half).for_each(|(z, p)| *z *= p);
            // ĝ up to the (-1)^c factor, which commutes with the multiplier
            self.ifft.process(g);
            g.iter_mut().zip(&wp).for_each(|(z, p)| *z *= p);
            self.fft.process(g);
            g.iter_mut().zip(&half).for_each(|(z, p)| *z *= p);
        }
    }
}

fn step_count(t_macro: f64, epsilon: f64, dt: f64) -> Result<(usize, f64)> {
    check_epsilon(epsilon)?;
    if !(dt > 0.0) || !(t_macro >= 0.0) {
        return Err(invalid("dt must be positive and t_macro non-negative"));
    }
    let t_micro = t_macro / epsilon;
    let n = (t_micro / dt).ceil() as usize;
    Ok(if n == 0 { (0, 0.0) } else { (n, t_micro / n as f64) })
}

fn check_finite(g: &[Complex64]) -> Result<()> {
    if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Instability("non-finite effective amplitude".into()));
    }
    Ok(())
}

/// Evolves under `E_n(k) + W(iε∇_k)` for micro time `t_macro/ε`.
pub fn propagate_effective_sc(
    g: &EffectiveState,
    energies: &[f64],
    a: f64,
    w: &ExternalPotential,
    epsilon: f64,
    t_macro: f64,
    dt: f64,
) -> Result<EffectiveState> {
    if energies.len() != g.values.len() {
        return Err(invalid("band energies and coefficients differ in length"));
    }
    let (steps, h) = step_count(t_macro, epsilon, dt)?;
    let mut v = g.values.clone();
    SemiclassicalPropagator::new(energies, a, w, epsilon).run(&mut v, h, steps);
    check_finite(&v)?;
    Ok(BlochCoefficients::new(g.band, v))
}

/// Evolves under `E_n(k) + W̃` with Strang steps and the exact exponential
/// of the dense potential.
pub fn propagate_effective_full(
    g: &EffectiveState,
    op: &EffectivePotentialOperator,
    energies: &[f64],
    dt: f64,
    t_macro: f64,
) -> Result<EffectiveState> {
    let n = g.values.len();
    if energies.len() != n || op.dim() != n {
        return Err(invalid("operator, energies and coefficients differ in size"));
    }
    let (steps, h) = step_count(t_macro, op.epsilon, dt)?;
    let p = op.exponential(h);
    let half: Vec<Complex64> = energies.iter().map(|e| Complex64::from_polar(1.0, -0.5 * h * e)).collect();
    let mut v = DVector::from_column_slice(&g.values);
    for _ in 0..steps {
        v.iter_mut().zip(&half).for_each(|(z, q)| *z *= q);
        v = &p * v;
        v.iter_mut().zip(&half).for_each(|(z, q)| *z *= q);
    }
    let out: Vec<Complex64> = v.iter().copied().collect();
    check_finite(&out)?;
    Ok(BlochCoefficients::new(g.band, out))
}

/// Estimate of `‖Q_n W(εx) P_n‖` from the computed bands `m ≠ n`, with a
/// completeness check of the bank against the exact `1 - P_n` on `grid`.
pub fn offdiagonal_coupling_norm(
    bs: &BandStructure,
    grid: &SimulationGrid,
    n: usize,
    w: &ExternalPotential,
    epsilon: f64,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_band(bs, n)?;
    bs.check_grid(grid)?;
    if w.is_zero() {
        return Ok(0.0);
    }
    let bank: Vec<usize> = (0..bs.n_bands()).filter(|&m| m != n).collect();
    if bank.is_empty() {
        return Err(Error::BankIncomplete { captured: 0.0, required: BANK_COMPLETENESS });
    }
    bank_completeness(bs, grid, n, &bank, w, epsilon)?;
    let nk = bs.n_k();
    let mut gram = DMatrix::<Complex64>::zeros(nk, nk);
    for &m in &bank {
        let b = coupling_matrix(bs, m, n, w, epsilon);
        gram += b.adjoint() * b;
    }
    // k-delta probes: the dk weights of domain and range cancel
    let lmax = hermitian_part(&gram).symmetric_eigenvalues().iter().fold(0.0f64, |a, &l| a.max(l));
    Ok(lmax.max(0.0).sqrt())
}

fn bank_completeness(
    bs: &BandStructure,
    grid: &SimulationGrid,
    n: usize,
    bank: &[usize],
    w: &ExternalPotential,
    epsilon: f64,
) -> Result<()> {
    let t = BlochTransform::new(*grid);
    let phi_n = bs.band_fibers(grid, n)?;
    let phis: Vec<Vec<Complex64>> = bank.iter().map(|&m| bs.band_fibers(grid, m)).collect::<Result<_>>()?;
    let wx: Vec<f64> = (0..grid.n_points()).map(|j| w.value(epsilon * grid.x(j))).collect();
    let (lo, hi) = grid.lattice().brillouin_zone();
    let sigma = 0.05 * (hi - lo);
    let mut exact = 0.0;
    let mut captured = 0.0;
    for frac in [0.25, 0.5, 0.75] {
        let kc = lo + frac * (hi - lo);
        let coeffs: Vec<Complex64> = (0..grid.n_cells())
            .map(|j| Complex64::new((-(grid.k(j) - kc).powi(2) / (2.0 * sigma * sigma)).exp(), 0.0))
            .collect();
        let psi = t.inverse(&lift_with(grid, &phi_n, &coeffs)?)?;
        let wpsi: Vec<Complex64> = psi.samples().iter().zip(&wx).map(|(z, v)| z * v).collect();
        let f = t.forward(&WaveFunction::new(*grid, wpsi)?)?;
        let own = project_with(&f, &phi_n, n).population();
        exact += (f.norm_sq() - own).max(0.0);
        captured += phis.iter().map(|phi| project_with(&f, phi, 0).population()).sum::<f64>();
    }
    if exact > 0.0 {
        let ratio = captured / exact;
        if ratio < BANK_COMPLETENESS {
            return Err(Error::BankIncomplete { captured: ratio, required: BANK_COMPLETENESS });
        }
    }
    Ok(())
}
