//! Split-step propagation of `H = -½Δ + V(x) + W(εx)` on the periodic box,
//! band-concentrated initial packets and micro-scale observables.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::bands::{lift_with, BandStructure};
use crate::bloch::{check_same_grid, BlochTransform, WaveFunction};
use crate::error::{invalid, Error, Result};
use crate::lattice::{ExternalPotential, PeriodicPotential, SimulationGrid};

/// Largest admissible `dt·E_max`.
pub const STABILITY_CEILING: f64 = PI / 2.0;
/// Default `c` in `dt = c / E_max`.
pub const DEFAULT_DT_FACTOR: f64 = 0.1;
pub const DEFAULT_BOUNDARY_MARGIN: f64 = 0.1;
/// Boundary mass (relative to the norm) above which a run is rejected.
pub const BOUNDARY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorConfig {
    pub epsilon: f64,
    /// Micro time step; `None` selects `dt_factor / E_max`.
    pub dt: Option<f64>,
    pub dt_factor: f64,
    pub t_macro: f64,
    pub boundary_margin: f64,
}

impl PropagatorConfig {
    pub fn new(epsilon: f64, t_macro: f64) -> Self {
        PropagatorConfig {
            epsilon,
            dt: None,
            dt_factor: DEFAULT_DT_FACTOR,
            t_macro,
            boundary_margin: DEFAULT_BOUNDARY_MARGIN,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(invalid(format!("epsilon = {} outside (0, 1]", self.epsilon)));
        }
        if !(self.t_macro >= 0.0) || !self.t_macro.is_finite() {
            return Err(invalid(format!("t_macro = {} must be finite and non-negative", self.t_macro)));
        }
        if !(0.0..1.0).contains(&self.boundary_margin) {
            return Err(invalid("boundary_margin must lie in [0, 1)"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(invalid("dt must be positive"));
            }
        } else if !(self.dt_factor > 0.0) {
            return Err(invalid("dt_factor must be positive"));
        }
        Ok(())
    }
}

/// `E_max = ½(π/dx)² + max|V| + max|W|`.
pub fn energy_ceiling(grid: &SimulationGrid, v: &PeriodicPotential, w: &ExternalPotential) -> f64 {
    grid.kinetic_max() + v.sup_bound() + w.sup_bound()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticRecord {
    pub step: usize,
    pub norm: f64,
    pub energy: f64,
    pub boundary_mass: f64,
}

#[derive(Debug, Clone)]
pub struct EvolvedState {
    pub psi: WaveFunction,
    pub epsilon: f64,
    pub t_macro: f64,
    /// Unwrapped center of mass (micro units).
    pub center_of_mass: f64,
    pub dt: f64,
    pub steps: usize,
    pub diagnostics: Vec<DiagnosticRecord>,
}

impl EvolvedState {
    pub fn initial(psi: WaveFunction, epsilon: f64) -> Self {
        let com = circular_center(&psi);
        EvolvedState { psi, epsilon, t_macro: 0.0, center_of_mass: com, dt: 0.0, steps: 0, diagnostics: Vec::new() }
    }

    pub fn norm_drift(&self) -> f64 {
        drift(&self.diagnostics, |d| d.norm, false)
    }

    /// Largest `|E(t) - E(0)| / |E(0)|` over the records.
    pub fn energy_drift(&self) -> f64 {
        drift(&self.diagnostics, |d| d.energy, true)
    }

    pub fn max_boundary_mass(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.boundary_mass).fold(0.0, f64::max)
    }

    pub fn position_expectation(&self) -> f64 {
        position_expectation_about(&self.psi, self.epsilon, self.center_of_mass)
    }

    pub fn position_apply(&self) -> WaveFunction {
        position_apply_about(&self.psi, self.epsilon, self.center_of_mass)
    }
}

fn drift(records: &[DiagnosticRecord], f: impl Fn(&DiagnosticRecord) -> f64, relative: bool) -> f64 {
    let Some(first) = records.first() else { return 0.0 };
    let x0 = f(first);
    let scale = if relative { x0.abs().max(f64::MIN_POSITIVE) } else { 1.0 };
    records.iter().map(|r| (f(r) - x0).abs() / scale).fold(0.0, f64::max)
}

/// Strang splitting `e^{-i dt U/2} e^{-i dt T} e^{-i dt U/2}` with
/// `U = V(x) + W(εx)` and `T = -½Δ` applied in Fourier space.
pub struct Propagator {
    grid: SimulationGrid,
    epsilon: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    potential: Vec<f64>,
    kinetic: Vec<f64>,
    e_max: f64,
    margin: f64,
    dt_default: f64,
}

impl Propagator {
    pub fn new(
        grid: SimulationGrid,
        v: &PeriodicPotential,
        w: &ExternalPotential,
        cfg: &PropagatorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let e_max = energy_ceiling(&grid, v, w);
        let dt_default = cfg.dt.unwrap_or(cfg.dt_factor / e_max);
        if dt_default * e_max >= STABILITY_CEILING {
            return Err(Error::Instability(format!(
                "dt·E_max = {:.3} exceeds the stability ceiling {:.3}",
                dt_default * e_max,
                STABILITY_CEILING
            )));
        }
        let lattice = *grid.lattice();
        let potential = (0..grid.n_points())
            .map(|j| {
                let x = grid.x(j);
                v.value(&lattice, x) + w.value(cfg.epsilon * x)
            })
            .collect();
        let kinetic = (0..grid.n_points()).map(|l| 0.5 * grid.xi(l).powi(2)).collect();
        let mut planner = FftPlanner::new();
        Ok(Propagator {
            grid,
            epsilon: cfg.epsilon,
            fft: planner.plan_fft_forward(grid.n_points()),
            ifft: planner.plan_fft_inverse(grid.n_points()),
            potential,
            kinetic,
            e_max,
            margin: cfg.boundary_margin,
            dt_default,
        })
    }

    pub fn grid(&self) -> &SimulationGrid {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dt(&self) -> f64 {
        self.dt_default
    }

    pub fn energy_ceiling(&self) -> f64 {
        self.e_max
    }

    /// `⟨ψ, Hψ⟩`.
    pub fn energy(&self, psi: &WaveFunction) -> f64 {
        let n = self.grid.n_points();
        let mut buf = psi.samples().to_vec();
        self.fft.process(&mut buf);
        let kin: f64 = buf.iter().zip(&self.kinetic).map(|(z, t)| t * z.norm_sqr()).sum::<f64>() / n as f64;
        let pot: f64 = psi.samples().iter().zip(&self.potential).map(|(z, u)| u * z.norm_sqr()).sum();
        (kin + pot) * self.grid.dx()
    }

    /// Kinetic energy `⟨ψ, -½Δψ⟩`.
    pub fn kinetic_energy(&self, psi: &WaveFunction) -> f64 {
        let n = self.grid.n_points();
        let mut buf = psi.samples().to_vec();
        self.fft.process(&mut buf);
        buf.iter().zip(&self.kinetic).map(|(z, t)| t * z.norm_sqr()).sum::<f64>() / n as f64 * self.grid.dx()
    }

    fn record(&self, step: usize, psi: &WaveFunction, com: f64) -> DiagnosticRecord {
        DiagnosticRecord {
            step,
            norm: psi.norm(),
            energy: self.energy(psi),
            boundary_mass: boundary_mass_about(psi, com, self.margin),
        }
    }

    /// Advances by `dt_macro` (negative values run backwards). The step is
    /// shrunk so an integer number of steps lands exactly on the target.
    pub fn advance(&self, state: &EvolvedState, dt_macro: f64, records: usize) -> Result<EvolvedState> {
        check_same_grid(&self.grid, state.psi.grid())?;
        if (state.epsilon - self.epsilon).abs() > 0.0 {
            return Err(invalid("state and propagator use different epsilon"));
        }
        let t_micro = dt_macro / self.epsilon;
        let n_steps = if t_micro == 0.0 { 0 } else { (t_micro.abs() / self.dt_default).ceil() as usize };
        let dt = if n_steps == 0 { 0.0 } else { t_micro / n_steps as f64 };
        let n = self.grid.n_points();
        let half: Vec<Complex64> = self.potential.iter().map(|u| Complex64::from_polar(1.0, -0.5 * dt * u)).collect();
        let kin: Vec<Complex64> =
            self.kinetic.iter().map(|t| Complex64::from_polar(1.0, -dt * t) / n as f64).collect();
        let every = n_steps.checked_div(records).map_or(usize::MAX, |e| e.max(1));
        // at least this often for winding tracking and contamination checks
        let check_every = every.min(256);

        let mut buf = state.psi.samples().to_vec();
        let mut com = state.center_of_mass;
        let mut psi = state.psi.clone();
        let mut diagnostics = Vec::new();
        if records > 0 {
            diagnostics.push(self.record(0, &psi, com));
        }
        for step in 1..=n_steps {
            buf.iter_mut().zip(&half).for_each(|(z, p)| *z *= p);
            self.fft.process(&mut buf);
            buf.iter_mut().zip(&kin).for_each(|(z, p)| *z *= p);
            self.ifft.process(&mut buf);
            buf.iter_mut().zip(&half).for_each(|(z, p)| *z *= p);

            if step % check_every == 0 || step == n_steps {
                if buf.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::Instability(format!("non-finite amplitude at step {step}")));
                }
                psi = WaveFunction::new(self.grid, buf.clone())?;
                com = track_center(&psi, com);
                let bm = boundary_mass_about(&psi, com, self.margin);
                if bm > BOUNDARY_TOLERANCE * psi.norm_sq().max(f64::MIN_POSITIVE) {
                    return Err(Error::WrapContamination { mass: bm, tolerance: BOUNDARY_TOLERANCE });
                }
                if records > 0 && (step % every == 0 || step == n_steps) {
                    diagnostics.push(self.record(step, &psi, com));
                }
            }
        }
        Ok(EvolvedState {
            psi,
            epsilon: self.epsilon,
            t_macro: state.t_macro + dt_macro,
            center_of_mass: com,
            dt: dt.abs(),
            steps: state.steps + n_steps,
            diagnostics,
        })
    }
}

/// Propagates `psi` to `cfg.t_macro` (micro duration `t_macro/ε`).
pub fn propagate(
    psi: &WaveFunction,
    v: &PeriodicPotential,
    w: &ExternalPotential,
    cfg: &PropagatorConfig,
) -> Result<EvolvedState> {
    let prop = Propagator::new(*psi.grid(), v, w, cfg)?;
    let start = EvolvedState::initial(psi.clone(), cfg.epsilon);
    prop.advance(&start, cfg.t_macro, 100)
}

/// Circular mean of `|ψ|²` on the periodic box.
fn circular_center(psi: &WaveFunction) -> f64 {
    let grid = psi.grid();
    let l = grid.box_length();
    let z: Complex64 = psi
        .samples()
        .iter()
        .enumerate()
        .map(|(j, a)| Complex64::from_polar(a.norm_sqr(), 2.0 * PI * (grid.x(j) - grid.x_min()) / l))
        .sum();
    if z.norm() == 0.0 {
        return 0.0;
    }
    grid.x_min() + l * z.arg().rem_euclid(2.0 * PI) / (2.0 * PI)
}

fn wrap(d: f64, l: f64) -> f64 {
    d - l * (d / l).round()
}

/// Updates an unwrapped center of mass from the current circular center.
fn track_center(psi: &WaveFunction, previous: f64) -> f64 {
    let l = psi.grid().box_length();
    previous + wrap(circular_center(psi) - previous, l)
}

/// Unwrapped coordinates `x_c + wrap(x_j - x_c)` for an unwrapped center `x_c`.
pub fn unwrapped_positions(grid: &SimulationGrid, center: f64) -> Vec<f64> {
    let l = grid.box_length();
    (0..grid.n_points()).map(|j| center + wrap(grid.x(j) - center, l)).collect()
}

/// Mass farther than `(1 - margin)·L/2` from the center on the torus.
fn boundary_mass_about(psi: &WaveFunction, center: f64, margin: f64) -> f64 {
    let grid = psi.grid();
    let l = grid.box_length();
    let limit = (1.0 - margin) * 0.5 * l;
    psi.samples()
        .iter()
        .enumerate()
        .filter(|(j, _)| wrap(grid.x(*j) - center, l).abs() > limit)
        .map(|(_, a)| a.norm_sqr())
        .sum::<f64>()
        * grid.dx()
}

/// Boundary mass about the state's own center of mass.
pub fn boundary_mass(psi: &WaveFunction, margin: f64) -> f64 {
    boundary_mass_about(psi, circular_center(psi), margin)
}

fn check_boundary(psi: &WaveFunction, center: f64) -> Result<()> {
    let bm = boundary_mass_about(psi, center, DEFAULT_BOUNDARY_MARGIN);
    if bm > BOUNDARY_TOLERANCE * psi.norm_sq().max(f64::MIN_POSITIVE) {
        return Err(Error::WrapContamination { mass: bm, tolerance: BOUNDARY_TOLERANCE });
    }
    Ok(())
}

fn position_expectation_about(psi: &WaveFunction, epsilon: f64, center: f64) -> f64 {
    let xs = unwrapped_positions(psi.grid(), center);
    epsilon * psi.samples().iter().zip(&xs).map(|(a, x)| x * a.norm_sqr()).sum::<f64>() * psi.grid().dx()
}

fn position_apply_about(psi: &WaveFunction, epsilon: f64, center: f64) -> WaveFunction {
    let xs = unwrapped_positions(psi.grid(), center);
    let samples = psi.samples().iter().zip(&xs).map(|(a, x)| a * (epsilon * x)).collect();
    WaveFunction::new(*psi.grid(), samples).expect("same grid")
}

/// `ε Σ x|ψ|² dx` with `x` unwrapped about the state's center of mass.
pub fn position_expectation(psi: &WaveFunction, epsilon: f64) -> Result<f64> {
    let c = circular_center(psi);
    check_boundary(psi, c)?;
    Ok(position_expectation_about(psi, epsilon, c))
}

/// `εx·ψ` with `x` unwrapped about the state's center of mass.
pub fn position_apply(psi: &WaveFunction, epsilon: f64) -> Result<WaveFunction> {
    let c = circular_center(psi);
    check_boundary(psi, c)?;
    Ok(position_apply_about(psi, epsilon, c))
}

/// `⟨ψ, g(p)ψ⟩ = Σ_k g(k) ‖(Uψ)(k)‖² dk` for Γ*-periodic `g`.
pub fn quasimomentum_expectation(
    psi: &WaveFunction,
    transform: &BlochTransform,
    g: impl Fn(f64) -> Complex64,
) -> Result<Complex64> {
    let f = transform.forward(psi)?;
    let grid = f.grid();
    Ok((0..grid.n_cells()).map(|j| g(grid.k(j)) * f.fiber_norm_sq(j)).sum::<Complex64>() * grid.dk_weight())
}

/// Applies the Fourier multiplier `g(p)`.
pub fn apply_momentum_multiplier(psi: &WaveFunction, g: impl Fn(f64) -> Complex64) -> WaveFunction {
    let grid = *psi.grid();
    let n = grid.n_points();
    let mut planner = FftPlanner::new();
    let mut buf = psi.samples().to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (l, z) in buf.iter_mut().enumerate() {
        *z *= g(grid.xi(l)) / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    WaveFunction::new(grid, buf).expect("same grid")
}

/// `⟨ψ, g(p)ψ⟩` through the Fourier multiplier.
pub fn quasimomentum_expectation_fourier(psi: &WaveFunction, g: impl Fn(f64) -> Complex64) -> Complex64 {
    psi.inner(&apply_momentum_multiplier(psi, g)).expect("same grid")
}

/// Upper bound on the mass of `|f|²` (a normal law with standard deviation
/// `sigma`, centered at `center`) outside `[lo, hi]`, via the Mills ratio.
fn gaussian_tail_bound(center: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let side = |d: f64| {
        let z = d / sigma;
        if z <= 0.0 {
            1.0
        } else {
            (-0.5 * z * z).exp() / (z * (2.0 * PI).sqrt())
        }
    };
    side(hi - center) + side(center - lo)
}

/// `ψ = U⁻¹[f(k) φ_n(k)]` with `f ∝ exp(-(k - k_center)²/(2 sigma_k²))`,
/// normalized to `‖ψ‖ = 1`.
pub fn prepare_band_packet(
    bs: &BandStructure,
    grid: &SimulationGrid,
    n: usize,
    k_center: f64,
    sigma_k: f64,
) -> Result<WaveFunction> {
    bs.check_grid(grid)?;
    if n >= bs.n_bands() {
        return Err(invalid(format!("band index {n} out of range")));
    }
    if !(sigma_k > 0.0) {
        return Err(invalid("sigma_k must be positive"));
    }
    let (lo, hi) = grid.lattice().brillouin_zone();
    let tail = gaussian_tail_bound(k_center, sigma_k / 2f64.sqrt(), lo, hi);
    if tail >= 1e-12 {
        return Err(invalid(format!(
            "sigma_k = {sigma_k} leaves Gaussian mass {tail:.2e} outside the Brillouin zone"
        )));
    }
    let amp: Vec<f64> =
        (0..grid.n_cells()).map(|j| (-(grid.k(j) - k_center).powi(2) / (2.0 * sigma_k * sigma_k)).exp()).collect();
    for (j, a) in amp.iter().enumerate() {
        if a * a > 1e-14 && bs.gap_margins(n)[j] <= bs.gap_floor() {
            return Err(Error::NotIsolated { band: n, k: grid.k(j), margin: bs.gap_margins(n)[j] });
        }
    }
    let mass: f64 = amp.iter().map(|a| a * a).sum::<f64>() * grid.dk_weight();
    let coeffs: Vec<Complex64> = amp.iter().map(|a| Complex64::new(a / mass.sqrt(), 0.0)).collect();
    let phi = bs.band_fibers(grid, n)?;
    let f = lift_with(grid, &phi, &coeffs)?;
    let mut psi = BlochTransform::new(*grid).inverse(&f)?;
    psi.normalize();
    Ok(psi)
}
