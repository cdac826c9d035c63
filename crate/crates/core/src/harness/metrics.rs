//! Error functionals comparing the full dynamics with their band limits.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::bands::{compute_band_structure, lift_with, project_with, remove_band, BandStructure, BlochCoefficients};
use crate::bloch::{BlochTransform, FiberedState, WaveFunction};
use crate::config::ExperimentConfig;
use crate::error::{invalid, Result};
use crate::lattice::{ExternalPotential, PeriodicPotential, SimulationGrid};
use crate::propagator::{apply_momentum_multiplier, prepare_band_packet, unwrapped_positions, EvolvedState, Propagator};
use crate::semiclassics::{apply_R, apply_g_of_k, FlowField, TransportedMeasure};
use crate::wigner::{pair_symbol, support_grid, wigner_band, Symbol};

/// Everything about a run that does not depend on `ε`.
#[derive(Debug, Clone)]
pub struct BandSetup {
    pub grid: SimulationGrid,
    pub v: PeriodicPotential,
    pub w: ExternalPotential,
    pub bs: BandStructure,
    pub band: usize,
    pub transform: BlochTransform,
    /// Sampled Bloch functions of `band`, k-major.
    pub phi: Vec<Complex64>,
    pub psi0: WaveFunction,
    pub f0: FiberedState,
    pub coeffs0: BlochCoefficients,
}

impl BandSetup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        let v = cfg.periodic_potential()?;
        let w = cfg.external_potential()?;
        let band = cfg.band_index();
        let bs = compute_band_structure(&v, &grid, cfg.bands.cutoff, cfg.bands.n_bands, cfg.bands.gap_floor)?;
        Self::new(grid, v, w, bs, band, cfg.packet.k_center, cfg.packet.sigma_k)
    }

    pub fn new(
        grid: SimulationGrid,
        v: PeriodicPotential,
        w: ExternalPotential,
        bs: BandStructure,
        band: usize,
        k_center: f64,
        sigma_k: f64,
    ) -> Result<Self> {
        bs.require_isolated(band)?;
        let transform = BlochTransform::new(grid);
        let phi = bs.band_fibers(&grid, band)?;
        let psi0 = prepare_band_packet(&bs, &grid, band, k_center, sigma_k)?;
        let f0 = transform.forward(&psi0)?;
        let coeffs0 = project_with(&f0, &phi, band);
        Ok(BandSetup { grid, v, w, bs, band, transform, phi, psi0, f0, coeffs0 })
    }

    /// Band coefficients of a state.
    pub fn coefficients(&self, psi: &WaveFunction) -> Result<BlochCoefficients> {
        Ok(project_with(&self.transform.forward(psi)?, &self.phi, self.band))
    }

    /// `U⁻¹[g(k) φ_n(k)]`.
    pub fn lift(&self, g: &BlochCoefficients) -> Result<WaveFunction> {
        self.transform.inverse(&lift_with(&self.grid, &self.phi, &g.values)?)
    }
}

/// Test observable `g(k) = e^{2πik/γ*}`, injective on the torus.
pub fn torus_character(gamma_star: f64) -> impl Fn(f64) -> Complex64 + Copy {
    move |k| Complex64::from_polar(1.0, 2.0 * PI * k / gamma_star)
}

/// `√(Σ |a_j − b_j|² dk)` on the normalized k-mesh.
pub fn coefficient_distance(a: &BlochCoefficients, b: &BlochCoefficients) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(invalid("coefficient vectors differ in length"));
    }
    let s: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm_sqr()).sum();
    Ok((s / a.values.len() as f64).sqrt())
}

fn check_times(state: &EvolvedState, flow: &FlowField) -> Result<()> {
    if (state.t_macro - flow.t).abs() > 1e-12 * flow.t.abs().max(1.0) {
        return Err(invalid(format!("state at t = {} but flow at t = {}", state.t_macro, flow.t)));
    }
    Ok(())
}

/// `‖U^ε(−t/ε) εx U^ε(t/ε)ψ − U⁻¹R(t)Uψ‖`, with the Heisenberg side
/// realized by running `prop` backwards from `εx ψ(t)`.
pub fn metric_position_strong(
    prop: &Propagator,
    state: &EvolvedState,
    setup: &BandSetup,
    flow: &FlowField,
) -> Result<f64> {
    check_times(state, flow)?;
    let xpsi = EvolvedState::initial(state.position_apply(), state.epsilon);
    let back = prop.advance(&xpsi, -state.t_macro, 0)?;
    let reference = setup.transform.inverse(&apply_R(std::slice::from_ref(flow), &setup.f0, &setup.bs)?)?;
    back.psi.distance(&reference)
}

/// Strong and weak quasimomentum errors for a periodic observable `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasimomentumErrors {
    /// `‖U^ε(−t/ε) g(p) U^ε(t/ε)ψ − U⁻¹g(K(t))Uψ‖`.
    pub strong: f64,
    /// `|⟨ψ(t), g(p)ψ(t)⟩ − ∫ g(k_n(t;k)) |ψ_n(k)|² dk|`.
    pub weak: f64,
}

pub fn metric_quasimomentum(
    prop: &Propagator,
    state: &EvolvedState,
    setup: &BandSetup,
    flow: &FlowField,
    g: impl Fn(f64) -> Complex64 + Copy,
) -> Result<QuasimomentumErrors> {
    check_times(state, flow)?;
    let gpsi = apply_momentum_multiplier(&state.psi, g);
    let quantum = state.psi.inner(&gpsi)?;
    let back = prop.advance(&EvolvedState::initial(gpsi, state.epsilon), -state.t_macro, 0)?;
    let reference =
        setup.transform.inverse(&apply_g_of_k(std::slice::from_ref(flow), &setup.f0, &setup.bs, g)?)?;
    let dk = 1.0 / setup.coeffs0.values.len() as f64;
    let classical: Complex64 =
        setup.coeffs0.values.iter().zip(&flow.k).map(|(z, &k)| g(k) * z.norm_sqr()).sum::<Complex64>() * dk;
    Ok(QuasimomentumErrors { strong: back.psi.distance(&reference)?, weak: (quantum - classical).norm() })
}

/// `‖(1 − P_n) ψ(t)‖`.
pub fn metric_leakage(state: &EvolvedState, setup: &BandSetup) -> Result<f64> {
    let f = setup.transform.forward(&state.psi)?;
    let c = project_with(&f, &setup.phi, setup.band);
    Ok(remove_band(&f, &setup.phi, &c)?.norm())
}

/// `‖εx ψ(t) − εx ψ_diag(t)‖`, where `ψ_diag(t)` is the lift of the
/// effective-band coefficients `g_full` and both positions are unwrapped
/// about the full state's center of mass.
pub fn metric_diag_position(state: &EvolvedState, setup: &BandSetup, g_full: &BlochCoefficients) -> Result<f64> {
    let diag = setup.lift(g_full)?;
    let xs = unwrapped_positions(&setup.grid, state.center_of_mass);
    let eps = state.epsilon;
    let s: f64 = state
        .psi
        .samples()
        .iter()
        .zip(diag.samples())
        .zip(&xs)
        .map(|((a, b), x)| ((a - b) * (eps * x)).norm_sqr())
        .sum();
    Ok((s * setup.grid.dx()).sqrt())
}

/// Weak Wigner error together with the mass and marginal identity defects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WignerCheck {
    /// Largest `|∫∫ W^ε a − ∫ a dρ(t)|` over the dictionary.
    pub max_deviation: f64,
    /// `|∫∫ W^ε − ‖ψ‖²|`.
    pub mass_defect: f64,
    /// Largest deviation of either marginal from its direct formula.
    pub marginal_defect: f64,
}

pub fn metric_wigner_weak(
    state: &EvolvedState,
    setup: &BandSetup,
    flow: &FlowField,
    dictionary: &[Symbol],
) -> Result<WignerCheck> {
    check_times(state, flow)?;
    let eps = state.epsilon;
    let psi = &state.psi;
    let xs = support_grid(psi, eps, 1, 1e-16);
    let w = wigner_band(psi, eps, &xs)?;
    let tm = TransportedMeasure::new(std::slice::from_ref(flow), std::slice::from_ref(&setup.coeffs0))?;
    let mut max_deviation: f64 = 0.0;
    for a in dictionary {
        let q = pair_symbol(&w, a)?;
        let c = tm.integrate(|r, k| a.eval(r, k));
        max_deviation = max_deviation.max((q - c).abs());
    }
    let grid = psi.grid();
    let pm = w.position_marginal();
    let mut marginal_defect: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let j = ((x / eps - grid.x_min()) / grid.dx()).round() as usize;
        marginal_defect = marginal_defect.max((pm[i] - psi.samples()[j].norm_sqr() / eps).abs() * eps);
    }
    let f = setup.transform.forward(psi)?;
    for (j, m) in w.quasimomentum_marginal().iter().enumerate() {
        marginal_defect = marginal_defect.max((m - f.fiber_norm_sq(j)).abs());
    }
    Ok(WignerCheck { max_deviation, mass_defect: (w.mass() - psi.norm_sq()).abs(), marginal_defect })
}
