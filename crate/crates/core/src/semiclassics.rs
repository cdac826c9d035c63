//! Per-band classical flow `ṙ = ∇E_n(k)`, `k̇ = -∇W(r)`, the multiplication
//! operators `R(t)`, `K(t)` on band coefficients, and the transported
//! phase-space measure.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bands::{lift_with, project_with, BandStructure, BlochCoefficients};
use crate::bloch::FiberedState;
use crate::error::{invalid, Result};
use crate::lattice::{ExternalPotential, Lattice};
use crate::spline::PeriodicSpline;

/// Periodic cubic spline of one band function on the band mesh.
#[derive(Debug, Clone)]
pub struct BandSpline {
    band: usize,
    lattice: Lattice,
    spline: PeriodicSpline,
}

impl BandSpline {
    pub fn new(bs: &BandStructure, n: usize) -> Result<Self> {
        bs.require_isolated(n)?;
        Self::from_table(*bs.lattice(), n, bs.k(0), bs.energies(n).to_vec())
    }

    /// Spline through energies sampled at `k0 + j γ*/len`.
    pub fn from_table(lattice: Lattice, band: usize, k0: f64, energies: Vec<f64>) -> Result<Self> {
        let spline = PeriodicSpline::new(k0, lattice.gamma_star(), energies)?;
        Ok(BandSpline { band, lattice, spline })
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn energy(&self, k: f64) -> f64 {
        self.spline.value(k)
    }

    pub fn velocity(&self, k: f64) -> f64 {
        self.spline.derivative(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub t: f64,
    pub r: f64,
    /// Unwrapped quasimomentum.
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub k0: f64,
    pub end: PhasePoint,
    /// Quasimomentum reduced to the zone.
    pub k_reduced: f64,
    /// Largest `|h(r(t), k(t)) - h(0, k0)|` over the steps.
    pub energy_drift: f64,
    pub samples: Vec<PhasePoint>,
}

fn rk4_step(e: &BandSpline, w: &ExternalPotential, r: f64, k: f64, h: f64) -> (f64, f64) {
    let f = |r: f64, k: f64| (e.velocity(k), -w.gradient(r));
    let (a1, b1) = f(r, k);
    let (a2, b2) = f(r + 0.5 * h * a1, k + 0.5 * h * b1);
    let (a3, b3) = f(r + 0.5 * h * a2, k + 0.5 * h * b2);
    let (a4, b4) = f(r + h * a3, k + h * b3);
    (r + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4), k + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4))
}

/// Integrates from `start` to each of `times` in order (any sign of
/// travel), with steps no longer than `dt_c`. Returns the phase point at
/// each requested time and the largest energy drift seen.
pub fn integrate_to_times(
    e: &BandSpline,
    w: &ExternalPotential,
    start: PhasePoint,
    times: &[f64],
    dt_c: f64,
) -> Result<(Vec<PhasePoint>, f64)> {
    if !(dt_c > 0.0) || !dt_c.is_finite() {
        return Err(invalid("flow step dt_c must be positive"));
    }
    let h0 = e.energy(start.k) + w.value(start.r);
    let mut drift: f64 = 0.0;
    let mut p = start;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - p.t;
        let n = (span.abs() / dt_c).ceil() as usize;
        if n > 0 {
            let h = span / n as f64;
            for _ in 0..n {
                let (r, k) = rk4_step(e, w, p.r, p.k, h);
                p.r = r;
                p.k = k;
                drift = drift.max((e.energy(k) + w.value(r) - h0).abs());
            }
        }
        p.t = target;
        out.push(p);
    }
    Ok((out, drift))
}

/// RK4 trajectory from `r(0) = 0`, `k(0) = k0` to `t_macro` (negative runs
/// backwards).
pub fn integrate_flow(e: &BandSpline, w: &ExternalPotential, k0: f64, t_macro: f64, dt_c: f64) -> Result<Trajectory> {
    integrate_flow_recorded(e, w, k0, t_macro, dt_c, 0)
}

/// As [`integrate_flow`], also keeping `records` evenly spaced samples.
pub fn integrate_flow_recorded(
    e: &BandSpline,
    w: &ExternalPotential,
    k0: f64,
    t_macro: f64,
    dt_c: f64,
    records: usize,
) -> Result<Trajectory> {
    let start = PhasePoint { t: 0.0, r: 0.0, k: k0 };
    let times: Vec<f64> = if records == 0 {
        vec![t_macro]
    } else {
        (1..=records).map(|i| t_macro * i as f64 / records as f64).collect()
    };
    let (pts, drift) = integrate_to_times(e, w, start, &times, dt_c)?;
    let end = *pts.last().expect("at least one time");
    let mut samples = Vec::new();
    if records > 0 {
        samples.push(start);
        samples.extend(pts);
    }
    Ok(Trajectory { k0, end, k_reduced: e.lattice().reduce_k(end.k), energy_drift: drift, samples })
}

/// Trajectories of band `n` started from every mesh point.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub band: usize,
    pub t: f64,
    pub k0: Vec<f64>,
    pub r: Vec<f64>,
    /// Reduced to the zone.
    pub k: Vec<f64>,
    pub k_unwrapped: Vec<f64>,
    pub energy_drift: Vec<f64>,
}

pub fn build_flow_field(
    bs: &BandStructure,
    n: usize,
    w: &ExternalPotential,
    t_macro: f64,
    dt_c: f64,
) -> Result<FlowField> {
    let e = BandSpline::new(bs, n)?;
    let trajs: Vec<Trajectory> =
        bs.k_grid().par_iter().map(|&k0| integrate_flow(&e, w, k0, t_macro, dt_c)).collect::<Result<_>>()?;
    Ok(FlowField {
        band: n,
        t: t_macro,
        k0: bs.k_grid(),
        r: trajs.iter().map(|t| t.end.r).collect(),
        k: trajs.iter().map(|t| t.k_reduced).collect(),
        k_unwrapped: trajs.iter().map(|t| t.end.k).collect(),
        energy_drift: trajs.iter().map(|t| t.energy_drift).collect(),
    })
}

/// Minimum fraction of a state's norm the flows' bands must carry.
pub const COVERAGE: f64 = 1.0 - 1e-6;

fn apply_multiplier(
    flows: &[FlowField],
    f: &FiberedState,
    bs: &BandStructure,
    value: impl Fn(&FlowField, usize) -> f64,
) -> Result<FiberedState> {
    let grid = *f.grid();
    bs.check_grid(&grid)?;
    let total = f.norm_sq();
    let mut covered = 0.0;
    let mut out = FiberedState::zeros(grid);
    let mut acc = out.values().to_vec();
    for flow in flows {
        if flow.k0.len() != grid.n_cells() {
            return Err(invalid("flow field does not match the k-grid"));
        }
        let phi = bs.band_fibers(&grid, flow.band)?;
        let c = project_with(f, &phi, flow.band);
        covered += c.population();
        let scaled: Vec<Complex64> = c.values.iter().enumerate().map(|(j, z)| z * value(flow, j)).collect();
        let lifted = lift_with(&grid, &phi, &scaled)?;
        acc.iter_mut().zip(lifted.values()).for_each(|(a, b)| *a += b);
    }
    if total > 0.0 && covered < COVERAGE * total {
        return Err(invalid(format!(
            "flow bands carry only {:.8} of the state's norm",
            covered / total
        )));
    }
    out = FiberedState::new(grid, acc)?;
    Ok(out)
}

/// `Σ_n r_n(t;k) ψ_n(k) φ_n(k)`.
#[allow(non_snake_case)]
pub fn apply_R(flows: &[FlowField], f: &FiberedState, bs: &BandStructure) -> Result<FiberedState> {
    apply_multiplier(flows, f, bs, |fl, j| fl.r[j])
}

/// `Σ_n k_n(t;k) ψ_n(k) φ_n(k)` with `k_n` reduced to the zone.
#[allow(non_snake_case)]
pub fn apply_K(flows: &[FlowField], f: &FiberedState, bs: &BandStructure) -> Result<FiberedState> {
    apply_multiplier(flows, f, bs, |fl, j| fl.k[j])
}

/// `Σ_n g(k_n(t;k)) ψ_n(k) φ_n(k)` for a complex Γ*-periodic `g`.
pub fn apply_g_of_k(
    flows: &[FlowField],
    f: &FiberedState,
    bs: &BandStructure,
    g: impl Fn(f64) -> Complex64,
) -> Result<FiberedState> {
    let re = apply_multiplier(flows, f, bs, |fl, j| g(fl.k[j]).re)?;
    let im = apply_multiplier(flows, f, bs, |fl, j| g(fl.k[j]).im)?;
    let i = Complex64::new(0.0, 1.0);
    let v = re.values().iter().zip(im.values()).map(|(a, b)| a + i * b).collect();
    FiberedState::new(*f.grid(), v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurePoint {
    pub band: usize,
    pub r: f64,
    pub k: f64,
    pub weight: f64,
}

/// Point masses `|ψ_n(k_j)|² dk` carried to the flow endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportedMeasure {
    pub t: f64,
    pub points: Vec<MeasurePoint>,
}

impl TransportedMeasure {
    /// Pairs each flow with the band coefficients of the same band.
    pub fn new(flows: &[FlowField], coeffs: &[BlochCoefficients]) -> Result<Self> {
        let mut points = Vec::new();
        let mut t = None;
        for flow in flows {
            let c = coeffs
                .iter()
                .find(|c| c.band == flow.band)
                .ok_or_else(|| invalid(format!("no coefficients for band {}", flow.band)))?;
            if c.values.len() != flow.k0.len() {
                return Err(invalid("coefficients and flow use different k-grids"));
            }
            if let Some(t0) = t {
                if t0 != flow.t {
                    return Err(invalid("flows at different times"));
                }
            }
            t = Some(flow.t);
            let dk = 1.0 / c.values.len() as f64;
            for (j, z) in c.values.iter().enumerate() {
                points.push(MeasurePoint { band: flow.band, r: flow.r[j], k: flow.k[j], weight: z.norm_sqr() * dk });
            }
        }
        Ok(TransportedMeasure { t: t.unwrap_or(0.0), points })
    }

    pub fn total_mass(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    /// `∫ a dρ` for a function of `(r, k)`.
    pub fn integrate(&self, a: impl Fn(f64, f64) -> f64) -> f64 {
        self.points.iter().map(|p| p.weight * a(p.r, p.k)).sum()
    }
}

/// Uniform bins `[lo + i w, lo + (i+1) w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.mass.len()).map(|i| self.lo + i as f64 * self.width).collect()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let i = ((x - self.lo) / self.width).floor();
        (i >= 0.0 && (i as usize) < self.mass.len()).then_some(i as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

fn histogram(values: impl Iterator<Item = (f64, f64)> + Clone, spec: BinSpec, axis: &str) -> Result<Histogram> {
    if spec.count == 0 || !(spec.hi > spec.lo) {
        return Err(invalid(format!("empty {axis} bin range")));
    }
    let width = (spec.hi - spec.lo) / spec.count as f64;
    let (mut lo, mut count) = (spec.lo, spec.count);
    let min = values.clone().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let max = values.clone().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    if min < lo {
        let extra = ((lo - min) / width).ceil() as usize;
        log::warn!("{axis} bins extended by {extra} below {lo}");
        lo -= extra as f64 * width;
        count += extra;
    }
    let hi = lo + count as f64 * width;
    if max >= hi {
        let extra = ((max - hi) / width).floor() as usize + 1;
        log::warn!("{axis} bins extended by {extra} above {hi}");
        count += extra;
    }
    let mut h = Histogram { lo, width, mass: vec![0.0; count] };
    for (x, w) in values {
        let i = h.bin_of(x).unwrap_or(count - 1);
        h.mass[i] += w;
    }
    Ok(h)
}

/// Position and quasimomentum marginals of the transported measure.
pub fn transported_marginals(tm: &TransportedMeasure, r_bins: BinSpec, k_bins: BinSpec) -> Result<(Histogram, Histogram)> {
    let r = histogram(tm.points.iter().map(|p| (p.r, p.weight)), r_bins, "position")?;
    let k = histogram(tm.points.iter().map(|p| (p.k, p.weight)), k_bins, "quasimomentum")?;
    Ok((r, k))
}

/// Weak-form residual of the transport equation at time `t`:
/// `|d/dt ∫φ dρ_n(t) − ∫(∇E_n·∂_rφ − ∇W·∂_kφ) dρ_n(t)|`, with the time
/// derivative from a five-point stencil of step `10·dt_c` along the RK4
/// characteristics. `phi` returns `(φ, ∂_rφ, ∂_kφ)` and must be Γ*-periodic
/// in `k`.
pub fn transport_residual(
    e: &BandSpline,
    w: &ExternalPotential,
    k0: &[f64],
    weights: &[f64],
    t: f64,
    dt_c: f64,
    phi: impl Fn(f64, f64) -> (f64, f64, f64) + Sync,
) -> Result<f64> {
    if k0.len() != weights.len() {
        return Err(invalid("weights and initial points differ in length"));
    }
    let h = 10.0 * dt_c;
    let times = [t - 2.0 * h, t - h, t, t + h, t + 2.0 * h];
    if times[0] < 0.0 {
        return Err(invalid("transport check needs t >= 20·dt_c"));
    }
    let contributions: Vec<(f64, f64)> = k0
        .par_iter()
        .zip(weights)
        .map(|(&k, &wt)| {
            let (pts, _) = integrate_to_times(e, w, PhasePoint { t: 0.0, r: 0.0, k }, &times, dt_c)?;
            let f: Vec<f64> = pts.iter().map(|p| phi(p.r, p.k).0).collect();
            let dfdt = (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * h);
            let p = pts[2];
            let (_, dr, dk) = phi(p.r, p.k);
            let rhs = e.velocity(p.k) * dr - w.gradient(p.r) * dk;
            Ok((wt * dfdt, wt * rhs))
        })
        .collect::<Result<_>>()?;
    let lhs: f64 = contributions.iter().map(|c| c.0).sum();
    let rhs: f64 = contributions.iter().map(|c| c.1).sum();
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::{compute_band_structure, project_band};
    use crate::bloch::BlochTransform;
    use crate::lattice::{build_grid, build_lattice, PeriodicPotential};
    use crate::propagator::prepare_band_packet;
    use std::f64::consts::PI;

    fn setup() -> (crate::lattice::SimulationGrid, BandStructure) {
        let g = build_grid(build_lattice(2.0 * PI).unwrap(), 64, 16).unwrap();
        let bs = compute_band_structure(&PeriodicPotential::single(0.15), &g, 10, 3, 0.05).unwrap();
        (g, bs)
    }

    #[test]
    fn free_flow_is_linear() {
        let (_, bs) = setup();
        let e = BandSpline::new(&bs, 0).unwrap();
        let tr = integrate_flow(&e, &ExternalPotential::zero(), 0.2, 3.0, 1e-2).unwrap();
        assert!((tr.end.r - 3.0 * e.velocity(0.2)).abs() < 1e-12);
        assert_eq!(tr.end.k, 0.2);
    }

    #[test]
    fn flow_conserves_energy_and_reverses() {
        let (_, bs) = setup();
        let e = BandSpline::new(&bs, 0).unwrap();
        let w = ExternalPotential::gaussian(0.1, 0.4, 0.5).unwrap();
        let fwd = integrate_flow(&e, &w, 0.2, 5.0, 1e-3).unwrap();
        assert!(fwd.energy_drift < 1e-8, "{}", fwd.energy_drift);
        let (back, _) = integrate_to_times(&e, &w, fwd.end, &[0.0], 1e-3).unwrap();
        assert!(back[0].r.abs() < 1e-8 && (back[0].k - 0.2).abs() < 1e-8);
    }

    #[test]
    fn spline_velocity_matches_band_table() {
        let (_, bs) = setup();
        let e = BandSpline::new(&bs, 0).unwrap();
        let v = bs.band_velocity(0).unwrap();
        for (j, vj) in v.iter().enumerate() {
            assert!((e.velocity(bs.k(j)) - vj).abs() < 1e-5);
        }
    }

    #[test]
    fn flow_field_initial_conditions() {
        let (_, bs) = setup();
        let w = ExternalPotential::gaussian(0.1, 0.4, 0.5).unwrap();
        let ff = build_flow_field(&bs, 0, &w, 0.0, 1e-3).unwrap();
        assert!(ff.r.iter().all(|&r| r == 0.0));
        assert_eq!(ff.k, bs.k_grid());
    }

    #[test]
    fn r_and_k_operators() {
        let (g, bs) = setup();
        let w = ExternalPotential::gaussian(0.1, 0.4, 0.5).unwrap();
        let psi = prepare_band_packet(&bs, &g, 0, 0.2, 0.05).unwrap();
        let f = BlochTransform::new(g).forward(&psi).unwrap();
        let f0 = build_flow_field(&bs, 0, &w, 0.0, 1e-3).unwrap();
        assert!(apply_R(std::slice::from_ref(&f0), &f, &bs).unwrap().norm() < 1e-14);
        let f1 = build_flow_field(&bs, 0, &w, 1.0, 1e-3).unwrap();
        let rf = apply_R(std::slice::from_ref(&f1), &f, &bs).unwrap();
        let c = project_band(&f, &bs, 0).unwrap();
        let expect: f64 = c.values.iter().zip(&f1.r).map(|(z, r)| r * r * z.norm_sqr()).sum::<f64>() / 64.0;
        assert!((rf.norm_sq() - expect).abs() < 1e-10);
        let mut constant = f1.clone();
        constant.r.iter_mut().for_each(|r| *r = 2.5);
        let cf = apply_R(std::slice::from_ref(&constant), &f, &bs).unwrap();
        let diff: f64 = cf.values().iter().zip(f.values()).map(|(a, b)| (a - b * 2.5).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10);
        // second band alone does not cover a band-one state
        let other = build_flow_field(&bs, 1, &w, 0.0, 1e-3).unwrap();
        assert!(apply_K(&[other], &f, &bs).is_err());
    }

    #[test]
    fn marginals_at_time_zero() {
        let (g, bs) = setup();
        let w = ExternalPotential::gaussian(0.1, 0.4, 0.5).unwrap();
        let psi = prepare_band_packet(&bs, &g, 0, 0.2, 0.05).unwrap();
        let f = BlochTransform::new(g).forward(&psi).unwrap();
        let c = project_band(&f, &bs, 0).unwrap();
        let ff = build_flow_field(&bs, 0, &w, 0.0, 1e-3).unwrap();
        let tm = TransportedMeasure::new(&[ff], &[c]).unwrap();
        let (r, k) = transported_marginals(
            &tm,
            BinSpec { lo: -1.05, hi: 1.05, count: 21 },
            BinSpec { lo: -0.5, hi: 0.5, count: 20 },
        )
        .unwrap();
        assert!((r.mass[r.bin_of(0.0).unwrap()] - 1.0).abs() < 1e-10);
        assert!((r.total() - 1.0).abs() < 1e-12 && (k.total() - 1.0).abs() < 1e-12);
        // extension when the range is too narrow
        let (r2, _) = transported_marginals(
            &tm,
            BinSpec { lo: 0.5, hi: 1.0, count: 5 },
            BinSpec { lo: -0.5, hi: 0.5, count: 4 },
        )
        .unwrap();
        assert!(r2.lo <= 0.0 && (r2.total() - 1.0).abs() < 1e-12);
    }
}
