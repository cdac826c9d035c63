//! Property tests for the structural invariants of the laboratory.

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use semiclass::bands::{compute_band_structure, project_band, solve_fiber};
use semiclass::bloch::{BlochTransform, WaveFunction};
use semiclass::config::ExperimentConfig;
use semiclass::effective::{build_effective_potential, propagate_effective_sc};
use semiclass::harness::fit_order;
use semiclass::lattice::{build_grid, build_lattice, ExternalPotential, PeriodicPotential, SimulationGrid};
use semiclass::propagator::{propagate, PropagatorConfig};
use semiclass::semiclassics::{integrate_flow, BandSpline};
use semiclass::spline::PeriodicSpline;
use semiclass::wigner::{support_grid, wigner_band};

fn small_grid() -> SimulationGrid {
    build_grid(build_lattice(2.0 * PI).unwrap(), 16, 8).unwrap()
}

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| Complex64::new(re, im)), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gamma_star_times_a_is_two_pi(a in 0.1f64..100.0) {
        let l = build_lattice(a).unwrap();
        let ulp = f64::EPSILON * 2.0 * PI;
        prop_assert!((l.gamma_star() * a - 2.0 * PI).abs() <= 4.0 * ulp);
    }

    #[test]
    fn reduce_k_lands_in_zone_modulo_gamma_star(a in 0.5f64..20.0, k in -500.0f64..500.0) {
        let l = build_lattice(a).unwrap();
        let (lo, hi) = l.brillouin_zone();
        let r = l.reduce_k(k);
        prop_assert!(r >= lo && r < hi);
        let winding = (k - r) / l.gamma_star();
        prop_assert!((winding - winding.round()).abs() < 1e-9 * (1.0 + winding.abs()));
    }

    #[test]
    fn bloch_transform_is_unitary(samples in complex_vec(128)) {
        let grid = small_grid();
        let psi = WaveFunction::new(grid, samples).unwrap();
        let t = BlochTransform::new(grid);
        let f = t.forward(&psi).unwrap();
        prop_assert!((f.norm() - psi.norm()).abs() <= 1e-12 * psi.norm().max(1.0));
        let back = t.inverse(&f).unwrap();
        prop_assert!(back.distance(&psi).unwrap() <= 1e-12 * psi.norm().max(1.0));
    }

    #[test]
    fn band_projection_is_bounded_by_norm(samples in complex_vec(128), v in -0.3f64..0.3) {
        let grid = small_grid();
        let bs = compute_band_structure(&PeriodicPotential::single(v), &grid, 8, 3, 0.0).unwrap();
        let psi = WaveFunction::new(grid, samples).unwrap();
        let f = BlochTransform::new(grid).forward(&psi).unwrap();
        let total: f64 = (0..3).map(|n| project_band(&f, &bs, n).unwrap().population()).sum();
        prop_assert!(total <= psi.norm_sq() + 1e-12);
    }

    #[test]
    fn fiber_spectrum_is_periodic_and_accurate(v in -0.5f64..0.5, k in -0.5f64..0.5) {
        let l = build_lattice(2.0 * PI).unwrap();
        let p = PeriodicPotential::single(v);
        let a = solve_fiber(&p, &l, k, 10).unwrap();
        let b = solve_fiber(&p, &l, k + l.gamma_star(), 10).unwrap();
        // the top of the truncated basis differs between the two shifts
        for n in 0..6 {
            prop_assert!((a.energies[n] - b.energies[n]).abs() <= 1e-10);
        }
        prop_assert!(a.energies.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn fit_recovers_power_laws(c in 0.01f64..100.0, p in 0.2f64..3.0) {
        let eps = [0.2f64, 0.1, 0.05, 0.025];
        let values: Vec<f64> = eps.iter().map(|e| c * e.powf(p)).collect();
        let fit = fit_order(&eps, &values).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-9);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-8);
        prop_assert!(fit.r2 > 1.0 - 1e-12);
    }

    #[test]
    fn spline_interpolates_and_is_periodic(
        x0 in -5.0f64..5.0,
        period in 0.5f64..10.0,
        ys in prop::collection::vec(-2.0f64..2.0, 4..40),
        x in -50.0f64..50.0,
    ) {
        let n = ys.len();
        let s = PeriodicSpline::new(x0, period, ys.clone()).unwrap();
        for (i, y) in ys.iter().enumerate() {
            prop_assert!((s.value(x0 + i as f64 * period / n as f64) - y).abs() < 1e-10);
        }
        prop_assert!((s.value(x) - s.value(x + period)).abs() < 1e-9);
        prop_assert!((s.derivative(x) - s.derivative(x - 3.0 * period)).abs() < 1e-8);
    }

    #[test]
    fn wigner_mass_is_the_norm(kc in -0.3f64..0.3, width in 3.0f64..8.0, eps in 0.05f64..0.5) {
        let grid = small_grid();
        let psi = WaveFunction::from_fn(grid, |x| {
            Complex64::from_polar((-(x / width).powi(2) / 2.0).exp(), kc * x)
        });
        let xs = support_grid(&psi, eps, 1, 1e-16);
        let w = wigner_band(&psi, eps, &xs).unwrap();
        prop_assert!((w.mass() - psi.norm_sq()).abs() < 1e-10 * psi.norm_sq());
        prop_assert!(w.max_imag < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn full_propagator_is_unitary_and_reversible(
        kc in -0.4f64..0.4,
        v in -0.2f64..0.2,
        w0 in -0.2f64..0.2,
        eps in 0.1f64..1.0,
    ) {
        let grid = build_grid(build_lattice(2.0 * PI).unwrap(), 64, 8).unwrap();
        let psi = WaveFunction::from_fn(grid, |x| Complex64::from_polar((-(x / 20.0).powi(2) / 2.0).exp(), kc * x));
        let vp = PeriodicPotential::single(v);
        let w = ExternalPotential::gaussian(w0, 0.3, 0.8).unwrap();
        let cfg = PropagatorConfig::new(eps, 0.2 * eps);
        let out = propagate(&psi, &vp, &w, &cfg).unwrap();
        prop_assert!(out.norm_drift() < 1e-11);
        let back = propagate(&out.psi.conj(), &vp, &w, &cfg).unwrap().psi.conj();
        prop_assert!(back.distance(&psi).unwrap() < 1e-8 * psi.norm());
    }

    #[test]
    fn flow_conserves_energy(k0 in -0.5f64..0.5, v in -0.3f64..0.3, w0 in -0.3f64..0.3) {
        let grid = build_grid(build_lattice(2.0 * PI).unwrap(), 64, 8).unwrap();
        let bs = compute_band_structure(&PeriodicPotential::single(v.abs().max(0.05)), &grid, 8, 2, 0.0).unwrap();
        let e = BandSpline::new(&bs, 0).unwrap();
        let w = ExternalPotential::gaussian(w0, 0.4, 0.5).unwrap();
        let tr = integrate_flow(&e, &w, k0, 2.0, 1e-3).unwrap();
        prop_assert!(tr.energy_drift < 1e-8);
    }

    #[test]
    fn effective_evolution_is_unitary(w0 in -0.3f64..0.3, eps in 0.05f64..0.5) {
        let grid = build_grid(build_lattice(2.0 * PI).unwrap(), 64, 8).unwrap();
        let bs = compute_band_structure(&PeriodicPotential::single(0.15), &grid, 8, 2, 0.05).unwrap();
        let w = ExternalPotential::gaussian(w0, 0.4, 0.5).unwrap();
        let op = build_effective_potential(&bs, 0, &w, eps).unwrap();
        prop_assert!(op.hermiticity_defect() < 1e-10);
        let g = semiclass::bands::BlochCoefficients::new(
            0,
            bs.k_grid().iter().map(|&k| Complex64::from_polar((-(k - 0.1f64).powi(2) / 0.005).exp(), 3.0 * k)).collect(),
        );
        let out = propagate_effective_sc(&g, bs.energies(0), 2.0 * PI, &w, eps, 0.5, 0.01).unwrap();
        prop_assert!((out.population() - g.population()).abs() < 1e-10 * g.population());
    }

    #[test]
    fn config_round_trips(
        ladder in prop::collection::vec(0.01f64..1.0, 1..5),
        t in prop::collection::vec(0.0f64..3.0, 1..4),
        kc in -0.3f64..0.3,
    ) {
        let mut ladder = ladder;
        ladder.sort_by(|a, b| b.total_cmp(a));
        ladder.dedup();
        let mut cfg = ExperimentConfig::reference();
        cfg.sweep.epsilon_ladder = ladder;
        cfg.sweep.t_list = t;
        cfg.packet.k_center = kc;
        let text = cfg.to_toml_string().unwrap();
        prop_assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }
}
