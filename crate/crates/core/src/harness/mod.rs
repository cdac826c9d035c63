//! ε-sweeps of the error functionals and their convergence orders.

mod fit;
mod metrics;
mod report;

use std::collections::BTreeSet;

use rayon::prelude::*;

pub use fit::{fit_order, strictly_decreasing, OrderFit, METRIC_FLOOR};
pub use metrics::{
    coefficient_distance, metric_diag_position, metric_leakage, metric_position_strong, metric_quasimomentum,
    metric_wigner_weak, torus_character, BandSetup, QuasimomentumErrors, WignerCheck,
};
pub use report::{format_value, write_report, REPORT_NOTE};

use crate::config::{ExperimentConfig, Metric};
use crate::effective::{build_effective_potential, propagate_effective_full, propagate_effective_sc, sc_operator_distance};
use crate::error::{Error, Result};
use crate::effective::offdiagonal_coupling_norm;
use crate::propagator::{DiagnosticRecord, EvolvedState, Propagator, PropagatorConfig};
use crate::semiclassics::{build_flow_field, FlowField};
use crate::wigner::reference_dictionary;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub metric: Metric,
    pub epsilon: f64,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRow {
    pub metric: Metric,
    pub t: f64,
    pub fit: OrderFit,
    /// Values strictly decrease along the ladder, with no point missing.
    pub monotone: bool,
}

/// Propagator and Wigner health at one ladder point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonHealth {
    pub epsilon: f64,
    pub norm_drift: f64,
    pub energy_drift: f64,
    pub max_boundary_mass: f64,
    /// Largest Wigner mass defect over `t_list`, if measured.
    pub wigner_mass_defect: Option<f64>,
    pub wigner_marginal_defect: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub epsilon: f64,
    pub metric: Option<Metric>,
    pub t: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceReport {
    pub epsilon_ladder: Vec<f64>,
    pub rows: Vec<ReportRow>,
    pub slopes: Vec<SlopeRow>,
    pub health: Vec<EpsilonHealth>,
    pub failures: Vec<SweepFailure>,
    /// Fits that could not be made, e.g. values under the floor.
    pub notes: Vec<String>,
}

impl ConvergenceReport {
    pub fn values(&self, metric: Metric, t: f64) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.metric == metric && r.t == t).map(|r| (r.epsilon, r.value)).collect()
    }

    pub fn slope(&self, metric: Metric, t: f64) -> Option<&SlopeRow> {
        self.slopes.iter().find(|s| s.metric == metric && s.t == t)
    }

    /// 0 when every requested value was computed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }
}

/// Outcome of one ladder point.
#[derive(Debug, Clone, Default)]
struct EpsilonOutcome {
    rows: Vec<ReportRow>,
    health: Option<EpsilonHealth>,
    failures: Vec<SweepFailure>,
}

/// Largest micro excursion allowed by the boundary margin.
fn boundary_precheck(cfg: &ExperimentConfig, setup: &BandSetup) -> Result<()> {
    let t_max = cfg.sweep.t_list.iter().copied().fold(0.0, f64::max);
    let v_max = setup.bs.band_velocity(setup.band)?.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    // half-width of the initial packet where |ψ| falls below 1e-16 of its peak
    let spread = (2.0 * 16.0 * 10f64.ln()).sqrt() / cfg.packet.sigma_k;
    let limit = (1.0 - cfg.propagation.boundary_margin) * 0.5 * setup.grid.box_length();
    for &eps in &cfg.sweep.epsilon_ladder {
        let reach = v_max * t_max / eps + spread;
        if reach >= limit {
            return Err(Error::Config(format!(
                "at epsilon {eps} the packet may travel {reach:.1} of the {limit:.1} allowed; increase grid.n_cells"
            )));
        }
    }
    Ok(())
}

/// Flow fields at each time of `t_list`, shared by all ladder points.
fn flow_fields(cfg: &ExperimentConfig, setup: &BandSetup) -> Result<Vec<FlowField>> {
    cfg.sweep
        .t_list
        .iter()
        .map(|&t| build_flow_field(&setup.bs, setup.band, &setup.w, t, cfg.flow.dt))
        .collect()
}

fn drift(records: &[DiagnosticRecord], f: impl Fn(&DiagnosticRecord) -> f64, relative: bool) -> f64 {
    let Some(first) = records.first() else { return 0.0 };
    let x0 = f(first);
    let scale = if relative { x0.abs().max(f64::MIN_POSITIVE) } else { 1.0 };
    records.iter().map(|r| (f(r) - x0).abs() / scale).fold(0.0, f64::max)
}

struct Collector<'a> {
    epsilon: f64,
    wanted: &'a BTreeSet<Metric>,
    out: EpsilonOutcome,
}

impl Collector<'_> {
    fn push(&mut self, metric: Metric, t: f64, value: Result<f64>) {
        if !self.wanted.contains(&metric) {
            return;
        }
        match value {
            Ok(value) => self.out.rows.push(ReportRow { metric, epsilon: self.epsilon, t, value }),
            Err(e) => self.out.failures.push(SweepFailure {
                epsilon: self.epsilon,
                metric: Some(metric),
                t: Some(t),
                message: e.to_string(),
            }),
        }
    }
}

fn run_epsilon(
    cfg: &ExperimentConfig,
    setup: &BandSetup,
    flows: &[FlowField],
    epsilon: f64,
    wanted: &BTreeSet<Metric>,
) -> EpsilonOutcome {
    let mut col = Collector { epsilon, wanted, out: EpsilonOutcome::default() };
    if let Err(e) = measure_epsilon(cfg, setup, flows, &mut col) {
        col.out.failures.push(SweepFailure { epsilon, metric: None, t: None, message: e.to_string() });
    }
    col.out
}

fn measure_epsilon(cfg: &ExperimentConfig, setup: &BandSetup, flows: &[FlowField], col: &mut Collector) -> Result<()> {
    let eps = col.epsilon;
    let wanted = col.wanted;
    let band = setup.band;
    let energies = setup.bs.energies(band).to_vec();
    let a = setup.grid.lattice().a();
    let dt_eff = cfg.propagation.effective_dt;

    let needs_op = [Metric::DiagPosition, Metric::CoeffDistance, Metric::ScVsFullNorm, Metric::WscOperatorNorm]
        .iter()
        .any(|m| wanted.contains(m));
    let op = if needs_op { Some(build_effective_potential(&setup.bs, band, &setup.w, eps)?) } else { None };
    if let Some(op) = &op {
        col.push(Metric::WscOperatorNorm, 0.0, Ok(sc_operator_distance(op, &setup.bs, &setup.w)));
    }
    if wanted.contains(&Metric::OdNorm) {
        col.push(Metric::OdNorm, 0.0, offdiagonal_coupling_norm(&setup.bs, &setup.grid, band, &setup.w, eps));
    }

    let t_max = cfg.sweep.t_list.iter().copied().fold(0.0, f64::max);
    let mut pcfg = PropagatorConfig::new(eps, t_max);
    pcfg.dt_factor = cfg.propagation.dt_factor;
    pcfg.boundary_margin = cfg.propagation.boundary_margin;
    let prop = Propagator::new(setup.grid, &setup.v, &setup.w, &pcfg)?;

    let dictionary = reference_dictionary(setup.grid.lattice().gamma_star());
    let g = torus_character(setup.grid.lattice().gamma_star());
    let mut state = EvolvedState::initial(setup.psi0.clone(), eps);
    let mut records = Vec::new();
    let mut g_full = setup.coeffs0.clone();
    let mut g_sc = setup.coeffs0.clone();
    let mut wigner_mass: Option<f64> = None;
    let mut wigner_marginal: Option<f64> = None;

    // flows come in t_list order; evolve through the times in ascending order
    let mut order: Vec<usize> = (0..flows.len()).collect();
    order.sort_by(|&i, &j| flows[i].t.total_cmp(&flows[j].t));
    for i in order {
        let flow = &flows[i];
        let t = flow.t;
        let step = t - state.t_macro;
        let mut next = prop.advance(&state, step, 100)?;
        next.t_macro = t;
        records.extend(std::mem::take(&mut next.diagnostics));
        state = next;

        if let Some(op) = &op {
            g_full = propagate_effective_full(&g_full, op, &energies, dt_eff, step)?;
            g_sc = propagate_effective_sc(&g_sc, &energies, a, &setup.w, eps, step, dt_eff)?;
        }

        if wanted.contains(&Metric::PositionStrong) {
            col.push(Metric::PositionStrong, t, metric_position_strong(&prop, &state, setup, flow));
        }
        if wanted.contains(&Metric::QuasimomentumStrong) || wanted.contains(&Metric::QuasimomentumWeak) {
            match metric_quasimomentum(&prop, &state, setup, flow, g) {
                Ok(q) => {
                    col.push(Metric::QuasimomentumStrong, t, Ok(q.strong));
                    col.push(Metric::QuasimomentumWeak, t, Ok(q.weak));
                }
                Err(e) => {
                    col.push(Metric::QuasimomentumStrong, t, Err(e.clone()));
                    col.push(Metric::QuasimomentumWeak, t, Err(e));
                }
            }
        }
        if wanted.contains(&Metric::Leakage) {
            col.push(Metric::Leakage, t, metric_leakage(&state, setup));
        }
        if op.is_some() {
            col.push(Metric::DiagPosition, t, metric_diag_position(&state, setup, &g_full));
            let coeffs = setup.coefficients(&state.psi);
            col.push(Metric::CoeffDistance, t, coeffs.and_then(|c| coefficient_distance(&c, &g_full)));
            col.push(Metric::ScVsFullNorm, t, coefficient_distance(&g_full, &g_sc));
        }
        if wanted.contains(&Metric::WignerWeak) {
            match metric_wigner_weak(&state, setup, flow, &dictionary) {
                Ok(w) => {
                    wigner_mass = Some(wigner_mass.unwrap_or(0.0).max(w.mass_defect));
                    wigner_marginal = Some(wigner_marginal.unwrap_or(0.0).max(w.marginal_defect));
                    col.push(Metric::WignerWeak, t, Ok(w.max_deviation));
                }
                Err(e) => col.push(Metric::WignerWeak, t, Err(e)),
            }
        }
    }
    col.out.health = Some(EpsilonHealth {
        epsilon: eps,
        norm_drift: drift(&records, |d| d.norm, false),
        energy_drift: drift(&records, |d| d.energy, true),
        max_boundary_mass: records.iter().map(|d| d.boundary_mass).fold(0.0, f64::max),
        wigner_mass_defect: wigner_mass,
        wigner_marginal_defect: wigner_marginal,
    });
    Ok(())
}

fn ladder_index(ladder: &[f64], eps: f64) -> usize {
    ladder.iter().position(|&e| e == eps).unwrap_or(usize::MAX)
}

/// Measures every requested metric at every ladder point and time, then
/// fits log-log slopes wherever at least three points exist.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let ladder = cfg.sweep.epsilon_ladder.clone();
    let wanted: BTreeSet<Metric> = cfg.sweep.metrics.iter().copied().collect();
    let mut report = ConvergenceReport { epsilon_ladder: ladder.clone(), ..Default::default() };
    if wanted.is_empty() {
        return Ok(report);
    }
    let setup = BandSetup::from_config(cfg)?;
    boundary_precheck(cfg, &setup)?;
    let flows = flow_fields(cfg, &setup)?;

    let outcomes: Vec<EpsilonOutcome> =
        ladder.par_iter().map(|&eps| run_epsilon(cfg, &setup, &flows, eps, &wanted)).collect();
    for o in outcomes {
        report.rows.extend(o.rows);
        report.health.extend(o.health);
        report.failures.extend(o.failures);
    }
    report.rows.sort_by(|a, b| {
        a.metric
            .cmp(&b.metric)
            .then(ladder_index(&ladder, a.epsilon).cmp(&ladder_index(&ladder, b.epsilon)))
            .then(a.t.total_cmp(&b.t))
    });
    for f in &report.failures {
        log::error!("epsilon {}: {}", f.epsilon, f.message);
    }
    fit_slopes(&mut report);
    Ok(report)
}

fn fit_slopes(report: &mut ConvergenceReport) {
    let mut keys: Vec<(Metric, f64)> = report.rows.iter().map(|r| (r.metric, r.t)).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    for (metric, t) in keys {
        let pts = report.values(metric, t);
        if pts.len() < 3 {
            continue;
        }
        let eps: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let vals: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let complete = pts.len() == report.epsilon_ladder.len();
        let monotone = complete && strictly_decreasing(&vals);
        if !monotone {
            report.notes.push(format!(
                "{} at t = {t}: values do not strictly decrease along the ladder{}",
                metric.name(),
                if complete { "" } else { " (points missing)" }
            ));
        }
        match fit_order(&eps, &vals) {
            Ok(fit) => report.slopes.push(SlopeRow { metric, t, fit, monotone }),
            Err(e) => report.notes.push(format!("{} at t = {t}: no slope ({e})", metric.name())),
        }
    }
}
