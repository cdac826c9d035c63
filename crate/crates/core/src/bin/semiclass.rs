use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use semiclass::bands::compute_band_structure;
use semiclass::config::{ExperimentConfig, Metric};
use semiclass::error::{Error, Result};
use semiclass::harness::{format_value as fv, metric_wigner_weak, run_sweep, write_report, BandSetup};
use semiclass::propagator::{prepare_band_packet, EvolvedState, Propagator, PropagatorConfig};
use semiclass::semiclassics::{build_flow_field, integrate_flow_recorded, BandSpline};
use semiclass::wigner::{pair_symbol, reference_dictionary, support_grid, wigner_band};

#[derive(Parser)]
#[command(name = "semiclass", version, about = "Semiclassical band dynamics laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment file; the built-in reference configuration if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(p) => ExperimentConfig::load(p),
            None => Ok(ExperimentConfig::reference()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Band energies, velocities and gap margins on the k-grid.
    Bands {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cutoff: Option<usize>,
        #[arg(long)]
        n_bands: Option<usize>,
        #[arg(long)]
        gap_floor: Option<f64>,
    },
    /// Full Schrödinger evolution of a band packet.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        t_macro: f64,
        /// Micro time step; derived from the dt factor if omitted.
        #[arg(long)]
        dt: Option<f64>,
        /// One-based band number.
        #[arg(long)]
        band: Option<usize>,
        #[arg(long)]
        k_center: Option<f64>,
        #[arg(long)]
        sigma_k: Option<f64>,
    },
    /// Semiclassical trajectories from every k-grid point.
    Flow {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        t_macro: f64,
        #[arg(long)]
        dt: Option<f64>,
        /// Samples kept per trajectory.
        #[arg(long, default_value_t = 20)]
        records: usize,
    },
    /// Effective one-band dynamics against the full evolution.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1.., required = true)]
        epsilon: Vec<f64>,
        #[arg(long, num_args = 1.., default_values_t = [1.0])]
        t: Vec<f64>,
    },
    /// Band Wigner function and its pairings with the symbol dictionary.
    Wigner {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        t_macro: f64,
        /// Keep every n-th position node in `wigner.csv`.
        #[arg(long, default_value_t = 4)]
        stride: usize,
    },
    /// ε-sweep of all configured metrics with convergence fits.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Also write one SVG plot per metric.
        #[arg(long)]
        plots: bool,
    },
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<std::fs::File>> {
    std::fs::create_dir_all(dir)?;
    csv::Writer::from_path(dir.join(name)).map_err(|e| Error::Io(e.to_string()))
}

fn row<const N: usize>(w: &mut csv::Writer<std::fs::File>, fields: [String; N]) -> Result<()> {
    w.write_record(fields).map_err(|e| Error::Io(e.to_string()))
}

fn bands(common: &Common, cutoff: Option<usize>, n_bands: Option<usize>, gap_floor: Option<f64>) -> Result<i32> {
    let cfg = common.load()?;
    let grid = cfg.grid()?;
    let bs = compute_band_structure(
        &cfg.periodic_potential()?,
        &grid,
        cutoff.unwrap_or(cfg.bands.cutoff),
        n_bands.unwrap_or(cfg.bands.n_bands),
        gap_floor.unwrap_or(cfg.bands.gap_floor),
    )?;
    let mut w = csv_writer(&common.out, "bands.csv")?;
    row(&mut w, ["k", "n", "E", "v", "gap_margin"].map(String::from))?;
    for n in 0..bs.n_bands() {
        // velocities are only tabulated for isolated bands
        let v = bs.band_velocity(n).ok();
        for j in 0..bs.n_k() {
            row(
                &mut w,
                [
                    fv(bs.k(j)),
                    (n + 1).to_string(),
                    fv(bs.energies(n)[j]),
                    v.map(|v| fv(v[j])).unwrap_or_default(),
                    fv(bs.gap_margins(n)[j]),
                ],
            )?;
        }
    }
    w.flush()?;
    info!("isolated bands: {:?}", (0..bs.n_bands()).filter(|&n| bs.is_isolated(n)).map(|n| n + 1).collect::<Vec<_>>());
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn evolve(
    common: &Common,
    epsilon: f64,
    t_macro: f64,
    dt: Option<f64>,
    band: Option<usize>,
    k_center: Option<f64>,
    sigma_k: Option<f64>,
) -> Result<i32> {
    let mut cfg = common.load()?;
    if let Some(b) = band {
        cfg.bands.band = b;
    }
    cfg.validate()?;
    let grid = cfg.grid()?;
    let v = cfg.periodic_potential()?;
    let w = cfg.external_potential()?;
    let bs = compute_band_structure(&v, &grid, cfg.bands.cutoff, cfg.bands.n_bands, cfg.bands.gap_floor)?;
    let psi = prepare_band_packet(
        &bs,
        &grid,
        cfg.band_index(),
        k_center.unwrap_or(cfg.packet.k_center),
        sigma_k.unwrap_or(cfg.packet.sigma_k),
    )?;
    let mut pcfg = PropagatorConfig::new(epsilon, t_macro);
    pcfg.dt = dt;
    pcfg.dt_factor = cfg.propagation.dt_factor;
    pcfg.boundary_margin = cfg.propagation.boundary_margin;
    let prop = Propagator::new(grid, &v, &w, &pcfg)?;
    let end = prop.advance(&EvolvedState::initial(psi, epsilon), t_macro, 100)?;

    let mut out = csv_writer(&common.out, "state.csv")?;
    row(&mut out, ["x", "re", "im"].map(String::from))?;
    for (j, z) in end.psi.samples().iter().enumerate() {
        row(&mut out, [fv(grid.x(j)), fv(z.re), fv(z.im)])?;
    }
    out.flush()?;
    let mut out = csv_writer(&common.out, "diagnostics.csv")?;
    row(&mut out, ["step", "norm", "energy", "boundary_mass"].map(String::from))?;
    for d in &end.diagnostics {
        row(&mut out, [d.step.to_string(), fv(d.norm), fv(d.energy), fv(d.boundary_mass)])?;
    }
    out.flush()?;
    info!(
        "{} steps of dt = {:.4e}; norm drift {:.2e}, relative energy drift {:.2e}, <r> = {:.6}",
        end.steps,
        end.dt,
        end.norm_drift(),
        end.energy_drift(),
        end.position_expectation()
    );
    Ok(0)
}

fn flow(common: &Common, t_macro: f64, dt: Option<f64>, records: usize) -> Result<i32> {
    let cfg = common.load()?;
    let grid = cfg.grid()?;
    let w = cfg.external_potential()?;
    let bs = compute_band_structure(
        &cfg.periodic_potential()?,
        &grid,
        cfg.bands.cutoff,
        cfg.bands.n_bands,
        cfg.bands.gap_floor,
    )?;
    let e = BandSpline::new(&bs, cfg.band_index())?;
    let dt = dt.unwrap_or(cfg.flow.dt);
    let mut out = csv_writer(&common.out, "flow.csv")?;
    row(&mut out, ["k0", "t", "r", "k", "energy_drift"].map(String::from))?;
    for k0 in bs.k_grid() {
        let tr = integrate_flow_recorded(&e, &w, k0, t_macro, dt, records)?;
        let h0 = e.energy(k0) + w.value(0.0);
        for p in &tr.samples {
            let drift = (e.energy(p.k) + w.value(p.r) - h0).abs();
            let k = e.lattice().reduce_k(p.k);
            row(&mut out, [fv(k0), fv(p.t), fv(p.r), fv(k), fv(drift)])?;
        }
    }
    out.flush()?;
    Ok(0)
}

fn compare(common: &Common, epsilons: &[f64], times: &[f64]) -> Result<i32> {
    let mut cfg = common.load()?;
    let mut ladder = epsilons.to_vec();
    ladder.sort_by(|a, b| b.total_cmp(a));
    ladder.dedup();
    cfg.sweep.epsilon_ladder = ladder;
    cfg.sweep.t_list = times.to_vec();
    cfg.sweep.metrics = vec![Metric::CoeffDistance, Metric::OdNorm, Metric::ScVsFullNorm];
    let report = run_sweep(&cfg)?;
    let mut out = csv_writer(&common.out, "effective_vs_full.csv")?;
    row(&mut out, ["epsilon", "t", "metric", "value"].map(String::from))?;
    for r in &report.rows {
        row(&mut out, [fv(r.epsilon), fv(r.t), r.metric.name().to_string(), fv(r.value)])?;
    }
    out.flush()?;
    for f in &report.failures {
        error!("epsilon {}: {}", f.epsilon, f.message);
    }
    Ok(report.exit_code())
}

fn wigner(common: &Common, epsilon: f64, t_macro: f64, stride: usize) -> Result<i32> {
    let cfg = common.load()?;
    let setup = BandSetup::from_config(&cfg)?;
    let mut pcfg = PropagatorConfig::new(epsilon, t_macro);
    pcfg.dt_factor = cfg.propagation.dt_factor;
    pcfg.boundary_margin = cfg.propagation.boundary_margin;
    let prop = Propagator::new(setup.grid, &setup.v, &setup.w, &pcfg)?;
    let state = prop.advance(&EvolvedState::initial(setup.psi0.clone(), epsilon), t_macro, 0)?;
    let flow = build_flow_field(&setup.bs, setup.band, &setup.w, t_macro, cfg.flow.dt)?;
    let dictionary = reference_dictionary(setup.grid.lattice().gamma_star());

    let xs = support_grid(&state.psi, epsilon, stride, 1e-8);
    let wg = wigner_band(&state.psi, epsilon, &xs)?;
    let mut out = csv_writer(&common.out, "wigner.csv")?;
    row(&mut out, ["x", "k", "value"].map(String::from))?;
    for (i, x) in wg.x.iter().enumerate() {
        for (j, k) in wg.k.iter().enumerate() {
            row(&mut out, [fv(*x), fv(*k), fv(wg.value(i, j))])?;
        }
    }
    out.flush()?;

    // pairings use the full-resolution Wigner grid
    let full = wigner_band(&state.psi, epsilon, &support_grid(&state.psi, epsilon, 1, 1e-16))?;
    let tm = semiclass::semiclassics::TransportedMeasure::new(
        std::slice::from_ref(&flow),
        std::slice::from_ref(&setup.coeffs0),
    )?;
    let mut out = csv_writer(&common.out, "pairings.csv")?;
    row(&mut out, ["symbol_id", "quantum", "classical", "abs_diff"].map(String::from))?;
    for (id, a) in dictionary.iter().enumerate() {
        let q = pair_symbol(&full, a)?;
        let c = tm.integrate(|r, k| a.eval(r, k));
        row(&mut out, [id.to_string(), fv(q), fv(c), fv((q - c).abs())])?;
    }
    out.flush()?;
    let check = metric_wigner_weak(&state, &setup, &flow, &dictionary)?;
    info!(
        "max pairing deviation {:.4e}; mass defect {:.2e}; marginal defect {:.2e}",
        check.max_deviation, check.mass_defect, check.marginal_defect
    );
    Ok(0)
}

fn sweep(common: &Common, plots: bool) -> Result<i32> {
    let cfg = common.load()?;
    let out = if common.config.is_some() && common.out == Path::new(".") {
        cfg.sweep.output_dir.as_ref().map(PathBuf::from).unwrap_or_else(|| common.out.clone())
    } else {
        common.out.clone()
    };
    let report = run_sweep(&cfg)?;
    write_report(&report, &out, plots || cfg.sweep.plots)?;
    for s in &report.slopes {
        info!("{} t = {}: slope {:.3} (R² {:.3})", s.metric.name(), s.t, s.fit.slope, s.fit.r2);
    }
    for f in &report.failures {
        error!("epsilon {}: {}", f.epsilon, f.message);
    }
    Ok(report.exit_code())
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Bands { common, cutoff, n_bands, gap_floor } => bands(&common, cutoff, n_bands, gap_floor),
        Command::Evolve { common, epsilon, t_macro, dt, band, k_center, sigma_k } => {
            evolve(&common, epsilon, t_macro, dt, band, k_center, sigma_k)
        }
        Command::Flow { common, t_macro, dt, records } => flow(&common, t_macro, dt, records),
        Command::Compare { common, epsilon, t } => compare(&common, &epsilon, &t),
        Command::Wigner { common, epsilon, t_macro, stride } => wigner(&common, epsilon, t_macro, stride),
        Command::Sweep { common, plots } => sweep(&common, plots),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
