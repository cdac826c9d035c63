//! TOML experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{
    build_grid, build_lattice, ExternalKind, ExternalPotential, GaussianTerm, PeriodicPotential, SimulationGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PositionStrong,
    QuasimomentumStrong,
    QuasimomentumWeak,
    Leakage,
    DiagPosition,
    CoeffDistance,
    OdNorm,
    WscOperatorNorm,
    ScVsFullNorm,
    WignerWeak,
}

impl Metric {
    pub const ALL: [Metric; 10] = [
        Metric::PositionStrong,
        Metric::QuasimomentumStrong,
        Metric::QuasimomentumWeak,
        Metric::Leakage,
        Metric::DiagPosition,
        Metric::CoeffDistance,
        Metric::OdNorm,
        Metric::WscOperatorNorm,
        Metric::ScVsFullNorm,
        Metric::WignerWeak,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::PositionStrong => "position_strong",
            Metric::QuasimomentumStrong => "quasimomentum_strong",
            Metric::QuasimomentumWeak => "quasimomentum_weak",
            Metric::Leakage => "leakage",
            Metric::DiagPosition => "diag_position",
            Metric::CoeffDistance => "coeff_distance",
            Metric::OdNorm => "od_norm",
            Metric::WscOperatorNorm => "wsc_operator_norm",
            Metric::ScVsFullNorm => "sc_vs_full_norm",
            Metric::WignerWeak => "wigner_weak",
        }
    }

    /// Metrics that do not depend on time are reported once, at `t = 0`.
    pub fn time_independent(&self) -> bool {
        matches!(self, Metric::OdNorm | Metric::WscOperatorNorm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_cells: usize,
    pub points_per_cell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    /// `(m, v_m)` pairs of `V(x) = Σ 2 v_m cos(m γ* x)`.
    #[serde(default)]
    pub cosine: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSection {
    pub kind: ExternalKind,
    /// `[w0, r0, sigma]` triples.
    pub terms: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsSection {
    pub cutoff: usize,
    pub n_bands: usize,
    pub gap_floor: f64,
    /// One-based band number.
    pub band: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSection {
    pub k_center: f64,
    pub sigma_k: f64,
}

fn default_effective_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationSection {
    pub dt_factor: f64,
    pub boundary_margin: f64,
    /// Micro step of the one-band effective propagators.
    #[serde(default = "default_effective_dt")]
    pub effective_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub epsilon_ladder: Vec<f64>,
    pub t_list: Vec<f64>,
    #[serde(default)]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub plots: bool,
    /// Default output directory; the CLI `--out` flag overrides it.
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeSection,
    pub grid: GridSection,
    pub potential: PotentialSection,
    pub external: ExternalSection,
    pub bands: BandsSection,
    pub packet: PacketSection,
    pub propagation: PropagationSection,
    pub flow: FlowSection,
    pub sweep: SweepSection,
}

impl ExperimentConfig {
    /// The reference configuration: `a = 2π`, `V = 2·0.15·cos x`, band 1,
    /// Gaussian `W` with `w₀ = 0.1, r₀ = 0.4, σ = 0.5`.
    pub fn reference() -> Self {
        ExperimentConfig {
            lattice: LatticeSection { a: 2.0 * std::f64::consts::PI },
            grid: GridSection { n_cells: 512, points_per_cell: 16 },
            potential: PotentialSection { cosine: vec![(1, 0.15)] },
            external: ExternalSection {
                kind: ExternalKind::Gaussian,
                terms: vec![[0.1, 0.4, 0.5]],
            },
            bands: BandsSection { cutoff: 12, n_bands: 8, gap_floor: 0.05, band: 1 },
            packet: PacketSection { k_center: 0.2, sigma_k: 0.05 },
            propagation: PropagationSection { dt_factor: 0.1, boundary_margin: 0.1, effective_dt: 0.01 },
            flow: FlowSection { dt: 1e-3 },
            sweep: SweepSection {
                epsilon_ladder: vec![0.2, 0.1, 0.05, 0.025],
                t_list: vec![0.5, 1.0],
                metrics: Metric::ALL.to_vec(),
                plots: false,
                output_dir: None,
            },
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let ladder = &self.sweep.epsilon_ladder;
        if ladder.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return bad("epsilon_ladder entries must lie in (0, 1]".into());
        }
        if ladder.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilon_ladder must be strictly decreasing".into());
        }
        if self.sweep.t_list.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return bad("t_list entries must be finite and non-negative".into());
        }
        if self.bands.band == 0 || self.bands.band > self.bands.n_bands {
            return bad(format!("band {} outside 1..={}", self.bands.band, self.bands.n_bands));
        }
        if !(self.flow.dt > 0.0) {
            return bad("flow.dt must be positive".into());
        }
        if !(self.propagation.effective_dt > 0.0) {
            return bad("propagation.effective_dt must be positive".into());
        }
        self.lattice()?;
        self.grid()?;
        self.periodic_potential()?;
        self.external_potential()?;
        Ok(())
    }

    pub fn lattice(&self) -> Result<crate::lattice::Lattice> {
        build_lattice(self.lattice.a).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn grid(&self) -> Result<SimulationGrid> {
        build_grid(self.lattice()?, self.grid.n_cells, self.grid.points_per_cell).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn periodic_potential(&self) -> Result<PeriodicPotential> {
        PeriodicPotential::new(self.potential.cosine.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn external_potential(&self) -> Result<ExternalPotential> {
        let terms = self
            .external
            .terms
            .iter()
            .map(|&[amplitude, center, width]| GaussianTerm { amplitude, center, width })
            .collect();
        ExternalPotential::new(self.external.kind, terms).map_err(|e| Error::Config(e.to_string()))
    }

    /// Zero-based band index.
    pub fn band_index(&self) -> usize {
        self.bands.band - 1
    }
}
