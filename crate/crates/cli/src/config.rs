//! Run configuration, read from TOML.
//!
//! Units: kelvin for energies and temperatures, gauss for fields, bohr for
//! lengths and amu for masses.

use std::path::{Path, PathBuf};

use coldscat_core::channels::{BasisSpec, Parity};
use coldscat_core::dwba::{Cutoff, DwbaSettings};
use coldscat_core::monomer::{CaseBState, MonomerParams};
use coldscat_core::observables::log_grid;
use coldscat_core::potential::{PotentialModel, PotentialTerm, RadialForm};
use coldscat_core::propagator::StepPolicy;
use coldscat_core::units::{reduced_mass, HELIUM3_AMU, OXYGEN17_DIMER_AMU};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub monomer: MonomerConfig,
    pub potential: PotentialConfig,
    pub collision: CollisionConfig,
    pub numerics: NumericsConfig,
    pub fit: FitConfig,
    pub output: OutputConfig,
}

/// Molecular constants, K (Bohr magneton in K/G).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct MonomerConfig {
    pub rotational_constant: f64,
    pub spin_spin: f64,
    pub spin_rotation: f64,
    pub g_factor: f64,
    pub bohr_magneton: f64,
}

impl Default for MonomerConfig {
    fn default() -> Self {
        let p = MonomerParams::default();
        Self {
            rotational_constant: p.rotational_constant,
            spin_spin: p.spin_spin,
            spin_rotation: p.spin_rotation,
            g_factor: p.g_factor,
            bohr_magneton: p.bohr_magneton,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    /// Built-in He–O₂-like surface.
    #[default]
    HeO2,
    Custom { terms: Vec<TermConfig> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TermConfig {
    pub lambda: u32,
    #[serde(flatten)]
    pub radial: RadialConfig,
}

/// Radial forms in K and bohr.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum RadialConfig {
    LennardJones { c12: f64, c6: f64 },
    Morse { depth: f64, a: f64, r_e: f64 },
    DispersionWall { c6: f64, a: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct StateConfig {
    pub n: i32,
    pub j: i32,
    pub m_j: i32,
}

impl From<StateConfig> for CaseBState {
    fn from(s: StateConfig) -> Self {
        CaseBState::new(s.n, s.j, s.m_j)
    }
}

/// An explicit list or a generated grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Log { from: f64, to: f64, per_decade: usize },
    Linear { from: f64, to: f64, step: f64 },
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match *self {
            Grid::Values(ref v) => v.clone(),
            Grid::Log { from, to, per_decade } => log_grid(from, to, per_decade),
            Grid::Linear { from, to, step } => {
                let n = ((to - from) / step + 1e-9).floor() as usize;
                (0..=n).map(|i| from + i as f64 * step).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionConfig {
    /// Masses of the two partners, amu. Ignored when `reduced_mass` is set.
    pub masses: [f64; 2],
    pub reduced_mass: Option<f64>,
    pub incident: StateConfig,
    /// Collision energies in the incident channel, K.
    pub energies: Grid,
    /// Magnetic fields, G.
    pub fields: Grid,
    /// Temperatures for thermal averages, K.
    pub temperatures: Grid,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        Self {
            masses: [HELIUM3_AMU, OXYGEN17_DIMER_AMU],
            reduced_mass: None,
            incident: StateConfig { n: 0, j: 1, m_j: 1 },
            energies: Grid::Log { from: 1e-6, to: 10.0, per_decade: 25 },
            fields: Grid::Values(vec![0.0]),
            temperatures: Grid::Log { from: 1e-3, to: 1.0, per_decade: 5 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum ParityConfig {
    #[default]
    Even,
    Odd,
    Both,
}

/// Which total projections `M = M_J + M_L` are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum BlockPolicy {
    /// Only `M = M_J` of the incident state (incidence along the field).
    #[default]
    Incident,
    /// Every `M` the incident state reaches with `L <= L_max`.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffConfig {
    #[default]
    GridStart,
    TurningPoint,
}

/// Overrides of the propagator step policy; unset fields keep defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub r_min: Option<f64>,
    pub r_mid: Option<f64>,
    pub r_max: Option<f64>,
    pub h_inner: Option<f64>,
    pub max_phase: Option<f64>,
    pub growth: Option<f64>,
    pub h_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub l_max: u32,
    /// Even rotational cutoff, shared by the monomer and the channel basis.
    pub n_max: u32,
    pub parity: ParityConfig,
    pub blocks: BlockPolicy,
    pub grid: GridConfig,
    pub dwba_cutoff: CutoffConfig,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            l_max: 6,
            n_max: 6,
            parity: ParityConfig::Even,
            blocks: BlockPolicy::Incident,
            grid: GridConfig::default(),
            dwba_cutoff: CutoffConfig::GridStart,
        }
    }
}

/// Threshold-law fit of the loss rates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Barrier height, K; defaults to the d-wave barrier of the isotropic term.
    pub e0: Option<f64>,
    /// Exit partial wave.
    pub l_f: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
    /// Also write a gnuplot script next to the tables.
    pub plot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json], plot: false }
    }
}

/// Everything that changes an S-matrix; hashed into cache keys.
#[derive(Serialize)]
struct PhysicsKey<'a> {
    monomer: &'a MonomerConfig,
    potential: &'a PotentialConfig,
    reduced_mass: u64,
    l_max: u32,
    n_max: u32,
    parity: ParityConfig,
    grid: &'a GridConfig,
    dwba_cutoff: CutoffConfig,
    // the DWBA S-matrix is built around the incident channels
    incident: StateConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::from_toml(&text)
    }

    pub fn schema() -> String {
        serde_json::to_string_pretty(&schemars::schema_for!(RunConfig)).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.monomer_params().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.potential_model()?;
        let incident = self.incident();
        if !incident.is_valid() || incident.n as u32 > self.numerics.n_max {
            return invalid(format!("incident state {incident} is not in the basis"));
        }
        let mu = self.reduced_mass();
        if !(mu > 0.0 && mu.is_finite()) {
            return invalid("reduced mass must be positive");
        }
        for (name, grid, allow_zero) in [
            ("energies", &self.collision.energies, false),
            ("fields", &self.collision.fields, true),
            ("temperatures", &self.collision.temperatures, false),
        ] {
            match *grid {
                Grid::Log { from, to, per_decade } if !(from > 0.0 && to >= from && per_decade > 0) => {
                    return invalid(format!("{name}: log grid needs 0 < from <= to and per_decade > 0"));
                }
                Grid::Linear { from, to, step } if !(step > 0.0 && to >= from) => {
                    return invalid(format!("{name}: linear grid needs step > 0 and to >= from"));
                }
                _ => {}
            }
            let points = grid.points();
            if points.is_empty() {
                return invalid(format!("{name}: empty grid"));
            }
            if points.iter().any(|&x| !x.is_finite() || x < 0.0 || (!allow_zero && x == 0.0)) {
                return invalid(format!("{name}: values must be finite and {}", if allow_zero { "non-negative" } else { "positive" }));
            }
        }
        if let Some(e0) = self.fit.e0 {
            if !(e0 > 0.0) {
                return invalid("fit.e0 must be positive");
            }
        }
        Ok(())
    }

    pub fn monomer_params(&self) -> MonomerParams {
        let m = &self.monomer;
        MonomerParams {
            rotational_constant: m.rotational_constant,
            spin_spin: m.spin_spin,
            spin_rotation: m.spin_rotation,
            g_factor: m.g_factor,
            bohr_magneton: m.bohr_magneton,
            n_max: self.numerics.n_max,
        }
    }

    pub fn potential_model(&self) -> Result<PotentialModel, ConfigError> {
        match &self.potential {
            PotentialConfig::HeO2 => Ok(PotentialModel::he_o2_model()),
            PotentialConfig::Custom { terms } => {
                let terms = terms
                    .iter()
                    .map(|t| PotentialTerm {
                        lambda: t.lambda,
                        radial: match t.radial {
                            RadialConfig::LennardJones { c12, c6 } => RadialForm::LennardJones { c12, c6 },
                            RadialConfig::Morse { depth, a, r_e } => RadialForm::Morse { depth, a, r_e },
                            RadialConfig::DispersionWall { c6, a, b } => RadialForm::DispersionWall { c6, a, b },
                        },
                    })
                    .collect();
                PotentialModel::new(terms).map_err(|e| ConfigError::Invalid(e.to_string()))
            }
        }
    }

    pub fn reduced_mass(&self) -> f64 {
        let c = &self.collision;
        c.reduced_mass.unwrap_or_else(|| reduced_mass(c.masses[0], c.masses[1]))
    }

    pub fn incident(&self) -> CaseBState {
        self.collision.incident.into()
    }

    pub fn basis_spec(&self, m_total: i32) -> BasisSpec {
        BasisSpec {
            l_max: self.numerics.l_max,
            n_max: self.numerics.n_max,
            m_total,
            parity: match self.numerics.parity {
                ParityConfig::Even => Parity::Even,
                ParityConfig::Odd => Parity::Odd,
                ParityConfig::Both => Parity::Both,
            },
        }
    }

    pub fn step_policy(&self) -> StepPolicy {
        let g = &self.numerics.grid;
        let d = StepPolicy::default();
        StepPolicy {
            r_min: g.r_min.or(d.r_min),
            r_mid: g.r_mid.unwrap_or(d.r_mid),
            r_max: g.r_max.unwrap_or(d.r_max),
            h_inner: g.h_inner.unwrap_or(d.h_inner),
            max_phase: g.max_phase.unwrap_or(d.max_phase),
            growth: g.growth.unwrap_or(d.growth),
            h_max: g.h_max.unwrap_or(d.h_max),
            ..d
        }
    }

    pub fn dwba_settings(&self) -> DwbaSettings {
        DwbaSettings {
            cutoff: match self.numerics.dwba_cutoff {
                CutoffConfig::GridStart => Cutoff::GridStart,
                CutoffConfig::TurningPoint => Cutoff::TurningPoint,
            },
            ..DwbaSettings::from_policy(&self.step_policy())
        }
    }

    /// Total projections to sum over.
    pub fn blocks(&self, all_m: bool) -> Vec<i32> {
        let m_j = self.collision.incident.m_j;
        if all_m || self.numerics.blocks == BlockPolicy::All {
            let l = self.numerics.l_max as i32;
            (m_j - l..=m_j + l).collect()
        } else {
            vec![m_j]
        }
    }

    /// SHA-256 of everything except the output section, so that the same
    /// run written to two places carries the same hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }

    /// SHA-256 of the inputs that determine S-matrices.
    pub fn physics_hash(&self) -> [u8; 32] {
        let key = PhysicsKey {
            monomer: &self.monomer,
            potential: &self.potential,
            reduced_mass: self.reduced_mass().to_bits(),
            l_max: self.numerics.l_max,
            n_max: self.numerics.n_max,
            parity: self.numerics.parity,
            grid: &self.numerics.grid,
            dwba_cutoff: self.numerics.dwba_cutoff,
            incident: self.collision.incident,
        };
        Sha256::digest(serde_json::to_vec(&key).expect("key serializes")).into()
    }
}
