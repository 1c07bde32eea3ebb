//! Cross sections, rate constants and Maxwellian averages.
//!
//! S-matrices stay in atomic units; results leave this module in cm² and
//! cm³/s.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::channels::{Channel, ChannelBasis};
use crate::math::{exp, ln, powf, sqrt};
use crate::monomer::CaseBState;
use crate::propagator::SMatrix;
use crate::quadrature::integrate;
use crate::units::{bohr2_to_cm2, hbar2_over_2mu, velocity_cm_per_s};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObservableError {
    #[error("initial state {0} has no open channel")]
    InitialClosed(CaseBState),
    #[error("blocks disagree on the incident wavenumber ({0} vs {1} 1/bohr)")]
    InconsistentEnergy(f64, f64),
    #[error("cross-section table is empty or not strictly increasing in energy")]
    BadTable,
    #[error("cross sections must be finite and non-negative")]
    NegativeCrossSection,
    #[error("temperature must be positive, got {0} K")]
    BadTemperature(f64),
    #[error("collision energy must be positive, got {0} K")]
    BadEnergy(f64),
}

/// S-matrix of one total-projection block together with its channel labels.
#[derive(Debug, Clone)]
pub struct BlockResult {
    pub m_total: i32,
    pub reduced_mass: f64,
    pub channels: Vec<Channel>,
    pub s: SMatrix,
}

impl BlockResult {
    pub fn new(basis: &ChannelBasis, s: SMatrix) -> Self {
        Self {
            m_total: basis.m_total,
            reduced_mass: basis.reduced_mass,
            channels: basis.channels.clone(),
            s,
        }
    }
}

/// Integral cross sections out of one initial molecular state.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSections {
    pub initial: CaseBState,
    /// Kinetic energy in the incident channel, K.
    pub collision_energy: f64,
    pub wavenumber: f64,
    pub reduced_mass: f64,
    /// Final state and cross section in cm², sorted by label; includes elastic.
    pub finals: Vec<(CaseBState, f64)>,
    /// Loss obtained independently as incident flux minus elastic flux, cm².
    pub loss_from_flux: f64,
    /// `π/k² × (number of incident partial-wave channels)`, cm².
    pub unitarity_bound: f64,
    pub blocks: Vec<i32>,
}

impl CrossSections {
    pub fn to(&self, state: CaseBState) -> f64 {
        self.finals.iter().find(|(s, _)| *s == state).map_or(0.0, |(_, v)| *v)
    }

    pub fn elastic(&self) -> f64 {
        self.to(self.initial)
    }

    /// Sum over every final state that differs from the initial one.
    pub fn loss(&self) -> f64 {
        self.finals.iter().filter(|(s, _)| *s != self.initial).map(|(_, v)| v).sum()
    }

    pub fn rate(&self, state: CaseBState) -> f64 {
        rate_constant(self.to(state), self.collision_energy, self.reduced_mass)
    }

    pub fn elastic_rate(&self) -> f64 {
        rate_constant(self.elastic(), self.collision_energy, self.reduced_mass)
    }

    pub fn loss_rate(&self) -> f64 {
        rate_constant(self.loss(), self.collision_energy, self.reduced_mass)
    }

    /// Relative mismatch of the two loss totals, against the elastic scale.
    pub fn additivity_defect(&self) -> f64 {
        let scale = self.elastic().max(self.loss()).max(f64::MIN_POSITIVE);
        (self.loss() - self.loss_from_flux).abs() / scale
    }
}

/// State-to-state cross sections summed over the supplied blocks.
///
/// `σ(i→f) = π/k² Σ |<f L' M_L'| S - I |i L M_L>|²` over all partial waves
/// and projections of open channels.
pub fn cross_sections(results: &[BlockResult], initial: CaseBState) -> Result<CrossSections, ObservableError> {
    let mut k_init: Option<f64> = None;
    let mut finals: Vec<(CaseBState, f64)> = Vec::new();
    let mut flux_loss = 0.0;
    let mut incident_count = 0usize;
    let mut blocks = Vec::new();
    let mut mu = 0.0;

    for block in results {
        let s = &block.s;
        let incident: Vec<usize> = (0..s.n_open())
            .filter(|&a| block.channels[s.open[a]].state == initial)
            .collect();
        if incident.is_empty() {
            continue;
        }
        let k = s.k[incident[0]];
        match k_init {
            None => k_init = Some(k),
            Some(k0) if (k - k0).abs() > 1e-9 * k0 => return Err(ObservableError::InconsistentEnergy(k0, k)),
            _ => {}
        }
        mu = block.reduced_mass;
        blocks.push(block.m_total);
        for &col in &incident {
            incident_count += 1;
            let mut elastic_flux = 0.0;
            for row in 0..s.n_open() {
                let mut t = s.s[(row, col)];
                if row == col {
                    t -= Complex64::new(1.0, 0.0);
                }
                let state = block.channels[s.open[row]].state;
                match finals.iter_mut().find(|(f, _)| *f == state) {
                    Some(entry) => entry.1 += t.norm_sqr(),
                    None => finals.push((state, t.norm_sqr())),
                }
                if state == initial {
                    elastic_flux += s.s[(row, col)].norm_sqr();
                }
            }
            flux_loss += 1.0 - elastic_flux;
        }
    }

    let k = k_init.ok_or(ObservableError::InitialClosed(initial))?;
    let prefactor = bohr2_to_cm2(core::f64::consts::PI / (k * k));
    for entry in &mut finals {
        entry.1 *= prefactor;
    }
    finals.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(CrossSections {
        initial,
        collision_energy: hbar2_over_2mu(mu) * k * k,
        wavenumber: k,
        reduced_mass: mu,
        finals,
        loss_from_flux: flux_loss * prefactor,
        unitarity_bound: incident_count as f64 * prefactor,
        blocks,
    })
}

/// `K = v σ`, cm³/s, for a cross section in cm² at collision energy `E` (K).
pub fn rate_constant(sigma_cm2: f64, energy_k: f64, reduced_mass: f64) -> f64 {
    velocity_cm_per_s(energy_k, reduced_mass) * sigma_cm2
}

/// Elastic-to-loss ratio and the two trapping criteria.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trappability {
    pub ratio: f64,
}

impl Trappability {
    pub fn new(elastic_rate: f64, loss_rate: f64) -> Self {
        Self { ratio: elastic_rate / loss_rate }
    }

    /// Buffer-gas cooling needs `K_el > 10 K_loss`.
    pub fn buffer_gas_cooling(&self) -> bool {
        self.ratio > 10.0
    }

    /// Evaporative cooling needs `K_el > 100 K_loss`.
    pub fn evaporative_cooling(&self) -> bool {
        self.ratio > 100.0
    }
}

/// Logarithmic grid from `start` to `stop` inclusive.
pub fn log_grid(start: f64, stop: f64, per_decade: usize) -> Vec<f64> {
    assert!(start > 0.0 && stop >= start && per_decade > 0);
    let decades = libm::log10(stop / start);
    let n = libm::round(decades * per_decade as f64) as usize;
    if n == 0 {
        return alloc::vec![start];
    }
    (0..=n).map(|i| start * powf(stop / start, i as f64 / n as f64)).collect()
}

/// Tabulated `σ(E)` in cm² on a strictly increasing energy grid (K).
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaTable {
    energies: Vec<f64>,
    sigma: Vec<f64>,
}

impl SigmaTable {
    pub fn new(energies: Vec<f64>, sigma: Vec<f64>) -> Result<Self, ObservableError> {
        if energies.is_empty()
            || energies.len() != sigma.len()
            || energies[0] <= 0.0
            || energies.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(ObservableError::BadTable);
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(ObservableError::NegativeCrossSection);
        }
        Ok(Self { energies, sigma })
    }

    pub fn e_max(&self) -> f64 {
        *self.energies.last().unwrap()
    }

    /// Log-log interpolation inside the table (linear where a value is zero);
    /// power-law continuation of the first interval below it and the last
    /// value above it.
    pub fn eval(&self, e: f64) -> f64 {
        let (es, ss) = (&self.energies, &self.sigma);
        let n = es.len();
        if n == 1 || e >= es[n - 1] {
            return ss[n - 1];
        }
        let i = if e <= es[0] { 0 } else { es.partition_point(|&x| x <= e) - 1 };
        let (e0, e1, s0, s1) = (es[i], es[i + 1], ss[i], ss[i + 1]);
        if s0 > 0.0 && s1 > 0.0 {
            let p = ln(s1 / s0) / ln(e1 / e0);
            s0 * powf(e / e0, p)
        } else if e < e0 {
            s0
        } else {
            s0 + (s1 - s0) * (e - e0) / (e1 - e0)
        }
    }
}

/// Treatment of energies above the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extrapolation {
    /// Hold `σ(E_max)` fixed.
    #[default]
    ConstantCrossSection,
    /// Drop the integrand above `E_max`.
    Truncate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalRate {
    pub temperature: f64,
    /// cm³/s.
    pub rate: f64,
    /// Share of the Maxwellian integrand above `E_max`.
    pub tail_fraction: f64,
    /// More than half of the integrand lies in the extrapolated region.
    pub extrapolation_warning: bool,
    pub converged: bool,
}

/// `K̄(T) = (8 k_B T / π μ)^{1/2} (k_B T)^{-2} ∫ E σ(E) e^{-E/k_B T} dE`.
pub fn thermal_average(
    table: &SigmaTable,
    temperature: f64,
    reduced_mass: f64,
    extrapolation: Extrapolation,
) -> Result<ThermalRate, ObservableError> {
    if !(temperature > 0.0) {
        return Err(ObservableError::BadTemperature(temperature));
    }
    let t = temperature;
    let sigma_scale = table.sigma.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let abs_tol = 1e-14 * sigma_scale;
    let f = |x: f64| x * table.eval(x * t) * exp(-x);
    // beyond this the Boltzmann factor underflows any contribution
    const X_CUT: f64 = 700.0;

    let mut breaks = Vec::with_capacity(table.energies.len() + 1);
    breaks.push(0.0);
    breaks.extend(table.energies.iter().map(|e| e / t).take_while(|&x| x < X_CUT));
    let x_max = table.e_max() / t;
    let mut inside = 0.0;
    let mut converged = true;
    for w in breaks.windows(2) {
        let r = integrate(f, w[0], w[1], abs_tol, 1e-12);
        inside += r.value;
        converged &= r.converged;
    }
    let tail = match extrapolation {
        Extrapolation::ConstantCrossSection if x_max < X_CUT => table.e_max_sigma() * (x_max + 1.0) * exp(-x_max),
        _ => 0.0,
    };
    let total = inside + tail;
    let mean_speed = 2.0 / sqrt(core::f64::consts::PI) * velocity_cm_per_s(t, reduced_mass);
    // the mass of the Maxwellian itself beyond E_max, independent of σ
    let tail_fraction = if x_max < X_CUT { (x_max + 1.0) * exp(-x_max) } else { 0.0 };
    if tail_fraction > 0.5 {
        log::debug!("thermal average at T = {t} K: {:.0}% of the distribution lies above E_max", 100.0 * tail_fraction);
    }
    Ok(ThermalRate {
        temperature: t,
        rate: mean_speed * total,
        tail_fraction,
        extrapolation_warning: tail_fraction > 0.5,
        converged,
    })
}

impl SigmaTable {
    fn e_max_sigma(&self) -> f64 {
        *self.sigma.last().unwrap()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn values(&self) -> &[f64] {
        &self.sigma
    }
}

/// Final-state column of a rate table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FinalState {
    State(CaseBState),
    /// Everything that changes the internal state.
    Loss,
}

impl core::fmt::Display for FinalState {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FinalState::State(s) => s.fmt(f),
            FinalState::Loss => f.write_str("loss"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEntry {
    pub energy: f64,
    pub field: f64,
    pub initial: CaseBState,
    pub final_state: FinalState,
    /// cm².
    pub sigma: f64,
    /// `v σ` with the incident-channel velocity, cm³/s.
    pub rate: f64,
}

/// Cross sections and rates over an (E, B) grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateTable {
    pub energies: Vec<f64>,
    pub fields: Vec<f64>,
    /// Total projections summed into every entry.
    pub blocks: Vec<i32>,
    pub l_max: u32,
    pub n_max: u32,
    pub entries: Vec<RateEntry>,
}

impl RateTable {
    pub fn new(energies: Vec<f64>, fields: Vec<f64>, blocks: Vec<i32>, l_max: u32, n_max: u32) -> Self {
        Self { energies, fields, blocks, l_max, n_max, entries: Vec::new() }
    }

    /// Appends one row per final state and a loss row, labelled with the
    /// grid point `(energy, field)`.
    pub fn push(&mut self, energy: f64, field: f64, x: &CrossSections) -> Result<(), ObservableError> {
        if x.finals.iter().any(|(_, s)| !(*s >= 0.0 && s.is_finite())) {
            return Err(ObservableError::NegativeCrossSection);
        }
        let v = velocity_cm_per_s(x.collision_energy, x.reduced_mass);
        let row = |final_state, sigma| RateEntry {
            energy,
            field,
            initial: x.initial,
            final_state,
            sigma,
            rate: v * sigma,
        };
        for &(state, sigma) in &x.finals {
            self.entries.push(row(FinalState::State(state), sigma));
        }
        self.entries.push(row(FinalState::Loss, x.loss()));
        Ok(())
    }

    pub fn get(&self, energy: f64, field: f64, final_state: FinalState) -> Option<&RateEntry> {
        self.entries
            .iter()
            .find(|e| e.energy == energy && e.field == field && e.final_state == final_state)
    }
}
