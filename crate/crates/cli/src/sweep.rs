//! Sweep driver: (E, B, M) work units, S-matrix cache and table assembly.

use std::collections::BTreeMap;
use std::path::PathBuf;

use coldscat_core::angmom::WignerCache;
use coldscat_core::dwba::{block_pair, pair_kmatrix, DwbaSettings};
use coldscat_core::monomer::{zeeman_levels, CaseBState, MonomerParams};
use coldscat_core::observables::{
    cross_sections, thermal_average, BlockResult, CrossSections, Extrapolation, FinalState, RateTable, SigmaTable,
};
use coldscat_core::potential::PotentialModel;
use coldscat_core::propagator::{open_channels, solve, Block, SMatrix, StepPolicy};
use coldscat_core::threshold::{critical_field, fit_exponent, fit_k0, model_barrier, RateSample, ThresholdFit};
use coldscat_core::units::{hbar2_over_2mu, wavenumber};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{Cache, Method};
use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// Monomer levels over the field grid.
    Zeeman,
    /// Rates over the field grid at each energy.
    Field,
    /// Rates over the energy grid at each field.
    Energy,
    /// Maxwellian averages over the temperature grid at each field.
    Thermal,
    /// Threshold-law fit of the loss channels.
    Fit,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Zeeman => "zeeman",
            SweepKind::Field => "field",
            SweepKind::Energy => "energy",
            SweepKind::Thermal => "thermal",
            SweepKind::Fit => "fit",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub all_m: bool,
    pub dwba: bool,
    /// Worker threads; `None` uses one per core.
    pub workers: Option<usize>,
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// A failed or suspicious point; the sweep carries on past it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub severity: Severity,
    pub energy_k: Option<f64>,
    pub temperature_k: Option<f64>,
    pub field_gauss: Option<f64>,
    pub m_total: Option<i32>,
    pub message: String,
}

impl Record {
    fn at(severity: Severity, energy: f64, field: f64, m_total: Option<i32>, message: String) -> Self {
        Self { severity, energy_k: Some(energy), temperature_k: None, field_gauss: Some(field), m_total, message }
    }
}

/// Cross sections at one (E, B) point, or why there are none.
#[derive(Debug, Clone)]
pub struct Point {
    pub energy: f64,
    pub field: f64,
    pub result: Result<CrossSections, ()>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalEntry {
    pub temperature: f64,
    pub field: f64,
    pub initial: CaseBState,
    pub final_state: FinalState,
    pub rate: f64,
    pub tail_fraction: f64,
}

/// One fitted exit channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FitEntry {
    pub energy: f64,
    pub final_state: CaseBState,
    pub delta_mj: i32,
    pub e0: f64,
    pub l_f: u32,
    pub k0: f64,
    pub log_residual: f64,
    pub used: usize,
    /// Free-exponent fit over the in-window field scan, if it had two or more fields.
    pub exponent: Option<f64>,
    pub linear_critical_field: f64,
    pub critical_field: Option<f64>,
    /// Computed points in the validity window lying above the fitted curve.
    pub above_curve: usize,
    pub in_window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelEntry {
    pub field: f64,
    pub label: CaseBState,
    pub energy: f64,
    pub weak_field_seeker: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Rates(RateTable),
    Thermal(Vec<ThermalEntry>),
    Fit(Vec<FitEntry>),
    Levels(Vec<LevelEntry>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub blocks: Vec<i32>,
    pub output: Output,
    pub records: Vec<Record>,
}

/// Immutable state shared by all workers.
pub struct Engine {
    pub config: RunConfig,
    params: MonomerParams,
    model: PotentialModel,
    mu: f64,
    policy: StepPolicy,
    dwba: Option<DwbaSettings>,
    physics: [u8; 32],
    cache: Option<Cache>,
    blocks: Vec<i32>,
}

impl Engine {
    pub fn new(config: RunConfig, options: &Options) -> anyhow::Result<Self> {
        config.validate()?;
        let cache = match &options.cache {
            Some(dir) => Some(Cache::open(dir)?),
            None => None,
        };
        Ok(Self {
            params: config.monomer_params(),
            model: config.potential_model()?,
            mu: config.reduced_mass(),
            policy: config.step_policy(),
            dwba: options.dwba.then(|| config.dwba_settings()),
            physics: config.physics_hash(),
            blocks: config.blocks(options.all_m),
            cache,
            config,
        })
    }

    pub fn blocks(&self) -> &[i32] {
        &self.blocks
    }

    /// The block at `(B, M)`, or `None` when the incident state has no
    /// channel in it.
    pub fn block(&self, field: f64, m_total: i32) -> Result<Option<Block>, String> {
        let mut cache = WignerCache::new();
        let block = Block::new(&self.params, self.config.basis_spec(m_total), field, self.mu, &self.model, &mut cache)
            .map_err(|e| e.to_string())?;
        let incident = self.config.incident();
        Ok(block.basis.channels.iter().any(|c| c.state == incident).then_some(block))
    }

    fn method(&self) -> Method {
        if self.dwba.is_some() {
            Method::Dwba
        } else {
            Method::CloseCoupling
        }
    }

    /// S-matrix of one block at collision energy `energy`, through the cache.
    pub fn block_result(&self, block: &Block, energy: f64) -> Result<BlockResult, String> {
        let basis = &block.basis;
        let key = Cache::key(&self.physics, energy, basis.field_gauss, basis.m_total, self.method());
        if let Some(cache) = &self.cache {
            match cache.get(&key) {
                Ok(Some(s)) if s.open.iter().all(|&i| i < basis.len()) => return Ok(BlockResult::new(basis, s)),
                Ok(_) => {}
                Err(e) => log::warn!("ignoring cache entry {key}: {e}"),
            }
        }
        let incident = self.config.incident();
        let threshold = basis
            .channels
            .iter()
            .find(|c| c.state == incident)
            .map(|c| c.threshold)
            .ok_or_else(|| format!("{incident} has no channel in block M = {}", basis.m_total))?;
        let e_total = threshold + energy;
        let s = match &self.dwba {
            None => solve(block, e_total, &self.policy).map_err(|e| e.to_string())?,
            Some(settings) => dwba_smatrix(block, incident, e_total, settings)?,
        };
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.put(&key, &s) {
                log::warn!("could not write cache entry {key}: {e}");
            }
        }
        Ok(BlockResult::new(basis, s))
    }

    /// Cross sections on the `energies × fields` grid, summed over blocks.
    ///
    /// Work units are (E, B, M) propagations; blocks are built once per
    /// (B, M). Output order follows `fields` then `energies`.
    pub fn points(&self, energies: &[f64], fields: &[f64], records: &mut Vec<Record>) -> Vec<Point> {
        let pairs: Vec<(f64, i32)> = fields.iter().flat_map(|&b| self.blocks.iter().map(move |&m| (b, m))).collect();
        let built: Vec<Result<Option<Block>, String>> = pairs.par_iter().map(|&(b, m)| self.block(b, m)).collect();
        let mut by_field: BTreeMap<usize, Vec<(i32, &Block)>> = BTreeMap::new();
        for (idx, ((b, m), block)) in pairs.iter().zip(&built).enumerate() {
            let fi = idx / self.blocks.len();
            match block {
                Ok(Some(block)) => by_field.entry(fi).or_default().push((*m, block)),
                Ok(None) => {}
                Err(e) => records.push(Record {
                    severity: Severity::Error,
                    energy_k: None,
                    temperature_k: None,
                    field_gauss: Some(*b),
                    m_total: Some(*m),
                    message: e.clone(),
                }),
            }
        }
        let units: Vec<(usize, usize, i32, &Block)> = (0..fields.len())
            .flat_map(|fi| {
                let blocks = by_field.get(&fi).cloned().unwrap_or_default();
                (0..energies.len()).flat_map(move |ei| blocks.clone().into_iter().map(move |(m, b)| (fi, ei, m, b)))
            })
            .collect();
        let solved: Vec<Result<BlockResult, String>> =
            units.par_iter().map(|&(_, ei, _, block)| self.block_result(block, energies[ei])).collect();

        let incident = self.config.incident();
        let mut grouped: BTreeMap<(usize, usize), Vec<BlockResult>> = BTreeMap::new();
        let mut failed: BTreeMap<(usize, usize), ()> = BTreeMap::new();
        for (&(fi, ei, m, _), r) in units.iter().zip(solved) {
            match r {
                Ok(r) => grouped.entry((fi, ei)).or_default().push(r),
                Err(e) => {
                    records.push(Record::at(Severity::Error, energies[ei], fields[fi], Some(m), e));
                    failed.insert((fi, ei), ());
                }
            }
        }
        let mut out = Vec::with_capacity(fields.len() * energies.len());
        for (fi, &field) in fields.iter().enumerate() {
            for (ei, &energy) in energies.iter().enumerate() {
                let result = if failed.contains_key(&(fi, ei)) || by_field.get(&fi).is_none() {
                    Err(())
                } else {
                    let blocks = grouped.remove(&(fi, ei)).unwrap_or_default();
                    self.check(&blocks, energy, field, records);
                    cross_sections(&blocks, incident).map_err(|e| {
                        records.push(Record::at(Severity::Error, energy, field, None, e.to_string()));
                    })
                };
                out.push(Point { energy, field, result });
            }
        }
        out
    }

    /// Unitarity and loss-additivity checks on every production point.
    fn check(&self, blocks: &[BlockResult], energy: f64, field: f64, records: &mut Vec<Record>) {
        if self.dwba.is_none() {
            for b in blocks {
                let defect = b.s.unitarity_defect();
                if defect > 1e-6 {
                    let msg = format!("S-matrix unitarity defect {defect:.2e}");
                    records.push(Record::at(Severity::Warning, energy, field, Some(b.m_total), msg));
                }
            }
        }
        if let Ok(x) = cross_sections(blocks, self.config.incident()) {
            if x.loss() > x.unitarity_bound * (1.0 + 1e-8) {
                let msg = format!("loss {:.3e} cm² exceeds the unitarity bound {:.3e} cm²", x.loss(), x.unitarity_bound);
                records.push(Record::at(Severity::Warning, energy, field, None, msg));
            }
            if self.dwba.is_none() && x.additivity_defect() > 1e-6 {
                let msg = format!("loss additivity defect {:.2e}", x.additivity_defect());
                records.push(Record::at(Severity::Warning, energy, field, None, msg));
            }
        }
    }

    pub fn rate_table(&self, energies: &[f64], fields: &[f64], records: &mut Vec<Record>) -> RateTable {
        let mut table = RateTable::new(
            energies.to_vec(),
            fields.to_vec(),
            self.blocks.clone(),
            self.config.numerics.l_max,
            self.config.numerics.n_max,
        );
        for p in self.points(energies, fields, records) {
            if let Ok(x) = &p.result {
                if let Err(e) = table.push(p.energy, p.field, x) {
                    records.push(Record::at(Severity::Error, p.energy, p.field, None, e.to_string()));
                }
            }
        }
        table
    }

    pub fn thermal(&self, energies: &[f64], fields: &[f64], temperatures: &[f64], records: &mut Vec<Record>) -> Vec<ThermalEntry> {
        let points = self.points(energies, fields, records);
        let incident = self.config.incident();
        let mut out = Vec::new();
        for (fi, &field) in fields.iter().enumerate() {
            let row = &points[fi * energies.len()..(fi + 1) * energies.len()];
            let ok: Vec<&CrossSections> = row.iter().filter_map(|p| p.result.as_ref().ok()).collect();
            if ok.is_empty() {
                continue;
            }
            let es: Vec<f64> = row.iter().filter(|p| p.result.is_ok()).map(|p| p.energy).collect();
            let mut finals: Vec<FinalState> =
                ok.iter().flat_map(|x| x.finals.iter().map(|(s, _)| FinalState::State(*s))).collect();
            finals.push(FinalState::Loss);
            finals.sort();
            finals.dedup();
            let tables: Vec<(FinalState, SigmaTable)> = finals
                .iter()
                .filter_map(|&f| {
                    let sigma = ok
                        .iter()
                        .map(|x| match f {
                            FinalState::State(s) => x.to(s),
                            FinalState::Loss => x.loss(),
                        })
                        .collect();
                    SigmaTable::new(es.clone(), sigma).ok().map(|t| (f, t))
                })
                .collect();
            let results: Vec<Vec<Result<ThermalEntry, Record>>> = temperatures
                .par_iter()
                .map(|&t| {
                    tables
                        .iter()
                        .map(|(f, table)| {
                            let fail = |message: String| Record {
                                severity: Severity::Error,
                                energy_k: None,
                                temperature_k: Some(t),
                                field_gauss: Some(field),
                                m_total: None,
                                message,
                            };
                            let r = thermal_average(table, t, self.mu, Extrapolation::ConstantCrossSection)
                                .map_err(|e| fail(e.to_string()))?;
                            if !r.converged {
                                return Err(fail("thermal quadrature did not converge".into()));
                            }
                            Ok(ThermalEntry {
                                temperature: t,
                                field,
                                initial: incident,
                                final_state: *f,
                                rate: r.rate,
                                tail_fraction: r.tail_fraction,
                            })
                        })
                        .collect()
                })
                .collect();
            for (&t, row) in temperatures.iter().zip(results) {
                let mut warned = false;
                for r in row {
                    match r {
                        Ok(e) => {
                            if e.tail_fraction > 0.5 && !warned {
                                warned = true;
                                records.push(Record {
                                    severity: Severity::Warning,
                                    energy_k: None,
                                    temperature_k: Some(t),
                                    field_gauss: Some(field),
                                    m_total: None,
                                    message: format!(
                                        "{:.0}% of the Maxwellian lies above E_max = {} K",
                                        100.0 * e.tail_fraction,
                                        es.last().unwrap()
                                    ),
                                });
                            }
                            out.push(e);
                        }
                        Err(rec) => records.push(rec),
                    }
                }
            }
        }
        out
    }

    /// Barrier height used by the fits: configured, or the d-wave barrier of
    /// the isotropic term.
    pub fn fit_e0(&self) -> Option<f64> {
        let l_f = self.config.fit.l_f.unwrap_or(2);
        self.config.fit.e0.or_else(|| model_barrier(&self.model, l_f, hbar2_over_2mu(self.mu)))
    }

    /// Fits K0 per energy-releasing final state from the zero-field rates,
    /// then compares the curve with the whole field scan.
    pub fn fit(&self, energies: &[f64], fields: &[f64], records: &mut Vec<Record>) -> Vec<FitEntry> {
        let table = self.rate_table(energies, fields, records);
        let incident = self.config.incident();
        let Some(e0) = self.fit_e0() else {
            records.push(Record {
                severity: Severity::Error,
                energy_k: None,
                temperature_k: None,
                field_gauss: None,
                m_total: None,
                message: "no exit-channel barrier; set fit.e0".into(),
            });
            return Vec::new();
        };
        let l_f = self.config.fit.l_f.unwrap_or(2);
        let mut finals: Vec<CaseBState> = table
            .entries
            .iter()
            .filter_map(|e| match e.final_state {
                FinalState::State(s) if s.m_j < incident.m_j && s.n == incident.n && s.j == incident.j => Some(s),
                _ => None,
            })
            .collect();
        finals.sort();
        finals.dedup();
        let min_field = fields.iter().copied().fold(f64::INFINITY, f64::min);
        let mut out = Vec::new();
        for &energy in energies {
            for &f in &finals {
                let delta_mj = incident.m_j - f.m_j;
                let template = ThresholdFit { l_f, ..ThresholdFit::s_to_d(1.0, e0, delta_mj, &self.params) };
                let samples: Vec<RateSample> = table
                    .entries
                    .iter()
                    .filter(|e| e.energy == energy && e.final_state == FinalState::State(f))
                    .map(|e| RateSample { energy: e.energy, field: e.field, rate: e.rate })
                    .collect();
                let zero_field: Vec<RateSample> = samples.iter().copied().filter(|s| s.field == min_field).collect();
                let fitted = match fit_k0(&zero_field, &template) {
                    Ok(fit) => fit,
                    Err(e) => {
                        records.push(Record::at(Severity::Error, energy, min_field, None, format!("fit to {f}: {e}")));
                        continue;
                    }
                };
                let curve = ThresholdFit { k0: fitted.k0, ..template };
                let in_window: Vec<&RateSample> =
                    samples.iter().filter(|s| curve.in_window(s.energy, s.field)).collect();
                let above = in_window
                    .iter()
                    .filter(|s| s.rate > curve.evaluate(s.energy, s.field).rate * (1.0 + 1e-9))
                    .count();
                let positive: Vec<RateSample> =
                    samples.iter().copied().filter(|s| s.field > 0.0 && curve.in_window(s.energy, s.field)).collect();
                let exponent = fit_exponent(&positive, &template).ok().filter(|p| p.used >= 2).map(|p| p.exponent);
                let mut cache = WignerCache::new();
                let critical = critical_field(&self.params, incident, f, e0, 1e5, &mut cache).ok().flatten();
                out.push(FitEntry {
                    energy,
                    final_state: f,
                    delta_mj,
                    e0,
                    l_f,
                    k0: fitted.k0,
                    log_residual: fitted.log_residual,
                    used: fitted.used,
                    exponent,
                    linear_critical_field: curve.linear_critical_field(),
                    critical_field: critical,
                    above_curve: above,
                    in_window: in_window.len(),
                });
            }
        }
        out
    }

    pub fn levels(&self, fields: &[f64]) -> anyhow::Result<Vec<LevelEntry>> {
        let mut cache = WignerCache::new();
        let d = zeeman_levels(&self.params, fields, &mut cache)?;
        let mut out = Vec::new();
        for (i, &field) in d.fields.iter().enumerate() {
            for c in &d.curves {
                out.push(LevelEntry { field, label: c.label, energy: c.energies[i], weak_field_seeker: c.weak_field_seeker });
            }
        }
        Ok(out)
    }
}

/// First-order S-matrix from distorted-wave pair calculations.
///
/// Each pair (incident channel, other open channel) contributes the
/// two-channel element `S_if = 2i K/(1 + K²) e^{i(δ_i + δ_f)}`, and the
/// diagonal carries the elastic phase shifts. Elements between two
/// non-incident channels are left at zero.
pub fn dwba_smatrix(block: &Block, incident: CaseBState, e_total: f64, settings: &DwbaSettings) -> Result<SMatrix, String> {
    let basis = &block.basis;
    let thresholds = basis.thresholds();
    let open = open_channels(&thresholds, e_total);
    let n = open.len();
    let k: Vec<f64> = open.iter().map(|&c| wavenumber(e_total - thresholds[c], basis.reduced_mass)).collect();
    let incident_pos: Vec<usize> = (0..n).filter(|&a| basis.channels[open[a]].state == incident).collect();
    let mut km = DMatrix::zeros(n, n);
    let mut delta: Vec<Option<f64>> = vec![None; n];
    for &a in &incident_pos {
        for b in 0..n {
            if b == a {
                continue;
            }
            let pair = block_pair(block, open[a], open[b]);
            let r = pair_kmatrix(&pair, e_total, settings).map_err(|e| e.to_string())?;
            km[(a, b)] = r.k_if;
            km[(b, a)] = r.k_if;
            delta[a] = Some(r.tan_delta[0].atan());
            delta[b] = Some(r.tan_delta[1].atan());
        }
        if delta[a].is_none() {
            let pair = block_pair(block, open[a], open[a]);
            let r = pair_kmatrix(&pair, e_total, settings).map_err(|e| e.to_string())?;
            delta[a] = Some(r.tan_delta[0].atan());
        }
    }
    let mut s = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for a in 0..n {
        let d = delta[a].unwrap_or(0.0);
        km[(a, a)] = d.tan();
        s[(a, a)] = Complex64::from_polar(1.0, 2.0 * d);
    }
    for &a in &incident_pos {
        for b in 0..n {
            if b != a {
                let kab = km[(a, b)];
                let phase = delta[a].unwrap_or(0.0) + delta[b].unwrap_or(0.0);
                let v = Complex64::new(0.0, 2.0 * kab / (1.0 + kab * kab)) * Complex64::from_polar(1.0, phase);
                s[(a, b)] = v;
                s[(b, a)] = v;
            }
        }
    }
    Ok(SMatrix { open, k, k_matrix: km, s })
}

/// Runs one sweep kind over the configured grids on a bounded worker pool.
pub fn run(config: RunConfig, kind: SweepKind, options: &Options) -> anyhow::Result<SweepResult> {
    let engine = Engine::new(config, options)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build()?;
    pool.install(|| run_with(&engine, kind))
}

fn run_with(engine: &Engine, kind: SweepKind) -> anyhow::Result<SweepResult> {
    let c = &engine.config.collision;
    let (energies, fields, temperatures) = (c.energies.points(), c.fields.points(), c.temperatures.points());
    let mut records = Vec::new();
    let output = match kind {
        SweepKind::Zeeman => Output::Levels(engine.levels(&fields)?),
        SweepKind::Field | SweepKind::Energy => {
            let mut table = engine.rate_table(&energies, &fields, &mut records);
            if kind == SweepKind::Energy {
                table.entries.sort_by(|a, b| {
                    (a.field, a.energy, a.final_state).partial_cmp(&(b.field, b.energy, b.final_state)).unwrap()
                });
            } else {
                table.entries.sort_by(|a, b| {
                    (a.energy, a.field, a.final_state).partial_cmp(&(b.energy, b.field, b.final_state)).unwrap()
                });
            }
            Output::Rates(table)
        }
        SweepKind::Thermal => Output::Thermal(engine.thermal(&energies, &fields, &temperatures, &mut records)),
        SweepKind::Fit => Output::Fit(engine.fit(&energies, &fields, &mut records)),
    };
    Ok(SweepResult { kind, blocks: engine.blocks().to_vec(), output, records })
}
