//! The isolated ³Σ molecule: rotation, spin-spin and spin-rotation fine
//! structure, and the electron-spin Zeeman term, in a Hund's case (b) basis
//! `|N S J M_J>` restricted to even `N`.
//!
//! The spin-spin term is `(2/3) λ (3 S_ζ² - S²)` with ζ the molecular axis,
//! i.e. `(2/3) λ √6 T²(S,S)·C²(α)` in spherical-tensor form; it couples
//! `N` with `N ± 2` inside a `J` block. The spin-rotation term `γ N·S` is
//! diagonal. The Zeeman term `g μ0 B S_z` couples `J` with `J ± 1` at fixed
//! `N`, so only `M_J` survives as a good quantum number.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::angmom::{reduced_spherical_harmonic, triangle, WignerCache};
use crate::linalg::sorted_symmetric_eigen;
use crate::math::sqrt;

/// Electron spin of the ³Σ ground state.
pub const SPIN: i32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MonomerError {
    #[error("no case (b) states with M_J = {m_j} for N_max = {n_max}")]
    EmptyBasis { m_j: i32, n_max: u32 },
    #[error("invalid monomer parameters: {0}")]
    InvalidParams(&'static str),
    #[error("state |N={n} J={j} M_J={m_j}> is not in the basis")]
    UnknownState { n: i32, j: i32, m_j: i32 },
    #[error("magnetic field must be non-negative, got {0} G")]
    NegativeField(f64),
}

/// Molecular constants in kelvin, Bohr magneton in K/G.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonomerParams {
    pub rotational_constant: f64,
    pub spin_spin: f64,
    pub spin_rotation: f64,
    pub g_factor: f64,
    pub bohr_magneton: f64,
    /// Even rotational cutoff.
    pub n_max: u32,
}

impl Default for MonomerParams {
    /// Literature-typical values for O₂ (X³Σg⁻).
    fn default() -> Self {
        Self {
            rotational_constant: 2.07,
            spin_spin: 2.87,
            spin_rotation: -0.012,
            g_factor: 2.0023,
            bohr_magneton: 6.717e-5,
            n_max: 6,
        }
    }
}

impl MonomerParams {
    pub fn validate(&self) -> Result<(), MonomerError> {
        if !(self.rotational_constant > 0.0) {
            return Err(MonomerError::InvalidParams("rotational constant must be positive"));
        }
        if !(self.bohr_magneton > 0.0) {
            return Err(MonomerError::InvalidParams("Bohr magneton must be positive"));
        }
        if self.n_max % 2 != 0 {
            return Err(MonomerError::InvalidParams("N_max must be even"));
        }
        if !(self.spin_spin.is_finite() && self.spin_rotation.is_finite() && self.g_factor.is_finite()) {
            return Err(MonomerError::InvalidParams("non-finite fine-structure constant"));
        }
        Ok(())
    }

    /// Linear Zeeman coefficient `g μ0` in K/G per unit of `M_J`.
    pub fn zeeman_slope(&self) -> f64 {
        self.g_factor * self.bohr_magneton
    }

    pub fn with_n_max(mut self, n_max: u32) -> Self {
        self.n_max = n_max;
        self
    }
}

/// A case (b) basis state `|N J M_J>` (S = 1 implied).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CaseBState {
    pub n: i32,
    pub j: i32,
    pub m_j: i32,
}

impl CaseBState {
    pub const fn new(n: i32, j: i32, m_j: i32) -> Self {
        Self { n, j, m_j }
    }

    pub fn is_valid(&self) -> bool {
        self.n >= 0 && self.n % 2 == 0 && triangle(self.n, SPIN, self.j) && self.m_j.abs() <= self.j
    }
}

impl core::fmt::Display for CaseBState {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "|{} {} {}>", self.n, self.j, self.m_j)
    }
}

/// Case (b) states with fixed `M_J`, ordered by `N` then `J`.
pub fn case_b_basis(n_max: u32, m_j: i32) -> Vec<CaseBState> {
    let mut out = Vec::new();
    for n in (0..=n_max as i32).step_by(2) {
        for j in (n - SPIN).abs()..=n + SPIN {
            if m_j.abs() <= j {
                out.push(CaseBState::new(n, j, m_j));
            }
        }
    }
    out
}

fn phase(n: i32) -> f64 {
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Monomer Hamiltonian for one `M_J` block, split as `H(B) = H0 + B·Z`.
#[derive(Debug, Clone)]
pub struct MonomerHamiltonian {
    pub m_j: i32,
    pub basis: Vec<CaseBState>,
    pub field_free: DMatrix<f64>,
    /// Zeeman operator per gauss.
    pub zeeman: DMatrix<f64>,
}

impl MonomerHamiltonian {
    pub fn at_field(&self, field_gauss: f64) -> DMatrix<f64> {
        &self.field_free + &self.zeeman * field_gauss
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn index_of(&self, state: CaseBState) -> Option<usize> {
        self.basis.iter().position(|s| *s == state)
    }
}

/// `<N_b S J M | (2/3) λ √6 T²(S,S)·C²(α) | N_k S J M>`.
fn spin_spin_element(lambda: f64, n_b: i32, n_k: i32, j: i32, cache: &mut WignerCache) -> f64 {
    let c2 = reduced_spherical_harmonic(n_b, 2, n_k);
    if c2 == 0.0 {
        return 0.0;
    }
    // <S||T²(S,S)||S> for S = 1
    let spin_reduced = sqrt(5.0);
    let six_j = cache.wigner_6j(j, SPIN, n_b, 2, n_k, SPIN);
    (2.0 / 3.0) * lambda * sqrt(6.0) * phase(n_k + SPIN + j) * six_j * c2 * spin_reduced
}

/// `<N S J_b M | S_z | N S J_k M>`.
fn spin_z_element(n: i32, j_b: i32, j_k: i32, m: i32, cache: &mut WignerCache) -> f64 {
    let s = SPIN;
    let three_j = cache.wigner_3j(j_b, 1, j_k, -m, 0, m);
    if three_j == 0.0 {
        return 0.0;
    }
    let reduced = phase(n + s + j_b + 1)
        * sqrt(((2 * j_b + 1) * (2 * j_k + 1)) as f64)
        * cache.wigner_6j(s, j_b, n, j_k, s, 1)
        * sqrt((s * (s + 1) * (2 * s + 1)) as f64);
    phase(j_b - m) * three_j * reduced
}

/// Builds the case (b) monomer Hamiltonian for one `M_J` block.
pub fn build_monomer_hamiltonian(
    params: &MonomerParams,
    m_j: i32,
    cache: &mut WignerCache,
) -> Result<MonomerHamiltonian, MonomerError> {
    params.validate()?;
    let basis = case_b_basis(params.n_max, m_j);
    if basis.is_empty() {
        return Err(MonomerError::EmptyBasis { m_j, n_max: params.n_max });
    }
    let n = basis.len();
    let mut field_free = DMatrix::zeros(n, n);
    let mut zeeman = DMatrix::zeros(n, n);
    for (a, sa) in basis.iter().enumerate() {
        for (b, sb) in basis.iter().enumerate().skip(a) {
            if sa.j == sb.j {
                let mut h = spin_spin_element(params.spin_spin, sa.n, sb.n, sa.j, cache);
                if sa.n == sb.n {
                    let (nn, jj) = (sa.n, sa.j);
                    h += params.rotational_constant * (nn * (nn + 1)) as f64;
                    h += 0.5
                        * params.spin_rotation
                        * (jj * (jj + 1) - nn * (nn + 1) - SPIN * (SPIN + 1)) as f64;
                }
                field_free[(a, b)] = h;
                field_free[(b, a)] = h;
            }
            if sa.n == sb.n && (sa.j - sb.j).abs() <= 1 {
                let z = params.zeeman_slope() * spin_z_element(sa.n, sa.j, sb.j, m_j, cache);
                zeeman[(a, b)] = z;
                zeeman[(b, a)] = z;
            }
        }
    }
    Ok(MonomerHamiltonian { m_j, basis, field_free, zeeman })
}

/// A field-dressed monomer level.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomerLevel {
    /// Zero-field label the level connects to adiabatically.
    pub label: CaseBState,
    pub energy: f64,
    /// Amplitudes over the case (b) basis of the `M_J` block.
    pub composition: Vec<f64>,
}

/// Dressed levels of one `M_J` block at field `B`, ascending in energy.
///
/// Levels of a block never cross (only avoided crossings are possible), so
/// the k-th level at any field carries the label of the k-th level at B = 0,
/// whose eigenvectors are labelled by their dominant case (b) component.
pub fn dressed_levels(
    hamiltonian: &MonomerHamiltonian,
    field_gauss: f64,
) -> Result<Vec<MonomerLevel>, MonomerError> {
    if field_gauss < 0.0 {
        return Err(MonomerError::NegativeField(field_gauss));
    }
    let labels = zero_field_labels(hamiltonian);
    let (values, vectors) = sorted_symmetric_eigen(hamiltonian.at_field(field_gauss));
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(k, energy)| MonomerLevel {
            label: labels[k],
            energy,
            composition: vectors.column(k).iter().copied().collect(),
        })
        .collect())
}

fn dominant_component(v: nalgebra::DVectorView<'_, f64>) -> usize {
    let mut best = 0;
    for i in 0..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

/// Labels of the zero-field eigenstates in energy order.
pub fn zero_field_labels(hamiltonian: &MonomerHamiltonian) -> Vec<CaseBState> {
    let (_, vectors) = sorted_symmetric_eigen(hamiltonian.field_free.clone());
    (0..hamiltonian.dim())
        .map(|k| hamiltonian.basis[dominant_component(vectors.column(k))])
        .collect()
}

/// Energy of the dressed level adiabatically connected to `label` at field `B`.
pub fn threshold_energy(
    params: &MonomerParams,
    label: CaseBState,
    field_gauss: f64,
    cache: &mut WignerCache,
) -> Result<f64, MonomerError> {
    let h = build_monomer_hamiltonian(params, label.m_j, cache)?;
    let levels = dressed_levels(&h, field_gauss)?;
    levels
        .into_iter()
        .find(|l| l.label == label)
        .map(|l| l.energy)
        .ok_or(MonomerError::UnknownState { n: label.n, j: label.j, m_j: label.m_j })
}

/// One tracked Zeeman curve.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCurve {
    pub label: CaseBState,
    pub energies: Vec<f64>,
    /// Energy rises with the field at the low-field end (magnetically trappable).
    pub weak_field_seeker: bool,
}

/// A field at which a level's dominant case (b) component no longer matches
/// its adiabatic label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelWarning {
    pub label: CaseBState,
    pub field_gauss: f64,
    pub dominant: CaseBState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeemanDiagram {
    pub fields: Vec<f64>,
    pub curves: Vec<LevelCurve>,
    pub warnings: Vec<LabelWarning>,
}

/// Zeeman diagram of every level with `|M_J| <= N_max + 1`.
pub fn zeeman_levels(
    params: &MonomerParams,
    fields_gauss: &[f64],
    cache: &mut WignerCache,
) -> Result<ZeemanDiagram, MonomerError> {
    params.validate()?;
    if let Some(&b) = fields_gauss.iter().find(|&&b| b < 0.0) {
        return Err(MonomerError::NegativeField(b));
    }
    let j_max = params.n_max as i32 + SPIN;
    let mut curves = Vec::new();
    let mut warnings = Vec::new();
    for m_j in -j_max..=j_max {
        let h = build_monomer_hamiltonian(params, m_j, cache)?;
        let labels = zero_field_labels(&h);
        let mut block: Vec<LevelCurve> = labels
            .iter()
            .map(|&label| LevelCurve { label, energies: Vec::with_capacity(fields_gauss.len()), weak_field_seeker: false })
            .collect();
        for &b in fields_gauss {
            let (values, vectors) = sorted_symmetric_eigen(h.at_field(b));
            for (k, e) in values.into_iter().enumerate() {
                block[k].energies.push(e);
                let dominant = h.basis[dominant_component(vectors.column(k))];
                if dominant != labels[k] {
                    warnings.push(LabelWarning { label: labels[k], field_gauss: b, dominant });
                }
            }
        }
        for curve in &mut block {
            curve.weak_field_seeker = low_field_slope(&h, curve.label) > 0.0;
        }
        curves.extend(block);
    }
    curves.sort_by(|a, b| a.label.cmp(&b.label));
    Ok(ZeemanDiagram { fields: fields_gauss.to_vec(), curves, warnings })
}

// dE/dB at B -> 0 by a one-sided difference over 1 G.
fn low_field_slope(h: &MonomerHamiltonian, label: CaseBState) -> f64 {
    let at = |b: f64| {
        dressed_levels(h, b)
            .ok()
            .and_then(|ls| ls.into_iter().find(|l| l.label == label))
            .map(|l| l.energy)
            .unwrap_or(0.0)
    };
    at(1.0) - at(0.0)
}
