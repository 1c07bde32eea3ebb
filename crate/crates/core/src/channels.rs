//! Scattering channels `|N J M_J> |L M_L>` of one total-projection block and
//! the radial coupling matrix of the close-coupled equations.
//!
//! Propagation happens in the zero-field case (b) basis. The monomer part
//! mixes channels with equal `(L, M_L)`; diagonalising it gives the
//! field-dressed asymptotic channels used at matching. Both bases share one
//! index order: dressed channel `i` carries the label of case (b) channel `i`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::angmom::{reduced_spherical_harmonic, triangle, WignerCache};
use crate::math::sqrt;
use crate::monomer::{
    build_monomer_hamiltonian, case_b_basis, dressed_levels, CaseBState, MonomerError,
    MonomerParams, SPIN,
};
use crate::potential::PotentialModel;
use crate::units::hbar2_over_2mu;

/// Which partial waves accompany each rotational state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parity {
    /// Total parity `(-1)^(N+L) = +1`, the block reached from an s-wave
    /// collision of an even-N molecule. The interaction conserves parity, so
    /// this loses nothing.
    #[default]
    Even,
    Odd,
    /// No parity restriction (both blocks in one matrix).
    Both,
}

impl Parity {
    fn admits(self, n: i32, l: i32) -> bool {
        match self {
            Parity::Even => (n + l) % 2 == 0,
            Parity::Odd => (n + l) % 2 != 0,
            Parity::Both => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    /// Adiabatic zero-field label of the molecular state.
    pub state: CaseBState,
    pub l: i32,
    pub m_l: i32,
    /// Dressed monomer energy at the basis field, K.
    pub threshold: f64,
}

/// Truncation of a channel basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisSpec {
    pub l_max: u32,
    pub n_max: u32,
    pub m_total: i32,
    pub parity: Parity,
}

#[derive(Debug, Clone)]
pub struct ChannelBasis {
    pub m_total: i32,
    pub field_gauss: f64,
    pub params: MonomerParams,
    pub reduced_mass: f64,
    pub l_max: u32,
    pub parity: Parity,
    pub channels: Vec<Channel>,
    /// Columns are dressed channels expanded over case (b) channels.
    pub transform: DMatrix<f64>,
}

impl ChannelBasis {
    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn find(&self, state: CaseBState, l: i32, m_l: i32) -> Option<usize> {
        self.channels.iter().position(|c| c.state == state && c.l == l && c.m_l == m_l)
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.threshold).collect()
    }

    pub fn partial_waves(&self) -> Vec<i32> {
        self.channels.iter().map(|c| c.l).collect()
    }

    pub fn hbar2_over_2mu(&self) -> f64 {
        hbar2_over_2mu(self.reduced_mass)
    }
}

// Thresholds closer than this are treated as degenerate when ordering.
const DEGENERACY_K: f64 = 1e-9;

/// Enumerates every channel of the block and its dressed thresholds.
///
/// Channels are ordered by threshold, then `L`, then `M_L`.
pub fn enumerate_basis(
    params: &MonomerParams,
    spec: BasisSpec,
    field_gauss: f64,
    reduced_mass: f64,
    cache: &mut WignerCache,
) -> Result<ChannelBasis, MonomerError> {
    let params = params.with_n_max(spec.n_max);
    params.validate()?;
    if field_gauss < 0.0 {
        return Err(MonomerError::NegativeField(field_gauss));
    }

    // one group per (L, M_L); each is a full monomer M_J block
    struct Group {
        l: i32,
        m_l: i32,
        states: Vec<CaseBState>,
        levels: Vec<crate::monomer::MonomerLevel>,
    }
    let mut groups = Vec::new();
    for l in 0..=spec.l_max as i32 {
        for m_l in -l..=l {
            let m_j = spec.m_total - m_l;
            // N is always even, so parity selects whole (L, M_L) groups
            if !spec.parity.admits(0, l) {
                continue;
            }
            let states = case_b_basis(spec.n_max, m_j);
            if states.is_empty() {
                continue;
            }
            let h = build_monomer_hamiltonian(&params, m_j, cache)?;
            let levels = dressed_levels(&h, field_gauss)?;
            groups.push(Group { l, m_l, states, levels });
        }
    }

    let mut channels = Vec::new();
    for g in &groups {
        for lvl in &g.levels {
            channels.push(Channel { state: lvl.label, l: g.l, m_l: g.m_l, threshold: lvl.energy });
        }
    }
    channels.sort_by(|a, b| {
        let ta = libm::round(a.threshold / DEGENERACY_K);
        let tb = libm::round(b.threshold / DEGENERACY_K);
        ta.total_cmp(&tb).then(a.l.cmp(&b.l)).then(a.m_l.cmp(&b.m_l))
    });

    let n = channels.len();
    let mut transform = DMatrix::zeros(n, n);
    for g in &groups {
        let idx: Vec<usize> = g
            .states
            .iter()
            .map(|s| channels.iter().position(|c| c.state == *s && c.l == g.l && c.m_l == g.m_l).unwrap())
            .collect();
        for lvl in &g.levels {
            let col = channels
                .iter()
                .position(|c| c.state == lvl.label && c.l == g.l && c.m_l == g.m_l)
                .unwrap();
            for (k, &row) in idx.iter().enumerate() {
                transform[(row, col)] = lvl.composition[k];
            }
        }
    }

    Ok(ChannelBasis {
        m_total: spec.m_total,
        field_gauss,
        params,
        reduced_mass,
        l_max: spec.l_max,
        parity: spec.parity,
        channels,
        transform,
    })
}

fn phase(n: i32) -> f64 {
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `<N' S J' M_J'; L' M_L' | C^λ(molecule) · C^λ(R̂) | N S J M_J; L M_L>`,
/// which is the matrix element of `P_λ(cos θ)`.
pub fn legendre_element(
    bra: (CaseBState, i32, i32),
    ket: (CaseBState, i32, i32),
    lambda: i32,
    cache: &mut WignerCache,
) -> f64 {
    let ((sb, lb, mlb), (sk, lk, mlk)) = (bra, ket);
    if sb.m_j + mlb != sk.m_j + mlk {
        return 0.0;
    }
    if !triangle(sb.n, lambda, sk.n) || !triangle(lb, lambda, lk) {
        return 0.0;
    }
    if (sb.n + lambda + sk.n) % 2 != 0 || (lb + lambda + lk) % 2 != 0 {
        return 0.0;
    }
    let q = sb.m_j - sk.m_j;
    if q.abs() > lambda {
        return 0.0;
    }
    let tj = cache.wigner_3j(sb.j, lambda, sk.j, -sb.m_j, q, sk.m_j);
    let tl = cache.wigner_3j(lb, lambda, lk, -mlb, -q, mlk);
    if tj == 0.0 || tl == 0.0 {
        return 0.0;
    }
    let mol_reduced = phase(sb.n + SPIN + sk.j + lambda)
        * sqrt(((2 * sk.j + 1) * (2 * sb.j + 1)) as f64)
        * cache.wigner_6j(sb.n, sb.j, SPIN, sk.j, sk.n, lambda)
        * reduced_spherical_harmonic(sb.n, lambda, sk.n);
    let orb_reduced = reduced_spherical_harmonic(lb, lambda, lk);
    phase(q) * phase(sb.j - sb.m_j) * tj * mol_reduced * phase(lb - mlb) * tl * orb_reduced
}

/// `R`-dependent Hamiltonian of one block in the case (b) channel basis, K.
///
/// `H(R) = Σ_λ V_λ(R) A_λ + H_mon(B) + ħ²L(L+1)/(2μR²)`.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    dim: usize,
    hbar2_2mu: f64,
    model: PotentialModel,
    /// Angular factors for the anisotropic orders; λ = 0 is the identity.
    angular: Vec<(u32, DMatrix<f64>)>,
    monomer: DMatrix<f64>,
    centrifugal: Vec<f64>,
}

impl CouplingMatrix {
    pub fn new(basis: &ChannelBasis, model: &PotentialModel, cache: &mut WignerCache) -> Self {
        let n = basis.len();
        let keys: Vec<(CaseBState, i32, i32)> =
            basis.channels.iter().map(|c| (c.state, c.l, c.m_l)).collect();
        let mut angular = Vec::new();
        for lambda in model.orders().into_iter().filter(|&l| l > 0) {
            let mut a = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = legendre_element(keys[i], keys[j], lambda as i32, cache);
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
            angular.push((lambda, a));
        }
        // monomer block: rebuild each (L, M_L) group's case (b) matrix
        let mut monomer = DMatrix::zeros(n, n);
        let mut done = Vec::new();
        for c in &basis.channels {
            if done.contains(&(c.l, c.m_l)) {
                continue;
            }
            done.push((c.l, c.m_l));
            let h = build_monomer_hamiltonian(&basis.params, basis.m_total - c.m_l, cache)
                .expect("basis was built from valid parameters")
                .at_field(basis.field_gauss);
            let rows: Vec<(usize, usize)> = basis
                .channels
                .iter()
                .enumerate()
                .filter(|(_, d)| d.l == c.l && d.m_l == c.m_l)
                .map(|(i, d)| (i, case_b_basis(basis.params.n_max, d.state.m_j).iter().position(|s| *s == d.state).unwrap()))
                .collect();
            for &(i, a) in &rows {
                for &(j, b) in &rows {
                    monomer[(i, j)] = h[(a, b)];
                }
            }
        }
        let centrifugal = basis.channels.iter().map(|c| (c.l * (c.l + 1)) as f64).collect();
        Self {
            dim: n,
            hbar2_2mu: basis.hbar2_over_2mu(),
            model: model.clone(),
            angular,
            monomer,
            centrifugal,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hbar2_over_2mu(&self) -> f64 {
        self.hbar2_2mu
    }

    /// Angular matrix of one anisotropic order, if present.
    pub fn angular(&self, lambda: u32) -> Option<&DMatrix<f64>> {
        self.angular.iter().find(|(l, _)| *l == lambda).map(|(_, a)| a)
    }

    pub fn monomer(&self) -> &DMatrix<f64> {
        &self.monomer
    }

    pub fn model(&self) -> &PotentialModel {
        &self.model
    }

    /// Interaction part only, `Σ_λ V_λ(R) A_λ`.
    pub fn potential_into(&self, r: f64, out: &mut DMatrix<f64>) {
        out.fill(0.0);
        let v0 = self.model.radial_coupling(0, r);
        for i in 0..self.dim {
            out[(i, i)] = v0;
        }
        for (lambda, a) in &self.angular {
            let v = self.model.radial_coupling(*lambda, r);
            out.zip_apply(a, |o, x| *o += v * x);
        }
    }

    /// Full Hamiltonian at `R` written into `out`.
    pub fn hamiltonian_into(&self, r: f64, out: &mut DMatrix<f64>) {
        self.potential_into(r, out);
        *out += &self.monomer;
        let c = self.hbar2_2mu / (r * r);
        for i in 0..self.dim {
            out[(i, i)] += c * self.centrifugal[i];
        }
    }

    pub fn hamiltonian(&self, r: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        self.hamiltonian_into(r, &mut out);
        out
    }
}

/// All total projections reachable from a molecular `M_J` with `L <= L_max`.
pub fn projections_for(m_j: i32, l_max: u32) -> impl Iterator<Item = i32> {
    let l = l_max as i32;
    (m_j - l)..=(m_j + l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(l_max: u32, n_max: u32, m: i32, b: f64) -> ChannelBasis {
        let spec = BasisSpec { l_max, n_max, m_total: m, parity: Parity::Even };
        enumerate_basis(&MonomerParams::default(), spec, b, 2.77, &mut WignerCache::new()).unwrap()
    }

    #[test]
    fn single_s_wave_channel() {
        let b = basis(0, 0, 1, 10.0);
        assert_eq!(b.len(), 1);
        assert_eq!(b.channels[0].state, CaseBState::new(0, 1, 1));
        assert_eq!(b.channels[0].l, 0);
    }

    #[test]
    fn isotropic_term_is_diagonal() {
        let b = basis(2, 2, 1, 0.0);
        let mut cache = WignerCache::new();
        for (i, ci) in b.channels.iter().enumerate() {
            for (j, cj) in b.channels.iter().enumerate() {
                let v = legendre_element((ci.state, ci.l, ci.m_l), (cj.state, cj.l, cj.m_l), 0, &mut cache);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn p2_vanishes_between_ground_rotor_states() {
        let mut cache = WignerCache::new();
        let s = CaseBState::new(0, 1, 1);
        let t = CaseBState::new(0, 1, 0);
        assert_eq!(legendre_element((s, 0, 0), (t, 2, 1), 2, &mut cache), 0.0);
        assert_eq!(legendre_element((s, 2, 0), (s, 2, 0), 2, &mut cache), 0.0);
    }

    #[test]
    fn transform_is_orthogonal() {
        let b = basis(2, 2, 1, 3000.0);
        let t = &b.transform;
        let err = (t.transpose() * t - DMatrix::identity(b.len(), b.len())).amax();
        assert!(err < 1e-12);
    }
}
