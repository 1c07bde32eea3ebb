//! Johnson log-derivative propagation of the close-coupled equations and
//! matching to field-dressed asymptotic channels.
//!
//! The radial equations are `Ψ'' = W(R) Ψ` with `W = (H(R) - E) / (ħ²/2μ)`.
//! Propagation runs over sectors of two equal steps, Simpson weights
//! `1, 4, 1`; a sector may change the step length, which lets the step grow
//! outside the well without restarting from scratch.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::angmom::WignerCache;
use crate::channels::{enumerate_basis, BasisSpec, ChannelBasis, CouplingMatrix};
use crate::linalg::{invert_in_place, symmetrize, InvertWorkspace};
use crate::math::sqrt;
use crate::monomer::{MonomerError, MonomerParams};
use crate::potential::PotentialModel;
use crate::special::{decaying_log_derivative, riccati_bessel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PropagationError {
    #[error("log-derivative became non-finite at R = {r} bohr; reduce the step or move R_min outward")]
    NonFinite { r: f64 },
    #[error("singular matrix during propagation at R = {r} bohr")]
    Singular { r: f64 },
    #[error("no classically forbidden wall found inside R = {r} bohr")]
    NoWall { r: f64 },
    #[error("invalid propagation grid: {0}")]
    BadGrid(&'static str),
    #[error("closed-channel elimination is ill-conditioned at R_max = {r_max} bohr; increase R_max")]
    IllConditioned { r_max: f64 },
    #[error("no open channels at total energy {e_total} K")]
    NoOpenChannels { e_total: f64 },
}

/// Asymptotic channel data: thresholds, partial waves, and the orthogonal
/// transform from the propagation basis to the asymptotic basis.
#[derive(Debug, Clone)]
pub struct Asymptote {
    pub thresholds: Vec<f64>,
    pub partial_waves: Vec<i32>,
    /// `None` when the propagation basis is already asymptotically diagonal.
    pub transform: Option<DMatrix<f64>>,
}

/// A set of coupled radial equations.
pub trait CoupledSystem {
    fn dim(&self) -> usize;
    /// `ħ²/2μ` in K bohr².
    fn hbar2_over_2mu(&self) -> f64;
    /// Full Hamiltonian at `R` including centrifugal terms, in K.
    fn hamiltonian_into(&self, r: f64, out: &mut DMatrix<f64>);
    fn asymptote(&self) -> Asymptote;
}

/// One total-projection block of the atom-molecule problem.
#[derive(Debug, Clone)]
pub struct Block {
    pub basis: ChannelBasis,
    pub coupling: CouplingMatrix,
}

impl Block {
    pub fn new(
        params: &MonomerParams,
        spec: BasisSpec,
        field_gauss: f64,
        reduced_mass: f64,
        model: &PotentialModel,
        cache: &mut WignerCache,
    ) -> Result<Self, MonomerError> {
        let basis = enumerate_basis(params, spec, field_gauss, reduced_mass, cache)?;
        let coupling = CouplingMatrix::new(&basis, model, cache);
        Ok(Self { basis, coupling })
    }
}

impl CoupledSystem for Block {
    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn hbar2_over_2mu(&self) -> f64 {
        self.coupling.hbar2_over_2mu()
    }

    fn hamiltonian_into(&self, r: f64, out: &mut DMatrix<f64>) {
        self.coupling.hamiltonian_into(r, out);
    }

    fn asymptote(&self) -> Asymptote {
        Asymptote {
            thresholds: self.basis.thresholds(),
            partial_waves: self.basis.partial_waves(),
            transform: Some(self.basis.transform.clone()),
        }
    }
}

/// Radial equations given directly as a potential matrix, already diagonal
/// at long range. Used for model problems.
pub struct ExplicitSystem<F> {
    pub hbar2_2mu: f64,
    pub thresholds: Vec<f64>,
    pub partial_waves: Vec<i32>,
    /// Interaction matrix at `R`, without thresholds or centrifugal terms.
    pub potential: F,
}

impl<F: Fn(f64, &mut DMatrix<f64>)> CoupledSystem for ExplicitSystem<F> {
    fn dim(&self) -> usize {
        self.thresholds.len()
    }

    fn hbar2_over_2mu(&self) -> f64 {
        self.hbar2_2mu
    }

    fn hamiltonian_into(&self, r: f64, out: &mut DMatrix<f64>) {
        out.fill(0.0);
        (self.potential)(r, out);
        for i in 0..self.dim() {
            let l = self.partial_waves[i] as f64;
            out[(i, i)] += self.thresholds[i] + self.hbar2_2mu * l * (l + 1.0) / (r * r);
        }
    }

    fn asymptote(&self) -> Asymptote {
        Asymptote {
            thresholds: self.thresholds.clone(),
            partial_waves: self.partial_waves.clone(),
            transform: None,
        }
    }
}

/// Where and how finely to propagate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    /// Start of propagation; `None` searches inward for the repulsive wall.
    pub r_min: Option<f64>,
    /// End of the fixed-step region.
    pub r_mid: f64,
    pub r_max: f64,
    /// Fixed step inside `r_mid`.
    pub h_inner: f64,
    /// Outer steps keep `h * k_local` below this.
    pub max_phase: f64,
    /// Outer steps grow no faster than `growth * R`.
    pub growth: f64,
    pub h_max: f64,
    /// Decay, in e-folds of the least-forbidden channel, between an
    /// automatic `R_min` and the classically allowed region.
    pub wall_attenuation: f64,
    /// Diagonal log-derivative imposed at `R_min`, 1/bohr.
    pub wall_log_derivative: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            r_min: None,
            r_mid: 30.0,
            r_max: 500.0,
            h_inner: 0.025,
            max_phase: 0.05,
            growth: 0.01,
            h_max: 2.0,
            wall_attenuation: 12.0,
            wall_log_derivative: WALL_LOG_DERIVATIVE,
        }
    }
}

impl StepPolicy {
    pub fn with_r_max(mut self, r_max: f64) -> Self {
        self.r_max = r_max;
        self
    }

    /// Halves every step length scale.
    pub fn refined(mut self) -> Self {
        self.h_inner /= 2.0;
        self.max_phase /= 2.0;
        self.growth /= 2.0;
        self.h_max /= 2.0;
        self
    }

    fn validate(&self) -> Result<(), PropagationError> {
        let ok = self.r_mid > 0.0
            && self.r_max >= self.r_mid
            && self.h_inner > 0.0
            && self.max_phase > 0.0
            && self.growth > 0.0
            && self.h_max > 0.0
            && self.wall_log_derivative > 0.0
            && self.wall_attenuation > 0.0;
        if !ok {
            return Err(PropagationError::BadGrid("radii and step parameters must be positive and ordered"));
        }
        if let Some(r) = self.r_min {
            if !(r > 0.0 && r < self.r_mid) {
                return Err(PropagationError::BadGrid("R_min must lie in (0, R_mid)"));
            }
        }
        Ok(())
    }
}

/// Default value of `Y` at the wall.
pub const WALL_LOG_DERIVATIVE: f64 = 1e8;

/// Log-derivative matrix at the end of propagation, in the propagation basis.
#[derive(Debug, Clone)]
pub struct LogDerivative {
    pub r: f64,
    pub y: DMatrix<f64>,
    pub r_min: f64,
    pub sectors: usize,
}

/// Starting radius deep enough inside the repulsive wall that every
/// channel has decayed by `policy.wall_attenuation` e-folds. Walks inward
/// from `R_mid` in steps of 0.01 bohr.
pub fn find_wall<S: CoupledSystem + ?Sized>(
    system: &S,
    e_total: f64,
    policy: &StepPolicy,
) -> Result<f64, PropagationError> {
    let n = system.dim();
    let c = system.hbar2_over_2mu();
    let mut h = DMatrix::zeros(n, n);
    let dr = 0.01;
    let kappa = |r: f64, h: &mut DMatrix<f64>| {
        system.hamiltonian_into(r, h);
        let least = (0..n).map(|i| h[(i, i)]).fold(f64::INFINITY, f64::min);
        sqrt(((least - e_total) / c).max(0.0))
    };
    let mut r = policy.r_mid;
    let mut decay = 0.0;
    let mut prev = kappa(r, &mut h);
    while decay < policy.wall_attenuation {
        r -= dr;
        if r <= dr {
            return Err(PropagationError::NoWall { r: policy.r_mid });
        }
        let next = kappa(r, &mut h);
        decay += 0.5 * dr * (prev + next);
        prev = next;
    }
    Ok(r)
}

struct Work {
    w: DMatrix<f64>,
    a: DMatrix<f64>,
    inv: InvertWorkspace,
}

impl Work {
    fn new(n: usize) -> Self {
        Self {
            w: DMatrix::zeros(n, n),
            a: DMatrix::zeros(n, n),
            inv: InvertWorkspace::default(),
        }
    }
}

fn fill_w<S: CoupledSystem + ?Sized>(system: &S, r: f64, e_total: f64, w: &mut DMatrix<f64>) {
    system.hamiltonian_into(r, w);
    let c = 1.0 / system.hbar2_over_2mu();
    for i in 0..w.nrows() {
        w[(i, i)] -= e_total;
    }
    *w *= c;
}

/// `y <- y (I + h y)^{-1} = (I - (I + h y)^{-1}) / h`.
fn riccati_step(y: &mut DMatrix<f64>, h: f64, work: &mut Work, r: f64) -> Result<(), PropagationError> {
    let n = y.nrows();
    work.a.copy_from(y);
    work.a *= h;
    for i in 0..n {
        work.a[(i, i)] += 1.0;
    }
    invert_in_place(&mut work.a, &mut work.inv).map_err(|_| PropagationError::Singular { r })?;
    y.copy_from(&work.a);
    *y *= -1.0 / h;
    for i in 0..n {
        y[(i, i)] += 1.0 / h;
    }
    Ok(())
}

/// Propagates `Y` from the wall to `policy.r_max` at total energy `e_total` (K).
pub fn propagate_logderiv<S: CoupledSystem + ?Sized>(
    system: &S,
    e_total: f64,
    policy: &StepPolicy,
) -> Result<LogDerivative, PropagationError> {
    policy.validate()?;
    let n = system.dim();
    let r_min = match policy.r_min {
        Some(r) => r,
        None => find_wall(system, e_total, policy)?,
    };
    let c = system.hbar2_over_2mu();
    let mut work = Work::new(n);
    let mut y = DMatrix::<f64>::identity(n, n) * policy.wall_log_derivative;
    let mut diag = DMatrix::zeros(n, n);

    let mut r = r_min;
    fill_w(system, r, e_total, &mut work.w);
    let mut sectors = 0usize;
    while r < policy.r_max {
        // sector length 2h
        let (h, r_end) = if r + 1e-12 < policy.r_mid {
            let left = policy.r_mid - r;
            let m = libm::ceil(left / (2.0 * policy.h_inner) - 1e-6).max(1.0);
            let h = left / (2.0 * m);
            // land exactly on R_mid so a feature placed there is hit
            (h, if m == 1.0 { policy.r_mid } else { r + 2.0 * h })
        } else {
            system.hamiltonian_into(r, &mut diag);
            let k2 = (0..n).map(|i| (e_total - diag[(i, i)]) / c).fold(0.0, f64::max);
            let mut h = policy.h_max.min(policy.growth * r);
            if k2 > 0.0 {
                h = h.min(policy.max_phase / sqrt(k2));
            }
            let h = h.max(policy.h_inner);
            // absorb the remainder rather than leave a sliver of a sector,
            // which would make (I - (I + hY)^{-1}) / h lose all precision
            if r + 3.0 * h >= policy.r_max {
                (0.5 * (policy.r_max - r), policy.r_max)
            } else {
                (h, r + 2.0 * h)
            }
        };

        // start point, weight 1 (w holds W(r))
        y.zip_apply(&work.w, |yv, wv| *yv += h / 3.0 * wv);

        // midpoint, weight 4, U = (I - h²W/6)^{-1} W = (6/h²) [(I - h²W/6)^{-1} - I]
        riccati_step(&mut y, h, &mut work, r)?;
        let r_mid = r + h;
        fill_w(system, r_mid, e_total, &mut work.w);
        work.a.copy_from(&work.w);
        work.a *= -h * h / 6.0;
        for i in 0..n {
            work.a[(i, i)] += 1.0;
        }
        invert_in_place(&mut work.a, &mut work.inv).map_err(|_| PropagationError::Singular { r: r_mid })?;
        for i in 0..n {
            work.a[(i, i)] -= 1.0;
        }
        y.zip_apply(&work.a, |yv, av| *yv += 8.0 / h * av);

        // end point, weight 1
        riccati_step(&mut y, h, &mut work, r_mid)?;
        fill_w(system, r_end, e_total, &mut work.w);
        y.zip_apply(&work.w, |yv, wv| *yv += h / 3.0 * wv);
        symmetrize(&mut y);

        if !y.iter().all(|v| v.is_finite()) {
            log::warn!("non-finite log-derivative at R = {r_end}");
            return Err(PropagationError::NonFinite { r: r_end });
        }
        r = r_end;
        sectors += 1;
    }
    log::debug!("propagated {n} channels over {sectors} sectors from R = {r_min} to {r}");
    Ok(LogDerivative { r, y, r_min, sectors })
}

/// Scattering matrices on the open channels of one energy.
#[derive(Debug, Clone)]
pub struct SMatrix {
    /// Indices (asymptotic basis) of the open channels, ascending.
    pub open: Vec<usize>,
    /// Wavenumbers of the open channels, 1/bohr.
    pub k: Vec<f64>,
    pub k_matrix: DMatrix<f64>,
    pub s: DMatrix<Complex64>,
}

impl SMatrix {
    pub fn n_open(&self) -> usize {
        self.open.len()
    }

    /// Position of an asymptotic channel among the open ones.
    pub fn open_index(&self, channel: usize) -> Option<usize> {
        self.open.iter().position(|&c| c == channel)
    }

    /// `max |(S†S - I)_ij|`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.n_open();
        let p = self.s.adjoint() * &self.s;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// `max |(S - Sᵀ)_ij|`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n_open();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.s[(i, j)] - self.s[(j, i)]).norm());
            }
        }
        worst
    }

    /// `|S_ij|²` between open positions.
    pub fn probability(&self, i: usize, j: usize) -> f64 {
        self.s[(i, j)].norm_sqr()
    }
}

/// Channel is open when its threshold lies strictly below `e_total`.
pub fn open_channels(thresholds: &[f64], e_total: f64) -> Vec<usize> {
    (0..thresholds.len()).filter(|&i| thresholds[i] < e_total).collect()
}

/// Smallest ratio of column norm after/before elimination that is accepted.
const CONDITION_FLOOR: f64 = 1e-13;

/// K and S matrices from the log-derivative at `R_max`.
///
/// Open channels are matched to `ĵ_L(kR)/√k` and `n̂_L(kR)/√k`; closed
/// channels only to the decaying modified Riccati-Bessel function, which
/// enters through its log-derivative.
pub fn match_to_asymptotics<S: CoupledSystem + ?Sized>(
    system: &S,
    logd: &LogDerivative,
    e_total: f64,
) -> Result<SMatrix, PropagationError> {
    let asym = system.asymptote();
    let n = system.dim();
    let c = system.hbar2_over_2mu();
    let r = logd.r;
    let y = match &asym.transform {
        Some(t) => t.transpose() * &logd.y * t,
        None => logd.y.clone(),
    };
    let open = open_channels(&asym.thresholds, e_total);
    let n_open = open.len();
    if n_open == 0 {
        return Err(PropagationError::NoOpenChannels { e_total });
    }

    // columns: N (scaled), right-hand side: Y J - J'
    let mut jv = alloc::vec![0.0; n];
    let mut djv = alloc::vec![0.0; n];
    let mut nv = alloc::vec![1.0; n];
    let mut dnv = alloc::vec![0.0; n];
    let mut k = Vec::with_capacity(n_open);
    for i in 0..n {
        let l = asym.partial_waves[i] as u32;
        let e = e_total - asym.thresholds[i];
        if e > 0.0 {
            let ki = sqrt(e / c);
            let p = riccati_bessel(l, ki * r);
            let s = 1.0 / sqrt(ki);
            jv[i] = p.j * s;
            djv[i] = p.dj * ki * s;
            nv[i] = p.n * s;
            dnv[i] = p.dn * ki * s;
            k.push(ki);
        } else {
            let kappa = sqrt(-e / c);
            dnv[i] = kappa * decaying_log_derivative(l, kappa * r);
        }
    }

    // column-equilibrated (Y N - N')
    let mut m = DMatrix::zeros(n, n);
    let mut col_scale = alloc::vec![0.0; n];
    for jcol in 0..n {
        for i in 0..n {
            m[(i, jcol)] = y[(i, jcol)] * nv[jcol];
        }
        m[(jcol, jcol)] -= dnv[jcol];
        let norm = m.column(jcol).amax();
        col_scale[jcol] = if norm > 0.0 { norm } else { 1.0 };
        for i in 0..n {
            m[(i, jcol)] /= col_scale[jcol];
        }
    }
    let mut rhs = DMatrix::zeros(n, n_open);
    for (a, &o) in open.iter().enumerate() {
        for i in 0..n {
            rhs[(i, a)] = y[(i, o)] * jv[o];
        }
        rhs[(o, a)] -= djv[o];
    }
    let lu = m.lu();
    let sol = lu.solve(&rhs).ok_or(PropagationError::IllConditioned { r_max: r })?;
    let u_diag_min = lu.u().diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if !(u_diag_min > CONDITION_FLOOR) {
        return Err(PropagationError::IllConditioned { r_max: r });
    }

    let mut kmat = DMatrix::zeros(n_open, n_open);
    for (a, &o) in open.iter().enumerate() {
        for b in 0..n_open {
            kmat[(a, b)] = sol[(o, b)] / col_scale[o];
        }
    }
    let s = s_from_k(&kmat);
    Ok(SMatrix { open, k, k_matrix: kmat, s })
}

/// `S = (I + iK)(I - iK)^{-1}`.
pub fn s_from_k(k: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = k.nrows();
    let i = Complex64::new(0.0, 1.0);
    let plus = DMatrix::from_fn(n, n, |a, b| if a == b { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) } + i * k[(a, b)]);
    let minus = DMatrix::from_fn(n, n, |a, b| if a == b { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) } - i * k[(a, b)]);
    // (I - iK)^{-1} commutes with (I + iK)
    let inv = minus.lu().try_inverse().expect("I - iK is invertible for real K");
    plus * inv
}

/// Propagate and match in one call.
pub fn solve<S: CoupledSystem + ?Sized>(
    system: &S,
    e_total: f64,
    policy: &StepPolicy,
) -> Result<SMatrix, PropagationError> {
    let logd = propagate_logderiv(system, e_total, policy)?;
    match_to_asymptotics(system, &logd, e_total)
}
