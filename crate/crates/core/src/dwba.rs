//! First-order distorted-wave Born approximation for one inelastic pair.
//!
//! Each channel's regular solution is integrated by Numerov on its own
//! diagonal (diabatic) potential and energy-normalized so that
//! `f(R) → (π c k)^{-1/2} sin(kR - Lπ/2 + δ)` with `c = ħ²/2μ`. The
//! off-diagonal element is then `K_if = -π ∫ f_i V_if f_f dR`.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::math::{abs, sqrt};
use crate::potential::PotentialModel;
use crate::propagator::{Block, StepPolicy};
use crate::quadrature::integrate;
use crate::special::riccati_bessel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DwbaError {
    #[error("channel is closed at local energy {0} K")]
    Closed(f64),
    #[error("invalid radial grid: {0}")]
    BadGrid(&'static str),
    #[error("overlap integral tail not converged by R = {0} bohr")]
    NonConvergent(f64),
    #[error("solution overflowed or became non-finite near R = {0} bohr")]
    NonFinite(f64),
}

/// Uniform radial grid `r_i = r_start + i h`, `i = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    pub r_start: f64,
    pub h: f64,
    pub len: usize,
}

impl RadialGrid {
    /// Covers `[r_start, r_end]` with a step no larger than `h_max`.
    pub fn new(r_start: f64, r_end: f64, h_max: f64) -> Result<Self, DwbaError> {
        if !(r_start > 0.0 && r_end > r_start && h_max > 0.0) {
            return Err(DwbaError::BadGrid("need 0 < r_start < r_end and h > 0"));
        }
        let intervals = libm::ceil((r_end - r_start) / h_max) as usize;
        if intervals < 8 {
            return Err(DwbaError::BadGrid("fewer than 8 intervals"));
        }
        Ok(Self { r_start, h: (r_end - r_start) / intervals as f64, len: intervals + 1 })
    }

    pub fn r(&self, i: usize) -> f64 {
        self.r_start + i as f64 * self.h
    }

    pub fn r_end(&self) -> f64 {
        self.r(self.len - 1)
    }

    /// Index of the first grid point at or beyond `r`.
    pub fn index_at(&self, r: f64) -> usize {
        if r <= self.r_start {
            return 0;
        }
        (libm::ceil((r - self.r_start) / self.h - 1e-9) as usize).min(self.len - 1)
    }
}

/// Energy-normalized regular solution of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortedWave {
    pub l: i32,
    /// Local kinetic energy, K.
    pub energy: f64,
    pub k: f64,
    pub grid: RadialGrid,
    pub values: Vec<f64>,
    pub tan_delta: f64,
    /// `f ≈ α ĵ_L(kR) + β n̂_L(kR)` beyond the grid.
    pub asymptotic: [f64; 2],
    /// Inner classical turning point, if the wave starts in a forbidden region.
    pub turning_point: Option<f64>,
}

impl DistortedWave {
    /// `(π c k)^{-1/2}`.
    pub fn amplitude(&self, hbar2_2mu: f64) -> f64 {
        1.0 / sqrt(core::f64::consts::PI * hbar2_2mu * self.k)
    }

    /// Free-wave continuation, valid where the potential has died out.
    pub fn asymptotic_value(&self, r: f64) -> f64 {
        let p = riccati_bessel(self.l as u32, self.k * r);
        self.asymptotic[0] * p.j + self.asymptotic[1] * p.n
    }
}

/// Regular solution on `potential(R) + c L(L+1)/R²` at local energy `e_local`.
///
/// `potential` excludes the threshold and the centrifugal term.
pub fn distorted_wave<V: Fn(f64) -> f64>(
    potential: V,
    l: i32,
    e_local: f64,
    hbar2_2mu: f64,
    grid: &RadialGrid,
) -> Result<DistortedWave, DwbaError> {
    if !(e_local > 0.0) {
        return Err(DwbaError::Closed(e_local));
    }
    let c = hbar2_2mu;
    let ll = (l * (l + 1)) as f64;
    let w = |r: f64| (potential(r) + c * ll / (r * r) - e_local) / c;
    let n = grid.len;
    let hh = grid.h * grid.h;
    // Numerov in summed-difference form on y = (1 - h²W/12) u:
    // Δ_n = Δ_{n-1} + h² W_n u_n, y_{n+1} = y_n + Δ_n. The three-term form
    // loses ~n²ε to cancellation where the solution is nearly linear.
    let mut u = Vec::with_capacity(n);
    let lp1 = (l + 1) as f64;
    let mut w_cur = w(grid.r(1));
    let f0 = 1.0 - hh * w(grid.r(0)) / 12.0;
    let f1 = 1.0 - hh * w_cur / 12.0;
    u.push(libm::pow(grid.r(0), lp1));
    u.push(libm::pow(grid.r(1), lp1));
    let mut y = f1 * u[1];
    let mut delta = y - f0 * u[0];
    let mut turning_point = None;
    let mut forbidden = w(grid.r(0)) > 0.0;
    for i in 1..n - 1 {
        let r_next = grid.r(i + 1);
        let w_next = w(r_next);
        if forbidden && w_next <= 0.0 {
            turning_point = Some(r_next);
            forbidden = false;
        }
        delta += hh * w_cur * u[i];
        y += delta;
        let next = y / (1.0 - hh * w_next / 12.0);
        if !next.is_finite() {
            return Err(DwbaError::NonFinite(r_next));
        }
        u.push(next);
        if abs(next) > 1e250 {
            for v in &mut u {
                *v *= 1e-250;
            }
            y *= 1e-250;
            delta *= 1e-250;
        }
        w_cur = w_next;
    }

    // value and O(h⁴) derivative at the last interior point:
    // u'_n = [(1 - h²W_{n+1}/6) u_{n+1} - (1 - h²W_{n-1}/6) u_{n-1}] / 2h
    let k = sqrt(e_local / c);
    let m = n - 2;
    let h = grid.h;
    let g = |i: usize| 1.0 - h * h * w(grid.r(i)) / 6.0;
    let u_m = u[m];
    let du_m = (g(m + 1) * u[m + 1] - g(m - 1) * u[m - 1]) / (2.0 * h);
    let p = riccati_bessel(l as u32, k * grid.r(m));
    // u = a ĵ + b n̂ with unit Wronskian ĵ n̂' - ĵ' n̂
    let a = u_m * p.dn - du_m / k * p.n;
    let b = du_m / k * p.j - p.dj * u_m;
    // a = A cos δ and b = -A sin δ; the sign stays that of the regular
    // solution at the origin so that K_if is continuous in energy
    let scale = 1.0 / (sqrt(a * a + b * b) * sqrt(core::f64::consts::PI * c * k));
    for v in &mut u {
        *v *= scale;
    }
    Ok(DistortedWave {
        l,
        energy: e_local,
        k,
        grid: *grid,
        values: u,
        tan_delta: -b / a,
        asymptotic: [a * scale, b * scale],
        turning_point,
    })
}

fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let even = if (n - 1) % 2 == 0 { n } else { n - 1 };
    let mut s = 0.0;
    if even >= 3 {
        s = values[0] + values[even - 1];
        for (i, v) in values[1..even - 1].iter().enumerate() {
            s += if i % 2 == 0 { 4.0 } else { 2.0 } * v;
        }
        s *= h / 3.0;
    }
    if even < n {
        s += 0.5 * h * (values[n - 2] + values[n - 1]);
    }
    s
}

/// `K_if = -π ∫_{R_cut}^∞ f_i V_if f_f dR`.
///
/// The grid part uses Simpson's rule; beyond the grid both waves are
/// continued with their free asymptotic forms and the tail is integrated
/// adaptively over doubling intervals until it stops contributing.
pub fn dwba_kmatrix<V: Fn(f64) -> f64>(
    f_i: &DistortedWave,
    f_f: &DistortedWave,
    coupling: V,
    cutoff: f64,
) -> Result<f64, DwbaError> {
    if f_i.grid != f_f.grid {
        return Err(DwbaError::BadGrid("distorted waves live on different grids"));
    }
    let grid = f_i.grid;
    let start = grid.index_at(cutoff);
    let integrand: Vec<f64> =
        (start..grid.len).map(|i| f_i.values[i] * coupling(grid.r(i)) * f_f.values[i]).collect();
    let mut total = simpson(&integrand, grid.h);
    let magnitude = simpson(&integrand.iter().map(|v| abs(*v)).collect::<Vec<_>>(), grid.h);

    let tail = |r: f64| f_i.asymptotic_value(r) * coupling(r) * f_f.asymptotic_value(r);
    let k_min = f_i.k.min(f_f.k);
    let mut a = grid.r_end();
    let mut converged = false;
    for _ in 0..64 {
        let b = 2.0 * a;
        let piece = integrate(tail, a, b, 1e-15 * magnitude, 1e-10);
        total += piece.value;
        if !piece.converged {
            break;
        }
        if k_min * a > 10.0 && abs(piece.value) <= 1e-12 * magnitude.max(abs(total)) {
            converged = true;
            break;
        }
        a = b;
    }
    if !converged {
        return Err(DwbaError::NonConvergent(a));
    }
    Ok(-core::f64::consts::PI * total)
}

/// Diabatic curves of two channels: `interaction(R) = [V_ii, V_ff, V_if]`,
/// without thresholds or centrifugal terms.
pub struct ChannelPair<F> {
    pub hbar2_2mu: f64,
    pub thresholds: [f64; 2],
    pub partial_waves: [i32; 2],
    pub interaction: F,
}

/// Projects a block's Hamiltonian onto asymptotic channels `initial` and
/// `exit`. The angular factors are contracted once, so evaluating the curves
/// costs only the radial functions.
pub fn block_pair(block: &Block, initial: usize, exit: usize) -> ChannelPair<Box<dyn Fn(f64) -> [f64; 3]>> {
    let basis = &block.basis;
    let t = &basis.transform;
    let (ti, tf) = (t.column(initial), t.column(exit));
    let model: PotentialModel = block.coupling.model().clone();
    let mut projections: Vec<(u32, [f64; 3])> = Vec::new();
    for lambda in model.orders() {
        let p = match block.coupling.angular(lambda) {
            Some(a) => {
                let ai = a * ti;
                let af = a * tf;
                [ti.dot(&ai), tf.dot(&af), ti.dot(&af)]
            }
            None => [1.0, 1.0, ti.dot(&tf)],
        };
        projections.push((lambda, p));
    }
    let (ci, cf) = (&basis.channels[initial], &basis.channels[exit]);
    ChannelPair {
        hbar2_2mu: basis.hbar2_over_2mu(),
        thresholds: [ci.threshold, cf.threshold],
        partial_waves: [ci.l, cf.l],
        interaction: Box::new(move |r: f64| {
            let mut out = [0.0; 3];
            for (lambda, p) in &projections {
                let v = model.radial_coupling(*lambda, r);
                for (o, x) in out.iter_mut().zip(p) {
                    *o += v * x;
                }
            }
            out
        }),
    }
}

/// Radial settings for pair calculations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwbaSettings {
    pub h: f64,
    /// Inward search for the starting point begins here.
    pub r_mid: f64,
    pub r_max: f64,
    /// e-folds of decay required between the start and the turning point.
    pub wall_attenuation: f64,
    pub cutoff: Cutoff,
}

/// Inner limit of the overlap integral.
///
/// The numerically integrated waves are regular, so the full integral
/// from inside the wall needs no regularization. Truncating at the turning
/// point drops the part of the integrand under the repulsive wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Cutoff {
    /// Start of the radial grid, deep inside the wall.
    #[default]
    GridStart,
    /// Outer of the two inner classical turning points.
    TurningPoint,
}

impl Default for DwbaSettings {
    fn default() -> Self {
        Self { h: 0.005, r_mid: 30.0, r_max: 500.0, wall_attenuation: 12.0, cutoff: Cutoff::GridStart }
    }
}

impl DwbaSettings {
    pub fn from_policy(policy: &StepPolicy) -> Self {
        Self { r_mid: policy.r_mid, r_max: policy.r_max, wall_attenuation: policy.wall_attenuation, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwbaResult {
    pub k_if: f64,
    pub k_initial: f64,
    pub k_final: f64,
    /// Inner cutoff of the overlap integral, bohr.
    pub cutoff: f64,
    pub tan_delta: [f64; 2],
}

impl DwbaResult {
    /// Transition probability of the two-channel distorted-wave problem,
    /// `4K²/(1 + K²)²`.
    pub fn probability(&self) -> f64 {
        let k2 = self.k_if * self.k_if;
        4.0 * k2 / ((1.0 + k2) * (1.0 + k2))
    }
}

/// Radius where the effective potential has risen `attenuation` e-folds
/// above `e_local`, walking inward from `r_mid`; `None` if there is no wall.
fn wall_start<W: Fn(f64) -> f64>(w: W, r_mid: f64, attenuation: f64) -> Option<f64> {
    let dr = 0.01;
    let kappa = |r: f64| sqrt(w(r).max(0.0));
    let mut r = r_mid;
    let mut decay = 0.0;
    let mut prev = kappa(r);
    while decay < attenuation {
        r -= dr;
        if r <= dr {
            return None;
        }
        let next = kappa(r);
        decay += 0.5 * dr * (prev + next);
        prev = next;
    }
    Some(r)
}

/// DWBA K-matrix element for a channel pair at total energy `e_total`.
///
/// The inner limit of the overlap integral follows `settings.cutoff`.
pub fn pair_kmatrix<F: Fn(f64) -> [f64; 3]>(
    pair: &ChannelPair<F>,
    e_total: f64,
    settings: &DwbaSettings,
) -> Result<DwbaResult, DwbaError> {
    let c = pair.hbar2_2mu;
    let e = [e_total - pair.thresholds[0], e_total - pair.thresholds[1]];
    for &ei in &e {
        if !(ei > 0.0) {
            return Err(DwbaError::Closed(ei));
        }
    }
    let diag = |ch: usize, r: f64| (pair.interaction)(r)[ch];
    let start = |ch: usize| {
        let ll = (pair.partial_waves[ch] * (pair.partial_waves[ch] + 1)) as f64;
        wall_start(|r| (diag(ch, r) + c * ll / (r * r) - e[ch]) / c, settings.r_mid, settings.wall_attenuation)
    };
    let r_start = match (start(0), start(1)) {
        (Some(a), Some(b)) => a.min(b),
        _ => return Err(DwbaError::BadGrid("no repulsive wall to start from")),
    };
    let grid = RadialGrid::new(r_start, settings.r_max, settings.h)?;
    let fi = distorted_wave(|r| diag(0, r), pair.partial_waves[0], e[0], c, &grid)?;
    let ff = distorted_wave(|r| diag(1, r), pair.partial_waves[1], e[1], c, &grid)?;
    let cutoff = match settings.cutoff {
        Cutoff::TurningPoint => fi.turning_point.unwrap_or(r_start).max(ff.turning_point.unwrap_or(r_start)),
        Cutoff::GridStart => r_start,
    };
    let k_if = dwba_kmatrix(&fi, &ff, |r| (pair.interaction)(r)[2], cutoff)?;
    Ok(DwbaResult { k_if, k_initial: fi.k, k_final: ff.k, cutoff, tan_delta: [fi.tan_delta, ff.tan_delta] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_covers_interval() {
        let g = RadialGrid::new(2.0, 12.0, 0.3).unwrap();
        assert!((g.r_end() - 12.0).abs() < 1e-12);
        assert!(g.h <= 0.3);
        assert_eq!(g.index_at(2.0), 0);
        assert_eq!(g.index_at(g.r(5)), 5);
        assert!(RadialGrid::new(2.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn simpson_handles_odd_and_even_counts() {
        let h = 0.01;
        for n in [101usize, 102] {
            let v: alloc::vec::Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(2)).collect();
            let b = (n - 1) as f64 * h;
            assert!((simpson(&v, h) - b * b * b / 3.0).abs() < 1e-5);
        }
    }

    #[test]
    fn closed_channel_rejected() {
        let g = RadialGrid::new(1.0, 10.0, 0.1).unwrap();
        assert_eq!(distorted_wave(|_| 0.0, 0, -1e-3, 1.0, &g).unwrap_err(), DwbaError::Closed(-1e-3));
    }
}
