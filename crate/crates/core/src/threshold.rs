//! Threshold laws for field-induced inelastic rates.
//!
//! Near threshold an `L_i → L_f` rate releasing `ΔE_B = ΔM_J g μ0 B` goes as
//! `K = K0 (E/E0)^{L_i} ((E + ΔE_B)/E0)^{L_f + 1/2}`, with `E0` the height of
//! the exit-channel centrifugal barrier.

use alloc::vec::Vec;

use crate::angmom::WignerCache;
use crate::dwba::block_pair;
use crate::math::{abs, exp, ln, powf, sqrt};
use crate::monomer::{threshold_energy, CaseBState, MonomerError, MonomerParams};
use crate::potential::PotentialModel;
use crate::propagator::Block;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ThresholdError {
    #[error("no samples inside the validity window")]
    EmptyWindow,
    #[error("invalid fit parameters: {0}")]
    BadParameters(&'static str),
    #[error(transparent)]
    Monomer(#[from] MonomerError),
}

/// Parameters of the one-constant fitting formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdFit {
    /// cm³/s.
    pub k0: f64,
    /// Exit-channel barrier height, K.
    pub e0: f64,
    pub l_i: u32,
    pub l_f: u32,
    /// `M_J - M_J'`, positive for energy-releasing transitions.
    pub delta_mj: i32,
    pub g_factor: f64,
    /// Bohr magneton, K/G.
    pub bohr_magneton: f64,
}

/// A formula value with its validity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitValue {
    pub rate: f64,
    /// False beyond `E + ΔE_B = E0`, where the value is an extrapolation.
    pub valid: bool,
}

impl ThresholdFit {
    /// The s → d case with the magnetic constants of `params`.
    pub fn s_to_d(k0: f64, e0: f64, delta_mj: i32, params: &MonomerParams) -> Self {
        Self {
            k0,
            e0,
            l_i: 0,
            l_f: 2,
            delta_mj,
            g_factor: params.g_factor,
            bohr_magneton: params.bohr_magneton,
        }
    }

    pub fn validate(&self) -> Result<(), ThresholdError> {
        if !(self.k0 > 0.0 && self.k0.is_finite()) {
            return Err(ThresholdError::BadParameters("K0 must be positive"));
        }
        if !(self.e0 > 0.0 && self.e0.is_finite()) {
            return Err(ThresholdError::BadParameters("E0 must be positive"));
        }
        Ok(())
    }

    /// `L_f + 1/2`.
    pub fn exit_exponent(&self) -> f64 {
        self.l_f as f64 + 0.5
    }

    /// Linear Zeeman release `ΔM_J g μ0 B`, K.
    pub fn release(&self, field: f64) -> f64 {
        self.delta_mj as f64 * self.g_factor * self.bohr_magneton * field
    }

    /// Energy-and-field dependence divided by `K0`.
    pub fn shape(&self, energy: f64, field: f64) -> f64 {
        let exit = (energy + self.release(field)).max(0.0) / self.e0;
        powf(energy / self.e0, self.l_i as f64) * powf(exit, self.exit_exponent())
    }

    pub fn in_window(&self, energy: f64, field: f64) -> bool {
        energy + self.release(field) <= self.e0
    }

    pub fn evaluate(&self, energy: f64, field: f64) -> FitValue {
        FitValue { rate: self.k0 * self.shape(energy, field), valid: self.in_window(energy, field) }
    }

    /// Field where the linear release alone reaches the barrier.
    pub fn linear_critical_field(&self) -> f64 {
        self.e0 / (self.delta_mj as f64 * self.g_factor * self.bohr_magneton)
    }
}

/// Maximum of `V(R) + c L(L+1)/R²` outside the well, K.
///
/// Scans `[r_lo, r_hi]` geometrically for the outermost interior maximum and
/// refines it by golden-section search. `None` for `L = 0` or when there is
/// no interior maximum.
pub fn barrier_height<V: Fn(f64) -> f64>(potential: V, l: u32, hbar2_2mu: f64, r_lo: f64, r_hi: f64) -> Option<f64> {
    if l == 0 {
        return None;
    }
    let ll = (l * (l + 1)) as f64;
    let f = |r: f64| potential(r) + hbar2_2mu * ll / (r * r);
    let ratio = 1.002;
    let n = (ln(r_hi / r_lo) / ln(ratio)) as usize;
    let rs: Vec<f64> = (0..=n).map(|i| r_lo * powf(ratio, i as f64)).collect();
    let vs: Vec<f64> = rs.iter().map(|&r| f(r)).collect();
    let peak = (1..n).rev().find(|&i| vs[i] > vs[i - 1] && vs[i] >= vs[i + 1])?;
    let (mut a, mut b) = (rs[peak - 1], rs[peak + 1]);
    let phi = 0.5 * (sqrt(5.0) - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-10 * b {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
    }
    Some(f(0.5 * (a + b)))
}

/// Closed-form barrier of a pure `-C6/R⁶` tail:
/// `(c L(L+1))^{3/2} · 2 / (3 √(3 C6))`.
pub fn dispersion_barrier(c6: f64, l: u32, hbar2_2mu: f64) -> f64 {
    let a = hbar2_2mu * (l * (l + 1)) as f64;
    2.0 * a * sqrt(a) / (3.0 * sqrt(3.0 * c6))
}

/// Barrier on the isotropic part of a surface.
pub fn model_barrier(model: &PotentialModel, l: u32, hbar2_2mu: f64) -> Option<f64> {
    barrier_height(|r| model.radial_coupling(0, r), l, hbar2_2mu, 3.0, 1e3)
}

/// Barrier on the diabatic curve of one channel of a block, measured from
/// that channel's threshold.
pub fn channel_barrier(block: &Block, channel: usize) -> Option<f64> {
    let pair = block_pair(block, channel, channel);
    let l = block.basis.channels[channel].l as u32;
    barrier_height(|r| (pair.interaction)(r)[0], l, pair.hbar2_2mu, 3.0, 1e3)
}

/// Field at which the exact level splitting `E_initial - E_final` reaches
/// `e0`, found by a 1 G scan and bisection. `None` if the splitting stays
/// below `e0` up to `b_max`.
pub fn critical_field(
    params: &MonomerParams,
    initial: CaseBState,
    final_state: CaseBState,
    e0: f64,
    b_max: f64,
    cache: &mut WignerCache,
) -> Result<Option<f64>, ThresholdError> {
    let mut gap = |b: f64| -> Result<f64, MonomerError> {
        Ok(threshold_energy(params, initial, b, cache)? - threshold_energy(params, final_state, b, cache)? - e0)
    };
    let step = 1.0;
    let mut lo = 0.0;
    if gap(lo)? >= 0.0 {
        return Ok(Some(0.0));
    }
    while lo < b_max {
        let hi = (lo + step).min(b_max);
        let g_hi = gap(hi)?;
        if g_hi >= 0.0 {
            let (mut a, mut b) = (lo, hi);
            while b - a > 1e-9 * b.max(1.0) {
                let m = 0.5 * (a + b);
                if gap(m)? < 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(Some(0.5 * (a + b)));
        }
        lo = hi;
    }
    Ok(None)
}

/// A measured or computed rate at one (E, B) point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSample {
    pub energy: f64,
    pub field: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct K0Fit {
    pub k0: f64,
    /// RMS of `ln K - ln K_fit` over the samples used.
    pub log_residual: f64,
    pub used: usize,
}

/// Least-squares `K0` on `ln K` with the shape of `template` fixed.
/// Samples outside the validity window or with non-positive rates are
/// skipped.
pub fn fit_k0(samples: &[RateSample], template: &ThresholdFit) -> Result<K0Fit, ThresholdError> {
    let logs: Vec<f64> = samples
        .iter()
        .filter(|s| s.rate > 0.0 && template.in_window(s.energy, s.field))
        .map(|s| ln(s.rate) - ln(template.shape(s.energy, s.field)))
        .collect();
    if logs.is_empty() {
        return Err(ThresholdError::EmptyWindow);
    }
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let rms = sqrt(logs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / logs.len() as f64);
    Ok(K0Fit { k0: exp(mean), log_residual: rms, used: logs.len() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub k0: f64,
    pub exponent: f64,
    pub used: usize,
}

/// Fit of `ln K = ln K0 + p ln((E + ΔE_B)/E0)` with `p` free; `L_i` from
/// the template is kept fixed.
pub fn fit_exponent(samples: &[RateSample], template: &ThresholdFit) -> Result<PowerFit, ThresholdError> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.rate > 0.0 && template.in_window(s.energy, s.field))
        .map(|s| {
            let x = ln((s.energy + template.release(s.field)) / template.e0);
            let y = ln(s.rate) - template.l_i as f64 * ln(s.energy / template.e0);
            (x, y)
        })
        .collect();
    if pts.len() < 2 {
        return Err(ThresholdError::EmptyWindow);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if !(sxx > 0.0) {
        return Err(ThresholdError::BadParameters("samples do not span the release axis"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let p = sxy / sxx;
    Ok(PowerFit { k0: exp(my - p * mx), exponent: p, used: pts.len() })
}

/// Pulls a rate known at `e_high` back to the barrier energy along the
/// zero-field threshold law: `K0 = K (E0/E)^{L_f + 1/2}`.
pub fn extrapolate_k0_from_high_t(rate_high: f64, e_high: f64, e0: f64, l_f: u32) -> f64 {
    rate_high * powf(e0 / e_high, l_f as f64 + 0.5)
}

/// Where a constant elastic rate beats the fitted loss by `ratio`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoolingWindow {
    /// Loss is too large even at threshold.
    Never,
    /// The criterion holds for collision energies below this value, K.
    Below(f64),
    /// The criterion holds over the whole range examined.
    Everywhere,
}

/// Energies at which `K_el / K_loss(E, B) > ratio`, scanning up to `e_max`.
pub fn cooling_window(fit: &ThresholdFit, k_el: f64, ratio: f64, field: f64, e_max: f64) -> CoolingWindow {
    let ok = |e: f64| k_el > ratio * fit.k0 * fit.shape(e, field);
    let e_min = 1e-15;
    if !ok(e_min) {
        return CoolingWindow::Never;
    }
    if ok(e_max) {
        return CoolingWindow::Everywhere;
    }
    let (mut a, mut b) = (ln(e_min), ln(e_max));
    while abs(b - a) > 1e-12 {
        let m = 0.5 * (a + b);
        if ok(exp(m)) {
            a = m;
        } else {
            b = m;
        }
    }
    CoolingWindow::Below(exp(0.5 * (a + b)))
}
