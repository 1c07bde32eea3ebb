//! Unit system and physical constants.
//!
//! Energies are in kelvin (E / k_B), lengths in bohr, fields in gauss and
//! masses in unified atomic mass units. Cross sections and rate constants are
//! converted to CGS only at the observables boundary.

use crate::math::sqrt;

/// Hartree energy in kelvin.
pub const HARTREE_K: f64 = 315_775.024_804_07;
/// Unified atomic mass unit in electron masses.
pub const AMU_IN_ELECTRON_MASSES: f64 = 1_822.888_486_209;
/// Bohr radius in centimetres.
pub const BOHR_CM: f64 = 0.529_177_210_903e-8;
/// Boltzmann constant, J/K.
pub const BOLTZMANN_J_PER_K: f64 = 1.380_649e-23;
/// Unified atomic mass unit, kg.
pub const AMU_KG: f64 = 1.660_539_066_60e-27;
/// Bohr magneton over k_B in K/G.
pub const BOHR_MAGNETON_K_PER_GAUSS: f64 = 6.717_138_15e-5;
/// 1 K expressed in cm^-1.
pub const WAVENUMBER_PER_KELVIN: f64 = 0.695_034_800;

/// `hbar^2 / (2 mu)` in K bohr^2 for a reduced mass in amu.
pub fn hbar2_over_2mu(reduced_mass_amu: f64) -> f64 {
    HARTREE_K / (2.0 * reduced_mass_amu * AMU_IN_ELECTRON_MASSES)
}

/// Reduced mass of two bodies, amu.
pub fn reduced_mass(m1_amu: f64, m2_amu: f64) -> f64 {
    m1_amu * m2_amu / (m1_amu + m2_amu)
}

/// Wavenumber (1/bohr) for kinetic energy `e_k` (K); zero for closed channels.
pub fn wavenumber(kinetic_k: f64, reduced_mass_amu: f64) -> f64 {
    if kinetic_k <= 0.0 {
        0.0
    } else {
        sqrt(kinetic_k / hbar2_over_2mu(reduced_mass_amu))
    }
}

/// Relative velocity in cm/s for kinetic energy in K.
pub fn velocity_cm_per_s(kinetic_k: f64, reduced_mass_amu: f64) -> f64 {
    100.0 * sqrt(2.0 * kinetic_k * BOLTZMANN_J_PER_K / (reduced_mass_amu * AMU_KG))
}

pub fn bohr2_to_cm2(x: f64) -> f64 {
    x * BOHR_CM * BOHR_CM
}

pub fn kelvin_to_wavenumber(e_k: f64) -> f64 {
    e_k * WAVENUMBER_PER_KELVIN
}

/// Mass of 3He in amu.
pub const HELIUM3_AMU: f64 = 3.016_029_322;
/// Mass of the 17O2 molecule in amu.
pub const OXYGEN17_DIMER_AMU: f64 = 2.0 * 16.999_131_757;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinetic_scale_against_si() {
        // hbar^2 / (2 mu a0^2 k_B) evaluated directly from SI constants
        let hbar = 1.054_571_817e-34;
        let a0 = 0.529_177_210_903e-10;
        let mu = 2.77;
        let si = hbar * hbar / (2.0 * mu * AMU_KG * a0 * a0 * BOLTZMANN_J_PER_K);
        let rel = (hbar2_over_2mu(mu) - si).abs() / si;
        assert!(rel < 1e-8, "rel = {rel}");
    }

    #[test]
    fn velocity_is_hbar_k_over_mu() {
        let hbar = 1.054_571_817e-34;
        let mu = 2.77;
        let e = 1e-3;
        let k_per_m = wavenumber(e, mu) / (BOHR_CM / 100.0);
        let v = 100.0 * hbar * k_per_m / (mu * AMU_KG);
        let rel = (v - velocity_cm_per_s(e, mu)).abs() / v;
        assert!(rel < 1e-8);
    }

    #[test]
    fn closed_channel_has_zero_wavenumber() {
        assert_eq!(wavenumber(-1.0, 3.0), 0.0);
    }
}
