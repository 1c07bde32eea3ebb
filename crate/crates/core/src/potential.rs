//! Model atom-molecule interaction `V(R, θ) = Σ_λ V_λ(R) P_λ(cos θ)`.
//!
//! Radial strengths are in kelvin, distances in bohr. Only even λ are
//! accepted (homonuclear molecule) and the isotropic term must be present.

use alloc::vec::Vec;

use crate::math::{cos, exp, powi};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PotentialError {
    #[error("anisotropy order λ = {0} is odd; a homonuclear molecule only has even terms")]
    OddOrder(u32),
    #[error("the isotropic λ = 0 term is missing")]
    MissingIsotropic,
    #[error("radial parameters for λ = {0} are not finite or have the wrong sign")]
    BadParameters(u32),
    #[error("R = {0} bohr is outside the domain R > 0")]
    Domain(f64),
}

/// Radial form of one Legendre component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialForm {
    /// `C12 / R^12 - C6 / R^6`.
    LennardJones { c12: f64, c6: f64 },
    /// `D_e [(1 - exp(-a (R - R_e)))^2 - 1]`.
    Morse { depth: f64, a: f64, r_e: f64 },
    /// `A exp(-b R) - C6 / R^6`.
    DispersionWall { c6: f64, a: f64, b: f64 },
}

impl RadialForm {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            RadialForm::LennardJones { c12, c6 } => {
                let r6 = powi(r, -6);
                c12 * r6 * r6 - c6 * r6
            }
            RadialForm::Morse { depth, a, r_e } => {
                let e = 1.0 - exp(-a * (r - r_e));
                depth * (e * e - 1.0)
            }
            RadialForm::DispersionWall { c6, a, b } => a * exp(-b * r) - c6 * powi(r, -6),
        }
    }

    /// Leading long-range dispersion coefficient (0 for Morse).
    pub fn c6(&self) -> f64 {
        match *self {
            RadialForm::LennardJones { c6, .. } | RadialForm::DispersionWall { c6, .. } => c6,
            RadialForm::Morse { .. } => 0.0,
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            RadialForm::LennardJones { c12, c6 } => c12.is_finite() && c6.is_finite() && c12 >= 0.0,
            RadialForm::Morse { depth, a, r_e } => {
                depth.is_finite() && a.is_finite() && r_e.is_finite() && a > 0.0 && r_e > 0.0
            }
            RadialForm::DispersionWall { c6, a, b } => {
                c6.is_finite() && a.is_finite() && b.is_finite() && b > 0.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialTerm {
    pub lambda: u32,
    pub radial: RadialForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialModel {
    terms: Vec<PotentialTerm>,
}

/// Dispersion coefficient of the default He–O₂-like surface, K bohr^6.
///
/// Chosen so that the d-wave barrier of the isotropic term is 0.59 K for
/// the ³He–¹⁷O₂ reduced mass.
pub const DEFAULT_C6: f64 = 2.816_485_5e6;
/// Position of the isotropic minimum of the default surface, bohr.
pub const DEFAULT_R_MIN: f64 = 6.0;
/// Long-range strength of the default λ = 2 anisotropy relative to λ = 0.
pub const DEFAULT_ANISOTROPY: f64 = 0.15;
/// Exponent of the repulsive part of the default anisotropy, 1/bohr.
pub const DEFAULT_ANISOTROPY_RANGE: f64 = 2.0;
/// Radius where the default anisotropy changes sign, bohr.
pub const DEFAULT_ANISOTROPY_NODE: f64 = 6.3;

impl PotentialModel {
    pub fn new(mut terms: Vec<PotentialTerm>) -> Result<Self, PotentialError> {
        for t in &terms {
            if t.lambda % 2 != 0 {
                return Err(PotentialError::OddOrder(t.lambda));
            }
            if !t.radial.is_valid() {
                return Err(PotentialError::BadParameters(t.lambda));
            }
        }
        if !terms.iter().any(|t| t.lambda == 0) {
            return Err(PotentialError::MissingIsotropic);
        }
        terms.sort_by_key(|t| t.lambda);
        Ok(Self { terms })
    }

    /// Lennard-Jones isotropic well of about 30 K at 6 bohr plus a λ = 2
    /// term that is repulsive inside 6.3 bohr and carries 15 % of the
    /// dispersion outside. The node puts an s/d interference zero of the
    /// inelastic coupling at a release of roughly half a kelvin.
    pub fn he_o2_model() -> Self {
        let c6 = DEFAULT_C6;
        let c12 = c6 * powi(DEFAULT_R_MIN, 6) / 2.0;
        let c6_2 = DEFAULT_ANISOTROPY * c6;
        let b = DEFAULT_ANISOTROPY_RANGE;
        let a = c6_2 * powi(DEFAULT_ANISOTROPY_NODE, -6) * exp(b * DEFAULT_ANISOTROPY_NODE);
        Self::new(alloc::vec![
            PotentialTerm { lambda: 0, radial: RadialForm::LennardJones { c12, c6 } },
            PotentialTerm { lambda: 2, radial: RadialForm::DispersionWall { c6: c6_2, a, b } },
        ])
        .expect("default surface is valid")
    }

    /// Same surface without its anisotropy.
    pub fn isotropic_part(&self) -> Self {
        Self { terms: self.terms.iter().copied().filter(|t| t.lambda == 0).collect() }
    }

    pub fn terms(&self) -> &[PotentialTerm] {
        &self.terms
    }

    /// Distinct λ values present, ascending.
    pub fn orders(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.terms.iter().map(|t| t.lambda).collect();
        out.dedup();
        out
    }

    pub fn max_order(&self) -> u32 {
        self.terms.iter().map(|t| t.lambda).max().unwrap_or(0)
    }

    /// `V_λ(R)`; zero when the model has no term of that order.
    pub fn radial_coupling(&self, lambda: u32, r: f64) -> f64 {
        self.terms.iter().filter(|t| t.lambda == lambda).map(|t| t.radial.value(r)).sum()
    }

    /// `V(R, θ)`.
    pub fn evaluate(&self, r: f64, theta: f64) -> Result<f64, PotentialError> {
        if !(r > 0.0) {
            return Err(PotentialError::Domain(r));
        }
        let x = cos(theta);
        Ok(self.terms.iter().map(|t| t.radial.value(r) * legendre(t.lambda, x)).sum())
    }

    /// Upper bound on `|V(R, θ)|` over all θ, using `|P_λ| <= 1`.
    pub fn tail_bound(&self, r: f64) -> f64 {
        self.terms.iter().map(|t| t.radial.value(r).abs()).sum()
    }

    /// Isotropic long-range coefficient.
    pub fn isotropic_c6(&self) -> f64 {
        self.terms.iter().filter(|t| t.lambda == 0).map(|t| t.radial.c6()).sum()
    }
}

/// Legendre polynomial `P_l(x)`.
pub fn legendre(l: u32, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return 1.0;
    }
    for k in 2..=l {
        let k = f64::from(k);
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    p1
}
