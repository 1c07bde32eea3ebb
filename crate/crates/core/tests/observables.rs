use std::f64::consts::PI;

use coldscat_core::angmom::WignerCache;
use coldscat_core::channels::{BasisSpec, Channel, Parity};
use coldscat_core::monomer::{CaseBState, MonomerParams};
use coldscat_core::observables::{
    cross_sections, log_grid, rate_constant, thermal_average, BlockResult, Extrapolation, ObservableError,
    SigmaTable,
};
use coldscat_core::potential::PotentialModel;
use coldscat_core::propagator::{s_from_k, solve, Block, SMatrix, StepPolicy};
use coldscat_core::units::{hbar2_over_2mu, reduced_mass, HELIUM3_AMU, OXYGEN17_DIMER_AMU};
use nalgebra::DMatrix;
use num_complex::Complex64;

const INITIAL: CaseBState = CaseBState { n: 0, j: 1, m_j: 1 };
const LOWER: CaseBState = CaseBState { n: 0, j: 1, m_j: 0 };

fn mu() -> f64 {
    reduced_mass(HELIUM3_AMU, OXYGEN17_DIMER_AMU)
}

/// Atomic-unit velocity, independent of the SI path used by the crate.
fn velocity_oracle(e_kelvin: f64, mu_amu: f64) -> f64 {
    const AU_VELOCITY_CM_S: f64 = 2.187_691_263_64e8;
    let mu_au = mu_amu * 1822.888_486_209;
    let e_au = e_kelvin / 315_775.024_804_07;
    (2.0 * e_au / mu_au).sqrt() * AU_VELOCITY_CM_S
}

fn bohr2_in_cm2() -> f64 {
    0.529_177_210_903e-8_f64.powi(2)
}

fn channel(state: CaseBState, l: i32, m_l: i32) -> Channel {
    Channel { state, l, m_l, threshold: 0.0 }
}

fn one_channel_block(k: f64, kmat: f64) -> BlockResult {
    let km = DMatrix::from_element(1, 1, kmat);
    BlockResult {
        m_total: 1,
        reduced_mass: mu(),
        channels: vec![channel(INITIAL, 0, 0)],
        s: SMatrix { open: vec![0], k: vec![k], s: s_from_k(&km), k_matrix: km },
    }
}

#[test]
fn single_channel_elastic_is_four_pi_sin2_over_k2() {
    let k = 0.02;
    for delta in [0.1, -0.7, 1.3] {
        let x = cross_sections(&[one_channel_block(k, f64::tan(delta))], INITIAL).unwrap();
        let expect = 4.0 * PI * delta.sin().powi(2) / (k * k) * bohr2_in_cm2();
        assert!((x.elastic() - expect).abs() < 1e-12 * expect);
        assert!(x.loss() == 0.0);
        assert!(x.loss_from_flux.abs() < 1e-12 * expect);
        assert!(x.elastic() <= 4.0 * x.unitarity_bound * (1.0 + 1e-12));
    }
}

#[test]
fn identity_s_matrix_gives_zero() {
    let x = cross_sections(&[one_channel_block(0.01, 0.0)], INITIAL).unwrap();
    assert_eq!(x.elastic(), 0.0);
    assert_eq!(x.loss(), 0.0);
}

#[test]
fn closed_initial_state_is_an_error() {
    let block = one_channel_block(0.01, 0.2);
    let err = cross_sections(&[block], LOWER).unwrap_err();
    assert_eq!(err, ObservableError::InitialClosed(LOWER));
}

#[test]
fn two_channel_rotation_splits_flux() {
    // S = [[cos 2θ, i sin 2θ], [i sin 2θ, cos 2θ]] from K = tan θ σ_x
    let theta: f64 = 0.3;
    let km = DMatrix::from_row_slice(2, 2, &[0.0, theta.tan(), theta.tan(), 0.0]);
    let s = s_from_k(&km);
    let k = 0.05;
    let block = BlockResult {
        m_total: 1,
        reduced_mass: mu(),
        channels: vec![channel(LOWER, 2, 1), channel(INITIAL, 0, 0)],
        s: SMatrix { open: vec![0, 1], k: vec![0.08, k], s, k_matrix: km },
    };
    let x = cross_sections(&[block], INITIAL).unwrap();
    let pref = PI / (k * k) * bohr2_in_cm2();
    let p = (2.0 * theta).sin().powi(2);
    assert!((x.to(LOWER) - pref * p).abs() < 1e-12 * pref);
    assert!((x.loss() - x.loss_from_flux).abs() < 1e-12 * pref);
    let el = (Complex64::new((2.0 * theta).cos(), 0.0) - 1.0).norm_sqr() * pref;
    assert!((x.elastic() - el).abs() < 1e-12 * pref);
}

#[test]
fn rate_conversion_matches_atomic_units() {
    for e in [1e-6, 1e-3, 2.0] {
        let sigma = 3e-14;
        let k = rate_constant(sigma, e, mu());
        let expect = velocity_oracle(e, mu()) * sigma;
        assert!((k / expect - 1.0).abs() < 1e-8, "E={e}");
    }
    // fixed σ: K ∝ √E
    let r = rate_constant(1e-15, 4e-4, mu()) / rate_constant(1e-15, 1e-4, mu());
    assert!((r - 2.0).abs() < 1e-12);
}

fn mean_speed(t: f64) -> f64 {
    (8.0 / PI).sqrt() * velocity_oracle(t, mu()) / 2f64.sqrt()
}

#[test]
fn constant_cross_section_averages_exactly() {
    let grid = log_grid(1e-6, 10.0, 25);
    let table = SigmaTable::new(grid.clone(), vec![2.5e-15; grid.len()]).unwrap();
    for t in [1e-5, 0.01, 3.0, 50.0] {
        let r = thermal_average(&table, t, mu(), Extrapolation::ConstantCrossSection).unwrap();
        let expect = 2.5e-15 * mean_speed(t);
        assert!((r.rate / expect - 1.0).abs() < 1e-9, "T={t}: {} vs {expect}", r.rate);
        assert_eq!(r.extrapolation_warning, t >= 50.0);
    }
}

#[test]
fn linear_cross_section_averages_to_two_kt() {
    // σ = cE: <vσ> = 2 c k_B T (8 k_B T/π μ)^{1/2}
    let c = 1e-14;
    let grid = log_grid(1e-7, 1e3, 25);
    let table = SigmaTable::new(grid.clone(), grid.iter().map(|e| c * e).collect()).unwrap();
    for t in [1e-4, 0.1, 5.0] {
        let r = thermal_average(&table, t, mu(), Extrapolation::Truncate).unwrap();
        let expect = 2.0 * c * t * mean_speed(t);
        assert!((r.rate / expect - 1.0).abs() < 1e-8, "T={t}");
        assert!(r.converged);
    }
}

#[test]
fn resonance_is_smoothed_like_a_dense_oracle() {
    let (er, gamma) = (0.02, 1e-3);
    let sigma = |e: f64| 1e-14 * (1.0 + 1.0 / (1.0 + ((e - er) / (0.5 * gamma)).powi(2)));
    let grid = log_grid(1e-6, 10.0, 400);
    let table = SigmaTable::new(grid.clone(), grid.iter().map(|&e| sigma(e)).collect()).unwrap();
    for t in [0.005, 0.02, 0.2] {
        // trapezoid on a uniform x grid with the analytic σ
        let n = 2_000_000;
        let x_max = 200.0;
        let dx = x_max / n as f64;
        let integral: f64 = (1..n).map(|i| {
            let x = i as f64 * dx;
            x * sigma(x * t) * (-x).exp()
        }).sum::<f64>() * dx;
        let expect = integral * mean_speed(t);
        let r = thermal_average(&table, t, mu(), Extrapolation::ConstantCrossSection).unwrap();
        assert!((r.rate / expect - 1.0).abs() < 1e-4, "T={t}: {} vs {expect}", r.rate);
    }
}

#[test]
fn coupled_block_cross_sections_are_consistent() {
    let spec = BasisSpec { l_max: 2, n_max: 2, m_total: 1, parity: Parity::Even };
    let block = Block::new(
        &MonomerParams::default(),
        spec,
        30.0,
        mu(),
        &PotentialModel::he_o2_model(),
        &mut WignerCache::new(),
    )
    .unwrap();
    let e = 1e-4;
    let i = block.basis.find(INITIAL, 0, 0).unwrap();
    let e_tot = block.basis.channels[i].threshold + e;
    let s = solve(&block, e_tot, &StepPolicy::default()).unwrap();
    let x = cross_sections(&[BlockResult::new(&block.basis, s)], INITIAL).unwrap();
    assert!((x.collision_energy / e - 1.0).abs() < 1e-9);
    assert!((x.wavenumber - (e / hbar2_over_2mu(mu())).sqrt()).abs() < 1e-12);
    assert!(x.loss() > 0.0 && x.elastic() > x.loss());
    assert!(x.additivity_defect() < 1e-6, "defect {}", x.additivity_defect());
    assert!(x.elastic() + x.loss() <= 4.0 * x.unitarity_bound);
}
