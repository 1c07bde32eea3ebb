//! Test-only numerics: quadrature nodes and spherical harmonics computed
//! without touching the crate's angular-momentum code.
#![allow(dead_code)]

use num_complex::Complex64;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Legendre polynomial P_l(x) by the three-term recurrence.
pub fn legendre(l: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return 1.0;
    }
    for k in 2..=l {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Associated Legendre P_l^m(x), m >= 0, Condon-Shortley phase included.
fn assoc_legendre(l: i32, m: i32, x: f64) -> f64 {
    let mut pmm = 1.0;
    let s = (1.0 - x * x).sqrt();
    for k in 1..=m {
        pmm *= -((2 * k - 1) as f64) * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut pll = 0.0;
    for ll in m + 2..=l {
        pll = ((2 * ll - 1) as f64 * x * pm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pm1;
        pm1 = pll;
    }
    pll
}

fn factorial(n: i32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Y_lm(θ, φ) with x = cos θ.
pub fn spherical_harmonic(l: i32, m: i32, x: f64, phi: f64) -> Complex64 {
    let am = m.abs();
    let norm = ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * factorial(l - am) / factorial(l + am)).sqrt();
    let y = norm * assoc_legendre(l, am, x) * Complex64::from_polar(1.0, am as f64 * phi);
    if m >= 0 {
        y
    } else if am % 2 == 0 {
        y.conj()
    } else {
        -y.conj()
    }
}

/// Product quadrature over the unit sphere: (x = cos θ, φ, weight).
pub fn sphere_grid(n_theta: usize, n_phi: usize) -> Vec<(f64, f64, f64)> {
    let (xs, ws) = gauss_legendre(n_theta);
    let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for (x, w) in xs.iter().zip(&ws) {
        for k in 0..n_phi {
            out.push((*x, k as f64 * dphi, w * dphi));
        }
    }
    out
}

/// Angular-momentum matrices (J_x, J_y, J_z) for spin j in the |j m> basis,
/// rows ordered m = -j..=j.
pub fn spin_matrices(j: i32) -> [nalgebra::DMatrix<Complex64>; 3] {
    let d = (2 * j + 1) as usize;
    let mut jp = nalgebra::DMatrix::<Complex64>::zeros(d, d);
    let mut jz = nalgebra::DMatrix::<Complex64>::zeros(d, d);
    for (i, m) in (-j..=j).enumerate() {
        jz[(i, i)] = Complex64::new(m as f64, 0.0);
        if m < j {
            jp[(i + 1, i)] = Complex64::new((((j - m) * (j + m + 1)) as f64).sqrt(), 0.0);
        }
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * Complex64::new(0.5, 0.0);
    let jy = (&jp - &jm) * Complex64::new(0.0, -0.5);
    [jx, jy, jz]
}

#[test]
fn quadrature_integrates_orthonormal_harmonics() {
    let grid = sphere_grid(12, 16);
    for (l1, m1, l2, m2) in [(2, 1, 2, 1), (3, -2, 3, -2), (2, 1, 4, 1), (1, 0, 1, 1)] {
        let s: Complex64 = grid
            .iter()
            .map(|&(x, p, w)| spherical_harmonic(l1, m1, x, p).conj() * spherical_harmonic(l2, m2, x, p) * w)
            .sum();
        let expected = if (l1, m1) == (l2, m2) { 1.0 } else { 0.0 };
        assert!((s - Complex64::new(expected, 0.0)).norm() < 1e-13);
    }
}
