//! Riccati-Bessel functions for asymptotic matching.
//!
//! `ĵ_l(x) = x j_l(x) ~ sin(x - lπ/2)`, `n̂_l(x) = x y_l(x) ~ -cos(x - lπ/2)`.

use alloc::vec;

use crate::math::{abs, cos, sin};

/// Values and x-derivatives of `ĵ_l` and `n̂_l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiPair {
    pub j: f64,
    pub dj: f64,
    pub n: f64,
    pub dn: f64,
}

/// Spherical Bessel `j_0 .. j_{l+1}` at `x > 0` by Miller's downward recurrence.
fn spherical_j(l: usize, x: f64) -> alloc::vec::Vec<f64> {
    let top = l + 1;
    let start = top + 20 + (x as usize) + (libm::sqrt(40.0 * (top as f64 + x)) as usize);
    let mut f = vec![0.0; start + 2];
    f[start] = 1e-300;
    for k in (1..=start).rev() {
        f[k - 1] = (2 * k + 1) as f64 / x * f[k] - f[k + 1];
        if abs(f[k - 1]) > 1e250 {
            let s = 1e-250;
            for v in f.iter_mut().skip(k - 1) {
                *v *= s;
            }
        }
    }
    let j0 = sin(x) / x;
    let j1 = sin(x) / (x * x) - cos(x) / x;
    let scale = if abs(j0) > abs(j1) { j0 / f[0] } else { j1 / f[1] };
    f.truncate(top + 1);
    for v in &mut f {
        *v *= scale;
    }
    f
}

/// Spherical Neumann `y_0 .. y_{l+1}` by upward recurrence.
fn spherical_y(l: usize, x: f64) -> alloc::vec::Vec<f64> {
    let mut y = vec![0.0; l + 2];
    y[0] = -cos(x) / x;
    y[1] = -cos(x) / (x * x) - sin(x) / x;
    for k in 1..=l {
        y[k + 1] = (2 * k + 1) as f64 / x * y[k] - y[k - 1];
    }
    y
}

pub fn riccati_bessel(l: u32, x: f64) -> RiccatiPair {
    let l = l as usize;
    let js = spherical_j(l, x);
    let ys = spherical_y(l, x);
    // d/dx [x f_l] = x f_{l-1} - l f_l
    let lf = l as f64;
    let j = x * js[l];
    let n = x * ys[l];
    let (dj, dn) = if l == 0 {
        (cos(x), sin(x))
    } else {
        (x * js[l - 1] - lf * js[l], x * ys[l - 1] - lf * ys[l])
    };
    RiccatiPair { j, dj, n, dn }
}

/// `d/dx ln(x k_l(x))` for the exponentially decaying modified spherical
/// Bessel function `k_l`.
pub fn decaying_log_derivative(l: u32, x: f64) -> f64 {
    // s_l = e^x k_l(x) up to a constant; s_{l+1} = s_{l-1} + (2l+1)/x s_l
    let mut s0 = 1.0 / x;
    let mut s1 = s0 * (1.0 + 1.0 / x);
    for k in 1..=l as usize {
        let s2 = s0 + (2 * k + 1) as f64 / x * s1;
        s0 = s1;
        s1 = s2;
    }
    // now s0 = s_l, s1 = s_{l+1}; k_l' = -k_{l+1} + l/x k_l
    1.0 / x + l as f64 / x - s1 / s0
}

/// `d/dx ln(x i_l(x))` for the regular, exponentially growing modified
/// spherical Bessel function.
pub fn growing_log_derivative(l: u32, x: f64) -> f64 {
    // ratio r_l = i_{l+1}/i_l by a backward continued fraction
    let top = l as usize + 30 + (x as usize);
    let mut r = 0.0;
    for k in (l as usize + 1..=top).rev() {
        r = 1.0 / ((2 * k + 1) as f64 / x + r);
    }
    // i_l' = i_{l+1} + l/x i_l
    1.0 / x + l as f64 / x + r
}
