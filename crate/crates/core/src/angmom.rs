//! Wigner 3-j and 6-j symbols, Clebsch-Gordan coefficients and the reduced
//! matrix elements used by the Hamiltonian builders.
//!
//! Only integer angular momenta occur in this problem. Symbols are evaluated
//! with the Racah single-sum formulas: the first term comes from log
//! factorials, the rest follow from the exact term ratio, and the alternating
//! sum is accumulated with Neumaier compensation.
//!
//! Phase conventions are Condon-Shortley throughout:
//! `<j1 m1 j2 m2 | J M> = (-1)^(j1 - j2 + M) sqrt(2J + 1) (j1 j2 J; m1 m2 -M)`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::math::{exp, sqrt};

/// An angular momentum quantum number stored as `2j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AngMom {
    two_j: u32,
}

impl AngMom {
    pub const fn integer(j: u32) -> Self {
        Self { two_j: 2 * j }
    }

    pub const fn two_j(self) -> u32 {
        self.two_j
    }

    /// `j` itself; panics for half-integer values, which never occur here.
    pub fn value(self) -> i32 {
        assert!(self.two_j % 2 == 0, "half-integer angular momentum");
        (self.two_j / 2) as i32
    }

    pub fn multiplicity(self) -> u32 {
        self.two_j + 1
    }

    /// Allowed projections `-j..=j`.
    pub fn projections(self) -> impl Iterator<Item = i32> {
        let j = self.value();
        -j..=j
    }
}

/// Triangle condition `|a - b| <= c <= a + b` for non-negative integers.
#[inline]
pub fn triangle(a: i32, b: i32, c: i32) -> bool {
    a >= 0 && b >= 0 && c >= 0 && c >= (a - b).abs() && c <= a + b
}

#[inline]
fn phase(n: i32) -> f64 {
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

fn ln_factorial(n: i32) -> f64 {
    debug_assert!(n >= 0);
    libm::lgamma(f64::from(n) + 1.0)
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if crate::math::abs(self.sum) >= crate::math::abs(x) {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

/// Wigner 3-j symbol `(j1 j2 j3; m1 m2 m3)` for integer arguments.
///
/// Returns 0 whenever a selection rule fails.
pub fn wigner_3j(j1: i32, j2: i32, j3: i32, m1: i32, m2: i32, m3: i32) -> f64 {
    if m1 + m2 + m3 != 0 || !triangle(j1, j2, j3) {
        return 0.0;
    }
    if m1.abs() > j1 || m2.abs() > j2 || m3.abs() > j3 {
        return 0.0;
    }
    // (j1 j2 j3; 0 0 0) vanishes for odd j1 + j2 + j3
    if m1 == 0 && m2 == 0 && m3 == 0 && (j1 + j2 + j3) % 2 != 0 {
        return 0.0;
    }

    let t_min = 0.max(j2 - j3 - m1).max(j1 - j3 + m2);
    let t_max = (j1 + j2 - j3).min(j1 - m1).min(j2 + m2);
    if t_min > t_max {
        return 0.0;
    }

    let ln_prefactor = 0.5
        * (ln_factorial(j1 + j2 - j3) + ln_factorial(j1 - j2 + j3) + ln_factorial(-j1 + j2 + j3)
            - ln_factorial(j1 + j2 + j3 + 1)
            + ln_factorial(j1 + m1)
            + ln_factorial(j1 - m1)
            + ln_factorial(j2 + m2)
            + ln_factorial(j2 - m2)
            + ln_factorial(j3 + m3)
            + ln_factorial(j3 - m3));

    let denoms = |t: i32| {
        [
            t,
            j3 - j2 + t + m1,
            j3 - j1 + t - m2,
            j1 + j2 - j3 - t,
            j1 - t - m1,
            j2 - t + m2,
        ]
    };
    let d = denoms(t_min);
    let ln_first = ln_prefactor - d.iter().map(|&x| ln_factorial(x)).sum::<f64>();

    // terms relative to the first one; the ratio between neighbours is exact
    let mut sum = CompensatedSum::default();
    let mut term = 1.0;
    for t in t_min..=t_max {
        sum.add(term);
        let d = denoms(t);
        let num = (d[3] * d[4] * d[5]) as f64;
        let den = ((d[0] + 1) * (d[1] + 1) * (d[2] + 1)) as f64;
        term *= -num / den;
    }

    phase(j1 - j2 - m3) * phase(t_min) * exp(ln_first) * sum.value()
}

fn ln_delta(a: i32, b: i32, c: i32) -> f64 {
    ln_factorial(a + b - c) + ln_factorial(a - b + c) + ln_factorial(-a + b + c)
        - ln_factorial(a + b + c + 1)
}

/// Wigner 6-j symbol `{j1 j2 j3; j4 j5 j6}` for integer arguments.
pub fn wigner_6j(j1: i32, j2: i32, j3: i32, j4: i32, j5: i32, j6: i32) -> f64 {
    if !(triangle(j1, j2, j3) && triangle(j1, j5, j6) && triangle(j4, j2, j6) && triangle(j4, j5, j3))
    {
        return 0.0;
    }
    let alpha = [j1 + j2 + j3, j1 + j5 + j6, j4 + j2 + j6, j4 + j5 + j3];
    let beta = [j1 + j2 + j4 + j5, j2 + j3 + j5 + j6, j3 + j1 + j6 + j4];
    let t_min = *alpha.iter().max().unwrap();
    let t_max = *beta.iter().min().unwrap();
    if t_min > t_max {
        return 0.0;
    }

    let ln_prefactor = 0.5
        * (ln_delta(j1, j2, j3) + ln_delta(j1, j5, j6) + ln_delta(j4, j2, j6) + ln_delta(j4, j5, j3));
    let ln_first = ln_prefactor + ln_factorial(t_min + 1)
        - alpha.iter().map(|&a| ln_factorial(t_min - a)).sum::<f64>()
        - beta.iter().map(|&b| ln_factorial(b - t_min)).sum::<f64>();

    let mut sum = CompensatedSum::default();
    let mut term = 1.0;
    for t in t_min..=t_max {
        sum.add(term);
        let num = ((t + 2) * (beta[0] - t) * (beta[1] - t) * (beta[2] - t)) as f64;
        let den = ((t + 1 - alpha[0]) * (t + 1 - alpha[1]) * (t + 1 - alpha[2]) * (t + 1 - alpha[3]))
            as f64;
        term *= -num / den;
    }

    phase(t_min) * exp(ln_first) * sum.value()
}

/// Clebsch-Gordan coefficient `<j1 m1 j2 m2 | j3 m3>`.
pub fn clebsch_gordan(j1: i32, m1: i32, j2: i32, m2: i32, j3: i32, m3: i32) -> f64 {
    if m1 + m2 != m3 {
        return 0.0;
    }
    phase(j1 - j2 + m3) * sqrt((2 * j3 + 1) as f64) * wigner_3j(j1, j2, j3, m1, m2, -m3)
}

/// `<l' || C^k || l>` for the renormalised spherical harmonic `C^k`.
pub fn reduced_spherical_harmonic(l_prime: i32, k: i32, l: i32) -> f64 {
    phase(l_prime)
        * sqrt(((2 * l_prime + 1) * (2 * l + 1)) as f64)
        * wigner_3j(l_prime, k, l, 0, 0, 0)
}

/// Memoised 3-j and 6-j evaluation.
///
/// Owned per worker: the builders take `&mut WignerCache`, so no locking is
/// needed and concurrent builds never share one.
#[derive(Debug, Default, Clone)]
pub struct WignerCache {
    three_j: BTreeMap<[i32; 6], f64>,
    six_j: BTreeMap<[i32; 6], f64>,
}

impl WignerCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn wigner_3j(&mut self, j1: i32, j2: i32, j3: i32, m1: i32, m2: i32, m3: i32) -> f64 {
        *self
            .three_j
            .entry([j1, j2, j3, m1, m2, m3])
            .or_insert_with(|| wigner_3j(j1, j2, j3, m1, m2, m3))
    }

    pub fn wigner_6j(&mut self, j1: i32, j2: i32, j3: i32, j4: i32, j5: i32, j6: i32) -> f64 {
        *self
            .six_j
            .entry([j1, j2, j3, j4, j5, j6])
            .or_insert_with(|| wigner_6j(j1, j2, j3, j4, j5, j6))
    }

    pub fn len(&self) -> usize {
        self.three_j.len() + self.six_j.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All `(m1, m2)` pairs with `m1 + m2 = m`, handy for coupling loops.
pub fn projection_pairs(j1: i32, j2: i32, m: i32) -> Vec<(i32, i32)> {
    (-j1..=j1)
        .filter_map(|m1| {
            let m2 = m - m1;
            (m2.abs() <= j2).then_some((m1, m2))
        })
        .collect()
}
