//! Adaptive Gauss-Kronrod (7, 15) integration.

use alloc::vec::Vec;

use crate::math::abs;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, abs((k - g) * h))
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    /// False when the interval budget ran out before the tolerance was met.
    pub converged: bool,
}

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol |I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Integral {
    const MAX_INTERVALS: usize = 2000;
    let (v, e) = kronrod(&mut f, a, b);
    let mut pieces: Vec<(f64, f64, f64, f64)> = alloc::vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > abs_tol.max(rel_tol * abs(total)) {
        if pieces.len() >= MAX_INTERVALS {
            return Integral { value: total, error: err, converged: false };
        }
        // bisect the worst interval
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, pv, pe) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod(&mut f, lo, mid);
        let (v2, e2) = kronrod(&mut f, mid, hi);
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
    Integral { value: total, error: err, converged: true }
}
