//! Adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Densities in this crate are only piecewise smooth, so callers pass the
//! known breakpoints and each smooth piece is integrated separately. Infinite
//! endpoints are mapped onto a finite interval with `z = a + t / (1 - t)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

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
    0.209_482_141_084_727_8,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-15,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

struct Piece {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let s = f(c - h * x) + f(c + h * x);
        kronrod += w * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

impl Quadrature {
    /// Integrates `f` over `[lo, hi]`; either endpoint may be infinite.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, lo: f64, hi: f64) -> Estimate {
        self.integrate_dyn(&f, lo, hi)
    }

    fn integrate_dyn(&self, f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> Estimate {
        if lo == hi {
            return Estimate { value: 0.0, error: 0.0 };
        }
        if lo > hi {
            let e = self.integrate_dyn(f, hi, lo);
            return Estimate { value: -e.value, error: e.error };
        }
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => self.adaptive(f, lo, hi),
            (true, false) => self.adaptive(
                &|t: f64| {
                    let s = 1.0 - t;
                    f(lo + t / s) / (s * s)
                },
                0.0,
                1.0,
            ),
            (false, true) => self.adaptive(
                &|t: f64| {
                    let s = 1.0 - t;
                    f(hi - t / s) / (s * s)
                },
                0.0,
                1.0,
            ),
            (false, false) => {
                let a = self.integrate_dyn(f, f64::NEG_INFINITY, 0.0);
                let b = self.integrate_dyn(f, 0.0, f64::INFINITY);
                Estimate {
                    value: a.value + b.value,
                    error: a.error + b.error,
                }
            }
        }
    }

    /// Integrates over `[lo, hi]` split at every breakpoint strictly inside it.
    pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
        &self,
        f: F,
        lo: f64,
        hi: f64,
        breaks: &[f64],
    ) -> Estimate {
        let mut cuts: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|b| *b > lo && *b < hi)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = Estimate { value: 0.0, error: 0.0 };
        let mut a = lo;
        for b in cuts.into_iter().chain(std::iter::once(hi)) {
            let e = self.integrate_dyn(&f, a, b);
            total.value += e.value;
            total.error += e.error;
            a = b;
        }
        total
    }

    fn adaptive<F: Fn(f64) -> f64 + ?Sized>(&self, f: &F, lo: f64, hi: f64) -> Estimate {
        let (value, error) = gk15(f, lo, hi);
        let mut heap = BinaryHeap::new();
        heap.push(Piece { lo, hi, value, error });
        let mut total = value;
        let mut total_err = error;
        while total_err > self.abs_tol.max(self.rel_tol * total.abs()) && heap.len() < self.max_intervals {
            let Some(worst) = heap.pop() else { break };
            let mid = 0.5 * (worst.lo + worst.hi);
            if mid <= worst.lo || mid >= worst.hi {
                heap.push(worst);
                break;
            }
            let (v1, e1) = gk15(f, worst.lo, mid);
            let (v2, e2) = gk15(f, mid, worst.hi);
            total += v1 + v2 - worst.value;
            total_err += e1 + e2 - worst.error;
            heap.push(Piece { lo: worst.lo, hi: mid, value: v1, error: e1 });
            heap.push(Piece { lo: mid, hi: worst.hi, value: v2, error: e2 });
        }
        // Re-sum to shed the drift of the running updates.
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        Estimate { value, error }
    }
}

/// Integral with default tolerances.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    Quadrature::default().integrate(f, lo, hi).value
}
