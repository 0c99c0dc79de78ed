use serde::{Deserialize, Serialize};

use super::{DensitySpec, EvalGrid, Family};

/// Zero threshold used for grid-evaluated piecewise specs.
pub const PIECEWISE_TAU_ZERO: f64 = 1e-300;
/// A strict local minimum below this fraction of the peak density counts as a
/// vanishing point.
pub const DEFAULT_TAU_VANISH: f64 = 1e-9;

const BISECT_ITERS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ZeroInterval {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Maximal intervals (within the grid domain) where the density is at most
/// `τ_zero`. Runs shorter than one grid step are isolated points (acnodes):
/// they are listed separately and contribute nothing to `total_measure`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSet {
    pub intervals: Vec<ZeroInterval>,
    pub acnodes: Vec<f64>,
    pub acnode_count: usize,
    pub total_measure: f64,
}

impl ZeroSet {
    fn from_parts(raw: Vec<ZeroInterval>, step: f64) -> Self {
        let (intervals, short): (Vec<_>, Vec<_>) = raw.into_iter().partition(|iv| iv.len() >= step);
        let acnodes: Vec<f64> = short.iter().map(|iv| 0.5 * (iv.lo + iv.hi)).collect();
        Self {
            total_measure: intervals.iter().map(ZeroInterval::len).sum(),
            acnode_count: acnodes.len(),
            intervals,
            acnodes,
        }
    }

    pub fn is_null(&self) -> bool {
        self.total_measure == 0.0
    }

    /// The zero set restricted to `[lo, hi]`.
    pub fn clipped(&self, lo: f64, hi: f64) -> Vec<ZeroInterval> {
        self.intervals
            .iter()
            .filter_map(|iv| {
                let a = iv.lo.max(lo);
                let b = iv.hi.min(hi);
                (a < b).then_some(ZeroInterval { lo: a, hi: b })
            })
            .collect()
    }
}

pub(super) fn zero_set(spec: &DensitySpec, grid: &EvalGrid, tau_zero: f64) -> ZeroSet {
    match spec.family() {
        Family::Laplace { .. } | Family::Gaussian { .. } | Family::Staircase { .. } => {
            ZeroSet::from_parts(Vec::new(), grid.step())
        }
        Family::Uniform { lo, hi } => {
            let mut raw = Vec::new();
            if grid.lo() < *lo {
                raw.push(ZeroInterval { lo: grid.lo(), hi: lo.min(grid.hi()) });
            }
            if grid.hi() > *hi {
                raw.push(ZeroInterval { lo: hi.max(grid.lo()), hi: grid.hi() });
            }
            raw.retain(|iv| iv.len() > 0.0);
            ZeroSet::from_parts(raw, grid.step())
        }
        Family::Piecewise(_) => scan(spec, grid, tau_zero),
    }
}

fn scan(spec: &DensitySpec, grid: &EvalGrid, tau_zero: f64) -> ZeroSet {
    let pts = grid.points_with_breaks(spec);
    let is_zero = |z: f64| spec.eval(z) <= tau_zero;
    let flags: Vec<bool> = pts.iter().map(|&z| is_zero(z)).collect();
    let mut raw = Vec::new();
    let mut j = 0;
    while j < pts.len() {
        if !flags[j] {
            j += 1;
            continue;
        }
        let start = j;
        while j + 1 < pts.len() && flags[j + 1] {
            j += 1;
        }
        let lo = if start == 0 {
            pts[0]
        } else {
            bisect(&is_zero, pts[start - 1], pts[start])
        };
        let hi = if j + 1 == pts.len() {
            pts[j]
        } else {
            bisect(&is_zero, pts[j + 1], pts[j])
        };
        raw.push(ZeroInterval { lo, hi });
        j += 1;
    }
    ZeroSet::from_parts(raw, grid.step())
}

/// Boundary between `outside` (density above threshold) and `inside` (zero).
fn bisect(is_zero: &impl Fn(f64) -> bool, mut outside: f64, mut inside: f64) -> f64 {
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (outside + inside);
        if mid == outside || mid == inside {
            break;
        }
        if is_zero(mid) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

/// Finite points where the density tends to zero while staying positive on
/// both sides.
///
/// Candidates are strict local minima of the grid values (plateaus are
/// collapsed first) whose neighbours are positive and whose value is at most
/// `tau_vanish` times the peak grid value. A run of several zero grid points is
/// a zero interval, not a vanishing point. Each hit is refined by
/// golden-section search between its neighbours.
pub fn vanishing_points(spec: &DensitySpec, grid: &EvalGrid, tau_vanish: f64) -> Vec<f64> {
    let pts = grid.points_with_breaks(spec);
    let vals: Vec<f64> = pts.iter().map(|&z| spec.eval(z)).collect();
    let peak = vals.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    // Collapse equal-valued runs: (first index, last index, value).
    let mut runs: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &v) in vals.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.2 == v => r.1 = i,
            _ => runs.push((i, i, v)),
        }
    }
    let mut out = Vec::new();
    for w in runs.windows(3) {
        let (left, mid, right) = (w[0], w[1], w[2]);
        let v = mid.2;
        if !(v < left.2 && v < right.2) || v > tau_vanish * peak {
            continue;
        }
        if v == 0.0 && mid.1 > mid.0 {
            continue;
        }
        let a = pts[left.1];
        let b = pts[right.0];
        let at = if mid.0 == mid.1 && v == 0.0 {
            pts[mid.0]
        } else {
            golden_min(|z| spec.eval(z), a, b)
        };
        out.push(at);
    }
    out
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
