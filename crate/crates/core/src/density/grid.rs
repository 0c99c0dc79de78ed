use serde::{Deserialize, Serialize};

use super::{DensityError, DensitySpec, Family};

/// Default number of grid cells across the domain.
pub const DEFAULT_CELLS: usize = 32_768;
/// Default half-width of the domain in units of the density's scale.
pub const DEFAULT_SPAN: f64 = 40.0;
/// Default mass allowed outside the domain.
pub const DEFAULT_TAIL_BUDGET: f64 = 1e-12;

/// Truncated evaluation domain `[lo, hi]` with uniform step `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    lo: f64,
    hi: f64,
    step: f64,
    tail_mass_budget: f64,
}

impl EvalGrid {
    pub fn new(lo: f64, hi: f64, step: f64, tail_mass_budget: f64) -> Result<Self, DensityError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(DensityError::InvalidGrid(format!(
                "domain must be finite with lo < hi, got [{lo}, {hi}]"
            )));
        }
        if !(step.is_finite() && step > 0.0 && step <= hi - lo) {
            return Err(DensityError::InvalidGrid(format!(
                "step must lie in (0, {}], got {step}",
                hi - lo
            )));
        }
        if !(0.0..1.0).contains(&tail_mass_budget) {
            return Err(DensityError::InvalidGrid(format!(
                "tail mass budget must lie in [0, 1), got {tail_mass_budget}"
            )));
        }
        Ok(Self {
            lo,
            hi,
            step,
            tail_mass_budget,
        })
    }

    /// Grid over `[lo, hi]` split into `cells` equal steps.
    pub fn with_cells(lo: f64, hi: f64, cells: usize, tail_mass_budget: f64) -> Result<Self, DensityError> {
        Self::new(lo, hi, (hi - lo) / cells.max(1) as f64, tail_mass_budget)
    }

    /// Domain chosen so that the mass outside it is at most
    /// [`DEFAULT_TAIL_BUDGET`].
    ///
    /// Laplace and Gaussian use `centre ± 40·scale`; uniform uses
    /// `centre ± 40·(hi − lo)`. The staircase needs `K` steps with
    /// `ρ^K ≤ budget`, which for ρ near 1 is far wider than 40 steps.
    /// Piecewise specs pad bounded ends by the support width and push
    /// unbounded ends outward until the tail fits the budget.
    pub fn default_for(spec: &DensitySpec) -> Self {
        Self::for_spec(spec, DEFAULT_CELLS, DEFAULT_TAIL_BUDGET)
    }

    pub fn for_spec(spec: &DensitySpec, cells: usize, budget: f64) -> Self {
        let (lo, hi) = default_domain(spec, budget);
        Self::with_cells(lo, hi, cells, budget).expect("default domain is valid")
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn tail_mass_budget(&self) -> f64 {
        self.tail_mass_budget
    }

    pub fn cells(&self) -> usize {
        ((self.hi - self.lo) / self.step).round().max(1.0) as usize
    }

    /// Same grid restricted to `[lo, hi] ∩ domain`, keeping the step.
    pub fn restricted(&self, lo: f64, hi: f64) -> Option<Self> {
        let lo = lo.max(self.lo);
        let hi = hi.min(self.hi);
        (lo < hi).then(|| Self {
            lo,
            hi,
            step: self.step.min(hi - lo),
            tail_mass_budget: self.tail_mass_budget,
        })
    }

    /// Uniform grid points, endpoints included.
    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.cells();
        let h = (self.hi - self.lo) / n as f64;
        (0..=n).map(move |j| if j == n { self.hi } else { self.lo + j as f64 * h })
    }

    /// Uniform grid points merged with the density's breakpoints, sorted.
    pub fn points_with_breaks(&self, spec: &DensitySpec) -> Vec<f64> {
        let mut pts: Vec<f64> = self.points().collect();
        pts.extend(spec.breakpoints(self.lo, self.hi));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

fn default_domain(spec: &DensitySpec, budget: f64) -> (f64, f64) {
    match spec.family() {
        Family::Laplace { loc, scale } => (loc - DEFAULT_SPAN * scale, loc + DEFAULT_SPAN * scale),
        Family::Gaussian { mean, std } => (mean - DEFAULT_SPAN * std, mean + DEFAULT_SPAN * std),
        Family::Uniform { lo, hi } => {
            let c = 0.5 * (lo + hi);
            let w = DEFAULT_SPAN * (hi - lo);
            (c - w, c + w)
        }
        Family::Staircase { ratio, width } => {
            let budget = budget.max(f64::MIN_POSITIVE);
            let steps = (budget.ln() / ratio.ln()).ceil().max(DEFAULT_SPAN);
            let half = (steps + 1.0) * width;
            (-half, half)
        }
        Family::Piecewise(segments) => {
            let finite: Vec<f64> = segments
                .iter()
                .flat_map(|s| [s.lo, s.hi])
                .filter(|b| b.is_finite())
                .collect();
            let fmin = finite.iter().copied().fold(f64::INFINITY, f64::min);
            let fmax = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (fmin, fmax) = if finite.is_empty() { (0.0, 0.0) } else { (fmin, fmax) };
            let pad = (fmax - fmin).max(1.0);
            let first = &segments[0];
            let last = &segments[segments.len() - 1];
            let lo = if first.lo.is_finite() {
                first.lo - pad
            } else {
                let mut d = pad;
                while d < 1e12 && spec.mass_outside(fmin - d, f64::INFINITY) > 0.5 * budget {
                    d *= 2.0;
                }
                fmin - d
            };
            let hi = if last.hi.is_finite() {
                last.hi + pad
            } else {
                let mut d = pad;
                while d < 1e12 && spec.mass_outside(f64::NEG_INFINITY, fmax + d) > 0.5 * budget {
                    d *= 2.0;
                }
                fmax + d
            };
            (lo, hi)
        }
    }
}
