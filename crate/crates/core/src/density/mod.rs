//! One-dimensional noise densities.
//!
//! A [`DensitySpec`] is either a parametric family (Laplace, Gaussian,
//! uniform, staircase) or a list of non-overlapping [`Segment`]s, each carrying
//! a closed-form [`Expr`]. Specs are validated on construction, so evaluation
//! never fails.

pub mod expr;
mod grid;
mod json;
mod sampling;
mod zero;

use std::f64::consts::{PI, SQRT_2};

use thiserror::Error;

use crate::quadrature::Quadrature;

pub use expr::Expr;
pub use grid::{EvalGrid, DEFAULT_CELLS, DEFAULT_SPAN, DEFAULT_TAIL_BUDGET};
pub use sampling::Sampler;
pub use zero::{vanishing_points, ZeroInterval, ZeroSet, DEFAULT_TAU_VANISH, PIECEWISE_TAU_ZERO};

/// Default tolerance on `|total mass - 1|`.
pub const DEFAULT_TAU_MASS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("segment {index}: {reason}")]
    InvalidSegment { index: usize, reason: String },
    #[error("expression parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("total mass {mass} deviates from 1 by {deficit:e} (tolerance {tolerance:e})")]
    MassDeficit {
        mass: f64,
        deficit: f64,
        tolerance: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub expr: Expr,
}

impl Segment {
    pub fn new(lo: f64, hi: f64, expr: Expr) -> Self {
        Self { lo, hi, expr }
    }

    fn contains(&self, z: f64) -> bool {
        self.lo <= z && z <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Laplace { loc: f64, scale: f64 },
    Gaussian { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Constant `(1-ρ)/(2a)` on `[-a, a]`, then `(1-ρ)/(2a)·ρ^k` on the k-th
    /// step of width `a` on either side.
    Staircase { ratio: f64, width: f64 },
    Piecewise(Vec<Segment>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySpec {
    family: Family,
}

fn finite(field: &'static str, v: f64) -> Result<f64, DensityError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DensityError::InvalidParameter {
            field,
            reason: format!("must be finite, got {v}"),
        })
    }
}

fn positive(field: &'static str, v: f64) -> Result<f64, DensityError> {
    if finite(field, v)? > 0.0 {
        Ok(v)
    } else {
        Err(DensityError::InvalidParameter {
            field,
            reason: format!("must be > 0, got {v}"),
        })
    }
}

impl DensitySpec {
    pub fn laplace(loc: f64, scale: f64) -> Result<Self, DensityError> {
        Ok(Self {
            family: Family::Laplace {
                loc: finite("loc", loc)?,
                scale: positive("scale", scale)?,
            },
        })
    }

    pub fn gaussian(mean: f64, std: f64) -> Result<Self, DensityError> {
        Ok(Self {
            family: Family::Gaussian {
                mean: finite("mean", mean)?,
                std: positive("std", std)?,
            },
        })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DensityError> {
        finite("lo", lo)?;
        finite("hi", hi)?;
        if lo >= hi {
            return Err(DensityError::InvalidParameter {
                field: "hi",
                reason: format!("must exceed lo ({lo}), got {hi}"),
            });
        }
        Ok(Self {
            family: Family::Uniform { lo, hi },
        })
    }

    pub fn staircase(ratio: f64, width: f64) -> Result<Self, DensityError> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(DensityError::InvalidParameter {
                field: "ratio",
                reason: format!("must lie in (0, 1), got {ratio}"),
            });
        }
        Ok(Self {
            family: Family::Staircase {
                ratio,
                width: positive("width", width)?,
            },
        })
    }

    /// Segments are sorted by `lo`; they may touch but not overlap. Each is
    /// probed at interior points and rejected if it evaluates negative or
    /// non-finite.
    pub fn piecewise(mut segments: Vec<Segment>) -> Result<Self, DensityError> {
        if segments.is_empty() {
            return Err(DensityError::InvalidParameter {
                field: "segments",
                reason: "at least one segment is required".into(),
            });
        }
        for (index, s) in segments.iter().enumerate() {
            if s.lo.is_nan() || s.hi.is_nan() || !(s.lo < s.hi) {
                return Err(DensityError::InvalidSegment {
                    index,
                    reason: format!("need lo < hi, got [{}, {}]", s.lo, s.hi),
                });
            }
            if s.lo == f64::INFINITY || s.hi == f64::NEG_INFINITY {
                return Err(DensityError::InvalidSegment {
                    index,
                    reason: "empty interval".into(),
                });
            }
        }
        segments.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for (index, pair) in segments.windows(2).enumerate() {
            if pair[1].lo < pair[0].hi {
                return Err(DensityError::InvalidSegment {
                    index: index + 1,
                    reason: format!(
                        "[{}, {}] overlaps [{}, {}]",
                        pair[1].lo, pair[1].hi, pair[0].lo, pair[0].hi
                    ),
                });
            }
        }
        for (index, s) in segments.iter().enumerate() {
            for z in probe_points(s.lo, s.hi) {
                let v = s.expr.eval(z);
                if !v.is_finite() || v < 0.0 {
                    return Err(DensityError::InvalidSegment {
                        index,
                        reason: format!("density is {v} at z = {z}"),
                    });
                }
            }
        }
        Ok(Self {
            family: Family::Piecewise(segments),
        })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn is_piecewise(&self) -> bool {
        matches!(self.family, Family::Piecewise(_))
    }

    /// True for the log-concave parametric families, whose shift-ratio
    /// supremum over `σ̂ ∈ [-σ, σ]` is reached at the endpoints.
    pub fn is_log_concave(&self) -> bool {
        matches!(self.family, Family::Laplace { .. } | Family::Gaussian { .. })
    }

    /// Short human-readable name.
    pub fn label(&self) -> String {
        match &self.family {
            Family::Laplace { loc, scale } => format!("Laplace({loc}, {scale})"),
            Family::Gaussian { mean, std } => format!("Gaussian({mean}, {std})"),
            Family::Uniform { lo, hi } => format!("Uniform({lo}, {hi})"),
            Family::Staircase { ratio, width } => format!("Staircase({ratio}, {width})"),
            Family::Piecewise(s) => format!("Piecewise({} segments)", s.len()),
        }
    }

    /// Density value `f(z)`; zero outside every segment of a piecewise spec.
    pub fn eval(&self, z: f64) -> f64 {
        match &self.family {
            Family::Laplace { loc, scale } => (-(z - loc).abs() / scale).exp() / (2.0 * scale),
            Family::Gaussian { mean, std } => {
                let u = (z - mean) / std;
                (-0.5 * u * u).exp() / (std * (2.0 * PI).sqrt())
            }
            Family::Uniform { lo, hi } => {
                if *lo <= z && z <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Family::Staircase { ratio, width } => {
                let base = (1.0 - ratio) / (2.0 * width);
                match stair_index(z, *width) {
                    0 => base,
                    k => base * ratio.powi(k),
                }
            }
            Family::Piecewise(segments) => segments
                .iter()
                .find(|s| s.contains(z))
                .map_or(0.0, |s| s.expr.eval(z).max(0.0)),
        }
    }

    /// `ln f(z)`, computed analytically where possible so that far tails do
    /// not underflow. Returns `-inf` where the density is zero.
    pub fn ln_eval(&self, z: f64) -> f64 {
        match &self.family {
            Family::Laplace { loc, scale } => -(z - loc).abs() / scale - (2.0 * scale).ln(),
            Family::Gaussian { mean, std } => {
                let u = (z - mean) / std;
                -0.5 * u * u - (std * (2.0 * PI).sqrt()).ln()
            }
            Family::Staircase { ratio, width } => {
                ((1.0 - ratio) / (2.0 * width)).ln() + stair_index(z, *width) as f64 * ratio.ln()
            }
            _ => self.eval(z).ln(),
        }
    }

    /// Location used to centre default grids and the split region.
    pub fn center(&self) -> f64 {
        match &self.family {
            Family::Laplace { loc, .. } => *loc,
            Family::Gaussian { mean, .. } => *mean,
            Family::Uniform { lo, hi } => 0.5 * (lo + hi),
            Family::Staircase { .. } | Family::Piecewise(_) => 0.0,
        }
    }

    /// Points where the density (or its derivative) jumps inside `[lo, hi]`.
    pub fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = match &self.family {
            Family::Laplace { loc, .. } => vec![*loc],
            Family::Gaussian { .. } => vec![],
            Family::Uniform { lo: a, hi: b } => vec![*a, *b],
            Family::Staircase { width, .. } => {
                // Unbounded requests are capped at a million steps per side.
                let first = (lo / width).floor().max(-1e6) as i64;
                let last = (hi / width).ceil().min(1e6) as i64;
                (first..=last)
                    .filter(|j| *j != 0)
                    .map(|j| j as f64 * width)
                    .collect()
            }
            Family::Piecewise(segments) => segments.iter().flat_map(|s| [s.lo, s.hi]).collect(),
        };
        out.retain(|b| b.is_finite() && *b >= lo && *b <= hi);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Closed-form CDF; `None` for piecewise specs.
    pub fn cdf(&self, z: f64) -> Option<f64> {
        Some(match &self.family {
            Family::Laplace { loc, scale } => {
                let u = (z - loc) / scale;
                if u < 0.0 {
                    0.5 * u.exp()
                } else {
                    1.0 - 0.5 * (-u).exp()
                }
            }
            Family::Gaussian { mean, std } => 0.5 * libm::erfc(-(z - mean) / (std * SQRT_2)),
            Family::Uniform { lo, hi } => ((z - lo) / (hi - lo)).clamp(0.0, 1.0),
            Family::Staircase { ratio, width } => {
                if z >= 0.0 {
                    0.5 + stair_half_cdf(z, *ratio, *width)
                } else {
                    0.5 - stair_half_cdf(-z, *ratio, *width)
                }
            }
            Family::Piecewise(_) => return None,
        })
    }

    /// Upper tail `1 - F(z)` without cancellation; `None` for piecewise.
    pub fn survival(&self, z: f64) -> Option<f64> {
        Some(match &self.family {
            Family::Laplace { loc, scale } => {
                let u = (z - loc) / scale;
                if u < 0.0 {
                    1.0 - 0.5 * u.exp()
                } else {
                    0.5 * (-u).exp()
                }
            }
            Family::Gaussian { mean, std } => 0.5 * libm::erfc((z - mean) / (std * SQRT_2)),
            Family::Staircase { ratio, width } if z >= 0.0 => 0.5 - stair_half_cdf(z, *ratio, *width),
            _ => 1.0 - self.cdf(z)?,
        })
    }

    /// Inverse CDF for `p ∈ (0, 1)`; `None` for piecewise specs.
    pub fn quantile(&self, p: f64) -> Option<f64> {
        Some(match &self.family {
            Family::Laplace { loc, scale } => {
                if p < 0.5 {
                    loc + scale * (2.0 * p).ln()
                } else {
                    loc - scale * (2.0 * (1.0 - p)).ln()
                }
            }
            Family::Gaussian { mean, std } => mean + std * standard_normal_quantile(p),
            Family::Uniform { lo, hi } => lo + p * (hi - lo),
            Family::Staircase { ratio, width } => {
                if p >= 0.5 {
                    stair_half_quantile(p - 0.5, *ratio, *width)
                } else {
                    -stair_half_quantile(0.5 - p, *ratio, *width)
                }
            }
            Family::Piecewise(_) => return None,
        })
    }

    /// Mass outside `[lo, hi]`, analytic for parametric families.
    pub fn mass_outside(&self, lo: f64, hi: f64) -> f64 {
        match (self.cdf(lo), self.survival(hi)) {
            (Some(left), Some(right)) => left + right,
            _ => {
                let q = Quadrature::default();
                let breaks = self.breakpoints(f64::NEG_INFINITY, f64::INFINITY);
                let f = |z: f64| self.eval(z);
                let left = q.integrate_with_breaks(f, f64::NEG_INFINITY, lo, &breaks).value;
                let right = q.integrate_with_breaks(f, hi, f64::INFINITY, &breaks).value;
                left + right
            }
        }
    }

    /// `∫ f` over `[lo, hi]` by quadrature, split at the density's breakpoints.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        self.integrate_shifted(lo, hi, 0.0)
    }

    /// `∫ f(z + shift) dz` over `[lo, hi]`.
    pub fn integrate_shifted(&self, lo: f64, hi: f64, shift: f64) -> f64 {
        let breaks: Vec<f64> = self
            .breakpoints(lo + shift, hi + shift)
            .into_iter()
            .map(|b| b - shift)
            .collect();
        Quadrature::default()
            .integrate_with_breaks(|z| self.eval(z + shift), lo, hi, &breaks)
            .value
    }

    /// Quadrature over the grid domain plus the mass outside it.
    pub fn total_mass(&self, grid: &EvalGrid) -> MassReport {
        let domain_mass = self.integrate(grid.lo(), grid.hi());
        let tail_mass = self.mass_outside(grid.lo(), grid.hi());
        MassReport {
            mass: domain_mass + tail_mass,
            domain_mass,
            tail_mass,
        }
    }

    /// [`total_mass`](Self::total_mass) used as a validity gate.
    pub fn check_mass(&self, grid: &EvalGrid, tau_mass: f64) -> Result<MassReport, DensityError> {
        let report = self.total_mass(grid);
        let deficit = (report.mass - 1.0).abs();
        if deficit > tau_mass || report.mass.is_nan() {
            return Err(DensityError::MassDeficit {
                mass: report.mass,
                deficit,
                tolerance: tau_mass,
            });
        }
        Ok(report)
    }

    /// Zero set of the density within the grid domain.
    ///
    /// Parametric families are handled analytically; piecewise specs are
    /// scanned on the grid with bisection refinement of each run's edges.
    pub fn zero_set(&self, grid: &EvalGrid, tau_zero: f64) -> ZeroSet {
        zero::zero_set(self, grid, tau_zero)
    }

    /// Default zero threshold: exact zero for closed forms, a tiny floor for
    /// grid-evaluated piecewise specs.
    pub fn default_tau_zero(&self) -> f64 {
        if self.is_piecewise() {
            PIECEWISE_TAU_ZERO
        } else {
            0.0
        }
    }

    /// One draw. Piecewise specs rebuild their inverse-CDF table on every
    /// call; build a [`Sampler`] once for repeated draws.
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Sampler::new(self, &EvalGrid::default_for(self)).draw(rng)
    }
}

/// Output of [`DensitySpec::total_mass`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MassReport {
    pub mass: f64,
    pub domain_mass: f64,
    pub tail_mass: f64,
}

/// Step index of the staircase at `z`: 0 on `[-a, a]`, `k` on
/// `(k a, (k+1) a]` and its mirror image.
fn stair_index(z: f64, width: f64) -> i32 {
    let t = z.abs() / width;
    if t <= 1.0 {
        0
    } else {
        (t.ceil() - 1.0).min(i32::MAX as f64) as i32
    }
}

/// `F(z) - 1/2` for `z ≥ 0`.
fn stair_half_cdf(z: f64, ratio: f64, width: f64) -> f64 {
    let t = z / width;
    if t <= 1.0 {
        return 0.5 * (1.0 - ratio) * t;
    }
    if !t.is_finite() {
        return 0.5;
    }
    let j = t.ceil() - 1.0;
    let rj = ratio.powf(j);
    // central half + steps 1..j-1 + partial step j
    0.5 * (1.0 - ratio) + 0.5 * (ratio - rj) + 0.5 * (1.0 - ratio) * rj * (t - j)
}

/// Inverse of [`stair_half_cdf`] for `q ∈ [0, 1/2)`.
fn stair_half_quantile(q: f64, ratio: f64, width: f64) -> f64 {
    let central = 0.5 * (1.0 - ratio);
    if q < central {
        return width * q / central;
    }
    // Tail: step j ≥ 1 has conditional mass (1-ρ)ρ^(j-1); geometric inversion.
    let r = ((q - central) / (0.5 * ratio)).clamp(0.0, 1.0 - f64::EPSILON);
    let s = (1.0 - r).ln() / ratio.ln();
    let i = s.floor();
    let ri = ratio.powf(i);
    let frac = ((r - (1.0 - ri)) / (ri * (1.0 - ratio))).clamp(0.0, 1.0);
    width * (1.0 + i + frac)
}

/// Standard normal inverse CDF: rational initial guess refined by Halley steps
/// against `erfc`.
pub(crate) fn standard_normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < 0.024_25 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.024_25 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        // Work on the smaller tail to keep the residual accurate.
        let e = if x < 0.0 {
            0.5 * libm::erfc(-x / SQRT_2) - p
        } else {
            (1.0 - p) - 0.5 * libm::erfc(x / SQRT_2)
        };
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

fn probe_points(lo: f64, hi: f64) -> Vec<f64> {
    const N: usize = 64;
    let map = |t: f64| -> f64 {
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => lo + t * (hi - lo),
            (true, false) => lo + t / (1.0 - t) * 8.0,
            (false, true) => hi - (1.0 - t) / t * 8.0,
            (false, false) => (t - 0.5) / (t * (1.0 - t)) * 8.0,
        }
    };
    (1..N).map(|i| map(i as f64 / N as f64)).chain([lo, hi]).filter(|z| z.is_finite()).collect()
}

#[cfg(test)]
mod tests;
