//! ε-DP and (ε,δ)-DP analysis of the additive mechanism `A(x) = x + θ`.
//!
//! Two adjacent inputs differ in one coordinate by at most σ, and noise is
//! independent per coordinate, so everything reduces to the scalar density of
//! that coordinate. The mechanism is ε-DP iff
//!
//! - **C1**: the zero set of `f` has measure zero (isolated zeros aside), and
//! - **C2**: `f(z + σ̂) / f(z) ≤ c_b` for every `z` with `f(z) > 0` and every
//!   `σ̂ ∈ [-σ, σ]`, in which case `ε = ln c_b`.
//!
//! A finite point where `f` tends to zero while staying positive around it
//! (a vanishing point) rules out ε-DP outright. When ε-DP fails, a δ bound is
//! attempted from the zero set, or from splitting the line into a core region
//! `Θ₁` and its complement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{
    vanishing_points, DensityError, DensitySpec, EvalGrid, Family, MassReport, ZeroSet,
    DEFAULT_TAU_MASS, DEFAULT_TAU_VANISH,
};

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("sigma must be finite and > 0, got {0}")]
    InvalidSigma(f64),
    #[error("split radius must be finite and > 0, got {0}")]
    InvalidSplit(f64),
    #[error("ratio cap must exceed 1, got {0}")]
    InvalidCap(f64),
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// Radius σ of σ-adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AdjacencyParam {
    sigma: f64,
}

impl AdjacencyParam {
    pub fn new(sigma: f64) -> Result<Self, AnalyzerError> {
        if sigma.is_finite() && sigma > 0.0 {
            Ok(Self { sigma })
        } else {
            Err(AnalyzerError::InvalidSigma(sigma))
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl TryFrom<f64> for AdjacencyParam {
    type Error = AnalyzerError;

    fn try_from(sigma: f64) -> Result<Self, Self::Error> {
        Self::new(sigma)
    }
}

impl From<AdjacencyParam> for f64 {
    fn from(a: AdjacencyParam) -> f64 {
        a.sigma
    }
}

/// Estimated `c_b`; serialized as a number or the string `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Bounded(f64),
    Unbounded,
}

impl Bound {
    pub fn value(&self) -> Option<f64> {
        match self {
            Bound::Bounded(v) => Some(*v),
            Bound::Unbounded => None,
        }
    }
}

impl Serialize for Bound {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Bound::Bounded(v) => s.serialize_f64(*v),
            Bound::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Bound::Bounded(v)),
            Raw::Text(t) if t == "unbounded" => Ok(Bound::Unbounded),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"unbounded\", got {t:?}"
            ))),
        }
    }
}

/// Result of the shift-ratio scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioProfile {
    pub c_b: Bound,
    /// `ln c_b`, tracked directly to avoid an exp/ln round trip.
    pub ln_c_b: Bound,
    pub argmax_z: f64,
    pub argmax_shift: f64,
    pub cap_hit: bool,
    pub samples: usize,
    /// False when local refinement was still improving at its round limit.
    pub converged: bool,
}

impl RatioProfile {
    pub fn is_bounded(&self) -> bool {
        matches!(self.c_b, Bound::Bounded(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    EpsDP,
    EpsDeltaDP,
    NotEpsDP,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailedCondition {
    C1,
    C2,
    VanishingPoint,
    None,
}

/// A split bound: `Θ₁ = [centre − M, centre + M]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitBound {
    pub m: f64,
    pub theta1: (f64, f64),
    pub eps: f64,
    pub delta: f64,
    /// Mass of `f` outside `Θ₁`.
    pub tail_delta: f64,
    /// Zero-set term `max over ± of ∫ f(z ± σ)` over the whole zero set.
    pub zero_set_delta: f64,
    /// Tail mass of the shifted density, `max over ± of ∫ f(z ± σ)` outside
    /// `Θ₁`, plus the zero-set term. Pairs soundly with `eps`, which bounds
    /// the ratio with its denominator point in `Θ₁`; `delta` uses the
    /// unshifted tail and can be smaller.
    pub conservative_delta: f64,
    pub ratio: RatioProfile,
}

/// One row of [`Analyzer::sweep_split`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub m: f64,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub density: DensitySpec,
    pub grid: EvalGrid,
    pub mass: MassReport,
    pub zero_set: ZeroSet,
    pub vanishing_points: Vec<f64>,
    pub ratio: Option<RatioProfile>,
    pub zero_set_delta: Option<f64>,
    pub split: Option<SplitBound>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyVerdict {
    pub kind: VerdictKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub failed_condition: FailedCondition,
    pub sigma: f64,
    pub diagnostics: Diagnostics,
}

impl PrivacyVerdict {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    /// Ratios above this are reported as unbounded.
    pub cap: f64,
    /// Zero threshold; `None` uses the density's default.
    pub tau_zero: Option<f64>,
    pub tau_vanish: f64,
    pub tau_mass: f64,
    pub refine_rounds: usize,
    /// Split radius `M` tried when ε-DP fails.
    pub split: Option<f64>,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            cap: 1e6,
            tau_zero: None,
            tau_vanish: DEFAULT_TAU_VANISH,
            tau_mass: DEFAULT_TAU_MASS,
            refine_rounds: 12,
            split: None,
        }
    }
}

const REFINE_POINTS: i32 = 4;
const REFINE_TOL: f64 = 1e-9;

/// Analyzer bound to one density and evaluation grid.
#[derive(Debug, Clone)]
pub struct Analyzer {
    spec: DensitySpec,
    grid: EvalGrid,
    config: AnalyzerConfig,
    mass: MassReport,
    tau_zero: f64,
}

impl Analyzer {
    /// Uses [`EvalGrid::default_for`].
    pub fn new(spec: DensitySpec, config: AnalyzerConfig) -> Result<Self, AnalyzerError> {
        let grid = EvalGrid::default_for(&spec);
        Self::with_grid(spec, grid, config)
    }

    /// Fails if the density's mass over the grid deviates from 1 by more
    /// than `config.tau_mass`.
    pub fn with_grid(spec: DensitySpec, grid: EvalGrid, config: AnalyzerConfig) -> Result<Self, AnalyzerError> {
        if !(config.cap > 1.0) {
            return Err(AnalyzerError::InvalidCap(config.cap));
        }
        if let Some(m) = config.split {
            if !(m.is_finite() && m > 0.0) {
                return Err(AnalyzerError::InvalidSplit(m));
            }
        }
        let mass = spec.check_mass(&grid, config.tau_mass)?;
        let tau_zero = config.tau_zero.unwrap_or_else(|| spec.default_tau_zero());
        Ok(Self {
            spec,
            grid,
            config,
            mass,
            tau_zero,
        })
    }

    pub fn spec(&self) -> &DensitySpec {
        &self.spec
    }

    pub fn grid(&self) -> &EvalGrid {
        &self.grid
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.config
    }

    /// C1 holds iff the zero set has measure zero (acnodes excluded).
    pub fn check_c1(&self) -> (bool, ZeroSet) {
        let zs = self.spec.zero_set(&self.grid, self.tau_zero);
        (zs.is_null(), zs)
    }

    pub fn vanishing_points(&self) -> Vec<f64> {
        vanishing_points(&self.spec, &self.grid, self.config.tau_vanish)
    }

    /// Sup of `f(z + σ̂)/f(z)` over the whole grid domain.
    pub fn shift_ratio_sup(&self, adj: AdjacencyParam) -> RatioProfile {
        self.ratio_scan(adj.sigma(), self.grid.lo(), self.grid.hi())
    }

    /// Sup restricted to `z ∈ [lo, hi]`.
    pub fn shift_ratio_sup_on(&self, adj: AdjacencyParam, lo: f64, hi: f64) -> RatioProfile {
        self.ratio_scan(adj.sigma(), lo.max(self.grid.lo()), hi.min(self.grid.hi()))
    }

    /// `(ε, δ)` with `δ = max over ± of ∫ f(z ± σ)` over the zero set.
    /// `None` when the ratio restricted to the support is unbounded.
    pub fn delta_bound_zero_set(&self, adj: AdjacencyParam) -> Option<(f64, f64)> {
        let ratio = self.shift_ratio_sup(adj);
        let ln_cb = ratio.ln_c_b.value().filter(|_| ratio.converged)?;
        let (_, zs) = self.check_c1();
        let inside = self.zero_set_mass(&zs, adj.sigma(), self.grid.lo(), self.grid.hi());
        // Zero intervals beyond the grid cannot hold more than the tail mass.
        let delta = (inside + self.mass.tail_mass).clamp(0.0, 1.0);
        Some((ln_cb, delta))
    }

    /// Split bound with `Θ₁ = [c − M, c + M]`, `c` the density's centre.
    pub fn split_bound(&self, adj: AdjacencyParam, m: f64) -> Result<SplitBound, String> {
        if !(m.is_finite() && m > 0.0) {
            return Err(format!("split radius must be finite and > 0, got {m}"));
        }
        let c = self.spec.center();
        let (lo, hi) = (c - m, c + m);
        let ratio = self.shift_ratio_sup_on(adj, lo, hi);
        let ln_cb = match (ratio.ln_c_b, ratio.converged) {
            (Bound::Bounded(v), true) => v,
            (Bound::Bounded(_), false) => {
                return Err(format!("ratio on [{lo}, {hi}] did not converge"));
            }
            (Bound::Unbounded, _) => {
                return Err(format!("ratio on [{lo}, {hi}] is unbounded"));
            }
        };
        let sigma = adj.sigma();
        let tail_delta = self.spec.mass_outside(lo, hi).max(0.0);
        let shifted_tail = self
            .spec
            .mass_outside(lo - sigma, hi - sigma)
            .max(self.spec.mass_outside(lo + sigma, hi + sigma));
        let (_, zs) = self.check_c1();
        let zero_set_delta = self.zero_set_mass(&zs, sigma, self.grid.lo(), self.grid.hi());
        Ok(SplitBound {
            m,
            theta1: (lo, hi),
            eps: ln_cb,
            delta: (tail_delta + zero_set_delta).clamp(0.0, 1.0),
            tail_delta,
            zero_set_delta,
            conservative_delta: (shifted_tail + zero_set_delta).clamp(0.0, 1.0),
            ratio,
        })
    }

    /// One [`split_bound`](Self::split_bound) row per radius.
    pub fn sweep_split(&self, adj: AdjacencyParam, ms: &[f64]) -> Vec<SplitRow> {
        let rows: Vec<SplitRow> = ms
            .iter()
            .map(|&m| match self.split_bound(adj, m) {
                Ok(b) => SplitRow {
                    m,
                    eps: Some(b.eps),
                    delta: Some(b.delta),
                    note: None,
                },
                Err(note) => SplitRow {
                    m,
                    eps: None,
                    delta: None,
                    note: Some(note),
                },
            })
            .collect();
        debug_assert!(sweep_is_monotone(&rows), "split sweep lost monotonicity: {rows:?}");
        rows
    }

    pub fn classify(&self, adj: AdjacencyParam) -> PrivacyVerdict {
        let (c1, zero_set) = self.check_c1();
        let mut diag = Diagnostics {
            density: self.spec.clone(),
            grid: self.grid,
            mass: self.mass,
            zero_set,
            vanishing_points: Vec::new(),
            ratio: None,
            zero_set_delta: None,
            split: None,
            note: String::new(),
        };
        let sigma = adj.sigma();

        if !c1 {
            let ratio = self.shift_ratio_sup(adj);
            diag.ratio = Some(ratio.clone());
            if let (Bound::Bounded(ln_cb), true) = (ratio.ln_c_b, ratio.converged) {
                let inside = self.zero_set_mass(&diag.zero_set, sigma, self.grid.lo(), self.grid.hi());
                let delta = (inside + self.mass.tail_mass).clamp(0.0, 1.0);
                diag.zero_set_delta = Some(delta);
                diag.note = format!(
                    "zero set has measure {:e}; ratio on the support is bounded",
                    diag.zero_set.total_measure
                );
                return self.eps_delta(sigma, ln_cb, delta, FailedCondition::C1, diag);
            }
            diag.note = format!(
                "zero set has measure {:e} and the ratio on the support is unbounded",
                diag.zero_set.total_measure
            );
            return self.try_split(adj, FailedCondition::C1, diag);
        }

        let vanishing = self.vanishing_points();
        if !vanishing.is_empty() {
            diag.note = format!("density vanishes at {vanishing:?} while positive around it");
            diag.vanishing_points = vanishing;
            return self.try_split(adj, FailedCondition::VanishingPoint, diag);
        }

        let ratio = self.shift_ratio_sup(adj);
        diag.ratio = Some(ratio.clone());
        match (ratio.ln_c_b, ratio.converged) {
            (Bound::Unbounded, _) => {
                diag.note = format!(
                    "shift ratio exceeds the cap {:e} near z = {}",
                    self.config.cap, ratio.argmax_z
                );
                self.try_split(adj, FailedCondition::C2, diag)
            }
            (Bound::Bounded(_), false) => {
                diag.note = "shift-ratio refinement hit its round limit".into();
                self.verdict(VerdictKind::Inconclusive, sigma, None, None, FailedCondition::None, diag)
            }
            (Bound::Bounded(ln_cb), true) => {
                diag.note = format!("c_b = {} at z = {}, shift {}", ln_cb.exp(), ratio.argmax_z, ratio.argmax_shift);
                self.verdict(VerdictKind::EpsDP, sigma, Some(ln_cb.max(0.0)), Some(0.0), FailedCondition::None, diag)
            }
        }
    }

    fn try_split(&self, adj: AdjacencyParam, failed: FailedCondition, mut diag: Diagnostics) -> PrivacyVerdict {
        let sigma = adj.sigma();
        if let Some(m) = self.config.split {
            match self.split_bound(adj, m) {
                Ok(b) => {
                    let (eps, delta) = (b.eps, b.delta);
                    diag.split = Some(b);
                    return self.eps_delta(sigma, eps, delta, failed, diag);
                }
                Err(why) => diag.note = format!("{}; split M = {m} not applicable: {why}", diag.note),
            }
        }
        self.verdict(VerdictKind::NotEpsDP, sigma, None, None, failed, diag)
    }

    fn eps_delta(&self, sigma: f64, eps: f64, delta: f64, failed: FailedCondition, diag: Diagnostics) -> PrivacyVerdict {
        // A δ that vanishes numerically is still only certified down to the
        // truncation budget.
        let delta = delta.max(self.grid.tail_mass_budget()).max(f64::MIN_POSITIVE);
        self.verdict(VerdictKind::EpsDeltaDP, sigma, Some(eps.max(0.0)), Some(delta), failed, diag)
    }

    fn verdict(
        &self,
        kind: VerdictKind,
        sigma: f64,
        eps: Option<f64>,
        delta: Option<f64>,
        failed_condition: FailedCondition,
        diagnostics: Diagnostics,
    ) -> PrivacyVerdict {
        PrivacyVerdict {
            kind,
            eps,
            delta,
            failed_condition,
            sigma,
            diagnostics,
        }
    }

    /// `max over ± of Σ ∫ f(z ± σ) dz` over zero intervals clipped to `[lo, hi]`.
    fn zero_set_mass(&self, zs: &ZeroSet, sigma: f64, lo: f64, hi: f64) -> f64 {
        let clipped = zs.clipped(lo, hi);
        let side = |shift: f64| -> f64 {
            clipped
                .iter()
                .map(|iv| self.spec.integrate_shifted(iv.lo, iv.hi, shift))
                .sum()
        };
        side(sigma).max(side(-sigma)).max(0.0)
    }

    fn shifts(&self, sigma: f64) -> Vec<f64> {
        if self.spec.is_log_concave() {
            vec![-sigma, sigma]
        } else {
            vec![-sigma, -0.5 * sigma, 0.5 * sigma, sigma]
        }
    }

    fn ratio_scan(&self, sigma: f64, lo: f64, hi: f64) -> RatioProfile {
        let ln_cap = self.config.cap.ln();
        let shifts = self.shifts(sigma);
        let h = self.grid.step();

        let mut zs: Vec<f64> = match self.grid.restricted(lo, hi) {
            Some(g) => g.points().collect(),
            None => vec![lo.clamp(self.grid.lo(), self.grid.hi())],
        };
        for b in self.spec.breakpoints(lo - sigma - h, hi + sigma + h) {
            for s in std::iter::once(0.0).chain(shifts.iter().copied()) {
                let at = b - s;
                zs.extend([at, at - 0.5 * h, at + 0.5 * h]);
            }
        }
        zs.retain(|z| *z >= lo && *z <= hi);
        zs.sort_by(f64::total_cmp);
        zs.dedup();

        let mut best = Best {
            ln: 0.0,
            z: self.spec.center().clamp(lo, hi),
            s: 0.0,
        };
        let mut samples = 0usize;
        // Max log-ratio per z, kept for the divergence check.
        let mut per_z: Vec<(f64, f64)> = Vec::with_capacity(zs.len());
        for &z in &zs {
            if !self.positive(z) {
                continue;
            }
            let mut local = f64::NEG_INFINITY;
            for &s in &shifts {
                samples += 1;
                let r = self.ln_ratio(z, s);
                local = local.max(r);
                best.offer(r, z, s);
            }
            per_z.push((z, local));
        }

        let mut converged = true;
        if !self.spec.is_log_concave() && best.ln < ln_cap && best.s != 0.0 {
            let (n, ok) = self.refine(&mut best, sigma, lo, hi, h);
            samples += n;
            converged = ok;
        }

        let cap_hit = best.ln > ln_cap || diverges_at_edge(&per_z, ln_cap - 10f64.ln());
        let (c_b, ln_c_b) = if cap_hit || !best.ln.is_finite() {
            (Bound::Unbounded, Bound::Unbounded)
        } else {
            (Bound::Bounded(best.ln.exp()), Bound::Bounded(best.ln))
        };
        RatioProfile {
            c_b,
            ln_c_b,
            argmax_z: best.z,
            argmax_shift: best.s,
            cap_hit,
            samples,
            converged,
        }
    }

    /// Local search in `(z, σ̂)` around the running argmax with windows
    /// halving each round. Returns samples used and whether the last round
    /// stopped improving.
    fn refine(&self, best: &mut Best, sigma: f64, lo: f64, hi: f64, h: f64) -> (usize, bool) {
        let mut wz = h;
        let mut ws = 0.25 * sigma;
        let mut samples = 0;
        let mut last_gain = f64::INFINITY;
        for _ in 0..self.config.refine_rounds {
            let (z0, s0, before) = (best.z, best.s, best.ln);
            for i in -REFINE_POINTS..=REFINE_POINTS {
                let z = (z0 + wz * i as f64 / REFINE_POINTS as f64).clamp(lo, hi);
                if !self.positive(z) {
                    continue;
                }
                for j in -REFINE_POINTS..=REFINE_POINTS {
                    let s = (s0 + ws * j as f64 / REFINE_POINTS as f64).clamp(-sigma, sigma);
                    samples += 1;
                    best.offer(self.ln_ratio(z, s), z, s);
                }
            }
            last_gain = best.ln - before;
            if last_gain < REFINE_TOL {
                break;
            }
            wz *= 0.5;
            ws *= 0.5;
        }
        (samples, last_gain < REFINE_TOL)
    }

    fn positive(&self, z: f64) -> bool {
        self.spec.eval(z) > self.tau_zero || (self.tau_zero == 0.0 && self.spec.ln_eval(z) > f64::NEG_INFINITY)
    }

    /// `ln f(z + s) − ln f(z)`, in closed form where the family allows.
    fn ln_ratio(&self, z: f64, s: f64) -> f64 {
        match self.spec.family() {
            Family::Laplace { loc, scale } => ((z - loc).abs() - (z + s - loc).abs()) / scale,
            Family::Gaussian { mean, std } => {
                let u = (z - mean) / std;
                let v = s / std;
                -v * (u + 0.5 * v)
            }
            _ => self.spec.ln_eval(z + s) - self.spec.ln_eval(z),
        }
    }
}

struct Best {
    ln: f64,
    z: f64,
    s: f64,
}

impl Best {
    fn offer(&mut self, ln: f64, z: f64, s: f64) {
        if ln > self.ln {
            *self = Best { ln, z, s };
        }
    }
}

/// Ratio still climbing over the outer tenth of the scanned range on either
/// side, with the edge value above `ln_floor`. A flat tail (Laplace) is
/// bounded however high it sits.
fn diverges_at_edge(per_z: &[(f64, f64)], ln_floor: f64) -> bool {
    let n = per_z.len();
    if n < 20 {
        return false;
    }
    let k = (n / 10).max(2);
    let climbing = |vals: &mut dyn Iterator<Item = f64>| -> bool {
        let v: Vec<f64> = vals.collect();
        let (Some(&first), Some(&last)) = (v.first(), v.last()) else {
            return false;
        };
        v.windows(2).all(|w| w[1] >= w[0]) && last > ln_floor && last - first > 1e-9 * last.abs().max(1.0)
    };
    climbing(&mut per_z[n - k..].iter().map(|p| p.1)) || climbing(&mut per_z[..k].iter().rev().map(|p| p.1))
}

fn sweep_is_monotone(rows: &[SplitRow]) -> bool {
    let ok: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.m, r.eps?, r.delta?)))
        .collect();
    ok.windows(2).all(|w| {
        let (a, b) = (w[0], w[1]);
        b.0 <= a.0 || (b.1 >= a.1 - 1e-12 && b.2 <= a.2 + 1e-12)
    })
}
