use rand::Rng;

use super::{DensitySpec, EvalGrid, Family};
use crate::rng::open01;

/// Inverse-CDF sampler.
///
/// Parametric families invert their closed-form CDF. Piecewise specs use a
/// table: cell masses on the grid (breakpoints included) are accumulated into
/// a CDF, and a draw is placed uniformly within the selected cell.
#[derive(Debug, Clone)]
pub struct Sampler {
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Closed(DensitySpec),
    Table { edges: Vec<f64>, cdf: Vec<f64> },
}

impl Sampler {
    pub fn new(spec: &DensitySpec, grid: &EvalGrid) -> Self {
        let kind = match spec.family() {
            Family::Piecewise(_) => {
                let edges = grid.points_with_breaks(spec);
                let mut cdf = Vec::with_capacity(edges.len());
                let mut acc = 0.0;
                cdf.push(0.0);
                for w in edges.windows(2) {
                    acc += spec.integrate(w[0], w[1]).max(0.0);
                    cdf.push(acc);
                }
                if acc > 0.0 {
                    cdf.iter_mut().for_each(|c| *c /= acc);
                }
                Kind::Table { edges, cdf }
            }
            _ => Kind::Closed(spec.clone()),
        };
        Self { kind }
    }

    /// Value at cumulative probability `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        match &self.kind {
            Kind::Closed(spec) => spec.quantile(p).expect("closed-form family"),
            Kind::Table { edges, cdf } => {
                let i = cdf.partition_point(|&c| c <= p).clamp(1, cdf.len() - 1) - 1;
                let span = cdf[i + 1] - cdf[i];
                let t = if span > 0.0 { (p - cdf[i]) / span } else { 0.5 };
                edges[i] + t.clamp(0.0, 1.0) * (edges[i + 1] - edges[i])
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(open01(rng))
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}
