use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ConsensusError, NoiseSchedule, WeightMatrix};
use crate::analyzer::{AdjacencyParam, Analyzer, AnalyzerConfig, FailedCondition, PrivacyVerdict, VerdictKind};
use crate::oracle::{Binning, PairedCounts};
use crate::rng::{derive_seed, seeded, DEFAULT_SEED};

const CHUNK: usize = 1 << 14;

/// Privacy of the whole released sequence, inferred from the first release.
///
/// When later noises are independent of `θ(0)` (and of the initial state),
/// the sequence is exactly as private as `x⁺(0)`, so the verdict is the
/// analyzer's verdict on the density of `θ(0)`. Schedules that break the
/// independence get an inconclusive verdict with the first-step analysis
/// attached for reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseVerdict {
    pub kind: VerdictKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub failed_condition: FailedCondition,
    pub schedule: String,
    pub independent: bool,
    pub note: String,
    pub first_step: Option<PrivacyVerdict>,
}

pub fn first_release_privacy(
    schedule: &NoiseSchedule,
    adj: AdjacencyParam,
    config: &AnalyzerConfig,
) -> Result<ReleaseVerdict, ConsensusError> {
    schedule.validate()?;
    let independent = schedule.later_noise_independent();
    let Some(density) = schedule.first_step_density() else {
        return Ok(ReleaseVerdict {
            kind: VerdictKind::NotEpsDP,
            eps: None,
            delta: None,
            failed_condition: FailedCondition::C1,
            schedule: schedule.label(),
            independent,
            note: "no noise: the released state is the private state".into(),
            first_step: None,
        });
    };
    let verdict = Analyzer::new(density.clone(), config.clone())?.classify(adj);
    if !independent {
        return Ok(ReleaseVerdict {
            kind: VerdictKind::Inconclusive,
            eps: None,
            delta: None,
            failed_condition: FailedCondition::None,
            schedule: schedule.label(),
            independent,
            note: format!(
                "theta(1) reuses w(0), so later releases depend on theta(0) and the first release does not \
                 determine sequence privacy; first-step verdict alone is {:?}",
                verdict.kind
            ),
            first_step: Some(verdict),
        });
    }
    Ok(ReleaseVerdict {
        kind: verdict.kind,
        eps: verdict.eps,
        delta: verdict.delta,
        failed_condition: verdict.failed_condition,
        schedule: schedule.label(),
        independent,
        note: "later noises are independent of theta(0); first-release verdict covers the sequence".into(),
        first_step: Some(verdict),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceConfig {
    pub n_samples: usize,
    pub n_bins: usize,
    /// Cells per axis of the two-dimensional joint histogram.
    pub joint_bins: usize,
    pub min_bin_count: u64,
    pub z_deflate: f64,
    /// Coordinate where the adjacent initial states differ.
    pub i0: usize,
    pub seed: u64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            n_samples: 1_000_000,
            n_bins: 200,
            joint_bins: 50,
            min_bin_count: 20,
            z_deflate: 3.0,
            i0: 0,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEstimate {
    pub k: usize,
    pub node: usize,
    pub eps_hat: f64,
    pub eps_hat_raw: f64,
    pub eps_stderr: f64,
    /// Retained bins held under half the mass.
    pub inconclusive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEstimate {
    /// Worst node at each step `k = 0..=K`.
    pub per_step: Vec<StepEstimate>,
    /// `x⁺(0)` at node `i0`.
    pub first_release: StepEstimate,
    /// Joint law of `(x⁺(0), x⁺(1))` at node `i0`; absent when `K = 0`.
    pub joint_first_two: Option<StepEstimate>,
    pub sigma: f64,
    pub config: SequenceConfig,
}

/// One estimated law: a point extractor over the released trajectory plus
/// the deterministic shift the adjacent run adds to it.
struct Column {
    k: usize,
    node: usize,
    /// Trajectory coordinates `(k, node)` making up the point.
    coords: Vec<(usize, usize)>,
    shift: Vec<f64>,
    bins: usize,
}

/// Empirical privacy of the released sequence under σ-adjacency at node
/// `i0`.
///
/// Adjacent runs share every noise draw, so `y⁺(k) − x⁺(k) = σ W^k e_{i0}`
/// exactly; one simulated noise trajectory yields both laws. Samples are
/// regenerated in two deterministic passes (ranges, then counts), so memory
/// does not grow with `n_samples`.
pub fn sequence_privacy_estimate(
    w: &WeightMatrix,
    schedule: &NoiseSchedule,
    sigma: f64,
    k_max: usize,
    config: &SequenceConfig,
) -> Result<SequenceEstimate, ConsensusError> {
    schedule.validate()?;
    let n = w.n();
    if config.i0 >= n {
        return Err(ConsensusError::InvalidConfig(format!("i0 = {} outside 0..{n}", config.i0)));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(ConsensusError::InvalidConfig(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if config.n_samples == 0 {
        return Err(ConsensusError::InvalidConfig("n_samples must be positive".into()));
    }

    // shift(k) = σ W^k e_{i0}
    let mut shifts = Vec::with_capacity(k_max + 1);
    let mut e = DVector::zeros(n);
    e[config.i0] = sigma;
    for _ in 0..=k_max {
        shifts.push(e.clone());
        e = w.apply(&e);
    }

    let mut columns: Vec<Column> = Vec::new();
    for (k, s) in shifts.iter().enumerate() {
        for node in 0..n {
            columns.push(Column {
                k,
                node,
                coords: vec![(k, node)],
                shift: vec![s[node]],
                bins: config.n_bins,
            });
        }
    }
    if k_max >= 1 {
        let i0 = config.i0;
        columns.push(Column {
            k: 1,
            node: i0,
            coords: vec![(0, i0), (1, i0)],
            shift: vec![shifts[0][i0], shifts[1][i0]],
            bins: config.joint_bins,
        });
    }

    let chunks = config.n_samples.div_ceil(CHUNK);
    let sim = |c: usize, visit: &mut dyn FnMut(&[DVector<f64>])| {
        let len = CHUNK.min(config.n_samples - c * CHUNK);
        let mut rng = seeded(derive_seed(config.seed, c as u64));
        let mut gen = schedule.generator(n);
        let mut traj: Vec<DVector<f64>> = vec![DVector::zeros(n); k_max + 1];
        let m: &DMatrix<f64> = w.matrix();
        for _ in 0..len {
            gen.reset();
            for k in 0..=k_max {
                let theta = gen.next(k, &mut rng);
                traj[k] = if k == 0 { theta } else { m * &traj[k - 1] + theta };
            }
            visit(&traj);
        }
    };

    // Pass 1: per-column ranges of the unshifted law.
    let ranges: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r: Vec<Vec<(f64, f64)>> = columns
                .iter()
                .map(|col| vec![(f64::INFINITY, f64::NEG_INFINITY); col.coords.len()])
                .collect();
            sim(c, &mut |traj| {
                for (col, rc) in columns.iter().zip(r.iter_mut()) {
                    for (d, &(k, i)) in col.coords.iter().enumerate() {
                        let v = traj[k][i];
                        rc[d].0 = rc[d].0.min(v);
                        rc[d].1 = rc[d].1.max(v);
                    }
                }
            });
            r
        })
        .reduce_with(|a, b| {
            a.into_iter()
                .zip(b)
                .map(|(x, y)| x.into_iter().zip(y).map(|(p, q)| (p.0.min(q.0), p.1.max(q.1))).collect())
                .collect()
        })
        .expect("at least one chunk");

    let binnings: Vec<Binning> = columns
        .iter()
        .zip(&ranges)
        .map(|(col, r)| {
            let lo = r.iter().zip(&col.shift).map(|(&(a, _), s)| a.min(a + s)).collect();
            let hi = r.iter().zip(&col.shift).map(|(&(_, b), s)| b.max(b + s)).collect();
            Binning::new(lo, hi, col.bins)
        })
        .collect();

    // Pass 2: paired counts.
    let counts: Vec<PairedCounts> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc: Vec<PairedCounts> = binnings.iter().map(|b| PairedCounts::zeros(b.cells())).collect();
            let mut p = Vec::with_capacity(2);
            let mut q = Vec::with_capacity(2);
            sim(c, &mut |traj| {
                for ((col, b), a) in columns.iter().zip(&binnings).zip(acc.iter_mut()) {
                    p.clear();
                    q.clear();
                    for (d, &(k, i)) in col.coords.iter().enumerate() {
                        p.push(traj[k][i]);
                        q.push(traj[k][i] + col.shift[d]);
                    }
                    a.add(b.cell(&p), b.cell(&q));
                }
            });
            acc
        })
        .reduce_with(|a, b| a.into_iter().zip(&b).map(|(x, y)| x.merge(y)).collect())
        .expect("at least one chunk");

    let estimates: Vec<StepEstimate> = columns
        .iter()
        .zip(&binnings)
        .zip(&counts)
        .map(|((col, b), cnt)| {
            let e = cnt.estimate(b, config.min_bin_count, config.z_deflate);
            StepEstimate {
                k: col.k,
                node: col.node,
                eps_hat: e.eps_hat,
                eps_hat_raw: e.eps_hat_raw,
                eps_stderr: e.eps_stderr,
                inconclusive: e.retained_mass < 0.5,
            }
        })
        .collect();

    let marginal = &estimates[..(k_max + 1) * n];
    let per_step = marginal
        .chunks(n)
        .map(|step| {
            step.iter()
                .fold(None::<&StepEstimate>, |best, e| match best {
                    Some(b) if b.eps_hat >= e.eps_hat => Some(b),
                    _ => Some(e),
                })
                .expect("n >= 1")
                .clone()
        })
        .collect();
    Ok(SequenceEstimate {
        per_step,
        first_release: marginal[config.i0].clone(),
        joint_first_two: (k_max >= 1).then(|| estimates[(k_max + 1) * n].clone()),
        sigma,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::Graph;
    use crate::density::DensitySpec;

    fn adj(s: f64) -> AdjacencyParam {
        AdjacencyParam::new(s).unwrap()
    }

    #[test]
    fn release_verdicts() {
        let cfg = AnalyzerConfig::default();
        let lap = NoiseSchedule::Iid {
            density: DensitySpec::laplace(0.0, 1.0).unwrap(),
        };
        let v = first_release_privacy(&lap, adj(1.0), &cfg).unwrap();
        assert_eq!(v.kind, VerdictKind::EpsDP);
        assert!(v.eps.unwrap() <= 1.0 + 1e-12);

        let zs = NoiseSchedule::ZeroSumDecaying {
            density: DensitySpec::gaussian(0.0, 1.0).unwrap(),
            gamma: 0.9,
        };
        let v = first_release_privacy(&zs, adj(1.0), &cfg).unwrap();
        assert_eq!(v.kind, VerdictKind::Inconclusive);
        assert!(!v.independent);

        let uni = NoiseSchedule::Iid {
            density: DensitySpec::uniform(0.0, 1.0).unwrap(),
        };
        let v = first_release_privacy(&uni, adj(0.1), &cfg).unwrap();
        assert_eq!(v.kind, VerdictKind::EpsDeltaDP);
        assert_eq!(v.eps, Some(0.0));
        assert!((v.delta.unwrap() - 0.1).abs() < 1e-9);

        let none = first_release_privacy(&NoiseSchedule::None, adj(1.0), &cfg).unwrap();
        assert_eq!(none.kind, VerdictKind::NotEpsDP);
        assert_eq!(none.failed_condition, FailedCondition::C1);
    }

    #[test]
    fn zero_sigma_gives_zero_loss() {
        let w = WeightMatrix::metropolis(&Graph::ring(3).unwrap());
        let s = NoiseSchedule::Iid {
            density: DensitySpec::laplace(0.0, 1.0).unwrap(),
        };
        let cfg = SequenceConfig {
            n_samples: 50_000,
            ..SequenceConfig::default()
        };
        let e = sequence_privacy_estimate(&w, &s, 0.0, 2, &cfg).unwrap();
        assert!(e.per_step.iter().all(|s| s.eps_hat == 0.0));
        assert_eq!(e.joint_first_two.unwrap().eps_hat, 0.0);
    }

    #[test]
    fn estimate_is_deterministic() {
        let w = WeightMatrix::metropolis(&Graph::ring(3).unwrap());
        let s = NoiseSchedule::Iid {
            density: DensitySpec::laplace(0.0, 1.0).unwrap(),
        };
        let cfg = SequenceConfig {
            n_samples: 40_000,
            ..SequenceConfig::default()
        };
        let a = sequence_privacy_estimate(&w, &s, 1.0, 1, &cfg).unwrap();
        let b = sequence_privacy_estimate(&w, &s, 1.0, 1, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
