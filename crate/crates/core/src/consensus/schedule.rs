use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ConsensusError;
use crate::density::{DensitySpec, EvalGrid, Sampler};

/// Rule for the per-node noise `θ_i(k)`; nodes draw independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSchedule {
    None,
    /// `θ_i(k) = w_i(k)`.
    Iid { density: DensitySpec },
    /// `θ_i(k) = γ^k w_i(k)`.
    DecayingIid { density: DensitySpec, gamma: f64 },
    /// `θ_i(k) = γ^k w_i(k) − γ^(k−1) w_i(k−1)` with `w_i(−1) = 0`; the
    /// injected noise telescopes.
    ZeroSumDecaying { density: DensitySpec, gamma: f64 },
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<(), ConsensusError> {
        match self {
            NoiseSchedule::DecayingIid { gamma, .. } | NoiseSchedule::ZeroSumDecaying { gamma, .. }
                if !(*gamma > 0.0 && *gamma < 1.0) =>
            {
                Err(ConsensusError::InvalidSchedule(format!("gamma must lie in (0, 1), got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    /// Density of `θ_i(0)`; `None` for the noiseless schedule.
    pub fn first_step_density(&self) -> Option<&DensitySpec> {
        match self {
            NoiseSchedule::None => None,
            NoiseSchedule::Iid { density }
            | NoiseSchedule::DecayingIid { density, .. }
            | NoiseSchedule::ZeroSumDecaying { density, .. } => Some(density),
        }
    }

    /// Whether `θ(k)`, `k ≥ 1`, is independent of `θ(0)`. Static per
    /// variant: only the zero-sum schedule reuses `w(0)` at step 1.
    pub fn later_noise_independent(&self) -> bool {
        !matches!(self, NoiseSchedule::ZeroSumDecaying { .. })
    }

    pub fn label(&self) -> String {
        match self {
            NoiseSchedule::None => "none".into(),
            NoiseSchedule::Iid { density } => format!("iid {}", density.label()),
            NoiseSchedule::DecayingIid { density, gamma } => format!("decaying_iid {} gamma={gamma}", density.label()),
            NoiseSchedule::ZeroSumDecaying { density, gamma } => {
                format!("zero_sum_decaying {} gamma={gamma}", density.label())
            }
        }
    }

    pub(crate) fn generator(&self, n: usize) -> NoiseGen<'_> {
        NoiseGen {
            schedule: self,
            sampler: self.first_step_density().map(|d| Sampler::new(d, &EvalGrid::default_for(d))),
            prev: vec![0.0; n],
            n,
        }
    }
}

/// Stateful per-run noise source; draws node by node, step by step.
pub(crate) struct NoiseGen<'a> {
    schedule: &'a NoiseSchedule,
    sampler: Option<Sampler>,
    prev: Vec<f64>,
    n: usize,
}

impl NoiseGen<'_> {
    /// Starts a fresh trajectory (`w(−1) = 0`) without rebuilding the sampler.
    pub(crate) fn reset(&mut self) {
        self.prev.iter_mut().for_each(|p| *p = 0.0);
    }

    pub(crate) fn next<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> DVector<f64> {
        let Some(sampler) = &self.sampler else {
            return DVector::zeros(self.n);
        };
        let w: Vec<f64> = sampler.fill(rng, self.n);
        let theta = match self.schedule {
            NoiseSchedule::None => unreachable!("noiseless schedule has no sampler"),
            NoiseSchedule::Iid { .. } => w.clone(),
            NoiseSchedule::DecayingIid { gamma, .. } => {
                let g = gamma.powi(k as i32);
                w.iter().map(|v| g * v).collect()
            }
            NoiseSchedule::ZeroSumDecaying { gamma, .. } => {
                let g = gamma.powi(k as i32);
                let g_prev = if k == 0 { 0.0 } else { gamma.powi(k as i32 - 1) };
                w.iter().zip(&self.prev).map(|(v, p)| g * v - g_prev * p).collect()
            }
        };
        self.prev = w;
        DVector::from_vec(theta)
    }
}
