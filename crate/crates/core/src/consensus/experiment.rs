use std::io::Write;
use std::path::PathBuf;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{first_release_privacy, run, ConsensusError, ConsensusRun, Graph, NoiseSchedule, ReleaseVerdict, WeightMatrix};
use crate::analyzer::{AdjacencyParam, AnalyzerConfig, VerdictKind};
use crate::density::DensitySpec;
use crate::rng::{derive_seed, DEFAULT_SEED};

/// Flag attached to rows whose trial-mean `‖cumulative_noise(K)‖∞` falls
/// below [`VANISHING_NOISE_THRESHOLD`]: the released noise no longer keeps
/// the first-step density's support and ratio bounds, so the schedule
/// cannot be ε-DP.
pub const VANISHING_NOISE_FLAG: &str = "vanishing_cumulative_noise";

pub const VANISHING_NOISE_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Ring { n: usize },
    Complete { n: usize },
    ErdosRenyi { n: usize, p: f64, seed: u64 },
    /// Whitespace separated `i j` pairs, one per line.
    EdgeList { path: PathBuf },
}

impl GraphSpec {
    pub fn build(&self) -> Result<Graph, ConsensusError> {
        match self {
            GraphSpec::Ring { n } => Graph::ring(*n),
            GraphSpec::Complete { n } => Graph::complete(*n),
            GraphSpec::ErdosRenyi { n, p, seed } => Graph::erdos_renyi(*n, *p, *seed),
            GraphSpec::EdgeList { path } => Graph::parse_edge_list(&std::fs::read_to_string(path)?),
        }
    }
}

/// `x0_i = i` unless given.
fn initial_state(x0: &Option<Vec<f64>>, n: usize) -> Result<Vec<f64>, ConsensusError> {
    match x0 {
        Some(v) if v.len() != n => Err(ConsensusError::Dimension {
            expected: n,
            got: v.len(),
        }),
        Some(v) => Ok(v.clone()),
        None => Ok((0..n).map(|i| i as f64).collect()),
    }
}

fn check_trials(trials: usize) -> Result<(), ConsensusError> {
    if trials == 0 {
        return Err(ConsensusError::InvalidConfig("trials must be positive".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub graph: GraphSpec,
    pub schedule: NoiseSchedule,
    /// Adjacency parameter for the privacy verdict.
    pub sigma: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub xbar: f64,
    /// `average_error(K)` of the recorded run.
    pub average_error: f64,
    /// `‖cumulative_noise(K)‖∞` of the recorded run.
    pub cumulative_noise_inf: f64,
    pub convergence_factor: f64,
    pub trials: usize,
    /// Mean of `average_error(K)²` over all trials (the recorded run is trial 0).
    pub trial_mean_mse: f64,
    pub verdict: ReleaseVerdict,
}

impl SimulateConfig {
    /// Runs trial 0 in full and returns it with a summary over all trials.
    pub fn simulate(&self) -> Result<(ConsensusRun, SimulateSummary), ConsensusError> {
        check_trials(self.trials)?;
        let adj = AdjacencyParam::new(self.sigma)?;
        let w = WeightMatrix::metropolis(&self.graph.build()?);
        let x0 = initial_state(&self.x0, w.n())?;
        let verdict = first_release_privacy(&self.schedule, adj, &AnalyzerConfig::default())?;
        let recorded = run(&w, &x0, &self.schedule, self.k, derive_seed(self.seed, 0))?;
        let rest: Vec<f64> = (1..self.trials)
            .into_par_iter()
            .map(|t| run(&w, &x0, &self.schedule, self.k, derive_seed(self.seed, t as u64)).map(|r| r.average_error(self.k).powi(2)))
            .collect::<Result<_, _>>()?;
        let first = recorded.average_error(self.k);
        let summary = SimulateSummary {
            n: w.n(),
            k: self.k,
            seed: self.seed,
            xbar: recorded.xbar,
            average_error: first,
            cumulative_noise_inf: recorded.cumulative_noise(self.k).amax(),
            convergence_factor: w.convergence_factor(),
            trials: self.trials,
            trial_mean_mse: (first * first + rest.iter().sum::<f64>()) / self.trials as f64,
            verdict,
        };
        Ok((recorded, summary))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub schedules: Vec<NoiseSchedule>,
    pub sigma: f64,
    /// Iteration counts at which the table is read off.
    #[serde(rename = "K")]
    pub k: Vec<usize>,
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

impl Default for ExperimentConfig {
    /// Ring of 10, IID Laplace(0,1) against zero-sum decaying Gaussian
    /// noise with γ = 0.9, 200 trials.
    fn default() -> Self {
        Self {
            graph: GraphSpec::Ring { n: 10 },
            schedules: vec![
                NoiseSchedule::Iid {
                    density: DensitySpec::laplace(0.0, 1.0).expect("valid"),
                },
                NoiseSchedule::ZeroSumDecaying {
                    density: DensitySpec::gaussian(0.0, 1.0).expect("valid"),
                    gamma: 0.9,
                },
            ],
            sigma: 1.0,
            k: vec![50, 100, 200, 300],
            trials: 200,
            seed: DEFAULT_SEED,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub schedule: String,
    #[serde(rename = "K")]
    pub k: usize,
    /// Trial mean of `average_error(K)²`.
    pub mse: f64,
    /// Trial mean of `‖cumulative_noise(K)‖∞`.
    pub cumulative_noise_inf: f64,
    pub verdict: VerdictKind,
    pub eps: Option<f64>,
    pub flag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    /// First-release verdict per schedule, in config order.
    pub verdicts: Vec<ReleaseVerdict>,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ConsensusError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(["schedule", "K", "mse", "cumulative_noise_inf", "verdict", "eps", "flag"])?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn rows_for(&self, schedule: &NoiseSchedule) -> impl Iterator<Item = &ExperimentRow> {
        let label = schedule.label();
        self.rows.iter().filter(move |r| r.schedule == label)
    }
}

/// Per-trial statistics at each ladder point: `(squared error, ‖c‖∞)`.
fn trial_stats(
    w: &WeightMatrix,
    x0: &[f64],
    schedule: &NoiseSchedule,
    ladder: &[usize],
    seed: u64,
) -> Result<Vec<(f64, f64)>, ConsensusError> {
    let k_max = *ladder.iter().max().expect("non-empty ladder");
    let r = run(w, x0, schedule, k_max, seed)?;
    let mut c = DVector::zeros(r.n());
    let mut by_k = vec![(0.0, 0.0); k_max + 1];
    for (k, theta) in r.thetas.iter().enumerate() {
        c = w.apply(&c) + theta;
        by_k[k] = (r.average_error(k).powi(2), c.amax());
    }
    Ok(ladder.iter().map(|&k| by_k[k]).collect())
}

/// Trial-averaged error and cumulative noise for each schedule along the
/// `K` ladder, next to each schedule's privacy verdict.
///
/// Fixed-scale noise keeps its ε-DP verdict but the error grows with `K`;
/// noise that telescopes drives the error down, and the cumulative noise
/// with it, which rules out ε-DP. Such rows carry [`VANISHING_NOISE_FLAG`]
/// and a `NotEpsDP` verdict.
pub fn impossibility_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ConsensusError> {
    check_trials(config.trials)?;
    if config.k.contains(&0) {
        return Err(ConsensusError::InvalidConfig("K ladder entries must be at least 1".into()));
    }
    let adj = AdjacencyParam::new(config.sigma)?;
    let w = WeightMatrix::metropolis(&config.graph.build()?);
    let x0 = initial_state(&config.x0, w.n())?;
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for schedule in &config.schedules {
        let verdict = first_release_privacy(schedule, adj, &AnalyzerConfig::default())?;
        if config.k.is_empty() {
            verdicts.push(verdict);
            continue;
        }
        let per_trial: Vec<Vec<(f64, f64)>> = (0..config.trials)
            .into_par_iter()
            .map(|t| trial_stats(&w, &x0, schedule, &config.k, derive_seed(config.seed, t as u64)))
            .collect::<Result<_, _>>()?;
        let trials = config.trials as f64;
        for (j, &k) in config.k.iter().enumerate() {
            let mse = per_trial.iter().map(|t| t[j].0).sum::<f64>() / trials;
            let cum = per_trial.iter().map(|t| t[j].1).sum::<f64>() / trials;
            let vanishing = cum < VANISHING_NOISE_THRESHOLD;
            let (kind, eps) = if vanishing {
                (VerdictKind::NotEpsDP, None)
            } else {
                (verdict.kind, verdict.eps)
            };
            rows.push(ExperimentRow {
                schedule: schedule.label(),
                k,
                mse,
                cumulative_noise_inf: cum,
                verdict: kind,
                eps,
                flag: if vanishing { VANISHING_NOISE_FLAG.into() } else { String::new() },
            });
        }
        verdicts.push(verdict);
    }
    Ok(ExperimentReport {
        rows,
        verdicts,
        trials: config.trials,
        seed: config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(schedules: Vec<NoiseSchedule>) -> ExperimentConfig {
        ExperimentConfig {
            schedules,
            k: vec![5, 20],
            trials: 16,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_json_shape() {
        let text = r#"{"graph":{"kind":"ring","n":10},"schedule":{"kind":"none"},"sigma":1,"K":200,"trials":1,"seed":7}"#;
        let cfg: SimulateConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.k, 200);
        assert_eq!(cfg.graph, GraphSpec::Ring { n: 10 });
        let round: SimulateConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(round, cfg);
        let d = ExperimentConfig::default();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn empty_schedule_list_gives_header_only_csv() {
        let report = impossibility_experiment(&small(vec![])).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "schedule,K,mse,cumulative_noise_inf,verdict,eps,flag\n");
    }

    #[test]
    fn noiseless_rows_are_flagged() {
        let report = impossibility_experiment(&small(vec![NoiseSchedule::None])).unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert_eq!(row.verdict, VerdictKind::NotEpsDP);
            assert_eq!(row.flag, VANISHING_NOISE_FLAG);
            assert_eq!(row.cumulative_noise_inf, 0.0);
        }
        assert!(report.rows[1].mse < report.rows[0].mse);
    }

    #[test]
    fn simulate_noiseless_complete_graph() {
        let cfg = SimulateConfig {
            graph: GraphSpec::Complete { n: 4 },
            schedule: NoiseSchedule::None,
            sigma: 1.0,
            k: 1,
            trials: 3,
            seed: 1,
            x0: Some(vec![1.0, 2.0, 3.0, 10.0]),
        };
        let (run, summary) = cfg.simulate().unwrap();
        assert_eq!(run.xs[1], DVector::from_element(4, 4.0));
        assert_eq!(summary.average_error, 0.0);
        assert_eq!(summary.trial_mean_mse, 0.0);
        assert_eq!(summary.verdict.kind, VerdictKind::NotEpsDP);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = small(vec![NoiseSchedule::None]);
        cfg.trials = 0;
        assert!(impossibility_experiment(&cfg).is_err());
        let mut cfg = small(vec![NoiseSchedule::None]);
        cfg.x0 = Some(vec![0.0; 3]);
        assert!(matches!(impossibility_experiment(&cfg), Err(ConsensusError::Dimension { .. })));
    }
}
