//! `noisedp` command line.
//!
//! Exit codes: 0 for a private verdict or a passing comparison, 1 for
//! `NotEpsDP` or a failing comparison, 2 for inconclusive results, 64 for
//! usage and input errors. Machine-readable output goes to stdout or
//! `--out`; one-line summaries go to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noisedp::analyzer::SplitRow;
use noisedp::consensus::{impossibility_experiment, ExperimentConfig, GraphSpec, SimulateConfig};
use noisedp::oracle::{CompareOutcome, PrivacyProfile, ProfileStatus, Tolerance};
use noisedp::rng::DEFAULT_SEED;
use noisedp::{
    compare, estimate_profile, AdjacencyParam, Analyzer, AnalyzerConfig, DensitySpec, OracleConfig, PrivacyVerdict,
    VerdictKind,
};
use serde::Serialize;

const EXIT_OK: u8 = 0;
const EXIT_NOT_PRIVATE: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "noisedp", version, about = "Differential privacy of additive noise and private consensus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify the additive mechanism for a density file.
    Analyze {
        density: PathBuf,
        #[command(flatten)]
        analyzer: AnalyzerArgs,
        /// Split radius M tried when ε-DP fails.
        #[arg(long)]
        split: Option<f64>,
        /// Also write the verdict JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the privacy profile by sampling.
    Oracle {
        density: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 200)]
        bins: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Compare against a verdict written by `analyze`; stdout becomes the report.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Reuse a profile written by an earlier `oracle` run instead of sampling.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Write the profile JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the δ(ε) curve as CSV here.
        #[arg(long)]
        delta_csv: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        tol_eps: f64,
        #[arg(long, default_value_t = 0.01)]
        tol_delta: f64,
    },
    /// Run one consensus trajectory and summarize it.
    Simulate {
        config: PathBuf,
        /// Trajectory CSV (k,node,x,x_plus,theta).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Error and privacy table over a K ladder; default ring of 10 without a config.
    Tradeoff {
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// (ε, δ) pairs of the split bound over a list of radii.
    SweepSplit {
        density: PathBuf,
        #[command(flatten)]
        analyzer: AnalyzerArgs,
        /// Comma separated radii.
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])]
        split: Vec<f64>,
        /// Also write the rows as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct AnalyzerArgs {
    #[arg(long)]
    sigma: f64,
    /// Ratios above this count as unbounded.
    #[arg(long, default_value_t = 1e6)]
    cap: f64,
    #[arg(long)]
    tau_zero: Option<f64>,
    #[arg(long)]
    tau_mass: Option<f64>,
}

impl AnalyzerArgs {
    fn config(&self, split: Option<f64>) -> AnalyzerConfig {
        let mut cfg = AnalyzerConfig {
            cap: self.cap,
            tau_zero: self.tau_zero,
            split,
            ..AnalyzerConfig::default()
        };
        if let Some(t) = self.tau_mass {
            cfg.tau_mass = t;
        }
        cfg
    }
}

/// Input or usage problem; reported with exit code 64.
#[derive(Debug)]
struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

type Outcome = Result<u8, Usage>;

fn read(path: &Path) -> Result<String, Usage> {
    fs::read_to_string(path).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

fn read_density(path: &Path) -> Result<DensitySpec, Usage> {
    DensitySpec::from_json(&read(path)?).map_err(|e| Usage(format!("{}: {e}", path.display())))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Usage> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Usage(format!("{}: {e}", dir.display())))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Usage(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

/// Stdout write that tolerates a closed pipe (`noisedp analyze … | head`).
fn print_out(bytes: &[u8]) -> Result<(), Usage> {
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(bytes).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(json: &str) -> Result<(), Usage> {
    print_out(format!("{json}\n").as_bytes())
}

/// Files are written before stdout so a closed pipe cannot lose them.
fn emit(json: &str, out: Option<&Path>) -> Result<(), Usage> {
    if let Some(p) = out {
        write_atomic(p, format!("{json}\n").as_bytes())?;
    }
    print_json(json)
}

fn verdict_code(kind: VerdictKind) -> u8 {
    match kind {
        VerdictKind::EpsDP | VerdictKind::EpsDeltaDP => EXIT_OK,
        VerdictKind::NotEpsDP => EXIT_NOT_PRIVATE,
        VerdictKind::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn describe(v: &PrivacyVerdict) -> String {
    let mut s = format!("{:?}", v.kind);
    if let Some(e) = v.eps {
        s += &format!(" eps={e}");
    }
    if let Some(d) = v.delta {
        s += &format!(" delta={d:e}");
    }
    if v.kind == VerdictKind::NotEpsDP {
        s += &format!(" failed={:?}", v.failed_condition);
    }
    s
}

fn analyze(density: &Path, args: &AnalyzerArgs, split: Option<f64>, out: Option<&Path>) -> Outcome {
    let spec = read_density(density)?;
    let adj = AdjacencyParam::new(args.sigma)?;
    let verdict = Analyzer::new(spec, args.config(split))?.classify(adj);
    emit(&verdict.to_json(), out)?;
    eprintln!("{}: {}", density.display(), describe(&verdict));
    Ok(verdict_code(verdict.kind))
}

#[allow(clippy::too_many_arguments)]
fn oracle(
    density: &Path,
    sigma: f64,
    config: OracleConfig,
    verdict: Option<&Path>,
    reuse: Option<&Path>,
    out: Option<&Path>,
    delta_csv: Option<&Path>,
    tol: Tolerance,
) -> Outcome {
    let spec = read_density(density)?;
    let profile = match reuse {
        Some(p) => {
            let profile = PrivacyProfile::from_json(&read(p)?).map_err(|e| Usage(format!("{}: {e}", p.display())))?;
            if profile.density != spec {
                return Err(Usage(format!("{}: profile is for {}", p.display(), profile.density.label())));
            }
            profile
        }
        None => estimate_profile(&spec, sigma, &config)?,
    };
    if let Some(p) = delta_csv {
        let mut buf = Vec::new();
        profile.write_delta_csv(&mut buf)?;
        write_atomic(p, &buf)?;
    }
    eprintln!(
        "{}: eps_hat={:.4} (raw {:.4}, stderr {:.4}) status={:?}",
        density.display(),
        profile.eps_hat,
        profile.eps_hat_raw,
        profile.eps_stderr,
        profile.status
    );
    let Some(vpath) = verdict else {
        emit(&profile.to_json(), out)?;
        return Ok(match profile.status {
            ProfileStatus::Ok => EXIT_OK,
            ProfileStatus::Inconclusive => EXIT_INCONCLUSIVE,
        });
    };
    if let Some(p) = out {
        write_atomic(p, format!("{}\n", profile.to_json()).as_bytes())?;
    }
    let verdict =
        PrivacyVerdict::from_json(&read(vpath)?).map_err(|e| Usage(format!("{}: {e}", vpath.display())))?;
    let report = compare(&verdict, &profile, tol)?;
    print_json(&pretty(&report))?;
    eprintln!("compare: {:?} ({})", report.outcome, report.note);
    Ok(match report.outcome {
        CompareOutcome::Pass => EXIT_OK,
        CompareOutcome::Fail => EXIT_NOT_PRIVATE,
        CompareOutcome::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

/// Edge-list paths in a config are relative to the config file.
fn resolve_graph(graph: &mut GraphSpec, config_path: &Path) {
    if let GraphSpec::EdgeList { path } = graph {
        if path.is_relative() {
            if let Some(dir) = config_path.parent() {
                *path = dir.join(&*path);
            }
        }
    }
}

fn simulate(config: &Path, out: Option<&Path>, seed: Option<u64>, trials: Option<usize>) -> Outcome {
    let mut cfg: SimulateConfig =
        serde_json::from_str(&read(config)?).map_err(|e| Usage(format!("{}: {e}", config.display())))?;
    resolve_graph(&mut cfg.graph, config);
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    let (run, summary) = cfg.simulate()?;
    if let Some(p) = out {
        let mut buf = Vec::new();
        run.write_csv(&mut buf)?;
        write_atomic(p, &buf)?;
    }
    print_json(&pretty(&summary))?;
    eprintln!(
        "n={} K={}: average_error={:.3e} |cumulative_noise|inf={:.3e} verdict={:?}",
        summary.n, summary.k, summary.average_error, summary.cumulative_noise_inf, summary.verdict.kind
    );
    Ok(EXIT_OK)
}

fn tradeoff(config: Option<&Path>, out: Option<&Path>, seed: Option<u64>, trials: Option<usize>) -> Outcome {
    let mut cfg = match config {
        Some(p) => {
            let mut cfg: ExperimentConfig =
                serde_json::from_str(&read(p)?).map_err(|e| Usage(format!("{}: {e}", p.display())))?;
            resolve_graph(&mut cfg.graph, p);
            cfg
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    let report = impossibility_experiment(&cfg)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    match out {
        Some(p) => write_atomic(p, &buf)?,
        None => print_out(&buf)?,
    }
    eprintln!("{} rows over {} trials", report.rows.len(), report.trials);
    Ok(EXIT_OK)
}

fn sweep_split(density: &Path, args: &AnalyzerArgs, radii: &[f64], out: Option<&Path>) -> Outcome {
    let spec = read_density(density)?;
    let adj = AdjacencyParam::new(args.sigma)?;
    let rows: Vec<SplitRow> = Analyzer::new(spec, args.config(None))?.sweep_split(adj, radii);
    if let Some(p) = out {
        let mut buf = String::from("m,eps,delta,note\n");
        for r in &rows {
            let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
            buf += &format!("{},{},{},{}\n", r.m, opt(r.eps), opt(r.delta), r.note.as_deref().unwrap_or(""));
        }
        write_atomic(p, buf.as_bytes())?;
    }
    print_json(&pretty(&rows))?;
    eprintln!("{} radii", rows.len());
    Ok(EXIT_OK)
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Analyze {
            density,
            analyzer,
            split,
            out,
        } => analyze(&density, &analyzer, split, out.as_deref()),
        Command::Oracle {
            density,
            sigma,
            samples,
            bins,
            seed,
            compare,
            profile,
            out,
            delta_csv,
            tol_eps,
            tol_delta,
        } => {
            let config = OracleConfig {
                n_samples: samples,
                n_bins: bins,
                seed,
                ..OracleConfig::default()
            };
            let tol = Tolerance {
                eps: tol_eps,
                delta: tol_delta,
            };
            oracle(
                &density,
                sigma,
                config,
                compare.as_deref(),
                profile.as_deref(),
                out.as_deref(),
                delta_csv.as_deref(),
                tol,
            )
        }
        Command::Simulate {
            config,
            out,
            seed,
            trials,
        } => simulate(&config, out.as_deref(), seed, trials),
        Command::Tradeoff {
            config,
            out,
            seed,
            trials,
        } => tradeoff(config.as_deref(), out.as_deref(), seed, trials),
        Command::SweepSplit {
            density,
            analyzer,
            split,
            out,
        } => sweep_split(&density, &analyzer, &split, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
