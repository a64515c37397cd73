//! Batch pipeline driver.
//!
//! Subcommands: `gen`, `preselect`, `fit`, `prune`, `predict`. Each stage
//! reads and writes the JSON/CSV formats of [`crate::io`]; diagnostics go to
//! stderr. Exit codes: 0 success, 2 bad arguments, 3 dataset or schema
//! errors, 4 degeneracy (no admissible candidates).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::backward::prune;
use crate::distribution::{assemble, entropy_q, HalfDistribution};
use crate::forward::{fit_forward, BiorthState, StopRule};
use crate::io::{
    distribution_csv, from_one_based, prediction_csv, read_json, to_one_based, write_json, Dataset,
    PoolFile, ReportFile, StateFile,
};
use crate::model::{derive, predict};
use crate::preselect::preselect;
use crate::synth::{ExperimentSpec, MeasureMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MeasureArg {
    /// Unit weight on every datum.
    Uniform,
    /// Weight each datum by its inverse noise variance.
    InverseVariance,
}

impl From<MeasureArg> for MeasureMode {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::Uniform => MeasureMode::Uniform,
            MeasureArg::InverseVariance => MeasureMode::InverseVariance,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "halfmax",
    version,
    about = "q=1/2 maximum-entropy reconstruction from redundant noisy constraints"
)]
struct Cli {
    /// Resolve relative output paths against this directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from an experiment spec.
    Gen {
        /// Spec file path, or a built-in name: `example1` (exponential
        /// kernel, 20% noise) or `example2` (Lorentzian kernel, 10% noise).
        #[arg(long)]
        spec: String,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output dataset path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank constraints by linear independence, before any data are used.
    Preselect {
        #[arg(long)]
        data: PathBuf,
        /// Smallest admissible independence ratio, in (0, 1].
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Weighting for the scan geometry (data-independent, so the
        /// default is uniform).
        #[arg(long, value_enum)]
        measure: Option<MeasureArg>,
        /// Output pool path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Forward greedy fit until the prediction matches the data within the
    /// noise budget.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Restrict candidates to a preselected pool file.
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Noise-inflation factor: the fit stops once
        /// residual^2 < ||t sigma||^2.
        #[arg(long, default_value_t = 1.1)]
        t: f64,
        /// Defaults to inverse-variance (the dataset always carries sigma).
        #[arg(long, value_enum)]
        measure: Option<MeasureArg>,
        /// Cap on the number of selected constraints.
        #[arg(long)]
        max_k: Option<usize>,
        /// Output state path.
        #[arg(long)]
        out: PathBuf,
        /// Run-report path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Distribution CSV path (n, p_half, p).
        #[arg(long)]
        dist: Option<PathBuf>,
    },
    /// Remove the least relevant multipliers while the prediction stays
    /// within a (typically loosened) budget.
    Prune {
        #[arg(long)]
        data: PathBuf,
        /// Fitted state to start from.
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        t: f64,
        /// Output state path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        dist: Option<PathBuf>,
    },
    /// Assemble the distribution from a state and write the prediction CSV.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        state: PathBuf,
        /// Prediction CSV path (i, f_obs, f_pred[, f_true], sigma).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dist: Option<PathBuf>,
    },
}

/// Runs the pipeline driver and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) => 2,
        Error::Io(_)
        | Error::Schema(_)
        | Error::DimensionMismatch { .. }
        | Error::IndexOutOfRange { .. }
        | Error::InvalidMeasure(_)
        | Error::DuplicateIndex { .. }
        | Error::PositionOutOfRange { .. } => 3,
        Error::NoAdmissibleCandidate
        | Error::DependentCandidate { .. }
        | Error::IllConditionedGram { .. } => 4,
    }
}

fn resolve(out_dir: &Option<PathBuf>, path: &Path) -> PathBuf {
    match out_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let out_dir = cli.out_dir.clone();
    match cli.command {
        Command::Gen { spec, seed, out } => cmd_gen(&spec, seed, &resolve(&out_dir, &out)),
        Command::Preselect {
            data,
            tol,
            measure,
            out,
        } => cmd_preselect(&data, tol, measure, &resolve(&out_dir, &out)),
        Command::Fit {
            data,
            pool,
            t,
            measure,
            max_k,
            out,
            report,
            dist,
        } => cmd_fit(
            &data,
            pool.as_deref(),
            t,
            measure,
            max_k,
            &resolve(&out_dir, &out),
            report.map(|p| resolve(&out_dir, &p)),
            dist.map(|p| resolve(&out_dir, &p)),
        ),
        Command::Prune {
            data,
            state,
            t,
            out,
            report,
            dist,
        } => cmd_prune(
            &data,
            &state,
            t,
            &resolve(&out_dir, &out),
            report.map(|p| resolve(&out_dir, &p)),
            dist.map(|p| resolve(&out_dir, &p)),
        ),
        Command::Predict {
            data,
            state,
            out,
            dist,
        } => cmd_predict(
            &data,
            &state,
            &resolve(&out_dir, &out),
            dist.map(|p| resolve(&out_dir, &p)),
        ),
    }
}

fn cmd_gen(spec_arg: &str, seed: Option<u64>, out: &Path) -> Result<()> {
    let spec = match spec_arg {
        "example1" => ExperimentSpec::example1(seed.unwrap_or(1)),
        "example2" => ExperimentSpec::example2(seed.unwrap_or(1)),
        path => {
            let mut spec: ExperimentSpec = read_json(Path::new(path))?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            // spec files are user data: surface validation noise as schema
            // problems, not argument problems
            if let Err(Error::InvalidParameter(msg)) = crate::synth::make_kernel(&spec).map(|_| ())
            {
                return Err(Error::Schema(format!("{path}: {msg}")));
            }
            spec
        }
    };
    let p_true = crate::synth::make_truth(&spec)?;
    if p_true.iter().all(|v| *v == 0.0) {
        eprintln!("warning: ground truth tabulates to the zero vector");
    }
    let data = Dataset::generate(&spec)?;
    data.save(out)?;
    println!(
        "gen: M={} N={} seed={} -> {}",
        spec.m,
        spec.n,
        spec.seed,
        out.display()
    );
    Ok(())
}

fn cmd_preselect(data: &Path, tol: f64, measure: Option<MeasureArg>, out: &Path) -> Result<()> {
    let data = Dataset::load(data)?;
    let mode = measure.map_or(MeasureMode::Uniform, Into::into);
    let sys = data.system(mode)?;
    let report = preselect(&sys, tol)?;
    if report.degenerate() {
        eprintln!("warning: every alpha vector is zero; the pool is empty");
    }
    let file = PoolFile {
        threshold: tol,
        pool: to_one_based(report.pool()),
        ratios: report.ratios().to_vec(),
        degenerate: report.degenerate(),
    };
    write_json(out, &file)?;
    println!(
        "preselect: kept {} of {} constraints -> {}",
        report.pool().len(),
        sys.m(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    data_path: &Path,
    pool: Option<&Path>,
    t: f64,
    measure: Option<MeasureArg>,
    max_k: Option<usize>,
    out: &Path,
    report: Option<PathBuf>,
    dist: Option<PathBuf>,
) -> Result<()> {
    let data = Dataset::load(data_path)?;
    let mode = measure.map_or(MeasureMode::InverseVariance, Into::into);
    let sys = data.system(mode)?;
    let d = derive(&sys);
    let mut stop = StopRule::from_sigma(&data.sigma, sys.mu(), t)?;
    if let Some(k) = max_k {
        stop = stop.with_max_k(k);
    }
    let pool_indices = match pool {
        Some(p) => {
            let pf: PoolFile = read_json(p)?;
            Some(from_one_based(&pf.pool, sys.m())?)
        }
        None => None,
    };

    let started = Instant::now();
    let fit = fit_forward(&sys, &d, &stop, pool_indices.as_deref())?;
    let timing_ms = started.elapsed().as_millis() as u64;

    let phalf = assemble(&sys, &fit.state)?;
    let state_file = StateFile {
        selected: to_one_based(fit.state.selected()),
        multipliers: fit.state.lambdas().to_vec(),
        measure: mode,
        t,
        epsilon_norm2: stop.epsilon_norm2(),
        residual2: fit.residual2,
    };
    write_json(out, &state_file)?;
    if let Some(path) = report {
        let rep = ReportFile {
            command: "fit".into(),
            k: fit.state.k(),
            selected: to_one_based(fit.state.selected()),
            multipliers: fit.state.lambdas().to_vec(),
            residual2: fit.residual2,
            epsilon_norm2: stop.epsilon_norm2(),
            t,
            measure: mode,
            stop_reason: fit.reason.as_str().into(),
            removed: None,
            entropy: entropy_q(&phalf),
            timing_ms,
        };
        write_json(&path, &rep)?;
    }
    if let Some(path) = dist {
        std::fs::write(&path, distribution_csv(&phalf))?;
    }
    println!(
        "fit: k={} residual2={} epsilon2={} reason={} -> {}",
        fit.state.k(),
        fit.residual2,
        stop.epsilon_norm2(),
        fit.reason.as_str(),
        out.display()
    );
    Ok(())
}

fn cmd_prune(
    data_path: &Path,
    state_path: &Path,
    t: f64,
    out: &Path,
    report: Option<PathBuf>,
    dist: Option<PathBuf>,
) -> Result<()> {
    let data = Dataset::load(data_path)?;
    let sf: StateFile = read_json(state_path)?;
    let sys = data.system(sf.measure)?;
    let d = derive(&sys);
    let state = replay_state(&sys, &d, &sf)?;
    let stop = StopRule::from_sigma(&data.sigma, sys.mu(), t)?;

    let started = Instant::now();
    let k_before = state.k();
    let outcome = prune(state, &sys, &stop)?;
    let timing_ms = started.elapsed().as_millis() as u64;

    let phalf = assemble(&sys, &outcome.state)?;
    let state_file = StateFile {
        selected: to_one_based(outcome.state.selected()),
        multipliers: outcome.state.lambdas().to_vec(),
        measure: sf.measure,
        t,
        epsilon_norm2: stop.epsilon_norm2(),
        residual2: outcome.residual2,
    };
    write_json(out, &state_file)?;
    if let Some(path) = report {
        let rep = ReportFile {
            command: "prune".into(),
            k: outcome.state.k(),
            selected: to_one_based(outcome.state.selected()),
            multipliers: outcome.state.lambdas().to_vec(),
            residual2: outcome.residual2,
            epsilon_norm2: stop.epsilon_norm2(),
            t,
            measure: sf.measure,
            stop_reason: if outcome.state.k() == 0 {
                "all-removed".into()
            } else {
                "next-removal-exceeds-budget".into()
            },
            removed: Some(outcome.removed),
            entropy: entropy_q(&phalf),
            timing_ms,
        };
        write_json(&path, &rep)?;
    }
    if let Some(path) = dist {
        std::fs::write(&path, distribution_csv(&phalf))?;
    }
    println!(
        "prune: k={} (was {}, removed {}) residual2={} epsilon2={} -> {}",
        outcome.state.k(),
        k_before,
        outcome.removed,
        outcome.residual2,
        stop.epsilon_norm2(),
        out.display()
    );
    Ok(())
}

fn cmd_predict(
    data_path: &Path,
    state_path: &Path,
    out: &Path,
    dist: Option<PathBuf>,
) -> Result<()> {
    let data = Dataset::load(data_path)?;
    let sf: StateFile = read_json(state_path)?;
    let sys = data.system(sf.measure)?;
    let selected = from_one_based(&sf.selected, sys.m())?;
    let phalf = HalfDistribution::from_multipliers(&sys, &selected, &sf.multipliers)?;
    let fp = predict(&sys, &phalf)?;
    std::fs::write(out, prediction_csv(&data, &fp))?;
    if let Some(path) = dist {
        std::fs::write(&path, distribution_csv(&phalf))?;
    }
    println!(
        "predict: wrote {} predictions -> {}",
        fp.len(),
        out.display()
    );
    Ok(())
}

/// Rebuilds a fitted state by replaying the recorded selections against the
/// dataset; the stored multipliers double as a consistency check.
fn replay_state(
    sys: &crate::ConstraintSystem,
    d: &crate::DerivedData,
    sf: &StateFile,
) -> Result<BiorthState> {
    let selected = from_one_based(&sf.selected, sys.m())?;
    if selected.len() != sf.multipliers.len() {
        return Err(Error::Schema(
            "state file: selected and multipliers disagree in length".into(),
        ));
    }
    let mut state = BiorthState::new(sys);
    for &l in &selected {
        state.extend(sys, d, l)?;
    }
    let scale = sf
        .multipliers
        .iter()
        .fold(0.0f64, |a, x| a.max(x.abs()))
        .max(1e-300);
    for (got, want) in state.lambdas().iter().zip(&sf.multipliers) {
        if (got - want).abs() > 1e-6 * scale.max(want.abs()) {
            eprintln!(
                "warning: replayed multipliers deviate from the state file \
                 ({got} vs {want}); the state may come from another dataset"
            );
            break;
        }
    }
    Ok(state)
}
