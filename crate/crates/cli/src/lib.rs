//! Command-line front-end: parse CSV instances, run an application, emit a
//! JSON report.

pub mod matrix_io;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use csa_core::apps::{
    run_cse, run_kmeans, run_pcsa, run_pnmf, run_sparse_pca, CseInstance, DeltaChoice, KmeansInstance, PcsaGroup,
    PcsaInstance, PnmfInstance, RowCoreset, RunOptions, SparsePcaInstance, DEFAULT_KAPPAS,
};
use csa_core::coreset::{pcps_p2, verify_pcps};
use csa_core::engine::{multiplicative_delta, Diagnostics, Solution};
use csa_core::linalg::{orthonormalize, svd, Basis, DenseMatrix};
use csa_core::parallel::Parallelism;
use csa_core::solvers::{ConstraintSpec, SubspaceSplit};
use csa_oracle::ORACLE_BUDGET;

pub use matrix_io::{parse_matrix_csv, write_matrix_csv, ParseError};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_OVERFLOW: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] csa_core::Error),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(csa_core::Error::InvalidInput(_) | csa_core::Error::InvalidParameter(_)) => EXIT_INVALID,
            CliError::Core(csa_core::Error::Infeasible(_)) => EXIT_INFEASIBLE,
            CliError::Core(csa_core::Error::Overflow(_)) => EXIT_OVERFLOW,
            CliError::Core(_) | CliError::Output { .. } => EXIT_FAILURE,
            CliError::Parse(_) | CliError::Usage(_) => EXIT_INVALID,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "csa", version, about = "Constrained subspace approximation by sketch, guess and solve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Constrained subspace estimation: at least `lmin` directions inside a model subspace.
    Cse(CseArgs),
    /// Partition-constrained lp subspace approximation.
    Pcsa(PcsaArgs),
    /// Projective nonnegative matrix factorization.
    Pnmf(PnmfArgs),
    /// k-means on the columns of the input.
    Kmeans(KmeansArgs),
    /// Row-sparse PCA.
    Sparsepca(SparsePcaArgs),
    /// Check the sketch cost band over random projections.
    VerifyCoreset(VerifyArgs),
    /// Brute-force reference values.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Input matrix, CSV, one data point per column.
    #[arg(long)]
    pub input: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    /// Cap on evaluated guesses (assignments, supports, candidates).
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Omit timing so repeated runs are byte-identical.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct DeltaArgs {
    /// Net granularity.
    #[arg(long, default_value_t = 0.25, conflicts_with = "multiplicative")]
    pub delta: f64,
    /// Set delta to eps·‖A − A_k‖²/‖A‖².
    #[arg(long)]
    pub multiplicative: bool,
}

#[derive(Debug, Args)]
pub struct CseArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub delta: DeltaArgs,
    /// Model subspace, CSV with spanning vectors as columns.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub lmin: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PcsaArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Subspace, CSV with spanning vectors as columns; repeatable.
    #[arg(long = "subspace")]
    pub subspaces: Vec<PathBuf>,
    /// Capacity of the matching --subspace; defaults to 1 each.
    #[arg(long = "cap")]
    pub caps: Vec<usize>,
    /// Condition-number schedule, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub kappas: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct PnmfArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub delta: DeltaArgs,
}

#[derive(Debug, Args)]
pub struct KmeansArgs {
    #[command(flatten)]
    pub common: Common,
    /// Rows kept by the importance sample; all points when absent.
    #[arg(long)]
    pub coreset_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SparsePcaArgs {
    #[command(flatten)]
    pub common: Common,
    /// Maximum number of nonzero rows.
    #[arg(long)]
    pub s: usize,
    /// Solve on the input itself rather than the sketch.
    #[arg(long)]
    pub identity: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleProblem {
    Kmeans,
    Cse,
    Pcsa,
    Pnmf,
    Sparsepca,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub problem: OracleProblem,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Exact intersection dimension for the cse grid.
    #[arg(long)]
    pub lmin: Option<usize>,
    #[arg(long = "subspace")]
    pub subspaces: Vec<PathBuf>,
    #[arg(long = "cap")]
    pub caps: Vec<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    /// Angle step of grid oracles.
    #[arg(long, default_value_t = 0.02)]
    pub resolution: f64,
    #[arg(long, default_value_t = 200)]
    pub restarts: usize,
}

/// Settings echoed in the report. Thread count is left out so reports do
/// not depend on it.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ConfigEcho {
    pub k: usize,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multiplicative: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_min: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coreset_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identity: Option<bool>,
    pub budget: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Guarantee {
    pub epsilon: f64,
    pub delta: Option<f64>,
    pub kappa: Option<f64>,
    /// Additive term of the guarantee for this run.
    pub delta_bound_value: Option<f64>,
    pub exhaustive: bool,
    pub guarantee_applies: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub app: String,
    pub version: String,
    pub seed: u64,
    pub config: ConfigEcho,
    pub cost_original: Option<f64>,
    pub cost_coreset: Option<f64>,
    pub guarantee: Option<Guarantee>,
    /// Row-major `d x k`.
    pub basis: Vec<Vec<f64>>,
    pub diagnostics: Option<Diagnostics>,
    pub extras: Value,
    pub timing_ms: Option<f64>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn options(c: &Common) -> RunOptions {
    RunOptions {
        budget: c.budget,
        seed: c.seed,
        parallelism: Parallelism::from_threads(c.threads),
        prune: true,
    }
}

fn echo(c: &Common) -> ConfigEcho {
    ConfigEcho {
        k: c.k,
        epsilon: c.eps,
        budget: c.budget,
        seed: c.seed,
        ..ConfigEcho::default()
    }
}

fn subspace(path: &Path) -> Result<Basis, CliError> {
    Ok(orthonormalize(parse_matrix_csv(path)?.as_matrix()))
}

fn groups(paths: &[PathBuf], caps: &[usize]) -> Result<Vec<PcsaGroup>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage("at least one --subspace is required".into()));
    }
    if !caps.is_empty() && caps.len() != paths.len() {
        return Err(CliError::Usage(format!(
            "{} --cap values for {} --subspace files",
            caps.len(),
            paths.len()
        )));
    }
    paths
        .iter()
        .enumerate()
        .map(|(t, p)| {
            Ok(PcsaGroup {
                subspace: subspace(p)?,
                capacity: caps.get(t).copied().unwrap_or(1),
            })
        })
        .collect()
}

fn resolve_delta(a: &DenseMatrix, c: &Common, d: &DeltaArgs) -> Result<f64, CliError> {
    Ok(if d.multiplicative {
        multiplicative_delta(a, c.k, c.eps)?.delta
    } else {
        d.delta
    })
}

fn guarantee(sol: &Solution, epsilon: f64, delta: Option<f64>, kappa: Option<f64>) -> Guarantee {
    Guarantee {
        epsilon,
        delta,
        kappa,
        delta_bound_value: Some(sol.diagnostics.delta_bound),
        exhaustive: sol.diagnostics.exhaustive,
        guarantee_applies: sol.diagnostics.guarantee_applies,
    }
}

fn solution_report(app: &str, config: ConfigEcho, sol: &Solution, guarantee: Guarantee, extras: Value) -> RunReport {
    RunReport {
        schema: SCHEMA_VERSION,
        app: app.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        config,
        cost_original: Some(sol.cost_original),
        cost_coreset: Some(sol.cost_coreset),
        guarantee: Some(guarantee),
        basis: rows_of(sol.basis.vectors()),
        diagnostics: Some(sol.diagnostics.clone()),
        extras,
        timing_ms: None,
    }
}

fn bare_report(app: &str, config: ConfigEcho, extras: Value) -> RunReport {
    RunReport {
        schema: SCHEMA_VERSION,
        app: app.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        config,
        cost_original: None,
        cost_coreset: None,
        guarantee: None,
        basis: Vec::new(),
        diagnostics: None,
        extras,
        timing_ms: None,
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

fn cse(args: &CseArgs) -> Result<RunReport, CliError> {
    let c = &args.common;
    let model = args.model.as_ref().ok_or_else(|| CliError::Usage("cse needs --model".into()))?;
    let l_min = args.lmin.ok_or_else(|| CliError::Usage("cse needs --lmin".into()))?;
    let a = parse_matrix_csv(&c.input)?;
    let w = subspace(model)?;
    let delta = resolve_delta(&a, c, &args.delta)?;
    let inst = CseInstance {
        a,
        w,
        k: c.k,
        l_min,
        epsilon: c.eps,
        delta,
    };
    let res = run_cse(&inst, &options(c))?;
    let config = ConfigEcho {
        delta: Some(delta),
        multiplicative: Some(args.delta.multiplicative),
        l_min: Some(l_min),
        ..echo(c)
    };
    let g = guarantee(&res.solution, c.eps, Some(delta), None);
    let extras = json!({
        "best_intersection": res.best_intersection,
        "measured_intersection": res.measured_intersection,
        "cases": to_value(&res.cases),
    });
    Ok(solution_report("cse", config, &res.solution, g, extras))
}

fn pcsa(args: &PcsaArgs) -> Result<RunReport, CliError> {
    let c = &args.common;
    let a = parse_matrix_csv(&c.input)?;
    let groups = groups(&args.subspaces, &args.caps)?;
    let kappas = args.kappas.clone().unwrap_or_else(|| DEFAULT_KAPPAS.to_vec());
    let inst = PcsaInstance {
        a,
        groups,
        p: args.p,
        epsilon: c.eps,
        kappas: kappas.clone(),
    };
    if inst.groups.iter().map(|g| g.capacity).sum::<usize>() != c.k {
        return Err(CliError::Usage("--k must equal the total capacity of the subspaces".into()));
    }
    let res = run_pcsa(&inst, &options(c))?;
    let config = ConfigEcho {
        p: Some(args.p),
        delta: Some(c.eps),
        kappas: Some(kappas),
        ..echo(c)
    };
    let g = guarantee(&res.solution, c.eps, Some(c.eps), Some(res.kappa));
    let extras = json!({
        "kappa": res.kappa,
        "runs": to_value(&res.runs),
        "stopped_early": res.stopped_early,
        "vectors": rows_of(&res.vectors),
        "feasible": res.partition.is_feasible(&res.vectors, csa_core::linalg::TAU_ORTH),
    });
    Ok(solution_report("pcsa", config, &res.solution, g, extras))
}

fn pnmf(args: &PnmfArgs) -> Result<RunReport, CliError> {
    let c = &args.common;
    let a = parse_matrix_csv(&c.input)?;
    let choice = if args.delta.multiplicative {
        DeltaChoice::Multiplicative
    } else {
        DeltaChoice::Fixed(args.delta.delta)
    };
    let inst = PnmfInstance {
        a,
        k: c.k,
        epsilon: c.eps,
        delta: choice,
    };
    let res = run_pnmf(&inst, &options(c))?;
    let config = ConfigEcho {
        delta: Some(res.delta),
        multiplicative: Some(args.delta.multiplicative),
        ..echo(c)
    };
    let g = guarantee(&res.solution, c.eps, Some(res.delta), None);
    let extras = json!({
        "delta": res.delta,
        "degenerate": res.degenerate,
        "feasible": csa_core::apps::is_pnmf_feasible(res.solution.basis.vectors(), csa_core::linalg::TAU_ORTH),
    });
    Ok(solution_report("pnmf", config, &res.solution, g, extras))
}

fn kmeans(args: &KmeansArgs) -> Result<RunReport, CliError> {
    let c = &args.common;
    let a = parse_matrix_csv(&c.input)?;
    let row_coreset = match args.coreset_size {
        Some(size) => RowCoreset::Sample { size, seed: c.seed },
        None => RowCoreset::None,
    };
    let inst = KmeansInstance {
        points: a.transpose(),
        k: c.k,
        epsilon: c.eps,
        row_coreset,
    };
    let res = run_kmeans(&inst, &options(c))?;
    let config = ConfigEcho {
        coreset_size: args.coreset_size,
        ..echo(c)
    };
    let mut report = bare_report("kmeans", config, json!({
        "centers": rows_of(&res.centers),
        "assignment": res.assignment,
        "reduced_dim": res.reduced_dim,
        "coreset_rows": res.coreset_rows,
        "weights": res.weights,
        "assignments_evaluated": res.assignments_evaluated,
    }));
    report.cost_original = Some(res.cost);
    report.cost_coreset = Some(res.cost_coreset);
    report.guarantee = Some(Guarantee {
        epsilon: c.eps,
        exhaustive: args.coreset_size.is_none(),
        guarantee_applies: args.coreset_size.is_none(),
        ..Guarantee::default()
    });
    Ok(report)
}

fn sparsepca(args: &SparsePcaArgs) -> Result<RunReport, CliError> {
    let c = &args.common;
    let a = parse_matrix_csv(&c.input)?;
    let tail = svd(a.as_matrix())?.tail_energy(c.k.min(a.rows().min(a.cols())));
    let inst = SparsePcaInstance {
        a,
        k: c.k,
        s_rows: args.s,
        epsilon: c.eps,
        identity_coreset: args.identity,
    };
    let res = run_sparse_pca(&inst, &options(c))?;
    let config = ConfigEcho {
        s_rows: Some(args.s),
        identity: Some(args.identity),
        ..echo(c)
    };
    let mut report = bare_report("sparsepca", config, json!({
        "support": res.support,
        "mass_max": res.mass_max,
        "supports_evaluated": res.supports_evaluated,
        "coreset_size": res.coreset.size(),
    }));
    report.cost_original = Some(res.cost_min);
    report.cost_coreset = Some(res.cost_coreset);
    report.basis = rows_of(res.basis.vectors());
    report.guarantee = Some(Guarantee {
        epsilon: c.eps,
        delta_bound_value: Some(if args.identity { 0.0 } else { c.eps * tail }),
        exhaustive: true,
        guarantee_applies: true,
        ..Guarantee::default()
    });
    Ok(report)
}

fn verify(args: &VerifyArgs) -> Result<RunReport, CliError> {
    let c = &args.common;
    let a = parse_matrix_csv(&c.input)?;
    let coreset = pcps_p2(&a, c.k, c.eps)?;
    let rep = verify_pcps(&a, &coreset.b, c.k, c.eps, args.samples, c.seed, Parallelism::from_threads(c.threads))?;
    let extras = json!({
        "coreset_size": coreset.size(),
        "verification": to_value(&rep),
    });
    Ok(bare_report("verify-coreset", echo(c), extras))
}

fn oracle(args: &OracleArgs) -> Result<RunReport, CliError> {
    let c = &args.common;
    let a = parse_matrix_csv(&c.input)?;
    let budget = c.budget.unwrap_or(ORACLE_BUDGET);
    let mut config = echo(c);
    let rep = match args.problem {
        OracleProblem::Kmeans => csa_oracle::brute_kmeans(&a.as_matrix().transpose(), c.k, budget)?,
        OracleProblem::Cse => {
            let model = args.model.as_ref().ok_or_else(|| CliError::Usage("cse oracle needs --model".into()))?;
            let lmin = args.lmin.ok_or_else(|| CliError::Usage("cse oracle needs --lmin".into()))?;
            config.l_min = Some(lmin);
            let split = SubspaceSplit::new(subspace(model)?, c.k, lmin)?;
            csa_oracle::brute_subspace_grid(a.as_matrix(), &ConstraintSpec::SubspaceSplit(split), 2.0, args.resolution, budget)?
        }
        OracleProblem::Pcsa => {
            config.p = Some(args.p);
            let groups = groups(&args.subspaces, &args.caps)?;
            let part = csa_core::apps::expand_groups(&groups)?;
            csa_oracle::brute_subspace_grid(a.as_matrix(), &ConstraintSpec::Partition(part), args.p, args.resolution, budget)?
        }
        OracleProblem::Pnmf => csa_oracle::brute_pnmf(a.as_matrix(), c.k, args.restarts, c.seed)?,
        OracleProblem::Sparsepca => {
            let s = args.s.ok_or_else(|| CliError::Usage("sparsepca oracle needs --s".into()))?;
            config.s_rows = Some(s);
            csa_oracle::sparse_pca_full_enum(a.as_matrix(), c.k, s, budget)?
        }
    };
    let mut report = bare_report("oracle", config, to_value(&rep));
    report.cost_original = Some(rep.opt_value);
    Ok(report)
}

/// Runs one subcommand and returns its report.
pub fn execute(command: &Command) -> Result<RunReport, CliError> {
    let (common, start) = (common_of(command), Instant::now());
    let mut report = match command {
        Command::Cse(a) => cse(a),
        Command::Pcsa(a) => pcsa(a),
        Command::Pnmf(a) => pnmf(a),
        Command::Kmeans(a) => kmeans(a),
        Command::Sparsepca(a) => sparsepca(a),
        Command::VerifyCoreset(a) => verify(a),
        Command::Oracle(a) => oracle(a),
    }?;
    if !common.deterministic {
        report.timing_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(report)
}

fn common_of(command: &Command) -> &Common {
    match command {
        Command::Cse(a) => &a.common,
        Command::Pcsa(a) => &a.common,
        Command::Pnmf(a) => &a.common,
        Command::Kmeans(a) => &a.common,
        Command::Sparsepca(a) => &a.common,
        Command::VerifyCoreset(a) => &a.common,
        Command::Oracle(a) => &a.common,
    }
}

/// Parses `argv`, runs, writes the report; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command).and_then(|r| emit(&r, common_of(&cli.command).output.as_deref())) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(report: &RunReport, output: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    match output {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Output {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
