use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use wavhelm::adaptive::{AdaptiveConfig, AdaptiveSolver, Termination};
use wavhelm::basis::{sample_pair, BasisSpec1D};
use wavhelm::problems::{error_norms, rhs_load_vector, ManufacturedProblem};
use wavhelm::refinement::{verify_norm_lemmas, LemmaReport};
use wavhelm::solver::{condition_number, multilevel_galerkin};
use wavhelm::tensor::HelmholtzOperator;
use wavhelm::WaveletError;

#[derive(Parser, Debug)]
#[command(name = "wavhelm", version, about = "Quadratic spline wavelet Helmholtz experiments")]
struct Cli {
    /// Write CSV here (manifest goes to `<out>.manifest.json`); stdout otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Condition numbers of the preconditioned stiffness matrices.
    Cond(CondArgs),
    /// Multilevel Galerkin solve of the boundary-layer problem.
    Galerkin(GalerkinArgs),
    /// Adaptive solve of the boundary-layer problem.
    Adaptive(AdaptiveArgs),
    /// Basis function samples.
    Basis {
        #[command(subcommand)]
        action: BasisAction,
    },
    /// Numerical checks of the dual matrix norm bounds.
    Lemmas {
        #[command(subcommand)]
        action: LemmaAction,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(allow_negative_numbers = true)]
struct CondArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Wavelet levels: `s` or an inclusive range `a..b`.
    #[arg(long, value_parser = parse_levels)]
    levels: Levels,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    #[arg(long, default_value_t = 2)]
    j0: u32,
    #[arg(long)]
    ortho: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(allow_negative_numbers = true)]
struct GalerkinArgs {
    #[arg(long, value_parser = parse_levels)]
    levels: Levels,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    /// Exponent of the uniform grid used for the maximum error.
    #[arg(long)]
    grid_exp: Option<u32>,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(allow_negative_numbers = true)]
struct AdaptiveArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    #[arg(long, default_value_t = 10)]
    maxlevel: u32,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long, default_value_t = 1e-6)]
    target: f64,
    #[arg(long, default_value_t = 20_000)]
    max_active: usize,
    #[arg(long, default_value_t = 200)]
    max_cycles: usize,
    #[arg(long, default_value_t = 5)]
    coarsen_every: usize,
    #[arg(long, default_value_t = 0.1)]
    coarsen_fraction: f64,
    /// Skip the error evaluation against the exact solution.
    #[arg(long)]
    no_errors: bool,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
enum BasisAction {
    /// Samples `x, phi_{j,k}(x), psi_{j,k}(x)`.
    Dump {
        #[arg(long)]
        j: u32,
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = 257)]
        samples: usize,
    },
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
enum LemmaAction {
    Verify {
        #[arg(long, default_value_t = 9)]
        jmax: u32,
    },
}

#[derive(Debug, Clone, Copy, Serialize)]
struct Levels {
    first: u32,
    last: u32,
}

fn parse_levels(s: &str) -> Result<Levels, String> {
    let parse = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("invalid level `{t}`: {e}"));
    let (first, last) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => (parse(s)?, parse(s)?),
    };
    if first > last {
        return Err(format!("empty level range {s}"));
    }
    Ok(Levels { first, last })
}

/// Failure classes mapped to exit codes; non-convergence is reported on a
/// successful [`Output`].
#[derive(Debug)]
enum Failure {
    Validation(anyhow::Error),
    Other(anyhow::Error),
}

impl From<WaveletError> for Failure {
    fn from(e: WaveletError) -> Self {
        match e {
            WaveletError::NotPositiveDefinite | WaveletError::ZeroDiagonal(_) => Failure::Other(e.into()),
            _ => Failure::Validation(e.into()),
        }
    }
}

struct Output {
    csv: String,
    /// Set when the result is written but a solver did not converge.
    not_converged: Option<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a Command,
    version: &'static str,
    timestamp: String,
    threads: usize,
    outputs: Vec<OutputChecksum>,
}

#[derive(Serialize)]
struct OutputChecksum {
    path: String,
    sha256: String,
    bytes: usize,
}

fn num(x: f64) -> String {
    format!("{x:.5e}")
}

fn cond(args: &CondArgs) -> Result<Output, Failure> {
    let mut csv = String::from("dim,j0,s,eps,a,ortho,N,lambda_min,lambda_max,cond,iterations\n");
    let mut not_converged = None;
    for s in args.levels.first..=args.levels.last {
        let spec = BasisSpec1D::new(args.j0, s)?.with_ortho(args.ortho);
        let op = HelmholtzOperator::new(args.dim, spec, args.eps, args.a)?;
        let est = condition_number(&op)?;
        if !est.converged {
            not_converged = Some(format!("Lanczos did not converge for s = {s}"));
        }
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            args.dim,
            args.j0,
            s,
            num(args.eps),
            num(args.a),
            args.ortho,
            op.len(),
            num(est.lambda_min),
            num(est.lambda_max),
            num(est.condition_number()),
            est.iterations
        )
        .expect("write to string");
    }
    Ok(Output { csv, not_converged })
}

fn galerkin(args: &GalerkinArgs) -> Result<Output, Failure> {
    let mut csv = String::from("s,N,M,linf,l2,level_iterations\n");
    let mut not_converged = None;
    let problem = ManufacturedProblem::new(args.dim, args.eps, args.a)?;
    for s in args.levels.first..=args.levels.last {
        let ops = (0..=s)
            .map(|j| HelmholtzOperator::new(args.dim, BasisSpec1D::new(2, j)?, args.eps, args.a))
            .collect::<wavhelm::Result<Vec<_>>>()?;
        let finest = ops.last().expect("at least one level");
        let f = rhs_load_vector(&problem, finest)?;
        let report = multilevel_galerkin(&ops, &f, args.max_iter)?;
        if !report.converged {
            not_converged = Some(format!("CG did not reach the tolerance for s = {s}"));
        }
        let e = error_norms(&report.solution, &problem, finest, args.grid_exp)?;
        let its: Vec<String> = report.level_iterations.iter().map(usize::to_string).collect();
        writeln!(
            csv,
            "{s},{},{},{},{},{}",
            finest.len(),
            num(report.equivalent_iterations),
            num(e.linf),
            num(e.l2),
            its.join(";")
        )
        .expect("write to string");
    }
    Ok(Output { csv, not_converged })
}

fn adaptive(args: &AdaptiveArgs) -> Result<Output, Failure> {
    let problem = ManufacturedProblem::new(args.dim, args.eps, args.a)?;
    let solver = AdaptiveSolver::new(args.dim, args.eps, args.a, args.maxlevel, problem.rhs())?;
    let config = AdaptiveConfig {
        theta: args.theta,
        target: args.target,
        max_level: args.maxlevel,
        max_cycles: args.max_cycles,
        coarsen_every: args.coarsen_every,
        coarsen_fraction: args.coarsen_fraction,
        max_active: args.max_active,
    };
    let result = solver.solve(&config, (!args.no_errors).then_some(&problem))?;
    let mut csv = String::from("cycle,active,residual,linf,l2\n");
    for h in &result.history {
        let (linf, l2) = h.errors.map_or((String::new(), String::new()), |e| (num(e.linf), num(e.l2)));
        writeln!(csv, "{},{},{},{linf},{l2}", h.cycle, h.active, num(h.residual)).expect("write to string");
    }
    let not_converged = match result.termination {
        Termination::Converged | Termination::Saturated => None,
        other => Some(format!("target residual not reached: {other:?}")),
    };
    Ok(Output { csv, not_converged })
}

fn basis_dump(j: u32, k: u32, samples: usize) -> Result<Output, Failure> {
    if samples < 2 {
        return Err(Failure::Validation(anyhow!("need at least two samples")));
    }
    let mut csv = String::from("x,phi,psi\n");
    for (x, phi, psi) in sample_pair::<f64>(j, k, samples)? {
        writeln!(csv, "{},{},{}", num(x), num(phi), num(psi)).expect("write to string");
    }
    Ok(Output { csv, not_converged: None })
}

fn lemmas(jmax: u32) -> Result<Output, Failure> {
    let report = verify_norm_lemmas(jmax)?;
    let mut csv = String::from("check,j,value,bound,ok\n");
    let mut row = |name: &str, j: String, v: f64, bound: Option<f64>, ok: bool| {
        let bound = bound.map(num).unwrap_or_default();
        writeln!(csv, "{name},{j},{},{bound},{ok}", num(v)).expect("write to string");
    };
    for &(j, v) in &report.dual_norms {
        let bound = LemmaReport::DUAL_NORM_BOUND;
        row("dual_norm", j.to_string(), v, Some(bound), v <= bound);
    }
    for &(j, v) in &report.compressed_norms {
        let bound = LemmaReport::COMPRESSED_NORM_BOUND;
        row("compressed_norm", j.to_string(), v, Some(bound), v < bound);
    }
    for &(n, v) in &report.product_norms {
        row("product_norm", n.to_string(), v, None, true);
    }
    let bound = LemmaReport::GROWTH_EXPONENT_BOUND;
    row("growth_exponent", String::new(), report.growth_exponent, Some(bound), report.growth_ok());
    if !report.all_ok() {
        return Err(Failure::Other(anyhow!("norm checks failed:\n{csv}")));
    }
    Ok(Output { csv, not_converged: None })
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn emit(cli: &Cli, output: &Output) -> anyhow::Result<()> {
    let digest = hex::encode(Sha256::digest(output.csv.as_bytes()));
    let manifest = Manifest {
        command: &cli.command,
        version: env!("CARGO_PKG_VERSION"),
        timestamp: chrono::Utc::now().to_rfc3339(),
        threads: rayon::current_num_threads(),
        outputs: vec![OutputChecksum {
            path: cli.out.as_ref().map_or_else(|| "-".into(), |p| p.display().to_string()),
            sha256: digest,
            bytes: output.csv.len(),
        }],
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    match &cli.out {
        Some(path) => {
            std::fs::write(path, &output.csv).with_context(|| format!("writing {}", path.display()))?;
            let mpath = manifest_path(path);
            std::fs::write(&mpath, json + "\n").with_context(|| format!("writing {}", mpath.display()))?;
        }
        None => {
            print!("{}", output.csv);
            eprintln!("{json}");
        }
    }
    Ok(())
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("WAVHELM_THREADS") {
        let n: usize = v.parse().with_context(|| format!("WAVHELM_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            bail!("WAVHELM_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    configure_threads().map_err(Failure::Validation)?;
    match &cli.command {
        Command::Cond(args) => cond(args),
        Command::Galerkin(args) => galerkin(args),
        Command::Adaptive(args) => adaptive(args),
        Command::Basis { action: BasisAction::Dump { j, k, samples } } => basis_dump(*j, *k, *samples),
        Command::Lemmas { action: LemmaAction::Verify { jmax } } => lemmas(*jmax),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let output = match run(&cli) {
        Ok(o) => o,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = emit(&cli, &output) {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    match &output.not_converged {
        Some(msg) => {
            eprintln!("warning: {msg}");
            ExitCode::from(3)
        }
        None => ExitCode::SUCCESS,
    }
}
