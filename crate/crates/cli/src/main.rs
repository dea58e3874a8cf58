use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use frameharm::frame::{
    component_norms, gleason_additivity_check, projector_measure, random_orthonormal_basis, read_samples_csv,
    sample_frame, verify_frame, write_samples_csv, AdditivityCheck, GleasonReport, VerifyConfig, MC_SIGMAS,
};
use frameharm::harmonics::{
    build_basis_with, schur_inner_product, zonal_frame_sum, zonal_polynomial, BasisConfig, BiDegree, Integration,
};
use frameharm::polynomials::TermRecord;
use frameharm::{Error, FrameFunction, McOptions, OperatorMatrix, RngStream, SpherePoint, SpherePolynomial};
use num_complex::Complex64;
use serde::Serialize;

const VERSION: &str = match option_env!("FRAMEHARM_GIT_DESCRIBE") {
    Some(v) => v,
    None => concat!("v", env!("CARGO_PKG_VERSION")),
};

#[derive(Parser, Debug)]
#[command(name = "frameharm", version = VERSION, about = "Frame functions and complex spherical harmonics on S^{2n-1}")]
struct Cli {
    #[command(flatten)]
    config: RunConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct RunConfig {
    /// Dimension of C^n (taken from the input file when one is given)
    #[arg(long, global = true, env = "FRAMEHARM_N")]
    n: Option<usize>,
    #[arg(long, global = true, env = "FRAMEHARM_SEED", default_value_t = 0)]
    seed: u64,
    /// Monte Carlo sample count
    #[arg(long, global = true, env = "FRAMEHARM_SAMPLES", default_value_t = 100_000)]
    samples: usize,
    #[arg(long, global = true, env = "FRAMEHARM_TOL", default_value_t = 1e-8)]
    tol: f64,
    /// Largest total degree p+q considered
    #[arg(long, global = true, env = "FRAMEHARM_MAX_BIDEGREE", default_value_t = 4)]
    max_bidegree: u32,
    /// Operator JSON, polynomial JSON (term records) or sample CSV
    #[arg(long, global = true, env = "FRAMEHARM_INPUT")]
    input: Option<PathBuf>,
    /// Output file (stdout when absent)
    #[arg(long, global = true, env = "FRAMEHARM_OUTPUT")]
    output: Option<PathBuf>,
    #[arg(long, global = true, env = "FRAMEHARM_WORKERS", default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Frame check, residual, both reconstructions, Hermiticity and additivity
    VerifyFrame,
    /// Norms of the harmonic components with p+q <= max-bidegree
    Decompose,
    /// R(1), R(0) and R(1)+(n-1)R(0) for every p+q <= max-bidegree
    ZonalTable,
    /// Monte Carlo character inner products
    CharacterCheck {
        /// Semicolon-separated list such as "0,0;1,1;2,0"
        #[arg(long, default_value = "0,0;1,1;2,0")]
        bidegrees: String,
    },
    /// Normalize an operator to unit trace and check additivity
    GleasonDemo {
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Sample an operator or polynomial input into CSV
    Sample,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ResourceGuard { .. } => 3,
            Error::Disagreement(_) | Error::SamplingFailure { .. } => 1,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    tolerances: Tolerances,
    passed: bool,
    result: T,
}

#[derive(Serialize)]
struct Tolerances {
    tol: f64,
    exact: f64,
    hermitian: f64,
    mc_sigmas: f64,
}

fn tolerances(cfg: &RunConfig) -> Tolerances {
    Tolerances {
        tol: cfg.tol,
        exact: frameharm::frame::EXACT_TOL,
        hermitian: frameharm::frame::HERMITIAN_TOL,
        mc_sigmas: MC_SIGMAS,
    }
}

fn emit(cfg: &RunConfig, bytes: &[u8]) -> Result<(), Failure> {
    match &cfg.output {
        Some(path) => fs::write(path, bytes).map_err(|e| usage(format!("cannot write {}: {e}", path.display()))),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| usage(format!("cannot write stdout: {e}"))),
    }
}

fn emit_report<T: Serialize>(cfg: &RunConfig, command: &'static str, passed: bool, result: T) -> Result<(), Failure> {
    let env = Envelope {
        tool: "frameharm",
        version: VERSION,
        command,
        config: cfg,
        tolerances: tolerances(cfg),
        passed,
        result,
    };
    let mut text = serde_json::to_string_pretty(&env).map_err(|e| usage(e.to_string()))?;
    text.push('\n');
    emit(cfg, text.as_bytes())
}

fn emit_csv(cfg: &RunConfig, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let fail = |e: csv::Error| usage(e.to_string());
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| usage(e.to_string()))?;
    emit(cfg, &bytes)
}

fn validate(cfg: &RunConfig) -> Result<(), Failure> {
    if let Some(n) = cfg.n {
        if n < 3 {
            return Err(usage(format!("--n must be at least 3, got {n}")));
        }
    }
    if cfg.samples < 2 {
        return Err(usage(format!("--samples must be at least 2, got {}", cfg.samples)));
    }
    if !(cfg.tol > 0.0 && cfg.tol.is_finite()) {
        return Err(usage(format!("--tol must be positive, got {}", cfg.tol)));
    }
    if cfg.workers == 0 {
        return Err(usage("--workers must be positive"));
    }
    Ok(())
}

fn dimension(cfg: &RunConfig) -> usize {
    cfg.n.unwrap_or(3)
}

fn load_input(cfg: &RunConfig) -> Result<FrameFunction, Failure> {
    let path = cfg.input.as_ref().ok_or_else(|| usage("--input is required"))?;
    let f = load_path(path)?;
    if let Some(n) = cfg.n {
        if n != f.n() {
            return Err(usage(format!("--n {n} does not match input dimension {}", f.n())));
        }
    }
    Ok(f)
}

fn load_path(path: &Path) -> Result<FrameFunction, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let head = text.trim_start();
    let f = if head.starts_with('{') {
        FrameFunction::operator(OperatorMatrix::from_json(&text)?)?
    } else if head.starts_with('[') {
        let records: Vec<TermRecord> = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            field: "terms".into(),
            message: e.to_string(),
        })?;
        let poly = SpherePolynomial::<Complex64>::from_records(&records, None)?;
        FrameFunction::from_polynomial(&poly)?
    } else {
        FrameFunction::samples(read_samples_csv(text.as_bytes())?)?
    };
    Ok(f)
}

fn mc_options(cfg: &RunConfig) -> McOptions {
    McOptions::new(cfg.samples).with_workers(cfg.workers)
}

fn cmd_verify_frame(cfg: &RunConfig) -> Result<bool, Failure> {
    let f = load_input(cfg)?;
    let vcfg = VerifyConfig {
        tol: cfg.tol,
        j_max: cfg.max_bidegree.max(1),
        ..VerifyConfig::default()
    };
    let report: GleasonReport = verify_frame(&f, &vcfg, RngStream::new(cfg.seed, 0))?;
    for j in report.residual.flagged() {
        log::warn!("residual component {j} is significant");
    }
    let passed = report.passed;
    emit_report(cfg, "verify-frame", passed, &report)?;
    Ok(passed)
}

fn cmd_decompose(cfg: &RunConfig) -> Result<bool, Failure> {
    let f = load_input(cfg)?;
    let basis_cfg = BasisConfig::default();
    for j in BiDegree::all_up_to(cfg.max_bidegree) {
        build_basis_with(f.n(), j, &basis_cfg)?;
    }
    // models are integrated exactly; sample sets are averaged over their points
    let comps = component_norms(&f, cfg.max_bidegree, Integration::Exact, cfg.tol, false)?;
    let rows: Vec<Vec<String>> = comps
        .iter()
        .filter(|c| c.significant)
        .map(|c| vec![c.p.to_string(), c.q.to_string(), c.dim.to_string(), format!("{:?}", c.norm)])
        .collect();
    emit_csv(cfg, &["p", "q", "dim", "component_l2_norm"], &rows)?;
    Ok(true)
}

fn cmd_zonal_table(cfg: &RunConfig) -> Result<bool, Failure> {
    let n = dimension(cfg);
    let mut rows = Vec::new();
    for j in BiDegree::all_up_to(cfg.max_bidegree) {
        let r = zonal_polynomial(n, j)?;
        let sum = zonal_frame_sum(n, j)?;
        rows.push(vec![
            j.p.to_string(),
            j.q.to_string(),
            r.value_at_one().to_string(),
            r.value_at_zero().to_string(),
            sum.to_string(),
        ]);
    }
    emit_csv(cfg, &["p", "q", "R1", "R0", "sum"], &rows)?;
    Ok(true)
}

#[derive(Serialize)]
struct CharacterRow {
    j: BiDegree,
    k: BiDegree,
    mean: Complex64,
    stderr: f64,
    expected: f64,
    z_score: f64,
    passed: bool,
}

fn parse_bidegrees(s: &str) -> Result<Vec<BiDegree>, Failure> {
    let list: Vec<BiDegree> = s
        .split(';')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.parse::<BiDegree>())
        .collect::<Result<_, _>>()?;
    if list.is_empty() {
        return Err(usage("--bidegrees is empty"));
    }
    Ok(list)
}

fn cmd_character_check(cfg: &RunConfig, bidegrees: &str) -> Result<bool, Failure> {
    let n = dimension(cfg);
    let list = parse_bidegrees(bidegrees)?;
    let basis_cfg = BasisConfig::default();
    let spaces = list
        .iter()
        .map(|&j| build_basis_with(n, j, &basis_cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut stream_id = 0u64;
    for (a, sa) in list.iter().zip(&spaces) {
        for (b, sb) in list.iter().zip(&spaces) {
            let est = schur_inner_product(sa, sb, mc_options(cfg), RngStream::new(cfg.seed, stream_id))?;
            stream_id += 1;
            let expected = if a == b { 1.0 } else { 0.0 };
            let target = Complex64::new(expected, 0.0);
            // the trivial character is exactly 1, so (0,0) with itself has zero spread
            let passed = est.within(target, MC_SIGMAS) || (est.mean - target).norm() <= frameharm::frame::EXACT_TOL;
            rows.push(CharacterRow {
                j: *a,
                k: *b,
                mean: est.mean,
                stderr: est.stderr,
                expected,
                z_score: est.z_score(target),
                passed,
            });
        }
    }
    let passed = rows.iter().all(|r| r.passed);
    emit_report(cfg, "character-check", passed, &rows)?;
    Ok(passed)
}

#[derive(Serialize)]
struct ProjectorSample {
    rank: usize,
    measure: Complex64,
}

#[derive(Serialize)]
struct GleasonDemo {
    normalized: frameharm::frame::OperatorRecord,
    additivity: AdditivityCheck,
    positive: bool,
    projectors: Vec<ProjectorSample>,
}

fn cmd_gleason_demo(cfg: &RunConfig, trials: usize) -> Result<bool, Failure> {
    let f = load_input(cfg)?;
    let FrameFunction::Operator(a) = f else {
        return Err(usage("gleason-demo needs an operator JSON input"));
    };
    let tr = a.trace();
    if tr.norm() <= frameharm::frame::EXACT_TOL {
        return Err(usage("operator has zero trace and cannot be normalized"));
    }
    let t = a.scale(tr.inv());
    let mut rng = RngStream::new(cfg.seed, 0).rng();
    let additivity = gleason_additivity_check(&t, trials, &mut rng)?;
    let mut projectors = Vec::new();
    for rank in 1..=t.n() {
        let basis = random_orthonormal_basis(t.n(), &mut rng)?;
        let members: Vec<&SpherePoint> = basis.vectors().iter().take(rank).collect();
        projectors.push(ProjectorSample {
            rank,
            measure: projector_measure(&t, &members),
        });
    }
    let passed = additivity.max_error <= frameharm::frame::EXACT_TOL;
    let demo = GleasonDemo {
        normalized: t.to_record(),
        positive: additivity.negative_eigenvalues.is_empty(),
        additivity,
        projectors,
    };
    emit_report(cfg, "gleason-demo", passed, &demo)?;
    Ok(passed)
}

fn cmd_sample(cfg: &RunConfig) -> Result<bool, Failure> {
    let f = load_input(cfg)?;
    if !f.is_evaluatable() {
        return Err(usage("sample needs an operator or polynomial input"));
    }
    let data = sample_frame(&f, cfg.samples, RngStream::new(cfg.seed, 0))?;
    let mut buf = Vec::new();
    write_samples_csv(&mut buf, &data)?;
    emit(cfg, &buf)?;
    Ok(true)
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    validate(&cli.config)?;
    let cfg = &cli.config;
    match &cli.command {
        Command::VerifyFrame => cmd_verify_frame(cfg),
        Command::Decompose => cmd_decompose(cfg),
        Command::ZonalTable => cmd_zonal_table(cfg),
        Command::CharacterCheck { bidegrees } => cmd_character_check(cfg, bidegrees),
        Command::GleasonDemo { trials } => cmd_gleason_demo(cfg, *trials),
        Command::Sample => cmd_sample(cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
