mod verify;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gapbound::bound::{self, BoundConfig, DEFAULT_ERGODICITY_THRESHOLD};
use gapbound::dynamics;
use gapbound::ensembles::{self, EnsembleSpec, ScanOptions};
use gapbound::generator::{check_detailed_balance, symmetrize, GeneratorMatrix, ProbabilityVector};
use gapbound::io::{self, Input};
use gapbound::spectra::{self, HermitianOperator};
use gapbound::Error;

#[derive(Parser)]
#[command(name = "gapbound", version, about = "Spectral gaps of master equations and Hermitian operators")]
#[command(after_help = "Logging: set GAPBOUND_LOG to error, info or debug (default error).")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the gap bound for an operator or generator file.
    Analyze(AnalyzeArgs),
    /// Run an ensemble scan described by a JSON spec.
    Scan(ScanArgs),
    /// Integrate the master equation and fit the relaxation rate.
    Simulate(SimulateArgs),
    /// Run the built-in property suites.
    Verify(VerifyArgs),
    /// Write a generator instance as an edge list.
    Gen(GenArgs),
}

#[derive(Args)]
struct GArgs {
    /// Value of g(M) used by the hypotheses.
    #[arg(long, conflicts_with = "alpha")]
    g: Option<f64>,
    /// Exponent α in g = 1/[ln M]^α; used when --g is absent.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

impl GArgs {
    fn g_at(&self, m: usize) -> gapbound::Result<f64> {
        match self.g {
            Some(g) if g > 0.0 && g.is_finite() => Ok(g),
            Some(g) => Err(Error::InvalidParameter(format!("--g must be positive, got {g}"))),
            None => bound::g_from_alpha(m, self.alpha),
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Edge list (`masterq v1 M=<size>`) or matrix dump.
    input: PathBuf,
    #[command(flatten)]
    g: GArgs,
    /// Threshold on min |u_n| for the ergodicity class.
    #[arg(long, default_value_t = DEFAULT_ERGODICITY_THRESHOLD)]
    ergodicity_tol: f64,
    /// Report JSON path; `-` writes to stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct ScanArgs {
    /// Ensemble spec (JSON).
    spec: PathBuf,
    /// Override the master seed of the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent rows.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Record per-row wall time; otherwise the wall_ms column is 0.
    #[arg(long)]
    wall_time: bool,
    /// CSV path; `-` writes to stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Generator edge list.
    input: PathBuf,
    /// Initial distribution: `uniform`, `delta:<state>` (1-based) or a file of weights.
    #[arg(long, default_value = "uniform")]
    p0: String,
    /// Last sample time.
    #[arg(long, default_value_t = 10.0)]
    t_max: f64,
    /// Number of equal time steps up to --t-max.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Seed for the jump-process sampler.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also sample R jump trajectories up to --t-max, given as `R=<count>`.
    #[arg(long, value_name = "R=<count>", default_value = "R=0")]
    jump_process: String,
    /// Output directory for trajectory.csv, fit.json and histogram.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Small,
    Full,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_enum, default_value_t = Scale::Small)]
    scale: Scale,
    /// Reference vectors (JSON); `builtin` uses the bundled table.
    #[arg(long, default_value = "builtin")]
    vectors: String,
    /// Master seed of the random suites.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenFamily {
    Complete,
    Cycle,
    Star,
    RandomRegular,
    ErConnected,
    Metropolis,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    family: GenFamily,
    /// Number of states.
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Degree for random-regular.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Edge probability for er-connected.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Inverse temperature for metropolis (on a cycle, energies uniform in [0,1]).
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Rescale rates so the largest equals 1/[ln M]^α.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Edge-list path; `-` writes to stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

/// Failure with its exit code: 1 for analysis failures, 2 for bad input.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NoConvergence(_)
            | Error::NoGap
            | Error::ZeroGroundComponent { .. }
            | Error::Fit(_)
            | Error::RejectionCap(_)
            | Error::NonPositiveStationary { .. } => 1,
            _ => 2,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn input_error(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn is_stdout(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn write_out(path: &Path, text: &str) -> Result<(), Failure> {
    if is_stdout(path) {
        print!("{text}");
        std::io::stdout().flush().ok();
        Ok(())
    } else {
        fs::write(path, text).map_err(|e| input_error(format!("{}: {e}", path.display())))
    }
}

/// The summary goes to stdout unless stdout already carries the artifact.
fn summary(artifact_on_stdout: bool, line: &str) {
    if artifact_on_stdout {
        eprintln!("{line}");
    } else {
        println!("{line}");
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("nan".into(), |v| format!("{v:.6}"))
}

/// The Hermitian operator analysed for a generator: `L` itself when symmetric,
/// its symmetrization when detailed balance holds.
fn operator_of(l: &GeneratorMatrix) -> gapbound::Result<HermitianOperator> {
    if l.is_symmetric() {
        return l.to_operator();
    }
    let p = check_detailed_balance(l, None)?;
    symmetrize(l, &p)
}

fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let text = read(&args.input)?;
    let h = match io::parse_input(&text)? {
        Input::Generator(l) => operator_of(&l)?,
        Input::Matrix(m) => HermitianOperator::real(m)?,
    };
    let g = args.g.g_at(h.size())?;
    if !(args.ergodicity_tol > 0.0) {
        return Err(input_error("--ergodicity-tol must be positive"));
    }
    let config = BoundConfig::new(g).with_ergodicity_threshold(args.ergodicity_tol);
    let report = bound::bound_verdict(&h, &config)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_out(&args.out, &format!("{json}\n"))?;
    summary(
        is_stdout(&args.out),
        &format!("{} {} {:.6} {:.6}", report.verdict, fmt_opt(report.ratio), report.mu2, report.min_v),
    );
    Ok(())
}

fn scan(args: ScanArgs) -> Result<(), Failure> {
    let mut spec = EnsembleSpec::from_json(&read(&args.spec)?)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if args.jobs == 0 {
        return Err(input_error("--jobs must be positive"));
    }
    let rows = ensembles::scan(&spec, ScanOptions { jobs: args.jobs, wall_time: args.wall_time })?;
    write_out(&args.out, &ensembles::scan_csv(&rows))?;
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio()).collect();
    let failed = rows.iter().filter(|r| r.report.is_err()).count();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let range = if ratios.is_empty() { "ratio n/a".to_string() } else { format!("ratio min {lo:.6} max {hi:.6}") };
    summary(is_stdout(&args.out), &format!("{} rows ({failed} failed), {range}", rows.len()));
    Ok(())
}

fn parse_p0(spec: &str, m: usize) -> Result<ProbabilityVector, Failure> {
    if spec == "uniform" {
        return Ok(ProbabilityVector::uniform(m));
    }
    if let Some(state) = spec.strip_prefix("delta:") {
        let n: usize = state.parse().map_err(|_| input_error(format!("--p0: invalid state `{state}`")))?;
        if n == 0 || n > m {
            return Err(input_error(format!("--p0: state {n} out of range 1..={m}")));
        }
        return Ok(ProbabilityVector::delta(m, n - 1)?);
    }
    let text = read(Path::new(spec))?;
    let w: Vec<f64> = text
        .split_whitespace()
        .map(|s| s.parse::<f64>().map_err(|_| input_error(format!("--p0: invalid weight `{s}`"))))
        .collect::<Result<_, _>>()?;
    if w.len() != m {
        return Err(input_error(format!("--p0: expected {m} weights, got {}", w.len())));
    }
    ProbabilityVector::normalized(w).map_err(|e| input_error(format!("--p0: not normalizable: {e}")))
}

fn parse_repetitions(arg: &str) -> Result<u64, Failure> {
    arg.strip_prefix("R=")
        .and_then(|r| r.parse().ok())
        .ok_or_else(|| input_error(format!("--jump-process: expected R=<count>, got `{arg}`")))
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let l = match io::parse_input(&read(&args.input)?)? {
        Input::Generator(l) => l,
        Input::Matrix(_) => return Err(input_error("simulate needs a generator edge list")),
    };
    let p0 = parse_p0(&args.p0, l.size())?;
    if !(args.t_max >= 0.0) || !args.t_max.is_finite() {
        return Err(input_error("--t-max must be finite and non-negative"));
    }
    let reps = parse_repetitions(&args.jump_process)?;
    let times: Vec<f64> = if args.t_max == 0.0 || args.steps == 0 {
        vec![0.0]
    } else {
        (0..=args.steps).map(|i| args.t_max * i as f64 / args.steps as f64).collect()
    };
    fs::create_dir_all(&args.out).map_err(|e| input_error(format!("{}: {e}", args.out.display())))?;
    let traj = dynamics::evolve(&l, &p0, &times)?;
    write_out(&args.out.join("trajectory.csv"), &traj.to_csv())?;

    let fit = dynamics::relaxation_rate(&l, &p0);
    let spectral = operator_of(&l).ok().and_then(|h| spectra::eigenvalues(&h).ok()).and_then(|ev| {
        let levels = spectra::cluster_levels(&ev, spectra::default_degeneracy_tol(&ev));
        (levels.len() > 1).then(|| levels[1].value - levels[0].value)
    });
    let json = match &fit {
        Ok(f) => serde_json::json!({ "fit": f, "spectral_mu2": spectral }),
        Err(e) => serde_json::json!({ "fit": null, "error": e.to_string(), "spectral_mu2": spectral }),
    };
    write_out(&args.out.join("fit.json"), &format!("{}\n", serde_json::to_string_pretty(&json).expect("json")))?;
    match &fit {
        Ok(f) => println!("fitted rate {:.6} spectral mu2 {}", f.rate, fmt_opt(spectral)),
        Err(e) => println!("fitted rate n/a ({e}) spectral mu2 {}", fmt_opt(spectral)),
    }

    if reps > 0 {
        let start = p0
            .as_slice()
            .iter()
            .position(|&x| x == 1.0)
            .ok_or_else(|| input_error("--jump-process needs a delta:<state> initial distribution"))?;
        let hist = dynamics::jump_process_sample(&l, start, args.t_max, reps, args.seed)?;
        write_out(&args.out.join("histogram.csv"), &hist.to_csv())?;
        let expect = traj.states.last().expect("at least one sample");
        let z = hist
            .frequencies()
            .iter()
            .zip(expect)
            .map(|(f, p)| {
                let se = (p * (1.0 - p) / reps as f64).sqrt();
                if se > 0.0 {
                    (f - p).abs() / se
                } else if (f - p).abs() > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        println!("jump process R={reps}: max deviation {z:.2} standard errors");
        if z > 4.0 {
            return Err(Failure { code: 1, msg: format!("histogram deviates from evolve by {z:.2} standard errors") });
        }
    }
    Ok(())
}

fn gen(args: GenArgs) -> Result<(), Failure> {
    let m = args.m;
    let l = match args.family {
        GenFamily::Complete => ensembles::complete(m)?,
        GenFamily::Cycle => ensembles::cycle(m)?,
        GenFamily::Star => ensembles::star(m)?,
        GenFamily::RandomRegular => ensembles::random_regular(m, args.k, args.seed)?,
        GenFamily::ErConnected => ensembles::er_connected(m, args.p, args.seed)?,
        GenFamily::Metropolis => {
            let energies = ensembles::random_energies(m, 1.0, args.seed);
            ensembles::metropolis_chain(&energies, args.beta, &ensembles::cycle(m)?)?
        }
    };
    let l = match args.alpha {
        Some(a) => ensembles::infinitesimal_rescale(&l, a)?,
        None => l,
    };
    write_out(&args.out, &io::write_edge_list(&l))?;
    summary(is_stdout(&args.out), &format!("{} states, {} rates", l.size(), l.rates().len()));
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Scan(a) => scan(a),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => {
            let full = matches!(a.scale, Scale::Full);
            verify::run(full, &a.vectors, a.seed)
                .map_err(|f| Failure { code: f.code, msg: f.msg })
        }
        Command::Gen(a) => gen(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GAPBOUND_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
