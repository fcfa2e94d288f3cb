use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crowdstream::baselines::posterior_predictions;
use crowdstream::{
    AveragingMode, Dataset, EmOptions, ExperimentMetrics, ExperimentOptions, GeneratorConfig,
    LabelProfile, ObservationVector, StreamingAggregator, TolerancePolicy, beta_heuristic,
    dawid_skene_em, evaluate, load_labels, majority_vote,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Streaming crowd-label aggregation: benchmark simulator, dataset
/// evaluation and a stdin/stdout prediction filter.
#[derive(Parser)]
#[command(name = "crowdstream", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run synthetic-stream benchmarks and write a metrics table.
    Simulate(SimulateArgs),
    /// Score aggregation methods against a labelled dataset.
    Eval(EvalArgs),
    /// Stream task rows from stdin, emit one prediction per row.
    Predict(PredictArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProfileKind {
    HammerSpammer,
    Sinusoid,
    Explicit,
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of labellers.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Probability that a labeller answers a task.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Error-probability profile of the crowd.
    #[arg(long, value_enum, default_value = "hammer-spammer")]
    profile: ProfileKind,
    /// Error probability of the informative half (hammer-spammer profile).
    #[arg(long, default_value_t = 0.0)]
    p1: f64,
    /// Comma-separated error probabilities (explicit profile).
    #[arg(long)]
    p: Option<String>,
    /// Angular frequency of the drifting profile, radians per task.
    #[arg(long)]
    omega: Option<f64>,
    /// EWMA averaging parameter; defaults to the drift heuristic for the
    /// sinusoid profile and to the uniform average otherwise.
    #[arg(long)]
    beta: Option<f64>,
    /// Drift speed fed to the averaging heuristic (defaults to omega/4).
    #[arg(long)]
    sigma: Option<f64>,
    /// Number of tasks per run.
    #[arg(long, default_value_t = 1000)]
    tasks: usize,
    /// Number of independent runs to average over.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Master seed; run r uses independent streams derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed solver tolerance override.
    #[arg(long)]
    tol: Option<f64>,
    /// Refit the batch EM baseline every this many tasks (adds a column).
    #[arg(long)]
    em_every: Option<usize>,
    /// Exit with status 3 if the estimator fell back on every task.
    #[arg(long)]
    strict: bool,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Labels file: `task worker label` records, tab- or comma-delimited.
    #[arg(long)]
    labels: PathBuf,
    /// Truth file: `task label` records.
    #[arg(long)]
    truth: PathBuf,
    /// Comma-separated methods to score (mv, em, ab).
    #[arg(long, default_value = "mv,em,ab")]
    methods: String,
    /// Decode each task before folding it in, instead of decoding everything
    /// with the final weights.
    #[arg(long)]
    prequential: bool,
    /// Seed for tie-breaking draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed solver tolerance override.
    #[arg(long)]
    tol: Option<f64>,
    /// Exit with status 3 if the estimator fell back on every task.
    #[arg(long)]
    strict: bool,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Seed for tie-breaking draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed solver tolerance override.
    #[arg(long)]
    tol: Option<f64>,
    /// Exit with status 3 if the estimator fell back on every task.
    #[arg(long)]
    strict: bool,
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn data(err: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: err.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Ok(threads) = std::env::var("CROWDSTREAM_THREADS") {
        match threads.parse::<usize>() {
            Ok(k) if k >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global();
            }
            _ => {
                eprintln!("warning: ignoring invalid CROWDSTREAM_THREADS={threads:?}");
            }
        }
    }

    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p)
                .map_err(|e| data(format!("cannot write {}: {e}", p.display())))?;
            Ok(Box::new(io::BufWriter::new(file)))
        }
        None => Ok(Box::new(io::BufWriter::new(io::stdout()))),
    }
}

fn parse_prob_list(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--p entry {tok:?} is not a number")))
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8, Failure> {
    let profile = match args.profile {
        ProfileKind::HammerSpammer => LabelProfile::HammerSpammer { p1: args.p1 },
        ProfileKind::Sinusoid => {
            let omega = args
                .omega
                .ok_or_else(|| usage("the sinusoid profile needs --omega"))?;
            LabelProfile::Sinusoid { omega }
        }
        ProfileKind::Explicit => {
            let list = args
                .p
                .as_deref()
                .ok_or_else(|| usage("the explicit profile needs --p"))?;
            LabelProfile::Explicit(parse_prob_list(list)?)
        }
    };
    let config = GeneratorConfig {
        n: args.n,
        alpha: args.alpha,
        profile,
        seed: args.seed,
        tasks: args.tasks,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    if args.runs == 0 {
        return Err(usage("need at least one run"));
    }

    let drifting = config.is_drifting();
    let beta = match (args.beta, &config.profile) {
        (Some(b), _) => Some(b),
        (None, LabelProfile::Sinusoid { omega }) => {
            let sigma = args.sigma.unwrap_or(omega / 4.0);
            Some(beta_heuristic(sigma, args.alpha, args.n))
        }
        (None, _) => None,
    };
    if let Some(b) = beta
        && !(b > 0.0 && b < 1.0)
    {
        return Err(usage(format!("beta must lie in (0, 1), got {b}")));
    }

    let opts = ExperimentOptions {
        runs: args.runs,
        beta,
        tol: args.tol,
        em_refit_every: args.em_every,
        track_first_labeller: drifting,
    };
    opts.em_refit_every.map_or(Ok(()), |k| {
        if k == 0 {
            Err(usage("--em-every must be positive"))
        } else {
            Ok(())
        }
    })?;

    let metrics = crowdstream::run_experiment(&config, &opts).map_err(|e| usage(e.to_string()))?;

    let mut out = open_output(args.out.as_ref())?;
    write_simulate_table(&mut out, &metrics, beta, args.tol).map_err(data)?;
    out.flush().map_err(data)?;

    if metrics.fallback_rate >= 1.0 {
        eprintln!("warning: the fixed point never existed; every task used the fallback estimate");
        if args.strict {
            return Ok(EXIT_NUMERICAL);
        }
    }
    Ok(0)
}

fn profile_name(profile: &LabelProfile) -> &'static str {
    match profile {
        LabelProfile::Explicit(_) => "explicit",
        LabelProfile::HammerSpammer { .. } => "hammer-spammer",
        LabelProfile::Sinusoid { .. } => "sinusoid",
    }
}

fn write_simulate_table<W: Write>(
    out: &mut W,
    m: &ExperimentMetrics,
    beta: Option<f64>,
    tol: Option<f64>,
) -> io::Result<()> {
    let c = &m.config;
    writeln!(out, "# crowdstream simulate")?;
    write!(
        out,
        "# n={} alpha={} profile={} tasks={} runs={} seed={}",
        c.n,
        c.alpha,
        profile_name(&c.profile),
        c.tasks,
        m.runs,
        c.seed
    )?;
    match &c.profile {
        LabelProfile::HammerSpammer { p1 } => write!(out, " p1={p1}")?,
        LabelProfile::Sinusoid { omega } => write!(out, " omega={omega}")?,
        LabelProfile::Explicit(p) => {
            let list: Vec<String> = p.iter().map(f64::to_string).collect();
            write!(out, " p={}", list.join(","))?;
        }
    }
    if let Some(b) = beta {
        write!(out, " beta={b}")?;
    }
    if let Some(t) = tol {
        write!(out, " tol={t}")?;
    }
    writeln!(out)?;
    write!(
        out,
        "# columns: t linf_error l1_error regret ab_errors mv_errors oracle_errors"
    )?;
    if m.em_errors.is_some() {
        write!(out, " em_errors")?;
    }
    if m.first_labeller_truth.is_some() {
        write!(out, " p1_true p1_hat")?;
    }
    writeln!(out)?;
    for t in 0..c.tasks {
        write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            t + 1,
            m.linf_error[t],
            m.l1_error[t],
            m.cumulative_regret[t],
            m.ab_errors[t],
            m.mv_errors[t],
            m.oracle_errors[t]
        )?;
        if let Some(em) = &m.em_errors {
            write!(out, "\t{}", em[t])?;
        }
        if let (Some(truth), Some(est)) = (&m.first_labeller_truth, &m.first_labeller_estimate) {
            write!(out, "\t{}\t{}", truth[t], est[t])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn ab_predictions(
    dataset: &Dataset,
    prequential: bool,
    tol: Option<f64>,
    rng: &mut ChaCha12Rng,
) -> Result<(Vec<i8>, u64, u64), Failure> {
    let n = dataset.labeller_count();
    let mut agg =
        StreamingAggregator::new(n, dataset.alpha_hat, AveragingMode::Uniform).map_err(data)?;
    if let Some(t) = tol {
        agg = agg.with_tolerance(TolerancePolicy::Fixed(t));
    }
    let mut predictions = Vec::with_capacity(dataset.task_count());
    if prequential {
        for row in dataset.matrix.rows() {
            predictions.push(agg.step(row, rng).map_err(data)?);
        }
    } else {
        // one streaming pass to learn the weights, then decode everything
        for row in dataset.matrix.rows() {
            agg.update(row).map_err(data)?;
        }
        for row in dataset.matrix.rows() {
            predictions.push(agg.predict(row, rng).map_err(data)?);
        }
    }
    Ok((predictions, agg.fallback_updates(), agg.task_count()))
}

fn cmd_eval(args: EvalArgs) -> Result<u8, Failure> {
    let methods: Vec<String> = args
        .methods
        .split(',')
        .map(|m| m.trim().to_ascii_lowercase())
        .filter(|m| !m.is_empty())
        .collect();
    if methods.is_empty() {
        return Err(usage("--methods needs at least one of mv, em, ab"));
    }
    for m in &methods {
        if !matches!(m.as_str(), "mv" | "em" | "ab") {
            return Err(usage(format!(
                "unknown method {m:?} (expected mv, em or ab)"
            )));
        }
    }

    let dataset = load_labels(&args.labels, &args.truth).map_err(data)?;
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);

    let mut rows: Vec<(String, f64)> = Vec::new();
    let mut all_fallback = false;
    for method in &methods {
        let predictions = match method.as_str() {
            "mv" => dataset
                .matrix
                .rows()
                .iter()
                .map(|row| majority_vote(row, &mut rng))
                .collect(),
            "em" => {
                let fit = dawid_skene_em(&dataset.matrix, &EmOptions::default()).map_err(data)?;
                posterior_predictions(&fit.posteriors, &mut rng)
            }
            "ab" => {
                let (preds, fallback, updates) =
                    ab_predictions(&dataset, args.prequential, args.tol, &mut rng)?;
                all_fallback = updates > 0 && fallback == updates;
                preds
            }
            _ => unreachable!("methods validated above"),
        };
        let rate = evaluate(&predictions, &dataset.truth).map_err(data)?;
        rows.push((method.clone(), rate));
    }

    let mut out = open_output(args.out.as_ref())?;
    (|| -> io::Result<()> {
        writeln!(out, "# crowdstream eval")?;
        writeln!(
            out,
            "# labels={} truth={}",
            args.labels.display(),
            args.truth.display()
        )?;
        writeln!(
            out,
            "# provenance: n={} t={} labels={} alpha_hat={:.6}",
            dataset.labeller_count(),
            dataset.task_count(),
            dataset.label_count,
            dataset.alpha_hat
        )?;
        writeln!(out, "# columns: method error_rate")?;
        for (method, rate) in &rows {
            writeln!(out, "{method}\t{rate:.3}")?;
        }
        Ok(())
    })()
    .map_err(data)?;
    out.flush().map_err(data)?;

    if all_fallback {
        eprintln!("warning: the fixed point never existed; every task used the fallback estimate");
        if args.strict {
            return Ok(EXIT_NUMERICAL);
        }
    }
    Ok(0)
}

fn cmd_predict(args: PredictArgs) -> Result<u8, Failure> {
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());

    let mut line = String::new();
    if input.read_line(&mut line).map_err(data)? == 0 {
        return Err(data("missing header line `n alpha [beta]`"));
    }
    let header: Vec<&str> = line.split_whitespace().collect();
    if header.len() < 2 || header.len() > 3 {
        return Err(data(format!(
            "header must be `n alpha [beta]`, got {:?}",
            line.trim()
        )));
    }
    let n: usize = header[0]
        .parse()
        .map_err(|_| data(format!("labeller count {:?} is not an integer", header[0])))?;
    let alpha: f64 = header[1]
        .parse()
        .map_err(|_| data(format!("alpha {:?} is not a number", header[1])))?;
    let beta: Option<f64> = match header.get(2) {
        Some(tok) => Some(
            tok.parse()
                .map_err(|_| data(format!("beta {tok:?} is not a number")))?,
        ),
        None => None,
    };
    let mode = match beta {
        Some(b) => AveragingMode::Ewma { beta: b },
        None => AveragingMode::Uniform,
    };
    let mut agg = StreamingAggregator::new(n, alpha, mode).map_err(data)?;
    if let Some(t) = args.tol {
        agg = agg.with_tolerance(TolerancePolicy::Fixed(t));
    }
    let mut tie_rng = ChaCha12Rng::seed_from_u64(args.seed);

    let mut line_no = 1usize;
    let mut skipped = 0u64;
    line.clear();
    while input.read_line(&mut line).map_err(data)? > 0 {
        line_no += 1;
        match parse_task_row(&line, n) {
            Ok(Some(x)) => {
                let prediction = agg.step(&x, &mut tie_rng).map_err(data)?;
                writeln!(out, "{prediction}").map_err(data)?;
            }
            Ok(None) => {} // blank line
            Err(msg) => {
                skipped += 1;
                eprintln!("line {line_no}: {msg} (row skipped)");
            }
        }
        line.clear();
    }
    out.flush().map_err(data)?;

    let (p_hat, unique) = agg.estimate();
    let formatted: Vec<String> = p_hat.iter().map(|p| format!("{p:.6}")).collect();
    eprintln!(
        "# tasks={} skipped={} fallback_updates={} unique={} p_hat={}",
        agg.task_count(),
        skipped,
        agg.fallback_updates(),
        unique,
        formatted.join(",")
    );
    if std::env::var_os("CROWDSTREAM_RSS").is_some()
        && let Some(kb) = resident_kb()
    {
        eprintln!("# rss_kb={kb}");
    }

    let all_fallback = agg.task_count() > 0 && agg.fallback_updates() == agg.task_count();
    if all_fallback {
        eprintln!("warning: the fixed point never existed; every task used the fallback estimate");
        if args.strict {
            return Ok(EXIT_NUMERICAL);
        }
    }
    Ok(0)
}

fn parse_task_row(line: &str, n: usize) -> Result<Option<ObservationVector>, String> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.is_empty() {
        return Ok(None);
    }
    if tokens.len() != n {
        return Err(format!("expected {n} labels, got {}", tokens.len()));
    }
    let mut entries = Vec::with_capacity(n);
    for tok in tokens {
        let value: i8 = tok
            .trim_start_matches('+')
            .parse()
            .map_err(|_| format!("label {tok:?} is not an integer"))?;
        entries.push(value);
    }
    ObservationVector::new(entries)
        .map(Some)
        .map_err(|e| e.to_string())
}

/// Resident set size of this process from /proc, preferring the high-water
/// mark when the kernel reports one (Linux only).
fn resident_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let field = |name: &str| {
        status.lines().find_map(|line| {
            line.strip_prefix(name)?
                .trim()
                .trim_end_matches("kB")
                .trim()
                .parse::<u64>()
                .ok()
        })
    };
    field("VmHWM:").or_else(|| field("VmRSS:"))
}
