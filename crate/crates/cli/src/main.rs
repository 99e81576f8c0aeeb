//! `subembed` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subembed::{io, stats, EnsembleSpec, Error, ExperimentConfig, FamilyKind, Result};

const SEED_ENV: &str = "SUBEMBED_SEED";

#[derive(Debug, Parser)]
#[command(name = "subembed", version, about = "Random embeddings of subspace families")]
struct Cli {
    /// Worker threads; defaults to the config value, then to all cores.
    #[arg(long, global = true)]
    parallelism: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a random matrix and write it as CSV.
    GenMatrix(GenMatrixArgs),
    /// Certify the distortion of a matrix on a subspace family.
    Verify(VerifyArgs),
    /// Run the trials of a config and log one JSON object per trial.
    Trial(TrialArgs),
    /// Success rate as a function of the target dimension.
    Sweep(SweepArgs),
    /// Embed a finite point set with a given distortion.
    EmbedPoints(EmbedPointsArgs),
    /// Monte Carlo Gaussian width of the config's family.
    Width(WidthArgs),
    /// Concentration and ψ₂ constants of an ensemble.
    Constants(ConstantsArgs),
}

#[derive(Debug, Args)]
struct GenMatrixArgs {
    /// Take n, the ensemble, the seed and m from a config file.
    #[arg(long, conflicts_with_all = ["ensemble", "n"])]
    config: Option<PathBuf>,
    #[arg(long)]
    ensemble: Option<String>,
    /// Rows; defaults to the config's target dimension.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    family: PathBuf,
    #[arg(long = "D")]
    distortion: f64,
    /// Exit with status 1 when no scale achieves the distortion.
    #[arg(long)]
    require_feasible: bool,
    /// Per-member singular value extremes.
    #[arg(long)]
    report_csv: Option<PathBuf>,
    /// Summary JSON; printed to stdout when omitted.
    #[arg(long)]
    summary_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrialArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSON-lines log; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append per-trial wall time in seconds to each line.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated target dimensions; defaults to 1..=2·required_m.
    #[arg(long, value_delimiter = ',')]
    m_values: Vec<usize>,
    #[arg(long, default_value_t = 0.95)]
    target_rate: f64,
    /// Sweep CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EmbedPointsArgs {
    /// CSV with one point per line.
    #[arg(long)]
    points: PathBuf,
    #[arg(long = "D")]
    distortion: f64,
    #[arg(long, default_value = "gaussian")]
    ensemble: String,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Random point pairs checked against the certified scale.
    #[arg(long, default_value_t = 10_000)]
    check_pairs: usize,
    #[arg(long)]
    matrix_out: Option<PathBuf>,
    /// Summary JSON; printed to stdout when omitted.
    #[arg(long)]
    summary_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WidthArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConstantsArgs {
    #[arg(long)]
    ensemble: String,
    /// Print the full constants record as JSON.
    #[arg(long)]
    json: bool,
}

enum Outcome {
    Done,
    Infeasible,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::GenMatrix(a) => gen_matrix(a, cli.parallelism),
        Command::Verify(a) => {
            init_pool(cli.parallelism)?;
            verify(a)
        }
        Command::Trial(a) => trial(a, cli.parallelism),
        Command::Sweep(a) => sweep(a, cli.parallelism),
        Command::EmbedPoints(a) => {
            init_pool(cli.parallelism)?;
            embed_points(a)
        }
        Command::Width(a) => width(a, cli.parallelism),
        Command::Constants(a) => constants(a),
    }
}

fn init_pool(threads: Option<usize>) -> Result<()> {
    let Some(threads) = threads else {
        return Ok(());
    };
    if threads == 0 {
        return Err(Error::Config("parallelism must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Resource(format!("thread pool: {e}")))
}

fn load_config(path: &Path, parallelism: Option<usize>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut config: ExperimentConfig = serde_json::from_str(&text)?;
    if let Ok(raw) = std::env::var(SEED_ENV) {
        config.seed = raw
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{raw}` is not an unsigned integer")))?;
    }
    if let (FamilyKind::UserFile, Some(rel)) = (config.family_kind, &config.family_path) {
        if rel.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            config.family_path = Some(base.join(rel));
        }
    }
    config.validate()?;
    init_pool(parallelism.or(config.parallelism))?;
    Ok(config)
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => io::write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gen_matrix(a: GenMatrixArgs, parallelism: Option<usize>) -> Result<Outcome> {
    let (ensemble, n, m, seed) = match &a.config {
        Some(path) => {
            let c = load_config(path, parallelism)?;
            let m = match a.m {
                Some(m) => m,
                None => c.target_dim()?,
            };
            (c.ensemble, c.n, m, a.seed.unwrap_or(c.matrix_seed(0)))
        }
        None => {
            let name = a
                .ensemble
                .as_deref()
                .ok_or_else(|| Error::Input("--ensemble or --config is required".into()))?;
            let n = a.n.ok_or_else(|| Error::Input("--n is required without --config".into()))?;
            let m = a.m.ok_or_else(|| Error::Input("--m is required without --config".into()))?;
            (EnsembleSpec::from_name(name)?, n, m, a.seed.unwrap_or(0))
        }
    };
    let gamma = subembed::sample_matrix(&ensemble, m, n, seed)?;
    io::store_matrix_csv(&gamma, &a.out)?;
    Ok(Outcome::Done)
}

fn verify(a: VerifyArgs) -> Result<Outcome> {
    let gamma = io::load_matrix_csv(&a.matrix)?;
    let family = io::load_family(&a.family)?;
    let report = subembed::family_distortion(&gamma, &family)?;
    let choice = subembed::choose_scale(&report, a.distortion)?;
    if let Some(path) = &a.report_csv {
        io::write_atomic(path, io::render_report_csv(&report).as_bytes())?;
    }
    emit(
        a.summary_json.as_deref(),
        &io::ReportSummary::new(&report, &choice).to_json(),
    )?;
    if a.require_feasible && !choice.feasible {
        return Ok(Outcome::Infeasible);
    }
    Ok(Outcome::Done)
}

fn trial(a: TrialArgs, parallelism: Option<usize>) -> Result<Outcome> {
    let config = load_config(&a.config, parallelism)?;
    let trials = subembed::harness::run_trials(&config)?;
    let text = if a.timings {
        let mut out = String::new();
        for t in &trials {
            let mut value = serde_json::to_value(t)?;
            value["wall_time_s"] = serde_json::json!(t.wall_time.as_secs_f64());
            out.push_str(&value.to_string());
            out.push('\n');
        }
        out
    } else {
        io::render_trials_jsonl(&trials)
    };
    emit(a.out.as_deref(), &text)?;
    Ok(Outcome::Done)
}

fn sweep(a: SweepArgs, parallelism: Option<usize>) -> Result<Outcome> {
    let config = load_config(&a.config, parallelism)?;
    let m_values = if a.m_values.is_empty() {
        let top = 2 * stats::required_m(config.k, config.p, config.distortion)?;
        (1..=top).collect()
    } else {
        a.m_values
    };
    let result = subembed::sweep_m(&config, &m_values, a.target_rate)?;
    match result.minimal_m {
        Some(m) => log::info!("minimal m at rate {}: {m}", a.target_rate),
        None => log::warn!("no swept m reaches rate {}", a.target_rate),
    }
    emit(a.out.as_deref(), &io::render_sweep_csv(&result))?;
    Ok(Outcome::Done)
}

fn embed_points(a: EmbedPointsArgs) -> Result<Outcome> {
    let points = io::load_points_csv(&a.points)?;
    let ensemble = EnsembleSpec::from_name(&a.ensemble)?;
    let embedding = subembed::metric_embed(&points, a.distortion, &ensemble, a.seed)?;
    let violations = if embedding.choice.feasible {
        Some(embedding.check_point_pairs(&points, a.check_pairs, subembed::seed::derive(a.seed, 1))?)
    } else {
        None
    };
    if let Some(path) = &a.matrix_out {
        io::store_matrix_csv(&embedding.gamma, path)?;
    }
    let summary = serde_json::json!({
        "points": points.len(),
        "pairs": embedding.pairs.len(),
        "m": embedding.gamma.rows(),
        "summary": io::ReportSummary::new(&embedding.report, &embedding.choice),
        "pairs_checked": violations.map(|_| a.check_pairs),
        "violations": violations,
    });
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    emit(a.summary_json.as_deref(), &text)?;
    Ok(Outcome::Done)
}

fn width(a: WidthArgs, parallelism: Option<usize>) -> Result<Outcome> {
    let config = load_config(&a.config, parallelism)?;
    let family = config.build_family(0)?;
    let estimate = stats::gaussian_width_mc(
        &family,
        a.draws,
        subembed::seed::derive(config.seed, subembed::seed::stream::WIDTH),
    )?;
    let bound = stats::width_upper_bound(family.max_dim(), family.len(), 0.0, config.n)?;
    let value = serde_json::json!({
        "mean": estimate.mean,
        "std_error": estimate.std_error,
        "n_draws": estimate.n_draws,
        "upper_bound_formula": bound,
    });
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&value)? + "\n"))?;
    Ok(Outcome::Done)
}

fn constants(a: ConstantsArgs) -> Result<Outcome> {
    let spec = EnsembleSpec::from_name(&a.ensemble)?;
    let c = subembed::theoretical_constants(&spec)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&c)?);
    } else {
        println!("α={:.4}, β={:.4}", c.alpha, c.beta);
    }
    Ok(Outcome::Done)
}
