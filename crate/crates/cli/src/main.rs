mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use persona_core::awareness::{Identity, Normalizer, SStemmer};
use persona_core::llm_client::{
    CachedEmbedder, HashingEmbedder, HttpEmbedder, PrecomputedEmbeddings, RetryPolicy,
};
use persona_core::report::{write_report, ReportOptions};
use persona_core::runner::{LedgerMode, RunError};
use persona_core::{
    awareness_report, execute, score_ledger, session_count, AnalysisError, ChatBackend, ConditioningSpec, Embedder,
    HttpChatClient, Instrument, Ledger, MockPersona, MockTarget, Personas, QuestionBank, RunOptions, RunPlan,
    ScoredLedger, Target, Templates,
};

use config::{check_temperatures, Config};

const DEFAULT_TEMPERATURES: [f64; 2] = [0.01, 0.7];
const DEFAULT_REPETITIONS: u32 = 30;

#[derive(Parser, Debug)]
#[command(name = "persona-eval", version, about = "Give personality questionnaires to chat models and analyse the answers")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory that relative file arguments and outputs resolve against.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run questionnaire sessions and append every answer to a ledger.
    Run(RunArgs),
    /// Score a ledger into per-session results.
    Score(ScoreArgs),
    /// Write analysis tables from scored results.
    Report(ReportArgs),
    /// Ask models to describe each personality and compare with the reference.
    Awareness(AwarenessArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Backend {
    Live,
    Mock,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Unconditioned,
    Personality,
    Role,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    instrument: Instrument,
    #[arg(long, value_enum, default_value = "unconditioned")]
    mode: Mode,
    /// Comma-separated MBTI types or Big Five factor names, or `all`.
    #[arg(long)]
    targets: Option<String>,
    /// Comma-separated sampling temperatures.
    #[arg(long, value_delimiter = ',')]
    temps: Option<Vec<f64>>,
    #[arg(long)]
    reps: Option<u32>,
    /// Comma-separated model ids; overrides the config list.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "live")]
    backend: Backend,
    /// Endpoint root; overrides `base_url` in the config.
    #[arg(long)]
    base_url: Option<String>,
    /// `follow` (read the system message), `none` (random), or a type/factor.
    #[arg(long, default_value = "follow")]
    mock_target: String,
    /// Probability that the mock replaces an answer with a random one.
    #[arg(long, default_value_t = 0.0)]
    mock_epsilon: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Ledger to write; defaults to `ledger_<instrument>_<mode>.jsonl`.
    #[arg(long, conflicts_with = "resume")]
    ledger: Option<PathBuf>,
    /// Continue an interrupted run recorded in this ledger.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Print the plan and exit without contacting any backend.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    ledger: PathBuf,
    /// Scored-results JSON; defaults to `<ledger stem>.scores.json`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Scored-results JSON written by `score`.
    scores: PathBuf,
    /// Unconditioned scored results for the percentage-increase table.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Require at least one 16x16 outcome matrix.
    #[arg(long)]
    matrix: bool,
    /// Require the percentage-increase table (needs --baseline).
    #[arg(long)]
    pct_increase: bool,
    #[arg(long, default_value = "report")]
    dir: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EmbedderKind {
    Hashing,
    Http,
    Precomputed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormalizerKind {
    SStemmer,
    Identity,
}

#[derive(Args, Debug)]
struct AwarenessArgs {
    #[arg(long)]
    instrument: Instrument,
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "live")]
    backend: Backend,
    #[arg(long)]
    base_url: Option<String>,
    /// Defaults to `precomputed` if the config names a vector file, `http`
    /// if it names an embedding model, otherwise `hashing`.
    #[arg(long, value_enum)]
    embedder: Option<EmbedderKind>,
    #[arg(long, value_enum, default_value = "s-stemmer")]
    normalizer: NormalizerKind,
}

/// An error plus the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn validation(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 1, error: error.into() }
    }

    fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }

    fn partial(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 3, error: error.into() }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::MissingBaseline => Failure::validation(e),
            e => Failure::runtime(e),
        }
    }
}

type Outcome = Result<(), Failure>;

struct Ctx {
    cfg: Config,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    fn models(&self, flag: Option<Vec<String>>, backend: Backend) -> Result<Vec<String>, Failure> {
        let models = flag.unwrap_or_else(|| self.cfg.models.clone());
        match (models.is_empty(), backend) {
            (true, Backend::Mock) => Ok(vec!["mock".into()]),
            (true, Backend::Live) => Err(Failure::validation(anyhow!(
                "no models: list them under `models` in the config or pass --models"
            ))),
            (false, _) => Ok(models),
        }
    }

    fn base_url(&self, flag: Option<String>) -> Result<String, Failure> {
        flag.or_else(|| self.cfg.base_url.clone()).filter(|s| !s.trim().is_empty()).ok_or_else(|| {
            Failure::validation(anyhow!(
                "live backend needs an endpoint: set `base_url` in the config or pass --base-url (or use --backend mock)"
            ))
        })
    }

    fn http_client(&self, base_url: String) -> HttpChatClient {
        let mut client = HttpChatClient::new(base_url).with_retry(RetryPolicy {
            max_retries: self.cfg.max_retries.unwrap_or(3),
            ..RetryPolicy::default()
        });
        if let Some(var) = &self.cfg.api_key_env {
            client = client.with_api_key_env(var);
        }
        if let Some(cap) = self.cfg.max_in_flight {
            client = client.with_max_in_flight(cap);
        }
        client
    }
}

fn parse_mock_target(s: &str, instrument: Instrument) -> Result<MockTarget, Failure> {
    match s.to_ascii_lowercase().as_str() {
        "follow" => Ok(MockTarget::FollowSystem),
        "none" => Ok(MockTarget::None),
        _ => {
            let t: Target = s.parse().map_err(Failure::validation)?;
            if t.instrument() != instrument {
                return Err(Failure::validation(anyhow!("--mock-target {s} does not belong to {instrument}")));
            }
            Ok(MockTarget::Fixed(t))
        }
    }
}

fn conditionings(args: &RunArgs, personas: &Personas) -> Result<Vec<ConditioningSpec>, Failure> {
    let instrument = args.instrument;
    if let Mode::Unconditioned = args.mode {
        if args.targets.is_some() {
            return Err(Failure::validation(anyhow!("--targets only applies to --mode personality or role")));
        }
        return Ok(vec![ConditioningSpec::unconditioned(instrument)]);
    }
    let targets = match args.targets.as_deref().unwrap_or("all") {
        "all" => personas.targets(instrument),
        list => {
            let mut out = Vec::new();
            for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let t: Target = item.parse().map_err(Failure::validation)?;
                if t.instrument() != instrument {
                    return Err(Failure::validation(anyhow!("target {item} does not belong to {instrument}")));
                }
                out.push(t);
            }
            if out.is_empty() {
                return Err(Failure::validation(anyhow!("--targets is empty")));
            }
            out
        }
    };
    Ok(match args.mode {
        Mode::Personality => targets.into_iter().map(ConditioningSpec::personality).collect(),
        Mode::Role => targets
            .into_iter()
            .flat_map(|t| personas.roles_for(t).iter().map(move |r| ConditioningSpec::role_personality(t, r.clone())))
            .collect(),
        Mode::Unconditioned => unreachable!(),
    })
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Unconditioned => "unconditioned",
        Mode::Personality => "personality",
        Mode::Role => "role",
    }
}

fn cmd_run(ctx: &Ctx, args: RunArgs) -> Outcome {
    let personas = Personas::shipped();
    let temperatures = args
        .temps
        .clone()
        .or_else(|| ctx.cfg.temperatures.clone())
        .unwrap_or_else(|| DEFAULT_TEMPERATURES.to_vec());
    check_temperatures(&temperatures).map_err(Failure::validation)?;
    if !(0.0..=1.0).contains(&args.mock_epsilon) {
        return Err(Failure::validation(anyhow!("--mock-epsilon must be in [0, 1]")));
    }
    let mock_target = parse_mock_target(&args.mock_target, args.instrument)?;
    let plan = RunPlan {
        models: ctx.models(args.models.clone(), args.backend)?,
        temperatures,
        conditionings: conditionings(&args, personas)?,
        repetitions: args.reps.or(ctx.cfg.repetitions).unwrap_or(DEFAULT_REPETITIONS),
        run_seed: args.seed.or(ctx.cfg.run_seed).unwrap_or(0),
    };
    plan.validate(personas).map_err(Failure::validation)?;
    let (sampling, sampling_overrides) = ctx.cfg.sampling().map_err(Failure::validation)?;
    let workers = args.workers.or(ctx.cfg.workers).unwrap_or(4);
    if workers == 0 {
        return Err(Failure::validation(anyhow!("--workers must be at least 1")));
    }

    let sessions = session_count(&plan);
    println!(
        "plan {}: {} sessions ({} models x {} temperatures x {} conditionings x {} repetitions), {} questions each",
        plan.run_id(),
        sessions,
        plan.models.len(),
        plan.temperatures.len(),
        plan.conditionings.len(),
        plan.repetitions,
        QuestionBank::shipped(args.instrument).len()
    );

    let backend: Box<dyn ChatBackend> = match args.backend {
        Backend::Mock => Box::new(MockPersona::new(mock_target, args.mock_epsilon, plan.run_seed)),
        Backend::Live => Box::new(ctx.http_client(ctx.base_url(args.base_url.clone())?)),
    };
    if args.dry_run {
        return Ok(());
    }

    let (ledger, mode) = match &args.resume {
        Some(p) => (ctx.path(p), LedgerMode::Resume),
        None => {
            let name = args.ledger.clone().unwrap_or_else(|| {
                PathBuf::from(format!("ledger_{}_{}.jsonl", args.instrument, mode_name(args.mode)))
            });
            (ctx.path(&name), LedgerMode::Create)
        }
    };
    if let Some(parent) = ledger.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .map_err(Failure::runtime)?;
    }
    let opts = RunOptions {
        sampling,
        sampling_overrides,
        max_retries: ctx.cfg.max_retries.unwrap_or(3),
        workers,
        backend_label: match args.backend {
            Backend::Mock => format!("mock:{}:eps={}", args.mock_target, args.mock_epsilon),
            Backend::Live => "live".into(),
        },
        ..RunOptions::default()
    };
    match execute(&plan, backend.as_ref(), &opts, &ledger, mode) {
        Ok(s) => {
            println!(
                "ledger {}: {} records written, {} already present, {} unparseable, {} invalid sessions",
                ledger.display(),
                s.records_written,
                s.records_skipped,
                s.unparseable_records,
                s.invalid_sessions
            );
            Ok(())
        }
        Err(RunError::Fatal { error, summary }) => {
            println!(
                "ledger {}: {} records written before the endpoint failed",
                ledger.display(),
                summary.records_written
            );
            Err(Failure::partial(anyhow!(
                "{error}; rerun the same command with --resume {} to continue",
                ledger.display()
            )))
        }
        Err(e @ (RunError::InvalidPlan(_) | RunError::PlanMismatch { .. })) => Err(Failure::validation(e)),
        Err(e) => Err(Failure::runtime(e)),
    }
}

fn cmd_score(ctx: &Ctx, args: ScoreArgs) -> Outcome {
    let path = ctx.path(&args.ledger);
    let ledger = Ledger::read(&path).map_err(|e| Failure::runtime(anyhow!("{}: {e}", path.display())))?;
    if ledger.torn_tail {
        log::warn!("{}: ignoring a partial last line", path.display());
    }
    let scored = score_ledger(&ledger, &QuestionBank::shipped(Instrument::Mbti), &QuestionBank::shipped(Instrument::Bfi))?;
    let output = match args.output {
        Some(p) => ctx.path(&p),
        None => {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "ledger".into());
            path.with_file_name(format!("{stem}.scores.json"))
        }
    };
    scored.save(&output)?;
    let csv = output.with_extension("csv");
    std::fs::write(&csv, scores_csv(&scored))
        .with_context(|| format!("writing {}", csv.display()))
        .map_err(Failure::runtime)?;
    let dq = &scored.data_quality;
    println!(
        "scored {} of {} sessions ({} invalid, {} unparseable answers) -> {}",
        dq.sessions_valid,
        dq.sessions_seen,
        dq.invalid.len(),
        dq.unparseable_records,
        output.display()
    );
    for s in &dq.invalid {
        log::warn!("invalid session: {}", serde_json::to_string(s).unwrap_or_default());
    }
    Ok(())
}

/// One row per valid session.
fn scores_csv(scored: &ScoredLedger) -> String {
    let mut out = String::from("model,temperature,conditioning,repetition,outcome,EI,SN,TF,JP,E,A,C,N,O,ties\n");
    for s in &scored.sessions {
        let head = format!("{},{},{},{}", s.model, s.temperature, s.conditioning.canonical(), s.repetition);
        if let Some(m) = s.mbti() {
            let sums: Vec<String> = m.axis_sums.values().map(|v| v.to_string()).collect();
            let ties: Vec<String> = m.tie_flags.iter().map(|a| a.to_string()).collect();
            out.push_str(&format!("{head},{},{},,,,,,{}\n", m.mbti_type, sums.join(","), ties.join(" ")));
        } else if let Some(b) = s.bfi() {
            let means: Vec<String> = b.means.values().map(|v| format!("{v:.6}")).collect();
            out.push_str(&format!("{head},,,,,,{},\n", means.join(",")));
        }
    }
    out
}

fn cmd_report(ctx: &Ctx, args: ReportArgs) -> Outcome {
    if args.pct_increase && args.baseline.is_none() {
        return Err(AnalysisError::MissingBaseline.into());
    }
    let scored = ScoredLedger::load(&ctx.path(&args.scores))?;
    let baseline = args.baseline.map(|p| ScoredLedger::load(&ctx.path(&p))).transpose()?;
    let dir = ctx.path(&args.dir);
    let files = write_report(
        &dir,
        &scored,
        baseline.as_ref(),
        ReportOptions { require_matrix: args.matrix, require_pct_increase: args.pct_increase },
    )?;
    for (model, t) in persona_core::analysis::model_temperature_cells(&scored.sessions) {
        if let Ok(r) = persona_core::conditioned_accuracy(&scored, &model, t) {
            println!("accuracy {model} @ {t}: {}", r.summary());
        }
    }
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn cmd_awareness(ctx: &Ctx, args: AwarenessArgs) -> Outcome {
    let models = ctx.models(args.models.clone(), args.backend)?;
    let backend: Box<dyn ChatBackend> = match args.backend {
        Backend::Mock => Box::new(MockPersona::new(MockTarget::None, 0.0, ctx.cfg.run_seed.unwrap_or(0))),
        Backend::Live => Box::new(ctx.http_client(ctx.base_url(args.base_url.clone())?)),
    };
    let emb_cfg = &ctx.cfg.embeddings;
    let kind = args.embedder.unwrap_or(if emb_cfg.file.is_some() {
        EmbedderKind::Precomputed
    } else if emb_cfg.model.is_some() {
        EmbedderKind::Http
    } else {
        EmbedderKind::Hashing
    });
    let embedder: Box<dyn Embedder> = match kind {
        EmbedderKind::Hashing => {
            log::warn!("using the offline hashing embedder; cosine reflects shared vocabulary only");
            Box::new(HashingEmbedder::default())
        }
        EmbedderKind::Http => {
            let model = emb_cfg
                .model
                .clone()
                .ok_or_else(|| Failure::validation(anyhow!("--embedder http needs `model` under [embeddings]")))?;
            let base = match emb_cfg.base_url.clone() {
                Some(b) => b,
                None => ctx.base_url(args.base_url.clone())?,
            };
            let mut e = HttpEmbedder::new(base, model);
            if let Some(var) = &ctx.cfg.api_key_env {
                e = e.with_api_key_env(var);
            }
            Box::new(CachedEmbedder::new(e))
        }
        EmbedderKind::Precomputed => {
            let file = emb_cfg
                .file
                .as_ref()
                .ok_or_else(|| Failure::validation(anyhow!("--embedder precomputed needs `file` under [embeddings]")))?;
            Box::new(PrecomputedEmbeddings::load(&ctx.path(file)).map_err(Failure::validation)?)
        }
    };
    let normalizer: &dyn Normalizer = match args.normalizer {
        NormalizerKind::SStemmer => &SStemmer,
        NormalizerKind::Identity => &Identity,
    };
    std::fs::create_dir_all(&ctx.out).map_err(Failure::runtime)?;
    let mut partial = Vec::new();
    for model in &models {
        let r = awareness_report(
            model,
            args.instrument,
            backend.as_ref(),
            embedder.as_ref(),
            normalizer,
            Personas::shipped(),
            &Templates::default(),
        );
        let stem = format!("awareness_{}_{}", args.instrument, slug(model));
        let write = |ext: &str, body: String| {
            let p = ctx.out.join(format!("{stem}.{ext}"));
            std::fs::write(&p, body).with_context(|| format!("writing {}", p.display())).map_err(Failure::runtime)
        };
        write("csv", r.to_csv())?;
        write("json", serde_json::to_string_pretty(&r).expect("report serializes") + "\n")?;
        println!(
            "{model}: WO {}, cosine {} over {} targets",
            persona_core::analysis::format_pm(r.wo_mean, r.wo_std),
            persona_core::analysis::format_pm(r.cosine_mean, r.cosine_std),
            r.results.len()
        );
        for f in &r.failures {
            log::warn!("{model} {}: {}", f.target, f.error);
        }
        if r.is_partial() {
            partial.push(model.clone());
        }
    }
    if partial.is_empty() {
        Ok(())
    } else {
        Err(Failure::partial(anyhow!("some targets failed for {}; rerun to retry them", partial.join(", "))))
    }
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn run(cli: Cli) -> Outcome {
    let cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(Failure::validation)?,
        None => Config::default(),
    };
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let ctx = Ctx { cfg, out };
    match cli.command {
        Command::Run(a) => cmd_run(&ctx, a),
        Command::Score(a) => cmd_score(&ctx, a),
        Command::Report(a) => cmd_report(&ctx, a),
        Command::Awareness(a) => cmd_awareness(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
