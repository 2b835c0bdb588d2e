mod config;

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use trustloop::bandit::{Part, Role};
use trustloop::evidence::EvidenceCatalog;
use trustloop::pipeline::{build_bundle, demo_catalog};
use trustloop::rater::PopulationSpec;
use trustloop::report::{export_csv, ExportFilter};
use trustloop::model::{LINEAR_REGRESSION, NEURAL_NETWORK};
use trustloop_service::{
    load_data_dir, run_simulation, Embedded, HttpApi, ServiceConfig, ServiceError, SurveyApi, SurveyService, SystemClock,
};

use config::RootConfig;

#[derive(Parser)]
#[command(name = "trustloop", version, about = "Build evidence bundles, run the trust survey, simulate raters, report")]
struct Cli {
    /// Root JSON config shared by all subcommands.
    #[arg(long, global = true, env = "TRUSTLOOP_CONFIG")]
    config: Option<PathBuf>,
    /// Root seed; overrides seeds from the config.
    #[arg(long, global = true, env = "TRUSTLOOP_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    /// Bar-chart data document.
    Plot,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the cohort, train, and write the evidence bundle.
    Build {
        #[arg(long, env = "TRUSTLOOP_BUNDLE")]
        bundle: Option<PathBuf>,
    },
    /// Run the survey service over a bundle.
    Serve {
        #[arg(long, env = "TRUSTLOOP_BUNDLE")]
        bundle: Option<PathBuf>,
        #[arg(long, env = "TRUSTLOOP_PORT")]
        port: Option<u16>,
        #[arg(long, env = "TRUSTLOOP_HOST")]
        host: Option<String>,
        #[arg(long, env = "TRUSTLOOP_DATA_DIR")]
        data_dir: Option<PathBuf>,
    },
    /// Drive simulated raters through the service and print the regret and report.
    Simulate {
        /// Population spec (JSON); defaults to 14 clinician-like and 30 expert-like raters.
        #[arg(long)]
        population: Option<PathBuf>,
        #[arg(long, short = 'n')]
        sessions: Option<usize>,
        /// Talk to a running service instead of an embedded one.
        #[arg(long, env = "TRUSTLOOP_URL")]
        url: Option<String>,
        /// Evidence bundle for the embedded service; a small synthetic one is used otherwise.
        #[arg(long, env = "TRUSTLOOP_BUNDLE")]
        bundle: Option<PathBuf>,
        /// Persist the embedded service's logs here.
        #[arg(long, env = "TRUSTLOOP_DATA_DIR")]
        data_dir: Option<PathBuf>,
        /// Write the per-pull trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Summarise the responses logged in a data directory.
    Report {
        #[arg(long, env = "TRUSTLOOP_DATA_DIR")]
        data_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        role: Option<Role>,
        #[arg(long)]
        part: Option<Part>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Dump the flat response table as CSV.
    Export {
        #[arg(long, env = "TRUSTLOOP_DATA_DIR")]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        role: Option<Role>,
        #[arg(long)]
        part: Option<Part>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Service(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Service(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Service(m) => f.write_str(m),
        }
    }
}

impl From<trustloop::Error> for Failure {
    fn from(e: trustloop::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Unreachable(_) | ServiceError::Remote { .. } => Failure::Service(e.to_string()),
            e => Failure::Data(e.to_string()),
        }
    }
}

fn io_fail(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(io_fail(p)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn data_dir(flag: Option<PathBuf>, cfg: &RootConfig) -> Result<PathBuf, Failure> {
    flag.or_else(|| cfg.data_dir.clone()).ok_or_else(|| Failure::Usage("--data-dir is required".into()))
}

fn read_bundle(dir: &Path) -> Result<EvidenceCatalog, Failure> {
    if !dir.is_dir() {
        return Err(Failure::Data(format!("no bundle at {}", dir.display())));
    }
    EvidenceCatalog::read_bundle(dir).map_err(|e| Failure::Data(format!("corrupt bundle {}: {e}", dir.display())))
}

fn cmd_build(cfg: &RootConfig, seed: Option<u64>, bundle: Option<PathBuf>) -> Result<(), Failure> {
    let mut pipeline = cfg.build.clone();
    if let Some(s) = seed {
        pipeline.reseed(s);
    }
    let dir = bundle.or_else(|| cfg.bundle.clone()).unwrap_or_else(|| PathBuf::from("bundle"));
    fs::create_dir_all(&dir).map_err(io_fail(&dir))?;
    let out = build_bundle(&pipeline, &dir)?;
    println!("bundle written to {}", dir.display());
    for name in [NEURAL_NETWORK, LINEAR_REGRESSION] {
        if let Some(m) = out.evaluation.model(name) {
            println!("{name}: auc_roc {:.3} ± {:.3}, auc_pr {:.3}, accuracy {:.3}", m.auc_roc.mean, m.auc_roc.std, m.auc_pr.mean, m.accuracy.mean);
        }
    }
    Ok(())
}

fn cmd_serve(cfg: &RootConfig, seed: Option<u64>, bundle: Option<PathBuf>, host: Option<String>, port: Option<u16>, dir: Option<PathBuf>) -> Result<(), Failure> {
    let bundle = bundle.or_else(|| cfg.bundle.clone()).unwrap_or_else(|| PathBuf::from("bundle"));
    let evidence = read_bundle(&bundle)?;
    let dir = dir.or_else(|| cfg.data_dir.clone()).unwrap_or_else(|| PathBuf::from("data"));
    let config = ServiceConfig { seed: seed.or(cfg.seed).unwrap_or(0), abandon_after_hours: cfg.serve.abandon_after_hours };
    let svc = Arc::new(SurveyService::open(evidence, Some(&dir), config, Arc::new(SystemClock))?);
    let host = host.unwrap_or_else(|| cfg.serve.host.clone());
    let port = port.unwrap_or(cfg.serve.port);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Service(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .map_err(|e| Failure::Service(format!("cannot listen on {host}:{port}: {e}")))?;
        let addr: SocketAddr = listener.local_addr().map_err(|e| Failure::Service(e.to_string()))?;
        tracing::info!(%addr, data_dir = %dir.display(), "survey service listening");
        println!("listening on http://{addr}");
        trustloop_service::serve(svc, listener, shutdown_signal())
            .await
            .map_err(|e| Failure::Service(e.to_string()))?;
        tracing::info!("logs flushed, shut down");
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

fn load_population(flag: Option<PathBuf>, cfg: &RootConfig) -> Result<PopulationSpec, Failure> {
    let file = flag.or_else(|| if cfg.simulate.population.is_some() { None } else { cfg.simulate.population_file.clone() });
    let spec = match file {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(io_fail(&p))?;
            PopulationSpec::from_json(&text).map_err(|e| Failure::Data(format!("invalid population {}: {e}", p.display())))?
        }
        None => cfg.simulate.population.clone().unwrap_or_else(PopulationSpec::study),
    };
    spec.validate().map_err(|e| Failure::Data(format!("invalid population: {e}")))?;
    Ok(spec)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    cfg: &RootConfig,
    seed: Option<u64>,
    population: Option<PathBuf>,
    sessions: Option<usize>,
    url: Option<String>,
    bundle: Option<PathBuf>,
    dir: Option<PathBuf>,
    trace: Option<PathBuf>,
    format: Format,
) -> Result<(), Failure> {
    let population = load_population(population, cfg)?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let n = sessions.unwrap_or(cfg.simulate.sessions);
    let api: Box<dyn SurveyApi> = match url.or_else(|| cfg.simulate.url.clone()) {
        Some(u) => Box::new(HttpApi::new(&u)?),
        None => {
            let evidence = match bundle.or_else(|| cfg.bundle.clone()) {
                Some(b) => read_bundle(&b)?,
                None => demo_catalog(seed)?,
            };
            let dir = dir.or_else(|| cfg.data_dir.clone());
            let config = ServiceConfig { seed, abandon_after_hours: cfg.serve.abandon_after_hours };
            let svc = SurveyService::open(evidence, dir.as_deref(), config, Arc::new(SystemClock))?;
            Box::new(Embedded(Arc::new(svc)))
        }
    };
    let result = run_simulation(api.as_ref(), &population, n, seed).map_err(|e| match e {
        ServiceError::Invalid(m) => Failure::Data(m),
        e => Failure::Service(e.to_string()),
    })?;
    if let Some(p) = trace.or_else(|| cfg.simulate.trace.clone()) {
        fs::write(&p, result.trace.to_csv()).map_err(io_fail(&p))?;
    }
    let pulls = result.trace.pulls.len();
    let regret = result.trace.total_regret();
    eprintln!(
        "{n} sessions, {pulls} pulls, cumulative regret {regret:.3} ({:.4} per pull)",
        if pulls > 0 { regret / pulls as f64 } else { 0.0 }
    );
    let text = match format {
        Format::Json => {
            let doc = serde_json::json!({
                "schema_version": trustloop::report::REPORT_SCHEMA_VERSION,
                "sessions": n,
                "pulls": pulls,
                "cumulative_regret": regret,
                "report": result.report,
            });
            serde_json::to_string_pretty(&doc).map_err(|e| Failure::Data(e.to_string()))? + "\n"
        }
        Format::Csv => result.report.to_csv(),
        Format::Plot => serde_json::to_string_pretty(&result.report.plot_data()).map_err(|e| Failure::Data(e.to_string()))? + "\n",
    };
    write_out(None, &text)
}

fn cmd_report(cfg: &RootConfig, dir: Option<PathBuf>, format: Format, filter: ExportFilter, out: Option<PathBuf>) -> Result<(), Failure> {
    let dir = data_dir(dir, cfg)?;
    let state = load_data_dir(&dir)?;
    if state.responses.is_empty() {
        return Err(Failure::Data(format!("response log in {} is empty", dir.display())));
    }
    let report = state.report(&filter)?;
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&report).map_err(|e| Failure::Data(e.to_string()))? + "\n",
        Format::Csv => report.to_csv(),
        Format::Plot => serde_json::to_string_pretty(&report.plot_data()).map_err(|e| Failure::Data(e.to_string()))? + "\n",
    };
    write_out(out.as_deref(), &text)
}

fn cmd_export(cfg: &RootConfig, dir: Option<PathBuf>, filter: ExportFilter, out: Option<PathBuf>) -> Result<(), Failure> {
    let dir = data_dir(dir, cfg)?;
    let state = load_data_dir(&dir)?;
    write_out(out.as_deref(), &export_csv(&state.responses(&filter))?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = RootConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(cfg.seed);
    match cli.command {
        Command::Build { bundle } => cmd_build(&cfg, seed, bundle),
        Command::Serve { bundle, port, host, data_dir } => cmd_serve(&cfg, seed, bundle, host, port, data_dir),
        Command::Simulate { population, sessions, url, bundle, data_dir, trace, format } => {
            cmd_simulate(&cfg, seed, population, sessions, url, bundle, data_dir, trace, format)
        }
        Command::Report { data_dir, format, role, part, out } => cmd_report(&cfg, data_dir, format, ExportFilter { role, part }, out),
        Command::Export { data_dir, role, part, out } => cmd_export(&cfg, data_dir, ExportFilter { role, part }, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
