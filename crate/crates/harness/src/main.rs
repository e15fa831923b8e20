use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use ztbc_core::config::SystemConfig;
use ztbc_core::engine::FaultInjection;
use ztbc_core::ledger::block::{export_chain, verify_chain, Block};
use ztbc_core::model::RequesterContext;

use ztbc_harness::bench::{run_matrix, BenchOptions, TimeMode};
use ztbc_harness::deploy::{Deployment, DeploymentSpec};
use ztbc_harness::report;
use ztbc_harness::testcase::{CaseCounts, TestCase};
use ztbc_harness::variant::Variant;

#[derive(Parser)]
#[command(name = "ztbc", about = "Zero-trust edge stack: deploy, benchmark, operate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one deployment variant behind an HTTP gateway.
    Deploy(DeployArgs),
    /// Run the benchmark matrix locally and print a summary.
    Bench(BenchArgs),
    /// Summarize an exported results CSV, or print the reference testbed
    /// measurements when no input is given.
    Report(ReportArgs),
    /// Ledger maintenance against a running deployment.
    #[command(subcommand)]
    Ledger(LedgerCommand),
    /// Submit one request to a running deployment.
    Send(SendArgs),
    /// Toggle a simulated engine compromise on a running deployment.
    Fault(FaultArgs),
}

#[derive(Args)]
struct DeployArgs {
    /// System variant to run.
    #[arg(long, default_value = "ZTA_BC")]
    variant: Variant,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Optional TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Permit runtime engine-compromise toggles (test deployments only).
    #[arg(long)]
    allow_faults: bool,
    /// Override the variant's engine count.
    #[arg(long)]
    engines: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Variants to run (repeatable); defaults to all five.
    #[arg(long = "variant")]
    variants: Vec<Variant>,
    /// Cases to run (repeatable, label or number); defaults to TC1..TC5.
    #[arg(long = "case", visible_alias = "tc")]
    cases: Vec<TestCase>,
    /// Run the full matrix (the default when no filters are given).
    #[arg(long, conflicts_with_all = ["variants", "cases"])]
    all: bool,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// `virtual` uses a paused clock for reproducible timings; `real`
    /// measures wall time.
    #[arg(long, default_value = "virtual")]
    time: TimeMode,
    /// Scale factor for burst sizes (1.0 = standard workload).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Override the engine count for every variant.
    #[arg(long)]
    engines: Option<usize>,
    /// Write per-run results as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results CSV produced by `bench --out`.
    #[arg(long)]
    from: Option<PathBuf>,
    /// Also write the rendered summary to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// Fetch the chain from a deployment and verify every link.
    Verify(LedgerArgs),
    /// Fetch the chain and write it as JSON lines.
    Export(LedgerExportArgs),
}

#[derive(Args)]
struct LedgerArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    url: String,
    /// Peer to read from (defaults to the deployment's monitoring peer).
    #[arg(long)]
    peer: Option<String>,
}

#[derive(Args)]
struct LedgerExportArgs {
    #[command(flatten)]
    target: LedgerArgs,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SendArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    url: String,
    #[arg(long)]
    actor: String,
    /// The actor's API key.
    #[arg(long)]
    key: String,
    #[arg(long, default_value = "10.0.0.1")]
    ip: String,
    #[arg(long, default_value = "02:00:00:00:00:01")]
    mac: String,
    #[arg(long, default_value = "sensor-os")]
    os: String,
    #[arg(long, default_value = "3.1")]
    os_version: String,
    /// READ, WRITE or ADMIN.
    #[arg(long, default_value = "READ")]
    kind: String,
    #[arg(long, default_value = "temperature")]
    resource: String,
    /// Request parameters as key=value (repeatable).
    #[arg(short, long = "param")]
    params: Vec<String>,
    /// Shared gateway secret.
    #[arg(long, default_value = "edge-client-secret")]
    secret: String,
}

#[derive(Args)]
struct FaultArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    url: String,
    #[arg(long)]
    engine: String,
    /// `true` inverts the engine's verdicts, `false` restores it; a bare
    /// `--compromise` means `true`.
    #[arg(
        long,
        visible_alias = "compromise",
        action = clap::ArgAction::Set,
        num_args = 0..=1,
        default_missing_value = "true",
    )]
    compromised: bool,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();

    match Cli::parse().command {
        Command::Deploy(args) => deploy(args),
        Command::Bench(args) => bench(args),
        Command::Report(args) => summarize(args),
        Command::Ledger(LedgerCommand::Verify(args)) => ledger_verify(args),
        Command::Ledger(LedgerCommand::Export(args)) => ledger_export(args),
        Command::Send(args) => send(args),
        Command::Fault(args) => fault(args),
    }
}

fn deploy(args: DeployArgs) -> anyhow::Result<()> {
    let config = match &args.config {
        Some(path) => SystemConfig::load(path)
            .with_context(|| format!("loading {}", path.display()))?,
        None => SystemConfig::default(),
    };

    let mut spec = DeploymentSpec::new(args.variant);
    spec.config = config;
    spec.engine_count = args.engines;
    spec.fault_injection =
        if args.allow_faults { FaultInjection::Enabled } else { FaultInjection::Forbidden };

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let deployment = Arc::new(Deployment::build(spec)?);
        tracing::info!(
            variant = %deployment.variant,
            engines = deployment.engines.len(),
            ledger = deployment.ledger.is_some(),
            "deployment ready"
        );
        tokio::select! {
            served = ztbc_harness::http::serve(deployment, args.port) => {
                served.context("http server stopped")
            }
            shutdown = tokio::signal::ctrl_c() => {
                shutdown.context("signal handler")?;
                tracing::info!("shutting down");
                Ok(())
            }
        }
    })
}

fn bench(args: BenchArgs) -> anyhow::Result<()> {
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    if args.scale.is_nan() || args.scale <= 0.0 {
        bail!("--scale must be positive");
    }
    let variants =
        if args.all || args.variants.is_empty() { Variant::ALL.to_vec() } else { args.variants };
    let cases = if args.all || args.cases.is_empty() { TestCase::ALL.to_vec() } else { args.cases };
    let counts =
        if args.scale == 1.0 { CaseCounts::default() } else { CaseCounts::scaled(args.scale) };

    let options = BenchOptions {
        runs: args.runs,
        time_mode: args.time,
        counts,
        engine_override: args.engines,
    };
    let results = run_matrix(&variants, &cases, &options);

    print!("{}", report::render_summary(&results));
    if let Some(path) = args.out {
        let file = File::create(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        report::write_csv(&results, BufWriter::new(file))?;
        println!("\nwrote {}", path.display());
    }
    Ok(())
}

fn summarize(args: ReportArgs) -> anyhow::Result<()> {
    let text = match &args.from {
        Some(path) => {
            let file =
                File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let results = report::read_csv(BufReader::new(file))
                .with_context(|| format!("reading {}", path.display()))?;
            if results.is_empty() {
                bail!("{} contains no result rows", path.display());
            }
            report::render_summary(&results)
        }
        None => report::render_reference(),
    };
    print!("{text}");
    if let Some(path) = args.out {
        std::fs::write(&path, &text)
            .with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn blocking_client() -> anyhow::Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .timeout(std::time::Duration::from_secs(30))
        .build()
        .context("building http client")
}

fn fetch_blocks(args: &LedgerArgs) -> anyhow::Result<Vec<Block>> {
    let mut url = format!("{}/ledger/blocks", args.url.trim_end_matches('/'));
    if let Some(peer) = &args.peer {
        url.push_str(&format!("?peer={peer}"));
    }
    let response = blocking_client()?.get(&url).send().context("fetching ledger")?;
    if !response.status().is_success() {
        bail!("{} returned {}: {}", url, response.status(), response.text().unwrap_or_default());
    }
    response.json().context("decoding block list")
}

fn ledger_verify(args: LedgerArgs) -> anyhow::Result<()> {
    let blocks = fetch_blocks(&args)?;
    let audit = verify_chain(&blocks);
    match audit.first_invalid {
        None => {
            println!("chain OK: {} blocks, head {}", audit.length, blocks
                .last()
                .map(|b| b.hash.to_hex())
                .unwrap_or_default());
            Ok(())
        }
        Some(index) => bail!("chain INVALID at block {index} (length {})", audit.length),
    }
}

fn ledger_export(args: LedgerExportArgs) -> anyhow::Result<()> {
    let blocks = fetch_blocks(&args.target)?;
    match args.out {
        Some(path) => {
            let file =
                File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut writer = BufWriter::new(file);
            export_chain(&blocks, &mut writer)?;
            writer.flush()?;
            eprintln!("exported {} blocks to {}", blocks.len(), path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut writer = stdout.lock();
            export_chain(&blocks, &mut writer)?;
        }
    }
    Ok(())
}

fn send(args: SendArgs) -> anyhow::Result<()> {
    let parameters = ztbc_harness::http::parse_parameters(&args.params)
        .map_err(|e| anyhow::anyhow!(e))?;
    let header = RequesterContext {
        agent: format!("ztbc-cli/{}", env!("CARGO_PKG_VERSION")),
        actor: args.actor,
        ip_address: args.ip,
        mac_address: args.mac,
        os_id: args.os,
        os_version: args.os_version,
        auth_token: args.key,
    }
    .to_header_value();

    let body = serde_json::json!({
        "kind": args.kind.to_uppercase(),
        "resource": args.resource,
        "parameters": parameters,
    });
    let response = blocking_client()?
        .post(format!("{}/requests", args.url.trim_end_matches('/')))
        .header("X-Requester", header)
        .header("X-Client-Secret", args.secret)
        .json(&body)
        .send()
        .context("submitting request")?;

    let status = response.status();
    let text = response.text().unwrap_or_default();
    println!("{status}");
    match serde_json::from_str::<serde_json::Value>(&text) {
        Ok(value) => println!("{}", serde_json::to_string_pretty(&value)?),
        Err(_) => println!("{text}"),
    }
    Ok(())
}

fn fault(args: FaultArgs) -> anyhow::Result<()> {
    let response = blocking_client()?
        .post(format!(
            "{}/faults/engines/{}",
            args.url.trim_end_matches('/'),
            args.engine
        ))
        .json(&serde_json::json!({ "compromised": args.compromised }))
        .send()
        .context("toggling fault")?;
    let status = response.status();
    let text = response.text().unwrap_or_default();
    if status.is_success() {
        println!("{text}");
        Ok(())
    } else {
        bail!("{status}: {text}")
    }
}
