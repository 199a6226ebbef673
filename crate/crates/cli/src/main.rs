use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sentinel_core::probe::{FixtureArchive, FixedClock, LiveTransport, ProbeCache, ProbeConfig, Prober, ReplayTransport};
use sentinel_core::prompt::mock::MockWorld;
use sentinel_core::prompt::{
    chain_of_confirmation, filter_tags, generate_prompt_sets, load_corpus, run_batch, top_k, CocOutcome, GatewaySettings, LlmGateway,
    OpenAiGateway, PromptRecord, RecordStore, ReplayGateway, RunManifest, SetLabel, TagRecord,
};
use sentinel_core::report::{Config, ProbeMode, ScanInput, Scanner};
use sentinel_core::vulndb::update_snapshot;

#[derive(Parser)]
#[command(name = "sentinel", version, about = "Supply-chain threat scanner for LLM-generated code")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan responses or files for supply-chain threats.
    Scan(ScanArgs),
    /// Generate prompt sets from a question corpus.
    Prompts(PromptsArgs),
    /// Submit prompts to a model and store the responses.
    Run(RunArgs),
    /// Run the chain-of-confirmation defense over questions.
    Coc(CocArgs),
    /// Manage the vulnerability database snapshot.
    Vulndb {
        #[command(subcommand)]
        command: VulndbCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Md,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replay probes from a recorded archive instead of the network.
    #[arg(long, conflicts_with = "record")]
    fixture: Option<PathBuf>,
    /// Probe live and record every exchange into this directory.
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Count every occurrence instead of once per response.
    #[arg(long)]
    raw_counts: bool,
    /// Report incomplete Packagist names as notes, not hallucinations.
    #[arg(long)]
    separate_incomplete: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Files to scan; `-` reads stdin. `.jsonl` record stores expand to their responses.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

#[derive(Args)]
struct GatewayArgs {
    /// Deterministic built-in mock model.
    #[arg(long, group = "gateway")]
    mock: bool,
    /// Answer from a recorded record store.
    #[arg(long, group = "gateway")]
    replay: Option<PathBuf>,
    /// Live OpenAI-compatible endpoint; reads SENTINEL_LLM_API_KEY and SENTINEL_LLM_BASE_URL.
    #[arg(long, group = "gateway", value_name = "MODEL")]
    live: Option<String>,
    /// Hard cap on live requests.
    #[arg(long)]
    max_requests: Option<usize>,
}

impl GatewayArgs {
    fn is_set(&self) -> bool {
        self.mock || self.replay.is_some() || self.live.is_some()
    }

    fn build(&self) -> Result<Box<dyn LlmGateway>> {
        if self.mock {
            return Ok(Box::new(Arc::new(MockWorld::default()).gateway("mock")));
        }
        if let Some(p) = &self.replay {
            return Ok(Box::new(ReplayGateway::load(p).with_context(|| format!("loading {}", p.display()))?));
        }
        if let Some(model) = &self.live {
            return Ok(Box::new(OpenAiGateway::from_env(model, GatewaySettings::default(), self.max_requests)?));
        }
        bail!("choose a gateway: --mock, --replay FILE or --live MODEL")
    }
}

#[derive(Args)]
struct PromptsArgs {
    /// Question corpus (JSON array or CSV).
    #[arg(long)]
    corpus: PathBuf,
    /// Comma-separated sets among Q1,Q2,Q3,Q4,CI.
    #[arg(long, value_delimiter = ',', default_value = "Q1,Q2,Q3,Q4,CI")]
    sets: Vec<SetLabel>,
    /// Keep the k questions with the most answers.
    #[arg(long)]
    top_k: Option<usize>,
    /// Tag corpus; only questions whose tag passes the tag filter are kept.
    #[arg(long)]
    tags: Option<PathBuf>,
    #[command(flatten)]
    gateway: GatewayArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Prompt records produced by `sentinel prompts`.
    prompts: PathBuf,
    #[command(flatten)]
    gateway: GatewayArgs,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Output directory for records.jsonl and manifest.json.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct CocArgs {
    /// Questions (JSON array or CSV).
    questions: PathBuf,
    #[command(flatten)]
    gateway: GatewayArgs,
    /// Check packages against a recorded fixture archive.
    #[arg(long, conflicts_with = "no_verify")]
    verify_fixture: Option<PathBuf>,
    /// Skip registry checks; hallucination counts are then not reported.
    #[arg(long)]
    no_verify: bool,
    #[arg(long, value_enum, default_value = "md")]
    format: Format,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum VulndbCommand {
    /// Replace the local snapshot with one fetched from a URL or path.
    Update {
        #[arg(long)]
        from: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

fn cmd_scan(a: ScanArgs) -> Result<ExitCode> {
    let mut config = load_config(a.config.as_deref())?;
    if a.raw_counts {
        config.dedup = false;
    }
    if a.separate_incomplete {
        config.count_incomplete = false;
    }
    let mode = match (&a.fixture, &a.record, &config.fixture) {
        (Some(d), _, _) => ProbeMode::Fixture(d.clone()),
        (None, Some(d), _) => ProbeMode::Record(d.clone()),
        (None, None, Some(d)) => ProbeMode::Fixture(d.clone()),
        (None, None, None) => ProbeMode::Live,
    };
    let mut inputs = Vec::new();
    for p in &a.paths {
        if p.as_os_str() == "-" {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text).context("reading stdin")?;
            inputs.push(ScanInput::text("-", text));
        } else {
            inputs.extend(ScanInput::from_path(p)?);
        }
    }
    let scanner = Scanner::new(config, mode)?;
    let report = scanner.scan(&inputs)?;
    scanner.finish()?;
    let text = match a.format {
        Format::Json => report.to_json(),
        Format::Md => report.to_markdown(),
    };
    emit(a.out.as_deref(), &text)?;
    Ok(if report.finding_count() > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn to_jsonl(records: &[PromptRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

fn cmd_prompts(a: PromptsArgs) -> Result<ExitCode> {
    if let Some(bad) = a.sets.iter().find(|s| !SetLabel::CODING.contains(s) && **s != SetLabel::CI) {
        bail!("set {bad} is not a prompt set; choose among Q1,Q2,Q3,Q4,CI");
    }
    let mut questions = load_corpus(&a.corpus)?;
    if let Some(tags) = &a.tags {
        if !a.gateway.is_set() {
            bail!("--tags needs a gateway: --mock, --replay FILE or --live MODEL");
        }
        let gw = a.gateway.build()?;
        let verdicts = filter_tags(&TagRecord::load(tags)?, gw.as_ref())?;
        for (t, v) in &verdicts {
            tracing::info!(tag = %t.tag_name, outcome = ?v, "tag filter");
        }
        let accepted: std::collections::BTreeSet<&str> = verdicts.iter().filter(|(_, v)| v.accepted()).map(|(t, _)| t.tag_name.as_str()).collect();
        questions.retain(|q| accepted.contains(q.tag.as_str()));
    }
    if let Some(k) = a.top_k {
        questions = top_k(questions, k);
    }
    let records: Vec<PromptRecord> = questions.iter().flat_map(|q| generate_prompt_sets(q, &a.sets)).collect();
    emit(a.out.as_deref(), &to_jsonl(&records)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let prompts = RecordStore::load(&a.prompts).with_context(|| format!("loading {}", a.prompts.display()))?;
    let gw = a.gateway.build()?;
    std::fs::create_dir_all(&a.out)?;
    let records_path = a.out.join("records.jsonl");
    if records_path.exists() {
        bail!("{} already exists; record stores are append-only per run", records_path.display());
    }
    let mut store = RecordStore::create(&records_path)?;
    let records = run_batch(&prompts, gw.as_ref(), a.concurrency, Some(&mut store))?;
    let manifest = RunManifest::new(gw.as_ref(), &records);
    std::fs::write(a.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    eprintln!("{} records, {} errors -> {}", manifest.prompt_count, manifest.error_count, records_path.display());
    Ok(ExitCode::SUCCESS)
}

fn rate(h: Option<usize>, n: usize) -> String {
    match h {
        Some(h) if n > 0 => format!("{:.2}%", 100.0 * h as f64 / n as f64),
        _ => "n/a".into(),
    }
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "n/a".into(), |v| v.to_string())
}

fn coc_table(outcomes: &[CocOutcome]) -> String {
    let mut s = String::from("| question | baseline packages | baseline hallucinated | baseline rate | extracted | confirmed | CoC packages | CoC hallucinated | CoC rate |\n|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    let sum = |f: &dyn Fn(&CocOutcome) -> Option<usize>| -> Option<usize> { outcomes.iter().map(f).sum() };
    for o in outcomes {
        let m = &o.metrics;
        s += &format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            o.question_id,
            m.baseline_packages,
            opt(m.baseline_hallucinated),
            rate(m.baseline_hallucinated, m.baseline_packages),
            m.extracted,
            m.confirmed,
            m.final_packages,
            opt(m.final_hallucinated),
            rate(m.final_hallucinated, m.final_packages)
        );
    }
    if !outcomes.is_empty() {
        let bp = outcomes.iter().map(|o| o.metrics.baseline_packages).sum();
        let fp = outcomes.iter().map(|o| o.metrics.final_packages).sum();
        let bh = sum(&|o| o.metrics.baseline_hallucinated);
        let fh = sum(&|o| o.metrics.final_hallucinated);
        s += &format!(
            "| **total** | {bp} | {} | {} | {} | {} | {fp} | {} | {} |\n",
            opt(bh),
            rate(bh, bp),
            outcomes.iter().map(|o| o.metrics.extracted).sum::<usize>(),
            outcomes.iter().map(|o| o.metrics.confirmed).sum::<usize>(),
            opt(fh),
            rate(fh, fp)
        );
    }
    let disagreements: Vec<String> = outcomes
        .iter()
        .flat_map(|o| {
            o.disagreements.iter().map(move |d| {
                let probe = d.probe.map_or_else(|| "unchecked".into(), |p| p.to_string());
                format!("| {} | {} | {} | {} | {} |", o.question_id, d.package, d.registry, probe, d.reason)
            })
        })
        .collect();
    if !disagreements.is_empty() {
        s += "\n## Step 2 disagreements\n\n| question | package | registry | registry status | reason |\n|---|---|---|---|---|\n";
        s += &(disagreements.join("\n") + "\n");
    }
    s
}

fn cmd_coc(a: CocArgs) -> Result<ExitCode> {
    let questions = load_corpus(&a.questions)?;
    let world = Arc::new(MockWorld::default());
    let gw = a.gateway.build()?;
    let verifier: Option<Prober> = if a.no_verify {
        None
    } else if let Some(dir) = &a.verify_fixture {
        let archive = FixtureArchive::load(dir)?;
        let clock = Arc::new(FixedClock(archive.created_at));
        Some(Prober::new(Arc::new(ReplayTransport::new(archive)), ProbeConfig::default(), clock))
    } else if a.gateway.mock {
        Some(world.prober())
    } else if a.gateway.live.is_some() {
        let t = LiveTransport::new(std::time::Duration::from_secs(10)).map_err(|e| anyhow::anyhow!("{e}"))?;
        let p = Prober::new(Arc::new(t), ProbeConfig::default(), Arc::new(sentinel_core::probe::SystemClock));
        Some(p.with_cache(Arc::new(ProbeCache::default())))
    } else {
        None
    };
    let mut outcomes = Vec::new();
    for q in &questions {
        outcomes.push(chain_of_confirmation(q, None, gw.as_ref(), verifier.as_ref())?);
    }
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&outcomes)? + "\n",
        Format::Md => coc_table(&outcomes),
    };
    emit(a.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_vulndb(c: VulndbCommand) -> Result<ExitCode> {
    match c {
        VulndbCommand::Update { from, config } => {
            let config = load_config(config.as_deref())?;
            let dest = config.vulndb_path();
            let db = update_snapshot(&from, &dest, std::time::Duration::from_secs(config.probe.retry.timeout_secs.max(30)))?;
            eprintln!(
                "{} libraries, {} advisories, snapshot {} -> {}",
                db.library_count(),
                db.advisory_count(),
                &db.snapshot_hash()[..16.min(db.snapshot_hash().len())],
                dest.display()
            );
            for w in db.warnings() {
                eprintln!("warning: {w}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("SENTINEL_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Scan(a) => cmd_scan(a),
        Command::Prompts(a) => cmd_prompts(a),
        Command::Run(a) => cmd_run(a),
        Command::Coc(a) => cmd_coc(a),
        Command::Vulndb { command } => cmd_vulndb(command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            // Most errors already quote their cause; print each cause once.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1).map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    msg = format!("{msg}: {cause}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
