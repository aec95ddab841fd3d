//! Command-line front end: `crawl`, `measure`, `report` and `synth`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 partial crawl,
//! 3 empty analysis domain.

pub mod config;
pub mod pipeline;

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::catalog::SnapshotArchive;
use crate::ingest::{crawl, ApiConfig, CrawlError, EventStore};
use crate::report::Pseudonymizer;
use crate::similarity::CostModel;
use crate::synth::{self, SynthParams};
use config::{parse_date, Overrides, RunConfig, Source};
use pipeline::MeasureOptions;

pub const DEFAULT_API_URL: &str = "https://api.github.com";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("credential error: {0}")]
    Credential(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Partial(String),
    #[error("empty analysis domain: {0}")]
    EmptyDomain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Credential(_) | CliError::Input(_) => 1,
            CliError::Partial(_) => 2,
            CliError::EmptyDomain(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "reviewnet", version, about = "Information diffusion in code review networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Where events come from: "api" or "dump".
    #[arg(long, global = true)]
    source: Option<Source>,
    /// Organization to crawl.
    #[arg(long, global = true)]
    org: Option<String>,
    /// First day of the sampling frame (inclusive).
    #[arg(long, global = true, value_name = "DATE", value_parser = parse_date)]
    from: Option<NaiveDate>,
    /// Last day of the sampling frame (inclusive).
    #[arg(long, global = true, value_name = "DATE", value_parser = parse_date)]
    to: Option<NaiveDate>,
    /// Directory holding pulls.jsonl and events.jsonl.
    #[arg(long, global = true, value_name = "PATH")]
    dump_dir: Option<PathBuf>,
    /// Directory of dated component ownership snapshots.
    #[arg(long, global = true, value_name = "PATH")]
    snapshots: Option<PathBuf>,
    /// Directory for measure and report outputs.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Environment variable holding the anonymization salt.
    #[arg(long, global = true, value_name = "VAR")]
    salt_env: Option<String>,
    /// Drop events authored by bot accounts.
    #[arg(long, global = true)]
    exclude_bots: bool,
    /// Largest graph size for which the exact edit distance is computed.
    #[arg(long, global = true, value_name = "N")]
    ged_exact_max_nodes: Option<usize>,
    /// Worker threads for crawling and similarity computation.
    #[arg(long, global = true, value_name = "N")]
    parallelism: Option<usize>,
    /// Draw only the heaviest N chords in the circular chart.
    #[arg(long, global = true, value_name = "N")]
    max_chords: Option<usize>,
    /// Seed for synthetic data generation.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            source: self.source,
            org: self.org.clone(),
            from: self.from,
            to: self.to,
            dump_dir: self.dump_dir.clone(),
            snapshots: self.snapshots.clone(),
            out: self.out.clone(),
            salt_env: self.salt_env.clone(),
            exclude_bots: self.exclude_bots.then_some(true),
            ged_exact_max_nodes: self.ged_exact_max_nodes,
            parallelism: self.parallelism,
            max_chords: self.max_chords,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Crawl the organization's pull requests into a dump.
    Crawl,
    /// Build the network and measure similarities along linked reviews.
    Measure,
    /// Render charts from measure outputs.
    Report,
    /// Generate a synthetic organization dump.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = SynthParams::default().teams)]
    teams: usize,
    #[arg(long, default_value_t = SynthParams::default().components_per_team)]
    components_per_team: usize,
    #[arg(long, default_value_t = SynthParams::default().reviews)]
    reviews: usize,
    #[arg(long, default_value_t = SynthParams::default().reference_prob)]
    reference_prob: f64,
    #[arg(long, default_value_t = SynthParams::default().cross_team_bias)]
    cross_team_bias: f64,
    #[arg(long, default_value_t = SynthParams::default().bot_fraction)]
    bot_fraction: f64,
}

/// Runs the tool with explicit arguments and environment lookup and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, S>(args: I, env: &dyn Fn(&str) -> Option<String>) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli, env) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("reviewnet: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cli.common.config.as_deref(), cli.common.overrides())?;
    match cli.command {
        Command::Crawl => {
            if cfg.source != Source::Api {
                return Err(CliError::Config("crawl requires --source api".into()));
            }
            run_crawl(&cfg, env)
        }
        Command::Measure => {
            if cfg.source == Source::Api {
                run_crawl(&cfg, env)?;
            }
            run_measure(&cfg, env)
        }
        Command::Report => {
            let meta = pipeline::render_report(&cfg.out, cfg.max_chords)?;
            eprintln!(
                "report: {} positions, {} teams, {} chords in {}",
                meta.positions,
                meta.teams,
                meta.chords,
                cfg.out.display()
            );
            Ok(())
        }
        Command::Synth(args) => {
            let params = SynthParams {
                teams: args.teams,
                components_per_team: args.components_per_team,
                reviews: args.reviews,
                reference_prob: args.reference_prob,
                cross_team_bias: args.cross_team_bias,
                bot_fraction: args.bot_fraction,
                seed: cfg.seed,
            };
            let out = synth::generate_into(&params, &cfg.dump_dir, &cfg.snapshots)
                .map_err(|e| CliError::Config(e.to_string()))?;
            eprintln!(
                "synth: {} pulls, {} events in {}",
                out.pulls,
                out.events,
                out.dump_dir.display()
            );
            Ok(())
        }
    }
}

fn run_crawl(cfg: &RunConfig, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let token = env("GITHUB_TOKEN")
        .filter(|t| !t.is_empty())
        .ok_or_else(|| CliError::Credential("GITHUB_TOKEN is not set".into()))?;
    let org = cfg
        .org
        .clone()
        .ok_or_else(|| CliError::Config("crawl requires --org".into()))?;
    let base = env("GITHUB_API_URL").unwrap_or_else(|| DEFAULT_API_URL.to_string());
    let mut api = ApiConfig::new(base, token, org);
    api.parallelism = cfg.parallelism;
    let write = |store: &EventStore| {
        store
            .write_dump(&cfg.dump_dir)
            .map_err(|e| CliError::Input(e.to_string()))
    };
    match crawl(&api) {
        Ok(store) => {
            write(&store)?;
            eprintln!("crawl: {} pulls, {} events", store.pulls.len(), store.events.len());
            Ok(())
        }
        Err(CrawlError::Credential(msg)) => Err(CliError::Credential(msg)),
        Err(e @ CrawlError::Partial { .. }) => {
            let message = e.to_string();
            if let CrawlError::Partial { store, .. } = e {
                write(&store)?;
            }
            Err(CliError::Partial(message))
        }
    }
}

fn run_measure(cfg: &RunConfig, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let salt = env(&cfg.salt_env).filter(|s| !s.is_empty()).ok_or_else(|| {
        CliError::Config(format!(
            "anonymization salt: environment variable {} is not set",
            cfg.salt_env
        ))
    })?;
    let pseudonymizer = Pseudonymizer::new(salt.as_bytes().to_vec()).map_err(|e| CliError::Config(e.to_string()))?;
    let store = EventStore::load_dump(&cfg.dump_dir).map_err(|e| CliError::Input(e.to_string()))?;
    let archive = SnapshotArchive::open(&cfg.snapshots).map_err(|e| CliError::Input(e.to_string()))?;
    let opts = MeasureOptions {
        from: cfg.from,
        to: cfg.to,
        exclude_bots: cfg.exclude_bots,
        costs: CostModel::unit(),
        exact_max_nodes: cfg.ged_exact_max_nodes,
        parallelism: cfg.parallelism,
    };
    let digest = pipeline::input_digest(&cfg.dump_dir, &archive, &cfg.snapshots)?;
    let measurement = pipeline::measure(&store, &archive, &opts)?;
    let meta = pipeline::build_metadata(&measurement, opts.settings(), digest, salt.as_bytes());
    pipeline::write_measurement(&measurement, &meta, &pseudonymizer, &cfg.out)?;
    let ratio = measurement.summary.linked_ratio.map(|l| l.ratio).unwrap_or_default();
    eprintln!(
        "measure: {} reviews, {} edges, linked ratio {ratio:.6}",
        measurement.counts.reviews, measurement.counts.edges
    );
    Ok(())
}
