//! Run settings: built-in defaults, overridden by a TOML config file,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;

use super::CliError;
use crate::similarity::DEFAULT_EXACT_MAX_NODES;

pub const DEFAULT_SALT_ENV: &str = "REVIEWNET_SALT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Api,
    Dump,
}

impl std::str::FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "api" => Ok(Source::Api),
            "dump" => Ok(Source::Dump),
            other => Err(format!("unknown source {other:?}, expected \"api\" or \"dump\"")),
        }
    }
}

/// Values that may come from either the config file or flags. `None` means
/// "not given here".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub source: Option<Source>,
    pub org: Option<String>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub dump_dir: Option<PathBuf>,
    pub snapshots: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub salt_env: Option<String>,
    pub exclude_bots: Option<bool>,
    pub ged_exact_max_nodes: Option<usize>,
    pub parallelism: Option<usize>,
    pub max_chords: Option<usize>,
    pub seed: Option<u64>,
}

impl Overrides {
    /// Fields set in `other` win.
    fn layer(self, other: Overrides) -> Overrides {
        Overrides {
            source: other.source.or(self.source),
            org: other.org.or(self.org),
            from: other.from.or(self.from),
            to: other.to.or(self.to),
            dump_dir: other.dump_dir.or(self.dump_dir),
            snapshots: other.snapshots.or(self.snapshots),
            out: other.out.or(self.out),
            salt_env: other.salt_env.or(self.salt_env),
            exclude_bots: other.exclude_bots.or(self.exclude_bots),
            ged_exact_max_nodes: other.ged_exact_max_nodes.or(self.ged_exact_max_nodes),
            parallelism: other.parallelism.or(self.parallelism),
            max_chords: other.max_chords.or(self.max_chords),
            seed: other.seed.or(self.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: Source,
    pub org: Option<String>,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub dump_dir: PathBuf,
    pub snapshots: PathBuf,
    pub out: PathBuf,
    pub salt_env: String,
    pub exclude_bots: bool,
    pub ged_exact_max_nodes: usize,
    pub parallelism: usize,
    pub max_chords: Option<usize>,
    pub seed: u64,
}

impl RunConfig {
    pub fn resolve(file: Option<&Path>, flags: Overrides) -> Result<RunConfig, CliError> {
        let base = match file {
            Some(path) => parse_config_file(path)?,
            None => Overrides::default(),
        };
        let o = base.layer(flags);
        let out = o.out.unwrap_or_else(|| PathBuf::from("out"));
        let dump_dir = o.dump_dir.unwrap_or_else(|| out.clone());
        let snapshots = o.snapshots.unwrap_or_else(|| dump_dir.join("snapshots"));
        let cfg = RunConfig {
            source: o.source.unwrap_or(Source::Dump),
            org: o.org,
            from: o
                .from
                .unwrap_or_else(|| NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date")),
            to: o
                .to
                .unwrap_or_else(|| NaiveDate::from_ymd_opt(2019, 12, 31).expect("valid date")),
            dump_dir,
            snapshots,
            out,
            salt_env: o.salt_env.unwrap_or_else(|| DEFAULT_SALT_ENV.to_string()),
            exclude_bots: o.exclude_bots.unwrap_or(false),
            ged_exact_max_nodes: o.ged_exact_max_nodes.unwrap_or(DEFAULT_EXACT_MAX_NODES),
            parallelism: o.parallelism.unwrap_or(4),
            max_chords: o.max_chords,
            seed: o.seed.unwrap_or(42),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.from > self.to {
            return Err(CliError::Config(format!(
                "invalid sampling frame: start {} is after end {}",
                self.from, self.to
            )));
        }
        if self.ged_exact_max_nodes < 2 {
            return Err(CliError::Config("ged_exact_max_nodes must be at least 2".into()));
        }
        if self.parallelism == 0 {
            return Err(CliError::Config("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("invalid date {s:?}: {e}"))
}

fn parse_config_file(path: &Path) -> Result<Overrides, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses the TOML config. Dates may be written bare (`from = 2019-01-01`)
/// or quoted.
pub fn parse_config(text: &str) -> Result<Overrides, String> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
    let mut o = Overrides::default();
    for (key, value) in table {
        let string = || {
            value
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| format!("{key}: expected a string"))
        };
        let count = || {
            value
                .as_integer()
                .and_then(|i| usize::try_from(i).ok())
                .ok_or_else(|| format!("{key}: expected a non-negative integer"))
        };
        let date = || match &value {
            toml::Value::Datetime(d) => parse_date(&d.to_string()),
            toml::Value::String(s) => parse_date(s),
            _ => Err(format!("{key}: expected a date")),
        };
        match key.as_str() {
            "source" => o.source = Some(string()?.parse()?),
            "org" => o.org = Some(string()?),
            "from" => o.from = Some(date()?),
            "to" => o.to = Some(date()?),
            "dump_dir" => o.dump_dir = Some(string()?.into()),
            "snapshots" => o.snapshots = Some(string()?.into()),
            "out" => o.out = Some(string()?.into()),
            "salt_env" => o.salt_env = Some(string()?),
            "exclude_bots" => {
                o.exclude_bots = Some(
                    value
                        .as_bool()
                        .ok_or_else(|| format!("{key}: expected true or false"))?,
                )
            }
            "ged_exact_max_nodes" => o.ged_exact_max_nodes = Some(count()?),
            "parallelism" => o.parallelism = Some(count()?),
            "max_chords" => o.max_chords = Some(count()?),
            "seed" => o.seed = Some(count()? as u64),
            other => return Err(format!("unknown key {other:?}")),
        }
    }
    Ok(o)
}
