//! Run configuration: a TOML document with a schema version, scalar
//! overrides from `LOBSIM_*` environment variables and command-line flags,
//! and the reproducibility manifest written next to every output.
//!
//! Precedence: command-line flag > environment > file > default.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{EngineParams, FeeSchedule, ImpactParams};
use crate::env::RewardParams;
use crate::error::{Error, Result};
use crate::eval::{Aggregate, EpisodeSetup, StartPlacement};
use crate::policy::{OraclePolicy, PolicySpec};
use crate::stats::{Alternative, StatsOptions};
use crate::DEPTH;

pub const SCHEMA_VERSION: u32 = 1;
pub const ENV_PREFIX: &str = "LOBSIM_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicySource {
    Twap,
    Vwap,
    Random,
    #[default]
    Oracle,
    Bridge,
}

impl std::str::FromStr for PolicySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "twap" => Ok(Self::Twap),
            "vwap" => Ok(Self::Vwap),
            "random" => Ok(Self::Random),
            "oracle" => Ok(Self::Oracle),
            "bridge" => Ok(Self::Bridge),
            _ => Err(Error::Config(format!("unknown policy source {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeeConfig {
    pub taker_fee_bps: f64,
    pub maker_rebate_bps: f64,
}

impl Default for FeeConfig {
    fn default() -> Self {
        Self {
            taker_fee_bps: 10.0,
            maker_rebate_bps: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpactConfig {
    pub k: f64,
    pub beta: f64,
    pub half_life_s: f64,
}

impl Default for ImpactConfig {
    fn default() -> Self {
        let p = ImpactParams::default();
        Self {
            k: p.coeff,
            beta: p.size_exponent,
            half_life_s: p.half_life_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeDefaults {
    pub initial_btc: f64,
    pub target_fraction: f64,
    pub trade_fraction: f64,
    pub inventory_penalty: f64,
    pub vwap_levels: usize,
}

impl Default for EpisodeDefaults {
    fn default() -> Self {
        let s = EpisodeSetup::default();
        Self {
            initial_btc: s.initial_btc,
            target_fraction: s.target_fraction,
            trade_fraction: s.trade_fraction,
            inventory_penalty: s.reward.inventory_penalty,
            vwap_levels: DEPTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub date_from: Option<NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub date_to: Option<NaiveDate>,
    pub horizons: Vec<u64>,
    pub k_starts: usize,
    pub start_placement: StartPlacement,
    pub seed: u64,
    pub aggregate: Aggregate,
    pub alpha: f64,
    /// Winsorisation fraction; 0 disables it.
    pub winsorize: f64,
    pub alternative: Alternative,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub policy: PolicySource,
    /// Command line of the external policy when `policy = "bridge"`.
    pub bridge_command: Vec<String>,
    /// Frozen observation normaliser handed to observing policies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<PathBuf>,
    pub fees: FeeConfig,
    pub impact: ImpactConfig,
    pub episode: EpisodeDefaults,
    pub oracle: OraclePolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        let stats = StatsOptions::default();
        Self {
            schema_version: SCHEMA_VERSION,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            date_from: None,
            date_to: None,
            horizons: vec![1_800, 3_600, 7_200],
            k_starts: 10,
            start_placement: StartPlacement::Even,
            seed: 0,
            aggregate: Aggregate::Mean,
            alpha: 0.05,
            winsorize: 0.0,
            alternative: stats.alternative,
            bootstrap_resamples: stats.bootstrap_resamples,
            confidence: stats.confidence,
            policy: PolicySource::Oracle,
            bridge_command: Vec::new(),
            normalizer: None,
            fees: FeeConfig::default(),
            impact: ImpactConfig::default(),
            episode: EpisodeDefaults::default(),
            oracle: OraclePolicy::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema_version {} not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Canonical TOML rendering; the config hash is taken over these bytes.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serialises")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Sets one scalar key. Keys are the flag names with `_` for `-`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "date_from" => self.date_from = Some(parse_value(key, value)?),
            "date_to" => self.date_to = Some(parse_value(key, value)?),
            "horizons" => {
                self.horizons = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_value(key, s))
                    .collect::<Result<_>>()?
            }
            "k_starts" => self.k_starts = parse_value(key, value)?,
            "start_placement" => {
                self.start_placement = match value {
                    "even" => StartPlacement::Even,
                    "jitter" => StartPlacement::Jitter,
                    _ => return Err(Error::Config(format!("{key}: expected even or jitter, got {value:?}"))),
                }
            }
            "seed" => self.seed = parse_value(key, value)?,
            "aggregate" => self.aggregate = value.parse()?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "winsorize" => self.winsorize = parse_value(key, value)?,
            "alternative" => {
                self.alternative = match value {
                    "greater" => Alternative::Greater,
                    "less" => Alternative::Less,
                    "two-sided" => Alternative::TwoSided,
                    _ => return Err(Error::Config(format!("{key}: unknown alternative {value:?}"))),
                }
            }
            "bootstrap_resamples" => self.bootstrap_resamples = parse_value(key, value)?,
            "confidence" => self.confidence = parse_value(key, value)?,
            "policy" => self.policy = value.parse()?,
            "normalizer" => self.normalizer = Some(PathBuf::from(value)),
            "taker_fee_bps" => self.fees.taker_fee_bps = parse_value(key, value)?,
            "impact_k" => self.impact.k = parse_value(key, value)?,
            "impact_beta" => self.impact.beta = parse_value(key, value)?,
            "impact_half_life" => self.impact.half_life_s = parse_value(key, value)?,
            "initial_btc" => self.episode.initial_btc = parse_value(key, value)?,
            "trade_fraction" => self.episode.trade_fraction = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Applies `LOBSIM_<KEY>` variables from `vars`; other variables are
    /// ignored, unknown `LOBSIM_` keys are an error.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut pairs: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                k.as_ref()
                    .strip_prefix(ENV_PREFIX)
                    .map(|key| (key.to_ascii_lowercase(), v.as_ref().to_string()))
            })
            .collect();
        pairs.sort();
        for (key, value) in pairs {
            self.set(&key, &value)
                .map_err(|e| Error::Config(format!("{ENV_PREFIX}{}: {e}", key.to_ascii_uppercase())))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::Config(
                "horizons must be a non-empty list of positive seconds".into(),
            ));
        }
        if self.k_starts == 0 {
            return Err(Error::Config("k_starts must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(0.0..0.5).contains(&self.winsorize) {
            return Err(Error::Config(format!("winsorize {} outside [0, 0.5)", self.winsorize)));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config(format!("confidence {} outside (0, 1)", self.confidence)));
        }
        if self.bootstrap_resamples == 0 {
            return Err(Error::Config("bootstrap_resamples must be positive".into()));
        }
        if let (Some(a), Some(b)) = (self.date_from, self.date_to) {
            if a > b {
                return Err(Error::Config(format!("date_from {a} after date_to {b}")));
            }
        }
        if self.policy == PolicySource::Bridge && self.bridge_command.is_empty() {
            return Err(Error::Config("policy = \"bridge\" needs bridge_command".into()));
        }
        if !(1..=DEPTH).contains(&self.episode.vwap_levels) {
            return Err(Error::Config(format!(
                "vwap_levels {} outside 1..={DEPTH}",
                self.episode.vwap_levels
            )));
        }
        self.engine_params().validate()?;
        self.episode_setup().episode(0, self.horizons[0], 0).validate()?;
        if !(self.episode.inventory_penalty.is_finite() && self.episode.inventory_penalty >= 0.0) {
            return Err(Error::Config("inventory_penalty must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn engine_params(&self) -> EngineParams {
        EngineParams {
            fees: FeeSchedule {
                taker_fee: self.fees.taker_fee_bps * 1e-4,
                maker_rebate: self.fees.maker_rebate_bps * 1e-4,
            },
            impact: ImpactParams {
                coeff: self.impact.k,
                size_exponent: self.impact.beta,
                half_life_s: self.impact.half_life_s,
            },
        }
    }

    pub fn episode_setup(&self) -> EpisodeSetup {
        EpisodeSetup {
            engine: self.engine_params(),
            reward: RewardParams {
                inventory_penalty: self.episode.inventory_penalty,
            },
            initial_btc: self.episode.initial_btc,
            target_fraction: self.episode.target_fraction,
            trade_fraction: self.episode.trade_fraction,
            vwap_levels: self.episode.vwap_levels,
        }
    }

    pub fn policy_spec(&self) -> PolicySpec {
        match self.policy {
            PolicySource::Twap => PolicySpec::Twap,
            PolicySource::Vwap => PolicySpec::Vwap,
            PolicySource::Random => PolicySpec::Random,
            PolicySource::Oracle => PolicySpec::Oracle(self.oracle),
            PolicySource::Bridge => PolicySpec::External {
                command: self.bridge_command.clone(),
            },
        }
    }

    pub fn stats_options(&self) -> StatsOptions {
        StatsOptions {
            alternative: self.alternative,
            alpha: self.alpha,
            winsorize: (self.winsorize > 0.0).then_some(self.winsorize),
            bootstrap_resamples: self.bootstrap_resamples,
            confidence: self.confidence,
            seed: self.seed,
        }
    }

    pub fn includes(&self, date: NaiveDate) -> bool {
        self.date_from.is_none_or(|a| date >= a) && self.date_to.is_none_or(|b| date <= b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            name: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedDay {
    pub date: NaiveDate,
    pub reason: String,
}

/// Everything needed to regenerate a run's outputs. Carries no timestamps so
/// reruns produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalizer_sha256: Option<String>,
    pub data_files: Vec<FileDigest>,
    pub skipped_days: Vec<SkippedDay>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool: "lobsim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: config.sha256(),
            config: config.clone(),
            seed: config.seed,
            normalizer_sha256: None,
            data_files: Vec::new(),
            skipped_days: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Key/value lines echoed into reports and on stderr.
    pub fn summary_lines(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("version".to_string(), format!("{} {}", self.tool, self.version)),
            ("command".to_string(), self.command.clone()),
            ("config sha256".to_string(), self.config_sha256.clone()),
            ("seed".to_string(), self.seed.to_string()),
            ("data files".to_string(), self.data_files.len().to_string()),
        ];
        if let Some(h) = &self.normalizer_sha256 {
            out.push(("normalizer sha256".to_string(), h.clone()));
        }
        for s in &self.skipped_days {
            out.push(("skipped".to_string(), format!("{} ({})", s.date, s.reason)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_is_lossless() {
        let mut cfg = RunConfig {
            date_from: NaiveDate::from_ymd_opt(2020, 1, 2),
            horizons: vec![600, 3600],
            winsorize: 0.01,
            bridge_command: vec!["python3".into(), "agent.py".into()],
            ..Default::default()
        };
        cfg.impact.half_life_s = 0.1 + 0.2;
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn schema_and_unknown_keys_rejected() {
        assert!(RunConfig::from_toml("schema_version = 2").is_err());
        assert!(RunConfig::from_toml("sed = 3").is_err());
        let e = RunConfig::from_toml("k_starts = \"ten\"").unwrap_err();
        assert_eq!(e.class(), crate::error::ErrorClass::Config);
    }

    #[test]
    fn precedence_flag_over_env_over_file() {
        let mut cfg = RunConfig::from_toml("seed = 1\nk_starts = 4\nalpha = 0.1").unwrap();
        cfg.apply_env([("LOBSIM_SEED", "2"), ("LOBSIM_K_STARTS", "5"), ("PATH", "/bin")])
            .unwrap();
        cfg.set("seed", "3").unwrap();
        assert_eq!((cfg.seed, cfg.k_starts, cfg.alpha), (3, 5, 0.1));
        assert!(cfg.apply_env([("LOBSIM_NOPE", "1")]).is_err());
    }

    #[test]
    fn overrides_reach_engine_params() {
        let mut cfg = RunConfig::default();
        cfg.set("taker_fee_bps", "5").unwrap();
        cfg.set("impact_k", "0.1").unwrap();
        cfg.set("impact_half_life", "30").unwrap();
        cfg.set("horizons", "1800, 7200").unwrap();
        let p = cfg.engine_params();
        assert!((p.fees.taker_fee - 5e-4).abs() < 1e-18);
        assert_eq!((p.impact.coeff, p.impact.half_life_s), (0.1, 30.0));
        assert_eq!(cfg.horizons, vec![1800, 7200]);
        cfg.validate().unwrap();
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.sha256(), b.sha256());
        b.seed = 9;
        assert_ne!(a.sha256(), b.sha256());
    }
}
