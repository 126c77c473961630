//! Per-day evaluation: intra-day start selection, paired runs of the policy
//! and both baselines on identical windows, daily aggregation and the
//! per-episode / per-day CSV files.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_schedule, twap_schedule, vwap_like_schedule};
use crate::engine::EngineParams;
use crate::env::{EpisodeConfig, EpisodeOutcome, LiquidationEnv, RewardParams};
use crate::error::{Error, Result};
use crate::normalize::NormalizerStats;
use crate::par::{self, Parallelism};
use crate::policy::{run_episode, PolicySpec};
use crate::stats::GapSeries;
use crate::store::DayBook;
use crate::synth::mix;
use crate::DEPTH;

/// Percentage PnL against the arrival value of the initial inventory.
pub fn pnl_percent(final_wealth: f64, initial_btc: f64, arrival_mid: f64) -> f64 {
    let arrival_value = initial_btc * arrival_mid;
    100.0 * (final_wealth - arrival_value) / arrival_value
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rl,
    Twap,
    Vwap,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Rl, Method::Twap, Method::Vwap];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rl => "rl",
            Method::Twap => "twap",
            Method::Vwap => "vwap",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rl" => Ok(Method::Rl),
            "twap" => Ok(Method::Twap),
            "vwap" => Ok(Method::Vwap),
            _ => Err(Error::Data(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartPlacement {
    /// `floor(i * (n - H) / k)` for `i = 0..k`.
    #[default]
    Even,
    /// One seeded uniform draw inside each of the `k` even bins.
    Jitter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    Mean,
    Median,
}

impl FromStr for Aggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregate::Mean),
            "median" => Ok(Aggregate::Median),
            _ => Err(Error::Config(format!("aggregate must be mean or median, got {s:?}"))),
        }
    }
}

impl Aggregate {
    pub fn apply(self, xs: &[f64]) -> f64 {
        match self {
            Aggregate::Mean => crate::stats::mean(xs),
            Aggregate::Median => crate::stats::median(xs),
        }
    }
}

/// `k` distinct start indices whose `horizon_s`-snapshot windows fit in a
/// day of `n` snapshots.
pub fn select_starts(n: usize, horizon_s: u64, k: usize, placement: StartPlacement, seed: u64) -> Result<Vec<usize>> {
    let h = usize::try_from(horizon_s).map_err(|_| Error::Config("horizon too large".into()))?;
    if k == 0 {
        return Err(Error::Config("k_starts must be positive".into()));
    }
    if n < h {
        return Err(Error::Episode(format!(
            "day of {n} snapshots shorter than {horizon_s} s"
        )));
    }
    let span = n - h;
    if k > 1 && span < k {
        return Err(Error::Episode(format!(
            "only {} feasible starts for {k} distinct windows",
            span + 1
        )));
    }
    let even = |i: usize| (i as u128 * span as u128 / k as u128) as usize;
    match placement {
        StartPlacement::Even => Ok((0..k).map(even).collect()),
        StartPlacement::Jitter => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..k)
                .map(|i| {
                    let lo = even(i);
                    let hi = if i + 1 == k { span + 1 } else { even(i + 1) };
                    rng.random_range(lo..hi.max(lo + 1))
                })
                .collect())
        }
    }
}

/// Seed of episode `episode_id` on `date` at `horizon_s`.
pub fn episode_seed(seed: u64, date: NaiveDate, horizon_s: u64, episode_id: usize) -> u64 {
    mix(
        mix(seed, date.to_epoch_days() as u64),
        mix(horizon_s, episode_id as u64),
    )
}

/// Episode settings shared by every method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSetup {
    pub engine: EngineParams,
    pub reward: RewardParams,
    pub initial_btc: f64,
    pub target_fraction: f64,
    pub trade_fraction: f64,
    pub vwap_levels: usize,
}

impl Default for EpisodeSetup {
    fn default() -> Self {
        let e = EpisodeConfig::default();
        Self {
            engine: EngineParams::default(),
            reward: RewardParams::default(),
            initial_btc: e.initial_btc,
            target_fraction: e.target_fraction,
            trade_fraction: e.trade_fraction,
            vwap_levels: DEPTH,
        }
    }
}

impl EpisodeSetup {
    pub fn episode(&self, start_index: usize, horizon_s: u64, seed: u64) -> EpisodeConfig {
        EpisodeConfig {
            start_index,
            horizon_s,
            initial_btc: self.initial_btc,
            target_fraction: self.target_fraction,
            trade_fraction: self.trade_fraction,
            sell_only: true,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub day: NaiveDate,
    pub episode_id: usize,
    pub start_index: usize,
    pub horizon_s: u64,
    pub method: Method,
    pub pnl_percent: f64,
    pub cum_reward: f64,
    pub fills: usize,
    pub residual_fraction: f64,
}

/// Runs one method on one window.
pub fn run_method(
    day: &DayBook,
    cfg: EpisodeConfig,
    method: Method,
    policy: &PolicySpec,
    setup: &EpisodeSetup,
    normalizer: Option<&NormalizerStats>,
) -> Result<EpisodeOutcome> {
    let mut env = LiquidationEnv::new(day, cfg, setup.engine, setup.reward)?;
    let steps = env.total_steps();
    let target = cfg.liquidation_target();
    match method {
        Method::Twap => run_schedule(&twap_schedule(target, steps)?, &mut env),
        Method::Vwap => {
            let w = env.window();
            let decisions = w.start..w.end - 1;
            run_schedule(
                &vwap_like_schedule(day, decisions, target, setup.vwap_levels)?,
                &mut env,
            )
        }
        Method::Rl => {
            let mut actor = policy.build(day, &env, cfg.seed, setup)?;
            run_episode(&mut env, actor.as_mut(), normalizer)
        }
    }
}

/// Runs the policy and both baselines on each start; rows are ordered by
/// (episode_id, method). Any failing episode fails the day.
#[allow(clippy::too_many_arguments)]
pub fn run_day(
    day: &DayBook,
    horizon_s: u64,
    starts: &[usize],
    policy: &PolicySpec,
    setup: &EpisodeSetup,
    normalizer: Option<&NormalizerStats>,
    seed: u64,
    mode: Parallelism,
) -> Result<Vec<EpisodeResult>> {
    let jobs: Vec<(usize, Method)> = (0..starts.len()).flat_map(|e| Method::ALL.map(|m| (e, m))).collect();
    par::try_map(mode, &jobs, |&(episode_id, method)| {
        let start_index = starts[episode_id];
        let cfg = setup.episode(
            start_index,
            horizon_s,
            episode_seed(seed, day.date(), horizon_s, episode_id),
        );
        let out = run_method(day, cfg, method, policy, setup, normalizer)?;
        if !out.pnl_percent.is_finite() {
            return Err(Error::Episode(format!(
                "{} episode {episode_id} ({}) produced non-finite PnL",
                day.date(),
                method.as_str()
            )));
        }
        Ok(EpisodeResult {
            day: day.date(),
            episode_id,
            start_index,
            horizon_s,
            method,
            pnl_percent: out.pnl_percent,
            cum_reward: out.cum_reward,
            fills: out.fills,
            residual_fraction: out.residual_fraction,
        })
    })
}

/// Per-day score of every method at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyScore {
    pub day: NaiveDate,
    pub horizon_s: u64,
    pub rl: f64,
    pub twap: f64,
    pub vwap: f64,
}

impl DailyScore {
    pub fn gap_twap(&self) -> f64 {
        self.rl - self.twap
    }

    pub fn gap_vwap(&self) -> f64 {
        self.rl - self.vwap
    }
}

/// Collapses episode rows to one score per (horizon, day, method). Every
/// method must cover the same starts on a day, otherwise the day is not
/// paired and an error is returned.
pub fn aggregate_daily(rows: &[EpisodeResult], statistic: Aggregate) -> Result<Vec<DailyScore>> {
    type Key = (u64, NaiveDate);
    let mut groups: BTreeMap<Key, BTreeMap<Method, Vec<&EpisodeResult>>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.horizon_s, r.day))
            .or_default()
            .entry(r.method)
            .or_default()
            .push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((horizon_s, day), by_method) in groups {
        let mut scores = [0.0; 3];
        let mut reference: Option<Vec<(usize, usize)>> = None;
        for (slot, method) in Method::ALL.iter().enumerate() {
            let Some(eps) = by_method.get(method) else {
                return Err(Error::Data(format!("{day} h={horizon_s}: no {} rows", method.as_str())));
            };
            let mut keys: Vec<(usize, usize)> = eps.iter().map(|r| (r.episode_id, r.start_index)).collect();
            keys.sort_unstable();
            match &reference {
                None => reference = Some(keys),
                Some(r) if *r != keys => {
                    return Err(Error::Data(format!(
                        "{day} h={horizon_s}: {} rows cover different starts",
                        method.as_str()
                    )))
                }
                Some(_) => {}
            }
            let pnl: Vec<f64> = eps.iter().map(|r| r.pnl_percent).collect();
            scores[slot] = statistic.apply(&pnl);
        }
        out.push(DailyScore {
            day,
            horizon_s,
            rl: scores[0],
            twap: scores[1],
            vwap: scores[2],
        });
    }
    Ok(out)
}

/// Paired daily differences of one baseline at one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyGapSeries {
    pub horizon_s: u64,
    pub baseline: Method,
    pub days: Vec<NaiveDate>,
    pub gaps: Vec<f64>,
}

impl DailyGapSeries {
    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn to_stats(&self) -> GapSeries {
        GapSeries {
            horizon_s: self.horizon_s,
            baseline: self.baseline.as_str().to_string(),
            gaps: self.gaps.clone(),
        }
    }
}

/// One series per (horizon, baseline), days ascending.
pub fn gap_series(daily: &[DailyScore]) -> Vec<DailyGapSeries> {
    let mut by_h: BTreeMap<u64, Vec<&DailyScore>> = BTreeMap::new();
    for d in daily {
        by_h.entry(d.horizon_s).or_default().push(d);
    }
    let mut out = Vec::new();
    for (horizon_s, mut days) in by_h {
        days.sort_by_key(|d| d.day);
        for baseline in [Method::Twap, Method::Vwap] {
            out.push(DailyGapSeries {
                horizon_s,
                baseline,
                days: days.iter().map(|d| d.day).collect(),
                gaps: days
                    .iter()
                    .map(|d| {
                        if baseline == Method::Twap {
                            d.gap_twap()
                        } else {
                            d.gap_vwap()
                        }
                    })
                    .collect(),
            });
        }
    }
    out
}

pub const EPISODE_CSV_HEADER: [&str; 9] = [
    "day",
    "episode_id",
    "start_index",
    "horizon_s",
    "method",
    "pnl_percent",
    "cum_reward",
    "fills",
    "residual_fraction",
];

pub const DAILY_CSV_HEADER: [&str; 7] = ["day", "horizon_s", "rl", "twap", "vwap", "gap_twap", "gap_vwap"];

pub fn episodes_file_name(horizon_s: u64, k: usize) -> String {
    format!("episodes_h{horizon_s}_k{k}.csv")
}

pub fn daily_file_name(horizon_s: u64, k: usize) -> String {
    format!("daily_h{horizon_s}_k{k}.csv")
}

fn csv_err(what: &str) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Data(format!("{what}: {e}"))
}

pub fn write_episodes_csv<W: Write>(rows: &[EpisodeResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = csv_err("writing episode CSV");
    w.write_record(EPISODE_CSV_HEADER).map_err(&err)?;
    for r in rows {
        w.write_record([
            r.day.format("%Y-%m-%d").to_string(),
            r.episode_id.to_string(),
            r.start_index.to_string(),
            r.horizon_s.to_string(),
            r.method.as_str().to_string(),
            r.pnl_percent.to_string(),
            r.cum_reward.to_string(),
            r.fills.to_string(),
            r.residual_fraction.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing episode CSV: {e}")))
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Data(format!("line {line}: bad value in column {i}")))
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(csv_err("reading CSV header"))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Data(format!("unexpected CSV header {header:?}")));
    }
    Ok(())
}

pub fn read_episodes_csv<R: Read>(reader: R) -> Result<Vec<EpisodeResult>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &EPISODE_CSV_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err("reading episode CSV"))?;
        let line = rec.position().map_or(0, |p| p.line());
        let day = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| Error::Data(format!("line {line}: bad day: {e}")))?;
        rows.push(EpisodeResult {
            day,
            episode_id: field(&rec, 1, line)?,
            start_index: field(&rec, 2, line)?,
            horizon_s: field(&rec, 3, line)?,
            method: rec[4].parse()?,
            pnl_percent: field(&rec, 5, line)?,
            cum_reward: field(&rec, 6, line)?,
            fills: field(&rec, 7, line)?,
            residual_fraction: field(&rec, 8, line)?,
        });
    }
    Ok(rows)
}

pub fn write_daily_csv<W: Write>(daily: &[DailyScore], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = csv_err("writing daily CSV");
    w.write_record(DAILY_CSV_HEADER).map_err(&err)?;
    for d in daily {
        w.write_record([
            d.day.format("%Y-%m-%d").to_string(),
            d.horizon_s.to_string(),
            d.rl.to_string(),
            d.twap.to_string(),
            d.vwap.to_string(),
            d.gap_twap().to_string(),
            d.gap_vwap().to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing daily CSV: {e}")))
}

/// Reads per-day scores; the gap columns are checked against the scores.
pub fn read_daily_csv<R: Read>(reader: R) -> Result<Vec<DailyScore>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &DAILY_CSV_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err("reading daily CSV"))?;
        let line = rec.position().map_or(0, |p| p.line());
        let day = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| Error::Data(format!("line {line}: bad day: {e}")))?;
        let d = DailyScore {
            day,
            horizon_s: field(&rec, 1, line)?,
            rl: field(&rec, 2, line)?,
            twap: field(&rec, 3, line)?,
            vwap: field(&rec, 4, line)?,
        };
        let (gt, gv): (f64, f64) = (field(&rec, 5, line)?, field(&rec, 6, line)?);
        if gt != d.gap_twap() || gv != d.gap_vwap() {
            return Err(Error::Data(format!("line {line}: gap columns disagree with scores")));
        }
        out.push(d);
    }
    Ok(out)
}
