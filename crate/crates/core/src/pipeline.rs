//! The batch commands: `ingest`, `eval-compare`, `stats-eval`, `plot` and
//! `fit-norm`. Each takes a [`RunConfig`] and writes its outputs plus a
//! manifest into the output directory.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::config::{FileDigest, Manifest, RunConfig, SkippedDay};
use crate::env::LiquidationEnv;
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_daily, daily_file_name, episode_seed, episodes_file_name, gap_series, read_episodes_csv, run_day,
    select_starts, write_daily_csv, write_episodes_csv, EpisodeResult,
};
use crate::normalize::NormalizerStats;
use crate::par::{self, Parallelism};
use crate::policy::{Actor, RandomPolicy, StepContext};
use crate::stats::{evaluate, markdown_report, write_stats_csv, TestResult};
use crate::store::{list_day_files, load_day_auto, save_day, FileFormat, QualityReport};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STATS_CSV_FILE: &str = "stats.csv";
pub const REPORT_FILE: &str = "report.md";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Default)]
pub struct IngestSummary {
    pub written: Vec<(PathBuf, QualityReport)>,
    pub failed: Vec<(PathBuf, String)>,
}

/// Day files under `inputs` (files, or directories scanned for day files).
pub fn collect_day_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            files.extend(list_day_files(p)?.into_iter().map(|(_, f)| f));
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

/// Re-validates raw day files and writes canonical copies to `out_dir`.
/// Files that fail are listed in the summary; the others still go through.
pub fn ingest(inputs: &[PathBuf], out_dir: &Path, format: FileFormat) -> Result<IngestSummary> {
    create_dir(out_dir)?;
    let files = collect_day_files(inputs)?;
    let mut summary = IngestSummary::default();
    for path in files {
        let outcome = load_day_auto(&path).and_then(|(day, report)| {
            let written = save_day(&day, out_dir, format)?;
            let (_, recheck) = load_day_auto(&written)?;
            if recheck.rows_dropped() != 0 || recheck.values_clipped != 0 {
                return Err(Error::Data(format!(
                    "{}: canonical copy does not reload cleanly",
                    written.display()
                )));
            }
            Ok((written, report))
        });
        match outcome {
            Ok(w) => summary.written.push(w),
            Err(e) => summary.failed.push((path, e.to_string())),
        }
    }
    Ok(summary)
}

#[derive(Debug)]
pub struct EvalOutput {
    pub episode_files: Vec<PathBuf>,
    pub daily_files: Vec<PathBuf>,
    pub manifest: Manifest,
    pub rows: usize,
}

enum DayRun {
    Rows(Vec<EpisodeResult>),
    Skipped(String),
}

/// Runs the per-day protocol over every configured day and horizon.
pub fn eval_compare(cfg: &RunConfig, mode: Parallelism) -> Result<EvalOutput> {
    cfg.validate()?;
    create_dir(&cfg.out_dir)?;
    let normalizer = cfg.normalizer.as_deref().map(NormalizerStats::load).transpose()?;
    let norm_hash = normalizer.as_ref().map(NormalizerStats::sha256);
    let day_files: Vec<(NaiveDate, PathBuf)> = list_day_files(&cfg.data_dir)?
        .into_iter()
        .filter(|(d, _)| cfg.includes(*d))
        .collect();
    if day_files.is_empty() {
        return Err(Error::Data(format!("no day files in {}", cfg.data_dir.display())));
    }
    let policy = cfg.policy_spec();
    let setup = cfg.episode_setup();

    // Each day is loaded once and evaluated at every horizon.
    let per_day: Vec<Result<Vec<(u64, DayRun)>>> = par::map(mode, &day_files, |(_, path)| {
        let day = match load_day_auto(path) {
            Ok((day, _)) => day,
            Err(e) => {
                return Ok(cfg
                    .horizons
                    .iter()
                    .map(|&h| (h, DayRun::Skipped(e.to_string())))
                    .collect())
            }
        };
        cfg.horizons
            .iter()
            .map(|&h| {
                let seed = crate::synth::mix(cfg.seed, day.date().to_epoch_days() as u64 ^ h);
                let starts = match select_starts(day.len(), h, cfg.k_starts, cfg.start_placement, seed) {
                    Ok(s) => s,
                    Err(e) => return Ok((h, DayRun::Skipped(e.to_string()))),
                };
                let rows = run_day(&day, h, &starts, &policy, &setup, normalizer.as_ref(), cfg.seed, mode)?;
                Ok((h, DayRun::Rows(rows)))
            })
            .collect()
    });

    let mut manifest = Manifest::new("eval-compare", cfg);
    manifest.normalizer_sha256 = norm_hash.clone();
    for (_, path) in &day_files {
        manifest.data_files.push(FileDigest::of(path)?);
    }
    let mut by_h: Vec<(u64, Vec<EpisodeResult>)> = cfg.horizons.iter().map(|&h| (h, Vec::new())).collect();
    for ((date, _), result) in day_files.iter().zip(per_day) {
        for (h, run) in result? {
            match run {
                DayRun::Rows(rows) => by_h.iter_mut().find(|(x, _)| *x == h).unwrap().1.extend(rows),
                DayRun::Skipped(reason) => manifest.skipped_days.push(SkippedDay {
                    date: *date,
                    reason: format!("h={h}: {reason}"),
                }),
            }
        }
    }
    if by_h.iter().all(|(_, rows)| rows.is_empty()) {
        return Err(Error::Data("no day survived for any horizon".into()));
    }

    let mut out = EvalOutput {
        episode_files: Vec::new(),
        daily_files: Vec::new(),
        manifest,
        rows: 0,
    };
    for (h, rows) in &by_h {
        if rows.is_empty() {
            continue;
        }
        let ep_path = cfg.out_dir.join(episodes_file_name(*h, cfg.k_starts));
        write_episodes_csv(rows, create_file(&ep_path)?)?;
        let daily = aggregate_daily(rows, cfg.aggregate)?;
        let daily_path = cfg.out_dir.join(daily_file_name(*h, cfg.k_starts));
        write_daily_csv(&daily, create_file(&daily_path)?)?;
        out.manifest.outputs.push(FileDigest::of(&ep_path)?);
        out.manifest.outputs.push(FileDigest::of(&daily_path)?);
        out.rows += rows.len();
        out.episode_files.push(ep_path);
        out.daily_files.push(daily_path);
    }
    if let (Some(path), Some(before)) = (&cfg.normalizer, &norm_hash) {
        let after = NormalizerStats::load(path)?.sha256();
        if &after != before {
            return Err(Error::Data("normalizer stats changed during evaluation".into()));
        }
    }
    out.manifest.write(&cfg.out_dir.join(MANIFEST_FILE))?;
    Ok(out)
}

#[derive(Debug)]
pub struct StatsOutput {
    pub results: Vec<TestResult>,
    pub csv_path: PathBuf,
    pub report_path: PathBuf,
}

/// Daily aggregation, tests, per-horizon BH and bootstrap over per-episode
/// CSVs; writes the stats CSV and the Markdown report.
pub fn stats_eval(episode_csvs: &[PathBuf], cfg: &RunConfig, mode: Parallelism) -> Result<StatsOutput> {
    cfg.validate()?;
    if episode_csvs.is_empty() {
        return Err(Error::Config("stats-eval needs at least one per-episode CSV".into()));
    }
    let mut rows = Vec::new();
    let mut manifest = Manifest::new("stats-eval", cfg);
    for path in episode_csvs {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed = read_episodes_csv(std::io::BufReader::new(file))
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        rows.extend(parsed);
        manifest.data_files.push(FileDigest::of(path)?);
    }
    let daily = aggregate_daily(&rows, cfg.aggregate)?;
    let series = gap_series(&daily);
    if let Some(short) = series.iter().find(|s| s.len() < 2) {
        return Err(Error::Stats(format!(
            "horizon {} has {} day(s); at least 2 are needed",
            short.horizon_s,
            short.len()
        )));
    }
    let stats_series: Vec<_> = series.iter().map(|s| s.to_stats()).collect();
    let results = evaluate(&stats_series, &cfg.stats_options(), mode)?;

    create_dir(&cfg.out_dir)?;
    let csv_path = cfg.out_dir.join(STATS_CSV_FILE);
    write_stats_csv(&results, create_file(&csv_path)?)?;
    manifest.outputs.push(FileDigest::of(&csv_path)?);
    let report = markdown_report(&results, &cfg.stats_options(), &manifest.summary_lines())?;
    let report_path = cfg.out_dir.join(REPORT_FILE);
    std::fs::write(&report_path, report).map_err(|e| Error::io(&report_path, e))?;
    manifest.outputs.push(FileDigest::of(&report_path)?);
    manifest.write(&cfg.out_dir.join("stats_manifest.json"))?;
    Ok(StatsOutput {
        results,
        csv_path,
        report_path,
    })
}

/// Fits observation statistics on random-policy rollouts over the configured
/// days (a training-side utility) and saves them frozen to `out`.
pub fn fit_norm(cfg: &RunConfig, out: &Path) -> Result<NormalizerStats> {
    cfg.validate()?;
    let setup = cfg.episode_setup();
    let mut stats = NormalizerStats::for_observations();
    let day_files: Vec<PathBuf> = list_day_files(&cfg.data_dir)?
        .into_iter()
        .filter(|(d, _)| cfg.includes(*d))
        .map(|(_, p)| p)
        .collect();
    for path in &day_files {
        let (day, _) = load_day_auto(path)?;
        for &h in &cfg.horizons {
            let Ok(starts) = select_starts(day.len(), h, cfg.k_starts, cfg.start_placement, cfg.seed) else {
                continue;
            };
            for (episode_id, &start) in starts.iter().enumerate() {
                let seed = episode_seed(cfg.seed, day.date(), h, episode_id);
                let mut env = LiquidationEnv::new(&day, setup.episode(start, h, seed), setup.engine, setup.reward)?;
                let mut policy = RandomPolicy::new(seed);
                let mut obs = env.reset();
                stats.update(obs.as_slice());
                while !env.is_done() {
                    let ctx = StepContext {
                        observation: None,
                        normalized: None,
                        step: env.steps_taken(),
                        total_steps: env.total_steps(),
                    };
                    let crate::policy::Order::Action(a) = policy.act(&ctx)? else {
                        unreachable!("random policy emits actions")
                    };
                    obs = env.step(a)?.observation;
                    stats.update(obs.as_slice());
                }
            }
        }
    }
    if stats.count == 0 {
        return Err(Error::Data("no observations to fit normaliser on".into()));
    }
    stats.freeze();
    stats.save(out)?;
    Ok(stats)
}
