//! Acceptance suite. Prints one PASS/FAIL line per criterion with the pinned
//! tolerance and exits non-zero if any criterion fails.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::Days;
use lobsim::config::RunConfig;
use lobsim::engine::{execute_market_sell, EngineParams, ExecutionEngine, FeeSchedule, ImpactParams, ImpactState};
use lobsim::env::{EpisodeConfig, LiquidationEnv, RewardParams};
use lobsim::eval::{read_daily_csv, run_method, EpisodeSetup, Method};
use lobsim::normalize::NormalizerStats;
use lobsim::par::{self, Parallelism};
use lobsim::pipeline;
use lobsim::policy::{OraclePolicy, PolicySpec};
use lobsim::stats::{bh_adjust, bootstrap_ci_mean, mean, wilcoxon_signed_rank, Alternative};
use lobsim::store::FileFormat;
use lobsim::synth::{default_date, flat_day, FlatBook, MarketModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::{bh_brute_force, bid_pairs, random_book, relative_error, walk_bids, wilcoxon_enumeration};

type Outcome = Result<String, String>;

/// Impact coefficient of the synthetic month; the sweep scales it.
const MONTH_K: f64 = 0.001;
const MONTH_SEED: u64 = 11;
const MONTH_DAYS: usize = 28;
const MONTH_HORIZON: u64 = 3_600;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fill_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..1_000 {
        let mid = rng.random_range(100.0..50_000.0);
        let book = random_book(&mut rng, mid);
        let depth = book.bid_size_total();
        let qty = rng.random_range(0.0..1.2 * depth);
        let with_impact = case % 2 == 1;
        let params = ImpactParams {
            coeff: if with_impact { rng.random_range(0.0..0.5) } else { 0.0 },
            size_exponent: rng.random_range(0.3..1.0),
            half_life_s: 60.0,
        };
        let prior = if with_impact {
            -rng.random_range(0.0..0.01) * mid
        } else {
            0.0
        };
        let state = ImpactState {
            displacement: prior,
            last_update_ns: 0,
        };
        let (fill, next) = execute_market_sell(&book, qty, state, &params, &FeeSchedule::ZERO, depth)
            .map_err(|e| format!("case {case}: {e}"))?;

        let (filled, walk_avg) = walk_bids(&bid_pairs(&book), qty);
        let book_mid = (book.bids[0].price + book.asks[0].price) / 2.0;
        let footprint = params.coeff * (filled / depth).powf(params.size_exponent) * book_mid;
        let shift = (prior - footprint).max(-book_mid / 2.0);
        let expect_avg = walk_avg + shift;

        let e_qty = relative_error(fill.filled_qty, filled);
        let e_avg = relative_error(fill.avg_price, expect_avg);
        let e_state = relative_error(next.displacement, shift);
        worst = worst.max(e_qty).max(e_avg).max(e_state);
        ensure(e_qty <= 1e-12 && e_avg <= 1e-12 && e_state <= 1e-12, || {
            format!(
                "case {case}: filled {} vs {filled}, avg {} vs {expect_avg}, displacement {} vs {shift}",
                fill.filled_qty, fill.avg_price, next.displacement
            )
        })?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "1000 cases, worst rel err {worst:.2e} (tol 1e-12), {elapsed:.2?} (limit 5 s)"
    ))
}

fn zero_friction() -> Outcome {
    let book = FlatBook {
        mid: 100.0,
        half_spread: 1e-11,
        tick: 1e-11,
        level_size: 1e6,
    };
    let day = flat_day(&book, 7_300);
    let setup = EpisodeSetup {
        engine: EngineParams::frictionless(),
        ..Default::default()
    };
    let policies = [
        ("twap", Method::Twap, PolicySpec::Twap),
        ("vwap", Method::Vwap, PolicySpec::Twap),
        ("random", Method::Rl, PolicySpec::Random),
        ("oracle", Method::Rl, PolicySpec::Oracle(OraclePolicy::default())),
    ];
    let mut worst = 0.0f64;
    let mut runs = 0;
    for h in [1_800u64, 3_600, 7_200] {
        for start in [0usize, 50] {
            for (name, method, spec) in &policies {
                let cfg = setup.episode(start, h, 7 + start as u64);
                let out = run_method(&day, cfg, *method, spec, &setup, None).map_err(|e| e.to_string())?;
                worst = worst.max(out.pnl_percent.abs());
                runs += 1;
                ensure(out.pnl_percent.abs() <= 1e-9, || {
                    format!("{name} at h={h}, start {start}: pnl {}", out.pnl_percent)
                })?;
            }
        }
    }
    Ok(format!(
        "{runs} episodes over 3 horizons, max |pnl| {worst:.2e}% (tol 1e-9)"
    ))
}

/// Proceeds of selling `qty` in `m` equal children spread evenly over
/// `horizon_s` on a book that never changes.
fn split_proceeds(book: &FlatBook, params: ImpactParams, qty: f64, m: u64, horizon_s: u64) -> f64 {
    let mut engine = ExecutionEngine::new(
        EngineParams {
            fees: FeeSchedule::default(),
            impact: params,
        },
        0,
    );
    (0..m)
        .map(|j| {
            let snap = book.snapshot(j * horizon_s * 1_000_000_000 / m);
            engine.sell(&snap, qty / m as f64).unwrap().net_proceeds()
        })
        .sum()
}

/// Relative gain of an `m`-way split over a single burst, for each `m`.
fn split_gains(book: &FlatBook, params: ImpactParams, qty: f64, horizon: u64) -> [f64; 3] {
    let burst = split_proceeds(book, params, qty, 1, horizon);
    [2u64, 5, 10].map(|m| (split_proceeds(book, params, qty, m, horizon) - burst) / burst)
}

fn random_flat_book<R: Rng>(rng: &mut R) -> (FlatBook, f64) {
    let book = FlatBook {
        mid: rng.random_range(1_000.0..20_000.0),
        half_spread: 0.5,
        tick: rng.random_range(0.1..2.0),
        level_size: rng.random_range(0.5..5.0),
    };
    let qty = rng.random_range(0.1..1.0) * book.level_size * 20.0;
    (book, qty)
}

fn impact_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = ImpactParams::default();

    // Configured parameter space: the sweep grid at every evaluation horizon.
    let mut grid = (0, 0, f64::INFINITY);
    for _ in 0..20 {
        let (book, qty) = random_flat_book(&mut rng);
        for k_factor in [0.5, 1.0, 2.0] {
            for hl_factor in [0.5, 1.0, 2.0] {
                for horizon in [1_800u64, 3_600, 7_200] {
                    for gain in split_gains(&book, base.scaled(k_factor, hl_factor), qty, horizon) {
                        grid.0 += 1;
                        grid.1 += usize::from(gain > 0.0);
                        grid.2 = grid.2.min(gain);
                    }
                }
            }
        }
    }

    // Any half-life below the horizon must give a strict gain; longer ones
    // must not lose.
    let horizon = 3_600u64;
    let (mut short, mut long) = ((0, 0), (0, 0));
    let mut first_violation = None;
    for case in 0..300 {
        let (book, qty) = random_flat_book(&mut rng);
        let below = case < 200;
        let hl_factor = if below {
            rng.random_range(0.001..0.99)
        } else {
            rng.random_range(1.0..2.0)
        };
        let params = ImpactParams {
            coeff: rng.random_range(0.01..0.5),
            size_exponent: rng.random_range(0.3..1.0),
            half_life_s: horizon as f64 * hl_factor,
        };
        for (gain, m) in split_gains(&book, params, qty, horizon).into_iter().zip([2, 5, 10]) {
            let ok = if below { gain > 0.0 } else { gain >= 0.0 };
            let tally = if below { &mut short } else { &mut long };
            tally.0 += 1;
            tally.1 += usize::from(ok);
            if !ok && first_violation.is_none() {
                first_violation = Some(format!(
                    "m={m}, k {:.3}, beta {:.2}, half-life {:.0} s, H {horizon} s: gain {gain:.3e}",
                    params.coeff, params.size_exponent, params.half_life_s
                ));
            }
        }
    }
    let summary = format!(
        "sweep grid x H in {{1800,3600,7200}}: {}/{} strict (min gain {:.2e}); random half-life < H: {}/{} strict; half-life in [H, 2H]: {}/{} non-losing",
        grid.1, grid.0, grid.2, short.1, short.0, long.1, long.0
    );
    match first_violation {
        None if grid.1 == grid.0 => Ok(summary),
        None => Err(summary),
        Some(v) => Err(format!("{summary}; first violation {v}")),
    }
}

fn wilcoxon_exactness() -> Outcome {
    let p = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], Alternative::Greater)
        .map_err(|e| e.to_string())?
        .p_value;
    ensure(p == 0.125, || format!("[1,2,3] gave {p}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for sample in 0..100 {
        let n = rng.random_range(1..=12);
        // Small integer grid so ties and zeros occur.
        let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-6i32..=6) as f64 / 2.0).collect();
        if x.iter().all(|v| *v == 0.0) {
            x[0] = 1.5;
        }
        let got = wilcoxon_signed_rank(&x, Alternative::Greater)
            .map_err(|e| e.to_string())?
            .p_value;
        let want = wilcoxon_enumeration(&x);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-12, || {
            format!("sample {sample} {x:?}: {got} vs {want}")
        })?;
    }
    Ok(format!(
        "[1,2,3] -> 0.125 exactly; 100 samples n<=12 vs 2^n enumeration, max |err| {worst:.1e} (tol 1e-12)"
    ))
}

fn bh_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for v in 0..1_000 {
        let m = rng.random_range(1..=20);
        let p: Vec<f64> = (0..m)
            .map(|_| {
                let raw: f64 = rng.random_range(0.0..1.0);
                // Every other vector is coarse so ties occur.
                if v % 2 == 0 {
                    (raw * 20.0).round() / 20.0
                } else {
                    raw
                }
            })
            .collect();
        let got = bh_adjust(&p).map_err(|e| e.to_string())?;
        let want = bh_brute_force(&p);
        ensure(got == want, || format!("vector {v} {p:?}: {got:?} vs {want:?}"))?;
        ensure(got.iter().zip(&p).all(|(a, r)| a >= r), || {
            format!("vector {v}: adjusted below raw")
        })?;
    }
    Ok("1000 vectors m<=20 match the definition exactly; adjusted >= raw".into())
}

fn bootstrap_calibration() -> Outcome {
    let trials = 1_000;
    let covered: Vec<bool> = par::map_range(Parallelism::Parallel, trials, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + t as u64);
        let gaps: Vec<f64> = (0..27).map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal)).collect();
        let ci = bootstrap_ci_mean(&gaps, 10_000, 0.95, t as u64, Parallelism::Sequential).unwrap();
        ci.low <= 1.0 && 1.0 <= ci.high
    });
    let rate = 100.0 * covered.iter().filter(|c| **c).count() as f64 / trials as f64;

    let gaps: Vec<f64> = (0..27).map(|i| (i as f64 * 0.37).sin()).collect();
    let a = bootstrap_ci_mean(&gaps, 10_000, 0.95, 9, Parallelism::Parallel).map_err(|e| e.to_string())?;
    let b = bootstrap_ci_mean(&gaps, 10_000, 0.95, 9, Parallelism::Parallel).map_err(|e| e.to_string())?;
    let c = bootstrap_ci_mean(&gaps, 10_000, 0.95, 9, Parallelism::Sequential).map_err(|e| e.to_string())?;
    ensure(a == b && a == c, || format!("same seed gave {a:?}, {b:?}, {c:?}"))?;
    ensure((93.0..=97.0).contains(&rate), || {
        format!("coverage {rate:.1}% outside [93, 97]")
    })?;
    Ok(format!(
        "coverage {rate:.1}% over {trials} trials (band [93, 97]); same seed -> identical interval"
    ))
}

fn reward_pnl_identity() -> Outcome {
    let model = MarketModel {
        snapshots_per_day: 4_000,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for episode in 0..100u64 {
        let day = model.day(default_date(), episode % 5);
        let horizon = [60u64, 600, 1_800][episode as usize % 3];
        let cfg = EpisodeConfig {
            start_index: rng.random_range(0..day.len() - horizon as usize),
            horizon_s: horizon,
            trade_fraction: rng.random_range(0.01..1.0),
            seed: episode,
            ..Default::default()
        };
        let engine = EngineParams {
            impact: ImpactParams {
                coeff: rng.random_range(0.0..0.3),
                ..Default::default()
            },
            ..Default::default()
        };
        let mut env = LiquidationEnv::new(&day, cfg, engine, RewardParams { inventory_penalty: 0.0 })
            .map_err(|e| e.to_string())?;
        env.reset();
        let mut total = 0.0;
        while !env.is_done() {
            total += env.step(rng.random_range(-1.0..1.0)).map_err(|e| e.to_string())?.reward;
        }
        let pnl = env.outcome().map_err(|e| e.to_string())?.pnl_percent;
        let err = (100.0 * total - pnl).abs();
        worst = worst.max(err);
        ensure(err <= 1e-9, || {
            format!("episode {episode}: 100*sum {} vs pnl {pnl}", 100.0 * total)
        })?;
    }
    Ok(format!(
        "100 random episodes, max |100*sum(r) - pnl| {worst:.2e} (tol 1e-9)"
    ))
}

fn month_config(data: &Path, out: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        data_dir: data.to_path_buf(),
        out_dir: out.to_path_buf(),
        horizons: vec![MONTH_HORIZON],
        oracle: OraclePolicy::default(),
        ..Default::default()
    };
    cfg.impact.k = MONTH_K;
    cfg
}

fn write_month(dir: &Path) -> Result<Vec<PathBuf>, String> {
    MarketModel::default()
        .write_month(dir, default_date(), MONTH_DAYS, MONTH_SEED, FileFormat::Binary)
        .map_err(|e| e.to_string())
}

fn end_to_end(root: &Path) -> Outcome {
    let started = Instant::now();
    let data = root.join("data");
    write_month(&data)?;
    let cfg = month_config(&data, &root.join("e2e"));
    let eval = pipeline::eval_compare(&cfg, Parallelism::Parallel).map_err(|e| e.to_string())?;
    let stats = pipeline::stats_eval(&eval.episode_files, &cfg, Parallelism::Parallel).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let mut lines = Vec::new();
    for r in &stats.results {
        ensure(r.horizon_s == MONTH_HORIZON && r.n_days == MONTH_DAYS, || {
            format!("unexpected row h={} n={}", r.horizon_s, r.n_days)
        })?;
        ensure(r.mean_gap > 0.0 && r.p_adj < 0.05 && r.ci_low > 0.0, || {
            format!(
                "vs {}: mean {:.4} bps, p_adj {:.2e}, CI [{:.4}, {:.4}] bps",
                r.baseline,
                r.mean_gap * 100.0,
                r.p_adj,
                r.ci_low * 100.0,
                r.ci_high * 100.0
            )
        })?;
        lines.push(format!(
            "vs {} mean {:.3} bps p_adj {:.1e} CI [{:.3}, {:.3}] bps",
            r.baseline,
            r.mean_gap * 100.0,
            r.p_adj,
            r.ci_low * 100.0,
            r.ci_high * 100.0
        ));
    }
    ensure(stats.results.len() == 2, || {
        format!("{} result rows", stats.results.len())
    })?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{MONTH_DAYS} days H={MONTH_HORIZON}: {}; {elapsed:.2?} (limit 120 s, p_adj < 0.05, CI low > 0)",
        lines.join("; ")
    ))
}

fn sensitivity_sweep(root: &Path) -> Outcome {
    let data = root.join("data");
    let mut signs = Vec::new();
    for k_factor in [0.5, 1.0, 2.0] {
        for hl_factor in [0.5, 1.0, 2.0] {
            let out = root.join(format!("sweep_k{k_factor}_hl{hl_factor}"));
            let mut cfg = month_config(&data, &out);
            let base = cfg.impact;
            cfg.set("impact_k", &(base.k * k_factor).to_string())
                .map_err(|e| e.to_string())?;
            cfg.set("impact_half_life", &(base.half_life_s * hl_factor).to_string())
                .map_err(|e| e.to_string())?;
            let eval = pipeline::eval_compare(&cfg, Parallelism::Parallel).map_err(|e| e.to_string())?;
            let file = std::fs::File::open(&eval.daily_files[0]).map_err(|e| e.to_string())?;
            let daily = read_daily_csv(file).map_err(|e| e.to_string())?;
            let gaps: Vec<f64> = daily.iter().map(|d| d.gap_twap()).collect();
            let g = mean(&gaps);
            ensure(g > 0.0, || {
                format!("k x{k_factor}, half-life x{hl_factor}: mean gap vs TWAP {g}")
            })?;
            signs.push(format!("{:.2}", g * 100.0));
        }
    }
    Ok(format!(
        "k, half-life x {{0.5,1,2}}: all 9 mean gaps vs TWAP positive, bps [{}]",
        signs.join(", ")
    ))
}

fn read_outputs(files: &[PathBuf]) -> Result<Vec<(String, Vec<u8>)>, String> {
    files
        .iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            std::fs::read(p).map(|b| (name, b)).map_err(|e| e.to_string())
        })
        .collect()
}

fn determinism(root: &Path) -> Outcome {
    let data = root.join("data");
    let mut cfg = month_config(&data, &root.join("fit"));
    cfg.date_to = default_date().checked_add_days(Days::new(1));
    let norm_path = root.join("obs_stats.bin");
    pipeline::fit_norm(&cfg, &norm_path).map_err(|e| e.to_string())?;
    let before = std::fs::read(&norm_path).map_err(|e| e.to_string())?;
    let hash = NormalizerStats::from_bytes(&before)
        .map_err(|e| e.to_string())?
        .sha256();

    let mut outputs = Vec::new();
    for (i, mode) in [Parallelism::Parallel, Parallelism::Parallel, Parallelism::Sequential]
        .into_iter()
        .enumerate()
    {
        let mut cfg = month_config(&data, &root.join(format!("rerun{i}")));
        cfg.horizons = vec![1_800, 3_600];
        cfg.k_starts = 4;
        cfg.normalizer = Some(norm_path.clone());
        let eval = pipeline::eval_compare(&cfg, mode).map_err(|e| e.to_string())?;
        ensure(
            eval.manifest.normalizer_sha256.as_deref() == Some(hash.as_str()),
            || "manifest records a different normaliser hash".into(),
        )?;
        let files: Vec<PathBuf> = eval.episode_files.iter().chain(&eval.daily_files).cloned().collect();
        outputs.push(read_outputs(&files)?);
    }
    ensure(outputs[0] == outputs[1], || "two parallel runs differ".into())?;
    ensure(outputs[0] == outputs[2], || {
        "sequential run differs from parallel".into()
    })?;
    let after = std::fs::read(&norm_path).map_err(|e| e.to_string())?;
    ensure(before == after, || "normaliser file changed".into())?;
    Ok(format!(
        "{} CSVs byte-identical over 2 parallel + 1 sequential run; frozen stats sha256 {}.. unchanged",
        outputs[0].len(),
        &hash[..12]
    ))
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let root = root.path();
    let checks: Vec<(&str, Check)> = vec![
        ("fill engine oracle", Box::new(fill_oracle)),
        ("zero-friction identity", Box::new(zero_friction)),
        ("impact monotonicity", Box::new(impact_monotonicity)),
        ("wilcoxon exactness", Box::new(wilcoxon_exactness)),
        ("bh correctness", Box::new(bh_correctness)),
        ("bootstrap calibration", Box::new(bootstrap_calibration)),
        ("reward/pnl identity", Box::new(reward_pnl_identity)),
        ("end-to-end synthetic month", Box::new(|| end_to_end(root))),
        ("impact sensitivity sweep", Box::new(|| sensitivity_sweep(root))),
        ("determinism and frozen stats", Box::new(|| determinism(root))),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        let started = Instant::now();
        let outcome =
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{:.2?}]", started.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{:.2?}]", started.elapsed());
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
