//! Paired inference on per-day gaps: Wilcoxon signed-rank, paired t,
//! Benjamini-Hochberg adjustment, percentile bootstrap, Cohen's d, win rate
//! and winsorisation, plus the CSV / Markdown report.

use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::par::{self, Parallelism};

/// Largest number of nonzero differences evaluated with the exact null.
pub const EXACT_MAX_N: usize = 25;
/// Resamples drawn per deterministic substream.
const BOOTSTRAP_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// H1: median / mean difference is positive.
    #[default]
    Greater,
    Less,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
    /// Every difference was zero; `p` is reported as 1.
    Degenerate,
}

impl WilcoxonMethod {
    pub fn label(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Normal => "normal",
            Self::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    /// Nonzero differences that entered the ranking.
    pub n_used: usize,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Average ranks of `|x|`, doubled so tied ranks stay integral.
fn doubled_ranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // Positions i..=j share the rank ((i + 1) + (j + 1)) / 2.
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

/// Signed-rank test. Zeros are dropped; ties get average ranks. Up to
/// [`EXACT_MAX_N`] nonzero differences the null distribution of the doubled
/// rank sum is counted exactly, beyond that a normal approximation with tie
/// and continuity corrections is used.
pub fn wilcoxon_signed_rank(diffs: &[f64], alternative: Alternative) -> Result<WilcoxonResult> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Stats("non-finite difference".into()));
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            n_used: 0,
            p_value: 1.0,
            method: WilcoxonMethod::Degenerate,
        });
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let w2: u64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let w_plus = w2 as f64 / 2.0;

    let (upper, lower, method) = if n <= EXACT_MAX_N {
        let (u, l) = exact_tails(&ranks, w2);
        (u, l, WilcoxonMethod::Exact)
    } else {
        let (u, l) = normal_tails(&ranks, w_plus);
        (u, l, WilcoxonMethod::Normal)
    };
    let p_value = match alternative {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    };
    Ok(WilcoxonResult {
        w_plus,
        n_used: n,
        p_value: p_value.clamp(0.0, 1.0),
        method,
    })
}

/// `(P(W2 >= w2), P(W2 <= w2))` under the sign-flip null.
fn exact_tails(doubled: &[u64], w2: u64) -> (f64, f64) {
    let total: usize = doubled.iter().sum::<u64>() as usize;
    // counts[s] = number of sign assignments whose positive doubled ranks sum
    // to s. At most 2^25 per cell, so f64 counts are exact.
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = (doubled.len() as f64).exp2();
    let w2 = w2 as usize;
    let upper: f64 = counts[w2..].iter().sum();
    let lower: f64 = counts[..=w2].iter().sum();
    (upper / all, lower / all)
}

fn normal_tails(doubled: &[u64], w_plus: f64) -> (f64, f64) {
    let n = doubled.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = doubled.to_vec();
    sorted.sort_unstable();
    let tie_term: f64 = sorted
        .chunk_by(|a, b| a == b)
        .map(|g| {
            let t = g.len() as f64;
            t * t * t - t
        })
        .sum();
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let sd = var.sqrt();
    let std_normal = Normal::standard();
    let upper = 1.0 - std_normal.cdf((w_plus - mean - 0.5) / sd);
    let lower = std_normal.cdf((w_plus - mean + 0.5) / sd);
    (upper.min(1.0), lower.min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Paired t-test on the differences; zeros are kept. `None` when `n < 2` or
/// the sample standard deviation is zero.
pub fn paired_t_test(diffs: &[f64], alternative: Alternative) -> Option<TTestResult> {
    let n = diffs.len();
    let sd = sample_sd(diffs)?;
    if sd == 0.0 || !sd.is_finite() {
        return None;
    }
    let t = mean(diffs) / (sd / (n as f64).sqrt());
    let df = (n - 1) as f64;
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    let p = match alternative {
        Alternative::Greater => dist.sf(t),
        Alternative::Less => dist.cdf(t),
        Alternative::TwoSided => (2.0 * dist.sf(t.abs())).min(1.0),
    };
    Some(TTestResult {
        t,
        df,
        p_value: p.clamp(0.0, 1.0),
    })
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn bh_adjust(p: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Stats(format!("p-value {bad} outside [0, 1]")));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &idx) in order.iter().enumerate().rev() {
        // m/rank >= 1 is rounded >= 1, so the product never drops below p.
        let candidate = p[idx] * (m as f64 / (pos + 1) as f64);
        running = running.min(candidate);
        adjusted[idx] = running;
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
}

/// Index of the nearest-rank `q`-quantile in a sorted sample of size `n`.
pub fn nearest_rank_index(q: f64, n: usize) -> usize {
    // The small slack keeps products such as 0.025 * 10000 on the integer.
    let rank = (q * n as f64 - 1e-9).ceil().max(1.0) as usize;
    rank.min(n) - 1
}

/// Percentile bootstrap interval of the mean. Resamples are drawn in chunks,
/// each from its own ChaCha8 stream of `seed`, so the interval does not
/// depend on how chunks are scheduled.
pub fn bootstrap_ci_mean(x: &[f64], resamples: usize, level: f64, seed: u64, mode: Parallelism) -> Result<BootstrapCi> {
    if x.is_empty() {
        return Err(Error::Stats("bootstrap needs at least one value".into()));
    }
    if resamples == 0 {
        return Err(Error::Stats("bootstrap needs at least one resample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Stats(format!("confidence level {level} outside (0, 1)")));
    }
    let n = x.len();
    let chunks = resamples.div_ceil(BOOTSTRAP_CHUNK);
    let per_chunk = par::map_range(mode, chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let count = BOOTSTRAP_CHUNK.min(resamples - c * BOOTSTRAP_CHUNK);
        (0..count)
            .map(|_| (0..n).map(|_| x[rng.random_range(0..n)]).sum::<f64>() / n as f64)
            .collect::<Vec<f64>>()
    });
    let mut means: Vec<f64> = per_chunk.into_iter().flatten().collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapCi {
        low: means[nearest_rank_index(tail, resamples)],
        high: means[nearest_rank_index(1.0 - tail, resamples)],
    })
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Sample standard deviation (`n - 1` denominator); `None` below two values.
pub fn sample_sd(x: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (x.len() - 1) as f64).sqrt())
}

/// `mean / sample sd`; `None` for fewer than two values or zero spread.
pub fn cohens_d(x: &[f64]) -> Option<f64> {
    let sd = sample_sd(x)?;
    (sd > 0.0).then(|| mean(x) / sd)
}

/// Fraction of strictly positive values; zeros are not wins.
pub fn win_rate(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().filter(|&&v| v > 0.0).count() as f64 / x.len() as f64
}

/// Clamps values to the order statistics at `k = ceil(fraction * n)` from
/// each end (0-based), so `n = 27, fraction = 0.01` replaces exactly the
/// minimum and the maximum with their neighbours.
pub fn winsorize(x: &[f64], fraction: f64) -> Result<Vec<f64>> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::Stats(format!("winsorize fraction {fraction} outside [0, 0.5)")));
    }
    let n = x.len();
    if n == 0 || fraction == 0.0 {
        return Ok(x.to_vec());
    }
    let k = ((fraction * n as f64 - 1e-9).ceil() as usize).min((n - 1) / 2);
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[k], sorted[n - 1 - k]);
    Ok(x.iter().map(|v| v.clamp(lo, hi)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsOptions {
    pub alternative: Alternative,
    /// Level at which adjusted p-values are marked significant in reports.
    pub alpha: f64,
    /// Winsorisation fraction applied to every gap series before testing.
    pub winsorize: Option<f64>,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            alternative: Alternative::Greater,
            alpha: 0.05,
            winsorize: None,
            bootstrap_resamples: 10_000,
            confidence: 0.95,
            seed: 0,
        }
    }
}

/// One row of the report: a (horizon, baseline) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub horizon_s: u64,
    pub baseline: String,
    pub n_days: usize,
    pub mean_gap: f64,
    pub median_gap: f64,
    pub wilcoxon_stat: f64,
    pub wilcoxon_method: WilcoxonMethod,
    pub p_wilcoxon: f64,
    pub p_adj: f64,
    pub t_stat: Option<f64>,
    pub p_ttest: Option<f64>,
    pub cohens_d: Option<f64>,
    pub win_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub winsorized: bool,
}

/// Gap series of one baseline at one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSeries {
    pub horizon_s: u64,
    pub baseline: String,
    pub gaps: Vec<f64>,
}

/// Tests every series, then BH-adjusts the Wilcoxon p-values separately
/// within each horizon. Rows come back sorted by (horizon, baseline).
pub fn evaluate(series: &[GapSeries], opts: &StatsOptions, mode: Parallelism) -> Result<Vec<TestResult>> {
    if series.is_empty() {
        return Err(Error::Stats("no gap series to test".into()));
    }
    let mut rows = Vec::with_capacity(series.len());
    for s in series {
        if s.gaps.is_empty() {
            return Err(Error::Stats(format!(
                "no days for baseline {} at horizon {}",
                s.baseline, s.horizon_s
            )));
        }
        let gaps = match opts.winsorize {
            Some(f) if f > 0.0 => winsorize(&s.gaps, f)?,
            _ => s.gaps.clone(),
        };
        let w = wilcoxon_signed_rank(&gaps, opts.alternative)?;
        let t = paired_t_test(&gaps, opts.alternative);
        let seed = crate::synth::mix(opts.seed, s.horizon_s);
        let ci = bootstrap_ci_mean(&gaps, opts.bootstrap_resamples, opts.confidence, seed, mode)?;
        rows.push(TestResult {
            horizon_s: s.horizon_s,
            baseline: s.baseline.clone(),
            n_days: gaps.len(),
            mean_gap: mean(&gaps),
            median_gap: median(&gaps),
            wilcoxon_stat: w.w_plus,
            wilcoxon_method: w.method,
            p_wilcoxon: w.p_value,
            p_adj: f64::NAN,
            t_stat: t.map(|t| t.t),
            p_ttest: t.map(|t| t.p_value),
            cohens_d: cohens_d(&gaps),
            win_rate: win_rate(&gaps),
            ci_low: ci.low,
            ci_high: ci.high,
            winsorized: opts.winsorize.is_some_and(|f| f > 0.0),
        });
    }
    rows.sort_by(|a, b| (a.horizon_s, &a.baseline).cmp(&(b.horizon_s, &b.baseline)));
    let mut start = 0;
    while start < rows.len() {
        let h = rows[start].horizon_s;
        let end = start + rows[start..].iter().take_while(|r| r.horizon_s == h).count();
        let raw: Vec<f64> = rows[start..end].iter().map(|r| r.p_wilcoxon).collect();
        for (row, adj) in rows[start..end].iter_mut().zip(bh_adjust(&raw)?) {
            row.p_adj = adj;
        }
        start = end;
    }
    Ok(rows)
}

pub const STATS_CSV_HEADER: [&str; 13] = [
    "horizon_s",
    "baseline",
    "n_days",
    "mean_gap",
    "median_gap",
    "p_wilcoxon",
    "p_adj",
    "p_ttest",
    "cohens_d",
    "win_rate",
    "ci_low",
    "ci_high",
    "winsorized",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the stats CSV. Optional values that are undefined stay empty.
pub fn write_stats_csv<W: Write>(rows: &[TestResult], writer: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Stats("refusing to write an empty report".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Stats(format!("writing stats CSV: {e}"));
    w.write_record(STATS_CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.horizon_s.to_string(),
            r.baseline.clone(),
            r.n_days.to_string(),
            r.mean_gap.to_string(),
            r.median_gap.to_string(),
            r.p_wilcoxon.to_string(),
            r.p_adj.to_string(),
            opt(r.p_ttest),
            opt(r.cohens_d),
            r.win_rate.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            r.winsorized.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Stats(format!("writing stats CSV: {e}")))?;
    Ok(())
}

/// Markdown summary, one table per horizon; `manifest` lines are echoed at
/// the end.
pub fn markdown_report(rows: &[TestResult], opts: &StatsOptions, manifest: &[(String, String)]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Stats("refusing to write an empty report".into()));
    }
    let mut out = String::from("# Per-day gap tests\n\n");
    let side = match opts.alternative {
        Alternative::Greater => "one-sided (gap > 0)",
        Alternative::Less => "one-sided (gap < 0)",
        Alternative::TwoSided => "two-sided",
    };
    let _ = writeln!(
        out,
        "Tests: Wilcoxon signed-rank and paired t, {side}; BH within each horizon at alpha {}; \
         {:.0}% percentile bootstrap with {} resamples (seed {}).",
        opts.alpha,
        opts.confidence * 100.0,
        opts.bootstrap_resamples,
        opts.seed
    );
    if let Some(f) = opts.winsorize.filter(|f| *f > 0.0) {
        let _ = writeln!(out, "Gaps winsorized at {f}.");
    }
    let fmt_opt = |v: Option<f64>, prec: usize| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.prec$}"));
    let mut start = 0;
    while start < rows.len() {
        let h = rows[start].horizon_s;
        let end = start + rows[start..].iter().take_while(|r| r.horizon_s == h).count();
        let _ = writeln!(out, "\n## Horizon {h} s\n");
        out.push_str("| baseline | days | mean gap (%) | median gap (%) | CI low | CI high | W+ | p (Wilcoxon) | method | p adj | reject | p (t) | Cohen's d | win rate |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|---|---|\n");
        for r in &rows[start..end] {
            let _ = writeln!(
                out,
                "| {} | {} | {:.6} | {:.6} | {:.6} | {:.6} | {} | {:.6} | {} | {:.6} | {} | {} | {} | {:.3} |",
                r.baseline,
                r.n_days,
                r.mean_gap,
                r.median_gap,
                r.ci_low,
                r.ci_high,
                r.wilcoxon_stat,
                r.p_wilcoxon,
                r.wilcoxon_method.label(),
                r.p_adj,
                if r.p_adj < opts.alpha { "yes" } else { "no" },
                fmt_opt(r.p_ttest, 6),
                fmt_opt(r.cohens_d, 4),
                r.win_rate
            );
        }
        start = end;
    }
    if !manifest.is_empty() {
        out.push_str("\n## Run\n\n");
        for (k, v) in manifest {
            let _ = writeln!(out, "- {k}: {v}");
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Upper-tail p by listing all 2^n sign assignments.
    fn enumerate_upper(x: &[f64]) -> f64 {
        let nz: Vec<f64> = x.iter().copied().filter(|v| *v != 0.0).collect();
        let abs: Vec<f64> = nz.iter().map(|v| v.abs()).collect();
        let ranks: Vec<f64> = abs
            .iter()
            .map(|a| {
                let less = abs.iter().filter(|b| *b < a).count() as f64;
                let eq = abs.iter().filter(|b| *b == a).count() as f64;
                less + (eq + 1.0) / 2.0
            })
            .collect();
        let obs: f64 = nz.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
        let n = nz.len();
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if w >= obs - 1e-9 {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn wilcoxon_examples() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], Alternative::Greater).unwrap();
        assert_eq!(r.w_plus, 6.0);
        assert_eq!(r.p_value, 0.125);
        assert_eq!(r.method, WilcoxonMethod::Exact);
        let r = wilcoxon_signed_rank(&[-1.0, -2.0, -3.0], Alternative::Greater).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = wilcoxon_signed_rank(&[0.0, 0.0], Alternative::Greater).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Degenerate);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn wilcoxon_ties_and_zeros_match_enumeration() {
        let x = [0.0, 1.0, -1.0, 2.0, 2.0, -2.0, 3.0, 0.5, 0.5];
        let r = wilcoxon_signed_rank(&x, Alternative::Greater).unwrap();
        assert_eq!(r.n_used, 8);
        assert!((r.p_value - enumerate_upper(&x)).abs() < 1e-12);
    }

    #[test]
    fn sign_flip_identity() {
        // Negating the sample swaps the tails; the two p-values overlap in
        // the point mass at the observed statistic.
        let x = [0.3, -1.2, 2.5, 0.7, -0.1, 1.9, 4.0];
        let p = wilcoxon_signed_rank(&x, Alternative::Greater).unwrap().p_value;
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let q = wilcoxon_signed_rank(&neg, Alternative::Greater).unwrap().p_value;
        let less = wilcoxon_signed_rank(&x, Alternative::Less).unwrap().p_value;
        assert_eq!(q, less);
        assert!(p + q > 1.0);
        let point_mass = p + q - 1.0;
        // W+ = 2+3+5+6+7 = 23. Subsets of 1..=7 summing to 23 are the
        // complements of {5}, {1,4}, {2,3}.
        assert!((point_mass - 3.0 / 128.0).abs() < 1e-15, "{point_mass}");
    }

    #[test]
    fn two_sided_doubles_smaller_tail() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let one = wilcoxon_signed_rank(&x, Alternative::Greater).unwrap().p_value;
        let two = wilcoxon_signed_rank(&x, Alternative::TwoSided).unwrap().p_value;
        assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn normal_branch_above_threshold() {
        let x: Vec<f64> = (1..=30)
            .map(|i| i as f64 * if i % 4 == 0 { -1.0 } else { 1.0 })
            .collect();
        let r = wilcoxon_signed_rank(&x, Alternative::Greater).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Normal);
        assert!(r.p_value < 0.01);
    }

    #[test]
    fn t_test_examples() {
        let t = paired_t_test(&[-1.0, 1.0, -2.0, 2.0], Alternative::Greater).unwrap();
        assert_eq!(t.t, 0.0);
        assert!((t.p_value - 0.5).abs() < 1e-12);
        assert!(paired_t_test(&[1.0; 4], Alternative::Greater).is_none());
        assert!(paired_t_test(&[1.0], Alternative::Greater).is_none());
    }

    #[test]
    fn t_test_against_table() {
        // Upper 5%, 2.5% and 1% points of Student t with 19 df.
        for (q, p) in [(1.729133, 0.05), (2.093024, 0.025), (2.539483, 0.01)] {
            let dist = StudentsT::new(0.0, 1.0, 19.0).unwrap();
            assert!((dist.sf(q) - p).abs() < 1e-6);
        }
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_adjust(&[0.3]).unwrap(), vec![0.3]);
        let adj = bh_adjust(&[0.01, 0.04]).unwrap();
        assert!((adj[0] - 0.02).abs() < 1e-15 && (adj[1] - 0.04).abs() < 1e-15);
        let adj = bh_adjust(&[0.04, 0.01]).unwrap();
        assert!((adj[1] - 0.02).abs() < 1e-15 && (adj[0] - 0.04).abs() < 1e-15);
        assert!(bh_adjust(&[1.2]).is_err());
        assert!(bh_adjust(&[]).unwrap().is_empty());
    }

    #[test]
    fn bootstrap_constant_and_deterministic() {
        let ci = bootstrap_ci_mean(&[2.5; 9], 1000, 0.95, 1, Parallelism::Parallel).unwrap();
        assert_eq!((ci.low, ci.high), (2.5, 2.5));
        let x = [0.1, -0.4, 1.3, 0.8, 2.2, -0.9, 0.5];
        let a = bootstrap_ci_mean(&x, 10_000, 0.95, 42, Parallelism::Parallel).unwrap();
        let b = bootstrap_ci_mean(&x, 10_000, 0.95, 42, Parallelism::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.low <= mean(&x) && mean(&x) <= a.high);
        assert!(bootstrap_ci_mean(&[], 10, 0.95, 0, Parallelism::Sequential).is_err());
    }

    #[test]
    fn nearest_rank_indices() {
        assert_eq!(nearest_rank_index(0.025, 10_000), 249);
        assert_eq!(nearest_rank_index(0.975, 10_000), 9749);
        assert_eq!(nearest_rank_index(0.0, 5), 0);
        assert_eq!(nearest_rank_index(1.0, 5), 4);
    }

    #[test]
    fn effect_sizes() {
        assert_eq!(cohens_d(&[-1.0, 1.0]), Some(0.0));
        assert!((cohens_d(&[0.0, 2.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(cohens_d(&[3.0, 3.0]), None);
        assert_eq!(win_rate(&[1.0, 0.0, -1.0, 2.0]), 0.5);
    }

    #[test]
    fn winsorize_examples() {
        let x: Vec<f64> = (0..27).map(|i| ((i * 7) % 27) as f64).collect();
        assert_eq!(winsorize(&x, 0.0).unwrap(), x);
        let w = winsorize(&x, 0.01).unwrap();
        let min = w.iter().copied().fold(f64::INFINITY, f64::min);
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((min, max), (1.0, 25.0));
        assert_eq!(w.iter().filter(|&&v| v == 1.0).count(), 2);
        assert_eq!(winsorize(&w, 0.01).unwrap(), w);
        assert!(winsorize(&x, 0.5).is_err());
    }

    #[test]
    fn family_adjustment_is_per_horizon() {
        let series = vec![
            GapSeries {
                horizon_s: 600,
                baseline: "twap".into(),
                gaps: vec![1.0, 2.0, 3.0],
            },
            GapSeries {
                horizon_s: 3600,
                baseline: "twap".into(),
                gaps: vec![1.0, 2.0, 3.0],
            },
        ];
        let opts = StatsOptions {
            bootstrap_resamples: 200,
            ..Default::default()
        };
        let rows = evaluate(&series, &opts, Parallelism::Sequential).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.p_adj == 0.125));
        assert!(evaluate(&[], &opts, Parallelism::Sequential).is_err());
    }
}
