//! Figure data for per-day gaps and a small static SVG renderer.
//!
//! For every (horizon, baseline) pair the `plot` command writes five series,
//! each as CSV plus SVG: daily gap bars, cumulative gap, ECDF, histogram and
//! the policy-vs-baseline scatter. Gaps are shown in basis points.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::eval::{DailyScore, Method};

const BPS_PER_PERCENT: f64 = 100.0;

/// Daily gaps `rl - baseline` in bps, days ascending.
pub fn gap_bars(daily: &[DailyScore], horizon_s: u64, baseline: Method) -> Vec<(NaiveDate, f64)> {
    let mut out: Vec<(NaiveDate, f64)> = daily
        .iter()
        .filter(|d| d.horizon_s == horizon_s)
        .map(|d| {
            let gap = match baseline {
                Method::Vwap => d.gap_vwap(),
                _ => d.gap_twap(),
            };
            (d.day, gap * BPS_PER_PERCENT)
        })
        .collect();
    out.sort_by_key(|p| p.0);
    out
}

/// Running sum of the gaps.
pub fn cumulative(gaps: &[(NaiveDate, f64)]) -> Vec<(NaiveDate, f64)> {
    let mut acc = 0.0;
    gaps.iter()
        .map(|&(d, g)| {
            acc += g;
            (d, acc)
        })
        .collect()
}

/// Right-continuous empirical CDF at `x`.
pub fn ecdf_at(values: &[f64], x: f64) -> f64 {
    values.iter().filter(|&&v| v <= x).count() as f64 / values.len() as f64
}

/// ECDF steps: one `(value, F(value))` per distinct value, ascending.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in s.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = f,
            _ => out.push((v, f)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width histogram with Sturges' bin count; the last bin is closed.
pub fn histogram(values: &[f64]) -> Vec<Bin> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len();
    let bins = ((n as f64).log2().ceil() as usize + 1).max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![Bin { lo, hi, count: n }];
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<Bin> = (0..bins)
        .map(|i| Bin {
            lo: lo + i as f64 * width,
            hi: if i + 1 == bins { hi } else { lo + (i + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for &v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}

/// `(baseline score, policy score)` per day, in percent.
pub fn scatter(daily: &[DailyScore], horizon_s: u64, baseline: Method) -> Vec<(f64, f64)> {
    daily
        .iter()
        .filter(|d| d.horizon_s == horizon_s)
        .map(|d| {
            let b = match baseline {
                Method::Vwap => d.vwap,
                _ => d.twap,
            };
            (b, d.rl)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Bars,
    Line,
    Steps,
    Points,
}

/// Minimal SVG chart with axes, a zero line and optional diagonal.
pub fn render_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    points: &[(f64, f64)],
    mark: Mark,
    diagonal: bool,
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 56.0;
    let (mut x0, mut x1, mut y0, mut y1) = points.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if mark == Mark::Bars {
        y0 = y0.min(0.0);
        y1 = y1.max(0.0);
        x0 -= 0.5;
        x1 += 0.5;
    }
    if diagonal {
        x0 = x0.min(y0);
        y0 = x0;
        x1 = x1.max(y1);
        y1 = x1;
    }
    if x1.is_nan() || x0.is_nan() || x1 <= x0 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if y1.is_nan() || y0.is_nan() || y1 <= y0 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (v, anchor_y) in [(y0, H - PAD), (y1, PAD)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            PAD - 4.0,
            anchor_y + 4.0,
            tick(v)
        );
    }
    for (v, anchor_x) in [(x0, PAD), (x1, W - PAD)] {
        let _ = writeln!(
            s,
            r#"<text x="{anchor_x}" y="{}" text-anchor="middle">{}</text>"#,
            H - PAD + 16.0,
            tick(v)
        );
    }
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{PAD}" y1="{z}" x2="{}" y2="{z}" stroke="#999" stroke-dasharray="4 3"/>"##,
            W - PAD,
            z = sy(0.0)
        );
    }
    if diagonal {
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 3"/>"##,
            sx(x0),
            sy(x0),
            sx(x1),
            sy(x1)
        );
    }
    match mark {
        Mark::Bars => {
            let bw = ((W - 2.0 * PAD) / (x1 - x0) * 0.8).max(1.0);
            for &(x, y) in points {
                let (top, h) = if y >= 0.0 {
                    (sy(y), sy(0.0) - sy(y))
                } else {
                    (sy(0.0), sy(y) - sy(0.0))
                };
                let color = if y > 0.0 { "#2b7bb9" } else { "#c0504d" };
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{top:.2}" width="{bw:.2}" height="{h:.2}" fill="{color}"/>"#,
                    sx(x) - bw / 2.0
                );
            }
        }
        Mark::Line | Mark::Steps => {
            let mut d = String::new();
            for (i, &(x, y)) in points.iter().enumerate() {
                if i == 0 {
                    let _ = write!(d, "M{:.2},{:.2}", sx(x), sy(y));
                } else if mark == Mark::Steps {
                    let _ = write!(d, " H{:.2} V{:.2}", sx(x), sy(y));
                } else {
                    let _ = write!(d, " L{:.2},{:.2}", sx(x), sy(y));
                }
            }
            let _ = writeln!(s, r##"<path d="{d}" fill="none" stroke="#2b7bb9" stroke-width="2"/>"##);
        }
        Mark::Points => {
            for &(x, y) in points {
                let _ = writeln!(
                    s,
                    r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#2b7bb9"/>"##,
                    sx(x),
                    sy(y)
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    format!("{v:.3}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write_series(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: PathBuf, text: String) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes every figure for every (horizon, baseline) in `daily`; returns the
/// files written.
pub fn write_figures(daily: &[DailyScore], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if daily.is_empty() {
        return Err(Error::Data("no daily scores to plot".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut horizons: Vec<u64> = daily.iter().map(|d| d.horizon_s).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut files = Vec::new();
    for h in horizons {
        for baseline in [Method::Twap, Method::Vwap] {
            let tag = format!("h{h}_{}", baseline.as_str());
            let name = baseline.as_str().to_uppercase();
            let bars = gap_bars(daily, h, baseline);
            let gaps: Vec<f64> = bars.iter().map(|b| b.1).collect();

            let p = out_dir.join(format!("gaps_{tag}.csv"));
            write_series(
                &p,
                &["day", "gap_bps"],
                bars.iter().map(|(d, g)| vec![d.to_string(), g.to_string()]),
            )?;
            files.push(p);
            let pts: Vec<(f64, f64)> = bars.iter().enumerate().map(|(i, b)| (i as f64, b.1)).collect();
            files.push(write_text(
                out_dir.join(format!("gaps_{tag}.svg")),
                render_svg(
                    &format!("RL - {name} daily gap, {h} s"),
                    "day",
                    "gap (bps)",
                    &pts,
                    Mark::Bars,
                    false,
                ),
            )?);

            let cum = cumulative(&bars);
            let p = out_dir.join(format!("cumulative_{tag}.csv"));
            write_series(
                &p,
                &["day", "cumulative_bps"],
                cum.iter().map(|(d, g)| vec![d.to_string(), g.to_string()]),
            )?;
            files.push(p);
            let pts: Vec<(f64, f64)> = cum.iter().enumerate().map(|(i, c)| (i as f64, c.1)).collect();
            files.push(write_text(
                out_dir.join(format!("cumulative_{tag}.svg")),
                render_svg(
                    &format!("Cumulative RL - {name} gap, {h} s"),
                    "day",
                    "bps",
                    &pts,
                    Mark::Line,
                    false,
                ),
            )?);

            let steps = ecdf(&gaps);
            let p = out_dir.join(format!("ecdf_{tag}.csv"));
            write_series(
                &p,
                &["gap_bps", "ecdf"],
                steps.iter().map(|(x, f)| vec![x.to_string(), f.to_string()]),
            )?;
            files.push(p);
            files.push(write_text(
                out_dir.join(format!("ecdf_{tag}.svg")),
                render_svg(
                    &format!("ECDF of RL - {name} gaps, {h} s"),
                    "gap (bps)",
                    "F",
                    &steps,
                    Mark::Steps,
                    false,
                ),
            )?);

            let hist = histogram(&gaps);
            let p = out_dir.join(format!("hist_{tag}.csv"));
            write_series(
                &p,
                &["lo_bps", "hi_bps", "count"],
                hist.iter()
                    .map(|b| vec![b.lo.to_string(), b.hi.to_string(), b.count.to_string()]),
            )?;
            files.push(p);
            let pts: Vec<(f64, f64)> = hist.iter().map(|b| (0.5 * (b.lo + b.hi), b.count as f64)).collect();
            files.push(write_text(
                out_dir.join(format!("hist_{tag}.svg")),
                render_svg(
                    &format!("RL - {name} gap histogram, {h} s"),
                    "gap (bps)",
                    "days",
                    &pts,
                    Mark::Bars,
                    false,
                ),
            )?);

            let sc = scatter(daily, h, baseline);
            let p = out_dir.join(format!("scatter_{tag}.csv"));
            write_series(
                &p,
                &["baseline_pct", "rl_pct"],
                sc.iter().map(|(b, r)| vec![b.to_string(), r.to_string()]),
            )?;
            files.push(p);
            files.push(write_text(
                out_dir.join(format!("scatter_{tag}.svg")),
                render_svg(
                    &format!("RL vs {name} daily PnL, {h} s"),
                    &format!("{name} (%)"),
                    "RL (%)",
                    &sc,
                    Mark::Points,
                    true,
                ),
            )?);
        }
    }
    Ok(files)
}
