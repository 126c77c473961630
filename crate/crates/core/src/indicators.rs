//! Microstructure indicators computed from one snapshot, or from a pair of
//! consecutive snapshots for the flow and momentum terms.
//!
//! Formulas whose denominator can vanish return a neutral value instead of a
//! non-finite number and raise the matching flag in [`Degeneracy`].

use serde::{Deserialize, Serialize};

use crate::store::Snapshot;
use crate::DEPTH;

/// BPI is clamped to `[BPI_MIN, BPI_MAX]`.
pub const BPI_MIN: f64 = 1e-6;
pub const BPI_MAX: f64 = 1e6;

/// Column names in export / observation order.
pub const INDICATOR_NAMES: [&str; IndicatorVector::LEN] = [
    "micro_price",
    "imbalance_top",
    "imbalance_multi",
    "spread_norm",
    "depth_bid",
    "depth_ask",
    "vamp",
    "ofi",
    "bpi",
    "delta_mid",
    "delta_vamp",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IndicatorVector {
    pub micro_price: f64,
    pub imbalance_top: f64,
    pub imbalance_multi: f64,
    /// Percent of mid.
    pub spread_norm: f64,
    /// Quote currency.
    pub depth_bid: f64,
    pub depth_ask: f64,
    pub vamp: f64,
    pub ofi: f64,
    pub bpi: f64,
    pub delta_mid: f64,
    pub delta_vamp: f64,
}

/// Which formulas fell back to a neutral value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Degeneracy {
    pub micro_price: bool,
    pub imbalance_top: bool,
    pub imbalance_multi: bool,
    pub vamp: bool,
    pub ofi: bool,
    pub bpi: bool,
    /// No previous snapshot: deltas were set to zero.
    pub deltas: bool,
}

impl Degeneracy {
    pub fn count(&self) -> u32 {
        [
            self.micro_price,
            self.imbalance_top,
            self.imbalance_multi,
            self.vamp,
            self.ofi,
            self.bpi,
            self.deltas,
        ]
        .iter()
        .map(|&b| b as u32)
        .sum()
    }

    pub fn any(&self) -> bool {
        self.count() > 0
    }
}

impl IndicatorVector {
    pub const LEN: usize = 11;

    /// Computes every indicator for `cur`; `prev` is the preceding snapshot of
    /// the same episode, if any.
    pub fn compute(prev: Option<&Snapshot>, cur: &Snapshot) -> (Self, Degeneracy) {
        let mut flags = Degeneracy::default();
        let micro_price = try_micro_price(cur).unwrap_or_else(|| {
            flags.micro_price = true;
            cur.mid_price()
        });
        let imbalance_top = ratio_or_zero(top_sizes(cur), &mut flags.imbalance_top);
        let imbalance_multi = ratio_or_zero(summed_sizes(cur, DEPTH), &mut flags.imbalance_multi);
        let (depth_bid, depth_ask) = depths(cur);
        let (vamp_value, vamp_degenerate) = vamp_flagged(cur);
        flags.vamp = vamp_degenerate;
        let (bpi_value, bpi_degenerate) = bpi_flagged(cur);
        flags.bpi = bpi_degenerate;

        let (ofi_value, delta_mid, delta_vamp) = match prev {
            Some(p) => {
                let o = try_ofi(p, cur).unwrap_or_else(|| {
                    flags.ofi = true;
                    0.0
                });
                let (d_mid, d_vamp) = deltas(p.mid_price(), vamp(p), cur.mid_price(), vamp_value);
                (o, d_mid, d_vamp)
            }
            None => {
                flags.ofi = true;
                flags.deltas = true;
                (0.0, 0.0, 0.0)
            }
        };

        let v = Self {
            micro_price,
            imbalance_top,
            imbalance_multi,
            spread_norm: spread_norm(cur),
            depth_bid,
            depth_ask,
            vamp: vamp_value,
            ofi: ofi_value,
            bpi: bpi_value,
            delta_mid,
            delta_vamp,
        };
        (v, flags)
    }

    pub fn to_array(&self) -> [f64; Self::LEN] {
        [
            self.micro_price,
            self.imbalance_top,
            self.imbalance_multi,
            self.spread_norm,
            self.depth_bid,
            self.depth_ask,
            self.vamp,
            self.ofi,
            self.bpi,
            self.delta_mid,
            self.delta_vamp,
        ]
    }
}

fn top_sizes(s: &Snapshot) -> (f64, f64) {
    (s.bids[0].size, s.asks[0].size)
}

fn summed_sizes(s: &Snapshot, n: usize) -> (f64, f64) {
    let b = s.bids[..n].iter().map(|l| l.size).sum();
    let a = s.asks[..n].iter().map(|l| l.size).sum();
    (b, a)
}

fn ratio_or_zero((bid, ask): (f64, f64), flag: &mut bool) -> f64 {
    let denom = bid + ask;
    if denom > 0.0 {
        ((bid - ask) / denom).clamp(-1.0, 1.0)
    } else {
        *flag = true;
        0.0
    }
}

fn try_micro_price(s: &Snapshot) -> Option<f64> {
    let (qb, qa) = top_sizes(s);
    let denom = qb + qa;
    (denom > 0.0).then(|| {
        let p = (s.best_ask() * qb + s.best_bid() * qa) / denom;
        p.clamp(s.best_bid(), s.best_ask())
    })
}

/// Size-weighted top-of-book price; the mid when both top sizes are zero.
pub fn micro_price(s: &Snapshot) -> f64 {
    try_micro_price(s).unwrap_or_else(|| s.mid_price())
}

pub fn imbalance_top(s: &Snapshot) -> f64 {
    ratio_or_zero(top_sizes(s), &mut false)
}

/// Imbalance over the first `n` levels per side, `1 <= n <= 20`.
pub fn imbalance_multi(s: &Snapshot, n: usize) -> f64 {
    assert!((1..=DEPTH).contains(&n), "level count {n} outside 1..={DEPTH}");
    ratio_or_zero(summed_sizes(s, n), &mut false)
}

/// Spread as a percentage of mid.
pub fn spread_norm(s: &Snapshot) -> f64 {
    (s.best_ask() - s.best_bid()) / s.mid_price() * 100.0
}

/// Notional resting on each side, `(bid, ask)`.
pub fn depths(s: &Snapshot) -> (f64, f64) {
    let side = |ladder: &[crate::store::BookLevel]| ladder.iter().map(|l| l.size * l.price).sum();
    (side(&s.bids), side(&s.asks))
}

fn side_weighted_mean(ladder: &[crate::store::BookLevel]) -> Option<f64> {
    let size: f64 = ladder.iter().map(|l| l.size).sum();
    (size > 0.0).then(|| ladder.iter().map(|l| l.size * l.price).sum::<f64>() / size)
}

fn vamp_flagged(s: &Snapshot) -> (f64, bool) {
    let bid = side_weighted_mean(&s.bids);
    let ask = side_weighted_mean(&s.asks);
    let degenerate = bid.is_none() || ask.is_none();
    let v = 0.5 * (bid.unwrap_or(s.best_bid()) + ask.unwrap_or(s.best_ask()));
    (v, degenerate)
}

/// Mean of the two per-side size-weighted average prices.
pub fn vamp(s: &Snapshot) -> f64 {
    vamp_flagged(s).0
}

fn try_ofi(prev: &Snapshot, cur: &Snapshot) -> Option<f64> {
    let d_bid = cur.bid_size_total() - prev.bid_size_total();
    let d_ask = cur.ask_size_total() - prev.ask_size_total();
    let denom = d_bid + d_ask;
    // Opposite-signed changes can push the raw ratio outside [-1, 1].
    (denom != 0.0 && denom.is_finite()).then(|| ((d_bid - d_ask) / denom).clamp(-1.0, 1.0))
}

/// Flow imbalance of the top-20 summed sizes between two snapshots.
pub fn ofi(prev: &Snapshot, cur: &Snapshot) -> f64 {
    try_ofi(prev, cur).unwrap_or(0.0)
}

fn bpi_flagged(s: &Snapshot) -> (f64, bool) {
    let mid = s.mid_price();
    let pressure = |ladder: &[crate::store::BookLevel]| -> f64 {
        ladder
            .iter()
            .filter(|l| l.size > 0.0)
            .map(|l| l.size / (l.price - mid).abs())
            // An empty f64 sum is -0.0, which would flip the sign of b / a.
            .fold(0.0, |acc, x| acc + x)
    };
    let (b, a) = (pressure(&s.bids), pressure(&s.asks));
    if b == 0.0 && a == 0.0 {
        return (1.0, true);
    }
    let raw = b / a;
    let degenerate = !(BPI_MIN..=BPI_MAX).contains(&raw);
    (if raw.is_nan() { 1.0 } else { raw.clamp(BPI_MIN, BPI_MAX) }, degenerate)
}

/// Distance-weighted bid pressure over ask pressure.
pub fn bpi(s: &Snapshot) -> f64 {
    bpi_flagged(s).0
}

/// First differences `(mid_cur - mid_prev, vamp_cur - vamp_prev)`.
pub fn deltas(prev_mid: f64, prev_vamp: f64, cur_mid: f64, cur_vamp: f64) -> (f64, f64) {
    (cur_mid - prev_mid, cur_vamp - prev_vamp)
}

/// Pearson correlations between indicator columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub values: [[f64; IndicatorVector::LEN]; IndicatorVector::LEN],
    /// Columns with zero variance; their off-diagonal entries are 0.
    pub zero_variance: [bool; IndicatorVector::LEN],
}

/// Single-pass (Welford co-moment) correlation matrix over a day of vectors.
pub fn correlation_matrix(series: &[IndicatorVector]) -> Option<CorrelationMatrix> {
    const K: usize = IndicatorVector::LEN;
    if series.len() < 2 {
        return None;
    }
    let mut mean = [0.0; K];
    let mut comoment = [[0.0; K]; K];
    for (n, v) in series.iter().enumerate() {
        let x = v.to_array();
        let n = (n + 1) as f64;
        let mut delta_old = [0.0; K];
        for j in 0..K {
            delta_old[j] = x[j] - mean[j];
            mean[j] += delta_old[j] / n;
        }
        for i in 0..K {
            let delta_new = x[i] - mean[i];
            for j in 0..K {
                comoment[i][j] += delta_old[j] * delta_new;
            }
        }
    }
    let mut zero_variance = [false; K];
    for i in 0..K {
        zero_variance[i] = comoment[i][i].is_nan() || comoment[i][i] <= 0.0;
    }
    let mut values = [[0.0; K]; K];
    for i in 0..K {
        for j in 0..K {
            values[i][j] = if i == j {
                1.0
            } else if zero_variance[i] || zero_variance[j] {
                0.0
            } else {
                // Symmetrise: the streaming co-moment is not bit-symmetric.
                let c = 0.5 * (comoment[i][j] + comoment[j][i]);
                (c / (comoment[i][i] * comoment[j][j]).sqrt()).clamp(-1.0, 1.0)
            };
        }
    }
    Some(CorrelationMatrix { values, zero_variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::BookLevel;

    fn book(bids: &[(f64, f64)], asks: &[(f64, f64)]) -> Snapshot {
        let fill = |levels: &[(f64, f64)]| {
            let raw: Vec<BookLevel> = levels.iter().map(|&(p, q)| BookLevel::new(p, q)).collect();
            crate::store::forward_fill_levels(&raw).unwrap()
        };
        Snapshot {
            timestamp_ns: 0,
            bids: fill(bids),
            asks: fill(asks),
        }
    }

    #[test]
    fn micro_price_examples() {
        assert_eq!(micro_price(&book(&[(100.0, 2.0)], &[(102.0, 2.0)])), 101.0);
        assert_eq!(micro_price(&book(&[(100.0, 3.0)], &[(102.0, 1.0)])), 101.5);
        let heavy = micro_price(&book(&[(100.0, 1e12)], &[(102.0, 1.0)]));
        assert!((heavy - 102.0).abs() < 1e-9);
        let (_, flags) = IndicatorVector::compute(None, &book(&[(100.0, 0.0)], &[(102.0, 0.0)]));
        assert!(flags.micro_price);
    }

    #[test]
    fn imbalance_examples() {
        assert_eq!(imbalance_top(&book(&[(100.0, 2.0)], &[(101.0, 2.0)])), 0.0);
        assert_eq!(imbalance_top(&book(&[(100.0, 3.0)], &[(101.0, 1.0)])), 0.5);
        assert_eq!(imbalance_top(&book(&[(100.0, 3.0)], &[(101.0, 0.0)])), 1.0);
        let s = book(&[(100.0, 3.0), (99.0, 5.0)], &[(101.0, 1.0), (102.0, 2.0)]);
        assert_eq!(imbalance_multi(&s, 1), imbalance_top(&s));
        assert_eq!(imbalance_multi(&s, 2), (8.0 - 3.0) / 11.0);
    }

    #[test]
    fn spread_and_depth_examples() {
        assert!((spread_norm(&book(&[(99.5, 1.0)], &[(100.5, 1.0)])) - 1.0).abs() < 1e-15);
        let s = book(&[(100.0, 2.0)], &[(101.0, 1.0)]);
        assert_eq!(depths(&s), (200.0, 101.0));
    }

    #[test]
    fn vamp_examples() {
        assert_eq!(vamp(&book(&[(100.0, 1.0)], &[(102.0, 5.0)])), 101.0);
        let s = book(&[(100.0, 1.0), (98.0, 1.0)], &[(102.0, 1.0), (104.0, 1.0)]);
        assert_eq!(vamp(&s), 101.0);
    }

    #[test]
    fn ofi_examples() {
        let a = book(&[(100.0, 1.0)], &[(101.0, 1.0)]);
        assert_eq!(ofi(&a, &a), 0.0);
        let b = book(&[(100.0, 3.0)], &[(101.0, 1.0)]);
        assert_eq!(ofi(&a, &b), 1.0);
        let c = book(&[(100.0, 2.0)], &[(101.0, 4.0)]);
        // dQb = 1, dQa = 3: (1-3)/4
        assert_eq!(ofi(&a, &c), -0.5);
        let (_, flags) = IndicatorVector::compute(Some(&a), &a);
        assert!(flags.ofi && !flags.deltas);
    }

    #[test]
    fn bpi_examples() {
        let sym = book(&[(100.0, 2.0), (99.0, 1.0)], &[(101.0, 2.0), (102.0, 1.0)]);
        assert!((bpi(&sym) - 1.0).abs() < 1e-15);
        let dbl = book(&[(100.0, 4.0), (99.0, 2.0)], &[(101.0, 2.0), (102.0, 1.0)]);
        assert!((bpi(&dbl) - 2.0).abs() < 1e-12);
        let no_ask = book(&[(100.0, 4.0)], &[(101.0, 0.0)]);
        assert_eq!(bpi(&no_ask), BPI_MAX);
    }

    #[test]
    fn first_snapshot_zeroes_deltas() {
        let s = book(&[(100.0, 1.0)], &[(101.0, 1.0)]);
        let (v, flags) = IndicatorVector::compute(None, &s);
        assert_eq!((v.delta_mid, v.delta_vamp, v.ofi), (0.0, 0.0, 0.0));
        assert!(flags.deltas);
        let up = book(&[(100.5, 1.0)], &[(101.5, 1.0)]);
        let (v, _) = IndicatorVector::compute(Some(&s), &up);
        assert_eq!(v.delta_mid, 0.5);
    }

    #[test]
    fn correlation_diagonal_and_negation() {
        let series: Vec<IndicatorVector> = (0..50)
            .map(|i| {
                let x = (i as f64 * 0.37).sin();
                IndicatorVector {
                    micro_price: x,
                    imbalance_top: -x,
                    imbalance_multi: x * x,
                    spread_norm: 1.0,
                    ..Default::default()
                }
            })
            .collect();
        let m = correlation_matrix(&series).unwrap();
        assert_eq!(m.values[0][0], 1.0);
        assert!((m.values[0][1] + 1.0).abs() < 1e-12);
        assert!(m.zero_variance[3]);
        assert_eq!(m.values[3][0], 0.0);
        assert_eq!(m.values[3][3], 1.0);
        assert!(correlation_matrix(&series[..1]).is_none());
    }
}
