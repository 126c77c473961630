//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use lobsim::store::{BookLevel, Snapshot};
use lobsim::DEPTH;
use rand::Rng;

/// Fill of a market sell by walking the bid levels one at a time, with no
/// impact and no fees: `(filled, avg_price)`.
pub fn walk_bids(bids: &[(f64, f64)], qty: f64) -> (f64, f64) {
    let mut left = qty;
    let mut filled = 0.0;
    let mut notional = 0.0;
    for &(price, size) in bids {
        if left <= 0.0 {
            break;
        }
        if size <= 0.0 {
            continue;
        }
        let take = if size < left { size } else { left };
        filled += take;
        notional += take * price;
        left -= take;
    }
    if filled == 0.0 {
        (0.0, 0.0)
    } else {
        (filled, notional / filled)
    }
}

/// Upper-tail Wilcoxon p by listing every sign assignment; ties get
/// average ranks computed by counting, zeros are dropped.
pub fn wilcoxon_enumeration(x: &[f64]) -> f64 {
    wilcoxon_enumeration_tails(x).0
}

/// `(P(W >= w), P(W = w))` under the sign-flip null, by enumeration.
pub fn wilcoxon_enumeration_tails(x: &[f64]) -> (f64, f64) {
    let nz: Vec<f64> = x.iter().copied().filter(|v| *v != 0.0).collect();
    let n = nz.len();
    let abs: Vec<f64> = nz.iter().map(|v| v.abs()).collect();
    // Doubled average ranks keep the comparison in integers.
    let rank2: Vec<i64> = abs
        .iter()
        .map(|a| {
            let less = abs.iter().filter(|b| *b < a).count() as i64;
            let eq = abs.iter().filter(|b| *b == a).count() as i64;
            2 * less + eq + 1
        })
        .collect();
    let observed: i64 = (0..n).filter(|&i| nz[i] > 0.0).map(|i| rank2[i]).sum();
    let (mut above, mut equal) = (0u64, 0u64);
    for mask in 0u64..(1u64 << n) {
        let w: i64 = (0..n).filter(|i| (mask >> i) & 1 == 1).map(|i| rank2[i]).sum();
        above += u64::from(w >= observed);
        equal += u64::from(w == observed);
    }
    let all = (1u64 << n) as f64;
    (above as f64 / all, equal as f64 / all)
}

/// Benjamini-Hochberg straight from the definition: for each p, the minimum
/// over every p' >= p of `p' * (m / #{q <= p'})`, capped at 1.
pub fn bh_brute_force(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    p.iter()
        .map(|&pi| {
            let mut best = 1.0f64;
            for &pj in p {
                if pj >= pi {
                    let rank = p.iter().filter(|&&q| q <= pj).count();
                    best = best.min(pj * (m as f64 / rank as f64));
                }
            }
            best
        })
        .collect()
}

/// Random valid depth-20 book around `mid` with integer-tick spacing.
pub fn random_book<R: Rng>(rng: &mut R, mid: f64) -> Snapshot {
    let tick = rng.random_range(0.01..1.0);
    let half = tick * rng.random_range(1..4) as f64 / 2.0;
    let mut bids = [BookLevel::default(); DEPTH];
    let mut asks = [BookLevel::default(); DEPTH];
    for i in 0..DEPTH {
        let gap = half + i as f64 * tick;
        let bid_size = if rng.random_bool(0.1) {
            0.0
        } else {
            rng.random_range(0.001..10.0)
        };
        bids[i] = BookLevel::new(mid - gap, bid_size);
        asks[i] = BookLevel::new(mid + gap, rng.random_range(0.001..10.0));
    }
    if bids[0].size == 0.0 {
        bids[0].size = 0.5;
    }
    Snapshot {
        timestamp_ns: 0,
        bids,
        asks,
    }
}

pub fn bid_pairs(s: &Snapshot) -> Vec<(f64, f64)> {
    s.bids.iter().map(|l| (l.price, l.size)).collect()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
