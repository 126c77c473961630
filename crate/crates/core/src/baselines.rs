//! Schedule baselines: TWAP and a VWAP-like allocation proportional to the
//! displayed bid depth. Both run through [`LiquidationEnv`] exactly like a
//! policy, so they share timestamps, latency, fees and impact.

use std::ops::Range;

use crate::env::{EpisodeOutcome, LiquidationEnv};
use crate::error::{Error, Result};
use crate::policy::{run_episode, ScheduleActor};
use crate::store::DayBook;
use crate::DEPTH;

/// Per-step sell quantities in base units.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    quantities: Vec<f64>,
    /// Set when the VWAP-like weights were all zero and a uniform split was
    /// used instead.
    pub uniform_fallback: bool,
}

impl Schedule {
    pub fn new(quantities: Vec<f64>) -> Result<Self> {
        if quantities.iter().any(|q| !q.is_finite() || *q < 0.0) {
            return Err(Error::Config("schedule quantities must be finite and >= 0".into()));
        }
        Ok(Self {
            quantities,
            uniform_fallback: false,
        })
    }

    pub fn quantities(&self) -> &[f64] {
        &self.quantities
    }

    pub fn len(&self) -> usize {
        self.quantities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantities.is_empty()
    }

    /// Compensated (Neumaier) sum of the quantities.
    pub fn total(&self) -> f64 {
        neumaier_sum(&self.quantities)
    }
}

pub fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Equal slices `q_t = Q / N`.
pub fn twap_schedule(total_qty: f64, steps: usize) -> Result<Schedule> {
    if steps == 0 {
        return Err(Error::Config("TWAP needs at least one step".into()));
    }
    if !(total_qty.is_finite() && total_qty >= 0.0) {
        return Err(Error::Config(format!("TWAP quantity {total_qty} must be >= 0")));
    }
    Schedule::new(vec![total_qty / steps as f64; steps])
}

/// Allocation proportional to the top-`levels` bid size at each decision
/// snapshot in `window`. Weights are read from the displayed book only; a
/// snapshot without usable sizes falls back to bid notional over mid.
pub fn vwap_like_schedule(day: &DayBook, window: Range<usize>, total_qty: f64, levels: usize) -> Result<Schedule> {
    if window.is_empty() || window.end > day.len() {
        return Err(Error::Config(format!(
            "VWAP window {window:?} invalid for a day of {} snapshots",
            day.len()
        )));
    }
    if !(1..=DEPTH).contains(&levels) {
        return Err(Error::Config(format!("VWAP level count {levels} outside 1..={DEPTH}")));
    }
    if !(total_qty.is_finite() && total_qty >= 0.0) {
        return Err(Error::Config(format!("VWAP quantity {total_qty} must be >= 0")));
    }
    let weights: Vec<f64> = day.snapshots()[window]
        .iter()
        .map(|s| {
            let size: f64 = s.bids[..levels].iter().map(|l| l.size).sum();
            if size.is_finite() && size > 0.0 {
                size
            } else {
                let notional: f64 = s.bids[..levels].iter().map(|l| l.size * l.price).sum();
                let w = notional / s.mid_price();
                if w.is_finite() {
                    w.max(0.0)
                } else {
                    0.0
                }
            }
        })
        .collect();
    let total_weight = neumaier_sum(&weights);
    if total_weight <= 0.0 || !total_weight.is_finite() {
        let mut schedule = twap_schedule(total_qty, weights.len())?;
        schedule.uniform_fallback = true;
        return Ok(schedule);
    }
    Schedule::new(weights.iter().map(|w| total_qty * w / total_weight).collect())
}

/// Runs a schedule through an environment that has not been stepped yet.
pub fn run_schedule(schedule: &Schedule, env: &mut LiquidationEnv<'_>) -> Result<EpisodeOutcome> {
    if schedule.len() != env.total_steps() {
        return Err(Error::Config(format!(
            "schedule has {} steps, episode has {}",
            schedule.len(),
            env.total_steps()
        )));
    }
    let mut actor = ScheduleActor::new(schedule.clone());
    run_episode(env, &mut actor, None)
}
