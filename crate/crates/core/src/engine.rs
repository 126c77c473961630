//! Market-sell settlement against a displayed bid ladder.
//!
//! Prices seen by an order are the displayed prices plus the current impact
//! displacement (always `<= 0` for a sell program). The order's own
//! footprint `k * (filled / liquidity)^beta * mid` is added to the
//! displacement at execution, so the child that creates the footprint trades
//! at the shifted level too. Between executions the displacement decays
//! exponentially with the configured half-life.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::Snapshot;

/// Floor for the liquidity reference, in base units.
pub const LIQUIDITY_FLOOR: f64 = 1e-9;
const NS_PER_S: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeeSchedule {
    /// Fraction of notional charged to aggressive orders.
    pub taker_fee: f64,
    /// Fraction of notional credited to passive orders. Market sells never
    /// earn it; kept so fee tiers round-trip through configuration.
    pub maker_rebate: f64,
}

impl Default for FeeSchedule {
    fn default() -> Self {
        Self {
            taker_fee: 0.001,
            maker_rebate: 0.0,
        }
    }
}

impl FeeSchedule {
    pub const ZERO: FeeSchedule = FeeSchedule {
        taker_fee: 0.0,
        maker_rebate: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("taker_fee", self.taker_fee), ("maker_rebate", self.maker_rebate)] {
            if !(0.0..=0.05).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 0.05]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactParams {
    /// Impact coefficient `k`, dimensionless.
    pub coeff: f64,
    /// Concavity of impact in traded size, in `(0, 1]`.
    pub size_exponent: f64,
    pub half_life_s: f64,
}

impl Default for ImpactParams {
    fn default() -> Self {
        Self {
            coeff: 0.3,
            size_exponent: 0.5,
            half_life_s: 60.0,
        }
    }
}

impl ImpactParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.coeff.is_finite() && self.coeff >= 0.0) {
            return Err(Error::Config(format!("impact coeff {} must be >= 0", self.coeff)));
        }
        if !(self.size_exponent > 0.0 && self.size_exponent <= 1.0) {
            return Err(Error::Config(format!(
                "impact size_exponent {} outside (0, 1]",
                self.size_exponent
            )));
        }
        if !(self.half_life_s.is_finite() && self.half_life_s > 0.0) {
            return Err(Error::Config(format!(
                "impact half_life_s {} must be > 0",
                self.half_life_s
            )));
        }
        Ok(())
    }

    /// Scales `k` and the half-life, as used by the sensitivity sweep.
    pub fn scaled(&self, coeff_factor: f64, half_life_factor: f64) -> Self {
        Self {
            coeff: self.coeff * coeff_factor,
            half_life_s: self.half_life_s * half_life_factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImpactState {
    /// Signed price shift in quote currency; `<= 0` while selling.
    pub displacement: f64,
    pub last_update_ns: u64,
}

impl ImpactState {
    pub fn at(timestamp_ns: u64) -> Self {
        Self {
            displacement: 0.0,
            last_update_ns: timestamp_ns,
        }
    }
}

/// Exponential resilience: `displacement * 2^(-dt / half_life)`.
pub fn decay_impact(state: ImpactState, params: &ImpactParams, now_ns: u64) -> ImpactState {
    debug_assert!(now_ns >= state.last_update_ns, "impact decayed backwards in time");
    let dt_s = now_ns.saturating_sub(state.last_update_ns) as f64 / NS_PER_S;
    ImpactState {
        displacement: state.displacement * (-dt_s / params.half_life_s).exp2(),
        last_update_ns: now_ns.max(state.last_update_ns),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Fill {
    pub requested_qty: f64,
    pub filled_qty: f64,
    /// Volume-weighted execution price before fees, after impact. Zero when
    /// nothing filled.
    pub avg_price: f64,
    /// Gross proceeds `sum(level_qty * effective_price)`.
    pub proceeds: f64,
    pub fee_paid: f64,
    pub levels_consumed: usize,
}

impl Fill {
    pub fn empty(requested_qty: f64) -> Self {
        Self {
            requested_qty,
            ..Default::default()
        }
    }

    pub fn net_proceeds(&self) -> f64 {
        self.proceeds - self.fee_paid
    }
}

/// Sells `qty` into the bid side of `book`.
///
/// `state` must already be decayed to the book timestamp and
/// `liquidity_ref` is the top-20 bid size of the same snapshot. Any
/// unfilled remainder is dropped.
pub fn execute_market_sell(
    book: &Snapshot,
    qty: f64,
    state: ImpactState,
    params: &ImpactParams,
    fees: &FeeSchedule,
    liquidity_ref: f64,
) -> Result<(Fill, ImpactState)> {
    if !qty.is_finite() || qty < 0.0 {
        return Err(Error::Order(format!("sell quantity {qty} must be finite and >= 0")));
    }
    if qty == 0.0 {
        return Ok((Fill::empty(0.0), state));
    }

    // Which levels get hit does not depend on the (uniform) price shift, so
    // walk sizes first and price the fill afterwards.
    let mut remaining = qty;
    let mut takes = [0.0; crate::DEPTH];
    let mut levels_consumed = 0;
    for (take, level) in takes.iter_mut().zip(book.bids.iter()) {
        if remaining == 0.0 {
            break;
        }
        if level.size <= 0.0 {
            continue;
        }
        *take = remaining.min(level.size);
        remaining -= *take;
        levels_consumed += 1;
    }
    let filled_qty = if remaining == 0.0 {
        qty
    } else {
        takes.iter().sum::<f64>().min(qty)
    };

    let mid = book.mid_price();
    let footprint = if filled_qty > 0.0 {
        params.coeff * (filled_qty / liquidity_ref.max(LIQUIDITY_FLOOR)).powf(params.size_exponent) * mid
    } else {
        0.0
    };
    let displacement = (state.displacement - footprint).max(-0.5 * mid);

    let proceeds: f64 = takes
        .iter()
        .zip(book.bids.iter())
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, level)| t * (level.price + displacement).max(0.0))
        .sum();
    let avg_price = if filled_qty > 0.0 { proceeds / filled_qty } else { 0.0 };
    let fill = Fill {
        requested_qty: qty,
        filled_qty,
        avg_price,
        proceeds,
        fee_paid: fees.taker_fee * proceeds,
        levels_consumed,
    };
    let next = ImpactState {
        displacement,
        last_update_ns: book.timestamp_ns.max(state.last_update_ns),
    };
    Ok((fill, next))
}

/// Snapshot index at which a decision taken at `decision_index` settles,
/// or `None` when it falls outside the window ending at `window_end`
/// (exclusive).
pub fn apply_latency(decision_index: usize, window_end: usize) -> Option<usize> {
    let next = decision_index + 1;
    (next < window_end).then_some(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState {
    pub cash: f64,
    pub inventory: f64,
}

impl PortfolioState {
    pub fn new(inventory: f64) -> Self {
        Self { cash: 0.0, inventory }
    }

    pub fn apply_fill(&mut self, fill: &Fill) {
        self.cash += fill.net_proceeds();
        self.inventory = (self.inventory - fill.filled_qty).max(0.0);
    }
}

/// `cash + inventory * mid`, on the displayed (unshifted) mid.
pub fn mark_to_market(book: &Snapshot, portfolio: &PortfolioState) -> f64 {
    portfolio.cash + portfolio.inventory * book.mid_price()
}

/// Fee and impact parameters shared by every method in a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineParams {
    pub fees: FeeSchedule,
    pub impact: ImpactParams,
}

impl EngineParams {
    pub fn validate(&self) -> Result<()> {
        self.fees.validate()?;
        self.impact.validate()
    }

    pub fn frictionless() -> Self {
        Self {
            fees: FeeSchedule::ZERO,
            impact: ImpactParams {
                coeff: 0.0,
                ..ImpactParams::default()
            },
        }
    }
}

/// Impact state plus parameters for one episode.
#[derive(Debug, Clone)]
pub struct ExecutionEngine {
    params: EngineParams,
    impact: ImpactState,
}

impl ExecutionEngine {
    pub fn new(params: EngineParams, start_ns: u64) -> Self {
        Self {
            params,
            impact: ImpactState::at(start_ns),
        }
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    pub fn impact(&self) -> ImpactState {
        self.impact
    }

    /// Decays impact to the book time, then sells.
    pub fn sell(&mut self, book: &Snapshot, qty: f64) -> Result<Fill> {
        let decayed = decay_impact(self.impact, &self.params.impact, book.timestamp_ns);
        let (fill, next) = execute_market_sell(
            book,
            qty,
            decayed,
            &self.params.impact,
            &self.params.fees,
            book.bid_size_total(),
        )?;
        self.impact = next;
        Ok(fill)
    }
}
