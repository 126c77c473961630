//! Fixed-horizon, sell-only liquidation episode over one day of snapshots.
//!
//! An episode covers the snapshots whose timestamps fall in
//! `[t_start, t_start + horizon)`. A decision taken at snapshot `i` settles
//! against snapshot `i + 1`, so a window of `L` snapshots gives `L - 1`
//! decisions and the episode is done once the last window snapshot is
//! reached. Residual inventory is marked to the mid of that snapshot.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::engine::{apply_latency, mark_to_market, EngineParams, ExecutionEngine, Fill, PortfolioState};
use crate::error::{Error, Result};
use crate::indicators::{Degeneracy, IndicatorVector};
use crate::store::{DayBook, Snapshot};
use crate::DEPTH;

const NS_PER_S: u64 = 1_000_000_000;

/// Observation entries, in order:
///
/// | range    | content                       |
/// |----------|-------------------------------|
/// | 0..20    | bid prices / mid, best first  |
/// | 20..40   | bid sizes (base units)        |
/// | 40..60   | ask prices / mid, best first  |
/// | 60..80   | ask sizes (base units)        |
/// | 80..91   | indicators, `INDICATOR_NAMES` |
/// | 91       | remaining-time fraction       |
/// | 92       | remaining-inventory fraction  |
pub const OBS_LEN: usize = 4 * DEPTH + IndicatorVector::LEN + 2;
pub const OBS_INDICATORS: usize = 4 * DEPTH;
pub const OBS_TIME_TO_GO: usize = OBS_INDICATORS + IndicatorVector::LEN;
pub const OBS_INVENTORY: usize = OBS_TIME_TO_GO + 1;
/// Offset of `delta_mid` inside the observation.
pub const OBS_DELTA_MID: usize = OBS_INDICATORS + 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_LEN]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn time_to_go_fraction(&self) -> f64 {
        self.0[OBS_TIME_TO_GO]
    }

    pub fn inventory_fraction(&self) -> f64 {
        self.0[OBS_INVENTORY]
    }

    pub fn delta_mid(&self) -> f64 {
        self.0[OBS_DELTA_MID]
    }

    pub fn indicators(&self) -> &[f64] {
        &self.0[OBS_INDICATORS..OBS_TIME_TO_GO]
    }

    pub fn build(snapshot: &Snapshot, indicators: &IndicatorVector, time_to_go: f64, inventory: f64) -> Self {
        let mid = snapshot.mid_price();
        let mut x = [0.0; OBS_LEN];
        for i in 0..DEPTH {
            x[i] = snapshot.bids[i].price / mid;
            x[DEPTH + i] = snapshot.bids[i].size;
            x[2 * DEPTH + i] = snapshot.asks[i].price / mid;
            x[3 * DEPTH + i] = snapshot.asks[i].size;
        }
        x[OBS_INDICATORS..OBS_TIME_TO_GO].copy_from_slice(&indicators.to_array());
        x[OBS_TIME_TO_GO] = time_to_go.clamp(0.0, 1.0);
        x[OBS_INVENTORY] = inventory.clamp(0.0, 1.0);
        Observation(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub start_index: usize,
    pub horizon_s: u64,
    pub initial_btc: f64,
    /// Fraction of the initial inventory allowed to remain at the deadline.
    pub target_fraction: f64,
    /// Cap on the fraction of remaining inventory sold per step.
    pub trade_fraction: f64,
    /// Only sell-only episodes exist; `false` is rejected.
    pub sell_only: bool,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            start_index: 0,
            horizon_s: 3600,
            initial_btc: 1.0,
            target_fraction: 0.0,
            trade_fraction: 0.1,
            sell_only: true,
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_s == 0 {
            return Err(Error::Config("horizon_s must be positive".into()));
        }
        if !(self.initial_btc.is_finite() && self.initial_btc > 0.0) {
            return Err(Error::Config(format!("initial_btc {} must be > 0", self.initial_btc)));
        }
        if !(0.0..=1.0).contains(&self.target_fraction) {
            return Err(Error::Config(format!(
                "target_fraction {} outside [0, 1]",
                self.target_fraction
            )));
        }
        if !(self.trade_fraction > 0.0 && self.trade_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "trade_fraction {} outside (0, 1]",
                self.trade_fraction
            )));
        }
        if !self.sell_only {
            return Err(Error::Config("only sell-only episodes are supported".into()));
        }
        Ok(())
    }

    /// Base-unit quantity the schedules must liquidate.
    pub fn liquidation_target(&self) -> f64 {
        (1.0 - self.target_fraction) * self.initial_btc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    /// Terminal penalty per unit of residual fraction above target.
    pub inventory_penalty: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            inventory_penalty: 0.01,
        }
    }
}

/// Snapshot indices covered by an episode starting at `start_index`.
pub fn episode_window(day: &DayBook, start_index: usize, horizon_s: u64) -> Result<Range<usize>> {
    let fits = usize::try_from(horizon_s)
        .ok()
        .and_then(|h| start_index.checked_add(h))
        .is_some_and(|end| end <= day.len());
    if !fits {
        return Err(Error::Episode(format!(
            "window start {start_index} + {horizon_s} s does not fit in {} ({} snapshots)",
            day.date(),
            day.len()
        )));
    }
    let t_end = day.snapshots()[start_index].timestamp_ns + horizon_s * NS_PER_S;
    let end = day.snapshots().partition_point(|s| s.timestamp_ns < t_end);
    if end - start_index < 2 {
        return Err(Error::Episode(format!(
            "window at {start_index} holds fewer than two snapshots"
        )));
    }
    Ok(start_index..end)
}

/// Per-step reward, normalised by the arrival notional. `terminal` carries
/// the last window snapshot when the step ends the episode.
pub fn compute_reward(
    fill: &Fill,
    arrival_mid: f64,
    portfolio: &PortfolioState,
    terminal: Option<&Snapshot>,
    cfg: &EpisodeConfig,
    reward_params: &RewardParams,
) -> f64 {
    let notional = cfg.initial_btc * arrival_mid;
    let mut reward = (fill.net_proceeds() - fill.filled_qty * arrival_mid) / notional;
    if let Some(last) = terminal {
        let residual = portfolio.inventory;
        let residual_value = mark_to_market(last, &PortfolioState::new(residual));
        reward += (residual_value - residual * arrival_mid) / notional;
        let residual_fraction = residual / cfg.initial_btc;
        reward -= reward_params.inventory_penalty * (residual_fraction - cfg.target_fraction).max(0.0);
    }
    reward
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StepInfo {
    pub fill: Fill,
    /// Snapshot the order settled against.
    pub executed_index: usize,
    pub degeneracy: Degeneracy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub fill: Fill,
    pub executed_index: usize,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// End-of-episode summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeOutcome {
    pub pnl_percent: f64,
    pub cum_reward: f64,
    pub fills: usize,
    pub residual_fraction: f64,
    pub steps: usize,
    pub degeneracies: u64,
    pub final_wealth: f64,
}

#[derive(Debug, Clone)]
pub struct LiquidationEnv<'a> {
    day: &'a DayBook,
    cfg: EpisodeConfig,
    engine_params: EngineParams,
    reward_params: RewardParams,
    window: Range<usize>,
    engine: ExecutionEngine,
    cursor: usize,
    portfolio: PortfolioState,
    arrival_mid: f64,
    done: bool,
    cum_reward: f64,
    fills: usize,
    steps: usize,
    degeneracies: u64,
}

impl<'a> LiquidationEnv<'a> {
    /// Validates the configuration and positions the episode at its start.
    pub fn new(
        day: &'a DayBook,
        cfg: EpisodeConfig,
        engine_params: EngineParams,
        reward_params: RewardParams,
    ) -> Result<Self> {
        cfg.validate()?;
        engine_params.validate()?;
        if !reward_params.inventory_penalty.is_finite() || reward_params.inventory_penalty < 0.0 {
            return Err(Error::Config("inventory_penalty must be finite and >= 0".into()));
        }
        let window = episode_window(day, cfg.start_index, cfg.horizon_s)?;
        let start = &day.snapshots()[window.start];
        Ok(Self {
            day,
            cfg,
            engine_params,
            reward_params,
            engine: ExecutionEngine::new(engine_params, start.timestamp_ns),
            cursor: window.start,
            portfolio: PortfolioState::new(cfg.initial_btc),
            arrival_mid: start.mid_price(),
            window,
            done: false,
            cum_reward: 0.0,
            fills: 0,
            steps: 0,
            degeneracies: 0,
        })
    }

    /// Restores the initial state and returns the first observation.
    pub fn reset(&mut self) -> Observation {
        let start = &self.day.snapshots()[self.window.start];
        self.engine = ExecutionEngine::new(self.engine_params, start.timestamp_ns);
        self.cursor = self.window.start;
        self.portfolio = PortfolioState::new(self.cfg.initial_btc);
        self.arrival_mid = start.mid_price();
        self.done = false;
        self.cum_reward = 0.0;
        self.fills = 0;
        self.steps = 0;
        self.degeneracies = 0;
        self.observe().0
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn window(&self) -> Range<usize> {
        self.window.clone()
    }

    /// Number of decisions in the episode.
    pub fn total_steps(&self) -> usize {
        self.window.len() - 1
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn current_snapshot(&self) -> &'a Snapshot {
        &self.day.snapshots()[self.cursor]
    }

    pub fn portfolio(&self) -> PortfolioState {
        self.portfolio
    }

    pub fn arrival_mid(&self) -> f64 {
        self.arrival_mid
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn cum_reward(&self) -> f64 {
        self.cum_reward
    }

    /// Observation at the current snapshot; counts degenerate indicators.
    pub fn observe(&mut self) -> (Observation, Degeneracy) {
        let snaps = self.day.snapshots();
        let prev = (self.cursor > self.window.start).then(|| &snaps[self.cursor - 1]);
        let cur = &snaps[self.cursor];
        let (ind, flags) = IndicatorVector::compute(prev, cur);
        self.degeneracies += u64::from(flags.count());
        let total = self.total_steps() as f64;
        let remaining = (self.window.end - 1 - self.cursor) as f64;
        let obs = Observation::build(
            cur,
            &ind,
            remaining / total,
            self.portfolio.inventory / self.cfg.initial_btc,
        );
        (obs, flags)
    }

    /// Clips `action` to `[0, trade_fraction]` of remaining inventory and
    /// steps.
    pub fn step(&mut self, action: f64) -> Result<StepResult> {
        let qty = self.action_quantity(action)?;
        self.step_quantity(qty)
    }

    /// Sell quantity an action maps to in the current state.
    pub fn action_quantity(&self, action: f64) -> Result<f64> {
        if !action.is_finite() {
            return Err(Error::Order(format!("action {action} is not finite")));
        }
        Ok(action.clamp(0.0, self.cfg.trade_fraction) * self.portfolio.inventory)
    }

    /// Submits an absolute sell quantity (capped at inventory) and steps.
    pub fn step_quantity(&mut self, qty: f64) -> Result<StepResult> {
        let t = self.execute(qty)?;
        let (observation, degeneracy) = self.observe();
        Ok(StepResult {
            observation,
            reward: t.reward,
            done: t.done,
            info: StepInfo {
                fill: t.fill,
                executed_index: t.executed_index,
                degeneracy,
            },
        })
    }

    /// Settles `qty` one snapshot later and advances time, without building
    /// an observation.
    pub fn execute(&mut self, qty: f64) -> Result<Transition> {
        if self.done {
            return Err(Error::Episode("step after episode end".into()));
        }
        if !qty.is_finite() || qty < 0.0 {
            return Err(Error::Order(format!("sell quantity {qty} must be finite and >= 0")));
        }
        let Some(exec) = apply_latency(self.cursor, self.window.end) else {
            return Err(Error::Episode("no snapshot left to settle against".into()));
        };
        let qty = qty.min(self.portfolio.inventory);
        let book = &self.day.snapshots()[exec];
        let fill = self.engine.sell(book, qty)?;
        self.portfolio.apply_fill(&fill);
        if fill.filled_qty > 0.0 {
            self.fills += 1;
        }
        self.cursor = exec;
        self.steps += 1;
        self.done = exec == self.window.end - 1;
        let reward = compute_reward(
            &fill,
            self.arrival_mid,
            &self.portfolio,
            self.done.then_some(book),
            &self.cfg,
            &self.reward_params,
        );
        self.cum_reward += reward;
        Ok(Transition {
            fill,
            executed_index: exec,
            reward,
            done: self.done,
        })
    }

    /// Summary of a finished episode.
    pub fn outcome(&self) -> Result<EpisodeOutcome> {
        if !self.done {
            return Err(Error::Episode("episode still running".into()));
        }
        let last = &self.day.snapshots()[self.window.end - 1];
        let wealth = mark_to_market(last, &self.portfolio);
        Ok(EpisodeOutcome {
            pnl_percent: crate::eval::pnl_percent(wealth, self.cfg.initial_btc, self.arrival_mid),
            cum_reward: self.cum_reward,
            fills: self.fills,
            residual_fraction: self.portfolio.inventory / self.cfg.initial_btc,
            steps: self.steps,
            degeneracies: self.degeneracies,
            final_wealth: wealth,
        })
    }
}
