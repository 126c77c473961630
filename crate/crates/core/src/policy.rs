//! Decision makers that drive a [`LiquidationEnv`], and the episode loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{twap_schedule, vwap_like_schedule, Schedule};
use crate::env::{EpisodeOutcome, LiquidationEnv, Observation};
use crate::error::{Error, Result};
use crate::eval::EpisodeSetup;
use crate::normalize::NormalizerStats;
use crate::store::DayBook;

/// What an actor asks the environment to do this step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    /// Policy action, clipped to `[0, trade_fraction]` of remaining inventory.
    Action(f64),
    /// Absolute quantity in base units, capped at inventory.
    Quantity(f64),
}

pub struct StepContext<'o> {
    /// Raw observation; `None` for actors that do not observe.
    pub observation: Option<&'o Observation>,
    /// Observation after the frozen normaliser, when one is configured.
    pub normalized: Option<&'o Observation>,
    pub step: usize,
    pub total_steps: usize,
}

pub trait Actor {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Order>;

    /// Actors that never look at observations let the loop skip building them.
    fn observes(&self) -> bool {
        true
    }
}

/// Runs `env` from reset to the horizon. Observations are passed through
/// `normalizer` in read-only mode when given.
pub fn run_episode(
    env: &mut LiquidationEnv<'_>,
    actor: &mut dyn Actor,
    normalizer: Option<&NormalizerStats>,
) -> Result<EpisodeOutcome> {
    let observes = actor.observes();
    let mut obs = env.reset();
    let total_steps = env.total_steps();
    while !env.is_done() {
        let normalized = match (observes, normalizer) {
            (true, Some(stats)) => Some(stats.transform_observation(&obs)),
            _ => None,
        };
        let ctx = StepContext {
            observation: observes.then_some(&obs),
            normalized: normalized.as_ref(),
            step: env.steps_taken(),
            total_steps,
        };
        let qty = match actor.act(&ctx)? {
            Order::Action(a) => env.action_quantity(a)?,
            Order::Quantity(q) => q,
        };
        if observes {
            obs = env.step_quantity(qty)?.observation;
        } else {
            env.execute(qty)?;
        }
    }
    env.outcome()
}

/// Follows a precomputed schedule.
#[derive(Debug, Clone)]
pub struct ScheduleActor {
    schedule: Schedule,
}

impl ScheduleActor {
    pub fn new(schedule: Schedule) -> Self {
        Self { schedule }
    }
}

impl Actor for ScheduleActor {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Order> {
        self.schedule
            .quantities()
            .get(ctx.step)
            .map(|&q| Order::Quantity(q))
            .ok_or_else(|| Error::Episode(format!("schedule exhausted at step {}", ctx.step)))
    }

    fn observes(&self) -> bool {
        false
    }
}

/// Uniform actions on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Actor for RandomPolicy {
    fn act(&mut self, _ctx: &StepContext<'_>) -> Result<Order> {
        Ok(Order::Action(self.rng.random_range(-1.0..=1.0)))
    }

    fn observes(&self) -> bool {
        false
    }
}

/// Threshold rule used as a known-good policy in end-to-end checks: sell
/// `fast` times the even pace on the remaining inventory after an up-tick of
/// the mid, `slow` times otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OraclePolicy {
    pub fast: f64,
    pub slow: f64,
    /// Minimum `delta_mid` (quote currency) that counts as an up-tick.
    pub threshold: f64,
}

impl Default for OraclePolicy {
    fn default() -> Self {
        Self {
            fast: 2.0,
            slow: 0.25,
            threshold: 0.0,
        }
    }
}

impl Actor for OraclePolicy {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Order> {
        let obs = ctx
            .observation
            .ok_or_else(|| Error::Episode("oracle policy needs observations".into()))?;
        let remaining = ctx.total_steps.saturating_sub(ctx.step).max(1) as f64;
        let pace = 1.0 / remaining;
        let mult = if obs.delta_mid() > self.threshold {
            self.fast
        } else {
            self.slow
        };
        Ok(Order::Action(mult * pace))
    }
}

/// Where the evaluated ("RL") method gets its decisions from.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Twap,
    Vwap,
    Random,
    Oracle(OraclePolicy),
    /// External process speaking the bridge protocol on stdin/stdout.
    External {
        command: Vec<String>,
    },
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Twap => "twap",
            PolicySpec::Vwap => "vwap",
            PolicySpec::Random => "random",
            PolicySpec::Oracle(_) => "oracle",
            PolicySpec::External { .. } => "bridge",
        }
    }

    /// Builds a fresh actor for one episode of `env`.
    pub fn build(
        &self,
        day: &DayBook,
        env: &LiquidationEnv<'_>,
        seed: u64,
        setup: &EpisodeSetup,
    ) -> Result<Box<dyn Actor>> {
        let target = env.config().liquidation_target();
        Ok(match self {
            PolicySpec::Twap => Box::new(ScheduleActor::new(twap_schedule(target, env.total_steps())?)),
            PolicySpec::Vwap => {
                let w = env.window();
                let schedule = vwap_like_schedule(day, w.start..w.end - 1, target, setup.vwap_levels)?;
                Box::new(ScheduleActor::new(schedule))
            }
            PolicySpec::Random => Box::new(RandomPolicy::new(seed)),
            PolicySpec::Oracle(p) => Box::new(*p),
            PolicySpec::External { command } => Box::new(crate::bridge::ExternalPolicy::spawn(command, env.config())?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineParams;
    use crate::env::{EpisodeConfig, RewardParams};
    use crate::synth::{flat_day, FlatBook};

    #[test]
    fn random_policy_is_seeded() {
        let day = flat_day(
            &FlatBook {
                mid: 100.0,
                half_spread: 0.5,
                tick: 0.5,
                level_size: 5.0,
            },
            60,
        );
        let cfg = EpisodeConfig {
            horizon_s: 30,
            ..Default::default()
        };
        let run = |seed| {
            let mut env = LiquidationEnv::new(&day, cfg, EngineParams::default(), RewardParams::default()).unwrap();
            run_episode(&mut env, &mut RandomPolicy::new(seed), None).unwrap()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1).pnl_percent, run(2).pnl_percent);
    }
}
