//! Line-delimited JSON wire protocol for driving episodes from another
//! process.
//!
//! Every message is one line `{"kind": K, "payload": {...}}` with `K` one of
//! `reset`, `obs`, `act`, `done`, `error`.
//!
//! Serving (`serve`): the client sends `reset` (payload keys `day`,
//! `start_index`, `horizon_s`, `seed`, all optional) and gets an `obs`; each
//! `act` (`{"action": a}`) gets exactly one `obs`, or `done` on the final
//! step. `done` carries `episode_reward` and `pnl_percent`. Any protocol
//! violation is answered with `error` and the session ends.
//!
//! Policy side ([`ExternalPolicy`]): the core sends `reset` with the episode
//! config, then one `obs` per decision and expects one `act` back each time.
//!
//! Floats are written in shortest round-trip form and parsed exactly.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::env::{EpisodeConfig, LiquidationEnv, Observation, StepResult, OBS_LEN};
use crate::error::{Error, Result};
use crate::eval::EpisodeSetup;
use crate::normalize::NormalizerStats;
use crate::policy::{Actor, Order, StepContext};
use crate::store::DayBook;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Reset,
    Obs,
    Act,
    Done,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireMessage {
    pub kind: MessageKind,
    #[serde(default)]
    pub payload: Map<String, Value>,
}

impl WireMessage {
    pub fn new(kind: MessageKind, payload: Value) -> Self {
        let payload = match payload {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        Self { kind, payload }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self::new(MessageKind::Error, json!({ "message": message.into() }))
    }

    pub fn parse(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Protocol(format!("malformed message: {e}")))
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialise")
    }

    fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e| Error::Protocol(format!("write failed: {e}"));
        writeln!(w, "{}", self.to_line()).map_err(io)?;
        w.flush().map_err(io)
    }
}

/// Reads `payload[key]` as a vector of exactly [`OBS_LEN`] numbers.
pub fn observation_from_payload(payload: &Map<String, Value>, key: &str) -> Result<Observation> {
    let arr = payload
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Protocol(format!("payload has no array {key:?}")))?;
    if arr.len() != OBS_LEN {
        return Err(Error::Protocol(format!(
            "{key} has {} entries, expected {OBS_LEN}",
            arr.len()
        )));
    }
    let mut out = [0.0; OBS_LEN];
    for (o, v) in out.iter_mut().zip(arr) {
        *o = v
            .as_f64()
            .ok_or_else(|| Error::Protocol(format!("{key} holds a non-number")))?;
    }
    Ok(Observation(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResetRequest {
    day: Option<NaiveDate>,
    start_index: Option<usize>,
    horizon_s: Option<u64>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ServeSummary {
    pub episodes: usize,
    pub steps: usize,
}

/// One connection's worth of state.
pub struct BridgeSession<'a> {
    days: &'a [DayBook],
    setup: EpisodeSetup,
    default_horizon_s: u64,
    normalizer: Option<&'a NormalizerStats>,
    rng: ChaCha8Rng,
    env: Option<LiquidationEnv<'a>>,
    summary: ServeSummary,
}

impl<'a> BridgeSession<'a> {
    pub fn new(
        days: &'a [DayBook],
        setup: EpisodeSetup,
        default_horizon_s: u64,
        normalizer: Option<&'a NormalizerStats>,
        seed: u64,
    ) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::Data("bridge has no days to serve".into()));
        }
        Ok(Self {
            days,
            setup,
            default_horizon_s,
            normalizer,
            rng: ChaCha8Rng::seed_from_u64(seed),
            env: None,
            summary: ServeSummary::default(),
        })
    }

    pub fn summary(&self) -> ServeSummary {
        self.summary
    }

    fn obs_payload(&self, obs: &Observation, reward: f64, done: bool, info: Value) -> Value {
        let mut p = json!({
            "observation": obs.as_slice(),
            "reward": reward,
            "done": done,
            "info": info,
        });
        if let Some(stats) = self.normalizer {
            p["normalized"] = json!(stats.transform_observation(obs).as_slice());
        }
        p
    }

    fn reset(&mut self, payload: Map<String, Value>) -> Result<WireMessage> {
        let req: ResetRequest = serde_json::from_value(Value::Object(payload))
            .map_err(|e| Error::Protocol(format!("bad reset payload: {e}")))?;
        let day = match req.day {
            Some(d) => self
                .days
                .iter()
                .find(|b| b.date() == d)
                .ok_or_else(|| Error::Protocol(format!("day {d} not loaded")))?,
            None => &self.days[self.rng.random_range(0..self.days.len())],
        };
        let horizon_s = req.horizon_s.unwrap_or(self.default_horizon_s);
        let h = usize::try_from(horizon_s).unwrap_or(usize::MAX);
        if h > day.len() {
            return Err(Error::Protocol(format!(
                "horizon {horizon_s} s longer than {}",
                day.date()
            )));
        }
        let start_index = match req.start_index {
            Some(s) => s,
            None => self.rng.random_range(0..=day.len() - h),
        };
        let seed = req.seed.unwrap_or_else(|| self.rng.random());
        let cfg = self.setup.episode(start_index, horizon_s, seed);
        let mut env = LiquidationEnv::new(day, cfg, self.setup.engine, self.setup.reward)
            .map_err(|e| Error::Protocol(format!("reset rejected: {e}")))?;
        let obs = env.reset();
        let info = json!({
            "day": day.date().to_string(),
            "start_index": start_index,
            "horizon_s": horizon_s,
            "seed": seed,
            "total_steps": env.total_steps(),
        });
        let msg = WireMessage::new(MessageKind::Obs, self.obs_payload(&obs, 0.0, false, info));
        self.env = Some(env);
        self.summary.episodes += 1;
        Ok(msg)
    }

    fn act(&mut self, payload: Map<String, Value>) -> Result<WireMessage> {
        let action = payload
            .get("action")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Protocol("act payload needs a numeric \"action\"".into()))?;
        let env = match self.env.as_mut() {
            Some(env) if !env.is_done() => env,
            Some(_) => return Err(Error::Protocol("act after episode end".into())),
            None => return Err(Error::Protocol("act before reset".into())),
        };
        let StepResult {
            observation,
            reward,
            done,
            info,
        } = env.step(action).map_err(|e| Error::Protocol(e.to_string()))?;
        let inventory = env.portfolio().inventory;
        let step = env.steps_taken();
        let mut info_json = json!({
            "step": step,
            "executed_index": info.executed_index,
            "filled_qty": info.fill.filled_qty,
            "avg_price": info.fill.avg_price,
            "fee_paid": info.fill.fee_paid,
            "inventory": inventory,
            "degenerate_indicators": info.degeneracy.count(),
        });
        self.summary.steps += 1;
        if !done {
            return Ok(WireMessage::new(
                MessageKind::Obs,
                self.obs_payload(&observation, reward, false, info_json),
            ));
        }
        let outcome = env.outcome()?;
        info_json["episode_reward"] = json!(outcome.cum_reward);
        info_json["pnl_percent"] = json!(outcome.pnl_percent);
        info_json["residual_fraction"] = json!(outcome.residual_fraction);
        let mut payload = self.obs_payload(&observation, reward, true, info_json);
        payload["episode_reward"] = json!(outcome.cum_reward);
        payload["pnl_percent"] = json!(outcome.pnl_percent);
        Ok(WireMessage::new(MessageKind::Done, payload))
    }

    /// Handles one request; an `Err` ends the session.
    pub fn handle(&mut self, msg: WireMessage) -> Result<WireMessage> {
        match msg.kind {
            MessageKind::Reset => self.reset(msg.payload),
            MessageKind::Act => self.act(msg.payload),
            other => Err(Error::Protocol(format!("unexpected {other:?} message from client"))),
        }
    }
}

/// Serves requests until EOF or the first protocol violation, which is
/// answered with an `error` message before returning the error.
pub fn serve<R: BufRead, W: Write>(session: &mut BridgeSession<'_>, reader: R, mut writer: W) -> Result<ServeSummary> {
    for line in reader.lines() {
        let line = line.map_err(|e| Error::Protocol(format!("read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        match WireMessage::parse(&line).and_then(|m| session.handle(m)) {
            Ok(reply) => reply.write_to(&mut writer)?,
            Err(e) => {
                WireMessage::error(e.to_string()).write_to(&mut writer)?;
                return Err(e);
            }
        }
    }
    Ok(session.summary())
}

/// Policy implemented by a child process speaking the protocol on its
/// stdin/stdout. One process per episode.
pub struct ExternalPolicy {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl ExternalPolicy {
    pub fn spawn(command: &[String], cfg: &EpisodeConfig) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config("bridge policy command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Config(format!("cannot start policy {program:?}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut policy = Self { child, stdin, stdout };
        let reset = WireMessage::new(
            MessageKind::Reset,
            json!({
                "start_index": cfg.start_index,
                "horizon_s": cfg.horizon_s,
                "seed": cfg.seed,
            }),
        );
        policy.send(&reset)?;
        Ok(policy)
    }

    fn send(&mut self, msg: &WireMessage) -> Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Protocol("policy stdin closed".into()))?;
        msg.write_to(stdin)
    }
}

impl Actor for ExternalPolicy {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Order> {
        let obs = ctx
            .observation
            .ok_or_else(|| Error::Episode("external policy needs observations".into()))?;
        let mut payload = json!({
            "observation": obs.as_slice(),
            "step": ctx.step,
            "total_steps": ctx.total_steps,
        });
        if let Some(n) = ctx.normalized {
            payload["normalized"] = json!(n.as_slice());
        }
        self.send(&WireMessage::new(MessageKind::Obs, payload))?;
        let mut line = String::new();
        let read = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::Protocol(format!("policy read failed: {e}")))?;
        if read == 0 {
            return Err(Error::Protocol("policy closed its output".into()));
        }
        let reply = WireMessage::parse(line.trim_end())?;
        if reply.kind != MessageKind::Act {
            return Err(Error::Protocol(format!(
                "policy replied {:?}, expected act",
                reply.kind
            )));
        }
        reply
            .payload
            .get("action")
            .and_then(Value::as_f64)
            .map(Order::Action)
            .ok_or_else(|| Error::Protocol("act payload needs a numeric \"action\"".into()))
    }
}

impl Drop for ExternalPolicy {
    fn drop(&mut self) {
        if let Some(mut stdin) = self.stdin.take() {
            let _ = WireMessage::new(MessageKind::Done, json!({})).write_to(&mut stdin);
        }
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{flat_day, FlatBook};

    fn days() -> Vec<DayBook> {
        vec![flat_day(
            &FlatBook {
                mid: 100.0,
                half_spread: 0.5,
                tick: 0.5,
                level_size: 10.0,
            },
            120,
        )]
    }

    fn run(input: &str) -> (Result<ServeSummary>, Vec<WireMessage>) {
        let d = days();
        let mut s = BridgeSession::new(&d, EpisodeSetup::default(), 10, None, 1).unwrap();
        let mut out = Vec::new();
        let r = serve(&mut s, input.as_bytes(), &mut out);
        let msgs = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| WireMessage::parse(l).unwrap())
            .collect();
        (r, msgs)
    }

    #[test]
    fn reset_gives_full_observation() {
        let (r, msgs) = run("{\"kind\":\"reset\",\"payload\":{\"start_index\":5}}\n");
        assert_eq!(r.unwrap().episodes, 1);
        assert_eq!(msgs[0].kind, MessageKind::Obs);
        assert!(observation_from_payload(&msgs[0].payload, "observation").is_ok());
    }

    #[test]
    fn act_after_done_is_an_error() {
        let mut input = String::from("{\"kind\":\"reset\",\"payload\":{\"start_index\":0,\"horizon_s\":3}}\n");
        for _ in 0..3 {
            input.push_str("{\"kind\":\"act\",\"payload\":{\"action\":0.1}}\n");
        }
        let (r, msgs) = run(&input);
        assert!(r.is_err());
        let kinds: Vec<MessageKind> = msgs.iter().map(|m| m.kind).collect();
        assert_eq!(
            kinds,
            [
                MessageKind::Obs,
                MessageKind::Obs,
                MessageKind::Done,
                MessageKind::Error
            ]
        );
        assert!(msgs[2].payload.contains_key("pnl_percent"));
    }

    #[test]
    fn malformed_and_premature_messages() {
        let (r, msgs) = run("not json\n");
        assert!(r.is_err());
        assert_eq!(msgs[0].kind, MessageKind::Error);
        let (r, msgs) = run("{\"kind\":\"act\",\"payload\":{\"action\":0.1}}\n");
        assert!(r.is_err());
        assert_eq!(msgs.len(), 1);
        let (r, _) = run("{\"kind\":\"reset\",\"payload\":{\"horizon_s\":1000}}\n");
        assert!(r.is_err());
    }

    #[test]
    fn floats_round_trip_exactly() {
        let x = [0.1 + 0.2, 1.0 / 3.0, 9_512.123_456_789_012, 1e-300, -2.5e17];
        let msg = WireMessage::new(MessageKind::Obs, json!({ "v": x }));
        let back = WireMessage::parse(&msg.to_line()).unwrap();
        let v: Vec<f64> = back.payload["v"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert_eq!(v, x);
    }
}
