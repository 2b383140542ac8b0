//! Machine-readable run records written by the command-line tool.

use std::time::Instant;

use indexmap::IndexMap;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::format::serialize_game;
use crate::game::{compute_stats, Game};
use crate::rational::format_rational;

pub const SCHEMA: &str = "cmpg-run-record/1";

/// Scale a reported number lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    /// Same units as the game's rewards.
    Reward,
    /// Rewards divided by the reward scale W.
    Normalized,
    Seconds,
}

/// `{"value": x, "unit": u}`.
pub fn quantity(value: f64, unit: Unit) -> Value {
    json!({ "value": value, "unit": unit })
}

/// SHA-256 of the canonical serialization, so formatting differences in the
/// input file do not change it.
pub fn fingerprint(game: &Game) -> String {
    hex::encode(Sha256::digest(serialize_game(game).as_bytes()))
}

pub fn game_summary(game: &Game) -> Value {
    let st = compute_stats(game);
    json!({
        "sha256": fingerprint(game),
        "states": st.n,
        "max_actions": st.m,
        "random_states": st.r,
        "delta_min": format_rational(&st.delta_min),
        "reward_scale": format_rational(game.reward_scale()),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub schema: &'static str,
    pub command: String,
    pub parameters: IndexMap<String, Value>,
    pub game: Option<Value>,
    pub results: IndexMap<String, Value>,
    /// Wall-clock phases; the only fields allowed to differ between runs.
    pub timings: IndexMap<String, Value>,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunRecord {
    pub fn new(command: &str) -> Self {
        RunRecord {
            schema: SCHEMA,
            command: command.to_string(),
            parameters: IndexMap::new(),
            game: None,
            results: IndexMap::new(),
            timings: IndexMap::new(),
            started: Some(Instant::now()),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }

    pub fn result(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.results.insert(key.to_string(), value.into());
        self
    }

    pub fn set_game(&mut self, game: &Game) {
        self.game = Some(game_summary(game));
    }

    pub fn time(&mut self, phase: &str, since: Instant) {
        self.timings.insert(phase.to_string(), quantity(since.elapsed().as_secs_f64(), Unit::Seconds));
    }

    pub fn to_json(&mut self) -> String {
        if let Some(t) = self.started {
            self.time("total", t);
        }
        let mut out = serde_json::to_string_pretty(self).expect("record serializes");
        out.push('\n');
        out
    }
}

/// Copy of a record document without its `timings`, for comparisons.
pub fn strip_timings(record: &str) -> serde_json::Result<Value> {
    let mut v: Value = serde_json::from_str(record)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timings");
    }
    Ok(v)
}
