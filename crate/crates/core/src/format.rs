//! On-disk JSON documents for games and strategies.
//!
//! ```json
//! {
//!   "states": ["u", "w"],
//!   "gamma1": {"u": ["a1", "a2"], "w": ["a"]},
//!   "gamma2": {"u": ["b1", "b2"], "w": ["b"]},
//!   "transitions": [
//!     {"from": "w", "a1": "a", "a2": "b", "reward": "2", "successors": {"u": "1"}}
//!   ],
//!   "reward_scale": "2"
//! }
//! ```
//!
//! Strategies are `{"player": 1, "strategy": {"u": {"a1": "1/2", "a2": "1/2"}}}`.
//! Probabilities given as JSON numbers produce a float-tagged strategy;
//! actions left out of a state's map get probability zero.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Game, GameBuilder, Player, StationaryStrategy, StrategyProbs};
use crate::rational::{self, Rational};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameDoc {
    states: Vec<String>,
    gamma1: IndexMap<String, Vec<String>>,
    gamma2: IndexMap<String, Vec<String>>,
    transitions: Vec<TransitionDoc>,
    reward_scale: RationalText,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionDoc {
    from: String,
    a1: String,
    a2: String,
    reward: RationalText,
    successors: IndexMap<String, RationalText>,
}

/// A rational written as `"p/q"`, an integer string, or a bare JSON integer.
#[derive(Clone, Debug)]
struct RationalText(Rational);

impl Serialize for RationalText {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&rational::format_rational(&self.0))
    }
}

impl<'de> Deserialize<'de> for RationalText {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) => rational::parse_rational(&t).map(RationalText).map_err(serde::de::Error::custom),
            Raw::Int(i) => Ok(RationalText(rational::int(i))),
        }
    }
}

fn syntax_error(err: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = err.path().to_string();
    let inner = err.into_inner();
    Error::Syntax {
        line: inner.line(),
        column: inner.column(),
        path,
        message: inner.to_string(),
    }
}

fn from_json<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(syntax_error)?;
    de.end().map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        path: ".".into(),
        message: e.to_string(),
    })?;
    Ok(value)
}

pub fn parse_game(text: &str) -> Result<Game> {
    let doc: GameDoc = from_json(text)?;
    let mut b = GameBuilder::new();
    for key in doc.gamma1.keys().chain(doc.gamma2.keys()) {
        if !doc.states.contains(key) {
            return Err(Error::Semantic(format!("action list given for undeclared state `{key}`")));
        }
    }
    for s in &doc.states {
        let a1 = doc
            .gamma1
            .get(s)
            .ok_or_else(|| Error::Semantic(format!("gamma1 has no entry for `{s}`")))?;
        let a2 = doc
            .gamma2
            .get(s)
            .ok_or_else(|| Error::Semantic(format!("gamma2 has no entry for `{s}`")))?;
        b.state_owned(s.clone(), a1.clone(), a2.clone());
    }
    for t in doc.transitions {
        b.transition_owned(
            t.from,
            t.a1,
            t.a2,
            t.reward.0,
            t.successors.into_iter().map(|(k, v)| (k, v.0)).collect(),
        );
    }
    b.reward_scale(doc.reward_scale.0);
    b.build()
}

/// Canonical document: states and actions in declaration order, transitions
/// in `(state, a1, a2)` order, successors by state index.
pub fn serialize_game(game: &Game) -> String {
    let n = game.num_states();
    let names = game.state_names();
    let mut transitions = Vec::new();
    for s in 0..n {
        for (i, j, t) in game.pairs(s) {
            transitions.push(TransitionDoc {
                from: names[s].clone(),
                a1: game.actions1(s)[i].clone(),
                a2: game.actions2(s)[j].clone(),
                reward: RationalText(t.reward.clone()),
                successors: t
                    .successors
                    .iter()
                    .map(|(u, p)| (names[*u].clone(), RationalText(p.clone())))
                    .collect(),
            });
        }
    }
    let doc = GameDoc {
        states: names.to_vec(),
        gamma1: (0..n).map(|s| (names[s].clone(), game.actions1(s).to_vec())).collect(),
        gamma2: (0..n).map(|s| (names[s].clone(), game.actions2(s).to_vec())).collect(),
        transitions,
        reward_scale: RationalText(game.reward_scale().clone()),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("game document serializes");
    out.push('\n');
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyDoc {
    player: u8,
    strategy: IndexMap<String, IndexMap<String, ProbText>>,
}

#[derive(Clone, Debug)]
enum ProbText {
    Exact(Rational),
    Float(f64),
}

impl Serialize for ProbText {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ProbText::Exact(r) => s.serialize_str(&rational::format_rational(r)),
            ProbText::Float(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for ProbText {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Num(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) => rational::parse_rational(&t).map(ProbText::Exact).map_err(serde::de::Error::custom),
            Raw::Num(x) => Ok(ProbText::Float(x)),
        }
    }
}

pub fn parse_strategy(game: &Game, text: &str) -> Result<StationaryStrategy> {
    let doc: StrategyDoc = from_json(text)?;
    let player = match doc.player {
        1 => Player::One,
        2 => Player::Two,
        p => return Err(Error::InvalidStrategy(format!("player must be 1 or 2, got {p}"))),
    };
    for key in doc.strategy.keys() {
        game.state_index(key)?;
    }
    let any_float = doc
        .strategy
        .values()
        .flat_map(|m| m.values())
        .any(|p| matches!(p, ProbText::Float(_)));
    let n = game.num_states();
    let mut exact = Vec::with_capacity(n);
    let mut float = Vec::with_capacity(n);
    for s in 0..n {
        let actions = game.actions(player, s);
        let dist = doc
            .strategy
            .get(game.state_name(s))
            .ok_or_else(|| Error::InvalidStrategy(format!("no distribution for state `{}`", game.state_name(s))))?;
        let mut e = vec![Rational::default(); actions.len()];
        let mut f = vec![0.0; actions.len()];
        for (a, p) in dist {
            let idx = game.action_index(player, s, a)?;
            match p {
                ProbText::Exact(r) => {
                    f[idx] = rational::to_f64(r);
                    e[idx] = r.clone();
                }
                ProbText::Float(x) => f[idx] = *x,
            }
        }
        exact.push(e);
        float.push(f);
    }
    let probs = if any_float {
        StrategyProbs::Float(float)
    } else {
        StrategyProbs::Exact(exact)
    };
    StationaryStrategy::new(game, player, probs)
}

/// Strategy document listing only the support at each state.
pub fn serialize_strategy(game: &Game, sigma: &StationaryStrategy) -> String {
    let player = sigma.player();
    let mut strategy = IndexMap::new();
    for s in 0..game.num_states() {
        let actions = game.actions(player, s);
        let mut dist = IndexMap::new();
        match sigma.exact_at(s) {
            Some(exact) => {
                for (a, p) in actions.iter().zip(exact) {
                    if !num_traits::Zero::is_zero(p) {
                        dist.insert(a.clone(), ProbText::Exact(p.clone()));
                    }
                }
            }
            None => {
                for (a, p) in actions.iter().zip(sigma.at(s)) {
                    if *p != 0.0 {
                        dist.insert(a.clone(), ProbText::Float(*p));
                    }
                }
            }
        }
        strategy.insert(game.state_name(s).to_string(), dist);
    }
    let doc = StrategyDoc {
        player: player.number(),
        strategy,
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("strategy document serializes");
    out.push('\n');
    out
}

/// JSON value form of a strategy, used inside run records.
pub fn strategy_value(game: &Game, sigma: &StationaryStrategy) -> serde_json::Value {
    serde_json::from_str(&serialize_strategy(game, sigma)).expect("round trip through own output")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;

    const SELF_LOOP: &str = r#"{
        "states": ["s"],
        "gamma1": {"s": ["a"]},
        "gamma2": {"s": ["b"]},
        "transitions": [{"from": "s", "a1": "a", "a2": "b", "reward": "1", "successors": {"s": "1"}}],
        "reward_scale": "1"
    }"#;

    #[test]
    fn parses_smallest_game() {
        let g = parse_game(SELF_LOOP).unwrap();
        let st = crate::game::compute_stats(&g);
        assert_eq!((st.n, st.m, st.r), (1, 1, 0));
        assert_eq!(st.delta_min, int(1));
    }

    #[test]
    fn round_trip_is_identity() {
        let g = parse_game(SELF_LOOP).unwrap();
        let text = serialize_game(&g);
        let h = parse_game(&text).unwrap();
        assert_eq!(g, h);
        assert_eq!(serialize_game(&h), text);
    }

    #[test]
    fn syntax_error_carries_location() {
        let bad = SELF_LOOP.replace("\"reward\": \"1\"", "\"reward\": \"x/y\"");
        match parse_game(&bad).unwrap_err() {
            Error::Syntax { line, path, .. } => {
                assert_eq!(line, 5);
                assert!(path.contains("transitions[0].reward"), "{path}");
            }
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(parse_game("{").unwrap_err(), Error::Syntax { .. }));
    }

    #[test]
    fn semantic_error_names_entry() {
        let bad = SELF_LOOP.replace("{\"s\": \"1\"}", "{\"s\": \"9/10\"}");
        let msg = parse_game(&bad).unwrap_err().to_string();
        assert!(msg.contains("(s, a, b)") && msg.contains("9/10"), "{msg}");
    }

    #[test]
    fn strategy_documents() {
        let g = parse_game(SELF_LOOP).unwrap();
        let s = parse_strategy(&g, r#"{"player": 2, "strategy": {"s": {"b": "1"}}}"#).unwrap();
        assert_eq!(s.player(), Player::Two);
        assert_eq!(s.exact_at(0).unwrap(), &[int(1)]);
        let back = parse_strategy(&g, &serialize_strategy(&g, &s)).unwrap();
        assert_eq!(back, s);
        let f = parse_strategy(&g, r#"{"player": 1, "strategy": {"s": {"a": 1.0}}}"#).unwrap();
        assert!(f.exact_at(0).is_none());
        assert!(parse_strategy(&g, r#"{"player": 1, "strategy": {"s": {"zz": "1"}}}"#).is_err());
        assert!(parse_strategy(&g, r#"{"player": 1, "strategy": {"s": {"a": "1/2"}}}"#).is_err());
    }
}
