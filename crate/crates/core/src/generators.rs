//! Game families with known values, the skew-symmetry verifier, the
//! SSG-to-ergodic reduction and rational reconstruction from a threshold
//! oracle.

use std::collections::HashMap;

use indexmap::IndexMap;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::classify;
use crate::error::{Error, Result};
use crate::game::{Game, GameBuilder, Player, StationaryStrategy, StrategyProbs};
use crate::rational::{self, int, ratio, Rational};

/// `(k_b, d_b)` of the two-state square-root game, or `None` when `b` is
/// served by a single self-loop (`b ∈ {1, 4}`).
pub fn sqrt_game_params(b: u64) -> Result<Option<(Rational, Rational)>> {
    match b {
        0 => Err(Error::InvalidArgument("b must be positive".into())),
        1 | 4 => Ok(None),
        2 => Ok(Some((ratio(3, 2), ratio(1, 3)))),
        _ => {
            let mut k = 1u64;
            while k * k <= b {
                k += 1;
            }
            let k = Rational::from_integer(BigInt::from(k));
            let b = Rational::from_integer(BigInt::from(b));
            let d = int(2) * &k - int(2) * b / &k;
            Ok(Some((k, d)))
        }
    }
}

/// Probability of the first row at `u` in an optimal strategy:
/// `(2k − 2√b) / d`; 1 for the self-loop cases.
pub fn sqrt_game_optimal_p(b: u64) -> Result<f64> {
    Ok(match sqrt_game_params(b)? {
        None => 1.0,
        Some((k, d)) => (2.0 * rational::to_f64(&k) - 2.0 * (b as f64).sqrt()) / rational::to_f64(&d),
    })
}

/// Adds the square-root gadget for `b` with state names prefixed by `prefix`.
/// Returns the names of its `u` and `w` states (equal for self-loops) and
/// the largest reward used.
fn sqrt_gadget(builder: &mut GameBuilder, prefix: &str, b: u64) -> Result<(String, String, Rational)> {
    let u = format!("{prefix}u");
    match sqrt_game_params(b)? {
        None => {
            let root = if b == 1 { int(1) } else { int(2) };
            builder
                .state(u.as_str(), &["a"], &["b"])
                .transition(&u, "a", "b", root.clone(), &[(u.as_str(), int(1))]);
            Ok((u.clone(), u, root))
        }
        Some((k, d)) => {
            let w = format!("{prefix}w");
            let stay = &d / &k;
            let anti = &k - &d;
            builder
                .state(u.as_str(), &["a1", "a2"], &["b1", "b2"])
                .state(w.as_str(), &["a"], &["b"])
                .transition(&u, "a1", "b1", k.clone(), &[(u.as_str(), stay.clone()), (w.as_str(), int(1) - &stay)])
                .transition(&u, "a1", "b2", anti.clone(), &[(w.as_str(), int(1))])
                .transition(&u, "a2", "b1", anti, &[(w.as_str(), int(1))])
                .transition(&u, "a2", "b2", k.clone(), &[(w.as_str(), int(1))])
                .transition(&w, "a", "b", k.clone(), &[(u.as_str(), int(1))]);
            Ok((u, w, k))
        }
    }
}

/// Ergodic game of value `√b`.
pub fn gen_sqrt_game(b: u64) -> Result<Game> {
    let mut builder = GameBuilder::new();
    let (_, _, top) = sqrt_gadget(&mut builder, "", b)?;
    builder.reward_scale(top);
    builder.build()
}

/// Which state of each gadget the fresh start state leads to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SqrtEntry {
    #[default]
    U,
    W,
}

/// Start state `s_star` moving uniformly into one disjoint square-root
/// gadget per entry of `nums`; its value is the mean of the roots.
pub fn gen_sqrt_sum(nums: &[u64], entry: SqrtEntry) -> Result<Game> {
    if nums.is_empty() {
        return Err(Error::InvalidArgument("need at least one number".into()));
    }
    let mut builder = GameBuilder::new();
    builder.state("s_star", &["a"], &["b"]);
    let mut targets = Vec::new();
    let mut top = int(1);
    for (i, &b) in nums.iter().enumerate() {
        let (u, w, k) = sqrt_gadget(&mut builder, &format!("g{i}."), b)?;
        targets.push(if entry == SqrtEntry::U { u } else { w });
        top = top.max(k);
    }
    let share = ratio(1, nums.len() as i64);
    let succ: Vec<(&str, Rational)> = targets.iter().map(|t| (t.as_str(), share.clone())).collect();
    builder.transition("s_star", "a", "b", int(0), &succ).reward_scale(top);
    builder.build()
}

/// Involution on states with per-state action correspondences swapping the
/// players' roles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkewSymmetryWitness {
    /// `f(s)`.
    pub state_map: Vec<usize>,
    /// `f1^s(i)`, an index into `Γ2(f(s))`.
    pub action1_map: Vec<Vec<usize>>,
    /// `f2^s(j)`, an index into `Γ1(f(s))`.
    pub action2_map: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WitnessDoc {
    states: IndexMap<String, String>,
    actions1: IndexMap<String, IndexMap<String, String>>,
    actions2: IndexMap<String, IndexMap<String, String>>,
}

impl SkewSymmetryWitness {
    pub fn to_json(&self, g: &Game) -> String {
        let n = g.num_states();
        let doc = WitnessDoc {
            states: (0..n).map(|s| (g.state_name(s).to_string(), g.state_name(self.state_map[s]).to_string())).collect(),
            actions1: (0..n)
                .map(|s| {
                    let t = self.state_map[s];
                    let m = g.actions1(s)
                        .iter()
                        .zip(&self.action1_map[s])
                        .map(|(a, &j)| (a.clone(), g.actions2(t)[j].clone()))
                        .collect();
                    (g.state_name(s).to_string(), m)
                })
                .collect(),
            actions2: (0..n)
                .map(|s| {
                    let t = self.state_map[s];
                    let m = g.actions2(s)
                        .iter()
                        .zip(&self.action2_map[s])
                        .map(|(a, &i)| (a.clone(), g.actions1(t)[i].clone()))
                        .collect();
                    (g.state_name(s).to_string(), m)
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("witness serializes");
        out.push('\n');
        out
    }

    /// Parses a witness document; every map must be total.
    pub fn from_json(g: &Game, text: &str) -> Result<Self> {
        let doc: WitnessDoc = serde_json::from_str(text).map_err(|e| Error::Syntax {
            line: e.line(),
            column: e.column(),
            path: ".".into(),
            message: e.to_string(),
        })?;
        let n = g.num_states();
        let missing = |what: &str, s: &str| Error::InvalidWitness(format!("{what} not defined at `{s}`"));
        let mut state_map = Vec::with_capacity(n);
        let mut action1_map = Vec::with_capacity(n);
        let mut action2_map = Vec::with_capacity(n);
        for s in 0..n {
            let name = g.state_name(s);
            let t = g.state_index(doc.states.get(name).ok_or_else(|| missing("state map", name))?)?;
            state_map.push(t);
            let m1 = doc.actions1.get(name).ok_or_else(|| missing("action map 1", name))?;
            let m2 = doc.actions2.get(name).ok_or_else(|| missing("action map 2", name))?;
            action1_map.push(
                g.actions1(s)
                    .iter()
                    .map(|a| {
                        let img = m1.get(a).ok_or_else(|| missing(&format!("image of `{a}`"), name))?;
                        g.action_index(Player::Two, t, img)
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
            action2_map.push(
                g.actions2(s)
                    .iter()
                    .map(|a| {
                        let img = m2.get(a).ok_or_else(|| missing(&format!("image of `{a}`"), name))?;
                        g.action_index(Player::One, t, img)
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(SkewSymmetryWitness { state_map, action1_map, action2_map })
    }

    /// `σ̄(f(s))(f^s(i)) = σ(s)(i)`: the same behaviour for the other player.
    pub fn mirror(&self, g: &Game, sigma: &StationaryStrategy) -> Result<StationaryStrategy> {
        let n = g.num_states();
        let (other, maps) = match sigma.player() {
            Player::One => (Player::Two, &self.action1_map),
            Player::Two => (Player::One, &self.action2_map),
        };
        let mut float: Vec<Vec<f64>> = (0..n).map(|s| vec![0.0; g.actions(other, s).len()]).collect();
        let mut exact: Option<Vec<Vec<Rational>>> =
            sigma.exact_at(0).map(|_| (0..n).map(|s| vec![Rational::zero(); g.actions(other, s).len()]).collect());
        for s in 0..n {
            let t = self.state_map[s];
            for (i, &img) in maps[s].iter().enumerate() {
                float[t][img] = sigma.at(s)[i];
                if let (Some(e), Some(src)) = (exact.as_mut(), sigma.exact_at(s)) {
                    e[t][img] = src[i].clone();
                }
            }
        }
        let probs = match exact {
            Some(e) => StrategyProbs::Exact(e),
            None => StrategyProbs::Float(float),
        };
        StationaryStrategy::new(g, other, probs)
    }
}

/// Result of [`check_skew_symmetric`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SkewCheck {
    Holds,
    /// First violated condition (1, 2 or 3) and the offending tuple.
    Violated { condition: u8, detail: String },
}

impl SkewCheck {
    pub fn holds(&self) -> bool {
        *self == SkewCheck::Holds
    }
}

/// Verifies the skew-symmetry conditions exactly, on rewards divided by W.
/// Structural problems with the maps (wrong sizes, not bijective, not an
/// involution) are errors rather than violations.
pub fn check_skew_symmetric(g: &Game, w: &SkewSymmetryWitness) -> Result<SkewCheck> {
    let n = g.num_states();
    let bad = |m: String| Err(Error::InvalidWitness(m));
    if w.state_map.len() != n || w.action1_map.len() != n || w.action2_map.len() != n {
        return bad("maps must cover every state".into());
    }
    for s in 0..n {
        let t = w.state_map[s];
        if t >= n || w.state_map[t] != s {
            return bad(format!("state map is not an involution at `{}`", g.state_name(s)));
        }
        for (maps, dom, cod) in [
            (&w.action1_map[s], g.actions1(s).len(), g.actions2(t).len()),
            (&w.action2_map[s], g.actions2(s).len(), g.actions1(t).len()),
        ] {
            let mut seen = vec![false; cod];
            if maps.len() != dom || dom != cod {
                return bad(format!("action map at `{}` is not a bijection", g.state_name(s)));
            }
            for &x in maps {
                if x >= cod || std::mem::replace(&mut seen[x], true) {
                    return bad(format!("action map at `{}` is not a bijection", g.state_name(s)));
                }
            }
        }
    }
    let scale = g.reward_scale();
    for s in 0..n {
        let sb = w.state_map[s];
        for (i, j, tr) in g.pairs(s) {
            let (ib, jb) = (w.action1_map[s][i], w.action2_map[s][j]);
            let here = || format!("({}, {}, {})", g.state_name(s), g.actions1(s)[i], g.actions2(s)[j]);
            let mirrored = g.transition(sb, jb, ib);
            if &tr.reward / scale != Rational::one() - &mirrored.reward / scale {
                return Ok(SkewCheck::Violated { condition: 1, detail: here() });
            }
            for (u, p) in &tr.successors {
                let ub = w.state_map[*u];
                let q = mirrored.successors.iter().find(|(x, _)| *x == ub).map(|(_, q)| q.clone());
                if q.as_ref() != Some(p) {
                    return Ok(SkewCheck::Violated {
                        condition: 2,
                        detail: format!("{} to `{}`", here(), g.state_name(*u)),
                    });
                }
            }
        }
        for i in 0..g.actions1(s).len() {
            if w.action2_map[sb][w.action1_map[s][i]] != i {
                return Ok(SkewCheck::Violated {
                    condition: 3,
                    detail: format!("player-1 action `{}` at `{}`", g.actions1(s)[i], g.state_name(s)),
                });
            }
        }
        for j in 0..g.actions2(s).len() {
            if w.action1_map[sb][w.action2_map[s][j]] != j {
                return Ok(SkewCheck::Violated {
                    condition: 3,
                    detail: format!("player-2 action `{}` at `{}`", g.actions2(s)[j], g.state_name(s)),
                });
            }
        }
    }
    Ok(SkewCheck::Holds)
}

/// Witness with identity action maps (index-wise) and the given state map.
pub fn identity_action_witness(g: &Game, state_map: Vec<usize>) -> SkewSymmetryWitness {
    let n = g.num_states();
    SkewSymmetryWitness {
        state_map,
        action1_map: (0..n).map(|s| (0..g.actions1(s).len()).collect()).collect(),
        action2_map: (0..n).map(|s| (0..g.actions2(s).len()).collect()).collect(),
    }
}

/// The ergodic skew-symmetric family whose near-optimal strategies need
/// patience at least `1 / (2 η^{k/2})`.
///
/// States in order: `a, b, b_bar, c, c_bar, s1, s1_bar, …, sk, sk_bar`.
pub fn gen_lower_bound(k: u32, eta: &Rational) -> Result<(Game, SkewSymmetryWitness)> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let limit = ratio(1, 4 * k as i64 + 4);
    if !eta.is_positive() || eta >= &limit {
        return Err(Error::InvalidArgument(format!(
            "eta must lie in (0, {}), got {}",
            rational::format_rational(&limit),
            rational::format_rational(eta)
        )));
    }
    let chain = |y: u32, bar: bool| {
        if y == 0 {
            "a".to_string()
        } else if bar {
            format!("s{y}_bar")
        } else {
            format!("s{y}")
        }
    };
    let mut names: Vec<String> = ["a", "b", "b_bar", "c", "c_bar"].iter().map(|s| s.to_string()).collect();
    for y in 1..=k {
        names.push(chain(y, false));
        names.push(chain(y, true));
    }
    let mut builder = GameBuilder::new();
    for s in &names {
        if s == "c" || s == "c_bar" {
            builder.state(s.as_str(), &["i1", "i2"], &["j1", "j2"]);
        } else {
            builder.state(s.as_str(), &["i"], &["j"]);
        }
    }
    let half = ratio(1, 2);
    let quarter = ratio(1, 4);
    let spread = ratio(1, 4 * k as i64 + 4);
    let from_a: Vec<(&str, Rational)> = names[1..]
        .iter()
        .map(|s| {
            let p = if s == "c" || s == "c_bar" { quarter.clone() } else { spread.clone() };
            (s.as_str(), p)
        })
        .collect();
    builder
        .transition("a", "i", "j", half, &from_a)
        .transition("b", "i", "j", int(0), &[("a", int(1))])
        .transition("b_bar", "i", "j", int(1), &[("a", int(1))])
        .transition("c", "i1", "j1", int(0), &[("b_bar", int(1))])
        .transition("c", "i2", "j2", int(0), &[("b_bar", int(1))])
        .transition("c", "i1", "j2", int(0), &[("b", int(1))])
        .transition("c", "i2", "j1", int(0), &[(chain(k, false).as_str(), int(1))])
        .transition("c_bar", "i1", "j1", int(1), &[("b", int(1))])
        .transition("c_bar", "i2", "j2", int(1), &[("b", int(1))])
        .transition("c_bar", "i2", "j1", int(1), &[("b_bar", int(1))])
        .transition("c_bar", "i1", "j2", int(1), &[(chain(k, true).as_str(), int(1))]);
    let stay = int(1) - eta;
    for y in 1..=k {
        for bar in [false, true] {
            let from = chain(y, bar);
            let top = chain(k, bar);
            let down = chain(y - 1, bar);
            let reward = if bar { int(1) } else { int(0) };
            builder.transition(&from, "i", "j", reward, &[(top.as_str(), stay.clone()), (down.as_str(), eta.clone())]);
        }
    }
    builder.reward_scale(int(1));
    let game = builder.build()?;
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let state_map = names
        .iter()
        .map(|s| {
            let partner = match s.as_str() {
                "a" => "a".to_string(),
                x if x.ends_with("_bar") => x.trim_end_matches("_bar").to_string(),
                x => format!("{x}_bar"),
            };
            index[partner.as_str()]
        })
        .collect();
    let witness = identity_action_witness(&game, state_map);
    Ok((game, witness))
}

/// `p = 2 η^{k/2}`.
pub fn lower_bound_p(k: u32, eta: &Rational) -> f64 {
    2.0 * rational::to_f64(eta).powf(k as f64 / 2.0)
}

/// Player-1 strategy playing `i2` with probability `p` at `c` and `1 − p`
/// at `c_bar`; exact when `k` is even.
pub fn lower_bound_sigma_star(g: &Game, k: u32, eta: &Rational) -> Result<StationaryStrategy> {
    let c = g.state_index("c")?;
    let cb = g.state_index("c_bar")?;
    let n = g.num_states();
    if k.is_multiple_of(2) {
        let p = int(2) * rational::powi(eta, (k / 2) as i64);
        let probs = (0..n)
            .map(|s| {
                if s == c {
                    vec![int(1) - &p, p.clone()]
                } else if s == cb {
                    vec![p.clone(), int(1) - &p]
                } else {
                    vec![int(1)]
                }
            })
            .collect();
        StationaryStrategy::new(g, Player::One, StrategyProbs::Exact(probs))
    } else {
        let p = lower_bound_p(k, eta);
        let probs = (0..n)
            .map(|s| {
                if s == c {
                    vec![1.0 - p, p]
                } else if s == cb {
                    vec![p, 1.0 - p]
                } else {
                    vec![1.0]
                }
            })
            .collect();
        StationaryStrategy::new(g, Player::One, StrategyProbs::Float(probs))
    }
}

/// Structure of a validated simple stochastic game.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ssg {
    pub top: usize,
    pub bottom: usize,
    pub nonterminals: Vec<usize>,
}

/// Checks the SSG shape: turn-based, probabilities in {1/2, 1}, exactly two
/// absorbing terminals with constant rewards 1 and 0, and stopping.
pub fn validate_ssg(g: &Game) -> Result<Ssg> {
    let n = g.num_states();
    let half = ratio(1, 2);
    let mut top = None;
    let mut bottom = None;
    let mut nonterminals = Vec::new();
    for s in 0..n {
        let name = g.state_name(s);
        if g.actions1(s).len() > 1 && g.actions2(s).len() > 1 {
            return Err(Error::NotSsg(format!("both players choose at `{name}`")));
        }
        for (_, _, t) in g.pairs(s) {
            if t.successors.iter().any(|(_, p)| !p.is_one() && p != &half) {
                return Err(Error::NotSsg(format!("probability other than 1/2 or 1 at `{name}`")));
            }
        }
        let absorbing = g.pairs(s).all(|(_, _, t)| t.successors.len() == 1 && t.successors[0].0 == s);
        if !absorbing {
            nonterminals.push(s);
            continue;
        }
        let rewards: Vec<&Rational> = g.pairs(s).map(|(_, _, t)| &t.reward).collect();
        let slot = if rewards.iter().all(|r| r.is_one()) {
            &mut top
        } else if rewards.iter().all(|r| r.is_zero()) {
            &mut bottom
        } else {
            return Err(Error::NotSsg(format!("absorbing state `{name}` is neither a 1- nor a 0-terminal")));
        };
        if slot.replace(s).is_some() {
            return Err(Error::NotSsg("more than two terminals".into()));
        }
    }
    let (Some(top), Some(bottom)) = (top, bottom) else {
        return Err(Error::NotSsg("need one 1-terminal and one 0-terminal".into()));
    };
    let mut allowed = vec![true; n];
    allowed[top] = false;
    allowed[bottom] = false;
    let trap = classify::find_trap(g, &allowed);
    if !trap.is_empty() {
        return Err(Error::NotSsg(format!("not stopping: the play can stay in `{}` forever", g.state_name(trap[0]))));
    }
    Ok(Ssg { top, bottom, nonterminals })
}

/// Ergodic game whose value approximates the SSG value of `s`.
///
/// Terminals leak to a fresh state `s'` with probability `2^-alpha`; `s'`
/// returns to `s` with probability `1 − 2^-beta` and otherwise spreads
/// uniformly over the remaining original states. All other rewards are 0.
pub fn reduce_ssg(g: &Game, s: usize, alpha: u32, beta: u32) -> Result<Game> {
    let ssg = validate_ssg(g)?;
    if s >= g.num_states() {
        return Err(Error::InvalidArgument(format!("state index {s} out of range")));
    }
    if alpha == 0 || beta == 0 {
        return Err(Error::InvalidArgument("exponents must be positive".into()));
    }
    let names = g.state_names();
    let mut fresh = format!("{}'", names[s]);
    while names.contains(&fresh) {
        fresh.push('\'');
    }
    let mut b = GameBuilder::new();
    for u in 0..g.num_states() {
        b.state_owned(names[u].clone(), g.actions1(u).to_vec(), g.actions2(u).to_vec());
    }
    b.state(fresh.as_str(), &["a"], &["b"]);
    let leak = rational::two_pow_neg(alpha);
    for u in 0..g.num_states() {
        for (i, j, t) in g.pairs(u) {
            let (reward, succ) = if u == ssg.top || u == ssg.bottom {
                let r = if u == ssg.top { int(1) } else { int(0) };
                (r, vec![(names[u].clone(), int(1) - &leak), (fresh.clone(), leak.clone())])
            } else {
                (int(0), t.successors.iter().map(|(x, p)| (names[*x].clone(), p.clone())).collect())
            };
            b.transition_owned(names[u].clone(), g.actions1(u)[i].clone(), g.actions2(u)[j].clone(), reward, succ);
        }
    }
    let restart = rational::two_pow_neg(beta);
    let others: Vec<usize> = (0..g.num_states()).filter(|&u| u != s).collect();
    let each = &restart / Rational::from_integer(BigInt::from(others.len()));
    let mut succ = vec![(names[s].clone(), int(1) - &restart)];
    succ.extend(others.iter().map(|&u| (names[u].clone(), each.clone())));
    b.transition_owned(fresh, "a".into(), "b".into(), int(0), succ);
    b.reward_scale(int(1));
    b.build()
}

/// Interval guaranteed to contain the reduced game's value, for SSG value
/// `v` at `n` non-terminals. With `alpha = 9n, beta = 7n` this is
/// `[v − 2^{−7n+1}, v + 2^{−7n+1}]`; otherwise the same argument gives
/// `[v (1 − 2^−β) 2^α / (n 2^n + 2^α + 1), (1 − 2^−β) v + 2^−β]`.
pub fn reduction_interval(v: f64, n: u32, alpha: u32, beta: u32) -> (f64, f64) {
    if alpha == 9 * n && beta == 7 * n {
        let r = 2f64.powi(-(7 * n as i32) + 1);
        return (v - r, v + r);
    }
    let a = 2f64.powi(alpha as i32);
    let bb = 2f64.powi(-(beta as i32));
    let lo = v * (1.0 - bb) * a / (n as f64 * 2f64.powi(n as i32) + a + 1.0);
    let hi = (1.0 - bb) * v + bb;
    (lo, hi)
}

/// Largest `p/q ≤ a` with `q ≤ b`, for the unknown `a ∈ [0, 1]` behind
/// `oracle(x) = [a ≥ x]`. Walks the Stern–Brocot tree, covering each run
/// of equal turns by galloping then bisection, and caches every answer.
/// Returns the fraction and the number of oracle calls.
pub fn kwek_mehlhorn(mut oracle: impl FnMut(&Rational) -> bool, b: u64) -> Result<(Rational, u64)> {
    if b == 0 {
        return Err(Error::InvalidArgument("b must be positive".into()));
    }
    let b = b as u128;
    let mut cache: HashMap<(u128, u128), bool> = HashMap::new();
    let mut calls = 0u64;
    let mut accepted = (0u128, 1u128);
    let mut rejected: Option<(u128, u128)> = None;
    let mut ask = |p: u128, q: u128| -> Result<bool> {
        if let Some(&ans) = cache.get(&(p, q)) {
            return Ok(ans);
        }
        calls += 1;
        let x = Rational::new(BigInt::from(p), BigInt::from(q));
        let ans = oracle(&x);
        let fmt = |(p, q): (u128, u128)| format!("{p}/{q}");
        let below_accepted = p * accepted.1 <= accepted.0 * q;
        let above_rejected = rejected.is_some_and(|(rp, rq)| p * rq >= rp * q);
        if ans && above_rejected {
            return Err(Error::InconsistentOracle { accepted: fmt((p, q)), rejected: fmt(rejected.unwrap()) });
        }
        if !ans && below_accepted {
            return Err(Error::InconsistentOracle { accepted: fmt(accepted), rejected: fmt((p, q)) });
        }
        if ans {
            if p * accepted.1 > accepted.0 * q {
                accepted = (p, q);
            }
        } else if rejected.is_none_or(|(rp, rq)| p * rq < rp * q) {
            rejected = Some((p, q));
        }
        cache.insert((p, q), ans);
        Ok(ans)
    };
    if ask(1, 1)? {
        return Ok((int(1), 1));
    }
    let (mut lo, mut hi) = ((0u128, 1u128), (1u128, 1u128));
    // Direction of the next run: `true` moves `lo` toward `hi`.
    let mut right = None;
    loop {
        if lo.1 + hi.1 > b {
            break;
        }
        let dir = match right {
            Some(d) => d,
            None => ask(lo.0 + hi.0, lo.1 + hi.1)?,
        };
        // Fraction reached after `t` steps of the current run, and whether
        // the oracle answer keeps the run going.
        let step = |t: u128| {
            if dir {
                (lo.0 + t * hi.0, lo.1 + t * hi.1)
            } else {
                (t * lo.0 + hi.0, t * lo.1 + hi.1)
            }
        };
        let cap = if dir { (b - lo.1) / hi.1 } else { (b - hi.1) / lo.1 };
        let mut good = 1u128;
        let mut bad: Option<u128> = None;
        while good < cap {
            let t = (good * 2).min(cap);
            let f = step(t);
            if ask(f.0, f.1)? == dir {
                good = t;
            } else {
                bad = Some(t);
                break;
            }
        }
        if let Some(mut hi_t) = bad {
            while hi_t - good > 1 {
                let mid = good + (hi_t - good) / 2;
                let f = step(mid);
                if ask(f.0, f.1)? == dir {
                    good = mid;
                } else {
                    hi_t = mid;
                }
            }
        }
        let f = step(good);
        if dir {
            lo = f;
        } else {
            hi = f;
        }
        // Step `good + 1` failed (or is out of range), so the next run turns.
        right = Some(!dir);
    }
    // Tree queries never leave the current bracket, so any answer sequence
    // looks monotone; re-asking the final ends exposes an oracle that changed.
    let fmt = |(p, q): (u128, u128)| format!("{p}/{q}");
    let frac = |(p, q): (u128, u128)| Rational::new(BigInt::from(p), BigInt::from(q));
    if lo.0 != 0 {
        calls += 1;
        if !oracle(&frac(lo)) {
            return Err(Error::InconsistentOracle { accepted: fmt(lo), rejected: fmt(lo) });
        }
    }
    calls += 1;
    if oracle(&frac(hi)) {
        return Err(Error::InconsistentOracle { accepted: fmt(hi), rejected: fmt(hi) });
    }
    Ok((frac(lo), calls))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{classify, Verdict};
    use crate::game::compute_stats;

    #[test]
    fn sqrt_game_shapes() {
        let g = gen_sqrt_game(3).unwrap();
        let st = compute_stats(&g);
        assert_eq!((st.n, st.m, st.r, st.delta_min.clone()), (2, 2, 1, ratio(1, 2)));
        assert_eq!(g.reward_scale(), &int(2));
        assert_eq!(g.transition(0, 0, 1).reward, int(1));
        let g2 = gen_sqrt_game(2).unwrap();
        assert_eq!(g2.transition(0, 0, 0).successors[0].1, ratio(2, 9));
        let g5 = gen_sqrt_game(5).unwrap();
        assert_eq!(g5.transition(0, 0, 0).successors[0].1, ratio(8, 9));
        assert_eq!(gen_sqrt_game(4).unwrap().num_states(), 1);
        assert!(gen_sqrt_game(0).is_err());
        assert!((sqrt_game_optimal_p(3).unwrap() - (4.0 - 2.0 * 3f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn sqrt_identity_holds_exactly() {
        for b in (3..60u64).filter(|b| *b != 4) {
            let (k, d) = sqrt_game_params(b).unwrap().unwrap();
            assert_eq!(&k * &k - &d * &k / int(2), int(b as i64), "b = {b}");
            assert!(k > d && d.is_positive());
        }
    }

    #[test]
    fn sqrt_sum_classifies_sure_ergodic() {
        let g = gen_sqrt_sum(&[2, 3], SqrtEntry::U).unwrap();
        let c = classify(&g);
        assert_eq!(c.verdict, Verdict::SureErgodic);
        assert_eq!(c.components.len(), 2);
        assert!(c.component_of(0).is_none());
    }

    #[test]
    fn lower_bound_family() {
        let (g, w) = gen_lower_bound(2, &ratio(1, 16)).unwrap();
        let st = compute_stats(&g);
        assert_eq!((st.n, st.m, st.r, st.delta_min), (9, 2, 5, ratio(1, 16)));
        assert!(check_skew_symmetric(&g, &w).unwrap().holds());
        assert_eq!(classify(&g).verdict, Verdict::Ergodic);
        assert!(gen_lower_bound(2, &ratio(1, 12)).is_err());
        let (g3, _) = gen_lower_bound(3, &ratio(1, 20)).unwrap();
        assert_eq!(g3.num_states(), 11);
        assert_eq!(compute_stats(&g3).delta_min, ratio(1, 20));
        assert_eq!(1.0 / lower_bound_p(2, &ratio(1, 16)), 8.0);
    }

    #[test]
    fn witness_round_trip_and_failures() {
        let (g, w) = gen_lower_bound(2, &ratio(1, 16)).unwrap();
        assert_eq!(SkewSymmetryWitness::from_json(&g, &w.to_json(&g)).unwrap(), w);
        let g3 = gen_sqrt_game(3).unwrap();
        let id = identity_action_witness(&g3, vec![0, 1]);
        assert_eq!(check_skew_symmetric(&g3, &id).unwrap(), SkewCheck::Violated { condition: 1, detail: "(u, a1, b1)".into() });
        let broken = identity_action_witness(&g3, vec![1, 1]);
        assert!(check_skew_symmetric(&g3, &broken).is_err());
    }

    fn coin_ssg(to_top: bool) -> Game {
        let mut b = GameBuilder::new();
        b.state("s", &["a"], &["b"]).state("top", &["a"], &["b"]).state("bot", &["a"], &["b"]);
        if to_top {
            b.transition("s", "a", "b", int(0), &[("top", int(1))]);
        } else {
            b.transition("s", "a", "b", int(0), &[("top", ratio(1, 2)), ("bot", ratio(1, 2))]);
        }
        b.transition("top", "a", "b", int(1), &[("top", int(1))])
            .transition("bot", "a", "b", int(0), &[("bot", int(1))])
            .reward_scale(int(1));
        b.build().unwrap()
    }

    #[test]
    fn reduction_is_ergodic() {
        let g = coin_ssg(false);
        assert_eq!(validate_ssg(&g).unwrap(), Ssg { top: 1, bottom: 2, nonterminals: vec![0] });
        for (a, b) in [(9, 7), (1, 1), (4, 2)] {
            let r = reduce_ssg(&g, 0, a, b).unwrap();
            assert_eq!(r.num_states(), 4);
            assert_eq!(classify(&r).verdict, Verdict::Ergodic);
        }
        assert!(validate_ssg(&gen_sqrt_game(3).unwrap()).is_err());
        let (lo, hi) = reduction_interval(0.5, 1, 9, 7);
        assert_eq!((lo, hi), (0.5 - 1.0 / 64.0, 0.5 + 1.0 / 64.0));
    }

    fn search(a: f64, b: u64) -> (Rational, u64) {
        kwek_mehlhorn(|x| a >= rational::to_f64(x), b).unwrap()
    }

    #[test]
    fn reconstruction_examples() {
        assert_eq!(search(1.0 / 3.0 + 1e-15, 4).0, ratio(1, 3));
        let (r, _) = kwek_mehlhorn(|x| x <= &ratio(7, 10), 10).unwrap();
        assert_eq!(r, ratio(7, 10));
        let a = 2f64.sqrt() / 2.0;
        let (r, calls) = search(a, 100);
        assert_eq!(r, ratio(70, 99));
        assert!(calls <= 4 * 7 + 4);
        assert_eq!(search(1.0, 5).0, int(1));
        assert_eq!(search(0.0, 5).0, int(0));
    }

    #[test]
    fn inconsistent_oracle_is_detected() {
        let mut calls = 0;
        let r = kwek_mehlhorn(
            |x| {
                calls += 1;
                let a = if calls <= 3 { 0.7 } else { 0.3 };
                a >= rational::to_f64(x)
            },
            50,
        );
        assert!(matches!(r, Err(Error::InconsistentOracle { .. })));
    }

    #[test]
    fn reconstruction_matches_brute_force() {
        for den in 1..=24i64 {
            for num in 0..=den {
                let a = ratio(num, den);
                for b in 1..=40u64 {
                    let (r, calls) = kwek_mehlhorn(|x| &a >= x, b).unwrap();
                    let best = (1..=b as i64)
                        .map(|q| Rational::new(BigInt::from(num * q / den), BigInt::from(q)))
                        .max()
                        .unwrap();
                    assert_eq!(r, best, "a = {a}, b = {b}");
                    assert!(&a - &r < ratio(1, b as i64));
                    let log = 64 - (b - 1).leading_zeros() as u64;
                    assert!(calls <= 4 * log + 4, "a = {a}, b = {b}: {calls} calls");
                }
            }
        }
    }
}
