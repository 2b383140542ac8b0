//! The concurrent game model.
//!
//! States and actions carry string identifiers in files and outputs but are
//! addressed by dense indices everywhere else. Probabilities and rewards are
//! stored exactly; a float mirror of every transition is kept for the
//! iterative solvers.

use std::collections::HashMap;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

/// One entry of the transition table: reward and successor distribution for
/// a fixed `(state, a1, a2)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub reward: Rational,
    /// Support of the successor distribution, sorted by state index, with
    /// strictly positive probabilities summing to one.
    pub successors: Vec<(usize, Rational)>,
}

/// Float copy of a [`Transition`] used in the numeric inner loops.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatTransition {
    pub reward: f64,
    pub successors: Vec<(usize, f64)>,
}

impl FloatTransition {
    /// `Σ δ(s') · values[s']`.
    #[inline]
    pub fn expect(&self, values: &[f64]) -> f64 {
        self.successors.iter().map(|&(t, p)| p * values[t]).sum()
    }
}

/// A finite concurrent mean-payoff game.
#[derive(Clone, Debug)]
pub struct Game {
    states: Vec<String>,
    actions1: Vec<Vec<String>>,
    actions2: Vec<Vec<String>>,
    /// `table[s][a1][a2]`
    table: Vec<Vec<Vec<Transition>>>,
    reward_scale: Rational,
    float_table: Vec<Vec<Vec<FloatTransition>>>,
    index: HashMap<String, usize>,
}

impl PartialEq for Game {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states
            && self.actions1 == other.actions1
            && self.actions2 == other.actions2
            && self.table == other.table
            && self.reward_scale == other.reward_scale
    }
}

/// `(from, a1, a2, reward, successors)` as given to the builder.
type Entry = (String, String, String, Rational, Vec<(String, Rational)>);

/// Incremental constructor; [`GameBuilder::build`] validates every invariant.
#[derive(Clone, Debug, Default)]
pub struct GameBuilder {
    states: Vec<String>,
    actions1: Vec<Vec<String>>,
    actions2: Vec<Vec<String>>,
    entries: Vec<Entry>,
    reward_scale: Option<Rational>,
}

impl GameBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state<S: Into<String>>(&mut self, name: S, actions1: &[&str], actions2: &[&str]) -> &mut Self {
        self.states.push(name.into());
        self.actions1.push(actions1.iter().map(|a| a.to_string()).collect());
        self.actions2.push(actions2.iter().map(|a| a.to_string()).collect());
        self
    }

    pub fn state_owned(&mut self, name: String, actions1: Vec<String>, actions2: Vec<String>) -> &mut Self {
        self.states.push(name);
        self.actions1.push(actions1);
        self.actions2.push(actions2);
        self
    }

    pub fn transition(
        &mut self,
        from: &str,
        a1: &str,
        a2: &str,
        reward: Rational,
        successors: &[(&str, Rational)],
    ) -> &mut Self {
        self.entries.push((
            from.to_string(),
            a1.to_string(),
            a2.to_string(),
            reward,
            successors.iter().map(|(s, p)| (s.to_string(), p.clone())).collect(),
        ));
        self
    }

    pub fn transition_owned(
        &mut self,
        from: String,
        a1: String,
        a2: String,
        reward: Rational,
        successors: Vec<(String, Rational)>,
    ) -> &mut Self {
        self.entries.push((from, a1, a2, reward, successors));
        self
    }

    pub fn reward_scale(&mut self, w: Rational) -> &mut Self {
        self.reward_scale = Some(w);
        self
    }

    pub fn build(&self) -> Result<Game> {
        let sem = |msg: String| Error::Semantic(msg);
        if self.states.is_empty() {
            return Err(sem("game has no states".into()));
        }
        let mut index = HashMap::new();
        for (i, s) in self.states.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(sem(format!("duplicate state `{s}`")));
            }
        }
        for (i, s) in self.states.iter().enumerate() {
            for (player, acts) in [(1, &self.actions1[i]), (2, &self.actions2[i])] {
                if acts.is_empty() {
                    return Err(sem(format!("state `{s}` has no actions for player {player}")));
                }
                let mut seen = std::collections::HashSet::new();
                for a in acts {
                    if !seen.insert(a) {
                        return Err(sem(format!("duplicate action `{a}` for player {player} at `{s}`")));
                    }
                }
            }
        }
        let w = self
            .reward_scale
            .clone()
            .ok_or_else(|| sem("missing reward_scale".into()))?;
        if !w.is_positive() {
            return Err(sem(format!("reward_scale must be positive, got {}", rational::format_rational(&w))));
        }

        let mut slots: Vec<Vec<Vec<Option<Transition>>>> = self
            .states
            .iter()
            .enumerate()
            .map(|(i, _)| vec![vec![None; self.actions2[i].len()]; self.actions1[i].len()])
            .collect();

        for (from, a1, a2, reward, succ) in &self.entries {
            let s = *index
                .get(from)
                .ok_or_else(|| sem(format!("transition from undeclared state `{from}`")))?;
            let i = self.actions1[s]
                .iter()
                .position(|a| a == a1)
                .ok_or_else(|| sem(format!("action `{a1}` not declared for player 1 at `{from}`")))?;
            let j = self.actions2[s]
                .iter()
                .position(|a| a == a2)
                .ok_or_else(|| sem(format!("action `{a2}` not declared for player 2 at `{from}`")))?;
            let here = format!("({from}, {a1}, {a2})");
            if slots[s][i][j].is_some() {
                return Err(sem(format!("duplicate transition {here}")));
            }
            if reward.is_negative() || reward > &w {
                return Err(sem(format!(
                    "reward {} at {here} outside [0, {}]",
                    rational::format_rational(reward),
                    rational::format_rational(&w)
                )));
            }
            let mut dist: Vec<(usize, Rational)> = Vec::with_capacity(succ.len());
            let mut total = Rational::zero();
            for (t, p) in succ {
                let ti = *index
                    .get(t)
                    .ok_or_else(|| sem(format!("successor `{t}` of {here} is not a declared state")))?;
                if p.is_negative() {
                    return Err(sem(format!("negative probability to `{t}` at {here}")));
                }
                if dist.iter().any(|(u, _)| *u == ti) {
                    return Err(sem(format!("successor `{t}` listed twice at {here}")));
                }
                total += p;
                if p.is_positive() {
                    dist.push((ti, p.clone()));
                }
            }
            if !total.is_one() {
                return Err(sem(format!(
                    "distribution at {here} sums to {}, expected 1",
                    rational::format_rational(&total)
                )));
            }
            dist.sort_by_key(|(t, _)| *t);
            slots[s][i][j] = Some(Transition {
                reward: reward.clone(),
                successors: dist,
            });
        }

        let mut table = Vec::with_capacity(slots.len());
        for (s, rows) in slots.into_iter().enumerate() {
            let mut out_rows = Vec::with_capacity(rows.len());
            for (i, row) in rows.into_iter().enumerate() {
                let mut out = Vec::with_capacity(row.len());
                for (j, cell) in row.into_iter().enumerate() {
                    out.push(cell.ok_or_else(|| {
                        sem(format!(
                            "missing transition for ({}, {}, {})",
                            self.states[s], self.actions1[s][i], self.actions2[s][j]
                        ))
                    })?);
                }
                out_rows.push(out);
            }
            table.push(out_rows);
        }
        Ok(Game::from_parts(
            self.states.clone(),
            self.actions1.clone(),
            self.actions2.clone(),
            table,
            w,
            index,
        ))
    }
}

impl Game {
    fn from_parts(
        states: Vec<String>,
        actions1: Vec<Vec<String>>,
        actions2: Vec<Vec<String>>,
        table: Vec<Vec<Vec<Transition>>>,
        reward_scale: Rational,
        index: HashMap<String, usize>,
    ) -> Self {
        let float_table = table
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|row| {
                        row.iter()
                            .map(|t| FloatTransition {
                                reward: rational::to_f64(&t.reward),
                                successors: t
                                    .successors
                                    .iter()
                                    .map(|(s, p)| (*s, rational::to_f64(p)))
                                    .collect(),
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Game {
            states,
            actions1,
            actions2,
            table,
            reward_scale,
            float_table,
            index,
        }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn state_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownState(name.to_string()))
    }

    pub fn actions(&self, player: Player, s: usize) -> &[String] {
        match player {
            Player::One => &self.actions1[s],
            Player::Two => &self.actions2[s],
        }
    }

    pub fn actions1(&self, s: usize) -> &[String] {
        &self.actions1[s]
    }

    pub fn actions2(&self, s: usize) -> &[String] {
        &self.actions2[s]
    }

    pub fn action_index(&self, player: Player, s: usize, name: &str) -> Result<usize> {
        self.actions(player, s)
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| Error::UnknownAction {
                state: self.states[s].clone(),
                action: name.to_string(),
            })
    }

    pub fn transition(&self, s: usize, a1: usize, a2: usize) -> &Transition {
        &self.table[s][a1][a2]
    }

    pub fn float_transition(&self, s: usize, a1: usize, a2: usize) -> &FloatTransition {
        &self.float_table[s][a1][a2]
    }

    pub fn reward_scale(&self) -> &Rational {
        &self.reward_scale
    }

    pub fn reward_scale_f64(&self) -> f64 {
        rational::to_f64(&self.reward_scale)
    }

    /// Iterates `(a1, a2, transition)` at state `s`.
    pub fn pairs(&self, s: usize) -> impl Iterator<Item = (usize, usize, &Transition)> {
        self.table[s]
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, t)| (i, j, t)))
    }

    /// Copy of the game with the given states only. Every transition out of
    /// the subset must stay inside it.
    pub fn restrict(&self, subset: &[usize]) -> Result<Game> {
        let mut b = GameBuilder::new();
        let inside: std::collections::HashSet<usize> = subset.iter().copied().collect();
        for &s in subset {
            b.state_owned(self.states[s].clone(), self.actions1[s].clone(), self.actions2[s].clone());
        }
        for &s in subset {
            for (i, j, t) in self.pairs(s) {
                if let Some((out, _)) = t.successors.iter().find(|(u, _)| !inside.contains(u)) {
                    return Err(Error::InvalidArgument(format!(
                        "state subset is not closed: ({}, {}, {}) reaches `{}`",
                        self.states[s], self.actions1[s][i], self.actions2[s][j], self.states[*out]
                    )));
                }
                b.transition_owned(
                    self.states[s].clone(),
                    self.actions1[s][i].clone(),
                    self.actions2[s][j].clone(),
                    t.reward.clone(),
                    t.successors
                        .iter()
                        .map(|(u, p)| (self.states[*u].clone(), p.clone()))
                        .collect(),
                );
            }
        }
        b.reward_scale(self.reward_scale.clone());
        b.build()
    }

    /// `ExpRew(s, d1, d2) = Σ R(s,a1,a2)·d1(a1)·d2(a2)`.
    pub fn expected_reward(&self, s: usize, d1: &[f64], d2: &[f64]) -> Result<f64> {
        if d1.len() != self.actions1[s].len() || d2.len() != self.actions2[s].len() {
            return Err(Error::InvalidStrategy(format!(
                "distribution sizes ({}, {}) do not match the action sets at `{}` ({}, {})",
                d1.len(),
                d2.len(),
                self.states[s],
                self.actions1[s].len(),
                self.actions2[s].len()
            )));
        }
        let mut total = 0.0;
        for (i, p) in d1.iter().enumerate() {
            for (j, q) in d2.iter().enumerate() {
                total += self.float_table[s][i][j].reward * p * q;
            }
        }
        Ok(total)
    }
}

/// Basic size parameters of a game.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GameStats {
    /// Number of states.
    pub n: usize,
    /// Maximum number of actions of either player at any state.
    pub m: usize,
    /// Number of random states (some action pair has support of size >= 2).
    pub r: usize,
    /// Smallest positive transition probability.
    #[serde(with = "rational::serde_text")]
    pub delta_min: Rational,
}

pub fn compute_stats(game: &Game) -> GameStats {
    let n = game.num_states();
    let mut m = 1;
    let mut r = 0;
    let mut delta_min = Rational::one();
    for s in 0..n {
        m = m.max(game.actions1[s].len()).max(game.actions2[s].len());
        let mut random = false;
        for (_, _, t) in game.pairs(s) {
            random |= t.successors.len() >= 2;
            for (_, p) in &t.successors {
                if p < &delta_min {
                    delta_min = p.clone();
                }
            }
        }
        r += random as usize;
    }
    GameStats { n, m, r, delta_min }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
pub enum Player {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Player {
    pub fn number(self) -> u8 {
        match self {
            Player::One => 1,
            Player::Two => 2,
        }
    }
}

/// Per-state action probabilities, tagged exact or float.
#[derive(Clone, Debug, PartialEq)]
pub enum StrategyProbs {
    Exact(Vec<Vec<Rational>>),
    Float(Vec<Vec<f64>>),
}

/// A memoryless strategy: one distribution over the player's actions per state.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryStrategy {
    player: Player,
    probs: StrategyProbs,
    float: Vec<Vec<f64>>,
}

const FLOAT_SUM_TOL: f64 = 1e-12;

impl StationaryStrategy {
    pub fn new(game: &Game, player: Player, probs: StrategyProbs) -> Result<Self> {
        let n = game.num_states();
        let len = match &probs {
            StrategyProbs::Exact(v) => v.len(),
            StrategyProbs::Float(v) => v.len(),
        };
        if len != n {
            return Err(Error::InvalidStrategy(format!("expected {n} state distributions, got {len}")));
        }
        let float: Vec<Vec<f64>> = match &probs {
            StrategyProbs::Exact(v) => v.iter().map(|d| d.iter().map(rational::to_f64).collect()).collect(),
            StrategyProbs::Float(v) => v.clone(),
        };
        for s in 0..n {
            let k = game.actions(player, s).len();
            let name = game.state_name(s);
            if float[s].len() != k {
                return Err(Error::InvalidStrategy(format!(
                    "state `{name}`: {} probabilities for {k} actions",
                    float[s].len()
                )));
            }
            match &probs {
                StrategyProbs::Exact(v) => {
                    if v[s].iter().any(|p| p.is_negative()) {
                        return Err(Error::InvalidStrategy(format!("state `{name}`: negative probability")));
                    }
                    let total: Rational = v[s].iter().sum();
                    if !total.is_one() {
                        return Err(Error::InvalidStrategy(format!(
                            "state `{name}`: probabilities sum to {}",
                            rational::format_rational(&total)
                        )));
                    }
                }
                StrategyProbs::Float(v) => {
                    if v[s].iter().any(|p| !p.is_finite() || *p < 0.0) {
                        return Err(Error::InvalidStrategy(format!("state `{name}`: invalid probability")));
                    }
                    let total: f64 = v[s].iter().sum();
                    if (total - 1.0).abs() > FLOAT_SUM_TOL {
                        return Err(Error::InvalidStrategy(format!(
                            "state `{name}`: probabilities sum to {total}"
                        )));
                    }
                }
            }
        }
        Ok(StationaryStrategy { player, probs, float })
    }

    /// Deterministic strategy choosing `choice[s]` at every state.
    pub fn positional(game: &Game, player: Player, choice: &[usize]) -> Result<Self> {
        let probs = (0..game.num_states())
            .map(|s| {
                let k = game.actions(player, s).len();
                let c = *choice.get(s).ok_or_else(|| Error::InvalidStrategy("choice vector too short".into()))?;
                if c >= k {
                    return Err(Error::InvalidStrategy(format!(
                        "action index {c} out of range at `{}`",
                        game.state_name(s)
                    )));
                }
                Ok((0..k).map(|a| if a == c { Rational::one() } else { Rational::zero() }).collect())
            })
            .collect::<Result<Vec<Vec<Rational>>>>()?;
        Self::new(game, player, StrategyProbs::Exact(probs))
    }

    pub fn uniform(game: &Game, player: Player) -> Self {
        let probs = (0..game.num_states())
            .map(|s| {
                let k = game.actions(player, s).len();
                vec![rational::ratio(1, k as i64); k]
            })
            .collect();
        Self::new(game, player, StrategyProbs::Exact(probs)).expect("uniform strategy is valid")
    }

    pub fn player(&self) -> Player {
        self.player
    }

    pub fn probs(&self) -> &StrategyProbs {
        &self.probs
    }

    /// Float view of the distribution at `s`.
    pub fn at(&self, s: usize) -> &[f64] {
        &self.float[s]
    }

    pub fn exact_at(&self, s: usize) -> Option<&[Rational]> {
        match &self.probs {
            StrategyProbs::Exact(v) => Some(&v[s]),
            StrategyProbs::Float(_) => None,
        }
    }

    pub fn num_states(&self) -> usize {
        self.float.len()
    }

    /// Returns the chosen action per state if every distribution is a point mass.
    pub fn as_positional(&self) -> Option<Vec<usize>> {
        self.float
            .iter()
            .map(|d| {
                let support: Vec<usize> = d.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(a, _)| a).collect();
                (support.len() == 1).then(|| support[0])
            })
            .collect()
    }

    /// True when every probability is an integer multiple of `1/q`.
    pub fn is_q_rounded(&self, q: u64) -> bool {
        match &self.probs {
            StrategyProbs::Exact(v) => {
                let q = Rational::from_integer(q.into());
                v.iter().flatten().all(|p| (p * &q).is_integer())
            }
            StrategyProbs::Float(v) => v.iter().flatten().all(|p| {
                let scaled = p * q as f64;
                (scaled - scaled.round()).abs() < 1e-9
            }),
        }
    }
}

/// Largest inverse of a positive action probability; 1 for positional strategies.
pub fn patience(sigma: &StationaryStrategy) -> f64 {
    match &sigma.probs {
        StrategyProbs::Exact(v) => v
            .iter()
            .flatten()
            .filter(|p| p.is_positive())
            .map(|p| rational::to_f64(&p.recip()))
            .fold(1.0, f64::max),
        StrategyProbs::Float(v) => v
            .iter()
            .flatten()
            .filter(|p| **p > 0.0)
            .map(|p| 1.0 / p)
            .fold(1.0, f64::max),
    }
}
