//! Value iteration with its step bound, the q-rounded strategy iteration,
//! profile evaluation and hitting times.
//!
//! Value iteration works on rewards divided by the reward scale W and
//! reports values multiplied back; strategy iteration is scale-free and runs
//! on the rewards as given.

use std::collections::VecDeque;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{compute_stats, Game, GameStats, Player, StationaryStrategy, StrategyProbs};
use crate::matrix::{self, best_q_rounded, round_distribution, MatrixGame, QRoundedDistribution};
use crate::mdp::{self, best_response_potentials, chain_gain_bias, PotentialSolution};
use crate::rational::{self, Rational};

/// Tolerances and caps shared by the solvers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Relative tolerance of matrix-game comparisons.
    pub lp_tol: f64,
    /// Accepted residual of the best-response equations.
    pub residual_tol: f64,
    pub si_cap: u64,
    pub node_budget: u64,
    /// Policy-iteration cap; `None` means `10 · n · m`.
    pub pi_cap: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lp_tol: 1e-9,
            residual_tol: 1e-8,
            si_cap: 1_000_000,
            node_budget: matrix::DEFAULT_NODE_BUDGET,
            pi_cap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValueIterationResult {
    /// `v^T_s`, unnormalized.
    pub values: Vec<f64>,
    /// `(min_s v^T_s, max_s v^T_s)`.
    pub bracket: (f64, f64),
    pub steps: u64,
    /// Bracket after every step, when requested.
    pub trace: Option<Vec<(f64, f64)>>,
}

impl ValueIterationResult {
    pub fn width(&self) -> f64 {
        self.bracket.1 - self.bracket.0
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.bracket.0 + self.bracket.1)
    }
}

/// States with at least this many entries are swept in parallel.
const PARALLEL_STATES: usize = 256;

/// Per-state data of the one-step operator, flattened for the inner loop.
struct Sweep {
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// Offsets into `rewards`/`succ_start` for each state's `rows × cols` block.
    block: Vec<usize>,
    rewards: Vec<f64>,
    succ_start: Vec<usize>,
    succ: Vec<(usize, f64)>,
}

impl Sweep {
    fn new(g: &Game) -> Self {
        let w = g.reward_scale_f64();
        let n = g.num_states();
        let mut s = Sweep {
            rows: Vec::with_capacity(n),
            cols: Vec::with_capacity(n),
            block: Vec::with_capacity(n + 1),
            rewards: Vec::new(),
            succ_start: vec![0],
            succ: Vec::new(),
        };
        for st in 0..n {
            s.rows.push(g.actions1(st).len());
            s.cols.push(g.actions2(st).len());
            s.block.push(s.rewards.len());
            for (i, j, _) in g.pairs(st) {
                let t = g.float_transition(st, i, j);
                s.rewards.push(t.reward / w);
                s.succ.extend_from_slice(&t.successors);
                s.succ_start.push(s.succ.len());
            }
        }
        s.block.push(s.rewards.len());
        s
    }

    /// `val(M_s^j)` with `M_s^j = (R + (j−1) Σ δ v^{j−1}) / j`, given
    /// `inv = 1/j`.
    fn value(&self, s: usize, inv: f64, prev: &[f64], buf: &mut Vec<f64>) -> f64 {
        let (lo, hi) = (self.block[s], self.block[s + 1]);
        let entry = |k: usize| {
            let tail: f64 = self.succ[self.succ_start[k]..self.succ_start[k + 1]]
                .iter()
                .map(|&(u, p)| p * prev[u])
                .sum();
            self.rewards[k] * inv + (1.0 - inv) * tail
        };
        if hi - lo == 1 {
            return entry(lo);
        }
        buf.clear();
        buf.extend((lo..hi).map(entry));
        matrix::game_value(self.rows[s], self.cols[s], buf)
    }
}

/// Runs the one-step operator for up to `max_steps` steps, calling
/// `observe(j, lo, hi)` after each; stops early when it returns `false`.
/// Values are normalized by W inside and on the observer.
fn run_value_iteration(g: &Game, max_steps: u64, mut observe: impl FnMut(u64, f64, f64) -> bool) -> (Vec<f64>, u64) {
    let n = g.num_states();
    let sweep = Sweep::new(g);
    let mut prev = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut buf = Vec::new();
    let parallel = sweep.rewards.len() >= PARALLEL_STATES;
    let mut steps = 0;
    for j in 1..=max_steps {
        let inv = 1.0 / j as f64;
        if parallel {
            next.par_iter_mut()
                .enumerate()
                .for_each_init(Vec::new, |b, (s, out)| *out = sweep.value(s, inv, &prev, b));
        } else {
            for (s, out) in next.iter_mut().enumerate() {
                *out = sweep.value(s, inv, &prev, &mut buf);
            }
        }
        std::mem::swap(&mut prev, &mut next);
        steps = j;
        let (lo, hi) = bracket(&prev);
        if !observe(j, lo, hi) {
            break;
        }
    }
    (prev, steps)
}

fn bracket(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// `T` steps of value iteration from `v^0 = 0`.
pub fn value_iteration(g: &Game, steps: u64, trace: bool) -> Result<ValueIterationResult> {
    value_iteration_until(g, steps, trace, |_, _, _| true)
}

/// Value iteration stopping after `max_steps` or as soon as `keep_going(j,
/// lo, hi)` (unnormalized bracket) returns `false`.
pub fn value_iteration_until(
    g: &Game,
    max_steps: u64,
    trace: bool,
    mut keep_going: impl FnMut(u64, f64, f64) -> bool,
) -> Result<ValueIterationResult> {
    if max_steps == 0 {
        return Err(Error::InvalidArgument("value iteration needs at least one step".into()));
    }
    let w = g.reward_scale_f64();
    let mut history = trace.then(Vec::new);
    let (v, steps) = run_value_iteration(g, max_steps, |j, lo, hi| {
        if let Some(h) = history.as_mut() {
            h.push((lo * w, hi * w));
        }
        keep_going(j, lo * w, hi * w)
    });
    let values: Vec<f64> = v.iter().map(|x| x * w).collect();
    Ok(ValueIterationResult { bracket: bracket(&values), values, steps, trace: history })
}

/// `⌈4 · H · c · log₂ c⌉` with `c = 2W/ε` and `H = n · δ_min⁻ʳ`, at least 1,
/// saturating at `u64::MAX`.
pub fn vi_steps_for_epsilon(stats: &GameStats, w: &Rational, epsilon: &Rational) -> Result<u64> {
    if !epsilon.is_positive() {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let c = rational::int(2) * w / epsilon;
    let h = hitting_bound(stats);
    let cf = rational::to_f64(&c);
    let t = 4.0 * rational::to_f64(&h) * cf * cf.log2();
    if !t.is_finite() || t >= u64::MAX as f64 {
        return Ok(u64::MAX);
    }
    Ok((t.ceil() as u64).max(1))
}

/// `n · δ_min⁻ʳ`, an upper bound on the hitting-time numbers.
pub fn hitting_bound(stats: &GameStats) -> Rational {
    Rational::from_integer(BigInt::from(stats.n)) * rational::powi(&stats.delta_min, -(stats.r as i64))
}

/// Long-run average reward from `s` under the profile.
pub fn evaluate_profile(
    g: &Game,
    sigma1: &StationaryStrategy,
    sigma2: &StationaryStrategy,
    s: usize,
) -> Result<f64> {
    let chain = mdp::profile_chain(g, sigma1, sigma2)?;
    let reach = chain_reachable(&chain, s);
    chain_gain_bias(&chain, &reach, s).map(|(gain, _)| gain)
}

/// States reachable from `s` in the chain, sorted.
fn chain_reachable(chain: &mdp::Chain, s: usize) -> Vec<usize> {
    let n = chain.n;
    let mut seen = vec![false; n];
    seen[s] = true;
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        for w in 0..n {
            if chain.p[u * n + w] > 0.0 && !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    (0..n).filter(|&u| seen[u]).collect()
}

/// Expected number of steps from `s` to the first visit of `t`; infinite
/// when `t` is missed with positive probability.
pub fn hitting_time(
    g: &Game,
    sigma1: &StationaryStrategy,
    sigma2: &StationaryStrategy,
    s: usize,
    t: usize,
) -> Result<f64> {
    let chain = mdp::profile_chain(g, sigma1, sigma2)?;
    Ok(chain_hitting_times(&chain, t)[s])
}

/// Expected first-passage times into `t` from every state.
pub fn chain_hitting_times(chain: &mdp::Chain, t: usize) -> Vec<f64> {
    let n = chain.n;
    // States that reach `t` with positive probability (backward search).
    let mut reaches = vec![false; n];
    reaches[t] = true;
    let mut queue = VecDeque::from([t]);
    while let Some(v) = queue.pop_front() {
        for u in 0..n {
            if u != t && !reaches[u] && chain.p[u * n + v] > 0.0 {
                reaches[u] = true;
                queue.push_back(u);
            }
        }
    }
    // States that can wander into a state missing `t` are infinite too.
    let mut infinite: Vec<bool> = reaches.iter().map(|r| !r).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&u| infinite[u]).collect();
    while let Some(v) = queue.pop_front() {
        for u in 0..n {
            if u != t && !infinite[u] && chain.p[u * n + v] > 0.0 {
                infinite[u] = true;
                queue.push_back(u);
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|&u| u != t && !infinite[u]).collect();
    let mut local = vec![usize::MAX; n];
    for (i, &u) in free.iter().enumerate() {
        local[u] = i;
    }
    let k = free.len();
    let mut a = vec![0.0; k * k];
    let b = vec![1.0; k];
    for (i, &u) in free.iter().enumerate() {
        a[i * k + i] += 1.0;
        for w in 0..n {
            let p = chain.p[u * n + w];
            if p > 0.0 && local[w] != usize::MAX {
                a[i * k + local[w]] -= p;
            }
        }
    }
    let h = if k == 0 { Vec::new() } else { mdp::lu_solve(a, k, b).expect("absorbing first-passage system") };
    (0..n)
        .map(|u| {
            if u == t {
                0.0
            } else if infinite[u] {
                f64::INFINITY
            } else {
                h[local[u]]
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrategyIterationResult {
    /// Exactly q-rounded Player-1 strategy at the fixed point.
    #[serde(skip)]
    pub strategy: StationaryStrategy,
    pub counts: Vec<QRoundedDistribution>,
    /// Guaranteed gain of `strategy` (unnormalized).
    pub gain: f64,
    pub potentials: PotentialSolution,
    /// Improvement rounds, including the final one that changed nothing.
    pub iterations: u64,
    pub q: u64,
    /// Gain of each iterate, starting with `σ1^0`.
    pub gain_trace: Vec<f64>,
    /// Optimality guarantee of the q actually used, `W · 4 · m · n² · δ_min⁻ʳ / q`.
    pub epsilon_actual: f64,
}

/// The q used by strategy iteration for target accuracy `epsilon`
/// (unnormalized), unless overridden.
pub fn si_q(g: &Game, epsilon: &Rational, q_override: Option<u64>) -> Result<u64> {
    if let Some(q) = q_override {
        if q == 0 {
            return Err(Error::InvalidArgument("q must be positive".into()));
        }
        return Ok(q);
    }
    let stats = compute_stats(g);
    let q = matrix::q_from_epsilon(&stats, &(epsilon / g.reward_scale()))?;
    q.to_u64().ok_or_else(|| {
        Error::InvalidArgument(format!("the accuracy bound asks for q = {q}, which is not practical; pass an explicit q"))
    })
}

/// `W · 4 · m · n² · δ_min⁻ʳ / q`.
pub fn epsilon_for_q(g: &Game, q: u64) -> f64 {
    let st = compute_stats(g);
    let bound = g.reward_scale()
        * rational::int(4)
        * Rational::from_integer(BigInt::from(st.m))
        * Rational::from_integer(BigInt::from(st.n * st.n))
        * rational::powi(&st.delta_min, -(st.r as i64))
        / Rational::from_integer(BigInt::from(q));
    rational::to_f64(&bound)
}

/// Most uniform q-rounded distribution over `l` actions; with fewer than `l`
/// units, one unit on each of the first `q` actions.
pub fn initial_counts(l: usize, q: u64) -> QRoundedDistribution {
    if q >= l as u64 {
        let uniform = vec![rational::ratio(1, l as i64); l];
        return round_distribution(&uniform, q).expect("uniform input is a distribution");
    }
    let counts = (0..l).map(|i| u64::from((i as u64) < q)).collect();
    QRoundedDistribution { q, counts }
}

fn strategy_from_counts(g: &Game, counts: &[QRoundedDistribution]) -> StationaryStrategy {
    let probs = counts.iter().map(QRoundedDistribution::probs).collect();
    StationaryStrategy::new(g, Player::One, StrategyProbs::Exact(probs)).expect("q-rounded counts form a strategy")
}

/// `M_s[a1][a2] = R(s,a1,a2) + Σ δ(s,a1,a2)(s') v_s'`.
pub fn lookahead_matrix(g: &Game, s: usize, v: &[f64]) -> MatrixGame {
    let (r, c) = (g.actions1(s).len(), g.actions2(s).len());
    let mut e = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            let t = g.float_transition(s, i, j);
            e.push(t.reward + t.expect(v));
        }
    }
    MatrixGame::new(r, c, e).expect("finite lookahead entries")
}

/// Strategy iteration over q-rounded Player-1 strategies.
///
/// Each round computes Player 2's best response and its potentials, then
/// lets every state switch to a best q-rounded distribution of its
/// lookahead matrix unless the current one already attains that value.
pub fn var_hoffman_karp(
    g: &Game,
    epsilon: &Rational,
    t: usize,
    q_override: Option<u64>,
    config: &SolverConfig,
) -> Result<StrategyIterationResult> {
    let q = si_q(g, epsilon, q_override)?;
    let n = g.num_states();
    if t >= n {
        return Err(Error::InvalidArgument(format!("anchor index {t} out of range")));
    }
    let pi_cap = config.pi_cap.unwrap_or_else(|| mdp::default_pi_cap(g));
    let mut counts: Vec<QRoundedDistribution> = (0..n).map(|s| initial_counts(g.actions1(s).len(), q)).collect();
    let mut gain_trace = Vec::new();
    let mut iterations = 0u64;
    loop {
        iterations += 1;
        if iterations > config.si_cap {
            return Err(Error::IterationCap { what: "strategy iteration", cap: config.si_cap });
        }
        let sigma = strategy_from_counts(g, &counts);
        let br = best_response_potentials(g, &sigma, t, pi_cap)?;
        gain_trace.push(br.gain);
        log::debug!("strategy iteration round {iterations}: gain {}", br.gain);
        let updates: Vec<Option<QRoundedDistribution>> = (0..n)
            .into_par_iter()
            .map(|s| -> Result<Option<QRoundedDistribution>> {
                if g.actions1(s).len() == 1 {
                    return Ok(None);
                }
                let m = lookahead_matrix(g, s, &br.potentials);
                let best = best_q_rounded(&m, q, config.node_budget)?;
                let current = m.row_guarantee(&counts[s].probs_f64());
                let tol = config.lp_tol * (1.0 + m.max_abs());
                Ok((current < best.value - tol).then_some(best.x))
            })
            .collect::<Result<_>>()?;
        if updates.iter().all(Option::is_none) {
            return Ok(StrategyIterationResult {
                strategy: sigma,
                counts,
                gain: br.gain,
                potentials: br,
                iterations,
                q,
                gain_trace,
                epsilon_actual: epsilon_for_q(g, q),
            });
        }
        for (s, u) in updates.into_iter().enumerate() {
            if let Some(x) = u {
                counts[s] = x;
            }
        }
    }
}

/// Whether every state's distribution attains its best q-rounded value on
/// the final potentials, within `tol`.
pub fn is_fixed_point(g: &Game, result: &StrategyIterationResult, tol: f64, node_budget: u64) -> Result<bool> {
    for s in 0..g.num_states() {
        let m = lookahead_matrix(g, s, &result.potentials.potentials);
        let best = best_q_rounded(&m, result.q, node_budget)?;
        if m.row_guarantee(&result.counts[s].probs_f64()) < best.value - tol * (1.0 + m.max_abs()) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameBuilder;
    use crate::rational::{int, ratio};

    fn self_loop(c: i64) -> Game {
        let mut b = GameBuilder::new();
        b.state("s", &["a"], &["b"])
            .transition("s", "a", "b", int(c), &[("s", int(1))])
            .reward_scale(int(c.max(1)));
        b.build().unwrap()
    }

    fn g3() -> Game {
        let mut b = GameBuilder::new();
        b.state("u", &["a1", "a2"], &["b1", "b2"]).state("w", &["a"], &["b"]);
        b.transition("u", "a1", "b1", int(2), &[("u", ratio(1, 2)), ("w", ratio(1, 2))])
            .transition("u", "a1", "b2", int(1), &[("w", int(1))])
            .transition("u", "a2", "b1", int(1), &[("w", int(1))])
            .transition("u", "a2", "b2", int(2), &[("w", int(1))])
            .transition("w", "a", "b", int(2), &[("u", int(1))])
            .reward_scale(int(2));
        b.build().unwrap()
    }

    fn chain2(stay: (i64, i64)) -> Game {
        let mut b = GameBuilder::new();
        b.state("x", &["a"], &["b"]).state("y", &["a"], &["b"]);
        b.transition("x", "a", "b", int(0), &[("x", ratio(stay.0, stay.1)), ("y", int(1) - ratio(stay.0, stay.1))])
            .transition("y", "a", "b", int(1), &[("x", int(1))])
            .reward_scale(int(1));
        b.build().unwrap()
    }

    #[test]
    fn constant_game_is_fixed_by_vi() {
        let g = self_loop(3);
        let r = value_iteration(&g, 7, true).unwrap();
        assert_eq!(r.bracket, (3.0, 3.0));
        assert_eq!(r.trace.unwrap().len(), 7);
    }

    #[test]
    fn one_step_of_square_root_game() {
        let r = value_iteration(&g3(), 1, false).unwrap();
        assert!((r.values[0] - 1.5).abs() < 1e-12);
        assert!((r.values[1] - 2.0).abs() < 1e-12);
        assert!(r.bracket.0 <= 3f64.sqrt() && 3f64.sqrt() <= r.bracket.1);
    }

    #[test]
    fn square_root_game_converges() {
        let r = value_iteration(&g3(), 10_000, false).unwrap();
        assert!(r.width() <= 0.01);
        assert!(r.bracket.0 - 1e-9 <= 3f64.sqrt() && 3f64.sqrt() <= r.bracket.1 + 1e-9);
    }

    #[test]
    fn step_bound_examples() {
        let st = GameStats { n: 1, m: 1, r: 0, delta_min: int(1) };
        assert_eq!(vi_steps_for_epsilon(&st, &int(1), &ratio(1, 2)).unwrap(), 32);
        let st = compute_stats(&g3());
        assert_eq!(vi_steps_for_epsilon(&st, &int(2), &ratio(1, 5)).unwrap(), 1384);
        assert!(vi_steps_for_epsilon(&st, &int(2), &ratio(1, 2)).unwrap() > vi_steps_for_epsilon(&st, &int(2), &int(1)).unwrap());
    }

    #[test]
    fn hitting_bound_examples() {
        assert_eq!(hitting_bound(&GameStats { n: 1, m: 1, r: 0, delta_min: int(1) }), int(1));
        assert_eq!(hitting_bound(&compute_stats(&g3())), int(4));
        assert_eq!(hitting_bound(&GameStats { n: 9, m: 2, r: 5, delta_min: ratio(1, 16) }), int(9_437_184));
    }

    #[test]
    fn hitting_times_of_small_chains() {
        let g = chain2((0, 1));
        let s1 = StationaryStrategy::uniform(&g, Player::One);
        let s2 = StationaryStrategy::uniform(&g, Player::Two);
        assert_eq!(hitting_time(&g, &s1, &s2, 0, 0).unwrap(), 0.0);
        assert!((hitting_time(&g, &s1, &s2, 0, 1).unwrap() - 1.0).abs() < 1e-12);
        let g = chain2((1, 2));
        assert!((hitting_time(&g, &s1, &s2, 0, 1).unwrap() - 2.0).abs() < 1e-12);
        let g = chain2((1, 1));
        assert!(hitting_time(&g, &s1, &s2, 0, 1).unwrap().is_infinite());
    }

    #[test]
    fn profile_evaluation_on_cycle() {
        let g = chain2((0, 1));
        let s1 = StationaryStrategy::uniform(&g, Player::One);
        let s2 = StationaryStrategy::uniform(&g, Player::Two);
        assert!((evaluate_profile(&g, &s1, &s2, 0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn strategy_iteration_on_trivial_and_sqrt_game() {
        let cfg = SolverConfig::default();
        let r = var_hoffman_karp(&self_loop(5), &int(1), 0, None, &cfg).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.gain, 5.0);
        let g = g3();
        let r = var_hoffman_karp(&g, &int(1), 1, Some(1000), &cfg).unwrap();
        assert!((r.gain - 3f64.sqrt()).abs() <= 0.01, "{}", r.gain);
        assert!(r.gain <= 3f64.sqrt() + 1e-9);
        assert!(is_fixed_point(&g, &r, 1e-8, cfg.node_budget).unwrap());
        assert!((r.epsilon_actual - 0.128).abs() < 1e-12);
        for w in r.gain_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn initial_strategy_is_most_uniform() {
        assert_eq!(initial_counts(3, 4).counts, vec![1, 2, 1]);
        assert_eq!(initial_counts(3, 2).counts, vec![1, 1, 0]);
        assert_eq!(initial_counts(1, 9).counts, vec![9]);
    }
}
