//! Player 2's best response to a fixed stationary Player-1 strategy.
//!
//! Fixing σ1 turns the game into an average-cost MDP for Player 2, solved
//! by Howard policy iteration over positional policies. Each policy is
//! evaluated through the gain/bias system `g + v_s − Σ P(s,s') v_s' = r_s`
//! with `v_t = 0`, which is nonsingular exactly when the induced chain has a
//! single recurrent class.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Game, Player, StationaryStrategy};

/// Dense Markov chain with per-state expected rewards (unnormalized).
#[derive(Clone, Debug)]
pub struct Chain {
    pub n: usize,
    /// Row-major `n × n` transition matrix.
    pub p: Vec<f64>,
    pub r: Vec<f64>,
}

/// Chain induced by per-state action distributions of both players.
pub fn induced_chain(g: &Game, d1: impl Fn(usize) -> Vec<f64>, d2: impl Fn(usize) -> Vec<f64>) -> Chain {
    let n = g.num_states();
    let mut p = vec![0.0; n * n];
    let mut r = vec![0.0; n];
    for s in 0..n {
        let (x, y) = (d1(s), d2(s));
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, &yj) in y.iter().enumerate() {
                let w = xi * yj;
                if w == 0.0 {
                    continue;
                }
                let t = g.float_transition(s, i, j);
                r[s] += w * t.reward;
                for &(u, pr) in &t.successors {
                    p[s * n + u] += w * pr;
                }
            }
        }
    }
    Chain { n, p, r }
}

pub fn profile_chain(g: &Game, sigma1: &StationaryStrategy, sigma2: &StationaryStrategy) -> Result<Chain> {
    if sigma1.player() != Player::One || sigma2.player() != Player::Two {
        return Err(Error::InvalidStrategy("expected a Player-1 and a Player-2 strategy".into()));
    }
    if sigma1.num_states() != g.num_states() || sigma2.num_states() != g.num_states() {
        return Err(Error::InvalidStrategy("strategy does not match the game".into()));
    }
    Ok(induced_chain(g, |s| sigma1.at(s).to_vec(), |s| sigma2.at(s).to_vec()))
}

/// Solves `A x = b` in place by LU with partial pivoting. `None` if `A` is
/// numerically singular.
pub fn lu_solve(mut a: Vec<f64>, n: usize, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let tiny = 1e-12 * scale;
    for k in 0..n {
        let (piv, big) = (k..n)
            .map(|i| (i, a[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if big <= tiny {
            return None;
        }
        if piv != k {
            for j in 0..n {
                a.swap(k * n + j, piv * n + j);
            }
            b.swap(k, piv);
        }
        let d = a[k * n + k];
        for i in k + 1..n {
            let f = a[i * n + k] / d;
            if f == 0.0 {
                continue;
            }
            a[i * n + k] = 0.0;
            for j in k + 1..n {
                a[i * n + j] -= f * a[k * n + j];
            }
            b[i] -= f * b[k];
        }
    }
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in k + 1..n {
            acc -= a[k * n + j] * b[j];
        }
        b[k] = acc / a[k * n + k];
    }
    Some(b)
}

/// Gain and potentials of `chain` restricted to `states` (closed under the
/// chain's support), anchored at `t ∈ states`. Potentials outside `states`
/// are left at zero.
pub fn chain_gain_bias(chain: &Chain, states: &[usize], t: usize) -> Result<(f64, Vec<f64>)> {
    let n = chain.n;
    let k = states.len();
    let mut local = vec![usize::MAX; n];
    for (i, &s) in states.iter().enumerate() {
        local[s] = i;
    }
    let anchor = local[t];
    if anchor == usize::MAX {
        return Err(Error::InvalidArgument("anchor outside the evaluated states".into()));
    }
    // Unknowns: g, then v of each local state.
    let dim = k + 1;
    let mut a = vec![0.0; dim * dim];
    let mut b = vec![0.0; dim];
    for (i, &s) in states.iter().enumerate() {
        let row = i * dim;
        a[row] = 1.0;
        a[row + 1 + i] += 1.0;
        for u in 0..n {
            let p = chain.p[s * n + u];
            if p != 0.0 {
                let lu = local[u];
                if lu == usize::MAX {
                    return Err(Error::InvalidArgument("evaluated states are not closed".into()));
                }
                a[row + 1 + lu] -= p;
            }
        }
        b[i] = chain.r[s];
    }
    a[k * dim + 1 + anchor] = 1.0;
    let x = lu_solve(a, dim, b).ok_or_else(|| {
        Error::Singular("the induced chain has more than one recurrent class".into())
    })?;
    let mut v = vec![0.0; n];
    for (i, &s) in states.iter().enumerate() {
        v[s] = x[1 + i];
    }
    v[t] = 0.0;
    Ok((x[0], v))
}

/// Gain and potentials under `sigma1` and the Player-2 strategy `sigma2`.
pub fn solve_gain_bias(
    g: &Game,
    sigma1: &StationaryStrategy,
    sigma2: &StationaryStrategy,
    t: usize,
) -> Result<(f64, Vec<f64>)> {
    let chain = profile_chain(g, sigma1, sigma2)?;
    let all: Vec<usize> = (0..g.num_states()).collect();
    chain_gain_bias(&chain, &all, t)
}

/// Gain, potentials and a positional best response of Player 2.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialSolution {
    pub gain: f64,
    pub potentials: Vec<f64>,
    pub anchor: usize,
    /// Player 2's action index per state.
    pub policy: Vec<usize>,
    /// Gain of each evaluated policy, in order; nonincreasing.
    pub gain_trace: Vec<f64>,
    /// `max_s |g + v_s − min_a2 Q(s, a2)|`.
    pub residual: f64,
}

/// `Q(s, a2) = Σ_a1 σ1(s)(a1) · (R(s,a1,a2) + Σ δ(s,a1,a2)(s') v_s')`.
fn lookahead(g: &Game, x: &[f64], s: usize, a2: usize, v: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .filter(|(_, &p)| p != 0.0)
        .map(|(i, &p)| {
            let t = g.float_transition(s, i, a2);
            p * (t.reward + t.expect(v))
        })
        .sum()
}

pub fn default_pi_cap(g: &Game) -> u64 {
    let m = (0..g.num_states())
        .map(|s| g.actions1(s).len().max(g.actions2(s).len()))
        .max()
        .unwrap_or(1);
    (10 * g.num_states() * m) as u64
}

/// Policy iteration for Player 2 against `sigma1`, anchored at `t`.
///
/// The start policy minimizes the expected one-step reward; improvements
/// switch only on a strict decrease beyond a relative tolerance, so the
/// incumbent survives ties.
pub fn best_response_potentials(
    g: &Game,
    sigma1: &StationaryStrategy,
    t: usize,
    cap: u64,
) -> Result<PotentialSolution> {
    if sigma1.player() != Player::One {
        return Err(Error::InvalidStrategy("expected a Player-1 strategy".into()));
    }
    let n = g.num_states();
    let all: Vec<usize> = (0..n).collect();
    let scale = 1.0 + g.reward_scale_f64();
    let zero = vec![0.0; n];
    let mut policy: Vec<usize> = (0..n)
        .map(|s| {
            let k = g.actions2(s).len();
            (0..k)
                .map(|j| (j, lookahead(g, sigma1.at(s), s, j, &zero)))
                .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
                .0
        })
        .collect();
    let mut trace = Vec::new();
    let mut rounds = 0u64;
    loop {
        rounds += 1;
        if rounds > cap {
            return Err(Error::IterationCap { what: "best-response policy iteration", cap });
        }
        let chain = induced_chain(g, |s| sigma1.at(s).to_vec(), |s| {
            let mut d = vec![0.0; g.actions2(s).len()];
            d[policy[s]] = 1.0;
            d
        });
        let (gain, v) = chain_gain_bias(&chain, &all, t)?;
        trace.push(gain);
        let tol = 1e-9 * (scale + v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        let mut changed = false;
        let mut residual = 0.0f64;
        for s in 0..n {
            let x = sigma1.at(s);
            let current = lookahead(g, x, s, policy[s], &v);
            let (best_a, best_q) = (0..g.actions2(s).len())
                .map(|j| (j, lookahead(g, x, s, j, &v)))
                .fold((policy[s], current), |b, c| if c.1 < b.1 - tol { c } else { b });
            if best_a != policy[s] {
                policy[s] = best_a;
                changed = true;
            }
            residual = residual.max((gain + v[s] - best_q).abs());
        }
        if !changed {
            return Ok(PotentialSolution {
                gain,
                potentials: v,
                anchor: t,
                policy,
                gain_trace: trace,
                residual,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{GameBuilder, StrategyProbs};
    use crate::rational::{int, ratio};

    fn cycle01() -> Game {
        let mut b = GameBuilder::new();
        b.state("x", &["a"], &["b"]).state("y", &["a"], &["b"]);
        b.transition("x", "a", "b", int(0), &[("y", int(1))])
            .transition("y", "a", "b", int(1), &[("x", int(1))])
            .reward_scale(int(1));
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

    fn g3_optimal(g: &Game) -> StationaryStrategy {
        let p = 4.0 - 2.0 * 3f64.sqrt();
        StationaryStrategy::new(g, Player::One, StrategyProbs::Float(vec![vec![p, 1.0 - p], vec![1.0]])).unwrap()
    }

    #[test]
    fn lu_solves_and_detects_singularity() {
        let x = lu_solve(vec![0.0, 2.0, 1.0, 1.0], 2, vec![4.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
        assert!(lu_solve(vec![1.0, 2.0, 2.0, 4.0], 2, vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn deterministic_cycle_gain_and_bias() {
        let g = cycle01();
        let s1 = StationaryStrategy::uniform(&g, Player::One);
        let s2 = StationaryStrategy::uniform(&g, Player::Two);
        let (gain, v) = solve_gain_bias(&g, &s1, &s2, 0).unwrap();
        assert!((gain - 0.5).abs() < 1e-12);
        assert!(v[0].abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn square_root_game_under_optimal_play() {
        let g = g3();
        let s1 = g3_optimal(&g);
        let s2 = StationaryStrategy::positional(&g, Player::Two, &[0, 0]).unwrap();
        let (gain, v) = solve_gain_bias(&g, &s1, &s2, 1).unwrap();
        let r3 = 3f64.sqrt();
        assert!((gain - r3).abs() < 1e-12);
        assert!((v[0] - (r3 - 2.0)).abs() < 1e-12 && v[1] == 0.0);
        let br = best_response_potentials(&g, &s1, 1, default_pi_cap(&g)).unwrap();
        assert!((br.gain - r3).abs() < 1e-6);
        assert!(br.residual < 1e-8);
    }

    #[test]
    fn best_response_matches_enumeration_on_pure_row() {
        let g = g3();
        let s1 = StationaryStrategy::positional(&g, Player::One, &[0, 0]).unwrap();
        let gains: Vec<f64> = [0, 1]
            .iter()
            .map(|&j| {
                let s2 = StationaryStrategy::positional(&g, Player::Two, &[j, 0]).unwrap();
                solve_gain_bias(&g, &s1, &s2, 0).unwrap().0
            })
            .collect();
        let br = best_response_potentials(&g, &s1, 0, default_pi_cap(&g)).unwrap();
        assert!((br.gain - gains[0].min(gains[1])).abs() < 1e-12);
        assert_eq!(br.policy[0], 1);
    }

    #[test]
    fn two_recurrent_classes_are_singular() {
        let mut b = GameBuilder::new();
        b.state("x", &["a"], &["b"]).state("y", &["a"], &["b"]);
        b.transition("x", "a", "b", int(0), &[("x", int(1))])
            .transition("y", "a", "b", int(1), &[("y", int(1))])
            .reward_scale(int(1));
        let g = b.build().unwrap();
        let s1 = StationaryStrategy::uniform(&g, Player::One);
        assert!(matches!(best_response_potentials(&g, &s1, 0, 10), Err(Error::Singular(_))));
    }
}
