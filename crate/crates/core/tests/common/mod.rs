//! Helpers shared by the integration suites and the acceptance harness:
//! seeded random games, brute-force oracles written independently of the
//! library's solvers, and games whose values are known in closed form.

#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use cmpg::game::{Game, GameBuilder};
use cmpg::generators::{gen_lower_bound, gen_sqrt_game};
use cmpg::rational::{int, ratio, Rational};
use num_bigint::BigInt;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random distribution over `n` states with support size in `1..=max_support`
/// and denominators dividing 12.
pub fn random_successors(rng: &mut ChaCha8Rng, n: usize, max_support: usize) -> Vec<(usize, Rational)> {
    let k = rng.gen_range(1..=max_support.min(n));
    let mut states: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        states.swap(i, j);
    }
    let mut parts = vec![1i64; k];
    for _ in k..12 {
        parts[rng.gen_range(0..k)] += 1;
    }
    states.into_iter().zip(parts).map(|(t, w)| (t, ratio(w, 12))).collect()
}

/// Random game with `n` states, `1..=m` actions per player per state,
/// integer rewards in `0..=4` and W = 4.
pub fn random_game(rng: &mut ChaCha8Rng, n: usize, m: usize, max_support: usize) -> Game {
    let mut b = GameBuilder::new();
    let acts: Vec<(usize, usize)> = (0..n).map(|_| (rng.gen_range(1..=m), rng.gen_range(1..=m))).collect();
    let names: Vec<String> = (0..n).map(|s| format!("s{s}")).collect();
    for s in 0..n {
        b.state_owned(
            names[s].clone(),
            (0..acts[s].0).map(|i| format!("i{i}")).collect(),
            (0..acts[s].1).map(|j| format!("j{j}")).collect(),
        );
    }
    for s in 0..n {
        for i in 0..acts[s].0 {
            for j in 0..acts[s].1 {
                let succ = random_successors(rng, n, max_support)
                    .into_iter()
                    .map(|(t, p)| (names[t].clone(), p))
                    .collect();
                b.transition_owned(names[s].clone(), format!("i{i}"), format!("j{j}"), int(rng.gen_range(0..=4)), succ);
            }
        }
    }
    b.reward_scale(int(4));
    b.build().expect("random game is well formed")
}

/// Random game accepted by `keep`, retrying with fresh draws.
pub fn random_game_where(rng: &mut ChaCha8Rng, n: usize, m: usize, support: usize, keep: impl Fn(&Game) -> bool) -> Game {
    loop {
        let g = random_game(rng, n, m, support);
        if keep(&g) {
            return g;
        }
    }
}

/// Every vector of action indices, one entry per state, below `sizes`.
pub fn all_positional(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &k in sizes {
        out = out.into_iter().flat_map(|p| (0..k).map(move |a| [p.clone(), vec![a]].concat())).collect();
    }
    out
}

/// Transition matrix of the chain where Player 1 plays `x[s]` and Player 2
/// plays the pure action `pol[s]`, and the expected one-step rewards.
pub fn chain_under(g: &Game, x: &[Vec<f64>], pol: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = g.num_states();
    let mut p = vec![vec![0.0; n]; n];
    let mut r = vec![0.0; n];
    for s in 0..n {
        for (i, &xi) in x[s].iter().enumerate() {
            let t = g.transition(s, i, pol[s]);
            r[s] += xi * cmpg::rational::to_f64(&t.reward);
            for (u, q) in &t.successors {
                p[s][*u] += xi * cmpg::rational::to_f64(q);
            }
        }
    }
    (p, r)
}

/// Stationary distribution of an irreducible chain, by Gaussian elimination
/// on `π (P − I) = 0`, `Σ π = 1` with the last balance equation replaced.
pub fn stationary(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[n - 1][j] = 1.0;
    }
    a[n - 1][n] = 1.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

pub fn stationary_gain(p: &[Vec<f64>], r: &[f64]) -> f64 {
    stationary(p).iter().zip(r).map(|(a, b)| a * b).sum()
}

/// States from which some state of `target` is reachable in the directed
/// graph `adj`.
pub fn can_reach(adj: &[Vec<usize>], target: &[usize]) -> Vec<bool> {
    let n = adj.len();
    let mut hit = vec![false; n];
    for &t in target {
        hit[t] = true;
    }
    loop {
        let mut changed = false;
        for s in 0..n {
            if !hit[s] && adj[s].iter().any(|&u| hit[u]) {
                hit[s] = true;
                changed = true;
            }
        }
        if !changed {
            return hit;
        }
    }
}

/// A game and its exact value (unnormalized).
pub struct Known {
    pub name: String,
    pub game: Game,
    pub value: f64,
}

pub fn self_loop(reward: i64, scale: i64) -> Game {
    let mut b = GameBuilder::new();
    b.state("s", &["a"], &["b"])
        .transition("s", "a", "b", int(reward), &[("s", int(1))])
        .reward_scale(int(scale));
    b.build().unwrap()
}

/// Ergodic games with known values: square-root games, the skew-symmetric
/// family (value 1/2) and constant self-loops.
pub fn known_ergodic_games() -> Vec<Known> {
    let mut out = Vec::new();
    for b in [2u64, 3, 5, 7, 10] {
        out.push(Known { name: format!("sqrt({b})"), game: gen_sqrt_game(b).unwrap(), value: (b as f64).sqrt() });
    }
    for (k, eta) in [(2, ratio(1, 16)), (2, ratio(1, 32)), (3, ratio(1, 20))] {
        let (g, _) = gen_lower_bound(k, &eta).unwrap();
        out.push(Known { name: format!("lower-bound(k={k}, eta={eta})"), game: g, value: 0.5 });
    }
    out.push(Known { name: "self-loop 3/4".into(), game: self_loop(3, 4), value: 3.0 });
    out
}

/// Stopping SSGs with their values at `s`: a fair coin (1/2), a coin into a
/// minimizer choice (1/4), and a maximizer with a safe cycle (1).
pub fn ssgs() -> Vec<(Game, Rational)> {
    let terminals = |b: &mut GameBuilder| {
        b.state("top", &["a"], &["b"]).state("bot", &["a"], &["b"]);
        b.transition("top", "a", "b", int(1), &[("top", int(1))])
            .transition("bot", "a", "b", int(0), &[("bot", int(1))])
            .reward_scale(int(1));
    };
    let h = || ratio(1, 2);
    let mut coin = GameBuilder::new();
    coin.state("s", &["a"], &["b"]);
    terminals(&mut coin);
    coin.transition("s", "a", "b", int(0), &[("top", h()), ("bot", h())]);

    let mut quarter = GameBuilder::new();
    quarter.state("s", &["a"], &["b"]).state("x", &["a"], &["safe", "gamble"]);
    terminals(&mut quarter);
    quarter
        .transition("s", "a", "b", int(0), &[("x", h()), ("bot", h())])
        .transition("x", "a", "safe", int(0), &[("top", int(1))])
        .transition("x", "a", "gamble", int(0), &[("top", h()), ("bot", h())]);

    let mut one = GameBuilder::new();
    one.state("s", &["go", "quit"], &["b"]).state("x", &["a"], &["b"]).state("y", &["a"], &["back", "out"]);
    terminals(&mut one);
    one.transition("s", "go", "b", int(0), &[("x", int(1))])
        .transition("s", "quit", "b", int(0), &[("bot", int(1))])
        .transition("x", "a", "b", int(0), &[("y", h()), ("top", h())])
        .transition("y", "a", "back", int(0), &[("x", int(1))])
        .transition("y", "a", "out", int(0), &[("top", int(1))]);

    vec![
        (coin.build().unwrap(), ratio(1, 2)),
        (quarter.build().unwrap(), ratio(1, 4)),
        (one.build().unwrap(), int(1)),
    ]
}

/// All count vectors of `rows` entries summing to `q`.
pub fn compositions(q: u64, rows: usize) -> Vec<Vec<u64>> {
    if rows == 1 {
        return vec![vec![q]];
    }
    (0..=q)
        .flat_map(|first| {
            compositions(q - first, rows - 1).into_iter().map(move |rest| [vec![first], rest].concat())
        })
        .collect()
}

pub fn big(n: u64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}
