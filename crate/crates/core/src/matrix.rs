//! One-shot zero-sum matrix games: the unrestricted minimax solve, the exact
//! distribution rounding, and the best q-rounded row strategy.
//!
//! The row player maximizes. Entries are `f64`; an exact mirror can be
//! attached when the entries are known rationals, which makes
//! [`best_q_rounded`] exact.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::game::GameStats;
use crate::rational::{self, Rational};

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixGame {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    exact: Option<Vec<Rational>>,
}

impl MatrixGame {
    /// Row-major entries.
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("matrix game needs at least one row and one column".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        Ok(MatrixGame { rows, cols, entries, exact: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged matrix".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_exact_rows(rows: &[Vec<Rational>]) -> Result<Self> {
        let exact: Vec<Rational> = rows.concat();
        let mut m = Self::from_rows(
            &rows
                .iter()
                .map(|r| r.iter().map(rational::to_f64).collect())
                .collect::<Vec<_>>(),
        )?;
        m.exact = Some(exact);
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn exact(&self) -> Option<&[Rational]> {
        self.exact.as_deref()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    /// Solver tolerance `1e-9 · (1 + max|entry|)`.
    pub fn tolerance(&self) -> f64 {
        1e-9 * (1.0 + self.max_abs())
    }

    /// `min_j Σ_i x_i M_ij`.
    pub fn row_guarantee(&self, x: &[f64]) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| x[i] * self.get(i, j)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    /// `max_i Σ_j M_ij y_j`.
    pub fn col_guarantee(&self, y: &[f64]) -> f64 {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * y[j]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSolution {
    pub value: f64,
    /// Optimal row (maximizer) distribution.
    pub x: Vec<f64>,
    /// Optimal column (minimizer) distribution.
    pub y: Vec<f64>,
}

fn point(len: usize, at: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[at] = 1.0;
    v
}

/// Minimax value and optimal strategies of both players.
pub fn solve_matrix_game(m: &MatrixGame) -> MatrixSolution {
    let (r, c) = (m.rows, m.cols);
    if r == 1 {
        let (j, v) = argbest((0..c).map(|j| m.get(0, j)), |a, b| a < b);
        return MatrixSolution { value: v, x: vec![1.0], y: point(c, j) };
    }
    if c == 1 {
        let (i, v) = argbest((0..r).map(|i| m.get(i, 0)), |a, b| a > b);
        return MatrixSolution { value: v, x: point(r, i), y: vec![1.0] };
    }
    if r == 2 && c == 2 {
        return solve_2x2(m);
    }
    simplex(m)
}

/// Minimax value of a row-major `rows × cols` block, without strategies.
/// Allocation-free for vectors and 2×2 blocks.
pub fn game_value(rows: usize, cols: usize, e: &[f64]) -> f64 {
    if rows == 1 {
        return e[..cols].iter().copied().fold(f64::INFINITY, f64::min);
    }
    if cols == 1 {
        return e[..rows].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    if rows == 2 && cols == 2 {
        let (a, b, c, d) = (e[0], e[1], e[2], e[3]);
        let maximin = a.min(b).max(c.min(d));
        let minimax = a.max(c).min(b.max(d));
        if maximin >= minimax {
            return maximin;
        }
        return (a * d - b * c) / (a + d - b - c);
    }
    let m = MatrixGame::new(rows, cols, e.to_vec()).expect("finite entries");
    simplex(&m).value
}

/// First index attaining the best value under `better`.
fn argbest(values: impl Iterator<Item = f64>, better: impl Fn(f64, f64) -> bool) -> (usize, f64) {
    let mut best = (0, f64::NAN);
    for (k, v) in values.enumerate() {
        if k == 0 || better(v, best.1) {
            best = (k, v);
        }
    }
    best
}

fn solve_2x2(m: &MatrixGame) -> MatrixSolution {
    let (a, b, c, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1));
    let (row, maximin) = argbest([a.min(b), c.min(d)].into_iter(), |u, v| u > v);
    let (col, minimax) = argbest([a.max(c), b.max(d)].into_iter(), |u, v| u < v);
    if maximin >= minimax {
        return MatrixSolution { value: maximin, x: point(2, row), y: point(2, col) };
    }
    // No saddle point: both players mix, and the denominator is nonzero.
    let den = a + d - b - c;
    let x0 = ((d - c) / den).clamp(0.0, 1.0);
    let y0 = ((d - b) / den).clamp(0.0, 1.0);
    MatrixSolution {
        value: (a * d - b * c) / den,
        x: vec![x0, 1.0 - x0],
        y: vec![y0, 1.0 - y0],
    }
}

const PIVOT_EPS: f64 = 1e-12;

/// Dense simplex with Bland's rule on `max Σw s.t. B w ≤ 1, w ≥ 0`, where
/// `B = M − min(M) + 1 > 0`. The column strategy is `w/Σw`; the row strategy
/// is read from the slack reduced costs (the dual solution).
fn simplex(m: &MatrixGame) -> MatrixSolution {
    let (r, c) = (m.rows, m.cols);
    let lo = m.entries.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = lo - 1.0;
    let width = c + r + 1;
    let rhs = c + r;
    let mut t = vec![0.0; r * width];
    for i in 0..r {
        for j in 0..c {
            t[i * width + j] = m.get(i, j) - shift;
        }
        t[i * width + c + i] = 1.0;
        t[i * width + rhs] = 1.0;
    }
    let mut obj = vec![0.0; width];
    obj[..c].iter_mut().for_each(|x| *x = -1.0);
    let mut basis: Vec<usize> = (c..c + r).collect();

    let scale = 1.0 + m.max_abs() - shift.min(0.0);
    let eps = PIVOT_EPS * scale;
    while let Some(enter) = (0..rhs).find(|&j| obj[j] < -eps) {
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..r {
            let a = t[i * width + enter];
            if a <= eps {
                continue;
            }
            let ratio = t[i * width + rhs] / a;
            leave = match leave {
                None => Some((i, ratio)),
                Some((k, best)) => {
                    let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                    if ratio < best && !tie || tie && basis[i] < basis[k] {
                        Some((i, ratio))
                    } else {
                        Some((k, best))
                    }
                }
            };
        }
        // B > 0 keeps the program bounded, so a leaving row always exists.
        let (p, _) = leave.expect("bounded matrix-game program");
        let pv = t[p * width + enter];
        for x in &mut t[p * width..(p + 1) * width] {
            *x /= pv;
        }
        let pivot_row: Vec<f64> = t[p * width..(p + 1) * width].to_vec();
        for i in 0..r {
            if i == p {
                continue;
            }
            let f = t[i * width + enter];
            if f != 0.0 {
                for (x, pr) in t[i * width..(i + 1) * width].iter_mut().zip(&pivot_row) {
                    *x -= f * pr;
                }
            }
        }
        let f = obj[enter];
        for (x, pr) in obj.iter_mut().zip(&pivot_row) {
            *x -= f * pr;
        }
        basis[p] = enter;
    }

    let total = obj[rhs];
    let mut w = vec![0.0; c];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < c {
            w[bv] = t[i * width + rhs].max(0.0);
        }
    }
    let u: Vec<f64> = (0..r).map(|i| obj[c + i].max(0.0)).collect();
    MatrixSolution {
        value: 1.0 / total + shift,
        x: normalize(u),
        y: normalize(w),
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// A distribution whose probabilities are `counts[i] / q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub struct QRoundedDistribution {
    pub q: u64,
    pub counts: Vec<u64>,
}

impl QRoundedDistribution {
    pub fn new(q: u64, counts: Vec<u64>) -> Result<Self> {
        if q == 0 || counts.iter().sum::<u64>() != q {
            return Err(Error::InvalidArgument(format!("counts {counts:?} do not sum to q = {q}")));
        }
        Ok(QRoundedDistribution { q, counts })
    }

    pub fn probs(&self) -> Vec<Rational> {
        self.counts
            .iter()
            .map(|&c| Rational::new(BigInt::from(c), BigInt::from(self.q)))
            .collect()
    }

    pub fn probs_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.q as f64).collect()
    }
}

/// Rounds `d` to a q-rounded distribution within `1/q` componentwise.
///
/// Anchor is the lowest index with `1/q ≤ d(z) ≤ 1 − 1/q`; the remaining
/// elements are visited in index order, rounding up while the accumulated
/// error `Σ (d − out)` is nonnegative and down otherwise.
pub fn round_distribution(d: &[Rational], q: u64) -> Result<QRoundedDistribution> {
    let l = d.len();
    if l == 0 {
        return Err(Error::InvalidArgument("empty distribution".into()));
    }
    if q < l as u64 {
        return Err(Error::InvalidArgument(format!("q = {q} is smaller than the support size {l}")));
    }
    if d.iter().any(|p| p.is_negative()) || d.iter().sum::<Rational>() != Rational::one() {
        return Err(Error::InvalidArgument("input is not a probability distribution".into()));
    }
    let qr = Rational::from_integer(BigInt::from(q));
    let lo = qr.recip();
    let hi = Rational::one() - &lo;
    let Some(anchor) = d.iter().position(|p| p >= &lo && p <= &hi) else {
        let top = d.iter().position(|p| p > &hi).expect("some element exceeds 1 - 1/q");
        let mut counts = vec![0; l];
        counts[top] = q;
        return QRoundedDistribution::new(q, counts);
    };
    let mut counts = vec![0u64; l];
    let mut err = Rational::zero();
    let mut used = 0u64;
    for (z, p) in d.iter().enumerate() {
        if z == anchor {
            continue;
        }
        let scaled = p * &qr;
        let k = if err.is_negative() { scaled.floor() } else { scaled.ceil() };
        let k = k.to_integer().to_u64().expect("count fits in u64");
        err += p - Rational::new(BigInt::from(k), BigInt::from(q));
        counts[z] = k;
        used += k;
    }
    counts[anchor] = q - used;
    QRoundedDistribution::new(q, counts)
}

/// Best q-rounded row strategy and its guaranteed value.
#[derive(Clone, Debug, PartialEq)]
pub struct QRoundedSolution {
    pub value: f64,
    /// Present when the matrix carries exact entries.
    pub exact_value: Option<Rational>,
    pub x: QRoundedDistribution,
    /// Search nodes expanded.
    pub nodes: u64,
}

pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

/// Exact maximizer of `min_j Σ_i x_i M_ij` over q-rounded `x`, ties broken
/// toward the lexicographically smallest count vector.
///
/// Depth-first enumeration of count vectors in lexicographic order, pruned
/// by the LP relaxation of each subtree. With exact entries the search runs
/// in integers; otherwise values within the matrix tolerance count as equal.
pub fn best_q_rounded(m: &MatrixGame, q: u64, node_budget: u64) -> Result<QRoundedSolution> {
    if q == 0 {
        return Err(Error::InvalidArgument("q must be positive".into()));
    }
    let sol = match integer_form(m, q) {
        Some(ints) => {
            let mut s = Search::new(m, q, node_budget, ints, 0.0);
            s.run()?;
            s.finish()
        }
        None => {
            let mut s = Search::new(m, q, node_budget, m.entries.clone(), m.tolerance() * q as f64);
            s.run()?;
            s.finish()
        }
    };
    let exact_value = m.exact.as_ref().map(|e| exact_guarantee(e, m.cols, &sol.x));
    Ok(QRoundedSolution { exact_value, ..sol })
}

/// Guaranteed value of a q-rounded row strategy against exact entries.
pub fn exact_guarantee(entries: &[Rational], cols: usize, x: &QRoundedDistribution) -> Rational {
    let rows = x.counts.len();
    (0..cols)
        .map(|j| {
            (0..rows)
                .map(|i| &entries[i * cols + j] * Rational::from_integer(BigInt::from(x.counts[i])))
                .sum::<Rational>()
                / Rational::from_integer(BigInt::from(x.q))
        })
        .min()
        .expect("at least one column")
}

/// Exact entries scaled to integers by the common denominator, as `f64`,
/// provided every partial sum `Σ c_i A_ij` with `Σ c_i = q` stays exactly
/// representable.
fn integer_form(m: &MatrixGame, q: u64) -> Option<Vec<f64>> {
    let exact = m.exact.as_ref()?;
    let l = rational::lcm_denominators(exact.iter());
    let ints: Vec<BigInt> = exact.iter().map(|e| (e * Rational::from_integer(l.clone())).to_integer()).collect();
    let max = ints.iter().map(|v| v.abs()).max()?;
    let bound = max * BigInt::from(q);
    (bound < BigInt::from(1u64 << 52)).then(|| ints.iter().map(|v| v.to_f64().expect("small integer")).collect())
}

struct Search<'a> {
    m: &'a MatrixGame,
    q: u64,
    budget: u64,
    /// Entries the search sums; integers in exact mode.
    a: Vec<f64>,
    /// Values within `tie` of each other are equal; 0 in exact mode.
    tie: f64,
    best_counts: Vec<u64>,
    best_sum: f64,
    nodes: u64,
    counts: Vec<u64>,
    partial: Vec<f64>,
}

impl<'a> Search<'a> {
    fn new(m: &'a MatrixGame, q: u64, budget: u64, a: Vec<f64>, tie: f64) -> Self {
        let mut s = Search {
            m,
            q,
            budget,
            a,
            tie,
            best_counts: Vec::new(),
            best_sum: f64::NEG_INFINITY,
            nodes: 0,
            counts: vec![0; m.rows],
            partial: vec![0.0; m.cols],
        };
        s.best_counts = s.initial_incumbent();
        s.best_sum = s.sum_value(&s.best_counts);
        s
    }

    fn initial_incumbent(&self) -> Vec<u64> {
        let lp = solve_matrix_game(self.m);
        if self.q >= self.m.rows as u64 {
            let exact: Vec<Rational> = lp.x.iter().map(|&p| rational::from_f64(p.max(0.0))).collect();
            let total: Rational = exact.iter().sum();
            if total.is_positive() {
                let d: Vec<Rational> = exact.into_iter().map(|p| p / &total).collect();
                if let Ok(r) = round_distribution(&d, self.q) {
                    return r.counts;
                }
            }
        }
        let (top, _) = argbest(lp.x.iter().copied(), |a, b| a > b);
        let mut c = vec![0; self.m.rows];
        c[top] = self.q;
        c
    }

    fn sum_value(&self, counts: &[u64]) -> f64 {
        let cols = self.m.cols;
        (0..cols)
            .map(|j| counts.iter().enumerate().map(|(i, &c)| c as f64 * self.a[i * cols + j]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    fn run(&mut self) -> Result<()> {
        self.descend(0, self.q)
    }

    /// Rows `< depth` are fixed in `counts`/`partial`; `left` units remain.
    fn descend(&mut self, depth: usize, left: u64) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::NodeBudget { budget: self.budget, q: self.q, rows: self.m.rows });
        }
        let rows = self.m.rows;
        let cols = self.m.cols;
        if depth + 1 == rows {
            self.counts[depth] = left;
            let value = (0..cols)
                .map(|j| self.partial[j] + left as f64 * self.a[depth * cols + j])
                .fold(f64::INFINITY, f64::min);
            let better = value > self.best_sum + self.tie;
            let equal = !better && value >= self.best_sum - self.tie;
            if better || equal && self.counts < self.best_counts {
                self.best_sum = value;
                self.best_counts = self.counts.clone();
            }
            return Ok(());
        }
        if self.prunable(depth, left) {
            return Ok(());
        }
        for c in 0..=left {
            self.counts[depth] = c;
            for j in 0..cols {
                self.partial[j] += c as f64 * self.a[depth * cols + j];
            }
            let r = self.descend(depth + 1, left - c);
            for j in 0..cols {
                self.partial[j] -= c as f64 * self.a[depth * cols + j];
            }
            r?;
        }
        self.counts[depth] = 0;
        Ok(())
    }

    /// True when no completion of the fixed prefix can replace the incumbent.
    fn prunable(&self, depth: usize, left: u64) -> bool {
        let rows = self.m.rows;
        let cols = self.m.cols;
        // Every leaf below is lexicographically after the incumbent, so only a
        // strict improvement could replace it.
        let after = self.counts[..depth] > self.best_counts[..depth];
        let need = if after {
            if self.tie == 0.0 {
                self.best_sum + 1.0
            } else {
                self.best_sum + self.tie
            }
        } else {
            self.best_sum - self.tie
        };
        let margin = 1e-9 * (1.0 + need.abs());
        let r = left as f64;
        let cheap = (0..cols)
            .map(|j| {
                let top = (depth..rows).map(|i| self.a[i * cols + j]).fold(f64::NEG_INFINITY, f64::max);
                self.partial[j] + r * top
            })
            .fold(f64::INFINITY, f64::min);
        if cheap < need - margin {
            return true;
        }
        let free = rows - depth;
        let mut entries = Vec::with_capacity(free * cols);
        for i in depth..rows {
            for j in 0..cols {
                entries.push(self.partial[j] + r * self.a[i * cols + j]);
            }
        }
        let relaxed = MatrixGame::new(free, cols, entries).expect("finite bound matrix");
        let bound = solve_matrix_game(&relaxed).value;
        bound + relaxed.tolerance() < need - margin
    }

    fn finish(self) -> QRoundedSolution {
        let x = QRoundedDistribution { q: self.q, counts: self.best_counts };
        let value = self.m.row_guarantee(&x.probs_f64());
        QRoundedSolution { value, exact_value: None, x, nodes: self.nodes }
    }
}

/// `⌈4 · ε⁻¹ · m · n² · δ_min⁻ʳ⌉`, exact.
pub fn q_from_epsilon(stats: &GameStats, epsilon: &Rational) -> Result<BigInt> {
    if !epsilon.is_positive() {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let n = Rational::from_integer(BigInt::from(stats.n));
    let m = Rational::from_integer(BigInt::from(stats.m));
    let q = rational::int(4) / epsilon * m * &n * &n * rational::powi(&stats.delta_min, -(stats.r as i64));
    Ok(rational::ceil_to_int(&q))
}
