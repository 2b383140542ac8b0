//! Existential-theory-of-the-reals sentences for the value of ergodic and
//! almost-sure ergodic games, SMT-LIB export and a numerical substitution
//! checker for candidate solutions.
//!
//! Rewards enter every sentence divided by W, so `g`, `v`, `z` and the
//! threshold are all on the normalized scale.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use indexmap::IndexMap;
use num_traits::{One, Signed, Zero};
use serde::Deserialize;

use crate::classify::{classify, Verdict};
use crate::error::{Error, Result};
use crate::game::{Game, Player, StationaryStrategy, StrategyProbs};
use crate::matrix::solve_matrix_game;
use crate::mdp::{best_response_potentials, default_pi_cap};
use crate::rational::{self, Rational};
use crate::solvers::lookahead_matrix;

/// Polynomial with rational coefficients; a monomial is the sorted list of
/// its variable indices (with repetition).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Poly {
    terms: BTreeMap<Vec<usize>, Rational>,
}

impl Poly {
    pub fn constant(c: Rational) -> Self {
        let mut p = Poly::default();
        p.add_term(c, Vec::new());
        p
    }

    pub fn var(v: usize) -> Self {
        let mut p = Poly::default();
        p.add_term(Rational::one(), vec![v]);
        p
    }

    /// Adds `c · Π vars`; zero coefficients never stay in the map.
    pub fn add_term(&mut self, c: Rational, mut vars: Vec<usize>) {
        if c.is_zero() {
            return;
        }
        vars.sort_unstable();
        let slot = self.terms.entry(vars.clone()).or_insert_with(Rational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&vars);
        }
    }

    pub fn add(&mut self, other: &Poly) {
        for (m, c) in &other.terms {
            self.add_term(c.clone(), m.clone());
        }
    }

    pub fn scaled(&self, c: &Rational) -> Poly {
        let mut p = Poly::default();
        for (m, k) in &self.terms {
            p.add_term(k * c, m.clone());
        }
        p
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut p = Poly::default();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                p.add_term(ca * cb, ma.iter().chain(mb).copied().collect());
            }
        }
        p
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[usize], &Rational)> {
        self.terms.iter().map(|(m, c)| (m.as_slice(), c))
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| rational::to_f64(c) * m.iter().map(|&v| values[v]).product::<f64>())
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    fn smt(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }
}

/// `poly ⋈ 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub label: String,
    pub poly: Poly,
    pub relation: Relation,
}

/// `state` is the anchor `s*` (with `v_{s*} = 0`) of the component whose
/// value variable is `value_var`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Anchor {
    pub value_var: String,
    pub state: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EtrSentence {
    pub variables: Vec<String>,
    pub constraints: Vec<Constraint>,
    pub anchors: Vec<Anchor>,
    /// Threshold in the game's own units; the constraint uses `λ / W`.
    pub lambda: Option<Rational>,
    pub query: Option<String>,
    pub reward_scale: Rational,
}

pub fn x_var(g: &Game, s: usize, i: usize) -> String {
    format!("x[{},{}]", g.state_name(s), g.actions1(s)[i])
}

pub fn y_var(g: &Game, s: usize, j: usize) -> String {
    format!("y[{},{}]", g.state_name(s), g.actions2(s)[j])
}

pub fn v_var(g: &Game, s: usize) -> String {
    format!("v[{}]", g.state_name(s))
}

pub fn z_var(g: &Game, s: usize) -> String {
    format!("z[{}]", g.state_name(s))
}

struct Emitter<'g> {
    g: &'g Game,
    vars: Vec<String>,
    index: HashMap<String, usize>,
    constraints: Vec<Constraint>,
}

impl<'g> Emitter<'g> {
    fn new(g: &'g Game) -> Self {
        Emitter { g, vars: Vec::new(), index: HashMap::new(), constraints: Vec::new() }
    }

    fn var(&mut self, name: String) -> usize {
        if let Some(&i) = self.index.get(&name) {
            return i;
        }
        self.vars.push(name.clone());
        self.index.insert(name, self.vars.len() - 1);
        self.vars.len() - 1
    }

    fn push(&mut self, label: String, poly: Poly, relation: Relation) {
        self.constraints.push(Constraint { label, poly, relation });
    }

    /// `R(s,i,j)/W + Σ_t δ(s,i,j)(t) · w_t` for the variables `w`.
    fn lookahead(&mut self, s: usize, i: usize, j: usize, w: &dyn Fn(usize) -> String, reward: bool) -> Poly {
        let t = self.g.transition(s, i, j);
        let mut p = if reward { Poly::constant(&t.reward / self.g.reward_scale()) } else { Poly::default() };
        for (u, prob) in t.successors.clone() {
            let v = self.var(w(u));
            p.add_term(prob, vec![v]);
        }
        p
    }

    /// `lhs − Σ_k d_k · look_k` over one player's actions at `s`, for each
    /// action of the other player.
    fn fixpoint_rows(&mut self, states: &[usize], lhs: &dyn Fn(&mut Self, usize) -> Poly, values: &dyn Fn(usize) -> String, reward: bool, tag: &str) {
        let g = self.g;
        for &s in states {
            for j in 0..g.actions2(s).len() {
                let mut p = lhs(self, s);
                for i in 0..g.actions1(s).len() {
                    let x = Poly::var(self.var(x_var(g, s, i)));
                    let look = self.lookahead(s, i, j, values, reward);
                    p.add(&x.mul(&look).scaled(&-Rational::one()));
                }
                self.push(format!("{tag}le[{},{}]", g.state_name(s), g.actions2(s)[j]), p, Relation::Le);
            }
        }
        for &s in states {
            for i in 0..g.actions1(s).len() {
                let mut p = lhs(self, s);
                for j in 0..g.actions2(s).len() {
                    let y = Poly::var(self.var(y_var(g, s, j)));
                    let look = self.lookahead(s, i, j, values, reward);
                    p.add(&y.mul(&look).scaled(&-Rational::one()));
                }
                self.push(format!("{tag}ge[{},{}]", g.state_name(s), g.actions1(s)[i]), p, Relation::Ge);
            }
        }
    }

    fn prob_dists(&mut self, states: &[usize]) {
        let g = self.g;
        for (player, name) in [(Player::One, x_var as fn(&Game, usize, usize) -> String), (Player::Two, y_var)] {
            for &s in states {
                let mut sum = Poly::constant(-Rational::one());
                for a in 0..g.actions(player, s).len() {
                    let v = self.var(name(g, s, a));
                    self.push(format!("pos[{}]", self.vars[v]), Poly::var(v), Relation::Ge);
                    sum.add(&Poly::var(v));
                }
                let tag = if player == Player::One { 'x' } else { 'y' };
                self.push(format!("dist{tag}[{}]", g.state_name(s)), sum, Relation::Eq);
            }
        }
    }

    /// The fixpoint sentence of one ergodic component.
    fn component(&mut self, states: &[usize], s_star: usize, gname: &str) {
        let g = self.g;
        let gv = self.var(gname.to_string());
        for &s in states {
            self.var(v_var(g, s));
        }
        let lhs = move |em: &mut Self, s: usize| {
            let mut p = Poly::var(gv);
            p.add(&Poly::var(em.var(v_var(em.g, s))));
            p
        };
        self.fixpoint_rows(states, &lhs, &|u| v_var(g, u), true, "");
        self.prob_dists(states);
        let anchor = self.var(v_var(g, s_star));
        self.push(format!("anchor[{}]", g.state_name(s_star)), Poly::var(anchor), Relation::Eq);
    }

    fn finish(self, anchors: Vec<Anchor>, lambda: Option<Rational>, query: Option<String>) -> EtrSentence {
        EtrSentence {
            variables: self.vars,
            constraints: self.constraints,
            anchors,
            lambda,
            query,
            reward_scale: self.g.reward_scale().clone(),
        }
    }
}

/// Sentence whose solutions give the normalized value `g` of an ergodic
/// game, optimal strategies `x, y` and potentials `v` with
/// `v_{s*} = 0`.
pub fn emit_etr_component(game: &Game, s_star: usize) -> Result<EtrSentence> {
    let c = classify(game);
    if !c.is_ergodic() {
        return Err(Error::Classification(format!("the game is {:?}, not ergodic", c.verdict)));
    }
    if s_star >= game.num_states() {
        return Err(Error::InvalidArgument(format!("state index {s_star} out of range")));
    }
    let mut em = Emitter::new(game);
    let all: Vec<usize> = (0..game.num_states()).collect();
    em.component(&all, s_star, "g");
    let anchors = vec![Anchor { value_var: "g".into(), state: game.state_name(s_star).to_string() }];
    Ok(em.finish(anchors, None, None))
}

/// Sentence satisfiable iff the value at `s0` is at most `lambda`.
///
/// One fixpoint block per ergodic component (anchored at its smallest
/// state), reachability constraints on `z` outside the components, and
/// `z_{s0} ≤ λ/W`. A fully ergodic game needs no `z` and bounds `g` directly.
pub fn emit_etr_full(game: &Game, lambda: &Rational, s0: usize) -> Result<EtrSentence> {
    let c = classify(game);
    if c.verdict == Verdict::None {
        return Err(Error::Classification("the game is not almost-sure ergodic".into()));
    }
    if s0 >= game.num_states() {
        return Err(Error::InvalidArgument(format!("state index {s0} out of range")));
    }
    let threshold = lambda / game.reward_scale();
    let query = Some(game.state_name(s0).to_string());
    let mut em = Emitter::new(game);
    if c.is_ergodic() {
        let all: Vec<usize> = (0..game.num_states()).collect();
        em.component(&all, 0, "g");
        let mut p = Poly::var(em.var("g".into()));
        p.add(&Poly::constant(-threshold));
        em.push("lambda".into(), p, Relation::Le);
        let anchors = vec![Anchor { value_var: "g".into(), state: game.state_name(0).to_string() }];
        return Ok(em.finish(anchors, Some(lambda.clone()), query));
    }
    let mut anchors = Vec::new();
    for (k, comp) in c.components.iter().enumerate() {
        let name = format!("g[{k}]");
        em.component(comp, comp[0], &name);
        anchors.push(Anchor { value_var: name, state: game.state_name(comp[0]).to_string() });
    }
    let outside: Vec<usize> = (0..game.num_states()).filter(|&s| c.component_of(s).is_none()).collect();
    let lhs = |em: &mut Emitter, s: usize| Poly::var(em.var(z_var(em.g, s)));
    em.fixpoint_rows(&outside, &lhs, &|u| z_var(game, u), false, "z");
    for (k, comp) in c.components.iter().enumerate() {
        let gv = em.var(format!("g[{k}]"));
        for &s in comp {
            let mut p = Poly::var(em.var(z_var(game, s)));
            p.add(&Poly::var(gv).scaled(&-Rational::one()));
            em.push(format!("bind[{}]", game.state_name(s)), p, Relation::Eq);
        }
    }
    em.prob_dists(&outside);
    let mut p = Poly::var(em.var(z_var(game, s0)));
    p.add(&Poly::constant(-threshold));
    em.push("lambda".into(), p, Relation::Le);
    Ok(em.finish(anchors, Some(lambda.clone()), query))
}

fn smt_symbol(name: &str) -> Result<String> {
    if name.contains(['|', '\\']) {
        return Err(Error::Etr(format!("name `{name}` cannot be written as an SMT-LIB symbol")));
    }
    Ok(format!("|{name}|"))
}

fn smt_rational(r: &Rational) -> String {
    let mag = r.abs();
    let body = if mag.is_integer() {
        mag.numer().to_string()
    } else {
        format!("(/ {} {})", mag.numer(), mag.denom())
    };
    if r.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

fn smt_poly(p: &Poly, vars: &[String]) -> String {
    let mono = |m: &[usize], c: &Rational| {
        if m.is_empty() {
            return smt_rational(c);
        }
        let syms: Vec<String> = m.iter().map(|&v| format!("|{}|", vars[v])).collect();
        if c.is_one() && syms.len() == 1 {
            syms[0].clone()
        } else if c.is_one() {
            format!("(* {})", syms.join(" "))
        } else {
            format!("(* {} {})", smt_rational(c), syms.join(" "))
        }
    };
    let parts: Vec<String> = p.terms().map(|(m, c)| mono(m, c)).collect();
    match parts.len() {
        0 => "0".into(),
        1 => parts[0].clone(),
        _ => format!("(+ {})", parts.join(" ")),
    }
}

impl EtrSentence {
    /// SMT-LIB 2 (QF_NRA) document: one named assert per constraint, with
    /// the metadata in leading comments so that [`EtrSentence::from_smtlib`]
    /// can restore it.
    pub fn to_smtlib(&self) -> Result<String> {
        let json = |s: &str| serde_json::to_string(s).expect("string serializes");
        let mut out = String::new();
        out.push_str("; cmpg etr sentence\n");
        writeln!(out, "; reward-scale {}", rational::format_rational(&self.reward_scale)).unwrap();
        for a in &self.anchors {
            writeln!(out, "; anchor {} {}", json(&a.value_var), json(&a.state)).unwrap();
        }
        if let Some(l) = &self.lambda {
            writeln!(out, "; lambda {}", rational::format_rational(l)).unwrap();
        }
        if let Some(q) = &self.query {
            writeln!(out, "; query {}", json(q)).unwrap();
        }
        out.push_str("(set-logic QF_NRA)\n");
        for v in &self.variables {
            writeln!(out, "(declare-fun {} () Real)", smt_symbol(v)?).unwrap();
        }
        for c in &self.constraints {
            writeln!(
                out,
                "(assert (! ({} {} 0) :named {}))",
                c.relation.smt(),
                smt_poly(&c.poly, &self.variables),
                smt_symbol(&c.label)?
            )
            .unwrap();
        }
        out.push_str("(check-sat)\n(exit)\n");
        Ok(out)
    }

    /// Reads back a document produced by [`EtrSentence::to_smtlib`].
    pub fn from_smtlib(text: &str) -> Result<EtrSentence> {
        let mut s = EtrSentence {
            variables: Vec::new(),
            constraints: Vec::new(),
            anchors: Vec::new(),
            lambda: None,
            query: None,
            reward_scale: Rational::one(),
        };
        let json = |t: &str| -> Result<String> {
            serde_json::from_str(t).map_err(|e| Error::Etr(format!("bad metadata string {t}: {e}")))
        };
        for line in text.lines() {
            let Some(meta) = line.strip_prefix("; ") else { continue };
            let (key, rest) = meta.split_once(' ').unwrap_or((meta, ""));
            match key {
                "reward-scale" => s.reward_scale = rational::parse_rational(rest)?,
                "lambda" => s.lambda = Some(rational::parse_rational(rest)?),
                "query" => s.query = Some(json(rest)?),
                "anchor" => {
                    let mut de = serde_json::Deserializer::from_str(rest).into_iter::<String>();
                    let mut next = || -> Result<String> {
                        de.next()
                            .ok_or_else(|| Error::Etr("anchor needs two strings".into()))?
                            .map_err(|e| Error::Etr(e.to_string()))
                    };
                    let value_var = next()?;
                    let state = next()?;
                    s.anchors.push(Anchor { value_var, state });
                }
                _ => {}
            }
        }
        let mut index = HashMap::new();
        for form in parse_sexprs(text)? {
            let Sexpr::List(items) = &form else {
                return Err(Error::Etr("top-level atom".into()));
            };
            match items.first() {
                Some(Sexpr::Atom(h)) if h == "declare-fun" => {
                    let name = items.get(1).and_then(Sexpr::symbol).ok_or_else(|| Error::Etr("bad declare-fun".into()))?;
                    index.insert(name.to_string(), s.variables.len());
                    s.variables.push(name.to_string());
                }
                Some(Sexpr::Atom(h)) if h == "assert" => s.constraints.push(parse_assert(items, &index)?),
                _ => {}
            }
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Sexpr {
    Atom(String),
    /// `|...|`, kept apart so that quoted names never read as keywords.
    Quoted(String),
    List(Vec<Sexpr>),
}

impl Sexpr {
    fn symbol(&self) -> Option<&str> {
        match self {
            Sexpr::Atom(a) | Sexpr::Quoted(a) => Some(a),
            Sexpr::List(_) => None,
        }
    }
}

fn parse_sexprs(text: &str) -> Result<Vec<Sexpr>> {
    let mut stack: Vec<Vec<Sexpr>> = vec![Vec::new()];
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '(' => stack.push(Vec::new()),
            ')' => {
                let done = stack.pop().filter(|_| !stack.is_empty()).ok_or_else(|| Error::Etr("unbalanced `)`".into()))?;
                stack.last_mut().expect("outer level").push(Sexpr::List(done));
            }
            '|' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('|') => break,
                        Some(c) => name.push(c),
                        None => return Err(Error::Etr("unterminated `|`".into())),
                    }
                }
                stack.last_mut().expect("level").push(Sexpr::Quoted(name));
            }
            c if c.is_whitespace() => {}
            c => {
                let mut atom = c.to_string();
                while let Some(&d) = chars.peek() {
                    if d.is_whitespace() || d == '(' || d == ')' || d == ';' || d == '|' {
                        break;
                    }
                    atom.push(d);
                    chars.next();
                }
                stack.last_mut().expect("level").push(Sexpr::Atom(atom));
            }
        }
    }
    if stack.len() != 1 {
        return Err(Error::Etr("unbalanced `(`".into()));
    }
    Ok(stack.pop().expect("top level"))
}

fn parse_assert(items: &[Sexpr], index: &HashMap<String, usize>) -> Result<Constraint> {
    let bad = |m: &str| Error::Etr(format!("unsupported assert: {m}"));
    let Some(Sexpr::List(named)) = items.get(1) else { return Err(bad("expected a named term")) };
    let (body, label) = match named.as_slice() {
        [Sexpr::Atom(bang), body, Sexpr::Atom(key), label] if bang == "!" && key == ":named" => {
            (body, label.symbol().ok_or_else(|| bad("label"))?.to_string())
        }
        _ => return Err(bad("expected (! term :named label)")),
    };
    let Sexpr::List(rel) = body else { return Err(bad("expected a relation")) };
    let [Sexpr::Atom(op), lhs, rhs] = rel.as_slice() else { return Err(bad("expected a binary relation")) };
    let relation = match op.as_str() {
        "<=" => Relation::Le,
        ">=" => Relation::Ge,
        "=" => Relation::Eq,
        _ => return Err(bad(op)),
    };
    let mut poly = parse_term(lhs, index)?;
    poly.add(&parse_term(rhs, index)?.scaled(&-Rational::one()));
    Ok(Constraint { label, poly, relation })
}

fn parse_term(t: &Sexpr, index: &HashMap<String, usize>) -> Result<Poly> {
    match t {
        Sexpr::Quoted(name) => index
            .get(name)
            .map(|&v| Poly::var(v))
            .ok_or_else(|| Error::Etr(format!("undeclared symbol `{name}`"))),
        Sexpr::Atom(a) => match index.get(a) {
            Some(&v) => Ok(Poly::var(v)),
            None => Ok(Poly::constant(rational::parse_real_exact(a).map_err(|_| Error::Etr(format!("unknown atom `{a}`")))?)),
        },
        Sexpr::List(items) => {
            let Some(Sexpr::Atom(op)) = items.first() else { return Err(Error::Etr("expected an operator".into())) };
            let args = items[1..].iter().map(|a| parse_term(a, index)).collect::<Result<Vec<_>>>()?;
            let constant = |p: &Poly| -> Result<Rational> {
                match p.terms().collect::<Vec<_>>().as_slice() {
                    [] => Ok(Rational::zero()),
                    [([], c)] => Ok((*c).clone()),
                    _ => Err(Error::Etr("division by a non-constant".into())),
                }
            };
            match (op.as_str(), args.as_slice()) {
                ("+", _) => Ok(args.iter().fold(Poly::default(), |mut acc, p| {
                    acc.add(p);
                    acc
                })),
                ("*", [first, rest @ ..]) => Ok(rest.iter().fold(first.clone(), |acc, p| acc.mul(p))),
                ("-", [only]) => Ok(only.scaled(&-Rational::one())),
                ("-", [first, rest @ ..]) => Ok(rest.iter().fold(first.clone(), |mut acc, p| {
                    acc.add(&p.scaled(&-Rational::one()));
                    acc
                })),
                ("/", [num, den]) => {
                    let d = constant(den)?;
                    if d.is_zero() {
                        return Err(Error::Etr("division by zero".into()));
                    }
                    Ok(num.scaled(&d.recip()))
                }
                _ => Err(Error::Etr(format!("unsupported operator `{op}`"))),
            }
        }
    }
}

/// First constraint broken by more than the tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub label: String,
    /// Amount by which the constraint fails.
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub satisfied: bool,
    pub first_violation: Option<Violation>,
    /// Largest excess over all constraints (0 when all hold exactly).
    pub max_excess: f64,
}

/// Substitutes `assignment` into every constraint. Inequalities may be
/// violated by at most `tol`; equalities need `|lhs − rhs| ≤ tol`.
pub fn check_assignment(sentence: &EtrSentence, assignment: &IndexMap<String, f64>, tol: f64) -> Result<CheckReport> {
    let values = sentence
        .variables
        .iter()
        .map(|v| assignment.get(v).copied().ok_or_else(|| Error::MissingVariable(v.clone())))
        .collect::<Result<Vec<f64>>>()?;
    let mut first = None;
    let mut max_excess = 0.0f64;
    for (k, c) in sentence.constraints.iter().enumerate() {
        let lhs = c.poly.eval(&values);
        let excess = match c.relation {
            Relation::Le => lhs,
            Relation::Ge => -lhs,
            Relation::Eq => lhs.abs(),
        }
        .max(0.0);
        max_excess = max_excess.max(excess);
        if excess > tol && first.is_none() {
            first = Some(Violation { index: k, label: c.label.clone(), excess });
        }
    }
    Ok(CheckReport { satisfied: first.is_none(), first_violation: first, max_excess })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AssignedValue {
    Number(f64),
    Text(String),
}

/// Assignment document: a JSON object from variable name to a number, a
/// decimal string or `"p/q"`.
pub fn parse_assignment(text: &str) -> Result<IndexMap<String, f64>> {
    let raw: IndexMap<String, AssignedValue> = serde_json::from_str(text).map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        path: ".".into(),
        message: e.to_string(),
    })?;
    raw.into_iter()
        .map(|(k, v)| {
            let x = match v {
                AssignedValue::Number(x) => x,
                AssignedValue::Text(t) => rational::to_f64(&rational::parse_real_exact(&t)?),
            };
            Ok((k, x))
        })
        .collect()
}

pub fn serialize_assignment(a: &IndexMap<String, f64>) -> String {
    let mut out = serde_json::to_string_pretty(a).expect("finite values serialize");
    out.push('\n');
    out
}

/// Candidate solution of [`emit_etr_component`]: Hoffman–Karp with exact
/// matrix-game solutions (no rounding), started from the uniform strategy
/// and run until no state improves, then Player 2's optimal columns in the
/// final lookahead matrices. All values are normalized.
pub fn fixpoint_assignment(game: &Game, s_star: usize, max_rounds: u64) -> Result<IndexMap<String, f64>> {
    let n = game.num_states();
    let w = game.reward_scale_f64();
    let mut x: Vec<Vec<f64>> = (0..n).map(|s| vec![1.0 / game.actions1(s).len() as f64; game.actions1(s).len()]).collect();
    let mut rounds = 0;
    let br = loop {
        rounds += 1;
        let sigma = StationaryStrategy::new(game, Player::One, StrategyProbs::Float(x.clone()))?;
        let br = best_response_potentials(game, &sigma, s_star, default_pi_cap(game))?;
        let mut changed = false;
        for (s, xs) in x.iter_mut().enumerate() {
            let m = lookahead_matrix(game, s, &br.potentials);
            let sol = solve_matrix_game(&m);
            if m.row_guarantee(xs) < sol.value - 1e-12 * (1.0 + m.max_abs()) {
                *xs = sol.x;
                changed = true;
            }
        }
        if !changed || rounds >= max_rounds {
            break br;
        }
    };
    let mut out = IndexMap::new();
    out.insert("g".to_string(), br.gain / w);
    for s in 0..n {
        out.insert(v_var(game, s), br.potentials[s] / w);
    }
    for s in 0..n {
        let y = solve_matrix_game(&lookahead_matrix(game, s, &br.potentials)).y;
        for (i, p) in x[s].iter().enumerate() {
            out.insert(x_var(game, s, i), *p);
        }
        for (j, p) in y.iter().enumerate() {
            out.insert(y_var(game, s, j), *p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_sqrt_game, gen_sqrt_sum, SqrtEntry};
    use crate::game::GameBuilder;
    use crate::rational::{int, ratio};

    fn self_loop(c: i64) -> Game {
        let mut b = GameBuilder::new();
        b.state("s", &["a"], &["b"])
            .transition("s", "a", "b", int(c), &[("s", int(1))])
            .reward_scale(int(c.max(1)));
        b.build().unwrap()
    }

    fn assign(pairs: &[(&str, f64)]) -> IndexMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn g3_closed_form(perturb: f64) -> IndexMap<String, f64> {
        let r3 = 3f64.sqrt();
        let p = 4.0 - 2.0 * r3;
        assign(&[
            ("g", r3 / 2.0 + perturb),
            ("v[u]", r3 / 2.0 - 1.0),
            ("v[w]", 0.0),
            ("x[u,a1]", p),
            ("x[u,a2]", 1.0 - p),
            ("y[u,b1]", p),
            ("y[u,b2]", 1.0 - p),
            ("x[w,a]", 1.0),
            ("y[w,b]", 1.0),
        ])
    }

    #[test]
    fn self_loop_sentence() {
        let g = self_loop(3);
        let s = emit_etr_component(&g, 0).unwrap();
        assert_eq!(s.constraints.len(), 1 + 1 + 2 + 2 + 1);
        let sat = |gv: f64| {
            check_assignment(&s, &assign(&[("g", gv), ("v[s]", 0.0), ("x[s,a]", 1.0), ("y[s,b]", 1.0)]), 1e-12)
                .unwrap()
                .satisfied
        };
        assert!(sat(1.0));
        assert!(!sat(0.99) && !sat(1.01));
    }

    #[test]
    fn sqrt3_closed_form_satisfies_and_perturbation_fails() {
        let g = gen_sqrt_game(3).unwrap();
        let s = emit_etr_component(&g, 1).unwrap();
        assert_eq!(s.constraints.len(), (2 + 2 + 2 + 4) + (1 + 1 + 2 + 2) + 1);
        let report = check_assignment(&s, &g3_closed_form(0.0), 1e-9).unwrap();
        assert!(report.satisfied, "{report:?}");
        let bad = check_assignment(&s, &g3_closed_form(1e-3), 1e-9).unwrap();
        assert_eq!(bad.first_violation.unwrap().label, "le[u,b1]");
        let mut missing = g3_closed_form(0.0);
        missing.shift_remove("v[w]");
        assert!(matches!(check_assignment(&s, &missing, 1e-9), Err(Error::MissingVariable(v)) if v == "v[w]"));
    }

    #[test]
    fn fixpoint_assignment_matches_closed_form() {
        let g = gen_sqrt_game(3).unwrap();
        let a = fixpoint_assignment(&g, 1, 100).unwrap();
        for (k, v) in g3_closed_form(0.0) {
            assert!((a[&k] - v).abs() < 1e-9, "{k}: {} vs {v}", a[&k]);
        }
    }

    #[test]
    fn constraint_count_for_square_games() {
        let g = gen_sqrt_game(7).unwrap();
        let s = emit_etr_component(&g, 0).unwrap();
        // Per state: |Γ2| ≤ rows, |Γ1| ≥ rows, both distributions.
        let expected: usize = (0..g.num_states())
            .map(|st| {
                let (a, b) = (g.actions1(st).len(), g.actions2(st).len());
                b + a + 2 + a + b
            })
            .sum::<usize>()
            + 1;
        assert_eq!(s.constraints.len(), expected);
    }

    #[test]
    fn smtlib_round_trip_is_exact() {
        let g = gen_sqrt_sum(&[2, 3], SqrtEntry::U).unwrap();
        let s = emit_etr_full(&g, &ratio(3, 2), 0).unwrap();
        let text = s.to_smtlib().unwrap();
        assert!(text.contains("(set-logic QF_NRA)"));
        assert!(text.contains("(/ 2 9)"));
        let back = EtrSentence::from_smtlib(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_smtlib().unwrap(), text);
    }

    #[test]
    fn threshold_on_sqrt_sum() {
        let g = gen_sqrt_sum(&[2, 3], SqrtEntry::U).unwrap();
        let w = 2.0;
        let (r2, r3) = (2f64.sqrt(), 3f64.sqrt());
        let mean = (r2 + r3) / 2.0;
        let mut a = IndexMap::new();
        for (k, sub) in [(0usize, gen_sqrt_game(2).unwrap()), (1, gen_sqrt_game(3).unwrap())] {
            let local = fixpoint_assignment(&sub, 0, 100).unwrap();
            let ws = sub.reward_scale_f64();
            for (name, v) in local {
                // Sub-game values are on its own scale; rescale to W = 2.
                let rescaled = if name.starts_with('x') || name.starts_with('y') { v } else { v * ws / w };
                let name = if name == "g" {
                    format!("g[{k}]")
                } else {
                    let (head, rest) = name.split_at(2);
                    format!("{head}g{k}.{rest}")
                };
                a.insert(name, rescaled);
            }
        }
        for (k, val) in [(0, r2), (1, r3)] {
            for st in ["u", "w"] {
                a.insert(format!("z[g{k}.{st}]"), val / w);
            }
        }
        a.insert("z[s_star]".into(), mean / w);
        a.insert("x[s_star,a]".into(), 1.0);
        a.insert("y[s_star,b]".into(), 1.0);
        let above = rational::from_f64(mean + 0.01);
        let below = rational::from_f64(mean - 0.01);
        let s = emit_etr_full(&g, &above, 0).unwrap();
        let report = check_assignment(&s, &a, 1e-9).unwrap();
        assert!(report.satisfied, "{report:?}");
        let s = emit_etr_full(&g, &below, 0).unwrap();
        assert_eq!(check_assignment(&s, &a, 1e-9).unwrap().first_violation.unwrap().label, "lambda");
    }

    #[test]
    fn assignment_file_formats() {
        let a = parse_assignment(r#"{"g": "1/2", "v[s]": 0, "x": "-2.5e-1"}"#).unwrap();
        assert_eq!(a["g"], 0.5);
        assert_eq!(a["x"], -0.25);
        assert_eq!(parse_assignment(&serialize_assignment(&a)).unwrap(), a);
    }
}
