//! Ergodic decomposition and the ergodic ⊂ sure-ergodic ⊂ almost-sure-ergodic
//! hierarchy.
//!
//! Everything here is qualitative: only supports of transitions matter.

use rayon::prelude::*;
use serde::Serialize;

use crate::game::Game;

/// `adj[s]` lists, sorted and deduplicated, every `t` in the support of some
/// `δ(s, a1, a2)`.
pub fn existential_graph(g: &Game) -> Vec<Vec<usize>> {
    (0..g.num_states())
        .map(|s| {
            let mut out: Vec<usize> = g.pairs(s).flat_map(|(_, _, t)| t.successors.iter().map(|(u, _)| *u)).collect();
            out.sort_unstable();
            out.dedup();
            out
        })
        .collect()
}

/// Strongly connected components, each sorted, in Tarjan's completion order.
pub fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0;
    // Explicit call stack of (node, next edge position).
    let mut calls: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        calls.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = calls.last_mut() {
            if let Some(&w) = adj[v].get(*pos) {
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    calls.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            calls.pop();
            if let Some(&(parent, _)) = calls.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps
}

/// States from which `target` is reached with positive probability under
/// every strategy profile.
///
/// Attractor of the turn-based game where the two players jointly pick an
/// action pair to avoid `target` and an opponent then picks the successor
/// from its support: `s` joins once every action pair has a successor
/// already inside.
pub fn guaranteed_reach(g: &Game, target: &[usize]) -> Vec<usize> {
    let n = g.num_states();
    let mut inside = vec![false; n];
    for &t in target {
        inside[t] = true;
    }
    loop {
        let mut changed = false;
        for s in 0..n {
            if inside[s] {
                continue;
            }
            if g.pairs(s).all(|(_, _, t)| t.successors.iter().any(|(u, _)| inside[*u])) {
                inside[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).filter(|&s| inside[s]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Ergodic,
    SureErgodic,
    AlmostSureErgodic,
    None,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Classification {
    /// Verified ergodic components, each sorted, ordered by smallest state.
    pub components: Vec<Vec<usize>>,
    pub verdict: Verdict,
    /// Bottom SCCs of the existential graph that failed verification.
    pub rejected: Vec<Vec<usize>>,
    /// A cycle of the existential graph avoiding every component, if any.
    pub cycle: Option<Vec<usize>>,
    /// A nonempty set outside the components that the players can stay in
    /// forever, if any.
    pub trap: Option<Vec<usize>>,
}

impl Classification {
    pub fn is_ergodic(&self) -> bool {
        self.verdict == Verdict::Ergodic
    }

    /// Outcome of the sure-reachability test, independent of the final verdict.
    pub fn sure_test(&self) -> bool {
        !self.components.is_empty() && self.cycle.is_none()
    }

    pub fn almost_sure_test(&self) -> bool {
        !self.components.is_empty() && self.trap.is_none()
    }

    /// Component containing `s`, if any.
    pub fn component_of(&self, s: usize) -> Option<usize> {
        self.components.iter().position(|c| c.binary_search(&s).is_ok())
    }
}

/// Bottom SCCs that pass verification, and those that fail it.
pub fn ergodic_components(g: &Game) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let adj = existential_graph(g);
    let sccs = strongly_connected_components(&adj);
    let mut member = vec![usize::MAX; adj.len()];
    for (k, c) in sccs.iter().enumerate() {
        for &s in c {
            member[s] = k;
        }
    }
    let bottom: Vec<&Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(k, c)| c.iter().all(|&s| adj[s].iter().all(|&t| member[t] == *k)))
        .map(|(_, c)| c)
        .collect();
    let verified: Vec<bool> = bottom
        .par_iter()
        .map(|c| {
            c.iter().all(|&t| {
                let reach = guaranteed_reach(g, &[t]);
                c.iter().all(|s| reach.binary_search(s).is_ok())
            })
        })
        .collect();
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for (c, ok) in bottom.into_iter().zip(verified) {
        if ok {
            good.push(c.clone());
        } else {
            bad.push(c.clone());
        }
    }
    good.sort();
    bad.sort();
    (good, bad)
}

/// Some cycle of `adj` restricted to `allowed`, as a state sequence.
fn find_cycle(adj: &[Vec<usize>], allowed: &[bool]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let n = adj.len();
    let mut mark = vec![Mark::White; n];
    for root in (0..n).filter(|&s| allowed[s]) {
        if mark[root] != Mark::White {
            continue;
        }
        let mut path: Vec<(usize, usize)> = vec![(root, 0)];
        mark[root] = Mark::Grey;
        while let Some(&mut (v, ref mut pos)) = path.last_mut() {
            if let Some(&w) = adj[v].get(*pos) {
                *pos += 1;
                if !allowed[w] {
                    continue;
                }
                match mark[w] {
                    Mark::Grey => {
                        let start = path.iter().position(|(u, _)| *u == w).expect("grey node is on the path");
                        return Some(path[start..].iter().map(|(u, _)| *u).collect());
                    }
                    Mark::White => {
                        mark[w] = Mark::Grey;
                        path.push((w, 0));
                    }
                    Mark::Black => {}
                }
                continue;
            }
            mark[v] = Mark::Black;
            path.pop();
        }
    }
    None
}

/// Largest `U ⊆ allowed` in which every state has an action pair whose whole
/// support stays in `U`.
pub(crate) fn find_trap(g: &Game, allowed: &[bool]) -> Vec<usize> {
    let mut inside = allowed.to_vec();
    loop {
        let mut changed = false;
        for s in 0..inside.len() {
            if inside[s] && !g.pairs(s).any(|(_, _, t)| t.successors.iter().all(|(u, _)| inside[*u])) {
                inside[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..inside.len()).filter(|&s| inside[s]).collect()
}

pub fn classify(g: &Game) -> Classification {
    let n = g.num_states();
    let (components, rejected) = ergodic_components(g);
    let mut outside = vec![true; n];
    for c in &components {
        for &s in c {
            outside[s] = false;
        }
    }
    let adj = existential_graph(g);
    let cycle = find_cycle(&adj, &outside);
    let trap = Some(find_trap(g, &outside)).filter(|t| !t.is_empty());
    let whole = components.len() == 1 && components[0].len() == n;
    let verdict = if whole {
        Verdict::Ergodic
    } else if !components.is_empty() && cycle.is_none() {
        Verdict::SureErgodic
    } else if !components.is_empty() && trap.is_none() {
        Verdict::AlmostSureErgodic
    } else {
        Verdict::None
    };
    Classification { components, verdict, rejected, cycle, trap }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameBuilder;
    use crate::rational::{int, ratio};

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

    #[test]
    fn graph_and_components_of_small_games() {
        let g = g3();
        assert_eq!(existential_graph(&g), vec![vec![0, 1], vec![0]]);
        assert_eq!(guaranteed_reach(&g, &[1]), vec![0, 1]);
        let c = classify(&g);
        assert_eq!(c.components, vec![vec![0, 1]]);
        assert_eq!(c.verdict, Verdict::Ergodic);
    }

    #[test]
    fn avoidable_target_is_excluded() {
        let mut b = GameBuilder::new();
        b.state("s", &["stay", "go"], &["x"]).state("t", &["a"], &["x"]);
        b.transition("s", "stay", "x", int(0), &[("s", int(1))])
            .transition("s", "go", "x", int(0), &[("t", int(1))])
            .transition("t", "a", "x", int(1), &[("s", int(1))])
            .reward_scale(int(1));
        let g = b.build().unwrap();
        assert_eq!(guaranteed_reach(&g, &[1]), vec![1]);
        assert_eq!(guaranteed_reach(&g, &[0, 1]), vec![0, 1]);
        let c = classify(&g);
        // The only bottom SCC fails verification; nothing else can hold.
        assert_eq!(c.rejected, vec![vec![0, 1]]);
        assert_eq!(c.verdict, Verdict::None);
        assert!(c.trap.is_some());
    }

    #[test]
    fn stopping_game_is_almost_sure_ergodic() {
        let mut b = GameBuilder::new();
        b.state("s", &["a"], &["b"]).state("top", &["a"], &["b"]).state("bot", &["a"], &["b"]);
        b.transition("s", "a", "b", int(0), &[("s", ratio(1, 2)), ("top", ratio(1, 4)), ("bot", ratio(1, 4))])
            .transition("top", "a", "b", int(1), &[("top", int(1))])
            .transition("bot", "a", "b", int(0), &[("bot", int(1))])
            .reward_scale(int(1));
        let c = classify(&b.build().unwrap());
        assert_eq!(c.components, vec![vec![1], vec![2]]);
        assert_eq!(c.verdict, Verdict::AlmostSureErgodic);
        assert_eq!(c.cycle, Some(vec![0]));
        assert!(c.trap.is_none());
    }

    #[test]
    fn tarjan_on_a_chain_of_cycles() {
        let adj = vec![vec![1], vec![0, 2], vec![3], vec![2]];
        let mut sccs = strongly_connected_components(&adj);
        sccs.sort();
        assert_eq!(sccs, vec![vec![0, 1], vec![2, 3]]);
    }
}
