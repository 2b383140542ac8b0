//! Approximate a simple stochastic game value through an ergodic game, then
//! recover the exact rational with a Stern–Brocot search.

use cmpg::game::GameBuilder;
use cmpg::generators::{kwek_mehlhorn, reduce_ssg, reduction_interval, validate_ssg};
use cmpg::rational::{int, ratio, to_f64};
use cmpg::solvers::value_iteration;

fn main() -> cmpg::error::Result<()> {
    // Player 2 picks between a safe loss and a coin flip that wins with 1/4.
    let one = ratio(1, 1);
    let mut b = GameBuilder::new();
    b.state("s", &["go"], &["go"])
        .state("x", &["go"], &["safe", "gamble"])
        .state("top", &["stay"], &["stay"])
        .state("bot", &["stay"], &["stay"])
        .transition("s", "go", "go", int(0), &[("x", ratio(1, 2)), ("bot", ratio(1, 2))])
        .transition("x", "go", "safe", int(0), &[("top", ratio(1, 2)), ("bot", ratio(1, 2))])
        .transition("x", "go", "gamble", int(0), &[("top", ratio(1, 2)), ("x", ratio(1, 2))])
        .transition("top", "stay", "stay", int(1), &[("top", one.clone())])
        .transition("bot", "stay", "stay", int(0), &[("bot", one)])
        .reward_scale(int(1));
    let g = b.build()?;
    let ssg = validate_ssg(&g)?;
    let n = ssg.nonterminals.len() as u32;
    let s = g.state_index("s")?;
    let reduced = reduce_ssg(&g, s, 9, 7)?;
    let (lo, hi) = value_iteration(&reduced, 200_000, false)?.bracket;
    let (vlo, _) = reduction_interval(lo, n, 9, 7);
    let (_, vhi) = reduction_interval(hi, n, 9, 7);
    println!("reduced game value in [{lo:.6}, {hi:.6}], SSG value in [{vlo:.6}, {vhi:.6}]");

    // Denominators of SSG values divide a product over random states; here 4 suffices.
    let (v, calls) = kwek_mehlhorn(|x| to_f64(x) <= 0.5 * (vlo + vhi), 4)?;
    println!("exact value {v} after {calls} comparisons");
    Ok(())
}
