//! Strategy iteration over q-rounded strategies, checked against value iteration.

use cmpg::format::serialize_strategy;
use cmpg::generators::gen_sqrt_game;
use cmpg::rational::ratio;
use cmpg::solvers::{value_iteration, var_hoffman_karp, SolverConfig};

fn main() -> cmpg::error::Result<()> {
    let g = gen_sqrt_game(5)?;
    let (lo, hi) = value_iteration(&g, 20_000, false)?.bracket;
    println!("value iteration: [{lo:.6}, {hi:.6}]");
    for q in [10u64, 100, 1000] {
        let si = var_hoffman_karp(&g, &ratio(1, 1), 0, Some(q), &SolverConfig::default())?;
        println!("q = {q:>4}: guaranteed gain {:.6} after {} rounds", si.gain, si.iterations);
        if q == 1000 {
            print!("{}", serialize_strategy(&g, &si.strategy));
        }
    }
    Ok(())
}
