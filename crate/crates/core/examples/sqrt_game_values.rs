//! Value iteration on the games whose value is `√b`.

use cmpg::generators::{gen_sqrt_game, sqrt_game_optimal_p};
use cmpg::solvers::value_iteration;

fn main() -> cmpg::error::Result<()> {
    for b in [2u64, 3, 5, 7, 10] {
        let g = gen_sqrt_game(b)?;
        let vi = value_iteration(&g, 20_000, false)?;
        let (lo, hi) = vi.bracket;
        println!(
            "b = {b:>2}: value in [{lo:.6}, {hi:.6}], sqrt(b) = {:.6}, optimal p = {:.6}",
            (b as f64).sqrt(),
            sqrt_game_optimal_p(b)?
        );
    }
    Ok(())
}
