//! The skew-symmetric family where good strategies need tiny probabilities.

use cmpg::game::{patience, Player, StationaryStrategy};
use cmpg::generators::{check_skew_symmetric, gen_lower_bound, lower_bound_sigma_star};
use cmpg::mdp::{best_response_potentials, default_pi_cap};
use cmpg::rational::ratio;
use cmpg::solvers::hitting_time;

fn main() -> cmpg::error::Result<()> {
    for (k, den) in [(2u32, 16i64), (2, 32), (4, 24)] {
        let eta = ratio(1, den);
        let (g, w) = gen_lower_bound(k, &eta)?;
        let a = g.state_index("a")?;
        let s1 = StationaryStrategy::uniform(&g, Player::One);
        let s2 = StationaryStrategy::uniform(&g, Player::Two);
        let l = hitting_time(&g, &s1, &s2, g.state_index(&format!("s{k}"))?, a)?;
        println!(
            "k = {k}, eta = 1/{den}: {} states, skew-symmetric {}, return time from s{k} {l:.1}",
            g.num_states(),
            check_skew_symmetric(&g, &w)?.holds()
        );
        if k % 2 == 0 {
            let star = lower_bound_sigma_star(&g, k, &eta)?;
            let br = best_response_potentials(&g, &star, a, default_pi_cap(&g))?;
            println!("  low-patience strategy (patience {:.1}) guarantees {:.5}", patience(&star), br.gain);
        }
    }
    Ok(())
}
