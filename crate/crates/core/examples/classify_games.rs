//! Ergodicity verdicts for a few generated games.

use cmpg::classify::classify;
use cmpg::generators::{gen_lower_bound, gen_sqrt_game, gen_sqrt_sum, SqrtEntry};
use cmpg::rational::ratio;

fn main() -> cmpg::error::Result<()> {
    let games = [
        ("sqrt 3", gen_sqrt_game(3)?),
        ("sqrt sum 2,3", gen_sqrt_sum(&[2, 3], SqrtEntry::U)?),
        ("lower bound k=2", gen_lower_bound(2, &ratio(1, 16))?.0),
    ];
    for (name, g) in &games {
        let c = classify(g);
        let comps: Vec<Vec<&str>> =
            c.components.iter().map(|comp| comp.iter().map(|&s| g.state_name(s)).collect()).collect();
        println!("{name}: {:?}, components {comps:?}", c.verdict);
    }
    Ok(())
}
