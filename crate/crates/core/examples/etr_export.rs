//! Emit the existential-theory sentence for a game and check a candidate model.

use cmpg::etr::{check_assignment, emit_etr_full, fixpoint_assignment};
use cmpg::generators::gen_sqrt_game;
use cmpg::rational::ratio;

fn main() -> cmpg::error::Result<()> {
    let g = gen_sqrt_game(3)?;
    let sentence = emit_etr_full(&g, &ratio(7, 4), 0)?;
    let text = sentence.to_smtlib()?;
    println!("{} constraints, {} bytes of SMT-LIB", sentence.constraints.len(), text.len());
    let model = fixpoint_assignment(&g, 0, 200)?;
    println!("fixpoint gain {:.9} (normalized)", model["g"]);
    let report = check_assignment(&sentence, &model, 1e-9)?;
    println!("satisfied: {}, max excess {:.2e}", report.satisfied, report.max_excess);
    Ok(())
}
