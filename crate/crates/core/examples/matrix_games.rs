//! Minimax solutions and their best q-rounded approximations.

use cmpg::matrix::{best_q_rounded, solve_matrix_game, MatrixGame, DEFAULT_NODE_BUDGET};

fn main() -> cmpg::error::Result<()> {
    // Rock, paper, scissors with a bonus for winning with rock.
    let m = MatrixGame::from_rows(&[vec![0.0, -1.0, 2.0], vec![1.0, 0.0, -1.0], vec![-1.0, 1.0, 0.0]])?;
    let sol = solve_matrix_game(&m);
    println!("value {:.6}, x = {:.4?}, y = {:.4?}", sol.value, sol.x, sol.y);
    for q in [2u64, 5, 12, 100] {
        let r = best_q_rounded(&m, q, DEFAULT_NODE_BUDGET)?;
        println!("q = {q:>3}: counts {:?} guarantee {:.6}", r.x.counts, r.value);
    }
    Ok(())
}
