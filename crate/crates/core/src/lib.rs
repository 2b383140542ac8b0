//! Concurrent mean-payoff games with finitely many states.
//!
//! Games are stored exactly ([`game::Game`] holds rationals) and solved in
//! floating point. The main entry points:
//!
//! - [`classify::classify`] decides ergodic, sure-ergodic and
//!   almost-sure-ergodic structure.
//! - [`solvers::value_iteration`] brackets the value; the bracket is sound
//!   for ergodic games at every step.
//! - [`solvers::var_hoffman_karp`] finds a q-rounded stationary strategy with
//!   a proven guarantee.
//! - [`generators`] builds the benchmark families and the simple stochastic
//!   game reduction.
//! - [`etr`] writes the value question as a real-arithmetic sentence.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod format;
pub mod game;
pub mod rational;
pub mod matrix;
pub mod classify;
pub mod mdp;
pub mod solvers;
pub mod generators;
pub mod etr;
pub mod record;
pub mod cli;
