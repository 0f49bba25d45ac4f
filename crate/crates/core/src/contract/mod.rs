//! Outer maximin over finite prior sets and the successive convex programming
//! loop that grows the prior set until the saddle gap closes.

mod outer;
mod scp;

pub use outer::{solve_outer, OuterOptions, OuterSolution};
pub use scp::{saddle_gap, scp_solve, SaddleProblem, SaddleResult, ScpOptions, StopReason, TraceRow};
