//! Set-oriented tools for Conley index computations on flows: cubical outer
//! approximations, chain recurrence, Morse graphs, index pairs, Lyapunov
//! functions and regular index filtrations.

pub mod checks;
pub mod commands;
pub mod config;
pub mod distance;
pub mod error;
pub mod flow;
pub mod graph;
pub mod grid;
pub mod index_pair;
pub mod io;
pub mod lyapunov;
pub mod recurrence;
pub mod scc;

pub use error::{Error, Result};
