//! Front end for `sdecert`: the problem-file grammar, subcommand dispatch
//! and JSON reports.

pub mod commands;
pub mod expr;
pub mod problem;
pub mod report;

pub use commands::{run, Command, Options, Outcome};
pub use expr::{parse_expr, ParseError};
pub use problem::{parse_problem, ProblemFile};
