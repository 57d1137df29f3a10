//! Lab script language: a linear, line-oriented encoding of a bench
//! procedure, and the interpreter that drives a world through it.

pub mod interp;
pub mod parser;

pub use interp::{
    apply_statement, check, grab, run_script, run_script_observed, tilt_target, AssertResult,
    Report, RunError,
};
pub use parser::{
    parse_script, parse_script_bytes, parse_statement, Cmp, Predicate, Script, ScriptError,
    Statement, SyntaxError,
};
