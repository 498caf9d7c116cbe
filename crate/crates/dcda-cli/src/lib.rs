//! Command-line front end for the `dcda` library.
//!
//! The binary (`dcda`) wires four subcommands around the library: `run` a
//! single configuration, `sweep` a grid of configurations, `reproduce` the
//! built-in presets, and `bounds` to evaluate convergence certificates
//! against a recorded trace. Everything here is plumbing; the simulator,
//! objectives, and bound formulas live in the `dcda` crate.
//!
//! The pieces are exposed as a library so integration tests can exercise the
//! config parser and the round-trip invariant without spawning processes.

pub mod bounds_cmd;
pub mod config;
pub mod reproduce;
pub mod runner;
pub mod summary;
pub mod sweep;

/// Process exit codes used by the binary.
///
/// 0 success, 1 configuration error, 2 numerical divergence,
/// 3 certificate violation, 4 i/o failure.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const DIVERGENCE: i32 = 2;
    pub const VIOLATION: i32 = 3;
    pub const IO: i32 = 4;
}

/// Map a library error onto the documented exit codes.
pub fn exit_code_for(err: &dcda::Error) -> i32 {
    match err {
        dcda::Error::Config(_) | dcda::Error::Parse { .. } => exit::CONFIG,
        dcda::Error::Numerical(_) | dcda::Error::Divergence { .. } => exit::DIVERGENCE,
        dcda::Error::Io(_) => exit::IO,
    }
}
