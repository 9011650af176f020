//! Command-line front end for `hrt-core` and the benchmark harness behind
//! the `bench-*` subcommands.

pub mod bench;
pub mod commands;

pub use commands::{run, Cli};

/// Process exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    /// Bad flags, unreadable or malformed input.
    pub const USAGE: u8 = 1;
    /// A matching failed its validity or stability check.
    pub const INVALID: u8 = 2;
    /// The solver produced something that failed its own verification.
    pub const INTERNAL: u8 = 3;
}
