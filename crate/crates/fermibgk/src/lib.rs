//! Command-line front end for `fermibgk-core`: TOML configuration with
//! scenario presets, CSV/binary/key-value output, and the verification
//! subcommands.
//!
//! Exit codes: `0` success, `2` configuration error, `3` admissibility
//! violation (`B` outside `(0, β(−ln 3))`, or an inadmissible global
//! equilibrium), `4` a verification check failed, `5` I/O error, `6` other
//! numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod lincheck;

pub use config::{ScenarioId, Settings};
pub use error::{AppError, AppResult, ExitStatus};
