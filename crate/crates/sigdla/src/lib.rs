//! File formats, oracles and drivers around [`sigdla_core`].
//!
//! The `sigdla` binary is a thin command-line layer over these modules.

pub mod bench;
pub mod formats;
pub mod manifest;
pub mod oracle;
pub mod stimulus;
pub mod verify;
