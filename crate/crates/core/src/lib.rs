//! Emulator and toolchain for a capability machine with local capabilities.

pub mod asm;
pub mod cli;
pub mod isa;
pub mod link;
pub mod machine;
pub mod malloc;
pub mod scenarios;
