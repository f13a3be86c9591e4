//! Words, capabilities, permissions and the instruction set.

mod instr;
mod perm;
mod word;

use thiserror::Error;

pub use instr::{decode, decode_word, encode, encode_word, Instruction, Operand, Reg, MNEMONICS};
pub use perm::{Locality, Perm, PermPair};
pub use word::{Bound, Capability, Word, INFINITY_CODE};

pub(crate) use word::parse_int;

/// Malformed textual word, register or instruction.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ParseWordError(String);

impl ParseWordError {
    pub fn new(msg: impl Into<String>) -> Self {
        ParseWordError(msg.into())
    }
}
