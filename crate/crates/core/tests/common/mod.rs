#![allow(dead_code)]

pub mod conformance;
pub mod gen;
pub mod pipeline;

use localcap::isa::{Bound, Capability, Instruction, Locality, Perm, Reg, Word};

pub fn cap(perm: Perm, loc: Locality, base: i64, end: i64, addr: i64) -> Word {
    Word::Cap(Capability::span(perm, loc, base, end, addr))
}

pub fn cap_inf(perm: Perm, loc: Locality, base: i64, addr: i64) -> Word {
    Word::Cap(Capability::new(perm, loc, base, Bound::Infinity, addr))
}

pub fn r(n: u8) -> Reg {
    Reg::gpr(n).unwrap()
}

pub fn parse_instr(s: &str) -> Instruction {
    s.parse().unwrap_or_else(|e| panic!("bad instruction `{s}`: {e}"))
}
