//! Seeded generators for random configurations and programs.

use localcap::isa::{
    encode_word, Bound, Capability, Instruction, Locality, Operand, Perm, Reg, Word, MNEMONICS,
};
use localcap::machine::{ExecConf, Memory, RegisterFile};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

pub const MEM_WORDS: i64 = 16;

pub fn perm(rng: &mut StdRng) -> Perm {
    *Perm::ALL.choose(rng).unwrap()
}

pub fn locality(rng: &mut StdRng) -> Locality {
    if rng.gen_bool(0.5) {
        Locality::Local
    } else {
        Locality::Global
    }
}

pub fn capability(rng: &mut StdRng) -> Capability {
    let base = rng.gen_range(0..MEM_WORDS);
    let end = if rng.gen_ratio(1, 8) {
        Bound::Infinity
    } else {
        Bound::Addr(rng.gen_range(base - 1..MEM_WORDS + 2).max(0).into())
    };
    let addr = rng.gen_range(-2..MEM_WORDS + 2);
    Capability::new(perm(rng), locality(rng), base, end, addr)
}

pub fn reg(rng: &mut StdRng) -> Reg {
    match rng.gen_range(0..10) {
        0 => Reg::PC,
        _ => Reg::gpr(rng.gen_range(0..6)).unwrap(),
    }
}

pub fn imm(rng: &mut StdRng) -> i64 {
    match rng.gen_range(0..6) {
        0 => -42,
        1 => rng.gen_range(0..16),
        _ => rng.gen_range(-3..20),
    }
}

fn operand(rng: &mut StdRng, mnemonic: &str, slot: usize) -> Operand {
    // Register-only slots: first operand everywhere, and both operands of the
    // load/store/get family.
    let reg_only = slot == 0
        || matches!(mnemonic, "load" | "store" | "getp" | "getl" | "getb" | "gete" | "geta");
    if reg_only || rng.gen_bool(0.5) {
        Operand::Reg(reg(rng))
    } else {
        Operand::from(imm(rng))
    }
}

fn arity(mnemonic: &str) -> usize {
    match mnemonic {
        "fail" | "halt" => 0,
        "jmp" => 1,
        "plus" | "minus" | "lt" | "subseg" => 3,
        _ => 2,
    }
}

pub fn instruction_from(rng: &mut StdRng, mnemonics: &[&str]) -> Instruction {
    let m = *mnemonics.choose(rng).unwrap();
    let ops = (0..arity(m)).map(|i| operand(rng, m, i)).collect();
    Instruction::build(m, ops).expect("generator respects shapes")
}

pub fn instruction(rng: &mut StdRng) -> Instruction {
    instruction_from(rng, &MNEMONICS)
}

pub fn word(rng: &mut StdRng) -> Word {
    match rng.gen_range(0..4) {
        0 => Word::int(imm(rng)),
        1 => Word::Cap(capability(rng)),
        _ => encode_word(&instruction(rng)),
    }
}

/// Random configuration: six general registers, a 16-word memory and a pc
/// that usually points into it.
pub fn conf(rng: &mut StdRng) -> ExecConf {
    let mut regs = RegisterFile::new();
    for i in 0..6 {
        let w = if rng.gen_bool(0.5) {
            Word::Cap(capability(rng))
        } else {
            Word::int(imm(rng))
        };
        regs.set(Reg::gpr(i).unwrap(), w);
    }
    let pc = if rng.gen_ratio(7, 8) {
        let p = *[Perm::Rx, Perm::Rwx, Perm::Rwlx].choose(rng).unwrap();
        Word::Cap(Capability::span(p, locality(rng), 0, MEM_WORDS - 1, rng.gen_range(0..MEM_WORDS)))
    } else {
        Word::Cap(capability(rng))
    };
    regs.set(Reg::PC, pc);
    let mut mem = Memory::new();
    for a in 0..MEM_WORDS {
        mem.set(a, word(rng));
    }
    ExecConf::new(regs, mem)
}

/// Straight-line program of non-branching instructions ending in `halt`,
/// loaded at address 0 with a full-range rwx pc.
pub fn straight_line(rng: &mut StdRng, len: usize) -> ExecConf {
    const BODY: [&str; 8] = ["move", "plus", "minus", "lt", "isptr", "getb", "geta", "lea"];
    let mut mem = Memory::new();
    for a in 0..len {
        let mut i = instruction_from(rng, &BODY);
        while matches!(i.operands().first(), Some(Operand::Reg(r)) if r.is_pc()) {
            i = instruction_from(rng, &BODY);
        }
        mem.set(a as i64, encode_word(&i));
    }
    mem.set(len as i64, encode_word(&Instruction::Halt));
    let mut regs = RegisterFile::new();
    for i in 0..6 {
        regs.set(Reg::gpr(i).unwrap(), Word::Cap(capability(rng)));
    }
    regs.set(
        Reg::PC,
        Word::Cap(Capability::span(Perm::Rwx, Locality::Global, 0, len as i64, 0)),
    );
    ExecConf::new(regs, mem)
}
