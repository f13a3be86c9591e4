use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

use super::{ParseWordError, Word};

/// Register name: `r0`..`r31`, or the program counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(u8);

impl Reg {
    pub const COUNT: usize = 33;
    pub const PC: Reg = Reg(32);
    pub const R0: Reg = Reg(0);
    pub const R1: Reg = Reg(1);
    pub const ENV: Reg = Reg(30);
    pub const STK: Reg = Reg(31);
    /// Scratch registers reserved for macro expansions.
    pub const T1: Reg = Reg(26);
    pub const T2: Reg = Reg(27);
    pub const T3: Reg = Reg(28);
    pub const T4: Reg = Reg(29);
    pub const TEMPS: [Reg; 4] = [Reg::T1, Reg::T2, Reg::T3, Reg::T4];

    /// General purpose register `rN`; `None` when `n > 31`.
    pub fn gpr(n: u8) -> Option<Reg> {
        (n < 32).then_some(Reg(n))
    }

    pub fn from_index(i: usize) -> Option<Reg> {
        (i < Reg::COUNT).then_some(Reg(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_pc(self) -> bool {
        self == Reg::PC
    }

    pub fn is_temp(self) -> bool {
        Reg::TEMPS.contains(&self)
    }

    /// All registers in ascending index order, `pc` last.
    pub fn all() -> impl Iterator<Item = Reg> {
        (0..Reg::COUNT as u8).map(Reg)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pc() {
            f.write_str("pc")
        } else {
            write!(f, "r{}", self.0)
        }
    }
}

impl FromStr for Reg {
    type Err = ParseWordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let reg = match s {
            "pc" => Some(Reg::PC),
            "r_stk" => Some(Reg::STK),
            "r_env" => Some(Reg::ENV),
            "r_t1" => Some(Reg::T1),
            "r_t2" => Some(Reg::T2),
            "r_t3" => Some(Reg::T3),
            "r_t4" => Some(Reg::T4),
            _ => s
                .strip_prefix('r')
                .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                .filter(|d| d.len() == 1 || !d.starts_with('0'))
                .and_then(|d| d.parse::<u8>().ok())
                .and_then(Reg::gpr),
        };
        reg.ok_or_else(|| ParseWordError::new(format!("unknown register `{s}`")))
    }
}

/// Register-or-immediate operand, generic over the immediate so the
/// assembler can carry symbolic offsets.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand<I = BigInt> {
    Reg(Reg),
    Imm(I),
}

impl<I> Operand<I> {
    fn map_imm<J, E>(self, f: &mut impl FnMut(I) -> Result<J, E>) -> Result<Operand<J>, E> {
        Ok(match self {
            Operand::Reg(r) => Operand::Reg(r),
            Operand::Imm(i) => Operand::Imm(f(i)?),
        })
    }
}

impl From<Reg> for Operand {
    fn from(r: Reg) -> Self {
        Operand::Reg(r)
    }
}

impl From<i64> for Operand {
    fn from(n: i64) -> Self {
        Operand::Imm(n.into())
    }
}

impl<I: fmt::Display> fmt::Display for Operand<I> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => r.fmt(f),
            Operand::Imm(i) => i.fmt(f),
        }
    }
}

/// Machine instruction. Register-only positions take a [`Reg`];
/// positions that accept an immediate take an [`Operand`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Instruction<I = BigInt> {
    Fail,
    Halt,
    Jmp(Reg),
    Jnz(Reg, Operand<I>),
    Move(Reg, Operand<I>),
    Load(Reg, Reg),
    Store(Reg, Reg),
    Plus(Reg, Operand<I>, Operand<I>),
    Minus(Reg, Operand<I>, Operand<I>),
    Lt(Reg, Operand<I>, Operand<I>),
    Lea(Reg, Operand<I>),
    Restrict(Reg, Operand<I>),
    Subseg(Reg, Operand<I>, Operand<I>),
    IsPtr(Reg, Operand<I>),
    GetP(Reg, Reg),
    GetL(Reg, Reg),
    GetB(Reg, Reg),
    GetE(Reg, Reg),
    GetA(Reg, Reg),
}

/// Operand shape of an instruction field.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    Reg,
    Any,
}

const OPCODE_BASE: u32 = 32;

pub const MNEMONICS: [&str; 19] = [
    "fail", "halt", "jmp", "jnz", "move", "load", "store", "plus", "minus", "lt", "lea",
    "restrict", "subseg", "isptr", "getp", "getl", "getb", "gete", "geta",
];

fn shape(opcode: u32) -> &'static [Slot] {
    use Slot::*;
    match opcode {
        0 | 1 => &[],
        2 => &[Reg],
        3 | 4 | 10 | 11 | 13 => &[Reg, Any],
        5 | 6 | 14..=18 => &[Reg, Reg],
        7 | 8 | 9 | 12 => &[Reg, Any, Any],
        _ => unreachable!("opcode out of range"),
    }
}

impl<I> Instruction<I> {
    pub fn opcode(&self) -> u32 {
        use Instruction::*;
        match self {
            Fail => 0,
            Halt => 1,
            Jmp(_) => 2,
            Jnz(..) => 3,
            Move(..) => 4,
            Load(..) => 5,
            Store(..) => 6,
            Plus(..) => 7,
            Minus(..) => 8,
            Lt(..) => 9,
            Lea(..) => 10,
            Restrict(..) => 11,
            Subseg(..) => 12,
            IsPtr(..) => 13,
            GetP(..) => 14,
            GetL(..) => 15,
            GetB(..) => 16,
            GetE(..) => 17,
            GetA(..) => 18,
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        MNEMONICS[self.opcode() as usize]
    }

    /// Operands in textual order.
    pub fn operands(&self) -> Vec<Operand<&I>> {
        use Instruction::*;
        fn r<I>(r: &Reg) -> Operand<&I> {
            Operand::Reg(*r)
        }
        fn o<I>(o: &Operand<I>) -> Operand<&I> {
            match o {
                Operand::Reg(r) => Operand::Reg(*r),
                Operand::Imm(i) => Operand::Imm(i),
            }
        }
        match self {
            Fail | Halt => vec![],
            Jmp(a) => vec![r(a)],
            Load(a, b) | Store(a, b) | GetP(a, b) | GetL(a, b) | GetB(a, b) | GetE(a, b)
            | GetA(a, b) => vec![r(a), r(b)],
            Jnz(a, b) | Move(a, b) | Lea(a, b) | Restrict(a, b) | IsPtr(a, b) => {
                vec![r(a), o(b)]
            }
            Plus(a, b, c) | Minus(a, b, c) | Lt(a, b, c) | Subseg(a, b, c) => {
                vec![r(a), o(b), o(c)]
            }
        }
    }

    /// Build an instruction from a mnemonic and operands, checking shape.
    pub fn build(mnemonic: &str, mut ops: Vec<Operand<I>>) -> Result<Self, String> {
        let opcode = MNEMONICS
            .iter()
            .position(|m| *m == mnemonic)
            .ok_or_else(|| format!("unknown instruction `{mnemonic}`"))? as u32;
        let slots = shape(opcode);
        if ops.len() != slots.len() {
            return Err(format!(
                "`{mnemonic}` takes {} operand(s), found {}",
                slots.len(),
                ops.len()
            ));
        }
        for (i, (slot, op)) in slots.iter().zip(&ops).enumerate() {
            if *slot == Slot::Reg && !matches!(op, Operand::Reg(_)) {
                return Err(format!("operand {} of `{mnemonic}` must be a register", i + 1));
            }
        }
        let reg = |o: Operand<I>| match o {
            Operand::Reg(r) => r,
            Operand::Imm(_) => unreachable!("shape checked"),
        };
        let mut it = ops.drain(..);
        let mut next = || it.next().expect("arity checked");
        use Instruction::*;
        Ok(match opcode {
            0 => Fail,
            1 => Halt,
            2 => Jmp(reg(next())),
            3 => Jnz(reg(next()), next()),
            4 => Move(reg(next()), next()),
            5 => Load(reg(next()), reg(next())),
            6 => Store(reg(next()), reg(next())),
            7 => Plus(reg(next()), next(), next()),
            8 => Minus(reg(next()), next(), next()),
            9 => Lt(reg(next()), next(), next()),
            10 => Lea(reg(next()), next()),
            11 => Restrict(reg(next()), next()),
            12 => Subseg(reg(next()), next(), next()),
            13 => IsPtr(reg(next()), next()),
            14 => GetP(reg(next()), reg(next())),
            15 => GetL(reg(next()), reg(next())),
            16 => GetB(reg(next()), reg(next())),
            17 => GetE(reg(next()), reg(next())),
            18 => GetA(reg(next()), reg(next())),
            _ => unreachable!(),
        })
    }

    /// Rewrite every immediate, keeping registers and shape.
    pub fn try_map_imm<J, E>(self, mut f: impl FnMut(I) -> Result<J, E>) -> Result<Instruction<J>, E> {
        use Instruction::*;
        let f = &mut f;
        Ok(match self {
            Fail => Fail,
            Halt => Halt,
            Jmp(a) => Jmp(a),
            Jnz(a, b) => Jnz(a, b.map_imm(f)?),
            Move(a, b) => Move(a, b.map_imm(f)?),
            Load(a, b) => Load(a, b),
            Store(a, b) => Store(a, b),
            Plus(a, b, c) => Plus(a, b.map_imm(f)?, c.map_imm(f)?),
            Minus(a, b, c) => Minus(a, b.map_imm(f)?, c.map_imm(f)?),
            Lt(a, b, c) => Lt(a, b.map_imm(f)?, c.map_imm(f)?),
            Lea(a, b) => Lea(a, b.map_imm(f)?),
            Restrict(a, b) => Restrict(a, b.map_imm(f)?),
            Subseg(a, b, c) => Subseg(a, b.map_imm(f)?, c.map_imm(f)?),
            IsPtr(a, b) => IsPtr(a, b.map_imm(f)?),
            GetP(a, b) => GetP(a, b),
            GetL(a, b) => GetL(a, b),
            GetB(a, b) => GetB(a, b),
            GetE(a, b) => GetE(a, b),
            GetA(a, b) => GetA(a, b),
        })
    }
}

impl<I: fmt::Display> fmt::Display for Instruction<I> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())?;
        for op in self.operands() {
            write!(f, " {op}")?;
        }
        Ok(())
    }
}

impl FromStr for Instruction {
    type Err = ParseWordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut toks = s.split_whitespace();
        let mnemonic = toks
            .next()
            .ok_or_else(|| ParseWordError::new("empty instruction"))?;
        let ops = toks
            .map(|t| match t.parse::<Reg>() {
                Ok(r) => Ok(Operand::Reg(r)),
                Err(_) => super::word::parse_int(t).map(Operand::Imm),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Instruction::build(mnemonic, ops).map_err(ParseWordError::new)
    }
}

// Operand fields are mapped to naturals (registers to even numbers,
// zigzagged immediates to odd ones) and folded together with the Cantor
// pairing function, which is a bijection between pairs of naturals and
// naturals. The opcode occupies the low residue modulo 32.

fn zigzag(n: &BigInt) -> BigInt {
    if n.is_negative() {
        let d: BigInt = n * 2;
        -d - 1
    } else {
        n * 2
    }
}

fn unzigzag(z: &BigInt) -> BigInt {
    if (z % 2u32).is_zero() {
        z / 2
    } else {
        let h: BigInt = (z + 1) / 2;
        -h
    }
}

fn pair(a: BigInt, b: BigInt) -> BigInt {
    let s = &a + &b;
    (&s * (&s + 1u32)) / 2u32 + b
}

fn unpair(z: &BigInt) -> (BigInt, BigInt) {
    let w = ((z * 8u32 + 1u32).sqrt() - 1u32) / 2u32;
    let t = (&w * (&w + 1u32)) / 2u32;
    let b = z - t;
    let a = w - &b;
    (a, b)
}

fn field(op: &Operand<&BigInt>) -> BigInt {
    match op {
        Operand::Reg(r) => BigInt::from(2 * r.index()),
        Operand::Imm(n) => zigzag(n) * 2 + 1,
    }
}

fn unfield(f: BigInt) -> Option<Operand> {
    if (&f % 2u32).is_zero() {
        let idx = (f / 2u32).to_usize()?;
        Reg::from_index(idx).map(Operand::Reg)
    } else {
        Some(Operand::Imm(unzigzag(&((f - 1u32) / 2u32))))
    }
}

/// Encode an instruction as a non-negative integer.
pub fn encode(instr: &Instruction) -> BigInt {
    let fields: Vec<BigInt> = instr.operands().iter().map(field).collect();
    let packed = fields
        .into_iter()
        .rev()
        .reduce(|acc, f| pair(f, acc))
        .unwrap_or_else(BigInt::zero);
    packed * OPCODE_BASE + instr.opcode()
}

/// Decode an integer into an instruction; `None` when it is not the
/// encoding of any instruction.
pub fn decode(n: &BigInt) -> Option<Instruction> {
    if n.is_negative() {
        return None;
    }
    let opcode = (n % OPCODE_BASE).to_u32()?;
    if opcode as usize >= MNEMONICS.len() {
        return None;
    }
    let mut rest: BigInt = n / OPCODE_BASE;
    let slots = shape(opcode);
    let mut ops = Vec::with_capacity(slots.len());
    if slots.is_empty() && !rest.is_zero() {
        return None;
    }
    for (i, slot) in slots.iter().enumerate() {
        let f = if i + 1 == slots.len() {
            std::mem::take(&mut rest)
        } else {
            let (a, b) = unpair(&rest);
            rest = b;
            a
        };
        let op = unfield(f)?;
        if *slot == Slot::Reg && !matches!(op, Operand::Reg(_)) {
            return None;
        }
        ops.push(op);
    }
    Instruction::build(MNEMONICS[opcode as usize], ops).ok()
}

/// Decode a memory word as an instruction; capabilities and invalid
/// integers decode to `fail`.
pub fn decode_word(w: &Word) -> Instruction {
    match w {
        Word::Int(n) => decode(n).unwrap_or(Instruction::Fail),
        Word::Cap(_) => Instruction::Fail,
    }
}

pub fn encode_word(instr: &Instruction) -> Word {
    Word::Int(encode(instr))
}
