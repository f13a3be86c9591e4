//! Registers, memory and the single-step semantics.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use num_bigint::BigInt;
use num_traits::Signed;

use crate::isa::{
    decode_word, Bound, Capability, Instruction, Operand, Perm, PermPair, Reg, Word,
    INFINITY_CODE,
};

/// The 33 registers; every register starts as `int 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RegisterFile {
    regs: [Word; Reg::COUNT],
}

impl Default for RegisterFile {
    fn default() -> Self {
        RegisterFile {
            regs: std::array::from_fn(|_| Word::zero()),
        }
    }
}

impl RegisterFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, r: Reg) -> &Word {
        &self.regs[r.index()]
    }

    pub fn set(&mut self, r: Reg, w: Word) {
        self.regs[r.index()] = w;
    }

    pub fn with(mut self, r: Reg, w: impl Into<Word>) -> Self {
        self.set(r, w.into());
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (Reg, &Word)> {
        Reg::all().map(move |r| (r, &self.regs[r.index()]))
    }
}

/// Sparse memory; unwritten addresses read as `int 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Memory {
    cells: BTreeMap<BigInt, Word>,
}

static ZERO: std::sync::OnceLock<Word> = std::sync::OnceLock::new();

impl Memory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, addr: &BigInt) -> &Word {
        self.cells
            .get(addr)
            .unwrap_or_else(|| ZERO.get_or_init(Word::zero))
    }

    pub fn set(&mut self, addr: impl Into<BigInt>, w: Word) {
        self.cells.insert(addr.into(), w);
    }

    pub fn read(&self, addr: u64) -> &Word {
        self.get(&BigInt::from(addr))
    }

    /// Explicitly written cells, in address order.
    pub fn iter(&self) -> impl Iterator<Item = (&BigInt, &Word)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Write `<addr>: <word>` lines in address order.
    pub fn dump(&self, out: &mut impl io::Write) -> io::Result<()> {
        for (a, w) in &self.cells {
            writeln!(out, "{a}: {w}")?;
        }
        Ok(())
    }

    pub fn dump_string(&self) -> String {
        let mut buf = Vec::new();
        self.dump(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("dump is ASCII")
    }
}

impl FromIterator<(BigInt, Word)> for Memory {
    fn from_iter<T: IntoIterator<Item = (BigInt, Word)>>(iter: T) -> Self {
        Memory {
            cells: iter.into_iter().collect(),
        }
    }
}

/// Executable configuration: registers plus memory.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct ExecConf {
    pub regs: RegisterFile,
    pub mem: Memory,
}

impl ExecConf {
    pub fn new(regs: RegisterFile, mem: Memory) -> Self {
        ExecConf { regs, mem }
    }
}

/// Result of a single pure step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepResult {
    Running(ExecConf),
    Halted(Memory),
    Failed,
}

/// Result of a fuel-bounded run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    Halted { mem: Memory, steps: u64 },
    Failed { steps: u64 },
    OutOfFuel(ExecConf),
}

impl RunOutcome {
    pub fn tag(&self) -> &'static str {
        match self {
            RunOutcome::Halted { .. } => "halted",
            RunOutcome::Failed { .. } => "failed",
            RunOutcome::OutOfFuel(_) => "out-of-fuel",
        }
    }
}

/// How an in-place run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Running,
    Halted,
    Failed,
}

impl Status {
    pub fn tag(self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::Halted => "halted",
            Status::Failed => "failed",
        }
    }
}

/// One executed step, as reported to a [`TraceSink`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub step: u64,
    pub pc_addr: Option<BigInt>,
    pub instr: Option<Instruction>,
    pub status: Status,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.step)?;
        match &self.pc_addr {
            Some(a) => write!(f, "{a} ")?,
            None => f.write_str("- ")?,
        }
        let mnemonic = self.instr.as_ref().map_or("-", |i| i.mnemonic());
        write!(f, "{mnemonic} {}", self.status.tag())
    }
}

pub trait TraceSink {
    fn event(&mut self, ev: TraceEvent);
}

impl TraceSink for Vec<TraceEvent> {
    fn event(&mut self, ev: TraceEvent) {
        self.push(ev);
    }
}

/// Writes one trace line per step.
pub struct TraceWriter<W: io::Write>(pub W);

impl<W: io::Write> TraceSink for TraceWriter<W> {
    fn event(&mut self, ev: TraceEvent) {
        // Trace output is best effort; a closed pipe should not stop the run.
        let _ = writeln!(self.0, "{ev}");
    }
}

/// Internal failure marker; every failure collapses to `Status::Failed`.
struct Stuck;

type Exec<T> = Result<T, Stuck>;

fn cap_of(w: &Word) -> Exec<&Capability> {
    w.as_cap().ok_or(Stuck)
}

fn int_of(regs: &RegisterFile, op: &Operand) -> Exec<BigInt> {
    match op {
        Operand::Imm(n) => Ok(n.clone()),
        Operand::Reg(r) => regs.get(*r).as_int().cloned().ok_or(Stuck),
    }
}

fn word_of(regs: &RegisterFile, op: &Operand) -> Word {
    match op {
        Operand::Imm(n) => Word::Int(n.clone()),
        Operand::Reg(r) => regs.get(*r).clone(),
    }
}

/// Advance `pc` by one; fails when `pc` does not hold a capability.
fn advance_pc(regs: &mut RegisterFile) -> Exec<Status> {
    match &mut regs.regs[Reg::PC.index()] {
        Word::Cap(c) => {
            c.addr += 1;
            Ok(Status::Running)
        }
        Word::Int(_) => Err(Stuck),
    }
}

fn set_and_advance(regs: &mut RegisterFile, r: Reg, w: Word) -> Exec<Status> {
    regs.set(r, w);
    advance_pc(regs)
}

fn modify_cap(
    regs: &mut RegisterFile,
    r: Reg,
    f: impl FnOnce(&Capability) -> Exec<Capability>,
) -> Exec<Status> {
    let new = f(cap_of(regs.get(r))?)?;
    set_and_advance(regs, r, Word::Cap(new))
}

/// The instruction `pc` would execute, if `pc` is a valid executable
/// in-bounds capability.
pub fn fetch(conf: &ExecConf) -> Option<Instruction> {
    let pc = conf.regs.get(Reg::PC).as_cap()?;
    (pc.perm().can_execute() && pc.within_bounds()).then(|| decode_word(conf.mem.get(&pc.addr)))
}

fn execute(conf: &mut ExecConf, instr: &Instruction) -> Exec<Status> {
    use Instruction::*;
    let regs = &mut conf.regs;
    match instr {
        Fail => Err(Stuck),
        Halt => Ok(Status::Halted),
        Jmp(r) => {
            let target = regs.get(*r).promote();
            regs.set(Reg::PC, target);
            Ok(Status::Running)
        }
        Jnz(r, cond) => {
            if word_of(regs, cond).non_zero() {
                let target = regs.get(*r).promote();
                regs.set(Reg::PC, target);
                Ok(Status::Running)
            } else {
                advance_pc(regs)
            }
        }
        Move(r, src) => {
            let w = word_of(regs, src);
            set_and_advance(regs, *r, w)
        }
        Load(dst, src) => {
            let c = cap_of(regs.get(*src))?;
            if !c.perm().can_read() || !c.within_bounds() {
                return Err(Stuck);
            }
            let w = conf.mem.get(&c.addr).clone();
            set_and_advance(regs, *dst, w)
        }
        Store(dst, src) => {
            let c = cap_of(regs.get(*dst))?;
            if !c.perm().can_write() || !c.within_bounds() {
                return Err(Stuck);
            }
            let w = regs.get(*src).clone();
            if w.is_local_cap() && !c.perm().can_write_local() {
                return Err(Stuck);
            }
            conf.mem.set(c.addr.clone(), w);
            advance_pc(regs)
        }
        Plus(r, a, b) => {
            let n = int_of(regs, a)? + int_of(regs, b)?;
            set_and_advance(regs, *r, Word::Int(n))
        }
        Minus(r, a, b) => {
            let n = int_of(regs, a)? - int_of(regs, b)?;
            set_and_advance(regs, *r, Word::Int(n))
        }
        Lt(r, a, b) => {
            let n = i64::from(int_of(regs, a)? < int_of(regs, b)?);
            set_and_advance(regs, *r, Word::int(n))
        }
        Lea(r, off) => {
            let n = int_of(regs, off)?;
            modify_cap(regs, *r, |c| {
                let addr = &c.addr + n;
                if c.perm() == Perm::E || addr.is_negative() {
                    return Err(Stuck);
                }
                Ok(c.with_addr(addr))
            })
        }
        Restrict(r, code) => {
            let pair = PermPair::decode(&int_of(regs, code)?);
            modify_cap(regs, *r, |c| {
                if !pair.flows_to(c.pair) {
                    return Err(Stuck);
                }
                Ok(Capability { pair, ..c.clone() })
            })
        }
        Subseg(r, lo, hi) => {
            let lo = int_of(regs, lo)?;
            let hi = int_of(regs, hi)?;
            modify_cap(regs, *r, |c| {
                if c.perm() == Perm::E || lo.is_negative() || lo < c.base {
                    return Err(Stuck);
                }
                let end = if hi == BigInt::from(INFINITY_CODE) && c.end == Bound::Infinity {
                    Bound::Infinity
                } else if !hi.is_negative() && Bound::Addr(hi.clone()) <= c.end {
                    Bound::Addr(hi)
                } else {
                    return Err(Stuck);
                };
                Ok(Capability {
                    base: lo,
                    end,
                    ..c.clone()
                })
            })
        }
        IsPtr(r, src) => {
            let n = i64::from(word_of(regs, src).is_cap());
            set_and_advance(regs, *r, Word::int(n))
        }
        GetP(r, src) => {
            let n = cap_of(regs.get(*src))?.perm().code();
            set_and_advance(regs, *r, Word::int(i64::from(n)))
        }
        GetL(r, src) => {
            let n = cap_of(regs.get(*src))?.loc().code();
            set_and_advance(regs, *r, Word::int(i64::from(n)))
        }
        GetB(r, src) => {
            let n = cap_of(regs.get(*src))?.base.clone();
            set_and_advance(regs, *r, Word::Int(n))
        }
        GetE(r, src) => {
            let n = cap_of(regs.get(*src))?.end.as_int();
            set_and_advance(regs, *r, Word::Int(n))
        }
        GetA(r, src) => {
            let n = cap_of(regs.get(*src))?.addr.clone();
            set_and_advance(regs, *r, Word::Int(n))
        }
    }
}

/// Execute one step in place. On `Failed` the configuration may hold
/// partially updated registers and must not be stepped further.
pub fn step_in_place(conf: &mut ExecConf) -> (Status, Option<Instruction>) {
    match fetch(conf) {
        None => (Status::Failed, None),
        Some(instr) => {
            let status = execute(conf, &instr).unwrap_or(Status::Failed);
            (status, Some(instr))
        }
    }
}

/// Pure single step.
pub fn step(conf: &ExecConf) -> StepResult {
    let mut next = conf.clone();
    match step_in_place(&mut next).0 {
        Status::Running => StepResult::Running(next),
        Status::Halted => StepResult::Halted(next.mem),
        Status::Failed => StepResult::Failed,
    }
}

/// Run for at most `fuel` steps, mutating `conf`. Returns the final status
/// and the number of steps taken (a halting or failing step counts).
pub fn run_in_place(
    conf: &mut ExecConf,
    fuel: u64,
    mut trace: Option<&mut dyn TraceSink>,
) -> (Status, u64) {
    for n in 0..fuel {
        let pc_addr = conf.regs.get(Reg::PC).as_cap().map(|c| c.addr.clone());
        let (status, instr) = step_in_place(conf);
        if let Some(sink) = trace.as_deref_mut() {
            sink.event(TraceEvent {
                step: n + 1,
                pc_addr,
                instr,
                status,
            });
        }
        if status != Status::Running {
            return (status, n + 1);
        }
    }
    (Status::Running, fuel)
}

/// Fuel-bounded run.
pub fn run(conf: &ExecConf, fuel: u64, trace: Option<&mut dyn TraceSink>) -> RunOutcome {
    let mut conf = conf.clone();
    match run_in_place(&mut conf, fuel, trace) {
        (Status::Running, _) => RunOutcome::OutOfFuel(conf),
        (Status::Halted, steps) => RunOutcome::Halted {
            mem: conf.mem,
            steps,
        },
        (Status::Failed, steps) => RunOutcome::Failed { steps },
    }
}

