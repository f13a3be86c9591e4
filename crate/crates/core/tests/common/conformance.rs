//! Hand-built single-step table: each case gives a starting configuration
//! and the exact expected result.

use localcap::isa::{encode_word, Locality::*, Perm::*, Reg, Word};
use localcap::machine::{ExecConf, Memory, RegisterFile, StepResult};

use super::{cap, cap_inf, parse_instr, r};

pub const CODE_AT: i64 = 10;

pub enum Expect {
    /// Register and memory updates, then `pc` advances by one.
    Next,
    /// `pc` replaced by the word, with the register updates.
    Jump(Word),
    Halted,
    Failed,
}

pub struct Case {
    pub name: &'static str,
    pub instr: &'static str,
    pub regs: Vec<(Reg, Word)>,
    pub mem: Vec<(i64, Word)>,
    pub pc: Word,
    /// Raw word at the code address instead of an encoded instruction.
    pub raw: Option<Word>,
    pub reg_updates: Vec<(Reg, Word)>,
    pub mem_updates: Vec<(i64, Word)>,
    pub expect: Expect,
}

fn default_pc() -> Word {
    cap(Rwx, Global, 0, 63, CODE_AT)
}

impl Case {
    fn new(name: &'static str, instr: &'static str) -> Case {
        Case {
            name,
            instr,
            regs: Vec::new(),
            mem: Vec::new(),
            pc: default_pc(),
            raw: None,
            reg_updates: Vec::new(),
            mem_updates: Vec::new(),
            expect: Expect::Next,
        }
    }

    fn with(mut self, reg: Reg, w: Word) -> Self {
        self.regs.push((reg, w));
        self
    }

    fn at(mut self, addr: i64, w: Word) -> Self {
        self.mem.push((addr, w));
        self
    }

    fn pc(mut self, w: Word) -> Self {
        self.pc = w;
        self
    }

    fn raw(mut self, w: Word) -> Self {
        self.raw = Some(w);
        self
    }

    fn sets(mut self, reg: Reg, w: Word) -> Self {
        self.reg_updates.push((reg, w));
        self
    }

    fn writes(mut self, addr: i64, w: Word) -> Self {
        self.mem_updates.push((addr, w));
        self
    }

    fn jumps(mut self, w: Word) -> Self {
        self.expect = Expect::Jump(w);
        self
    }

    fn halts(mut self) -> Self {
        self.expect = Expect::Halted;
        self
    }

    fn fails(mut self) -> Self {
        self.expect = Expect::Failed;
        self
    }

    pub fn mnemonic(&self) -> &str {
        self.instr.split_whitespace().next().unwrap_or("")
    }

    pub fn conf(&self) -> ExecConf {
        let mut regs = RegisterFile::new();
        for (reg, w) in &self.regs {
            regs.set(*reg, w.clone());
        }
        regs.set(Reg::PC, self.pc.clone());
        let mut mem = Memory::new();
        let code = self.raw.clone().unwrap_or_else(|| encode_word(&parse_instr(self.instr)));
        mem.set(CODE_AT, code);
        for (a, w) in &self.mem {
            mem.set(*a, w.clone());
        }
        ExecConf::new(regs, mem)
    }

    pub fn expected(&self) -> StepResult {
        let mut conf = self.conf();
        match &self.expect {
            Expect::Failed => StepResult::Failed,
            Expect::Halted => StepResult::Halted(conf.mem),
            Expect::Next | Expect::Jump(_) => {
                for (reg, w) in &self.reg_updates {
                    conf.regs.set(*reg, w.clone());
                }
                for (a, w) in &self.mem_updates {
                    conf.mem.set(*a, w.clone());
                }
                match &self.expect {
                    Expect::Jump(w) => conf.regs.set(Reg::PC, w.clone()),
                    _ => {
                        let Word::Cap(mut pc) = conf.regs.get(Reg::PC).clone() else {
                            panic!("case {} expects a step from a non-capability pc", self.name);
                        };
                        pc.addr += 1;
                        conf.regs.set(Reg::PC, Word::Cap(pc));
                    }
                }
                StepResult::Running(conf)
            }
        }
    }
}

fn int(n: i64) -> Word {
    Word::int(n)
}

pub fn cases() -> Vec<Case> {
    let (r1, r2) = (r(1), r(2));
    let heap = |p, l, addr| cap(p, l, 20, 30, addr);
    vec![
        // fetch and the two trivial instructions
        Case::new("fail fails", "fail").fails(),
        Case::new("halt halts", "halt").halts(),
        Case::new("halt from rx local pc", "halt").pc(cap(Rx, Local, 0, 63, CODE_AT)).halts(),
        Case::new("pc without execute", "halt").pc(cap(Rw, Global, 0, 63, CODE_AT)).fails(),
        Case::new("pc enter-only", "halt").pc(cap(E, Global, 0, 63, CODE_AT)).fails(),
        Case::new("pc out of bounds", "halt").pc(cap(Rwx, Global, 0, 5, CODE_AT)).fails(),
        Case::new("pc below base", "halt").pc(cap(Rwx, Global, 11, 63, CODE_AT)).fails(),
        Case::new("pc is an integer", "halt").pc(int(CODE_AT)).fails(),
        Case::new("undecodable negative word", "fail").raw(int(-1)).fails(),
        Case::new("capability word decodes to fail", "fail").raw(cap(Rw, Global, 0, 1, 0)).fails(),
        // jmp / jnz
        Case::new("jmp promotes enter capability", "jmp r1")
            .with(r1, cap(E, Global, 10, 20, 12))
            .jumps(cap(Rx, Global, 10, 20, 12)),
        Case::new("jmp keeps other capability", "jmp r1")
            .with(r1, cap(Rwx, Local, 0, 5, 3))
            .jumps(cap(Rwx, Local, 0, 5, 3)),
        Case::new("jmp to integer", "jmp r1").with(r1, int(5)).jumps(int(5)),
        Case::new("jnz taken on non-zero integer", "jnz r1 r2")
            .with(r1, cap(E, Local, 40, 50, 45))
            .with(r2, int(-3))
            .jumps(cap(Rx, Local, 40, 50, 45)),
        Case::new("jnz taken on capability", "jnz r1 r2")
            .with(r1, cap(Rx, Global, 40, 50, 45))
            .with(r2, cap(O, Local, 0, 0, 0))
            .jumps(cap(Rx, Global, 40, 50, 45)),
        Case::new("jnz falls through on zero register", "jnz r1 r2").with(r1, cap(Rx, Global, 40, 50, 45)),
        Case::new("jnz falls through on zero immediate", "jnz r1 0").with(r1, cap(Rx, Global, 40, 50, 45)),
        Case::new("jnz taken on immediate", "jnz r1 1")
            .with(r1, cap(Rx, Global, 40, 50, 45))
            .jumps(cap(Rx, Global, 40, 50, 45)),
        // move
        Case::new("move immediate", "move r1 42").sets(r1, int(42)),
        Case::new("move copies local capability", "move r1 r2")
            .with(r2, cap(Rwl, Local, 1, 2, 1))
            .sets(r1, cap(Rwl, Local, 1, 2, 1)),
        Case::new("move reads pc before increment", "move r1 pc").sets(r1, default_pc()),
        Case::new("move integer into pc fails", "move pc r1").with(r1, int(4)).fails(),
        // load
        Case::new("load through read-only", "load r1 r2")
            .with(r2, heap(Ro, Global, 25))
            .at(25, int(7))
            .sets(r1, int(7)),
        Case::new("load at upper bound", "load r1 r2")
            .with(r2, heap(Rwx, Local, 30))
            .at(30, cap(E, Global, 1, 2, 1))
            .sets(r1, cap(E, Global, 1, 2, 1)),
        Case::new("load from unset cell reads zero", "load r1 r2")
            .with(r1, int(9))
            .with(r2, heap(Rx, Global, 21))
            .sets(r1, int(0)),
        Case::new("load via integer", "load r1 r2").with(r2, int(25)).fails(),
        Case::new("load via enter capability", "load r1 r2").with(r2, heap(E, Global, 25)).fails(),
        Case::new("load via write-only-ish o", "load r1 r2").with(r2, heap(O, Global, 25)).fails(),
        Case::new("load above end", "load r1 r2").with(r2, heap(Rw, Global, 31)).fails(),
        Case::new("load below base", "load r1 r2").with(r2, heap(Rw, Global, 19)).fails(),
        Case::new("load into pc then increment", "load pc r2")
            .with(r2, heap(Ro, Global, 20))
            .at(20, cap(Rx, Global, 0, 63, 40))
            .sets(Reg::PC, cap(Rx, Global, 0, 63, 40)),
        // store
        Case::new("store integer via rw", "store r1 r2")
            .with(r1, heap(Rw, Global, 22))
            .with(r2, int(9))
            .writes(22, int(9)),
        Case::new("store global capability via rw", "store r1 r2")
            .with(r1, heap(Rw, Global, 22))
            .with(r2, cap(Rwx, Global, 0, 1, 0))
            .writes(22, cap(Rwx, Global, 0, 1, 0)),
        Case::new("store local capability via rw", "store r1 r2")
            .with(r1, heap(Rw, Global, 22))
            .with(r2, cap(Rwx, Local, 0, 1, 0))
            .fails(),
        Case::new("store local capability via rwx", "store r1 r2")
            .with(r1, heap(Rwx, Global, 22))
            .with(r2, cap(E, Local, 0, 1, 0))
            .fails(),
        Case::new("store local capability via rwl", "store r1 r2")
            .with(r1, heap(Rwl, Local, 22))
            .with(r2, cap(Rwx, Local, 0, 1, 0))
            .writes(22, cap(Rwx, Local, 0, 1, 0)),
        Case::new("store local capability via rwlx", "store r1 r2")
            .with(r1, heap(Rwlx, Global, 30))
            .with(r2, cap(E, Local, 0, 1, 0))
            .writes(30, cap(E, Local, 0, 1, 0)),
        Case::new("store via read-only", "store r1 r2")
            .with(r1, heap(Ro, Global, 22))
            .with(r2, int(1))
            .fails(),
        Case::new("store via rx", "store r1 r2")
            .with(r1, heap(Rx, Global, 22))
            .with(r2, int(1))
            .fails(),
        Case::new("store out of bounds", "store r1 r2")
            .with(r1, heap(Rw, Global, 31))
            .with(r2, int(1))
            .fails(),
        Case::new("store via integer", "store r1 r2").with(r1, int(22)).fails(),
        // arithmetic
        Case::new("plus", "plus r1 r2 5").with(r2, int(3)).sets(r1, int(8)),
        Case::new("plus of capability", "plus r1 r2 1").with(r2, heap(Rw, Global, 22)).fails(),
        Case::new("minus", "minus r1 2 r2").with(r2, int(10)).sets(r1, int(-8)),
        Case::new("minus of capability", "minus r1 2 r2").with(r2, heap(Rw, Global, 22)).fails(),
        Case::new("lt true", "lt r1 1 2").sets(r1, int(1)),
        Case::new("lt false", "lt r1 2 2").sets(r1, int(0)),
        Case::new("lt of capability", "lt r1 r2 0").with(r2, heap(Rw, Global, 22)).fails(),
        // lea
        Case::new("lea forward", "lea r1 3")
            .with(r1, heap(Rw, Global, 22))
            .sets(r1, heap(Rw, Global, 25)),
        Case::new("lea may leave bounds", "lea r1 100")
            .with(r1, heap(Rw, Global, 22))
            .sets(r1, heap(Rw, Global, 122)),
        Case::new("lea to address zero", "lea r1 -22")
            .with(r1, heap(Rw, Global, 22))
            .sets(r1, heap(Rw, Global, 0)),
        Case::new("lea to negative address", "lea r1 -23").with(r1, heap(Rw, Global, 22)).fails(),
        Case::new("lea on enter capability", "lea r1 1").with(r1, heap(E, Global, 22)).fails(),
        Case::new("lea by capability", "lea r1 r2")
            .with(r1, heap(Rw, Global, 22))
            .with(r2, heap(Rw, Global, 22))
            .fails(),
        Case::new("lea on integer", "lea r1 1").with(r1, int(3)).fails(),
        // restrict
        Case::new("restrict rw global to ro local", "restrict r1 2")
            .with(r1, heap(Rw, Global, 22))
            .sets(r1, heap(Ro, Local, 22)),
        Case::new("restrict enter global to enter local", "restrict r1 10")
            .with(r1, heap(E, Global, 22))
            .sets(r1, heap(E, Local, 22)),
        Case::new("restrict with out-of-range code gives bottom", "restrict r1 -7")
            .with(r1, heap(Rw, Global, 22))
            .sets(r1, heap(O, Local, 22)),
        Case::new("restrict rw to rwx", "restrict r1 13").with(r1, heap(Rw, Global, 22)).fails(),
        Case::new("restrict rwx to rwl", "restrict r1 7").with(r1, heap(Rwx, Global, 22)).fails(),
        Case::new("restrict local to global", "restrict r1 5").with(r1, heap(Rw, Local, 22)).fails(),
        Case::new("restrict integer", "restrict r1 0").with(r1, int(1)).fails(),
        // subseg
        Case::new("subseg shrinks", "subseg r1 22 25")
            .with(r1, heap(Rw, Global, 21))
            .sets(r1, cap(Rw, Global, 22, 25, 21)),
        Case::new("subseg to empty range", "subseg r1 22 21")
            .with(r1, heap(Rw, Global, 21))
            .sets(r1, cap(Rw, Global, 22, 21, 21)),
        Case::new("subseg keeps infinity with -42", "subseg r1 5 -42")
            .with(r1, cap_inf(Rwx, Global, 0, 3))
            .sets(r1, cap_inf(Rwx, Global, 5, 3)),
        Case::new("subseg finite end under infinity", "subseg r1 5 9")
            .with(r1, cap_inf(Rwx, Global, 0, 3))
            .sets(r1, cap(Rwx, Global, 5, 9, 3)),
        Case::new("subseg -42 on finite end", "subseg r1 22 -42").with(r1, heap(Rw, Global, 21)).fails(),
        Case::new("subseg below base", "subseg r1 19 25").with(r1, heap(Rw, Global, 21)).fails(),
        Case::new("subseg above end", "subseg r1 22 31").with(r1, heap(Rw, Global, 21)).fails(),
        Case::new("subseg negative start", "subseg r1 -1 3")
            .with(r1, cap(Rw, Global, 0, 5, 0))
            .fails(),
        Case::new("subseg on enter capability", "subseg r1 22 25").with(r1, heap(E, Global, 21)).fails(),
        Case::new("subseg bound is capability", "subseg r1 r2 25")
            .with(r1, heap(Rw, Global, 21))
            .with(r2, heap(Rw, Global, 21))
            .fails(),
        Case::new("subseg on integer", "subseg r1 22 25").with(r1, int(0)).fails(),
        // isptr and getters
        Case::new("isptr of capability", "isptr r1 r2").with(r2, heap(O, Local, 0)).sets(r1, int(1)),
        Case::new("isptr of integer", "isptr r1 r2").with(r1, int(5)).with(r2, int(7)).sets(r1, int(0)),
        Case::new("isptr of immediate", "isptr r1 5").with(r1, int(5)).sets(r1, int(0)),
        Case::new("getp", "getp r1 r2").with(r2, heap(Rwlx, Local, 0)).sets(r1, int(7)),
        Case::new("getp of integer", "getp r1 r2").with(r2, int(7)).fails(),
        Case::new("getl global", "getl r1 r2").with(r2, heap(E, Global, 0)).sets(r1, int(1)),
        Case::new("getl local", "getl r1 r2").with(r2, heap(E, Local, 0)).sets(r1, int(0)),
        Case::new("getl of integer", "getl r1 r2").with(r2, int(0)).fails(),
        Case::new("getb", "getb r1 r2").with(r2, heap(E, Global, 0)).sets(r1, int(20)),
        Case::new("getb of integer", "getb r1 r2").with(r2, int(0)).fails(),
        Case::new("gete", "gete r1 r2").with(r2, heap(E, Global, 0)).sets(r1, int(30)),
        Case::new("gete of infinity", "gete r1 r2").with(r2, cap_inf(Rw, Global, 0, 0)).sets(r1, int(-42)),
        Case::new("gete of integer", "gete r1 r2").with(r2, int(0)).fails(),
        Case::new("geta", "geta r1 r2").with(r2, heap(E, Global, -4)).sets(r1, int(-4)),
        Case::new("geta of integer", "geta r1 r2").with(r2, int(0)).fails(),
    ]
}
