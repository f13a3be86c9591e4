use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;

use super::{
    AsmError, AsmErrorKind, AsmItem, AsmUnit, CodeWord, ExpandedUnit, Imm, Macro, RegSet, SymInstr,
};
use crate::isa::{encode, Instruction, Locality, Operand, Perm, PermPair, Reg, Word};

use Instruction::*;

const PC: Reg = Reg::PC;
const R0: Reg = Reg::R0;
const R1: Reg = Reg::R1;
const STK: Reg = Reg::STK;
const ENV: Reg = Reg::ENV;
const T1: Reg = Reg::T1;
const T2: Reg = Reg::T2;
const T3: Reg = Reg::T3;
const T4: Reg = Reg::T4;

/// Switches for deliberately weakened builds used as negative controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExpandOptions {
    /// `scall` clears the callee's stack window before jumping.
    pub clear_stack_frames: bool,
    /// `reqglob` checks locality.
    pub check_global: bool,
    /// `prepstack` checks the stack permission.
    pub check_stack_perm: bool,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        ExpandOptions {
            clear_stack_frames: true,
            check_global: true,
            check_stack_perm: true,
        }
    }
}

type Op = Operand<Imm>;

fn r(x: Reg) -> Op {
    Operand::Reg(x)
}

fn n(v: impl Into<BigInt>) -> Op {
    Operand::Imm(Imm::Lit(v.into()))
}

/// Offset from the current instruction to `label`, plus `addend`.
fn at(label: &str, addend: i64) -> Op {
    Operand::Imm(Imm::Rel {
        label: label.to_string(),
        addend: addend.into(),
    })
}

fn lift(o: &Operand) -> Op {
    match o {
        Operand::Reg(x) => Operand::Reg(*x),
        Operand::Imm(v) => n(v.clone()),
    }
}

fn pair(perm: Perm, loc: Locality) -> i64 {
    i64::from(PermPair::new(perm, loc).code())
}

fn enc(i: &Instruction) -> BigInt {
    encode(i)
}

enum Out {
    Label(String),
    Instr(SymInstr),
    Data(CodeWordSrc),
}

enum CodeWordSrc {
    Word(Word),
    Instr(SymInstr),
}

struct Ctx<'u> {
    unit: &'u AsmUnit,
    opts: ExpandOptions,
    env: HashMap<String, usize>,
    fresh: usize,
    out: Vec<(usize, Out)>,
    line: usize,
}

impl<'u> Ctx<'u> {
    fn err(&self, kind: AsmErrorKind) -> AsmError {
        AsmError::new(self.line, kind)
    }

    fn ins(&mut self, i: SymInstr) {
        self.out.push((self.line, Out::Instr(i)));
    }

    fn fresh(&mut self, hint: &str) -> String {
        self.fresh += 1;
        format!(".{hint}{}", self.fresh)
    }

    fn place(&mut self, label: &str) {
        self.out.push((self.line, Out::Label(label.to_string())));
    }

    fn import_index(&self, symbol: &str) -> Result<usize, AsmError> {
        self.unit
            .imports
            .iter()
            .position(|s| s == symbol)
            .ok_or_else(|| self.err(AsmErrorKind::UnknownImport(symbol.to_string())))
    }

    fn flag_index(&self, flag: Option<&str>) -> Result<usize, AsmError> {
        match flag {
            None if self.unit.flags.is_empty() => Err(self.err(AsmErrorKind::NoFlag)),
            None => Ok(0),
            Some(f) => self
                .unit
                .flags
                .iter()
                .position(|x| x == f)
                .ok_or_else(|| self.err(AsmErrorKind::UnknownFlag(f.to_string()))),
        }
    }

    fn env_index(&self, var: &str) -> Result<usize, AsmError> {
        self.env
            .get(var)
            .copied()
            .ok_or_else(|| self.err(AsmErrorKind::UnknownEnvVar(var.to_string())))
    }

    fn invalid(&self, msg: impl Into<String>) -> AsmError {
        self.err(AsmErrorKind::InvalidMacro(msg.into()))
    }

    // --- macro bodies -------------------------------------------------

    fn fetch(&mut self, dst: Reg, index: usize) {
        self.ins(Move(dst, r(PC)));
        self.ins(GetB(T1, dst));
        self.ins(GetA(T2, dst));
        self.ins(Minus(T1, r(T1), r(T2)));
        self.ins(Lea(dst, r(T1)));
        self.ins(Load(dst, dst));
        self.ins(Lea(dst, n(index)));
        self.ins(Move(T1, n(0)));
        self.ins(Move(T2, n(0)));
        self.ins(Load(dst, dst));
    }

    fn malloc(&mut self, dst: Reg, size: Op) -> Result<(), AsmError> {
        let index = self.import_index("malloc")?;
        let via = if dst == R1 { T3 } else { dst };
        self.fetch(via, index);
        self.ins(Move(R1, size));
        self.ins(Move(T1, r(R0)));
        self.ins(Move(R0, r(PC)));
        self.ins(Lea(R0, n(4)));
        self.ins(Restrict(R0, n(pair(Perm::E, Locality::Global))));
        self.ins(Jmp(via));
        if dst != R1 {
            self.ins(Move(dst, r(R1)));
        }
        self.ins(Move(R0, r(T1)));
        if dst != R1 {
            self.ins(Move(R1, n(0)));
        }
        self.ins(Move(T1, n(0)));
        Ok(())
    }

    fn rclear(&mut self, regs: &[Reg]) {
        for x in RegSet::Only(regs.to_vec()).members() {
            self.ins(Move(x, n(0)));
        }
    }

    fn call(&mut self, target: Reg, args: &[Reg], privs: &[Reg]) -> Result<(), AsmError> {
        let mut act: Vec<Instruction> = vec![
            Move(T3, PC.into()),
            GetB(T1, T3),
            GetA(T2, T3),
            Minus(T1, T1.into(), T2.into()),
            Lea(T3, T1.into()),
        ];
        for p in privs {
            act.push(Load(*p, T3));
            act.push(Lea(T3, 1.into()));
        }
        act.push(Load(PC, T3));
        let size = privs.len() + 1 + act.len();
        let ret = self.fresh("ret");

        self.ins(Move(T4, r(R1)));
        self.malloc(T3, n(size))?;
        self.ins(Move(R1, r(T4)));
        self.ins(Move(T4, n(0)));
        for p in privs {
            self.ins(Store(T3, *p));
            self.ins(Lea(T3, n(1)));
        }
        self.ins(Move(T1, r(PC)));
        self.ins(Lea(T1, at(&ret, 0)));
        self.ins(Store(T3, T1));
        self.ins(Lea(T3, n(1)));
        for (j, i) in act.iter().enumerate() {
            self.ins(Move(T1, n(enc(i))));
            self.ins(Store(T3, T1));
            if j + 1 < act.len() {
                self.ins(Lea(T3, n(1)));
            }
        }
        self.ins(Lea(T3, n(-(act.len() as i64 - 1))));
        self.ins(Restrict(T3, n(pair(Perm::E, Locality::Local))));
        self.ins(Move(R0, r(T3)));
        let keep: Vec<Reg> = [PC, target, R0].iter().chain(args).copied().collect();
        self.rclear(&RegSet::Except(keep).members());
        self.ins(Jmp(target));
        self.place(&ret);
        self.ins(Move(T1, n(0)));
        self.ins(Move(T2, n(0)));
        self.ins(Move(T3, n(0)));
        Ok(())
    }

    fn push_reg(&mut self, x: Reg) {
        self.ins(Lea(STK, n(1)));
        self.ins(Store(STK, x));
    }

    fn push_imm(&mut self, v: BigInt) {
        self.ins(Lea(STK, n(1)));
        self.ins(Move(T1, n(v)));
        self.ins(Store(STK, T1));
    }

    fn pop(&mut self, x: Reg) {
        self.ins(Load(x, STK));
        self.ins(Minus(T1, n(0), n(1)));
        self.ins(Lea(STK, r(T1)));
    }

    fn scall(&mut self, target: Reg, args: &[Reg], privs: &[Reg]) {
        let after = self.fresh("after");
        for p in privs {
            self.push_reg(*p);
        }
        // Restore code: recover the stack capability stored two cells above
        // the code, then reload the return address through it.
        let restore = [
            Move(T1, PC.into()),
            Lea(T1, 5.into()),
            Load(STK, T1),
            Load(PC, STK),
        ];
        for i in &restore {
            self.push_imm(enc(i));
        }
        self.ins(Move(T1, r(PC)));
        self.ins(Lea(T1, at(&after, 0)));
        self.push_reg(T1);
        self.ins(Move(T2, r(STK)));
        self.push_reg(T2);
        self.ins(Move(R0, r(STK)));
        self.ins(Lea(R0, n(-5)));
        self.ins(Restrict(R0, n(pair(Perm::E, Locality::Local))));
        self.ins(GetA(T1, STK));
        self.ins(Plus(T1, r(T1), n(1)));
        self.ins(GetE(T2, STK));
        self.ins(Subseg(STK, r(T1), r(T2)));
        if self.opts.clear_stack_frames {
            self.mclear(STK);
        }
        let keep: Vec<Reg> = [PC, STK, R0, target].iter().chain(args).copied().collect();
        self.rclear(&RegSet::Except(keep).members());
        self.ins(Jmp(target));
        self.place(&after);
        for _ in 0..restore.len() + 1 {
            self.pop(T1);
        }
        for p in privs.iter().rev() {
            self.pop(*p);
        }
        self.ins(Move(T1, n(0)));
    }

    fn mclear(&mut self, x: Reg) {
        let body = self.fresh("clr");
        let test = self.fresh("clrtest");
        self.ins(Move(T4, r(x)));
        self.ins(GetB(T1, T4));
        self.ins(GetA(T2, T4));
        self.ins(Minus(T2, r(T1), r(T2)));
        self.ins(Lea(T4, r(T2)));
        self.ins(GetE(T2, T4));
        self.ins(Minus(T1, r(T1), r(T2)));
        self.ins(Minus(T1, r(T1), n(1)));
        self.ins(Move(T2, r(PC)));
        self.ins(Lea(T2, at(&body, 1)));
        self.ins(Move(T3, r(PC)));
        self.ins(Lea(T3, at(&test, 1)));
        self.ins(Jmp(T3));
        self.place(&body);
        self.ins(Move(T3, n(0)));
        self.ins(Store(T4, T3));
        self.ins(Lea(T4, n(1)));
        self.ins(Plus(T1, r(T1), n(1)));
        self.place(&test);
        self.ins(Jnz(T2, r(T1)));
        self.ins(Move(T4, n(0)));
        self.ins(Move(T1, n(0)));
        self.ins(Move(T2, n(0)));
        self.ins(Move(T3, n(0)));
    }

    /// Set the flag at `flag` through the flag table and halt.
    fn flag_and_halt(&mut self, flag: usize) {
        self.ins(Move(T3, r(PC)));
        self.ins(GetB(T1, T3));
        self.ins(GetA(T2, T3));
        self.ins(Minus(T1, r(T1), r(T2)));
        self.ins(Lea(T3, r(T1)));
        self.ins(Lea(T3, n(1)));
        self.ins(Load(T1, T3));
        self.ins(Lea(T1, n(flag)));
        self.ins(Move(T2, n(1)));
        self.ins(Store(T1, T2));
        self.ins(Halt);
    }

    fn jump_to(&mut self, via: Reg, label: &str) {
        self.ins(Move(via, r(PC)));
        self.ins(Lea(via, at(label, 1)));
        self.ins(Jmp(via));
    }

    fn assert(&mut self, lhs: &Operand, rhs: &Operand, flag: usize) {
        let fail = self.fresh("fail");
        let ok = self.fresh("ok");
        match (lhs, rhs) {
            (Operand::Imm(a), Operand::Imm(b)) => {
                if a != b {
                    self.flag_and_halt(flag);
                }
            }
            (Operand::Reg(a), Operand::Reg(b)) => {
                let caps = self.fresh("caps");
                self.ins(Move(T3, r(PC)));
                self.ins(Lea(T3, at(&fail, 1)));
                self.ins(IsPtr(T1, r(*a)));
                self.ins(IsPtr(T2, r(*b)));
                self.ins(Minus(T1, r(T1), r(T2)));
                self.ins(Jnz(T3, r(T1)));
                self.ins(Move(T4, r(PC)));
                self.ins(Lea(T4, at(&caps, 1)));
                self.ins(Jnz(T4, r(T2)));
                self.ins(Minus(T1, r(*a), r(*b)));
                self.ins(Jnz(T3, r(T1)));
                self.jump_to(T4, &ok);
                self.place(&caps);
                let getters: [fn(Reg, Reg) -> SymInstr; 5] = [GetA, GetB, GetE, GetP, GetL];
                for get in getters {
                    self.ins(get(T1, *a));
                    self.ins(get(T2, *b));
                    self.ins(Minus(T1, r(T1), r(T2)));
                    self.ins(Jnz(T3, r(T1)));
                }
                self.jump_to(T4, &ok);
                self.place(&fail);
                self.flag_and_halt(flag);
                self.place(&ok);
                for t in [T1, T2, T3, T4] {
                    self.ins(Move(t, n(0)));
                }
            }
            (Operand::Reg(a), Operand::Imm(c)) | (Operand::Imm(c), Operand::Reg(a)) => {
                self.ins(Move(T3, r(PC)));
                self.ins(Lea(T3, at(&fail, 1)));
                self.ins(IsPtr(T1, r(*a)));
                self.ins(Jnz(T3, r(T1)));
                self.ins(Minus(T1, r(*a), n(c.clone())));
                self.ins(Jnz(T3, r(T1)));
                self.jump_to(T3, &ok);
                self.place(&fail);
                self.flag_and_halt(flag);
                self.place(&ok);
                for t in [T1, T2, T3] {
                    self.ins(Move(t, n(0)));
                }
            }
        }
    }

    fn reqglob(&mut self, x: Reg) {
        if !self.opts.check_global {
            return;
        }
        self.ins(GetL(T1, x));
        self.ins(Minus(T1, r(T1), n(Locality::Local.code())));
        self.ins(Move(T2, r(PC)));
        self.ins(Lea(T2, n(4)));
        self.ins(Jnz(T2, r(T1)));
        self.ins(Fail);
        self.ins(Move(T1, n(0)));
        self.ins(Move(T2, n(0)));
    }

    fn reqperm(&mut self, x: Reg, perm: Perm) {
        let fail = self.fresh("noperm");
        let ok = self.fresh("perm");
        self.ins(GetP(T1, x));
        self.ins(Minus(T1, r(T1), n(perm.code())));
        self.ins(Move(T2, r(PC)));
        self.ins(Lea(T2, at(&fail, 1)));
        self.ins(Jnz(T2, r(T1)));
        self.jump_to(T2, &ok);
        self.place(&fail);
        self.ins(Fail);
        self.place(&ok);
        self.ins(Move(T1, n(0)));
        self.ins(Move(T2, n(0)));
    }

    fn prepstack(&mut self, x: Reg) {
        if self.opts.check_stack_perm {
            self.reqperm(x, Perm::Rwlx);
        }
        self.ins(GetB(T1, x));
        self.ins(GetA(T2, x));
        self.ins(Minus(T1, r(T1), r(T2)));
        self.ins(Lea(x, r(T1)));
        self.ins(Minus(T1, n(0), n(1)));
        self.ins(Lea(x, r(T1)));
        self.ins(Move(T1, n(0)));
        self.ins(Move(T2, n(0)));
    }

    fn crtcls(&mut self, env: &[(String, Reg)], code: Reg) -> Result<(), AsmError> {
        if code == R1 || env.iter().any(|(_, x)| *x == R1) {
            return Err(self.invalid("closure code and environment values cannot live in r1"));
        }
        let act = [
            Move(T1, PC.into()),
            Lea(T1, (-2).into()),
            Load(ENV, T1),
            Lea(T1, 1.into()),
            Load(T1, T1),
            Jmp(T1),
        ];
        self.malloc(T4, n(env.len()))?;
        for (k, (_, x)) in env.iter().enumerate() {
            self.ins(Store(T4, *x));
            if k + 1 < env.len() {
                self.ins(Lea(T4, n(1)));
            }
        }
        if env.len() > 1 {
            self.ins(Lea(T4, n(-(env.len() as i64 - 1))));
        }
        self.ins(Restrict(T4, n(pair(Perm::Rw, Locality::Global))));
        self.malloc(R1, n(2 + act.len()))?;
        self.ins(Store(R1, T4));
        self.ins(Lea(R1, n(1)));
        self.ins(Store(R1, code));
        for i in &act {
            self.ins(Lea(R1, n(1)));
            self.ins(Move(T1, n(enc(i))));
            self.ins(Store(R1, T1));
        }
        self.ins(Lea(R1, n(-(act.len() as i64 - 1))));
        self.ins(Restrict(R1, n(pair(Perm::E, Locality::Global))));
        self.ins(Move(T4, n(0)));
        self.ins(Move(T1, n(0)));
        Ok(())
    }

    fn env_access(&mut self, var: &str) -> Result<(), AsmError> {
        let idx = self.env_index(var)?;
        self.ins(Move(T1, r(ENV)));
        self.ins(Lea(T1, n(idx)));
        Ok(())
    }

    fn explicit_regs(m: &Macro) -> Vec<Reg> {
        let op = |o: &Operand| match o {
            Operand::Reg(x) => vec![*x],
            Operand::Imm(_) => vec![],
        };
        match m {
            Macro::Fetch { dst, .. } | Macro::Pop(dst) | Macro::MClear(dst) => vec![*dst],
            Macro::ReqGlob(x) | Macro::ReqPerm(x, _) | Macro::PrepStack(x) => vec![*x],
            Macro::Call { target, args, privs } | Macro::SCall { target, args, privs } => {
                [*target].iter().chain(args).chain(privs).copied().collect()
            }
            Macro::Malloc { dst, size } => [vec![*dst], op(size)].concat(),
            Macro::Assert { lhs, rhs, .. } => [op(lhs), op(rhs)].concat(),
            Macro::RClear(RegSet::Only(rs)) | Macro::RClear(RegSet::Except(rs)) => rs.clone(),
            Macro::Push(v) => op(v),
            Macro::CrtCls { env, code } => env.iter().map(|(_, x)| *x).chain([*code]).collect(),
            Macro::LoadEnv { dst, .. } => vec![*dst],
            Macro::StoreEnv { src, .. } => op(src),
            Macro::StoreImm { dst, .. } => vec![*dst],
            Macro::RestrictFrom { dst, src, pair } => [vec![*dst, *src], op(pair)].concat(),
            Macro::LeaFrom { dst, src, offset } => [vec![*dst, *src], op(offset)].concat(),
            Macro::SubsegFrom { dst, src, lo, hi } => [vec![*dst, *src], op(lo), op(hi)].concat(),
        }
    }

    fn expand_macro(&mut self, m: &Macro) -> Result<(), AsmError> {
        if let Some(t) = Self::explicit_regs(m).into_iter().find(|x| x.is_temp()) {
            return Err(self.err(AsmErrorKind::TempOperand(t)));
        }
        match m {
            Macro::Fetch { dst, symbol } => {
                let idx = self.import_index(symbol)?;
                self.fetch(*dst, idx);
            }
            Macro::Call { target, args, privs } | Macro::SCall { target, args, privs } => {
                let name = if matches!(m, Macro::Call { .. }) { "call" } else { "scall" };
                if args.contains(&PC) || privs.contains(&PC) {
                    return Err(self.err(AsmErrorKind::PcInList(name)));
                }
                let forbidden: &[Reg] = if name == "call" { &[PC, R0] } else { &[PC, R0, STK] };
                if forbidden.contains(target) {
                    return Err(self.invalid(format!("`{name}` cannot jump through `{target}`")));
                }
                if name == "call" {
                    self.call(*target, args, privs)?;
                } else {
                    self.scall(*target, args, privs);
                }
            }
            Macro::Malloc { dst, size } => {
                if [PC, R0].contains(dst) {
                    return Err(self.invalid(format!("`malloc` cannot write to `{dst}`")));
                }
                self.malloc(*dst, lift(size))?;
            }
            Macro::Assert { lhs, rhs, flag } => {
                let idx = self.flag_index(flag.as_deref())?;
                self.assert(lhs, rhs, idx);
            }
            Macro::MClear(x) => self.mclear(*x),
            Macro::RClear(set) => {
                if let RegSet::Only(rs) = set {
                    if rs.contains(&PC) {
                        return Err(self.err(AsmErrorKind::PcInList("rclear")));
                    }
                }
                self.rclear(&set.members());
            }
            Macro::Push(Operand::Reg(x)) => self.push_reg(*x),
            Macro::Push(Operand::Imm(v)) => self.push_imm(v.clone()),
            Macro::Pop(x) => self.pop(*x),
            Macro::CrtCls { env, code } => self.crtcls(env, *code)?,
            Macro::LoadEnv { dst, var } => {
                self.env_access(var)?;
                self.ins(Load(*dst, T1));
                self.ins(Move(T1, n(0)));
            }
            Macro::StoreEnv { var, src } => {
                self.env_access(var)?;
                match src {
                    Operand::Reg(x) => self.ins(Store(T1, *x)),
                    Operand::Imm(v) => {
                        self.ins(Move(T2, n(v.clone())));
                        self.ins(Store(T1, T2));
                        self.ins(Move(T2, n(0)));
                    }
                }
                self.ins(Move(T1, n(0)));
            }
            Macro::ReqGlob(x) => self.reqglob(*x),
            Macro::ReqPerm(x, p) => self.reqperm(*x, *p),
            Macro::PrepStack(x) => self.prepstack(*x),
            Macro::StoreImm { dst, value } => {
                self.ins(Move(T1, n(value.clone())));
                self.ins(Store(*dst, T1));
            }
            Macro::RestrictFrom { dst, src, pair } => {
                self.copy_into(*dst, *src, &[pair])?;
                self.ins(Restrict(*dst, lift(pair)));
            }
            Macro::LeaFrom { dst, src, offset } => {
                self.copy_into(*dst, *src, &[offset])?;
                self.ins(Lea(*dst, lift(offset)));
            }
            Macro::SubsegFrom { dst, src, lo, hi } => {
                self.copy_into(*dst, *src, &[lo, hi])?;
                self.ins(Subseg(*dst, lift(lo), lift(hi)));
            }
        }
        Ok(())
    }

    fn copy_into(&mut self, dst: Reg, src: Reg, ops: &[&Operand]) -> Result<(), AsmError> {
        if dst != src && ops.iter().any(|o| **o == Operand::Reg(dst)) {
            return Err(self.invalid(format!("operand `{dst}` would be overwritten before use")));
        }
        if dst != src {
            self.ins(Move(dst, r(src)));
        }
        Ok(())
    }
}

/// Collect the environment layout declared by every closure in the unit.
fn env_layout(unit: &AsmUnit) -> Result<HashMap<String, usize>, AsmError> {
    let mut env = HashMap::new();
    for s in &unit.items {
        if let AsmItem::Macro(Macro::CrtCls { env: binds, .. }) = &s.item {
            for (i, (var, _)) in binds.iter().enumerate() {
                if *env.entry(var.clone()).or_insert(i) != i {
                    return Err(AsmError::new(s.line, AsmErrorKind::EnvConflict(var.clone())));
                }
            }
        }
    }
    Ok(env)
}

/// Expand every macro and resolve every label reference.
pub fn expand(unit: &AsmUnit, opts: &ExpandOptions) -> Result<ExpandedUnit, AsmError> {
    let mut ctx = Ctx {
        unit,
        opts: *opts,
        env: env_layout(unit)?,
        fresh: 0,
        out: Vec::new(),
        line: 0,
    };
    for s in &unit.items {
        ctx.line = s.line;
        match &s.item {
            AsmItem::Label(l) => ctx.place(l),
            AsmItem::Instr(i) => ctx.ins(i.clone()),
            AsmItem::Word(w) => ctx.out.push((s.line, Out::Data(CodeWordSrc::Word(w.clone())))),
            AsmItem::InstrWord(i) => ctx.out.push((s.line, Out::Data(CodeWordSrc::Instr(i.clone())))),
            AsmItem::Macro(m) => ctx.expand_macro(m)?,
        }
    }

    let mut all_labels: HashMap<String, usize> = HashMap::new();
    let mut labels = BTreeMap::new();
    let mut offset = 0usize;
    for (line, o) in &ctx.out {
        match o {
            Out::Label(l) => {
                if all_labels.insert(l.clone(), offset).is_some() {
                    return Err(AsmError::new(*line, AsmErrorKind::DuplicateLabel(l.clone())));
                }
                if !l.starts_with('.') {
                    labels.insert(l.clone(), offset);
                }
            }
            _ => offset += 1,
        }
    }

    let mut code = Vec::with_capacity(offset);
    for (line, o) in ctx.out {
        let here = code.len();
        let resolve = |i: SymInstr| {
            i.try_map_imm(|imm| match imm {
                Imm::Lit(v) => Ok(v),
                Imm::Rel { label, addend } => all_labels
                    .get(&label)
                    .map(|t| BigInt::from(*t) - here + addend)
                    .ok_or_else(|| AsmError::new(line, AsmErrorKind::UndefinedLabel(label))),
            })
        };
        match o {
            Out::Label(_) => {}
            Out::Instr(i) => code.push(CodeWord::Instr(resolve(i)?)),
            Out::Data(CodeWordSrc::Word(w)) => code.push(CodeWord::Data(w)),
            Out::Data(CodeWordSrc::Instr(i)) => {
                code.push(CodeWord::Data(Word::Int(encode(&resolve(i)?))))
            }
        }
    }

    for e in &unit.exports {
        if !labels.contains_key(e) {
            return Err(AsmError::new(0, AsmErrorKind::UndefinedExport(e.clone())));
        }
    }

    Ok(ExpandedUnit {
        name: unit.name.clone(),
        imports: unit.imports.clone(),
        exports: unit.exports.clone(),
        flags: unit.flags.clone(),
        code,
        labels,
    })
}
