use num_bigint::BigInt;

use super::{AsmError, AsmErrorKind, AsmItem, AsmUnit, Imm, Macro, RegSet, Spanned, SymInstr};
use crate::isa::{parse_int, Instruction, Locality, Operand, Perm, PermPair, Reg, Word, MNEMONICS};

fn tokenize(line: &str) -> Vec<String> {
    let code = match (line.find("//"), line.find('#')) {
        (Some(a), Some(b)) => &line[..a.min(b)],
        (Some(a), None) | (None, Some(a)) => &line[..a],
        (None, None) => line,
    };
    let mut toks = Vec::new();
    let mut cur = String::new();
    for ch in code.chars() {
        if ch.is_whitespace() || "[](),".contains(ch) {
            if !cur.is_empty() {
                toks.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                toks.push(ch.to_string());
            }
        } else {
            cur.push(ch);
        }
    }
    if !cur.is_empty() {
        toks.push(cur);
    }
    toks
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_label_name(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with('.')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        && s.parse::<BigInt>().is_err()
}

struct Line<'a> {
    no: usize,
    toks: &'a [String],
    pos: usize,
}

type PResult<T> = Result<T, AsmError>;

impl<'a> Line<'a> {
    fn err(&self, kind: AsmErrorKind) -> AsmError {
        AsmError::new(self.no, kind)
    }

    fn syntax(&self, msg: impl Into<String>) -> AsmError {
        self.err(AsmErrorKind::Syntax(msg.into()))
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn next(&mut self) -> PResult<&'a str> {
        let t = self
            .toks
            .get(self.pos)
            .ok_or_else(|| self.syntax("unexpected end of line"))?;
        self.pos += 1;
        Ok(t)
    }

    fn eat(&mut self, tok: &str) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> PResult<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{tok}`")))
        }
    }

    fn done(&self) -> PResult<()> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.syntax(format!("unexpected `{t}`"))),
        }
    }

    fn reg(&mut self) -> PResult<Reg> {
        let t = self.next()?;
        t.parse()
            .map_err(|_| self.err(AsmErrorKind::BadOperand(format!("expected a register, found `{t}`"))))
    }

    fn ident(&mut self) -> PResult<&'a str> {
        let t = self.next()?;
        if is_ident(t) && t.parse::<Reg>().is_err() {
            Ok(t)
        } else {
            Err(self.err(AsmErrorKind::BadOperand(format!("expected a name, found `{t}`"))))
        }
    }

    fn imm(&self, t: &str) -> PResult<Imm> {
        if let Some(rest) = t.strip_prefix('@') {
            let split = rest.find(['+', '-']).unwrap_or(rest.len());
            let (label, addend) = rest.split_at(split);
            if !is_label_name(label) {
                return Err(self.err(AsmErrorKind::BadOperand(format!("bad label reference `{t}`"))));
            }
            let addend = if addend.is_empty() {
                BigInt::from(0)
            } else {
                parse_int(addend.trim_start_matches('+'))
                    .map_err(|e| self.err(AsmErrorKind::BadOperand(e.to_string())))?
            };
            return Ok(Imm::Rel {
                label: label.to_string(),
                addend,
            });
        }
        if let Some((p, l)) = t.split_once(':') {
            if let (Ok(perm), Ok(loc)) = (p.parse::<Perm>(), l.parse::<Locality>()) {
                return Ok(Imm::Lit(PermPair::new(perm, loc).code().into()));
            }
        }
        parse_int(t)
            .map(Imm::Lit)
            .map_err(|_| self.err(AsmErrorKind::BadOperand(format!("`{t}` is neither a register nor an immediate"))))
    }

    fn operand(&mut self) -> PResult<Operand<Imm>> {
        let t = self.next()?;
        match t.parse::<Reg>() {
            Ok(r) => Ok(Operand::Reg(r)),
            Err(_) => self.imm(t).map(Operand::Imm),
        }
    }

    /// Operand without label references, as accepted by macros.
    fn value(&mut self) -> PResult<Operand> {
        match self.operand()? {
            Operand::Reg(r) => Ok(Operand::Reg(r)),
            Operand::Imm(Imm::Lit(n)) => Ok(Operand::Imm(n)),
            Operand::Imm(rel) => Err(self.err(AsmErrorKind::BadOperand(format!(
                "label reference `{rel}` is not allowed here"
            )))),
        }
    }

    fn rest_operands(&mut self) -> PResult<Vec<Operand<Imm>>> {
        let mut ops = Vec::new();
        while self.peek().is_some() {
            if !ops.is_empty() {
                self.eat(",");
            }
            ops.push(self.operand()?);
        }
        Ok(ops)
    }

    fn reg_list(&mut self) -> PResult<Vec<Reg>> {
        self.expect("[")?;
        let mut regs = Vec::new();
        while !self.eat("]") {
            if !regs.is_empty() {
                self.expect(",")?;
            }
            regs.push(self.reg()?);
        }
        Ok(regs)
    }

    /// `([args], [privs])`, or nothing for two empty lists.
    fn call_lists(&mut self) -> PResult<(Vec<Reg>, Vec<Reg>)> {
        if self.peek().is_none() {
            return Ok((vec![], vec![]));
        }
        self.expect("(")?;
        let args = self.reg_list()?;
        self.expect(",")?;
        let privs = self.reg_list()?;
        self.expect(")")?;
        Ok((args, privs))
    }

    fn perm(&mut self) -> PResult<Perm> {
        let t = self.next()?;
        if let Ok(p) = t.parse::<Perm>() {
            return Ok(p);
        }
        t.parse::<u8>()
            .ok()
            .and_then(Perm::from_code)
            .ok_or_else(|| self.err(AsmErrorKind::BadOperand(format!("expected a permission, found `{t}`"))))
    }
}

fn build(line: &Line, mnemonic: &str, ops: Vec<Operand<Imm>>) -> PResult<SymInstr> {
    Instruction::build(mnemonic, ops).map_err(|e| line.err(AsmErrorKind::BadOperand(e)))
}

fn lit(line: &Line, op: Operand<Imm>) -> PResult<Operand> {
    match op {
        Operand::Reg(r) => Ok(Operand::Reg(r)),
        Operand::Imm(Imm::Lit(n)) => Ok(Operand::Imm(n)),
        Operand::Imm(rel) => Err(line.err(AsmErrorKind::BadOperand(format!(
            "label reference `{rel}` is not allowed here"
        )))),
    }
}

fn as_reg(line: &Line, op: &Operand<Imm>) -> PResult<Reg> {
    match op {
        Operand::Reg(r) => Ok(*r),
        Operand::Imm(i) => Err(line.err(AsmErrorKind::BadOperand(format!("expected a register, found `{i}`")))),
    }
}

fn statement(line: &mut Line, mnemonic: &str) -> PResult<AsmItem> {
    let item = match mnemonic {
        "load" => {
            let dst = line.reg()?;
            let src = line.next()?;
            match src.parse::<Reg>() {
                Ok(r) => AsmItem::Instr(Instruction::Load(dst, r)),
                Err(_) if is_ident(src) => AsmItem::Macro(Macro::LoadEnv {
                    dst,
                    var: src.to_string(),
                }),
                Err(_) => return Err(line.err(AsmErrorKind::BadOperand(format!("cannot load from `{src}`")))),
            }
        }
        "store" => {
            let dst = line.next()?;
            let src = line.value()?;
            match (dst.parse::<Reg>(), src) {
                (Ok(d), Operand::Reg(s)) => AsmItem::Instr(Instruction::Store(d, s)),
                (Ok(d), Operand::Imm(n)) => AsmItem::Macro(Macro::StoreImm { dst: d, value: n }),
                (Err(_), src) if is_ident(dst) => AsmItem::Macro(Macro::StoreEnv {
                    var: dst.to_string(),
                    src,
                }),
                _ => return Err(line.err(AsmErrorKind::BadOperand(format!("cannot store to `{dst}`")))),
            }
        }
        "restrict" | "subseg" | "lea" => {
            let ops = line.rest_operands()?;
            let core_arity = if mnemonic == "subseg" { 3 } else { 2 };
            if ops.len() == core_arity + 1 {
                let dst = as_reg(line, &ops[0])?;
                let src = as_reg(line, &ops[1])?;
                let mut rest = ops.into_iter().skip(2);
                let mut next = || lit(line, rest.next().expect("arity checked"));
                AsmItem::Macro(match mnemonic {
                    "restrict" => Macro::RestrictFrom { dst, src, pair: next()? },
                    "lea" => Macro::LeaFrom { dst, src, offset: next()? },
                    _ => Macro::SubsegFrom {
                        dst,
                        src,
                        lo: next()?,
                        hi: next()?,
                    },
                })
            } else {
                AsmItem::Instr(build(line, mnemonic, ops)?)
            }
        }
        m if MNEMONICS.contains(&m) => {
            let ops = line.rest_operands()?;
            AsmItem::Instr(build(line, m, ops)?)
        }
        "fetch" => {
            let dst = line.reg()?;
            let symbol = line.ident()?.to_string();
            AsmItem::Macro(Macro::Fetch { dst, symbol })
        }
        "call" | "scall" => {
            let target = line.reg()?;
            let (args, privs) = line.call_lists()?;
            AsmItem::Macro(if mnemonic == "call" {
                Macro::Call { target, args, privs }
            } else {
                Macro::SCall { target, args, privs }
            })
        }
        "malloc" => {
            let dst = line.reg()?;
            let size = line.value()?;
            AsmItem::Macro(Macro::Malloc { dst, size })
        }
        "assert" => {
            let lhs = line.value()?;
            line.eat(",");
            let rhs = line.value()?;
            let flag = match line.peek() {
                Some(_) => {
                    line.eat(",");
                    Some(line.ident()?.to_string())
                }
                None => None,
            };
            AsmItem::Macro(Macro::Assert { lhs, rhs, flag })
        }
        "mclear" => AsmItem::Macro(Macro::MClear(line.reg()?)),
        "rclear" => {
            let set = if line.eat("except") {
                RegSet::Except(line.reg_list()?)
            } else {
                RegSet::Only(line.reg_list()?)
            };
            AsmItem::Macro(Macro::RClear(set))
        }
        "push" => AsmItem::Macro(Macro::Push(line.value()?)),
        "pop" => AsmItem::Macro(Macro::Pop(line.reg()?)),
        "crtcls" => {
            line.expect("[")?;
            let mut env = Vec::new();
            while !line.eat("]") {
                if !env.is_empty() {
                    line.expect(",")?;
                }
                line.expect("(")?;
                let var = line.ident()?.to_string();
                line.expect(",")?;
                let reg = line.reg()?;
                line.expect(")")?;
                env.push((var, reg));
            }
            let code = line.reg()?;
            AsmItem::Macro(Macro::CrtCls { env, code })
        }
        "reqglob" => AsmItem::Macro(Macro::ReqGlob(line.reg()?)),
        "reqperm" => {
            let r = line.reg()?;
            line.eat(",");
            AsmItem::Macro(Macro::ReqPerm(r, line.perm()?))
        }
        "prepstack" => AsmItem::Macro(Macro::PrepStack(line.reg()?)),
        other => return Err(line.err(AsmErrorKind::UnknownMnemonic(other.to_string()))),
    };
    line.done()?;
    Ok(item)
}

fn directive(line: &mut Line, unit: &mut AsmUnit, name: &str) -> PResult<Option<AsmItem>> {
    match name {
        ".name" => unit.name = line.ident()?.to_string(),
        ".import" => unit.imports.push(line.ident()?.to_string()),
        ".export" => {
            let l = line.next()?;
            if !is_label_name(l) {
                return Err(line.syntax(format!("bad label `{l}`")));
            }
            unit.exports.push(l.to_string());
        }
        ".flag" => unit.flags.push(line.ident()?.to_string()),
        ".word" => {
            let toks: Vec<&str> = line.toks[line.pos..].iter().map(String::as_str).collect();
            line.pos = line.toks.len();
            let w = Word::from_tokens(&toks).map_err(|e| line.err(AsmErrorKind::BadOperand(e.to_string())))?;
            return Ok(Some(AsmItem::Word(w)));
        }
        ".instr" => {
            let m = line.next()?;
            let ops = line.rest_operands()?;
            return Ok(Some(AsmItem::InstrWord(build(line, m, ops)?)));
        }
        other => return Err(line.syntax(format!("unknown directive `{other}`"))),
    }
    line.done()?;
    Ok(None)
}

/// Parse assembly source into a unit. The unit name defaults to `unit`
/// unless a `.name` directive sets it.
pub fn parse(src: &str) -> Result<AsmUnit, AsmError> {
    let mut unit = AsmUnit {
        name: "unit".to_string(),
        ..AsmUnit::default()
    };
    for (i, text) in src.lines().enumerate() {
        let toks = tokenize(text);
        let mut line = Line {
            no: i + 1,
            toks: &toks,
            pos: 0,
        };
        while let Some(t) = line.peek() {
            match t.strip_suffix(':') {
                Some(label) => {
                    if !is_label_name(label) {
                        return Err(line.syntax(format!("bad label `{label}`")));
                    }
                    unit.items.push(Spanned {
                        line: line.no,
                        item: AsmItem::Label(label.to_string()),
                    });
                    line.pos += 1;
                }
                _ => break,
            }
        }
        let Some(head) = line.peek() else { continue };
        line.pos += 1;
        let item = if head.starts_with('.') {
            directive(&mut line, &mut unit, head)?
        } else {
            Some(statement(&mut line, head)?)
        };
        if let Some(item) = item {
            unit.items.push(Spanned { line: line.no, item });
        }
    }
    Ok(unit)
}
