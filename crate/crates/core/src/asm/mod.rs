//! Macro assembler: source text to an expanded, label-free unit.

mod expand;
mod parse;

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

use crate::isa::{encode_word, Instruction, Operand, Perm, Reg, Word};

pub use expand::{expand, ExpandOptions};
pub use parse::parse;

/// Immediate as written in source: a literal or a label offset relative to
/// the address of the instruction that contains it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Imm {
    Lit(BigInt),
    Rel { label: String, addend: BigInt },
}

impl From<i64> for Imm {
    fn from(n: i64) -> Self {
        Imm::Lit(n.into())
    }
}

impl fmt::Display for Imm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Imm::Lit(n) => write!(f, "{n}"),
            Imm::Rel { label, addend } => {
                write!(f, "@{label}")?;
                if addend > &BigInt::from(0) {
                    write!(f, "+{addend}")?;
                } else if addend < &BigInt::from(0) {
                    write!(f, "{addend}")?;
                }
                Ok(())
            }
        }
    }
}

pub type SymInstr = Instruction<Imm>;

/// Register set operand of `rclear`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegSet {
    Only(Vec<Reg>),
    /// Every register except `pc` and the listed ones.
    Except(Vec<Reg>),
}

impl RegSet {
    /// Members in ascending index order, never including `pc`.
    pub fn members(&self) -> Vec<Reg> {
        let mut regs: Vec<Reg> = match self {
            RegSet::Only(rs) => rs.clone(),
            RegSet::Except(rs) => Reg::all().filter(|r| !r.is_pc() && !rs.contains(r)).collect(),
        };
        regs.sort();
        regs.dedup();
        regs
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Macro {
    /// Load the entry capability of an import from the link table.
    Fetch { dst: Reg, symbol: String },
    /// Call through a heap-allocated activation record.
    Call { target: Reg, args: Vec<Reg>, privs: Vec<Reg> },
    /// Call through an activation frame on the local stack.
    SCall { target: Reg, args: Vec<Reg>, privs: Vec<Reg> },
    Malloc { dst: Reg, size: Operand },
    Assert { lhs: Operand, rhs: Operand, flag: Option<String> },
    MClear(Reg),
    RClear(RegSet),
    Push(Operand),
    Pop(Reg),
    CrtCls { env: Vec<(String, Reg)>, code: Reg },
    LoadEnv { dst: Reg, var: String },
    StoreEnv { var: String, src: Operand },
    ReqGlob(Reg),
    ReqPerm(Reg, Perm),
    PrepStack(Reg),
    StoreImm { dst: Reg, value: BigInt },
    RestrictFrom { dst: Reg, src: Reg, pair: Operand },
    SubsegFrom { dst: Reg, src: Reg, lo: Operand, hi: Operand },
    LeaFrom { dst: Reg, src: Reg, offset: Operand },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AsmItem {
    Label(String),
    Instr(SymInstr),
    Macro(Macro),
    /// Literal data word.
    Word(Word),
    /// Data word holding the encoding of an instruction.
    InstrWord(SymInstr),
}

/// An item with the source line it came from (0 for generated items).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Spanned {
    pub line: usize,
    pub item: AsmItem,
}

/// Parsed source unit.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AsmUnit {
    pub name: String,
    pub imports: Vec<String>,
    pub exports: Vec<String>,
    pub flags: Vec<String>,
    pub items: Vec<Spanned>,
}

/// One emitted word of an expanded unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CodeWord {
    Instr(Instruction),
    Data(Word),
}

impl CodeWord {
    pub fn to_word(&self) -> Word {
        match self {
            CodeWord::Instr(i) => encode_word(i),
            CodeWord::Data(w) => w.clone(),
        }
    }
}

/// Unit with every macro expanded and every label reference resolved to a
/// relative integer offset.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExpandedUnit {
    pub name: String,
    pub imports: Vec<String>,
    pub exports: Vec<String>,
    pub flags: Vec<String>,
    pub code: Vec<CodeWord>,
    /// Source labels and their offsets from the start of the code.
    pub labels: BTreeMap<String, usize>,
}

impl ExpandedUnit {
    /// The same program as a macro-free source unit.
    pub fn to_unit(&self) -> AsmUnit {
        let mut by_offset: BTreeMap<usize, Vec<&String>> = BTreeMap::new();
        for (l, off) in &self.labels {
            by_offset.entry(*off).or_default().push(l);
        }
        let mut items = Vec::new();
        let label_items = |off: usize, items: &mut Vec<Spanned>| {
            for l in by_offset.get(&off).into_iter().flatten() {
                items.push(Spanned {
                    line: 0,
                    item: AsmItem::Label((*l).clone()),
                });
            }
        };
        for (off, w) in self.code.iter().enumerate() {
            label_items(off, &mut items);
            let item = match w {
                CodeWord::Instr(i) => AsmItem::Instr(
                    i.clone()
                        .try_map_imm(|n| Ok::<_, ()>(Imm::Lit(n)))
                        .expect("infallible"),
                ),
                CodeWord::Data(w) => AsmItem::Word(w.clone()),
            };
            items.push(Spanned { line: 0, item });
        }
        label_items(self.code.len(), &mut items);
        AsmUnit {
            name: self.name.clone(),
            imports: self.imports.clone(),
            exports: self.exports.clone(),
            flags: self.flags.clone(),
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }
}

/// Words of a unit placed at a base address.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Emitted {
    pub words: Vec<Word>,
    pub symbols: BTreeMap<String, BigInt>,
}

/// Place an expanded unit at `base`. Offsets are relative, so the words do
/// not depend on `base`; only the symbol addresses do.
pub fn emit(unit: &ExpandedUnit, base: impl Into<BigInt>) -> Emitted {
    let base = base.into();
    Emitted {
        words: unit.code.iter().map(CodeWord::to_word).collect(),
        symbols: unit
            .labels
            .iter()
            .map(|(l, off)| (l.clone(), &base + *off))
            .collect(),
    }
}

/// Parse and expand in one go.
pub fn assemble(src: &str, opts: &ExpandOptions) -> Result<ExpandedUnit, AsmError> {
    expand(&parse(src)?, opts)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("malformed operand: {0}")]
    BadOperand(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("`{0}` is reserved for macro expansions and cannot be a macro operand")]
    TempOperand(Reg),
    #[error("`pc` cannot appear in the register lists of `{0}`")]
    PcInList(&'static str),
    #[error("symbol `{0}` is not imported")]
    UnknownImport(String),
    #[error("flag `{0}` is not declared")]
    UnknownFlag(String),
    #[error("assertion needs a declared flag")]
    NoFlag,
    #[error("environment variable `{0}` is not bound by any closure")]
    UnknownEnvVar(String),
    #[error("environment variable `{0}` has conflicting positions")]
    EnvConflict(String),
    #[error("exported label `{0}` is not defined")]
    UndefinedExport(String),
    #[error("invalid macro use: {0}")]
    InvalidMacro(String),
}

/// Assembly error with the source line it refers to (0 when unknown).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

impl AsmError {
    pub fn new(line: usize, kind: AsmErrorKind) -> Self {
        AsmError { line, kind }
    }
}
