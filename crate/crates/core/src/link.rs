//! Component objects and the linker that places them in memory.
//!
//! Every component starts with two header cells: a read-only capability for
//! its link table (one entry capability per import) and a read-write
//! capability for its flag table. Either cell is `int 0` when the table is
//! empty.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use thiserror::Error;

use crate::asm::{expand, AsmError, AsmUnit, ExpandOptions, ExpandedUnit};
use crate::isa::{Capability, Locality, Perm, Reg, Word};
use crate::machine::{ExecConf, Memory, RegisterFile};

pub const HEADER_LEN: usize = 2;

/// Relocatable component: header placeholders followed by code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectImage {
    pub name: String,
    /// All words, header cells included.
    pub words: Vec<Word>,
    pub imports: Vec<String>,
    /// Exported labels and their offsets from the component base.
    pub exports: BTreeMap<String, usize>,
    /// Every label, exported or not.
    pub symbols: BTreeMap<String, usize>,
    /// Flag names with their initial values.
    pub flags: Vec<(String, Word)>,
}

impl ObjectImage {
    pub fn from_expanded(unit: &ExpandedUnit) -> ObjectImage {
        let mut words = vec![Word::zero(); HEADER_LEN];
        words.extend(unit.code.iter().map(|w| w.to_word()));
        let symbols: BTreeMap<String, usize> = unit
            .labels
            .iter()
            .map(|(l, off)| (l.clone(), off + HEADER_LEN))
            .collect();
        ObjectImage {
            name: unit.name.clone(),
            words,
            imports: unit.imports.clone(),
            exports: unit
                .exports
                .iter()
                .map(|e| (e.clone(), symbols[e]))
                .collect(),
            symbols,
            flags: unit.flags.iter().map(|f| (f.clone(), Word::zero())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name: {}", self.name);
        for i in &self.imports {
            let _ = writeln!(s, "import {i}");
        }
        for (e, off) in &self.exports {
            let _ = writeln!(s, "export {e} {off}");
        }
        for (l, off) in &self.symbols {
            if !self.exports.contains_key(l) {
                let _ = writeln!(s, "symbol {l} {off}");
            }
        }
        for (f, init) in &self.flags {
            let _ = writeln!(s, "flag {f} {init}");
        }
        for (i, w) in self.words.iter().enumerate() {
            let _ = writeln!(s, "word {i} {w}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<ObjectImage, LinkError> {
        let mut obj = ObjectImage {
            name: String::new(),
            words: Vec::new(),
            imports: Vec::new(),
            exports: BTreeMap::new(),
            symbols: BTreeMap::new(),
            flags: Vec::new(),
        };
        for (no, line) in text.lines().enumerate() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: &str| LinkError::Syntax {
                line: no + 1,
                msg: msg.to_string(),
            };
            let offset = |t: &str| t.parse::<usize>().map_err(|_| bad("bad offset"));
            match toks.as_slice() {
                [] => {}
                [t, ..] if t.starts_with('#') => {}
                ["name:", name] => obj.name = name.to_string(),
                ["import", sym] => obj.imports.push(sym.to_string()),
                ["export", l, off] => {
                    let off = offset(off)?;
                    obj.exports.insert(l.to_string(), off);
                    obj.symbols.insert(l.to_string(), off);
                }
                ["symbol", l, off] => {
                    obj.symbols.insert(l.to_string(), offset(off)?);
                }
                ["flag", f] => obj.flags.push((f.to_string(), Word::zero())),
                ["flag", f, rest @ ..] => {
                    let w = Word::from_tokens(rest).map_err(|e| bad(&e.to_string()))?;
                    obj.flags.push((f.to_string(), w));
                }
                ["word", i, rest @ ..] => {
                    if offset(i)? != obj.words.len() {
                        return Err(bad("word offsets must be consecutive from 0"));
                    }
                    obj.words
                        .push(Word::from_tokens(rest).map_err(|e| bad(&e.to_string()))?);
                }
                _ => return Err(bad("unrecognised line")),
            }
        }
        if obj.name.is_empty() {
            return Err(LinkError::Syntax {
                line: 0,
                msg: "missing `name:` line".into(),
            });
        }
        Ok(obj)
    }
}

/// Expand a unit and wrap it as a component object.
pub fn build_component(unit: &AsmUnit, opts: &ExpandOptions) -> Result<ObjectImage, AsmError> {
    Ok(ObjectImage::from_expanded(&expand(unit, opts)?))
}

/// Inclusive address range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Region {
    pub start: u64,
    pub end: u64,
}

impl Region {
    /// Region of `len` cells starting at `start`; `None` when `len` is 0.
    pub fn sized(start: u64, len: usize) -> Option<Region> {
        (len > 0).then(|| Region {
            start,
            end: start + len as u64 - 1,
        })
    }

    pub fn contains(&self, addr: u64) -> bool {
        self.start <= addr && addr <= self.end
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn size(&self) -> u64 {
        self.end - self.start + 1
    }
}

/// Where a component's code and tables go.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    pub code: u64,
    pub link: Option<u64>,
    pub flags: Option<u64>,
}

/// Initial register contents requested by a layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BootValue {
    /// Entry capability of an export.
    Entry(String),
    /// Read-write-execute capability over a component's code, pointing at
    /// its first instruction.
    Code(String),
    /// Local stack capability pointing just below the stack.
    Stack,
    Word(Word),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Layout {
    pub components: BTreeMap<String, Placement>,
    pub heap: Option<Region>,
    pub stack: Option<Region>,
    pub boot: Vec<(Reg, BootValue)>,
}

impl Layout {
    pub fn place(mut self, name: &str, code: u64, link: Option<u64>, flags: Option<u64>) -> Self {
        self.components
            .insert(name.to_string(), Placement { code, link, flags });
        self
    }

    pub fn parse(text: &str) -> Result<Layout, LinkError> {
        let mut layout = Layout::default();
        for (no, line) in text.lines().enumerate() {
            let code = line.split('#').next().unwrap_or("");
            let toks: Vec<&str> = code.split_whitespace().collect();
            let bad = |msg: &str| LinkError::Syntax {
                line: no + 1,
                msg: msg.to_string(),
            };
            let num = |t: &str| t.parse::<u64>().map_err(|_| bad("bad address"));
            match toks.as_slice() {
                [] => {}
                ["component", name, rest @ ..] => {
                    let mut p = Placement {
                        code: 0,
                        link: None,
                        flags: None,
                    };
                    let mut seen_code = false;
                    for kv in rest.chunks(2) {
                        match kv {
                            ["code", a] => {
                                p.code = num(a)?;
                                seen_code = true;
                            }
                            ["link", a] => p.link = Some(num(a)?),
                            ["flags", a] => p.flags = Some(num(a)?),
                            _ => return Err(bad("expected `code`, `link` or `flags` with an address")),
                        }
                    }
                    if !seen_code {
                        return Err(bad("component needs a code address"));
                    }
                    layout.components.insert(name.to_string(), p);
                }
                ["heap", a, b] => layout.heap = Some(region(num(a)?, num(b)?).ok_or_else(|| bad("empty heap"))?),
                ["stack", a, b] => {
                    layout.stack = Some(region(num(a)?, num(b)?).ok_or_else(|| bad("empty stack"))?)
                }
                ["boot", reg, rest @ ..] => {
                    let reg: Reg = reg.parse().map_err(|_| bad("bad register"))?;
                    let v = match rest {
                        ["entry", s] => BootValue::Entry(s.to_string()),
                        ["code", c] => BootValue::Code(c.to_string()),
                        ["stack"] => BootValue::Stack,
                        w => BootValue::Word(Word::from_tokens(w).map_err(|e| bad(&e.to_string()))?),
                    };
                    layout.boot.push((reg, v));
                }
                _ => return Err(bad("unrecognised line")),
            }
        }
        Ok(layout)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, p) in &self.components {
            let _ = write!(s, "component {name} code {}", p.code);
            if let Some(l) = p.link {
                let _ = write!(s, " link {l}");
            }
            if let Some(f) = p.flags {
                let _ = write!(s, " flags {f}");
            }
            s.push('\n');
        }
        if let Some(h) = self.heap {
            let _ = writeln!(s, "heap {} {}", h.start, h.end);
        }
        if let Some(k) = self.stack {
            let _ = writeln!(s, "stack {} {}", k.start, k.end);
        }
        for (r, v) in &self.boot {
            let _ = match v {
                BootValue::Entry(e) => writeln!(s, "boot {r} entry {e}"),
                BootValue::Code(c) => writeln!(s, "boot {r} code {c}"),
                BootValue::Stack => writeln!(s, "boot {r} stack"),
                BootValue::Word(w) => writeln!(s, "boot {r} {w}"),
            };
        }
        s
    }
}

fn region(start: u64, end: u64) -> Option<Region> {
    (start <= end).then_some(Region { start, end })
}

/// Placement of one linked component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentInfo {
    pub code: Region,
    pub link: Option<Region>,
    pub flag_table: Option<Region>,
    /// Flag names and their addresses.
    pub flags: Vec<(String, u64)>,
}

/// Linked memory image plus its manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemImage {
    pub memory: Memory,
    pub components: BTreeMap<String, ComponentInfo>,
    pub entries: BTreeMap<String, Capability>,
    pub heap: Option<Region>,
    pub stack: Option<Region>,
    pub boot: Vec<(Reg, Word)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("no placement for component `{0}`")]
    MissingPlacement(String),
    #[error("component `{0}` appears twice")]
    DuplicateComponent(String),
    #[error("component `{component}` needs a {table} table address")]
    MissingTableBase { component: String, table: &'static str },
    #[error("{0} overlaps {1}")]
    Overlap(String, String),
    #[error("`{component}` imports `{symbol}`, which nothing exports")]
    UnresolvedImport { component: String, symbol: String },
    #[error("`{component}` imports `{symbol}`, which is a label but not an entry point")]
    NonEntryImport { component: String, symbol: String },
    #[error("`{0}` is exported twice")]
    DuplicateExport(String),
    #[error("export `{label}` of `{component}` is at offset {offset}, outside its code")]
    BadExport { component: String, label: String, offset: usize },
    #[error("boot value refers to unknown {0}")]
    UnknownBootTarget(String),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("component `{component}` has no flag `{flag}`")]
    UnknownFlag { component: String, flag: String },
    #[error("flag cell {addr} holds a capability")]
    NonIntegerFlag { addr: u64 },
}

/// Entry capability for code occupying `code`, entered at `addr`.
pub fn entry_capability(code: Region, addr: u64) -> Capability {
    Capability::span(Perm::E, Locality::Global, code.start, code.end, addr)
}

/// Link objects according to a layout.
pub fn link(objects: &[ObjectImage], layout: &Layout) -> Result<SystemImage, LinkError> {
    let mut regions: Vec<(Region, String)> = Vec::new();
    let mut components = BTreeMap::new();
    let mut entries = BTreeMap::new();
    let mut labels: BTreeMap<String, String> = BTreeMap::new();

    for obj in objects {
        if components.contains_key(&obj.name) {
            return Err(LinkError::DuplicateComponent(obj.name.clone()));
        }
        let p = layout
            .components
            .get(&obj.name)
            .ok_or_else(|| LinkError::MissingPlacement(obj.name.clone()))?;
        let code = Region::sized(p.code, obj.len().max(HEADER_LEN)).expect("non-empty");
        let table = |base: Option<u64>, len: usize, table: &'static str| match Region::sized(0, len) {
            None => Ok(None),
            Some(_) => base
                .map(|b| Region::sized(b, len))
                .ok_or_else(|| LinkError::MissingTableBase {
                    component: obj.name.clone(),
                    table,
                }),
        };
        let link_region = table(p.link, obj.imports.len(), "link")?;
        let flag_region = table(p.flags, obj.flags.len(), "flag")?;
        regions.push((code, format!("code of `{}`", obj.name)));
        if let Some(r) = link_region {
            regions.push((r, format!("link table of `{}`", obj.name)));
        }
        if let Some(r) = flag_region {
            regions.push((r, format!("flag table of `{}`", obj.name)));
        }
        for (label, off) in &obj.exports {
            if *off < HEADER_LEN || *off >= obj.len() {
                return Err(LinkError::BadExport {
                    component: obj.name.clone(),
                    label: label.clone(),
                    offset: *off,
                });
            }
            let cap = entry_capability(code, code.start + *off as u64);
            if entries.insert(label.clone(), cap).is_some() {
                return Err(LinkError::DuplicateExport(label.clone()));
            }
        }
        for l in obj.symbols.keys() {
            labels.insert(l.clone(), obj.name.clone());
        }
        components.insert(
            obj.name.clone(),
            ComponentInfo {
                code,
                link: link_region,
                flag_table: flag_region,
                flags: obj
                    .flags
                    .iter()
                    .enumerate()
                    .map(|(i, (f, _))| (f.clone(), p.flags.unwrap_or(0) + i as u64))
                    .collect(),
            },
        );
    }
    if let Some(h) = layout.heap {
        regions.push((h, "heap".into()));
    }
    if let Some(s) = layout.stack {
        regions.push((s, "stack".into()));
    }
    regions.sort();
    for w in regions.windows(2) {
        if w[0].0.overlaps(&w[1].0) {
            return Err(LinkError::Overlap(w[0].1.clone(), w[1].1.clone()));
        }
    }

    let mut memory = Memory::new();
    for obj in objects {
        let info = &components[&obj.name];
        let base = info.code.start;
        for (i, w) in obj.words.iter().enumerate() {
            memory.set(base + i as u64, w.clone());
        }
        let header0 = match info.link {
            Some(r) => Word::Cap(Capability::span(Perm::Ro, Locality::Global, r.start, r.end, r.start)),
            None => Word::zero(),
        };
        let header1 = match info.flag_table {
            Some(r) => Word::Cap(Capability::span(Perm::Rw, Locality::Global, r.start, r.end, r.start)),
            None => Word::zero(),
        };
        memory.set(base, header0);
        memory.set(base + 1, header1);
        if let Some(r) = info.link {
            for (i, sym) in obj.imports.iter().enumerate() {
                let cap = match entries.get(sym) {
                    Some(c) => c.clone(),
                    None if labels.contains_key(sym) => {
                        return Err(LinkError::NonEntryImport {
                            component: obj.name.clone(),
                            symbol: sym.clone(),
                        })
                    }
                    None => {
                        return Err(LinkError::UnresolvedImport {
                            component: obj.name.clone(),
                            symbol: sym.clone(),
                        })
                    }
                };
                memory.set(r.start + i as u64, Word::Cap(cap));
            }
        }
        if let Some(r) = info.flag_table {
            for (i, (_, init)) in obj.flags.iter().enumerate() {
                memory.set(r.start + i as u64, init.clone());
            }
        }
    }

    let mut image = SystemImage {
        memory,
        components,
        entries,
        heap: layout.heap,
        stack: layout.stack,
        boot: Vec::new(),
    };
    for (reg, v) in &layout.boot {
        let w = match v {
            BootValue::Entry(e) => Word::Cap(
                image
                    .entries
                    .get(e)
                    .cloned()
                    .ok_or_else(|| LinkError::UnknownBootTarget(format!("entry `{e}`")))?,
            ),
            BootValue::Code(c) => Word::Cap(image.code_capability(c)?),
            BootValue::Stack => Word::Cap(
                image
                    .stack_capability()
                    .ok_or_else(|| LinkError::UnknownBootTarget("stack".into()))?,
            ),
            BootValue::Word(w) => w.clone(),
        };
        image.boot.push((*reg, w));
    }
    Ok(image)
}

impl SystemImage {
    pub fn component(&self, name: &str) -> Result<&ComponentInfo, LinkError> {
        self.components
            .get(name)
            .ok_or_else(|| LinkError::UnknownComponent(name.to_string()))
    }

    /// Read-write-execute capability over a component, at its first
    /// instruction.
    pub fn code_capability(&self, name: &str) -> Result<Capability, LinkError> {
        let code = self.component(name)?.code;
        Ok(Capability::span(
            Perm::Rwx,
            Locality::Global,
            code.start,
            code.end,
            code.start + HEADER_LEN as u64,
        ))
    }

    /// Local read-write-local-execute capability over the whole stack,
    /// pointing one below its base.
    pub fn stack_capability(&self) -> Option<Capability> {
        self.stack.map(|s| {
            Capability::span(
                Perm::Rwlx,
                Locality::Local,
                s.start,
                s.end,
                BigInt::from(s.start) - 1,
            )
        })
    }

    pub fn flag_address(&self, component: &str, flag: &str) -> Result<u64, LinkError> {
        self.component(component)?
            .flags
            .iter()
            .find(|(f, _)| f == flag)
            .map(|(_, a)| *a)
            .ok_or_else(|| LinkError::UnknownFlag {
                component: component.to_string(),
                flag: flag.to_string(),
            })
    }

    /// Integer value of a flag; a capability there means the run went wrong.
    pub fn read_flag(&self, mem: &Memory, component: &str, flag: &str) -> Result<BigInt, LinkError> {
        let addr = self.flag_address(component, flag)?;
        mem.read(addr)
            .as_int()
            .cloned()
            .ok_or(LinkError::NonIntegerFlag { addr })
    }

    /// Every flag of every component, as `(component, flag, address)`.
    pub fn all_flags(&self) -> Vec<(String, String, u64)> {
        self.components
            .iter()
            .flat_map(|(c, info)| {
                info.flags
                    .iter()
                    .map(move |(f, a)| (c.clone(), f.clone(), *a))
            })
            .collect()
    }

    /// Starting configuration: linked memory and the boot registers.
    pub fn initial_conf(&self) -> ExecConf {
        let mut regs = RegisterFile::new();
        for (r, w) in &self.boot {
            regs.set(*r, w.clone());
        }
        ExecConf::new(regs, self.memory.clone())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("image\n");
        let opt = |r: &Option<Region>| match r {
            Some(r) => format!("{} {}", r.start, r.end),
            None => "-".to_string(),
        };
        for (name, c) in &self.components {
            let _ = writeln!(
                s,
                "component {name} code {} {} link {} flags {}",
                c.code.start,
                c.code.end,
                opt(&c.link),
                opt(&c.flag_table)
            );
            for (f, a) in &c.flags {
                let _ = writeln!(s, "flag {name} {f} {a}");
            }
        }
        for (e, cap) in &self.entries {
            let _ = writeln!(s, "entry {e} {cap}");
        }
        if let Some(h) = self.heap {
            let _ = writeln!(s, "heap {} {}", h.start, h.end);
        }
        if let Some(k) = self.stack {
            let _ = writeln!(s, "stack {} {}", k.start, k.end);
        }
        for (r, w) in &self.boot {
            let _ = writeln!(s, "boot {r} {w}");
        }
        s.push_str("mem\n");
        s.push_str(&self.memory.dump_string());
        s
    }

    pub fn parse(text: &str) -> Result<SystemImage, LinkError> {
        let mut image = SystemImage {
            memory: Memory::new(),
            components: BTreeMap::new(),
            entries: BTreeMap::new(),
            heap: None,
            stack: None,
            boot: Vec::new(),
        };
        let mut in_mem = false;
        for (no, line) in text.lines().enumerate() {
            let bad = |msg: &str| LinkError::Syntax {
                line: no + 1,
                msg: msg.to_string(),
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() {
                continue;
            }
            if in_mem {
                let addr = toks[0]
                    .strip_suffix(':')
                    .and_then(|a| a.parse::<BigInt>().ok())
                    .ok_or_else(|| bad("expected `<addr>: <word>`"))?;
                let w = Word::from_tokens(&toks[1..]).map_err(|e| bad(&e.to_string()))?;
                image.memory.set(addr, w);
                continue;
            }
            let num = |t: &str| t.parse::<u64>().map_err(|_| bad("bad address"));
            let opt_region = |a: &[&str]| -> Result<Option<Region>, LinkError> {
                match a {
                    ["-"] => Ok(None),
                    [x, y] => Ok(region(num(x)?, num(y)?)),
                    _ => Err(bad("bad region")),
                }
            };
            match toks.as_slice() {
                ["image"] => {}
                ["mem"] => in_mem = true,
                ["component", name, "code", a, b, rest @ ..] => {
                    let split = rest
                        .iter()
                        .position(|t| *t == "flags")
                        .ok_or_else(|| bad("missing `flags`"))?;
                    let (link, flags) = rest.split_at(split);
                    let link = link.strip_prefix(&["link"]).ok_or_else(|| bad("missing `link`"))?;
                    image.components.insert(
                        name.to_string(),
                        ComponentInfo {
                            code: region(num(a)?, num(b)?).ok_or_else(|| bad("empty code"))?,
                            link: opt_region(link)?,
                            flag_table: opt_region(&flags[1..])?,
                            flags: Vec::new(),
                        },
                    );
                }
                ["flag", comp, f, a] => {
                    let addr = num(a)?;
                    image
                        .components
                        .get_mut(*comp)
                        .ok_or_else(|| bad("flag before its component"))?
                        .flags
                        .push((f.to_string(), addr));
                }
                ["entry", e, rest @ ..] => match Word::from_tokens(rest) {
                    Ok(Word::Cap(c)) => {
                        image.entries.insert(e.to_string(), c);
                    }
                    _ => return Err(bad("entry must be a capability")),
                },
                ["heap", a, b] => image.heap = region(num(a)?, num(b)?),
                ["stack", a, b] => image.stack = region(num(a)?, num(b)?),
                ["boot", r, rest @ ..] => {
                    let r: Reg = r.parse().map_err(|_| bad("bad register"))?;
                    image
                        .boot
                        .push((r, Word::from_tokens(rest).map_err(|e| bad(&e.to_string()))?));
                }
                _ => return Err(bad("unrecognised line")),
            }
        }
        Ok(image)
    }
}
