//! Example programs run against handwritten adversaries.
//!
//! Each scenario links a trusted component, an adversary and the allocator,
//! runs the result and classifies the outcome. Machine variants switch off
//! one protection at a time so that its absence can be observed.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::asm::{assemble, AsmError, ExpandOptions};
use crate::isa::{Perm, Reg};
use crate::link::{link, BootValue, Layout, LinkError, ObjectImage, Region, SystemImage};
use crate::machine::{run_in_place, ExecConf, Memory, Status, TraceEvent};
use crate::malloc::malloc_component;

pub const DEFAULT_FUEL: u64 = 100_000;

pub const TRUSTED_CODE: u64 = 100;
pub const TRUSTED_LINK: u64 = 10;
pub const TRUSTED_FLAGS: u64 = 20;
pub const ADV_CODE: u64 = 1100;
pub const ADV_LINK: u64 = 30;
pub const MALLOC_CODE: u64 = 2100;
pub const MALLOC_STATE: u64 = 50;
pub const HEAP: Region = Region { start: 3000, end: 3999 };
pub const STACK: Region = Region { start: 5000, end: 5063 };

/// Name of the adversary component in every scenario.
pub const ADVERSARY: &str = "adv";

pub const F1_SOURCE: &str = r#"
.name f1
.import malloc
.import adv
.export f1
.flag flag

f1:     malloc r2 1
        store r2 1
        fetch r1 adv
        call r1 ([], [r2])
        load r3 r2
        assert r3 1
done:   halt
"#;

pub const F2_SOURCE: &str = r#"
.name f2
.import malloc
.import adv
.export f2
.flag flag

f2:     push 1
        fetch r1 adv
        scall r1 ([], [])
        pop r1
        assert r1 1
done:   halt
"#;

pub const F3_SOURCE: &str = r#"
.name f3
.import malloc
.import adv
.export f3
.flag flag

f3:     push 1
        fetch r1 adv
        scall r1 ([], [])
        pop r1
        assert r1 1
        push 2
        fetch r1 adv
        scall r1 ([], [])
done:   halt
"#;

pub const G1_SOURCE: &str = r#"
.name g1
.import malloc
.export g1
.flag flag

g1:     malloc r2 1
        store r2 0
        move r3 pc
        lea r3 @f4+1
        crtcls [(x, r2)] r3
        rclear except [pc, r0, r1]
        jmp r0
f4:     reqglob r1
        prepstack r_stk
        store x 0
        scall r1 ([], [r0, r1, r_env])
        store x 1
        scall r1 ([], [r0, r_env])
        load r1 x
        assert r1 1
        mclear r_stk
        rclear except [r0, pc]
        jmp r0
"#;

pub const G2_SOURCE: &str = r#"
.name g2
.import malloc
.export g2

g2:     move r3 pc
        lea r3 @f5+1
        crtcls [] r3
        rclear except [pc, r0, r1]
        jmp r0
f5:     reqglob r1
        prepstack r_stk
        scall r1 ([], [r0, r_env])
        mclear r_stk
        rclear except [r0, pc]
        jmp r0
"#;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioName {
    F1,
    F2,
    F3,
    G1,
    G2,
}

/// How control reaches the adversary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// Trusted code runs first and calls the adversary.
    Callee,
    /// The adversary runs first, holding an entry to the trusted code.
    Driver,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 5] = [
        ScenarioName::F1,
        ScenarioName::F2,
        ScenarioName::F3,
        ScenarioName::G1,
        ScenarioName::G2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioName::F1 => "f1",
            ScenarioName::F2 => "f2",
            ScenarioName::F3 => "f3",
            ScenarioName::G1 => "g1",
            ScenarioName::G2 => "g2",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            ScenarioName::F1 => F1_SOURCE,
            ScenarioName::F2 => F2_SOURCE,
            ScenarioName::F3 => F3_SOURCE,
            ScenarioName::G1 => G1_SOURCE,
            ScenarioName::G2 => G2_SOURCE,
        }
    }

    pub fn role(self) -> Role {
        match self {
            ScenarioName::F1 | ScenarioName::F2 | ScenarioName::F3 => Role::Callee,
            ScenarioName::G1 | ScenarioName::G2 => Role::Driver,
        }
    }

    pub fn uses_stack(self) -> bool {
        self != ScenarioName::F1
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioName {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| ScenarioError::UnknownScenario(s.to_string()))
    }
}

/// Machine and build variants. Everything but `Standard` disables one
/// protection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Standard,
    /// `scall` hands over the stack without clearing it.
    NoClear,
    /// The heap is permit-write-local.
    RwlHeap,
    /// `reqglob` checks are dropped from trusted code.
    NoReqGlob,
    /// `prepstack` skips its permission check.
    NoPrepStack,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Standard,
        Variant::NoClear,
        Variant::RwlHeap,
        Variant::NoReqGlob,
        Variant::NoPrepStack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::NoClear => "noclear",
            Variant::RwlHeap => "rwl-heap",
            Variant::NoReqGlob => "noreqglob",
            Variant::NoPrepStack => "noprepstack",
        }
    }

    /// Assembler options for the trusted component.
    pub fn trusted_options(self) -> ExpandOptions {
        ExpandOptions {
            clear_stack_frames: self != Variant::NoClear,
            check_global: self != Variant::NoReqGlob,
            check_stack_perm: self != Variant::NoPrepStack,
        }
    }

    pub fn heap_perm(self) -> Perm {
        if self == Variant::RwlHeap {
            Perm::Rwlx
        } else {
            Perm::Rwx
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ScenarioError::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Intent {
    Benign,
    StashLocalToHeap,
    ReplayReturnPointer,
    StackSnoop,
    CallbackCapture,
    Custom,
}

impl Intent {
    pub fn name(self) -> &'static str {
        match self {
            Intent::Benign => "benign",
            Intent::StashLocalToHeap => "stash-local-to-heap",
            Intent::ReplayReturnPointer => "replay-return-pointer",
            Intent::StackSnoop => "stack-snoop",
            Intent::CallbackCapture => "callback-capture",
            Intent::Custom => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adversary {
    pub name: &'static str,
    pub role: Role,
    pub intent: Intent,
    pub source: &'static str,
}

macro_rules! adv_header {
    () => {
        ".name adv\n.import malloc\n.export adv\n"
    };
}

/// Skips to `go` when a stack was handed over, else returns at once.
macro_rules! stack_guard {
    () => {
        "adv:    isptr r5 r_stk
        move r6 pc
        lea r6 @go+1
        jnz r6 r5
        jmp r0
"
    };
}

/// Obtains a closure, then calls it with the callback at `cb`.
macro_rules! driver {
    () => {
        "adv:    scall r1 ([], [])
        move r2 r1
        move r3 pc
        lea r3 @cb+1
        restrict r3 e:global
        move r1 r3
        scall r2 ([r1], [])
        halt
"
    };
}

/// Fails if any cell of the received stack window is non-zero.
macro_rules! snoop_body {
    () => {
        "        move r2 r_stk
        getb r3 r2
        geta r4 r2
        minus r3 r3 r4
        lea r2 r3
        gete r4 r2
        getb r3 r2
        minus r4 r4 r3
        plus r4 r4 1
loop:   move r5 pc
        lea r5 @more+1
        jnz r5 r4
        jmp r0
more:   load r3 r2
        move r5 pc
        lea r5 @found+1
        jnz r5 r3
        lea r2 1
        minus r4 r4 1
        move r5 pc
        lea r5 @loop+1
        jmp r5
found:  fail
"
    };
}

const CALLEE_CORPUS: &[(&str, Intent, &str)] = &[
    ("benign", Intent::Benign, concat!(adv_header!(), "adv:    jmp r0\n")),
    (
        "clobber-registers",
        Intent::Custom,
        concat!(
            adv_header!(),
            "adv:    move r1 7
        move r2 7
        move r3 7
        move r_env 7
        move r_stk 7
        jmp r0
"
        ),
    ),
    (
        "stash-local-to-heap",
        Intent::StashLocalToHeap,
        concat!(
            adv_header!(),
            "adv:    malloc r2 1
        store r2 r0
        jmp r0
"
        ),
    ),
    (
        "replay-return-pointer",
        Intent::ReplayReturnPointer,
        concat!(
            adv_header!(),
            stack_guard!(),
            "go:     lea r_stk 1
        load r2 r_stk
        isptr r3 r2
        move r4 pc
        lea r4 @replay+1
        jnz r4 r3
        store r_stk r0
        jmp r0
replay: jmp r2
"
        ),
    ),
    (
        "stack-snoop",
        Intent::StackSnoop,
        concat!(adv_header!(), stack_guard!(), "go:\n", snoop_body!()),
    ),
    (
        "stack-escape",
        Intent::Custom,
        concat!(
            adv_header!(),
            stack_guard!(),
            "go:     load r2 r_stk
        jmp r0
"
        ),
    ),
    (
        "forge-return",
        Intent::Custom,
        concat!(
            adv_header!(),
            "adv:    lea r0 1
        jmp r0
"
        ),
    ),
    (
        "diverge",
        Intent::Custom,
        concat!(
            adv_header!(),
            "adv:    move r1 pc
        jmp r1
"
        ),
    ),
    (
        "stash-replay",
        Intent::StashLocalToHeap,
        concat!(
            adv_header!(),
            stack_guard!(),
            "go:     lea r_stk 1
        load r2 r_stk
        isptr r3 r2
        move r4 pc
        lea r4 @replay+1
        jnz r4 r3
        malloc r2 1
        store r2 r0
        store r_stk r2
        jmp r0
replay: load r2 r2
        jmp r2
"
        ),
    ),
];

const DRIVER_CORPUS: &[(&str, Intent, &str)] = &[
    ("benign", Intent::Benign, concat!(adv_header!(), driver!(), "cb:     jmp r0\n")),
    (
        "callback-capture",
        Intent::CallbackCapture,
        concat!(
            adv_header!(),
            "adv:    move r3 pc
        lea r3 @slot+1
        scall r1 ([], [r3])
        move r2 r1
        malloc r4 1
        store r3 r4
        move r3 pc
        lea r3 @cb+1
        restrict r3 e:global
        move r1 r3
        scall r2 ([r1], [])
        halt
cb:     move r2 pc
        lea r2 @slot+1
        load r2 r2
        load r3 r2
        isptr r4 r3
        move r5 pc
        lea r5 @again+1
        jnz r5 r4
        store r2 r0
        jmp r0
again:  jmp r3
slot:   .word int 0
"
        ),
    ),
    (
        "awkward-reentrant",
        Intent::Custom,
        concat!(
            adv_header!(),
            "adv:    move r3 pc
        lea r3 @ctr+1
        move r7 pc
        lea r7 @cls+1
        move r8 pc
        lea r8 @cbcap+1
        move r9 pc
        lea r9 @cb+1
        restrict r9 e:global
        store r8 r9
        scall r1 ([], [r3, r7, r9])
        store r7 r1
        move r2 r1
        malloc r4 1
        store r3 r4
        move r1 r9
        scall r2 ([r1], [])
        halt
cb:     move r2 pc
        lea r2 @ctr+1
        load r3 r2
        load r4 r3
        move r5 pc
        lea r5 @done+1
        jnz r5 r4
        move r4 1
        store r3 r4
        move r2 pc
        lea r2 @cls+1
        load r2 r2
        move r1 pc
        lea r1 @cbcap+1
        load r1 r1
        scall r2 ([r1], [r0])
done:   jmp r0
ctr:    .word int 0
cls:    .word int 0
cbcap:  .word int 0
"
        ),
    ),
    (
        "local-callback",
        Intent::Custom,
        concat!(
            adv_header!(),
            "adv:    scall r1 ([], [])
        move r2 r1
        move r3 pc
        lea r3 @tramp+1
        move r4 r_stk
        lea r4 1
        move r5 10
copy:   load r6 r3
        store r4 r6
        lea r3 1
        lea r4 1
        minus r5 r5 1
        move r6 pc
        lea r6 @copy+1
        jnz r6 r5
        move r1 r_stk
        lea r1 1
        restrict r1 e:local
        lea r_stk 10
        scall r2 ([r1], [])
        halt
tramp:  .instr getb r2 r_stk
        .instr minus r2 r2 7
        .instr move r3 pc
        .instr geta r4 r3
        .instr minus r2 r2 r4
        .instr lea r3 r2
        .instr load r3 r3
        .instr move r4 0
        .instr store r3 r4
        .instr jmp r0
"
        ),
    ),
    (
        "heap-stack",
        Intent::Custom,
        concat!(
            adv_header!(),
            "adv:    scall r1 ([], [])
        move r2 r1
        move r4 pc
        lea r4 @hbuf+1
        malloc r3 40
        store r4 r3
        move r1 pc
        lea r1 @cb+1
        restrict r1 e:global
        move r_stk r3
        lea r_stk -1
        move r0 pc
        lea r0 @back+1
        restrict r0 e:global
        jmp r2
back:   halt
cb:     move r2 pc
        lea r2 @hbuf+1
        load r2 r2
        getb r3 r_stk
        minus r3 r3 7
        geta r4 r2
        minus r3 r3 r4
        lea r2 r3
        load r2 r2
        move r3 0
        store r2 r3
        jmp r0
hbuf:   .word int 0
"
        ),
    ),
    (
        "stack-snoop",
        Intent::StackSnoop,
        concat!(adv_header!(), driver!(), "cb:\n", snoop_body!()),
    ),
    (
        "stack-scavenge",
        Intent::Custom,
        concat!(
            adv_header!(),
            driver!(),
            "cb:     move r2 r_stk
        lea r2 1
        load r2 r2
        isptr r3 r2
        move r4 pc
        lea r4 @grab+1
        jnz r4 r3
        jmp r0
grab:   getb r3 r_stk
        minus r3 r3 7
        geta r4 r2
        minus r3 r3 r4
        lea r2 r3
        load r2 r2
        move r3 0
        store r2 r3
        jmp r0
"
        ),
    ),
    (
        "forge-closure",
        Intent::Custom,
        concat!(
            adv_header!(),
            "adv:    scall r1 ([], [])
        load r2 r1
        halt
"
        ),
    ),
    (
        "diverge",
        Intent::Custom,
        concat!(
            adv_header!(),
            driver!(),
            "cb:     move r2 pc
        jmp r2
"
        ),
    ),
];

/// Every adversary, callees first.
pub fn adversary_corpus() -> Vec<Adversary> {
    let tag = |role: Role| {
        move |&(name, intent, source): &(&'static str, Intent, &'static str)| Adversary {
            name,
            role,
            intent,
            source,
        }
    };
    CALLEE_CORPUS
        .iter()
        .map(tag(Role::Callee))
        .chain(DRIVER_CORPUS.iter().map(tag(Role::Driver)))
        .collect()
}

/// Adversaries that fit a scenario's calling pattern.
pub fn adversaries_for(name: ScenarioName) -> Vec<Adversary> {
    adversary_corpus()
        .into_iter()
        .filter(|a| a.role == name.role())
        .collect()
}

pub fn find_adversary(name: ScenarioName, adversary: &str) -> Result<Adversary, ScenarioError> {
    adversaries_for(name)
        .into_iter()
        .find(|a| a.name == adversary)
        .ok_or_else(|| ScenarioError::UnknownAdversary {
            scenario: name,
            adversary: adversary.to_string(),
        })
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error("no adversary `{adversary}` for scenario {scenario}")]
    UnknownAdversary { scenario: ScenarioName, adversary: String },
    #[error("unknown verdict `{0}`")]
    UnknownVerdict(String),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("assembling {unit}: {source}")]
    Asm { unit: String, source: AsmError },
    #[error(transparent)]
    Link(#[from] LinkError),
}

/// Everything needed to link a scenario, kept apart so the same inputs can
/// be fed through the command-line tools.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioBuild {
    pub name: ScenarioName,
    pub variant: Variant,
    /// Trusted component, adversary and allocator, in that order.
    pub objects: Vec<ObjectImage>,
    pub layout: Layout,
    pub image: SystemImage,
}

impl ScenarioBuild {
    pub fn trusted(&self) -> &str {
        self.name.name()
    }

    pub fn initial_conf(&self) -> ExecConf {
        self.image.initial_conf()
    }
}

pub fn scenario_layout(name: ScenarioName) -> Layout {
    let flags = (name != ScenarioName::G2).then_some(TRUSTED_FLAGS);
    let mut layout = Layout::default()
        .place(name.name(), TRUSTED_CODE, Some(TRUSTED_LINK), flags)
        .place(ADVERSARY, ADV_CODE, Some(ADV_LINK), None)
        .place("malloc", MALLOC_CODE, None, Some(MALLOC_STATE));
    layout.heap = Some(HEAP);
    if name.uses_stack() {
        layout.stack = Some(STACK);
    }
    layout.boot = match name.role() {
        Role::Callee => {
            let mut boot = vec![(Reg::PC, BootValue::Code(name.name().to_string()))];
            if name.uses_stack() {
                boot.push((Reg::STK, BootValue::Stack));
            }
            boot
        }
        Role::Driver => vec![
            (Reg::PC, BootValue::Code(ADVERSARY.to_string())),
            (Reg::R1, BootValue::Entry(name.name().to_string())),
            (Reg::STK, BootValue::Stack),
        ],
    };
    layout
}

fn assemble_object(unit: &str, src: &str, opts: &ExpandOptions) -> Result<ObjectImage, ScenarioError> {
    let expanded = assemble(src, opts).map_err(|source| ScenarioError::Asm {
        unit: unit.to_string(),
        source,
    })?;
    Ok(ObjectImage::from_expanded(&expanded))
}

/// Assemble and link a scenario with the given adversary source.
pub fn build_scenario(
    name: ScenarioName,
    adversary_source: &str,
    variant: Variant,
) -> Result<ScenarioBuild, ScenarioError> {
    let trusted = assemble_object(name.name(), name.source(), &variant.trusted_options())?;
    let adversary = assemble_object(ADVERSARY, adversary_source, &ExpandOptions::default())?;
    let malloc = malloc_component(HEAP, variant.heap_perm()).map_err(|source| ScenarioError::Asm {
        unit: "malloc".into(),
        source,
    })?;
    let objects = vec![trusted, adversary, malloc];
    let layout = scenario_layout(name);
    let image = link(&objects, &layout)?;
    Ok(ScenarioBuild {
        name,
        variant,
        objects,
        layout,
        image,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    HaltedFlagZero,
    /// Halted with the flag at this address non-zero.
    HaltedFlagSet(u64),
    Failed,
    OutOfFuel,
}

impl Verdict {
    pub fn kind(self) -> VerdictKind {
        match self {
            Verdict::HaltedFlagZero => VerdictKind::HaltedFlagZero,
            Verdict::HaltedFlagSet(_) => VerdictKind::HaltedFlagSet,
            Verdict::Failed => VerdictKind::Failed,
            Verdict::OutOfFuel => VerdictKind::OutOfFuel,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::HaltedFlagSet(a) => write!(f, "HaltedFlagSet({a})"),
            v => v.kind().fmt(f),
        }
    }
}

/// A verdict without the flag address, as written in manifests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VerdictKind {
    HaltedFlagZero,
    HaltedFlagSet,
    Failed,
    OutOfFuel,
}

impl VerdictKind {
    pub fn name(self) -> &'static str {
        match self {
            VerdictKind::HaltedFlagZero => "HaltedFlagZero",
            VerdictKind::HaltedFlagSet => "HaltedFlagSet",
            VerdictKind::Failed => "Failed",
            VerdictKind::OutOfFuel => "OutOfFuel",
        }
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VerdictKind {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            VerdictKind::HaltedFlagZero,
            VerdictKind::HaltedFlagSet,
            VerdictKind::Failed,
            VerdictKind::OutOfFuel,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| ScenarioError::UnknownVerdict(s.to_string()))
    }
}

/// Classify a finished run: a halt is only clean when every flag of the
/// trusted component reads `int 0`.
pub fn classify(image: &SystemImage, trusted: &str, status: Status, mem: &Memory) -> Verdict {
    match status {
        Status::Running => Verdict::OutOfFuel,
        Status::Failed => Verdict::Failed,
        Status::Halted => {
            let flags = image
                .components
                .get(trusted)
                .map(|c| c.flags.as_slice())
                .unwrap_or_default();
            flags
                .iter()
                .find(|(_, a)| !mem.read(*a).is_zero_int())
                .map_or(Verdict::HaltedFlagZero, |(_, a)| Verdict::HaltedFlagSet(*a))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioRun {
    pub verdict: Verdict,
    pub steps: u64,
    /// Memory when the run stopped, whatever the reason.
    pub memory: Memory,
    /// Present when tracing was requested.
    pub trace: Option<Vec<TraceEvent>>,
}

/// Run a built scenario for at most `fuel` steps.
pub fn run_build(build: &ScenarioBuild, fuel: u64, trace: bool) -> ScenarioRun {
    let mut conf = build.initial_conf();
    let mut events = Vec::new();
    let sink: Option<&mut dyn crate::machine::TraceSink> = if trace { Some(&mut events) } else { None };
    let (status, steps) = run_in_place(&mut conf, fuel, sink);
    ScenarioRun {
        verdict: classify(&build.image, build.trusted(), status, &conf.mem),
        steps,
        memory: conf.mem,
        trace: trace.then_some(events),
    }
}

/// Build and run one scenario against a corpus adversary.
pub fn run_scenario(
    name: ScenarioName,
    adversary: &str,
    variant: Variant,
    fuel: u64,
) -> Result<ScenarioRun, ScenarioError> {
    let adv = find_adversary(name, adversary)?;
    let build = build_scenario(name, adv.source, variant)?;
    Ok(run_build(&build, fuel, false))
}

/// One manifest row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuiteEntry {
    pub scenario: ScenarioName,
    pub adversary: String,
    pub variant: Variant,
    pub expected: VerdictKind,
}

impl fmt::Display for SuiteEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.scenario, self.adversary, self.variant, self.expected
        )
    }
}

/// Parse a manifest: `scenario adversary variant expected` per line, `#`
/// comments.
pub fn parse_manifest(text: &str) -> Result<Vec<SuiteEntry>, ScenarioError> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let toks: Vec<&str> = line.split_whitespace().collect();
        let wrap = |e: ScenarioError| ScenarioError::Manifest {
            line: no + 1,
            msg: e.to_string(),
        };
        match toks.as_slice() {
            [] => {}
            [s, a, v, e] => {
                let scenario: ScenarioName = s.parse().map_err(wrap)?;
                find_adversary(scenario, a).map_err(wrap)?;
                out.push(SuiteEntry {
                    scenario,
                    adversary: a.to_string(),
                    variant: v.parse().map_err(wrap)?,
                    expected: e.parse().map_err(wrap)?,
                });
            }
            _ => {
                return Err(ScenarioError::Manifest {
                    line: no + 1,
                    msg: "expected `scenario adversary variant verdict`".into(),
                })
            }
        }
    }
    Ok(out)
}

pub const DEFAULT_MANIFEST: &str = include_str!("../data/default.manifest");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuiteResult {
    pub entry: SuiteEntry,
    pub run: ScenarioRun,
}

impl SuiteResult {
    pub fn matches(&self) -> bool {
        self.run.verdict.kind() == self.entry.expected
    }

    /// `scenario adversary variant verdict steps`.
    pub fn line(&self) -> String {
        format!(
            "{} {} {} {} {}",
            self.entry.scenario, self.entry.adversary, self.entry.variant, self.run.verdict, self.run.steps
        )
    }
}

/// Run manifest rows on `workers` threads; results come back in manifest
/// order.
pub fn run_suite(entries: &[SuiteEntry], fuel: u64, workers: usize) -> Result<Vec<SuiteResult>, ScenarioError> {
    let workers = workers.max(1);
    let chunk = entries.len().div_ceil(workers).max(1);
    let one = |e: &SuiteEntry| -> Result<SuiteResult, ScenarioError> {
        let adv = find_adversary(e.scenario, &e.adversary)?;
        let build = build_scenario(e.scenario, adv.source, e.variant)?;
        let run = run_build(&build, fuel, false);
        Ok(SuiteResult { entry: e.clone(), run })
    };
    std::thread::scope(|s| {
        let handles: Vec<_> = entries
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(one).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("suite worker panicked"))
            .collect()
    })
}
