//! Bump allocator that runs inside the machine, plus a checker for its
//! observable contract.
//!
//! The allocator's private state lives in its flag table: cell 0 holds a
//! capability for the whole heap whose address is the next free cell, and
//! cell 1 parks the block being handed out. Only `r1`, `r_t2` and `r_t3`
//! are used; the two temporaries are zero again on return.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use thiserror::Error;

use crate::asm::{assemble, AsmError, ExpandOptions};
use crate::isa::{Capability, Locality, Perm, Reg, Word};
use crate::link::{ObjectImage, Region};
use crate::machine::{step_in_place, ExecConf, Memory, RegisterFile, Status};

pub const MALLOC_SOURCE: &str = r#"
.name malloc
.export malloc
.flag bump
.flag parked

malloc: lt r_t3 r1 0             // also fails when r1 is a capability
        move r_t2 pc
        lea r_t2 @bad+1
        jnz r_t2 r_t3
        move r_t2 pc
        lea r_t2 @malloc         // header cell 1
        load r_t2 r_t2
        load r_t3 r_t2
        geta r_t2 r_t3
        plus r1 r_t2 r1
        minus r1 r1 1
        subseg r_t3 r_t2 r1      // fails once the heap is exhausted
        move r_t2 pc
        lea r_t2 @malloc
        load r_t2 r_t2
        lea r_t2 1
        store r_t2 r_t3
        lea r_t2 -1
        load r_t3 r_t2
        geta r_t2 r_t3
        minus r1 r1 r_t2
        plus r1 r1 1
        lea r_t3 r1
        move r_t2 pc
        lea r_t2 @malloc
        load r_t2 r_t2
        store r_t2 r_t3
        lea r_t2 1
        load r_t3 r_t2
        minus r1 0 r1
check:  move r_t2 pc
        lea r_t2 @fill+1
        jnz r_t2 r1
        move r_t2 pc
        lea r_t2 @malloc
        load r_t2 r_t2
        lea r_t2 1
        load r1 r_t2
        move r_t3 0
        store r_t2 r_t3
        move r_t2 0
        jmp r0
fill:   move r_t2 0
        store r_t3 r_t2
        lea r_t3 1
        plus r1 r1 1
        move r_t2 pc
        lea r_t2 @check+1
        jmp r_t2
bad:    fail
"#;

/// Registers the allocator may change besides `pc` and `r1`; both hold
/// `int 0` on return.
pub const SCRATCH: [Reg; 2] = [Reg::T2, Reg::T3];

/// Build the allocator component for a heap. `heap_perm` is `rwx` in the
/// standard system; `rwlx` gives the weakened heap used as a control.
pub fn malloc_component(heap: Region, heap_perm: Perm) -> Result<ObjectImage, AsmError> {
    let unit = assemble(MALLOC_SOURCE, &ExpandOptions::default())?;
    let mut obj = ObjectImage::from_expanded(&unit);
    let bump = Capability::span(heap_perm, Locality::Global, heap.start, heap.end, heap.start);
    obj.flags[0].1 = Word::Cap(bump);
    Ok(obj)
}

/// One observed allocator invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MallocCall {
    pub size: BigInt,
    pub before: ExecConf,
    pub after: ExecConf,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MallocOutcome {
    Returned(MallocCall),
    Failed { steps: u64 },
    OutOfFuel,
}

/// Jump into the allocator with `size` in `r1` and `ret` in `r0`, and run
/// until control comes back to `ret`.
pub fn invoke(
    conf: &ExecConf,
    entry: &Capability,
    ret: &Capability,
    size: impl Into<BigInt>,
    fuel: u64,
) -> MallocOutcome {
    let size = size.into();
    let mut before = conf.clone();
    before.regs.set(Reg::PC, Word::Cap(entry.promote()));
    before.regs.set(Reg::R0, Word::Cap(ret.clone()));
    before.regs.set(Reg::R1, Word::Int(size.clone()));
    let back = Word::Cap(ret.promote());
    let mut cur = before.clone();
    for steps in 1..=fuel {
        match step_in_place(&mut cur).0 {
            Status::Running if *cur.regs.get(Reg::PC) == back => {
                return MallocOutcome::Returned(MallocCall {
                    size,
                    before,
                    after: cur,
                    steps,
                })
            }
            Status::Running => {}
            Status::Halted | Status::Failed => return MallocOutcome::Failed { steps },
        }
    }
    MallocOutcome::OutOfFuel
}

/// Ways an invocation can break the allocator contract.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MallocViolation {
    #[error("r1 does not hold a capability after return")]
    NoCapability,
    #[error("returned capability has the wrong shape: {0}")]
    Shape(Capability),
    #[error("returned block has {got} cells, expected {expected}")]
    Size { expected: BigInt, got: BigInt },
    #[error("returned block leaves the heap")]
    OutsideHeap,
    #[error("cell {0} of the returned block is not zero")]
    NotZeroed(BigInt),
    #[error("returned block overlaps an earlier allocation")]
    NotFresh,
    #[error("register {0} was not preserved")]
    Clobbered(Reg),
    #[error("scratch register {0} is not zero on return")]
    ScratchLeft(Reg),
    #[error("control did not return to the caller's continuation")]
    WrongReturn,
    #[error("cell {0} outside the allocator's footprint changed")]
    FrameBroken(BigInt),
}

/// Where the allocator lives, for frame checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MallocSite {
    pub state: Region,
    pub heap: Region,
    pub heap_perm: Perm,
}

fn changed_cells(a: &Memory, b: &Memory) -> BTreeSet<BigInt> {
    a.iter()
        .chain(b.iter())
        .map(|(k, _)| k.clone())
        .filter(|k| a.get(k) != b.get(k))
        .collect()
}

/// Check one invocation against the allocator contract. `prior` lists the
/// blocks handed out earlier.
pub fn check_call(call: &MallocCall, site: &MallocSite, prior: &[Region]) -> Vec<MallocViolation> {
    let mut out = Vec::new();
    let before: &RegisterFile = &call.before.regs;
    let after: &RegisterFile = &call.after.regs;

    if *after.get(Reg::PC) != before.get(Reg::R0).promote() {
        out.push(MallocViolation::WrongReturn);
    }
    for (r, w) in before.iter() {
        if r.is_pc() || r == Reg::R1 {
            continue;
        }
        if SCRATCH.contains(&r) {
            if !after.get(r).is_zero_int() {
                out.push(MallocViolation::ScratchLeft(r));
            }
        } else if after.get(r) != w {
            out.push(MallocViolation::Clobbered(r));
        }
    }

    let Some(block) = after.get(Reg::R1).as_cap() else {
        out.push(MallocViolation::NoCapability);
        return out;
    };
    let end = block.end.as_int();
    if block.pair.perm != site.heap_perm
        || block.pair.loc != Locality::Global
        || block.addr != block.base
        || block.end == crate::isa::Bound::Infinity
    {
        out.push(MallocViolation::Shape(block.clone()));
    }
    let got: BigInt = &end - &block.base + 1;
    if got != call.size {
        out.push(MallocViolation::Size {
            expected: call.size.clone(),
            got: got.clone(),
        });
    }
    let block_region = if got.is_positive() {
        match (block.base.to_u64(), end.to_u64()) {
            (Some(s), Some(e)) => Some(Region { start: s, end: e }),
            _ => None,
        }
    } else {
        None
    };
    if let Some(r) = block_region {
        if !site.heap.contains(r.start) || !site.heap.contains(r.end) {
            out.push(MallocViolation::OutsideHeap);
        }
        if prior.iter().any(|p| p.overlaps(&r)) {
            out.push(MallocViolation::NotFresh);
        }
        for a in r.start..=r.end {
            if !call.after.mem.read(a).is_zero_int() {
                out.push(MallocViolation::NotZeroed(a.into()));
            }
        }
    }
    for a in changed_cells(&call.before.mem, &call.after.mem) {
        let inside = |r: &Region| a.to_u64().is_some_and(|x| r.contains(x));
        if !inside(&site.state) && !block_region.as_ref().is_some_and(inside) {
            out.push(MallocViolation::FrameBroken(a));
        }
    }
    out
}
