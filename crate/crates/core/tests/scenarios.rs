use std::collections::BTreeSet;

use localcap::isa::{Capability, Instruction, Locality, Perm, Reg, Word};
use localcap::link::Region;
use localcap::machine::{run_in_place, Status};
use localcap::scenarios::{
    adversaries_for, adversary_corpus, build_scenario, find_adversary, parse_manifest, run_build,
    run_scenario, run_suite, Intent, Role, ScenarioError, ScenarioName, Variant, Verdict, VerdictKind,
    DEFAULT_FUEL, DEFAULT_MANIFEST, HEAP, STACK, TRUSTED_CODE, TRUSTED_FLAGS,
};

#[test]
fn default_manifest_matches() {
    let entries = parse_manifest(DEFAULT_MANIFEST).unwrap();
    assert!(entries.len() >= 50);
    let results = run_suite(&entries, DEFAULT_FUEL, 4).unwrap();
    assert_eq!(results.len(), entries.len());
    let bad: Vec<String> = results.iter().filter(|r| !r.matches()).map(|r| r.line()).collect();
    assert!(bad.is_empty(), "mismatches:\n{}", bad.join("\n"));
    for (e, r) in entries.iter().zip(&results) {
        assert_eq!(e, &r.entry, "results keep manifest order");
    }
}

#[test]
fn corpus_covers_every_scenario() {
    let names: BTreeSet<&str> = adversary_corpus().iter().map(|a| a.name).collect();
    for s in ScenarioName::ALL {
        let advs = adversaries_for(s);
        assert!(advs.len() >= 5, "{s}");
        assert!(advs.iter().any(|a| a.intent == Intent::Benign));
        let unique: BTreeSet<&str> = advs.iter().map(|a| a.name).collect();
        assert_eq!(unique.len(), advs.len(), "adversary names are unique per role");
    }
    assert!(names.contains("stash-local-to-heap"));
    assert!(names.contains("replay-return-pointer"));
    assert!(names.contains("local-callback"));
}

#[test]
fn standard_builds_never_set_a_flag() {
    for s in ScenarioName::ALL {
        for a in adversaries_for(s) {
            let run = run_scenario(s, a.name, Variant::Standard, DEFAULT_FUEL).unwrap();
            assert!(
                !matches!(run.verdict, Verdict::HaltedFlagSet(_)),
                "{s} {} gave {}",
                a.name,
                run.verdict
            );
        }
    }
}

#[test]
fn benign_runs_halt_cleanly_and_quickly() {
    let limits = [
        (ScenarioName::F1, 1_000),
        (ScenarioName::F2, 5_000),
        (ScenarioName::F3, 5_000),
        (ScenarioName::G1, 10_000),
        (ScenarioName::G2, 10_000),
    ];
    for (s, limit) in limits {
        let run = run_scenario(s, "benign", Variant::Standard, DEFAULT_FUEL).unwrap();
        assert_eq!(run.verdict, Verdict::HaltedFlagZero, "{s}");
        assert!(run.steps < limit, "{s} took {} steps", run.steps);
    }
}

#[test]
fn trusted_code_only_fails_on_explicit_checks() {
    for s in ScenarioName::ALL {
        for a in adversaries_for(s) {
            let build = build_scenario(s, a.source, Variant::Standard).unwrap();
            let run = run_build(&build, DEFAULT_FUEL, true);
            if run.verdict != Verdict::Failed {
                continue;
            }
            let last = run.trace.unwrap().pop().unwrap();
            let addr: u64 = last.pc_addr.and_then(|a| a.try_into().ok()).unwrap_or(u64::MAX);
            let trusted = build.image.component(s.name()).unwrap().code;
            if trusted.contains(addr) {
                assert_eq!(last.instr, Some(Instruction::Fail), "{s} {} failed at {addr}", a.name);
            }
        }
    }
}

#[test]
fn boot_registers() {
    let f1 = build_scenario(ScenarioName::F1, find_adversary(ScenarioName::F1, "benign").unwrap().source, Variant::Standard)
        .unwrap();
    let conf = f1.initial_conf();
    let code = f1.image.component("f1").unwrap().code;
    assert_eq!(code.start, TRUSTED_CODE);
    assert_eq!(
        conf.regs.get(Reg::PC),
        &Word::Cap(Capability::span(Perm::Rwx, Locality::Global, code.start, code.end, code.start + 2))
    );
    assert!(conf.regs.get(Reg::STK).is_zero_int(), "f1 runs without a stack");
    assert_eq!(f1.image.flag_address("f1", "flag").unwrap(), TRUSTED_FLAGS);

    let f2 = build_scenario(ScenarioName::F2, find_adversary(ScenarioName::F2, "benign").unwrap().source, Variant::Standard)
        .unwrap();
    assert_eq!(
        f2.initial_conf().regs.get(Reg::STK),
        &Word::Cap(Capability::span(Perm::Rwlx, Locality::Local, STACK.start, STACK.end, STACK.start - 1))
    );

    let g1 = build_scenario(ScenarioName::G1, find_adversary(ScenarioName::G1, "benign").unwrap().source, Variant::Standard)
        .unwrap();
    let conf = g1.initial_conf();
    assert_eq!(conf.regs.get(Reg::R1), &Word::Cap(g1.image.entries["g1"].clone()));
    let entry = conf.regs.get(Reg::R1).as_cap().unwrap();
    assert_eq!(entry.pair.perm, Perm::E);
    assert_eq!(entry.pair.loc, Locality::Global);
    let adv = g1.image.component("adv").unwrap().code;
    assert!(adv.contains(conf.regs.get(Reg::PC).as_cap().unwrap().addr.clone().try_into().unwrap()));
    assert!(g1.image.component("g2").is_err());
}

#[test]
fn variants_change_only_what_they_name() {
    let benign = find_adversary(ScenarioName::F3, "benign").unwrap().source;
    let std = build_scenario(ScenarioName::F3, benign, Variant::Standard).unwrap();
    let rwl = build_scenario(ScenarioName::F3, benign, Variant::RwlHeap).unwrap();
    assert_eq!(std.objects[0], rwl.objects[0]);
    assert_eq!(std.objects[1], rwl.objects[1]);
    assert_ne!(std.objects[2], rwl.objects[2]);
    let noclear = build_scenario(ScenarioName::F3, benign, Variant::NoClear).unwrap();
    assert!(noclear.objects[0].len() < std.objects[0].len());
    assert_eq!(noclear.objects[1..], std.objects[1..]);
    assert_eq!(std.image.heap, Some(HEAP));
}

#[test]
fn runs_are_deterministic() {
    for s in ScenarioName::ALL {
        for a in adversaries_for(s).iter().take(4) {
            let first = run_scenario(s, a.name, Variant::Standard, 20_000).unwrap();
            let second = run_scenario(s, a.name, Variant::Standard, 20_000).unwrap();
            assert_eq!(first, second, "{s} {}", a.name);
        }
    }
}

#[test]
fn unrelated_memory_does_not_change_the_run() {
    for s in [ScenarioName::F1, ScenarioName::F3, ScenarioName::G1] {
        let build = build_scenario(s, find_adversary(s, "benign").unwrap().source, Variant::Standard).unwrap();
        let mut plain = build.initial_conf();
        let mut padded = plain.clone();
        let far = Region { start: 20_000, end: 20_063 };
        for a in far.start..=far.end {
            padded.mem.set(a, Word::int(a as i64));
        }
        let (s1, n1) = run_in_place(&mut plain, DEFAULT_FUEL, None);
        let (s2, n2) = run_in_place(&mut padded, DEFAULT_FUEL, None);
        assert_eq!((s1, n1), (s2, n2));
        assert_eq!(s1, Status::Halted);
        for (a, w) in plain.mem.iter() {
            assert_eq!(padded.mem.get(a), w, "{s} cell {a}");
        }
        for a in far.start..=far.end {
            assert_eq!(padded.mem.read(a), &Word::int(a as i64));
        }
    }
}

#[test]
fn names_parse_and_print() {
    for s in ScenarioName::ALL {
        assert_eq!(s.name().parse::<ScenarioName>().unwrap(), s);
    }
    for v in Variant::ALL {
        assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
    }
    for k in ["HaltedFlagZero", "HaltedFlagSet", "Failed", "OutOfFuel"] {
        assert_eq!(k.parse::<VerdictKind>().unwrap().to_string(), k);
    }
    assert_eq!(Verdict::HaltedFlagSet(20).to_string(), "HaltedFlagSet(20)");
    assert_eq!(Verdict::Failed.to_string(), "Failed");
    assert_eq!(ScenarioName::G1.role(), Role::Driver);
    assert_eq!(ScenarioName::F2.role(), Role::Callee);
    assert!(!ScenarioName::F1.uses_stack());
}

#[test]
fn manifest_errors() {
    let err = |t: &str| parse_manifest(t).unwrap_err();
    assert!(matches!(err("f9 benign standard Failed"), ScenarioError::Manifest { line: 1, .. }));
    assert!(matches!(err("# c\nf1 nobody standard Failed"), ScenarioError::Manifest { line: 2, .. }));
    assert!(matches!(err("f1 benign fancy Failed"), ScenarioError::Manifest { .. }));
    assert!(matches!(err("f1 benign standard Maybe"), ScenarioError::Manifest { .. }));
    assert!(matches!(err("f1 benign standard"), ScenarioError::Manifest { .. }));
    assert!(matches!(err("f1 local-callback standard Failed"), ScenarioError::Manifest { .. }));
    assert!(parse_manifest("\n# only comments\n").unwrap().is_empty());
    assert!(matches!(
        run_scenario(ScenarioName::G1, "stack-escape", Variant::Standard, 10),
        Err(ScenarioError::UnknownAdversary { .. })
    ));
}

#[test]
fn out_of_fuel_is_reported() {
    let run = run_scenario(ScenarioName::F1, "diverge", Variant::Standard, 5_000).unwrap();
    assert_eq!(run.verdict, Verdict::OutOfFuel);
    assert_eq!(run.steps, 5_000);
    let short = run_scenario(ScenarioName::F1, "benign", Variant::Standard, 10).unwrap();
    assert_eq!(short.verdict.kind(), VerdictKind::OutOfFuel);
}
