//! Drives the `localcap` binary through emit, asm, link and run.

use std::fs;
use std::path::Path;
use std::process::Command;

use localcap::scenarios::{ScenarioName, Variant};

pub const BIN: &str = env!("CARGO_BIN_EXE_localcap");

pub struct PipelineRun {
    pub exit: i32,
    pub stdout: String,
    pub dump: String,
}

/// Run the binary, failing loudly on a usage error.
pub fn localcap(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().expect("spawn localcap");
    let code = out.status.code().expect("exit code");
    (
        code,
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn step(args: &[&str]) {
    let (code, _, err) = localcap(args);
    assert_eq!(code, 0, "localcap {}: {err}", args.join(" "));
}

fn variant_flags(v: Variant) -> &'static [&'static str] {
    match v {
        Variant::NoClear => &["--no-stack-clear"],
        Variant::NoReqGlob => &["--no-reqglob"],
        Variant::NoPrepStack => &["--no-stack-check"],
        Variant::Standard | Variant::RwlHeap => &[],
    }
}

/// Emit a scenario's inputs, rebuild it with the separate tools and run it.
pub fn run_pipeline(dir: &Path, s: ScenarioName, adv: &str, v: Variant, flags: &[String]) -> PipelineRun {
    let p = |f: &str| dir.join(f).display().to_string();
    step(&["scenario", s.name(), adv, "--variant", v.name(), "--emit", &p("")]);
    let (trusted_src, trusted_obj) = (p("trusted.s"), p("trusted.obj"));
    let (adv_src, adv_obj) = (p("adv.s"), p("adv.obj"));
    let mut asm = vec!["asm", trusted_src.as_str(), "-o", trusted_obj.as_str()];
    asm.extend_from_slice(variant_flags(v));
    step(&asm);
    step(&["asm", &adv_src, "-o", &adv_obj]);
    let (malloc_obj, layout, image, dump) = (p("malloc.obj"), p("layout.txt"), p("image.txt"), p("mem.txt"));
    step(&["link", &trusted_obj, &adv_obj, &malloc_obj, "-l", &layout, "-o", &image]);
    let mut run = vec!["run".to_string(), image, "--dump".into(), dump.clone()];
    for f in flags {
        run.push("--check-flag".into());
        run.push(format!("{}.{f}", s.name()));
    }
    let args: Vec<&str> = run.iter().map(String::as_str).collect();
    let (exit, stdout, _) = localcap(&args);
    PipelineRun {
        exit,
        stdout,
        dump: fs::read_to_string(&dump).unwrap_or_default(),
    }
}
