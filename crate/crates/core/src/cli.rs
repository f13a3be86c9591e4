//! Command-line front end: `asm`, `link`, `run`, `scenario` and `suite`.
//!
//! Exit codes: 0 halted (with every checked flag zero), 1 failed, 2 out of
//! fuel, 3 a checked flag is non-zero, 4 usage or I/O error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::asm::{assemble, AsmError, ExpandOptions};
use crate::isa::{Reg, Word};
use crate::link::{link, Layout, LinkError, ObjectImage, SystemImage};
use crate::machine::{run_in_place, Status, TraceSink, TraceWriter};
use crate::scenarios::{
    build_scenario, find_adversary, parse_manifest, run_build, run_suite, ScenarioError, ScenarioName, Variant,
    Verdict, DEFAULT_FUEL,
};

pub const EXIT_HALTED: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_OUT_OF_FUEL: i32 = 2;
pub const EXIT_FLAG_SET: i32 = 3;
pub const EXIT_USAGE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "localcap", version, about = "Capability machine toolchain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Assemble a source unit into an object file.
    Asm(AsmArgs),
    /// Link object files according to a layout file.
    Link(LinkArgs),
    /// Run a linked image.
    Run(RunArgs),
    /// Build and run one scenario against a corpus adversary.
    Scenario(ScenarioArgs),
    /// Run every row of a scenario manifest.
    Suite(SuiteArgs),
}

#[derive(Debug, Args)]
struct AsmArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Do not clear the released stack in `scall`.
    #[arg(long)]
    no_stack_clear: bool,
    /// Expand `reqglob` to nothing.
    #[arg(long)]
    no_reqglob: bool,
    /// Skip the permission check in `prepstack`.
    #[arg(long)]
    no_stack_check: bool,
}

#[derive(Debug, Args)]
struct LinkArgs {
    #[arg(required = true)]
    objects: Vec<PathBuf>,
    #[arg(short, long)]
    layout: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    image: PathBuf,
    /// Start at this export instead of the image's boot `pc`.
    #[arg(long)]
    entry: Option<String>,
    #[arg(long, default_value_t = DEFAULT_FUEL)]
    fuel: u64,
    /// Write the trace to a file, or `-` for standard output.
    #[arg(long)]
    trace: Option<String>,
    /// Flag to check on halt, as `name` or `component.name`.
    #[arg(long = "check-flag")]
    check_flag: Vec<String>,
    /// Write the final memory dump here.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    name: String,
    adversary: String,
    #[arg(long, default_value = "standard")]
    variant: String,
    #[arg(long, default_value_t = DEFAULT_FUEL)]
    fuel: u64,
    #[arg(long)]
    trace: Option<String>,
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Write the scenario's sources, allocator object and layout to a
    /// directory instead of running it.
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SuiteArgs {
    manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FUEL)]
    fuel: u64,
    #[arg(long, default_value_t = 4)]
    jobs: usize,
    /// Directory for memory and trace dumps of mismatching rows.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Asm { path: String, source: AsmError },
    #[error("{path}: {source}")]
    Parse { path: String, source: LinkError },
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Usage(String),
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn emit(output: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match output {
        Some(p) => write_file(p, text),
        None => out.write_all(text.as_bytes()).map_err(|source| CliError::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

/// Run the tool with `argv` (program name first) and return the exit code.
pub fn run(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_HALTED };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Asm(a) => cmd_asm(&a, out),
        Command::Link(a) => cmd_link(&a, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Scenario(a) => cmd_scenario(&a, out),
        Command::Suite(a) => cmd_suite(&a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn cmd_asm(a: &AsmArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let src = read(&a.input)?;
    let opts = ExpandOptions {
        clear_stack_frames: !a.no_stack_clear,
        check_global: !a.no_reqglob,
        check_stack_perm: !a.no_stack_check,
    };
    let unit = assemble(&src, &opts).map_err(|source| CliError::Asm {
        path: a.input.display().to_string(),
        source,
    })?;
    emit(a.output.as_deref(), &ObjectImage::from_expanded(&unit).to_text(), out)?;
    Ok(EXIT_HALTED)
}

fn cmd_link(a: &LinkArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let parse_err = |p: &Path| {
        let path = p.display().to_string();
        move |source| CliError::Parse { path, source }
    };
    let layout = Layout::parse(&read(&a.layout)?).map_err(parse_err(&a.layout))?;
    let objects = a
        .objects
        .iter()
        .map(|p| ObjectImage::parse(&read(p)?).map_err(parse_err(p)))
        .collect::<Result<Vec<_>, _>>()?;
    let image = link(&objects, &layout)?;
    emit(a.output.as_deref(), &image.to_text(), out)?;
    Ok(EXIT_HALTED)
}

/// Resolve `name` or `component.name` to a flag address.
fn resolve_flag(image: &SystemImage, spec: &str) -> Result<u64, CliError> {
    if let Some((comp, flag)) = spec.split_once('.') {
        return Ok(image.flag_address(comp, flag)?);
    }
    let hits: Vec<u64> = image
        .all_flags()
        .into_iter()
        .filter(|(_, f, _)| f == spec)
        .map(|(_, _, a)| a)
        .collect();
    match hits.as_slice() {
        [a] => Ok(*a),
        [] => Err(CliError::Usage(format!("no flag named `{spec}`"))),
        _ => Err(CliError::Usage(format!(
            "flag `{spec}` is ambiguous; use `component.{spec}`"
        ))),
    }
}

fn open_trace(spec: Option<&str>) -> Result<Option<Box<dyn TraceSink>>, CliError> {
    Ok(match spec {
        None => None,
        Some("-") => Some(Box::new(TraceWriter(io::stdout()))),
        Some(p) => {
            let f = fs::File::create(p).map_err(|source| CliError::Io {
                path: p.to_string(),
                source,
            })?;
            Some(Box::new(TraceWriter(io::BufWriter::new(f))))
        }
    })
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let text = read(&a.image)?;
    let image = SystemImage::parse(&text).map_err(|source| CliError::Parse {
        path: a.image.display().to_string(),
        source,
    })?;
    let flags = a
        .check_flag
        .iter()
        .map(|f| resolve_flag(&image, f).map(|addr| (f.as_str(), addr)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut conf = image.initial_conf();
    if let Some(e) = &a.entry {
        let cap = image
            .entries
            .get(e)
            .ok_or_else(|| CliError::Usage(format!("no entry point `{e}`")))?;
        conf.regs.set(Reg::PC, Word::Cap(cap.promote()));
    }
    let mut trace = open_trace(a.trace.as_deref())?;
    let sink = trace.as_mut().map(|t| t.as_mut() as &mut dyn TraceSink);
    let (status, steps) = run_in_place(&mut conf, a.fuel, sink);
    drop(trace);
    if let Some(p) = &a.dump {
        write_file(p, &conf.mem.dump_string())?;
    }
    let _ = writeln!(out, "{} steps {steps}", status_word(status));
    let code = match status {
        Status::Running => EXIT_OUT_OF_FUEL,
        Status::Failed => EXIT_FAILED,
        Status::Halted => {
            let mut code = EXIT_HALTED;
            for (name, addr) in flags {
                let w = conf.mem.read(addr);
                let _ = writeln!(out, "flag {name} {w}");
                if !w.is_zero_int() {
                    code = EXIT_FLAG_SET;
                }
            }
            code
        }
    };
    Ok(code)
}

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Running => "out-of-fuel",
        Status::Halted => "halted",
        Status::Failed => "failed",
    }
}

/// Exit code matching a scenario verdict.
pub fn verdict_exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::HaltedFlagZero => EXIT_HALTED,
        Verdict::HaltedFlagSet(_) => EXIT_FLAG_SET,
        Verdict::Failed => EXIT_FAILED,
        Verdict::OutOfFuel => EXIT_OUT_OF_FUEL,
    }
}

fn cmd_scenario(a: &ScenarioArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let name: ScenarioName = a.name.parse()?;
    let variant: Variant = a.variant.parse()?;
    let adv = find_adversary(name, &a.adversary)?;
    let build = build_scenario(name, adv.source, variant)?;
    if let Some(dir) = &a.emit {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_file(&dir.join("trusted.s"), name.source())?;
        write_file(&dir.join("adv.s"), adv.source)?;
        write_file(&dir.join("malloc.obj"), &build.objects[2].to_text())?;
        write_file(&dir.join("layout.txt"), &build.layout.to_text())?;
        return Ok(EXIT_HALTED);
    }
    let traced = a.trace.is_some();
    let result = run_build(&build, a.fuel, traced);
    if let (Some(events), Some(spec)) = (&result.trace, a.trace.as_deref()) {
        let text: String = events.iter().map(|e| format!("{e}\n")).collect();
        emit((spec != "-").then(|| Path::new(spec)), &text, out)?;
    }
    if let Some(p) = &a.dump {
        write_file(p, &result.memory.dump_string())?;
    }
    let _ = writeln!(
        out,
        "{} {} {} {} {}",
        name, adv.name, variant, result.verdict, result.steps
    );
    Ok(verdict_exit_code(result.verdict))
}

fn cmd_suite(a: &SuiteArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let entries = parse_manifest(&read(&a.manifest)?)?;
    let results = run_suite(&entries, a.fuel, a.jobs)?;
    let mut mismatches = 0;
    for r in &results {
        let tag = if r.matches() { "ok" } else { "MISMATCH" };
        let _ = writeln!(out, "{} {tag}", r.line());
        if r.matches() {
            continue;
        }
        mismatches += 1;
        let _ = writeln!(err, "expected {} for `{}`", r.entry.expected, r.line());
        let e = &r.entry;
        let stem = format!("{}-{}-{}", e.scenario, e.adversary, e.variant);
        match &a.dump_dir {
            Some(dir) => {
                let adv = find_adversary(e.scenario, &e.adversary)?;
                let traced = run_build(&build_scenario(e.scenario, adv.source, e.variant)?, a.fuel, true);
                let trace: String = traced
                    .trace
                    .unwrap_or_default()
                    .iter()
                    .map(|ev| format!("{ev}\n"))
                    .collect();
                fs::create_dir_all(dir).map_err(|source| CliError::Io {
                    path: dir.display().to_string(),
                    source,
                })?;
                write_file(&dir.join(format!("{stem}.mem")), &r.run.memory.dump_string())?;
                write_file(&dir.join(format!("{stem}.trace")), &trace)?;
            }
            None => {
                let _ = err.write_all(r.run.memory.dump_string().as_bytes());
            }
        }
    }
    let _ = writeln!(out, "{} rows, {mismatches} mismatches", results.len());
    Ok(if mismatches == 0 { EXIT_HALTED } else { EXIT_FAILED })
}
