use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use sigdla::bench::{self, Suite};
use sigdla::formats;
use sigdla::manifest::{load_json, resolve, ManifestError, ReportFormat, RunManifest};
use sigdla::stimulus::random_inputs;
use sigdla::verify::{check_case, VerifyError};
use sigdla_core::engine::{run, EngineError, MachineConfig};
use sigdla_core::mapper::count_mult_adds;

#[derive(Parser)]
#[command(
    name = "sigdla",
    version,
    about = "Assembler, mapper and cycle-approximate simulator for the SigDLA accelerator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble text into a binary program image.
    Assemble {
        input: PathBuf,
        /// Defaults to the input path with a `.bin` extension.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Disassemble a binary program image (or re-format assembly text).
    Disassemble {
        input: PathBuf,
        /// Defaults to standard output.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Map a workload, simulate it and write outputs and the cycle report.
    Run(RunArgs),
    /// Simulate and compare against the reference implementations.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Number of random input sets in addition to `--input`.
        #[arg(long, default_value_t = 4)]
        cases: usize,
    },
    /// Run a benchmark suite and tabulate speedups against 16x16.
    Bench {
        suite: PathBuf,
        #[arg(long)]
        machine: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
        format: ReportFormat,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the multiply-accumulate count of a workload or network.
    Count {
        #[arg(long)]
        workload: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run manifest (JSON); flags override its fields.
    manifest: Option<PathBuf>,
    #[arg(long)]
    workload: Option<PathBuf>,
    #[arg(long)]
    machine: Option<PathBuf>,
    /// Signal for input `x` (CSV, or raw little-endian i16 for .bin/.raw).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
    /// Overlap DMA with compute (double buffering).
    #[arg(long)]
    overlap_dma: bool,
    #[arg(long)]
    cycle_budget: Option<u64>,
    /// Seed for random stimulus: fills inputs that are not given on `run`,
    /// starts the sweep on `verify` (default 0).
    #[arg(long)]
    seed: Option<u64>,
}

/// Exit status classes.
enum Failure {
    /// Verification mismatch.
    Mismatch,
    /// Bad arguments, unreadable or invalid files.
    Usage(anyhow::Error),
    /// The simulated machine faulted.
    Fault(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

impl From<ManifestError> for Failure {
    fn from(e: ManifestError) -> Self {
        Failure::Usage(e.into())
    }
}

impl From<formats::FormatError> for Failure {
    fn from(e: formats::FormatError) -> Self {
        Failure::Usage(e.into())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure::Fault(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Assemble { input, out } => assemble(&input, out),
        Command::Disassemble { input, out } => disassemble(&input, out),
        Command::Run(args) => run_cmd(&args),
        Command::Verify { run, cases } => verify_cmd(&run, cases),
        Command::Bench {
            suite,
            machine,
            format,
            out,
        } => bench_cmd(&suite, machine, format, out),
        Command::Count { workload } => count_cmd(&workload),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Mismatch) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Fault(e)) => {
            eprintln!("engine fault: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn assemble(input: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let text = formats::read_to_string(input)?;
    let program = sigdla_core::isa::assemble(&text).map_err(|e| anyhow!("{}:{e}", input.display()))?;
    let bytes = program.to_bytes().map_err(|e| anyhow!("{}: {e}", input.display()))?;
    let out = out.unwrap_or_else(|| input.with_extension("bin"));
    formats::write(&out, bytes)?;
    eprintln!("{}: {} instructions", out.display(), program.len());
    Ok(())
}

fn disassemble(input: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let program = formats::read_program(input)?;
    let text = formats::program_text(&program);
    match out {
        Some(p) => formats::write(&p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Manifest from the positional file, with flags layered on top.
fn manifest(args: &RunArgs) -> Result<RunManifest, Failure> {
    let mut m = match &args.manifest {
        Some(p) => RunManifest::load(p)?,
        None => RunManifest::default(),
    };
    let cwd =
        |p: &PathBuf| -> Result<PathBuf, Failure> { Ok(resolve(p, None)?.canonicalize().context("resolving path")?) };
    if let Some(p) = &args.workload {
        m.workload = Some(cwd(p)?);
    }
    if let Some(p) = &args.machine {
        m.machine = Some(cwd(p)?);
    }
    if let Some(p) = &args.input {
        m.input = Some(cwd(p)?);
    }
    if let Some(p) = &args.out {
        m.out = Some(std::path::absolute(p).context("resolving output directory")?);
    }
    if args.format.is_some() {
        m.format = args.format;
    }
    Ok(m)
}

fn machine(m: &RunManifest, args: &RunArgs) -> Result<MachineConfig, Failure> {
    let mut cfg = m.load_machine()?;
    cfg.overlap_dma |= args.overlap_dma;
    if let Some(b) = args.cycle_budget {
        cfg.cycle_budget = b;
    }
    Ok(cfg)
}

fn run_cmd(args: &RunArgs) -> Result<(), Failure> {
    let m = manifest(args)?;
    let workload = m.load_workload()?;
    let cfg = machine(&m, args)?;
    let (program, plan) = workload.map().map_err(|e| anyhow!("mapping failed: {e}"))?;
    let (inputs, saturated) = match args.seed {
        Some(seed) => {
            let mut inputs = random_inputs(&workload, &plan, seed);
            let (given, saturated) = m.load_inputs_partial(&plan)?;
            inputs.extend(given);
            (inputs, saturated)
        }
        None => m.load_inputs(&plan)?,
    };
    if saturated > 0 {
        eprintln!("warning: {saturated} input samples saturated");
    }
    let (outputs, report) = run(&program, &plan, &inputs, &cfg)?;
    let format = m.format.unwrap_or_default();
    let report_text = match format {
        ReportFormat::Json => formats::report_json(&report),
        ReportFormat::Csv => formats::report_csv(&report),
    };
    match m.out_dir() {
        Some(dir) => {
            for (name, values) in &outputs {
                formats::write(&dir.join(format!("{name}.csv")), formats::signal_csv(values))?;
            }
            formats::write(&dir.join(format!("report.{}", format.extension())), report_text)?;
            formats::write(&dir.join("program.asm"), formats::program_text(&program))?;
            let plan_json = serde_json::to_string_pretty(&plan).context("serializing plan")? + "\n";
            formats::write(&dir.join("plan.json"), plan_json)?;
            eprintln!("{}: {} cycles", dir.display(), report.total_cycles);
        }
        None => print!("{report_text}"),
    }
    Ok(())
}

fn verify_cmd(args: &RunArgs, cases: usize) -> Result<(), Failure> {
    let seed = args.seed.unwrap_or(0);
    let m = manifest(args)?;
    let workload = m.load_workload()?;
    let cfg = machine(&m, args)?;
    let (program, plan) = workload.map().map_err(|e| anyhow!("mapping failed: {e}"))?;
    let mut sets = Vec::new();
    if m.input.is_some() {
        sets.push(("input".to_string(), m.load_inputs(&plan)?.0));
    }
    for i in 0..cases {
        let s = seed.wrapping_add(i as u64);
        sets.push((format!("seed {s}"), random_inputs(&workload, &plan, s)));
    }
    if sets.is_empty() {
        return Err(anyhow!("nothing to verify: give --input or --cases > 0").into());
    }
    let mut failed = 0;
    for (label, inputs) in &sets {
        let checks = check_case(label, &workload, &program, &plan, inputs, &cfg).map_err(|e| match e {
            VerifyError::Engine(e) => Failure::Fault(e.into()),
            e => Failure::Usage(e.into()),
        })?;
        for c in checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            println!("{verdict} {}: error {:.3e} (bound {:.3e})", c.name, c.error, c.bound);
            failed += usize::from(!c.passed);
        }
    }
    if failed > 0 {
        println!("{failed} check(s) failed");
        Err(Failure::Mismatch)
    } else {
        Ok(())
    }
}

fn bench_cmd(
    suite: &Path,
    machine: Option<PathBuf>,
    format: ReportFormat,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let path = resolve(suite, None)?;
    let s: Suite = load_json(&path)?;
    let machine = machine
        .map(|p| -> Result<MachineConfig, Failure> { Ok(load_json(&resolve(&p, None)?)?) })
        .transpose()?;
    let rows = bench::run_suite(&s, path.parent(), machine.as_ref()).map_err(|e| match e {
        bench::BenchError::Engine { .. } => Failure::Fault(e.into()),
        e => Failure::Usage(e.into()),
    })?;
    let text = match format {
        ReportFormat::Json => bench::rows_json(&rows),
        ReportFormat::Csv => bench::rows_csv(&rows),
    };
    match out {
        Some(p) => formats::write(&p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn count_cmd(workload: &Path) -> Result<(), Failure> {
    let w = load_json(&resolve(workload, None)?)?;
    println!("{}", count_mult_adds(&w));
    Ok(())
}
