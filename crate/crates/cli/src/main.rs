use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use spmem::approx::{approx_online_finish, ActiveRule, ApproxAlgebra};
use spmem::bench::bench_trace;
use spmem::exact::{exact_online, exact_online_finish, ExactAlgebra};
use spmem::report::{
    diff_report, render_diff, render_hwm_table, render_source_maps, source_maps, ApproxReport, ExactReport,
};
use spmem::spdag::{build_spdag, fold_pipelined, Folder, StreamingAnalyzer};
use spmem::trace::{
    gen_memory_explosion, parse_trace_with, write_trace, ParseOptions, RandomSpConfig, SpawnShape, TraceEventSeq,
};
use spmem::verify::{run_campaign, CampaignConfig, Mutation};
use spmem::{Error, ThresholdQuery};

/// Batches in flight between the parser thread and the analysis.
const PIPE_DEPTH: usize = 8;

#[derive(Parser)]
#[command(name = "spmem", version, about = "Memory high-water marks of fork-join programs from serial traces")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Reject unknown keys in trace files.
    #[arg(long, global = true)]
    strict: bool,
    /// Print per-site source maps and extra counters.
    #[arg(long, short = 'v', global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Approx,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    /// One strand allocating n bytes per spawned child.
    Me,
    /// Seeded random series-parallel program.
    Random,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Shape {
    Flat,
    Balanced,
    Mixed,
}

impl From<Shape> for SpawnShape {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Flat => SpawnShape::Flat,
            Shape::Balanced => SpawnShape::Balanced,
            Shape::Mixed => SpawnShape::Mixed,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MutationArg {
    None,
    DropSeriesTotal,
}

#[derive(Subcommand)]
enum Command {
    /// Compute H[1..=p], or test H_p against a threshold.
    Analyze(AnalyzeArgs),
    /// Write a synthetic trace as JSON Lines.
    Generate(GenerateArgs),
    /// Cross-check every analysis against the brute-force oracle.
    Verify(VerifyArgs),
    /// Work and space counters across processor counts.
    Bench(BenchArgs),
    /// Per-site change of the high-water mark between two processor counts.
    Diff(DiffArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    /// Processor count.
    #[arg(short = 'p', value_parser = clap::value_parser!(u64).range(1..))]
    p: u64,
    /// Memory bound M in bytes; K, M and G are powers of 1024.
    #[arg(long, value_parser = parse_bytes)]
    threshold: Option<u64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value_t = Family::Me)]
    family: Family,
    /// Size for `me`; strand budget for `random`.
    #[arg(short = 'n', default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    depth: usize,
    #[arg(long, default_value_t = 4)]
    children: usize,
    /// Largest single allocation of `random`.
    #[arg(long, default_value_t = 64)]
    scale: u64,
    #[arg(long, value_enum, default_value_t = Shape::Mixed)]
    shape: Shape,
    /// Output file; standard output when absent.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    traces: usize,
    /// Strand budget per trace; at most the oracle cap.
    #[arg(long, default_value_t = 16)]
    strands: usize,
    /// Largest processor count checked.
    #[arg(short = 'p', default_value_t = 4)]
    p: usize,
    /// Evenly spaced thresholds per (trace, p).
    #[arg(long, default_value_t = 6)]
    thresholds: usize,
    /// Defect injected into the exact analysis.
    #[arg(long, value_enum, default_value_t = MutationArg::None)]
    mutation: MutationArg,
    /// Report counterexamples as found, without shrinking.
    #[arg(long)]
    no_shrink: bool,
    /// Directory receiving counterexample traces.
    #[arg(long, default_value = "counterexamples")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Trace file; a generated family when absent.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Family::Me)]
    family: Family,
    #[arg(short = 'n', default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Processor counts, comma separated.
    #[arg(short = 'p', value_delimiter = ',', default_value = "32,64,128")]
    p: Vec<usize>,
    #[arg(long, value_parser = parse_bytes, default_value = "1K")]
    threshold: u64,
}

#[derive(Args)]
struct DiffArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Processor count to compare from.
    #[arg(short = 'p', value_parser = clap::value_parser!(u64).range(1..))]
    p: u64,
    /// Processor count to compare to; `p + 1` when absent.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    to: Option<u64>,
}

/// How a run failed, mapped one-to-one onto exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    InvalidTrace(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::InvalidTrace(_) => 2,
            Failure::Verification(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::InvalidTrace(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::CapExceeded { .. } | Error::ProcessorMismatch(..) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::InvalidTrace(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Byte count with an optional K, M or G suffix (powers of 1024).
fn parse_bytes(s: &str) -> std::result::Result<u64, String> {
    let s = s.trim();
    let (digits, shift) = match s.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => {
            let shift = match c.to_ascii_uppercase() {
                'K' => 10,
                'M' => 20,
                'G' => 30,
                _ => return Err(format!("unknown suffix '{c}' (expected K, M or G)")),
            };
            (&s[..i], shift)
        }
        _ => (s, 0),
    };
    let base: u64 = digits.parse().map_err(|_| format!("'{s}' is not a byte count"))?;
    base.checked_mul(1u64 << shift).ok_or_else(|| format!("'{s}' does not fit in 64 bits"))
}

fn open_trace(path: &Path) -> std::result::Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Usage(format!("cannot open {}: {e}", path.display())))
}

fn load_trace(path: &Path, strict: bool) -> std::result::Result<TraceEventSeq, Failure> {
    let parsed = parse_trace_with(open_trace(path)?, ParseOptions { strict })?;
    for w in &parsed.warnings {
        log::warn!("{w}");
    }
    Ok(parsed.trace)
}

/// Write to standard output; a closed pipe ends the run quietly.
fn emit(text: &str) -> Outcome {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(value: &impl serde::Serialize) -> Outcome {
    let s = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
    emit(&(s + "\n"))
}

fn analyze(cli: &Cli, a: &AnalyzeArgs) -> Outcome {
    let opts = ParseOptions { strict: cli.strict };
    match a.mode {
        Mode::Exact => {
            let p = a.p as usize;
            let (out, maps) = if cli.verbose {
                // Attribution needs the whole tree in memory.
                let trace = load_trace(&a.trace, cli.strict)?;
                let out = exact_online(&trace, p)?;
                (out, Some(source_maps(&build_spdag(&trace)?, p)?))
            } else {
                let folder = Folder::new(StreamingAnalyzer::new(ExactAlgebra::new(p)?));
                let (res, fold) = fold_pipelined(open_trace(&a.trace)?, opts, folder, PIPE_DEPTH)?;
                (exact_online_finish(res, fold), None)
            };
            let report = ExactReport {
                mode: "exact".into(),
                p,
                hwm: out.result.hwm,
                strands: out.fold.strands,
                events: out.fold.events,
                max_depth: out.fold.max_depth,
                work_cells: out.result.work.cells,
                peak_cells: out.stream.peak_cells,
                source_maps: maps,
            };
            match cli.format {
                Format::Json => print_json(&report),
                Format::Text => {
                    let mut text = render_hwm_table(&report.hwm) + "\n";
                    if let Some(maps) = &report.source_maps {
                        text += &render_source_maps(maps);
                        text += &format!(
                            "{} strands, {} events, depth {}, {} cells, peak {} cells\n",
                            report.strands, report.events, report.max_depth, report.work_cells, report.peak_cells
                        );
                    }
                    emit(&text)
                }
            }
        }
        Mode::Approx => {
            let m = a.threshold.ok_or_else(|| Failure::Usage("approx mode requires --threshold".into()))?;
            let q = ThresholdQuery::new(m, a.p)?;
            let folder = Folder::new(StreamingAnalyzer::new(ApproxAlgebra::new(q, ActiveRule::default())));
            let (res, fold) = fold_pipelined(open_trace(&a.trace)?, opts, folder, PIPE_DEPTH)?;
            let out = approx_online_finish(res, &q, fold);
            let report = ApproxReport {
                mode: "approx".into(),
                p: a.p,
                threshold: m,
                answer: out.outcome.answer.into(),
                h: out.outcome.h,
                margin: out.outcome.h as f64 - m as f64 / 2.0,
                strands: out.fold.strands,
                events: out.fold.events,
                max_depth: out.fold.max_depth,
                ops: out.outcome.ops,
                peak_cells: out.stream.peak_cells,
            };
            match cli.format {
                Format::Json => print_json(&report),
                Format::Text => {
                    let mut text = report.render_text() + "\n";
                    if cli.verbose {
                        text += &format!(
                            "{} strands, {} events, depth {}, {} ops, peak {} cells\n",
                            report.strands, report.events, report.max_depth, report.ops, report.peak_cells
                        );
                    }
                    emit(&text)
                }
            }
        }
    }
}

fn generate(g: &GenerateArgs) -> Outcome {
    let trace = match g.family {
        Family::Me => gen_memory_explosion(g.n)?,
        Family::Random => RandomSpConfig::new(g.seed, g.depth, g.children, g.scale)
            .with_max_strands(g.n)
            .with_shape(g.shape.into())
            .generate(),
    };
    match &g.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            write_trace(&trace, &mut w)?;
            w.flush()?;
        }
        None => {
            let mut buf = Vec::new();
            write_trace(&trace, &mut buf)?;
            emit(&String::from_utf8_lossy(&buf))?;
        }
    }
    Ok(())
}

fn verify(cli: &Cli, v: &VerifyArgs) -> Outcome {
    let cfg = CampaignConfig {
        seed: v.seed,
        traces: v.traces,
        max_strands: v.strands,
        max_p: v.p,
        thresholds: v.thresholds,
        mutation: match v.mutation {
            MutationArg::None => Mutation::None,
            MutationArg::DropSeriesTotal => Mutation::DropSeriesTotal,
        },
        shrink: !v.no_shrink,
    };
    let report = run_campaign(&cfg)?;
    let written = if report.passed() { Vec::new() } else { report.write_counterexamples(&v.out)? };
    match cli.format {
        Format::Json => {
            let violations: Vec<_> = report
                .violations
                .iter()
                .zip(written.iter().map(Some).chain(std::iter::repeat(None)))
                .map(|(x, path)| {
                    json!({
                        "seed": x.seed,
                        "check": x.check.to_string(),
                        "detail": x.detail,
                        "events": x.trace.len(),
                        "file": path.map(|p| p.display().to_string()),
                    })
                })
                .collect();
            print_json(&json!({
                "traces": report.traces,
                "checks": report.checks,
                "violations": violations,
            }))?;
        }
        Format::Text => {
            let mut text = String::new();
            for (x, path) in report.violations.iter().zip(written.iter()) {
                text += &format!("violation [{}] seed {}: {}\n", x.check, x.seed, x.detail);
                text += &format!("  counterexample ({} events): {}\n", x.trace.len(), path.display());
            }
            emit(&(text + &report.summary() + "\n"))?;
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("{} violations", report.violations.len())))
    }
}

fn bench(cli: &Cli, b: &BenchArgs) -> Outcome {
    let (trace, name) = match &b.trace {
        Some(path) => {
            let trace = load_trace(path, cli.strict)?;
            let name = trace.meta.name.clone().unwrap_or_else(|| path.display().to_string());
            (trace, name)
        }
        None => match b.family {
            Family::Me => (gen_memory_explosion(b.n)?, format!("memory-explosion-{}", b.n)),
            Family::Random => (
                RandomSpConfig::new(b.seed, 12, 4, 64).with_max_strands(b.n).generate(),
                format!("random-{}-{}", b.seed, b.n),
            ),
        },
    };
    let report = bench_trace(&trace, &name, &b.p, b.threshold)?;
    let failures = report.failures();
    match cli.format {
        Format::Json => print_json(&json!({ "report": report, "failures": failures }))?,
        Format::Text => {
            let mut text = report.render();
            for f in &failures {
                text += &format!("FAIL {f}\n");
            }
            emit(&text)?;
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failures.join("; ")))
    }
}

fn diff(cli: &Cli, d: &DiffArgs) -> Outcome {
    let from = d.p as usize;
    let to = d.to.map_or(from + 1, |t| t as usize);
    let trace = load_trace(&d.trace, cli.strict)?;
    let maps = source_maps(&build_spdag(&trace)?, from.max(to))?;
    let report = diff_report(&maps[from - 1], &maps[to - 1]);
    match cli.format {
        Format::Json => print_json(&report),
        Format::Text => {
            let mut text = String::new();
            if cli.verbose {
                text += &render_source_maps(&[maps[from - 1].clone(), maps[to - 1].clone()]);
            }
            emit(&(text + &render_diff(&report)))
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Analyze(a) => analyze(cli, a),
        Command::Generate(g) => generate(g),
        Command::Verify(v) => verify(cli, v),
        Command::Bench(b) => bench(cli, b),
        Command::Diff(d) => diff(cli, d),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("spmem: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
