use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dpapsp::accountant::{BoundedConfig, Mode, PrivacyBudget};
use dpapsp::bounded::{bounded_apsp, BoundedOutput};
use dpapsp::graph::{exact_apsp, read_graph, read_topology, DistanceMatrix};
use dpapsp::harness::{evaluate, read_experiment_spec, run_experiment, write_csv, MECHANISM_STREAM};
use dpapsp::randomness::RandomStream;
use dpapsp::unbounded::{reconstruct_all, release_unbounded, UnboundedOptions, UnboundedRelease};
use dpapsp::verify::{audit_document, run_suite, SuiteConfig};

#[derive(Parser, Debug)]
#[command(name = "dpapsp", version, about = "Private all-pairs shortest distances over a public topology")]
struct Cli {
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Release noisy hitting-set distances and edge weights for arbitrary weights.
    ReleaseUnbounded(ReleaseUnboundedArgs),
    /// Release a full distance matrix for weights bounded by --weight-bound.
    ReleaseBounded(ReleaseBoundedArgs),
    /// Rebuild the distance matrix from an unbounded release and its topology.
    Reconstruct(ReconstructArgs),
    /// Exact distances, for reference only.
    Exact(ExactArgs),
    /// Error of an estimate against the exact distances of a graph.
    Eval(EvalArgs),
    /// Run an experiment file and write per-run CSV rows plus a summary.
    Sweep(SweepArgs),
    /// Run the invariant suite and audit release files.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct BudgetArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: Option<f64>,
    /// Pure ε-DP; forbids a positive --delta.
    #[arg(long)]
    pure: bool,
    /// Mechanism seed; a fresh one is drawn and logged when absent.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ReleaseUnboundedArgs {
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, default_value_t = 1.0)]
    c_l: f64,
    #[arg(long, default_value_t = 1.0)]
    c_t: f64,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the accounting block on its own.
    #[arg(long)]
    emit_accounting: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReleaseBoundedArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    weight_bound: f64,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Outer repetition count K.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    paper_constants: bool,
    /// Base-case knobs.
    #[arg(long, default_value_t = 1.0)]
    c_l: f64,
    #[arg(long, default_value_t = 1.0)]
    c_t: f64,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    emit_accounting: Option<PathBuf>,
    /// Write the top-level peel traces to this file.
    #[arg(long)]
    dump_peel: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[arg(long)]
    release: PathBuf,
    /// Topology file; weights, if present, are ignored.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExactArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// A matrix, or a bounded release carrying one.
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    /// CSV destination; overrides the one named in the experiment file.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = SuiteConfig::default().seed)]
    seed: u64,
    /// Release files whose accounting is recomputed.
    #[arg(long = "release")]
    releases: Vec<PathBuf>,
    /// Skip the invariant suite and only audit releases.
    #[arg(long)]
    audit_only: bool,
}

enum Outcome {
    Ok,
    VerifyFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerifyFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    match cli.command {
        Command::ReleaseUnbounded(a) => release_unbounded_cmd(a),
        Command::ReleaseBounded(a) => release_bounded_cmd(a),
        Command::Reconstruct(a) => {
            let release: UnboundedRelease = read_json(&a.release)?;
            let t = read_topology(&a.graph).with_context(|| format!("reading {}", a.graph.display()))?;
            write_json(a.output.as_deref(), &reconstruct_all(&release, &t)?)?;
            Ok(Outcome::Ok)
        }
        Command::Exact(a) => {
            let g = read_graph(&a.graph, None).with_context(|| format!("reading {}", a.graph.display()))?;
            write_json(a.output.as_deref(), &exact_apsp(&g))?;
            Ok(Outcome::Ok)
        }
        Command::Eval(a) => {
            let g = read_graph(&a.graph, None).with_context(|| format!("reading {}", a.graph.display()))?;
            let doc: serde_json::Value = read_json(&a.estimate)?;
            let matrix_doc = doc.get("matrix").cloned().unwrap_or(doc);
            let estimate: DistanceMatrix = serde_json::from_value(matrix_doc).context("estimate is not a matrix")?;
            write_json(a.output.as_deref(), &evaluate(&estimate, &exact_apsp(&g))?)?;
            Ok(Outcome::Ok)
        }
        Command::Sweep(a) => sweep_cmd(a),
        Command::Verify(a) => verify_cmd(a),
    }
}

fn resolve_budget(b: &BudgetArgs) -> Result<(PrivacyBudget, Mode, u64)> {
    let (budget, mode) = match (b.pure, b.delta) {
        (true, Some(d)) if d > 0.0 => bail!("--pure forbids --delta > 0"),
        (true, _) => (PrivacyBudget::pure(b.epsilon)?, Mode::Pure),
        (false, Some(d)) => (PrivacyBudget::new(b.epsilon, d)?, Mode::Approx),
        (false, None) => bail!("pass --delta for approximate DP or --pure"),
    };
    budget.check_mode(mode)?;
    let seed = match b.seed {
        Some(s) => s,
        None => {
            let s = SystemTime::now().duration_since(UNIX_EPOCH)?.as_nanos() as u64;
            eprintln!("seed: {s}");
            s
        }
    };
    Ok((budget, mode, seed))
}

fn release_unbounded_cmd(a: ReleaseUnboundedArgs) -> Result<Outcome> {
    let (budget, mode, seed) = resolve_budget(&a.budget)?;
    let g = read_graph(&a.graph, None).with_context(|| format!("reading {}", a.graph.display()))?;
    let options = UnboundedOptions { c_l: a.c_l, c_t: a.c_t, ..Default::default() };
    let release = release_unbounded(&g, &budget, mode, &RandomStream::new(seed, MECHANISM_STREAM), &options)?;
    write_json(a.output.as_deref(), &release)?;
    if let Some(path) = &a.emit_accounting {
        write_json(Some(path), &release.accounting)?;
    }
    Ok(Outcome::Ok)
}

fn release_bounded_cmd(a: ReleaseBoundedArgs) -> Result<Outcome> {
    let (budget, mode, seed) = resolve_budget(&a.budget)?;
    let g = read_graph(&a.graph, Some(a.weight_bound)).with_context(|| format!("reading {}", a.graph.display()))?;
    let config = BoundedConfig {
        repetitions: a.k,
        paper_constants: a.paper_constants,
        base_c_l: a.c_l,
        base_c_t: a.c_t,
        ..Default::default()
    };
    let stream = RandomStream::new(seed, MECHANISM_STREAM);
    let mut out: BoundedOutput = bounded_apsp(&g, &budget, mode, &stream, &config, a.dump_peel.is_some())?;
    if let Some(path) = &a.dump_peel {
        write_json(Some(path), &std::mem::take(&mut out.peel_traces))?;
    }
    write_json(a.output.as_deref(), &out)?;
    if let Some(path) = &a.emit_accounting {
        write_json(Some(path), &out.accounting)?;
    }
    Ok(Outcome::Ok)
}

fn sweep_cmd(a: SweepArgs) -> Result<Outcome> {
    let spec = read_experiment_spec(&a.spec).with_context(|| format!("reading {}", a.spec.display()))?;
    let base = a.spec.parent().unwrap_or(Path::new("."));
    let csv_path = a.output.or_else(|| spec.output.as_ref().map(|p| base.join(p)));
    let summary_path = a.summary.or_else(|| spec.summary.as_ref().map(|p| base.join(p)));
    let (rows, summary) = run_experiment(&spec)?;
    match &csv_path {
        Some(p) => write_csv(&rows, BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))?,
        None => write_csv(&rows, io::stdout().lock())?,
    }
    match &summary_path {
        Some(p) => write_json(Some(p), &summary)?,
        None => eprintln!("{}", serde_json::to_string_pretty(&summary)?),
    }
    Ok(Outcome::Ok)
}

fn verify_cmd(a: VerifyArgs) -> Result<Outcome> {
    let mut all_passed = true;
    if !a.audit_only {
        let cfg = SuiteConfig { seed: a.seed, ..Default::default() };
        for check in run_suite(&cfg)? {
            println!("{} {}: {}", if check.passed { "PASS" } else { "FAIL" }, check.name, check.detail);
            all_passed &= check.passed;
        }
    }
    for path in &a.releases {
        let doc: serde_json::Value = read_json(path)?;
        let check = audit_document(&doc);
        println!("{} audit {}: {}", if check.passed { "PASS" } else { "FAIL" }, path.display(), check.detail);
        all_passed &= check.passed;
    }
    Ok(if all_passed { Outcome::Ok } else { Outcome::VerifyFailed })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(io::BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            writeln!(f, "{text}")?;
            f.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}
