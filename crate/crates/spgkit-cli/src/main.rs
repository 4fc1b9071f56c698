//! Batch front end: per-sample analysis, corpus runs, DOT export and
//! catalog validation.
//!
//! Exit codes: 0 on success, 1 when some samples failed (or a trace could
//! not be analyzed), 2 on configuration errors.

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spgkit::pipeline::{self, PipelineError, RunConfig, SampleOutcome};
use spgkit::signatures;
use spgkit::spg;

#[derive(Parser)]
#[command(name = "spgkit", version, about = "Propagation-graph analysis of malware execution traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Signature catalog (JSONL); defaults to the embedded 33-entry catalog.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Pre-infection API baseline (JSONL) for false-positive elimination.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Sensitive-API groups file (JSONL); defaults to the embedded groups.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Output directory; falls back to $SPGKIT_OUT, then "./spgkit-out".
    #[arg(long)]
    out: Option<PathBuf>,
    /// Node-expansion budget for simple-path enumeration.
    #[arg(long, default_value_t = spg::DEFAULT_PATH_BUDGET)]
    path_budget: u64,
    /// Discard samples executing fewer unique instructions than this.
    #[arg(long, default_value_t = 25)]
    instruction_floor: u64,
    /// Baseline-overlap ratio above which a process is a false positive.
    #[arg(long, default_value_t = 0.99)]
    overlap_threshold: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze one trace file and emit its JSON analysis and DOT graph.
    AnalyzeSample {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Analyze every sample in a corpus manifest and write all reports.
    AnalyzeCorpus {
        /// Corpus manifest (JSONL of sample metadata).
        #[arg(long)]
        corpus: PathBuf,
        /// Worker threads; 0 uses all available cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Print the DOT rendering of one trace's propagation graph.
    ExportDot {
        #[arg(long)]
        trace: PathBuf,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a signature catalog file and print its composition.
    ValidateCatalog {
        #[arg(long)]
        catalog: PathBuf,
    },
}

fn output_dir(opts: &CommonOpts) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| std::env::var_os("SPGKIT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("spgkit-out"))
}

fn run_config(opts: &CommonOpts) -> RunConfig {
    let mut config = RunConfig::new(output_dir(opts));
    config.catalog_path = opts.catalog.clone();
    config.baseline_path = opts.baseline.clone();
    config.groups_path = opts.groups.clone();
    config.path_budget = opts.path_budget;
    config.instruction_floor = opts.instruction_floor;
    config.overlap_threshold = opts.overlap_threshold;
    config
}

fn exit_code_for(err: &PipelineError) -> ExitCode {
    match err {
        PipelineError::Config(_)
        | PipelineError::Catalog(_)
        | PipelineError::Baseline(_)
        | PipelineError::Groups(_)
        | PipelineError::Manifest(_)
        | PipelineError::Io(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::AnalyzeSample { trace, opts } => {
            let config = run_config(&opts);
            match pipeline::run_sample(&config, &trace) {
                Ok(SampleOutcome::Analyzed { analysis, .. }) => {
                    let m = &analysis.metrics;
                    println!(
                        "{}: processes={} waves={} process_depth={} wave_depth={} width={} injections={}",
                        analysis.meta.sample_id,
                        m.process_count,
                        m.wave_count,
                        m.process_depth,
                        m.wave_depth,
                        m.width,
                        analysis.injections.len()
                    );
                    ExitCode::SUCCESS
                }
                Ok(SampleOutcome::Discarded { reason }) => {
                    println!("discarded: {reason}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        Command::AnalyzeCorpus { corpus, jobs, opts } => {
            let mut config = run_config(&opts);
            config.corpus_manifest = Some(corpus);
            config.parallelism = jobs;
            match pipeline::run_corpus(&config) {
                Ok(report) => {
                    println!(
                        "analyzed {} of {} samples ({} discarded, {} failed); reports in {}",
                        report.samples_analyzed,
                        report.samples_total,
                        report.discarded.len(),
                        report.failures.len(),
                        config.output_dir.display()
                    );
                    for failure in &report.failures {
                        eprintln!("failed: {}: {}", failure.sample_id, failure.error);
                    }
                    if report.failures.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        Command::ExportDot { trace, out } => {
            let render = || -> Result<String, PipelineError> {
                let bytes = fs::read(&trace)?;
                let parsed = spgkit::trace::parse_trace_bytes(&bytes).map_err(|source| {
                    PipelineError::Trace {
                        path: trace.display().to_string(),
                        source,
                    }
                })?;
                let graph = spg::build_spg(&parsed).map_err(|source| PipelineError::Graph {
                    path: trace.display().to_string(),
                    source,
                })?;
                Ok(spg::to_dot(&graph))
            };
            match render() {
                Ok(dot) => {
                    match out {
                        Some(path) => {
                            if let Err(e) = fs::write(&path, dot) {
                                eprintln!("error: {e}");
                                return ExitCode::from(2);
                            }
                        }
                        None => print!("{dot}"),
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        Command::ValidateCatalog { catalog } => {
            let file = match fs::File::open(&catalog) {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: {}: {e}", catalog.display());
                    return ExitCode::from(2);
                }
            };
            match signatures::load_catalog(BufReader::new(file)) {
                Ok(catalog) => {
                    let mut open = 0;
                    let mut launch = 0;
                    let mut shell = 0;
                    let mut other = 0;
                    for def in catalog.signatures() {
                        match def.access_class {
                            signatures::AccessClass::OpenExisting => open += 1,
                            signatures::AccessClass::LaunchNew => launch += 1,
                            signatures::AccessClass::ShellLaunch => shell += 1,
                            signatures::AccessClass::Other => other += 1,
                        }
                    }
                    println!(
                        "{} signatures (open_existing {open}, launch_new {launch}, shell_launch {shell}, other {other})",
                        catalog.len()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
