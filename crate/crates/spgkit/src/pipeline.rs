//! Pipeline orchestration: parse, build, match, filter, analyze.
//!
//! `run_sample` processes one trace end to end; `run_corpus` fans the same
//! pipeline out over a manifest (in parallel when the `parallel` feature is
//! enabled and more than one job is requested), merges the per-sample
//! results deterministically and writes every report artifact. Identical
//! inputs produce byte-identical outputs regardless of the job count.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analytics::{
    self, ProcessActivity, SampleAnalysis, SensitiveApiGroups, SensitiveGroup,
};
use crate::fp_filter::{self, BaselineProfile};
use crate::report;
use crate::signatures::{self, SignatureCatalog};
use crate::spg::{self, Spg};
use crate::trace::{self, ExecutionTrace, SampleMeta, Viability};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus_manifest: Option<PathBuf>,
    pub catalog_path: Option<PathBuf>,
    pub baseline_path: Option<PathBuf>,
    pub groups_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub path_budget: u64,
    pub instruction_floor: u64,
    pub overlap_threshold: f64,
    /// Number of worker threads for corpus runs; 0 means all available.
    pub parallelism: usize,
}

impl RunConfig {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            corpus_manifest: None,
            catalog_path: None,
            baseline_path: None,
            groups_path: None,
            output_dir: output_dir.into(),
            path_budget: spg::DEFAULT_PATH_BUDGET,
            instruction_floor: 25,
            overlap_threshold: fp_filter::DEFAULT_OVERLAP_THRESHOLD,
            parallelism: 0,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.overlap_threshold > 0.0 && self.overlap_threshold < 1.0) {
            return Err(PipelineError::Config(format!(
                "overlap threshold {} outside (0, 1)",
                self.overlap_threshold
            )));
        }
        if self.path_budget == 0 {
            return Err(PipelineError::Config("path budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("all {0} samples failed or were discarded")]
    AllSamplesFailed(usize),
    #[error("{path}: {source}")]
    Trace {
        path: String,
        #[source]
        source: trace::TraceError,
    },
    #[error("{path}: {source}")]
    Graph {
        path: String,
        #[source]
        source: spg::SpgError,
    },
    #[error("{path}: {source}")]
    Filter {
        path: String,
        #[source]
        source: fp_filter::FpError,
    },
    #[error("catalog: {0}")]
    Catalog(#[from] signatures::CatalogError),
    #[error("baseline: {0}")]
    Baseline(#[from] fp_filter::BaselineError),
    #[error("groups: {0}")]
    Groups(#[from] analytics::GroupsError),
    #[error("manifest: {0}")]
    Manifest(#[from] trace::ManifestError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Shared immutable inputs for a run.
pub struct Resources {
    pub catalog: SignatureCatalog,
    pub baseline: BaselineProfile,
    pub groups: SensitiveApiGroups,
}

impl Resources {
    pub fn load(config: &RunConfig) -> Result<Resources, PipelineError> {
        let catalog = match &config.catalog_path {
            Some(path) => signatures::load_catalog(BufReader::new(fs::File::open(path)?))?,
            None => signatures::default_catalog(),
        };
        let baseline = match &config.baseline_path {
            Some(path) => fp_filter::load_baseline(BufReader::new(fs::File::open(path)?))?,
            None => BaselineProfile::default(),
        };
        let groups = match &config.groups_path {
            Some(path) => analytics::load_groups(BufReader::new(fs::File::open(path)?))?,
            None => analytics::default_groups(),
        };
        Ok(Resources {
            catalog,
            baseline,
            groups,
        })
    }
}

#[derive(Debug)]
#[allow(clippy::large_enum_variant)]
pub enum SampleOutcome {
    Analyzed {
        analysis: SampleAnalysis,
        graph: Spg,
    },
    Discarded {
        reason: String,
    },
}

fn sensitive_usage(
    trace: &ExecutionTrace,
    pid: u32,
    groups: &SensitiveApiGroups,
) -> BTreeMap<SensitiveGroup, BTreeSet<String>> {
    let mut usage: BTreeMap<SensitiveGroup, BTreeSet<String>> = BTreeMap::new();
    for (_, name, _) in trace.tainted_calls_of(pid) {
        if let Some(group) = groups.group_of(name) {
            usage.entry(group).or_default().insert(name.to_string());
        }
    }
    usage
}

/// Run the full pipeline over an already-parsed trace.
pub fn analyze_trace(
    trace: &ExecutionTrace,
    meta: SampleMeta,
    resources: &Resources,
    config: &RunConfig,
) -> Result<SampleOutcome, PipelineError> {
    let trace_path = meta.trace_path.clone();
    if let Viability::Discarded { reason } =
        trace::validate_sample_viability(trace, config.instruction_floor)
    {
        return Ok(SampleOutcome::Discarded { reason });
    }

    let graph = spg::build_spg(trace).map_err(|source| PipelineError::Graph {
        path: trace_path.clone(),
        source,
    })?;
    let metrics = spg::metrics(&graph, config.path_budget).map_err(|source| {
        PipelineError::Graph {
            path: trace_path.clone(),
            source,
        }
    })?;
    let injections = signatures::extract_injections(trace, &graph, &resources.catalog);
    let signature_set: BTreeSet<u32> =
        injections.iter().filter_map(|i| i.signature_id).collect();

    let initial_pid = trace.initial_pid();
    let per_process: Vec<ProcessActivity> = graph
        .pids()
        .into_iter()
        .map(|pid| {
            let info = trace.process(pid).expect("graph pid comes from the trace");
            ProcessActivity {
                pid,
                image_name: info.image_name.clone(),
                is_initial: pid == initial_pid,
                wave_count: info.wave_count,
                unique_instructions: trace.unique_instructions_of(pid),
                sensitive_api_usage: sensitive_usage(trace, pid, &resources.groups),
            }
        })
        .collect();

    let analysis = SampleAnalysis {
        meta,
        metrics,
        injections,
        per_process,
        signature_set,
        fp_removed: Vec::new(),
    };

    let outcome = fp_filter::filter_analysis(
        trace,
        &graph,
        analysis,
        &resources.baseline,
        config.overlap_threshold,
        config.path_budget,
    )
    .map_err(|source| PipelineError::Filter {
        path: trace_path,
        source,
    })?;

    Ok(SampleOutcome::Analyzed {
        analysis: outcome.analysis,
        graph: outcome.graph,
    })
}

fn load_trace(path: &Path) -> Result<ExecutionTrace, PipelineError> {
    let file = fs::File::open(path).map_err(|e| PipelineError::Trace {
        path: path.display().to_string(),
        source: trace::TraceError::Io(e),
    })?;
    trace::parse_trace(BufReader::new(file)).map_err(|source| PipelineError::Trace {
        path: path.display().to_string(),
        source,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Analyze one trace file and emit its JSON analysis and DOT graph.
pub fn run_sample(config: &RunConfig, trace_path: &Path) -> Result<SampleOutcome, PipelineError> {
    config.validate()?;
    let resources = Resources::load(config)?;
    let bytes = fs::read(trace_path)?;
    let parsed = trace::parse_trace_bytes(&bytes).map_err(|source| PipelineError::Trace {
        path: trace_path.display().to_string(),
        source,
    })?;
    let meta = SampleMeta {
        sample_id: sha256_hex(&bytes),
        family: "unknown".to_string(),
        first_seen_year: 2000,
        trace_path: trace_path.display().to_string(),
    };
    let outcome = analyze_trace(&parsed, meta, &resources, config)?;
    if let SampleOutcome::Analyzed { analysis, graph } = &outcome {
        write_sample_artifacts(&config.output_dir, analysis, graph)?;
    }
    Ok(outcome)
}

fn write_sample_artifacts(
    out_dir: &Path,
    analysis: &SampleAnalysis,
    graph: &Spg,
) -> Result<(), PipelineError> {
    let analyses = out_dir.join("analyses");
    let dots = out_dir.join("dot");
    fs::create_dir_all(&analyses)?;
    fs::create_dir_all(&dots)?;
    let mut json = serde_json::to_string_pretty(analysis).expect("analysis serializes");
    json.push('\n');
    fs::write(analyses.join(format!("{}.json", analysis.meta.sample_id)), json)?;
    fs::write(
        dots.join(format!("{}.dot", analysis.meta.sample_id)),
        spg::to_dot(graph),
    )?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiscardedSample {
    pub sample_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FailedSample {
    pub sample_id: String,
    pub error: String,
}

#[derive(Debug, Serialize)]
pub struct CorpusReport {
    pub samples_total: usize,
    pub samples_analyzed: usize,
    pub distributions: analytics::Distributions,
    pub wave_split: analytics::WaveSplit,
    pub instruction_split: analytics::InstructionSplit,
    pub sensitive_usage: analytics::SensitiveUsageTable,
    pub family_stats: Vec<analytics::FamilyStats>,
    pub family_averages: analytics::FamilyAverages,
    pub target_intersections: Vec<analytics::TargetIntersectionStats>,
    pub yearly: Vec<analytics::YearlyStats>,
    pub droppers: analytics::DropperStats,
    /// Distinct (source, target) pairs across the corpus.
    pub injections_total: u64,
    /// Matched signature instances by access class (open, launch, shell).
    pub access_split: (u64, u64, u64),
    pub discarded: Vec<DiscardedSample>,
    pub failures: Vec<FailedSample>,
}

/// Build the corpus-level report from per-sample analyses.
pub fn build_report(
    analyses: &[SampleAnalysis],
    catalog: &SignatureCatalog,
    discarded: Vec<DiscardedSample>,
    failures: Vec<FailedSample>,
) -> Result<CorpusReport, PipelineError> {
    let distributions = analytics::corpus_distributions(analyses).map_err(|e| {
        PipelineError::Config(format!("cannot build corpus report: {e}"))
    })?;
    let all_events: Vec<_> = analyses
        .iter()
        .flat_map(|a| a.injections.iter().cloned())
        .collect();
    let injections_total = analyses.iter().map(|a| a.injection_pair_count()).sum();
    let target_intersections = analytics::target_intersection_stats(analyses)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let family_stats = analytics::family_stats(analyses);
    let family_averages = analytics::family_stats_averages(&family_stats);
    Ok(CorpusReport {
        samples_total: analyses.len() + discarded.len() + failures.len(),
        samples_analyzed: analyses.len(),
        distributions,
        wave_split: analytics::wave_split(analyses),
        instruction_split: analytics::instruction_split(analyses),
        sensitive_usage: analytics::sensitive_api_table(analyses),
        family_stats,
        family_averages,
        target_intersections,
        yearly: analytics::evolution_stats(analyses),
        droppers: analytics::dropper_stats(analyses),
        injections_total,
        access_split: signatures::access_split(&all_events, catalog),
        discarded,
        failures,
    })
}

/// The analysis phase of a corpus run, before any report is written.
pub struct CorpusOutcomes {
    pub analyses: Vec<SampleAnalysis>,
    pub graphs: Vec<Spg>,
    pub discarded: Vec<DiscardedSample>,
    pub failures: Vec<FailedSample>,
    pub resources: Resources,
}

/// Run the per-sample pipeline over every manifest entry (in parallel when
/// configured) without writing anything. Results keep manifest order.
pub fn analyze_corpus(config: &RunConfig) -> Result<CorpusOutcomes, PipelineError> {
    config.validate()?;
    let manifest_path = config
        .corpus_manifest
        .as_ref()
        .ok_or_else(|| PipelineError::Config("corpus manifest path is required".into()))?;
    let resources = Resources::load(config)?;
    let manifest = trace::parse_manifest(BufReader::new(fs::File::open(manifest_path)?))?;
    let base_dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();

    let run_one = |meta: &SampleMeta| -> Result<SampleOutcome, PipelineError> {
        let path = base_dir.join(&meta.trace_path);
        let parsed = load_trace(&path)?;
        analyze_trace(&parsed, meta.clone(), &resources, config)
    };

    let outcomes: Vec<Result<SampleOutcome, PipelineError>> =
        map_samples(&manifest, config.parallelism, run_one);

    let mut analyses = Vec::new();
    let mut graphs = Vec::new();
    let mut discarded = Vec::new();
    let mut failures = Vec::new();
    for (meta, outcome) in manifest.iter().zip(outcomes) {
        match outcome {
            Ok(SampleOutcome::Analyzed { analysis, graph }) => {
                analyses.push(analysis);
                graphs.push(graph);
            }
            Ok(SampleOutcome::Discarded { reason }) => discarded.push(DiscardedSample {
                sample_id: meta.sample_id.clone(),
                reason,
            }),
            Err(e) => failures.push(FailedSample {
                sample_id: meta.sample_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    if analyses.is_empty() {
        return Err(PipelineError::AllSamplesFailed(manifest.len()));
    }
    Ok(CorpusOutcomes {
        analyses,
        graphs,
        discarded,
        failures,
        resources,
    })
}

/// Run every sample in the manifest, merge analytics and write all report
/// artifacts. Per-sample failures are collected; the run errors only when
/// all samples fail.
pub fn run_corpus(config: &RunConfig) -> Result<CorpusReport, PipelineError> {
    let outcomes = analyze_corpus(config)?;
    let report = build_report(
        &outcomes.analyses,
        &outcomes.resources.catalog,
        outcomes.discarded,
        outcomes.failures,
    )?;

    fs::create_dir_all(&config.output_dir)?;
    for (analysis, graph) in outcomes.analyses.iter().zip(&outcomes.graphs) {
        write_sample_artifacts(&config.output_dir, analysis, graph)?;
    }
    report::write_report(
        &config.output_dir,
        &report,
        &outcomes.analyses,
        &outcomes.resources.catalog,
    )?;
    Ok(report)
}

#[cfg(feature = "parallel")]
fn map_samples<F>(
    manifest: &[SampleMeta],
    parallelism: usize,
    run_one: F,
) -> Vec<Result<SampleOutcome, PipelineError>>
where
    F: Fn(&SampleMeta) -> Result<SampleOutcome, PipelineError> + Sync + Send,
{
    use rayon::prelude::*;
    match parallelism {
        1 => manifest.iter().map(run_one).collect(),
        0 => manifest.par_iter().map(run_one).collect(),
        n => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool");
            pool.install(|| manifest.par_iter().map(run_one).collect())
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn map_samples<F>(
    manifest: &[SampleMeta],
    _parallelism: usize,
    run_one: F,
) -> Vec<Result<SampleOutcome, PipelineError>>
where
    F: Fn(&SampleMeta) -> Result<SampleOutcome, PipelineError> + Sync,
{
    manifest.iter().map(run_one).collect()
}
