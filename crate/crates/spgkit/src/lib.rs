//! Reconstruction and analysis of system-wide propagation graphs (SPGs)
//! from malware execution traces.
//!
//! The pipeline parses newline-delimited JSON traces, builds a propagation
//! graph of (process, wave) nodes, classifies every cross-process
//! propagation against a catalog of API-sequence signatures, filters
//! over-tainting false positives, and aggregates per-sample results into
//! corpus-level statistics (prevalence distributions, family consistency
//! metrics, target intersections, dropper rates, yearly evolution).
//!
//! Modules follow the pipeline stages:
//! - [`trace`]: event schema, JSONL parsing and validation
//! - [`spg`]: graph construction, process-depth / wave-depth / SPG-width
//! - [`signatures`]: signature catalog and propagation matching
//! - [`fp_filter`]: over-tainting false-positive elimination
//! - [`analytics`]: per-sample records and corpus statistics
//! - [`pipeline`] / [`report`]: orchestration and report emission

pub mod analytics;
pub mod fp_filter;
pub mod pipeline;
pub mod report;
pub mod signatures;
pub mod spg;
pub mod trace;

#[doc(hidden)]
pub mod testutil;

pub use analytics::{SampleAnalysis, SensitiveApiGroups, SensitiveGroup};
pub use pipeline::{CorpusReport, RunConfig};
pub use signatures::{AccessClass, InjectionEvent, SignatureCatalog, SignatureDef};
pub use spg::{Spg, SpgMetrics};
pub use trace::{ExecutionTrace, SampleMeta, Viability};
