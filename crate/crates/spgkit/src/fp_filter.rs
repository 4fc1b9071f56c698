//! Over-tainting false-positive elimination.
//!
//! A propagation target with no matching signature is a potential case of
//! over-tainting. It is declared a false positive when its tainted API calls
//! overlap the image's pre-infection baseline by strictly more than the
//! threshold (default 99.00%), or when it performed no tainted API calls at
//! all. False-positive processes are removed from the analysis together with
//! every process reachable only through them, and the graph metrics are
//! recomputed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::analytics::SampleAnalysis;
use crate::spg::{self, Spg, SpgError};
use crate::trace::ExecutionTrace;

pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 0.99;

/// Per-image inventory of API names statically present before infection.
#[derive(Debug, Clone, Default)]
pub struct BaselineProfile {
    images: BTreeMap<String, BTreeSet<String>>,
}

impl BaselineProfile {
    pub fn apis_of(&self, image_name: &str) -> Option<&BTreeSet<String>> {
        self.images.get(&image_name.to_ascii_lowercase())
    }

    pub fn insert(&mut self, image_name: &str, apis: BTreeSet<String>) {
        self.images.insert(image_name.to_ascii_lowercase(), apis);
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("line {0}: malformed baseline record: {1}")]
    Malformed(u64, String),
    #[error("line {0}: baseline for {1:?} has an empty api set")]
    EmptyApis(u64, String),
    #[error("i/o error reading baseline: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Deserialize)]
struct RawBaseline {
    image_name: String,
    apis: Vec<String>,
}

pub fn load_baseline<R: BufRead>(reader: R) -> Result<BaselineProfile, BaselineError> {
    let mut profile = BaselineProfile::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawBaseline = serde_json::from_str(&line)
            .map_err(|e| BaselineError::Malformed(line_no, e.to_string()))?;
        if raw.apis.is_empty() {
            return Err(BaselineError::EmptyApis(line_no, raw.image_name));
        }
        profile.insert(&raw.image_name, raw.apis.into_iter().collect());
    }
    Ok(profile)
}

pub fn load_baseline_bytes(bytes: &[u8]) -> Result<BaselineProfile, BaselineError> {
    load_baseline(std::io::BufReader::new(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    FalsePositive,
    TruePositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictReason {
    NoTaintedApiCalls,
    HighOverlap,
    LowOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpVerdict {
    pub target_pid: u32,
    pub verdict: Verdict,
    pub overlap_ratio: f64,
    pub reason: VerdictReason,
}

#[derive(Debug, thiserror::Error)]
pub enum FpError {
    #[error("no baseline profile for image {0:?}; verdict cannot be rendered")]
    UnknownImage(String),
    #[error(transparent)]
    Graph(#[from] SpgError),
}

/// Judge one propagation target against the baseline.
///
/// The overlap ratio is computed over the multiset of tainted calls: every
/// call occurrence counts. FalsePositive iff the process made no tainted API
/// calls or the ratio exceeds `threshold` strictly.
pub fn judge_process(
    trace: &ExecutionTrace,
    target_pid: u32,
    baseline: &BaselineProfile,
    threshold: f64,
) -> Result<FpVerdict, FpError> {
    let calls = trace.tainted_calls_of(target_pid);
    if calls.is_empty() {
        return Ok(FpVerdict {
            target_pid,
            verdict: Verdict::FalsePositive,
            overlap_ratio: 0.0,
            reason: VerdictReason::NoTaintedApiCalls,
        });
    }
    let image_name = trace
        .process(target_pid)
        .map(|p| p.image_name.clone())
        .unwrap_or_default();
    let apis = baseline
        .apis_of(&image_name)
        .ok_or(FpError::UnknownImage(image_name))?;
    let in_baseline = calls
        .iter()
        .filter(|(_, name, _)| apis.contains(*name))
        .count();
    let ratio = in_baseline as f64 / calls.len() as f64;
    let (verdict, reason) = if ratio > threshold {
        (Verdict::FalsePositive, VerdictReason::HighOverlap)
    } else {
        (Verdict::TruePositive, VerdictReason::LowOverlap)
    };
    Ok(FpVerdict {
        target_pid,
        verdict,
        overlap_ratio: ratio,
        reason,
    })
}

#[derive(Debug)]
pub struct FilterOutcome {
    pub analysis: SampleAnalysis,
    pub graph: Spg,
    pub verdicts: Vec<FpVerdict>,
}

/// Remove false-positive targets (and processes reachable only through
/// them) from an analysis, recomputing the graph metrics.
///
/// Candidates are targets with tainted execution into which no signature
/// matched. An analysis without unmatched propagations is returned
/// unchanged.
pub fn filter_analysis(
    trace: &ExecutionTrace,
    graph: &Spg,
    analysis: SampleAnalysis,
    baseline: &BaselineProfile,
    threshold: f64,
    path_budget: u64,
) -> Result<FilterOutcome, FpError> {
    // Targets where at least one propagation matched are never candidates.
    let mut matched_targets = BTreeSet::new();
    let mut all_targets = BTreeSet::new();
    for event in &analysis.injections {
        all_targets.insert(event.target_pid);
        if event.signature_id.is_some() {
            matched_targets.insert(event.target_pid);
        }
    }
    let candidates: Vec<u32> = all_targets
        .difference(&matched_targets)
        .copied()
        .collect();
    if candidates.is_empty() {
        return Ok(FilterOutcome {
            analysis,
            graph: graph.clone(),
            verdicts: Vec::new(),
        });
    }

    let mut verdicts = Vec::new();
    let mut fp_pids = BTreeSet::new();
    for pid in candidates {
        let verdict = judge_process(trace, pid, baseline, threshold)?;
        if verdict.verdict == Verdict::FalsePositive {
            fp_pids.insert(pid);
        }
        verdicts.push(verdict);
    }
    if fp_pids.is_empty() {
        return Ok(FilterOutcome {
            analysis,
            graph: graph.clone(),
            verdicts,
        });
    }

    // Keep everything still reachable from the entry process without
    // passing through a false positive.
    let mut process_edges: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for (from, to, _) in graph.edges() {
        if from.pid != to.pid {
            process_edges.entry(from.pid).or_default().insert(to.pid);
        }
    }
    let entry_pid = graph.entry().pid;
    let mut kept = BTreeSet::new();
    let mut stack = vec![entry_pid];
    while let Some(pid) = stack.pop() {
        if fp_pids.contains(&pid) || !kept.insert(pid) {
            continue;
        }
        if let Some(next) = process_edges.get(&pid) {
            stack.extend(next.iter().copied());
        }
    }
    let removed: Vec<u32> = graph
        .pids()
        .into_iter()
        .filter(|pid| !kept.contains(pid))
        .collect();

    let nodes: Vec<_> = graph
        .nodes()
        .iter()
        .filter(|n| kept.contains(&n.pid))
        .cloned()
        .collect();
    let edges: Vec<_> = graph
        .edges()
        .into_iter()
        .filter(|(f, t, _)| kept.contains(&f.pid) && kept.contains(&t.pid))
        .map(|(f, t, _)| (f, t))
        .collect();
    let filtered_graph = Spg::from_parts(nodes, &edges, graph.entry())?;
    let metrics = spg::metrics(&filtered_graph, path_budget)?;

    let mut analysis = analysis;
    analysis.metrics = metrics;
    analysis
        .per_process
        .retain(|p| kept.contains(&p.pid));
    analysis
        .injections
        .retain(|i| kept.contains(&i.source_pid) && kept.contains(&i.target_pid));
    analysis.signature_set = analysis
        .injections
        .iter()
        .filter_map(|i| i.signature_id)
        .collect();
    let mut fp_removed = analysis.fp_removed;
    fp_removed.extend(removed);
    fp_removed.sort_unstable();
    fp_removed.dedup();
    analysis.fp_removed = fp_removed;

    Ok(FilterOutcome {
        analysis,
        graph: filtered_graph,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::parse_trace_bytes;

    fn baseline_with(image: &str, apis: &[&str]) -> BaselineProfile {
        let mut profile = BaselineProfile::default();
        profile.insert(image, apis.iter().map(|s| s.to_string()).collect());
        profile
    }

    fn trace_with_calls(in_baseline: usize, extra: usize) -> ExecutionTrace {
        let mut lines = vec![
            r#"{"seq": 1, "pid": 1, "kind": "process_start", "image_name": "explorer.exe", "image_path": "C:\\Windows\\explorer.exe"}"#.to_string(),
            r#"{"seq": 2, "pid": 1, "kind": "wave_entry", "wave_index": 0}"#.to_string(),
        ];
        let mut seq = 3;
        for _ in 0..in_baseline {
            lines.push(format!(
                r#"{{"seq": {seq}, "pid": 1, "kind": "api_call", "api_name": "GetMessageW", "wave_index": 0, "tainted": true}}"#
            ));
            seq += 1;
        }
        for _ in 0..extra {
            lines.push(format!(
                r#"{{"seq": {seq}, "pid": 1, "kind": "api_call", "api_name": "VirtualAllocEx", "wave_index": 0, "tainted": true}}"#
            ));
            seq += 1;
        }
        parse_trace_bytes(lines.join("\n").as_bytes()).unwrap()
    }

    #[test]
    fn overlap_above_threshold_is_false_positive() {
        let trace = trace_with_calls(995, 5);
        let baseline = baseline_with("explorer.exe", &["GetMessageW"]);
        let v = judge_process(&trace, 1, &baseline, DEFAULT_OVERLAP_THRESHOLD).unwrap();
        assert_eq!(v.verdict, Verdict::FalsePositive);
        assert_eq!(v.reason, VerdictReason::HighOverlap);
        assert!((v.overlap_ratio - 0.995).abs() < 1e-12);
    }

    #[test]
    fn overlap_exactly_at_threshold_is_true_positive() {
        let trace = trace_with_calls(99, 1);
        let baseline = baseline_with("explorer.exe", &["GetMessageW"]);
        let v = judge_process(&trace, 1, &baseline, DEFAULT_OVERLAP_THRESHOLD).unwrap();
        assert_eq!(v.verdict, Verdict::TruePositive);
        assert_eq!(v.reason, VerdictReason::LowOverlap);
    }

    #[test]
    fn no_tainted_calls_is_false_positive() {
        let trace = trace_with_calls(0, 0);
        let baseline = baseline_with("explorer.exe", &["GetMessageW"]);
        let v = judge_process(&trace, 1, &baseline, DEFAULT_OVERLAP_THRESHOLD).unwrap();
        assert_eq!(v.verdict, Verdict::FalsePositive);
        assert_eq!(v.reason, VerdictReason::NoTaintedApiCalls);
        assert_eq!(v.overlap_ratio, 0.0);
    }

    #[test]
    fn unknown_image_is_an_error() {
        let trace = trace_with_calls(3, 0);
        let baseline = baseline_with("svchost.exe", &["GetMessageW"]);
        assert!(matches!(
            judge_process(&trace, 1, &baseline, DEFAULT_OVERLAP_THRESHOLD),
            Err(FpError::UnknownImage(_))
        ));
    }

    #[test]
    fn full_baseline_coverage_gives_ratio_one() {
        let trace = trace_with_calls(10, 0);
        let baseline = baseline_with("explorer.exe", &["GetMessageW"]);
        let v = judge_process(&trace, 1, &baseline, DEFAULT_OVERLAP_THRESHOLD).unwrap();
        assert_eq!(v.overlap_ratio, 1.0);
        assert_eq!(v.verdict, Verdict::FalsePositive);
    }

    #[test]
    fn empty_baseline_api_set_is_rejected() {
        let text = r#"{"image_name": "a.exe", "apis": []}"#;
        assert!(matches!(
            load_baseline_bytes(text.as_bytes()),
            Err(BaselineError::EmptyApis(1, _))
        ));
    }
}
