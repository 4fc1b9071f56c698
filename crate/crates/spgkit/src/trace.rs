//! Execution-trace event model, JSONL parser and validation.
//!
//! A trace file is UTF-8 text with one JSON object per line. Every record
//! carries `seq`, `kind` and `pid`; the remaining keys depend on the kind.
//! Parsing is strict: unknown kinds are errors, records are validated as
//! they stream in (monotonic sequence numbers, no dangling process or wave
//! references, no PID reuse), and the resulting [`ExecutionTrace`] is
//! immutable.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

/// Reference to a (process, wave) node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef {
    pub pid: u32,
    pub wave: u32,
}

impl NodeRef {
    pub fn new(pid: u32, wave: u32) -> Self {
        NodeRef { pid, wave }
    }
}

impl std::fmt::Display for NodeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "P{}W{}", self.pid, self.wave)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventPayload {
    ProcessStart {
        image_name: String,
        image_path: String,
        parent_pid: Option<u32>,
    },
    WaveEntry {
        wave_index: u32,
        predecessor: Option<NodeRef>,
    },
    ApiCall {
        api_name: String,
        wave_index: u32,
        tainted: bool,
        target_pid: Option<u32>,
        file_path: Option<String>,
    },
    CrossProcessTransition {
        source: NodeRef,
        target: NodeRef,
    },
    FileCreate {
        file_path: String,
        wave_index: u32,
    },
    InstructionSummary {
        wave_index: u32,
        unique_instruction_count: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: u64,
    pub pid: u32,
    pub payload: EventPayload,
}

/// Per-process information collected while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessInfo {
    pub pid: u32,
    pub image_name: String,
    pub image_path: String,
    pub parent_pid: Option<u32>,
    pub start_seq: u64,
    /// Wave indices seen for this process, in entry order (always 0..n).
    pub wave_count: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {0}: malformed record: {1}")]
    MalformedRecord(u64, String),
    #[error("line {0}: sequence number is not strictly increasing")]
    NonMonotonicSeq(u64),
    #[error("line {0}: dangling reference: {1}")]
    DanglingReference(u64, String),
    #[error("trace contains no events")]
    EmptyTrace,
    #[error("i/o error reading trace: {0}")]
    Io(#[from] std::io::Error),
}

/// Validated, immutable in-memory representation of one sample's trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionTrace {
    events: Vec<TraceEvent>,
    processes: BTreeMap<u32, ProcessInfo>,
    instructions: BTreeMap<NodeRef, u64>,
    initial_pid: u32,
}

impl ExecutionTrace {
    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn processes(&self) -> &BTreeMap<u32, ProcessInfo> {
        &self.processes
    }

    pub fn process(&self, pid: u32) -> Option<&ProcessInfo> {
        self.processes.get(&pid)
    }

    /// PID of the first process started in the trace.
    pub fn initial_pid(&self) -> u32 {
        self.initial_pid
    }

    pub fn process_count(&self) -> usize {
        self.processes.len()
    }

    pub fn wave_count(&self) -> usize {
        self.processes.values().map(|p| p.wave_count as usize).sum()
    }

    /// Unique-instruction counts recorded per (pid, wave).
    pub fn instruction_summaries(&self) -> &BTreeMap<NodeRef, u64> {
        &self.instructions
    }

    pub fn unique_instructions_of(&self, pid: u32) -> u64 {
        self.instructions
            .iter()
            .filter(|(node, _)| node.pid == pid)
            .map(|(_, n)| *n)
            .sum()
    }

    pub fn total_unique_instructions(&self) -> u64 {
        self.instructions.values().sum()
    }

    /// All tainted API calls of `pid`, in trace order, as (seq, name, target_pid).
    pub fn tainted_calls_of(&self, pid: u32) -> Vec<(u64, &str, Option<u32>)> {
        self.events
            .iter()
            .filter(|e| e.pid == pid)
            .filter_map(|e| match &e.payload {
                EventPayload::ApiCall {
                    api_name,
                    tainted: true,
                    target_pid,
                    ..
                } => Some((e.seq, api_name.as_str(), *target_pid)),
                _ => None,
            })
            .collect()
    }

    /// Serialize back to the canonical JSONL form.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(&RawRecord::from_event(event)).unwrap());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    seq: u64,
    pid: u32,
    #[serde(flatten)]
    body: RawBody,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawBody {
    ProcessStart {
        image_name: String,
        image_path: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parent_pid: Option<u32>,
    },
    WaveEntry {
        wave_index: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pred_pid: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pred_wave: Option<u32>,
    },
    ApiCall {
        api_name: String,
        wave_index: u32,
        tainted: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_pid: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file_path: Option<String>,
    },
    CrossProcessTransition {
        src_pid: u32,
        src_wave: u32,
        dst_pid: u32,
        dst_wave: u32,
    },
    FileCreate {
        file_path: String,
        wave_index: u32,
    },
    InstructionSummary {
        wave_index: u32,
        unique_instruction_count: u64,
    },
}

impl RawRecord {
    fn from_event(event: &TraceEvent) -> Self {
        let body = match &event.payload {
            EventPayload::ProcessStart {
                image_name,
                image_path,
                parent_pid,
            } => RawBody::ProcessStart {
                image_name: image_name.clone(),
                image_path: image_path.clone(),
                parent_pid: *parent_pid,
            },
            EventPayload::WaveEntry {
                wave_index,
                predecessor,
            } => RawBody::WaveEntry {
                wave_index: *wave_index,
                pred_pid: predecessor.map(|n| n.pid),
                pred_wave: predecessor.map(|n| n.wave),
            },
            EventPayload::ApiCall {
                api_name,
                wave_index,
                tainted,
                target_pid,
                file_path,
            } => RawBody::ApiCall {
                api_name: api_name.clone(),
                wave_index: *wave_index,
                tainted: *tainted,
                target_pid: *target_pid,
                file_path: file_path.clone(),
            },
            EventPayload::CrossProcessTransition { source, target } => {
                RawBody::CrossProcessTransition {
                    src_pid: source.pid,
                    src_wave: source.wave,
                    dst_pid: target.pid,
                    dst_wave: target.wave,
                }
            }
            EventPayload::FileCreate {
                file_path,
                wave_index,
            } => RawBody::FileCreate {
                file_path: file_path.clone(),
                wave_index: *wave_index,
            },
            EventPayload::InstructionSummary {
                wave_index,
                unique_instruction_count,
            } => RawBody::InstructionSummary {
                wave_index: *wave_index,
                unique_instruction_count: *unique_instruction_count,
            },
        };
        RawRecord {
            seq: event.seq,
            pid: event.pid,
            body,
        }
    }
}

fn basename(path: &str) -> &str {
    path.rsplit(['\\', '/']).next().unwrap_or(path)
}

/// Parse and validate a trace from a byte stream.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<ExecutionTrace, TraceError> {
    let mut events: Vec<TraceEvent> = Vec::new();
    let mut processes: BTreeMap<u32, ProcessInfo> = BTreeMap::new();
    let mut instructions: BTreeMap<NodeRef, u64> = BTreeMap::new();
    let mut initial_pid: Option<u32> = None;
    let mut last_seq: Option<u64> = None;

    let wave_seen = |procs: &BTreeMap<u32, ProcessInfo>, node: NodeRef| -> bool {
        procs
            .get(&node.pid)
            .is_some_and(|p| node.wave < p.wave_count)
    };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord = serde_json::from_str(&line)
            .map_err(|e| TraceError::MalformedRecord(line_no, e.to_string()))?;

        if let Some(prev) = last_seq {
            if record.seq <= prev {
                return Err(TraceError::NonMonotonicSeq(line_no));
            }
        }
        last_seq = Some(record.seq);

        let pid = record.pid;
        let is_process_start = matches!(record.body, RawBody::ProcessStart { .. });
        if !is_process_start && !processes.contains_key(&pid) {
            return Err(TraceError::DanglingReference(
                line_no,
                format!("pid {pid} has no process_start"),
            ));
        }

        let payload = match record.body {
            RawBody::ProcessStart {
                image_name,
                image_path,
                parent_pid,
            } => {
                if processes.contains_key(&pid) {
                    return Err(TraceError::MalformedRecord(
                        line_no,
                        format!("pid {pid} started twice (pid reuse is not allowed)"),
                    ));
                }
                if !image_name.eq_ignore_ascii_case(basename(&image_path)) {
                    return Err(TraceError::MalformedRecord(
                        line_no,
                        format!("image_name {image_name:?} is not the basename of {image_path:?}"),
                    ));
                }
                if let Some(parent) = parent_pid {
                    if !processes.contains_key(&parent) {
                        return Err(TraceError::DanglingReference(
                            line_no,
                            format!("parent pid {parent} has no process_start"),
                        ));
                    }
                }
                processes.insert(
                    pid,
                    ProcessInfo {
                        pid,
                        image_name: image_name.clone(),
                        image_path: image_path.clone(),
                        parent_pid,
                        start_seq: record.seq,
                        wave_count: 0,
                    },
                );
                initial_pid.get_or_insert(pid);
                EventPayload::ProcessStart {
                    image_name,
                    image_path,
                    parent_pid,
                }
            }
            RawBody::WaveEntry {
                wave_index,
                pred_pid,
                pred_wave,
            } => {
                let predecessor = match (pred_pid, pred_wave) {
                    (Some(p), Some(w)) => Some(NodeRef::new(p, w)),
                    (None, None) => None,
                    _ => {
                        return Err(TraceError::MalformedRecord(
                            line_no,
                            "wave_entry must carry both pred_pid and pred_wave or neither".into(),
                        ))
                    }
                };
                let info = processes.get_mut(&pid).expect("pid checked above");
                if wave_index != info.wave_count {
                    return Err(TraceError::MalformedRecord(
                        line_no,
                        format!(
                            "wave_index {wave_index} out of order for pid {pid} (expected {})",
                            info.wave_count
                        ),
                    ));
                }
                info.wave_count += 1;
                if let Some(pred) = predecessor {
                    if !wave_seen(&processes, pred) {
                        return Err(TraceError::DanglingReference(
                            line_no,
                            format!("wave predecessor {pred} not seen"),
                        ));
                    }
                }
                EventPayload::WaveEntry {
                    wave_index,
                    predecessor,
                }
            }
            RawBody::ApiCall {
                api_name,
                wave_index,
                tainted,
                target_pid,
                file_path,
            } => {
                if api_name.is_empty() {
                    return Err(TraceError::MalformedRecord(
                        line_no,
                        "api_name must be non-empty".into(),
                    ));
                }
                if !wave_seen(&processes, NodeRef::new(pid, wave_index)) {
                    return Err(TraceError::DanglingReference(
                        line_no,
                        format!("api_call wave P{pid}W{wave_index} not seen"),
                    ));
                }
                if let Some(target) = target_pid {
                    if !processes.contains_key(&target) {
                        return Err(TraceError::DanglingReference(
                            line_no,
                            format!("api_call target pid {target} has no process_start"),
                        ));
                    }
                }
                EventPayload::ApiCall {
                    api_name,
                    wave_index,
                    tainted,
                    target_pid,
                    file_path,
                }
            }
            RawBody::CrossProcessTransition {
                src_pid,
                src_wave,
                dst_pid,
                dst_wave,
            } => {
                if src_pid == dst_pid {
                    return Err(TraceError::MalformedRecord(
                        line_no,
                        "cross_process_transition within one pid".into(),
                    ));
                }
                let source = NodeRef::new(src_pid, src_wave);
                let target = NodeRef::new(dst_pid, dst_wave);
                for node in [source, target] {
                    if !wave_seen(&processes, node) {
                        return Err(TraceError::DanglingReference(
                            line_no,
                            format!("transition endpoint {node} not seen"),
                        ));
                    }
                }
                EventPayload::CrossProcessTransition { source, target }
            }
            RawBody::FileCreate {
                file_path,
                wave_index,
            } => {
                if !wave_seen(&processes, NodeRef::new(pid, wave_index)) {
                    return Err(TraceError::DanglingReference(
                        line_no,
                        format!("file_create wave P{pid}W{wave_index} not seen"),
                    ));
                }
                EventPayload::FileCreate {
                    file_path,
                    wave_index,
                }
            }
            RawBody::InstructionSummary {
                wave_index,
                unique_instruction_count,
            } => {
                let node = NodeRef::new(pid, wave_index);
                if !wave_seen(&processes, node) {
                    return Err(TraceError::DanglingReference(
                        line_no,
                        format!("instruction_summary wave {node} not seen"),
                    ));
                }
                if instructions.contains_key(&node) {
                    return Err(TraceError::MalformedRecord(
                        line_no,
                        format!("duplicate instruction_summary for {node}"),
                    ));
                }
                instructions.insert(node, unique_instruction_count);
                EventPayload::InstructionSummary {
                    wave_index,
                    unique_instruction_count,
                }
            }
        };

        events.push(TraceEvent {
            seq: record.seq,
            pid,
            payload,
        });
    }

    let initial_pid = initial_pid.ok_or(TraceError::EmptyTrace)?;
    Ok(ExecutionTrace {
        events,
        processes,
        instructions,
        initial_pid,
    })
}

pub fn parse_trace_bytes(bytes: &[u8]) -> Result<ExecutionTrace, TraceError> {
    parse_trace(std::io::BufReader::new(bytes))
}

/// Whether a parsed sample executed enough instructions to be analyzed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Viability {
    Viable,
    Discarded { reason: String },
}

/// A sample is discarded when fewer than `instruction_floor` unique
/// instructions were executed on the whole system ("less than" is strict:
/// a total equal to the floor is viable).
pub fn validate_sample_viability(trace: &ExecutionTrace, instruction_floor: u64) -> Viability {
    let total = trace.total_unique_instructions();
    if total < instruction_floor {
        Viability::Discarded {
            reason: format!("below-instruction-floor ({total} < {instruction_floor})"),
        }
    } else {
        Viability::Viable
    }
}

/// Per-sample metadata from the corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sample_id: String,
    pub family: String,
    pub first_seen_year: u32,
    pub trace_path: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("line {0}: malformed manifest record: {1}")]
    Malformed(u64, String),
    #[error("line {0}: {1}")]
    Invalid(u64, String),
    #[error("manifest contains no samples")]
    Empty,
    #[error("i/o error reading manifest: {0}")]
    Io(#[from] std::io::Error),
}

pub fn parse_manifest<R: BufRead>(reader: R) -> Result<Vec<SampleMeta>, ManifestError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let meta: SampleMeta = serde_json::from_str(&line)
            .map_err(|e| ManifestError::Malformed(line_no, e.to_string()))?;
        if meta.sample_id.len() != 64
            || !meta
                .sample_id
                .chars()
                .all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase())
        {
            return Err(ManifestError::Invalid(
                line_no,
                format!("sample_id {:?} is not 64 lowercase hex chars", meta.sample_id),
            ));
        }
        if !(2000..=2100).contains(&meta.first_seen_year) {
            return Err(ManifestError::Invalid(
                line_no,
                format!("first_seen_year {} outside [2000, 2100]", meta.first_seen_year),
            ));
        }
        out.push(meta);
    }
    if out.is_empty() {
        return Err(ManifestError::Empty);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(seq: u64, pid: u32, rest: &str) -> String {
        format!("{{\"seq\": {seq}, \"pid\": {pid}, {rest}}}")
    }

    fn start(seq: u64, pid: u32, name: &str) -> String {
        line(
            seq,
            pid,
            &format!(
                "\"kind\": \"process_start\", \"image_name\": \"{name}\", \"image_path\": \"C:\\\\w\\\\{name}\""
            ),
        )
    }

    fn wave(seq: u64, pid: u32, idx: u32) -> String {
        line(seq, pid, &format!("\"kind\": \"wave_entry\", \"wave_index\": {idx}"))
    }

    #[test]
    fn empty_input_is_an_error() {
        match parse_trace_bytes(b"") {
            Err(TraceError::EmptyTrace) => {}
            other => panic!("expected EmptyTrace, got {other:?}"),
        }
    }

    #[test]
    fn non_monotonic_seq_reports_line() {
        let text = [start(1, 1, "a.exe"), wave(2, 1, 0), wave(2, 1, 1)].join("\n");
        match parse_trace_bytes(text.as_bytes()) {
            Err(TraceError::NonMonotonicSeq(3)) => {}
            other => panic!("expected NonMonotonicSeq(3), got {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_is_malformed() {
        let text = line(1, 1, "\"kind\": \"mystery_event\"");
        assert!(matches!(
            parse_trace_bytes(text.as_bytes()),
            Err(TraceError::MalformedRecord(1, _))
        ));
    }

    #[test]
    fn unknown_extra_fields_are_ignored() {
        let text = [
            line(
                1,
                1,
                "\"kind\": \"process_start\", \"image_name\": \"a.exe\", \"image_path\": \"C:\\\\a.exe\", \"flavour\": 9",
            ),
            wave(2, 1, 0),
        ]
        .join("\n");
        let trace = parse_trace_bytes(text.as_bytes()).unwrap();
        assert_eq!(trace.process_count(), 1);
    }

    #[test]
    fn event_for_unstarted_pid_dangles() {
        let text = [start(1, 1, "a.exe"), wave(2, 7, 0)].join("\n");
        assert!(matches!(
            parse_trace_bytes(text.as_bytes()),
            Err(TraceError::DanglingReference(2, _))
        ));
    }

    #[test]
    fn transition_into_unknown_wave_dangles() {
        let text = [
            start(1, 1, "a.exe"),
            wave(2, 1, 0),
            start(3, 2, "b.exe"),
            wave(4, 2, 0),
            line(
                5,
                1,
                "\"kind\": \"cross_process_transition\", \"src_pid\": 1, \"src_wave\": 0, \"dst_pid\": 2, \"dst_wave\": 3",
            ),
        ]
        .join("\n");
        assert!(matches!(
            parse_trace_bytes(text.as_bytes()),
            Err(TraceError::DanglingReference(5, _))
        ));
    }

    #[test]
    fn pid_reuse_is_rejected() {
        let text = [start(1, 1, "a.exe"), start(2, 1, "b.exe")].join("\n");
        assert!(matches!(
            parse_trace_bytes(text.as_bytes()),
            Err(TraceError::MalformedRecord(2, _))
        ));
    }

    #[test]
    fn image_name_must_match_basename() {
        let text = line(
            1,
            1,
            "\"kind\": \"process_start\", \"image_name\": \"x.exe\", \"image_path\": \"C:\\\\w\\\\y.exe\"",
        );
        assert!(matches!(
            parse_trace_bytes(text.as_bytes()),
            Err(TraceError::MalformedRecord(1, _))
        ));
    }

    #[test]
    fn basename_comparison_is_case_insensitive() {
        let text = [
            line(
                1,
                1,
                "\"kind\": \"process_start\", \"image_name\": \"Explorer.EXE\", \"image_path\": \"C:\\\\Windows\\\\explorer.exe\"",
            ),
            wave(2, 1, 0),
        ]
        .join("\n");
        assert!(parse_trace_bytes(text.as_bytes()).is_ok());
    }

    #[test]
    fn viability_floor_is_strict() {
        let floor = 25;
        let mk = |count: u64| {
            let text = [
                start(1, 1, "a.exe"),
                wave(2, 1, 0),
                line(
                    3,
                    1,
                    &format!(
                        "\"kind\": \"instruction_summary\", \"wave_index\": 0, \"unique_instruction_count\": {count}"
                    ),
                ),
            ]
            .join("\n");
            parse_trace_bytes(text.as_bytes()).unwrap()
        };
        assert!(matches!(
            validate_sample_viability(&mk(24), floor),
            Viability::Discarded { .. }
        ));
        assert_eq!(validate_sample_viability(&mk(25), floor), Viability::Viable);
        assert_eq!(
            validate_sample_viability(&mk(10_000), floor),
            Viability::Viable
        );
    }

    #[test]
    fn duplicate_instruction_summary_is_rejected() {
        let summary =
            "\"kind\": \"instruction_summary\", \"wave_index\": 0, \"unique_instruction_count\": 5";
        let text = [
            start(1, 1, "a.exe"),
            wave(2, 1, 0),
            line(3, 1, summary),
            line(4, 1, summary),
        ]
        .join("\n");
        assert!(matches!(
            parse_trace_bytes(text.as_bytes()),
            Err(TraceError::MalformedRecord(4, _))
        ));
    }

    #[test]
    fn manifest_rejects_bad_sample_id() {
        let text = "{\"sample_id\": \"abc\", \"family\": \"X\", \"first_seen_year\": 2015, \"trace_path\": \"t.jsonl\"}";
        assert!(matches!(
            parse_manifest(text.as_bytes()),
            Err(ManifestError::Invalid(1, _))
        ));
    }

    #[test]
    fn manifest_rejects_out_of_range_year() {
        let id = "a".repeat(64);
        let text = format!(
            "{{\"sample_id\": \"{id}\", \"family\": \"X\", \"first_seen_year\": 1999, \"trace_path\": \"t.jsonl\"}}"
        );
        assert!(matches!(
            parse_manifest(text.as_bytes()),
            Err(ManifestError::Invalid(1, _))
        ));
    }
}
