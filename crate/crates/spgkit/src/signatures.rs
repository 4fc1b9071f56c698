//! Propagation-signature catalog and matching engine.
//!
//! A signature is an ordered list of exact API names (ASCII/Unicode suffixes
//! are significant). A call stream matches a signature when the signature's
//! sequence occurs as an ordered, not necessarily contiguous, subsequence of
//! the stream; among several matching signatures the longest sequence wins,
//! ties broken by lowest id. The shipped default catalog has 33 entries.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::spg::Spg;
use crate::trace::{EventPayload, ExecutionTrace};

/// How a signature gains access to its victim process. Derived from the API
/// names: OpenProcess/ZwOpenProcess/GetShellWindow-initiated opens first,
/// then CreateProcess* variants, then ShellExecute*/WinExec; first rule wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessClass {
    OpenExisting,
    LaunchNew,
    ShellLaunch,
    Other,
}

pub fn derive_access_class(apis: &[String]) -> AccessClass {
    let any = |pred: fn(&str) -> bool| apis.iter().any(|a| pred(a));
    if any(|a| {
        a.starts_with("OpenProcess") || a.starts_with("ZwOpenProcess") || a.starts_with("GetShellWindow")
    }) {
        AccessClass::OpenExisting
    } else if any(|a| a.starts_with("CreateProcess")) {
        AccessClass::LaunchNew
    } else if any(|a| a.starts_with("ShellExecute") || a == "WinExec") {
        AccessClass::ShellLaunch
    } else {
        AccessClass::Other
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureDef {
    pub id: u32,
    pub apis: Vec<String>,
    pub access_class: AccessClass,
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("line {0}: duplicate signature id {1}")]
    DuplicateId(u64, u32),
    #[error("line {0}: signature {1} has an empty api sequence")]
    EmptySequence(u64, u32),
    #[error("line {line}: signature {id} stores access class {stored:?} but its apis derive {derived:?}")]
    ClassMismatch {
        line: u64,
        id: u32,
        stored: AccessClass,
        derived: AccessClass,
    },
    #[error("line {0}: malformed catalog record: {1}")]
    Malformed(u64, String),
    #[error("i/o error reading catalog: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct SignatureCatalog {
    by_id: BTreeMap<u32, SignatureDef>,
    /// Ids ordered by (sequence length desc, id asc): the match preference order.
    match_order: Vec<u32>,
}

impl SignatureCatalog {
    pub fn new(defs: Vec<SignatureDef>) -> Self {
        let mut by_id = BTreeMap::new();
        for def in defs {
            by_id.insert(def.id, def);
        }
        let mut match_order: Vec<u32> = by_id.keys().copied().collect();
        match_order.sort_by_key(|id| (std::cmp::Reverse(by_id[id].apis.len()), *id));
        SignatureCatalog { by_id, match_order }
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&SignatureDef> {
        self.by_id.get(&id)
    }

    pub fn signatures(&self) -> impl Iterator<Item = &SignatureDef> {
        self.by_id.values()
    }

    pub fn access_class(&self, id: u32) -> Option<AccessClass> {
        self.by_id.get(&id).map(|d| d.access_class)
    }

    /// Every API name referenced by any signature.
    pub fn all_api_names(&self) -> BTreeSet<&str> {
        self.by_id
            .values()
            .flat_map(|d| d.apis.iter().map(|s| s.as_str()))
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct RawSignature {
    id: u32,
    apis: Vec<String>,
    access_class: Option<AccessClass>,
}

/// Load a catalog from JSONL. Stored access classes are checked against the
/// classification rule; records without one get the derived class.
pub fn load_catalog<R: BufRead>(reader: R) -> Result<SignatureCatalog, CatalogError> {
    let mut defs: Vec<SignatureDef> = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSignature = serde_json::from_str(&line)
            .map_err(|e| CatalogError::Malformed(line_no, e.to_string()))?;
        if raw.apis.is_empty() {
            return Err(CatalogError::EmptySequence(line_no, raw.id));
        }
        if !seen.insert(raw.id) {
            return Err(CatalogError::DuplicateId(line_no, raw.id));
        }
        let derived = derive_access_class(&raw.apis);
        if let Some(stored) = raw.access_class {
            if stored != derived {
                return Err(CatalogError::ClassMismatch {
                    line: line_no,
                    id: raw.id,
                    stored,
                    derived,
                });
            }
        }
        defs.push(SignatureDef {
            id: raw.id,
            apis: raw.apis,
            access_class: derived,
        });
    }
    Ok(SignatureCatalog::new(defs))
}

pub fn load_catalog_bytes(bytes: &[u8]) -> Result<SignatureCatalog, CatalogError> {
    load_catalog(std::io::BufReader::new(bytes))
}

/// The catalog shipped with the repository (33 signatures).
pub fn default_catalog() -> SignatureCatalog {
    load_catalog_bytes(include_bytes!("../../../catalog/paper33.jsonl"))
        .expect("embedded catalog is valid")
}

/// Leftmost greedy embedding of `needle` as a subsequence of the call names;
/// returns the matched positions.
fn subsequence_positions(calls: &[(u64, &str)], needle: &[String]) -> Option<Vec<usize>> {
    let mut positions = Vec::with_capacity(needle.len());
    let mut start = 0;
    for want in needle {
        let found = calls[start..]
            .iter()
            .position(|(_, name)| *name == want.as_str())?;
        positions.push(start + found);
        start = start + found + 1;
    }
    Some(positions)
}

/// Match one attributed call stream against the catalog.
///
/// Returns the matching signature id and the seq numbers of the matched
/// calls. Among multiple matches the longest sequence wins, tie-broken by
/// lowest id; `None` when nothing matches.
pub fn match_propagation(
    calls: &[(u64, &str)],
    catalog: &SignatureCatalog,
) -> Option<(u32, Vec<u64>)> {
    for &id in &catalog.match_order {
        let def = &catalog.by_id[&id];
        if def.apis.len() > calls.len() {
            continue;
        }
        if let Some(positions) = subsequence_positions(calls, &def.apis) {
            let seqs = positions.iter().map(|&i| calls[i].0).collect();
            return Some((id, seqs));
        }
    }
    None
}

/// One signature instance observed between a source and a target process.
/// Multiple instances may exist for the same (source, target) pair when the
/// source's call stream contains several complete signature occurrences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionEvent {
    pub source_pid: u32,
    pub target_pid: u32,
    pub signature_id: Option<u32>,
    pub matched_call_seqs: Vec<u64>,
    pub via_dropped_file: bool,
}

fn normalize_path(path: &str) -> String {
    path.replace('/', "\\").to_ascii_lowercase()
}

/// True when the target process image was written to disk by tainted code
/// earlier in the trace (before the target's process_start).
pub fn classify_dropper_target(trace: &ExecutionTrace, target_pid: u32) -> bool {
    let Some(target) = trace.process(target_pid) else {
        return false;
    };
    let target_path = normalize_path(&target.image_path);
    trace.events().iter().any(|e| match &e.payload {
        EventPayload::FileCreate { file_path, .. } => {
            e.seq < target.start_seq && normalize_path(file_path) == target_path
        }
        _ => false,
    })
}

/// Event-level wrapper over [`classify_dropper_target`].
pub fn classify_dropper(trace: &ExecutionTrace, injection: &InjectionEvent) -> bool {
    classify_dropper_target(trace, injection.target_pid)
}

/// Extract injection events from a built SPG.
///
/// Cross-process transitions are grouped by (source_pid, target_pid). For
/// each group the attribution window is the source's tainted calls from its
/// first tainted event up to the last transition into the target, keeping
/// calls that carry the target's pid or no target at all. Signature
/// instances are extracted greedily: match, remove the matched calls, and
/// repeat; a group with no match yields a single unmatched event. Groups are
/// ordered by first transition seq.
pub fn extract_injections(
    trace: &ExecutionTrace,
    spg: &Spg,
    catalog: &SignatureCatalog,
) -> Vec<InjectionEvent> {
    // The graph fixes which propagations exist; the trace supplies the
    // timing needed for attribution windows.
    let graph_pairs: std::collections::BTreeSet<(u32, u32)> = spg
        .edges()
        .into_iter()
        .filter(|(from, to, _)| from.pid != to.pid)
        .map(|(from, to, _)| (from.pid, to.pid))
        .collect();
    let mut groups: Vec<((u32, u32), u64, u64)> = Vec::new(); // (pair, first_seq, last_seq)
    let mut by_pair: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for event in trace.events() {
        if let EventPayload::CrossProcessTransition { source, target } = &event.payload {
            let pair = (source.pid, target.pid);
            if !graph_pairs.contains(&pair) {
                continue;
            }
            match by_pair.get(&pair) {
                Some(&i) => groups[i].2 = event.seq,
                None => {
                    by_pair.insert(pair, groups.len());
                    groups.push((pair, event.seq, event.seq));
                }
            }
        }
    }
    groups.sort_by_key(|&(_, first, _)| first);

    let mut events = Vec::new();
    for ((source_pid, target_pid), _, last_seq) in groups {
        let tainted = trace.tainted_calls_of(source_pid);
        let first_tainted = tainted.first().map(|(seq, _, _)| *seq).unwrap_or(u64::MAX);
        let mut window: Vec<(u64, &str)> = tainted
            .iter()
            .filter(|(seq, _, target)| {
                *seq >= first_tainted
                    && *seq <= last_seq
                    && (target.is_none() || *target == Some(target_pid))
            })
            .map(|(seq, name, _)| (*seq, *name))
            .collect();

        let via_dropped_file = classify_dropper_target(trace, target_pid);
        let mut matched_any = false;
        while let Some((id, seqs)) = match_propagation(&window, catalog) {
            matched_any = true;
            window.retain(|(seq, _)| !seqs.contains(seq));
            events.push(InjectionEvent {
                source_pid,
                target_pid,
                signature_id: Some(id),
                matched_call_seqs: seqs,
                via_dropped_file,
            });
        }
        if !matched_any {
            events.push(InjectionEvent {
                source_pid,
                target_pid,
                signature_id: None,
                matched_call_seqs: Vec::new(),
                via_dropped_file,
            });
        }
    }
    events
}

/// Counts of matched injections whose signature opens an existing process,
/// launches a new one, or launches via the shell. Unmatched injections and
/// `Other`-class signatures are excluded.
pub fn access_split(
    injections: &[InjectionEvent],
    catalog: &SignatureCatalog,
) -> (u64, u64, u64) {
    let mut open = 0;
    let mut launch = 0;
    let mut shell = 0;
    for event in injections {
        let Some(id) = event.signature_id else { continue };
        match catalog.access_class(id) {
            Some(AccessClass::OpenExisting) => open += 1,
            Some(AccessClass::LaunchNew) => launch += 1,
            Some(AccessClass::ShellLaunch) => shell += 1,
            _ => {}
        }
    }
    (open, launch, shell)
}
