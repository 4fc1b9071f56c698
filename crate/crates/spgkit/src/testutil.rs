//! Builders for synthetic [`SampleAnalysis`](crate::analytics::SampleAnalysis)
//! values, used by unit and integration tests that exercise analytics
//! without running the full trace pipeline.
#![doc(hidden)]

use std::collections::{BTreeMap, BTreeSet};

use crate::analytics::{ProcessActivity, SampleAnalysis};
use crate::spg::SpgMetrics;
use crate::trace::SampleMeta;

/// One synthetic analysis: `waves[0]` describes the initial process, the
/// rest describe non-initial processes named from `target_names` (cycled).
/// Each signature id in `sigs` becomes one matched injection event from the
/// initial process into the first target.
pub fn sample(
    family: &str,
    year: u32,
    waves: &[u32],
    target_names: &[&str],
    sigs: &[u32],
) -> SampleAnalysis {
    assert!(!waves.is_empty());
    let per_process: Vec<ProcessActivity> = waves
        .iter()
        .enumerate()
        .map(|(i, &wave_count)| ProcessActivity {
            pid: 100 + i as u32,
            image_name: if i == 0 {
                "sample.exe".to_string()
            } else if target_names.is_empty() {
                format!("t{i}.exe")
            } else {
                target_names[(i - 1) % target_names.len()].to_string()
            },
            is_initial: i == 0,
            wave_count,
            unique_instructions: 1000,
            sensitive_api_usage: BTreeMap::new(),
        })
        .collect();
    let injections = sigs
        .iter()
        .map(|&id| crate::signatures::InjectionEvent {
            source_pid: 100,
            target_pid: 101,
            signature_id: Some(id),
            matched_call_seqs: Vec::new(),
            via_dropped_file: false,
        })
        .collect();
    let metrics = SpgMetrics {
        process_depth: waves.len() as u32,
        wave_depth: waves.iter().sum(),
        width: 1,
        process_count: waves.len() as u32,
        wave_count: waves.iter().sum(),
    };
    SampleAnalysis {
        meta: SampleMeta {
            sample_id: fake_sha256(&format!("{family}/{year}/{waves:?}/{sigs:?}")),
            family: family.to_string(),
            first_seen_year: year,
            trace_path: String::new(),
        },
        metrics,
        injections,
        per_process,
        signature_set: sigs.iter().copied().collect::<BTreeSet<_>>(),
        fp_removed: Vec::new(),
    }
}

/// Deterministic 64-char lowercase hex id derived from `seed`.
pub fn fake_sha256(seed: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(seed.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
