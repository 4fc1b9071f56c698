//! False-positive filtering over full pipeline artifacts: subtree removal,
//! identity on clean analyses, idempotence, and entry protection.

use spgkit::fp_filter::{self, BaselineProfile};
use spgkit::pipeline::{self, RunConfig, SampleOutcome};
use spgkit::signatures::default_catalog;
use spgkit::trace::{parse_trace_bytes, SampleMeta};
use spgkit_fixtures::TraceBuilder;

fn meta() -> SampleMeta {
    SampleMeta {
        sample_id: "0".repeat(64),
        family: "Fam".into(),
        first_seen_year: 2015,
        trace_path: "t.jsonl".into(),
    }
}

fn resources(baseline: BaselineProfile) -> pipeline::Resources {
    pipeline::Resources {
        catalog: default_catalog(),
        baseline,
        groups: spgkit::analytics::default_groups(),
    }
}

/// A -> B -> C chain where the propagation into B matches no signature and
/// B's tainted calls are fully covered by the baseline: B is a false
/// positive and C is only reachable through it.
fn overtainted_chain() -> String {
    let mut b = TraceBuilder::new();
    b.process_start(1, "sample.exe", "C:\\sample.exe", None);
    b.wave_entry(1, 0, None);
    b.process_start(2, "explorer.exe", "C:\\Windows\\explorer.exe", None);
    b.wave_entry(2, 0, None);
    // No recognizable injection sequence into B, just benign-looking calls.
    b.api_call(1, 0, "Sleep", true, Some(2));
    b.cross((1, 0), (2, 0));
    for _ in 0..600 {
        b.api_call(2, 0, "GetMessageW", true, None);
    }
    b.api_call(2, 0, "DispatchMessageW", true, None);
    // B "injects" into C with a real signature; C's provenance dies with B.
    b.process_start(3, "svchost.exe", "C:\\Windows\\svchost.exe", None);
    b.wave_entry(3, 0, None);
    for api in ["OpenProcess", "VirtualAllocEx", "WriteProcessMemory", "CreateRemoteThread"] {
        b.api_call(2, 0, api, true, Some(3));
    }
    b.cross((2, 0), (3, 0));
    b.api_call(3, 0, "InternetOpen", true, None);
    for pid in [1, 2, 3] {
        b.instruction_summary(pid, 0, 500);
    }
    b.build()
}

fn explorer_baseline() -> BaselineProfile {
    let mut baseline = BaselineProfile::default();
    baseline.insert(
        "explorer.exe",
        ["GetMessageW".to_string(), "DispatchMessageW".to_string()].into(),
    );
    baseline
}

#[test]
fn false_positive_subtree_is_removed_and_metrics_recomputed() {
    let trace = parse_trace_bytes(overtainted_chain().as_bytes()).unwrap();
    let resources = resources(explorer_baseline());
    let config = RunConfig::new("unused");
    let SampleOutcome::Analyzed { analysis, graph } =
        pipeline::analyze_trace(&trace, meta(), &resources, &config).unwrap()
    else {
        panic!("viable trace");
    };
    // B matched nothing and 602 of its 606 tainted calls sit in the
    // baseline (ratio ~0.993 > 0.99), so B is a false positive and C's
    // taint provenance dies with it.
    assert_eq!(analysis.metrics.process_count, 1, "B and C both removed");
    assert_eq!(analysis.fp_removed, vec![2, 3]);
    assert!(analysis.injections.is_empty());
    assert!(analysis.signature_set.is_empty());
    assert_eq!(graph.node_count(), 1);
    assert_eq!(analysis.per_process.len(), 1);
    assert!(analysis.per_process[0].is_initial);
}

#[test]
fn filtering_is_idempotent() {
    let trace = parse_trace_bytes(overtainted_chain().as_bytes()).unwrap();
    let resources = resources(explorer_baseline());
    let config = RunConfig::new("unused");
    let SampleOutcome::Analyzed { analysis, graph } =
        pipeline::analyze_trace(&trace, meta(), &resources, &config).unwrap()
    else {
        panic!("viable trace");
    };
    let again = fp_filter::filter_analysis(
        &trace,
        &graph,
        analysis.clone(),
        &resources.baseline,
        0.99,
        spgkit::spg::DEFAULT_PATH_BUDGET,
    )
    .unwrap();
    assert_eq!(again.analysis, analysis);
}

#[test]
fn clean_analysis_is_returned_unchanged() {
    let trace = parse_trace_bytes(spgkit_fixtures::tinba_trace().as_bytes()).unwrap();
    let resources = resources(BaselineProfile::default());
    let config = RunConfig::new("unused");
    let SampleOutcome::Analyzed { analysis, .. } =
        pipeline::analyze_trace(&trace, meta(), &resources, &config).unwrap()
    else {
        panic!("viable trace");
    };
    // Every propagation matched a signature, so the (empty) baseline was
    // never consulted and nothing was removed.
    assert!(analysis.fp_removed.is_empty());
    assert_eq!(analysis.metrics.process_count, 8);
}

#[test]
fn true_positive_targets_survive() {
    // Same chain but the target's calls are mostly NOT in the baseline.
    let mut b = TraceBuilder::new();
    b.process_start(1, "sample.exe", "C:\\sample.exe", None);
    b.wave_entry(1, 0, None);
    b.process_start(2, "explorer.exe", "C:\\Windows\\explorer.exe", None);
    b.wave_entry(2, 0, None);
    b.api_call(1, 0, "Sleep", true, Some(2));
    b.cross((1, 0), (2, 0));
    b.api_call(2, 0, "GetMessageW", true, None);
    b.api_call(2, 0, "CryptEncrypt", true, None);
    for pid in [1, 2] {
        b.instruction_summary(pid, 0, 500);
    }
    let trace = parse_trace_bytes(b.build().as_bytes()).unwrap();
    let resources = resources(explorer_baseline());
    let config = RunConfig::new("unused");
    let SampleOutcome::Analyzed { analysis, .. } =
        pipeline::analyze_trace(&trace, meta(), &resources, &config).unwrap()
    else {
        panic!("viable trace");
    };
    assert!(analysis.fp_removed.is_empty());
    assert_eq!(analysis.metrics.process_count, 2);
}

#[test]
fn matched_chains_survive_while_unmatched_branches_fall() {
    // Entry injects into svchost.exe with a real signature and, separately,
    // "executes" in an over-tainted explorer.exe that matches nothing.
    let mut b = TraceBuilder::new();
    b.process_start(1, "sample.exe", "C:\\sample.exe", None);
    b.wave_entry(1, 0, None);
    b.process_start(2, "svchost.exe", "C:\\Windows\\svchost.exe", None);
    b.wave_entry(2, 0, None);
    for api in ["OpenProcess", "VirtualAllocEx", "WriteProcessMemory", "CreateRemoteThread"] {
        b.api_call(1, 0, api, true, Some(2));
    }
    b.cross((1, 0), (2, 0));
    b.process_start(3, "explorer.exe", "C:\\Windows\\explorer.exe", None);
    b.wave_entry(3, 0, None);
    b.api_call(1, 0, "Sleep", true, Some(3));
    b.cross((1, 0), (3, 0));
    for _ in 0..500 {
        b.api_call(3, 0, "GetMessageW", true, None);
    }
    for pid in [1, 2, 3] {
        b.instruction_summary(pid, 0, 500);
    }

    let trace = parse_trace_bytes(b.build().as_bytes()).unwrap();
    let resources = resources(explorer_baseline());
    let config = RunConfig::new("unused");
    let SampleOutcome::Analyzed { analysis, .. } =
        pipeline::analyze_trace(&trace, meta(), &resources, &config).unwrap()
    else {
        panic!("viable trace");
    };
    assert_eq!(analysis.fp_removed, vec![3]);
    assert_eq!(analysis.metrics.process_count, 2);
    assert!(analysis.per_process.iter().any(|p| p.pid == 1 && p.is_initial));
    assert!(analysis.per_process.iter().any(|p| p.pid == 2));
    assert_eq!(analysis.signature_set, [1].into());
}

#[test]
fn unknown_image_surfaces_as_an_error() {
    let mut b = TraceBuilder::new();
    b.process_start(1, "sample.exe", "C:\\sample.exe", None);
    b.wave_entry(1, 0, None);
    b.process_start(2, "mystery.exe", "C:\\mystery.exe", None);
    b.wave_entry(2, 0, None);
    b.api_call(1, 0, "Sleep", true, Some(2));
    b.cross((1, 0), (2, 0));
    b.api_call(2, 0, "GetMessageW", true, None);
    b.instruction_summary(1, 0, 500);
    b.instruction_summary(2, 0, 500);
    let trace = parse_trace_bytes(b.build().as_bytes()).unwrap();
    let resources = resources(explorer_baseline());
    let config = RunConfig::new("unused");
    let err = pipeline::analyze_trace(&trace, meta(), &resources, &config).unwrap_err();
    assert!(err.to_string().contains("mystery.exe"), "{err}");
}
