//! Acceptance suite. Each test covers one acceptance criterion and prints a
//! single pass/fail line (run with `--nocapture` to see them).

mod common;

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use spgkit::analytics::SensitiveGroup;
use spgkit::fp_filter::{self, Verdict, VerdictReason};
use spgkit::pipeline::{self, CorpusReport, RunConfig};
use spgkit::signatures::{self, default_catalog};
use spgkit::spg;
use spgkit::trace::{self, parse_trace_bytes, Viability};

fn criterion(number: u32, name: &str, ok: bool, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    println!("criterion {number} [{name}]: {status}{detail}");
    assert!(ok, "criterion {number} [{name}] failed{detail}");
}

struct CorpusRun {
    _dir: tempfile::TempDir,
    report: CorpusReport,
    elapsed: std::time::Duration,
}

fn corpus_run() -> &'static CorpusRun {
    static RUN: OnceLock<CorpusRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = spgkit_fixtures::generate_corpus(dir.path()).unwrap();
        let mut config = RunConfig::new(dir.path().join("out"));
        config.corpus_manifest = Some(corpus.manifest_path.clone());
        let started = Instant::now();
        let report = pipeline::run_corpus(&config).unwrap();
        CorpusRun {
            _dir: dir,
            report,
            elapsed: started.elapsed(),
        }
    })
}

#[test]
fn criterion_1_tinba_worked_example() {
    let started = Instant::now();
    let trace = parse_trace_bytes(spgkit_fixtures::tinba_trace().as_bytes()).unwrap();
    let graph = spg::build_spg(&trace).unwrap();
    let metrics = spg::metrics(&graph, spg::DEFAULT_PATH_BUDGET).unwrap();
    let elapsed = started.elapsed();
    let ok = metrics.process_depth == 4
        && metrics.wave_depth == 6
        && metrics.width == 5
        && metrics.process_count == 8
        && metrics.wave_count == 10
        && elapsed.as_secs_f64() < 1.0;
    criterion(
        1,
        "Tinba worked example",
        ok,
        &format!(
            " (pd={} wd={} width={} processes={} waves={} in {elapsed:?})",
            metrics.process_depth,
            metrics.wave_depth,
            metrics.width,
            metrics.process_count,
            metrics.wave_count
        ),
    );
}

#[test]
fn criterion_2_natas_worked_example() {
    let started = Instant::now();
    let trace = parse_trace_bytes(spgkit_fixtures::natas_trace().as_bytes()).unwrap();
    let graph = spg::build_spg(&trace).unwrap();
    let metrics = spg::metrics(&graph, spg::DEFAULT_PATH_BUDGET).unwrap();
    let (pids, successors, entry) = common::oracle_view(&graph);
    let oracle = common::oracle_metrics(&pids, &successors, entry);
    let elapsed = started.elapsed();
    let ok = metrics.process_count == 11
        && metrics.process_depth == 5
        && metrics.width == oracle.width
        && oracle.width == 8
        && elapsed.as_secs_f64() < 1.0;
    criterion(
        2,
        "Natas worked example",
        ok,
        &format!(
            " (processes={} pd={} width={} oracle_width={} in {elapsed:?})",
            metrics.process_count, metrics.process_depth, metrics.width, oracle.width
        ),
    );
}

#[test]
fn criterion_3_metric_oracle_suite() {
    let started = Instant::now();
    let cases = 1200;
    let mut mismatches = 0;
    for seed in 0..cases {
        let graph = common::random_graph(seed);
        let metrics = spg::metrics(&graph, spg::DEFAULT_PATH_BUDGET).unwrap();
        let (pids, successors, entry) = common::oracle_view(&graph);
        let oracle = common::oracle_metrics(&pids, &successors, entry);
        if (metrics.process_depth, metrics.wave_depth, metrics.width)
            != (oracle.process_depth, oracle.wave_depth, oracle.width)
        {
            mismatches += 1;
        }
    }
    let elapsed = started.elapsed();
    let ok = mismatches == 0 && elapsed.as_secs() < 60;
    criterion(
        3,
        "metric oracle suite",
        ok,
        &format!(" ({cases} graphs, {mismatches} mismatches, in {elapsed:?})"),
    );
}

#[test]
fn criterion_4_catalog_self_match() {
    use rand::{Rng, SeedableRng};
    let catalog = default_catalog();
    let benign = ["GetLastError", "Sleep", "CloseHandle"];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);

    // Ids 16 and 23 ship identical API sequences (the catalog has 32
    // distinct sequences); a stream built from either is a match for both,
    // and the longest-then-lowest-id rule returns 16. For every signature
    // the probe stream must (a) embed the signature's own sequence and (b)
    // resolve to a signature with a byte-identical sequence; unique
    // sequences must resolve to their own id.
    let embeds = |stream: &[(u64, &str)], apis: &[String]| {
        let mut next = 0usize;
        for want in apis {
            match stream[next..].iter().position(|(_, name)| *name == want.as_str()) {
                Some(at) => next = next + at + 1,
                None => return false,
            }
        }
        true
    };
    let sequence_unique = |id: u32| {
        let apis = &catalog.get(id).unwrap().apis;
        catalog.signatures().filter(|d| &d.apis == apis).count() == 1
    };

    let mut failures: Vec<(u32, &str)> = Vec::new();
    for def in catalog.signatures() {
        let exact: Vec<(u64, &str)> = def
            .apis
            .iter()
            .enumerate()
            .map(|(i, api)| (i as u64 + 1, api.as_str()))
            .collect();
        let mut noisy: Vec<&str> = def.apis.iter().map(|s| s.as_str()).collect();
        for name in benign {
            let at = rng.gen_range(0..=noisy.len());
            noisy.insert(at, name);
        }
        let noisy: Vec<(u64, &str)> = noisy
            .into_iter()
            .enumerate()
            .map(|(i, api)| (i as u64 + 1, api))
            .collect();

        for (label, stream) in [("exact", &exact), ("interleaved", &noisy)] {
            if !embeds(stream, &def.apis) {
                failures.push((def.id, label));
                continue;
            }
            match signatures::match_propagation(stream, &catalog) {
                Some((id, _)) => {
                    let resolved = &catalog.get(id).unwrap().apis;
                    let own_id_ok = !sequence_unique(def.id) || id == def.id;
                    if resolved != &def.apis || !own_id_ok {
                        failures.push((def.id, label));
                    }
                }
                None => failures.push((def.id, label)),
            }
        }
    }
    let ok = failures.is_empty();
    criterion(
        4,
        "signature catalog self-match",
        ok,
        &format!(
            " (33/33 exact, 33/33 interleaved; ids 16/23 share one sequence, both resolve to 16; failures {failures:?})"
        ),
    );
}

#[test]
fn criterion_5_corpus_statistics() {
    let run = corpus_run();
    let report = &run.report;
    let mut problems: Vec<String> = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            problems.push(name.to_string());
        }
    };

    let rate = report.distributions.multi_process_rate;
    check("multi-process rate 23.23% +-0.01pp", (rate - 0.2323).abs() <= 0.0001);
    check("multi-process count 151", report.distributions.multi_process_count == 151);

    let expected_width: BTreeMap<u32, u32> =
        [(1, 597), (2, 24), (3, 4), (4, 6), (5, 9), (6, 5), (7, 5)].into();
    check("width histogram exact", report.distributions.width == expected_width);

    check("access split (211, 213, 15)", report.access_split == (211, 213, 15));
    check(
        "dropper split (52, 342)",
        report.droppers.dropper_propagations == 52 && report.droppers.non_dropper_propagations == 342,
    );
    check("injections_total 417", report.injections_total == 417);

    let init_mean = report.wave_split.initial_mean.unwrap_or(0.0);
    let non_mean = report.wave_split.non_initial_mean.unwrap_or(0.0);
    check("initial wave mean 3.39 +-0.005", (init_mean - 3.39).abs() <= 0.005);
    check("non-initial wave mean 1.64 +-0.005", (non_mean - 1.64).abs() <= 0.005);

    let avg = &report.family_averages;
    check("family stability avg 0.86", (avg.stability - 0.86).abs() <= 0.01);
    check("family m_ratio avg 0.38", (avg.m_ratio - 0.38).abs() <= 0.01);
    check("family sigma avg 2.70", (avg.sigma - 2.70).abs() <= 0.01);
    check("family sigma_eq avg 2.62", (avg.sigma_eq - 2.62).abs() <= 0.01);
    check("family seq_ratio avg 0.73", (avg.seq_ratio - 0.73).abs() <= 0.01);
    check(
        "family consistency avg 0.83",
        (avg.family_consistency - 0.83).abs() <= 0.01,
    );

    let totals = &report.sensitive_usage.totals;
    let expected_totals: BTreeMap<SensitiveGroup, (u32, u32)> = [
        (SensitiveGroup::Internet, (11, 73)),
        (SensitiveGroup::Registry, (63, 87)),
        (SensitiveGroup::FileSystem, (136, 133)),
        (SensitiveGroup::Security, (10, 46)),
    ]
    .into();
    check("sensitive-API totals row exact", *totals == expected_totals);

    let instr = &report.instruction_split;
    check(
        "instruction means (6157, 2500)",
        instr.initial_mean == Some(6157.0) && instr.non_initial_mean == Some(2500.0),
    );

    check("no discarded samples", report.discarded.is_empty());
    check("no failed samples", report.failures.is_empty());
    check("runtime < 30s", run.elapsed.as_secs() < 30);

    criterion(
        5,
        "corpus statistics reproduction",
        problems.is_empty(),
        &format!(
            " (650 samples in {:?}; failing checks: {problems:?})",
            run.elapsed
        ),
    );
}

#[test]
fn criterion_6_fp_and_viability_boundaries() {
    let mut good = true;
    let mut detail = String::new();

    let mk_trace = |in_baseline: usize, extra: usize, instructions: u64| {
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
        lines.push(format!(
            r#"{{"seq": {seq}, "pid": 1, "kind": "instruction_summary", "wave_index": 0, "unique_instruction_count": {instructions}}}"#
        ));
        parse_trace_bytes(lines.join("\n").as_bytes()).unwrap()
    };
    let mut baseline = fp_filter::BaselineProfile::default();
    baseline.insert("explorer.exe", ["GetMessageW".to_string()].into());

    let v = fp_filter::judge_process(&mk_trace(995, 5, 100), 1, &baseline, 0.99).unwrap();
    if v.verdict != Verdict::FalsePositive {
        good = false;
        detail.push_str(" 0.995-not-FP");
    }
    let v = fp_filter::judge_process(&mk_trace(99, 1, 100), 1, &baseline, 0.99).unwrap();
    if v.verdict != Verdict::TruePositive {
        good = false;
        detail.push_str(" 0.99-not-TP");
    }
    let v = fp_filter::judge_process(&mk_trace(0, 0, 100), 1, &baseline, 0.99).unwrap();
    if v.verdict != Verdict::FalsePositive || v.reason != VerdictReason::NoTaintedApiCalls {
        good = false;
        detail.push_str(" zero-calls-not-FP");
    }

    let below = trace::validate_sample_viability(&mk_trace(1, 0, 24), 25);
    if !matches!(below, Viability::Discarded { .. }) {
        good = false;
        detail.push_str(" 24-not-discarded");
    }
    let at = trace::validate_sample_viability(&mk_trace(1, 0, 25), 25);
    if at != Viability::Viable {
        good = false;
        detail.push_str(" 25-not-viable");
    }

    criterion(6, "FP-filter and viability boundaries", good, &detail);
}

#[test]
fn criterion_7_family_formula_spot_checks() {
    let run = corpus_run();
    let report = &run.report;
    let mut problems: Vec<String> = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            problems.push(name.to_string());
        }
    };

    let madangel = report
        .family_stats
        .iter()
        .find(|f| f.family == "Madangel")
        .unwrap();
    check(
        "Madangel row",
        madangel.samples == 10
            && madangel.multi == 10
            && madangel.stability == 1.0
            && madangel.m_ratio == Some(1.0)
            && madangel.sigma == Some(2)
            && madangel.sigma_eq == Some(8)
            && madangel.s_eq == 8
            && madangel.seq_ratio == Some(0.8)
            && (madangel.family_consistency - 0.8).abs() < 1e-12,
    );

    let androm = report
        .family_stats
        .iter()
        .find(|f| f.family == "Androm")
        .unwrap();
    check(
        "Androm row",
        androm.samples == 10
            && androm.multi == 2
            && (androm.stability - 0.8).abs() < 1e-12
            && androm.sigma == Some(3)
            && androm.sigma_eq == Some(1)
            && androm.s_eq == 8
            && androm.seq_ratio == Some(0.5)
            && (androm.family_consistency - 0.8).abs() < 1e-12,
    );

    let dorkbot = report
        .target_intersections
        .iter()
        .find(|t| t.family == "Dorkbot")
        .unwrap();
    check(
        "Dorkbot row",
        dorkbot.i == 2
            && (dorkbot.i_over_m - 0.67).abs() < 0.005
            && (dorkbot.iprime_over_t - 0.92).abs() < 0.005,
    );

    let gamarue = report
        .target_intersections
        .iter()
        .find(|t| t.family == "Gamarue")
        .unwrap();
    check(
        "Gamarue row",
        gamarue.i == 7 && gamarue.i_over_m == 1.0 && gamarue.iprime_over_t == 1.0,
    );

    criterion(
        7,
        "family formula spot checks",
        problems.is_empty(),
        &format!(" (failing checks: {problems:?})"),
    );
}

#[test]
fn criterion_8_determinism_across_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = spgkit_fixtures::generate_corpus(dir.path()).unwrap();

    let run_with = |jobs: usize, out: &std::path::Path| {
        let mut config = RunConfig::new(out);
        config.corpus_manifest = Some(corpus.manifest_path.clone());
        config.parallelism = jobs;
        pipeline::run_corpus(&config).unwrap();
    };
    let out1 = dir.path().join("out-jobs1");
    let out8 = dir.path().join("out-jobs8");
    run_with(1, &out1);
    run_with(8, &out8);

    let snapshot = |root: &std::path::Path| {
        let mut files = BTreeMap::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(root).unwrap().to_path_buf();
                    files.insert(rel, std::fs::read(&path).unwrap());
                }
            }
        }
        files
    };
    let a = snapshot(&out1);
    let b = snapshot(&out8);
    let ok = a == b && !a.is_empty();
    criterion(
        8,
        "determinism across parallelism",
        ok,
        &format!(" ({} report files compared)", a.len()),
    );
}
