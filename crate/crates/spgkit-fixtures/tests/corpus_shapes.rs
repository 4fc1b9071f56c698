//! Structural verification of the generated corpus: every sample's graph
//! realizes its shape's (process_depth, width, process_count), per-family
//! signature sets match the frozen expectations, and parsing round-trips.

use std::collections::BTreeSet;

use spgkit::spg;
use spgkit::trace::parse_trace_bytes;
use spgkit_fixtures::{family_specs, generate_corpus};

#[test]
fn every_sample_realizes_its_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_corpus(dir).unwrap();

    for family in family_specs() {
        for (idx, sample) in family.multi.iter().enumerate() {
            let id = spgkit_fixtures::sample_id(&format!("{}/{}", family.name, idx));
            let bytes = std::fs::read(dir.join("traces").join(format!("{id}.jsonl"))).unwrap();
            let trace = parse_trace_bytes(&bytes)
                .unwrap_or_else(|e| panic!("{}/{idx}: {e}", family.name));
            let graph = spg::build_spg(&trace).unwrap_or_else(|e| panic!("{}/{idx}: {e}", family.name));
            let metrics = spg::metrics(&graph, spg::DEFAULT_PATH_BUDGET).unwrap();
            let (pd, width, procs) = sample.shape.expect();
            assert_eq!(
                (metrics.process_depth, metrics.width, metrics.process_count),
                (pd, width, procs),
                "{}/{idx} shape {:?}",
                family.name,
                sample.shape
            );
        }
    }
}

#[test]
fn per_family_signature_sets_match_the_tables() {
    // (family, sigma, sigma_eq) for every family with multi-process samples.
    let expected: &[(&str, u32, u32)] = &[
        ("Androm", 3, 1),
        ("Barys", 1, 1),
        ("Bitman", 1, 1),
        ("Buzus", 7, 1),
        ("CTBLocker", 1, 3),
        ("Cerber", 2, 1),
        ("CoinMiner", 5, 2),
        ("Crowti", 1, 2),
        ("Cutwail", 1, 2),
        ("Dorkbot", 3, 1),
        ("Dridex", 3, 1),
        ("Eldorado", 1, 1),
        ("Emotet", 6, 5),
        ("Fareit", 1, 1),
        ("Fynloski", 2, 1),
        ("Gamarue", 1, 7),
        ("Kasidet", 1, 3),
        ("Kovter", 3, 1),
        ("Kryptik", 3, 1),
        ("Madangel", 2, 8),
        ("Midie", 2, 3),
        ("Mira", 1, 7),
        ("Natas", 4, 4),
        ("Ngrbot", 1, 1),
        ("Nimnul", 6, 3),
        ("Nitol", 1, 5),
        ("Nymaim", 1, 2),
        ("Ramnit", 7, 3),
        ("Razy", 3, 7),
        ("Sality", 1, 6),
        ("Shifu", 1, 1),
        ("Symmi", 4, 1),
        ("TeslaCrypt", 1, 1),
        ("TinyBanker", 3, 8),
        ("Urausy", 5, 2),
        ("Ursnif", 6, 1),
        ("VBKrypt", 3, 2),
        ("Vawtrak", 3, 2),
        ("Waski", 1, 1),
        ("Zbot", 6, 1),
    ];
    let specs = family_specs();
    for &(name, sigma, sigma_eq) in expected {
        let family = specs.iter().find(|f| f.name == name).unwrap();
        let sets: Vec<BTreeSet<u32>> = family
            .multi
            .iter()
            .map(|m| m.sigs.iter().map(|&(id, _)| id).collect())
            .collect();
        let union: BTreeSet<u32> = sets.iter().flatten().copied().collect();
        assert_eq!(union.len() as u32, sigma, "{name} sigma");
        let max_group = sets
            .iter()
            .map(|s| sets.iter().filter(|t| *t == s).count() as u32)
            .max()
            .unwrap();
        assert_eq!(max_group, sigma_eq, "{name} sigma_eq");
    }
    let covered: BTreeSet<&str> = expected.iter().map(|&(n, _, _)| n).collect();
    for family in &specs {
        assert_eq!(
            covered.contains(family.name),
            !family.multi.is_empty(),
            "{} multi-process census",
            family.name
        );
    }
}

#[test]
fn traces_round_trip_through_the_parser() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_corpus(dir).unwrap();
    for entry in std::fs::read_dir(dir.join("traces")).unwrap().take(40) {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        let trace = parse_trace_bytes(&bytes).unwrap();
        let reparsed = parse_trace_bytes(trace.to_jsonl().as_bytes()).unwrap();
        assert_eq!(trace, reparsed);
    }
}
