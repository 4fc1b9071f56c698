//! Deterministic 650-sample corpus: 65 families x 10 samples, 151 of them
//! multi-process. Per-family topology, signature, dropper, sensitive-API
//! and year assignments are frozen tables; the generator expands them into
//! trace files plus a manifest and asserts the corpus-level invariants
//! (process totals, injection pair/instance counts, access-class split,
//! wave histograms, yearly process sums) while building.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::builder::{sample_id, TraceBuilder};

/// Process-level topology of one multi-process sample. Edges are (source,
/// target) process indices in emission order; index 0 is the initial
/// process. Every edge is one injection pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Chain(u8),
    Star(u8),
    /// depth 3, width 2, 4 processes: 0->1->2, 0->3.
    T324,
    /// depth 3, width 5, 7 processes: 0->1->{2,3,4,5}, 0->6.
    T357,
    /// depth 3, width 7, 9 processes, 1 shortcut.
    T379,
    /// depth 3, width 4, 5 processes, 1 shortcut.
    T345,
    /// depth 3, width 3, 5 processes, 1 shortcut.
    T335,
    /// depth 4, width 2, 5 processes.
    T425,
    /// depth 4, width 2, 6 processes.
    T426,
    /// depth 4, width 4, 7 processes, 2 shortcuts.
    T447,
    /// depth 5, width 2, 6 processes.
    T526,
    /// depth 5, width 4, 8 processes (tree).
    T548Tree,
    /// depth 5, width 4, 8 processes, 1 shortcut.
    T548X,
    /// depth 5, width 5, 9 processes, 1 shortcut.
    T559X1,
    /// depth 5, width 5, 9 processes, 2 shortcuts.
    T559X2,
    /// depth 5, width 7, 11 processes, 3 shortcuts.
    T57113,
}

impl Shape {
    pub fn edges(self) -> Vec<(u8, u8)> {
        match self {
            Shape::Chain(p) => (0..p - 1).map(|i| (i, i + 1)).collect(),
            Shape::Star(p) => (1..p).map(|i| (0, i)).collect(),
            Shape::T324 => vec![(0, 1), (1, 2), (0, 3)],
            Shape::T357 => vec![(0, 1), (1, 2), (1, 3), (1, 4), (1, 5), (0, 6)],
            Shape::T379 => vec![
                (0, 1),
                (1, 2),
                (1, 3),
                (1, 4),
                (1, 5),
                (1, 6),
                (0, 7),
                (7, 8),
                (0, 8),
            ],
            Shape::T345 => vec![(0, 1), (1, 2), (1, 3), (0, 4), (0, 2)],
            Shape::T335 => vec![(0, 1), (1, 2), (0, 3), (3, 4), (0, 2)],
            Shape::T425 => vec![(0, 1), (1, 2), (2, 3), (0, 4)],
            Shape::T426 => vec![(0, 1), (1, 2), (2, 3), (0, 4), (4, 5)],
            Shape::T447 => vec![
                (0, 1),
                (1, 2),
                (2, 3),
                (0, 4),
                (4, 5),
                (5, 6),
                (1, 3),
                (4, 6),
            ],
            Shape::T526 => vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 5)],
            Shape::T548Tree => vec![(0, 1), (1, 2), (2, 3), (3, 4), (1, 5), (2, 6), (3, 7)],
            Shape::T548X => vec![
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (1, 5),
                (5, 6),
                (2, 7),
                (2, 4),
            ],
            Shape::T559X1 => vec![
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (1, 5),
                (5, 6),
                (2, 7),
                (3, 8),
                (2, 4),
            ],
            Shape::T559X2 => vec![
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (1, 5),
                (5, 6),
                (6, 7),
                (2, 8),
                (2, 4),
                (5, 7),
            ],
            Shape::T57113 => vec![
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (2, 5),
                (5, 6),
                (1, 7),
                (7, 8),
                (0, 9),
                (9, 10),
                (2, 6),
                (1, 8),
                (0, 10),
            ],
        }
    }

    /// (process_depth, width, process_count) this shape must realize.
    pub fn expect(self) -> (u32, u64, u32) {
        match self {
            Shape::Chain(p) => (p as u32, 1, p as u32),
            Shape::Star(p) => (2, p as u64 - 1, p as u32),
            Shape::T324 => (3, 2, 4),
            Shape::T357 => (3, 5, 7),
            Shape::T379 => (3, 7, 9),
            Shape::T345 => (3, 4, 5),
            Shape::T335 => (3, 3, 5),
            Shape::T425 => (4, 2, 5),
            Shape::T426 => (4, 2, 6),
            Shape::T447 => (4, 4, 7),
            Shape::T526 => (5, 2, 6),
            Shape::T548Tree => (5, 4, 8),
            Shape::T548X => (5, 4, 8),
            Shape::T559X1 => (5, 5, 9),
            Shape::T559X2 => (5, 5, 9),
            Shape::T57113 => (5, 7, 11),
        }
    }

    pub fn process_count(self) -> u8 {
        self.expect().2 as u8
    }
}

/// One multi-process sample: a shape, per-edge signature assignments
/// (id, instance count), dropped-target indices, and target names for
/// process indices 1..p-1.
#[derive(Debug, Clone)]
pub struct MultiSample {
    pub shape: Shape,
    pub sigs: Vec<(u32, u8)>,
    pub dropped: Vec<u8>,
    pub names: Vec<&'static str>,
}

#[derive(Debug, Clone)]
pub struct FamilySpec {
    pub name: &'static str,
    pub multi: Vec<MultiSample>,
}

/// Per-family sensitive-API usage cells: samples using each group in the
/// initial process / in some non-initial process.
#[derive(Debug, Clone, Copy, Default)]
pub struct SensitiveCells {
    pub internet: (u8, u8),
    pub registry: (u8, u8),
    pub file_system: (u8, u8),
    pub security: (u8, u8),
}

fn cells(internet: (u8, u8), registry: (u8, u8), file_system: (u8, u8), security: (u8, u8)) -> SensitiveCells {
    SensitiveCells {
        internet,
        registry,
        file_system,
        security,
    }
}

const POOL: [&str; 10] = [
    "explorer.exe",
    "iexplore.exe",
    "cmd.exe",
    "conhost.exe",
    "taskhost.exe",
    "dwm.exe",
    "svchost.exe",
    "winver.exe",
    "dllhost.exe",
    "rundll32.exe",
];

fn pool_names(offset: usize, count: usize) -> Vec<&'static str> {
    (0..count).map(|i| POOL[(offset + i) % POOL.len()]).collect()
}

/// Uniform single-instance signature assignment over `n` edges.
fn u(sig: u32, n: usize) -> Vec<(u32, u8)> {
    vec![(sig, 1); n]
}

/// Uniform assignment with double instances at the given edge indices.
fn dbl(sig: u32, n: usize, doubles: &[usize]) -> Vec<(u32, u8)> {
    let mut sigs = vec![(sig, 1); n];
    for &i in doubles {
        sigs[i].1 = 2;
    }
    sigs
}

/// Cycle `ids` across `n` edges, doubling the given edge indices.
fn cyc(ids: &[u32], n: usize, doubles: &[usize]) -> Vec<(u32, u8)> {
    let mut sigs: Vec<(u32, u8)> = (0..n).map(|i| (ids[i % ids.len()], 1)).collect();
    for &i in doubles {
        sigs[i].1 = 2;
    }
    sigs
}

fn lst(ids: &[u32]) -> Vec<(u32, u8)> {
    ids.iter().map(|&id| (id, 1)).collect()
}

fn ms(shape: Shape, sigs: Vec<(u32, u8)>, dropped: &[u8], names: Vec<&'static str>) -> MultiSample {
    assert_eq!(sigs.len(), shape.edges().len(), "sig per edge");
    assert_eq!(names.len(), shape.process_count() as usize - 1, "name per target");
    MultiSample {
        shape,
        sigs,
        dropped: dropped.to_vec(),
        names,
    }
}

/// Shorthand for a two-process chain with a single signature.
fn chain2(sig: u32, name: &'static str) -> MultiSample {
    ms(Shape::Chain(2), u(sig, 1), &[], vec![name])
}

fn chain2_dropped(sig: u32, name: &'static str) -> MultiSample {
    ms(Shape::Chain(2), u(sig, 1), &[1], vec![name])
}

/// The full per-family table for the fixture corpus.
pub fn family_specs() -> Vec<FamilySpec> {
    let fam = |name, multi| FamilySpec { name, multi };
    vec![
        fam(
            "Androm",
            vec![
                ms(Shape::Chain(3), lst(&[17, 2]), &[], pool_names(0, 2)),
                ms(Shape::Star(3), u(21, 2), &[], pool_names(1, 2)),
            ],
        ),
        fam("Artemis", vec![]),
        fam("Barys", vec![ms(Shape::Chain(3), u(4, 2), &[], vec!["explorer.exe", "svchost.exe"])]),
        fam("Bitman", vec![chain2(2, "sample.exe")]),
        fam(
            "Buzus",
            vec![
                ms(Shape::Chain(4), lst(&[28, 29, 10]), &[], pool_names(0, 3)),
                ms(Shape::Chain(5), lst(&[17, 5, 3, 33]), &[], pool_names(1, 4)),
            ],
        ),
        fam(
            "CTBLocker",
            vec![
                ms(Shape::Star(3), u(2, 2), &[], vec!["sample.exe", "iexplore.exe"]),
                ms(Shape::Star(3), u(2, 2), &[], vec!["sample.exe", "iexplore.exe"]),
                ms(Shape::Star(3), u(2, 2), &[], vec!["sample.exe", "iexplore.exe"]),
            ],
        ),
        fam(
            "Cerber",
            vec![ms(Shape::Star(3), lst(&[8, 22]), &[1], vec!["ns710D.tmp", "timetasks.exe"])],
        ),
        fam(
            "CoinMiner",
            vec![
                chain2_dropped(8, "sample.tmp"),
                chain2_dropped(8, "sample.tmp"),
                chain2_dropped(11, "ns9204.tmp"),
                chain2_dropped(25, "CNminer.exe"),
                ms(
                    Shape::Star(4),
                    lst(&[13, 13, 26]),
                    &[1, 3],
                    vec!["DbQZbGtq.exe", "WMIC.exe", "ns97DF.tmp"],
                ),
            ],
        ),
        fam("CosmicDuke", vec![]),
        fam(
            "Crowti",
            vec![
                chain2(4, "explorer.exe"),
                ms(Shape::Chain(3), u(4, 2), &[], vec!["explorer.exe", "svchost.exe"]),
            ],
        ),
        fam("Cryptlock", vec![]),
        fam(
            "Cutwail",
            vec![
                ms(Shape::Star(3), u(2, 2), &[], vec!["sample.exe", "iexplore.exe"]),
                ms(Shape::Star(3), u(2, 2), &[], vec!["sample.exe", "iexplore.exe"]),
            ],
        ),
        fam("DealPly", vec![]),
        fam(
            "Dorkbot",
            vec![
                chain2(15, "sample.exe"),
                ms(
                    Shape::T357,
                    u(1, 6),
                    &[],
                    vec![
                        "sample.exe",
                        "taskhost.exe",
                        "conhost.exe",
                        "dwm.exe",
                        "cmd.exe",
                        "explorer.exe",
                    ],
                ),
                ms(
                    Shape::T357,
                    u(2, 6),
                    &[],
                    vec![
                        "sample.exe",
                        "taskhost.exe",
                        "conhost.exe",
                        "dwm.exe",
                        "cmd.exe",
                        "explorer.exe",
                    ],
                ),
            ],
        ),
        fam(
            "Dridex",
            vec![
                chain2(1, "explorer.exe"),
                chain2(33, "svchost.exe"),
                ms(Shape::Chain(3), u(4, 2), &[1], vec!["edg7AF9.exe", "svchost.exe"]),
            ],
        ),
        fam("Eldorado", vec![chain2_dropped(7, "708D.tmp")]),
        fam(
            "Emotet",
            vec![
                ms(Shape::Chain(4), lst(&[1, 2, 1]), &[], pool_names(0, 3)),
                ms(Shape::Chain(4), lst(&[1, 2, 2]), &[], pool_names(1, 3)),
                ms(Shape::T324, lst(&[1, 1, 2]), &[], pool_names(2, 3)),
                ms(Shape::Star(3), lst(&[1, 2]), &[], pool_names(3, 2)),
                ms(Shape::T425, lst(&[1, 2, 1, 2]), &[], pool_names(4, 4)),
                ms(Shape::T426, u(4, 5), &[], pool_names(5, 5)),
                ms(Shape::T447, dbl(19, 8, &[0, 1]), &[], pool_names(6, 6)),
                ms(Shape::T548X, dbl(28, 8, &[0, 1]), &[], pool_names(0, 7)),
                ms(Shape::T559X1, u(30, 9), &[], pool_names(1, 8)),
            ],
        ),
        fam("Fareit", vec![chain2(3, "sample.exe")]),
        fam("Flood", vec![]),
        fam("Fujacks", vec![]),
        fam(
            "Fynloski",
            vec![chain2(2, "notepad.exe"), chain2(10, "sample.exe")],
        ),
        fam(
            "Gamarue",
            (0..7).map(|_| chain2(9, "wuauclt.exe")).collect(),
        ),
        fam("Gootkit", vec![]),
        fam(
            "Kasidet",
            (0..3).map(|_| chain2(19, "explorer.exe")).collect(),
        ),
        fam("Kazy", vec![]),
        fam(
            "Kovter",
            vec![
                ms(Shape::Chain(3), u(3, 2), &[], vec!["sample.exe", "svchost.exe"]),
                ms(Shape::Chain(4), u(9, 3), &[], pool_names(6, 3)),
                ms(Shape::Star(3), u(14, 2), &[], vec!["sample.exe", "svchost.exe"]),
            ],
        ),
        fam("Kraddare", vec![]),
        fam(
            "Kryptik",
            vec![
                chain2(4, "explorer.exe"),
                chain2(10, "dllhost.exe"),
                chain2_dropped(27, "73C8.tmp"),
            ],
        ),
        fam(
            "Madangel",
            (0..10)
                .map(|i| {
                    if i < 8 {
                        chain2(6, "sample.exe")
                    } else {
                        ms(Shape::Star(3), lst(&[6, 1]), &[], vec!["sample.exe", "explorer.exe"])
                    }
                })
                .collect(),
        ),
        fam("Madi", vec![]),
        fam("Mamba", vec![]),
        fam("Mazam", vec![]),
        fam(
            "Midie",
            vec![
                chain2(2, "sample.exe"),
                chain2(2, "sample.exe"),
                chain2(2, "sample.usr"),
                ms(Shape::T526, u(14, 5), &[], pool_names(1, 5)),
            ],
        ),
        fam("MiniDuke", vec![]),
        fam(
            "Mira",
            vec![
                chain2(12, "xvkwym.exe"),
                chain2(12, "xvkwym.exe"),
                chain2(12, "xvkwym.exe"),
                chain2(12, "raphw.exe"),
                chain2(12, "raphw.exe"),
                chain2(12, "vlfsay.exe"),
                chain2(12, "vlfsay.exe"),
            ],
        ),
        fam(
            "Natas",
            vec![
                chain2(1, "sample.exe"),
                chain2(18, "sample.exe"),
                chain2(10, "sample.exe"),
                chain2(16, "sample.exe"),
                ms(
                    Shape::T559X2,
                    cyc(&[1, 18, 10], 10, &[1, 2]),
                    &[1, 2, 3],
                    vec![
                        "sample.exe",
                        "ulowu.exe",
                        "ulowu.exe",
                        "taskhost.exe",
                        "conhost.exe",
                        "explorer.exe",
                        "cmd.exe",
                        "dwm.exe",
                    ],
                ),
                ms(
                    Shape::T559X2,
                    cyc(&[1, 18, 10], 10, &[1, 2]),
                    &[1, 2, 3],
                    vec![
                        "sample.exe",
                        "ulowu.exe",
                        "ulowu.exe",
                        "taskhost.exe",
                        "conhost.exe",
                        "explorer.exe",
                        "cmd.exe",
                        "dwm.exe",
                    ],
                ),
                ms(
                    Shape::T57113,
                    cyc(&[1, 18, 10], 13, &[1, 2]),
                    &[1, 2, 3],
                    vec![
                        "sample.exe",
                        "ulowu.exe",
                        "ulowu.exe",
                        "taskhost.exe",
                        "conhost.exe",
                        "explorer.exe",
                        "cmd.exe",
                        "dwm.exe",
                        "zaar.exe",
                        "yros.exe",
                    ],
                ),
                ms(
                    Shape::T57113,
                    cyc(&[1, 18, 10], 13, &[1, 2]),
                    &[1, 2, 3],
                    vec![
                        "sample.exe",
                        "ulowu.exe",
                        "ulowu.exe",
                        "taskhost.exe",
                        "conhost.exe",
                        "explorer.exe",
                        "cmd.exe",
                        "dwm.exe",
                        "zaar.exe",
                        "yros.exe",
                    ],
                ),
                ms(
                    Shape::T57113,
                    cyc(&[1, 18], 13, &[0, 1]),
                    &[1, 2, 3],
                    vec![
                        "sample.exe",
                        "ulowu.exe",
                        "ulowu.exe",
                        "taskhost.exe",
                        "conhost.exe",
                        "explorer.exe",
                        "cmd.exe",
                        "dwm.exe",
                        "ahos.exe",
                        "loid.exe",
                    ],
                ),
            ],
        ),
        fam("Neshta", vec![]),
        fam("Neshuta", vec![]),
        fam("Ngrbot", vec![chain2(1, "explorer.exe")]),
        fam(
            "Nimnul",
            vec![
                chain2_dropped(8, "DesktopLayer.e"),
                chain2_dropped(8, "sampleSrv.exe"),
                chain2_dropped(8, "tXoPUA.exe"),
                ms(Shape::Chain(3), lst(&[11, 17]), &[1], vec!["OZpdVg.exe", "iexplore.exe"]),
                ms(
                    Shape::Chain(4),
                    lst(&[13, 25, 13]),
                    &[1],
                    vec!["uhUhRBmr.exe", "iexplore.exe", "explorer.exe"],
                ),
                ms(
                    Shape::Chain(4),
                    u(12, 3),
                    &[],
                    vec!["sample.exe", "iexplore.exe", "explorer.exe"],
                ),
            ],
        ),
        fam(
            "Nitol",
            (0..5)
                .map(|_| ms(Shape::Star(3), u(2, 2), &[], vec!["sample.exe", "iexplore.exe"]))
                .collect(),
        ),
        fam(
            "Nymaim",
            (0..2)
                .map(|_| ms(Shape::Star(3), u(2, 2), &[], vec!["sample.exe", "iexplore.exe"]))
                .collect(),
        ),
        fam("Otwycal", vec![]),
        fam("Padodor", vec![]),
        fam("Parite", vec![]),
        fam("Pony", vec![]),
        fam("Pronny", vec![]),
        fam(
            "Ramnit",
            vec![
                ms(
                    Shape::Chain(4),
                    u(8, 3),
                    &[1],
                    vec!["samplemgr.exe", "iexplore.exe", "explorer.exe"],
                ),
                ms(
                    Shape::Chain(5),
                    u(11, 4),
                    &[1],
                    vec!["sampleSrv.exe", "iexplore.exe", "explorer.exe", "conhost.exe"],
                ),
                ms(Shape::Star(3), u(5, 2), &[1], vec!["DesktopLayer.e", "iexplore.exe"]),
                ms(
                    Shape::Star(4),
                    lst(&[1, 13, 1]),
                    &[1],
                    vec!["OXYbHl.exe", "iexplore.exe", "explorer.exe"],
                ),
                ms(
                    Shape::Star(8),
                    cyc(&[18, 33], 7, &[]),
                    &[1, 2],
                    vec![
                        "OXYbHlSrv.exe",
                        "sample.tmp",
                        "iexplore.exe",
                        "explorer.exe",
                        "taskhost.exe",
                        "dwm.exe",
                        "cmd.exe",
                    ],
                ),
                ms(
                    Shape::T335,
                    cyc(&[1, 13], 5, &[]),
                    &[3],
                    vec!["iexplore.exe", "explorer.exe", "DesktopLayer.e", "samplemgr.exe"],
                ),
                ms(
                    Shape::T335,
                    cyc(&[13, 1], 5, &[]),
                    &[],
                    vec!["iexplore.exe", "explorer.exe", "rundll32.exe", "samplemgr.exe"],
                ),
            ],
        ),
        fam(
            "Razy",
            vec![
                chain2_dropped(16, "750F.tmp"),
                chain2_dropped(16, "79D0.tmp"),
                chain2_dropped(16, "72FD.tmp"),
                chain2_dropped(16, "7686.tmp"),
                chain2_dropped(16, "7425.tmp"),
                chain2_dropped(16, "7722.tmp"),
                chain2_dropped(16, "7119.tmp"),
                chain2_dropped(2, "73E7.tmp"),
                ms(Shape::Star(3), u(21, 2), &[], vec!["sample.exe", "iexplore.exe"]),
            ],
        ),
        fam("Renos", vec![]),
        fam("Rovnix", vec![]),
        fam(
            "Sality",
            vec![
                ms(
                    Shape::Star(6),
                    dbl(1, 5, &[0]),
                    &[],
                    vec!["taskhost.exe", "conhost.exe", "explorer.exe", "dwm.exe", "cmd.exe"],
                ),
                ms(
                    Shape::Star(7),
                    dbl(1, 6, &[0]),
                    &[6],
                    vec![
                        "taskhost.exe",
                        "conhost.exe",
                        "explorer.exe",
                        "dwm.exe",
                        "cmd.exe",
                        "sample.tmp",
                    ],
                ),
                ms(
                    Shape::Star(7),
                    dbl(1, 6, &[0]),
                    &[],
                    vec![
                        "taskhost.exe",
                        "conhost.exe",
                        "explorer.exe",
                        "dwm.exe",
                        "cmd.exe",
                        "rundll32.exe",
                    ],
                ),
                ms(
                    Shape::Star(7),
                    dbl(1, 6, &[0]),
                    &[],
                    vec![
                        "taskhost.exe",
                        "conhost.exe",
                        "explorer.exe",
                        "dwm.exe",
                        "cmd.exe",
                        "rundll32.exe",
                    ],
                ),
                ms(
                    Shape::Star(7),
                    dbl(1, 6, &[0]),
                    &[],
                    vec![
                        "taskhost.exe",
                        "conhost.exe",
                        "explorer.exe",
                        "dwm.exe",
                        "cmd.exe",
                        "rundll32.exe",
                    ],
                ),
                ms(
                    Shape::Star(7),
                    dbl(1, 6, &[0]),
                    &[],
                    vec![
                        "taskhost.exe",
                        "conhost.exe",
                        "explorer.exe",
                        "dwm.exe",
                        "cmd.exe",
                        "rundll32.exe",
                    ],
                ),
            ],
        ),
        fam(
            "Shifu",
            vec![ms(
                Shape::T379,
                u(1, 9),
                &[],
                vec![
                    "taskhost.exe",
                    "conhost.exe",
                    "explorer.exe",
                    "dwm.exe",
                    "cmd.exe",
                    "dllhost.exe",
                    "svchost.exe",
                    "iexplore.exe",
                ],
            )],
        ),
        fam("Simda", vec![]),
        fam(
            "Symmi",
            vec![
                chain2(17, "sample.exe"),
                ms(Shape::Chain(3), lst(&[2, 4]), &[], vec!["sample.exe", "explorer.exe"]),
                ms(Shape::Chain(4), u(9, 3), &[], vec!["sample.exe", "svchost.exe", "uhUhRBmr.exe"]),
            ],
        ),
        fam("TeslaCrypt", vec![chain2(2, "sample.exe")]),
        fam(
            "TinyBanker",
            vec![
                ms(Shape::Chain(3), lst(&[1, 5]), &[], vec!["winver.exe", "explorer.exe"]),
                ms(Shape::Chain(3), lst(&[1, 5]), &[], vec!["winver.exe", "explorer.exe"]),
                ms(Shape::Chain(3), lst(&[1, 5]), &[], vec!["winver.exe", "explorer.exe"]),
                ms(Shape::Chain(3), lst(&[1, 5]), &[], vec!["winver.exe", "explorer.exe"]),
                ms(Shape::Chain(3), lst(&[1, 5]), &[], vec!["winver.exe", "explorer.exe"]),
                ms(Shape::Chain(3), lst(&[1, 5]), &[], vec!["winver.exe", "explorer.exe"]),
                ms(
                    Shape::Chain(4),
                    lst(&[1, 5, 1]),
                    &[],
                    vec!["winver.exe", "explorer.exe", "sample.exe"],
                ),
                ms(
                    Shape::T345,
                    cyc(&[1, 5], 5, &[]),
                    &[],
                    vec!["winver.exe", "explorer.exe", "taskhost.exe", "conhost.exe"],
                ),
                ms(
                    Shape::T548Tree,
                    dbl(3, 7, &[0, 1]),
                    &[],
                    vec![
                        "winver.exe",
                        "explorer.exe",
                        "taskhost.exe",
                        "conhost.exe",
                        "dwm.exe",
                        "cmd.exe",
                        "sample.exe",
                    ],
                ),
            ],
        ),
        fam(
            "Urausy",
            vec![
                chain2(15, "sample.exe"),
                ms(
                    Shape::Chain(5),
                    lst(&[20, 21, 24, 20]),
                    &[1],
                    vec!["sample.exe", "explorer.exe", "svchost.exe", "svchost.exe"],
                ),
                ms(
                    Shape::Chain(5),
                    lst(&[20, 21, 24, 21]),
                    &[1],
                    vec!["sample.exe", "explorer.exe", "svchost.exe", "svchost.exe"],
                ),
                ms(
                    Shape::Chain(5),
                    u(31, 4),
                    &[],
                    vec!["sample.exe", "explorer.exe", "svchost.exe", "svchost.exe"],
                ),
            ],
        ),
        fam(
            "Ursnif",
            vec![
                chain2(30, "explorer.exe"),
                ms(
                    Shape::Chain(4),
                    lst(&[31, 16, 32]),
                    &[2],
                    vec!["explorer.exe", "cliciles.exe", "chtborui.exe"],
                ),
                ms(
                    Shape::Chain(4),
                    lst(&[1, 24, 1]),
                    &[2],
                    vec!["explorer.exe", "factura.exe", "7F9A.tmp"],
                ),
            ],
        ),
        fam(
            "VBKrypt",
            vec![
                ms(
                    Shape::T548X,
                    cyc(&[1, 20, 5], 8, &[]),
                    &[],
                    vec![
                        "sample.exe",
                        "taskhost.exe",
                        "conhost.exe",
                        "winver.exe",
                        "explorer.exe",
                        "dwm.exe",
                        "cmd.exe",
                    ],
                ),
                ms(
                    Shape::T548X,
                    cyc(&[5, 20, 1], 8, &[]),
                    &[],
                    vec![
                        "sample.exe",
                        "taskhost.exe",
                        "conhost.exe",
                        "winver.exe",
                        "explorer.exe",
                        "dwm.exe",
                        "cmd.exe",
                    ],
                ),
            ],
        ),
        fam(
            "Vawtrak",
            vec![
                chain2(1, "explorer.exe"),
                ms(
                    Shape::Star(6),
                    u(18, 5),
                    &[],
                    vec!["explorer.exe", "taskhost.exe", "conhost.exe", "dwm.exe", "cmd.exe"],
                ),
                ms(
                    Shape::T357,
                    cyc(&[1, 4], 6, &[]),
                    &[],
                    vec![
                        "explorer.exe",
                        "taskhost.exe",
                        "conhost.exe",
                        "dwm.exe",
                        "cmd.exe",
                        "mainOUT-crypt",
                    ],
                ),
                ms(
                    Shape::T357,
                    cyc(&[1, 4], 6, &[]),
                    &[],
                    vec![
                        "explorer.exe",
                        "taskhost.exe",
                        "conhost.exe",
                        "dwm.exe",
                        "cmd.exe",
                        "svchost.exe",
                    ],
                ),
            ],
        ),
        fam("Wannacry", vec![]),
        fam("Waski", vec![chain2_dropped(16, "sample.tmp")]),
        fam(
            "Zbot",
            vec![
                chain2(1, "sample.exe"),
                ms(Shape::Chain(3), lst(&[15, 16]), &[], vec!["sample.exe", "explorer.exe"]),
                ms(
                    Shape::Chain(5),
                    lst(&[2, 17, 25, 2]),
                    &[3],
                    vec!["sample.exe", "explorer.exe", "kaylli.exe", "svchost.exe"],
                ),
            ],
        ),
        fam("Vilsel", vec![]),
    ]
}

/// Per-family sensitive-API usage cells, (initial, non-initial) per group.
pub fn sensitive_cells() -> BTreeMap<&'static str, SensitiveCells> {
    [
        ("Androm", cells((0, 1), (2, 2), (2, 2), (0, 2))),
        ("Barys", cells((0, 1), (1, 0), (1, 1), (0, 1))),
        ("Bitman", cells((0, 0), (0, 0), (1, 1), (0, 0))),
        ("Buzus", cells((0, 2), (1, 2), (2, 2), (0, 0))),
        ("CTBLocker", cells((0, 0), (3, 3), (3, 3), (0, 3))),
        ("Cerber", cells((0, 1), (1, 0), (1, 1), (1, 0))),
        ("CoinMiner", cells((0, 2), (0, 4), (5, 5), (1, 0))),
        ("Crowti", cells((0, 1), (1, 0), (2, 2), (0, 0))),
        ("Cutwail", cells((0, 0), (2, 0), (2, 2), (0, 0))),
        ("Dorkbot", cells((0, 2), (0, 2), (3, 2), (0, 0))),
        ("Dridex", cells((0, 2), (2, 1), (3, 2), (0, 1))),
        ("Eldorado", cells((0, 0), (0, 0), (1, 1), (0, 0))),
        ("Emotet", cells((0, 8), (5, 3), (7, 9), (0, 6))),
        ("Fareit", cells((0, 1), (0, 1), (1, 1), (0, 0))),
        ("Fynloski", cells((1, 1), (2, 1), (2, 1), (0, 0))),
        ("Gamarue", cells((0, 7), (0, 7), (7, 7), (1, 7))),
        ("Kasidet", cells((0, 0), (3, 3), (3, 3), (0, 0))),
        ("Kovter", cells((0, 1), (1, 2), (2, 3), (0, 0))),
        ("Kryptik", cells((1, 2), (1, 1), (3, 3), (1, 1))),
        ("Madangel", cells((0, 0), (2, 0), (1, 1), (0, 0))),
        ("Midie", cells((0, 1), (1, 2), (4, 2), (0, 1))),
        ("Mira", cells((1, 0), (1, 7), (7, 7), (0, 0))),
        ("Natas", cells((0, 5), (0, 5), (9, 9), (0, 9))),
        ("Ngrbot", cells((0, 1), (1, 0), (1, 0), (0, 0))),
        ("Nimnul", cells((1, 3), (2, 3), (6, 6), (0, 1))),
        ("Nitol", cells((0, 3), (5, 1), (5, 3), (0, 1))),
        ("Nymaim", cells((0, 1), (2, 1), (2, 1), (0, 0))),
        ("Ramnit", cells((1, 5), (5, 7), (7, 7), (0, 1))),
        ("Razy", cells((0, 1), (1, 1), (9, 9), (0, 1))),
        ("Sality", cells((6, 0), (6, 1), (6, 6), (0, 0))),
        ("Shifu", cells((0, 1), (0, 1), (1, 1), (1, 1))),
        ("Symmi", cells((0, 2), (1, 2), (3, 3), (0, 1))),
        ("TeslaCrypt", cells((0, 0), (1, 0), (1, 1), (0, 0))),
        ("TinyBanker", cells((0, 9), (1, 9), (8, 9), (0, 0))),
        ("Urausy", cells((0, 4), (1, 4), (4, 4), (0, 0))),
        ("Ursnif", cells((0, 0), (2, 2), (3, 3), (2, 3))),
        ("VBKrypt", cells((0, 2), (0, 2), (0, 2), (0, 0))),
        ("Vawtrak", cells((0, 1), (4, 3), (4, 4), (3, 4))),
        ("Waski", cells((0, 0), (1, 1), (1, 1), (0, 0))),
        ("Zbot", cells((0, 2), (1, 3), (3, 3), (0, 2))),
    ]
    .into_iter()
    .collect()
}

/// Initial-process wave counts of the 151 multi-process samples, largest
/// first (histogram: 1:41 2:27 3:34 4:14 5:19 6:6 9:2 10:1 12:3 13:2 19:2).
fn initial_wave_values() -> Vec<u32> {
    let mut values = Vec::new();
    for (waves, count) in [
        (19u32, 2u32),
        (13, 2),
        (12, 3),
        (10, 1),
        (9, 2),
        (6, 6),
        (5, 19),
        (4, 14),
        (3, 34),
        (2, 27),
        (1, 41),
    ] {
        values.extend(std::iter::repeat_n(waves, count as usize));
    }
    assert_eq!(values.len(), 151);
    assert_eq!(values.iter().sum::<u32>(), 512);
    values
}

/// Wave counts of the 394 non-initial processes, largest first
/// (histogram: 1:241 2:111 3:18 4:10 5:6 6:4 8:3 11:1).
fn target_wave_values() -> Vec<u32> {
    let mut values = Vec::new();
    for (waves, count) in [
        (11u32, 1u32),
        (8, 3),
        (6, 4),
        (5, 6),
        (4, 10),
        (3, 18),
        (2, 111),
        (1, 241),
    ] {
        values.extend(std::iter::repeat_n(waves, count as usize));
    }
    assert_eq!(values.len(), 394);
    assert_eq!(values.iter().sum::<u32>(), 646);
    values
}

/// (year, samples that year, extra processes contributed by multi samples).
const YEAR_TABLE: [(u32, u32, u32); 7] = [
    (2012, 77, 62),
    (2013, 87, 44),
    (2014, 82, 41),
    (2015, 82, 62),
    (2016, 94, 38),
    (2017, 119, 115),
    (2018, 109, 32),
];

pub const INITIAL_INSTRUCTIONS: u64 = 6157;
pub const TARGET_INSTRUCTIONS: u64 = 2500;
pub const SINGLE_INSTRUCTIONS: u64 = 5000;

const SENSITIVE_APIS: [(&str, &[&str]); 4] = [
    ("internet", &["WSAStartup", "InternetOpen", "HttpOpenRequest", "InternetConnect"]),
    ("registry", &["RegOpenKeyExW", "RegCreateKeyExW", "RegSetValueExW", "RegQueryValueExW", "RegDeleteValueW"]),
    ("file_system", &["DeleteFileW", "MoveFileExW", "FindFirstFileW", "SetFileAttributesW", "GetTempPathW"]),
    ("security", &["ConvertStringSecurityDescriptorToSecurityDescriptor", "InitializeSecurityDescriptor", "SetSecurityDescriptorDacl", "GetSecurityDescriptorSacl"]),
];

#[derive(Debug, Clone)]
struct PlannedSample {
    family: &'static str,
    index: u32,
    spec: Option<MultiSample>,
    initial_waves: u32,
    target_waves: Vec<u32>,
    year: u32,
    /// Per group: (use in initial, use in some non-initial process).
    sensitive: [(bool, bool); 4],
}

impl PlannedSample {
    fn process_count(&self) -> u32 {
        self.spec
            .as_ref()
            .map(|m| m.shape.process_count() as u32)
            .unwrap_or(1)
    }
}

fn plan_corpus() -> Vec<PlannedSample> {
    let specs = family_specs();
    assert_eq!(specs.len(), 65);
    let cells = sensitive_cells();

    let mut samples = Vec::new();
    for family in &specs {
        assert!(family.multi.len() <= 10);
        let cell = cells.get(family.name).copied().unwrap_or_default();
        for (i, spec) in family.multi.iter().enumerate() {
            let i = i as u8;
            let sensitive = [
                (i < cell.internet.0, i < cell.internet.1),
                (i < cell.registry.0, i < cell.registry.1),
                (i < cell.file_system.0, i < cell.file_system.1),
                (i < cell.security.0, i < cell.security.1),
            ];
            samples.push(PlannedSample {
                family: family.name,
                index: i as u32,
                spec: Some(spec.clone()),
                initial_waves: 1,
                target_waves: Vec::new(),
                year: 0,
                sensitive,
            });
        }
        for i in family.multi.len()..10 {
            samples.push(PlannedSample {
                family: family.name,
                index: i as u32,
                spec: None,
                initial_waves: 1,
                target_waves: Vec::new(),
                year: 0,
                sensitive: [(false, false); 4],
            });
        }
    }
    assert_eq!(samples.len(), 650);
    let multi_total: u32 = samples.iter().filter(|s| s.spec.is_some()).count() as u32;
    assert_eq!(multi_total, 151);
    let process_total: u32 = samples.iter().map(|s| s.process_count()).sum();
    assert_eq!(process_total, 1044);

    // Wave assignment: largest counts to the largest samples.
    let mut multi_order: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].spec.is_some())
        .collect();
    multi_order.sort_by_key(|&i| {
        (
            std::cmp::Reverse(samples[i].process_count()),
            samples[i].family,
            samples[i].index,
        )
    });
    let initial_values = initial_wave_values();
    for (&idx, waves) in multi_order.iter().zip(initial_values) {
        samples[idx].initial_waves = waves;
    }
    let target_values = target_wave_values();
    let mut cursor = 0;
    for &idx in &multi_order {
        let targets = samples[idx].process_count() as usize - 1;
        samples[idx].target_waves = target_values[cursor..cursor + targets].to_vec();
        cursor += targets;
    }
    assert_eq!(cursor, 394);

    // Year assignment: per-year extra-process sums close exactly; ties go
    // to the earliest year.
    let mut remaining: Vec<(u32, u32)> = YEAR_TABLE.iter().map(|&(y, _, t)| (y, t)).collect();
    let mut by_extra: Vec<usize> = multi_order.clone();
    by_extra.sort_by_key(|&i| {
        (
            std::cmp::Reverse(samples[i].process_count() - 1),
            samples[i].family,
            samples[i].index,
        )
    });
    for &idx in &by_extra {
        let extra = samples[idx].process_count() - 1;
        let slot = remaining
            .iter_mut()
            .max_by_key(|(y, left)| (*left, std::cmp::Reverse(*y)))
            .expect("years");
        assert!(slot.1 >= extra, "year budget exhausted");
        slot.1 -= extra;
        samples[idx].year = slot.0;
    }
    assert!(remaining.iter().all(|&(_, left)| left == 0));

    // Singles fill the per-year sample counts.
    let mut year_counts: BTreeMap<u32, u32> = YEAR_TABLE.iter().map(|&(y, n, _)| (y, n)).collect();
    for s in samples.iter().filter(|s| s.spec.is_some()) {
        let left = year_counts.get_mut(&s.year).unwrap();
        assert!(*left > 0);
        *left -= 1;
    }
    let mut fill_years: Vec<u32> = Vec::new();
    for (&year, &count) in &year_counts {
        fill_years.extend(std::iter::repeat_n(year, count as usize));
    }
    let mut fill = fill_years.into_iter();
    for s in samples.iter_mut().filter(|s| s.spec.is_none()) {
        s.year = fill.next().expect("single-sample year");
    }
    assert!(fill.next().is_none());

    samples
}

fn split_instructions(total: u64, waves: u32) -> Vec<u64> {
    let mut parts = vec![100u64; waves as usize];
    parts[0] = total - 100 * (waves as u64 - 1);
    parts
}

fn render_sample(sample: &PlannedSample, catalog: &BTreeMap<u32, Vec<String>>, ordinal: usize) -> String {
    let mut b = TraceBuilder::new();
    let pid = |idx: u8| 100 + idx as u32 * 4;

    let initial_pid = pid(0);
    b.process_start(initial_pid, "sample.exe", "C:\\Users\\user\\sample.exe", None);
    b.wave_entry(initial_pid, 0, None);
    for wave in 1..sample.initial_waves {
        b.wave_entry(initial_pid, wave, Some((initial_pid, wave - 1)));
    }

    let Some(spec) = &sample.spec else {
        b.api_call(initial_pid, 0, "GetTickCount", true, None);
        b.instruction_summary(initial_pid, 0, SINGLE_INSTRUCTIONS);
        return b.build();
    };

    let initial_last = sample.initial_waves - 1;
    // Sensitive usage in the initial process.
    for (slot, (init, _)) in sample.sensitive.iter().enumerate() {
        if *init {
            let apis = SENSITIVE_APIS[slot].1;
            b.api_call(initial_pid, initial_last, apis[ordinal % apis.len()], true, None);
        }
    }

    let last_wave = |idx: u8, sample: &PlannedSample| -> u32 {
        if idx == 0 {
            sample.initial_waves - 1
        } else {
            sample.target_waves[idx as usize - 1] - 1
        }
    };

    let mut started = vec![false; spec.shape.process_count() as usize];
    started[0] = true;
    for (edge_idx, &(src, dst)) in spec.shape.edges().iter().enumerate() {
        let (sig, instances) = spec.sigs[edge_idx];
        let src_pid = pid(src);
        let src_wave = last_wave(src, sample);
        let dst_pid = pid(dst);

        if !started[dst as usize] {
            started[dst as usize] = true;
            let name = spec.names[dst as usize - 1];
            let dropped = spec.dropped.contains(&dst);
            let path = if dropped {
                format!("C:\\Users\\user\\AppData\\Local\\Temp\\{dst_pid}\\{name}")
            } else if name == "sample.exe" {
                "C:\\Users\\user\\sample.exe".to_string()
            } else {
                format!("C:\\Windows\\System32\\{name}")
            };
            if dropped {
                b.file_create(src_pid, src_wave, &path);
            }
            let class = spgkit::signatures::derive_access_class(&catalog[&sig]);
            let parent = if class == spgkit::signatures::AccessClass::OpenExisting {
                None
            } else {
                Some(src_pid)
            };
            b.process_start(dst_pid, name, &path, parent);
            let waves = sample.target_waves[dst as usize - 1];
            b.wave_entry(dst_pid, 0, None);
            for wave in 1..waves {
                b.wave_entry(dst_pid, wave, Some((dst_pid, wave - 1)));
            }
            if dst == 1 {
                for (slot, (_, non_init)) in sample.sensitive.iter().enumerate() {
                    if *non_init {
                        let apis = SENSITIVE_APIS[slot].1;
                        b.api_call(dst_pid, 0, apis[ordinal % apis.len()], true, None);
                    }
                }
            }
        }

        for _ in 0..instances {
            for api in &catalog[&sig] {
                b.api_call(src_pid, src_wave, api, true, Some(dst_pid));
            }
        }
        b.cross((src_pid, src_wave), (dst_pid, 0));
    }

    for (idx, chunk) in split_instructions(INITIAL_INSTRUCTIONS, sample.initial_waves)
        .into_iter()
        .enumerate()
    {
        b.instruction_summary(initial_pid, idx as u32, chunk);
    }
    for (t, &waves) in sample.target_waves.iter().enumerate() {
        for (idx, chunk) in split_instructions(TARGET_INSTRUCTIONS, waves).into_iter().enumerate() {
            b.instruction_summary(pid(t as u8 + 1), idx as u32, chunk);
        }
    }
    b.build()
}

#[derive(Debug)]
pub struct GeneratedCorpus {
    pub manifest_path: PathBuf,
    pub samples: usize,
}

/// Write the full corpus (650 traces plus manifest) into `dir`.
pub fn generate_corpus(dir: &Path) -> std::io::Result<GeneratedCorpus> {
    let samples = plan_corpus();
    verify_plan(&samples);

    let catalog: BTreeMap<u32, Vec<String>> = spgkit::signatures::default_catalog()
        .signatures()
        .map(|s| (s.id, s.apis.clone()))
        .collect();

    let traces = dir.join("traces");
    fs::create_dir_all(&traces)?;
    let mut manifest = String::new();
    for (ordinal, sample) in samples.iter().enumerate() {
        let id = sample_id(&format!("{}/{}", sample.family, sample.index));
        let rel = format!("traces/{id}.jsonl");
        fs::write(traces.join(format!("{id}.jsonl")), render_sample(sample, &catalog, ordinal))?;
        manifest.push_str(&serde_json::to_string(&serde_json::json!({
            "sample_id": id,
            "family": sample.family,
            "first_seen_year": sample.year,
            "trace_path": rel,
        })).unwrap());
        manifest.push('\n');
    }
    let manifest_path = dir.join("manifest.jsonl");
    fs::write(&manifest_path, manifest)?;
    Ok(GeneratedCorpus {
        manifest_path,
        samples: samples.len(),
    })
}

/// Structural invariants of the frozen tables, checked before rendering.
fn verify_plan(samples: &[PlannedSample]) {
    let catalog = spgkit::signatures::default_catalog();
    let mut pairs = 0u64;
    let mut instances = 0u64;
    let mut split = (0u64, 0u64, 0u64);
    let mut droppers = 0u64;
    let mut year_extra: BTreeMap<u32, u32> = BTreeMap::new();
    let mut year_samples: BTreeMap<u32, u32> = BTreeMap::new();

    for sample in samples {
        *year_samples.entry(sample.year).or_insert(0) += 1;
        *year_extra.entry(sample.year).or_insert(0) += sample.process_count() - 1;
        let Some(spec) = &sample.spec else { continue };
        pairs += spec.shape.edges().len() as u64;
        droppers += spec.dropped.len() as u64;
        for &(sig, inst) in &spec.sigs {
            instances += inst as u64;
            match catalog.access_class(sig).expect("sig in catalog") {
                spgkit::AccessClass::OpenExisting => split.0 += inst as u64,
                spgkit::AccessClass::LaunchNew => split.1 += inst as u64,
                spgkit::AccessClass::ShellLaunch => split.2 += inst as u64,
                spgkit::AccessClass::Other => {}
            }
        }
    }
    assert_eq!(pairs, 417, "injection pairs");
    assert_eq!(instances, 439, "signature instances");
    assert_eq!(split, (211, 213, 15), "access split");
    assert_eq!(droppers, 52, "dropper propagations");
    for (year, n, extra) in YEAR_TABLE {
        assert_eq!(year_samples[&year], n, "samples in {year}");
        assert_eq!(year_extra[&year], extra, "extra processes in {year}");
    }
}
