//! Corpus analytics: per-sample records and every per-family, corpus-wide
//! and temporal statistic derived from them.
//!
//! All aggregations are deterministic: maps are ordered, rows sort by family
//! name then year, and per-sample partials merge associatively so corpus
//! runs may fan out across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::signatures::InjectionEvent;
use crate::spg::SpgMetrics;
use crate::trace::SampleMeta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitiveGroup {
    Internet,
    Registry,
    FileSystem,
    Security,
}

impl SensitiveGroup {
    pub const ALL: [SensitiveGroup; 4] = [
        SensitiveGroup::Internet,
        SensitiveGroup::Registry,
        SensitiveGroup::FileSystem,
        SensitiveGroup::Security,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SensitiveGroup::Internet => "internet",
            SensitiveGroup::Registry => "registry",
            SensitiveGroup::FileSystem => "file_system",
            SensitiveGroup::Security => "security",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GroupsError {
    #[error("line {0}: malformed sensitive-group record: {1}")]
    Malformed(u64, String),
    #[error("line {0}: unknown group name {1:?}")]
    UnknownGroup(u64, String),
    #[error("api {0:?} appears in more than one group")]
    Overlap(String),
    #[error("i/o error reading groups: {0}")]
    Io(#[from] std::io::Error),
}

/// Pairwise-disjoint sets of sensitive API names, keyed by group.
#[derive(Debug, Clone, Default)]
pub struct SensitiveApiGroups {
    groups: BTreeMap<SensitiveGroup, BTreeSet<String>>,
}

impl SensitiveApiGroups {
    pub fn group_of(&self, api: &str) -> Option<SensitiveGroup> {
        self.groups
            .iter()
            .find(|(_, apis)| apis.contains(api))
            .map(|(g, _)| *g)
    }

    pub fn apis(&self, group: SensitiveGroup) -> Option<&BTreeSet<String>> {
        self.groups.get(&group)
    }
}

#[derive(Debug, Deserialize)]
struct RawGroup {
    group: String,
    apis: Vec<String>,
}

pub fn load_groups<R: BufRead>(reader: R) -> Result<SensitiveApiGroups, GroupsError> {
    let mut groups: BTreeMap<SensitiveGroup, BTreeSet<String>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawGroup = serde_json::from_str(&line)
            .map_err(|e| GroupsError::Malformed(line_no, e.to_string()))?;
        let group = match raw.group.as_str() {
            "internet" => SensitiveGroup::Internet,
            "registry" => SensitiveGroup::Registry,
            "file_system" => SensitiveGroup::FileSystem,
            "security" => SensitiveGroup::Security,
            other => return Err(GroupsError::UnknownGroup(line_no, other.to_string())),
        };
        groups.entry(group).or_default().extend(raw.apis);
    }
    let mut seen: BTreeMap<&str, SensitiveGroup> = BTreeMap::new();
    for (group, apis) in &groups {
        for api in apis {
            if let Some(prev) = seen.insert(api, *group) {
                if prev != *group {
                    return Err(GroupsError::Overlap(api.clone()));
                }
            }
        }
    }
    Ok(SensitiveApiGroups { groups })
}

pub fn load_groups_bytes(bytes: &[u8]) -> Result<SensitiveApiGroups, GroupsError> {
    load_groups(std::io::BufReader::new(bytes))
}

/// The sensitive-API groups shipped with the repository.
pub fn default_groups() -> SensitiveApiGroups {
    load_groups_bytes(include_bytes!("../../../config/sensitive_groups.jsonl"))
        .expect("embedded groups are valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessActivity {
    pub pid: u32,
    pub image_name: String,
    pub is_initial: bool,
    pub wave_count: u32,
    pub unique_instructions: u64,
    pub sensitive_api_usage: BTreeMap<SensitiveGroup, BTreeSet<String>>,
}

/// Post-pipeline record for one analyzed sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleAnalysis {
    pub meta: SampleMeta,
    pub metrics: SpgMetrics,
    pub injections: Vec<InjectionEvent>,
    pub per_process: Vec<ProcessActivity>,
    pub signature_set: BTreeSet<u32>,
    /// Processes removed by false-positive filtering.
    pub fp_removed: Vec<u32>,
}

impl SampleAnalysis {
    pub fn is_multi_process(&self) -> bool {
        self.metrics.process_count > 1
    }

    pub fn initial(&self) -> &ProcessActivity {
        self.per_process
            .iter()
            .find(|p| p.is_initial)
            .expect("exactly one initial process")
    }

    pub fn non_initial(&self) -> impl Iterator<Item = &ProcessActivity> {
        self.per_process.iter().filter(|p| !p.is_initial)
    }

    /// Names of propagation targets (non-initial processes), as a set.
    pub fn target_names(&self) -> BTreeSet<&str> {
        self.non_initial().map(|p| p.image_name.as_str()).collect()
    }

    /// Whether the propagation into `pid` went through a dropped file.
    pub fn is_dropper_target(&self, pid: u32) -> bool {
        self.injections
            .iter()
            .any(|i| i.target_pid == pid && i.via_dropped_file)
    }

    /// Distinct (source, target) pairs across this sample's injections.
    pub fn injection_pair_count(&self) -> u64 {
        self.injections
            .iter()
            .map(|i| (i.source_pid, i.target_pid))
            .collect::<BTreeSet<_>>()
            .len() as u64
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("family {family:?} has {multi} multi-process samples; subset enumeration budget is {budget}")]
    SubsetBudgetExceeded {
        family: String,
        multi: u32,
        budget: u32,
    },
}

pub type Histogram = BTreeMap<u32, u32>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distributions {
    pub process_count: Histogram,
    pub process_depth: Histogram,
    pub width: Histogram,
    pub wave_count: Histogram,
    pub multi_process_count: u32,
    pub multi_process_rate: f64,
}

pub fn corpus_distributions(analyses: &[SampleAnalysis]) -> Result<Distributions, AnalyticsError> {
    if analyses.is_empty() {
        return Err(AnalyticsError::EmptyCorpus);
    }
    let mut dist = Distributions {
        process_count: Histogram::new(),
        process_depth: Histogram::new(),
        width: Histogram::new(),
        wave_count: Histogram::new(),
        multi_process_count: 0,
        multi_process_rate: 0.0,
    };
    for a in analyses {
        *dist.process_count.entry(a.metrics.process_count).or_insert(0) += 1;
        *dist.process_depth.entry(a.metrics.process_depth).or_insert(0) += 1;
        *dist.width.entry(a.metrics.width as u32).or_insert(0) += 1;
        *dist.wave_count.entry(a.metrics.wave_count).or_insert(0) += 1;
        if a.is_multi_process() {
            dist.multi_process_count += 1;
        }
    }
    dist.multi_process_rate = dist.multi_process_count as f64 / analyses.len() as f64;
    Ok(dist)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveSplit {
    pub initial_hist: Histogram,
    pub non_initial_hist: Histogram,
    pub initial_mean: Option<f64>,
    pub non_initial_mean: Option<f64>,
}

/// Wave distribution of initial vs non-initial processes, restricted to
/// multi-process samples.
pub fn wave_split(analyses: &[SampleAnalysis]) -> WaveSplit {
    let mut initial_hist = Histogram::new();
    let mut non_initial_hist = Histogram::new();
    let (mut init_sum, mut init_n) = (0u64, 0u64);
    let (mut non_sum, mut non_n) = (0u64, 0u64);
    for a in analyses.iter().filter(|a| a.is_multi_process()) {
        let init = a.initial();
        *initial_hist.entry(init.wave_count).or_insert(0) += 1;
        init_sum += init.wave_count as u64;
        init_n += 1;
        for p in a.non_initial() {
            *non_initial_hist.entry(p.wave_count).or_insert(0) += 1;
            non_sum += p.wave_count as u64;
            non_n += 1;
        }
    }
    WaveSplit {
        initial_hist,
        non_initial_hist,
        initial_mean: (init_n > 0).then(|| init_sum as f64 / init_n as f64),
        non_initial_mean: (non_n > 0).then(|| non_sum as f64 / non_n as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstructionSplit {
    pub initial_mean: Option<f64>,
    pub non_initial_mean: Option<f64>,
}

/// Mean unique instructions in initial vs non-initial processes of
/// multi-process samples.
pub fn instruction_split(analyses: &[SampleAnalysis]) -> InstructionSplit {
    let (mut init_sum, mut init_n) = (0u64, 0u64);
    let (mut non_sum, mut non_n) = (0u64, 0u64);
    for a in analyses.iter().filter(|a| a.is_multi_process()) {
        init_sum += a.initial().unique_instructions;
        init_n += 1;
        for p in a.non_initial() {
            non_sum += p.unique_instructions;
            non_n += 1;
        }
    }
    InstructionSplit {
        initial_mean: (init_n > 0).then(|| init_sum as f64 / init_n as f64),
        non_initial_mean: (non_n > 0).then(|| non_sum as f64 / non_n as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SensitiveUsageRow {
    pub family: String,
    pub multi_samples: u32,
    /// Per group: (samples using it in the initial process, samples using it
    /// in some non-initial process).
    pub usage: BTreeMap<SensitiveGroup, (u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitiveUsageTable {
    pub rows: Vec<SensitiveUsageRow>,
    pub totals: BTreeMap<SensitiveGroup, (u32, u32)>,
    pub total_multi_samples: u32,
    /// Mean unique sensitive functions per process: (initial, non-initial).
    pub per_process_average: BTreeMap<SensitiveGroup, (f64, f64)>,
}

/// Per-family sensitive-API usage over multi-process samples.
pub fn sensitive_api_table(analyses: &[SampleAnalysis]) -> SensitiveUsageTable {
    let mut rows: BTreeMap<String, SensitiveUsageRow> = BTreeMap::new();
    let mut totals: BTreeMap<SensitiveGroup, (u32, u32)> = BTreeMap::new();
    let mut fn_sums: BTreeMap<SensitiveGroup, (u64, u64)> = BTreeMap::new();
    let (mut init_procs, mut non_procs) = (0u64, 0u64);
    let mut total_multi = 0;

    for group in SensitiveGroup::ALL {
        totals.insert(group, (0, 0));
        fn_sums.insert(group, (0, 0));
    }

    for a in analyses.iter().filter(|a| a.is_multi_process()) {
        total_multi += 1;
        let row = rows
            .entry(a.meta.family.clone())
            .or_insert_with(|| SensitiveUsageRow {
                family: a.meta.family.clone(),
                multi_samples: 0,
                usage: SensitiveGroup::ALL.iter().map(|g| (*g, (0, 0))).collect(),
            });
        row.multi_samples += 1;

        init_procs += 1;
        non_procs += a.non_initial().count() as u64;
        for group in SensitiveGroup::ALL {
            let used_init = !a
                .initial()
                .sensitive_api_usage
                .get(&group)
                .map(|s| s.is_empty())
                .unwrap_or(true);
            let used_non = a.non_initial().any(|p| {
                p.sensitive_api_usage
                    .get(&group)
                    .is_some_and(|s| !s.is_empty())
            });
            let cell = row.usage.get_mut(&group).unwrap();
            if used_init {
                cell.0 += 1;
            }
            if used_non {
                cell.1 += 1;
            }
            let sums = fn_sums.get_mut(&group).unwrap();
            sums.0 += a
                .initial()
                .sensitive_api_usage
                .get(&group)
                .map(|s| s.len() as u64)
                .unwrap_or(0);
            sums.1 += a
                .non_initial()
                .map(|p| {
                    p.sensitive_api_usage
                        .get(&group)
                        .map(|s| s.len() as u64)
                        .unwrap_or(0)
                })
                .sum::<u64>();
        }
    }

    for row in rows.values() {
        for (group, (init, non)) in &row.usage {
            let cell = totals.get_mut(group).unwrap();
            cell.0 += init;
            cell.1 += non;
        }
    }

    let per_process_average = fn_sums
        .iter()
        .map(|(g, (init_sum, non_sum))| {
            let init_avg = if init_procs > 0 {
                *init_sum as f64 / init_procs as f64
            } else {
                0.0
            };
            let non_avg = if non_procs > 0 {
                *non_sum as f64 / non_procs as f64
            } else {
                0.0
            };
            (*g, (init_avg, non_avg))
        })
        .collect();

    SensitiveUsageTable {
        rows: rows.into_values().collect(),
        totals,
        total_multi_samples: total_multi,
        per_process_average,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyStats {
    pub family: String,
    pub samples: u32,
    pub multi: u32,
    /// max(M, S-M) / S.
    pub stability: f64,
    /// M / S; only defined for families with multi-process samples.
    pub m_ratio: Option<f64>,
    /// Distinct signatures across the family's multi-process samples.
    pub sigma: Option<u32>,
    /// Largest group of multi-process samples sharing an identical signature set.
    pub sigma_eq: Option<u32>,
    /// max(sigma_eq, S - M).
    pub s_eq: u32,
    pub seq_ratio: Option<f64>,
    /// s_eq / S.
    pub family_consistency: f64,
}

pub fn family_stats(analyses: &[SampleAnalysis]) -> Vec<FamilyStats> {
    let mut by_family: BTreeMap<&str, Vec<&SampleAnalysis>> = BTreeMap::new();
    for a in analyses {
        by_family.entry(&a.meta.family).or_default().push(a);
    }
    by_family
        .into_iter()
        .map(|(family, samples)| {
            let s = samples.len() as u32;
            let multi: Vec<_> = samples.iter().filter(|a| a.is_multi_process()).collect();
            let m = multi.len() as u32;
            let stability = m.max(s - m) as f64 / s as f64;
            if m == 0 {
                return FamilyStats {
                    family: family.to_string(),
                    samples: s,
                    multi: 0,
                    stability,
                    m_ratio: None,
                    sigma: None,
                    sigma_eq: None,
                    s_eq: s,
                    seq_ratio: None,
                    family_consistency: 1.0,
                };
            }
            let sigma = multi
                .iter()
                .flat_map(|a| a.signature_set.iter().copied())
                .collect::<BTreeSet<_>>()
                .len() as u32;
            let mut set_groups: BTreeMap<&BTreeSet<u32>, u32> = BTreeMap::new();
            for a in &multi {
                *set_groups.entry(&a.signature_set).or_insert(0) += 1;
            }
            let sigma_eq = set_groups.values().copied().max().unwrap_or(0);
            let s_eq = sigma_eq.max(s - m);
            FamilyStats {
                family: family.to_string(),
                samples: s,
                multi: m,
                stability,
                m_ratio: Some(m as f64 / s as f64),
                sigma: Some(sigma),
                sigma_eq: Some(sigma_eq),
                s_eq,
                seq_ratio: Some(sigma_eq as f64 / m as f64),
                family_consistency: s_eq as f64 / s as f64,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyAverages {
    pub stability: f64,
    pub m_ratio: f64,
    pub sigma: f64,
    pub sigma_eq: f64,
    pub seq_ratio: f64,
    pub family_consistency: f64,
}

/// Column averages over families; ratio columns average only the families
/// where they are defined.
pub fn family_stats_averages(stats: &[FamilyStats]) -> FamilyAverages {
    let n = stats.len().max(1) as f64;
    let mean_defined = |values: Vec<f64>| {
        if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        }
    };
    FamilyAverages {
        stability: stats.iter().map(|f| f.stability).sum::<f64>() / n,
        m_ratio: mean_defined(stats.iter().filter_map(|f| f.m_ratio).collect()),
        sigma: mean_defined(stats.iter().filter_map(|f| f.sigma.map(f64::from)).collect()),
        sigma_eq: mean_defined(stats.iter().filter_map(|f| f.sigma_eq.map(f64::from)).collect()),
        seq_ratio: mean_defined(stats.iter().filter_map(|f| f.seq_ratio).collect()),
        family_consistency: stats.iter().map(|f| f.family_consistency).sum::<f64>() / n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetIntersectionStats {
    pub family: String,
    pub multi: u32,
    /// Size of the group of multi-process samples whose shared target-name
    /// coverage (group size x shared names) is maximal.
    pub i: u32,
    /// Shared-target count times I.
    pub i_prime: u32,
    /// Total propagations in the family.
    pub t: u32,
    pub i_over_m: f64,
    pub iprime_over_t: f64,
}

pub const SUBSET_BUDGET: u32 = 20;

/// Largest intersection of propagation targets amongst each family's
/// multi-process samples. All non-empty subsets with a common non-empty
/// target-name intersection are scored by (subset size x shared names);
/// ties prefer more shared names.
pub fn target_intersection_stats(
    analyses: &[SampleAnalysis],
) -> Result<Vec<TargetIntersectionStats>, AnalyticsError> {
    let mut by_family: BTreeMap<&str, Vec<&SampleAnalysis>> = BTreeMap::new();
    for a in analyses.iter().filter(|a| a.is_multi_process()) {
        by_family.entry(&a.meta.family).or_default().push(a);
    }
    let mut out = Vec::new();
    for (family, samples) in by_family {
        let m = samples.len() as u32;
        if m > SUBSET_BUDGET {
            return Err(AnalyticsError::SubsetBudgetExceeded {
                family: family.to_string(),
                multi: m,
                budget: SUBSET_BUDGET,
            });
        }
        let sets: Vec<BTreeSet<&str>> = samples.iter().map(|a| a.target_names()).collect();
        let t: u32 = samples.iter().map(|a| a.non_initial().count() as u32).sum();

        let mut best: Option<(u64, u32, u32)> = None; // (coverage, shared, size)
        for mask in 1u32..(1 << m) {
            let mut iter = (0..m).filter(|i| mask & (1 << i) != 0);
            let first = iter.next().unwrap() as usize;
            let mut shared = sets[first].clone();
            for i in iter {
                shared = shared.intersection(&sets[i as usize]).copied().collect();
                if shared.is_empty() {
                    break;
                }
            }
            if shared.is_empty() {
                continue;
            }
            let size = mask.count_ones();
            let coverage = size as u64 * shared.len() as u64;
            let candidate = (coverage, shared.len() as u32, size);
            if best.is_none_or(|b| (candidate.0, candidate.1) > (b.0, b.1)) {
                best = Some(candidate);
            }
        }
        let (_, shared, size) = best.expect("multi-process samples have targets");
        let i_prime = shared * size;
        out.push(TargetIntersectionStats {
            family: family.to_string(),
            multi: m,
            i: size,
            i_prime,
            t,
            i_over_m: size as f64 / m as f64,
            iprime_over_t: i_prime as f64 / t as f64,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearlyStats {
    pub year: u32,
    pub samples: u32,
    pub mean_processes: f64,
    /// Population standard deviation of per-sample process counts.
    pub std_processes: f64,
    pub distinct_signatures: u32,
    /// Signatures whose earliest use across the corpus falls in this year.
    pub signatures_first_used: u32,
    pub families: u32,
}

pub fn evolution_stats(analyses: &[SampleAnalysis]) -> Vec<YearlyStats> {
    let mut by_year: BTreeMap<u32, Vec<&SampleAnalysis>> = BTreeMap::new();
    for a in analyses {
        by_year.entry(a.meta.first_seen_year).or_default().push(a);
    }
    let mut first_use: BTreeMap<u32, u32> = BTreeMap::new(); // sig -> year
    for a in analyses {
        for &sig in &a.signature_set {
            first_use
                .entry(sig)
                .and_modify(|y| *y = (*y).min(a.meta.first_seen_year))
                .or_insert(a.meta.first_seen_year);
        }
    }
    by_year
        .into_iter()
        .map(|(year, samples)| {
            let n = samples.len() as f64;
            let mean = samples
                .iter()
                .map(|a| a.metrics.process_count as f64)
                .sum::<f64>()
                / n;
            let var = samples
                .iter()
                .map(|a| {
                    let d = a.metrics.process_count as f64 - mean;
                    d * d
                })
                .sum::<f64>()
                / n;
            let distinct = samples
                .iter()
                .flat_map(|a| a.signature_set.iter().copied())
                .collect::<BTreeSet<_>>()
                .len() as u32;
            let first = first_use.values().filter(|&&y| y == year).count() as u32;
            let families = samples
                .iter()
                .map(|a| a.meta.family.as_str())
                .collect::<BTreeSet<_>>()
                .len() as u32;
            YearlyStats {
                year,
                samples: samples.len() as u32,
                mean_processes: mean,
                std_processes: var.sqrt(),
                distinct_signatures: distinct,
                signatures_first_used: first,
                families,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropperStats {
    /// Propagations whose target image was dropped by the malware.
    pub dropper_propagations: u32,
    pub non_dropper_propagations: u32,
    pub total_propagations: u32,
    /// Per family: distinct samples with at least one dropper propagation.
    pub per_family_samples: BTreeMap<String, u32>,
}

pub fn dropper_stats(analyses: &[SampleAnalysis]) -> DropperStats {
    let mut dropper = 0;
    let mut total = 0;
    let mut per_family: BTreeMap<String, u32> = BTreeMap::new();
    for a in analyses {
        let mut sample_has_dropper = false;
        for p in a.non_initial() {
            total += 1;
            if a.is_dropper_target(p.pid) {
                dropper += 1;
                sample_has_dropper = true;
            }
        }
        if sample_has_dropper {
            *per_family.entry(a.meta.family.clone()).or_insert(0) += 1;
        }
    }
    DropperStats {
        dropper_propagations: dropper,
        non_dropper_propagations: total - dropper,
        total_propagations: total,
        per_family_samples: per_family,
    }
}
