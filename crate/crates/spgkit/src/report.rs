//! CSV tables and the JSON summary document.
//!
//! One CSV per report table, with documented column schemas and
//! deterministic row order (bins ascending, families alphabetical, years
//! ascending), plus a single `summary.json`.

use std::fs;
use std::path::Path;

use crate::analytics::{Histogram, SampleAnalysis, SensitiveGroup};
use crate::pipeline::CorpusReport;
use crate::signatures::SignatureCatalog;

fn write_histogram(path: &Path, header: &str, hist: &Histogram) -> std::io::Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([header, "samples"])?;
    for (bin, count) in hist {
        writer.write_record([bin.to_string(), count.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.4}")).unwrap_or_default()
}

fn fmt_opt_u32(value: Option<u32>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Write every CSV table plus `summary.json` into `out_dir`.
pub fn write_report(
    out_dir: &Path,
    report: &CorpusReport,
    analyses: &[SampleAnalysis],
    catalog: &SignatureCatalog,
) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;

    write_histogram(
        &out_dir.join("process_count_hist.csv"),
        "processes",
        &report.distributions.process_count,
    )?;
    write_histogram(
        &out_dir.join("process_depth_hist.csv"),
        "process_depth",
        &report.distributions.process_depth,
    )?;
    write_histogram(
        &out_dir.join("spg_width_hist.csv"),
        "spg_width",
        &report.distributions.width,
    )?;
    write_histogram(
        &out_dir.join("wave_count_hist.csv"),
        "waves",
        &report.distributions.wave_count,
    )?;
    write_histogram(
        &out_dir.join("initial_wave_hist.csv"),
        "waves",
        &report.wave_split.initial_hist,
    )?;
    write_histogram(
        &out_dir.join("non_initial_wave_hist.csv"),
        "waves",
        &report.wave_split.non_initial_hist,
    )?;

    {
        let mut writer = csv::Writer::from_path(out_dir.join("family_stats.csv"))?;
        writer.write_record([
            "family",
            "samples",
            "multi",
            "stability",
            "m_ratio",
            "sigma",
            "sigma_eq",
            "s_eq",
            "seq_ratio",
            "family_consistency",
        ])?;
        for f in &report.family_stats {
            writer.write_record([
                f.family.clone(),
                f.samples.to_string(),
                f.multi.to_string(),
                format!("{:.4}", f.stability),
                fmt_opt(f.m_ratio),
                fmt_opt_u32(f.sigma),
                fmt_opt_u32(f.sigma_eq),
                f.s_eq.to_string(),
                fmt_opt(f.seq_ratio),
                format!("{:.4}", f.family_consistency),
            ])?;
        }
        let avg = &report.family_averages;
        writer.write_record([
            "average".to_string(),
            String::new(),
            String::new(),
            format!("{:.4}", avg.stability),
            format!("{:.4}", avg.m_ratio),
            format!("{:.4}", avg.sigma),
            format!("{:.4}", avg.sigma_eq),
            String::new(),
            format!("{:.4}", avg.seq_ratio),
            format!("{:.4}", avg.family_consistency),
        ])?;
        writer.flush()?;
    }

    {
        let mut writer = csv::Writer::from_path(out_dir.join("target_intersections.csv"))?;
        writer.write_record([
            "family",
            "multi",
            "i",
            "i_prime",
            "t",
            "i_over_m",
            "iprime_over_t",
        ])?;
        for row in &report.target_intersections {
            writer.write_record([
                row.family.clone(),
                row.multi.to_string(),
                row.i.to_string(),
                row.i_prime.to_string(),
                row.t.to_string(),
                format!("{:.4}", row.i_over_m),
                format!("{:.4}", row.iprime_over_t),
            ])?;
        }
        writer.flush()?;
    }

    {
        let mut writer = csv::Writer::from_path(out_dir.join("sensitive_api_by_family.csv"))?;
        let mut header = vec!["family".to_string(), "multi".to_string()];
        for group in SensitiveGroup::ALL {
            header.push(format!("{}_initial", group.name()));
            header.push(format!("{}_non_initial", group.name()));
        }
        writer.write_record(&header)?;
        for row in &report.sensitive_usage.rows {
            let mut record = vec![row.family.clone(), row.multi_samples.to_string()];
            for group in SensitiveGroup::ALL {
                let (init, non) = row.usage.get(&group).copied().unwrap_or((0, 0));
                record.push(init.to_string());
                record.push(non.to_string());
            }
            writer.write_record(&record)?;
        }
        let mut total = vec![
            "total".to_string(),
            report.sensitive_usage.total_multi_samples.to_string(),
        ];
        for group in SensitiveGroup::ALL {
            let (init, non) = report
                .sensitive_usage
                .totals
                .get(&group)
                .copied()
                .unwrap_or((0, 0));
            total.push(init.to_string());
            total.push(non.to_string());
        }
        writer.write_record(&total)?;
        writer.flush()?;
    }

    {
        let mut writer = csv::Writer::from_path(out_dir.join("dropper_families.csv"))?;
        writer.write_record(["family", "samples_with_droppers"])?;
        for (family, count) in &report.droppers.per_family_samples {
            writer.write_record([family.clone(), count.to_string()])?;
        }
        writer.flush()?;
    }

    {
        let mut writer = csv::Writer::from_path(out_dir.join("yearly_stats.csv"))?;
        writer.write_record([
            "year",
            "samples",
            "mean_processes",
            "std_processes",
            "distinct_signatures",
            "signatures_first_used",
            "families",
        ])?;
        for row in &report.yearly {
            writer.write_record([
                row.year.to_string(),
                row.samples.to_string(),
                format!("{:.6}", row.mean_processes),
                format!("{:.6}", row.std_processes),
                row.distinct_signatures.to_string(),
                row.signatures_first_used.to_string(),
                row.families.to_string(),
            ])?;
        }
        writer.flush()?;
    }

    {
        // Per-signature usage across the corpus.
        let mut injections: std::collections::BTreeMap<u32, (u64, std::collections::BTreeSet<&str>, std::collections::BTreeSet<&str>)> =
            std::collections::BTreeMap::new();
        for a in analyses {
            for event in &a.injections {
                if let Some(id) = event.signature_id {
                    let entry = injections.entry(id).or_default();
                    entry.0 += 1;
                    entry.1.insert(a.meta.sample_id.as_str());
                    entry.2.insert(a.meta.family.as_str());
                }
            }
        }
        let mut writer = csv::Writer::from_path(out_dir.join("signature_usage.csv"))?;
        writer.write_record(["signature_id", "access_class", "injections", "samples", "families"])?;
        for (id, (count, samples, families)) in &injections {
            let class = catalog
                .access_class(*id)
                .map(|c| format!("{c:?}"))
                .unwrap_or_default();
            writer.write_record([
                id.to_string(),
                class,
                count.to_string(),
                samples.len().to_string(),
                families.len().to_string(),
            ])?;
        }
        writer.flush()?;
    }

    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    fs::write(out_dir.join("summary.json"), json)?;
    Ok(())
}
