//! Cross-method comparison: aggregates per-seed run records from several
//! config directories into a table of return and smoothness statistics, with
//! percent smoothness reduction against a named baseline method.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::evaluation::mean_std;
use crate::runner::{atomic_write, load_records};
use crate::UsageError;

/// One config directory's aggregate across its (successful) seeds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub env: String,
    pub config_hash: String,
    pub n_seeds: usize,
    pub n_failed: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub sm_mean: f64,
    pub sm_std: f64,
    /// Percent smoothness reduction vs the baseline method's mean.
    pub sm_reduction_pct: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub rows: Vec<MethodSummary>,
    /// Index into `rows` of the smoothest method.
    pub best_sm: usize,
}

fn summarize_dir(dir: &Path) -> Result<MethodSummary> {
    let records = load_records(dir)?;
    let first = &records[0];
    for r in &records[1..] {
        if r.method != first.method || r.env != first.env || r.config_hash != first.config_hash {
            return Err(UsageError::new(format!(
                "{} mixes runs from different configs ({}/{} vs {}/{})",
                dir.display(),
                first.method,
                first.config_hash,
                r.method,
                r.config_hash
            ))
            .into());
        }
    }
    let ok: Vec<_> = records.iter().filter(|r| !r.failed).collect();
    if ok.is_empty() {
        anyhow::bail!("{}: every seed failed, nothing to aggregate", dir.display());
    }
    let (return_mean, return_std) = mean_std(&ok.iter().map(|r| r.return_mean).collect::<Vec<_>>());
    let (sm_mean, sm_std) = mean_std(&ok.iter().map(|r| r.sm_mean).collect::<Vec<_>>());
    Ok(MethodSummary {
        method: first.method.clone(),
        env: first.env.clone(),
        config_hash: first.config_hash.clone(),
        n_seeds: ok.len(),
        n_failed: records.len() - ok.len(),
        return_mean,
        return_std,
        sm_mean,
        sm_std,
        sm_reduction_pct: 0.0,
    })
}

/// Builds the comparison from config-level run directories. Each directory
/// contributes one row; `baseline` names the method whose smoothness anchors
/// the reduction percentages.
pub fn build_comparison(dirs: &[PathBuf], baseline: &str) -> Result<Comparison> {
    if dirs.is_empty() {
        return Err(UsageError::new("compare needs at least one run directory").into());
    }
    let mut rows = Vec::with_capacity(dirs.len());
    for dir in dirs {
        rows.push(summarize_dir(dir).with_context(|| format!("summarizing {}", dir.display()))?);
    }
    let base_sm = rows
        .iter()
        .find(|r| r.method == baseline)
        .map(|r| r.sm_mean)
        .ok_or_else(|| {
            let seen: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
            UsageError::new(format!(
                "baseline method '{baseline}' not among compared runs ({})",
                seen.join(", ")
            ))
        })?;
    for row in rows.iter_mut() {
        row.sm_reduction_pct =
            if base_sm == 0.0 { 0.0 } else { (base_sm - row.sm_mean) / base_sm * 100.0 };
    }
    let best_sm = rows
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.sm_mean.total_cmp(&b.sm_mean))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(Comparison { baseline: baseline.to_string(), rows, best_sm })
}

/// Full-precision CSV so reductions can be recomputed from the file itself.
pub fn comparison_csv(c: &Comparison) -> String {
    let mut out = String::from(
        "method,env,config_hash,n_seeds,n_failed,return_mean,return_std,sm_mean,sm_std,sm_reduction_pct\n",
    );
    for r in &c.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.env,
            r.config_hash,
            r.n_seeds,
            r.n_failed,
            r.return_mean,
            r.return_std,
            r.sm_mean,
            r.sm_std,
            r.sm_reduction_pct
        ));
    }
    out
}

fn fmt_cell(mean: f64, std: f64, bold: bool) -> String {
    let body = format!("{mean:.3} ({std:.3})");
    if bold {
        format!("**{body}**")
    } else {
        body
    }
}

/// Plain-text table with aligned columns; the smoothest method's Sm cell is
/// bolded with `**`.
pub fn comparison_text(c: &Comparison) -> String {
    let header =
        ["method", "env", "seeds", "return mean (std)", "sm mean (std)", "sm reduction"];
    let mut grid: Vec<[String; 6]> = vec![header.map(str::to_string)];
    for (i, r) in c.rows.iter().enumerate() {
        grid.push([
            r.method.clone(),
            r.env.clone(),
            format!("{}{}", r.n_seeds, if r.n_failed > 0 { "!" } else { "" }),
            fmt_cell(r.return_mean, r.return_std, false),
            fmt_cell(r.sm_mean, r.sm_std, i == c.best_sm),
            format!("{:.1}%", r.sm_reduction_pct),
        ]);
    }
    let widths: Vec<usize> =
        (0..6).map(|j| grid.iter().map(|row| row[j].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in grid.iter().enumerate() {
        let line: Vec<String> =
            row.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out.push_str(&format!("baseline: {}\n", c.baseline));
    out
}

/// Markdown rendering of the same table.
pub fn comparison_markdown(c: &Comparison) -> String {
    let mut out = String::from(
        "| method | env | seeds | return mean (std) | sm mean (std) | sm reduction |\n\
         |---|---|---|---|---|---|\n",
    );
    for (i, r) in c.rows.iter().enumerate() {
        out.push_str(&format!(
            "| {} | {} | {}{} | {} | {} | {:.1}% |\n",
            r.method,
            r.env,
            r.n_seeds,
            if r.n_failed > 0 { "!" } else { "" },
            fmt_cell(r.return_mean, r.return_std, false),
            fmt_cell(r.sm_mean, r.sm_std, i == c.best_sm),
            r.sm_reduction_pct
        ));
    }
    out.push_str(&format!("\nBaseline: `{}`.\n", c.baseline));
    out
}

/// Builds the comparison and writes `comparison.csv` + `comparison.md` into
/// `out_dir`; returns the comparison for display.
pub fn cmd_compare(dirs: &[PathBuf], baseline: &str, out_dir: &Path) -> Result<Comparison> {
    let comparison = build_comparison(dirs, baseline)?;
    atomic_write(&out_dir.join("comparison.csv"), comparison_csv(&comparison).as_bytes())?;
    atomic_write(&out_dir.join("comparison.md"), comparison_markdown(&comparison).as_bytes())?;
    Ok(comparison)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::RunRecord;

    fn write_record(dir: &Path, seed: u64, method: &str, hash: &str, ret: f64, sm: f64) {
        let record = RunRecord {
            config_hash: hash.to_string(),
            method: method.to_string(),
            env: "pendulum".to_string(),
            seed,
            return_mean: ret,
            return_std: 0.1,
            sm_mean: sm,
            sm_std: 0.01,
            wall_time_s: 1.0,
            checkpoint: String::new(),
            metrics_csv: String::new(),
            failed: false,
            error: None,
            smoothness: None,
        };
        let sub = dir.join(seed.to_string());
        std::fs::create_dir_all(&sub).unwrap();
        std::fs::write(
            sub.join("report.json"),
            serde_json::to_string_pretty(&record).unwrap(),
        )
        .unwrap();
    }

    fn two_method_tree(root: &Path) -> (PathBuf, PathBuf) {
        let base = root.join("aaa");
        let asap = root.join("bbb");
        // Table-style figures: baseline sm 1.709, method sm 0.179.
        write_record(&base, 0, "base", "aaa", 100.0, 1.809);
        write_record(&base, 1, "base", "aaa", 110.0, 1.609);
        write_record(&asap, 0, "asap", "bbb", 95.0, 0.181);
        write_record(&asap, 1, "asap", "bbb", 105.0, 0.177);
        (base, asap)
    }

    #[test]
    fn reduction_matches_hand_computation_and_formats_to_one_decimal() {
        let tmp = tempfile::tempdir().unwrap();
        let (base, asap) = two_method_tree(tmp.path());
        let c = build_comparison(&[base, asap], "base").unwrap();
        assert!((c.rows[0].sm_mean - 1.709).abs() < 1e-12);
        assert!((c.rows[1].sm_mean - 0.179).abs() < 1e-12);
        let expected = (c.rows[0].sm_mean - c.rows[1].sm_mean) / c.rows[0].sm_mean * 100.0;
        assert!((c.rows[1].sm_reduction_pct - expected).abs() < 1e-12);
        assert_eq!(c.rows[0].sm_reduction_pct, 0.0);
        assert_eq!(c.best_sm, 1);
        let text = comparison_text(&c);
        assert!(text.contains("89.5%"), "{text}");
        assert!(text.contains("**0.179 (0.002)**"), "{text}");
        let md = comparison_markdown(&c);
        assert!(md.contains("| asap |"));
        assert!(md.contains("89.5%"));
    }

    #[test]
    fn csv_supports_recomputing_the_percentages() {
        let tmp = tempfile::tempdir().unwrap();
        let (base, asap) = two_method_tree(tmp.path());
        let c = cmd_compare(&[base, asap], "base", tmp.path()).unwrap();
        let csv = std::fs::read_to_string(tmp.path().join("comparison.csv")).unwrap();
        let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
        let sm: Vec<f64> = rows.iter().map(|r| r[7].parse().unwrap()).collect();
        let pct: Vec<f64> = rows.iter().map(|r| r[9].parse().unwrap()).collect();
        for i in 0..rows.len() {
            let recomputed = (sm[0] - sm[i]) / sm[0] * 100.0;
            assert!((recomputed - pct[i]).abs() < 1e-9);
        }
        assert!(tmp.path().join("comparison.md").is_file());
        assert_eq!(c.rows.len(), 2);
    }

    #[test]
    fn single_method_against_itself_reduces_zero_percent() {
        let tmp = tempfile::tempdir().unwrap();
        let base = tmp.path().join("aaa");
        write_record(&base, 0, "base", "aaa", 50.0, 0.4);
        let c = build_comparison(&[base], "base").unwrap();
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.rows[0].sm_reduction_pct, 0.0);
        assert_eq!(c.best_sm, 0);
    }

    #[test]
    fn missing_baseline_is_a_usage_error() {
        let tmp = tempfile::tempdir().unwrap();
        let asap = tmp.path().join("bbb");
        write_record(&asap, 0, "asap", "bbb", 95.0, 0.2);
        let err = build_comparison(&[asap], "base").unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
        assert!(err.to_string().contains("base"));
    }

    #[test]
    fn mixed_method_directory_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("aaa");
        write_record(&dir, 0, "base", "aaa", 50.0, 0.4);
        write_record(&dir, 1, "asap", "bbb", 60.0, 0.3);
        let err = build_comparison(&[dir], "base").unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn failed_seeds_are_excluded_but_counted() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("aaa");
        write_record(&dir, 0, "base", "aaa", 100.0, 1.0);
        write_record(&dir, 1, "base", "aaa", 999.0, 9.0);
        // Mark seed 1 failed by rewriting its record.
        let path = dir.join("1/report.json");
        let mut record: RunRecord =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        record.failed = true;
        std::fs::write(&path, serde_json::to_string(&record).unwrap()).unwrap();
        let c = build_comparison(&[dir], "base").unwrap();
        assert_eq!(c.rows[0].n_seeds, 1);
        assert_eq!(c.rows[0].n_failed, 1);
        assert_eq!(c.rows[0].sm_mean, 1.0);
    }
}
