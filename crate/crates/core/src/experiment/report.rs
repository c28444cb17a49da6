//! Aggregation of per-run result files into the summary, table and plot data.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::runner::RunFile;
use crate::error::{Error, Result};
use crate::train::{Aggregate, Stat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub arch: String,
    pub mitigation: String,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub orig_auc: Stat,
    pub gen_auc: Stat,
    pub fned: Stat,
    pub fped: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn row(&self, arch: &str, mitigation: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.arch == arch && r.mitigation == mitigation)
    }
}

/// One row per (architecture, mitigation), runs ordered by experiment name
/// and seed before averaging.
pub fn summarize(files: &[RunFile]) -> Summary {
    let mut groups: BTreeMap<(&str, &str), Vec<&RunFile>> = BTreeMap::new();
    for f in files {
        groups.entry((&f.arch, &f.mitigation)).or_default().push(f);
    }
    let rows = groups
        .into_iter()
        .map(|((arch, mitigation), mut runs)| {
            runs.sort_by(|a, b| (&a.experiment, a.result.seed).cmp(&(&b.experiment, b.result.seed)));
            let agg = Aggregate::of(runs.iter().map(|r| &r.result.report));
            SummaryRow {
                arch: arch.to_string(),
                mitigation: mitigation.to_string(),
                runs: runs.len(),
                seeds: runs.iter().map(|r| r.result.seed).collect(),
                orig_auc: agg.orig_auc,
                gen_auc: agg.gen_auc,
                fned: agg.fned,
                fped: agg.fped,
            }
        })
        .collect();
    Summary { rows }
}

pub fn table_csv(summary: &Summary) -> String {
    let mut out = String::from(
        "arch,mitigation,runs,orig_auc,orig_auc_std,gen_auc,gen_auc_std,fned,fned_std,fped,fped_std\n",
    );
    for r in &summary.rows {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            r.arch,
            r.mitigation,
            r.runs,
            r.orig_auc.mean,
            r.orig_auc.std,
            r.gen_auc.mean,
            r.gen_auc.std,
            r.fned.mean,
            r.fned.std,
            r.fped.mean,
            r.fped.std
        ));
    }
    out
}

/// Long-format `metric arch mitigation mean std` rows for plotting.
pub fn plot_tsv(summary: &Summary) -> String {
    let mut out = String::from("metric\tarch\tmitigation\tmean\tstd\n");
    for r in &summary.rows {
        for (metric, s) in [("orig_auc", r.orig_auc), ("gen_auc", r.gen_auc), ("fned", r.fned), ("fped", r.fped)] {
            out.push_str(&format!("{metric}\t{}\t{}\t{}\t{}\n", r.arch, r.mitigation, s.mean, s.std));
        }
    }
    out
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes `summary.json`, `table.csv` and `plot.tsv` into `dir`.
pub fn write_outputs(dir: &Path, summary: &Summary) -> Result<()> {
    write_atomic(&dir.join("summary.json"), &(serde_json::to_string_pretty(summary)? + "\n"))?;
    write_atomic(&dir.join("table.csv"), &table_csv(summary))?;
    write_atomic(&dir.join("plot.tsv"), &plot_tsv(summary))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "json")
            && path.parent().and_then(|p| p.file_name()).is_some_and(|n| n == "runs")
        {
            out.push(path);
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Collected {
    pub runs: Vec<RunFile>,
    /// Files that could not be read, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Every `runs/*.json` file below `dir`.
pub fn collect_runs(dir: &Path) -> Result<Collected> {
    let mut paths = Vec::new();
    walk(dir, &mut paths)?;
    paths.sort();
    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    for p in paths {
        let parsed = fs::read_to_string(&p)
            .map_err(Error::from)
            .and_then(|s| serde_json::from_str::<RunFile>(&s).map_err(Error::from));
        match parsed {
            Ok(r) => runs.push(r),
            Err(e) => skipped.push((p, e.to_string())),
        }
    }
    Ok(Collected { runs, skipped })
}

/// Re-aggregates every run below `dir` and rewrites the summary files there.
pub fn cmd_report(dir: &Path) -> Result<(Summary, Vec<(PathBuf, String)>)> {
    let collected = collect_runs(dir)?;
    if collected.runs.is_empty() {
        return Err(Error::Config(format!("no run results found under {}", dir.display())));
    }
    let summary = summarize(&collected.runs);
    write_outputs(dir, &summary)?;
    Ok((summary, collected.skipped))
}
