//! Cross-run statistics: `compare` over finished runs and parallel `sweep`s.

use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::WorldConfig;
use crate::harness::{run, RunError, RunSummary, VariantId};

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("no run directories given")]
    Empty,
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{path} ran scenario {found}, but {first} ran {expected}; refusing to compare")]
    ScenarioMismatch {
        path: PathBuf,
        first: PathBuf,
        expected: String,
        found: String,
    },
}

/// Median and interquartile range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Spread {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Linearly interpolated quantile of sorted data (`p` in `[0, 1]`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn spread(values: &[f64]) -> Option<Spread> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Spread {
        median: quantile(&v, 0.5),
        q1: quantile(&v, 0.25),
        q3: quantile(&v, 0.75),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantStats {
    pub variant: VariantId,
    pub runs: usize,
    pub final_rmse: Option<Spread>,
    pub loop_closure_pct: Option<Spread>,
    pub mean_nees: Option<Spread>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub scenario_hash: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<VariantStats>,
}

impl CompareTable {
    pub fn row(&self, v: VariantId) -> Option<&VariantStats> {
        self.rows.iter().find(|r| r.variant == v)
    }
}

fn cell(s: Option<Spread>) -> String {
    match s {
        Some(s) => format!("{:>10.4} {:>10.4}", s.median, s.iqr()),
        None => format!("{:>10} {:>10}", "-", "-"),
    }
}

impl fmt::Display for CompareTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} ({} runs)", &self.scenario_hash[..12.min(self.scenario_hash.len())], self.seeds.len())?;
        writeln!(
            f,
            "{:<14} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "variant", "rmse_med", "rmse_iqr", "loop%_med", "loop%_iqr", "nees_med", "nees_iqr"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<14} {} {} {}",
                r.variant.as_str(),
                cell(r.final_rmse),
                cell(r.loop_closure_pct),
                cell(r.mean_nees)
            )?;
        }
        Ok(())
    }
}

pub fn read_summary(dir: &Path) -> Result<RunSummary, CompareError> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|e| CompareError::Read {
        path: path.clone(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| CompareError::Read {
        path,
        message: e.to_string(),
    })
}

/// Statistics over runs of one scenario. Variants absent from any run are left out.
pub fn compare_summaries(runs: &[(PathBuf, RunSummary)]) -> Result<CompareTable, CompareError> {
    let (first_path, first) = runs.first().ok_or(CompareError::Empty)?;
    for (path, s) in &runs[1..] {
        if s.scenario_hash != first.scenario_hash {
            return Err(CompareError::ScenarioMismatch {
                path: path.clone(),
                first: first_path.clone(),
                expected: first.scenario_hash.clone(),
                found: s.scenario_hash.clone(),
            });
        }
    }
    let mut rows = Vec::new();
    for v in VariantId::ALL {
        let per_run: Vec<_> = runs.iter().filter_map(|(_, s)| s.variants.get(&v)).collect();
        if per_run.len() != runs.len() {
            continue;
        }
        let collect = |f: fn(&crate::harness::VariantSummary) -> Option<f64>| -> Vec<f64> {
            per_run.iter().filter_map(|s| f(s)).collect()
        };
        rows.push(VariantStats {
            variant: v,
            runs: per_run.len(),
            final_rmse: spread(&collect(|s| s.final_rmse)),
            loop_closure_pct: spread(&collect(|s| s.loop_closure_pct)),
            mean_nees: spread(&collect(|s| s.mean_nees)),
        });
    }
    Ok(CompareTable {
        scenario_hash: first.scenario_hash.clone(),
        seeds: runs.iter().map(|(_, s)| s.seed).collect(),
        rows,
    })
}

pub fn compare(dirs: &[PathBuf]) -> Result<CompareTable, CompareError> {
    let runs = dirs
        .iter()
        .map(|d| read_summary(d).map(|s| (d.clone(), s)))
        .collect::<Result<Vec<_>, _>>()?;
    compare_summaries(&runs)
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("seed {seed}: {source}")]
    Run {
        seed: u64,
        #[source]
        source: RunError,
    },
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Parse `a..b` (end exclusive).
pub fn parse_seed_range(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected START..END, got `{s}`"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("start of `{s}`: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("end of `{s}`: {e}"))?;
    if b <= a {
        return Err(format!("empty seed range `{s}`"));
    }
    Ok(a..b)
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Run every seed in parallel into `out/seed_<n>`, then compare them. The
/// table is also written to `out/compare.json`.
pub fn sweep(config: &WorldConfig, seeds: Range<u64>, out: &Path) -> Result<CompareTable, SweepError> {
    let results: Vec<_> = seeds
        .clone()
        .into_par_iter()
        .map(|seed| {
            let mut c = config.clone();
            c.seed = seed;
            let dir = seed_dir(out, seed);
            run(&c, &dir)
                .map(|s| (dir, s))
                .map_err(|source| SweepError::Run { seed, source })
        })
        .collect();
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let table = compare_summaries(&runs)?;
    let path = out.join("compare.json");
    let text = serde_json::to_string_pretty(&table).expect("table serializes");
    fs::write(&path, text + "\n").map_err(|source| SweepError::Io { path, source })?;
    Ok(table)
}
