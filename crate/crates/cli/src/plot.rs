//! Turns a bench CSV into plot-ready tables: runtime pairs against the
//! baseline per variant, and per-variant runtime distributions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::bench::BenchRow;

#[derive(Debug, Serialize)]
struct ScatterPoint<'a> {
    instance: &'a str,
    seed: u64,
    repeat: u32,
    baseline_ms: f64,
    variant_ms: f64,
    baseline_timeout: bool,
    variant_timeout: bool,
}

#[derive(Debug, Serialize)]
struct Sample<'a> {
    instance: &'a str,
    seed: u64,
    repeat: u32,
    wall_time_ms: f64,
    timed_out: bool,
}

/// Timed-out runs are plotted at their limit.
fn runtime(r: &BenchRow) -> (f64, bool) {
    if r.status == "timeout" {
        (r.timeout_ms as f64, true)
    } else {
        (r.wall_time_ms, false)
    }
}

pub fn read_rows(path: &Path) -> Result<Vec<BenchRow>> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    rd.deserialize()
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("{}: row {} does not match the bench schema", path.display(), i + 1)))
        .collect()
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct Written {
    pub scatter_points: usize,
    pub files: usize,
}

pub fn write_plot_data(rows: &[BenchRow], baseline: &str, out_dir: &Path) -> Result<Written> {
    let mut written = Written::default();
    if rows.is_empty() {
        return Ok(written);
    }
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let mut by_variant: BTreeMap<&str, Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        by_variant.entry(&r.variant).or_default().push(r);
    }
    let key = |r: &BenchRow| (r.instance.clone(), r.seed, r.repeat);
    let base: BTreeMap<_, &BenchRow> = by_variant
        .get(baseline)
        .map(|v| v.iter().map(|r| (key(r), *r)).collect())
        .unwrap_or_default();

    for (variant, runs) in &by_variant {
        let path = out_dir.join(format!("runtime_{variant}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        for r in runs {
            let (wall_time_ms, timed_out) = runtime(r);
            w.serialize(Sample {
                instance: &r.instance,
                seed: r.seed,
                repeat: r.repeat,
                wall_time_ms,
                timed_out,
            })?;
        }
        w.flush()?;
        written.files += 1;

        if *variant == baseline {
            continue;
        }
        let path = out_dir.join(format!("scatter_{variant}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        for r in runs {
            let Some(b) = base.get(&key(r)) else { continue };
            let (baseline_ms, baseline_timeout) = runtime(b);
            let (variant_ms, variant_timeout) = runtime(r);
            w.serialize(ScatterPoint {
                instance: &r.instance,
                seed: r.seed,
                repeat: r.repeat,
                baseline_ms,
                variant_ms,
                baseline_timeout,
                variant_timeout,
            })?;
            written.scatter_points += 1;
        }
        w.flush()?;
        written.files += 1;
    }
    Ok(written)
}
