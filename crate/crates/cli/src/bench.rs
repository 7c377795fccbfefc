//! Benchmark matrix: instances x variants x repeats, one CSV row per run.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use amapf::cbs::{solve, SolveError, Variant};
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::source::{Loaded, RandomSpec, Source};
use crate::Format;

pub const DEFAULT_PRESETS: &str = include_str!("../presets.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: String,
    pub seed: u64,
    pub robots: usize,
    pub variant: String,
    pub repeat: u32,
    pub status: String,
    pub cost: Option<u64>,
    pub wall_time_ms: f64,
    pub timeout_ms: u64,
    pub nodes_expanded: u64,
    pub roots_created: u64,
    pub conflicts_found: u64,
    pub conflicts_registered: u64,
    pub assignments_computed: u64,
    pub assignments_postponed: u64,
    pub assignments_revoked: u64,
    pub astar_calls: u64,
    pub cache_hits: u64,
    pub actual_entries: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Preset {
    #[serde(default)]
    pub description: String,
    #[serde(flatten)]
    pub random: RandomSpec,
    pub instances: usize,
    #[serde(default)]
    pub seed: u64,
    pub variants: Option<Vec<Variant>>,
    pub timeout: Option<f64>,
    #[serde(default)]
    pub long_running: bool,
}

pub fn load_presets(path: Option<&Path>) -> Result<BTreeMap<String, Preset>> {
    let text = match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => DEFAULT_PRESETS.to_string(),
    };
    toml::from_str(&text).context("parsing presets")
}

/// Per-run limit when none is given: 15 minutes from 50 robots, 30 from 100.
pub fn default_timeout(robots: usize) -> Duration {
    match robots {
        r if r >= 100 => Duration::from_secs(1800),
        r if r >= 50 => Duration::from_secs(900),
        _ => Duration::from_secs(60),
    }
}

pub fn threads() -> Result<usize> {
    match std::env::var("AMAPF_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => bail!("AMAPF_THREADS must be a positive integer, got `{v}`"),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn run_one(l: &Loaded, variant: Variant, repeat: u32, timeout: Duration) -> BenchRow {
    let result = solve(&l.instance, variant, Some(timeout));
    let (status, cost, stats) = match &result {
        Ok(s) => ("solved", Some(s.cost), &s.stats),
        Err(e @ SolveError::Infeasible(_)) => ("infeasible", None, e.stats()),
        Err(e @ SolveError::Timeout(_)) => ("timeout", None, e.stats()),
    };
    BenchRow {
        instance: l.id.clone(),
        seed: l.seed,
        robots: l.instance.num_robots(),
        variant: variant.to_string(),
        repeat,
        status: status.into(),
        cost,
        wall_time_ms: stats.wall_time_ms,
        timeout_ms: timeout.as_millis() as u64,
        nodes_expanded: stats.nodes_expanded,
        roots_created: stats.roots_created,
        conflicts_found: stats.conflicts_found,
        conflicts_registered: stats.conflicts_registered,
        assignments_computed: stats.assignments_computed,
        assignments_postponed: stats.assignments_postponed,
        assignments_revoked: stats.assignments_revoked,
        astar_calls: stats.astar_calls,
        cache_hits: stats.cache_hits,
        actual_entries: stats.actual_entries,
    }
}

enum Sink {
    Csv(Box<csv::Writer<Box<dyn Write + Send>>>),
    Json(Box<dyn Write + Send>),
}

impl Sink {
    fn write(&mut self, row: &BenchRow) -> Result<()> {
        match self {
            Sink::Csv(w) => {
                w.serialize(row)?;
                w.flush()?;
            }
            Sink::Json(w) => {
                serde_json::to_writer(&mut *w, row)?;
                writeln!(w)?;
                w.flush()?;
            }
        }
        Ok(())
    }
}

pub struct Plan {
    pub source: Source,
    pub instances: usize,
    pub variants: Vec<Variant>,
    pub repeat: u32,
    pub timeout: Option<Duration>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

/// Runs the matrix; returns the number of rows written. Rows are written as
/// runs finish, so their order depends on scheduling.
pub fn run(plan: Plan) -> Result<usize> {
    let loaded = plan.source.instances(plan.instances)?;
    let out: Box<dyn Write + Send> = match &plan.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout()),
    };
    let sink = Mutex::new(match plan.format {
        Format::Csv => Sink::Csv(Box::new(csv::Writer::from_writer(out))),
        Format::Json => Sink::Json(out),
    });

    let jobs: Vec<(usize, Variant, u32)> = (0..loaded.len())
        .flat_map(|i| plan.variants.iter().flat_map(move |&v| (0..plan.repeat).map(move |r| (i, v, r))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads()?).build()?;
    pool.install(|| {
        jobs.par_iter().try_for_each(|&(i, v, r)| {
            let l = &loaded[i];
            let timeout = plan.timeout.unwrap_or_else(|| default_timeout(l.instance.num_robots()));
            let row = run_one(l, v, r, timeout);
            sink.lock().expect("writer poisoned").write(&row)
        })
    })?;
    Ok(jobs.len())
}
