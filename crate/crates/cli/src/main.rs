//! `amapf`: solve anonymous MAPF instances, run benchmark matrices, cross-check
//! against the brute-force oracle, validate solutions and emit plot data.

mod bench;
mod plot;
mod source;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use amapf::assignment::CostMatrix;
use amapf::cbs::{solve, SolutionReport, SolveError, Status, Variant};
use amapf::grid::{random_instance, Instance};
use amapf::kbest::AssignmentGenerator;
use amapf::oracle::{brute_optimal, OracleError};
use amapf::pathfinding::LowLevel;
use amapf::validate::validate;
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use source::{Source, SourceArgs};

const EXIT_ERROR: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Parser)]
#[command(name = "amapf", version, about = "Optimal anonymous multi-agent pathfinding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn positive_secs(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a positive number of seconds")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print the solution JSON
    Solve {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value = "h1m1p1")]
        variant: Variant,
        /// Seconds before giving up
        #[arg(long, value_parser = positive_secs)]
        timeout: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Print the cost matrix after the first assignment to stderr
        #[arg(long)]
        dump_matrix: bool,
    },
    /// Run instances x variants x repeats and write one row per run
    Bench {
        #[command(flatten)]
        source: SourceArgs,
        /// Random instances to generate (seeds --seed, --seed+1, ...)
        #[arg(long)]
        instances: Option<usize>,
        /// Variant to run; repeat the flag for several (default: all eight)
        #[arg(long = "variant")]
        variants: Vec<Variant>,
        #[arg(long, default_value_t = 1)]
        repeat: u32,
        /// Seconds per run (default depends on the robot count)
        #[arg(long, value_parser = positive_secs)]
        timeout: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Named preset; replaces the instance source flags
        #[arg(long)]
        preset: Option<String>,
        /// Presets file (default: the built-in presets)
        #[arg(long)]
        presets: Option<PathBuf>,
    },
    /// Compare every variant with the brute-force optimum on small instances
    OracleCheck {
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        min_side: u32,
        #[arg(long, default_value_t = 8)]
        max_side: u32,
        #[arg(long, value_delimiter = ',', default_value = "3,4")]
        robots: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2")]
        densities: Vec<f64>,
        #[arg(long, value_parser = positive_secs, default_value = "60")]
        timeout: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Add one to every solver cost before comparing
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Re-check a solution JSON against its instance
    Validate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Runtime pairs and distributions from a bench CSV
    Plotdata {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "h0m0p0")]
        baseline: Variant,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn dump_matrix(inst: &Instance) {
    let mut low = LowLevel::new(inst);
    let mut gen = AssignmentGenerator::new(CostMatrix::manhattan(inst));
    match gen.first(&mut low) {
        Some(a) => {
            eprint!("{}", gen.matrix());
            let pairs: Vec<String> = a.edges().map(|(r, g)| format!("R{}G{}", r + 1, g + 1)).collect();
            eprintln!("first assignment: {} (cost {})", pairs.join(" "), a.cost);
        }
        None => eprintln!("no complete matching"),
    }
}

fn cmd_solve(
    source: &SourceArgs,
    variant: Variant,
    timeout: Option<f64>,
    out: Option<&Path>,
    format: Format,
    matrix: bool,
) -> Result<u8> {
    let loaded = Source::from_args(source)?.instances(1)?.remove(0);
    if matrix {
        dump_matrix(&loaded.instance);
    }
    let timeout = timeout.map_or_else(|| bench::default_timeout(loaded.instance.num_robots()), Duration::from_secs_f64);
    let result = solve(&loaded.instance, variant, Some(timeout));
    let code = match &result {
        Ok(_) => 0,
        Err(SolveError::Infeasible(_)) => EXIT_INFEASIBLE,
        Err(SolveError::Timeout(_)) => EXIT_TIMEOUT,
    };
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&SolutionReport::new(variant, &result))? + "\n",
        Format::Csv => {
            let row = bench::run_one(&loaded, variant, 0, timeout);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.serialize(row)?;
            String::from_utf8(w.into_inner()?)?
        }
    };
    emit(out, &text)?;
    Ok(code)
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    source: &SourceArgs,
    instances: Option<usize>,
    variants: Vec<Variant>,
    repeat: u32,
    timeout: Option<f64>,
    out: Option<PathBuf>,
    format: Format,
    preset: Option<&str>,
    presets: Option<&Path>,
) -> Result<u8> {
    let mut plan = bench::Plan {
        source: Source::Random(
            source::RandomSpec {
                width: 0,
                height: 0,
                density: 0.0,
                robots: 0,
            },
            0,
        ),
        instances: instances.unwrap_or(1),
        variants,
        repeat,
        timeout: timeout.map(Duration::from_secs_f64),
        out,
        format,
    };
    if let Some(name) = preset {
        let all = bench::load_presets(presets)?;
        let Some(p) = all.get(name) else {
            let names: Vec<String> = all
                .iter()
                .map(|(n, p)| if p.description.is_empty() { n.clone() } else { format!("{n} ({})", p.description) })
                .collect();
            bail!("unknown preset `{name}`; available: {}", names.join(", "));
        };
        if p.long_running {
            eprintln!("note: preset `{name}` is long running");
        }
        plan.source = Source::Random(p.random, p.seed);
        plan.instances = instances.unwrap_or(p.instances);
        if plan.variants.is_empty() {
            plan.variants = p.variants.clone().unwrap_or_default();
        }
        if plan.timeout.is_none() {
            plan.timeout = p.timeout.map(Duration::from_secs_f64);
        }
    } else {
        plan.source = Source::from_args(source)?;
    }
    if plan.variants.is_empty() {
        plan.variants = Variant::all().collect();
    }
    if plan.repeat == 0 {
        bail!("--repeat must be at least 1");
    }
    let rows = bench::run(plan)?;
    eprintln!("{rows} runs");
    Ok(0)
}

#[derive(Serialize)]
struct OracleLine {
    instance: usize,
    seed: u64,
    width: u32,
    height: u32,
    density: f64,
    robots: usize,
    oracle: Option<u64>,
    costs: Vec<(Variant, Option<u64>)>,
    pass: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    problems: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_oracle_check(
    count: usize,
    seed: u64,
    min_side: u32,
    max_side: u32,
    robots: &[usize],
    densities: &[f64],
    timeout: f64,
    out: Option<&Path>,
    inject_fault: bool,
) -> Result<u8> {
    if min_side == 0 || min_side > max_side || robots.is_empty() || densities.is_empty() {
        bail!("empty instance range");
    }
    if max_side > amapf::oracle::MAX_JOINT_SIDE || robots.iter().any(|&r| r > amapf::oracle::MAX_JOINT_ROBOTS) {
        bail!(
            "the oracle handles at most {} robots on {}x{}",
            amapf::oracle::MAX_JOINT_ROBOTS,
            amapf::oracle::MAX_JOINT_SIDE,
            amapf::oracle::MAX_JOINT_SIDE
        );
    }
    let span = (max_side - min_side + 1) as usize;
    let timeout = Duration::from_secs_f64(timeout);

    let check = |k: usize| -> Result<OracleLine> {
        let side = min_side + (k % span) as u32;
        let r = robots[k / span % robots.len()];
        let od = densities[k / (span * robots.len()) % densities.len()];
        let s = seed + k as u64;
        let inst = random_instance(s, side, side, od, r)?;
        let oracle = brute_optimal(&inst, None);
        let mut line = OracleLine {
            instance: k,
            seed: s,
            width: side,
            height: side,
            density: od,
            robots: r,
            oracle: oracle.as_ref().ok().map(|o| o.cost),
            costs: Vec::new(),
            pass: true,
            problems: Vec::new(),
        };
        for v in Variant::all() {
            let got = solve(&inst, v, Some(timeout));
            let cost = got.as_ref().ok().map(|s| s.cost + u64::from(inject_fault));
            line.costs.push((v, cost));
            let problem = match (&oracle, &got) {
                (Ok(o), Ok(sol)) => {
                    let bad = validate(&inst, &sol.matching, &sol.paths, Some(sol.cost));
                    if cost != Some(o.cost) {
                        Some(format!("{v}: cost {} but optimum {}", cost.unwrap_or_default(), o.cost))
                    } else {
                        bad.first().map(|b| format!("{v}: {b}"))
                    }
                }
                (Err(OracleError::InfeasibleWithinCap(cap)), Ok(sol)) if sol.cost <= *cap => {
                    Some(format!("{v}: solved at {} where the oracle found nothing within {cap}", sol.cost))
                }
                (Err(OracleError::InfeasibleWithinCap(_)), _) => None,
                (Err(OracleError::NoMatching), Err(SolveError::Infeasible(_))) => None,
                (Err(OracleError::TooLarge(m)), _) => bail!("instance {k}: {m}"),
                (o, g) => Some(format!(
                    "{v}: oracle {:?}, solver {}",
                    o.as_ref().map(|o| o.cost),
                    g.as_ref().map_or_else(|e| e.to_string(), |s| s.cost.to_string())
                )),
            };
            if let Some(p) = problem {
                line.pass = false;
                line.problems.push(p);
            }
        }
        Ok(line)
    };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(bench::threads()?).build()?;
    let lines: Vec<OracleLine> = pool.install(|| (0..count).into_par_iter().map(check).collect::<Result<_>>())?;
    let mut text = String::new();
    for l in &lines {
        text += &serde_json::to_string(l)?;
        text.push('\n');
    }
    emit(out, &text)?;
    let failed = lines.iter().filter(|l| !l.pass).count();
    eprintln!("{} of {} instances agree with the oracle", lines.len() - failed, lines.len());
    Ok(if failed == 0 { 0 } else { EXIT_CHECK_FAILED })
}

#[derive(Serialize)]
struct ValidationReport {
    pass: bool,
    violations: Vec<String>,
}

fn cmd_validate(instance: &Path, solution: &Path, format: Format) -> Result<u8> {
    let text = fs::read_to_string(instance).with_context(|| format!("reading {}", instance.display()))?;
    let inst = Instance::from_json(&text).with_context(|| format!("parsing {}", instance.display()))?;
    let text = fs::read_to_string(solution).with_context(|| format!("reading {}", solution.display()))?;
    let report: SolutionReport =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", solution.display()))?;

    let violations: Vec<String> = if report.status != Status::Solved {
        vec![format!("status is {:?}, not solved", report.status).to_lowercase()]
    } else {
        match report.matching() {
            None => vec!["assignment lists a robot twice or skips one".into()],
            Some(m) => validate(&inst, &m, &report.paths, report.cost)
                .iter()
                .map(ToString::to_string)
                .collect(),
        }
    };
    let pass = violations.is_empty();
    match format {
        Format::Json => {
            let r = ValidationReport { pass, violations };
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Format::Csv => {
            if pass {
                println!("PASS");
            }
            for v in &violations {
                println!("FAIL {v}");
            }
        }
    }
    Ok(if pass { 0 } else { EXIT_CHECK_FAILED })
}

fn cmd_plotdata(input: &Path, out_dir: &Path, baseline: Variant) -> Result<u8> {
    let rows = plot::read_rows(input)?;
    let w = plot::write_plot_data(&rows, &baseline.to_string(), out_dir)?;
    eprintln!("{} files, {} scatter points", w.files, w.scatter_points);
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve {
            source,
            variant,
            timeout,
            out,
            format,
            dump_matrix,
        } => cmd_solve(&source, variant, timeout, out.as_deref(), format, dump_matrix),
        Command::Bench {
            source,
            instances,
            variants,
            repeat,
            timeout,
            out,
            format,
            preset,
            presets,
        } => cmd_bench(
            &source,
            instances,
            variants,
            repeat,
            timeout,
            out,
            format,
            preset.as_deref(),
            presets.as_deref(),
        ),
        Command::OracleCheck {
            count,
            seed,
            min_side,
            max_side,
            robots,
            densities,
            timeout,
            out,
            inject_fault,
        } => cmd_oracle_check(
            count,
            seed,
            min_side,
            max_side,
            &robots,
            &densities,
            timeout,
            out.as_deref(),
            inject_fault,
        ),
        Command::Validate {
            instance,
            solution,
            format,
        } => cmd_validate(&instance, &solution, format),
        Command::Plotdata {
            input,
            out_dir,
            baseline,
        } => cmd_plotdata(&input, &out_dir, baseline),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
