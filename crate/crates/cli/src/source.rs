//! Where instances come from: map + scenario files, instance JSON, or the
//! seeded random generator.

use std::fs;
use std::path::PathBuf;

use amapf::grid::{parse_map, parse_scen, random_instance, Instance};
use anyhow::{bail, Context, Result};
use clap::Args;

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// MovingAI map file (use with --scen and --agents)
    #[arg(long, requires_all = ["scen", "agents"])]
    pub map: Option<PathBuf>,
    /// MovingAI scenario file (version 1)
    #[arg(long, requires = "map")]
    pub scen: Option<PathBuf>,
    /// Robots taken from the top of the scenario
    #[arg(long)]
    pub agents: Option<usize>,
    /// Random instance: width, height, obstacle density (0.2 or 20), robots
    #[arg(long, num_args = 4, value_names = ["W", "H", "OD", "N"], conflicts_with_all = ["map", "instance"])]
    pub random: Option<Vec<String>>,
    /// Instance JSON file
    #[arg(long, conflicts_with = "map")]
    pub instance: Option<PathBuf>,
    /// Seed for --random (first seed when several instances are generated)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize)]
pub struct RandomSpec {
    pub width: u32,
    pub height: u32,
    pub density: f64,
    pub robots: usize,
}

impl RandomSpec {
    fn parse(v: &[String]) -> Result<Self> {
        let num = |i: usize, what: &str| -> Result<f64> {
            v[i].parse::<f64>().with_context(|| format!("--random {what} `{}` is not a number", v[i]))
        };
        let mut density = num(2, "OD")?;
        if density >= 1.0 {
            density /= 100.0;
        }
        Ok(RandomSpec {
            width: num(0, "W")? as u32,
            height: num(1, "H")? as u32,
            density,
            robots: num(3, "N")? as usize,
        })
    }

    pub fn generate(&self, seed: u64) -> Result<Instance> {
        random_instance(seed, self.width, self.height, self.density, self.robots)
            .with_context(|| format!("generating random instance with seed {seed}"))
    }

    pub fn label(&self) -> String {
        format!("random-{}x{}-od{}-r{}", self.width, self.height, self.density, self.robots)
    }
}

/// One instance to run, with a label and the seed that produced it.
pub struct Loaded {
    pub id: String,
    pub seed: u64,
    pub instance: Instance,
}

pub enum Source {
    Files(Loaded),
    Random(RandomSpec, u64),
}

impl Source {
    pub fn from_args(a: &SourceArgs) -> Result<Source> {
        if let Some(v) = &a.random {
            return Ok(Source::Random(RandomSpec::parse(v)?, a.seed));
        }
        if let Some(path) = &a.instance {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let instance = Instance::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
            return Ok(Source::Files(Loaded {
                id: path.display().to_string(),
                seed: a.seed,
                instance,
            }));
        }
        if let (Some(map), Some(scen)) = (&a.map, &a.scen) {
            let agents = a.agents.context("--agents is required with --scen")?;
            let text = fs::read_to_string(map).with_context(|| format!("reading {}", map.display()))?;
            let ws = parse_map(&text).with_context(|| format!("parsing {}", map.display()))?;
            let text = fs::read_to_string(scen).with_context(|| format!("reading {}", scen.display()))?;
            let instance = parse_scen(&text, &ws, agents).with_context(|| format!("parsing {}", scen.display()))?;
            return Ok(Source::Files(Loaded {
                id: format!("{}:{agents}", scen.display()),
                seed: a.seed,
                instance,
            }));
        }
        bail!("no instance given: use --random W H OD N, --instance FILE, or --map/--scen/--agents")
    }

    /// `count` instances; file sources always yield their single instance.
    pub fn instances(&self, count: usize) -> Result<Vec<Loaded>> {
        match self {
            Source::Files(l) => Ok(vec![Loaded {
                id: l.id.clone(),
                seed: l.seed,
                instance: l.instance.clone(),
            }]),
            Source::Random(spec, first) => (0..count as u64)
                .map(|k| {
                    let seed = first + k;
                    Ok(Loaded {
                        id: format!("{}-s{seed}", spec.label()),
                        seed,
                        instance: spec.generate(seed)?,
                    })
                })
                .collect(),
        }
    }
}
