//! Workspaces, instances and single-goal distance fields.
//!
//! Cells are addressed as `(x, y)` with `x` the column and `y` the row, origin
//! at the top-left corner, the same convention the MovingAI benchmark files
//! use. Robots move in the four cardinal directions or wait; every primitive
//! costs one timestep.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cost in timesteps.
pub type Cost = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub const fn new(x: u32, y: u32) -> Self {
        Cell { x, y }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Serialize for Cell {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x, self.y].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [x, y] = <[u32; 2]>::deserialize(d)?;
        Ok(Cell { x, y })
    }
}

pub fn manhattan(a: Cell, b: Cell) -> Cost {
    (a.x.abs_diff(b.x) + a.y.abs_diff(b.y)) as Cost
}

/// A rectangular grid with blocked cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    width: u32,
    height: u32,
    obstacles: BTreeSet<Cell>,
    blocked: Vec<bool>,
}

impl Workspace {
    pub fn new(width: u32, height: u32, obstacles: impl IntoIterator<Item = Cell>) -> Result<Self> {
        let mut blocked = vec![false; width as usize * height as usize];
        let mut set = BTreeSet::new();
        for c in obstacles {
            if c.x >= width || c.y >= height {
                return Err(Error::Invalid(format!("obstacle {c} out of bounds")));
            }
            blocked[(c.y * width + c.x) as usize] = true;
            set.insert(c);
        }
        Ok(Workspace {
            width,
            height,
            obstacles: set,
            blocked,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn obstacles(&self) -> &BTreeSet<Cell> {
        &self.obstacles
    }

    pub fn num_cells(&self) -> usize {
        self.blocked.len()
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    /// Row-major index of an in-bounds cell.
    #[inline]
    pub fn index(&self, c: Cell) -> usize {
        (c.y * self.width + c.x) as usize
    }

    #[inline]
    pub fn cell(&self, index: usize) -> Cell {
        let w = self.width as usize;
        Cell::new((index % w) as u32, (index / w) as u32)
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.blocked[self.index(c)]
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.num_cells())
            .filter(|&i| !self.blocked[i])
            .map(|i| self.cell(i))
    }

    /// Free 4-neighbours of `c`.
    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        let candidates = [
            (c.y > 0).then(|| Cell::new(c.x, c.y - 1)),
            (c.x > 0).then(|| Cell::new(c.x - 1, c.y)),
            Some(Cell::new(c.x + 1, c.y)),
            Some(Cell::new(c.x, c.y + 1)),
        ];
        candidates
            .into_iter()
            .flatten()
            .filter(move |&n| self.is_free(n))
    }

    /// Renders the workspace in MovingAI `.map` format.
    pub fn to_map_string(&self) -> String {
        let mut out = format!(
            "type octile\nheight {}\nwidth {}\nmap\n",
            self.height, self.width
        );
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(if self.is_free(Cell::new(x, y)) { '.' } else { '@' });
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a MovingAI `.map` file.
pub fn parse_map(text: &str) -> Result<Workspace> {
    let mut lines = text.lines().enumerate();
    let mut height = None;
    let mut width = None;
    let mut saw_type = false;

    for (no, line) in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let value = parts.next();
        let bad = |what: &str| Error::Parse {
            line: no + 1,
            msg: format!("{what}: `{line}`"),
        };
        match key {
            "type" => saw_type = true,
            "height" => {
                height = Some(value.and_then(|v| v.parse::<u32>().ok()).ok_or_else(|| bad("bad height"))?)
            }
            "width" => {
                width = Some(value.and_then(|v| v.parse::<u32>().ok()).ok_or_else(|| bad("bad width"))?)
            }
            "map" => break,
            _ => return Err(bad("unexpected header line")),
        }
    }
    if !saw_type {
        return Err(Error::Parse {
            line: 1,
            msg: "missing `type` header".into(),
        });
    }
    let (width, height) = match (width, height) {
        (Some(w), Some(h)) => (w, h),
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "missing `width` or `height` header".into(),
            })
        }
    };

    let mut obstacles = Vec::new();
    let mut rows = 0u32;
    let mut last_line = 0;
    for (no, line) in lines {
        last_line = no + 1;
        let line = line.trim_end_matches(['\r', '\n']);
        if rows == height {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::Parse {
                line: no + 1,
                msg: format!("more than {height} map rows"),
            });
        }
        let chars: Vec<char> = line.chars().collect();
        if chars.len() != width as usize {
            return Err(Error::Parse {
                line: no + 1,
                msg: format!("row has {} cells, expected {width}", chars.len()),
            });
        }
        for (x, ch) in chars.into_iter().enumerate() {
            match ch {
                '.' | 'G' => {}
                '@' | 'O' | 'T' => obstacles.push(Cell::new(x as u32, rows)),
                other => {
                    return Err(Error::Parse {
                        line: no + 1,
                        msg: format!("unknown map character `{other}`"),
                    })
                }
            }
        }
        rows += 1;
    }
    if rows != height {
        return Err(Error::Parse {
            line: last_line + 1,
            msg: format!("expected {height} map rows, found {rows}"),
        });
    }
    Workspace::new(width, height, obstacles)
}

/// A problem instance: robots at `starts`, interchangeable goals at `goals`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub workspace: Workspace,
    pub starts: Vec<Cell>,
    pub goals: Vec<Cell>,
}

impl Instance {
    pub fn new(workspace: Workspace, starts: Vec<Cell>, goals: Vec<Cell>) -> Result<Self> {
        let inst = Instance {
            workspace,
            starts,
            goals,
        };
        inst.check()?;
        Ok(inst)
    }

    pub fn num_robots(&self) -> usize {
        self.starts.len()
    }

    pub fn num_goals(&self) -> usize {
        self.goals.len()
    }

    fn check(&self) -> Result<()> {
        if self.starts.len() > self.goals.len() {
            return Err(Error::Invalid(format!(
                "{} robots but only {} goals",
                self.starts.len(),
                self.goals.len()
            )));
        }
        for (what, cells) in [("start", &self.starts), ("goal", &self.goals)] {
            let mut seen = BTreeSet::new();
            for &c in cells {
                if !self.workspace.in_bounds(c) {
                    return Err(Error::Invalid(format!("{what} {c} out of bounds")));
                }
                if !self.workspace.is_free(c) {
                    return Err(Error::Invalid(format!("{what} {c} is on an obstacle")));
                }
                if !seen.insert(c) {
                    return Err(Error::Invalid(format!("duplicate {what} {c}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&InstanceJson::from(self)).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: InstanceJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    width: u32,
    height: u32,
    obstacles: Vec<Cell>,
    starts: Vec<Cell>,
    goals: Vec<Cell>,
}

impl From<&Instance> for InstanceJson {
    fn from(inst: &Instance) -> Self {
        InstanceJson {
            width: inst.workspace.width,
            height: inst.workspace.height,
            obstacles: inst.workspace.obstacles.iter().copied().collect(),
            starts: inst.starts.clone(),
            goals: inst.goals.clone(),
        }
    }
}

impl TryFrom<InstanceJson> for Instance {
    type Error = Error;

    fn try_from(raw: InstanceJson) -> Result<Self> {
        let ws = Workspace::new(raw.width, raw.height, raw.obstacles)?;
        Instance::new(ws, raw.starts, raw.goals)
    }
}

impl Serialize for Instance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        InstanceJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        InstanceJson::deserialize(d)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

/// Builds an instance from the first `n` rows of a MovingAI `.scen` (version 1) file.
pub fn parse_scen(text: &str, ws: &Workspace, n: usize) -> Result<Instance> {
    let mut starts = Vec::with_capacity(n);
    let mut goals = Vec::with_capacity(n);
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    match lines.next() {
        Some((_, l)) if l.trim().starts_with("version") => {}
        Some((no, l)) => {
            return Err(Error::Parse {
                line: no + 1,
                msg: format!("expected `version 1`, found `{l}`"),
            })
        }
        None if n == 0 => return Instance::new(ws.clone(), starts, goals),
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty scenario file".into(),
            })
        }
    }

    for (no, line) in lines.take(n) {
        let fields: Vec<&str> = line.split('\t').collect();
        let fields = if fields.len() >= 8 {
            fields
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() < 8 {
            return Err(Error::Parse {
                line: no + 1,
                msg: format!("expected 9 fields, found {}", fields.len()),
            });
        }
        let num = |i: usize| {
            fields[i].trim().parse::<u32>().map_err(|_| Error::Parse {
                line: no + 1,
                msg: format!("field {} is not a coordinate: `{}`", i + 1, fields[i]),
            })
        };
        let start = Cell::new(num(4)?, num(5)?);
        let goal = Cell::new(num(6)?, num(7)?);
        for c in [start, goal] {
            if !ws.in_bounds(c) {
                return Err(Error::Parse {
                    line: no + 1,
                    msg: format!("cell {c} out of bounds"),
                });
            }
            if !ws.is_free(c) {
                return Err(Error::Parse {
                    line: no + 1,
                    msg: format!("cell {c} is on an obstacle"),
                });
            }
        }
        starts.push(start);
        goals.push(goal);
    }
    if starts.len() < n {
        return Err(Error::Invalid(format!(
            "scenario has {} rows, {n} requested",
            starts.len()
        )));
    }
    Instance::new(ws.clone(), starts, goals)
}

/// Exact unconstrained move counts from every cell to `goal`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    goal: Cell,
    width: u32,
    dist: Vec<u32>,
}

impl DistanceField {
    pub const UNREACHABLE: u32 = u32::MAX;

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn get(&self, c: Cell) -> Option<Cost> {
        let d = self.dist[(c.y * self.width + c.x) as usize];
        (d != Self::UNREACHABLE).then_some(d as Cost)
    }

    #[inline]
    pub(crate) fn raw(&self, index: usize) -> u32 {
        self.dist[index]
    }
}

pub fn true_distance_field(ws: &Workspace, goal: Cell) -> DistanceField {
    let mut dist = vec![DistanceField::UNREACHABLE; ws.num_cells()];
    let mut queue = VecDeque::new();
    if ws.is_free(goal) {
        dist[ws.index(goal)] = 0;
        queue.push_back(goal);
    }
    while let Some(c) = queue.pop_front() {
        let d = dist[ws.index(c)];
        for n in ws.neighbors(c) {
            let i = ws.index(n);
            if dist[i] == DistanceField::UNREACHABLE {
                dist[i] = d + 1;
                queue.push_back(n);
            }
        }
    }
    DistanceField {
        goal,
        width: ws.width,
        dist,
    }
}

/// Seeded random instance on a `width` x `height` grid.
///
/// Obstacles are drawn uniformly without replacement; starts and goals are
/// drawn from the remaining free cells. A draw is rejected and redrawn from the
/// same RNG stream when some robot cannot reach any goal, some goal is
/// unreachable, or no complete robot-goal matching over reachable pairs exists.
pub fn random_instance(seed: u64, width: u32, height: u32, density: f64, n: usize) -> Result<Instance> {
    const MAX_ATTEMPTS: usize = 200;
    if !(0.0..1.0).contains(&density) {
        return Err(Error::Invalid(format!("obstacle density {density} not in [0, 1)")));
    }
    let cells = width as usize * height as usize;
    let num_obstacles = (density * cells as f64).floor() as usize;
    if cells < num_obstacles + 2 * n {
        return Err(Error::Invalid(format!(
            "{width}x{height} grid with {num_obstacles} obstacles cannot hold {n} robots and {n} goals"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let obstacles: Vec<Cell> = sample(&mut rng, cells, num_obstacles)
            .into_iter()
            .map(|i| Cell::new((i % width as usize) as u32, (i / width as usize) as u32))
            .collect();
        let ws = Workspace::new(width, height, obstacles)?;
        let free: Vec<Cell> = ws.free_cells().collect();
        let picked: Vec<Cell> = sample(&mut rng, free.len(), 2 * n)
            .into_iter()
            .map(|i| free[i])
            .collect();
        let (starts, goals) = picked.split_at(n);
        let inst = Instance::new(ws, starts.to_vec(), goals.to_vec())?;
        if has_reachable_matching(&inst) {
            return Ok(inst);
        }
    }
    Err(Error::Invalid(format!(
        "no feasible instance after {MAX_ATTEMPTS} attempts (seed {seed})"
    )))
}

/// True when every robot can be matched to a distinct reachable goal.
pub(crate) fn has_reachable_matching(inst: &Instance) -> bool {
    let fields: Vec<DistanceField> = inst
        .goals
        .iter()
        .map(|&g| true_distance_field(&inst.workspace, g))
        .collect();
    let adj: Vec<Vec<usize>> = inst
        .starts
        .iter()
        .map(|&s| (0..fields.len()).filter(|&g| fields[g].get(s).is_some()).collect())
        .collect();
    if (0..fields.len()).any(|g| adj.iter().all(|a| !a.contains(&g))) {
        return false;
    }

    fn augment(r: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &g in &adj[r] {
            if seen[g] {
                continue;
            }
            seen[g] = true;
            if owner[g].is_none_or(|o| augment(o, adj, seen, owner)) {
                owner[g] = Some(r);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; fields.len()];
    (0..adj.len()).all(|r| augment(r, &adj, &mut vec![false; fields.len()], &mut owner))
}
