//! Single-robot space-time search under vertex and edge constraints, plus the
//! memo table of constrained paths shared by all trees of one solve.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grid::{true_distance_field, Cell, Cost, DistanceField, Instance, Workspace};

pub type Time = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constraint {
    /// The robot may not be in `cell` at time `t`.
    Vertex { cell: Cell, t: Time },
    /// The robot may not move `from -> to` between `t` and `t + 1`.
    Edge { from: Cell, to: Cell, t: Time },
}

impl Constraint {
    pub fn time(&self) -> Time {
        match *self {
            Constraint::Vertex { t, .. } | Constraint::Edge { t, .. } => t,
        }
    }
}

/// Canonical (sorted, deduplicated) set of constraints on one robot.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConstraintSet(Vec<Constraint>);

impl ConstraintSet {
    pub fn new() -> Self {
        ConstraintSet(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Constraint> {
        self.0.iter()
    }

    pub fn contains(&self, c: &Constraint) -> bool {
        self.0.binary_search(c).is_ok()
    }

    /// Inserts `c`, returning false when it was already present.
    pub fn insert(&mut self, c: Constraint) -> bool {
        match self.0.binary_search(&c) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, c);
                true
            }
        }
    }

    pub fn with(&self, c: Constraint) -> Self {
        let mut next = self.clone();
        next.insert(c);
        next
    }

    pub fn max_time(&self) -> Option<Time> {
        self.0.iter().map(Constraint::time).max()
    }

    /// Latest vertex constraint on `cell`. A robot that comes to rest at
    /// `cell` must arrive after it.
    pub fn last_vertex_time(&self, cell: Cell) -> Option<Time> {
        self.0
            .iter()
            .filter_map(|c| match *c {
                Constraint::Vertex { cell: v, t } if v == cell => Some(t),
                _ => None,
            })
            .max()
    }
}

impl FromIterator<Constraint> for ConstraintSet {
    fn from_iter<I: IntoIterator<Item = Constraint>>(iter: I) -> Self {
        let mut v: Vec<Constraint> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        ConstraintSet(v)
    }
}

/// `cells[t]` is the robot's location at timestep `t`; after the last entry the
/// robot rests in place forever.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Path(pub Vec<Cell>);

impl Path {
    pub fn cells(&self) -> &[Cell] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Location at `t`, padding with the final cell.
    #[inline]
    pub fn at(&self, t: usize) -> Cell {
        self.0[t.min(self.0.len() - 1)]
    }

    pub fn last(&self) -> Cell {
        *self.0.last().expect("non-empty path")
    }
}

impl AsRef<Path> for Path {
    fn as_ref(&self) -> &Path {
        self
    }
}

/// Final-arrival time: the smallest `T` such that the robot stays on its last
/// cell from `T` onward. Waits before that count; resting afterwards is free.
pub fn path_cost(p: &Path) -> Cost {
    let cells = p.cells();
    let Some(&goal) = cells.last() else { return 0 };
    cells
        .iter()
        .rposition(|&c| c != goal)
        .map_or(0, |i| i as Cost + 1)
}

/// True when `p` satisfies every constraint in `cset`, counting the padded rest.
pub fn satisfies(p: &Path, cset: &ConstraintSet) -> bool {
    cset.iter().all(|c| match *c {
        Constraint::Vertex { cell, t } => p.at(t as usize) != cell,
        Constraint::Edge { from, to, t } => !(p.at(t as usize) == from && p.at(t as usize + 1) == to),
    })
}

struct Lookup {
    vertex: HashSet<(usize, Time)>,
    edge: HashSet<(usize, usize, Time)>,
}

impl Lookup {
    fn new(ws: &Workspace, cset: &ConstraintSet) -> Self {
        let mut vertex = HashSet::new();
        let mut edge = HashSet::new();
        for c in cset.iter() {
            match *c {
                Constraint::Vertex { cell, t } if ws.in_bounds(cell) => {
                    vertex.insert((ws.index(cell), t));
                }
                Constraint::Edge { from, to, t } if ws.in_bounds(from) && ws.in_bounds(to) => {
                    edge.insert((ws.index(from), ws.index(to), t));
                }
                _ => {}
            }
        }
        Lookup { vertex, edge }
    }
}

struct SearchNode {
    cell: usize,
    t: Time,
    parent: usize,
}

/// Minimum-cost path from `start` to `goal` honouring `cset`.
///
/// States are `(cell, t)`. Past the latest constraint time the timestep no
/// longer matters, so states beyond it collapse onto one key per cell. The goal
/// test requires arriving after the latest vertex constraint on the goal, so
/// that resting there afterwards is legal. Returns `None` when no path exists
/// within `width * height + latest constraint time` steps.
pub fn astar(
    ws: &Workspace,
    start: Cell,
    goal: Cell,
    cset: &ConstraintSet,
    hfield: &DistanceField,
) -> Option<Path> {
    debug_assert_eq!(hfield.goal(), goal);
    if !ws.is_free(start) || !ws.is_free(goal) {
        return None;
    }
    let h = |i: usize| hfield.raw(i);
    let start_idx = ws.index(start);
    let goal_idx = ws.index(goal);
    if h(start_idx) == DistanceField::UNREACHABLE {
        return None;
    }
    let lookup = Lookup::new(ws, cset);
    if lookup.vertex.contains(&(start_idx, 0)) {
        return None;
    }
    let tmax = cset.max_time().unwrap_or(0);
    let earliest_rest = cset.last_vertex_time(goal).map_or(0, |t| t + 1);
    let horizon = ws.num_cells() as Time + tmax;
    let key = |cell: usize, t: Time| (cell, t.min(tmax + 1));

    let mut nodes = vec![SearchNode {
        cell: start_idx,
        t: 0,
        parent: usize::MAX,
    }];
    let mut best: HashMap<(usize, Time), Time> = HashMap::from([(key(start_idx, 0), 0)]);
    let mut closed: HashSet<(usize, Time)> = HashSet::new();
    // (f, deeper first, lower cell index, generation order)
    let mut open = BinaryHeap::new();
    open.push((Reverse(h(start_idx)), 0u32, Reverse(start_idx), Reverse(0usize)));

    while let Some((_, g, _, Reverse(id))) = open.pop() {
        let (cell, t) = (nodes[id].cell, nodes[id].t);
        debug_assert_eq!(g, t);
        let k = key(cell, t);
        if best.get(&k).is_some_and(|&b| b < t) || !closed.insert(k) {
            continue;
        }
        if cell == goal_idx && t >= earliest_rest {
            let mut cells = Vec::with_capacity(t as usize + 1);
            let mut cur = id;
            while cur != usize::MAX {
                cells.push(ws.cell(nodes[cur].cell));
                cur = nodes[cur].parent;
            }
            cells.reverse();
            return Some(Path(cells));
        }
        if t >= horizon {
            continue;
        }
        let here = ws.cell(cell);
        let nt = t + 1;
        // moves first, the wait last
        for next in ws.neighbors(here).chain(std::iter::once(here)) {
            let ni = ws.index(next);
            let hn = h(ni);
            if hn == DistanceField::UNREACHABLE
                || lookup.vertex.contains(&(ni, nt))
                || (ni != cell && lookup.edge.contains(&(cell, ni, t)))
            {
                continue;
            }
            let nk = key(ni, nt);
            if closed.contains(&nk) || best.get(&nk).is_some_and(|&b| b <= nt) {
                continue;
            }
            best.insert(nk, nt);
            let nid = nodes.len();
            nodes.push(SearchNode {
                cell: ni,
                t: nt,
                parent: id,
            });
            open.push((Reverse(nt + hn), nt, Reverse(ni), Reverse(nid)));
        }
    }
    None
}

/// Paths keyed by `(robot, goal, constraints)`. Infeasible results are cached
/// as `None`.
#[derive(Debug, Default)]
pub struct PathCache {
    entries: HashMap<(usize, usize, ConstraintSet), Option<Arc<Path>>>,
    pub hits: u64,
    pub misses: u64,
}

impl PathCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The low level of one solve: lazily built distance fields per goal, the
/// path memo and an A* call counter.
#[derive(Debug)]
pub struct LowLevel<'a> {
    inst: &'a Instance,
    fields: Vec<Option<DistanceField>>,
    pub cache: PathCache,
    pub astar_calls: u64,
}

impl<'a> LowLevel<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        LowLevel {
            inst,
            fields: vec![None; inst.num_goals()],
            cache: PathCache::new(),
            astar_calls: 0,
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    pub fn field(&mut self, g: usize) -> &DistanceField {
        let inst = self.inst;
        self.fields[g].get_or_insert_with(|| true_distance_field(&inst.workspace, inst.goals[g]))
    }

    /// Runs A* for robot `r` towards goal `g`, bypassing the memo.
    pub fn plan(&mut self, r: usize, g: usize, cset: &ConstraintSet) -> Option<Path> {
        let inst = self.inst;
        self.astar_calls += 1;
        let field = self.field(g);
        astar(&inst.workspace, inst.starts[r], inst.goals[g], cset, field)
    }

    pub fn constrained_path(
        &mut self,
        r: usize,
        g: usize,
        cset: &ConstraintSet,
        memo: bool,
    ) -> Option<Arc<Path>> {
        if !memo {
            return self.plan(r, g, cset).map(Arc::new);
        }
        let key = (r, g, cset.clone());
        if let Some(hit) = self.cache.entries.get(&key) {
            self.cache.hits += 1;
            return hit.clone();
        }
        self.cache.misses += 1;
        let path = self.plan(r, g, cset).map(Arc::new);
        self.cache.entries.insert(key, path.clone());
        path
    }
}
