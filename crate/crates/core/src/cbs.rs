//! High-level forest search.
//!
//! Every root holds one complete robot-goal matching; its tree resolves
//! collisions by constraining one robot per branch. All trees share one
//! priority queue ordered by cost, with nodes whose conflict has not been
//! registered yet ahead of equal-cost registered ones.
//!
//! With postponement on, conflicting edges are accumulated per tree. When
//! the next node to expand costs more than its parent, the tree's edge set is
//! recorded together with the increment over its root, and a new matching is
//! requested only once the cheapest node costs more than the newest root.
//! With postponement off, the next matching is created whenever a root is
//! expanded, as CBS-TA does.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::assignment::{CostMatrix, EdgeSet};
use crate::error::Error;
use crate::grid::{Cell, Cost, Instance};
use crate::kbest::{AsgnNode, AssignmentGenerator, ConflictRecord};
use crate::pathfinding::{path_cost, Constraint, ConstraintSet, LowLevel, Path, Time};
use crate::validate::validate;

/// Which enhancements are enabled: lazy cost matrix (`h`), path memoization
/// (`m`) and conflict-guided postponement (`p`). `h0m0p0` is CBS-TA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Variant {
    pub heuristic: bool,
    pub memo: bool,
    pub postpone: bool,
}

impl Variant {
    pub const BASELINE: Variant = Variant {
        heuristic: false,
        memo: false,
        postpone: false,
    };
    pub const FULL: Variant = Variant {
        heuristic: true,
        memo: true,
        postpone: true,
    };

    pub fn all() -> impl Iterator<Item = Variant> {
        (0..8u8).map(|bits| Variant {
            heuristic: bits & 4 != 0,
            memo: bits & 2 != 0,
            postpone: bits & 1 != 0,
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "h{}m{}p{}",
            self.heuristic as u8, self.memo as u8, self.postpone as u8
        )
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let b = s.as_bytes();
        let flag = |c: u8| match c {
            b'0' => Some(false),
            b'1' => Some(true),
            _ => None,
        };
        if b.len() == 6 && b[0] == b'h' && b[2] == b'm' && b[4] == b'p' {
            if let (Some(heuristic), Some(memo), Some(postpone)) = (flag(b[1]), flag(b[3]), flag(b[5])) {
                return Ok(Variant {
                    heuristic,
                    memo,
                    postpone,
                });
            }
        }
        Err(Error::Invalid(format!("variant `{s}` does not match h[01]m[01]p[01]")))
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConflictKind {
    Vertex { cell: Cell },
    /// `robot1` moves `from -> to` while `robot2` moves `to -> from`.
    Edge { from: Cell, to: Cell },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Conflict {
    pub robot1: usize,
    pub robot2: usize,
    pub kind: ConflictKind,
    pub t: Time,
}

/// Earliest collision among `paths`, robots resting on their last cell.
///
/// Ties at the same timestep go to the smallest robot pair, vertex before edge.
pub fn get_first_conflict<P: AsRef<Path>>(paths: &[P]) -> Option<Conflict> {
    let horizon = paths.iter().map(|p| p.as_ref().len()).max().unwrap_or(0);
    for t in 0..horizon {
        for a in 0..paths.len() {
            let pa = paths[a].as_ref();
            for (b, pb) in paths.iter().enumerate().skip(a + 1) {
                let pb = pb.as_ref();
                let here = pa.at(t);
                if here == pb.at(t) {
                    return Some(Conflict {
                        robot1: a,
                        robot2: b,
                        kind: ConflictKind::Vertex { cell: here },
                        t: t as Time,
                    });
                }
                let next = pa.at(t + 1);
                if here != next && here == pb.at(t + 1) && next == pb.at(t) {
                    return Some(Conflict {
                        robot1: a,
                        robot2: b,
                        kind: ConflictKind::Edge { from: here, to: next },
                        t: t as Time,
                    });
                }
            }
        }
    }
    None
}

/// The two branches resolving `c`, one constraint per robot.
pub fn create_constraints(c: &Conflict) -> [(usize, Constraint); 2] {
    match c.kind {
        ConflictKind::Vertex { cell } => [
            (c.robot1, Constraint::Vertex { cell, t: c.t }),
            (c.robot2, Constraint::Vertex { cell, t: c.t }),
        ],
        ConflictKind::Edge { from, to } => [
            (c.robot1, Constraint::Edge { from, to, t: c.t }),
            (c.robot2, Constraint::Edge { from: to, to: from, t: c.t }),
        ],
    }
}

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub root: bool,
    pub root_id: u32,
    pub root_cost: Cost,
    pub parent_cost: Option<Cost>,
    pub constraints: Vec<Arc<ConstraintSet>>,
    pub matching: Arc<Vec<usize>>,
    pub paths: Vec<Arc<Path>>,
    pub cost: Cost,
    pub conf_reg: bool,
    seq: u64,
}

// Max-heap wrapper: cheapest first, unregistered before registered, then FIFO.
struct Queued(SearchNode);

impl Queued {
    fn key(&self) -> (Cost, bool, u64) {
        (self.0.cost, self.0.conf_reg, self.0.seq)
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// The forest's shared queue.
#[derive(Default)]
pub struct Open {
    heap: BinaryHeap<Queued>,
    seq: u64,
}

impl Open {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, mut node: SearchNode) {
        self.seq += 1;
        node.seq = self.seq;
        self.heap.push(Queued(node));
    }

    pub fn select_best(&mut self) -> Option<SearchNode> {
        self.heap.pop().map(|q| q.0)
    }

    pub fn peep_next(&self) -> Option<&SearchNode> {
        self.heap.peek().map(|q| &q.0)
    }

    /// Flags the front node as registered and re-queues it under its new key.
    fn mark_front_registered(&mut self) {
        if let Some(Queued(mut node)) = self.heap.pop() {
            node.conf_reg = true;
            self.heap.push(Queued(node));
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// A root created from a partition whose computation had been postponed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevokedRoot {
    pub root_id: u32,
    pub lb: Cost,
    pub matching: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
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
    pub wall_time_ms: f64,
    /// Roots built from revoked partitions, with their recorded lower bounds.
    #[serde(skip)]
    pub revoked_roots: Vec<RevokedRoot>,
    /// Memo hits re-planned from scratch and compared (audit mode only).
    #[serde(skip)]
    pub memo_audits: u64,
    #[serde(skip)]
    pub memo_mismatches: u64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// `matching[r]` is the goal index served by robot `r`.
    pub matching: Vec<usize>,
    pub paths: Vec<Path>,
    pub cost: Cost,
    pub stats: Stats,
}

#[derive(Debug, Clone)]
pub enum SolveError {
    /// No matching exists, or every matching's tree was exhausted.
    Infeasible(Box<Stats>),
    Timeout(Box<Stats>),
}

impl SolveError {
    pub fn stats(&self) -> &Stats {
        match self {
            SolveError::Infeasible(s) | SolveError::Timeout(s) => s,
        }
    }
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Infeasible(_) => write!(f, "instance is infeasible"),
            SolveError::Timeout(_) => write!(f, "timed out"),
        }
    }
}

impl std::error::Error for SolveError {}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveConfig {
    pub variant: Variant,
    pub timeout: Option<Duration>,
    /// Re-plan every memo hit from scratch and count cost mismatches.
    pub audit_memo: bool,
}

impl SolveConfig {
    pub fn new(variant: Variant) -> Self {
        SolveConfig {
            variant,
            ..Default::default()
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }
}

/// Mutable state of one solve.
pub struct SolverState<'a> {
    pub open: Open,
    pub acc_conf: HashMap<u32, EdgeSet>,
    pub conflict_rec: ConflictRecord,
    pub root_gen: u32,
    pub latest_root_cost: Cost,
    pub generator: AssignmentGenerator,
    pub low: LowLevel<'a>,
    pub stats: Stats,
    variant: Variant,
    audit_memo: bool,
    lower_bounds: HashMap<u32, Cost>,
    exhausted: bool,
}

impl<'a> SolverState<'a> {
    pub fn new(inst: &'a Instance, variant: Variant) -> Self {
        let mut low = LowLevel::new(inst);
        let matrix = if variant.heuristic {
            CostMatrix::manhattan(inst)
        } else {
            CostMatrix::eager(&mut low)
        };
        SolverState {
            open: Open::new(),
            acc_conf: HashMap::new(),
            conflict_rec: ConflictRecord::new(),
            root_gen: 0,
            latest_root_cost: 0,
            generator: AssignmentGenerator::new(matrix),
            low,
            stats: Stats::default(),
            variant,
            audit_memo: false,
            lower_bounds: HashMap::new(),
            exhausted: false,
        }
    }

    /// Turns an assignment into a new root and queues it; returns its cost.
    pub fn create_root(&mut self, theta: AsgnNode) -> Cost {
        self.root_gen += 1;
        self.stats.roots_created += 1;
        let robots = theta.matching.len();
        let empty = Arc::new(ConstraintSet::new());
        if let Some(lb) = theta.postponed_lb {
            self.lower_bounds.insert(self.root_gen, lb);
            self.stats.revoked_roots.push(RevokedRoot {
                root_id: self.root_gen,
                lb,
                matching: theta.matching.clone(),
            });
        }
        let node = SearchNode {
            root: true,
            root_id: self.root_gen,
            root_cost: theta.cost,
            parent_cost: None,
            constraints: vec![empty; robots],
            matching: Arc::new(theta.matching),
            paths: theta.paths,
            cost: theta.cost,
            conf_reg: false,
            seq: 0,
        };
        self.open.push(node);
        // Revoked partitions can arrive cheaper than an earlier root, so this
        // tracks the newest root rather than the maximum.
        self.latest_root_cost = theta.cost;
        theta.cost
    }

    fn constrained_path(&mut self, r: usize, g: usize, cset: &ConstraintSet) -> Option<Arc<Path>> {
        let hits = self.low.cache.hits;
        let path = self.low.constrained_path(r, g, cset, self.variant.memo);
        if self.audit_memo && self.low.cache.hits > hits {
            self.stats.memo_audits += 1;
            let fresh = self.low.plan(r, g, cset);
            if fresh.as_ref().map(path_cost) != path.as_deref().map(path_cost) {
                self.stats.memo_mismatches += 1;
            }
        }
        path
    }

    /// Queues up to two children of `parent`, one per branch.
    pub fn create_child_nodes(&mut self, parent: &SearchNode, branches: [(usize, Constraint); 2]) {
        for (robot, constraint) in branches {
            let cset = parent.constraints[robot].with(constraint);
            let goal = parent.matching[robot];
            let Some(path) = self.constrained_path(robot, goal, &cset) else {
                continue;
            };
            let cost = parent.cost - path_cost(&parent.paths[robot]) + path_cost(&path);
            debug_assert!(cost >= parent.cost);
            let mut constraints = parent.constraints.clone();
            constraints[robot] = Arc::new(cset);
            let mut paths = parent.paths.clone();
            paths[robot] = path;
            self.open.push(SearchNode {
                root: false,
                root_id: parent.root_id,
                root_cost: parent.root_cost,
                parent_cost: Some(parent.cost),
                constraints,
                matching: parent.matching.clone(),
                paths,
                cost,
                conf_reg: false,
                seq: 0,
            });
        }
    }

    /// Learns the peeped node's tree conflicts when its cost rose over its
    /// parent's. Returns true when the node was registered.
    pub fn register_conflict(&mut self) -> bool {
        let Some(next) = self.open.peep_next() else {
            return false;
        };
        let rises = next.parent_cost.is_some_and(|p| next.cost > p);
        if next.root || !rises || next.conf_reg {
            return false;
        }
        let cost_inc = next.cost - next.root_cost;
        let acc = self.acc_conf.get(&next.root_id).cloned().unwrap_or_default();
        if self.conflict_rec.add(acc, cost_inc) {
            self.stats.conflicts_registered += 1;
        }
        self.open.mark_front_registered();
        true
    }

    /// Asks the generator for the next assignment and roots it.
    fn next_root(&mut self) -> bool {
        if self.exhausted {
            return false;
        }
        let record = if self.variant.postpone {
            &self.conflict_rec
        } else {
            &ConflictRecord::new()
        };
        match self.generator.next(record, self.variant.postpone, &mut self.low) {
            Some(theta) => {
                self.create_root(theta);
                true
            }
            None => {
                self.exhausted = true;
                false
            }
        }
    }

    fn sync_stats(&mut self, started: Instant) {
        let g = self.generator.stats;
        self.stats.assignments_computed = g.computed;
        self.stats.assignments_postponed = g.postponed;
        self.stats.assignments_revoked = g.revoked;
        self.stats.astar_calls = self.low.astar_calls;
        self.stats.cache_hits = self.low.cache.hits;
        self.stats.actual_entries = self.generator.matrix().actual_computed;
        self.stats.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    }
}

pub fn solve(inst: &Instance, variant: Variant, timeout: Option<Duration>) -> Result<Solution, SolveError> {
    solve_with(
        inst,
        &SolveConfig {
            variant,
            timeout,
            audit_memo: false,
        },
    )
}

/// Optimal collision-free assignment minimising the sum of arrival times.
pub fn solve_with(inst: &Instance, config: &SolveConfig) -> Result<Solution, SolveError> {
    let started = Instant::now();
    let deadline = config.timeout.map(|d| started + d);
    let variant = config.variant;
    let mut st = SolverState::new(inst, variant);
    st.audit_memo = config.audit_memo;

    match st.generator.first(&mut st.low) {
        Some(theta) => {
            st.create_root(theta);
        }
        None => {
            st.sync_stats(started);
            return Err(SolveError::Infeasible(Box::new(st.stats)));
        }
    }

    loop {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            st.sync_stats(started);
            return Err(SolveError::Timeout(Box::new(st.stats)));
        }
        let Some(best) = st.open.select_best() else {
            // every tree died out; fall back to the next matching
            if st.next_root() {
                continue;
            }
            st.sync_stats(started);
            return Err(SolveError::Infeasible(Box::new(st.stats)));
        };
        st.stats.nodes_expanded += 1;

        let Some(conflict) = get_first_conflict(&best.paths) else {
            st.sync_stats(started);
            let paths: Vec<Path> = best.paths.iter().map(|p| (**p).clone()).collect();
            let matching = (*best.matching).clone();
            let violations = validate(inst, &matching, &paths, Some(best.cost));
            assert!(violations.is_empty(), "solver produced an invalid solution: {violations:?}");
            if let Some(&lb) = st.lower_bounds.get(&best.root_id) {
                debug_assert!(best.cost >= lb, "postponed partition resolved below its bound");
            }
            return Ok(Solution {
                matching,
                paths,
                cost: best.cost,
                stats: st.stats,
            });
        };
        st.stats.conflicts_found += 1;

        if variant.postpone {
            let acc = st.acc_conf.entry(best.root_id).or_default();
            acc.insert(conflict.robot1, best.matching[conflict.robot1]);
            acc.insert(conflict.robot2, best.matching[conflict.robot2]);
        } else if best.root {
            st.next_root();
        }

        st.create_child_nodes(&best, create_constraints(&conflict));

        if variant.postpone {
            st.register_conflict();
            if let Some(next) = st.open.peep_next() {
                if next.cost > st.latest_root_cost {
                    st.next_root();
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Solved,
    Infeasible,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPair {
    pub robot: usize,
    pub goal: usize,
}

/// The solution JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub cost: Option<Cost>,
    pub assignment: Vec<AssignmentPair>,
    pub paths: Vec<Path>,
    #[serde(default)]
    pub stats: Stats,
    pub variant: Variant,
    pub status: Status,
}

impl SolutionReport {
    pub fn new(variant: Variant, result: &Result<Solution, SolveError>) -> Self {
        match result {
            Ok(sol) => SolutionReport {
                cost: Some(sol.cost),
                assignment: sol
                    .matching
                    .iter()
                    .enumerate()
                    .map(|(robot, &goal)| AssignmentPair { robot, goal })
                    .collect(),
                paths: sol.paths.clone(),
                stats: sol.stats.clone(),
                variant,
                status: Status::Solved,
            },
            Err(e) => SolutionReport {
                cost: None,
                assignment: Vec::new(),
                paths: Vec::new(),
                stats: e.stats().clone(),
                variant,
                status: match e {
                    SolveError::Infeasible(_) => Status::Infeasible,
                    SolveError::Timeout(_) => Status::Timeout,
                },
            },
        }
    }

    /// `matching[r]` in robot order; `None` when robots are missing or repeated.
    pub fn matching(&self) -> Option<Vec<usize>> {
        let mut m = vec![usize::MAX; self.assignment.len()];
        for a in &self.assignment {
            if a.robot >= m.len() || m[a.robot] != usize::MAX {
                return None;
            }
            m[a.robot] = a.goal;
        }
        Some(m)
    }
}
