//! On-demand next-best assignments.
//!
//! The generator partitions the space of matchings around the current best one
//! in the usual include/omit fashion, but orders robots so that those involved
//! in learned conflicts are fixed first. A partition whose include set already
//! contains a learned conflicting edge set is known to cost at least the
//! recorded increment more than the current best; its computation is
//! postponed and only revoked once everything cheaper has been handed out.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::assignment::{compute_assignment, Assignment, CostMatrix, EdgeSet};
use crate::grid::Cost;
use crate::pathfinding::{LowLevel, Path};

/// One computed assignment together with the partition it is optimal for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsgnNode {
    pub omit: EdgeSet,
    pub include: EdgeSet,
    pub matching: Vec<usize>,
    pub paths: Vec<Arc<Path>>,
    pub cost: Cost,
    /// Lower bound recorded when this partition was postponed, if it was.
    pub postponed_lb: Option<Cost>,
}

impl AsgnNode {
    fn new(omit: EdgeSet, include: EdgeSet, a: Assignment, postponed_lb: Option<Cost>) -> Self {
        AsgnNode {
            omit,
            include,
            matching: a.matching,
            paths: a.paths,
            cost: a.cost,
            postponed_lb,
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.matching.iter().copied().enumerate()
    }
}

// Min-heap order: cost, then goal vector.
struct ByCost(AsgnNode);

impl PartialEq for ByCost {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ByCost {}

impl PartialOrd for ByCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ByCost {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.cost, &other.0.matching).cmp(&(self.0.cost, &self.0.matching))
    }
}

/// A learned set of conflicting robot-goal edges and the cost increase that
/// resolving them forced.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConflictRecordEntry {
    pub acc_conf: EdgeSet,
    pub cost_inc: Cost,
}

#[derive(Debug, Clone, Default)]
pub struct ConflictRecord {
    entries: Vec<ConflictRecordEntry>,
}

impl ConflictRecord {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry. An entry with the same edge set keeps the larger
    /// increment. Returns false when nothing changed.
    pub fn add(&mut self, acc_conf: EdgeSet, cost_inc: Cost) -> bool {
        debug_assert!(cost_inc > 0);
        if let Some(e) = self.entries.iter_mut().find(|e| e.acc_conf == acc_conf) {
            if cost_inc <= e.cost_inc {
                return false;
            }
            e.cost_inc = cost_inc;
        } else {
            self.entries.push(ConflictRecordEntry { acc_conf, cost_inc });
        }
        // stable: equal increments keep registration order
        self.entries.sort_by_key(|e| Reverse(e.cost_inc));
        true
    }

    /// Entries by decreasing increment.
    pub fn sorted(&self) -> &[ConflictRecordEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Robot order for partitioning.
///
/// `robots` are the candidates in index order. Robots named in any learned
/// edge set come first, in first-appearance order over `sorted`; the others
/// follow by index. With `drop_one`, one robot is left out: the
/// highest-index non-conflicting robot, or the last conflicting robot when
/// every candidate conflicts.
pub fn custom_order(robots: &[usize], sorted: &[ConflictRecordEntry], drop_one: bool) -> Vec<usize> {
    let mut conflicting: Vec<usize> = Vec::new();
    for entry in sorted {
        for (r, _) in entry.acc_conf.iter() {
            if robots.contains(&r) && !conflicting.contains(&r) {
                conflicting.push(r);
            }
        }
    }
    let mut rest: Vec<usize> = robots.iter().copied().filter(|r| !conflicting.contains(r)).collect();
    if drop_one && rest.pop().is_none() {
        conflicting.pop();
    }
    conflicting.extend(rest);
    conflicting
}

/// `base_cost` plus the increment of the first (largest) learned entry whose
/// edge set lies inside `include`.
pub fn lower_bound(base_cost: Cost, include: &EdgeSet, sorted: &[ConflictRecordEntry]) -> Cost {
    sorted
        .iter()
        .find(|t| t.acc_conf.is_subset(include))
        .map_or(base_cost, |t| base_cost + t.cost_inc)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostponedEntry {
    pub lb: Cost,
    pub omit: EdgeSet,
    pub include: EdgeSet,
    seq: u64,
}

impl PartialOrd for PostponedEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PostponedEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.lb, other.seq).cmp(&(self.lb, self.seq))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GeneratorStats {
    /// Calls to `compute_assignment`.
    pub computed: u64,
    pub postponed: u64,
    pub revoked: u64,
}

pub struct AssignmentGenerator {
    open: BinaryHeap<ByCost>,
    post: BinaryHeap<PostponedEntry>,
    matrix: CostMatrix,
    seq: u64,
    pub stats: GeneratorStats,
}

impl AssignmentGenerator {
    pub fn new(matrix: CostMatrix) -> Self {
        AssignmentGenerator {
            open: BinaryHeap::new(),
            post: BinaryHeap::new(),
            matrix,
            seq: 0,
            stats: GeneratorStats::default(),
        }
    }

    pub fn matrix(&self) -> &CostMatrix {
        &self.matrix
    }

    pub fn postponed_len(&self) -> usize {
        self.post.len()
    }

    /// Smallest lower bound among postponed partitions.
    pub fn min_postponed_lb(&self) -> Option<Cost> {
        self.post.peek().map(|e| e.lb)
    }

    fn solve(&mut self, omit: EdgeSet, include: EdgeSet, lb: Option<Cost>, low: &mut LowLevel<'_>) {
        self.stats.computed += 1;
        if let Some(a) = compute_assignment(&mut self.matrix, &omit, &include, low) {
            self.open.push(ByCost(AsgnNode::new(omit, include, a, lb)));
        }
    }

    /// The unconstrained optimal assignment, or `None` when no complete
    /// matching exists.
    pub fn first(&mut self, low: &mut LowLevel<'_>) -> Option<AsgnNode> {
        debug_assert!(self.open.is_empty() && self.stats.computed == 0, "generator already started");
        self.solve(EdgeSet::new(), EdgeSet::new(), None, low);
        self.open.peek().map(|n| n.0.clone())
    }

    /// Partitions around the current best assignment and returns the next one.
    ///
    /// The returned node stays queued; the following call partitions around
    /// it. Postponed partitions are revoked while their bound is below every
    /// computed assignment, and drained once nothing else is left.
    pub fn next(
        &mut self,
        record: &ConflictRecord,
        postpone: bool,
        low: &mut LowLevel<'_>,
    ) -> Option<AsgnNode> {
        if let Some(ByCost(base)) = self.open.pop() {
            self.partition(&base, record, postpone, low);
        }
        while let Some(min_lb) = self.min_postponed_lb() {
            if self.open.peek().is_some_and(|n| n.0.cost <= min_lb) {
                break;
            }
            let entry = self.post.pop().expect("non-empty");
            self.stats.revoked += 1;
            self.solve(entry.omit, entry.include, Some(entry.lb), low);
        }
        self.open.peek().map(|n| n.0.clone())
    }

    fn partition(&mut self, base: &AsgnNode, record: &ConflictRecord, postpone: bool, low: &mut LowLevel<'_>) {
        let sorted = record.sorted();
        for (omit, include) in partitions(base, self.matrix.cols(), sorted) {
            let lb = lower_bound(base.cost, &include, sorted);
            if postpone && lb > base.cost {
                self.stats.postponed += 1;
                self.seq += 1;
                self.post.push(PostponedEntry {
                    lb,
                    omit,
                    include,
                    seq: self.seq,
                });
            } else {
                self.solve(omit, include, None, low);
            }
        }
    }
}

/// The `(omit, include)` pairs splitting `base`'s partition minus
/// `base.matching`, in custom order.
pub fn partitions(base: &AsgnNode, goals: usize, sorted: &[ConflictRecordEntry]) -> Vec<(EdgeSet, EdgeSet)> {
    let candidates: Vec<usize> = (0..base.matching.len())
        .filter(|&r| !base.include.binds_robot(r))
        .collect();
    // with spare goals the last robot can still move to an unused one
    let drop_one = candidates.len() == goals - base.include.len();
    let mut include = base.include.clone();
    let mut out = Vec::new();
    for r in custom_order(&candidates, sorted, drop_one) {
        let mut omit = base.omit.clone();
        omit.insert(r, base.matching[r]);
        out.push((omit, include.clone()));
        include.insert(r, base.matching[r]);
    }
    out
}
