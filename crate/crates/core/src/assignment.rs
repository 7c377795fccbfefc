//! Robot-goal matching over a lazily refined cost matrix.
//!
//! Entries start as Manhattan lower bounds and are upgraded to actual
//! unconstrained path costs only when a matching selects them. A matching that
//! is optimal for the mixed table and whose selected entries are all actual is
//! optimal for the fully actual table: every unselected heuristic entry can
//! only grow when upgraded, so no other matching can become cheaper. The
//! upgraded entries persist in the matrix for later calls.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::grid::{manhattan, Cost, Instance};
use crate::pathfinding::{path_cost, ConstraintSet, LowLevel, Path};

/// A set of `(robot, goal)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeSet(BTreeSet<(usize, usize)>);

impl EdgeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, robot: usize, goal: usize) -> bool {
        self.0.insert((robot, goal))
    }

    pub fn contains(&self, robot: usize, goal: usize) -> bool {
        self.0.contains(&(robot, goal))
    }

    pub fn binds_robot(&self, robot: usize) -> bool {
        self.0.range((robot, 0)..=(robot, usize::MAX)).next().is_some()
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<(usize, usize)> for EdgeSet {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        EdgeSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Entry {
    Heuristic(Cost),
    Actual { cost: Cost, path: Arc<Path> },
    /// No path exists; behaves as an infinite cost.
    Forbidden,
}

impl Entry {
    pub fn value(&self) -> Option<Cost> {
        match self {
            Entry::Heuristic(c) | Entry::Actual { cost: c, .. } => Some(*c),
            Entry::Forbidden => None,
        }
    }

    pub fn is_actual(&self) -> bool {
        matches!(self, Entry::Actual { .. })
    }
}

#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Entry>,
    /// Number of entries upgraded to an actual cost (or found unreachable).
    pub actual_computed: u64,
}

impl CostMatrix {
    /// Manhattan lower bounds for every robot-goal pair.
    pub fn manhattan(inst: &Instance) -> Self {
        let entries = inst
            .starts
            .iter()
            .flat_map(|&s| inst.goals.iter().map(move |&g| Entry::Heuristic(manhattan(s, g))))
            .collect();
        CostMatrix {
            rows: inst.num_robots(),
            cols: inst.num_goals(),
            entries,
            actual_computed: 0,
        }
    }

    /// Fully actual matrix, every pair planned up front.
    pub fn eager(low: &mut LowLevel<'_>) -> Self {
        let mut m = Self::manhattan(low.instance());
        for r in 0..m.rows {
            for g in 0..m.cols {
                m.upgrade(r, g, low);
            }
        }
        m
    }

    /// Matrix over a fixed table, every entry actual with an empty path.
    /// Used to exercise the ranking on tables that no grid produces.
    pub fn from_table(table: &[Vec<Option<Cost>>]) -> Self {
        let rows = table.len();
        let cols = table.first().map_or(0, Vec::len);
        let empty = Arc::new(Path(Vec::new()));
        let entries = table
            .iter()
            .flatten()
            .map(|v| match v {
                Some(cost) => Entry::Actual {
                    cost: *cost,
                    path: empty.clone(),
                },
                None => Entry::Forbidden,
            })
            .collect();
        CostMatrix {
            rows,
            cols,
            entries,
            actual_computed: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, g: usize) -> &Entry {
        &self.entries[r * self.cols + g]
    }

    /// Replaces a heuristic entry with the actual unconstrained path cost.
    /// Returns true when the entry changed.
    pub fn upgrade(&mut self, r: usize, g: usize, low: &mut LowLevel<'_>) -> bool {
        let idx = r * self.cols + g;
        let Entry::Heuristic(h) = self.entries[idx] else {
            return false;
        };
        self.actual_computed += 1;
        self.entries[idx] = match low.plan(r, g, &ConstraintSet::new()) {
            Some(p) => {
                let cost = path_cost(&p);
                debug_assert!(cost >= h, "heuristic {h} exceeds actual {cost}");
                Entry::Actual {
                    cost,
                    path: Arc::new(p),
                }
            }
            None => Entry::Forbidden,
        };
        true
    }
}

impl fmt::Display for CostMatrix {
    /// `h<v>` heuristic, `a<v>` actual, `--` forbidden; one row per robot.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "     ")?;
        for g in 0..self.cols {
            write!(f, " {:>5}", format!("G{}", g + 1))?;
        }
        writeln!(f)?;
        for r in 0..self.rows {
            write!(f, "{:>5}", format!("R{}", r + 1))?;
            for g in 0..self.cols {
                let cell = match self.get(r, g) {
                    Entry::Heuristic(v) => format!("h{v}"),
                    Entry::Actual { cost, .. } => format!("a{cost}"),
                    Entry::Forbidden => "--".to_string(),
                };
                write!(f, " {cell:>5}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// A complete matching with unconstrained optimal paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// `matching[r]` is the goal of robot `r`.
    pub matching: Vec<usize>,
    pub paths: Vec<Arc<Path>>,
    pub cost: Cost,
}

/// Minimum-cost injective robot -> goal map over `table` (rows = robots).
///
/// `None` entries are forbidden. Among optimal matchings the one with the
/// lexicographically smallest goal vector is returned. `None` when every
/// complete matching uses a forbidden entry.
pub fn hungarian(table: &[Vec<Option<Cost>>]) -> Option<Vec<usize>> {
    let rows = table.len();
    if rows == 0 {
        return Some(Vec::new());
    }
    let cols = table[0].len();
    assert!(rows <= cols, "more robots than goals");
    let n = cols;

    let finite_max = table.iter().flatten().flatten().copied().max().unwrap_or(0) as i64;
    let forbidden = (finite_max + 1) * (n as i64 + 1);
    // square, dummy rows at zero cost absorb the unused goals
    let cost = |i: usize, j: usize| -> i64 {
        if i < rows {
            table[i][j].map_or(forbidden, |c| c as i64)
        } else {
            0
        }
    };
    let allowed = |i: usize, j: usize| i >= rows || table[i][j].is_some();

    // Shortest augmenting path with potentials, 1-based.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_col = vec![0usize; n];
    let mut col_row = vec![0usize; n];
    for j in 1..=n {
        row_col[owner[j] - 1] = j - 1;
        col_row[j - 1] = owner[j] - 1;
    }
    if (0..rows).any(|i| !allowed(i, row_col[i])) {
        return None;
    }

    // Every perfect matching on zero reduced-cost edges is optimal. Walk the
    // robots in order and move each to the smallest tight goal that still
    // admits a perfect tight matching over the robots not yet fixed.
    let tight = |i: usize, j: usize| allowed(i, j) && cost(i, j) - u[i + 1] - v[j + 1] == 0;
    for i in 0..rows {
        let current = row_col[i];
        for j in 0..current {
            let k = col_row[j];
            if k < i || !tight(i, j) {
                continue;
            }
            let mut trial_rc = row_col.clone();
            let mut trial_cr = col_row.clone();
            trial_rc[i] = j;
            trial_cr[j] = i;
            let mut seen = vec![false; n];
            if reroute(k, current, i, &tight, &mut trial_rc, &mut trial_cr, &mut seen) {
                row_col = trial_rc;
                col_row = trial_cr;
                break;
            }
        }
    }
    row_col.truncate(rows);
    Some(row_col)
}

/// Alternating-path search: give row `r` a tight column, ending by taking the
/// vacated column `target`. Rows `<= fixed` keep their columns.
fn reroute(
    r: usize,
    target: usize,
    fixed: usize,
    tight: &impl Fn(usize, usize) -> bool,
    row_col: &mut [usize],
    col_row: &mut [usize],
    seen: &mut [bool],
) -> bool {
    for j in 0..seen.len() {
        if seen[j] || !tight(r, j) {
            continue;
        }
        seen[j] = true;
        let next = col_row[j];
        let ok = if j == target {
            true
        } else if next <= fixed || next == r {
            false
        } else {
            reroute(next, target, fixed, tight, row_col, col_row, seen)
        };
        if ok {
            row_col[r] = j;
            col_row[j] = r;
            return true;
        }
    }
    false
}

/// Cheapest complete matching containing every edge of `include` and none of
/// `omit`, upgrading matrix entries on demand.
///
/// `include` must be a partial injective matching disjoint from `omit`.
pub fn compute_assignment(
    matrix: &mut CostMatrix,
    omit: &EdgeSet,
    include: &EdgeSet,
    low: &mut LowLevel<'_>,
) -> Option<Assignment> {
    let mut fixed_goal = vec![None; matrix.rows];
    let mut goal_taken = vec![false; matrix.cols];
    for (r, g) in include.iter() {
        debug_assert!(fixed_goal[r].is_none() && !goal_taken[g], "include set is not a matching");
        fixed_goal[r] = Some(g);
        goal_taken[g] = true;
    }
    let free_rows: Vec<usize> = (0..matrix.rows).filter(|&r| fixed_goal[r].is_none()).collect();
    let free_cols: Vec<usize> = (0..matrix.cols).filter(|&g| !goal_taken[g]).collect();

    let reduced = loop {
        let table: Vec<Vec<Option<Cost>>> = free_rows
            .iter()
            .map(|&r| {
                free_cols
                    .iter()
                    .map(|&g| {
                        if omit.contains(r, g) {
                            None
                        } else {
                            matrix.get(r, g).value()
                        }
                    })
                    .collect()
            })
            .collect();
        let solved = hungarian(&table)?;
        let mut upgraded = false;
        for (i, &j) in solved.iter().enumerate() {
            upgraded |= matrix.upgrade(free_rows[i], free_cols[j], low);
        }
        if !upgraded {
            break solved;
        }
    };

    let mut matching = vec![usize::MAX; matrix.rows];
    for (i, &j) in reduced.iter().enumerate() {
        matching[free_rows[i]] = free_cols[j];
    }
    for (r, g) in include.iter() {
        matrix.upgrade(r, g, low);
        matching[r] = g;
    }
    let mut paths = Vec::with_capacity(matrix.rows);
    let mut cost = 0;
    for (r, &g) in matching.iter().enumerate() {
        match matrix.get(r, g) {
            Entry::Actual { cost: c, path } => {
                cost += c;
                paths.push(path.clone());
            }
            _ => return None,
        }
    }
    Some(Assignment {
        matching,
        paths,
        cost,
    })
}
