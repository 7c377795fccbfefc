//! Independent re-check of a claimed solution.

use std::fmt;

use crate::grid::{Cell, Cost, Instance};
use crate::pathfinding::{path_cost, Path};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    WrongRobotCount { expected: usize, found: usize },
    GoalOutOfRange { robot: usize, goal: usize },
    GoalReused { goal: usize, robots: (usize, usize) },
    EmptyPath { robot: usize },
    WrongStart { robot: usize },
    WrongGoal { robot: usize },
    IllegalMove { robot: usize, t: usize },
    Obstacle { robot: usize, t: usize, cell: Cell },
    VertexConflict { robots: (usize, usize), t: usize, cell: Cell },
    EdgeConflict { robots: (usize, usize), t: usize },
    CostMismatch { claimed: Cost, actual: Cost },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongRobotCount { expected, found } => {
                write!(f, "expected {expected} robots, found {found}")
            }
            Violation::GoalOutOfRange { robot, goal } => write!(f, "robot {robot}: goal {goal} does not exist"),
            Violation::GoalReused { goal, robots: (a, b) } => {
                write!(f, "goal {goal} assigned to robots {a} and {b}")
            }
            Violation::EmptyPath { robot } => write!(f, "robot {robot}: empty path"),
            Violation::WrongStart { robot } => write!(f, "robot {robot}: path does not begin at its start"),
            Violation::WrongGoal { robot } => write!(f, "robot {robot}: path does not end at its goal"),
            Violation::IllegalMove { robot, t } => write!(f, "robot {robot}: illegal move at t={t}"),
            Violation::Obstacle { robot, t, cell } => write!(f, "robot {robot}: on obstacle {cell} at t={t}"),
            Violation::VertexConflict { robots: (a, b), t, cell } => {
                write!(f, "vertex conflict between robots {a} and {b} at {cell}, t={t}")
            }
            Violation::EdgeConflict { robots: (a, b), t } => {
                write!(f, "edge conflict between robots {a} and {b} at t={t}")
            }
            Violation::CostMismatch { claimed, actual } => {
                write!(f, "claimed cost {claimed} but paths cost {actual}")
            }
        }
    }
}

/// Checks matching injectivity, path legality, collisions under
/// rest-at-goal padding and, when given, the claimed total cost.
pub fn validate(inst: &Instance, matching: &[usize], paths: &[Path], claimed: Option<Cost>) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = inst.num_robots();
    if matching.len() != n || paths.len() != n {
        out.push(Violation::WrongRobotCount {
            expected: n,
            found: matching.len().max(paths.len()),
        });
        return out;
    }
    let mut owner = vec![None; inst.num_goals()];
    for (r, &g) in matching.iter().enumerate() {
        if g >= inst.num_goals() {
            out.push(Violation::GoalOutOfRange { robot: r, goal: g });
            continue;
        }
        if let Some(prev) = owner[g] {
            out.push(Violation::GoalReused { goal: g, robots: (prev, r) });
        }
        owner[g] = Some(r);
    }
    let ws = &inst.workspace;
    let mut well_formed = true;
    for (r, p) in paths.iter().enumerate() {
        if p.is_empty() {
            out.push(Violation::EmptyPath { robot: r });
            well_formed = false;
            continue;
        }
        if p.cells()[0] != inst.starts[r] {
            out.push(Violation::WrongStart { robot: r });
        }
        if matching[r] < inst.num_goals() && p.last() != inst.goals[matching[r]] {
            out.push(Violation::WrongGoal { robot: r });
        }
        for (t, &c) in p.cells().iter().enumerate() {
            if !ws.is_free(c) {
                out.push(Violation::Obstacle { robot: r, t, cell: c });
            }
        }
        for (t, w) in p.cells().windows(2).enumerate() {
            if crate::grid::manhattan(w[0], w[1]) > 1 {
                out.push(Violation::IllegalMove { robot: r, t });
            }
        }
    }
    if !well_formed {
        return out;
    }

    let horizon = paths.iter().map(Path::len).max().unwrap_or(0);
    for t in 0..horizon {
        for a in 0..n {
            for b in a + 1..n {
                if paths[a].at(t) == paths[b].at(t) {
                    out.push(Violation::VertexConflict {
                        robots: (a, b),
                        t,
                        cell: paths[a].at(t),
                    });
                }
                if t + 1 < horizon
                    && paths[a].at(t) == paths[b].at(t + 1)
                    && paths[a].at(t + 1) == paths[b].at(t)
                    && paths[a].at(t) != paths[a].at(t + 1)
                {
                    out.push(Violation::EdgeConflict { robots: (a, b), t });
                }
            }
        }
    }
    if let Some(claimed) = claimed {
        let actual = paths.iter().map(path_cost).sum();
        if claimed != actual {
            out.push(Violation::CostMismatch { claimed, actual });
        }
    }
    out
}
