//! Brute-force ground truth for small instances.
//!
//! Every matching is enumerated and, cheapest first, solved exactly by A* over
//! the joint configuration of all robots. The joint search does not share any
//! code with the conflict-based solver beyond the grid itself.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use thiserror::Error;

use crate::grid::{true_distance_field, Cost, Instance};
use crate::pathfinding::Path;

pub const MAX_ENUM_ROBOTS: usize = 6;
pub const MAX_JOINT_ROBOTS: usize = 4;
pub const MAX_JOINT_SIDE: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("instance too large for the oracle: {0}")]
    TooLarge(String),
    #[error("no complete matching of robots to reachable goals")]
    NoMatching,
    #[error("no collision-free solution within cost {0}")]
    InfeasibleWithinCap(Cost),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub cost: Cost,
    pub matching: Vec<usize>,
    pub paths: Vec<Path>,
    /// Number of matchings that reach the optimal cost.
    pub optimal_matchings: usize,
}

/// All complete matchings over `table` (rows = robots) that avoid `None`
/// entries, sorted by (cost, goal vector).
pub fn enumerate_table(table: &[Vec<Option<Cost>>]) -> Vec<(Vec<usize>, Cost)> {
    fn rec(
        t: &[Vec<Option<Cost>>],
        used: &mut [bool],
        cur: &mut Vec<usize>,
        acc: Cost,
        out: &mut Vec<(Vec<usize>, Cost)>,
    ) {
        let r = cur.len();
        if r == t.len() {
            out.push((cur.clone(), acc));
            return;
        }
        for g in 0..used.len() {
            if let (false, Some(c)) = (used[g], t[r][g]) {
                used[g] = true;
                cur.push(g);
                rec(t, used, cur, acc + c, out);
                cur.pop();
                used[g] = false;
            }
        }
    }
    let cols = table.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    rec(table, &mut vec![false; cols], &mut Vec::new(), 0, &mut out);
    out.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
    out
}

/// Exact unconstrained robot-goal distances; `None` when unreachable.
pub fn distance_table(inst: &Instance) -> Vec<Vec<Option<Cost>>> {
    let fields: Vec<_> = inst
        .goals
        .iter()
        .map(|&g| true_distance_field(&inst.workspace, g))
        .collect();
    inst.starts
        .iter()
        .map(|&s| fields.iter().map(|f| f.get(s)).collect())
        .collect()
}

/// Every matching with its exact unconstrained cost, cheapest first.
pub fn enumerate_matchings(inst: &Instance) -> Result<Vec<(Vec<usize>, Cost)>, OracleError> {
    if inst.num_robots() > MAX_ENUM_ROBOTS {
        return Err(OracleError::TooLarge(format!(
            "{} robots, at most {MAX_ENUM_ROBOTS} supported",
            inst.num_robots()
        )));
    }
    Ok(enumerate_table(&distance_table(inst)))
}

fn check_joint_size(inst: &Instance) -> Result<(), OracleError> {
    let ws = &inst.workspace;
    if inst.num_robots() > MAX_JOINT_ROBOTS || ws.width() > MAX_JOINT_SIDE || ws.height() > MAX_JOINT_SIDE {
        return Err(OracleError::TooLarge(format!(
            "{} robots on {}x{}, at most {MAX_JOINT_ROBOTS} robots on {MAX_JOINT_SIDE}x{MAX_JOINT_SIDE}",
            inst.num_robots(),
            ws.width(),
            ws.height()
        )));
    }
    Ok(())
}

/// Default search cap: the cheapest matching plus generous slack.
pub fn default_cap(inst: &Instance, best_matching_cost: Cost) -> Cost {
    let side = inst.workspace.width().max(inst.workspace.height()) as Cost;
    best_matching_cost + 2 * inst.num_robots() as Cost * side
}

/// Global optimum over all matchings, searching no further than `cost_cap`
/// (see [`default_cap`] when `None`).
pub fn brute_optimal(inst: &Instance, cost_cap: Option<Cost>) -> Result<OracleResult, OracleError> {
    check_joint_size(inst)?;
    let matchings = enumerate_matchings(inst)?;
    let Some((_, cheapest)) = matchings.first() else {
        return Err(OracleError::NoMatching);
    };
    let cap = cost_cap.unwrap_or_else(|| default_cap(inst, *cheapest));

    let mut best: Option<OracleResult> = None;
    for (matching, solo) in matchings {
        let bound = best.as_ref().map_or(cap, |b| b.cost);
        if solo > bound {
            break;
        }
        let Some((cost, paths)) = joint_search(inst, &matching, bound) else {
            continue;
        };
        match &mut best {
            Some(b) if b.cost == cost => b.optimal_matchings += 1,
            _ => {
                best = Some(OracleResult {
                    cost,
                    matching,
                    paths,
                    optimal_matchings: 1,
                })
            }
        }
    }
    best.ok_or(OracleError::InfeasibleWithinCap(cap))
}

/// Optimal collision-free sum of costs for a fixed matching.
pub fn optimal_for_matching(
    inst: &Instance,
    matching: &[usize],
    cost_cap: Cost,
) -> Result<(Cost, Vec<Path>), OracleError> {
    check_joint_size(inst)?;
    joint_search(inst, matching, cost_cap).ok_or(OracleError::InfeasibleWithinCap(cost_cap))
}

// A joint state packs every robot's cell index plus a mask of robots that
// have committed to resting on their goal for good. Each timestep every
// uncommitted robot pays one unit, so a plan's total is the sum of commit
// times, which at the optimum equals the sum of final-arrival times.
struct Packing {
    bits: u32,
    robots: usize,
}

impl Packing {
    fn pack(&self, pos: &[u16], done: u8) -> u64 {
        let mut k = done as u64;
        for &p in pos {
            k = (k << self.bits) | p as u64;
        }
        k
    }

    fn unpack(&self, mut k: u64, pos: &mut [u16]) -> u8 {
        let mask = (1u64 << self.bits) - 1;
        for i in (0..self.robots).rev() {
            pos[i] = (k & mask) as u16;
            k >>= self.bits;
        }
        k as u8
    }
}

fn joint_search(inst: &Instance, matching: &[usize], cap: Cost) -> Option<(Cost, Vec<Path>)> {
    let ws = &inst.workspace;
    let n = inst.num_robots();
    if n == 0 {
        return Some((0, Vec::new()));
    }
    let cells = ws.num_cells();
    let pk = Packing {
        bits: usize::BITS - (cells - 1).max(1).leading_zeros(),
        robots: n,
    };
    let goals: Vec<usize> = matching.iter().map(|&g| ws.index(inst.goals[g])).collect();
    let fields: Vec<Vec<u32>> = matching
        .iter()
        .map(|&g| {
            let f = true_distance_field(ws, inst.goals[g]);
            (0..cells).map(|i| f.get(ws.cell(i)).map_or(u32::MAX, |d| d as u32)).collect()
        })
        .collect();
    let neighbors: Vec<Vec<u16>> = (0..cells)
        .map(|i| {
            let c = ws.cell(i);
            let mut v: Vec<u16> = ws.neighbors(c).map(|n| ws.index(n) as u16).collect();
            v.push(i as u16);
            v
        })
        .collect();
    let all_done: u8 = ((1u16 << n) - 1) as u8;
    let heuristic = |pos: &[u16], done: u8| -> Option<Cost> {
        let mut h = 0;
        for r in 0..n {
            if done & (1 << r) == 0 {
                let d = fields[r][pos[r] as usize];
                if d == u32::MAX {
                    return None;
                }
                h += d as Cost;
            }
        }
        Some(h)
    };

    let start_pos: Vec<u16> = inst.starts.iter().map(|&s| ws.index(s) as u16).collect();
    let start = pk.pack(&start_pos, 0);
    let h0 = heuristic(&start_pos, 0)?;
    if h0 > cap {
        return None;
    }
    let mut g_best: HashMap<u64, Cost> = HashMap::from([(start, 0)]);
    let mut parent: HashMap<u64, (u64, bool)> = HashMap::new();
    let mut open = BinaryHeap::from([(Reverse(h0), Reverse(0 as Cost), start)]);
    let mut pos = vec![0u16; n];
    let mut next = vec![0u16; n];

    while let Some((Reverse(f), Reverse(g), key)) = open.pop() {
        if g_best.get(&key).is_some_and(|&b| b < g) {
            continue;
        }
        debug_assert!(f <= cap);
        let done = pk.unpack(key, &mut pos);
        if done == all_done {
            return Some((g, reconstruct(&pk, &parent, key, n, ws)));
        }
        let mut push = |k: u64, g2: Cost, h: Cost, moved: bool, open: &mut BinaryHeap<_>| {
            if g2 + h <= cap && g_best.get(&k).is_none_or(|&b| g2 < b) {
                g_best.insert(k, g2);
                parent.insert(k, (key, moved));
                open.push((Reverse(g2 + h), Reverse(g2), k));
            }
        };
        // commit a robot standing on its goal
        for r in 0..n {
            if done & (1 << r) == 0 && pos[r] as usize == goals[r] {
                let d2 = done | (1 << r);
                if let Some(h) = heuristic(&pos, d2) {
                    push(pk.pack(&pos, d2), g, h, false, &mut open);
                }
            }
        }
        let step = (0..n).filter(|&r| done & (1 << r) == 0).count() as Cost;
        let mut succ = Vec::new();
        expand(0, n, done, &pos, &mut next, &neighbors, &mut succ);
        for np in succ {
            if let Some(h) = heuristic(&np, done) {
                push(pk.pack(&np, done), g + step, h, true, &mut open);
            }
        }
    }
    None
}

// All collision-free joint moves; committed robots stay put.
fn expand(r: usize, n: usize, done: u8, pos: &[u16], next: &mut [u16], nb: &[Vec<u16>], out: &mut Vec<Vec<u16>>) {
    if r == n {
        out.push(next.to_vec());
        return;
    }
    let options: &[u16] = if done & (1 << r) != 0 {
        std::slice::from_ref(&pos[r])
    } else {
        &nb[pos[r] as usize]
    };
    'opt: for &c in options {
        for q in 0..r {
            if next[q] == c || (next[q] == pos[r] && pos[q] == c && c != pos[r]) {
                continue 'opt;
            }
        }
        next[r] = c;
        expand(r + 1, n, done, pos, next, nb, out);
    }
}

fn reconstruct(
    pk: &Packing,
    parent: &HashMap<u64, (u64, bool)>,
    mut key: u64,
    n: usize,
    ws: &crate::grid::Workspace,
) -> Vec<Path> {
    let mut frames = Vec::new();
    let mut pos = vec![0u16; n];
    loop {
        match parent.get(&key) {
            Some(&(prev, moved)) => {
                if moved {
                    pk.unpack(key, &mut pos);
                    frames.push(pos.clone());
                }
                key = prev;
            }
            None => {
                pk.unpack(key, &mut pos);
                frames.push(pos.clone());
                break;
            }
        }
    }
    frames.reverse();
    (0..n)
        .map(|r| {
            let mut cells: Vec<_> = frames.iter().map(|f| ws.cell(f[r] as usize)).collect();
            let last = *cells.last().expect("non-empty");
            while cells.len() > 1 && cells[cells.len() - 2] == last {
                cells.pop();
            }
            Path(cells)
        })
        .collect()
}
