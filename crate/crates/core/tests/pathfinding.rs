use amapf::grid::{random_instance, true_distance_field, Cell, Cost, Instance, Workspace};
use amapf::pathfinding::{astar, path_cost, satisfies, Constraint, ConstraintSet, LowLevel, Path};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn moves_ok(ws: &Workspace, p: &Path, start: Cell, goal: Cell) -> bool {
    p.cells()[0] == start
        && p.last() == goal
        && p.cells().iter().all(|&c| ws.is_free(c))
        && p.cells().windows(2).all(|w| amapf::grid::manhattan(w[0], w[1]) <= 1)
}

// Forward reachability layer by layer over (cell, t), then the earliest t at
// the goal after which resting there is never forbidden.
fn layered_cost(ws: &Workspace, start: Cell, goal: Cell, cset: &ConstraintSet) -> Option<Cost> {
    let blocked = |c: Cell, t: u32| cset.contains(&Constraint::Vertex { cell: c, t });
    let tmax = cset.max_time().unwrap_or(0);
    let horizon = ws.num_cells() as u32 + tmax + 1;
    let rest_ok = |t: u32| (t..=tmax + 1).all(|u| !blocked(goal, u));
    if blocked(start, 0) {
        return None;
    }
    let mut layer = vec![false; ws.num_cells()];
    layer[ws.index(start)] = true;
    for t in 0..=horizon {
        if layer[ws.index(goal)] && rest_ok(t) {
            return Some(t as Cost);
        }
        let mut next = vec![false; ws.num_cells()];
        for (i, _) in layer.iter().enumerate().filter(|(_, &on)| on) {
            let c = ws.cell(i);
            for d in ws.neighbors(c).chain(std::iter::once(c)) {
                let edge = Constraint::Edge { from: c, to: d, t };
                if (d == c || !cset.contains(&edge)) && !blocked(d, t + 1) {
                    next[ws.index(d)] = true;
                }
            }
        }
        layer = next;
    }
    None
}

fn random_cset(rng: &mut ChaCha8Rng, ws: &Workspace, count: usize) -> ConstraintSet {
    let free: Vec<Cell> = ws.free_cells().collect();
    let mut cset = ConstraintSet::new();
    for _ in 0..count {
        let c = free[rng.gen_range(0..free.len())];
        let t = rng.gen_range(0..8);
        if rng.gen_bool(0.6) {
            cset.insert(Constraint::Vertex { cell: c, t });
        } else {
            let nbrs: Vec<Cell> = ws.neighbors(c).collect();
            if !nbrs.is_empty() {
                let to = nbrs[rng.gen_range(0..nbrs.len())];
                cset.insert(Constraint::Edge { from: c, to, t });
            }
        }
    }
    cset
}

fn small_instance(seed: u64) -> Instance {
    let w = 3 + (seed % 4) as u32;
    let h = 3 + (seed / 4 % 4) as u32;
    random_instance(seed, w, h, 0.2, 1).unwrap()
}

#[test]
fn astar_matches_layered_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..600 {
        let inst = small_instance(seed);
        let ws = &inst.workspace;
        let (s, g) = (inst.starts[0], inst.goals[0]);
        let count = rng.gen_range(0..=6);
        let cset = random_cset(&mut rng, ws, count);
        let field = true_distance_field(ws, g);
        let got = astar(ws, s, g, &cset, &field);
        let want = layered_cost(ws, s, g, &cset);
        assert_eq!(got.as_ref().map(path_cost), want, "seed {seed} constraints {cset:?}");
        if let Some(p) = got {
            assert!(moves_ok(ws, &p, s, g), "seed {seed}: malformed path");
            assert!(satisfies(&p, &cset), "seed {seed}: constraint violated");
        }
    }
}

#[test]
fn corridor_costs() {
    let ws = Workspace::new(5, 1, []).unwrap();
    let (s, g) = (Cell::new(0, 0), Cell::new(4, 0));
    let field = true_distance_field(&ws, g);
    let free = astar(&ws, s, g, &ConstraintSet::new(), &field).unwrap();
    assert_eq!(path_cost(&free), 4);
    let cset: ConstraintSet = [Constraint::Vertex { cell: Cell::new(1, 0), t: 1 }].into_iter().collect();
    let p = astar(&ws, s, g, &cset, &field).unwrap();
    assert_eq!(path_cost(&p), 5);
    assert_eq!(layered_cost(&ws, s, g, &cset), Some(5));
}

#[test]
fn goal_constraint_after_arrival_delays_finish() {
    let ws = Workspace::new(3, 1, []).unwrap();
    let (s, g) = (Cell::new(0, 0), Cell::new(2, 0));
    let field = true_distance_field(&ws, g);
    let cset: ConstraintSet = [Constraint::Vertex { cell: g, t: 5 }].into_iter().collect();
    let p = astar(&ws, s, g, &cset, &field).unwrap();
    assert!(satisfies(&p, &cset));
    assert_eq!(path_cost(&p), 6);
}

#[test]
fn unconstrained_cost_is_true_distance() {
    for seed in 0..300 {
        let inst = random_instance(seed, 8, 8, 0.25, 1).unwrap();
        let ws = &inst.workspace;
        let field = true_distance_field(ws, inst.goals[0]);
        let p = astar(ws, inst.starts[0], inst.goals[0], &ConstraintSet::new(), &field);
        assert_eq!(p.as_ref().map(path_cost), field.get(inst.starts[0]), "seed {seed}");
    }
}

#[test]
fn memo_returns_fresh_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inst = random_instance(3, 6, 6, 0.15, 3).unwrap();
    let mut memo = LowLevel::new(&inst);
    let mut fresh = LowLevel::new(&inst);
    let keys: Vec<_> = (0..100)
        .map(|_| {
            let r = rng.gen_range(0..3);
            let g = rng.gen_range(0..3);
            let count = rng.gen_range(0..4);
            (r, g, random_cset(&mut rng, &inst.workspace, count))
        })
        .collect();
    for (r, g, cset) in keys.iter().chain(keys.iter()) {
        let a = memo.constrained_path(*r, *g, cset, true);
        let b = fresh.plan(*r, *g, cset);
        assert_eq!(a.as_deref().map(path_cost), b.as_ref().map(path_cost));
    }
    assert!(memo.cache.hits >= 100);
    assert_eq!(memo.astar_calls, memo.cache.misses);
}

#[test]
fn memo_hit_is_identical() {
    let inst = random_instance(5, 6, 6, 0.1, 2).unwrap();
    let mut low = LowLevel::new(&inst);
    let cset: ConstraintSet = [Constraint::Vertex { cell: inst.goals[0], t: 2 }].into_iter().collect();
    let a = low.constrained_path(0, 0, &cset, true);
    let hits = low.cache.hits;
    let b = low.constrained_path(0, 0, &cset, true);
    assert_eq!(a, b);
    assert_eq!(low.cache.hits, hits + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn adding_a_constraint_never_helps(seed in 0u64..10_000, extra in 0u64..10_000) {
        let inst = small_instance(seed);
        let ws = &inst.workspace;
        let (s, g) = (inst.starts[0], inst.goals[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(extra);
        let base = random_cset(&mut rng, ws, 3);
        let more = random_cset(&mut rng, ws, 1);
        let mut bigger = base.clone();
        for c in more.iter() {
            bigger.insert(*c);
        }
        let field = true_distance_field(ws, g);
        let before = astar(ws, s, g, &base, &field).map(|p| path_cost(&p));
        let after = astar(ws, s, g, &bigger, &field).map(|p| path_cost(&p));
        match (before, after) {
            (Some(b), Some(a)) => prop_assert!(a >= b),
            (None, Some(_)) => prop_assert!(false, "constraint made an infeasible query feasible"),
            _ => {}
        }
    }

    #[test]
    fn distance_field_dominates_manhattan(seed in 0u64..10_000) {
        let inst = random_instance(seed, 7, 7, 0.3, 1).unwrap();
        let ws = &inst.workspace;
        let field = true_distance_field(ws, inst.goals[0]);
        for c in ws.free_cells() {
            if let Some(d) = field.get(c) {
                prop_assert!(d >= amapf::grid::manhattan(c, inst.goals[0]));
            }
        }
    }
}
