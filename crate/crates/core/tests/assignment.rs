use amapf::assignment::{compute_assignment, hungarian, CostMatrix, EdgeSet};
use amapf::grid::{random_instance, Cost};
use amapf::oracle::{distance_table, enumerate_table};
use amapf::pathfinding::{path_cost, LowLevel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn hungarian_examples() {
    assert_eq!(hungarian(&[vec![Some(5)]]), Some(vec![0]));
    assert_eq!(hungarian(&[vec![Some(1), Some(2)], vec![Some(2), Some(4)]]), Some(vec![1, 0]));
    assert_eq!(hungarian(&[vec![None, Some(1)], vec![None, Some(2)]]), None);
}

#[test]
fn hungarian_follows_column_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..300 {
        let t: Vec<Vec<Option<Cost>>> = (0..4).map(|_| (0..5).map(|_| Some(rng.gen_range(0..30))).collect()).collect();
        let m = hungarian(&t).unwrap();
        let cost: Cost = m.iter().enumerate().map(|(r, &g)| t[r][g].unwrap()).sum();
        let perm = [3, 0, 4, 1, 2];
        let shuffled: Vec<Vec<Option<Cost>>> = t.iter().map(|row| perm.iter().map(|&j| row[j]).collect()).collect();
        let m2 = hungarian(&shuffled).unwrap();
        let cost2: Cost = m2.iter().enumerate().map(|(r, &g)| shuffled[r][g].unwrap()).sum();
        assert_eq!(cost, cost2);
    }
}

#[test]
fn lazy_assignment_is_optimal() {
    let mut checked = 0;
    for seed in 0..500u64 {
        let side = 4 + (seed % 5) as u32;
        let robots = 1 + (seed % 5) as usize;
        let od = [0.0, 0.1, 0.2, 0.3][(seed / 5 % 4) as usize];
        let Ok(inst) = random_instance(seed, side, side, od, robots) else {
            continue;
        };
        let want = enumerate_table(&distance_table(&inst)).first().map(|m| m.1);
        let mut low = LowLevel::new(&inst);
        let mut matrix = CostMatrix::manhattan(&inst);
        let got = compute_assignment(&mut matrix, &EdgeSet::new(), &EdgeSet::new(), &mut low);
        assert_eq!(got.as_ref().map(|a| a.cost), want, "seed {seed}");
        if let Some(a) = got {
            let sum: Cost = a.paths.iter().map(|p| path_cost(p)).sum();
            assert_eq!(sum, a.cost);
        }
        checked += 1;
    }
    assert!(checked >= 450, "only {checked} instances generated");
}

#[test]
fn include_and_omit_are_respected() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for seed in 0..300u64 {
        let inst = random_instance(seed, 6, 6, 0.15, 4).unwrap();
        let table = distance_table(&inst);
        let all = enumerate_table(&table);
        let mut include = EdgeSet::new();
        let mut omit = EdgeSet::new();
        let pivot = &all[rng.gen_range(0..all.len())].0;
        for (r, &g) in pivot.iter().enumerate() {
            match rng.gen_range(0..3) {
                0 => {
                    include.insert(r, g);
                }
                1 => {
                    omit.insert(r, rng.gen_range(0..4));
                }
                _ => {}
            }
        }
        if include.iter().any(|(r, g)| omit.contains(r, g)) {
            continue;
        }
        let want = all
            .iter()
            .find(|(m, _)| include.iter().all(|(r, g)| m[r] == g) && m.iter().enumerate().all(|(r, &g)| !omit.contains(r, g)))
            .map(|(_, c)| *c);
        let mut low = LowLevel::new(&inst);
        let mut matrix = CostMatrix::manhattan(&inst);
        let got = compute_assignment(&mut matrix, &omit, &include, &mut low);
        assert_eq!(got.as_ref().map(|a| a.cost), want, "seed {seed}");
        if let Some(a) = got {
            assert!(include.iter().all(|(r, g)| a.matching[r] == g));
            assert!(a.matching.iter().enumerate().all(|(r, &g)| !omit.contains(r, g)));
        }
    }
}

#[test]
fn obstacle_free_needs_one_round() {
    for seed in 0..100 {
        let inst = random_instance(seed, 8, 8, 0.0, 4).unwrap();
        let mut low = LowLevel::new(&inst);
        let mut matrix = CostMatrix::manhattan(&inst);
        compute_assignment(&mut matrix, &EdgeSet::new(), &EdgeSet::new(), &mut low).unwrap();
        assert_eq!(matrix.actual_computed, 4, "seed {seed}");
    }
}

#[test]
fn lazy_matrix_computes_fewer_entries() {
    let mut fewer = 0;
    for seed in 0..200u64 {
        let inst = random_instance(seed, 8, 8, 0.2, 4).unwrap();
        let mut low = LowLevel::new(&inst);
        let mut lazy = CostMatrix::manhattan(&inst);
        let a = compute_assignment(&mut lazy, &EdgeSet::new(), &EdgeSet::new(), &mut low);
        let mut eager = CostMatrix::eager(&mut low);
        let b = compute_assignment(&mut eager, &EdgeSet::new(), &EdgeSet::new(), &mut low);
        assert_eq!(a.map(|a| a.cost), b.map(|b| b.cost), "seed {seed}");
        if lazy.actual_computed < 16 {
            fewer += 1;
        }
    }
    assert!(fewer >= 180, "{fewer}/200");
}

#[test]
fn matrix_only_moves_towards_actual() {
    let inst = random_instance(9, 8, 8, 0.25, 4).unwrap();
    let mut low = LowLevel::new(&inst);
    let mut matrix = CostMatrix::manhattan(&inst);
    let before = matrix.clone();
    let mut omit = EdgeSet::new();
    for g in 0..4 {
        compute_assignment(&mut matrix, &omit, &EdgeSet::new(), &mut low);
        omit.insert(0, g);
    }
    for r in 0..4 {
        for g in 0..4 {
            let (old, new) = (before.get(r, g), matrix.get(r, g));
            if let (Some(o), Some(n)) = (old.value(), new.value()) {
                assert!(n >= o);
            }
            if old.is_actual() {
                assert_eq!(old, new);
            }
        }
    }
}
