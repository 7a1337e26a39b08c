//! Library routines checked against brute-force references.

use featseg::simplex::project_simplex;
use featseg::solver::{potts_energy, solve, DualField, IndicatorField, LabelField, SolverParams};
use featseg_oracle as oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn simplex_projection_matches_support_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let k = rng.gen_range(1..=6);
        let scale = [0.1, 1.0, 10.0][rng.gen_range(0..3)];
        let y: Vec<f64> = (0..k).map(|_| rng.gen_range(-scale..scale)).collect();
        let fast = project_simplex(&y).unwrap();
        let slow = oracle::simplex_projection(&y);
        for (a, b) in fast.weights().iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9, "{y:?}: {:?} vs {slow:?}", fast.weights());
        }
    }
}

/// Two-label 4x4 instance: a random axis-aligned split plus noise, with
/// squared-distance costs to the two levels 0 and 1.
fn planted_instance(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let vertical = rng.gen_bool(0.5);
    let cut = rng.gen_range(1..4);
    let mut f = Vec::with_capacity(32);
    for y in 0..4 {
        for x in 0..4 {
            let side = if vertical { x >= cut } else { y >= cut };
            let g = side as u8 as f64 + rng.gen_range(-0.6..0.6);
            f.push(g * g);
            f.push((g - 1.0) * (g - 1.0));
        }
    }
    f
}

#[test]
fn relaxed_solution_is_near_optimal_partition() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lambda = 0.1;
    for trial in 0..5 {
        let f = planted_instance(&mut rng);
        let ind = IndicatorField::new(4, 4, 2, f.clone()).unwrap();
        let mut params = SolverParams::with_lambda(lambda);
        params.epsilon = 1e-6;
        let out = solve(&ind, &LabelField::uniform(4, 4, 2), &DualField::zeros(4, 4, 2), &params).unwrap();
        let labels = out.u.hard_labels();
        let ours = potts_energy(&ind, &labels, lambda);
        let direct = oracle::partition_energy(&f, 4, 4, 2, &labels, lambda);
        assert!((ours - direct).abs() < 1e-12);
        let (_, best) = oracle::partition_minimum(&f, 4, 4, 2, lambda);
        assert!(ours <= best * 1.02 + 1e-12, "trial {trial}: {ours} vs optimum {best}");
    }
}
