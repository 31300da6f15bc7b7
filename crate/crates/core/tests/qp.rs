use bridgelearn_core::qp::{solve_simplex_qp, solve_simplex_qp_from, SimplexQp};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `H = MᵀM` for a random `d × k` matrix, so possibly rank deficient.
fn random_qp(seed: u64) -> SimplexQp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=30);
    let d = rng.random_range(1..=20);
    let m: Vec<f64> = (0..d * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut h = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let v: f64 = (0..d).map(|r| m[r * k + i] * m[r * k + j]).sum();
            h[i * k + j] = v;
            h[j * k + i] = v;
        }
    }
    let c = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
    SimplexQp::new(h, c).unwrap()
}

fn random_simplex_point(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solution_is_feasible_and_optimal(seed in any::<u64>()) {
        let qp = random_qp(seed);
        let sol = solve_simplex_qp(&qp).unwrap();
        prop_assert!(sol.alpha.iter().all(|&a| a >= 0.0));
        prop_assert!((sol.alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(sol.residual <= qp.tol);
        prop_assert!((qp.kkt_residual(&sol.alpha) - sol.residual).abs() <= 1e-9);
        prop_assert_eq!(sol.dual_value, qp.objective(&sol.alpha));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..20 {
            let other = random_simplex_point(&mut rng, qp.dim());
            prop_assert!(qp.objective(&other) <= sol.dual_value + 1e-9);
        }
    }

    #[test]
    fn warm_start_reaches_the_same_value(seed in any::<u64>()) {
        let qp = random_qp(seed);
        let cold = solve_simplex_qp(&qp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let start = random_simplex_point(&mut rng, qp.dim());
        let warm = solve_simplex_qp_from(&qp, Some(&start)).unwrap();
        prop_assert!((cold.dual_value - warm.dual_value).abs() <= 1e-9);
        let again = solve_simplex_qp_from(&qp, Some(&start)).unwrap();
        prop_assert_eq!(warm, again);
    }
}
