//! SMO against an exhaustive active-set search of the SVM dual.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sigcamo::classify::svm_train;

mod support;

use support::{brute_force_dual, rbf_gram};

#[test]
fn smo_matches_exhaustive_dual_on_small_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..50 {
        let n = rng.random_range(2..=8);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let mut y: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let c = [0.1, 1.0, 10.0][trial % 3];
        let k = rbf_gram(&points, 1.0);
        let model = svm_train(&k, &y, c, 1e-6).unwrap();
        let oracle = brute_force_dual(&k, &y, c);
        assert!(
            (model.dual_objective - oracle).abs() <= 1e-4,
            "trial {trial}: smo {} vs oracle {oracle}",
            model.dual_objective
        );
        assert!(model.kkt_residual(&k) <= 1e-3, "trial {trial}");
        assert!(model.equality_residual() <= 1e-9, "trial {trial}");
    }
}
