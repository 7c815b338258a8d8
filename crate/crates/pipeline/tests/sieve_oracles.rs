//! Cross-checks the SMO dual solver against an independent projected
//! gradient oracle on randomized small instances.

use pf_numcore::Rng;
use pf_pipeline::sieve::reference::{decision_reference, solve_dual_reference};
use pf_pipeline::sieve::{decision_value, dual_objective, train_ocsvm};

fn random_instance(rng: &mut Rng, l: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..l)
        .map(|_| (0..dim).map(|_| rng.uniform() * 4.0 - 2.0).collect())
        .collect()
}

#[test]
fn smo_matches_projected_gradient_on_random_instances() {
    let mut rng = Rng::new(51_303);
    for case in 0..40 {
        let l = 2 + rng.below(7); // 2..=8
        let dim = 2;
        let features = random_instance(&mut rng, l, dim);
        let nu = 0.15 + 0.7 * rng.uniform();
        let gamma = 0.3 + 1.5 * rng.uniform();

        let (model, diag) = train_ocsvm(&features, nu, gamma).unwrap();
        let oracle = solve_dual_reference(&features, nu, gamma).unwrap();

        assert!(
            (diag.objective - oracle.objective).abs() <= 1e-6,
            "case {case}: objective {} vs oracle {}",
            diag.objective,
            oracle.objective
        );

        for probe in random_instance(&mut rng, 5, dim) {
            let ours = decision_value(&model, &probe).unwrap();
            let theirs = decision_reference(&features, &oracle, gamma, &probe).unwrap();
            assert!(
                (ours - theirs).abs() <= 1e-6,
                "case {case}: decision {ours} vs oracle {theirs}"
            );
        }

        // The dual objective recomputed from the full β vector agrees with
        // the solver's own bookkeeping.
        let recomputed = dual_objective(&features, &diag.betas, gamma);
        assert!((recomputed - diag.objective).abs() < 1e-10);
    }
}

#[test]
fn nu_property_holds_across_random_instances() {
    let mut rng = Rng::new(77);
    for _ in 0..25 {
        let l = 4 + rng.below(5);
        let features = random_instance(&mut rng, l, 2);
        let nu = 0.2 + 0.6 * rng.uniform();
        let (model, diag) = train_ocsvm(&features, nu, 1.0).unwrap();
        let slack = 1.0 / l as f64 + 1e-9;
        let outliers = features
            .iter()
            .filter(|f| decision_value(&model, f).unwrap() < -1e-9)
            .count() as f64
            / l as f64;
        let svs = diag.betas.iter().filter(|&&b| b > 0.0).count() as f64 / l as f64;
        assert!(outliers <= nu + slack, "outlier fraction {outliers} vs nu {nu}");
        assert!(svs >= nu - slack, "sv fraction {svs} vs nu {nu}");
    }
}
