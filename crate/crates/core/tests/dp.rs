use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dpss::data::generate_synthetic;
use dpss::dp::{
    build_p0, epsilon_prime, exact_exponential_mechanism, mistakes_distribution, mistakes_scores, mistakes_support_law,
    privacy_audit, sample_top_r, sensitivity_ls, top_r_scores, AuditSpec, Horizon, MechanismKind, PrivacyParams,
};
use dpss::enumeration::{brute_force_enumerate, score_table, EnumerationSettings, Enumerator};
use dpss::solvers::InnerSolver;
use dpss::{DataBounds, Dataset, LossKind, Objective, Support, SynthConfig};

fn clipped(n: usize, p: usize, s: usize, seed: u64) -> Dataset {
    let (d, _) = generate_synthetic(&SynthConfig { n, p, s, rho: 0.1, snr: 3.0, seed }).unwrap();
    LossKind::LeastSquares.clip(&d, DataBounds::default())
}

#[test]
fn epsilon_prime_reference_value() {
    // Reference from 60-digit arithmetic.
    let params = PrivacyParams { epsilon: 1.0, horizon: Horizon::Finite(5), r_count: 3 };
    let got = epsilon_prime(&params, 6, 2, 20, 3.525, 0.5).unwrap();
    let want = 1.003_902_490_813_364;
    assert!((got - want).abs() <= 1e-13 * want, "{got} vs {want}");
}

#[test]
fn audit_of_identical_datasets_is_zero() {
    let d = clipped(40, 6, 2, 5);
    for mechanism in [MechanismKind::Exponential, MechanismKind::TopR(3), MechanismKind::Mistakes] {
        let spec = AuditSpec {
            mechanism,
            epsilon: 1.0,
            loss: LossKind::LeastSquares,
            s: 2,
            radius: 1.1,
            bounds: DataBounds::default(),
            solver: InnerSolver::default(),
        };
        assert_eq!(privacy_audit(&d, &d, &spec).unwrap().max_log_ratio, 0.0);
    }
}

#[test]
fn top_r_sampler_matches_exact_law_small() {
    let (p, s, r_count, draws) = (6, 2, 4, 100_000);
    let d = clipped(30, p, s, 21);
    let e = brute_force_enumerate(&d, LossKind::LeastSquares, s, 1.1, r_count, &InnerSolver::default()).unwrap();
    let delta = sensitivity_ls(DataBounds::default(), 1.1, s).unwrap().delta;
    let eps = 4.0;
    let dist = build_p0(&e, delta, eps).unwrap();
    let obj = Objective::new(&d, LossKind::LeastSquares).unwrap();
    let table = score_table(&obj, s, 1.1, &InnerSolver::default(), 1_000).unwrap();
    let exact = exact_exponential_mechanism(&top_r_scores(&table, r_count).unwrap(), delta, eps).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts: HashMap<Support, usize> = HashMap::new();
    for _ in 0..draws {
        *counts.entry(sample_top_r(&e, &dist, Horizon::Infinite, &mut rng)).or_default() += 1;
    }
    let tv: f64 = table
        .iter()
        .zip(&exact.weights)
        .map(|(t, w)| (counts.get(&t.support).copied().unwrap_or(0) as f64 / draws as f64 - w).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv <= 0.02, "TV {tv}");
}

#[test]
fn mistakes_law_matches_exponential_mechanism_on_class_scores() {
    let (p, s) = (10, 3);
    for seed in 0..3 {
        let d = clipped(200, p, s, 40 + seed);
        let mut st = EnumerationSettings::new(s, 1.1, 0.3);
        st.oa.a = 1e-6;
        st.oa.b = 5e-6;
        st.oa.exact = true;
        let e = Enumerator::new(&d, LossKind::LeastSquares, st).unwrap().mistakes().unwrap();
        let obj = Objective::new(&d, LossKind::LeastSquares).unwrap();
        let table = score_table(&obj, s, 1.1, &InnerSolver::default(), 1_000).unwrap();
        let delta = sensitivity_ls(DataBounds::default(), 1.1, s).unwrap().delta;
        let dist = mistakes_distribution(&e, delta, 1.0).unwrap();
        let law = mistakes_support_law(&e, &dist, &table);
        let exact = exact_exponential_mechanism(&mistakes_scores(&table).unwrap(), delta, 1.0).unwrap();
        assert!((law.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-12);
        for ((support, got), want) in law.iter().zip(&exact.weights) {
            assert!((got - want).abs() <= 1e-6 * want, "seed {seed} {support}: {got} vs {want}");
        }
    }
}
