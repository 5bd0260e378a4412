use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use super::*;
use crate::env::{ActionGrid, FiniteModel};
use crate::models::{GpChannel, GpGridModel, LogisticModel, RbfLinearModel};
use crate::SimRng;

fn seq(env: &Environment, pairs: &[(usize, usize)]) -> DataSequence {
    DataSequence::from_pairs(
        pairs
            .iter()
            .map(|&(x, y)| (env.action(x).clone(), Outcome::Discrete(y)))
            .collect(),
    )
}

fn bandit_env(values: Vec<Vec<f64>>, penalty: PenaltySpec) -> Environment {
    let k = values.len();
    let a = values[0].len();
    let lik = vec![vec![vec![0.5, 0.5]; a]; k];
    Environment::new(
        "bandit",
        ActionGrid::indexed(a),
        Model::Finite(FiniteModel::new(vec![1.0 / k as f64; k], lik, Some(values)).unwrap()),
        penalty,
    )
    .unwrap()
}

fn random_finite(rng: &mut SimRng, k: usize, a: usize, y: usize, penalty: PenaltySpec) -> Environment {
    let lik = (0..k)
        .map(|_| {
            (0..a)
                .map(|_| {
                    let w: Vec<f64> = (0..y).map(|_| rng.random_range(0.05..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    w.into_iter().map(|v| v / s).collect()
                })
                .collect()
        })
        .collect();
    let values = (0..k)
        .map(|_| (0..a).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    Environment::new(
        "random",
        ActionGrid::indexed(a),
        Model::Finite(FiniteModel::new(vec![1.0 / k as f64; k], lik, Some(values)).unwrap()),
        penalty,
    )
    .unwrap()
}

fn prop1_table() -> PenaltySpec {
    PenaltySpec::Table(TablePenalty::with_default(DefaultRule::ForbiddenAction {
        forbidden: vec![1, 0],
    }))
}

#[test]
fn bandit_regret_hand_values() {
    let env = bandit_env(vec![vec![1.0, 3.0, 2.0]], PenaltySpec::BanditRegret { channel: 0 });
    let th = Theta::Index(0);
    let p = &env.penalty;
    assert_eq!(p.evaluate(&env, &th, &seq(&env, &[(1, 0), (0, 1)])).unwrap(), 1.0);
    assert_eq!(p.evaluate(&env, &th, &seq(&env, &[(1, 0)])).unwrap(), 0.0);
    assert_eq!(p.evaluate(&env, &th, &seq(&env, &[(2, 0)])).unwrap(), 0.5);
    assert!(matches!(
        p.evaluate(&env, &th, &DataSequence::empty()),
        Err(Error::UndefinedPenalty(_))
    ));
    assert_eq!(bandit_regret(&[1.0, 3.0, 2.0], &seq(&env, &[(0, 0)])).unwrap(), 1.0);
}

#[test]
fn constant_function_has_zero_regret() {
    let env = bandit_env(vec![vec![0.7; 4]], PenaltySpec::BanditRegret { channel: 0 });
    let d = seq(&env, &[(2, 1)]);
    assert_eq!(env.penalty.evaluate(&env, &Theta::Index(0), &d).unwrap(), 0.0);
    assert_eq!(bo_simple_regret(&[0.7; 4], &d), 0.0);
}

#[test]
fn simple_regret_hand_values() {
    let env = bandit_env(vec![vec![1.0, 3.0, 2.0]], PenaltySpec::BoSimpleRegret { channel: 0 });
    let th = Theta::Index(0);
    let p = &env.penalty;
    assert_eq!(p.evaluate(&env, &th, &seq(&env, &[(0, 0), (2, 1)])).unwrap(), 0.5);
    assert_eq!(p.evaluate(&env, &th, &seq(&env, &[(1, 0), (0, 1)])).unwrap(), 0.0);
    assert_eq!(p.evaluate(&env, &th, &seq(&env, &[(0, 0), (0, 0), (1, 1)])).unwrap(), 0.0);
    assert_eq!(p.evaluate(&env, &th, &DataSequence::empty()).unwrap(), 1.0);
}

#[test]
fn estimation_error_hand_values() {
    let v = estimation_error(&[1.0, 0.0], &[0.0, 0.0], &Normalization::new(2.0));
    assert_eq!(v.value, 0.5);
    assert_eq!(v.raw, 1.0);
    assert_eq!(estimation_error(&[1.0, 2.0], &[1.0, 2.0], &Normalization::new(1.0)).value, 0.0);
    let big = estimation_error(&[10.0], &[0.0], &Normalization::new(2.0));
    assert_eq!(big.value, 1.0);
    assert_eq!(big.raw, 100.0);
}

#[test]
fn transformed_l2_constant_gap() {
    let grid = ActionGrid::regular(&[0.0], &[1.0], &[101]).unwrap();
    let w = grid.quadrature_weights();
    let c = 0.3;
    let target = vec![1.0; 101];
    let est = vec![1.0 - c; 101];
    let v = transformed_l2(&target, &est, &w, Transform::Identity, &Normalization::new(1.0));
    assert!((v.value - c * c).abs() < 1e-12, "{}", v.value);
    let same = transformed_l2(&target, &target, &w, Transform::Identity, &Normalization::new(1.0));
    assert_eq!(same.value, 0.0);
}

#[test]
fn transformed_l2_converges_under_refinement() {
    let value = |n: usize| {
        let grid = ActionGrid::regular(&[0.0], &[1.0], &[n]).unwrap();
        let xs: Vec<f64> = grid.actions().iter().map(|a| a.coords[0]).collect();
        let target: Vec<f64> = xs.iter().map(|x| (std::f64::consts::TAU * x).sin().exp()).collect();
        let est: Vec<f64> = xs.iter().map(|x| 0.5 * x).collect();
        transformed_l2(
            &target,
            &est,
            &grid.quadrature_weights(),
            Transform::Exp,
            &Normalization::new(100.0),
        )
        .value
    };
    let coarse = value(30);
    let fine = value(300);
    assert!(((coarse - fine) / fine).abs() < 0.01, "{coarse} vs {fine}");
}

#[test]
fn combined_hand_values() {
    let w = [1.0 / 3.0; 3];
    assert!((combined_penalty(&w, &[0.3, 0.6, 0.9]) - 0.6).abs() < 1e-15);
    assert_eq!(combined_penalty(&w, &[0.0; 3]), 0.0);
    assert_eq!(combined_penalty(&[0.0, 1.0, 0.0], &[0.3, 0.6, 0.9]), 0.6);
}

#[test]
fn combined_weights_validated() {
    let over = PenaltySpec::Combined {
        components: vec![
            Weighted {
                weight: 0.6,
                penalty: PenaltySpec::constant(0.5),
            },
            Weighted {
                weight: 0.6,
                penalty: PenaltySpec::constant(0.5),
            },
        ],
    };
    let r = Environment::new(
        "c",
        ActionGrid::indexed(2),
        Model::Finite(FiniteModel::new(vec![1.0], vec![vec![vec![1.0]; 2]], None).unwrap()),
        over,
    );
    assert!(matches!(r, Err(Error::InvalidConfig(_))));
}

#[test]
fn combined_is_affine_in_components() {
    let mut rng = SimRng::seed_from_u64(4);
    let parts = [0.2, 0.45, 0.9];
    let w = [0.1, 0.5, 0.3];
    let spec = PenaltySpec::Combined {
        components: parts
            .iter()
            .zip(&w)
            .map(|(&v, &weight)| Weighted {
                weight,
                penalty: PenaltySpec::constant(v),
            })
            .collect(),
    };
    let env = random_finite(&mut rng, 2, 3, 2, spec);
    let v = env.penalty.evaluate(&env, &Theta::Index(1), &seq(&env, &[(0, 1)])).unwrap();
    assert!((v - combined_penalty(&w, &parts)).abs() < 1e-15);
}

#[test]
fn forbidden_action_table() {
    let mut rng = SimRng::seed_from_u64(1);
    let env = random_finite(&mut rng, 2, 2, 2, prop1_table());
    let p = &env.penalty;
    let t0 = Theta::Index(0);
    assert_eq!(p.evaluate(&env, &t0, &DataSequence::empty()).unwrap(), 0.0);
    assert_eq!(p.evaluate(&env, &t0, &seq(&env, &[(0, 0), (0, 1), (0, 0)])).unwrap(), 0.0);
    assert_eq!(p.evaluate(&env, &t0, &seq(&env, &[(1, 0)])).unwrap(), 1.0);
    assert_eq!(p.evaluate(&env, &t0, &seq(&env, &[(0, 0), (1, 1), (0, 0)])).unwrap(), 1.0);
    assert_eq!(p.evaluate(&env, &Theta::Index(1), &seq(&env, &[(0, 0)])).unwrap(), 1.0);
}

#[test]
fn table_rejects_values_outside_unit_interval() {
    let mut rng = SimRng::seed_from_u64(2);
    let bad = PenaltySpec::Table(
        TablePenalty::with_default(DefaultRule::Constant { value: 0.0 }).entry(0, vec![(0, 0)], 1.5),
    );
    let lik = vec![vec![vec![0.5, 0.5]; 2]; 2];
    let _ = &mut rng;
    let r = Environment::new(
        "t",
        ActionGrid::indexed(2),
        Model::Finite(FiniteModel::new(vec![0.5, 0.5], lik, None).unwrap()),
        bad,
    );
    assert!(r.is_err());
}

fn logistic_env() -> Environment {
    let model = LogisticModel::default();
    let est = LogisticMle::gauss_newton(model.prior_mean);
    Environment::new(
        "logistic",
        ActionGrid::regular(&[0.0], &[10.0], &[40]).unwrap(),
        Model::Continuous(Arc::new(ContinuousModel::Logistic(model))),
        PenaltySpec::EstimationError {
            estimator: Estimator::LogisticMle(est),
            normalization: Normalization::new(10.0),
        },
    )
    .unwrap()
}

fn linear_env() -> Environment {
    Environment::new(
        "linear",
        ActionGrid::regular(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap(),
        Model::Continuous(Arc::new(ContinuousModel::RbfLinear(RbfLinearModel::unit_square_4x4()))),
        PenaltySpec::EstimationError {
            estimator: Estimator::PosteriorMean,
            normalization: Normalization::new(16.0),
        },
    )
    .unwrap()
}

fn gp_env(penalty: PenaltySpec) -> Environment {
    let grid = ActionGrid::regular(&[0.0], &[1.0], &[30]).unwrap();
    let ch = |l: f64| GpChannel {
        kernel: RbfKernel::new(vec![l], 1.0).unwrap(),
        mean: 0.0,
        noise_var: 0.01,
    };
    let model = GpGridModel::new(&grid, vec![ch(0.2), ch(0.1), ch(0.3)]).unwrap();
    Environment::new(
        "gp",
        grid,
        Model::Continuous(Arc::new(ContinuousModel::GpGrid(model))),
        penalty,
    )
    .unwrap()
}

fn combined_gp() -> PenaltySpec {
    let l2 = |channel| PenaltySpec::TransformedL2 {
        channel,
        transform: Transform::Identity,
        normalization: Normalization::new(4.0),
    };
    PenaltySpec::Combined {
        components: vec![
            Weighted {
                weight: 1.0 / 3.0,
                penalty: l2(0),
            },
            Weighted {
                weight: 1.0 / 3.0,
                penalty: l2(1),
            },
            Weighted {
                weight: 1.0 / 3.0,
                penalty: PenaltySpec::BoSimpleRegret { channel: 2 },
            },
        ],
    }
}

fn random_run(env: &Environment, theta: &Theta, n: usize, rng: &mut SimRng) -> DataSequence {
    let mut d = DataSequence::empty();
    for _ in 0..n {
        let a = env.action(rng.random_range(0..env.grid.len())).clone();
        let y = env.sample_outcome(theta, &a, rng);
        d = d.concat(a, y);
    }
    d
}

// The fast path must agree with direct evaluation on the extended sequence.
fn check_extension_consistency(env: &Environment, steps: usize, seed: u64, tol: f64) {
    let mut rng = SimRng::seed_from_u64(seed);
    let theta = env.sample_prior(&mut rng);
    let bound = env.penalty.bind(env, &theta).unwrap();
    let d = random_run(env, &theta, steps, &mut rng);
    let prepared = bound.prepare(&d).unwrap();
    for _ in 0..5 {
        let a = env.action(rng.random_range(0..env.grid.len())).clone();
        let ys: Vec<Outcome> = (0..3).map(|_| env.sample_outcome(&theta, &a, &mut rng)).collect();
        let fast = prepared.extend_many(&a, &ys).unwrap();
        for (y, f) in ys.iter().zip(&fast) {
            let direct = bound.eval(&d.concat(a.clone(), y.clone())).unwrap();
            assert!(
                (direct.value - f.value).abs() <= tol && (direct.raw - f.raw).abs() <= tol * (1.0 + direct.raw.abs()),
                "{}: direct {direct:?} fast {f:?}",
                env.id
            );
            assert!((0.0..=1.0).contains(&f.value));
        }
    }
}

#[test]
fn extension_matches_direct_evaluation() {
    for s in 0..3 {
        check_extension_consistency(&logistic_env(), 12, s, 1e-12);
        check_extension_consistency(&linear_env(), 10, s, 1e-9);
        check_extension_consistency(
            &gp_env(PenaltySpec::TransformedL2 {
                channel: 1,
                transform: Transform::Exp,
                normalization: Normalization::new(5.0),
            }),
            8,
            s,
            1e-8,
        );
        check_extension_consistency(&gp_env(combined_gp()), 6, s, 1e-8);
        let mut rng = SimRng::seed_from_u64(s);
        check_extension_consistency(
            &random_finite(&mut rng, 3, 4, 3, PenaltySpec::BoSimpleRegret { channel: 0 }),
            5,
            s,
            0.0,
        );
        check_extension_consistency(&random_finite(&mut rng, 3, 4, 3, prop1_like(3)), 5, s, 0.0);
    }
}

fn prop1_like(k: usize) -> PenaltySpec {
    PenaltySpec::Table(TablePenalty::with_default(DefaultRule::ForbiddenAction {
        forbidden: (0..k).map(|i| i % 4).collect(),
    }))
}

#[test]
fn regret_penalties_ignore_outcomes() {
    let mut rng = SimRng::seed_from_u64(3);
    let env = random_finite(&mut rng, 2, 3, 2, PenaltySpec::BanditRegret { channel: 0 });
    let b = env.penalty.bind(&env, &Theta::Index(1)).unwrap();
    assert!(b.outcome_independent());
    let env = gp_env(combined_gp());
    let th = env.sample_prior(&mut rng);
    assert!(!env.penalty.bind(&env, &th).unwrap().outcome_independent());
}

#[test]
fn perfect_linear_estimate_is_zero() {
    let env = linear_env();
    let b = env.penalty.bind(&env, &Theta::Vector(vec![0.0; 16])).unwrap();
    assert_eq!(b.eval(&DataSequence::empty()).unwrap().value, 0.0);
}

#[test]
fn gp_penalty_zero_when_mean_matches_truth() {
    let env = gp_env(PenaltySpec::TransformedL2 {
        channel: 0,
        transform: Transform::Exp,
        normalization: Normalization::new(1.0),
    });
    // the prior mean is the zero function
    let theta = Theta::Vector(vec![0.0; 90]);
    assert_eq!(env.penalty.evaluate(&env, &theta, &DataSequence::empty()).unwrap(), 0.0);
}

#[test]
fn logistic_penalty_zero_at_anchor() {
    let env = logistic_env();
    let theta = Theta::Vector(vec![2.0, 5.0, 5.0, 0.05]);
    assert_eq!(env.penalty.evaluate(&env, &theta, &DataSequence::empty()).unwrap(), 0.0);
}

fn pairs_strategy(a: usize, y: usize, max: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..a, 0..y), 0..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn finite_penalties_stay_in_unit_interval(seed in 0u64..1000, pairs in pairs_strategy(4, 3, 8), k in 0usize..3) {
        let mut rng = SimRng::seed_from_u64(seed);
        let specs = vec![
            PenaltySpec::BoSimpleRegret { channel: 0 },
            prop1_like(3),
            PenaltySpec::Table(TablePenalty::with_default(DefaultRule::HistoryLength { per_step: 0.3 })),
        ];
        for spec in specs {
            let env = random_finite(&mut rng, 3, 4, 3, spec);
            let v = env.penalty.evaluate(&env, &Theta::Index(k), &seq(&env, &pairs)).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if !pairs.is_empty() {
            let env = random_finite(&mut rng, 3, 4, 3, PenaltySpec::BanditRegret { channel: 0 });
            let v = env.penalty.evaluate(&env, &Theta::Index(k), &seq(&env, &pairs)).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn continuous_penalties_stay_in_unit_interval(seed in 0u64..1000, n in 0usize..6) {
        let mut rng = SimRng::seed_from_u64(seed);
        for env in [linear_env(), gp_env(combined_gp()), logistic_env()] {
            let th = env.sample_prior(&mut rng);
            let d = random_run(&env, &th, n, &mut rng);
            let v = env.penalty.evaluate(&env, &th, &d).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn simple_regret_never_increases(seed in 0u64..1000, pairs in pairs_strategy(5, 2, 10), x in 0usize..5, y in 0usize..2) {
        let mut rng = SimRng::seed_from_u64(seed);
        let env = random_finite(&mut rng, 2, 5, 2, PenaltySpec::BoSimpleRegret { channel: 0 });
        for k in 0..2 {
            let th = Theta::Index(k);
            let d = seq(&env, &pairs);
            let longer = d.concat(env.action(x).clone(), Outcome::Discrete(y));
            prop_assert!(env.penalty.evaluate(&env, &th, &longer).unwrap() <= env.penalty.evaluate(&env, &th, &d).unwrap());
        }
    }

    #[test]
    fn bandit_regret_depends_on_last_pair_only(seed in 0u64..1000, a in pairs_strategy(4, 2, 6), b in pairs_strategy(4, 2, 6), x in 0usize..4, y in 0usize..2) {
        let mut rng = SimRng::seed_from_u64(seed);
        let env = random_finite(&mut rng, 2, 4, 2, PenaltySpec::BanditRegret { channel: 0 });
        let p = (env.action(x).clone(), Outcome::Discrete(y));
        for k in 0..2 {
            let th = Theta::Index(k);
            let va = env.penalty.evaluate(&env, &th, &seq(&env, &a).concat(p.0.clone(), p.1.clone())).unwrap();
            let vb = env.penalty.evaluate(&env, &th, &seq(&env, &b).concat(p.0.clone(), p.1.clone())).unwrap();
            prop_assert_eq!(va, vb);
        }
    }
}
