mod common;

use std::sync::Arc;

use common::{bcd_oracle, random_spd, rng};
use fudge_core::curvefit::fit_curve;
use fudge_core::fpca::{score_covariance, Population, ScoreCovariance, ScoreMatrix};
use fudge_core::fudge::{self, EdgeSet, FudgeConfig};
use fudge_core::funcbasis::BasisSpec;
use fudge_core::linalg;
use fudge_core::simgen::{self, Model, SimConfig, PD_MARGIN};
use fudge_core::tuneval::{self, RocCurve, RocPoint};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn sampled_coefficients_have_the_target_covariance() {
    // mp = 10; noiseless curves on a fine grid recover the coefficients exactly.
    let (p, m, n) = (2, 5, 5000);
    let mut r = rng(21);
    let omega = random_spd(&mut r, p * m, 0.5, 2.0);
    let gen = Arc::new(simgen::disjoint_cosine_basis(m).unwrap());
    let data = simgen::sample_functional_data(&omega, &gen, n, 60, 0.0, 8).unwrap();
    let mut emp = DMatrix::<f64>::zeros(p * m, p * m);
    for i in 0..n {
        let mut v = DVector::zeros(p * m);
        for j in 0..p {
            let c = data.curve(i, j);
            let fit = fit_curve(c.times(), c.values(), &gen).unwrap();
            v.rows_mut(j * m, m).copy_from(fit.coeffs());
        }
        emp.ger(1.0 / n as f64, &v, &v, 1.0);
    }
    let target = omega.try_inverse().unwrap();
    let rel = (&emp - &target).norm() / target.norm();
    assert!(rel < 0.1, "relative error {rel}");
}

#[test]
fn generated_pairs_are_positive_definite_with_margin() {
    for seed in 0..6u64 {
        for (model, p) in [(Model::M1, 12), (Model::M1, 30), (Model::M2, 9), (Model::M3, 10), (Model::M3, 30)] {
            let pair = simgen::generate_pair(model, p, 5, seed).unwrap();
            for om in [&pair.omega_x, &pair.omega_y] {
                assert!(linalg::eigenvalue_range(om).0 >= PD_MARGIN - 1e-9);
                assert_eq!(linalg::asymmetry(om), 0.0);
            }
        }
    }
}

#[test]
fn model_supports() {
    for p in [7, 8, 15, 40] {
        let pair = simgen::gen_model2(p, 5).unwrap();
        let want = EdgeSet::from_pairs(p, [(0, 3), (1, 4), (2, 5), (3, 6)]).unwrap();
        assert_eq!(simgen::true_diff_edges(&pair), want);
    }
    let pair = simgen::gen_model3(30, 5, 4).unwrap();
    assert_eq!(simgen::true_diff_edges(&pair).len(), 3);
    let pair = simgen::gen_model1(30, 5, 4).unwrap();
    let graph = fudge::edges_from_blocks(&pair.omega_x, 5, 0.0);
    assert_eq!(graph.len(), 87);
}

#[test]
fn fixed_seed_generation_is_bit_identical() {
    for model in [Model::M1, Model::M3] {
        let a = simgen::generate_pair(model, 20, 5, 17).unwrap();
        let b = simgen::generate_pair(model, 20, 5, 17).unwrap();
        assert!(a.omega_x.iter().zip(b.omega_x.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        assert!(a.omega_y.iter().zip(b.omega_y.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}

#[test]
fn roc_on_enumerated_three_node_toy() {
    let truth = EdgeSet::from_pairs(3, [(0, 1)]).unwrap();
    let sets = [
        (3.0, EdgeSet::empty(3)),
        (2.0, EdgeSet::from_pairs(3, [(0, 1)]).unwrap()),
        (1.0, EdgeSet::from_pairs(3, [(0, 1), (1, 2)]).unwrap()),
        (0.5, EdgeSet::from_pairs(3, [(0, 1), (0, 2), (1, 2)]).unwrap()),
    ];
    let curve = tuneval::roc_from_edge_sets(&sets, &truth).unwrap();
    let got: Vec<(f64, f64)> = curve.points.iter().map(|pt| (pt.fpr, pt.tpr)).collect();
    assert_eq!(got, vec![(0.0, 0.0), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]);
    assert_eq!(tuneval::auc(&curve).unwrap(), 1.0);

    let by_lambda = tuneval::roc_from_lambda_sweep(
        |l| Ok(sets.iter().find(|(k, _)| *k == l).unwrap().1.clone()),
        &[3.0, 2.0, 1.0, 0.5],
        &truth,
    )
    .unwrap();
    assert_eq!(by_lambda, curve);
    assert!(tuneval::roc_from_edge_sets(&sets, &EdgeSet::empty(3)).is_err());
}

#[test]
fn multiple_vote_matches_enumeration() {
    let mut r = rng(31);
    let p = 3;
    let covs: Vec<(ScoreCovariance, ScoreCovariance)> = (0..15)
        .map(|_| {
            let sx = random_spd(&mut r, p, 0.5, 2.0);
            let sy = random_spd(&mut r, p, 0.5, 2.0);
            (
                ScoreCovariance::from_matrix(Population::X, p, 1, sx).unwrap(),
                ScoreCovariance::from_matrix(Population::Y, p, 1, sy).unwrap(),
            )
        })
        .collect();
    let lmax = tuneval::multiple_lambda_max(&covs);
    let grid: Vec<f64> = [0.05, 0.2, 0.4, 0.7].iter().map(|f| f * lmax).collect();
    let cfg = FudgeConfig {
        tol: 1e-13,
        max_iters: 200_000,
        ..FudgeConfig::default()
    };
    let got = tuneval::multiple_from_covariances(&covs, &grid, &cfg).unwrap();
    for (lambda, edges) in grid.iter().zip(&got) {
        let mut votes = DMatrix::<usize>::zeros(p, p);
        for (sx, sy) in &covs {
            let (delta, _) = bcd_oracle(sx.matrix(), sy.matrix(), *lambda, 1, 1_000_000);
            for j in 0..p {
                for l in j + 1..p {
                    if delta[(j, l)].abs() > 1e-9 || delta[(l, j)].abs() > 1e-9 {
                        votes[(j, l)] += 1;
                    }
                }
            }
        }
        for j in 0..p {
            for l in j + 1..p {
                assert_eq!(edges.contains(j, l), votes[(j, l)] >= 8, "λ={lambda} ({j},{l}) votes {}", votes[(j, l)]);
            }
        }
    }
}

#[test]
fn multiple_on_identical_populations_is_empty_at_large_lambda() {
    let cfg = SimConfig {
        n: 30,
        t: 40,
        ..SimConfig::new(Model::M2, 7, 2)
    };
    let rep = simgen::simulate(&cfg, 0).unwrap();
    let covs = tuneval::baseline_covariances(&rep.x, &rep.x, 15).unwrap();
    let lmax = tuneval::multiple_lambda_max(&covs);
    assert_eq!(lmax, 0.0);
    let sets = tuneval::multiple_from_covariances(&covs, &[1.0, 0.1], &FudgeConfig::default()).unwrap();
    assert!(sets.iter().all(|s| s.is_empty()));
}

fn oracle_scores(omega: &DMatrix<f64>, p: usize, m: usize, n: usize, pop: Population, seed: u64) -> ScoreMatrix {
    let mut r = rng(seed);
    let lt = omega.clone().cholesky().unwrap().l().transpose();
    let mut data = Vec::with_capacity(n * p * m);
    for _ in 0..n {
        let z = DVector::from_fn(p * m, |_, _| StandardNormal.sample(&mut r));
        data.extend(lt.solve_upper_triangular(&z).unwrap().iter());
    }
    ScoreMatrix::from_vec(pop, n, p, m, data).unwrap()
}

/// SCV prefers a pattern covering the true differential edges over the empty
/// pattern on Model 2 with exact generator coefficients as scores.
#[test]
fn scv_prefers_the_pattern_covering_truth() {
    let (p, m, n) = (7, 5, 400);
    let pair = simgen::gen_model2(p, m).unwrap();
    let truth = simgen::true_diff_edges(&pair);
    let mut wins = 0;
    let mut counted = 0;
    for rep in 0..20u64 {
        let ax = oracle_scores(&pair.omega_x, p, m, n, Population::X, 1000 + rep);
        let ay = oracle_scores(&pair.omega_y, p, m, n, Population::Y, 2000 + rep);
        let (sx, sy) = (score_covariance(&ax).unwrap(), score_covariance(&ay).unwrap());
        let lmax = fudge::zero_solution_threshold(&sx, &sy);
        // Largest λ on a fine path whose pattern covers the truth.
        let covering = linalg::log_grid_desc(lmax, lmax * 1e-2, 60).into_iter().find(|&l| {
            let est = fudge::solve_fudge(&sx, &sy, &FudgeConfig::with_lambda(l)).unwrap();
            let e = fudge::threshold_edges(&est, 0.0);
            e.intersection_len(&truth) == truth.len()
        });
        let Some(covering) = covering else { continue };
        counted += 1;
        let res = tuneval::scv_select_lambda(&ax, &ay, &[lmax * 1.01, covering], 5, rep, &FudgeConfig::default()).unwrap();
        if res.chosen == covering {
            wins += 1;
        }
    }
    assert!(counted >= 16, "a covering pattern was found in only {counted} replicates");
    assert!(wins as f64 >= 0.8 * counted as f64, "{wins}/{counted}");
}

#[test]
fn scv_single_candidate_and_empty_pattern() {
    let pair = simgen::gen_model2(7, 2).unwrap();
    let ax = oracle_scores(&pair.omega_x, 7, 2, 50, Population::X, 1);
    let ay = oracle_scores(&pair.omega_y, 7, 2, 50, Population::Y, 2);
    let one = tuneval::scv_select_lambda(&ax, &ay, &[0.3], 5, 0, &FudgeConfig::default()).unwrap();
    assert_eq!(one.chosen, 0.3);
    let huge = tuneval::scv_select_lambda(&ax, &ay, &[1e9], 5, 0, &FudgeConfig::default()).unwrap();
    assert_eq!(huge.scores, vec![0.0]);
}

#[test]
fn cv_picks_a_moderate_number_of_components() {
    for seed in 0..10u64 {
        let cfg = SimConfig::new(Model::M2, 10, 300 + seed);
        let rep = simgen::simulate(&cfg, 0).unwrap();
        let res = tuneval::cv_select_dims(&rep.x, &rep.y, &[15], &[1, 2, 3, 4, 5, 6, 7, 8], 5, seed, &BasisSpec::default())
            .unwrap();
        let (_, m) = res.chosen;
        assert!((3..=6).contains(&m), "seed {seed}: M = {m}");
    }
}

fn roc_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 2..20)
}

proptest! {
    #[test]
    fn auc_is_a_probability_and_envelope_is_monotone(pts in roc_points()) {
        let curve = RocCurve {
            points: pts.iter().enumerate().map(|(k, (f, t))| RocPoint { lambda: k as f64, fpr: *f, tpr: *t }).collect(),
            positives: 4,
            negatives: 10,
        };
        let a = tuneval::auc(&curve).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let env = curve.envelope();
        for w in env.windows(2) {
            prop_assert!(w[0].0 <= w[1].0);
            prop_assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn folds_partition_every_sample(n in 10usize..200, folds in 2usize..6, seed: u64) {
        prop_assume!(n >= 2 * folds);
        let f = tuneval::fold_assignment(n, folds, seed, 0).unwrap();
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(f.iter().all(|x| x.len() >= n / folds));
    }

    #[test]
    fn generated_pairs_stay_positive_definite(seed: u64, p in 4usize..25) {
        let model = if p >= 7 { Model::M2 } else { Model::M3 };
        for model in [model, Model::M1, Model::M3] {
            let pair = simgen::generate_pair(model, p, 3, seed).unwrap();
            prop_assert!(linalg::eigenvalue_range(&pair.omega_x).0 >= PD_MARGIN - 1e-9);
            prop_assert!(linalg::eigenvalue_range(&pair.omega_y).0 >= PD_MARGIN - 1e-9);
        }
    }
}

#[test]
fn edge_rates_use_possible_pairs() {
    let truth = EdgeSet::from_pairs(5, [(0, 1), (2, 3)]).unwrap();
    let est = EdgeSet::from_pairs(5, [(0, 1), (1, 4), (3, 4)]).unwrap();
    let (fpr, tpr) = tuneval::edge_rates(&est, &truth).unwrap();
    assert_eq!(tpr, 0.5);
    assert_eq!(fpr, 2.0 / 8.0);
}
