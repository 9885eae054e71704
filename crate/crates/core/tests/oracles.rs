mod common;

use cate_core::dgp::{Scenario, ScenarioFrame};
use cate_core::engine::{self, EngineConfig};
use cate_core::ensemble::{predict_stack, LearnerConfig};
use cate_core::evaluate::{aggregate, PredictionCube};
use cate_core::learners::{l1_coordinate_descent, soft_threshold, stationarity_violation};
use cate_core::metalearners::{final_stage, pseudo_dr, pseudo_r, pseudo_x, MetaLearner};
use cate_core::splitter::{Strategy, StrategySpec};
use cate_core::{seed, LearnerSpec};
use common::{gaussian, orthonormal_design, slope, solve, weighted_ols};
use ndarray::{array, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn lasso_at_zero_penalty_matches_normal_equations() {
    for instance in 0..50u64 {
        let mut rng = seed::rng(seed::derive_index(1, "ols", instance));
        let (n, p) = (40 + instance as usize, 2 + (instance as usize % 6));
        let x = gaussian(n, p, &mut rng);
        let y = Array1::from_shape_fn(n, |_| StandardNormal.sample(&mut rng));
        let oracle = solve(&x.t().dot(&x), &x.t().dot(&y));
        let beta = l1_coordinate_descent(x.view(), y.view(), 0.0).unwrap();
        for (a, b) in beta.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-6, "instance {instance}: {a} vs {b}");
        }
    }
}

#[test]
fn lasso_on_orthonormal_design_soft_thresholds() {
    for instance in 0..50u64 {
        let mut rng = seed::rng(seed::derive_index(2, "ortho", instance));
        let (n, p) = (30, 1 + (instance as usize % 8));
        let x = orthonormal_design(n, p, seed::derive_index(3, "q", instance));
        let y = Array1::from_shape_fn(n, |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            2.0 * z
        });
        let lambda = rng.random_range(0.0..1.5);
        let beta = l1_coordinate_descent(x.view(), y.view(), lambda).unwrap();
        for j in 0..p {
            let expected = soft_threshold(x.column(j).dot(&y), lambda);
            assert!((beta[j] - expected).abs() < 1e-8, "instance {instance} coef {j}");
        }
        assert!(stationarity_violation(x.view(), y.view(), beta.view(), lambda) < 1e-6);
    }
}

#[test]
fn lasso_zero_response_gives_zero() {
    let mut rng = seed::rng(4);
    let x = gaussian(20, 3, &mut rng);
    let beta = l1_coordinate_descent(x.view(), Array1::zeros(20).view(), 0.3).unwrap();
    assert!(beta.iter().all(|&b| b == 0.0));
}

fn scenario(id: &str, n: usize, test_size: usize) -> ScenarioFrame {
    ScenarioFrame::new(&Scenario {
        n,
        test_size,
        ..Scenario::catalog(id).unwrap()
    })
    .unwrap()
}

#[test]
fn dr_pseudo_outcome_is_unbiased_with_true_nuisances() {
    let frame = scenario("A", 100_000, 10);
    let sim = frame.draw_train(11).unwrap();
    let truth = frame.truth();
    let x = sim.data.x.view();
    let psi = pseudo_dr(
        sim.data.y.view(),
        sim.data.d.view(),
        truth.mu0(x).unwrap().view(),
        truth.mu1(x).unwrap().view(),
        truth.e(x).unwrap().view(),
    )
    .unwrap()
    .psi;
    let b = slope(&sim.tau_true, &psi);
    assert!((0.95..=1.05).contains(&b), "slope {b}");
    let n = psi.len() as f64;
    let se = psi.std(1.0) / n.sqrt();
    let gap = (psi.mean().unwrap() - sim.tau_true.mean().unwrap()).abs();
    assert!(gap < 4.0 * se, "gap {gap} vs se {se}");
}

#[test]
fn oracle_dr_predictions_are_calibrated() {
    let frame = scenario("A", 100_000, 2000);
    let sim = frame.draw_train(12).unwrap();
    let config = EngineConfig::oracle(LearnerConfig::only(LearnerSpec::Linear), frame.truth());
    let fit = engine::fit(
        &sim.data,
        MetaLearner::Dr,
        StrategySpec::new(Strategy::Naive, 1).unwrap(),
        &config,
        5,
    )
    .unwrap();
    let pred = fit.predict(frame.test.data.x.view()).unwrap();
    let b = slope(&pred, &frame.test.tau_true);
    assert!((0.9..=1.1).contains(&b), "slope {b}");
}

#[test]
fn x_pseudo_outcomes_center_on_constant_effect() {
    let mut rng = seed::rng(13);
    let n = 20_000;
    let kappa = 1.5;
    let x = gaussian(n, 2, &mut rng);
    let mu0 = x.column(0).mapv(|v| 2.0 * v);
    let mu1 = &mu0 + kappa;
    let d = Array1::from_shape_fn(n, |_| if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 });
    let y = Array1::from_shape_fn(n, |i| {
        let noise: f64 = StandardNormal.sample(&mut rng);
        if d[i] == 1.0 {
            mu1[i] + noise
        } else {
            mu0[i] + noise
        }
    });
    let (t, c) = pseudo_x(y.view(), d.view(), mu0.view(), mu1.view()).unwrap();
    for group in [t, c] {
        let se = group.psi.std(1.0) / (group.len() as f64).sqrt();
        assert!((group.psi.mean().unwrap() - kappa).abs() < 4.0 * se);
    }
}

type RInstance = (Array2<f64>, Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>);

fn r_instance(seed_: u64) -> RInstance {
    let mut rng = seed::rng(seed_);
    let n = 20;
    let x = gaussian(n, 2, &mut rng);
    let d = Array1::from_shape_fn(n, |i| (i % 2) as f64);
    let e = Array1::from_shape_fn(n, |_| rng.random_range(0.1..0.9));
    let mu = x.map_axis(Axis(1), |r| 0.5 * r[0]);
    let y = Array1::from_shape_fn(n, |i| {
        mu[i] + (1.0 + x[[i, 1]]) * (d[i] - e[i]) + 0.1 * rng.random::<f64>()
    });
    (x, y, d, mu, e)
}

#[test]
fn r_learner_final_stage_is_weighted_least_squares() {
    let config = LearnerConfig::only(LearnerSpec::Linear);
    for s in 0..5 {
        let (x, y, d, mu, e) = r_instance(s);
        let psi = pseudo_r(y.view(), d.view(), mu.view(), e.view()).unwrap();
        let model = final_stage(&psi, x.view(), &config, 0).unwrap();
        let (b0, b) = weighted_ols(&x, &psi.psi, &psi.weights);
        let pred = predict_stack(&model, x.view()).unwrap();
        let oracle = x.dot(&b) + b0;
        for (p, o) in pred.iter().zip(oracle.iter()) {
            assert!((p - o).abs() < 1e-8, "{p} vs {o}");
        }

        let mut scaled = psi.clone();
        scaled.weights.mapv_inplace(|w| 37.5 * w);
        let rescaled = final_stage(&scaled, x.view(), &config, 0).unwrap();
        let pred2 = predict_stack(&rescaled, x.view()).unwrap();
        assert!((&pred - &pred2).iter().all(|v| v.abs() < 1e-8));
    }
}

#[test]
fn x_blend_lies_between_group_models_with_constant_propensity() {
    let frame = scenario("A", 400, 300);
    let sim = frame.draw_train(14).unwrap();
    let truth = frame.truth();
    let config = EngineConfig::oracle(LearnerConfig::only(LearnerSpec::Linear), truth);
    let fit = engine::fit(
        &sim.data,
        MetaLearner::X,
        StrategySpec::new(Strategy::Split5050, 1).unwrap(),
        &config,
        3,
    )
    .unwrap();
    let x = frame.test.data.x.view();
    let engine::CateModel::Single(model) = &fit.model else {
        panic!("unexpected model shape");
    };
    let engine::FoldModel::X { tau0, tau1, .. } = model.as_ref() else {
        panic!("expected an X-learner fold model");
    };
    let (a, b) = (predict_stack(tau0, x).unwrap(), predict_stack(tau1, x).unwrap());
    let pred = fit.predict(x).unwrap();
    for i in 0..pred.len() {
        let (lo, hi) = (a[i].min(b[i]), a[i].max(b[i]));
        assert!(pred[i] >= lo - 1e-12 && pred[i] <= hi + 1e-12);
        assert!((pred[i] - 0.5 * (a[i] + b[i])).abs() < 1e-12);
    }
}

#[test]
fn naive_t_learner_beats_constant_baseline() {
    let mut rng = seed::rng(15);
    let n = 600;
    let x = gaussian(n, 3, &mut rng);
    let tau = x.column(0).mapv(|v| 1.0 + 2.0 * v);
    let d = Array1::from_shape_fn(n, |_| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 });
    let y = Array1::from_shape_fn(n, |i| x[[i, 1]] - x[[i, 2]] + tau[i] * d[i]);
    let data = cate_core::Dataset::new(x.clone(), d, y).unwrap();
    let config = EngineConfig::learned(LearnerConfig::desk());
    let fit = engine::fit(
        &data,
        MetaLearner::T,
        StrategySpec::new(Strategy::Naive, 1).unwrap(),
        &config,
        1,
    )
    .unwrap();
    let pred = fit.predict(x.view()).unwrap();
    let mse = (&pred - &tau).mapv(|v| v * v).mean().unwrap();
    let baseline = tau.var(0.0);
    assert!(mse < baseline, "{mse} vs {baseline}");
}

#[test]
fn metric_oracle_on_hand_cube() {
    let values = array![[1.0, 4.0], [2.0, 0.0], [6.0, 2.0]];
    let truth = array![2.0, 1.0];
    let r = aggregate(&PredictionCube::new(values, truth).unwrap());
    // Row 1: errors -1, 0, 4 -> MSE 17/3; mean 3 -> |bias| 1; SD sqrt(14/3).
    // Row 2: errors 3, -1, 1 -> MSE 11/3; mean 2 -> |bias| 1; SD sqrt(8/3).
    let mse = (17.0 / 3.0 + 11.0 / 3.0) / 2.0;
    assert!((r.mean_mse - mse).abs() < 1e-12);
    assert!((r.mean_abs_bias - 1.0).abs() < 1e-12);
    assert!((r.mean_sd - ((14.0f64 / 3.0).sqrt() + (8.0f64 / 3.0).sqrt()) / 2.0).abs() < 1e-12);
    // Replication MSEs: (1+9)/2, (0+1)/2, (16+1)/2 -> median 5.
    assert!((r.median_mse - 5.0).abs() < 1e-12);
}
