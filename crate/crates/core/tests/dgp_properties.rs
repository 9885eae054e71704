use cate_core::dgp::{
    baseline_g, draw_covariates, generate_correlation, propensity_score, std_normal_cdf, CorrelationSpec,
    PropensityFamily, Scenario, ScenarioFrame, StandardizationStats,
};
use cate_core::seed;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{array, Array2, Axis};

fn frame(id: &str, n: usize) -> ScenarioFrame {
    ScenarioFrame::new(&Scenario {
        n,
        test_size: 100,
        ..Scenario::catalog(id).unwrap()
    })
    .unwrap()
}

#[test]
fn correlation_is_psd_for_p20_seed7() {
    let c = generate_correlation(&CorrelationSpec { p: 20, seed: 7 }).unwrap();
    let m = DMatrix::from_fn(20, 20, |i, j| c[[i, j]]);
    let eig = SymmetricEigen::new(m);
    assert!(eig.eigenvalues.min() >= -1e-10);
    assert!(c.iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn identity_covariates_are_centered() {
    let n = 100_000;
    let x = draw_covariates(n, &Array2::eye(4), &mut seed::rng(1)).unwrap();
    let bound = 3.0 / (n as f64).sqrt();
    for m in x.mean_axis(Axis(0)).unwrap() {
        assert!(m.abs() < bound, "{m}");
    }
}

#[test]
fn sample_correlation_matches_target() {
    let corr = array![[1.0, 0.8], [0.8, 1.0]];
    let x = draw_covariates(100_000, &corr, &mut seed::rng(2)).unwrap();
    let (a, b) = (x.column(0), x.column(1));
    let (ma, mb) = (a.mean().unwrap(), b.mean().unwrap());
    let cov = a.iter().zip(b.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>();
    let r = cov / ((a.mapv(|u| (u - ma).powi(2)).sum()) * (b.mapv(|v| (v - mb).powi(2)).sum())).sqrt();
    assert!((r - 0.8).abs() < 0.02, "{r}");
}

#[test]
fn linear_propensity_and_treated_share() {
    let f = frame("C", 100_000);
    let sim = f.draw_train(3).unwrap();
    let e = &sim.e_true;
    let var = e.var(0.0);
    assert!(var > 0.0 && var <= 0.25);
    let share = sim.data.d.mean().unwrap();
    assert!((share - e.mean().unwrap()).abs() < 0.02);
    assert!(e.iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn imbalanced_treated_fraction() {
    let f = frame("B", 100_000);
    let share = f.draw_train(4).unwrap().data.d.mean().unwrap();
    assert!((share - 0.2).abs() < 0.01, "{share}");
}

#[test]
fn zero_effect_difference_in_means() {
    let sc = Scenario {
        propensity: PropensityFamily::RandomBalanced,
        n: 100_000,
        test_size: 10,
        ..Scenario::catalog("F").unwrap()
    };
    let sim = ScenarioFrame::new(&sc).unwrap().draw_train(5).unwrap();
    assert!(sim.tau_true.iter().all(|&t| t == 0.0));
    let d = &sim.data.d;
    let y = &sim.data.y;
    let (mut s1, mut s0, mut n1, mut n0) = (vec![], vec![], 0.0, 0.0);
    for i in 0..d.len() {
        if d[i] == 1.0 {
            s1.push(y[i]);
            n1 += 1.0;
        } else {
            s0.push(y[i]);
            n0 += 1.0;
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let diff = mean(&s1) - mean(&s0);
    let se = (var(&s1) / n1 + var(&s0) / n0).sqrt();
    assert!(diff.abs() < 4.0 * se, "{diff} vs {se}");
}

#[test]
fn outcome_noise_is_standard_normal() {
    let f = frame("D", 100_000);
    let sim = f.draw_train(6).unwrap();
    let mut u: Vec<f64> = (0..sim.n())
        .map(|i| {
            let row = sim.data.x.row(i);
            sim.data.y[i] - baseline_g(row).unwrap() - sim.tau_true[i] * sim.data.d[i]
        })
        .collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let ks = u
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = std_normal_cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // Asymptotic critical value at alpha = 0.001.
    assert!(ks < 1.949 / n.sqrt(), "KS statistic {ks}");
}

#[test]
fn effect_value_sets() {
    let binary = frame("D", 5000).draw_train(7).unwrap();
    assert!(binary.tau_true.iter().all(|&t| t == 1.0 || t == 2.0));
    let zero = frame("L", 500).draw_train(7).unwrap();
    assert!(zero.tau_true.iter().all(|&t| t == 0.0));
}

#[test]
fn test_set_is_shared_and_training_sets_differ() {
    let a = frame("E", 200);
    let b = frame("E", 200);
    assert_eq!(a.test.data.x, b.test.data.x);
    assert_eq!(a.test.tau_true, b.test.tau_true);
    let t1 = a.draw_train(1).unwrap();
    let t1b = b.draw_train(1).unwrap();
    let t2 = a.draw_train(2).unwrap();
    assert_eq!(t1.data.y, t1b.data.y);
    assert_ne!(t1.data.y, t2.data.y);
}

#[test]
fn index_at_its_mean_gives_half() {
    let stats = StandardizationStats { mean: 1.25, sd: 2.0 };
    let mut x = ndarray::Array1::zeros(20);
    x[1] = 1.25 / 2.0;
    let e = propensity_score(x.view(), PropensityFamily::Linear, Some(&stats)).unwrap();
    assert!((e - 0.5).abs() < 1e-15);
}
