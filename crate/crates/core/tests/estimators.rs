use athres::estimate::{
    estimate_by_name, fit_weighted_loss, subset_sum_ht, subset_sum_variance, weighted_cdf, weighted_loss_fit,
    weighted_quantile, AlphaMode, EstimatorArgs, FitConfig, LogisticLoss, Loss, SquaredLoss,
};
use athres::harness::{draw_sample, verify_unbiasedness, Design, ExperimentConfig, Population};
use athres::rng::seeded;
use athres::{Error, PriorityFamily, Sample};
use rand::Rng;
use rand_distr::StandardNormal;

fn census(pop: &Population) -> Sample {
    draw_sample(&Design::Heap(pop.len() + 1), pop, PriorityFamily::UniformScaled, &mut seeded(1)).unwrap()
}

#[test]
fn census_estimates_are_exact() {
    let pop = Population::skewed(12);
    let s = census(&pop);
    assert!(s.items.iter().all(|it| it.inclusion == 1.0));
    assert_eq!(subset_sum_ht(&s).unwrap().point(), pop.total(0));
    assert_eq!(subset_sum_variance(&s).unwrap().scalar_variance(), Some(0.0));
    let alpha = AlphaMode::Exact(pop.total_weight());
    for x in [0.5, 1.0, 3.0, 7.5, 12.0, 13.0] {
        assert!((weighted_cdf(&s, x, alpha).unwrap() - pop.weighted_cdf(x)).abs() < 1e-15);
    }
    for q in [0.01, 0.25, 0.5, 0.9, 0.999] {
        assert_eq!(weighted_quantile(&s, q).unwrap(), pop.weighted_quantile(q));
    }
    assert!(weighted_quantile(&s, 1.0).is_err());
}

#[test]
fn named_estimators_validate_their_arguments() {
    let pop = Population::linear(10);
    let s = draw_sample(&Design::Heap(4), &pop, PriorityFamily::UniformScaled, &mut seeded(2)).unwrap();
    let none = EstimatorArgs::default();
    assert!(matches!(estimate_by_name(&s, "cdf", &none), Err(Error::Config(_))));
    assert!(matches!(estimate_by_name(&s, "quantile", &none), Err(Error::Config(_))));
    assert!(matches!(estimate_by_name(&s, "u_variance", &none), Err(Error::Config(_))));
    assert!(matches!(estimate_by_name(&s, "nope", &none), Err(Error::Unknown { .. })));
    let mean = estimate_by_name(&s, "mean", &none).unwrap().point();
    let ht = estimate_by_name(&s, "ht", &none).unwrap().point();
    let n_hat: f64 = s.items.iter().map(|it| 1.0 / it.inclusion).sum();
    assert!((mean - ht / n_hat).abs() < 1e-12);
}

#[test]
fn sampled_cdf_and_u_statistic_are_unbiased() {
    for (population, sampler, est) in [
        ("skewed:10", "heap:4", "cdf"),
        ("skewed:10", "fixed_k:5", "u_variance"),
        ("linear:9", "lazy:fixed_k:4", "u_variance"),
    ] {
        let mut c = ExperimentConfig::new(population, sampler, &[est]);
        c.replicates = 80_000;
        c.seed = 4;
        let r = verify_unbiasedness(&c).unwrap();
        assert!(r.verdict.passed(), "{est} on {population}/{sampler}: z = {}", r.checks[0].z);
    }
}

#[test]
fn squared_loss_fit_and_sandwich_match_closed_form() {
    let pop = Population::skewed(15);
    let s = draw_sample(&Design::Heap(6), &pop, PriorityFamily::UniformScaled, &mut seeded(8)).unwrap();
    let est = weighted_loss_fit(&s, &SquaredLoss, &FitConfig::default()).unwrap();
    let a: Vec<(f64, f64)> = s.items.iter().map(|it| (it.item.weight / it.inclusion, it.item.x())).collect();
    let sa: f64 = a.iter().map(|p| p.0).sum();
    let theta = a.iter().map(|(w, x)| w * x).sum::<f64>() / sa;
    assert!((est.point() - theta).abs() < 1e-9 * theta.abs());
    // H = 2 sum a, V = sum a^2 (2 (theta - x))^2
    let v: f64 = a.iter().map(|(w, x)| (w * 2.0 * (theta - x)).powi(2)).sum();
    let cov = v / (2.0 * sa).powi(2);
    assert!((est.scalar_variance().unwrap() - cov).abs() < 1e-8 * cov);
}

/// Squared loss without an analytic Hessian, which forces gradient descent.
struct NoHessian;

impl Loss for NoHessian {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64], theta: &[f64]) -> f64 {
        (x[0] - theta[0]).powi(2)
    }
    fn add_gradient(&self, x: &[f64], theta: &[f64], scale: f64, grad: &mut [f64]) {
        grad[0] += scale * 2.0 * (theta[0] - x[0]);
    }
}

#[test]
fn gradient_descent_path_converges() {
    let xs = [1.0, 4.0, -2.0, 10.0];
    let a = [0.5, 2.0, 1.0, 0.25];
    let data: Vec<(f64, &[f64])> = a.iter().zip(&xs).map(|(&w, x)| (w, std::slice::from_ref(x))).collect();
    let fit = fit_weighted_loss(&NoHessian, &data, &FitConfig::default(), Some(&[100.0])).unwrap();
    let want = a.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / a.iter().sum::<f64>();
    assert!((fit.theta[0] - want).abs() < 1e-6);
}

#[test]
fn logistic_fit_solves_the_score_equations() {
    let mut rng = seeded(21);
    let rows: Vec<Vec<f64>> = (0..400)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            let p = 1.0 / (1.0 + (-(0.3 + 1.2 * z)).exp());
            vec![f64::from(u8::from(rng.random::<f64>() < p)), z]
        })
        .collect();
    let weights: Vec<f64> = (0..rows.len()).map(|i| 0.5 + (i % 4) as f64).collect();
    let data: Vec<(f64, &[f64])> = weights.iter().zip(&rows).map(|(&w, r)| (w, r.as_slice())).collect();
    let fit = fit_weighted_loss(&LogisticLoss::new(1, true), &data, &FitConfig::default(), None).unwrap();
    let (b0, b1) = (fit.theta[0], fit.theta[1]);
    let mut score = [0.0f64; 2];
    for (w, r) in &data {
        let p = 1.0 / (1.0 + (-(b0 + b1 * r[1])).exp());
        score[0] += w * (r[0] - p);
        score[1] += w * (r[0] - p) * r[1];
    }
    let scale: f64 = weights.iter().sum();
    assert!(score.iter().all(|s| s.abs() < 1e-6 * scale), "{score:?}");
    assert!((b1 - 1.2).abs() < 0.5);
}

#[test]
fn inclusion_must_be_positive() {
    let mut s = census(&Population::linear(3));
    s.items[0].inclusion = 0.0;
    assert!(matches!(
        weighted_loss_fit(&s, &SquaredLoss, &FitConfig::default()),
        Err(Error::DegenerateInclusion(_))
    ));
}
