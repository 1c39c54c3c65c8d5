use cig_core::discretize::{
    curve_mle, likelihood_discrepancy, log_likelihoods, log_log_slope, refinement_study,
    worst_case_likelihood_discrepancy, CensoredExponential, PartitionSpec, RefinementStudy,
    TruncatedExponential, TruncatedNormal,
};

const LEUKAEMIA: [f64; 43] = [
    7., 47., 58., 74., 177., 232., 273., 285., 317., 429., 440., 445., 455., 468., 495., 497., 532.,
    571., 579., 581., 650., 702., 715., 779., 881., 900., 930., 968., 1077., 1109., 1314., 1334.,
    1367., 1534., 1712., 1784., 1877., 1886., 2045., 2056., 2260., 2429., 2509.,
];

fn check(s: &RefinementStudy) {
    eprintln!("{:#?}", s.levels);
    assert!(s.slope_likelihood >= 0.9, "likelihood slope {}", s.slope_likelihood);
    assert!(s.slope_mean >= 0.9, "mean slope {}", s.slope_mean);
    assert!(s.slope_fisher >= 1.8, "fisher slope {}", s.slope_fisher);
    assert!(s.slope_skewness >= 2.7, "skewness slope {}", s.slope_skewness);
}

#[test]
fn truncated_normal_refinement_orders() {
    let fam = TruncatedNormal::new(-5.0, 5.0, 1.0).unwrap();
    let curve = fam.mean_curve();
    let s = refinement_study(&fam, &curve, &[20, 40, 80, 160], 0.7, &[0.7], &[0.2, 0.45, 0.95, 1.2]).unwrap();
    check(&s);
}

#[test]
fn censored_exponential_refinement_orders() {
    let fam = CensoredExponential::new(750.0).unwrap();
    let curve = fam.rate_curve();
    let theta = 1.0 / 1000.0;
    let eta = CensoredExponential::embedding(theta);
    let grid = [0.6e-3, 0.8e-3, 1.25e-3, 1.5e-3];
    let s = refinement_study(&fam, &curve, &[25, 50, 100, 200], theta, &eta, &grid).unwrap();
    check(&s);
}

#[test]
fn likelihood_discrepancy_decreases_under_refinement() {
    // A fixed sample's discrepancy depends on where its points fall inside
    // their bins, so it is not monotone; the worst case over bins is, and
    // it bounds every sample of size N by N times its value.
    let curve = TruncatedExponential::new(0.0, 10.0).unwrap().rate_curve();
    let data = [0.3, 0.9, 1.4, 2.2, 0.05, 3.7, 0.61, 1.05];
    let grid: Vec<f64> = (0..9).map(|i| 0.2 + 0.15 * i as f64).collect();
    let mut prev = f64::INFINITY;
    let mut levels = Vec::new();
    for k in [25, 50, 100, 200] {
        let p = PartitionSpec::equal_width(0.0, 10.0, k).unwrap();
        let worst = worst_case_likelihood_discrepancy(&curve, &p, &grid, 0.8).unwrap();
        let sample = likelihood_discrepancy(&curve, &p, &data, &grid, 0.8).unwrap();
        assert!(worst.sup <= prev + 1e-8, "k={k}: {} after {prev}", worst.sup);
        assert!(sample.sup <= data.len() as f64 * worst.sup + 1e-8);
        prev = worst.sup;
        levels.push((p.max_width(), worst.sup));
    }
    let (w, d): (Vec<f64>, Vec<f64>) = levels.into_iter().unzip();
    assert!(log_log_slope(&w, &d).unwrap() > 0.9);
}

#[test]
fn censored_leukaemia_binning_loses_nothing() {
    let fam = CensoredExponential::new(750.0).unwrap();
    let curve = fam.rate_curve();
    let data = fam.censor(&LEUKAEMIA);
    let r = data.iter().filter(|y| **y < 750.0).count() as f64;
    assert_eq!(r, 23.0);
    let total: f64 = data.iter().sum();
    let theta_c = r / total;
    let p = PartitionSpec::by_width(0.0, 750.0, 4.0).unwrap().with_atom(750.0);
    let mle = curve_mle(&curve, &p, &data, (0.3 * theta_c, 3.0 * theta_c)).unwrap();
    assert!((mle.theta_continuous - theta_c).abs() < 1e-6 * theta_c);
    let mu_c = 1.0 / mle.theta_continuous;
    let mu_d = 1.0 / mle.theta_discrete;
    let se = mu_c / r.sqrt();
    eprintln!("mu_c {mu_c} mu_d {mu_d} se {se} ratio {}", (mu_d - mu_c).abs() / se);
    assert!((mu_d - mu_c).abs() < 0.05 * se);
    let grid: Vec<f64> = (0..=60).map(|i| mu_c + se * (-3.0 + 0.1 * i as f64)).collect();
    let mut cont = Vec::new();
    let mut disc = Vec::new();
    for &mu in &grid {
        let (c, d) = log_likelihoods(&curve, &p, &data, 1.0 / mu).unwrap();
        cont.push(c - mle.loglik_continuous);
        disc.push(d - mle.loglik_discrete);
    }
    let range = cont.iter().cloned().fold(f64::INFINITY, f64::min).abs();
    let worst = cont.iter().zip(&disc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    eprintln!("range {range} worst {worst}");
    assert!(worst < 0.01 * range);
}
