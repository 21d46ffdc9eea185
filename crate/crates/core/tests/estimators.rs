use lobgen::facts::{acf, calibration_loss, hill_index, kurtosis, summarize_returns, HillConvention, SummaryConfig};
use lobgen::seed::rng_for;
use proptest::prelude::*;
use rand_distr::{Distribution, Normal, Pareto};

fn brute_acf(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let (a, b) = (&x[..n - lag], &x[lag..]);
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let cov: f64 = (0..a.len()).map(|i| (a[i] - ma) * (b[i] - mb)).sum();
    let va: f64 = a.iter().map(|v| (v - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|v| (v - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn hill_recovers_pareto_tail() {
    let mut rng = rng_for(1, "pareto");
    let d = Pareto::new(1.0, 3.0).unwrap();
    let x: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
    let h = hill_index(&x, 1000).unwrap();
    assert!((h.gamma - 1.0 / 3.0).abs() < 0.05, "{}", h.gamma);
    assert!((h.alpha - 3.0).abs() < 0.5);
}

#[test]
fn gaussian_kurtosis_is_zero() {
    let mut rng = rng_for(2, "normal");
    let d = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..1_000_000).map(|_| d.sample(&mut rng)).collect();
    assert!(kurtosis(&x).unwrap().abs() < 0.05);
}

#[test]
fn acf_matches_brute_force() {
    let mut rng = rng_for(3, "ar");
    let d = Normal::new(0.0, 1.0).unwrap();
    let mut x = vec![0.0];
    for i in 1..10_000 {
        x.push(0.6 * x[i - 1] + d.sample(&mut rng));
    }
    for lag in 1..=20 {
        assert!((acf(&x, lag).unwrap() - brute_acf(&x, lag)).abs() < 1e-10);
    }
    assert!((acf(&x, 1).unwrap() - 0.6).abs() < 0.03);
}

#[test]
fn loss_is_zero_against_itself() {
    let mut rng = rng_for(4, "r");
    let d = Normal::new(0.0, 1e-3).unwrap();
    let r: Vec<f64> = (0..5000).map(|_| d.sample(&mut rng)).collect();
    let s = summarize_returns(&r, None, &SummaryConfig::default()).unwrap();
    assert_eq!(calibration_loss(&s, &s, HillConvention::Gamma).unwrap(), 0.0);
}

proptest! {
    #[test]
    fn acf_is_bounded_and_affine_invariant(xs in prop::collection::vec(-100.0f64..100.0, 20..200), lag in 1usize..10, a in 0.1f64..10.0, b in -5.0f64..5.0) {
        prop_assume!(xs.iter().any(|v| (v - xs[0]).abs() > 1e-3));
        let Ok(r) = acf(&xs, lag) else { return Ok(()) };
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        let ys: Vec<f64> = xs.iter().map(|v| a * v + b).collect();
        prop_assert!((acf(&ys, lag).unwrap() - r).abs() < 1e-9);
    }

    #[test]
    fn hill_and_kurtosis_are_scale_invariant(xs in prop::collection::vec(0.01f64..100.0, 50..300), c in 0.01f64..100.0) {
        let ys: Vec<f64> = xs.iter().map(|v| v * c).collect();
        let (hx, hy) = (hill_index(&xs, 10).unwrap(), hill_index(&ys, 10).unwrap());
        prop_assert!((hx.gamma - hy.gamma).abs() < 1e-9);
        if let (Ok(kx), Ok(ky)) = (kurtosis(&xs), kurtosis(&ys)) {
            prop_assert!((kx - ky).abs() < 1e-6 * (1.0 + kx.abs()));
            prop_assert!(kx >= -2.0 - 1e-9);
        }
    }

    #[test]
    fn loss_is_symmetric_and_nonnegative(seed_a in 0u64..1000, seed_b in 0u64..1000) {
        let make = |seed| {
            let mut rng = rng_for(seed, "r");
            let d = Normal::new(0.0, 1.0).unwrap();
            let r: Vec<f64> = (0..400).map(|_| d.sample(&mut rng)).collect();
            summarize_returns(&r, None, &SummaryConfig::default()).unwrap()
        };
        let (a, b) = (make(seed_a), make(seed_b));
        let ab = calibration_loss(&a, &b, HillConvention::Gamma).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, calibration_loss(&b, &a, HillConvention::Gamma).unwrap());
    }
}
