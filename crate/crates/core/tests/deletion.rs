use lobgen::deletion::{cumulative_deletion_rate, per_event_probability, DeletionStats, Placement};
use lobgen::seed::rng_for;
use proptest::prelude::*;
use rand::Rng;

/// Deletion law used to generate synthetic placements.
pub fn true_law(depth: usize) -> f64 {
    0.2 + 0.6 * (-(depth as f64) / 4.0).exp()
}

pub fn synthetic_placements(n: usize, seed: u64) -> Vec<Placement> {
    let mut rng = rng_for(seed, "placements");
    (0..n)
        .map(|_| {
            let depth = rng.random_range(0..10);
            Placement { depth, deleted: rng.random::<f64>() < true_law(depth), lifetime: rng.random_range(1..200) }
        })
        .collect()
}

#[test]
fn compounding_identity_holds_on_a_sweep() {
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        for j in 0..100 {
            let p = i as f64 / 99.0 * 0.999;
            let t = 1.0 + j as f64 * 10.0;
            let pe = per_event_probability(p, t);
            worst = worst.max((1.0 - (1.0 - pe).powf(t) - p).abs());
        }
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn fitted_law_recovers_generating_law() {
    let stats = DeletionStats::fit(&synthetic_placements(100_000, 1)).unwrap();
    for depth in 0..10 {
        let got = stats.prob_deleted_given_depth(depth).value;
        let want = true_law(depth);
        assert!((got - want).abs() / want < 0.05, "depth {depth}: {got} vs {want}");
    }
}

proptest! {
    #[test]
    fn per_event_probability_is_a_probability(p in 0.0f64..1.0, t in 0.0f64..1e6) {
        let pe = per_event_probability(p, t);
        prop_assert!((0.0..=1.0).contains(&pe));
        prop_assert!(pe <= p + 1e-15);
        if t <= 1.0 {
            prop_assert!((pe - p).abs() < 1e-12);
        }
    }

    #[test]
    fn cumulative_rate_tracks_counts(flags in prop::collection::vec(any::<bool>(), 1..500)) {
        let rate = cumulative_deletion_rate(&flags);
        let n = flags.len();
        prop_assert!(rate.iter().all(|r| (0.0..=1.0).contains(r)));
        let count = flags.iter().filter(|f| **f).count();
        prop_assert!((rate[n - 1] - count as f64 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip(n in 10usize..500, seed in any::<u64>()) {
        let stats = DeletionStats::fit(&synthetic_placements(n, seed)).unwrap();
        prop_assert_eq!(DeletionStats::from_json(&stats.to_json().unwrap()).unwrap(), stats);
    }
}
