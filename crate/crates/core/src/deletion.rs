//! Depth- and age-conditioned order deletion.
//!
//! Empirical counts give `P(depth = x | deleted) = N_d^x / N_d`. Bayes with
//! `P(depth = x) = N_p^x / N_t` turns that into the probability that an order
//! resting at depth `x` is deleted,
//!
//! ```text
//! P(del | x) = P(x | del) * (N_d / N_t) / (N_p^x / N_t)
//! ```
//!
//! which is spread over the order's remaining expected lifetime as a constant
//! per-event hazard `P_e = 1 - (1 - P(del | x))^(1 / (T_0 - T_t))`. Every event
//! the hazard is recomputed from the order's current depth and age, scaled, and
//! compared with a uniform draw.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{BookState, Order, OrderId};

#[derive(Debug, Error)]
pub enum DeletionError {
    #[error("no placements to fit")]
    Empty,
    #[error("no deletions in the placement sample; deletion probabilities are undefined")]
    NoDeletions,
    #[error("invalid deletion statistics: {0}")]
    Invalid(String),
    #[error("deletion stats json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One historical limit order: where it was placed, whether it ended by
/// deletion and how many events it rested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub depth: usize,
    pub deleted: bool,
    pub lifetime: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeletionStats {
    pub deleted_by_depth: BTreeMap<usize, u64>,
    pub total_deleted: u64,
    pub placed_by_depth: BTreeMap<usize, u64>,
    pub total_placed: u64,
    /// Mean lifetime in events of deleted orders, keyed by insertion depth.
    pub mean_duration_by_insertion_depth: BTreeMap<usize, f64>,
    /// Fallback lifetime for insertion depths without deletions.
    pub global_mean_duration: f64,
    /// Multiplier applied to the per-event hazard.
    pub scale: f64,
}

/// Bayes deletion probability with flags for the two repair rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeletionProbability {
    pub value: f64,
    /// Raw Bayes value exceeded 1 and was clamped.
    pub clamped: bool,
    /// Depth was never observed in placements; the unconditional deletion
    /// ratio `N_d / N_t` was used instead.
    pub fallback: bool,
}

impl DeletionStats {
    pub fn fit(placements: &[Placement]) -> Result<Self, DeletionError> {
        if placements.is_empty() {
            return Err(DeletionError::Empty);
        }
        let mut deleted_by_depth = BTreeMap::new();
        let mut placed_by_depth = BTreeMap::new();
        let mut lifetimes: BTreeMap<usize, (f64, u64)> = BTreeMap::new();
        let mut total_lifetime = 0.0;
        for p in placements {
            *placed_by_depth.entry(p.depth).or_insert(0) += 1;
            if p.deleted {
                *deleted_by_depth.entry(p.depth).or_insert(0) += 1;
                let e = lifetimes.entry(p.depth).or_insert((0.0, 0));
                e.0 += p.lifetime as f64;
                e.1 += 1;
                total_lifetime += p.lifetime as f64;
            }
        }
        let total_deleted: u64 = deleted_by_depth.values().sum();
        if total_deleted == 0 {
            return Err(DeletionError::NoDeletions);
        }
        let mean_duration_by_insertion_depth = lifetimes
            .into_iter()
            .map(|(d, (sum, n))| (d, (sum / n as f64).max(1.0)))
            .collect();
        Ok(Self {
            deleted_by_depth,
            total_deleted,
            placed_by_depth,
            total_placed: placements.len() as u64,
            mean_duration_by_insertion_depth,
            global_mean_duration: (total_lifetime / total_deleted as f64).max(1.0),
            scale: 1.0,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn validate(&self) -> Result<(), DeletionError> {
        let bad = |m: &str| Err(DeletionError::Invalid(m.to_string()));
        if self.deleted_by_depth.values().sum::<u64>() != self.total_deleted {
            return bad("deleted_by_depth does not sum to total_deleted");
        }
        if self.placed_by_depth.values().sum::<u64>() != self.total_placed {
            return bad("placed_by_depth does not sum to total_placed");
        }
        if self.total_deleted == 0 || self.total_deleted > self.total_placed {
            return bad("need 0 < total_deleted <= total_placed");
        }
        if self.global_mean_duration < 1.0 || self.mean_duration_by_insertion_depth.values().any(|&d| d < 1.0) {
            return bad("mean durations must be at least one event");
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return bad("scale must be finite and non-negative");
        }
        Ok(())
    }

    /// `P(depth = x | deleted) = N_d^x / N_d`.
    pub fn depth_given_deleted(&self, depth: usize) -> f64 {
        self.deleted_by_depth.get(&depth).copied().unwrap_or(0) as f64 / self.total_deleted as f64
    }

    /// Unconditional deletion ratio `N_d / N_t`.
    pub fn deletion_ratio(&self) -> f64 {
        self.total_deleted as f64 / self.total_placed as f64
    }

    pub fn prob_deleted_given_depth(&self, depth: usize) -> DeletionProbability {
        let placed = self.placed_by_depth.get(&depth).copied().unwrap_or(0);
        if placed == 0 {
            return DeletionProbability {
                value: self.deletion_ratio().min(1.0),
                clamped: false,
                fallback: true,
            };
        }
        let total = self.total_placed as f64;
        let raw = self.depth_given_deleted(depth) * (self.total_deleted as f64 / total) / (placed as f64 / total);
        DeletionProbability {
            value: raw.clamp(0.0, 1.0),
            clamped: raw > 1.0,
            fallback: false,
        }
    }

    /// Expected total lifetime `T_0` of an order placed at `insertion_depth`.
    pub fn expected_duration(&self, insertion_depth: usize) -> f64 {
        self.mean_duration_by_insertion_depth
            .get(&insertion_depth)
            .copied()
            .unwrap_or(self.global_mean_duration)
    }

    pub fn to_json(&self) -> Result<String, DeletionError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, DeletionError> {
        let stats: Self = serde_json::from_str(s)?;
        stats.validate()?;
        Ok(stats)
    }

    /// Deterministic table used when no historical data is supplied: deletion
    /// probability rising from 0.55 at the touch to 0.95 at depth 24, placement
    /// activity decaying with depth and lifetimes growing with depth.
    pub fn synthetic_default() -> Self {
        let mut placed_by_depth = BTreeMap::new();
        let mut deleted_by_depth = BTreeMap::new();
        let mut mean_duration_by_insertion_depth = BTreeMap::new();
        let mut weighted_duration = 0.0;
        for depth in 0..25usize {
            let placed = (10_000.0 * (-0.15 * depth as f64).exp()).round() as u64;
            let p_del = 0.55 + 0.4 * depth as f64 / 24.0;
            let deleted = (placed as f64 * p_del).round() as u64;
            let duration = 30.0 + 5.0 * depth as f64;
            placed_by_depth.insert(depth, placed);
            deleted_by_depth.insert(depth, deleted);
            mean_duration_by_insertion_depth.insert(depth, duration);
            weighted_duration += duration * deleted as f64;
        }
        let total_deleted = deleted_by_depth.values().sum();
        Self {
            total_placed: placed_by_depth.values().sum(),
            total_deleted,
            deleted_by_depth,
            placed_by_depth,
            mean_duration_by_insertion_depth,
            global_mean_duration: weighted_duration / total_deleted as f64,
            scale: 1.0,
        }
    }
}

/// Per-event deletion hazard spreading `p_del` over `remaining_events`.
/// Orders that outlived their expected duration (`remaining_events < 1`) use
/// a one-event horizon, i.e. `P_e = p_del`.
pub fn per_event_probability(p_del: f64, remaining_events: f64) -> f64 {
    let p = p_del.clamp(0.0, 1.0);
    if p >= 1.0 {
        return 1.0;
    }
    let horizon = if remaining_events.is_finite() { remaining_events.max(1.0) } else { 1.0 };
    // 1 - (1 - p)^(1/T) without cancellation for small p.
    -((-p).ln_1p() / horizon).exp_m1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderDeletionState {
    pub order_id: OrderId,
    pub insertion_depth: usize,
    pub current_depth: usize,
    pub age_events: u64,
    pub estimated_total_duration: f64,
}

/// Deletion bookkeeping for the resting orders of one simulated book.
#[derive(Debug, Clone, Default)]
pub struct DeletionTracker {
    states: HashMap<OrderId, OrderDeletionState>,
    exempt: HashSet<OrderId>,
    table: Vec<f64>,
    fallback: f64,
}

impl DeletionTracker {
    pub fn new(stats: &DeletionStats) -> Self {
        let max_depth = stats.placed_by_depth.keys().next_back().copied().unwrap_or(0);
        Self {
            states: HashMap::new(),
            exempt: HashSet::new(),
            table: (0..=max_depth).map(|d| stats.prob_deleted_given_depth(d).value).collect(),
            fallback: stats.prob_deleted_given_depth(usize::MAX).value,
        }
    }

    pub fn register(&mut self, order: &Order, stats: &DeletionStats) {
        self.states.insert(
            order.id,
            OrderDeletionState {
                order_id: order.id,
                insertion_depth: order.insertion_depth,
                current_depth: order.insertion_depth,
                age_events: 0,
                estimated_total_duration: stats.expected_duration(order.insertion_depth),
            },
        );
    }

    /// Keeps a resting order out of the hazard model (depth-restoring
    /// noise orders).
    pub fn exempt(&mut self, id: OrderId) {
        self.states.remove(&id);
        self.exempt.insert(id);
    }

    pub fn forget(&mut self, id: OrderId) {
        self.states.remove(&id);
        self.exempt.remove(&id);
    }

    pub fn state(&self, id: OrderId) -> Option<&OrderDeletionState> {
        self.states.get(&id)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Ages every resting order by one event, recomputes its hazard from its
    /// current depth and deletes it when a uniform draw falls below the
    /// scaled hazard. Orders are visited best level first, bids then asks,
    /// so the draw sequence is reproducible.
    pub fn step<R: Rng + ?Sized>(&mut self, book: &mut BookState, stats: &DeletionStats, rng: &mut R) -> Vec<Order> {
        let mut doomed = Vec::new();
        for (order, depth) in book.orders_with_depth() {
            if self.exempt.contains(&order.id) {
                continue;
            }
            let state = self.states.entry(order.id).or_insert_with(|| OrderDeletionState {
                order_id: order.id,
                insertion_depth: order.insertion_depth,
                current_depth: depth,
                age_events: 0,
                estimated_total_duration: stats.expected_duration(order.insertion_depth),
            });
            state.current_depth = depth;
            state.age_events += 1;
            let remaining = state.estimated_total_duration - state.age_events as f64;
            let p_del = self.table.get(depth).copied().unwrap_or(self.fallback);
            let hazard = (stats.scale * per_event_probability(p_del, remaining)).min(1.0);
            let u: f64 = rng.random();
            if u < hazard {
                doomed.push(order.id);
            }
        }
        doomed
            .into_iter()
            .filter_map(|id| {
                self.states.remove(&id);
                book.cancel(id).ok()
            })
            .collect()
    }
}

/// Running deletion share: element `k` is the fraction of deletions among
/// the first `k + 1` events.
pub fn cumulative_deletion_rate(is_deletion: &[bool]) -> Vec<f64> {
    let mut count = 0u64;
    is_deletion
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            count += u64::from(d);
            count as f64 / (i + 1) as f64
        })
        .collect()
}

/// Bisection for the scale at which an increasing `rate(scale)` hits
/// `target`, searched on `[lo, hi]`.
pub fn calibrate_scale<F>(target: f64, mut lo: f64, mut hi: f64, iterations: usize, mut rate: F) -> f64
where
    F: FnMut(f64) -> f64,
{
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::book::Side;
    use crate::seed::rng_for;

    fn placements(spec: &[(usize, bool, u64, usize)]) -> Vec<Placement> {
        spec.iter()
            .flat_map(|&(depth, deleted, lifetime, n)| std::iter::repeat_n(Placement { depth, deleted, lifetime }, n))
            .collect()
    }

    #[test]
    fn depth_given_deleted_is_count_ratio() {
        let s = DeletionStats::fit(&placements(&[(2, true, 5, 5), (0, true, 5, 15), (1, false, 5, 10)])).unwrap();
        assert!((s.depth_given_deleted(2) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_depth_half_deleted() {
        let s = DeletionStats::fit(&placements(&[(0, true, 3, 5), (0, false, 9, 5)])).unwrap();
        assert_eq!(s.depth_given_deleted(0), 1.0);
        assert!((s.prob_deleted_given_depth(0).value - 0.5).abs() < 1e-15);
        assert_eq!(s.expected_duration(0), 3.0);
        assert_eq!(s.expected_duration(7), 3.0);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(DeletionStats::fit(&[]), Err(DeletionError::Empty)));
        let none = placements(&[(0, false, 1, 3)]);
        assert!(matches!(DeletionStats::fit(&none), Err(DeletionError::NoDeletions)));
    }

    #[test]
    fn bayes_arithmetic() {
        // P(B|A) = 0.25, N_d/N_t = 0.4, N_p^x/N_t = 0.2 -> 0.5
        // N_t = 100, N_d = 40, N_d^x = 10, N_p^x = 20.
        let s = DeletionStats::fit(&placements(&[
            (3, true, 1, 10),
            (3, false, 1, 10),
            (0, true, 1, 30),
            (0, false, 1, 50),
        ]))
        .unwrap();
        let p = s.prob_deleted_given_depth(3);
        assert!((p.value - 0.5).abs() < 1e-12);
        assert!(!p.clamped && !p.fallback);
        let unseen = s.prob_deleted_given_depth(9);
        assert!(unseen.fallback);
        assert!((unseen.value - 0.4).abs() < 1e-12);
    }

    #[test]
    fn zero_deletion_depth_and_clamp() {
        let mut s = DeletionStats::fit(&placements(&[(0, true, 1, 4), (1, false, 1, 4)])).unwrap();
        assert_eq!(s.prob_deleted_given_depth(1).value, 0.0);
        // Sparse counts: more deletions recorded at depth 2 than placements.
        s.deleted_by_depth.insert(2, 3);
        s.total_deleted += 3;
        s.placed_by_depth.insert(2, 1);
        s.total_placed += 1;
        let p = s.prob_deleted_given_depth(2);
        assert_eq!(p.value, 1.0);
        assert!(p.clamped);
    }

    #[test]
    fn per_event_probability_cases() {
        assert_eq!(per_event_probability(0.0, 10.0), 0.0);
        assert!((per_event_probability(0.75, 2.0) - 0.5).abs() < 1e-15);
        assert_eq!(per_event_probability(1.0, 5.0), 1.0);
        assert_eq!(per_event_probability(0.3, 0.0), per_event_probability(0.3, 1.0));
        assert!((per_event_probability(0.3, -4.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let s = DeletionStats::synthetic_default().with_scale(0.3);
        let back = DeletionStats::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(s, back);
        s.validate().unwrap();
    }

    fn book_with(n: usize) -> (BookState, DeletionTracker, DeletionStats) {
        let stats = DeletionStats::synthetic_default();
        let mut book = BookState::new(1).unwrap();
        let mut tracker = DeletionTracker::new(&stats);
        for i in 0..n {
            let o = book.submit_limit(Side::Bid, 1000 - (i as i64 % 20), 1).unwrap().resting.unwrap();
            tracker.register(&o, &stats);
        }
        (book, tracker, stats)
    }

    #[test]
    fn zero_scale_never_deletes() {
        let (mut book, mut tracker, stats) = book_with(50);
        let stats = stats.with_scale(0.0);
        let mut rng = rng_for(1, "del");
        for _ in 0..200 {
            assert!(tracker.step(&mut book, &stats, &mut rng).is_empty());
        }
        assert_eq!(book.len(), 50);
        assert_eq!(tracker.state(1).unwrap().age_events, 200);
    }

    #[test]
    fn certain_hazard_deletes_immediately() {
        let mut s = DeletionStats::fit(&placements(&[(0, true, 1, 3)])).unwrap();
        s.scale = 1.0;
        let mut book = BookState::new(1).unwrap();
        let o = book.submit_limit(Side::Ask, 10, 1).unwrap().resting.unwrap();
        let mut tracker = DeletionTracker::new(&s);
        tracker.register(&o, &s);
        let gone = tracker.step(&mut book, &s, &mut rng_for(0, "x"));
        assert_eq!(gone.len(), 1);
        assert!(book.is_empty() && tracker.is_empty());
    }

    #[test]
    fn cumulative_rate_examples() {
        let r = cumulative_deletion_rate(&[true, false, true, false]);
        let want = [1.0, 0.5, 2.0 / 3.0, 0.5];
        for (a, b) in r.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(cumulative_deletion_rate(&[true; 5]).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn bisection_finds_linear_root() {
        let s = calibrate_scale(0.4, 0.0, 1.0, 40, |x| 0.8 * x);
        assert!((s - 0.5).abs() < 1e-9);
    }
}
