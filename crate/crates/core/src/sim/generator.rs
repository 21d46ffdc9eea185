//! Order-state generators: an empirical baseline sampler and the trained
//! three-head network.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Geometric, LogNormal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::book::{BookState, Qty, Snapshot};
use crate::features::{EventKind, BOOK_FEATURES, MSG_FEATURES};
use crate::ingest::bins::{make_bins, BinSpec};
use crate::ingest::dataset::{DatasetMeta, EventStream, MinMaxScaler, FEATURES};
use crate::nn::{Head, TablModel};
use crate::seed::{rng_for, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderKind {
    Limit,
    Market,
}

/// Next-order state without a direction; the agent supplies that.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderProposal {
    pub kind: OrderKind,
    pub size_class: usize,
    pub size: Qty,
    /// Price-distance class and decoded tick offset, limit orders only.
    pub offset_class: Option<usize>,
    pub offset: Option<i64>,
}

pub struct GeneratorContext<'a> {
    pub book: &'a BookState,
    pub snapshot: &'a Snapshot,
    /// Raw feature rows of the most recent events, oldest first.
    pub history: &'a VecDeque<[f64; FEATURES]>,
    pub step: usize,
}

pub trait OrderGenerator: Sync + Send {
    fn propose(&self, ctx: &GeneratorContext<'_>, rng: &mut SimRng) -> Result<OrderProposal, SimError>;

    /// Number of past events the generator reads; `None` if it reads none.
    fn context_window(&self) -> Option<usize> {
        None
    }

    /// Size of an order injected to restore book depth.
    fn noise_size(&self, rng: &mut SimRng) -> Qty;

    fn mean_market_size(&self) -> f64;
}

/// Class frequencies over a bin spec, sampled by inverse CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalClasses {
    pub bins: BinSpec,
    pub cumulative: Vec<f64>,
    pub mean: f64,
}

impl EmpiricalClasses {
    pub fn fit(values: &[f64], classes: usize, coverage: f64) -> Result<Self, SimError> {
        let bins = make_bins(values, classes, coverage).map_err(|e| SimError::Generator(e.to_string()))?;
        let mut counts = vec![0.0; classes];
        for &v in values {
            counts[bins.assign(v)] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|c| {
                acc += c / total;
                acc
            })
            .collect();
        Ok(Self { bins, cumulative, mean: values.iter().sum::<f64>() / values.len() as f64 })
    }

    pub fn sample_class<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, i64) {
        let class = self.sample_class(rng);
        (class, self.bins.decode(class, rng))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineGenerator {
    pub market_probability: f64,
    /// Share of limit orders placed inside a spread wider than one tick,
    /// improving the own touch by up to half the spread.
    pub inside_spread: f64,
    pub limit_size: EmpiricalClasses,
    pub distance: EmpiricalClasses,
    pub market_size: EmpiricalClasses,
}

pub struct BaselineSample<'a> {
    pub limit_sizes: &'a [f64],
    pub distances: &'a [f64],
    pub market_sizes: &'a [f64],
    pub inside_spread: f64,
}

impl BaselineGenerator {
    pub fn fit(sample: &BaselineSample<'_>, size_classes: usize, distance_classes: usize) -> Result<Self, SimError> {
        let (nl, nm) = (sample.limit_sizes.len(), sample.market_sizes.len());
        if nl == 0 || nm == 0 {
            return Err(SimError::Generator("baseline needs limit and market orders".into()));
        }
        Ok(Self {
            market_probability: nm as f64 / (nl + nm) as f64,
            inside_spread: sample.inside_spread.clamp(0.0, 1.0),
            limit_size: EmpiricalClasses::fit(sample.limit_sizes, size_classes, 0.8)?,
            distance: EmpiricalClasses::fit(sample.distances, distance_classes, 0.9)?,
            market_size: EmpiricalClasses::fit(sample.market_sizes, size_classes, 0.8)?,
        })
    }

    /// Empirical frequencies of an ingested event stream.
    pub fn from_stream(stream: &EventStream, size_classes: usize, distance_classes: usize) -> Result<Self, SimError> {
        let of = |k: EventKind, f: fn(&crate::features::EventFeatures) -> f64| -> Vec<f64> { stream.events.iter().filter(|e| e.kind == k).map(f).collect() };
        let limit_sizes = of(EventKind::Limit, |e| e.size as f64);
        let distances = of(EventKind::Limit, |e| e.price_distance as f64);
        let market_sizes = of(EventKind::Market, |e| e.size as f64);
        let (mut wide, mut inside) = (0usize, 0usize);
        for (i, e) in stream.events.iter().enumerate().skip(1) {
            let prev = &stream.rows[i - 1];
            let spread = prev[0] + prev[2];
            if e.kind == EventKind::Limit && prev[1] > 0.0 && prev[3] > 0.0 && spread > 1.0 + 1e-9 {
                wide += 1;
                inside += usize::from(e.price_distance < 0);
            }
        }
        let inside_spread = if wide == 0 { 0.0 } else { inside as f64 / wide as f64 };
        Self::fit(&BaselineSample { limit_sizes: &limit_sizes, distances: &distances, market_sizes: &market_sizes, inside_spread }, size_classes, distance_classes)
    }

    /// Stand-in order-flow statistics used when no historical data is given.
    pub fn synthetic_default() -> Self {
        Self::synthetic(&SyntheticFlow::default()).expect("default flow is valid")
    }

    pub fn synthetic(flow: &SyntheticFlow) -> Result<Self, SimError> {
        flow.validate()?;
        let mut rng = rng_for(flow.seed, "baseline/synthetic");
        let n = flow.samples;
        let limit_dist = LogNormal::new(flow.limit_size_median.ln(), flow.limit_size_spread).map_err(|e| SimError::Generator(e.to_string()))?;
        let market_dist = LogNormal::new(flow.market_size_median.ln(), flow.market_size_spread).map_err(|e| SimError::Generator(e.to_string()))?;
        let tail = Geometric::new(flow.passive_tail).map_err(|e| SimError::Generator(e.to_string()))?;
        let limit_sizes: Vec<f64> = (0..n).map(|_| limit_dist.sample(&mut rng).round().max(1.0)).collect();
        let market_sizes: Vec<f64> = (0..n / 4).map(|_| market_dist.sample(&mut rng).round().max(1.0)).collect();
        let (two, one, touch) = (flow.improve_two, flow.improve_two + flow.improve_one, flow.improve_two + flow.improve_one + flow.at_touch);
        let distances: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if u < two {
                    -2.0
                } else if u < one {
                    -1.0
                } else if u < touch {
                    0.0
                } else {
                    1.0 + tail.sample(&mut rng) as f64
                }
            })
            .collect();
        let distinct = |v: &[f64]| {
            let mut d = v.to_vec();
            d.sort_by(f64::total_cmp);
            d.dedup();
            d.len()
        };
        let sample = BaselineSample { limit_sizes: &limit_sizes, distances: &distances, market_sizes: &market_sizes, inside_spread: flow.inside_spread };
        let size_classes = flow.size_classes.min(distinct(&limit_sizes)).min(distinct(&market_sizes));
        let mut g = Self::fit(&sample, size_classes, flow.distance_classes.min(distinct(&distances)))?;
        g.market_probability = flow.market_probability;
        Ok(g)
    }
}

/// Parameters of the stand-in order flow: log-normal sizes, a share of limit
/// orders improving the touch by one or two ticks, a share joining it and a
/// geometric tail of passive offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFlow {
    pub market_probability: f64,
    pub inside_spread: f64,
    pub limit_size_median: f64,
    pub limit_size_spread: f64,
    pub market_size_median: f64,
    pub market_size_spread: f64,
    pub improve_two: f64,
    pub improve_one: f64,
    pub at_touch: f64,
    /// Success probability of the geometric passive tail beyond one tick.
    pub passive_tail: f64,
    pub size_classes: usize,
    pub distance_classes: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SyntheticFlow {
    fn default() -> Self {
        Self {
            market_probability: 0.15,
            inside_spread: 0.8,
            limit_size_median: 100.0,
            limit_size_spread: 0.8,
            market_size_median: 100.0,
            market_size_spread: 0.9,
            improve_two: 0.03,
            improve_one: 0.12,
            at_touch: 0.45,
            passive_tail: 0.12,
            size_classes: 20,
            distance_classes: 40,
            samples: 20_000,
            seed: 0,
        }
    }
}

impl SyntheticFlow {
    pub fn validate(&self) -> Result<(), SimError> {
        let shares = [self.market_probability, self.inside_spread, self.improve_two, self.improve_one, self.at_touch];
        if shares.iter().any(|p| !(0.0..=1.0).contains(p)) || self.improve_two + self.improve_one + self.at_touch > 1.0 {
            return Err(SimError::Generator("synthetic flow shares must be probabilities".into()));
        }
        if !(self.passive_tail > 0.0 && self.passive_tail <= 1.0) || self.samples < 4 || self.size_classes == 0 || self.distance_classes == 0 {
            return Err(SimError::Generator("invalid synthetic flow".into()));
        }
        Ok(())
    }
}

impl OrderGenerator for BaselineGenerator {
    fn propose(&self, ctx: &GeneratorContext<'_>, rng: &mut SimRng) -> Result<OrderProposal, SimError> {
        if rng.random::<f64>() < self.market_probability {
            let (size_class, size) = self.market_size.sample(rng);
            Ok(OrderProposal { kind: OrderKind::Market, size_class, size: size.max(1) as Qty, offset_class: None, offset: None })
        } else {
            let (size_class, size) = self.limit_size.sample(rng);
            let (mut offset_class, mut offset) = self.distance.sample(rng);
            let gap = ctx.book.spread().map_or(0, |s| s / ctx.book.tick_size());
            if gap > 1 && rng.random::<f64>() < self.inside_spread {
                offset = -rng.random_range(1..=gap / 2);
                offset_class = self.distance.bins.assign(offset as f64);
            }
            Ok(OrderProposal { kind: OrderKind::Limit, size_class, size: size.max(1) as Qty, offset_class: Some(offset_class), offset: Some(offset) })
        }
    }

    fn noise_size(&self, rng: &mut SimRng) -> Qty {
        self.limit_size.sample(rng).1.max(1) as Qty
    }

    fn mean_market_size(&self) -> f64 {
        self.market_size.mean
    }
}

/// Three trained heads sampling the next order from their softmax outputs.
#[derive(Debug, Clone)]
pub struct TablGenerator {
    pub order_type: TablModel,
    pub limit: TablModel,
    pub market: TablModel,
    pub scaler: MinMaxScaler,
    pub limit_size_bins: BinSpec,
    pub distance_bins: BinSpec,
    pub market_size_bins: BinSpec,
    pub window: usize,
    /// Mean market-order size of the training data.
    pub market_size_mean: f64,
}

fn sample_probs<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

impl TablGenerator {
    pub fn new(order_type: TablModel, limit: TablModel, market: TablModel, meta: &DatasetMeta, market_size_mean: f64) -> Result<Self, SimError> {
        let window = meta.config.window;
        for (m, head) in [(&order_type, Head::OrderType), (&limit, Head::Limit), (&market, Head::Market)] {
            if m.config.head != head || m.config.window != window {
                return Err(SimError::Generator(format!("{head:?} model does not match the dataset window or head")));
            }
        }
        Ok(Self {
            order_type,
            limit,
            market,
            scaler: meta.scaler.clone(),
            limit_size_bins: meta.limit_size_bins.clone(),
            distance_bins: meta.distance_bins.clone(),
            market_size_bins: meta.market_size_bins.clone(),
            window,
            market_size_mean,
        })
    }

    fn inputs(&self, history: &VecDeque<[f64; FEATURES]>) -> (Array2<f64>, Array2<f64>) {
        let start = history.len() - self.window;
        let at = |f: usize, t: usize| self.scaler.apply(f, history[start + t][f]);
        (
            Array2::from_shape_fn((BOOK_FEATURES, self.window), |(f, t)| at(f, t)),
            Array2::from_shape_fn((MSG_FEATURES, self.window), |(f, t)| at(BOOK_FEATURES + f, t)),
        )
    }
}

impl OrderGenerator for TablGenerator {
    fn propose(&self, ctx: &GeneratorContext<'_>, rng: &mut SimRng) -> Result<OrderProposal, SimError> {
        if ctx.history.len() < self.window {
            return Err(SimError::Generator(format!("context holds {} events, model needs {}", ctx.history.len(), self.window)));
        }
        let (book, msg) = self.inputs(ctx.history);
        let nn = |e: crate::nn::NnError| SimError::Generator(e.to_string());
        let kind = sample_probs(&self.order_type.predict_proba(&book, &msg).map_err(nn)?[0], rng);
        if kind == 1 {
            let probs = self.market.predict_proba(&book, &msg).map_err(nn)?;
            let size_class = sample_probs(&probs[0], rng);
            let size = self.market_size_bins.decode(size_class, rng).max(1) as Qty;
            Ok(OrderProposal { kind: OrderKind::Market, size_class, size, offset_class: None, offset: None })
        } else {
            let probs = self.limit.predict_proba(&book, &msg).map_err(nn)?;
            let size_class = sample_probs(&probs[0], rng);
            let offset_class = sample_probs(&probs[1], rng);
            let size = self.limit_size_bins.decode(size_class, rng).max(1) as Qty;
            let offset = self.distance_bins.decode(offset_class, rng);
            Ok(OrderProposal { kind: OrderKind::Limit, size_class, size, offset_class: Some(offset_class), offset: Some(offset) })
        }
    }

    fn context_window(&self) -> Option<usize> {
        Some(self.window)
    }

    fn noise_size(&self, rng: &mut SimRng) -> Qty {
        let class = rng.random_range(0..self.limit_size_bins.class_count);
        self.limit_size_bins.decode(class, rng).max(1) as Qty
    }

    fn mean_market_size(&self) -> f64 {
        self.market_size_mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_baseline_shapes() {
        let g = BaselineGenerator::synthetic_default();
        assert_eq!(g.limit_size.bins.class_count, 20);
        assert_eq!(g.distance.bins.class_count, 40);
        assert!((g.cumulative_last() - 1.0).abs() < 1e-12);
        assert!(g.mean_market_size() > 50.0 && g.mean_market_size() < 150.0);
    }

    impl BaselineGenerator {
        fn cumulative_last(&self) -> f64 {
            *self.distance.cumulative.last().unwrap()
        }
    }

    #[test]
    fn class_sampling_matches_frequencies() {
        let values: Vec<f64> = (0..4000).map(|i| f64::from(i % 40)).collect();
        let e = EmpiricalClasses::fit(&values, 4, 1.0).unwrap();
        let mut rng = rng_for(3, "t");
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[e.sample_class(&mut rng)] += 1;
        }
        assert!(counts.iter().all(|&c| (9_400..10_600).contains(&c)), "{counts:?}");
    }

    #[test]
    fn synthetic_flow_validation() {
        assert!(SyntheticFlow::default().validate().is_ok());
        let bad = SyntheticFlow { at_touch: 0.9, ..SyntheticFlow::default() };
        assert!(bad.validate().is_err());
        let bad = SyntheticFlow { passive_tail: 0.0, ..SyntheticFlow::default() };
        assert!(BaselineGenerator::synthetic(&bad).is_err());
    }

    fn limit_offsets(g: &BaselineGenerator, book: &BookState, n: usize) -> Vec<i64> {
        let snapshot = book.snapshot(crate::features::BOOK_LEVELS);
        let history = VecDeque::new();
        let ctx = GeneratorContext { book, snapshot: &snapshot, history: &history, step: 0 };
        let mut rng = rng_for(9, "t");
        (0..n).filter_map(|_| g.propose(&ctx, &mut rng).unwrap().offset).collect()
    }

    #[test]
    fn wide_spread_draws_inside_placements() {
        use crate::book::Side;
        let g = BaselineGenerator::synthetic(&SyntheticFlow { inside_spread: 1.0, ..SyntheticFlow::default() }).unwrap();
        let mut wide = BookState::with_reference_mid(100, 100_500.0).unwrap();
        wide.submit_limit(Side::Bid, 100_000, 10).unwrap();
        wide.submit_limit(Side::Ask, 101_000, 10).unwrap();
        let offsets = limit_offsets(&g, &wide, 2000);
        assert!(offsets.iter().all(|&o| (-5..=-1).contains(&o)), "{:?}", &offsets[..10]);

        let mut tight = BookState::with_reference_mid(100, 100_050.0).unwrap();
        tight.submit_limit(Side::Bid, 100_000, 10).unwrap();
        tight.submit_limit(Side::Ask, 100_100, 10).unwrap();
        let offsets = limit_offsets(&g, &tight, 2000);
        let passive = offsets.iter().filter(|&&o| o >= 0).count() as f64 / offsets.len() as f64;
        assert!((passive - 0.85).abs() < 0.05, "{passive}");
    }
}
