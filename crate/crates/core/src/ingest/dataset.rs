//! Event stream, sliding windows, chronological splits and min/max scaling.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::bins::{make_bins, BinSpec};
use super::flow::{infer_market_orders, FlowKind, InferConfig};
use super::lobster::MessageRecord;
use super::{IngestError, LOBSTER_TICK};
use crate::book::{Price, Side, Snapshot};
use crate::features::{book_features, ofi, price_distance, EventFeatures, EventKind, BOOK_FEATURES, MSG_FEATURES};
use crate::nn::{Head, Sample, SampleSet, Target};

pub const FEATURES: usize = BOOK_FEATURES + MSG_FEATURES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub window: usize,
    pub size_classes: usize,
    pub distance_classes: usize,
    pub size_coverage: f64,
    pub distance_coverage: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub tick: Price,
    #[serde(default)]
    pub infer: InferConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            window: 500,
            size_classes: 20,
            distance_classes: 40,
            size_coverage: 0.8,
            distance_coverage: 0.9,
            train_fraction: 0.64,
            val_fraction: 0.16,
            tick: LOBSTER_TICK,
            infer: InferConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One row per visible event: 40 book features after the event followed by
/// the 7 message features.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventStream {
    pub rows: Vec<[f64; FEATURES]>,
    pub events: Vec<EventFeatures>,
}

impl EventStream {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, book_after: &Snapshot, event: EventFeatures, tick: Price) {
        let mut row = [0.0; FEATURES];
        row[..BOOK_FEATURES].copy_from_slice(&book_features(book_after, tick));
        row[BOOK_FEATURES..].copy_from_slice(&event.to_array());
        self.rows.push(row);
        self.events.push(event);
    }
}

/// Builds the visible event stream: limit orders, inferred market orders,
/// cancellations and deletions.
pub fn build_events(messages: &[MessageRecord], books: &[Snapshot], cfg: &DatasetConfig) -> Result<EventStream, IngestError> {
    if messages.len() != books.len() {
        return Err(IngestError::LengthMismatch { messages: messages.len(), books: books.len() });
    }
    let mut stream = EventStream::default();
    for ev in infer_market_orders(messages, &cfg.infer) {
        let kind = match ev.kind {
            FlowKind::Limit => EventKind::Limit,
            FlowKind::Market => EventKind::Market,
            FlowKind::Cancel | FlowKind::Delete => EventKind::Cancel,
            FlowKind::Hidden | FlowKind::Other => continue,
        };
        let before = &books[ev.first_message.saturating_sub(1)];
        let after = &books[ev.last_message];
        let side = if ev.direction > 0 { Side::Bid } else { Side::Ask };
        let distance = match kind {
            EventKind::Market => 0,
            _ => price_distance(side, ev.price, before, cfg.tick),
        };
        let features = EventFeatures { kind, direction: ev.direction, size: ev.size, price_distance: distance, ofi: ofi(before, after) };
        stream.push(after, features, cfg.tick);
    }
    Ok(stream)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[[f64; FEATURES]]) -> Self {
        let mut min = vec![f64::INFINITY; FEATURES];
        let mut max = vec![f64::NEG_INFINITY; FEATURES];
        for r in rows {
            for (j, &v) in r.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Self { min, max }
    }

    /// Constant features map to 0.
    pub fn apply(&self, j: usize, v: f64) -> f64 {
        let range = self.max[j] - self.min[j];
        if range > 0.0 {
            (v - self.min[j]) / range
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowLabel {
    /// Index of the labelled event; the window is the `window` events before it.
    pub event: usize,
    pub split: Split,
    pub kind: EventKind,
    pub size_class: usize,
    /// Price-distance class for limit orders.
    pub distance_class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config: DatasetConfig,
    pub n_events: usize,
    pub feature_count: usize,
    pub split_counts: [usize; 3],
    pub scaler: MinMaxScaler,
    pub limit_size_bins: BinSpec,
    pub distance_bins: BinSpec,
    pub market_size_bins: BinSpec,
    pub labels: Vec<WindowLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    /// Scaled features, `n_events x FEATURES` row-major.
    pub rows: Vec<f64>,
}

fn split_counts(windows: usize, cfg: &DatasetConfig) -> [usize; 3] {
    let train = (windows as f64 * cfg.train_fraction).floor() as usize;
    let val = (windows as f64 * cfg.val_fraction).floor() as usize;
    [train, val, windows - train - val]
}

/// Sliding windows with stride 1, chronological 64/16/20 split, label bins
/// and the scaler both fitted on training windows only.
pub fn window_and_split(stream: &EventStream, cfg: &DatasetConfig) -> Result<Dataset, IngestError> {
    let w = cfg.window;
    if w == 0 || stream.len() <= w {
        return Err(IngestError::TooFewEvents { needed: w + 1, got: stream.len() });
    }
    let windows = stream.len() - w;
    let counts = split_counts(windows, cfg);
    if counts[0] == 0 {
        return Err(IngestError::TooFewEvents { needed: w + 2, got: stream.len() });
    }
    let split_of = |i: usize| {
        if i < counts[0] {
            Split::Train
        } else if i < counts[0] + counts[1] {
            Split::Val
        } else {
            Split::Test
        }
    };
    let train_labels = &stream.events[w..w + counts[0]];
    let pick = |k: EventKind, f: fn(&EventFeatures) -> f64| -> Vec<f64> { train_labels.iter().filter(|e| e.kind == k).map(f).collect() };
    let limit_sizes = pick(EventKind::Limit, |e| e.size as f64);
    let distances = pick(EventKind::Limit, |e| e.price_distance as f64);
    let market_sizes = pick(EventKind::Market, |e| e.size as f64);
    let limit_size_bins = make_bins(&limit_sizes, cfg.size_classes, cfg.size_coverage)?;
    let distance_bins = make_bins(&distances, cfg.distance_classes, cfg.distance_coverage)?;
    let market_size_bins = make_bins(&market_sizes, cfg.size_classes, cfg.size_coverage)?;

    let scaler = MinMaxScaler::fit(&stream.rows[..counts[0] + w - 1]);
    let mut rows = Vec::with_capacity(stream.len() * FEATURES);
    for r in &stream.rows {
        rows.extend(r.iter().enumerate().map(|(j, &v)| scaler.apply(j, v)));
    }
    let labels = (0..windows)
        .filter_map(|i| {
            let e = &stream.events[i + w];
            let (size_class, distance_class) = match e.kind {
                EventKind::Limit => (limit_size_bins.assign(e.size as f64), Some(distance_bins.assign(e.price_distance as f64))),
                EventKind::Market => (market_size_bins.assign(e.size as f64), None),
                EventKind::Cancel => return None,
            };
            Some(WindowLabel { event: i + w, split: split_of(i), kind: e.kind, size_class, distance_class })
        })
        .collect();
    Ok(Dataset {
        meta: DatasetMeta {
            config: cfg.clone(),
            n_events: stream.len(),
            feature_count: FEATURES,
            split_counts: counts,
            scaler,
            limit_size_bins,
            distance_bins,
            market_size_bins,
            labels,
        },
        rows,
    })
}

pub fn from_lobster(messages: &[MessageRecord], books: &[Snapshot], cfg: &DatasetConfig) -> Result<Dataset, IngestError> {
    window_and_split(&build_events(messages, books, cfg)?, cfg)
}

fn target_for(head: Head, l: &WindowLabel) -> Option<Target> {
    match (head, l.kind) {
        (Head::OrderType, EventKind::Limit) => Some(Target::Binary(0)),
        (Head::OrderType, EventKind::Market) => Some(Target::Binary(1)),
        (Head::Limit, EventKind::Limit) => Some(Target::Dual(l.size_class, l.distance_class.unwrap_or(0))),
        (Head::Market, EventKind::Market) => Some(Target::Class(l.size_class)),
        _ => None,
    }
}

/// The samples of one head and split.
pub struct DatasetView<'a> {
    data: &'a Dataset,
    items: Vec<(usize, Target)>,
}

impl SampleSet for DatasetView<'_> {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn sample(&self, i: usize) -> Sample {
        let (event, target) = self.items[i];
        let (book, msg) = self.data.window_matrices(event);
        Sample { book, msg, target }
    }
}

impl Dataset {
    pub fn view(&self, head: Head, split: Split) -> DatasetView<'_> {
        let items = self.meta.labels.iter().filter(|l| l.split == split).filter_map(|l| target_for(head, l).map(|t| (l.event, t))).collect();
        DatasetView { data: self, items }
    }

    /// Book (40 x W) and message (7 x W) matrices of the window before `event`.
    pub fn window_matrices(&self, event: usize) -> (Array2<f64>, Array2<f64>) {
        let w = self.meta.config.window;
        let start = event - w;
        let at = |f: usize, t: usize| self.rows[(start + t) * FEATURES + f];
        (
            Array2::from_shape_fn((BOOK_FEATURES, w), |(f, t)| at(f, t)),
            Array2::from_shape_fn((MSG_FEATURES, w), |(f, t)| at(BOOK_FEATURES + f, t)),
        )
    }

    /// Writes `features.bin` (row-major little-endian f64) and `dataset.json`.
    pub fn save(&self, dir: &Path) -> Result<(), IngestError> {
        let io = |source, p: &Path| IngestError::Io { path: p.display().to_string(), source };
        fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
        let mut bytes = Vec::with_capacity(self.rows.len() * 8);
        for v in &self.rows {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let bin = dir.join("features.bin");
        fs::write(&bin, bytes).map_err(|e| io(e, &bin))?;
        let json = dir.join("dataset.json");
        fs::write(&json, serde_json::to_vec_pretty(&self.meta)?).map_err(|e| io(e, &json))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, IngestError> {
        let io = |source, p: &Path| IngestError::Io { path: p.display().to_string(), source };
        let json = dir.join("dataset.json");
        let meta: DatasetMeta = serde_json::from_slice(&fs::read(&json).map_err(|e| io(e, &json))?)?;
        let bin = dir.join("features.bin");
        let bytes = fs::read(&bin).map_err(|e| io(e, &bin))?;
        if bytes.len() != meta.n_events * meta.feature_count * 8 || meta.feature_count != FEATURES {
            return Err(IngestError::Dataset(format!("features.bin holds {} bytes, manifest expects {}", bytes.len(), meta.n_events * meta.feature_count * 8)));
        }
        let rows = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Self { meta, rows })
    }
}
