//! Event-time simulation.
//!
//! Each step the generator proposes the next order, the Chiarella agent sets
//! its direction, the book matches it, the deletion model cancels resting
//! orders and the depth bounds are restored with noise orders.

pub mod engine;
pub mod experiments;
pub mod export;
pub mod generator;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{BookError, DepthBounds, OrderId, Price, Qty, Side};
use crate::chiarella::{ChiarellaError, ChiarellaParams, GbmParams};
use crate::deletion::DeletionStats;
use crate::features::EventKind;

pub use engine::{replay, run, Simulator};
pub use experiments::{calibrate_deletion_scale, market_impact, monte_carlo, ImpactResult};
pub use generator::{BaselineGenerator, SyntheticFlow, GeneratorContext, OrderGenerator, OrderKind, OrderProposal, TablGenerator};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("book: {0}")]
    Book(#[from] BookError),
    #[error("agent: {0}")]
    Agent(#[from] ChiarellaError),
    #[error("generator: {0}")]
    Generator(String),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("replay diverged at event {0}")]
    ReplayDiverged(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Tick size in price units.
    pub tick: Price,
    /// Starting mid-price in price units.
    pub initial_mid: f64,
    /// Levels per side of the synthetic starting book.
    pub initial_levels: usize,
    pub depth: DepthBounds,
    pub chiarella: ChiarellaParams,
    /// Fundamental-value GBM per event, on prices measured in ticks.
    pub gbm: GbmParams,
    pub deletion: DeletionStats,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tick: 100,
            initial_mid: 1_000_050.0,
            initial_levels: 15,
            depth: DepthBounds::default(),
            chiarella: ChiarellaParams::default(),
            gbm: GbmParams { mu: 0.0, sigma: 2e-5 },
            deletion: DeletionStats::synthetic_default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.tick <= 0 {
            return Err(SimError::Config("tick must be positive".into()));
        }
        if !(self.initial_mid.is_finite() && self.initial_mid > 2.0 * self.tick as f64) {
            return Err(SimError::Config("initial mid must be positive and above two ticks".into()));
        }
        if self.initial_levels == 0 {
            return Err(SimError::Config("initial book needs at least one level".into()));
        }
        let d = &self.depth;
        if d.min_levels > d.max_levels || d.noise_offset_min < 1 || d.noise_offset_min > d.noise_offset_max {
            return Err(SimError::Config("inconsistent depth bounds".into()));
        }
        self.chiarella.validate()?;
        self.deletion.validate().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Everything needed to replay one step without the generator or rngs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub index: usize,
    pub kind: OrderKind,
    /// +1 buy / -1 sell.
    pub direction: i8,
    pub size: Qty,
    /// Limit price; `None` for market orders.
    pub price: Option<Price>,
    pub executed: Qty,
    pub deleted: Vec<OrderId>,
    pub removed: Vec<OrderId>,
    pub injected: Vec<(Side, Price, Qty)>,
    /// Mid and spread after the step; `NaN` / 0 when a side is empty.
    pub mid: f64,
    pub spread: Price,
    /// Fundamental value (in ticks) the agent saw when deciding.
    pub fundamental: f64,
}

impl EventRecord {
    pub fn event_kind(&self) -> EventKind {
        match self.kind {
            OrderKind::Limit => EventKind::Limit,
            OrderKind::Market => EventKind::Market,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPath {
    pub seed: u64,
    pub params: ChiarellaParams,
    pub deletion_scale: f64,
    pub initial_orders: Vec<(Side, Price, Qty)>,
    pub events: Vec<EventRecord>,
}

impl SimPath {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn mids(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.mid).collect()
    }

    pub fn directions(&self) -> Vec<f64> {
        self.events.iter().map(|e| f64::from(e.direction)).collect()
    }

    /// One order event followed by its deletions, per step.
    pub fn deletion_flags(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.events.len() * 2);
        for e in &self.events {
            out.push(false);
            out.extend(std::iter::repeat_n(true, e.deleted.len()));
        }
        out
    }

    pub fn total_deleted(&self) -> usize {
        self.events.iter().map(|e| e.deleted.len()).sum()
    }

    /// Columns: event, mid, spread, kind, direction, size, executed, deleted,
    /// injected, fundamental.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["event", "mid", "spread", "kind", "direction", "size", "executed", "deleted", "injected", "fundamental"])?;
        for e in &self.events {
            w.write_record([
                e.index.to_string(),
                e.mid.to_string(),
                e.spread.to_string(),
                match e.kind {
                    OrderKind::Limit => "limit".to_string(),
                    OrderKind::Market => "market".to_string(),
                },
                e.direction.to_string(),
                e.size.to_string(),
                e.executed.to_string(),
                e.deleted.len().to_string(),
                e.injected.len().to_string(),
                e.fundamental.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
