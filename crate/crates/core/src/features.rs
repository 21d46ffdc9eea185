//! Per-event feature vectors shared by ingestion and simulation.

use serde::{Deserialize, Serialize};

use crate::book::{Price, Qty, Side, Snapshot};

/// Message features per event: limit, market, cancel flags, direction,
/// size, signed price distance and OFI.
pub const MSG_FEATURES: usize = 7;
/// Book levels used as model input.
pub const BOOK_LEVELS: usize = 10;
/// `(ask - mid)/tick, ask size, (mid - bid)/tick, bid size` per level.
pub const BOOK_FEATURES: usize = 4 * BOOK_LEVELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Limit,
    Market,
    Cancel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventFeatures {
    pub kind: EventKind,
    /// +1 buy / -1 sell; for market orders the aggressor side.
    pub direction: i8,
    pub size: Qty,
    pub price_distance: i64,
    pub ofi: i64,
}

impl EventFeatures {
    pub fn to_array(&self) -> [f64; MSG_FEATURES] {
        [
            f64::from(u8::from(self.kind == EventKind::Limit)),
            f64::from(u8::from(self.kind == EventKind::Market)),
            f64::from(u8::from(self.kind == EventKind::Cancel)),
            f64::from(self.direction),
            self.size as f64,
            self.price_distance as f64,
            self.ofi as f64,
        ]
    }
}

/// Signed tick distance from the same-side touch; positive is passive.
/// Returns 0 when that touch is missing.
pub fn price_distance(side: Side, price: Price, snap: &Snapshot, tick: Price) -> i64 {
    match side {
        Side::Bid => snap.best_bid().map_or(0, |(b, _)| (b - price) / tick),
        Side::Ask => snap.best_ask().map_or(0, |(a, _)| (price - a) / tick),
    }
}

/// Level-1 order flow imbalance between consecutive snapshots.
pub fn ofi(prev: &Snapshot, cur: &Snapshot) -> i64 {
    let level1 = |s: &Snapshot| (s.bid_price[0], s.bid_size[0] as i64, s.ask_price[0], s.ask_size[0] as i64);
    let (pb0, qb0, ps0, qs0) = level1(prev);
    let (pb1, qb1, ps1, qs1) = level1(cur);
    let ind = |c: bool| i64::from(c);
    qb1 * ind(pb1 >= pb0) - qb0 * ind(pb1 <= pb0) - qs1 * ind(ps1 <= ps0) + qs0 * ind(ps1 >= ps0)
}

pub fn book_features(snap: &Snapshot, tick: Price) -> [f64; BOOK_FEATURES] {
    let mut out = [0.0; BOOK_FEATURES];
    let Some(mid) = snap.mid() else {
        return out;
    };
    let t = tick as f64;
    let ask_empty = crate::book::EMPTY_ASK_PRICE;
    let bid_empty = crate::book::EMPTY_BID_PRICE;
    for level in 0..BOOK_LEVELS.min(snap.levels()) {
        let base = 4 * level;
        if snap.ask_price[level] != ask_empty {
            out[base] = (snap.ask_price[level] as f64 - mid) / t;
            out[base + 1] = snap.ask_size[level] as f64;
        }
        if snap.bid_price[level] != bid_empty {
            out[base + 2] = (mid - snap.bid_price[level] as f64) / t;
            out[base + 3] = snap.bid_size[level] as f64;
        }
    }
    out
}
