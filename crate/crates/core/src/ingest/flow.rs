//! Order flow reconstruction from raw messages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lobster::{MessageRecord, CANCEL, DELETE, EXECUTE, EXECUTE_HIDDEN, SUBMIT};
use super::IngestError;
use crate::book::{Price, Qty, Snapshot, EMPTY_ASK_PRICE, EMPTY_BID_PRICE};
use crate::deletion::Placement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    Limit,
    /// Aggregated run of executions.
    Market,
    /// Partial cancellation.
    Cancel,
    /// Full deletion.
    Delete,
    /// Hidden execution left out of inference.
    Hidden,
    /// Cross trades and halts.
    Other,
}

impl FlowKind {
    /// Limit and market orders advance the order-arrival clock.
    pub fn is_arrival(self) -> bool {
        matches!(self, FlowKind::Limit | FlowKind::Market)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowEvent {
    pub kind: FlowKind,
    pub time: f64,
    /// Order id; for a market order the first resting order it hit.
    pub order_id: u64,
    pub size: Qty,
    /// For a market order the price of the last execution in the run.
    pub price: Price,
    /// +1 buy / -1 sell. Market orders carry the aggressor side, the
    /// opposite of the resting orders they executed against.
    pub direction: i8,
    pub first_message: usize,
    pub last_message: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InferConfig {
    /// Treat hidden executions as part of execution runs.
    pub include_hidden: bool,
}

/// Collapses each maximal run of adjacent executions with equal time stamp
/// and direction into one market order; other records pass through.
pub fn infer_market_orders(messages: &[MessageRecord], cfg: &InferConfig) -> Vec<FlowEvent> {
    let is_exec = |m: &MessageRecord| m.event_type == EXECUTE || (cfg.include_hidden && m.event_type == EXECUTE_HIDDEN);
    let mut out: Vec<FlowEvent> = Vec::with_capacity(messages.len());
    let mut run_open = false;
    for (i, m) in messages.iter().enumerate() {
        if is_exec(m) {
            if run_open {
                let last = out.last_mut().expect("open run");
                let prev = &messages[last.last_message];
                if prev.time == m.time && prev.direction == m.direction {
                    last.size += m.size;
                    last.price = m.price;
                    last.last_message = i;
                    continue;
                }
            }
            out.push(FlowEvent {
                kind: FlowKind::Market,
                time: m.time,
                order_id: m.order_id,
                size: m.size,
                price: m.price,
                direction: -m.direction,
                first_message: i,
                last_message: i,
            });
            run_open = true;
            continue;
        }
        run_open = false;
        let kind = match m.event_type {
            SUBMIT => FlowKind::Limit,
            CANCEL => FlowKind::Cancel,
            DELETE => FlowKind::Delete,
            EXECUTE_HIDDEN => FlowKind::Hidden,
            _ => FlowKind::Other,
        };
        out.push(FlowEvent {
            kind,
            time: m.time,
            order_id: m.order_id,
            size: m.size,
            price: m.price,
            direction: m.direction,
            first_message: i,
            last_message: i,
        });
    }
    out
}

/// Strictly better occupied visible levels on the order's side.
fn visible_depth(book: &Snapshot, direction: i8, price: Price) -> usize {
    if direction > 0 {
        book.bid_price.iter().filter(|&&p| p != EMPTY_BID_PRICE && p > price).count()
    } else {
        book.ask_price.iter().filter(|&&p| p != EMPTY_ASK_PRICE && p < price).count()
    }
}

/// Historical limit-order placements for fitting the deletion model.
///
/// Depth is read from the book row after the submission. Lifetimes count
/// order arrivals (limit and market) between submission and the order's end;
/// orders still resting at the end of the file count as not deleted.
pub fn placements(messages: &[MessageRecord], books: &[Snapshot], flow: &[FlowEvent]) -> Result<Vec<Placement>, IngestError> {
    if messages.len() != books.len() {
        return Err(IngestError::LengthMismatch { messages: messages.len(), books: books.len() });
    }
    let mut clock = vec![0u64; messages.len()];
    let mut arrivals = 0u64;
    for ev in flow {
        if ev.kind.is_arrival() {
            arrivals += 1;
        }
        for c in &mut clock[ev.first_message..=ev.last_message] {
            *c = arrivals;
        }
    }
    struct Live {
        depth: usize,
        start: u64,
        remaining: Qty,
    }
    let mut live: BTreeMap<u64, Live> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, m) in messages.iter().enumerate() {
        match m.event_type {
            SUBMIT => {
                live.insert(m.order_id, Live { depth: visible_depth(&books[i], m.direction, m.price), start: clock[i], remaining: m.size });
            }
            DELETE => {
                if let Some(l) = live.remove(&m.order_id) {
                    out.push(Placement { depth: l.depth, deleted: true, lifetime: clock[i] - l.start });
                }
            }
            CANCEL | EXECUTE | EXECUTE_HIDDEN => {
                if let Some(l) = live.get_mut(&m.order_id) {
                    l.remaining = l.remaining.saturating_sub(m.size);
                    if l.remaining == 0 {
                        let l = live.remove(&m.order_id).expect("present");
                        out.push(Placement { depth: l.depth, deleted: m.event_type == CANCEL, lifetime: clock[i] - l.start });
                    }
                }
            }
            _ => {}
        }
    }
    let mut rest: Vec<&Live> = live.values().collect();
    rest.sort_by_key(|l| l.start);
    out.extend(rest.into_iter().map(|l| Placement { depth: l.depth, deleted: false, lifetime: arrivals - l.start }));
    Ok(out)
}
