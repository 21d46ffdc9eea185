//! Replays a simulated path into LOBSTER message and orderbook records.

use super::generator::OrderKind;
use super::{SimConfig, SimError, SimPath};
use crate::book::{BookState, Execution, OrderId, Side, Snapshot};
use crate::ingest::lobster::{MessageRecord, DELETE, EXECUTE, SUBMIT};

/// Levels written per orderbook row.
pub const EXPORT_LEVELS: usize = 10;

/// Seconds after midnight of the first message.
const OPEN: f64 = 34_200.0;
/// Spacing between simulated events in seconds.
const DT: f64 = 0.01;

fn sign(side: Side) -> i8 {
    match side {
        Side::Bid => 1,
        Side::Ask => -1,
    }
}

struct Writer {
    messages: Vec<MessageRecord>,
    books: Vec<Snapshot>,
}

impl Writer {
    fn push(&mut self, book: &BookState, m: MessageRecord) {
        self.messages.push(m);
        self.books.push(book.snapshot(EXPORT_LEVELS));
    }

    /// One execution message per fill, each with the book as of that fill.
    fn executions(&mut self, before: &BookState, time: f64, fills: &[Execution]) -> Result<(), SimError> {
        let mut partial = before.clone();
        for e in fills {
            let maker = e.taker_side.opposite();
            partial.submit_market(e.taker_side, e.size)?;
            self.messages.push(MessageRecord { time, event_type: EXECUTE, order_id: e.maker_order_id, size: e.size, price: e.price, direction: sign(maker) });
            self.books.push(partial.snapshot(EXPORT_LEVELS));
        }
        Ok(())
    }

    fn delete(&mut self, book: &mut BookState, time: f64, id: OrderId, step: usize) -> Result<(), SimError> {
        let o = book.cancel(id).map_err(|_| SimError::ReplayDiverged(step))?;
        self.push(book, MessageRecord { time, event_type: DELETE, order_id: id, size: o.size, price: o.price, direction: sign(o.side) });
        Ok(())
    }

    fn submit(&mut self, book: &mut BookState, time: f64, side: Side, price: i64, size: u64) -> Result<(), SimError> {
        let before = book.clone();
        let out = book.submit_limit(side, price, size)?;
        if !out.executions.is_empty() {
            self.executions(&before, time, &out.executions)?;
        }
        if let Some(o) = out.resting {
            self.push(book, MessageRecord { time, event_type: SUBMIT, order_id: o.id, size: o.size, price: o.price, direction: sign(side) });
        }
        Ok(())
    }
}

/// Messages and matching orderbook rows (one per message) for `path`,
/// starting with the submissions of the initial book.
pub fn to_lobster(config: &SimConfig, path: &SimPath) -> Result<(Vec<MessageRecord>, Vec<Snapshot>), SimError> {
    let mut book = BookState::with_reference_mid(config.tick, config.initial_mid)?;
    let mut w = Writer { messages: Vec::new(), books: Vec::new() };
    for &(side, price, size) in &path.initial_orders {
        w.submit(&mut book, OPEN, side, price, size)?;
    }
    for (i, e) in path.events.iter().enumerate() {
        let time = OPEN + DT * (i + 1) as f64;
        let side = if e.direction > 0 { Side::Bid } else { Side::Ask };
        match (e.kind, e.price) {
            (OrderKind::Limit, Some(p)) => w.submit(&mut book, time, side, p, e.size)?,
            (OrderKind::Market, _) => {
                let before = book.clone();
                let out = book.submit_market(side, e.size)?;
                w.executions(&before, time, &out.executions)?;
            }
            (OrderKind::Limit, None) => return Err(SimError::ReplayDiverged(i)),
        }
        for &id in e.deleted.iter().chain(&e.removed) {
            w.delete(&mut book, time, id, i)?;
        }
        for &(s, p, q) in &e.injected {
            w.submit(&mut book, time, s, p, q)?;
        }
    }
    Ok((w.messages, w.books))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::flow::{infer_market_orders, FlowKind, InferConfig};
    use crate::sim::{run, BaselineGenerator};

    #[test]
    fn export_round_trips_through_flow_inference() {
        let cfg = SimConfig::default();
        let path = run(&cfg, &BaselineGenerator::synthetic_default(), 800, 2).unwrap();
        let (messages, books) = to_lobster(&cfg, &path).unwrap();
        assert_eq!(messages.len(), books.len());
        let last_mid = books.last().unwrap().mid().unwrap();
        assert_eq!(last_mid, path.events.last().unwrap().mid);
        let markets = path.events.iter().filter(|e| e.kind == OrderKind::Market && e.executed > 0).count();
        let inferred = infer_market_orders(&messages, &InferConfig::default()).iter().filter(|f| f.kind == FlowKind::Market).count();
        // Crossing limit orders also surface as execution runs.
        assert!(inferred >= markets, "{inferred} < {markets}");
        let deletions = messages.iter().filter(|m| m.event_type == DELETE).count();
        assert_eq!(deletions, path.events.iter().map(|e| e.deleted.len() + e.removed.len()).sum::<usize>());
    }
}
