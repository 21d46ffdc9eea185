//! Limit order book with price-time priority matching.
//!
//! Prices are integer ticks on a grid of `tick_size`; sizes are whole shares.
//! Each side is a `BTreeMap` from price to a FIFO queue of resting orders, so
//! best-price lookup and level walks are ordered without any floating point.
//!
//! ```text
//!   asks  10030 | [o7 40]
//!         10020 | [o4 30] [o5 10]
//!         10010 | [o1 30] [o3 30]      <- best ask
//!   ------------+-----------------
//!         10000 | [o2 50]              <- best bid
//!          9990 | [o6 20]
//!   bids
//! ```

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Price = i64;
pub type Qty = u64;
pub type OrderId = u64;

/// Sentinel price for an absent ask level (LOBSTER dummy value).
pub const EMPTY_ASK_PRICE: Price = 9_999_999_999;
/// Sentinel price for an absent bid level (LOBSTER dummy value).
pub const EMPTY_BID_PRICE: Price = -9_999_999_999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BookError {
    #[error("order size must be positive")]
    NonPositiveSize,
    #[error("price {price} is not on the {tick}-tick grid")]
    OffGrid { price: Price, tick: Price },
    #[error("price {0} must be positive")]
    NonPositivePrice(Price),
    #[error("order {0} is not resting in the book")]
    NotFound(OrderId),
    #[error("{0:?} side is empty")]
    EmptySide(Side),
    #[error("tick size must be positive")]
    InvalidTick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub side: Side,
    pub price: Price,
    pub size: Qty,
    pub seq: u64,
    pub insertion_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub taker_side: Side,
    pub maker_order_id: OrderId,
    pub price: Price,
    pub size: Qty,
    pub event_clock: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LimitOutcome {
    pub executions: Vec<Execution>,
    pub resting: Option<Order>,
}

impl LimitOutcome {
    pub fn executed(&self) -> Qty {
        self.executions.iter().map(|e| e.size).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MarketOutcome {
    pub executions: Vec<Execution>,
    /// Requested size that found no liquidity.
    pub shortfall: Qty,
}

impl MarketOutcome {
    pub fn executed(&self) -> Qty {
        self.executions.iter().map(|e| e.size).sum()
    }
}

/// Depth limits enforced after events, in occupied price levels per side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthBounds {
    pub min_levels: usize,
    pub max_levels: usize,
    /// Noise orders land this many ticks beyond the furthest level, drawn
    /// uniformly from `noise_offset_min..=noise_offset_max`.
    pub noise_offset_min: i64,
    pub noise_offset_max: i64,
}

impl Default for DepthBounds {
    fn default() -> Self {
        Self {
            min_levels: 10,
            max_levels: 25,
            noise_offset_min: 5,
            noise_offset_max: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DepthAdjustment {
    pub injected: Vec<Order>,
    /// Orders cancelled by truncating levels beyond `max_levels`.
    pub removed: Vec<Order>,
}

/// Top-of-book ladder, best level first. Absent levels carry the LOBSTER
/// sentinel prices and zero size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub ask_price: Vec<Price>,
    pub ask_size: Vec<Qty>,
    pub bid_price: Vec<Price>,
    pub bid_size: Vec<Qty>,
}

impl Snapshot {
    pub fn levels(&self) -> usize {
        self.ask_price.len()
    }

    pub fn best_ask(&self) -> Option<(Price, Qty)> {
        match self.ask_price.first() {
            Some(&p) if p != EMPTY_ASK_PRICE => Some((p, self.ask_size[0])),
            _ => None,
        }
    }

    pub fn best_bid(&self) -> Option<(Price, Qty)> {
        match self.bid_price.first() {
            Some(&p) if p != EMPTY_BID_PRICE => Some((p, self.bid_size[0])),
            _ => None,
        }
    }

    pub fn mid(&self) -> Option<f64> {
        match (self.best_bid(), self.best_ask()) {
            (Some((b, _)), Some((a, _))) => Some((b + a) as f64 / 2.0),
            _ => None,
        }
    }
}

type Ladder = BTreeMap<Price, VecDeque<Order>>;

#[derive(Debug, Clone)]
pub struct BookState {
    bids: Ladder,
    asks: Ladder,
    index: HashMap<OrderId, (Side, Price)>,
    tick_size: Price,
    event_clock: u64,
    next_id: OrderId,
    next_seq: u64,
    last_mid: Option<f64>,
    /// Price of the level that most recently vanished from each side
    /// (bid, ask).
    last_cleared: [Option<Price>; 2],
}

impl Default for BookState {
    fn default() -> Self {
        Self::new(1).expect("unit tick is valid")
    }
}

impl BookState {
    pub fn new(tick_size: Price) -> Result<Self, BookError> {
        if tick_size <= 0 {
            return Err(BookError::InvalidTick);
        }
        Ok(Self {
            bids: Ladder::new(),
            asks: Ladder::new(),
            index: HashMap::new(),
            tick_size,
            event_clock: 0,
            next_id: 1,
            next_seq: 1,
            last_mid: None,
            last_cleared: [None, None],
        })
    }

    /// Empty book that remembers `mid` as the reference for reseeding an
    /// empty side.
    pub fn with_reference_mid(tick_size: Price, mid: f64) -> Result<Self, BookError> {
        let mut book = Self::new(tick_size)?;
        book.last_mid = Some(mid);
        Ok(book)
    }

    pub fn tick_size(&self) -> Price {
        self.tick_size
    }

    pub fn event_clock(&self) -> u64 {
        self.event_clock
    }

    /// Last mid-price observed with both sides present.
    pub fn last_mid(&self) -> Option<f64> {
        self.last_mid
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, id: OrderId) -> bool {
        self.index.contains_key(&id)
    }

    fn ladder(&self, side: Side) -> &Ladder {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    fn ladder_mut(&mut self, side: Side) -> &mut Ladder {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    pub fn level_count(&self, side: Side) -> usize {
        self.ladder(side).len()
    }

    pub fn best_bid(&self) -> Result<Price, BookError> {
        self.bids
            .keys()
            .next_back()
            .copied()
            .ok_or(BookError::EmptySide(Side::Bid))
    }

    pub fn best_ask(&self) -> Result<Price, BookError> {
        self.asks
            .keys()
            .next()
            .copied()
            .ok_or(BookError::EmptySide(Side::Ask))
    }

    pub fn best(&self, side: Side) -> Result<Price, BookError> {
        match side {
            Side::Bid => self.best_bid(),
            Side::Ask => self.best_ask(),
        }
    }

    pub fn mid_price(&self) -> Result<f64, BookError> {
        Ok((self.best_bid()? + self.best_ask()?) as f64 / 2.0)
    }

    pub fn spread(&self) -> Result<Price, BookError> {
        Ok(self.best_ask()? - self.best_bid()?)
    }

    /// Furthest occupied price from the touch on `side`.
    pub fn furthest(&self, side: Side) -> Option<Price> {
        match side {
            Side::Bid => self.bids.keys().next().copied(),
            Side::Ask => self.asks.keys().next_back().copied(),
        }
    }

    /// Number of strictly better priced occupied levels on the order's side.
    pub fn depth_of(&self, id: OrderId) -> Result<usize, BookError> {
        let &(side, price) = self.index.get(&id).ok_or(BookError::NotFound(id))?;
        Ok(self.depth_at(side, price))
    }

    /// Occupied levels strictly better than `price` on `side`.
    pub fn depth_at(&self, side: Side, price: Price) -> usize {
        match side {
            Side::Bid => self.bids.range(price + 1..).count(),
            Side::Ask => self.asks.range(..price).count(),
        }
    }

    pub fn order(&self, id: OrderId) -> Option<&Order> {
        let &(side, price) = self.index.get(&id)?;
        self.ladder(side)
            .get(&price)
            .and_then(|q| q.iter().find(|o| o.id == id))
    }

    /// Resting orders best level first, FIFO within a level, bids then asks,
    /// together with their current depth.
    pub fn orders_with_depth(&self) -> Vec<(&Order, usize)> {
        let mut out = Vec::with_capacity(self.index.len());
        for (depth, queue) in self.bids.values().rev().enumerate() {
            out.extend(queue.iter().map(|o| (o, depth)));
        }
        for (depth, queue) in self.asks.values().enumerate() {
            out.extend(queue.iter().map(|o| (o, depth)));
        }
        out
    }

    /// Price levels of `side`, best first, as (price, aggregated size, orders).
    pub fn levels(&self, side: Side) -> Vec<(Price, Qty, usize)> {
        let agg = |(p, q): (&Price, &VecDeque<Order>)| (*p, q.iter().map(|o| o.size).sum(), q.len());
        match side {
            Side::Bid => self.bids.iter().rev().map(agg).collect(),
            Side::Ask => self.asks.iter().map(agg).collect(),
        }
    }

    pub fn total_volume(&self) -> Qty {
        self.bids
            .values()
            .chain(self.asks.values())
            .flat_map(|q| q.iter())
            .map(|o| o.size)
            .sum()
    }

    pub fn snapshot(&self, levels: usize) -> Snapshot {
        let mut snap = Snapshot {
            ask_price: vec![EMPTY_ASK_PRICE; levels],
            ask_size: vec![0; levels],
            bid_price: vec![EMPTY_BID_PRICE; levels],
            bid_size: vec![0; levels],
        };
        for (i, (p, q)) in self.asks.iter().take(levels).enumerate() {
            snap.ask_price[i] = *p;
            snap.ask_size[i] = q.iter().map(|o| o.size).sum();
        }
        for (i, (p, q)) in self.bids.iter().rev().take(levels).enumerate() {
            snap.bid_price[i] = *p;
            snap.bid_size[i] = q.iter().map(|o| o.size).sum();
        }
        snap
    }

    fn validate(&self, price: Price, size: Qty) -> Result<(), BookError> {
        if size == 0 {
            return Err(BookError::NonPositiveSize);
        }
        if price <= 0 {
            return Err(BookError::NonPositivePrice(price));
        }
        if price % self.tick_size != 0 {
            return Err(BookError::OffGrid {
                price,
                tick: self.tick_size,
            });
        }
        Ok(())
    }

    fn refresh_mid(&mut self) {
        if let (Some(b), Some(a)) = (self.bids.keys().next_back(), self.asks.keys().next()) {
            self.last_mid = Some((b + a) as f64 / 2.0);
        }
    }

    /// Matches `size` from `taker` against the opposite ladder while the
    /// opposite touch satisfies `limit` (None = any price).
    fn take(&mut self, taker: Side, mut size: Qty, limit: Option<Price>) -> (Vec<Execution>, Qty) {
        let clock = self.event_clock;
        let mut executions = Vec::new();
        while size > 0 {
            let level_price = match taker {
                Side::Bid => self.asks.keys().next().copied(),
                Side::Ask => self.bids.keys().next_back().copied(),
            };
            let Some(price) = level_price else { break };
            let crosses = match (taker, limit) {
                (_, None) => true,
                (Side::Bid, Some(l)) => price <= l,
                (Side::Ask, Some(l)) => price >= l,
            };
            if !crosses {
                break;
            }
            let ladder = self.ladder_mut(taker.opposite());
            let queue = ladder.get_mut(&price).expect("level exists");
            let mut filled_ids = Vec::new();
            while size > 0 {
                let Some(maker) = queue.front_mut() else { break };
                let fill = size.min(maker.size);
                maker.size -= fill;
                size -= fill;
                executions.push(Execution {
                    taker_side: taker,
                    maker_order_id: maker.id,
                    price,
                    size: fill,
                    event_clock: clock,
                });
                if maker.size == 0 {
                    filled_ids.push(maker.id);
                    queue.pop_front();
                }
            }
            if queue.is_empty() {
                ladder.remove(&price);
                self.last_cleared[side_index(taker.opposite())] = Some(price);
            }
            for id in filled_ids {
                self.index.remove(&id);
            }
        }
        (executions, size)
    }

    fn rest(&mut self, side: Side, price: Price, size: Qty) -> Order {
        let depth = self.depth_at(side, price);
        let order = Order {
            id: self.next_id,
            side,
            price,
            size,
            seq: self.next_seq,
            insertion_depth: depth,
        };
        self.next_id += 1;
        self.next_seq += 1;
        self.index.insert(order.id, (side, price));
        self.ladder_mut(side)
            .entry(price)
            .or_default()
            .push_back(order.clone());
        order
    }

    /// Submits a limit order. A crossing price executes against the opposite
    /// side in price-time priority; any remainder rests at `price`.
    pub fn submit_limit(&mut self, side: Side, price: Price, size: Qty) -> Result<LimitOutcome, BookError> {
        self.validate(price, size)?;
        self.event_clock += 1;
        let (executions, remainder) = self.take(side, size, Some(price));
        let resting = (remainder > 0).then(|| self.rest(side, price, remainder));
        self.refresh_mid();
        Ok(LimitOutcome { executions, resting })
    }

    /// Submits a market order against the opposite side. Missing liquidity is
    /// reported as `shortfall` rather than an error.
    pub fn submit_market(&mut self, side: Side, size: Qty) -> Result<MarketOutcome, BookError> {
        if size == 0 {
            return Err(BookError::NonPositiveSize);
        }
        self.event_clock += 1;
        let (executions, shortfall) = self.take(side, size, None);
        self.refresh_mid();
        Ok(MarketOutcome { executions, shortfall })
    }

    pub fn cancel(&mut self, id: OrderId) -> Result<Order, BookError> {
        let (side, price) = self.index.remove(&id).ok_or(BookError::NotFound(id))?;
        self.event_clock += 1;
        let ladder = self.ladder_mut(side);
        let queue = ladder.get_mut(&price).expect("indexed level exists");
        let pos = queue
            .iter()
            .position(|o| o.id == id)
            .expect("indexed order exists");
        let order = queue.remove(pos).expect("position is valid");
        if queue.is_empty() {
            ladder.remove(&price);
            self.last_cleared[side_index(side)] = Some(price);
        }
        self.refresh_mid();
        Ok(order)
    }

    /// Truncates sides deeper than `max_levels` (deepest levels first) and
    /// tops up sides shallower than `min_levels` with noise orders placed
    /// 5 to 10 ticks beyond the furthest level. An empty side is reseeded at the
    /// last level it lost, else from the last known mid-price; without any
    /// reference price it is left empty.
    pub fn enforce_depth_bounds<R, S>(&mut self, bounds: &DepthBounds, rng: &mut R, mut size_sampler: S) -> DepthAdjustment
    where
        R: Rng + ?Sized,
        S: FnMut(&mut R) -> Qty,
    {
        let mut adj = DepthAdjustment::default();
        for side in [Side::Bid, Side::Ask] {
            while self.level_count(side) > bounds.max_levels {
                let deepest = self.furthest(side).expect("non-empty side");
                let queue = self.ladder_mut(side).remove(&deepest).expect("level exists");
                for o in queue {
                    self.index.remove(&o.id);
                    adj.removed.push(o);
                }
                self.event_clock += 1;
            }
            if self.level_count(side) == 0 {
                if let Some(first) = self.seed_price(side) {
                    let size = size_sampler(rng).max(1);
                    adj.injected.push(self.inject(side, first, size));
                } else {
                    continue;
                }
            }
            while self.level_count(side) < bounds.min_levels {
                let furthest = self.furthest(side).expect("non-empty side");
                let offset = rng.random_range(bounds.noise_offset_min..=bounds.noise_offset_max) * self.tick_size;
                let price = match side {
                    Side::Bid => furthest - offset,
                    Side::Ask => furthest + offset,
                };
                if price <= 0 {
                    break;
                }
                let size = size_sampler(rng).max(1);
                adj.injected.push(self.inject(side, price, size));
            }
        }
        if !adj.injected.is_empty() || !adj.removed.is_empty() {
            self.refresh_mid();
        }
        adj
    }

    fn inject(&mut self, side: Side, price: Price, size: Qty) -> Order {
        self.event_clock += 1;
        self.rest(side, price, size)
    }

    /// First price for reseeding an empty side: the last level that side
    /// lost, else one tick outside the last mid, never crossing the opposite
    /// touch.
    fn seed_price(&self, side: Side) -> Option<Price> {
        let tick = self.tick_size;
        let price = match self.last_cleared[side_index(side)] {
            Some(p) => p,
            None => {
                let reference = self.last_mid.or_else(|| {
                    self.best(side.opposite()).ok().map(|p| match side {
                        Side::Bid => (p - tick) as f64,
                        Side::Ask => (p + tick) as f64,
                    })
                })?;
                match side {
                    Side::Ask => ((reference / tick as f64).floor() as Price + 1) * tick,
                    Side::Bid => ((reference / tick as f64).ceil() as Price - 1) * tick,
                }
            }
        };
        let price = match (side, self.best(side.opposite()).ok()) {
            (Side::Ask, Some(b)) => price.max(b + tick),
            (Side::Bid, Some(a)) => price.min(a - tick),
            _ => price,
        };
        (price > 0).then_some(price)
    }
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Bid => 0,
        Side::Ask => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    fn one_ask_book(levels: &[(Price, Qty)]) -> BookState {
        let mut b = BookState::new(1).unwrap();
        for &(p, q) in levels {
            b.submit_limit(Side::Ask, p, q).unwrap();
        }
        b
    }

    #[test]
    fn empty_book_limit_rests_as_best_bid() {
        let mut b = BookState::new(1).unwrap();
        let out = b.submit_limit(Side::Bid, 10000, 100).unwrap();
        assert!(out.executions.is_empty());
        assert_eq!(out.resting.unwrap().size, 100);
        assert_eq!(b.best_bid().unwrap(), 10000);
    }

    #[test]
    fn exact_cross_fills_and_nothing_rests() {
        let mut b = one_ask_book(&[(10010, 50)]);
        let out = b.submit_limit(Side::Bid, 10010, 50).unwrap();
        assert_eq!(out.executions.len(), 1);
        assert_eq!((out.executions[0].price, out.executions[0].size), (10010, 50));
        assert!(out.resting.is_none());
        assert!(b.is_empty());
    }

    #[test]
    fn crossing_limit_respects_time_priority() {
        let mut b = one_ask_book(&[(10010, 30), (10010, 30)]);
        let first = b.orders_with_depth()[0].0.id;
        let out = b.submit_limit(Side::Bid, 10020, 40).unwrap();
        let fills: Vec<_> = out.executions.iter().map(|e| (e.maker_order_id, e.size)).collect();
        assert_eq!(fills, vec![(first, 30), (first + 1, 10)]);
        assert!(out.resting.is_none());
        assert_eq!(b.levels(Side::Ask), vec![(10010, 20, 1)]);
    }

    #[test]
    fn market_order_walks_levels() {
        let mut b = one_ask_book(&[(10010, 30), (10020, 30)]);
        let out = b.submit_market(Side::Bid, 40).unwrap();
        let fills: Vec<_> = out.executions.iter().map(|e| (e.price, e.size)).collect();
        assert_eq!(fills, vec![(10010, 30), (10020, 10)]);
        assert_eq!(out.shortfall, 0);
    }

    #[test]
    fn market_partial_fill_resizes_maker() {
        let mut b = one_ask_book(&[(10010, 30)]);
        let out = b.submit_market(Side::Bid, 10).unwrap();
        assert_eq!(out.executions.len(), 1);
        assert_eq!(b.levels(Side::Ask), vec![(10010, 20, 1)]);
    }

    #[test]
    fn market_into_empty_side_reports_shortfall() {
        let mut b = BookState::new(1).unwrap();
        let out = b.submit_market(Side::Ask, 25).unwrap();
        assert!(out.executions.is_empty());
        assert_eq!(out.shortfall, 25);
    }

    #[test]
    fn rejects_bad_orders_without_mutation() {
        let mut b = BookState::new(5).unwrap();
        assert_eq!(b.submit_limit(Side::Bid, 100, 0), Err(BookError::NonPositiveSize));
        assert!(matches!(b.submit_limit(Side::Bid, 101, 1), Err(BookError::OffGrid { .. })));
        assert_eq!(b.submit_market(Side::Bid, 0), Err(BookError::NonPositiveSize));
        assert!(b.is_empty());
        assert_eq!(b.event_clock(), 0);
    }

    #[test]
    fn cancel_preserves_fifo_and_reports_unknown() {
        let mut b = BookState::new(1).unwrap();
        let ids: Vec<_> = (0..3)
            .map(|_| b.submit_limit(Side::Bid, 100, 5).unwrap().resting.unwrap().id)
            .collect();
        b.cancel(ids[1]).unwrap();
        let left: Vec<_> = b.orders_with_depth().iter().map(|(o, _)| o.id).collect();
        assert_eq!(left, vec![ids[0], ids[2]]);
        assert_eq!(b.cancel(ids[1]), Err(BookError::NotFound(ids[1])));

        let mut single = BookState::new(1).unwrap();
        let id = single.submit_limit(Side::Bid, 100, 1).unwrap().resting.unwrap().id;
        single.cancel(id).unwrap();
        assert_eq!(single.level_count(Side::Bid), 0);
    }

    #[test]
    fn filled_order_cannot_be_cancelled() {
        let mut b = one_ask_book(&[(10010, 5)]);
        let id = b.orders_with_depth()[0].0.id;
        b.submit_market(Side::Bid, 5).unwrap();
        assert_eq!(b.cancel(id), Err(BookError::NotFound(id)));
    }

    #[test]
    fn queries() {
        let mut b = BookState::new(1).unwrap();
        b.submit_limit(Side::Bid, 10000, 1).unwrap();
        let ask = b.submit_limit(Side::Ask, 10010, 1).unwrap().resting.unwrap();
        assert_eq!(b.mid_price().unwrap(), 10005.0);
        assert_eq!(b.spread().unwrap(), 10);
        assert_eq!(b.depth_of(ask.id).unwrap(), 0);
        for p in [9999, 9998, 9997] {
            b.submit_limit(Side::Bid, p, 1).unwrap();
        }
        let deep = b.submit_limit(Side::Bid, 9996, 1).unwrap().resting.unwrap();
        assert_eq!(deep.insertion_depth, 4);
        b.cancel(b.orders_with_depth()[0].0.id).unwrap();
        assert_eq!(b.depth_of(deep.id).unwrap(), 3);
        assert!(matches!(BookState::new(1).unwrap().mid_price(), Err(BookError::EmptySide(_))));
    }

    #[test]
    fn snapshot_aggregates_and_pads() {
        let mut b = BookState::new(1).unwrap();
        for p in [100, 99, 98] {
            b.submit_limit(Side::Bid, p, 10).unwrap();
        }
        b.submit_limit(Side::Bid, 100, 20).unwrap();
        let s = b.snapshot(10);
        assert_eq!(&s.bid_price[..4], &[100, 99, 98, EMPTY_BID_PRICE]);
        assert_eq!(s.bid_size[0], 30);
        assert_eq!(s.bid_price.iter().filter(|&&p| p == EMPTY_BID_PRICE).count(), 7);
        assert!(s.best_ask().is_none());
    }

    fn ladder_book(side: Side, n: usize) -> BookState {
        let mut b = BookState::new(1).unwrap();
        for i in 0..n as i64 {
            match side {
                Side::Bid => b.submit_limit(Side::Bid, 10000 - i, 5).unwrap(),
                Side::Ask => b.submit_limit(Side::Ask, 10010 + i, 5).unwrap(),
            };
        }
        b
    }

    #[test]
    fn depth_bounds_top_up_nine_levels() {
        let mut b = ladder_book(Side::Bid, 9);
        b.submit_limit(Side::Ask, 10010, 5).unwrap();
        let before = b.furthest(Side::Bid).unwrap();
        let mut rng = rng_for(1, "t");
        let adj = b.enforce_depth_bounds(&DepthBounds::default(), &mut rng, |_| 7);
        let bid_noise: Vec<_> = adj.injected.iter().filter(|o| o.side == Side::Bid).collect();
        assert_eq!(bid_noise.len(), 1);
        let gap = before - bid_noise[0].price;
        assert!((5..=10).contains(&gap));
        assert_eq!(b.level_count(Side::Bid), 10);
        assert_eq!(b.level_count(Side::Ask), 10);
    }

    #[test]
    fn depth_bounds_boundary_and_truncation() {
        let mut b = ladder_book(Side::Ask, 25);
        let mut rng = rng_for(1, "t");
        let bounds = DepthBounds::default();
        let adj = b.enforce_depth_bounds(&bounds, &mut rng, |_| 7);
        assert!(adj.removed.is_empty());
        assert_eq!(b.level_count(Side::Ask), 25);

        let mut b = ladder_book(Side::Ask, 27);
        let adj = b.enforce_depth_bounds(&bounds, &mut rng, |_| 7);
        let removed: Vec<_> = adj.removed.iter().map(|o| o.price).collect();
        assert_eq!(removed, vec![10036, 10035]);
        assert_eq!(b.level_count(Side::Ask), 25);
    }

    #[test]
    fn empty_side_reseeds_from_last_mid() {
        let mut b = BookState::with_reference_mid(1, 10005.0).unwrap();
        let mut rng = rng_for(3, "t");
        b.enforce_depth_bounds(&DepthBounds::default(), &mut rng, |_| 1);
        assert_eq!(b.level_count(Side::Bid), 10);
        assert_eq!(b.level_count(Side::Ask), 10);
        assert!(b.best_bid().unwrap() < b.best_ask().unwrap());
        assert_eq!(b.best_ask().unwrap(), 10006);

        let mut bare = BookState::new(1).unwrap();
        let adj = bare.enforce_depth_bounds(&DepthBounds::default(), &mut rng, |_| 1);
        assert!(adj.injected.is_empty());
    }

    #[test]
    fn swept_side_reseeds_at_last_cleared_level() {
        let mut b = BookState::with_reference_mid(1, 10000.5).unwrap();
        b.submit_limit(Side::Bid, 10000, 5).unwrap();
        for p in [10001, 10003, 10008] {
            b.submit_limit(Side::Ask, p, 5).unwrap();
        }
        b.submit_market(Side::Bid, 100).unwrap();
        let mut rng = rng_for(3, "t");
        b.enforce_depth_bounds(&DepthBounds::default(), &mut rng, |_| 1);
        assert_eq!(b.best_ask().unwrap(), 10008);
        assert!(b.mid_price().unwrap() > 10000.5);
    }
}
