//! Brute-force reference matcher and a randomized operation driver.

#![allow(dead_code)]

use lobgen::book::{BookState, OrderId, Price, Qty, Side};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefOrder {
    pub id: OrderId,
    pub side: Side,
    pub price: Price,
    pub size: Qty,
    pub seq: u64,
}

/// Flat list of orders; every query scans it.
#[derive(Debug, Default)]
pub struct RefBook {
    pub orders: Vec<RefOrder>,
    next_id: OrderId,
    next_seq: u64,
}

/// (maker id, price, size) per fill.
pub type Fills = Vec<(OrderId, Price, Qty)>;

impl RefBook {
    pub fn new() -> Self {
        Self { orders: Vec::new(), next_id: 1, next_seq: 1 }
    }

    fn best_maker(&self, taker: Side, limit: Option<Price>) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, o) in self.orders.iter().enumerate() {
            if o.side == taker {
                continue;
            }
            let ok = match (taker, limit) {
                (_, None) => true,
                (Side::Bid, Some(l)) => o.price <= l,
                (Side::Ask, Some(l)) => o.price >= l,
            };
            if !ok {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(j) => {
                    let b = &self.orders[j];
                    let better = match taker {
                        Side::Bid => o.price < b.price || (o.price == b.price && o.seq < b.seq),
                        Side::Ask => o.price > b.price || (o.price == b.price && o.seq < b.seq),
                    };
                    Some(if better { i } else { j })
                }
            };
        }
        best
    }

    fn take(&mut self, taker: Side, mut size: Qty, limit: Option<Price>) -> (Fills, Qty) {
        let mut fills = Vec::new();
        while size > 0 {
            let Some(i) = self.best_maker(taker, limit) else { break };
            let fill = size.min(self.orders[i].size);
            fills.push((self.orders[i].id, self.orders[i].price, fill));
            self.orders[i].size -= fill;
            size -= fill;
            if self.orders[i].size == 0 {
                self.orders.remove(i);
            }
        }
        (fills, size)
    }

    /// Distinct strictly better prices on `side`.
    pub fn depth_at(&self, side: Side, price: Price) -> usize {
        let mut better: Vec<Price> = self
            .orders
            .iter()
            .filter(|o| o.side == side && if side == Side::Bid { o.price > price } else { o.price < price })
            .map(|o| o.price)
            .collect();
        better.sort_unstable();
        better.dedup();
        better.len()
    }

    pub fn submit_limit(&mut self, side: Side, price: Price, size: Qty) -> (Fills, Option<(OrderId, Qty, usize)>) {
        let (fills, rest) = self.take(side, size, Some(price));
        if rest == 0 {
            return (fills, None);
        }
        let depth = self.depth_at(side, price);
        let o = RefOrder { id: self.next_id, side, price, size: rest, seq: self.next_seq };
        self.next_id += 1;
        self.next_seq += 1;
        self.orders.push(o);
        (fills, Some((o.id, rest, depth)))
    }

    pub fn submit_market(&mut self, side: Side, size: Qty) -> (Fills, Qty) {
        self.take(side, size, None)
    }

    pub fn cancel(&mut self, id: OrderId) -> Option<RefOrder> {
        let i = self.orders.iter().position(|o| o.id == id)?;
        Some(self.orders.remove(i))
    }

    /// (id, side, price, size) best first, FIFO within a price, bids then asks.
    pub fn priority_list(&self) -> Vec<(OrderId, Side, Price, Qty)> {
        let mut bids: Vec<&RefOrder> = self.orders.iter().filter(|o| o.side == Side::Bid).collect();
        bids.sort_by_key(|o| (std::cmp::Reverse(o.price), o.seq));
        let mut asks: Vec<&RefOrder> = self.orders.iter().filter(|o| o.side == Side::Ask).collect();
        asks.sort_by_key(|o| (o.price, o.seq));
        bids.into_iter().chain(asks).map(|o| (o.id, o.side, o.price, o.size)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Op {
    Limit(Side, Price, Qty),
    Market(Side, Qty),
    /// Cancels the `k`-th live order (modulo the live count).
    Cancel(usize),
}

/// Orders around a 1000-tick mid with crossing limits, markets and cancels.
pub fn random_op<R: Rng>(rng: &mut R, tick: Price) -> Op {
    let side = if rng.random::<bool>() { Side::Bid } else { Side::Ask };
    match rng.random_range(0..10) {
        0..=5 => Op::Limit(side, (1000 + rng.random_range(-12..=12)) * tick, rng.random_range(1..=50)),
        6 | 7 => Op::Market(side, rng.random_range(1..=80)),
        _ => Op::Cancel(rng.random_range(0..1000)),
    }
}

/// Applies `op` to both books; `Err` describes the first divergence.
pub fn apply_both(book: &mut BookState, reference: &mut RefBook, op: Op) -> Result<(), String> {
    match op {
        Op::Limit(side, price, size) => {
            let out = book.submit_limit(side, price, size).map_err(|e| e.to_string())?;
            let (fills, rest) = reference.submit_limit(side, price, size);
            let got: Fills = out.executions.iter().map(|e| (e.maker_order_id, e.price, e.size)).collect();
            if got != fills {
                return Err(format!("{op:?}: fills {got:?} vs {fills:?}"));
            }
            let got_rest = out.resting.map(|o| (o.id, o.size, o.insertion_depth));
            if got_rest != rest {
                return Err(format!("{op:?}: resting {got_rest:?} vs {rest:?}"));
            }
        }
        Op::Market(side, size) => {
            let out = book.submit_market(side, size).map_err(|e| e.to_string())?;
            let (fills, short) = reference.submit_market(side, size);
            let got: Fills = out.executions.iter().map(|e| (e.maker_order_id, e.price, e.size)).collect();
            if got != fills || out.shortfall != short {
                return Err(format!("{op:?}: fills {got:?} vs {fills:?}"));
            }
        }
        Op::Cancel(k) => {
            if reference.orders.is_empty() {
                return Ok(());
            }
            let id = reference.orders[k % reference.orders.len()].id;
            let r = reference.cancel(id).expect("live");
            let o = book.cancel(id).map_err(|e| format!("cancel {id}: {e}"))?;
            if (o.id, o.price, o.size) != (r.id, r.price, r.size) {
                return Err(format!("cancel {id}: {o:?} vs {r:?}"));
            }
        }
    }
    let got: Vec<_> = book.orders_with_depth().into_iter().map(|(o, _)| (o.id, o.side, o.price, o.size)).collect();
    let want = reference.priority_list();
    if got != want {
        return Err(format!("{op:?}: queues differ"));
    }
    Ok(())
}

/// Runs `n` random operations, stopping at the first divergence. Returns
/// the operations applied and the divergence, if any.
pub fn oracle_run(n: usize, seed: u64) -> (usize, Option<String>) {
    let tick = 100;
    let mut rng = lobgen::seed::rng_for(seed, "oracle");
    let mut book = BookState::new(tick).expect("tick");
    let mut reference = RefBook::new();
    for i in 0..n {
        let op = random_op(&mut rng, tick);
        if let Err(e) = apply_both(&mut book, &mut reference, op) {
            return (i, Some(e));
        }
    }
    (n, None)
}
