//! Single-path state machine.

use std::collections::VecDeque;

use super::generator::{BaselineGenerator, GeneratorContext, OrderGenerator, OrderKind, OrderProposal};
use super::{EventRecord, SimConfig, SimError, SimPath};
use crate::book::{BookState, Price, Qty, Side, Snapshot};
use crate::chiarella::{ChiarellaAgent, Direction, FundamentalPath};
use crate::deletion::DeletionTracker;
use crate::features::{book_features, ofi, EventFeatures, EventKind, BOOK_FEATURES, BOOK_LEVELS};
use crate::ingest::dataset::FEATURES;
use crate::seed::{rng_for, SimRng};

/// An order forced in place of the generated one (market-impact runs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcedOrder {
    pub kind: OrderKind,
    pub direction: Direction,
    pub size: Qty,
    /// Tick offset for a limit order.
    pub offset: i64,
}

#[derive(Debug, Clone)]
struct Streams {
    generator: SimRng,
    agent: SimRng,
    deletion: SimRng,
    noise: SimRng,
}

#[derive(Clone)]
pub struct Simulator<'g> {
    config: SimConfig,
    generator: &'g dyn OrderGenerator,
    book: BookState,
    tracker: DeletionTracker,
    agent: ChiarellaAgent,
    rng: Streams,
    window: Option<usize>,
    history: VecDeque<[f64; FEATURES]>,
    snapshot: Snapshot,
    step: usize,
    seed: u64,
    initial_orders: Vec<(Side, Price, Qty)>,
}

impl<'g> Simulator<'g> {
    /// Synthetic starting book of `initial_levels` per side around the
    /// configured mid, one noise-sized order per level.
    pub fn new(config: SimConfig, generator: &'g dyn OrderGenerator, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let tick = config.tick;
        let mid_ticks = config.initial_mid / tick as f64;
        let best_bid = (mid_ticks - 0.5 + 1e-9).floor() as Price;
        if best_bid <= config.initial_levels as Price {
            return Err(SimError::Config("initial mid too low for the starting book".into()));
        }
        let mut book = BookState::with_reference_mid(tick, config.initial_mid)?;
        let mut init = rng_for(seed, "init");
        let mut initial_orders = Vec::with_capacity(2 * config.initial_levels);
        for k in 0..config.initial_levels as Price {
            initial_orders.push((Side::Bid, (best_bid - k) * tick, generator.noise_size(&mut init)));
            initial_orders.push((Side::Ask, (best_bid + 1 + k) * tick, generator.noise_size(&mut init)));
        }
        let mut tracker = DeletionTracker::new(&config.deletion);
        for &(side, price, size) in &initial_orders {
            if let Some(o) = book.submit_limit(side, price, size)?.resting {
                tracker.register(&o, &config.deletion);
            }
        }
        let p0 = book.mid_price()? / tick as f64;
        let agent = ChiarellaAgent::new(config.chiarella, FundamentalPath::new(p0, config.gbm)?, p0)?;
        let window = generator.context_window();
        Ok(Self {
            snapshot: book.snapshot(BOOK_LEVELS),
            config,
            generator,
            book,
            tracker,
            agent,
            rng: Streams {
                generator: rng_for(seed, "generator"),
                agent: rng_for(seed, "agent"),
                deletion: rng_for(seed, "deletion"),
                noise: rng_for(seed, "noise"),
            },
            window,
            history: VecDeque::with_capacity(window.unwrap_or(0) + 1),
            step: 0,
            seed,
            initial_orders,
        })
    }

    pub fn book(&self) -> &BookState {
        &self.book
    }

    pub fn agent(&self) -> &ChiarellaAgent {
        &self.agent
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    fn mid_ticks(&self) -> f64 {
        let mid = self.book.mid_price().ok().or(self.book.last_mid()).unwrap_or(self.config.initial_mid);
        mid / self.config.tick as f64
    }

    /// Decoded limit price: touch minus (bids) or plus (asks) the offset,
    /// kept at least one tick away from the opposite touch.
    fn limit_price(&self, side: Side, offset: i64) -> Price {
        let tick = self.config.tick;
        let reference = self.book.last_mid().unwrap_or(self.config.initial_mid);
        let mut price = match (side, self.book.best(side).ok()) {
            (Side::Bid, Some(b)) => b - offset * tick,
            (Side::Ask, Some(a)) => a + offset * tick,
            (Side::Bid, None) => ((reference / tick as f64).floor() as Price - offset) * tick,
            (Side::Ask, None) => ((reference / tick as f64).ceil() as Price + offset) * tick,
        };
        if let Ok(opposite) = self.book.best(side.opposite()) {
            price = match side {
                Side::Bid => price.min(opposite - tick),
                Side::Ask => price.max(opposite + tick),
            };
        }
        price.max(tick)
    }

    pub fn step(&mut self) -> Result<EventRecord, SimError> {
        self.step_with(self.generator, None)
    }

    /// One full cycle with `generator`; `forced` replaces the generated
    /// order after the generator and agent have drawn their numbers.
    pub fn step_with(&mut self, generator: &dyn OrderGenerator, forced: Option<ForcedOrder>) -> Result<EventRecord, SimError> {
        let ctx = GeneratorContext { book: &self.book, snapshot: &self.snapshot, history: &self.history, step: self.step };
        let mut proposal: OrderProposal = generator.propose(&ctx, &mut self.rng.generator)?;
        let fundamental = self.agent.fundamental.v;
        let (mut direction, _) = self.agent.decide(self.mid_ticks(), &mut self.rng.agent);
        if let Some(f) = forced {
            direction = f.direction;
            proposal.kind = f.kind;
            proposal.size = f.size;
            proposal.offset = (f.kind == OrderKind::Limit).then_some(f.offset);
        }
        let side = direction.side();
        let size = proposal.size.max(1);
        let stats = &self.config.deletion;
        let (price, executions) = match proposal.kind {
            OrderKind::Limit => {
                let price = self.limit_price(side, proposal.offset.unwrap_or(0));
                let out = self.book.submit_limit(side, price, size)?;
                if let Some(o) = &out.resting {
                    self.tracker.register(o, stats);
                }
                (Some(price), out.executions)
            }
            OrderKind::Market => (None, self.book.submit_market(side, size)?.executions),
        };
        let executed = executions.iter().map(|e| e.size).sum();
        for e in &executions {
            if !self.book.contains(e.maker_order_id) {
                self.tracker.forget(e.maker_order_id);
            }
        }
        let deleted: Vec<_> = self.tracker.step(&mut self.book, stats, &mut self.rng.deletion).into_iter().map(|o| o.id).collect();
        let generator_ref = generator;
        let adj = self.book.enforce_depth_bounds(&self.config.depth, &mut self.rng.noise, |r| generator_ref.noise_size(r));
        for o in &adj.injected {
            self.tracker.exempt(o.id);
        }
        for o in &adj.removed {
            self.tracker.forget(o.id);
        }
        let mid = self.book.mid_price().unwrap_or(f64::NAN);
        let spread = self.book.spread().unwrap_or(0);
        let p = self.mid_ticks();
        self.agent.observe(p, &mut self.rng.agent);
        if let Some(w) = self.window {
            let snap = self.book.snapshot(BOOK_LEVELS);
            let kind = match proposal.kind {
                OrderKind::Limit => EventKind::Limit,
                OrderKind::Market => EventKind::Market,
            };
            let features = EventFeatures {
                kind,
                direction: direction.sign(),
                size,
                price_distance: proposal.offset.unwrap_or(0),
                ofi: ofi(&self.snapshot, &snap),
            };
            let mut row = [0.0; FEATURES];
            row[..BOOK_FEATURES].copy_from_slice(&book_features(&snap, self.config.tick));
            row[BOOK_FEATURES..].copy_from_slice(&features.to_array());
            self.history.push_back(row);
            while self.history.len() > w {
                self.history.pop_front();
            }
            self.snapshot = snap;
        }
        let record = EventRecord {
            index: self.step,
            kind: proposal.kind,
            direction: direction.sign(),
            size,
            price,
            executed,
            deleted,
            removed: adj.removed.iter().map(|o| o.id).collect(),
            injected: adj.injected.iter().map(|o| (o.side, o.price, o.size)).collect(),
            mid,
            spread,
            fundamental,
        };
        self.step += 1;
        Ok(record)
    }

    /// Fills the generator context with `events` steps of `warmup` that are
    /// not recorded.
    pub fn burn_in(&mut self, warmup: &dyn OrderGenerator, events: usize) -> Result<(), SimError> {
        for _ in 0..events {
            self.step_with(warmup, None)?;
        }
        self.step = 0;
        Ok(())
    }

    pub fn run_events(&mut self, n: usize) -> Result<Vec<EventRecord>, SimError> {
        (0..n).map(|_| self.step()).collect()
    }

    pub fn into_path(self, events: Vec<EventRecord>) -> SimPath {
        SimPath {
            seed: self.seed,
            params: self.config.chiarella,
            deletion_scale: self.config.deletion.scale,
            initial_orders: self.initial_orders,
            events,
        }
    }
}

/// Runs `n_events` steps from a fresh book. Generators that read a context
/// are first warmed up with the synthetic baseline sampler.
pub fn run(config: &SimConfig, generator: &dyn OrderGenerator, n_events: usize, seed: u64) -> Result<SimPath, SimError> {
    if n_events == 0 {
        return Err(SimError::Config("n_events must be at least 1".into()));
    }
    let mut sim = Simulator::new(config.clone(), generator, seed)?;
    if let Some(w) = generator.context_window() {
        sim.burn_in(&BaselineGenerator::synthetic_default(), w)?;
    }
    let events = sim.run_events(n_events)?;
    Ok(sim.into_path(events))
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

/// Rebuilds the book from the event records alone and checks every mid and
/// spread against the recorded path.
pub fn replay(config: &SimConfig, path: &SimPath) -> Result<BookState, SimError> {
    let mut book = BookState::with_reference_mid(config.tick, config.initial_mid)?;
    for &(side, price, size) in &path.initial_orders {
        book.submit_limit(side, price, size)?;
    }
    for (i, e) in path.events.iter().enumerate() {
        let side = if e.direction > 0 { Side::Bid } else { Side::Ask };
        match (e.kind, e.price) {
            (OrderKind::Limit, Some(p)) => {
                book.submit_limit(side, p, e.size)?;
            }
            (OrderKind::Market, _) => {
                book.submit_market(side, e.size)?;
            }
            (OrderKind::Limit, None) => return Err(SimError::ReplayDiverged(i)),
        }
        for &id in e.deleted.iter().chain(&e.removed) {
            book.cancel(id).map_err(|_| SimError::ReplayDiverged(i))?;
        }
        for &(s, p, q) in &e.injected {
            book.submit_limit(s, p, q)?;
        }
        let mid = book.mid_price().unwrap_or(f64::NAN);
        if !same(mid, e.mid) || book.spread().unwrap_or(0) != e.spread {
            return Err(SimError::ReplayDiverged(i));
        }
    }
    Ok(book)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::experiments::{default_injection, market_impact, monte_carlo};
    use crate::par::Execution;

    fn setup() -> (SimConfig, BaselineGenerator) {
        (SimConfig::default(), BaselineGenerator::synthetic_default())
    }

    #[test]
    fn same_seed_same_path() {
        let (cfg, g) = setup();
        assert_eq!(run(&cfg, &g, 500, 4).unwrap(), run(&cfg, &g, 500, 4).unwrap());
        assert_ne!(run(&cfg, &g, 500, 4).unwrap().mids(), run(&cfg, &g, 500, 5).unwrap().mids());
    }

    #[test]
    fn replay_reproduces_every_step() {
        let (cfg, g) = setup();
        let path = run(&cfg, &g, 3000, 8).unwrap();
        replay(&cfg, &path).unwrap();
        let mut broken = path.clone();
        broken.events[100].mid += 100.0;
        assert!(matches!(replay(&cfg, &broken), Err(SimError::ReplayDiverged(100))));
    }

    #[test]
    fn depth_bounds_hold_and_book_stays_two_sided() {
        let (cfg, g) = setup();
        let mut sim = Simulator::new(cfg.clone(), &g, 2).unwrap();
        for _ in 0..3000 {
            let e = sim.step().unwrap();
            assert!(e.mid.is_finite() && e.spread > 0);
            let levels = |s| sim.book().levels(s).len();
            assert!(levels(Side::Bid) >= cfg.depth.min_levels && levels(Side::Ask) >= cfg.depth.min_levels);
        }
    }

    #[test]
    fn forced_market_buy_lifts_mid_and_passive_limit_does_not() {
        let (cfg, g) = setup();
        let base = Simulator::new(cfg.clone(), &g, 1).unwrap();
        let mid0 = base.book().mid_price().unwrap();
        let mut buy = base.clone();
        let big = ForcedOrder { kind: OrderKind::Market, direction: Direction::Buy, size: 2000, offset: 0 };
        let event = buy.step_with(&g, Some(big)).unwrap();
        assert!(event.executed > 0);
        let mut cfg_quiet = cfg.clone();
        cfg_quiet.deletion.scale = 0.0;
        let mut passive = Simulator::new(cfg_quiet, &g, 1).unwrap();
        let far = ForcedOrder { kind: OrderKind::Limit, direction: Direction::Sell, size: 10, offset: 5 };
        let e = passive.step_with(&g, Some(far)).unwrap();
        assert!(event.mid > mid0);
        assert_eq!(e.mid, mid0);
        assert_eq!(e.executed, 0);
    }

    #[test]
    fn zero_scale_deletes_nothing() {
        let (mut cfg, g) = setup();
        cfg.deletion.scale = 0.0;
        assert_eq!(run(&cfg, &g, 2000, 3).unwrap().total_deleted(), 0);
    }

    #[test]
    fn serial_and_parallel_paths_match() {
        let (cfg, g) = setup();
        let a = monte_carlo(&cfg, &g, 4, 400, 7, Execution::Serial).unwrap();
        let b = monte_carlo(&cfg, &g, 4, 400, 7, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].mids(), a[1].mids());
    }

    #[test]
    fn impact_twins_share_the_prefix() {
        let (cfg, g) = setup();
        let r = market_impact(&cfg, &g, default_injection(&g), 200, 600, 3, 5, Execution::Serial).unwrap();
        for (b, m) in r.baseline.iter().zip(&r.impact) {
            assert_eq!(b.events[..200], m.events[..200]);
            assert_eq!(b.len(), 600);
            assert_eq!(m.len(), 600);
            assert_eq!(m.events[200].kind, OrderKind::Market);
            assert_eq!(m.events[200].direction, 1);
        }
        assert!(r.mean_gap(0) > 0.0);
        let again = market_impact(&cfg, &g, default_injection(&g), 200, 600, 3, 5, Execution::Parallel).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn bad_inputs_rejected() {
        let (cfg, g) = setup();
        assert!(run(&cfg, &g, 0, 1).is_err());
        assert!(market_impact(&cfg, &g, default_injection(&g), 10, 10, 1, 1, Execution::Serial).is_err());
        assert!(monte_carlo(&cfg, &g, 0, 10, 1, Execution::Serial).is_err());
        let mut bad = cfg.clone();
        bad.tick = 0;
        assert!(Simulator::new(bad, &g, 1).is_err());
    }
}
