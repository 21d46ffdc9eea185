//! Extended Chiarella demand model.
//!
//! Three trader types contribute demand each event:
//!
//! ```text
//! D_f = kappa * (v_t - p_t)                         fundamentalist
//! M_t = (1 - alpha) * M_{t-1} + alpha * (p_t - p_{t-1})
//! D_m = beta * tanh(gamma * M_t)                    momentum
//! D_n ~ N(0, sigma_N)                               noise
//! D   = D_f * dT + D_m + D_n * sqrt(dT)
//! ```
//!
//! Only the sign of `D` is used: it sets the direction of the next order.
//! The fundamental value `v_t` follows a geometric Brownian motion.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::Side;

#[derive(Debug, Error, PartialEq)]
pub enum ChiarellaError {
    #[error("invalid chiarella parameter: {0}")]
    InvalidParam(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiarellaParams {
    pub kappa: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub sigma_noise: f64,
    #[serde(default = "default_delta_t")]
    pub delta_t: f64,
}

fn default_delta_t() -> f64 {
    1.0
}

impl Default for ChiarellaParams {
    fn default() -> Self {
        Self {
            kappa: 0.01,
            beta: 0.1,
            gamma: 1.0,
            alpha: 0.5,
            sigma_noise: 1.0,
            delta_t: 1.0,
        }
    }
}

impl ChiarellaParams {
    pub fn validate(&self) -> Result<(), ChiarellaError> {
        let finite = [self.kappa, self.beta, self.gamma, self.alpha, self.sigma_noise, self.delta_t]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(ChiarellaError::InvalidParam("non-finite value"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ChiarellaError::InvalidParam("alpha must lie in (0, 1]"));
        }
        if self.sigma_noise < 0.0 {
            return Err(ChiarellaError::InvalidParam("sigma_noise must be non-negative"));
        }
        if self.delta_t <= 0.0 {
            return Err(ChiarellaError::InvalidParam("delta_t must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Buy,
    Sell,
}

impl Direction {
    pub fn sign(self) -> i8 {
        match self {
            Direction::Buy => 1,
            Direction::Sell => -1,
        }
    }

    pub fn side(self) -> Side {
        match self {
            Direction::Buy => Side::Bid,
            Direction::Sell => Side::Ask,
        }
    }
}

impl From<Direction> for Side {
    fn from(d: Direction) -> Side {
        d.side()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GbmParams {
    /// Drift per unit of event time (log scale).
    pub mu: f64,
    /// Volatility per square-root unit of event time.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalPath {
    pub v: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl FundamentalPath {
    pub fn new(v0: f64, gbm: GbmParams) -> Result<Self, ChiarellaError> {
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(ChiarellaError::InvalidParam("fundamental value must be positive"));
        }
        Ok(Self {
            v: v0,
            mu: gbm.mu,
            sigma: gbm.sigma,
        })
    }

    /// `v <- v * exp((mu - sigma^2/2) dt + sigma sqrt(dt) Z)`.
    pub fn gbm_step<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> f64 {
        let z: f64 = if self.sigma > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
        self.v *= ((self.mu - 0.5 * self.sigma * self.sigma) * dt + self.sigma * dt.sqrt() * z).exp();
        self.v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumState {
    pub m: f64,
    pub last_price: f64,
}

impl MomentumState {
    pub fn new(price: f64) -> Self {
        Self { m: 0.0, last_price: price }
    }
}

pub fn fundamental_demand(params: &ChiarellaParams, v: f64, p: f64) -> f64 {
    params.kappa * (v - p)
}

pub fn update_momentum(state: MomentumState, params: &ChiarellaParams, p: f64) -> MomentumState {
    MomentumState {
        m: (1.0 - params.alpha) * state.m + params.alpha * (p - state.last_price),
        last_price: p,
    }
}

pub fn momentum_demand(params: &ChiarellaParams, m: f64) -> f64 {
    params.beta * (params.gamma * m).tanh()
}

pub fn noise_demand<R: Rng + ?Sized>(params: &ChiarellaParams, rng: &mut R) -> f64 {
    if params.sigma_noise == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    params.sigma_noise * z
}

pub fn overall_demand(d_f: f64, d_m: f64, d_n: f64, delta_t: f64) -> f64 {
    d_f * delta_t + d_m + d_n * delta_t.sqrt()
}

/// Buy on positive demand, sell on negative; exact zero is a fair coin.
pub fn next_direction<R: Rng + ?Sized>(demand: f64, rng: &mut R) -> Direction {
    if demand > 0.0 {
        Direction::Buy
    } else if demand < 0.0 {
        Direction::Sell
    } else if rng.random::<bool>() {
        Direction::Buy
    } else {
        Direction::Sell
    }
}

/// Momentum series of a price history with `M_0 = 0`.
pub fn momentum_series(prices: &[f64], alpha: f64) -> Vec<f64> {
    let params = ChiarellaParams { alpha, ..ChiarellaParams::default() };
    let Some(&first) = prices.first() else { return Vec::new() };
    let mut state = MomentumState::new(first);
    prices[1..]
        .iter()
        .map(|&p| {
            state = update_momentum(state, &params, p);
            state.m
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub fundamental: f64,
    pub momentum: f64,
    pub noise: f64,
    pub total: f64,
}

/// Demand state carried by one simulation path.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiarellaAgent {
    pub params: ChiarellaParams,
    pub fundamental: FundamentalPath,
    pub momentum: MomentumState,
}

impl ChiarellaAgent {
    pub fn new(params: ChiarellaParams, fundamental: FundamentalPath, price: f64) -> Result<Self, ChiarellaError> {
        params.validate()?;
        Ok(Self {
            params,
            fundamental,
            momentum: MomentumState::new(price),
        })
    }

    pub fn demand<R: Rng + ?Sized>(&self, price: f64, rng: &mut R) -> Demand {
        let fundamental = fundamental_demand(&self.params, self.fundamental.v, price);
        let momentum = momentum_demand(&self.params, self.momentum.m);
        let noise = noise_demand(&self.params, rng);
        Demand {
            fundamental,
            momentum,
            noise,
            total: overall_demand(fundamental, momentum, noise, self.params.delta_t),
        }
    }

    pub fn decide<R: Rng + ?Sized>(&self, price: f64, rng: &mut R) -> (Direction, Demand) {
        let d = self.demand(price, rng);
        (next_direction(d.total, rng), d)
    }

    /// Advances momentum with the post-event price and the fundamental by one
    /// event-time increment.
    pub fn observe<R: Rng + ?Sized>(&mut self, price: f64, rng: &mut R) {
        self.momentum = update_momentum(self.momentum, &self.params, price);
        self.fundamental.gbm_step(self.params.delta_t, rng);
    }
}
