//! Synthetic limit-order-book generation.
//!
//! The crate couples four pieces into an event-time simulator:
//!
//! - [`book`]: a price-time priority matching engine with depth bounds
//!   enforced through noise replenishment.
//! - [`chiarella`]: fundamentalist / momentum / noise demand deciding the
//!   direction of every generated order.
//! - [`nn`]: a bilinear temporal-attention network predicting the type,
//!   size and price distance of the next order.
//! - [`deletion`]: depth- and age-conditioned per-event cancellation
//!   probabilities fitted from empirical order lifetimes.
//!
//! [`sim`] orchestrates them, [`ingest`] turns LOBSTER files into training
//! data and empirical tables, [`facts`] measures stylized facts and
//! [`calibration`] grid-searches the agent parameters against them.

pub mod book;
pub mod calibration;
pub mod chiarella;
pub mod deletion;
pub mod facts;
pub mod features;
pub mod ingest;
pub mod nn;
pub mod par;
pub mod seed;
pub mod sim;

pub use book::{BookState, Execution, Order, OrderId, Price, Qty, Side, Snapshot};
pub use chiarella::{ChiarellaParams, Direction};
pub use deletion::DeletionStats;
pub use facts::StylizedSummary;
pub use par::Execution as ExecMode;
