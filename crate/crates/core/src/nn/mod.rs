//! Bilinear temporal-attention networks for next-order prediction.
//!
//! Inputs are `features x time` matrices. A book window goes through
//! bilinear normalisation, a bilinear layer and a temporal-attention
//! bilinear (TABL) layer; the result is concatenated on the feature axis with
//! the temporally projected message window and passed through a TABL stack
//! ending in one classification head per target.
//!
//! Everything runs on `f64` with hand-written backward passes; gradients are
//! checked against central finite differences in [`gradcheck`].

pub mod gradcheck;
pub mod io;
pub mod layers;
pub mod loss;
pub mod model;
pub mod train;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use layers::{Attention, BiNorm, Bilinear, Tabl, TimeProjection};
pub use model::{Head, ModelConfig, Sample, SampleSet, TablModel, Target};
pub use train::{train, EpochRecord, TrainOutcome, TrainSchedule};

/// Row-major `features x time` matrix.
pub type Matrix = Array2<f64>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {layer}: expected {expected:?}, got {got:?}")]
    Shape {
        layer: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("target does not match head {0:?}")]
    TargetMismatch(Head),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("parameter file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parameter manifest: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn expect_shape(layer: &'static str, m: &Matrix, expected: (usize, usize)) -> Result<(), NnError> {
    if m.dim() != expected {
        return Err(NnError::Shape { layer, expected, got: m.dim() });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// Anything holding trainable tensors in a fixed order.
pub trait Parametric {
    fn tensors(&self) -> Vec<(String, &Matrix)>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Copy with every tensor zeroed; used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn add_assign_tensors(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let theirs: Vec<Matrix> = other.tensors().into_iter().map(|(_, t)| t.clone()).collect();
        for (mine, t) in self.tensors_mut().into_iter().zip(theirs) {
            *mine += &t;
        }
    }
}

/// Glorot-uniform matrix with the given fan-in / fan-out.
pub(crate) fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..=limit))
}

/// Row-wise softmax.
pub fn softmax_rows(e: &Matrix) -> Matrix {
    let mut out = e.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}
