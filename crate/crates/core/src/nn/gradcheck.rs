//! Central finite-difference checks of the analytic gradients.
//!
//! Layer checks use the scalar objective `sum(R * out)` for a fixed random
//! `R`, whose output gradient is exactly `R`.

use ndarray::Array2;
use rand::Rng;

use super::layers::{Attention, BiNorm, Bilinear, Tabl};
use super::model::{Sample, TablModel};
use super::{Matrix, NnError, Parametric};
use crate::seed::{rng_for, SimRng};

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// Tensor holding the worst entry.
    pub worst: String,
    pub checked: usize,
}

impl GradReport {
    fn merge(mut self, other: GradReport) -> GradReport {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares every entry of `analytic` against central differences of `loss`.
pub fn check_params<M, F>(model: &M, analytic: &M, eps: f64, loss: F) -> GradReport
where
    M: Parametric + Clone,
    F: Fn(&M) -> f64,
{
    let names: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Matrix> = analytic.tensors().into_iter().map(|(_, t)| t.clone()).collect();
    let mut report = GradReport { max_rel_error: 0.0, worst: String::new(), checked: 0 };
    for (ti, (name, g)) in names.iter().zip(&grads).enumerate() {
        for (idx, &a) in g.indexed_iter() {
            let mut up = model.clone();
            up.tensors_mut()[ti][idx] += eps;
            let mut down = model.clone();
            down.tensors_mut()[ti][idx] -= eps;
            let numeric = (loss(&up) - loss(&down)) / (2.0 * eps);
            let err = relative_error(a, numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = format!("{name}{idx:?}");
            }
            report.checked += 1;
        }
    }
    report
}

/// Compares an input gradient against central differences of `loss`.
pub fn check_input<F: Fn(&Matrix) -> f64>(x: &Matrix, analytic: &Matrix, eps: f64, loss: F) -> GradReport {
    let mut report = GradReport { max_rel_error: 0.0, worst: String::new(), checked: 0 };
    for (idx, &a) in analytic.indexed_iter() {
        let mut up = x.clone();
        up[idx] += eps;
        let mut down = x.clone();
        down[idx] -= eps;
        let err = relative_error(a, (loss(&up) - loss(&down)) / (2.0 * eps));
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = format!("input{idx:?}");
        }
        report.checked += 1;
    }
    report
}

fn random(dim: (usize, usize), rng: &mut SimRng) -> Matrix {
    Array2::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0))
}

fn dot(a: &Matrix, b: &Matrix) -> f64 {
    (a * b).sum()
}

pub fn check_bilinear(layer: &Bilinear, x: &Matrix, eps: f64, seed: u64) -> Result<GradReport, NnError> {
    let r = random(layer.output_dims(), &mut rng_for(seed, "gradcheck/bilinear"));
    let (_, cache) = layer.forward(x)?;
    let (dx, grads) = layer.backward(&cache, &r);
    let params = check_params(layer, &grads, eps, |l| dot(&l.forward(x).expect("shape").0, &r));
    let input = check_input(x, &dx, eps, |xi| dot(&layer.forward(xi).expect("shape").0, &r));
    Ok(params.merge(input))
}

pub fn check_attention(layer: &Attention, x: &Matrix, eps: f64, seed: u64) -> Result<GradReport, NnError> {
    let r = random(x.dim(), &mut rng_for(seed, "gradcheck/attention"));
    let (_, cache) = layer.forward(x)?;
    let (dx, grads) = layer.backward(&cache, &r);
    let params = check_params(layer, &grads, eps, |l| dot(&l.forward(x).expect("shape").0, &r));
    let input = check_input(x, &dx, eps, |xi| dot(&layer.forward(xi).expect("shape").0, &r));
    Ok(params.merge(input))
}

pub fn check_tabl(layer: &Tabl, x: &Matrix, eps: f64, seed: u64) -> Result<GradReport, NnError> {
    let r = random(layer.output_dims(), &mut rng_for(seed, "gradcheck/tabl"));
    let (_, cache) = layer.forward(x)?;
    let (dx, grads) = layer.backward(&cache, &r);
    let params = check_params(layer, &grads, eps, |l| dot(&l.forward(x).expect("shape").0, &r));
    let input = check_input(x, &dx, eps, |xi| dot(&layer.forward(xi).expect("shape").0, &r));
    Ok(params.merge(input))
}

pub fn check_bin(layer: &BiNorm, x: &Matrix, eps: f64, seed: u64) -> Result<GradReport, NnError> {
    let r = random(x.dim(), &mut rng_for(seed, "gradcheck/bin"));
    let (_, cache) = layer.forward(x)?;
    let (dx, grads) = layer.backward(&cache, &r);
    let params = check_params(layer, &grads, eps, |l| dot(&l.forward(x).expect("shape").0, &r));
    let input = check_input(x, &dx, eps, |xi| dot(&layer.forward(xi).expect("shape").0, &r));
    Ok(params.merge(input))
}

/// Full-model check on the training loss of one sample, dropout off.
pub fn check_model(model: &TablModel, sample: &Sample, eps: f64) -> Result<GradReport, NnError> {
    let (_, grads) = model.loss_and_grad::<SimRng>(sample, None)?;
    Ok(check_params(model, &grads, eps, |m| m.eval_loss(sample).expect("valid sample")))
}
