//! Layer primitives with explicit forward caches and backward passes.

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{expect_shape, glorot, softmax_rows, Activation, Matrix, NnError, Parametric};

/// `Y = act(W1 X W2 + B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bilinear {
    pub w1: Matrix,
    pub w2: Matrix,
    pub b: Matrix,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct BilinearCache {
    x: Matrix,
    left: Matrix,
    y: Matrix,
}

impl Bilinear {
    pub fn new<R: Rng + ?Sized>(dims: (usize, usize), out: (usize, usize), activation: Activation, rng: &mut R) -> Self {
        let (d, t) = dims;
        let (d_out, t_out) = out;
        Self {
            w1: glorot(d_out, d, d, d_out, rng),
            w2: glorot(t, t_out, t, t_out, rng),
            b: Array2::zeros((d_out, t_out)),
            activation,
        }
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.w1.ncols(), self.w2.nrows())
    }

    pub fn output_dims(&self) -> (usize, usize) {
        self.b.dim()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, BilinearCache), NnError> {
        expect_shape("bilinear", x, self.input_dims())?;
        let left = self.w1.dot(x);
        let mut y = left.dot(&self.w2) + &self.b;
        let act = self.activation;
        y.mapv_inplace(|v| act.apply(v));
        Ok((
            y.clone(),
            BilinearCache {
                x: x.clone(),
                left,
                y,
            },
        ))
    }

    /// Returns the input gradient and the parameter gradients.
    pub fn backward(&self, cache: &BilinearCache, dy: &Matrix) -> (Matrix, Bilinear) {
        let act = self.activation;
        let dz = ndarray::Zip::from(dy).and(&cache.y).map_collect(|&g, &y| g * act.derivative_from_output(y));
        let dw2 = cache.left.t().dot(&dz);
        let dleft = dz.dot(&self.w2.t());
        let dw1 = dleft.dot(&cache.x.t());
        let dx = self.w1.t().dot(&dleft);
        (
            dx,
            Bilinear {
                w1: dw1,
                w2: dw2,
                b: dz,
                activation: act,
            },
        )
    }
}

impl Parametric for Bilinear {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        vec![("w1".into(), &self.w1), ("w2".into(), &self.w2), ("b".into(), &self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w1, &mut self.w2, &mut self.b]
    }
}

/// Temporal attention: `E = X W`, `A = softmax over time of each row of E`,
/// output `lambda (X . A) + (1 - lambda) X` with `lambda` clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    pub w: Matrix,
    /// 1x1 mixing scalar.
    pub lambda: Matrix,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Matrix,
    attn: Matrix,
}

impl AttentionCache {
    pub fn weights(&self) -> &Matrix {
        &self.attn
    }
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(t: usize, rng: &mut R) -> Self {
        Self {
            w: glorot(t, t, t, t, rng),
            lambda: Array2::from_elem((1, 1), 0.5),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda[[0, 0]].clamp(0.0, 1.0)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, AttentionCache), NnError> {
        let t = self.w.nrows();
        expect_shape("attention", x, (x.nrows(), t))?;
        let attn = softmax_rows(&x.dot(&self.w));
        let lam = self.lambda();
        let out = ndarray::Zip::from(x)
            .and(&attn)
            .map_collect(|&xv, &a| lam * xv * a + (1.0 - lam) * xv);
        Ok((out, AttentionCache { x: x.clone(), attn }))
    }

    pub fn backward(&self, cache: &AttentionCache, dout: &Matrix) -> (Matrix, Attention) {
        let lam = self.lambda();
        let raw = self.lambda[[0, 0]];
        let x = &cache.x;
        let a = &cache.attn;
        let dlam = if (0.0..=1.0).contains(&raw) {
            ndarray::Zip::from(dout).and(x).and(a).fold(0.0, |acc, &g, &xv, &av| acc + g * (xv * av - xv))
        } else {
            0.0
        };
        let mut dx = ndarray::Zip::from(dout).and(a).map_collect(|&g, &av| g * ((1.0 - lam) + lam * av));
        let da = ndarray::Zip::from(dout).and(x).map_collect(|&g, &xv| lam * g * xv);
        let mut de = Array2::zeros(a.dim());
        for ((mut de_row, da_row), a_row) in de.rows_mut().into_iter().zip(da.rows()).zip(a.rows()) {
            let dot: f64 = da_row.iter().zip(a_row.iter()).map(|(g, p)| g * p).sum();
            for ((d, &g), &p) in de_row.iter_mut().zip(da_row.iter()).zip(a_row.iter()) {
                *d = p * (g - dot);
            }
        }
        let dw = x.t().dot(&de);
        dx += &de.dot(&self.w.t());
        (
            dx,
            Attention {
                w: dw,
                lambda: Array2::from_elem((1, 1), dlam),
            },
        )
    }

    /// Restores `lambda` to `[0, 1]` after an optimiser update.
    pub fn clamp_lambda(&mut self) {
        let v = self.lambda[[0, 0]].clamp(0.0, 1.0);
        self.lambda[[0, 0]] = v;
    }
}

impl Parametric for Attention {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        vec![("w_att".into(), &self.w), ("lambda".into(), &self.lambda)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w, &mut self.lambda]
    }
}

/// Temporal-attention bilinear layer: `Y = act(Att(W1 X) W2 + B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabl {
    pub w1: Matrix,
    pub attention: Attention,
    pub w2: Matrix,
    pub b: Matrix,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct TablCache {
    x: Matrix,
    attn: AttentionCache,
    attended: Matrix,
    y: Matrix,
}

impl Tabl {
    pub fn new<R: Rng + ?Sized>(dims: (usize, usize), out: (usize, usize), activation: Activation, rng: &mut R) -> Self {
        let (d, t) = dims;
        let (d_out, t_out) = out;
        let w1 = glorot(d_out, d, d, d_out, rng);
        let attention = Attention::new(t, rng);
        Self {
            w1,
            attention,
            w2: glorot(t, t_out, t, t_out, rng),
            b: Array2::zeros((d_out, t_out)),
            activation,
        }
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.w1.ncols(), self.w2.nrows())
    }

    pub fn output_dims(&self) -> (usize, usize) {
        self.b.dim()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, TablCache), NnError> {
        expect_shape("tabl", x, self.input_dims())?;
        let left = self.w1.dot(x);
        let (attended, attn) = self.attention.forward(&left)?;
        let mut y = attended.dot(&self.w2) + &self.b;
        let act = self.activation;
        y.mapv_inplace(|v| act.apply(v));
        Ok((
            y.clone(),
            TablCache {
                x: x.clone(),
                attn,
                attended,
                y,
            },
        ))
    }

    pub fn backward(&self, cache: &TablCache, dy: &Matrix) -> (Matrix, Tabl) {
        let act = self.activation;
        let dz = ndarray::Zip::from(dy).and(&cache.y).map_collect(|&g, &y| g * act.derivative_from_output(y));
        let dw2 = cache.attended.t().dot(&dz);
        let dattended = dz.dot(&self.w2.t());
        let (dleft, dattn) = self.attention.backward(&cache.attn, &dattended);
        let dw1 = dleft.dot(&cache.x.t());
        let dx = self.w1.t().dot(&dleft);
        (
            dx,
            Tabl {
                w1: dw1,
                attention: dattn,
                w2: dw2,
                b: dz,
                activation: act,
            },
        )
    }
}

impl Parametric for Tabl {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut v: Vec<(String, &Matrix)> = vec![("w1".into(), &self.w1)];
        v.extend(self.attention.tensors());
        v.push(("w2".into(), &self.w2));
        v.push(("b".into(), &self.b));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v: Vec<&mut Matrix> = vec![&mut self.w1];
        v.extend(self.attention.tensors_mut());
        v.push(&mut self.w2);
        v.push(&mut self.b);
        v
    }
}

/// Linear map of the time axis: `Y = X W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeProjection {
    pub w: Matrix,
}

impl TimeProjection {
    pub fn new<R: Rng + ?Sized>(t: usize, t_out: usize, rng: &mut R) -> Self {
        Self { w: glorot(t, t_out, t, t_out, rng) }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix, NnError> {
        expect_shape("time_projection", x, (x.nrows(), self.w.nrows()))?;
        Ok(x.dot(&self.w))
    }

    pub fn backward(&self, x: &Matrix, dy: &Matrix) -> (Matrix, TimeProjection) {
        (dy.dot(&self.w.t()), TimeProjection { w: x.t().dot(dy) })
    }
}

impl Parametric for TimeProjection {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        vec![("w".into(), &self.w)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w]
    }
}

pub const BIN_EPS: f64 = 1e-8;

/// Bilinear normalisation: z-scores along time (per feature row) and along
/// features (per time column), each with its own learned scale and shift,
/// mixed by two learned weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiNorm {
    /// 1 x T
    pub gamma_time: Matrix,
    pub beta_time: Matrix,
    /// D x 1
    pub gamma_feature: Matrix,
    pub beta_feature: Matrix,
    /// 1 x 2: weights of the temporal and feature branches.
    pub mix: Matrix,
}

#[derive(Debug, Clone)]
pub struct BiNormCache {
    /// Temporal z-scores and per-row std (None when T < 2).
    time: Option<(Matrix, Vec<f64>)>,
    /// Feature z-scores and per-column std (None when D < 2).
    feature: Option<(Matrix, Vec<f64>)>,
    x: Matrix,
}

impl BiNormCache {
    /// Pre-scale temporal z-scores.
    pub fn time_normalized(&self) -> &Matrix {
        self.time.as_ref().map(|(z, _)| z).unwrap_or(&self.x)
    }

    pub fn feature_normalized(&self) -> &Matrix {
        self.feature.as_ref().map(|(z, _)| z).unwrap_or(&self.x)
    }
}

fn zscore_rows(x: &Matrix) -> (Matrix, Vec<f64>) {
    let n = x.ncols() as f64;
    let mut z = x.clone();
    let mut stds = Vec::with_capacity(x.nrows());
    for mut row in z.rows_mut() {
        let m = row.sum() / n;
        let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        let s = (var + BIN_EPS).sqrt();
        row.mapv_inplace(|v| (v - m) / s);
        stds.push(s);
    }
    (z, stds)
}

/// Backward of a per-row z-score given the normalised values and stds.
fn zscore_rows_backward(z: &Matrix, stds: &[f64], dz: &Matrix) -> Matrix {
    let n = z.ncols() as f64;
    let mut dx = Array2::zeros(z.dim());
    for (((mut dx_row, z_row), g_row), &s) in dx.rows_mut().into_iter().zip(z.rows()).zip(dz.rows()).zip(stds) {
        let mean_g = g_row.sum() / n;
        let mean_gz = g_row.iter().zip(z_row.iter()).map(|(g, v)| g * v).sum::<f64>() / n;
        for ((d, &g), &v) in dx_row.iter_mut().zip(g_row.iter()).zip(z_row.iter()) {
            *d = (g - mean_g - v * mean_gz) / s;
        }
    }
    dx
}

impl BiNorm {
    pub fn new(d: usize, t: usize) -> Self {
        Self {
            gamma_time: Array2::ones((1, t)),
            beta_time: Array2::zeros((1, t)),
            gamma_feature: Array2::ones((d, 1)),
            beta_feature: Array2::zeros((d, 1)),
            mix: Array2::from_elem((1, 2), 0.5),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.gamma_feature.nrows(), self.gamma_time.ncols())
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, BiNormCache), NnError> {
        expect_shape("bin", x, self.dims())?;
        let (d, t) = x.dim();
        let time = (t >= 2).then(|| zscore_rows(x));
        let feature = (d >= 2).then(|| {
            let (zt, s) = zscore_rows(&x.t().to_owned());
            (zt.t().to_owned(), s)
        });
        let zt = time.as_ref().map(|(z, _)| z).unwrap_or(x);
        let zf = feature.as_ref().map(|(z, _)| z).unwrap_or(x);
        let yt = zt * &self.gamma_time + &self.beta_time;
        let yf = zf * &self.gamma_feature + &self.beta_feature;
        let out = yt * self.mix[[0, 0]] + yf * self.mix[[0, 1]];
        Ok((out, BiNormCache { time, feature, x: x.clone() }))
    }

    pub fn backward(&self, cache: &BiNormCache, dout: &Matrix) -> (Matrix, BiNorm) {
        let zt = cache.time_normalized();
        let zf = cache.feature_normalized();
        let (mt, mf) = (self.mix[[0, 0]], self.mix[[0, 1]]);
        let yt = zt * &self.gamma_time + &self.beta_time;
        let yf = zf * &self.gamma_feature + &self.beta_feature;
        let dmix = Array2::from_shape_vec((1, 2), vec![(dout * &yt).sum(), (dout * &yf).sum()]).expect("1x2");
        let dyt = dout * mt;
        let dyf = dout * mf;
        let dgamma_t = (&dyt * zt).sum_axis(Axis(0)).insert_axis(Axis(0));
        let dbeta_t = dyt.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dgamma_f = (&dyf * zf).sum_axis(Axis(1)).insert_axis(Axis(1));
        let dbeta_f = dyf.sum_axis(Axis(1)).insert_axis(Axis(1));
        let dzt = &dyt * &self.gamma_time;
        let dzf = &dyf * &self.gamma_feature;
        let mut dx = match &cache.time {
            Some((z, s)) => zscore_rows_backward(z, s, &dzt),
            None => dzt,
        };
        dx += &match &cache.feature {
            Some((z, s)) => zscore_rows_backward(&z.t().to_owned(), s, &dzf.t().to_owned()).t().to_owned(),
            None => dzf,
        };
        (
            dx,
            BiNorm {
                gamma_time: dgamma_t,
                beta_time: dbeta_t,
                gamma_feature: dgamma_f,
                beta_feature: dbeta_f,
                mix: dmix,
            },
        )
    }
}

impl Parametric for BiNorm {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("gamma_time".into(), &self.gamma_time),
            ("beta_time".into(), &self.beta_time),
            ("gamma_feature".into(), &self.gamma_feature),
            ("beta_feature".into(), &self.beta_feature),
            ("mix".into(), &self.mix),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.gamma_time,
            &mut self.beta_time,
            &mut self.gamma_feature,
            &mut self.beta_feature,
            &mut self.mix,
        ]
    }
}
