//! The three-head next-order model.

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BiNorm, BiNormCache, Bilinear, BilinearCache, Tabl, TablCache, TimeProjection};
use super::loss::{focal_loss_logits, weighted_binary_grad, weighted_binary_loss};
use super::{softmax, Activation, Matrix, NnError, Parametric};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Limit (0) vs market (1).
    OrderType,
    /// Size class and price-distance class of a limit order.
    Limit,
    /// Size class of a market order.
    Market,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub head: Head,
    pub book_features: usize,
    pub msg_features: usize,
    pub window: usize,
    pub hidden_features: usize,
    pub hidden_time: usize,
    pub tabl_features: usize,
    pub out_time: usize,
    pub dropout: f64,
    pub focal_gamma: f64,
    pub pos_weight: f64,
    pub size_classes: usize,
    pub distance_classes: usize,
    pub activation: Activation,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn new(head: Head) -> Self {
        Self {
            head,
            book_features: crate::features::BOOK_FEATURES,
            msg_features: crate::features::MSG_FEATURES,
            window: 500,
            hidden_features: 32,
            hidden_time: 16,
            tabl_features: 32,
            out_time: 4,
            dropout: 0.3,
            focal_gamma: 2.0,
            pos_weight: 2.0,
            size_classes: 20,
            distance_classes: 40,
            activation: Activation::Relu,
            init_seed: 0,
        }
    }

    /// Logit group sizes emitted by this head.
    pub fn output_groups(&self) -> Vec<usize> {
        match self.head {
            Head::OrderType => vec![2],
            Head::Limit => vec![self.size_classes, self.distance_classes],
            Head::Market => vec![self.size_classes],
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let dims = [
            self.book_features,
            self.msg_features,
            self.window,
            self.hidden_features,
            self.hidden_time,
            self.tabl_features,
            self.out_time,
            self.size_classes,
            self.distance_classes,
        ];
        if dims.contains(&0) {
            return Err(NnError::Config("all dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::Config("dropout must lie in [0, 1)".into()));
        }
        if self.focal_gamma < 0.0 || self.pos_weight <= 0.0 {
            return Err(NnError::Config("focal gamma must be >= 0 and pos weight > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Binary(u8),
    Class(usize),
    Dual(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// book_features x window
    pub book: Matrix,
    /// msg_features x window
    pub msg: Matrix,
    pub target: Target,
}

/// Random-access sample source for training.
pub trait SampleSet: Sync {
    fn len(&self) -> usize;
    fn sample(&self, i: usize) -> Sample;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSet for Vec<Sample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn sample(&self, i: usize) -> Sample {
        self[i].clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablModel {
    pub config: ModelConfig,
    pub bin: BiNorm,
    pub book_bilinear: Bilinear,
    pub book_tabl: Tabl,
    pub msg_projection: TimeProjection,
    pub mix_tabl: Tabl,
    pub heads: Vec<Tabl>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    bin: BiNormCache,
    bilinear: BilinearCache,
    mask1: Option<Matrix>,
    book_tabl: TablCache,
    mask2: Option<Matrix>,
    msg: Matrix,
    mix: TablCache,
    mask3: Option<Matrix>,
    heads: Vec<TablCache>,
}

fn dropout_mask<R: Rng + ?Sized>(dim: (usize, usize), rate: f64, rng: &mut R) -> Matrix {
    let keep = 1.0 - rate;
    Array2::from_shape_fn(dim, |_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
}

fn apply_mask(x: Matrix, mask: &Option<Matrix>) -> Matrix {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

impl TablModel {
    pub fn new(config: ModelConfig) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = rng_for(config.init_seed, "nn/init");
        let act = config.activation;
        let (h, t) = (config.hidden_features, config.hidden_time);
        let heads = config
            .output_groups()
            .into_iter()
            .map(|c| Tabl::new((config.tabl_features, config.out_time), (c, 1), Activation::Identity, &mut rng))
            .collect();
        Ok(Self {
            bin: BiNorm::new(config.book_features, config.window),
            book_bilinear: Bilinear::new((config.book_features, config.window), (h, t), act, &mut rng),
            book_tabl: Tabl::new((h, t), (h, t), act, &mut rng),
            msg_projection: TimeProjection::new(config.window, t, &mut rng),
            mix_tabl: Tabl::new((h + config.msg_features, t), (config.tabl_features, config.out_time), act, &mut rng),
            heads,
            config,
        })
    }

    fn forward_impl<R: Rng + ?Sized>(&self, book: &Matrix, msg: &Matrix, mut dropout: Option<&mut R>) -> Result<(Vec<Vec<f64>>, ForwardCache), NnError> {
        let c = &self.config;
        super::expect_shape("model/book", book, (c.book_features, c.window))?;
        super::expect_shape("model/msg", msg, (c.msg_features, c.window))?;
        let rate = c.dropout;
        let mut mask = |dim: (usize, usize)| -> Option<Matrix> {
            match dropout.as_deref_mut() {
                Some(rng) if rate > 0.0 => Some(dropout_mask(dim, rate, rng)),
                _ => None,
            }
        };
        let (normed, bin) = self.bin.forward(book)?;
        let (h1, bilinear) = self.book_bilinear.forward(&normed)?;
        let mask1 = mask(h1.dim());
        let h1 = apply_mask(h1, &mask1);
        let (h2, book_tabl) = self.book_tabl.forward(&h1)?;
        let mask2 = mask(h2.dim());
        let h2 = apply_mask(h2, &mask2);
        let projected = self.msg_projection.forward(msg)?;
        let joined = concatenate(Axis(0), &[h2.view(), projected.view()]).expect("time axes agree");
        let (h3, mix) = self.mix_tabl.forward(&joined)?;
        let mask3 = mask(h3.dim());
        let h3 = apply_mask(h3, &mask3);
        let mut logits = Vec::with_capacity(self.heads.len());
        let mut heads = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let (y, cache) = head.forward(&h3)?;
            logits.push(y.column(0).to_vec());
            heads.push(cache);
        }
        Ok((
            logits,
            ForwardCache {
                bin,
                bilinear,
                mask1,
                book_tabl,
                mask2,
                msg: msg.clone(),
                mix,
                mask3,
                heads,
            },
        ))
    }

    /// Eval-mode logits, one vector per output group.
    pub fn forward(&self, book: &Matrix, msg: &Matrix) -> Result<Vec<Vec<f64>>, NnError> {
        Ok(self.forward_impl::<rand_chacha::ChaCha8Rng>(book, msg, None)?.0)
    }

    pub fn forward_train<R: Rng + ?Sized>(&self, book: &Matrix, msg: &Matrix, rng: &mut R) -> Result<(Vec<Vec<f64>>, ForwardCache), NnError> {
        self.forward_impl(book, msg, Some(rng))
    }

    pub fn predict_proba(&self, book: &Matrix, msg: &Matrix) -> Result<Vec<Vec<f64>>, NnError> {
        Ok(self.forward(book, msg)?.iter().map(|l| softmax(l)).collect())
    }

    /// Loss of one sample given its logits, and the logit gradients.
    pub fn head_loss(&self, logits: &[Vec<f64>], target: Target) -> Result<(f64, Vec<Vec<f64>>), NnError> {
        let c = &self.config;
        match (c.head, target) {
            (Head::OrderType, Target::Binary(y)) => {
                let z = logits[0][1] - logits[0][0];
                let g = weighted_binary_grad(z, y, c.pos_weight);
                Ok((weighted_binary_loss(z, y, c.pos_weight), vec![vec![-g, g]]))
            }
            (Head::Market, Target::Class(k)) => {
                let (l, g) = focal_loss_logits(&logits[0], k, c.focal_gamma);
                Ok((l, vec![g]))
            }
            (Head::Limit, Target::Dual(size, dist)) => {
                let (l1, g1) = focal_loss_logits(&logits[0], size, c.focal_gamma);
                let (l2, g2) = focal_loss_logits(&logits[1], dist, c.focal_gamma);
                Ok((l1 + l2, vec![g1, g2]))
            }
            (head, _) => Err(NnError::TargetMismatch(head)),
        }
    }

    pub fn backward(&self, cache: &ForwardCache, dlogits: &[Vec<f64>]) -> TablModel {
        let mut dh3: Option<Matrix> = None;
        let mut head_grads = Vec::with_capacity(self.heads.len());
        for ((head, hc), g) in self.heads.iter().zip(&cache.heads).zip(dlogits) {
            let dy = Array2::from_shape_vec((g.len(), 1), g.clone()).expect("column");
            let (dx, grads) = head.backward(hc, &dy);
            dh3 = Some(match dh3 {
                Some(acc) => acc + dx,
                None => dx,
            });
            head_grads.push(grads);
        }
        let dh3 = apply_mask(dh3.expect("at least one head"), &cache.mask3);
        let (djoined, mix_grads) = self.mix_tabl.backward(&cache.mix, &dh3);
        let h = self.config.hidden_features;
        let dh2 = apply_mask(djoined.slice(s![..h, ..]).to_owned(), &cache.mask2);
        let dprojected = djoined.slice(s![h.., ..]).to_owned();
        let (_, proj_grads) = self.msg_projection.backward(&cache.msg, &dprojected);
        let (dh1, tabl_grads) = self.book_tabl.backward(&cache.book_tabl, &dh2);
        let dh1 = apply_mask(dh1, &cache.mask1);
        let (dnormed, bl_grads) = self.book_bilinear.backward(&cache.bilinear, &dh1);
        let (_, bin_grads) = self.bin.backward(&cache.bin, &dnormed);
        TablModel {
            config: self.config.clone(),
            bin: bin_grads,
            book_bilinear: bl_grads,
            book_tabl: tabl_grads,
            msg_projection: proj_grads,
            mix_tabl: mix_grads,
            heads: head_grads,
        }
    }

    /// Loss and parameter gradients for one sample. `rng` enables dropout.
    pub fn loss_and_grad<R: Rng + ?Sized>(&self, sample: &Sample, rng: Option<&mut R>) -> Result<(f64, TablModel), NnError> {
        let (logits, cache) = self.forward_impl(&sample.book, &sample.msg, rng)?;
        let (loss, dlogits) = self.head_loss(&logits, sample.target)?;
        Ok((loss, self.backward(&cache, &dlogits)))
    }

    pub fn eval_loss(&self, sample: &Sample) -> Result<f64, NnError> {
        let logits = self.forward(&sample.book, &sample.msg)?;
        Ok(self.head_loss(&logits, sample.target)?.0)
    }

    /// Whether the arg-max prediction matches every component of the target.
    pub fn is_correct(&self, sample: &Sample) -> Result<bool, NnError> {
        let logits = self.forward(&sample.book, &sample.msg)?;
        let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
        Ok(match sample.target {
            Target::Binary(y) => argmax(&logits[0]) == usize::from(y),
            Target::Class(k) => argmax(&logits[0]) == k,
            Target::Dual(a, b) => argmax(&logits[0]) == a && argmax(&logits[1]) == b,
        })
    }

    pub fn clamp_constrained(&mut self) {
        self.book_tabl.attention.clamp_lambda();
        self.mix_tabl.attention.clamp_lambda();
        for h in &mut self.heads {
            h.attention.clamp_lambda();
        }
    }
}

impl Parametric for TablModel {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut groups: Vec<(String, Vec<(String, &Matrix)>)> = vec![
            ("bin".into(), self.bin.tensors()),
            ("book_bilinear".into(), self.book_bilinear.tensors()),
            ("book_tabl".into(), self.book_tabl.tensors()),
            ("msg_projection".into(), self.msg_projection.tensors()),
            ("mix_tabl".into(), self.mix_tabl.tensors()),
        ];
        for (i, h) in self.heads.iter().enumerate() {
            groups.push((format!("head{i}"), h.tensors()));
        }
        groups
            .into_iter()
            .flat_map(|(prefix, ts)| ts.into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t)))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.bin.tensors_mut();
        out.extend(self.book_bilinear.tensors_mut());
        out.extend(self.book_tabl.tensors_mut());
        out.extend(self.msg_projection.tensors_mut());
        out.extend(self.mix_tabl.tensors_mut());
        for h in &mut self.heads {
            out.extend(h.tensors_mut());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny(head: Head) -> ModelConfig {
        ModelConfig {
            book_features: 4,
            msg_features: 3,
            window: 6,
            hidden_features: 3,
            hidden_time: 3,
            tabl_features: 3,
            out_time: 2,
            size_classes: 4,
            distance_classes: 5,
            ..ModelConfig::new(head)
        }
    }

    fn inputs(cfg: &ModelConfig) -> (Matrix, Matrix) {
        let mut rng = rng_for(5, "in");
        (
            Array2::from_shape_fn((cfg.book_features, cfg.window), |_| rng.random_range(0.0..1.0)),
            Array2::from_shape_fn((cfg.msg_features, cfg.window), |_| rng.random_range(0.0..1.0)),
        )
    }

    #[test]
    fn head_shapes() {
        let m = TablModel::new(ModelConfig::new(Head::OrderType)).unwrap();
        let book = Array2::zeros((40, 500));
        let msg = Array2::zeros((crate::features::MSG_FEATURES, 500));
        assert_eq!(m.forward(&book, &msg).unwrap()[0].len(), 2);
        let m = TablModel::new(ModelConfig::new(Head::Limit)).unwrap();
        let sizes: Vec<usize> = m.forward(&book, &msg).unwrap().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![20, 40]);
        let m = TablModel::new(ModelConfig::new(Head::Market)).unwrap();
        assert_eq!(m.forward(&book, &msg).unwrap()[0].len(), 20);
    }

    #[test]
    fn eval_is_deterministic_and_probs_normalised() {
        let cfg = tiny(Head::Limit);
        let m = TablModel::new(cfg.clone()).unwrap();
        let (b, g) = inputs(&cfg);
        let a = m.forward(&b, &g).unwrap();
        assert_eq!(a, m.forward(&b, &g).unwrap());
        for p in m.predict_proba(&b, &g).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn mismatches_are_errors() {
        let cfg = tiny(Head::Market);
        let m = TablModel::new(cfg.clone()).unwrap();
        let (b, g) = inputs(&cfg);
        assert!(matches!(m.forward(&g, &b), Err(NnError::Shape { .. })));
        let s = Sample { book: b, msg: g, target: Target::Binary(1) };
        assert!(matches!(m.eval_loss(&s), Err(NnError::TargetMismatch(Head::Market))));
        assert!(TablModel::new(ModelConfig { dropout: 1.0, ..cfg }).is_err());
    }
}
