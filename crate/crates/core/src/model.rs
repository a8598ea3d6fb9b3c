//! A small fully connected classifier with analytic gradients.
//!
//! Architecture: optional block average-pool to a `g x g` grid per channel,
//! one ReLU hidden layer, softmax output. Parameters are stored flat as
//! `[W1 (H x D), b1 (H), W2 (C x H), b2 (C)]`, row-major.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::oracle::{cross_entropy, PredictionOracle};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Average-pool each channel down to a `g x g` grid before the first layer.
    pub pool_grid: Option<usize>,
    pub hidden: usize,
    pub classes: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.classes < 2 {
            return Err(Error::invalid("model needs hidden >= 1 and classes >= 2"));
        }
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::invalid("model input dims must be positive"));
        }
        if let Some(g) = self.pool_grid {
            if g == 0 || self.height % g != 0 || self.width % g != 0 {
                return Err(Error::invalid(format!(
                    "pool grid {g} must divide {}x{}",
                    self.height, self.width
                )));
            }
        }
        Ok(())
    }

    pub fn input_features(&self) -> usize {
        match self.pool_grid {
            Some(g) => g * g * self.channels,
            None => self.height * self.width * self.channels,
        }
    }

    pub fn num_params(&self) -> usize {
        let (d, h, c) = (self.input_features(), self.hidden, self.classes);
        h * d + h + c * h + c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    spec: ModelSpec,
    params: Vec<f64>,
}

/// Per-image intermediate values kept for the backward pass.
struct Activations {
    features: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `p ln(p / m)` with the `0 ln 0 = 0` convention.
fn kl_term(p: f64, m: f64) -> f64 {
    if p > 0.0 {
        p * (p / m).ln()
    } else {
        0.0
    }
}

/// Jensen-Shannon divergence in nats: `KL(p||m) / 2 + KL(q||m) / 2`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let m = 0.5 * (a + b);
            0.5 * kl_term(a, m) + 0.5 * kl_term(b, m)
        })
        .sum())
}

/// Gradient of `JS(p, q)` with respect to the logits that produced `p`.
fn js_logit_grad(p: &[f64], q: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| if a > 0.0 { 0.5 * (2.0 * a / (a + b)).ln() } else { 0.0 })
        .collect();
    let mean: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
    p.iter().zip(&g).map(|(a, b)| a * (b - mean)).collect()
}

impl ToyModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (d, h, c) = (spec.input_features(), spec.hidden, spec.classes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(spec.num_params());
        let a1 = (6.0 / (d + h) as f64).sqrt();
        params.extend((0..h * d).map(|_| rng.random_range(-a1..a1)));
        params.extend(std::iter::repeat_n(0.0, h));
        let a2 = (6.0 / (h + c) as f64).sqrt();
        params.extend((0..c * h).map(|_| rng.random_range(-a2..a2)));
        params.extend(std::iter::repeat_n(0.0, c));
        Ok(Self { spec, params })
    }

    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let params = vec![0.0; spec.num_params()];
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: ModelSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.num_params() {
            return Err(Error::shape(format!(
                "model needs {} parameters, got {}",
                spec.num_params(),
                params.len()
            )));
        }
        crate::image::check_finite(&params)?;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let (d, h, c) = (self.spec.input_features(), self.spec.hidden, self.spec.classes);
        let w1 = 0;
        let b1 = h * d;
        let w2 = b1 + h;
        let b2 = w2 + c * h;
        debug_assert_eq!(b2 + c, self.params.len());
        (w1, b1, w2, b2)
    }

    fn check_input(&self, img: &Image) -> Result<()> {
        let s = &self.spec;
        if img.dims() != (s.height, s.width, s.channels) {
            return Err(Error::shape(format!(
                "model expects {}x{}x{}, got {:?}",
                s.height,
                s.width,
                s.channels,
                img.dims()
            )));
        }
        Ok(())
    }

    fn features(&self, img: &Image) -> Vec<f64> {
        let s = &self.spec;
        match s.pool_grid {
            None => img.data().to_vec(),
            Some(g) => {
                let (bh, bw) = (s.height / g, s.width / g);
                let norm = 1.0 / (bh * bw) as f64;
                let mut out = vec![0.0; g * g * s.channels];
                for c in 0..s.channels {
                    let plane = img.channel(c);
                    for y in 0..s.height {
                        let row = &plane[y * s.width..(y + 1) * s.width];
                        let base = c * g * g + (y / bh) * g;
                        for (x, v) in row.iter().enumerate() {
                            out[base + x / bw] += v;
                        }
                    }
                }
                out.iter_mut().for_each(|v| *v *= norm);
                out
            }
        }
    }

    fn forward_one(&self, img: &Image) -> Activations {
        let (d, h, c) = (self.spec.input_features(), self.spec.hidden, self.spec.classes);
        let (w1, b1, w2, b2) = self.offsets();
        let p = &self.params;
        let features = self.features(img);
        let hidden_pre: Vec<f64> = (0..h)
            .map(|k| {
                let row = &p[w1 + k * d..w1 + (k + 1) * d];
                p[b1 + k] + row.iter().zip(&features).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let hidden: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
        let logits: Vec<f64> = (0..c)
            .map(|k| {
                let row = &p[w2 + k * h..w2 + (k + 1) * h];
                p[b2 + k] + row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Activations {
            features,
            hidden_pre,
            probs: softmax(&logits),
            hidden,
        }
    }

    /// Accumulates the parameter gradient for logit gradient `dlogits`.
    fn backward_one(&self, act: &Activations, dlogits: &[f64], grad: &mut [f64]) {
        let (d, h, c) = (self.spec.input_features(), self.spec.hidden, self.spec.classes);
        let (w1, b1, w2, b2) = self.offsets();
        let p = &self.params;
        let mut dhidden = vec![0.0; h];
        for k in 0..c {
            let g = dlogits[k];
            if g == 0.0 {
                continue;
            }
            grad[b2 + k] += g;
            for j in 0..h {
                grad[w2 + k * h + j] += g * act.hidden[j];
                dhidden[j] += g * p[w2 + k * h + j];
            }
        }
        for j in 0..h {
            if act.hidden_pre[j] <= 0.0 {
                continue;
            }
            let g = dhidden[j];
            grad[b1 + j] += g;
            let row = &mut grad[w1 + j * d..w1 + (j + 1) * d];
            for (r, f) in row.iter_mut().zip(&act.features) {
                *r += g * f;
            }
        }
    }

    /// Class probabilities, one row per image.
    pub fn forward(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>> {
        batch
            .iter()
            .map(|img| {
                self.check_input(img)?;
                Ok(self.forward_one(img).probs)
            })
            .collect()
    }

    /// Mean cross-entropy and its exact gradient.
    pub fn task_loss(&self, batch: &[Image], labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_task_loss(batch, labels, 1.0, &mut grad)?;
        Ok((loss, grad))
    }

    /// Mean `JS(F(a_k), F(b_k))` and its gradient through both branches.
    pub fn consistency_loss(&self, a: &[Image], b: &[Image]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_consistency(a, b, 1.0, &mut grad)?;
        Ok((loss, grad))
    }

    fn accumulate_task_loss(
        &self,
        batch: &[Image],
        labels: &[usize],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        if batch.len() != labels.len() || batch.is_empty() {
            return Err(Error::invalid(format!(
                "{} images for {} labels",
                batch.len(),
                labels.len()
            )));
        }
        let scale = weight / batch.len() as f64;
        let mut loss = 0.0;
        for (img, &y) in batch.iter().zip(labels) {
            self.check_input(img)?;
            if y >= self.spec.classes {
                return Err(Error::invalid(format!("label {y} out of range")));
            }
            let act = self.forward_one(img);
            loss -= act.probs[y].max(f64::MIN_POSITIVE).ln();
            let mut dz: Vec<f64> = act.probs.iter().map(|p| p * scale).collect();
            dz[y] -= scale;
            self.backward_one(&act, &dz, grad);
        }
        Ok(loss / batch.len() as f64)
    }

    fn accumulate_consistency(
        &self,
        a: &[Image],
        b: &[Image],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::invalid(format!(
                "consistency needs equal non-empty batches, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        let scale = weight / a.len() as f64;
        let mut loss = 0.0;
        for (x, y) in a.iter().zip(b) {
            self.check_input(x)?;
            self.check_input(y)?;
            let ax = self.forward_one(x);
            let ay = self.forward_one(y);
            loss += js_divergence(&ax.probs, &ay.probs)?;
            if weight != 0.0 {
                let gx: Vec<f64> = js_logit_grad(&ax.probs, &ay.probs).iter().map(|v| v * scale).collect();
                let gy: Vec<f64> = js_logit_grad(&ay.probs, &ax.probs).iter().map(|v| v * scale).collect();
                self.backward_one(&ax, &gx, grad);
                self.backward_one(&ay, &gy, grad);
            }
        }
        Ok(loss / a.len() as f64)
    }

    /// `L_T(x_s) + mu * JS(F(x_s), F(x_mixed))`, optionally plus `L_T(x_mixed)`.
    ///
    /// Returns `(total, task, consistency, gradient)`.
    pub fn objective(
        &self,
        source: &[Image],
        labels: &[usize],
        mixed: Option<&[Image]>,
        mu: f64,
        supervise_mixed: bool,
    ) -> Result<Objective> {
        let mut grad = vec![0.0; self.params.len()];
        let task = self.accumulate_task_loss(source, labels, 1.0, &mut grad)?;
        let mut consistency = 0.0;
        let mut mixed_task = 0.0;
        if let Some(mixed) = mixed {
            consistency = self.accumulate_consistency(source, mixed, mu, &mut grad)?;
            if supervise_mixed {
                mixed_task = self.accumulate_task_loss(mixed, labels, 1.0, &mut grad)?;
            }
        }
        Ok(Objective {
            total: task + mu * consistency + mixed_task,
            task,
            consistency,
            grad,
        })
    }
}

/// Value and gradient of the training objective on one minibatch.
#[derive(Debug, Clone)]
pub struct Objective {
    pub total: f64,
    pub task: f64,
    pub consistency: f64,
    pub grad: Vec<f64>,
}

impl PredictionOracle for ToyModel {
    fn id(&self) -> String {
        format!(
            "toy-model-{}x{}x{}-h{}-c{}",
            self.spec.height, self.spec.width, self.spec.channels, self.spec.hidden, self.spec.classes
        )
    }

    fn predict(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>> {
        self.forward(batch)
    }

    fn loss(&self, batch: &[Image], labels: &[usize]) -> Result<f64> {
        cross_entropy(&self.forward(batch)?, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ModelSpec {
        ModelSpec {
            height: 4,
            width: 4,
            channels: 1,
            pool_grid: Some(2),
            hidden: 5,
            classes: 3,
        }
    }

    fn img(seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(4, 4, 1, (0..16).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = ToyModel::zeros(spec()).unwrap();
        for row in m.forward(&[img(1), img(2)]).unwrap() {
            assert!(row.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let m = ToyModel::new(spec(), 3).unwrap();
        for row in m.forward(&[img(4), img(5)]).unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dominant_logit_saturates() {
        let mut m = ToyModel::zeros(spec()).unwrap();
        let n = m.params().len();
        m.params_mut()[n - 2] = 50.0;
        let p = m.forward(&[img(1)]).unwrap();
        assert!(p[0][1] > 1.0 - 1e-15);
    }

    #[test]
    fn pooling_averages_blocks() {
        let m = ToyModel::zeros(spec()).unwrap();
        let x = Image::new(4, 4, 1, (0..16).map(|v| v as f64).collect()).unwrap();
        assert_eq!(m.features(&x), vec![2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn js_cases() {
        assert_eq!(js_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((js_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(js_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = ToyModel::zeros(spec()).unwrap();
        assert!(m.forward(&[Image::zeros(4, 5, 1).unwrap()]).is_err());
        assert!(ToyModel::from_params(spec(), vec![0.0; 3]).is_err());
    }
}
