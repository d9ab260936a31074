//! Two-layer encoder / two-layer decoder MLP compressing embeddings to a
//! three-dimensional latent.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embed::{cosine, norm};
use crate::error::{Error, Result};
use crate::num::{Real, Vec3};

pub const LATENT_DIM: usize = 3;
const MAGIC: &[u8; 4] = b"SCAE";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Real> {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weight: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    fn xavier(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = (0..inputs * outputs).map(|_| T::lit(rng.random_range(-a..a))).collect();
        Self { inputs, outputs, weight, bias: vec![T::zero(); outputs] }
    }

    fn forward(&self, x: &[T], out: &mut [T]) {
        for (o, row) in out.iter_mut().zip(self.weight.chunks_exact(self.inputs)) {
            *o = row.iter().zip(x).fold(T::zero(), |acc, (&w, &v)| acc + w * v);
        }
        for (o, &b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }

    /// `Wᵀ g`.
    fn backward_input(&self, g: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        for (row, &gv) in self.weight.chunks_exact(self.inputs).zip(g) {
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * gv;
            }
        }
    }

    fn accumulate(&mut self, g: &[T], x: &[T]) {
        for (row, &gv) in self.weight.chunks_exact_mut(self.inputs).zip(g) {
            for (w, &xv) in row.iter_mut().zip(x) {
                *w += gv * xv;
            }
        }
        for (b, &gv) in self.bias.iter_mut().zip(g) {
            *b += gv;
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }

    fn params(&self) -> impl Iterator<Item = &T> {
        self.weight.iter().chain(self.bias.iter())
    }
}

/// Encoder `D → h → 3` and decoder `3 → h → D`; tanh on hidden layers,
/// linear latent and output.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder<T: Real> {
    pub layers: [Dense<T>; 4],
}

struct Activations<T> {
    h1: Vec<T>,
    z: Vec<T>,
    h2: Vec<T>,
    y: Vec<T>,
}

impl<T: Real> Autoencoder<T> {
    /// All-zero weights; encodes and decodes everything to zero.
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            layers: [
                Dense::zeros(dim, hidden),
                Dense::zeros(hidden, LATENT_DIM),
                Dense::zeros(LATENT_DIM, hidden),
                Dense::zeros(hidden, dim),
            ],
        }
    }

    pub fn random(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            layers: [
                Dense::xavier(dim, hidden, &mut rng),
                Dense::xavier(hidden, LATENT_DIM, &mut rng),
                Dense::xavier(LATENT_DIM, hidden, &mut rng),
                Dense::xavier(hidden, dim, &mut rng),
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].outputs
    }

    fn forward(&self, x: &[T]) -> Activations<T> {
        let [l1, l2, l3, l4] = &self.layers;
        let mut h1 = vec![T::zero(); l1.outputs];
        l1.forward(x, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.tanh());
        let mut z = vec![T::zero(); l2.outputs];
        l2.forward(&h1, &mut z);
        let mut h2 = vec![T::zero(); l3.outputs];
        l3.forward(&z, &mut h2);
        h2.iter_mut().for_each(|v| *v = v.tanh());
        let mut y = vec![T::zero(); l4.outputs];
        l4.forward(&h2, &mut y);
        Activations { h1, z, h2, y }
    }

    pub fn encode(&self, x: &[T]) -> Result<Vec3<T>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("encode expects {} values, got {}", self.dim(), x.len())));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite encoder input"));
        }
        let [l1, l2, ..] = &self.layers;
        let mut h1 = vec![T::zero(); l1.outputs];
        l1.forward(x, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.tanh());
        let mut z = [T::zero(); LATENT_DIM];
        l2.forward(&h1, &mut z);
        Ok(Vec3::new(z[0], z[1], z[2]))
    }

    pub fn decode(&self, z: &Vec3<T>) -> Result<Vec<T>> {
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite latent"));
        }
        let [_, _, l3, l4] = &self.layers;
        let mut h2 = vec![T::zero(); l3.outputs];
        l3.forward(z.as_slice(), &mut h2);
        h2.iter_mut().for_each(|v| *v = v.tanh());
        let mut y = vec![T::zero(); l4.outputs];
        l4.forward(&h2, &mut y);
        Ok(y)
    }

    pub fn reconstruct(&self, x: &[T]) -> Result<Vec<T>> {
        self.decode(&self.encode(x)?)
    }

    /// Loss of one sample and its gradient with respect to every parameter
    /// accumulated into `grad`.
    fn sample_gradient(&self, x: &[T], l1_weight: T, grad: &mut Autoencoder<T>) -> T {
        let a = self.forward(x);
        let (loss, gy) = reconstruction_loss_grad(&a.y, x, l1_weight);
        let [l1, l2, l3, l4] = &self.layers;
        grad.layers[3].accumulate(&gy, &a.h2);
        let mut gh2 = vec![T::zero(); l4.inputs];
        l4.backward_input(&gy, &mut gh2);
        for (g, h) in gh2.iter_mut().zip(&a.h2) {
            *g *= T::one() - *h * *h;
        }
        grad.layers[2].accumulate(&gh2, &a.z);
        let mut gz = vec![T::zero(); l3.inputs];
        l3.backward_input(&gh2, &mut gz);
        grad.layers[1].accumulate(&gz, &a.h1);
        let mut gh1 = vec![T::zero(); l2.inputs];
        l2.backward_input(&gz, &mut gh1);
        for (g, h) in gh1.iter_mut().zip(&a.h1) {
            *g *= T::one() - *h * *h;
        }
        grad.layers[0].accumulate(&gh1, x);
        let _ = l1;
        loss
    }

    fn add_assign(&mut self, other: &Autoencoder<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (p, q) in a.params_mut().zip(b.params()) {
                *p += *q;
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.outputs as u32).to_le_bytes());
            out.extend_from_slice(&(l.inputs as u32).to_le_bytes());
        }
        for l in &self.layers {
            for p in l.params() {
                out.extend_from_slice(&p.as_f64().to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::parse("autoencoder file", m.to_string());
        let mut cursor = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(cursor..cursor + n).ok_or_else(|| bad("truncated"))?;
            cursor += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;
        let version = u32_at(take(4)?);
        if version != FORMAT_VERSION as usize {
            return Err(bad(&format!("unsupported version {version}")));
        }
        if u32_at(take(4)?) != 4 {
            return Err(bad("expected 4 layers"));
        }
        let mut shapes = [(0usize, 0usize); 4];
        for s in shapes.iter_mut() {
            *s = (u32_at(take(4)?), u32_at(take(4)?));
        }
        let (dim, hidden) = (shapes[0].1, shapes[0].0);
        let want = [(hidden, dim), (LATENT_DIM, hidden), (hidden, LATENT_DIM), (dim, hidden)];
        if shapes != want {
            return Err(bad("inconsistent layer shapes"));
        }
        let mut ae = Autoencoder::zeros(dim, hidden);
        for l in ae.layers.iter_mut() {
            for p in l.params_mut() {
                let v = f64::from_le_bytes(take(8)?.try_into().unwrap());
                if !v.is_finite() {
                    return Err(bad("non-finite weight"));
                }
                *p = T::lit(v);
            }
        }
        if cursor != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(ae)
    }
}

/// `β · mean|ŷ − x| + (1 − β) · (1 − cos(ŷ, x))` and its gradient in `ŷ`.
pub fn reconstruction_loss_grad<T: Real>(y: &[T], x: &[T], l1_weight: T) -> (T, Vec<T>) {
    let n = T::from_count(x.len());
    let one = T::one();
    let cos_weight = one - l1_weight;
    let mut loss = T::zero();
    let mut grad: Vec<T> = y
        .iter()
        .zip(x)
        .map(|(&a, &b)| {
            let d = a - b;
            loss += d.abs();
            if d > T::zero() {
                l1_weight / n
            } else if d < T::zero() {
                -l1_weight / n
            } else {
                T::zero()
            }
        })
        .collect();
    loss = l1_weight * loss / n;
    let ny = norm(y);
    let nx = norm(x);
    if ny > T::lit(1e-12) && nx > T::lit(1e-12) {
        let c = cosine(y, x);
        loss += cos_weight * (one - c);
        for ((g, &a), &b) in grad.iter_mut().zip(y).zip(x) {
            *g -= cos_weight * (b / (ny * nx) - c * a / (ny * ny));
        }
    } else {
        loss += cos_weight;
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// `0` means full batch.
    pub batch_size: usize,
    /// Weight β of the L1 term; the cosine term gets `1 − β`.
    pub l1_weight: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self { hidden: 32, learning_rate: 0.05, momentum: 0.9, epochs: 1500, batch_size: 0, l1_weight: 0.5, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct AutoencoderReport {
    /// Mean loss over the whole set after each epoch.
    pub loss_curve: Vec<f64>,
    pub final_loss: f64,
}

pub fn mean_loss<T: Real>(ae: &Autoencoder<T>, vectors: &[Vec<T>], l1_weight: T) -> T {
    let total = vectors
        .par_iter()
        .map(|x| {
            let y = ae.forward(x).y;
            reconstruction_loss_grad(&y, x, l1_weight).0
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(T::zero(), |a, b| a + b);
    total / T::from_count(vectors.len())
}

/// Mini-batch gradient descent with heavy-ball momentum. Batches are drawn
/// in a seeded shuffled order, and per-sample gradients are reduced in a
/// fixed order, so training is deterministic.
pub fn train_autoencoder<T: Real>(
    vectors: &[Vec<T>],
    config: &AutoencoderConfig,
) -> Result<(Autoencoder<T>, AutoencoderReport)> {
    let dim = vectors.first().map(Vec::len).ok_or_else(|| Error::Empty("no training vectors".into()))?;
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::Dimension(format!("vector {i} has {} components, expected {dim}", v.len())));
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid(format!("vector {i} has non-finite values")));
        }
        if norm(v) == T::zero() {
            return Err(Error::invalid(format!("vector {i} is the zero vector")));
        }
    }
    if config.hidden == 0 || !(config.learning_rate > 0.0) || !(0.0..1.0).contains(&config.momentum) {
        return Err(Error::invalid("autoencoder config needs hidden > 0, lr > 0, momentum in [0, 1)"));
    }
    let l1_weight = T::lit(config.l1_weight);
    let mut ae = Autoencoder::random(dim, config.hidden, config.seed);
    let mut velocity = Autoencoder::zeros(dim, config.hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ae00);
    let batch = if config.batch_size == 0 { vectors.len() } else { config.batch_size.min(vectors.len()) };
    let lr = T::lit(config.learning_rate);
    let mu = T::lit(config.momentum);
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        if batch < vectors.len() {
            for i in (1..order.len()).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
        }
        for chunk in order.chunks(batch) {
            let partials: Vec<Autoencoder<T>> = chunk
                .par_chunks(8)
                .map(|idx| {
                    let mut g = Autoencoder::zeros(dim, config.hidden);
                    for &i in idx {
                        ae.sample_gradient(&vectors[i], l1_weight, &mut g);
                    }
                    g
                })
                .collect();
            let mut grad = Autoencoder::zeros(dim, config.hidden);
            for p in &partials {
                grad.add_assign(p);
            }
            let scale = T::one() / T::from_count(chunk.len());
            for (layer, (v, g)) in ae.layers.iter_mut().zip(velocity.layers.iter_mut().zip(&grad.layers)) {
                for ((w, vel), &gr) in layer.params_mut().zip(v.params_mut()).zip(g.params()) {
                    *vel = mu * *vel + gr * scale;
                    *w -= lr * *vel;
                }
            }
        }
        curve.push(mean_loss(&ae, vectors, l1_weight).as_f64());
    }
    let final_loss = curve.last().copied().unwrap_or_else(|| mean_loss(&ae, vectors, l1_weight).as_f64());
    Ok((ae, AutoencoderReport { loss_curve: curve, final_loss }))
}
