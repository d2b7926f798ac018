//! Observations and their fixed-dimension embeddings.
//!
//! Two encoders are provided: a frozen random-feature map for image
//! observations, and an identity map used by the one-hot oracle mode.
//! Pre-computed embeddings can also be replayed from trace files (see
//! [`trace`]).

pub mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{prng, standard_normal, unit_f64};

pub const DEFAULT_EMBED_DIM: usize = 384;

/// Height x width x channels image with values in `[0, 1]`, stored row-major
/// (HWC). With noisy-TV on, a same-shape noise frame is appended channel-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
    noise_frame: Option<Vec<f32>>,
}

impl Observation {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != height * width * channels {
            return Err(Error::InvalidArgument(format!(
                "observation of shape {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
            noise_frame: None,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            pixels: vec![0.0; height * width * channels],
            noise_frame: None,
        }
    }

    /// Appends a noise frame of the same shape as the base image.
    pub fn with_noise_frame(mut self, noise: Vec<f32>) -> Result<Self> {
        if noise.len() != self.pixels.len() {
            return Err(Error::InvalidArgument(format!(
                "noise frame has {} values, base image has {}",
                noise.len(),
                self.pixels.len()
            )));
        }
        if let Some(bad) = noise.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("noise value {bad} outside [0, 1]")));
        }
        self.noise_frame = Some(noise);
        Ok(self)
    }

    /// Shape including the noise channels, if any.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.total_channels())
    }

    pub fn base_channels(&self) -> usize {
        self.channels
    }

    pub fn total_channels(&self) -> usize {
        if self.noise_frame.is_some() {
            2 * self.channels
        } else {
            self.channels
        }
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn noise_frame(&self) -> Option<&[f32]> {
        self.noise_frame.as_deref()
    }

    pub fn is_noisy(&self) -> bool {
        self.noise_frame.is_some()
    }

    /// Value at `(row, col, channel)` of the concatenated image.
    #[inline]
    pub fn at(&self, row: usize, col: usize, channel: usize) -> f32 {
        let base = (row * self.width + col) * self.channels;
        if channel < self.channels {
            self.pixels[base + channel]
        } else {
            match &self.noise_frame {
                Some(noise) => noise[base + channel - self.channels],
                None => panic!("channel {channel} out of range"),
            }
        }
    }

    /// Flattened concatenated image (HWC, noise channels after base channels).
    pub fn to_flat(&self) -> Vec<f32> {
        let (h, w, c) = self.shape();
        let mut out = Vec::with_capacity(h * w * c);
        for row in 0..h {
            for col in 0..w {
                for ch in 0..c {
                    out.push(self.at(row, col, ch));
                }
            }
        }
        out
    }
}

/// Latent representation of a single observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub Vec<f32>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

impl From<Vec<f32>> for EmbeddingVector {
    fn from(values: Vec<f32>) -> Self {
        Self(values)
    }
}

/// Frozen random feature map: random strided local averaging followed by a
/// dense Gaussian projection.
///
/// Pooled values are centred on their per-frame mean, separately for the
/// base and noise channel groups. Pool weights are drawn per
/// (channel, kernel offset) from `U(0, 1]` and normalised to sum to one;
/// projection entries are `N(0, 1 / n_pooled)`. Both come from one
/// `Xoshiro256PlusPlus` stream seeded with `seed`, pool weights first.
#[derive(Debug, Clone)]
pub struct RandomEncoder {
    seed: u64,
    input_shape: (usize, usize, usize),
    kernel: usize,
    stride: usize,
    pooled_h: usize,
    pooled_w: usize,
    embed_dim: usize,
    // [channel][ky * kernel + kx]
    pool_weights: Vec<Vec<f64>>,
    // row-major embed_dim x n_pooled
    projection: Vec<f64>,
}

pub const POOL_KERNEL: usize = 6;
pub const POOL_STRIDE: usize = 4;

impl RandomEncoder {
    pub fn new(seed: u64, input_shape: (usize, usize, usize), embed_dim: usize) -> Result<Self> {
        Self::with_pooling(seed, input_shape, embed_dim, POOL_KERNEL, POOL_STRIDE)
    }

    pub fn with_pooling(
        seed: u64,
        input_shape: (usize, usize, usize),
        embed_dim: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        let (h, w, c) = input_shape;
        if embed_dim == 0 || c == 0 {
            return Err(Error::Config(
                "encoder needs a positive embedding dimension and channel count".into(),
            ));
        }
        if kernel == 0 || stride == 0 {
            return Err(Error::Config(
                "pool kernel and stride must be positive".into(),
            ));
        }
        // Small inputs (e.g. one-hot vectors) are pooled with a kernel that fits.
        let kernel = kernel.min(h).min(w);
        if kernel == 0 {
            return Err(Error::Config(format!("input shape {h}x{w}x{c} is empty")));
        }
        let pooled_h = (h - kernel) / stride + 1;
        let pooled_w = (w - kernel) / stride + 1;
        let n_pooled = pooled_h * pooled_w * c;

        let mut rng = prng(seed);
        let pool_weights = (0..c)
            .map(|_| {
                let raw: Vec<f64> = (0..kernel * kernel)
                    .map(|_| 1.0 - unit_f64(&mut rng))
                    .collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / total).collect()
            })
            .collect();
        let scale = 1.0 / (n_pooled as f64).sqrt();
        let projection = (0..embed_dim * n_pooled)
            .map(|_| standard_normal(&mut rng) * scale)
            .collect();

        Ok(Self {
            seed,
            input_shape,
            kernel,
            stride,
            pooled_h,
            pooled_w,
            embed_dim,
            pool_weights,
            projection,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn pool(&self, obs: &Observation) -> Vec<f64> {
        let c = self.input_shape.2;
        let mut pooled = Vec::with_capacity(self.pooled_h * self.pooled_w * c);
        for py in 0..self.pooled_h {
            for px in 0..self.pooled_w {
                let (y0, x0) = (py * self.stride, px * self.stride);
                for (ch, weights) in self.pool_weights.iter().enumerate() {
                    let mut acc = 0.0;
                    for ky in 0..self.kernel {
                        for kx in 0..self.kernel {
                            let v = obs.at(y0 + ky, x0 + kx, ch) as f64;
                            acc += weights[ky * self.kernel + kx] * v;
                        }
                    }
                    pooled.push(acc);
                }
            }
        }
        // centre the image and noise channel groups on their own means
        let base = obs.base_channels();
        for group in [0..base, base..c] {
            if group.is_empty() {
                continue;
            }
            let n = (pooled.len() / c * group.len()) as f64;
            let mean = pooled
                .iter()
                .enumerate()
                .filter(|(i, _)| group.contains(&(i % c)))
                .map(|(_, v)| v)
                .sum::<f64>()
                / n;
            for (i, v) in pooled.iter_mut().enumerate() {
                if group.contains(&(i % c)) {
                    *v -= mean;
                }
            }
        }
        pooled
    }

    pub fn encode(&self, obs: &Observation) -> Result<EmbeddingVector> {
        if obs.shape() != self.input_shape {
            return Err(Error::Config(format!(
                "encoder expects observations of shape {:?}, got {:?}",
                self.input_shape,
                obs.shape()
            )));
        }
        let pooled = self.pool(obs);
        let out = self
            .projection
            .chunks_exact(pooled.len())
            .map(|row| row.iter().zip(&pooled).map(|(w, p)| w * p).sum::<f64>() as f32)
            .collect();
        Ok(EmbeddingVector(out))
    }
}

/// Maps observations to embeddings.
#[derive(Debug, Clone)]
pub enum Encoder {
    Random(RandomEncoder),
    /// Flattens the observation unchanged; used for one-hot oracle runs.
    Identity {
        input_shape: (usize, usize, usize),
    },
}

impl Encoder {
    pub fn encode(&self, obs: &Observation) -> Result<EmbeddingVector> {
        match self {
            Encoder::Random(enc) => enc.encode(obs),
            Encoder::Identity { input_shape } => {
                if obs.shape() != *input_shape {
                    return Err(Error::Config(format!(
                        "encoder expects observations of shape {:?}, got {:?}",
                        input_shape,
                        obs.shape()
                    )));
                }
                Ok(EmbeddingVector(obs.to_flat()))
            }
        }
    }

    pub fn embed_dim(&self) -> usize {
        match self {
            Encoder::Random(enc) => enc.embed_dim(),
            Encoder::Identity {
                input_shape: (h, w, c),
            } => h * w * c,
        }
    }

    /// Encodes every observation in order.
    pub fn encode_batch(&self, batch: &[Observation]) -> Result<Vec<EmbeddingVector>> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty observation batch".into()));
        }
        batch.iter().map(|obs| self.encode(obs)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::prng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_obs(rng: &mut impl Rng, h: usize, w: usize, c: usize) -> Observation {
        let px = (0..h * w * c).map(|_| rng.gen::<f32>()).collect();
        Observation::new(h, w, c, px).unwrap()
    }

    fn paper_encoder(seed: u64) -> Encoder {
        Encoder::Random(RandomEncoder::new(seed, (42, 42, 3), DEFAULT_EMBED_DIM).unwrap())
    }

    #[test]
    fn zero_observation_is_deterministic() {
        let enc = paper_encoder(1);
        let obs = Observation::zeros(42, 42, 3);
        let a = enc.encode(&obs).unwrap();
        let b = enc.encode(&obs).unwrap();
        assert_eq!(a, b);
        // rebuilt from the same seed
        let c = paper_encoder(1).encode(&obs).unwrap();
        assert_eq!(a, c);
        assert!(a.0.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn output_dimension_is_384() {
        let enc = paper_encoder(1);
        let v = enc.encode(&Observation::zeros(42, 42, 3)).unwrap();
        assert_eq!(v.dim(), 384);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let enc = paper_encoder(1);
        let err = enc.encode(&Observation::zeros(40, 42, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config(_)));
        assert!(
            msg.contains("(42, 42, 3)") && msg.contains("(40, 42, 3)"),
            "{msg}"
        );
    }

    #[test]
    fn single_pixel_change_moves_embedding() {
        let enc = paper_encoder(5);
        let mut rng = prng(99);
        for _ in 0..100 {
            let a = random_obs(&mut rng, 42, 42, 3);
            let mut px = a.pixels().to_vec();
            let idx = rng.gen_range(0..px.len());
            let old = px[idx];
            let mut new = rng.gen::<f32>();
            while (new - old).abs() < 1e-3 {
                new = rng.gen::<f32>();
            }
            px[idx] = new;
            let b = Observation::new(42, 42, 3, px).unwrap();
            assert_ne!(enc.encode(&a).unwrap(), enc.encode(&b).unwrap());
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let enc = paper_encoder(1);
        assert!(matches!(
            enc.encode_batch(&[]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn singleton_batch_matches_encode() {
        let enc = paper_encoder(2);
        let obs = random_obs(&mut prng(4), 42, 42, 3);
        let batch = enc.encode_batch(std::slice::from_ref(&obs)).unwrap();
        assert_eq!(batch, vec![enc.encode(&obs).unwrap()]);
    }

    #[test]
    fn full_episode_batch() {
        let enc = paper_encoder(3);
        let mut rng = prng(8);
        // Distinct random frames are expensive to allocate; cycle a few.
        let frames: Vec<Observation> = (0..7).map(|_| random_obs(&mut rng, 42, 42, 3)).collect();
        let batch: Vec<Observation> = (0..2100).map(|t| frames[t % 7].clone()).collect();
        let out = enc.encode_batch(&batch).unwrap();
        assert_eq!(out.len(), 2100);
        assert!(out.iter().all(|e| e.dim() == 384));
    }

    #[test]
    fn noise_frame_doubles_channels_and_keeps_base() {
        let mut rng = prng(10);
        let base = random_obs(&mut rng, 6, 5, 3);
        let noise: Vec<f32> = (0..6 * 5 * 3).map(|_| rng.gen()).collect();
        let noisy = base.clone().with_noise_frame(noise.clone()).unwrap();
        assert_eq!(noisy.shape(), (6, 5, 6));
        for row in 0..6 {
            for col in 0..5 {
                for ch in 0..3 {
                    assert_eq!(noisy.at(row, col, ch), base.at(row, col, ch));
                    assert_eq!(noisy.at(row, col, ch + 3), noise[(row * 5 + col) * 3 + ch]);
                }
            }
        }
    }

    #[test]
    fn identity_encoder_flattens() {
        let obs = Observation::new(1, 1, 4, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let enc = Encoder::Identity {
            input_shape: (1, 1, 4),
        };
        assert_eq!(enc.encode(&obs).unwrap().0, vec![0.0, 1.0, 0.0, 0.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn encode_is_pure(seed in any::<u64>(), obs_seed in any::<u64>()) {
            let mut rng = prng(obs_seed);
            let obs = random_obs(&mut rng, 14, 14, 3);
            let a = RandomEncoder::new(seed, (14, 14, 3), 16).unwrap();
            let b = RandomEncoder::new(seed, (14, 14, 3), 16).unwrap();
            let (ea, eb) = (a.encode(&obs).unwrap(), b.encode(&obs).unwrap());
            prop_assert_eq!(
                ea.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                eb.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }

        #[test]
        fn batch_is_order_equivariant(obs_seed in any::<u64>(), shift in 0usize..6) {
            let mut rng = prng(obs_seed);
            let enc = Encoder::Random(RandomEncoder::new(3, (10, 10, 3), 8).unwrap());
            let batch: Vec<Observation> = (0..6).map(|_| random_obs(&mut rng, 10, 10, 3)).collect();
            let mut rotated = batch.clone();
            rotated.rotate_left(shift);
            let mut expected = enc.encode_batch(&batch).unwrap();
            expected.rotate_left(shift);
            prop_assert_eq!(enc.encode_batch(&rotated).unwrap(), expected);
        }
    }
}
