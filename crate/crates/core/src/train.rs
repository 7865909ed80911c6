//! Adversarial training with analog forward passes and exact backprop.
//!
//! Each training step presents a batch of real images. The discriminator is
//! updated on the real images and on generator samples (binary cross-entropy,
//! real=1, fake=0), then the generator is updated through the freshly
//! written discriminator using the non-saturating loss `−log D(G(z))`.
//! Per-sample passes run in parallel; gradients are reduced in sample order
//! so results do not depend on the worker count.
//!
//! Every presented image counts as one update event: the crossbars are
//! rewritten once per step, and the event counter advances by the batch
//! length, so with `batch_size = 1` each event is exactly one write of all
//! weights.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossbar::ReadoutMode;
use crate::device::{DeviceSpec, VariabilityModel};
use crate::error::{Error, Result};
use crate::layers::sigmoid;
use crate::network::{ForwardOptions, LayerGrads, Network, TopologyPair};
use crate::rng::{self, StreamRng};
use crate::tensor::Tensor;

/// Device nonidealities applied during forward passes and writes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalogEffects {
    /// Snap every written conductance to the nearest device level.
    pub quantize: bool,
    /// Programming variability as a fraction of the target conductance.
    pub sigma_pct: f64,
    /// Read columns through the load memristor instead of ideally.
    pub loaded_readout: bool,
    /// Noise on idle rows as a fraction of the write voltage.
    pub leakage: f64,
}

impl Default for AnalogEffects {
    fn default() -> Self {
        Self {
            quantize: true,
            sigma_pct: 0.0,
            loaded_readout: false,
            leakage: 0.0,
        }
    }
}

impl AnalogEffects {
    pub fn ideal() -> Self {
        Self {
            quantize: false,
            ..Self::default()
        }
    }

    pub fn readout_mode(&self) -> ReadoutMode {
        if self.loaded_readout {
            ReadoutMode::Loaded
        } else {
            ReadoutMode::Ideal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Generator step size as a multiple of `learning_rate`.
    pub generator_lr_scale: f64,
    pub latent_dim: usize,
    #[serde(flatten)]
    pub analog: AnalogEffects,
    pub seed: u64,
    /// Per-layer weight scale in standard deviations of the initial weights.
    pub w_max_sigmas: f64,
    pub v_dd: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 1,
            learning_rate: 0.01,
            generator_lr_scale: 2.0,
            latent_dim: 16,
            analog: AnalogEffects::default(),
            seed: 0,
            w_max_sigmas: 6.0,
            v_dd: 1.8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::TrainConfig(m.into()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.generator_lr_scale > 0.0 && self.generator_lr_scale.is_finite()) {
            return bad("generator_lr_scale must be positive");
        }
        if self.latent_dim < 1 {
            return bad("latent_dim must be at least 1");
        }
        if !(self.analog.sigma_pct >= 0.0 && self.analog.sigma_pct.is_finite()) {
            return bad("sigma_pct must be nonnegative");
        }
        if !(self.analog.leakage >= 0.0 && self.analog.leakage.is_finite()) {
            return bad("leakage must be nonnegative");
        }
        if !(self.w_max_sigmas > 0.0 && self.w_max_sigmas.is_finite()) {
            return bad("w_max_sigmas must be positive");
        }
        if !(self.v_dd > 0.0 && self.v_dd.is_finite()) {
            return bad("v_dd must be positive");
        }
        Ok(())
    }

    /// Half the supply: the signal swing of images and activations.
    pub fn v_scale(&self) -> f64 {
        self.v_dd / 2.0
    }

    pub fn forward_options(&self, training: bool) -> ForwardOptions {
        ForwardOptions {
            mode: self.analog.readout_mode(),
            v_dd: self.v_dd,
            v_scale: self.v_scale(),
            leakage: self.analog.leakage,
            training,
            ..ForwardOptions::default()
        }
    }

    pub fn variability(&self) -> VariabilityModel {
        VariabilityModel {
            sigma_pct: self.analog.sigma_pct,
            seed: self.seed,
            ..VariabilityModel::ideal()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLosses {
    pub epoch: u64,
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub pair: TopologyPair,
    pub device: DeviceSpec,
    pub config: TrainConfig,
    pub generator: Network,
    pub discriminator: Network,
    /// Completed epochs.
    pub epoch: u64,
    /// Presented images, i.e. update events.
    pub events: u64,
    /// Crossbar write steps.
    pub steps: u64,
    pub history: Vec<EpochLosses>,
}

const STREAM_FAKE: &str = "fake";
const STREAM_SAMPLES: &str = "samples";

impl TrainState {
    pub fn new(pair: TopologyPair, device: DeviceSpec, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        device.validate()?;
        if pair.latent_dim() != config.latent_dim {
            return Err(Error::Topology(format!(
                "generator latent {} but config latent_dim {}",
                pair.latent_dim(),
                config.latent_dim
            )));
        }
        let q = config.analog.quantize;
        let mut r = rng::substream(config.seed, rng::WEIGHTS, 0);
        let generator = Network::init(pair.generator.clone(), &device, q, config.w_max_sigmas, &mut r)?;
        let mut r = rng::substream(config.seed, rng::WEIGHTS, 1);
        let discriminator =
            Network::init(pair.discriminator.clone(), &device, q, config.w_max_sigmas, &mut r)?;
        let mut state = Self {
            pair,
            device,
            config,
            generator,
            discriminator,
            epoch: 0,
            events: 0,
            steps: 0,
            history: Vec::new(),
        };
        // Initial programming goes through the same write path as updates.
        let zero_g = zero_grads(&state.generator);
        let zero_d = zero_grads(&state.discriminator);
        let var = config.variability();
        let mut r = rng::substream(config.seed, rng::VARIABILITY, u64::MAX);
        state.generator.apply_update(&zero_g, 0.0, &var, &mut r)?;
        state.discriminator.apply_update(&zero_d, 0.0, &var, &mut r)?;
        Ok(state)
    }

    pub fn v_scale(&self) -> f64 {
        self.config.v_scale()
    }

    /// One step over `real` (images in `[−1, 1]`).
    pub fn train_step(&mut self, real: &[Tensor]) -> Result<StepLosses> {
        if real.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let image_len: usize = self.pair.image_shape().iter().product();
        if let Some(bad) = real.iter().find(|t| t.len() != image_len) {
            return Err(Error::DimensionMismatch {
                expected: image_len,
                got: bad.len(),
            });
        }
        let cfg = self.config;
        let opts = cfg.forward_options(true);
        let v_scale = cfg.v_scale();
        let seed = cfg.seed;
        let base = self.events;
        let n = real.len() as f64;

        // Discriminator: real → 1, fake → 0.
        let g = &self.generator;
        let d = &self.discriminator;
        let per_sample: Vec<Result<(Tensor, f64, LayerGrads)>> = real
            .par_iter()
            .enumerate()
            .map(|(i, img)| {
                let event = base + i as u64;
                let mut leak = rng::substream(seed, rng::LEAKAGE, event * 4);
                let z = latent(seed, STREAM_FAKE, event, cfg.latent_dim);
                let fake = g.forward(&z, &opts, Some(&mut leak))?.output().clone();
                let x = img.map(|p| p * v_scale);

                let mut leak = rng::substream(seed, rng::LEAKAGE, event * 4 + 1);
                let tape_r = d.forward(&x, &opts, Some(&mut leak))?;
                let l_r = tape_r.output().data()[0];
                let (_, mut grads) = d.backward(&tape_r, &[sigmoid(l_r) - 1.0])?;

                let mut leak = rng::substream(seed, rng::LEAKAGE, event * 4 + 2);
                let tape_f = d.forward(&fake, &opts, Some(&mut leak))?;
                let l_f = tape_f.output().data()[0];
                let (_, grads_f) = d.backward(&tape_f, &[sigmoid(l_f)])?;
                add_grads(&mut grads, &grads_f);
                Ok((z, softplus(-l_r) + softplus(l_f), grads))
            })
            .collect();
        let mut zs = Vec::with_capacity(real.len());
        let mut d_loss = 0.0;
        let mut d_grads = zero_grads(&self.discriminator);
        for r in per_sample {
            let (z, loss, grads) = r?;
            zs.push(z);
            d_loss += loss;
            add_grads(&mut d_grads, &grads);
        }
        d_loss /= n;
        scale_grads(&mut d_grads, 1.0 / n);

        let var = cfg.variability();
        let mut wr = rng::substream(seed, rng::VARIABILITY, 2 * self.steps);
        self.discriminator
            .apply_update(&d_grads, cfg.learning_rate, &var, &mut wr)?;

        // Generator through the updated discriminator.
        let g = &self.generator;
        let d = &self.discriminator;
        let per_sample: Vec<Result<(f64, LayerGrads)>> = zs
            .par_iter()
            .enumerate()
            .map(|(i, z)| {
                let event = base + i as u64;
                let mut leak = rng::substream(seed, rng::LEAKAGE, event * 4 + 3);
                let tape_g = g.forward(z, &opts, Some(&mut leak))?;
                let tape_d = d.forward(tape_g.output(), &opts, Some(&mut leak))?;
                let l = tape_d.output().data()[0];
                let (gx, _) = d.backward(&tape_d, &[sigmoid(l) - 1.0])?;
                let (_, grads) = g.backward(&tape_g, &gx)?;
                Ok((softplus(-l), grads))
            })
            .collect();
        let mut g_loss = 0.0;
        let mut g_grads = zero_grads(&self.generator);
        for r in per_sample {
            let (loss, grads) = r?;
            g_loss += loss;
            add_grads(&mut g_grads, &grads);
        }
        g_loss /= n;
        scale_grads(&mut g_grads, 1.0 / n);

        if !d_loss.is_finite() || !g_loss.is_finite() {
            return Err(Error::TrainingDiverged { event: self.events });
        }
        let mut wr = rng::substream(seed, rng::VARIABILITY, 2 * self.steps + 1);
        self.generator
            .apply_update(&g_grads, cfg.learning_rate * cfg.generator_lr_scale, &var, &mut wr)?;

        self.events += real.len() as u64;
        self.steps += 1;
        Ok(StepLosses { d_loss, g_loss })
    }

    /// One pass over `data` in a seed-determined order.
    pub fn train_epoch(&mut self, data: &[Tensor]) -> Result<EpochLosses> {
        if data.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut r = rng::substream(self.config.seed, rng::SHUFFLE, self.epoch);
        order.shuffle(&mut r);
        let mut d_sum = 0.0;
        let mut g_sum = 0.0;
        let mut batches = 0usize;
        let mut batch = Vec::with_capacity(self.config.batch_size);
        for chunk in order.chunks(self.config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let l = self.train_step(&batch)?;
            d_sum += l.d_loss;
            g_sum += l.g_loss;
            batches += 1;
        }
        self.epoch += 1;
        let rec = EpochLosses {
            epoch: self.epoch,
            d_loss: d_sum / batches as f64,
            g_loss: g_sum / batches as f64,
        };
        self.history.push(rec);
        Ok(rec)
    }

    /// Generator output for `z`, in volts.
    pub fn generator_forward(&self, z: &Tensor) -> Result<Tensor> {
        self.generator_forward_with(z, None)
    }

    fn generator_forward_with(&self, z: &Tensor, rng: Option<&mut StreamRng>) -> Result<Tensor> {
        if z.len() != self.config.latent_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.latent_dim,
                got: z.len(),
            });
        }
        let opts = self.config.forward_options(false);
        let out = self.generator.forward(z, &opts, rng)?;
        Ok(out.output().clone())
    }

    /// Discriminator score in `(0, 1)` for an image given in volts.
    pub fn discriminator_forward(&self, img: &Tensor) -> Result<f64> {
        Ok(sigmoid(self.discriminator_logit(img)?))
    }

    pub fn discriminator_logit(&self, img: &Tensor) -> Result<f64> {
        if img.shape() != self.pair.image_shape() {
            return Err(Error::Shape(format!(
                "image {:?}, discriminator expects {:?}",
                img.shape(),
                self.pair.image_shape()
            )));
        }
        let opts = self.config.forward_options(false);
        Ok(self.discriminator.forward(img, &opts, None)?.output().data()[0])
    }

    /// `n` generator images (volts) from latent draws fixed by `seed`.
    pub fn generate_samples(&self, n: usize, seed: u64) -> Result<Vec<Tensor>> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let z = latent(seed, STREAM_SAMPLES, i, self.config.latent_dim);
                let mut leak = rng::substream(seed, rng::LEAKAGE, i);
                self.generator_forward_with(&z, Some(&mut leak))
            })
            .collect()
    }
}

/// Standard normal latent vector from a named substream.
pub fn latent(seed: u64, stream: &str, index: u64, dim: usize) -> Tensor {
    let mut r = rng::substream(seed, stream, index);
    let data = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
    Tensor::from_parts(vec![dim], data)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn zero_grads(net: &Network) -> LayerGrads {
    net.topology()
        .layers
        .iter()
        .map(|l| vec![0.0; l.weight_count()])
        .collect()
}

fn add_grads(acc: &mut LayerGrads, g: &LayerGrads) {
    for (a, b) in acc.iter_mut().zip(g) {
        if a.is_empty() {
            a.extend_from_slice(b);
        } else {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn scale_grads(g: &mut LayerGrads, s: f64) {
    for v in g.iter_mut().flatten() {
        *v *= s;
    }
}
