//! Training loop: Adam over synapse heights, cross-entropy on the normalized
//! final potentials, and activity/accuracy metrics.
//!
//! Only heights are learned; Gaussian centers and widths stay frozen at
//! their initial draws, so the ISI tuning shape of every synapse is fixed
//! while its amplitude adapts. Gradients are averaged over the samples of a
//! batch that produced a usable output (degenerate presentations — every
//! output potential nonpositive — contribute nothing and are reported).

use crate::backprop::{self, SuppressionMode};
use crate::dataio::Dataset;
use crate::encoding::{encode, EncoderConfig, SpikeRaster};
use crate::error::{Error, Result};
use crate::network::{InitConfig, NetCaches, Network, Variant};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

/// Adam moment/step-size constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam state over one parameter vector per synapse bank.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, shapes: &[usize]) -> Adam {
        Adam {
            cfg,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One bias-corrected update of every bank in place.
    pub fn step(&mut self, net: &mut Network, grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let corr1 = 1.0 - b1.powi(self.t as i32);
        let corr2 = 1.0 - b2.powi(self.t as i32);
        for (b, bank) in net.banks.iter_mut().enumerate() {
            let w = bank.weights_mut();
            let g = &grads[b];
            for i in 0..w.len() {
                self.m[b][i] = b1 * self.m[b][i] + (1.0 - b1) * g[i];
                self.v[b][i] = b2 * self.v[b][i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = self.m[b][i] / corr1;
                let v_hat = self.v[b][i] / corr2;
                w[i] -= lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
    }
}

/// Everything one run needs. Serializable so runs can be described by a
/// config file and reproduced exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub architecture: String,
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta: f64,
    pub theta: f64,
    pub surrogate_slope: f64,
    pub seed: u64,
    pub adam: AdamConfig,
    pub encoder: EncoderConfig,
    pub init: InitConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            architecture: "784-128-10".to_string(),
            variant: Variant::Imsnn,
            epochs: 5,
            batch_size: 128,
            learning_rate: 1e-4,
            beta: 0.99,
            theta: 1.0,
            surrogate_slope: 10.0,
            seed: 1,
            adam: AdamConfig::default(),
            encoder: EncoderConfig::default(),
            init: InitConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Validation("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Validation("beta must lie in [0, 1)".into()));
        }
        if self.encoder.steps == 0 {
            return Err(Error::Validation("encoder.steps must be positive".into()));
        }
        Ok(())
    }
}

/// Accuracy / activity / loss over one dataset.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    /// Classification accuracy in percent; degenerate outputs count as
    /// incorrect.
    pub kappa_a: f64,
    /// Mean spikes per neuron, one entry per hidden layer.
    pub kappa_n_layers: Vec<f64>,
    /// Network activity: sum of the per-layer values.
    pub kappa_n: f64,
    /// Mean cross-entropy over non-degenerate samples.
    pub mean_loss: f64,
    pub degenerate: usize,
    pub n: usize,
}

/// One row of the training log.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_degenerate: usize,
    /// Fraction of spiking hidden sites whose ISI term was suppressed.
    pub suppressed_fraction: f64,
    pub wall_secs: f64,
    pub eval: Option<EvalReport>,
}

fn sample_seed(base: u64, epoch: u64, index: u64) -> u64 {
    // splitmix-style mixing; only needs to decorrelate streams.
    let mut z = base ^ epoch.wrapping_mul(0x9e3779b97f4a7c15) ^ index.wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn encode_sample(data: &Dataset, i: usize, cfg: &TrainConfig, epoch: u64) -> Result<SpikeRaster> {
    let mut enc = cfg.encoder;
    enc.seed = sample_seed(cfg.seed, epoch, i as u64);
    encode(&data.normalized_image(i), &enc)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Evaluate a network. `epoch_tag` decorrelates stochastic encoder draws
/// from training draws; evaluation itself never mutates anything.
pub fn evaluate(
    net: &Network,
    data: &Dataset,
    cfg: &TrainConfig,
    caches: &mut NetCaches,
    epoch_tag: u64,
) -> Result<EvalReport> {
    let hidden = net.hidden_layer_indices();
    let mut correct = 0usize;
    let mut degenerate = 0usize;
    let mut loss_sum = 0.0;
    let mut spikes_per_layer = vec![0.0f64; hidden.len()];
    for i in 0..data.len() {
        let raster = encode_sample(data, i, cfg, epoch_tag)?;
        let fwd = net.forward_cached(&raster, cfg.beta, cfg.theta, caches)?;
        for (slot, &layer) in hidden.iter().enumerate() {
            spikes_per_layer[slot] +=
                fwd.traces[layer].total_spikes() as f64 / net.layer_sizes[layer] as f64;
        }
        match crate::dynamics::output_probabilities(fwd.output_potentials()) {
            Ok(probs) => {
                if argmax(&probs) == data.label(i) {
                    correct += 1;
                }
                loss_sum += backprop::cross_entropy(&probs, data.label(i));
            }
            Err(Error::DegenerateOutput) => degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    let n = data.len();
    let valid = n - degenerate;
    let kappa_n_layers: Vec<f64> = spikes_per_layer.iter().map(|s| s / n as f64).collect();
    Ok(EvalReport {
        kappa_a: 100.0 * correct as f64 / n as f64,
        kappa_n: kappa_n_layers.iter().sum(),
        kappa_n_layers,
        mean_loss: if valid > 0 { loss_sum / valid as f64 } else { f64::NAN },
        degenerate,
        n,
    })
}

/// Train in place for `cfg.epochs` epochs, evaluating after each epoch when
/// `test` is given. Returns one record per epoch; `on_epoch` sees each
/// record as soon as its epoch finishes (progress reporting).
pub fn train(
    net: &mut Network,
    train_data: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&MetricsRecord),
) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    if net.layer_sizes[0] != train_data.pixels_per_image() {
        return Err(Error::Validation(format!(
            "network expects {} inputs but images have {} pixels",
            net.layer_sizes[0],
            train_data.pixels_per_image()
        )));
    }
    let mode = SuppressionMode::from(net.variant);
    let shapes: Vec<usize> = net.banks.iter().map(|b| b.weights().len()).collect();
    let mut adam = Adam::new(cfg.adam, &shapes);
    let mut caches = net.make_caches(cfg.encoder.steps as u32);
    let mut records = Vec::with_capacity(cfg.epochs);

    let mut indices: Vec<usize> = (0..train_data.len()).collect();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        indices.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut degenerate = 0usize;
        let mut suppressed = 0u64;
        let mut spiking = 0u64;
        for batch in indices.chunks(cfg.batch_size) {
            let mut grad_sum: Vec<Vec<f64>> =
                shapes.iter().map(|&n| vec![0.0; n]).collect();
            let mut contributing = 0usize;
            for &i in batch {
                let raster = encode_sample(train_data, i, cfg, epoch as u64)?;
                let fwd = net.forward_cached(&raster, cfg.beta, cfg.theta, &mut caches)?;
                let potentials = fwd.output_potentials();
                let seed = match backprop::cross_entropy_potential_seed(potentials, train_data.label(i)) {
                    Ok(seed) => seed,
                    Err(Error::DegenerateOutput) => {
                        degenerate += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let probs = crate::dynamics::output_probabilities(potentials)?;
                loss_sum += backprop::cross_entropy(&probs, train_data.label(i));
                let state = backprop::backward_pass(
                    net,
                    &fwd,
                    &seed,
                    mode,
                    cfg.beta,
                    cfg.theta,
                    cfg.surrogate_slope,
                    &mut caches,
                );
                suppressed += state.suppressed_sites;
                spiking += state.spiking_sites;
                for (acc, g) in grad_sum.iter_mut().zip(&state.grad_w) {
                    for (a, &x) in acc.iter_mut().zip(g) {
                        *a += x;
                    }
                }
                contributing += 1;
            }
            if contributing == 0 {
                continue;
            }
            for g in grad_sum.iter_mut() {
                for x in g.iter_mut() {
                    *x /= contributing as f64;
                }
            }
            adam.step(net, &grad_sum, cfg.learning_rate);
        }

        let valid = train_data.len() - degenerate;
        let eval = match test {
            Some(test_data) => Some(evaluate(
                net,
                test_data,
                cfg,
                &mut caches,
                u64::MAX - epoch as u64,
            )?),
            None => None,
        };
        let record = MetricsRecord {
            epoch,
            train_loss: if valid > 0 { loss_sum / valid as f64 } else { f64::NAN },
            train_degenerate: degenerate,
            suppressed_fraction: if spiking > 0 {
                suppressed as f64 / spiking as f64
            } else {
                0.0
            },
            wall_secs: started.elapsed().as_secs_f64(),
            eval,
        };
        on_epoch(&record);
        records.push(record);
    }
    Ok(records)
}

/// Write the per-epoch log as CSV. Floats are printed with full round-trip
/// precision. The header adapts to the number of hidden layers.
pub fn write_metrics_csv(path: &std::path::Path, records: &[MetricsRecord]) -> Result<()> {
    let hidden_layers = records
        .iter()
        .filter_map(|r| r.eval.as_ref())
        .map(|e| e.kappa_n_layers.len())
        .max()
        .unwrap_or(0);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "epoch,train_loss,train_degenerate,suppressed_fraction,wall_secs")?;
    write!(out, ",kappa_a,kappa_n,eval_loss,eval_degenerate")?;
    for l in 1..=hidden_layers {
        write!(out, ",kappa_n_hidden{l}")?;
    }
    writeln!(out)?;
    for r in records {
        write!(
            out,
            "{},{},{},{},{}",
            r.epoch, r.train_loss, r.train_degenerate, r.suppressed_fraction, r.wall_secs
        )?;
        match &r.eval {
            Some(e) => {
                write!(out, ",{},{},{},{}", e.kappa_a, e.kappa_n, e.mean_loss, e.degenerate)?;
                for l in 0..hidden_layers {
                    match e.kappa_n_layers.get(l) {
                        Some(v) => write!(out, ",{v}")?,
                        None => write!(out, ",")?,
                    }
                }
            }
            None => {
                write!(out, ",,,,")?;
                for _ in 0..hidden_layers {
                    write!(out, ",")?;
                }
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
