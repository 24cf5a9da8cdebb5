//! Rate coding of pixel intensities into spike trains.
//!
//! A pixel x in [0, 1] maps linearly onto a firing rate in
//! [rate_min, rate_max] Hz. The default deterministic scheme places spikes at
//! the integer crossings of the accumulated phase `t * rate * dt`, so equal
//! pixels always produce identical rasters; the Poisson scheme draws seeded
//! Bernoulli spikes with the same per-step probability.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How pixel intensities become spike times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingScheme {
    /// Phase accumulator: spike at step t iff `floor(t*r)` increments, where
    /// `r = rate * dt / 1000`. Reproducible, evenly spaced, exactly
    /// `floor(T*r)` spikes over a window of T steps.
    DeterministicPhase,
    /// Seeded Bernoulli(rate * dt / 1000) per step.
    Poisson,
}

/// Encoder settings. `steps` is the presentation window T; `dt_ms` the step
/// width in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub scheme: EncodingScheme,
    pub rate_min_hz: f64,
    pub rate_max_hz: f64,
    pub dt_ms: f64,
    pub steps: usize,
    /// Seed for the Poisson scheme; ignored by the deterministic scheme.
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            scheme: EncodingScheme::DeterministicPhase,
            rate_min_hz: 28.5,
            rate_max_hz: 100.0,
            dt_ms: 1.0,
            steps: 100,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    /// Firing rate in Hz assigned to pixel intensity `x` in [0, 1].
    #[inline]
    pub fn rate_hz(&self, x: f64) -> f64 {
        self.rate_min_hz + x * (self.rate_max_hz - self.rate_min_hz)
    }

    /// Per-step spike probability / phase increment for pixel `x`.
    #[inline]
    pub fn rate_per_step(&self, x: f64) -> f64 {
        self.rate_hz(x) * self.dt_ms / 1000.0
    }
}

/// A binary spike train for `n` neurons over `steps` timesteps.
///
/// Time is 1-based in the accessors to match the update equations; data is
/// stored step-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeRaster {
    pub steps: usize,
    pub n: usize,
    data: Vec<u8>,
}

impl SpikeRaster {
    pub fn zeros(steps: usize, n: usize) -> Self {
        SpikeRaster {
            steps,
            n,
            data: vec![0; steps * n],
        }
    }

    /// Build from step-major 0/1 bytes; anything non-binary is rejected.
    pub fn from_raw(steps: usize, n: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != steps * n {
            return Err(Error::Validation(format!(
                "raster has {} entries, expected {} x {}",
                data.len(),
                steps,
                n
            )));
        }
        if let Some(pos) = data.iter().position(|&b| b > 1) {
            return Err(Error::Validation(format!(
                "raster entry at flat index {pos} is {}, not 0/1",
                data[pos]
            )));
        }
        Ok(SpikeRaster { steps, n, data })
    }

    #[inline]
    pub fn spike(&self, t: usize, i: usize) -> bool {
        debug_assert!((1..=self.steps).contains(&t));
        self.data[(t - 1) * self.n + i] != 0
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize) {
        self.data[(t - 1) * self.n + i] = 1;
    }

    /// All neurons' spike flags at step `t` (1-based).
    #[inline]
    pub fn step_row(&self, t: usize) -> &[u8] {
        &self.data[(t - 1) * self.n..t * self.n]
    }

    pub fn spike_count(&self) -> u64 {
        self.data.iter().map(|&b| b as u64).sum()
    }

    /// Spike times (1-based) of one neuron; handy in tests.
    pub fn spike_times(&self, i: usize) -> Vec<usize> {
        (1..=self.steps).filter(|&t| self.spike(t, i)).collect()
    }
}

/// Encode normalized pixels into a spike raster. Pixels must lie in [0, 1].
pub fn encode(pixels: &[f64], cfg: &EncoderConfig) -> Result<SpikeRaster> {
    if let Some(pos) = pixels.iter().position(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Validation(format!(
            "pixel {pos} is {} but must be in [0, 1]",
            pixels[pos]
        )));
    }
    if cfg.steps == 0 {
        return Err(Error::Validation("encoder window must be nonzero".into()));
    }
    let mut raster = SpikeRaster::zeros(cfg.steps, pixels.len());
    match cfg.scheme {
        EncodingScheme::DeterministicPhase => {
            for (i, &x) in pixels.iter().enumerate() {
                let r = cfg.rate_per_step(x);
                for t in 1..=cfg.steps {
                    if (t as f64 * r).floor() > ((t - 1) as f64 * r).floor() {
                        raster.set(t, i);
                    }
                }
            }
        }
        EncodingScheme::Poisson => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for (i, &x) in pixels.iter().enumerate() {
                let p = cfg.rate_per_step(x);
                for t in 1..=cfg.steps {
                    if rng.gen::<f64>() < p {
                        raster.set(t, i);
                    }
                }
            }
        }
    }
    Ok(raster)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic_spike_times_match_phase_crossings() {
        let cfg = EncoderConfig::default();
        let raster = encode(&[0.0, 0.5, 1.0], &cfg).unwrap();
        // 28.5 Hz over 100 ms: crossings at t = 36 and t = 71.
        assert_eq!(raster.spike_times(0), vec![36, 71]);
        // 64.25 Hz: six evenly spread spikes.
        assert_eq!(raster.spike_times(1), vec![16, 32, 47, 63, 78, 94]);
        // 100 Hz: every 10th step.
        assert_eq!(
            raster.spike_times(2),
            vec![10, 20, 30, 40, 50, 60, 70, 80, 90, 100]
        );
    }

    #[test]
    fn spike_count_equals_floor_of_accumulated_phase() {
        let cfg = EncoderConfig::default();
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            let raster = encode(&[x], &cfg).unwrap();
            let expected = (cfg.steps as f64 * cfg.rate_per_step(x)).floor() as u64;
            assert_eq!(raster.spike_count(), expected, "x={x}");
        }
    }

    #[test]
    fn out_of_range_pixels_are_rejected() {
        let cfg = EncoderConfig::default();
        assert!(matches!(
            encode(&[0.5, 1.2], &cfg),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            encode(&[-0.1], &cfg),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn non_binary_raster_is_rejected() {
        assert!(matches!(
            SpikeRaster::from_raw(2, 2, vec![0, 1, 2, 0]),
            Err(Error::Validation(_))
        ));
        assert!(SpikeRaster::from_raw(2, 2, vec![0, 1, 1, 0]).is_ok());
    }

    #[test]
    fn poisson_hits_target_rate_within_three_standard_errors() {
        let cfg = EncoderConfig {
            scheme: EncodingScheme::Poisson,
            steps: 100_000,
            seed: 7,
            ..EncoderConfig::default()
        };
        let x = 0.5;
        let p = cfg.rate_per_step(x);
        let raster = encode(&[x], &cfg).unwrap();
        let observed = raster.spike_count() as f64 / cfg.steps as f64;
        let se = (p * (1.0 - p) / cfg.steps as f64).sqrt();
        assert!(
            (observed - p).abs() <= 3.0 * se,
            "observed {observed}, target {p}, se {se}"
        );
    }

    #[test]
    fn poisson_is_reproducible_for_a_fixed_seed() {
        let cfg = EncoderConfig {
            scheme: EncodingScheme::Poisson,
            seed: 123,
            ..EncoderConfig::default()
        };
        let pixels = [0.1, 0.7, 0.4];
        assert_eq!(encode(&pixels, &cfg).unwrap(), encode(&pixels, &cfg).unwrap());
    }

    proptest! {
        /// Hotter pixels never spike less over the same window.
        #[test]
        fn spike_count_is_monotone_in_intensity(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let cfg = EncoderConfig::default();
            let raster = encode(&[lo, hi], &cfg).unwrap();
            prop_assert!(raster.spike_times(0).len() <= raster.spike_times(1).len());
        }

        /// The closed-form count holds for any window length.
        #[test]
        fn count_formula_holds(x in 0.0f64..=1.0, steps in 1usize..400) {
            let cfg = EncoderConfig { steps, ..EncoderConfig::default() };
            let raster = encode(&[x], &cfg).unwrap();
            let expected = (steps as f64 * cfg.rate_per_step(x)).floor() as u64;
            prop_assert_eq!(raster.spike_count(), expected);
        }
    }
}
