//! Single-neuron and single-synapse update rules.
//!
//! These are the scalar primitives everything else composes: the interspike
//! interval (ISI) counter, the Gaussian ISI-dependent synapse, the leaky
//! integrate-and-fire membrane update, and the output-layer readout.

use crate::error::{Error, Result};

/// Floor applied to output potentials before normalization so that a readout
/// with tiny-but-positive potentials still yields finite probabilities.
pub const EPSILON_GUARD: f64 = 1e-12;

/// Advance an ISI counter by one step: `phi_next = 1 + phi * (1 - s)`.
///
/// A spike resets the counter to 1; a silent step increments it. With the
/// counter initialized to 0 before the first step, `phi(t)` is the number of
/// steps since the most recent presynaptic spike (or since simulation start).
#[inline]
pub fn isi_update(phi: u32, spiked: bool) -> u32 {
    if spiked {
        1
    } else {
        1 + phi
    }
}

/// Gaussian modulation factor `exp(-(phi - mu)^2 / (2 sigma^2))`.
///
/// This is also the derivative of the effective weight with respect to the
/// height `w`, which is why it is exposed separately from [`synapse_weight`].
#[inline]
pub fn gauss_factor(mu: f64, sigma: f64, phi: u32) -> f64 {
    let d = phi as f64 - mu;
    (-(d * d) / (2.0 * sigma * sigma)).exp()
}

/// Effective weight of a Gaussian synapse at presynaptic ISI `phi`:
/// `w * exp(-(phi - mu)^2 / (2 sigma^2))`.
///
/// `|result| <= |w|`, with equality exactly when `phi == mu`.
#[inline]
pub fn synapse_weight(w: f64, mu: f64, sigma: f64, phi: u32) -> f64 {
    w * gauss_factor(mu, sigma, phi)
}

/// One synapse: a trainable height and a frozen Gaussian ISI response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSynapse {
    /// Trainable height (the only parameter updated during training).
    pub w: f64,
    /// Center of the ISI response, in timesteps. Frozen after initialization.
    pub mu: f64,
    /// Width of the ISI response, in timesteps. Frozen, strictly positive.
    pub sigma: f64,
}

impl GaussianSynapse {
    /// Effective weight seen by a presynaptic spike arriving with ISI `phi`.
    #[inline]
    pub fn effective_weight(&self, phi: u32) -> f64 {
        synapse_weight(self.w, self.mu, self.sigma, phi)
    }
}

/// Threshold/reset half of the LIF update, applied to an already-integrated
/// candidate potential. Returns `(v_next, spiked)`.
///
/// Output-layer neurons pass `spiking = false`: they never fire and keep
/// accumulating the candidate unchanged.
#[inline]
pub fn threshold_reset(candidate: f64, theta: f64, spiking: bool) -> (f64, bool) {
    if spiking && candidate >= theta {
        (0.0, true)
    } else {
        (candidate, false)
    }
}

/// One LIF membrane update: `candidate = beta * v + inflow`, spike iff
/// `candidate >= theta` (spiking mode), hard reset to 0 on spike.
///
/// The reset is part of the forward dynamics only; gradient computations use
/// the unrolled potential, which deliberately excludes reset terms.
#[inline]
pub fn membrane_step(v: f64, beta: f64, inflow: f64, theta: f64, spiking: bool) -> (f64, bool) {
    threshold_reset(beta * v + inflow, theta, spiking)
}

/// Normalize final output potentials into class probabilities.
///
/// Each potential is clamped to at least [`EPSILON_GUARD`] before the sum, so
/// tiny-but-positive readouts degrade towards the uniform distribution instead
/// of dividing by ~0. A readout where *no* class ended positive carries no
/// usable signal and is reported as [`Error::DegenerateOutput`].
pub fn output_probabilities(potentials: &[f64]) -> Result<Vec<f64>> {
    if potentials.is_empty() {
        return Err(Error::Validation("empty output potential vector".into()));
    }
    if !potentials.iter().any(|&v| v > 0.0) {
        return Err(Error::DegenerateOutput);
    }
    let clamped: Vec<f64> = potentials.iter().map(|&v| v.max(EPSILON_GUARD)).collect();
    let sum: f64 = clamped.iter().sum();
    Ok(clamped.into_iter().map(|v| v / sum).collect())
}
