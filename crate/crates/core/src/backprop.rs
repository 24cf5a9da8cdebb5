//! Gradient engine: backpropagation through time over the unrolled potential,
//! with selective suppression of updates that would shorten postsynaptic
//! interspike intervals.
//!
//! Conventions. Layers are indexed with the input as layer 0; bank b connects
//! layer b to layer b+1. With gamma_j(t) = eps_j(t) * surrogate(v_j(t)) for
//! hidden layers and gamma_h(t) = [t == T] * dL/dv_h(T) for the output layer,
//! all three gradient quantities reduce to suffix sums of gamma:
//!
//!   G_h(t)      = sum_{k>t} gamma_h(k) beta^(k-1-t)        (reverse Horner)
//!   grad_w_ij   = sum_{k : s_i(k)=1} (dtheta/dw)_ij(k) G_j(k)
//!   isi_grad_j(t) = s_j(t) * sum_h (dtheta/dphi)_jh(t) G_h(t)
//!   eps_j(t)    = sum_h theta_jh(t) G_h(t)  -  phi_j(t) * R_j(m*)
//!
//! where m* is the first spike of j after t and R_j(m) is the suppressed ISI
//! gradient at m. The hard membrane reset and the spike variables inside the
//! ISI product are treated as constants, so eps only flows through the direct
//! weight term and the ISI chain of the *next* spike.

use crate::bank::SynapseBank;
use crate::dynamics::{GaussianSynapse, EPSILON_GUARD};
use crate::error::{Error, Result};
use crate::network::{ForwardResult, LayerTrace, NetCaches, Network, Variant};

/// Cross-entropy of the normalized output distribution against a label.
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].ln()
}

/// Largest magnitude of a single loss-seed component. The normalized-ratio
/// loss has an unbounded derivative as the labeled potential approaches the
/// guard floor; clipping keeps one near-floor sample from dominating a batch
/// mean and swamping the optimizer's running moments.
pub const LOSS_SEED_CLIP: f64 = 1e3;

/// dL/dv(T) for cross-entropy over guard-clamped, normalized final
/// potentials. Non-labeled components at or below the guard are clamped
/// constants, so their seed entry is zero — pushing them further down is
/// useless. The labeled component always keeps its restoring gradient
/// (evaluated at the clamped value) so a floored correct class recovers
/// instead of freezing; without this, descent drives every output below the
/// floor and the sample becomes permanently untrainable. All entries are
/// clipped to +/-[`LOSS_SEED_CLIP`]. Errs when every potential is
/// nonpositive.
pub fn cross_entropy_potential_seed(potentials: &[f64], label: usize) -> Result<Vec<f64>> {
    if label >= potentials.len() {
        return Err(Error::Validation(format!(
            "label {label} out of range for {} outputs",
            potentials.len()
        )));
    }
    if !potentials.iter().all(|v| v.is_finite()) {
        return Err(Error::Validation(
            "non-finite output potential".to_string(),
        ));
    }
    if potentials.iter().all(|&v| v <= 0.0) {
        return Err(Error::DegenerateOutput);
    }
    let clamped: Vec<f64> = potentials.iter().map(|&v| v.max(EPSILON_GUARD)).collect();
    let total: f64 = clamped.iter().sum();
    let seed = potentials
        .iter()
        .enumerate()
        .map(|(h, &v)| {
            if h == label {
                (1.0 / total - 1.0 / clamped[h]).clamp(-LOSS_SEED_CLIP, LOSS_SEED_CLIP)
            } else if v > EPSILON_GUARD {
                (1.0 / total).min(LOSS_SEED_CLIP)
            } else {
                0.0
            }
        })
        .collect();
    Ok(seed)
}

/// Which gradient terms get zeroed based on the sign of the ISI gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuppressionMode {
    /// Zero d(theta)/d(phi) wherever the loss prefers a shorter ISI
    /// (isi_grad >= 0 means increasing phi increases the loss).
    Imsnn,
    /// Inverted control: zero it wherever the loss prefers a longer ISI.
    ImsnnC,
    /// Conventional fixed-weight backward: no ISI dependence at all.
    None,
}

impl From<Variant> for SuppressionMode {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Imsnn => SuppressionMode::Imsnn,
            Variant::ImsnnC => SuppressionMode::ImsnnC,
            Variant::Snn => SuppressionMode::None,
        }
    }
}

/// Fast-sigmoid spike surrogate: d s / d v = 1 / (1 + slope * |v - theta|)^2.
#[inline]
pub fn surrogate_spike_derivative(v: f64, theta: f64, slope: f64) -> f64 {
    let d = 1.0 + slope * (v - theta).abs();
    1.0 / (d * d)
}

/// d(effective weight)/d(height): the Gaussian factor itself.
#[inline]
pub fn dtheta_dw(mu: f64, sigma: f64, phi: u32) -> f64 {
    crate::dynamics::gauss_factor(mu, sigma, phi)
}

/// d(effective weight)/d(ISI), gated by the suppression rule.
///
/// The base derivative is `-(phi - mu) * theta(phi) / sigma^2`. Under
/// [`SuppressionMode::Imsnn`] it is zeroed when `isi_grad >= 0`, under
/// [`SuppressionMode::ImsnnC`] when `isi_grad < 0`; otherwise the base value
/// passes through.
#[inline]
pub fn dtheta_dphi(syn: &GaussianSynapse, phi: u32, isi_grad: f64, mode: SuppressionMode) -> f64 {
    let suppressed = match mode {
        SuppressionMode::Imsnn => isi_grad >= 0.0,
        SuppressionMode::ImsnnC => isi_grad < 0.0,
        SuppressionMode::None => false,
    };
    if suppressed {
        0.0
    } else {
        let d = phi as f64 - syn.mu;
        -d * syn.effective_weight(phi) / (syn.sigma * syn.sigma)
    }
}

/// d(phi_j(m))/d(s_j(t)) for m > t: `-phi_j(t)` carried through the spike-free
/// gap, zero as soon as any intervening step spikes.
///
/// `gap` holds s_j(t+1), ..., s_j(m-1); spikes inside the product are treated
/// as constants (hard gating), matching the unrolled ISI recursion.
#[inline]
pub fn dphi_ds(phi_t: u32, gap: &[u8]) -> f64 {
    if gap.iter().any(|&s| s != 0) {
        0.0
    } else {
        -(phi_t as f64)
    }
}

/// Literal d v_h(k) / d s_j(t): the direct injection term plus the ISI chain
/// through every later presynaptic spike of j in (t, k).
///
/// `isi_grad_j[m-1]` must hold j's ISI gradient at step m, because the
/// suppression test is evaluated before this derivative is used. Pass
/// [`SuppressionMode::None`] for the fixed-weight rule (`beta^(k-1-t) * w`).
/// Slow by construction; the engine never calls it, tests and the reference
/// implementation do.
pub fn potential_derivative(
    syn: &GaussianSynapse,
    pre: &LayerTrace,
    j: usize,
    t: usize,
    k: usize,
    beta: f64,
    mode: SuppressionMode,
    isi_grad_j: &[f64],
) -> f64 {
    assert!(t >= 1 && t < k && k <= pre.steps, "need 1 <= t < k <= T");
    if mode == SuppressionMode::None {
        return beta.powi((k - 1 - t) as i32) * syn.w;
    }
    let mut total = beta.powi((k - 1 - t) as i32) * syn.effective_weight(pre.isi(t, j));
    for m in (t + 1)..k {
        if !pre.spike(m, j) {
            continue;
        }
        let gap: Vec<u8> = ((t + 1)..m).map(|r| pre.spike(r, j) as u8).collect();
        let rho = dtheta_dphi(syn, pre.isi(m, j), isi_grad_j[m - 1], mode);
        total += beta.powi((k - 1 - m) as i32) * rho * dphi_ds(pre.isi(t, j), &gap);
    }
    total
}

/// Everything the backward pass produces for one presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardState {
    /// Height gradients, one vec per bank, same layout as the bank's weights.
    pub grad_w: Vec<Vec<f64>>,
    /// eps_j(t) per hidden layer (step-major, `[t-1]*n + j`), ordered first
    /// hidden layer first. Input and output layers carry no eps.
    pub epsilon: Vec<Vec<f64>>,
    /// ISI gradients per hidden layer, same shape as `epsilon`.
    pub isi_grad: Vec<Vec<f64>>,
    /// Spiking (neuron, step) sites whose ISI-chain term was zeroed.
    pub suppressed_sites: u64,
    /// Spiking sites examined by the suppression test.
    pub spiking_sites: u64,
}

/// Suffix accumulator `G_h(t) = sum_{k>t} gamma_h(k) beta^(k-1-t)`, stored
/// step-major with rows t = 0..=T (row T is all zeros).
fn gamma_suffix(gamma: &[f64], n: usize, steps: usize, beta: f64) -> Vec<f64> {
    let mut g = vec![0.0; (steps + 1) * n];
    for t in (0..steps).rev() {
        let (head, tail) = g.split_at_mut((t + 1) * n);
        let row_t = &mut head[t * n..];
        let row_next = &tail[..n];
        let gamma_next = &gamma[t * n..(t + 1) * n];
        for h in 0..n {
            row_t[h] = beta * row_next[h] + gamma_next[h];
        }
    }
    g
}

/// Run the reverse-time gradient engine over recorded traces.
///
/// `loss_seed` is dL/dv(T) for the output layer. `mode` must match the
/// forward law that produced `fwd` ([`SuppressionMode::None`] iff the forward
/// pass ran fixed weights).
pub fn backward_pass(
    net: &Network,
    fwd: &ForwardResult,
    loss_seed: &[f64],
    mode: SuppressionMode,
    beta: f64,
    theta: f64,
    slope: f64,
    caches: &mut NetCaches,
) -> BackwardState {
    let n_layers = net.layer_sizes.len();
    let n_out = *net.layer_sizes.last().unwrap();
    assert_eq!(loss_seed.len(), n_out, "loss seed must cover the output layer");
    let steps = fwd.traces[0].steps;

    let mut grad_w: Vec<Vec<f64>> = net
        .banks
        .iter()
        .map(|b| vec![0.0; b.weights().len()])
        .collect();
    let mut epsilon: Vec<Vec<f64>> = Vec::new();
    let mut isi_grad: Vec<Vec<f64>> = Vec::new();
    let mut suppressed_sites = 0u64;
    let mut spiking_sites = 0u64;

    // gamma of the layer downstream of the bank being processed.
    let mut gamma = vec![0.0; steps * n_out];
    gamma[(steps - 1) * n_out..].copy_from_slice(loss_seed);

    for b in (0..net.banks.len()).rev() {
        let bank = &net.banks[b];
        let (n_pre, n_post) = (bank.n_pre(), bank.n_post());
        let pre = &fwd.traces[b];
        let g = gamma_suffix(&gamma, n_post, steps, beta);

        // Height gradients: sparse over presynaptic spikes.
        let grads = &mut grad_w[b];
        match bank {
            SynapseBank::Dense(_) => {
                for i in 0..n_pre {
                    let base = i * n_post;
                    for t in 1..=steps {
                        if !pre.spike(t, i) {
                            continue;
                        }
                        let g_row = &g[t * n_post..(t + 1) * n_post];
                        if mode == SuppressionMode::None {
                            for h in 0..n_post {
                                grads[base + h] += g_row[h];
                            }
                        } else {
                            let row = caches.banks[b].row(bank, pre.isi(t, i));
                            for h in 0..n_post {
                                grads[base + h] += row[base + h] * g_row[h];
                            }
                        }
                    }
                }
            }
            SynapseBank::Conv(conv) => {
                for i in 0..n_pre {
                    for t in 1..=steps {
                        if !pre.spike(t, i) {
                            continue;
                        }
                        let g_row = &g[t * n_post..(t + 1) * n_post];
                        if mode == SuppressionMode::None {
                            conv.for_each_out(i, |post, w_idx, _| {
                                grads[w_idx] += g_row[post];
                            });
                        } else {
                            let row = caches.banks[b].row(bank, pre.isi(t, i));
                            conv.for_each_out(i, |post, w_idx, ms_idx| {
                                grads[w_idx] += row[ms_idx] * g_row[post];
                            });
                        }
                    }
                }
            }
        }

        // The input layer receives no credit assignment; stop here.
        if b == 0 {
            break;
        }

        // eps / ISI gradient / gamma for the presynaptic (hidden) layer.
        let mut eps = vec![0.0; steps * n_pre];
        let mut nphi = vec![0.0; steps * n_pre];
        for j in 0..n_pre {
            // One sweep over (t, h): the direct term A_j(t) and, at spiking
            // steps, the unsuppressed ISI gradient.
            for t in 1..=steps {
                let phi = pre.isi(t, j);
                let g_row = &g[t * n_post..(t + 1) * n_post];
                let mut direct = 0.0;
                let mut grad_phi = 0.0;
                let spiked = pre.spike(t, j);
                match bank {
                    SynapseBank::Dense(dense) => {
                        let base = j * n_post;
                        if mode == SuppressionMode::None {
                            for h in 0..n_post {
                                direct += dense.w[base + h] * g_row[h];
                            }
                        } else {
                            let row = caches.banks[b].row(bank, phi);
                            for h in 0..n_post {
                                let theta_w = dense.w[base + h] * row[base + h];
                                direct += theta_w * g_row[h];
                                if spiked {
                                    let d = phi as f64 - dense.mu[base + h];
                                    let s2 = dense.sigma[base + h] * dense.sigma[base + h];
                                    grad_phi += -d * theta_w / s2 * g_row[h];
                                }
                            }
                        }
                    }
                    SynapseBank::Conv(conv) => {
                        if mode == SuppressionMode::None {
                            conv.for_each_out(j, |post, w_idx, _| {
                                direct += conv.w[w_idx] * g_row[post];
                            });
                        } else {
                            let row = caches.banks[b].row(bank, phi);
                            conv.for_each_out(j, |post, w_idx, ms_idx| {
                                let theta_w = conv.w[w_idx] * row[ms_idx];
                                direct += theta_w * g_row[post];
                                if spiked {
                                    let d = phi as f64 - conv.mu[ms_idx];
                                    let s2 = conv.sigma[ms_idx] * conv.sigma[ms_idx];
                                    grad_phi += -d * theta_w / s2 * g_row[post];
                                }
                            });
                        }
                    }
                }
                eps[(t - 1) * n_pre + j] = direct;
                if spiked && mode != SuppressionMode::None {
                    nphi[(t - 1) * n_pre + j] = grad_phi;
                }
            }

            // Apply the ISI chain: the only surviving term couples each step
            // to the *next* spike of j (any later spike zeroes the product).
            if mode != SuppressionMode::None {
                let mut next_spike: Option<usize> = None;
                for t in (1..=steps).rev() {
                    if let Some(m) = next_spike {
                        let r = nphi[(m - 1) * n_pre + j];
                        let gated = match mode {
                            SuppressionMode::Imsnn => {
                                if r < 0.0 {
                                    r
                                } else {
                                    0.0
                                }
                            }
                            SuppressionMode::ImsnnC => {
                                if r >= 0.0 {
                                    r
                                } else {
                                    0.0
                                }
                            }
                            SuppressionMode::None => unreachable!(),
                        };
                        eps[(t - 1) * n_pre + j] -= pre.isi(t, j) as f64 * gated;
                    }
                    if pre.spike(t, j) {
                        next_spike = Some(t);
                    }
                }
                for m in 1..=steps {
                    if pre.spike(m, j) {
                        spiking_sites += 1;
                        let r = nphi[(m - 1) * n_pre + j];
                        let suppressed = match mode {
                            SuppressionMode::Imsnn => r >= 0.0,
                            SuppressionMode::ImsnnC => r < 0.0,
                            SuppressionMode::None => unreachable!(),
                        };
                        if suppressed {
                            suppressed_sites += 1;
                        }
                    }
                }
            }
        }

        // gamma for the next (upstream) bank: eps * surrogate at the
        // pre-reset potential.
        let mut gamma_pre = vec![0.0; steps * n_pre];
        for t in 1..=steps {
            for j in 0..n_pre {
                let idx = (t - 1) * n_pre + j;
                gamma_pre[idx] =
                    eps[idx] * surrogate_spike_derivative(pre.potential(t, j), theta, slope);
            }
        }
        epsilon.push(eps);
        isi_grad.push(nphi);
        gamma = gamma_pre;
    }

    // Stored top-down above; flip to network order (first hidden first).
    epsilon.reverse();
    isi_grad.reverse();
    debug_assert_eq!(epsilon.len(), n_layers.saturating_sub(2));

    BackwardState {
        grad_w,
        epsilon,
        isi_grad,
        suppressed_sites,
        spiking_sites,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surrogate_peaks_at_threshold_and_matches_frozen_value() {
        assert_eq!(surrogate_spike_derivative(1.0, 1.0, 10.0), 1.0);
        // Exactly representable offsets give exact values: |v - theta| = 0.5
        // makes the denominator (1 + 5)^2 = 36.
        assert_eq!(surrogate_spike_derivative(1.5, 1.0, 10.0), 1.0 / 36.0);
        assert_eq!(surrogate_spike_derivative(0.5, 1.0, 10.0), 1.0 / 36.0);
        assert!((surrogate_spike_derivative(1.1, 1.0, 10.0) - 0.25).abs() < 1e-15);
        assert!((surrogate_spike_derivative(0.9, 1.0, 10.0) - 0.25).abs() < 1e-15);
        // Monotone decay away from the threshold.
        assert!(
            surrogate_spike_derivative(1.5, 1.0, 10.0)
                < surrogate_spike_derivative(1.2, 1.0, 10.0)
        );
    }

    #[test]
    fn weight_sensitivity_is_the_gauss_factor() {
        assert_eq!(dtheta_dw(10.0, 5.0, 15), 0.6065306597126334);
        assert_eq!(dtheta_dw(10.0, 5.0, 10), 1.0);
        // Equals effective weight / height whenever the height is nonzero.
        let syn = GaussianSynapse {
            w: -0.37,
            mu: 8.0,
            sigma: 3.0,
        };
        for phi in 1..40u32 {
            let ratio = syn.effective_weight(phi) / syn.w;
            assert!((dtheta_dw(syn.mu, syn.sigma, phi) - ratio).abs() < 1e-15);
        }
    }

    #[test]
    fn isi_sensitivity_matches_frozen_value_and_respects_gating() {
        let syn = GaussianSynapse {
            w: 0.6,
            mu: 10.0,
            sigma: 5.0,
        };
        let base = dtheta_dphi(&syn, 15, -1.0, SuppressionMode::Imsnn);
        assert_eq!(base, -0.07278367916551601);
        // imsnn blocks nonnegative ISI gradients, the control blocks negative
        // ones, the conventional mode never blocks.
        assert_eq!(dtheta_dphi(&syn, 15, 0.0, SuppressionMode::Imsnn), 0.0);
        assert_eq!(dtheta_dphi(&syn, 15, 2.0, SuppressionMode::Imsnn), 0.0);
        assert_eq!(dtheta_dphi(&syn, 15, -1.0, SuppressionMode::ImsnnC), 0.0);
        assert_eq!(dtheta_dphi(&syn, 15, 2.0, SuppressionMode::ImsnnC), base);
        assert_eq!(dtheta_dphi(&syn, 15, 2.0, SuppressionMode::None), base);
        // At the center the base derivative itself vanishes.
        assert_eq!(dtheta_dphi(&syn, 10, -1.0, SuppressionMode::Imsnn), 0.0);
    }

    #[test]
    fn isi_chain_factor_counts_the_gap() {
        assert_eq!(dphi_ds(4, &[]), -4.0);
        assert_eq!(dphi_ds(4, &[0, 0, 0]), -4.0);
        assert_eq!(dphi_ds(4, &[0, 1, 0]), 0.0);
        assert_eq!(dphi_ds(0, &[]), 0.0);
    }

    /// Finite-difference check of dphi_ds on the real-relaxed ISI recursion
    /// phi(t+1) = 1 + phi(t)(1 - s(t)) with the spike at t perturbed.
    #[test]
    fn isi_chain_factor_matches_finite_differences() {
        let relaxed = |phi_t: f64, s_t: f64, gap: &[u8]| -> f64 {
            let mut phi = 1.0 + phi_t * (1.0 - s_t);
            for &s in gap {
                phi = 1.0 + phi * (1.0 - s as f64);
            }
            phi
        };
        for gap in [&[][..], &[0, 0][..], &[0, 1, 0][..]] {
            let phi_t = 4.0;
            let h = 1e-6;
            let fd = (relaxed(phi_t, h, gap) - relaxed(phi_t, -h, gap)) / (2.0 * h);
            assert!(
                (fd - dphi_ds(4, gap)).abs() < 1e-6,
                "gap {gap:?}: fd {fd}"
            );
        }
    }

    #[test]
    fn potential_derivative_reduces_to_direct_term_for_adjacent_steps() {
        // Single neuron, spike at t = 3, T = 6.
        let mut pre = LayerTrace {
            n: 1,
            steps: 6,
            spikes: vec![0, 0, 1, 0, 0, 0],
            potentials: vec![0.0; 6],
            isis: vec![1, 2, 3, 1, 2, 3],
        };
        pre.potentials.iter_mut().for_each(|v| *v = 0.5);
        let syn = GaussianSynapse {
            w: 0.6,
            mu: 3.0,
            sigma: 2.0,
        };
        let zeros = vec![0.0; 6];
        // k = t+1: no intermediate spikes possible, pure theta term.
        let pd = potential_derivative(&syn, &pre, 0, 2, 3, 0.9, SuppressionMode::ImsnnC, &zeros);
        assert_eq!(pd, syn.effective_weight(2));
        // Fixed-weight mode ignores the Gaussian entirely.
        let pd = potential_derivative(&syn, &pre, 0, 2, 5, 0.9, SuppressionMode::None, &zeros);
        assert_eq!(pd, 0.9f64.powi(2) * 0.6);
    }

    #[test]
    fn potential_derivative_adds_isi_chain_through_the_next_spike() {
        let pre = LayerTrace {
            n: 1,
            steps: 6,
            spikes: vec![0, 0, 1, 0, 0, 0],
            potentials: vec![0.5; 6],
            isis: vec![1, 2, 3, 1, 2, 3],
        };
        let syn = GaussianSynapse {
            w: 0.6,
            mu: 3.0,
            sigma: 2.0,
        };
        let beta = 0.9;
        // ISI gradient at the spike step (m = 3) negative: imsnn keeps it.
        let mut nphi = vec![0.0; 6];
        nphi[2] = -1.0;
        let pd = potential_derivative(&syn, &pre, 0, 1, 5, beta, SuppressionMode::Imsnn, &nphi);
        let direct = beta.powi(3) * syn.effective_weight(1);
        let rho = dtheta_dphi(&syn, 3, -1.0, SuppressionMode::Imsnn);
        let chain = beta.powi(1) * rho * dphi_ds(1, &[0]);
        assert!((pd - (direct + chain)).abs() < 1e-15);
        // With a nonnegative ISI gradient the chain is suppressed.
        nphi[2] = 0.5;
        let pd = potential_derivative(&syn, &pre, 0, 1, 5, beta, SuppressionMode::Imsnn, &nphi);
        assert!((pd - direct).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_matches_frozen_value() {
        assert_eq!(cross_entropy(&[0.5, 0.25, 0.25], 0), 0.6931471805599453);
    }

    #[test]
    fn loss_seed_matches_hand_computed_values_and_finite_differences() {
        let v = [2.0, 1.0, 1.0];
        let seed = cross_entropy_potential_seed(&v, 0).unwrap();
        assert_eq!(seed, vec![-0.25, 0.25, 0.25]);

        let loss = |v: &[f64], y: usize| {
            let p = crate::dynamics::output_probabilities(v).unwrap();
            cross_entropy(&p, y)
        };
        let h = 1e-7;
        for i in 0..3 {
            let mut plus = v.to_vec();
            let mut minus = v.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let fd = (loss(&plus, 0) - loss(&minus, 0)) / (2.0 * h);
            assert!((fd - seed[i]).abs() < 1e-7, "i={i}: fd {fd} vs {}", seed[i]);
        }
    }

    #[test]
    fn loss_seed_zeroes_clamped_components_and_rejects_degenerate_outputs() {
        let seed = cross_entropy_potential_seed(&[1.0, 0.0, -0.5], 0).unwrap();
        assert_eq!(seed[1], 0.0);
        assert_eq!(seed[2], 0.0);
        assert!(seed[0].abs() < 1e-11);
        assert!(matches!(
            cross_entropy_potential_seed(&[0.0, -1.0], 0),
            Err(crate::error::Error::DegenerateOutput)
        ));
        assert!(cross_entropy_potential_seed(&[1.0, 2.0], 5).is_err());
    }

    #[test]
    fn loss_seed_keeps_bounded_restoring_gradient_on_floored_label() {
        // Labeled component below the floor: clipped restoring pull, never a
        // frozen zero (a zero here would make the sample permanently
        // untrainable once all outputs sink).
        let seed = cross_entropy_potential_seed(&[-1.0, 5.0], 0).unwrap();
        assert_eq!(seed[0], -LOSS_SEED_CLIP);
        assert!((seed[1] - 0.2).abs() < 1e-9);

        // Tiny but still-live labeled component: same clip applies, so the
        // seed is continuous across the floor.
        let seed = cross_entropy_potential_seed(&[1e-6, 1.0], 0).unwrap();
        assert_eq!(seed[0], -LOSS_SEED_CLIP);

        // Far from the floor the clip is inactive and the exact analytic
        // gradient comes through (the finite-difference test above pins the
        // smooth region).
        let seed = cross_entropy_potential_seed(&[2.0, 1.0, 1.0], 0).unwrap();
        assert_eq!(seed, vec![-0.25, 0.25, 0.25]);
    }

    #[test]
    fn suffix_accumulator_matches_explicit_powers() {
        let steps = 5;
        let n = 2;
        let beta = 0.9;
        let gamma: Vec<f64> = (0..steps * n).map(|i| (i as f64 * 0.37).sin()).collect();
        let g = gamma_suffix(&gamma, n, steps, beta);
        for t in 0..=steps {
            for h in 0..n {
                let mut direct = 0.0;
                for k in (t + 1)..=steps {
                    direct += gamma[(k - 1) * n + h] * beta.powi((k - 1 - t) as i32);
                }
                assert!(
                    (g[t * n + h] - direct).abs() < 1e-12,
                    "t={t} h={h}: {} vs {direct}",
                    g[t * n + h]
                );
            }
        }
    }
}
