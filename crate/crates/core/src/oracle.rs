//! Reference implementations and diagnostic checks for the gradient engine.
//!
//! [`direct_sum_backward`] recomputes every gradient as literal nested sums
//! over neurons, steps, and explicit decay powers — no suffix accumulators,
//! no factored recursions, independent connectivity arithmetic. It is
//! deliberately slow (guarded below) and exists so the production engine can
//! be checked against it element-by-element on small instances.
//!
//! [`fd_check_last_layer`] validates the analytic loss gradient of the final
//! synapse bank against central finite differences; final-bank heights feed
//! only the non-spiking output layer, so that slice of the loss surface is
//! smooth and the comparison is exact up to truncation error.

use crate::backprop::{
    self, cross_entropy, cross_entropy_potential_seed, BackwardState, SuppressionMode,
};
use crate::bank::{DenseBank, SynapseBank};
use crate::dynamics::GaussianSynapse;
use crate::encoding::SpikeRaster;
use crate::error::{Error, Result};
use crate::network::{ForwardResult, InitConfig, Network, Variant};
use rand::distributions::{Bernoulli, Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::Serialize;

/// The reference backward is O(neurons * steps^3); refuse instances where
/// that stops being instant.
pub const REFERENCE_MAX_NON_INPUT_NEURONS: usize = 100;
pub const REFERENCE_MAX_STEPS: usize = 25;

/// One synapse as seen from its presynaptic neuron.
struct Connection {
    post: usize,
    w_idx: usize,
    syn: GaussianSynapse,
}

/// Per-presynaptic-neuron connection lists, rebuilt from first principles
/// (the engine's iteration helpers are not reused here).
fn connections(bank: &SynapseBank) -> Vec<Vec<Connection>> {
    match bank {
        SynapseBank::Dense(d) => (0..d.n_pre)
            .map(|j| {
                (0..d.n_post)
                    .map(|h| {
                        let idx = j * d.n_post + h;
                        Connection {
                            post: h,
                            w_idx: idx,
                            syn: GaussianSynapse {
                                w: d.w[idx],
                                mu: d.mu[idx],
                                sigma: d.sigma[idx],
                            },
                        }
                    })
                    .collect()
            })
            .collect(),
        SynapseBank::Conv(c) => {
            let (in_c, in_h, in_w) = c.in_shape;
            let (out_c, out_h, out_w) = c.out_shape;
            let k = c.kernel;
            let mut lists: Vec<Vec<Connection>> = (0..in_c * in_h * in_w).map(|_| Vec::new()).collect();
            for oc in 0..out_c {
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let post = (oc * out_h + oy) * out_w + ox;
                        for ic in 0..in_c {
                            let ms = oc * in_c + ic;
                            for ky in 0..k {
                                for kx in 0..k {
                                    let pre = (ic * in_h + oy + ky) * in_w + (ox + kx);
                                    let w_idx = (ms * k + ky) * k + kx;
                                    lists[pre].push(Connection {
                                        post,
                                        w_idx,
                                        syn: GaussianSynapse {
                                            w: c.w[w_idx],
                                            mu: c.mu[ms],
                                            sigma: c.sigma[ms],
                                        },
                                    });
                                }
                            }
                        }
                    }
                }
            }
            lists
        }
    }
}

/// Literal nested-sum backward pass. Produces the same quantities as
/// [`backprop::backward_pass`] with completely independent arithmetic.
///
/// Panics when the instance exceeds the cost guard; use small nets.
pub fn direct_sum_backward(
    net: &Network,
    fwd: &ForwardResult,
    loss_seed: &[f64],
    mode: SuppressionMode,
    beta: f64,
    theta: f64,
    slope: f64,
) -> BackwardState {
    let non_input: usize = net.layer_sizes[1..].iter().sum();
    assert!(
        non_input <= REFERENCE_MAX_NON_INPUT_NEURONS,
        "reference backward refuses {non_input} non-input neurons (limit {REFERENCE_MAX_NON_INPUT_NEURONS})"
    );
    let steps = fwd.traces[0].steps;
    assert!(
        steps <= REFERENCE_MAX_STEPS,
        "reference backward refuses {steps} steps (limit {REFERENCE_MAX_STEPS})"
    );
    let n_out = *net.layer_sizes.last().unwrap();
    assert_eq!(loss_seed.len(), n_out);

    let mut grad_w: Vec<Vec<f64>> = net
        .banks
        .iter()
        .map(|b| vec![0.0; b.weights().len()])
        .collect();
    let mut epsilon: Vec<Vec<f64>> = Vec::new();
    let mut isi_grad: Vec<Vec<f64>> = Vec::new();
    let mut suppressed_sites = 0u64;
    let mut spiking_sites = 0u64;

    // gamma of the layer downstream of the current bank, step-major.
    let mut gamma = vec![0.0; steps * n_out];
    gamma[(steps - 1) * n_out..].copy_from_slice(loss_seed);

    for b in (0..net.banks.len()).rev() {
        let bank = &net.banks[b];
        let n_pre = bank.n_pre();
        let n_post = bank.n_post();
        let pre = &fwd.traces[b];
        let conns = connections(bank);

        // Height gradients: sum over downstream gamma steps, then over every
        // earlier presynaptic spike, with explicit decay powers.
        for (j, list) in conns.iter().enumerate() {
            for conn in list {
                let mut total = 0.0;
                for m in 1..=steps {
                    let gm = gamma[(m - 1) * n_post + conn.post];
                    for k in 1..m {
                        if !pre.spike(k, j) {
                            continue;
                        }
                        let factor = if mode == SuppressionMode::None {
                            1.0
                        } else {
                            crate::dynamics::gauss_factor(conn.syn.mu, conn.syn.sigma, pre.isi(k, j))
                        };
                        total += gm * beta.powi((m - 1 - k) as i32) * factor;
                    }
                }
                grad_w[b][conn.w_idx] += total;
            }
        }

        if b == 0 {
            break;
        }

        // Raw ISI gradients at spiking steps: literal double sum over
        // synapses and downstream steps.
        let mut nphi = vec![0.0; steps * n_pre];
        if mode != SuppressionMode::None {
            for (j, list) in conns.iter().enumerate() {
                for m in 1..=steps {
                    if !pre.spike(m, j) {
                        continue;
                    }
                    let phi = pre.isi(m, j);
                    let mut total = 0.0;
                    for conn in list {
                        let base = -(phi as f64 - conn.syn.mu) * conn.syn.effective_weight(phi)
                            / (conn.syn.sigma * conn.syn.sigma);
                        for k in (m + 1)..=steps {
                            total += base
                                * gamma[(k - 1) * n_post + conn.post]
                                * beta.powi((k - 1 - m) as i32);
                        }
                    }
                    nphi[(m - 1) * n_pre + j] = total;
                    spiking_sites += 1;
                    let suppressed = match mode {
                        SuppressionMode::Imsnn => total >= 0.0,
                        SuppressionMode::ImsnnC => total < 0.0,
                        SuppressionMode::None => unreachable!(),
                    };
                    if suppressed {
                        suppressed_sites += 1;
                    }
                }
            }
        }

        // eps via the literal potential derivative (direct term plus gated
        // ISI chain), then gamma for the next bank up.
        let mut eps = vec![0.0; steps * n_pre];
        for (j, list) in conns.iter().enumerate() {
            let nphi_j: Vec<f64> = (1..=steps).map(|m| nphi[(m - 1) * n_pre + j]).collect();
            for t in 1..=steps {
                let mut total = 0.0;
                for conn in list {
                    for k in (t + 1)..=steps {
                        let gk = gamma[(k - 1) * n_post + conn.post];
                        total += gk
                            * backprop::potential_derivative(
                                &conn.syn, pre, j, t, k, beta, mode, &nphi_j,
                            );
                    }
                }
                eps[(t - 1) * n_pre + j] = total;
            }
        }
        let mut gamma_pre = vec![0.0; steps * n_pre];
        for idx in 0..steps * n_pre {
            let t = idx / n_pre + 1;
            let j = idx % n_pre;
            gamma_pre[idx] = eps[idx]
                * backprop::surrogate_spike_derivative(pre.potential(t, j), theta, slope);
        }
        epsilon.push(eps);
        isi_grad.push(nphi);
        gamma = gamma_pre;
    }

    epsilon.reverse();
    isi_grad.reverse();
    BackwardState {
        grad_w,
        epsilon,
        isi_grad,
        suppressed_sites,
        spiking_sites,
    }
}

/// Relative-error tolerance for the finite-difference check.
pub const GRADCHECK_REL_TOL: f64 = 1e-6;
/// Components where both gradients sit below this magnitude are compared
/// absolutely instead of relatively.
pub const GRADCHECK_ABS_FLOOR: f64 = 1e-9;

/// Outcome of one finite-difference validation run.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub architecture: String,
    pub variant: String,
    pub step: f64,
    /// Weights compared relatively (magnitude above the floor).
    pub n_checked: usize,
    /// Weights where both sides were below the floor (compared absolutely).
    pub n_below_floor: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub max_abs_err: f64,
    /// True if any perturbed run changed a spike anywhere — that would make
    /// the finite difference meaningless and should be impossible for
    /// final-bank heights.
    pub raster_changed: bool,
    /// Step sizes far from ~1e-6 trade truncation error against roundoff.
    pub truncation_risk: bool,
    pub passed: bool,
}

/// Central finite-difference check of the cross-entropy gradient with
/// respect to every height in the final synapse bank.
pub fn fd_check_last_layer(
    net: &Network,
    raster: &SpikeRaster,
    label: usize,
    beta: f64,
    theta: f64,
    slope: f64,
    step: f64,
) -> Result<GradCheckReport> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Validation(format!("invalid step {step}")));
    }
    let mode = SuppressionMode::from(net.variant);
    let mut caches = net.make_caches(raster.steps as u32);
    let fwd = net.forward_cached(raster, beta, theta, &mut caches)?;
    let seed = cross_entropy_potential_seed(fwd.output_potentials(), label)?;
    let analytic = backprop::backward_pass(net, &fwd, &seed, mode, beta, theta, slope, &mut caches)
        .grad_w
        .pop()
        .unwrap();
    let base_spikes: Vec<u64> = fwd.traces.iter().map(|t| t.total_spikes()).collect();

    let mut probe = net.clone();
    let last = probe.banks.len() - 1;
    let mut max_rel_err = 0.0f64;
    let mut sum_rel_err = 0.0f64;
    let mut max_abs_err = 0.0f64;
    let mut n_checked = 0usize;
    let mut n_below_floor = 0usize;
    let mut raster_changed = false;

    for idx in 0..analytic.len() {
        let original = probe.banks[last].weights()[idx];
        let mut loss_at = |w: f64| -> Result<f64> {
            probe.banks[last].weights_mut()[idx] = w;
            let run = probe.forward_cached(raster, beta, theta, &mut caches)?;
            for (layer, trace) in run.traces.iter().enumerate() {
                if trace.total_spikes() != base_spikes[layer] {
                    raster_changed = true;
                }
            }
            let probs = crate::dynamics::output_probabilities(run.output_potentials())?;
            Ok(cross_entropy(&probs, label))
        };
        let plus = loss_at(original + step);
        let minus = loss_at(original - step);
        probe.banks[last].weights_mut()[idx] = original;
        let fd = (plus? - minus?) / (2.0 * step);

        let a = analytic[idx];
        let abs_err = (a - fd).abs();
        max_abs_err = max_abs_err.max(abs_err);
        let denom = a.abs().max(fd.abs());
        if denom < GRADCHECK_ABS_FLOOR {
            n_below_floor += 1;
        } else {
            let rel = abs_err / denom;
            max_rel_err = max_rel_err.max(rel);
            sum_rel_err += rel;
            n_checked += 1;
        }
    }

    let truncation_risk = !(1e-7..=1e-5).contains(&step);
    Ok(GradCheckReport {
        architecture: net.architecture.clone(),
        variant: net.variant.as_str().to_string(),
        step,
        n_checked,
        n_below_floor,
        max_rel_err,
        mean_rel_err: if n_checked > 0 {
            sum_rel_err / n_checked as f64
        } else {
            0.0
        },
        max_abs_err,
        raster_changed,
        truncation_risk,
        passed: max_rel_err < GRADCHECK_REL_TOL && !raster_changed,
    })
}

/// One neuron of the single-synapse walkthrough.
#[derive(Debug, Clone, Serialize)]
pub struct DemoCase {
    pub name: String,
    /// Steps (1-based) at which the observed neuron fired.
    pub spike_times: Vec<usize>,
    /// Synaptic inflow delivered at each input-spike arrival.
    pub inflow_per_spike: Vec<f64>,
}

/// Result of the three-way single-neuron comparison: a fixed synapse, a
/// Gaussian synapse centered on the input period, and one centered off it.
#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub steps: usize,
    pub input_period: usize,
    pub fixed: DemoCase,
    pub matched: DemoCase,
    pub offset: DemoCase,
    /// Matched-center Gaussian reproduces the fixed run bit for bit.
    pub rasters_identical: bool,
    pub passed: bool,
}

/// Expected inflow for the offset case: 0.6 * exp(-1/2).
pub const DEMO_OFFSET_INFLOW: f64 = 0.6 * 0.6065306597126334;

fn demo_net(variant: Variant, mu: f64) -> Network {
    let hidden = SynapseBank::Dense(DenseBank::new(1, 1, vec![0.6], vec![mu], vec![5.0]));
    let readout = SynapseBank::Dense(DenseBank::new(
        1,
        2,
        vec![0.1, 0.1],
        vec![5.0, 5.0],
        vec![10.0, 10.0],
    ));
    Network::from_parts("1-1-2", variant, vec![1, 1, 2], vec![hidden, readout]).unwrap()
}

fn demo_case(name: &str, net: &Network, raster: &SpikeRaster, beta: f64, theta: f64) -> DemoCase {
    let fwd = net.forward(raster, beta, theta).unwrap();
    let hidden = &fwd.traces[1];
    let mut inflow = Vec::new();
    for t in raster.spike_times(0) {
        if t + 1 > hidden.steps {
            continue;
        }
        // v(t+1) = beta * v_after_reset(t) + inflow(t)
        let v_prev = if t >= 1 && hidden.spike(t, 0) {
            0.0
        } else if t >= 1 {
            hidden.potential(t, 0)
        } else {
            0.0
        };
        inflow.push(hidden.potential(t + 1, 0) - beta * v_prev);
    }
    DemoCase {
        name: name.to_string(),
        spike_times: hidden.spike_times(0),
        inflow_per_spike: inflow,
    }
}

/// Drive one neuron with a spike every `period` steps through three synapse
/// laws and report rasters and per-arrival inflow.
pub fn demo_single_neuron(steps: usize, period: usize, beta: f64, theta: f64) -> DemoReport {
    let mut raster = SpikeRaster::zeros(steps, 1);
    let mut t = period;
    while t <= steps {
        raster.set(t, 0);
        t += period;
    }

    let fixed = demo_case("fixed-0.6", &demo_net(Variant::Snn, 10.0), &raster, beta, theta);
    let matched_net = demo_net(Variant::Imsnn, period as f64);
    let offset_net = demo_net(Variant::Imsnn, period as f64 + 5.0);
    let matched = demo_case("gauss-centered", &matched_net, &raster, beta, theta);
    let offset = demo_case("gauss-offset", &offset_net, &raster, beta, theta);

    let fwd_fixed = demo_net(Variant::Snn, 10.0).forward(&raster, beta, theta).unwrap();
    let fwd_matched = matched_net.forward(&raster, beta, theta).unwrap();
    let rasters_identical = fwd_fixed.traces[1].spikes == fwd_matched.traces[1].spikes
        && fwd_fixed.traces[1].potentials == fwd_matched.traces[1].potentials;

    let fewer_when_offset = offset.spike_times.len() < matched.spike_times.len();
    let passed = rasters_identical && fewer_when_offset;
    DemoReport {
        steps,
        input_period: period,
        fixed,
        matched,
        offset,
        rasters_identical,
        passed,
    }
}

/// A random small instance for engine-versus-reference comparison: a dense
/// net (one or two hidden layers, at most 30 neurons), a Bernoulli raster,
/// and a random loss seed.
pub fn random_dense_instance(seed: u64) -> (Network, SpikeRaster, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_in = rng.gen_range(2..=8usize);
    let n_h1 = rng.gen_range(2..=10usize);
    let n_out = rng.gen_range(2..=4usize);
    let arch = if rng.gen_bool(0.5) {
        format!("{n_in}-{n_h1}-{n_out}")
    } else {
        let n_h2 = rng.gen_range(2..=8usize);
        format!("{n_in}-{n_h1}-{n_h2}-{n_out}")
    };
    let steps = rng.gen_range(8..=20usize);
    let cfg = InitConfig {
        height_std: 0.5,
        mu_range: (1.0, 8.0),
        sigma_range: (2.0, 10.0),
    };
    let net = Network::init(&arch, Variant::Imsnn, rng.gen(), &cfg).unwrap();
    let raster = random_raster(&mut rng, steps, n_in);
    let loss_seed = random_loss_seed(&mut rng, n_out);
    (net, raster, loss_seed)
}

/// A small convolutional instance (8x8 input, 1->2 channels, 3x3 kernel) for
/// the same comparison.
pub fn random_conv_instance(seed: u64) -> (Network, SpikeRaster, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = InitConfig {
        height_std: 0.5,
        mu_range: (1.0, 8.0),
        sigma_range: (2.0, 10.0),
    };
    let net = Network::init("64-2c3-3", Variant::Imsnn, rng.gen(), &cfg).unwrap();
    let steps = rng.gen_range(8..=12usize);
    let raster = random_raster(&mut rng, steps, 64);
    let loss_seed = random_loss_seed(&mut rng, 3);
    (net, raster, loss_seed)
}

fn random_raster(rng: &mut ChaCha8Rng, steps: usize, n: usize) -> SpikeRaster {
    let p = Uniform::new(0.1, 0.5).sample(rng);
    let bern = Bernoulli::new(p).unwrap();
    let mut raster = SpikeRaster::zeros(steps, n);
    for i in 0..n {
        for t in 1..=steps {
            if bern.sample(rng) {
                raster.set(t, i);
            }
        }
    }
    raster
}

fn random_loss_seed(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// A 10-5-3 instance suitable for the finite-difference check: resampled
/// until the output potentials sit well clear of the clamp and the hidden
/// layer actually spikes, so the local loss surface is smooth.
pub fn random_gradcheck_instance(
    seed: u64,
    variant: Variant,
    steps: usize,
    beta: f64,
    theta: f64,
) -> (Network, SpikeRaster, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = InitConfig {
        height_std: 0.5,
        mu_range: (1.0, 8.0),
        sigma_range: (2.0, 10.0),
    };
    for _ in 0..500 {
        let net = Network::init("10-5-3", variant, rng.gen(), &cfg).unwrap();
        let raster = random_raster(&mut rng, steps, 10);
        let fwd = net.forward(&raster, beta, theta).unwrap();
        let hidden_spikes = fwd.traces[1].total_spikes();
        let min_out = fwd
            .output_potentials()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if hidden_spikes >= 5 && min_out > 0.01 {
            let label = rng.gen_range(0..3usize);
            return (net, raster, label);
        }
    }
    panic!("no well-conditioned gradcheck instance found for seed {seed}");
}
