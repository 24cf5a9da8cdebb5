//! Network assembly, initialization, the forward pass, and model files.
//!
//! Timing discipline: potentials at step t integrate presynaptic spikes from
//! step t-1, weighted by the effective weight at t-1 (which in turn uses the
//! presynaptic ISI at t-1, i.e. the interval ending at that spike). Per step,
//! every layer therefore only reads upstream state from the previous step.

use crate::arch::{parse_architecture, LayerSpec};
use crate::bank::{ConvBank, DenseBank, GaussCache, SynapseBank};
use crate::dynamics::{isi_update, threshold_reset};
use crate::encoding::SpikeRaster;
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

/// Model variant: which synapse law runs forward and which gradient rule runs
/// backward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Gaussian ISI-dependent synapses; updates that would shorten
    /// postsynaptic ISIs are suppressed.
    Imsnn,
    /// Fixed-weight synapses and plain surrogate BPTT (the conventional
    /// baseline; heights act directly as weights).
    Snn,
    /// Control: Gaussian synapses with the suppression test inverted.
    ImsnnC,
}

impl Variant {
    /// Whether the forward pass modulates weights by the presynaptic ISI.
    pub fn gaussian(&self) -> bool {
        !matches!(self, Variant::Snn)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Imsnn => "imsnn",
            Variant::Snn => "snn",
            Variant::ImsnnC => "imsnn_c",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imsnn" => Ok(Variant::Imsnn),
            "snn" => Ok(Variant::Snn),
            "imsnn_c" => Ok(Variant::ImsnnC),
            other => Err(Error::Validation(format!(
                "unknown variant {other:?} (expected imsnn | snn | imsnn_c)"
            ))),
        }
    }
}

/// Parameter initialization ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    /// Heights are drawn from Normal(0, height_std).
    pub height_std: f64,
    /// Gaussian centers are drawn uniformly from this interval (timesteps).
    pub mu_range: (f64, f64),
    /// Gaussian widths are drawn uniformly from this interval (timesteps).
    pub sigma_range: (f64, f64),
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            height_std: 0.05,
            mu_range: (5.0, 10.0),
            sigma_range: (10.0, 50.0),
        }
    }
}

/// Everything recorded about one layer during one presentation.
///
/// `potentials` holds the pre-reset candidate (the value the threshold saw);
/// it is empty for the input layer. `spikes` is empty for the output layer,
/// which never fires.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub n: usize,
    pub steps: usize,
    pub spikes: Vec<u8>,
    pub potentials: Vec<f64>,
    pub isis: Vec<u32>,
}

impl LayerTrace {
    fn new(n: usize, steps: usize, has_spikes: bool, has_potentials: bool) -> Self {
        LayerTrace {
            n,
            steps,
            spikes: if has_spikes { vec![0; n * steps] } else { Vec::new() },
            potentials: if has_potentials {
                vec![0.0; n * steps]
            } else {
                Vec::new()
            },
            isis: vec![0; n * steps],
        }
    }

    /// t is 1-based throughout, matching the update equations.
    #[inline]
    pub fn spike(&self, t: usize, i: usize) -> bool {
        !self.spikes.is_empty() && self.spikes[(t - 1) * self.n + i] != 0
    }

    #[inline]
    pub fn potential(&self, t: usize, i: usize) -> f64 {
        self.potentials[(t - 1) * self.n + i]
    }

    #[inline]
    pub fn isi(&self, t: usize, i: usize) -> u32 {
        self.isis[(t - 1) * self.n + i]
    }

    #[inline]
    pub fn spike_row(&self, t: usize) -> &[u8] {
        &self.spikes[(t - 1) * self.n..t * self.n]
    }

    #[inline]
    pub fn isi_row(&self, t: usize) -> &[u32] {
        &self.isis[(t - 1) * self.n..t * self.n]
    }

    pub fn total_spikes(&self) -> u64 {
        self.spikes.iter().map(|&b| b as u64).sum()
    }

    /// Spike times (1-based) of one neuron.
    pub fn spike_times(&self, i: usize) -> Vec<usize> {
        (1..=self.steps).filter(|&t| self.spike(t, i)).collect()
    }
}

/// Output of one forward pass: one trace per neuron-bearing layer, input
/// included, in network order.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    pub traces: Vec<LayerTrace>,
}

impl ForwardResult {
    /// Final output potentials v(T), the readout the loss consumes.
    pub fn output_potentials(&self) -> &[f64] {
        let out = self.traces.last().expect("network has an output layer");
        &out.potentials[(out.steps - 1) * out.n..]
    }
}

/// Per-bank Gaussian-factor memos for repeated forward/backward passes.
#[derive(Debug)]
pub struct NetCaches {
    pub banks: Vec<GaussCache>,
}

/// A layered spiking network: per-layer sizes plus the synapse banks between
/// them. Only bank heights change during training.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub architecture: String,
    pub variant: Variant,
    /// Neuron count per layer, input first, output last.
    pub layer_sizes: Vec<usize>,
    pub banks: Vec<SynapseBank>,
}

impl Network {
    /// Build a network with freshly drawn parameters. For each bank, heights
    /// are drawn first, then centers, then widths, all in index order, from a
    /// single ChaCha stream — so a (seed, architecture, init) triple pins
    /// every parameter bit regardless of variant.
    pub fn init(architecture: &str, variant: Variant, seed: u64, cfg: &InitConfig) -> Result<Self> {
        let specs = parse_architecture(architecture)?;
        if cfg.height_std < 0.0 || !cfg.height_std.is_finite() {
            return Err(Error::Validation("height_std must be finite and >= 0".into()));
        }
        if cfg.sigma_range.0 <= 0.0 {
            return Err(Error::Validation("sigma must be strictly positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, cfg.height_std)
            .map_err(|e| Error::Validation(format!("height distribution: {e}")))?;
        let mu_dist = Uniform::new_inclusive(cfg.mu_range.0, cfg.mu_range.1);
        let sigma_dist = Uniform::new_inclusive(cfg.sigma_range.0, cfg.sigma_range.1);

        let mut draw_bank = |n_w: usize, n_ms: usize| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
            let w = (0..n_w).map(|_| normal.sample(&mut rng)).collect();
            let mu = (0..n_ms).map(|_| mu_dist.sample(&mut rng)).collect();
            let sigma = (0..n_ms).map(|_| sigma_dist.sample(&mut rng)).collect();
            (w, mu, sigma)
        };

        let mut layer_sizes = vec![match specs.first() {
            Some(LayerSpec::Conv { in_shape, .. }) => in_shape.0 * in_shape.1 * in_shape.2,
            Some(LayerSpec::Dense { fan_in, .. }) | Some(LayerSpec::Output { fan_in, .. }) => {
                *fan_in
            }
            _ => unreachable!("parser yields a non-empty spec list"),
        }];
        let mut banks = Vec::new();
        for spec in &specs {
            match spec {
                LayerSpec::Conv {
                    in_shape,
                    out_channels,
                    kernel,
                    out_shape,
                } => {
                    let n_w = out_channels * in_shape.0 * kernel * kernel;
                    let n_ms = out_channels * in_shape.0;
                    let (w, mu, sigma) = draw_bank(n_w, n_ms);
                    banks.push(SynapseBank::Conv(ConvBank::new(
                        *in_shape, *out_shape, *kernel, w, mu, sigma,
                    )));
                    layer_sizes.push(out_shape.0 * out_shape.1 * out_shape.2);
                }
                LayerSpec::Flatten { .. } => {} // pure reshape: flat index order is unchanged
                LayerSpec::Dense { fan_in, fan_out } | LayerSpec::Output { fan_in, fan_out } => {
                    let n = fan_in * fan_out;
                    let (w, mu, sigma) = draw_bank(n, n);
                    banks.push(SynapseBank::Dense(DenseBank::new(
                        *fan_in, *fan_out, w, mu, sigma,
                    )));
                    layer_sizes.push(*fan_out);
                }
            }
        }
        Ok(Network {
            architecture: architecture.to_string(),
            variant,
            layer_sizes,
            banks,
        })
    }

    /// Assemble a network from explicit banks (tests, demos, model loading).
    pub fn from_parts(
        architecture: &str,
        variant: Variant,
        layer_sizes: Vec<usize>,
        banks: Vec<SynapseBank>,
    ) -> Result<Self> {
        if banks.len() + 1 != layer_sizes.len() {
            return Err(Error::Validation(format!(
                "{} banks cannot connect {} layers",
                banks.len(),
                layer_sizes.len()
            )));
        }
        for (b, bank) in banks.iter().enumerate() {
            if bank.n_pre() != layer_sizes[b] || bank.n_post() != layer_sizes[b + 1] {
                return Err(Error::Validation(format!(
                    "bank {b} is {}x{} but layers are {}->{}",
                    bank.n_pre(),
                    bank.n_post(),
                    layer_sizes[b],
                    layer_sizes[b + 1]
                )));
            }
        }
        Ok(Network {
            architecture: architecture.to_string(),
            variant,
            layer_sizes,
            banks,
        })
    }

    /// Same parameters, different learning/forward law. Used by ablations so
    /// all variants start from identical weights.
    pub fn with_variant(&self, variant: Variant) -> Network {
        Network {
            variant,
            ..self.clone()
        }
    }

    /// Layer indices whose spikes count towards activity metrics
    /// (everything except the input and the non-spiking output).
    pub fn hidden_layer_indices(&self) -> Vec<usize> {
        (1..self.layer_sizes.len().saturating_sub(1)).collect()
    }

    pub fn make_caches(&self, max_phi: u32) -> NetCaches {
        NetCaches {
            banks: self
                .banks
                .iter()
                .map(|b| GaussCache::new(b, max_phi))
                .collect(),
        }
    }

    /// Run one presentation and record full traces for every layer.
    pub fn forward(&self, raster: &SpikeRaster, beta: f64, theta: f64) -> Result<ForwardResult> {
        let mut caches = self.make_caches(raster.steps as u32);
        self.forward_cached(raster, beta, theta, &mut caches)
    }

    /// As [`Network::forward`], reusing Gaussian memos across presentations.
    /// Results are bit-identical to the uncached path.
    pub fn forward_cached(
        &self,
        raster: &SpikeRaster,
        beta: f64,
        theta: f64,
        caches: &mut NetCaches,
    ) -> Result<ForwardResult> {
        let n_layers = self.layer_sizes.len();
        if raster.n != self.layer_sizes[0] {
            return Err(Error::Validation(format!(
                "raster covers {} neurons, input layer has {}",
                raster.n, self.layer_sizes[0]
            )));
        }
        let steps = raster.steps;
        if steps == 0 {
            return Err(Error::Validation("presentation window must be nonzero".into()));
        }

        let mut traces: Vec<LayerTrace> = (0..n_layers)
            .map(|l| {
                let is_input = l == 0;
                let is_output = l == n_layers - 1;
                LayerTrace::new(self.layer_sizes[l], steps, !is_output, !is_input)
            })
            .collect();

        // Running state: post-reset potentials and last-step spikes/ISIs.
        let mut v: Vec<Vec<f64>> = self.layer_sizes.iter().map(|&n| vec![0.0; n]).collect();
        let mut phi_prev: Vec<Vec<u32>> = self.layer_sizes.iter().map(|&n| vec![0; n]).collect();
        let mut spike_prev: Vec<Vec<u8>> = self.layer_sizes.iter().map(|&n| vec![0; n]).collect();
        let mut inflow = vec![0.0f64; *self.layer_sizes.iter().max().unwrap()];
        let gaussian = self.variant.gaussian();

        for t in 1..=steps {
            // Every connection carries one step of latency: at step t a layer
            // integrates its presynaptic layer's step t-1 spikes and ISIs.
            // Walking the layers top-down lets each one read its upstream
            // neighbour before that neighbour advances to step t.
            for l in (1..n_layers).rev() {
                let n = self.layer_sizes[l];
                let is_output = l == n_layers - 1;
                let bank = &self.banks[l - 1];

                // Inflow: presynaptic spikes from step t-1 through the
                // effective weights they saw at t-1.
                inflow[..n].fill(0.0);
                let pre_n = self.layer_sizes[l - 1];
                let pre_spikes = &spike_prev[l - 1];
                let pre_phis = &phi_prev[l - 1];
                match bank {
                    SynapseBank::Dense(dense) => {
                        for i in 0..pre_n {
                            if pre_spikes[i] == 0 {
                                continue;
                            }
                            let base = i * dense.n_post;
                            if gaussian {
                                let row = caches.banks[l - 1].row(bank, pre_phis[i]);
                                for (h, acc) in inflow[..n].iter_mut().enumerate() {
                                    *acc += dense.w[base + h] * row[base + h];
                                }
                            } else {
                                for (h, acc) in inflow[..n].iter_mut().enumerate() {
                                    *acc += dense.w[base + h];
                                }
                            }
                        }
                    }
                    SynapseBank::Conv(conv) => {
                        for i in 0..pre_n {
                            if pre_spikes[i] == 0 {
                                continue;
                            }
                            if gaussian {
                                let row = caches.banks[l - 1].row(bank, pre_phis[i]);
                                conv.for_each_out(i, |post, w_idx, ms_idx| {
                                    inflow[post] += conv.w[w_idx] * row[ms_idx];
                                });
                            } else {
                                conv.for_each_out(i, |post, w_idx, _| {
                                    inflow[post] += conv.w[w_idx];
                                });
                            }
                        }
                    }
                }

                // The inflow above is settled; this layer may now advance.
                let trace = &mut traces[l];
                for j in 0..n {
                    let phi = isi_update(phi_prev[l][j], spike_prev[l][j] != 0);
                    trace.isis[(t - 1) * n + j] = phi;
                    phi_prev[l][j] = phi;

                    let candidate = beta * v[l][j] + inflow[j];
                    let (v_next, spiked) = threshold_reset(candidate, theta, !is_output);
                    trace.potentials[(t - 1) * n + j] = candidate;
                    if !is_output {
                        trace.spikes[(t - 1) * n + j] = spiked as u8;
                    }
                    spike_prev[l][j] = spiked as u8;
                    v[l][j] = v_next;
                }
            }

            // Input layer last: spikes come straight from the raster, ISIs
            // from the counter; layer 1 reads this state at step t+1.
            let trace = &mut traces[0];
            let row = raster.step_row(t);
            trace.spikes[(t - 1) * trace.n..t * trace.n].copy_from_slice(row);
            for i in 0..trace.n {
                let phi = isi_update(phi_prev[0][i], spike_prev[0][i] != 0);
                trace.isis[(t - 1) * trace.n + i] = phi;
                phi_prev[0][i] = phi;
            }
            spike_prev[0].copy_from_slice(row);
        }
        Ok(ForwardResult { traces })
    }

    // ---- model files -------------------------------------------------------

    /// Serialize to the versioned model JSON document.
    pub fn to_model_json(&self) -> Result<String> {
        let doc = ModelDoc {
            format_version: MODEL_FORMAT_VERSION,
            architecture: self.architecture.clone(),
            variant: self.variant,
            banks: self
                .banks
                .iter()
                .map(|b| BankDoc {
                    w: b.weights().to_vec(),
                    mu: b.mus().to_vec(),
                    sigma: b.sigmas().to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn save_model(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_model_json()?)?;
        Ok(())
    }

    /// Rebuild a network from its model JSON. Shapes come from re-parsing the
    /// architecture string; array lengths are validated against them.
    pub fn from_model_json(json: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(json)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format_version {} (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let template = Network::init(&doc.architecture, doc.variant, 0, &InitConfig::default())?;
        if doc.banks.len() != template.banks.len() {
            return Err(Error::Format(format!(
                "model has {} banks, architecture {} needs {}",
                doc.banks.len(),
                doc.architecture,
                template.banks.len()
            )));
        }
        let banks = template
            .banks
            .into_iter()
            .zip(doc.banks)
            .enumerate()
            .map(|(i, (bank, params))| {
                let (nw, nms) = (bank.weights().len(), bank.mus().len());
                if params.w.len() != nw || params.mu.len() != nms || params.sigma.len() != nms {
                    return Err(Error::Format(format!(
                        "bank {i}: expected {nw} heights and {nms} (mu, sigma) pairs, \
                         got {}/{}/{}",
                        params.w.len(),
                        params.mu.len(),
                        params.sigma.len()
                    )));
                }
                Ok(match bank {
                    SynapseBank::Dense(d) => SynapseBank::Dense(DenseBank::new(
                        d.n_pre,
                        d.n_post,
                        params.w,
                        params.mu,
                        params.sigma,
                    )),
                    SynapseBank::Conv(c) => SynapseBank::Conv(ConvBank::new(
                        c.in_shape,
                        c.out_shape,
                        c.kernel,
                        params.w,
                        params.mu,
                        params.sigma,
                    )),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Network {
            architecture: doc.architecture,
            variant: doc.variant,
            layer_sizes: template.layer_sizes,
            banks,
        })
    }

    pub fn load_model(path: &std::path::Path) -> Result<Self> {
        Network::from_model_json(&std::fs::read_to_string(path)?)
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u32,
    architecture: String,
    variant: Variant,
    banks: Vec<BankDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankDoc {
    w: Vec<f64>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
}
