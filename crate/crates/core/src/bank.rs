//! Synapse parameter banks: the per-connection heights and Gaussian response
//! parameters between two consecutive layers.
//!
//! Dense banks store one (w, mu, sigma) triple per connection. Conv banks
//! share heights across spatial positions kernel-style and share (mu, sigma)
//! per (out-channel, in-channel) pair.

use crate::dynamics::gauss_factor;

/// Fully-connected bank. Arrays are row-major `[pre][post]`:
/// index `pre * n_post + post`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBank {
    pub n_pre: usize,
    pub n_post: usize,
    /// Trainable heights, one per connection.
    pub w: Vec<f64>,
    /// Gaussian centers (timesteps); frozen after initialization.
    pub mu: Vec<f64>,
    /// Gaussian widths (timesteps); frozen, strictly positive.
    pub sigma: Vec<f64>,
}

impl DenseBank {
    pub fn new(n_pre: usize, n_post: usize, w: Vec<f64>, mu: Vec<f64>, sigma: Vec<f64>) -> Self {
        assert_eq!(w.len(), n_pre * n_post);
        assert_eq!(mu.len(), n_pre * n_post);
        assert_eq!(sigma.len(), n_pre * n_post);
        DenseBank {
            n_pre,
            n_post,
            w,
            mu,
            sigma,
        }
    }

    #[inline]
    pub fn idx(&self, pre: usize, post: usize) -> usize {
        pre * self.n_post + post
    }
}

/// Convolutional bank, stride 1, valid padding.
///
/// Heights are `[out_ch][in_ch][ky][kx]`; (mu, sigma) are `[out_ch][in_ch]`,
/// i.e. every spatial tap of a kernel shares one Gaussian response.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBank {
    /// (channels, height, width) of the presynaptic map.
    pub in_shape: (usize, usize, usize),
    /// (channels, height, width) of the postsynaptic map.
    pub out_shape: (usize, usize, usize),
    pub kernel: usize,
    pub w: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ConvBank {
    pub fn new(
        in_shape: (usize, usize, usize),
        out_shape: (usize, usize, usize),
        kernel: usize,
        w: Vec<f64>,
        mu: Vec<f64>,
        sigma: Vec<f64>,
    ) -> Self {
        let (ic, ih, iw) = in_shape;
        let (oc, oh, ow) = out_shape;
        assert_eq!(oh, ih - kernel + 1);
        assert_eq!(ow, iw - kernel + 1);
        assert_eq!(w.len(), oc * ic * kernel * kernel);
        assert_eq!(mu.len(), oc * ic);
        assert_eq!(sigma.len(), oc * ic);
        ConvBank {
            in_shape,
            out_shape,
            kernel,
            w,
            mu,
            sigma,
        }
    }

    /// Visit every outgoing connection of presynaptic neuron `pre`
    /// (flat index into the input map) as `(post, w_idx, ms_idx)`.
    #[inline]
    pub fn for_each_out(&self, pre: usize, mut f: impl FnMut(usize, usize, usize)) {
        let (in_c, in_h, in_w) = self.in_shape;
        let (out_c, out_h, out_w) = self.out_shape;
        let k = self.kernel;
        let ic = pre / (in_h * in_w);
        let rem = pre % (in_h * in_w);
        let y = rem / in_w;
        let x = rem % in_w;
        let y_lo = y.saturating_sub(k - 1);
        let y_hi = y.min(out_h - 1);
        let x_lo = x.saturating_sub(k - 1);
        let x_hi = x.min(out_w - 1);
        for oc in 0..out_c {
            let ms_idx = oc * in_c + ic;
            let w_base = (oc * in_c + ic) * k * k;
            for oy in y_lo..=y_hi {
                let ky = y - oy;
                for ox in x_lo..=x_hi {
                    let kx = x - ox;
                    let post = (oc * out_h + oy) * out_w + ox;
                    f(post, w_base + ky * k + kx, ms_idx);
                }
            }
        }
    }
}

/// A bank between two consecutive layers.
#[derive(Debug, Clone, PartialEq)]
pub enum SynapseBank {
    Dense(DenseBank),
    Conv(ConvBank),
}

impl SynapseBank {
    pub fn n_pre(&self) -> usize {
        match self {
            SynapseBank::Dense(b) => b.n_pre,
            SynapseBank::Conv(b) => b.in_shape.0 * b.in_shape.1 * b.in_shape.2,
        }
    }

    pub fn n_post(&self) -> usize {
        match self {
            SynapseBank::Dense(b) => b.n_post,
            SynapseBank::Conv(b) => b.out_shape.0 * b.out_shape.1 * b.out_shape.2,
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            SynapseBank::Dense(b) => &b.w,
            SynapseBank::Conv(b) => &b.w,
        }
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        match self {
            SynapseBank::Dense(b) => &mut b.w,
            SynapseBank::Conv(b) => &mut b.w,
        }
    }

    pub fn mus(&self) -> &[f64] {
        match self {
            SynapseBank::Dense(b) => &b.mu,
            SynapseBank::Conv(b) => &b.mu,
        }
    }

    pub fn sigmas(&self) -> &[f64] {
        match self {
            SynapseBank::Dense(b) => &b.sigma,
            SynapseBank::Conv(b) => &b.sigma,
        }
    }
}

/// Cap on memoized Gaussian rows per bank. Banks whose full table would
/// exceed this fall back to recomputing rows into a scratch buffer.
const GAUSS_CACHE_BYTES: usize = 256 << 20;

/// Lazy per-bank memo of Gaussian factors, keyed by integer ISI.
///
/// (mu, sigma) never change during training, so `exp(-(phi-mu)^2/(2 sigma^2))`
/// depends only on the connection and the integer `phi`; rows are computed on
/// first use and reused bit-identically afterwards. Row layout matches the
/// bank's weight layout for dense banks and the (out_ch, in_ch) layout for
/// conv banks.
#[derive(Debug)]
pub struct GaussCache {
    rows: Vec<Option<Box<[f64]>>>,
    scratch: Vec<f64>,
    caching: bool,
}

impl GaussCache {
    /// `max_phi` is the largest ISI that can occur (the window length).
    pub fn new(bank: &SynapseBank, max_phi: u32) -> Self {
        let row_len = match bank {
            SynapseBank::Dense(b) => b.w.len(),
            SynapseBank::Conv(b) => b.mu.len(),
        };
        let caching = row_len * (max_phi as usize + 2) * 8 <= GAUSS_CACHE_BYTES;
        GaussCache {
            rows: if caching {
                let mut v = Vec::new();
                v.resize_with(max_phi as usize + 2, || None);
                v
            } else {
                Vec::new()
            },
            scratch: vec![0.0; row_len],
            caching,
        }
    }

    fn fill(bank: &SynapseBank, phi: u32, out: &mut [f64]) {
        for (o, (m, s)) in out.iter_mut().zip(bank.mus().iter().zip(bank.sigmas())) {
            *o = gauss_factor(*m, *s, phi);
        }
    }

    /// Gaussian factors for every connection of `bank` at ISI `phi`.
    pub fn row(&mut self, bank: &SynapseBank, phi: u32) -> &[f64] {
        if !self.caching {
            Self::fill(bank, phi, &mut self.scratch);
            return &self.scratch;
        }
        let slot = &mut self.rows[phi as usize];
        if slot.is_none() {
            let mut row = vec![0.0; self.scratch.len()].into_boxed_slice();
            Self::fill(bank, phi, &mut row);
            *slot = Some(row);
        }
        slot.as_deref().unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_conv() -> ConvBank {
        // 1-channel 4x4 input, 2 output channels, 3x3 kernel -> 2x2x2 output.
        let w: Vec<f64> = (0..2 * 1 * 9).map(|i| i as f64).collect();
        ConvBank::new((1, 4, 4), (2, 2, 2), 3, w, vec![5.0, 7.0], vec![3.0, 4.0])
    }

    #[test]
    fn conv_connectivity_is_the_transpose_of_the_forward_stencil() {
        let bank = small_conv();
        // Gather connections by post neuron and verify each post sees exactly
        // its 3x3 receptive field.
        let mut fan_in = vec![0usize; 8];
        for pre in 0..16 {
            bank.for_each_out(pre, |post, w_idx, ms_idx| {
                fan_in[post] += 1;
                assert!(w_idx < bank.w.len());
                assert_eq!(ms_idx, post / 4); // out channel
            });
        }
        assert!(fan_in.iter().all(|&n| n == 9));
    }

    #[test]
    fn conv_weight_indices_match_kernel_offsets() {
        let bank = small_conv();
        // Pre neuron at (y=1, x=1) feeds post (oy=0, ox=0) via tap (ky=1, kx=1).
        let pre = 4 + 1;
        let mut seen = Vec::new();
        bank.for_each_out(pre, |post, w_idx, _| seen.push((post, w_idx)));
        // Channel 0, post (0,0): w index = 0*9 + 1*3 + 1 = 4.
        assert!(seen.contains(&(0, 4)));
        // Channel 1, post (1,1) (flat 2*2*1+1*2+1 = 7): tap (0,0) -> w = 9.
        assert!(seen.contains(&(7, 9)));
    }

    #[test]
    fn gauss_cache_rows_match_direct_evaluation() {
        let bank = SynapseBank::Conv(small_conv());
        let mut cache = GaussCache::new(&bank, 20);
        for phi in [1u32, 5, 7, 20] {
            let row = cache.row(&bank, phi).to_vec();
            let direct: Vec<f64> = bank
                .mus()
                .iter()
                .zip(bank.sigmas())
                .map(|(&m, &s)| gauss_factor(m, s, phi))
                .collect();
            assert_eq!(row, direct);
        }
        // Second lookup returns the identical bits.
        let again = cache.row(&bank, 5).to_vec();
        let direct5: Vec<f64> = bank
            .mus()
            .iter()
            .zip(bank.sigmas())
            .map(|(&m, &s)| gauss_factor(m, s, 5))
            .collect();
        assert_eq!(again, direct5);
    }
}
