//! Architecture strings and their parsed layer descriptions.
//!
//! An architecture is a dash-separated token list, e.g. `784-500-10` or
//! `784-48c5-8c5-500-10`. The first token is the input size, the last is the
//! class count, `NcK` tokens are conv layers (N output channels, K x K kernel,
//! stride 1, valid padding), and plain numbers in between are dense layers.

use crate::error::{Error, Result};

/// Shape of a 2-D feature map: (channels, height, width).
pub type MapShape = (usize, usize, usize);

/// One structural layer of a parsed architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    /// Spiking convolutional layer, stride 1, valid padding.
    Conv {
        in_shape: MapShape,
        out_channels: usize,
        kernel: usize,
        out_shape: MapShape,
    },
    /// Reshape from a feature map to a flat vector; no parameters, no neurons.
    Flatten { size: usize },
    /// Spiking fully-connected hidden layer.
    Dense { fan_in: usize, fan_out: usize },
    /// Non-spiking readout layer; potentials accumulate over the window.
    Output { fan_in: usize, fan_out: usize },
}

impl LayerSpec {
    /// Number of neurons this layer owns (0 for the parameterless flatten).
    pub fn neuron_count(&self) -> usize {
        match self {
            LayerSpec::Conv { out_shape, .. } => out_shape.0 * out_shape.1 * out_shape.2,
            LayerSpec::Flatten { .. } => 0,
            LayerSpec::Dense { fan_out, .. } | LayerSpec::Output { fan_out, .. } => *fan_out,
        }
    }
}

fn err(token_index: usize, message: impl Into<String>) -> Error {
    Error::ArchParse {
        token_index,
        message: message.into(),
    }
}

fn parse_count(tok: &str, idx: usize, what: &str) -> Result<usize> {
    let n: usize = tok
        .parse()
        .map_err(|_| err(idx, format!("malformed {what} token {tok:?}")))?;
    if n == 0 {
        return Err(err(idx, format!("{what} must be nonzero")));
    }
    Ok(n)
}

/// Interpret a flat input size as a square single-channel map, for feeding a
/// conv layer. `784` becomes 28 x 28 x 1.
fn as_square_map(size: usize, idx: usize) -> Result<MapShape> {
    let side = (size as f64).sqrt().round() as usize;
    if side * side != size {
        return Err(err(
            idx,
            format!("conv layer needs a square input map, got flat size {size}"),
        ));
    }
    Ok((1, side, side))
}

/// Parse an architecture string into an ordered layer list.
///
/// The final token is always the output layer; a dense token directly after a
/// conv token gets a `Flatten` inserted in between. Errors carry the 0-based
/// index of the offending token.
pub fn parse_architecture(s: &str) -> Result<Vec<LayerSpec>> {
    let tokens: Vec<&str> = s.split('-').collect();
    if tokens.len() < 2 {
        return Err(err(
            tokens.len().saturating_sub(1),
            "architecture needs at least an input and an output token",
        ));
    }

    let input_size = parse_count(tokens[0], 0, "input size")?;
    let mut specs = Vec::new();
    // Running shape: either a flat vector or a feature map.
    let mut flat = Some(input_size);
    let mut map: Option<MapShape> = None;

    for (idx, tok) in tokens.iter().enumerate().skip(1) {
        let is_last = idx == tokens.len() - 1;
        if let Some(cpos) = tok.find('c') {
            if is_last {
                return Err(err(idx, "output layer cannot be convolutional"));
            }
            let out_channels = parse_count(&tok[..cpos], idx, "conv channel")?;
            let kernel = parse_count(&tok[cpos + 1..], idx, "conv kernel")?;
            let in_shape = match map {
                Some(shape) => shape,
                None => {
                    if specs.is_empty() {
                        as_square_map(flat.take().unwrap(), idx)?
                    } else {
                        return Err(err(idx, "conv layer after a dense layer"));
                    }
                }
            };
            let (_, h, w) = in_shape;
            if kernel > h || kernel > w {
                return Err(err(
                    idx,
                    format!("kernel {kernel} exceeds input map {h}x{w}"),
                ));
            }
            let out_shape = (out_channels, h - kernel + 1, w - kernel + 1);
            specs.push(LayerSpec::Conv {
                in_shape,
                out_channels,
                kernel,
                out_shape,
            });
            map = Some(out_shape);
        } else {
            let fan_out = parse_count(tok, idx, "layer size")?;
            let fan_in = match (flat, map) {
                (Some(n), _) => n,
                (None, Some((c, h, w))) => {
                    let size = c * h * w;
                    specs.push(LayerSpec::Flatten { size });
                    map = None;
                    size
                }
                (None, None) => unreachable!("shape tracking lost"),
            };
            if is_last {
                specs.push(LayerSpec::Output { fan_in, fan_out });
            } else {
                specs.push(LayerSpec::Dense { fan_in, fan_out });
            }
            flat = Some(fan_out);
        }
    }
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_architecture_parses() {
        let specs = parse_architecture("784-500-10").unwrap();
        assert_eq!(
            specs,
            vec![
                LayerSpec::Dense {
                    fan_in: 784,
                    fan_out: 500
                },
                LayerSpec::Output {
                    fan_in: 500,
                    fan_out: 10
                },
            ]
        );
    }

    #[test]
    fn output_only_architecture_parses() {
        let specs = parse_architecture("784-10").unwrap();
        assert_eq!(
            specs,
            vec![LayerSpec::Output {
                fan_in: 784,
                fan_out: 10
            }]
        );
    }

    #[test]
    fn conv_architecture_inserts_flatten_and_tracks_shapes() {
        let specs = parse_architecture("784-48c5-8c5-500-10").unwrap();
        assert_eq!(
            specs,
            vec![
                LayerSpec::Conv {
                    in_shape: (1, 28, 28),
                    out_channels: 48,
                    kernel: 5,
                    out_shape: (48, 24, 24),
                },
                LayerSpec::Conv {
                    in_shape: (48, 24, 24),
                    out_channels: 8,
                    kernel: 5,
                    out_shape: (8, 20, 20),
                },
                LayerSpec::Flatten { size: 3200 },
                LayerSpec::Dense {
                    fan_in: 3200,
                    fan_out: 500
                },
                LayerSpec::Output {
                    fan_in: 500,
                    fan_out: 10
                },
            ]
        );
    }

    #[test]
    fn malformed_inputs_report_token_index() {
        for (arch, bad_idx) in [
            ("784", 0),
            ("784-abc-10", 1),
            ("784-0-10", 1),
            ("783-4c3-10", 1),   // 783 is not a square map
            ("784-4c99-10", 1),  // kernel larger than the map
            ("784-500-4c3-10", 2), // conv after dense
            ("784-500-4c3", 2),  // conv output
            ("", 0),
        ] {
            match parse_architecture(arch) {
                Err(Error::ArchParse { token_index, .. }) => {
                    assert_eq!(token_index, bad_idx, "arch {arch:?}")
                }
                other => panic!("arch {arch:?}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn neuron_counts_follow_shapes() {
        let specs = parse_architecture("64-2c3-3").unwrap();
        assert_eq!(specs[0].neuron_count(), 2 * 6 * 6);
        assert_eq!(specs[1].neuron_count(), 0); // flatten
        assert_eq!(specs[2].neuron_count(), 3);
    }
}
