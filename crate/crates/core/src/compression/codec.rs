//! Binary model format (`FCMP`, version 1).
//!
//! All integers are little-endian `u32`, all reals little-endian `f32`.
//!
//! ```text
//! header   "FCMP" | version: u8 | layer count | cluster count C
//! layer    inputs | outputs
//!          codebook section: byte length (4·C)          | C centroids
//!          index section:    byte length ⌈n·b/8⌉        | packed indices, b = ⌈log₂ C⌉
//!          bias section:     byte length (0 if no bias) | biases
//! ```
//!
//! Layers appear in architecture order. Index bits are packed least significant
//! bit first and the final byte of each index section is zero-padded.

use super::bitpack::{bits_per_index, pack, packed_len, unpack};
use super::{ClusteredLayer, ClusteredModel};
use crate::nn::ModelWeights;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FCMP";
pub const VERSION: u8 = 1;
/// Magic, version, layer count and cluster count.
pub const HEADER_LEN: usize = 4 + 1 + 4 + 4;
/// Per-layer dimensions plus three section length prefixes.
pub const LAYER_FRAMING_LEN: usize = 8 + 3 * 4;
const MAX_LAYER_ELEMENTS: usize = 1 << 28;

/// Codebook, index and bias bytes of one layer, without framing.
fn layer_payload(weights: usize, biases: usize, clusters: usize) -> usize {
    4 * clusters + packed_len(weights, bits_per_index(clusters)) + 4 * biases
}

/// Payload bytes (codebooks, packed indices, biases) for `model` at `clusters`.
pub fn payload_len(model: &ModelWeights, clusters: usize) -> usize {
    model
        .layers()
        .iter()
        .map(|l| {
            layer_payload(
                l.weights.len(),
                l.bias.as_ref().map_or(0, Vec::len),
                clusters,
            )
        })
        .sum()
}

/// Exact length of [`encode`] output for a model of this shape.
pub fn encoded_len(model: &ModelWeights, clusters: usize) -> usize {
    HEADER_LEN + model.layers().len() * LAYER_FRAMING_LEN + payload_len(model, clusters)
}

/// Raw `f32` size of every parameter divided by the clustered payload size.
pub fn model_compression_ratio(model: &ModelWeights, clusters: usize) -> f64 {
    assert!(clusters >= 1, "cluster count must be positive");
    (4 * model.param_count()) as f64 / payload_len(model, clusters) as f64
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode(model: &ClusteredModel) -> Vec<u8> {
    let c = model.cluster_count;
    let bits = bits_per_index(c);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    put_u32(&mut out, model.layers.len());
    put_u32(&mut out, c);
    for l in &model.layers {
        put_u32(&mut out, l.inputs);
        put_u32(&mut out, l.outputs);
        put_u32(&mut out, 4 * l.centroids.len());
        for v in &l.centroids {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let packed = pack(&l.indices, bits);
        put_u32(&mut out, packed.len());
        out.extend_from_slice(&packed);
        match &l.bias {
            Some(b) => {
                put_u32(&mut out, 4 * b.len());
                for v in b {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => put_u32(&mut out, 0),
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::Decode {
            offset: self.pos,
            reason: reason.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return self.fail(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32s(&mut self, byte_len: usize, what: &str) -> Result<Vec<f32>> {
        let b = self.take(byte_len, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn section_len(&mut self, expected: usize, what: &str) -> Result<usize> {
        let at = self.pos;
        let len = self.u32(what)?;
        if len != expected {
            return Err(Error::Decode {
                offset: at,
                reason: format!("{what} length {len}, expected {expected}"),
            });
        }
        Ok(len)
    }
}

pub fn decode(bytes: &[u8]) -> Result<ClusteredModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        r.pos = 0;
        return r.fail("bad magic");
    }
    let version = r.take(1, "version")?[0];
    if version != VERSION {
        r.pos -= 1;
        return r.fail(format!("unsupported version {version}"));
    }
    let layer_count = r.u32("layer count")?;
    let clusters = r.u32("cluster count")?;
    if layer_count == 0 {
        r.pos -= 8;
        return r.fail("model has no layers");
    }
    if clusters == 0 {
        r.pos -= 4;
        return r.fail("cluster count must be positive");
    }
    let bits = bits_per_index(clusters);
    let mut layers = Vec::with_capacity(layer_count.min(1024));
    let mut prev_out: Option<usize> = None;
    for _ in 0..layer_count {
        let at = r.pos;
        let inputs = r.u32("layer inputs")?;
        let outputs = r.u32("layer outputs")?;
        if inputs == 0 || outputs == 0 {
            r.pos = at;
            return r.fail("zero layer dimension");
        }
        if prev_out.is_some_and(|p| p != inputs) {
            r.pos = at;
            return r.fail("layer dimensions do not compose");
        }
        prev_out = Some(outputs);
        let count = inputs * outputs;
        if count > MAX_LAYER_ELEMENTS {
            r.pos = at;
            return r.fail("layer exceeds the element limit");
        }

        let len = r.section_len(4 * clusters, "codebook section")?;
        let centroids = r.f32s(len, "codebook")?;
        if centroids.iter().any(|c| !c.is_finite()) {
            return r.fail("non-finite centroid");
        }

        let len = r.section_len(packed_len(count, bits), "index section")?;
        let at = r.pos;
        let raw = r.take(len, "indices")?;
        let indices = unpack(raw, count, bits).ok_or_else(|| Error::Decode {
            offset: at,
            reason: "non-zero padding bits".into(),
        })?;
        if indices.iter().any(|&i| i as usize >= clusters) {
            return Err(Error::Decode {
                offset: at,
                reason: "index out of codebook range".into(),
            });
        }

        let at = r.pos;
        let bias_len = r.u32("bias section length")?;
        let bias = match bias_len {
            0 => None,
            n if n == 4 * outputs => Some(r.f32s(n, "bias")?),
            n => {
                return Err(Error::Decode {
                    offset: at,
                    reason: format!("bias section length {n}, expected 0 or {}", 4 * outputs),
                })
            }
        };
        layers.push(ClusteredLayer {
            inputs,
            outputs,
            centroids,
            indices,
            bias,
        });
    }
    if r.pos != bytes.len() {
        return r.fail(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(ClusteredModel {
        cluster_count: clusters,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compression::{snap, Codebook};
    use crate::nn::{Activation, DenseLayer};
    use crate::seed;

    fn wide_layer(n_in: usize, n_out: usize, bias: bool) -> ModelWeights {
        let w = (0..n_in * n_out).map(|i| (i as f64 * 0.37).sin()).collect();
        ModelWeights::new(vec![DenseLayer::new(
            n_in,
            n_out,
            w,
            bias.then(|| vec![0.1; n_out]),
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn thousand_weights_sixteen_clusters() {
        let m = wide_layer(100, 10, false);
        assert_eq!(payload_len(&m, 16), 500 + 64);
        let ratio = model_compression_ratio(&m, 16);
        assert!((ratio - 32000.0 / 4512.0).abs() < 1e-12);
        assert!((ratio - 7.09).abs() < 0.01);
    }

    #[test]
    fn single_cluster_has_no_index_bits() {
        let m = wide_layer(10, 10, false);
        assert_eq!(payload_len(&m, 1), 4);
        let cb = Codebook::new(vec![vec![0.25]]).unwrap();
        let bytes = encode(&snap(&m, &cb).unwrap());
        assert_eq!(bytes.len(), encoded_len(&m, 1));
        let back = decode(&bytes).unwrap();
        assert!(back.layers[0].indices.iter().all(|&i| i == 0));
    }

    #[test]
    fn compression_can_lose() {
        let m = wide_layer(100, 10, false);
        assert!(model_compression_ratio(&m, 1000) <= 1.0);
    }

    #[test]
    fn round_trip_and_exact_length() {
        let mut rng = seed::rng_from(4);
        let m = ModelWeights::init_mlp(&[5, 7, 3], &mut rng).unwrap();
        let cb = Codebook::init(&m, 5, &mut rng).unwrap();
        let s = snap(&m, &cb).unwrap();
        let bytes = encode(&s);
        assert_eq!(&bytes[..4], b"FCMP");
        assert_eq!(bytes.len(), encoded_len(&m, 5));
        assert!(decode(&bytes).unwrap().bitwise_eq(&s));
    }

    #[test]
    fn truncation_reports_offset() {
        let mut rng = seed::rng_from(4);
        let m = ModelWeights::init_mlp(&[5, 7, 3], &mut rng).unwrap();
        let cb = Codebook::init(&m, 4, &mut rng).unwrap();
        let bytes = encode(&snap(&m, &cb).unwrap());
        for cut in [0, 3, 12, 30, bytes.len() - 1] {
            match decode(&bytes[..cut]) {
                Err(Error::Decode { offset, .. }) => assert!(offset <= cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Decode { offset: 0, .. })));
        let mut long = bytes;
        long.push(0);
        assert!(decode(&long).is_err());
    }
}
