//! Versioned binary weight checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "TSSLBPCK"
//! version   u32
//! digest    32 bytes SHA-256 of the model description
//! n_layers  u32
//! per layer u8 kind (0 dense, 1 conv, 2 pool), u32 rank, rank x u32 dims
//! payload   f32 weights of every layer in order
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layers::LayerKind;
use crate::network::NetworkSpec;

pub const MAGIC: &[u8; 8] = b"TSSLBPCK";
pub const VERSION: u32 = 1;
pub const DIGEST_LEN: usize = 32;

/// SHA-256 over everything that gives the weights their meaning: input
/// shape, layer kinds and shapes, neuron constants and window length.
pub fn model_digest(net: &NetworkSpec) -> [u8; DIGEST_LEN] {
    let mut h = Sha256::new();
    h.update(format!("input {}\n", net.input));
    h.update(format!("steps {}\n", net.n_steps));
    for idx in 0..net.layers.len() {
        let l = &net.layers[idx];
        let n = net.neuron_config(idx);
        h.update(format!(
            "{:?} {} -> {} bias {:e} neuron {:e} {:e} {:e}\n",
            l.kind, l.input, l.output, l.bias_current, n.tau_m, n.tau_s, n.v_th
        ));
    }
    h.finalize().into()
}

fn kind_code(kind: &LayerKind) -> u8 {
    match kind {
        LayerKind::Dense => 0,
        LayerKind::Conv2d { .. } => 1,
        LayerKind::AvgPool { .. } => 2,
    }
}

/// Weight shapes of a network as stored in the header.
fn header_shapes(net: &NetworkSpec) -> Vec<(u8, Vec<usize>)> {
    net.layers
        .iter()
        .map(|l| {
            let shape = if l.is_spiking() { l.weight_shape() } else { Vec::new() };
            (kind_code(&l.kind), shape)
        })
        .collect()
}

/// Serializes the weights of `net`. Weights are stored as `f32`.
pub fn encode_checkpoint(net: &NetworkSpec, digest: &[u8; DIGEST_LEN]) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * net.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(digest);
    let shapes = header_shapes(net);
    out.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for (kind, dims) in &shapes {
        out.push(*kind);
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for l in &net.layers {
        for &w in &l.weights {
            out.extend_from_slice(&(w as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let needed = self.at + n;
        if needed > self.bytes.len() {
            return Err(Error::CheckpointTruncated {
                needed,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.at..needed];
        self.at = needed;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Loads the weights in `bytes` into `net`, which supplies the architecture.
/// The stored digest must equal `expected_digest` and the layer shapes must
/// match. `net` is left untouched on any error.
pub fn decode_checkpoint(bytes: &[u8], net: &mut NetworkSpec, expected_digest: &[u8; DIGEST_LEN]) -> Result<()> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(MAGIC.len()).map_err(|_| Error::CheckpointMagic)? != MAGIC {
        return Err(Error::CheckpointMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::CheckpointVersion(version));
    }
    if r.take(DIGEST_LEN)? != expected_digest {
        return Err(Error::CheckpointDigest);
    }
    let n_layers = r.u32()? as usize;
    let expected = header_shapes(net);
    if n_layers != expected.len() {
        return Err(Error::ArchitectureMismatch(format!(
            "checkpoint has {n_layers} layers, network {}",
            expected.len()
        )));
    }
    for (idx, (kind, dims)) in expected.iter().enumerate() {
        let found_kind = r.take(1)?[0];
        let rank = r.u32()? as usize;
        let found: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        if found_kind != *kind || &found != dims {
            return Err(Error::ArchitectureMismatch(format!(
                "layer {idx}: checkpoint kind {found_kind} shape {found:?}, network kind {kind} shape {dims:?}"
            )));
        }
    }
    let mut weights = Vec::with_capacity(net.layers.len());
    for l in &net.layers {
        let raw = r.take(4 * l.weights.len())?;
        weights.push(
            raw.chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect::<Vec<f64>>(),
        );
    }
    if r.at != bytes.len() {
        return Err(Error::ArchitectureMismatch(format!(
            "{} trailing bytes after the weight payload",
            bytes.len() - r.at
        )));
    }
    for (l, w) in net.layers.iter_mut().zip(weights) {
        l.weights = w;
    }
    Ok(())
}

pub fn save_checkpoint(net: &NetworkSpec, digest: &[u8; DIGEST_LEN], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(net, digest)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(
    path: impl AsRef<Path>,
    net: &mut NetworkSpec,
    expected_digest: &[u8; DIGEST_LEN],
) -> Result<()> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, net, expected_digest)
}

/// Rounds every weight to the nearest `f32`, the precision checkpoints keep.
pub fn round_to_storage(net: &mut NetworkSpec) {
    for l in &mut net.layers {
        for w in &mut l.weights {
            *w = f64::from(*w as f32);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_weights, InitConfig};
    use crate::neuron::NeuronConfig;

    fn net() -> NetworkSpec {
        let mut n = NetworkSpec::from_arch("1x6x6-2C3-P2-3", None, NeuronConfig::default(), 4).unwrap();
        init_weights(&mut n, 5, InitConfig::default());
        round_to_storage(&mut n);
        n
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let a = net();
        let d = model_digest(&a);
        let bytes = encode_checkpoint(&a, &d);
        let mut b = a.clone();
        b.layers.iter_mut().for_each(|l| l.weights.fill(0.0));
        decode_checkpoint(&bytes, &mut b, &d).unwrap();
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            let bits = |w: &[f64]| w.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&la.weights), bits(&lb.weights));
        }
        assert_eq!(encode_checkpoint(&b, &d), bytes);
    }

    #[test]
    fn distinct_failures() {
        let a = net();
        let d = model_digest(&a);
        let bytes = encode_checkpoint(&a, &d);
        let mut b = a.clone();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_checkpoint(&bad, &mut b, &d),
            Err(Error::CheckpointMagic)
        ));

        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(
            decode_checkpoint(&bad, &mut b, &d),
            Err(Error::CheckpointVersion(9))
        ));

        let mut bad = bytes.clone();
        bad[12 + 7] ^= 0x01;
        assert!(matches!(
            decode_checkpoint(&bad, &mut b, &d),
            Err(Error::CheckpointDigest)
        ));

        let bad = &bytes[..bytes.len() - 3];
        assert!(matches!(
            decode_checkpoint(bad, &mut b, &d),
            Err(Error::CheckpointTruncated { .. })
        ));
        assert_eq!(b, a, "failed loads leave the network untouched");

        let mut other = NetworkSpec::from_arch("1x6x6-2C3-P2-4", None, NeuronConfig::default(), 4).unwrap();
        let od = model_digest(&other);
        assert!(matches!(
            decode_checkpoint(&bytes, &mut other, &od),
            Err(Error::CheckpointDigest)
        ));
    }

    #[test]
    fn digest_tracks_model_constants() {
        let a = net();
        let mut b = a.clone();
        b.neuron.tau_m = 6.0;
        assert_ne!(model_digest(&a), model_digest(&b));
        let mut c = a.clone();
        c.layers[0].weights[0] += 1.0;
        assert_eq!(model_digest(&a), model_digest(&c));
    }
}
