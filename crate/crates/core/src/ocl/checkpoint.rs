//! Adapter checkpoint binary format (little endian):
//!
//! | bytes | field |
//! |---|---|
//! | 8 | magic `MMVMADPT` |
//! | 2 | format version (1) |
//! | 1 | scalar width in bytes (4 or 8) |
//! | 1 | activation code (0 relu, 1 leaky relu) |
//! | 4 x 3 | in, hidden, out dims |
//! | 8 | init seed |
//! | 8 | training steps |
//! | 8 | parameter count |
//! | width x count | parameters `w1, b1, w2, b2` |
//! | 32 | SHA-256 of everything above |

use sha2::{Digest, Sha256};

use crate::Scalar;

use super::{Activation, Adapter, OclError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MMVMADPT";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub steps: u64,
}

pub fn encode_checkpoint<T: Scalar>(adapter: &Adapter<T>, meta: CheckpointMeta) -> Vec<u8> {
    let params = adapter.parameters();
    let mut out = Vec::with_capacity(64 + params.len() * T::WIDTH as usize);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(T::WIDTH);
    out.push(adapter.activation.code());
    for d in [adapter.in_dim, adapter.hidden_dim, adapter.out_dim] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&meta.seed.to_le_bytes());
    out.extend_from_slice(&meta.steps.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_vec());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], OclError> {
        let s = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| OclError::Checkpoint("truncated".into()))?;
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, OclError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, OclError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(Adapter<T>, CheckpointMeta), OclError> {
    let bad = |m: &str| OclError::Checkpoint(m.to_string());
    if bytes.len() < 32 + CHECKPOINT_MAGIC.len() {
        return Err(bad("truncated"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("content hash mismatch"));
    }
    let mut r = Reader { bytes: body, at: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(OclError::Checkpoint(format!("unsupported version {version}")));
    }
    let width = r.take(1)?[0];
    if width != T::WIDTH {
        return Err(OclError::Checkpoint(format!(
            "checkpoint stores {width}-byte scalars, reader expects {}",
            T::WIDTH
        )));
    }
    let activation = Activation::from_code(r.take(1)?[0]).ok_or_else(|| bad("unknown activation"))?;
    let (i, h, o) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let meta = CheckpointMeta {
        seed: r.u64()?,
        steps: r.u64()?,
    };
    let count = r.u64()? as usize;
    let mut adapter = Adapter::zeros(i, h, o).with_activation(activation);
    if count != adapter.parameter_count() {
        return Err(bad("parameter count disagrees with dims"));
    }
    let w = width as usize;
    let blob = r.take(count * w)?;
    let params: Vec<T> = blob.chunks(w).map(T::from_le_slice).collect();
    if r.at != body.len() {
        return Err(bad("trailing bytes"));
    }
    adapter.set_parameters(&params)?;
    Ok((adapter, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let a = Adapter::<f64>::init(5, 7, 3, 42).with_activation(Activation::LeakyRelu);
        let meta = CheckpointMeta { seed: 42, steps: 10 };
        let bytes = encode_checkpoint(&a, meta);
        let (b, m) = decode_checkpoint::<f64>(&bytes).unwrap();
        assert_eq!((a, meta), (b, m));
        assert!(decode_checkpoint::<f32>(&bytes).is_err());
        let mut broken = bytes.clone();
        broken[40] ^= 1;
        assert!(decode_checkpoint::<f64>(&broken).is_err());
        assert!(decode_checkpoint::<f64>(&bytes[..20]).is_err());
        let a32 = Adapter::<f32>::init(2, 3, 2, 1);
        let (b32, _) = decode_checkpoint::<f32>(&encode_checkpoint(&a32, meta)).unwrap();
        assert_eq!(a32, b32);
    }
}
