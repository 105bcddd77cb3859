//! Binary network checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes   "NESQNET\0"
//! version    u32       1
//! n_sizes    u32       number of layer sizes (layers + 1)
//! sizes      n_sizes x u32, input width first
//! per layer  weights (outputs x inputs, row-major) then biases, as f64 bit patterns
//! ```
//!
//! Loading restores every parameter bit-for-bit.

use std::path::Path;

use super::mlp::Mlp;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NESQNET\0";
pub const VERSION: u32 = 1;

pub fn to_bytes(net: &Mlp) -> Vec<u8> {
    let sizes = net.sizes();
    let mut out = Vec::with_capacity(16 + 4 * sizes.len() + 8 * net.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for s in &sizes {
        out.extend_from_slice(&(*s as u32).to_le_bytes());
    }
    for l in &net.layers {
        for v in l.weights.iter().chain(&l.biases) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.buf.len() < N {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        Ok(head.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Mlp> {
    let mut r = Reader { buf: bytes };
    if &r.take::<8>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::Checkpoint(format!("implausible layer count {n}")));
    }
    let sizes = (0..n).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let mut net = Mlp::zeros(&sizes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let expected: usize = net.param_count() * 8;
    if r.buf.len() != expected {
        return Err(Error::Checkpoint(format!(
            "payload is {} bytes, expected {expected}",
            r.buf.len()
        )));
    }
    for l in &mut net.layers {
        for v in l.weights.iter_mut().chain(l.biases.iter_mut()) {
            *v = r.f64()?;
        }
    }
    Ok(net)
}

pub fn save(net: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(net))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Mlp> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let net = Mlp::new(&[6, 7, 5, 9], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("checkpoint.bin");
        save(&net, &p).unwrap();
        let back = load(&p).unwrap();
        for (a, b) in net.layers.iter().zip(&back.layers) {
            for (x, y) in a.weights.iter().chain(&a.biases).zip(b.weights.iter().chain(&b.biases)) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(to_bytes(&back), std::fs::read(&p).unwrap());
    }

    #[test]
    fn rejects_corruption() {
        let net = Mlp::zeros(&[2, 2]).unwrap();
        let mut b = to_bytes(&net);
        assert!(from_bytes(&b[..b.len() - 1]).is_err());
        b[0] = b'X';
        assert!(matches!(from_bytes(&b), Err(Error::Checkpoint(_))));
    }
}
