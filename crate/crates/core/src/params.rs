//! Named parameter storage, initialisation and the binary checkpoint format.
//!
//! Checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes   "TGRNCKPT"
//! version  u32       1
//! count    u32       number of tensors
//! repeated count times:
//!   name_len u32, name (UTF-8, name_len bytes)
//!   ndim     u32, dims (u64 x ndim)
//!   data     f64 x product(dims)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, TensorId};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TGRNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamKey(usize);

impl ParamKey {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named, trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// Graph ids of a [`ParamStore`] after binding it into one graph.
#[derive(Clone, Debug)]
pub struct Bound(Vec<TensorId>);

impl Bound {
    /// Wraps ids that are already in [`ParamStore`] order.
    pub fn from_ids(ids: Vec<TensorId>) -> Self {
        Bound(ids)
    }

    pub fn id(&self, key: ParamKey) -> TensorId {
        self.0[key.0]
    }

    pub fn ids(&self) -> &[TensorId] {
        &self.0
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamKey {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.tensors.push(tensor.with_requires_grad(true));
        ParamKey(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, key: ParamKey) -> &Tensor {
        &self.tensors[key.0]
    }

    pub fn get_mut(&mut self, key: ParamKey) -> &mut Tensor {
        &mut self.tensors[key.0]
    }

    pub fn name(&self, key: ParamKey) -> &str {
        &self.names[key.0]
    }

    pub fn key(&self, name: &str) -> Option<ParamKey> {
        self.names.iter().position(|n| n == name).map(ParamKey)
    }

    pub fn keys(&self) -> impl Iterator<Item = ParamKey> {
        (0..self.tensors.len()).map(ParamKey)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Records every parameter as a leaf of `g`. With `trainable = false`
    /// the leaves are constants and no gradients are tracked.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        Bound(
            self.tensors
                .iter()
                .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
                .collect(),
        )
    }

    /// Writes the checkpoint format to `w`.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in self.iter() {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    /// Parses a checkpoint stream into `(name, tensor)` pairs.
    pub fn read_entries(mut r: impl Read) -> std::result::Result<Vec<(String, Tensor)>, String> {
        fn take<const N: usize>(r: &mut impl Read) -> std::result::Result<[u8; N], String> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf).map_err(|e| format!("truncated: {e}"))?;
            Ok(buf)
        }
        if &take::<8>(&mut r)? != CHECKPOINT_MAGIC {
            return Err("bad magic".into());
        }
        let version = u32::from_le_bytes(take(&mut r)?);
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let count = u32::from_le_bytes(take(&mut r)?) as usize;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let len = u32::from_le_bytes(take(&mut r)?) as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name).map_err(|e| format!("truncated: {e}"))?;
            let name = String::from_utf8(name).map_err(|_| "tensor name is not UTF-8".to_string())?;
            let ndim = u32::from_le_bytes(take(&mut r)?) as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(u64::from_le_bytes(take(&mut r)?) as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(f64::from_le_bytes(take(&mut r)?));
            }
            let t = Tensor::new(&shape, data).map_err(|e| format!("tensor `{name}`: {e}"))?;
            out.push((name, t));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| e.to_string())? != 0 {
            return Err("trailing bytes after last tensor".into());
        }
        Ok(out)
    }

    /// Replaces every tensor's values with the checkpoint's. Names and shapes
    /// must match exactly; the error names the first offending tensor.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let err = |msg: String| Error::Checkpoint {
            path: path.to_path_buf(),
            msg,
        };
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let entries = Self::read_entries(BufReader::new(file)).map_err(err)?;
        self.assign(entries).map_err(err)
    }

    pub fn assign(&mut self, entries: Vec<(String, Tensor)>) -> std::result::Result<(), String> {
        if let Some((extra, _)) = entries.iter().find(|(n, _)| self.key(n).is_none()) {
            return Err(format!("tensor `{extra}` is not part of this model"));
        }
        for (i, name) in self.names.iter().enumerate() {
            let Some((_, t)) = entries.iter().find(|(n, _)| n == name) else {
                return Err(format!("tensor `{name}` missing from checkpoint"));
            };
            if t.shape() != self.tensors[i].shape() {
                return Err(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    t.shape(),
                    self.tensors[i].shape()
                ));
            }
        }
        for (name, t) in entries {
            let key = self.key(&name).expect("checked above");
            self.tensors[key.0] = t.with_requires_grad(true);
        }
        Ok(())
    }
}

/// Weight initialisation scheme. Biases are always zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Zero-mean Gaussian with a fixed standard deviation.
    Gaussian { std: f64 },
    /// Zero-mean Gaussian with `std = sqrt(2 / fan_in)`.
    He,
}

impl Init {
    pub fn std_for(self, fan_in: usize) -> f64 {
        match self {
            Init::Gaussian { std } => std,
            Init::He => (2.0 / fan_in as f64).sqrt(),
        }
    }

    /// Samples a tensor of `shape`, where `shape[1..]` is the fan-in.
    pub fn sample(self, shape: &[usize], rng: &mut impl Rng) -> Tensor {
        let fan_in: usize = shape[1..].iter().product();
        let std = self.std_for(fan_in.max(1));
        let normal = Normal::new(0.0, std).expect("finite std");
        Tensor::from_fn(shape, |_| normal.sample(rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("a.weight", Tensor::from_fn(&[2, 1, 3, 3], |i| i as f64 * 0.5 - 1.0));
        s.add("a.bias", Tensor::from_fn(&[2], |i| -(i as f64)));
        s
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let s = store();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
        let mut other = store();
        for t in other.tensors_mut() {
            t.data_mut().fill(7.0);
        }
        other.assign(ParamStore::read_entries(&buf[..]).unwrap()).unwrap();
        assert_eq!(other, s);
    }

    #[test]
    fn checkpoint_rejects_mismatches() {
        let s = store();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();

        let mut wrong = ParamStore::new();
        wrong.add("a.weight", Tensor::zeros(&[3, 1, 3, 3]));
        wrong.add("a.bias", Tensor::zeros(&[2]));
        let err = wrong.assign(ParamStore::read_entries(&buf[..]).unwrap()).unwrap_err();
        assert!(err.contains("a.weight"), "{err}");

        let mut missing = store();
        missing.add("b.weight", Tensor::zeros(&[1]));
        let err = missing.assign(ParamStore::read_entries(&buf[..]).unwrap()).unwrap_err();
        assert!(err.contains("b.weight"), "{err}");

        assert!(ParamStore::read_entries(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(ParamStore::read_entries(&bad[..]).is_err());
    }

    #[test]
    fn gaussian_init_statistics() {
        // 10^4 samples from N(0, 0.01): the sample mean has sd 1e-4 and the
        // sample sd has sd ~ 0.01 / sqrt(2 * 10^4) ~ 7.1e-5.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = Init::Gaussian { std: 0.01 }.sample(&[100, 100], &mut rng);
        let n = t.numel() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 5.0 * 0.01 / n.sqrt(), "mean {mean}");
        assert!((var.sqrt() - 0.01).abs() < 5.0 * 0.01 / (2.0 * n).sqrt(), "std {}", var.sqrt());
    }

    #[test]
    fn he_std_uses_fan_in() {
        assert!((Init::He.std_for(18) - (1.0f64 / 9.0).sqrt()).abs() < 1e-15);
    }
}
