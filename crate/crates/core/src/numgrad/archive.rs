//! Portable checkpoint container: `name → shape + flat f64 array`, plus a
//! string metadata block.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"SCTA"
//! u32    format version
//! u32    metadata count, then (str key, str value) pairs
//! u32    entry count, then per entry:
//!          str name, u32 ndim, ndim × u64 dims, Π dims × f64 (LE bits)
//! ```
//! where `str` is a `u32` byte length followed by UTF-8 bytes. Floats are
//! stored as raw bits, so a round trip is bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::params::ParameterSet;
use super::tensor::Tensor;
use super::NumError;

pub const ARCHIVE_MAGIC: &[u8; 4] = b"SCTA";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorArchive {
    pub metadata: BTreeMap<String, String>,
    pub entries: Vec<(String, Tensor)>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.push((name.into(), t));
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.insert(key.into(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str, NumError> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| NumError::Archive(format!("missing metadata key {key}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, NumError> {
        self.meta(key)?
            .parse()
            .map_err(|_| NumError::Archive(format!("unparseable metadata {key}")))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Stores values, Adam moments, step count and buffer flags under `prefix`.
    pub fn put_params(&mut self, prefix: &str, params: &ParameterSet) {
        let mut buffers = Vec::new();
        for p in params.iter() {
            self.insert(format!("{prefix}{}", p.name), p.value.clone());
            self.insert(format!("{prefix}{}@m", p.name), p.m.clone());
            self.insert(format!("{prefix}{}@v", p.name), p.v.clone());
            if !p.trainable {
                buffers.push(p.name.clone());
            }
        }
        self.set_meta(format!("{prefix}@step"), params.step);
        self.set_meta(format!("{prefix}@names"), params.iter().map(|p| p.name.as_str()).collect::<Vec<_>>().join(","));
        self.set_meta(format!("{prefix}@buffers"), buffers.join(","));
    }

    pub fn take_params(&self, prefix: &str) -> Result<ParameterSet, NumError> {
        let names = self.meta(&format!("{prefix}@names"))?;
        let buffers: Vec<&str> = self.meta(&format!("{prefix}@buffers"))?.split(',').collect();
        let mut set = ParameterSet::new();
        for name in names.split(',').filter(|s| !s.is_empty()) {
            let fetch = |suffix: &str| {
                self.get(&format!("{prefix}{name}{suffix}"))
                    .cloned()
                    .ok_or_else(|| NumError::MissingParameter(format!("{prefix}{name}{suffix}")))
            };
            let idx = set.insert(name, fetch("")?, !buffers.contains(&name));
            let p = set.iter_mut().nth(idx).expect("just inserted");
            p.m = fetch("@m")?;
            p.v = fetch("@v")?;
        }
        set.step = self.meta_parse(&format!("{prefix}@step"))?;
        Ok(set)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NumError> {
        w.write_all(ARCHIVE_MAGIC)?;
        w.write_all(&ARCHIVE_VERSION.to_le_bytes())?;
        w.write_all(&(self.metadata.len() as u32).to_le_bytes())?;
        for (k, v) in &self.metadata {
            write_str(&mut w, k)?;
            write_str(&mut w, v)?;
        }
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            write_str(&mut w, name)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_bits().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NumError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != ARCHIVE_MAGIC {
            return Err(NumError::Archive("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != ARCHIVE_VERSION {
            return Err(NumError::Archive(format!("unsupported format version {version}")));
        }
        let mut out = TensorArchive::new();
        for _ in 0..read_u32(&mut r)? {
            let k = read_str(&mut r)?;
            let v = read_str(&mut r)?;
            out.metadata.insert(k, v);
        }
        for _ in 0..read_u32(&mut r)? {
            let name = read_str(&mut r)?;
            let ndim = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(f64::from_bits(u64::from_le_bytes(b)));
            }
            out.entries.push((name, Tensor::new(shape, data)?));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), NumError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NumError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<(), NumError> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NumError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, NumError> {
    let n = read_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| NumError::Archive("invalid utf-8".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            vals in prop::collection::vec(prop::num::f64::ANY, 1..40),
            key in "[a-z]{1,8}",
        ) {
            let mut a = TensorArchive::new();
            a.set_meta(key.clone(), "v");
            a.insert("x", Tensor::new(vec![vals.len()], vals.clone()).unwrap());
            let mut buf = Vec::new();
            a.write_to(&mut buf).unwrap();
            let b = TensorArchive::read_from(buf.as_slice()).unwrap();
            let got = b.get("x").unwrap().data();
            prop_assert_eq!(got.len(), vals.len());
            for (x, y) in got.iter().zip(&vals) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            prop_assert_eq!(b.meta(&key).unwrap(), "v");
        }
    }

    #[test]
    fn params_round_trip_with_moments() {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::row(&[1.0, 2.0]), true);
        p.insert("stat", Tensor::row(&[0.5]), false);
        p.step = 7;
        p.iter_mut().next().unwrap().m = Tensor::row(&[0.1, 0.2]);
        let mut a = TensorArchive::new();
        a.put_params("net.", &p);
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        let back = TensorArchive::read_from(buf.as_slice()).unwrap().take_params("net.").unwrap();
        assert_eq!(back.step, 7);
        assert_eq!(back.iter().map(|q| q.trainable).collect::<Vec<_>>(), vec![true, false]);
        assert_eq!(back.get("w").unwrap().m.data(), &[0.1, 0.2]);
        assert_eq!(back.get("w").unwrap().value, p.get("w").unwrap().value);
    }

    #[test]
    fn rejects_wrong_version() {
        let mut buf = Vec::new();
        TensorArchive::new().write_to(&mut buf).unwrap();
        buf[4] = 99;
        assert!(TensorArchive::read_from(buf.as_slice()).is_err());
    }
}
