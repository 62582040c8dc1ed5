//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//! `"HGLC"`, `u32` version, `u32` entry count, then per entry
//! `u32` name length, name bytes, `u32` rank, `u64` dims, values, first
//! moments, second moments (each as `f64`). A 32-byte SHA-256 of everything
//! before it closes the file.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{NnError, ParamEntry, ParameterStore, Tensor};

pub const MAGIC: &[u8; 4] = b"HGLC";
pub const VERSION: u32 = 1;
const OPTIM_ENTRY: &str = "meta.optim";

/// Parameters plus non-trainable metadata tensors (names starting `meta.`).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, Tensor)>,
    pub store: ParameterStore,
}

impl Checkpoint {
    pub fn meta(&self, name: &str) -> Option<&Tensor> {
        self.meta.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let count = self.meta.len() + 1 + self.store.len();
        out.extend_from_slice(&(count as u32).to_le_bytes());
        for (name, t) in &self.meta {
            let zeros = Tensor::zeros(t.shape());
            write_entry(&mut out, name, t, &zeros, &zeros);
        }
        let optim = Tensor::row_vector(vec![self.store.step as f64]);
        let zeros = Tensor::zeros(optim.shape());
        write_entry(&mut out, OPTIM_ENTRY, &optim, &zeros, &zeros);
        for e in self.store.entries() {
            write_entry(&mut out, &e.name, &e.value, &e.m, &e.v);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        if bytes.len() < 4 + 4 + 4 + 32 {
            return Err(NnError::Checkpoint("file too short".into()));
        }
        let (body, footer) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != footer {
            return Err(NnError::ChecksumMismatch);
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut meta = Vec::new();
        let mut store = ParameterStore::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| NnError::Checkpoint("entry name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let value = Tensor::new(shape.clone(), r.f64s(n)?)?;
            let m = Tensor::new(shape.clone(), r.f64s(n)?)?;
            let v = Tensor::new(shape.clone(), r.f64s(n)?)?;
            if name == OPTIM_ENTRY {
                store.step = value.data().first().copied().unwrap_or(0.0) as u64;
            } else if name.starts_with("meta.") {
                meta.push((name, value));
            } else {
                let grad = Tensor::zeros(&shape);
                store.push_entry(ParamEntry { name, value, grad, m, v })?;
            }
        }
        if r.pos != body.len() {
            return Err(NnError::Checkpoint("trailing bytes after entries".into()));
        }
        Ok(Self { meta, store })
    }

    /// Writes via a temporary file and rename so readers never see a partial file.
    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn write_entry(out: &mut Vec<u8>, name: &str, value: &Tensor, m: &Tensor, v: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(value.shape().len() as u32).to_le_bytes());
    for &d in value.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for t in [value, m, v] {
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| NnError::Checkpoint("truncated entry".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, NnError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| NnError::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
