//! Binary checkpoint: magic, format version, config snapshot, vocabulary and
//! named tensors stored as 32-bit floats. All integers are little-endian
//! `u32`; strings are length-prefixed UTF-8.
//!
//! ```text
//! "KPGAN\0" version config vocab_count {token}* tensor_count
//! {name ndim dim* f32*}*
//! ```
//!
//! Tensors are written in name order, generator tensors under `gen.` and
//! discriminator tensors under `disc.`, so equal contents give equal bytes.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::discriminator::DiscriminatorParams;
use crate::error::{Error, Result};
use crate::generator::GeneratorParams;
use crate::params::ParamSet;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 6] = b"KPGAN\0";
pub const FORMAT_VERSION: u32 = 1;

const GEN_PREFIX: &str = "gen.";
const DISC_PREFIX: &str = "disc.";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Config text the run was started with.
    pub config: String,
    pub vocab: Vocabulary,
    /// Prefixed tensors; values are exactly representable as `f32`.
    pub tensors: ParamSet,
}

fn to_f32_precision(set: &ParamSet, prefix: &str) -> ParamSet {
    let mut out = ParamSet::new();
    for (name, t) in set.iter() {
        let data = t.data().iter().map(|&v| v as f32 as f64).collect();
        let t = Tensor::new(t.shape().to_vec(), data).expect("shape unchanged");
        out.insert(format!("{prefix}{name}"), t);
    }
    out
}

impl Checkpoint {
    /// Values are rounded to `f32`, the precision they are stored at.
    pub fn new(
        config: String,
        vocab: Vocabulary,
        gen: Option<&GeneratorParams>,
        disc: Option<&DiscriminatorParams>,
    ) -> Self {
        let mut tensors = ParamSet::new();
        if let Some(g) = gen {
            tensors.extend(to_f32_precision(g.params(), GEN_PREFIX));
        }
        if let Some(d) = disc {
            tensors.extend(to_f32_precision(d.params(), DISC_PREFIX));
        }
        Self { config, vocab, tensors }
    }

    fn has(&self, prefix: &str) -> bool {
        self.tensors.names().any(|n| n.starts_with(prefix))
    }

    pub fn has_generator(&self) -> bool {
        self.has(GEN_PREFIX)
    }

    pub fn has_discriminator(&self) -> bool {
        self.has(DISC_PREFIX)
    }

    pub fn generator(&self) -> Result<Option<GeneratorParams>> {
        if !self.has_generator() {
            return Ok(None);
        }
        GeneratorParams::from_params(self.tensors.strip_prefix(GEN_PREFIX)).map(Some)
    }

    pub fn discriminator(&self) -> Result<Option<DiscriminatorParams>> {
        if !self.has_discriminator() {
            return Ok(None);
        }
        DiscriminatorParams::from_params(self.tensors.strip_prefix(DISC_PREFIX)).map(Some)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_str(&mut out, &self.config);
        put_u32(&mut out, self.vocab.len() as u32);
        for t in self.vocab.tokens() {
            put_str(&mut out, t);
        }
        put_u32(&mut out, self.tensors.len() as u32);
        for (name, t) in self.tensors.iter() {
            put_str(&mut out, name);
            put_u32(&mut out, t.shape().len() as u32);
            for &d in t.shape() {
                put_u32(&mut out, d as u32);
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let config = r.string()?;
        let n_tokens = r.u32()? as usize;
        let tokens = (0..n_tokens).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let vocab = Vocabulary::from_tokens(tokens)?;
        let n_tensors = r.u32()? as usize;
        let mut tensors = ParamSet::new();
        let mut previous: Option<String> = None;
        for _ in 0..n_tensors {
            let name = r.string()?;
            if previous.as_ref().is_some_and(|p| *p >= name) {
                return Err(Error::Format(format!("tensor {name:?} out of order or repeated")));
            }
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("tensor {name:?} is too large")))?;
            let raw = r.take(count.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            tensors.insert(name.clone(), Tensor::new(shape, data)?);
            previous = Some(name);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { config, vocab, tensors })
    }

    /// Writes atomically: a crash mid-write leaves any previous file intact.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes();
        atomic_write(path, |f| f.write_all(&bytes))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Writes through `write` into a temporary file next to `path`, syncs it and
/// renames it over `path`. If `write` fails the temporary file is removed
/// and `path` is not touched.
pub fn atomic_write<F>(path: impl AsRef<Path>, write: F) -> Result<()>
where
    F: FnOnce(&mut File) -> std::io::Result<()>,
{
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let result = File::create(&tmp).and_then(|mut f| {
        write(&mut f)?;
        f.sync_all()
    });
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format("string is not UTF-8".into()))
    }
}
