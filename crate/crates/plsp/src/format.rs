//! Little-endian binary formats.
//!
//! Dataset (`PLSP`): magic, `u16` version, `u16` flags (bit 0: truth
//! present), `u64` n, `u32` l, `u32` shape rank and one `u32` per dim, then
//! `n·∏dims` `f32` features, `n·⌈l/64⌉` `u64` candidate-mask words and, if
//! flagged, `n` `u32` labels.
//!
//! Checkpoint (`PLSW`): magic, `u16` version, `u16` flags (zero), `u32`
//! tensor count, then per tensor `u32` rows, `u32` cols and `f64` data. The
//! tensors are the feature layers' `(weight, bias)` pairs followed by the head.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use plsp_core::model::{ClassifierParams, Dense};
use plsp_core::pldata::{FeatureShape, LabelSet, PlDataset};
use plsp_core::tensor::Tensor;

pub const DATASET_MAGIC: [u8; 4] = *b"PLSP";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PLSW";
pub const FORMAT_VERSION: u16 = 1;
const FLAG_TRUTH: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u16 },
    #[error("unknown flag bits {0:#06x}")]
    UnknownFlags(u16),
    #[error("truncated payload while reading {0}")]
    Truncated(&'static str),
    #[error("trailing bytes after the payload")]
    TrailingData,
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(#[from] plsp_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn exact<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], FormatError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| eof_as(e, what))?;
        Ok(buf)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, FormatError> {
        self.exact(what).map(u16::from_le_bytes)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        self.exact(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        self.exact(what).map(u64::from_le_bytes)
    }

    /// Reads `len` bytes without trusting `len` for the allocation size.
    fn bytes(&mut self, len: usize, what: &'static str) -> Result<Vec<u8>, FormatError> {
        let mut buf = Vec::new();
        (&mut self.inner).take(len as u64).read_to_end(&mut buf)?;
        if buf.len() < len {
            return Err(FormatError::Truncated(what));
        }
        Ok(buf)
    }

    fn finish(mut self) -> Result<(), FormatError> {
        let mut probe = [0u8; 1];
        loop {
            match self.inner.read(&mut probe) {
                Ok(0) => return Ok(()),
                Ok(_) => return Err(FormatError::TrailingData),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }
}

fn eof_as(e: io::Error, what: &'static str) -> FormatError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        FormatError::Truncated(what)
    } else {
        FormatError::Io(e)
    }
}

fn header<R: Read>(r: &mut Reader<R>, magic: [u8; 4]) -> Result<u16, FormatError> {
    let found = r.exact::<4>("magic")?;
    if found != magic {
        return Err(FormatError::BadMagic { found });
    }
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(FormatError::VersionMismatch { found: version });
    }
    r.u16("flags")
}

fn byte_len(count: u64, width: usize) -> Result<usize, FormatError> {
    usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(width))
        .ok_or_else(|| FormatError::BadHeader(format!("{count} records overflow the address space")))
}

pub fn write_dataset<W: Write>(mut w: W, data: &PlDataset) -> io::Result<()> {
    let truth = data.truth();
    let dims = data.shape().dims();
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let flags = if truth.is_some() { FLAG_TRUTH } else { 0 };
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    w.write_all(&(data.classes() as u32).to_le_bytes())?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in data.features() {
        w.write_all(&v.to_le_bytes())?;
    }
    for c in data.candidates() {
        for word in c.words() {
            w.write_all(&word.to_le_bytes())?;
        }
    }
    if let Some(t) = truth {
        for y in t {
            w.write_all(&y.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_dataset<R: Read>(r: R) -> Result<PlDataset, FormatError> {
    let mut r = Reader { inner: r };
    let flags = header(&mut r, DATASET_MAGIC)?;
    if flags & !FLAG_TRUTH != 0 {
        return Err(FormatError::UnknownFlags(flags));
    }
    let n = r.u64("instance count")?;
    let classes = r.u32("class count")? as usize;
    let rank = r.u32("shape rank")?;
    if rank != 1 && rank != 3 {
        return Err(FormatError::BadHeader(format!("shape rank {rank} (expected 1 or 3)")));
    }
    let mut dims = Vec::new();
    for _ in 0..rank {
        dims.push(r.u32("shape dims")? as usize);
    }
    let shape = FeatureShape::from_dims(&dims).expect("rank checked above");
    if shape.is_empty() {
        return Err(FormatError::BadHeader("empty feature shape".into()));
    }
    if classes < 3 {
        return Err(plsp_core::Error::InvalidArity { classes }.into());
    }

    let per_record = shape.len().checked_mul(4).ok_or_else(|| FormatError::BadHeader("feature shape too large".into()))?;
    let raw = r.bytes(byte_len(n, per_record)?, "features")?;
    let features = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let words = LabelSet::words_for(classes);
    let raw = r.bytes(byte_len(n, words * 8)?, "candidate masks")?;
    let candidates = raw
        .chunks_exact(words * 8)
        .map(|rec| {
            LabelSet::from_words(
                rec.chunks_exact(8)
                    .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        })
        .collect();

    let truth = if flags & FLAG_TRUTH != 0 {
        let raw = r.bytes(byte_len(n, 4)?, "truth labels")?;
        Some(
            raw.chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    } else {
        None
    };
    r.finish()?;
    Ok(PlDataset::new(classes, shape, features, candidates, truth)?)
}

pub fn encode_dataset(data: &PlDataset) -> Vec<u8> {
    let mut out = Vec::new();
    write_dataset(&mut out, data).expect("writing to memory cannot fail");
    out
}

pub fn save_dataset(path: &Path, data: &PlDataset) -> io::Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), data)
}

pub fn load_dataset(path: &Path) -> Result<PlDataset, FormatError> {
    read_dataset(BufReader::new(File::open(path)?))
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &ClassifierParams) -> io::Result<()> {
    let tensors = params.tensors();
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.rows() as u32).to_le_bytes())?;
        w.write_all(&(t.cols() as u32).to_le_bytes())?;
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<ClassifierParams, FormatError> {
    let mut r = Reader { inner: r };
    let flags = header(&mut r, CHECKPOINT_MAGIC)?;
    if flags != 0 {
        return Err(FormatError::UnknownFlags(flags));
    }
    let count = r.u32("tensor count")? as usize;
    if count < 3 || count % 2 == 0 {
        return Err(FormatError::BadHeader(format!("{count} tensors (expected an odd count of at least 3)")));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = r.u32("tensor rows")? as usize;
        let cols = r.u32("tensor cols")? as usize;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| FormatError::BadHeader("tensor too large".into()))?;
        let raw = r.bytes(byte_len(len as u64, 8)?, "tensor data")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::from_vec(rows, cols, data));
    }
    r.finish()?;
    let head = tensors.pop().expect("count >= 3");
    let mut layers = Vec::new();
    let mut it = tensors.into_iter();
    while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
        layers.push(Dense { weight, bias });
    }
    Ok(ClassifierParams::from_parts(layers, head)?)
}

pub fn save_checkpoint(path: &Path, params: &ClassifierParams) -> io::Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), params)
}

pub fn load_checkpoint(path: &Path) -> Result<ClassifierParams, FormatError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
