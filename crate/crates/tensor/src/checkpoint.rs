//! Versioned binary tensor container.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic    8 bytes   "SMISCKPT"
//! version  u32       1
//! count    u32       number of records
//! record * count:
//!   name_len u32, name UTF-8 bytes
//!   dtype    u8      0 = f32, 1 = f64, 2 = u8
//!   rank     u8
//!   dims     rank * u64
//!   values   prod(dims) * dtype size bytes, little-endian
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::scalar::{DType, Float};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SMISCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum RecordData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl RecordData {
    pub fn dtype(&self) -> DType {
        match self {
            RecordData::F32(_) => DType::F32,
            RecordData::F64(_) => DType::F64,
            RecordData::U8(_) => DType::U8,
        }
    }

    fn len(&self) -> usize {
        match self {
            RecordData::F32(v) => v.len(),
            RecordData::F64(v) => v.len(),
            RecordData::U8(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: RecordData,
}

impl Record {
    pub fn from_tensor<T: Float>(name: impl Into<String>, t: &Tensor<T>) -> Self {
        let data = match T::DTYPE {
            DType::F32 => RecordData::F32(t.data().iter().map(|v| v.to_f64c() as f32).collect()),
            _ => RecordData::F64(t.data().iter().map(|v| v.to_f64c()).collect()),
        };
        Record {
            name: name.into(),
            shape: t.shape().to_vec(),
            data,
        }
    }

    pub fn bytes(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Record {
            name: name.into(),
            shape: vec![bytes.len()],
            data: RecordData::U8(bytes),
        }
    }

    /// Float payload converted to `T`.
    pub fn to_tensor<T: Float>(&self) -> Result<Tensor<T>> {
        let data: Vec<T> = match &self.data {
            RecordData::F32(v) => v.iter().map(|&x| T::from_f64c(x as f64)).collect(),
            RecordData::F64(v) => v.iter().map(|&x| T::from_f64c(x)).collect(),
            RecordData::U8(_) => {
                return Err(TensorError::Checkpoint(format!("{} holds bytes, not floats", self.name)))
            }
        };
        Tensor::new(&self.shape, data)
    }
}

pub fn write_records(mut w: impl Write, records: &[Record]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    for r in records {
        let numel: usize = r.shape.iter().product();
        if numel != r.data.len() {
            return Err(TensorError::Checkpoint(format!("{}: shape/data length mismatch", r.name)));
        }
        if r.shape.len() > u8::MAX as usize {
            return Err(TensorError::Checkpoint(format!("{}: rank too large", r.name)));
        }
        w.write_all(&(r.name.len() as u32).to_le_bytes())?;
        w.write_all(r.name.as_bytes())?;
        w.write_all(&[r.data.dtype() as u8, r.shape.len() as u8])?;
        for &d in &r.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(numel * r.data.dtype().size());
        match &r.data {
            RecordData::F32(v) => v.iter().for_each(|x| x.write_le(&mut buf)),
            RecordData::F64(v) => v.iter().for_each(|x| x.write_le(&mut buf)),
            RecordData::U8(v) => buf.extend_from_slice(v),
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| TensorError::Checkpoint(format!("truncated file: {e}")))?;
    Ok(buf)
}

pub fn read_records(mut r: impl Read) -> Result<Vec<Record>> {
    let magic: [u8; 8] = read_exact(&mut r)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_exact(&mut r)?);
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u32::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|e| TensorError::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| TensorError::Checkpoint("non UTF-8 name".into()))?;
        let [tag, rank] = read_exact::<2>(&mut r)?;
        let dtype = DType::from_tag(tag)
            .ok_or_else(|| TensorError::Checkpoint(format!("{name}: unknown dtype {tag}")))?;
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(read_exact(&mut r)?) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut raw = vec![0u8; numel * dtype.size()];
        r.read_exact(&mut raw)
            .map_err(|e| TensorError::Checkpoint(format!("{name}: truncated values: {e}")))?;
        let data = match dtype {
            DType::F32 => RecordData::F32(raw.chunks_exact(4).map(f32::read_le).collect()),
            DType::F64 => RecordData::F64(raw.chunks_exact(8).map(f64::read_le).collect()),
            DType::U8 => RecordData::U8(raw),
        };
        out.push(Record { name, shape, data });
    }
    Ok(out)
}

pub fn save(path: impl AsRef<Path>, records: &[Record]) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_records(BufWriter::new(file), records)
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let file = File::open(path.as_ref())?;
    read_records(BufReader::new(file))
}
