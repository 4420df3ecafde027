//! MMT1 binary tensor files.
//!
//! Layout: magic `MMT1`, version `u16` LE, dtype `u8` (1 = f32, 2 = f64,
//! 3 = i32), ndim `u8`, then `ndim` dimension sizes as `u64` LE, then the
//! row-major payload in little-endian order. Volumes, connectivity
//! matrices, attribution maps, and model checkpoints all use this format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"MMT1";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
    I32 = 3,
}

impl Dtype {
    fn from_code(code: u8) -> Option<Dtype> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            3 => Some(Dtype::I32),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
            Dtype::I32 => "i32",
        }
    }
}

/// Payload of a loaded MMT1 file.
#[derive(Debug, Clone)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I32(Vec<i32>),
}

#[derive(Debug, Clone)]
pub struct Mmt1 {
    pub shape: Vec<usize>,
    pub payload: Payload,
}

impl Mmt1 {
    pub fn len(&self) -> usize {
        match &self.payload {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
            Payload::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Convert a float payload to the requested scalar type.
    ///
    /// f32 payloads widen exactly; f64 payloads are only accepted at f64 to
    /// keep loads lossless. Integer payloads are rejected.
    pub fn to_scalar<T: Scalar>(&self, path: &Path) -> Result<Vec<T>> {
        match (&self.payload, T::DTYPE) {
            (Payload::F32(v), _) => Ok(v.iter().map(|&x| T::from_single(x)).collect()),
            (Payload::F64(v), Dtype::F64) => Ok(v.iter().map(|&x| T::c(x)).collect()),
            (Payload::F64(_), _) => Err(Error::BadTensorFile {
                path: path.to_path_buf(),
                detail: "f64 payload cannot be loaded at lower precision".into(),
            }),
            (Payload::I32(_), _) => Err(Error::BadTensorFile {
                path: path.to_path_buf(),
                detail: "integer payload where float tensor expected".into(),
            }),
        }
    }

    pub fn to_i32(&self, path: &Path) -> Result<Vec<i32>> {
        match &self.payload {
            Payload::I32(v) => Ok(v.clone()),
            _ => Err(Error::BadTensorFile {
                path: path.to_path_buf(),
                detail: "float payload where integer tensor expected".into(),
            }),
        }
    }
}

fn write_header(w: &mut impl Write, dtype: Dtype, shape: &[usize]) -> std::io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[dtype as u8, shape.len() as u8])?;
    for &d in shape {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    Ok(())
}

fn check_count(shape: &[usize], len: usize) {
    let n: usize = shape.iter().product();
    assert_eq!(n, len, "shape {shape:?} does not match payload length {len}");
}

pub fn write_scalars<T: Scalar>(path: &Path, shape: &[usize], data: &[T]) -> Result<()> {
    check_count(shape, data.len());
    let map_io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(map_io)?);
    write_header(&mut w, T::DTYPE, shape).map_err(map_io)?;
    match T::DTYPE {
        Dtype::F32 => {
            for v in data {
                w.write_all(&(v.as_f64() as f32).to_le_bytes()).map_err(map_io)?;
            }
        }
        Dtype::F64 => {
            for v in data {
                w.write_all(&v.as_f64().to_le_bytes()).map_err(map_io)?;
            }
        }
        Dtype::I32 => unreachable!("scalar types are floating point"),
    }
    w.flush().map_err(map_io)
}

pub fn write_i32(path: &Path, shape: &[usize], data: &[i32]) -> Result<()> {
    check_count(shape, data.len());
    let map_io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(map_io)?);
    write_header(&mut w, Dtype::I32, shape).map_err(map_io)?;
    for v in data {
        w.write_all(&v.to_le_bytes()).map_err(map_io)?;
    }
    w.flush().map_err(map_io)
}

pub fn read(path: &Path) -> Result<Mmt1> {
    let map_io = |e| Error::io(path, e);
    let bad = |detail: &str| Error::BadTensorFile {
        path: path.to_path_buf(),
        detail: detail.into(),
    };

    let mut r = BufReader::new(File::open(path).map_err(map_io)?);
    let mut head = [0u8; 8];
    r.read_exact(&mut head).map_err(map_io)?;
    if head[0..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let dtype = Dtype::from_code(head[6]).ok_or_else(|| bad(&format!("unknown dtype {}", head[6])))?;
    let ndim = head[7] as usize;

    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(map_io)?;
        shape.push(u64::from_le_bytes(b) as usize);
    }
    let count: usize = shape.iter().product();

    let elem = match dtype {
        Dtype::F32 | Dtype::I32 => 4,
        Dtype::F64 => 8,
    };
    let mut raw = vec![0u8; count * elem];
    r.read_exact(&mut raw).map_err(map_io)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(map_io)? != 0 {
        return Err(bad("trailing bytes after payload"));
    }

    let payload = match dtype {
        Dtype::F32 => Payload::F32(
            raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
        ),
        Dtype::F64 => Payload::F64(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                .collect(),
        ),
        Dtype::I32 => Payload::I32(
            raw.chunks_exact(4).map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
        ),
    };
    Ok(Mmt1 { shape, payload })
}

/// Read a float file directly into scalar type `T`.
pub fn read_scalars<T: Scalar>(path: &Path) -> Result<(Vec<usize>, Vec<T>)> {
    let m = read(path)?;
    let data = m.to_scalar::<T>(path)?;
    Ok((m.shape, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_f32() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mmt1");
        let data = vec![1.0f32, -2.5, 3.25, 0.0, 5.5, -6.125];
        write_scalars(&p, &[2, 3], &data).unwrap();
        let m = read(&p).unwrap();
        assert_eq!(m.shape, vec![2, 3]);
        match m.payload {
            Payload::F32(v) => assert_eq!(v, data),
            _ => panic!("wrong dtype"),
        }
    }

    #[test]
    fn round_trip_f64_and_i32() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.mmt1");
        write_scalars(&p, &[4], &[1.0f64, 2.0, -3.0, 4.5]).unwrap();
        let (shape, v): (_, Vec<f64>) = read_scalars(&p).unwrap();
        assert_eq!(shape, vec![4]);
        assert_eq!(v, vec![1.0, 2.0, -3.0, 4.5]);

        let q = dir.path().join("c.mmt1");
        write_i32(&q, &[2, 2], &[1, -2, 3, -4]).unwrap();
        match read(&q).unwrap().payload {
            Payload::I32(v) => assert_eq!(v, vec![1, -2, 3, -4]),
            _ => panic!("wrong dtype"),
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.mmt1");
        std::fs::write(&p, b"NOPE\x01\x00\x01\x01\x01\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(read(&p), Err(Error::BadTensorFile { .. })));
    }

    #[test]
    fn f32_loads_at_f64_but_not_reverse() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.mmt1");
        write_scalars(&p, &[2], &[1.5f32, 2.5]).unwrap();
        let (_, wide): (_, Vec<f64>) = read_scalars(&p).unwrap();
        assert_eq!(wide, vec![1.5, 2.5]);

        let q = dir.path().join("d.mmt1");
        write_scalars(&q, &[2], &[1.5f64, 2.5]).unwrap();
        assert!(read_scalars::<f32>(&q).is_err());
    }
}
