//! Dense row-major tensors and their on-disk binary layout.
//!
//! Layout (little-endian): magic `HLTT`, `u8` dtype code (0 = f32, 1 = f64),
//! `u8` rank, `u32` per dimension, then the raw element data.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::NumError;

const MAGIC: &[u8; 4] = b"HLTT";

/// Element encoding used when a tensor is written to disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self, NumError> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            other => Err(NumError::Corrupt(format!("unknown dtype code {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumError::Shape(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        let t = Self { shape, data };
        t.check_finite()?;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self, NumError> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the trailing dimension (1 for scalars).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Number of rows when viewed as `[rows × last_dim]`.
    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.last_dim()).unwrap_or(0)
    }

    pub fn check_finite(&self) -> Result<(), NumError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(NumError::NonFinite(format!(
                "element {i} of tensor with shape {:?} is {}",
                self.shape, self.data[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W, dtype: DType) -> Result<(), NumError> {
        if self.shape.len() > u8::MAX as usize {
            return Err(NumError::Shape(format!("rank {} too large", self.shape.len())));
        }
        let mut buf = Vec::with_capacity(6 + 4 * self.shape.len() + 8 * self.data.len());
        buf.extend_from_slice(MAGIC);
        buf.push(dtype.code());
        buf.push(self.shape.len() as u8);
        for &d in &self.shape {
            let d = u32::try_from(d)
                .map_err(|_| NumError::Shape(format!("dimension {d} exceeds u32")))?;
            buf.extend_from_slice(&d.to_le_bytes());
        }
        match dtype {
            DType::F32 => {
                for &v in &self.data {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            DType::F64 => {
                for &v in &self.data {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self, dtype: DType) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out, dtype)
            .expect("writing into a Vec cannot fail");
        out
    }

    /// Reads one tensor; returns it together with the dtype it was stored in.
    pub fn read_from<R: Read>(r: &mut R) -> Result<(Self, DType), NumError> {
        let mut head = [0u8; 6];
        r.read_exact(&mut head)
            .map_err(|e| NumError::Corrupt(format!("truncated header: {e}")))?;
        if &head[..4] != MAGIC {
            return Err(NumError::Corrupt(format!(
                "bad magic {:?}, expected HLTT",
                &head[..4]
            )));
        }
        let dtype = DType::from_code(head[4])?;
        let rank = head[5] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut d = [0u8; 4];
            r.read_exact(&mut d)
                .map_err(|e| NumError::Corrupt(format!("truncated dims: {e}")))?;
            shape.push(u32::from_le_bytes(d) as usize);
        }
        let n: usize = shape.iter().product();
        let width = match dtype {
            DType::F32 => 4,
            DType::F64 => 8,
        };
        let mut raw = vec![0u8; n * width];
        r.read_exact(&mut raw)
            .map_err(|e| NumError::Corrupt(format!("truncated data: {e}")))?;
        let data = match dtype {
            DType::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
            DType::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        let t = Tensor::new(shape, data).map_err(|e| NumError::Corrupt(e.to_string()))?;
        Ok((t, dtype))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, DType), NumError> {
        let mut cursor = bytes;
        let out = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(NumError::Corrupt(format!(
                "{} trailing bytes after tensor",
                cursor.len()
            )));
        }
        Ok(out)
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
