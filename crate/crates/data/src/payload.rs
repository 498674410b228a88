//! Binary payload container.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "MMSP"
//! 4       1         version (1)
//! 5       1         dtype code (1 = f32, 2 = f64)
//! 6       1         rank (1..=8)
//! 7       1         reserved, must be 0
//! 8       4*rank    extents, u32 little-endian
//! ..      n*size    elements, little-endian, row-major
//! ```
//!
//! Extents may be zero (an empty point set is `[T, 0, 3]`). Payloads always
//! load as `f32`; `f64` files are narrowed on read.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::modality::ModalityKind;

pub const MAGIC: [u8; 4] = *b"MMSP";
pub const VERSION: u8 = 1;
pub const MAX_RANK: usize = 8;
const HEADER_FIXED: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DTypeCode {
    F32 = 1,
    F64 = 2,
}

impl DTypeCode {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::F32),
            2 => Some(Self::F64),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Payload {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        if shape.is_empty() || shape.len() > MAX_RANK {
            return Err(DataError::Format(format!(
                "rank {} outside 1..={MAX_RANK}",
                shape.len()
            )));
        }
        if shape.iter().any(|&e| e > u32::MAX as usize) {
            return Err(DataError::Format(format!("extent too large in {shape:?}")));
        }
        let n = numel(&shape).ok_or_else(|| DataError::Format(format!("shape {shape:?} overflows")))?;
        if n != data.len() {
            return Err(DataError::Format(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let n = numel(&shape).ok_or_else(|| DataError::Format("shape overflows".into()))?;
        Self::new(shape, vec![0.0; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_bytes_as(DTypeCode::F32)
    }

    pub fn to_bytes_as(&self, dtype: DTypeCode) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_FIXED + 4 * self.shape.len() + self.data.len() * dtype.size());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(dtype as u8);
        out.push(self.shape.len() as u8);
        out.push(0);
        for &e in &self.shape {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        match dtype {
            DTypeCode::F32 => self.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            DTypeCode::F64 => self
                .data
                .iter()
                .for_each(|&v| out.extend_from_slice(&(v as f64).to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_FIXED {
            return Err(DataError::Format("truncated header".into()));
        }
        if bytes[..4] != MAGIC {
            return Err(DataError::Format("bad magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(DataError::Format(format!("unsupported version {}", bytes[4])));
        }
        let dtype = DTypeCode::from_u8(bytes[5])
            .ok_or_else(|| DataError::Format(format!("unknown dtype code {}", bytes[5])))?;
        let rank = bytes[6] as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(DataError::Format(format!("rank {rank} outside 1..={MAX_RANK}")));
        }
        if bytes[7] != 0 {
            return Err(DataError::Format("reserved byte must be zero".into()));
        }
        let body_start = HEADER_FIXED + 4 * rank;
        if bytes.len() < body_start {
            return Err(DataError::Format("truncated extents".into()));
        }
        let shape: Vec<usize> = bytes[HEADER_FIXED..body_start]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect();
        let n = numel(&shape).ok_or_else(|| DataError::Format(format!("shape {shape:?} overflows")))?;
        let body = &bytes[body_start..];
        if n.checked_mul(dtype.size()) != Some(body.len()) {
            return Err(DataError::Format(format!(
                "shape {shape:?} needs {n} elements, body holds {} bytes",
                body.len()
            )));
        }
        let data = match dtype {
            DTypeCode::F32 => body
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
            DTypeCode::F64 => body
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")) as f32)
                .collect(),
        };
        Ok(Self { shape, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn numel(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &e| acc.checked_mul(e))
}

/// One raw observation of one modality plus its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalitySample {
    pub sequence_id: u64,
    pub kind: ModalityKind,
    pub payload: Payload,
    pub action_id: usize,
    pub subject_id: usize,
    pub environment_id: usize,
}

/// Labels shared by every modality of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLabels {
    pub action: usize,
    pub subject: usize,
    pub env: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let p = Payload::new([2, 1], vec![1.0, -2.0]).unwrap();
        let b = p.to_bytes();
        assert_eq!(&b[..4], b"MMSP");
        assert_eq!(b[4..8], [1, 1, 2, 0]);
        assert_eq!(b[8..12], 2u32.to_le_bytes());
        assert_eq!(b[12..16], 1u32.to_le_bytes());
        assert_eq!(b[16..20], 1.0f32.to_le_bytes());
        assert_eq!(b.len(), 24);
    }

    #[test]
    fn zero_extent_and_f64() {
        let empty = Payload::zeros([5, 0, 3]).unwrap();
        assert_eq!(Payload::from_bytes(&empty.to_bytes()).unwrap(), empty);
        let p = Payload::new([3], vec![0.5, 1.5, -4.0]).unwrap();
        assert_eq!(Payload::from_bytes(&p.to_bytes_as(DTypeCode::F64)).unwrap(), p);
    }

    #[test]
    fn rejects_malformed() {
        let p = Payload::new([2, 2], vec![1.0; 4]).unwrap();
        let b = p.to_bytes();
        assert!(Payload::from_bytes(&b[..b.len() - 1]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(Payload::from_bytes(&extra).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Payload::from_bytes(&bad).is_err());
        let mut bad = b;
        bad[6] = 0;
        assert!(Payload::from_bytes(&bad).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(shape in proptest::collection::vec(0usize..5, 1..4), seed in any::<u32>()) {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = (0..n).map(|i| (i as f32 + seed as f32).sin()).collect();
            let p = Payload::new(shape, data).unwrap();
            let back = Payload::from_bytes(&p.to_bytes()).unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
            let _ = Payload::from_bytes(&bytes);
        }
    }
}
