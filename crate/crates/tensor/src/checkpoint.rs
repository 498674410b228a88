//! Named-tensor checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! [u64 header_len][header_len bytes of UTF-8 JSON][tensor bytes]
//! ```
//!
//! The JSON header maps each parameter name to
//! `{"dtype": "F32"|"F64", "shape": [..], "data_offsets": [begin, end]}` where
//! offsets are relative to the start of the tensor bytes. An optional
//! `"__metadata__"` entry holds string key/value pairs. Tensors are written in
//! store order, back to back, with no padding.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::float::{DType, Float};
use crate::param::ParamStore;
use crate::tensor::Tensor;

const METADATA_KEY: &str = "__metadata__";
/// Refuse headers larger than this; a corrupt length prefix must not
/// trigger a huge allocation.
pub const MAX_HEADER_LEN: u64 = 64 << 20;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorEntry {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub data_offsets: [u64; 2],
}

/// Decoded checkpoint: entries in file order plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub tensors: Vec<(String, Tensor<T>)>,
    pub frozen: Vec<bool>,
    pub metadata: BTreeMap<String, String>,
}

/// Serialises every parameter of `store`. Frozen flags travel in metadata
/// under `frozen` as a comma-separated name list.
pub fn to_bytes<T: Float>(store: &ParamStore<T>, metadata: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    let mut header = serde_json::Map::new();
    let mut meta = metadata.clone();
    let frozen: Vec<&str> = store
        .iter()
        .filter(|(_, p)| p.frozen)
        .map(|(_, p)| p.name.as_str())
        .collect();
    meta.insert("frozen".into(), frozen.join(","));
    header.insert(METADATA_KEY.into(), serde_json::to_value(&meta).map_err(fmt_err)?);
    let mut offset = 0u64;
    for (_, p) in store.iter() {
        let len = (p.value.numel() * T::DTYPE.size()) as u64;
        let entry = TensorEntry {
            dtype: T::DTYPE.name().into(),
            shape: p.value.shape().to_vec(),
            data_offsets: [offset, offset + len],
        };
        header.insert(p.name.clone(), serde_json::to_value(entry).map_err(fmt_err)?);
        offset += len;
    }
    // serde_json::Map is ordered by key, which keeps the header deterministic.
    let header_bytes = serde_json::to_vec(&header).map_err(fmt_err)?;
    let mut out = Vec::with_capacity(8 + header_bytes.len() + offset as usize);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for (_, p) in store.iter() {
        for &v in p.value.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

fn fmt_err(e: serde_json::Error) -> TensorError {
    TensorError::Format(e.to_string())
}

/// Parses a checkpoint. Tensor entries come back sorted by data offset.
pub fn from_bytes<T: Float>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    if bytes.len() < 8 {
        return Err(TensorError::Format("truncated header length".into()));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    if header_len > MAX_HEADER_LEN || header_len > (bytes.len() - 8) as u64 {
        return Err(TensorError::Format(format!("header length {header_len} exceeds file")));
    }
    let header_end = 8 + header_len as usize;
    let header: serde_json::Map<String, serde_json::Value> =
        serde_json::from_slice(&bytes[8..header_end]).map_err(fmt_err)?;
    let body = &bytes[header_end..];

    let mut metadata: BTreeMap<String, String> = BTreeMap::new();
    let mut entries = Vec::new();
    for (name, value) in header {
        if name == METADATA_KEY {
            metadata = serde_json::from_value(value).map_err(fmt_err)?;
            continue;
        }
        let entry: TensorEntry = serde_json::from_value(value).map_err(fmt_err)?;
        entries.push((name, entry));
    }
    entries.sort_by_key(|(_, e)| e.data_offsets[0]);

    let frozen_names: Vec<&str> = metadata
        .get("frozen")
        .map(|s| s.split(',').filter(|n| !n.is_empty()).collect())
        .unwrap_or_default();
    let mut tensors = Vec::with_capacity(entries.len());
    let mut frozen = Vec::with_capacity(entries.len());
    let mut expected = 0u64;
    for (name, e) in entries {
        let dtype = DType::from_name(&e.dtype)
            .ok_or_else(|| TensorError::Format(format!("unknown dtype {} for {name}", e.dtype)))?;
        if dtype != T::DTYPE {
            return Err(TensorError::Format(format!(
                "{name} stored as {} but loading as {}",
                dtype.name(),
                T::DTYPE.name()
            )));
        }
        let [begin, end] = e.data_offsets;
        if begin != expected || end < begin || end > body.len() as u64 {
            return Err(TensorError::Format(format!("bad offsets for {name}: {begin}..{end}")));
        }
        let numel = e
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| TensorError::Format(format!("shape overflow for {name}")))?;
        let size = dtype.size();
        if numel.checked_mul(size) != Some((end - begin) as usize) {
            return Err(TensorError::Format(format!("size mismatch for {name}")));
        }
        let data: Vec<T> = body[begin as usize..end as usize]
            .chunks_exact(size)
            .map(T::read_le)
            .collect();
        let t = Tensor::new(e.shape, data).map_err(|err| TensorError::Format(format!("{name}: {err}")))?;
        frozen.push(frozen_names.contains(&name.as_str()));
        tensors.push((name, t));
        expected = end;
    }
    if expected != body.len() as u64 {
        return Err(TensorError::Format("trailing bytes after last tensor".into()));
    }
    Ok(Checkpoint {
        tensors,
        frozen,
        metadata,
    })
}

impl<T: Float> Checkpoint<T> {
    pub fn into_store(self) -> ParamStore<T> {
        let mut store = ParamStore::new();
        for ((name, t), frozen) in self.tensors.into_iter().zip(self.frozen) {
            let id = store.add(name, t);
            store.set_frozen(id, frozen);
        }
        store
    }
}

pub fn save<T: Float>(
    path: impl AsRef<Path>,
    store: &ParamStore<T>,
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    let bytes = to_bytes(store, metadata)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load<T: Float>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 1..40), split in 1usize..39) {
            let split = split.min(values.len());
            let mut store = ParamStore::<f32>::new();
            store.add("b.second", Tensor::new([values.len()], values.clone()).unwrap());
            let a = store.add("a.first", Tensor::new([split], values[..split].to_vec()).unwrap());
            store.set_frozen(a, true);
            let mut meta = BTreeMap::new();
            meta.insert("config_hash".to_string(), "abc".to_string());
            let bytes = to_bytes(&store, &meta).unwrap();
            let ck = from_bytes::<f32>(&bytes).unwrap();
            prop_assert_eq!(ck.metadata.get("config_hash").map(String::as_str), Some("abc"));
            let back = ck.into_store();
            prop_assert_eq!(back.len(), 2);
            for (_, p) in store.iter() {
                let q = back.by_name(&p.name).unwrap();
                prop_assert_eq!(q.frozen, p.frozen);
                let lhs: Vec<u32> = p.value.data().iter().map(|v| v.to_bits()).collect();
                let rhs: Vec<u32> = q.value.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(lhs, rhs);
                prop_assert_eq!(q.value.shape(), p.value.shape());
            }
            prop_assert_eq!(to_bytes(&back, &meta).unwrap(), bytes);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = from_bytes::<f32>(&bytes);
        }
    }

    #[test]
    fn rejects_dtype_mismatch_and_truncation() {
        let mut store = ParamStore::<f64>::new();
        store.add("w", Tensor::from_f64([2], &[1.0, 2.0]).unwrap());
        let bytes = to_bytes(&store, &BTreeMap::new()).unwrap();
        assert!(from_bytes::<f32>(&bytes).is_err());
        assert!(from_bytes::<f64>(&bytes[..bytes.len() - 1]).is_err());
        assert!(from_bytes::<f64>(&bytes).is_ok());
    }
}
