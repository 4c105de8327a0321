//! Checkpoint files: one line of JSON header, then every array in header
//! order as little-endian floats of the declared dtype.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::params::ParameterStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub dtype: Dtype,
    pub shapes: IndexMap<String, Vec<usize>>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

/// Named arrays as read from or written to a checkpoint.
pub type NamedArrays = IndexMap<String, Tensor>;

pub fn write_arrays(path: &Path, arrays: &NamedArrays, dtype: Dtype, meta: serde_json::Value) -> Result<()> {
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        dtype,
        shapes: arrays.iter().map(|(k, t)| (k.clone(), t.shape.clone())).collect(),
        meta,
    };
    let mut buf = serde_json::to_vec(&header)?;
    buf.push(b'\n');
    for t in arrays.values() {
        match dtype {
            Dtype::F32 => t.data.iter().for_each(|v| buf.extend_from_slice(&(*v as f32).to_le_bytes())),
            Dtype::F64 => t.data.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_arrays(path: &Path) -> Result<(CheckpointHeader, NamedArrays)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(f);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line).map_err(|e| Error::io(path, e))?;
    let header: CheckpointHeader = serde_json::from_slice(&line)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: checkpoint format {} (expected {FORMAT_VERSION})",
            path.display(),
            header.format_version
        )));
    }
    let mut body = Vec::new();
    reader.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
    let width = match header.dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let total: usize = header.shapes.values().map(|s| s.iter().product::<usize>()).sum();
    if body.len() != total * width {
        return Err(Error::Format(format!(
            "{}: expected {} payload bytes, found {}",
            path.display(),
            total * width,
            body.len()
        )));
    }
    let mut arrays = IndexMap::new();
    let mut off = 0;
    for (name, shape) in &header.shapes {
        let n: usize = shape.iter().product();
        let bytes = &body[off..off + n * width];
        let data = match header.dtype {
            Dtype::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        arrays.insert(name.clone(), Tensor::new(shape.clone(), data)?);
        off += n * width;
    }
    Ok((header, arrays))
}

/// Writes all parameters as 32-bit floats.
pub fn save_checkpoint(store: &ParameterStore, path: &Path, meta: serde_json::Value) -> Result<()> {
    let arrays: NamedArrays = store.iter().map(|(k, p)| (k.to_string(), p.value.as_ref().clone())).collect();
    write_arrays(path, &arrays, Dtype::F32, meta)
}

/// Loads every array into a fresh, fully trainable store.
pub fn load_checkpoint(path: &Path) -> Result<(ParameterStore, serde_json::Value)> {
    let (header, arrays) = read_arrays(path)?;
    let mut store = ParameterStore::new();
    for (name, t) in arrays {
        store.insert(&name, t)?;
    }
    Ok((store, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_f32_and_f64() {
        let dir = tempfile::tempdir().unwrap();
        let mut arrays = NamedArrays::new();
        arrays.insert("b".into(), Tensor::new(vec![2, 2], vec![1.0, -2.5, 3.25, 1e-3]).unwrap());
        arrays.insert("a".into(), Tensor::vector(vec![0.1]));
        for dtype in [Dtype::F32, Dtype::F64] {
            let p = dir.path().join(format!("{dtype:?}.ckpt"));
            write_arrays(&p, &arrays, dtype, serde_json::json!({"k": 1})).unwrap();
            let (h, back) = read_arrays(&p).unwrap();
            assert_eq!(h.meta["k"], 1);
            assert_eq!(back.keys().collect::<Vec<_>>(), vec!["b", "a"]);
            let tol = if dtype == Dtype::F32 { 1e-7 } else { 0.0 };
            for (x, y) in back["b"].data.iter().zip(&arrays["b"].data) {
                assert!((x - y).abs() <= tol * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn payload_is_little_endian_f32_after_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ckpt");
        let mut arrays = NamedArrays::new();
        arrays.insert("w".into(), Tensor::vector(vec![1.0, 2.0]));
        write_arrays(&p, &arrays, Dtype::F32, serde_json::Value::Null).unwrap();
        let bytes = fs::read(&p).unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        assert_eq!(header["dtype"], "f32");
        assert_eq!(header["shapes"]["w"], serde_json::json!([2]));
        assert_eq!(&bytes[nl + 1..], &[1.0f32.to_le_bytes(), 2.0f32.to_le_bytes()].concat()[..]);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ckpt");
        let mut arrays = NamedArrays::new();
        arrays.insert("w".into(), Tensor::vector(vec![1.0, 2.0]));
        write_arrays(&p, &arrays, Dtype::F32, serde_json::Value::Null).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(read_arrays(&p), Err(Error::Format(_))));
    }
}
