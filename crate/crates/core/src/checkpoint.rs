//! Checkpoint archive for named parameter tensors.
//!
//! Layout: 8-byte magic, u32 format version, u64 manifest length, a JSON
//! manifest listing `{name, rows, cols}` per tensor in order, then each
//! tensor's row-major little-endian f64 payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TkgrError};
use crate::nn::ParamStore;

const MAGIC: &[u8; 8] = b"TKGRCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    let io_err = |source| TkgrError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    let manifest: Vec<TensorEntry> = store
        .iter()
        .map(|(name, m)| TensorEntry {
            name: name.to_string(),
            rows: m.nrows(),
            cols: m.ncols(),
        })
        .collect();
    let manifest_json =
        serde_json::to_vec(&manifest).map_err(|e| TkgrError::Config(e.to_string()))?;
    (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u64::<LittleEndian>(manifest_json.len() as u64)?;
        w.write_all(&manifest_json)?;
        for (_, m) in store.iter() {
            for v in m.iter() {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
        w.flush()
    })()
    .map_err(io_err)
}

pub fn load(path: &Path) -> Result<ParamStore> {
    let io_err = |source| TkgrError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut r = BufReader::new(File::open(path).map_err(io_err)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(TkgrError::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "not a checkpoint file (bad magic)".into(),
        });
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if version != VERSION {
        return Err(TkgrError::Unsupported(format!(
            "checkpoint version {version} (expected {VERSION})"
        )));
    }
    let manifest_len = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
    let mut manifest_json = vec![0u8; manifest_len];
    r.read_exact(&mut manifest_json).map_err(io_err)?;
    let manifest: Vec<TensorEntry> =
        serde_json::from_slice(&manifest_json).map_err(|e| TkgrError::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("bad manifest: {e}"),
        })?;
    let mut store = ParamStore::new();
    for entry in &manifest {
        let n = entry.rows * entry.cols;
        let mut data = vec![0.0f64; n];
        r.read_f64_into::<LittleEndian>(&mut data).map_err(io_err)?;
        let m = Array2::from_shape_vec((entry.rows, entry.cols), data)
            .map_err(|e| TkgrError::Shape(e.to_string()))?;
        store.insert(&entry.name, m);
    }
    // Trailing bytes mean a corrupt or mismatched payload.
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(io_err)? != 0 {
        return Err(TkgrError::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "trailing bytes after declared tensors".into(),
        });
    }
    Ok(store)
}
