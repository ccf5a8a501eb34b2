//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, u32 version, u64 meta words (hyperparameters),
//! then named tensors as (u32 name length, name bytes, u32 rank, u64 dims,
//! little-endian f64 data). The optimizer sidecar reuses the same container
//! with its own magic and meta.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::{HyperParams, QNetworkParams};
use super::tensor::Mat;
use super::QNetError;

pub(crate) const PARAMS_MAGIC: &[u8; 8] = b"SQNCKPT\0";
pub(crate) const OPT_MAGIC: &[u8; 8] = b"SQNOPTS\0";
pub(crate) const VERSION: u32 = 1;

/// Optimizer sidecar: same container, optimizer step in the meta word.
pub fn write_optimizer_container(
    path: &Path,
    step: u64,
    tensors: &[(String, &Mat)],
) -> Result<(), QNetError> {
    write_container(path, OPT_MAGIC, &[step], tensors)
}

pub fn read_optimizer_container(
    path: &Path,
) -> Result<(u64, std::collections::BTreeMap<String, Mat>), QNetError> {
    let (meta, tensors) = read_container(path, OPT_MAGIC)?;
    if meta.len() != 1 {
        return Err(QNetError::Format(format!(
            "optimizer sidecar meta has {} words, expected 1",
            meta.len()
        )));
    }
    Ok((meta[0], tensors.into_iter().collect()))
}

pub(crate) fn write_container(
    path: &Path,
    magic: &[u8; 8],
    meta: &[u64],
    tensors: &[(String, &Mat)],
) -> Result<(), QNetError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(magic)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    for m in meta {
        w.write_all(&m.to_le_bytes())?;
    }
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&(t.rows() as u64).to_le_bytes())?;
        w.write_all(&(t.cols() as u64).to_le_bytes())?;
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_container(
    path: &Path,
    magic: &[u8; 8],
) -> Result<(Vec<u64>, Vec<(String, Mat)>), QNetError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut got_magic = [0u8; 8];
    read_exact(&mut r, &mut got_magic)?;
    if &got_magic != magic {
        return Err(QNetError::Format(format!("bad magic {got_magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(QNetError::VersionMismatch { found: version, expected: VERSION });
    }
    let meta_len = read_u32(&mut r)? as usize;
    if meta_len > 1 << 16 {
        return Err(QNetError::Format(format!("implausible meta length {meta_len}")));
    }
    let mut meta = Vec::with_capacity(meta_len);
    for _ in 0..meta_len {
        meta.push(read_u64(&mut r)?);
    }
    let count = read_u32(&mut r)? as usize;
    if count > 1 << 20 {
        return Err(QNetError::Format(format!("implausible tensor count {count}")));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 1 << 12 {
            return Err(QNetError::Format(format!("implausible name length {name_len}")));
        }
        let mut name = vec![0u8; name_len];
        read_exact(&mut r, &mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| QNetError::Format("tensor name is not utf-8".into()))?;
        let rank = read_u32(&mut r)?;
        if rank != 2 {
            return Err(QNetError::Format(format!("tensor {name}: rank {rank}, expected 2")));
        }
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        if rows.checked_mul(cols).map_or(true, |p| p > 1 << 28) {
            return Err(QNetError::Format(format!("tensor {name}: implausible shape")));
        }
        let mut data = vec![0.0f64; rows * cols];
        for v in &mut data {
            let mut bytes = [0u8; 8];
            read_exact(&mut r, &mut bytes)?;
            *v = f64::from_le_bytes(bytes);
        }
        tensors.push((name, Mat::from_vec(rows, cols, data)));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(QNetError::Format("trailing bytes after last tensor".into()));
    }
    Ok((meta, tensors))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), QNetError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            QNetError::Truncated
        } else {
            QNetError::Io(e)
        }
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32, QNetError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, QNetError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn hyper_meta(h: &HyperParams) -> Vec<u64> {
    let mut meta = vec![
        h.feature_dim as u64,
        h.obs_feature_dim as u64,
        h.window as u64,
        h.embed_dim as u64,
        h.heads as u64,
        h.layers as u64,
    ];
    meta.extend(h.periods.iter().map(|p| *p as u64));
    meta
}

fn hyper_from_meta(meta: &[u64]) -> Result<HyperParams, QNetError> {
    if meta.len() < 7 {
        return Err(QNetError::Format(format!("meta too short: {} words", meta.len())));
    }
    Ok(HyperParams {
        feature_dim: meta[0] as usize,
        obs_feature_dim: meta[1] as usize,
        window: meta[2] as usize,
        embed_dim: meta[3] as usize,
        heads: meta[4] as usize,
        layers: meta[5] as usize,
        periods: meta[6..].iter().map(|p| *p as u32).collect(),
    })
}

/// Write every tensor (including the positional buffer) with the
/// hyperparameters in the header.
pub fn save_params(params: &QNetworkParams, path: &Path) -> Result<(), QNetError> {
    let mut tensors: Vec<(String, &Mat)> = vec![("pos_enc".into(), &params.pos_enc)];
    tensors.extend(params.named_tensors());
    write_container(path, PARAMS_MAGIC, &hyper_meta(&params.hyper), &tensors)
}

/// Rebuild parameters from a checkpoint; every expected tensor must be
/// present with its exact shape and nothing extra may remain.
pub fn load_params(path: &Path) -> Result<QNetworkParams, QNetError> {
    let (meta, tensors) = read_container(path, PARAMS_MAGIC)?;
    let hyper = hyper_from_meta(&meta)?;
    let mut params = QNetworkParams::init(hyper, 0)?;

    let mut by_name: std::collections::BTreeMap<String, Mat> = tensors.into_iter().collect();
    fill(&mut by_name, "pos_enc", &mut params.pos_enc)?;
    for (name, slot) in params.named_tensors_mut() {
        fill(&mut by_name, &name, slot)?;
    }
    if let Some(name) = by_name.keys().next() {
        return Err(QNetError::Format(format!("unexpected tensor {name:?}")));
    }
    Ok(params)
}

fn fill(
    map: &mut std::collections::BTreeMap<String, Mat>,
    name: &str,
    slot: &mut Mat,
) -> Result<(), QNetError> {
    let t = map
        .remove(name)
        .ok_or_else(|| QNetError::Format(format!("missing tensor {name:?}")))?;
    if t.shape() != slot.shape() {
        return Err(QNetError::ShapeMismatch(format!(
            "tensor {name:?}: file has {:?}, network expects {:?}",
            t.shape(),
            slot.shape()
        )));
    }
    *slot = t;
    Ok(())
}
