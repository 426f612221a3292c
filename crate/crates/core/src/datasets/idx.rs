//! IDX reader for the MNIST distribution files. Gzipped files are detected by
//! their magic bytes and inflated transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use lsx_autodiff::Tensor;

use super::set::{DatasetKind, LabeledSet, Meta};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(path, "truncated header"))
}

/// Parses an IDX payload: returns dims and the unsigned byte payload.
pub fn parse_idx(bytes: &[u8], magic: u32, path: &Path) -> Result<(Vec<usize>, Vec<u8>)> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(Error::format(
            path,
            format!("bad magic 0x{found:08x}, expected 0x{magic:08x}"),
        ));
    }
    let rank = (magic & 0xff) as usize;
    let dims = (0..rank)
        .map(|i| be_u32(bytes, 4 + 4 * i, path).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * rank;
    let n: usize = dims.iter().product();
    let payload = bytes
        .get(start..start + n)
        .ok_or_else(|| Error::format(path, format!("truncated payload: {} of {n} bytes", bytes.len() - start)))?;
    Ok((dims, payload.to_vec()))
}

/// Loads an image/label file pair as `[N,1,H,W]` inputs scaled to `[0,1]`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledSet> {
    let (idims, pixels) = parse_idx(&read_bytes(images)?, IMAGES_MAGIC, images)?;
    let (ldims, raw_labels) = parse_idx(&read_bytes(labels)?, LABELS_MAGIC, labels)?;
    if idims[0] != ldims[0] {
        return Err(Error::format(
            labels,
            format!("{} labels for {} images", ldims[0], idims[0]),
        ));
    }
    let (n, h, w) = (idims[0], idims[1], idims[2]);
    if n == 0 || h == 0 || w == 0 {
        return Err(Error::format(images, "empty image file"));
    }
    let data = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let labels_vec: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let classes = labels_vec.iter().max().map_or(1, |m| m + 1).max(10);
    LabeledSet::new(
        Tensor::new(vec![n, 1, h, w], data)?,
        labels_vec,
        (0..n as u64).collect(),
        Meta {
            kind: DatasetKind::Mnist,
            classes,
            confounded: false,
        },
    )
}

/// Serialises an IDX file; used for fixtures and data conversion.
pub fn encode_idx(magic: u32, dims: &[usize], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}
