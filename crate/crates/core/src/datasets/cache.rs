//! Generated sets on disk: tensors in the checkpoint format plus a
//! `key=value` sidecar with the metadata.

use std::fs;
use std::path::{Path, PathBuf};

use lsx_autodiff::Tensor;

use super::set::{DatasetKind, LabeledSet, Meta};
use crate::error::{Error, Result};
use crate::nets::{checkpoint, ParamSet};

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn save(path: &Path, set: &LabeledSet, seed: u64) -> Result<()> {
    let mut p = ParamSet::new();
    p.push("inputs", set.inputs().clone());
    p.push("labels", Tensor::vector(set.labels().iter().map(|&y| y as f64).collect()));
    // Ids are split into 32-bit halves so they survive the f64 payload.
    let halves = set
        .ids()
        .iter()
        .flat_map(|&id| [(id >> 32) as f64, (id & 0xffff_ffff) as f64])
        .collect();
    p.push("ids", Tensor::new(vec![set.len(), 2], halves)?);
    checkpoint::save(path, &p)?;
    let meta = set.meta();
    let text = format!(
        "kind={}\nseed={seed}\nN={}\nK={}\nconfounded={}\n",
        meta.kind.name(),
        set.len(),
        meta.classes,
        meta.confounded
    );
    let side = sidecar(path);
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Returns the set and the seed recorded with it.
pub fn load(path: &Path) -> Result<(LabeledSet, u64)> {
    let side = sidecar(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let mut kind = None;
    let mut seed = None;
    let mut n = None;
    let mut k = None;
    let mut confounded = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::format(&side, format!("malformed line {line:?}")))?;
        let bad = || Error::format(&side, format!("bad value for {key}"));
        match key.trim() {
            "kind" => kind = Some(DatasetKind::parse(value.trim()).ok_or_else(bad)?),
            "seed" => seed = Some(value.trim().parse::<u64>().map_err(|_| bad())?),
            "N" => n = Some(value.trim().parse::<usize>().map_err(|_| bad())?),
            "K" => k = Some(value.trim().parse::<usize>().map_err(|_| bad())?),
            "confounded" => confounded = Some(value.trim().parse::<bool>().map_err(|_| bad())?),
            other => return Err(Error::format(&side, format!("unknown key {other}"))),
        }
    }
    let missing = |key: &str| Error::format(&side, format!("missing {key}"));
    let meta = Meta {
        kind: kind.ok_or_else(|| missing("kind"))?,
        classes: k.ok_or_else(|| missing("K"))?,
        confounded: confounded.ok_or_else(|| missing("confounded"))?,
    };
    let n = n.ok_or_else(|| missing("N"))?;
    let params = checkpoint::load(path)?;
    let get = |name: &str| {
        params
            .get(name)
            .cloned()
            .ok_or_else(|| Error::format(path, format!("missing tensor {name}")))
    };
    let inputs = get("inputs")?;
    let labels = get("labels")?.data().iter().map(|&v| v as usize).collect::<Vec<_>>();
    let ids = get("ids")?
        .data()
        .chunks(2)
        .map(|h| ((h[0] as u64) << 32) | h[1] as u64)
        .collect();
    if labels.len() != n {
        return Err(Error::format(path, format!("sidecar says N={n}, file holds {}", labels.len())));
    }
    Ok((LabeledSet::new(inputs, labels, ids, meta)?, seed.ok_or_else(|| missing("seed"))?))
}
