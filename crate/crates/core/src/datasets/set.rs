use lsx_autodiff::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Mnist,
    Decoy,
    Color,
    ConceptHans,
    CubNoisy,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Decoy => "decoy",
            DatasetKind::Color => "color",
            DatasetKind::ConceptHans => "concept-hans",
            DatasetKind::CubNoisy => "cub-noisy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            DatasetKind::Mnist,
            DatasetKind::Decoy,
            DatasetKind::Color,
            DatasetKind::ConceptHans,
            DatasetKind::CubNoisy,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    /// Image kinds carry `[N,C,H,W]` inputs; concept kinds carry `[N,O,A]`.
    pub fn is_image(self) -> bool {
        matches!(self, DatasetKind::Mnist | DatasetKind::Decoy | DatasetKind::Color)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Meta {
    pub kind: DatasetKind,
    pub classes: usize,
    pub confounded: bool,
}

/// Inputs with labels and stable sample ids. Ids survive every transform and
/// split, which is what disjointness checks compare.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    inputs: Tensor,
    labels: Vec<usize>,
    ids: Vec<u64>,
    meta: Meta,
}

impl LabeledSet {
    pub fn new(inputs: Tensor, labels: Vec<usize>, ids: Vec<u64>, meta: Meta) -> Result<Self> {
        let n = inputs.shape()[0];
        if labels.len() != n || ids.len() != n {
            return Err(Error::Shape(format!(
                "{n} inputs, {} labels, {} ids",
                labels.len(),
                ids.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= meta.classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside 0..{}",
                meta.classes
            )));
        }
        if meta.kind.is_image() && inputs.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("image values must lie in [0,1]".into()));
        }
        Ok(Self {
            inputs,
            labels,
            ids,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn meta(&self) -> Meta {
        self.meta
    }

    pub fn classes(&self) -> usize {
        self.meta.classes
    }

    /// Shape of one sample.
    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let row = self.inputs.numel() / self.len();
        &self.inputs.data()[i * row..(i + 1) * row]
    }

    pub fn select(&self, rows: &[usize]) -> LabeledSet {
        LabeledSet {
            inputs: self.inputs.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
            meta: self.meta,
        }
    }

    pub fn with_meta(mut self, meta: Meta) -> Self {
        self.meta = meta;
        self
    }

    /// Concatenation; both sets must share sample shape and class count.
    pub fn concat(&self, other: &LabeledSet) -> Result<LabeledSet> {
        if self.sample_shape() != other.sample_shape() || self.classes() != other.classes() {
            return Err(Error::Shape(format!(
                "cannot join {:?} and {:?}",
                self.inputs.shape(),
                other.inputs.shape()
            )));
        }
        let mut shape = self.inputs.shape().to_vec();
        shape[0] += other.len();
        let mut data = self.inputs.data().to_vec();
        data.extend_from_slice(other.inputs.data());
        let meta = Meta {
            confounded: self.meta.confounded || other.meta.confounded,
            ..self.meta
        };
        LabeledSet::new(
            Tensor::new(shape, data)?,
            [self.labels.as_slice(), &other.labels].concat(),
            [self.ids.as_slice(), &other.ids].concat(),
            meta,
        )
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Row indices grouped by label, in original order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.classes()];
        for (i, &y) in self.labels.iter().enumerate() {
            groups[y].push(i);
        }
        groups
    }
}

/// Splits rows into two stratified parts; the first gets `round(frac·n_k)`
/// rows of every class k. Row order within each part follows the shuffle.
pub fn stratified_indices(labels: &[usize], classes: usize, frac: f64, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut groups = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        groups[y].push(i);
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for mut g in groups {
        g.shuffle(rng);
        let take = ((g.len() as f64) * frac).round() as usize;
        a.extend_from_slice(&g[..take]);
        b.extend_from_slice(&g[take..]);
    }
    a.shuffle(rng);
    b.shuffle(rng);
    (a, b)
}

/// Draws `n` rows spread as evenly as possible over classes.
pub fn balanced_indices(set: &LabeledSet, n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let k = set.classes();
    let mut groups = set.indices_by_class();
    let mut out = Vec::with_capacity(n);
    for (c, g) in groups.iter_mut().enumerate() {
        let want = n / k + usize::from(c < n % k);
        if g.len() < want {
            return Err(Error::InvalidArgument(format!(
                "class {c} has {} samples, {want} requested",
                g.len()
            )));
        }
        g.shuffle(rng);
        out.extend_from_slice(&g[..want]);
    }
    out.shuffle(rng);
    Ok(out)
}
