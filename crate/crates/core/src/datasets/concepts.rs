//! Concept-level synthetic data: object slots × one-hot attribute groups.

use lsx_autodiff::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;

use super::mnist::Mode;
use super::set::{DatasetKind, LabeledSet, Meta};
use crate::error::{Error, Result};
use crate::seed;

/// `group = value`, both as indices into a [`ConceptSchema`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Condition {
    pub group: usize,
    pub value: usize,
}

impl Condition {
    pub fn new(group: usize, value: usize) -> Self {
        Self { group, value }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeGroup {
    pub name: String,
    pub values: Vec<String>,
}

/// Column layout of a concept matrix: groups laid out back to back,
/// optionally followed by one presence column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptSchema {
    pub slots: usize,
    pub groups: Vec<AttributeGroup>,
    pub presence: bool,
}

impl ConceptSchema {
    pub fn new(slots: usize, groups: &[(&str, &[&str])], presence: bool) -> Self {
        Self {
            slots,
            groups: groups
                .iter()
                .map(|(name, values)| AttributeGroup {
                    name: name.to_string(),
                    values: values.iter().map(|v| v.to_string()).collect(),
                })
                .collect(),
            presence,
        }
    }

    /// Shape, size, material and colour over 10 slots: A = 16.
    pub fn clevr() -> Self {
        Self::new(
            10,
            &[
                ("shape", &["cube", "cylinder", "sphere"]),
                ("size", &["large", "small"]),
                ("material", &["rubber", "metal"]),
                (
                    "color",
                    &["gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow"],
                ),
            ],
            true,
        )
    }

    /// A single slot with `groups` four-valued attribute groups.
    pub fn cub(groups: usize) -> Self {
        let names: Vec<String> = (0..groups).map(|g| format!("c{g}")).collect();
        Self {
            slots: 1,
            groups: names
                .into_iter()
                .map(|name| AttributeGroup {
                    name,
                    values: (0..4).map(|v| format!("v{v}")).collect(),
                })
                .collect(),
            presence: false,
        }
    }

    pub fn attributes(&self) -> usize {
        self.groups.iter().map(|g| g.values.len()).sum::<usize>() + usize::from(self.presence)
    }

    pub fn presence_column(&self) -> Option<usize> {
        self.presence.then(|| self.attributes() - 1)
    }

    pub fn group_offset(&self, group: usize) -> usize {
        self.groups[..group].iter().map(|g| g.values.len()).sum()
    }

    pub fn column(&self, c: Condition) -> usize {
        self.group_offset(c.group) + c.value
    }

    /// Inverse of [`column`](Self::column); `None` for the presence column.
    pub fn condition_at(&self, column: usize) -> Option<Condition> {
        let mut off = 0;
        for (g, grp) in self.groups.iter().enumerate() {
            if column < off + grp.values.len() {
                return Some(Condition::new(g, column - off));
            }
            off += grp.values.len();
        }
        None
    }

    pub fn check(&self, c: Condition) -> Result<()> {
        match self.groups.get(c.group) {
            Some(g) if c.value < g.values.len() => Ok(()),
            _ => Err(Error::InvalidArgument(format!("condition {c:?} outside schema"))),
        }
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    pub fn value_index(&self, group: usize, name: &str) -> Option<usize> {
        self.groups[group].values.iter().position(|v| v == name)
    }

    /// Presence weight of a slot row.
    pub fn presence_of(&self, row: &[f64]) -> f64 {
        self.presence_column().map_or(1.0, |p| row[p])
    }
}

/// An object as one value per attribute group.
pub type Object = Vec<usize>;

fn object_matches(obj: &Object, conds: &[Condition]) -> bool {
    conds.iter().all(|c| obj[c.group] == c.value)
}

/// Generative class rule: objects that must all be present, plus an
/// attribute the first matching object carries only in training data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassRule {
    pub class: usize,
    pub objects: Vec<Vec<Condition>>,
    pub confounder: Option<(usize, Condition)>,
}

impl ClassRule {
    /// True when distinct objects cover every template.
    pub fn satisfied_by(&self, objects: &[Object]) -> bool {
        fn assign(templates: &[Vec<Condition>], objects: &[Object], used: &mut Vec<bool>) -> bool {
            let Some((first, rest)) = templates.split_first() else {
                return true;
            };
            for i in 0..objects.len() {
                if !used[i] && object_matches(&objects[i], first) {
                    used[i] = true;
                    if assign(rest, objects, used) {
                        return true;
                    }
                    used[i] = false;
                }
            }
            false
        }
        assign(&self.objects, objects, &mut vec![false; objects.len()])
    }

    /// Conditions an object shows when it carries this rule's confounder.
    fn confounded_signature(&self) -> Option<Vec<Condition>> {
        self.confounder.map(|(obj, c)| {
            let mut sig = self.objects[obj].clone();
            sig.push(c);
            sig
        })
    }

    fn confounder_trigger(&self) -> Option<(&[Condition], Condition)> {
        self.confounder.map(|(obj, c)| (self.objects[obj].as_slice(), c))
    }
}

/// The three-class rule set mirroring CLEVR-Hans3.
pub fn clevr_hans_rules() -> Vec<ClassRule> {
    let c = Condition::new;
    let (shape, size, material, color) = (0, 1, 2, 3);
    let (cube, cylinder, sphere) = (0, 1, 2);
    let (large, small) = (0, 1);
    let metal = 1;
    let (gray, blue, yellow) = (0, 2, 7);
    vec![
        ClassRule {
            class: 0,
            objects: vec![
                vec![c(shape, cube), c(size, large)],
                vec![c(shape, cylinder), c(size, large)],
            ],
            confounder: Some((0, c(color, gray))),
        },
        ClassRule {
            class: 1,
            objects: vec![
                vec![c(shape, cube), c(size, small), c(material, metal)],
                vec![c(shape, sphere), c(size, small)],
            ],
            confounder: Some((1, c(material, metal))),
        },
        ClassRule {
            class: 2,
            objects: vec![
                vec![c(shape, sphere), c(size, large), c(color, blue)],
                vec![c(shape, sphere), c(size, small), c(color, yellow)],
            ],
            confounder: None,
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptHansSpec {
    pub schema: ConceptSchema,
    pub rules: Vec<ClassRule>,
    pub max_distractors: usize,
    /// Probability of flipping each attribute bit of occupied slots,
    /// standing in for an imperfect concept encoder.
    pub flip_prob: f64,
}

impl ConceptHansSpec {
    pub fn clevr_hans3() -> Self {
        Self {
            schema: ConceptSchema::clevr(),
            rules: clevr_hans_rules(),
            max_distractors: 4,
            flip_prob: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.schema.presence {
            return Err(Error::InvalidArgument("concept-hans needs a presence column".into()));
        }
        for (k, r) in self.rules.iter().enumerate() {
            if r.class != k {
                return Err(Error::InvalidArgument(format!("rule {k} declares class {}", r.class)));
            }
            if r.objects.is_empty() || r.objects.len() > self.schema.slots {
                return Err(Error::Unsatisfiable(format!(
                    "class {k}: {} objects for {} slots",
                    r.objects.len(),
                    self.schema.slots
                )));
            }
            let mut extra = r.objects.clone();
            if let Some((o, c)) = r.confounder {
                extra.get_mut(o).ok_or_else(|| Error::Unsatisfiable(format!("class {k}: confounder object {o}")))?.push(c);
            }
            for obj in &extra {
                for c in obj {
                    self.schema.check(*c)?;
                }
                for (i, a) in obj.iter().enumerate() {
                    if obj[i + 1..].iter().any(|b| b.group == a.group && b.value != a.value) {
                        return Err(Error::Unsatisfiable(format!("class {k}: conflicting {a:?}")));
                    }
                }
            }
        }
        Ok(())
    }
}

const MAX_TRIES: usize = 10_000;

fn random_object(schema: &ConceptSchema, rng: &mut impl Rng) -> Object {
    schema.groups.iter().map(|g| rng.gen_range(0..g.values.len())).collect()
}

fn fill(schema: &ConceptSchema, conds: &[Condition], rng: &mut impl Rng) -> Object {
    let mut obj = random_object(schema, rng);
    for c in conds {
        obj[c.group] = c.value;
    }
    obj
}

struct Sampler<'a> {
    spec: &'a ConceptHansSpec,
    mode: Mode,
}

impl Sampler<'_> {
    /// Train-mode confounding: in class `k` every object triggering `k`'s
    /// confounder carries it, and no other class shows a confounded object.
    fn admissible(&self, k: usize, objects: &[Object]) -> bool {
        if self.mode == Mode::Train {
            for r in &self.spec.rules {
                if r.class == k {
                    if let Some((trigger, c)) = r.confounder_trigger() {
                        if objects.iter().any(|o| object_matches(o, trigger) && o[c.group] != c.value) {
                            return false;
                        }
                    }
                } else if let Some(sig) = r.confounded_signature() {
                    if objects.iter().any(|o| object_matches(o, &sig)) {
                        return false;
                    }
                }
            }
        }
        self.spec.rules.iter().all(|r| (r.class == k) == r.satisfied_by(objects))
    }

    fn sample(&self, k: usize, rng: &mut impl Rng) -> Result<Vec<Object>> {
        let spec = self.spec;
        let rule = &spec.rules[k];
        for _ in 0..MAX_TRIES {
            let mut objects: Vec<Object> = rule
                .objects
                .iter()
                .enumerate()
                .map(|(i, conds)| {
                    let mut conds = conds.clone();
                    if let (Mode::Train, Some((o, c))) = (self.mode, rule.confounder) {
                        if o == i {
                            conds.push(c);
                        }
                    }
                    fill(&spec.schema, &conds, rng)
                })
                .collect();
            if !self.admissible(k, &objects) {
                continue;
            }
            let room = spec.schema.slots - objects.len();
            let want = rng.gen_range(0..=spec.max_distractors.min(room));
            let mut placed = 0;
            let mut tries = 0;
            while placed < want && tries < MAX_TRIES {
                tries += 1;
                objects.push(random_object(&spec.schema, rng));
                if self.admissible(k, &objects) {
                    placed += 1;
                } else {
                    objects.pop();
                }
            }
            if placed == want {
                return Ok(objects);
            }
        }
        Err(Error::Unsatisfiable(format!(
            "class {k}: no admissible sample in {MAX_TRIES} draws"
        )))
    }
}

/// Samples `n_per_class` concept matrices per rule, classes interleaved.
pub fn make_concept_hans(spec: &ConceptHansSpec, n_per_class: usize, mode: Mode, seed: u64) -> Result<LabeledSet> {
    spec.validate()?;
    let schema = &spec.schema;
    let (o, a) = (schema.slots, schema.attributes());
    let presence = schema.presence_column().expect("validated");
    let k = spec.rules.len();
    let n = n_per_class * k;
    if n == 0 {
        return Err(Error::InvalidArgument("empty dataset requested".into()));
    }
    let mut rng = seed::rng(seed, "concept-hans");
    let sampler = Sampler { spec, mode };
    let mut data = vec![0.0; n * o * a];
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % k;
        let objects = sampler.sample(class, &mut rng)?;
        let mut slots: Vec<usize> = (0..o).collect();
        slots.shuffle(&mut rng);
        for (obj, &slot) in objects.iter().zip(&slots) {
            let row = &mut data[(i * o + slot) * a..(i * o + slot + 1) * a];
            for (g, &v) in obj.iter().enumerate() {
                row[schema.column(Condition::new(g, v))] = 1.0;
            }
            if spec.flip_prob > 0.0 {
                for cell in row[..presence].iter_mut() {
                    if rng.gen_bool(spec.flip_prob) {
                        *cell = 1.0 - *cell;
                    }
                }
            }
            row[presence] = 1.0;
        }
        labels.push(class);
    }
    let tag = match mode {
        Mode::Train => "concept-hans/train",
        Mode::Test => "concept-hans/test",
    };
    let base = seed::derive(seed, tag);
    let ids = (0..n as u64).map(|i| seed::derive(base, &i.to_string())).collect();
    LabeledSet::new(
        Tensor::new(vec![n, o, a], data)?,
        labels,
        ids,
        Meta {
            kind: DatasetKind::ConceptHans,
            classes: k,
            confounded: mode == Mode::Train && spec.rules.iter().any(|r| r.confounder.is_some()),
        },
    )
}

/// `classes` random prototypes, one-hot within each of `groups` 4-valued groups.
pub fn cub_prototypes(classes: usize, groups: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = seed::rng(seed, "cub/prototypes");
    (0..classes)
        .map(|_| {
            let mut p = vec![0u8; groups * 4];
            for g in 0..groups {
                p[g * 4 + rng.gen_range(0..4)] = 1;
            }
            p
        })
        .collect()
}

/// `binarize(prototype + U(0,1), 0.75)` per concept, shaped `[N,1,len]`.
pub fn make_cub_noisy(prototypes: &[Vec<u8>], n_per_class: usize, seed: u64) -> Result<LabeledSet> {
    let len = prototypes.first().map_or(0, Vec::len);
    if len == 0 || n_per_class == 0 || prototypes.iter().any(|p| p.len() != len) {
        return Err(Error::InvalidArgument("prototypes must be non-empty and equally long".into()));
    }
    if prototypes.iter().flatten().any(|&b| b > 1) {
        return Err(Error::InvalidArgument("prototypes must be binary".into()));
    }
    let mut rng = seed::rng(seed, "cub/noise");
    let k = prototypes.len();
    let n = k * n_per_class;
    let mut data = Vec::with_capacity(n * len);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % k;
        for &bit in &prototypes[class] {
            let noisy = bit as f64 + rng.gen::<f64>();
            data.push(if noisy > 0.75 { 1.0 } else { 0.0 });
        }
        labels.push(class);
    }
    LabeledSet::new(
        Tensor::new(vec![n, 1, len], data)?,
        labels,
        (0..n as u64).collect(),
        Meta {
            kind: DatasetKind::CubNoisy,
            classes: k,
            confounded: false,
        },
    )
}
