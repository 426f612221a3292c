//! Data, models, training and evaluation as the runner wires them up.

use std::path::Path;

use anyhow::{bail, Context, Result};
use lsx_autodiff::Tensor;
use lsx_core::attribution::{normalize_max_abs, write_csv, write_pgm, CsvRow};
use lsx_core::datasets::{
    cub_prototypes, default_dir, holdout, load_dir, make_color, make_concept_hans, make_cub_noisy, make_decoy,
    ConceptHansSpec, ConceptSchema, CriticRelation, DatasetKind, LabeledSet, Mode, Split, SplitPolicy,
};
use lsx_core::logic::{select_best, score_candidates, Rule};
use lsx_core::lsx::{cnn, nesy, run_cnn, run_nesy, run_vanilla, Instantiation, LsxConfig, LsxData, RunReport};
use lsx_core::metrics::{
    accuracy, comp_suff_continuous, comp_suff_discrete, iies, iies_with_encoder, ridge_separability_split,
    MetricReport, Variant,
};
use lsx_core::nets::{argmax_rows, Classifier, CnnClassifier, CnnSpec, ConceptPredictor, MlpSpec, ParamSet};
use lsx_core::seed;
use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Every set one experiment touches.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub learner: LabeledSet,
    pub critic: LabeledSet,
    pub test: LabeledSet,
    pub schema: Option<ConceptSchema>,
}

fn per_class(n: usize, k: usize) -> usize {
    n.div_ceil(k)
}

fn image_sets(cfg: &ExperimentConfig) -> Result<(LabeledSet, Option<LabeledSet>, LabeledSet)> {
    let d = &cfg.data;
    let dir = d.dir.clone().unwrap_or_else(default_dir);
    let full = load_dir(&dir).with_context(|| format!("loading digits from {}", dir.display()))?;
    if d.test_size >= full.len() {
        bail!("test_size {} leaves no training pool out of {}", d.test_size, full.len());
    }
    let (pool, test) = holdout(&full, d.test_size, d.seed);
    let (pool, clean) = if d.relation == CriticRelation::DeconfoundedHeldout {
        let (p, c) = holdout(&pool, pool.len() / 2, seed::derive(d.seed, "heldout-pool"));
        (p, Some(c))
    } else {
        (pool, None)
    };
    let s = |tag: &str| seed::derive(d.seed, tag);
    let transform = |set: &LabeledSet, mode: Mode, tag: &str| -> Result<LabeledSet> {
        Ok(match d.kind {
            DatasetKind::Decoy => make_decoy(set, mode, s(tag))?,
            DatasetKind::Color => make_color(set, mode, s(tag))?,
            _ => set.clone(),
        })
    };
    let pool = transform(&pool, Mode::Train, "train")?;
    let clean = clean.map(|c| transform(&c, Mode::Test, "heldout")).transpose()?;
    let test = transform(&test, Mode::Test, "test")?;
    Ok((pool, clean, test))
}

fn concept_sets(cfg: &ExperimentConfig) -> Result<(LabeledSet, Option<LabeledSet>, LabeledSet, ConceptSchema)> {
    let d = &cfg.data;
    let s = |tag: &str| seed::derive(d.seed, tag);
    let pool_size = d.learner_size + if d.relation == CriticRelation::Disjoint { d.critic_size } else { 0 };
    match d.kind {
        DatasetKind::ConceptHans => {
            let spec = ConceptHansSpec {
                flip_prob: d.flip_prob,
                ..ConceptHansSpec::clevr_hans3()
            };
            let k = spec.rules.len();
            let pool = make_concept_hans(&spec, per_class(pool_size, k), Mode::Train, s("train"))?;
            let clean = (d.relation == CriticRelation::DeconfoundedHeldout)
                .then(|| make_concept_hans(&spec, per_class(d.critic_size, k), Mode::Test, s("heldout")))
                .transpose()?;
            let test = make_concept_hans(&spec, per_class(d.test_size, k), Mode::Test, s("test"))?;
            Ok((pool, clean, test, spec.schema))
        }
        DatasetKind::CubNoisy => {
            let protos = cub_prototypes(d.cub_classes, d.cub_groups, s("prototypes"));
            let k = d.cub_classes;
            let pool = make_cub_noisy(&protos, per_class(pool_size, k), s("train"))?;
            let clean = (d.relation == CriticRelation::DeconfoundedHeldout)
                .then(|| make_cub_noisy(&protos, per_class(d.critic_size, k), s("heldout")))
                .transpose()?;
            let test = make_cub_noisy(&protos, per_class(d.test_size, k), s("test"))?;
            Ok((pool, clean, test, ConceptSchema::cub(d.cub_groups)))
        }
        kind => bail!("{} is not a concept dataset", kind.name()),
    }
}

pub fn build_data(cfg: &ExperimentConfig) -> Result<Experiment> {
    let d = &cfg.data;
    let (pool, clean, test, schema) = if d.kind.is_image() {
        let (p, c, t) = image_sets(cfg)?;
        (p, c, t, None)
    } else {
        let (p, c, t, s) = concept_sets(cfg)?;
        (p, c, t, Some(s))
    };
    let policy = SplitPolicy {
        learner_size: d.learner_size,
        critic_size: d.critic_size,
        relation: d.relation,
    };
    let split = policy.apply(&pool, clean.as_ref(), d.seed)?;
    Ok(Experiment {
        learner: split.learner,
        critic: split.critic,
        test,
        schema,
    })
}

fn hash_set(h: &mut Sha256, set: &LabeledSet) {
    for v in set.inputs().data() {
        h.update(v.to_le_bytes());
    }
    for &y in set.labels() {
        h.update((y as u64).to_le_bytes());
    }
    for id in set.ids() {
        h.update(id.to_le_bytes());
    }
}

/// SHA-256 over the learner, critic and test sets.
pub fn dataset_hash(exp: &Experiment) -> String {
    let mut h = Sha256::new();
    for set in [&exp.learner, &exp.critic, &exp.test] {
        hash_set(&mut h, set);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// The trained model of either instantiation.
#[derive(Debug, Clone)]
pub enum Learner {
    Cnn(CnnClassifier),
    Nesy(ConceptPredictor),
}

impl Learner {
    pub fn classifier(&self) -> &dyn Classifier {
        match self {
            Learner::Cnn(m) => m,
            Learner::Nesy(m) => m,
        }
    }

    pub fn params(&self) -> &ParamSet {
        self.classifier().params()
    }

    pub fn init(cfg: &ExperimentConfig, exp: &Experiment, seed: u64) -> Result<Self> {
        Self::with(cfg, exp, |spec| CnnClassifier::new(spec, seed), |spec| ConceptPredictor::new(spec, seed))
    }

    pub fn from_params(cfg: &ExperimentConfig, exp: &Experiment, params: ParamSet) -> Result<Self> {
        let p2 = params.clone();
        Self::with(
            cfg,
            exp,
            move |spec| CnnClassifier::with_params(spec, params.clone()),
            move |spec| ConceptPredictor::with_params(spec, p2.clone()),
        )
    }

    fn with(
        cfg: &ExperimentConfig,
        exp: &Experiment,
        cnn: impl Fn(CnnSpec) -> lsx_core::Result<CnnClassifier>,
        mlp: impl Fn(MlpSpec) -> lsx_core::Result<ConceptPredictor>,
    ) -> Result<Self> {
        let shape = exp.learner.sample_shape();
        let classes = exp.learner.classes();
        let m = &cfg.model;
        Ok(match cfg.lsx.instantiation {
            Instantiation::Cnn => Learner::Cnn(cnn(CnnSpec {
                in_channels: shape[0],
                height: shape[1],
                width: shape[2],
                conv1: m.conv1,
                conv2: m.conv2,
                kernel: m.kernel,
                pool: m.pool,
                hidden: m.hidden,
                classes,
            })?),
            Instantiation::Nesy => Learner::Nesy(mlp(MlpSpec {
                slots: shape[0],
                attributes: shape[1],
                hidden: m.mlp_hidden,
                classes,
            })?),
        })
    }
}

fn lsx_config(cfg: &ExperimentConfig, seed: u64) -> LsxConfig {
    LsxConfig { seed, ..cfg.lsx.clone() }
}

pub fn train_lsx(cfg: &ExperimentConfig, exp: &Experiment, seed: u64) -> Result<(Learner, RunReport)> {
    let lcfg = lsx_config(cfg, seed);
    let data = LsxData {
        learner: exp.learner.clone(),
        critic: exp.critic.clone(),
        validation: None,
        schema: exp.schema.clone(),
    };
    Ok(match Learner::init(cfg, exp, seed)? {
        Learner::Cnn(m) => {
            let (m, r) = run_cnn(m, &data, &lcfg)?;
            (Learner::Cnn(m), r)
        }
        Learner::Nesy(m) => {
            let (m, r) = run_nesy(m, &data, &lcfg)?;
            (Learner::Nesy(m), r)
        }
    })
}

/// Fit-only training with the LSX run's epoch budget. Returns the model,
/// per-epoch losses and the epoch count.
pub fn train_vanilla(cfg: &ExperimentConfig, exp: &Experiment, seed: u64) -> Result<(Learner, Vec<f64>, usize)> {
    let lcfg = lsx_config(cfg, seed);
    let epochs = lcfg.total_epochs();
    let set = if cfg.data.vanilla_on_union {
        Split {
            learner: exp.learner.clone(),
            critic: exp.critic.clone(),
        }
        .union(cfg.data.seed)?
    } else {
        exp.learner.clone()
    };
    let mut learner = Learner::init(cfg, exp, seed)?;
    let losses = match &mut learner {
        Learner::Cnn(m) => run_vanilla(m, &set, &lcfg, epochs)?,
        Learner::Nesy(m) => run_vanilla(m, &set, &lcfg, epochs)?,
    };
    Ok((learner, losses, epochs))
}

/// True-class explanations of every sample in `set`.
pub fn explain(learner: &Learner, set: &LabeledSet, cfg: &ExperimentConfig) -> Result<Tensor> {
    Ok(match learner {
        Learner::Cnn(m) => cnn::explain_cnn(m, set.inputs(), set.labels())?,
        Learner::Nesy(m) => nesy::explain_values(m, set, cfg.lsx.ig_steps)?,
    })
}

fn flatten(t: &Tensor) -> Result<Tensor> {
    let n = t.shape()[0];
    Ok(t.reshape(vec![n, t.numel() / n])?)
}

pub fn evaluate(learner: &Learner, test: &LabeledSet, cfg: &ExperimentConfig, label: &str, seed: u64) -> Result<MetricReport> {
    let model = learner.classifier();
    let k = test.classes();
    let expl = explain(learner, test, cfg)?;
    let flat = flatten(&expl)?;
    let ridge = ridge_separability_split(&flat, test.labels(), k, cfg.eval.alpha, seed)?;
    let iies_value = match learner {
        Learner::Cnn(m) => iies_with_encoder(m, &expl, test.labels(), k, cfg.eval.iies_norm)?,
        Learner::Nesy(_) => iies(&normalize_max_abs(&flat), test.labels(), k, cfg.eval.iies_norm)?,
    };
    let (comp, suff) = match cfg.eval.variant {
        Variant::Continuous => comp_suff_continuous(model, test.inputs(), &expl, test.labels(), &cfg.eval.b, seed)?,
        Variant::Discrete => comp_suff_discrete(model, test.inputs(), &expl, &cfg.eval.b)?,
    };
    Ok(MetricReport {
        label: label.to_string(),
        seed,
        accuracy: accuracy(model, test)?,
        ridge_accuracy: ridge,
        iies: iies_value,
        comp,
        suff,
        variant: cfg.eval.variant,
        b: cfg.eval.b.clone(),
    })
}

/// `n` random sample rows per class, in class order.
pub fn sample_per_class(set: &LabeledSet, n: usize, seed_value: u64) -> Result<Vec<usize>> {
    let mut rng = seed::rng(seed_value, "dump");
    let mut rows = Vec::new();
    for (k, members) in set.indices_by_class().into_iter().enumerate() {
        if n > members.len() {
            bail!("{n} explanations requested for class {k}, which has {} samples", members.len());
        }
        rows.extend(members.choose_multiple(&mut rng, n).copied());
    }
    Ok(rows)
}

/// Rules the model's own explanations support best on `critic`.
pub fn learner_rules(learner: &ConceptPredictor, exp: &Experiment, cfg: &ExperimentConfig) -> Result<Vec<Rule>> {
    let schema = exp.schema.as_ref().context("concept schema missing")?;
    let cands = nesy::explain_nesy(learner, &exp.critic, schema, &cfg.lsx)?;
    let scores = score_candidates(&cands, &exp.critic, schema, cfg.lsx.aggregation)?;
    Ok(select_best(&scores)?)
}

/// Writes explanation files for `n` samples per class of `set` into `dir`:
/// `explanations.csv` always, one PGM per sample for images, one rule file
/// per class for concept data. Returns the number of files written.
pub fn dump_explanations(
    learner: &Learner,
    exp: &Experiment,
    set: &LabeledSet,
    cfg: &ExperimentConfig,
    dir: &Path,
    n: usize,
    seed_value: u64,
) -> Result<usize> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let rows = sample_per_class(set, n, seed_value)?;
    let chosen = set.select(&rows);
    let expl = if rows.is_empty() { None } else { Some(explain(learner, &chosen, cfg)?) };
    let mut written = 0;
    if let Some(expl) = &expl {
        let per = expl.numel() / rows.len();
        let pred = argmax_rows(&learner.classifier().predict(chosen.inputs())?);
        let csv: Vec<CsvRow> = (0..rows.len())
            .map(|i| CsvRow {
                sample_id: chosen.ids()[i],
                label: chosen.labels()[i],
                predicted: pred[i],
                values: &expl.data()[i * per..(i + 1) * per],
            })
            .collect();
        write_csv(&dir.join("explanations.csv"), &csv)?;
        written += 1;
        if let [c, h, w] = *set.sample_shape() {
            if set.meta().kind.is_image() {
                for i in 0..rows.len() {
                    let name = format!("class{}_{}.pgm", chosen.labels()[i], chosen.ids()[i]);
                    write_pgm(&dir.join(name), &expl.data()[i * per..(i + 1) * per], c, h, w)?;
                    written += 1;
                }
            }
        }
    }
    if let (Learner::Nesy(m), Some(schema)) = (learner, &exp.schema) {
        for rule in learner_rules(m, exp, cfg)? {
            let path = dir.join(format!("class{}.rule", rule.class()));
            std::fs::write(&path, rule.to_text(schema) + "\n").with_context(|| format!("writing {}", path.display()))?;
            written += 1;
        }
    }
    Ok(written)
}
