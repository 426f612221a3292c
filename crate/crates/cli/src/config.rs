//! Experiment files: `[section]` headers followed by `key = value` lines.
//! `#` starts a comment. Unknown sections and keys are errors.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lsx_core::datasets::{CriticRelation, DatasetKind};
use lsx_core::logic::Aggregation;
use lsx_core::lsx::{CriticMode, Instantiation, LsxConfig};
use lsx_core::metrics::{IiesNorm, Variant, DEFAULT_B};

/// A config problem, with the 1-based line it was found on when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub kind: DatasetKind,
    pub seed: u64,
    /// Directory holding the MNIST IDX files; defaults to the bundled copy.
    pub dir: Option<PathBuf>,
    pub learner_size: usize,
    pub critic_size: usize,
    pub relation: CriticRelation,
    pub test_size: usize,
    /// Bit-flip noise on concept data.
    pub flip_prob: f64,
    pub cub_groups: usize,
    pub cub_classes: usize,
    /// Train the vanilla baseline on learner and critic sets together.
    pub vanilla_on_union: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub conv1: usize,
    pub conv2: usize,
    pub kernel: usize,
    pub pool: usize,
    pub hidden: usize,
    pub mlp_hidden: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub variant: Variant,
    pub b: Vec<f64>,
    pub alpha: f64,
    pub iies_norm: IiesNorm,
    /// Explanations written per class after training.
    pub dump_per_class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub lsx: LsxConfig,
    pub eval: EvalConfig,
    pub out: Option<PathBuf>,
}

const KEYS: &[(&str, &[&str])] = &[
    (
        "data",
        &[
            "kind",
            "seed",
            "dir",
            "learner_size",
            "critic_size",
            "critic_relation",
            "test_size",
            "flip_prob",
            "cub_groups",
            "cub_classes",
            "vanilla_on_union",
        ],
    ),
    ("model", &["instantiation", "conv1", "conv2", "kernel", "pool", "hidden", "mlp_hidden"]),
    (
        "lsx",
        &[
            "iterations",
            "lambda",
            "lambda_ft",
            "delta",
            "critic_reinit",
            "critic_epochs",
            "critic_mode",
            "tolerance",
            "fit_epochs",
            "revise_epochs",
            "finetune_epochs",
            "batch_size",
            "critic_batch_size",
            "lr",
            "critic_lr",
            "ig_steps",
            "max_objects",
            "max_attrs",
            "aggregation",
        ],
    ),
    ("eval", &["variant", "b", "alpha", "iies_norm", "dump_per_class"]),
    ("out", &["dir"]),
];

/// Raw `section.key -> (value, line)` entries.
struct Entries(BTreeMap<(String, String), (String, usize)>);

impl Entries {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        let mut section: Option<&str> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line_no, format!("malformed section header {line:?}")))?
                    .trim();
                let known = KEYS.iter().find(|(s, _)| *s == name);
                section = Some(known.ok_or_else(|| ConfigError::at(line_no, format!("unknown section [{name}]")))?.0);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line_no, format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section.ok_or_else(|| ConfigError::at(line_no, "key before any [section]"))?;
            let keys = KEYS.iter().find(|(s, _)| *s == sec).unwrap().1;
            if !keys.contains(&key) {
                return Err(ConfigError::at(line_no, format!("unknown key {key:?} in [{sec}]")));
            }
            if map.insert((sec.to_string(), key.to_string()), (value.to_string(), line_no)).is_some() {
                return Err(ConfigError::at(line_no, format!("duplicate key {key:?} in [{sec}]")));
            }
        }
        Ok(Entries(map))
    }

    fn raw(&self, sec: &str, key: &str) -> Option<(&str, usize)> {
        self.0.get(&(sec.to_string(), key.to_string())).map(|(v, l)| (v.as_str(), *l))
    }

    fn get<T: FromStr>(&self, sec: &str, key: &str, default: T) -> Result<T, ConfigError> {
        self.with(sec, key, default, |v| v.parse::<T>().ok())
    }

    fn with<T>(&self, sec: &str, key: &str, default: T, parse: impl Fn(&str) -> Option<T>) -> Result<T, ConfigError> {
        match self.raw(sec, key) {
            None => Ok(default),
            Some((v, line)) => parse(v).ok_or_else(|| ConfigError::at(line, format!("invalid value {v:?} for {key}"))),
        }
    }
}

fn parse_aggregation(s: &str) -> Option<Aggregation> {
    match s {
        "mean" => Some(Aggregation::Mean),
        "min" => Some(Aggregation::Min),
        _ => s
            .strip_prefix("softmin:")
            .and_then(|t| t.parse().ok())
            .filter(|t: &f64| *t > 0.0)
            .map(Aggregation::SoftMin),
    }
}

fn aggregation_text(a: Aggregation) -> String {
    match a {
        Aggregation::Mean => "mean".into(),
        Aggregation::Min => "min".into(),
        Aggregation::SoftMin(t) => format!("softmin:{t}"),
    }
}

fn parse_b(s: &str) -> Option<Vec<f64>> {
    let b: Option<Vec<f64>> = s.split(',').map(|q| q.trim().parse().ok()).collect();
    b.filter(|b| !b.is_empty() && b.iter().all(|q| (0.0..=100.0).contains(q) && *q > 0.0))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let e = Entries::parse(text)?;
        let kind = e.with("data", "kind", DatasetKind::Mnist, DatasetKind::parse)?;
        let concepts = !kind.is_image();
        let default_inst = if concepts { Instantiation::Nesy } else { Instantiation::Cnn };
        let instantiation = e.with("model", "instantiation", default_inst, Instantiation::parse)?;
        if instantiation == Instantiation::Cnn && concepts || instantiation == Instantiation::Nesy && !concepts {
            let line = e.raw("model", "instantiation").map_or(0, |(_, l)| l);
            return Err(ConfigError::at(
                line,
                format!("{} instantiation does not fit {} data", instantiation.name(), kind.name()),
            ));
        }
        let relation = e.with("data", "critic_relation", CriticRelation::Subset, CriticRelation::parse)?;
        let data = DataConfig {
            kind,
            seed: e.get("data", "seed", 0)?,
            dir: e.with("data", "dir", None, |v| Some(Some(PathBuf::from(v))))?,
            learner_size: e.get("data", "learner_size", if concepts { 600 } else { 1200 })?,
            critic_size: e.get("data", "critic_size", if concepts { 300 } else { 600 })?,
            relation,
            test_size: e.get("data", "test_size", if concepts { 900 } else { 2000 })?,
            flip_prob: e.get("data", "flip_prob", 0.0)?,
            cub_groups: e.get("data", "cub_groups", 8)?,
            cub_classes: e.get("data", "cub_classes", 10)?,
            vanilla_on_union: e.get("data", "vanilla_on_union", relation == CriticRelation::DeconfoundedHeldout)?,
        };
        let model = ModelConfig {
            conv1: e.get("model", "conv1", 8)?,
            conv2: e.get("model", "conv2", 16)?,
            kernel: e.get("model", "kernel", 5)?,
            pool: e.get("model", "pool", 2)?,
            hidden: e.get("model", "hidden", 128)?,
            mlp_hidden: e.get("model", "mlp_hidden", 64)?,
        };
        let base = match instantiation {
            Instantiation::Cnn => LsxConfig::cnn(0),
            Instantiation::Nesy => LsxConfig::nesy(0),
        };
        let mut caps = base.caps;
        caps.max_objects = e.get("lsx", "max_objects", caps.max_objects)?;
        caps.max_attrs = e.get("lsx", "max_attrs", caps.max_attrs)?;
        let lsx = LsxConfig {
            iterations: e.get("lsx", "iterations", base.iterations)?,
            lambda: e.get("lsx", "lambda", base.lambda)?,
            lambda_ft: e.get("lsx", "lambda_ft", base.lambda_ft)?,
            delta: e.get("lsx", "delta", base.delta)?,
            critic_reinit: e.get("lsx", "critic_reinit", base.critic_reinit)?,
            critic_epochs: e.get("lsx", "critic_epochs", base.critic_epochs)?,
            critic_mode: e.with("lsx", "critic_mode", base.critic_mode, |v| match v {
                "trained" => Some(CriticMode::Trained),
                "random" => Some(CriticMode::Random),
                _ => None,
            })?,
            tolerance: e.get("lsx", "tolerance", base.tolerance)?,
            fit_epochs: e.get("lsx", "fit_epochs", base.fit_epochs)?,
            revise_epochs: e.get("lsx", "revise_epochs", base.revise_epochs)?,
            finetune_epochs: e.get("lsx", "finetune_epochs", base.finetune_epochs)?,
            batch_size: e.get("lsx", "batch_size", base.batch_size)?,
            critic_batch_size: e.get("lsx", "critic_batch_size", base.critic_batch_size)?,
            lr: e.get("lsx", "lr", base.lr)?,
            critic_lr: e.get("lsx", "critic_lr", base.critic_lr)?,
            ig_steps: e.get("lsx", "ig_steps", base.ig_steps)?,
            caps,
            aggregation: e.with("lsx", "aggregation", base.aggregation, parse_aggregation)?,
            ..base
        };
        lsx.validate().map_err(|err| ConfigError::general(format!("[lsx]: {err}")))?;
        let eval = EvalConfig {
            variant: e.with("eval", "variant", Variant::Continuous, |v| match v {
                "continuous" => Some(Variant::Continuous),
                "discrete" => Some(Variant::Discrete),
                _ => None,
            })?,
            b: e.with("eval", "b", DEFAULT_B.to_vec(), parse_b)?,
            alpha: e.with("eval", "alpha", 1.0, |v| v.parse().ok().filter(|a: &f64| *a > 0.0))?,
            iies_norm: e.with("eval", "iies_norm", IiesNorm::OverK, |v| match v {
                "k" => Some(IiesNorm::OverK),
                "k-1" => Some(IiesNorm::OverKMinus1),
                _ => None,
            })?,
            dump_per_class: e.get("eval", "dump_per_class", 4)?,
        };
        let cfg = ExperimentConfig {
            data,
            model,
            lsx,
            eval,
            out: e.with("out", "dir", None, |v| Some(Some(PathBuf::from(v))))?,
        };
        cfg.check_sizes()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::general(format!("{}: {e}", path.display())))?;
        Ok(Self::parse(&text)?)
    }

    fn check_sizes(&self) -> Result<(), ConfigError> {
        let d = &self.data;
        if d.learner_size == 0 || d.critic_size == 0 || d.test_size == 0 {
            return Err(ConfigError::general("[data]: set sizes must be positive"));
        }
        if d.relation == CriticRelation::Subset && d.critic_size > d.learner_size {
            return Err(ConfigError::general("[data]: a subset critic set cannot exceed the learner set"));
        }
        if !(0.0..=1.0).contains(&d.flip_prob) {
            return Err(ConfigError::general("[data]: flip_prob outside [0,1]"));
        }
        Ok(())
    }

    /// Every key with its effective value; parses back to the same config.
    pub fn resolved(&self) -> String {
        let d = &self.data;
        let m = &self.model;
        let l = &self.lsx;
        let v = &self.eval;
        let mut s = String::new();
        let _ = writeln!(s, "[data]");
        let _ = writeln!(s, "kind = {}", d.kind.name());
        let _ = writeln!(s, "seed = {}", d.seed);
        if let Some(dir) = &d.dir {
            let _ = writeln!(s, "dir = {}", dir.display());
        }
        let _ = writeln!(s, "learner_size = {}", d.learner_size);
        let _ = writeln!(s, "critic_size = {}", d.critic_size);
        let _ = writeln!(s, "critic_relation = {}", d.relation.name());
        let _ = writeln!(s, "test_size = {}", d.test_size);
        let _ = writeln!(s, "flip_prob = {}", d.flip_prob);
        let _ = writeln!(s, "cub_groups = {}", d.cub_groups);
        let _ = writeln!(s, "cub_classes = {}", d.cub_classes);
        let _ = writeln!(s, "vanilla_on_union = {}", d.vanilla_on_union);
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "instantiation = {}", l.instantiation.name());
        let _ = writeln!(s, "conv1 = {}", m.conv1);
        let _ = writeln!(s, "conv2 = {}", m.conv2);
        let _ = writeln!(s, "kernel = {}", m.kernel);
        let _ = writeln!(s, "pool = {}", m.pool);
        let _ = writeln!(s, "hidden = {}", m.hidden);
        let _ = writeln!(s, "mlp_hidden = {}", m.mlp_hidden);
        let _ = writeln!(s, "\n[lsx]");
        let _ = writeln!(s, "iterations = {}", l.iterations);
        let _ = writeln!(s, "lambda = {}", l.lambda);
        let _ = writeln!(s, "lambda_ft = {}", l.lambda_ft);
        let _ = writeln!(s, "delta = {}", l.delta);
        let _ = writeln!(s, "critic_reinit = {}", l.critic_reinit);
        let _ = writeln!(s, "critic_epochs = {}", l.critic_epochs);
        let mode = match l.critic_mode {
            CriticMode::Trained => "trained",
            CriticMode::Random => "random",
        };
        let _ = writeln!(s, "critic_mode = {mode}");
        let _ = writeln!(s, "tolerance = {}", l.tolerance);
        let _ = writeln!(s, "fit_epochs = {}", l.fit_epochs);
        let _ = writeln!(s, "revise_epochs = {}", l.revise_epochs);
        let _ = writeln!(s, "finetune_epochs = {}", l.finetune_epochs);
        let _ = writeln!(s, "batch_size = {}", l.batch_size);
        let _ = writeln!(s, "critic_batch_size = {}", l.critic_batch_size);
        let _ = writeln!(s, "lr = {}", l.lr);
        let _ = writeln!(s, "critic_lr = {}", l.critic_lr);
        let _ = writeln!(s, "ig_steps = {}", l.ig_steps);
        let _ = writeln!(s, "max_objects = {}", l.caps.max_objects);
        let _ = writeln!(s, "max_attrs = {}", l.caps.max_attrs);
        let _ = writeln!(s, "aggregation = {}", aggregation_text(l.aggregation));
        let _ = writeln!(s, "\n[eval]");
        let _ = writeln!(s, "variant = {}", v.variant);
        let b: Vec<String> = v.b.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "b = {}", b.join(","));
        let _ = writeln!(s, "alpha = {}", v.alpha);
        let norm = match v.iies_norm {
            IiesNorm::OverK => "k",
            IiesNorm::OverKMinus1 => "k-1",
        };
        let _ = writeln!(s, "iies_norm = {norm}");
        let _ = writeln!(s, "dump_per_class = {}", v.dump_per_class);
        if let Some(out) = &self.out {
            let _ = writeln!(s, "\n[out]\ndir = {}", out.display());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_cnn_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.data.kind, DatasetKind::Mnist);
        assert_eq!(c.lsx, LsxConfig::cnn(0));
        assert_eq!(c.eval.b, DEFAULT_B.to_vec());
    }

    #[test]
    fn concept_data_defaults_to_nesy() {
        let c = ExperimentConfig::parse("[data]\nkind = concept-hans\n").unwrap();
        assert_eq!(c.lsx.instantiation, Instantiation::Nesy);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let err = ExperimentConfig::parse("[data]\nkind = mnist\n\n[lsx]\nlamda = 3\n").unwrap_err();
        assert_eq!(err.line, Some(5));
        assert!(err.to_string().contains("lamda"));
    }

    #[test]
    fn unknown_section_and_bad_values_are_rejected() {
        assert_eq!(ExperimentConfig::parse("[extra]\n").unwrap_err().line, Some(1));
        assert_eq!(ExperimentConfig::parse("[lsx]\n# c\nlambda = x\n").unwrap_err().line, Some(3));
        assert_eq!(ExperimentConfig::parse("lambda = 1\n").unwrap_err().line, Some(1));
        assert!(ExperimentConfig::parse("[lsx]\niterations = 0\n").is_err());
        assert!(ExperimentConfig::parse("[data]\nkind = mnist\n[model]\ninstantiation = nesy\n").is_err());
        assert_eq!(ExperimentConfig::parse("[lsx]\nlambda = 1\nlambda = 2\n").unwrap_err().line, Some(3));
    }

    #[test]
    fn resolved_text_round_trips() {
        let text = "[data]\nkind = decoy\ncritic_relation = deconfounded\n[lsx]\nlambda = 0\naggregation = softmin:0.5\n[eval]\nb = 5,10\n[out]\ndir = runs/a\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert!(c.data.vanilla_on_union);
        let back = ExperimentConfig::parse(&c.resolved()).unwrap();
        assert_eq!(back, c);
    }
}
