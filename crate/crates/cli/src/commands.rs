//! What each subcommand does, minus argument parsing.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lsx_core::datasets::{cache, LabeledSet};
use lsx_core::metrics::MetricReport;
use lsx_core::nets::checkpoint;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::pipeline::{build_data, dataset_hash, dump_explanations, evaluate, train_lsx, train_vanilla, Experiment, Learner};
use crate::svg::{render, Bar, Panel};

pub const CONFIG_FILE: &str = "config.resolved";
pub const EVENTS_FILE: &str = "events.log";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINTS: &str = "checkpoints";
pub const EXPLANATIONS: &str = "explanations";
pub const REPORT_FILE: &str = "report.svg";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

/// Bad invocation rather than a failed computation.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Lsx,
    Vanilla,
}

impl TrainMode {
    pub fn label(self) -> &'static str {
        match self {
            TrainMode::Lsx => "lsx",
            TrainMode::Vanilla => "vanilla",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "lsx" => Some(TrainMode::Lsx),
            "vanilla" => Some(TrainMode::Vanilla),
            _ => None,
        }
    }
}

/// Creates `dir`, clearing it first only when `overwrite` is set.
pub fn prepare_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let empty = dir.is_dir() && fs::read_dir(dir)?.next().is_none();
        if !empty {
            if !overwrite {
                return Err(UsageError(format!("{} already exists; pass --overwrite to replace it", dir.display())).into());
            }
            if dir.is_dir() {
                fs::remove_dir_all(dir)?;
            } else {
                fs::remove_file(dir)?;
            }
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn output_dir(out: Option<&Path>, cfg: &ExperimentConfig) -> Result<PathBuf> {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| UsageError("no output directory: pass --out or set dir under [out]".into()).into())
}

/// A finished run directory's identity, stored as comments atop the resolved config.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInfo {
    pub mode: TrainMode,
    pub seed: u64,
    pub dataset_sha256: String,
}

fn write_config(dir: &Path, cfg: &ExperimentConfig, info: &RunInfo) -> Result<()> {
    let text = format!(
        "# dataset sha256 = {}\n# run = {} seed={}\n{}",
        info.dataset_sha256,
        info.mode.label(),
        info.seed,
        cfg.resolved()
    );
    fs::write(dir.join(CONFIG_FILE), text)?;
    Ok(())
}

/// Loads a run directory's config and identity.
pub fn read_run(dir: &Path) -> Result<(ExperimentConfig, RunInfo)> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("{} is not a run directory", dir.display()))?;
    let cfg = ExperimentConfig::parse(&text).with_context(|| format!("in {}", path.display()))?;
    let mut hash = None;
    let mut run = None;
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("# dataset sha256 = ") {
            hash = Some(h.trim().to_string());
        } else if let Some(r) = line.strip_prefix("# run = ") {
            let (mode, seed) = r.split_once(" seed=").context("malformed run line")?;
            run = Some((
                TrainMode::parse(mode.trim()).context("unknown run mode")?,
                seed.trim().parse::<u64>().context("malformed run seed")?,
            ));
        }
    }
    let (mode, seed) = run.with_context(|| format!("{} lacks the run line", path.display()))?;
    Ok((
        cfg,
        RunInfo {
            mode,
            seed,
            dataset_sha256: hash.with_context(|| format!("{} lacks the dataset hash", path.display()))?,
        },
    ))
}

fn append_metrics(dir: &Path, report: &MetricReport) -> Result<()> {
    let path = dir.join(METRICS_FILE);
    let mut text = if path.exists() {
        fs::read_to_string(&path)?
    } else {
        format!("{}\n", MetricReport::CSV_HEADER)
    };
    text.push_str(&report.csv_row());
    text.push('\n');
    fs::write(&path, text)?;
    Ok(())
}

/// One parsed metrics.csv row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub label: String,
    pub seed: u64,
    pub values: [f64; 5],
}

pub const METRIC_NAMES: [&str; 5] = ["accuracy", "ridge_accuracy", "iies", "comp", "suff"];

pub fn read_metrics(dir: &Path) -> Result<Vec<MetricRow>> {
    let path = dir.join(METRICS_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 7 {
            bail!("{}:{}: expected at least 7 fields", path.display(), i + 1);
        }
        let num = |j: usize| -> Result<f64> {
            f[j].parse().with_context(|| format!("{}:{}: bad number {:?}", path.display(), i + 1, f[j]))
        };
        rows.push(MetricRow {
            label: f[0].to_string(),
            seed: f[1].parse().with_context(|| format!("{}:{}: bad seed", path.display(), i + 1))?,
            values: [num(2)?, num(3)?, num(4)?, num(5)?, num(6)?],
        });
    }
    Ok(rows)
}

fn single_run_svg(report: &MetricReport) -> String {
    let vals = [report.accuracy, report.ridge_accuracy, report.iies, report.comp, report.suff];
    let panels: Vec<Panel> = METRIC_NAMES
        .iter()
        .zip(vals)
        .map(|(name, v)| Panel {
            title: name.to_string(),
            bars: vec![Bar {
                label: report.label.clone(),
                mean: v,
                std: 0.0,
            }],
        })
        .collect();
    render(&panels)
}

pub struct TrainOutcome {
    pub dir: PathBuf,
    pub report: MetricReport,
    pub learner: Learner,
    pub experiment: Experiment,
}

/// Trains, evaluates on the test set and fills a fresh run directory.
pub fn train(cfg: &ExperimentConfig, mode: TrainMode, seed: u64, out: Option<&Path>, overwrite: bool) -> Result<TrainOutcome> {
    let dir = output_dir(out, cfg)?;
    prepare_dir(&dir, overwrite)?;
    let exp = build_data(cfg)?;
    let info = RunInfo {
        mode,
        seed,
        dataset_sha256: dataset_hash(&exp),
    };
    write_config(&dir, cfg, &info)?;
    let ckpt = dir.join(CHECKPOINTS);
    fs::create_dir_all(&ckpt)?;
    let (learner, log) = match mode {
        TrainMode::Lsx => {
            let (learner, run) = train_lsx(cfg, &exp, seed)?;
            checkpoint::save(&ckpt.join("fit.ckpt"), &run.fit_params)?;
            checkpoint::save(&ckpt.join("loop.ckpt"), &run.loop_params)?;
            let mut log: String = run.events.iter().map(|e| format!("{e}\n")).collect();
            for rec in &run.iterations {
                log.push_str(&format!(
                    "# iteration {} val_loss={} val_accuracy={:.2}",
                    rec.iteration, rec.val_loss, rec.val_accuracy
                ));
                if let Some(a) = rec.critic_accuracy {
                    log.push_str(&format!(" critic_accuracy={a:.2}"));
                }
                if rec.candidates > 0 {
                    log.push_str(&format!(" candidates={}", rec.candidates));
                }
                log.push('\n');
                for r in &rec.rules {
                    log.push_str(&format!("# rule {r}\n"));
                }
            }
            (learner, log)
        }
        TrainMode::Vanilla => {
            let (learner, losses, epochs) = train_vanilla(cfg, &exp, seed)?;
            let mut log = format!("fit epochs={epochs}\n");
            for (i, l) in losses.iter().enumerate() {
                log.push_str(&format!("# epoch {} loss={l}\n", i + 1));
            }
            (learner, log)
        }
    };
    fs::write(dir.join(EVENTS_FILE), log)?;
    checkpoint::save(&ckpt.join("final.ckpt"), learner.params())?;
    let report = evaluate(&learner, &exp.test, cfg, mode.label(), seed)?;
    append_metrics(&dir, &report)?;
    if cfg.eval.dump_per_class > 0 {
        dump_explanations(&learner, &exp, &exp.test, cfg, &dir.join(EXPLANATIONS), cfg.eval.dump_per_class, seed)?;
    }
    fs::write(dir.join(REPORT_FILE), single_run_svg(&report))?;
    Ok(TrainOutcome {
        dir,
        report,
        learner,
        experiment: exp,
    })
}

/// Rebuilds a run's data and reloads its final model.
pub fn load_run(dir: &Path) -> Result<(ExperimentConfig, RunInfo, Experiment, Learner)> {
    let (cfg, info) = read_run(dir)?;
    let exp = build_data(&cfg)?;
    let hash = dataset_hash(&exp);
    if hash != info.dataset_sha256 {
        bail!("the data rebuilt for {} does not match the recorded hash", dir.display());
    }
    let params = checkpoint::load(&dir.join(CHECKPOINTS).join("final.ckpt"))?;
    let learner = Learner::from_params(&cfg, &exp, params)?;
    Ok((cfg, info, exp, learner))
}

fn check_compatible(set: &LabeledSet, exp: &Experiment) -> Result<()> {
    if set.sample_shape() != exp.test.sample_shape() || set.classes() != exp.test.classes() {
        return Err(UsageError(format!(
            "test data has samples {:?} with {} classes, the model expects {:?} with {}",
            set.sample_shape(),
            set.classes(),
            exp.test.sample_shape(),
            exp.test.classes()
        ))
        .into());
    }
    Ok(())
}

/// Re-evaluates a run, optionally on a cached set, and appends the row.
pub fn eval(dir: &Path, test_data: Option<&Path>) -> Result<MetricReport> {
    let (cfg, info, exp, learner) = load_run(dir)?;
    let test = match test_data {
        Some(p) => {
            let (set, _) = cache::load(p).with_context(|| format!("loading {}", p.display()))?;
            check_compatible(&set, &exp)?;
            set
        }
        None => exp.test.clone(),
    };
    let report = evaluate(&learner, &test, &cfg, info.mode.label(), info.seed)?;
    append_metrics(dir, &report)?;
    if cfg.eval.dump_per_class > 0 {
        let target = dir.join(EXPLANATIONS);
        if target.is_dir() {
            for e in fs::read_dir(&target)? {
                let p = e?.path();
                if p.is_file() {
                    fs::remove_file(p)?;
                }
            }
        }
        dump_explanations(&learner, &exp, &test, &cfg, &target, cfg.eval.dump_per_class, info.seed)?;
    }
    Ok(report)
}

/// Writes `n` explanations per class of the run's test set to `out`.
pub fn dump(dir: &Path, n: usize, seed: u64, out: Option<&Path>, overwrite: bool) -> Result<(PathBuf, usize)> {
    let (cfg, _, exp, learner) = load_run(dir)?;
    let target = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join(EXPLANATIONS).join(format!("dump-seed{seed}")));
    prepare_dir(&target, overwrite)?;
    let written = dump_explanations(&learner, &exp, &exp.test, &cfg, &target, n, seed)?;
    Ok((target, written))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub label: String,
    pub runs: usize,
    pub mean: [f64; 5],
    pub std: [f64; 5],
}

/// Mean and sample standard deviation (0 for one run) per label.
pub fn aggregate(rows: &[MetricRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<&str, Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(&r.label).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(label, rs)| {
            let n = rs.len() as f64;
            let mut mean = [0.0; 5];
            let mut std = [0.0; 5];
            for j in 0..5 {
                mean[j] = rs.iter().map(|r| r.values[j]).sum::<f64>() / n;
                if rs.len() > 1 {
                    let ss: f64 = rs.iter().map(|r| (r.values[j] - mean[j]).powi(2)).sum();
                    std[j] = (ss / (n - 1.0)).sqrt();
                }
            }
            Aggregate {
                label: label.to_string(),
                runs: rs.len(),
                mean,
                std,
            }
        })
        .collect()
}

pub fn aggregate_csv(aggs: &[Aggregate]) -> String {
    let mut s = String::from("label,runs");
    for m in METRIC_NAMES {
        s.push_str(&format!(",{m}_mean,{m}_std"));
    }
    s.push('\n');
    for a in aggs {
        s.push_str(&format!("{},{}", a.label, a.runs));
        for j in 0..5 {
            s.push_str(&format!(",{},{}", a.mean[j], a.std[j]));
        }
        s.push('\n');
    }
    s
}

pub fn aggregate_svg(aggs: &[Aggregate]) -> String {
    let panels: Vec<Panel> = METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| Panel {
            title: name.to_string(),
            bars: aggs
                .iter()
                .map(|a| Bar {
                    label: format!("{} (n={})", a.label, a.runs),
                    mean: a.mean[j],
                    std: a.std[j],
                })
                .collect(),
        })
        .collect();
    render(&panels)
}

/// Aggregates the latest metrics row of each run. Runs must share one
/// configuration apart from the output directory.
pub fn report(dirs: &[PathBuf], out: &Path, overwrite: bool) -> Result<Vec<Aggregate>> {
    if dirs.is_empty() {
        return Err(UsageError("report needs at least one run directory".into()).into());
    }
    let loaded: Vec<(String, MetricRow)> = dirs
        .par_iter()
        .map(|d| -> Result<(String, MetricRow)> {
            let (mut cfg, _) = read_run(d)?;
            cfg.out = None;
            let last = read_metrics(d)?
                .pop()
                .with_context(|| format!("{} has no metrics rows", d.display()))?;
            Ok((cfg.resolved(), last))
        })
        .collect::<Result<_>>()?;
    if let Some(i) = loaded.iter().position(|(c, _)| *c != loaded[0].0) {
        return Err(UsageError(format!(
            "{} and {} were run with different configurations",
            dirs[0].display(),
            dirs[i].display()
        ))
        .into());
    }
    let rows: Vec<MetricRow> = loaded.into_iter().map(|(_, r)| r).collect();
    let aggs = aggregate(&rows);
    for p in [out.join(AGGREGATE_FILE), out.join(REPORT_FILE)] {
        if p.exists() && !overwrite {
            return Err(UsageError(format!("{} already exists; pass --overwrite to replace it", p.display())).into());
        }
    }
    fs::create_dir_all(out)?;
    fs::write(out.join(AGGREGATE_FILE), aggregate_csv(&aggs))?;
    fs::write(out.join(REPORT_FILE), aggregate_svg(&aggs))?;
    Ok(aggs)
}

/// Writes the learner, critic and test sets as cache files plus their hash.
pub fn gen_data(cfg: &ExperimentConfig, out: Option<&Path>, overwrite: bool) -> Result<(PathBuf, String)> {
    let dir = output_dir(out, cfg)?;
    prepare_dir(&dir, overwrite)?;
    let exp = build_data(cfg)?;
    for (name, set) in [("learner", &exp.learner), ("critic", &exp.critic), ("test", &exp.test)] {
        cache::save(&dir.join(format!("{name}.lsxd")), set, cfg.data.seed)?;
    }
    let hash = dataset_hash(&exp);
    fs::write(dir.join("sha256"), format!("{hash}\n"))?;
    fs::write(dir.join(CONFIG_FILE), format!("# dataset sha256 = {hash}\n{}", cfg.resolved()))?;
    Ok((dir, hash))
}
