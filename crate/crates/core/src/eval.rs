//! Accuracy, task/suite execution and report rendering.
//!
//! A task pairs a source and a target domain (benchmark manifests or a seeded
//! synthetic shift) with one or more methods. Reports are plain CSV plus a
//! fixed-width text table and contain nothing time-dependent, so the same
//! seed always produces byte-identical files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{load_dataset, make_synthetic_shift, LoadedDataset};
use crate::error::{Error, Result};
use crate::pipeline::{run, IterationTrace};
use crate::types::{AdapterKind, ExperimentConfig, FeatureMatrix, LabeledDomain, UnlabeledDomain};

/// Environment variable naming the dataset root.
pub const DATA_DIR_ENV: &str = "LABEL_REMEDY_DATA_DIR";

/// Fraction of positions where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// An adapter with or without the remedy loop, e.g. `jda+tsrp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Method {
    pub adapter: AdapterKind,
    pub tsrp: bool,
}

impl Method {
    pub fn apply(self, cfg: &ExperimentConfig) -> ExperimentConfig {
        ExperimentConfig {
            adapter: self.adapter,
            tsrp: self.tsrp,
            ..cfg.clone()
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.adapter {
            AdapterKind::Identity => "nn",
            other => other.as_str(),
        };
        if self.tsrp {
            write!(f, "{base}+tsrp")
        } else {
            f.write_str(base)
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (base, tsrp) = match lower.split_once('+') {
            Some((b, "tsrp")) => (b.to_string(), true),
            Some((_, other)) => {
                return Err(Error::InvalidConfig(format!(
                    "unknown method suffix `{other}`"
                )))
            }
            None => (lower, false),
        };
        Ok(Method {
            adapter: base.parse()?,
            tsrp,
        })
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub shift: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Where a task's domains come from.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskData {
    /// `<data_dir>/<name>.manifest` for each side.
    Benchmark {
        source: String,
        target: String,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub data: TaskData,
    pub methods: Vec<Method>,
    pub config: ExperimentConfig,
}

/// Domains plus the target ground truth, which only feeds the reports.
#[derive(Clone, Debug)]
pub struct TaskDomains {
    pub source: LabeledDomain,
    pub target: UnlabeledDomain,
    pub ground_truth: Vec<usize>,
}

pub fn load_task_domains(data: &TaskData, data_dir: Option<&Path>) -> Result<TaskDomains> {
    match data {
        TaskData::Synthetic(s) => {
            let d = make_synthetic_shift(s.classes, s.per_class, s.dim, s.shift, s.noise, s.seed)?;
            Ok(TaskDomains {
                source: d.source,
                target: d.target,
                ground_truth: d.ground_truth,
            })
        }
        TaskData::Benchmark { source, target } => {
            let dir = data_dir.ok_or_else(|| {
                Error::InvalidConfig(format!("benchmark tasks need {DATA_DIR_ENV} or --data-dir"))
            })?;
            let src = load_dataset(&manifest_path(dir, source))?;
            let tgt = load_dataset(&manifest_path(dir, target))?;
            align_domains(src, tgt)
        }
    }
}

pub fn manifest_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.manifest"))
}

/// Maps target ground-truth labels into the source's class ids by label name.
fn align_domains(source: LoadedDataset, target: LoadedDataset) -> Result<TaskDomains> {
    let n_classes = source.label_map.num_classes();
    let mut ground_truth = Vec::with_capacity(target.labels.len());
    for &l in &target.labels {
        let name = target.label_map.name(l).unwrap_or_default();
        let id = (0..n_classes)
            .find(|&c| source.label_map.name(c) == Some(name))
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "target class `{name}` of {} missing from source {}",
                    target.manifest.name, source.manifest.name
                ))
            })?;
        ground_truth.push(id);
    }
    Ok(TaskDomains {
        source: LabeledDomain::with_classes(source.features, source.labels, n_classes)?,
        target: UnlabeledDomain::new(target.features),
        ground_truth,
    })
}

#[derive(Clone, Debug)]
pub struct TaskResult {
    pub task: String,
    pub method: Method,
    pub config: ExperimentConfig,
    pub accuracy: f64,
    pub trace: Vec<IterationTrace>,
    pub labels: Vec<usize>,
}

/// Runs every method of one task on already-loaded domains.
pub fn run_loaded(spec: &TaskSpec, domains: &TaskDomains) -> Result<Vec<TaskResult>> {
    spec.methods
        .iter()
        .map(|&method| {
            let cfg = effective_config(method, &spec.config, domains.source.features());
            let out = run(
                &domains.source,
                &domains.target,
                &cfg,
                Some(&domains.ground_truth),
            )
            .map_err(|f| f.source)?;
            Ok(TaskResult {
                task: spec.name.clone(),
                method,
                accuracy: accuracy(out.labels(), &domains.ground_truth)?,
                config: cfg,
                trace: out.trace,
                labels: out.pseudo.into_labels(),
            })
        })
        .collect()
}

/// The identity adapter keeps every input coordinate.
fn effective_config(
    method: Method,
    base: &ExperimentConfig,
    x: &FeatureMatrix,
) -> ExperimentConfig {
    let mut cfg = method.apply(base);
    if method.adapter == AdapterKind::Identity {
        cfg.subspace_dim = x.dim();
    }
    cfg
}

pub fn run_task(spec: &TaskSpec, data_dir: Option<&Path>) -> Result<Vec<TaskResult>> {
    let domains = load_task_domains(&spec.data, data_dir)?;
    run_loaded(spec, &domains)
}

/// Suite file: shared defaults plus a list of tasks.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub defaults: ExperimentConfig,
    #[serde(default, rename = "task")]
    pub tasks: Vec<SuiteTask>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteTask {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub subspace_dim: Option<usize>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn task_specs(&self) -> Result<Vec<TaskSpec>> {
        self.tasks
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let data = match (&t.source, &t.target, &t.synthetic) {
                    (Some(s), Some(tg), None) => TaskData::Benchmark {
                        source: s.clone(),
                        target: tg.clone(),
                    },
                    (None, None, Some(syn)) => TaskData::Synthetic(syn.clone()),
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "task {i}: give either source + target or synthetic"
                        )))
                    }
                };
                let name = t.name.clone().unwrap_or_else(|| match &data {
                    TaskData::Benchmark { source, target } => format!("{source}->{target}"),
                    TaskData::Synthetic(s) => format!("synthetic-{}", s.seed),
                });
                let mut config = self.defaults.clone();
                if let Some(v) = t.rho {
                    config.rho = v;
                }
                if let Some(v) = t.subspace_dim {
                    config.subspace_dim = v;
                }
                if let Some(v) = t.lambda {
                    config.lambda = v;
                }
                if let Some(v) = t.mu {
                    config.mu = v;
                }
                Ok(TaskSpec {
                    name,
                    data,
                    methods: t.methods.clone(),
                    config,
                })
            })
            .collect()
    }
}

/// Runs tasks on a pool of `workers` threads; results keep task order.
pub fn run_suite(
    specs: &[TaskSpec],
    data_dir: Option<&Path>,
    workers: usize,
) -> Result<Vec<TaskResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let nested: Vec<Result<Vec<TaskResult>>> =
        pool.install(|| specs.par_iter().map(|s| run_task(s, data_dir)).collect());
    nested.into_iter().try_fold(Vec::new(), |mut acc, r| {
        acc.extend(r?);
        Ok(acc)
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// Configuration header, one `# key = value` line per setting.
pub fn config_header(task: &str, method: Method, cfg: &ExperimentConfig) -> String {
    format!(
        "# task = {task}\n# method = {method}\n# rho = {}\n# inner_iters = {}\n# outer_iters = {}\n\
         # subspace_dim = {}\n# lambda = {}\n# mu = {}\n# seed = {}\n# early_stop = {}\n",
        cfg.rho,
        cfg.inner_iters,
        cfg.outer_iters,
        cfg.subspace_dim,
        cfg.lambda,
        cfg.mu,
        cfg.seed,
        cfg.early_stop
    )
}

/// Per-iteration trace CSV: `iter,crude_acc,remedied_acc,high_frac`.
pub fn trace_csv(result: &TaskResult) -> String {
    let mut out = config_header(&result.task, result.method, &result.config);
    out.push_str("iter,crude_acc,remedied_acc,high_frac\n");
    for t in &result.trace {
        out.push_str(&format!(
            "{},{},{},{:.6}\n",
            t.iter,
            fmt_opt(t.crude_label_accuracy),
            fmt_opt(t.remedied_label_accuracy),
            t.high_conf_fraction
        ));
    }
    out
}

/// Methods in first-appearance order.
fn methods_of(results: &[TaskResult]) -> Vec<Method> {
    let mut methods = Vec::new();
    for r in results {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
}

fn tasks_of(results: &[TaskResult]) -> Vec<String> {
    let mut tasks: Vec<String> = Vec::new();
    for r in results {
        if !tasks.contains(&r.task) {
            tasks.push(r.task.clone());
        }
    }
    tasks
}

/// Arithmetic mean accuracy per method over the tasks that ran it.
pub fn method_averages(results: &[TaskResult]) -> Vec<(Method, f64)> {
    methods_of(results)
        .into_iter()
        .map(|m| {
            let accs: Vec<f64> = results
                .iter()
                .filter(|r| r.method == m)
                .map(|r| r.accuracy)
                .collect();
            (m, accs.iter().sum::<f64>() / accs.len() as f64)
        })
        .collect()
}

/// `task,method,accuracy` rows (percent) followed by one `average` row per method.
pub fn summary_csv(results: &[TaskResult]) -> String {
    let mut out = String::from("task,method,accuracy\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{:.2}\n",
            r.task,
            r.method,
            100.0 * r.accuracy
        ));
    }
    for (m, avg) in method_averages(results) {
        out.push_str(&format!("average,{m},{:.2}\n", 100.0 * avg));
    }
    out
}

/// Tasks as rows, methods as columns, with an average row at the bottom.
pub fn summary_table(results: &[TaskResult]) -> String {
    let methods = methods_of(results);
    let tasks = tasks_of(results);
    let width = tasks
        .iter()
        .map(String::len)
        .chain(["Average".len()])
        .max()
        .unwrap_or(8);
    let col = methods
        .iter()
        .map(|m| m.to_string().len())
        .max()
        .unwrap_or(6)
        .max(7);

    let mut out = format!("{:<width$}", "Task");
    for m in &methods {
        out.push_str(&format!(" | {:>col$}", m.to_string()));
    }
    out.push('\n');
    out.push_str(&"-".repeat(width + methods.len() * (col + 3)));
    out.push('\n');
    for t in &tasks {
        out.push_str(&format!("{t:<width$}"));
        for m in &methods {
            let cell = results
                .iter()
                .find(|r| &r.task == t && &r.method == m)
                .map_or_else(String::new, |r| format!("{:.2}", 100.0 * r.accuracy));
            out.push_str(&format!(" | {cell:>col$}"));
        }
        out.push('\n');
    }
    out.push_str(&format!("{:<width$}", "Average"));
    for (_, avg) in method_averages(results) {
        out.push_str(&format!(" | {:>col$}", format!("{:.2}", 100.0 * avg)));
    }
    out.push('\n');
    out
}

fn file_stem(task: &str, method: Method) -> String {
    let clean: String = task
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{clean}__{}", method.to_string().replace('+', "_"))
}

/// Writes per-run traces (and optionally labels) plus `summary.csv` and
/// `summary.txt` into `out_dir`. Returns the paths written, in order.
pub fn write_reports(
    out_dir: &Path,
    results: &[TaskResult],
    with_labels: bool,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: String, contents: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for r in results {
        let stem = file_stem(&r.task, r.method);
        write(format!("{stem}.trace.csv"), trace_csv(r))?;
        if with_labels {
            let labels: String = r.labels.iter().map(|l| format!("{l}\n")).collect();
            write(format!("{stem}.labels"), labels)?;
        }
    }
    write("summary.csv".into(), summary_csv(results))?;
    write("summary.txt".into(), summary_table(results))?;
    Ok(written)
}
