//! End-to-end drivers: generate a dataset from a config file, score
//! predictions against it, and summarize it.

use crate::dataset::{
    self, check_layout, read_case_json, read_formulation, read_input, read_primal_file, SampleRecord, SolveRecord,
    Split, SPLITS,
};
use crate::error::{Error, Result};
use crate::formulation::{evaluate_residuals, solve, SolveSettings};
use crate::matpower::{make_basic, parse_matpower, BasicOptions};
use crate::metrics::{self, Aggregate, ViolationStats};
use crate::network::Network;
use crate::sampler::{self, InstanceInput, SampleMode, SamplerConfig, StatusSampler};
use crate::schema::Formulation;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// Environment variable overriding the configured worker count.
pub const WORKERS_ENV: &str = "OPFKIT_WORKERS";
const WORK_DIR: &str = ".work";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    /// MATPOWER `.m` file or a `case.json`; relative to the config file.
    pub path: PathBuf,
    #[serde(default = "yes")]
    pub linearize_quadratic: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_bl")]
    pub b_l: f64,
    #[serde(default = "default_bu")]
    pub b_u: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "yes")]
    pub capacity_screen: bool,
    /// Knot table for time-series mode.
    pub knots: Option<PathBuf>,
    /// Grid step in seconds for time-series mode.
    pub step: Option<f64>,
}

fn default_mode() -> String {
    "demand".into()
}
fn default_bl() -> f64 {
    0.7
}
fn default_bu() -> f64 {
    1.1
}
fn default_eps() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub samples: usize,
    #[serde(default = "all_formulations")]
    pub formulations: Vec<String>,
    #[serde(default = "one")]
    pub workers: usize,
    /// Dataset root; relative to the config file.
    pub output: PathBuf,
}

fn all_formulations() -> Vec<String> {
    Formulation::ALL.iter().map(|f| f.name().to_string()).collect()
}
fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub case: CaseSection,
    pub sampler: SamplerSection,
    pub run: RunSection,
    /// Raw text, echoed into the dataset.
    #[serde(skip)]
    pub text: String,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.text = text.to_string();
        c.base_dir = base_dir.to_path_buf();
        c.sampler_config()?.validate()?;
        c.formulations()?;
        if c.run.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::parse(&text, &base).map_err(|e| Error::file(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let s = &self.sampler;
        Ok(SamplerConfig {
            b_l: s.b_l,
            b_u: s.b_u,
            eps: s.eps,
            mode: s.mode.parse()?,
            base_seed: s.base_seed,
            capacity_screen: s.capacity_screen,
        })
    }

    pub fn formulations(&self) -> Result<Vec<Formulation>> {
        let mut fs = self.run.formulations.iter().map(|s| s.parse()).collect::<Result<Vec<Formulation>>>()?;
        fs.sort();
        fs.dedup();
        if fs.is_empty() {
            return Err(Error::Config("no formulations requested".into()));
        }
        Ok(fs)
    }

    /// Configured worker count unless the environment overrides it.
    pub fn workers(&self) -> Result<usize> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
            },
            Err(_) => Ok(self.run.workers),
        }
    }
}

/// Loads a MATPOWER file or a `case.json`.
pub fn load_network(path: &Path, linearize_quadratic: bool) -> Result<Network> {
    if path.extension().is_some_and(|e| e == "json") {
        return read_case_json(path);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let (raw, _) = parse_matpower(&text).map_err(|e| Error::file(path, e))?;
    let (net, _) = make_basic(&raw, &BasicOptions { linearize_quadratic }).map_err(|e| Error::file(path, e))?;
    net.validate()?;
    Ok(net)
}

/// All instance inputs of a run, in sample order.
pub fn sample_inputs(cfg: &Config, net: &Network) -> Result<Vec<InstanceInput>> {
    let sc = cfg.sampler_config()?;
    let n = cfg.run.samples as u64;
    match sc.mode {
        SampleMode::Demand => Ok((0..n).map(|i| sampler::sample_demand(net, &sc, i)).collect()),
        SampleMode::NMinus1 => {
            if n == 0 {
                return Ok(vec![]);
            }
            let s = StatusSampler::new(net, &sc)?;
            Ok((0..n).map(|i| s.sample(net, &sc, i)).collect())
        }
        SampleMode::Timeseries => {
            let knots = cfg.sampler.knots.as_ref().ok_or_else(|| Error::Config("timeseries mode needs `knots`".into()))?;
            let step = cfg.sampler.step.ok_or_else(|| Error::Config("timeseries mode needs `step`".into()))?;
            let refined = sampler::refine_timeseries(&sampler::read_knots(&cfg.resolve(knots))?, step)?;
            let mut v = sampler::timeseries_inputs(net, &refined, sc.base_seed)?;
            v.truncate(cfg.run.samples);
            Ok(v)
        }
    }
}

/// Solves every requested formulation for one input. Solver failures are
/// recorded, not raised.
pub fn solve_sample(net: &Network, input: &InstanceInput, fs: &[Formulation], settings: &SolveSettings) -> SampleRecord {
    let results = fs
        .iter()
        .map(|&f| {
            let t = Instant::now();
            match solve(f, net, input, settings) {
                Ok(s) => SolveRecord::from_solved(&s),
                Err(_) => SolveRecord::failed(f, net, t.elapsed().as_secs_f64()),
            }
        })
        .collect();
    SampleRecord { input: input.clone(), results }
}

fn work_file(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("{i:08}.ron"))
}

/// A finished record from an earlier run, if it matches the input.
fn resume(dir: &Path, i: usize, input: &InstanceInput, fs: &[Formulation]) -> Option<SampleRecord> {
    let text = std::fs::read_to_string(work_file(dir, i)).ok()?;
    let rec: SampleRecord = ron::from_str(&text).ok()?;
    let same_fs = rec.results.iter().map(|r| r.formulation).eq(fs.iter().copied());
    (rec.input == *input && same_fs).then_some(rec)
}

fn save(dir: &Path, i: usize, rec: &SampleRecord) -> Result<()> {
    let text = ron::to_string(rec).map_err(|e| Error::Input(e.to_string()))?;
    let tmp = dir.join(format!("{i:08}.tmp"));
    std::fs::write(&tmp, text).map_err(|e| Error::file(&tmp, e))?;
    std::fs::rename(&tmp, work_file(dir, i)).map_err(|e| Error::file(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateSummary {
    pub root: PathBuf,
    pub samples: usize,
    pub train: usize,
    pub test: usize,
    pub infeasible: usize,
    pub resumed: usize,
    pub workers: usize,
    pub wall_clock: f64,
    pub processor_hours: f64,
    #[serde(skip)]
    pub split: Split,
}

/// Samples, solves and writes a dataset. Finished samples are kept under
/// `<output>/.work` until the dataset is written, so an interrupted run
/// picks up where it stopped.
pub fn generate(cfg: &Config, settings: &SolveSettings) -> Result<GenerateSummary> {
    let start = Instant::now();
    let net = load_network(&cfg.resolve(&cfg.case.path), cfg.case.linearize_quadratic)?;
    let fs = cfg.formulations()?;
    let workers = cfg.workers()?;
    let inputs = sample_inputs(cfg, &net)?;
    let root = cfg.resolve(&cfg.run.output);
    let work = root.join(WORK_DIR);
    std::fs::create_dir_all(&work).map_err(|e| Error::file(&work, e))?;

    let slots: Vec<Mutex<Option<SampleRecord>>> = (0..inputs.len()).map(|_| Mutex::new(None)).collect();
    let mut resumed = 0;
    for (i, input) in inputs.iter().enumerate() {
        if let Some(r) = resume(&work, i, input, &fs) {
            *slots[i].lock().expect("slot lock") = Some(r);
            resumed += 1;
        }
    }
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..workers.min(inputs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= inputs.len() || failure.lock().expect("failure lock").is_some() {
                    break;
                }
                if slots[i].lock().expect("slot lock").is_some() {
                    continue;
                }
                let rec = solve_sample(&net, &inputs[i], &fs, settings);
                if let Err(e) = save(&work, i, &rec) {
                    *failure.lock().expect("failure lock") = Some(e);
                    break;
                }
                *slots[i].lock().expect("slot lock") = Some(rec);
            });
        }
    });
    if let Some(e) = failure.into_inner().expect("failure lock") {
        return Err(e);
    }
    let records: Vec<SampleRecord> =
        slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every sample solved")).collect();

    for s in SPLITS {
        let d = root.join(s);
        if d.exists() {
            std::fs::remove_dir_all(&d).map_err(|e| Error::file(&d, e))?;
        }
    }
    let split = dataset::write_dataset(&root, &net, &records, &fs, &cfg.text, settings)?;
    std::fs::remove_dir_all(&work).map_err(|e| Error::file(&work, e))?;
    let all: Vec<&SolveRecord> = records.iter().flat_map(|r| &r.results).collect();
    let wall = start.elapsed().as_secs_f64();
    let timing = metrics::timing_report(&all, workers, wall)?;
    Ok(GenerateSummary {
        root,
        samples: records.len(),
        train: split.train.len(),
        test: split.test.len(),
        infeasible: split.infeasible.len(),
        resumed,
        workers,
        wall_clock: wall,
        processor_hours: timing.processor_hours,
        split,
    })
}

/// Scores of one predicted instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceScore {
    pub objective: f64,
    pub reference_objective: f64,
    pub gap: f64,
    pub distance_to_optimal: f64,
    pub distance_to_feasible: Option<f64>,
    pub violations: BTreeMap<String, ViolationStats>,
}

/// Aggregates of one violation group across instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub max: Aggregate,
    pub total: Aggregate,
    pub proportion_violated: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluateReport {
    pub formulation: String,
    pub split: String,
    pub threshold: f64,
    pub instances: Vec<InstanceScore>,
    pub gap: Aggregate,
    pub distance_to_optimal: Aggregate,
    pub distance_to_feasible: Option<Aggregate>,
    pub violations: BTreeMap<String, GroupSummary>,
}

impl EvaluateReport {
    /// Aligned-column text version of the aggregates.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} on {} ({} instances)\n", self.formulation, self.split, self.instances.len());
        s += &format!("{:<24}{:>14}{:>14}{:>14}\n", "metric", "mean", "std", "max");
        let row = |name: &str, a: &Aggregate| format!("{name:<24}{:>14.6e}{:>14.6e}{:>14.6e}\n", a.mean, a.std, a.max);
        s += &row("optimality_gap", &self.gap);
        s += &row("distance_to_optimal", &self.distance_to_optimal);
        if let Some(d) = &self.distance_to_feasible {
            s += &row("distance_to_feasible", d);
        }
        for (k, g) in &self.violations {
            s += &row(&format!("{k}.max"), &g.max);
            s += &row(&format!("{k}.proportion"), &g.proportion_violated);
        }
        s
    }
}

/// Scores predictions stored with the `primal.h5` layout against one split.
pub fn evaluate(
    root: &Path,
    predictions: &Path,
    f: Formulation,
    split: &str,
    project: bool,
    settings: &SolveSettings,
) -> Result<EvaluateReport> {
    let net = read_case_json(&root.join("case.json"))?;
    let inputs = read_input(root, split, &net)?.inputs;
    let reference = read_formulation(root, split, f, &net, inputs.len())?;
    let (n, preds) = read_primal_file(predictions, f, &net)?;
    if n != inputs.len() {
        let e = Error::Shape { key: "samples".into(), expected: vec![inputs.len()], found: vec![n] };
        return Err(Error::file(predictions, e));
    }
    let mut instances = Vec::with_capacity(n);
    for (i, (input, pred)) in inputs.iter().zip(&preds).enumerate() {
        let opt = reference.primal_point(i);
        let objective = metrics::primal_objective(&net, input, pred)?;
        let reference_objective = metrics::primal_objective(&net, input, &opt)?;
        let rep = evaluate_residuals(f, &net, input, pred)?;
        let distance_to_feasible = if project {
            Some(metrics::distance_to_feasible(f, &net, input, pred, settings)?.distance)
        } else {
            None
        };
        instances.push(InstanceScore {
            objective,
            reference_objective,
            gap: metrics::optimality_gap(objective, reference_objective)?,
            distance_to_optimal: metrics::distance_to_optimal(pred, &opt)?,
            distance_to_feasible,
            violations: metrics::violation_stats(&rep, metrics::DEFAULT_THRESHOLD),
        });
    }
    let agg = |get: &dyn Fn(&InstanceScore) -> f64| Aggregate::of(&instances.iter().map(get).collect::<Vec<_>>());
    let mut violations = BTreeMap::new();
    if let Some(first) = instances.first() {
        for k in first.violations.keys() {
            violations.insert(
                k.clone(),
                GroupSummary {
                    max: agg(&|s| s.violations[k].max),
                    total: agg(&|s| s.violations[k].total),
                    proportion_violated: agg(&|s| s.violations[k].proportion_violated),
                },
            );
        }
    }
    Ok(EvaluateReport {
        formulation: f.name().into(),
        split: split.into(),
        threshold: metrics::DEFAULT_THRESHOLD,
        gap: agg(&|s| s.gap),
        distance_to_optimal: agg(&|s| s.distance_to_optimal),
        distance_to_feasible: project.then(|| agg(&|s| s.distance_to_feasible.unwrap_or(f64::NAN))),
        violations,
        instances,
    })
}

/// Statistics of one formulation in one split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormulationSummary {
    pub solved: usize,
    pub objective: Aggregate,
    /// `|primal − dual| / |primal|` over solved samples with a dual bound.
    pub duality_gap: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InspectReport {
    pub case: String,
    pub buses: usize,
    pub branches: usize,
    pub generators: usize,
    pub loads: usize,
    pub counts: BTreeMap<String, usize>,
    /// Per-sample shape of each input array.
    pub input_shapes: BTreeMap<String, Vec<usize>>,
    pub formulations: BTreeMap<String, BTreeMap<String, FormulationSummary>>,
}

impl InspectReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "case {}: {} buses, {} branches, {} generators, {} loads\n",
            self.case, self.buses, self.branches, self.generators, self.loads
        );
        for (k, n) in &self.counts {
            s += &format!("{k:<12}{n:>8} samples\n");
        }
        for (k, shape) in &self.input_shapes {
            s += &format!("input {k:<16}(N, {})\n", shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", "));
        }
        s += &format!("{:<10}{:<12}{:>8}{:>16}{:>16}{:>14}\n", "model", "split", "solved", "mean obj", "max obj", "max dgap");
        for (f, per) in &self.formulations {
            for (split, x) in per {
                let dg = x.duality_gap.map_or("-".to_string(), |a| format!("{:.3e}", a.max));
                s += &format!("{f:<10}{split:<12}{:>8}{:>16.6}{:>16.6}{dg:>14}\n", x.solved, x.objective.mean, x.objective.max);
            }
        }
        s
    }
}

pub fn inspect(root: &Path) -> Result<InspectReport> {
    let layout = check_layout(root)?;
    let net = read_case_json(&root.join("case.json"))?;
    let mut formulations = BTreeMap::new();
    for &f in &layout.formulations {
        let mut per = BTreeMap::new();
        for split in SPLITS {
            let n = layout.counts[split];
            let d = read_formulation(root, split, f, &net, n)?;
            let solved: Vec<usize> = (0..n)
                .filter(|&i| {
                    let s = d.strings["termination_status"][i].as_str();
                    s == "OPTIMAL" || s == "LOCALLY_SOLVED"
                })
                .collect();
            let obj: Vec<f64> = solved.iter().map(|&i| d.numbers["primal_objective_value"][i]).collect();
            let gaps: Vec<f64> = solved
                .iter()
                .map(|&i| (d.numbers["primal_objective_value"][i], d.numbers["dual_objective_value"][i]))
                .filter(|(_, b)| b.is_finite())
                .map(|(a, b)| (a - b).abs() / a.abs().max(1e-12))
                .collect();
            let duality_gap = (f != Formulation::Ac && !gaps.is_empty()).then(|| Aggregate::of(&gaps));
            per.insert(split.to_string(), FormulationSummary { solved: solved.len(), objective: Aggregate::of(&obj), duality_gap });
        }
        formulations.insert(f.name().to_string(), per);
    }
    let input_shapes = crate::schema::INPUT_KEYS.iter().map(|k| (k.name.to_string(), vec![k.dim.len(&net)])).collect();
    Ok(InspectReport {
        case: layout.case,
        buses: net.n_bus(),
        branches: net.n_branch(),
        generators: net.n_gen(),
        loads: net.n_load(),
        counts: layout.counts,
        input_shapes,
        formulations,
    })
}
