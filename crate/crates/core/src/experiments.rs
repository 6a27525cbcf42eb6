//! Batch runs over instance sets and their CSV output.

use std::hash::Hasher;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHasher;

use crate::bay::Geometry;
use crate::bounds::{blocking_bound_with, lookahead_bound_with, BoundKind};
use crate::error::{Error, Result};
use crate::heuristics::{exact_policy_value, simulate_policy, Policy, DEFAULT_SAMPLES};
use crate::instance::{Instance, InstanceOrder, Model};
use crate::io::{instance_files, read_instance};
use crate::solver::{brute_force_expectimax, pbfs_with, pbfsa_with, DeltaRule, SearchOptions, Status};

pub const CSV_HEADER: [&str; 12] = [
    "instance",
    "model",
    "method",
    "bound",
    "value",
    "status",
    "nodes",
    "pruned",
    "cache_hits",
    "samples",
    "seconds",
    "seed",
];

/// Gaps above this count as a counterexample or a model violation.
pub const GAP_TOLERANCE: f64 = 1e-9;

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum EpsilonRule {
    Absolute(f64),
    /// A fraction of the root's blocking bound.
    FractionOfBlocking(f64),
}

impl Default for EpsilonRule {
    fn default() -> Self {
        EpsilonRule::FractionOfBlocking(0.5)
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Method {
    Pbfs,
    Pbfsa,
    Heuristic(Policy),
    Bound(BoundKind),
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pbfs => "pbfs",
            Method::Pbfsa => "pbfsa",
            Method::Heuristic(p) => p.name(),
            Method::Bound(_) => "bounds",
            Method::Oracle => "oracle",
        }
    }

    /// Every method of a bench table, bounds first.
    pub fn bench_set() -> Vec<Method> {
        let mut out = vec![
            Method::Bound(BoundKind::Blocking),
            Method::Bound(BoundKind::LookAhead(1)),
            Method::Bound(BoundKind::LookAhead(2)),
            Method::Pbfs,
            Method::Pbfsa,
        ];
        out.extend(Policy::ALL.iter().map(|&p| Method::Heuristic(p)));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: Model,
    /// Bound guiding the searches.
    pub bound: BoundKind,
    pub epsilon: EpsilonRule,
    pub samples: usize,
    pub seed: u64,
    pub time_limit: Option<Duration>,
    /// Worker threads; 0 picks the number of cores.
    pub jobs: usize,
    /// Fill the `seconds` column (makes output machine dependent).
    pub timing: bool,
    /// Score heuristics exactly instead of by simulation.
    pub exact_policies: bool,
    pub delta: DeltaRule,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: Model::Batch,
            bound: BoundKind::LookAhead(1),
            epsilon: EpsilonRule::default(),
            samples: DEFAULT_SAMPLES,
            seed: 0,
            time_limit: Some(crate::solver::DEFAULT_TIME_LIMIT),
            jobs: 0,
            timing: false,
            exact_policies: false,
            delta: DeltaRule::BatchIndex,
        }
    }
}

impl RunConfig {
    fn search(&self, model: Model) -> SearchOptions {
        SearchOptions {
            bound: self.bound,
            model,
            time_limit: self.time_limit,
            shortcuts: true,
        }
    }
}

/// One CSV line.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub instance: String,
    pub model: Model,
    pub method: String,
    pub bound: String,
    pub value: Option<f64>,
    pub status: String,
    pub nodes: u64,
    pub pruned: u64,
    pub cache_hits: u64,
    pub samples: u64,
    pub seconds: f64,
    pub seed: u64,
    /// Error text for failed rows; not written to the CSV.
    pub message: Option<String>,
}

impl Row {
    pub fn failed(&self) -> bool {
        self.status == Status::Timeout.name() || self.status == "error"
    }

    pub fn record(&self, timing: bool) -> Vec<String> {
        vec![
            self.instance.clone(),
            self.model.name().to_string(),
            self.method.clone(),
            self.bound.clone(),
            self.value.map(format_value).unwrap_or_default(),
            self.status.clone(),
            self.nodes.to_string(),
            self.pruned.to_string(),
            self.cache_hits.to_string(),
            self.samples.to_string(),
            if timing { format!("{:.6}", self.seconds) } else { String::new() },
            self.seed.to_string(),
        ]
    }
}

pub fn format_value(v: f64) -> String {
    format!("{v:.10}")
}

/// Seed of one instance's randomized methods: fixed by the run seed and the name.
pub fn instance_seed(seed: u64, name: &str) -> u64 {
    let mut h = FxHasher::default();
    h.write_u64(seed);
    h.write(name.as_bytes());
    h.finish()
}

/// The epsilon a run uses on `instance`.
pub fn resolve_epsilon(rule: EpsilonRule, instance: &Instance) -> f64 {
    match rule {
        EpsilonRule::Absolute(e) => e,
        EpsilonRule::FractionOfBlocking(f) => f * blocking_bound_with(&instance.initial, &InstanceOrder::new(instance)),
    }
}

/// Runs one method on one instance. Failures become rows with status `error`.
pub fn run_method(name: &str, instance: &Instance, method: Method, model: Model, cfg: &RunConfig) -> Row {
    let start = Instant::now();
    let seed = instance_seed(cfg.seed, name);
    let mut row = Row {
        instance: name.to_string(),
        model,
        method: method.name().to_string(),
        bound: match method {
            Method::Pbfs | Method::Pbfsa => cfg.bound.name(),
            Method::Bound(k) => k.name(),
            _ => String::new(),
        },
        value: None,
        status: "error".into(),
        nodes: 0,
        pruned: 0,
        cache_hits: 0,
        samples: 0,
        seconds: 0.0,
        seed: cfg.seed,
        message: None,
    };
    let outcome = match method {
        Method::Pbfs => pbfs_with(instance, &cfg.search(model)),
        Method::Pbfsa => {
            let eps = resolve_epsilon(cfg.epsilon, instance);
            if eps > 0.0 {
                pbfsa_with(instance, &cfg.search(model), eps, seed, cfg.delta)
            } else {
                // nothing blocks at the root: no error budget, solve exactly
                pbfs_with(instance, &cfg.search(model))
            }
        }
        Method::Oracle => brute_force_expectimax(instance, model),
        Method::Bound(k) => {
            if model == Model::Online && instance.has_nonuniform() {
                Err(Error::Unsupported(
                    "non-uniform order distributions are only supported in the batch model".into(),
                ))
            } else {
                let v = lookahead_bound_with(&instance.initial, k, &InstanceOrder::new(instance));
                row.value = Some(v);
                row.status = "bound".into();
                row.seconds = start.elapsed().as_secs_f64();
                return row;
            }
        }
        Method::Heuristic(p) => {
            if cfg.exact_policies {
                exact_policy_value(instance, p, model)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                match simulate_policy(instance, p, model, cfg.samples, &mut rng, true) {
                    Ok(rep) => {
                        row.value = Some(rep.mean);
                        row.status = Status::Sampled.name().into();
                        row.samples = rep.samples as u64;
                        row.seconds = start.elapsed().as_secs_f64();
                        return row;
                    }
                    Err(e) => Err(e),
                }
            }
        }
    };
    match outcome {
        Ok(v) => {
            row.value = Some(v.expected_relocations);
            row.status = v.status.name().into();
            row.nodes = v.stats.expanded;
            row.pruned = v.stats.pruned;
            row.cache_hits = v.stats.cache_hits;
            row.samples = v.stats.samples;
        }
        Err(e) => row.message = Some(e.to_string()),
    }
    row.seconds = start.elapsed().as_secs_f64();
    row
}

/// Runs `f` on a pool of `jobs` threads (0 = one per core).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Every (instance, method) pair, instances in the given order, methods in list order.
pub fn run_all(instances: &[(String, Instance)], methods: &[Method], cfg: &RunConfig) -> Vec<Row> {
    let jobs: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|i| (0..methods.len()).map(move |m| (i, m)))
        .collect();
    with_jobs(cfg.jobs, || {
        jobs.par_iter()
            .map(|&(i, m)| {
                let (name, inst) = &instances[i];
                run_method(name, inst, methods[m], cfg.model, cfg)
            })
            .collect()
    })
}

pub fn write_rows<W: Write>(out: W, rows: &[Row], timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record(r.record(timing)).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Instances of a file or of every `*.scrp` file in a directory, named by file stem.
pub fn load_instances(path: &Path) -> Result<Vec<(String, Instance)>> {
    let files = if path.is_dir() {
        instance_files(path)?
    } else {
        vec![path.to_path_buf()]
    };
    files
        .iter()
        .map(|f| {
            let name = f.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            Ok((name, read_instance(f)?))
        })
        .collect()
}

/// Per-method aggregate of a bench table.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub bound: String,
    pub instances: usize,
    pub solved: usize,
    /// Mean over solved instances.
    pub mean_value: Option<f64>,
    /// Mean time, reported only when every instance was solved.
    pub mean_seconds: Option<f64>,
}

pub fn summarize(rows: &[Row]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.method.clone(), r.bound.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, bound)| {
            let group: Vec<&Row> = rows.iter().filter(|r| r.method == method && r.bound == bound).collect();
            let solved: Vec<&&Row> = group.iter().filter(|r| !r.failed() && r.value.is_some()).collect();
            let mean_value =
                (!solved.is_empty()).then(|| solved.iter().map(|r| r.value.unwrap()).sum::<f64>() / solved.len() as f64);
            let mean_seconds = (solved.len() == group.len() && !group.is_empty())
                .then(|| group.iter().map(|r| r.seconds).sum::<f64>() / group.len() as f64);
            SummaryRow {
                method,
                bound,
                instances: group.len(),
                solved: solved.len(),
                mean_value,
                mean_seconds,
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(out: W, summary: &[SummaryRow], timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "bound", "solved", "mean_value", "mean_seconds"])
        .map_err(csv_error)?;
    for s in summary {
        w.write_record([
            s.method.clone(),
            s.bound.clone(),
            format!("{}/{}", s.solved, s.instances),
            s.mean_value.map(format_value).unwrap_or_default(),
            match (timing, s.mean_seconds) {
                (true, Some(t)) => format!("{t:.6}"),
                _ => String::new(),
            },
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Optimal values of one instance under both information models.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelComparison {
    pub instance: String,
    pub batch: Option<f64>,
    pub online: Option<f64>,
    /// `100 * (online - batch) / batch`; 0 when both are 0.
    pub difference_pct: Option<f64>,
    /// `ok`, `violation` (batch above online), `timeout` or `error`.
    pub status: String,
}

pub fn compare_models(instances: &[(String, Instance)], cfg: &RunConfig) -> Vec<ModelComparison> {
    with_jobs(cfg.jobs, || {
        instances
            .par_iter()
            .map(|(name, inst)| {
                let b = run_method(name, inst, Method::Pbfs, Model::Batch, cfg);
                let o = run_method(name, inst, Method::Pbfs, Model::Online, cfg);
                let status = if b.status == "error" || o.status == "error" {
                    "error"
                } else if b.failed() || o.failed() {
                    "timeout"
                } else if b.value.unwrap() > o.value.unwrap() + GAP_TOLERANCE {
                    "violation"
                } else {
                    "ok"
                };
                let difference_pct = match (status, b.value, o.value) {
                    ("ok" | "violation", Some(f), Some(fo)) => Some(if f > 0.0 {
                        100.0 * (fo - f) / f
                    } else if fo > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }),
                    _ => None,
                };
                ModelComparison {
                    instance: name.clone(),
                    batch: b.value.filter(|_| !b.failed()),
                    online: o.value.filter(|_| !o.failed()),
                    difference_pct,
                    status: status.into(),
                }
            })
            .collect()
    })
}

pub fn write_comparisons<W: Write>(out: W, rows: &[ModelComparison]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["instance", "batch", "online", "difference_pct", "status"])
        .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.instance.clone(),
            r.batch.map(format_value).unwrap_or_default(),
            r.online.map(format_value).unwrap_or_default(),
            r.difference_pct.map(format_value).unwrap_or_default(),
            r.status.clone(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Counts of model differences in bins of `width` percent, starting at 0.
pub fn difference_histogram(rows: &[ModelComparison], width: f64) -> Vec<(f64, usize)> {
    let diffs: Vec<f64> = rows.iter().filter_map(|r| r.difference_pct).filter(|d| d.is_finite()).collect();
    let Some(max) = diffs.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let bins = ((max.max(0.0) / width).floor() as usize) + 1;
    let mut counts = vec![0; bins];
    for d in diffs {
        counts[((d.max(0.0) / width).floor() as usize).min(bins - 1)] += 1;
    }
    counts.into_iter().enumerate().map(|(i, c)| (i as f64 * width, c)).collect()
}

/// Optimal online value against the leveling policy's exact online value.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjectureRow {
    pub instance: String,
    pub optimal: Option<f64>,
    pub leveling: Option<f64>,
    pub gap: Option<f64>,
    /// `ok`, `counterexample`, `timeout` or `error`.
    pub status: String,
}

/// Compares leveling with the online optimum on single-batch instances.
pub fn conjecture(instances: &[(String, Instance)], cfg: &RunConfig) -> Result<Vec<ConjectureRow>> {
    if let Some((name, _)) = instances.iter().find(|(_, i)| i.batch_count() > 1) {
        return Err(Error::Unsupported(format!("instance `{name}` has more than one batch")));
    }
    Ok(with_jobs(cfg.jobs, || {
        instances
            .par_iter()
            .map(|(name, inst)| {
                let opt = run_method(name, inst, Method::Pbfs, Model::Online, cfg);
                let lev = exact_policy_value(inst, Policy::Leveling, Model::Online);
                let (optimal, leveling, gap, status) = match (&opt, lev) {
                    (o, _) if o.status == "error" => (None, None, None, "error"),
                    (o, _) if o.failed() => (None, None, None, "timeout"),
                    (_, Err(_)) => (opt.value, None, None, "error"),
                    (o, Ok(l)) => {
                        let f = o.value.unwrap();
                        let g = (l.expected_relocations - f).abs();
                        let status = if g > GAP_TOLERANCE { "counterexample" } else { "ok" };
                        (Some(f), Some(l.expected_relocations), Some(g), status)
                    }
                };
                ConjectureRow {
                    instance: name.clone(),
                    optimal,
                    leveling,
                    gap,
                    status: status.into(),
                }
            })
            .collect()
    }))
}

pub fn write_conjecture<W: Write>(out: W, rows: &[ConjectureRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["instance", "online_optimal", "leveling", "gap", "status"])
        .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.instance.clone(),
            r.optimal.map(format_value).unwrap_or_default(),
            r.leveling.map(format_value).unwrap_or_default(),
            r.gap.map(|g| format!("{g:e}")).unwrap_or_default(),
            r.status.clone(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Every single-batch instance of the bay with 1 to `max_containers` containers,
/// named by its stack heights (`h2-0-1`).
pub fn single_batch_sweep(geometry: Geometry, max_containers: usize) -> Vec<(String, Instance)> {
    let s = geometry.stacks();
    let t = geometry.tiers();
    let mut out = Vec::new();
    let mut heights = vec![0usize; s];
    loop {
        let c: usize = heights.iter().sum();
        if c >= 1 && c <= max_containers && c <= geometry.capacity() {
            let columns: Vec<Vec<usize>> = heights.iter().map(|&h| vec![1; h]).collect();
            let name = format!("h{}", heights.iter().map(|h| h.to_string()).collect::<Vec<_>>().join("-"));
            let inst = Instance::uniform(geometry, vec![c], &columns).expect("single-batch instance");
            out.push((name, inst));
        }
        // odometer over heights in 0..=t
        let mut i = 0;
        while i < s && heights[i] == t {
            heights[i] = 0;
            i += 1;
        }
        if i == s {
            break;
        }
        heights[i] += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walkthrough() -> (String, Instance) {
        (
            "walkthrough".into(),
            Instance::from_labels(Geometry::new(3, 3).unwrap(), &[vec![1], vec![5, 5], vec![1, 4, 1]]).unwrap(),
        )
    }

    #[test]
    fn pbfs_row() {
        let (n, i) = walkthrough();
        let r = run_method(&n, &i, Method::Pbfs, Model::Batch, &RunConfig::default());
        assert_eq!(r.record(false)[4], "2.1666666667");
        assert_eq!(r.status, "optimal");
        assert_eq!(r.record(false)[10], "");
    }

    #[test]
    fn csv_is_reproducible() {
        let inst = vec![walkthrough()];
        let cfg = RunConfig {
            samples: 100,
            jobs: 2,
            ..RunConfig::default()
        };
        let render = || {
            let mut buf = Vec::new();
            write_rows(&mut buf, &run_all(&inst, &Method::bench_set(), &cfg), false).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let a = render();
        assert_eq!(a, render());
        assert_eq!(a.lines().count(), 1 + Method::bench_set().len());
        assert!(a.starts_with("instance,model,method,bound,value,status,nodes,pruned,cache_hits,samples,seconds,seed\n"));
    }

    #[test]
    fn walkthrough_models_agree() {
        let rows = compare_models(&[walkthrough()], &RunConfig::default());
        assert_eq!(rows[0].status, "ok");
        assert!(rows[0].difference_pct.unwrap().abs() < 1e-9);
    }

    #[test]
    fn sweep_covers_all_height_vectors() {
        let g = Geometry::new(3, 3).unwrap();
        let all = single_batch_sweep(g, 6);
        // height vectors in {0..3}^3 with 1 <= sum <= 6
        let expected = (0..64)
            .map(|x| (x % 4) + (x / 4 % 4) + (x / 16))
            .filter(|&c| (1..=6).contains(&c))
            .count();
        assert_eq!(all.len(), expected);
    }

    #[test]
    fn conjecture_rejects_multi_batch() {
        assert!(conjecture(&[walkthrough()], &RunConfig::default()).is_err());
    }

    #[test]
    fn histogram_bins() {
        let mk = |d: f64| ModelComparison {
            instance: String::new(),
            batch: None,
            online: None,
            difference_pct: Some(d),
            status: "ok".into(),
        };
        let h = difference_histogram(&[mk(0.0), mk(0.4), mk(1.2)], 0.5);
        assert_eq!(h, vec![(0.0, 2), (0.5, 0), (1.0, 1)]);
    }
}
