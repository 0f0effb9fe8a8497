//! Seeded experiment grids over `(mode, k, b)` and their result files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{check_fraction, AttackConfig, AttackMode, SelectionRule};
use crate::data::{load_dataset, DatasetSpec};
use crate::error::{Error, Result};
use crate::model::{LabeledDataset, ModelParams, SgdConfig};
use crate::sim::{cyclic_label_map, make_target_params, run_training, RunResult, ThreatModel};

pub const SWEEP_HEADER: [&str; 8] = [
    "mode",
    "k",
    "b",
    "global_budget",
    "mean_acc",
    "std",
    "target_distance",
    "n_seeds",
];

pub const RUN_HEADER: [&str; 6] = [
    "epoch",
    "test_accuracy",
    "train_loss",
    "flips_used",
    "attack_objective",
    "target_distance",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub dataset: DatasetSpec,
    pub k_values: Vec<f64>,
    pub b_values: Vec<f64>,
    pub modes: Vec<AttackMode>,
    pub seeds: Vec<u64>,
    pub sgd: SgdConfig,
    pub selection_rule: SelectionRule,
    pub avg_window: usize,
    pub std_window: usize,
    /// Keep one attacker subset for the whole run instead of redrawing it
    /// every epoch.
    pub fixed_attacker_subset: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            k_values: vec![0.5],
            b_values: vec![0.5],
            modes: vec![AttackMode::Untargeted],
            seeds: (0..6).collect(),
            sgd: SgdConfig::default(),
            selection_rule: SelectionRule::Benefit,
            avg_window: 20,
            std_window: 10,
            fixed_attacker_subset: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.b_values.is_empty() || self.modes.is_empty() {
            return Err(Error::InvalidConfig(
                "k_values, b_values and modes must be non-empty".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        for &k in &self.k_values {
            check_fraction("k", k)?;
        }
        for &b in &self.b_values {
            check_fraction("b", b)?;
        }
        self.sgd.validate()?;
        for (name, w) in [
            ("avg_window", self.avg_window),
            ("std_window", self.std_window),
        ] {
            if w == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
            if w > self.sgd.epochs {
                return Err(Error::WindowTooLarge {
                    window: w,
                    epochs: self.sgd.epochs,
                });
            }
        }
        self.dataset.validate()
    }

    /// Reads a config file, or the `config` object of a `manifest.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let json_err = |source| Error::Json {
            context: path.display().to_string(),
            source,
        };
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(json_err)?;
        if value.get("manifest_version").is_some() {
            let inner = value["config"].take();
            value = inner;
        }
        serde_json::from_value(value).map_err(json_err)
    }
}

/// One aggregated grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: AttackMode,
    pub k: f64,
    pub b: f64,
    pub global_budget: f64,
    /// Mean over seeds of each run's accuracy averaged over the last
    /// `avg_window` epochs.
    pub mean_acc: f64,
    /// Population std over seeds of the last-`std_window` accuracy means.
    pub std: f64,
    /// Mean final distance to the target model (targeted rows only).
    pub target_distance: Option<f64>,
    pub n_seeds: usize,
}

/// All runs of one grid cell, in seed order.
#[derive(Clone, Debug)]
pub struct CellRuns {
    pub mode: AttackMode,
    pub k: f64,
    pub b: f64,
    pub runs: Vec<RunResult>,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellRuns>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` or 0 uses the rayon default.
    pub jobs: Option<usize>,
    /// Where trained target models are cached between invocations.
    pub target_cache: Option<PathBuf>,
}

/// Mean test accuracy over the final `n` epochs.
pub fn metric_avg_last_n(run: &RunResult, n: usize) -> Result<f64> {
    let epochs = run.records.len();
    if n == 0 {
        return Err(Error::InvalidConfig("window must be at least 1".into()));
    }
    if n > epochs {
        return Err(Error::WindowTooLarge { window: n, epochs });
    }
    Ok(run.records[epochs - n..]
        .iter()
        .map(|r| r.test_accuracy)
        .sum::<f64>()
        / n as f64)
}

/// Population standard deviation, across runs, of [`metric_avg_last_n`].
pub fn metric_std_across_seeds(runs: &[RunResult], n: usize) -> Result<f64> {
    if runs.len() < 2 {
        return Err(Error::TooFewRuns(runs.len()));
    }
    let values = runs
        .iter()
        .map(|r| metric_avg_last_n(r, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(population_std(&values))
}

pub(crate) fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Label map used to build the target model: a swap for binary tasks and
/// `y ↦ (y + 1) mod C` otherwise.
pub fn default_target_map(num_classes: usize) -> Vec<usize> {
    cyclic_label_map(num_classes, 1)
}

#[derive(Serialize)]
struct TargetKey<'a> {
    dataset: &'a DatasetSpec,
    sgd: &'a SgdConfig,
    seed: u64,
    remap: &'a [usize],
}

/// Hex digest identifying a target model's training inputs.
pub fn target_cache_key(
    dataset: &DatasetSpec,
    sgd: &SgdConfig,
    seed: u64,
    remap: &[usize],
) -> String {
    let key = TargetKey {
        dataset,
        sgd,
        seed,
        remap,
    };
    let bytes = serde_json::to_vec(&key).expect("target key is always serialisable");
    hex::encode(Sha256::digest(&bytes))
}

/// Trains the target model, or reads it back from `cache_dir`.
pub fn cached_target(
    train: &LabeledDataset,
    dataset: &DatasetSpec,
    sgd: &SgdConfig,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<ModelParams> {
    let remap = default_target_map(train.num_classes());
    let path = cache_dir.map(|d| {
        d.join(format!(
            "target-{}.json",
            &target_cache_key(dataset, sgd, seed, &remap)[..16]
        ))
    });
    if let Some(p) = path.as_ref().filter(|p| p.exists()) {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let params: ModelParams = serde_json::from_str(&text).map_err(|source| Error::Json {
            context: p.display().to_string(),
            source,
        })?;
        if params.same_shape(&ModelParams::zeros_for(train)) {
            log::info!("loaded cached target model from {}", p.display());
            return Ok(params);
        }
        log::warn!(
            "ignoring cached target {} with the wrong shape",
            p.display()
        );
    }
    let params = make_target_params(train, &remap, sgd, seed)?;
    if let Some(p) = path {
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string(&params).expect("params serialise");
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(params)
}

/// Loads the dataset named by `cfg` and runs the sweep on it.
pub fn run_sweep(cfg: &SweepConfig, opts: &SweepOptions) -> Result<SweepOutput> {
    cfg.validate()?;
    let (train, test) = load_dataset(&cfg.dataset)?;
    run_sweep_on(cfg, &train, &test, opts)
}

/// Runs every `(mode, k, b, seed)` combination and aggregates per cell.
/// Output is independent of `opts.jobs`.
pub fn run_sweep_on(
    cfg: &SweepConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    opts: &SweepOptions,
) -> Result<SweepOutput> {
    cfg.validate()?;
    let mut modes = cfg.modes.clone();
    modes.sort();
    modes.dedup();

    let target = if modes.contains(&AttackMode::Targeted) {
        Some(cached_target(
            train,
            &cfg.dataset,
            &cfg.sgd,
            cfg.seeds[0],
            opts.target_cache.as_deref(),
        )?)
    } else {
        None
    };

    let mut grid = Vec::new();
    for &mode in &modes {
        let mut ks = cfg.k_values.clone();
        let mut bs = cfg.b_values.clone();
        ks.sort_by(f64::total_cmp);
        bs.sort_by(f64::total_cmp);
        for &k in &ks {
            for &b in &bs {
                grid.push((mode, k, b));
            }
        }
    }
    let tasks: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|cell| cfg.seeds.iter().map(move |&s| (cell, s)))
        .collect();

    let run_one = |&(cell, seed): &(usize, u64)| -> Result<RunResult> {
        let (mode, k, b) = grid[cell];
        let mut attack = match mode {
            AttackMode::Untargeted => AttackConfig::untargeted(b),
            AttackMode::Targeted => {
                AttackConfig::targeted(target.clone().expect("target built for targeted mode"), b)
            }
        };
        attack.selection_rule = cfg.selection_rule;
        let threat = ThreatModel {
            write_access: k,
            attack,
            fixed_attacker_subset: cfg.fixed_attacker_subset,
        };
        let run = run_training(train, test, &threat, &cfg.sgd, seed).map_err(|e| Error::Run {
            context: format!("mode={} k={k} b={b} seed={seed}", mode.as_str()),
            source: Box::new(e),
        })?;
        if let Some(last) = run.records.last() {
            log::info!(
                "mode={} k={k} b={b} seed={seed}: final accuracy {:.4}",
                mode.as_str(),
                last.test_accuracy
            );
        }
        Ok(run)
    };

    let results: Vec<Result<RunResult>> = match opts.jobs.filter(|&j| j > 0) {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build thread pool: {e}")))?
            .install(|| tasks.par_iter().map(run_one).collect()),
        None => tasks.par_iter().map(run_one).collect(),
    };
    let mut results = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter();

    let mut rows = Vec::with_capacity(grid.len());
    let mut cells = Vec::with_capacity(grid.len());
    for &(mode, k, b) in &grid {
        let runs: Vec<RunResult> = results.by_ref().take(cfg.seeds.len()).collect();
        rows.push(summarize(
            mode,
            k,
            b,
            &runs,
            cfg.avg_window,
            cfg.std_window,
        )?);
        cells.push(CellRuns { mode, k, b, runs });
    }
    Ok(SweepOutput { rows, cells })
}

/// Aggregates the seeds of one cell.
pub fn summarize(
    mode: AttackMode,
    k: f64,
    b: f64,
    runs: &[RunResult],
    avg_window: usize,
    std_window: usize,
) -> Result<SweepRow> {
    let means = runs
        .iter()
        .map(|r| metric_avg_last_n(r, avg_window))
        .collect::<Result<Vec<_>>>()?;
    let mean_acc = means.iter().sum::<f64>() / means.len() as f64;
    let std = if runs.len() >= 2 {
        metric_std_across_seeds(runs, std_window)?
    } else {
        0.0
    };
    let distances: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.records.last().and_then(|rec| rec.target_distance))
        .collect();
    let target_distance =
        (!distances.is_empty()).then(|| distances.iter().sum::<f64>() / distances.len() as f64);
    Ok(SweepRow {
        mode,
        k,
        b,
        global_budget: k * b,
        mean_acc,
        std,
        target_distance,
        n_seeds: runs.len(),
    })
}

/// Decimal text rounded to 9 significant digits, trailing zeros dropped.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 {
            "0".to_string()
        } else {
            x.to_string()
        };
    }
    let decimals = |v: f64| (8 - v.abs().log10().floor() as i32).max(0) as usize;
    let mut places = decimals(x);
    let mut text = format!("{x:.places$}");
    // Rounding up to the next power of ten (9.9999999996 → 10.00000000)
    // adds a digit; drop one decimal in that case.
    let rounded: f64 = text.parse().unwrap_or(x);
    if rounded != 0.0 && decimals(rounded) < places {
        places -= 1;
        text = format!("{x:.places$}");
    }
    if text.contains('.') {
        text.truncate(text.trim_end_matches('0').trim_end_matches('.').len());
    }
    text
}

fn opt_sig9(x: Option<f64>) -> String {
    x.map(format_sig9).unwrap_or_default()
}

/// File name of one run's per-epoch table.
pub fn run_file_name(mode: AttackMode, k: f64, b: f64, seed: u64) -> String {
    format!("run_{}_{k}_{b}_{seed}.csv", mode.as_str())
}

#[derive(Serialize)]
struct Manifest<'a> {
    manifest_version: u32,
    tool: &'static str,
    tool_version: &'static str,
    config: &'a SweepConfig,
    seeds: &'a [u64],
    rows: usize,
    sweep_file: &'static str,
    run_files: Vec<String>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `sweep.csv`, one `run_*.csv` per run and `manifest.json` into
/// `out_dir`. Returns the paths written.
pub fn emit_results(
    rows: &[SweepRow],
    cells: &[CellRuns],
    cfg: &SweepConfig,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let sweep_path = out_dir.join("sweep.csv");
    write_rows(
        &sweep_path,
        &SWEEP_HEADER,
        rows.iter().map(|r| {
            vec![
                r.mode.as_str().to_string(),
                format_sig9(r.k),
                format_sig9(r.b),
                format_sig9(r.global_budget),
                format_sig9(r.mean_acc),
                format_sig9(r.std),
                opt_sig9(r.target_distance),
                r.n_seeds.to_string(),
            ]
        }),
    )?;
    written.push(sweep_path);

    let mut run_files = Vec::new();
    for cell in cells {
        for run in &cell.runs {
            let name = run_file_name(cell.mode, cell.k, cell.b, run.seed);
            let path = out_dir.join(&name);
            write_rows(
                &path,
                &RUN_HEADER,
                run.records.iter().map(|rec| {
                    vec![
                        rec.epoch.to_string(),
                        format_sig9(rec.test_accuracy),
                        format_sig9(rec.train_loss),
                        rec.flips_used.to_string(),
                        format_sig9(rec.attack_objective),
                        opt_sig9(rec.target_distance),
                    ]
                }),
            )?;
            run_files.push(name);
            written.push(path);
        }
    }

    let manifest = Manifest {
        manifest_version: 1,
        tool: "flipsim",
        tool_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        seeds: &cfg.seeds,
        rows: rows.len(),
        sweep_file: "sweep.csv",
        run_files,
    };
    let manifest_path = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    written.push(manifest_path);
    Ok(written)
}

/// Settings for [`oracle_check`].
#[derive(Clone, Debug)]
pub struct OracleCheckConfig {
    pub instances: usize,
    pub seed: u64,
    /// Largest controlled-set size drawn.
    pub max_controlled: usize,
    /// Largest raw feature dimension drawn.
    pub max_dim: usize,
    /// Class counts to draw from; 2 uses the sigmoid model.
    pub classes: Vec<usize>,
    pub budgets: Vec<f64>,
    pub tolerance: f64,
}

impl Default for OracleCheckConfig {
    fn default() -> Self {
        Self {
            instances: 200,
            seed: 0,
            max_controlled: 12,
            max_dim: 6,
            classes: vec![2],
            budgets: vec![0.0, 0.25, 0.5, 1.0],
            tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct OracleReport {
    /// (instance, budget) pairs checked.
    pub checks: usize,
    pub mismatches: usize,
    pub max_gap: f64,
}

/// Compares greedy selection (benefit rule) with exhaustive search on
/// random instances. Δ is the untargeted direction of a random honest set.
pub fn oracle_check(cfg: &OracleCheckConfig) -> Result<OracleReport> {
    use crate::attack::{compute_direction, oracle_best_flips, plan_flips, poisoned_objective};
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    if cfg.classes.is_empty()
        || cfg.budgets.is_empty()
        || cfg.max_controlled == 0
        || cfg.max_dim == 0
    {
        return Err(Error::InvalidConfig(
            "oracle check needs classes, budgets and sizes".into(),
        ));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = OracleReport::default();
    for _ in 0..cfg.instances {
        let c = cfg.classes[rng.random_range(0..cfg.classes.len())];
        let dim = rng.random_range(1..=cfg.max_dim);
        let k = rng.random_range(1..=cfg.max_controlled);
        let n = k + rng.random_range(0..=k);
        let scale = rng.random_range(0.5..3.0);
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row: Vec<f64> = (0..dim)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            row.push(1.0);
            rows.push(row);
        }
        let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
        let data = LabeledDataset::new(rows, labels, c)?;
        let mut params = ModelParams::zeros_for(&data);
        if let ModelParams::Binary(p) = &mut params {
            p.alpha
                .iter_mut()
                .for_each(|v| *v = rng.sample(StandardNormal));
        } else if let ModelParams::Multiclass(p) = &mut params {
            p.weights
                .iter_mut()
                .flatten()
                .for_each(|v| *v = rng.sample(StandardNormal));
        }
        let delta = compute_direction(&AttackConfig::untargeted(1.0), &data, &params)?;
        let mut controlled: Vec<usize> = rand::seq::index::sample(&mut rng, n, k).into_vec();
        controlled.sort_unstable();
        let clean = data.subset(&controlled)?;

        for &b in &cfg.budgets {
            let greedy = plan_flips(
                &params,
                &delta,
                &data,
                &controlled,
                b,
                SelectionRule::Benefit,
            )?;
            let exact = oracle_best_flips(&params, &delta, &data, &controlled, b)?;
            let value = |plan: &crate::attack::FlipPlan| -> Result<f64> {
                let mut d = clean.clone();
                let local: Vec<(usize, usize)> = plan
                    .assignments
                    .iter()
                    .map(|&(i, y)| (controlled.binary_search(&i).expect("plan inside K"), y))
                    .collect();
                crate::attack::FlipPlan {
                    flips_used: local.len(),
                    assignments: local,
                }
                .apply(&mut d)?;
                poisoned_objective(&params, &delta, &d)
            };
            let gap = value(&greedy)? - value(&exact)?;
            report.checks += 1;
            report.max_gap = report.max_gap.max(gap.abs());
            if gap.abs() > cfg.tolerance {
                report.mismatches += 1;
            }
        }
    }
    Ok(report)
}
