use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    gen_synthetic, kfold_split, load_csv, normalize_zscore, Dataset, FoldPlan, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::fcm::FcmConfig;
use crate::pipeline::{
    baseline_fit, baseline_score, evaluate_refined, train_refined, RefinedModel,
};
use crate::pso::PsoConfig;
use crate::reconstruction::{powered_memberships, reconstruction_weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Proposed,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Baseline => write!(f, "baseline"),
            Method::Proposed => write!(f, "proposed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetRef {
    Csv {
        path: String,
        #[serde(default)]
        has_header: bool,
        #[serde(default)]
        drop_last_column: bool,
    },
    Synthetic {
        spec: SyntheticSpec,
    },
}

/// Swarm settings as scalars; bounds are expanded to the cluster count of
/// each sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoSettings {
    pub particles: usize,
    pub max_iter: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub stall_window: usize,
    pub stall_eps: f64,
    pub bound_low: f64,
    pub bound_high: f64,
}

impl Default for PsoSettings {
    fn default() -> Self {
        PsoSettings {
            particles: 75,
            max_iter: 500,
            inertia: 0.8,
            cognitive: 1.49445,
            social: 1.49445,
            stall_window: 75,
            stall_eps: 1e-12,
            bound_low: 1.05,
            bound_high: 10.0,
        }
    }
}

impl PsoSettings {
    pub fn to_config(&self, dim: usize, seed: u64) -> PsoConfig {
        PsoConfig {
            particles: self.particles,
            max_iter: self.max_iter,
            inertia: self.inertia,
            cognitive: self.cognitive,
            social: self.social,
            stall_window: self.stall_window,
            stall_eps: self.stall_eps,
            bounds_low: vec![self.bound_low; dim],
            bounds_high: vec![self.bound_high; dim],
            seed,
        }
    }
}

fn default_c_values() -> Vec<usize> {
    vec![2, 3, 4, 5, 6]
}

pub fn default_m_values() -> Vec<f64> {
    vec![1.1, 1.6, 2.1, 2.6, 3.1, 3.6, 4.1, 4.6, 5.1]
}

fn default_folds() -> usize {
    5
}

fn default_repeats() -> usize {
    10
}

fn default_true() -> bool {
    true
}

fn default_fcm_tol() -> f64 {
    1e-5
}

fn default_fcm_max_iter() -> usize {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetRef,
    #[serde(default = "default_c_values")]
    pub c_values: Vec<usize>,
    #[serde(default = "default_m_values")]
    pub m_values: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_true")]
    pub normalize: bool,
    #[serde(default = "default_fcm_tol")]
    pub fcm_tol: f64,
    #[serde(default = "default_fcm_max_iter")]
    pub fcm_max_iter: usize,
    #[serde(default)]
    pub pso: PsoSettings,
    #[serde(default)]
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetRef) -> Self {
        ExperimentConfig {
            dataset,
            c_values: default_c_values(),
            m_values: default_m_values(),
            folds: default_folds(),
            repeats: default_repeats(),
            normalize: true,
            fcm_tol: default_fcm_tol(),
            fcm_max_iter: default_fcm_max_iter(),
            pso: PsoSettings::default(),
            master_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() {
            return Err(Error::InvalidParam("no cluster counts to sweep".into()));
        }
        if self.c_values.iter().any(|&c| c < 2) {
            return Err(Error::InvalidParam("cluster counts must be at least 2".into()));
        }
        if self.m_values.is_empty() {
            return Err(Error::InvalidParam("no fuzzifier values to sweep".into()));
        }
        if self.m_values.iter().any(|&m| !m.is_finite() || m <= 1.0) {
            return Err(Error::InvalidParam(
                "fuzzifier grid values must be finite and > 1".into(),
            ));
        }
        if self.folds < 2 {
            return Err(Error::InvalidParam("folds must be at least 2".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidParam("repeats must be at least 1".into()));
        }
        if !(self.fcm_tol > 0.0) {
            return Err(Error::InvalidParam(format!("fcm_tol {}", self.fcm_tol)));
        }
        if self.fcm_max_iter == 0 {
            return Err(Error::InvalidParam("fcm_max_iter must be at least 1".into()));
        }
        if !(self.pso.bound_low > 1.0) {
            return Err(Error::InvalidParam(
                "pso bound_low must exceed 1 (fuzzifiers are > 1)".into(),
            ));
        }
        if !(self.pso.bound_high > self.pso.bound_low) {
            return Err(Error::InvalidParam("pso bounds are inverted".into()));
        }
        Ok(())
    }
}

/// One (method, C, m0, fold, repeat) evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub dataset_id: String,
    pub method: Method,
    pub c: usize,
    pub m0: f64,
    pub fold: usize,
    pub repeat: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train_error: Option<f64>,
    pub test_error: Option<f64>,
    pub m_star: Option<Vec<f64>>,
    pub elapsed_ms: u64,
    pub error: Option<String>,
}

/// Wall-clock time is incidental; two runs of the same cell are the same
/// result even when their timings differ.
impl PartialEq for CellResult {
    fn eq(&self, other: &Self) -> bool {
        self.dataset_id == other.dataset_id
            && self.method == other.method
            && self.c == other.c
            && self.m0 == other.m0
            && self.fold == other.fold
            && self.repeat == other.repeat
            && self.n_train == other.n_train
            && self.n_test == other.n_test
            && self.train_error == other.train_error
            && self.test_error == other.test_error
            && self.m_star == other.m_star
            && self.error == other.error
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellKey {
    pub dataset_id: String,
    pub method: Method,
    pub c: usize,
    pub m0_bits: u64,
    pub fold: usize,
    pub repeat: usize,
}

impl CellResult {
    pub fn key(&self) -> CellKey {
        CellKey {
            dataset_id: self.dataset_id.clone(),
            method: self.method,
            c: self.c,
            m0_bits: self.m0.to_bits(),
            fold: self.fold,
            repeat: self.repeat,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

const TAG_FOLDS: u64 = 0x0f01d5;
const TAG_FCM: u64 = 0xfc3a17;
const TAG_PSO: u64 = 0x9507a3;

/// Stable seed derivation: the master seed, the dataset identity, and the
/// cell coordinates are mixed through splitmix64. The FCM seed deliberately
/// omits the method, so baseline and proposed cells share the same base fit.
fn derive_seed(master: u64, dataset_id: &str, parts: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ fnv1a(dataset_id));
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

pub fn fold_seed(master: u64, dataset_id: &str, repeat: usize) -> u64 {
    derive_seed(master, dataset_id, &[TAG_FOLDS, repeat as u64])
}

pub fn fcm_seed(master: u64, dataset_id: &str, c: usize, m_index: usize, fold: usize, repeat: usize) -> u64 {
    derive_seed(
        master,
        dataset_id,
        &[TAG_FCM, c as u64, m_index as u64, fold as u64, repeat as u64],
    )
}

pub fn pso_seed(master: u64, dataset_id: &str, c: usize, m_index: usize, fold: usize, repeat: usize) -> u64 {
    derive_seed(
        master,
        dataset_id,
        &[TAG_PSO, c as u64, m_index as u64, fold as u64, repeat as u64],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellTask {
    pub method: Method,
    pub c: usize,
    pub m_index: usize,
    pub fold: usize,
    pub repeat: usize,
}

/// Loaded (and normalized) data plus fold plans and the canonical task list.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub dataset: Dataset,
    pub dataset_id: String,
    pub fold_plans: Vec<FoldPlan>,
    pub tasks: Vec<CellTask>,
}

impl ExperimentPlan {
    pub fn key_for(&self, cfg: &ExperimentConfig, task: &CellTask) -> CellKey {
        CellKey {
            dataset_id: self.dataset_id.clone(),
            method: task.method,
            c: task.c,
            m0_bits: cfg.m_values[task.m_index].to_bits(),
            fold: task.fold,
            repeat: task.repeat,
        }
    }
}

pub fn load_dataset(dataset: &DatasetRef) -> Result<Dataset> {
    match dataset {
        DatasetRef::Csv {
            path,
            has_header,
            drop_last_column,
        } => load_csv(Path::new(path), *has_header, *drop_last_column),
        DatasetRef::Synthetic { spec } => gen_synthetic(spec),
    }
}

/// Load the dataset, normalize the whole of it once, precompute one fold
/// plan per repeat, and enumerate every cell in canonical order
/// (repeat, C, m0, fold, then baseline before proposed).
pub fn plan_experiment(cfg: &ExperimentConfig) -> Result<ExperimentPlan> {
    cfg.validate()?;
    let raw = load_dataset(&cfg.dataset)?;
    let dataset = if cfg.normalize {
        normalize_zscore(&raw)?.0
    } else {
        raw
    };
    let dataset_id = dataset.source_id().to_string();

    let mut fold_plans = Vec::with_capacity(cfg.repeats);
    for repeat in 0..cfg.repeats {
        fold_plans.push(kfold_split(
            dataset.n_rows(),
            cfg.folds,
            fold_seed(cfg.master_seed, &dataset_id, repeat),
        )?);
    }

    let mut tasks = Vec::new();
    for repeat in 0..cfg.repeats {
        for &c in &cfg.c_values {
            for m_index in 0..cfg.m_values.len() {
                for fold in 0..cfg.folds {
                    for method in [Method::Baseline, Method::Proposed] {
                        tasks.push(CellTask {
                            method,
                            c,
                            m_index,
                            fold,
                            repeat,
                        });
                    }
                }
            }
        }
    }

    Ok(ExperimentPlan {
        dataset,
        dataset_id,
        fold_plans,
        tasks,
    })
}

/// Run one cell. Failures never propagate; they are recorded on the cell.
pub fn run_cell(cfg: &ExperimentConfig, plan: &ExperimentPlan, task: &CellTask) -> CellResult {
    let m0 = cfg.m_values[task.m_index];
    let fold_plan = &plan.fold_plans[task.repeat];
    let train_idx = fold_plan.train_indices(task.fold);
    let test_idx = fold_plan.test_indices(task.fold);
    let started = Instant::now();

    let outcome = (|| -> Result<(f64, f64, Option<Vec<f64>>)> {
        let train = plan.dataset.subset(&train_idx)?;
        let test = plan.dataset.subset(&test_idx)?;
        let fcm_cfg = FcmConfig {
            c: task.c,
            m: m0,
            tol: cfg.fcm_tol,
            max_iter: cfg.fcm_max_iter,
            seed: fcm_seed(
                cfg.master_seed,
                &plan.dataset_id,
                task.c,
                task.m_index,
                task.fold,
                task.repeat,
            ),
        };
        match task.method {
            Method::Baseline => {
                let model = baseline_fit(&train, &fcm_cfg)?;
                let test_error = baseline_score(&model, &test)?;
                Ok((model.train_error, test_error, None))
            }
            Method::Proposed => {
                let pso_cfg = cfg.pso.to_config(
                    task.c,
                    pso_seed(
                        cfg.master_seed,
                        &plan.dataset_id,
                        task.c,
                        task.m_index,
                        task.fold,
                        task.repeat,
                    ),
                );
                let model = train_refined(&train, &fcm_cfg, &pso_cfg)?;
                let test_error = evaluate_refined(&model, &test)?;
                Ok((
                    model.train_error,
                    test_error,
                    Some(model.fuzzifiers.values().to_vec()),
                ))
            }
        }
    })();

    let elapsed_ms = started.elapsed().as_millis() as u64;
    let (train_error, test_error, m_star, error) = match outcome {
        Ok((tr, te, ms)) => (Some(tr), Some(te), ms, None),
        Err(e) => (None, None, None, Some(e.to_string())),
    };
    CellResult {
        dataset_id: plan.dataset_id.clone(),
        method: task.method,
        c: task.c,
        m0,
        fold: task.fold,
        repeat: task.repeat,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        train_error,
        test_error,
        m_star,
        elapsed_ms,
        error,
    }
}

/// Run the full sweep. `jobs` = 1 runs inline; 0 uses every core. Results
/// come back in canonical task order regardless of parallelism.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<CellResult>> {
    let plan = plan_experiment(cfg)?;
    run_planned(cfg, &plan, &plan.tasks, jobs)
}

/// Run a chosen subset of a plan's tasks (used for resumable sweeps).
pub fn run_planned(
    cfg: &ExperimentConfig,
    plan: &ExperimentPlan,
    tasks: &[CellTask],
    jobs: usize,
) -> Result<Vec<CellResult>> {
    if jobs == 1 {
        return Ok(tasks.iter().map(|t| run_cell(cfg, plan, t)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParam(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(|| tasks.par_iter().map(|t| run_cell(cfg, plan, t)).collect()))
}

/// Append cells to an NDJSON file, one object per line.
pub fn append_cells(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut buf = String::new();
    for cell in cells {
        buf.push_str(&serde_json::to_string(cell).map_err(|e| Error::Format(e.to_string()))?);
        buf.push('\n');
    }
    file.write_all(buf.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Read an NDJSON results file, skipping blank lines.
pub fn read_cells(path: &Path) -> Result<Vec<CellResult>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = std::io::BufReader::new(file);
    let mut cells = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cell: CellResult = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}, line {}: {e}", path.display(), i + 1)))?;
        cells.push(cell);
    }
    Ok(cells)
}

/// Keys already present in a results file (for resume-without-recompute).
pub fn existing_keys(cells: &[CellResult]) -> HashSet<CellKey> {
    cells.iter().map(|c| c.key()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset_id: String,
    pub method: Method,
    pub c: usize,
    /// The grid fuzzifier whose mean training error won for this (method, C).
    pub best_m0: f64,
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
    /// Mean over cells of the fold-size-weighted train/test combination.
    pub total: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrandRow {
    pub dataset_id: String,
    pub method: Method,
    pub train_mean: f64,
    pub test_mean: f64,
    /// Mean over C of the per-C totals.
    pub total_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<AggregateRow>,
    pub grand: Vec<GrandRow>,
    pub failed_cells: usize,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

/// Weighted train/test combination for one cell.
pub fn cell_total(n_train: usize, n_test: usize, train_error: f64, test_error: f64) -> f64 {
    let nt = n_train as f64;
    let ns = n_test as f64;
    (nt * train_error + ns * test_error) / (nt + ns)
}

/// Collapse cells into the per-(dataset, method, C) table: pick the grid m0
/// with the lowest mean training error (ties to the smaller m0), report that
/// m0's statistics, and add per-method grand means over C.
pub fn aggregate(cells: &[CellResult]) -> Result<ReportTable> {
    let failed_cells = cells.iter().filter(|c| c.error.is_some()).count();
    let ok: Vec<&CellResult> = cells.iter().filter(|c| c.error.is_none()).collect();
    if ok.is_empty() {
        return Err(Error::EmptyInput("no successful cells to aggregate".into()));
    }

    let mut group_keys: Vec<(String, Method, usize)> = ok
        .iter()
        .map(|c| (c.dataset_id.clone(), c.method, c.c))
        .collect();
    group_keys.sort_by(|a, b| {
        (a.0.as_str(), method_rank(a.1), a.2).cmp(&(b.0.as_str(), method_rank(b.1), b.2))
    });
    group_keys.dedup();

    let mut rows = Vec::new();
    for (dataset_id, method, c) in group_keys {
        let group: Vec<&&CellResult> = ok
            .iter()
            .filter(|x| x.dataset_id == dataset_id && x.method == method && x.c == c)
            .collect();
        let mut m0s: Vec<f64> = group.iter().map(|x| x.m0).collect();
        m0s.sort_by(f64::total_cmp);
        m0s.dedup();

        let mut best: Option<(f64, f64)> = None;
        for &m0 in &m0s {
            let train: Vec<f64> = group
                .iter()
                .filter(|x| x.m0 == m0)
                .map(|x| x.train_error.expect("filtered successful"))
                .collect();
            let tm = mean(&train);
            // Strict < keeps the smaller m0 on ties (m0s is ascending).
            if best.map_or(true, |(_, cur)| tm < cur) {
                best = Some((m0, tm));
            }
        }
        let (best_m0, _) = best.expect("group is non-empty");

        let chosen: Vec<&&&CellResult> = group.iter().filter(|x| x.m0 == best_m0).collect();
        let train: Vec<f64> = chosen.iter().map(|x| x.train_error.unwrap()).collect();
        let test: Vec<f64> = chosen.iter().map(|x| x.test_error.unwrap()).collect();
        let totals: Vec<f64> = chosen
            .iter()
            .map(|x| cell_total(x.n_train, x.n_test, x.train_error.unwrap(), x.test_error.unwrap()))
            .collect();
        rows.push(AggregateRow {
            dataset_id,
            method,
            c,
            best_m0,
            train_mean: mean(&train),
            train_std: sample_std(&train),
            test_mean: mean(&test),
            test_std: sample_std(&test),
            total: mean(&totals),
            cells: chosen.len(),
        });
    }

    let mut grand_keys: Vec<(String, Method)> = rows
        .iter()
        .map(|r| (r.dataset_id.clone(), r.method))
        .collect();
    grand_keys.dedup();
    let mut grand = Vec::new();
    for (dataset_id, method) in grand_keys {
        let rs: Vec<&AggregateRow> = rows
            .iter()
            .filter(|r| r.dataset_id == dataset_id && r.method == method)
            .collect();
        grand.push(GrandRow {
            dataset_id,
            method,
            train_mean: mean(&rs.iter().map(|r| r.train_mean).collect::<Vec<_>>()),
            test_mean: mean(&rs.iter().map(|r| r.test_mean).collect::<Vec<_>>()),
            total_mean: mean(&rs.iter().map(|r| r.total).collect::<Vec<_>>()),
        });
    }

    Ok(ReportTable {
        rows,
        grand,
        failed_cells,
    })
}

fn method_rank(m: Method) -> u8 {
    match m {
        Method::Baseline => 0,
        Method::Proposed => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::InvalidParam(format!("unknown report format {other:?}"))),
        }
    }
}

/// Render an aggregate table. Output is a pure function of the table.
pub fn emit_report(table: &ReportTable, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(table)
                .map_err(|e| Error::Format(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut out = String::from(
                "dataset,method,scope,best_m0,train_mean,train_std,test_mean,test_std,total,cells\n",
            );
            for r in &table.rows {
                out.push_str(&format!(
                    "{},{},c={},{},{},{},{},{},{},{}\n",
                    r.dataset_id,
                    r.method,
                    r.c,
                    r.best_m0,
                    r.train_mean,
                    r.train_std,
                    r.test_mean,
                    r.test_std,
                    r.total,
                    r.cells
                ));
            }
            for g in &table.grand {
                out.push_str(&format!(
                    "{},{},mean,,{},,{},,{},\n",
                    g.dataset_id, g.method, g.train_mean, g.test_mean, g.total_mean
                ));
            }
            Ok(out)
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            let mut datasets: Vec<&str> =
                table.rows.iter().map(|r| r.dataset_id.as_str()).collect();
            datasets.dedup();
            for ds in datasets {
                out.push_str(&format!("## {ds}\n\n"));
                out.push_str(
                    "| C | method | m0 | train | test | total |\n|---|---|---|---|---|---|\n",
                );
                for r in table.rows.iter().filter(|r| r.dataset_id == ds) {
                    out.push_str(&format!(
                        "| {} | {} | {:.2} | {:.4} +- {:.4} | {:.4} +- {:.4} | {:.4} |\n",
                        r.c, r.method, r.best_m0, r.train_mean, r.train_std, r.test_mean,
                        r.test_std, r.total
                    ));
                }
                for g in table.grand.iter().filter(|g| g.dataset_id == ds) {
                    out.push_str(&format!(
                        "| mean | {} | | {:.4} | {:.4} | {:.4} |\n",
                        g.method, g.train_mean, g.test_mean, g.total_mean
                    ));
                }
                out.push('\n');
            }
            if table.failed_cells > 0 {
                out.push_str(&format!("{} cells failed and were excluded.\n", table.failed_cells));
            }
            Ok(out)
        }
    }
}

/// TSV of the swarm's best objective value per iteration.
pub fn plot_pso_history(model: &RefinedModel) -> String {
    let mut out = String::from("iteration\tbest_value\n");
    for (i, v) in model.pso.history.iter().enumerate() {
        out.push_str(&format!("{i}\t{v}\n"));
    }
    out
}

/// TSV of the best-so-far fuzzifier vector per iteration.
pub fn plot_fuzzifier_trace(model: &RefinedModel) -> String {
    let c = model.fuzzifiers.len();
    let mut out = String::from("iteration");
    for j in 1..=c {
        out.push_str(&format!("\tm_{j}"));
    }
    out.push('\n');
    for (i, pos) in model.pso.position_history.iter().enumerate() {
        out.push_str(&format!("{i}"));
        for v in pos {
            out.push_str(&format!("\t{v}"));
        }
        out.push('\n');
    }
    out
}

/// TSV of normalized reconstruction weights on a regular grid spanning the
/// data's bounding box (with a 10% margin). Two-feature data only.
pub fn plot_membership_grid(
    model: &RefinedModel,
    data: &Dataset,
    resolution: usize,
) -> Result<String> {
    if data.n_features() != 2 || model.prototypes.n_features() != 2 {
        return Err(Error::DimMismatch(
            "membership grid plots need exactly 2 features".into(),
        ));
    }
    if resolution < 2 {
        return Err(Error::InvalidParam("grid resolution must be at least 2".into()));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for row in data.rows().rows() {
        for d in 0..2 {
            lo[d] = lo[d].min(row[d]);
            hi[d] = hi[d].max(row[d]);
        }
    }
    for d in 0..2 {
        let margin = 0.1 * (hi[d] - lo[d]).max(f64::MIN_POSITIVE);
        lo[d] -= margin;
        hi[d] += margin;
    }

    let c = model.prototypes.c();
    let mut out = String::from("x\ty");
    for j in 1..=c {
        out.push_str(&format!("\tw_{j}"));
    }
    out.push('\n');
    let step = |d: usize, i: usize| lo[d] + (hi[d] - lo[d]) * i as f64 / (resolution - 1) as f64;
    for yi in 0..resolution {
        for xi in 0..resolution {
            let point = ndarray::arr2(&[[step(0, xi), step(1, yi)]]);
            let upow = powered_memberships(&point, &model.prototypes, &model.fuzzifiers)?;
            let w = reconstruction_weights(&upow)?;
            out.push_str(&format!("{}\t{}", point[(0, 0)], point[(0, 1)]));
            for j in 0..c {
                out.push_str(&format!("\t{}", w[(j, 0)]));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// TSV of per-(method, C) means and stds from an aggregate table.
pub fn plot_error_bars(table: &ReportTable) -> String {
    let mut out = String::from("dataset\tmethod\tc\ttrain_mean\ttrain_std\ttest_mean\ttest_std\n");
    for r in &table.rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.dataset_id, r.method, r.c, r.train_mean, r.train_std, r.test_mean, r.test_std
        ));
    }
    out
}
