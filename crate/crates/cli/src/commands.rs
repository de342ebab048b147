use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rlscale::allocate::{self, AllocationSolution, ComputeModel, FrontierLaws, FrontierPoint};
use rlscale::bootstrap::{self, BootstrapBatchResult, BootstrapConfig};
use rlscale::fitkit::FitOptions;
use rlscale::ingest::{self, ManifestDoc, TaskMeta};
use rlscale::preprocess::{self, EfficiencyPoint};
use rlscale::scaling_laws::{self, BatchRuleFit, BatchRuleReport, DataFit, DataFitOutcome, SensitivityRow};
use rlscale::synth::{self, SynthSpec};
use serde::{Deserialize, Serialize};

use crate::io::{csv_bytes, write_doc, write_json, write_output, CliError, CliResult, Document, Inputs};
use crate::{Format, PipelineConfig};

pub const RUNS_FILE: &str = "runs.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const EFFICIENCY_FILE: &str = "efficiency.csv";
pub const BOOTSTRAP_FILE: &str = "bootstrap.json";
pub const BATCH_FIT_FILE: &str = "batch_fit.json";
pub const DATA_FIT_FILE: &str = "data_fit.json";
pub const ALLOCATION_FILE: &str = "allocation.json";
pub const FRONTIER_FILE: &str = "frontier.csv";
pub const FRONTIER_LAWS_FILE: &str = "frontier_laws.json";
pub const SENSITIVITY_FILE: &str = "sensitivity.csv";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const CONTOUR_FILE: &str = "contour.csv";

pub const FRONTIER_HEADER: [&str; 6] = ["threshold", "budget", "sigma_star", "n_star", "data", "compute"];
pub const CONTOUR_HEADER: [&str; 3] = ["d_target", "sigma", "n"];
const SENSITIVITY_HEADER: [&str; 4] = ["task", "label", "ratio", "groups"];

/// Writes a table as CSV, or as JSON under the same stem with `--format structured`.
fn write_table<T: Serialize>(
    cfg: &PipelineConfig,
    csv_name: &str,
    header: &[&str],
    rows: Vec<Vec<String>>,
    structured: &T,
) -> CliResult<PathBuf> {
    match cfg.format {
        Format::Csv => write_output(&cfg.out, csv_name, &csv_bytes(header, rows)?),
        Format::Structured => {
            let stem = Path::new(csv_name).with_extension("json");
            write_json(&cfg.out, &stem.to_string_lossy(), structured)
        }
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn model(cfg: &PipelineConfig) -> CliResult<ComputeModel<f64>> {
    Ok(ComputeModel::new(cfg.k)?)
}

fn concat_run_logs(sets: &[ingest::RunSet]) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    for (i, rs) in sets.iter().enumerate() {
        let mut buf = Vec::new();
        ingest::write_run_log(rs, &mut buf)?;
        let body = if i == 0 {
            &buf[..]
        } else {
            let nl = buf.iter().position(|b| *b == b'\n').map_or(buf.len(), |p| p + 1);
            &buf[nl..]
        };
        out.extend_from_slice(body);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestSummary {
    pub task: String,
    pub curves: usize,
    pub points: usize,
}

pub fn ingest(cfg: &PipelineConfig) -> CliResult<()> {
    let mut inputs = Inputs::default();
    let metas = inputs.manifest(cfg.manifest.as_ref())?;
    let sets = inputs.run_sets(&metas, &cfg.input)?;
    write_output(&cfg.out, RUNS_FILE, &concat_run_logs(&sets)?)?;
    let used: Vec<&TaskMeta> = sets.iter().map(|s| &s.meta).collect();
    let manifest = ManifestDoc::from_metas(used).to_toml_string()?;
    write_output(&cfg.out, MANIFEST_FILE, manifest.as_bytes())?;
    let summary: Vec<IngestSummary> = sets
        .iter()
        .map(|s| IngestSummary {
            task: s.meta.task_id.clone(),
            curves: s.len(),
            points: s.curves.values().map(|c| c.points.len()).sum(),
        })
        .collect();
    let doc = Document {
        provenance: inputs.provenance("ingest", None),
        result: summary,
    };
    write_doc(&cfg.out, "ingest.json", &doc)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskBootstrap {
    pub task: String,
    pub cells: Vec<BootstrapBatchResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessResult {
    pub bootstrap: Vec<TaskBootstrap>,
    pub warnings: Vec<String>,
}

pub fn preprocess(cfg: &PipelineConfig) -> CliResult<()> {
    let mut inputs = Inputs::default();
    let metas = inputs.manifest(cfg.manifest.as_ref())?;
    let sets = inputs.run_sets(&metas, &cfg.input)?;
    let boot = BootstrapConfig {
        replicates: cfg.bootstrap_k,
        rng_seed: cfg.seed(),
    };
    let mut points = Vec::new();
    let mut result = PreprocessResult {
        bootstrap: Vec::new(),
        warnings: Vec::new(),
    };
    for rs in &sets {
        let grid = preprocess::threshold_grid(&rs.meta, cfg.thresholds)?;
        let mut table = preprocess::extract_efficiency_table(rs, &grid)?;
        let (processed, warnings) = preprocess::process_runset(rs);
        bootstrap::fill_data_std(&mut table.points, &processed, &grid, &boot)?;
        let mut cells = Vec::new();
        for (cell, arms) in &processed {
            match bootstrap::bootstrap_best_batch(*cell, arms, &grid, &boot) {
                Ok(r) => cells.push(r),
                Err(e) => result.warnings.push(format!("{}: {e}", rs.meta.task_id)),
            }
        }
        result.warnings.extend(table.warnings);
        result.warnings.extend(warnings);
        result.bootstrap.push(TaskBootstrap {
            task: rs.meta.task_id.clone(),
            cells,
        });
        points.extend(table.points);
    }
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    match cfg.format {
        Format::Csv => {
            let mut buf = Vec::new();
            preprocess::write_efficiency_csv(&points, &mut buf)?;
            write_output(&cfg.out, EFFICIENCY_FILE, &buf)?;
        }
        Format::Structured => {
            write_json(&cfg.out, "efficiency.json", &points)?;
        }
    }
    let doc = Document {
        provenance: inputs.provenance("preprocess", Some(boot.rng_seed)),
        result,
    };
    write_doc(&cfg.out, BOOTSTRAP_FILE, &doc)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskBatchFit {
    pub task: String,
    /// `bootstrap` or `empirical`.
    pub source: String,
    pub report: BatchRuleReport<f64>,
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

/// Empirical best batch per `(σ, N)` at each task's highest threshold.
fn empirical_batch_optima(points: &[EfficiencyPoint]) -> BTreeMap<String, Vec<(f64, f64, f64)>> {
    let mut top: BTreeMap<&str, f64> = BTreeMap::new();
    for p in points {
        let t = top.entry(&p.task_id).or_insert(p.threshold);
        *t = t.max(p.threshold);
    }
    let at_top: Vec<EfficiencyPoint> = points
        .iter()
        .filter(|p| p.threshold == top[p.task_id.as_str()])
        .cloned()
        .collect();
    let mut out: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for p in preprocess::best_over_batch(&at_top) {
        out.entry(p.task_id).or_default().push((p.sigma, p.model_size, p.batch_size));
    }
    out
}

pub fn fit_batch(cfg: &PipelineConfig) -> CliResult<()> {
    crate::io::require_inputs(&cfg.input)?;
    let mut inputs = Inputs::default();
    let mut by_task: BTreeMap<String, (String, Vec<(f64, f64, f64)>)> = BTreeMap::new();
    for path in &cfg.input {
        if is_json(path) {
            let doc: Document<PreprocessResult> = inputs.read_doc(path)?;
            for tb in doc.result.bootstrap {
                let pts = tb.cells.iter().map(|c| (c.sigma, c.model_size, c.b_bootstrap));
                by_task
                    .entry(tb.task)
                    .or_insert_with(|| ("bootstrap".into(), Vec::new()))
                    .1
                    .extend(pts);
            }
        } else {
            let points = inputs.efficiency(std::slice::from_ref(path))?;
            for (task, pts) in empirical_batch_optima(&points) {
                by_task.entry(task).or_insert_with(|| ("empirical".into(), Vec::new())).1.extend(pts);
            }
        }
    }
    if let Some(t) = &cfg.task {
        by_task.retain(|k, _| k == t);
    }
    if by_task.is_empty() {
        return Err(CliError::input("no batch-size data found in the inputs"));
    }
    let options = FitOptions {
        seed: cfg.seed(),
        ..FitOptions::default()
    };
    let fits = by_task
        .into_iter()
        .map(|(task, (source, pts))| {
            let report = scaling_laws::fit_batch_rule(&pts, options)
                .map_err(|e| CliError::from(e).prefixed(&task))?;
            Ok(TaskBatchFit { task, source, report })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let doc = Document {
        provenance: inputs.provenance("fit-batch", Some(options.seed)),
        result: fits,
    };
    write_doc(&cfg.out, BATCH_FIT_FILE, &doc)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataFitArtifact {
    pub tasks: Vec<String>,
    #[serde(flatten)]
    pub outcome: DataFitOutcome<f64>,
}

impl DataFitArtifact {
    /// Fits for one task in that task's own units, ordered by threshold, with
    /// their instability flags. Without a task, aggregated fits stay in the
    /// normalized units of the cross-task median.
    pub fn task_fits(&self, task: Option<&str>) -> CliResult<(Option<String>, Vec<(DataFit<f64>, bool)>)> {
        let pick = |task: Option<&str>| -> CliResult<String> {
            match task {
                Some(t) if self.tasks.iter().any(|x| x == t) => Ok(t.to_string()),
                Some(t) => Err(CliError::input(format!("task {t:?} is not in the fit document"))),
                None if self.tasks.len() == 1 => Ok(self.tasks[0].clone()),
                None => Err(CliError::input(format!(
                    "fit document covers {} tasks; choose one with --task",
                    self.tasks.len()
                ))),
            }
        };
        let mut out = match &self.outcome {
            DataFitOutcome::Independent { fits } => {
                let t = pick(task)?;
                (Some(t), fits.iter().map(|r| (r.fit, r.unstable)).collect::<Vec<_>>())
            }
            DataFitOutcome::SharedExponent { families } => {
                let t = pick(task)?;
                let fits = families
                    .iter()
                    .filter_map(|f| f.task_fit(&t).map(|fit| (fit, f.unstable)))
                    .collect();
                (Some(t), fits)
            }
            DataFitOutcome::Aggregated { fits } => match task {
                None => (None, fits.iter().map(|f| (f.report.fit, f.report.unstable)).collect()),
                Some(_) => {
                    let t = pick(task)?;
                    let fits = fits
                        .iter()
                        .filter_map(|f| {
                            let med = f.normalization.per_env_median.get(&t)?;
                            let factor = med / f.normalization.global_median;
                            let j = *f.thresholds.get(&t)?;
                            Some((f.report.fit.scaled(factor, j), f.report.unstable))
                        })
                        .collect();
                    (Some(t), fits)
                }
            },
        };
        out.1.sort_by(|a, b| a.0.threshold.total_cmp(&b.0.threshold));
        if out.1.is_empty() {
            return Err(CliError::input("fit document has no fits"));
        }
        Ok(out)
    }

    /// The fit at `threshold` (nearest match) or at the highest threshold.
    pub fn select(&self, task: Option<&str>, threshold: Option<f64>) -> CliResult<(Option<String>, DataFit<f64>, bool)> {
        let (t, fits) = self.task_fits(task)?;
        let (fit, unstable) = match threshold {
            None => *fits.last().unwrap(),
            Some(j) => *fits
                .iter()
                .min_by(|a, b| (a.0.threshold - j).abs().total_cmp(&(b.0.threshold - j).abs()))
                .unwrap(),
        };
        Ok((t, fit, unstable))
    }
}

fn unstable_levels(outcome: &DataFitOutcome<f64>) -> Vec<f64> {
    match outcome {
        DataFitOutcome::Independent { fits } => fits.iter().filter(|f| f.unstable).map(|f| f.fit.threshold).collect(),
        DataFitOutcome::SharedExponent { families } => families
            .iter()
            .filter(|f| f.unstable)
            .filter_map(|f| f.per_task.values().next().map(|s| s.threshold))
            .collect(),
        DataFitOutcome::Aggregated { fits } => fits
            .iter()
            .filter(|f| f.report.unstable)
            .map(|f| f.report.fit.threshold)
            .collect(),
    }
}

pub fn fit_data(cfg: &PipelineConfig) -> CliResult<()> {
    let mut inputs = Inputs::default();
    let mut points = inputs.efficiency(&cfg.input)?;
    if let Some(t) = &cfg.task {
        points.retain(|p| &p.task_id == t);
    }
    let best = preprocess::best_over_batch(&points);
    let mut tasks: Vec<String> = best.iter().map(|p| p.task_id.clone()).collect();
    tasks.sort();
    tasks.dedup();
    let options = FitOptions {
        seed: cfg.seed(),
        ..FitOptions::default()
    };
    let outcome = scaling_laws::fit_data_efficiency::<f64>(&best, cfg.mode.into(), options)?;
    let unstable = unstable_levels(&outcome);
    let doc = Document {
        provenance: inputs.provenance("fit-data", Some(options.seed)),
        result: DataFitArtifact { tasks, outcome },
    };
    write_doc(&cfg.out, DATA_FIT_FILE, &doc)?;
    if !unstable.is_empty() {
        let list: Vec<String> = unstable.iter().map(|j| j.to_string()).collect();
        return Err(CliError::Numerical(format!(
            "unstable fits at thresholds {}: an exponent collapsed towards 0; \
             try --mode shared or --mode aggregated",
            list.join(", ")
        )));
    }
    Ok(())
}

fn load_data_fit(inputs: &mut Inputs, cfg: &PipelineConfig) -> CliResult<DataFitArtifact> {
    let path = cfg
        .input
        .iter()
        .find(|p| is_json(p))
        .ok_or_else(|| CliError::input("a data-fit document (.json) is required via --input"))?;
    Ok(inputs.read_doc::<DataFitArtifact>(path)?.result)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationReport {
    pub task: Option<String>,
    pub fit: DataFit<f64>,
    pub k: f64,
    pub data_budget: Option<AllocationSolution<f64>>,
    pub compute_budget: Option<AllocationSolution<f64>>,
    pub delta: Option<f64>,
    pub total_budget: Option<AllocationSolution<f64>>,
}

pub fn allocate(cfg: &PipelineConfig) -> CliResult<()> {
    if cfg.data_budget.is_none() && cfg.compute_budget.is_none() && cfg.delta.is_none() {
        return Err(CliError::input(
            "allocate needs at least one of --data-budget, --compute-budget, --delta",
        ));
    }
    let mut inputs = Inputs::default();
    let artifact = load_data_fit(&mut inputs, cfg)?;
    let (task, fit, unstable) = artifact.select(cfg.task.as_deref(), cfg.threshold)?;
    if unstable {
        return Err(CliError::Numerical(format!(
            "fit at threshold {} is unstable; allocation would be meaningless",
            fit.threshold
        )));
    }
    let m = model(cfg)?;
    let report = AllocationReport {
        task,
        fit,
        k: cfg.k,
        data_budget: cfg.data_budget.map(|d| allocate::optimal_for_data_budget(&fit, &m, d)).transpose()?,
        compute_budget: cfg
            .compute_budget
            .map(|c| allocate::optimal_for_compute_budget(&fit, &m, c))
            .transpose()?,
        delta: cfg.delta,
        total_budget: cfg.delta.map(|d| allocate::minimize_budget(&fit, &m, d)).transpose()?,
    };
    for sol in [&report.data_budget, &report.compute_budget, &report.total_budget].into_iter().flatten() {
        for w in &sol.warnings {
            eprintln!("warning: {w}");
        }
    }
    let doc = Document {
        provenance: inputs.provenance("allocate", None),
        result: report,
    };
    write_doc(&cfg.out, ALLOCATION_FILE, &doc)?;
    Ok(())
}

/// `--delta`, else the task's value from `--manifest`.
fn resolve_delta(cfg: &PipelineConfig, inputs: &mut Inputs, task: Option<&str>) -> CliResult<f64> {
    if let Some(d) = cfg.delta {
        return Ok(d);
    }
    if cfg.manifest.is_none() {
        return Err(CliError::input("--delta or a --manifest with the task's delta is required"));
    }
    let metas = inputs.manifest(cfg.manifest.as_ref())?;
    let task = task.ok_or_else(|| CliError::input("--delta is required for aggregated fits without --task"))?;
    Ok(ingest::find_task(&metas, task)?.delta)
}

fn frontier_rows(points: &[FrontierPoint<f64>]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| {
            vec![
                num(p.threshold),
                num(p.budget),
                num(p.solution.sigma_star),
                num(p.solution.n_star),
                num(p.solution.data),
                num(p.solution.compute),
            ]
        })
        .collect()
}

fn compute_frontier(cfg: &PipelineConfig, inputs: &mut Inputs) -> CliResult<(Option<String>, Vec<FrontierPoint<f64>>)> {
    let artifact = load_data_fit(inputs, cfg)?;
    let (task, fits) = artifact.task_fits(cfg.task.as_deref())?;
    let delta = resolve_delta(cfg, inputs, task.as_deref())?;
    let fits: Vec<DataFit<f64>> = fits.into_iter().map(|(f, _)| f).collect();
    let (points, warnings) = allocate::budget_frontier(&fits, delta, &model(cfg)?)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok((task, points))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontierReport {
    pub task: Option<String>,
    pub laws: Option<FrontierLaws<f64>>,
    pub warnings: Vec<String>,
}

pub fn frontier(cfg: &PipelineConfig) -> CliResult<()> {
    let mut inputs = Inputs::default();
    let (task, points) = compute_frontier(cfg, &mut inputs)?;
    write_table(cfg, FRONTIER_FILE, &FRONTIER_HEADER, frontier_rows(&points), &points)?;
    let mut warnings = Vec::new();
    let laws = match allocate::fit_frontier_laws(&points, cfg.extrapolate_top) {
        Ok(l) => Some(l),
        Err(e) if !e.is_numerical() => {
            warnings.push(format!("no frontier laws: {e}"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let doc = Document {
        provenance: inputs.provenance("frontier", None),
        result: FrontierReport { task, laws, warnings },
    };
    write_doc(&cfg.out, FRONTIER_LAWS_FILE, &doc)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSensitivity {
    pub task: String,
    pub threshold: f64,
    pub rows: Vec<SensitivityRow>,
}

pub fn sensitivity(cfg: &PipelineConfig) -> CliResult<()> {
    let mut inputs = Inputs::default();
    let fit_path = cfg
        .input
        .iter()
        .find(|p| is_json(p))
        .ok_or_else(|| CliError::input("a batch-fit document (.json) is required via --input"))?;
    let fits: Vec<TaskBatchFit> = inputs.read_doc(fit_path)?.result;
    let tables: Vec<PathBuf> = cfg.input.iter().filter(|p| !is_json(p)).cloned().collect();
    let points = inputs.efficiency(&tables)?;
    let rules: BTreeMap<&str, &BatchRuleFit<f64>> = fits.iter().map(|f| (f.task.as_str(), &f.report.fit)).collect();
    let mut tasks: Vec<&str> = points.iter().map(|p| p.task_id.as_str()).collect();
    tasks.sort();
    tasks.dedup();
    if let Some(t) = &cfg.task {
        tasks.retain(|x| x == t);
    }
    let bins = scaling_laws::default_sensitivity_bins();
    let mut out = Vec::new();
    for task in tasks {
        let rule = rules
            .get(task)
            .ok_or_else(|| CliError::input(format!("no batch rule for task {task:?}")))?;
        let own: Vec<EfficiencyPoint> = points.iter().filter(|p| p.task_id == task).cloned().collect();
        let threshold = match cfg.threshold {
            Some(j) => own
                .iter()
                .map(|p| p.threshold)
                .min_by(|a, b| (a - j).abs().total_cmp(&(b - j).abs()))
                .unwrap(),
            None => own.iter().map(|p| p.threshold).fold(f64::NEG_INFINITY, f64::max),
        };
        let groups = scaling_laws::sensitivity_groups(&own, threshold);
        out.push(TaskSensitivity {
            task: task.to_string(),
            threshold,
            rows: scaling_laws::batch_sensitivity(&groups, rule, &bins),
        });
    }
    if out.is_empty() {
        return Err(CliError::input("no efficiency points for the requested task"));
    }
    let rows = out
        .iter()
        .flat_map(|t| {
            t.rows.iter().map(|r| {
                vec![
                    t.task.clone(),
                    r.label.clone(),
                    r.ratio.map(num).unwrap_or_default(),
                    r.groups.to_string(),
                ]
            })
        })
        .collect();
    write_table(cfg, SENSITIVITY_FILE, &SENSITIVITY_HEADER, rows, &out)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelError {
    pub threshold: f64,
    pub relative_error: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub relative_error: f64,
    pub points: usize,
    pub unmatched: usize,
    pub per_threshold: Vec<LevelError>,
}

fn same_threshold(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

pub fn evaluate(cfg: &PipelineConfig) -> CliResult<()> {
    let mut inputs = Inputs::default();
    let artifact = load_data_fit(&mut inputs, cfg)?;
    let tables: Vec<PathBuf> = cfg.input.iter().filter(|p| !is_json(p)).cloned().collect();
    let mut points = inputs.efficiency(&tables)?;
    if let Some(t) = &cfg.task {
        points.retain(|p| &p.task_id == t);
    }
    let best = preprocess::best_over_batch(&points);
    let mut fits_by_task: BTreeMap<String, Vec<DataFit<f64>>> = BTreeMap::new();
    for t in &artifact.tasks {
        if let Ok((_, fits)) = artifact.task_fits(Some(t)) {
            fits_by_task.insert(t.clone(), fits.into_iter().map(|(f, _)| f).collect());
        }
    }
    let mut levels: BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut unmatched = 0;
    for p in &best {
        let fit = fits_by_task
            .get(&p.task_id)
            .and_then(|fs| fs.iter().find(|f| same_threshold(f.threshold, p.threshold)));
        match fit {
            Some(f) => {
                let e = levels
                    .entry(p.threshold.to_bits())
                    .or_insert_with(|| (p.threshold, Vec::new(), Vec::new()));
                e.1.push(f.eval(p.sigma, p.model_size));
                e.2.push(p.data);
            }
            None => unmatched += 1,
        }
    }
    if levels.is_empty() {
        return Err(CliError::input("no efficiency point matches a fitted task and threshold"));
    }
    let mut all_pred = Vec::new();
    let mut all_obs = Vec::new();
    let mut per_threshold = Vec::new();
    for (_, (j, pred, obs)) in levels {
        per_threshold.push(LevelError {
            threshold: j,
            relative_error: scaling_laws::relative_error(&pred, &obs)?,
            points: obs.len(),
        });
        all_pred.extend(pred);
        all_obs.extend(obs);
    }
    per_threshold.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    let eval = Evaluation {
        relative_error: scaling_laws::relative_error(&all_pred, &all_obs)?,
        points: all_obs.len(),
        unmatched,
        per_threshold,
    };
    eprintln!("relative error {:.6} over {} points", eval.relative_error, eval.points);
    let doc = Document {
        provenance: inputs.provenance("evaluate", None),
        result: eval,
    };
    write_doc(&cfg.out, EVALUATION_FILE, &doc)?;
    Ok(())
}

pub fn synth(cfg: &PipelineConfig, spec_path: &Path) -> CliResult<()> {
    let mut inputs = Inputs::default();
    let text = inputs.read(spec_path)?;
    let mut spec = SynthSpec::from_toml_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", spec_path.display())))?;
    if let Some(s) = cfg.seed {
        spec.rng_seed = s;
    }
    let runs = synth::gen_learning_curves(&spec)?;
    write_output(&cfg.out, RUNS_FILE, &concat_run_logs(std::slice::from_ref(&runs))?)?;
    let manifest = ManifestDoc::from_metas([&runs.meta]).to_toml_string()?;
    write_output(&cfg.out, MANIFEST_FILE, manifest.as_bytes())?;
    let doc = Document {
        provenance: inputs.provenance("synth", Some(spec.rng_seed)),
        result: spec,
    };
    write_doc(&cfg.out, "synth.json", &doc)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct ContourRow {
    d_target: f64,
    sigma: f64,
    n: f64,
}

pub fn report(cfg: &PipelineConfig, contour_points: usize, sigma_range: (f64, f64)) -> CliResult<()> {
    let mut inputs = Inputs::default();
    let artifact = load_data_fit(&mut inputs, cfg)?;
    let (_, fit, _) = artifact.select(cfg.task.as_deref(), cfg.threshold)?;
    let targets = match cfg.data_budget {
        Some(d) => vec![d],
        None => [1.5, 2.0, 4.0].iter().map(|m| m * fit.d_min).collect(),
    };
    let mut contour = Vec::new();
    for &d in &targets {
        for (sigma, n) in allocate::iso_data_contour(&fit, d, sigma_range, contour_points)? {
            contour.push(ContourRow { d_target: d, sigma, n });
        }
    }
    let rows = contour.iter().map(|r| vec![num(r.d_target), num(r.sigma), num(r.n)]).collect();
    write_table(cfg, CONTOUR_FILE, &CONTOUR_HEADER, rows, &contour)?;
    let (_, points) = compute_frontier(cfg, &mut inputs)?;
    write_table(cfg, FRONTIER_FILE, &FRONTIER_HEADER, frontier_rows(&points), &points)?;
    Ok(())
}
