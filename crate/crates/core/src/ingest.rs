//! Run logs and task manifests.
//!
//! Run logs are CSV files with the exact header
//! `task,utd,model_size,batch_size,seed,env_step,return`. Returns are kept in
//! raw units here; normalization happens in [`crate::preprocess`].
//!
//! Task manifests are nested key-value documents (TOML or JSON) with one block
//! per task:
//!
//! ```toml
//! [tasks.h1-crawl]
//! optimal_return = 700
//! j_min = 450
//! j_max = 780
//! delta = 2e12
//! reset_period = 2500000
//! ```

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RUN_LOG_HEADER: [&str; 7] = [
    "task",
    "utd",
    "model_size",
    "batch_size",
    "seed",
    "env_step",
    "return",
];

/// Per-task constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMeta {
    pub task_id: String,
    /// Raw return of the reference policy; maps to 1000 after normalization.
    pub optimal_return: f64,
    /// Lowest threshold of interest, normalized units.
    pub j_min: f64,
    /// Highest threshold of interest, normalized units.
    pub j_max: f64,
    /// FLOPs-equivalent cost of one environment step.
    pub delta: f64,
    /// Gradient steps between full-parameter resets.
    pub reset_period: Option<u64>,
}

impl TaskMeta {
    pub fn validate(&self) -> Result<()> {
        let id = &self.task_id;
        if id.is_empty() {
            return Err(Error::Validation("task id is empty".into()));
        }
        if !(self.optimal_return.is_finite() && self.optimal_return > 0.0) {
            return Err(Error::Validation(format!(
                "{id}: optimal_return must be positive, got {}",
                self.optimal_return
            )));
        }
        if !(self.j_min.is_finite() && self.j_max.is_finite()) {
            return Err(Error::Validation(format!("{id}: thresholds must be finite")));
        }
        if !(0.0 <= self.j_min && self.j_min < self.j_max && self.j_max <= 1000.0) {
            return Err(Error::Validation(format!(
                "{id}: need 0 <= j_min < j_max <= 1000, got j_min={} j_max={}",
                self.j_min, self.j_max
            )));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Validation(format!(
                "{id}: delta must be positive, got {}",
                self.delta
            )));
        }
        if self.reset_period == Some(0) {
            return Err(Error::Validation(format!("{id}: reset_period must be positive")));
        }
        Ok(())
    }
}

/// Identifies one training run.
///
/// Ordering and equality use `f64::total_cmp` on the real-valued fields so keys
/// can live in ordered maps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunKey {
    pub task_id: String,
    pub utd: f64,
    pub model_size: f64,
    pub batch_size: u32,
    pub seed: i64,
}

impl RunKey {
    fn cmp_fields(&self, other: &Self) -> Ordering {
        self.task_id
            .cmp(&other.task_id)
            .then(self.utd.total_cmp(&other.utd))
            .then(self.model_size.total_cmp(&other.model_size))
            .then(self.batch_size.cmp(&other.batch_size))
            .then(self.seed.cmp(&other.seed))
    }

    /// The `(σ, N)` cell this run belongs to.
    pub fn cell(&self) -> Cell {
        Cell {
            utd: self.utd,
            model_size: self.model_size,
        }
    }
}

impl PartialEq for RunKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_fields(other) == Ordering::Equal
    }
}
impl Eq for RunKey {}
impl PartialOrd for RunKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for RunKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_fields(other)
    }
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/utd={}/N={}/B={}/seed={}",
            self.task_id, self.utd, self.model_size, self.batch_size, self.seed
        )
    }
}

/// A `(σ, N)` grid cell; ordered with `total_cmp`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Cell {
    pub utd: f64,
    pub model_size: f64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.utd
            .total_cmp(&other.utd)
            .then(self.model_size.total_cmp(&other.model_size))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub key: RunKey,
    /// `(env_step, return)`, strictly increasing in env_step.
    pub points: Vec<(u64, f64)>,
    /// Env-step positions of full-parameter resets.
    pub reset_steps: Option<Vec<u64>>,
}

impl LearningCurve {
    pub fn new(key: RunKey, mut points: Vec<(u64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::UnusableCurve(key.to_string()));
        }
        points.sort_by_key(|p| p.0);
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Contract(format!(
                "{key}: env_steps must be strictly increasing"
            )));
        }
        Ok(Self {
            key,
            points,
            reset_steps: None,
        })
    }

    pub fn with_reset_steps(mut self, steps: Vec<u64>) -> Self {
        self.reset_steps = Some(steps);
        self
    }

    pub fn last_step(&self) -> u64 {
        self.points.last().map(|p| p.0).unwrap_or(0)
    }
}

/// Reset markers in env steps for a run with UTD ratio `utd`.
///
/// Resets happen every `period` gradient steps and a run takes `utd` gradient
/// steps per env step, so the k-th reset falls at env step `ceil(k·period/utd)`.
pub fn reset_markers(period: u64, utd: f64, last_step: u64) -> Vec<u64> {
    let mut out = Vec::new();
    if period == 0 || !(utd > 0.0) {
        return out;
    }
    for k in 1u64.. {
        let step = ((k as f64) * (period as f64) / utd).ceil() as u64;
        if step > last_step {
            break;
        }
        out.push(step);
    }
    out
}

/// All curves of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSet {
    pub meta: TaskMeta,
    pub curves: BTreeMap<RunKey, LearningCurve>,
}

impl RunSet {
    pub fn new(meta: TaskMeta, curves: Vec<LearningCurve>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for c in curves {
            if c.key.task_id != meta.task_id {
                return Err(Error::Validation(format!(
                    "curve {} does not belong to task {}",
                    c.key, meta.task_id
                )));
            }
            let key = c.key.clone();
            if map.insert(key.clone(), c).is_some() {
                return Err(Error::Validation(format!("duplicate run {key}")));
            }
        }
        Ok(Self { meta, curves: map })
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Curves grouped by `(σ, N)` then batch size.
    pub fn by_cell(&self) -> BTreeMap<Cell, BTreeMap<u32, Vec<&LearningCurve>>> {
        let mut out: BTreeMap<Cell, BTreeMap<u32, Vec<&LearningCurve>>> = BTreeMap::new();
        for c in self.curves.values() {
            out.entry(c.key.cell())
                .or_default()
                .entry(c.key.batch_size)
                .or_default()
                .push(c);
        }
        out
    }
}

fn field(rec: &csv::StringRecord, idx: usize) -> &str {
    rec.get(idx).unwrap_or("").trim()
}

fn parse_num<V: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: usize) -> Result<V> {
    let raw = field(rec, idx);
    raw.parse::<V>().map_err(|_| Error::Parse {
        line,
        column: RUN_LOG_HEADER[idx].to_string(),
        message: format!("cannot parse {raw:?}"),
    })
}

/// Parses a run-log CSV for the task described by `meta`.
///
/// Rows for other tasks are rejected. When `meta.reset_period` is set, every
/// curve gets reset markers derived from it via [`reset_markers`].
pub fn parse_run_log<R: Read>(reader: R, meta: &TaskMeta) -> Result<RunSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        None => return Err(Error::EmptyInput),
        Some(h) => h?,
    };
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != RUN_LOG_HEADER {
        return Err(Error::Parse {
            line: 1,
            column: "header".into(),
            message: format!(
                "expected `{}`, got `{}`",
                RUN_LOG_HEADER.join(","),
                names.join(",")
            ),
        });
    }

    let mut series: BTreeMap<RunKey, BTreeMap<u64, f64>> = BTreeMap::new();
    let mut rows = 0usize;
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() == 1 && field(&rec, 0).is_empty() {
            continue;
        }
        if rec.len() != RUN_LOG_HEADER.len() {
            return Err(Error::Parse {
                line,
                column: "row".into(),
                message: format!("expected {} columns, got {}", RUN_LOG_HEADER.len(), rec.len()),
            });
        }
        let task = field(&rec, 0);
        if task != meta.task_id {
            return Err(Error::Parse {
                line,
                column: "task".into(),
                message: format!("row task {task:?} does not match manifest task {:?}", meta.task_id),
            });
        }
        let utd: f64 = parse_num(&rec, 1, line)?;
        let model_size: f64 = parse_num(&rec, 2, line)?;
        let batch_size: u32 = parse_num(&rec, 3, line)?;
        let seed: i64 = parse_num(&rec, 4, line)?;
        let env_step: u64 = parse_num(&rec, 5, line)?;
        let ret: f64 = parse_num(&rec, 6, line)?;
        let positive = |v: f64, col: usize| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Parse {
                    line,
                    column: RUN_LOG_HEADER[col].into(),
                    message: format!("must be positive, got {v}"),
                })
            }
        };
        positive(utd, 1)?;
        positive(model_size, 2)?;
        if batch_size == 0 {
            return Err(Error::Parse {
                line,
                column: "batch_size".into(),
                message: "must be at least 1".into(),
            });
        }
        if !ret.is_finite() {
            return Err(Error::Parse {
                line,
                column: "return".into(),
                message: format!("non-finite value {ret}"),
            });
        }
        let key = RunKey {
            task_id: task.to_string(),
            utd,
            model_size,
            batch_size,
            seed,
        };
        let entry = series.entry(key.clone()).or_default();
        if entry.insert(env_step, ret).is_some() {
            return Err(Error::Duplicate {
                line,
                run: key.to_string(),
                env_step,
            });
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyInput);
    }

    let mut curves = Vec::with_capacity(series.len());
    for (key, pts) in series {
        let mut curve = LearningCurve::new(key, pts.into_iter().collect())?;
        if let Some(period) = meta.reset_period {
            let markers = reset_markers(period, curve.key.utd, curve.last_step());
            curve = curve.with_reset_steps(markers);
        }
        curves.push(curve);
    }
    RunSet::new(meta.clone(), curves)
}

/// Writes a run set in the run-log CSV schema, rows ordered by run key then env step.
pub fn write_run_log<W: Write>(runset: &RunSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RUN_LOG_HEADER)?;
    for c in runset.curves.values() {
        for &(step, ret) in &c.points {
            w.write_record([
                c.key.task_id.clone(),
                c.key.utd.to_string(),
                c.key.model_size.to_string(),
                c.key.batch_size.to_string(),
                c.key.seed.to_string(),
                step.to_string(),
                ret.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Raw manifest entry; every field optional so validation can report what is missing.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub optimal_return: Option<f64>,
    pub j_min: Option<f64>,
    pub j_max: Option<f64>,
    pub delta: Option<f64>,
    pub reset_period: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ManifestDoc {
    #[serde(default)]
    pub tasks: BTreeMap<String, ManifestEntry>,
}

impl ManifestDoc {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))
    }

    /// Guesses the format from the first non-blank character (`{` means JSON).
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::from_json_str(text)
        } else {
            Self::from_toml_str(text)
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn from_metas<'a>(metas: impl IntoIterator<Item = &'a TaskMeta>) -> Self {
        let tasks = metas
            .into_iter()
            .map(|m| {
                (
                    m.task_id.clone(),
                    ManifestEntry {
                        optimal_return: Some(m.optimal_return),
                        j_min: Some(m.j_min),
                        j_max: Some(m.j_max),
                        delta: Some(m.delta),
                        reset_period: m.reset_period,
                    },
                )
            })
            .collect();
        Self { tasks }
    }
}

/// Returns assumed already normalized when a manifest omits `optimal_return`.
pub const DEFAULT_OPTIMAL_RETURN: f64 = 1000.0;

/// Checks every task block and returns the task constants in task-id order.
pub fn validate_manifest(doc: &ManifestDoc) -> Result<Vec<TaskMeta>> {
    if doc.tasks.is_empty() {
        return Err(Error::Validation("manifest has no tasks".into()));
    }
    doc.tasks
        .iter()
        .map(|(id, e)| {
            let missing = |name: &str| Error::Validation(format!("{id}: missing {name}"));
            let meta = TaskMeta {
                task_id: id.clone(),
                optimal_return: e.optimal_return.unwrap_or(DEFAULT_OPTIMAL_RETURN),
                j_min: e.j_min.ok_or_else(|| missing("j_min"))?,
                j_max: e.j_max.ok_or_else(|| missing("j_max"))?,
                delta: e.delta.ok_or_else(|| missing("delta"))?,
                reset_period: e.reset_period,
            };
            meta.validate()?;
            Ok(meta)
        })
        .collect()
}

/// Looks up one task in a validated manifest.
pub fn find_task<'a>(metas: &'a [TaskMeta], task_id: &str) -> Result<&'a TaskMeta> {
    metas
        .iter()
        .find(|m| m.task_id == task_id)
        .ok_or_else(|| Error::Validation(format!("task {task_id:?} not in manifest")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crawl() -> TaskMeta {
        TaskMeta {
            task_id: "h1-crawl".into(),
            optimal_return: 700.0,
            j_min: 450.0,
            j_max: 780.0,
            delta: 2e12,
            reset_period: None,
        }
    }

    const HEADER: &str = "task,utd,model_size,batch_size,seed,env_step,return\n";

    #[test]
    fn two_rows_one_curve() {
        let text = format!("{HEADER}h1-crawl,1,2300000,128,0,1000,350\nh1-crawl,1,2300000,128,0,2000,420\n");
        let rs = parse_run_log(text.as_bytes(), &crawl()).unwrap();
        assert_eq!(rs.len(), 1);
        let c = rs.curves.values().next().unwrap();
        assert_eq!(c.points, vec![(1000, 350.0), (2000, 420.0)]);
        assert_eq!(c.reset_steps, None);
    }

    #[test]
    fn out_of_order_rows_are_sorted() {
        let text = format!(
            "{HEADER}h1-crawl,1,2300000,128,0,3000,500\nh1-crawl,1,2300000,128,0,1000,350\nh1-crawl,1,2300000,128,0,2000,420\n"
        );
        let rs = parse_run_log(text.as_bytes(), &crawl()).unwrap();
        let steps: Vec<u64> = rs.curves.values().next().unwrap().points.iter().map(|p| p.0).collect();
        assert_eq!(steps, vec![1000, 2000, 3000]);
    }

    #[test]
    fn bad_model_size_names_line_and_column() {
        let text = format!("{HEADER}h1-crawl,1,2300000,128,0,500,300\nh1-crawl,1,abc,128,0,1000,350\n");
        match parse_run_log(text.as_bytes(), &crawl()) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "model_size");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_column_count() {
        let text = format!("{HEADER}h1-crawl,1,2300000,128,0,1000\n");
        assert!(matches!(
            parse_run_log(text.as_bytes(), &crawl()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_step_rejected() {
        let text = format!("{HEADER}h1-crawl,1,2300000,128,0,1000,350\nh1-crawl,1,2300000,128,0,1000,351\n");
        assert!(matches!(
            parse_run_log(text.as_bytes(), &crawl()),
            Err(Error::Duplicate { line: 3, env_step: 1000, .. })
        ));
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(parse_run_log("".as_bytes(), &crawl()), Err(Error::EmptyInput)));
        assert!(matches!(parse_run_log(HEADER.as_bytes(), &crawl()), Err(Error::EmptyInput)));
    }

    #[test]
    fn bad_header() {
        let text = "task,utd,N,batch_size,seed,env_step,return\n";
        assert!(matches!(
            parse_run_log(text.as_bytes(), &crawl()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn reset_markers_from_period() {
        let mut meta = crawl();
        meta.reset_period = Some(2_500_000);
        let text = format!("{HEADER}h1-crawl,2,2300000,128,0,1000000,350\nh1-crawl,2,2300000,128,0,3000000,420\n");
        let rs = parse_run_log(text.as_bytes(), &meta).unwrap();
        let c = rs.curves.values().next().unwrap();
        assert_eq!(c.reset_steps, Some(vec![1_250_000, 2_500_000]));
    }

    #[test]
    fn manifest_examples() {
        let doc = ManifestDoc::from_toml_str(
            r#"
            [tasks.h1-crawl]
            optimal_return = 700
            j_min = 450
            j_max = 780
            delta = 2e12

            [tasks.humanoid-stand]
            j_min = 300
            j_max = 850
            delta = 5e10
            "#,
        )
        .unwrap();
        let metas = validate_manifest(&doc).unwrap();
        assert_eq!(metas.len(), 2);
        assert_eq!(metas[0], crawl());
        assert_eq!(metas[1].task_id, "humanoid-stand");
        assert_eq!(metas[1].optimal_return, 1000.0);
        assert_eq!((metas[1].j_min, metas[1].j_max, metas[1].delta), (300.0, 850.0, 5e10));
    }

    #[test]
    fn manifest_rejects_equal_bounds_and_missing_delta() {
        let doc = ManifestDoc::from_toml_str("[tasks.x]\nj_min = 500\nj_max = 500\ndelta = 1\n").unwrap();
        assert!(matches!(validate_manifest(&doc), Err(Error::Validation(_))));
        let doc = ManifestDoc::from_toml_str("[tasks.x]\nj_min = 100\nj_max = 500\n").unwrap();
        match validate_manifest(&doc) {
            Err(Error::Validation(m)) => assert!(m.contains("delta")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn manifest_json() {
        let doc = ManifestDoc::parse(r#"{"tasks": {"t": {"j_min": 0, "j_max": 1000, "delta": 1e9, "reset_period": 10}}}"#)
            .unwrap();
        let m = validate_manifest(&doc).unwrap();
        assert_eq!(m[0].reset_period, Some(10));
    }
}
