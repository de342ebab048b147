//! From raw learning curves to data-efficiency measurements.
//!
//! Per curve the pipeline is: rescale returns to `[0, 1000]`, drop the
//! transient post-reset dips, project onto nondecreasing sequences, then read
//! off the first logged env step at which each threshold is reached.

mod isotonic;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use self::isotonic::{is_nondecreasing, isotonic};
use crate::error::{Error, Result};
use crate::ingest::{LearningCurve, RunKey, RunSet, TaskMeta};

pub const EFFICIENCY_HEADER: [&str; 7] = [
    "task",
    "utd",
    "model_size",
    "batch_size",
    "threshold",
    "data",
    "data_std",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedCurve {
    pub key: RunKey,
    /// `(env_step, normalized_return)`.
    pub points: Vec<(u64, f64)>,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub thresholds: Vec<f64>,
}

impl ThresholdGrid {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.thresholds[0]
    }

    pub fn last(&self) -> f64 {
        *self.thresholds.last().expect("grid is nonempty")
    }
}

/// Environment steps needed by one `(σ, N, B)` configuration to reach `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub task_id: String,
    pub sigma: f64,
    pub model_size: f64,
    pub batch_size: f64,
    pub threshold: f64,
    pub data: f64,
    pub data_std: Option<f64>,
}

/// Rescales returns so that `meta.optimal_return` maps to 1000.
pub fn normalize_returns(curve: &LearningCurve, meta: &TaskMeta) -> LearningCurve {
    let scale = 1000.0 / meta.optimal_return;
    LearningCurve {
        key: curve.key.clone(),
        points: curve.points.iter().map(|&(t, r)| (t, r * scale)).collect(),
        reset_steps: curve.reset_steps.clone(),
    }
}

/// Drops evaluation points that sit in a post-reset dip.
///
/// After each reset marker, points are dropped while their return stays below
/// the running maximum of the points retained before the marker. The first
/// point that re-attains that maximum ends the dip. Retained points are never
/// modified.
pub fn remove_reset_dips(curve: &LearningCurve) -> Result<LearningCurve> {
    let markers = match &curve.reset_steps {
        Some(m) if !m.is_empty() => {
            let mut m = m.clone();
            m.sort_unstable();
            m
        }
        _ => return Ok(curve.clone()),
    };

    let mut kept = Vec::with_capacity(curve.points.len());
    let mut running_max = f64::NEG_INFINITY;
    let mut floor: Option<f64> = None;
    let mut next_marker = 0usize;
    for &(step, ret) in &curve.points {
        while next_marker < markers.len() && markers[next_marker] <= step {
            floor = Some(floor.map_or(running_max, |f| f.max(running_max)));
            next_marker += 1;
        }
        if let Some(f) = floor {
            if ret < f {
                continue;
            }
            floor = None;
        }
        running_max = running_max.max(ret);
        kept.push((step, ret));
    }
    if kept.is_empty() {
        return Err(Error::UnusableCurve(curve.key.to_string()));
    }
    Ok(LearningCurve {
        key: curve.key.clone(),
        points: kept,
        reset_steps: curve.reset_steps.clone(),
    })
}

/// `m` thresholds spaced uniformly from `meta.j_min` to `meta.j_max` inclusive.
pub fn threshold_grid(meta: &TaskMeta, m: usize) -> Result<ThresholdGrid> {
    if m < 2 {
        return Err(Error::Argument(format!("threshold count must be >= 2, got {m}")));
    }
    let step = (meta.j_max - meta.j_min) / (m - 1) as f64;
    let mut thresholds: Vec<f64> = (0..m).map(|i| meta.j_min + step * i as f64).collect();
    thresholds[m - 1] = meta.j_max;
    Ok(ThresholdGrid { thresholds })
}

/// Full per-curve pipeline: normalize, remove reset dips, isotonic projection.
pub fn process_curve(curve: &LearningCurve, meta: &TaskMeta) -> Result<ProcessedCurve> {
    let normalized = normalize_returns(curve, meta);
    let cleaned = remove_reset_dips(&normalized)?;
    let returns: Vec<f64> = cleaned.points.iter().map(|p| p.1).collect();
    let mono = isotonic(&returns);
    Ok(ProcessedCurve {
        key: cleaned.key,
        points: cleaned.points.iter().map(|p| p.0).zip(mono).collect(),
        monotone: true,
    })
}

/// First logged env step whose processed return reaches `threshold`, or `None`
/// when the curve never gets there. No interpolation between evaluation points.
pub fn data_efficiency(curve: &ProcessedCurve, threshold: f64) -> Result<Option<u64>> {
    let returns: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
    if !curve.monotone || !is_nondecreasing(&returns) {
        return Err(Error::Contract(format!(
            "data_efficiency needs a monotone curve ({})",
            curve.key
        )));
    }
    let idx = curve.points.partition_point(|p| p.1 < threshold);
    Ok(curve.points.get(idx).map(|p| p.0))
}

/// Aggregates per-seed first-crossing steps into one point estimate.
///
/// Censored seeds (`None`) count as +inf. When at least half the seeds are
/// censored there is no estimate; otherwise the lower median of the sorted
/// values is returned, which is finite in that case.
pub fn aggregate_seeds(per_seed: &[Option<u64>]) -> Option<f64> {
    let n = per_seed.len();
    if n == 0 {
        return None;
    }
    let censored = per_seed.iter().filter(|d| d.is_none()).count();
    if 2 * censored >= n {
        return None;
    }
    let mut vals: Vec<f64> = per_seed
        .iter()
        .map(|d| d.map_or(f64::INFINITY, |v| v as f64))
        .collect();
    vals.sort_by(f64::total_cmp);
    Some(vals[(n - 1) / 2])
}

/// Point estimate of `D_J` for one arm (a set of seed curves) at every threshold.
pub fn arm_efficiency(curves: &[&ProcessedCurve], grid: &ThresholdGrid) -> Result<Vec<Option<f64>>> {
    grid.thresholds
        .iter()
        .map(|&j| {
            let per_seed = curves
                .iter()
                .map(|c| data_efficiency(c, j))
                .collect::<Result<Vec<_>>>()?;
            Ok(aggregate_seeds(&per_seed))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyTable {
    pub points: Vec<EfficiencyPoint>,
    pub warnings: Vec<String>,
}

/// Processes every curve and aggregates seeds per `(σ, N, B, J)`.
///
/// `data_std` is left empty; [`crate::bootstrap`] fills it in.
pub fn extract_efficiency_table(runset: &RunSet, grid: &ThresholdGrid) -> Result<EfficiencyTable> {
    if runset.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut table = EfficiencyTable::default();
    for (cell, arms) in runset.by_cell() {
        for (batch, curves) in arms {
            let mut processed = Vec::with_capacity(curves.len());
            for c in curves {
                match process_curve(c, &runset.meta) {
                    Ok(p) => processed.push(p),
                    Err(e) => table.warnings.push(format!("skipping curve: {e}")),
                }
            }
            let refs: Vec<&ProcessedCurve> = processed.iter().collect();
            let estimates = arm_efficiency(&refs, grid)?;
            if estimates.iter().all(Option::is_none) {
                table.warnings.push(format!(
                    "{}: utd={} N={} B={} never reaches j_min={} in enough seeds; excluded",
                    runset.meta.task_id, cell.utd, cell.model_size, batch, grid.first()
                ));
                continue;
            }
            for (&j, est) in grid.thresholds.iter().zip(estimates) {
                if let Some(data) = est {
                    table.points.push(EfficiencyPoint {
                        task_id: runset.meta.task_id.clone(),
                        sigma: cell.utd,
                        model_size: cell.model_size,
                        batch_size: batch as f64,
                        threshold: j,
                        data,
                        data_std: None,
                    });
                }
            }
        }
    }
    Ok(table)
}

/// Processes every curve of a run set, grouped by cell and batch size.
pub fn process_runset(
    runset: &RunSet,
) -> (BTreeMap<crate::ingest::Cell, BTreeMap<u32, Vec<ProcessedCurve>>>, Vec<String>) {
    let mut out: BTreeMap<_, BTreeMap<u32, Vec<ProcessedCurve>>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (cell, arms) in runset.by_cell() {
        for (batch, curves) in arms {
            for c in curves {
                match process_curve(c, &runset.meta) {
                    Ok(p) => out.entry(cell).or_default().entry(batch).or_default().push(p),
                    Err(e) => warnings.push(format!("skipping curve: {e}")),
                }
            }
        }
    }
    (out, warnings)
}

pub fn write_efficiency_csv<W: Write>(points: &[EfficiencyPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EFFICIENCY_HEADER)?;
    for p in points {
        w.write_record([
            p.task_id.clone(),
            p.sigma.to_string(),
            p.model_size.to_string(),
            p.batch_size.to_string(),
            p.threshold.to_string(),
            p.data.to_string(),
            p.data_std.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_efficiency_csv<R: Read>(reader: R) -> Result<Vec<EfficiencyPoint>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != EFFICIENCY_HEADER {
        return Err(Error::Parse {
            line: 1,
            column: "header".into(),
            message: format!("expected `{}`", EFFICIENCY_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |idx: usize| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("").trim();
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                column: EFFICIENCY_HEADER[idx].into(),
                message: format!("cannot parse {raw:?}"),
            })
        };
        let std_raw = rec.get(6).unwrap_or("").trim();
        out.push(EfficiencyPoint {
            task_id: rec.get(0).unwrap_or("").trim().to_string(),
            sigma: num(1)?,
            model_size: num(2)?,
            batch_size: num(3)?,
            threshold: num(4)?,
            data: num(5)?,
            data_std: if std_raw.is_empty() { None } else { Some(num(6)?) },
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

/// For each `(task, σ, N, J)` keeps the arm with the smallest data requirement
/// (ties go to the smaller batch size).
pub fn best_over_batch(points: &[EfficiencyPoint]) -> Vec<EfficiencyPoint> {
    let mut best: BTreeMap<(String, u64, u64, u64), EfficiencyPoint> = BTreeMap::new();
    for p in points {
        let key = (
            p.task_id.clone(),
            p.sigma.to_bits(),
            p.model_size.to_bits(),
            p.threshold.to_bits(),
        );
        match best.get(&key) {
            Some(cur)
                if cur.data < p.data || (cur.data == p.data && cur.batch_size <= p.batch_size) => {}
            _ => {
                best.insert(key, p.clone());
            }
        }
    }
    let mut out: Vec<_> = best.into_values().collect();
    out.sort_by(|a, b| {
        a.task_id
            .cmp(&b.task_id)
            .then(a.threshold.total_cmp(&b.threshold))
            .then(a.sigma.total_cmp(&b.sigma))
            .then(a.model_size.total_cmp(&b.model_size))
    });
    out
}
