//! Batch-size rule and data-efficiency surface, their fits, and evaluation
//! metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitkit::{self, BatchRule, DataEfficiency, FitOptions, FitProblem, FitResult, Sample, SharedDataEfficiency};
use crate::preprocess::EfficiencyPoint;
use crate::scalar::{lower_median, Scalar};

/// Exponents below this are treated as collapsed to zero.
pub const UNSTABLE_EXPONENT: f64 = 1e-3;

/// A term whose largest value on the data is below this fraction of the
/// smallest observed requirement cannot be identified.
pub const NEGLIGIBLE_TERM: f64 = 1e-6;

/// `B(σ, N) = a_B / (σ^α_B + b_B σ^α_B N^-β_B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchRuleFit<T> {
    pub a_b: T,
    pub b_b: T,
    pub alpha_b: T,
    pub beta_b: T,
}

impl<T: Scalar> BatchRuleFit<T> {
    pub fn eval(&self, sigma: T, n: T) -> T {
        eval_batch_rule(self, sigma, n)
    }

    /// Same value written as `(a_B / σ^α_B) · 1 / (1 + b_B N^-β_B)`.
    pub fn eval_factored(&self, sigma: T, n: T) -> T {
        (self.a_b / sigma.powf(self.alpha_b)) * (T::one() / (T::one() + self.b_b * n.powf(-self.beta_b)))
    }

    /// Large-model limit `a_B / σ^α_B`.
    pub fn asymptote(&self, sigma: T) -> T {
        self.a_b / sigma.powf(self.alpha_b)
    }

    pub fn is_positive(&self) -> bool {
        [self.a_b, self.b_b, self.alpha_b, self.beta_b]
            .iter()
            .all(|v| *v > T::zero() && v.is_finite())
    }
}

pub fn eval_batch_rule<T: Scalar>(fit: &BatchRuleFit<T>, sigma: T, n: T) -> T {
    let s = sigma.powf(fit.alpha_b);
    fit.a_b / (s + fit.b_b * s * n.powf(-fit.beta_b))
}

/// `D(σ, N) = d_min + (a/σ)^α + (b/N)^β` at one performance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataFit<T> {
    pub d_min: T,
    pub a: T,
    pub alpha: T,
    pub b: T,
    pub beta: T,
    pub threshold: T,
}

/// The same surface written `d_min · (1 + (a/σ)^α + (b/N)^β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactoredDataFit<T> {
    pub d_min: T,
    pub a: T,
    pub alpha: T,
    pub b: T,
    pub beta: T,
}

impl<T: Scalar> FactoredDataFit<T> {
    pub fn eval(&self, sigma: T, n: T) -> T {
        self.d_min * (T::one() + (self.a / sigma).powf(self.alpha) + (self.b / n).powf(self.beta))
    }
}

impl<T: Scalar> DataFit<T> {
    pub fn eval(&self, sigma: T, n: T) -> T {
        eval_data_fit(self, sigma, n)
    }

    /// Converts factored coefficients: `a = a'·d_min^{1/α}`, `b = b'·d_min^{1/β}`.
    pub fn from_factored(f: &FactoredDataFit<T>, threshold: T) -> Self {
        Self {
            d_min: f.d_min,
            a: f.a * f.d_min.powf(T::one() / f.alpha),
            alpha: f.alpha,
            b: f.b * f.d_min.powf(T::one() / f.beta),
            beta: f.beta,
            threshold,
        }
    }

    pub fn to_factored(&self) -> FactoredDataFit<T> {
        FactoredDataFit {
            d_min: self.d_min,
            a: self.a / self.d_min.powf(T::one() / self.alpha),
            alpha: self.alpha,
            b: self.b / self.d_min.powf(T::one() / self.beta),
            beta: self.beta,
        }
    }

    /// `(a/σ)^α`.
    pub fn sigma_term(&self, sigma: T) -> T {
        (self.a / sigma).powf(self.alpha)
    }

    /// `(b/N)^β`.
    pub fn n_term(&self, n: T) -> T {
        (self.b / n).powf(self.beta)
    }

    /// Same surface at a threshold whose data requirement is `factor` times larger.
    pub fn scaled(&self, factor: T, threshold: T) -> Self {
        Self {
            d_min: self.d_min * factor,
            a: self.a * factor.powf(T::one() / self.alpha),
            alpha: self.alpha,
            b: self.b * factor.powf(T::one() / self.beta),
            beta: self.beta,
            threshold,
        }
    }

    pub fn is_unstable(&self) -> bool {
        self.alpha < T::lit(UNSTABLE_EXPONENT) || self.beta < T::lit(UNSTABLE_EXPONENT)
    }
}

pub fn eval_data_fit<T: Scalar>(fit: &DataFit<T>, sigma: T, n: T) -> T {
    fit.d_min + (fit.a / sigma).powf(fit.alpha) + (fit.b / n).powf(fit.beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRuleReport<T> {
    pub fit: BatchRuleFit<T>,
    pub diagnostics: FitResult<T>,
}

fn distinct<T: Scalar>(values: impl Iterator<Item = T>) -> usize {
    let mut v: Vec<T> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v.dedup();
    v.len()
}

/// Fits the batch-size rule to `(σ, N, B)` triples (typically bootstrap-optimal
/// batch sizes), equally weighted, by log-space least squares.
pub fn fit_batch_rule<T: Scalar>(points: &[(T, T, T)], options: FitOptions) -> Result<BatchRuleReport<T>> {
    if points.len() < 4 {
        return Err(Error::Argument(format!(
            "batch rule needs at least 4 points, got {}",
            points.len()
        )));
    }
    if distinct(points.iter().map(|p| p.0)) < 2 || distinct(points.iter().map(|p| p.1)) < 2 {
        return Err(Error::Argument(
            "batch rule needs at least 2 distinct UTD values and 2 distinct model sizes".into(),
        ));
    }
    let samples: Vec<Sample<T>> = points.iter().map(|p| Sample::new(vec![p.0, p.1])).collect();
    let targets: Vec<T> = points.iter().map(|p| p.2).collect();
    let res = fitkit::minimize(&FitProblem {
        model: &BatchRule,
        samples: &samples,
        targets: &targets,
        options,
    })?;
    let p = &res.params;
    Ok(BatchRuleReport {
        fit: BatchRuleFit {
            a_b: p[0],
            b_b: p[1],
            alpha_b: p[2],
            beta_b: p[3],
        },
        diagnostics: res,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFitReport<T> {
    pub fit: DataFit<T>,
    pub unstable: bool,
    pub diagnostics: FitResult<T>,
}

/// Fits the data-efficiency surface to `(σ, N, D)` triples at one threshold.
pub fn fit_data_surface<T: Scalar>(points: &[(T, T, T)], threshold: T, options: FitOptions) -> Result<DataFitReport<T>> {
    if points.len() < 5 {
        return Err(Error::Argument(format!(
            "data-efficiency fit needs at least 5 points, got {}",
            points.len()
        )));
    }
    let samples: Vec<Sample<T>> = points.iter().map(|p| Sample::new(vec![p.0, p.1])).collect();
    let targets: Vec<T> = points.iter().map(|p| p.2).collect();
    let res = fitkit::minimize(&FitProblem {
        model: &DataEfficiency,
        samples: &samples,
        targets: &targets,
        options,
    })?;
    let p = &res.params;
    let fit = DataFit {
        d_min: p[0],
        a: p[1],
        alpha: p[2],
        b: p[3],
        beta: p[4],
        threshold,
    };
    let min_d = targets.iter().copied().fold(T::infinity(), T::min);
    let max_sigma_term = points.iter().map(|p| fit.sigma_term(p.0)).fold(T::zero(), T::max);
    let max_n_term = points.iter().map(|p| fit.n_term(p.1)).fold(T::zero(), T::max);
    let floor = T::lit(NEGLIGIBLE_TERM) * min_d;
    Ok(DataFitReport {
        unstable: fit.is_unstable() || max_sigma_term < floor || max_n_term < floor,
        fit,
        diagnostics: res,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Independent,
    SharedExponent,
    Aggregated,
}

impl std::str::FromStr for FitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(FitMode::Independent),
            "shared" | "shared_exponent" => Ok(FitMode::SharedExponent),
            "aggregated" => Ok(FitMode::Aggregated),
            other => Err(Error::Argument(format!("unknown fit mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskScales<T> {
    pub d_min: T,
    pub a: T,
    pub b: T,
    pub threshold: T,
}

/// Data-efficiency surfaces with `α, β` tied across tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedExponentFamily<T> {
    pub alpha: T,
    pub beta: T,
    pub per_task: BTreeMap<String, TaskScales<T>>,
    pub unstable: bool,
    pub diagnostics: FitResult<T>,
}

impl<T: Scalar> SharedExponentFamily<T> {
    pub fn task_fit(&self, task: &str) -> Option<DataFit<T>> {
        self.per_task.get(task).map(|s| DataFit {
            d_min: s.d_min,
            a: s.a,
            alpha: self.alpha,
            b: s.b,
            beta: self.beta,
            threshold: s.threshold,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateNormalization<T> {
    /// `D_J^{env med}` per task.
    pub per_env_median: BTreeMap<String, T>,
    /// Median of the per-task medians, `D_J^{med}`.
    pub global_median: T,
    /// Even counts use the lower median.
    pub median_convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedFit<T> {
    pub report: DataFitReport<T>,
    pub normalization: AggregateNormalization<T>,
    /// Threshold used for each task at this level.
    pub thresholds: BTreeMap<String, T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DataFitOutcome<T> {
    Independent { fits: Vec<DataFitReport<T>> },
    SharedExponent { families: Vec<SharedExponentFamily<T>> },
    Aggregated { fits: Vec<AggregatedFit<T>> },
}

fn triples<T: Scalar>(points: &[&EfficiencyPoint]) -> Vec<(T, T, T)> {
    points
        .iter()
        .map(|p| (T::lit(p.sigma), T::lit(p.model_size), T::lit(p.data)))
        .collect()
}

/// Points grouped by task, then by the threshold's rank within that task's grid.
fn by_task_and_level(points: &[EfficiencyPoint]) -> BTreeMap<String, Vec<(f64, Vec<&EfficiencyPoint>)>> {
    let mut tmp: BTreeMap<String, BTreeMap<u64, (f64, Vec<&EfficiencyPoint>)>> = BTreeMap::new();
    for p in points {
        // Thresholds are nonnegative, so the bit pattern orders like the value.
        tmp.entry(p.task_id.clone())
            .or_default()
            .entry(p.threshold.to_bits())
            .or_insert_with(|| (p.threshold, Vec::new()))
            .1
            .push(p);
    }
    tmp.into_iter()
        .map(|(task, levels)| (task, levels.into_values().collect()))
        .collect()
}

/// Fits data efficiency per threshold level.
///
/// `points` should hold one data requirement per `(task, σ, N, J)` (see
/// [`crate::preprocess::best_over_batch`]). Independent mode needs a single task
/// and fits each threshold separately. The multi-task modes pair up thresholds
/// by their rank within each task's grid.
pub fn fit_data_efficiency<T: Scalar>(
    points: &[EfficiencyPoint],
    mode: FitMode,
    options: FitOptions,
) -> Result<DataFitOutcome<T>> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let tasks = by_task_and_level(points);
    match mode {
        FitMode::Independent => {
            if tasks.len() != 1 {
                return Err(Error::Argument(format!(
                    "independent mode fits one task at a time, got {}",
                    tasks.len()
                )));
            }
            let levels = tasks.into_values().next().unwrap();
            let fits = levels
                .iter()
                .map(|(j, pts)| fit_data_surface(&triples::<T>(pts), T::lit(*j), options))
                .collect::<Result<Vec<_>>>()?;
            Ok(DataFitOutcome::Independent { fits })
        }
        FitMode::SharedExponent | FitMode::Aggregated => {
            if tasks.len() < 2 {
                return Err(Error::Argument(format!(
                    "{mode:?} mode needs at least 2 tasks, got {}",
                    tasks.len()
                )));
            }
            let n_levels = tasks.values().map(Vec::len).min().unwrap_or(0);
            if tasks.values().any(|l| l.len() != n_levels) {
                return Err(Error::Argument(
                    "tasks must share the same number of threshold levels".into(),
                ));
            }
            let names: Vec<String> = tasks.keys().cloned().collect();
            if mode == FitMode::SharedExponent {
                let families = (0..n_levels)
                    .map(|lvl| {
                        let per_task: Vec<(String, f64, Vec<(T, T, T)>)> = names
                            .iter()
                            .map(|t| {
                                let (j, pts) = &tasks[t][lvl];
                                (t.clone(), *j, triples::<T>(pts))
                            })
                            .collect();
                        fit_shared_exponent(&per_task, options)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(DataFitOutcome::SharedExponent { families })
            } else {
                let fits = (0..n_levels)
                    .map(|lvl| {
                        let tables: BTreeMap<String, Vec<EfficiencyPoint>> = names
                            .iter()
                            .map(|t| (t.clone(), tasks[t][lvl].1.iter().map(|p| (*p).clone()).collect()))
                            .collect();
                        let thresholds: BTreeMap<String, T> =
                            names.iter().map(|t| (t.clone(), T::lit(tasks[t][lvl].0))).collect();
                        let (normed, norm) = normalize_across_tasks::<T>(&tables)?;
                        let refs: Vec<&EfficiencyPoint> = normed.iter().collect();
                        let mean_j = thresholds.values().copied().sum::<T>()
                            / T::from_usize(thresholds.len()).unwrap();
                        let report = fit_data_surface(&triples::<T>(&refs), mean_j, options)?;
                        Ok(AggregatedFit {
                            report,
                            normalization: norm,
                            thresholds,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(DataFitOutcome::Aggregated { fits })
            }
        }
    }
}

/// Shared-exponent fit over `(task, threshold, points)` groups.
pub fn fit_shared_exponent<T: Scalar>(
    per_task: &[(String, f64, Vec<(T, T, T)>)],
    options: FitOptions,
) -> Result<SharedExponentFamily<T>> {
    if per_task.len() < 2 {
        return Err(Error::Argument("shared-exponent fit needs at least 2 tasks".into()));
    }
    let mut samples = Vec::new();
    let mut targets = Vec::new();
    for (g, (_, _, pts)) in per_task.iter().enumerate() {
        if pts.len() < 3 {
            return Err(Error::Argument(format!(
                "task {} has {} points; need at least 3",
                per_task[g].0,
                pts.len()
            )));
        }
        for p in pts {
            samples.push(Sample::grouped(vec![p.0, p.1], g));
            targets.push(p.2);
        }
    }
    let model = SharedDataEfficiency { groups: per_task.len() };
    let res = fitkit::minimize(&FitProblem {
        model: &model,
        samples: &samples,
        targets: &targets,
        options,
    })?;
    let p = &res.params;
    let per = per_task
        .iter()
        .enumerate()
        .map(|(g, (name, j, _))| {
            let o = 2 + 3 * g;
            (
                name.clone(),
                TaskScales {
                    d_min: p[o],
                    a: p[o + 1],
                    b: p[o + 2],
                    threshold: T::lit(*j),
                },
            )
        })
        .collect();
    let unstable = p[0] < T::lit(UNSTABLE_EXPONENT) || p[1] < T::lit(UNSTABLE_EXPONENT);
    Ok(SharedExponentFamily {
        alpha: p[0],
        beta: p[1],
        per_task: per,
        unstable,
        diagnostics: res,
    })
}

/// Rescales each task's data requirements so its median matches the median of
/// the per-task medians.
pub fn normalize_across_tasks<T: Scalar>(
    tables: &BTreeMap<String, Vec<EfficiencyPoint>>,
) -> Result<(Vec<EfficiencyPoint>, AggregateNormalization<T>)> {
    if tables.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut medians = BTreeMap::new();
    for (env, pts) in tables {
        let d: Vec<f64> = pts.iter().map(|p| p.data).collect();
        let med = lower_median(&d).ok_or_else(|| Error::Argument(format!("task {env} has no points")))?;
        if !(med > 0.0) {
            return Err(Error::Argument(format!("task {env} has non-positive median")));
        }
        medians.insert(env.clone(), med);
    }
    let meds: Vec<f64> = medians.values().copied().collect();
    let global = lower_median(&meds).expect("nonempty");
    let mut out = Vec::new();
    for (env, pts) in tables {
        let factor = global / medians[env];
        out.extend(pts.iter().map(|p| EfficiencyPoint {
            data: p.data * factor,
            data_std: p.data_std.map(|s| s * factor),
            ..p.clone()
        }));
    }
    Ok((
        out,
        AggregateNormalization {
            per_env_median: medians.into_iter().map(|(k, v)| (k, T::lit(v))).collect(),
            global_median: T::lit(global),
            median_convention: "lower".into(),
        },
    ))
}

/// Mean absolute relative error `mean(|pred - actual| / actual)`.
pub fn relative_error<T: Scalar>(predicted: &[T], actual: &[T]) -> Result<T> {
    if predicted.len() != actual.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} observations",
            predicted.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    if actual.iter().chain(predicted).any(|v| !(*v > T::zero())) {
        return Err(Error::Argument("relative error needs positive values".into()));
    }
    let sum: T = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (*p - *a).abs() / *a)
        .sum();
    Ok(sum / T::from_usize(actual.len()).unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinSide {
    Below,
    Optimal,
    Above,
}

/// A multiplicative interval `[lo·B*, hi·B*]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBin {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub side: BinSide,
}

impl SensitivityBin {
    /// Closed interval membership; an arm on a shared edge goes to the bin nearer `B*`.
    fn contains(&self, ratio: f64) -> bool {
        match self.side {
            BinSide::Below => ratio > self.lo && ratio <= self.hi,
            BinSide::Above => ratio >= self.lo && ratio < self.hi,
            BinSide::Optimal => false,
        }
    }
}

/// Batch-size ranges relative to the predicted `B*`, from far below to far above.
pub fn default_sensitivity_bins() -> Vec<SensitivityBin> {
    let b = |label: &str, lo: f64, hi: f64, side| SensitivityBin {
        label: label.into(),
        lo,
        hi,
        side,
    };
    vec![
        b("[1/16 B*, 1/8 B*]", 1.0 / 16.0, 1.0 / 8.0, BinSide::Below),
        b("[1/8 B*, 1/4 B*]", 1.0 / 8.0, 1.0 / 4.0, BinSide::Below),
        b("[1/4 B*, 1/2 B*]", 1.0 / 4.0, 1.0 / 2.0, BinSide::Below),
        b("[1/2 B*, 2/3 B*]", 1.0 / 2.0, 2.0 / 3.0, BinSide::Below),
        b("B*", 1.0, 1.0, BinSide::Optimal),
        b("[1.5 B*, 2 B*]", 1.5, 2.0, BinSide::Above),
        b("[2 B*, 4 B*]", 2.0, 4.0, BinSide::Above),
        b("[4 B*, 8 B*]", 4.0, 8.0, BinSide::Above),
        b("[8 B*, 16 B*]", 8.0, 16.0, BinSide::Above),
    ]
}

/// Data requirement per batch size within one `(σ, N)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityGroup {
    pub sigma: f64,
    pub model_size: f64,
    pub arms: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub label: String,
    /// Mean over groups of `mean D in bin / D at the arm nearest B*`; `None` if no group populates the bin.
    pub ratio: Option<f64>,
    pub groups: usize,
}

/// Groups efficiency points at `threshold` by `(σ, N)`.
pub fn sensitivity_groups(points: &[EfficiencyPoint], threshold: f64) -> Vec<SensitivityGroup> {
    let mut map: BTreeMap<(u64, u64), SensitivityGroup> = BTreeMap::new();
    for p in points.iter().filter(|p| p.threshold == threshold) {
        map.entry((p.sigma.to_bits(), p.model_size.to_bits()))
            .or_insert_with(|| SensitivityGroup {
                sigma: p.sigma,
                model_size: p.model_size,
                arms: Vec::new(),
            })
            .arms
            .push((p.batch_size, p.data));
    }
    map.into_values().collect()
}

/// Data-efficiency ratios of off-optimal batch sizes relative to the arm
/// nearest the predicted `B*`, averaged over `(σ, N)` groups.
pub fn batch_sensitivity(
    groups: &[SensitivityGroup],
    fit: &BatchRuleFit<f64>,
    bins: &[SensitivityBin],
) -> Vec<SensitivityRow> {
    let mut sums = vec![(0.0_f64, 0usize); bins.len()];
    for g in groups.iter().filter(|g| !g.arms.is_empty()) {
        let b_star = fit.eval(g.sigma, g.model_size);
        let nearest = g
            .arms
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (a.1 .0 / b_star).ln().abs();
                let db = (b.1 .0 / b_star).ln().abs();
                da.total_cmp(&db)
            })
            .map(|(i, _)| i)
            .unwrap();
        let d_ref = g.arms[nearest].1;
        for (bin, acc) in bins.iter().zip(sums.iter_mut()) {
            let in_bin: Vec<f64> = if bin.side == BinSide::Optimal {
                vec![d_ref]
            } else {
                g.arms
                    .iter()
                    .enumerate()
                    .filter(|(i, (b, _))| *i != nearest && bin.contains(b / b_star))
                    .map(|(_, (_, d))| *d)
                    .collect()
            };
            if !in_bin.is_empty() {
                let mean = in_bin.iter().sum::<f64>() / in_bin.len() as f64;
                acc.0 += mean / d_ref;
                acc.1 += 1;
            }
        }
    }
    bins.iter()
        .zip(sums)
        .map(|(bin, (sum, n))| SensitivityRow {
            label: bin.label.clone(),
            ratio: (n > 0).then(|| sum / n as f64),
            groups: n,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn crawl_batch() -> BatchRuleFit<f64> {
        BatchRuleFit {
            a_b: 1680.64,
            b_b: 6.01e7,
            alpha_b: 0.30,
            beta_b: 1.12,
        }
    }

    #[test]
    fn batch_rule_printed_fit() {
        // Independent 50-digit evaluation of the printed formula at σ=1, N=2.3e6.
        let expected = 305.267_770_854_160_06;
        assert_relative_eq!(crawl_batch().eval(1.0, 2.3e6), expected, max_relative = 1e-12);
    }

    #[test]
    fn batch_rule_sigma_doubling() {
        let f = crawl_batch();
        let ratio = f.eval(6.0, 4e6) / f.eval(3.0, 4e6);
        assert_relative_eq!(ratio, 2f64.powf(-0.30), max_relative = 1e-13);
    }

    #[test]
    fn batch_rule_asymptote() {
        let f = crawl_batch();
        assert_relative_eq!(f.eval(2.0, 1e15), f.asymptote(2.0), max_relative = 1e-6);
    }

    #[test]
    fn data_fit_printed_crawl() {
        let factored = FactoredDataFit {
            d_min: 5.11e4,
            a: 2.59e5,
            alpha: 0.15,
            b: 1.70e7,
            beta: 0.75,
        };
        let fit = DataFit::from_factored(&factored, 780.0);
        // 50-digit evaluation of 5.11e4·(1 + (2.59e5/4)^0.15 + 1).
        let expected = 371_419.718_645_857_63;
        assert_relative_eq!(fit.eval(4.0, 1.70e7), expected, max_relative = 1e-12);
        assert_relative_eq!(factored.eval(4.0, 1.70e7), expected, max_relative = 1e-12);
        assert_relative_eq!(fit.n_term(1.70e7), fit.d_min, max_relative = 1e-12);
    }

    #[test]
    fn data_fit_asymptote() {
        let fit = DataFit {
            d_min: 100.0,
            a: 2.0,
            alpha: 0.5,
            b: 8.0,
            beta: 0.5,
            threshold: 1.0,
        };
        assert_relative_eq!(fit.eval(1e30, 1e30), 100.0, max_relative = 1e-12);
        assert_relative_eq!(fit.n_term(8.0), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let a = [3.0, 7.0, 11.0];
        let p: Vec<f64> = a.iter().map(|v| v * 1.1).collect();
        assert_relative_eq!(relative_error(&p, &a).unwrap(), 0.10, max_relative = 1e-12);
        assert_relative_eq!(relative_error(&[90.0, 220.0], &[100.0, 200.0]).unwrap(), 0.10, max_relative = 1e-12);
        assert!(relative_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn pt(task: &str, d: f64) -> EfficiencyPoint {
        EfficiencyPoint {
            task_id: task.into(),
            sigma: 1.0,
            model_size: 1.0,
            batch_size: 1.0,
            threshold: 1.0,
            data: d,
            data_std: None,
        }
    }

    #[test]
    fn across_tasks_single_env_identity() {
        let mut t = BTreeMap::new();
        t.insert("a".to_string(), vec![pt("a", 10.0), pt("a", 30.0), pt("a", 20.0)]);
        let (out, norm) = normalize_across_tasks::<f64>(&t).unwrap();
        assert_eq!(norm.global_median, 20.0);
        assert_eq!(out.iter().map(|p| p.data).collect::<Vec<_>>(), vec![10.0, 30.0, 20.0]);
    }

    #[test]
    fn across_tasks_two_envs_lower_median() {
        let mut t = BTreeMap::new();
        t.insert("a".to_string(), vec![pt("a", 100.0)]);
        t.insert("b".to_string(), vec![pt("b", 400.0), pt("b", 800.0)]);
        let (out, norm) = normalize_across_tasks::<f64>(&t).unwrap();
        assert_eq!(norm.per_env_median["a"], 100.0);
        assert_eq!(norm.per_env_median["b"], 400.0);
        assert_eq!(norm.global_median, 100.0);
        assert_eq!(out.iter().map(|p| p.data).collect::<Vec<_>>(), vec![100.0, 100.0, 200.0]);
    }

    #[test]
    fn across_tasks_empty_env() {
        let mut t = BTreeMap::new();
        t.insert("a".to_string(), vec![]);
        assert!(normalize_across_tasks::<f64>(&t).is_err());
    }

    #[test]
    fn sensitivity_self_ratio() {
        let fit = crawl_batch();
        let b_star = fit.eval(2.0, 5e6);
        let groups = vec![SensitivityGroup {
            sigma: 2.0,
            model_size: 5e6,
            arms: vec![(b_star, 1000.0)],
        }];
        let rows = batch_sensitivity(&groups, &fit, &default_sensitivity_bins());
        let opt = rows.iter().find(|r| r.label == "B*").unwrap();
        assert_eq!(opt.ratio, Some(1.0));
        assert!(rows.iter().filter(|r| r.label != "B*").all(|r| r.ratio.is_none()));
    }

    #[test]
    fn fit_mode_parse() {
        assert_eq!("shared".parse::<FitMode>().unwrap(), FitMode::SharedExponent);
        assert!("bogus".parse::<FitMode>().is_err());
    }
    fn grid() -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &s in &[0.5, 1.0, 2.0, 4.0, 8.0] {
            for &n in &[1e6, 3e6, 1e7, 3e7, 1e8] {
                out.push((s, n));
            }
        }
        out
    }

    #[test]
    fn batch_rule_refit_noiseless() {
        let truth = crawl_batch();
        let pts: Vec<_> = grid().into_iter().map(|(s, n)| (s, n, truth.eval(s, n))).collect();
        let r = fit_batch_rule(&pts, FitOptions::default()).unwrap();
        let f = r.fit;
        for (got, want) in [(f.a_b, truth.a_b), (f.b_b, truth.b_b), (f.alpha_b, truth.alpha_b), (f.beta_b, truth.beta_b)] {
            assert!(((got - want) / want).abs() < 1e-6, "{f:?}");
        }
    }

    #[test]
    fn batch_rule_needs_spread() {
        let pts = vec![(1.0, 1e6, 10.0), (1.0, 2e6, 11.0), (1.0, 3e6, 12.0), (1.0, 4e6, 13.0)];
        assert!(fit_batch_rule(&pts, FitOptions::default()).is_err());
    }

    #[test]
    fn data_surface_refit_noiseless() {
        let truth = DataFit::from_factored(
            &FactoredDataFit { d_min: 5.11e4, a: 2.59e5, alpha: 0.15, b: 1.70e7, beta: 0.75 },
            1.0,
        );
        let pts: Vec<_> = grid().into_iter().map(|(s, n)| (s, n, truth.eval(s, n))).collect();
        let r = fit_data_surface(&pts, 1.0, FitOptions::default()).unwrap();
        assert!((r.fit.alpha - 0.15).abs() < 1e-6 && (r.fit.beta - 0.75).abs() < 1e-6, "{:?}", r.fit);
        assert!(!r.unstable);
    }

    #[test]
    fn flat_in_sigma_is_unstable() {
        let pts: Vec<_> = grid().into_iter().map(|(s, n)| (s, n, 1e5 + (3e7 / n).powf(0.8) * 1e4)).collect();
        let r = fit_data_surface(&pts, 1.0, FitOptions::default()).unwrap();
        assert!(r.unstable, "{:?}", r.fit);
    }
}
