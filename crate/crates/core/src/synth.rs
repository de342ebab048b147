//! Synthetic experiments with known ground truth.
//!
//! Learning curves follow `r(t) = R·t/(t + t_half)` in normalized return units,
//! so the first crossing of threshold `J` happens at `t_half·J/(R − J)`. The
//! truth surface describes the data requirement at `j_max`; other thresholds
//! scale it by `h(J)/h(j_max)` with `h(J) = J/(R − J)`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{reset_markers, LearningCurve, RunKey, RunSet, TaskMeta};
use crate::preprocess::{threshold_grid, EfficiencyPoint, ThresholdGrid};
use crate::scaling_laws::{BatchRuleFit, DataFit};

fn default_task() -> String {
    "synth".into()
}
fn default_optimal_return() -> f64 {
    1000.0
}
fn default_j_min() -> f64 {
    100.0
}
fn default_j_max() -> f64 {
    800.0
}
fn default_ceiling() -> f64 {
    1000.0
}
fn default_delta() -> f64 {
    1e9
}
fn default_thresholds() -> usize {
    20
}
fn default_kappa() -> f64 {
    0.5
}
fn default_evals() -> usize {
    300
}
fn default_seeds() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_task")]
    pub task_id: String,
    /// Data requirement at `j_max`; its `threshold` field is ignored.
    pub truth_data: DataFit<f64>,
    #[serde(default)]
    pub truth_batch: Option<BatchRuleFit<f64>>,
    pub sigma_grid: Vec<f64>,
    pub n_grid: Vec<f64>,
    pub b_grid: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds_per_cell: usize,
    /// Standard deviation of the multiplicative log-normal noise.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Gradient steps between resets.
    #[serde(default)]
    pub reset_period: Option<u64>,
    #[serde(default = "default_optimal_return")]
    pub optimal_return: f64,
    #[serde(default = "default_j_min")]
    pub j_min: f64,
    #[serde(default = "default_j_max")]
    pub j_max: f64,
    /// Asymptotic normalized return `R` of every curve.
    #[serde(default = "default_ceiling")]
    pub curve_ceiling: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_thresholds")]
    pub thresholds: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_evals")]
    pub evals_per_decade: usize,
}

impl SynthSpec {
    /// Minimal spec with library defaults for everything but the truth and grids.
    pub fn new(truth_data: DataFit<f64>, sigma_grid: Vec<f64>, n_grid: Vec<f64>, b_grid: Vec<f64>) -> Self {
        Self {
            task_id: default_task(),
            truth_data,
            truth_batch: None,
            sigma_grid,
            n_grid,
            b_grid,
            seeds_per_cell: default_seeds(),
            noise_sigma: 0.0,
            rng_seed: 0,
            reset_period: None,
            optimal_return: default_optimal_return(),
            j_min: default_j_min(),
            j_max: default_j_max(),
            curve_ceiling: default_ceiling(),
            delta: default_delta(),
            thresholds: default_thresholds(),
            kappa: default_kappa(),
            evals_per_decade: default_evals(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() || v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::Validation(format!("{name} must be a nonempty list of positive values")));
            }
            Ok(())
        };
        positive("sigma_grid", &self.sigma_grid)?;
        positive("n_grid", &self.n_grid)?;
        positive("b_grid", &self.b_grid)?;
        if self.b_grid.iter().any(|b| b.fract() != 0.0 || *b > u32::MAX as f64) {
            return Err(Error::Validation("b_grid entries must be integers".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Validation("noise_sigma must be nonnegative".into()));
        }
        if self.seeds_per_cell == 0 {
            return Err(Error::Validation("seeds_per_cell must be at least 1".into()));
        }
        if !(self.j_max < self.curve_ceiling) {
            return Err(Error::Validation("curve_ceiling must exceed j_max".into()));
        }
        if !(self.kappa >= 0.0) || self.evals_per_decade == 0 {
            return Err(Error::Validation("kappa must be nonnegative and evals_per_decade positive".into()));
        }
        let t = &self.truth_data;
        if ![t.d_min, t.a, t.alpha, t.b, t.beta].iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::Validation("truth_data coefficients must be positive".into()));
        }
        self.meta().validate()?;
        threshold_grid(&self.meta(), self.thresholds)?;
        Ok(())
    }

    pub fn meta(&self) -> TaskMeta {
        TaskMeta {
            task_id: self.task_id.clone(),
            optimal_return: self.optimal_return,
            j_min: self.j_min,
            j_max: self.j_max,
            delta: self.delta,
            reset_period: self.reset_period,
        }
    }

    pub fn grid(&self) -> Result<ThresholdGrid> {
        threshold_grid(&self.meta(), self.thresholds)
    }

    /// `J/(R − J)`.
    fn h(&self, j: f64) -> f64 {
        j / (self.curve_ceiling - j)
    }

    /// Ground-truth data-efficiency surface at threshold `j`.
    pub fn truth_at(&self, j: f64) -> DataFit<f64> {
        self.truth_data.scaled(self.h(j) / self.h(self.j_max), j)
    }

    /// Multiplicative data penalty of batch size `b` relative to the grid arm
    /// closest to the batch rule. Equal to 1 without a batch rule.
    pub fn batch_penalty(&self, sigma: f64, n: f64, b: f64) -> f64 {
        let Some(rule) = &self.truth_batch else {
            return 1.0;
        };
        let ideal = rule.eval(sigma, n);
        let pen = |x: f64| 1.0 + self.kappa * (x / ideal).ln().powi(2);
        let best = self.b_grid.iter().map(|x| pen(*x)).fold(f64::INFINITY, f64::min);
        pen(b) / best
    }

    /// Time constant of a curve whose `j_max` crossing is at `d_jmax`.
    pub fn t_half(&self, d_jmax: f64) -> f64 {
        d_jmax / self.h(self.j_max)
    }

    /// Intended first-crossing step (before evaluation-grid rounding) of `J`.
    pub fn crossing(&self, t_half: f64, j: f64) -> f64 {
        t_half * self.h(j)
    }

    fn cells(&self) -> Vec<(f64, f64)> {
        self.sigma_grid
            .iter()
            .flat_map(|s| self.n_grid.iter().map(move |n| (*s, *n)))
            .collect()
    }

    fn noise(&self) -> Normal<f64> {
        Normal::new(0.0, self.noise_sigma).expect("validated noise_sigma")
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Efficiency points for every cell, threshold, batch arm and seed replicate.
pub fn gen_efficiency_grid(spec: &SynthSpec) -> Result<Vec<EfficiencyPoint>> {
    spec.validate()?;
    let grid = spec.grid()?;
    let noise = spec.noise();
    let mut out = Vec::new();
    for (ci, (sigma, n)) in spec.cells().into_iter().enumerate() {
        let mut rng = stream_rng(spec.rng_seed, ci as u64);
        for &j in &grid.thresholds {
            let base = spec.truth_at(j).eval(sigma, n);
            for &b in &spec.b_grid {
                let pen = spec.batch_penalty(sigma, n, b);
                for _ in 0..spec.seeds_per_cell {
                    let eps = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    out.push(EfficiencyPoint {
                        task_id: spec.task_id.clone(),
                        sigma,
                        model_size: n,
                        batch_size: b,
                        threshold: j,
                        data: base * pen * eps.exp(),
                        data_std: None,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Generated runs plus the time constant behind each curve.
#[derive(Debug, Clone)]
pub struct SynthRuns {
    pub runset: RunSet,
    pub t_half: BTreeMap<RunKey, f64>,
}

/// Geometric evaluation steps covering `[lo, hi]`.
fn eval_steps(lo: f64, hi: f64, per_decade: usize) -> Vec<u64> {
    let pd = per_decade as f64;
    let k0 = (lo.max(1.0).log10() * pd).floor() as i64;
    let k1 = (hi.max(1.0).log10() * pd).ceil() as i64;
    let mut steps: Vec<u64> = (k0..=k1).map(|k| 10f64.powf(k as f64 / pd).round() as u64).collect();
    steps.dedup();
    steps.retain(|s| *s > 0);
    steps
}

fn one_curve(spec: &SynthSpec, key: RunKey, t_half: f64, lo: f64) -> Result<LearningCurve> {
    let hi = spec.crossing(t_half, spec.j_max) * 4.0;
    let steps = eval_steps(lo, hi, spec.evals_per_decade);
    let scale = spec.optimal_return / 1000.0;
    let base = |t: u64| spec.curve_ceiling * t as f64 / (t as f64 + t_half) * scale;
    let mut returns: Vec<f64> = steps.iter().map(|t| base(*t)).collect();
    let last = *steps.last().unwrap();
    let markers = spec
        .reset_period
        .map(|p| reset_markers(p, key.utd, last))
        .unwrap_or_default();
    let mut busy_until = 0usize;
    for &m in &markers {
        let i = steps.partition_point(|s| *s < m);
        if i == 0 || i < busy_until || i + 2 >= steps.len() {
            continue;
        }
        let pre = returns[i - 1];
        // 30% dip, partial recovery, then back on the base curve.
        returns[i] = 0.7 * pre;
        returns[i + 1] = 0.85 * pre;
        busy_until = i + 3;
    }
    let points = steps.into_iter().zip(returns).collect();
    let curve = LearningCurve::new(key, points)?;
    Ok(if spec.reset_period.is_some() {
        curve.with_reset_steps(markers)
    } else {
        curve
    })
}

/// Learning curves for every cell, batch arm and seed, with known time constants.
pub fn gen_learning_curves_with_truth(spec: &SynthSpec) -> Result<SynthRuns> {
    spec.validate()?;
    let noise = spec.noise();
    let nb = spec.b_grid.len() as u64;
    let ns = spec.seeds_per_cell as u64;
    let mut jobs = Vec::new();
    for (ci, (sigma, n)) in spec.cells().into_iter().enumerate() {
        for (bi, &b) in spec.b_grid.iter().enumerate() {
            for s in 0..spec.seeds_per_cell {
                let stream = (ci as u64 * nb + bi as u64) * ns + s as u64;
                let mut rng = stream_rng(spec.rng_seed, stream);
                let eps = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                let d = spec.truth_data.eval(sigma, n) * spec.batch_penalty(sigma, n, b) * eps.exp();
                let key = RunKey {
                    task_id: spec.task_id.clone(),
                    utd: sigma,
                    model_size: n,
                    batch_size: b as u32,
                    seed: s as i64,
                };
                jobs.push((key, spec.t_half(d)));
            }
        }
    }
    let lo = jobs
        .iter()
        .map(|(_, th)| spec.crossing(*th, spec.j_min))
        .fold(f64::INFINITY, f64::min)
        / 4.0;
    let curves = jobs
        .par_iter()
        .map(|(key, th)| one_curve(spec, key.clone(), *th, lo))
        .collect::<Result<Vec<_>>>()?;
    let t_half = jobs.into_iter().collect();
    Ok(SynthRuns {
        runset: RunSet::new(spec.meta(), curves)?,
        t_half,
    })
}

pub fn gen_learning_curves(spec: &SynthSpec) -> Result<RunSet> {
    Ok(gen_learning_curves_with_truth(spec)?.runset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{isotonic, normalize_returns, remove_reset_dips};

    fn spec() -> SynthSpec {
        SynthSpec::new(
            DataFit {
                d_min: 5e4,
                a: 3.0,
                alpha: 0.4,
                b: 2e6,
                beta: 0.7,
                threshold: 800.0,
            },
            vec![1.0, 4.0],
            vec![1e6, 1e7],
            vec![128.0, 256.0],
        )
    }

    #[test]
    fn noiseless_grid_equals_truth() {
        let s = spec();
        for p in gen_efficiency_grid(&s).unwrap() {
            assert_eq!(p.data, s.truth_at(p.threshold).eval(p.sigma, p.model_size));
        }
    }

    #[test]
    fn truth_at_jmax_is_truth() {
        let s = spec();
        let t = s.truth_at(s.j_max);
        assert!((t.d_min - s.truth_data.d_min).abs() < 1e-9 && (t.a - s.truth_data.a).abs() < 1e-12);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let mut s = spec();
        s.noise_sigma = 0.1;
        s.rng_seed = 7;
        let a = gen_efficiency_grid(&s).unwrap();
        let b = gen_efficiency_grid(&s).unwrap();
        assert_eq!(a, b);
        let ra = gen_learning_curves(&s).unwrap();
        let rb = gen_learning_curves(&s).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn curves_are_monotone_without_resets() {
        let rs = gen_learning_curves(&spec()).unwrap();
        for c in rs.curves.values() {
            assert!(c.points.windows(2).all(|w| w[1].1 >= w[0].1));
        }
    }

    #[test]
    fn dips_removed_restore_envelope() {
        let mut s = spec();
        s.reset_period = Some(200_000);
        let with = gen_learning_curves(&s).unwrap();
        s.reset_period = None;
        let without = gen_learning_curves(&s).unwrap();
        let meta = with.meta.clone();
        let mut dipped = 0;
        for (key, c) in &with.curves {
            let clean = remove_reset_dips(&normalize_returns(c, &meta)).unwrap();
            if clean.points.len() < c.points.len() {
                dipped += 1;
            }
            let base = normalize_returns(&without.curves[key], &meta);
            let kept: Vec<f64> = clean.points.iter().map(|p| p.1).collect();
            let reference: Vec<f64> = base
                .points
                .iter()
                .filter(|p| clean.points.binary_search_by_key(&p.0, |q| q.0).is_ok())
                .map(|p| p.1)
                .collect();
            let a = isotonic(&kept);
            let b = isotonic(&reference);
            assert_eq!(a.len(), b.len());
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
        }
        assert!(dipped > 0);
    }

    #[test]
    fn penalty_is_one_at_best_arm() {
        let mut s = spec();
        s.truth_batch = Some(BatchRuleFit {
            a_b: 1680.64,
            b_b: 6.01e7,
            alpha_b: 0.3,
            beta_b: 1.12,
        });
        let pens: Vec<f64> = s.b_grid.iter().map(|b| s.batch_penalty(1.0, 1e7, *b)).collect();
        assert!(pens.contains(&1.0) && pens.iter().all(|p| *p >= 1.0));
        s.kappa = 0.0;
        assert!(s.b_grid.iter().all(|b| s.batch_penalty(1.0, 1e7, *b) == 1.0));
    }

    #[test]
    fn spec_from_toml() {
        let text = r#"
sigma_grid = [1.0, 2.0]
n_grid = [1e6]
b_grid = [256]
noise_sigma = 0.05
[truth_data]
d_min = 1e4
a = 2.0
alpha = 0.5
b = 1e6
beta = 0.6
threshold = 800.0
"#;
        let s = SynthSpec::from_toml_str(text).unwrap();
        assert_eq!(s.b_grid, vec![256.0]);
        assert_eq!(s.thresholds, 20);
        assert!(SynthSpec::from_toml_str("sigma_grid = []").is_err());
    }
}
