//! Seed-resampling bootstrap for the uncertainty-adjusted best batch size and
//! for data-efficiency standard deviations.
//!
//! Replicate `k` draws from its own ChaCha8 stream `(rng_seed, k)`, so results
//! do not depend on how replicates are scheduled across threads.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Cell;
use crate::preprocess::{aggregate_seeds, data_efficiency, EfficiencyPoint, ProcessedCurve, ThresholdGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub rng_seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 100,
            rng_seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Argument("bootstrap needs at least one replicate".into()));
        }
        Ok(())
    }
}

/// Generator for replicate `index` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `n` indices drawn uniformly with replacement from `0..n`.
pub fn resample_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Draws `curves.len()` curves with replacement.
pub fn resample_seeds<R: Rng + ?Sized>(curves: &[ProcessedCurve], rng: &mut R) -> Result<Vec<ProcessedCurve>> {
    if curves.is_empty() {
        return Err(Error::Argument("cannot resample an empty set of curves".into()));
    }
    Ok(resample_indices(curves.len(), rng)
        .into_iter()
        .map(|i| curves[i].clone())
        .collect())
}

/// `exp(mean(log x))`.
///
/// Logs are summed in sorted order so the result does not depend on the order
/// of `values`, and a constant input is returned unchanged.
pub fn geometric_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    if values.iter().all(|v| *v == values[0]) {
        return Some(values[0]);
    }
    let mut logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    logs.sort_by(f64::total_cmp);
    let mean_log = logs.iter().sum::<f64>() / values.len() as f64;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(mean_log.exp().clamp(lo, hi))
}

/// Population standard deviation; `None` for an empty slice.
pub fn std_dev(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBatchResult {
    pub sigma: f64,
    pub model_size: f64,
    pub b_bootstrap: f64,
    /// `(threshold, std of the winning arm's D_J across replicates)`.
    pub per_threshold_std: Vec<(f64, f64)>,
    pub replicate_choices: Vec<u32>,
    pub dropped_replicates: usize,
    pub rng_seed: u64,
}

/// Per-seed first-crossing steps, indexed `[seed][threshold]`.
fn seed_matrix(curves: &[ProcessedCurve], grid: &ThresholdGrid) -> Result<Vec<Vec<Option<u64>>>> {
    curves
        .iter()
        .map(|c| {
            grid.thresholds
                .iter()
                .map(|&j| data_efficiency(c, j))
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

fn resampled_estimates<R: Rng + ?Sized>(
    matrix: &[Vec<Option<u64>>],
    n_thresholds: usize,
    rng: &mut R,
) -> Vec<Option<f64>> {
    let picks = resample_indices(matrix.len(), rng);
    (0..n_thresholds)
        .map(|j| {
            let col: Vec<Option<u64>> = picks.iter().map(|&i| matrix[i][j]).collect();
            aggregate_seeds(&col)
        })
        .collect()
}

/// Bootstrap-optimal batch size for one `(σ, N)` cell.
///
/// `arms` maps batch size to the processed seed curves run at that size. Each
/// replicate resamples seeds within every arm, picks the arm needing the least
/// data to reach the last grid threshold (ties go to the smaller batch), and
/// records the winner's `D_J` at every threshold. Replicates where no arm
/// reaches the last threshold are dropped.
pub fn bootstrap_best_batch(
    cell: Cell,
    arms: &BTreeMap<u32, Vec<ProcessedCurve>>,
    grid: &ThresholdGrid,
    cfg: &BootstrapConfig,
) -> Result<BootstrapBatchResult> {
    cfg.validate()?;
    if grid.is_empty() {
        return Err(Error::Argument("empty threshold grid".into()));
    }
    let nj = grid.len();
    let matrices: Vec<(u32, Vec<Vec<Option<u64>>>)> = arms
        .iter()
        .filter(|(_, c)| !c.is_empty())
        .map(|(&b, c)| Ok((b, seed_matrix(c, grid)?)))
        .collect::<Result<_>>()?;
    let reachable = matrices
        .iter()
        .any(|(_, m)| m.iter().any(|row| row[nj - 1].is_some()));
    if !reachable {
        return Err(Error::Estimation(format!(
            "utd={} N={}: no arm has a seed reaching threshold {}",
            cell.utd,
            cell.model_size,
            grid.last()
        )));
    }

    let replicates: Vec<Option<(u32, Vec<Option<f64>>)>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = replicate_rng(cfg.rng_seed, k);
            let mut best: Option<(u32, Vec<Option<f64>>)> = None;
            for (b, m) in &matrices {
                let est = resampled_estimates(m, nj, &mut rng);
                if let Some(d) = est[nj - 1] {
                    let better = match &best {
                        None => true,
                        Some((_, cur)) => d < cur[nj - 1].unwrap_or(f64::INFINITY),
                    };
                    if better {
                        best = Some((*b, est));
                    }
                }
            }
            best
        })
        .collect();

    let kept: Vec<&(u32, Vec<Option<f64>>)> = replicates.iter().flatten().collect();
    let dropped = replicates.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::Estimation(format!(
            "utd={} N={}: every bootstrap replicate was censored",
            cell.utd, cell.model_size
        )));
    }
    let choices: Vec<u32> = kept.iter().map(|(b, _)| *b).collect();
    let as_f64: Vec<f64> = choices.iter().map(|&b| b as f64).collect();
    let b_bootstrap = geometric_mean(&as_f64).expect("batch sizes are positive");
    let per_threshold_std = grid
        .thresholds
        .iter()
        .enumerate()
        .filter_map(|(j, &thr)| {
            let vals: Vec<f64> = kept.iter().filter_map(|(_, est)| est[j]).collect();
            std_dev(&vals).map(|s| (thr, s))
        })
        .collect();

    Ok(BootstrapBatchResult {
        sigma: cell.utd,
        model_size: cell.model_size,
        b_bootstrap,
        per_threshold_std,
        replicate_choices: choices,
        dropped_replicates: dropped,
        rng_seed: cfg.rng_seed,
    })
}

/// Bootstrap standard deviation of one arm's `D_J` at each threshold.
///
/// Replicates in which the arm is censored at a threshold do not contribute to
/// that threshold; `None` when no replicate reaches it.
pub fn bootstrap_arm_std(
    curves: &[ProcessedCurve],
    grid: &ThresholdGrid,
    cfg: &BootstrapConfig,
) -> Result<Vec<Option<f64>>> {
    cfg.validate()?;
    if curves.is_empty() {
        return Err(Error::Argument("arm has no curves".into()));
    }
    let nj = grid.len();
    let matrix = seed_matrix(curves, grid)?;
    let reps: Vec<Vec<Option<f64>>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|k| resampled_estimates(&matrix, nj, &mut replicate_rng(cfg.rng_seed, k)))
        .collect();
    Ok((0..nj)
        .map(|j| {
            let vals: Vec<f64> = reps.iter().filter_map(|r| r[j]).collect();
            std_dev(&vals)
        })
        .collect())
}

/// Fills `data_std` of every efficiency point from a per-arm bootstrap.
pub fn fill_data_std(
    points: &mut [EfficiencyPoint],
    processed: &BTreeMap<Cell, BTreeMap<u32, Vec<ProcessedCurve>>>,
    grid: &ThresholdGrid,
    cfg: &BootstrapConfig,
) -> Result<()> {
    let mut stds: BTreeMap<(Cell, u32), Vec<Option<f64>>> = BTreeMap::new();
    for (cell, arms) in processed {
        for (&b, curves) in arms {
            stds.insert((*cell, b), bootstrap_arm_std(curves, grid, cfg)?);
        }
    }
    for p in points.iter_mut() {
        let cell = Cell {
            utd: p.sigma,
            model_size: p.model_size,
        };
        let j = grid.thresholds.iter().position(|&t| t == p.threshold);
        if let (Some(s), Some(j)) = (stds.get(&(cell, p.batch_size as u32)), j) {
            p.data_std = s[j];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RunKey;

    fn curve(batch: u32, seed: i64, cross: u64) -> ProcessedCurve {
        ProcessedCurve {
            key: RunKey {
                task_id: "t".into(),
                utd: 1.0,
                model_size: 1e6,
                batch_size: batch,
                seed,
            },
            points: vec![(cross / 2, 100.0), (cross, 800.0)],
            monotone: true,
        }
    }

    fn cell() -> Cell {
        Cell {
            utd: 1.0,
            model_size: 1e6,
        }
    }

    fn grid() -> ThresholdGrid {
        ThresholdGrid {
            thresholds: vec![400.0, 800.0],
        }
    }

    #[test]
    fn single_curve_resample() {
        let c = vec![curve(64, 0, 1000)];
        let mut rng = replicate_rng(7, 0);
        assert_eq!(resample_seeds(&c, &mut rng).unwrap(), c);
        assert!(resample_seeds(&[], &mut rng).is_err());
    }

    #[test]
    fn resample_is_deterministic() {
        let c: Vec<_> = (0..5).map(|s| curve(64, s, 1000 + s as u64)).collect();
        let a = resample_seeds(&c, &mut replicate_rng(11, 3)).unwrap();
        let b = resample_seeds(&c, &mut replicate_rng(11, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_choice() {
        let mut arms = BTreeMap::new();
        arms.insert(32, vec![curve(32, 0, 3000), curve(32, 1, 3000)]);
        arms.insert(64, vec![curve(64, 0, 1000), curve(64, 1, 1000)]);
        let r = bootstrap_best_batch(cell(), &arms, &grid(), &BootstrapConfig::default()).unwrap();
        assert_eq!(r.b_bootstrap, 64.0);
        assert!(r.replicate_choices.iter().all(|&b| b == 64));
        assert!(r.per_threshold_std.iter().all(|&(_, s)| s == 0.0));
        assert_eq!(r.dropped_replicates, 0);
    }

    #[test]
    fn ties_go_to_smaller_batch() {
        let mut arms = BTreeMap::new();
        arms.insert(32, vec![curve(32, 0, 1000)]);
        arms.insert(64, vec![curve(64, 0, 1000)]);
        let r = bootstrap_best_batch(cell(), &arms, &grid(), &BootstrapConfig::default()).unwrap();
        assert_eq!(r.b_bootstrap, 32.0);
    }

    #[test]
    fn nothing_reaches_top() {
        let mut arms = BTreeMap::new();
        let mut c = curve(32, 0, 1000);
        c.points[1].1 = 500.0;
        arms.insert(32, vec![c]);
        assert!(matches!(
            bootstrap_best_batch(cell(), &arms, &grid(), &BootstrapConfig::default()),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn geometric_mean_split() {
        let v: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 32.0 } else { 64.0 }).collect();
        assert!((geometric_mean(&v).unwrap() - 2048f64.sqrt()).abs() < 1e-9);
        assert_eq!(geometric_mean(&[]), None);
    }

    #[test]
    fn std_dev_basics() {
        assert_eq!(std_dev(&[3.0, 3.0]), Some(0.0));
        assert_eq!(std_dev(&[1.0, 3.0]), Some(1.0));
    }
}
