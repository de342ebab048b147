//! Positive-parameter least squares in log space.
//!
//! Inputs are mapped into `[0.5, 2]` in log space, targets are divided by
//! their (per-group) mean, parameters are optimized through softplus starting
//! from all-zero raw values, and the result is mapped back to raw units.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lbfgs::{lbfgs, LbfgsOptions, Termination};
use super::linalg::solve;
use super::models::{Model, Sample};
use super::normalize::{input_scale_or_fixed, InputScale, NormalizationState};
use super::softplus::{sigmoid, softplus};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub lbfgs: LbfgsOptions,
    /// Random restarts tried when the zero start does not reach `plateau_loss`.
    pub restarts: usize,
    pub plateau_loss: f64,
    pub seed: u64,
    /// Finish each start with damped Gauss-Newton steps on the same objective.
    pub polish: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            lbfgs: LbfgsOptions::default(),
            restarts: 8,
            plateau_loss: 1e-12,
            seed: 0,
            polish: true,
        }
    }
}

pub struct FitProblem<'a, T, M> {
    pub model: &'a M,
    pub samples: &'a [Sample<T>],
    pub targets: &'a [T],
    pub options: FitOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T> {
    pub family: String,
    pub param_names: Vec<String>,
    pub params: Vec<T>,
    /// Mean squared log-space residual on the raw data.
    pub loss: T,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    pub evaluations: usize,
    pub grad_norm: T,
    /// Which start produced the result (0 is the all-zero start).
    pub best_start: usize,
    pub starts_tried: usize,
    pub normalization: NormalizationState<T>,
    /// Objective trace of the winning start's quasi-Newton phase.
    pub history: Vec<T>,
}

impl<T: Scalar> FitResult<T> {
    pub fn param(&self, name: &str) -> Option<T> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.params[i])
    }
}

/// Log-space objective over raw (pre-softplus) parameters.
pub struct LogObjective<'a, T, M> {
    model: &'a M,
    samples: &'a [Sample<T>],
    log_targets: Vec<T>,
}

impl<'a, T: Scalar, M: Model<T>> LogObjective<'a, T, M> {
    pub fn new(model: &'a M, samples: &'a [Sample<T>], targets: &[T]) -> Self {
        Self {
            model,
            samples,
            log_targets: targets.iter().map(|y| y.ln()).collect(),
        }
    }

    /// Residuals `ln ŷ - ln y`; `None` if any prediction is not a positive finite number.
    pub fn residuals(&self, params: &[T]) -> Option<Vec<T>> {
        self.samples
            .iter()
            .zip(&self.log_targets)
            .map(|(s, ly)| {
                let pred = self.model.predict(params, s);
                (pred > T::zero() && pred.is_finite()).then(|| pred.ln() - *ly)
            })
            .collect()
    }

    /// Mean squared residual and its gradient with respect to raw parameters.
    pub fn value_and_gradient(&self, theta: &[T], grad: &mut [T]) -> T {
        let params: Vec<T> = theta.iter().map(|&t| softplus(t)).collect();
        let n = T::from_usize(self.samples.len()).unwrap();
        let mut dpred = vec![T::zero(); params.len()];
        grad.iter_mut().for_each(|g| *g = T::zero());
        let mut loss = T::zero();
        for (s, ly) in self.samples.iter().zip(&self.log_targets) {
            let pred = self.model.predict(&params, s);
            if !(pred > T::zero() && pred.is_finite()) {
                return T::infinity();
            }
            let r = pred.ln() - *ly;
            loss += r * r;
            self.model.gradient(&params, s, &mut dpred);
            let w = T::lit(2.0) * r / pred;
            for (g, d) in grad.iter_mut().zip(&dpred) {
                *g += w * *d;
            }
        }
        for (g, &t) in grad.iter_mut().zip(theta) {
            *g = *g * sigmoid(t) / n;
        }
        loss / n
    }

    pub fn value(&self, theta: &[T]) -> T {
        let mut g = vec![T::zero(); theta.len()];
        self.value_and_gradient(theta, &mut g)
    }

    /// Jacobian of the residuals with respect to raw parameters, row per sample.
    fn jacobian(&self, theta: &[T]) -> Option<(Vec<T>, Vec<Vec<T>>)> {
        let params: Vec<T> = theta.iter().map(|&t| softplus(t)).collect();
        let sig: Vec<T> = theta.iter().map(|&t| sigmoid(t)).collect();
        let res = self.residuals(&params)?;
        let mut rows = Vec::with_capacity(self.samples.len());
        let mut d = vec![T::zero(); params.len()];
        for s in self.samples {
            let pred = self.model.predict(&params, s);
            self.model.gradient(&params, s, &mut d);
            rows.push(d.iter().zip(&sig).map(|(a, b)| *a * *b / pred).collect());
        }
        Some((res, rows))
    }
}

/// Levenberg-Marquardt refinement of a quasi-Newton solution.
fn polish<T: Scalar, M: Model<T>>(obj: &LogObjective<'_, T, M>, theta: Vec<T>, max_iter: usize) -> (Vec<T>, usize) {
    let mut theta = theta;
    let mut f = obj.value(&theta);
    let mut lambda = T::lit(1e-3);
    let mut iters = 0;
    let np = theta.len();
    for _ in 0..max_iter {
        let Some((res, jac)) = obj.jacobian(&theta) else { break };
        let mut jtj = vec![vec![T::zero(); np]; np];
        let mut jtr = vec![T::zero(); np];
        for (row, r) in jac.iter().zip(&res) {
            for i in 0..np {
                jtr[i] += row[i] * *r;
                for j in 0..np {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..np {
                a[i][i] += lambda * (jtj[i][i] + T::lit(1e-30));
            }
            let rhs: Vec<T> = jtr.iter().map(|v| -*v).collect();
            let Some(step) = solve(a, rhs) else {
                lambda *= T::lit(10.0);
                continue;
            };
            let cand: Vec<T> = theta.iter().zip(&step).map(|(a, b)| *a + *b).collect();
            let fc = obj.value(&cand);
            if fc.is_finite() && fc < f {
                let rel = (f - fc) / f.max(T::min_positive_value());
                theta = cand;
                f = fc;
                lambda = (lambda / T::lit(3.0)).max(T::lit(1e-15));
                improved = rel > T::epsilon();
                break;
            }
            lambda *= T::lit(4.0);
        }
        iters += 1;
        if !improved {
            break;
        }
    }
    (theta, iters)
}

struct StartOutcome<T> {
    theta: Vec<T>,
    loss: T,
    termination: Termination,
    iterations: usize,
    evaluations: usize,
    grad_norm: T,
    history: Vec<T>,
}

fn run_start<T: Scalar, M: Model<T>>(obj: &LogObjective<'_, T, M>, theta0: Vec<T>, opts: &FitOptions) -> StartOutcome<T> {
    let rep = lbfgs(|x, g| obj.value_and_gradient(x, g), &theta0, &opts.lbfgs);
    let mut termination = rep.termination;
    let mut iterations = rep.iterations;
    let mut theta = rep.x;
    if opts.polish && rep.f.is_finite() {
        let (t, it) = polish(obj, theta, 200);
        theta = t;
        iterations += it;
    }
    let mut g = vec![T::zero(); theta.len()];
    let loss = obj.value_and_gradient(&theta, &mut g);
    let grad_norm = g.iter().map(|v| *v * *v).sum::<T>().sqrt();
    if grad_norm <= T::lit(opts.lbfgs.grad_tol) {
        termination = Termination::GradientTolerance;
    }
    StartOutcome {
        theta,
        loss,
        termination,
        iterations,
        evaluations: rep.evaluations,
        grad_norm,
        history: rep.history,
    }
}

/// Fits `problem.model` to the targets; see the module docs for the procedure.
pub fn minimize<T: Scalar, M: Model<T>>(problem: &FitProblem<'_, T, M>) -> Result<FitResult<T>> {
    let model = problem.model;
    let samples = problem.samples;
    let targets = problem.targets;
    let np = model.n_params();
    if samples.len() != targets.len() {
        return Err(Error::Argument(format!(
            "{} inputs but {} targets",
            samples.len(),
            targets.len()
        )));
    }
    if samples.len() < np {
        return Err(Error::Argument(format!(
            "{} points cannot determine {np} parameters",
            samples.len()
        )));
    }
    if targets.iter().any(|y| !(*y > T::zero()) || !y.is_finite()) {
        return Err(Error::Argument("targets must be positive and finite".into()));
    }
    let ng = model.n_groups();
    if samples.iter().any(|s| s.group >= ng || s.x.len() < model.n_inputs()) {
        return Err(Error::Argument("sample group or arity out of range".into()));
    }

    let scales: Vec<InputScale<T>> = (0..model.n_inputs())
        .map(|d| {
            let col: Vec<T> = samples.iter().map(|s| s.x[d]).collect();
            input_scale_or_fixed(&col)
        })
        .collect::<Result<_>>()?;
    let mut y_mean = Vec::with_capacity(ng);
    for g in 0..ng {
        let ys: Vec<T> = samples
            .iter()
            .zip(targets)
            .filter(|(s, _)| s.group == g)
            .map(|(_, y)| *y)
            .collect();
        if ys.is_empty() {
            return Err(Error::Argument(format!("group {g} has no data")));
        }
        y_mean.push(ys.iter().copied().sum::<T>() / T::from_usize(ys.len()).unwrap());
    }
    let norm_samples: Vec<Sample<T>> = samples
        .iter()
        .map(|s| Sample {
            x: s.x.iter().zip(&scales).map(|(x, sc)| sc.apply(*x)).collect(),
            group: s.group,
        })
        .collect();
    let norm_targets: Vec<T> = samples
        .iter()
        .zip(targets)
        .map(|(s, y)| *y / y_mean[s.group])
        .collect();
    let obj = LogObjective::new(model, &norm_samples, &norm_targets);

    let zero = vec![T::zero(); np];
    if !obj.value(&zero).is_finite() {
        return Err(Error::Optimization {
            iterations: 0,
            message: "objective is not finite at the zero initialization".into(),
        });
    }

    let opts = problem.options;
    let first = run_start(&obj, zero, &opts);
    let mut outcomes = vec![first];
    let needs_restarts = !outcomes[0].termination.eq(&Termination::GradientTolerance)
        || outcomes[0].loss.as_f64() > opts.plateau_loss;
    if needs_restarts && opts.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let inits: Vec<Vec<T>> = (0..opts.restarts)
            .map(|_| {
                (0..np)
                    .map(|_| T::lit(StandardNormal.sample(&mut rng)))
                    .collect()
            })
            .collect();
        let more: Vec<StartOutcome<T>> = inits
            .into_par_iter()
            .map(|t0| run_start(&obj, t0, &opts))
            .collect();
        outcomes.extend(more);
    }
    let starts_tried = outcomes.len();
    let mut ranked: Vec<(usize, StartOutcome<T>)> = outcomes
        .into_iter()
        .enumerate()
        .filter(|(_, o)| o.loss.is_finite())
        .collect();
    if ranked.is_empty() {
        return Err(Error::Optimization {
            iterations: 0,
            message: "every start diverged to a non-finite objective".into(),
        });
    }
    ranked.sort_by(|a, b| a.1.loss.partial_cmp(&b.1.loss).unwrap().then(a.0.cmp(&b.0)));
    // Lowest-loss start whose raw-unit parameters are representable.
    let mut chosen = None;
    let mut last_bad = Vec::new();
    for (i, o) in ranked {
        let norm_params: Vec<T> = o.theta.iter().map(|&t| softplus(t)).collect();
        let params = model.denormalize(&norm_params, &scales, &y_mean);
        if params.iter().all(|p| *p > T::zero() && p.is_finite()) {
            chosen = Some((i, o, params));
            break;
        }
        last_bad = params;
    }
    let Some((best_start, best, params)) = chosen else {
        return Err(Error::Optimization {
            iterations: 0,
            message: format!("denormalized parameters are not positive and finite: {last_bad:?}"),
        });
    };
    let raw_obj = LogObjective::new(model, samples, targets);
    let loss = match raw_obj.residuals(&params) {
        Some(r) => r.iter().map(|v| *v * *v).sum::<T>() / T::from_usize(r.len()).unwrap(),
        None => best.loss,
    };

    Ok(FitResult {
        family: model.family().to_string(),
        param_names: model.param_names(),
        params,
        loss,
        converged: matches!(
            best.termination,
            Termination::GradientTolerance | Termination::NoProgress
        ),
        termination: best.termination,
        iterations: best.iterations,
        evaluations: best.evaluations,
        grad_norm: best.grad_norm,
        best_start,
        starts_tried,
        normalization: NormalizationState {
            inputs: scales,
            y_mean,
        },
        history: best.history,
    })
}

/// Shorthand for [`minimize`] with default options.
pub fn fit_model<T: Scalar, M: Model<T>>(model: &M, samples: &[Sample<T>], targets: &[T]) -> Result<FitResult<T>> {
    minimize(&FitProblem {
        model,
        samples,
        targets,
        options: FitOptions::default(),
    })
}
