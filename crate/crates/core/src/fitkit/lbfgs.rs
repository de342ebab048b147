//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            grad_tol: 1e-10,
            max_iter: 2000,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    /// Objective stopped decreasing at working precision.
    NoProgress,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsReport<T> {
    pub x: Vec<T>,
    pub f: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Objective after each accepted iteration, starting with the initial value.
    pub history: Vec<T>,
}

impl<T> LbfgsReport<T> {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::GradientTolerance | Termination::NoProgress
        )
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

struct Probe<T> {
    step: T,
    f: T,
    dphi: T,
    x: Vec<T>,
    g: Vec<T>,
}

struct Search<'a, T, F> {
    objective: &'a mut F,
    x0: &'a [T],
    dir: &'a [T],
    f0: T,
    d0: T,
    c1: T,
    c2: T,
    evaluations: usize,
}

impl<'a, T: Scalar, F: FnMut(&[T], &mut [T]) -> T> Search<'a, T, F> {
    fn probe(&mut self, step: T) -> Probe<T> {
        let x: Vec<T> = self.x0.iter().zip(self.dir).map(|(a, d)| *a + step * *d).collect();
        let mut g = vec![T::zero(); x.len()];
        let mut f = (self.objective)(&x, &mut g);
        self.evaluations += 1;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            f = T::infinity();
        }
        let dphi = if f.is_finite() { dot(&g, self.dir) } else { T::zero() };
        Probe { step, f, dphi, x, g }
    }

    fn armijo(&self, p: &Probe<T>) -> bool {
        p.f <= self.f0 + self.c1 * p.step * self.d0
    }

    fn curvature(&self, p: &Probe<T>) -> bool {
        p.dphi.abs() <= -self.c2 * self.d0
    }

    fn run(&mut self, initial: T, max_iter: usize) -> Option<Probe<T>> {
        let two = T::lit(2.0);
        let mut prev = Probe {
            step: T::zero(),
            f: self.f0,
            dphi: self.d0,
            x: self.x0.to_vec(),
            g: Vec::new(),
        };
        let mut step = initial;
        for i in 0..max_iter {
            let cur = self.probe(step);
            if !self.armijo(&cur) || (i > 0 && cur.f >= prev.f) {
                return self.zoom(prev, cur, max_iter);
            }
            if self.curvature(&cur) {
                return Some(cur);
            }
            if cur.dphi >= T::zero() {
                return self.zoom(cur, prev, max_iter);
            }
            step = cur.step * two;
            prev = cur;
        }
        None
    }

    /// `lo` satisfies Armijo and has the lowest value seen; the minimizer lies between `lo` and `hi`.
    fn zoom(&mut self, mut lo: Probe<T>, mut hi: Probe<T>, max_iter: usize) -> Option<Probe<T>> {
        let tenth = T::lit(0.1);
        for _ in 0..max_iter {
            let width = hi.step - lo.step;
            if width.abs() <= T::epsilon() * lo.step.abs().max(hi.step.abs()) {
                break;
            }
            // Quadratic through (lo.f, lo.dphi, hi.f), safeguarded into the interior.
            let mut step = lo.step + width / T::lit(2.0);
            if hi.f.is_finite() {
                let denom = T::lit(2.0) * (hi.f - lo.f - lo.dphi * width);
                if denom > T::zero() {
                    let q = lo.step - lo.dphi * width * width / denom;
                    let a = lo.step + tenth * width;
                    let b = hi.step - tenth * width;
                    let (lo_b, hi_b) = if a < b { (a, b) } else { (b, a) };
                    if q.is_finite() {
                        step = q.max(lo_b).min(hi_b);
                    }
                }
            }
            let cur = self.probe(step);
            if !self.armijo(&cur) || cur.f >= lo.f {
                hi = cur;
            } else {
                if self.curvature(&cur) {
                    return Some(cur);
                }
                if cur.dphi * (hi.step - lo.step) >= T::zero() {
                    hi = lo;
                }
                lo = cur;
            }
        }
        // Accept the best sufficient-decrease point if the curvature test never passed.
        if lo.step > T::zero() && lo.f < self.f0 {
            Some(lo)
        } else {
            None
        }
    }
}

/// Minimizes `objective`, which returns `f(x)` and writes `∇f(x)` into its
/// second argument. Non-finite values are treated as `+inf` and make the line
/// search back off.
pub fn lbfgs<T, F>(mut objective: F, x0: &[T], opts: &LbfgsOptions) -> LbfgsReport<T>
where
    T: Scalar,
    F: FnMut(&[T], &mut [T]) -> T,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![T::zero(); n];
    let mut f = objective(&x, &mut g);
    let mut evaluations = 1;
    let mut history = vec![f];
    let grad_tol = T::lit(opts.grad_tol);

    let mut mem: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(opts.memory);
    let mut stagnant = 0usize;
    let mut iterations = 0usize;

    let report = |x, f, g: &[T], iterations, evaluations, termination, history| LbfgsReport {
        x,
        f,
        grad_norm: norm(g),
        iterations,
        evaluations,
        termination,
        history,
    };

    if !f.is_finite() {
        return report(x, f, &g, 0, evaluations, Termination::LineSearchFailed, history);
    }

    loop {
        if norm(&g) <= grad_tol {
            return report(x, f, &g, iterations, evaluations, Termination::GradientTolerance, history);
        }
        if iterations >= opts.max_iter {
            return report(x, f, &g, iterations, evaluations, Termination::MaxIterations, history);
        }

        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = *rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * *yi);
            alphas.push(a);
        }
        let gamma = match mem.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => T::one(),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
            let b = *rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * *si);
        }
        let mut dir: Vec<T> = q.into_iter().map(|v| -v).collect();
        let mut d0 = dot(&g, &dir);
        if !(d0 < T::zero()) {
            mem.clear();
            dir = g.iter().map(|v| -*v).collect();
            d0 = dot(&g, &dir);
        }

        let initial = if mem.is_empty() {
            T::one().min(T::one() / norm(&g))
        } else {
            T::one()
        };
        let mut search = Search {
            objective: &mut objective,
            x0: &x,
            dir: &dir,
            f0: f,
            d0,
            c1: T::lit(opts.c1),
            c2: T::lit(opts.c2),
            evaluations: 0,
        };
        let found = search.run(initial, opts.max_line_search);
        evaluations += search.evaluations;
        let Some(p) = found else {
            if !mem.is_empty() {
                mem.clear();
                continue;
            }
            let reason = if norm(&g) <= grad_tol.max(T::epsilon().sqrt() * f.abs().max(T::one())) {
                Termination::NoProgress
            } else {
                Termination::LineSearchFailed
            };
            return report(x, f, &g, iterations, evaluations, reason, history);
        };

        let s: Vec<T> = p.x.iter().zip(&x).map(|(a, b)| *a - *b).collect();
        let y: Vec<T> = p.g.iter().zip(&g).map(|(a, b)| *a - *b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * norm(&s) * norm(&y) {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, T::one() / sy));
        }

        let decrease = f - p.f;
        x = p.x;
        g = p.g;
        f = p.f;
        iterations += 1;
        history.push(f);

        if decrease <= T::epsilon() * f.abs().max(T::min_positive_value()) {
            stagnant += 1;
            if stagnant >= 5 {
                return report(x, f, &g, iterations, evaluations, Termination::NoProgress, history);
            }
        } else {
            stagnant = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn solves_rosenbrock() {
        let r = lbfgs(rosenbrock, &[-1.2, 1.0], &LbfgsOptions::default());
        assert!(r.converged(), "{:?}", r.termination);
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn history_is_nonincreasing() {
        let r = lbfgs(rosenbrock, &[-1.2, 1.0], &LbfgsOptions::default());
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_in_f32() {
        let f = |x: &[f32], g: &mut [f32]| {
            g[0] = 2.0 * (x[0] - 3.0);
            g[1] = 8.0 * (x[1] + 1.0);
            (x[0] - 3.0).powi(2) + 4.0 * (x[1] + 1.0).powi(2)
        };
        let opts = LbfgsOptions {
            grad_tol: 1e-5,
            ..Default::default()
        };
        let r = lbfgs(f, &[0.0_f32, 0.0], &opts);
        assert!((r.x[0] - 3.0).abs() < 1e-4 && (r.x[1] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn backs_off_from_non_finite_region() {
        // log barrier: infinite for x <= 0, minimum at x = 1.
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 1.0 - 1.0 / x[0];
            if x[0] <= 0.0 {
                f64::INFINITY
            } else {
                x[0] - x[0].ln()
            }
        };
        let r = lbfgs(f, &[20.0], &LbfgsOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-8, "{:?}", r);
    }
}
