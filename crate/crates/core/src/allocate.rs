//! Compute model, the three allocation solvers, iso-data contours and the
//! budget frontier.
//!
//! All solvers walk the one-parameter family of compute-optimal points for a
//! fixed data budget. With `E = D − d_min` that family is
//!
//! ```text
//! σ(E) = a·((1 + α/β)/E)^{1/α},   N(E) = b·((1 + β/α)/E)^{1/β}
//! ```
//!
//! so every solution satisfies `N = (β b^β / (α a^α))^{1/β} σ^{α/β}` by construction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitkit::fit_power_law;
use crate::scalar::{lower_median, Scalar};
use crate::scaling_laws::{BatchRuleFit, DataFit};

/// `C = k·σ·N·D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeModel<T> {
    pub k: T,
}

impl<T: Scalar> Default for ComputeModel<T> {
    fn default() -> Self {
        Self { k: T::one() }
    }
}

impl<T: Scalar> ComputeModel<T> {
    pub fn new(k: T) -> Result<Self> {
        if !(k > T::zero()) || !k.is_finite() {
            return Err(Error::Argument(format!("k must be positive, got {k}")));
        }
        Ok(Self { k })
    }
}

pub fn compute_flops<T: Scalar>(model: &ComputeModel<T>, sigma: T, n: T, data: T) -> T {
    model.k * sigma * n * data
}

/// FLOPs-equivalent cost of one environment step from measured throughput:
/// `(FLOPs per gradient step × gradient steps/s) / environment steps/s`.
pub fn delta_from_throughput(flops_per_grad_step: f64, grad_steps_per_sec: f64, env_steps_per_sec: f64) -> Result<f64> {
    if [flops_per_grad_step, grad_steps_per_sec, env_steps_per_sec]
        .iter()
        .any(|v| !(*v > 0.0) || !v.is_finite())
    {
        return Err(Error::Argument("throughput figures must be positive".into()));
    }
    Ok(flops_per_grad_step * grad_steps_per_sec / env_steps_per_sec)
}

/// Default log-uniform search box; solutions outside it carry a warning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub sigma: (f64, f64),
    pub n: (f64, f64),
}

impl Default for SearchBox {
    fn default() -> Self {
        Self {
            sigma: (1e-3, 1e3),
            n: (1e3, 1e12),
        }
    }
}

impl SearchBox {
    fn contains<T: Scalar>(&self, sigma: T, n: T) -> bool {
        let (s, n) = (sigma.as_f64(), n.as_f64());
        s >= self.sigma.0 && s <= self.sigma.1 && n >= self.n.0 && n <= self.n.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSolution<T> {
    pub sigma_star: T,
    pub n_star: T,
    pub data: T,
    pub compute: T,
    /// `F = C + δ·D` for budget minimization.
    pub budget: Option<T>,
    /// The data or compute constraint holds with equality.
    pub active_constraint: bool,
    /// False when the uniqueness argument does not cover the fit's exponents.
    pub certified: bool,
    pub warnings: Vec<String>,
}

/// Points on the compute-optimal family, indexed by `E = D − d_min`.
#[derive(Debug, Clone, Copy)]
struct Relation<T> {
    sigma_hat: T,
    n_hat: T,
    alpha: T,
    beta: T,
    d_min: T,
    /// `1/α + 1/β`.
    p: T,
}

impl<T: Scalar> Relation<T> {
    fn new(fit: &DataFit<T>) -> Result<Self> {
        check_fit(fit)?;
        let one = T::one();
        Ok(Self {
            sigma_hat: fit.a * (one + fit.alpha / fit.beta).powf(one / fit.alpha),
            n_hat: fit.b * (one + fit.beta / fit.alpha).powf(one / fit.beta),
            alpha: fit.alpha,
            beta: fit.beta,
            d_min: fit.d_min,
            p: one / fit.alpha + one / fit.beta,
        })
    }

    fn at(&self, e: T) -> (T, T) {
        let one = T::one();
        (
            self.sigma_hat * e.powf(-one / self.alpha),
            self.n_hat * e.powf(-one / self.beta),
        )
    }

    /// `ln C` at `E = exp(x)`.
    fn ln_compute(&self, k: T, x: T) -> T {
        k.ln() + self.sigma_hat.ln() + self.n_hat.ln() - self.p * x + (self.d_min + x.exp()).ln()
    }

    /// `d ln C / d ln E`.
    fn ln_compute_slope(&self, x: T) -> T {
        let e = x.exp();
        e / (self.d_min + e) - self.p
    }
}

fn check_fit<T: Scalar>(fit: &DataFit<T>) -> Result<()> {
    let ok = |v: T| v > T::zero() && v.is_finite();
    if !(ok(fit.a) && ok(fit.b) && ok(fit.alpha) && ok(fit.beta)) || !(fit.d_min >= T::zero()) {
        return Err(Error::Argument(format!("fit coefficients must be positive: {fit:?}")));
    }
    Ok(())
}

fn solution<T: Scalar>(
    fit: &DataFit<T>,
    model: &ComputeModel<T>,
    sigma: T,
    n: T,
    active: bool,
    certified: bool,
    warnings: Vec<String>,
) -> AllocationSolution<T> {
    let data = fit.eval(sigma, n);
    let mut sol = AllocationSolution {
        sigma_star: sigma,
        n_star: n,
        data,
        compute: compute_flops(model, sigma, n, data),
        budget: None,
        active_constraint: active,
        certified,
        warnings,
    };
    if !SearchBox::default().contains(sigma, n) {
        sol.warnings.push(format!("optimum (σ={sigma}, N={n}) lies outside the default search box"));
    }
    sol
}

/// Bisection for a sign change of `f` on `[lo, hi]` (`f(lo) < 0 < f(hi)` or the reverse).
fn bisect<T: Scalar>(mut lo: T, mut hi: T, f: impl Fn(T) -> T) -> T {
    let f_lo_neg = f(lo) < T::zero();
    let half = T::lit(0.5);
    for _ in 0..400 {
        let mid = lo + (hi - lo) * half;
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < T::zero()) == f_lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + (hi - lo) * half
}

/// Expands `x` from `start` by doubling steps in direction `dir` until `pred` holds.
fn expand<T: Scalar>(start: T, dir: T, pred: impl Fn(T) -> bool) -> Option<T> {
    let mut step = T::one();
    for _ in 0..64 {
        let x = start + dir * step;
        if pred(x) {
            return Some(x);
        }
        step *= T::lit(2.0);
        if step > T::lit(1400.0) {
            break;
        }
    }
    None
}

/// Minimal-compute `(σ, N)` achieving data requirement `d0`.
pub fn optimal_for_data_budget<T: Scalar>(fit: &DataFit<T>, model: &ComputeModel<T>, d0: T) -> Result<AllocationSolution<T>> {
    let rel = Relation::new(fit)?;
    let e = d0 - fit.d_min;
    if !(e > T::zero()) {
        return Err(Error::Infeasible(format!(
            "data budget {d0} does not exceed the asymptote d_min = {}",
            fit.d_min
        )));
    }
    if fit.alpha >= T::one() && fit.beta >= T::one() {
        let (s, n) = split_search(fit, e);
        return Ok(solution(
            fit,
            model,
            s,
            n,
            true,
            false,
            vec!["both exponents are at least 1; closed form not certified, used numerical search".into()],
        ));
    }
    let (s, n) = rel.at(e);
    Ok(solution(fit, model, s, n, true, true, Vec::new()))
}

/// Minimizes `ln σ + ln N` over splits of `E` between the two power-law terms.
fn split_search<T: Scalar>(fit: &DataFit<T>, e: T) -> (T, T) {
    let one = T::one();
    let point = |z: T| {
        // z is the logit of the σ-term's share of E.
        let share = one / (one + (-z).exp());
        let u = e * share;
        let v = e * (one - share);
        (fit.a * u.powf(-one / fit.alpha), fit.b * v.powf(-one / fit.beta))
    };
    let cost = |z: T| {
        let (s, n) = point(z);
        s.ln() + n.ln()
    };
    let z = golden_section(T::lit(-40.0), T::lit(40.0), cost);
    point(z)
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section<T: Scalar>(mut lo: T, mut hi: T, f: impl Fn(T) -> T) -> T {
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let tol = T::lit(1e-10);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..500 {
        if (hi - lo).abs() <= tol * (lo.abs() + hi.abs()).max(T::one()) {
            break;
        }
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / T::lit(2.0)
}

/// Smallest data requirement reachable with compute at most `c0`.
pub fn optimal_for_compute_budget<T: Scalar>(
    fit: &DataFit<T>,
    model: &ComputeModel<T>,
    c0: T,
) -> Result<AllocationSolution<T>> {
    let rel = Relation::new(fit)?;
    if !(c0 > T::zero()) || !c0.is_finite() {
        return Err(Error::Argument(format!("compute budget must be positive, got {c0}")));
    }
    let target = c0.ln();
    let h = |x: T| rel.ln_compute(model.k, x) - target;
    let mut warnings = Vec::new();
    let certified = fit.alpha < T::one() || fit.beta < T::one();
    if !certified {
        warnings.push("both exponents are at least 1; optimum not certified".into());
    }
    let x0 = fit.d_min.max(T::min_positive_value()).ln();
    // ln C falls with E until E/(d_min+E) reaches p; past that it rises.
    let x_turn = if rel.p < T::one() {
        Some((rel.p * fit.d_min / (T::one() - rel.p)).ln())
    } else {
        None
    };
    let hi = match x_turn {
        Some(xt) => {
            if h(xt) > T::zero() {
                return Err(Error::Infeasible(format!(
                    "compute budget {c0} is below the minimum achievable compute {}",
                    rel.ln_compute(model.k, xt).exp()
                )));
            }
            xt
        }
        None => expand(x0, T::one(), |x| h(x) <= T::zero()).ok_or_else(|| {
            Error::Infeasible(format!("compute budget {c0} is below the infimum of achievable compute"))
        })?,
    };
    let lo = expand(hi.min(x0), -T::one(), |x| h(x) > T::zero())
        .ok_or_else(|| Error::Optimization {
            iterations: 64,
            message: "could not bracket the compute constraint".into(),
        })?;
    let x = if h(hi) == T::zero() { hi } else { bisect(lo, hi, h) };
    let (s, n) = rel.at(x.exp());
    Ok(solution(fit, model, s, n, true, certified, warnings))
}

/// Minimizes `F = k·σ·N·D + δ·D` over `(σ, N)`.
pub fn minimize_budget<T: Scalar>(fit: &DataFit<T>, model: &ComputeModel<T>, delta: T) -> Result<AllocationSolution<T>> {
    let rel = Relation::new(fit)?;
    if !(delta > T::zero()) || !delta.is_finite() {
        return Err(Error::Argument(format!("δ must be positive, got {delta}")));
    }
    let mut warnings = Vec::new();
    let certified = fit.alpha < T::one() && fit.beta < T::one();
    if !certified {
        warnings.push("an exponent is at least 1; uniqueness of the optimum is not guaranteed".into());
    }
    // dF/d ln E = C·(d ln C/d ln E) + δ·E.
    let slope = |x: T| {
        let c = rel.ln_compute(model.k, x).exp();
        c * rel.ln_compute_slope(x) + delta * x.exp()
    };
    let x0 = fit.d_min.max(T::min_positive_value()).ln();
    let (lo, hi) = if slope(x0) < T::zero() {
        let hi = expand(x0, T::one(), |x| slope(x) > T::zero());
        (Some(x0), hi)
    } else {
        (expand(x0, -T::one(), |x| slope(x) < T::zero()), Some(x0))
    };
    let (Some(lo), Some(hi)) = (lo, hi) else {
        return Err(Error::Optimization {
            iterations: 64,
            message: "budget objective has no interior stationary point".into(),
        });
    };
    let x = bisect(lo, hi, slope);
    let (s, n) = rel.at(x.exp());
    let mut sol = solution(fit, model, s, n, false, certified, warnings);
    sol.budget = Some(sol.compute + delta * sol.data);
    Ok(sol)
}

/// `(σ, N)` pairs with `D(σ, N) = d_target` on a log grid of `points` UTD values.
pub fn iso_data_contour<T: Scalar>(fit: &DataFit<T>, d_target: T, sigma_range: (T, T), points: usize) -> Result<Vec<(T, T)>> {
    check_fit(fit)?;
    if !(d_target > fit.d_min) {
        return Err(Error::Infeasible(format!(
            "contour target {d_target} does not exceed d_min = {}",
            fit.d_min
        )));
    }
    if points < 2 || !(sigma_range.0 > T::zero()) || !(sigma_range.1 > sigma_range.0) {
        return Err(Error::Argument("contour needs a positive σ range and at least 2 points".into()));
    }
    let (l0, l1) = (sigma_range.0.ln(), sigma_range.1.ln());
    let steps = T::from_usize(points - 1).unwrap();
    let out: Vec<(T, T)> = (0..points)
        .filter_map(|i| {
            let sigma = (l0 + (l1 - l0) * T::from_usize(i).unwrap() / steps).exp();
            let rest = d_target - fit.d_min - fit.sigma_term(sigma);
            (rest > T::zero()).then(|| (sigma, fit.b * rest.powf(-T::one() / fit.beta)))
        })
        .collect();
    if out.is_empty() {
        return Err(Error::Infeasible(format!("no point in the σ range reaches D = {d_target}")));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint<T> {
    pub threshold: T,
    pub budget: T,
    pub solution: AllocationSolution<T>,
}

/// Budget-optimal allocation per threshold, sorted by threshold. Unstable fits
/// are skipped with a warning.
pub fn budget_frontier<T: Scalar>(
    fits: &[DataFit<T>],
    delta: T,
    model: &ComputeModel<T>,
) -> Result<(Vec<FrontierPoint<T>>, Vec<String>)> {
    if fits.len() < 2 {
        return Err(Error::Argument(format!("frontier needs fits for at least 2 thresholds, got {}", fits.len())));
    }
    let mut sorted = fits.to_vec();
    sorted.sort_by(|a, b| a.threshold.partial_cmp(&b.threshold).unwrap_or(std::cmp::Ordering::Equal));
    let results: Vec<Result<Option<FrontierPoint<T>>>> = sorted
        .par_iter()
        .map(|fit| {
            if fit.is_unstable() {
                return Ok(None);
            }
            let sol = minimize_budget(fit, model, delta)?;
            Ok(Some(FrontierPoint {
                threshold: fit.threshold,
                budget: sol.budget.expect("budget solver sets F"),
                solution: sol,
            }))
        })
        .collect();
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for (fit, r) in sorted.iter().zip(results) {
        match r? {
            Some(p) => out.push(p),
            None => warnings.push(format!("skipping threshold {}: unstable fit", fit.threshold)),
        }
    }
    Ok((out, warnings))
}

/// `y = (F / scale)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierLaw<T> {
    pub scale: T,
    pub exponent: T,
    /// R² in log space over all frontier points, held-out ones included.
    pub r_squared: T,
    /// R² over the held-out top points alone.
    pub held_out_r_squared: Option<T>,
}

impl<T: Scalar> FrontierLaw<T> {
    pub fn eval(&self, budget: T) -> T {
        (budget / self.scale).powf(self.exponent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierLaws<T> {
    pub c_law: FrontierLaw<T>,
    pub d_law: FrontierLaw<T>,
    pub sigma_law: FrontierLaw<T>,
    pub n_law: FrontierLaw<T>,
    pub n_fit: usize,
    pub n_extrapolate: usize,
}

/// Power laws of the optimal compute, data, UTD and model size against budget,
/// fitted on all but the `n_extrapolate` largest budgets.
pub fn fit_frontier_laws<T: Scalar>(frontier: &[FrontierPoint<T>], n_extrapolate: usize) -> Result<FrontierLaws<T>> {
    if frontier.len() <= n_extrapolate {
        return Err(Error::Argument(format!(
            "frontier of {} points cannot hold out {n_extrapolate}",
            frontier.len()
        )));
    }
    let n_fit = frontier.len() - n_extrapolate;
    if n_fit < 2 {
        return Err(Error::Argument("frontier laws need at least 2 fitted points".into()));
    }
    let mut pts: Vec<&FrontierPoint<T>> = frontier.iter().collect();
    pts.sort_by(|a, b| a.budget.partial_cmp(&b.budget).unwrap_or(std::cmp::Ordering::Equal));
    let f: Vec<T> = pts.iter().map(|p| p.budget).collect();
    let law = |get: &dyn Fn(&AllocationSolution<T>) -> T| -> Result<FrontierLaw<T>> {
        let y: Vec<T> = pts.iter().map(|p| get(&p.solution)).collect();
        let fit = fit_power_law(&f[..n_fit], &y[..n_fit])?;
        let held = (n_extrapolate > 0).then(|| fit.r_squared_on(&f[n_fit..], &y[n_fit..]));
        Ok(FrontierLaw {
            scale: fit.scale,
            exponent: -fit.exponent,
            r_squared: fit.r_squared_on(&f, &y),
            held_out_r_squared: held,
        })
    };
    Ok(FrontierLaws {
        c_law: law(&|s| s.compute)?,
        d_law: law(&|s| s.data)?,
        sigma_law: law(&|s| s.sigma_star)?,
        n_law: law(&|s| s.n_star)?,
        n_fit,
        n_extrapolate,
    })
}

/// Resource-scaling strategies compared against the compute-optimal allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy<T> {
    ComputeOptimal,
    /// Compute-optimal `(σ, N)` trained at a constant batch size, penalized by
    /// `1 + κ·ln(B/B̃)²` against the batch rule.
    FixedBatchComputeOptimal {
        batch_size: T,
        batch_rule: BatchRuleFit<T>,
        kappa: T,
    },
    SigmaOnly { n_fixed: T },
    NOnly { sigma_fixed: T },
}

impl<T: Scalar> Strategy<T> {
    pub fn name(&self) -> String {
        match self {
            Strategy::ComputeOptimal => "compute_optimal".into(),
            Strategy::FixedBatchComputeOptimal { batch_size, .. } => {
                format!("fixed_batch_compute_optimal(B={batch_size})")
            }
            Strategy::SigmaOnly { n_fixed } => format!("sigma_only(N={n_fixed})"),
            Strategy::NOnly { sigma_fixed } => format!("n_only(sigma={sigma_fixed})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow<T> {
    pub approach: String,
    /// `D(strategy) / D(compute_optimal)` per budget; `None` where infeasible.
    pub ratios: Vec<Option<T>>,
    pub average: Option<T>,
    pub median: Option<T>,
}

/// Solves `k·x·D(x) = c0` for the free coordinate `x` on a log bracket.
fn one_axis<T: Scalar>(c0: T, cost: impl Fn(T) -> T) -> Option<T> {
    let target = c0.ln();
    let g = |lx: T| cost(lx.exp()).ln() - target;
    let (lo, hi) = (T::lit(-700.0), T::lit(700.0));
    let (glo, ghi) = (g(lo), g(hi));
    if !(glo < T::zero() && ghi > T::zero()) {
        return None;
    }
    Some(bisect(lo, hi, g).exp())
}

fn strategy_data<T: Scalar>(fit: &DataFit<T>, model: &ComputeModel<T>, c0: T, s: &Strategy<T>, opt: &AllocationSolution<T>) -> Option<T> {
    match s {
        Strategy::ComputeOptimal => Some(opt.data),
        Strategy::FixedBatchComputeOptimal {
            batch_size,
            batch_rule,
            kappa,
        } => {
            let ideal = batch_rule.eval(opt.sigma_star, opt.n_star);
            let l = (*batch_size / ideal).ln();
            Some(opt.data * (T::one() + *kappa * l * l))
        }
        Strategy::SigmaOnly { n_fixed } => {
            let n = *n_fixed;
            let sigma = one_axis(c0, |x| compute_flops(model, x, n, fit.eval(x, n)))?;
            Some(fit.eval(sigma, n))
        }
        Strategy::NOnly { sigma_fixed } => {
            let sg = *sigma_fixed;
            let n = one_axis(c0, |x| compute_flops(model, sg, x, fit.eval(sg, x)))?;
            Some(fit.eval(sg, n))
        }
    }
}

/// Data-efficiency ratios of each strategy relative to the compute-optimal
/// allocation across compute budgets, with average and (lower) median.
pub fn compare_allocations<T: Scalar>(
    fit: &DataFit<T>,
    model: &ComputeModel<T>,
    budgets: &[T],
    strategies: &[Strategy<T>],
) -> Result<Vec<ComparisonRow<T>>> {
    if budgets.is_empty() {
        return Err(Error::EmptyInput);
    }
    let optima = budgets
        .par_iter()
        .map(|c0| optimal_for_compute_budget(fit, model, *c0))
        .collect::<Result<Vec<_>>>()?;
    Ok(strategies
        .iter()
        .map(|s| {
            let ratios: Vec<Option<T>> = budgets
                .iter()
                .zip(&optima)
                .map(|(c0, opt)| strategy_data(fit, model, *c0, s, opt).map(|d| d / opt.data))
                .collect();
            let ok: Vec<T> = ratios.iter().flatten().copied().collect();
            let average = (!ok.is_empty()).then(|| ok.iter().copied().sum::<T>() / T::from_usize(ok.len()).unwrap());
            ComparisonRow {
                approach: s.name(),
                median: lower_median(&ok),
                average,
                ratios,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn worked() -> DataFit<f64> {
        DataFit {
            d_min: 100.0,
            a: 2.0,
            alpha: 0.5,
            b: 8.0,
            beta: 0.5,
            threshold: 1.0,
        }
    }

    #[test]
    fn flops_examples() {
        let m = ComputeModel { k: 1.0 };
        assert_eq!(compute_flops(&m, 2.0, 1e6, 1e5), 2e11);
        let m2 = ComputeModel { k: 2.0 };
        assert_eq!(compute_flops(&m2, 2.0, 1e6, 1e5), 4e11);
        assert_relative_eq!(delta_from_throughput(1e9, 100.0, 50.0).unwrap(), 2e9);
        assert!(ComputeModel::new(0.0).is_err());
    }

    #[test]
    fn worked_data_budget() {
        let fit = worked();
        let sol = optimal_for_data_budget(&fit, &ComputeModel::default(), 200.0).unwrap();
        assert_relative_eq!(sol.sigma_star, 8e-4, max_relative = 1e-12);
        assert_relative_eq!(sol.n_star, 3.2e-3, max_relative = 1e-12);
        assert_relative_eq!(fit.sigma_term(sol.sigma_star), 50.0, max_relative = 1e-12);
        assert_relative_eq!(fit.n_term(sol.n_star), 50.0, max_relative = 1e-12);
        assert_relative_eq!(sol.data, 200.0, max_relative = 1e-12);
        assert!(sol.certified && sol.active_constraint);
    }

    #[test]
    fn symmetric_fit() {
        let fit = DataFit {
            d_min: 10.0,
            a: 5.0,
            alpha: 0.4,
            b: 5.0,
            beta: 0.4,
            threshold: 1.0,
        };
        let sol = optimal_for_data_budget(&fit, &ComputeModel::default(), 50.0).unwrap();
        let want = (2.0_f64 / 40.0).powf(1.0 / 0.4);
        assert_relative_eq!(sol.sigma_star / 5.0, want, max_relative = 1e-12);
        assert_relative_eq!(sol.n_star / 5.0, want, max_relative = 1e-12);
    }

    #[test]
    fn infeasible_data_budget() {
        assert!(matches!(
            optimal_for_data_budget(&worked(), &ComputeModel::default(), 100.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn steep_exponents_fall_back() {
        let fit = DataFit {
            alpha: 1.5,
            beta: 2.0,
            ..worked()
        };
        let sol = optimal_for_data_budget(&fit, &ComputeModel::default(), 200.0).unwrap();
        assert!(!sol.certified);
        assert_relative_eq!(sol.data, 200.0, max_relative = 1e-9);
        let rel = Relation::new(&fit).unwrap();
        let (s, n) = rel.at(100.0);
        assert_relative_eq!(sol.sigma_star, s, max_relative = 1e-6);
        assert_relative_eq!(sol.n_star, n, max_relative = 1e-6);
    }

    #[test]
    fn compute_budget_round_trip() {
        let fit = worked();
        let m = ComputeModel::default();
        let p1 = optimal_for_data_budget(&fit, &m, 300.0).unwrap();
        let p2 = optimal_for_compute_budget(&fit, &m, p1.compute).unwrap();
        assert_relative_eq!(p2.sigma_star, p1.sigma_star, max_relative = 1e-9);
        assert_relative_eq!(p2.n_star, p1.n_star, max_relative = 1e-9);
        assert_relative_eq!(p2.compute, p1.compute, max_relative = 1e-12);
    }

    #[test]
    fn compute_budget_infeasible_reports_minimum() {
        // 1/α + 1/β < 1: compute has a positive minimum along the family.
        let fit = DataFit {
            alpha: 3.0,
            beta: 3.0,
            ..worked()
        };
        let err = optimal_for_compute_budget(&fit, &ComputeModel::default(), 1e-30).unwrap_err();
        assert!(matches!(err, Error::Infeasible(ref m) if m.contains("minimum")), "{err}");
    }

    #[test]
    fn budget_on_relation() {
        let fit = worked();
        let sol = minimize_budget(&fit, &ComputeModel::default(), 0.01).unwrap();
        let rel_n = (fit.beta * fit.b.powf(fit.beta) / (fit.alpha * fit.a.powf(fit.alpha))).powf(1.0 / fit.beta)
            * sol.sigma_star.powf(fit.alpha / fit.beta);
        assert_relative_eq!(sol.n_star, rel_n, max_relative = 1e-12);
        assert_relative_eq!(sol.budget.unwrap(), sol.compute + 0.01 * sol.data, max_relative = 1e-12);
        assert!(minimize_budget(&fit, &ComputeModel::default(), 0.0).is_err());
    }

    #[test]
    fn contour_properties() {
        let fit = worked();
        let c = iso_data_contour(&fit, 200.0, (1e-5, 1e3), 200).unwrap();
        assert!(c.windows(2).all(|w| w[1].1 < w[0].1));
        for (s, n) in &c {
            assert_relative_eq!(fit.eval(*s, *n), 200.0, max_relative = 1e-9);
        }
        assert!(iso_data_contour(&fit, 90.0, (1e-5, 1e3), 20).is_err());
        let opt = optimal_for_data_budget(&fit, &ComputeModel::default(), 200.0).unwrap();
        let through = iso_data_contour(&fit, 200.0, (opt.sigma_star, opt.sigma_star * 2.0), 2).unwrap();
        assert_relative_eq!(through[0].1, opt.n_star, max_relative = 1e-12);
    }

    #[test]
    fn self_ratio_and_sigma_only() {
        let fit = DataFit {
            d_min: 1e4,
            a: 3.0,
            alpha: 0.6,
            b: 1e9,
            beta: 0.5,
            threshold: 1.0,
        };
        let m = ComputeModel::default();
        let opt = optimal_for_compute_budget(&fit, &m, 1e13).unwrap();
        let budgets = [1e13, 3e13, 1e14];
        let rows = compare_allocations(
            &fit,
            &m,
            &budgets,
            &[
                Strategy::ComputeOptimal,
                Strategy::SigmaOnly { n_fixed: opt.n_star / 100.0 },
            ],
        )
        .unwrap();
        assert!(rows[0].ratios.iter().all(|r| *r == Some(1.0)));
        assert_eq!(rows[0].average, Some(1.0));
        assert!(rows[1].ratios.iter().flatten().all(|r| *r > 1.0), "{:?}", rows[1]);
    }

    #[test]
    fn frontier_needs_two() {
        assert!(budget_frontier(&[worked()], 1.0, &ComputeModel::default()).is_err());
    }
}
