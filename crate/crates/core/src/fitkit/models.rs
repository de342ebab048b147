//! Parametric families with analytic parameter gradients.
//!
//! Every family knows how to undo input/output normalization: given positive
//! parameters fitted on normalized data it returns the parameters of the same
//! family on raw data.

use super::normalize::InputScale;
use crate::scalar::Scalar;

/// One model input: real-valued coordinates plus a group index (task) used by
/// families with per-group parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub x: Vec<T>,
    pub group: usize,
}

impl<T> Sample<T> {
    pub fn new(x: Vec<T>) -> Self {
        Self { x, group: 0 }
    }

    pub fn grouped(x: Vec<T>, group: usize) -> Self {
        Self { x, group }
    }
}

pub trait Model<T: Scalar>: Sync {
    fn family(&self) -> &'static str;
    fn param_names(&self) -> Vec<String>;
    fn n_inputs(&self) -> usize;

    fn n_params(&self) -> usize {
        self.param_names().len()
    }

    fn n_groups(&self) -> usize {
        1
    }

    fn predict(&self, p: &[T], s: &Sample<T>) -> T;

    /// Writes `∂predict/∂p` into `g`.
    fn gradient(&self, p: &[T], s: &Sample<T>, g: &mut [T]);

    /// Maps parameters fitted on normalized inputs and mean-scaled targets
    /// (`y_mean[group]`) back to raw units.
    fn denormalize(&self, p: &[T], inputs: &[InputScale<T>], y_mean: &[T]) -> Vec<T>;
}

/// `y = c`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Constant;

impl<T: Scalar> Model<T> for Constant {
    fn family(&self) -> &'static str {
        "constant"
    }
    fn param_names(&self) -> Vec<String> {
        vec!["c".into()]
    }
    fn n_inputs(&self) -> usize {
        0
    }
    fn predict(&self, p: &[T], _s: &Sample<T>) -> T {
        p[0]
    }
    fn gradient(&self, _p: &[T], _s: &Sample<T>, g: &mut [T]) {
        g[0] = T::one();
    }
    fn denormalize(&self, p: &[T], _inputs: &[InputScale<T>], y_mean: &[T]) -> Vec<T> {
        vec![p[0] * y_mean[0]]
    }
}

/// `y = (a / x)^alpha`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PowerLaw;

impl<T: Scalar> Model<T> for PowerLaw {
    fn family(&self) -> &'static str {
        "power_law"
    }
    fn param_names(&self) -> Vec<String> {
        vec!["a".into(), "alpha".into()]
    }
    fn n_inputs(&self) -> usize {
        1
    }
    fn predict(&self, p: &[T], s: &Sample<T>) -> T {
        (p[0] / s.x[0]).powf(p[1])
    }
    fn gradient(&self, p: &[T], s: &Sample<T>, g: &mut [T]) {
        let y = self.predict(p, s);
        g[0] = y * p[1] / p[0];
        g[1] = y * (p[0] / s.x[0]).ln();
    }
    fn denormalize(&self, p: &[T], inputs: &[InputScale<T>], y_mean: &[T]) -> Vec<T> {
        let sc = inputs[0];
        let alpha = p[1] / sc.s;
        let a = (sc.m + sc.s * p[0].ln() + y_mean[0].ln() / alpha).exp();
        vec![a, alpha]
    }
}

/// `(a/x)^alpha` term and its partials with respect to `a` and `alpha`.
fn power_term<T: Scalar>(a: T, alpha: T, x: T) -> (T, T, T) {
    let ratio = a / x;
    let v = ratio.powf(alpha);
    (v, v * alpha / a, v * ratio.ln())
}

/// Undo input scaling and an output factor `ymean` on a `(a/x)^alpha` term.
fn denorm_term<T: Scalar>(a_norm: T, alpha_norm: T, sc: InputScale<T>, y_mean: T) -> (T, T) {
    let alpha = alpha_norm / sc.s;
    let a = (sc.m + sc.s * a_norm.ln() + y_mean.ln() / alpha).exp();
    (a, alpha)
}

/// Data-efficiency surface `D(σ, N) = d_min + (a/σ)^alpha + (b/N)^beta`.
///
/// Parameter order: `d_min, a, alpha, b, beta`. Inputs: `[σ, N]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DataEfficiency;

impl<T: Scalar> Model<T> for DataEfficiency {
    fn family(&self) -> &'static str {
        "data_efficiency"
    }
    fn param_names(&self) -> Vec<String> {
        ["d_min", "a", "alpha", "b", "beta"].map(String::from).to_vec()
    }
    fn n_inputs(&self) -> usize {
        2
    }
    fn predict(&self, p: &[T], s: &Sample<T>) -> T {
        p[0] + (p[1] / s.x[0]).powf(p[2]) + (p[3] / s.x[1]).powf(p[4])
    }
    fn gradient(&self, p: &[T], s: &Sample<T>, g: &mut [T]) {
        let (_, da, dalpha) = power_term(p[1], p[2], s.x[0]);
        let (_, db, dbeta) = power_term(p[3], p[4], s.x[1]);
        g[0] = T::one();
        g[1] = da;
        g[2] = dalpha;
        g[3] = db;
        g[4] = dbeta;
    }
    fn denormalize(&self, p: &[T], inputs: &[InputScale<T>], y_mean: &[T]) -> Vec<T> {
        let ym = y_mean[0];
        let (a, alpha) = denorm_term(p[1], p[2], inputs[0], ym);
        let (b, beta) = denorm_term(p[3], p[4], inputs[1], ym);
        vec![p[0] * ym, a, alpha, b, beta]
    }
}

/// Data-efficiency surface with `alpha, beta` shared across groups and
/// per-group `d_min, a, b`.
///
/// Parameter order: `alpha, beta`, then `d_min_g, a_g, b_g` for each group.
#[derive(Debug, Clone, Copy)]
pub struct SharedDataEfficiency {
    pub groups: usize,
}

impl<T: Scalar> Model<T> for SharedDataEfficiency {
    fn family(&self) -> &'static str {
        "data_efficiency_shared"
    }
    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["alpha".to_string(), "beta".to_string()];
        for g in 0..self.groups {
            names.push(format!("d_min[{g}]"));
            names.push(format!("a[{g}]"));
            names.push(format!("b[{g}]"));
        }
        names
    }
    fn n_inputs(&self) -> usize {
        2
    }
    fn n_groups(&self) -> usize {
        self.groups
    }
    fn predict(&self, p: &[T], s: &Sample<T>) -> T {
        let o = 2 + 3 * s.group;
        p[o] + (p[o + 1] / s.x[0]).powf(p[0]) + (p[o + 2] / s.x[1]).powf(p[1])
    }
    fn gradient(&self, p: &[T], s: &Sample<T>, g: &mut [T]) {
        g.iter_mut().for_each(|v| *v = T::zero());
        let o = 2 + 3 * s.group;
        let (_, da, dalpha) = power_term(p[o + 1], p[0], s.x[0]);
        let (_, db, dbeta) = power_term(p[o + 2], p[1], s.x[1]);
        g[0] = dalpha;
        g[1] = dbeta;
        g[o] = T::one();
        g[o + 1] = da;
        g[o + 2] = db;
    }
    fn denormalize(&self, p: &[T], inputs: &[InputScale<T>], y_mean: &[T]) -> Vec<T> {
        let alpha = p[0] / inputs[0].s;
        let beta = p[1] / inputs[1].s;
        let mut out = vec![alpha, beta];
        for g in 0..self.groups {
            let o = 2 + 3 * g;
            let ym = y_mean[g];
            let (a, _) = denorm_term(p[o + 1], p[0], inputs[0], ym);
            let (b, _) = denorm_term(p[o + 2], p[1], inputs[1], ym);
            out.extend([p[o] * ym, a, b]);
        }
        out
    }
}

/// Batch-size rule `B(σ, N) = a_B / (σ^alpha_B + b_B σ^alpha_B N^-beta_B)`.
///
/// Parameter order: `a_b, b_b, alpha_b, beta_b`. Inputs: `[σ, N]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BatchRule;

impl<T: Scalar> Model<T> for BatchRule {
    fn family(&self) -> &'static str {
        "batch_rule"
    }
    fn param_names(&self) -> Vec<String> {
        ["a_b", "b_b", "alpha_b", "beta_b"].map(String::from).to_vec()
    }
    fn n_inputs(&self) -> usize {
        2
    }
    fn predict(&self, p: &[T], s: &Sample<T>) -> T {
        let sp = s.x[0].powf(p[2]);
        p[0] / (sp + p[1] * sp * s.x[1].powf(-p[3]))
    }
    fn gradient(&self, p: &[T], s: &Sample<T>, g: &mut [T]) {
        let y = self.predict(p, s);
        let nb = s.x[1].powf(-p[3]);
        let q = T::one() + p[1] * nb;
        g[0] = y / p[0];
        g[1] = -y * nb / q;
        g[2] = -y * s.x[0].ln();
        g[3] = y * p[1] * nb * s.x[1].ln() / q;
    }
    fn denormalize(&self, p: &[T], inputs: &[InputScale<T>], y_mean: &[T]) -> Vec<T> {
        let alpha = p[2] / inputs[0].s;
        let beta = p[3] / inputs[1].s;
        let a = p[0] * y_mean[0] * (inputs[0].m * alpha).exp();
        let b = p[1] * (inputs[1].m * beta).exp();
        vec![a, b, alpha, beta]
    }
}
