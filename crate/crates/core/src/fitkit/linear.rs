//! Closed-form fits that are linear in log space.

use serde::{Deserialize, Serialize};

use super::linalg::solve;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `y = (scale / x)^exponent`, stored as the log-space line
/// `ln y = log_intercept - exponent · ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit<T> {
    pub scale: T,
    pub exponent: T,
    pub log_intercept: T,
    /// Coefficient of determination of the log-space line over the fitted points.
    pub r_squared: T,
}

impl<T: Scalar> PowerLawFit<T> {
    pub fn eval(&self, x: T) -> T {
        (self.log_intercept - self.exponent * x.ln()).exp()
    }

    /// R² of this law's log-space predictions against `(x, y)`.
    pub fn r_squared_on(&self, x: &[T], y: &[T]) -> T {
        let ly: Vec<T> = y.iter().map(|v| v.ln()).collect();
        let pred: Vec<T> = x.iter().map(|v| self.log_intercept - self.exponent * v.ln()).collect();
        r_squared(&ly, &pred)
    }
}

pub(crate) fn r_squared<T: Scalar>(obs: &[T], pred: &[T]) -> T {
    let n = T::from_usize(obs.len()).unwrap();
    let mean = obs.iter().copied().sum::<T>() / n;
    let ss_tot: T = obs.iter().map(|v| (*v - mean).powi(2)).sum();
    let ss_res: T = obs.iter().zip(pred).map(|(o, p)| (*o - *p).powi(2)).sum();
    if ss_tot == T::zero() {
        if ss_res == T::zero() {
            T::one()
        } else {
            T::neg_infinity()
        }
    } else {
        T::one() - ss_res / ss_tot
    }
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_power_law<T: Scalar>(x: &[T], y: &[T]) -> Result<PowerLawFit<T>> {
    if x.len() != y.len() {
        return Err(Error::Argument(format!("{} x values but {} y values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Argument("power-law fit needs at least 2 points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > T::zero()) || !v.is_finite()) {
        return Err(Error::Argument("power-law fit needs positive finite data".into()));
    }
    let lx: Vec<T> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<T> = y.iter().map(|v| v.ln()).collect();
    let n = T::from_usize(x.len()).unwrap();
    let mx = lx.iter().copied().sum::<T>() / n;
    let my = ly.iter().copied().sum::<T>() / n;
    let sxx: T = lx.iter().map(|v| (*v - mx).powi(2)).sum();
    if sxx <= T::epsilon() * mx.abs().max(T::one()).powi(2) * n {
        return Err(Error::Degenerate("all x values are equal".into()));
    }
    let sxy: T = lx.iter().zip(&ly).map(|(a, b)| (*a - mx) * (*b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let exponent = -slope;
    let pred: Vec<T> = lx.iter().map(|v| intercept + slope * *v).collect();
    Ok(PowerLawFit {
        scale: (intercept / exponent).exp(),
        exponent,
        log_intercept: intercept,
        r_squared: r_squared(&ly, &pred),
    })
}

/// `ln B = intercept + slope_sigma · ln σ + slope_n · ln N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLinearFit<T> {
    pub intercept: T,
    pub slope_sigma: T,
    pub slope_n: T,
}

impl<T: Scalar> LogLinearFit<T> {
    pub fn eval(&self, sigma: T, n: T) -> T {
        (self.intercept + self.slope_sigma * sigma.ln() + self.slope_n * n.ln()).exp()
    }
}

/// Ordinary least squares of `ln B` on `(1, ln σ, ln N)`.
pub fn fit_loglinear<T: Scalar>(inputs: &[(T, T)], targets: &[T]) -> Result<LogLinearFit<T>> {
    if inputs.len() != targets.len() {
        return Err(Error::Argument("inputs and targets differ in length".into()));
    }
    if inputs.len() < 3 {
        return Err(Error::Argument("log-linear fit needs at least 3 points".into()));
    }
    if inputs
        .iter()
        .flat_map(|(a, b)| [*a, *b])
        .chain(targets.iter().copied())
        .any(|v| !(v > T::zero()))
    {
        return Err(Error::Argument("log-linear fit needs positive data".into()));
    }
    // Center the regressors so the rank test is not fooled by large ln N offsets.
    let n = T::from_usize(inputs.len()).unwrap();
    let ls: Vec<T> = inputs.iter().map(|(s, _)| s.ln()).collect();
    let ln: Vec<T> = inputs.iter().map(|(_, m)| m.ln()).collect();
    let ly: Vec<T> = targets.iter().map(|y| y.ln()).collect();
    let ms = ls.iter().copied().sum::<T>() / n;
    let mn = ln.iter().copied().sum::<T>() / n;
    let my = ly.iter().copied().sum::<T>() / n;
    let cs: Vec<T> = ls.iter().map(|v| *v - ms).collect();
    let cn: Vec<T> = ln.iter().map(|v| *v - mn).collect();
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(x, y)| *x * *y).sum::<T>();
    let cy: Vec<T> = ly.iter().map(|v| *v - my).collect();
    let a = vec![vec![dot(&cs, &cs), dot(&cs, &cn)], vec![dot(&cn, &cs), dot(&cn, &cn)]];
    let rank_tol = T::lit(1e-10);
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if a[0][0] <= T::zero() || a[1][1] <= T::zero() || det <= rank_tol * a[0][0] * a[1][1] {
        return Err(Error::RankDeficient(
            "ln σ and ln N must both vary and not be collinear".into(),
        ));
    }
    let sol = solve(a, vec![dot(&cs, &cy), dot(&cn, &cy)])
        .ok_or_else(|| Error::RankDeficient("singular normal equations".into()))?;
    Ok(LogLinearFit {
        intercept: my - sol[0] * ms - sol[1] * mn,
        slope_sigma: sol[0],
        slope_n: sol[1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_power_law() {
        let x = [1.0_f64, 10.0, 100.0];
        let y: Vec<f64> = x.iter().map(|v| (10.0 / v).powf(0.5)).collect();
        let f = fit_power_law(&x, &y).unwrap();
        assert_relative_eq!(f.scale, 10.0, max_relative = 1e-12);
        assert_relative_eq!(f.exponent, 0.5, max_relative = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn two_points_interpolate() {
        let f = fit_power_law(&[2.0_f64, 5.0], &[3.0, 7.0]).unwrap();
        assert_relative_eq!(f.eval(2.0), 3.0, max_relative = 1e-12);
        assert_relative_eq!(f.eval(5.0), 7.0, max_relative = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_x() {
        assert!(matches!(fit_power_law(&[3.0_f64, 3.0], &[1.0, 2.0]), Err(Error::Degenerate(_))));
        assert!(fit_power_law(&[3.0_f64], &[1.0]).is_err());
    }

    #[test]
    fn loglinear_exact() {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for &s in &[1.0_f64, 2.0, 4.0, 8.0] {
            for &n in &[1e5_f64, 1e6, 1e7] {
                inputs.push((s, n));
                targets.push((2.0 - 0.5 * s.ln() + 0.25 * n.ln()).exp());
            }
        }
        let f = fit_loglinear(&inputs, &targets).unwrap();
        assert_relative_eq!(f.intercept, 2.0, max_relative = 1e-10);
        assert_relative_eq!(f.slope_sigma, -0.5, max_relative = 1e-10);
        assert_relative_eq!(f.slope_n, 0.25, max_relative = 1e-10);
    }

    #[test]
    fn loglinear_rank_deficient() {
        let inputs = [(2.0_f64, 1e5), (2.0, 1e6), (2.0, 1e7)];
        assert!(matches!(
            fit_loglinear(&inputs, &[1.0, 2.0, 3.0]),
            Err(Error::RankDeficient(_))
        ));
    }
}
