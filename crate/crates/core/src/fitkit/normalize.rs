use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Normalized range in log space: the smallest input maps to 0.5, the largest to 2.
pub const NORM_LOW: f64 = 0.5;
pub const NORM_HIGH: f64 = 2.0;

/// Log-space affine map for one input dimension: `x' = exp((ln x - m) / s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputScale<T> {
    pub s: T,
    pub m: T,
}

impl<T: Scalar> InputScale<T> {
    pub fn identity() -> Self {
        Self { s: T::one(), m: T::zero() }
    }

    pub fn apply(&self, x: T) -> T {
        ((x.ln() - self.m) / self.s).exp()
    }

    pub fn invert(&self, x_norm: T) -> T {
        (self.m + self.s * x_norm.ln()).exp()
    }
}

/// Everything needed to map normalized-space fit parameters back to raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationState<T> {
    pub inputs: Vec<InputScale<T>>,
    /// Mean target per group; targets are divided by it before fitting.
    pub y_mean: Vec<T>,
}

/// Maps positive `x` into `[0.5, 2]` in log space.
pub fn normalize_inputs<T: Scalar>(x: &[T]) -> Result<(Vec<T>, InputScale<T>)> {
    let scale = input_scale(x)?;
    Ok((x.iter().map(|&v| scale.apply(v)).collect(), scale))
}

pub fn input_scale<T: Scalar>(x: &[T]) -> Result<InputScale<T>> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    if x.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
        return Err(Error::Argument("inputs must be positive and finite".into()));
    }
    let lo = x.iter().copied().fold(T::infinity(), T::min);
    let hi = x.iter().copied().fold(T::neg_infinity(), T::max);
    if lo == hi {
        return Err(Error::Degenerate(format!("all inputs equal {lo}")));
    }
    let (l, h) = (T::lit(NORM_LOW), T::lit(NORM_HIGH));
    let s = (hi.ln() - lo.ln()) / (h.ln() - l.ln());
    let m = lo.ln() - s * l.ln();
    Ok(InputScale { s, m })
}

/// Like [`input_scale`], but a single distinct value maps to 1 with `s = 1`.
pub fn input_scale_or_fixed<T: Scalar>(x: &[T]) -> Result<InputScale<T>> {
    match input_scale(x) {
        Err(Error::Degenerate(_)) => Ok(InputScale { s: T::one(), m: x[0].ln() }),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn powers_of_eight() {
        let (xn, st) = normalize_inputs(&[1.0_f64, 8.0, 64.0]).unwrap();
        for (a, b) in xn.iter().zip([0.5, 1.0, 2.0]) {
            assert_relative_eq!(*a, b, max_relative = 1e-14);
        }
        assert_relative_eq!(st.s, 3.0, max_relative = 1e-14);
    }

    #[test]
    fn fixed_points() {
        let (xn, st) = normalize_inputs(&[0.5_f64, 2.0]).unwrap();
        assert_relative_eq!(st.s, 1.0, max_relative = 1e-15);
        assert!(st.m.abs() < 1e-15);
        assert_relative_eq!(xn[0], 0.5, max_relative = 1e-15);
        assert_relative_eq!(xn[1], 2.0, max_relative = 1e-15);
    }

    #[test]
    fn degenerate() {
        assert!(matches!(normalize_inputs(&[5.0_f64, 5.0, 5.0]), Err(Error::Degenerate(_))));
        let st = input_scale_or_fixed(&[5.0_f64, 5.0]).unwrap();
        assert_relative_eq!(st.apply(5.0), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn invert_round_trip() {
        let st = input_scale(&[3.0_f64, 1e7]).unwrap();
        for x in [3.0, 17.0, 1e5, 1e7] {
            assert_relative_eq!(st.invert(st.apply(x)), x, max_relative = 1e-13);
        }
    }
}
