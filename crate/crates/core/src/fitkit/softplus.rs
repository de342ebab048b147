use crate::scalar::Scalar;

/// `log(1 + exp(x))`, stable for large `|x|`.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `p > 0`: `p + log(1 - exp(-p))`.
pub fn inverse_softplus<T: Scalar>(p: T) -> T {
    p + (-(-p).exp_m1()).ln()
}

/// Derivative of softplus, the logistic sigmoid.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_relative_eq!(softplus(0.0_f64), std::f64::consts::LN_2, max_relative = 1e-15);
        assert_relative_eq!(softplus(50.0_f64), 50.0, max_relative = 1e-12);
        assert!((inverse_softplus(softplus(-3.0_f64)) + 3.0).abs() < 1e-10);
        assert!(softplus(-800.0_f64) >= 0.0);
        assert!(softplus(800.0_f64).is_finite());
    }

    #[test]
    fn sigmoid_matches_difference_quotient() {
        for &x in &[-30.0_f64, -2.0, 0.0, 1.5, 40.0] {
            let h = 1e-6;
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((fd - sigmoid(x)).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn inverse_round_trip(log_p in -8.0_f64..8.0) {
            let p = 10f64.powf(log_p);
            let back = softplus(inverse_softplus(p));
            prop_assert!(((back - p) / p).abs() < 1e-12);
        }
    }
}
