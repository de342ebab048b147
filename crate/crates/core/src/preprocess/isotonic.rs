use crate::scalar::Scalar;

/// L2 isotonic regression by pool-adjacent-violators.
///
/// Returns the nondecreasing sequence closest to `values` in squared distance.
/// Empty input yields an empty output.
pub fn isotonic<T: Scalar>(values: &[T]) -> Vec<T> {
    // Blocks of (sum, count); adjacent blocks are merged while their means decrease.
    let mut sums: Vec<T> = Vec::with_capacity(values.len());
    let mut counts: Vec<usize> = Vec::with_capacity(values.len());
    for &v in values {
        sums.push(v);
        counts.push(1);
        while sums.len() > 1 {
            let n = sums.len();
            // mean[n-2] > mean[n-1]  <=>  s[n-2]*c[n-1] > s[n-1]*c[n-2]
            let left = sums[n - 2] * T::from_usize(counts[n - 1]).unwrap();
            let right = sums[n - 1] * T::from_usize(counts[n - 2]).unwrap();
            if left <= right {
                break;
            }
            let s = sums.pop().unwrap();
            let c = counts.pop().unwrap();
            sums[n - 2] += s;
            counts[n - 2] += c;
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in sums.into_iter().zip(counts) {
        let mean = s / T::from_usize(c).unwrap();
        out.extend(std::iter::repeat_n(mean, c));
    }
    out
}

pub fn is_nondecreasing<T: Scalar>(values: &[T]) -> bool {
    values.windows(2).all(|w| w[0] <= w[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(isotonic(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(isotonic(&[3.0, 1.0, 2.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(isotonic(&[5.0]), vec![5.0]);
        assert!(isotonic::<f64>(&[]).is_empty());
    }

    #[test]
    fn f32_works() {
        assert_eq!(isotonic(&[2.0_f32, 0.0, 4.0]), vec![1.0, 1.0, 4.0]);
    }

    #[test]
    fn pools_only_violating_run() {
        assert_eq!(isotonic(&[1.0, 4.0, 2.0, 5.0]), vec![1.0, 3.0, 3.0, 5.0]);
    }
}
