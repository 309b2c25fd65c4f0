use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Quantile by linear interpolation between order statistics at plotting
/// positions `(i - 0.5) / n` (Hazen): with 1-based position `h = n*p + 0.5`,
/// `Q = x[floor h] + frac(h) * (x[floor h + 1] - x[floor h])`, clamped to the
/// sample extremes.
pub fn quantile<S: Scalar>(sorted: &[S], p: S) -> S {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let n = sorted.len();
    let h = S::of_usize(n) * p + S::of(0.5);
    if h <= S::one() {
        return sorted[0];
    }
    if h >= S::of_usize(n) {
        return sorted[n - 1];
    }
    let lo = h.floor();
    let i = lo.to_usize().expect("position in range") - 1;
    sorted[i] + (h - lo) * (sorted[i + 1] - sorted[i])
}

/// Box-plot summary of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct BoxStats<S: Scalar> {
    pub n: usize,
    pub mean: S,
    pub median: S,
    pub q1: S,
    pub q3: S,
    pub iqr: S,
    /// `q1 - 1.5 * iqr`
    pub lower_fence: S,
    /// `q3 + 1.5 * iqr`
    pub upper_fence: S,
    /// Smallest observation not below the lower fence.
    pub lower_whisker: S,
    /// Largest observation not above the upper fence.
    pub upper_whisker: S,
    pub min: S,
    pub max: S,
}

impl<S: Scalar> BoxStats<S> {
    /// `None` for an empty sample.
    pub fn from_sample(values: &[S]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
        let n = sorted.len();
        let mean = sorted.iter().fold(S::zero(), |acc, &v| acc + v) / S::of_usize(n);
        let q1 = quantile(&sorted, S::of(0.25));
        let median = quantile(&sorted, S::of(0.5));
        let q3 = quantile(&sorted, S::of(0.75));
        let iqr = q3 - q1;
        let reach = S::of(1.5) * iqr;
        let (lower_fence, upper_fence) = (q1 - reach, q3 + reach);
        let lower_whisker = *sorted
            .iter()
            .find(|&&v| v >= lower_fence)
            .expect("q1 lies above the fence");
        let upper_whisker = *sorted
            .iter()
            .rev()
            .find(|&&v| v <= upper_fence)
            .expect("q3 lies below the fence");
        Some(Self {
            n,
            mean,
            median,
            q1,
            q3,
            iqr,
            lower_fence,
            upper_fence,
            lower_whisker,
            upper_whisker,
            min: sorted[0],
            max: sorted[n - 1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_point_sample() {
        let s = BoxStats::from_sample(&[0.8f64, 0.2, 0.6, 0.4]).unwrap();
        assert!((s.median - 0.5).abs() < 1e-12);
        assert!((s.mean - 0.5).abs() < 1e-12);
        assert!((s.q1 - 0.3).abs() < 1e-12);
        assert!((s.q3 - 0.7).abs() < 1e-12);
        assert_eq!((s.lower_whisker, s.upper_whisker), (0.2, 0.8));
    }

    #[test]
    fn single_value() {
        let s = BoxStats::from_sample(&[0.42f64]).unwrap();
        assert_eq!(
            (s.mean, s.median, s.q1, s.q3, s.iqr),
            (0.42, 0.42, 0.42, 0.42, 0.0)
        );
        assert!(BoxStats::<f64>::from_sample(&[]).is_none());
    }

    #[test]
    fn outlier_sits_outside_whiskers() {
        let s = BoxStats::from_sample(&[1.0f64, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(s.upper_whisker, 4.0);
        assert_eq!(s.max, 100.0);
    }

    #[test]
    fn works_for_f32() {
        let s = BoxStats::from_sample(&[0.2f32, 0.4, 0.6, 0.8]).unwrap();
        assert!((s.q1 - 0.3).abs() < 1e-6);
    }
}
