use serde::{Deserialize, Serialize};

use super::{student_t_sf_two_sided, StatsError};
use crate::Scalar;

/// Sample Pearson correlation with its two-sided significance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult<T> {
    pub r: T,
    pub p_value: T,
    pub n: usize,
}

/// Pearson correlation of `x` and `y`; the p-value uses
/// t = r √((n − 2) / (1 − r²)) on n − 2 degrees of freedom.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<CorrelationResult<T>, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewObservations { need: 3, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("pearson input".into()));
    }
    let nn = T::from_count(n);
    let mx = x.iter().fold(T::zero(), |acc, &v| acc + v) / nn;
    let my = y.iter().fold(T::zero(), |acc, &v| acc + v) / nn;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() {
        return Err(StatsError::ConstantInput("x"));
    }
    if syy == T::zero() {
        return Err(StatsError::ConstantInput("y"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt()))
        .max(-T::one())
        .min(T::one());
    let dof = n - 2;
    let p_value = if r.abs() == T::one() {
        T::zero()
    } else {
        let t = r * (T::from_count(dof) / (T::one() - r * r)).sqrt();
        student_t_sf_two_sided(t, dof)?
    };
    Ok(CorrelationResult { r, p_value, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_line() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let c = pearson(&x, &y).unwrap();
        assert!((c.r - 1.0).abs() < 1e-15);
        assert!(c.p_value < 1e-12);
    }

    #[test]
    fn hand_evaluated_example() {
        // dx = (-1.5,-.5,.5,1.5), dy = (-1.5,.5,-.5,1.5): sxy = 4, sxx = syy = 5
        let c = pearson::<f64>(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((c.r - 0.8).abs() < 1e-15);
        assert_eq!(c.n, 4);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::ConstantInput("x"))
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]),
            Err(StatsError::TooFewObservations { .. })
        ));
        assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }
}
