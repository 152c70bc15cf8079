//! Screen-space footprint of a projected Gaussian.
//!
//! The footprint is `exp(−q/2)` with its tangent line at the 3σ cutoff
//! (`q = 9`) subtracted and the result rescaled to peak at 1. It reaches zero
//! with zero slope at the cutoff, so the truncated splat stays continuously
//! differentiable in its mean and covariance.

use crate::scalar::Real;

/// Squared Mahalanobis radius of the 3σ cutoff.
pub const CUTOFF_Q: f64 = 9.0;

#[inline]
fn edge<T: Real>() -> T {
    T::lit((-0.5 * CUTOFF_Q).exp())
}

#[inline]
fn norm<T: Real>() -> T {
    T::one() / (T::one() - edge::<T>() * T::lit(1.0 + 0.5 * CUTOFF_Q))
}

/// Footprint value at squared Mahalanobis distance `q`; zero for `q ≥ 9`.
#[inline]
pub fn footprint<T: Real>(q: T) -> T {
    if q >= T::lit(CUTOFF_Q) {
        return T::zero();
    }
    let e = edge::<T>();
    ((-q * T::half()).exp() - e * (T::one() - (q - T::lit(CUTOFF_Q)) * T::half())) * norm::<T>()
}

/// `d footprint / dq`.
#[inline]
pub fn footprint_dq<T: Real>(q: T) -> T {
    if q >= T::lit(CUTOFF_Q) {
        return T::zero();
    }
    ((edge::<T>() - (-q * T::half()).exp()) * T::half()) * norm::<T>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_and_cutoff() {
        assert!((footprint(0.0_f64) - 1.0).abs() < 1e-15);
        assert!(footprint(CUTOFF_Q - 1e-12_f64).abs() < 1e-12);
        assert_eq!(footprint(CUTOFF_Q), 0.0_f64);
        assert!(footprint_dq(CUTOFF_Q - 1e-9_f64).abs() < 1e-9);
    }

    #[test]
    fn monotone_and_positive_inside() {
        let mut prev = f64::INFINITY;
        for i in 0..900 {
            let q = i as f64 * 0.01;
            let k = footprint(q);
            assert!(k > 0.0 && k < prev);
            prev = k;
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for &q in &[0.05_f64, 0.3, 2.0, 5.5, 8.7] {
            let h = 1e-6;
            let fd = (footprint(q + h) - footprint(q - h)) / (2.0 * h);
            assert!((fd - footprint_dq(q)).abs() < 1e-7, "q={q}");
        }
    }
}
