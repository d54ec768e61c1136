//! Thomas algorithm for tridiagonal systems over real or complex scalars.

use num_complex::Complex64;
use std::ops::{Add, Div, Mul, Sub};

use crate::error::{Error, Result};

pub trait Scalar:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    fn magnitude(self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    #[inline]
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Solves `lower[i] u[i-1] + diag[i] u[i] + upper[i] u[i+1] = rhs[i]` in place.
///
/// `lower[0]` and `upper[n-1]` are ignored. `scratch` is resized as needed so
/// callers can reuse it across lines.
pub fn solve<T: Scalar>(
    lower: &[T],
    diag: &[T],
    upper: &[T],
    rhs: &mut [T],
    scratch: &mut Vec<T>,
) -> Result<()> {
    let n = rhs.len();
    if diag.len() != n || lower.len() != n || upper.len() != n {
        return Err(Error::GridFailure(
            "tridiagonal band length mismatch".into(),
        ));
    }
    if n == 0 {
        return Ok(());
    }
    scratch.clear();
    scratch.resize(n, T::default());

    let mut pivot = diag[0];
    if pivot.magnitude() < f64::MIN_POSITIVE {
        return Err(Error::GridFailure(
            "singular tridiagonal system at row 0".into(),
        ));
    }
    rhs[0] = rhs[0] / pivot;
    for i in 1..n {
        scratch[i] = upper[i - 1] / pivot;
        pivot = diag[i] - lower[i] * scratch[i];
        if pivot.magnitude() < f64::MIN_POSITIVE {
            return Err(Error::GridFailure(format!(
                "singular tridiagonal system at row {i}"
            )));
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        rhs[i] = rhs[i] - scratch[i + 1] * rhs[i + 1];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn apply<T: Scalar>(lower: &[T], diag: &[T], upper: &[T], u: &[T]) -> Vec<T> {
        let n = u.len();
        (0..n)
            .map(|i| {
                let mut s = diag[i] * u[i];
                if i > 0 {
                    s = s + lower[i] * u[i - 1];
                }
                if i + 1 < n {
                    s = s + upper[i] * u[i + 1];
                }
                s
            })
            .collect()
    }

    proptest! {
        #[test]
        fn solves_diagonally_dominant_systems(
            rows in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..60)
        ) {
            let n = rows.len();
            let lower: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let upper: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let diag: Vec<f64> = (0..n).map(|i| 2.5 + lower[i].abs() + upper[i].abs()).collect();
            let u: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let mut rhs = apply(&lower, &diag, &upper, &u);
            solve(&lower, &diag, &upper, &mut rhs, &mut Vec::new()).unwrap();
            for (a, b) in rhs.iter().zip(&u) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn complex_system() {
        let n = 7;
        let lower = vec![Complex64::new(0.3, -0.1); n];
        let upper = vec![Complex64::new(-0.2, 0.4); n];
        let diag = vec![Complex64::new(2.0, 1.0); n];
        let u: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(i as f64, -(i as f64) * 0.5))
            .collect();
        let mut rhs = apply(&lower, &diag, &upper, &u);
        solve(&lower, &diag, &upper, &mut rhs, &mut Vec::new()).unwrap();
        for (a, b) in rhs.iter().zip(&u) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_pivot_is_reported() {
        let mut rhs = vec![1.0, 1.0];
        let err = solve(
            &[0.0, 1.0],
            &[1.0, 1.0],
            &[1.0, 0.0],
            &mut rhs,
            &mut Vec::new(),
        );
        assert!(matches!(err, Err(Error::GridFailure(_))));
    }
}
