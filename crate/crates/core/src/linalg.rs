//! Small dense helpers for the Jacobian-based verifiers.

use nalgebra::{DMatrix, DVector};

pub const POWER_ITERATION_CAP: usize = 200;
pub const POWER_ITERATION_RTOL: f64 = 1e-8;

/// Spectral norm of a symmetric matrix by power iteration.
///
/// Starts from `e₁ + 1e-3·𝟙`, stops after 200 iterations or when the norm
/// estimate changes by less than `1e-8` relative.
pub fn spectral_norm_symmetric(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows();
    assert_eq!(d, m.ncols(), "square matrix required");
    if d == 1 {
        return m[(0, 0)].abs();
    }
    let mut v = DVector::<f64>::from_element(d, 1e-3);
    v[0] += 1.0;
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATION_CAP {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (norm - estimate).abs() <= POWER_ITERATION_RTOL * norm;
        estimate = norm;
        v = w / norm;
        if converged {
            break;
        }
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    #[test]
    fn diagonal_matrix() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![-3.0, 2.0, 0.5]));
        assert!((spectral_norm_symmetric(&m) - 3.0).abs() < 1e-7);
    }

    #[test]
    fn scalar_case() {
        assert_eq!(spectral_norm_symmetric(&DMatrix::from_element(1, 1, -4.5)), 4.5);
    }

    #[test]
    fn agrees_with_eigendecomposition() {
        let m = DMatrix::<f64>::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, -5.0, 0.3, 0.0, 0.3, 1.0]);
        let want = SymmetricEigen::new(m.clone())
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, l: &f64| a.max(l.abs()));
        assert!((spectral_norm_symmetric(&m) - want).abs() < 1e-6 * want);
    }
}
