//! Matrix-free symmetric linear operators.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A square linear map available only through matrix-vector products.
pub trait LinearOperator<T> {
    fn dim(&self) -> usize;

    fn apply(&self, v: &[T]) -> Result<Vec<T>>;
}

impl<T, O: LinearOperator<T> + ?Sized> LinearOperator<T> for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        (**self).apply(v)
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::dimension(format!(
            "operator of dimension {expected} applied to vector of length {got}"
        )));
    }
    Ok(())
}

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymmetric<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> DenseSymmetric<T> {
    /// Fails unless `data` is `n * n` long and symmetric to within `1e-12` relative.
    pub fn new(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::dimension(format!(
                "{} entries cannot form a {n}x{n} matrix",
                data.len()
            )));
        }
        let tol = T::lit(1e-12);
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if (a - b).abs() > tol * (T::one() + a.abs().max(b.abs())) {
                    return Err(Error::validation(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        let mut data = vec![T::zero(); n * n];
        for (i, &d) in diag.iter().enumerate() {
            data[i * n + i] = d;
        }
        Self { n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

impl<T: Real> LinearOperator<T> for DenseSymmetric<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[T]) -> Result<Vec<T>> {
        check_dim(self.n, v.len())?;
        Ok(self
            .data
            .chunks_exact(self.n)
            .map(|row| crate::scalar::dot(row, v))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_apply_and_checks() {
        let m = DenseSymmetric::new(2, vec![2.0, 1.0, 1.0, 3.0]).unwrap();
        assert_eq!(m.apply(&[1.0, 1.0]).unwrap(), vec![3.0, 4.0]);
        assert!(m.apply(&[1.0]).is_err());
        assert!(DenseSymmetric::new(2, vec![2.0, 1.0, 0.0, 3.0]).is_err());
        assert!(DenseSymmetric::<f32>::new(2, vec![1.0; 3]).is_err());
        let d = DenseSymmetric::diagonal(&[3.0f32, 2.0]);
        assert_eq!(d.apply(&[1.0, 1.0]).unwrap(), vec![3.0, 2.0]);
    }
}
