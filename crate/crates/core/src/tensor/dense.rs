use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

/// Dense vector with fixed dimensionality.
///
/// Immutable after construction from the outside; operations allocate fresh
/// outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseVector<S> {
    values: Vec<S>,
}

impl<S: Scalar> DenseVector<S> {
    pub fn new(values: Vec<S>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![S::zero(); len],
        }
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> S) -> Self {
        Self {
            values: (0..len).map(&mut f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    /// Elementwise sum; errors on length mismatch.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::Dimension {
                context: "vector add",
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| *a + *b)
                .collect(),
        ))
    }

    /// Elementwise difference; errors on length mismatch.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::Dimension {
                context: "vector sub",
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| *a - *b)
                .collect(),
        ))
    }

    pub fn scale(&self, factor: S) -> Self {
        Self::new(self.values.iter().map(|&x| x * factor).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<S> {
    rows: usize,
    cols: usize,
    values: Vec<S>,
}

impl<S: Scalar> DenseMatrix<S> {
    /// Builds a matrix from row-major values; the count must equal
    /// `rows * cols`.
    pub fn from_values(rows: usize, cols: usize, values: Vec<S>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension {
                context: "matrix construction",
                expected: rows * cols,
                got: values.len(),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.values[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: S) {
        self.values[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    /// Copies row `i` into a fresh vector.
    pub fn row_vector(&self, i: usize) -> DenseVector<S> {
        DenseVector::new(self.row(i).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_construction_validates_count() {
        assert!(DenseMatrix::from_values(2, 2, vec![1.0f64; 4]).is_ok());
        assert!(matches!(
            DenseMatrix::from_values(2, 2, vec![1.0f64; 3]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn vector_add_sub_scale() {
        let a = DenseVector::new(vec![1.0, 2.0]);
        let b = DenseVector::new(vec![3.0, 5.0]);
        assert_eq!(a.add(&b).unwrap().values(), &[4.0, 7.0]);
        assert_eq!(b.sub(&a).unwrap().values(), &[2.0, 3.0]);
        assert_eq!(a.scale(2.0).values(), &[2.0, 4.0]);
        let short = DenseVector::new(vec![1.0]);
        assert!(a.add(&short).is_err());
    }

    #[test]
    fn row_access_is_row_major() {
        let m = DenseMatrix::from_values(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(m.get(0, 2), 3.0);
    }
}
