//! Minimal dense numerical kernel.
//!
//! Everything else in the crate computes on these types: dense vectors and
//! row-major matrices generic over [`Scalar`], elementwise ops, activations,
//! a numerically stable softmax, reductions, and a seeded RNG with a fixed,
//! documented generator.

mod dense;
mod rng;
mod scalar;

pub use dense::{DenseMatrix, DenseVector};
pub use rng::{SeededRng, RNG_ALGORITHM};
pub use scalar::Scalar;

use crate::error::{Error, Result};

/// Matrix-vector product: `result[i] = sum_j m[i,j] * v[j]`.
pub fn matvec<S: Scalar>(m: &DenseMatrix<S>, v: &DenseVector<S>) -> Result<DenseVector<S>> {
    if m.cols() != v.len() {
        return Err(Error::Dimension {
            context: "matvec",
            expected: m.cols(),
            got: v.len(),
        });
    }
    let mut out = vec![S::zero(); m.rows()];
    for (i, slot) in out.iter_mut().enumerate() {
        let row = m.row(i);
        let mut acc = S::zero();
        for (a, b) in row.iter().zip(v.values()) {
            acc = acc + *a * *b;
        }
        *slot = acc;
    }
    Ok(DenseVector::new(out))
}

/// Matrix product `a * b` with `a` of shape (m, k) and `b` of shape (k, n).
pub fn matmul<S: Scalar>(a: &DenseMatrix<S>, b: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
    if a.cols() != b.rows() {
        return Err(Error::Dimension {
            context: "matmul",
            expected: a.cols(),
            got: b.rows(),
        });
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![S::zero(); m * n];
    // i-k-j order keeps the inner loop contiguous in both `b` and `out`.
    for i in 0..m {
        let a_row = a.row(i);
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate().take(k) {
            let b_row = b.row(p);
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o = *o + a_ip * b_pj;
            }
        }
    }
    DenseMatrix::from_values(m, n, out)
}

/// Matrix product `a * b^T` with `a` of shape (m, k) and `b` of shape (n, k).
pub fn matmul_nt<S: Scalar>(a: &DenseMatrix<S>, b: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension {
            context: "matmul_nt",
            expected: a.cols(),
            got: b.cols(),
        });
    }
    let (m, n) = (a.rows(), b.rows());
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        let a_row = a.row(i);
        for j in 0..n {
            let b_row = b.row(j);
            let mut acc = S::zero();
            for (x, y) in a_row.iter().zip(b_row) {
                acc = acc + *x * *y;
            }
            out[i * n + j] = acc;
        }
    }
    DenseMatrix::from_values(m, n, out)
}

/// Matrix product `a^T * b` with `a` of shape (k, m) and `b` of shape (k, n).
pub fn matmul_tn<S: Scalar>(a: &DenseMatrix<S>, b: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
    if a.rows() != b.rows() {
        return Err(Error::Dimension {
            context: "matmul_tn",
            expected: a.rows(),
            got: b.rows(),
        });
    }
    let (k, m, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![S::zero(); m * n];
    for p in 0..k {
        let a_row = a.row(p);
        let b_row = b.row(p);
        for (i, &a_pi) in a_row.iter().enumerate().take(m) {
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o = *o + a_pi * b_pj;
            }
        }
    }
    DenseMatrix::from_values(m, n, out)
}

/// Elementwise `max(0, x)`.
pub fn relu<S: Scalar>(v: &DenseVector<S>) -> DenseVector<S> {
    DenseVector::new(
        v.values()
            .iter()
            .map(|&x| if x > S::zero() { x } else { S::zero() })
            .collect(),
    )
}

/// Stable softmax: exponentials are taken after subtracting the maximum.
pub fn softmax<S: Scalar>(v: &DenseVector<S>) -> DenseVector<S> {
    assert!(v.len() >= 1, "softmax needs at least one element");
    let max = v
        .values()
        .iter()
        .fold(S::neg_infinity(), |m, &x| if x > m { x } else { m });
    let mut exps: Vec<S> = v.values().iter().map(|&x| (x - max).exp()).collect();
    let total: S = exps.iter().fold(S::zero(), |a, &b| a + b);
    for e in exps.iter_mut() {
        *e = *e / total;
    }
    DenseVector::new(exps)
}

/// Elementwise arithmetic mean over a non-empty set of equal-length vectors.
pub fn mean_of<S: Scalar>(vs: &[DenseVector<S>]) -> Result<DenseVector<S>> {
    let first = vs.first().ok_or(Error::EmptyContextSet)?;
    let len = first.len();
    let mut acc = vec![S::zero(); len];
    for v in vs {
        if v.len() != len {
            return Err(Error::Dimension {
                context: "mean_of",
                expected: len,
                got: v.len(),
            });
        }
        for (a, &x) in acc.iter_mut().zip(v.values()) {
            *a = *a + x;
        }
    }
    let n = S::from_usize(vs.len()).expect("set size fits the scalar");
    for a in acc.iter_mut() {
        *a = *a / n;
    }
    Ok(DenseVector::new(acc))
}

/// Index of the largest element; ties break to the lowest index.
pub fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in values.iter().enumerate().skip(1) {
        if x > values[best] {
            best = i;
        }
    }
    best
}

/// Dot product of two equal-length slices.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}

/// Cosine similarity; zero vectors yield 0.
pub fn cosine<S: Scalar>(a: &DenseVector<S>, b: &DenseVector<S>) -> Result<S> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "cosine",
            expected: a.len(),
            got: b.len(),
        });
    }
    let num = dot(a.values(), b.values());
    let na = dot(a.values(), a.values()).sqrt();
    let nb = dot(b.values(), b.values()).sqrt();
    if na == S::zero() || nb == S::zero() {
        return Ok(S::zero());
    }
    Ok(num / (na * nb))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> DenseVector<f64> {
        DenseVector::new(values.to_vec())
    }

    #[test]
    fn matvec_identity() {
        let m = DenseMatrix::from_values(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(matvec(&m, &v(&[3.0, 4.0])).unwrap().values(), &[3.0, 4.0]);
    }

    #[test]
    fn matvec_zero_annihilates() {
        let m = DenseMatrix::zeros(2, 2);
        assert_eq!(matvec(&m, &v(&[3.0, 4.0])).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn matvec_direct_formula() {
        let m = DenseMatrix::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matvec(&m, &v(&[1.0, 1.0])).unwrap().values(), &[3.0, 7.0]);
    }

    #[test]
    fn matvec_rejects_mismatch() {
        let m = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            matvec(&m, &v(&[1.0, 2.0])),
            Err(crate::Error::Dimension { .. })
        ));
    }

    #[test]
    fn matvec_is_linear() {
        let mut rng = SeededRng::new(7);
        for _ in 0..50 {
            let m = DenseMatrix::from_fn(4, 6, |_, _| rng.normal());
            let u = DenseVector::from_fn(6, |_| rng.normal());
            let w = DenseVector::from_fn(6, |_| rng.normal());
            let (a, b) = (rng.normal(), rng.normal());
            let combo = DenseVector::new(
                u.values()
                    .iter()
                    .zip(w.values())
                    .map(|(x, y)| a * x + b * y)
                    .collect(),
            );
            let lhs = matvec(&m, &combo).unwrap();
            let mu = matvec(&m, &u).unwrap();
            let mw = matvec(&m, &w).unwrap();
            for i in 0..4 {
                let rhs = a * mu.values()[i] + b * mw.values()[i];
                let scale = lhs.values()[i].abs().max(rhs.abs()).max(1.0);
                assert!((lhs.values()[i] - rhs).abs() / scale < 1e-9);
            }
        }
    }

    #[test]
    fn relu_definition() {
        assert_eq!(relu(&v(&[-1.0, 2.0])).values(), &[0.0, 2.0]);
        assert_eq!(relu(&v(&[0.0, 0.0])).values(), &[0.0, 0.0]);
        assert_eq!(relu(&v(&[5.0, -5.0, 0.5])).values(), &[5.0, 0.0, 0.5]);
    }

    #[test]
    fn softmax_symmetry_and_stability() {
        assert_eq!(softmax(&v(&[0.0, 0.0])).values(), &[0.5, 0.5]);
        assert_eq!(softmax(&v(&[1000.0, 1000.0])).values(), &[0.5, 0.5]);
        let s = softmax(&v(&[0.0, 3.0f64.ln()]));
        assert!((s.values()[0] - 0.25).abs() < 1e-15);
        assert!((s.values()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_is_simplex_point_and_shift_invariant() {
        let mut rng = SeededRng::new(11);
        for _ in 0..100 {
            let x = DenseVector::from_fn(8, |_| rng.normal() * 10.0);
            let s = softmax(&x);
            let sum: f64 = s.values().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            assert!(s.values().iter().all(|&p| p >= 0.0 && p.is_finite()));
            let c = rng.normal() * 100.0;
            let shifted = DenseVector::new(x.values().iter().map(|&t| t + c).collect());
            let s2 = softmax(&shifted);
            for (a, b) in s.values().iter().zip(s2.values()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn mean_of_examples() {
        let set = vec![v(&[1.0, 2.0]), v(&[3.0, 4.0])];
        assert_eq!(mean_of(&set).unwrap().values(), &[2.0, 3.0]);
        assert_eq!(mean_of(&[v(&[5.0, 5.0])]).unwrap().values(), &[5.0, 5.0]);
        let sym = vec![v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[-1.0, -1.0])];
        assert_eq!(mean_of(&sym).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn mean_of_error_paths() {
        let empty: Vec<DenseVector<f64>> = Vec::new();
        assert!(matches!(mean_of(&empty), Err(crate::Error::EmptyContextSet)));
        let mixed = vec![v(&[1.0]), v(&[1.0, 2.0])];
        assert!(matches!(mean_of(&mixed), Err(crate::Error::Dimension { .. })));
    }

    #[test]
    fn mean_of_matches_compensated_oracle() {
        let mut rng = SeededRng::new(3);
        let set: Vec<DenseVector<f64>> =
            (0..64).map(|_| DenseVector::from_fn(16, |_| rng.normal() * 100.0)).collect();
        let got = mean_of(&set).unwrap();
        // Independent route: Kahan-compensated per-coordinate summation.
        for j in 0..16 {
            let mut sum = 0.0f64;
            let mut comp = 0.0f64;
            for s in &set {
                let y = s.values()[j] - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            let want = sum / set.len() as f64;
            assert!((got.values()[j] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn kernel_is_generic_over_f32() {
        let m = DenseMatrix::<f32>::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = DenseVector::<f32>::new(vec![1.0, 1.0]);
        assert_eq!(matvec(&m, &x).unwrap().values(), &[3.0f32, 7.0]);
        let s = softmax(&DenseVector::<f32>::new(vec![0.0, 0.0]));
        assert_eq!(s.values(), &[0.5f32, 0.5]);
    }

    #[test]
    fn matmul_agrees_with_matvec_columns() {
        let mut rng = SeededRng::new(5);
        let a = DenseMatrix::from_fn(3, 4, |_, _| rng.normal());
        let b = DenseMatrix::from_fn(4, 2, |_, _| rng.normal());
        let c = matmul(&a, &b).unwrap();
        for j in 0..2 {
            let col = DenseVector::new((0..4).map(|i| b.get(i, j)).collect());
            let want = matvec(&a, &col).unwrap();
            for i in 0..3 {
                assert!((c.get(i, j) - want.values()[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_matmuls_agree_with_explicit_transpose() {
        let mut rng = SeededRng::new(6);
        let a = DenseMatrix::from_fn(3, 5, |_, _| rng.normal());
        let b = DenseMatrix::from_fn(4, 5, |_, _| rng.normal());
        let nt = matmul_nt(&a, &b).unwrap();
        let bt = DenseMatrix::from_fn(5, 4, |i, j| b.get(j, i));
        let want = matmul(&a, &bt).unwrap();
        assert_eq!(nt.values(), want.values());

        let c = DenseMatrix::from_fn(5, 3, |_, _| rng.normal());
        let d = DenseMatrix::from_fn(5, 2, |_, _| rng.normal());
        let tn = matmul_tn(&c, &d).unwrap();
        let ct = DenseMatrix::from_fn(3, 5, |i, j| c.get(j, i));
        let want = matmul(&ct, &d).unwrap();
        assert_eq!(tn.values(), want.values());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0f64; 4]), 0);
    }

    #[test]
    fn cosine_of_parallel_vectors_is_one() {
        let a = v(&[1.0, 2.0, 3.0]);
        let b = v(&[2.0, 4.0, 6.0]);
        assert!((cosine(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&a, &v(&[0.0, 0.0, 0.0])).unwrap(), 0.0);
    }
}
