//! Small dense complex linear algebra used by the estimators.
//!
//! Matrices here are tiny (M×M with M the microphone count), so everything
//! is backed by `nalgebra`'s dynamic matrices and its Hermitian eigensolver.

use nalgebra::{DMatrix, DVector};

use crate::C64;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are sorted ascending and each eigenvector has its phase
/// fixed so that its first non-negligible entry is real and positive. The
/// solver is deterministic for a given input.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Column `i` belongs to `values[i]`.
    pub vectors: CMatrix,
}

pub fn hermitian_eigen(m: &CMatrix) -> HermitianEigen {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let mut vectors = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let mut v = eig.eigenvectors.column(src).into_owned();
        fix_phase(&mut v);
        vectors.set_column(dst, &v);
    }
    HermitianEigen { values, vectors }
}

fn fix_phase(v: &mut CVector) {
    let norm = v.norm();
    if norm == 0.0 {
        return;
    }
    if let Some(lead) = v.iter().copied().find(|z| z.norm() > 1e-12 * norm) {
        let rot = lead.conj() / lead.norm();
        v.iter_mut().for_each(|z| *z *= rot);
    }
}

/// Frobenius norm of `m - m^H` relative to the norm of `m`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / scale
}

/// Replaces `m` with `(m + m^H)/2`.
pub fn symmetrize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// `a^H b` for slices.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `a^H M a` for Hermitian `m`; the imaginary part is discarded.
pub fn quadratic_form(m: &CMatrix, a: &[C64]) -> f64 {
    let n = a.len();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        let mut row = C64::new(0.0, 0.0);
        for j in 0..n {
            row += m[(i, j)] * a[j];
        }
        acc += a[i].conj() * row;
    }
    acc.re
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_reconstructs_and_sorts() {
        let m = CMatrix::from_row_slice(
            3,
            3,
            &[
                C64::new(4.0, 0.0),
                C64::new(1.0, 1.0),
                C64::new(0.0, -0.5),
                C64::new(1.0, -1.0),
                C64::new(3.0, 0.0),
                C64::new(0.2, 0.0),
                C64::new(0.0, 0.5),
                C64::new(0.2, 0.0),
                C64::new(1.0, 0.0),
            ],
        );
        let e = hermitian_eigen(&m);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let d = CMatrix::from_diagonal(&DVector::from_iterator(
            3,
            e.values.iter().map(|&v| C64::new(v, 0.0)),
        ));
        let rec = &e.vectors * d * e.vectors.adjoint();
        assert!((rec - &m).norm() < 1e-12);
        for c in 0..3 {
            let lead = e.vectors[(0, c)];
            assert!(lead.im.abs() < 1e-14 && lead.re >= 0.0);
        }
    }

    #[test]
    fn symmetrize_makes_hermitian() {
        let mut m = CMatrix::from_fn(3, 3, |i, j| C64::new(i as f64, j as f64 * 0.3));
        symmetrize(&mut m);
        assert_eq!(hermitian_defect(&m), 0.0);
    }
}
