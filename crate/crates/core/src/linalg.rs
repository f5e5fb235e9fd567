//! Small dense complex helpers on top of nalgebra.
//!
//! Every matrix in the solvers is tiny (a few antennas on a side), so these
//! favour clarity over blocking or in-place tricks.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Replace `a` by its Hermitian part, `(a + a^H) / 2`.
pub fn hermitize(a: &mut CMat) {
    let n = a.nrows();
    for i in 0..n {
        a[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
}

pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

/// Squared Frobenius norm, i.e. `Tr(a a^H)`.
pub fn fro2(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `Re Tr(a^H b)` without forming the product.
pub fn re_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Solve `a x = b` for Hermitian positive definite `a`.
pub fn hpd_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular Hermitian system".into()))
}

pub fn hpd_inverse(a: &CMat) -> Result<CMat> {
    let mut inv = hpd_solve(a, &identity(a.nrows()))?;
    hermitize(&mut inv);
    Ok(inv)
}

/// `ln det a` for Hermitian positive definite `a`.
pub fn hpd_logdet(a: &CMat) -> Result<f64> {
    if let Some(ch) = a.clone().cholesky() {
        let l = ch.l_dirty();
        return Ok((0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum());
    }
    let eig = a.clone().symmetric_eigen();
    let mut acc = 0.0;
    for &ev in eig.eigenvalues.iter() {
        if ev <= 0.0 {
            return Err(Error::Numerical(format!(
                "log-determinant of a matrix with eigenvalue {ev:e}"
            )));
        }
        acc += ev.ln();
    }
    Ok(acc)
}

/// General inverse (used for `(I - U^H H V)^{-1}`, which is Hermitian only at
/// the MMSE receiver).
pub fn inverse(a: &CMat) -> Result<CMat> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix".into()))
}

/// Hermitian eigendecomposition with eigenvalues sorted in descending order.
/// Returns `(values, vectors)` with eigenvectors as columns.
pub fn eigh_desc(a: &CMat) -> (Vec<f64>, CMat) {
    let mut h = a.clone();
    hermitize(&mut h);
    let eig = h.symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    (values, vectors)
}

/// Orthonormal basis for the column space of `a`.
pub fn orth(a: &CMat) -> CMat {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return CMat::zeros(rows, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = smax * (rows.max(cols) as f64) * f64::EPSILON;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol && smax > 0.0)
        .collect();
    CMat::from_fn(rows, keep.len(), |r, j| u[(r, keep[j])])
}

/// Dominant right singular vector of `a` (unit norm) and the matching
/// singular value.
pub fn dominant_right_singular(a: &CMat) -> (f64, CMat) {
    let gram = a.adjoint() * a;
    let (vals, vecs) = eigh_desc(&gram);
    let v = vecs.columns(0, 1).into_owned();
    (vals[0].max(0.0).sqrt(), v)
}

/// Horizontal concatenation of equally tall blocks.
pub fn hstack(blocks: &[&CMat]) -> CMat {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CMat {
        CMat::from_row_slice(
            3,
            2,
            &[
                c(1.0, 0.5),
                c(0.0, -1.0),
                c(2.0, 0.0),
                c(0.3, 0.3),
                c(-1.0, 1.0),
                c(0.5, 0.0),
            ],
        )
    }

    #[test]
    fn logdet_matches_eigenvalues() {
        let a = sample();
        let g = &a * a.adjoint() + identity(3);
        let (vals, _) = eigh_desc(&g);
        let expect: f64 = vals.iter().map(|v| v.ln()).sum();
        assert!((hpd_logdet(&g).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn eigh_sorted_descending() {
        let a = sample();
        let (vals, vecs) = eigh_desc(&(&a * a.adjoint()));
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let recon = &vecs
            * CMat::from_diagonal(&nalgebra::DVector::from_iterator(3, vals.iter().map(|&v| c(v, 0.0))))
            * vecs.adjoint();
        assert!(max_abs(&(recon - &a * a.adjoint())) < 1e-12);
    }

    #[test]
    fn orth_spans_rank_deficient_input() {
        let a = sample();
        let rank1 = a.columns(0, 1).into_owned() * a.columns(0, 1).adjoint();
        let q = orth(&rank1);
        assert_eq!(q.ncols(), 1);
        assert!(max_abs(&(q.adjoint() * &q - identity(1))) < 1e-12);
        assert_eq!(orth(&CMat::zeros(3, 3)).ncols(), 0);
    }

    #[test]
    fn hstack_places_blocks() {
        let a = sample();
        let b = identity(3);
        let s = hstack(&[&a, &b]);
        assert_eq!(s.shape(), (3, 5));
        assert_eq!(s[(1, 2)], ZERO);
        assert_eq!(s[(2, 4)], ONE);
        assert_eq!(s[(0, 0)], a[(0, 0)]);
    }
}
