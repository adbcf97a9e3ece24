//! Small dense complex linear-algebra helpers shared by the evaluators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `(A + Aᴴ) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `A B` through four real products; nalgebra's complex product does not use
/// the blocked real kernel and is several times slower at these sizes.
pub fn mul(a: &CMat, b: &CMat) -> CMat {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    CMat::from_fn(re.nrows(), re.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
}

/// Real part of `Tr(A B)`; for Hermitian `A`, `B` this is the trace inner product.
pub fn trace_product(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            let x = a[(i, k)] * b[(k, i)];
            acc += x.re;
        }
    }
    acc
}

pub fn trace_re(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

/// Cholesky factorization of the Hermitian part of `a`; `None` unless it is
/// numerically positive definite.
pub fn cholesky(a: &CMat) -> Option<Cholesky<Complex64, Dyn>> {
    if a.nrows() == 0 {
        return Cholesky::new(CMat::zeros(0, 0));
    }
    let h = hermitian_part(a);
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return None;
    }
    // complex square roots never fail, so pivots have to be checked here
    let ch = Cholesky::new(h)?;
    let ok = ch
        .l_dirty()
        .diagonal()
        .iter()
        .all(|d| d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-10 * d.re);
    ok.then_some(ch)
}

pub fn chol_logdet(ch: &Cholesky<Complex64, Dyn>) -> f64 {
    ch.l_dirty()
        .diagonal()
        .iter()
        .map(|z| 2.0 * z.re.ln())
        .sum()
}

/// `log|A|` for Hermitian positive definite `A`; the 0×0 determinant is 1.
pub fn logdet(a: &CMat, what: &'static str) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let ch = cholesky(a).ok_or(Error::NotPositiveDefinite(what))?;
    Ok(chol_logdet(&ch))
}

pub fn inverse_hpd(a: &CMat, what: &'static str) -> Result<CMat> {
    if a.nrows() == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let ch = cholesky(a).ok_or(Error::NotPositiveDefinite(what))?;
    Ok(hermitian_part(&ch.inverse()))
}

/// Solves `A X = B` for Hermitian positive definite `A`.
pub fn solve_hpd(a: &CMat, b: &CMat, what: &'static str) -> Result<CMat> {
    let ch = cholesky(a).ok_or(Error::NotPositiveDefinite(what))?;
    Ok(ch.solve(b))
}

/// Eigenvalues and eigenvectors of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Projects onto the PSD cone by clamping negative eigenvalues to zero.
pub fn clamp_psd(a: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(a);
    let d = CMat::from_diagonal(&CVec::from_iterator(
        vals.len(),
        vals.iter().map(|&v| c(v.max(0.0))),
    ));
    hermitian_part(&(&vecs * d * vecs.adjoint()))
}

pub fn min_eigenvalue(a: &CMat) -> f64 {
    hermitian_eigen(a).0.first().copied().unwrap_or(f64::INFINITY)
}

/// Block-diagonal assembly of square blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

/// Stacks the row blocks `rows[idx*block .. (idx+1)*block]` for each index.
pub fn select_row_blocks(a: &CMat, indices: &[usize], block: usize) -> CMat {
    let mut out = CMat::zeros(indices.len() * block, a.ncols());
    for (k, &idx) in indices.iter().enumerate() {
        out.view_mut((k * block, 0), (block, a.ncols()))
            .copy_from(&a.view((idx * block, 0), (block, a.ncols())));
    }
    out
}

/// Principal submatrix over the given diagonal blocks.
pub fn select_diag_blocks(a: &CMat, indices: &[usize], block: usize) -> CMat {
    let n = indices.len() * block;
    let mut out = CMat::zeros(n, n);
    for (bi, &i) in indices.iter().enumerate() {
        for (bj, &j) in indices.iter().enumerate() {
            out.view_mut((bi * block, bj * block), (block, block))
                .copy_from(&a.view((i * block, j * block), (block, block)));
        }
    }
    out
}

pub fn is_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_determinant_is_one() {
        assert_eq!(logdet(&CMat::zeros(0, 0), "empty").unwrap(), 0.0);
    }

    #[test]
    fn logdet_of_diagonal() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![c(2.0), c(3.0)]));
        assert!((logdet(&a, "a").unwrap() - 6f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn eigen_sorted_ascending() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[c(2.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0), c(2.0)],
        );
        let (vals, vecs) = hermitian_eigen(&a);
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
        let rec = &vecs * CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(3.0)])) * vecs.adjoint();
        assert!(max_abs_diff(&rec, &a) < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let neg = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(-2.0)]));
        assert!(cholesky(&neg).is_none());
        let off = CMat::from_row_slice(2, 2, &[c(1.0), Complex64::new(1.0, 2.0), Complex64::new(1.0, -2.0), c(1.0)]);
        assert!(cholesky(&off).is_none());
        assert!(logdet(&off, "off").is_err());
        assert!(cholesky(&CMat::identity(3, 3)).is_some());
    }

    #[test]
    fn split_product_matches_complex() {
        let a = CMat::from_fn(5, 3, |i, j| Complex64::new(i as f64 - j as f64, (i * j) as f64 * 0.5));
        let b = CMat::from_fn(3, 4, |i, j| Complex64::new((i + j) as f64, 1.0 - j as f64));
        assert!(max_abs_diff(&mul(&a, &b), &(&a * &b)) < 1e-12);
    }
}
