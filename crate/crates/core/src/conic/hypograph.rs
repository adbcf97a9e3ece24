//! Hypograph representation of `log|Ω|`.
//!
//! `t ≤ log|Ω|` holds iff there is a lower-triangular `Z` with
//! `[[Ω, Z], [Zᴴ, Diag(Z)]] ⪰ 0` and `t ≤ Σ_i log Z_ii`. At the optimum the
//! factor is `Z = L·diag(L_ii)` for the Cholesky factor `Ω = LLᴴ`: the Schur
//! complement `Diag(Z) − Zᴴ Ω⁻¹ Z` vanishes and `Σ log Z_ii = log|Ω|`. The
//! barrier solver works with `−log|Ω|` directly; this module rebuilds the
//! certificate after each solve so the representation can be checked.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};

#[derive(Debug, Clone)]
pub struct HypographCertificate {
    pub z: CMat,
    /// `Σ_i log Z_ii`.
    pub reconstructed: f64,
    /// `log|Ω|` from an independent eigendecomposition.
    pub direct: f64,
}

impl HypographCertificate {
    pub fn logdet_error(&self) -> f64 {
        (self.reconstructed - self.direct).abs()
    }

    /// The coupling matrix `[[Ω, Z], [Zᴴ, Diag(Z)]]`.
    pub fn coupling(&self, omega: &CMat) -> CMat {
        let n = omega.nrows();
        let mut k = CMat::zeros(2 * n, 2 * n);
        k.view_mut((0, 0), (n, n)).copy_from(omega);
        k.view_mut((0, n), (n, n)).copy_from(&self.z);
        k.view_mut((n, 0), (n, n)).copy_from(&self.z.adjoint());
        for i in 0..n {
            k[(n + i, n + i)] = self.z[(i, i)];
        }
        k
    }
}

pub fn certify(omega: &CMat) -> Result<HypographCertificate> {
    let chol = linalg::cholesky(omega).ok_or(Error::NotPositiveDefinite("Ω_l in hypograph certificate"))?;
    let l = chol.l();
    let n = l.nrows();
    let z = CMat::from_fn(n, n, |i, j| l[(i, j)] * l[(j, j)].re);
    let reconstructed = (0..n).map(|i| z[(i, i)].re.ln()).sum();
    let (vals, _) = linalg::hermitian_eigen(omega);
    let direct = vals.iter().map(|v| v.ln()).sum();
    debug_assert!((0..n).all(|i| z[(i, i)].im.abs() < 1e-12 && (z[(i, i)] - c(l[(i, i)].re.powi(2))).norm() < 1e-9));
    Ok(HypographCertificate { z, reconstructed, direct })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> CMat {
        let a = CMat::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &a * a.adjoint() + CMat::identity(n, n).scale(0.1)
    }

    #[test]
    fn certificate_is_exact_and_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..6 {
            let omega = random_pd(n, &mut rng);
            let cert = certify(&omega).unwrap();
            assert!(cert.logdet_error() < 1e-10);
            let k = cert.coupling(&omega);
            let lam = linalg::min_eigenvalue(&k);
            // PSD with a zero Schur complement: smallest eigenvalue sits at zero
            assert!(lam > -1e-10 && lam < 1e-8, "λmin = {lam}");
            for i in 0..n {
                for j in i + 1..n {
                    assert_eq!(cert.z[(i, j)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn rejects_singular() {
        assert!(certify(&CMat::zeros(2, 2)).is_err());
    }
}
