//! Real symmetric embedding of complex Hermitian data.
//!
//! `A ↦ [[Re A, −Im A], [Im A, Re A]]`. The map is a ring homomorphism, each
//! eigenvalue is duplicated, so `Tr(AB) = ½ Tr(ÂB̂)` and `log|A| = ½ log|Â|`.

use nalgebra::Cholesky;

use super::ConicProblem;
use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat};

pub fn embed(a: &CMat) -> RMat {
    let (r, c) = a.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + c)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
        }
    }
    out
}

pub fn unembed(a: &RMat) -> CMat {
    let (r, c) = (a.nrows() / 2, a.ncols() / 2);
    CMat::from_fn(r, c, |i, j| num_complex::Complex64::new(a[(i, j)], a[(i + r, j)]))
}

/// `½ Tr(Â B̂)`.
pub fn trace_product(a: &RMat, b: &RMat) -> f64 {
    0.5 * a.component_mul(&b.transpose()).sum()
}

/// `½ log|Â|`.
pub fn logdet(a: &RMat, what: &'static str) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let sym = (a + a.transpose()) * 0.5;
    let chol = Cholesky::new(sym).ok_or(Error::NotPositiveDefinite(what))?;
    Ok(chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum())
}

#[derive(Debug, Clone)]
pub struct EmbeddedConstraint {
    pub theta: RMat,
    pub omega: Vec<RMat>,
    pub quant: Vec<usize>,
    pub side: Vec<usize>,
    pub constant: f64,
    pub rhs: f64,
}

/// The conic problem with every Hermitian coefficient embedded.
#[derive(Debug, Clone)]
pub struct EmbeddedProblem {
    pub objective_theta: RMat,
    pub objective_omega: Vec<RMat>,
    pub objective_constant: f64,
    pub constraints: Vec<EmbeddedConstraint>,
    pub noise: f64,
}

impl EmbeddedProblem {
    pub fn new(prob: &ConicProblem) -> Self {
        EmbeddedProblem {
            objective_theta: embed(&prob.objective_theta),
            objective_omega: prob.objective_omega.iter().map(embed).collect(),
            objective_constant: prob.objective_constant,
            constraints: prob
                .constraints
                .iter()
                .map(|k| EmbeddedConstraint {
                    theta: embed(&k.theta),
                    omega: k.omega.iter().map(embed).collect(),
                    quant: k.quant.clone(),
                    side: k.side.clone(),
                    constant: k.constant,
                    rhs: k.rhs,
                })
                .collect(),
            noise: prob.noise,
        }
    }

    pub fn objective(&self, theta: &RMat, omega: &[RMat]) -> f64 {
        trace_product(&self.objective_theta, theta)
            + self.objective_omega.iter().zip(omega).map(|(a, b)| trace_product(a, b)).sum::<f64>()
            + self.objective_constant
    }

    /// Left-hand sides of the constraints.
    pub fn constraint_lhs(&self, theta: &RMat, omega: &[RMat]) -> Result<Vec<f64>> {
        self.constraints
            .iter()
            .map(|k| {
                let mut v = trace_product(&k.theta, theta)
                    + k.omega.iter().zip(omega).map(|(a, b)| trace_product(a, b)).sum::<f64>()
                    + k.constant;
                for &l in &k.side {
                    let n = omega[l].nrows();
                    v -= logdet(&(&omega[l] + RMat::identity(n, n) * self.noise), "σ²I + Ω_S̄")?;
                }
                for &l in &k.quant {
                    v -= logdet(&omega[l], "Ω_S")?;
                }
                Ok(v)
            })
            .collect()
    }
}
