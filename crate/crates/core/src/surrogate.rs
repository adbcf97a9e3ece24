//! Convexified objective and fronthaul constraints around the current
//! auxiliary variables.
//!
//! Every term that is quadratic in the effective channel,
//! `P Tr(V_Rᴴ M V_R) − 2√P Re Tr(N V_R)` with `V_R = H_R + G_R Θ H_R,M`,
//! is rewritten as `Tr(Ψ Θ̄) + const` on the lifted phase matrix
//! `Θ̄ = θ̄θ̄ᴴ`, `θ̄ = [θ̂ᵀ, 1]ᵀ`, where
//!
//! ```text
//! Ψ = [ A ⊙ Bᵀ  z ]    A = G_Rᴴ M G_R,   B = P H_R,M H_R,Mᴴ,
//!     [ zᴴ      0 ]    z = diag(P G_Rᴴ M H_R H_R,Mᴴ − √P G_Rᴴ Nᴴ H_R,Mᴴ).
//! ```
//!
//! The objective uses `M = WᴴΣ⁻¹W`, `N = Σ⁻¹W`; a constraint adds the
//! linearized `log|Γ_head|` term (`M = E⁻¹`, `N = 0`) and, for a nonempty
//! complement, the same posterior form over `S̄`.

use crate::auxiliary::{AuxiliaryState, HeadAux, MmseAux};
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::rates::{ConstraintId, ConstraintShape, QuantNoise};

/// `Tr(Ψ Θ̄) + Σ_l Tr(C_l Ω_l) + J`, the negated-rate majorizer.
#[derive(Debug, Clone)]
pub struct SurrogateObjective {
    pub psi: CMat,
    /// Coefficient blocks `C_l` of `Tr(WᴴΣ⁻¹W Ω_L)`.
    pub omega_coeff: Vec<CMat>,
    pub constant: f64,
    pub a: CMat,
    pub b: CMat,
    pub z: CMat,
}

/// `Tr(Υ Θ̄) + Σ_l Tr(C_l Ω_l) − Σ_{l∈S̄} log|σ²I + Ω_l| − Σ_{l∈S} log|Ω_l| + J ≤ rhs`.
#[derive(Debug, Clone)]
pub struct SurrogateConstraint {
    pub id: ConstraintId,
    pub upsilon: CMat,
    pub omega_coeff: Vec<CMat>,
    pub quant: Vec<usize>,
    pub side: Vec<usize>,
    pub constant: f64,
    pub rhs: f64,
    pub noise: f64,
}

/// Lifted coefficients of one quadratic-in-`V` term.
struct Lifted {
    psi: CMat,
    a: CMat,
    z: CMat,
    constant: f64,
}

fn lift_quadratic(ch: &ChannelSet, rrhs: &[usize], m: &CMat, n: Option<&CMat>, p: f64) -> Lifted {
    let nr = ch.antennas_per_rrh;
    let ne = ch.num_elements();
    let h = linalg::select_row_blocks(&ch.h, rrhs, nr);
    let g = linalg::select_row_blocks(&ch.g, rrhs, nr);
    let hr = &ch.hr;
    let sp = p.sqrt();

    let gh = g.adjoint();
    let a = linalg::hermitian_part(&(&gh * m * &g));
    let b = (hr * hr.adjoint()).scale(p);
    let mut zmat = (&gh * m * &h * hr.adjoint()).scale(p);
    let mut constant = p * linalg::trace_re(&(h.adjoint() * m * &h));
    if let Some(n) = n {
        zmat -= (&gh * n.adjoint() * hr.adjoint()).scale(sp);
        constant -= 2.0 * sp * linalg::trace_re(&(n * &h));
    }

    let mut psi = CMat::zeros(ne + 1, ne + 1);
    let mut z = CMat::zeros(ne, 1);
    for i in 0..ne {
        z[(i, 0)] = zmat[(i, i)];
        for j in 0..ne {
            psi[(i, j)] = a[(i, j)] * b[(j, i)];
        }
        psi[(i, ne)] = z[(i, 0)];
        psi[(ne, i)] = z[(i, 0)].conj();
    }
    Lifted { psi: linalg::hermitian_part(&psi), a, z, constant }
}

fn diag_blocks(m: &CMat, rrhs: &[usize], nr: usize, num_rrhs: usize) -> Vec<CMat> {
    let mut out = vec![CMat::zeros(nr, nr); num_rrhs];
    for (k, &l) in rrhs.iter().enumerate() {
        out[l] = m.view((k * nr, k * nr), (nr, nr)).into_owned();
    }
    out
}

fn add_blocks(acc: &mut [CMat], other: &[CMat]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

fn check_channel(ch: &ChannelSet, aux_rows: usize) -> Result<()> {
    if aux_rows != ch.h.nrows() {
        return Err(Error::Dimension(format!(
            "posterior covers {aux_rows} rows, channel has {}",
            ch.h.nrows()
        )));
    }
    Ok(())
}

/// The posterior term `E[(s − Wŷ)ᴴ Σ⁻¹ (s − Wŷ)] + log|Σ| − K` over one RRH set.
fn posterior_term(ch: &ChannelSet, aux: &MmseAux, p: f64, sigma2: f64) -> (Lifted, Vec<CMat>) {
    let q = linalg::hermitian_part(&(aux.w.adjoint() * &aux.sigma_inv * &aux.w));
    let n = &aux.sigma_inv * &aux.w;
    let mut lifted = lift_quadratic(ch, &aux.rrhs, &q, Some(&n), p);
    let k = aux.sigma.nrows() as f64;
    lifted.constant += sigma2 * linalg::trace_re(&q) + linalg::trace_re(&aux.sigma_inv) + aux.logdet_sigma - k;
    let blocks = diag_blocks(&q, &aux.rrhs, ch.antennas_per_rrh, ch.num_rrhs());
    (lifted, blocks)
}

/// The linearization `log|E| + Tr(E⁻¹ Γ_R) − dim(Γ_R)`.
fn head_term(ch: &ChannelSet, aux: &HeadAux, p: f64, sigma2: f64) -> (Lifted, Vec<CMat>) {
    let mut lifted = lift_quadratic(ch, &aux.rrhs, &aux.e_inv, None, p);
    let dim = aux.e.nrows() as f64;
    lifted.constant += aux.logdet_e + sigma2 * linalg::trace_re(&aux.e_inv) - dim;
    let blocks = diag_blocks(&aux.e_inv, &aux.rrhs, ch.antennas_per_rrh, ch.num_rrhs());
    (lifted, blocks)
}

pub fn build_objective(ch: &ChannelSet, aux: &AuxiliaryState, p: f64, sigma2: f64) -> Result<SurrogateObjective> {
    check_channel(ch, aux.posterior.w.ncols())?;
    let (lifted, omega_coeff) = posterior_term(ch, &aux.posterior, p, sigma2);
    Ok(SurrogateObjective {
        b: (&ch.hr * ch.hr.adjoint()).scale(p),
        psi: lifted.psi,
        omega_coeff,
        constant: lifted.constant,
        a: lifted.a,
        z: lifted.z,
    })
}

pub fn build_constraint(
    shape: &ConstraintShape,
    ch: &ChannelSet,
    aux: &AuxiliaryState,
    p: f64,
    sigma2: f64,
) -> Result<SurrogateConstraint> {
    check_channel(ch, aux.posterior.w.ncols())?;
    let (head, mut omega_coeff) = head_term(ch, aux.head(&shape.head), p, sigma2);
    let mut upsilon = head.psi;
    let mut constant = head.constant;
    if !shape.side.is_empty() {
        let side = aux
            .side(&shape.side)
            .ok_or_else(|| Error::Dimension(format!("no posterior for complement of {}", shape.id)))?;
        let (lifted, blocks) = posterior_term(ch, side, p, sigma2);
        upsilon += lifted.psi;
        constant += lifted.constant;
        add_blocks(&mut omega_coeff, &blocks);
    }
    Ok(SurrogateConstraint {
        id: shape.id,
        upsilon,
        omega_coeff,
        quant: shape.quant.clone(),
        side: shape.side.clone(),
        constant,
        rhs: shape.rhs,
        noise: sigma2,
    })
}

pub fn build_constraints(
    shapes: &[ConstraintShape],
    ch: &ChannelSet,
    aux: &AuxiliaryState,
    p: f64,
    sigma2: f64,
) -> Result<Vec<SurrogateConstraint>> {
    shapes.iter().map(|s| build_constraint(s, ch, aux, p, sigma2)).collect()
}

fn omega_linear(coeff: &[CMat], omega: &QuantNoise) -> f64 {
    coeff.iter().zip(&omega.blocks).map(|(c, o)| linalg::trace_product(c, o)).sum()
}

impl SurrogateObjective {
    pub fn evaluate(&self, theta_bar: &CMat, omega: &QuantNoise) -> Result<f64> {
        let v = linalg::trace_product(&self.psi, theta_bar) + omega_linear(&self.omega_coeff, omega) + self.constant;
        if !v.is_finite() {
            return Err(Error::NonFinite("surrogate objective"));
        }
        Ok(v)
    }
}

impl SurrogateConstraint {
    /// Left-hand side (nats).
    pub fn evaluate(&self, theta_bar: &CMat, omega: &QuantNoise) -> Result<f64> {
        let mut v = linalg::trace_product(&self.upsilon, theta_bar) + omega_linear(&self.omega_coeff, omega) + self.constant;
        for &l in &self.side {
            let mut m = omega.blocks[l].clone();
            for i in 0..m.nrows() {
                m[(i, i)] += c(self.noise);
            }
            v -= linalg::logdet(&m, "σ²I + Ω_S̄")?;
        }
        for &l in &self.quant {
            v -= linalg::logdet(&omega.blocks[l], "Ω_S").map_err(|_| Error::InfiniteCompressionRate)?;
        }
        if !v.is_finite() {
            return Err(Error::NonFinite("surrogate constraint"));
        }
        Ok(v)
    }

    pub fn slack(&self, theta_bar: &CMat, omega: &QuantNoise) -> Result<f64> {
        Ok(self.rhs - self.evaluate(theta_bar, omega)?)
    }
}
