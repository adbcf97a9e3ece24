//! Closed-form auxiliary-variable updates: the MMSE posterior `(W, Σ)` of the
//! unit-power symbols given the compressed signals, the log-det linearization
//! point `E = Γ`, and the per-complement posteriors `(W_S̄, Σ_S̄)`.

use std::collections::BTreeMap;

use crate::channel::EffectiveChannel;
use crate::error::Result;
use crate::linalg::{self, CMat};
use crate::rates::{gamma, ConstraintShape, QuantNoise};

/// Linear MMSE estimator of `s` (with `x = √P s`) from the rows of one RRH set.
#[derive(Debug, Clone)]
pub struct MmseAux {
    pub rrhs: Vec<usize>,
    /// `K × |R|·N_R`
    pub w: CMat,
    /// `K × K`, Hermitian positive definite.
    pub sigma: CMat,
    pub sigma_inv: CMat,
    pub logdet_sigma: f64,
}

/// Expansion point of `log|Γ_R| ≤ log|E| + Tr(E⁻¹Γ_R) − dim`.
#[derive(Debug, Clone)]
pub struct HeadAux {
    pub rrhs: Vec<usize>,
    pub e: CMat,
    pub e_inv: CMat,
    pub logdet_e: f64,
}

#[derive(Debug, Clone)]
pub struct AuxiliaryState {
    /// Posterior over all RRHs; drives the objective.
    pub posterior: MmseAux,
    /// Keyed by RRH bitmask.
    pub heads: BTreeMap<u32, HeadAux>,
    /// Keyed by the bitmask of `S̄`; only nonempty complements appear.
    pub sides: BTreeMap<u32, MmseAux>,
}

pub fn rrh_mask(rrhs: &[usize]) -> u32 {
    rrhs.iter().fold(0, |m, &l| m | (1 << l))
}

/// `W = √P Vᴴ Γ⁻¹`, `Σ = I − √P W V` over the given RRH set.
pub fn update_w_sigma(v: &EffectiveChannel, omega: &QuantNoise, rrhs: &[usize], p: f64, sigma2: f64) -> Result<MmseAux> {
    let vr = v.rows_of(rrhs);
    let k = vr.ncols();
    let g = gamma(v, omega, rrhs, p, sigma2);
    // Γ⁻¹ V, then W = √P (Γ⁻¹V)ᴴ since Γ is Hermitian.
    let x = linalg::solve_hpd(&g, &vr, "Γ")?;
    let w = x.adjoint().scale(p.sqrt());
    let sigma = linalg::hermitian_part(&(linalg::identity(k) - (&w * &vr).scale(p.sqrt())));
    let ch = linalg::cholesky(&sigma).ok_or(crate::error::Error::NotPositiveDefinite("Σ"))?;
    let logdet_sigma = linalg::chol_logdet(&ch);
    let sigma_inv = linalg::hermitian_part(&ch.inverse());
    Ok(MmseAux { rrhs: rrhs.to_vec(), w, sigma, sigma_inv, logdet_sigma })
}

/// `E = Γ_R`.
pub fn update_e(v: &EffectiveChannel, omega: &QuantNoise, rrhs: &[usize], p: f64, sigma2: f64) -> Result<HeadAux> {
    let e = gamma(v, omega, rrhs, p, sigma2);
    let ch = linalg::cholesky(&e).ok_or(crate::error::Error::NotPositiveDefinite("E"))?;
    Ok(HeadAux {
        rrhs: rrhs.to_vec(),
        logdet_e: linalg::chol_logdet(&ch),
        e_inv: linalg::hermitian_part(&ch.inverse()),
        e,
    })
}

/// Posterior restricted to the rows of `S̄`; identical to [`update_w_sigma`].
pub fn update_subset_aux(v: &EffectiveChannel, omega: &QuantNoise, side: &[usize], p: f64, sigma2: f64) -> Result<MmseAux> {
    update_w_sigma(v, omega, side, p, sigma2)
}

impl AuxiliaryState {
    /// Re-tightens every auxiliary variable the constraint family needs at `(V, Ω)`.
    pub fn update(
        v: &EffectiveChannel,
        omega: &QuantNoise,
        shapes: &[ConstraintShape],
        p: f64,
        sigma2: f64,
    ) -> Result<Self> {
        let all: Vec<usize> = (0..v.num_rrhs()).collect();
        let posterior = update_w_sigma(v, omega, &all, p, sigma2)?;
        let mut heads = BTreeMap::new();
        let mut sides = BTreeMap::new();
        for s in shapes {
            let hm = rrh_mask(&s.head);
            if !heads.contains_key(&hm) {
                heads.insert(hm, update_e(v, omega, &s.head, p, sigma2)?);
            }
            if !s.side.is_empty() {
                let sm = rrh_mask(&s.side);
                if !sides.contains_key(&sm) {
                    let aux = if sm == rrh_mask(&all) {
                        posterior.clone()
                    } else {
                        update_subset_aux(v, omega, &s.side, p, sigma2)?
                    };
                    sides.insert(sm, aux);
                }
            }
        }
        Ok(AuxiliaryState { posterior, heads, sides })
    }

    pub fn head(&self, rrhs: &[usize]) -> &HeadAux {
        &self.heads[&rrh_mask(rrhs)]
    }

    pub fn side(&self, rrhs: &[usize]) -> Option<&MmseAux> {
        self.sides.get(&rrh_mask(rrhs))
    }
}
