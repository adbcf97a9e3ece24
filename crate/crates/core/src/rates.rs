//! Exact information-theoretic evaluators, all in nats.
//!
//! With `Γ_R = P V_R V_Rᴴ + σ² I + Ω_R` for a set `R` of RRHs:
//!
//! * sum rate: `log|Γ_L| − log|σ² I + Ω_L|`
//! * point-to-point constraint `l`: `log|Γ_l| − log|Ω_l| ≤ C_l`
//! * Wyner-Ziv constraint `S`: `log|Γ_L| − log|Ω_S| − log|Γ_S̄| ≤ Σ_{l∈S} C_l`
//!
//! Both constraint families share one shape: a "head" set bounded through
//! `log|Γ_head|`, a "quantized" set entering through `−log|Ω_S|`, and a
//! "side" set entering through `−log|Γ_S̄|` (empty for point-to-point).

use std::fmt;

use crate::channel::EffectiveChannel;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::scenario::Compression;

/// Quantization noise covariances `Ω_l`, one `N_R × N_R` block per RRH.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantNoise {
    pub blocks: Vec<CMat>,
}

impl QuantNoise {
    /// Symmetrizes each block; rejects blocks that are not Hermitian within
    /// 1e-10 (relative) or have eigenvalues below -1e-10, and clamps small
    /// negative eigenvalues to zero.
    pub fn new(blocks: Vec<CMat>) -> Result<Self> {
        let mut out = Vec::with_capacity(blocks.len());
        for b in blocks {
            if b.nrows() != b.ncols() {
                return Err(Error::Dimension("quantization covariance block is not square".into()));
            }
            let scale = b.iter().map(|z| z.norm()).fold(1.0, f64::max);
            if linalg::max_abs_diff(&b, &b.adjoint()) > 1e-10 * scale {
                return Err(Error::NotPositiveDefinite("Ω_l is not Hermitian"));
            }
            let h = linalg::hermitian_part(&b);
            let min = linalg::min_eigenvalue(&h);
            if min < -1e-10 * scale {
                return Err(Error::NotPositiveDefinite("Ω_l has a negative eigenvalue"));
            }
            out.push(if min < 0.0 { linalg::clamp_psd(&h) } else { h });
        }
        Ok(QuantNoise { blocks: out })
    }

    /// `Ω_l = β_l I` for every RRH.
    pub fn scalar(betas: &[f64], antennas_per_rrh: usize) -> Self {
        QuantNoise {
            blocks: betas
                .iter()
                .map(|&b| linalg::identity(antennas_per_rrh).scale(b))
                .collect(),
        }
    }

    pub fn uniform(beta: f64, num_rrhs: usize, antennas_per_rrh: usize) -> Self {
        Self::scalar(&vec![beta; num_rrhs], antennas_per_rrh)
    }

    pub fn num_rrhs(&self) -> usize {
        self.blocks.len()
    }

    pub fn antennas_per_rrh(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.nrows())
    }

    /// `Ω_R = diag({Ω_l}_{l∈R})`, in the order given.
    pub fn assembled_over(&self, rrhs: &[usize]) -> CMat {
        let blocks: Vec<CMat> = rrhs.iter().map(|&l| self.blocks[l].clone()).collect();
        linalg::block_diag(&blocks)
    }

    pub fn assembled(&self) -> CMat {
        linalg::block_diag(&self.blocks)
    }

    pub fn scaled(&self, gamma: f64) -> Self {
        QuantNoise { blocks: self.blocks.iter().map(|b| b.scale(gamma)).collect() }
    }

    /// The per-RRH scalars when every block is a multiple of the identity.
    pub fn betas(&self) -> Option<Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| {
                let beta = b[(0, 0)].re;
                let target = linalg::identity(b.nrows()).scale(beta);
                (linalg::max_abs_diff(b, &target) <= 1e-12 * beta.abs().max(1e-300)).then_some(beta)
            })
            .collect()
    }
}

/// A nonempty subset `S` of the RRHs, as a bitmask over `L` RRHs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetIndex {
    mask: u32,
    num_rrhs: usize,
}

impl SubsetIndex {
    pub fn new(mask: u32, num_rrhs: usize) -> Result<Self> {
        let full = Self::full_mask(num_rrhs);
        if mask == 0 || mask & !full != 0 {
            return Err(Error::Config(format!("subset mask {mask:#b} invalid for L = {num_rrhs}")));
        }
        Ok(SubsetIndex { mask, num_rrhs })
    }

    pub fn from_members(members: &[usize], num_rrhs: usize) -> Result<Self> {
        let mask = members.iter().fold(0u32, |m, &l| m | (1 << l));
        Self::new(mask, num_rrhs)
    }

    fn full_mask(num_rrhs: usize) -> u32 {
        ((1u64 << num_rrhs) - 1) as u32
    }

    /// All `2^L − 1` nonempty subsets in increasing mask order.
    pub fn all(num_rrhs: usize) -> Vec<SubsetIndex> {
        (1..=Self::full_mask(num_rrhs)).map(|mask| SubsetIndex { mask, num_rrhs }).collect()
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.num_rrhs).filter(|l| self.mask & (1 << l) != 0).collect()
    }

    pub fn complement(&self) -> Vec<usize> {
        (0..self.num_rrhs).filter(|l| self.mask & (1 << l) == 0).collect()
    }

    pub fn is_full(&self) -> bool {
        self.mask == Self::full_mask(self.num_rrhs)
    }
}

impl fmt::Display for SubsetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.members().iter().map(|l| (l + 1).to_string()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintId {
    WynerZiv(SubsetIndex),
    PointToPoint(usize),
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintId::WynerZiv(s) => write!(f, "wz{s}"),
            ConstraintId::PointToPoint(l) => write!(f, "p2p{{{}}}", l + 1),
        }
    }
}

/// One fronthaul constraint in head/quantized/side form with its capacity (nats).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintShape {
    pub id: ConstraintId,
    pub head: Vec<usize>,
    pub quant: Vec<usize>,
    pub side: Vec<usize>,
    pub rhs: f64,
}

/// The constraint family of a compression mode; `caps` are per-RRH capacities in nats.
pub fn constraint_shapes(mode: Compression, caps: &[f64]) -> Vec<ConstraintShape> {
    let l = caps.len();
    match mode {
        Compression::WynerZiv => SubsetIndex::all(l)
            .into_iter()
            .map(|s| {
                let quant = s.members();
                ConstraintShape {
                    id: ConstraintId::WynerZiv(s),
                    head: (0..l).collect(),
                    rhs: quant.iter().map(|&i| caps[i]).sum(),
                    side: s.complement(),
                    quant,
                }
            })
            .collect(),
        Compression::PointToPoint => (0..l)
            .map(|i| ConstraintShape {
                id: ConstraintId::PointToPoint(i),
                head: vec![i],
                quant: vec![i],
                side: Vec::new(),
                rhs: caps[i],
            })
            .collect(),
    }
}

fn check_inputs(v: &EffectiveChannel, omega: &QuantNoise, p: f64, sigma2: f64) -> Result<()> {
    if !(p > 0.0) || !(sigma2 > 0.0) || !p.is_finite() || !sigma2.is_finite() {
        return Err(Error::Config(format!("need P > 0 and σ² > 0, got {p}, {sigma2}")));
    }
    if omega.num_rrhs() != v.num_rrhs() || omega.antennas_per_rrh() != v.antennas_per_rrh {
        return Err(Error::Dimension(format!(
            "{} Ω blocks of size {} for {} RRHs with {} antennas",
            omega.num_rrhs(),
            omega.antennas_per_rrh(),
            v.num_rrhs(),
            v.antennas_per_rrh
        )));
    }
    Ok(())
}

/// `Γ_R = P V_R V_Rᴴ + σ² I + Ω_R`.
pub fn gamma(v: &EffectiveChannel, omega: &QuantNoise, rrhs: &[usize], p: f64, sigma2: f64) -> CMat {
    let vr = v.rows_of(rrhs);
    let n = vr.nrows();
    let mut g = (&vr * vr.adjoint()).scale(p) + omega.assembled_over(rrhs);
    for i in 0..n {
        g[(i, i)] += c(sigma2);
    }
    linalg::hermitian_part(&g)
}

fn noise_plus_quant(omega: &QuantNoise, rrhs: &[usize], sigma2: f64) -> CMat {
    let mut m = omega.assembled_over(rrhs);
    for i in 0..m.nrows() {
        m[(i, i)] += c(sigma2);
    }
    m
}

/// Uplink sum rate in nats.
pub fn sum_rate(v: &EffectiveChannel, omega: &QuantNoise, p: f64, sigma2: f64) -> Result<f64> {
    check_inputs(v, omega, p, sigma2)?;
    let all: Vec<usize> = (0..v.num_rrhs()).collect();
    let r = linalg::logdet(&gamma(v, omega, &all, p, sigma2), "Γ_L")?
        - linalg::logdet(&noise_plus_quant(omega, &all, sigma2), "σ²I + Ω_L")?;
    if !r.is_finite() {
        return Err(Error::NonFinite("sum rate"));
    }
    Ok(r.max(0.0))
}

fn logdet_quant(omega: &QuantNoise, rrhs: &[usize]) -> Result<f64> {
    linalg::logdet(&omega.assembled_over(rrhs), "Ω_S").map_err(|_| Error::InfiniteCompressionRate)
}

/// Left-hand side of a fronthaul constraint in nats.
pub fn fronthaul_lhs(shape: &ConstraintShape, v: &EffectiveChannel, omega: &QuantNoise, p: f64, sigma2: f64) -> Result<f64> {
    check_inputs(v, omega, p, sigma2)?;
    let head = linalg::logdet(&gamma(v, omega, &shape.head, p, sigma2), "Γ")?;
    let quant = logdet_quant(omega, &shape.quant)?;
    let side = linalg::logdet(&gamma(v, omega, &shape.side, p, sigma2), "Γ_S̄")?;
    let lhs = head - quant - side;
    if !lhs.is_finite() {
        return Err(Error::NonFinite("fronthaul constraint"));
    }
    Ok(lhs)
}

/// Point-to-point compression rate `I(y_l; ŷ_l)` of RRH `l`.
pub fn p2p_lhs(v: &EffectiveChannel, omega: &QuantNoise, l: usize, p: f64, sigma2: f64) -> Result<f64> {
    let shape = ConstraintShape { id: ConstraintId::PointToPoint(l), head: vec![l], quant: vec![l], side: vec![], rhs: 0.0 };
    fronthaul_lhs(&shape, v, omega, p, sigma2)
}

/// Wyner-Ziv rate `I(y_S; ŷ_S | ŷ_S̄)` of subset `S`.
pub fn wz_lhs(s: SubsetIndex, v: &EffectiveChannel, omega: &QuantNoise, p: f64, sigma2: f64) -> Result<f64> {
    let shape = ConstraintShape {
        id: ConstraintId::WynerZiv(s),
        head: (0..v.num_rrhs()).collect(),
        quant: s.members(),
        side: s.complement(),
        rhs: 0.0,
    };
    fronthaul_lhs(&shape, v, omega, p, sigma2)
}

/// `(id, capacity − lhs)` for every constraint of the mode, in nats.
pub fn all_fronthaul_slacks(
    mode: Compression,
    v: &EffectiveChannel,
    omega: &QuantNoise,
    caps: &[f64],
    p: f64,
    sigma2: f64,
) -> Result<Vec<(ConstraintId, f64)>> {
    constraint_shapes(mode, caps)
        .iter()
        .map(|s| Ok((s.id, s.rhs - fronthaul_lhs(s, v, omega, p, sigma2)?)))
        .collect()
}

pub fn min_slack(slacks: &[(ConstraintId, f64)]) -> f64 {
    slacks.iter().map(|s| s.1).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CVec, RMat};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn cg<R: Rng>(rng: &mut R) -> Complex64 {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    }

    fn random_psd<R: Rng>(n: usize, scale: f64, rng: &mut R) -> CMat {
        let a = CMat::from_fn(n, n, |_, _| cg(rng));
        linalg::hermitian_part(&(&a * a.adjoint())).scale(scale) + linalg::identity(n).scale(1e-3 * scale)
    }

    fn scalar(v: f64) -> EffectiveChannel {
        EffectiveChannel { v: CMat::from_element(1, 1, c(v)), antennas_per_rrh: 1 }
    }

    fn instance(seed: u64, l: usize, nr: usize, k: usize) -> (EffectiveChannel, QuantNoise) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = CMat::from_fn(l * nr, k, |_, _| cg(&mut rng));
        let blocks = (0..l).map(|_| random_psd(nr, 0.5, &mut rng)).collect();
        (EffectiveChannel { v, antennas_per_rrh: nr }, QuantNoise::new(blocks).unwrap())
    }

    /// Determinant of a complex matrix via its real 2n×2n embedding and LU:
    /// det(emb(A)) = |det A|².
    fn lu_logdet(a: &CMat) -> f64 {
        let n = a.nrows();
        let mut r = RMat::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = a[(i, j)];
                r[(i, j)] = z.re;
                r[(i + n, j + n)] = z.re;
                r[(i, j + n)] = -z.im;
                r[(i + n, j)] = z.im;
            }
        }
        0.5 * r.lu().determinant().abs().ln()
    }

    #[test]
    fn scalar_rate_is_ln2() {
        let q = QuantNoise::scalar(&[0.0], 1);
        assert!((sum_rate(&scalar(1.0), &q, 1.0, 1.0).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn huge_quantization_noise_kills_rate() {
        let (v, _) = instance(1, 2, 2, 3);
        let q = QuantNoise::uniform(1e12, 2, 2);
        assert!(sum_rate(&v, &q, 1.0, 1.0).unwrap() <= 1e-9);
    }

    #[test]
    fn sum_rate_matches_lu_oracle() {
        for seed in 0..20 {
            let (v, q) = instance(seed, 2, 2, 4);
            let (p, s2) = (2.0, 0.7);
            let all = [0, 1];
            let mut noise = q.assembled();
            for i in 0..4 {
                noise[(i, i)] += c(s2);
            }
            let direct = lu_logdet(&((&v.v * v.v.adjoint()).scale(p) + &noise)) - lu_logdet(&noise);
            let got = sum_rate(&v, &q, p, s2).unwrap();
            assert!(((got - direct) / direct).abs() <= 1e-10, "{got} vs {direct}");
            let _ = all;
        }
    }

    #[test]
    fn scalar_p2p_is_ln3() {
        let q = QuantNoise::scalar(&[1.0], 1);
        assert!((p2p_lhs(&scalar(1.0), &q, 0, 1.0, 1.0).unwrap() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn coarse_quantization_needs_no_bits() {
        let mut prev = f64::INFINITY;
        for exp in 0..8 {
            let q = QuantNoise::scalar(&[10f64.powi(exp)], 1);
            let lhs = p2p_lhs(&scalar(1.0), &q, 0, 1.0, 1.0).unwrap();
            assert!(lhs > 0.0 && lhs < prev);
            prev = lhs;
        }
        assert!(prev < 3e-7);
    }

    #[test]
    fn singular_omega_is_infinite_rate() {
        let q = QuantNoise::scalar(&[0.0], 1);
        assert!(matches!(p2p_lhs(&scalar(1.0), &q, 0, 1.0, 1.0), Err(Error::InfiniteCompressionRate)));
    }

    #[test]
    fn p2p_matches_gaussian_entropy_oracle() {
        // I(y; ŷ) = h(ŷ) − h(ŷ | y) with h(z) = log|πe Cov(z)| for proper Gaussians
        let (v, q) = instance(5, 2, 3, 2);
        let (p, s2) = (1.3, 0.4);
        for l in 0..2 {
            let vl = v.block(l);
            let n = vl.nrows();
            let cov_y = (&vl * vl.adjoint()).scale(p) + linalg::identity(n).scale(s2);
            let cov_yhat = &cov_y + &q.blocks[l];
            let pie = std::f64::consts::PI * std::f64::consts::E;
            let h_yhat = n as f64 * pie.ln() + lu_logdet(&cov_yhat);
            let h_given = n as f64 * pie.ln() + lu_logdet(&q.blocks[l]);
            let got = p2p_lhs(&v, &q, l, p, s2).unwrap();
            assert!((got - (h_yhat - h_given)).abs() < 1e-10);
        }
    }

    #[test]
    fn full_subset_reduces() {
        let (v, q) = instance(3, 3, 2, 2);
        let s = SubsetIndex::new(0b111, 3).unwrap();
        let all = [0, 1, 2];
        let expected = linalg::logdet(&gamma(&v, &q, &all, 1.0, 1.0), "").unwrap()
            - linalg::logdet(&q.assembled(), "").unwrap();
        assert!((wz_lhs(s, &v, &q, 1.0, 1.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn side_information_reduces_rate() {
        for seed in 0..100 {
            let (v, q) = instance(100 + seed, 2, 2, 3);
            for l in 0..2 {
                let s = SubsetIndex::from_members(&[l], 2).unwrap();
                let wz = wz_lhs(s, &v, &q, 1.5, 0.8).unwrap();
                let p2p = p2p_lhs(&v, &q, l, 1.5, 0.8).unwrap();
                assert!(wz <= p2p + 1e-12, "seed {seed}: {wz} > {p2p}");
            }
        }
    }

    #[test]
    fn single_rrh_coincidence() {
        let (v, q) = instance(8, 1, 3, 2);
        let s = SubsetIndex::new(1, 1).unwrap();
        assert_eq!(wz_lhs(s, &v, &q, 1.0, 1.0).unwrap(), p2p_lhs(&v, &q, 0, 1.0, 1.0).unwrap());
    }

    #[test]
    fn constraint_counts() {
        let caps = [1.0, 2.0];
        let wz = constraint_shapes(Compression::WynerZiv, &caps);
        assert_eq!(wz.len(), 3);
        let members: Vec<Vec<usize>> = wz.iter().map(|s| s.quant.clone()).collect();
        assert_eq!(members, vec![vec![0], vec![1], vec![0, 1]]);
        assert_eq!(wz[2].rhs, 3.0);
        assert_eq!(constraint_shapes(Compression::PointToPoint, &caps).len(), 2);
        assert_eq!(SubsetIndex::all(8).len(), 255);
    }

    #[test]
    fn slacks_increase_with_coarser_quantization() {
        for seed in 0..20 {
            let (v, q) = instance(200 + seed, 2, 2, 3);
            for mode in [Compression::WynerZiv, Compression::PointToPoint] {
                let a = all_fronthaul_slacks(mode, &v, &q, &[2.0, 2.0], 1.0, 1.0).unwrap();
                let b = all_fronthaul_slacks(mode, &v, &q.scaled(10.0), &[2.0, 2.0], 1.0, 1.0).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    assert!(y.1 >= x.1 - 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut b = linalg::identity(2);
        b[(0, 1)] = Complex64::new(0.5, 0.0);
        assert!(QuantNoise::new(vec![b]).is_err());
        let neg = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(-1e-3)]));
        assert!(QuantNoise::new(vec![neg]).is_err());
        let tiny = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(-1e-12)]));
        let q = QuantNoise::new(vec![tiny]).unwrap();
        assert!(linalg::min_eigenvalue(&q.blocks[0]) >= 0.0);
    }

    #[test]
    fn betas_round_trip() {
        let q = QuantNoise::scalar(&[0.5, 2.0], 3);
        assert_eq!(q.betas(), Some(vec![0.5, 2.0]));
        let (_, full) = instance(1, 2, 2, 2);
        assert_eq!(full.betas(), None);
    }
}
