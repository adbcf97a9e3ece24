//! Semidefinite relaxation of the convexified subproblem and recovery of a
//! unit-modulus phase vector from its solution.

pub mod barrier;
pub mod dump;
pub mod embed;
pub mod hypograph;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{effective_channel, ChannelSet, PhaseConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, RVec};
use crate::rates::{all_fronthaul_slacks, min_slack, ConstraintId, QuantNoise};
use crate::scenario::{Compression, CovarianceMode};
use crate::surrogate::{SurrogateConstraint, SurrogateObjective};

pub use barrier::BarrierSettings;
use barrier::{Point, Prepared};

/// Real coordinates of the block-diagonal quantization covariance.
///
/// `Full` uses `N_R²` coordinates per block: the diagonal, then for every
/// `i < j` the coefficients of `E_ij + E_ji` and `i(E_ij − E_ji)`.
/// `ScalarBeta` uses one coordinate `β_l` per block with `Ω_l = β_l I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OmegaParam {
    pub mode: CovarianceMode,
    pub num_rrhs: usize,
    pub n_r: usize,
}

impl OmegaParam {
    pub fn block_dim(&self) -> usize {
        match self.mode {
            CovarianceMode::Full => self.n_r * self.n_r,
            CovarianceMode::ScalarBeta => 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.num_rrhs * self.block_dim()
    }

    pub fn offset(&self, l: usize) -> usize {
        l * self.block_dim()
    }

    pub fn local_basis(&self) -> Vec<CMat> {
        let n = self.n_r;
        match self.mode {
            CovarianceMode::ScalarBeta => vec![linalg::identity(n)],
            CovarianceMode::Full => {
                let mut out = Vec::with_capacity(n * n);
                for i in 0..n {
                    let mut b = CMat::zeros(n, n);
                    b[(i, i)] = c(1.0);
                    out.push(b);
                }
                for i in 0..n {
                    for j in i + 1..n {
                        let mut re = CMat::zeros(n, n);
                        re[(i, j)] = c(1.0);
                        re[(j, i)] = c(1.0);
                        out.push(re);
                        let mut im = CMat::zeros(n, n);
                        im[(i, j)] = num_complex::Complex64::new(0.0, 1.0);
                        im[(j, i)] = num_complex::Complex64::new(0.0, -1.0);
                        out.push(im);
                    }
                }
                out
            }
        }
    }

    pub fn blocks(&self, y: &[f64]) -> Vec<CMat> {
        let n = self.n_r;
        (0..self.num_rrhs)
            .map(|l| {
                let v = &y[self.offset(l)..self.offset(l) + self.block_dim()];
                match self.mode {
                    CovarianceMode::ScalarBeta => CMat::identity(n, n).scale(v[0]),
                    CovarianceMode::Full => {
                        let mut b = CMat::zeros(n, n);
                        let mut k = n;
                        for i in 0..n {
                            b[(i, i)] = c(v[i]);
                            for j in i + 1..n {
                                let z = num_complex::Complex64::new(v[k], v[k + 1]);
                                b[(i, j)] = z;
                                b[(j, i)] = z.conj();
                                k += 2;
                            }
                        }
                        b
                    }
                }
            })
            .collect()
    }

    /// Coordinates of `omega`; in scalar mode each block is replaced by its mean eigenvalue.
    pub fn coordinates(&self, omega: &QuantNoise) -> RVec {
        let n = self.n_r;
        let mut y = RVec::zeros(self.dim());
        for (l, b) in omega.blocks.iter().enumerate() {
            let o = self.offset(l);
            match self.mode {
                CovarianceMode::ScalarBeta => y[o] = linalg::trace_re(b) / n as f64,
                CovarianceMode::Full => {
                    let mut k = n;
                    for i in 0..n {
                        y[o + i] = b[(i, i)].re;
                        for j in i + 1..n {
                            y[o + k] = b[(i, j)].re;
                            y[o + k + 1] = b[(i, j)].im;
                            k += 2;
                        }
                    }
                }
            }
        }
        y
    }

    pub fn quant_noise(&self, y: &[f64]) -> Result<QuantNoise> {
        QuantNoise::new(self.blocks(y))
    }
}

#[derive(Debug, Clone)]
pub struct ConicConstraint {
    pub id: ConstraintId,
    pub theta: CMat,
    pub omega: Vec<CMat>,
    pub quant: Vec<usize>,
    pub side: Vec<usize>,
    pub constant: f64,
    pub rhs: f64,
}

/// Minimize `Tr(Ψ Θ̄) + Σ Tr(C_l Ω_l)` over `Θ̄ ⪰ 0, diag(Θ̄) = 1, Ω_l ⪰ 0`
/// subject to the convexified fronthaul constraints.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub param: OmegaParam,
    pub objective_theta: CMat,
    pub objective_omega: Vec<CMat>,
    pub objective_constant: f64,
    pub constraints: Vec<ConicConstraint>,
    pub noise: f64,
}

impl ConicProblem {
    pub fn new(obj: &SurrogateObjective, cons: &[SurrogateConstraint], mode: CovarianceMode, n_r: usize) -> Result<Self> {
        let num_rrhs = obj.omega_coeff.len();
        let noise = cons.first().map_or(1.0, |k| k.noise);
        for k in cons {
            if k.upsilon.shape() != obj.psi.shape() || k.omega_coeff.len() != num_rrhs {
                return Err(Error::Dimension(format!("constraint {} does not match the objective", k.id)));
            }
        }
        Ok(ConicProblem {
            param: OmegaParam { mode, num_rrhs, n_r },
            objective_theta: obj.psi.clone(),
            objective_omega: obj.omega_coeff.clone(),
            objective_constant: obj.constant,
            constraints: cons
                .iter()
                .map(|k| ConicConstraint {
                    id: k.id,
                    theta: k.upsilon.clone(),
                    omega: k.omega_coeff.clone(),
                    quant: k.quant.clone(),
                    side: k.side.clone(),
                    constant: k.constant,
                    rhs: k.rhs,
                })
                .collect(),
            noise,
        })
    }

    pub fn theta_dim(&self) -> usize {
        self.objective_theta.nrows()
    }

    /// Objective value including the constant.
    pub fn objective(&self, theta_bar: &CMat, omega: &QuantNoise) -> f64 {
        linalg::trace_product(&self.objective_theta, theta_bar)
            + self
                .objective_omega
                .iter()
                .zip(&omega.blocks)
                .map(|(a, b)| linalg::trace_product(a, b))
                .sum::<f64>()
            + self.objective_constant
    }

    /// `rhs − lhs` of every constraint.
    pub fn slacks(&self, theta_bar: &CMat, omega: &QuantNoise) -> Result<Vec<f64>> {
        let prep = Prepared::new(self, Some(theta_bar));
        let point = Point { theta: None, y: self.param.coordinates(omega), s: None };
        let g = barrier::constraint_values(&prep, &point).ok_or(Error::InfiniteCompressionRate)?;
        Ok(g.into_iter().map(|v| -v).collect())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConicSettings {
    /// Settings for the relaxation over `(Θ̄, Ω)`.
    pub relaxation: BarrierSettings,
    /// Settings for the covariance-only re-solves.
    pub resolve: BarrierSettings,
    pub num_candidates: usize,
}

impl Default for ConicSettings {
    fn default() -> Self {
        ConicSettings {
            // the relaxation's Newton systems lose accuracy as Θ̄ approaches rank one
            relaxation: BarrierSettings { tol: 1e-6, ..BarrierSettings::default() },
            resolve: BarrierSettings::default(),
            num_candidates: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Relaxation {
    pub theta_bar: CMat,
    pub omega: QuantNoise,
    pub objective: f64,
    pub gap: f64,
    pub newton_steps: usize,
    /// `λ₁ / Σλ` of `Θ̄*`; one for a rank-one solution.
    pub rank_one_ratio: f64,
    /// Largest `|Σ log Z_ii − log|Ω_l||` over the hypograph certificates.
    pub hypograph_error: f64,
    /// Barrier estimates `1 / (t·(−g_S))` of the constraint multipliers.
    pub multipliers: Vec<f64>,
    /// Minimum of the covariance part of the Lagrangian at `multipliers`.
    pub dual_floor: f64,
}

impl Relaxation {
    /// Lower bound on the Ω-only optimum at a fixed `Θ̄`, from the relaxation's multipliers.
    pub fn candidate_bound(&self, prob: &ConicProblem, theta_bar: &CMat) -> f64 {
        let mut lb = linalg::trace_product(&prob.objective_theta, theta_bar) + prob.objective_constant + self.dual_floor;
        for (k, lam) in prob.constraints.iter().zip(&self.multipliers) {
            lb += lam * (linalg::trace_product(&k.theta, theta_bar) + k.constant - k.rhs);
        }
        lb
    }
}

/// `min_Ω Σ_l [Tr(D_l Ω_l) − a_l log|σ²I + Ω_l| − b_l log|Ω_l|]`, the covariance
/// part of the Lagrangian at multipliers `lambda ≥ 0`. The minimizer shares the
/// eigenvectors of `D_l`, so each eigenvalue `d` solves
/// `d = a / (σ² + ω) + b / ω` on its own.
pub fn covariance_floor(prob: &ConicProblem, lambda: &[f64]) -> f64 {
    let sigma2 = prob.noise;
    let n = prob.param.n_r;
    let mut total = 0.0;
    for l in 0..prob.param.num_rrhs {
        let mut d = prob.objective_omega[l].clone();
        let (mut a, mut b) = (0.0, 0.0);
        for (k, &lam) in prob.constraints.iter().zip(lambda) {
            d += k.omega[l].scale(lam);
            a += lam * k.side.iter().filter(|&&j| j == l).count() as f64;
            b += lam * k.quant.iter().filter(|&&j| j == l).count() as f64;
        }
        let eig = match prob.param.mode {
            CovarianceMode::Full => linalg::hermitian_eigen(&d).0,
            CovarianceMode::ScalarBeta => vec![linalg::trace_re(&d) / n as f64; n],
        };
        for dv in eig {
            if dv <= 0.0 {
                if a + b > 0.0 || dv < 0.0 {
                    return f64::NEG_INFINITY;
                }
                continue;
            }
            // d ω² + (d σ² − a − b) ω − b σ² = 0, positive root
            let q = dv * sigma2 - a - b;
            let w = ((-q + (q * q + 4.0 * dv * b * sigma2).sqrt()) / (2.0 * dv)).max(0.0);
            let mut v = dv * w - a * (sigma2 + w).ln();
            if b > 0.0 {
                v -= b * w.ln();
            }
            total += v;
        }
    }
    total
}

/// Phase one (when the start is not strictly feasible) followed by the barrier path.
fn solve_from(prep: &Prepared<'_>, theta0: Option<CMat>, y0: RVec, settings: &BarrierSettings) -> Result<barrier::BarrierOutcome> {
    let mut point = Point { theta: theta0, y: y0, s: None };
    let g0 = barrier::constraint_values(prep, &point).ok_or(Error::NotPositiveDefinite("conic start point"))?;
    let worst = g0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if worst >= 0.0 {
        point.s = Some(worst + 1.0f64.max(0.1 * worst.abs()));
        let phase1 = barrier::minimize(prep, point, settings, true)?;
        let s = phase1.objective;
        if !(s < 0.0) {
            return Err(Error::Infeasible(s));
        }
        point = Point { s: None, ..phase1.point };
    }
    barrier::minimize(prep, point, settings, false)
}

fn rank_one_ratio(theta_bar: &CMat) -> f64 {
    let (vals, _) = linalg::hermitian_eigen(theta_bar);
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    vals.last().copied().unwrap_or(0.0).max(0.0) / total
}

fn hypograph_error(omega: &QuantNoise) -> Result<f64> {
    omega
        .blocks
        .iter()
        .map(|b| hypograph::certify(b).map(|cert| cert.logdet_error()))
        .try_fold(0.0f64, |acc, e| e.map(|e| acc.max(e)))
}

/// Solves the relaxation starting near `start_theta` (typically `θ̄θ̄ᴴ` of the
/// current iterate) and `start_omega`.
pub fn solve_relaxation(prob: &ConicProblem, start_theta: &CMat, start_omega: &QuantNoise, settings: &BarrierSettings) -> Result<Relaxation> {
    let n = prob.theta_dim();
    if start_theta.nrows() != n {
        return Err(Error::Dimension(format!("start Θ̄ is {}×{}, problem has {n}", start_theta.nrows(), start_theta.ncols())));
    }
    let prep = Prepared::new(prob, None);
    let y_prev = prob.param.coordinates(start_omega);
    // A slightly inflated Ω lowers every constraint at the expansion point,
    // so a small mix toward the identity is usually strictly feasible.
    let mut start = None;
    for (eps, grow) in [(0.01, 0.0), (0.01, 0.02), (0.05, 0.1)] {
        let mut theta0 = linalg::hermitian_part(start_theta).scale(1.0 - eps) + CMat::identity(n, n).scale(eps);
        for i in 0..n {
            theta0[(i, i)] = c(1.0);
        }
        let point = Point { theta: Some(theta0), y: &y_prev * (1.0 + grow), s: None };
        let worst = barrier::constraint_values(&prep, &point).map(|g| g.into_iter().fold(f64::NEG_INFINITY, f64::max));
        let better = match (&start, worst) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some((w, _)), Some(v)) => v < *w,
        };
        if better {
            start = Some((worst.unwrap_or(f64::INFINITY), point));
        }
        if worst.is_some_and(|w| w < 0.0) {
            break;
        }
    }
    let (_, point) = start.ok_or(Error::NotPositiveDefinite("conic start point"))?;
    let out = solve_from(&prep, point.theta, point.y, settings)?;
    let g = barrier::constraint_values(&prep, &out.point).ok_or(Error::NonFinite("relaxed constraints"))?;
    let theta_bar = out.point.theta.ok_or(Error::NonFinite("relaxed Θ̄"))?;
    let omega = prob.param.quant_noise(out.point.y.as_slice())?;
    let t = prep.nu() / out.gap;
    let multipliers: Vec<f64> = g.iter().map(|v| 1.0 / (t * -v)).collect();
    let dual_floor = covariance_floor(prob, &multipliers);
    Ok(Relaxation {
        multipliers,
        dual_floor,
        objective: out.objective + prob.objective_constant,
        rank_one_ratio: rank_one_ratio(&theta_bar),
        hypograph_error: hypograph_error(&omega)?,
        theta_bar,
        omega,
        gap: out.gap,
        newton_steps: out.newton_steps,
    })
}

/// Same relaxation with `Ω_l = β_l I`.
pub fn solve_scalar_beta(prob: &ConicProblem, start_theta: &CMat, start_omega: &QuantNoise, settings: &BarrierSettings) -> Result<(Vec<f64>, Relaxation)> {
    if prob.param.mode != CovarianceMode::ScalarBeta {
        return Err(Error::Config("scalar-beta solve requested on a full-covariance problem".into()));
    }
    let relax = solve_relaxation(prob, start_theta, start_omega, settings)?;
    let betas = relax.omega.betas().ok_or(Error::NonFinite("scalar covariance"))?;
    Ok((betas, relax))
}

#[derive(Debug, Clone)]
pub struct OmegaSolution {
    pub omega: QuantNoise,
    pub objective: f64,
    pub hypograph_error: f64,
}

/// Optimizes the quantization covariances only, with `Θ̄` fixed.
pub fn solve_omega_only(prob: &ConicProblem, theta_bar: &CMat, start_omega: &QuantNoise, settings: &BarrierSettings) -> Result<OmegaSolution> {
    let prep = Prepared::new(prob, Some(theta_bar));
    let out = solve_from(&prep, None, prob.param.coordinates(start_omega), settings)?;
    let omega = prob.param.quant_noise(out.point.y.as_slice())?;
    Ok(OmegaSolution { objective: out.objective + prob.objective_constant, hypograph_error: hypograph_error(&omega)?, omega })
}

#[derive(Debug, Clone)]
pub struct RoundingResult {
    pub phase: PhaseConfig,
    pub omega: QuantNoise,
    /// Surrogate objective at the chosen candidate.
    pub objective: f64,
    /// Distinct candidates considered.
    pub candidates: usize,
    /// Candidates whose covariance re-solve was carried out and succeeded.
    pub solved: usize,
    /// Surrogate constraint slacks at the chosen point.
    pub slacks: Vec<f64>,
    /// Largest hypograph reconstruction error over every re-solve.
    pub hypograph_error: f64,
}

/// Unit-modulus projection of `v`, rotated so the last entry is 1, last entry dropped.
fn candidate_from(v: &CVec) -> PhaseConfig {
    let n = v.len();
    let anchor = v[n - 1].arg();
    let phases: Vec<f64> = (0..n - 1).map(|i| v[i].arg() - anchor).collect();
    PhaseConfig::from_phases(&phases)
}

fn same_phase(a: &PhaseConfig, b: &PhaseConfig) -> bool {
    a.theta.iter().zip(b.theta.iter()).all(|(x, y)| (x - y).norm() < 1e-9)
}

/// Gaussian randomization around `Θ̄*`. Each candidate gets an Ω-only re-solve;
/// the candidate with the smallest surrogate objective wins. The principal
/// eigenvector is always tried first.
pub fn randomize_round<R: Rng + ?Sized>(
    relax: &Relaxation,
    prob: &ConicProblem,
    settings: &ConicSettings,
    rng: &mut R,
) -> Result<RoundingResult> {
    let n = prob.theta_dim();
    let (vals, vecs) = linalg::hermitian_eigen(&relax.theta_bar);
    // directions at rounding-noise level would only jitter the candidates
    let floor = 1e-12 * vals[n - 1].max(0.0);
    let factor = CMat::from_fn(n, n, |i, j| if vals[j] > floor { vecs[(i, j)] * vals[j].sqrt() } else { c(0.0) });

    let mut pool: Vec<PhaseConfig> = Vec::with_capacity(settings.num_candidates + 1);
    pool.push(candidate_from(&vecs.column(n - 1).into_owned()));
    for _ in 0..settings.num_candidates {
        let r = CVec::from_fn(n, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            num_complex::Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        });
        let cand = candidate_from(&(&factor * r));
        if !pool.iter().any(|p| same_phase(p, &cand)) {
            pool.push(cand);
        }
    }

    let mut ranked: Vec<(f64, PhaseConfig, CMat)> = pool
        .into_iter()
        .map(|p| {
            let lifted = p.lifted_matrix();
            (relax.candidate_bound(prob, &lifted), p, lifted)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));

    let candidates = ranked.len();
    let relax_floor = relax.objective - relax.gap;
    let mut solved = 0;
    let mut hypo: f64 = 0.0;
    let mut best: Option<(f64, PhaseConfig, CMat, OmegaSolution)> = None;
    for (bound, phase, lifted) in ranked {
        // every candidate is bounded by the relaxation itself; within the
        // relaxation's own accuracy no further candidate can matter
        let margin = |b: f64| relax.gap + settings.resolve.tol * (1.0 + b.abs());
        if best.as_ref().is_some_and(|b| bound >= b.0 - settings.resolve.tol * (1.0 + b.0.abs()) || relax_floor >= b.0 - margin(b.0)) {
            break;
        }
        match solve_omega_only(prob, &lifted, &relax.omega, &settings.resolve) {
            Ok(sol) => {
                solved += 1;
                hypo = hypo.max(sol.hypograph_error);
                if best.as_ref().is_none_or(|b| sol.objective < b.0) {
                    best = Some((sol.objective, phase, lifted, sol));
                }
            }
            Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let (objective, phase, lifted, sol) = best.ok_or(Error::RoundingFailed)?;
    let slacks = prob.slacks(&lifted, &sol.omega)?;
    Ok(RoundingResult {
        phase,
        objective,
        candidates,
        solved,
        slacks,
        hypograph_error: hypo,
        omega: sol.omega,
    })
}

/// Nearest point of the `2^b`-level phase alphabet `{2πk / 2^b}`.
pub fn snap_phases(phase: &PhaseConfig, bits: u32) -> PhaseConfig {
    let levels = 2f64.powi(bits as i32);
    let step = std::f64::consts::TAU / levels;
    let snapped: Vec<f64> = phase
        .phases()
        .iter()
        .map(|&a| {
            let k = (a.rem_euclid(std::f64::consts::TAU) / step).round() % levels;
            k * step
        })
        .collect();
    PhaseConfig::from_phases(&snapped)
}

#[derive(Debug, Clone)]
pub struct DiscreteProjection {
    pub phase: PhaseConfig,
    pub omega: QuantNoise,
    pub gamma: f64,
    pub min_slack: f64,
}

/// Snaps the phases to `b` bits, then scales `Ω` by the smallest `γ ≥ 1`
/// (bisection to `tol`) that restores every true fronthaul constraint.
#[allow(clippy::too_many_arguments)]
pub fn project_discrete(
    phase: &PhaseConfig,
    bits: u32,
    ch: &ChannelSet,
    omega: &QuantNoise,
    mode: Compression,
    caps_nats: &[f64],
    p: f64,
    sigma2: f64,
    tol: f64,
) -> Result<DiscreteProjection> {
    if bits == 0 {
        return Err(Error::Config("phase resolution needs at least one bit".into()));
    }
    let snapped = snap_phases(phase, bits);
    let v = effective_channel(ch, &snapped)?;
    let worst = |gamma: f64| -> Result<f64> {
        Ok(min_slack(&all_fronthaul_slacks(mode, &v, &omega.scaled(gamma), caps_nats, p, sigma2)?))
    };
    let s1 = worst(1.0)?;
    if s1 >= 0.0 {
        return Ok(DiscreteProjection { phase: snapped, omega: omega.clone(), gamma: 1.0, min_slack: s1 });
    }
    let (mut lo, mut hi) = (1.0, 2.0);
    while worst(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e30 {
            return Err(Error::Infeasible(s1));
        }
    }
    while hi - lo > tol * lo {
        let mid = 0.5 * (lo + hi);
        if worst(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(DiscreteProjection { phase: snapped, omega: omega.scaled(hi), gamma: hi, min_slack: worst(hi)? })
}
