//! Primal log-barrier interior-point method for the relaxed subproblem.
//!
//! Variables are the lifted phase matrix `Θ̄` (Hermitian, unit diagonal,
//! positive semidefinite) and the real coordinates `y` of the quantization
//! covariances. The barrier is
//!
//! ```text
//! φ_t = t·f₀ − Σ_S log(−g_S) − log|Θ̄| − Σ_l log|Ω_l(y)|
//! ```
//!
//! where each `g_S` is affine in `Θ̄` and convex in `y` (linear terms minus
//! log-determinants). `Θ̄` only enters through the few affine functionals
//! `Tr(Υ_S Θ̄)`, so a Newton step reduces to a dense system of size
//! `n + m` (diagonal multipliers plus one scalar per constraint) instead of
//! the `n²` lifted coordinates: the `−log|Θ̄|` Hessian is inverted in closed
//! form, `H⁻¹(G) = Θ̄ G Θ̄`.

use nalgebra::{Cholesky, Dyn};
use num_complex::Complex64;

use super::{ConicProblem, OmegaParam};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, RMat, RVec};

#[derive(Debug, Clone, Copy)]
pub struct BarrierSettings {
    /// Target for `ν / t / (1 + |f₀|)`.
    pub tol: f64,
    pub mu: f64,
    /// Initial weight; in phase two a multiple of `ν / (1 + |f₀(x₀)|)`.
    pub t0: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        BarrierSettings { tol: 1e-7, mu: 20.0, t0: 1.0, newton_tol: 1e-6, max_newton: 2000 }
    }
}

/// A point of the (possibly phase-one augmented) problem.
#[derive(Debug, Clone)]
pub struct Point {
    pub theta: Option<CMat>,
    pub y: RVec,
    /// Phase-one shift `s` of every constraint, when present.
    pub s: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BarrierOutcome {
    pub point: Point,
    /// Objective `f₀` without constants.
    pub objective: f64,
    pub gap: f64,
    pub newton_steps: usize,
}

/// Log-determinant of one Hermitian block and its derivatives in `y`.
struct LogdetDerivs {
    grad: RVec,
    hess: RMat,
}

struct BlockState {
    chol_q: Cholesky<Complex64, Dyn>,
    chol_n: Cholesky<Complex64, Dyn>,
    logdet_q: f64,
    logdet_n: f64,
}

/// Everything the barrier needs at one point; `None` when outside the domain.
struct Eval {
    blocks: Vec<BlockState>,
    g: Vec<f64>,
    f0: f64,
    phi: f64,
}

pub(crate) struct Prepared<'a> {
    prob: &'a ConicProblem,
    param: OmegaParam,
    basis: Vec<CMat>,
    /// Objective coefficients on `y`.
    c_y: RVec,
    /// Per-constraint linear coefficients on `y`.
    d: Vec<RVec>,
    /// Per-constraint constant minus capacity, plus `Tr(Υ Θ̄)` when `Θ̄` is fixed.
    offset: Vec<f64>,
    obj_offset: f64,
    free_theta: bool,
}

impl<'a> Prepared<'a> {
    pub(crate) fn new(prob: &'a ConicProblem, fixed_theta: Option<&CMat>) -> Self {
        let param = prob.param;
        let basis = param.local_basis();
        let coeffs = |blocks: &[CMat]| -> RVec {
            let mut v = RVec::zeros(param.dim());
            for (l, cl) in blocks.iter().enumerate() {
                for (j, b) in basis.iter().enumerate() {
                    v[param.offset(l) + j] = linalg::trace_product(cl, b);
                }
            }
            v
        };
        let c_y = coeffs(&prob.objective_omega);
        let d = prob.constraints.iter().map(|k| coeffs(&k.omega)).collect();
        let mut offset: Vec<f64> = prob.constraints.iter().map(|k| k.constant - k.rhs).collect();
        let mut obj_offset = 0.0;
        if let Some(t) = fixed_theta {
            obj_offset += linalg::trace_product(&prob.objective_theta, t);
            for (o, k) in offset.iter_mut().zip(&prob.constraints) {
                *o += linalg::trace_product(&k.theta, t);
            }
        }
        Prepared { prob, param, basis, c_y, d, offset, obj_offset, free_theta: fixed_theta.is_none() }
    }

    fn m(&self) -> usize {
        self.prob.constraints.len()
    }

    /// Barrier parameter `ν`: one per constraint plus the cone dimensions.
    pub(crate) fn nu(&self) -> f64 {
        let theta = if self.free_theta { self.prob.theta_dim() } else { 0 };
        (self.m() + theta + self.param.num_rrhs * self.param.n_r) as f64
    }

    /// Cone factorizations and unshifted constraint values; `None` outside the cones.
    fn raw(&self, x: &Point) -> Option<(Vec<BlockState>, f64, Vec<f64>)> {
        let mut blocks = Vec::with_capacity(self.param.num_rrhs);
        for b in &self.param.blocks(x.y.as_slice()) {
            let chol_q = linalg::cholesky(b)?;
            let mut n = b.clone();
            for i in 0..n.nrows() {
                n[(i, i)] += c(self.prob.noise);
            }
            let chol_n = linalg::cholesky(&n)?;
            blocks.push(BlockState {
                logdet_q: linalg::chol_logdet(&chol_q),
                logdet_n: linalg::chol_logdet(&chol_n),
                chol_q,
                chol_n,
            });
        }
        let theta_logdet = match &x.theta {
            Some(th) => linalg::chol_logdet(&linalg::cholesky(th)?),
            None => 0.0,
        };
        let mut g = Vec::with_capacity(self.m());
        for (i, k) in self.prob.constraints.iter().enumerate() {
            let mut v = self.offset[i] + self.d[i].dot(&x.y);
            if let Some(th) = &x.theta {
                v += linalg::trace_product(&k.theta, th);
            }
            for &l in &k.side {
                v -= blocks[l].logdet_n;
            }
            for &l in &k.quant {
                v -= blocks[l].logdet_q;
            }
            g.push(v);
        }
        Some((blocks, theta_logdet, g))
    }

    fn eval(&self, x: &Point, t: f64) -> Option<Eval> {
        let (blocks, theta_logdet, mut g) = self.raw(x)?;
        let shift = x.s.unwrap_or(0.0);
        let mut phi = 0.0;
        for v in g.iter_mut() {
            *v -= shift;
            if !(*v < 0.0) {
                return None;
            }
            phi -= (-*v).ln();
        }
        let f0 = match x.s {
            Some(s) => s,
            None => {
                let mut f = self.obj_offset + self.c_y.dot(&x.y);
                if let Some(th) = &x.theta {
                    f += linalg::trace_product(&self.prob.objective_theta, th);
                }
                f
            }
        };
        phi += t * f0 - theta_logdet - blocks.iter().map(|b| b.logdet_q).sum::<f64>();
        if !phi.is_finite() {
            return None;
        }
        Some(Eval { blocks, g, f0, phi })
    }

    fn logdet_derivs(&self, chol: &Cholesky<Complex64, Dyn>) -> LogdetDerivs {
        let f = chol.inverse();
        let fb: Vec<CMat> = self.basis.iter().map(|b| &f * b).collect();
        let k = fb.len();
        let mut grad = RVec::zeros(k);
        let mut hess = RMat::zeros(k, k);
        for i in 0..k {
            grad[i] = linalg::trace_re(&fb[i]);
            for j in i..k {
                let v = -linalg::trace_product(&fb[i], &fb[j]);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        LogdetDerivs { grad, hess }
    }

    /// Newton direction and squared decrement at `x`.
    fn newton(&self, x: &Point, ev: &Eval, t: f64) -> Option<(Point, f64)> {
        let p = self.param.dim();
        let q = p + usize::from(x.s.is_some());
        let m = self.m();
        let bd = self.param.block_dim();

        let dq: Vec<LogdetDerivs> = ev.blocks.iter().map(|b| self.logdet_derivs(&b.chol_q)).collect();
        let dn: Vec<LogdetDerivs> = ev.blocks.iter().map(|b| self.logdet_derivs(&b.chol_n)).collect();

        // y-part gradient and Hessian: t·c, domain barrier −Σ log|Ω_l|, and
        // per-constraint terms w ∇h + w ∇²h with w = 1/(−g).
        let mut gy = RVec::zeros(q);
        let mut h0 = RMat::zeros(q, q);
        match x.s {
            Some(_) => gy[p] = t,
            None => gy.rows_mut(0, p).copy_from(&(&self.c_y * t)),
        }
        for l in 0..self.param.num_rrhs {
            let o = self.param.offset(l);
            let mut gv = gy.rows_mut(o, bd);
            gv -= &dq[l].grad;
            let mut hv = h0.view_mut((o, o), (bd, bd));
            hv -= &dq[l].hess;
        }
        let mut bmat = RMat::zeros(q, m);
        let w: Vec<f64> = ev.g.iter().map(|g| 1.0 / (-g)).collect();
        for (i, k) in self.prob.constraints.iter().enumerate() {
            let mut b = RVec::zeros(q);
            b.rows_mut(0, p).copy_from(&self.d[i]);
            if x.s.is_some() {
                b[p] = -1.0;
            }
            for (set, der) in [(&k.side, &dn), (&k.quant, &dq)] {
                for &l in set.iter() {
                    let o = self.param.offset(l);
                    let mut bv = b.rows_mut(o, bd);
                    bv -= &der[l].grad;
                    let mut hv = h0.view_mut((o, o), (bd, bd));
                    hv -= &der[l].hess * w[i];
                }
            }
            gy += &b * w[i];
            bmat.set_column(i, &b);
        }
        let wd2 = RVec::from_iterator(m, w.iter().map(|v| v * v));
        let full_hessian = || -> Option<_> {
            let mut hf = h0.clone();
            for i in 0..m {
                let b = bmat.column(i);
                hf += b * b.transpose() * wd2[i];
            }
            nalgebra::Cholesky::new(linalg_sym(&hf))
        };

        if !self.free_theta {
            let dy = -full_hessian()?.solve(&gy);
            let lambda2 = -gy.dot(&dy);
            return Some((split_y(dy, p, x.s.is_some(), None), lambda2));
        }

        let theta = x.theta.as_ref()?;
        let n = theta.nrows();
        // Θ̄-gradient is g_lin − Θ̄⁻¹; its sandwich Θ̄ g_lin Θ̄ − Θ̄ needs no inverse.
        let mut g_lin = CMat::zeros(n, n);
        if x.s.is_none() {
            g_lin += self.prob.objective_theta.scale(t);
        }
        for (i, k) in self.prob.constraints.iter().enumerate() {
            g_lin += k.theta.scale(w[i]);
        }
        // Only Υ_S Θ̄ and g_lin Θ̄ are formed; the sandwiches Θ̄ · Θ̄ enter
        // through traces and diagonals.
        let ut: Vec<CMat> = self.prob.constraints.iter().map(|k| linalg::mul(&k.theta, theta)).collect();
        let gt = linalg::mul(&g_lin, theta);
        let a_vec = RVec::from_iterator(m, ut.iter().map(|u| linalg::trace_product(u, &gt) - linalg::trace_re(u)));
        let mut mm = RMat::zeros(m, m);
        for r in 0..m {
            for s in r..m {
                let v = linalg::trace_product(&ut[r], &ut[s]);
                mm[(r, s)] = v;
                mm[(s, r)] = v;
            }
        }
        let diag_of = |b: &CMat| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| (theta[(i, j)] * b[(j, i)]).re).sum()).collect() };
        let xcols: Vec<Vec<f64>> = ut.iter().map(diag_of).collect();
        let xmat = RMat::from_fn(n, m, |i, s| xcols[s][i]);
        let tmat = RMat::from_fn(n, n, |i, j| theta[(i, j)].norm_sqr());
        let xgd = RVec::from_iterator(n, diag_of(&gt).into_iter().map(|v| v - 1.0));
        let wv = RVec::from_iterator(m, w.iter().copied());
        let wd = RMat::from_diagonal(&wv);

        // With z = W Aᵀ d (A stacking the constraint gradients) the Newton
        // system reduces to a positive definite one in (z, ν) whose blocks are
        // sums of Gram matrices, so large weights do not cancel.
        // The y-curvature without the rank-one terms is singular in the
        // shift coordinate, so phase one eliminates y with the full Hessian.
        let (yinv_b, yinv_g, chol_y) = match x.s {
            None => {
                let ch = nalgebra::Cholesky::new(linalg_sym(&h0))?;
                (ch.solve(&bmat), ch.solve(&gy), ch)
            }
            Some(_) => {
                let ch = full_hessian()?;
                (ch.solve(&bmat), ch.solve(&gy), ch)
            }
        };
        let dim = m + n;
        let mut sys = RMat::zeros(dim, dim);
        let mut rhs = RVec::zeros(dim);
        if x.s.is_none() {
            let my = bmat.transpose() * &yinv_b;
            sys.view_mut((0, 0), (m, m)).copy_from(&(RMat::identity(m, m) + &wd * (&mm + &my) * &wd));
            sys.view_mut((0, m), (m, n)).copy_from(&(&wd * xmat.transpose()));
            sys.view_mut((m, 0), (n, m)).copy_from(&(&xmat * &wd));
            rhs.rows_mut(0, m).copy_from(&(-(&wd * (&a_vec + bmat.transpose() * &yinv_g))));
        } else {
            let wd2m = RMat::from_diagonal(&wd2);
            let nf = bmat.transpose() * &yinv_b;
            let cmat = &wd2m - &wd2m * &nf * &wd2m;
            let r = &wd2m * (bmat.transpose() * &yinv_g);
            sys.view_mut((0, 0), (m, m)).copy_from(&(RMat::identity(m, m) + &cmat * &mm));
            sys.view_mut((0, m), (m, n)).copy_from(&(&cmat * xmat.transpose()));
            sys.view_mut((m, 0), (n, m)).copy_from(&xmat);
            rhs.rows_mut(0, m).copy_from(&(-(&cmat * &a_vec) - &r));
        }
        sys.view_mut((m, m), (n, n)).copy_from(&tmat);
        rhs.rows_mut(m, n).copy_from(&(-&xgd));
        let sol = solve_scaled(&sys, &rhs)?;
        let zeta = sol.rows(0, m).into_owned();
        let nu = sol.rows(m, n).into_owned();
        // multiplier on each Θ̄ X_S term
        let eta = match x.s {
            None => wv.component_mul(&zeta),
            Some(_) => zeta,
        };

        let nu_c = CMat::from_diagonal(&nalgebra::DVector::from_iterator(n, nu.iter().map(|&v| c(v))));
        let mut g_step = &g_lin + &nu_c;
        for (s, k) in self.prob.constraints.iter().enumerate() {
            g_step += k.theta.scale(eta[s]);
        }
        // Θ̄⁻¹ dΘ = I − G Θ̄ for the step's combined gradient G
        let k = CMat::identity(n, n) - linalg::mul(&g_step, theta);
        let mut d_theta = linalg::hermitian_part(&linalg::mul(theta, &k));
        for i in 0..n {
            d_theta[(i, i)] = c(0.0);
        }
        let dy = match x.s {
            None => -(yinv_g + &yinv_b * &eta),
            Some(_) => {
                let cvec = RVec::from_iterator(m, self.prob.constraints.iter().map(|k| linalg::trace_product(&k.theta, &d_theta)));
                -chol_y.solve(&(&gy + &bmat * wd2.component_mul(&cvec)))
            }
        };
        // λ² = dᵀ∇²φ d
        let mut lambda2 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (k[(i, j)] * k[(j, i)]).re).sum::<f64>();
        lambda2 += dy.dot(&(&h0 * &dy));
        for (i, kc) in self.prob.constraints.iter().enumerate() {
            let lin = linalg::trace_product(&kc.theta, &d_theta) + bmat.column(i).dot(&dy);
            lambda2 += wd2[i] * lin * lin;
        }
        Some((split_y(dy, p, x.s.is_some(), Some(d_theta)), lambda2))
    }
}

fn linalg_sym(a: &RMat) -> RMat {
    (a + a.transpose()) * 0.5
}

/// Solve after symmetric diagonal equilibration.
fn solve_scaled(a: &RMat, b: &RVec) -> Option<RVec> {
    let d = RVec::from_iterator(a.nrows(), (0..a.nrows()).map(|i| {
        let v = a[(i, i)].abs();
        if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }
    }));
    let scaled = RMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[i] * d[j]);
    let u = solve_refined(&scaled, &b.component_mul(&d))?;
    Some(u.component_mul(&d))
}

/// LU solve with one step of iterative refinement.
fn solve_refined(a: &RMat, b: &RVec) -> Option<RVec> {
    let lu = a.clone().lu();
    let mut x = lu.solve(b)?;
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn split_y(dy: RVec, p: usize, has_s: bool, theta: Option<CMat>) -> Point {
    Point { theta, s: has_s.then(|| dy[p]), y: dy.rows(0, p).into_owned() }
}

fn step(x: &Point, d: &Point, alpha: f64) -> Point {
    Point {
        theta: match (&x.theta, &d.theta) {
            (Some(a), Some(b)) => Some(a + b.scale(alpha)),
            (a, _) => a.clone(),
        },
        y: &x.y + &d.y * alpha,
        s: x.s.map(|s| s + alpha * d.s.unwrap_or(0.0)),
    }
}

const MAX_CENTERING: usize = 200;
const NOISE_STEPS: usize = 6;

/// Runs the barrier path from a strictly feasible `x0`. With `stop_when_negative`
/// (phase one) it returns as soon as the shift `s` drops below zero.
pub(crate) fn minimize(
    prep: &Prepared<'_>,
    x0: Point,
    settings: &BarrierSettings,
    stop_when_negative: bool,
) -> Result<BarrierOutcome> {
    let nu = prep.nu();
    let mut x = x0;
    let mut t = settings.t0;
    let mut ev = prep.eval(&x, t).ok_or(Error::NotPositiveDefinite("barrier start point"))?;
    if !stop_when_negative {
        t = settings.t0 * nu / (1.0 + ev.f0.abs());
        ev = prep.eval(&x, t).ok_or(Error::NotPositiveDefinite("barrier start point"))?;
    }
    let t_start = t;
    let mut landed = false;
    let mut steps = 0;
    loop {
        // centering
        let mut stalled = false;
        let mut inner = 0;
        // consecutive steps whose decrease the barrier value barely registers
        let mut negligible = 0;
        loop {
            if stop_when_negative && x.s.is_some_and(|s| s < 0.0) {
                return Ok(BarrierOutcome { objective: ev.f0, point: x, gap: nu / t, newton_steps: steps });
            }
            if steps >= settings.max_newton {
                return Err(Error::MaxIterations(steps));
            }
            let Some((d, lambda2)) = prep.newton(&x, &ev, t) else {
                stalled = true;
                break;
            };
            steps += 1;
            inner += 1;
            // below this the barrier value cannot resolve the predicted decrease
            let resolvable = 1e-13 * (1.0 + ev.phi.abs());
            if !(lambda2 > settings.newton_tol) || lambda2 < resolvable || inner > MAX_CENTERING {
                break;
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let cand = step(&x, &d, alpha);
                if let Some(e) = prep.eval(&cand, t) {
                    if e.phi <= ev.phi - 0.01 * alpha * lambda2 {
                        accepted = Some((cand, e));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((cand, e)) => {
                    if ev.phi - e.phi < 1e-10 * (1.0 + ev.phi.abs()) {
                        negligible += 1;
                    } else {
                        negligible = 0;
                    }
                    x = cand;
                    ev = e;
                    if negligible >= NOISE_STEPS {
                        // the Newton system has reached its rounding-error floor
                        stalled = true;
                        break;
                    }
                }
                None => {
                    stalled = true;
                    break;
                }
            }
        }
        let gap = nu / t;
        if stop_when_negative && !stalled && ev.f0 - gap > 0.0 {
            // the shift cannot reach zero: certified infeasible
            return Ok(BarrierOutcome { objective: ev.f0, point: x, gap, newton_steps: steps });
        }
        if landed || gap <= settings.tol * (1.0 + ev.f0.abs()) || (stalled && gap <= 1e3 * settings.tol * (1.0 + ev.f0.abs())) {
            return Ok(BarrierOutcome { objective: ev.f0, point: x, gap, newton_steps: steps });
        }
        if stalled && t > t_start {
            // numerical floor reached before the requested gap
            log::debug!("barrier stalled at gap {gap:.3e}");
            return Ok(BarrierOutcome { objective: ev.f0, point: x, gap, newton_steps: steps });
        }
        // land the last stage on the target instead of overshooting it
        let target = nu / (settings.tol * (1.0 + ev.f0.abs()));
        landed = target <= t * settings.mu;
        t = if landed { target.max(t * 2.0) } else { t * settings.mu };
        ev = prep.eval(&x, t).ok_or(Error::NonFinite("barrier reevaluation"))?;
    }
}

/// Constraint values `g_S` (without any phase-one shift) at a point.
pub(crate) fn constraint_values(prep: &Prepared<'_>, x: &Point) -> Option<Vec<f64>> {
    prep.raw(x).map(|r| r.2)
}
