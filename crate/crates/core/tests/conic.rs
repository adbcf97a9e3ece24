use irs_cran::auxiliary::AuxiliaryState;
use irs_cran::channel::{effective_channel, ChannelSet, PhaseConfig};
use irs_cran::conic::embed::{self, EmbeddedProblem};
use irs_cran::conic::{self, dump, hypograph, BarrierSettings, ConicProblem, ConicSettings, Relaxation};
use irs_cran::linalg::{self, CMat};
use irs_cran::rates::{all_fronthaul_slacks, constraint_shapes, min_slack, sum_rate, QuantNoise};
use irs_cran::scenario::{Compression, CovarianceMode};
use irs_cran::surrogate::{build_constraints, build_objective};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    ch: ChannelSet,
    phase: PhaseConfig,
    omega: QuantNoise,
    caps: Vec<f64>,
    mode: Compression,
    p: f64,
}

fn cn(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 2f64.sqrt()
}

fn instance(seed: u64, l: usize, nr: usize, k: usize, ne: usize, cap_bits: f64, mode: Compression) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = CMat::from_fn(l * nr, k, |_, _| cn(&mut rng));
    let g = CMat::from_fn(l * nr, ne, |_, _| cn(&mut rng) * 0.7);
    let hr = CMat::from_fn(ne, k, |_, _| cn(&mut rng) * 0.7);
    let ch = ChannelSet::new(h, g, hr, nr).unwrap();
    let phase = PhaseConfig::random(ne, &mut rng);
    let caps = vec![cap_bits * std::f64::consts::LN_2; l];
    let p = 4.0;
    // feasible uniform start
    let v = effective_channel(&ch, &phase).unwrap();
    let mut beta = 1.0;
    while min_slack(&all_fronthaul_slacks(mode, &v, &QuantNoise::uniform(beta, l, nr), &caps, p, 1.0).unwrap()) < 0.0 {
        beta *= 2.0;
    }
    Instance { ch, phase, omega: QuantNoise::uniform(beta, l, nr), caps, mode, p }
}

fn problem(inst: &Instance, cov: CovarianceMode) -> ConicProblem {
    let v = effective_channel(&inst.ch, &inst.phase).unwrap();
    let shapes = constraint_shapes(inst.mode, &inst.caps);
    let aux = AuxiliaryState::update(&v, &inst.omega, &shapes, inst.p, 1.0).unwrap();
    let obj = build_objective(&inst.ch, &aux, inst.p, 1.0).unwrap();
    let cons = build_constraints(&shapes, &inst.ch, &aux, inst.p, 1.0).unwrap();
    ConicProblem::new(&obj, &cons, cov, inst.ch.antennas_per_rrh).unwrap()
}

fn relax(inst: &Instance, prob: &ConicProblem) -> Relaxation {
    conic::solve_relaxation(prob, &inst.phase.lifted_matrix(), &inst.omega, &BarrierSettings::default()).unwrap()
}

#[test]
fn relaxation_improves_on_expansion_point() {
    for (seed, mode) in [(1, Compression::WynerZiv), (2, Compression::PointToPoint), (3, Compression::WynerZiv)] {
        let inst = instance(seed, 2, 2, 2, 4, 2.0, mode);
        let prob = problem(&inst, CovarianceMode::Full);
        let start = prob.objective(&inst.phase.lifted_matrix(), &inst.omega);
        let rate = sum_rate(&effective_channel(&inst.ch, &inst.phase).unwrap(), &inst.omega, inst.p, 1.0).unwrap();
        assert!((start + rate).abs() < 1e-8 * rate.max(1.0));
        let r = relax(&inst, &prob);
        assert!(r.objective <= start + 1e-9);
        let diag_err = (0..prob.theta_dim()).map(|i| (r.theta_bar[(i, i)].re - 1.0).abs()).fold(0.0, f64::max);
        assert!(diag_err <= 1e-7);
        assert!(linalg::min_eigenvalue(&r.theta_bar) > -1e-9);
        assert!(prob.slacks(&r.theta_bar, &r.omega).unwrap().iter().all(|&s| s >= -1e-7));
        assert!(r.hypograph_error <= 1e-7);
    }
}

#[test]
fn omega_only_at_previous_phase_does_not_increase() {
    for seed in 10..14 {
        let inst = instance(seed, 2, 2, 2, 4, 3.0, Compression::WynerZiv);
        let prob = problem(&inst, CovarianceMode::Full);
        let lifted = inst.phase.lifted_matrix();
        let start = prob.objective(&lifted, &inst.omega);
        let sol = conic::solve_omega_only(&prob, &lifted, &inst.omega, &BarrierSettings::default()).unwrap();
        assert!(sol.objective <= start + 1e-9, "{} > {start}", sol.objective);
        assert!(prob.slacks(&lifted, &sol.omega).unwrap().iter().all(|&s| s >= -1e-7));
        let cert = hypograph::certify(&sol.omega.blocks[0]).unwrap();
        assert!(cert.logdet_error() < 1e-7);
    }
}

#[test]
fn omega_only_single_antenna_matches_root_finding() {
    // one RRH, one antenna: minimize c·ω subject to a + d·ω − log ω ≤ C,
    // so the optimum is the smallest root of the constraint
    let inst = instance(21, 1, 1, 2, 3, 1.5, Compression::PointToPoint);
    let prob = problem(&inst, CovarianceMode::Full);
    let lifted = inst.phase.lifted_matrix();
    let sol = conic::solve_omega_only(&prob, &lifted, &inst.omega, &BarrierSettings::default()).unwrap();
    let k = &prob.constraints[0];
    let a = linalg::trace_product(&k.theta, &lifted) + k.constant;
    let d = k.omega[0][(0, 0)].re;
    let h = |w: f64| a + d * w - w.ln() - k.rhs;
    // h decreases up to 1/d; find the root below that
    let (mut lo, mut hi) = (1e-12, 1.0 / d);
    assert!(h(hi) < 0.0);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = sol.omega.blocks[0][(0, 0)].re;
    assert!((w - hi).abs() <= 1e-6 * hi, "solver {w}, root {hi}");
}

#[test]
fn rank_one_relaxation_rounds_to_itself() {
    let inst = instance(31, 2, 2, 2, 4, 2.0, Compression::WynerZiv);
    let prob = problem(&inst, CovarianceMode::Full);
    let target = inst.phase.clone();
    let lifted = target.lifted_matrix();
    let sol = conic::solve_omega_only(&prob, &lifted, &inst.omega, &BarrierSettings::default()).unwrap();
    let fake = Relaxation {
        theta_bar: lifted.clone(),
        omega: sol.omega.clone(),
        objective: sol.objective,
        gap: 0.0,
        newton_steps: 0,
        rank_one_ratio: 1.0,
        hypograph_error: 0.0,
        multipliers: vec![0.0; prob.constraints.len()],
        dual_floor: f64::NEG_INFINITY,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = conic::randomize_round(&fake, &prob, &ConicSettings::default(), &mut rng).unwrap();
    assert_eq!(r.candidates, 1);
    assert!(r.phase.theta.iter().zip(target.theta.iter()).all(|(a, b)| (a - b).norm() < 1e-9));
    assert!((r.objective - sol.objective).abs() < 1e-7);
    assert!(r.phase.max_modulus_error() < 1e-12);
}

#[test]
fn more_candidates_never_hurt() {
    for seed in 40..44 {
        let inst = instance(seed, 2, 2, 2, 6, 2.0, Compression::WynerZiv);
        let prob = problem(&inst, CovarianceMode::Full);
        let r = relax(&inst, &prob);
        let one = ConicSettings { num_candidates: 1, ..ConicSettings::default() };
        let a = conic::randomize_round(&r, &prob, &one, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = conic::randomize_round(&r, &prob, &ConicSettings::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        // pruned candidates can only be better by the solver tolerances
        let slack = 2.0 * r.gap + one.resolve.tol * (1.0 + a.objective.abs());
        assert!(b.objective <= a.objective + slack, "{} vs {}", b.objective, a.objective);
        assert!(b.objective >= r.objective - 1e-6);
        assert!(b.slacks.iter().all(|&s| s >= -1e-7));
    }
}

#[test]
fn candidate_bound_is_below_every_resolve() {
    for seed in 60..63 {
        let inst = instance(seed, 2, 2, 2, 5, 2.0, Compression::WynerZiv);
        let prob = problem(&inst, CovarianceMode::Full);
        let r = relax(&inst, &prob);
        assert!(r.candidate_bound(&prob, &r.theta_bar) <= r.objective + 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let phases: Vec<f64> = (0..5).map(|_| rng.random_range(-0.3..0.3)).collect();
            let cand = PhaseConfig::from_phases(&inst.phase.phases().iter().zip(&phases).map(|(a, b)| a + b).collect::<Vec<_>>());
            let lifted = cand.lifted_matrix();
            if let Ok(sol) = conic::solve_omega_only(&prob, &lifted, &inst.omega, &BarrierSettings::default()) {
                let lb = r.candidate_bound(&prob, &lifted);
                assert!(lb <= sol.objective + 1e-6 * (1.0 + sol.objective.abs()), "bound {lb} above {}", sol.objective);
            }
        }
    }
}

#[test]
fn rounding_two_elements_is_close_to_phase_grid() {
    let inst = instance(51, 2, 2, 2, 2, 2.0, Compression::WynerZiv);
    let prob = problem(&inst, CovarianceMode::Full);
    let r = relax(&inst, &prob);
    let rounded = conic::randomize_round(&r, &prob, &ConicSettings::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let settings = BarrierSettings::default();
    let mut best = f64::INFINITY;
    for i in 0..64 {
        for j in 0..64 {
            let ph = PhaseConfig::from_phases(&[i as f64 * std::f64::consts::TAU / 64.0, j as f64 * std::f64::consts::TAU / 64.0]);
            if let Ok(sol) = conic::solve_omega_only(&prob, &ph.lifted_matrix(), &r.omega, &settings) {
                best = best.min(sol.objective);
            }
        }
    }
    assert!(rounded.objective <= best + 0.05 * best.abs(), "rounded {} grid {best}", rounded.objective);
    assert!(r.objective <= best + 1e-7);
}

#[test]
fn scalar_mode_matches_full_with_one_antenna() {
    let inst = instance(61, 2, 1, 2, 4, 2.0, Compression::WynerZiv);
    let full = relax(&inst, &problem(&inst, CovarianceMode::Full));
    let sprob = problem(&inst, CovarianceMode::ScalarBeta);
    let (betas, scalar) = conic::solve_scalar_beta(&sprob, &inst.phase.lifted_matrix(), &inst.omega, &BarrierSettings::default()).unwrap();
    assert!((full.objective - scalar.objective).abs() < 1e-5 * full.objective.abs());
    assert!(betas.iter().all(|&b| b > 0.0));
}

#[test]
fn scalar_mode_keeps_identity_blocks() {
    let inst = instance(62, 2, 3, 2, 4, 2.0, Compression::PointToPoint);
    let sprob = problem(&inst, CovarianceMode::ScalarBeta);
    let (betas, r) = conic::solve_scalar_beta(&sprob, &inst.phase.lifted_matrix(), &inst.omega, &BarrierSettings::default()).unwrap();
    for (b, blk) in betas.iter().zip(&r.omega.blocks) {
        assert!(*b > 0.0);
        assert!(linalg::max_abs_diff(blk, &CMat::identity(3, 3).scale(*b)) < 1e-14);
    }
    let full = relax(&inst, &problem(&inst, CovarianceMode::Full));
    assert!(full.objective <= r.objective + 1e-7);
    assert!(conic::solve_scalar_beta(&problem(&inst, CovarianceMode::Full), &inst.phase.lifted_matrix(), &inst.omega, &BarrierSettings::default()).is_err());
}

#[test]
fn loose_fronthaul_drives_quantization_noise_down() {
    let inst = instance(71, 2, 2, 2, 4, 1000.0, Compression::WynerZiv);
    let prob = problem(&inst, CovarianceMode::Full);
    let r = relax(&inst, &prob);
    let biggest = r.omega.blocks.iter().map(|b| linalg::hermitian_eigen(b).0[1]).fold(0.0, f64::max);
    assert!(biggest < 1e-4, "largest eigenvalue {biggest}");
    let rounded = conic::randomize_round(&r, &prob, &ConicSettings::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(rounded.objective >= r.objective - 1e-6);
    assert!(rounded.objective <= r.objective + 0.05 * r.objective.abs());
}

fn true_slack(inst: &Instance, phase: &PhaseConfig, omega: &QuantNoise) -> f64 {
    let v = effective_channel(&inst.ch, phase).unwrap();
    min_slack(&all_fronthaul_slacks(inst.mode, &v, omega, &inst.caps, inst.p, 1.0).unwrap())
}

#[test]
fn discrete_projection_examples() {
    let inst = instance(81, 2, 2, 2, 6, 2.0, Compression::WynerZiv);
    let caps = &inst.caps;
    let fine = conic::project_discrete(&inst.phase, 30, &inst.ch, &inst.omega, inst.mode, caps, inst.p, 1.0, 1e-6).unwrap();
    for (a, b) in fine.phase.phases().iter().zip(inst.phase.phases()) {
        let d = (a - b).rem_euclid(std::f64::consts::TAU);
        assert!(d.min(std::f64::consts::TAU - d) < 1e-8);
    }

    let on_grid = PhaseConfig::from_phases(&[0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI, 0.0, 4.71238898038469, 0.0]);
    let proj = conic::project_discrete(&on_grid, 2, &inst.ch, &inst.omega.scaled(1e3), inst.mode, caps, inst.p, 1.0, 1e-6).unwrap();
    assert_eq!(proj.gamma, 1.0);
    assert!(proj.phase.theta.iter().zip(on_grid.theta.iter()).all(|(a, b)| (a - b).norm() < 1e-12));

    let binary = conic::project_discrete(&inst.phase, 1, &inst.ch, &inst.omega, inst.mode, caps, inst.p, 1.0, 1e-6).unwrap();
    for z in binary.phase.theta.iter() {
        assert!(z.im.abs() < 1e-12 && (z.re.abs() - 1.0).abs() < 1e-12);
    }

    // start exactly at the boundary so the snap has to be repaired
    let v = effective_channel(&inst.ch, &inst.phase).unwrap();
    let mut lo = 1e-6;
    let mut hi = 1e6;
    for _ in 0..200 {
        let mid = (lo * hi as f64).sqrt();
        let s = min_slack(&all_fronthaul_slacks(inst.mode, &v, &QuantNoise::uniform(mid, 2, 2), caps, inst.p, 1.0).unwrap());
        if s >= 0.0 { hi = mid } else { lo = mid }
    }
    let tight = QuantNoise::uniform(hi, 2, 2);
    let proj = conic::project_discrete(&inst.phase, 1, &inst.ch, &tight, inst.mode, caps, inst.p, 1.0, 1e-6).unwrap();
    assert!(proj.gamma >= 1.0);
    assert!(true_slack(&inst, &proj.phase, &proj.omega) >= 0.0);
    if proj.gamma > 1.0 {
        let smaller = tight.scaled(proj.gamma / (1.0 + 2e-6));
        assert!(true_slack(&inst, &proj.phase, &smaller) < 0.0);
    }
}

#[test]
fn embedded_evaluation_matches_complex() {
    let inst = instance(91, 2, 2, 2, 4, 2.0, Compression::WynerZiv);
    let prob = problem(&inst, CovarianceMode::Full);
    let emb = EmbeddedProblem::new(&prob);
    let mut rng = ChaCha8Rng::seed_from_u64(92);
    let n = prob.theta_dim();
    for _ in 0..50 {
        let a = CMat::from_fn(n, n, |_, _| cn(&mut rng));
        let theta = &a * a.adjoint();
        let blocks: Vec<CMat> = (0..2)
            .map(|_| {
                let b = CMat::from_fn(2, 2, |_, _| cn(&mut rng));
                &b * b.adjoint() + CMat::identity(2, 2).scale(0.1)
            })
            .collect();
        let omega = QuantNoise::new(blocks).unwrap();
        let oe: Vec<_> = omega.blocks.iter().map(embed::embed).collect();
        let direct = prob.objective(&theta, &omega);
        let embedded = emb.objective(&embed::embed(&theta), &oe);
        assert!((direct - embedded).abs() <= 1e-10 * direct.abs().max(1.0));
        let slacks = prob.slacks(&theta, &omega).unwrap();
        let lhs = emb.constraint_lhs(&embed::embed(&theta), &oe).unwrap();
        for ((s, l), k) in slacks.iter().zip(&lhs).zip(&emb.constraints) {
            assert!((k.rhs - s - l).abs() <= 1e-10 * l.abs().max(1.0));
        }
    }
}

#[test]
fn dump_lists_every_constraint() {
    let inst = instance(95, 2, 2, 2, 3, 2.0, Compression::WynerZiv);
    let prob = problem(&inst, CovarianceMode::Full);
    let mut buf = Vec::new();
    dump::write_problem(&EmbeddedProblem::new(&prob), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("irs-cran-conic 1\ntheta 4\nomega 2 2\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with("constraint ")).count(), 3);
    assert!(text.lines().any(|l| l.starts_with("a 2 theta ")));
}
