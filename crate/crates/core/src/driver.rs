//! Outer alternating loop: auxiliary update, surrogate construction, relaxed
//! solve and rounding, with a monotone acceptance guard.
//!
//! The channel is normalized by the noise amplitude before the loop so the
//! receiver noise is `σ² = 1`; rates and fronthaul loads are invariant and
//! the stored `Ω` is in units of the noise power.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::auxiliary::AuxiliaryState;
use crate::channel::{effective_channel, ChannelSet, EffectiveChannel, PhaseConfig};
use crate::conic::{self, ConicProblem, ConicSettings};
use crate::error::{Error, Result};
use crate::rates::{all_fronthaul_slacks, constraint_shapes, min_slack, sum_rate, ConstraintId, ConstraintShape, QuantNoise};
use crate::scenario::{units, Compression, CovarianceMode, ScenarioConfig};
use crate::surrogate::{build_constraints, build_objective};

/// Slack below which an iterate counts as violating a true constraint (nats).
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Surrogate decrease below this is treated as no decrease.
const ACCEPT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct DriverSettings {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub conic: ConicSettings,
    /// Relative tolerance of the initial `β` bisection.
    pub bisection_tol: f64,
}

impl Default for DriverSettings {
    fn default() -> Self {
        DriverSettings { max_iters: 100, rel_tol: 1e-4, conic: ConicSettings::default(), bisection_tol: 1e-6 }
    }
}

/// The noise-normalized problem data shared by every iteration.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub ch: ChannelSet,
    pub compression: Compression,
    pub covariance: CovarianceMode,
    pub caps_nats: Vec<f64>,
    pub p: f64,
    /// Noise power used for normalization (W).
    pub noise: f64,
}

impl RunSetup {
    pub fn new(cfg: &ScenarioConfig, ch: &ChannelSet) -> Result<Self> {
        if ch.num_rrhs() != cfg.fronthaul_caps.len() || ch.antennas_per_rrh != cfg.antennas_per_rrh {
            return Err(Error::Dimension(format!(
                "channel has {} RRHs × {} antennas, config expects {} × {}",
                ch.num_rrhs(),
                ch.antennas_per_rrh,
                cfg.fronthaul_caps.len(),
                cfg.antennas_per_rrh
            )));
        }
        let noise = cfg.noise_power();
        Ok(RunSetup {
            ch: ch.scaled(1.0 / noise.sqrt()),
            compression: cfg.compression_mode,
            covariance: cfg.covariance_mode,
            caps_nats: cfg.caps_nats(),
            p: cfg.tx_power(),
            noise,
        })
    }

    pub fn shapes(&self) -> Vec<ConstraintShape> {
        constraint_shapes(self.compression, &self.caps_nats)
    }

    fn effective(&self, phase: &PhaseConfig) -> Result<EffectiveChannel> {
        effective_channel(&self.ch, phase)
    }

    pub fn rate(&self, phase: &PhaseConfig, omega: &QuantNoise) -> Result<f64> {
        sum_rate(&self.effective(phase)?, omega, self.p, 1.0)
    }

    pub fn slacks(&self, phase: &PhaseConfig, omega: &QuantNoise) -> Result<Vec<(ConstraintId, f64)>> {
        all_fronthaul_slacks(self.compression, &self.effective(phase)?, omega, &self.caps_nats, self.p, 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct IterateState {
    pub phase: PhaseConfig,
    /// Normalized quantization covariances (multiply by `noise` for watts).
    pub omega: QuantNoise,
    pub aux: Option<AuxiliaryState>,
    /// Sum rate in nats.
    pub rate: f64,
    pub surrogate: f64,
    pub iteration: usize,
    pub slacks: Vec<(ConstraintId, f64)>,
}

impl IterateState {
    pub fn rate_bits(&self) -> f64 {
        units::nats_to_bits(self.rate)
    }

    pub fn min_slack(&self) -> f64 {
        min_slack(&self.slacks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub rate_bits: f64,
    pub surrogate: f64,
    /// `λ₁ / Σλ` of the relaxed phase matrix; 1 when the phases were not optimized.
    pub rank_gap: f64,
    pub millis: f64,
    pub accepted: bool,
    pub min_slack: f64,
    /// Largest hypograph `log|Ω|` reconstruction error over this iteration's solves.
    pub hypograph_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Converged,
    MaxIterations,
    Rejected,
    SolverFailure(String),
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::Converged => write!(f, "converged"),
            Termination::MaxIterations => write!(f, "max-iterations"),
            Termination::Rejected => write!(f, "rejected"),
            Termination::SolverFailure(m) => write!(f, "solver-failure: {m}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    /// Row 0 is the initial point; one row per outer iteration after that.
    pub trace: Vec<TraceRow>,
    pub termination: Termination,
    pub state: IterateState,
    pub noise: f64,
}

impl RunReport {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    pub fn rate_bits(&self) -> f64 {
        self.state.rate_bits()
    }

    /// Accepted-iterate rates, initial point first.
    pub fn accepted_rates(&self) -> Vec<f64> {
        self.trace.iter().filter(|r| r.accepted).map(|r| r.rate_bits).collect()
    }

    pub fn max_hypograph_error(&self) -> f64 {
        self.trace.iter().map(|r| r.hypograph_error).fold(0.0, f64::max)
    }

    pub fn total_millis(&self) -> f64 {
        self.trace.iter().map(|r| r.millis).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Smallest uniform `β` (within `tol`, relative) with `Ω_l = βI` feasible at `phase`.
pub fn minimal_uniform_beta(setup: &RunSetup, phase: &PhaseConfig, tol: f64) -> Result<f64> {
    let v = setup.effective(phase)?;
    let (l, n) = (setup.ch.num_rrhs(), setup.ch.antennas_per_rrh);
    let feasible = |beta: f64| -> Result<bool> {
        let s = all_fronthaul_slacks(setup.compression, &v, &QuantNoise::uniform(beta, l, n), &setup.caps_nats, setup.p, 1.0)?;
        Ok(min_slack(&s) >= 0.0)
    };
    let mut hi = 1.0;
    while !feasible(hi)? {
        hi *= 4.0;
        if hi > 1e300 {
            return Err(Error::Infeasible(hi));
        }
    }
    let mut lo = hi / 4.0;
    while feasible(lo)? {
        hi = lo;
        lo /= 4.0;
        if lo < 1e-300 {
            return Ok(hi);
        }
    }
    while hi - lo > tol * hi {
        let mid = (lo * hi).sqrt();
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn state_at(setup: &RunSetup, phase: PhaseConfig, omega: QuantNoise, iteration: usize) -> Result<IterateState> {
    let rate = setup.rate(&phase, &omega)?;
    let slacks = setup.slacks(&phase, &omega)?;
    Ok(IterateState { phase, omega, aux: None, rate, surrogate: -rate, iteration, slacks })
}

/// Uniform random phases and the smallest feasible uniform `Ω = βI`.
pub fn initialize<R: Rng + ?Sized>(setup: &RunSetup, rng: &mut R, settings: &DriverSettings) -> Result<IterateState> {
    let phase = PhaseConfig::random(setup.ch.num_elements(), rng);
    initialize_at(setup, phase, settings)
}

pub fn initialize_at(setup: &RunSetup, phase: PhaseConfig, settings: &DriverSettings) -> Result<IterateState> {
    let beta = minimal_uniform_beta(setup, &phase, settings.bisection_tol)?;
    let omega = QuantNoise::uniform(beta, setup.ch.num_rrhs(), setup.ch.antennas_per_rrh);
    state_at(setup, phase, omega, 0)
}

struct Candidate {
    phase: PhaseConfig,
    omega: QuantNoise,
    objective: f64,
    rank_ratio: f64,
    hypograph_error: f64,
}

fn step<R: Rng + ?Sized>(
    setup: &RunSetup,
    state: &IterateState,
    optimize_phase: bool,
    settings: &DriverSettings,
    rng: &mut R,
) -> Result<(AuxiliaryState, f64, ConicProblem, Candidate)> {
    let v = setup.effective(&state.phase)?;
    let shapes = setup.shapes();
    let aux = AuxiliaryState::update(&v, &state.omega, &shapes, setup.p, 1.0)?;
    let obj = build_objective(&setup.ch, &aux, setup.p, 1.0)?;
    let cons = build_constraints(&shapes, &setup.ch, &aux, setup.p, 1.0)?;
    let lifted = state.phase.lifted_matrix();
    let previous = obj.evaluate(&lifted, &state.omega)?;
    let prob = ConicProblem::new(&obj, &cons, setup.covariance, setup.ch.antennas_per_rrh)?;
    let cand = if optimize_phase && !state.phase.is_empty() {
        let relax = conic::solve_relaxation(&prob, &lifted, &state.omega, &settings.conic.relaxation)?;
        let round = conic::randomize_round(&relax, &prob, &settings.conic, rng)?;
        Candidate {
            phase: round.phase,
            omega: round.omega,
            objective: round.objective,
            rank_ratio: relax.rank_one_ratio,
            hypograph_error: relax.hypograph_error.max(round.hypograph_error),
        }
    } else {
        let sol = conic::solve_omega_only(&prob, &lifted, &state.omega, &settings.conic.resolve)?;
        Candidate {
            phase: state.phase.clone(),
            omega: sol.omega,
            objective: sol.objective,
            rank_ratio: 1.0,
            hypograph_error: sol.hypograph_error,
        }
    };
    Ok((aux, previous, prob, cand))
}

/// Runs the alternating loop from `init`. With `optimize_phase = false` only
/// the quantization covariances are updated.
pub fn run_from<R: Rng + ?Sized>(
    setup: &RunSetup,
    init: IterateState,
    optimize_phase: bool,
    settings: &DriverSettings,
    rng: &mut R,
) -> RunReport {
    let mut state = init;
    let mut trace = vec![TraceRow {
        iteration: 0,
        rate_bits: state.rate_bits(),
        surrogate: state.surrogate,
        rank_gap: 1.0,
        millis: 0.0,
        accepted: true,
        min_slack: state.min_slack(),
        hypograph_error: 0.0,
    }];
    let mut rejections = 0;
    let mut termination = Termination::MaxIterations;
    for it in 1..=settings.max_iters {
        let clock = Instant::now();
        let (aux, previous, prob, cand) = match step(setup, &state, optimize_phase, settings, rng) {
            Ok(s) => s,
            Err(e) => {
                termination = Termination::SolverFailure(e.to_string());
                break;
            }
        };
        let mut accepted = cand.objective < previous - ACCEPT_TOL;
        let mut next = None;
        if accepted {
            match state_at(setup, cand.phase, cand.omega, it) {
                Ok(s) if s.min_slack() >= -FEASIBILITY_TOL && s.rate.is_finite() => next = Some(s),
                Ok(s) => {
                    log::warn!("iteration {it}: candidate violates a true constraint by {:.3e}", -s.min_slack());
                    accepted = false;
                }
                Err(e) => {
                    log::warn!("iteration {it}: candidate rejected: {e}");
                    accepted = false;
                }
            }
        }
        let old_rate = state.rate;
        match next {
            Some(mut s) => {
                s.surrogate = cand.objective;
                s.aux = Some(aux);
                state = s;
                rejections = 0;
            }
            None => {
                // the kept point stays feasible for the re-tightened surrogate
                let worst = prob
                    .slacks(&state.phase.lifted_matrix(), &state.omega)
                    .map_or(f64::NEG_INFINITY, |s| s.into_iter().fold(f64::INFINITY, f64::min));
                if worst < -FEASIBILITY_TOL {
                    log::warn!("iteration {it}: kept iterate has surrogate slack {worst:.3e}");
                }
                state.aux = Some(aux);
                state.iteration = it;
                rejections += 1;
            }
        }
        trace.push(TraceRow {
            iteration: it,
            rate_bits: state.rate_bits(),
            surrogate: if accepted { cand.objective } else { previous },
            rank_gap: cand.rank_ratio,
            millis: clock.elapsed().as_secs_f64() * 1e3,
            accepted,
            min_slack: state.min_slack(),
            hypograph_error: cand.hypograph_error,
        });
        if accepted && (state.rate - old_rate).abs() <= settings.rel_tol * old_rate.abs().max(f64::MIN_POSITIVE) {
            termination = Termination::Converged;
            break;
        }
        if rejections >= 2 {
            termination = Termination::Rejected;
            break;
        }
    }
    RunReport { trace, termination, state, noise: setup.noise }
}

/// Full loop for the compression and covariance modes in `cfg`.
pub fn run<R: Rng + ?Sized>(cfg: &ScenarioConfig, ch: &ChannelSet, settings: &DriverSettings, rng: &mut R) -> Result<RunReport> {
    let setup = RunSetup::new(cfg, ch)?;
    let init = initialize(&setup, rng, settings)?;
    Ok(run_from(&setup, init, true, settings, rng))
}

pub fn run_p2p<R: Rng + ?Sized>(cfg: &ScenarioConfig, ch: &ChannelSet, settings: &DriverSettings, rng: &mut R) -> Result<RunReport> {
    let cfg = ScenarioConfig { compression_mode: Compression::PointToPoint, ..cfg.clone() };
    run(&cfg, ch, settings, rng)
}

pub fn run_high_sqnr<R: Rng + ?Sized>(cfg: &ScenarioConfig, ch: &ChannelSet, settings: &DriverSettings, rng: &mut R) -> Result<RunReport> {
    let cfg = ScenarioConfig { covariance_mode: CovarianceMode::ScalarBeta, ..cfg.clone() };
    run(&cfg, ch, settings, rng)
}

/// Keeps `phase` fixed and optimizes the quantization covariances only.
pub fn run_fixed_phase(cfg: &ScenarioConfig, ch: &ChannelSet, phase: PhaseConfig, settings: &DriverSettings) -> Result<RunReport> {
    let setup = RunSetup::new(cfg, ch)?;
    let init = initialize_at(&setup, phase, settings)?;
    // no randomness is drawn when the phases are fixed
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    Ok(run_from(&setup, init, false, settings, &mut rng))
}
