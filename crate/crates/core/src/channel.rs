//! Channel synthesis for one Monte Carlo drop and effective-channel assembly.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, ZERO};
use crate::scenario::ScenarioConfig;

/// One channel realization. Rows of `h` and `g` are stacked per RRH
/// (`N_R` rows each); columns of `g` and rows of `hr` are stacked per IRS.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Direct user→RRH channels, `L·N_R × K`.
    pub h: CMat,
    /// IRS→RRH channels, `L·N_R × M·N_I`.
    pub g: CMat,
    /// User→IRS channels, `M·N_I × K`.
    pub hr: CMat,
    pub antennas_per_rrh: usize,
}

impl ChannelSet {
    pub fn new(h: CMat, g: CMat, hr: CMat, antennas_per_rrh: usize) -> Result<Self> {
        let ch = ChannelSet { h, g, hr, antennas_per_rrh };
        ch.check()?;
        Ok(ch)
    }

    fn check(&self) -> Result<()> {
        let n = self.antennas_per_rrh;
        if n == 0 || self.h.nrows() % n != 0 {
            return Err(Error::Dimension(format!(
                "{} receive rows is not a multiple of N_R = {n}",
                self.h.nrows()
            )));
        }
        if self.g.nrows() != self.h.nrows()
            || self.g.ncols() != self.hr.nrows()
            || self.hr.ncols() != self.h.ncols()
        {
            return Err(Error::Dimension(format!(
                "H {}x{}, G {}x{}, H_R {}x{}",
                self.h.nrows(),
                self.h.ncols(),
                self.g.nrows(),
                self.g.ncols(),
                self.hr.nrows(),
                self.hr.ncols()
            )));
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.h.ncols()
    }

    pub fn num_rrhs(&self) -> usize {
        self.h.nrows() / self.antennas_per_rrh
    }

    /// Total number of reflecting elements `M·N_I`.
    pub fn num_elements(&self) -> usize {
        self.hr.nrows()
    }

    /// Same channel with every IRS link removed.
    pub fn without_irs(&self) -> ChannelSet {
        ChannelSet {
            h: self.h.clone(),
            g: CMat::zeros(self.h.nrows(), 0),
            hr: CMat::zeros(0, self.h.ncols()),
            antennas_per_rrh: self.antennas_per_rrh,
        }
    }

    /// Multiplies every channel by `factor` (used to normalize by the noise amplitude).
    pub fn scaled(&self, factor: f64) -> ChannelSet {
        // V = H + G Θ H_R scales linearly when H and G do.
        ChannelSet {
            h: self.h.scale(factor),
            g: self.g.scale(factor),
            hr: self.hr.clone(),
            antennas_per_rrh: self.antennas_per_rrh,
        }
    }

    /// Writes the channel as CSV: a `# dims` comment line, then
    /// `matrix,row,col,re,im` records for `H`, `G` and `HR`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(
            out,
            "# dims n_r={} H={}x{} G={}x{} HR={}x{}",
            self.antennas_per_rrh,
            self.h.nrows(),
            self.h.ncols(),
            self.g.nrows(),
            self.g.ncols(),
            self.hr.nrows(),
            self.hr.ncols()
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["matrix", "row", "col", "re", "im"])?;
        for (name, m) in [("H", &self.h), ("G", &self.g), ("HR", &self.hr)] {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    let z = m[(i, j)];
                    w.write_record([
                        name.to_string(),
                        i.to_string(),
                        j.to_string(),
                        format!("{:e}", z.re),
                        format!("{:e}", z.im),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<ChannelSet> {
        let mut text = String::new();
        let mut input = input;
        input.read_to_string(&mut text)?;
        let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
        let dims = first
            .strip_prefix("# dims ")
            .ok_or_else(|| Error::Config("channel dump lacks a '# dims' header".into()))?;
        let mut n_r = 0;
        let mut shapes = std::collections::HashMap::new();
        for tok in dims.split_whitespace() {
            let (key, val) = tok
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad dims token {tok:?}")))?;
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Config(format!("bad dimension {s:?}")))
            };
            if key == "n_r" {
                n_r = parse(val)?;
            } else {
                let (r, c) = val
                    .split_once('x')
                    .ok_or_else(|| Error::Config(format!("bad shape {val:?}")))?;
                shapes.insert(key.to_string(), (parse(r)?, parse(c)?));
            }
        }
        let shape = |k: &str| {
            shapes.get(k).copied().ok_or_else(|| Error::Config(format!("missing shape for {k}")))
        };
        let (hr_, hc) = shape("H")?;
        let (gr, gc) = shape("G")?;
        let (rr, rc) = shape("HR")?;
        let mut h = CMat::zeros(hr_, hc);
        let mut g = CMat::zeros(gr, gc);
        let mut hrm = CMat::zeros(rr, rc);
        let mut rdr = csv::Reader::from_reader(rest.as_bytes());
        for rec in rdr.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| {
                field(i).parse::<f64>().map_err(|_| Error::Config(format!("bad number {:?}", field(i))))
            };
            let idx = |i: usize| {
                field(i).parse::<usize>().map_err(|_| Error::Config(format!("bad index {:?}", field(i))))
            };
            let m = match field(0) {
                "H" => &mut h,
                "G" => &mut g,
                "HR" => &mut hrm,
                other => return Err(Error::Config(format!("unknown matrix {other:?}"))),
            };
            let (i, j) = (idx(1)?, idx(2)?);
            if i >= m.nrows() || j >= m.ncols() {
                return Err(Error::Dimension(format!("entry ({i},{j}) outside {}", field(0))));
            }
            m[(i, j)] = Complex64::new(num(3)?, num(4)?);
        }
        ChannelSet::new(h, g, hrm, n_r)
    }
}

/// IRS reflection coefficients `θ̂` (unit modulus, stacked over IRSs).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    pub theta: CVec,
}

impl PhaseConfig {
    pub fn new(theta: CVec) -> Self {
        PhaseConfig { theta }
    }

    pub fn from_phases(phases: &[f64]) -> Self {
        PhaseConfig {
            theta: CVec::from_iterator(phases.len(), phases.iter().map(|&p| Complex64::from_polar(1.0, p))),
        }
    }

    pub fn ones(n: usize) -> Self {
        PhaseConfig { theta: CVec::from_element(n, Complex64::new(1.0, 0.0)) }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let phases: Vec<f64> = (0..n).map(|_| std::f64::consts::TAU * rng.random::<f64>()).collect();
        Self::from_phases(&phases)
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.theta.iter().map(|z| z.arg()).collect()
    }

    pub fn max_modulus_error(&self) -> f64 {
        self.theta.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `θ̄ = [θ̂ᵀ, 1]ᵀ`.
    pub fn lifted_vector(&self) -> CVec {
        let n = self.len();
        let mut v = CVec::zeros(n + 1);
        v.rows_mut(0, n).copy_from(&self.theta);
        v[n] = Complex64::new(1.0, 0.0);
        v
    }

    /// `Θ̄ = θ̄ θ̄ᴴ`.
    pub fn lifted_matrix(&self) -> CMat {
        let v = self.lifted_vector();
        &v * v.adjoint()
    }
}

/// `V_L = H_L + G_L Θ H_R`, with per-RRH row blocks `V_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub v: CMat,
    pub antennas_per_rrh: usize,
}

impl EffectiveChannel {
    pub fn num_rrhs(&self) -> usize {
        self.v.nrows() / self.antennas_per_rrh
    }

    pub fn block(&self, l: usize) -> CMat {
        let n = self.antennas_per_rrh;
        self.v.rows(l * n, n).into_owned()
    }

    /// Row blocks for the listed RRHs, stacked in the given order.
    pub fn rows_of(&self, rrhs: &[usize]) -> CMat {
        crate::linalg::select_row_blocks(&self.v, rrhs, self.antennas_per_rrh)
    }
}

pub fn effective_channel(ch: &ChannelSet, phase: &PhaseConfig) -> Result<EffectiveChannel> {
    if phase.len() != ch.num_elements() {
        return Err(Error::Dimension(format!(
            "{} phases for {} IRS elements",
            phase.len(),
            ch.num_elements()
        )));
    }
    let mut v = ch.h.clone();
    if !phase.is_empty() {
        // G diag(θ) scales the columns of G.
        let mut gt = ch.g.clone();
        for (j, mut col) in gt.column_iter_mut().enumerate() {
            col *= phase.theta[j];
        }
        v += gt * &ch.hr;
    }
    Ok(EffectiveChannel { v, antennas_per_rrh: ch.antennas_per_rrh })
}

/// Half-wavelength-style ULA response along the x axis for a direction `(dx, dy)`.
pub fn steering_vector(n: usize, spacing: f64, dx: f64, dy: f64) -> CVec {
    let cos_phi = dx / dx.hypot(dy);
    CVec::from_iterator(
        n,
        (0..n).map(|i| Complex64::from_polar(1.0, std::f64::consts::TAU * spacing * i as f64 * cos_phi)),
    )
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn distance(a: [f64; 2], b: [f64; 2]) -> Result<f64> {
    let d = (a[0] - b[0]).hypot(a[1] - b[1]);
    if d == 0.0 {
        return Err(Error::ZeroDistance);
    }
    Ok(d)
}

/// LoS/scatter weights `(√(κ/(1+κ)), √(1/(1+κ)))`, exact at κ = ∞.
fn rician_weights(kappa: f64) -> (f64, f64) {
    if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    }
}

/// Draws one realization: Rayleigh user→RRH links, Rician user→IRS and
/// IRS→RRH links whose LoS part is built from ULA steering vectors.
pub fn draw_channels<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    users: &[[f64; 2]],
    rng: &mut R,
) -> Result<ChannelSet> {
    cfg.validate()?;
    if users.len() != cfg.num_users {
        return Err(Error::Dimension(format!("{} user positions for K = {}", users.len(), cfg.num_users)));
    }
    let (k, l, m) = (cfg.num_users, cfg.num_rrhs, cfg.num_irs);
    let (nr, ni) = (cfg.antennas_per_rrh, cfg.elements_per_irs);
    let xi = cfg.pathloss_ref();
    let (w_los, w_nlos) = rician_weights(cfg.rician_factor());
    let spacing = cfg.array_spacing;
    let exps = cfg.exponents;

    let mut h = CMat::zeros(l * nr, k);
    for (li, &rrh) in cfg.rrh_positions.iter().enumerate() {
        for (ki, &user) in users.iter().enumerate() {
            let amp = (xi * distance(rrh, user)?.powf(-exps.user_rrh)).sqrt();
            for a in 0..nr {
                h[(li * nr + a, ki)] = complex_gaussian(rng) * amp;
            }
        }
    }

    let mut hr = CMat::zeros(m * ni, k);
    for (mi, &irs) in cfg.irs_positions.iter().enumerate() {
        for (ki, &user) in users.iter().enumerate() {
            let amp = (xi * distance(irs, user)?.powf(-exps.user_irs)).sqrt();
            let los = steering_vector(ni, spacing, user[0] - irs[0], user[1] - irs[1]);
            for e in 0..ni {
                let z = los[e] * w_los + complex_gaussian(rng) * w_nlos;
                hr[(mi * ni + e, ki)] = z * amp;
            }
        }
    }

    let mut g = CMat::from_element(l * nr, m * ni, ZERO);
    for (li, &rrh) in cfg.rrh_positions.iter().enumerate() {
        for (mi, &irs) in cfg.irs_positions.iter().enumerate() {
            let amp = (xi * distance(rrh, irs)?.powf(-exps.irs_rrh)).sqrt();
            let arrive = steering_vector(nr, spacing, irs[0] - rrh[0], irs[1] - rrh[1]);
            let depart = steering_vector(ni, spacing, rrh[0] - irs[0], rrh[1] - irs[1]);
            for a in 0..nr {
                for e in 0..ni {
                    let los = arrive[a] * depart[e].conj();
                    g[(li * nr + a, mi * ni + e)] = (los * w_los + complex_gaussian(rng) * w_nlos) * amp;
                }
            }
        }
    }

    let ch = ChannelSet::new(h, g, hr, nr)?;
    if !crate::linalg::is_finite(&ch.h) || !crate::linalg::is_finite(&ch.g) || !crate::linalg::is_finite(&ch.hr) {
        return Err(Error::NonFinite("channel realization"));
    }
    Ok(ch)
}
