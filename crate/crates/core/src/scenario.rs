//! Scenario configuration, unit conversions and seeded randomness.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported RRH count; Wyner-Ziv enumerates `2^L - 1` subsets.
pub const MAX_RRHS: usize = 8;

/// dBm / dB / bits / nats conversions.
pub mod units {
    use std::f64::consts::LN_2;

    pub fn dbm_to_watts(dbm: f64) -> f64 {
        10f64.powf((dbm - 30.0) / 10.0)
    }

    pub fn watts_to_dbm(w: f64) -> f64 {
        10.0 * w.log10() + 30.0
    }

    pub fn db_to_linear(db: f64) -> f64 {
        10f64.powf(db / 10.0)
    }

    pub fn bits_to_nats(bits: f64) -> f64 {
        bits * LN_2
    }

    pub fn nats_to_bits(nats: f64) -> f64 {
        nats / LN_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Compression {
    WynerZiv,
    PointToPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMode {
    Full,
    ScalarBeta,
}

/// IRS phase resolution: continuous, or `b` bits (`2^b` uniformly spaced phases).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseResolution {
    #[default]
    Continuous,
    Bits(u32),
}

impl fmt::Display for PhaseResolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseResolution::Continuous => write!(f, "continuous"),
            PhaseResolution::Bits(b) => write!(f, "{b}"),
        }
    }
}

impl Serialize for PhaseResolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PhaseResolution::Continuous => s.serialize_str("continuous"),
            PhaseResolution::Bits(b) => s.serialize_u32(*b),
        }
    }
}

impl<'de> Deserialize<'de> for PhaseResolution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Bits(u32),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Bits(b) => Ok(PhaseResolution::Bits(b)),
            Raw::Word(w) if w == "continuous" => Ok(PhaseResolution::Continuous),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "phase_bits must be an integer or \"continuous\", got {w:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossExponents {
    pub user_rrh: f64,
    pub user_irs: f64,
    pub irs_rrh: f64,
}

/// Everything needed to reproduce one experiment.
///
/// Powers are in dBm, gains in dB, capacities in bits/s/Hz per RRH and
/// positions in meters on the plane. Counts `num_rrhs` and `num_irs` must
/// agree with the position lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_users: usize,
    pub num_rrhs: usize,
    pub num_irs: usize,
    pub antennas_per_rrh: usize,
    pub elements_per_irs: usize,
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub fronthaul_caps: Vec<f64>,
    pub pathloss_ref_db: f64,
    pub exponents: PathLossExponents,
    pub rician_factor_db: f64,
    pub user_disk_radius: f64,
    pub rrh_positions: Vec<[f64; 2]>,
    pub irs_positions: Vec<[f64; 2]>,
    /// Element spacing of the uniform linear arrays, in wavelengths.
    pub array_spacing: f64,
    pub phase_bits: PhaseResolution,
    pub seed: u64,
    pub compression_mode: Compression,
    pub covariance_mode: CovarianceMode,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        default_paper_scenario()
    }
}

/// The reference two-RRH, two-IRS layout at desk scale (`N_I = 20`).
pub fn default_paper_scenario() -> ScenarioConfig {
    ScenarioConfig {
        num_users: 4,
        num_rrhs: 2,
        num_irs: 2,
        antennas_per_rrh: 4,
        elements_per_irs: 20,
        tx_power_dbm: 10.0,
        noise_power_dbm: -89.0,
        fronthaul_caps: vec![5.0, 5.0],
        pathloss_ref_db: -30.0,
        exponents: PathLossExponents { user_rrh: 3.6, user_irs: 2.2, irs_rrh: 2.2 },
        rician_factor_db: 10.0,
        user_disk_radius: 30.0,
        rrh_positions: vec![[-30.0, 90.0], [30.0, 90.0]],
        irs_positions: vec![[-40.0, 80.0], [40.0, 80.0]],
        array_spacing: 0.5,
        phase_bits: PhaseResolution::Continuous,
        seed: 1,
        compression_mode: Compression::WynerZiv,
        covariance_mode: CovarianceMode::Full,
    }
}

impl ScenarioConfig {
    /// The reference layout at its original size (`N_I = 50`).
    pub fn full_scale() -> Self {
        ScenarioConfig { elements_per_irs: 50, ..default_paper_scenario() }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("num_users", self.num_users),
            ("num_rrhs", self.num_rrhs),
            ("antennas_per_rrh", self.antennas_per_rrh),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.num_rrhs > MAX_RRHS {
            return bad(format!("num_rrhs = {} exceeds {MAX_RRHS}", self.num_rrhs));
        }
        if self.rrh_positions.len() != self.num_rrhs {
            return bad(format!(
                "{} RRH positions for num_rrhs = {}",
                self.rrh_positions.len(),
                self.num_rrhs
            ));
        }
        if self.irs_positions.len() != self.num_irs {
            return bad(format!(
                "{} IRS positions for num_irs = {}",
                self.irs_positions.len(),
                self.num_irs
            ));
        }
        if self.num_irs > 0 && self.elements_per_irs == 0 {
            return bad("elements_per_irs must be at least 1".into());
        }
        if self.fronthaul_caps.len() != self.num_rrhs {
            return bad(format!(
                "{} fronthaul capacities for num_rrhs = {}",
                self.fronthaul_caps.len(),
                self.num_rrhs
            ));
        }
        if self.fronthaul_caps.iter().any(|&c| c.is_nan() || c <= 0.0) {
            return bad("fronthaul capacities must be positive".into());
        }
        if !self.tx_power_dbm.is_finite() || !self.noise_power_dbm.is_finite() {
            return bad("tx_power_dbm and noise_power_dbm must be finite".into());
        }
        if self.pathloss_ref_db.is_nan() || self.pathloss_ref_db >= 0.0 {
            return bad("pathloss_ref_db must be below 0 dB".into());
        }
        if self.user_disk_radius.is_nan() || self.user_disk_radius < 0.0 {
            return bad("user_disk_radius must be non-negative".into());
        }
        if self.rician_factor_db.is_nan() {
            return bad("rician_factor_db is NaN".into());
        }
        if let PhaseResolution::Bits(0) = self.phase_bits {
            return bad("phase_bits must be at least 1".into());
        }
        Ok(())
    }

    pub fn tx_power(&self) -> f64 {
        units::dbm_to_watts(self.tx_power_dbm)
    }

    pub fn noise_power(&self) -> f64 {
        units::dbm_to_watts(self.noise_power_dbm)
    }

    pub fn pathloss_ref(&self) -> f64 {
        units::db_to_linear(self.pathloss_ref_db)
    }

    pub fn rician_factor(&self) -> f64 {
        units::db_to_linear(self.rician_factor_db)
    }

    /// Fronthaul capacities converted to nats.
    pub fn caps_nats(&self) -> Vec<f64> {
        self.fronthaul_caps.iter().map(|&c| units::bits_to_nats(c)).collect()
    }

    pub fn irs_elements_total(&self) -> usize {
        self.num_irs * self.elements_per_irs
    }

    pub fn with_uniform_capacity(mut self, bits: f64) -> Self {
        self.fronthaul_caps = vec![bits; self.num_rrhs];
        self
    }
}

/// Purposes that get their own RNG substream within one drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Positions = 0,
    Channels = 1,
    InitialPhase = 2,
    Rounding = 3,
    BaselinePhase = 4,
}

/// Counter-based split of the master seed: substream `(drop, purpose)` is
/// independent of how many drops are drawn in total.
pub fn substream(seed: u64, drop: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((drop << 8) | purpose as u64);
    rng
}

/// `K` points uniform over the disk of the configured radius, centered at the origin.
pub fn sample_user_positions<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<[f64; 2]> {
    sample_disk(cfg.num_users, cfg.user_disk_radius, rng)
}

pub fn sample_disk<R: Rng + ?Sized>(count: usize, radius: f64, rng: &mut R) -> Vec<[f64; 2]> {
    (0..count)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            [r * phi.cos(), r * phi.sin()]
        })
        .collect()
}
