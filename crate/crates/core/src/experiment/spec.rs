use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::CsitScaling;
use crate::cutting_set::Tolerances;
use crate::error::{Error, Result};
use crate::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Maxmin,
    Qos,
    Dof,
    Timing,
}

/// Strategy plus design method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    NorsCon,
    NorsCs,
    RsCon,
    RsCs,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::NorsCon, Scheme::NorsCs, Scheme::RsCon, Scheme::RsCs];

    pub fn strategy(self) -> Strategy {
        match self {
            Scheme::NorsCon | Scheme::NorsCs => Strategy::NoRateSplitting,
            Scheme::RsCon | Scheme::RsCs => Strategy::RateSplitting,
        }
    }

    pub fn conservative(self) -> bool {
        matches!(self, Scheme::NorsCon | Scheme::RsCon)
    }

    pub fn label(self) -> &'static str {
        match self {
            Scheme::NorsCon => "nors-con",
            Scheme::NorsCs => "nors-cs",
            Scheme::RsCon => "rs-con",
            Scheme::RsCs => "rs-cs",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.label() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidInput(format!("unknown scheme `{s}` (expected nors-con, nors-cs, rs-con or rs-cs)")))
    }
}

/// Per-user uncertainty radii `δ_k² = β_k P_t^{-α_k}`.
///
/// Without explicit `beta`, `β_k` is chosen so that every radius equals
/// `delta` at `reference_snr_db`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsitSpec {
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// One per user; empty means all zero.
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default = "default_reference_snr")]
    pub reference_snr_db: f64,
}

impl Default for CsitSpec {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            alpha: Vec::new(),
            beta: None,
            reference_snr_db: default_reference_snr(),
        }
    }
}

impl CsitSpec {
    pub fn alphas(&self, users: usize) -> Vec<f64> {
        if self.alpha.is_empty() {
            vec![0.0; users]
        } else {
            self.alpha.clone()
        }
    }

    /// Scaling model for `users` users with base radius `delta`.
    pub fn model(&self, users: usize, delta: f64, noise_var: f64) -> Result<Vec<CsitScaling>> {
        let alphas = self.alphas(users);
        if alphas.len() != users {
            return Err(Error::InvalidInput(format!("{} alpha values for {users} users", alphas.len())));
        }
        if delta == 0.0 {
            return Ok(vec![CsitScaling { beta: 0.0, alpha: 0.0 }; users]);
        }
        let p_ref = noise_var * 10f64.powf(self.reference_snr_db / 10.0);
        (0..users)
            .map(|k| {
                let beta = match &self.beta {
                    Some(b) => *b
                        .get(k)
                        .ok_or_else(|| Error::InvalidInput(format!("no beta for user {k}")))?,
                    None => delta * delta * p_ref.powf(alphas[k]),
                };
                CsitScaling::new(beta, alphas[k])
            })
            .collect()
    }
}

/// Grid of system sizes (`K = N_t`) and radii for QoS and timing studies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default)]
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub deltas: Vec<f64>,
}

/// Overrides of the solver tolerances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub eps_v: Option<f64>,
    pub eps_r: Option<f64>,
    pub ao_max_iter: Option<usize>,
    pub outer_max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub mode: Mode,
    #[serde(default = "default_size")]
    pub users: usize,
    #[serde(default = "default_size")]
    pub antennas: usize,
    #[serde(default = "default_snr_grid")]
    pub snr_db: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_noise")]
    pub noise_var: f64,
    #[serde(default)]
    pub csit: CsitSpec,
    #[serde(default = "default_qos_target")]
    pub qos_target: f64,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub solver: SolverSpec,
}

fn default_delta() -> f64 {
    0.15
}
fn default_reference_snr() -> f64 {
    20.0
}
fn default_size() -> usize {
    3
}
fn default_snr_grid() -> Vec<f64> {
    vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0]
}
fn default_trials() -> usize {
    20
}
fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}
fn default_noise() -> f64 {
    1.0
}
fn default_qos_target() -> f64 {
    // log₂(1 + 9)
    10f64.log2()
}

impl ExperimentSpec {
    /// Defaults for `mode`.
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            users: default_size(),
            antennas: default_size(),
            snr_db: default_snr_grid(),
            trials: default_trials(),
            seed: 0,
            schemes: default_schemes(),
            noise_var: default_noise(),
            csit: CsitSpec::default(),
            qos_target: default_qos_target(),
            sweep: Sweep::default(),
            solver: SolverSpec::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.snr_db.is_empty() || self.snr_db.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("snr grid must be non-empty and strictly increasing".into());
        }
        if self.users == 0 || self.users > self.antennas {
            return bad(format!("need 1 <= users <= antennas, got {} and {}", self.users, self.antennas));
        }
        if self.schemes.is_empty() {
            return bad("no schemes selected".into());
        }
        if !(self.noise_var > 0.0) {
            return bad("noise variance must be positive".into());
        }
        if !self.csit.alpha.is_empty() && self.csit.alpha.len() != self.users {
            return bad(format!("{} alpha values for {} users", self.csit.alpha.len(), self.users));
        }
        if self.sweep.sizes.contains(&0) {
            return bad("system sizes must be positive".into());
        }
        if self.deltas().iter().any(|d| !(*d >= 0.0)) {
            return bad("radii must be non-negative".into());
        }
        if self.mode == Mode::Qos && !(self.qos_target >= 0.0) {
            return bad("qos target must be non-negative".into());
        }
        Ok(())
    }

    /// Radii swept by QoS and timing runs.
    pub fn deltas(&self) -> Vec<f64> {
        if self.sweep.deltas.is_empty() {
            vec![self.csit.delta]
        } else {
            self.sweep.deltas.clone()
        }
    }

    /// `(users, antennas)` pairs swept by QoS and timing runs.
    pub fn sizes(&self) -> Vec<(usize, usize)> {
        if self.sweep.sizes.is_empty() {
            vec![(self.users, self.antennas)]
        } else {
            self.sweep.sizes.iter().map(|&s| (s, s)).collect()
        }
    }

    pub fn tolerances(&self) -> Tolerances {
        let mut t = Tolerances::default();
        if let Some(v) = self.solver.eps_v {
            t.eps_v = v;
        }
        if let Some(v) = self.solver.eps_r {
            t.eps_r = v;
        }
        if let Some(v) = self.solver.ao_max_iter {
            t.ao_max_iter = v;
        }
        if let Some(v) = self.solver.outer_max_iter {
            t.outer_max_iter = v;
        }
        t
    }

    /// `P_t = σ² 10^{SNR/10}`.
    pub fn power_at(&self, snr_db: f64) -> f64 {
        self.noise_var * 10f64.powf(snr_db / 10.0)
    }
}
