//! Channels, estimates and the norm-ball uncertainty model.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inner, CMatrix, CVector, C64};

/// System dimensions shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub users: usize,
    pub antennas: usize,
    pub noise_var: f64,
    pub seed: u64,
}

impl SystemConfig {
    pub fn new(users: usize, antennas: usize, noise_var: f64, seed: u64) -> Result<Self> {
        if users == 0 {
            return Err(Error::InvalidInput("need at least one user".into()));
        }
        if users > antennas {
            return Err(Error::InvalidInput(format!(
                "K = {users} exceeds N_t = {antennas}"
            )));
        }
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(Error::InvalidInput("noise variance must be positive".into()));
        }
        Ok(Self {
            users,
            antennas,
            noise_var,
            seed,
        })
    }
}

/// A complex channel vector with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(CVector);

impl ChannelVector {
    pub fn new(entries: CVector) -> Result<Self> {
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("channel has non-finite entries".into()));
        }
        Ok(Self(entries))
    }

    pub fn zeros(n_t: usize) -> Self {
        Self(CVector::zeros(n_t))
    }

    pub fn as_vector(&self) -> &CVector {
        &self.0
    }

    pub fn into_vector(self) -> CVector {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn distance(&self, other: &ChannelVector) -> f64 {
        (&self.0 - &other.0).norm()
    }
}

impl std::ops::Deref for ChannelVector {
    type Target = CVector;

    fn deref(&self) -> &CVector {
        &self.0
    }
}

impl From<CVector> for ChannelVector {
    fn from(v: CVector) -> Self {
        Self(v)
    }
}

/// Nominal channel plus the radius of its uncertainty ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub nominal: ChannelVector,
    pub radius: f64,
}

impl ChannelEstimate {
    pub fn new(nominal: ChannelVector, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!("invalid radius {radius}")));
        }
        Ok(Self { nominal, radius })
    }

    pub fn antennas(&self) -> usize {
        self.nominal.len()
    }

    /// True when `h` lies in the ball up to `tol`.
    pub fn contains(&self, h: &CVector, tol: f64) -> bool {
        (h - self.nominal.as_vector()).norm() <= self.radius + tol
    }
}

/// Per-user CSIT scaling: `δ² = β · P_t^{-α}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsitScaling {
    pub beta: f64,
    pub alpha: f64,
}

impl CsitScaling {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidInput("beta must be positive".into()));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(Self { beta, alpha })
    }

    /// Fixed radius `delta` for all powers.
    pub fn fixed(delta: f64) -> Self {
        Self {
            beta: delta * delta,
            alpha: 0.0,
        }
    }

    pub fn radius_at(&self, p_t: f64) -> f64 {
        (self.beta * p_t.powf(-self.alpha)).sqrt()
    }
}

/// Radius of user `k` at power `p_t`.
pub fn radius_at(model: &[CsitScaling], p_t: f64, k: usize) -> Result<f64> {
    if !(p_t > 0.0) {
        return Err(Error::InvalidInput("p_t must be positive".into()));
    }
    model
        .get(k)
        .map(|m| m.radius_at(p_t))
        .ok_or_else(|| Error::InvalidInput(format!("no scaling model for user {k}")))
}

/// RNG stream for trial `trial` of an experiment seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

/// i.i.d. CN(0, 1) entries.
pub fn sample_channel<R: Rng + ?Sized>(rng: &mut R, n_t: usize) -> ChannelVector {
    ChannelVector(CVector::from_fn(n_t, |_, _| complex_gaussian(rng, 1.0)))
}

/// Uniform draw from the complex ball of the given radius (2·n_t real dimensions).
pub fn sample_error_in_ball<R: Rng + ?Sized>(rng: &mut R, radius: f64, n_t: usize) -> ChannelVector {
    if radius == 0.0 {
        return ChannelVector::zeros(n_t);
    }
    let dir = loop {
        let g = CVector::from_fn(n_t, |_, _| complex_gaussian(rng, 1.0));
        let n = g.norm();
        if n > 1e-300 {
            break g / C64::new(n, 0.0);
        }
    };
    let u: f64 = rng.gen();
    let r = radius * u.powf(1.0 / (2 * n_t) as f64);
    ChannelVector(dir * C64::new(r, 0.0))
}

/// `(max |hᴴp|, min |hᴴp|)` over the uncertainty ball, in closed form.
pub fn inner_product_extrema(est: &ChannelEstimate, p: &CVector) -> Result<(f64, f64)> {
    if p.len() != est.antennas() {
        return Err(Error::InvalidInput(format!(
            "precoder length {} does not match N_t = {}",
            p.len(),
            est.antennas()
        )));
    }
    let centre = inner(est.nominal.as_vector(), p).norm();
    let spread = est.radius * p.norm();
    Ok((centre + spread, (centre - spread).max(0.0)))
}

/// Stack the nominal channels column-wise into `Ĥ` (N_t × K).
pub fn estimate_matrix(ests: &[ChannelEstimate]) -> CMatrix {
    let n_t = ests.first().map_or(0, |e| e.antennas());
    CMatrix::from_fn(n_t, ests.len(), |i, k| ests[k].nominal[i])
}
