//! SINR, rate, MSE and WMSE algebra for a fixed channel realization.
//!
//! All rates are in bits per channel use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gain, inner, CMatrix, CVector, C64};

/// `P = [p_c, p_1, …, p_K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub common: CVector,
    pub private: CMatrix,
}

impl Precoder {
    pub fn new(common: CVector, private: CMatrix) -> Result<Self> {
        if common.len() != private.nrows() {
            return Err(Error::InvalidInput(format!(
                "common precoder length {} vs private rows {}",
                common.len(),
                private.nrows()
            )));
        }
        Ok(Self { common, private })
    }

    pub fn zeros(n_t: usize, users: usize) -> Self {
        Self {
            common: CVector::zeros(n_t),
            private: CMatrix::zeros(n_t, users),
        }
    }

    pub fn antennas(&self) -> usize {
        self.common.len()
    }

    pub fn users(&self) -> usize {
        self.private.ncols()
    }

    pub fn private_column(&self, k: usize) -> CVector {
        self.private.column(k).into_owned()
    }

    pub fn common_power(&self) -> f64 {
        self.common.norm_squared()
    }

    pub fn private_power(&self, k: usize) -> f64 {
        self.private.column(k).norm_squared()
    }

    /// `tr(P Pᴴ)`.
    pub fn total_power(&self) -> f64 {
        self.common.norm_squared() + self.private.norm_squared()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let f = C64::new(factor, 0.0);
        Self {
            common: &self.common * f,
            private: &self.private * f,
        }
    }
}

/// Max-min objective plus the per-user split of the common rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateAllocation {
    pub max_min_rate: f64,
    pub common_split: Vec<f64>,
}

impl RateAllocation {
    pub fn new(max_min_rate: f64, common_split: Vec<f64>) -> Result<Self> {
        if common_split.iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidInput("negative common rate portion".into()));
        }
        Ok(Self {
            max_min_rate,
            common_split,
        })
    }

    pub fn without_common(max_min_rate: f64, users: usize) -> Self {
        Self {
            max_min_rate,
            common_split: vec![0.0; users],
        }
    }

    pub fn common_rate(&self) -> f64 {
        self.common_split.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualizerWeightPair {
    pub g: C64,
    pub u: f64,
}

/// Receive-power decomposition seen by one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerDecomposition {
    pub total_common: f64,
    pub signal_common: f64,
    pub interference_common: f64,
    pub total: f64,
    pub signal: f64,
    pub interference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrRates {
    pub sinr_common: f64,
    pub sinr: f64,
    pub rate_common: f64,
    pub rate: f64,
}

fn check_dims(h: &CVector, p: &Precoder, k: usize) -> Result<()> {
    if h.len() != p.antennas() {
        return Err(Error::InvalidInput(format!(
            "channel length {} vs N_t = {}",
            h.len(),
            p.antennas()
        )));
    }
    if k >= p.users() {
        return Err(Error::InvalidInput(format!("user {k} out of range")));
    }
    Ok(())
}

pub fn receive_powers(h: &CVector, p: &Precoder, k: usize, noise_var: f64) -> Result<PowerDecomposition> {
    check_dims(h, p, k)?;
    Ok(receive_powers_unchecked(h, p, k, noise_var))
}

pub(crate) fn receive_powers_unchecked(h: &CVector, p: &Precoder, k: usize, noise_var: f64) -> PowerDecomposition {
    let signal_common = gain(h, &p.common);
    let mut signal = 0.0;
    let mut leak = 0.0;
    for (i, col) in p.private.column_iter().enumerate() {
        let g = inner(h, &col.into_owned()).norm_sqr();
        if i == k {
            signal = g;
        } else {
            leak += g;
        }
    }
    let interference = leak + noise_var;
    let total = signal + interference;
    PowerDecomposition {
        total_common: signal_common + total,
        signal_common,
        interference_common: total,
        total,
        signal,
        interference,
    }
}

pub fn sinr_and_rates(h: &CVector, p: &Precoder, k: usize, noise_var: f64) -> Result<SinrRates> {
    let pw = receive_powers(h, p, k, noise_var)?;
    Ok(rates_from_powers(&pw))
}

pub(crate) fn rates_from_powers(pw: &PowerDecomposition) -> SinrRates {
    let sinr_common = pw.signal_common / pw.interference_common;
    let sinr = pw.signal / pw.interference;
    SinrRates {
        sinr_common,
        sinr,
        rate_common: (1.0 + sinr_common).log2(),
        rate: (1.0 + sinr).log2(),
    }
}

/// MMSE equalizers `(g_c, g)`.
pub fn mmse_equalizers(h: &CVector, p: &Precoder, k: usize, noise_var: f64) -> Result<(C64, C64)> {
    let pw = receive_powers(h, p, k, noise_var)?;
    let gc = inner(&p.common, h) / pw.total_common;
    let g = inner(&p.private_column(k), h) / pw.total;
    Ok((gc, g))
}

/// MSEs `(ε_c, ε)` for arbitrary equalizers.
pub fn mse(h: &CVector, p: &Precoder, k: usize, g_common: C64, g: C64, noise_var: f64) -> Result<(f64, f64)> {
    let pw = receive_powers(h, p, k, noise_var)?;
    let ec = g_common.norm_sqr() * pw.total_common - 2.0 * (g_common * inner(h, &p.common)).re + 1.0;
    let ep = g.norm_sqr() * pw.total - 2.0 * (g * inner(h, &p.private_column(k))).re + 1.0;
    Ok((ec, ep))
}

/// MMSEs `(I_c/T_c, I/T)`.
pub fn mmse_values(h: &CVector, p: &Precoder, k: usize, noise_var: f64) -> Result<(f64, f64)> {
    let pw = receive_powers(h, p, k, noise_var)?;
    Ok((
        pw.interference_common / pw.total_common,
        pw.interference / pw.total,
    ))
}

/// Augmented WMSE `u·ε − log₂ u`.
pub fn wmse(eps: f64, u: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::InvalidInput(format!("weight must be positive, got {u}")));
    }
    Ok(u * eps - u.log2())
}

/// Bit-scaled WMSE `1 + (uε − 1)/ln 2 − log₂ u`.
///
/// Unlike [`wmse`], its minimum over `u` sits exactly at `u = 1/ε`, so
/// `1 − wmse_bits(ε, u) ≤ −log₂ ε` for every `u > 0` with equality there.
/// The solvers build their rate constraints on this form.
pub fn wmse_bits(eps: f64, u: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::InvalidInput(format!("weight must be positive, got {u}")));
    }
    Ok(1.0 + (u * eps - 1.0) / std::f64::consts::LN_2 - u.log2())
}

/// Worst-case total rates `R̄_k + C̄_k`.
pub fn total_rates(worst_private: &[f64], alloc: &RateAllocation) -> Result<Vec<f64>> {
    if worst_private.len() != alloc.common_split.len() {
        return Err(Error::InvalidInput("length mismatch".into()));
    }
    Ok(worst_private
        .iter()
        .zip(&alloc.common_split)
        .map(|(r, c)| r + c)
        .collect())
}
