//! Max-min degrees of freedom under CSIT that improves as `P_t^{-α_k}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

/// CSIT quality exponents sorted ascending, with the permutation that
/// sorted them (`order[i]` is the caller's index of sorted entry `i`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofProfile {
    alphas: Vec<f64>,
    order: Vec<usize>,
}

impl DofProfile {
    pub fn new(alphas: &[f64]) -> Result<Self> {
        if alphas.len() < 2 {
            return Err(Error::InvalidInput("need at least two users".into()));
        }
        if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidInput(format!("alpha {a} outside [0, 1]")));
        }
        let mut order: Vec<usize> = (0..alphas.len()).collect();
        order.sort_by(|&a, &b| alphas[a].total_cmp(&alphas[b]).then(a.cmp(&b)));
        Ok(Self {
            alphas: order.iter().map(|&i| alphas[i]).collect(),
            order,
        })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn users(&self) -> usize {
        self.alphas.len()
    }

    /// `(1 + Σ_{k<J} α_k) / J` for `J ≥ 1`.
    pub fn rs_bound(&self, j: usize) -> f64 {
        self.alphas[..j - 1].iter().fold(1.0, |s, a| s + a) / j as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofAllocation {
    pub common_dof: f64,
    /// Per user, in sorted order.
    pub private_dof: Vec<f64>,
    pub common_split: Vec<f64>,
    /// Power exponent of the common stream.
    pub common_exponent: f64,
    pub private_exponents: Vec<f64>,
}

impl DofAllocation {
    pub fn totals(&self) -> Vec<f64> {
        self.private_dof
            .iter()
            .zip(&self.common_split)
            .map(|(d, c)| d + c)
            .collect()
    }

    /// Same allocation indexed by the caller's user order.
    pub fn unsorted(&self, profile: &DofProfile) -> DofAllocation {
        let k = profile.users();
        let mut out = self.clone();
        for (sorted, &orig) in profile.order().iter().enumerate() {
            out.private_dof[orig] = self.private_dof[sorted];
            out.common_split[orig] = self.common_split[sorted];
            out.private_exponents[orig] = self.private_exponents[sorted];
        }
        debug_assert_eq!(out.private_dof.len(), k);
        out
    }
}

pub fn max_min_dof_nors(profile: &DofProfile) -> f64 {
    let a = profile.alphas();
    (a[0] + a[1]) / 2.0
}

const TIE_TOL: f64 = 1e-12;

/// Optimal RS max-min DoF and the smallest minimizing `J` (values within
/// rounding of each other count as ties).
pub fn max_min_dof_rs(profile: &DofProfile) -> (f64, usize) {
    let bounds: Vec<f64> = (2..=profile.users()).map(|j| profile.rs_bound(j)).collect();
    let min = bounds.iter().copied().fold(f64::INFINITY, f64::min);
    let j = bounds.iter().position(|&v| v <= min + TIE_TOL).unwrap_or(0) + 2;
    (min, j)
}

/// Explicit private/common DoF split reaching the RS optimum.
pub fn achievable_allocation(profile: &DofProfile) -> DofAllocation {
    let a = profile.alphas();
    let k = a.len();
    let (ub, j) = max_min_dof_rs(profile);
    let case_one = j < k || (a[j - 2] <= ub + TIE_TOL && ub <= a[j - 1] + TIE_TOL);
    let (a_bar, common_split): (f64, Vec<f64>) = if case_one {
        (ub, (0..k).map(|i| if i + 1 < j { ub - a[i] } else { 0.0 }).collect())
    } else {
        (a[k - 1], a.iter().map(|&ai| profile.rs_bound(k) - ai).collect())
    };
    let private_dof: Vec<f64> = a.iter().map(|&ai| ai.min(a_bar)).collect();
    DofAllocation {
        common_dof: common_split.iter().sum(),
        private_dof,
        common_split,
        common_exponent: 1.0,
        private_exponents: vec![a_bar; k],
    }
}

/// Zero-forcing directions on the estimates, column `k` scaled to power `q[k]`.
pub fn zf_private_precoder(h_hat: &CMatrix, q: &[f64]) -> Result<CMatrix> {
    let (n_t, k) = h_hat.shape();
    if q.len() != k {
        return Err(Error::InvalidInput(format!("{} powers for {k} users", q.len())));
    }
    if q.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidInput("powers must be non-negative".into()));
    }
    if k > n_t {
        return Err(Error::InvalidInput("more users than antennas".into()));
    }
    let sv = h_hat.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > 1e-12 * smax.max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficientChannels);
    }
    let gram = h_hat.adjoint() * h_hat;
    let inv = gram
        .try_inverse()
        .ok_or(Error::RankDeficientChannels)?;
    let mut dirs = h_hat * inv;
    for (c, &qk) in q.iter().enumerate() {
        let n = dirs.column(c).norm();
        let s = C64::new(qk.sqrt() / n, 0.0);
        dirs.column_mut(c).iter_mut().for_each(|z| *z *= s);
    }
    Ok(dirs)
}

/// Least-squares slope of rate against `log₂ P_t` (SNR in dB).
pub fn empirical_dof(snr_db: &[f64], rates: &[f64]) -> Result<f64> {
    if snr_db.len() != rates.len() {
        return Err(Error::InvalidInput("snr and rate lengths differ".into()));
    }
    if snr_db.len() < 2 {
        return Err(Error::InvalidInput("need at least two points".into()));
    }
    if snr_db.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("snr must be strictly increasing".into()));
    }
    let x: Vec<f64> = snr_db.iter().map(|s| s / 10.0 * 10f64.log2()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = rates.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(rates).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
