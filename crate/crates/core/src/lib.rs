//! Robust rate-splitting precoder design for the multi-user MISO downlink
//! under norm-bounded channel uncertainty.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`] and [`rates`] hold the signal model,
//! * [`conic`] is a small modelling layer over an interior-point backend,
//! * [`pessimizer`] finds worst-case channels inside an uncertainty ball,
//! * [`cutting_set`], [`conservative`] and [`qos`] are the precoder solvers,
//! * [`dof`] has the closed-form degrees-of-freedom results,
//! * [`experiment`] runs Monte-Carlo studies and writes their records.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate openblas_src;

pub mod channel;
pub mod conic;
pub mod conservative;
pub mod cutting_set;
pub mod dof;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod par;
pub mod pessimizer;
pub mod qos;
pub mod rates;

pub use channel::{ChannelEstimate, ChannelVector, CsitScaling, SystemConfig};
pub use error::{Error, Result};
pub use rates::{Precoder, RateAllocation};

/// Which transmission strategy a solver designs for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Strategy {
    /// Rate-splitting: one common stream plus K private streams.
    #[serde(rename = "rs")]
    RateSplitting,
    /// Conventional linear precoding, private streams only.
    #[serde(rename = "nors")]
    NoRateSplitting,
}

impl Strategy {
    pub fn has_common(self) -> bool {
        matches!(self, Strategy::RateSplitting)
    }
}
