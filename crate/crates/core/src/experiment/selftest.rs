//! Fast end-to-end smoke checks for the command-line `selftest`.

use serde::Serialize;

use super::records::write_records;
use super::spec::{ExperimentSpec, Mode, Scheme};
use super::run_maxmin_sweep;
use crate::channel::{sample_channel, trial_rng, ChannelEstimate};
use crate::cutting_set::{solve_max_min, SolveOptions};
use crate::dof::{max_min_dof_nors, max_min_dof_rs, DofProfile};
use crate::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfTestCase {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn case(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> SelfTestCase {
    match f() {
        Ok(detail) => SelfTestCase { name, passed: true, detail },
        Err(detail) => SelfTestCase { name, passed: false, detail },
    }
}

fn single_user_robust() -> Result<String, String> {
    let mut rng = trial_rng(7, 0);
    let h = sample_channel(&mut rng, 3);
    let delta = 0.2;
    let power = 100.0;
    let expect = (1.0 + power * (h.norm() - delta).powi(2)).log2();
    let est = ChannelEstimate::new(h, delta).map_err(|e| e.to_string())?;
    let r = solve_max_min(&[est], power, 1.0, Strategy::NoRateSplitting, &SolveOptions::default())
        .map_err(|e| e.to_string())?;
    let got = r.certificate.guaranteed_rate;
    let detail = format!("rate {got:.6} closed form {expect:.6}");
    if (got - expect).abs() < 2e-3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dof_reference() -> Result<String, String> {
    let p = DofProfile::new(&[0.0, 0.5, 0.5]).map_err(|e| e.to_string())?;
    let nors = max_min_dof_nors(&p);
    let rs = max_min_dof_rs(&p).0;
    let detail = format!("nors {nors:.4} rs {rs:.4}");
    if (nors - 0.25).abs() < 1e-12 && (rs - 0.5).abs() < 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn deterministic_records() -> Result<String, String> {
    let mut spec = ExperimentSpec::new(Mode::Maxmin);
    spec.users = 2;
    spec.antennas = 2;
    spec.trials = 2;
    spec.snr_db = vec![10.0];
    spec.schemes = vec![Scheme::NorsCs, Scheme::RsCon];
    let render = || -> Result<Vec<u8>, String> {
        let records = run_maxmin_sweep(&spec).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_records(&mut buf, &records).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    let a = render()?;
    let b = render()?;
    if a == b {
        Ok(format!("{} bytes", a.len()))
    } else {
        Err("records differ between runs".into())
    }
}

pub fn run_selftest() -> Vec<SelfTestCase> {
    vec![
        case("single-user-robust-rate", single_user_robust),
        case("dof-reference-profile", dof_reference),
        case("deterministic-records", deterministic_records),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        for c in run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
