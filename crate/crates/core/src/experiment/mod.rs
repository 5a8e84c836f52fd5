//! Monte-Carlo studies: max-min SNR sweeps, QoS feasibility and power,
//! run times and high-SNR slopes, with deterministic CSV output.

mod records;
mod selftest;
mod spec;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

pub use records::{aggregate, sort_records, write_outputs, write_records, write_timings, Aggregate, TrialRecord, RECORD_COLUMNS};
pub use selftest::{run_selftest, SelfTestCase};
pub use spec::{CsitSpec, ExperimentSpec, Mode, Scheme, SolverSpec, Sweep};

use crate::channel::{sample_channel, sample_error_in_ball, trial_rng, ChannelEstimate, ChannelVector, CsitScaling};
use crate::conservative::solve_conservative;
use crate::cutting_set::{certify, solve_max_min, SolveOptions, Tolerances};
use crate::dof::{empirical_dof, max_min_dof_nors, max_min_dof_rs, DofProfile};
use crate::error::{Error, Result};
use crate::linalg::{CVector, C64};
use crate::par::*;
use crate::qos::{solve_qos, solve_qos_conservative, QosSpec, QosStatus};
use crate::Strategy;

/// True channels of one trial and unit-ball error draws. The estimate at
/// power `P_t` is `ĥ_k = h_k − δ_k(P_t)·u_k`, so a trial keeps its channel
/// and error direction across the SNR grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDraw {
    pub channels: Vec<CVector>,
    pub directions: Vec<CVector>,
}

/// RNG stream of a trial; system sizes get disjoint streams.
pub fn trial_stream(users: usize, trial: usize) -> u64 {
    ((users as u64) << 32) | trial as u64
}

pub fn draw_trial(seed: u64, users: usize, antennas: usize, trial: usize) -> TrialDraw {
    let mut rng = trial_rng(seed, trial_stream(users, trial));
    let channels = (0..users).map(|_| sample_channel(&mut rng, antennas).into_vector()).collect();
    let directions = (0..users)
        .map(|_| sample_error_in_ball(&mut rng, 1.0, antennas).into_vector())
        .collect();
    TrialDraw { channels, directions }
}

pub fn estimates_at(draw: &TrialDraw, model: &[CsitScaling], p_t: f64) -> Result<Vec<ChannelEstimate>> {
    draw.channels
        .iter()
        .zip(&draw.directions)
        .enumerate()
        .map(|(k, (h, u))| {
            let radius = crate::channel::radius_at(model, p_t, k)?;
            let nominal = h - u * C64::new(radius, 0.0);
            ChannelEstimate::new(ChannelVector::new(nominal)?, radius)
        })
        .collect()
}

fn failed(scheme: Scheme, users: usize, delta: f64, snr_db: f64, trial: usize, e: &Error, seconds: f64) -> TrialRecord {
    log::warn!("{scheme} trial {trial} at {snr_db} dB failed: {e}");
    TrialRecord {
        scheme,
        users,
        delta,
        snr_db,
        trial,
        value: f64::NAN,
        status: "error".into(),
        certified: false,
        outer_iterations: 0,
        ao_iterations: 0,
        max_violation: f64::NAN,
        seconds,
    }
}

/// Runs one max-min design and records its guaranteed worst-case rate.
#[allow(clippy::too_many_arguments)]
pub fn maxmin_record(
    scheme: Scheme,
    ests: &[ChannelEstimate],
    power: f64,
    noise_var: f64,
    tol: &Tolerances,
    delta: f64,
    snr_db: f64,
    trial: usize,
) -> TrialRecord {
    let users = ests.len();
    let start = Instant::now();
    let outcome = if scheme.conservative() {
        solve_conservative(ests, power, noise_var, scheme.strategy(), tol).and_then(|st| {
            let cert = certify(&st.precoder, &st.alloc, ests, scheme.strategy(), noise_var, tol)?;
            let v = cert.violation.max_violation;
            let status = if st.converged { "converged" } else { "iteration-cap" };
            Ok((st.alloc.max_min_rate, status, v <= tol.eps_v, 1, st.objectives.len(), v))
        })
    } else {
        solve_max_min(ests, power, noise_var, scheme.strategy(), &SolveOptions { tolerances: *tol, ..Default::default() }).map(|r| {
            let status = if r.certified { "certified" } else { "not-certified" };
            let ao = r.ao_objectives.iter().map(Vec::len).sum();
            (
                r.certificate.guaranteed_rate,
                status,
                r.certified,
                r.trace.len(),
                ao,
                r.certificate.violation.max_violation,
            )
        })
    };
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok((value, status, certified, outer, ao, v)) => TrialRecord {
            scheme,
            users,
            delta,
            snr_db,
            trial,
            value,
            status: status.into(),
            certified,
            outer_iterations: outer,
            ao_iterations: ao,
            max_violation: v,
            seconds,
        },
        Err(e) => failed(scheme, users, delta, snr_db, trial, &e, seconds),
    }
}

/// Every scheme at every SNR on every trial.
pub fn run_maxmin_sweep(spec: &ExperimentSpec) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let tol = spec.tolerances();
    let delta = spec.csit.delta;
    let model = spec.csit.model(spec.users, delta, spec.noise_var)?;
    let per_trial: Vec<Result<Vec<TrialRecord>>> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let draw = draw_trial(spec.seed, spec.users, spec.antennas, trial);
            let mut rows = Vec::new();
            for &snr in &spec.snr_db {
                let power = spec.power_at(snr);
                let ests = estimates_at(&draw, &model, power)?;
                for &scheme in &spec.schemes {
                    rows.push(maxmin_record(scheme, &ests, power, spec.noise_var, &tol, delta, snr, trial));
                }
            }
            Ok(rows)
        })
        .collect();
    let mut records = Vec::new();
    for rows in per_trial {
        records.extend(rows?);
    }
    sort_records(&mut records);
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QosSummary {
    pub users: usize,
    pub delta: f64,
    pub trials: usize,
    pub feasible: BTreeMap<Scheme, usize>,
    /// Trials feasible for every scheme.
    pub intersection: usize,
    pub mean_power_intersection: BTreeMap<Scheme, f64>,
    pub mean_power_own: BTreeMap<Scheme, f64>,
}

fn qos_record(scheme: Scheme, ests: &[ChannelEstimate], spec: &ExperimentSpec, tol: &Tolerances, delta: f64, trial: usize) -> TrialRecord {
    let users = ests.len();
    let start = Instant::now();
    let q = QosSpec::new(spec.qos_target, spec.noise_var, scheme.strategy());
    let outcome = q.and_then(|q| {
        if scheme.conservative() {
            solve_qos_conservative(&q, ests, spec.noise_var, tol)
        } else {
            solve_qos(&q, ests, spec.noise_var, tol)
        }
    });
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(r) => {
            let status = match r.status {
                QosStatus::Feasible => "feasible",
                QosStatus::Infeasible => "infeasible",
                QosStatus::NotCertified => "not-certified",
            };
            TrialRecord {
                scheme,
                users,
                delta,
                snr_db: f64::NAN,
                trial,
                value: if r.status == QosStatus::Infeasible { f64::NAN } else { r.power },
                status: status.into(),
                certified: r.status == QosStatus::Feasible,
                outer_iterations: r.trace.len(),
                ao_iterations: r.ao_objectives.iter().map(Vec::len).sum(),
                max_violation: r.certificate.map_or(f64::NAN, |c| c.violation.max_violation),
                seconds,
            }
        }
        Err(e) => failed(scheme, users, delta, f64::NAN, trial, &e, seconds),
    }
}

/// Feasibility counts and powers of the minimum-power designs.
pub fn run_qos_study(spec: &ExperimentSpec) -> Result<(Vec<TrialRecord>, Vec<QosSummary>)> {
    spec.validate()?;
    let tol = spec.tolerances();
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for (users, antennas) in spec.sizes() {
        for delta in spec.deltas() {
            let rows: Vec<TrialRecord> = (0..spec.trials)
                .into_par_iter()
                .map(|trial| {
                    let draw = draw_trial(spec.seed, users, antennas, trial);
                    let model = vec![CsitScaling::fixed(delta); users];
                    match estimates_at(&draw, &model, 1.0) {
                        Ok(ests) => spec.schemes.iter().map(|&s| qos_record(s, &ests, spec, &tol, delta, trial)).collect(),
                        Err(e) => spec.schemes.iter().map(|&s| failed(s, users, delta, f64::NAN, trial, &e, 0.0)).collect(),
                    }
                })
                .collect::<Vec<Vec<TrialRecord>>>()
                .into_iter()
                .flatten()
                .collect();
            summaries.push(summarize_qos(&rows, &spec.schemes, users, delta, spec.trials));
            records.extend(rows);
        }
    }
    sort_records(&mut records);
    Ok((records, summaries))
}

pub fn summarize_qos(rows: &[TrialRecord], schemes: &[Scheme], users: usize, delta: f64, trials: usize) -> QosSummary {
    let ok = |s: Scheme, t: usize| {
        rows.iter()
            .find(|r| r.scheme == s && r.trial == t)
            .filter(|r| r.certified)
            .map(|r| r.value)
    };
    let mut feasible = BTreeMap::new();
    let mut own = BTreeMap::new();
    for &s in schemes {
        let vals: Vec<f64> = (0..trials).filter_map(|t| ok(s, t)).collect();
        feasible.insert(s, vals.len());
        if !vals.is_empty() {
            own.insert(s, vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }
    let common: Vec<usize> = (0..trials).filter(|&t| schemes.iter().all(|&s| ok(s, t).is_some())).collect();
    let mut inter = BTreeMap::new();
    if !common.is_empty() {
        for &s in schemes {
            let sum: f64 = common.iter().filter_map(|&t| ok(s, t)).sum();
            inter.insert(s, sum / common.len() as f64);
        }
    }
    QosSummary {
        users,
        delta,
        trials,
        feasible,
        intersection: common.len(),
        mean_power_intersection: inter,
        mean_power_own: own,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub scheme: Scheme,
    pub users: usize,
    pub delta: f64,
    pub mean_seconds: f64,
    pub trials: usize,
}

/// Wall time per scheme at the first grid SNR. Trials run one after the
/// other so that the measurements do not compete for cores.
pub fn run_timing(spec: &ExperimentSpec) -> Result<(Vec<TrialRecord>, Vec<TimingRow>)> {
    spec.validate()?;
    let tol = spec.tolerances();
    let snr = spec.snr_db[0];
    let power = spec.power_at(snr);
    let mut records = Vec::new();
    for (users, antennas) in spec.sizes() {
        for delta in spec.deltas() {
            let model = vec![CsitScaling::fixed(delta); users];
            for trial in 0..spec.trials {
                let draw = draw_trial(spec.seed, users, antennas, trial);
                let ests = estimates_at(&draw, &model, power)?;
                for &scheme in &spec.schemes {
                    records.push(maxmin_record(scheme, &ests, power, spec.noise_var, &tol, delta, snr, trial));
                }
            }
        }
    }
    sort_records(&mut records);
    let rows = aggregate(&records)
        .into_iter()
        .map(|a| TimingRow {
            scheme: a.scheme,
            users: a.users,
            delta: a.delta,
            mean_seconds: a.mean_seconds,
            trials: a.certified + a.excluded,
        })
        .collect();
    Ok((records, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DofRow {
    pub scheme: Scheme,
    pub theoretical: Option<f64>,
    pub empirical: Option<f64>,
    pub window_db: (f64, f64),
}

/// Mean certified value per grid SNR for one scheme.
pub fn mean_curve(records: &[TrialRecord], scheme: Scheme, snr_db: &[f64]) -> Vec<Option<f64>> {
    snr_db
        .iter()
        .map(|&snr| {
            let v: Vec<f64> = records
                .iter()
                .filter(|r| r.scheme == scheme && r.snr_db == snr && r.certified && r.value.is_finite())
                .map(|r| r.value)
                .collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}

/// Slope of the mean rate over the top 20 dB of the grid next to the
/// optimal max-min DoF.
pub fn run_dof_report(spec: &ExperimentSpec) -> Result<(Vec<TrialRecord>, Vec<DofRow>)> {
    let records = run_maxmin_sweep(spec)?;
    let rows = dof_rows(spec, &records)?;
    Ok((records, rows))
}

pub fn dof_rows(spec: &ExperimentSpec, records: &[TrialRecord]) -> Result<Vec<DofRow>> {
    let top = *spec.snr_db.last().expect("validated grid");
    let lo = top - 20.0;
    let window: Vec<f64> = spec.snr_db.iter().copied().filter(|&s| s >= lo - 1e-9).collect();
    let profile = (spec.users >= 2)
        .then(|| DofProfile::new(&spec.csit.alphas(spec.users)))
        .transpose()?;
    spec.schemes
        .iter()
        .map(|&scheme| {
            let curve = mean_curve(records, scheme, &window);
            let empirical = if window.len() >= 2 && curve.iter().all(Option::is_some) {
                let y: Vec<f64> = curve.into_iter().flatten().collect();
                Some(empirical_dof(&window, &y)?)
            } else {
                None
            };
            let theoretical = profile.as_ref().map(|p| match scheme.strategy() {
                Strategy::NoRateSplitting => max_min_dof_nors(p),
                Strategy::RateSplitting => max_min_dof_rs(p).0,
            });
            Ok(DofRow {
                scheme,
                theoretical,
                empirical,
                window_db: (window[0], top),
            })
        })
        .collect()
}

/// Result of [`run`], for printing.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum RunSummary {
    Maxmin(Vec<Aggregate>),
    Qos(Vec<QosSummary>),
    Timing(Vec<TimingRow>),
    Dof(Vec<DofRow>),
}

/// Runs the experiment of `spec.mode` and writes its outputs to `out`.
pub fn run(spec: &ExperimentSpec, out: Option<&Path>) -> Result<(Vec<TrialRecord>, RunSummary)> {
    let (records, summary) = match spec.mode {
        Mode::Maxmin => {
            let r = run_maxmin_sweep(spec)?;
            let a = aggregate(&r);
            (r, RunSummary::Maxmin(a))
        }
        Mode::Qos => {
            let (r, s) = run_qos_study(spec)?;
            (r, RunSummary::Qos(s))
        }
        Mode::Timing => {
            let (r, s) = run_timing(spec)?;
            (r, RunSummary::Timing(s))
        }
        Mode::Dof => {
            let (r, s) = run_dof_report(spec)?;
            (r, RunSummary::Dof(s))
        }
    };
    if let Some(dir) = out {
        write_outputs(dir, spec, &records, &summary)?;
    }
    Ok((records, summary))
}
