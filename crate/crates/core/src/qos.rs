//! Minimum-power design under worst-case rate targets.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelEstimate;
use crate::conic::{Affine, ComplexAffine, ConicProgram, SolveStatus};
use crate::conservative::{conservative_ao, solve_conservative};
use crate::cutting_set::{
    ao_optimize_sampled, certify, pessimize_and_extend, solve_max_min, validate, Certificate, SampleSets, SolveOptions,
    StepObjective, Tolerances, TraceRow,
};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::pessimizer::StreamKind;
use crate::rates::{Precoder, RateAllocation};
use crate::Strategy;

/// `log₂(1 + SINR)` for a linear SINR.
pub fn sinr_to_bits(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

pub fn bits_to_sinr(bits: f64) -> f64 {
    bits.exp2() - 1.0
}

/// `log₂(1 + SINR)` for an SINR in dB.
pub fn sinr_db_to_bits(db: f64) -> f64 {
    sinr_to_bits(10f64.powf(db / 10.0))
}

pub fn bits_to_sinr_db(bits: f64) -> f64 {
    10.0 * bits_to_sinr(bits).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosSpec {
    /// Worst-case total rate every user must get, bits.
    pub rate_target: f64,
    /// Largest power the feasibility search may try.
    pub p_max: f64,
    pub scheme: Strategy,
}

impl QosSpec {
    /// Target with the default cap `10⁶·σ²`.
    pub fn new(rate_target: f64, noise_var: f64, scheme: Strategy) -> Result<Self> {
        let spec = Self {
            rate_target,
            p_max: 1e6 * noise_var,
            scheme,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        if !(self.rate_target >= 0.0) || !self.rate_target.is_finite() {
            return Err(Error::InvalidInput("rate target must be non-negative".into()));
        }
        if !(self.p_max > 0.0) {
            return Err(Error::InvalidInput("p_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QosStatus {
    Feasible,
    Infeasible,
    NotCertified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QosResult {
    pub status: QosStatus,
    /// `tr(P Pᴴ)`.
    pub power: f64,
    pub precoder: Precoder,
    pub alloc: RateAllocation,
    pub certificate: Option<Certificate>,
    pub trace: Vec<TraceRow>,
    pub ao_objectives: Vec<Vec<f64>>,
    /// Power at which the feasibility search succeeded.
    pub init_power: Option<f64>,
}

impl QosResult {
    fn unsolved(status: QosStatus, precoder: Precoder, alloc: RateAllocation, init_power: Option<f64>) -> Self {
        Self {
            status,
            power: precoder.total_power(),
            precoder,
            alloc,
            certificate: None,
            trace: Vec::new(),
            ao_objectives: Vec::new(),
            init_power,
        }
    }

    fn trivial(ests: &[ChannelEstimate]) -> Self {
        let users = ests.len();
        Self {
            status: QosStatus::Feasible,
            power: 0.0,
            precoder: Precoder::zeros(ests[0].antennas(), users),
            alloc: RateAllocation::without_common(0.0, users),
            certificate: None,
            trace: Vec::new(),
            ao_objectives: Vec::new(),
            init_power: Some(0.0),
        }
    }
}

/// Outcome of the doubling-power search.
#[derive(Debug, Clone)]
pub enum InitOutcome {
    /// A certified max-min design reaching the target, with its samples.
    Ready {
        precoder: Precoder,
        alloc: RateAllocation,
        power: f64,
        samples: SampleSets,
    },
    /// `p_max` passed without reaching the target; best design found.
    Short { precoder: Precoder, alloc: RateAllocation, power: f64 },
}

fn initial_power(spec: &QosSpec, users: usize, noise_var: f64) -> f64 {
    (users as f64 * noise_var * spec.rate_target.exp2()).min(spec.p_max)
}

/// Runs the max-min solver at `P_0, 2P_0, …` until the certified rate
/// reaches the target or the next power would exceed `p_max`.
pub fn feasibility_init(spec: &QosSpec, ests: &[ChannelEstimate], noise_var: f64, tol: &Tolerances) -> Result<InitOutcome> {
    spec.check()?;
    let mut power = initial_power(spec, ests.len(), noise_var);
    let mut initial = None;
    loop {
        let opts = SolveOptions {
            tolerances: *tol,
            initial: initial.clone(),
            zero_common: false,
        };
        let r = solve_max_min(ests, power, noise_var, spec.scheme, &opts)?;
        log::debug!("feasibility search at {power:.4e}: rate {:.5}", r.alloc.max_min_rate);
        if r.certified && r.alloc.max_min_rate >= spec.rate_target {
            return Ok(InitOutcome::Ready {
                precoder: r.precoder,
                alloc: r.alloc,
                power,
                samples: r.samples,
            });
        }
        if power * 2.0 > spec.p_max * (1.0 + 1e-12) {
            return Ok(InitOutcome::Short {
                precoder: r.precoder,
                alloc: r.alloc,
                power,
            });
        }
        power *= 2.0;
        initial = Some(r.precoder);
    }
}

fn short_status(scheme: Strategy) -> QosStatus {
    match scheme {
        Strategy::NoRateSplitting => QosStatus::Infeasible,
        Strategy::RateSplitting => QosStatus::NotCertified,
    }
}

/// Robust minimum-power design by the cutting-set method.
pub fn solve_qos(spec: &QosSpec, ests: &[ChannelEstimate], noise_var: f64, tol: &Tolerances) -> Result<QosResult> {
    spec.check()?;
    validate(ests, 1.0, noise_var)?;
    if spec.rate_target == 0.0 {
        return Ok(QosResult::trivial(ests));
    }
    let (mut p, mut samples, init_power) = match feasibility_init(spec, ests, noise_var, tol)? {
        InitOutcome::Ready {
            precoder, power, samples, ..
        } => (precoder, samples, power),
        InitOutcome::Short { precoder, alloc, power } => {
            return Ok(QosResult::unsolved(short_status(spec.scheme), precoder, alloc, Some(power)));
        }
    };
    let target = spec.rate_target;
    let strategy = spec.scheme;
    let mut trace = Vec::new();
    let mut ao_objectives = Vec::new();
    let mut last = None;
    for iteration in 1..=tol.outer_max_iter {
        let st = match ao_optimize_sampled(&samples, &p, strategy, StepObjective::MinPower { target }, noise_var, false, tol) {
            Ok(st) => st,
            Err(_) => match restore(&samples, &p, strategy, target, noise_var, spec.p_max, tol)? {
                Some(q) => ao_optimize_sampled(&samples, &q, strategy, StepObjective::MinPower { target }, noise_var, false, tol)?,
                None => {
                    let alloc = RateAllocation::without_common(0.0, ests.len());
                    return Ok(QosResult {
                        trace,
                        ao_objectives,
                        ..QosResult::unsolved(short_status(strategy), p, alloc, Some(init_power))
                    });
                }
            },
        };
        ao_objectives.push(st.objectives.clone());
        let report = pessimize_and_extend(&st, &mut samples, ests, strategy, noise_var, tol)?;
        trace.push(TraceRow {
            iteration,
            objective: st.precoder.total_power(),
            max_violation: report.max_violation,
            private_samples: samples.total(StreamKind::Private),
            common_samples: samples.total(StreamKind::Common),
            inner_iterations: st.objectives.len(),
        });
        p = st.precoder.clone();
        let done = report.max_violation <= tol.eps_v;
        last = Some(st);
        if done {
            break;
        }
    }
    let st = last.ok_or_else(|| Error::InvalidInput("outer iteration cap must be positive".into()))?;
    let certificate = certify(&st.precoder, &st.alloc, ests, strategy, noise_var, tol)?;
    let status = if certificate.violation.max_violation <= tol.eps_v {
        QosStatus::Feasible
    } else {
        QosStatus::NotCertified
    };
    Ok(QosResult {
        status,
        power: st.precoder.total_power(),
        precoder: st.precoder,
        alloc: st.alloc,
        certificate: Some(certificate),
        trace,
        ao_objectives,
        init_power: Some(init_power),
    })
}

/// Sampled max-min at doubling power until the target is met again.
fn restore(
    samples: &SampleSets,
    p: &Precoder,
    strategy: Strategy,
    target: f64,
    noise_var: f64,
    p_max: f64,
    tol: &Tolerances,
) -> Result<Option<Precoder>> {
    let mut power = p.total_power().max(f64::MIN_POSITIVE);
    let mut current = p.clone();
    loop {
        let st = ao_optimize_sampled(samples, &current, strategy, StepObjective::MaxRate { power }, noise_var, false, tol)?;
        if st.alloc.max_min_rate > target {
            return Ok(Some(st.precoder));
        }
        power *= 2.0;
        if power > p_max {
            return Ok(None);
        }
        current = st.precoder;
    }
}

fn finish(
    status: QosStatus,
    precoder: Precoder,
    alloc: RateAllocation,
    ests: &[ChannelEstimate],
    strategy: Strategy,
    noise_var: f64,
    tol: &Tolerances,
    objectives: Vec<f64>,
    init_power: Option<f64>,
) -> Result<QosResult> {
    let certificate = certify(&precoder, &alloc, ests, strategy, noise_var, tol)?;
    let status = match status {
        QosStatus::Feasible if certificate.violation.max_violation > tol.eps_v => QosStatus::NotCertified,
        s => s,
    };
    Ok(QosResult {
        status,
        power: precoder.total_power(),
        precoder,
        alloc,
        certificate: Some(certificate),
        trace: Vec::new(),
        ao_objectives: vec![objectives],
        init_power,
    })
}

/// Conservative minimum-power design: a single SDP without rate-splitting,
/// alternating optimization after a feasibility search with it.
pub fn solve_qos_conservative(spec: &QosSpec, ests: &[ChannelEstimate], noise_var: f64, tol: &Tolerances) -> Result<QosResult> {
    spec.check()?;
    validate(ests, 1.0, noise_var)?;
    if spec.rate_target == 0.0 {
        return Ok(QosResult::trivial(ests));
    }
    let target = spec.rate_target;
    let users = ests.len();
    let alloc = RateAllocation::without_common(target, users);
    match spec.scheme {
        Strategy::NoRateSplitting => match nors_conservative_power(target, ests, noise_var, tol)? {
            Some(p) if p.total_power() <= spec.p_max => {
                finish(QosStatus::Feasible, p, alloc, ests, spec.scheme, noise_var, tol, Vec::new(), None)
            }
            Some(p) => Ok(QosResult::unsolved(QosStatus::Infeasible, p, alloc, None)),
            None => Ok(QosResult::unsolved(
                QosStatus::Infeasible,
                Precoder::zeros(ests[0].antennas(), users),
                alloc,
                None,
            )),
        },
        Strategy::RateSplitting => {
            let mut power = initial_power(spec, users, noise_var);
            let init = loop {
                let st = solve_conservative(ests, power, noise_var, Strategy::RateSplitting, tol)?;
                if st.alloc.max_min_rate >= target {
                    break st;
                }
                if power * 2.0 > spec.p_max * (1.0 + 1e-12) {
                    return Ok(QosResult::unsolved(QosStatus::NotCertified, st.precoder, st.alloc, Some(power)));
                }
                power *= 2.0;
            };
            let st = conservative_ao(
                ests,
                &init.precoder,
                Strategy::RateSplitting,
                StepObjective::MinPower { target },
                noise_var,
                tol,
            )?;
            finish(
                QosStatus::Feasible,
                st.precoder,
                st.alloc,
                ests,
                spec.scheme,
                noise_var,
                tol,
                st.objectives,
                Some(power),
            )
        }
    }
}

/// Globally optimal conservative power without a common stream.
///
/// With the equalizer phase absorbed into `p_k` and `y_k = 1/g_k`, the
/// conservative target reads `‖(Pᴴh − y_k e_k, σ)‖ ≤ 2^{−R/2} y_k` over the
/// ball, a robust second-order cone that the S-lemma turns into one LMI
/// per user. Returns `None` when no power meets the target.
pub fn nors_conservative_power(
    target: f64,
    ests: &[ChannelEstimate],
    noise_var: f64,
    tol: &Tolerances,
) -> Result<Option<Precoder>> {
    validate(ests, 1.0, noise_var)?;
    let users = ests.len();
    let n_t = ests[0].antennas();
    // Work in units where the noise variance is one.
    let root = noise_var.sqrt();
    let mut prog = ConicProgram::new();
    let cols: Vec<(Vec<usize>, Vec<usize>)> = (0..users)
        .map(|k| (prog.add_vars(&format!("p{k}_re"), n_t), prog.add_vars(&format!("p{k}_im"), n_t)))
        .collect();
    let s = prog.add_var("sqrt_power");
    prog.set_objective(s, 1.0);
    let all: Vec<Affine> = cols
        .iter()
        .flat_map(|(re, im)| re.iter().chain(im).map(|&v| Affine::var(v)))
        .collect();
    prog.soc(Affine::var(s), all, "power");
    let scale = (-target / 2.0).exp2();
    for (k, est) in ests.iter().enumerate() {
        let y = prog.add_var(format!("y[{k}]"));
        let lambda = prog.add_var(format!("lambda[{k}]"));
        let h = est.nominal.as_vector();
        let m = users + 1;
        let size = m + 1 + n_t;
        let t = Affine::term(y, scale);
        let mut e = vec![ComplexAffine::zero(); size * size];
        let at = |i: usize, j: usize| i + j * size;
        for i in 0..m {
            e[at(i, i)] = ComplexAffine { re: t.clone(), im: Affine::default() };
        }
        for (i, (re, im)) in cols.iter().enumerate() {
            // b_i = p_iᴴ ĥ − y δ_ik, and row i of A is p_iᴴ.
            let mut b = ComplexAffine::zero();
            for n in 0..n_t {
                b.add_scaled_var(h[n].conj(), re[n], im[n]);
            }
            let mut b = b.conj();
            if i == k {
                b.re.add_term(y, -1.0);
            }
            e[at(i, m)] = b;
            for n in 0..n_t {
                let mut a = ComplexAffine::zero();
                a.add_scaled_var(C64::new(1.0, 0.0), re[n], im[n]);
                e[at(i, m + 1 + n)] = a.conj().scaled(est.radius);
            }
        }
        e[at(users, m)] = ComplexAffine::constant(C64::new(1.0, 0.0));
        e[at(m, m)] = ComplexAffine {
            re: t.clone().plus(&Affine::term(lambda, -1.0)),
            im: Affine::default(),
        };
        for n in 0..n_t {
            e[at(m + 1 + n, m + 1 + n)] = ComplexAffine {
                re: Affine::var(lambda),
                im: Affine::default(),
            };
        }
        prog.hermitian_psd(size, &e, &format!("robust mse[{k}]"));
    }
    let sol = prog.solve(&tol.conic);
    match (sol.status, sol.x()) {
        (SolveStatus::Optimal, Some(x)) => {
            let read = |(re, im): &(Vec<usize>, Vec<usize>)| CVector::from_fn(n_t, |n, _| C64::new(x[re[n]], x[im[n]]) * root);
            let private: Vec<CVector> = cols.iter().map(read).collect();
            Ok(Some(Precoder {
                common: CVector::zeros(n_t),
                private: CMatrix::from_columns(&private),
            }))
        }
        (SolveStatus::Infeasible, _) => Ok(None),
        (status, _) => Err(Error::solver(status, "solving the conservative power SDP")),
    }
}
