//! Cutting-set method for the worst-case max-min problem.
//!
//! Each outer iteration solves the problem restricted to finitely many
//! sampled channels per user (by alternating optimization over equalizers,
//! weights and precoder), then pessimizes every constraint over its ball
//! and appends the violating channels to the samples.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::{estimate_matrix, ChannelEstimate, ChannelVector};
use crate::conic::{Affine, ComplexAffine, ConicProgram, SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::linalg::{dominant_left_singular, CMatrix, CVector, C64};
use crate::par::*;
use crate::pessimizer::{dinkelbach_worst_case, worst_case_mmse, PessimizerOptions, StreamKind};
use crate::rates::{receive_powers_unchecked, EqualizerWeightPair, Precoder, RateAllocation};
use crate::Strategy;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Largest acceptable rate violation, bits.
    pub eps_v: f64,
    /// AO stops when the objective moves less than this.
    pub eps_r: f64,
    pub ao_max_iter: usize,
    pub outer_max_iter: usize,
    /// Worst-case channels closer than this to a sample are not appended.
    pub duplicate_tol: f64,
    pub pessimizer: PessimizerOptions,
    pub conic: SolverSettings,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_v: 1e-3,
            eps_r: 1e-4,
            ao_max_iter: 200,
            outer_max_iter: 50,
            duplicate_tol: 1e-6,
            pessimizer: PessimizerOptions::default(),
            conic: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub tolerances: Tolerances,
    /// Starting precoder; scaled onto the power budget if given.
    pub initial: Option<Precoder>,
    /// Keep the common stream but pin every common-rate portion to zero.
    pub zero_common: bool,
}

/// Finite channel samples per user, one list per decoded stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSets {
    pub private_samples: Vec<Vec<ChannelVector>>,
    pub common_samples: Vec<Vec<ChannelVector>>,
}

impl SampleSets {
    pub fn from_estimates(ests: &[ChannelEstimate]) -> Self {
        let nominal: Vec<Vec<ChannelVector>> = ests.iter().map(|e| vec![e.nominal.clone()]).collect();
        Self {
            private_samples: nominal.clone(),
            common_samples: nominal,
        }
    }

    pub fn users(&self) -> usize {
        self.private_samples.len()
    }

    pub fn list(&self, kind: StreamKind, k: usize) -> &[ChannelVector] {
        match kind {
            StreamKind::Private => &self.private_samples[k],
            StreamKind::Common => &self.common_samples[k],
        }
    }

    /// Appends `h` unless it is within `tol` of an existing sample.
    pub fn push(&mut self, kind: StreamKind, k: usize, h: ChannelVector, tol: f64) -> bool {
        let list = match kind {
            StreamKind::Private => &mut self.private_samples[k],
            StreamKind::Common => &mut self.common_samples[k],
        };
        if list.iter().any(|s| s.distance(&h) <= tol) {
            return false;
        }
        list.push(h);
        true
    }

    pub fn total(&self, kind: StreamKind) -> usize {
        match kind {
            StreamKind::Private => self.private_samples.iter().map(Vec::len).sum(),
            StreamKind::Common => self.common_samples.iter().map(Vec::len).sum(),
        }
    }
}

/// AO state on the sampled problem, in the caller's power units.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWmmseState {
    pub precoder: Precoder,
    pub alloc: RateAllocation,
    pub private_pairs: Vec<Vec<EqualizerWeightPair>>,
    pub common_pairs: Vec<Vec<EqualizerWeightPair>>,
    /// Optimization-step objective per AO iteration (rate, or power).
    pub objectives: Vec<f64>,
    pub converged: bool,
}

/// What the fixed-(g, u) step optimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepObjective {
    /// Maximize the max-min rate at this transmit power.
    MaxRate { power: f64 },
    /// Minimize transmit power with every total rate at least `target`.
    MinPower { target: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub private: Vec<f64>,
    pub common: Vec<f64>,
    pub max_violation: f64,
}

impl ViolationReport {
    fn new(private: Vec<f64>, common: Vec<f64>) -> Self {
        let max_violation = private
            .iter()
            .chain(&common)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            private,
            common,
            max_violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub private_samples: usize,
    pub common_samples: usize,
    pub inner_iterations: usize,
}

/// Worst-case rates of a precoder, each from a fresh full pessimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub worst_private: Vec<f64>,
    /// Per-user worst-case common rate (empty without a common stream).
    pub worst_common: Vec<f64>,
    pub violation: ViolationReport,
    /// Max-min total rate the precoder guarantees over the balls, with the
    /// common split shrunk proportionally if the common stream falls short.
    pub guaranteed_rate: f64,
    pub max_eig_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxMinResult {
    pub strategy: Strategy,
    pub alloc: RateAllocation,
    pub precoder: Precoder,
    /// Final pass found every violation within `eps_v`.
    pub certified: bool,
    pub certificate: Certificate,
    pub trace: Vec<TraceRow>,
    /// AO objective sequence of every optimization step.
    pub ao_objectives: Vec<Vec<f64>>,
    pub samples: SampleSets,
}

/// Closed-form MMSE equalizer and weight of one stream at channel `h`.
pub(crate) fn mmse_pair(h: &CVector, p: &Precoder, k: usize, kind: StreamKind, noise_var: f64) -> EqualizerWeightPair {
    let pw = receive_powers_unchecked(h, p, k, noise_var);
    let (g, eps) = match kind {
        StreamKind::Private => (
            crate::linalg::inner(&p.private_column(k), h) / pw.total,
            pw.interference / pw.total,
        ),
        StreamKind::Common => (
            crate::linalg::inner(&p.common, h) / pw.total_common,
            pw.interference_common / pw.total_common,
        ),
    };
    EqualizerWeightPair { g, u: 1.0 / eps }
}

fn pairs_for(samples: &SampleSets, p: &Precoder, kind: StreamKind, noise_var: f64) -> Vec<Vec<EqualizerWeightPair>> {
    (0..samples.users())
        .map(|k| {
            samples
                .list(kind, k)
                .iter()
                .map(|h| mmse_pair(h, p, k, kind, noise_var))
                .collect()
        })
        .collect()
}

/// Deterministic starting point: matched filters for the private streams,
/// dominant left singular vector of the estimates for the common stream.
pub fn initial_precoder(ests: &[ChannelEstimate], power: f64, strategy: Strategy) -> Precoder {
    let k = ests.len();
    let n_t = ests[0].antennas();
    let private_share = if strategy.has_common() { 0.5 } else { 1.0 };
    let per_user = (power * private_share / k as f64).sqrt();
    let cols: Vec<CVector> = ests
        .iter()
        .map(|e| {
            let h = e.nominal.as_vector();
            let n = h.norm();
            if n > 0.0 {
                h * C64::new(per_user / n, 0.0)
            } else {
                CVector::zeros(n_t)
            }
        })
        .collect();
    let common = if strategy.has_common() {
        dominant_left_singular(&estimate_matrix(ests)) * C64::new((power * 0.5).sqrt(), 0.0)
    } else {
        CVector::zeros(n_t)
    };
    Precoder {
        common,
        private: CMatrix::from_columns(&cols),
    }
}

struct PrecoderVars {
    common: Option<(Vec<usize>, Vec<usize>)>,
    private: Vec<(Vec<usize>, Vec<usize>)>,
}

impl PrecoderVars {
    fn all(&self) -> Vec<usize> {
        let mut v = Vec::new();
        if let Some((r, i)) = &self.common {
            v.extend(r);
            v.extend(i);
        }
        for (r, i) in &self.private {
            v.extend(r);
            v.extend(i);
        }
        v
    }

    /// `hᴴ p` as an affine expression, `p` being the common stream when
    /// `stream` is `None`.
    fn projection(&self, h: &CVector, stream: Option<usize>) -> ComplexAffine {
        let (re, im) = match stream {
            None => self.common.as_ref().expect("common stream present"),
            Some(i) => &self.private[i],
        };
        let mut z = ComplexAffine::zero();
        for n in 0..h.len() {
            z.add_scaled_var(h[n].conj(), re[n], im[n]);
        }
        z
    }

    fn extract(&self, x: &[f64], n_t: usize) -> Precoder {
        let read = |(re, im): &(Vec<usize>, Vec<usize>)| CVector::from_fn(n_t, |n, _| C64::new(x[re[n]], x[im[n]]));
        let common = self.common.as_ref().map_or_else(|| CVector::zeros(n_t), read);
        let cols: Vec<CVector> = self.private.iter().map(read).collect();
        Precoder {
            common,
            private: CMatrix::from_columns(&cols),
        }
    }
}

/// `w‖r‖² ≤ t` for complex entries `r` plus the constant noise entry.
fn wmse_cone(prog: &mut ConicProgram, t: Affine, w: f64, entries: &[ComplexAffine], noise_term: f64, label: &str) {
    let s = w.sqrt();
    let mut v = Vec::with_capacity(2 * entries.len() + 1);
    for z in entries {
        v.push(z.re.clone().scaled(s));
        v.push(z.im.clone().scaled(s));
    }
    v.push(Affine::constant(s * noise_term));
    prog.rotated_soc(t, Affine::constant(1.0), v, label);
}

struct StepOutput {
    precoder: Precoder,
    rate: f64,
    common_split: Vec<f64>,
    objective: f64,
}

/// One precoder/rate update at fixed equalizers and weights. Everything is
/// in normalized units where the noise variance is `noise`.
#[allow(clippy::too_many_arguments)]
fn optimization_step(
    samples: &SampleSets,
    private_pairs: &[Vec<EqualizerWeightPair>],
    common_pairs: &[Vec<EqualizerWeightPair>],
    has_common: bool,
    zero_common: bool,
    noise: f64,
    objective: StepObjective,
    settings: &SolverSettings,
) -> Result<StepOutput> {
    let users = samples.users();
    let n_t = samples.private_samples[0][0].len();
    let sigma = noise.sqrt();
    let mut prog = ConicProgram::new();

    let rt = match objective {
        StepObjective::MaxRate { .. } => {
            let v = prog.add_var("R_t");
            prog.set_objective(v, -1.0);
            Affine::var(v)
        }
        StepObjective::MinPower { target } => Affine::constant(target),
    };
    let c: Vec<Option<usize>> = (0..users)
        .map(|k| (has_common && !zero_common).then(|| prog.add_var(format!("C[{k}]"))))
        .collect();
    let common = has_common.then(|| (prog.add_vars("pc_re", n_t), prog.add_vars("pc_im", n_t)));
    let private: Vec<(Vec<usize>, Vec<usize>)> = (0..users)
        .map(|k| (prog.add_vars(&format!("p{k}_re"), n_t), prog.add_vars(&format!("p{k}_im"), n_t)))
        .collect();
    let vars = PrecoderVars { common, private };

    let c_sum = c.iter().flatten().fold(Affine::default(), |acc, &v| acc.plus(&Affine::var(v)));
    let c_vars: Vec<usize> = c.iter().flatten().copied().collect();
    if !c_vars.is_empty() {
        prog.nonneg(c_vars.iter().map(|&v| Affine::var(v)).collect(), "C >= 0");
    }

    for k in 0..users {
        for (j, (h, pair)) in samples.private_samples[k].iter().zip(&private_pairs[k]).enumerate() {
            let w = pair.u / LN_2;
            // log₂u + 1/ln2 + C_k − R_t
            let mut t = rt.clone().scaled(-1.0).shifted(pair.u.log2() + 1.0 / LN_2);
            if let Some(ck) = c[k] {
                t.add_term(ck, 1.0);
            }
            let entries: Vec<ComplexAffine> = (0..users)
                .map(|i| {
                    let mut z = vars.projection(h, Some(i)).scaled_complex(pair.g);
                    if i == k {
                        z.add_constant(C64::new(-1.0, 0.0));
                    }
                    z
                })
                .collect();
            wmse_cone(&mut prog, t, w, &entries, pair.g.norm() * sigma, &format!("private[{k}][{j}]"));
        }
        if !has_common {
            continue;
        }
        for (j, (h, pair)) in samples.common_samples[k].iter().zip(&common_pairs[k]).enumerate() {
            let w = pair.u / LN_2;
            let t = c_sum.clone().scaled(-1.0).shifted(pair.u.log2() + 1.0 / LN_2);
            let mut entries = Vec::with_capacity(users + 1);
            let mut zc = vars.projection(h, None).scaled_complex(pair.g);
            zc.add_constant(C64::new(-1.0, 0.0));
            entries.push(zc);
            for i in 0..users {
                entries.push(vars.projection(h, Some(i)).scaled_complex(pair.g));
            }
            wmse_cone(&mut prog, t, w, &entries, pair.g.norm() * sigma, &format!("common[{k}][{j}]"));
        }
    }

    let pv: Vec<Affine> = vars.all().into_iter().map(Affine::var).collect();
    let s = match objective {
        StepObjective::MaxRate { .. } => {
            prog.soc(Affine::constant(1.0), pv, "power");
            None
        }
        StepObjective::MinPower { .. } => {
            let s = prog.add_var("sqrt_power");
            prog.set_objective(s, 1.0);
            prog.soc(Affine::var(s), pv, "power");
            Some(s)
        }
    };

    let sol = prog.solve(settings);
    let x = match (sol.status, sol.x()) {
        (SolveStatus::Optimal, Some(x)) => x,
        _ => return Err(Error::solver(sol.status, "solving the sampled precoder step")),
    };
    let precoder = vars.extract(x, n_t);
    let common_split: Vec<f64> = c.iter().map(|v| v.map_or(0.0, |i| x[i].max(0.0))).collect();
    let rate = rt.eval(x);
    let objective = match s {
        None => rate,
        Some(s) => x[s] * x[s],
    };
    Ok(StepOutput {
        precoder,
        rate,
        common_split,
        objective,
    })
}

impl ComplexAffine {
    fn scaled_complex(&self, w: C64) -> ComplexAffine {
        ComplexAffine {
            re: self.re.clone().scaled(w.re).plus(&self.im.clone().scaled(-w.im)),
            im: self.re.clone().scaled(w.im).plus(&self.im.clone().scaled(w.re)),
        }
    }
}

/// Alternating optimization on the sampled problem.
///
/// For [`StepObjective::MinPower`] the initial precoder must already meet
/// the sampled targets, otherwise the first step is infeasible.
pub fn ao_optimize_sampled(
    samples: &SampleSets,
    p_init: &Precoder,
    strategy: Strategy,
    objective: StepObjective,
    noise_var: f64,
    zero_common: bool,
    tol: &Tolerances,
) -> Result<SampledWmmseState> {
    let scale = match objective {
        StepObjective::MaxRate { power } => {
            if !(power > 0.0) {
                return Err(Error::InvalidInput("power budget must be positive".into()));
            }
            power
        }
        StepObjective::MinPower { .. } => p_init.total_power().max(f64::MIN_POSITIVE),
    };
    let noise = noise_var / scale;
    let root = scale.sqrt();
    let mut p = p_init.scaled(1.0 / root);
    if let StepObjective::MaxRate { .. } = objective {
        let tp = p.total_power();
        if tp > 1.0 {
            p = p.scaled(1.0 / tp.sqrt());
        }
    }
    if !strategy.has_common() || zero_common {
        p.common.fill(C64::new(0.0, 0.0));
    }
    let has_common = strategy.has_common();
    let pairs = |p: &Precoder| {
        let private = pairs_for(samples, p, StreamKind::Private, noise);
        let common = if has_common {
            pairs_for(samples, p, StreamKind::Common, noise)
        } else {
            vec![Vec::new(); samples.users()]
        };
        (private, common)
    };
    if tol.ao_max_iter == 0 {
        return Err(Error::InvalidInput("AO iteration cap must be positive".into()));
    }
    let mut objectives: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut rate = 0.0;
    let mut split = vec![0.0; samples.users()];
    while objectives.len() < tol.ao_max_iter {
        let (private_pairs, common_pairs) = pairs(&p);
        let attempt = |settings: &SolverSettings| {
            optimization_step(
                samples,
                &private_pairs,
                &common_pairs,
                has_common,
                zero_common,
                noise,
                objective,
                settings,
            )
        };
        let looser = SolverSettings {
            tol: tol.conic.tol * 100.0,
            ..tol.conic
        };
        let step = match attempt(&tol.conic).or_else(|_| attempt(&looser)) {
            Ok(step) => step,
            Err(e) if objectives.is_empty() => {
                return Err(match e {
                    Error::Solver { status, context } => Error::Solver {
                        status,
                        context: format!("{context} (first AO iteration)"),
                    },
                    other => other,
                })
            }
            Err(e) => {
                log::warn!("AO stopped after {} iterations: {e}", objectives.len());
                break;
            }
        };
        p = step.precoder;
        rate = step.rate;
        split = step.common_split;
        let value = match objective {
            StepObjective::MaxRate { .. } => step.objective,
            StepObjective::MinPower { .. } => step.objective * scale,
        };
        if let Some(&prev) = objectives.last() {
            let delta: f64 = (value - prev).abs();
            converged = match objective {
                StepObjective::MaxRate { .. } => delta < tol.eps_r,
                StepObjective::MinPower { .. } => delta < tol.eps_r * prev.abs(),
            };
        }
        objectives.push(value);
        if converged {
            break;
        }
    }
    let (private_pairs, common_pairs) = pairs(&p);
    Ok(SampledWmmseState {
        precoder: p.scaled(root),
        alloc: RateAllocation {
            max_min_rate: rate,
            common_split: split,
        },
        private_pairs,
        common_pairs,
        objectives,
        converged,
    })
}

fn rate_of_mmse(eps: f64) -> f64 {
    -eps.log2()
}

/// Pessimizes every constraint of `state` and appends violating channels.
pub fn pessimize_and_extend(
    state: &SampledWmmseState,
    samples: &mut SampleSets,
    ests: &[ChannelEstimate],
    strategy: Strategy,
    noise_var: f64,
    tol: &Tolerances,
) -> Result<ViolationReport> {
    let users = ests.len();
    let rt = state.alloc.max_min_rate;
    let c = &state.alloc.common_split;
    let c_sum: f64 = c.iter().sum();
    let mut jobs: Vec<(usize, StreamKind)> = (0..users).map(|k| (k, StreamKind::Private)).collect();
    if strategy.has_common() {
        jobs.extend((0..users).map(|k| (k, StreamKind::Common)));
    }
    let results: Vec<Result<_>> = jobs
        .clone()
        .into_par_iter()
        .map(|(k, kind)| {
            let target = match kind {
                StreamKind::Private => rt - c[k],
                StreamKind::Common => c_sum,
            };
            let threshold = (-target).exp2().min(1.0);
            dinkelbach_worst_case(&state.precoder, k, kind, threshold, &ests[k], noise_var, &tol.pessimizer)
                .map(|r| (target, r))
        })
        .collect();
    let mut private = vec![f64::NEG_INFINITY; users];
    let mut common = Vec::new();
    if strategy.has_common() {
        common = vec![f64::NEG_INFINITY; users];
    }
    for ((k, kind), res) in jobs.into_iter().zip(results) {
        let (target, r) = res?;
        // Without a violation `worst_mmse` is the threshold itself, so the
        // entry is the (non-positive) slack of the clamped target.
        let violation = target - rate_of_mmse(r.worst_mmse);
        match kind {
            StreamKind::Private => private[k] = violation,
            StreamKind::Common => common[k] = violation,
        }
        if r.violated {
            if let Some(h) = r.worst_channel {
                samples.push(kind, k, h, tol.duplicate_tol);
            }
        }
    }
    Ok(ViolationReport::new(private, common))
}

/// Fresh worst-case evaluation of a precoder and rate split.
pub fn certify(
    p: &Precoder,
    alloc: &RateAllocation,
    ests: &[ChannelEstimate],
    strategy: Strategy,
    noise_var: f64,
    tol: &Tolerances,
) -> Result<Certificate> {
    let users = ests.len();
    let mut jobs: Vec<(usize, StreamKind)> = (0..users).map(|k| (k, StreamKind::Private)).collect();
    if strategy.has_common() {
        jobs.extend((0..users).map(|k| (k, StreamKind::Common)));
    }
    let results: Vec<Result<_>> = jobs
        .clone()
        .into_par_iter()
        .map(|(k, kind)| worst_case_mmse(p, k, kind, &ests[k], noise_var, &tol.pessimizer))
        .collect();
    let mut worst_private = vec![0.0; users];
    let mut worst_common = if strategy.has_common() { vec![0.0; users] } else { Vec::new() };
    let mut max_ratio = 0.0_f64;
    for ((k, kind), r) in jobs.into_iter().zip(results) {
        let r = r?;
        max_ratio = max_ratio.max(r.max_eig_ratio);
        let rate = rate_of_mmse(r.worst_mmse);
        match kind {
            StreamKind::Private => worst_private[k] = rate,
            StreamKind::Common => worst_common[k] = rate,
        }
    }
    let c = &alloc.common_split;
    let c_sum: f64 = c.iter().sum();
    let private_v: Vec<f64> = (0..users)
        .map(|k| alloc.max_min_rate - worst_private[k] - c[k])
        .collect();
    let common_v: Vec<f64> = worst_common.iter().map(|r| c_sum - r).collect();
    let common_rate = worst_common.iter().copied().fold(f64::INFINITY, f64::min);
    let shrink = if c_sum > 0.0 { (common_rate / c_sum).min(1.0) } else { 0.0 };
    let guaranteed_rate = (0..users)
        .map(|k| worst_private[k] + shrink * c[k])
        .fold(f64::INFINITY, f64::min);
    Ok(Certificate {
        worst_private,
        worst_common,
        violation: ViolationReport::new(private_v, common_v),
        guaranteed_rate,
        max_eig_ratio: max_ratio,
    })
}

/// Robust max-min rate design by the cutting-set method.
pub fn solve_max_min(
    ests: &[ChannelEstimate],
    power: f64,
    noise_var: f64,
    strategy: Strategy,
    opts: &SolveOptions,
) -> Result<MaxMinResult> {
    validate(ests, power, noise_var)?;
    let tol = &opts.tolerances;
    let mut p = match &opts.initial {
        Some(p0) => p0.clone(),
        None if opts.zero_common => initial_precoder(ests, power, Strategy::NoRateSplitting),
        None => initial_precoder(ests, power, strategy),
    };
    let mut samples = SampleSets::from_estimates(ests);
    let mut trace = Vec::new();
    let mut ao_objectives = Vec::new();
    let mut state = None;
    for iteration in 1..=tol.outer_max_iter {
        let st = ao_optimize_sampled(
            &samples,
            &p,
            strategy,
            StepObjective::MaxRate { power },
            noise_var,
            opts.zero_common,
            tol,
        )?;
        ao_objectives.push(st.objectives.clone());
        let report = pessimize_and_extend(&st, &mut samples, ests, strategy, noise_var, tol)?;
        trace.push(TraceRow {
            iteration,
            objective: st.alloc.max_min_rate,
            max_violation: report.max_violation,
            private_samples: samples.total(StreamKind::Private),
            common_samples: samples.total(StreamKind::Common),
            inner_iterations: st.objectives.len(),
        });
        log::debug!(
            "cutting-set iteration {iteration}: rate {:.6}, max violation {:.3e}",
            st.alloc.max_min_rate,
            report.max_violation
        );
        p = st.precoder.clone();
        let done = report.max_violation <= tol.eps_v;
        state = Some(st);
        if done {
            break;
        }
    }
    let st = state.ok_or_else(|| Error::InvalidInput("outer iteration cap must be positive".into()))?;
    let certificate = certify(&st.precoder, &st.alloc, ests, strategy, noise_var, tol)?;
    let certified = certificate.violation.max_violation <= tol.eps_v;
    Ok(MaxMinResult {
        strategy,
        alloc: st.alloc,
        precoder: st.precoder,
        certified,
        certificate,
        trace,
        ao_objectives,
        samples,
    })
}

/// Rate-splitting max-min design.
pub fn solve_max_min_rs(ests: &[ChannelEstimate], power: f64, noise_var: f64, opts: &SolveOptions) -> Result<MaxMinResult> {
    solve_max_min(ests, power, noise_var, Strategy::RateSplitting, opts)
}

/// Max-min design without a common stream.
pub fn solve_max_min_nors(ests: &[ChannelEstimate], power: f64, noise_var: f64, opts: &SolveOptions) -> Result<MaxMinResult> {
    solve_max_min(ests, power, noise_var, Strategy::NoRateSplitting, opts)
}

pub(crate) fn validate(ests: &[ChannelEstimate], power: f64, noise_var: f64) -> Result<()> {
    if ests.is_empty() {
        return Err(Error::InvalidInput("no users".into()));
    }
    let n_t = ests[0].antennas();
    if ests.iter().any(|e| e.antennas() != n_t) {
        return Err(Error::InvalidInput("estimates have different lengths".into()));
    }
    if ests.len() > n_t {
        return Err(Error::InvalidInput("more users than antennas".into()));
    }
    if !(power > 0.0) || !(noise_var > 0.0) {
        return Err(Error::InvalidInput("power and noise variance must be positive".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel, trial_rng};
    use crate::linalg::real_vec;

    fn instance(seed: u64, users: usize, n_t: usize, radius: f64) -> Vec<ChannelEstimate> {
        let mut rng = trial_rng(seed, 0);
        (0..users)
            .map(|_| ChannelEstimate::new(sample_channel(&mut rng, n_t), radius).unwrap())
            .collect()
    }

    #[test]
    fn duplicate_samples_are_suppressed() {
        let ests = instance(1, 2, 2, 0.1);
        let mut s = SampleSets::from_estimates(&ests);
        let h = ests[0].nominal.clone();
        assert!(!s.push(StreamKind::Private, 0, h.clone(), 1e-6));
        let moved: ChannelVector = (h.as_vector() + real_vec(&[1e-7, 0.0])).into();
        assert!(!s.push(StreamKind::Private, 0, moved, 1e-6));
        let far: ChannelVector = (h.as_vector() + real_vec(&[1e-3, 0.0])).into();
        assert!(s.push(StreamKind::Private, 0, far.clone(), 1e-6));
        assert!(s.push(StreamKind::Common, 0, far, 1e-6));
        assert_eq!(s.total(StreamKind::Private), 3);
        assert_eq!(s.total(StreamKind::Common), 3);
    }

    #[test]
    fn initial_precoder_uses_full_power() {
        let ests = instance(2, 3, 4, 0.1);
        for strategy in [Strategy::RateSplitting, Strategy::NoRateSplitting] {
            let p = initial_precoder(&ests, 7.0, strategy);
            assert!((p.total_power() - 7.0).abs() < 1e-12);
            assert_eq!(p.common_power() > 0.0, strategy.has_common());
        }
    }

    #[test]
    fn single_user_perfect_csit_is_mrt() {
        let ests = instance(3, 1, 3, 0.0);
        for strategy in [Strategy::RateSplitting, Strategy::NoRateSplitting] {
            let r = solve_max_min(&ests, 10.0, 1.0, strategy, &SolveOptions::default()).unwrap();
            let expect = (1.0 + 10.0 * ests[0].nominal.norm().powi(2)).log2();
            assert!((r.alloc.max_min_rate - expect).abs() < 1e-3, "{strategy:?}: {}", r.alloc.max_min_rate);
            assert!(r.certified);
            assert_eq!(r.trace.len(), 1);
        }
    }

    #[test]
    fn single_user_robust_rate_matches_closed_form() {
        // With one user, p = √P ĥ/‖ĥ‖ and the worst channel shrinks the gain to (‖ĥ‖ − δ)².
        let ests = instance(4, 1, 2, 0.2);
        let r = solve_max_min_nors(&ests, 10.0, 1.0, &SolveOptions::default()).unwrap();
        let expect = (1.0 + 10.0 * (ests[0].nominal.norm() - 0.2).powi(2)).log2();
        assert!(r.certified);
        assert!((r.alloc.max_min_rate - expect).abs() < 2e-3, "{} vs {expect}", r.alloc.max_min_rate);
        assert!((r.certificate.guaranteed_rate - expect).abs() < 2e-3);
    }

    #[test]
    fn result_respects_power_budget() {
        let ests = instance(5, 2, 2, 0.1);
        let r = solve_max_min_rs(&ests, 100.0, 1.0, &SolveOptions::default()).unwrap();
        assert!(r.precoder.total_power() <= 100.0 * (1.0 + 1e-6));
        assert!(r.alloc.common_split.iter().all(|&c| c >= 0.0));
        assert!(r.certified);
        for seq in &r.ao_objectives {
            for w in seq.windows(2) {
                assert!(w[1] >= w[0] - 1e-6);
            }
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let ests = instance(6, 2, 2, 0.1);
        assert!(validate(&ests, 0.0, 1.0).is_err());
        assert!(validate(&ests, 1.0, 0.0).is_err());
        assert!(validate(&[], 1.0, 1.0).is_err());
        let wide = instance(7, 3, 2, 0.1);
        assert!(validate(&wide, 1.0, 1.0).is_err());
    }
}
