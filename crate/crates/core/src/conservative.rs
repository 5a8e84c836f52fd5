//! Conservative WMMSE baseline.
//!
//! Equalizers and weights are fixed per user instead of per channel, so each
//! worst-case MSE over the ball becomes a single linear matrix inequality
//! through the S-lemma. The resulting rates are guaranteed but pessimistic.

use std::f64::consts::LN_2;

use crate::channel::ChannelEstimate;
use crate::conic::{Affine, ComplexAffine, ConicProgram, SolveStatus, SolverSettings};
use crate::cutting_set::{initial_precoder, validate, StepObjective, Tolerances, TraceRow};
use crate::error::{Error, Result};
use crate::linalg::{inner, CMatrix, CVector, C64};
use crate::par::*;
use crate::pessimizer::StreamKind;
use crate::rates::{EqualizerWeightPair, Precoder, RateAllocation};
use crate::Strategy;

/// Slacks of one robust MSE constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub tau: f64,
    pub lambda_slack: f64,
    /// `ψ = g* Qᴴ ĥ − e`, with `Q` the stream's interfering columns.
    pub psi: CVector,
    /// `C = g* Qᴴ`.
    pub coupling: CMatrix,
    pub radius: f64,
}

impl LmiBlock {
    /// `[[τ−λ, ψᴴ, 0], [ψ, I, δC], [0, δCᴴ, λI]]`.
    pub fn assemble(&self) -> CMatrix {
        let (coupling, delta) = (&self.coupling, self.radius);
        let m = self.psi.len();
        let n = coupling.ncols();
        let size = 1 + m + n;
        let mut out = CMatrix::zeros(size, size);
        out[(0, 0)] = C64::new(self.tau - self.lambda_slack, 0.0);
        for i in 0..m {
            out[(1 + i, 0)] = self.psi[i];
            out[(0, 1 + i)] = self.psi[i].conj();
            out[(1 + i, 1 + i)] = C64::new(1.0, 0.0);
            for j in 0..n {
                let c = coupling[(i, j)] * delta;
                out[(1 + i, 1 + m + j)] = c;
                out[(1 + m + j, 1 + i)] = c.conj();
            }
        }
        for j in 0..n {
            out[(1 + m + j, 1 + m + j)] = C64::new(self.lambda_slack, 0.0);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservativeState {
    pub precoder: Precoder,
    pub alloc: RateAllocation,
    pub private_pairs: Vec<EqualizerWeightPair>,
    /// Empty without a common stream.
    pub common_pairs: Vec<EqualizerWeightPair>,
    pub private_blocks: Vec<LmiBlock>,
    pub common_blocks: Vec<LmiBlock>,
    /// Step objective per AO iteration.
    pub objectives: Vec<f64>,
    pub converged: bool,
}

impl ConservativeState {
    /// AO trace in the cutting-set row format (no pessimization, so the
    /// violation column is zero).
    pub fn trace(&self) -> Vec<TraceRow> {
        let users = self.private_pairs.len();
        self.objectives
            .iter()
            .enumerate()
            .map(|(i, &objective)| TraceRow {
                iteration: i + 1,
                objective,
                max_violation: 0.0,
                private_samples: users,
                common_samples: self.common_pairs.len(),
                inner_iterations: 1,
            })
            .collect()
    }
}

/// Columns seen by a stream's MSE and the index of its own column.
/// Private: `[p_1 … p_K]`, index `k`. Common: `[p_c p_1 … p_K]`, index 0.
pub fn stream_columns(p: &Precoder, k: usize, kind: StreamKind) -> (CMatrix, usize) {
    match kind {
        StreamKind::Private => (p.private.clone(), k),
        StreamKind::Common => {
            let mut cols = vec![p.common.clone()];
            cols.extend((0..p.users()).map(|i| p.private_column(i)));
            (CMatrix::from_columns(&cols), 0)
        }
    }
}

/// `C = g* Qᴴ`, so that the conjugated residual at `ĥ + e` is `ψ + C e`.
pub fn coupling_matrix(g: C64, cols: &CMatrix) -> CMatrix {
    cols.adjoint() * g.conj()
}

fn psi_of(g: C64, cols: &CMatrix, own: usize, h: &CVector) -> CVector {
    let mut psi = cols.adjoint() * h * g.conj();
    psi[own] -= C64::new(1.0, 0.0);
    psi
}

/// Exact `max_{‖e‖≤δ} ‖ψ + C e‖²` for a fixed equalizer, by bisection on
/// the multiplier of the ball constraint.
pub fn worst_case_residual(psi: &CVector, coupling: &CMatrix, delta: f64) -> f64 {
    let base = psi.norm_squared();
    if delta == 0.0 || coupling.iter().all(|z| z.norm() == 0.0) {
        return base;
    }
    // Maximize ‖ψ + C e‖² over the ball: the maximizer solves
    // (μI − CᴴC) e = Cᴴψ with μ ≥ λ_max(CᴴC) and ‖e‖ = δ.
    let gram = coupling.adjoint() * coupling;
    let eig = gram.clone().symmetric_eigen();
    let b = coupling.adjoint() * psi;
    let lmax = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let coeffs: Vec<(f64, f64)> = (0..eig.eigenvalues.len())
        .map(|i| {
            let v = eig.eigenvectors.column(i);
            (eig.eigenvalues[i], v.dotc(&b).norm_sqr())
        })
        .collect();
    let norm_sq = |mu: f64| -> f64 { coeffs.iter().map(|&(l, w)| w / (mu - l).powi(2)).sum() };
    let value_at = |e: &CVector| (psi + coupling * e).norm_squared();
    let solve = |mu: f64| -> CVector {
        let mut e = CVector::zeros(b.len());
        for i in 0..coeffs.len() {
            let v = eig.eigenvectors.column(i).into_owned();
            let d = mu - coeffs[i].0;
            if d.abs() > 0.0 {
                e += &v * (v.dotc(&b) / d);
            }
        }
        e
    };
    let target = delta * delta;
    let scale = lmax.abs().max(1.0);
    let mut lo = lmax + 1e-15 * scale;
    let mut best;
    if norm_sq(lo) <= target {
        // Hard case: add a top-eigenvector component to reach the sphere.
        let e0 = solve(lo);
        let top = (0..coeffs.len()).max_by(|&a, &b| coeffs[a].0.total_cmp(&coeffs[b].0)).unwrap();
        let v = eig.eigenvectors.column(top).into_owned();
        let extra = (target - e0.norm_squared()).max(0.0).sqrt();
        best = value_at(&(&e0 + &v * C64::new(extra, 0.0))).max(value_at(&(&e0 - &v * C64::new(extra, 0.0))));
    } else {
        let mut hi = lmax + scale;
        while norm_sq(hi) > target {
            hi = lmax + 2.0 * (hi - lmax);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_sq(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let e = solve(hi);
        let n = e.norm();
        best = value_at(&if n > 0.0 { &e * C64::new(delta / n, 0.0) } else { e });
    }
    best = best.max(base);
    best
}

/// `[[τ−λ, ψᴴ, 0], [ψ, I, δC], [0, δCᴴ, λI]] ⪰ 0`; only the upper triangle
/// is built. `psi_h[i]` is the `i`-th entry of `ψᴴ`, `c[i][j]` of `C`.
fn robust_lmi(
    prog: &mut ConicProgram,
    tau: &Affine,
    lambda: usize,
    psi_h: &[ComplexAffine],
    c: &[Vec<ComplexAffine>],
    delta: f64,
    label: &str,
) {
    let m = psi_h.len();
    let n_t = c.first().map_or(0, Vec::len);
    let size = 1 + m + n_t;
    let mut entries = vec![ComplexAffine::zero(); size * size];
    let at = |i: usize, j: usize| i + j * size;
    entries[at(0, 0)] = ComplexAffine {
        re: tau.clone().plus(&Affine::term(lambda, -1.0)),
        im: Affine::default(),
    };
    for i in 0..m {
        entries[at(0, 1 + i)] = psi_h[i].clone();
        entries[at(1 + i, 1 + i)] = ComplexAffine::constant(C64::new(1.0, 0.0));
        for j in 0..n_t {
            entries[at(1 + i, 1 + m + j)] = c[i][j].scaled(delta);
        }
    }
    for j in 0..n_t {
        entries[at(1 + m + j, 1 + m + j)] = ComplexAffine {
            re: Affine::var(lambda),
            im: Affine::default(),
        };
    }
    prog.hermitian_psd(size, &entries, label);
}

/// Worst-case-optimal fixed equalizer of one stream and its worst-case MSE.
pub fn worst_case_equalizer(
    p: &Precoder,
    est: &ChannelEstimate,
    k: usize,
    kind: StreamKind,
    noise_var: f64,
) -> Result<(C64, f64)> {
    equalizer_with(p, est, k, kind, noise_var, &SolverSettings::default()).map(|(g, eps, _)| (g, eps))
}

fn equalizer_with(
    p: &Precoder,
    est: &ChannelEstimate,
    k: usize,
    kind: StreamKind,
    noise_var: f64,
    settings: &SolverSettings,
) -> Result<(C64, f64, LmiBlock)> {
    let (cols, own) = stream_columns(p, k, kind);
    let h = est.nominal.as_vector();
    let n_t = h.len();
    let m = cols.ncols();
    let mut prog = ConicProgram::new();
    let g_re = prog.add_var("g_re");
    let g_im = prog.add_var("g_im");
    let tau = prog.add_var("tau");
    let lambda = prog.add_var("lambda");
    let s = prog.add_var("s");
    prog.set_objective(tau, 1.0);
    prog.set_objective(s, 1.0);
    let sigma = noise_var.sqrt();
    prog.rotated_soc(
        Affine::var(s),
        Affine::constant(1.0),
        vec![Affine::term(g_re, sigma), Affine::term(g_im, sigma)],
        "noise",
    );
    let psi_h: Vec<ComplexAffine> = (0..m)
        .map(|i| {
            let mut z = ComplexAffine::zero();
            z.add_scaled_var(inner(h, &cols.column(i).into_owned()), g_re, g_im);
            if i == own {
                z.add_constant(C64::new(-1.0, 0.0));
            }
            z
        })
        .collect();
    let c: Vec<Vec<ComplexAffine>> = (0..m)
        .map(|i| {
            (0..n_t)
                .map(|j| {
                    let mut z = ComplexAffine::zero();
                    z.add_scaled_var(cols[(j, i)], g_re, g_im);
                    z.conj()
                })
                .collect()
        })
        .collect();
    robust_lmi(&mut prog, &Affine::var(tau), lambda, &psi_h, &c, est.radius, "robust mse");
    let sol = prog.solve(settings);
    let x = match (sol.status, sol.x()) {
        (SolveStatus::Optimal, Some(x)) => x,
        _ => return Err(Error::solver(sol.status, "solving the worst-case equalizer")),
    };
    let g = C64::new(x[g_re], x[g_im]);
    // Evaluate the worst case of the returned equalizer exactly rather than
    // trusting the slack, so the reported MSE is never optimistic.
    let psi = psi_of(g, &cols, own, h);
    let exact = worst_case_residual(&psi, &coupling_matrix(g, &cols), est.radius);
    let eps = exact + g.norm_sqr() * noise_var;
    let block = LmiBlock {
        tau: x[tau],
        lambda_slack: x[lambda],
        psi,
        coupling: coupling_matrix(g, &cols),
        radius: est.radius,
    };
    Ok((g, eps, block))
}

struct StepOutput {
    precoder: Precoder,
    rate: f64,
    common_split: Vec<f64>,
    objective: f64,
    private_blocks: Vec<LmiBlock>,
    common_blocks: Vec<LmiBlock>,
}

/// Precoder update at fixed equalizers and weights, normalized units.
#[allow(clippy::too_many_arguments)]
fn precoder_step(
    ests: &[ChannelEstimate],
    private_pairs: &[EqualizerWeightPair],
    common_pairs: &[EqualizerWeightPair],
    has_common: bool,
    zero_common: bool,
    noise: f64,
    objective: StepObjective,
    settings: &SolverSettings,
) -> Result<StepOutput> {
    let users = ests.len();
    let n_t = ests[0].antennas();
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
    // Column list per stream kind, as (re, im) variable indices.
    let mut private_cols: Vec<&(Vec<usize>, Vec<usize>)> = private.iter().collect();
    let mut common_cols: Vec<&(Vec<usize>, Vec<usize>)> = Vec::new();
    if let Some(pc) = &common {
        common_cols.push(pc);
        common_cols.append(&mut private_cols.clone());
    }
    let c_vars: Vec<usize> = c.iter().flatten().copied().collect();
    if !c_vars.is_empty() {
        prog.nonneg(c_vars.iter().map(|&v| Affine::var(v)).collect(), "C >= 0");
    }
    let c_sum = c_vars.iter().fold(Affine::default(), |acc, &v| acc.plus(&Affine::var(v)));

    let mut taus: Vec<(usize, usize, StreamKind)> = Vec::new();
    let mut add_stream = |prog: &mut ConicProgram,
                          k: usize,
                          kind: StreamKind,
                          pair: &EqualizerWeightPair,
                          cols: &[&(Vec<usize>, Vec<usize>)],
                          own: usize,
                          rhs: Affine| {
        let tau = prog.add_var(format!("tau[{k}]"));
        let lambda = prog.add_var(format!("lambda[{k}]"));
        taus.push((tau, lambda, kind));
        // (u/ln2)(τ + |g|²σ²) − log₂u − 1/ln2 ≤ −rhs
        let w = pair.u / LN_2;
        let row = rhs
            .scaled(-1.0)
            .plus(&Affine::term(tau, -w))
            .shifted(pair.u.log2() + 1.0 / LN_2 - w * pair.g.norm_sqr() * noise);
        prog.nonneg(vec![row], &format!("{kind:?} rate[{k}]"));
        let h = ests[k].nominal.as_vector();
        let psi_h: Vec<ComplexAffine> = cols
            .iter()
            .enumerate()
            .map(|(i, (re, im))| {
                let mut z = ComplexAffine::zero();
                for n in 0..n_t {
                    z.add_scaled_var(pair.g * h[n].conj(), re[n], im[n]);
                }
                if i == own {
                    z.add_constant(C64::new(-1.0, 0.0));
                }
                z
            })
            .collect();
        let cm: Vec<Vec<ComplexAffine>> = cols
            .iter()
            .map(|(re, im)| {
                (0..n_t)
                    .map(|n| {
                        let mut z = ComplexAffine::zero();
                        z.add_scaled_var(pair.g, re[n], im[n]);
                        z.conj()
                    })
                    .collect()
            })
            .collect();
        robust_lmi(prog, &Affine::var(tau), lambda, &psi_h, &cm, ests[k].radius, &format!("{kind:?} lmi[{k}]"));
    };
    for k in 0..users {
        let mut rhs = rt.clone();
        if let Some(ck) = c[k] {
            rhs.add_term(ck, -1.0);
        }
        add_stream(&mut prog, k, StreamKind::Private, &private_pairs[k], &private_cols, k, rhs);
        if has_common {
            add_stream(&mut prog, k, StreamKind::Common, &common_pairs[k], &common_cols, 0, c_sum.clone());
        }
    }

    let mut all = Vec::new();
    if let Some((re, im)) = &common {
        all.extend(re.iter().chain(im).map(|&v| Affine::var(v)));
    }
    for (re, im) in &private {
        all.extend(re.iter().chain(im).map(|&v| Affine::var(v)));
    }
    let sqrt_power = match objective {
        StepObjective::MaxRate { .. } => {
            prog.soc(Affine::constant(1.0), all, "power");
            None
        }
        StepObjective::MinPower { .. } => {
            let s = prog.add_var("sqrt_power");
            prog.set_objective(s, 1.0);
            prog.soc(Affine::var(s), all, "power");
            Some(s)
        }
    };
    private_cols.clear();

    let sol = prog.solve(settings);
    let x = match (sol.status, sol.x()) {
        (SolveStatus::Optimal, Some(x)) => x,
        _ => return Err(Error::solver(sol.status, "solving the conservative precoder step")),
    };
    let read = |(re, im): &(Vec<usize>, Vec<usize>)| CVector::from_fn(n_t, |n, _| C64::new(x[re[n]], x[im[n]]));
    let cols: Vec<CVector> = private.iter().map(read).collect();
    let precoder = Precoder {
        common: common.as_ref().map_or_else(|| CVector::zeros(n_t), read),
        private: CMatrix::from_columns(&cols),
    };
    let mut private_blocks = Vec::new();
    let mut common_blocks = Vec::new();
    let mut per_user = vec![0usize; 2];
    for &(tau, lambda, kind) in &taus {
        let (slot, k, pair) = match kind {
            StreamKind::Private => (&mut private_blocks, per_user[0], &private_pairs[per_user[0]]),
            StreamKind::Common => (&mut common_blocks, per_user[1], &common_pairs[per_user[1]]),
        };
        let (qc, own) = stream_columns(&precoder, k, kind);
        slot.push(LmiBlock {
            tau: x[tau],
            lambda_slack: x[lambda],
            psi: psi_of(pair.g, &qc, own, ests[k].nominal.as_vector()),
            coupling: coupling_matrix(pair.g, &qc),
            radius: ests[k].radius,
        });
        match kind {
            StreamKind::Private => per_user[0] += 1,
            StreamKind::Common => per_user[1] += 1,
        }
    }
    let rate = rt.eval(x);
    Ok(StepOutput {
        precoder,
        rate,
        common_split: c.iter().map(|v| v.map_or(0.0, |i| x[i].max(0.0))).collect(),
        objective: sqrt_power.map_or(rate, |s| x[s] * x[s]),
        private_blocks,
        common_blocks,
    })
}

/// Fixed-(ĝ, û) precoder update in the caller's units. Returns the rate,
/// the common split and the precoder.
pub fn conservative_precoder_step(
    private_pairs: &[EqualizerWeightPair],
    common_pairs: &[EqualizerWeightPair],
    ests: &[ChannelEstimate],
    power: f64,
    noise_var: f64,
) -> Result<(f64, Vec<f64>, Precoder)> {
    validate(ests, power, noise_var)?;
    if private_pairs.iter().chain(common_pairs).any(|p| !(p.u > 0.0)) {
        return Err(Error::InvalidInput("weights must be positive".into()));
    }
    // Equalizers scale with 1/√P when the precoder is normalized.
    let root = power.sqrt();
    let rescale = |p: &EqualizerWeightPair| EqualizerWeightPair { g: p.g * root, u: p.u };
    let private: Vec<_> = private_pairs.iter().map(rescale).collect();
    let common: Vec<_> = common_pairs.iter().map(rescale).collect();
    let out = precoder_step(
        ests,
        &private,
        &common,
        !common.is_empty(),
        false,
        noise_var / power,
        StepObjective::MaxRate { power },
        &SolverSettings::default(),
    )?;
    Ok((out.rate, out.common_split, out.precoder.scaled(root)))
}

/// Equalizer and weight of every stream for the current precoder.
fn update_pairs(
    p: &Precoder,
    ests: &[ChannelEstimate],
    has_common: bool,
    noise: f64,
    settings: &SolverSettings,
) -> Result<(Vec<EqualizerWeightPair>, Vec<EqualizerWeightPair>)> {
    let users = ests.len();
    let mut jobs: Vec<(usize, StreamKind)> = (0..users).map(|k| (k, StreamKind::Private)).collect();
    if has_common {
        jobs.extend((0..users).map(|k| (k, StreamKind::Common)));
    }
    let results: Vec<Result<(C64, f64, LmiBlock)>> = jobs
        .clone()
        .into_par_iter()
        .map(|(k, kind)| equalizer_with(p, &ests[k], k, kind, noise, settings))
        .collect();
    let mut private = Vec::with_capacity(users);
    let mut common = Vec::new();
    for ((_, kind), r) in jobs.into_iter().zip(results) {
        let (g, eps, _) = r?;
        let pair = EqualizerWeightPair { g, u: 1.0 / eps };
        match kind {
            StreamKind::Private => private.push(pair),
            StreamKind::Common => common.push(pair),
        }
    }
    Ok((private, common))
}

/// Conservative alternating optimization from `p_init`.
///
/// With [`StepObjective::MinPower`] the initial precoder must meet the
/// targets under the conservative bound, otherwise the first step fails.
pub fn conservative_ao(
    ests: &[ChannelEstimate],
    p_init: &Precoder,
    strategy: Strategy,
    objective: StepObjective,
    noise_var: f64,
    tol: &Tolerances,
) -> Result<ConservativeState> {
    let scale = match objective {
        StepObjective::MaxRate { power } => {
            validate(ests, power, noise_var)?;
            power
        }
        StepObjective::MinPower { .. } => {
            validate(ests, 1.0, noise_var)?;
            p_init.total_power().max(f64::MIN_POSITIVE)
        }
    };
    if tol.ao_max_iter == 0 {
        return Err(Error::InvalidInput("AO iteration cap must be positive".into()));
    }
    let noise = noise_var / scale;
    let root = scale.sqrt();
    let mut p = p_init.scaled(1.0 / root);
    if let StepObjective::MaxRate { .. } = objective {
        let tp = p.total_power();
        if tp > 1.0 {
            p = p.scaled(1.0 / tp.sqrt());
        }
    }
    let has_common = strategy.has_common();
    if !has_common {
        p.common.fill(C64::new(0.0, 0.0));
    }
    let looser = SolverSettings {
        tol: tol.conic.tol * 100.0,
        ..tol.conic
    };
    let mut objectives: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut rate = 0.0;
    let mut split = vec![0.0; ests.len()];
    let mut blocks = (Vec::new(), Vec::new());
    while objectives.len() < tol.ao_max_iter {
        let step = update_pairs(&p, ests, has_common, noise, &tol.conic).and_then(|(pp, cp)| {
            let attempt = |s: &SolverSettings| precoder_step(ests, &pp, &cp, has_common, false, noise, objective, s);
            attempt(&tol.conic).or_else(|_| attempt(&looser))
        });
        let step = match step {
            Ok(step) => step,
            Err(e) if objectives.is_empty() => return Err(e),
            Err(e) => {
                log::warn!("conservative AO stopped after {} iterations: {e}", objectives.len());
                break;
            }
        };
        p = step.precoder;
        rate = step.rate;
        split = step.common_split;
        blocks = (step.private_blocks, step.common_blocks);
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
    if !converged {
        log::warn!("conservative AO reached its iteration cap");
    }
    let (private_pairs, common_pairs) = update_pairs(&p, ests, has_common, noise, &tol.conic)?;
    let unscale = |v: Vec<EqualizerWeightPair>| -> Vec<EqualizerWeightPair> {
        v.into_iter()
            .map(|q| EqualizerWeightPair { g: q.g / root, u: q.u })
            .collect()
    };
    Ok(ConservativeState {
        precoder: p.scaled(root),
        alloc: RateAllocation {
            max_min_rate: rate,
            common_split: split,
        },
        private_pairs: unscale(private_pairs),
        common_pairs: unscale(common_pairs),
        private_blocks: blocks.0,
        common_blocks: blocks.1,
        objectives,
        converged,
    })
}

/// Conservative max-min design at power `power`.
pub fn solve_conservative(
    ests: &[ChannelEstimate],
    power: f64,
    noise_var: f64,
    strategy: Strategy,
    tol: &Tolerances,
) -> Result<ConservativeState> {
    validate(ests, power, noise_var)?;
    let p0 = initial_precoder(ests, power, strategy);
    conservative_ao(ests, &p0, strategy, StepObjective::MaxRate { power }, noise_var, tol)
}

pub fn solve_conservative_rs(ests: &[ChannelEstimate], power: f64, noise_var: f64, tol: &Tolerances) -> Result<ConservativeState> {
    solve_conservative(ests, power, noise_var, Strategy::RateSplitting, tol)
}

pub fn solve_conservative_nors(ests: &[ChannelEstimate], power: f64, noise_var: f64, tol: &Tolerances) -> Result<ConservativeState> {
    solve_conservative(ests, power, noise_var, Strategy::NoRateSplitting, tol)
}

/// Upper bounds `(common, private)` on the conservative rates of user `k`,
/// from averaging over an isotropic error of covariance `σ_e² I`.
pub fn conservative_upper_bound(
    p: &Precoder,
    est: &ChannelEstimate,
    k: usize,
    sigma_e_sq: f64,
    noise_var: f64,
) -> Result<(f64, f64)> {
    if !(sigma_e_sq >= 0.0) {
        return Err(Error::InvalidInput("sigma_e_sq must be non-negative".into()));
    }
    if k >= p.users() || p.antennas() != est.antennas() {
        return Err(Error::InvalidInput("precoder does not match the estimate".into()));
    }
    let h = est.nominal.as_vector();
    let avg = |v: &CVector| inner(h, v).norm_sqr() + sigma_e_sq * v.norm_squared();
    let i_hat: f64 = (0..p.users())
        .filter(|&i| i != k)
        .map(|i| avg(&p.private_column(i)))
        .sum::<f64>()
        + noise_var;
    let pk = p.private_column(k);
    let i_hat_c = avg(&pk) + i_hat;
    let gamma_c = inner(h, &p.common).norm_sqr() / (i_hat_c + sigma_e_sq * p.common.norm_squared());
    let gamma = inner(h, &pk).norm_sqr() / (i_hat + sigma_e_sq * pk.norm_squared());
    Ok(((1.0 + gamma_c).log2(), (1.0 + gamma).log2()))
}

/// Default error variance for the bound: `δ²/N_t`.
pub fn default_sigma_e_sq(est: &ChannelEstimate) -> f64 {
    est.radius * est.radius / est.antennas() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel, sample_error_in_ball, trial_rng};
    use crate::linalg::hermitian_eigenvalues;
    use crate::rates::{mmse_equalizers, receive_powers};

    fn instance(seed: u64, users: usize, n_t: usize, radius: f64) -> Vec<ChannelEstimate> {
        let mut rng = trial_rng(seed, 0);
        (0..users)
            .map(|_| ChannelEstimate::new(sample_channel(&mut rng, n_t), radius).unwrap())
            .collect()
    }

    fn mse_at(h: &CVector, g: C64, p: &Precoder, k: usize, kind: StreamKind, noise: f64) -> f64 {
        let (cols, own) = stream_columns(p, k, kind);
        let r = psi_of(g, &cols, own, h);
        r.norm_squared() + g.norm_sqr() * noise
    }

    #[test]
    fn zero_radius_equalizer_is_mmse() {
        let ests = instance(1, 2, 2, 0.0);
        let p = initial_precoder(&ests, 10.0, Strategy::RateSplitting);
        for kind in [StreamKind::Private, StreamKind::Common] {
            let (g, eps) = worst_case_equalizer(&p, &ests[0], 0, kind, 1.0).unwrap();
            let h = ests[0].nominal.as_vector();
            let eq = mmse_equalizers(h, &p, 0, 1.0).unwrap();
            let pw = receive_powers(h, &p, 0, 1.0).unwrap();
            let (g_ref, eps_ref) = match kind {
                StreamKind::Private => (eq.1, pw.interference / pw.total),
                StreamKind::Common => (eq.0, pw.interference_common / pw.total_common),
            };
            assert!((g - g_ref).norm() < 1e-4, "{kind:?}: {g} vs {g_ref}");
            assert!((eps - eps_ref).abs() < 1e-6, "{kind:?}: {eps} vs {eps_ref}");
        }
    }

    #[test]
    fn worst_case_equalizer_dominates_samples() {
        let ests = instance(2, 3, 3, 0.2);
        let p = initial_precoder(&ests, 100.0, Strategy::RateSplitting);
        let mut rng = trial_rng(3, 1);
        for kind in [StreamKind::Private, StreamKind::Common] {
            let (g, eps) = worst_case_equalizer(&p, &ests[1], 1, kind, 1.0).unwrap();
            let h0 = ests[1].nominal.as_vector();
            let nominal = mse_at(h0, g, &p, 1, kind, 1.0);
            assert!(eps >= nominal - 1e-9);
            for _ in 0..1000 {
                let h = h0 + sample_error_in_ball(&mut rng, 0.2, 3).as_vector();
                assert!(mse_at(&h, g, &p, 1, kind, 1.0) <= eps + 1e-7);
            }
            // no better fixed equalizer on a coarse grid around g
            for d in [C64::new(0.01, 0.0), C64::new(0.0, 0.01), C64::new(-0.01, 0.0), C64::new(0.0, -0.01)] {
                let g2 = g * (C64::new(1.0, 0.0) + d);
                let (cols, own) = stream_columns(&p, 1, kind);
                let other = worst_case_residual(&psi_of(g2, &cols, own, h0), &coupling_matrix(g2, &cols), 0.2) + g2.norm_sqr();
                assert!(other >= eps - 1e-6, "{kind:?}: {other} < {eps}");
            }
        }
    }

    #[test]
    fn worst_case_residual_matches_sampling() {
        let mut rng = trial_rng(9, 0);
        let psi = sample_channel(&mut rng, 3).into_vector();
        let cm = CMatrix::from_fn(3, 2, |_, _| sample_channel(&mut rng, 1)[0]);
        let exact = worst_case_residual(&psi, &cm, 0.4);
        let mut best = 0.0_f64;
        for _ in 0..20_000 {
            let e = sample_error_in_ball(&mut rng, 0.4, 2).into_vector();
            best = best.max((&psi + &cm * e).norm_squared());
        }
        assert!(best <= exact + 1e-9 && best >= exact * 0.98, "{best} vs {exact}");
        assert_eq!(worst_case_residual(&psi, &cm, 0.0), psi.norm_squared());
    }

    #[test]
    fn assembled_block_psd_implies_no_sampled_violation() {
        let ests = instance(4, 2, 3, 0.15);
        let p = initial_precoder(&ests, 10.0, Strategy::RateSplitting);
        let (g, eps) = worst_case_equalizer(&p, &ests[0], 0, StreamKind::Private, 1.0).unwrap();
        let (cols, own) = stream_columns(&p, 0, StreamKind::Private);
        let h0 = ests[0].nominal.as_vector();
        let psi = psi_of(g, &cols, own, h0);
        let coupling = coupling_matrix(g, &cols);
        // The smallest eigenvalue is concave in λ, so golden-section search
        // finds the best multiplier for a given τ.
        let best_block = |tau: f64| {
            let min_eig = |lam: f64| {
                let b = LmiBlock { tau, lambda_slack: lam, psi: psi.clone(), coupling: coupling.clone(), radius: 0.15 };
                *hermitian_eigenvalues(&b.assemble()).last().unwrap()
            };
            let (mut a, mut b) = (0.0, 10.0 * tau.max(1.0));
            let r = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..200 {
                let (c, d) = (b - r * (b - a), a + r * (b - a));
                if min_eig(c) < min_eig(d) {
                    a = c;
                } else {
                    b = d;
                }
            }
            let lam = 0.5 * (a + b);
            (LmiBlock { tau, lambda_slack: lam, psi: psi.clone(), coupling: coupling.clone(), radius: 0.15 }, min_eig(lam))
        };
        let worst = eps - g.norm_sqr();
        let (block, min) = best_block(worst + 1e-6);
        assert!(min >= -1e-12, "no certificate above the worst case: {min}");
        let mut rng = trial_rng(4, 2);
        for _ in 0..1000 {
            let e = sample_error_in_ball(&mut rng, 0.15, 3).into_vector();
            assert!((&psi + &coupling * e).norm_squared() <= block.tau + 1e-9);
        }
        let (_, below) = best_block(worst - 1e-4);
        assert!(below < 0.0, "certificate below the worst case: {below}");
    }

    #[test]
    fn single_user_without_uncertainty_matches_mrt() {
        let ests = instance(5, 1, 3, 0.0);
        let power = 10.0;
        let st = solve_conservative_nors(&ests, power, 1.0, &Tolerances::default()).unwrap();
        let expect = (1.0 + power * ests[0].nominal.norm().powi(2)).log2();
        assert!((st.alloc.max_min_rate - expect).abs() < 1e-3, "{} vs {expect}", st.alloc.max_min_rate);
    }

    #[test]
    fn ao_is_monotone_and_power_feasible() {
        let ests = instance(6, 3, 3, 0.15);
        for strategy in [Strategy::RateSplitting, Strategy::NoRateSplitting] {
            let st = solve_conservative(&ests, 100.0, 1.0, strategy, &Tolerances::default()).unwrap();
            for w in st.objectives.windows(2) {
                assert!(w[1] >= w[0] - 1e-6, "{strategy:?}: {} -> {}", w[0], w[1]);
            }
            assert!(st.precoder.total_power() <= 100.0 * (1.0 + 1e-6));
            if !strategy.has_common() {
                assert!(st.common_pairs.is_empty());
                assert_eq!(st.precoder.common_power(), 0.0);
            }
        }
    }

    #[test]
    fn rate_is_a_worst_case_guarantee() {
        let ests = instance(7, 2, 2, 0.1);
        let st = solve_conservative_rs(&ests, 100.0, 1.0, &Tolerances::default()).unwrap();
        let mut rng = trial_rng(7, 5);
        let c_sum: f64 = st.alloc.common_split.iter().sum();
        for k in 0..2 {
            for _ in 0..500 {
                let h = ests[k].nominal.as_vector() + sample_error_in_ball(&mut rng, 0.1, 2).as_vector();
                let r = crate::rates::sinr_and_rates(&h, &st.precoder, k, 1.0).unwrap();
                assert!(r.rate + st.alloc.common_split[k] >= st.alloc.max_min_rate - 1e-6);
                assert!(r.rate_common >= c_sum - 1e-6);
            }
        }
    }

    #[test]
    fn final_blocks_are_psd() {
        let ests = instance(8, 2, 2, 0.1);
        let st = solve_conservative_rs(&ests, 10.0, 1.0, &Tolerances::default()).unwrap();
        assert_eq!(st.private_blocks.len(), 2);
        assert_eq!(st.common_blocks.len(), 2);
        for b in st.private_blocks.iter().chain(&st.common_blocks) {
            let m = b.assemble();
            let min = *hermitian_eigenvalues(&m).last().unwrap();
            let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
            assert!(min >= -1e-8 * scale, "min eigenvalue {min}");
        }
    }

    #[test]
    fn upper_bound_without_error_is_nominal_rate() {
        let ests = instance(10, 2, 2, 0.0);
        let p = initial_precoder(&ests, 10.0, Strategy::RateSplitting);
        let (ubc, ubp) = conservative_upper_bound(&p, &ests[1], 1, 0.0, 1.0).unwrap();
        let r = crate::rates::sinr_and_rates(ests[1].nominal.as_vector(), &p, 1, 1.0).unwrap();
        assert!((ubc - r.rate_common).abs() < 1e-12 && (ubp - r.rate).abs() < 1e-12);
        let (c2, p2) = conservative_upper_bound(&p, &ests[1], 1, 0.01, 1.0).unwrap();
        assert!(c2 < ubc && p2 < ubp);
    }

    #[test]
    fn self_interference_scales_with_precoder_norm() {
        let ests = instance(11, 2, 2, 0.0);
        let p = initial_precoder(&ests, 10.0, Strategy::RateSplitting);
        let h = ests[0].nominal.as_vector();
        let pk = p.private_column(0);
        let s2 = 0.03;
        let (_, ub) = conservative_upper_bound(&p, &ests[0], 0, s2, 1.0).unwrap();
        let gamma = (2f64.powf(ub)) - 1.0;
        let i_hat = inner(h, &p.private_column(1)).norm_sqr() + s2 * p.private_column(1).norm_squared() + 1.0;
        let self_int = inner(h, &pk).norm_sqr() / gamma - i_hat;
        assert!((self_int - s2 * pk.norm_squared()).abs() < 1e-9);
    }

    #[test]
    fn sphere_error_covariance_is_isotropic() {
        // The bound's averaging distribution: uniform on the sphere of radius δ.
        let mut rng = trial_rng(12, 0);
        let (n_t, delta, n) = (3, 0.3, 40_000);
        let mut cov = CMatrix::zeros(n_t, n_t);
        for _ in 0..n {
            let e = sample_channel(&mut rng, n_t).into_vector();
            let e = &e * C64::new(delta / e.norm(), 0.0);
            cov += &e * e.adjoint();
        }
        cov /= C64::new(n as f64, 0.0);
        let target = delta * delta / n_t as f64;
        for i in 0..n_t {
            for j in 0..n_t {
                let want = if i == j { target } else { 0.0 };
                assert!((cov[(i, j)] - want).norm() < 0.05 * target);
            }
        }
    }

    #[test]
    fn bound_dominates_achieved_private_rates() {
        for seed in 0..3 {
            let ests = instance(20 + seed, 2, 2, 0.15);
            let st = solve_conservative_nors(&ests, 100.0, 1.0, &Tolerances::default()).unwrap();
            for k in 0..2 {
                let (_, ub) = conservative_upper_bound(&st.precoder, &ests[k], k, default_sigma_e_sq(&ests[k]), 1.0).unwrap();
                assert!(ub >= st.alloc.max_min_rate - 1e-6, "seed {seed} user {k}: {ub} < {}", st.alloc.max_min_rate);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let ests = instance(13, 2, 2, 0.1);
        let p = initial_precoder(&ests, 1.0, Strategy::RateSplitting);
        assert!(conservative_upper_bound(&p, &ests[0], 0, -1.0, 1.0).is_err());
        assert!(conservative_upper_bound(&p, &ests[0], 5, 0.0, 1.0).is_err());
        let bad = vec![EqualizerWeightPair { g: C64::new(1.0, 0.0), u: 0.0 }; 2];
        assert!(conservative_precoder_step(&bad, &[], &ests, 1.0, 1.0).is_err());
    }
}
