//! Worst-case MMSE over an uncertainty ball.
//!
//! The MMSE `I(h)/T(h)` is a ratio of quadratics in `h`. Dinkelbach's
//! method turns its maximization over the ball into a sequence of
//! trust-region problems `max hᴴA h + c`, each solved through its
//! semidefinite relaxation, which is exact for a single ball constraint.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelEstimate, ChannelVector};
use crate::conic::{Affine, ComplexAffine, ConicProgram, SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::linalg::{ensure_hermitian, hermitian_eigenvalues, outer, quad_form, CMatrix, CVector, C64};
use crate::rates::{receive_powers_unchecked, Precoder};

/// Which decoded stream of user `k` is being pessimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamKind {
    Private,
    Common,
}

/// `Q_k = p_k p_kᴴ`, `Q_c = p_c p_cᴴ`, `Q_p = Σ Q_i`, `Q̄_k = Q_p − Q_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFormSet {
    pub q_k: CMatrix,
    pub q_c: CMatrix,
    pub q_p: CMatrix,
    pub q_bar: CMatrix,
}

impl QuadraticFormSet {
    pub fn new(p: &Precoder, k: usize) -> Self {
        let q_k = outer(&p.private_column(k));
        let q_c = outer(&p.common);
        let q_p = &p.private * p.private.adjoint();
        let q_bar = &q_p - &q_k;
        Self { q_k, q_c, q_p, q_bar }
    }

    /// `(A(λ), offset(λ))` with `I − λT = hᴴA h + offset`.
    pub fn parametric(&self, kind: StreamKind, lambda: f64, noise_var: f64) -> (CMatrix, f64) {
        let (num, extra) = match kind {
            StreamKind::Private => (&self.q_bar, &self.q_k),
            StreamKind::Common => (&self.q_p, &self.q_c),
        };
        let a = num * C64::new(1.0 - lambda, 0.0) - extra * C64::new(lambda, 0.0);
        (a, (1.0 - lambda) * noise_var)
    }
}

/// `hᴴ A h + offset`.
pub fn parametric_objective(a: &CMatrix, h: &ChannelVector, offset: f64) -> Result<f64> {
    ensure_hermitian(a, 1e-10)?;
    if a.nrows() != h.len() {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    Ok(quad_form(a, h) + offset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionSolution {
    pub h: ChannelVector,
    /// Optimal value of the relaxation.
    pub value: f64,
    /// `λ₂(X)/λ₁(X)` of the relaxation's matrix variable.
    pub eig_ratio: f64,
    /// The relaxation came back rank-deficient and `h` was recovered by a
    /// rank-one completion on its optimal face.
    pub purified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PessimizerOptions {
    /// Stop once `D(λ) ≤ eps_d·λ`, i.e. the worst MMSE exceeds `λ` by at
    /// most a relative `eps_d`.
    pub eps_d: f64,
    pub m_max: usize,
    pub rank_tol: f64,
    /// Recover a rank-one maximizer instead of failing the rank check.
    pub purify: bool,
    pub conic: SolverSettings,
}

impl Default for PessimizerOptions {
    fn default() -> Self {
        Self {
            eps_d: 1e-7,
            m_max: 25,
            rank_tol: 1e-5,
            purify: true,
            conic: SolverSettings {
                tol: 1e-10,
                ..SolverSettings::default()
            },
        }
    }
}

/// Maximize `hᴴA h + offset` over `‖h − ĥ‖ ≤ δ`.
pub fn solve_trust_region(
    a: &CMatrix,
    est: &ChannelEstimate,
    offset: f64,
    opts: &PessimizerOptions,
) -> Result<TrustRegionSolution> {
    ensure_hermitian(a, 1e-10)?;
    let n = est.antennas();
    if a.nrows() != n {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let nominal = est.nominal.as_vector();
    if est.radius == 0.0 {
        return Ok(TrustRegionSolution {
            h: est.nominal.clone(),
            value: quad_form(a, nominal) + offset,
            eig_ratio: 0.0,
            purified: false,
        });
    }

    // Centered and scaled: h = ĥ + δz, X = ĥĥᴴ + δ(ĥzᴴ + zĥᴴ) + δ²Z, so
    // the relaxation reads max δ² tr(AZ) + 2δ Re((Aĥ)ᴴz) over tr Z ≤ 1,
    // [[Z, z], [zᴴ, 1]] ⪰ 0.
    let delta = est.radius;
    let b = a * nominal;
    let base = quad_form(a, nominal) + offset;
    let mut prog = ConicProgram::new();
    let mut zr = vec![vec![usize::MAX; n]; n];
    let mut zi = vec![vec![usize::MAX; n]; n];
    for j in 0..n {
        for i in 0..=j {
            zr[i][j] = prog.add_var(format!("Zr[{i},{j}]"));
            if i < j {
                zi[i][j] = prog.add_var(format!("Zi[{i},{j}]"));
            }
        }
    }
    let vr = prog.add_vars("zr", n);
    let vi = prog.add_vars("zi", n);

    let d2 = delta * delta;
    for j in 0..n {
        for i in 0..=j {
            let w = a[(i, j)];
            if i == j {
                prog.set_objective(zr[i][i], -d2 * w.re);
            } else {
                prog.set_objective(zr[i][j], -2.0 * d2 * w.re);
                prog.set_objective(zi[i][j], -2.0 * d2 * w.im);
            }
        }
        prog.set_objective(vr[j], -2.0 * delta * b[j].re);
        prog.set_objective(vi[j], -2.0 * delta * b[j].im);
    }

    let mut ball = Affine::constant(1.0);
    for i in 0..n {
        ball.add_term(zr[i][i], -1.0);
    }
    prog.nonneg(vec![ball], "tr Z <= 1");

    let m = n + 1;
    let mut lmi = vec![ComplexAffine::zero(); m * m];
    for j in 0..n {
        for i in 0..=j {
            lmi[i + j * m] = ComplexAffine {
                re: Affine::var(zr[i][j]),
                im: if i < j { Affine::var(zi[i][j]) } else { Affine::default() },
            };
        }
    }
    for i in 0..n {
        lmi[i + n * m] = ComplexAffine {
            re: Affine::var(vr[i]),
            im: Affine::var(vi[i]),
        };
    }
    lmi[n + n * m] = ComplexAffine::constant(C64::new(1.0, 0.0));
    prog.hermitian_psd(m, &lmi, "[[Z, z], [zᴴ, 1]]");

    let sol = prog.solve(&opts.conic);
    let x = match (sol.status, sol.x()) {
        (SolveStatus::Optimal, Some(x)) => x,
        _ => return Err(Error::solver(sol.status, "solving the trust-region relaxation")),
    };
    let mut z = CVector::from_fn(n, |i, _| C64::new(x[vr[i]], x[vi[i]]));
    let zn = z.norm();
    if zn > 1.0 {
        // Pull interior-point slack back onto the sphere.
        z /= C64::new(zn, 0.0);
    }
    let zm = CMatrix::from_fn(n, n, |i, j| {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let im = if r < c { x[zi[r][c]] } else { 0.0 };
        let v = C64::new(x[zr[r][c]], im);
        if i <= j {
            v
        } else {
            v.conj()
        }
    });
    let cross = nominal * z.adjoint();
    let xm = nominal * nominal.adjoint() + (&cross + cross.adjoint()) * C64::new(delta, 0.0) + &zm * C64::new(d2, 0.0);
    let ev = hermitian_eigenvalues(&xm);
    let eig_ratio = if ev[0] > 0.0 && n > 1 { ev[1].max(0.0) / ev[0] } else { 0.0 };
    let value = base - sol.objective_value;
    let mut purified = false;
    if eig_ratio > opts.rank_tol {
        let a_s = a * C64::new(d2, 0.0);
        let b_s = &b * C64::new(delta, 0.0);
        let residual = &zm - &z * z.adjoint();
        let target = -sol.objective_value;
        match complete_rank_one(&a_s, &b_s, &z, &residual, target, opts.eps_d) {
            Some(zc) if opts.purify => {
                z = zc;
                purified = true;
            }
            _ => return Err(Error::RankDeficient { ratio: eig_ratio }),
        }
    }
    let h = nominal + z * C64::new(delta, 0.0);
    Ok(TrustRegionSolution {
        h: ChannelVector::from(h),
        value,
        eig_ratio,
        purified,
    })
}

/// Rank-one point on the optimal face of the relaxation.
///
/// When the optimum is (nearly) degenerate in phase, the interior-point
/// solution is a mixture `Z = zzᴴ + R`. Moving `z` along the leading
/// eigenvector of `R` to the unit sphere, with the best phase, recovers a
/// rank-one maximizer. Accepted only if it attains `target` within `tol`.
fn complete_rank_one(a: &CMatrix, b: &CVector, z: &CVector, residual: &CMatrix, target: f64, tol: f64) -> Option<CVector> {
    let sym = (residual + residual.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let (idx, _) = eig.eigenvalues.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1))?;
    let u = eig.eigenvectors.column(idx).into_owned();
    let f = |v: &CVector| quad_form(a, v) + 2.0 * crate::linalg::inner(b, v).re;
    // |z + t e^{jθ} u| = 1 solved for t ≥ 0 at each phase.
    let along = |theta: f64| -> Option<CVector> {
        let w = u.clone() * C64::from_polar(1.0, theta);
        let p = crate::linalg::inner(&w, z).re;
        let c = z.norm_squared() - 1.0;
        let disc = p * p - c;
        if disc < 0.0 {
            return None;
        }
        let t = -p + disc.sqrt();
        Some(z + w * C64::new(t, 0.0))
    };
    let mut best: Option<(f64, f64)> = None;
    let steps = 720;
    for i in 0..steps {
        let theta = std::f64::consts::TAU * i as f64 / steps as f64;
        if let Some(v) = along(theta) {
            let val = f(&v);
            if best.is_none_or(|(_, bv)| val > bv) {
                best = Some((theta, val));
            }
        }
    }
    let (mut theta, mut val) = best?;
    // Golden-section refinement of the phase.
    let (mut lo, mut hi) = (theta - std::f64::consts::TAU / steps as f64, theta + std::f64::consts::TAU / steps as f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        let v1 = along(m1).map_or(f64::NEG_INFINITY, |v| f(&v));
        let v2 = along(m2).map_or(f64::NEG_INFINITY, |v| f(&v));
        if v1 >= v2 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mid = 0.5 * (lo + hi);
    if let Some(v) = along(mid) {
        let fv = f(&v);
        if fv > val {
            theta = mid;
            val = fv;
        }
    }
    let scale = target.abs().max(a.norm()).max(1.0);
    (val >= target - tol * scale).then(|| along(theta)).flatten()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseResult {
    pub violated: bool,
    pub worst_channel: Option<ChannelVector>,
    pub worst_mmse: f64,
    pub iterations: usize,
    /// False when `m_max` was hit before `D ≤ eps_D`.
    pub converged: bool,
    pub lambdas: Vec<f64>,
    pub max_eig_ratio: f64,
    /// Subproblems that needed the rank-one completion.
    pub purified: usize,
}

/// MMSE of stream `kind` of user `k` at channel `h`.
pub fn stream_mmse(h: &CVector, p: &Precoder, k: usize, kind: StreamKind, noise_var: f64) -> f64 {
    let pw = receive_powers_unchecked(h, p, k, noise_var);
    match kind {
        StreamKind::Private => pw.interference / pw.total,
        StreamKind::Common => pw.interference_common / pw.total_common,
    }
}

fn check(p: &Precoder, k: usize, est: &ChannelEstimate) -> Result<()> {
    if k >= p.users() || est.antennas() != p.antennas() {
        return Err(Error::InvalidInput("pessimizer dimensions disagree".into()));
    }
    Ok(())
}

/// Decides whether `max_{h∈ball} ε(h) ≤ threshold`; on violation, returns
/// the maximizing channel.
pub fn dinkelbach_worst_case(
    p: &Precoder,
    k: usize,
    kind: StreamKind,
    threshold: f64,
    est: &ChannelEstimate,
    noise_var: f64,
    opts: &PessimizerOptions,
) -> Result<WorstCaseResult> {
    check(p, k, est)?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidInput(format!("threshold {threshold} outside (0, 1]")));
    }
    run(p, k, kind, threshold, None, est, noise_var, opts)
}

/// Full worst-case MMSE over the ball, started from the nominal channel.
pub fn worst_case_mmse(
    p: &Precoder,
    k: usize,
    kind: StreamKind,
    est: &ChannelEstimate,
    noise_var: f64,
    opts: &PessimizerOptions,
) -> Result<WorstCaseResult> {
    check(p, k, est)?;
    let start = stream_mmse(est.nominal.as_vector(), p, k, kind, noise_var);
    let mut r = run(p, k, kind, start, Some(est.nominal.clone()), est, noise_var, opts)?;
    if r.worst_channel.is_none() {
        r.worst_channel = Some(est.nominal.clone());
    }
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
fn run(
    p: &Precoder,
    k: usize,
    kind: StreamKind,
    threshold: f64,
    start: Option<ChannelVector>,
    est: &ChannelEstimate,
    noise_var: f64,
    opts: &PessimizerOptions,
) -> Result<WorstCaseResult> {
    let forms = QuadraticFormSet::new(p, k);
    let nominal = est.nominal.as_vector();
    let pw = receive_powers_unchecked(nominal, p, k, noise_var);
    let scale = match kind {
        StreamKind::Private => pw.total,
        StreamKind::Common => pw.total_common,
    };
    let inv = C64::new(1.0 / scale, 0.0);

    let mut lambda = threshold;
    let mut lambdas = vec![lambda];
    let mut worst = start;
    let mut max_ratio = 0.0_f64;
    let mut purified = 0;
    let mut violated = false;
    for m in 1..=opts.m_max {
        let (a, offset) = forms.parametric(kind, lambda, noise_var);
        let tr = solve_trust_region(&(a * inv), est, offset / scale, opts)?;
        max_ratio = max_ratio.max(tr.eig_ratio);
        purified += usize::from(tr.purified);
        if tr.value <= opts.eps_d * lambda {
            return Ok(WorstCaseResult {
                violated,
                worst_channel: worst,
                worst_mmse: lambda,
                iterations: m,
                converged: true,
                lambdas,
                max_eig_ratio: max_ratio,
                purified,
            });
        }
        let next = stream_mmse(&tr.h, p, k, kind, noise_var);
        if next <= lambda {
            // The relaxation value is above eps_D only through solver noise.
            return Ok(WorstCaseResult {
                violated,
                worst_channel: worst,
                worst_mmse: lambda,
                iterations: m,
                converged: true,
                lambdas,
                max_eig_ratio: max_ratio,
                purified,
            });
        }
        violated = true;
        lambda = next;
        lambdas.push(lambda);
        worst = Some(tr.h);
    }
    log::warn!("Dinkelbach hit m_max = {} for user {k} ({kind:?})", opts.m_max);
    Ok(WorstCaseResult {
        violated,
        worst_channel: worst,
        worst_mmse: lambda,
        iterations: opts.m_max,
        converged: false,
        lambdas,
        max_eig_ratio: max_ratio,
        purified,
    })
}

/// `D(λ)` normalized by the receive power at the nominal channel.
pub fn dinkelbach_value(
    p: &Precoder,
    k: usize,
    kind: StreamKind,
    lambda: f64,
    est: &ChannelEstimate,
    noise_var: f64,
    opts: &PessimizerOptions,
) -> Result<f64> {
    check(p, k, est)?;
    let forms = QuadraticFormSet::new(p, k);
    let pw = receive_powers_unchecked(est.nominal.as_vector(), p, k, noise_var);
    let scale = match kind {
        StreamKind::Private => pw.total,
        StreamKind::Common => pw.total_common,
    };
    let (a, offset) = forms.parametric(kind, lambda, noise_var);
    Ok(solve_trust_region(&(a * C64::new(1.0 / scale, 0.0)), est, offset / scale, opts)?.value)
}
