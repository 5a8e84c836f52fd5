//! Clarabel backend. Clarabel takes `s = b − A x ∈ K`, so a row `a·x + c`
//! becomes `A = −a`, `b = c`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{Affine, ConeKind, ConicProgram, ConicSolution, SolveStatus, SolverSettings};

struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn push(&mut self, row: &Affine, scale: f64) {
        let r = self.b.len();
        for &(var, c) in &row.terms {
            self.i.push(r);
            self.j.push(var);
            self.v.push(-c * scale);
        }
        self.b.push(row.constant * scale);
    }

    fn push_average(&mut self, a: &Affine, b: &Affine, scale: f64) {
        let r = self.b.len();
        for &(var, c) in a.terms.iter().chain(&b.terms) {
            self.i.push(r);
            self.j.push(var);
            self.v.push(-0.5 * c * scale);
        }
        self.b.push(0.5 * (a.constant + b.constant) * scale);
    }
}

extern "C" {
    fn openblas_set_num_threads(n: i32);
}

static BLAS_INIT: std::sync::Once = std::sync::Once::new();

/// Keeps the dense kernels single-threaded: the problems are small, callers
/// parallelize across subproblems, and results stay bit-reproducible.
fn init_blas() {
    BLAS_INIT.call_once(|| unsafe { openblas_set_num_threads(1) });
}

pub(super) fn solve(prog: &ConicProgram, settings: &SolverSettings) -> ConicSolution {
    init_blas();
    let n = prog.num_vars();
    let mut rows = Rows {
        i: Vec::new(),
        j: Vec::new(),
        v: Vec::new(),
        b: Vec::new(),
    };
    let mut cones: Vec<SupportedConeT<f64>> = Vec::with_capacity(prog.constraints().len());
    for c in prog.constraints() {
        match c.kind {
            ConeKind::Zero | ConeKind::Nonnegative | ConeKind::SecondOrder => {
                for r in &c.rows {
                    rows.push(r, 1.0);
                }
                cones.push(match c.kind {
                    ConeKind::Zero => SupportedConeT::ZeroConeT(c.rows.len()),
                    ConeKind::Nonnegative => SupportedConeT::NonnegativeConeT(c.rows.len()),
                    _ => SupportedConeT::SecondOrderConeT(c.rows.len()),
                });
            }
            ConeKind::Psd(side) => {
                for j in 0..side {
                    for i in 0..=j {
                        if i == j {
                            rows.push(&c.rows[i + j * side], 1.0);
                        } else {
                            rows.push_average(&c.rows[i + j * side], &c.rows[j + i * side], std::f64::consts::SQRT_2);
                        }
                    }
                }
                cones.push(SupportedConeT::PSDTriangleConeT(side));
            }
        }
    }
    let m = rows.b.len();
    let a = CscMatrix::new_from_triplets(m, n, rows.i, rows.j, rows.v);
    let p = CscMatrix::<f64>::zeros((n, n));
    let q = prog.objective().to_vec();

    let built = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iter)
        .tol_gap_abs(settings.tol)
        .tol_gap_rel(settings.tol)
        .tol_feas(settings.tol)
        .max_threads(1)
        .build();
    let failure = ConicSolution {
        status: SolveStatus::NumericalFailure,
        primal: None,
        objective_value: f64::NAN,
        reduced_accuracy: false,
    };
    let Ok(cfg) = built else {
        return failure;
    };
    let Ok(mut solver) = DefaultSolver::new(&p, &q, &a, &rows.b, &cones, cfg) else {
        return failure;
    };
    solver.solve();
    let sol = &solver.solution;
    let (status, reduced) = match sol.status {
        SolverStatus::Solved => (SolveStatus::Optimal, false),
        SolverStatus::AlmostSolved => (SolveStatus::Optimal, true),
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => (SolveStatus::Infeasible, false),
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => (SolveStatus::Unbounded, false),
        SolverStatus::InsufficientProgress | SolverStatus::MaxIterations
            if solver.info.gap_rel <= 1e-6
                && sol.x.iter().all(|v| v.is_finite())
                && prog.max_violation(&sol.x) <= 10.0 * settings.tol =>
        {
            // Stalled near the optimum; the iterate passes our own cone check.
            (SolveStatus::Optimal, true)
        }
        _ => (SolveStatus::NumericalFailure, false),
    };
    if status != SolveStatus::Optimal || sol.x.iter().any(|v| !v.is_finite()) {
        return ConicSolution {
            status: if status == SolveStatus::Optimal {
                SolveStatus::NumericalFailure
            } else {
                status
            },
            ..failure
        };
    }
    ConicSolution {
        status,
        objective_value: prog.objective_at(&sol.x),
        primal: Some(sol.x.clone()),
        reduced_accuracy: reduced,
    }
}
