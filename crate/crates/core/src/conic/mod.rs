//! Backend-neutral description of linear-objective conic programs.
//!
//! Every constraint is a list of affine expressions `a·x + b` whose values
//! must lie in a cone. Positive-semidefinite constraints list all `n²`
//! entries of a symmetric matrix in column-major order.

mod backend;
mod embed;

use std::fmt;

use nalgebra::DMatrix;

pub use embed::hermitian_embed;

use crate::linalg::C64;

/// `Σ coeff·x[var] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Self::term(i, 1.0)
    }

    pub fn term(i: usize, c: f64) -> Self {
        Self {
            terms: vec![(i, c)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, i: usize, c: f64) -> &mut Self {
        if c != 0.0 {
            self.terms.push((i, c));
        }
        self
    }

    pub fn plus(mut self, other: &Affine) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn shifted(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }

    fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }
}

/// A complex scalar affine in the real decision variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComplexAffine {
    pub re: Affine,
    pub im: Affine,
}

impl ComplexAffine {
    pub fn constant(z: C64) -> Self {
        Self {
            re: Affine::constant(z.re),
            im: Affine::constant(z.im),
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Adds `w·(x[re_var] + j·x[im_var])`.
    pub fn add_scaled_var(&mut self, w: C64, re_var: usize, im_var: usize) -> &mut Self {
        self.re.add_term(re_var, w.re);
        self.re.add_term(im_var, -w.im);
        self.im.add_term(re_var, w.im);
        self.im.add_term(im_var, w.re);
        self
    }

    pub fn add_constant(&mut self, z: C64) -> &mut Self {
        self.re.constant += z.re;
        self.im.constant += z.im;
        self
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: self.im.clone().scaled(-1.0),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            re: self.re.clone().scaled(s),
            im: self.im.clone().scaled(s),
        }
    }

    pub fn eval(&self, x: &[f64]) -> C64 {
        C64::new(self.re.eval(x), self.im.eval(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Zero,
    Nonnegative,
    /// `(t, v)` with `‖v‖ ≤ t`.
    SecondOrder,
    /// Side length of a symmetric PSD matrix.
    Psd(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeConstraint {
    pub kind: ConeKind,
    pub rows: Vec<Affine>,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Present iff `status == Optimal`.
    pub primal: Option<Vec<f64>>,
    pub objective_value: f64,
    /// The backend stopped at relaxed tolerances.
    pub reduced_accuracy: bool,
}

impl ConicSolution {
    pub fn x(&self) -> Option<&[f64]> {
        self.primal.as_deref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Minimize `cᵀx` subject to cone memberships.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    num_vars: usize,
    names: Vec<String>,
    objective: Vec<f64>,
    constraints: Vec<ConeConstraint>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.objective.push(0.0);
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, prefix: &str, count: usize) -> Vec<usize> {
        (0..count)
            .map(|i| self.add_var(format!("{prefix}[{i}]")))
            .collect()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[ConeConstraint] {
        &self.constraints
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    fn push(&mut self, kind: ConeKind, rows: Vec<Affine>, label: &str) {
        for r in &rows {
            if let Some(m) = r.max_index() {
                assert!(m < self.num_vars, "constraint `{label}` references undeclared variable {m}");
            }
        }
        match kind {
            ConeKind::SecondOrder => assert!(rows.len() >= 2, "SOC needs dimension ≥ 2"),
            ConeKind::Psd(n) => assert_eq!(rows.len(), n * n, "PSD rows must be n²"),
            _ => {}
        }
        self.constraints.push(ConeConstraint {
            kind,
            rows,
            label: label.to_string(),
        });
    }

    pub fn equal(&mut self, rows: Vec<Affine>, label: &str) {
        self.push(ConeKind::Zero, rows, label);
    }

    pub fn nonneg(&mut self, rows: Vec<Affine>, label: &str) {
        self.push(ConeKind::Nonnegative, rows, label);
    }

    /// `‖rest‖ ≤ t`.
    pub fn soc(&mut self, t: Affine, rest: Vec<Affine>, label: &str) {
        let mut rows = Vec::with_capacity(rest.len() + 1);
        rows.push(t);
        rows.extend(rest);
        self.push(ConeKind::SecondOrder, rows, label);
    }

    /// `‖v‖² ≤ a·b` with `a, b ≥ 0`, as `‖(2v, a − b)‖ ≤ a + b`.
    pub fn rotated_soc(&mut self, a: Affine, b: Affine, v: Vec<Affine>, label: &str) {
        let t = a.clone().plus(&b);
        let d = a.plus(&b.scaled(-1.0));
        let mut rest: Vec<Affine> = v.into_iter().map(|r| r.scaled(2.0)).collect();
        rest.push(d);
        self.soc(t, rest, label);
    }

    /// Symmetric `n×n` matrix (column-major entries) is PSD.
    pub fn psd(&mut self, n: usize, entries: Vec<Affine>, label: &str) {
        self.push(ConeKind::Psd(n), entries, label);
    }

    /// Complex Hermitian `n×n` matrix (column-major) is PSD, imposed on its
    /// real `2n×2n` embedding. Only the upper triangle of `entries` is read.
    pub fn hermitian_psd(&mut self, n: usize, entries: &[ComplexAffine], label: &str) {
        assert_eq!(entries.len(), n * n);
        let at = |i: usize, j: usize| -> ComplexAffine {
            if i <= j {
                entries[i + j * n].clone()
            } else {
                entries[j + i * n].conj()
            }
        };
        let m = 2 * n;
        let mut rows = vec![Affine::default(); m * m];
        for j in 0..n {
            for i in 0..n {
                let z = at(i, j);
                rows[i + j * m] = z.re.clone();
                rows[(i + n) + (j + n) * m] = z.re.clone();
                rows[(i + n) + j * m] = z.im.clone();
                rows[i + (j + n) * m] = z.im.clone().scaled(-1.0);
            }
        }
        self.psd(m, rows, label);
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest cone-membership residual of `x` over all constraints.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| constraint_violation(c, x))
            .fold(0.0, f64::max)
    }

    pub fn solve(&self, settings: &SolverSettings) -> ConicSolution {
        backend::solve(self, settings)
    }
}

pub(crate) fn constraint_violation(c: &ConeConstraint, x: &[f64]) -> f64 {
    let v: Vec<f64> = c.rows.iter().map(|r| r.eval(x)).collect();
    match c.kind {
        ConeKind::Zero => v.iter().fold(0.0, |m, a| m.max(a.abs())),
        ConeKind::Nonnegative => v.iter().fold(0.0, |m, &a| m.max(-a)),
        ConeKind::SecondOrder => {
            let tail = v[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
            (tail - v[0]).max(0.0)
        }
        ConeKind::Psd(n) => {
            let m = DMatrix::from_column_slice(n, n, &v);
            let sym = (&m + m.transpose()) * 0.5;
            let min = sym.symmetric_eigenvalues().min();
            (-min).max(0.0)
        }
    }
}

impl fmt::Display for ConicProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "variables {}", self.num_vars)?;
        for (i, n) in self.names.iter().enumerate() {
            writeln!(f, "  x{i} {n}")?;
        }
        write!(f, "minimize")?;
        let mut any = false;
        for (i, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                write!(f, " {c:+.6e}*x{i}")?;
                any = true;
            }
        }
        if !any {
            write!(f, " 0")?;
        }
        writeln!(f)?;
        for c in &self.constraints {
            let kind = match c.kind {
                ConeKind::Zero => "zero".to_string(),
                ConeKind::Nonnegative => "nonneg".to_string(),
                ConeKind::SecondOrder => "soc".to_string(),
                ConeKind::Psd(n) => format!("psd {n}"),
            };
            writeln!(f, "{kind} {} [{}]", c.label, c.rows.len())?;
            for r in &c.rows {
                write!(f, "  {:+.6e}", r.constant)?;
                let mut terms = r.terms.clone();
                terms.sort_by_key(|t| t.0);
                for (i, v) in terms {
                    write!(f, " {v:+.6e}*x{i}")?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(p: &ConicProgram) -> ConicSolution {
        p.solve(&SolverSettings::default())
    }

    #[test]
    fn scalar_lower_bound() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x");
        p.set_objective(x, 1.0);
        p.nonneg(vec![Affine::var(x).shifted(-3.0)], "x >= 3");
        let s = solve(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x().unwrap()[0] - 3.0).abs() < 1e-7);
    }

    #[test]
    fn soc_norm() {
        let mut p = ConicProgram::new();
        let t = p.add_var("t");
        p.set_objective(t, 1.0);
        p.soc(Affine::var(t), vec![Affine::constant(1.0), Affine::constant(2.0)], "norm");
        let s = solve(&p);
        assert!((s.objective_value - 5f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn psd_trace() {
        let mut p = ConicProgram::new();
        let v = p.add_vars("X", 3);
        p.set_objective(v[0], 1.0);
        p.set_objective(v[2], 1.0);
        let e = vec![
            Affine::var(v[0]).shifted(-1.0),
            Affine::var(v[1]),
            Affine::var(v[1]),
            Affine::var(v[2]).shifted(-1.0),
        ];
        p.psd(2, e, "X >= I");
        let s = solve(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective_value - 2.0).abs() < 1e-7);
    }

    #[test]
    fn rotated_cone_bounds_square() {
        // min t s.t. 3² ≤ t·1
        let mut p = ConicProgram::new();
        let t = p.add_var("t");
        p.set_objective(t, 1.0);
        p.rotated_soc(Affine::var(t), Affine::constant(1.0), vec![Affine::constant(3.0)], "sq");
        let s = solve(&p);
        assert!((s.objective_value - 9.0).abs() < 1e-6);
    }

    #[test]
    fn hermitian_lmi_matches_complex_eigenvalue() {
        // max s s.t. [[1, j],[−j, 1]] − s I ⪰ 0 → s = 0
        let mut p = ConicProgram::new();
        let s = p.add_var("s");
        p.set_objective(s, -1.0);
        let one_minus_s = ComplexAffine {
            re: Affine::constant(1.0).plus(&Affine::term(s, -1.0)),
            im: Affine::default(),
        };
        let entries = vec![
            one_minus_s.clone(),
            ComplexAffine::constant(C64::new(0.0, -1.0)),
            ComplexAffine::constant(C64::new(0.0, 1.0)),
            one_minus_s,
        ];
        p.hermitian_psd(2, &entries, "lmi");
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.x().unwrap()[0].abs() < 1e-6);
    }

    #[test]
    fn infeasible_and_unbounded_are_reported() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x");
        p.nonneg(vec![Affine::var(x).shifted(-1.0), Affine::term(x, -1.0)], "x>=1, x<=0");
        let s = solve(&p);
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.primal.is_none());

        let mut p = ConicProgram::new();
        let x = p.add_var("x");
        p.set_objective(x, -1.0);
        p.nonneg(vec![Affine::var(x)], "x>=0");
        assert_eq!(solve(&p).status, SolveStatus::Unbounded);
    }

    #[test]
    fn handmade_feasible_points_have_no_residual() {
        let mut p = ConicProgram::new();
        let v = p.add_vars("x", 3);
        p.equal(vec![Affine::var(v[0]).shifted(-1.0)], "eq");
        p.nonneg(vec![Affine::var(v[1])], "nn");
        p.soc(Affine::var(v[2]), vec![Affine::var(v[0]), Affine::var(v[1])], "soc");
        p.psd(
            2,
            vec![Affine::var(v[2]), Affine::var(v[0]), Affine::var(v[0]), Affine::var(v[2])],
            "psd",
        );
        assert_eq!(p.max_violation(&[1.0, 0.5, 1.2]), 0.0);
        assert!(p.max_violation(&[1.0, 0.5, 1.0]) > 0.1);
        assert!(p.max_violation(&[1.1, 0.5, 2.0]) > 0.09);
    }

    #[test]
    fn solutions_respect_cones_and_repeat_exactly() {
        let mut p = ConicProgram::new();
        let v = p.add_vars("x", 2);
        p.set_objective(v[0], 1.0);
        p.set_objective(v[1], 2.0);
        p.soc(Affine::var(v[0]), vec![Affine::constant(1.0), Affine::var(v[1]).shifted(-0.3)], "c");
        p.nonneg(vec![Affine::var(v[1])], "pos");
        let a = solve(&p);
        let b = solve(&p);
        assert_eq!(a, b);
        assert!(p.max_violation(a.x().unwrap()) < 1e-7);
    }

    #[test]
    fn dump_lists_everything() {
        let mut p = ConicProgram::new();
        let x = p.add_var("rate");
        p.set_objective(x, -1.0);
        p.nonneg(vec![Affine::var(x).shifted(2.0)], "floor");
        let text = p.to_string();
        let expected = "variables 1\n  x0 rate\nminimize -1.000000e0*x0\nnonneg floor [1]\n  +2.000000e0 +1.000000e0*x0\n";
        assert_eq!(text, expected);
    }
}
