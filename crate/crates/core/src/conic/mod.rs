//! Modeling layer and solver contract for the convex subproblems: semidefinite
//! programs with convex quadratic objectives, complex Hermitian PSD matrix
//! variables, free Hermitian matrix variables, and bounded scalars.
//!
//! Scheme builders state programs in the complex domain exactly as formulated;
//! realification (each Hermitian H becomes the real symmetric
//! [[Re H, −Im H], [Im H, Re H]]) and the sparse lowering to a real conic
//! interior-point solver happen behind [`ConvexProgram::solve`]. All factor-of-2
//! bookkeeping introduced by the embedding lives inside this module.

mod embed;
mod lower;

pub use embed::{embed_hermitian, entry_functionals, extract_hermitian};

use serde_json::json;
use thiserror::Error;

use crate::CMat;

/// Violations of the modeling contract (bad references, non-Hermitian
/// coefficients, dimension mismatches). Solver outcomes are not errors; they
/// are reported through [`SolveStatus`].
#[derive(Debug, Error)]
pub enum ConicError {
    #[error("program is malformed: {0}")]
    Model(String),
}

/// Handle to a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) enum VarKind {
    /// Complex Hermitian PSD matrix of the given dimension.
    Psd { dim: usize },
    /// Complex Hermitian matrix with no cone attached (sign-indefinite).
    FreeHermitian { dim: usize },
    /// Real scalar, optionally bounded below.
    Scalar { lower: Option<f64> },
}

#[derive(Debug, Clone)]
pub(crate) struct VarDecl {
    pub name: String,
    pub kind: VarKind,
}

/// Real-valued affine functional of the program variables:
/// Σ ⟨C_t, H_t⟩ + Σ a_t·x_t + constant, with ⟨C, H⟩ = tr(C·H) for Hermitian
/// coefficient C and Hermitian variable H.
#[derive(Debug, Clone, Default)]
pub struct AffineExpr {
    pub(crate) matrix_terms: Vec<(VarId, CMat)>,
    pub(crate) scalar_terms: Vec<(VarId, f64)>,
    pub(crate) constant: f64,
}

impl AffineExpr {
    /// The zero functional.
    pub fn zero() -> Self {
        Self::default()
    }

    /// A constant functional.
    pub fn constant(value: f64) -> Self {
        Self { constant: value, ..Self::default() }
    }

    /// Adds the term tr(coeff · VAR) for a Hermitian coefficient.
    pub fn with_matrix_term(mut self, var: VarId, coeff: CMat) -> Self {
        self.matrix_terms.push((var, coeff));
        self
    }

    /// Adds the term coeff · VAR for a scalar variable.
    pub fn with_scalar_term(mut self, var: VarId, coeff: f64) -> Self {
        self.scalar_terms.push((var, coeff));
        self
    }

    /// Adds to the constant part.
    pub fn with_constant(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    /// Multiplies every coefficient and the constant by a real factor.
    pub fn scaled(mut self, factor: f64) -> Self {
        for (_, coeff) in &mut self.matrix_terms {
            *coeff *= num_complex::Complex::new(factor, 0.0);
        }
        for (_, coeff) in &mut self.scalar_terms {
            *coeff *= factor;
        }
        self.constant *= factor;
        self
    }

    /// Evaluates the functional at a solution point.
    pub fn eval(&self, solution: &ConicSolution) -> f64 {
        let mut value = self.constant;
        for (var, coeff) in &self.matrix_terms {
            value += (coeff * solution.matrix(*var)).trace().re;
        }
        for (var, coeff) in &self.scalar_terms {
            value += coeff * solution.scalar(*var);
        }
        value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Sense {
    Eq,
    Ge,
    Le,
}

#[derive(Debug, Clone)]
pub(crate) struct Constraint {
    pub name: String,
    pub sense: Sense,
    pub expr: AffineExpr,
}

/// Solver verdict for one program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Feasible point with residuals and duality gap within tolerance.
    Optimal,
    /// Primal infeasibility certified (or detected at reduced accuracy).
    Infeasible,
    /// Dual infeasibility certified: the objective is unbounded below.
    Unbounded,
    /// Convergence stalled; the returned point carries no guarantees.
    NumericalFailure,
}

/// Solver accuracy report at the returned point.
#[derive(Debug, Clone, Copy)]
pub struct Residuals {
    /// Relative primal feasibility residual.
    pub primal: f64,
    /// Relative dual feasibility residual.
    pub dual: f64,
    /// Absolute primal-dual objective gap.
    pub gap: f64,
}

/// Result of solving a [`ConvexProgram`].
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Hermitian value per matrix variable (index = declaration order).
    pub(crate) matrices: Vec<Option<CMat>>,
    /// Value per scalar variable (index = declaration order).
    pub(crate) scalars: Vec<Option<f64>>,
    /// Program objective evaluated at the returned point (includes constants).
    pub objective_value: f64,
    pub residuals: Residuals,
    pub iterations: u32,
    pub solve_seconds: f64,
}

impl ConicSolution {
    /// Value of a matrix variable. Panics on a scalar handle.
    pub fn matrix(&self, var: VarId) -> &CMat {
        self.matrices[var.0]
            .as_ref()
            .expect("variable is scalar, not a matrix")
    }

    /// Value of a scalar variable. Panics on a matrix handle.
    pub fn scalar(&self, var: VarId) -> f64 {
        self.scalars[var.0].expect("variable is a matrix, not a scalar")
    }
}

/// A convex program: PSD/free Hermitian matrix variables, bounded scalars, an
/// objective that is a sum of squared affine functionals plus a linear
/// functional, and linear equality/inequality constraints.
///
/// Convexity is guaranteed by construction — the quadratic part is only ever
/// specified through squares.
#[derive(Debug, Clone, Default)]
pub struct ConvexProgram {
    pub(crate) vars: Vec<VarDecl>,
    pub(crate) squares: Vec<AffineExpr>,
    pub(crate) linear: AffineExpr,
    pub(crate) constraints: Vec<Constraint>,
}

impl ConvexProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a complex Hermitian PSD matrix variable of size dim×dim.
    pub fn add_psd_var(&mut self, name: &str, dim: usize) -> VarId {
        self.vars.push(VarDecl { name: name.to_string(), kind: VarKind::Psd { dim } });
        VarId(self.vars.len() - 1)
    }

    /// Declares a complex Hermitian matrix variable with no PSD cone attached.
    pub fn add_free_hermitian_var(&mut self, name: &str, dim: usize) -> VarId {
        self.vars
            .push(VarDecl { name: name.to_string(), kind: VarKind::FreeHermitian { dim } });
        VarId(self.vars.len() - 1)
    }

    /// Declares a real scalar variable, optionally bounded below.
    pub fn add_scalar_var(&mut self, name: &str, lower: Option<f64>) -> VarId {
        self.vars.push(VarDecl { name: name.to_string(), kind: VarKind::Scalar { lower } });
        VarId(self.vars.len() - 1)
    }

    /// Adds expr² to the objective.
    pub fn add_square(&mut self, expr: AffineExpr) {
        self.squares.push(expr);
    }

    /// Adds a linear functional to the objective.
    pub fn add_linear(&mut self, expr: AffineExpr) {
        self.linear.matrix_terms.extend(expr.matrix_terms);
        self.linear.scalar_terms.extend(expr.scalar_terms);
        self.linear.constant += expr.constant;
    }

    /// Adds the constraint expr = 0.
    pub fn add_eq(&mut self, name: &str, expr: AffineExpr) {
        self.constraints.push(Constraint { name: name.to_string(), sense: Sense::Eq, expr });
    }

    /// Adds the constraint expr ≥ 0.
    pub fn add_ge(&mut self, name: &str, expr: AffineExpr) {
        self.constraints.push(Constraint { name: name.to_string(), sense: Sense::Ge, expr });
    }

    /// Adds the constraint expr ≤ 0.
    pub fn add_le(&mut self, name: &str, expr: AffineExpr) {
        self.constraints.push(Constraint { name: name.to_string(), sense: Sense::Le, expr });
    }

    /// Objective value (squares + linear + constants) at a solution point.
    pub fn objective_at(&self, solution: &ConicSolution) -> f64 {
        let quadratic: f64 = self
            .squares
            .iter()
            .map(|sq| {
                let v = sq.eval(solution);
                v * v
            })
            .sum();
        quadratic + self.linear.eval(solution)
    }

    /// Solves the program to the requested tolerance on residuals and gap.
    pub fn solve(&self, tol: f64) -> Result<ConicSolution, ConicError> {
        self.validate(tol)?;
        lower::solve_lowered(self, tol)
    }

    /// Dimension of a matrix variable (validation helper).
    pub(crate) fn matrix_dim(&self, var: VarId) -> Option<usize> {
        match self.vars.get(var.0).map(|v| &v.kind) {
            Some(VarKind::Psd { dim }) | Some(VarKind::FreeHermitian { dim }) => Some(*dim),
            _ => None,
        }
    }

    fn validate(&self, tol: f64) -> Result<(), ConicError> {
        if !(tol > 0.0) {
            return Err(ConicError::Model(format!("solver tolerance must be > 0, got {tol}")));
        }
        let all_exprs = self
            .squares
            .iter()
            .chain(std::iter::once(&self.linear))
            .chain(self.constraints.iter().map(|c| &c.expr));
        for expr in all_exprs {
            if !expr.constant.is_finite() {
                return Err(ConicError::Model("non-finite constant in expression".into()));
            }
            for (var, coeff) in &expr.matrix_terms {
                let dim = self.matrix_dim(*var).ok_or_else(|| {
                    ConicError::Model(format!(
                        "matrix term references non-matrix or undeclared variable #{}",
                        var.0
                    ))
                })?;
                if coeff.nrows() != dim || coeff.ncols() != dim {
                    return Err(ConicError::Model(format!(
                        "coefficient is {}×{} but variable '{}' is {dim}×{dim}",
                        coeff.nrows(),
                        coeff.ncols(),
                        self.vars[var.0].name
                    )));
                }
                embed::check_hermitian(coeff).map_err(|e| {
                    ConicError::Model(format!(
                        "coefficient on variable '{}' is not Hermitian: {e}",
                        self.vars[var.0].name
                    ))
                })?;
            }
            for (var, coeff) in &expr.scalar_terms {
                match self.vars.get(var.0).map(|v| &v.kind) {
                    Some(VarKind::Scalar { .. }) => {}
                    _ => {
                        return Err(ConicError::Model(format!(
                            "scalar term references non-scalar or undeclared variable #{}",
                            var.0
                        )))
                    }
                }
                if !coeff.is_finite() {
                    return Err(ConicError::Model("non-finite scalar coefficient".into()));
                }
            }
        }
        Ok(())
    }

    /// Solver-independent JSON description of the lowered program (variables,
    /// objective, and constraints in coordinate form) for regression tests.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let vars: Vec<_> = self
            .vars
            .iter()
            .map(|v| match &v.kind {
                VarKind::Psd { dim } => json!({"name": v.name, "kind": "psd", "dim": dim}),
                VarKind::FreeHermitian { dim } => {
                    json!({"name": v.name, "kind": "free_hermitian", "dim": dim})
                }
                VarKind::Scalar { lower } => {
                    json!({"name": v.name, "kind": "scalar", "lower": lower})
                }
            })
            .collect();
        let coords = |expr: &AffineExpr| {
            let (coeffs, constant) = lower::functional(self, expr);
            json!({
                "coords": coeffs.iter().map(|(slot, c)| json!([slot, c])).collect::<Vec<_>>(),
                "constant": constant,
            })
        };
        json!({
            "vars": vars,
            "objective": {
                "squares": self.squares.iter().map(coords).collect::<Vec<_>>(),
                "linear": coords(&self.linear),
            },
            "constraints": self
                .constraints
                .iter()
                .map(|c| {
                    let sense = match c.sense {
                        Sense::Eq => "eq",
                        Sense::Ge => "ge",
                        Sense::Le => "le",
                    };
                    let mut v = coords(&c.expr);
                    v["name"] = json!(c.name);
                    v["sense"] = json!(sense);
                    v
                })
                .collect::<Vec<_>>(),
        })
    }
}
