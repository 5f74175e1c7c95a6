//! Control-point placement QCQP.
//!
//! Variables are the control points of an optimization window; points
//! outside the window enter the hybrid spans as fixed context. The objective
//! is the sum of closed-form span costs over every span touching a variable,
//! which is a positive-semidefinite quadratic. Constraints are one ball per
//! variable (stay inside the elastic tube), the linear derivative-bound rows
//! of every touched span, and exact pins on the placement endpoints.
//!
//! The solver is a consensus ADMM: the smooth quadratic step is a dense
//! Cholesky solve shared by all three axes, and the constraint step is a
//! closed-form projection (boxes for the linear rows, per-point balls).
//! Every iterate that satisfies all constraints is a candidate; the best
//! feasible candidate is returned, so the objective never increases over a
//! feasible warm start even if the solver is stopped early.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::elastic::tube::ElasticTube;
use crate::linalg::{flt, Mat, Vec3};
use crate::spline::{BasisTables, UniformBsplineSpec};
use crate::world::{Clearances, Connectivity};

#[derive(Debug, Clone, PartialEq)]
pub enum QcqpError {
    /// The variable range is empty or out of bounds.
    BadVariableRange,
    /// Tube length must match the variable range.
    TubeMismatch { tube: usize, vars: usize },
    /// The sequence is shorter than one span.
    TooFewPoints { len: usize, k: usize },
    /// The warm start violates a ball constraint, which indicates a
    /// front-end bug (search points must lie in free space inside the tube).
    BallViolatedAtInit { index: usize, excess: f64 },
    /// Factorization failed; the regularized system should always be PD.
    Numerical,
}

impl fmt::Display for QcqpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QcqpError::BadVariableRange => write!(f, "empty or out-of-range variable window"),
            QcqpError::TubeMismatch { tube, vars } => {
                write!(f, "tube has {tube} bubbles for {vars} variables")
            }
            QcqpError::TooFewPoints { len, k } => {
                write!(f, "sequence of {len} points is shorter than one span of {k}")
            }
            QcqpError::BallViolatedAtInit { index, excess } => {
                write!(f, "initial point {index} lies {excess} outside its bubble")
            }
            QcqpError::Numerical => write!(f, "factorization failed"),
        }
    }
}

impl core::error::Error for QcqpError {}

#[derive(Debug, Clone)]
struct LinRow {
    /// Sparse coefficients over local variable indices.
    coeffs: Vec<(usize, f64)>,
    lo: [f64; 3],
    hi: [f64; 3],
}

/// Assembled placement program.
#[derive(Debug, Clone)]
pub struct PlacementQcqp {
    tables: BasisTables,
    spec: UniformBsplineSpec,
    points: Vec<Vec3>,
    /// Global point index of each free variable.
    var_global: Vec<usize>,
    /// Quadratic form shared by the three axes.
    p: Mat,
    /// Linear term per axis.
    c: [Vec<f64>; 3],
    rows: Vec<LinRow>,
    /// Bubble per free variable.
    balls: Vec<Option<(Vec3, f64)>>,
    touched: Range<usize>,
}

impl PlacementQcqp {
    /// Assemble the program for `points` with variables in `var_range`.
    ///
    /// `pin_first`/`pin_last` freeze the window edges exactly (endpoint
    /// connectivity); the tube supplies one bubble per `var_range` point and
    /// pinned points simply ignore theirs.
    pub fn build(
        tables: &BasisTables,
        spec: &UniformBsplineSpec,
        points: &[Vec3],
        var_range: Range<usize>,
        pin_first: bool,
        pin_last: bool,
        tube: &ElasticTube,
    ) -> Result<PlacementQcqp, QcqpError> {
        let k = tables.k();
        if points.len() < k {
            return Err(QcqpError::TooFewPoints { len: points.len(), k });
        }
        if var_range.is_empty() || var_range.end > points.len() {
            return Err(QcqpError::BadVariableRange);
        }
        if tube.len() != var_range.len() {
            return Err(QcqpError::TubeMismatch { tube: tube.len(), vars: var_range.len() });
        }

        let mut var_global = Vec::new();
        let mut balls = Vec::new();
        for (offset, global) in var_range.clone().enumerate() {
            let pinned = (pin_first && global == var_range.start)
                || (pin_last && global + 1 == var_range.end);
            if pinned {
                continue;
            }
            var_global.push(global);
            balls.push(Some((tube.centers[offset], tube.radii[offset])));
        }
        if var_global.is_empty() {
            return Err(QcqpError::BadVariableRange);
        }
        let n = var_global.len();
        let mut var_of_global = vec![usize::MAX; points.len()];
        for (local, &global) in var_global.iter().enumerate() {
            var_of_global[global] = local;
        }

        let first = var_global[0];
        let last = *var_global.last().expect("nonempty");
        let touched = first.saturating_sub(k - 1)..(last + 1).min(points.len() - k + 1);

        let mut p = Mat::zeros(n, n);
        let mut c = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut rows: Vec<LinRow> = Vec::new();

        for i in touched.clone() {
            for l in 1..=k.saturating_sub(2) {
                let w = spec.weight(l);
                if w > 0.0 {
                    let pl = tables.p(l);
                    for r in 0..k {
                        let vr = var_of_global[i + r];
                        for col in 0..k {
                            let vc = var_of_global[i + col];
                            let coeff = w * pl[(r, col)];
                            if coeff == 0.0 {
                                continue;
                            }
                            match (vr != usize::MAX, vc != usize::MAX) {
                                (true, true) => p[(vr, vc)] += coeff,
                                (true, false) => {
                                    let f = points[i + col];
                                    c[0][vr] += coeff * f.x;
                                    c[1][vr] += coeff * f.y;
                                    c[2][vr] += coeff * f.z;
                                }
                                // Constant-only terms don't affect the
                                // minimizer; objectives are reported through
                                // the span evaluator instead.
                                (false, false) => {}
                                (false, true) => {} // captured by symmetry
                            }
                        }
                    }
                }
            }
            for l in spec.bounded_orders() {
                let bound = spec.bound(l).expect("bounded");
                let s = tables.s(l);
                for r in 0..k {
                    let mut coeffs = Vec::new();
                    let mut offset = Vec3::ZERO;
                    for col in 0..k {
                        let a = s[(r, col)];
                        if flt::abs(a) < 1e-13 {
                            continue;
                        }
                        let vc = var_of_global[i + col];
                        if vc != usize::MAX {
                            coeffs.push((vc, a));
                        } else {
                            offset += points[i + col] * a;
                        }
                    }
                    if coeffs.is_empty() {
                        continue; // row fixed by context, nothing to optimize
                    }
                    rows.push(LinRow {
                        coeffs,
                        lo: [
                            -bound[0] - offset.x,
                            -bound[1] - offset.y,
                            -bound[2] - offset.z,
                        ],
                        hi: [bound[0] - offset.x, bound[1] - offset.y, bound[2] - offset.z],
                    });
                }
            }
        }

        let qcqp = PlacementQcqp {
            tables: tables.clone(),
            spec: spec.clone(),
            points: points.to_vec(),
            var_global,
            p,
            c,
            rows,
            balls,
            touched,
        };

        // Reject warm starts outside their bubbles: the front-end guarantees
        // collision-free placements, so this is a caller bug, not a solver
        // condition.
        for (local, &global) in qcqp.var_global.iter().enumerate() {
            if let Some((q, r)) = qcqp.balls[local] {
                let excess = qcqp.points[global].dist(&q) - r;
                if excess > 1e-6 {
                    return Err(QcqpError::BallViolatedAtInit { index: global, excess });
                }
            }
        }
        Ok(qcqp)
    }

    pub fn num_variables(&self) -> usize {
        self.var_global.len()
    }

    pub fn variable_indices(&self) -> &[usize] {
        &self.var_global
    }

    /// Spans whose cost the program optimizes.
    pub fn touched_spans(&self) -> Range<usize> {
        self.touched.clone()
    }

    fn initial_vars(&self) -> Vec<Vec3> {
        self.var_global.iter().map(|&g| self.points[g]).collect()
    }

    /// Objective value (touched-span cost) for a candidate variable
    /// assignment.
    pub fn objective(&self, vars: &[Vec3]) -> f64 {
        assert_eq!(vars.len(), self.var_global.len());
        let k = self.tables.k();
        let pts = self.assemble(vars);
        let mut total = 0.0;
        for i in self.touched.clone() {
            total += crate::spline::span_control_cost(&self.tables, &self.spec, &pts[i..i + k])
                .expect("span length k");
        }
        total
    }

    /// Max constraint violation of a candidate (0 when feasible).
    pub fn violation(&self, vars: &[Vec3]) -> f64 {
        let mut worst = 0.0f64;
        for (local, ball) in self.balls.iter().enumerate() {
            if let Some((q, r)) = ball {
                worst = worst.max(vars[local].dist(q) - r);
            }
        }
        for row in &self.rows {
            for d in 0..3 {
                let mut val = 0.0;
                for &(i, a) in &row.coeffs {
                    val += a * vars[i].axis(d);
                }
                worst = worst.max(row.lo[d] - val).max(val - row.hi[d]);
            }
        }
        worst
    }

    /// Replace the variable points in a copy of the full sequence.
    pub fn assemble(&self, vars: &[Vec3]) -> Vec<Vec3> {
        let mut out = self.points.clone();
        for (local, &global) in self.var_global.iter().enumerate() {
            out[global] = vars[local];
        }
        out
    }
}

/// Solver options.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Initial ADMM penalty; adapted from residual balance during the run.
    pub rho: f64,
    /// Constraint tolerance a candidate must meet to be accepted.
    pub feasibility_tol: f64,
    /// Residual threshold for declaring convergence.
    pub residual_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 3000,
            rho: 1.0,
            feasibility_tol: 1e-8,
            residual_tol: 1e-9,
        }
    }
}

/// Solve outcome. `placement` is the full point sequence with variables
/// replaced by the best feasible candidate (or the least-violating iterate
/// when no feasible candidate was found, flagged by `feasible = false`).
#[derive(Debug, Clone)]
pub struct QcqpOutcome {
    pub placement: Vec<Vec3>,
    pub objective_initial: f64,
    pub objective: f64,
    pub feasible: bool,
    pub converged: bool,
    pub iterations: usize,
    pub max_violation: f64,
}

/// Run the ADMM solve.
pub fn solve_placement_qcqp(
    problem: &PlacementQcqp,
    opts: &SolveOptions,
) -> Result<QcqpOutcome, QcqpError> {
    let n = problem.num_variables();
    let x0 = problem.initial_vars();
    let objective_initial = problem.objective(&x0);
    let init_violation = problem.violation(&x0);

    // Row layout: all linear rows first, then one identity row per ball.
    let n_lin = problem.rows.len();
    let n_rows = n_lin + n;
    let mut ata = Mat::zeros(n, n);
    for row in &problem.rows {
        for &(i, a) in &row.coeffs {
            for &(j, b) in &row.coeffs {
                ata[(i, j)] += a * b;
            }
        }
    }
    for i in 0..n {
        ata[(i, i)] += 1.0; // ball identity rows
    }

    let factor = |rho: f64| -> Option<crate::linalg::Chol> {
        let mut h = problem.p.scale(2.0).add(&ata.scale(rho));
        for i in 0..n {
            h[(i, i)] += 1e-12;
        }
        h.cholesky()
    };

    let mut rho = opts.rho;
    let mut chol = factor(rho).ok_or(QcqpError::Numerical)?;

    // State per axis.
    let mut x = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for d in 0..3 {
        for (i, v) in x0.iter().enumerate() {
            x[d][i] = v.axis(d);
        }
    }
    let apply_a = |x: &Vec<f64>, out: &mut Vec<f64>| {
        for (r, row) in problem.rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(i, a) in &row.coeffs {
                acc += a * x[i];
            }
            out[r] = acc;
        }
        for i in 0..n {
            out[n_lin + i] = x[i];
        }
    };
    let mut ax = [vec![0.0; n_rows], vec![0.0; n_rows], vec![0.0; n_rows]];
    let mut y = [vec![0.0; n_rows], vec![0.0; n_rows], vec![0.0; n_rows]];
    let mut u = [vec![0.0; n_rows], vec![0.0; n_rows], vec![0.0; n_rows]];
    for d in 0..3 {
        apply_a(&x[d], &mut ax[d]);
        y[d].copy_from_slice(&ax[d]);
    }
    project(problem, &mut y);

    let mut best: Option<(f64, Vec<Vec3>)> = None;
    let mut fallback: (f64, Vec<Vec3>) = (init_violation, x0.clone());
    if init_violation <= opts.feasibility_tol {
        best = Some((objective_initial, x0.clone()));
    }

    let mut converged = false;
    let mut iterations = 0;
    let mut y_prev = y.clone();
    for iter in 0..opts.max_iterations {
        iterations = iter + 1;
        // x-step: (2P + rho A^T A) x = -2c + rho A^T (y - u), per axis.
        for d in 0..3 {
            let mut rhs = vec![0.0; n];
            for (r, row) in problem.rows.iter().enumerate() {
                let v = y[d][r] - u[d][r];
                for &(i, a) in &row.coeffs {
                    rhs[i] += rho * a * v;
                }
            }
            for i in 0..n {
                rhs[i] += rho * (y[d][n_lin + i] - u[d][n_lin + i]);
                rhs[i] -= 2.0 * problem.c[d][i];
            }
            chol.solve_in_place(&mut rhs);
            x[d] = rhs;
        }
        for d in 0..3 {
            apply_a(&x[d], &mut ax[d]);
        }

        // Candidate bookkeeping on the raw x iterate.
        let cand: Vec<Vec3> = (0..n).map(|i| Vec3::new(x[0][i], x[1][i], x[2][i])).collect();
        let viol = problem.violation(&cand);
        if viol < fallback.0 {
            fallback = (viol, cand.clone());
        }
        if viol <= opts.feasibility_tol {
            let obj = problem.objective(&cand);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, cand));
            }
        }

        // y-step: project Ax + u onto the constraint sets.
        core::mem::swap(&mut y_prev, &mut y);
        for d in 0..3 {
            for r in 0..n_rows {
                y[d][r] = ax[d][r] + u[d][r];
            }
        }
        project(problem, &mut y);

        // Dual update and residuals.
        let mut primal = 0.0f64;
        let mut dual = 0.0f64;
        for d in 0..3 {
            for r in 0..n_rows {
                let pr = ax[d][r] - y[d][r];
                u[d][r] += pr;
                primal = primal.max(flt::abs(pr));
                dual = dual.max(flt::abs(y[d][r] - y_prev[d][r]) * rho);
            }
        }
        if primal < opts.residual_tol && dual < opts.residual_tol && best.is_some() {
            converged = true;
            break;
        }
        if iter % 50 == 49 {
            // Residual balancing keeps the splitting well-conditioned.
            if primal > 10.0 * dual && rho < 1e6 {
                rho *= 2.0;
                for row in u.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= 0.5;
                    }
                }
                chol = factor(rho).ok_or(QcqpError::Numerical)?;
            } else if dual > 10.0 * primal && rho > 1e-6 {
                rho *= 0.5;
                for row in u.iter_mut() {
                    for v in row.iter_mut() {
                        *v *= 2.0;
                    }
                }
                chol = factor(rho).ok_or(QcqpError::Numerical)?;
            }
        }
    }

    let (feasible, chosen_obj, chosen) = match best {
        Some((obj, vars)) => (true, obj, vars),
        None => (false, problem.objective(&fallback.1), fallback.1.clone()),
    };
    // Hard monotonicity: a feasible warm start is itself a candidate, so the
    // chosen objective can never exceed it.
    let (chosen_obj, chosen) =
        if feasible && init_violation <= opts.feasibility_tol && chosen_obj > objective_initial {
            (objective_initial, x0)
        } else {
            (chosen_obj, chosen)
        };
    let max_violation = problem.violation(&chosen);
    Ok(QcqpOutcome {
        placement: problem.assemble(&chosen),
        objective_initial,
        objective: chosen_obj,
        feasible,
        converged,
        iterations,
        max_violation,
    })
}

fn project(problem: &PlacementQcqp, y: &mut [Vec<f64>; 3]) {
    let n_lin = problem.rows.len();
    for (r, row) in problem.rows.iter().enumerate() {
        for d in 0..3 {
            y[d][r] = y[d][r].clamp(row.lo[d], row.hi[d]);
        }
    }
    for (i, ball) in problem.balls.iter().enumerate() {
        if let Some((q, radius)) = ball {
            let p = Vec3::new(y[0][n_lin + i], y[1][n_lin + i], y[2][n_lin + i]);
            let delta = p - *q;
            let dist = delta.norm();
            if dist > *radius {
                let scaled = *q + delta * (*radius / dist);
                y[0][n_lin + i] = scaled.x;
                y[1][n_lin + i] = scaled.y;
                y[2][n_lin + i] = scaled.z;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Two-level inflation condition.
// ---------------------------------------------------------------------------

/// Margins of the two-level inflation condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InflationCheck {
    pub ok: bool,
    /// Maximum control-point step implied by the grid.
    pub d_max: f64,
    /// `2 (c_rbk - c_elas) - d_max`; positive keeps the initial tube
    /// connected.
    pub margin_connectivity: f64,
    /// `(c_elas - robot_radius) - (sqrt(2)-1)/2 * d_max`; positive keeps the
    /// control polygon inside the tube with the robot radius to spare.
    pub margin_polyline: f64,
}

/// Check the clearance configuration against the grid geometry.
pub fn check_two_level_inflation(
    resolution: f64,
    connectivity: Connectivity,
    clearances: &Clearances,
) -> InflationCheck {
    let d_max = connectivity.max_step_cells() * resolution;
    let margin_connectivity = 2.0 * (clearances.c_rbk - clearances.c_elas) - d_max;
    let margin_polyline = (clearances.c_elas - clearances.robot_radius)
        - 0.5 * (flt::sqrt(2.0) - 1.0) * d_max;
    InflationCheck {
        ok: margin_connectivity > 0.0 && margin_polyline > 0.0,
        d_max,
        margin_connectivity,
        margin_polyline,
    }
}
