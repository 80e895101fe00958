//! Sequential quadratic programming for smooth nonlinear programs with
//! analytic gradients.
//!
//! Each iteration builds a convex quadratic model of the objective with a
//! damped BFGS curvature estimate, linearizes the constraints, solves the
//! subproblem through the conic core (an epigraph lift turns the
//! quadratic objective into one LMI), and line-searches an ℓ1 merit
//! function. Infeasible subproblems are retried in elastic mode with
//! penalized constraint slacks. Unconstrained problems skip the conic
//! machinery and take damped quasi-Newton steps directly.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

use super::sdp::{solve_sdp, SdpBuilder};
use super::{SolveReport, SolverStatus};

/// Differentiable scalar function: returns (value, gradient).
pub type ValGrad<'a> = Box<dyn Fn(&DVector<f64>) -> (f64, DVector<f64>) + 'a>;

/// One scalar constraint; equality g(x) = 0 or inequality h(x) ≥ 0
/// depending on which list it is registered in.
pub struct Constraint<'a> {
    pub eval: ValGrad<'a>,
}

/// Problem description for [`sqp_minimize`].
pub struct SqpProblem<'a> {
    pub objective: ValGrad<'a>,
    pub eq_constraints: Vec<Constraint<'a>>,
    pub ineq_constraints: Vec<Constraint<'a>>,
}

#[derive(Debug, Clone, Copy)]
pub struct SqpOptions {
    /// Constraint-violation and stationarity tolerance.
    pub tol: f64,
    /// Relative objective-decrease stopping threshold.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self { tol: 1e-8, rel_tol: 1e-10, max_iter: 200 }
    }
}

fn violation(eqs: &[f64], ineqs: &[f64]) -> f64 {
    eqs.iter().map(|v| v.abs()).sum::<f64>()
        + ineqs.iter().map(|v| (-v).max(0.0)).sum::<f64>()
}

/// Solve the linearized quadratic subproblem
///   min ∇fᵀd + ½ dᵀBd  s.t.  g + ∇gᵀd = 0,  h + ∇hᵀd ≥ 0
/// through the conic core. `elastic` adds penalized slacks so the
/// subproblem is always feasible.
fn qp_step(
    grad: &DVector<f64>,
    b_chol: &Cholesky<f64, nalgebra::Dyn>,
    eqs: &[(f64, DVector<f64>)],
    ineqs: &[(f64, DVector<f64>)],
    elastic: Option<f64>,
) -> Result<DVector<f64>> {
    let n = grad.len();
    let r = b_chol.l().transpose(); // B = RᵀR
    let mut builder = SdpBuilder::new();
    let d_vars = builder.add_vars(n);
    let t_var = builder.add_vars(1).start;
    for i in 0..n {
        builder.add_objective(d_vars.start + i, grad[i]);
    }
    builder.add_objective(t_var, 0.5);
    // ‖Rd‖² ≤ t  ⇔  [[I, Rd],[(Rd)ᵀ, t]] ⪰ 0.
    let mut f0 = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        f0[(i, i)] = 1.0;
    }
    let mut terms: Vec<(usize, DMatrix<f64>)> = (0..n)
        .map(|k| {
            let mut m = DMatrix::zeros(n + 1, n + 1);
            for i in 0..n {
                m[(i, n)] = r[(i, k)];
                m[(n, i)] = r[(i, k)];
            }
            (d_vars.start + k, m)
        })
        .collect();
    let mut tm = DMatrix::zeros(n + 1, n + 1);
    tm[(n, n)] = 1.0;
    terms.push((t_var, tm));
    builder.add_lmi(f0, terms);

    let mut slack_penalty = Vec::new();
    for (val, g) in eqs {
        let mut row: Vec<(usize, f64)> = (0..n).map(|i| (d_vars.start + i, g[i])).collect();
        if let Some(pen) = elastic {
            // g + ∇gᵀd = u − v with u, v ≥ 0 penalized.
            let u = builder.add_vars(1).start;
            let v = builder.add_vars(1).start;
            builder.add_ineq(0.0, vec![(u, 1.0)]);
            builder.add_ineq(0.0, vec![(v, 1.0)]);
            row.push((u, -1.0));
            row.push((v, 1.0));
            slack_penalty.push((u, pen));
            slack_penalty.push((v, pen));
        }
        builder.add_eq(row, -val);
    }
    for (val, g) in ineqs {
        let mut row: Vec<(usize, f64)> = (0..n).map(|i| (d_vars.start + i, g[i])).collect();
        if let Some(pen) = elastic {
            let s = builder.add_vars(1).start;
            builder.add_ineq(0.0, vec![(s, 1.0)]);
            row.push((s, 1.0));
            slack_penalty.push((s, pen));
        }
        builder.add_ineq(*val, row);
    }
    for (v, pen) in slack_penalty {
        builder.add_objective(v, pen);
    }
    let (x, _) = solve_sdp(&builder.build(), 1e-9)?;
    Ok(DVector::from_fn(n, |i, _| x[d_vars.start + i]))
}

pub fn sqp_minimize(
    problem: &SqpProblem<'_>,
    x0: &DVector<f64>,
    opts: &SqpOptions,
) -> Result<(DVector<f64>, SolveReport)> {
    let n = x0.len();
    let mut x = x0.clone();
    let (mut f_val, mut grad) = (problem.objective)(&x);
    if !f_val.is_finite() {
        return Err(Error::NonFinite("objective at initial point"));
    }
    let mut b = DMatrix::<f64>::identity(n, n) * grad.amax().max(1.0);
    let mut nu = 10.0 * grad.amax().max(1.0);
    let mut prev_viol = f64::INFINITY;
    let unconstrained = problem.eq_constraints.is_empty() && problem.ineq_constraints.is_empty();

    let mut status = SolverStatus::MaxIter;
    let mut iterations = opts.max_iter;

    for iter in 0..opts.max_iter {
        let eq_data: Vec<(f64, DVector<f64>)> =
            problem.eq_constraints.iter().map(|c| (c.eval)(&x)).collect();
        let ineq_data: Vec<(f64, DVector<f64>)> =
            problem.ineq_constraints.iter().map(|c| (c.eval)(&x)).collect();
        let eq_vals: Vec<f64> = eq_data.iter().map(|d| d.0).collect();
        let ineq_vals: Vec<f64> = ineq_data.iter().map(|d| d.0).collect();
        let viol = violation(&eq_vals, &ineq_vals);

        // Damped Cholesky: bump the diagonal until positive definite.
        let mut damp = 0.0;
        let b_chol = loop {
            let mut bd = b.clone();
            for i in 0..n {
                bd[(i, i)] += damp;
            }
            if let Some(c) = Cholesky::new(bd) {
                break c;
            }
            damp = (damp * 10.0).max(1e-8 * b.diagonal().amax().max(1.0));
        };

        let d = if unconstrained {
            -b_chol.solve(&grad)
        } else {
            match qp_step(&grad, &b_chol, &eq_data, &ineq_data, None) {
                Ok(d) => d,
                Err(Error::Infeasible(_)) | Err(Error::Solver { .. }) => {
                    qp_step(&grad, &b_chol, &eq_data, &ineq_data, Some(100.0 * nu))?
                }
                Err(e) => return Err(e),
            }
        };

        // Stationarity: a vanishing step at a feasible point is a KKT
        // point for the quadratic model.
        if d.norm() <= opts.tol * (1.0 + x.norm()) && viol <= opts.tol {
            status = SolverStatus::Optimal;
            iterations = iter;
            break;
        }

        // Penalty update: the merit function must see the violation.
        if viol > opts.tol && viol >= 0.9 * prev_viol {
            nu *= 2.0;
        }
        prev_viol = viol;

        // ℓ1 merit line search (Armijo backtracking).
        let merit = |xx: &DVector<f64>| -> f64 {
            let (fv, _) = (problem.objective)(xx);
            let ev: Vec<f64> = problem.eq_constraints.iter().map(|c| (c.eval)(xx).0).collect();
            let iv: Vec<f64> = problem.ineq_constraints.iter().map(|c| (c.eval)(xx).0).collect();
            fv + nu * violation(&ev, &iv)
        };
        let phi0 = f_val + nu * viol;
        let dphi = grad.dot(&d) - nu * viol;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let cand = &x + &d * alpha;
            let phi = merit(&cand);
            if phi.is_finite() && phi <= phi0 + 1e-4 * alpha * dphi.min(0.0) && phi < phi0 + 1e-16 * phi0.abs().max(1.0)
            {
                accepted = Some((cand, phi));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, _)) = accepted else {
            // No merit decrease available along d: treat as converged if
            // feasible, otherwise report the stall.
            if viol <= opts.tol {
                status = SolverStatus::Optimal;
                iterations = iter;
                break;
            }
            status = SolverStatus::IllConditioned;
            iterations = iter;
            break;
        };

        let (f_new, grad_new) = (problem.objective)(&x_new);
        if !f_new.is_finite() {
            return Err(Error::NonFinite("objective during line search"));
        }

        // Damped BFGS update on the objective-gradient secant pair.
        let s = &x_new - &x;
        let yv = &grad_new - &grad;
        let bs = &b * &s;
        let sbs = s.dot(&bs);
        let sy = s.dot(&yv);
        if sbs > 1e-16 {
            let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
            let y_damped = &yv * theta + &bs * (1.0 - theta);
            let sy_d = s.dot(&y_damped);
            if sy_d > 1e-16 {
                b = &b - (&bs * bs.transpose()) / sbs
                    + (&y_damped * y_damped.transpose()) / sy_d;
            }
        }

        let rel_decrease = (f_val - f_new).abs() / f_val.abs().max(1.0);
        x = x_new;
        f_val = f_new;
        grad = grad_new;
        if rel_decrease < opts.rel_tol && viol <= opts.tol {
            status = SolverStatus::Optimal;
            iterations = iter + 1;
            break;
        }
    }

    let eq_vals: Vec<f64> = problem.eq_constraints.iter().map(|c| (c.eval)(&x).0).collect();
    let ineq_vals: Vec<f64> = problem.ineq_constraints.iter().map(|c| (c.eval)(&x).0).collect();
    let final_viol = violation(&eq_vals, &ineq_vals);
    let report = SolveReport {
        status,
        primal_objective: f_val,
        dual_objective: f64::NAN,
        kkt_residuals: (final_viol, grad.norm(), 0.0),
        iterations,
    };
    Ok((x, report))
}
