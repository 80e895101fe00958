//! Dense primal-dual interior-point solver for small semidefinite
//! programs in scalarized linear-matrix-inequality form:
//!
//!   minimize    cᵀx
//!   subject to  F_j(x) = F_{j,0} + Σ_i x_i F_{j,i} ⪰ 0,   j = 1..J
//!               A x = b.
//!
//! Infeasible-start path following with Nesterov-Todd scaling and a
//! Mehrotra-style adaptive centering parameter (the affine direction is
//! probed first and the centering weight set from the achievable gap
//! reduction, reusing the factorized Newton system). Every block is dense
//! and small (≤ 64), so all matrix work uses direct eigendecompositions
//! and Cholesky factorizations.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

use super::{SolveReport, SolverStatus};

/// One PSD constraint F_0 + Σ x_i F_i ⪰ 0 with sparse variable support.
#[derive(Debug, Clone)]
struct LmiBlock {
    dim: usize,
    f0: DMatrix<f64>,
    /// (variable index, symmetric coefficient matrix) pairs.
    terms: Vec<(usize, DMatrix<f64>)>,
}

/// Problem container produced by [`SdpBuilder`].
#[derive(Debug, Clone)]
pub struct SdpProblem {
    n_vars: usize,
    c: DVector<f64>,
    blocks: Vec<LmiBlock>,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
}

/// Incremental constructor for [`SdpProblem`].
#[derive(Debug, Clone, Default)]
pub struct SdpBuilder {
    n_vars: usize,
    objective: Vec<(usize, f64)>,
    blocks: Vec<LmiBlock>,
    eq_rows: Vec<(Vec<(usize, f64)>, f64)>,
}

impl SdpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserve `n` scalar variables, returning their index range.
    pub fn add_vars(&mut self, n: usize) -> std::ops::Range<usize> {
        let start = self.n_vars;
        self.n_vars += n;
        start..self.n_vars
    }

    /// Add `coeff · x_i` to the minimized objective.
    pub fn add_objective(&mut self, var: usize, coeff: f64) {
        self.objective.push((var, coeff));
    }

    /// Require F_0 + Σ x_i F_i ⪰ 0. All matrices must be symmetric and of
    /// equal dimension.
    pub fn add_lmi(&mut self, f0: DMatrix<f64>, terms: Vec<(usize, DMatrix<f64>)>) {
        let dim = f0.nrows();
        debug_assert!(terms.iter().all(|(_, m)| m.nrows() == dim && m.ncols() == dim));
        self.blocks.push(LmiBlock { dim, f0, terms });
    }

    /// Require a scalar affine expression to be nonnegative
    /// (encoded as a 1×1 PSD block).
    pub fn add_ineq(&mut self, constant: f64, terms: Vec<(usize, f64)>) {
        let f0 = DMatrix::from_element(1, 1, constant);
        let t = terms
            .into_iter()
            .map(|(i, v)| (i, DMatrix::from_element(1, 1, v)))
            .collect();
        self.blocks.push(LmiBlock { dim: 1, f0, terms: t });
    }

    /// Require Σ coeff_i·x_i = rhs.
    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.eq_rows.push((terms, rhs));
    }

    pub fn build(self) -> SdpProblem {
        let mut c = DVector::zeros(self.n_vars);
        for (i, v) in &self.objective {
            c[*i] += v;
        }
        let p = self.eq_rows.len();
        let mut a_eq = DMatrix::zeros(p, self.n_vars);
        let mut b_eq = DVector::zeros(p);
        for (r, (terms, rhs)) in self.eq_rows.iter().enumerate() {
            for (i, v) in terms {
                a_eq[(r, *i)] += v;
            }
            b_eq[r] = *rhs;
        }
        SdpProblem { n_vars: self.n_vars, c, blocks: self.blocks, a_eq, b_eq }
    }
}

/// Symmetric eigendecomposition helpers for the scaling-point algebra.
fn sym_power(m: &DMatrix<f64>, p: f64) -> Option<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let lam_max = eig.eigenvalues.max();
    if !lam_max.is_finite() || lam_max <= 0.0 {
        return None;
    }
    // Clamp rounding-level eigenvalues: the fraction-to-boundary rule keeps
    // the exact iterates positive definite, so non-positive values here are
    // noise that would otherwise abort a nearly converged solve.
    let floor = 1e-14 * lam_max;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(floor).powf(p)));
    Some(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Clamp eigenvalues below rounding level so the matrix stays strictly
/// inside the cone.
fn spectral_floor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(m);
    let eig = sym.clone().symmetric_eigen();
    let lam_max = eig.eigenvalues.max();
    if !(lam_max > 0.0) {
        return sym;
    }
    let floor = 1e-14 * lam_max;
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return sym;
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(floor)));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Largest step α ∈ (0, 1] with s + α·ds ≻ 0 scaled by fraction-to-boundary.
fn max_step(s: &DMatrix<f64>, ds: &DMatrix<f64>, tau: f64) -> f64 {
    // α_max = −1/λ_min(L⁻¹ ds L⁻ᵀ) when that eigenvalue is negative.
    let chol = match Cholesky::new(s.clone()) {
        Some(c) => c,
        None => return 0.0,
    };
    let l_inv = chol.l().try_inverse().expect("triangular inverse");
    let m = symmetrize(&(&l_inv * ds * l_inv.transpose()));
    let min = m.symmetric_eigen().eigenvalues.min();
    if min >= 0.0 {
        1.0
    } else {
        (tau * (-1.0 / min)).min(1.0)
    }
}

struct BlockState {
    s: DMatrix<f64>,
    z: DMatrix<f64>,
}

/// Per-iteration NT scaling data for one block.
struct Scaling {
    w_inv: DMatrix<f64>,
    z_inv: DMatrix<f64>,
}

fn nt_scaling(s: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let s_half = sym_power(s, 0.5)?;
    let s_half_inv = sym_power(s, -0.5)?;
    let inner = symmetrize(&(&s_half * z * &s_half));
    let inner_half = sym_power(&inner, 0.5)?;
    // W⁻¹ = S^{-1/2} (S^{1/2} Z S^{1/2})^{1/2} S^{-1/2}
    let w_inv = symmetrize(&(&s_half_inv * inner_half * &s_half_inv));
    let z_inv = sym_power(z, -1.0)?;
    Some(Scaling { w_inv, z_inv })
}

/// Evaluate F_j(x).
fn eval_block(b: &LmiBlock, x: &DVector<f64>) -> DMatrix<f64> {
    let mut m = b.f0.clone();
    for (i, f) in &b.terms {
        m += f * x[*i];
    }
    m
}

fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Solve the SDP to complementarity gap and feasibility residuals below
/// `tol`. Returns the primal variables with a report; hard failures
/// (infeasibility certificates, stalled ill-conditioned systems) map to
/// `Error::Solver` or `Error::Infeasible`.
pub fn solve_sdp(p: &SdpProblem, tol: f64) -> Result<(DVector<f64>, SolveReport)> {
    solve_sdp_impl(p, tol, None)
}

/// Like [`solve_sdp`], but started from a strictly feasible primal guess.
/// The slack pair is initialized perfectly centered (Z ∝ S⁻¹), which keeps
/// the iterates off the cone boundary on badly conditioned instances.
pub fn solve_sdp_warm(
    p: &SdpProblem,
    tol: f64,
    x0: &DVector<f64>,
) -> Result<(DVector<f64>, SolveReport)> {
    solve_sdp_impl(p, tol, Some(x0))
}

fn solve_sdp_impl(
    p: &SdpProblem,
    tol: f64,
    warm: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, SolveReport)> {
    let n = p.n_vars;
    let n_eq = p.a_eq.nrows();
    let max_iter = 200;
    let tau = 0.99;
    let total_dim: usize = p.blocks.iter().map(|b| b.dim).sum();
    if total_dim == 0 {
        return Err(Error::Solver {
            status: "ill_conditioned".into(),
            message: "no conic constraints".into(),
        });
    }

    let mut x = match warm {
        Some(x0) if x0.len() == n => x0.clone(),
        _ => DVector::zeros(n),
    };
    let mut y = DVector::zeros(n_eq);
    let mut state: Vec<BlockState> = p
        .blocks
        .iter()
        .map(|b| {
            if warm.is_some() {
                // Centered start at the supplied point: floor the slack
                // spectrum away from the boundary and pair it with its
                // scaled inverse so S·Z is a multiple of the identity.
                let v = symmetrize(&eval_block(b, &x));
                let eig = v.clone().symmetric_eigen();
                let lam_max = eig.eigenvalues.max().max(1e-12);
                let floor = 1e-8 * lam_max;
                let mut s = DMatrix::zeros(b.dim, b.dim);
                let mut z = DMatrix::zeros(b.dim, b.dim);
                for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                    let l = lam.max(floor);
                    let q = eig.eigenvectors.column(k);
                    s += q * q.transpose() * l;
                    z += q * q.transpose() / l;
                }
                BlockState { s, z }
            } else {
                // Infeasible start: identity-scaled slacks sized to the data.
                let scale = (b.f0.norm() / (b.dim as f64).sqrt()).max(1.0);
                BlockState {
                    s: DMatrix::identity(b.dim, b.dim) * scale,
                    z: DMatrix::identity(b.dim, b.dim),
                }
            }
        })
        .collect();

    let norm_c = p.c.norm().max(1.0);
    let norm_b = p.b_eq.norm().max(1.0);
    let norm_f0: f64 = p.blocks.iter().map(|b| b.f0.norm()).sum::<f64>().max(1.0);

    // Reference point for the infeasibility/gap balance safeguard below.
    let mut reference: Option<(f64, f64)> = None;
    // Stagnation detector: accept near-optimal points once floating-point
    // cancellation stops the residuals from contracting further.
    let mut stall = 0usize;
    let mut best_residual = f64::INFINITY;
    let mut best_x = x.clone();

    let mut best_report = SolveReport {
        status: SolverStatus::MaxIter,
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        kkt_residuals: (f64::NAN, f64::NAN, f64::NAN),
        iterations: 0,
    };

    for iter in 0..max_iter {
        // Residuals.
        let r_p: Vec<DMatrix<f64>> = p
            .blocks
            .iter()
            .zip(&state)
            .map(|(b, st)| eval_block(b, &x) - &st.s)
            .collect();
        let r_e = &p.a_eq * &x - &p.b_eq;
        let mut r_d = p.c.clone();
        for (b, st) in p.blocks.iter().zip(&state) {
            for (i, f) in &b.terms {
                r_d[*i] -= frob_inner(&st.z, f);
            }
        }
        r_d -= p.a_eq.transpose() * &y;

        let gap: f64 = state.iter().map(|st| frob_inner(&st.s, &st.z)).sum();
        let mu = gap / total_dim as f64;

        let prim_res =
            (r_p.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt() + r_e.norm()) / norm_f0;
        let dual_res = r_d.norm() / norm_c;
        let primal_obj = p.c.dot(&x);
        let dual_obj = -p
            .blocks
            .iter()
            .zip(&state)
            .map(|(b, st)| frob_inner(&b.f0, &st.z))
            .sum::<f64>()
            + p.b_eq.dot(&y);

        best_report = SolveReport {
            status: best_report.status,
            primal_objective: primal_obj,
            dual_objective: dual_obj,
            kkt_residuals: (prim_res, dual_res, mu),
            iterations: iter,
        };

        if std::env::var("SDP_TRACE").is_ok() {
            eprintln!(
                "iter {iter}: prim_res {prim_res:.3e} dual_res {dual_res:.3e} mu {mu:.3e} obj {primal_obj:.6e} x {:?} y {:?}",
                x.as_slice(), y.as_slice()
            );
        }
        if !primal_obj.is_finite() || !mu.is_finite() {
            return Err(Error::Solver {
                status: "ill_conditioned".into(),
                message: "non-finite iterate".into(),
            });
        }

        let worst = prim_res.max(dual_res).max(mu);
        if worst < best_residual {
            best_residual = worst;
            best_x = x.clone();
            stall = 0;
        } else {
            stall += 1;
        }
        if worst < tol || (stall >= 15 && best_residual < (1e4 * tol).min(1e-5)) {
            best_report.status = SolverStatus::Optimal;
            return Ok((best_x, best_report));
        }

        // Infeasibility heuristic: dual objective divergence with tiny
        // residuals in the homogenized sense — the dual iterate acts as a
        // certificate. Conservative threshold; genuine slow convergence
        // hits max_iter instead.
        let z_norm: f64 = state.iter().map(|st| st.z.norm()).sum();
        if z_norm > 1e12 && dual_obj > 1e8 * norm_b {
            return Err(Error::Infeasible(format!(
                "dual certificate detected at iteration {iter} (dual objective {dual_obj:.3e})"
            )));
        }

        // Numerical breakdown close to the optimum: return the best
        // near-optimal iterate rather than failing.
        let salvage = best_residual < (1e4 * tol).min(1e-5);

        // NT scaling per block.
        let mut scalings = Vec::with_capacity(p.blocks.len());
        for st in &state {
            match nt_scaling(&st.s, &st.z) {
                Some(sc) => scalings.push(sc),
                None if salvage => {
                    best_report.status = SolverStatus::Optimal;
                    return Ok((best_x.clone(), best_report));
                }
                None => {
                    return Err(Error::Solver {
                        status: "ill_conditioned".into(),
                        message: format!("scaling-point breakdown at iteration {iter}"),
                    })
                }
            }
        }

        // Reduced Newton matrix H_{ik} = Σ_j ⟨F_ji, W⁻¹ F_jk W⁻¹⟩.
        let mut h = DMatrix::<f64>::zeros(n, n);
        // Cache W⁻¹ F_ji W⁻¹ per term for both H and the RHS work.
        let conjugated: Vec<Vec<DMatrix<f64>>> = p
            .blocks
            .iter()
            .zip(&scalings)
            .map(|(b, sc)| {
                b.terms
                    .iter()
                    .map(|(_, f)| symmetrize(&(&sc.w_inv * f * &sc.w_inv)))
                    .collect()
            })
            .collect();
        for (bi, b) in p.blocks.iter().enumerate() {
            for (ti, (i, _)) in b.terms.iter().enumerate() {
                let wfw = &conjugated[bi][ti];
                for (k, fk) in &b.terms {
                    // Symmetric fill; accumulate full matrix directly.
                    h[(*i, *k)] += frob_inner(wfw, fk);
                }
            }
        }
        // Tiny Tikhonov floor keeps redundant parameterizations solvable;
        // the bias it introduces is removed again by one pass of iterative
        // refinement against the raw matrix inside the Newton solve.
        let h_raw = symmetrize(&h);
        // The reduced matrix is a Gram matrix, so any factorization failure
        // is pure rounding: escalate the Tikhonov floor until it succeeds.
        // The refinement pass below removes the bias again.
        let mut h_floor = 1e-12 * h.diagonal().amax().max(1.0);
        let h_chol = loop {
            let mut h_reg = h_raw.clone();
            for i in 0..n {
                h_reg[(i, i)] += h_floor;
            }
            if let Some(c) = Cholesky::new(h_reg) {
                break Some(c);
            }
            h_floor *= 100.0;
            if h_floor > 1e-2 * h.diagonal().amax().max(1.0) {
                break None;
            }
        };
        let h_chol = match h_chol {
            Some(c) => c,
            None if salvage => {
                best_report.status = SolverStatus::Optimal;
                return Ok((best_x.clone(), best_report));
            }
            None => {
                return Err(Error::Solver {
                    status: "ill_conditioned".into(),
                    message: format!("Newton system not positive definite at iteration {iter}"),
                })
            }
        };

        let schur_chol = if n_eq > 0 {
            let h_inv_at = h_chol.solve(&p.a_eq.transpose());
            let mut schur = symmetrize(&(&p.a_eq * &h_inv_at));
            let floor = 1e-12 * schur.diagonal().amax().max(1.0);
            for i in 0..n_eq {
                schur[(i, i)] += floor;
            }
            match Cholesky::new(schur) {
                Some(c) => Some(c),
                None if salvage => {
                    best_report.status = SolverStatus::Optimal;
                    return Ok((best_x.clone(), best_report));
                }
                None => {
                    return Err(Error::Solver {
                        status: "ill_conditioned".into(),
                        message: format!(
                            "equality Schur complement failed at iteration {iter}"
                        ),
                    })
                }
            }
        } else {
            None
        };
        // Solve H·Δx − AᵀΔy = r₁, A·Δx = −r₂ with one refinement pass
        // against the unregularized reduced matrix.
        let solve_kkt = |r1: &DVector<f64>, r2: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
            let base = |r1: &DVector<f64>, r2: &DVector<f64>| {
                if let Some(sc) = &schur_chol {
                    let h_inv_r1 = h_chol.solve(r1);
                    let dy = sc.solve(&(-(&p.a_eq * &h_inv_r1 + r2)));
                    let dx = h_chol.solve(&(r1 + p.a_eq.transpose() * &dy));
                    (dx, dy)
                } else {
                    (h_chol.solve(r1), DVector::zeros(0))
                }
            };
            let (mut dx, mut dy) = base(r1, r2);
            let res1 = r1 - &h_raw * &dx + p.a_eq.transpose() * &dy;
            let res2 = r2 + &p.a_eq * &dx;
            let (ddx, ddy) = base(&res1, &res2);
            dx += ddx;
            dy += ddy;
            (dx, dy)
        };

        // One Newton solve for a given centering weight σ, reusing the
        // factorization. Returns (Δx, Δy, ΔS, ΔZ).
        let newton = |sigma: f64| -> (DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
            // g_i = Σ_j ⟨F_ji, W⁻¹(σμZ⁻¹ − S − r_p)W⁻¹⟩
            let targets: Vec<DMatrix<f64>> = p
                .blocks
                .iter()
                .zip(&state)
                .zip(&scalings)
                .zip(&r_p)
                .map(|(((_, st), sc), rp)| {
                    let inner = &sc.z_inv * (sigma * mu) - &st.s - rp;
                    symmetrize(&(&sc.w_inv * inner * &sc.w_inv))
                })
                .collect();
            let mut g = DVector::zeros(n);
            for (bi, b) in p.blocks.iter().enumerate() {
                for (i, f) in &b.terms {
                    g[*i] += frob_inner(&targets[bi], f);
                }
            }
            let rhs = &g - &r_d;
            let (dx, dy) = solve_kkt(&rhs, &r_e);
            let mut ds_all = Vec::with_capacity(p.blocks.len());
            let mut dz_all = Vec::with_capacity(p.blocks.len());
            for (bi, b) in p.blocks.iter().enumerate() {
                let mut ds = r_p[bi].clone();
                for (i, f) in &b.terms {
                    ds += f * dx[*i];
                }
                // ΔZ = W⁻¹(σμZ⁻¹ − S − ΔS)W⁻¹ = targets − W⁻¹ΔS_xW⁻¹ where
                // ΔS_x is the x-dependent part; targets already contain
                // −r_p, so subtract the conjugated Σ Δx·F term.
                let mut dz = targets[bi].clone();
                for (ti, (i, _)) in b.terms.iter().enumerate() {
                    dz -= &conjugated[bi][ti] * dx[*i];
                }
                ds_all.push(symmetrize(&ds));
                dz_all.push(symmetrize(&dz));
            }
            (dx, dy, ds_all, dz_all)
        };

        // Affine probe → centering weight.
        let (_, _, ds_aff, dz_aff) = newton(0.0);
        let mut ap = 1.0f64;
        let mut ad = 1.0f64;
        for (st, (ds, dz)) in state.iter().zip(ds_aff.iter().zip(&dz_aff)) {
            ap = ap.min(max_step(&st.s, ds, 1.0));
            ad = ad.min(max_step(&st.z, dz, 1.0));
        }
        let gap_aff: f64 = state
            .iter()
            .zip(ds_aff.iter().zip(&dz_aff))
            .map(|(st, (ds, dz))| frob_inner(&(&st.s + ds * ap), &(&st.z + dz * ad)))
            .sum();
        let mut sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

        // Infeasible-start safeguard: complementarity must not run ahead of
        // feasibility, or the iterates jam on the cone boundary while still
        // violating the linear constraints. When feasibility lags, hold the
        // gap with a strong centering weight.
        let res_measure = prim_res + dual_res;
        let (res0, mu0) = *reference.get_or_insert((res_measure.max(1e-10), mu.max(1e-10)));
        let gap_rel = mu / mu0;
        let bound = 0.3 * (res_measure / res0);
        if res_measure > (10.0 * tol).max(1e-7) && gap_rel < 1.5 * bound {
            // At or under the boundary: re-center upward so the slacks move
            // off the cone boundary and feasibility steps can lengthen.
            sigma = sigma.max((1.5 * bound / gap_rel).min(5.0));
        }

        // Corrector with the chosen centering.
        let (dx, dy, ds_all, dz_all) = newton(sigma);
        let mut ap = 1.0f64;
        let mut ad = 1.0f64;
        for (st, (ds, dz)) in state.iter().zip(ds_all.iter().zip(&dz_all)) {
            ap = ap.min(max_step(&st.s, ds, tau));
            ad = ad.min(max_step(&st.z, dz, tau));
        }

        // Neighborhood test: reject step lengths whose trial point drops
        // the normalized gap more than two orders of magnitude below the
        // normalized residuals; back both steps off together until balanced.
        let trial_measures = |ap: f64, ad: f64| -> (f64, f64) {
            let x_t = &x + &dx * ap;
            let y_t = &y + &dy * ad;
            let mut gap_t = 0.0;
            let mut prim_sq = 0.0;
            let mut r_d_t = p.c.clone();
            for ((b, st), (ds, dz)) in
                p.blocks.iter().zip(&state).zip(ds_all.iter().zip(&dz_all))
            {
                let s_t = &st.s + ds * ap;
                let z_t = &st.z + dz * ad;
                gap_t += frob_inner(&s_t, &z_t);
                prim_sq += (eval_block(b, &x_t) - &s_t).norm_squared();
                for (i, f) in &b.terms {
                    r_d_t[*i] -= frob_inner(&z_t, f);
                }
            }
            r_d_t -= p.a_eq.transpose() * &y_t;
            let res_t = (prim_sq.sqrt() + (&p.a_eq * &x_t - &p.b_eq).norm()) / norm_f0
                + r_d_t.norm() / norm_c;
            (gap_t / total_dim as f64, res_t)
        };
        for _ in 0..40 {
            let (mu_t, res_t) = trial_measures(ap, ad);
            if res_t <= (10.0 * tol).max(1e-7) || mu_t / mu0 >= 0.3 * (res_t / res0) {
                break;
            }
            ap *= 0.7;
            ad *= 0.7;
        }
        if std::env::var("SDP_TRACE").is_ok() {
            eprintln!("  sigma {sigma:.3e} ap {ap:.3e} ad {ad:.3e} dx {:?} dy {:?}", dx.as_slice(), dy.as_slice());
        }
        if ap <= 1e-14 || ad <= 1e-14 {
            if salvage {
                best_report.status = SolverStatus::Optimal;
                return Ok((best_x.clone(), best_report));
            }
            return Err(Error::Solver {
                status: "ill_conditioned".into(),
                message: format!("step length collapsed at iteration {iter}"),
            });
        }
        x += &dx * ap;
        y += &dy * ad;
        for (st, (ds, dz)) in state.iter_mut().zip(ds_all.iter().zip(&dz_all)) {
            st.s += ds * ap;
            st.z += dz * ad;
            // Rounding can leave either slack indefinite right at the cone
            // boundary, which freezes all later step lengths; nudge the
            // spectrum back inside.
            st.s = spectral_floor(&st.s);
            st.z = spectral_floor(&st.z);
        }
    }

    if best_residual < (1e4 * tol).min(1e-5) {
        best_report.status = SolverStatus::Optimal;
        return Ok((best_x, best_report));
    }
    best_report.status = SolverStatus::MaxIter;
    Err(Error::Solver {
        status: "max_iter".into(),
        message: format!(
            "no convergence in {max_iter} iterations (residuals {:?})",
            best_report.kkt_residuals
        ),
    })
}

impl SdpProblem {
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn min_trace_above_identity() {
        // min tr(X) s.t. X ⪰ I, X 2×2 symmetric → X = I.
        let mut b = SdpBuilder::new();
        let v = b.add_vars(3); // x00, x11, x01
        let (x00, x11, x01) = (v.start, v.start + 1, v.start + 2);
        b.add_objective(x00, 1.0);
        b.add_objective(x11, 1.0);
        let e00 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let e11 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let e01 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        b.add_lmi(
            -DMatrix::identity(2, 2),
            vec![(x00, e00.clone()), (x11, e11.clone()), (x01, e01.clone())],
        );
        let (x, rep) = solve_sdp(&b.build(), 1e-9).unwrap();
        assert_eq!(rep.status, SolverStatus::Optimal);
        assert_relative_eq!(x[x00] + x[x11], 2.0, max_relative = 1e-6);
        assert_relative_eq!(x[x01], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn scalar_box_constraint() {
        // min x s.t. diag(x, 1−x) ⪰ 0 → x = 0.
        let mut b = SdpBuilder::new();
        let v = b.add_vars(1);
        b.add_objective(v.start, 1.0);
        b.add_ineq(0.0, vec![(v.start, 1.0)]);
        b.add_ineq(1.0, vec![(v.start, -1.0)]);
        let (x, rep) = solve_sdp(&b.build(), 1e-9).unwrap();
        assert_eq!(rep.status, SolverStatus::Optimal);
        assert_relative_eq!(x[0], 0.0, epsilon = 1e-7);
    }

    #[test]
    fn equality_constrained_projection() {
        // min (x−2)² via epigraph: min t s.t. [[t, x−2],[x−2, 1]] ⪰ 0,
        // with x constrained to 5 → t = 9.
        let mut b = SdpBuilder::new();
        let v = b.add_vars(2); // x, t
        let (x, t) = (v.start, v.start + 1);
        b.add_objective(t, 1.0);
        let f0 = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, -2.0, 1.0]);
        let fx = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let ft = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        b.add_lmi(f0, vec![(x, fx), (t, ft)]);
        b.add_eq(vec![(x, 1.0)], 5.0);
        let (sol, rep) = solve_sdp(&b.build(), 1e-9).unwrap();
        assert_eq!(rep.status, SolverStatus::Optimal);
        assert_relative_eq!(sol[t], 9.0, max_relative = 1e-6);
    }

    #[test]
    fn weak_duality_at_optimum() {
        let mut b = SdpBuilder::new();
        let v = b.add_vars(1);
        b.add_objective(v.start, 1.0);
        b.add_ineq(-3.0, vec![(v.start, 1.0)]); // x ≥ 3
        let (x, rep) = solve_sdp(&b.build(), 1e-10).unwrap();
        assert_relative_eq!(x[0], 3.0, max_relative = 1e-7);
        assert!(rep.dual_objective <= rep.primal_objective + 1e-7);
        assert_relative_eq!(rep.dual_objective, rep.primal_objective, max_relative = 1e-5);
    }

    #[test]
    fn infeasible_problem_is_reported() {
        // x ≥ 1 and x ≤ 0 simultaneously.
        let mut b = SdpBuilder::new();
        let v = b.add_vars(1);
        b.add_objective(v.start, 1.0);
        b.add_ineq(-1.0, vec![(v.start, 1.0)]);
        b.add_ineq(0.0, vec![(v.start, -1.0)]);
        let err = solve_sdp(&b.build(), 1e-8).unwrap_err();
        assert!(
            matches!(err, Error::Infeasible(_) | Error::Solver { .. }),
            "unexpected: {err}"
        );
    }

    #[test]
    fn deterministic_repeat() {
        let build = || {
            let mut b = SdpBuilder::new();
            let v = b.add_vars(2);
            b.add_objective(v.start, 1.0);
            b.add_objective(v.start + 1, 0.5);
            b.add_ineq(-1.0, vec![(v.start, 1.0), (v.start + 1, 0.25)]);
            b.add_ineq(2.0, vec![(v.start, -1.0)]);
            b.add_ineq(2.0, vec![(v.start + 1, -1.0)]);
            b.add_ineq(0.0, vec![(v.start + 1, 1.0)]);
            b.build()
        };
        let (x1, _) = solve_sdp(&build(), 1e-9).unwrap();
        let (x2, _) = solve_sdp(&build(), 1e-9).unwrap();
        assert_eq!(x1, x2);
    }
}
