//! Digital beamformer designs over the transmit covariance.
//!
//! Six designs are provided, all parameterized by the tradeoff weight α
//! (α = 1 favors positioning, α = 0 favors sensing):
//!
//! * WCRB — minimize the weighted sum of the two position error bounds
//!   directly, as a semidefinite program over the compressed covariance
//!   Λ (full-dimension) or over per-codeword powers ρ (power allocation).
//! * WBF — minimize the weighted beamformer mismatch against the two
//!   single-objective optima, via lifted trust-region blocks.
//! * WCM — minimize the weighted covariance mismatch against the two
//!   single-objective covariances, as a quadratic cone program.
//!
//! Every design works in the span of the transmit design basis U (the
//! steering vectors at the path angles and their derivatives), which is
//! where optimal covariances provably live, and the power budget
//! tr(F Fᴴ) = P_B/M is enforced exactly. Internally variables are
//! rescaled — unit-norm basis columns, unit total power, and Jacobi
//! scaling of the information matrices — so the interior-point core sees
//! well-conditioned data regardless of the physical power level.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::config::ScenarioConfig;
use crate::conic::herm::HermVar;
use crate::conic::sdp::SdpBuilder;
use crate::conic::trust_region::{column_block, solve_trust_region};
use crate::conic::{solve_sdp, solve_sdp_warm, SolverStatus};
use crate::error::{Error, Result};
use crate::fim::{crb_bp, crb_ms, position_fim, ChannelFim, FimFactors};
use crate::scenario::{build_codebook, ChannelParamSet};

/// Interior-point tolerance used by all design solves.
const SDP_TOL: f64 = 1e-8;
/// Hermitian symmetry tolerance on covariance matrices.
const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalue floor (relative to trace) below which a covariance is
/// rejected as indefinite.
const EIGEN_FLOOR: f64 = 1e-10;
/// Slack allowed on the power budget.
const POWER_TOL: f64 = 1e-8;
/// Eigenvalues below this fraction of the trace are treated as zero rank
/// during beamformer recovery.
const RECOVERY_RANK_CUT: f64 = 1e-12;
/// Relative eigenvalue threshold for identifying the active face of a
/// mismatch solution before the exact polish step.
const FACE_CUT: f64 = 1e-5;

/// Identifies which design produced a beamformer set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DesignMethod {
    FdbWcrb,
    CpaWcrb,
    FdbWbf,
    CpaWbf,
    FdbWcm,
    CpaWcm,
    AnalogFdb,
    AnalogCpa,
}

impl DesignMethod {
    pub const ALL: [DesignMethod; 8] = [
        DesignMethod::FdbWcrb,
        DesignMethod::CpaWcrb,
        DesignMethod::FdbWbf,
        DesignMethod::CpaWbf,
        DesignMethod::FdbWcm,
        DesignMethod::CpaWcm,
        DesignMethod::AnalogFdb,
        DesignMethod::AnalogCpa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DesignMethod::FdbWcrb => "fdb-wcrb",
            DesignMethod::CpaWcrb => "cpa-wcrb",
            DesignMethod::FdbWbf => "fdb-wbf",
            DesignMethod::CpaWbf => "cpa-wbf",
            DesignMethod::FdbWcm => "fdb-wcm",
            DesignMethod::CpaWcm => "cpa-wcm",
            DesignMethod::AnalogFdb => "analog-fdb",
            DesignMethod::AnalogCpa => "analog-cpa",
        }
    }
}

impl std::fmt::Display for DesignMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DesignMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DesignMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::ConfigParse(format!("unknown method '{s}'")))
    }
}

/// Transmit covariance V = F Fᴴ, validated on construction.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    pub matrix: DMatrix<Complex64>,
}

impl CovarianceMatrix {
    /// Validate Hermitian symmetry, near-positive-semidefiniteness, and
    /// the power budget before accepting the matrix.
    pub fn validated(matrix: DMatrix<Complex64>, power_budget: f64) -> Result<Self> {
        let asym = (&matrix - matrix.adjoint()).norm();
        let scale = matrix.norm().max(f64::MIN_POSITIVE);
        if asym > HERMITIAN_TOL * scale {
            return Err(Error::Invariant {
                field: "covariance",
                message: format!("asymmetry {asym:.3e} exceeds tolerance"),
            });
        }
        let herm = (&matrix + matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let trace = herm.trace().re;
        if !trace.is_finite() || trace < -POWER_TOL {
            return Err(Error::NonFinite("covariance trace"));
        }
        let eig = herm.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        if min_eig < -EIGEN_FLOOR * trace.max(f64::MIN_POSITIVE) {
            return Err(Error::Invariant {
                field: "covariance",
                message: format!("eigenvalue {min_eig:.3e} below PSD floor"),
            });
        }
        if trace > power_budget + POWER_TOL {
            return Err(Error::Invariant {
                field: "covariance",
                message: format!("trace {trace:.6e} exceeds budget {power_budget:.6e}"),
            });
        }
        Ok(Self { matrix: herm })
    }
}

/// A set of per-slot beamformers F (one column per slot).
#[derive(Debug, Clone)]
pub struct BeamformerSet {
    pub matrix: DMatrix<Complex64>,
    pub method: DesignMethod,
    pub alpha: f64,
}

impl BeamformerSet {
    /// Total transmit power tr(F Fᴴ).
    pub fn power(&self) -> f64 {
        self.matrix.norm_squared()
    }

    /// Transmit covariance F Fᴴ.
    pub fn covariance(&self) -> DMatrix<Complex64> {
        &self.matrix * self.matrix.adjoint()
    }
}

/// Decompose a covariance into per-slot beamformer columns via the
/// eigendecomposition, columns ordered by descending eigenvalue and
/// phase-normalized so the first significant entry is real-positive.
pub fn recover_beamformers(cov: &CovarianceMatrix, slots: usize) -> Result<DMatrix<Complex64>> {
    let n = cov.matrix.nrows();
    let trace = cov.matrix.trace().re;
    let mut f = DMatrix::zeros(n, slots);
    if trace <= 0.0 {
        return Ok(f);
    }
    let eig = cov.matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues")
    });
    let kept: Vec<usize> =
        order.into_iter().filter(|&i| eig.eigenvalues[i] > RECOVERY_RANK_CUT * trace).collect();
    if kept.len() > slots {
        return Err(Error::DecompositionInfeasible { rank: kept.len(), slots });
    }
    for (col, &i) in kept.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).clone_owned()
            * Complex64::new(eig.eigenvalues[i].sqrt(), 0.0);
        let peak = v.iter().map(|e| e.norm()).fold(0.0, f64::max);
        if let Some(lead) = v.iter().find(|e| e.norm() > 1e-9 * peak) {
            let rot = (lead / lead.norm()).conj();
            v *= rot;
        }
        f.set_column(col, &v);
    }
    Ok(f)
}

/// Real symmetric matrix variable over the scalar SDP core: one variable
/// per upper-triangle entry.
struct SymVar {
    dim: usize,
    start: usize,
}

impl SymVar {
    fn new(b: &mut SdpBuilder, dim: usize) -> Self {
        let range = b.add_vars(dim * (dim + 1) / 2);
        Self { dim, start: range.start }
    }

    /// (variable index, row, column) for every upper-triangle entry.
    fn entries(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.dim * (self.dim + 1) / 2);
        let mut var = self.start;
        for i in 0..self.dim {
            for j in i..self.dim {
                out.push((var, i, j));
                var += 1;
            }
        }
        out
    }

}

/// Symmetric basis matrix of size `dim` with ±1 at (i, j)/(j, i), placed
/// at `offset` inside a zero matrix.
fn sym_basis(dim: usize, i: usize, j: usize, offset: usize, sign: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    m[(offset + i, offset + j)] = sign;
    m[(offset + j, offset + i)] = sign;
    m
}

/// Read the d² real parameters of a Hermitian matrix in the ordering used
/// by [`HermVar`]: diagonal entries first, then (re, im) per strict
/// upper-triangle entry.
fn herm_params(m: &DMatrix<Complex64>) -> DVector<f64> {
    let d = m.nrows();
    let mut x = DVector::zeros(d * d);
    let mut idx = 0;
    for i in 0..d {
        x[idx] = m[(i, i)].re;
        idx += 1;
    }
    for i in 0..d {
        for j in (i + 1)..d {
            x[idx] = m[(i, j)].re;
            x[idx + 1] = m[(i, j)].im;
            idx += 2;
        }
    }
    x
}

/// Hermitian basis elements in [`HermVar`] parameter order, without
/// registering SDP variables.
/// Orthonormal basis of the numerically observable column span.
fn span_basis(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.as_ref().ok_or_else(|| Error::SingularFim("span basis svd failed".into()))?;
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Err(Error::DegenerateGeometry("zero design basis".into()));
    }
    let cols: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s > 1e-9 * smax)
        .map(|(i, _)| u.column(i).clone_owned())
        .collect();
    Ok(DMatrix::from_columns(&cols))
}

fn herm_basis(dim: usize) -> Vec<DMatrix<Complex64>> {
    let mut b = SdpBuilder::new();
    HermVar::new(&mut b, dim).basis_elements().into_iter().map(|(_, e)| e).collect()
}

/// Guiding solutions: the two single-objective optima of one scheme.
#[derive(Debug, Clone)]
struct Guides {
    /// Covariance at α = 1 (positioning-optimal).
    v_hi: DMatrix<Complex64>,
    /// Covariance at α = 0 (sensing-optimal).
    v_lo: DMatrix<Complex64>,
    /// Beamformers U·Ω for the α = 1 optimum, 2K+2 columns.
    f_hi: DMatrix<Complex64>,
    /// Beamformers for the α = 0 optimum, 2K+2 columns.
    f_lo: DMatrix<Complex64>,
}

/// Per-scenario design context: precomputed codebook, Fisher-information
/// coefficient matrices, scalings, and lazily cached guiding solutions.
pub struct DigitalDesigner {
    cfg: ScenarioConfig,
    params: ChannelParamSet,
    /// Raw design basis U (N_B × (2K+2)).
    codebook: DMatrix<Complex64>,
    /// U with unit-norm columns.
    u_norm: DMatrix<Complex64>,
    /// Gram of the normalized basis.
    gram_norm: DMatrix<Complex64>,
    col_norms: Vec<f64>,
    /// Power budget P_B/M (W).
    power: f64,
    /// Scaled positioning-FIM coefficient per basis element (4K+6 sq).
    coeff_bp: Vec<DMatrix<f64>>,
    /// Scaled sensing-FIM coefficient per basis element (4K+4 sq).
    coeff_ms: Vec<DMatrix<f64>>,
    /// Power-allocation coefficients, one per codebook column.
    cpa_coeff_bp: Vec<DMatrix<f64>>,
    cpa_coeff_ms: Vec<DMatrix<f64>>,
    /// Jacobi scalings of the two position FIMs.
    scale_bp: DVector<f64>,
    scale_ms: DVector<f64>,
    /// Cholesky factor of each link's effective reference information
    /// (head Schur complement in scaled coordinates) and the matching
    /// objective weight L⁻¹·D²·L⁻ᵀ that maps the preconditioned inverse
    /// head back to the physical error trace.
    head_l_bp: DMatrix<f64>,
    head_l_ms: DMatrix<f64>,
    w_obj_bp: DMatrix<f64>,
    w_obj_ms: DMatrix<f64>,
    fdb_guides: OnceLock<std::result::Result<Guides, String>>,
    cpa_guides: OnceLock<std::result::Result<Guides, String>>,
}

/// Sensing-side retained coordinate count (UE plus targets).
fn ms_head(cfg: &ScenarioConfig) -> usize {
    2 * cfg.n_targets + 2
}

impl DigitalDesigner {
    pub fn new(params: &ChannelParamSet, cfg: &ScenarioConfig) -> Result<Self> {
        let codebook = build_codebook(cfg, params);
        Self::with_basis(params, cfg, codebook)
    }

    /// Designer over a caller-supplied design basis instead of the
    /// steering/derivative codebook — used for constrained (e.g.
    /// constant-modulus) codebooks.
    pub fn with_basis(
        params: &ChannelParamSet,
        cfg: &ScenarioConfig,
        codebook: DMatrix<Complex64>,
    ) -> Result<Self> {
        cfg.validate()?;
        if codebook.nrows() != cfg.n_tx_bs || codebook.ncols() == 0 {
            return Err(Error::Invariant {
                field: "codebook",
                message: format!(
                    "basis is {}x{}, expected {} rows",
                    codebook.nrows(),
                    codebook.ncols(),
                    cfg.n_tx_bs
                ),
            });
        }
        let d = codebook.ncols();
        let col_norms: Vec<f64> = (0..d).map(|l| codebook.column(l).norm()).collect();
        if col_norms.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::DegenerateGeometry("zero-norm codebook column".into()));
        }
        let mut u_norm = codebook.clone();
        for (l, &s) in col_norms.iter().enumerate() {
            let col = u_norm.column(l) / Complex64::new(s, 0.0);
            u_norm.set_column(l, &col);
        }
        let gram_norm = u_norm.adjoint() * &u_norm;
        let power = cfg.power_per_subcarrier();

        let factors_bp = crate::fim::bp_factors(cfg, params);
        let factors_ms = crate::fim::ms_factors(cfg, params);
        let jac_bp = crate::fim::jacobian_bp(params, cfg);
        let jac_ms = crate::fim::jacobian_ms(params, cfg);

        // Jacobi scaling from the isotropic full-power reference design.
        let v_ref = DMatrix::from_diagonal_element(
            cfg.n_tx_bs,
            cfg.n_tx_bs,
            Complex64::new(power / cfg.n_tx_bs as f64, 0.0),
        );
        let scale_of = |factors: &FimFactors,
                        jac: &DMatrix<f64>,
                        head: usize|
         -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
            let pf = position_fim(&ChannelFim { matrix: factors.fim(&v_ref)? }, jac)?;
            let n = pf.matrix.nrows();
            let mut s = DVector::zeros(n);
            for i in 0..n {
                let v = pf.matrix[(i, i)];
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::SingularFim(format!(
                        "reference information diagonal {i} is {v:.3e}"
                    )));
                }
                s[i] = 1.0 / v.sqrt();
            }
            // Effective head information of the scaled reference FIM; its
            // Cholesky factor preconditions the bound variable so the
            // design SDP works with O(1) blocks.
            let scaled = DMatrix::from_fn(n, n, |i, j| pf.matrix[(i, j)] * s[i] * s[j]);
            let a = scaled.view((0, 0), (head, head)).into_owned();
            let bmat = scaled.view((0, head), (head, n - head)).into_owned();
            let c = scaled.view((head, head), (n - head, n - head)).into_owned();
            let c_chol = c.clone().cholesky().ok_or_else(|| {
                Error::SingularFim("reference nuisance information not positive definite".into())
            })?;
            let e_ref = &a - &bmat * c_chol.solve(&bmat.transpose());
            let e_sym = (&e_ref + e_ref.transpose()) * 0.5;
            let l = e_sym.cholesky().ok_or_else(|| {
                Error::SingularFim("reference effective information not positive definite".into())
            })?;
            let l_mat = l.l();
            let mut d_head = DMatrix::zeros(head, head);
            for i in 0..head {
                d_head[(i, i)] = s[i] * s[i];
            }
            let l_inv = l_mat
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::SingularFim("singular head preconditioner".into()))?;
            let w_obj = &l_inv * d_head * l_inv.transpose();
            Ok((s, l_mat, w_obj))
        };
        let (scale_bp, head_l_bp, w_obj_bp) = scale_of(&factors_bp, &jac_bp, 2)?;
        let (scale_ms, head_l_ms, w_obj_ms) = scale_of(&factors_ms, &jac_ms, ms_head(cfg))?;

        // Position-FIM coefficient of each covariance basis element: the
        // FIM is linear in V, so the design problems only need these.
        let gs = codebook.adjoint() * &u_norm;
        let coeff_of = |v_basis: &DMatrix<Complex64>,
                        factors: &FimFactors,
                        jac: &DMatrix<f64>,
                        scale: &DVector<f64>|
         -> Result<DMatrix<f64>> {
            let w = &gs * v_basis * gs.adjoint() * Complex64::new(power, 0.0);
            let pf = position_fim(&ChannelFim { matrix: factors.fim_given_w(&w)? }, jac)?;
            let n = pf.matrix.nrows();
            Ok(DMatrix::from_fn(n, n, |i, j| pf.matrix[(i, j)] * scale[i] * scale[j]))
        };

        let basis = herm_basis(d);
        let mut coeff_bp = Vec::with_capacity(basis.len());
        let mut coeff_ms = Vec::with_capacity(basis.len());
        for e in &basis {
            coeff_bp.push(coeff_of(e, &factors_bp, &jac_bp, &scale_bp)?);
            coeff_ms.push(coeff_of(e, &factors_ms, &jac_ms, &scale_ms)?);
        }
        let mut cpa_coeff_bp = Vec::with_capacity(d);
        let mut cpa_coeff_ms = Vec::with_capacity(d);
        for l in 0..d {
            let mut e = DMatrix::zeros(d, d);
            e[(l, l)] = Complex64::new(1.0, 0.0);
            cpa_coeff_bp.push(coeff_of(&e, &factors_bp, &jac_bp, &scale_bp)?);
            cpa_coeff_ms.push(coeff_of(&e, &factors_ms, &jac_ms, &scale_ms)?);
        }

        Ok(Self {
            cfg: cfg.clone(),
            params: params.clone(),
            codebook,
            u_norm,
            gram_norm,
            col_norms,
            power,
            coeff_bp,
            coeff_ms,
            cpa_coeff_bp,
            cpa_coeff_ms,
            scale_bp,
            scale_ms,
            head_l_bp,
            head_l_ms,
            w_obj_bp,
            w_obj_ms,
            fdb_guides: OnceLock::new(),
            cpa_guides: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ChannelParamSet {
        &self.params
    }

    pub fn codebook(&self) -> &DMatrix<Complex64> {
        &self.codebook
    }

    /// Both error bounds (m²) for a transmit covariance.
    pub fn bounds(&self, cov: &DMatrix<Complex64>) -> Result<(f64, f64)> {
        Ok((crb_bp(&self.params, &self.cfg, cov)?, crb_ms(&self.params, &self.cfg, cov)?))
    }

    /// Weighted-sum bound objective α·CRB_BP + (1−α)·CRB_MS.
    pub fn weighted_bound(&self, alpha: f64, cov: &DMatrix<Complex64>) -> Result<f64> {
        let bp = if alpha > 0.0 { crb_bp(&self.params, &self.cfg, cov)? } else { 0.0 };
        let ms = if alpha < 1.0 { crb_ms(&self.params, &self.cfg, cov)? } else { 0.0 };
        Ok(alpha * bp + (1.0 - alpha) * ms)
    }

    fn check_alpha(alpha: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Invariant {
                field: "alpha",
                message: format!("tradeoff weight {alpha} outside [0, 1]"),
            });
        }
        Ok(())
    }

    /// Solve the weighted-bound SDP. Returns the covariance in physical
    /// units, plus the power split per codebook column when `cpa` is set.
    fn wcrb_cov(&self, alpha: f64, cpa: bool) -> Result<(DMatrix<Complex64>, Option<DVector<f64>>)> {
        Self::check_alpha(alpha)?;
        let d = self.codebook.ncols();
        let mut b = SdpBuilder::new();

        // Covariance variables (normalized units: unit basis, unit power).
        // The uniform power split is strictly feasible and seeds the solver.
        let mut x0: Vec<(usize, f64)> = Vec::new();
        let (herm, rho_vars, lam_coeffs) = if cpa {
            let range = b.add_vars(d);
            let vars: Vec<usize> = range.collect();
            for &v in &vars {
                b.add_ineq(0.0, vec![(v, 1.0)]);
                x0.push((v, 1.0 / d as f64));
            }
            b.add_eq(vars.iter().map(|&v| (v, 1.0)).collect(), 1.0);
            let coeffs: Vec<(usize, usize)> = vars.iter().cloned().enumerate().collect();
            (None, Some(vars), coeffs)
        } else {
            let hv = HermVar::new(&mut b, d);
            hv.add_psd(&mut b, &DMatrix::zeros(d, d));
            b.add_eq(hv.linear_coeffs(&self.gram_norm), 1.0);
            let lam0 =
                DMatrix::from_diagonal_element(d, d, Complex64::new(1.0 / d as f64, 0.0));
            let coeffs: Vec<(usize, usize)> = hv
                .basis_elements()
                .into_iter()
                .map(|(v, e)| {
                    let num: f64 =
                        e.iter().zip(lam0.iter()).map(|(a, b)| (a.conj() * b).re).sum();
                    let den: f64 = e.iter().map(|a| a.norm_sqr()).sum();
                    x0.push((v, num / den));
                    v
                })
                .enumerate()
                .collect();
            (Some(hv), None, coeffs)
        };
        let lam0_vals: Vec<f64> = x0.iter().map(|&(_, v)| v).collect();
        let coeff_set = |bp: bool, basis_idx: usize| -> &DMatrix<f64> {
            match (cpa, bp) {
                (true, true) => &self.cpa_coeff_bp[basis_idx],
                (true, false) => &self.cpa_coeff_ms[basis_idx],
                (false, true) => &self.coeff_bp[basis_idx],
                (false, false) => &self.coeff_ms[basis_idx],
            }
        };

        // One information-dominance LMI plus one epigraph block per link.
        let add_link = |b: &mut SdpBuilder, x0: &mut Vec<(usize, f64)>, bp: bool, weight: f64| {
            let (dim, head, head_l, w_obj) = if bp {
                (self.scale_bp.len(), 2, &self.head_l_bp, &self.w_obj_bp)
            } else {
                (self.scale_ms.len(), ms_head(&self.cfg), &self.head_l_ms, &self.w_obj_ms)
            };
            let u_var = SymVar::new(b, head);
            let s_var = SymVar::new(b, head);
            let mut info_terms: Vec<(usize, DMatrix<f64>)> = lam_coeffs
                .iter()
                .map(|&(idx, var)| (var, coeff_set(bp, idx).clone()))
                .collect();
            // The bound variable lives in coordinates preconditioned by the
            // reference effective information L·Lᵀ, so every block here is
            // O(1): the dominance constraint subtracts L·E_ij·Lᵀ per entry.
            for (var, i, j) in u_var.entries() {
                let m = head_l * sym_basis(head, i, j, 0, 1.0) * head_l.transpose();
                let mut full = DMatrix::zeros(dim, dim);
                full.view_mut((0, 0), (head, head)).copy_from(&(-&m));
                info_terms.push((var, full));
            }
            b.add_lmi(DMatrix::zeros(dim, dim), info_terms);

            let mut f0 = DMatrix::zeros(2 * head, 2 * head);
            for i in 0..head {
                f0[(i, head + i)] = 1.0;
                f0[(head + i, i)] = 1.0;
            }
            let mut epi_terms: Vec<(usize, DMatrix<f64>)> = Vec::new();
            for (var, i, j) in u_var.entries() {
                epi_terms.push((var, sym_basis(2 * head, i, j, 0, 1.0)));
            }
            for (var, i, j) in s_var.entries() {
                epi_terms.push((var, sym_basis(2 * head, i, j, head, 1.0)));
            }
            b.add_lmi(f0, epi_terms);
            // Physical error trace = tr(W·S) with W = L⁻¹·D²·L⁻ᵀ.
            for (var, i, j) in s_var.entries() {
                let c = if i == j { w_obj[(i, i)] } else { 2.0 * w_obj[(i, j)] };
                if c != 0.0 {
                    b.add_objective(var, weight * c);
                }
            }

            // Seed the bound at half the seed design's effective head
            // information, which keeps every block strictly inside the cone.
            let mut f_acc = DMatrix::<f64>::zeros(dim, dim);
            for (&(idx, _), &v) in lam_coeffs.iter().zip(&lam0_vals) {
                f_acc += coeff_set(bp, idx) * v;
            }
            let a = f_acc.view((0, 0), (head, head)).into_owned();
            let bm = f_acc.view((0, head), (head, dim - head)).into_owned();
            let c = f_acc.view((head, head), (dim - head, dim - head)).into_owned();
            if let Some(c_chol) = c.cholesky() {
                let e0 = (&a - &bm * c_chol.solve(&bm.transpose())).clone();
                let e0 = (&e0 + e0.transpose()) * 0.5;
                let x1 = head_l
                    .solve_lower_triangular(&e0)
                    .and_then(|t| head_l.solve_lower_triangular(&t.transpose()));
                if let Some(m_t) = x1 {
                    let m = (m_t.transpose() + &m_t) * 0.5;
                    if let Some(m_chol) = m.clone().cholesky() {
                        let m_inv = m_chol.inverse();
                        for (var, i, j) in u_var.entries() {
                            x0.push((var, 0.5 * m[(i, j)]));
                        }
                        for (var, i, j) in s_var.entries() {
                            x0.push((var, 2.5 * m_inv[(i, j)]));
                        }
                    }
                }
            }
        };
        if alpha > 0.0 {
            add_link(&mut b, &mut x0, true, alpha);
        }
        if alpha < 1.0 {
            add_link(&mut b, &mut x0, false, 1.0 - alpha);
        }

        let prob = b.build();
        let mut warm = DVector::zeros(prob.n_vars());
        for &(var, v) in &x0 {
            warm[var] = v;
        }
        let (x, report) = solve_sdp_warm(&prob, SDP_TOL, &warm)?;
        if report.status != SolverStatus::Optimal {
            return Err(Error::Solver {
                status: "wcrb",
                message: format!("design solve ended with status {}", report.status),
            });
        }

        if let Some(vars) = rho_vars {
            // Clip solver noise and land exactly on the power budget.
            let mut rho_norm = DVector::from_fn(d, |l, _| x[vars[l]].max(0.0));
            let total = rho_norm.sum();
            if !(total > 0.0) {
                return Err(Error::Solver {
                    status: "wcrb",
                    message: "degenerate power split".into(),
                });
            }
            rho_norm /= total;
            let mut v = DMatrix::zeros(self.cfg.n_tx_bs, self.cfg.n_tx_bs);
            for l in 0..d {
                let col = self.u_norm.column(l);
                v += col * col.adjoint() * Complex64::new(self.power * rho_norm[l], 0.0);
            }
            // Physical per-column powers for F = U diag(√ρ).
            let rho = DVector::from_fn(d, |l, _| {
                self.power * rho_norm[l] / (self.col_norms[l] * self.col_norms[l])
            });
            Ok((v, Some(rho)))
        } else {
            let lam = herm.expect("herm variable present").value(&x);
            let v = &self.u_norm * lam * self.u_norm.adjoint() * Complex64::new(self.power, 0.0);
            let v = (&v + v.adjoint()) * Complex64::new(0.5, 0.0);
            // Exact-feasibility polish: drop negative solver noise from the
            // spectrum and rescale onto the power budget, so downstream
            // fits of this matrix can reproduce it to round-off.
            let eig = v.symmetric_eigen();
            let mut clean = DMatrix::zeros(self.cfg.n_tx_bs, self.cfg.n_tx_bs);
            let mut trace = 0.0;
            for (k, &lam_k) in eig.eigenvalues.iter().enumerate() {
                if lam_k > 0.0 {
                    let q = eig.eigenvectors.column(k);
                    clean += q * q.adjoint() * Complex64::new(lam_k, 0.0);
                    trace += lam_k;
                }
            }
            if !(trace > 0.0) {
                return Err(Error::Solver {
                    status: "wcrb",
                    message: "degenerate covariance".into(),
                });
            }
            clean *= Complex64::new(self.power / trace, 0.0);
            Ok((clean, None))
        }
    }

    /// Weighted-bound design over the full compressed covariance.
    pub fn fdb_wcrb(&self, alpha: f64) -> Result<(CovarianceMatrix, BeamformerSet)> {
        let (v, _) = self.wcrb_cov(alpha, false)?;
        let cov = CovarianceMatrix::validated(v, self.power)?;
        let f = recover_beamformers(&cov, self.cfg.n_slots)?;
        Ok((cov, BeamformerSet { matrix: f, method: DesignMethod::FdbWcrb, alpha }))
    }

    /// Weighted-bound design restricted to per-codeword power allocation.
    pub fn cpa_wcrb(&self, alpha: f64) -> Result<(DVector<f64>, CovarianceMatrix, BeamformerSet)> {
        let (v, rho) = self.wcrb_cov(alpha, true)?;
        let rho = rho.expect("power vector present");
        let cov = CovarianceMatrix::validated(v, self.power)?;
        let f = self.power_allocation_bf(&rho, DesignMethod::CpaWcrb, alpha);
        Ok((rho, cov, f))
    }

    /// F = U diag(√ρ), zero-padded to the slot count.
    fn power_allocation_bf(&self, rho: &DVector<f64>, method: DesignMethod, alpha: f64) -> BeamformerSet {
        let d = self.codebook.ncols();
        let mut f = DMatrix::zeros(self.cfg.n_tx_bs, self.cfg.n_slots);
        for l in 0..d {
            let col = self.codebook.column(l) * Complex64::new(rho[l].max(0.0).sqrt(), 0.0);
            f.set_column(l, &col);
        }
        BeamformerSet { matrix: f, method, alpha }
    }

    fn guides(&self, cpa: bool) -> Result<&Guides> {
        let cell = if cpa { &self.cpa_guides } else { &self.fdb_guides };
        let res = cell.get_or_init(|| {
            let build = || -> Result<Guides> {
                let d = self.codebook.ncols();
                let (v_hi, rho_hi) = self.wcrb_cov(1.0, cpa)?;
                let (v_lo, rho_lo) = self.wcrb_cov(0.0, cpa)?;
                let as_bf = |v: &DMatrix<Complex64>, rho: &Option<DVector<f64>>| -> Result<DMatrix<Complex64>> {
                    if let Some(rho) = rho {
                        let mut f = DMatrix::zeros(self.cfg.n_tx_bs, d);
                        for l in 0..d {
                            let col =
                                self.codebook.column(l) * Complex64::new(rho[l].max(0.0).sqrt(), 0.0);
                            f.set_column(l, &col);
                        }
                        Ok(f)
                    } else {
                        let cov = CovarianceMatrix::validated(v.clone(), self.power)?;
                        recover_beamformers(&cov, d)
                    }
                };
                let f_hi = as_bf(&v_hi, &rho_hi)?;
                let f_lo = as_bf(&v_lo, &rho_lo)?;
                Ok(Guides { v_hi, v_lo, f_hi, f_lo })
            };
            build().map_err(|e| e.to_string())
        });
        res.as_ref().map_err(|msg| Error::Solver { status: "guides", message: msg.clone() })
    }

    /// Single-objective optimal covariances (α = 1, α = 0), used as guides
    /// by the mismatch designs and by the analog designs.
    pub fn guide_covariances(&self) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
        let g = self.guides(false)?;
        Ok((g.v_hi.clone(), g.v_lo.clone()))
    }

    /// Weighted beamformer-mismatch design (full dimension). Also returns
    /// the spectral ratios λ₂/λ₁ of the lifted trust-region blocks.
    pub fn fdb_wbf_with_diagnostics(&self, alpha: f64) -> Result<(BeamformerSet, Vec<f64>)> {
        Self::check_alpha(alpha)?;
        let g = self.guides(false)?;
        let d = self.codebook.ncols();
        let sqrt_p = self.power.sqrt();
        // Blend target in normalized units; cost vectors x_l = U_nᴴ t_l.
        let target = (&g.f_hi * Complex64::new(alpha / sqrt_p, 0.0))
            + (&g.f_lo * Complex64::new((1.0 - alpha) / sqrt_p, 0.0));
        // Work in an orthonormal basis of the design span: near-collinear
        // basis columns would otherwise leave a numerically free subspace
        // in the lifted problem and spoil rank-one extraction.
        let q = span_basis(&self.u_norm)?;
        let r = q.ncols();
        let xt = q.adjoint() * &target;
        let eye = DMatrix::identity(r, r);
        let blocks: Vec<_> =
            (0..d).map(|l| column_block(&xt.column(l).clone_owned(), &eye)).collect();
        let sol = solve_trust_region(&blocks, d as f64 + 1.0, true, SDP_TOL)?;

        // The mismatch metric equals the budget metric, so the exact
        // optimum is the radial scaling of the unconstrained fit; use it
        // to polish the extracted vectors.
        let fit_power: f64 = xt.iter().map(|v| v.norm_sqr()).sum();
        let phi = if fit_power > 0.0 {
            &xt * Complex64::new((1.0 / fit_power).sqrt(), 0.0)
        } else {
            DMatrix::from_columns(
                &sol.vectors.iter().map(|v| v.clone_owned()).collect::<Vec<_>>(),
            )
        };

        let mut f = DMatrix::zeros(self.cfg.n_tx_bs, self.cfg.n_slots);
        for l in 0..d {
            let col = &q * phi.column(l) * Complex64::new(sqrt_p, 0.0);
            f.set_column(l, &col);
        }
        Ok((BeamformerSet { matrix: f, method: DesignMethod::FdbWbf, alpha }, sol.ratios))
    }

    pub fn fdb_wbf(&self, alpha: f64) -> Result<BeamformerSet> {
        Ok(self.fdb_wbf_with_diagnostics(alpha)?.0)
    }

    /// Weighted beamformer-mismatch design under power allocation.
    pub fn cpa_wbf_with_diagnostics(&self, alpha: f64) -> Result<(BeamformerSet, Vec<f64>)> {
        Self::check_alpha(alpha)?;
        let g = self.guides(true)?;
        let d = self.codebook.ncols();
        let sqrt_p = self.power.sqrt();
        let target = (&g.f_hi * Complex64::new(alpha / sqrt_p, 0.0))
            + (&g.f_lo * Complex64::new((1.0 - alpha) / sqrt_p, 0.0));
        // Per-column scalar weights: real part only, since the weights
        // are real by construction.
        let theta: Vec<f64> =
            (0..d).map(|l| self.u_norm.column(l).dotc(&target.column(l)).re).collect();
        let blocks: Vec<_> = (0..d)
            .map(|l| {
                column_block(
                    &DVector::from_element(1, Complex64::new(theta[l], 0.0)),
                    &DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
                )
            })
            .collect();
        let sol = solve_trust_region(&blocks, d as f64 + 1.0, true, SDP_TOL)?;

        // Radial polish, as in the full-dimension case.
        let norm: f64 = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        let upsilon: Vec<f64> = if norm > 0.0 {
            theta.iter().map(|t| t / norm).collect()
        } else {
            sol.vectors.iter().map(|v| v[0].re).collect()
        };

        let mut f = DMatrix::zeros(self.cfg.n_tx_bs, self.cfg.n_slots);
        for l in 0..d {
            let scaled = self.u_norm.column(l) * Complex64::new(upsilon[l] * sqrt_p, 0.0);
            f.set_column(l, &scaled);
        }
        Ok((BeamformerSet { matrix: f, method: DesignMethod::CpaWbf, alpha }, sol.ratios))
    }

    pub fn cpa_wbf(&self, alpha: f64) -> Result<BeamformerSet> {
        Ok(self.cpa_wbf_with_diagnostics(alpha)?.0)
    }

    /// Weighted covariance-mismatch design (full dimension).
    pub fn fdb_wcm(&self, alpha: f64) -> Result<(CovarianceMatrix, BeamformerSet)> {
        Self::check_alpha(alpha)?;
        let g = self.guides(false)?;
        let d = self.codebook.ncols();
        let _ = d;
        // Work on Ṽ = QᴴVQ over an orthonormal basis Q of the design span:
        // the mismatch there is strictly convex, so the minimizer is unique
        // and the face polish lands on it exactly.
        let q = span_basis(&self.u_norm)?;
        let r_dim = q.ncols();
        let basis = herm_basis(r_dim);
        let n_par = r_dim * r_dim;
        let mut p_mat = DMatrix::zeros(n_par, n_par);
        for (c, ec) in basis.iter().enumerate() {
            for (r, er) in basis.iter().enumerate() {
                p_mat[(r, c)] = (er * ec).trace().re;
            }
        }
        let blend = (&g.v_hi * Complex64::new(alpha / self.power, 0.0))
            + (&g.v_lo * Complex64::new((1.0 - alpha) / self.power, 0.0));
        let mn = q.adjoint() * &blend * &q;
        let r_vec = DVector::from_fn(n_par, |b, _| (&basis[b] * &mn).trace().re);
        let trace_coeffs = DVector::from_fn(n_par, |b, _| basis[b].trace().re);

        let lam_norm = self.solve_quadratic_psd(&p_mat, &r_vec, &trace_coeffs, r_dim, None)?;
        let v = &q * &lam_norm * q.adjoint() * Complex64::new(self.power, 0.0);
        let cov = CovarianceMatrix::validated((&v + v.adjoint()) * Complex64::new(0.5, 0.0), self.power)?;
        let f = recover_beamformers(&cov, self.cfg.n_slots)?;
        Ok((cov, BeamformerSet { matrix: f, method: DesignMethod::FdbWcm, alpha }))
    }

    /// Weighted covariance-mismatch design under power allocation.
    pub fn cpa_wcm(&self, alpha: f64) -> Result<(DVector<f64>, BeamformerSet)> {
        Self::check_alpha(alpha)?;
        let g = self.guides(true)?;
        let d = self.codebook.ncols();
        let p_mat = DMatrix::from_fn(d, d, |k, l| self.gram_norm[(k, l)].norm_sqr());
        let blend = (&g.v_hi * Complex64::new(alpha / self.power, 0.0))
            + (&g.v_lo * Complex64::new((1.0 - alpha) / self.power, 0.0));
        let mn = self.u_norm.adjoint() * &blend * &self.u_norm;
        let r_vec = DVector::from_fn(d, |k, _| mn[(k, k)].re);
        let trace_coeffs = DVector::from_element(d, 1.0);

        let sol = self.solve_quadratic_nonneg(&p_mat, &r_vec, &trace_coeffs)?;
        let rho = DVector::from_fn(d, |l, _| {
            self.power * sol[l].max(0.0) / (self.col_norms[l] * self.col_norms[l])
        });
        let f = self.power_allocation_bf(&rho, DesignMethod::CpaWcm, alpha);
        Ok((rho, f))
    }

    /// Minimize xᵀPx − 2rᵀx over Hermitian Λ ⪰ 0 (x = HermVar params of
    /// dimension `herm_dim`) with ⟨trace_coeffs, x⟩ = 1, then polish on
    /// the identified active face for machine-precision accuracy.
    fn solve_quadratic_psd(
        &self,
        p_mat: &DMatrix<f64>,
        r_vec: &DVector<f64>,
        trace_coeffs: &DVector<f64>,
        herm_dim: usize,
        support_hint: Option<&[usize]>,
    ) -> Result<DMatrix<Complex64>> {
        let _ = support_hint;
        let (r_fac, w) = factor_quadratic(p_mat, r_vec);
        let mut b = SdpBuilder::new();
        let hv = HermVar::new(&mut b, herm_dim);
        hv.add_psd(&mut b, &DMatrix::zeros(herm_dim, herm_dim));
        let lam_vars: Vec<usize> = hv.basis_elements().into_iter().map(|(v, _)| v).collect();
        b.add_eq(
            lam_vars.iter().enumerate().map(|(i, &v)| (v, trace_coeffs[i])).collect(),
            1.0,
        );
        add_epigraph_rows(&mut b, &r_fac, &w, &lam_vars);
        let (x, report) = solve_sdp(&b.build(), SDP_TOL)?;
        if report.status != SolverStatus::Optimal {
            return Err(Error::Solver {
                status: "wcm",
                message: format!("design solve ended with status {}", report.status),
            });
        }
        let lam = hv.value(&x);

        // Face polish: restrict to the numerically positive eigenspace
        // and solve the equality-constrained least squares exactly.
        let eig = lam.clone().symmetric_eigen();
        let max_eig = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let kept: Vec<usize> =
            (0..herm_dim).filter(|&i| eig.eigenvalues[i] > FACE_CUT * max_eig).collect();
        if kept.is_empty() {
            return Ok(lam);
        }
        let q = DMatrix::from_fn(herm_dim, kept.len(), |i, j| eig.eigenvectors[(i, kept[j])]);
        let face_basis = herm_basis(kept.len());
        // Linear map from face parameters to full parameters.
        let t_map = {
            let mut t = DMatrix::zeros(herm_dim * herm_dim, face_basis.len());
            for (k, e) in face_basis.iter().enumerate() {
                t.set_column(k, &herm_params(&(&q * e * q.adjoint())));
            }
            t
        };
        let r_face = &r_fac * &t_map;
        let a_face = t_map.transpose() * trace_coeffs;
        let n_face = t_map.ncols();
        let mut kkt = DMatrix::zeros(n_face + 1, n_face + 1);
        kkt.view_mut((0, 0), (n_face, n_face)).copy_from(&(r_face.transpose() * &r_face));
        for i in 0..n_face {
            kkt[(i, n_face)] = a_face[i];
            kkt[(n_face, i)] = a_face[i];
        }
        let mut rhs = DVector::zeros(n_face + 1);
        rhs.view_mut((0, 0), (n_face, 1)).copy_from(&(r_face.transpose() * &w));
        rhs[n_face] = 1.0;
        let svd = kkt.svd(true, true);
        if let Ok(z) = svd.solve(&rhs, 1e-12) {
            let z_face = z.rows(0, n_face).clone_owned();
            let mut m_face = DMatrix::zeros(kept.len(), kept.len());
            for (k, e) in face_basis.iter().enumerate() {
                m_face += e * Complex64::new(z_face[k], 0.0);
            }
            let candidate = &q * m_face * q.adjoint();
            let cand_params = herm_params(&candidate);
            let c_eig = candidate.clone().symmetric_eigen();
            let c_min = c_eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
            let c_tr = candidate.trace().re.abs().max(f64::MIN_POSITIVE);
            let tr_err = (trace_coeffs.dot(&cand_params) - 1.0).abs();
            let obj = |p: &DVector<f64>| (p_mat * p).dot(p) - 2.0 * r_vec.dot(p);
            let x_params = herm_params(&lam);
            if c_min >= -EIGEN_FLOOR * c_tr
                && tr_err < 1e-9
                && obj(&cand_params) <= obj(&x_params) + 1e-12
            {
                return Ok((&candidate + candidate.adjoint()) * Complex64::new(0.5, 0.0));
            }
        }
        Ok(lam)
    }

    /// Minimize xᵀPx − 2rᵀx over x ≥ 0 with ⟨trace_coeffs, x⟩ = 1, then
    /// polish on the identified support.
    fn solve_quadratic_nonneg(
        &self,
        p_mat: &DMatrix<f64>,
        r_vec: &DVector<f64>,
        trace_coeffs: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n = r_vec.len();
        let (r_fac, w) = factor_quadratic(p_mat, r_vec);
        let mut b = SdpBuilder::new();
        let range = b.add_vars(n);
        let vars: Vec<usize> = range.collect();
        for &v in &vars {
            b.add_ineq(0.0, vec![(v, 1.0)]);
        }
        b.add_eq(vars.iter().enumerate().map(|(i, &v)| (v, trace_coeffs[i])).collect(), 1.0);
        add_epigraph_rows(&mut b, &r_fac, &w, &vars);
        let (x, report) = solve_sdp(&b.build(), SDP_TOL)?;
        if report.status != SolverStatus::Optimal {
            return Err(Error::Solver {
                status: "wcm",
                message: format!("design solve ended with status {}", report.status),
            });
        }
        let rho = DVector::from_fn(n, |i, _| x[vars[i]]);

        // Support polish: equality-constrained least squares on the
        // numerically positive components.
        let max = rho.iter().cloned().fold(0.0, f64::max);
        let kept: Vec<usize> = (0..n).filter(|&i| rho[i] > FACE_CUT * max).collect();
        if kept.is_empty() {
            return Ok(rho);
        }
        let m = kept.len();
        let r_face = DMatrix::from_fn(r_fac.nrows(), m, |i, j| r_fac[(i, kept[j])]);
        let a_face = DVector::from_fn(m, |j, _| trace_coeffs[kept[j]]);
        let mut kkt = DMatrix::zeros(m + 1, m + 1);
        kkt.view_mut((0, 0), (m, m)).copy_from(&(r_face.transpose() * &r_face));
        for i in 0..m {
            kkt[(i, m)] = a_face[i];
            kkt[(m, i)] = a_face[i];
        }
        let mut rhs = DVector::zeros(m + 1);
        rhs.view_mut((0, 0), (m, 1)).copy_from(&(r_face.transpose() * &w));
        rhs[m] = 1.0;
        let svd = kkt.svd(true, true);
        if let Ok(z) = svd.solve(&rhs, 1e-12) {
            let mut candidate = DVector::zeros(n);
            for (j, &i) in kept.iter().enumerate() {
                candidate[i] = z[j];
            }
            let obj = |p: &DVector<f64>| (p_mat * p).dot(p) - 2.0 * r_vec.dot(p);
            let tr_err = (trace_coeffs.dot(&candidate) - 1.0).abs();
            if candidate.iter().all(|&v| v >= -EIGEN_FLOOR)
                && tr_err < 1e-9
                && obj(&candidate) <= obj(&rho) + 1e-12
            {
                return Ok(candidate.map(|v| v.max(0.0)));
            }
        }
        Ok(rho)
    }
}

/// Eigenvalue factorization of a PSD quadratic form: returns R with
/// P ≈ RᵀR (rows for eigenvalues above 1e-12 of the largest) and the
/// shifted target w with xᵀPx − 2rᵀx = ‖Rx − w‖² − ‖w‖².
fn factor_quadratic(p_mat: &DMatrix<f64>, r_vec: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let sym = (p_mat + p_mat.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let kept: Vec<usize> =
        (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > 1e-12 * max).collect();
    let m = kept.len();
    let n = p_mat.nrows();
    let mut r_fac = DMatrix::zeros(m, n);
    let mut w = DVector::zeros(m);
    for (row, &i) in kept.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        for j in 0..n {
            r_fac[(row, j)] = s * eig.eigenvectors[(j, i)];
        }
        w[row] = eig.eigenvectors.column(i).dot(r_vec) / s;
    }
    (r_fac, w)
}

/// Epigraph of a separable least-squares objective: per row i of R, a
/// 2×2 block enforcing t_i ≥ (Rx − w)_i², minimizing Σ t_i.
fn add_epigraph_rows(
    b: &mut SdpBuilder,
    r_fac: &DMatrix<f64>,
    w: &DVector<f64>,
    x_vars: &[usize],
) {
    for i in 0..r_fac.nrows() {
        let t = b.add_vars(1).start;
        b.add_objective(t, 1.0);
        let mut f0 = DMatrix::zeros(2, 2);
        f0[(0, 0)] = 1.0;
        f0[(0, 1)] = -w[i];
        f0[(1, 0)] = -w[i];
        let mut terms = Vec::new();
        for (j, &v) in x_vars.iter().enumerate() {
            if r_fac[(i, j)] != 0.0 {
                let mut m = DMatrix::zeros(2, 2);
                m[(0, 1)] = r_fac[(i, j)];
                m[(1, 0)] = r_fac[(i, j)];
                terms.push((v, m));
            }
        }
        let mut mt = DMatrix::zeros(2, 2);
        mt[(1, 1)] = 1.0;
        terms.push((t, mt));
        b.add_lmi(f0, terms);
    }
}

/// One-shot wrappers constructing a fresh design context per call. For α
/// sweeps, build a [`DigitalDesigner`] once and reuse it.
pub fn design_fdb_wcrb(
    alpha: f64,
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
) -> Result<(CovarianceMatrix, BeamformerSet)> {
    DigitalDesigner::new(params, cfg)?.fdb_wcrb(alpha)
}

pub fn design_cpa_wcrb(
    alpha: f64,
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
) -> Result<(DVector<f64>, CovarianceMatrix, BeamformerSet)> {
    DigitalDesigner::new(params, cfg)?.cpa_wcrb(alpha)
}

pub fn design_fdb_wbf(
    alpha: f64,
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
) -> Result<BeamformerSet> {
    DigitalDesigner::new(params, cfg)?.fdb_wbf(alpha)
}

pub fn design_cpa_wbf(
    alpha: f64,
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
) -> Result<BeamformerSet> {
    DigitalDesigner::new(params, cfg)?.cpa_wbf(alpha)
}

pub fn design_fdb_wcm(
    alpha: f64,
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
) -> Result<(CovarianceMatrix, BeamformerSet)> {
    DigitalDesigner::new(params, cfg)?.fdb_wcm(alpha)
}

pub fn design_cpa_wcm(
    alpha: f64,
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
) -> Result<(DVector<f64>, BeamformerSet)> {
    DigitalDesigner::new(params, cfg)?.cpa_wcm(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::load_config;
    use crate::scenario::derive_channel_params;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> ScenarioConfig {
        load_config(
            "n_tx_bs = 4\nn_rx_ue = 4\nn_targets = 1\nn_subcarriers = 8\nn_slots = 4\n\
             p_targets = [[3.0, 9.0]]",
        )
        .unwrap()
    }

    fn designer() -> DigitalDesigner {
        let cfg = small_cfg();
        let params = derive_channel_params(&cfg).unwrap();
        DigitalDesigner::new(&params, &cfg).unwrap()
    }

    fn random_psd(n: usize, rank: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, rank, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        &a * a.adjoint()
    }

    #[test]
    fn recovery_round_trips_random_covariances() {
        for seed in 0..20 {
            let rank = 1 + (seed as usize % 4);
            let v = random_psd(4, rank, seed);
            let budget = v.trace().re + 1.0;
            let cov = CovarianceMatrix::validated(v.clone(), budget).unwrap();
            let f = recover_beamformers(&cov, 4).unwrap();
            let back = &f * f.adjoint();
            assert!((&back - &v).norm() / v.norm() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn recovery_of_rank_one_is_single_column() {
        let mut v = DVector::zeros(4);
        v[0] = Complex64::new(1.0, 0.5);
        v[2] = Complex64::new(-0.3, 0.8);
        let cov = CovarianceMatrix::validated(&v * v.adjoint(), 10.0).unwrap();
        let f = recover_beamformers(&cov, 3).unwrap();
        for l in 1..3 {
            assert_relative_eq!(f.column(l).norm(), 0.0, epsilon = 1e-12);
        }
        // First column matches v up to a global phase.
        let inner = f.column(0).dotc(&v).norm();
        assert_relative_eq!(inner, v.norm_squared(), max_relative = 1e-9);
    }

    #[test]
    fn recovery_of_zero_is_zero() {
        let cov = CovarianceMatrix::validated(DMatrix::zeros(4, 4), 1.0).unwrap();
        let f = recover_beamformers(&cov, 4).unwrap();
        assert_relative_eq!(f.norm(), 0.0);
    }

    #[test]
    fn recovery_rejects_excess_rank() {
        let v = random_psd(4, 4, 7);
        let cov = CovarianceMatrix::validated(v.clone(), v.trace().re + 1.0).unwrap();
        match recover_beamformers(&cov, 2) {
            Err(Error::DecompositionInfeasible { rank, slots }) => {
                assert_eq!(rank, 4);
                assert_eq!(slots, 2);
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn covariance_validation_rejects_budget_violation() {
        let v = DMatrix::from_diagonal_element(2, 2, Complex64::new(1.0, 0.0));
        assert!(CovarianceMatrix::validated(v, 0.5).is_err());
    }

    #[test]
    fn wcrb_design_meets_structure_and_budget() {
        let d = designer();
        let p = d.config().power_per_subcarrier();
        for &alpha in &[0.0, 0.5, 1.0] {
            let (cov, bf) = d.fdb_wcrb(alpha).unwrap();
            let trace = cov.matrix.trace().re;
            assert_relative_eq!(trace, p, max_relative = 1e-6);
            assert_relative_eq!(bf.power(), p, max_relative = 1e-6);
            // Span structure holds by construction: project onto col(U)
            // through an orthonormal basis of the design span.
            let q = span_basis(&d.u_norm).unwrap();
            let proj = &q * q.adjoint();
            let eye = DMatrix::identity(4, 4);
            let res = (&eye - &proj) * &cov.matrix * (&eye - &proj);
            assert!(res.norm() / cov.matrix.norm() < 1e-9);
        }
    }

    #[test]
    fn wcrb_tradeoff_is_monotone_in_alpha() {
        let d = designer();
        let mut last_bp = f64::INFINITY;
        let mut last_ms = 0.0;
        for i in 0..5 {
            let alpha = i as f64 / 4.0;
            let (cov, _) = d.fdb_wcrb(alpha).unwrap();
            let (bp, ms) = d.bounds(&cov.matrix).unwrap();
            assert!(bp <= last_bp * (1.0 + 1e-6), "BP bound rose at alpha {alpha}");
            assert!(ms >= last_ms * (1.0 - 1e-6), "MS bound fell at alpha {alpha}");
            last_bp = bp;
            last_ms = ms;
        }
    }

    #[test]
    fn cpa_wcrb_matches_simplex_grid_search() {
        let d = designer();
        let alpha = 0.5;
        let (_, cov, _) = d.cpa_wcrb(alpha).unwrap();
        let solved = d.weighted_bound(alpha, &cov.matrix).unwrap();

        // Exhaustive simplex grid over the four normalized powers.
        let p = d.config().power_per_subcarrier();
        let steps = 20usize;
        let mut best = f64::INFINITY;
        for a in 0..=steps {
            for b in 0..=(steps - a) {
                for c in 0..=(steps - a - b) {
                    let e = steps - a - b - c;
                    let frac = [a, b, c, e].map(|v| v as f64 / steps as f64);
                    let mut v = DMatrix::zeros(4, 4);
                    for (l, f) in frac.iter().enumerate() {
                        let col = d.u_norm.column(l);
                        v += col * col.adjoint() * Complex64::new(p * f, 0.0);
                    }
                    if let Ok(obj) = d.weighted_bound(alpha, &v) {
                        best = best.min(obj);
                    }
                }
            }
        }
        assert!(
            solved <= best * 1.02,
            "solver {solved:.6e} worse than grid best {best:.6e}"
        );
    }

    #[test]
    fn restriction_never_beats_full_design() {
        let d = designer();
        for &alpha in &[0.25, 0.5, 0.75] {
            let (cov_fdb, _) = d.fdb_wcrb(alpha).unwrap();
            let (_, cov_cpa, _) = d.cpa_wcrb(alpha).unwrap();
            let full = d.weighted_bound(alpha, &cov_fdb.matrix).unwrap();
            let restricted = d.weighted_bound(alpha, &cov_cpa.matrix).unwrap();
            assert!(restricted >= full * (1.0 - 1e-6), "alpha {alpha}");
        }
    }

    #[test]
    fn mismatch_designs_recover_guides_at_endpoints() {
        let d = designer();
        let (v_hi, v_lo) = d.guide_covariances().unwrap();

        let (cov, _) = d.fdb_wcm(1.0).unwrap();
        { let e = (&cov.matrix - &v_hi).norm() / v_hi.norm(); assert!(e < 1e-6, "wcm high err {e:.3e}"); }
        let (cov, _) = d.fdb_wcm(0.0).unwrap();
        assert!((&cov.matrix - &v_lo).norm() / v_lo.norm() < 1e-6, "wcm low");

        let g = d.guides(false).unwrap().clone();
        let bf = d.fdb_wbf(1.0).unwrap();
        let lead = bf.matrix.columns(0, 4).clone_owned();
        assert!((&lead - &g.f_hi).norm() / g.f_hi.norm() < 1e-6, "wbf high");
        let bf = d.fdb_wbf(0.0).unwrap();
        let lead = bf.matrix.columns(0, 4).clone_owned();
        assert!((&lead - &g.f_lo).norm() / g.f_lo.norm() < 1e-6, "wbf low");

        let gc = d.guides(true).unwrap().clone();
        let bf = d.cpa_wbf(1.0).unwrap();
        let lead = bf.matrix.columns(0, 4).clone_owned();
        assert!((&lead - &gc.f_hi).norm() / gc.f_hi.norm() < 1e-6, "cpa wbf high");
        let (_, bf) = d.cpa_wcm(0.0).unwrap();
        let back = bf.covariance();
        assert!((&back - &gc.v_lo).norm() / gc.v_lo.norm() < 1e-6, "cpa wcm low");
    }

    #[test]
    fn wbf_budget_is_exactly_active() {
        let d = designer();
        let p = d.config().power_per_subcarrier();
        for &alpha in &[0.3, 0.5, 0.7] {
            let (bf, ratios) = d.fdb_wbf_with_diagnostics(alpha).unwrap();
            assert_relative_eq!(bf.power(), p, max_relative = 1e-6);
            for r in ratios {
                assert!(r < 1e-6, "spectral ratio {r}");
            }
            let (bf, _) = d.cpa_wbf_with_diagnostics(alpha).unwrap();
            assert_relative_eq!(bf.power(), p, max_relative = 1e-6);
        }
    }

    #[test]
    fn cpa_wcm_powers_are_nonnegative_and_on_budget() {
        let d = designer();
        let p = d.config().power_per_subcarrier();
        let (rho, bf) = d.cpa_wcm(0.4).unwrap();
        for &r in rho.iter() {
            assert!(r >= -1e-10, "negative power {r}");
        }
        assert_relative_eq!(bf.power(), p, max_relative = 1e-6);
    }

    #[test]
    fn alpha_out_of_range_is_rejected() {
        let d = designer();
        assert!(d.fdb_wcrb(1.5).is_err());
        assert!(d.fdb_wcm(-0.1).is_err());
    }
}
