//! Lifted trust-region subproblems with rank-one recovery.
//!
//! Each block carries a homogenized Hermitian cost C_l and budget weight
//! D_l over the lifted variable Ω̃_l = [1; ω_l][1; ω_l]ᴴ. The relaxation
//! drops the rank constraint, solves the joint SDP
//!   min Σ_l ⟨C_l, Ω̃_l⟩  s.t. Ω̃_l ⪰ 0, [Ω̃_l]_{1,1} = 1,
//!   Σ_l ⟨D_l, Ω̃_l⟩ ≤ budget (or = budget when the power constraint
//!   must hold with equality),
//! and extracts rank-one factors, verifying the spectral ratio that
//! strong duality guarantees for this problem class.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

use super::herm::HermVar;
use super::sdp::{solve_sdp, SdpBuilder};
use super::SolveReport;

/// Ratio λ₂/λ₁ above which a lifted solution is rejected as not rank-one.
pub const RANK_ONE_LIMIT: f64 = 1e-6;

/// One homogenized block: both matrices Hermitian of equal size d+1,
/// where d is the length of the recovered vector.
#[derive(Debug, Clone)]
pub struct TrustRegionBlock {
    pub cost: DMatrix<Complex64>,
    pub budget_weight: DMatrix<Complex64>,
}

/// Solution of the joint problem: de-homogenized per-block vectors plus
/// the spectral ratios observed during extraction.
#[derive(Debug)]
pub struct TrustRegionSolution {
    pub vectors: Vec<DVector<Complex64>>,
    pub ratios: Vec<f64>,
    pub report: SolveReport,
    /// ⟨C_l, Ω̃_l⟩ of the lifted optimum, per block.
    pub block_objectives: Vec<f64>,
}

pub fn solve_trust_region(
    blocks: &[TrustRegionBlock],
    budget: f64,
    exact_budget: bool,
    tol: f64,
) -> Result<TrustRegionSolution> {
    let mut b = SdpBuilder::new();
    let mut vars = Vec::with_capacity(blocks.len());
    let mut budget_terms = Vec::new();
    for blk in blocks {
        let dim = blk.cost.nrows();
        if blk.budget_weight.nrows() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: blk.budget_weight.nrows(),
                context: "trust-region budget weight",
            });
        }
        let v = HermVar::new(&mut b, dim);
        for (var, coeff) in v.linear_coeffs(&blk.cost) {
            if coeff != 0.0 {
                b.add_objective(var, coeff);
            }
        }
        for (var, coeff) in v.linear_coeffs(&blk.budget_weight) {
            if coeff != 0.0 {
                budget_terms.push((var, if exact_budget { coeff } else { -coeff }));
            }
        }
        b.add_eq(vec![(v.diag_vars()[0], 1.0)], 1.0);
        v.add_psd(&mut b, &DMatrix::zeros(dim, dim));
        vars.push(v);
    }
    if exact_budget {
        b.add_eq(budget_terms, budget);
    } else {
        b.add_ineq(budget, budget_terms);
    }

    let (x, report) = solve_sdp(&b.build(), tol)?;

    let mut vectors = Vec::with_capacity(blocks.len());
    let mut ratios = Vec::with_capacity(blocks.len());
    let mut block_objectives = Vec::with_capacity(blocks.len());
    for (v, blk) in vars.iter().zip(blocks) {
        let lifted = v.value(&x);
        block_objectives.push((&blk.cost * &lifted).trace().re);
        let eig = lifted.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &c| {
            eig.eigenvalues[c].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues")
        });
        let l1 = eig.eigenvalues[order[0]];
        let l2 = if order.len() > 1 { eig.eigenvalues[order[1]].max(0.0) } else { 0.0 };
        let ratio = l2 / l1.max(f64::MIN_POSITIVE);
        if !(ratio < RANK_ONE_LIMIT) {
            return Err(Error::RankOneExtraction { ratio, limit: RANK_ONE_LIMIT });
        }
        ratios.push(ratio);
        let principal = eig.eigenvectors.column(order[0]).clone_owned() * Complex64::new(l1.sqrt(), 0.0);
        // De-homogenize: first coordinate normalized to 1.
        let head = principal[0];
        if head.norm() < 1e-8 {
            return Err(Error::RankOneExtraction { ratio: 1.0, limit: RANK_ONE_LIMIT });
        }
        let dim = lifted.nrows();
        let vec = DVector::from_fn(dim - 1, |i, _| principal[i + 1] / head);
        vectors.push(vec);
    }
    Ok(TrustRegionSolution { vectors, ratios, report, block_objectives })
}

/// Build the standard homogenized block for a least-squares column fit
/// min ‖ω − target‖²_G-ish forms: cost [[0, −xᴴ],[−x, G]] and budget
/// weight [[1, 0],[0, G]].
pub fn column_block(x: &DVector<Complex64>, gram: &DMatrix<Complex64>) -> TrustRegionBlock {
    let d = x.len();
    let mut cost = DMatrix::zeros(d + 1, d + 1);
    let mut weight = DMatrix::zeros(d + 1, d + 1);
    weight[(0, 0)] = Complex64::new(1.0, 0.0);
    for i in 0..d {
        cost[(i + 1, 0)] = -x[i];
        cost[(0, i + 1)] = -x[i].conj();
        for k in 0..d {
            cost[(i + 1, k + 1)] = gram[(i, k)];
            weight[(i + 1, k + 1)] = gram[(i, k)];
        }
    }
    TrustRegionBlock { cost, budget_weight: weight }
}
