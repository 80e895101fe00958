//! Complex Hermitian matrix variables over the real scalarized SDP core.
//!
//! A d×d Hermitian variable is carried as d² real scalars (d diagonal
//! entries, then a (re, im) pair per strict upper-triangle entry). PSD
//! constraints use the standard real symmetric embedding
//! E(A + jB) = [[A, −B], [B, A]], which is PSD iff the complex matrix is.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::sdp::SdpBuilder;

/// Handle to a Hermitian matrix variable registered in an [`SdpBuilder`].
#[derive(Debug, Clone)]
pub struct HermVar {
    pub dim: usize,
    start: usize,
}

/// Real symmetric embedding of a complex Hermitian matrix.
pub fn embed_hermitian(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    let d = m.nrows();
    let mut e = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let v = m[(i, j)];
            e[(i, j)] = v.re;
            e[(i + d, j + d)] = v.re;
            e[(i, j + d)] = -v.im;
            e[(i + d, j)] = v.im;
        }
    }
    e
}

impl HermVar {
    /// Allocate the d² real parameters of a new Hermitian variable.
    pub fn new(builder: &mut SdpBuilder, dim: usize) -> Self {
        let range = builder.add_vars(dim * dim);
        Self { dim, start: range.start }
    }

    pub fn n_params(&self) -> usize {
        self.dim * self.dim
    }

    /// Complex Hermitian basis element for each real parameter, paired
    /// with the parameter's variable index.
    pub fn basis_elements(&self) -> Vec<(usize, DMatrix<Complex64>)> {
        let d = self.dim;
        let mut out = Vec::with_capacity(d * d);
        let mut var = self.start;
        for i in 0..d {
            let mut e = DMatrix::zeros(d, d);
            e[(i, i)] = Complex64::new(1.0, 0.0);
            out.push((var, e));
            var += 1;
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let mut re = DMatrix::zeros(d, d);
                re[(i, j)] = Complex64::new(1.0, 0.0);
                re[(j, i)] = Complex64::new(1.0, 0.0);
                out.push((var, re));
                var += 1;
                let mut im = DMatrix::zeros(d, d);
                im[(i, j)] = Complex64::new(0.0, 1.0);
                im[(j, i)] = Complex64::new(0.0, -1.0);
                out.push((var, im));
                var += 1;
            }
        }
        out
    }

    /// Reconstruct the complex matrix from a solution vector.
    pub fn value(&self, x: &DVector<f64>) -> DMatrix<Complex64> {
        let d = self.dim;
        let mut m = DMatrix::zeros(d, d);
        let mut var = self.start;
        for i in 0..d {
            m[(i, i)] = Complex64::new(x[var], 0.0);
            var += 1;
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let v = Complex64::new(x[var], x[var + 1]);
                var += 2;
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        m
    }

    /// Coefficients of the real-linear functional ⟨C, X⟩ = Re tr(C X)
    /// for Hermitian C, expressed over this variable's parameters.
    pub fn linear_coeffs(&self, c: &DMatrix<Complex64>) -> Vec<(usize, f64)> {
        self.basis_elements()
            .into_iter()
            .map(|(var, e)| {
                let coeff: Complex64 = (c * e).trace();
                (var, coeff.re)
            })
            .collect()
    }

    /// Variable indices of the diagonal entries (their sum is the trace).
    pub fn diag_vars(&self) -> Vec<usize> {
        (0..self.dim).map(|i| self.start + i).collect()
    }

    /// Add the PSD constraint X ⪰ `floor` via the real embedding.
    pub fn add_psd(&self, builder: &mut SdpBuilder, floor: &DMatrix<Complex64>) {
        let terms = self
            .basis_elements()
            .into_iter()
            .map(|(var, e)| (var, embed_hermitian(&e)))
            .collect();
        builder.add_lmi(-embed_hermitian(floor), terms);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::sdp::solve_sdp;
    use approx::assert_relative_eq;

    #[test]
    fn embedding_psd_equivalence() {
        // A Hermitian PSD matrix embeds to a PSD real matrix and back.
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.5, 0.7),
                Complex64::new(0.5, -0.7),
                Complex64::new(1.5, 0.0),
            ],
        );
        let e = embed_hermitian(&m);
        assert!((e.clone() - e.transpose()).norm() < 1e-14);
        let eig = e.symmetric_eigen();
        assert!(eig.eigenvalues.min() > 0.0);
    }

    #[test]
    fn min_trace_hermitian_above_floor() {
        // min tr(X) s.t. X ⪰ C for a complex Hermitian C → X = C.
        let c = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.3, -0.4),
                Complex64::new(0.3, 0.4),
                Complex64::new(2.0, 0.0),
            ],
        );
        let mut b = SdpBuilder::new();
        let xv = HermVar::new(&mut b, 2);
        for v in xv.diag_vars() {
            b.add_objective(v, 1.0);
        }
        xv.add_psd(&mut b, &c);
        let (x, _) = solve_sdp(&b.build(), 1e-9).unwrap();
        let m = xv.value(&x);
        assert_relative_eq!((m - &c).norm(), 0.0, epsilon = 1e-5);
    }

    #[test]
    fn linear_functional_matches_direct_trace() {
        let c = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.5, 0.0),
                Complex64::new(-0.2, 1.1),
                Complex64::new(-0.2, -1.1),
                Complex64::new(3.0, 0.0),
            ],
        );
        let mut b = SdpBuilder::new();
        let xv = HermVar::new(&mut b, 2);
        let coeffs = xv.linear_coeffs(&c);
        // Pick an arbitrary Hermitian X and compare ⟨C,X⟩ both ways.
        let x_mat = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.6, -0.3),
                Complex64::new(0.6, 0.3),
                Complex64::new(2.0, 0.0),
            ],
        );
        let mut x = DVector::zeros(4);
        x[0] = 1.0;
        x[1] = 2.0;
        x[2] = 0.6;
        x[3] = -0.3;
        assert_relative_eq!((&x_mat - xv.value(&x)).norm(), 0.0, epsilon = 1e-14);
        let via_coeffs: f64 = coeffs.iter().map(|(v, co)| co * x[*v]).sum();
        let direct = (c * x_mat).trace().re;
        assert_relative_eq!(via_coeffs, direct, max_relative = 1e-12);
    }
}
