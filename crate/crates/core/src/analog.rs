//! Constant-modulus beamforming designs.
//!
//! Two schemes restrict the transmit beamformers to per-slot constant
//! amplitude with per-antenna phase control:
//!
//! * full-dimension: alternating optimization of slot powers ρ and the
//!   phase matrix Φ against the covariance-mismatch objective, each
//!   subproblem solved by SQP with analytic gradients;
//! * per-codeword power allocation: the steering/derivative codebook is
//!   replaced by a constant-modulus codebook (derivative codewords fitted
//!   by gradient projection on a beampattern probe grid), then the
//!   covariance-mismatch power allocation runs unchanged over it.
//!
//! Objective values are reported in normalized units: the weighted
//! mismatch divided by its value at F = 0, so traces are dimensionless
//! and comparable across scenarios.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::conic::{
    gradient_projection_unit_modulus, sqp_minimize, Constraint, SqpOptions, SqpProblem,
};
use crate::digital::{BeamformerSet, DesignMethod, DigitalDesigner};
use crate::error::{Error, Result};
use crate::scenario::{steering_derivative, steering_vector, ChannelParamSet};

/// Relative objective-reduction threshold that stops the alternation.
const AO_REL_TOL: f64 = 1e-3;
/// Hard cap on outer alternations.
const AO_MAX_OUTER: usize = 60;
/// Ties in the monotone objective trace are allowed up to this slack.
const AO_MONOTONE_SLACK: f64 = 1e-12;
/// Relative tolerance on the power-budget invariant.
const POWER_SUM_TOL: f64 = 1e-8;

/// Constant-modulus beamformer bank: slot powers ρ and phase matrix Φ.
/// Column l of the reconstructed bank is √(ρ_l/N_B)·exp(jφ_{·,l}).
#[derive(Debug, Clone)]
pub struct AnalogBeamformer {
    /// Per-slot powers ρ (W), length L, nonnegative.
    pub powers: DVector<f64>,
    /// Phases Φ (rad), N_B × L, each in [0, 2π).
    pub phases: DMatrix<f64>,
}

impl AnalogBeamformer {
    /// Check nonnegativity, the total-power budget, and phase ranges.
    pub fn validate(&self, budget: f64) -> Result<()> {
        if self.phases.ncols() != self.powers.len() {
            return Err(Error::DimensionMismatch {
                expected: self.powers.len(),
                got: self.phases.ncols(),
                context: "phase columns vs power slots".into(),
            });
        }
        if self.powers.iter().any(|&r| !r.is_finite() || r < 0.0) {
            return Err(Error::Invariant {
                field: "analog powers",
                message: "negative or non-finite slot power".into(),
            });
        }
        let total: f64 = self.powers.sum();
        if (total - budget).abs() > POWER_SUM_TOL * budget.max(f64::MIN_POSITIVE) {
            return Err(Error::Invariant {
                field: "analog powers",
                message: format!("total {total:.6e} differs from budget {budget:.6e}"),
            });
        }
        if self.phases.iter().any(|&p| !(0.0..TAU).contains(&p)) {
            return Err(Error::Invariant {
                field: "analog phases",
                message: "phase outside [0, 2π)".into(),
            });
        }
        Ok(())
    }

    /// Reconstruct the beamformer bank F with [F]_{i,l} = √(ρ_l/N_B)·e^{jφ_{i,l}}.
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let n = self.phases.nrows();
        let l = self.phases.ncols();
        DMatrix::from_fn(n, l, |i, c| {
            Complex64::from_polar((self.powers[c] / n as f64).sqrt(), self.phases[(i, c)])
        })
    }
}

/// Weighted covariance-mismatch objective over constant-modulus banks,
/// held in power-normalized units (unit total power, unit-trace guides).
struct MismatchObjective {
    n_b: usize,
    /// Blended guide αV̄ + (1−α)V̲ in normalized units (Hermitian).
    psi: DMatrix<Complex64>,
    /// α‖V̄‖² + (1−α)‖V̲‖² in normalized units — the mismatch at F = 0.
    norm_const: f64,
}

impl MismatchObjective {
    fn new(alpha: f64, v_hi: &DMatrix<Complex64>, v_lo: &DMatrix<Complex64>, power: f64) -> Self {
        let s = Complex64::new(1.0 / power, 0.0);
        let hi = v_hi * s;
        let lo = v_lo * s;
        let psi = &hi * Complex64::new(alpha, 0.0) + &lo * Complex64::new(1.0 - alpha, 0.0);
        let norm_const = alpha * hi.norm_squared() + (1.0 - alpha) * lo.norm_squared();
        Self { n_b: v_hi.nrows(), psi, norm_const }
    }

    /// Normalized bank from (ρ, Φ): column l is √(ρ_l/N_B)·e^{jφ_{·,l}}.
    fn bank(&self, rho: &DVector<f64>, phases: &DMatrix<f64>) -> DMatrix<Complex64> {
        let n = self.n_b as f64;
        DMatrix::from_fn(self.n_b, rho.len(), |i, l| {
            Complex64::from_polar((rho[l].max(0.0) / n).sqrt(), phases[(i, l)])
        })
    }

    /// Quartic core f = ‖FFᴴ‖² − 2·Re tr(Fᴴ Ψ F); the full mismatch is
    /// f + norm_const.
    fn quartic(&self, f: &DMatrix<Complex64>) -> f64 {
        let g = f * f.adjoint();
        g.norm_squared() - 2.0 * (&self.psi * &g).trace().re
    }

    /// Dimensionless mismatch: (f + norm_const) / norm_const.
    fn mismatch(&self, rho: &DVector<f64>, phases: &DMatrix<f64>) -> f64 {
        let f = self.bank(rho, phases);
        (self.quartic(&f) + self.norm_const) / self.norm_const
    }

    /// Unit-modulus slot directions u_l = e^{jφ_{·,l}}/√N_B.
    fn directions(&self, phases: &DMatrix<f64>) -> DMatrix<Complex64> {
        let scale = 1.0 / (self.n_b as f64).sqrt();
        DMatrix::from_fn(self.n_b, phases.ncols(), |i, l| {
            Complex64::from_polar(scale, phases[(i, l)])
        })
    }

    /// Quartic's value and gradient in ρ for fixed Φ:
    /// f(ρ) = ρᵀCρ − 2dᵀρ with C_{ik} = |u_iᴴu_k|², d_i = u_iᴴΨu_i.
    fn power_val_grad(
        &self,
        phases: &DMatrix<f64>,
    ) -> impl Fn(&DVector<f64>) -> (f64, DVector<f64>) {
        let u = self.directions(phases);
        let gram = u.adjoint() * &u;
        let l = u.ncols();
        let c = DMatrix::from_fn(l, l, |i, k| gram[(i, k)].norm_sqr());
        let pu = &self.psi * &u;
        let d = DVector::from_fn(l, |i, _| u.column(i).dotc(&pu.column(i)).re);
        move |rho: &DVector<f64>| {
            let crho = &c * rho;
            let val = rho.dot(&crho) - 2.0 * d.dot(rho);
            (val, crho * 2.0 - &d * 2.0)
        }
    }

    /// Quartic's value and gradient in the flattened phases for fixed ρ:
    /// ∂f/∂φ_{n,l} = 2·Im(conj(F_{n,l})·[2(FFᴴ − Ψ)F]_{n,l}).
    fn phase_val_grad(
        &self,
        rho: &DVector<f64>,
    ) -> impl Fn(&DVector<f64>) -> (f64, DVector<f64>) + '_ {
        let rho = rho.clone_owned();
        let n = self.n_b;
        let l = rho.len();
        move |flat: &DVector<f64>| {
            let phases = DMatrix::from_fn(n, l, |i, c| flat[c * n + i]);
            let f = self.bank(&rho, &phases);
            let g = &f * f.adjoint();
            let val = g.norm_squared() - 2.0 * (&self.psi * &g).trace().re;
            let h = (&g - &self.psi) * &f * Complex64::new(2.0, 0.0);
            let grad = DVector::from_fn(n * l, |idx, _| {
                let (i, c) = (idx % n, idx / n);
                2.0 * (f[(i, c)].conj() * h[(i, c)]).im
            });
            (val, grad)
        }
    }
}

/// Quadruple-sum expansion of the quartic core, kept as an independent
/// check of the matrix form used at runtime (tests compare the two).
#[cfg(test)]
fn expanded_quartic(
    rho: &DVector<f64>,
    phases: &DMatrix<f64>,
    psi: &DMatrix<Complex64>,
) -> f64 {
    let n = phases.nrows();
    let l = rho.len();
    let nf = n as f64;
    let mut quad = 0.0;
    for i in 0..l {
        for k in 0..l {
            let mut acc = 0.0;
            for nn in 0..n {
                for q in 0..n {
                    acc += (phases[(nn, k)] - phases[(nn, i)] + phases[(q, i)]
                        - phases[(q, k)])
                        .cos();
                }
            }
            quad += rho[i] * rho[k] * acc / (nf * nf);
        }
    }
    let mut lin = 0.0;
    for i in 0..l {
        let mut acc = 0.0;
        for nn in 0..n {
            for q in 0..n {
                let delta = phases[(q, i)] - phases[(nn, i)];
                acc += psi[(nn, q)].re * delta.cos() - psi[(nn, q)].im * delta.sin();
            }
        }
        lin += rho[i] * acc / nf;
    }
    quad - 2.0 * lin
}

/// Alternating power/phase solver for the constant-modulus mismatch
/// problem, parameterized by the two guide covariances.
pub struct FdbAlternation {
    n_b: usize,
    n_slots: usize,
    power: f64,
    seed: u64,
    v_hi: DMatrix<Complex64>,
    v_lo: DMatrix<Complex64>,
}

impl FdbAlternation {
    pub fn new(
        cfg: &ScenarioConfig,
        v_hi: DMatrix<Complex64>,
        v_lo: DMatrix<Complex64>,
    ) -> Result<Self> {
        if v_hi.nrows() != cfg.n_tx_bs || v_lo.nrows() != cfg.n_tx_bs {
            return Err(Error::DimensionMismatch {
                expected: cfg.n_tx_bs,
                got: v_hi.nrows().min(v_lo.nrows()),
                context: "guide covariance size".into(),
            });
        }
        Ok(Self {
            n_b: cfg.n_tx_bs,
            n_slots: cfg.n_slots,
            power: cfg.power_per_subcarrier(),
            seed: cfg.rng_seed,
            v_hi,
            v_lo,
        })
    }

    /// Initial phases: per-slot columns from the leading eigenvectors of
    /// the blended guide, remaining slots from the seeded RNG.
    fn initial_phases(&self, alpha: f64) -> DMatrix<f64> {
        let blend = &self.v_hi * Complex64::new(alpha, 0.0)
            + &self.v_lo * Complex64::new(1.0 - alpha, 0.0);
        let herm = (&blend + blend.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        let mut order: Vec<usize> = (0..self.n_b).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues")
        });
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x616e_616c_6f67);
        let max_eig = eig.eigenvalues[order[0]].max(0.0);
        DMatrix::from_fn(self.n_b, self.n_slots, |i, l| {
            if l < self.n_b && eig.eigenvalues[order[l]] > 1e-12 * max_eig {
                eig.eigenvectors[(i, order[l])].arg().rem_euclid(TAU)
            } else {
                rng.gen::<f64>() * TAU
            }
        })
    }

    /// Run the alternation at blend weight `alpha`, optionally from
    /// caller-supplied initial phases. Returns the beamformer and the
    /// per-iteration normalized objective trace (initial value first).
    pub fn solve(
        &self,
        alpha: f64,
        init: Option<&DMatrix<f64>>,
    ) -> Result<(AnalogBeamformer, Vec<f64>)> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Invariant {
                field: "alpha",
                message: format!("{alpha} outside [0, 1]"),
            });
        }
        let obj = MismatchObjective::new(alpha, &self.v_hi, &self.v_lo, self.power);
        let mut phases = match init {
            Some(p) => {
                if p.nrows() != self.n_b || p.ncols() != self.n_slots {
                    return Err(Error::DimensionMismatch {
                        expected: self.n_b * self.n_slots,
                        got: p.nrows() * p.ncols(),
                        context: "initial phase matrix".into(),
                    });
                }
                p.map(|v| v.rem_euclid(TAU))
            }
            None => self.initial_phases(alpha),
        };
        // Normalized powers (Σρ = 1); uniform start is always feasible.
        let mut rho = DVector::from_element(self.n_slots, 1.0 / self.n_slots as f64);

        let sqp_opts = SqpOptions { tol: 1e-9, rel_tol: 1e-9, max_iter: 120 };
        let mut trace = vec![obj.mismatch(&rho, &phases)];
        if !trace[0].is_finite() {
            return Err(Error::NonFinite("analog mismatch objective"));
        }

        for _ in 0..AO_MAX_OUTER {
            let current = *trace.last().expect("trace non-empty");

            // Power step: min f(ρ) s.t. Σρ = 1, ρ ≥ 0.
            let pv = obj.power_val_grad(&phases);
            let problem = SqpProblem {
                objective: Box::new(&pv),
                eq_constraints: vec![Constraint {
                    eval: Box::new(|x: &DVector<f64>| {
                        (x.sum() - 1.0, DVector::from_element(x.len(), 1.0))
                    }),
                }],
                ineq_constraints: (0..self.n_slots)
                    .map(|l| Constraint {
                        eval: Box::new(move |x: &DVector<f64>| {
                            let mut g = DVector::zeros(x.len());
                            g[l] = 1.0;
                            (x[l], g)
                        }),
                    })
                    .collect(),
            };
            if let Ok((cand, _)) = sqp_minimize(&problem, &rho, &sqp_opts) {
                let mut cand = cand.map(|v| v.max(0.0));
                let total = cand.sum();
                if total > 0.0 {
                    cand /= total;
                    if obj.mismatch(&cand, &phases) <= current + AO_MONOTONE_SLACK {
                        rho = cand;
                    }
                }
            }
            let after_power = obj.mismatch(&rho, &phases);

            // Phase step: unconstrained (phases live on the circle; SQP
            // iterates freely and the result is wrapped afterwards).
            let flat0 = DVector::from_fn(self.n_b * self.n_slots, |idx, _| {
                phases[(idx % self.n_b, idx / self.n_b)]
            });
            let pv = obj.phase_val_grad(&rho);
            let problem = SqpProblem {
                objective: Box::new(&pv),
                eq_constraints: vec![],
                ineq_constraints: vec![],
            };
            if let Ok((flat, _)) = sqp_minimize(&problem, &flat0, &sqp_opts) {
                let cand = DMatrix::from_fn(self.n_b, self.n_slots, |i, c| {
                    flat[c * self.n_b + i].rem_euclid(TAU)
                });
                if obj.mismatch(&rho, &cand) <= after_power + AO_MONOTONE_SLACK {
                    phases = cand;
                }
            }

            let value = obj.mismatch(&rho, &phases);
            if !value.is_finite() {
                return Err(Error::NonFinite("analog mismatch objective"));
            }
            trace.push(value.min(current));
            if current - value < AO_REL_TOL * current.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }

        let bf = AnalogBeamformer {
            powers: &rho * self.power / rho.sum(),
            phases: phases.map(|p| p.rem_euclid(TAU)),
        };
        bf.validate(self.power)?;
        Ok((bf, trace))
    }
}

/// Full-dimension constant-modulus design: alternation against the
/// single-objective covariance optima of the unconstrained design.
/// Returns the beamformer, its reconstructed bank, and the objective
/// trace.
pub fn design_analog_fdb_with(
    designer: &DigitalDesigner,
    alpha: f64,
    init: Option<&DMatrix<f64>>,
) -> Result<(AnalogBeamformer, BeamformerSet, Vec<f64>)> {
    let (v_hi, v_lo) = designer.guide_covariances()?;
    let alt = FdbAlternation::new(designer.config(), v_hi, v_lo)?;
    let (bf, trace) = alt.solve(alpha, init)?;
    let set =
        BeamformerSet { matrix: bf.reconstruct(), method: DesignMethod::AnalogFdb, alpha };
    Ok((bf, set, trace))
}

/// One-shot convenience wrapper that builds the designer internally.
pub fn design_analog_fdb(
    alpha: f64,
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
    init: Option<&DMatrix<f64>>,
) -> Result<(AnalogBeamformer, BeamformerSet, Vec<f64>)> {
    let designer = DigitalDesigner::new(params, cfg)?;
    design_analog_fdb_with(&designer, alpha, init)
}

/// Constant-modulus codebook: steering codewords unchanged, derivative
/// codewords replaced by beampattern-matched constant-modulus fits.
#[derive(Debug, Clone)]
pub struct AnalogCodebook {
    /// N_B × (2K+2): [a(θ_0)..a(θ_K), f̃_1..f̃_{K+1}].
    pub matrix: DMatrix<Complex64>,
    /// Probe count Ñ of the fitting grid.
    pub probe_count: usize,
    /// Field-fit residual ‖A·T·e^{jφ} − T·ȧ(θ_l)‖² per derivative codeword.
    pub residuals: Vec<f64>,
}

/// Build the constant-modulus codebook on a probe grid of Ñ angles
/// iπ/Ñ, i = 0..Ñ−1 (default Ñ = 16·N_B, minimum 4·N_B).
pub fn build_analog_codebook(
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
    probe_count: Option<usize>,
) -> Result<AnalogCodebook> {
    let n_b = cfg.n_tx_bs;
    let n_probe = probe_count.unwrap_or(16 * n_b);
    if n_probe < 4 * n_b {
        return Err(Error::Invariant {
            field: "probe count",
            message: format!("{n_probe} below minimum {}", 4 * n_b),
        });
    }
    let probes = DMatrix::from_fn(n_probe, n_b, |i, k| {
        steering_vector(i as f64 * PI / n_probe as f64, n_b)[k].conj()
    });
    let k1 = params.aod.len();
    let fits: Vec<_> = params
        .aod
        .par_iter()
        .map(|&theta| {
            gradient_projection_unit_modulus(&steering_derivative(theta, n_b), &probes)
        })
        .collect();
    let mut matrix = DMatrix::zeros(n_b, 2 * k1);
    for (k, &theta) in params.aod.iter().enumerate() {
        matrix.set_column(k, &steering_vector(theta, n_b));
        matrix.set_column(k1 + k, &fits[k].vector());
    }
    Ok(AnalogCodebook {
        matrix,
        probe_count: n_probe,
        residuals: fits.iter().map(|f| f.residual).collect(),
    })
}

/// Per-codeword power allocation over the constant-modulus codebook:
/// the covariance-mismatch allocation of the unconstrained scheme with
/// the design basis replaced.
pub struct AnalogCpaDesigner {
    inner: DigitalDesigner,
    codebook: AnalogCodebook,
}

impl AnalogCpaDesigner {
    pub fn new(params: &ChannelParamSet, cfg: &ScenarioConfig) -> Result<Self> {
        let codebook = build_analog_codebook(params, cfg, None)?;
        let inner = DigitalDesigner::with_basis(params, cfg, codebook.matrix.clone())?;
        Ok(Self { inner, codebook })
    }

    pub fn codebook(&self) -> &AnalogCodebook {
        &self.codebook
    }

    pub fn design(&self, alpha: f64) -> Result<(DVector<f64>, BeamformerSet)> {
        let (rho, mut set) = self.inner.cpa_wcm(alpha)?;
        set.method = DesignMethod::AnalogCpa;
        Ok((rho, set))
    }
}

/// One-shot convenience wrapper around [`AnalogCpaDesigner`].
pub fn design_analog_cpa(
    alpha: f64,
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
) -> Result<(DVector<f64>, BeamformerSet)> {
    AnalogCpaDesigner::new(params, cfg)?.design(alpha)
}

/// Transmit beampattern over an angle grid: b(θ) = Σ_l |a_Bᴴ(θ)·f_l|².
/// With `normalize_db` the result is peak-referenced decibels.
pub fn beampattern(f: &DMatrix<Complex64>, grid: &[f64], normalize_db: bool) -> Vec<f64> {
    let n = f.nrows();
    let mut out: Vec<f64> = grid
        .iter()
        .map(|&theta| {
            let a = steering_vector(theta, n);
            (0..f.ncols()).map(|l| a.dotc(&f.column(l)).norm_sqr()).sum()
        })
        .collect();
    if normalize_db {
        let peak = out.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        for v in &mut out {
            *v = 10.0 * (*v / peak).max(f64::MIN_POSITIVE).log10();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::scenario::derive_channel_params;
    use approx::assert_relative_eq;

    fn small_cfg() -> ScenarioConfig {
        crate::config::load_config(
            "n_tx_bs = 4\nn_rx_ue = 4\nn_targets = 1\nn_subcarriers = 8\nn_slots = 4\n\
             p_targets = [[3.0, 9.0]]",
        )
        .unwrap()
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        let m = DMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
    }

    #[test]
    fn expanded_objective_matches_matrix_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, l) = (5, 3);
        for _ in 0..100 {
            let psi = random_hermitian(n, &mut rng);
            let obj = MismatchObjective { n_b: n, psi: psi.clone(), norm_const: 1.0 };
            let rho = DVector::from_fn(l, |_, _| rng.gen::<f64>());
            let phases = DMatrix::from_fn(n, l, |_, _| rng.gen::<f64>() * TAU);
            let matrix_form = obj.quartic(&obj.bank(&rho, &phases));
            let expanded = expanded_quartic(&rho, &phases, &psi);
            assert_relative_eq!(matrix_form, expanded, max_relative = 1e-10);
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, l) = (4, 3);
        let psi = random_hermitian(n, &mut rng);
        let obj = MismatchObjective { n_b: n, psi, norm_const: 1.0 };
        let rho = DVector::from_fn(l, |_, _| 0.1 + rng.gen::<f64>());
        let phases = DMatrix::from_fn(n, l, |_, _| rng.gen::<f64>() * TAU);
        let h = 1e-6;

        let pv = obj.power_val_grad(&phases);
        let (_, grad) = pv(&rho);
        for i in 0..l {
            let mut hi = rho.clone();
            let mut lo = rho.clone();
            hi[i] += h;
            lo[i] -= h;
            let fd = (pv(&hi).0 - pv(&lo).0) / (2.0 * h);
            assert_relative_eq!(grad[i], fd, max_relative = 1e-5, epsilon = 1e-9);
        }

        let flat = DVector::from_fn(n * l, |idx, _| phases[(idx % n, idx / n)]);
        let pv = obj.phase_val_grad(&rho);
        let (_, grad) = pv(&flat);
        for i in 0..n * l {
            let mut hi = flat.clone();
            let mut lo = flat.clone();
            hi[i] += h;
            lo[i] -= h;
            let fd = (pv(&hi).0 - pv(&lo).0) / (2.0 * h);
            assert_relative_eq!(grad[i], fd, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn attainable_target_is_matched() {
        // α = 1 with a guide that is itself a constant-modulus rank-L
        // covariance: the alternation should drive the mismatch to zero.
        let mut cfg = small_cfg();
        cfg.n_slots = 2;
        let p = cfg.power_per_subcarrier();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phases =
            DMatrix::from_fn(cfg.n_tx_bs, cfg.n_slots, |_, _| rng.gen::<f64>() * TAU);
        let target = AnalogBeamformer {
            powers: DVector::from_vec(vec![0.6 * p, 0.4 * p]),
            phases: phases.clone(),
        };
        let f = target.reconstruct();
        let v = &f * f.adjoint();
        let alt = FdbAlternation::new(&cfg, v.clone(), v).unwrap();
        let (_, trace) = alt.solve(1.0, Some(&phases)).unwrap();
        let last = *trace.last().unwrap();
        assert!(last < 1e-6, "residual mismatch {last:.3e}");
    }

    #[test]
    fn alternation_is_monotone_and_short() {
        let cfg = small_cfg();
        let params = derive_channel_params(&cfg).unwrap();
        let designer = DigitalDesigner::new(&params, &cfg).unwrap();
        let (bf, set, trace) = design_analog_fdb_with(&designer, 0.5, None).unwrap();
        assert!(trace.len() >= 2 && trace.len() <= AO_MAX_OUTER + 1);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + AO_MONOTONE_SLACK, "trace must not increase");
        }
        bf.validate(cfg.power_per_subcarrier()).unwrap();
        // Column-wise constant modulus of the reconstructed bank.
        let f = set.matrix;
        for l in 0..f.ncols() {
            let expect = (bf.powers[l] / cfg.n_tx_bs as f64).sqrt();
            for i in 0..f.nrows() {
                assert!((f[(i, l)].norm() - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn analog_mismatch_never_beats_unconstrained_optimum() {
        let cfg = small_cfg();
        let params = derive_channel_params(&cfg).unwrap();
        let designer = DigitalDesigner::new(&params, &cfg).unwrap();
        let (v_hi, v_lo) = designer.guide_covariances().unwrap();
        for &alpha in &[0.3, 0.8] {
            let (bf, _, _) = design_analog_fdb_with(&designer, alpha, None).unwrap();
            let f = bf.reconstruct();
            let g = &f * f.adjoint();
            let analog = alpha * (&g - &v_hi).norm_squared()
                + (1.0 - alpha) * (&g - &v_lo).norm_squared();
            let (digital, _) = designer.fdb_wcm(alpha).unwrap();
            let gd = &digital.matrix;
            let best = alpha * (gd - &v_hi).norm_squared()
                + (1.0 - alpha) * (gd - &v_lo).norm_squared();
            assert!(analog >= best - 1e-9 * best.max(1.0));
        }
    }

    #[test]
    fn codebook_copies_steering_and_is_constant_modulus() {
        let cfg = small_cfg();
        let params = derive_channel_params(&cfg).unwrap();
        let cb = build_analog_codebook(&params, &cfg, None).unwrap();
        assert_eq!(cb.matrix.ncols(), 2 * (cfg.n_targets + 1));
        let a0 = steering_vector(params.aod[0], cfg.n_tx_bs);
        assert!((cb.matrix.column(0) - a0).norm() < 1e-14);
        for l in 0..cb.matrix.ncols() {
            let col = cb.matrix.column(l);
            let m0 = col[0].norm();
            for e in col.iter() {
                assert!((e.norm() - m0).abs() < 1e-12, "column {l} modulus varies");
            }
        }
        assert!(build_analog_codebook(&params, &cfg, Some(cfg.n_tx_bs)).is_err());
    }

    #[test]
    fn codebook_beampatterns_track_derivative_codewords() {
        // Pattern fidelity needs the full-size array: a 4-element
        // constant-modulus fit cannot track a derivative pattern closely.
        let cfg = crate::config::load_config(
            "n_tx_bs = 16\nn_rx_ue = 4\nn_targets = 1\nn_subcarriers = 8\nn_slots = 4\n\
             p_targets = [[3.0, 9.0]]",
        )
        .unwrap();
        let params = derive_channel_params(&cfg).unwrap();
        let cb = build_analog_codebook(&params, &cfg, None).unwrap();
        let k1 = params.aod.len();
        let grid: Vec<f64> =
            (0..256).map(|i| i as f64 * PI / 256.0).collect();
        for (k, &theta) in params.aod.iter().enumerate() {
            let da = steering_derivative(theta, cfg.n_tx_bs);
            let target = DMatrix::from_columns(&[da]);
            let fitted =
                DMatrix::from_columns(&[cb.matrix.column(k1 + k).clone_owned()]);
            let want = beampattern(&target, &grid, true);
            let got = beampattern(&fitted, &grid, true);
            let mask: Vec<usize> =
                (0..grid.len()).filter(|&i| want[i] > -30.0).collect();
            let worst = mask
                .iter()
                .map(|&i| (want[i] - got[i]).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1.5, "pattern deviation {worst:.2} dB at codeword {k}");
        }
    }

    #[test]
    fn cpa_allocation_runs_over_the_analog_codebook() {
        let cfg = small_cfg();
        let params = derive_channel_params(&cfg).unwrap();
        let designer = AnalogCpaDesigner::new(&params, &cfg).unwrap();
        let (rho, set) = designer.design(0.5).unwrap();
        assert_eq!(set.method, DesignMethod::AnalogCpa);
        assert!(rho.iter().all(|&r| r >= 0.0));
        assert_relative_eq!(
            set.power(),
            cfg.power_per_subcarrier(),
            max_relative = 1e-8
        );
        // Each active column is a scaled constant-modulus codeword.
        for l in 0..designer.codebook().matrix.ncols() {
            let col = set.matrix.column(l);
            if col.norm() == 0.0 {
                continue;
            }
            let m0 = col[0].norm();
            for e in col.iter() {
                assert!((e.norm() - m0).abs() < 1e-10 * m0.max(1e-30));
            }
        }
    }

    #[test]
    fn matched_beam_peaks_at_the_steered_angle() {
        let n = 8;
        let p = 2.0;
        let theta0 = 0.4;
        let col = steering_vector(theta0, n) * Complex64::new((p / n as f64).sqrt(), 0.0);
        let f = DMatrix::from_columns(&[col]);
        let mut grid: Vec<f64> = (0..721).map(|i| -PI / 2.0 + i as f64 * PI / 720.0).collect();
        grid.push(theta0);
        let pat = beampattern(&f, &grid, false);
        let (imax, &peak) = pat
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_relative_eq!(peak, p * n as f64, max_relative = 1e-9);
        assert!((grid[imax] - theta0).abs() < 0.01);
        // Grid-integrated power scales linearly with tr(FFᴴ).
        let pat2 = beampattern(&(f * Complex64::new(2.0, 0.0)), &grid, false);
        let s1: f64 = pat.iter().sum();
        let s2: f64 = pat2.iter().sum();
        assert_relative_eq!(s2, 4.0 * s1, max_relative = 1e-10);
    }
}
