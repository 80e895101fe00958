//! Channel-domain Fisher information via rank-factored derivatives.
//!
//! Every parameter derivative of the frequency-domain channel is a short
//! sum of rank-one terms g(m)·u vᴴ whose subcarrier dependence is
//! c·ω_m^q·e^{−jω_m τ}. The Slepian-Bangs trace then collapses to inner
//! products of the u-vectors, entries of the compressed covariance
//! UᴴVU (U being the transmit design basis), and cached subcarrier sums
//! T_q(τ_s, τ_t) = Σ_m ω_m^q e^{−jω_m(τ_s−τ_t)}. The full FIM evaluation
//! is therefore independent of the subcarrier count after a one-time
//! O(M·K²) cache build, which makes it cheap to evaluate the FIM as a
//! linear function of the covariance when assembling optimization
//! problems.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::fim::ChannelFim;
use crate::scenario::{build_codebook, steering_derivative, steering_vector, ChannelParamSet};

/// One rank-one derivative term c·ω_m^q·e^{−jω_m τ_d}·u vᴴ. The right
/// vector v is always a column of the transmit design basis and is stored
/// as `col`.
struct Term {
    /// Parameter index this term belongs to.
    param: usize,
    /// Constant complex coefficient c.
    coeff: Complex64,
    /// Power of ω_m in the subcarrier factor (0 or 1).
    omega_pow: usize,
    /// Delay index into the path-delay list.
    delay: usize,
    /// Column index of v in the design basis.
    col: usize,
    /// Receive-side left vector u.
    u: DVector<Complex64>,
}

/// Precomputed factorization of one link's channel FIM as a linear map of
/// the compressed covariance W = UᴴVU.
pub struct FimFactors {
    /// 2N/σ².
    prefactor: f64,
    n_params: usize,
    terms: Vec<Term>,
    /// Gram of the term u-vectors: gram[(t, s)] = u_tᴴ u_s.
    gram: DMatrix<Complex64>,
    /// Subcarrier sums, one (K+1)² table per ω power 0..=2.
    t_tables: [DMatrix<Complex64>; 3],
    /// Transmit design basis U (N_B × (2K+2)).
    codebook: DMatrix<Complex64>,
}

fn subcarrier_tables(cfg: &ScenarioConfig, delays: &[f64]) -> [DMatrix<Complex64>; 3] {
    let n = delays.len();
    let df = cfg.subcarrier_spacing();
    let mut tables = [
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
        DMatrix::zeros(n, n),
    ];
    for s in 0..n {
        for t in 0..n {
            let dtau = delays[s] - delays[t];
            let mut acc = [Complex64::default(); 3];
            for m in 1..=cfg.n_subcarriers {
                let omega = 2.0 * std::f64::consts::PI * m as f64 * df;
                let e = Complex64::from_polar(1.0, -omega * dtau);
                acc[0] += e;
                acc[1] += e * omega;
                acc[2] += e * omega * omega;
            }
            for q in 0..3 {
                tables[q][(s, t)] = acc[q];
            }
        }
    }
    tables
}

fn assemble(
    cfg: &ScenarioConfig,
    params: &ChannelParamSet,
    n_params: usize,
    delays: &[f64],
    terms: Vec<Term>,
) -> FimFactors {
    let n_terms = terms.len();
    let mut gram = DMatrix::zeros(n_terms, n_terms);
    for t in 0..n_terms {
        for s in 0..n_terms {
            gram[(t, s)] = terms[t].u.dotc(&terms[s].u);
        }
    }
    FimFactors {
        prefactor: 2.0 * cfg.n_observations() / cfg.noise_power(),
        n_params,
        terms,
        gram,
        t_tables: subcarrier_tables(cfg, delays),
        codebook: build_codebook(cfg, params),
    }
}

/// Factor the downlink FIM (parameters [θ; ψ; τ̄; Re β̄; Im β̄]).
pub fn bp_factors(cfg: &ScenarioConfig, params: &ChannelParamSet) -> FimFactors {
    let k1 = params.aod.len();
    let nu = cfg.n_rx_ue;
    let j = Complex64::i();
    let mut terms = Vec::with_capacity(5 * k1);
    for k in 0..k1 {
        let b = steering_vector(params.aoa[k], nu);
        let db = steering_derivative(params.aoa[k], nu);
        let beta = params.gain_bp[k];
        // ∂/∂θ_k = β̄ e^{−jωτ̄} b ȧᴴ
        terms.push(Term { param: k, coeff: beta, omega_pow: 0, delay: k, col: k1 + k, u: b.clone() });
        // ∂/∂ψ_k = β̄ e^{−jωτ̄} ḃ aᴴ
        terms.push(Term { param: k1 + k, coeff: beta, omega_pow: 0, delay: k, col: k, u: db });
        // ∂/∂τ̄_k = −jω β̄ e^{−jωτ̄} b aᴴ
        terms.push(Term { param: 2 * k1 + k, coeff: -j * beta, omega_pow: 1, delay: k, col: k, u: b.clone() });
        // ∂/∂Re β̄_k and ∂/∂Im β̄_k
        terms.push(Term { param: 3 * k1 + k, coeff: Complex64::new(1.0, 0.0), omega_pow: 0, delay: k, col: k, u: b.clone() });
        terms.push(Term { param: 4 * k1 + k, coeff: j, omega_pow: 0, delay: k, col: k, u: b });
    }
    assemble(cfg, params, 5 * k1, &params.delay_bp, terms)
}

/// Factor the round-trip FIM (parameters [θ; τ; Re β; Im β]).
pub fn ms_factors(cfg: &ScenarioConfig, params: &ChannelParamSet) -> FimFactors {
    let k1 = params.aod.len();
    let nb = cfg.n_tx_bs;
    let j = Complex64::i();
    let mut terms = Vec::with_capacity(5 * k1);
    for k in 0..k1 {
        let a = steering_vector(params.aod[k], nb);
        let da = steering_derivative(params.aod[k], nb);
        let beta = params.gain_ms[k];
        // ∂/∂θ_k = β e^{−jωτ}(ȧ aᴴ + a ȧᴴ): two rank-one terms
        terms.push(Term { param: k, coeff: beta, omega_pow: 0, delay: k, col: k, u: da });
        terms.push(Term { param: k, coeff: beta, omega_pow: 0, delay: k, col: k1 + k, u: a.clone() });
        // ∂/∂τ_k = −jω β e^{−jωτ} a aᴴ
        terms.push(Term { param: k1 + k, coeff: -j * beta, omega_pow: 1, delay: k, col: k, u: a.clone() });
        terms.push(Term { param: 2 * k1 + k, coeff: Complex64::new(1.0, 0.0), omega_pow: 0, delay: k, col: k, u: a.clone() });
        terms.push(Term { param: 3 * k1 + k, coeff: j, omega_pow: 0, delay: k, col: k, u: a });
    }
    assemble(cfg, params, 4 * k1, &params.delay_ms, terms)
}

impl FimFactors {
    /// Number of FIM rows/columns.
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// The transmit design basis U used to compress the covariance.
    pub fn codebook(&self) -> &DMatrix<Complex64> {
        &self.codebook
    }

    /// FIM from the compressed covariance W = UᴴVU ((2K+2) square).
    pub fn fim_given_w(&self, w: &DMatrix<Complex64>) -> Result<DMatrix<f64>> {
        let dim = self.codebook.ncols();
        if w.nrows() != dim || w.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: w.nrows(),
                context: "compressed covariance",
            });
        }
        let mut fim = DMatrix::zeros(self.n_params, self.n_params);
        for (ti, t) in self.terms.iter().enumerate() {
            for (si, s) in self.terms.iter().enumerate() {
                // Σ_m g_s(m)·conj(g_t(m)) · (u_tᴴu_s) · (v_sᴴ V v_t)
                let val = s.coeff
                    * t.coeff.conj()
                    * self.gram[(ti, si)]
                    * w[(s.col, t.col)]
                    * self.t_tables[s.omega_pow + t.omega_pow][(s.delay, t.delay)];
                fim[(t.param, s.param)] += self.prefactor * val.re;
            }
        }
        // Exact symmetry despite floating-point accumulation order.
        let ft = fim.transpose();
        Ok((fim + ft) * 0.5)
    }

    /// FIM from the full transmit covariance V = FFᴴ (N_B square).
    pub fn fim(&self, cov: &DMatrix<Complex64>) -> Result<DMatrix<f64>> {
        let nb = self.codebook.nrows();
        if cov.nrows() != nb || cov.ncols() != nb {
            return Err(Error::DimensionMismatch {
                expected: nb,
                got: cov.nrows(),
                context: "transmit covariance",
            });
        }
        let w = self.codebook.adjoint() * cov * &self.codebook;
        self.fim_given_w(&w)
    }
}

/// Downlink channel FIM (5K+5) for transmit covariance `cov`.
pub fn channel_fim_bp(
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
    cov: &DMatrix<Complex64>,
) -> Result<ChannelFim> {
    Ok(ChannelFim { matrix: bp_factors(cfg, params).fim(cov)? })
}

/// Round-trip channel FIM (4K+4) for transmit covariance `cov`.
pub fn channel_fim_ms(
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
    cov: &DMatrix<Complex64>,
) -> Result<ChannelFim> {
    Ok(ChannelFim { matrix: ms_factors(cfg, params).fim(cov)? })
}
