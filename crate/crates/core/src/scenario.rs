//! Geometry-to-channel mapping: steering vectors, per-path parameters,
//! free-space gains, and the frequency-domain channel matrices for the
//! downlink (bistatic positioning) and round-trip (monostatic sensing)
//! links.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ScenarioConfig, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Minimum separation (m) between any two nodes before the free-space
/// gain and angle formulas degenerate.
const MIN_SEPARATION: f64 = 1e-6;

/// Per-path channel-domain parameters for both links, paths k = 0..K.
/// Path 0 is the line-of-sight path on the downlink and the UE echo on
/// the round trip.
#[derive(Debug, Clone)]
pub struct ChannelParamSet {
    /// Departure angles θ_k at the BS (rad).
    pub aod: Vec<f64>,
    /// Arrival angles ψ_k in the UE's rotated frame (rad); downlink only.
    pub aoa: Vec<f64>,
    /// Downlink delays τ̄_k (s), clock bias included.
    pub delay_bp: Vec<f64>,
    /// Round-trip delays τ_k (s).
    pub delay_ms: Vec<f64>,
    /// Downlink complex gains β̄_k.
    pub gain_bp: Vec<Complex64>,
    /// Round-trip complex gains β_k.
    pub gain_ms: Vec<Complex64>,
    /// Random phase draws ζ̄_k (downlink).
    pub phase_bp: Vec<f64>,
    /// Random phase draws ζ_k (round trip).
    pub phase_ms: Vec<f64>,
}

/// Half-wavelength centered ULA steering vector: entry i is
/// exp(jπ(i − (n−1)/2)·sin θ).
pub fn steering_vector(angle: f64, n: usize) -> DVector<Complex64> {
    let s = angle.sin();
    let mid = (n as f64 - 1.0) / 2.0;
    DVector::from_fn(n, |i, _| {
        Complex64::from_polar(1.0, std::f64::consts::PI * (i as f64 - mid) * s)
    })
}

/// Element-wise derivative of `steering_vector` with respect to the angle:
/// jπ(i − (n−1)/2)·cos θ · a_i(θ).
pub fn steering_derivative(angle: f64, n: usize) -> DVector<Complex64> {
    let c = angle.cos();
    let mid = (n as f64 - 1.0) / 2.0;
    let a = steering_vector(angle, n);
    DVector::from_fn(n, |i, _| {
        Complex64::new(0.0, std::f64::consts::PI * (i as f64 - mid) * c) * a[i]
    })
}

/// Transmit-side design basis: the N_B × (2K+2) matrix whose columns are
/// the steering vectors at the K+1 departure angles followed by their
/// angle derivatives. Optimal transmit covariances lie in its span.
pub fn build_codebook(cfg: &ScenarioConfig, params: &ChannelParamSet) -> DMatrix<Complex64> {
    let n = cfg.n_tx_bs;
    let k1 = params.aod.len();
    let mut u = DMatrix::zeros(n, 2 * k1);
    for (k, &theta) in params.aod.iter().enumerate() {
        u.set_column(k, &steering_vector(theta, n));
        u.set_column(k1 + k, &steering_derivative(theta, n));
    }
    u
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn angle_of(from: [f64; 2], to: [f64; 2]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

/// One uniform phase on [−π, π] from the scenario RNG. `stream` separates
/// the two links; the word position is fixed per path index so that
/// changing K never perturbs earlier draws.
fn path_phase(seed: u64, stream: u64, k: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(16 * k as u128);
    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
}

/// Map the scenario geometry to per-path channel parameters.
pub fn derive_channel_params(cfg: &ScenarioConfig) -> Result<ChannelParamSet> {
    let k_count = cfg.n_targets;
    let lambda = cfg.wavelength();
    let four_pi = 4.0 * std::f64::consts::PI;

    // Every node pair whose distance enters a denominator must be separated.
    let mut nodes = vec![("p_bs", cfg.p_bs), ("p_ue", cfg.p_ue)];
    for (k, p) in cfg.p_targets.iter().enumerate() {
        nodes.push(("p_targets", *p));
        let _ = k;
    }
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            if dist(nodes[i].1, nodes[j].1) < MIN_SEPARATION {
                return Err(Error::DegenerateGeometry(format!(
                    "{} and {} coincide",
                    nodes[i].0, nodes[j].0
                )));
            }
        }
    }

    let n_paths = k_count + 1;
    let mut out = ChannelParamSet {
        aod: Vec::with_capacity(n_paths),
        aoa: Vec::with_capacity(n_paths),
        delay_bp: Vec::with_capacity(n_paths),
        delay_ms: Vec::with_capacity(n_paths),
        gain_bp: Vec::with_capacity(n_paths),
        gain_ms: Vec::with_capacity(n_paths),
        phase_bp: Vec::with_capacity(n_paths),
        phase_ms: Vec::with_capacity(n_paths),
    };

    for k in 0..n_paths {
        // Path endpoint: the UE for k = 0, target k otherwise.
        let scatterer = if k == 0 { cfg.p_ue } else { cfg.p_targets[k - 1] };
        let d_bs = dist(cfg.p_bs, scatterer);
        let d_sc_ue = dist(scatterer, cfg.p_ue);

        let zeta_bp = path_phase(cfg.rng_seed, 0, k);
        let zeta_ms = path_phase(cfg.rng_seed, 1, k);
        out.phase_bp.push(zeta_bp);
        out.phase_ms.push(zeta_ms);

        // BS frame is aligned with the global axes; the UE frame is
        // rotated by the orientation offset.
        out.aod.push(angle_of(cfg.p_bs, scatterer));
        let source = if k == 0 { cfg.p_bs } else { cfg.p_targets[k - 1] };
        out.aoa.push(angle_of(cfg.p_ue, source) - cfg.ue_orientation);

        let path_len_bp = if k == 0 { d_bs } else { d_bs + d_sc_ue };
        out.delay_bp.push(path_len_bp / SPEED_OF_LIGHT + cfg.clock_bias);
        out.delay_ms.push(2.0 * d_bs / SPEED_OF_LIGHT);

        let amp_bp = if k == 0 {
            lambda / (four_pi * d_bs)
        } else {
            cfg.rcs_bp[k - 1] * lambda / (four_pi.powf(1.5) * d_sc_ue * d_bs)
        };
        out.gain_bp.push(Complex64::from_polar(amp_bp, zeta_bp));

        let amp_ms = cfg.rcs_ms[k] * lambda / (four_pi.powf(1.5) * d_bs * d_bs);
        out.gain_ms.push(Complex64::from_polar(amp_ms, zeta_ms));
    }
    Ok(out)
}

/// Downlink channel matrix (N_U × N_B) on subcarrier m (1-based, m = 1..M):
/// Σ_k β̄_k e^{−j2πmΔf τ̄_k} a_U(ψ_k) a_B(θ_k)ᴴ.
pub fn channel_matrix_bp(
    cfg: &ScenarioConfig,
    params: &ChannelParamSet,
    m: usize,
) -> DMatrix<Complex64> {
    let df = cfg.subcarrier_spacing();
    let mut h = DMatrix::zeros(cfg.n_rx_ue, cfg.n_tx_bs);
    for k in 0..params.aod.len() {
        let phase = -2.0 * std::f64::consts::PI * m as f64 * df * params.delay_bp[k];
        let coeff = params.gain_bp[k] * Complex64::from_polar(1.0, phase);
        let au = steering_vector(params.aoa[k], cfg.n_rx_ue);
        let ab = steering_vector(params.aod[k], cfg.n_tx_bs);
        h += (au * ab.adjoint()) * coeff;
    }
    h
}

/// Round-trip channel matrix (N_B × N_B) on subcarrier m (1-based):
/// Σ_k β_k e^{−j2πmΔf τ_k} a_B(θ_k) a_B(θ_k)ᴴ.
pub fn channel_matrix_ms(
    cfg: &ScenarioConfig,
    params: &ChannelParamSet,
    m: usize,
) -> DMatrix<Complex64> {
    let df = cfg.subcarrier_spacing();
    let mut h = DMatrix::zeros(cfg.n_tx_bs, cfg.n_tx_bs);
    for k in 0..params.aod.len() {
        let phase = -2.0 * std::f64::consts::PI * m as f64 * df * params.delay_ms[k];
        let coeff = params.gain_ms[k] * Complex64::from_polar(1.0, phase);
        let ab = steering_vector(params.aod[k], cfg.n_tx_bs);
        h += (&ab * ab.adjoint()) * coeff;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::load_config;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn steering_norm_is_antenna_count() {
        for &n in &[1usize, 4, 16, 33] {
            let a = steering_vector(0.7, n);
            assert_relative_eq!(a.norm_squared(), n as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn derived_geometry_matches_hand_values() {
        let cfg = load_config("").unwrap();
        let p = derive_channel_params(&cfg).unwrap();
        // LOS departure angle toward [-5, 20] from the origin.
        assert_relative_eq!(p.aod[0], 20f64.atan2(-5.0), max_relative = 1e-12);
        // LOS arrival angle: BS seen from the UE, minus the orientation.
        assert_relative_eq!(
            p.aoa[0],
            (-20f64).atan2(5.0) - cfg.ue_orientation,
            max_relative = 1e-12
        );
        let d = (25f64 + 400.0).sqrt();
        assert_relative_eq!(p.delay_bp[0], d / SPEED_OF_LIGHT + 1e-6, max_relative = 1e-12);
        assert_relative_eq!(p.delay_ms[0], 2.0 * d / SPEED_OF_LIGHT, max_relative = 1e-12);
        // LOS gain amplitude λ/(4πd).
        assert_relative_eq!(
            p.gain_bp[0].norm(),
            cfg.wavelength() / (4.0 * std::f64::consts::PI * d),
            max_relative = 1e-12
        );
        // UE echo amplitude σ₀λ/((4π)^{3/2} d²) with σ₀ = 10.
        assert_relative_eq!(
            p.gain_ms[0].norm(),
            10.0 * cfg.wavelength()
                / ((4.0 * std::f64::consts::PI).powf(1.5) * d * d),
            max_relative = 1e-12
        );
    }

    #[test]
    fn phases_stable_under_target_count() {
        let cfg3 = load_config("").unwrap();
        let cfg1 = load_config("n_targets = 1").unwrap();
        let p3 = derive_channel_params(&cfg3).unwrap();
        let p1 = derive_channel_params(&cfg1).unwrap();
        assert_eq!(p3.phase_bp[..2], p1.phase_bp[..]);
        assert_eq!(p3.phase_ms[..2], p1.phase_ms[..]);
    }

    #[test]
    fn coincident_nodes_rejected() {
        let cfg = load_config("p_ue = [0.0, 0.0]").unwrap();
        assert!(matches!(
            derive_channel_params(&cfg),
            Err(crate::Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn channel_matrix_is_deterministic() {
        let cfg = load_config("").unwrap();
        let pa = derive_channel_params(&cfg).unwrap();
        let pb = derive_channel_params(&cfg).unwrap();
        let ha = channel_matrix_bp(&cfg, &pa, 37);
        let hb = channel_matrix_bp(&cfg, &pb, 37);
        assert_eq!(ha, hb);
    }

    #[test]
    fn ms_channel_single_path_outer_product() {
        // With one path the round-trip channel is coeff · a aᴴ exactly.
        let cfg = load_config(
            "n_targets = 1\np_targets = [[3.0, 9.0]]\nn_slots = 4",
        )
        .unwrap();
        let p = derive_channel_params(&cfg).unwrap();
        let h = channel_matrix_ms(&cfg, &p, 5);
        let df = cfg.subcarrier_spacing();
        // Subtract the UE-echo path; the remainder must equal the target's
        // scaled outer product exactly.
        let a0 = steering_vector(p.aod[0], cfg.n_tx_bs);
        let c0 = p.gain_ms[0]
            * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * 5.0 * df * p.delay_ms[0]);
        let h1 = &h - (&a0 * a0.adjoint()) * c0;
        let a1 = steering_vector(p.aod[1], cfg.n_tx_bs);
        let c1 = p.gain_ms[1]
            * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * 5.0 * df * p.delay_ms[1]);
        let expect = (&a1 * a1.adjoint()) * c1;
        assert!((h1 - &expect).norm() < 1e-12 * expect.norm());
    }

    proptest! {
        #[test]
        fn steering_derivative_matches_finite_difference(
            angle in -1.4f64..1.4,
            n in 2usize..24,
        ) {
            let h = 1e-6;
            let fwd = steering_vector(angle + h, n);
            let bwd = steering_vector(angle - h, n);
            let fd = (fwd - bwd) / Complex64::new(2.0 * h, 0.0);
            let analytic = steering_derivative(angle, n);
            let denom = analytic.norm().max(1e-12);
            prop_assert!((fd - &analytic).norm() / denom < 1e-6);
        }
    }
}
