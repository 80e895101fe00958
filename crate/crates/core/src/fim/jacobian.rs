//! Analytic Jacobians of the channel-domain parameters with respect to
//! the position-domain parameters.
//!
//! Bistatic: ξ̄ = [θ; ψ; τ̄; Re β̄; Im β̄] over
//! η̄ = [p_U; Δφ; p_1..p_K; Δt; Re β̄; Im β̄] ((5K+5)×(4K+6)).
//! Monostatic: ξ = [θ; τ; Re β; Im β] over
//! η = [p_U; p_1..p_K; Re β; Im β] ((4K+4)×(4K+4)).

use nalgebra::DMatrix;

use crate::config::{ScenarioConfig, SPEED_OF_LIGHT};
use crate::scenario::ChannelParamSet;

fn diff(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Gradient of atan2(w_y, w_x) with respect to w: [−w_y, w_x]/‖w‖².
fn angle_grad(w: [f64; 2]) -> [f64; 2] {
    let r2 = w[0] * w[0] + w[1] * w[1];
    [-w[1] / r2, w[0] / r2]
}

/// Gradient of ‖w‖ with respect to w: w/‖w‖.
fn range_grad(w: [f64; 2]) -> [f64; 2] {
    let r = norm(w);
    [w[0] / r, w[1] / r]
}

/// Downlink Jacobian [∂ξ̄_i/∂η̄_j].
pub fn jacobian_bp(params: &ChannelParamSet, cfg: &ScenarioConfig) -> DMatrix<f64> {
    let k1 = params.aod.len();
    let kk = k1 - 1;
    let mut j = DMatrix::zeros(5 * k1, 4 * kk + 6);
    let col_pu = 0;
    let col_phi = 2;
    let col_pk = |k: usize| 3 + 2 * (k - 1);
    let col_dt = 3 + 2 * kk;
    let col_gain = 4 + 2 * kk;

    for k in 0..k1 {
        // Scatterer endpoint of path k in the global frame.
        let sc = if k == 0 { cfg.p_ue } else { cfg.p_targets[k - 1] };
        let pos_col = if k == 0 { col_pu } else { col_pk(k) };

        // θ_k = atan2(sc − p_B): depends on p_U (k=0) or p_k.
        let g = angle_grad(diff(sc, cfg.p_bs));
        j[(k, pos_col)] = g[0];
        j[(k, pos_col + 1)] = g[1];

        // ψ_k = atan2(src − p_U) − Δφ, src = p_B (k=0) or p_k.
        let row = k1 + k;
        let src = if k == 0 { cfg.p_bs } else { cfg.p_targets[k - 1] };
        let w = diff(src, cfg.p_ue);
        let g = angle_grad(w);
        j[(row, col_pu)] = -g[0];
        j[(row, col_pu + 1)] = -g[1];
        if k > 0 {
            j[(row, col_pk(k))] = g[0];
            j[(row, col_pk(k) + 1)] = g[1];
        }
        j[(row, col_phi)] = -1.0;

        // τ̄_0 = ‖p_U − p_B‖/c + Δt; τ̄_k = (‖p_k−p_B‖ + ‖p_U−p_k‖)/c + Δt.
        let row = 2 * k1 + k;
        if k == 0 {
            let g = range_grad(diff(cfg.p_ue, cfg.p_bs));
            j[(row, col_pu)] = g[0] / SPEED_OF_LIGHT;
            j[(row, col_pu + 1)] = g[1] / SPEED_OF_LIGHT;
        } else {
            let g_ue = range_grad(diff(cfg.p_ue, sc));
            j[(row, col_pu)] = g_ue[0] / SPEED_OF_LIGHT;
            j[(row, col_pu + 1)] = g_ue[1] / SPEED_OF_LIGHT;
            let g_b = range_grad(diff(sc, cfg.p_bs));
            let g_u = range_grad(diff(sc, cfg.p_ue));
            j[(row, col_pk(k))] = (g_b[0] + g_u[0]) / SPEED_OF_LIGHT;
            j[(row, col_pk(k) + 1)] = (g_b[1] + g_u[1]) / SPEED_OF_LIGHT;
        }
        j[(row, col_dt)] = 1.0;

        // Gain rows map one-to-one.
        j[(3 * k1 + k, col_gain + k)] = 1.0;
        j[(4 * k1 + k, col_gain + k1 + k)] = 1.0;
    }
    j
}

/// Round-trip Jacobian [∂ξ_i/∂η_j].
pub fn jacobian_ms(params: &ChannelParamSet, cfg: &ScenarioConfig) -> DMatrix<f64> {
    let k1 = params.aod.len();
    let kk = k1 - 1;
    let mut j = DMatrix::zeros(4 * k1, 4 * kk + 4);
    // η ordering: p_U occupies the first position slot (the UE is target 0).
    let pos_col = |k: usize| 2 * k;
    let col_gain = 2 * k1;

    for k in 0..k1 {
        let sc = if k == 0 { cfg.p_ue } else { cfg.p_targets[k - 1] };
        let w = diff(sc, cfg.p_bs);

        let g = angle_grad(w);
        j[(k, pos_col(k))] = g[0];
        j[(k, pos_col(k) + 1)] = g[1];

        // τ_k = 2‖sc − p_B‖/c.
        let g = range_grad(w);
        j[(k1 + k, pos_col(k))] = 2.0 * g[0] / SPEED_OF_LIGHT;
        j[(k1 + k, pos_col(k) + 1)] = 2.0 * g[1] / SPEED_OF_LIGHT;

        j[(2 * k1 + k, col_gain + k)] = 1.0;
        j[(3 * k1 + k, col_gain + k1 + k)] = 1.0;
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::load_config;
    use crate::scenario::derive_channel_params;

    /// Re-derive the channel parameters after perturbing one
    /// position-domain coordinate, holding the random phases fixed.
    fn perturbed_params(
        cfg: &ScenarioConfig,
        col: usize,
        h: f64,
        bistatic: bool,
    ) -> ChannelParamSet {
        let mut c = cfg.clone();
        let kk = cfg.n_targets;
        if bistatic {
            match col {
                0 | 1 => c.p_ue[col] += h,
                2 => c.ue_orientation += h,
                _ if col < 3 + 2 * kk => {
                    let t = (col - 3) / 2;
                    c.p_targets[t][(col - 3) % 2] += h;
                }
                _ if col == 3 + 2 * kk => c.clock_bias += h,
                _ => {} // gain columns handled separately
            }
        } else {
            match col {
                0 | 1 => c.p_ue[col] += h,
                _ if col < 2 + 2 * kk => {
                    let t = (col - 2) / 2;
                    c.p_targets[t][(col - 2) % 2] += h;
                }
                _ => {}
            }
        }
        derive_channel_params(&c).unwrap()
    }

    fn geometric_xi(p: &ChannelParamSet, bistatic: bool) -> Vec<f64> {
        if bistatic {
            p.aod.iter().chain(p.aoa.iter()).chain(p.delay_bp.iter()).copied().collect()
        } else {
            p.aod.iter().chain(p.delay_ms.iter()).copied().collect()
        }
    }

    fn check_against_fd(bistatic: bool) {
        let cfg = load_config("").unwrap();
        let params = derive_channel_params(&cfg).unwrap();
        let j = if bistatic {
            jacobian_bp(&params, &cfg)
        } else {
            jacobian_ms(&params, &cfg)
        };
        let kk = cfg.n_targets;
        let geo_rows = if bistatic { 3 * (kk + 1) } else { 2 * (kk + 1) };
        let geo_cols = if bistatic { 4 + 2 * kk } else { 2 + 2 * kk };
        for col in 0..geo_cols {
            // Positions are meters; the clock-bias column is seconds and
            // needs a far smaller step.
            let h = if bistatic && col == 3 + 2 * kk { 1e-13 } else { 1e-7 };
            let fwd = geometric_xi(&perturbed_params(&cfg, col, h, bistatic), bistatic);
            let bwd = geometric_xi(&perturbed_params(&cfg, col, -h, bistatic), bistatic);
            for row in 0..geo_rows {
                let fd = (fwd[row] - bwd[row]) / (2.0 * h);
                let analytic = j[(row, col)];
                let scale = analytic.abs().max(fd.abs()).max(1e-9);
                assert!(
                    (fd - analytic).abs() / scale < 1e-5,
                    "row {row} col {col}: fd {fd} vs analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn bp_jacobian_matches_finite_difference() {
        check_against_fd(true);
    }

    #[test]
    fn ms_jacobian_matches_finite_difference() {
        check_against_fd(false);
    }

    #[test]
    fn bp_special_columns() {
        let cfg = load_config("").unwrap();
        let params = derive_channel_params(&cfg).unwrap();
        let j = jacobian_bp(&params, &cfg);
        let k1 = cfg.n_targets + 1;
        let col_phi = 2;
        let col_dt = 3 + 2 * cfg.n_targets;
        let phi: Vec<f64> = (0..j.nrows()).map(|r| j[(r, col_phi)]).collect();
        let dt: Vec<f64> = (0..j.nrows()).map(|r| j[(r, col_dt)]).collect();
        assert_eq!(phi.iter().filter(|&&v| v != 0.0).count(), k1);
        assert!(phi.iter().filter(|&&v| v != 0.0).all(|&v| v == -1.0));
        assert_eq!(dt.iter().filter(|&&v| v != 0.0).count(), k1);
        assert!(dt.iter().filter(|&&v| v != 0.0).all(|&v| v == 1.0));
    }

    #[test]
    fn ms_gain_rows_identity() {
        let cfg = load_config("").unwrap();
        let params = derive_channel_params(&cfg).unwrap();
        let j = jacobian_ms(&params, &cfg);
        let k1 = cfg.n_targets + 1;
        let gain = j.view((2 * k1, 2 * k1), (2 * k1, 2 * k1)).clone_owned();
        assert_eq!(gain, DMatrix::identity(2 * k1, 2 * k1));
    }
}
