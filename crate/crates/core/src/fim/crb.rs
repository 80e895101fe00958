//! Position-domain FIMs, Schur-complement reductions, and the error
//! bounds for both links, including the fused two-receiver bound.
//!
//! All inversions go through a guarded symmetric-eigendecomposition path
//! with Jacobi equilibration: the clock-bias coordinate is in seconds
//! while positions are in meters, so the raw position FIM spans ~17
//! orders of magnitude and must be rescaled before its conditioning can
//! be judged fairly.

use nalgebra::DMatrix;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::fim::channel::{channel_fim_bp, channel_fim_ms};
use crate::fim::jacobian::{jacobian_bp, jacobian_ms};
use crate::fim::ChannelFim;
use crate::scenario::ChannelParamSet;
use num_complex::Complex64;

/// Refuse to invert past this (post-equilibration) condition number.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Position-domain FIM. Layouts: bistatic [p_U; Δφ; p_1..p_K; Δt; Re β̄;
/// Im β̄] (4K+6); monostatic [p_U; p_1..p_K; Re β; Im β] (4K+4); fused
/// [p_1..p_K; p_U; Δφ; Δt; Re β̄; Im β̄; Re β; Im β] (6K+8).
#[derive(Debug, Clone)]
pub struct PositionFim {
    pub matrix: DMatrix<f64>,
}

/// Partition of a position FIM for the Schur-complement reduction
/// [[Y, G], [Gᵀ, Z]] with the retained parameters in the head block.
#[derive(Debug, Clone)]
pub struct EfimBlocks {
    pub y_block: DMatrix<f64>,
    pub g_block: DMatrix<f64>,
    pub z_block: DMatrix<f64>,
    z_inv: DMatrix<f64>,
}

/// Invert a symmetric positive-definite matrix, refusing when the
/// equilibrated condition number exceeds [`CONDITION_LIMIT`].
pub fn sym_inverse_checked(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut scale = Vec::with_capacity(n);
    for i in 0..n {
        let d = a[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::IllPosedBound { condition: f64::INFINITY, limit: CONDITION_LIMIT });
        }
        scale.push(1.0 / d.sqrt());
    }
    let s = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * scale[i] * scale[j]);
    let eig = s.symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if !(min > 0.0) || max / min > CONDITION_LIMIT {
        return Err(Error::IllPosedBound {
            condition: if min > 0.0 { max / min } else { f64::INFINITY },
            limit: CONDITION_LIMIT,
        });
    }
    let inv_s = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
        * eig.eigenvectors.transpose();
    Ok(DMatrix::from_fn(n, n, |i, j| inv_s[(i, j)] * scale[i] * scale[j]))
}

/// Congruence transform Jᵀ·I_chan·J onto the position domain.
pub fn position_fim(channel_fim: &ChannelFim, jacobian: &DMatrix<f64>) -> Result<PositionFim> {
    if jacobian.nrows() != channel_fim.matrix.nrows() {
        return Err(Error::DimensionMismatch {
            expected: channel_fim.matrix.nrows(),
            got: jacobian.nrows(),
            context: "jacobian rows vs channel FIM",
        });
    }
    let m = jacobian.transpose() * &channel_fim.matrix * jacobian;
    let mt = m.transpose();
    Ok(PositionFim { matrix: (m + mt) * 0.5 })
}

/// Partition a position FIM with `head` retained coordinates, verifying
/// the nuisance block is invertible.
pub fn efim_blocks(pf: &PositionFim, head: usize) -> Result<EfimBlocks> {
    let n = pf.matrix.nrows();
    if head >= n {
        return Err(Error::DimensionMismatch { expected: n, got: head, context: "EFIM head size" });
    }
    let tail = n - head;
    let y_block = pf.matrix.view((0, 0), (head, head)).clone_owned();
    let g_block = pf.matrix.view((0, head), (head, tail)).clone_owned();
    let z_block = pf.matrix.view((head, head), (tail, tail)).clone_owned();
    let z_inv = sym_inverse_checked(&z_block)?;
    Ok(EfimBlocks { y_block, g_block, z_block, z_inv })
}

impl EfimBlocks {
    /// Equivalent Fisher information on the head block: Y − G Z⁻¹ Gᵀ.
    pub fn schur_complement(&self) -> DMatrix<f64> {
        let e = &self.y_block - &self.g_block * &self.z_inv * self.g_block.transpose();
        let et = e.transpose();
        (e + et) * 0.5
    }
}

fn crb_from_position_fim(pf: &PositionFim, head: usize) -> Result<f64> {
    let blocks = efim_blocks(pf, head)?;
    let efim = blocks.schur_complement();
    let inv = sym_inverse_checked(&efim)?;
    Ok(inv.trace())
}

/// Positioning bound (m²): trace of the 2×2 inverted EFIM on the UE
/// position, given the transmit covariance.
pub fn crb_bp(
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
    cov: &DMatrix<Complex64>,
) -> Result<f64> {
    let cf = channel_fim_bp(params, cfg, cov)?;
    let pf = position_fim(&cf, &jacobian_bp(params, cfg))?;
    crb_from_position_fim(&pf, 2)
}

/// Sensing bound (m²): trace of the (2K+2)-dim inverted EFIM over all
/// scatterer positions (UE included), given the transmit covariance.
pub fn crb_ms(
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
    cov: &DMatrix<Complex64>,
) -> Result<f64> {
    let cf = channel_fim_ms(params, cfg, cov)?;
    let pf = position_fim(&cf, &jacobian_ms(params, cfg))?;
    crb_from_position_fim(&pf, 2 * cfg.n_targets + 2)
}

/// Fused-receiver bound: stack both links' channel parameters over the
/// union of position parameters [p_1..p_K; p_U; Δφ; Δt; Re β̄; Im β̄;
/// Re β; Im β] and invert once. Returns the fused position FIM plus the
/// (BP, MS) bounds in m².
pub fn fused_fim(
    params: &ChannelParamSet,
    cfg: &ScenarioConfig,
    cov: &DMatrix<Complex64>,
) -> Result<(PositionFim, f64, f64)> {
    let kk = cfg.n_targets;
    let dim = 6 * kk + 8;
    // Column remap of each link's Jacobian into the fused layout.
    let map_bp = |col: usize| -> usize {
        if col < 2 {
            2 * kk + col // p_U
        } else if col == 2 {
            2 * kk + 2 // Δφ
        } else if col < 3 + 2 * kk {
            col - 3 // p_k
        } else if col == 3 + 2 * kk {
            2 * kk + 3 // Δt
        } else {
            2 * kk + 4 + (col - (4 + 2 * kk)) // downlink gains
        }
    };
    let map_ms = |col: usize| -> usize {
        if col < 2 {
            2 * kk + col
        } else if col < 2 + 2 * kk {
            col - 2
        } else {
            4 * kk + 6 + (col - (2 + 2 * kk)) // round-trip gains
        }
    };
    let embed = |j: &DMatrix<f64>, map: &dyn Fn(usize) -> usize| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(j.nrows(), dim);
        for c in 0..j.ncols() {
            out.set_column(map(c), &j.column(c));
        }
        out
    };

    let j_bp = embed(&jacobian_bp(params, cfg), &map_bp);
    let j_ms = embed(&jacobian_ms(params, cfg), &map_ms);
    let f_bp = channel_fim_bp(params, cfg, cov)?.matrix;
    let f_ms = channel_fim_ms(params, cfg, cov)?.matrix;
    let m = j_bp.transpose() * f_bp * &j_bp + j_ms.transpose() * f_ms * &j_ms;
    let mt = m.transpose();
    let pf = PositionFim { matrix: (m + mt) * 0.5 };

    let inv = sym_inverse_checked(&pf.matrix)?;
    let crb_bp = inv.view((2 * kk, 2 * kk), (2, 2)).trace();
    let crb_ms = inv.view((0, 0), (2 * kk + 2, 2 * kk + 2)).trace();
    Ok((pf, crb_bp, crb_ms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::load_config;
    use crate::scenario::derive_channel_params;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cov(n: usize, seed: u64, trace: f64) -> DMatrix<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let v = &a * a.adjoint();
        let t = v.trace().re;
        v * Complex64::new(trace / t, 0.0)
    }

    fn default_setup() -> (ScenarioConfig, ChannelParamSet, DMatrix<Complex64>) {
        let cfg = load_config("").unwrap();
        let params = derive_channel_params(&cfg).unwrap();
        let cov = random_cov(cfg.n_tx_bs, 42, cfg.power_per_subcarrier());
        (cfg, params, cov)
    }

    #[test]
    fn schur_path_matches_direct_inversion() {
        let (cfg, params, cov) = default_setup();
        for (head, pf) in [
            (2usize, {
                let cf = channel_fim_bp(&params, &cfg, &cov).unwrap();
                position_fim(&cf, &jacobian_bp(&params, &cfg)).unwrap()
            }),
            (2 * cfg.n_targets + 2, {
                let cf = channel_fim_ms(&params, &cfg, &cov).unwrap();
                position_fim(&cf, &jacobian_ms(&params, &cfg)).unwrap()
            }),
        ] {
            let schur = crb_from_position_fim(&pf, head).unwrap();
            let direct = sym_inverse_checked(&pf.matrix)
                .unwrap()
                .view((0, 0), (head, head))
                .trace();
            assert_relative_eq!(schur, direct, max_relative = 1e-8);
        }
    }

    #[test]
    fn cov_scaling_scales_crb_inversely() {
        let (cfg, params, cov) = default_setup();
        let c1 = crb_bp(&params, &cfg, &cov).unwrap();
        let c4 = crb_bp(&params, &cfg, &(&cov * Complex64::new(4.0, 0.0))).unwrap();
        assert_relative_eq!(c1 / 4.0, c4, max_relative = 1e-10);
    }

    #[test]
    fn block_diagonal_schur_equals_head() {
        let mut m = DMatrix::<f64>::identity(6, 6) * 3.0;
        m[(0, 1)] = 0.5;
        m[(1, 0)] = 0.5;
        let pf = PositionFim { matrix: m.clone() };
        let blocks = efim_blocks(&pf, 2).unwrap();
        let schur = blocks.schur_complement();
        assert_relative_eq!(
            (schur - m.view((0, 0), (2, 2)).clone_owned()).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn schur_dominated_by_head() {
        let (cfg, params, cov) = default_setup();
        let cf = channel_fim_bp(&params, &cfg, &cov).unwrap();
        let pf = position_fim(&cf, &jacobian_bp(&params, &cfg)).unwrap();
        let blocks = efim_blocks(&pf, 2).unwrap();
        let gap = &blocks.y_block - blocks.schur_complement();
        let eig = gap.symmetric_eigen();
        assert!(eig.eigenvalues.min() > -1e-9 * blocks.y_block.norm());
    }

    #[test]
    fn singular_nuisance_block_is_refused() {
        let pf = PositionFim { matrix: DMatrix::zeros(6, 6) };
        assert!(matches!(efim_blocks(&pf, 2), Err(Error::IllPosedBound { .. })));
    }

    #[test]
    fn fused_never_worse_than_standalone() {
        let (cfg, params, cov) = default_setup();
        let standalone_bp = crb_bp(&params, &cfg, &cov).unwrap();
        let standalone_ms = crb_ms(&params, &cfg, &cov).unwrap();
        let (_, fused_bp, fused_ms) = fused_fim(&params, &cfg, &cov).unwrap();
        assert!(fused_bp <= standalone_bp * (1.0 + 1e-9));
        assert!(fused_ms <= standalone_ms * (1.0 + 1e-9));
    }

    #[test]
    fn fused_reduces_to_bp_when_ms_gains_vanish() {
        let (cfg, params, cov) = default_setup();
        let mut weak = params.clone();
        for g in weak.gain_ms.iter_mut() {
            *g *= 1e-4;
        }
        let standalone = crb_bp(&weak, &cfg, &cov).unwrap();
        let (_, fused_bp, _) = fused_fim(&weak, &cfg, &cov).unwrap();
        assert!(fused_bp <= standalone * (1.0 + 1e-9));
        assert_relative_eq!(fused_bp, standalone, max_relative = 1e-3);
    }

    #[test]
    fn fused_fim_dominates_embedded_standalone() {
        // On K=1 the fused information minus the embedded downlink-only
        // information must be PSD (it equals the round-trip contribution).
        let cfg = load_config("n_targets = 1\nn_slots = 8").unwrap();
        let params = derive_channel_params(&cfg).unwrap();
        let cov = random_cov(cfg.n_tx_bs, 9, cfg.power_per_subcarrier());
        let (pf, _, _) = fused_fim(&params, &cfg, &cov).unwrap();
        // Rebuild the fused matrix with the round-trip link silenced; the
        // difference (the round-trip contribution) must be PSD.
        let m_bp_only = {
            let j = jacobian_bp(&params, &cfg);
            let kk = cfg.n_targets;
            let dim = 6 * kk + 8;
            let mut out = DMatrix::zeros(j.nrows(), dim);
            for c in 0..j.ncols() {
                let mapped = if c < 2 {
                    2 * kk + c
                } else if c == 2 {
                    2 * kk + 2
                } else if c < 3 + 2 * kk {
                    c - 3
                } else if c == 3 + 2 * kk {
                    2 * kk + 3
                } else {
                    2 * kk + 4 + (c - (4 + 2 * kk))
                };
                out.set_column(mapped, &j.column(c));
            }
            let f = channel_fim_bp(&params, &cfg, &cov).unwrap().matrix;
            out.transpose() * f * &out
        };
        let gap = &pf.matrix - m_bp_only;
        let eig = gap.symmetric_eigen();
        assert!(eig.eigenvalues.min() > -1e-9 * pf.matrix.norm());
    }
}
