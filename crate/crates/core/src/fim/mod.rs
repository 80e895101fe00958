//! Fisher-information machinery: channel-domain FIMs, geometric
//! Jacobians, position-domain FIMs, Schur-complement reductions, and the
//! positioning/sensing error bounds, including the fused two-receiver
//! bound.

pub mod channel;
pub mod crb;
pub mod jacobian;

pub use channel::{bp_factors, channel_fim_bp, channel_fim_ms, ms_factors, FimFactors};
pub use crb::{
    crb_bp, crb_ms, efim_blocks, fused_fim, position_fim, sym_inverse_checked, EfimBlocks,
    PositionFim,
};
pub use jacobian::{jacobian_bp, jacobian_ms};

use nalgebra::DMatrix;

/// Channel-domain FIM. Parameter layout: bistatic
/// [θ₀..θ_K, ψ₀..ψ_K, τ̄₀..τ̄_K, Re β̄, Im β̄] (5K+5); monostatic
/// [θ₀..θ_K, τ₀..τ_K, Re β, Im β] (4K+4).
#[derive(Debug, Clone)]
pub struct ChannelFim {
    pub matrix: DMatrix<f64>,
}
