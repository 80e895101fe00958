//! Experiment configuration: parsing, unit conversion, validation.
//!
//! The configuration document is a flat UTF-8 key-value file (TOML syntax)
//! whose keys match the `ScenarioConfig` field names. Power-like quantities
//! are supplied in dB units (`power_budget` in dBm, `noise_figure` in dB,
//! `noise_psd` in dBm/Hz) and stored in linear SI units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Full experiment description. All fields are in linear SI units.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioConfig {
    /// BS transmit antenna count N_B.
    pub n_tx_bs: usize,
    /// UE receive antenna count N_U.
    pub n_rx_ue: usize,
    /// Number of passive targets K.
    pub n_targets: usize,
    /// BS position (m).
    pub p_bs: [f64; 2],
    /// UE position (m).
    pub p_ue: [f64; 2],
    /// Target positions (m), length K.
    pub p_targets: Vec<[f64; 2]>,
    /// Transmit power budget P_B (W).
    pub power_budget: f64,
    /// Carrier frequency f_c (Hz).
    pub carrier_freq: f64,
    /// Bandwidth W (Hz).
    pub bandwidth: f64,
    /// Subcarrier count M.
    pub n_subcarriers: usize,
    /// Receiver noise figure F (linear).
    pub noise_figure: f64,
    /// Noise power spectral density N_0 (W/Hz).
    pub noise_psd: f64,
    /// Slot count L.
    pub n_slots: usize,
    /// Pilot symbols per slot P.
    pub n_pilots_per_slot: usize,
    /// Clock bias between BS and UE (s).
    pub clock_bias: f64,
    /// UE orientation offset (rad).
    pub ue_orientation: f64,
    /// Bistatic radar cross sections (m^2), one per target k = 1..K.
    pub rcs_bp: Vec<f64>,
    /// Monostatic radar cross sections (m^2), one per scatterer k = 0..K
    /// (the UE is scatterer 0).
    pub rcs_ms: Vec<f64>,
    /// Seed for the channel-phase RNG stream.
    pub rng_seed: u64,
}

/// Raw document form: every field optional, dB-unit inputs.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_tx_bs: Option<usize>,
    n_rx_ue: Option<usize>,
    n_targets: Option<usize>,
    p_bs: Option<[f64; 2]>,
    p_ue: Option<[f64; 2]>,
    p_targets: Option<Vec<[f64; 2]>>,
    /// dBm
    power_budget: Option<f64>,
    carrier_freq: Option<f64>,
    bandwidth: Option<f64>,
    n_subcarriers: Option<usize>,
    /// dB
    noise_figure: Option<f64>,
    /// dBm/Hz
    noise_psd: Option<f64>,
    n_slots: Option<usize>,
    n_pilots_per_slot: Option<usize>,
    clock_bias: Option<f64>,
    ue_orientation: Option<f64>,
    rcs_bp: Option<Vec<f64>>,
    rcs_ms: Option<Vec<f64>>,
    rng_seed: Option<u64>,
}

fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Default target positions; K targets take the first K entries.
const DEFAULT_TARGETS: [[f64; 2]; 3] = [[-10.0, 15.0], [5.0, 15.0], [0.0, 17.0]];

impl Default for ScenarioConfig {
    fn default() -> Self {
        // unwrap: the empty document satisfies every invariant
        load_config("").unwrap()
    }
}

/// Parse and validate a configuration document. Missing keys take the
/// default experiment values; dB-unit inputs are converted to linear SI.
pub fn load_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;

    let n_targets = raw.n_targets.unwrap_or_else(|| {
        raw.p_targets.as_ref().map(Vec::len).unwrap_or(3)
    });
    let p_targets = raw.p_targets.unwrap_or_else(|| {
        DEFAULT_TARGETS
            .iter()
            .cycle()
            .take(n_targets)
            .copied()
            .collect()
    });
    let rcs_bp = raw.rcs_bp.unwrap_or_else(|| vec![100.0; n_targets]);
    let rcs_ms = raw.rcs_ms.unwrap_or_else(|| {
        let mut v = vec![100.0; n_targets + 1];
        v[0] = 10.0;
        v
    });

    let cfg = ScenarioConfig {
        n_tx_bs: raw.n_tx_bs.unwrap_or(16),
        n_rx_ue: raw.n_rx_ue.unwrap_or(16),
        n_targets,
        p_bs: raw.p_bs.unwrap_or([0.0, 0.0]),
        p_ue: raw.p_ue.unwrap_or([-5.0, 20.0]),
        p_targets,
        power_budget: dbm_to_watt(raw.power_budget.unwrap_or(-20.0)),
        carrier_freq: raw.carrier_freq.unwrap_or(28e9),
        bandwidth: raw.bandwidth.unwrap_or(120e6),
        n_subcarriers: raw.n_subcarriers.unwrap_or(1024),
        noise_figure: db_to_linear(raw.noise_figure.unwrap_or(10.0)),
        noise_psd: dbm_to_watt(raw.noise_psd.unwrap_or(-173.855)),
        n_slots: raw.n_slots.unwrap_or(16),
        n_pilots_per_slot: raw.n_pilots_per_slot.unwrap_or(100),
        clock_bias: raw.clock_bias.unwrap_or(1e-6),
        ue_orientation: raw.ue_orientation.unwrap_or(110.0 * std::f64::consts::PI / 180.0),
        rcs_bp,
        rcs_ms,
        rng_seed: raw.rng_seed.unwrap_or(0),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        fn fail(field: &'static str, message: String) -> Result<()> {
            Err(Error::Invariant { field, message })
        }
        if self.n_targets < 1 {
            return fail("n_targets", "K >= 1 required".into());
        }
        if self.n_tx_bs < 1 || self.n_rx_ue < 1 {
            return fail("n_tx_bs", "antenna counts must be >= 1".into());
        }
        if self.n_subcarriers < 2 {
            return fail("n_subcarriers", "M >= 2 required".into());
        }
        if self.n_slots < 2 * self.n_targets + 2 {
            return fail(
                "n_slots",
                format!("L >= 2K+2 = {} required, got {}", 2 * self.n_targets + 2, self.n_slots),
            );
        }
        if self.power_budget <= 0.0 {
            return fail("power_budget", "P_B > 0 required".into());
        }
        if self.bandwidth <= 0.0 || self.carrier_freq <= 0.0 {
            return fail("bandwidth", "carrier_freq and bandwidth must be > 0".into());
        }
        if self.noise_figure <= 0.0 || self.noise_psd <= 0.0 {
            return fail("noise_figure", "noise terms must be > 0 (linear)".into());
        }
        if self.n_pilots_per_slot < 1 {
            return fail("n_pilots_per_slot", "P >= 1 required".into());
        }
        if self.p_targets.len() != self.n_targets {
            return fail(
                "p_targets",
                format!("expected {} positions, got {}", self.n_targets, self.p_targets.len()),
            );
        }
        if self.rcs_bp.len() != self.n_targets {
            return fail(
                "rcs_bp",
                format!("expected {} values (k=1..K), got {}", self.n_targets, self.rcs_bp.len()),
            );
        }
        if self.rcs_ms.len() != self.n_targets + 1 {
            return fail(
                "rcs_ms",
                format!("expected {} values (k=0..K), got {}", self.n_targets + 1, self.rcs_ms.len()),
            );
        }
        if self.rcs_bp.iter().chain(self.rcs_ms.iter()).any(|&s| s <= 0.0) {
            return fail("rcs_bp", "all RCS values must be > 0".into());
        }
        Ok(())
    }

    /// Subcarrier spacing Δf = W / M (Hz).
    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth / self.n_subcarriers as f64
    }

    /// Noise power σ² = F · N_0 · Δf (W).
    pub fn noise_power(&self) -> f64 {
        self.noise_figure * self.noise_psd * self.subcarrier_spacing()
    }

    /// Carrier wavelength λ (m).
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Per-subcarrier power budget P_B / M (W).
    pub fn power_per_subcarrier(&self) -> f64 {
        self.power_budget / self.n_subcarriers as f64
    }

    /// Observation count N = L·P.
    pub fn n_observations(&self) -> f64 {
        (self.n_slots * self.n_pilots_per_slot) as f64
    }

    /// Stable hash of the resolved configuration, for output provenance.
    pub fn scenario_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        // unwrap: ScenarioConfig always serializes
        let canon = serde_json::to_string(self).unwrap();
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_document_gives_paper_defaults() {
        let cfg = load_config("").unwrap();
        assert_eq!(cfg.n_tx_bs, 16);
        assert_eq!(cfg.n_rx_ue, 16);
        assert_eq!(cfg.n_targets, 3);
        assert_relative_eq!(cfg.power_budget, 1e-5, max_relative = 1e-12);
        assert_relative_eq!(cfg.carrier_freq, 28e9);
        assert_relative_eq!(cfg.bandwidth, 120e6);
        assert_eq!(cfg.n_subcarriers, 1024);
        assert_relative_eq!(cfg.noise_figure, 10.0, max_relative = 1e-12);
        assert_relative_eq!(cfg.noise_psd, 10f64.powf(-20.3855), max_relative = 1e-12);
        assert_eq!(cfg.n_slots, 16);
        assert_eq!(cfg.n_pilots_per_slot, 100);
        assert_relative_eq!(cfg.clock_bias, 1e-6);
        assert_relative_eq!(cfg.ue_orientation, 110.0 * std::f64::consts::PI / 180.0);
        assert_eq!(cfg.p_ue, [-5.0, 20.0]);
        assert_eq!(cfg.p_targets.len(), 3);
        assert_eq!(cfg.rcs_ms, vec![10.0, 100.0, 100.0, 100.0]);
        assert_eq!(cfg.rcs_bp, vec![100.0, 100.0, 100.0]);
    }

    #[test]
    fn zero_targets_rejected() {
        let err = load_config("n_targets = 0").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("K >= 1"), "{msg}");
    }

    #[test]
    fn subcarrier_spacing_value() {
        let cfg = load_config("n_subcarriers = 1024\nbandwidth = 120e6").unwrap();
        assert_relative_eq!(cfg.subcarrier_spacing(), 117_187.5);
    }

    #[test]
    fn reduced_target_count_uses_leading_defaults() {
        let cfg = load_config("n_targets = 2").unwrap();
        assert_eq!(cfg.p_targets, vec![[-10.0, 15.0], [5.0, 15.0]]);
        assert_eq!(cfg.rcs_ms, vec![10.0, 100.0, 100.0]);
    }

    #[test]
    fn slot_budget_invariant() {
        let err = load_config("n_targets = 3\nn_slots = 7").unwrap_err();
        assert!(err.to_string().contains("2K+2"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(load_config("bogus_key = 1").is_err());
    }
}
