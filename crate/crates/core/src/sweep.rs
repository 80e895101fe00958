//! Batch sweep engine and artifact emission.
//!
//! A sweep runs one design method over an α grid, evaluates both error
//! bounds at every point (optionally through the fused two-receiver
//! information matrix), and emits a CSV curve plus a JSON manifest that
//! replays to byte-identical outputs. Per-point solver failures are
//! recorded in-row and do not abort the sweep.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analog::{beampattern, design_analog_fdb_with, AnalogCpaDesigner};
use crate::config::ScenarioConfig;
use crate::digital::{DesignMethod, DigitalDesigner};
use crate::error::{Error, Result};
use crate::fim::{crb_bp, crb_ms, fused_fim};
use crate::scenario::derive_channel_params;

/// Artifact format version stamped into every manifest.
pub const ARTIFACT_VERSION: &str = "1";

/// One evaluated sweep point. Bound columns are present only on success.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub sqrt_crb_bp_m: Option<f64>,
    pub sqrt_crb_ms_m: Option<f64>,
    pub status: String,
}

impl SweepPoint {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// A full tradeoff curve: points ordered by strictly increasing α.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub method: String,
    pub fused: bool,
    pub scenario_hash: String,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
    /// Digest over the per-point statuses.
    pub solver_digest: String,
}

impl TradeoffCurve {
    pub fn all_ok(&self) -> bool {
        self.points.iter().all(SweepPoint::is_ok)
    }
}

/// Everything needed to reproduce a sweep bit-identically, plus
/// bookkeeping that does not affect the outputs (timestamps, statuses).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub created_unix_s: u64,
    pub method: String,
    pub fused: bool,
    pub alpha_grid: Vec<f64>,
    pub scenario: ScenarioConfig,
    pub point_status: Vec<String>,
}

impl RunManifest {
    /// Re-run the sweep this manifest records.
    pub fn replay(&self) -> Result<TradeoffCurve> {
        let method: DesignMethod = self.method.parse()?;
        run_sweep(&self.scenario, method, &self.alpha_grid, self.fused)
    }
}

/// Uniform n-point grid on [0, 1].
pub fn uniform_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5];
    }
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Invariant { field: "alpha grid", message: "empty".into() });
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Invariant {
                field: "alpha grid",
                message: format!("not strictly increasing at {} -> {}", w[0], w[1]),
            });
        }
    }
    if grid.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
        return Err(Error::Invariant {
            field: "alpha grid",
            message: "values outside [0, 1]".into(),
        });
    }
    Ok(())
}

/// Per-method design context, built once per sweep and shared across
/// points (guide solves are cached inside the designer).
enum MethodContext {
    Digital(DigitalDesigner),
    AnalogCpa(AnalogCpaDesigner),
}

fn design_covariance(
    ctx: &MethodContext,
    method: DesignMethod,
    alpha: f64,
) -> Result<DMatrix<Complex64>> {
    match (ctx, method) {
        (MethodContext::Digital(d), DesignMethod::FdbWcrb) => {
            Ok(d.fdb_wcrb(alpha)?.0.matrix)
        }
        (MethodContext::Digital(d), DesignMethod::CpaWcrb) => {
            Ok(d.cpa_wcrb(alpha)?.1.matrix)
        }
        (MethodContext::Digital(d), DesignMethod::FdbWbf) => {
            Ok(d.fdb_wbf(alpha)?.covariance())
        }
        (MethodContext::Digital(d), DesignMethod::CpaWbf) => {
            Ok(d.cpa_wbf(alpha)?.covariance())
        }
        (MethodContext::Digital(d), DesignMethod::FdbWcm) => {
            Ok(d.fdb_wcm(alpha)?.0.matrix)
        }
        (MethodContext::Digital(d), DesignMethod::CpaWcm) => {
            Ok(d.cpa_wcm(alpha)?.1.covariance())
        }
        (MethodContext::Digital(d), DesignMethod::AnalogFdb) => {
            Ok(design_analog_fdb_with(d, alpha, None)?.1.covariance())
        }
        (MethodContext::AnalogCpa(d), DesignMethod::AnalogCpa) => {
            Ok(d.design(alpha)?.1.covariance())
        }
        _ => Err(Error::Invariant {
            field: "sweep",
            message: format!("context does not support method {method}"),
        }),
    }
}

fn evaluate_point(
    ctx: &MethodContext,
    cfg: &ScenarioConfig,
    method: DesignMethod,
    alpha: f64,
    fused: bool,
) -> SweepPoint {
    let run = || -> Result<(f64, f64)> {
        let cov = design_covariance(ctx, method, alpha)?;
        evaluate_cov_bounds(cfg, &cov, fused)
    };
    match run() {
        Ok((bp, ms)) => SweepPoint {
            alpha,
            sqrt_crb_bp_m: Some(bp),
            sqrt_crb_ms_m: Some(ms),
            status: "ok".into(),
        },
        Err(e) => SweepPoint {
            alpha,
            sqrt_crb_bp_m: None,
            sqrt_crb_ms_m: None,
            status: sanitize_status(&e.to_string()),
        },
    }
}

/// Both √CRBs (m) for a covariance, standalone or fused.
pub fn evaluate_cov_bounds(
    cfg: &ScenarioConfig,
    cov: &DMatrix<Complex64>,
    fused: bool,
) -> Result<(f64, f64)> {
    let params = derive_channel_params(cfg)?;
    let (bp, ms) = if fused {
        let (_, bp, ms) = fused_fim(&params, cfg, cov)?;
        (bp, ms)
    } else {
        (crb_bp(&params, cfg, cov)?, crb_ms(&params, cfg, cov)?)
    };
    if !(bp.is_finite() && bp > 0.0 && ms.is_finite() && ms > 0.0) {
        return Err(Error::NonFinite("error bound"));
    }
    Ok((bp.sqrt(), ms.sqrt()))
}

/// Commas and newlines would break the single-line CSV status column.
fn sanitize_status(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

/// Run `method` over the α grid. Points are evaluated in parallel; the
/// output order follows the grid. Failures are recorded per point.
pub fn run_sweep(
    cfg: &ScenarioConfig,
    method: DesignMethod,
    grid: &[f64],
    fused: bool,
) -> Result<TradeoffCurve> {
    cfg.validate()?;
    validate_grid(grid)?;
    let params = derive_channel_params(cfg)?;
    let ctx = match method {
        DesignMethod::AnalogCpa => MethodContext::AnalogCpa(AnalogCpaDesigner::new(&params, cfg)?),
        _ => MethodContext::Digital(DigitalDesigner::new(&params, cfg)?),
    };
    // Resolve the shared guide solves up front so parallel workers reuse
    // them instead of racing to compute the same thing.
    if let MethodContext::Digital(d) = &ctx {
        match method {
            DesignMethod::FdbWcrb | DesignMethod::CpaWcrb => {}
            DesignMethod::FdbWbf | DesignMethod::FdbWcm | DesignMethod::AnalogFdb => {
                let _ = d.guide_covariances();
            }
            DesignMethod::CpaWbf | DesignMethod::CpaWcm => {
                let _ = d.cpa_wcm(0.5);
            }
            DesignMethod::AnalogCpa => {}
        }
    }
    let points: Vec<SweepPoint> = grid
        .par_iter()
        .map(|&alpha| evaluate_point(&ctx, cfg, method, alpha, fused))
        .collect();
    let mut hasher = Sha256::new();
    for p in &points {
        hasher.update(p.status.as_bytes());
        hasher.update([0]);
    }
    Ok(TradeoffCurve {
        method: method.name().to_string(),
        fused,
        scenario_hash: cfg.scenario_hash(),
        seed: cfg.rng_seed,
        points,
        solver_digest: format!("{:x}", hasher.finalize()),
    })
}

/// Render a float with 12 significant digits.
fn fmt12(v: f64) -> String {
    format!("{v:.11e}")
}

/// CSV rendering of a curve: header plus one line per point, '\n' line
/// endings, 12 significant digits.
pub fn curve_csv(curve: &TradeoffCurve) -> String {
    let mut out = String::from("alpha,sqrt_crb_bp_m,sqrt_crb_ms_m,status\n");
    for p in &curve.points {
        let bp = p.sqrt_crb_bp_m.map_or_else(|| "nan".to_string(), fmt12);
        let ms = p.sqrt_crb_ms_m.map_or_else(|| "nan".to_string(), fmt12);
        // unwrap: writing to a String cannot fail
        writeln!(out, "{},{},{},{}", fmt12(p.alpha), bp, ms, p.status).unwrap();
    }
    out
}

/// Build the manifest that reproduces `curve` from `cfg`.
pub fn build_manifest(
    cfg: &ScenarioConfig,
    grid: &[f64],
    curve: &TradeoffCurve,
) -> RunManifest {
    RunManifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        created_unix_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        method: curve.method.clone(),
        fused: curve.fused,
        alpha_grid: grid.to_vec(),
        scenario: cfg.clone(),
        point_status: curve.points.iter().map(|p| p.status.clone()).collect(),
    }
}

/// Write the curve CSV and its manifest into `dir`; returns the CSV path.
pub fn write_sweep_artifacts(
    dir: &Path,
    cfg: &ScenarioConfig,
    grid: &[f64],
    curve: &TradeoffCurve,
) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let suffix = if curve.fused { "_fused" } else { "" };
    let csv_path = dir.join(format!("sweep_{}{}.csv", curve.method, suffix));
    std::fs::write(&csv_path, curve_csv(curve))?;
    let manifest = build_manifest(cfg, grid, curve);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::ConfigParse(e.to_string()))?;
    std::fs::write(dir.join(format!("sweep_{}{}.json", curve.method, suffix)), json)?;
    Ok(csv_path)
}

/// Load a manifest from JSON text.
pub fn load_manifest(text: &str) -> Result<RunManifest> {
    serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
}

/// Beampattern CSV for one design: `theta_rad,power_db` (peak-referenced)
/// over `resolution` uniform angles on [−π/2, π/2].
pub fn beampattern_csv(
    cfg: &ScenarioConfig,
    method: DesignMethod,
    alpha: f64,
    resolution: usize,
) -> Result<String> {
    if resolution < 2 {
        return Err(Error::Invariant {
            field: "beampattern",
            message: "resolution must be at least 2".into(),
        });
    }
    let params = derive_channel_params(cfg)?;
    let f = match method {
        DesignMethod::FdbWcrb => {
            DigitalDesigner::new(&params, cfg)?.fdb_wcrb(alpha)?.1.matrix
        }
        DesignMethod::CpaWcrb => {
            DigitalDesigner::new(&params, cfg)?.cpa_wcrb(alpha)?.2.matrix
        }
        DesignMethod::FdbWbf => DigitalDesigner::new(&params, cfg)?.fdb_wbf(alpha)?.matrix,
        DesignMethod::CpaWbf => DigitalDesigner::new(&params, cfg)?.cpa_wbf(alpha)?.matrix,
        DesignMethod::FdbWcm => {
            DigitalDesigner::new(&params, cfg)?.fdb_wcm(alpha)?.1.matrix
        }
        DesignMethod::CpaWcm => DigitalDesigner::new(&params, cfg)?.cpa_wcm(alpha)?.1.matrix,
        DesignMethod::AnalogFdb => {
            let d = DigitalDesigner::new(&params, cfg)?;
            design_analog_fdb_with(&d, alpha, None)?.1.matrix
        }
        DesignMethod::AnalogCpa => AnalogCpaDesigner::new(&params, cfg)?.design(alpha)?.1.matrix,
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let grid: Vec<f64> = (0..resolution)
        .map(|i| -half_pi + i as f64 * std::f64::consts::PI / (resolution - 1) as f64)
        .collect();
    let db = beampattern(&f, &grid, true);
    let mut out = String::from("theta_rad,power_db\n");
    for (theta, v) in grid.iter().zip(&db) {
        writeln!(out, "{},{}", fmt12(*theta), fmt12(*v)).unwrap();
    }
    Ok(out)
}

/// Convergence CSV of the alternating analog design at one α:
/// `iteration,objective`, one row per outer iteration. Monotonicity is
/// asserted before anything is written.
pub fn convergence_csv(cfg: &ScenarioConfig, alpha: f64) -> Result<String> {
    let params = derive_channel_params(cfg)?;
    let designer = DigitalDesigner::new(&params, cfg)?;
    let (_, _, trace) = design_analog_fdb_with(&designer, alpha, None)?;
    for (i, w) in trace.windows(2).enumerate() {
        if w[1] > w[0] + 1e-12 {
            return Err(Error::MonotonicityViolation { iteration: i + 1 });
        }
    }
    let mut out = String::from("iteration,objective\n");
    for (i, v) in trace.iter().enumerate() {
        writeln!(out, "{},{}", i, fmt12(*v)).unwrap();
    }
    Ok(out)
}
