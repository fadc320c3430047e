//! Successive-cancellation multipath estimation over the beamspace PADP.
//!
//! Each iteration beamforms the current CIR into a PADP, takes the global
//! peak as the next path's delay/azimuth, reads the amplitude off the
//! original (first) PADP, reconstructs the path's delay trajectory across
//! elements under the plane-wave assumption, masks that trajectory out of
//! the CIR, and transforms back. The loop stops when a detection falls
//! outside the dynamic range below the first (strongest) detection.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::beamform::{
    apply_window, compute_padp_with, default_mode_cap, fibf_beam_pattern, phase_mode_transform,
    PadpGrid, SteeringConfig, Window,
};
use crate::numerics::{find_global_peak, DelayGrid, DelayTransform, Mat};
use crate::scene::{ElementChannelMatrix, FrequencyGrid, UcaGeometry, SPEED_OF_LIGHT};
use crate::{Error, Result};

/// One detected multipath component (grid-aligned).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEstimate {
    /// Linear amplitude magnitude read off the PADP.
    pub amplitude: f64,
    /// Phase of the complex PADP cell; needed to re-synthesize the CIR.
    pub phase_rad: f64,
    pub azimuth_rad: f64,
    pub delay_s: f64,
    /// 1-based iteration that produced this estimate.
    pub iteration: usize,
}

impl PathEstimate {
    pub fn power_db(&self) -> f64 {
        20.0 * self.amplitude.log10()
    }
}

/// Settings of the cancellation loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CancellationConfig {
    /// Dynamic range eta (dB): stop once a detection falls this far below
    /// the first one.
    pub dynamic_range_db: f64,
    /// Label threshold eta_t (dB): mask depth below the detected amplitude.
    pub label_threshold_db: f64,
    pub max_iterations: usize,
    pub zero_pad_factor: usize,
    pub azimuth_count: usize,
    pub mode_cap: Option<usize>,
    pub window: Window,
    /// Keep per-iteration PADP/CIR magnitude snapshots in the trace.
    pub record_snapshots: bool,
    /// Diagnostic: read amplitudes off the current residual PADP instead
    /// of the original one, exposing how cancelled paths biased the cell.
    pub amplitude_from_updated: bool,
}

impl Default for CancellationConfig {
    fn default() -> Self {
        Self {
            dynamic_range_db: 40.0,
            label_threshold_db: 40.0,
            max_iterations: 50,
            zero_pad_factor: 4,
            azimuth_count: 720,
            mode_cap: None,
            window: Window::RaisedCosine,
            record_snapshots: false,
            amplitude_from_updated: false,
        }
    }
}

impl CancellationConfig {
    pub fn steering(&self) -> SteeringConfig {
        SteeringConfig {
            azimuth_count: self.azimuth_count,
            zero_pad_factor: self.zero_pad_factor,
            mode_cap: self.mode_cap,
            window: self.window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.steering().validate()?;
        if self.dynamic_range_db.is_nan() || self.dynamic_range_db < 0.0 {
            return Err(Error::InvalidConfig(
                "dynamic range must be non-negative".into(),
            ));
        }
        if self.label_threshold_db.is_nan() || self.label_threshold_db <= 0.0 {
            return Err(Error::InvalidConfig(
                "label threshold must be positive".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("need at least one iteration".into()));
        }
        Ok(())
    }
}

/// Per-iteration record of the cancellation loop.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub estimate: PathEstimate,
    /// False if the detection fell outside the dynamic range (discarded).
    pub accepted: bool,
    /// CIR energy after this iteration's cancellation (entry energy for a
    /// discarded detection).
    pub residual_energy: f64,
    /// |b(tau, phi)| of the PADP this iteration peaked on.
    pub padp_magnitude: Option<Mat<f64>>,
    /// |h_p(tau)| of the CIR this iteration started from.
    pub cir_magnitude: Option<Mat<f64>>,
}

/// Diagnostics for a whole estimation run.
#[derive(Debug, Clone)]
pub struct EstimationTrace {
    pub initial_energy: f64,
    pub iterations: Vec<IterationRecord>,
    pub delays: DelayGrid,
    pub azimuths: Vec<f64>,
}

/// Plane-wave reconstruction of a detected path over the array:
/// `H_p(f) = alpha exp(-j 2 pi f tau) exp(+j k r cos(phi - phi_p))`,
/// with the implicit broadside elevation of the cancellation scheme.
pub fn synthesize_detected_path(
    geom: &UcaGeometry,
    grid: &FrequencyGrid,
    est: &PathEstimate,
) -> ElementChannelMatrix {
    let amp = Complex64::from_polar(est.amplitude, est.phase_rad);
    let rows: Vec<Vec<Complex64>> = (0..geom.element_count())
        .map(|p| {
            let along = (est.azimuth_rad - geom.element_angle(p)).cos() * geom.radius_m();
            (0..grid.len())
                .map(|l| {
                    let f = grid.frequency_hz(l);
                    let k = 2.0 * std::f64::consts::PI * f / SPEED_OF_LIGHT;
                    let phase = -2.0 * std::f64::consts::PI * f * est.delay_s + k * along;
                    amp * Complex64::from_polar(1.0, phase)
                })
                .collect()
        })
        .collect();
    ElementChannelMatrix::new(Mat::from_rows(rows), geom.clone(), grid.clone())
        .expect("dimensions are consistent by construction")
}

/// Label matrix marking the detected path's trajectory: `false` (0) where
/// the synthetic CIR magnitude strictly exceeds
/// `amplitude * 10^(-eta_t/20)`, `true` (1) elsewhere.
pub fn build_label_vector(
    synthetic_cir: &Mat<Complex64>,
    amplitude: f64,
    label_threshold_db: f64,
) -> Mat<bool> {
    let threshold = amplitude * 10f64.powf(-label_threshold_db / 20.0);
    let mut labels = Mat::filled(synthetic_cir.rows(), synthetic_cir.cols(), true);
    for p in 0..synthetic_cir.rows() {
        let src = synthetic_cir.row(p);
        let dst = labels.row_mut(p);
        for (lab, z) in dst.iter_mut().zip(src) {
            *lab = z.norm() <= threshold;
        }
    }
    labels
}

/// Element-wise cancellation `h ⊙ s`: masked cells become zero, all other
/// cells are returned bit-identical.
pub fn cancel_path(cir: &Mat<Complex64>, labels: &Mat<bool>) -> Result<Mat<Complex64>> {
    if cir.rows() != labels.rows() || cir.cols() != labels.cols() {
        return Err(Error::DimensionMismatch(format!(
            "CIR is {}x{}, labels are {}x{}",
            cir.rows(),
            cir.cols(),
            labels.rows(),
            labels.cols()
        )));
    }
    let mut out = cir.clone();
    for p in 0..out.rows() {
        let keep = labels.row(p);
        for (z, &k) in out.row_mut(p).iter_mut().zip(keep) {
            if !k {
                *z = Complex64::new(0.0, 0.0);
            }
        }
    }
    Ok(out)
}

/// Residual power rate: `100 * ||cancelled||^2 / ||original||^2`.
pub fn residual_power_rate(original: &Mat<Complex64>, cancelled: &Mat<Complex64>) -> Result<f64> {
    if original.rows() != cancelled.rows() || original.cols() != cancelled.cols() {
        return Err(Error::DimensionMismatch(format!(
            "original is {}x{}, cancelled is {}x{}",
            original.rows(),
            original.cols(),
            cancelled.rows(),
            cancelled.cols()
        )));
    }
    let denom = original.energy();
    if denom == 0.0 {
        return Err(Error::InvalidScene("original CIR has zero energy".into()));
    }
    Ok(100.0 * cancelled.energy() / denom)
}

fn per_element_inverse(plan: &DelayTransform, spectrum: &Mat<Complex64>) -> Mat<Complex64> {
    let rows: Vec<Vec<Complex64>> = (0..spectrum.rows())
        .into_par_iter()
        .map(|p| plan.inverse(spectrum.row(p)))
        .collect();
    Mat::from_rows(rows)
}

fn per_element_forward(plan: &DelayTransform, cir: &Mat<Complex64>) -> Mat<Complex64> {
    let rows: Vec<Vec<Complex64>> = (0..cir.rows())
        .into_par_iter()
        .map(|p| plan.forward(cir.row(p)))
        .collect();
    Mat::from_rows(rows)
}

/// PADP of an already-windowed channel (window must not be re-applied
/// inside the loop; the spectrum is tapered exactly once).
fn padp_of(
    ch: &ElementChannelMatrix,
    cap: usize,
    steering: &SteeringConfig,
    plan: &DelayTransform,
) -> Result<PadpGrid> {
    let modes = phase_mode_transform(ch, cap)?;
    let beamspace = fibf_beam_pattern(&modes, steering);
    Ok(compute_padp_with(&beamspace, plan))
}

/// Runs the successive-cancellation loop and returns the accepted
/// estimates (detection order) together with the per-iteration trace.
pub fn estimate_paths(
    ch: &ElementChannelMatrix,
    config: &CancellationConfig,
) -> Result<(Vec<PathEstimate>, EstimationTrace)> {
    config.validate()?;
    let steering = config.steering();
    let geom = &ch.geometry;
    let grid = &ch.grid;
    let cap = config
        .mode_cap
        .unwrap_or_else(|| default_mode_cap(geom, grid));
    let plan = DelayTransform::new(
        grid.f_start_hz(),
        grid.spacing_hz(),
        grid.len(),
        grid.len() * config.zero_pad_factor,
    )?;

    let mut current = apply_window(ch, config.window);
    let mut cir = per_element_inverse(&plan, &current.values);
    let initial_energy = cir.energy();

    let padp_orig = padp_of(&current, cap, &steering, &plan)?;
    let mut trace = EstimationTrace {
        initial_energy,
        iterations: Vec::new(),
        delays: plan.delay_grid().clone(),
        azimuths: padp_orig.azimuths.clone(),
    };
    let mut estimates = Vec::new();
    let mut alpha_max = 0.0f64;

    for n in 1..=config.max_iterations {
        let padp_cur = if n == 1 {
            padp_orig.clone()
        } else {
            padp_of(&current, cap, &steering, &plan)?
        };
        let magnitude = padp_cur.values.magnitude();
        let (row, col, peak) = find_global_peak(&magnitude)?;
        if n == 1 && peak == 0.0 {
            return Err(Error::AllZeroPadp);
        }
        let readout = if config.amplitude_from_updated {
            padp_cur.values.at(row, col)
        } else {
            padp_orig.values.at(row, col)
        };
        let estimate = PathEstimate {
            amplitude: readout.norm(),
            phase_rad: readout.arg(),
            azimuth_rad: padp_cur.azimuth_rad(col),
            delay_s: padp_cur.delays.delay_s(row),
            iteration: n,
        };
        if n == 1 {
            alpha_max = estimate.amplitude;
        }
        let floor = alpha_max * 10f64.powf(-config.dynamic_range_db / 20.0);
        let snapshots = config.record_snapshots;

        if n > 1 && estimate.amplitude <= floor {
            // Out of the dynamic range: discard and stop.
            trace.iterations.push(IterationRecord {
                estimate,
                accepted: false,
                residual_energy: cir.energy(),
                padp_magnitude: snapshots.then(|| magnitude.clone()),
                cir_magnitude: snapshots.then(|| cir.magnitude()),
            });
            break;
        }

        let synthetic = synthesize_detected_path(geom, grid, &estimate);
        let synthetic = apply_window(&synthetic, config.window);
        let synthetic_cir = per_element_inverse(&plan, &synthetic.values);
        let labels = build_label_vector(
            &synthetic_cir,
            estimate.amplitude,
            config.label_threshold_db,
        );
        let next = cancel_path(&cir, &labels)?;

        trace.iterations.push(IterationRecord {
            estimate,
            accepted: true,
            residual_energy: next.energy(),
            padp_magnitude: snapshots.then(|| magnitude.clone()),
            cir_magnitude: snapshots.then(|| cir.magnitude()),
        });
        estimates.push(estimate);
        cir = next;
        if estimate.amplitude <= floor {
            break; // eta = 0: the first path closes the dynamic range
        }
        current.values = per_element_forward(&plan, &cir);
    }

    Ok((estimates, trace))
}

/// One residual-power-rate sample of [`rp_sweep`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpSample {
    pub bandwidth_hz: f64,
    pub distance_m: f64,
    pub elevation_deg: f64,
    pub rp_percent: f64,
}

/// Frequency spacing of the sweep grids (the reference sounding setup's
/// 750 points over 2 GHz).
const SWEEP_FREQ_SPACING_HZ: f64 = 2e9 / 749.0;

/// Residual-power-rate study: for every (bandwidth, distance, elevation)
/// combination, synthesize a single unit path at broadside azimuth pi and
/// zero delay, run one detect-and-cancel iteration, and report `R_p`.
pub fn rp_sweep(
    geom: &UcaGeometry,
    center_hz: f64,
    bandwidths_hz: &[f64],
    distances_m: &[f64],
    elevations_deg: &[f64],
    config: &CancellationConfig,
) -> Result<Vec<RpSample>> {
    use crate::scene::{synthesize_channel, PathTruth, ScattererLocation};

    let mut out = Vec::new();
    let single = CancellationConfig {
        max_iterations: 1,
        record_snapshots: false,
        ..*config
    };
    for &bw in bandwidths_hz {
        if bw.is_nan() || bw <= 0.0 || bw >= 2.0 * center_hz {
            return Err(Error::InvalidConfig(format!("bandwidth {bw} out of range")));
        }
        let points = ((bw / SWEEP_FREQ_SPACING_HZ).round() as usize + 1).max(2);
        let grid = FrequencyGrid::new(center_hz - bw / 2.0, center_hz + bw / 2.0, points)?;
        for &d in distances_m {
            for &elev in elevations_deg {
                let loc = ScattererLocation::new(d, elev.to_radians(), std::f64::consts::PI)?;
                let path = PathTruth::new(Complex64::new(1.0, 0.0), 0.0, loc)?;
                let ch = synthesize_channel(geom, &grid, &[path], None)?;
                let (_, trace) = estimate_paths(&ch, &single)?;
                let first = trace
                    .iterations
                    .first()
                    .ok_or_else(|| Error::InvalidScene("no iteration ran".into()))?;
                out.push(RpSample {
                    bandwidth_hz: bw,
                    distance_m: d,
                    elevation_deg: elev,
                    rp_percent: 100.0 * first.residual_energy / trace.initial_energy,
                });
            }
        }
    }
    Ok(out)
}
