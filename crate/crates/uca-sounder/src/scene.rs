//! Ground-truth geometry and exact spherical-wave synthesis of element-space
//! channel frequency responses.
//!
//! The array sits in the x-y plane, centered at the origin. Each path is a
//! point scatterer at `(D, theta, phi)` in spherical coordinates with a
//! complex amplitude and a delay referenced to the array center. Synthesis
//! always evaluates the exact element-to-scatterer distance; the plane-wave
//! form exists only as an analysis helper.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::numerics::Mat;
use crate::{Error, Result};

/// Exact speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform circular array of `P` elements on radius `r`, element `p` at
/// angle `2 pi p / P` (zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct UcaGeometry {
    radius_m: f64,
    element_count: usize,
}

impl UcaGeometry {
    pub fn new(radius_m: f64, element_count: usize) -> Result<Self> {
        if !radius_m.is_finite() || radius_m <= 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "radius must be positive and finite, got {radius_m}"
            )));
        }
        if element_count < 3 {
            return Err(Error::InvalidGeometry(format!(
                "need at least 3 elements, got {element_count}"
            )));
        }
        Ok(Self {
            radius_m,
            element_count,
        })
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn element_count(&self) -> usize {
        self.element_count
    }

    /// Angular position of element `p` (zero-based), in `[0, 2 pi)`.
    pub fn element_angle(&self, p: usize) -> f64 {
        debug_assert!(p < self.element_count);
        2.0 * std::f64::consts::PI * p as f64 / self.element_count as f64
    }
}

/// Uniform frequency grid `f_l = f_start + l * spacing`, `l in [0, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    f_start_hz: f64,
    f_stop_hz: f64,
    count: usize,
}

impl FrequencyGrid {
    pub fn new(f_start_hz: f64, f_stop_hz: f64, count: usize) -> Result<Self> {
        if !f_start_hz.is_finite()
            || !f_stop_hz.is_finite()
            || f_start_hz <= 0.0
            || f_stop_hz <= f_start_hz
        {
            return Err(Error::InvalidGrid(format!(
                "need 0 < f_start < f_stop, got {f_start_hz} .. {f_stop_hz}"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {count}"
            )));
        }
        Ok(Self {
            f_start_hz,
            f_stop_hz,
            count,
        })
    }

    pub fn f_start_hz(&self) -> f64 {
        self.f_start_hz
    }

    pub fn f_stop_hz(&self) -> f64 {
        self.f_stop_hz
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor requires at least two points
    }

    pub fn spacing_hz(&self) -> f64 {
        (self.f_stop_hz - self.f_start_hz) / (self.count - 1) as f64
    }

    pub fn frequency_hz(&self, l: usize) -> f64 {
        self.f_start_hz + l as f64 * self.spacing_hz()
    }

    pub fn center_hz(&self) -> f64 {
        0.5 * (self.f_start_hz + self.f_stop_hz)
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.f_stop_hz - self.f_start_hz
    }

    /// Largest delay representable without aliasing, `1 / spacing`.
    pub fn unambiguous_delay_s(&self) -> f64 {
        1.0 / self.spacing_hz()
    }
}

/// Scatterer position: distance from the array center, elevation from the
/// +z axis, azimuth in the array plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScattererLocation {
    pub distance_m: f64,
    pub elevation_rad: f64,
    pub azimuth_rad: f64,
}

impl ScattererLocation {
    pub fn new(distance_m: f64, elevation_rad: f64, azimuth_rad: f64) -> Result<Self> {
        if !distance_m.is_finite() || distance_m <= 0.0 {
            return Err(Error::InvalidScene(format!(
                "scatterer distance must be positive, got {distance_m}"
            )));
        }
        if elevation_rad.is_nan() || elevation_rad <= 0.0 || elevation_rad >= std::f64::consts::PI {
            return Err(Error::InvalidScene(format!(
                "elevation must lie in (0, pi), got {elevation_rad}"
            )));
        }
        if !(0.0..2.0 * std::f64::consts::PI).contains(&azimuth_rad) {
            return Err(Error::InvalidScene(format!(
                "azimuth must lie in [0, 2 pi), got {azimuth_rad}"
            )));
        }
        Ok(Self {
            distance_m,
            elevation_rad,
            azimuth_rad,
        })
    }
}

/// One ground-truth multipath component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTruth {
    pub amplitude: Complex64,
    pub delay_s: f64,
    pub location: ScattererLocation,
}

impl PathTruth {
    pub fn new(amplitude: Complex64, delay_s: f64, location: ScattererLocation) -> Result<Self> {
        if !amplitude.is_finite() || amplitude.norm() == 0.0 {
            return Err(Error::InvalidScene(
                "path amplitude must be nonzero and finite".into(),
            ));
        }
        if !delay_s.is_finite() || delay_s < 0.0 {
            return Err(Error::InvalidScene(format!(
                "path delay must be non-negative, got {delay_s}"
            )));
        }
        Ok(Self {
            amplitude,
            delay_s,
            location,
        })
    }

    pub fn power_db(&self) -> f64 {
        20.0 * self.amplitude.norm().log10()
    }
}

/// Seeded circular complex white noise, mean power `snr_db` below the
/// strongest path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

/// P x L complex channel frequency responses over the array.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementChannelMatrix {
    pub values: Mat<Complex64>,
    pub geometry: UcaGeometry,
    pub grid: FrequencyGrid,
}

impl ElementChannelMatrix {
    pub fn new(values: Mat<Complex64>, geometry: UcaGeometry, grid: FrequencyGrid) -> Result<Self> {
        if values.rows() != geometry.element_count() || values.cols() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "channel matrix is {}x{}, geometry/grid expect {}x{}",
                values.rows(),
                values.cols(),
                geometry.element_count(),
                grid.len()
            )));
        }
        Ok(Self {
            values,
            geometry,
            grid,
        })
    }
}

/// Exact distance from element `p` to the scatterer:
/// `sqrt(D^2 + r^2 - 2 r D sin(theta) cos(phi - phi_p))`.
pub fn element_distance(geom: &UcaGeometry, p: usize, loc: &ScattererLocation) -> f64 {
    let r = geom.radius_m();
    let d = loc.distance_m;
    let phi_p = geom.element_angle(p);
    (d * d + r * r - 2.0 * r * d * loc.elevation_rad.sin() * (loc.azimuth_rad - phi_p).cos()).sqrt()
}

/// Propagation distance of element `p` relative to the array center,
/// `d_p - D`; bounded by the radius in magnitude.
pub fn relative_excess_distance(geom: &UcaGeometry, p: usize, loc: &ScattererLocation) -> f64 {
    element_distance(geom, p, loc) - loc.distance_m
}

/// Plane-wave (far-field) limit of [`relative_excess_distance`]:
/// `-r sin(theta) cos(phi - phi_p)`.
pub fn plane_wave_excess_distance(geom: &UcaGeometry, p: usize, loc: &ScattererLocation) -> f64 {
    -geom.radius_m() * loc.elevation_rad.sin() * (loc.azimuth_rad - geom.element_angle(p)).cos()
}

/// Near-field remainder of the second-order expansion of the excess
/// distance; vanishes as the scatterer recedes.
pub fn near_field_excess(geom: &UcaGeometry, p: usize, loc: &ScattererLocation) -> f64 {
    relative_excess_distance(geom, p, loc) - plane_wave_excess_distance(geom, p, loc)
}

/// Free-space path loss `-20 log10(4 pi d f / c)` in dB.
pub fn friis_path_loss_db(distance_m: f64, frequency_hz: f64) -> f64 {
    -20.0 * (4.0 * std::f64::consts::PI * distance_m * frequency_hz / SPEED_OF_LIGHT).log10()
}

/// Synthesizes the element-space channel matrix for a multipath scene:
/// `H_p(f) = sum_n alpha_n exp(-j 2 pi f tau_n) (D_n / d_pn) exp(-j k Psi_pn)`
/// with `k = 2 pi f / c`, plus optional seeded complex white noise.
pub fn synthesize_channel(
    geom: &UcaGeometry,
    grid: &FrequencyGrid,
    paths: &[PathTruth],
    noise: Option<NoiseSpec>,
) -> Result<ElementChannelMatrix> {
    if paths.is_empty() {
        return Err(Error::InvalidScene("at least one path required".into()));
    }
    let limit = grid.unambiguous_delay_s();
    for (n, path) in paths.iter().enumerate() {
        if path.delay_s >= limit {
            return Err(Error::InvalidScene(format!(
                "path {} delay {:.3} ns exceeds the unambiguous range {:.3} ns",
                n + 1,
                path.delay_s * 1e9,
                limit * 1e9
            )));
        }
        if path.location.distance_m <= geom.radius_m() {
            return Err(Error::InvalidScene(format!(
                "path {} scatterer distance {} m must exceed the array radius {} m",
                n + 1,
                path.location.distance_m,
                geom.radius_m()
            )));
        }
    }

    let p_count = geom.element_count();
    let l_count = grid.len();
    let rows: Vec<Vec<Complex64>> = (0..p_count)
        .into_par_iter()
        .map(|p| {
            let per_path: Vec<(f64, f64, Complex64)> = paths
                .iter()
                .map(|path| {
                    let d = element_distance(geom, p, &path.location);
                    let psi = d - path.location.distance_m;
                    let beta = path.location.distance_m / d;
                    (psi, path.delay_s, path.amplitude * beta)
                })
                .collect();
            (0..l_count)
                .map(|l| {
                    let f = grid.frequency_hz(l);
                    let k = 2.0 * std::f64::consts::PI * f / SPEED_OF_LIGHT;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for &(psi, tau, scaled_amp) in &per_path {
                        let phase = -2.0 * std::f64::consts::PI * f * tau - k * psi;
                        acc += scaled_amp * Complex64::from_polar(1.0, phase);
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let mut values = Mat::from_rows(rows);

    if let Some(spec) = noise {
        let strongest = paths.iter().map(|p| p.amplitude.norm()).fold(0.0, f64::max);
        let power = strongest * strongest * 10f64.powf(-spec.snr_db / 10.0);
        let sigma = (power / 2.0).sqrt();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
        for p in 0..p_count {
            let row = values.row_mut(p);
            for value in row.iter_mut() {
                let (g0, g1) = gaussian_pair(&mut rng);
                *value += Complex64::new(sigma * g0, sigma * g1);
            }
        }
    }

    ElementChannelMatrix::new(values, geom.clone(), grid.clone())
}

/// Plane-wave synthesis counterpart (`beta = 1`, far-field excess distance);
/// analysis helper for convergence checks.
pub fn synthesize_channel_plane_wave(
    geom: &UcaGeometry,
    grid: &FrequencyGrid,
    paths: &[PathTruth],
) -> Result<ElementChannelMatrix> {
    if paths.is_empty() {
        return Err(Error::InvalidScene("at least one path required".into()));
    }
    let p_count = geom.element_count();
    let l_count = grid.len();
    let rows: Vec<Vec<Complex64>> = (0..p_count)
        .map(|p| {
            (0..l_count)
                .map(|l| {
                    let f = grid.frequency_hz(l);
                    let k = 2.0 * std::f64::consts::PI * f / SPEED_OF_LIGHT;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for path in paths {
                        let psi = plane_wave_excess_distance(geom, p, &path.location);
                        let phase = -2.0 * std::f64::consts::PI * f * path.delay_s - k * psi;
                        acc += path.amplitude * Complex64::from_polar(1.0, phase);
                    }
                    acc
                })
                .collect()
        })
        .collect();
    ElementChannelMatrix::new(Mat::from_rows(rows), geom.clone(), grid.clone())
}

/// Box-Muller pair of independent standard normal samples.
fn gaussian_pair<R: Rng>(rng: &mut R) -> (f64, f64) {
    let u1: f64 = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.random();
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = 2.0 * std::f64::consts::PI * u2;
    (radius * angle.cos(), radius * angle.sin())
}
