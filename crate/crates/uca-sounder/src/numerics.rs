//! Self-contained special functions, discrete Fourier transforms between the
//! frequency grid and the delay grid, and small grid utilities.
//!
//! Everything here is a pure function on immutable inputs and safe to call
//! from multiple threads.

use num_complex::Complex64;

use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Bessel functions of the first kind
// ---------------------------------------------------------------------------

/// Bessel function of the first kind, `J_m(x)`.
///
/// Valid for `x >= 0`; negative orders use `J_{-m}(x) = (-1)^m J_m(x)`.
/// Orders below the argument are generated by forward recurrence from
/// asymptotic `J_0`/`J_1`; otherwise a normalized downward (Miller)
/// recurrence is used, which stays stable for orders far above the
/// argument. Relative accuracy is ~1e-12 away from the zeros of `J_m`.
/// NaN input (or negative `x`) yields NaN.
pub fn bessel_j(order: i32, x: f64) -> f64 {
    let m = order.unsigned_abs() as usize;
    let sign = if order < 0 && order % 2 != 0 {
        -1.0
    } else {
        1.0
    };
    sign * bessel_j_sequence(m, x)[m]
}

/// Derivative `J'_m(x) = (J_{m-1}(x) - J_{m+1}(x)) / 2`.
pub fn bessel_j_prime(order: i32, x: f64) -> f64 {
    0.5 * (bessel_j(order - 1, x) - bessel_j(order + 1, x))
}

/// Computes `J_0(x) ..= J_max_order(x)` in one pass.
///
/// This is the workhorse behind [`bessel_j`] and the per-frequency
/// compensation filters, which need every order up to the mode cap at once.
pub fn bessel_j_sequence(max_order: usize, x: f64) -> Vec<f64> {
    let n = max_order;
    if x.is_nan() || x < 0.0 {
        return vec![f64::NAN; n + 1];
    }
    if x == 0.0 {
        let mut out = vec![0.0; n + 1];
        out[0] = 1.0;
        return out;
    }
    if x > 30.0 && (n as f64) < x {
        // Forward recurrence is stable while the order stays below the
        // argument; seed it with the asymptotic J_0, J_1.
        let mut out = Vec::with_capacity(n + 1);
        out.push(bessel_j01_asymptotic(0, x));
        if n >= 1 {
            out.push(bessel_j01_asymptotic(1, x));
            for m in 1..n {
                let next = (2.0 * m as f64 / x) * out[m] - out[m - 1];
                out.push(next);
            }
        }
        return out;
    }
    bessel_j_sequence_miller(n, x)
}

/// Downward Miller recurrence normalized with `J_0 + 2*sum J_{2k} = 1`.
fn bessel_j_sequence_miller(n: usize, x: f64) -> Vec<f64> {
    let top = n.max(x.ceil() as usize);
    let guard = (40.0 * top as f64).sqrt().ceil() as usize + 12;
    let start = top + guard;

    let mut out = vec![0.0; n + 1];
    let mut above = 0.0_f64; // J_{m+1} (unnormalized)
    let mut cur = 1e-30_f64; // J_m at m = start
    let mut even_sum = 0.0_f64;

    let mut m = start;
    loop {
        if m <= n {
            out[m] = cur;
        }
        if m.is_multiple_of(2) {
            even_sum += if m == 0 { cur } else { 2.0 * cur };
        }
        if m == 0 {
            break;
        }
        let below = (2.0 * m as f64 / x) * cur - above;
        above = cur;
        cur = below;
        m -= 1;

        // Rescale before the unnormalized values overflow.
        if cur.abs() > 1e250 {
            let scale = 1e-250;
            cur *= scale;
            above *= scale;
            even_sum *= scale;
            for v in out.iter_mut().skip(m + 1) {
                *v *= scale;
            }
        }
    }

    let norm = 1.0 / even_sum;
    for v in &mut out {
        *v *= norm;
    }
    out
}

/// Hankel asymptotic expansion of `J_0`/`J_1`, for `x > 30`.
fn bessel_j01_asymptotic(m: u32, x: f64) -> f64 {
    let mu = 4.0 * (m * m) as f64;
    let omega = x - (2.0 * m as f64 + 1.0) * std::f64::consts::FRAC_PI_4;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0_f64;
    let mut prev = f64::INFINITY;
    for k in 1..=30u32 {
        let kf = k as f64;
        term *= (mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * x);
        if term.abs() >= prev {
            break; // asymptotic tail started diverging
        }
        prev = term.abs();
        let negative = matches!(k % 4, 2 | 3);
        let signed = if negative { -term } else { term };
        if k % 2 == 1 {
            q += signed;
        } else {
            p += signed;
        }
        if term.abs() < 1e-18 {
            break;
        }
    }
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * omega.cos() - q * omega.sin())
}

// ---------------------------------------------------------------------------
// Delay grid and frequency <-> delay transforms
// ---------------------------------------------------------------------------

/// Uniform delay grid `tau_i = i * spacing`, `i in [0, count)`.
///
/// The spacing is `1 / (count * freq_spacing)`, so the grid spans one
/// unambiguous delay range `1 / freq_spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayGrid {
    count: usize,
    spacing_s: f64,
}

impl DelayGrid {
    pub fn new(freq_spacing_hz: f64, count: usize) -> Result<Self> {
        if !freq_spacing_hz.is_finite() || freq_spacing_hz <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "frequency spacing must be positive, got {freq_spacing_hz}"
            )));
        }
        if count == 0 {
            return Err(Error::InvalidGrid(
                "delay grid needs at least one point".into(),
            ));
        }
        Ok(Self {
            count,
            spacing_s: 1.0 / (count as f64 * freq_spacing_hz),
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn spacing_s(&self) -> f64 {
        self.spacing_s
    }

    pub fn delay_s(&self, index: usize) -> f64 {
        index as f64 * self.spacing_s
    }

    /// Full unambiguous span `count * spacing = 1 / freq_spacing`.
    pub fn span_s(&self) -> f64 {
        self.count as f64 * self.spacing_s
    }
}

/// Precomputed transform between an `L`-point spectrum on a uniform
/// frequency grid and a `K`-point CIR on the matching [`DelayGrid`].
///
/// Inverse: `x_i = (1/L) * sum_l X_l * exp(+j 2 pi f_l tau_i)`.
/// Forward: `X_l = (L/K) * sum_i x_i * exp(-j 2 pi f_l tau_i)`.
///
/// The forward direction is the exact inverse of the inverse direction for
/// any `K >= L`; both share one twiddle table so the round trip cancels the
/// table's rounding exactly.
pub struct DelayTransform {
    spectrum_len: usize,
    cir_len: usize,
    delay_grid: DelayGrid,
    /// `exp(+j 2 pi k / K)` for `k in [0, K)`.
    twiddles: Vec<Complex64>,
    /// `exp(+j 2 pi f_start tau_i)` for `i in [0, K)`.
    carrier: Vec<Complex64>,
}

impl DelayTransform {
    pub fn new(
        f_start_hz: f64,
        f_spacing_hz: f64,
        spectrum_len: usize,
        cir_len: usize,
    ) -> Result<Self> {
        if spectrum_len == 0 {
            return Err(Error::InvalidGrid(
                "spectrum length must be positive".into(),
            ));
        }
        if cir_len < spectrum_len {
            return Err(Error::InvalidGrid(format!(
                "CIR length {cir_len} must be at least the spectrum length {spectrum_len}"
            )));
        }
        if !f_start_hz.is_finite() || f_start_hz < 0.0 {
            return Err(Error::InvalidGrid(format!(
                "start frequency must be non-negative, got {f_start_hz}"
            )));
        }
        let delay_grid = DelayGrid::new(f_spacing_hz, cir_len)?;
        let k = cir_len as f64;
        let twiddles = (0..cir_len)
            .map(|i| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * i as f64 / k))
            .collect();
        let carrier = (0..cir_len)
            .map(|i| {
                let tau = delay_grid.delay_s(i);
                Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f_start_hz * tau)
            })
            .collect();
        Ok(Self {
            spectrum_len,
            cir_len,
            delay_grid,
            twiddles,
            carrier,
        })
    }

    pub fn spectrum_len(&self) -> usize {
        self.spectrum_len
    }

    pub fn cir_len(&self) -> usize {
        self.cir_len
    }

    pub fn delay_grid(&self) -> &DelayGrid {
        &self.delay_grid
    }

    /// Spectrum -> CIR on the delay grid.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(
            spectrum.len(),
            self.spectrum_len,
            "spectrum length mismatch"
        );
        let k = self.cir_len;
        let norm = 1.0 / self.spectrum_len as f64;
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut idx = 0usize;
            for value in spectrum {
                acc += value * self.twiddles[idx];
                idx += i;
                if idx >= k {
                    idx -= k;
                }
            }
            out.push(acc * self.carrier[i] * norm);
        }
        out
    }

    /// CIR on the delay grid -> spectrum (exact inverse of [`Self::inverse`]).
    pub fn forward(&self, cir: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(cir.len(), self.cir_len, "CIR length mismatch");
        let k = self.cir_len;
        let norm = self.spectrum_len as f64 / k as f64;
        // Fold the carrier in once, then run the conjugate twiddle sums.
        let folded: Vec<Complex64> = cir
            .iter()
            .zip(&self.carrier)
            .map(|(x, c)| x * c.conj())
            .collect();
        let mut out = Vec::with_capacity(self.spectrum_len);
        for l in 0..self.spectrum_len {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut idx = 0usize;
            for value in &folded {
                acc += value * self.twiddles[idx].conj();
                idx += l;
                if idx >= k {
                    idx -= k;
                }
            }
            out.push(acc * norm);
        }
        out
    }
}

/// One-shot inverse transform; see [`DelayTransform::inverse`].
pub fn inverse_ft(
    spectrum: &[Complex64],
    f_start_hz: f64,
    f_spacing_hz: f64,
    zero_pad_to: usize,
) -> Result<Vec<Complex64>> {
    let plan = DelayTransform::new(f_start_hz, f_spacing_hz, spectrum.len(), zero_pad_to)?;
    Ok(plan.inverse(spectrum))
}

/// One-shot forward transform; see [`DelayTransform::forward`].
pub fn forward_ft(
    cir: &[Complex64],
    f_start_hz: f64,
    f_spacing_hz: f64,
    truncate_to: usize,
) -> Result<Vec<Complex64>> {
    let plan = DelayTransform::new(f_start_hz, f_spacing_hz, truncate_to, cir.len())?;
    Ok(plan.forward(cir))
}

// ---------------------------------------------------------------------------
// Dense row-major matrix and peak search
// ---------------------------------------------------------------------------

/// Minimal dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Mat<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            assert_eq!(row.len(), n_cols, "ragged rows");
            data.extend(row);
        }
        Self {
            rows: n_rows,
            cols: n_cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: T) {
        self.data[r * self.cols + c] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn transposed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.data[r * self.cols + c]);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

impl Mat<Complex64> {
    /// Entrywise magnitudes.
    pub fn magnitude(&self) -> Mat<f64> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.norm()).collect(),
        }
    }

    /// Total energy `sum |z|^2`.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Index and value of the largest entry of a magnitude grid.
///
/// Ties break toward the smallest row index, then the smallest column index.
pub fn find_global_peak(grid: &Mat<f64>) -> Result<(usize, usize, f64)> {
    if grid.rows() == 0 || grid.cols() == 0 {
        return Err(Error::EmptyGrid);
    }
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for r in 0..grid.rows() {
        for (c, &v) in grid.row(r).iter().enumerate() {
            debug_assert!(v.is_finite(), "non-finite grid value at ({r}, {c})");
            if v > best.2 {
                best = (r, c, v);
            }
        }
    }
    Ok(best)
}
