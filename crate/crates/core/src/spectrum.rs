//! Delay-Doppler spectrum of the real part of Γ_m.
//!
//! The grid is the zero-padded 2D DFT (kernel `e^{-j2πkn/N}` on both axes)
//! of `window ⊙ Re(Γ_m)`. A noise-free path with per-symbol phase advance
//! `ν` cycles and delay `τ` shows up as a pair of Dirichlet lobes, one at
//! `(ν·K·G_eff, τ·K_r/T_s)` and its mirror at the negated coordinates.
//! Positive Doppler and delay therefore lie in the quarter plane
//! `k ≤ ⌊rows/2⌋, n ≤ ⌊cols/2⌋`, which is all that peak search and
//! synchronization look at.

use std::io::Write;

use ndarray::Array2;

use crate::waveform::OfdmConfig;
use crate::{fft, Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Rectangular,
    Hamming,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hamming if n == 1 => vec![1.0],
            Window::Hamming => (0..n)
                .map(|i| {
                    0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()
                })
                .collect(),
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rectangular" | "rect" => Ok(Window::Rectangular),
            "hamming" => Ok(Window::Hamming),
            other => Err(Error::Parse { what: "window", detail: other.to_owned() }),
        }
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Window::Rectangular => "rectangular",
            Window::Hamming => "hamming",
        })
    }
}

/// Shape and padding of a spectrum grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumAxes {
    /// Rows of Γ_m before padding.
    pub g_eff: usize,
    pub n_sub: usize,
    /// Padding factor along symbols (`K`).
    pub k_doppler: usize,
    /// Padding factor along subcarriers (`K_r`).
    pub k_range: usize,
    pub window: Window,
}

impl SpectrumAxes {
    pub fn rows(&self) -> usize {
        self.k_doppler * self.g_eff
    }

    pub fn cols(&self) -> usize {
        self.k_range * self.n_sub
    }

    /// Rows `0..=⌊rows/2⌋` of the quarter plane.
    pub fn quarter_rows(&self) -> usize {
        self.rows() / 2 + 1
    }

    pub fn quarter_cols(&self) -> usize {
        self.cols() / 2 + 1
    }

    /// Doppler bin width `1/(K·G_eff·T_sym)`, Hz.
    pub fn f_r(&self, cfg: &OfdmConfig) -> f64 {
        1.0 / (self.rows() as f64 * cfg.t_sym())
    }

    /// Delay bin width `T_s/K_r`, s.
    pub fn t_r(&self, cfg: &OfdmConfig) -> f64 {
        cfg.t_s() / self.k_range as f64
    }

    /// Fractional row of a normalized frequency offset.
    pub fn doppler_bin(&self, xi: f64, cfg: &OfdmConfig) -> f64 {
        cfg.cycles_per_symbol(xi) * self.rows() as f64
    }

    /// Fractional column of a delay.
    pub fn delay_bin(&self, tau: f64, cfg: &OfdmConfig) -> f64 {
        tau * self.k_range as f64 / cfg.t_s()
    }
}

/// Which part of the grid is materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extent {
    Full,
    /// Rows `0..quarter_rows` and columns `0..quarter_cols` only.
    Quarter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerSpectrum {
    pub grid: Array2<Complex64>,
    pub axes: SpectrumAxes,
    pub extent: Extent,
}

impl DelayDopplerSpectrum {
    /// `self + scale · other` on matching grids.
    pub fn plus_scaled(&self, other: &DelayDopplerSpectrum, scale: f64) -> DelayDopplerSpectrum {
        assert_eq!(self.grid.dim(), other.grid.dim(), "spectrum grids differ");
        let mut grid = self.grid.clone();
        grid.zip_mut_with(&other.grid, |a, &b| *a += b * scale);
        DelayDopplerSpectrum { grid, ..*self }
    }

    /// Writes `row,col,magnitude` lines with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,magnitude")?;
        for ((k, n), z) in self.grid.indexed_iter() {
            writeln!(w, "{k},{n},{}", z.norm())?;
        }
        Ok(())
    }
}

fn axes_for(gamma: &Array2<Complex64>, k_doppler: usize, k_range: usize, window: Window) -> Result<SpectrumAxes> {
    if k_doppler == 0 || k_range == 0 {
        return Err(Error::InvalidConfig("padding factors must be at least 1".into()));
    }
    let (g_eff, n_sub) = gamma.dim();
    if g_eff == 0 || n_sub == 0 {
        return Err(Error::InvalidConfig("empty Γ matrix".into()));
    }
    Ok(SpectrumAxes { g_eff, n_sub, k_doppler, k_range, window })
}

/// `window ⊙ Re(Γ)` with the separable window on both axes.
pub fn windowed_real(gamma: &Array2<Complex64>, window: Window) -> Array2<f64> {
    let (g, n) = gamma.dim();
    let wg = window.coefficients(g);
    let wn = window.coefficients(n);
    Array2::from_shape_fn((g, n), |(i, j)| wg[i] * wn[j] * gamma[[i, j]].re)
}

/// Full zero-padded spectrum.
pub fn spectrum(
    gamma: &Array2<Complex64>,
    k_doppler: usize,
    k_range: usize,
    window: Window,
) -> Result<DelayDopplerSpectrum> {
    let axes = axes_for(gamma, k_doppler, k_range, window)?;
    let grid = padded_dft(&windowed_real(gamma, window), &axes, axes.rows(), axes.cols());
    Ok(DelayDopplerSpectrum { grid, axes, extent: Extent::Full })
}

/// Quarter-plane part of [`spectrum`], bitwise identical on the shared cells.
pub fn spectrum_quarter(
    gamma: &Array2<Complex64>,
    k_doppler: usize,
    k_range: usize,
    window: Window,
) -> Result<DelayDopplerSpectrum> {
    let axes = axes_for(gamma, k_doppler, k_range, window)?;
    let grid = padded_dft(&windowed_real(gamma, window), &axes, axes.quarter_rows(), axes.quarter_cols());
    Ok(DelayDopplerSpectrum { grid, axes, extent: Extent::Quarter })
}

/// DFT along rows (two real rows per complex FFT), then along the kept columns.
fn padded_dft(x: &Array2<f64>, axes: &SpectrumAxes, keep_rows: usize, keep_cols: usize) -> Array2<Complex64> {
    let (rows, cols) = (axes.rows(), axes.cols());
    let g = axes.g_eff;
    let row_plan = fft::forward(cols);
    let mut partial = Array2::<Complex64>::zeros((g, keep_cols));
    let mut buf = vec![Complex64::new(0.0, 0.0); cols];
    let mut i = 0;
    while i < g {
        let pair = i + 1 < g;
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for (j, b) in buf.iter_mut().take(axes.n_sub).enumerate() {
            let im = if pair { x[[i + 1, j]] } else { 0.0 };
            *b = Complex64::new(x[[i, j]], im);
        }
        row_plan.process(&mut buf);
        for c in 0..keep_cols {
            let z = buf[c];
            let zm = buf[(cols - c) % cols].conj();
            partial[[i, c]] = (z + zm) * 0.5;
            if pair {
                partial[[i + 1, c]] = (z - zm) * Complex64::new(0.0, -0.5);
            }
        }
        i += 2;
    }
    let col_plan = fft::forward(rows);
    let mut grid = Array2::<Complex64>::zeros((keep_rows, keep_cols));
    let mut cbuf = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..keep_cols {
        cbuf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for r in 0..g {
            cbuf[r] = partial[[r, c]];
        }
        col_plan.process(&mut cbuf);
        for r in 0..keep_rows {
            grid[[r, c]] = cbuf[r];
        }
    }
    grid
}

/// Padded-DFT value at a fractional bin `(k, n)`, evaluated directly.
pub fn spectrum_at(x: &Array2<f64>, axes: &SpectrumAxes, k: f64, n: f64) -> Complex64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let col_phase: Vec<Complex64> = (0..axes.n_sub)
        .map(|j| Complex64::from_polar(1.0, -two_pi * j as f64 * n / axes.cols() as f64))
        .collect();
    x.outer_iter()
        .enumerate()
        .map(|(i, row)| {
            let s: Complex64 = row.iter().zip(&col_phase).map(|(&v, &p)| p * v).sum();
            s * Complex64::from_polar(1.0, -two_pi * i as f64 * k / axes.rows() as f64)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Doppler row `κ` (0-based).
    pub k: usize,
    /// Delay column `ε` (0-based).
    pub n: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakSet {
    /// Sorted by decreasing magnitude.
    pub peaks: Vec<Peak>,
    pub axes: SpectrumAxes,
}

/// Default blind-mode threshold above the median floor.
pub const BLIND_THRESHOLD_DB: f64 = 12.0;

/// `Σ_i w_i e^{-j2π f i}` for a frequency `f` in cycles per sample.
fn window_response(w: &[f64], f: f64) -> Complex64 {
    let step = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f);
    let mut ph = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for &wi in w {
        acc += ph * wi;
        ph *= step;
    }
    acc
}

/// Vertex offset of a parabola through three samples, within ±½.
fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let den = left - 2.0 * mid + right;
    if den >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / den).clamp(-0.5, 0.5)
}

/// Residual quarter plane from which detected paths are removed one by one.
///
/// A path at fractional bin `(α, β)` with complex amplitude `A` contributes
/// `A·W_r(k−α)·W_c(n−β) + A*·W_r(k+α)·W_c(n+β)` to cell `(k, n)`: its own
/// lobe plus the mirror lobe that the real part creates.
struct Cleaner {
    residual: Array2<Complex64>,
    w_row: Vec<f64>,
    w_col: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Cleaner {
    fn new(spec: &DelayDopplerSpectrum) -> Self {
        let a = &spec.axes;
        let qr = a.quarter_rows().min(spec.grid.nrows());
        let qc = a.quarter_cols().min(spec.grid.ncols());
        Self {
            residual: spec.grid.slice(ndarray::s![..qr, ..qc]).to_owned(),
            w_row: a.window.coefficients(a.g_eff),
            w_col: a.window.coefficients(a.n_sub),
            rows: a.rows(),
            cols: a.cols(),
        }
    }

    fn responses(&self, pos: f64, len: usize, total: usize, w: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        (0..len)
            .map(|i| {
                let (d, m) = ((i as f64 - pos) / total as f64, (i as f64 + pos) / total as f64);
                (window_response(w, d), window_response(w, m))
            })
            .unzip()
    }

    /// Fractional position of the residual maximum at cell `(k, n)`.
    fn refine(&self, k: usize, n: usize) -> (f64, f64) {
        let r = &self.residual;
        let mag = |kk: usize, nn: usize| r[[kk, nn]].norm();
        let dk = if k > 0 && k + 1 < r.nrows() { parabolic_offset(mag(k - 1, n), mag(k, n), mag(k + 1, n)) } else { 0.0 };
        let dn = if n > 0 && n + 1 < r.ncols() { parabolic_offset(mag(k, n - 1), mag(k, n), mag(k, n + 1)) } else { 0.0 };
        (k as f64 + dk, n as f64 + dn)
    }

    /// Fits the path at `(α, β)` on the 3×3 patch around `(k, n)` and
    /// subtracts it from the whole residual.
    fn subtract(&mut self, k: usize, n: usize, alpha: f64, beta: f64) {
        let (qr, qc) = self.residual.dim();
        let (rd, rm) = self.responses(alpha, qr, self.rows, &self.w_row);
        let (cd, cm) = self.responses(beta, qc, self.cols, &self.w_col);
        // Real least squares for A = a + jb: R ≈ a(u+v) + jb(u−v).
        let (mut g11, mut g12, mut g22, mut h1, mut h2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for kk in k.saturating_sub(1)..(k + 2).min(qr) {
            for nn in n.saturating_sub(1)..(n + 2).min(qc) {
                let (u, v) = (rd[kk] * cd[nn], rm[kk] * cm[nn]);
                let (p, q) = (u + v, (u - v) * Complex64::i());
                let y = self.residual[[kk, nn]];
                g11 += p.norm_sqr();
                g22 += q.norm_sqr();
                g12 += (p.conj() * q).re;
                h1 += (p.conj() * y).re;
                h2 += (q.conj() * y).re;
            }
        }
        let det = g11 * g22 - g12 * g12;
        if !(det.abs() > 1e-12 * g11 * g22) {
            return;
        }
        let amp = Complex64::new((g22 * h1 - g12 * h2) / det, (g11 * h2 - g12 * h1) / det);
        for ((kk, nn), z) in self.residual.indexed_iter_mut() {
            *z -= amp * rd[kk] * cd[nn] + amp.conj() * rm[kk] * cm[nn];
        }
    }

    /// Strongest residual cell outside one mainlobe of every kept peak.
    fn strongest(&self, kept: &[Peak], gk: usize, gn: usize) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for ((k, n), z) in self.residual.indexed_iter() {
            let v = z.norm();
            if best.is_some_and(|b| v <= b.2) {
                continue;
            }
            if kept.iter().all(|p| p.k.abs_diff(k) >= gk || p.n.abs_diff(n) >= gn) {
                best = Some((k, n, v));
            }
        }
        best
    }
}

/// Upper bound on the number of paths a blind search extracts.
const MAX_BLIND_PEAKS: usize = 64;

/// A residual maximum counts as a new path only if it carries at least
/// this share of the original cell; below that it is a subtraction error
/// on the flank of a path already taken.
const MIN_RESIDUAL_SHARE: f64 = 0.25;

/// Median magnitude of the quarter plane.
fn median_floor(spec: &DelayDopplerSpectrum) -> f64 {
    let rows = spec.axes.quarter_rows().min(spec.grid.nrows());
    let cols = spec.axes.quarter_cols().min(spec.grid.ncols());
    let mut mags: Vec<f64> = spec.grid.slice(ndarray::s![..rows, ..cols]).iter().map(|z| z.norm()).collect();
    let mid = mags.len() / 2;
    *mags.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// Paths extracted strongest first by successive subtraction.
///
/// Each step takes the residual maximum outside one mainlobe (`K` rows by
/// `K_r` columns) of the cells visited so far, so window sidelobes of strong
/// paths are never reported as paths of their own. Stops after `limit`
/// paths or once the residual maximum drops to `stop_below`. Reported
/// magnitudes are those of the original grid.
fn extract_paths(spec: &DelayDopplerSpectrum, limit: usize, stop_below: f64) -> Vec<Peak> {
    let mut clean = Cleaner::new(spec);
    let (gk, gn) = (spec.axes.k_doppler, spec.axes.k_range);
    let mut kept: Vec<Peak> = Vec::new();
    let mut visited: Vec<Peak> = Vec::new();
    let max_visits = 4 * limit + MAX_BLIND_PEAKS;
    while kept.len() < limit && visited.len() < max_visits {
        let Some((k, n, v)) = clean.strongest(&visited, gk, gn) else { break };
        if v <= stop_below {
            break;
        }
        let peak = Peak { k, n, magnitude: spec.grid[[k, n]].norm() };
        visited.push(peak);
        if v < MIN_RESIDUAL_SHARE * peak.magnitude {
            continue;
        }
        let (alpha, beta) = clean.refine(k, n);
        clean.subtract(k, n, alpha, beta);
        kept.push(peak);
    }
    kept.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude).then(a.k.cmp(&b.k)).then(a.n.cmp(&b.n)));
    kept
}

/// The `n_expected` strongest paths of the quarter plane.
pub fn find_peaks(spec: &DelayDopplerSpectrum, n_expected: usize) -> Result<PeakSet> {
    if n_expected == 0 {
        return Err(Error::InvalidConfig("n_expected must be at least 1".into()));
    }
    let kept = extract_paths(spec, n_expected, median_floor(spec));
    if kept.len() < n_expected {
        return Err(Error::InsufficientPeaks { found: kept.len(), expected: n_expected });
    }
    Ok(PeakSet { peaks: kept, axes: spec.axes })
}

/// All paths at least `threshold_db` above the median floor.
pub fn find_peaks_blind(spec: &DelayDopplerSpectrum, threshold_db: f64) -> PeakSet {
    let thr = median_floor(spec) * 10f64.powf(threshold_db / 20.0);
    PeakSet { peaks: extract_paths(spec, MAX_BLIND_PEAKS, thr), axes: spec.axes }
}

/// Bistatic range `ε·R_u/K_r` (m) and range rate `κ·V_u/K` (m/s) of each peak.
pub fn map_to_physical(peaks: &PeakSet, cfg: &OfdmConfig) -> Vec<(f64, f64)> {
    let a = &peaks.axes;
    let r_cell = cfg.range_unit() / a.k_range as f64;
    let v_cell = cfg.velocity_unit(a.g_eff) / a.k_doppler as f64;
    peaks.peaks.iter().map(|p| (p.n as f64 * r_cell, p.k as f64 * v_cell)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(g: usize, n: usize, paths: &[(f64, f64, Complex64)]) -> Array2<Complex64> {
        let two_pi = 2.0 * std::f64::consts::PI;
        Array2::from_shape_fn((g, n), |(i, j)| {
            paths.iter().map(|&(nu, mu, a)| a * Complex64::from_polar(1.0, two_pi * (nu * i as f64 + mu * j as f64))).sum()
        })
    }

    #[test]
    fn subtraction_removes_an_off_grid_path() {
        for window in [Window::Rectangular, Window::Hamming] {
            let gamma = tone(60, 32, &[(0.1234, 0.2071, Complex64::new(0.3, -1.1))]);
            let spec = spectrum_quarter(&gamma, 5, 7, window).unwrap();
            let peak = spec.grid.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let mut clean = Cleaner::new(&spec);
            let (k, n, _) = clean.strongest(&[], 5, 7).unwrap();
            let (a, b) = clean.refine(k, n);
            clean.subtract(k, n, a, b);
            let rest = clean.residual.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(rest < 1e-3 * peak, "{window}: residual {rest} vs peak {peak}");
        }
    }
}
