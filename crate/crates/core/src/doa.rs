//! MUSIC angle estimation and spatial-filter association of angles to
//! delay-Doppler peaks.
//!
//! The manifold depends on `sin φ` only, so `φ` and `π − φ` are
//! indistinguishable; the default search covers `[0, π/2]`.
//!
//! Association filters the cancelled stack with the matched spatial filter
//! `a(φ̂_i)ᴴ`, which passes arrivals from `φ̂_i` with gain `M_R`, takes the
//! real-part DFT of the filtered signal, and gives peak `l` to the angle
//! whose filtered spectrum is largest at the peak's bin.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::preprocess::{argmax, MtiStack};
use crate::spectrum::{spectrum_at, windowed_real, PeakSet, SpectrumAxes};
use crate::waveform::steering_vector;
use crate::{Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for AngleGrid {
    /// 0.1° steps over `[0, π/2]`.
    fn default() -> Self {
        Self { lo: 0.0, hi: std::f64::consts::FRAC_PI_2, step: 0.1f64.to_radians() }
    }
}

impl AngleGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoaEstimate {
    /// Strongest pseudo-spectrum maxima, strongest first.
    pub angles: Vec<f64>,
    pub grid: Vec<f64>,
    pub pseudo_spectrum: Vec<f64>,
}

impl DoaEstimate {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "angle_rad,pseudo_spectrum")?;
        for (a, p) in self.grid.iter().zip(&self.pseudo_spectrum) {
            writeln!(w, "{a},{p}")?;
        }
        Ok(())
    }
}

/// `R = (1/S)·Σ y yᴴ` over every `(symbol, subcarrier)` snapshot.
pub fn spatial_covariance(mti: &MtiStack) -> DMatrix<Complex64> {
    let (rows, m_r, n_sub) = mti.breve_y.dim();
    let snapshots = rows * n_sub;
    let x = mti
        .breve_y
        .view()
        .permuted_axes([1, 0, 2])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((m_r, snapshots))
        .expect("contiguous reshape");
    let xh = x.t().mapv(|z| z.conj());
    let r = x.dot(&xh) / snapshots as f64;
    DMatrix::from_fn(m_r, m_r, |i, j| r[[i, j]])
}

/// MUSIC over `grid`, keeping the `n_sources` largest local maxima.
pub fn estimate_doa(mti: &MtiStack, n_sources: usize, grid: &AngleGrid, d_over_lambda: f64) -> Result<DoaEstimate> {
    let m_r = mti.m_r();
    if n_sources == 0 || n_sources >= m_r {
        return Err(Error::TooManySources { requested: n_sources, antennas: m_r });
    }
    let eig = spatial_covariance(mti).symmetric_eigen();
    let mut order: Vec<usize> = (0..m_r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[m_r - 1]].max(0.0);
    let rank = eig.eigenvalues.iter().filter(|&&v| v > RANK_TOL * largest).count();
    if largest == 0.0 || rank < n_sources {
        return Err(Error::RankDeficient { rank, needed: n_sources });
    }
    let noise: Vec<_> = order[..m_r - n_sources].iter().map(|&c| eig.eigenvectors.column(c).into_owned()).collect();
    let grid_pts = grid.points();
    let pseudo: Vec<f64> = grid_pts
        .iter()
        .map(|&phi| {
            let a = steering_vector(m_r, phi, d_over_lambda);
            let proj: f64 = noise
                .iter()
                .map(|e| e.iter().zip(a.iter()).map(|(ei, ai)| ei.conj() * ai).sum::<Complex64>().norm_sqr())
                .sum();
            1.0 / proj.max(f64::MIN_POSITIVE)
        })
        .collect();
    let angles = strongest_maxima(&pseudo, n_sources).into_iter().map(|i| grid_pts[i]).collect();
    Ok(DoaEstimate { angles, grid: grid_pts, pseudo_spectrum: pseudo })
}

const RANK_TOL: f64 = 1e-10;

/// Indices of the `n` largest local maxima; padded with the largest
/// remaining samples when there are fewer maxima.
fn strongest_maxima(p: &[f64], n: usize) -> Vec<usize> {
    let len = p.len();
    let mut maxima: Vec<usize> = (0..len)
        .filter(|&i| (i == 0 || p[i] >= p[i - 1]) && (i + 1 == len || p[i] > p[i + 1]))
        .collect();
    maxima.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    maxima.truncate(n);
    if maxima.len() < n {
        let mut rest: Vec<usize> = (0..len).filter(|i| !maxima.contains(i)).collect();
        rest.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
        maxima.extend(rest.into_iter().take(n - maxima.len()));
    }
    maxima
}

/// Matched spatial filter `a(φ)ᴴ` as a row of weights.
pub fn spatial_filter(m_r: usize, phi: f64, d_over_lambda: f64) -> Array1<Complex64> {
    steering_vector(m_r, phi, d_over_lambda).mapv(|z| z.conj())
}

/// Filtered stack `Σ_m w[m]·Y̆[r, m, n]`, shape `(rows, N_sub)`.
pub fn filter_stack(mti: &MtiStack, weights: &Array1<Complex64>) -> Array2<Complex64> {
    let (rows, _, n_sub) = mti.breve_y.dim();
    let mut out = Array2::zeros((rows, n_sub));
    for (sym, mut o) in mti.breve_y.outer_iter().zip(out.outer_iter_mut()) {
        o.assign(&weights.dot(&sym));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Association {
    pub peak: usize,
    pub doa: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationResult {
    pub pairs: Vec<Association>,
    /// `scores[l][i]` = `|Π_i|` at peak `l`.
    pub scores: Vec<Vec<f64>>,
}

fn decide(scores: Vec<Vec<f64>>) -> AssociationResult {
    let pairs = scores
        .iter()
        .enumerate()
        .map(|(peak, s)| {
            let doa = argmax(s);
            Association { peak, doa, score: s[doa] }
        })
        .collect();
    AssociationResult { pairs, scores }
}

fn check_inputs(doas: &DoaEstimate, peaks: &PeakSet) -> Result<()> {
    if doas.angles.is_empty() || peaks.peaks.is_empty() {
        return Err(Error::InvalidConfig("association needs at least one angle and one peak".into()));
    }
    Ok(())
}

/// Two-dimensional association on the whole cancelled stack.
pub fn associate_full(mti: &MtiStack, doas: &DoaEstimate, peaks: &PeakSet, d_over_lambda: f64) -> Result<AssociationResult> {
    check_inputs(doas, peaks)?;
    let axes = peaks.axes;
    if axes.g_eff != mti.rows() || axes.n_sub != mti.n_sub() {
        return Err(Error::InvalidConfig("peak axes do not match the cancelled stack".into()));
    }
    let filtered: Vec<Array2<f64>> = doas
        .angles
        .iter()
        .map(|&phi| {
            let f = filter_stack(mti, &spatial_filter(mti.m_r(), phi, d_over_lambda));
            windowed_real(&f, axes.window)
        })
        .collect();
    let scores = peaks
        .peaks
        .iter()
        .map(|p| filtered.iter().map(|x| spectrum_at(x, &axes, p.k as f64, p.n as f64).norm()).collect())
        .collect();
    Ok(decide(scores))
}

/// Symbol row with the largest Frobenius power.
pub fn strongest_symbol(mti: &MtiStack) -> usize {
    let p: Vec<f64> = mti.breve_y.outer_iter().map(|s| s.iter().map(|z| z.norm_sqr()).sum()).collect();
    argmax(&p)
}

/// Subcarrier column with the largest power over symbols and antennas.
pub fn strongest_subcarrier(mti: &MtiStack) -> usize {
    let p: Vec<f64> = mti.breve_y.axis_iter(Axis(2)).map(|s| s.iter().map(|z| z.norm_sqr()).sum()).collect();
    argmax(&p)
}

/// `[Y̆_1[:, n], …, Y̆_G[:, n]]`, shape `(M_R, rows)`.
pub fn subcarrier_stack(mti: &MtiStack, n: usize) -> Array2<Complex64> {
    mti.breve_y.index_axis(Axis(2), n).t().to_owned()
}

/// 1-D padded DFT of `window ⊙ Re(w·X)` evaluated at fractional bin `bin`
/// of a `len`-point grid.
fn line_score(x: &Array1<Complex64>, window: &[f64], bin: f64, len: usize) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    x.iter()
        .zip(window)
        .enumerate()
        .map(|(i, (z, w))| Complex64::from_polar(w * z.re, -two_pi * i as f64 * bin / len as f64))
        .sum::<Complex64>()
        .norm()
}

fn line_association(
    signal: ArrayView2<Complex64>,
    doas: &DoaEstimate,
    bins: impl Iterator<Item = f64> + Clone,
    axis_len: usize,
    window: &[f64],
    d_over_lambda: f64,
) -> AssociationResult {
    let m_r = signal.nrows();
    let lines: Vec<Array1<Complex64>> = doas
        .angles
        .iter()
        .map(|&phi| spatial_filter(m_r, phi, d_over_lambda).dot(&signal))
        .collect();
    let scores = bins.map(|b| lines.iter().map(|x| line_score(x, window, b, axis_len)).collect()).collect();
    decide(scores)
}

/// Delay-domain association on one cancelled symbol `Y̆_g` (`M_R × N_sub`).
pub fn associate_delay_domain(
    frame_g: ArrayView2<Complex64>,
    doas: &DoaEstimate,
    peaks: &PeakSet,
    d_over_lambda: f64,
) -> Result<AssociationResult> {
    check_inputs(doas, peaks)?;
    let a: SpectrumAxes = peaks.axes;
    let window = a.window.coefficients(frame_g.ncols());
    let bins = peaks.peaks.iter().map(|p| p.n as f64);
    Ok(line_association(frame_g, doas, bins, a.cols(), &window, d_over_lambda))
}

/// Doppler-domain association on one subcarrier column stack (`M_R × rows`).
pub fn associate_doppler_domain(
    column_stack: ArrayView2<Complex64>,
    doas: &DoaEstimate,
    peaks: &PeakSet,
    d_over_lambda: f64,
) -> Result<AssociationResult> {
    check_inputs(doas, peaks)?;
    let a: SpectrumAxes = peaks.axes;
    let window = a.window.coefficients(column_stack.ncols());
    let bins = peaks.peaks.iter().map(|p| p.k as f64);
    Ok(line_association(column_stack, doas, bins, a.rows(), &window, d_over_lambda))
}
