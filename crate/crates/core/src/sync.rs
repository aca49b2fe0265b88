//! Fingerprint-spectrum synchronization.
//!
//! A change of the residual CFO and TO shifts the whole un-cancelled
//! delay-Doppler spectrum circularly, so the static-clutter ridge row
//! captured at calibration reappears displaced in a later spectrum. CMCC
//! finds the displacement by a 2-D circular cross-correlation against every
//! candidate row; S-CMCC first picks the row by power, then correlates that
//! row alone.
//!
//! Only the drift since calibration is estimated. Row shifts are searched
//! over the non-negative Doppler rows `0..=K_B`; delay lags wrap to the
//! signed range `(−Q_B/2, Q_B/2]`.

use std::io::{BufRead, Write};

use crate::preprocess::CompensatedStack;
use crate::spectrum::{DelayDopplerSpectrum, SpectrumAxes, Window};
use crate::waveform::OfdmConfig;
use crate::{fft, Complex64, Error, Result, SPEED_OF_LIGHT};

/// Identification sequence: the first `Q_B` delay bins of the ridge row.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    pub zeta: Vec<Complex64>,
    pub k_c: usize,
    /// Caller-defined capture time (trial or frame counter).
    pub captured_at: u64,
    pub axes: SpectrumAxes,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncEstimate {
    /// Normalized CFO drift `Δξ̂`.
    pub d_xi: f64,
    /// TO drift, s.
    pub d_tau: f64,
    /// Correlation magnitude at the chosen shift.
    pub score: f64,
    pub row_shift: i64,
    pub lag: i64,
}

impl SyncEstimate {
    pub const ZERO: SyncEstimate = SyncEstimate { d_xi: 0.0, d_tau: 0.0, score: 0.0, row_shift: 0, lag: 0 };

    fn from_bins(row_shift: i64, lag: i64, score: f64, axes: &SpectrumAxes, cfg: &OfdmConfig) -> Self {
        let n_sub = cfg.n_sub as f64;
        let d_xi = row_shift as f64 * n_sub / (cfg.n_s() as f64 * axes.rows() as f64);
        let d_tau = lag as f64 * axes.t_r(cfg);
        SyncEstimate { d_xi, d_tau, score, row_shift, lag }
    }
}

/// `Q_B = ⌊K_r·N_sub/2⌋`.
pub fn delay_search_len(axes: &SpectrumAxes) -> usize {
    axes.cols() / 2
}

/// `K_B = ⌊K·G_eff/2⌋`.
pub fn doppler_search_len(axes: &SpectrumAxes) -> usize {
    axes.rows() / 2
}

/// Minimum ridge-to-median row power ratio for a usable fingerprint.
pub const MIN_RIDGE_DB: f64 = 3.0;

fn row_powers(spec: &DelayDopplerSpectrum, q_b: usize) -> Vec<f64> {
    let rows = (doppler_search_len(&spec.axes) + 1).min(spec.grid.nrows());
    (0..rows)
        .map(|k| spec.grid.row(k).iter().take(q_b).map(|z| z.norm_sqr()).sum())
        .collect()
}

fn check_searchable(spec: &DelayDopplerSpectrum) -> Result<usize> {
    let q_b = delay_search_len(&spec.axes);
    if q_b == 0 || spec.grid.ncols() < q_b {
        return Err(Error::InvalidConfig("spectrum too narrow for the delay search window".into()));
    }
    Ok(q_b)
}

/// Takes the strongest row of an un-cancelled spectrum as the fingerprint.
pub fn capture_fingerprint(spec: &DelayDopplerSpectrum, captured_at: u64) -> Result<Fingerprint> {
    let q_b = check_searchable(spec)?;
    let powers = row_powers(spec, q_b);
    let k_c = crate::preprocess::argmax(&powers);
    let mut sorted = powers.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let ratio_db = 10.0 * (powers[k_c] / median).log10();
    if !(ratio_db >= MIN_RIDGE_DB) {
        return Err(Error::NoStaticRidge { ratio_db });
    }
    let zeta = spec.grid.row(k_c).iter().take(q_b).copied().collect();
    Ok(Fingerprint { zeta, k_c, captured_at, axes: spec.axes })
}

fn check_compatible(fp: &Fingerprint, updated: &DelayDopplerSpectrum) -> Result<usize> {
    if fp.axes != updated.axes {
        return Err(Error::InvalidConfig("fingerprint and spectrum use different axes".into()));
    }
    let q_b = check_searchable(updated)?;
    if fp.zeta.len() != q_b {
        return Err(Error::InvalidConfig("fingerprint length differs from Q_B".into()));
    }
    Ok(q_b)
}

/// Circular cross-correlation `c[q] = Σ_i y[(q+i) mod Q]·ζ*(i)` via FFT.
struct Correlator {
    q_b: usize,
    zeta_f: Vec<Complex64>,
}

impl Correlator {
    fn new(zeta: &[Complex64]) -> Self {
        let mut zeta_f = zeta.to_vec();
        fft::forward(zeta.len()).process(&mut zeta_f);
        zeta_f.iter_mut().for_each(|z| *z = z.conj());
        Self { q_b: zeta.len(), zeta_f }
    }

    fn correlate(&self, row: &[Complex64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = row[..self.q_b].to_vec();
        fft::forward(self.q_b).process(&mut buf);
        buf.iter_mut().zip(&self.zeta_f).for_each(|(b, z)| *b *= z);
        fft::inverse(self.q_b).process(&mut buf);
        let scale = 1.0 / self.q_b as f64;
        buf.iter_mut().for_each(|b| *b *= scale);
        buf
    }

    /// `(lag, |c|)` of the correlation maximum; ties go to the smaller lag.
    fn best_lag(&self, row: &[Complex64]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (q, z) in self.correlate(row).iter().enumerate() {
            if z.norm() > best.1 {
                best = (q, z.norm());
            }
        }
        best
    }
}

/// `c[q] = Σ_i y[(q+i) mod Q]·ζ*(i)` for `Q = zeta.len()`.
pub(crate) fn circular_correlation(y: &[Complex64], zeta: &[Complex64]) -> Vec<Complex64> {
    Correlator::new(zeta).correlate(y)
}

pub(crate) fn signed_lag(q: usize, q_b: usize) -> i64 {
    if q > q_b / 2 {
        q as i64 - q_b as i64
    } else {
        q as i64
    }
}

/// Two-dimensional search over every row of the Doppler window.
pub fn cmcc_estimate(fp: &Fingerprint, updated: &DelayDopplerSpectrum, cfg: &OfdmConfig) -> Result<SyncEstimate> {
    let q_b = check_compatible(fp, updated)?;
    let corr = Correlator::new(&fp.zeta);
    let rows = (doppler_search_len(&updated.axes) + 1).min(updated.grid.nrows());
    let mut best = (0, 0, f64::NEG_INFINITY);
    for k in 0..rows {
        let row = updated.grid.row(k).to_vec();
        let (q, v) = corr.best_lag(&row);
        if v > best.2 {
            best = (k, q, v);
        }
    }
    let (k, q, score) = best;
    Ok(SyncEstimate::from_bins(k as i64 - fp.k_c as i64, signed_lag(q, q_b), score, &fp.axes, cfg))
}

/// Row chosen by power match to `‖ζ‖²`, then a 1-D search on that row.
pub fn scmcc_estimate(fp: &Fingerprint, updated: &DelayDopplerSpectrum, cfg: &OfdmConfig) -> Result<SyncEstimate> {
    let q_b = check_compatible(fp, updated)?;
    let target: f64 = fp.zeta.iter().map(|z| z.norm_sqr()).sum();
    let powers = row_powers(updated, q_b);
    let mut k = 0;
    for (i, p) in powers.iter().enumerate() {
        if (p - target).abs() < (powers[k] - target).abs() {
            k = i;
        }
    }
    let (q, score) = Correlator::new(&fp.zeta).best_lag(&updated.grid.row(k).to_vec());
    Ok(SyncEstimate::from_bins(k as i64 - fp.k_c as i64, signed_lag(q, q_b), score, &fp.axes, cfg))
}

/// Absolute normalized CFO implied by the fingerprint's ridge row, to
/// within half a Doppler bin.
pub fn ridge_offset(fp: &Fingerprint, cfg: &OfdmConfig) -> f64 {
    fp.k_c as f64 * cfg.n_sub as f64 / (cfg.n_s() as f64 * fp.axes.rows() as f64)
}

/// Removes a common normalized CFO `xi` from a compensated stack by undoing
/// its per-symbol phase progression, so static paths become stationary
/// again before clutter cancellation.
pub fn remove_cfo(stack: &CompensatedStack, xi: f64, cfg: &OfdmConfig) -> CompensatedStack {
    let mut out = stack.clone();
    let step = 2.0 * std::f64::consts::PI * cfg.cycles_per_symbol(xi);
    for (g, mut sym) in out.hat_y.outer_iter_mut().enumerate() {
        let rot = Complex64::from_polar(1.0, step * g as f64);
        sym.mapv_inplace(|z| z * rot);
    }
    out
}

/// Removes the offset drift from `(bistatic range, range rate)` estimates:
/// `c·Δτ` from ranges and `c·Δf/f_c` from range rates, so a one-row error
/// in the drift is exactly one velocity cell.
pub fn apply_sync(estimates: &[(f64, f64)], sync: &SyncEstimate, cfg: &OfdmConfig) -> Vec<(f64, f64)> {
    let dr = SPEED_OF_LIGHT * sync.d_tau;
    let dv = SPEED_OF_LIGHT * sync.d_xi * cfg.delta_f / cfg.f_c;
    estimates.iter().map(|&(r, v)| (r - dr, v - dv)).collect()
}

/// FNV-1a over the numerology and spectrum axes a fingerprint depends on.
pub fn numerology_hash(cfg: &OfdmConfig, axes: &SpectrumAxes) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(&cfg.f_c.to_le_bytes());
    feed(&cfg.delta_f.to_le_bytes());
    for v in [cfg.n_sub, cfg.n_cp, axes.g_eff, axes.n_sub, axes.k_doppler, axes.k_range] {
        feed(&(v as u64).to_le_bytes());
    }
    feed(axes.window.to_string().as_bytes());
    h
}

impl Fingerprint {
    /// CSV of `index,re,im` after a `#` header carrying the ridge row,
    /// capture time, axes and numerology hash.
    pub fn write_csv<W: Write>(&self, mut w: W, cfg: &OfdmConfig) -> Result<()> {
        let a = &self.axes;
        writeln!(
            w,
            "# k_c={} captured_at={} g_eff={} n_sub={} k_doppler={} k_range={} window={} numerology={:016x}",
            self.k_c,
            self.captured_at,
            a.g_eff,
            a.n_sub,
            a.k_doppler,
            a.k_range,
            a.window,
            numerology_hash(cfg, a)
        )?;
        writeln!(w, "index,re,im")?;
        for (i, z) in self.zeta.iter().enumerate() {
            writeln!(w, "{i},{:e},{:e}", z.re, z.im)?;
        }
        Ok(())
    }

    /// Reads [`Fingerprint::write_csv`] output, rejecting a numerology mismatch.
    pub fn read_csv<R: BufRead>(r: R, cfg: &OfdmConfig) -> Result<Fingerprint> {
        let err = |detail: String| Error::Parse { what: "fingerprint", detail };
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| err("empty file".into()))??;
        let header = header.strip_prefix('#').ok_or_else(|| err("missing header".into()))?;
        let kv: std::collections::HashMap<&str, &str> =
            header.split_whitespace().filter_map(|t| t.split_once('=')).collect();
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| err(format!("header lacks {k}")));
        let int = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|e| err(format!("{k}: {e}"))) };
        let window: Window = get("window")?.parse()?;
        let axes = SpectrumAxes {
            g_eff: int("g_eff")? as usize,
            n_sub: int("n_sub")? as usize,
            k_doppler: int("k_doppler")? as usize,
            k_range: int("k_range")? as usize,
            window,
        };
        let stored = u64::from_str_radix(get("numerology")?, 16).map_err(|e| err(format!("numerology: {e}")))?;
        if stored != numerology_hash(cfg, &axes) {
            return Err(err("numerology hash does not match the configuration".into()));
        }
        let mut zeta = Vec::new();
        for line in lines.skip(1) {
            let line = line?;
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 3 {
                return Err(err(format!("bad row {line:?}")));
            }
            let p = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s}: {e}")));
            zeta.push(Complex64::new(p(f[1])?, p(f[2])?));
        }
        if zeta.len() != delay_search_len(&axes) {
            return Err(err(format!("expected {} samples, found {}", delay_search_len(&axes), zeta.len())));
        }
        Ok(Fingerprint { zeta, k_c: int("k_c")? as usize, captured_at: int("captured_at")?, axes })
    }
}
