//! Theoretical delay MSE of the fingerprint correlation search.
//!
//! The correlation magnitude at lag `q` is modelled as an independent
//! Gaussian with mean `|ϱ_s[q]|`, where `ϱ_s` is the noise-free circular
//! correlation between the calibration ridge row `s1` and the updated ridge
//! row `s2`, and with variance
//! `½(‖s1‖²σ̌² + ‖s2‖²σ̌² + Q·σ̌⁴)` per real dimension, `σ̌²` being the
//! per-bin spectrum noise variance. Only lags within `±ν` of the mean peak
//! compete; `χ_q` is the probability that lag `q` wins among them, i.e. an
//! orthant probability of the differences `Z_q − Z_{q'}`.

use nalgebra::DMatrix;
use ndarray::Array1;

use super::mvn::{orthant_probability, QmcSettings};
use crate::preprocess::antenna_rows;
use crate::scenario::{OffsetState, PathParam};
use crate::spectrum::{spectrum_quarter, SpectrumAxes, Window};
use crate::sync::{capture_fingerprint, circular_correlation, delay_search_len, signed_lag};
use crate::waveform::{equivalent_channel, noise_variance, path_responses, OfdmConfig};
use crate::{Complex64, Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq)]
pub struct SyncMseBound {
    /// Signed candidate lags, in delay bins.
    pub lags: Vec<i64>,
    /// Win probability of each candidate lag.
    pub chi: Vec<f64>,
    /// Range MSE, m².
    pub mse: f64,
}

/// Standard deviations beyond which a lag is treated as never winning.
const NEGLIGIBLE_SIGMAS: f64 = 9.0;

/// Bound from explicit noise-free ridge rows.
///
/// `true_lag` is the delay drift in (fractional) bins and `cell` the range
/// width of one bin in metres.
pub fn lag_mse_bound(
    s1: &[Complex64],
    s2: &[Complex64],
    true_lag: f64,
    spectrum_noise_var: f64,
    cell: f64,
    radius: usize,
    qmc: &QmcSettings,
) -> Result<SyncMseBound> {
    if radius == 0 {
        return Err(Error::InvalidConfig("window radius must be at least 1".into()));
    }
    let q_len = s1.len();
    if q_len == 0 || s2.len() != q_len || 2 * radius + 1 > q_len {
        return Err(Error::InvalidConfig("ridge rows are empty, mismatched, or shorter than the window".into()));
    }
    let rho = circular_correlation(s2, s1);
    let q0 = crate::preprocess::argmax(&rho.iter().map(|z| z.norm()).collect::<Vec<_>>());
    let q0_signed = signed_lag(q0, q_len);
    let lags: Vec<i64> = (-(radius as i64)..=radius as i64).map(|d| q0_signed + d).collect();
    let means: Vec<f64> = lags.iter().map(|&q| rho[q.rem_euclid(q_len as i64) as usize].norm()).collect();

    let e1: f64 = s1.iter().map(|z| z.norm_sqr()).sum();
    let e2: f64 = s2.iter().map(|z| z.norm_sqr()).sum();
    let nv = spectrum_noise_var;
    let half_var = 0.5 * (e1 * nv + e2 * nv + q_len as f64 * nv * nv);
    let chi = if half_var == 0.0 {
        let mut c = vec![0.0; lags.len()];
        c[radius] = 1.0;
        c
    } else {
        let sd_diff = (2.0 * half_var).sqrt();
        let d = lags.len() - 1;
        let cov = DMatrix::from_fn(d, d, |i, j| if i == j { 2.0 * half_var } else { half_var });
        (0..lags.len())
            .map(|w| {
                let diffs: Vec<f64> = (0..lags.len()).filter(|&j| j != w).map(|j| means[w] - means[j]).collect();
                if diffs.iter().any(|&m| m / sd_diff < -NEGLIGIBLE_SIGMAS) {
                    return Ok(0.0);
                }
                orthant_probability(&diffs, &cov, qmc).map(|e| e.probability)
            })
            .collect::<Result<Vec<f64>>>()?
    };
    let mse = lags.iter().zip(&chi).map(|(&q, &p)| p * ((q as f64 - true_lag) * cell).powi(2)).sum();
    Ok(SyncMseBound { lags, chi, mse })
}

/// Scene-level inputs for [`sync_mse_bound`].
#[derive(Debug, Clone)]
pub struct SyncBoundSetup<'a> {
    pub cfg: &'a OfdmConfig,
    pub paths: &'a [PathParam],
    pub calibration: OffsetState,
    pub updated: OffsetState,
    pub precoder: &'a Array1<Complex64>,
    pub antenna: usize,
    pub k_doppler: usize,
    pub k_range: usize,
    pub window: Window,
    pub snr_db: f64,
    pub radius: usize,
    pub qmc: QmcSettings,
}

/// Per-bin noise variance of the real-part spectrum: `σ₀²·Σw²/2`.
pub fn spectrum_noise_variance(noise_var: f64, axes: &SpectrumAxes) -> f64 {
    let wg: f64 = axes.window.coefficients(axes.g_eff).iter().map(|w| w * w).sum();
    let wn: f64 = axes.window.coefficients(axes.n_sub).iter().map(|w| w * w).sum();
    noise_var * wg * wn / 2.0
}

/// Bound for a scene whose offsets drift from `calibration` to `updated`.
pub fn sync_mse_bound(s: &SyncBoundSetup) -> Result<SyncMseBound> {
    let cal = path_responses(s.cfg, s.paths, &s.calibration, s.precoder)?;
    let upd = path_responses(s.cfg, s.paths, &s.updated, s.precoder)?;
    let noise = noise_variance(&cal, s.snr_db);
    let spec = |resp| {
        let gamma = antenna_rows(&equivalent_channel(s.cfg, resp), s.antenna);
        spectrum_quarter(&gamma, s.k_doppler, s.k_range, s.window)
    };
    let cal_spec = spec(&cal)?;
    let upd_spec = spec(&upd)?;
    let axes = cal_spec.axes;
    let fp = capture_fingerprint(&cal_spec, 0)?;
    let drift = s.updated.drift_from(&s.calibration);
    let row_shift = axes.doppler_bin(s.cfg.normalize_freq(drift.cfo), s.cfg).round() as i64;
    let row = fp.k_c as i64 + row_shift;
    if row < 0 || row as usize >= upd_spec.grid.nrows() {
        return Err(Error::InvalidConfig(format!("drifted ridge row {row} leaves the searched plane")));
    }
    let q_b = delay_search_len(&axes);
    let s2: Vec<Complex64> = upd_spec.grid.row(row as usize).iter().take(q_b).copied().collect();
    let true_lag = axes.delay_bin(drift.to, s.cfg);
    let cell = SPEED_OF_LIGHT * axes.t_r(s.cfg);
    lag_mse_bound(&fp.zeta, &s2, true_lag, spectrum_noise_variance(noise, &axes), cell, s.radius, &s.qmc)
}
