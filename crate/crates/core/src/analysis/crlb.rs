//! Cramér-Rao bound of paired (Doppler, delay) estimates on one antenna.
//!
//! Path `l` contributes `β_l·c(ξ_l)·e^{-j2π ξ_l g N_s/N_sub}·e^{-j2π n Δf τ_l}`
//! to symbol `g`, subcarrier `n`, where `c(ξ) = 1 − e^{j2π ξ G_d N_s/N_sub}`
//! is the canceller response (`c ≡ 1` without cancellation). The canceller
//! doubles the white-noise power; its correlation across symbols is
//! ignored, as in the usual white-noise Fisher derivation.
//!
//! Every derivative column is a rank-one product `u ⊗ v` of a symbol
//! vector and a subcarrier vector, so each Fisher entry costs `O(G + N)`.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::waveform::{OfdmConfig, PathResponse};
use crate::{Complex64, Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrlbPath {
    pub xi: f64,
    /// Delay, s.
    pub tau: f64,
    pub beta: Complex64,
}

/// Per-path `(ξ, τ, β)` seen on antenna `antenna`, with the CP phase
/// folded into `β`.
pub fn crlb_paths(responses: &[PathResponse], cfg: &OfdmConfig, antenna: usize) -> Vec<CrlbPath> {
    responses
        .iter()
        .map(|r| {
            let cp = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * r.xi * cfg.n_cp as f64 / cfg.n_sub as f64);
            CrlbPath { xi: r.xi, tau: r.tau, beta: r.spatial[antenna] * cp }
        })
        .collect()
}

/// Whether the complex path gains are estimated jointly (nuisance) or known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainModel {
    #[default]
    Nuisance,
    Known,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrlbOptions {
    /// Canceller lag; 0 means no cancellation.
    pub g_d: usize,
    /// Per-entry noise variance `σ₀²` before cancellation.
    pub noise_var: f64,
    pub gains: GainModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrlbResult {
    /// Bound on `(ξ_0, τ_0, ξ_1, τ_1, …)` with τ in seconds.
    pub j_matrix: DMatrix<f64>,
    /// `(var v, var r)` per path in (m/s)² and m², using `v = cΔf·ξ/(2f_c)`
    /// and `r = c·τ`.
    pub per_path_bounds: Vec<(f64, f64)>,
}

struct Geometry {
    phase_per_symbol: f64,
    lag_phase: f64,
    first: usize,
    rows: usize,
    n_sub: usize,
}

impl Geometry {
    fn new(cfg: &OfdmConfig, g_d: usize) -> Result<Self> {
        if g_d >= cfg.g_symbols {
            return Err(Error::InvalidConfig(format!("canceller lag {g_d} leaves no symbols")));
        }
        let per = cfg.n_s() as f64 / cfg.n_sub as f64;
        Ok(Self {
            phase_per_symbol: -2.0 * std::f64::consts::PI * per,
            lag_phase: 2.0 * std::f64::consts::PI * per * g_d as f64,
            first: g_d,
            rows: cfg.g_symbols - g_d,
            n_sub: cfg.n_sub,
        })
    }

    fn cancels(&self) -> bool {
        self.first > 0
    }

    /// `c(ξ)` and `dc/dξ`.
    fn canceller(&self, xi: f64) -> (Complex64, Complex64) {
        if !self.cancels() {
            return (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        }
        let e = Complex64::from_polar(1.0, self.lag_phase * xi);
        (1.0 - e, -Complex64::i() * self.lag_phase * e)
    }

    /// Symbol vector `c(ξ)e^{…}` and its ξ-derivative.
    fn symbol_vectors(&self, xi: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let (c, dc) = self.canceller(xi);
        (0..self.rows)
            .map(|r| {
                let g = (r + self.first) as f64;
                let e = Complex64::from_polar(1.0, self.phase_per_symbol * xi * g);
                (c * e, (dc + c * Complex64::i() * self.phase_per_symbol * g) * e)
            })
            .unzip()
    }

    /// Subcarrier vector and its derivative with respect to `τ/T_s`.
    fn subcarrier_vectors(&self, tau_in_samples: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let w = -2.0 * std::f64::consts::PI / self.n_sub as f64;
        (0..self.n_sub)
            .map(|n| {
                let e = Complex64::from_polar(1.0, w * n as f64 * tau_in_samples);
                (e, Complex64::i() * w * n as f64 * e)
            })
            .unzip()
    }
}

/// A Fisher column `scale · u ⊗ v`.
struct Column<'a> {
    scale: Complex64,
    u: &'a [Complex64],
    v: &'a [Complex64],
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Noise-free signal on the kept symbols, shape `(rows, N_sub)`.
pub fn mean_signal(paths: &[CrlbPath], cfg: &OfdmConfig, g_d: usize) -> Result<Array2<Complex64>> {
    let geo = Geometry::new(cfg, g_d)?;
    let mut out = Array2::zeros((geo.rows, geo.n_sub));
    for p in paths {
        let (u, _) = geo.symbol_vectors(p.xi);
        let (v, _) = geo.subcarrier_vectors(p.tau / cfg.t_s());
        for ((r, n), o) in out.indexed_iter_mut() {
            *o += p.beta * u[r] * v[n];
        }
    }
    Ok(out)
}

/// Dense derivative columns `(∂/∂ξ_l, ∂/∂τ_l)` per path, τ in seconds.
pub fn jacobian(paths: &[CrlbPath], cfg: &OfdmConfig, g_d: usize) -> Result<Vec<(Array2<Complex64>, Array2<Complex64>)>> {
    let geo = Geometry::new(cfg, g_d)?;
    let t_s = cfg.t_s();
    Ok(paths
        .iter()
        .map(|p| {
            let (u, du) = geo.symbol_vectors(p.xi);
            let (v, dv) = geo.subcarrier_vectors(p.tau / t_s);
            let d_xi = Array2::from_shape_fn((geo.rows, geo.n_sub), |(r, n)| p.beta * du[r] * v[n]);
            let d_tau = Array2::from_shape_fn((geo.rows, geo.n_sub), |(r, n)| p.beta * u[r] * dv[n] / t_s);
            (d_xi, d_tau)
        })
        .collect())
}

/// Bound on the Doppler and delay of every path.
pub fn crlb(paths: &[CrlbPath], cfg: &OfdmConfig, opts: &CrlbOptions) -> Result<CrlbResult> {
    if paths.is_empty() {
        return Err(Error::InvalidConfig("CRLB needs at least one path".into()));
    }
    if !(opts.noise_var > 0.0) {
        return Err(Error::InvalidConfig("noise variance must be positive".into()));
    }
    let geo = Geometry::new(cfg, opts.g_d)?;
    let noise = if geo.cancels() { 2.0 * opts.noise_var } else { opts.noise_var };
    let t_s = cfg.t_s();

    let vectors: Vec<_> = paths
        .iter()
        .map(|p| (geo.symbol_vectors(p.xi), geo.subcarrier_vectors(p.tau / t_s)))
        .collect();
    let per_path = match opts.gains {
        GainModel::Nuisance => 4,
        GainModel::Known => 2,
    };
    let mut cols = Vec::with_capacity(per_path * paths.len());
    for (p, ((u, du), (v, dv))) in paths.iter().zip(&vectors) {
        cols.push(Column { scale: p.beta, u: du, v });
        cols.push(Column { scale: p.beta, u, v: dv });
        if opts.gains == GainModel::Nuisance {
            cols.push(Column { scale: Complex64::new(1.0, 0.0), u, v });
            cols.push(Column { scale: Complex64::i(), u, v });
        }
    }
    let dim = cols.len();
    let mut fisher = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let (a, b) = (&cols[i], &cols[j]);
            let val = (a.scale.conj() * b.scale * inner(a.u, b.u) * inner(a.v, b.v)).re * 2.0 / noise;
            fisher[(i, j)] = val;
            fisher[(j, i)] = val;
        }
    }
    let cov = invert_spd(&fisher)?;

    // Keep the (ξ, τ) rows and rescale τ from samples to seconds.
    let l = paths.len();
    let pick = |k: usize| (k / 2) * per_path + k % 2;
    let unit = |k: usize| if k.is_multiple_of(2) { 1.0 } else { t_s };
    let j_matrix = DMatrix::from_fn(2 * l, 2 * l, |a, b| cov[(pick(a), pick(b))] * unit(a) * unit(b));
    let v_scale = SPEED_OF_LIGHT * cfg.delta_f / (2.0 * cfg.f_c);
    let per_path_bounds = (0..l)
        .map(|i| (j_matrix[(2 * i, 2 * i)] * v_scale * v_scale, j_matrix[(2 * i + 1, 2 * i + 1)] * SPEED_OF_LIGHT * SPEED_OF_LIGHT))
        .collect();
    Ok(CrlbResult { j_matrix, per_path_bounds })
}

/// Inverse of a symmetric positive-definite matrix after Jacobi scaling.
fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    const MIN_REL_EIG: f64 = 1e-12;
    let n = m.nrows();
    let d: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::SingularFisher);
    }
    let s: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * s[i] * s[j]);
    let eig = scaled.clone().symmetric_eigen();
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > MIN_REL_EIG * hi) {
        return Err(Error::SingularFisher);
    }
    let inv = scaled.cholesky().ok_or(Error::SingularFisher)?.inverse();
    Ok(DMatrix::from_fn(n, n, |i, j| inv[(i, j)] * s[i] * s[j]))
}
