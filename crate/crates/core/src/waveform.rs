//! OFDM numerology, array manifolds and received-frame synthesis.
//!
//! A frame burst is `G` OFDM symbols seen by `M_R` receive antennas over
//! `N_sub` subcarriers. Only the phase rotation of the cyclic prefix is
//! modelled; CP samples are never materialized.
//!
//! Per path `l` with normalized frequency offset `ξ_l` (Doppler plus CFO) and
//! delay `τ_l` (propagation plus timing offset), symbol `g` (0-based) of the
//! compensated equivalent channel is
//!
//! ```text
//! Ŷ_g[m, u] = Σ_l b_l · e^{-j2π ξ_l (N_cp + g·N_s)/N_sub} · a_R(φ_l)[m] · e^{-j2π u Δf τ_l}
//! ```
//!
//! with `b_l = h̄_l · e^{-j2π f_c τ_o} · a_U(θ_l)·w`. The received frame is
//! `Y_g = Ŷ_g · D(x_g) · F + Z_g` where `F` is the unitary IDFT.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, Array3, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scenario::{OffsetState, PathParam};
use crate::{fft, Complex64, Error, Result, SPEED_OF_LIGHT};

/// OFDM and array numerology of one frame burst.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmConfig {
    /// Carrier frequency, Hz.
    pub f_c: f64,
    /// Subcarrier spacing, Hz.
    pub delta_f: f64,
    pub n_sub: usize,
    pub n_cp: usize,
    /// OFDM symbols per burst (`G`).
    pub g_symbols: usize,
    /// Receive antennas at the RRU.
    pub m_r: usize,
    /// Transmit antennas at the UT.
    pub m_u: usize,
    pub d_over_lambda: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            f_c: 28e9,
            delta_f: 100e3,
            n_sub: 128,
            n_cp: 16,
            g_symbols: 256,
            m_r: 64,
            m_u: 2,
            d_over_lambda: 0.5,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_owned()));
        if !(self.f_c > 0.0 && self.delta_f > 0.0) {
            return bad("carrier and subcarrier spacing must be positive");
        }
        if self.n_sub < 2 || self.n_cp >= self.n_sub {
            return bad("need n_sub >= 2 and n_cp < n_sub");
        }
        if self.g_symbols < 2 {
            return bad("need at least two OFDM symbols");
        }
        if self.m_r == 0 || self.m_u == 0 {
            return bad("antenna counts must be positive");
        }
        if !(self.d_over_lambda > 0.0) {
            return bad("antenna spacing must be positive");
        }
        Ok(())
    }

    /// Samples per OFDM symbol including the CP.
    pub fn n_s(&self) -> usize {
        self.n_sub + self.n_cp
    }

    /// Sampling period `1/(N_sub·Δf)`.
    pub fn t_s(&self) -> f64 {
        1.0 / (self.n_sub as f64 * self.delta_f)
    }

    /// OFDM symbol duration including the CP.
    pub fn t_sym(&self) -> f64 {
        self.n_s() as f64 * self.t_s()
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    /// Normalized offset `N_sub·f·T_s` of a frequency in Hz.
    pub fn normalize_freq(&self, f: f64) -> f64 {
        self.n_sub as f64 * f * self.t_s()
    }

    /// Longest delay the cyclic prefix absorbs.
    pub fn cp_span(&self) -> f64 {
        self.n_cp as f64 * self.t_s()
    }

    /// Range cell `c/(N_sub·Δf)` before zero padding.
    pub fn range_unit(&self) -> f64 {
        SPEED_OF_LIGHT / (self.n_sub as f64 * self.delta_f)
    }

    /// Velocity cell `c/(f_c·T_sym·G_eff)` before zero padding.
    pub fn velocity_unit(&self, g_eff: usize) -> f64 {
        SPEED_OF_LIGHT / (self.f_c * self.t_sym() * g_eff as f64)
    }

    /// Per-symbol phase advance (in cycles) of a normalized offset.
    pub fn cycles_per_symbol(&self, xi: f64) -> f64 {
        xi * self.n_s() as f64 / self.n_sub as f64
    }
}

/// ULA manifold; element `m` is `e^{-j2π m d sin(angle)}`.
pub fn steering_vector(n_antennas: usize, angle: f64, d_over_lambda: f64) -> Array1<Complex64> {
    let step = -2.0 * std::f64::consts::PI * d_over_lambda * angle.sin();
    Array1::from_iter((0..n_antennas).map(|m| Complex64::from_polar(1.0, step * m as f64)))
}

/// Default UT precoder: all ones scaled to unit norm.
pub fn default_precoder(m_u: usize) -> Array1<Complex64> {
    Array1::from_elem(m_u, Complex64::new(1.0 / (m_u as f64).sqrt(), 0.0))
}

/// Per-path factors of the compensated equivalent channel.
#[derive(Debug, Clone)]
pub struct PathResponse {
    /// Complex amplitude `b_l` common to all antennas.
    pub amplitude: Complex64,
    /// `b_l · a_R(φ_l)`.
    pub spatial: Array1<Complex64>,
    /// `e^{-j2π u Δf τ_l}` over subcarriers.
    pub delay_row: Array1<Complex64>,
    /// Normalized total frequency offset `ξ_l`.
    pub xi: f64,
    /// Total delay `τ_l`, s.
    pub tau: f64,
}

impl PathResponse {
    /// Time coefficient of absolute symbol `g` (0-based).
    pub fn symbol_coefficient(&self, cfg: &OfdmConfig, g: usize) -> Complex64 {
        let cycles = self.xi * (cfg.n_cp + g * cfg.n_s()) as f64 / cfg.n_sub as f64;
        Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * cycles)
    }
}

/// Evaluates `b_l`, the array response and the delay row of every path.
pub fn path_responses(
    cfg: &OfdmConfig,
    paths: &[PathParam],
    offsets: &OffsetState,
    precoder: &Array1<Complex64>,
) -> Result<Vec<PathResponse>> {
    cfg.validate()?;
    if precoder.len() != cfg.m_u {
        return Err(Error::InvalidConfig(format!(
            "precoder has {} entries for {} UT antennas",
            precoder.len(),
            cfg.m_u
        )));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let xi_o = cfg.normalize_freq(offsets.cfo);
    let to_phase = Complex64::from_polar(1.0, -two_pi * cfg.f_c * offsets.to);
    paths
        .iter()
        .enumerate()
        .map(|(l, p)| {
            let xi = cfg.normalize_freq(p.doppler) + xi_o;
            if xi.abs() >= 0.5 {
                return Err(Error::AliasedDoppler { path: l, xi });
            }
            let tau = p.delay + offsets.to;
            let tx_gain = steering_vector(cfg.m_u, p.aod, cfg.d_over_lambda).dot(precoder);
            let amplitude = p.gain * to_phase * tx_gain;
            let spatial = steering_vector(cfg.m_r, p.doa, cfg.d_over_lambda).mapv(|a| a * amplitude);
            let delay_row = Array1::from_iter((0..cfg.n_sub).map(|u| {
                Complex64::from_polar(1.0, -two_pi * u as f64 * cfg.delta_f * tau)
            }));
            Ok(PathResponse { amplitude, spatial, delay_row, xi, tau })
        })
        .collect()
}

/// Noise-free compensated equivalent channel `Ŷ_g`, shape `(G, M_R, N_sub)`.
pub fn equivalent_channel(cfg: &OfdmConfig, responses: &[PathResponse]) -> Array3<Complex64> {
    let l = responses.len();
    let mut out = Array3::zeros((cfg.g_symbols, cfg.m_r, cfg.n_sub));
    if l == 0 {
        return out;
    }
    let mut delay = Array2::zeros((l, cfg.n_sub));
    for (i, r) in responses.iter().enumerate() {
        delay.row_mut(i).assign(&r.delay_row);
    }
    let mut weighted = Array2::zeros((cfg.m_r, l));
    for g in 0..cfg.g_symbols {
        for (i, r) in responses.iter().enumerate() {
            let c = r.symbol_coefficient(cfg, g);
            weighted.column_mut(i).assign(&r.spatial.mapv(|a| a * c));
        }
        out.index_axis_mut(Axis(0), g).assign(&weighted.dot(&delay));
    }
    out
}

/// Per-element power of the strongest path.
pub fn strongest_path_power(responses: &[PathResponse]) -> f64 {
    responses.iter().map(|r| r.amplitude.norm_sqr()).fold(0.0, f64::max)
}

/// Noise variance giving `snr_db` for the strongest path.
pub fn noise_variance(responses: &[PathResponse], snr_db: f64) -> f64 {
    strongest_path_power(responses) * 10f64.powf(-snr_db / 10.0)
}

/// Received symbols and the data they carry.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    /// `Y_g`, shape `(G, M_R, N_sub)`.
    pub symbols: Array3<Complex64>,
    /// `x_g`, shape `(G, N_sub)`.
    pub data: Array2<Complex64>,
}

impl FrameStack {
    pub fn g(&self) -> usize {
        self.symbols.len_of(Axis(0))
    }

    pub fn m_r(&self) -> usize {
        self.symbols.len_of(Axis(1))
    }

    pub fn n_sub(&self) -> usize {
        self.symbols.len_of(Axis(2))
    }

    /// A stack with the same data and pure noise of the given variance.
    pub fn noise_like<R: Rng + ?Sized>(&self, noise_var: f64, rng: &mut R) -> Self {
        let mut symbols = Array3::zeros(self.symbols.raw_dim());
        add_noise(&mut symbols, noise_var, rng);
        Self { symbols, data: self.data.clone() }
    }

    /// Writes the 32-byte header (magic, M_R, N_sub, G) followed by the
    /// interleaved little-endian `f64` pairs of all symbols, then of the data.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FRAME_MAGIC)?;
        for v in [self.m_r(), self.n_sub(), self.g()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for z in self.symbols.iter().chain(self.data.iter()) {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 32];
        r.read_exact(&mut header)?;
        if &header[..8] != FRAME_MAGIC {
            return Err(Error::Parse { what: "frame dump", detail: "bad magic".into() });
        }
        let field = |i: usize| {
            let mut b = [0u8; 8];
            b.copy_from_slice(&header[8 * i..8 * i + 8]);
            u64::from_le_bytes(b) as usize
        };
        let (m_r, n_sub, g) = (field(1), field(2), field(3));
        let mut next = || -> Result<Complex64> {
            let mut b = [0u8; 16];
            r.read_exact(&mut b)?;
            let re = f64::from_le_bytes(b[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(b[8..].try_into().expect("8 bytes"));
            Ok(Complex64::new(re, im))
        };
        let symbols = (0..g * m_r * n_sub).map(|_| next()).collect::<Result<Vec<_>>>()?;
        let data = (0..g * n_sub).map(|_| next()).collect::<Result<Vec<_>>>()?;
        let shape_err = |e: ndarray::ShapeError| Error::Parse { what: "frame dump", detail: e.to_string() };
        Ok(Self {
            symbols: Array3::from_shape_vec((g, m_r, n_sub), symbols).map_err(shape_err)?,
            data: Array2::from_shape_vec((g, n_sub), data).map_err(shape_err)?,
        })
    }
}

const FRAME_MAGIC: &[u8; 8] = b"UPSFRM01";

/// Adds circular complex Gaussian noise of variance `noise_var` per entry.
pub fn add_noise<R: Rng + ?Sized>(symbols: &mut Array3<Complex64>, noise_var: f64, rng: &mut R) {
    if noise_var <= 0.0 {
        return;
    }
    let s = (noise_var / 2.0).sqrt();
    for z in symbols.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *z += Complex64::new(s * re, s * im);
    }
}

/// Unit-modulus QPSK data, shape `(G, N_sub)`.
pub fn qpsk_data<R: Rng + ?Sized>(g: usize, n_sub: usize, rng: &mut R) -> Array2<Complex64> {
    let quarter = std::f64::consts::FRAC_PI_2;
    Array2::from_shape_fn((g, n_sub), |_| {
        let k = rng.gen_range(0..4u8) as f64;
        Complex64::from_polar(1.0, quarter * (k + 0.5))
    })
}

/// Synthesizes the received burst. `snr_db = None` switches noise off.
/// Data are drawn from `rng` before the noise.
pub fn synthesize_frames<R: Rng + ?Sized>(
    cfg: &OfdmConfig,
    paths: &[PathParam],
    offsets: &OffsetState,
    precoder: &Array1<Complex64>,
    snr_db: Option<f64>,
    rng: &mut R,
) -> Result<FrameStack> {
    if paths.is_empty() {
        return Err(Error::InvalidConfig("no propagation paths".into()));
    }
    let responses = path_responses(cfg, paths, offsets, precoder)?;
    let data = qpsk_data(cfg.g_symbols, cfg.n_sub, rng);
    let mut symbols = equivalent_channel(cfg, &responses);
    modulate(&mut symbols, &data);
    if let Some(snr) = snr_db {
        add_noise(&mut symbols, noise_variance(&responses, snr), rng);
    }
    Ok(FrameStack { symbols, data })
}

/// In place `Ŷ_g ↦ Ŷ_g · D(x_g) · F` with the unitary IDFT `F`.
pub fn modulate(symbols: &mut Array3<Complex64>, data: &Array2<Complex64>) {
    let n = symbols.len_of(Axis(2));
    let plan = fft::inverse(n);
    let scale = 1.0 / (n as f64).sqrt();
    for (mut sym, x) in symbols.outer_iter_mut().zip(data.outer_iter()) {
        for mut row in sym.outer_iter_mut() {
            let buf = row.as_slice_mut().expect("standard layout");
            for (b, &xu) in buf.iter_mut().zip(x.iter()) {
                *b *= xu;
            }
            plan.process(buf);
            buf.iter_mut().for_each(|b| *b *= scale);
        }
    }
}
