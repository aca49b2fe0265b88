//! Scene geometry and per-path propagation parameters.
//!
//! The RRU and UT sit on the ground line `y = 0`; targets and static
//! reflectors live in the upper half-plane so that every arrival and
//! departure angle falls in `[0, π]`. A target's sampled velocity is its
//! radial-equivalent velocity `v` along the bistatic bisector projection,
//! giving a Doppler shift `2·v·f_c/c`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::waveform::OfdmConfig;
use crate::{Complex64, Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Direction angle of `other` as seen from `self`, in `(-π, π]`.
    pub fn bearing_to(self, other: Point2) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub rru_pos: Point2,
    pub ut_pos: Point2,
    pub n_targets: usize,
    /// Radial-equivalent target velocity, m/s.
    pub target_speed_range: Interval,
    /// Target distance from the RRU, m.
    pub target_range_interval: Interval,
    /// Inclusive bounds on static reflectors around each target.
    pub statics_per_target: (usize, usize),
    pub static_scatter_radius: f64,
    /// Radar cross section of targets and reflectors, m².
    pub rcs: f64,
    pub tx_power_dbm: f64,
    pub rng_seed: u64,
    /// Smallest allowed pairwise difference between target velocities, m/s.
    pub min_speed_gap: f64,
    /// Velocity whose monostatic Doppler `2·v·f_c/c` sets the CFO, m/s.
    pub cfo_velocity_range: Interval,
    /// Range whose delay `r/c` sets the timing offset, m.
    pub to_range_interval: Interval,
    /// Optional direct UT→RRU path, amplitude relative to the strongest echo.
    pub los_ratio: Option<f64>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            rru_pos: Point2::new(0.0, 0.0),
            ut_pos: Point2::new(80.0, 0.0),
            n_targets: 3,
            target_speed_range: Interval::new(0.0, 40.0),
            target_range_interval: Interval::new(20.0, 90.0),
            statics_per_target: (2, 7),
            static_scatter_radius: 8.0,
            rcs: 1.0,
            tx_power_dbm: 25.0,
            rng_seed: 0,
            min_speed_gap: 0.0,
            cfo_velocity_range: Interval::new(15.0, 65.0),
            to_range_interval: Interval::new(55.0, 95.0),
            los_ratio: None,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_targets == 0 {
            return bad("at least one target is required".into());
        }
        for (name, iv) in [
            ("target_speed_range", self.target_speed_range),
            ("target_range_interval", self.target_range_interval),
            ("cfo_velocity_range", self.cfo_velocity_range),
            ("to_range_interval", self.to_range_interval),
        ] {
            if !iv.is_valid() {
                return bad(format!("{name} is empty or not finite"));
            }
        }
        if self.target_range_interval.lo <= 0.0 {
            return bad("target ranges must be positive".into());
        }
        let (lo, hi) = self.statics_per_target;
        if lo > hi {
            return bad("statics_per_target bounds are reversed".into());
        }
        if !(self.static_scatter_radius > 0.0) {
            return bad("static_scatter_radius must be positive".into());
        }
        if !(self.rcs > 0.0) {
            return bad("rcs must be positive".into());
        }
        if self.min_speed_gap < 0.0
            || (self.n_targets - 1) as f64 * self.min_speed_gap > self.target_speed_range.width()
        {
            return bad("min_speed_gap cannot be met inside target_speed_range".into());
        }
        Ok(())
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParam {
    /// `h_l · e^{-j2π f_c τ_{d,l}}`; the timing-offset phase is applied at synthesis.
    pub gain: Complex64,
    /// Arrival angle at the RRU, rad.
    pub doa: f64,
    /// Departure angle at the UT, rad.
    pub aod: f64,
    /// Propagation delay `τ_{d,l}`, s.
    pub delay: f64,
    /// Doppler shift, Hz.
    pub doppler: f64,
    pub is_static: bool,
}

/// Oscillator offsets between UT and RRU.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OffsetState {
    /// Carrier frequency offset, Hz.
    pub cfo: f64,
    /// Timing offset, s.
    pub to: f64,
}

impl OffsetState {
    /// Offsets equivalent to a velocity (`2·v·f_c/c`) and a range (`r/c`).
    pub fn from_equivalents(velocity: f64, range: f64, cfg: &OfdmConfig) -> Self {
        Self {
            cfo: 2.0 * velocity * cfg.f_c / SPEED_OF_LIGHT,
            to: range / SPEED_OF_LIGHT,
        }
    }

    pub fn xi(&self, cfg: &OfdmConfig) -> f64 {
        cfg.normalize_freq(self.cfo)
    }

    /// Component-wise `self - earlier`.
    pub fn drift_from(&self, earlier: &OffsetState) -> OffsetState {
        OffsetState { cfo: self.cfo - earlier.cfo, to: self.to - earlier.to }
    }
}

/// Ground truth of one moving target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTruth {
    pub position: Point2,
    /// Radial-equivalent velocity, m/s.
    pub velocity: f64,
    /// Half the bistatic angle at the target, rad.
    pub psi: f64,
    /// Index of the target's own path in [`Scene::paths`].
    pub path: usize,
    /// Indices of the static reflectors scattered around the target.
    pub statics: Vec<usize>,
}

impl TargetTruth {
    /// Speed along the bistatic bisector that produces `velocity`.
    pub fn bisector_speed(&self) -> f64 {
        self.velocity / self.psi.cos()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub paths: Vec<PathParam>,
    pub offsets: OffsetState,
    pub targets: Vec<TargetTruth>,
}

impl Scene {
    pub fn static_count(&self) -> usize {
        self.paths.iter().filter(|p| p.is_static).count()
    }

    /// Key-value text, one `cfo=/to=` line then one line per path.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "cfo={} to={}", self.offsets.cfo, self.offsets.to);
        for p in &self.paths {
            let _ = writeln!(
                s,
                "gain_re={} gain_im={} doa={} aod={} delay={} doppler={} is_static={}",
                p.gain.re, p.gain.im, p.doa, p.aod, p.delay, p.doppler, p.is_static
            );
        }
        s
    }

    /// Parses [`Scene::to_text`] output. Target metadata is not persisted.
    pub fn from_text(text: &str) -> Result<(Vec<PathParam>, OffsetState)> {
        let err = |detail: String| Error::Parse { what: "scene file", detail };
        let mut offsets = None;
        let mut paths = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut kv = std::collections::HashMap::new();
            for tok in line.split_whitespace() {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| err(format!("line {}: token {tok:?} lacks '='", lineno + 1)))?;
                kv.insert(k, v);
            }
            let num = |k: &str| -> Result<f64> {
                kv.get(k)
                    .ok_or_else(|| err(format!("line {}: missing {k}", lineno + 1)))?
                    .parse::<f64>()
                    .map_err(|e| err(format!("line {}: {k}: {e}", lineno + 1)))
            };
            if kv.contains_key("cfo") {
                offsets = Some(OffsetState { cfo: num("cfo")?, to: num("to")? });
                continue;
            }
            let is_static = kv
                .get("is_static")
                .ok_or_else(|| err(format!("line {}: missing is_static", lineno + 1)))?
                .parse::<bool>()
                .map_err(|e| err(format!("line {}: is_static: {e}", lineno + 1)))?;
            paths.push(PathParam {
                gain: Complex64::new(num("gain_re")?, num("gain_im")?),
                doa: num("doa")?,
                aod: num("aod")?,
                delay: num("delay")?,
                doppler: num("doppler")?,
                is_static,
            });
        }
        Ok((paths, offsets.unwrap_or_default()))
    }
}

/// Draws oscillator offsets from the configured equivalent intervals.
pub fn draw_offsets<R: Rng + ?Sized>(cfg: &SceneConfig, ofdm: &OfdmConfig, rng: &mut R) -> OffsetState {
    let v = cfg.cfo_velocity_range.sample(rng);
    let r = cfg.to_range_interval.sample(rng);
    OffsetState::from_equivalents(v, r, ofdm)
}

/// Two-hop free-space amplitude `√(P_t·σ)·λ / ((4π)^{3/2}·R₁·R₂)`.
pub fn two_hop_amplitude(tx_power_dbm: f64, rcs: f64, wavelength: f64, r1: f64, r2: f64) -> f64 {
    let p_t = 10f64.powf((tx_power_dbm - 30.0) / 10.0);
    let four_pi = 4.0 * std::f64::consts::PI;
    (p_t * rcs).sqrt() * wavelength / (four_pi.powf(1.5) * r1 * r2)
}

/// Builds a path through `p` with the given Doppler shift.
pub fn reflector_path(
    cfg: &SceneConfig,
    ofdm: &OfdmConfig,
    p: Point2,
    doppler: f64,
    is_static: bool,
) -> PathParam {
    let r_ut = cfg.ut_pos.distance(p);
    let r_rru = p.distance(cfg.rru_pos);
    let delay = (r_ut + r_rru) / SPEED_OF_LIGHT;
    let amp = two_hop_amplitude(cfg.tx_power_dbm, cfg.rcs, ofdm.wavelength(), r_ut, r_rru);
    let phase = -2.0 * std::f64::consts::PI * ofdm.f_c * delay;
    PathParam {
        gain: Complex64::from_polar(amp, phase),
        doa: cfg.rru_pos.bearing_to(p),
        aod: cfg.ut_pos.bearing_to(p),
        delay,
        doppler,
        is_static,
    }
}

/// Half the bistatic angle subtended at `p` by the UT and the RRU.
pub fn half_bistatic_angle(cfg: &SceneConfig, p: Point2) -> f64 {
    let a = p.bearing_to(cfg.ut_pos);
    let b = p.bearing_to(cfg.rru_pos);
    let mut d = (a - b).abs();
    if d > std::f64::consts::PI {
        d = 2.0 * std::f64::consts::PI - d;
    }
    d / 2.0
}

const MAX_DRAWS: usize = 100_000;
const MIN_CLEARANCE: f64 = 1.0;

fn in_upper_region(cfg: &SceneConfig, p: Point2) -> bool {
    p.y >= cfg.rru_pos.y
        && p.y >= cfg.ut_pos.y
        && p.distance(cfg.rru_pos) >= MIN_CLEARANCE
        && p.distance(cfg.ut_pos) >= MIN_CLEARANCE
}

fn draw_velocities<R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Result<Vec<f64>> {
    for _ in 0..MAX_DRAWS {
        let v: Vec<f64> = (0..cfg.n_targets).map(|_| cfg.target_speed_range.sample(rng)).collect();
        let ok = v.iter().enumerate().all(|(i, a)| {
            v[i + 1..].iter().all(|b| (a - b).abs() >= cfg.min_speed_gap)
        });
        if ok {
            return Ok(v);
        }
    }
    Err(Error::InvalidConfig("could not satisfy min_speed_gap".into()))
}

/// Draws a scene and its oscillator offsets, deterministically from `cfg.rng_seed`.
pub fn generate_scene(cfg: &SceneConfig, ofdm: &OfdmConfig) -> Result<Scene> {
    cfg.validate()?;
    ofdm.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let velocities = draw_velocities(cfg, &mut rng)?;
    let mut paths = Vec::new();
    let mut targets = Vec::with_capacity(cfg.n_targets);
    for &velocity in &velocities {
        let position = (0..MAX_DRAWS)
            .map(|_| {
                let r = cfg.target_range_interval.sample(&mut rng);
                let a = rng.gen_range(0.0..=std::f64::consts::PI);
                Point2::new(cfg.rru_pos.x + r * a.cos(), cfg.rru_pos.y + r * a.sin())
            })
            .find(|&p| in_upper_region(cfg, p))
            .ok_or_else(|| Error::InvalidConfig("no admissible target position".into()))?;
        let doppler = 2.0 * velocity * ofdm.f_c / SPEED_OF_LIGHT;
        let path = paths.len();
        paths.push(reflector_path(cfg, ofdm, position, doppler, false));
        let (lo, hi) = cfg.statics_per_target;
        let n_static = rng.gen_range(lo..=hi);
        let mut statics = Vec::with_capacity(n_static);
        for _ in 0..n_static {
            let p = (0..MAX_DRAWS)
                .map(|_| {
                    let rad = cfg.static_scatter_radius * rng.gen::<f64>().sqrt();
                    let a = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                    Point2::new(position.x + rad * a.cos(), position.y + rad * a.sin())
                })
                .find(|&p| in_upper_region(cfg, p))
                .ok_or_else(|| Error::InvalidConfig("no admissible reflector position".into()))?;
            statics.push(paths.len());
            paths.push(reflector_path(cfg, ofdm, p, 0.0, true));
        }
        targets.push(TargetTruth {
            position,
            velocity,
            psi: half_bistatic_angle(cfg, position),
            path,
            statics,
        });
    }
    if let Some(ratio) = cfg.los_ratio {
        let strongest = targets.iter().map(|t| paths[t.path].gain.norm()).fold(0.0, f64::max);
        let d = cfg.ut_pos.distance(cfg.rru_pos);
        let delay = d / SPEED_OF_LIGHT;
        paths.push(PathParam {
            gain: Complex64::from_polar(ratio * strongest, -2.0 * std::f64::consts::PI * ofdm.f_c * delay),
            doa: cfg.rru_pos.bearing_to(cfg.ut_pos).abs(),
            aod: cfg.ut_pos.bearing_to(cfg.rru_pos).abs(),
            delay,
            doppler: 0.0,
            is_static: true,
        });
    }
    let offsets = draw_offsets(cfg, ofdm, &mut rng);
    let limit = ofdm.cp_span();
    if let Some(p) = paths.iter().find(|p| p.delay + offsets.to > limit) {
        return Err(Error::DelayBeyondCyclicPrefix { delay: p.delay + offsets.to, limit });
    }
    Ok(Scene { paths, offsets, targets })
}
