//! Experiment description and its `key = value` text form.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use upsense_core::analysis::mvn::QmcSettings;
use upsense_core::scenario::{Interval, Point2, SceneConfig};
use upsense_core::spectrum::Window;
use upsense_core::waveform::OfdmConfig;

use crate::{HarnessError, Result};

/// What a trial measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Noise-free clutter suppression ratio against the symbol count.
    Suppression,
    /// Grid range/velocity error of a single target next to its CRLB.
    Crlb,
    /// Offset drift estimation, optionally alongside its MSE bound.
    Sync,
    /// Angle-to-peak association over several targets.
    Association,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [Self::Suppression, Self::Crlb, Self::Sync, Self::Association];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Suppression => "suppression",
            Self::Crlb => "crlb",
            Self::Sync => "sync",
            Self::Association => "association",
        }
    }
}

/// How static clutter is removed before the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CancellerKind {
    Mti,
    Rma,
    /// No cancellation. In CRLB runs this arm also drops the statics, giving
    /// the clutter-free reference.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssociationVariant {
    Full,
    Delay,
    Doppler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncVariant {
    Cmcc,
    Scmcc,
}

macro_rules! text_enum {
    ($ty:ty, $what:literal, $($variant:path => $name:literal),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }
        impl FromStr for $ty {
            type Err = HarnessError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(HarnessError::Value { key: $what.into(), value: other.into() }),
                }
            }
        }
    };
}

text_enum!(ExperimentKind, "kind",
    ExperimentKind::Suppression => "suppression",
    ExperimentKind::Crlb => "crlb",
    ExperimentKind::Sync => "sync",
    ExperimentKind::Association => "association");
text_enum!(CancellerKind, "canceller",
    CancellerKind::Mti => "mti", CancellerKind::Rma => "rma", CancellerKind::None => "none");
text_enum!(AssociationVariant, "association",
    AssociationVariant::Full => "full",
    AssociationVariant::Delay => "delay",
    AssociationVariant::Doppler => "doppler");
text_enum!(SyncVariant, "sync", SyncVariant::Cmcc => "cmcc", SyncVariant::Scmcc => "scmcc");

/// Processing choices of one pipeline arm.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineFlags {
    pub canceller: CancellerKind,
    /// MTI lag in symbols.
    pub g_d: usize,
    /// RMA forgetting factor.
    pub forgetting: f64,
    pub association: AssociationVariant,
    pub window: Window,
    pub sync: SyncVariant,
    pub k_doppler: usize,
    pub k_range: usize,
    /// Suppression checkpoints: every `symbol_step`-th symbol count.
    pub symbol_step: usize,
    /// Lag search radius of the synchronization bound; 0 skips the bound.
    pub bound_radius: usize,
}

impl Default for PipelineFlags {
    fn default() -> Self {
        Self {
            canceller: CancellerKind::Mti,
            g_d: 1,
            forgetting: 0.05,
            association: AssociationVariant::Full,
            window: Window::Rectangular,
            sync: SyncVariant::Cmcc,
            k_doppler: 5,
            k_range: 25,
            symbol_step: 5,
            bound_radius: 0,
        }
    }
}

/// A named set of flag overrides evaluated on the same trial data.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    /// `(flag key, value)` pairs, applied in order.
    pub overrides: Vec<(String, String)>,
}

impl Variant {
    pub fn new(label: &str, overrides: &[(&str, &str)]) -> Self {
        Self {
            label: label.into(),
            overrides: overrides.iter().map(|(k, v)| ((*k).into(), (*v).into())).collect(),
        }
    }

    pub fn flags(&self, base: &PipelineFlags) -> Result<PipelineFlags> {
        let mut flags = base.clone();
        for (k, v) in &self.overrides {
            set_flag(&mut flags, k, v)?;
        }
        Ok(flags)
    }
}

/// One swept spec key and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

/// Range over which the offsets move between calibration and measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSpec {
    /// CFO drift, equivalent m/s.
    pub velocity: Interval,
    /// TO drift, equivalent m.
    pub range: Interval,
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self { velocity: Interval::new(-5.0, 5.0), range: Interval::new(-10.0, 10.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: ExperimentKind,
    pub scene: SceneConfig,
    pub ofdm: OfdmConfig,
    pub snr_sweep: Vec<f64>,
    pub n_trials: usize,
    pub seed: u64,
    pub flags: PipelineFlags,
    /// Cartesian product with the SNR sweep; the first axis varies slowest.
    pub axes: Vec<SweepAxis>,
    pub variants: Vec<Variant>,
    pub drift: DriftSpec,
    /// LOS power as a multiple of the total reflected power.
    pub los_power_ratio: Option<f64>,
    pub qmc: QmcSettings,
    pub output_dir: String,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            kind: ExperimentKind::Association,
            scene: SceneConfig::default(),
            ofdm: OfdmConfig::default(),
            snr_sweep: vec![10.0],
            n_trials: 100,
            seed: 1,
            flags: PipelineFlags::default(),
            axes: Vec::new(),
            variants: Vec::new(),
            drift: DriftSpec::default(),
            los_power_ratio: None,
            qmc: QmcSettings { points: 512, shifts: 4, seed: 0x5eed },
            output_dir: "results".into(),
        }
    }
}

fn value_err(key: &str, value: &str) -> HarnessError {
    HarnessError::Value { key: key.into(), value: value.into() }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| value_err(key, value))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v)).collect()
}

fn parse_pair(key: &str, value: &str) -> Result<(f64, f64)> {
    match parse_list::<f64>(key, value)?.as_slice() {
        [x] => Ok((*x, *x)),
        [a, b] => Ok((*a, *b)),
        _ => Err(value_err(key, value)),
    }
}

fn parse_interval(key: &str, value: &str) -> Result<Interval> {
    parse_pair(key, value).map(|(lo, hi)| Interval::new(lo, hi))
}

fn show_interval(iv: Interval) -> String {
    format!("{},{}", iv.lo, iv.hi)
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Sets one `flags.` key (given without the prefix).
pub fn set_flag(flags: &mut PipelineFlags, key: &str, value: &str) -> Result<()> {
    match key {
        "canceller" => flags.canceller = value.parse()?,
        "g_d" => flags.g_d = parse(key, value)?,
        "forgetting" => flags.forgetting = parse(key, value)?,
        "association" => flags.association = value.parse()?,
        "window" => flags.window = value.parse().map_err(|_| value_err(key, value))?,
        "sync" => flags.sync = value.parse()?,
        "k_doppler" => flags.k_doppler = parse(key, value)?,
        "k_range" => flags.k_range = parse(key, value)?,
        "symbol_step" => flags.symbol_step = parse(key, value)?,
        "bound_radius" => flags.bound_radius = parse(key, value)?,
        _ => return Err(HarnessError::UnknownKey(format!("flags.{key}"))),
    }
    Ok(())
}

fn flag_pairs(f: &PipelineFlags) -> Vec<(&'static str, String)> {
    vec![
        ("canceller", f.canceller.to_string()),
        ("g_d", f.g_d.to_string()),
        ("forgetting", f.forgetting.to_string()),
        ("association", f.association.to_string()),
        ("window", f.window.to_string()),
        ("sync", f.sync.to_string()),
        ("k_doppler", f.k_doppler.to_string()),
        ("k_range", f.k_range.to_string()),
        ("symbol_step", f.symbol_step.to_string()),
        ("bound_radius", f.bound_radius.to_string()),
    ]
}

impl ExperimentSpec {
    /// Sets a scalar key, as used by config lines and sweep axes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if let Some(flag) = key.strip_prefix("flags.") {
            return set_flag(&mut self.flags, flag, value);
        }
        if let Some(label) = key.strip_prefix("variant.") {
            let overrides = value
                .split_whitespace()
                .map(|kv| {
                    let (k, v) = kv.split_once('=').ok_or_else(|| value_err(key, value))?;
                    set_flag(&mut PipelineFlags::default(), k, v)?;
                    Ok((k.to_owned(), v.to_owned()))
                })
                .collect::<Result<Vec<_>>>()?;
            self.variants.retain(|v| v.label != label);
            self.variants.push(Variant { label: label.into(), overrides });
            return Ok(());
        }
        if let Some(axis_key) = key.strip_prefix("sweep.") {
            // Validate the key and every value against a scratch copy.
            let values: Vec<String> = value.split(',').map(|v| v.trim().to_owned()).collect();
            let mut probe = self.clone();
            for v in &values {
                probe.set(axis_key, v)?;
            }
            self.axes.retain(|a| a.key != axis_key);
            self.axes.push(SweepAxis { key: axis_key.into(), values });
            return Ok(());
        }
        let s = &mut self.scene;
        let o = &mut self.ofdm;
        match key {
            "name" => self.name = value.into(),
            "kind" => self.kind = value.parse()?,
            "snr_db" => self.snr_sweep = parse_list(key, value)?,
            "n_trials" => self.n_trials = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "output_dir" => self.output_dir = value.into(),
            "los_power_ratio" => {
                self.los_power_ratio = if value == "none" { None } else { Some(parse(key, value)?) }
            }
            "drift.velocity" => self.drift.velocity = parse_interval(key, value)?,
            "drift.range" => self.drift.range = parse_interval(key, value)?,
            "qmc.points" => self.qmc.points = parse(key, value)?,
            "qmc.shifts" => self.qmc.shifts = parse(key, value)?,
            "qmc.seed" => self.qmc.seed = parse(key, value)?,
            "scene.rru" => s.rru_pos = parse_pair(key, value).map(|(x, y)| Point2::new(x, y))?,
            "scene.ut" => s.ut_pos = parse_pair(key, value).map(|(x, y)| Point2::new(x, y))?,
            "scene.n_targets" => s.n_targets = parse(key, value)?,
            "scene.target_speed" => s.target_speed_range = parse_interval(key, value)?,
            "scene.target_range" => s.target_range_interval = parse_interval(key, value)?,
            "scene.statics_per_target" => {
                let (lo, hi) = parse_pair(key, value)?;
                if lo < 0.0 || hi < 0.0 || lo.fract() != 0.0 || hi.fract() != 0.0 {
                    return Err(value_err(key, value));
                }
                s.statics_per_target = (lo as usize, hi as usize);
            }
            // Total static paths, split evenly over the targets.
            "scene.clutter_paths" => {
                let total: usize = parse(key, value)?;
                if s.n_targets == 0 || !total.is_multiple_of(s.n_targets) {
                    return Err(value_err(key, value));
                }
                s.statics_per_target = (total / s.n_targets, total / s.n_targets);
            }
            "scene.scatter_radius" => s.static_scatter_radius = parse(key, value)?,
            "scene.rcs" => s.rcs = parse(key, value)?,
            "scene.tx_power_dbm" => s.tx_power_dbm = parse(key, value)?,
            "scene.min_speed_gap" => s.min_speed_gap = parse(key, value)?,
            "scene.cfo_velocity" => s.cfo_velocity_range = parse_interval(key, value)?,
            "scene.to_range" => s.to_range_interval = parse_interval(key, value)?,
            "ofdm.f_c" => o.f_c = parse(key, value)?,
            "ofdm.delta_f" => o.delta_f = parse(key, value)?,
            "ofdm.n_sub" => o.n_sub = parse(key, value)?,
            "ofdm.n_cp" => o.n_cp = parse(key, value)?,
            "ofdm.g_symbols" => o.g_symbols = parse(key, value)?,
            "ofdm.m_r" => o.m_r = parse(key, value)?,
            "ofdm.m_u" => o.m_u = parse(key, value)?,
            "ofdm.d_over_lambda" => o.d_over_lambda = parse(key, value)?,
            _ => return Err(HarnessError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Parses config text. A leading `preset = <name>` line picks the base;
    /// otherwise the defaults are used. `#` starts a comment.
    pub fn from_config(text: &str) -> Result<Self> {
        let mut spec: Option<ExperimentSpec> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Syntax { line: i + 1, text: raw.into() })?;
            let (key, value) = (key.trim(), value.trim());
            if key == "preset" {
                if spec.is_some() {
                    return Err(HarnessError::Syntax { line: i + 1, text: "preset must come first".into() });
                }
                spec = Some(crate::presets::preset(value)?);
                continue;
            }
            let s = spec.get_or_insert_with(ExperimentSpec::default);
            s.set(key, value).map_err(|e| HarnessError::AtLine { line: i + 1, source: Box::new(e) })?;
        }
        let spec = spec.unwrap_or_default();
        spec.validate()?;
        Ok(spec)
    }

    /// Full config text; [`ExperimentSpec::from_config`] reads it back unchanged.
    pub fn to_config(&self) -> String {
        let s = &self.scene;
        let o = &self.ofdm;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("name", self.name.clone());
        line("kind", self.kind.to_string());
        line("seed", self.seed.to_string());
        line("n_trials", self.n_trials.to_string());
        line("snr_db", join(&self.snr_sweep));
        line("output_dir", self.output_dir.clone());
        line("los_power_ratio", self.los_power_ratio.map_or("none".into(), |r| r.to_string()));
        line("scene.rru", format!("{},{}", s.rru_pos.x, s.rru_pos.y));
        line("scene.ut", format!("{},{}", s.ut_pos.x, s.ut_pos.y));
        line("scene.n_targets", s.n_targets.to_string());
        line("scene.target_speed", show_interval(s.target_speed_range));
        line("scene.target_range", show_interval(s.target_range_interval));
        line("scene.statics_per_target", format!("{},{}", s.statics_per_target.0, s.statics_per_target.1));
        line("scene.scatter_radius", s.static_scatter_radius.to_string());
        line("scene.rcs", s.rcs.to_string());
        line("scene.tx_power_dbm", s.tx_power_dbm.to_string());
        line("scene.min_speed_gap", s.min_speed_gap.to_string());
        line("scene.cfo_velocity", show_interval(s.cfo_velocity_range));
        line("scene.to_range", show_interval(s.to_range_interval));
        line("ofdm.f_c", o.f_c.to_string());
        line("ofdm.delta_f", o.delta_f.to_string());
        line("ofdm.n_sub", o.n_sub.to_string());
        line("ofdm.n_cp", o.n_cp.to_string());
        line("ofdm.g_symbols", o.g_symbols.to_string());
        line("ofdm.m_r", o.m_r.to_string());
        line("ofdm.m_u", o.m_u.to_string());
        line("ofdm.d_over_lambda", o.d_over_lambda.to_string());
        for (k, v) in flag_pairs(&self.flags) {
            line(&format!("flags.{k}"), v);
        }
        line("drift.velocity", show_interval(self.drift.velocity));
        line("drift.range", show_interval(self.drift.range));
        line("qmc.points", self.qmc.points.to_string());
        line("qmc.shifts", self.qmc.shifts.to_string());
        line("qmc.seed", self.qmc.seed.to_string());
        for a in &self.axes {
            line(&format!("sweep.{}", a.key), a.values.join(","));
        }
        for v in &self.variants {
            let body = v.overrides.iter().map(|(k, x)| format!("{k}={x}")).collect::<Vec<_>>().join(" ");
            line(&format!("variant.{}", v.label), body);
        }
        out
    }

    /// Variants to evaluate; a spec without any runs its base flags once.
    pub fn effective_variants(&self) -> Vec<Variant> {
        if self.variants.is_empty() {
            vec![Variant { label: "base".into(), overrides: Vec::new() }]
        } else {
            self.variants.clone()
        }
    }

    /// Number of sweep points (SNR values times axis values).
    pub fn n_points(&self) -> usize {
        self.snr_sweep.len() * self.axes.iter().map(|a| a.values.len()).product::<usize>()
    }

    /// SNR and axis values of point `p`; SNR varies slowest.
    pub fn point(&self, p: usize) -> (f64, Vec<(String, String)>) {
        let mut rest = p;
        let mut picks = Vec::with_capacity(self.axes.len());
        for a in self.axes.iter().rev() {
            picks.push((a.key.clone(), a.values[rest % a.values.len()].clone()));
            rest /= a.values.len();
        }
        picks.reverse();
        (self.snr_sweep[rest], picks)
    }

    /// The spec with point `p`'s axis values applied.
    pub fn at_point(&self, p: usize) -> Result<(f64, ExperimentSpec)> {
        let (snr, picks) = self.point(p);
        let mut spec = self.clone();
        for (k, v) in &picks {
            spec.set(k, v)?;
        }
        Ok((snr, spec))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Invalid(format!("{}: {m}", self.name)));
        if self.n_trials == 0 {
            return bad("n_trials must be positive");
        }
        if self.snr_sweep.is_empty() || self.snr_sweep.iter().any(|s| !s.is_finite()) {
            return bad("snr_db needs at least one finite value");
        }
        if self.axes.iter().any(|a| a.values.is_empty()) {
            return bad("sweep axis without values");
        }
        if self.flags.symbol_step == 0 || self.flags.k_doppler == 0 || self.flags.k_range == 0 {
            return bad("symbol_step and padding factors must be positive");
        }
        if let Some(r) = self.los_power_ratio {
            if !(r >= 0.0) {
                return bad("los_power_ratio must be non-negative");
            }
        }
        if !self.drift.velocity.is_valid() || !self.drift.range.is_valid() {
            return bad("drift intervals must be finite and ordered");
        }
        let mut labels: Vec<&str> = self.variants.iter().map(|v| v.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.variants.len() {
            return bad("duplicate variant label");
        }
        for p in 0..self.n_points() {
            let (_, spec) = self.at_point(p)?;
            spec.scene.validate()?;
            spec.ofdm.validate()?;
            for v in self.effective_variants() {
                v.flags(&spec.flags)?;
            }
        }
        Ok(())
    }
}
