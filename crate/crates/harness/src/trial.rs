//! One Monte Carlo trial: scene draw, synthesis and the per-kind metrics.

use ndarray::{Array1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use upsense_core::analysis::{crlb, crlb_paths, suppression_ratio, sync_mse_bound};
use upsense_core::analysis::{Canceller, CrlbOptions, GainModel, PathDecomposition, SyncBoundSetup};
use upsense_core::doa::{
    associate_delay_domain, associate_doppler_domain, associate_full, estimate_doa, strongest_subcarrier,
    strongest_symbol, subcarrier_stack, AngleGrid, AssociationResult, DoaEstimate,
};
use upsense_core::preprocess::{
    antenna_rows, compensate, mti_cancel, rma_cancel, select_antenna, stack_antenna_row, CompensatedStack, MtiStack,
};
use upsense_core::scenario::{generate_scene, OffsetState, PathParam, Scene};
use upsense_core::spectrum::{find_peaks, map_to_physical, spectrum_quarter, DelayDopplerSpectrum, PeakSet, Window};
use upsense_core::sync::{capture_fingerprint, cmcc_estimate, remove_cfo, ridge_offset, scmcc_estimate};
use upsense_core::waveform::{
    add_noise, default_precoder, equivalent_channel, modulate, noise_variance, path_responses, qpsk_data,
    synthesize_frames, FrameStack, OfdmConfig,
};
use upsense_core::{Complex64, SPEED_OF_LIGHT};

use crate::spec::{AssociationVariant, CancellerKind, ExperimentKind, ExperimentSpec, PipelineFlags, SyncVariant, Variant};
use crate::Result;

/// A target's bistatic range (m), radial-equivalent velocity (m/s, half the
/// bistatic range rate) and arrival angle (rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetRow {
    pub range: f64,
    pub velocity: f64,
    pub doa: f64,
}

/// Outcome of one (trial, sweep point, variant).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    /// Seed the scene was drawn from.
    pub scene_seed: u64,
    pub point: usize,
    pub snr_db: f64,
    /// Values of the sweep axes, in axis order.
    pub axis_values: Vec<String>,
    pub variant: String,
    pub truth: Vec<TargetRow>,
    pub estimates: Vec<TargetRow>,
    /// Offset drift as equivalent (velocity m/s, range m).
    pub sync_truth: Option<(f64, f64)>,
    pub sync_estimate: Option<(f64, f64)>,
    pub metrics: Vec<(String, f64)>,
    /// Set when the pipeline gave up; such a record counts as a miss.
    pub failure: Option<String>,
}

/// Seeds of trial `trial`, reproducible from the master seed alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub scene: u64,
    pub noise: u64,
}

impl TrialSeeds {
    pub fn derive(master: u64, trial: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master);
        rng.set_stream(trial as u64);
        Self { scene: rng.gen(), noise: rng.gen() }
    }

    /// Drift draws; shared by every sweep point of the trial.
    fn drift_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.noise)
    }

    /// Data and noise of sweep point `point`.
    fn noise_rng(&self, point: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise);
        rng.set_stream(point as u64 + 1);
        rng
    }
}

/// Per-variant result before it is stamped with the trial coordinates.
#[derive(Debug, Default)]
struct Outcome {
    truth: Vec<TargetRow>,
    estimates: Vec<TargetRow>,
    sync_truth: Option<(f64, f64)>,
    sync_estimate: Option<(f64, f64)>,
    metrics: Vec<(String, f64)>,
    failure: Option<String>,
}

impl Outcome {
    fn failed(kind: ExperimentKind, err: impl ToString) -> Self {
        // An association that never happened is a failed association.
        let metrics = match kind {
            ExperimentKind::Association => vec![("success".into(), 0.0), ("resolved".into(), 0.0)],
            _ => Vec::new(),
        };
        Self { metrics, failure: Some(err.to_string()), ..Default::default() }
    }
}

struct Point<'a> {
    spec: &'a ExperimentSpec,
    snr_db: f64,
    seeds: TrialSeeds,
    index: usize,
    variants: &'a [(Variant, PipelineFlags)],
}

impl Point<'_> {
    fn scene(&self, ofdm: &OfdmConfig) -> Result<Scene> {
        draw_scene(self.spec, self.seeds.scene, ofdm)
    }
}

/// The trial's scene. With a LOS power ratio `R` set, a LOS path carrying `R`
/// times the summed power of all reflected paths is appended last.
pub fn draw_scene(spec: &ExperimentSpec, scene_seed: u64, ofdm: &OfdmConfig) -> Result<Scene> {
    let cfg = upsense_core::scenario::SceneConfig {
        rng_seed: scene_seed,
        los_ratio: spec.los_power_ratio.filter(|&r| r > 0.0).map(|_| 1.0),
        ..spec.scene.clone()
    };
    let mut scene = generate_scene(&cfg, ofdm)?;
    if let Some(ratio) = cfg.los_ratio.and(spec.los_power_ratio) {
        let (los, reflected) = scene.paths.split_last_mut().expect("LOS path present");
        let power: f64 = reflected.iter().map(|p| p.gain.norm_sqr()).sum();
        los.gain = Complex64::from_polar((ratio * power).sqrt(), los.gain.arg());
    }
    Ok(scene)
}

/// Evaluates every sweep point and variant of trial `trial`.
pub fn run_trial(spec: &ExperimentSpec, trial: usize) -> Result<Vec<TrialRecord>> {
    let seeds = TrialSeeds::derive(spec.seed, trial);
    let mut records = Vec::new();
    for p in 0..spec.n_points() {
        let (snr_db, point_spec) = spec.at_point(p)?;
        let variants = point_spec
            .effective_variants()
            .into_iter()
            .map(|v| {
                let flags = v.flags(&point_spec.flags)?;
                Ok((v, flags))
            })
            .collect::<Result<Vec<_>>>()?;
        let point = Point { spec: &point_spec, snr_db, seeds, index: p, variants: &variants };
        let outcomes = match evaluate(&point) {
            Ok(o) => o,
            Err(e) => variants.iter().map(|_| Outcome::failed(spec.kind, &e)).collect(),
        };
        let axis_values: Vec<String> = spec.point(p).1.into_iter().map(|(_, v)| v).collect();
        for ((variant, _), o) in variants.iter().zip(outcomes) {
            records.push(TrialRecord {
                trial,
                scene_seed: seeds.scene,
                point: p,
                snr_db,
                axis_values: axis_values.clone(),
                variant: variant.label.clone(),
                truth: o.truth,
                estimates: o.estimates,
                sync_truth: o.sync_truth,
                sync_estimate: o.sync_estimate,
                metrics: o.metrics,
                failure: o.failure,
            });
        }
    }
    Ok(records)
}

fn evaluate(pt: &Point) -> Result<Vec<Outcome>> {
    match pt.spec.kind {
        ExperimentKind::Suppression => suppression(pt),
        ExperimentKind::Crlb => crlb_arms(pt),
        ExperimentKind::Sync => sync(pt),
        ExperimentKind::Association => association(pt),
    }
}

/// Runs `f` per variant, turning its errors into failed outcomes.
fn per_variant(pt: &Point, mut f: impl FnMut(&PipelineFlags) -> Result<Outcome>) -> Vec<Outcome> {
    pt.variants
        .iter()
        .map(|(_, flags)| f(flags).unwrap_or_else(|e| Outcome::failed(pt.spec.kind, e)))
        .collect()
}

fn truth_rows(scene: &Scene) -> Vec<TargetRow> {
    scene
        .targets
        .iter()
        .map(|t| {
            let p = &scene.paths[t.path];
            TargetRow { range: SPEED_OF_LIGHT * p.delay, velocity: t.velocity, doa: p.doa }
        })
        .collect()
}

/// `v = cΔf·ξ/(2f_c)`.
fn xi_to_velocity(xi: f64, cfg: &OfdmConfig) -> f64 {
    SPEED_OF_LIGHT * cfg.delta_f * xi / (2.0 * cfg.f_c)
}

/// Same numerology with a single receive element. Every element sees the
/// same power, so single-antenna metrics only need one.
fn single_element(cfg: &OfdmConfig) -> OfdmConfig {
    OfdmConfig { m_r: 1, ..cfg.clone() }
}

fn canceller(flags: &PipelineFlags) -> Option<Canceller> {
    match flags.canceller {
        CancellerKind::Mti => Some(Canceller::Mti { g_d: flags.g_d }),
        CancellerKind::Rma => Some(Canceller::Rma { forgetting: flags.forgetting }),
        CancellerKind::None => None,
    }
}

fn suppression(pt: &Point) -> Result<Vec<Outcome>> {
    let ofdm = &pt.spec.ofdm;
    let scene = pt.scene(ofdm)?;
    let decomp = PathDecomposition::from_scene(ofdm, &scene, &default_precoder(ofdm.m_u))?;
    let truth = truth_rows(&scene);
    Ok(per_variant(pt, |flags| {
        let c = canceller(flags).ok_or_else(|| crate::HarnessError::Invalid("suppression needs a canceller".into()))?;
        let curve = suppression_ratio(&decomp, ofdm, c)?;
        let metrics = curve
            .symbols
            .iter()
            .zip(&curve.ratio_db)
            .map(|(&g, &r)| (g + 1, r))
            .filter(|(count, _)| count % flags.symbol_step == 0)
            .map(|(count, r)| (format!("ratio_db_s{count}"), r))
            .collect();
        Ok(Outcome { truth: truth.clone(), metrics, ..Default::default() })
    }))
}

/// Synthesizes `paths` with a fixed noise variance; `rng` supplies data then noise.
fn synthesize_with_variance(
    cfg: &OfdmConfig,
    paths: &[PathParam],
    offsets: &OffsetState,
    precoder: &Array1<Complex64>,
    noise_var: f64,
    rng: &mut ChaCha8Rng,
) -> Result<CompensatedStack> {
    let resp = path_responses(cfg, paths, offsets, precoder)?;
    let data = qpsk_data(cfg.g_symbols, cfg.n_sub, rng);
    let mut symbols = equivalent_channel(cfg, &resp);
    modulate(&mut symbols, &data);
    add_noise(&mut symbols, noise_var, rng);
    Ok(compensate(&FrameStack { symbols, data })?)
}

fn crlb_arms(pt: &Point) -> Result<Vec<Outcome>> {
    let cfg = single_element(&pt.spec.ofdm);
    let pre = default_precoder(cfg.m_u);
    let scene = pt.scene(&cfg)?;
    let target = scene.targets.first().expect("scenes have a target").path;
    let all = path_responses(&cfg, &scene.paths, &scene.offsets, &pre)?;
    // One noise level for every arm: the clutter-free arm keeps the cluttered SNR.
    let noise_var = noise_variance(&all, pt.snr_db);
    let truth = truth_rows(&scene);
    let (xi, tau) = (all[target].xi, all[target].tau);
    let (xi_o, to) = (scene.offsets.xi(&cfg), scene.offsets.to);
    Ok(per_variant(pt, |flags| {
        let mut rng = pt.seeds.noise_rng(pt.index);
        let (gamma, g_d) = match flags.canceller {
            CancellerKind::Mti => {
                let comp = synthesize_with_variance(&cfg, &scene.paths, &scene.offsets, &pre, noise_var, &mut rng)?;
                (stack_antenna_row(&mti_cancel(&comp, flags.g_d)?, 0), flags.g_d)
            }
            CancellerKind::None => {
                let moving = [scene.paths[target]];
                let comp = synthesize_with_variance(&cfg, &moving, &scene.offsets, &pre, noise_var, &mut rng)?;
                (antenna_rows(&comp.hat_y, 0), 0)
            }
            CancellerKind::Rma => {
                return Err(crate::HarnessError::Invalid("the CRLB covers MTI or no cancellation".into()))
            }
        };
        let spec = spectrum_quarter(&gamma, flags.k_doppler, flags.k_range, flags.window)?;
        let peak = find_peaks(&spec, 1)?.peaks[0];
        let xi_hat = peak.k as f64 * cfg.n_sub as f64 / (cfg.n_s() as f64 * spec.axes.rows() as f64);
        let tau_hat = peak.n as f64 * spec.axes.t_r(&cfg);
        let bound = crlb(
            &crlb_paths(&all[target..=target], &cfg, 0),
            &cfg,
            &CrlbOptions { g_d, noise_var, gains: GainModel::Nuisance },
        )?;
        let (crlb_v, crlb_r) = bound.per_path_bounds[0];
        Ok(Outcome {
            truth: truth.clone(),
            estimates: vec![TargetRow {
                range: SPEED_OF_LIGHT * (tau_hat - to),
                velocity: xi_to_velocity(xi_hat - xi_o, &cfg),
                doa: f64::NAN,
            }],
            metrics: vec![
                ("sq_err_v".into(), xi_to_velocity(xi - xi_hat, &cfg).powi(2)),
                ("sq_err_r".into(), (SPEED_OF_LIGHT * (tau - tau_hat)).powi(2)),
                ("crlb_v".into(), crlb_v),
                ("crlb_r".into(), crlb_r),
            ],
            ..Default::default()
        })
    }))
}

fn sync(pt: &Point) -> Result<Vec<Outcome>> {
    let cfg = single_element(&pt.spec.ofdm);
    let pre = default_precoder(cfg.m_u);
    let scene = pt.scene(&cfg)?;
    let calibration = scene.offsets;
    let mut drift_rng = pt.seeds.drift_rng();
    let (dv, dr) = (pt.spec.drift.velocity.sample(&mut drift_rng), pt.spec.drift.range.sample(&mut drift_rng));
    let drift = OffsetState::from_equivalents(dv, dr, &cfg);
    let updated = OffsetState { cfo: calibration.cfo + drift.cfo, to: calibration.to + drift.to };
    let mut rng = pt.seeds.noise_rng(pt.index);
    let before = compensate(&synthesize_frames(&cfg, &scene.paths, &calibration, &pre, Some(pt.snr_db), &mut rng)?)?;
    let after = compensate(&synthesize_frames(&cfg, &scene.paths, &updated, &pre, Some(pt.snr_db), &mut rng)?)?;
    let truth = truth_rows(&scene);
    let drift_xi = cfg.normalize_freq(drift.cfo);
    let mut spectra: Vec<((Window, usize, usize), DelayDopplerSpectrum, DelayDopplerSpectrum)> = Vec::new();
    Ok(per_variant(pt, |flags| {
        let key = (flags.window, flags.k_doppler, flags.k_range);
        if !spectra.iter().any(|(k, ..)| *k == key) {
            let s0 = spectrum_quarter(&antenna_rows(&before.hat_y, 0), key.1, key.2, key.0)?;
            let s1 = spectrum_quarter(&antenna_rows(&after.hat_y, 0), key.1, key.2, key.0)?;
            spectra.push((key, s0, s1));
        }
        let (_, s0, s1) = spectra.iter().find(|(k, ..)| *k == key).expect("cached above");
        let fp = capture_fingerprint(s0, 0)?;
        let est = match flags.sync {
            SyncVariant::Cmcc => cmcc_estimate(&fp, s1, &cfg)?,
            SyncVariant::Scmcc => scmcc_estimate(&fp, s1, &cfg)?,
        };
        let mut metrics = vec![
            ("sq_err_v".to_owned(), xi_to_velocity(drift_xi - est.d_xi, &cfg).powi(2)),
            ("sq_err_r".to_owned(), (SPEED_OF_LIGHT * (drift.to - est.d_tau)).powi(2)),
        ];
        if flags.bound_radius > 0 {
            let bound = sync_mse_bound(&SyncBoundSetup {
                cfg: &cfg,
                paths: &scene.paths,
                calibration,
                updated,
                precoder: &pre,
                antenna: 0,
                k_doppler: flags.k_doppler,
                k_range: flags.k_range,
                window: flags.window,
                snr_db: pt.snr_db,
                radius: flags.bound_radius,
                qmc: pt.spec.qmc,
            })?;
            metrics.push(("bound_r".into(), bound.mse));
        }
        Ok(Outcome {
            truth: truth.clone(),
            sync_truth: Some((dv, dr)),
            sync_estimate: Some((xi_to_velocity(est.d_xi, &cfg), SPEED_OF_LIGHT * est.d_tau)),
            metrics,
            ..Default::default()
        })
    }))
}

/// A target counts as resolved when its nearest peak lies within this many
/// cells and no other target has that same nearest peak.
pub const RESOLVE_RADIUS_CELLS: f64 = 1.5;

fn associate(variant: AssociationVariant, mti: &MtiStack, doas: &DoaEstimate, peaks: &PeakSet, d: f64) -> Result<AssociationResult> {
    Ok(match variant {
        AssociationVariant::Full => associate_full(mti, doas, peaks, d)?,
        AssociationVariant::Delay => {
            associate_delay_domain(mti.breve_y.index_axis(Axis(0), strongest_symbol(mti)), doas, peaks, d)?
        }
        AssociationVariant::Doppler => {
            associate_doppler_domain(subcarrier_stack(mti, strongest_subcarrier(mti)).view(), doas, peaks, d)?
        }
    })
}

fn association(pt: &Point) -> Result<Vec<Outcome>> {
    let cfg = &pt.spec.ofdm;
    let pre = default_precoder(cfg.m_u);
    let scene = pt.scene(cfg)?;
    let n = scene.targets.len();
    let mut rng = pt.seeds.noise_rng(pt.index);
    let comp = compensate(&synthesize_frames(cfg, &scene.paths, &scene.offsets, &pre, Some(pt.snr_db), &mut rng)?)?;

    // CFO from a noise-free calibration burst of the static paths alone.
    let statics: Vec<PathParam> = scene.paths.iter().filter(|p| p.is_static).copied().collect();
    let xi_hat = if statics.is_empty() {
        0.0
    } else {
        let cal = compensate(&synthesize_frames(cfg, &statics, &scene.offsets, &pre, None, &mut rng)?)?;
        let m = select_antenna(&comp.hat_y);
        let (k, k_r) = (pt.spec.flags.k_doppler, pt.spec.flags.k_range);
        let cal_spec = spectrum_quarter(&antenna_rows(&cal.hat_y, m), k, k_r, Window::Rectangular)?;
        ridge_offset(&capture_fingerprint(&cal_spec, 0)?, cfg)
    };
    let derotated = remove_cfo(&comp, xi_hat, cfg);
    let truth = truth_rows(&scene);

    // Cancellation and MUSIC depend only on the canceller settings.
    type Cached = (CancellerKind, usize, u64, MtiStack, DoaEstimate);
    let mut cache: Vec<Cached> = Vec::new();
    Ok(per_variant(pt, |flags| {
        let key = (flags.canceller, flags.g_d, flags.forgetting.to_bits());
        if !cache.iter().any(|c| (c.0, c.1, c.2) == key) {
            let mti = match flags.canceller {
                CancellerKind::Mti => mti_cancel(&derotated, flags.g_d)?,
                CancellerKind::Rma => rma_cancel(&derotated, flags.forgetting)?,
                CancellerKind::None => {
                    return Err(crate::HarnessError::Invalid("association needs a canceller".into()))
                }
            };
            let doas = estimate_doa(&mti, n, &AngleGrid::default(), cfg.d_over_lambda)?;
            cache.push((key.0, key.1, key.2, mti, doas));
        }
        let (.., mti, doas) = cache.iter().find(|c| (c.0, c.1, c.2) == key).expect("cached above");
        let m = select_antenna(&mti.breve_y);
        let spec = spectrum_quarter(&stack_antenna_row(mti, m), flags.k_doppler, flags.k_range, flags.window)?;
        let peaks = find_peaks(&spec, n)?;
        let assoc = associate(flags.association, mti, doas, &peaks, cfg.d_over_lambda)?;
        let axes = spec.axes;

        // Nearest peak of every target, in cells.
        let nearest: Vec<(usize, f64)> = scene
            .targets
            .iter()
            .map(|t| {
                let p = &scene.paths[t.path];
                let xi = cfg.normalize_freq(p.doppler) + scene.offsets.xi(cfg) - xi_hat;
                let kb = axes.doppler_bin(xi, cfg);
                let nb = axes.delay_bin(p.delay + scene.offsets.to, cfg);
                peaks
                    .peaks
                    .iter()
                    .enumerate()
                    .map(|(i, pk)| {
                        let dk = (pk.k as f64 - kb) / flags.k_doppler as f64;
                        let dn = (pk.n as f64 - nb) / flags.k_range as f64;
                        (i, dk.hypot(dn))
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .expect("find_peaks returns n peaks")
            })
            .collect();
        let (mut resolved, mut correct, mut sq_err_doa) = (0usize, 0usize, 0.0);
        for (t, &(pi, dist)) in nearest.iter().enumerate() {
            let shared = nearest.iter().enumerate().any(|(u, &(pj, _))| u != t && pj == pi);
            if dist > RESOLVE_RADIUS_CELLS || shared {
                continue;
            }
            resolved += 1;
            let truth_sin = scene.paths[scene.targets[t].path].doa.sin();
            let best = (0..doas.angles.len())
                .min_by(|&a, &b| {
                    (doas.angles[a].sin() - truth_sin).abs().total_cmp(&(doas.angles[b].sin() - truth_sin).abs())
                })
                .expect("MUSIC returns n angles");
            let assigned = assoc.pairs[pi].doa;
            if assigned == best {
                correct += 1;
            }
            // MUSIC reports angles folded into [0, π/2].
            let folded = truth_sin.clamp(-1.0, 1.0).asin();
            sq_err_doa += (doas.angles[assigned] - folded).to_degrees().powi(2);
        }
        let success = resolved > 0 && correct == resolved;
        let mut metrics = vec![
            ("success".to_owned(), if success { 1.0 } else { 0.0 }),
            ("resolved".to_owned(), resolved as f64 / n as f64),
        ];
        if resolved > 0 {
            metrics.push(("sq_err_doa_deg".into(), sq_err_doa / resolved as f64));
        }
        let physical = map_to_physical(&peaks, cfg);
        let estimates = assoc
            .pairs
            .iter()
            .zip(physical)
            .map(|(a, (range, rate))| TargetRow { range, velocity: rate / 2.0, doa: doas.angles[a.doa] })
            .collect();
        Ok(Outcome { truth: truth.clone(), estimates, metrics, ..Default::default() })
    }))
}
