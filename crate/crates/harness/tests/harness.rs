use std::process::Command;

use upsense_harness::run::{summary_column, write_results, write_summary};
use upsense_harness::spec::{CancellerKind, ExperimentKind};
use upsense_harness::trial::draw_scene;
use upsense_harness::{preset, run_experiment, run_trial, write_outputs, ExperimentSpec, HarnessError, PRESET_NAMES};

/// A few cheap single-antenna trials of the CRLB experiment.
fn small_crlb() -> ExperimentSpec {
    let mut spec = ExperimentSpec::from_config(
        "preset = mti_crlb\n\
         n_trials = 3\n\
         snr_db = 0,10\n\
         ofdm.g_symbols = 64\n\
         variant.gd1 = canceller=mti g_d=1\n\
         variant.free = canceller=none\n",
    )
    .unwrap();
    spec.variants.retain(|v| v.label == "gd1" || v.label == "free");
    spec
}

fn csv_bytes(spec: &ExperimentSpec) -> (Vec<u8>, Vec<u8>) {
    let out = run_experiment(spec).unwrap();
    let (mut results, mut summary) = (Vec::new(), Vec::new());
    write_results(spec, &out.records, &mut results).unwrap();
    write_summary(spec, &out.summary, &mut summary).unwrap();
    (results, summary)
}

#[test]
fn one_trial_twice_gives_identical_csv() {
    for mut spec in [small_crlb(), preset("association").unwrap()] {
        spec.n_trials = 1;
        spec.axes.clear();
        let a = csv_bytes(&spec);
        let b = csv_bytes(&spec);
        assert_eq!(a, b, "{}", spec.name);
        assert!(a.0.len() > 100);
    }
}

#[test]
fn summary_mse_is_the_mean_of_trial_squared_errors() {
    let spec = small_crlb();
    let out = run_experiment(&spec).unwrap();
    assert_eq!(out.records.len(), spec.n_trials * spec.n_points() * 2);
    for row in &out.summary {
        let group: Vec<_> = out
            .records
            .iter()
            .filter(|r| r.point == row.point && r.variant == row.variant)
            .collect();
        assert_eq!(group.len(), row.trials);
        for metric in ["sq_err_v", "sq_err_r", "crlb_r"] {
            let vals: Vec<f64> = group
                .iter()
                .filter_map(|r| r.metrics.iter().find(|(m, _)| m == metric).map(|m| m.1))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let got = row.mean(&summary_column(metric)).unwrap();
            assert!((got - mean).abs() <= 1e-12 * mean.abs().max(1e-300), "{metric}: {got} vs {mean}");
        }
    }
    assert_eq!(summary_column("sq_err_r"), "mse_r");
    assert_eq!(summary_column("success"), "mean_success");
}

#[test]
fn any_trial_replays_in_isolation() {
    let spec = small_crlb();
    let out = run_experiment(&spec).unwrap();
    let alone = run_trial(&spec, 2).unwrap();
    let from_run: Vec<_> = out.records.iter().filter(|r| r.trial == 2).cloned().collect();
    let mut alone_sorted = alone.clone();
    alone_sorted.sort_by_key(|r| (r.point, r.variant != "gd1"));
    // Unestimated angles are NaN, so compare the serialized rows.
    let csv = |records: &[_]| {
        let mut buf = Vec::new();
        write_results(&spec, records, &mut buf).unwrap();
        buf
    };
    assert_eq!(csv(&alone_sorted), csv(&from_run));
}

#[test]
fn seeds_differ_between_trials_and_masters() {
    let spec = small_crlb();
    let a = run_trial(&spec, 0).unwrap();
    let b = run_trial(&spec, 1).unwrap();
    assert_ne!(a[0].scene_seed, b[0].scene_seed);
    let other = ExperimentSpec { seed: spec.seed + 1, ..spec.clone() };
    assert_ne!(run_trial(&other, 0).unwrap()[0].scene_seed, a[0].scene_seed);
}

#[test]
fn every_preset_round_trips_through_config_text() {
    for name in PRESET_NAMES {
        let spec = preset(name).unwrap();
        spec.validate().unwrap();
        let back = ExperimentSpec::from_config(&spec.to_config()).unwrap();
        assert_eq!(back, spec, "{name}");
    }
}

#[test]
fn presets_cover_every_experiment() {
    assert!(PRESET_NAMES.contains(&"suppression"));
    let mti_crlb = preset("mti_crlb").unwrap();
    let lags: Vec<usize> = mti_crlb
        .effective_variants()
        .iter()
        .map(|v| v.flags(&mti_crlb.flags).unwrap())
        .filter(|f| f.canceller == CancellerKind::Mti)
        .map(|f| f.g_d)
        .collect();
    assert_eq!(lags, [1, 5, 10]);
    assert_eq!(preset("sync_clutter").unwrap().kind, ExperimentKind::Sync);
    assert_eq!(preset("association").unwrap().kind, ExperimentKind::Association);
    assert!(matches!(preset("unknown"), Err(HarnessError::UnknownPreset(_))));
}

#[test]
fn config_errors_name_the_line() {
    let err = ExperimentSpec::from_config("name = x\nscene.n_targets = three\n").unwrap_err();
    assert!(matches!(err, HarnessError::AtLine { line: 2, .. }), "{err}");
    assert!(matches!(
        ExperimentSpec::from_config("bogus = 1\n"),
        Err(HarnessError::AtLine { line: 1, .. })
    ));
    assert!(matches!(ExperimentSpec::from_config("no equals sign\n"), Err(HarnessError::Syntax { line: 1, .. })));
    assert!(ExperimentSpec::from_config("n_trials = 0\n").is_err());
    assert!(ExperimentSpec::from_config("snr_db = \n").is_err());
    assert!(ExperimentSpec::from_config("variant.a = window=round\n").is_err());
    assert!(ExperimentSpec::from_config("sweep.scene.clutter_paths = 3,4\n").is_err());
    assert!(ExperimentSpec::from_config("name = x\npreset = suppression\n").is_err());
}

#[test]
fn sweep_points_vary_the_last_axis_fastest() {
    let spec = preset("association_los").unwrap();
    assert_eq!(spec.n_points(), 9);
    let (snr, picks) = spec.point(4);
    assert_eq!(snr, 10.0);
    assert_eq!(picks[0], ("los_power_ratio".into(), "5".into()));
    assert_eq!(picks[1], ("scene.min_speed_gap".into(), "2".into()));
    let (_, at) = spec.at_point(8).unwrap();
    assert_eq!(at.los_power_ratio, Some(10.0));
    assert_eq!(at.scene.min_speed_gap, 4.0);
}

#[test]
fn pipeline_failures_become_misses() {
    // Association has nothing to localize without a canceller.
    let mut spec = ExperimentSpec::from_config(
        "preset = association\nn_trials = 2\nflags.canceller = none\nofdm.g_symbols = 32\n",
    )
    .unwrap();
    spec.axes.clear();
    let out = run_experiment(&spec).unwrap();
    assert!(out.records.iter().all(|r| r.failure.is_some()));
    assert!(out.summary.iter().all(|r| r.misses == r.trials && r.mean("mean_success") == Some(0.0)));
}

#[test]
fn los_path_carries_the_requested_power_share() {
    let mut spec = preset("association_los").unwrap();
    let ofdm = spec.ofdm.clone();
    for ratio in [1.0, 5.0, 10.0] {
        spec.los_power_ratio = Some(ratio);
        let scene = draw_scene(&spec, 17, &ofdm).unwrap();
        let (los, rest) = scene.paths.split_last().unwrap();
        assert!(los.is_static && los.doppler == 0.0);
        let reflected: f64 = rest.iter().map(|p| p.gain.norm_sqr()).sum();
        assert!((los.gain.norm_sqr() / reflected - ratio).abs() < 1e-12 * ratio);
    }
    spec.los_power_ratio = Some(0.0);
    let without = draw_scene(&spec, 17, &ofdm).unwrap();
    spec.los_power_ratio = None;
    assert_eq!(without, draw_scene(&spec, 17, &ofdm).unwrap());
}

#[test]
fn outputs_land_in_the_directory() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec { n_trials: 2, ..preset("suppression").unwrap() };
    let out = run_experiment(&spec).unwrap();
    write_outputs(&spec, &out, dir.path()).unwrap();
    for f in ["results.csv", "summary.csv", "config.txt", "plot_suppression.py"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let text = std::fs::read_to_string(dir.path().join("config.txt")).unwrap();
    assert_eq!(ExperimentSpec::from_config(&text).unwrap(), spec);
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    // Header plus one row per trial, CFO level and canceller.
    assert_eq!(results.lines().count(), 1 + 2 * 3 * 2);
}

#[test]
fn mti_beats_rma_on_a_suppression_run() {
    let spec = ExperimentSpec { n_trials: 5, ..preset("suppression").unwrap() };
    let out = run_experiment(&spec).unwrap();
    let mti = out.row("mti", spec.snr_sweep[0], &["1"]).unwrap();
    let rma = out.row("rma", spec.snr_sweep[0], &["1"]).unwrap();
    for count in [50, 100, 250] {
        let col = format!("mean_ratio_db_s{count}");
        assert!(mti.mean(&col).unwrap() > rma.mean(&col).unwrap(), "{col}");
    }
}

#[test]
fn cli_lists_runs_and_replays() {
    let exe = env!("CARGO_BIN_EXE_upsense");
    let list = Command::new(exe).arg("list").output().unwrap();
    assert!(list.status.success());
    let text = String::from_utf8(list.stdout).unwrap();
    for name in PRESET_NAMES {
        assert!(text.contains(name), "{name}");
    }

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.txt");
    std::fs::write(&cfg, "preset = suppression\nsweep.scene.cfo_velocity = 2\n").unwrap();
    let out = dir.path().join("out");
    let run = Command::new(exe)
        .args(["run", "--config", cfg.to_str().unwrap(), "--trials", "2", "--seed", "9", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("summary.csv").is_file());

    let replay = Command::new(exe)
        .args(["replay", "--config", cfg.to_str().unwrap(), "--trial", "1", "--seed", "9"])
        .output()
        .unwrap();
    assert!(replay.status.success());
    let rows = String::from_utf8(replay.stdout).unwrap();
    let full = std::fs::read_to_string(out.join("results.csv")).unwrap();
    for line in rows.lines().skip(1) {
        assert!(full.contains(line), "{line}");
    }

    let bad = Command::new(exe).args(["run", "--preset", "nope"]).output().unwrap();
    assert!(!bad.status.success());
}
