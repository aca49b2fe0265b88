//! Built-in experiments, one per evaluation scenario.

use upsense_core::scenario::Interval;
use upsense_core::spectrum::Window;

use crate::spec::{CancellerKind, ExperimentKind, ExperimentSpec, SweepAxis, Variant};
use crate::{HarnessError, Result};

pub const PRESET_NAMES: [&str; 6] = ["suppression", "mti_crlb", "sync_clutter", "sync_bound", "association", "association_los"];

/// `lo, lo+step, …, hi`.
fn snr_range(lo: i32, hi: i32, step: usize) -> Vec<f64> {
    (lo..=hi).step_by(step).map(f64::from).collect()
}

fn axis(key: &str, values: &[&str]) -> SweepAxis {
    SweepAxis { key: key.into(), values: values.iter().map(|v| (*v).into()).collect() }
}

pub fn preset(name: &str) -> Result<ExperimentSpec> {
    let mut s = ExperimentSpec { name: name.into(), output_dir: format!("results/{name}"), ..Default::default() };
    match name {
        // Suppression against the symbol count for three CFO levels.
        "suppression" => {
            s.kind = ExperimentKind::Suppression;
            s.n_trials = 200;
            s.axes = vec![axis("scene.cfo_velocity", &["1", "3", "5"])];
            s.variants = vec![
                Variant::new("mti", &[("canceller", "mti"), ("g_d", "1")]),
                Variant::new("rma", &[("canceller", "rma"), ("forgetting", "0.05")]),
            ];
        }
        // Single target with synchronized offsets; MTI lags against the clutter-free bound.
        "mti_crlb" => {
            s.kind = ExperimentKind::Crlb;
            s.n_trials = 200;
            s.snr_sweep = snr_range(-10, 20, 5);
            s.scene.n_targets = 1;
            // Clear of the MTI blind speeds of every arm.
            s.scene.target_speed_range = Interval::new(5.0, 40.0);
            s.scene.cfo_velocity_range = Interval::point(0.0);
            s.scene.to_range_interval = Interval::point(0.0);
            s.variants = vec![
                Variant::new("gd1", &[("canceller", "mti"), ("g_d", "1")]),
                Variant::new("gd5", &[("canceller", "mti"), ("g_d", "5")]),
                Variant::new("gd10", &[("canceller", "mti"), ("g_d", "10")]),
                Variant::new("clutter_free", &[("canceller", "none")]),
            ];
        }
        // Synchronization MSE for three clutter densities.
        "sync_clutter" => {
            s.kind = ExperimentKind::Sync;
            s.n_trials = 200;
            s.snr_sweep = snr_range(-10, 20, 5);
            s.flags.window = Window::Hamming;
            s.axes = vec![axis("scene.clutter_paths", &["3", "9", "15"])];
            s.variants = vec![
                Variant::new("cmcc", &[("sync", "cmcc")]),
                Variant::new("scmcc", &[("sync", "scmcc")]),
            ];
        }
        // CMCC range MSE next to its analytical bound.
        "sync_bound" => {
            s.kind = ExperimentKind::Sync;
            s.n_trials = 100;
            s.snr_sweep = snr_range(-10, 20, 5);
            s.flags.window = Window::Hamming;
            s.scene.statics_per_target = (5, 5);
            s.variants = vec![Variant::new("cmcc", &[("sync", "cmcc"), ("bound_radius", "8")])];
        }
        // Association success against the minimum speed gap, both windows.
        "association" => {
            s.kind = ExperimentKind::Association;
            s.n_trials = 200;
            s.scene.target_speed_range = Interval::new(5.0, 40.0);
            s.flags.canceller = CancellerKind::Mti;
            s.flags.g_d = 10;
            s.axes = vec![axis("scene.min_speed_gap", &["0", "1", "2", "3", "4", "5"])];
            s.variants = vec![
                Variant::new("rect", &[("window", "rectangular")]),
                Variant::new("hamming", &[("window", "hamming")]),
            ];
        }
        // Association with a line-of-sight path of growing strength.
        "association_los" => {
            s.kind = ExperimentKind::Association;
            s.n_trials = 200;
            s.scene.target_speed_range = Interval::new(5.0, 40.0);
            s.flags.g_d = 10;
            s.axes = vec![
                axis("los_power_ratio", &["1", "5", "10"]),
                axis("scene.min_speed_gap", &["0", "2", "4"]),
            ];
        }
        other => return Err(HarnessError::UnknownPreset(other.into())),
    }
    Ok(s)
}
