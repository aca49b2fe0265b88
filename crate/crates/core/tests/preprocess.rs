use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::{Array2, Array3, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use upsense_core::preprocess::*;
use upsense_core::scenario::{OffsetState, PathParam};
use upsense_core::waveform::*;
use upsense_core::{Complex64, Error, SPEED_OF_LIGHT};

fn small() -> OfdmConfig {
    OfdmConfig { g_symbols: 16, m_r: 4, n_sub: 32, n_cp: 4, ..Default::default() }
}

fn path(doppler: f64, delay: f64, doa: f64) -> PathParam {
    PathParam { gain: Complex64::from_polar(1.3, -0.2), doa, aod: 0.9, delay, doppler, is_static: doppler == 0.0 }
}

fn stack(cfg: &OfdmConfig, paths: &[PathParam], off: &OffsetState) -> CompensatedStack {
    let resp = path_responses(cfg, paths, off, &default_precoder(cfg.m_u)).unwrap();
    CompensatedStack { hat_y: equivalent_channel(cfg, &resp) }
}

fn power(a: &Array3<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

#[test]
fn compensation_inverts_all_ones_modulation() {
    let cfg = small();
    let hat = stack(&cfg, &[path(700.0, 1e-7, 0.3)], &OffsetState::default()).hat_y;
    let data = Array2::from_elem((cfg.g_symbols, cfg.n_sub), Complex64::new(1.0, 0.0));
    let mut symbols = hat.clone();
    modulate(&mut symbols, &data);
    let back = compensate(&FrameStack { symbols, data }).unwrap().hat_y;
    for (a, b) in back.iter().zip(hat.iter()) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn compensation_preserves_noise_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data = qpsk_data(10, 128, &mut rng);
    let mut symbols = Array3::zeros((10, 80, 128));
    add_noise(&mut symbols, 2.5, &mut rng);
    let hat = compensate(&FrameStack { symbols, data }).unwrap().hat_y;
    let var = power(&hat) / hat.len() as f64;
    assert!((var / 2.5 - 1.0).abs() < 0.01, "{var}");
}

#[test]
fn vanishing_data_is_rejected() {
    let mut data = Array2::from_elem((3, 8), Complex64::new(1.0, 0.0));
    data[[1, 5]] = Complex64::new(1e-12, 0.0);
    let frames = FrameStack { symbols: Array3::zeros((3, 2, 8)), data };
    assert!(matches!(compensate(&frames), Err(Error::VanishingData { symbol: 1, subcarrier: 5, .. })));
}

#[test]
fn mti_nulls_static_scene_exactly() {
    let cfg = small();
    let s = stack(&cfg, &[path(0.0, 1e-7, 0.3), path(0.0, 2e-7, 1.0)], &OffsetState::default());
    for g_d in [1, 5, 15] {
        let out = mti_cancel(&s, g_d).unwrap();
        assert_eq!(out.rows(), cfg.g_symbols - g_d);
        assert_eq!(out.first_symbol, g_d);
        assert!(out.breve_y.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }
}

#[test]
fn half_cycle_lag_doubles_amplitude() {
    let cfg = small();
    let g_d = 3;
    // ξ·G_d·N_s/N_sub = 1/2 with ξ = f/Δf.
    let xi = cfg.n_sub as f64 / (2.0 * g_d as f64 * cfg.n_s() as f64);
    let s = stack(&cfg, &[path(xi * cfg.delta_f, 1e-7, 0.4)], &OffsetState::default());
    let out = mti_cancel(&s, g_d).unwrap();
    let per_in = power(&s.hat_y) / s.hat_y.len() as f64;
    let per_out = power(&out.breve_y) / out.breve_y.len() as f64;
    assert!((per_out / per_in - 4.0).abs() < 1e-9);
}

#[test]
fn cfo_leaves_static_residue() {
    let cfg = small();
    let off = OffsetState::from_equivalents(1.0, 0.0, &cfg);
    let s = stack(&cfg, &[path(0.0, 1e-7, 0.3)], &off);
    assert!(power(&mti_cancel(&s, 1).unwrap().breve_y) > 0.0);
}

#[test]
fn mti_rejects_bad_lags() {
    let s = stack(&small(), &[path(0.0, 1e-7, 0.3)], &OffsetState::default());
    assert!(matches!(mti_cancel(&s, 0), Err(Error::InvalidConfig(_))));
    assert!(matches!(mti_cancel(&s, 16), Err(Error::InvalidConfig(_))));
}

#[test]
fn rma_static_residual_decays_geometrically() {
    let cfg = OfdmConfig { g_symbols: 201, ..small() };
    let s = stack(&cfg, &[path(0.0, 1e-7, 0.3), path(0.0, 1.7e-7, 1.2)], &OffsetState::default());
    let alpha = 0.05;
    let out = rma_cancel(&s, alpha).unwrap();
    assert_eq!((out.lag, out.first_symbol, out.rows()), (0, 0, cfg.g_symbols));
    let initial: f64 = s.hat_y.index_axis(Axis(0), 0).iter().map(|z| z.norm_sqr()).sum();
    for g in [0, 10, 200] {
        let p: f64 = out.breve_y.index_axis(Axis(0), g).iter().map(|z| z.norm_sqr()).sum();
        // Output after symbol g is (1−α)^{g+1} times the static frame.
        let want = (1.0 - alpha).powi(2 * (g as i32 + 1)) * initial;
        assert!((p - want).abs() <= 1e-9 * initial, "g={g}: {p} vs {want}");
    }
    let last: f64 = out.breve_y.index_axis(Axis(0), 200).iter().map(|z| z.norm_sqr()).sum();
    assert!(last <= (1.0 - alpha).powi(400) * initial);
}

#[test]
fn rma_with_unit_forgetting_outputs_zero() {
    let cfg = small();
    let s = stack(&cfg, &[path(0.0, 1e-7, 0.3), path(2500.0, 1.3e-7, 0.8)], &OffsetState { cfo: 900.0, to: 0.0 });
    let out = rma_cancel(&s, 1.0).unwrap();
    assert!(out.breve_y.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    for bad in [0.0, -0.1, 1.5, f64::NAN] {
        assert!(matches!(rma_cancel(&s, bad), Err(Error::InvalidConfig(_))));
    }
}

#[test]
fn antenna_row_of_zero_antenna_is_zero() {
    let mut hat = stack(&small(), &[path(900.0, 1e-7, 0.3)], &OffsetState::default()).hat_y;
    hat.index_axis_mut(Axis(1), 2).fill(Complex64::new(0.0, 0.0));
    let mti = mti_cancel(&CompensatedStack { hat_y: hat }, 2).unwrap();
    assert!(stack_antenna_row(&mti, 2).iter().all(|z| z.norm() == 0.0));
    assert_ne!(select_antenna(&mti.breve_y), 2);
}

#[test]
fn single_path_antenna_row_is_rank_one() {
    let cfg = small();
    let s = stack(&cfg, &[path(2100.0, 1.4e-7, 0.3)], &OffsetState { cfo: 1200.0, to: 4e-8 });
    let gamma = stack_antenna_row(&mti_cancel(&s, 2).unwrap(), 1);
    let m = DMatrix::from_fn(gamma.nrows(), gamma.ncols(), |i, j| gamma[[i, j]]);
    let sv = m.singular_values();
    assert!(sv[1] < 1e-10 * sv[0], "{sv}");
}

/// Term-by-term cancelled channel on one antenna.
fn direct_gamma(cfg: &OfdmConfig, paths: &[PathParam], off: &OffsetState, g_d: usize, m: usize) -> Array2<Complex64> {
    let w = default_precoder(cfg.m_u);
    let n = cfg.n_sub as f64;
    let ns = cfg.n_s() as f64;
    Array2::from_shape_fn((cfg.g_symbols - g_d, cfg.n_sub), |(r, u)| {
        paths
            .iter()
            .map(|p| {
                let xi = (p.doppler + off.cfo) / cfg.delta_f;
                let tau = p.delay + off.to;
                let tx: Complex64 = (0..cfg.m_u)
                    .map(|i| Complex64::from_polar(1.0, -PI * i as f64 * p.aod.sin()) * w[i])
                    .sum();
                let alpha = p.gain
                    * Complex64::from_polar(1.0, -2.0 * PI * cfg.f_c * off.to)
                    * tx
                    * Complex64::from_polar(1.0, -PI * m as f64 * p.doa.sin());
                let t = |g: usize| Complex64::from_polar(1.0, -2.0 * PI * xi * (cfg.n_cp as f64 + g as f64 * ns) / n);
                let g = r + g_d;
                alpha * (t(g) - t(g - g_d)) * Complex64::from_polar(1.0, -2.0 * PI * u as f64 * cfg.delta_f * tau)
            })
            .sum()
    })
}

#[test]
fn antenna_row_matches_term_by_term_model() {
    let cfg = small();
    let paths = [path(2100.0, 1.4e-7, 0.3), path(0.0, 0.6e-7, 1.1), path(-800.0, 2.2e-7, 2.0)];
    let off = OffsetState { cfo: 1500.0, to: 3e-8 };
    let s = stack(&cfg, &paths, &off);
    for (g_d, m) in [(1, 0), (4, 3)] {
        let got = stack_antenna_row(&mti_cancel(&s, g_d).unwrap(), m);
        let want = direct_gamma(&cfg, &paths, &off, g_d, m);
        let scale = want.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).norm() < 1e-12 * scale);
        }
    }
}

#[test]
fn mti_doubles_white_noise_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut hat_y = Array3::zeros((101, 8, 128));
    add_noise(&mut hat_y, 1.0, &mut rng);
    let out = mti_cancel(&CompensatedStack { hat_y }, 3).unwrap();
    let var = power(&out.breve_y) / out.breve_y.len() as f64;
    assert!((var / 2.0 - 1.0).abs() < 0.02, "{var}");
}

#[test]
fn antenna_selection_prefers_lowest_index_on_ties() {
    let mut y = Array3::from_elem((2, 3, 4), Complex64::new(1.0, 0.0));
    assert_eq!(select_antenna(&y), 0);
    y[[1, 2, 0]] = Complex64::new(2.0, 0.0);
    assert_eq!(select_antenna(&y), 2);
    assert_eq!(antenna_powers(&y), vec![8.0, 8.0, 11.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mti_is_linear(seed in any::<u64>(), g_d in 1usize..8, scale in -3.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array3::zeros((9, 2, 5));
        let mut b = Array3::zeros((9, 2, 5));
        add_noise(&mut a, 1.0, &mut rng);
        add_noise(&mut b, 1.0, &mut rng);
        let sum = CompensatedStack { hat_y: &a + &b.mapv(|z| z * scale) };
        let ma = mti_cancel(&CompensatedStack { hat_y: a }, g_d).unwrap().breve_y;
        let mb = mti_cancel(&CompensatedStack { hat_y: b }, g_d).unwrap().breve_y;
        let ms = mti_cancel(&sum, g_d).unwrap().breve_y;
        for ((x, y), s) in ma.iter().zip(mb.iter()).zip(ms.iter()) {
            prop_assert!((x + y * scale - s).norm() < 1e-12);
        }
    }

    #[test]
    fn mti_residue_grows_with_cfo(v in 0.05..0.4f64) {
        // Residue of a static path grows with CFO below the first blind speed.
        let cfg = small();
        let p = [path(0.0, 1e-7, 0.5)];
        let low = power(&mti_cancel(&stack(&cfg, &p, &OffsetState { cfo: 2.0 * v * cfg.f_c / SPEED_OF_LIGHT, to: 0.0 }), 1).unwrap().breve_y);
        let high = power(&mti_cancel(&stack(&cfg, &p, &OffsetState { cfo: 4.0 * v * cfg.f_c / SPEED_OF_LIGHT, to: 0.0 }), 1).unwrap().breve_y);
        prop_assert!(high > low);
    }
}
