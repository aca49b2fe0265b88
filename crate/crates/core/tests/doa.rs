use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::{Array2, Array3, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use upsense_core::doa::*;
use upsense_core::preprocess::MtiStack;
use upsense_core::spectrum::{Peak, PeakSet, SpectrumAxes, Window};
use upsense_core::waveform::steering_vector;
use upsense_core::{Complex64, Error};

const HALF: f64 = 0.5;

/// One arrival: amplitude, angle, Doppler and delay frequencies in cycles
/// per sample.
#[derive(Clone, Copy)]
struct Arrival {
    amp: Complex64,
    phi: f64,
    nu: f64,
    mu: f64,
}

fn arrival(amp: f64, phase: f64, phi_deg: f64, nu: f64, mu: f64) -> Arrival {
    Arrival { amp: Complex64::from_polar(amp, phase), phi: phi_deg.to_radians(), nu, mu }
}

fn stack(rows: usize, m_r: usize, n_sub: usize, arrivals: &[Arrival]) -> MtiStack {
    let two_pi = 2.0 * PI;
    let steer: Vec<_> = arrivals.iter().map(|a| steering_vector(m_r, a.phi, HALF)).collect();
    let breve_y = Array3::from_shape_fn((rows, m_r, n_sub), |(g, m, n)| {
        arrivals
            .iter()
            .zip(&steer)
            .map(|(a, s)| a.amp * s[m] * Complex64::from_polar(1.0, -two_pi * (a.nu * g as f64 + a.mu * n as f64)))
            .sum()
    });
    MtiStack { breve_y, lag: 1, first_symbol: 1 }
}

fn add_noise(mti: &mut MtiStack, var: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = (var / 2.0).sqrt();
    mti.breve_y.iter_mut().for_each(|z| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *z += Complex64::new(re * sd, im * sd);
    });
}

fn axes(mti: &MtiStack, window: Window) -> SpectrumAxes {
    SpectrumAxes { g_eff: mti.rows(), n_sub: mti.n_sub(), k_doppler: 1, k_range: 1, window }
}

fn peak_set(mti: &MtiStack, window: Window, cells: &[(usize, usize)]) -> PeakSet {
    PeakSet { peaks: cells.iter().map(|&(k, n)| Peak { k, n, magnitude: 1.0 }).collect(), axes: axes(mti, window) }
}

fn doas(angles_deg: &[f64]) -> DoaEstimate {
    DoaEstimate { angles: angles_deg.iter().map(|a| a.to_radians()).collect(), grid: vec![], pseudo_spectrum: vec![] }
}

/// Direct evaluation of the association score: filter every antenna by
/// hand, window the real part, and sum the 2-D DTFT at the peak cell.
fn direct_score(mti: &MtiStack, phi: f64, ax: &SpectrumAxes, k: f64, n: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let (rows, m_r, n_sub) = mti.breve_y.dim();
    let a = steering_vector(m_r, phi, HALF);
    let wg = ax.window.coefficients(rows);
    let wn = ax.window.coefficients(n_sub);
    let mut acc = Complex64::new(0.0, 0.0);
    for g in 0..rows {
        for u in 0..n_sub {
            let mut x = Complex64::new(0.0, 0.0);
            for m in 0..m_r {
                x += a[m].conj() * mti.breve_y[[g, m, u]];
            }
            let phase = -two_pi * (g as f64 * k / ax.rows() as f64 + u as f64 * n / ax.cols() as f64);
            acc += Complex64::from_polar(wg[g] * wn[u] * x.re, phase);
        }
    }
    acc.norm()
}

#[test]
fn broadside_edge_path_is_found_within_one_grid_step() {
    let mti = stack(8, 16, 8, &[arrival(1.0, 0.4, 90.0, 0.25, 0.125)]);
    let grid = AngleGrid::default();
    let est = estimate_doa(&mti, 1, &grid, HALF).unwrap();
    assert_eq!(est.angles.len(), 1);
    assert!((est.angles[0] - FRAC_PI_2).abs() <= grid.step, "{}", est.angles[0]);
    assert_eq!(est.grid.len(), est.pseudo_spectrum.len());
}

#[test]
fn two_paths_thirty_degrees_apart_at_twenty_db() {
    let mut mti = stack(32, 64, 32, &[arrival(1.0, 0.0, 40.0, 0.1, 0.3), arrival(1.0, 1.0, 70.0, 0.37, 0.05)]);
    add_noise(&mut mti, 0.01, 7);
    let est = estimate_doa(&mti, 2, &AngleGrid::default(), HALF).unwrap();
    let mut got: Vec<f64> = est.angles.iter().map(|a| a.to_degrees()).collect();
    got.sort_by(f64::total_cmp);
    assert!((got[0] - 40.0).abs() < 1.0 && (got[1] - 70.0).abs() < 1.0, "{got:?}");
}

#[test]
fn source_count_must_be_below_the_array_size() {
    let mti = stack(4, 8, 4, &[arrival(1.0, 0.0, 30.0, 0.25, 0.25)]);
    for n in [0, 8, 9] {
        assert!(matches!(estimate_doa(&mti, n, &AngleGrid::default(), HALF), Err(Error::TooManySources { .. })));
    }
}

#[test]
fn rank_one_covariance_cannot_host_two_sources() {
    let mti = stack(8, 8, 8, &[arrival(1.0, 0.0, 30.0, 0.25, 0.25)]);
    assert!(matches!(
        estimate_doa(&mti, 2, &AngleGrid::default(), HALF),
        Err(Error::RankDeficient { rank: 1, needed: 2 })
    ));
}

#[test]
fn one_path_one_angle() {
    let mti = stack(16, 8, 16, &[arrival(1.0, 0.3, 25.0, 3.0 / 16.0, 5.0 / 16.0)]);
    let peaks = peak_set(&mti, Window::Rectangular, &[(3, 5)]);
    let r = associate_full(&mti, &doas(&[25.0]), &peaks, HALF).unwrap();
    assert_eq!(r.pairs, vec![Association { peak: 0, doa: 0, score: r.scores[0][0] }]);
}

#[test]
fn identical_range_velocity_is_separated_by_angle() {
    // Both paths sit on the same on-grid cell; each filter should isolate
    // its own path and leak little of the other.
    let (rows, m_r, n_sub) = (16, 32, 16);
    let strong = arrival(1.0, 0.2, 20.0, 4.0 / 16.0, 6.0 / 16.0);
    let weak = arrival(0.7, -1.3, 60.0, 4.0 / 16.0, 6.0 / 16.0);
    let mti = stack(rows, m_r, n_sub, &[strong, weak]);
    let peaks = peak_set(&mti, Window::Rectangular, &[(4, 6)]);
    let est = doas(&[20.0, 60.0]);
    let r = associate_full(&mti, &est, &peaks, HALF).unwrap();
    let ax = peaks.axes;
    for (i, a) in [strong, weak].iter().enumerate() {
        let oracle = direct_score(&mti, est.angles[i], &ax, 4.0, 6.0);
        assert!((r.scores[0][i] - oracle).abs() < 1e-9 * oracle);
        let isolated = m_r as f64 * a.amp.norm() * (rows * n_sub) as f64 / 2.0;
        assert!((r.scores[0][i] / isolated - 1.0).abs() < 0.05, "angle {i}: {} vs {isolated}", r.scores[0][i]);
    }
    assert_eq!(r.pairs[0].doa, 0);
}

#[test]
fn full_scores_match_direct_evaluation() {
    let mti = stack(12, 8, 10, &[arrival(1.0, 0.2, 15.0, 0.21, 0.33), arrival(0.8, 2.0, 55.0, 0.07, 0.12)]);
    for window in [Window::Rectangular, Window::Hamming] {
        let peaks = peak_set(&mti, window, &[(2, 3), (1, 1), (5, 4)]);
        let est = doas(&[15.0, 55.0, 80.0]);
        let r = associate_full(&mti, &est, &peaks, HALF).unwrap();
        for (l, p) in peaks.peaks.iter().enumerate() {
            for (i, &phi) in est.angles.iter().enumerate() {
                let oracle = direct_score(&mti, phi, &peaks.axes, p.k as f64, p.n as f64);
                assert!((r.scores[l][i] - oracle).abs() <= 1e-9 * oracle.max(1.0), "{window} l={l} i={i}");
            }
            let best = (0..est.angles.len()).max_by(|&a, &b| r.scores[l][a].total_cmp(&r.scores[l][b])).unwrap();
            assert_eq!(r.pairs[l].doa, best);
        }
    }
}

fn two_separated() -> (MtiStack, PeakSet, DoaEstimate) {
    let mti = stack(32, 16, 32, &[arrival(1.0, 0.1, 20.0, 5.0 / 32.0, 4.0 / 32.0), arrival(0.9, 1.7, 60.0, 12.0 / 32.0, 13.0 / 32.0)]);
    let peaks = peak_set(&mti, Window::Rectangular, &[(5, 4), (12, 13)]);
    (mti, peaks, doas(&[60.0, 20.0]))
}

#[test]
fn line_variants_agree_with_full_on_separated_paths() {
    let (mti, peaks, est) = two_separated();
    let full = associate_full(&mti, &est, &peaks, HALF).unwrap();
    let choice = |r: &AssociationResult| r.pairs.iter().map(|p| p.doa).collect::<Vec<_>>();
    assert_eq!(choice(&full), vec![1, 0]);

    let g = strongest_symbol(&mti);
    let delay = associate_delay_domain(mti.breve_y.index_axis(Axis(0), g), &est, &peaks, HALF).unwrap();
    assert_eq!(choice(&delay), choice(&full));

    let n = strongest_subcarrier(&mti);
    let column = subcarrier_stack(&mti, n);
    assert_eq!(column.dim(), (mti.m_r(), mti.rows()));
    let doppler = associate_doppler_domain(column.view(), &est, &peaks, HALF).unwrap();
    assert_eq!(choice(&doppler), choice(&full));
}

#[test]
fn delay_domain_scores_match_direct_line_sums() {
    let (mti, peaks, est) = two_separated();
    let g = 3;
    let frame = mti.breve_y.index_axis(Axis(0), g);
    let r = associate_delay_domain(frame, &est, &peaks, HALF).unwrap();
    for (l, p) in peaks.peaks.iter().enumerate() {
        for (i, &phi) in est.angles.iter().enumerate() {
            let a = steering_vector(mti.m_r(), phi, HALF);
            let oracle: Complex64 = (0..mti.n_sub())
                .map(|u| {
                    let x: Complex64 = (0..mti.m_r()).map(|m| a[m].conj() * frame[[m, u]]).sum();
                    Complex64::from_polar(x.re, -2.0 * PI * u as f64 * p.n as f64 / mti.n_sub() as f64)
                })
                .sum();
            assert!((r.scores[l][i] - oracle.norm()).abs() < 1e-9 * oracle.norm().max(1.0));
        }
    }
}

#[test]
fn association_ignores_global_complex_scale() {
    let (mti, peaks, est) = two_separated();
    let c = Complex64::new(2.0, -3.0);
    let scaled = MtiStack { breve_y: mti.breve_y.mapv(|z| z * c), ..mti.clone() };
    let a = associate_full(&mti, &est, &peaks, HALF).unwrap();
    let b = associate_full(&scaled, &est, &peaks, HALF).unwrap();
    for (x, y) in a.pairs.iter().zip(&b.pairs) {
        assert_eq!((x.peak, x.doa), (y.peak, y.doa));
    }
}

#[test]
fn association_needs_angles_and_peaks() {
    let (mti, peaks, _) = two_separated();
    assert!(associate_full(&mti, &doas(&[]), &peaks, HALF).is_err());
    let empty = PeakSet { peaks: vec![], axes: peaks.axes };
    assert!(associate_full(&mti, &doas(&[10.0]), &empty, HALF).is_err());
    let wrong = PeakSet { axes: SpectrumAxes { g_eff: 7, ..peaks.axes }, ..peaks };
    assert!(associate_full(&mti, &doas(&[10.0]), &wrong, HALF).is_err());
}

#[test]
fn pseudo_spectrum_csv_has_one_row_per_grid_angle() {
    let mti = stack(8, 8, 8, &[arrival(1.0, 0.0, 30.0, 0.25, 0.25)]);
    let grid = AngleGrid { lo: 0.0, hi: 0.5, step: 0.01 };
    let est = estimate_doa(&mti, 1, &grid, HALF).unwrap();
    let mut buf = Vec::new();
    est.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "angle_rad,pseudo_spectrum");
    assert_eq!(lines.len(), est.grid.len() + 1);
    assert_eq!(est.grid.len(), 51);
}

#[test]
fn spatial_covariance_is_hermitian_with_power_on_the_diagonal() {
    let mti = stack(6, 5, 7, &[arrival(1.5, 0.0, 30.0, 0.2, 0.1)]);
    let r = spatial_covariance(&mti);
    for i in 0..5 {
        assert!((r[(i, i)].re - 2.25).abs() < 1e-12);
        for j in 0..5 {
            assert!((r[(i, j)] - r[(j, i)].conj()).norm() < 1e-12);
        }
    }
}

#[test]
fn filtered_stack_concentrates_the_matched_arrival() {
    let mti = stack(4, 16, 4, &[arrival(1.0, 0.0, 35.0, 0.1, 0.2)]);
    let f = filter_stack(&mti, &spatial_filter(16, 35f64.to_radians(), HALF));
    let expect: Array2<Complex64> = mti.breve_y.index_axis(Axis(1), 0).mapv(|z| z * 16.0);
    for (a, b) in f.iter().zip(expect.iter()) {
        assert!((a - b).norm() < 1e-10);
    }
}

proptest! {
    #[test]
    fn beampattern_peaks_at_the_match_and_drops_past_the_first_null(
        phi0 in 0.0..FRAC_PI_2,
        phi in 0.0..PI,
        m_r in 4usize..96,
    ) {
        let w = spatial_filter(m_r, phi0, HALF);
        let matched = w.dot(&steering_vector(m_r, phi0, HALF)).norm();
        prop_assert!((matched - m_r as f64).abs() < 1e-9 * m_r as f64);
        let gain = w.dot(&steering_vector(m_r, phi, HALF)).norm();
        prop_assert!(gain <= m_r as f64 * (1.0 + 1e-12));
        // First null at |Δ sin| = 1/(M_R·d/λ).
        if (phi.sin() - phi0.sin()).abs() > 1.0 / (m_r as f64 * HALF) {
            prop_assert!(gain < m_r as f64 / 2.0, "gain {}", gain);
        }
    }
}
