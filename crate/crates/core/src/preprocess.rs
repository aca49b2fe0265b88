//! Data compensation and clutter cancellation.

use ndarray::{Array2, Array3, Axis};

use crate::waveform::FrameStack;
use crate::{fft, Complex64, Error, Result};

/// Compensated equivalent channel `Ŷ_g`, shape `(G, M_R, N_sub)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatedStack {
    pub hat_y: Array3<Complex64>,
}

/// Clutter-cancelled stack, shape `(rows, M_R, N_sub)`.
///
/// Row `r` holds absolute symbol `r + first_symbol`. An MTI output has
/// `lag = first_symbol = G_d`; an RMA output has `lag = first_symbol = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MtiStack {
    pub breve_y: Array3<Complex64>,
    pub lag: usize,
    pub first_symbol: usize,
}

impl CompensatedStack {
    pub fn g(&self) -> usize {
        self.hat_y.len_of(Axis(0))
    }

    /// `self + scale · other`, used to add a scaled noise realization.
    pub fn plus_scaled(&self, other: &CompensatedStack, scale: f64) -> CompensatedStack {
        let mut hat_y = self.hat_y.clone();
        hat_y.zip_mut_with(&other.hat_y, |a, &b| *a += b * scale);
        CompensatedStack { hat_y }
    }
}

impl MtiStack {
    pub fn rows(&self) -> usize {
        self.breve_y.len_of(Axis(0))
    }

    pub fn m_r(&self) -> usize {
        self.breve_y.len_of(Axis(1))
    }

    pub fn n_sub(&self) -> usize {
        self.breve_y.len_of(Axis(2))
    }
}

/// `Ŷ_g = Y_g · F⁻¹ · D⁻¹(x_g)` with the unitary DFT.
pub fn compensate(frames: &FrameStack) -> Result<CompensatedStack> {
    const MIN_DATA: f64 = 1e-9;
    for ((g, u), x) in frames.data.indexed_iter() {
        if x.norm() < MIN_DATA {
            return Err(Error::VanishingData { symbol: g, subcarrier: u, magnitude: x.norm() });
        }
    }
    let n = frames.n_sub();
    let plan = fft::forward(n);
    let scale = 1.0 / (n as f64).sqrt();
    let mut hat_y = frames.symbols.clone();
    for (mut sym, x) in hat_y.outer_iter_mut().zip(frames.data.outer_iter()) {
        let inv: Vec<Complex64> = x.iter().map(|v| scale / v).collect();
        for mut row in sym.outer_iter_mut() {
            let buf = row.as_slice_mut().expect("standard layout");
            plan.process(buf);
            for (b, s) in buf.iter_mut().zip(&inv) {
                *b *= s;
            }
        }
    }
    Ok(CompensatedStack { hat_y })
}

/// Single-delay canceller `Y̆_g = Ŷ_g − Ŷ_{g−G_d}` over `g = G_d..G`.
pub fn mti_cancel(stack: &CompensatedStack, g_d: usize) -> Result<MtiStack> {
    let g = stack.g();
    if g_d == 0 || g_d >= g {
        return Err(Error::InvalidConfig(format!("MTI delay {g_d} must lie in 1..{g}")));
    }
    let y = &stack.hat_y;
    let breve_y = &y.slice(ndarray::s![g_d.., .., ..]) - &y.slice(ndarray::s![..g - g_d, .., ..]);
    Ok(MtiStack { breve_y, lag: g_d, first_symbol: g_d })
}

/// Recursive moving-average canceller: `avg ← (1−α)·avg + α·Ŷ_g`, output
/// `Ŷ_g − avg`, starting from a zero average.
pub fn rma_cancel(stack: &CompensatedStack, forgetting: f64) -> Result<MtiStack> {
    if !(forgetting > 0.0 && forgetting <= 1.0) {
        return Err(Error::InvalidConfig(format!("forgetting factor {forgetting} not in (0, 1]")));
    }
    let y = &stack.hat_y;
    let mut avg = Array2::<Complex64>::zeros((y.len_of(Axis(1)), y.len_of(Axis(2))));
    let mut breve_y = Array3::zeros(y.raw_dim());
    for (sym, mut out) in y.outer_iter().zip(breve_y.outer_iter_mut()) {
        avg.zip_mut_with(&sym, |a, &s| *a = *a * (1.0 - forgetting) + s * forgetting);
        out.assign(&(&sym - &avg));
    }
    Ok(MtiStack { breve_y, lag: 0, first_symbol: 0 })
}

/// Total power per antenna, `Σ_g ‖Y[g, m, :]‖²`.
pub fn antenna_powers(stack: &Array3<Complex64>) -> Vec<f64> {
    let mut p = vec![0.0; stack.len_of(Axis(1))];
    for sym in stack.outer_iter() {
        for (m, row) in sym.outer_iter().enumerate() {
            p[m] += row.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    p
}

/// Antenna with the largest total power; ties go to the lower index.
pub fn select_antenna(stack: &Array3<Complex64>) -> usize {
    argmax(&antenna_powers(stack))
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Γ_m: row `r` is antenna `m`'s row of symbol `r`, shape `(rows, N_sub)`.
pub fn antenna_rows(stack: &Array3<Complex64>, m: usize) -> Array2<Complex64> {
    stack.index_axis(Axis(1), m).to_owned()
}

/// Γ_m of a cancelled stack.
pub fn stack_antenna_row(mti: &MtiStack, m: usize) -> Array2<Complex64> {
    antenna_rows(&mti.breve_y, m)
}
