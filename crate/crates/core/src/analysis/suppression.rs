//! Clutter-to-signal power ratios before and after cancellation.
//!
//! Every path of the compensated stack is a fixed rank-one pattern
//! `(b_l a_R) ⊗ delay_row_l` times a per-symbol coefficient, and both
//! cancellers are linear in the symbol axis. The per-symbol power of any
//! group of paths then follows from the coefficient sequences and the
//! pattern Gram matrix without materializing a stack.

use nalgebra::DMatrix;
use ndarray::{Array2, Axis};

use crate::preprocess::{mti_cancel, rma_cancel, CompensatedStack, MtiStack};
use crate::scenario::Scene;
use crate::waveform::{path_responses, OfdmConfig, PathResponse};
use crate::{Complex64, Error, Result};

/// Ratio reported when clutter is absent or fully cancelled, dB.
pub const SATURATED_DB: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Canceller {
    Mti { g_d: usize },
    Rma { forgetting: f64 },
}

impl Canceller {
    pub fn apply(&self, stack: &CompensatedStack) -> Result<MtiStack> {
        match *self {
            Canceller::Mti { g_d } => mti_cancel(stack, g_d),
            Canceller::Rma { forgetting } => rma_cancel(stack, forgetting),
        }
    }

    fn validate(&self, g: usize) -> Result<usize> {
        match *self {
            Canceller::Mti { g_d } if g_d == 0 || g_d >= g => {
                Err(Error::InvalidConfig(format!("MTI delay {g_d} must lie in 1..{g}")))
            }
            Canceller::Mti { g_d } => Ok(g_d),
            Canceller::Rma { forgetting } if !(forgetting > 0.0 && forgetting <= 1.0) => {
                Err(Error::InvalidConfig(format!("forgetting factor {forgetting} not in (0, 1]")))
            }
            Canceller::Rma { .. } => Ok(0),
        }
    }

    /// Output sequence over absolute symbols `first..G`.
    fn sequence(&self, c: &[Complex64]) -> Vec<Complex64> {
        match *self {
            Canceller::Mti { g_d } => (g_d..c.len()).map(|g| c[g] - c[g - g_d]).collect(),
            Canceller::Rma { forgetting } => {
                let mut avg = Complex64::new(0.0, 0.0);
                c.iter()
                    .map(|&x| {
                        avg = avg * (1.0 - forgetting) + x * forgetting;
                        x - avg
                    })
                    .collect()
            }
        }
    }
}

/// Paths split into clutter and desired components.
#[derive(Debug, Clone)]
pub struct PathDecomposition {
    pub responses: Vec<PathResponse>,
    pub is_clutter: Vec<bool>,
    gram: DMatrix<Complex64>,
}

impl PathDecomposition {
    pub fn new(responses: Vec<PathResponse>, is_clutter: Vec<bool>) -> Result<Self> {
        if responses.len() != is_clutter.len() {
            return Err(Error::InvalidConfig("one clutter flag per path is required".into()));
        }
        let l = responses.len();
        let dot = |a: &ndarray::Array1<Complex64>, b: &ndarray::Array1<Complex64>| -> Complex64 {
            a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
        };
        let gram = DMatrix::from_fn(l, l, |i, j| {
            dot(&responses[i].spatial, &responses[j].spatial) * dot(&responses[i].delay_row, &responses[j].delay_row)
        });
        Ok(Self { responses, is_clutter, gram })
    }

    /// Static paths are clutter, moving paths are desired.
    pub fn from_scene(cfg: &OfdmConfig, scene: &Scene, precoder: &ndarray::Array1<Complex64>) -> Result<Self> {
        let responses = path_responses(cfg, &scene.paths, &scene.offsets, precoder)?;
        Self::new(responses, scene.paths.iter().map(|p| p.is_static).collect())
    }

    /// Time coefficients, shape `(L, G)`.
    pub fn coefficients(&self, cfg: &OfdmConfig) -> Array2<Complex64> {
        Array2::from_shape_fn((self.responses.len(), cfg.g_symbols), |(l, g)| self.responses[l].symbol_coefficient(cfg, g))
    }

    /// `‖Σ_{l ∈ group} c_l P_l‖²_F` for one symbol's coefficients.
    fn group_power(&self, c: &[Complex64], clutter: bool) -> f64 {
        let idx: Vec<usize> = (0..c.len()).filter(|&l| self.is_clutter[l] == clutter).collect();
        let mut p = Complex64::new(0.0, 0.0);
        for &i in &idx {
            for &j in &idx {
                p += c[i].conj() * c[j] * self.gram[(i, j)];
            }
        }
        p.re.max(0.0)
    }
}

/// `ρ_b/ρ_a` per absolute symbol index, in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct SuppressionCurve {
    pub symbols: Vec<usize>,
    pub ratio_db: Vec<f64>,
}

/// `10·log10((C_b/D_b)/(C_a/D_a))`, saturating at `±SATURATED_DB`.
fn ratio_db(clutter_before: f64, desired_before: f64, clutter_after: f64, desired_after: f64) -> f64 {
    // Nothing to suppress, or nothing left: saturate before the 0/0 guard.
    if clutter_before == 0.0 || clutter_after == 0.0 {
        return SATURATED_DB;
    }
    let num = clutter_before * desired_after;
    let den = desired_before * clutter_after;
    if num == 0.0 && den == 0.0 {
        return 0.0;
    }
    (10.0 * (num / den).log10()).clamp(-SATURATED_DB, SATURATED_DB)
}

/// Suppression ratio from the ground-truth decomposition.
pub fn suppression_ratio(decomp: &PathDecomposition, cfg: &OfdmConfig, canceller: Canceller) -> Result<SuppressionCurve> {
    let g = cfg.g_symbols;
    let first = canceller.validate(g)?;
    let coeffs = decomp.coefficients(cfg);
    let after: Vec<Vec<Complex64>> = coeffs.outer_iter().map(|row| canceller.sequence(&row.to_vec())).collect();
    let l = decomp.responses.len();
    let mut symbols = Vec::with_capacity(g - first);
    let mut ratio = Vec::with_capacity(g - first);
    for abs in first..g {
        let cb: Vec<Complex64> = (0..l).map(|i| coeffs[[i, abs]]).collect();
        let ca: Vec<Complex64> = (0..l).map(|i| after[i][abs - first]).collect();
        symbols.push(abs);
        ratio.push(ratio_db(
            decomp.group_power(&cb, true),
            decomp.group_power(&cb, false),
            decomp.group_power(&ca, true),
            decomp.group_power(&ca, false),
        ));
    }
    Ok(SuppressionCurve { symbols, ratio_db: ratio })
}

fn symbol_powers(stack: &ndarray::Array3<Complex64>) -> Vec<f64> {
    stack.axis_iter(Axis(0)).map(|s| s.iter().map(|z| z.norm_sqr()).sum()).collect()
}

/// Suppression ratio measured on separately synthesized clutter and desired
/// stacks passed through the same canceller.
pub fn suppression_ratio_from_stacks(
    clutter_before: &CompensatedStack,
    desired_before: &CompensatedStack,
    clutter_after: &MtiStack,
    desired_after: &MtiStack,
) -> Result<SuppressionCurve> {
    let (cb, db) = (symbol_powers(&clutter_before.hat_y), symbol_powers(&desired_before.hat_y));
    let (ca, da) = (symbol_powers(&clutter_after.breve_y), symbol_powers(&desired_after.breve_y));
    let first = clutter_after.first_symbol;
    if desired_after.first_symbol != first || ca.len() != da.len() || cb.len() != db.len() || first + ca.len() != cb.len() {
        return Err(Error::InvalidConfig("stacks do not cover the same symbols".into()));
    }
    let symbols: Vec<usize> = (first..cb.len()).collect();
    let ratio_db = symbols.iter().map(|&g| ratio_db(cb[g], db[g], ca[g - first], da[g - first])).collect();
    Ok(SuppressionCurve { symbols, ratio_db })
}
