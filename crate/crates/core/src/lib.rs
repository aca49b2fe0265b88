//! Uplink passive sensing for asynchronous vehicular networks.
//!
//! A roadside radio unit (RRU) with a uniform linear array listens to the
//! uplink OFDM frames of a user terminal (UT) and senses the vehicles that
//! reflect them. The crate covers the whole chain:
//!
//! * [`scenario`]: random or fixed geometry, per-path parameters, oscillator offsets
//! * [`waveform`]: OFDM numerology, steering vectors, received frame synthesis
//! * [`preprocess`]: data compensation, MTI and RMA clutter cancellation
//! * [`spectrum`]: real-part delay-Doppler spectrum, peak search, bin mapping
//! * [`doa`]: MUSIC and the spatial-filter association of angles to peaks
//! * [`sync`]: fingerprint capture and the CMCC / S-CMCC offset estimators
//! * [`analysis`]: Cramér–Rao bounds, the synchronization MSE bound and
//!   clutter suppression ratios
//!
//! ```
//! use upsense_core::waveform::OfdmConfig;
//!
//! let cfg = OfdmConfig::default();
//! assert!((cfg.t_sym() - 11.25e-6).abs() < 1e-15);
//! ```

pub mod analysis;
pub mod doa;
mod error;
mod fft;
pub mod preprocess;
pub mod scenario;
pub mod spectrum;
pub mod sync;
pub mod waveform;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Propagation speed used throughout, m/s (the nominal 3·10⁸).
pub const SPEED_OF_LIGHT: f64 = 3.0e8;
