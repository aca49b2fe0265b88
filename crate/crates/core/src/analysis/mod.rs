//! Performance bounds and clutter-suppression metrics.

pub mod crlb;
pub mod mvn;
pub mod suppression;
pub mod sync_bound;

pub use crlb::{crlb, crlb_paths, CrlbOptions, CrlbPath, CrlbResult, GainModel};
pub use suppression::{suppression_ratio, suppression_ratio_from_stacks, Canceller, PathDecomposition, SuppressionCurve};
pub use sync_bound::{lag_mse_bound, sync_mse_bound, SyncBoundSetup, SyncMseBound};
