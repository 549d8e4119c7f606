//! Bootstrap bands, knot selection and instrument diagnostics.

mod balance;
mod bootstrap;
mod falsification;
mod gcv;
mod segment;

pub use balance::{gps_balance, BalanceReport, BalanceRow, GpsSpec, T_CRITICAL};
pub use bootstrap::{
    block_bootstrap, draw_clusters, gather_clusters, resample_clusters, BootstrapOptions, BootstrapResult, Replicate, WaldTest, MIN_BAND_REPLICATES,
};
pub use falsification::{falsification_bootstrap, falsification_run, FalsificationFit};
pub use gcv::{gcv_score, gcv_select, select_entry, GcvEntry, GcvReport};
pub use segment::{assign_segments, segment_f_stats, SegmentStat, SegmentStrength, Segmentation};
