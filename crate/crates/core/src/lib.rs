//! Sensing-assisted beamforming for a three-panel reflecting-surface deployment.
//!
//! Two semi-passive panels localize the users from their uplink snapshots; the
//! sensed positions then drive discrete phase-shift design for a passive panel
//! (ISAC period) and for all three panels (PC period).

pub mod beamforming;
pub mod doa;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod localization;
pub mod plot;
pub mod scenario;
pub mod signal;
pub mod sweep;
pub mod trial;

pub use beamforming::{
    ce_optimize_isac, ce_optimize_pc, cross_entropy, estimate_phase_offsets, mrc_combiner, record_powers_pc,
    sensed_channel, zf_combiner, CeOutcome, CeParams, IsacDesign, PcDesign, PhaseOffsetGrid, SensedChannelMagnitude,
};
pub use doa::{esprit_axis, fbss_covariance, music_pair, AoaPairSet, MicroConfig};
pub use error::{IsacError, Result};
pub use geometry::{build_channels, ChannelSet, EffectiveAngles, PanelGeometry, PathLossModel, Position, Scene};
pub use linalg::{CMatrix, CVector, C64};
pub use localization::{rmse, sense_locations, triangulate, LocationEstimate, RmseReport};
pub use plot::{default_plot_specs, emit_plots, PlotSpec};
pub use scenario::{Placement, Scenario, ScenarioConfig, SweepAxis, SweepMode};
pub use signal::{PhaseShiftConfig, SnapshotBlock};
pub use sweep::{read_csv, sweep, write_csv, SweepPlan, SweepRow};
pub use trial::{run_sensing, run_trial, trial_seed, BlockSensing, PeriodRates, SenseRecord, TrialRates, TrialRecord};
