//! Binomial self-compensation of motion error for phase-shifting profilometry.
//!
//! The pipeline is: render or load fringe images ([`fringe`], [`io`]),
//! extract wrapped phase ([`phase`]), fuse successive phase frames with the
//! binomial ⊕ pyramid ([`bsc`]), and check the result against closed-form
//! error predictions ([`oracle`]). [`stereo`] turns compensated phase into
//! depth with a second camera; [`scenario`] wires everything into
//! reproducible runs.

mod angle;
pub mod bsc;
pub mod error;
pub mod fringe;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod kinematics;
pub mod oracle;
mod par;
pub mod phase;
pub mod scenario;
pub mod stereo;

pub use bsc::{bsc_direct, bsc_pyramid, compensate_batch, oplus, StreamState};
pub use error::{Error, Result};
pub use fringe::{
    phase0_from_scene, render_frame, render_sequence, FringeConfig, ImageFrame, NoiseConfig,
    Offsets, Phase0, PhaseSteps, Scene, View,
};
pub use geometry::{
    check_frequency, max_fringe_frequency, virtual_segment_length, CameraModel, ProjectorModel,
    Rig, SystemGeometry,
};
pub use grid::Grid;
pub use kinematics::{binomial_weights, finite_difference, DepthTrajectory, MotionProfile};
pub use oracle::{
    fit_ripple, predict_bsc_dc, predict_bsc_harmonic, predict_error, wrap_to_pi, RippleDecomposition,
};
pub use phase::{datum_correct, modulation_map, wrapped_phase, PhaseFrame, PhaseOptions};
