//! Latency modelling of terrestrial and LEO-satellite transport between
//! overlay relays.
//!
//! The crate is organised bottom-up:
//!
//! * [`geo`] spherical geodesy, TLE parsing and circular-orbit propagation;
//! * [`speeds`] empirical traffic-speed distributions built from RTT baselines;
//! * [`graph`] per-snapshot routing graphs and k-shortest-path latency;
//! * [`sim`] time-stepped pair/circuit latency series and reduction tables;
//! * [`calibrate`] percentile error models and resampled calibration;
//! * [`dualhome`] the dual-homing probe scheduler, deployment scenarios,
//!   adversary visibility and tail-latency correlation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geo;
pub mod csvio;
pub mod speeds;
pub mod graph;
pub mod sim;
pub mod calibrate;
pub mod dualhome;
