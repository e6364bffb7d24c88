//! Link-level simulator for visible-light joint communication and
//! positioning: ceiling LEDs send spatial-modulation PAM frames under zone
//! dimming, a two-photodiode receiver estimates the channel and dimming
//! levels from pilots, detects data and locates itself from RSS.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod error;
pub mod harness;
pub mod modem;
pub mod positioning;
pub mod receiver;
pub mod rng;
pub mod scene;

pub use error::{Diagnostic, Error, Result, Severity};
pub use scene::{load_scenario, validate_scenario, ScenarioConfig, Vec3};
