//! Eco-driving optimization lab.
//!
//! A plug-in hybrid is modelled in the distance domain (`vehicle`), driven
//! along routes with fixed-cycle signals, jams and a lead vehicle (`world`).
//! Full-route dynamic programming (`dp`) produces value functions that train
//! neural terminal-cost models (`nn`), which in turn close a receding-horizon
//! controller (`mpc`). `bench` wires the pipeline together and reports.

pub mod bench;
pub mod dp;
pub mod error;
pub mod mpc;
pub mod nn;
pub mod vehicle;
pub mod world;

mod util;

pub use error::{Error, Result};
