//! Simulation library for a hexacopter whose two rotor triples sit on
//! independently tilting frames.
//!
//! Tilting both frames the same way translates the vehicle; tilting them
//! against each other rotates it.

pub mod airframe;
pub mod batch;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod geometry;
pub mod log;
pub mod plot;
pub mod sim;
