//! Haptic glance: reinforcement-learned tactile exploration for sparse 3D object recognition.

pub mod classifier;
pub mod cli;
pub mod config;
pub mod locnet;
pub mod model;
pub mod nn;
pub mod pcrn;
pub mod sim;
pub mod trainer;
