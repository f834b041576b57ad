//! Spatio-temporal scene graphs over annotated 3D scene captures, the
//! visual-spatial and temporal question families generated from them, answer
//! scoring, and a reference geometry/camera fusion kernel.

pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod graph;
pub mod metadata;
pub mod ply;
pub mod pipeline;
pub mod qa;
pub mod route;
pub mod synth;
