pub mod coarse;
pub mod config;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod refine;
pub mod rng;
pub mod scene;
pub mod segment;
pub mod synth;
