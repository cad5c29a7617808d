//! Simulation and autonomy stack for a small aerial robot exploring
//! underground tunnels and reporting the objects it finds.

pub mod geometry;
pub mod rle;
pub mod world;
pub mod mapping;
pub mod ply;
pub mod sensing;
pub mod vehicle;
pub mod control;
pub mod planner;
pub mod artifacts;
pub mod mission;
