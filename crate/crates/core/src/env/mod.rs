//! Task environments: grid games, vehicle driving and maze generation.

pub mod grid;
pub mod maze;
pub mod vehicle;
