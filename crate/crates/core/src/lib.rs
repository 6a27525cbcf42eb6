pub mod bay;
pub mod error;
pub mod instance;
pub mod bounds;
pub mod exact;
pub mod solver;
pub mod heuristics;
pub mod io;
pub mod experiments;
