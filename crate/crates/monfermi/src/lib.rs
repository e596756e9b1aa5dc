pub mod error;
pub mod lattice;
pub mod noise;
pub mod state;
pub mod stats;
