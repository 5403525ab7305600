pub mod cli;
pub mod dataset;
pub mod design;
pub mod error;
pub mod estimate;
pub mod grid;
pub mod model;
pub mod normal;
pub mod rng;
pub mod service;
pub mod session;
pub mod sim;
