//! Railway rescheduling as integer and quadratic binary optimisation.

pub mod analysis;
pub mod error;
pub mod factory;
pub mod hybrid;
pub mod ilp;
pub mod ising;
pub mod network;
pub mod qubo;
pub mod samplers;
pub mod textfmt;

pub use error::{Error, Result};
pub use network::{
    compute_time_windows, validate_instance, DisturbanceModel, Edge, Instance, Minutes,
    NetworkParams, Station, StopKey, TimeWindows, Train, TrainId,
};
