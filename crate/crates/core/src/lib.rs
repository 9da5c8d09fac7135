//! Lower bounds on the read rate of repair in distributed storage, with the
//! machinery to check them empirically.

pub mod bounds;
pub mod codes;
pub mod engine;
pub mod error;
pub mod failure;
pub mod logprob;
pub mod params;
pub mod phase;
pub mod repairers;
pub mod rng;
pub mod storage;
pub mod verify;

pub use error::{Error, Result};
pub use logprob::LogProb;
pub use params::{BoundInputs, PhaseParams, RegeneratingParams, SystemParams};
