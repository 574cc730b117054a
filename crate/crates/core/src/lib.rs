//! Kinetic battery model with capacity bounds, driven by random
//! piecewise-constant loads.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN along with out-of-range values

pub mod accum;
pub mod analytic;
pub mod battery;
pub mod error;
pub mod export;
pub mod grid;
pub mod lambert;
pub mod load;
pub mod montecarlo;
pub mod mtp;
pub mod par;

pub use accum::ExtSum;
pub use battery::{linear_step, BatteryParams, Coefficients, Soc};
pub use error::{KibamError, Result};
pub use grid::{InitSpec, LinearDistribution, SocDistribution};
pub use load::{DiscreteLoad, LoadModel};
