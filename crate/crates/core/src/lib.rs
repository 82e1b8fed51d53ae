//! Optimal power flow instance generation, solving and scoring.

pub mod dataset;
pub mod duality;
pub mod error;
pub mod formulation;
pub mod matpower;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod sampler;
pub mod schema;

pub use duality::{dual_feasibility_residuals, dual_objective, kkt_residuals_ac, weak_duality_certificate, Certificate};
pub use error::{Error, Result};
pub use formulation::{evaluate_residuals, solve, Point, ResidualReport, SolveSettings, Solved};
pub use matpower::{make_basic, parse_matpower, BasicOptions, RawCase};
pub use network::{branch_admittance, Admittance, Network};
pub use sampler::{InstanceInput, SamplerConfig};
pub use schema::Formulation;
