//! Exact population values, simulation, identity checks and Monte Carlo
//! calibration.

mod identities;
mod mc;
mod population;
mod random;
mod simulate;
mod spec;
mod truth;

pub use identities::{
    brute_force_weights, verify_identities, CheckStatus, IdentityCheck, IdentityReport, IDENTITY_TOL,
};
pub use mc::{mc_study, mix_seed, Calibration, CalibrationReport, McOptions};
pub use population::{
    cell_prob, component_expectation, expansion_expectation, population_expectation,
    population_moment, population_moment_vector, treatments,
};
pub use random::{random_identity_spec, random_sweep_spec};
pub use simulate::{simulate, simulate_with_workers, with_workers};
pub use spec::{Component, DgpSpec, SpecError, StratumSpec};
pub use truth::{beta3_decomposition, local_averages, population_tsls, truth, type_mean, PopulationTruth};
