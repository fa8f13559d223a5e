pub mod equilibrium;
pub mod experiment;
pub mod error;
pub mod functional;
pub mod kmc;
pub mod lattice;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod spectral;
pub mod stable;
pub mod stats;

pub use equilibrium::{fugacity_of_density, sample_configuration, EquilibriumProfile};
pub use error::{Result, ZrpError};
pub use kmc::{advance_until, step, total_rate, Configuration, DisplacementSampler, Event, Observer};
pub use model::{kernel_mass, kernel_mass_infinite, kernel_weight, validate_rate_family, ModelSpec, RateFamily, TorusGeometry};
pub use spectral::{lclt_discrepancy, normalizer, scaling_h, transition_probability, Regime, ScalingLaws, WalkSymbol};
pub use stable::{fbm_covariance, relaxation_constant, sample_fbm, stable_density_at_origin, theorem_coefficient, LimitLaw, Scale, StableDensity};
pub use stats::{
    autocovariance, chi_square, hurst_and_law_check, integrated_autocovariance, ks_test, variance_scaling,
    Autocovariance, Centering, LawReport, ReplicaEnsemble, ScalingFit, Verdict,
};
