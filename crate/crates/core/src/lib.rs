//! Conditional empirical likelihood estimation for data drawn under
//! informative, unequal-probability sampling designs.
//!
//! The numerical core is generic over [`Scalar`]; the aliases below fix it
//! to `f64`, which is what the designs, populations and study harness use.

pub mod design;
pub mod el;
pub mod error;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod newton;
pub mod population;
pub mod scalar;
pub mod variance;
pub mod visibility;

pub use design::{
    estimate_joint_pi_mc, inclusion_frequencies, pps_first_order, FrameOrder, PpsTarget, SampleDraw, Sampler,
    SchemeKind, SchemeSpec,
};
pub use el::{
    ce_distribution, loglik_from_weights, maximize_ce, profile_loglik, solve_ipw_score, solve_kappa, ELSolution,
    PathChoice, SolverOptions, SolverPath,
};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use mc::{coverage, run_study, Estimator, MCReport, MCStudyConfig, StudyVariance};
pub use model::{EstimatingFunction, ModelKind, Observations};
pub use population::{census_parameter, load_population, synth_population, Population, Schema, SizeLaw, SynthSpec};
pub use scalar::Scalar;
pub use variance::{
    hajek_mean, hartley_rao_var, ht_mean, kappa_covariance, prediction_variance, proportion_closed_var,
    sandwich_vce, ygs_var, VarianceEstimate, VarianceMethod, VarianceTarget,
};
pub use visibility::{passthrough_visibility, smoothed_visibility, Visibilities};

pub type ELSolutionF64 = ELSolution<f64>;
pub type ObservationsF64 = Observations<f64>;
pub type MatrixF64 = Matrix<f64>;
pub type SolverOptionsF64 = SolverOptions<f64>;
pub type VarianceEstimateF64 = VarianceEstimate<f64>;
pub type VisibilitiesF64 = Visibilities<f64>;
pub type EstimatingFunctionF64 = dyn EstimatingFunction<f64>;
