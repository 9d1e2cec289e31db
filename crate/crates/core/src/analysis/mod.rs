//! Error decomposition of the sampler.
//!
//! - [`disc`]: the MMSE-area discretization energy and its pathwise
//!   counterpart along exact paths, plus the cross term with a perturbation.
//! - [`approx`]: `x₀`-prediction losses and the approximation energies.
//! - [`diagnostics`]: endpoint checks of sampler output against `p_δ`.
//! - [`scaling`]: areas across step counts and embedding dimensions.

pub mod approx;
pub mod diagnostics;
pub mod disc;
pub mod scaling;

pub use approx::{approx_report, ApproxReport};
pub use diagnostics::{output_diagnostics, pinsker_check, OutputDiagnostics, PinskerCheck};
pub use disc::{
    disc_area, disc_area_with, disc_pathwise, orthogonality_check, pathwise_energies, DiscArea,
    PathwiseReport, DEFAULT_QUAD_POINTS,
};
pub use scaling::{loglog_slope, scaling_study, ScalingRow, ScalingSetup, ScalingStudy};
