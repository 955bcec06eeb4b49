//! Parameterizations, analysis operators, the Heaviside dictionary and measurement ensembles.
//!
//! Every operator is immutable once built.

mod analysis;
mod heaviside;
mod measurement;
mod parameterization;

pub use analysis::{apply_checked, dif_operator, AnalysisOperator, Geometry};
pub use heaviside::HeavisideDictionary;
pub use measurement::{gaussian_measurement, MeasurementOperator, Origin, GAUSSIAN_PRNG};
pub use parameterization::{
    build_planar_parameterization, build_planar_poly, build_poly_parameterization, ParamKind,
    Parameterization, Scaling,
};
