//! Least-squares Monte Carlo construction of the price functionals.
//!
//! Conditional expectations in the fixed-point equation are replaced by
//! least-squares projections onto piecewise-linear hut functions, fitted on a
//! sample `(e_k, g_k)` of innovations and equidistant states. Because the
//! innovations are i.i.d., one sample and one design matrix serve every period.

mod apmcm;
mod basis;
mod projection;

pub use apmcm::{apmcm_step, run_apmcm, InnerSettings, LsmcEngine, LsmcSolution, StepOutcome};
pub use basis::HutBasis;
pub use projection::{build_sample, project, DesignMatrix, Projection, ProjectionSample};
