//! Computational circle-method toolkit for systems made of one diagonal form
//! of degree `k` and `ρ` general forms of a common degree `d < k`.
//!
//! The crate is organised by stage of the method:
//!
//! * [`forms`]: exact forms, evaluation, signatures, forward differences.
//! * [`counting`]: exact box counts `N(X)`, congruence counts `Γ(q)`, local
//!   densities `χ_p` and Hensel witnesses.
//! * [`expsums`]: Weyl sums, complete sums, phase sums and mean values.
//! * [`arcs`]: Dirichlet approximation, arc membership and the parameter
//!   algebra behind the major/minor arc dissection.
//! * [`densities`]: singular series and integral, real density, and the
//!   predicted leading constant.
//! * [`bounds`]: closed-form variable-count thresholds.
//! * [`verify`]: the count-versus-prediction pipeline shared by the CLI and
//!   the acceptance suite.

pub mod arcs;
pub mod arith;
pub mod bounds;
pub mod counting;
pub mod densities;
mod error;
pub mod expsums;
pub mod forms;
pub mod quadrature;
pub mod verify;

pub use error::{Error, Result};
pub use forms::{DiagonalForm, FormSystem, GeneralForm, Monomial, QuadraticSignature, UnivariatePoly};

pub use arcs::{ArcParams, CentralParams, RationalApprox};
pub use bounds::BoundTable;
pub use counting::{ChiPSequence, CountOptions, CountResult};
pub use densities::DensityReport;
pub use expsums::{ArcPoint, SumValue};
pub use verify::FitReport;

/// Default cap on enumerated nodes for counting and lifting.
pub const DEFAULT_BUDGET: u64 = 100_000_000;
