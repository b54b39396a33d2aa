//! Locally optimal designs for dose-finding studies with an active control.
//!
//! Patients receive either the new drug at a dose from `[L, R]` or an active
//! control at its fixed dose. A design is a probability measure on the
//! joint space; the crate computes `φ_p`-optimal designs for linear
//! combinations `Kᵀθ` of the parameters and designs that minimise the
//! variance of the estimated target dose (the dose of the new drug matching
//! the control response). Every solver output can be certified with
//! [`equivalence::verify`].
//!
//! ```
//! use acdesign::model::FamilyKind;
//! use acdesign::{scenarios, solvers, Criterion};
//!
//! let model = scenarios::gouty(FamilyKind::Normal)?;
//! let design = solvers::d_opt_emax(&model)?;
//! let report = acdesign::verify(&design, &model, &Criterion::d_optimal(&model), Default::default())?;
//! assert!(report.is_optimal());
//! # Ok::<(), acdesign::Error>(())
//! ```

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod design;
pub mod equivalence;
pub mod error;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod scenarios;
pub mod solvers;
pub mod text;

pub use criteria::{Criterion, KMatrix};
pub use design::{Design, InducedDesign, Point};
pub use equivalence::{verify, SensitivityReport, Verdict, VerifyOptions};
pub use error::{Error, Result};
pub use model::{ControlModel, DoseRange, DrugFamily, DrugModel, MeanFunction, TrialModel};
pub use solvers::SolveOptions;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/criteria.md")]
    mod criteria {}
    #[doc = include_str!("../../../book/src/equivalence.md")]
    mod equivalence {}
    #[doc = include_str!("../../../book/src/solvers.md")]
    mod solvers {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
