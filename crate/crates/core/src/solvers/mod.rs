//! Constructors of locally optimal designs.
//!
//! Closed forms cover D-optimality in both curve families and the
//! two-parameter target-dose problem. Everything else goes through
//! [`numeric_solve`], whose output is certified by the equivalence theorem.

mod ac;
mod closed_form;
mod elfving;
mod numeric;

pub use ac::{ac_optimal, drug_share, AcSolution};
pub use closed_form::{compose_active_control, d_opt_emax, d_opt_mm, emax_binary_equation};
pub use elfving::{c_opt_elfving_2d, ElfvingCase, ElfvingSolution};
pub use numeric::{numeric_solve, SolveOptions};
