//! Closed-form D-optimal designs and the composition of a drug-only design
//! with the optimal control share.

use crate::criteria::{rho_p, KMatrix, KStructure};
use crate::design::{Design, InducedDesign};
use crate::error::{Error, Result};
use crate::model::{DrugFamily, MeanFunction, TrialModel};
use crate::scalar::{bisect, sign_changes};

/// Adds the control arm to an optimal drug-only design.
///
/// The control receives `1/(1 + ρ_p)` of the patients, which is
/// `t₂/(t₁ + t₂)` exactly for `p = 0`. Requires a block contrast, or the
/// stacked contrast of the target-dose problem with `p = −1`.
pub fn compose_active_control(induced: &InducedDesign, model: &TrialModel, k: &KMatrix, p: f64) -> Result<Design> {
    let control = match (k.structure(), p) {
        (KStructure::Block { k11, k22 }, p) if p == 0.0 => {
            let (t1, t2) = (k11.ncols() as f64, k22.ncols() as f64);
            t2 / (t1 + t2)
        }
        (KStructure::Block { .. }, _) => 1.0 / (1.0 + rho_p(induced, model, k, p)?),
        (KStructure::Stacked { .. }, p) if p == -1.0 => 1.0 / (1.0 + rho_p(induced, model, k, p)?),
        _ => {
            return Err(Error::Unsupported(
                "composition needs a block contrast (or a stacked one with p = -1); use the numeric solver".into(),
            ))
        }
    };
    Design::compose(induced, control)
}

fn mm_parameters(model: &TrialModel) -> Result<(f64, f64)> {
    match model.drug.mean_function() {
        MeanFunction::MichaelisMenten { emax, ed50 } => Ok((emax, ed50)),
        _ => Err(Error::Unsupported("expected a Michaelis-Menten mean function".into())),
    }
}

fn emax_parameters(model: &TrialModel) -> Result<(f64, f64, f64)> {
    match model.drug.mean_function() {
        MeanFunction::Emax { e0, emax, ed50 } => Ok((e0, emax, ed50)),
        _ => Err(Error::Unsupported("expected an EMAX mean function".into())),
    }
}

fn d_optimal(model: &TrialModel, doses: Vec<f64>) -> Result<Design> {
    let induced = InducedDesign::uniform(doses)?;
    compose_active_control(&induced, model, &KMatrix::identity(model.s1(), model.s2()), 0.0)
}

/// Locally D-optimal design for a Michaelis-Menten curve: two doses
/// `{x, R}` with equal weights plus the control.
///
/// `x` is `L ∨ ϑ₂R/(2ϑ₂+R)` (normal), `L` (negative binomial),
/// `L ∨ ϑ₂R/(3ϑ₂+2R)` (Poisson), and the root of a quadratic for the
/// binomial family.
pub fn d_opt_mm(model: &TrialModel) -> Result<Design> {
    let (a, b) = mm_parameters(model)?;
    let range = model.range();
    let (l, r) = (range.lower(), range.upper());
    let x = match model.drug.family() {
        DrugFamily::Normal { .. } => b * r / (2.0 * b + r),
        DrugFamily::NegativeBinomial { .. } => l,
        DrugFamily::Poisson => b * r / (3.0 * b + 2.0 * r),
        DrugFamily::Binomial => {
            let disc = 9.0 * r * r - 8.0 * r * r * a + 18.0 * r * b - 8.0 * r * a * b + 9.0 * b * b;
            let den = 4.0 * a * b - 4.0 * r + 4.0 * r * a - 6.0 * b;
            let num = b * r + 3.0 * b * b - b * disc.sqrt();
            if den.abs() < 1e-12 * (1.0 + r) || disc < 0.0 {
                return Err(Error::InfeasibleGeometry(format!(
                    "binomial Michaelis-Menten dose formula is singular for emax {a}, ed50 {b}, R {r}"
                )));
            }
            num / den
        }
    };
    d_optimal(model, vec![x.max(l), r])
}

/// Left-hand side of the implicit equation for the interior dose of the
/// EMAX D-optimal design under negative binomial or binomial responses.
pub fn emax_binary_equation(model: &TrialModel, d: f64) -> Result<f64> {
    let (t0, t1, t2) = emax_parameters(model)?;
    let range = model.range();
    let (l, r) = (range.lower(), range.upper());
    let (c_mid, c_last) = match model.drug.family() {
        DrugFamily::NegativeBinomial { .. } => (2.0, 1.0),
        DrugFamily::Binomial => (1.0, 2.0),
        _ => return Err(Error::Unsupported("equation applies to binomial-type families".into())),
    };
    Ok(2.0 / (d - l) + 2.0 / (d - r)
        - (t0 + t1 - 1.0) / (d * (t0 + t1 - 1.0) + (t0 - 1.0) * t2)
        - c_mid * (t0 + t1) / (t0 * (t2 + d) + t1 * d)
        - c_last / (t2 + d))
}

/// Locally D-optimal design for an EMAX curve: doses `{L, d*, R}` plus the
/// control.
///
/// Normal responses give weights 2/9 per dose and 1/3 for the control; the
/// other families give 1/4 everywhere. `d*` is explicit for the normal and
/// Poisson families and the unique root of [`emax_binary_equation`]
/// otherwise.
pub fn d_opt_emax(model: &TrialModel) -> Result<Design> {
    let (t0, t1, t2) = emax_parameters(model)?;
    let range = model.range();
    let (l, r) = (range.lower(), range.upper());
    let d = match model.drug.family() {
        DrugFamily::Normal { .. } => (r * (l + t2) + l * (r + t2)) / ((l + t2) + (r + t2)),
        DrugFamily::Poisson => {
            let m = |d: f64| t0 * t2 + t1 * d + t0 * d;
            let (ml, mr) = (m(l), m(r));
            let kappa = ((t2 + l) * mr + (t2 + r) * ml).powi(2) + 12.0 * (t2 + l) * (t2 + r) * mr * ml;
            let sk = kappa.sqrt();
            t2 * (4.0 * ml * mr - t1 * (l * mr + r * ml) - t0 * sk)
                / (-4.0 * ml * mr - t1 * t2 * (mr + ml) + (t1 + t0) * sk)
        }
        DrugFamily::NegativeBinomial { .. } | DrugFamily::Binomial => {
            let eps = 1e-9 * range.width();
            let g = |d: f64| emax_binary_equation(model, d).unwrap_or(f64::NAN);
            let brackets = sign_changes(g, l + eps, r - eps, 64);
            let (a, b) = match brackets.as_slice() {
                [one] => *one,
                [] => {
                    return Err(Error::InfeasibleGeometry(
                        "interior dose equation has no root in (L, R)".into(),
                    ))
                }
                _ => {
                    return Err(Error::InfeasibleGeometry(format!(
                        "interior dose equation has {} roots in (L, R)",
                        brackets.len()
                    )))
                }
            };
            let root = bisect(g, a, b, 0.0);
            newton_polish(g, root, range.width())
        }
    };
    if !(d > l && d < r) {
        return Err(Error::InfeasibleGeometry(format!(
            "interior dose {d} is not inside ({l}, {r})"
        )));
    }
    d_optimal(model, vec![l, d, r])
}

/// One Newton step with a central-difference slope, kept only if it
/// reduces the residual.
fn newton_polish<F: Fn(f64) -> f64>(g: F, x: f64, width: f64) -> f64 {
    let h = 1e-7 * width;
    let slope = (g(x + h) - g(x - h)) / (2.0 * h);
    let y = x - g(x) / slope;
    if y.is_finite() && g(y).abs() < g(x).abs() {
        y
    } else {
        x
    }
}
