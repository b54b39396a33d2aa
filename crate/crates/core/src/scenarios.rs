//! The two clinical examples (gouty arthritis, acute migraine), the designs
//! actually used in those trials, and the binomial Michaelis-Menten example
//! showing that composition needs a block contrast.

use nalgebra::DMatrix;

use crate::criteria::KMatrix;
use crate::design::{Design, Point};
use crate::error::Result;
use crate::model::{ControlModel, DoseRange, DrugFamily, DrugModel, FamilyKind, MeanFunction, TrialModel};

/// Known variance `σ² = 0.05²` used for both arms under the normal model.
pub const VARIANCE: f64 = 0.0025;
/// Number of failures `r₁ = r₂` for the negative binomial gouty model.
pub const GOUTY_FAILURES: u32 = 10;

pub const GOUTY_CURVE: (f64, f64, f64) = (0.26, 0.73, 10.5);
pub const GOUTY_CONTROL: f64 = 0.9206;
pub const GOUTY_RANGE: (f64, f64) = (0.0, 300.0);

pub const MIGRAINE_CURVE: (f64, f64, f64) = (0.098, 0.2052, 12.3);
pub const MIGRAINE_CONTROL: f64 = 0.2505;
pub const MIGRAINE_RANGE: (f64, f64) = (0.0, 200.0);

/// EMAX trial with the shared variance and failure count of the examples.
pub fn emax_trial(family: FamilyKind, curve: (f64, f64, f64), control: f64, range: (f64, f64)) -> Result<TrialModel> {
    let mean = MeanFunction::emax(curve.0, curve.1, curve.2)?;
    let range = DoseRange::new(range.0, range.1)?;
    let (drug, ctrl) = match family {
        FamilyKind::Normal => (
            DrugFamily::Normal { variance: VARIANCE },
            ControlModel::normal(control, VARIANCE)?,
        ),
        FamilyKind::NegativeBinomial => (
            DrugFamily::NegativeBinomial {
                failures: GOUTY_FAILURES,
            },
            ControlModel::negative_binomial(GOUTY_FAILURES, control)?,
        ),
        FamilyKind::Binomial => (DrugFamily::Binomial, ControlModel::binomial(control)?),
        FamilyKind::Poisson => (DrugFamily::Poisson, ControlModel::poisson(control)?),
    };
    TrialModel::new(DrugModel::new(drug, mean, range)?, ctrl)
}

/// Gouty arthritis trial: EMAX curve on `[0, 300]` mg, control response 0.9206.
pub fn gouty(family: FamilyKind) -> Result<TrialModel> {
    emax_trial(family, GOUTY_CURVE, GOUTY_CONTROL, GOUTY_RANGE)
}

/// Acute migraine trial: EMAX curve on `[0, 200]` mg, control response 0.2505.
pub fn migraine(family: FamilyKind) -> Result<TrialModel> {
    emax_trial(family, MIGRAINE_CURVE, MIGRAINE_CONTROL, MIGRAINE_RANGE)
}

/// 14.3% on each of 25, 50, 100, 200, 300 mg and 28.5% on the control.
pub fn gouty_standard() -> Design {
    let mut points: Vec<(Point, f64)> = [25.0, 50.0, 100.0, 200.0, 300.0]
        .iter()
        .map(|&d| (Point::Drug(d), 0.143))
        .collect();
    points.push((Point::Control, 0.285));
    Design::normalized(&points).expect("valid standard design")
}

/// 21, 5, 7, 10, 10, 11, 10, 10% on 0, 2.5, 5, 10, 20, 50, 100, 200 mg and
/// 16% on the control.
pub fn migraine_standard() -> Design {
    let doses = [0.0, 2.5, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0];
    let shares = [0.21, 0.05, 0.07, 0.10, 0.10, 0.11, 0.10, 0.10];
    let mut points: Vec<(Point, f64)> = doses.iter().zip(shares).map(|(&d, w)| (Point::Drug(d), w)).collect();
    points.push((Point::Control, 0.16));
    Design::normalized(&points).expect("valid standard design")
}

/// Binomial responses, Michaelis-Menten curve `0.5d/(2 + d)` on `[0, 50]`,
/// control success probability 0.4.
pub fn block_counterexample() -> Result<TrialModel> {
    TrialModel::new(
        DrugModel::new(
            DrugFamily::Binomial,
            MeanFunction::michaelis_menten(0.5, 2.0)?,
            DoseRange::new(0.0, 50.0)?,
        )?,
        ControlModel::binomial(0.4)?,
    )
}

/// Contrast for `θ₂ − π(d₀)` and `θ₂ − ϑ₁` under a Michaelis-Menten curve:
/// columns `(−d₀/(ϑ₂+d₀), ϑ₁d₀/(ϑ₂+d₀)², 1)` and `(−1, 0, 1)`.
pub fn difference_contrast(model: &TrialModel, d0: f64) -> Result<KMatrix> {
    let (a, b) = mm_parameters(model);
    KMatrix::general(DMatrix::from_row_slice(
        3,
        2,
        &[-d0 / (b + d0), -1.0, a * d0 / (b + d0).powi(2), 0.0, 1.0, 1.0],
    ))
}

/// Drug-only contrast for predicting `π(d₀)`: `(d₀/(ϑ₂+d₀), −ϑ₁d₀/(ϑ₂+d₀)²)`
/// with a zero control row, so the optimal control weight is zero.
pub fn prediction_contrast(model: &TrialModel, d0: f64) -> Result<KMatrix> {
    let (a, b) = mm_parameters(model);
    KMatrix::general(DMatrix::from_column_slice(
        3,
        1,
        &[d0 / (b + d0), -a * d0 / (b + d0).powi(2), 0.0],
    ))
}

/// Drug-only contrast `[I₂; 0]` for D-optimal estimation of `θ₁`.
pub fn drug_parameters_contrast() -> Result<KMatrix> {
    KMatrix::general(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]))
}

fn mm_parameters(model: &TrialModel) -> (f64, f64) {
    let m = model.drug.mean_function();
    (m.max_effect(), m.ed50())
}
