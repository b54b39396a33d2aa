//! Designs minimising the asymptotic variance of the estimated target dose.

use nalgebra::DMatrix;

use super::closed_form::compose_active_control;
use super::elfving::{c_opt_elfving_2d, ElfvingSolution};
use super::numeric::{numeric_solve, SolveOptions};
use crate::criteria::{contrast_covariance, Criterion, KMatrix};
use crate::design::{drug_information, Design, InducedDesign, InfoMatrix};
use crate::error::{ArmLabel, Error, Result};
use crate::model::{ControlModel, TrialModel};

#[derive(Debug, Clone)]
pub struct AcSolution {
    pub design: Design,
    /// Target dose `d*`.
    pub target: f64,
    /// `δ = c̃ᵀM₁⁻c̃` for the drug part, `c̃ = ∂η/∂θ₁` at `d*`.
    pub delta: f64,
    /// Share of patients on the new drug.
    pub drug_share: f64,
    /// Present when the drug part came from the Elfving construction.
    pub elfving: Option<ElfvingSolution>,
}

/// Share of patients on the new drug given `δ`.
///
/// Each family has its own explicit form. All are `√δ/(√δ + √b)` with
/// `b = k'ᵀI₂⁻¹k'` the control-side variance of the expected response.
pub fn drug_share(model: &TrialModel, delta: f64) -> Result<f64> {
    let generic = {
        let b = control_variance(model);
        delta.sqrt() / (delta.sqrt() + b.sqrt())
    };
    let explicit = match model.control {
        ControlModel::Normal { variance: s2, .. } => {
            let s1 = match model.drug.family() {
                crate::model::DrugFamily::Normal { variance } => variance.sqrt(),
                _ => unreachable!("families are matched"),
            };
            // δ here carries the factor 1/σ₁² of the drug information
            let dp = delta / (s1 * s1);
            Some(dp.sqrt() * s1 / (dp.sqrt() * s1 + s2.sqrt()))
        }
        ControlModel::NegativeBinomial { failures, prob: t } => {
            let r2 = failures as f64;
            let den = delta * t * t - (1.0 - t) * r2;
            (den.abs() > 1e-12 * delta * t * t).then(|| (delta * t * t - ((1.0 - t) * delta * t * t * r2).sqrt()) / den)
        }
        ControlModel::Binomial { prob: t } => {
            let den = delta - (1.0 - t) * t;
            (den.abs() > 1e-12 * delta).then(|| (delta - (delta * (1.0 - t) * t).sqrt()) / den)
        }
        ControlModel::Poisson { rate } => Some(delta.sqrt() / (delta.sqrt() + rate.sqrt())),
    };
    let share = explicit.unwrap_or(generic);
    if (share - generic).abs() > 1e-9 {
        return Err(Error::Consistency(format!(
            "family allocation {share} differs from the generic allocation {generic}"
        )));
    }
    Ok(share)
}

/// `k'ᵀI₂⁻¹k'` on the comparison scale.
fn control_variance(model: &TrialModel) -> f64 {
    let k = model.control.response_gradient(model.comparison_scale());
    let inv = model.control.fisher().try_inverse().expect("control information is positive definite");
    (k.transpose() * inv * k)[(0, 0)]
}

fn delta_of(induced: &InducedDesign, model: &TrialModel) -> Result<f64> {
    let d = model.target_dose()?;
    let c = model.drug.response_gradient(d, model.comparison_scale());
    let m1 = InfoMatrix::new(drug_information(induced, &model.drug)?);
    let cm = DMatrix::from_column_slice(c.len(), 1, c.as_slice());
    Ok(contrast_covariance(&cm, &m1, ArmLabel::Drug)?[(0, 0)])
}

/// Locally optimal design for estimating the target dose.
///
/// The drug part is the c-optimal design for `c̃ = ∂η/∂θ₁(d*)`: from the
/// Elfving construction for Michaelis-Menten curves and from the numeric
/// solver otherwise. The control then receives `1 − ρ` of the patients, with
/// `ρ` from [`drug_share`], cross-checked against `1/(1 + ρ₋₁)`.
pub fn ac_optimal(model: &TrialModel, opts: &SolveOptions) -> Result<AcSolution> {
    let target = model.target_dose()?;
    let (g1, g2) = model.target_dose_grad()?;
    let c = model.drug.response_gradient(target, model.comparison_scale());
    let (induced, elfving) = if model.drug.mean_function().is_michaelis_menten() {
        let s = c_opt_elfving_2d(&model.drug, &c)?;
        (s.induced()?, Some(s))
    } else {
        let joint = numeric_solve(model, &Criterion::TargetDose, opts)?;
        (joint.induced()?, None)
    };
    let delta = delta_of(&induced, model)?;
    let share = drug_share(model, delta)?;
    let composed = compose_active_control(&induced, model, &KMatrix::stacked(g1, g2)?, -1.0)?;
    if (composed.control_weight() - (1.0 - share)).abs() > 1e-9 {
        return Err(Error::Consistency(format!(
            "control share {} from the allocation ratio differs from {}",
            composed.control_weight(),
            1.0 - share
        )));
    }
    let design = Design::compose(&induced, 1.0 - share)?;
    Ok(AcSolution {
        design,
        target,
        delta,
        drug_share: share,
        elfving,
    })
}
