//! Optimality criteria: Kiefer's `φ_p`, its drug-only reduction, the
//! allocation ratio `ρ_p`, the target-dose criterion `ψ` and efficiencies.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::design::{drug_information, info_matrix, Design, InducedDesign, InfoMatrix};
use crate::error::{ArmLabel, Error, Result};
use crate::linalg::{column_rank, in_range, symmetrize};
use crate::model::{DrugModel, TrialModel};

/// Power used as the `p = −∞` surrogate in `ρ_p`.
pub const RHO_E_SURROGATE: f64 = -50.0;

/// Structure of a contrast matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum KStructure {
    General,
    /// `diag(K₁₁, K₂₂)`
    Block { k11: DMatrix<f64>, k22: DMatrix<f64> },
    /// A single column `(k₁ᵀ, k₂ᵀ)ᵀ`, as produced by the target-dose criterion.
    Stacked { k1: DVector<f64>, k2: DVector<f64> },
}

/// Contrast matrix `K` ((s₁+s₂) × t) of full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct KMatrix {
    full: DMatrix<f64>,
    structure: KStructure,
}

impl KMatrix {
    pub fn general(full: DMatrix<f64>) -> Result<Self> {
        Self::checked(full, KStructure::General)
    }

    pub fn block(k11: DMatrix<f64>, k22: DMatrix<f64>) -> Result<Self> {
        if k11.ncols() == 0 || k22.ncols() == 0 {
            return Err(Error::InvalidParameter("block contrast needs columns in both blocks".into()));
        }
        let full = crate::linalg::block_diag(&k11, &k22);
        Self::checked(full, KStructure::Block { k11, k22 })
    }

    /// `K = diag(I_{s₁}, I_{s₂})`: D-optimality for all parameters.
    pub fn identity(s1: usize, s2: usize) -> Self {
        Self::block(DMatrix::identity(s1, s1), DMatrix::identity(s2, s2)).expect("identity has full rank")
    }

    pub fn stacked(k1: DVector<f64>, k2: DVector<f64>) -> Result<Self> {
        let mut full = DMatrix::zeros(k1.len() + k2.len(), 1);
        full.view_mut((0, 0), (k1.len(), 1)).copy_from(&k1);
        full.view_mut((k1.len(), 0), (k2.len(), 1)).copy_from(&k2);
        Self::checked(full, KStructure::Stacked { k1, k2 })
    }

    fn checked(full: DMatrix<f64>, structure: KStructure) -> Result<Self> {
        if full.ncols() == 0 || column_rank(&full) != full.ncols() {
            return Err(Error::InvalidParameter(format!(
                "contrast matrix ({}x{}) must have full column rank",
                full.nrows(),
                full.ncols()
            )));
        }
        Ok(Self { full, structure })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.full
    }

    pub fn structure(&self) -> &KStructure {
        &self.structure
    }

    pub fn rows(&self) -> usize {
        self.full.nrows()
    }

    /// `t`
    pub fn cols(&self) -> usize {
        self.full.ncols()
    }

    pub fn is_block(&self) -> bool {
        matches!(self.structure, KStructure::Block { .. })
    }

    /// Drug and control parts: the blocks of a block contrast or the two
    /// halves of a stacked one.
    pub fn parts(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        match &self.structure {
            KStructure::General => None,
            KStructure::Block { k11, k22 } => Some((k11.clone(), k22.clone())),
            KStructure::Stacked { k1, k2 } => Some((
                DMatrix::from_column_slice(k1.len(), 1, k1.as_slice()),
                DMatrix::from_column_slice(k2.len(), 1, k2.as_slice()),
            )),
        }
    }
}

/// Which functional a design optimises.
#[derive(Debug, Clone, PartialEq)]
pub enum Criterion {
    /// Maximise `φ_p(ξ)` for `p ∈ [−∞, 1)`; `f64::NEG_INFINITY` is E-optimality.
    PhiP { p: f64, k: KMatrix },
    /// Minimise the asymptotic variance `ψ(ξ)` of the target-dose estimate.
    TargetDose,
}

impl Criterion {
    pub fn phi(p: f64, k: KMatrix) -> Result<Self> {
        check_power(p)?;
        Ok(Criterion::PhiP { p, k })
    }

    pub fn d_optimal(model: &TrialModel) -> Self {
        Criterion::PhiP {
            p: 0.0,
            k: KMatrix::identity(model.s1(), model.s2()),
        }
    }

    /// The equivalent `φ_p` form: `ψ` is `1/φ₋₁` for the stacked contrast of
    /// target-dose gradients.
    pub fn resolve(&self, model: &TrialModel) -> Result<(f64, KMatrix)> {
        match self {
            Criterion::PhiP { p, k } => {
                check_power(*p)?;
                if k.rows() != model.s1() + model.s2() {
                    return Err(Error::DimensionMismatch {
                        expected: model.s1() + model.s2(),
                        found: k.rows(),
                    });
                }
                Ok((*p, k.clone()))
            }
            Criterion::TargetDose => {
                let (g1, g2) = model.target_dose_grad()?;
                Ok((-1.0, KMatrix::stacked(g1, g2)?))
            }
        }
    }
}

fn check_power(p: f64) -> Result<()> {
    if p < 1.0 && !p.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("power p = {p} must satisfy p < 1")))
    }
}

/// Eigenvalues of the symmetric positive definite `C = KᵀM⁻K`.
fn eigenvalues(c: &DMatrix<f64>) -> Result<Vec<f64>> {
    let values: Vec<f64> = SymmetricEigen::new(symmetrize(c)).eigenvalues.iter().copied().collect();
    let max = values.iter().fold(0.0_f64, |a, v| a.max(*v));
    if values.iter().any(|v| !(*v > 1e-14 * max) || !v.is_finite()) {
        return Err(Error::Consistency(format!("KᵀM⁻K is not positive definite: {values:?}")));
    }
    Ok(values)
}

/// `log tr(C^{−p})` computed stably from the eigenvalues.
pub(crate) fn log_trace_power(values: &[f64], p: f64) -> f64 {
    let logs: Vec<f64> = values.iter().map(|v| -p * v.ln()).collect();
    let m = logs.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v));
    m + logs.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `φ_p` as a function of `C = KᵀM⁻K`.
pub fn phi_of_contrast_covariance(c: &DMatrix<f64>, p: f64) -> Result<f64> {
    check_power(p)?;
    let values = eigenvalues(c)?;
    let t = values.len() as f64;
    if p == f64::NEG_INFINITY {
        return Ok(1.0 / values.iter().fold(0.0_f64, |a, v| a.max(*v)));
    }
    if p == 0.0 {
        let mean_log = values.iter().map(|v| v.ln()).sum::<f64>() / t;
        return Ok((-mean_log).exp());
    }
    Ok(((log_trace_power(&values, p) - t.ln()) / p).exp())
}

/// `C = KᵀM⁺K` after checking estimability.
pub fn contrast_covariance(k: &DMatrix<f64>, m: &InfoMatrix, arm: ArmLabel) -> Result<DMatrix<f64>> {
    if !m.estimable(k)? {
        return Err(Error::NotEstimable { arm });
    }
    Ok(symmetrize(&(k.transpose() * m.pseudo_inverse() * k)))
}

/// `φ_p(ξ) = ((1/t) tr((KᵀM⁻K)^{−p}))^{1/p}`, larger is better.
pub fn phi_p(design: &Design, model: &TrialModel, k: &KMatrix, p: f64) -> Result<f64> {
    let m = info_matrix(design, model)?;
    if k.rows() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: k.rows(),
        });
    }
    phi_of_contrast_covariance(&contrast_covariance(k.matrix(), &m, ArmLabel::Joint)?, p)
}

/// Drug-only criterion `φ̃_p(ξ̃)` for the contrast `K₁₁`.
pub fn phi_p_reduced(induced: &InducedDesign, drug: &DrugModel, k11: &DMatrix<f64>, p: f64) -> Result<f64> {
    let m = InfoMatrix::new(drug_information(induced, drug)?);
    phi_of_contrast_covariance(&contrast_covariance(k11, &m, ArmLabel::Drug)?, p)
}

/// Criterion value with "larger is better" orientation: `φ_p`, or `1/ψ`.
pub fn criterion_value(design: &Design, model: &TrialModel, criterion: &Criterion) -> Result<f64> {
    match criterion {
        Criterion::PhiP { p, k } => phi_p(design, model, k, *p),
        Criterion::TargetDose => Ok(1.0 / psi_ac(design, model)?),
    }
}

/// Ratio of drug to control weight, `ρ_p`, for an optimal induced design.
///
/// `p = 0` returns `t₁/t₂` exactly; `p = −∞` uses `p = −50`.
pub fn rho_p(induced: &InducedDesign, model: &TrialModel, k: &KMatrix, p: f64) -> Result<f64> {
    check_power(p)?;
    let (k11, k22) = match k.structure() {
        KStructure::Block { .. } => k.parts().unwrap(),
        KStructure::Stacked { .. } if p == -1.0 => k.parts().unwrap(),
        _ => {
            return Err(Error::Unsupported(
                "ρ_p needs a block contrast, or a stacked contrast with p = -1".into(),
            ))
        }
    };
    if p == 0.0 {
        return Ok(k11.ncols() as f64 / k22.ncols() as f64);
    }
    let p = if p == f64::NEG_INFINITY { RHO_E_SURROGATE } else { p };
    let m1 = InfoMatrix::new(drug_information(induced, &model.drug)?);
    let c1 = contrast_covariance(&k11, &m1, ArmLabel::Drug)?;
    let i2 = InfoMatrix::new(model.control.fisher());
    let c2 = contrast_covariance(&k22, &i2, ArmLabel::Control)?;
    let l1 = log_trace_power(&eigenvalues(&c1)?, p);
    let l2 = log_trace_power(&eigenvalues(&c2)?, p);
    Ok(((l2 - l1) / (p - 1.0)).exp())
}

/// Target-dose criterion
/// `ψ(ξ) = (∂d*/∂θ₁)ᵀM₁⁻(∂d*/∂θ₁)/(1 − w_{k+1}) + (∂d*/∂θ₂)ᵀI₂⁻¹(∂d*/∂θ₂)/w_{k+1}`,
/// smaller is better.
pub fn psi_ac(design: &Design, model: &TrialModel) -> Result<f64> {
    let (g1, g2) = model.target_dose_grad()?;
    let (a, b) = psi_parts(design, model, &g1, &g2)?;
    let w = design.control_weight();
    Ok(a / (1.0 - w) + b / w)
}

/// `(g₁ᵀM₁⁻g₁, g₂ᵀI₂⁻¹g₂)` with the estimability checks of both arms.
fn psi_parts(design: &Design, model: &TrialModel, g1: &DVector<f64>, g2: &DVector<f64>) -> Result<(f64, f64)> {
    if design.doses().is_empty() {
        return Err(Error::NotEstimable { arm: ArmLabel::Drug });
    }
    if !design.has_control() {
        return Err(Error::NotEstimable { arm: ArmLabel::Control });
    }
    let m1 = InfoMatrix::new(drug_information(&design.induced()?, &model.drug)?);
    let g1m = DMatrix::from_column_slice(g1.len(), 1, g1.as_slice());
    let a = contrast_covariance(&g1m, &m1, ArmLabel::Drug)?[(0, 0)];
    let i2 = model.control.fisher();
    let g2m = DMatrix::from_column_slice(g2.len(), 1, g2.as_slice());
    if !in_range(&g2m, &i2)? {
        return Err(Error::NotEstimable { arm: ArmLabel::Control });
    }
    let inv = i2.clone().try_inverse().ok_or(Error::NotEstimable { arm: ArmLabel::Control })?;
    let b = (g2.transpose() * inv * g2)[(0, 0)];
    Ok((a, b))
}

/// `ψ` in the form `(1/η'(d*)²) (c̃ᵀM₁⁻c̃/(1 − w_{k+1}) + k'ᵀI₂⁻¹k'/w_{k+1})`
/// with `c̃ = ∂η/∂θ₁` at the target dose.
pub fn psi_ac_alternative(design: &Design, model: &TrialModel) -> Result<f64> {
    let scale = model.comparison_scale();
    let d = model.target_dose()?;
    let slope = model.drug.response_slope(d, scale);
    let c = model.drug.response_gradient(d, scale);
    let kp = model.control.response_gradient(scale);
    let (a, b) = psi_parts(design, model, &c, &kp)?;
    let w = design.control_weight();
    Ok((a / (1.0 - w) + b / w) / (slope * slope))
}

fn checked_efficiency(value: f64) -> Result<f64> {
    if value > 1.0 + 1e-8 {
        return Err(Error::EfficiencyAboveOne { value });
    }
    Ok(value.clamp(0.0, 1.0))
}

/// `φ_p(ξ)/φ_p(ξ*)`; `p = 0` with the identity contrast is D-efficiency.
pub fn phi_efficiency(design: &Design, optimal: &Design, model: &TrialModel, k: &KMatrix, p: f64) -> Result<f64> {
    checked_efficiency(phi_p(design, model, k, p)? / phi_p(optimal, model, k, p)?)
}

/// D-efficiency `Φ₀(ξ)/Φ₀(ξ_D*)` for all parameters.
pub fn d_efficiency(design: &Design, optimal: &Design, model: &TrialModel) -> Result<f64> {
    phi_efficiency(design, optimal, model, &KMatrix::identity(model.s1(), model.s2()), 0.0)
}

/// AC-efficiency `ψ(ξ_AC*)/ψ(ξ)`; non-estimable designs have efficiency 0.
pub fn ac_efficiency(design: &Design, optimal: &Design, model: &TrialModel) -> Result<f64> {
    let best = psi_ac(optimal, model)?;
    match psi_ac(design, model) {
        Ok(v) => checked_efficiency(best / v),
        Err(Error::NotEstimable { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Efficiency under any criterion.
pub fn efficiency(design: &Design, optimal: &Design, model: &TrialModel, criterion: &Criterion) -> Result<f64> {
    match criterion {
        Criterion::PhiP { p, k } => phi_efficiency(design, optimal, model, k, *p),
        Criterion::TargetDose => ac_efficiency(design, optimal, model),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Point;
    use crate::model::{ControlModel, DoseRange, DrugFamily, MeanFunction};

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn phi_examples() {
        for p in [0.0, -1.0, 0.5, -3.0, f64::NEG_INFINITY] {
            assert!((phi_of_contrast_covariance(&DMatrix::identity(3, 3), p).unwrap() - 1.0).abs() < 1e-14);
        }
        let c = diag(&[1.0, 4.0]);
        assert!((phi_of_contrast_covariance(&c, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((phi_of_contrast_covariance(&c, -1.0).unwrap() - 0.4).abs() < 1e-15);
        assert!((phi_of_contrast_covariance(&c, -1.0 + 1e-7).unwrap() - 0.4).abs() < 1e-6);
        assert!((phi_of_contrast_covariance(&c, f64::NEG_INFINITY).unwrap() - 0.25).abs() < 1e-15);
        assert!(phi_of_contrast_covariance(&c, 1.0).is_err());
    }

    #[test]
    fn power_limits() {
        let c = diag(&[0.3, 1.7, 2.2]);
        let d = phi_of_contrast_covariance(&c, 0.0).unwrap();
        for p in [1e-6, -1e-6] {
            assert!((phi_of_contrast_covariance(&c, p).unwrap() - d).abs() <= 1e-4);
        }
        // with λ_max(C) = 1 the averaged power mean converges like t^{1/50}
        let normalized = &c / 2.2;
        let e = phi_of_contrast_covariance(&normalized, f64::NEG_INFINITY).unwrap();
        let p50 = phi_of_contrast_covariance(&normalized, -50.0).unwrap();
        assert!((p50 / e - 3f64.powf(0.02)).abs() <= 1e-3);
        let single = DMatrix::from_element(1, 1, 1.0);
        let e1 = phi_of_contrast_covariance(&single, f64::NEG_INFINITY).unwrap();
        assert!((phi_of_contrast_covariance(&single, -50.0).unwrap() - e1).abs() <= 1e-3);
    }

    fn gouty_normal() -> TrialModel {
        let drug = DrugModel::new(
            DrugFamily::Normal { variance: 0.0025 },
            MeanFunction::emax(0.26, 0.73, 10.5).unwrap(),
            DoseRange::new(0.0, 300.0).unwrap(),
        )
        .unwrap();
        TrialModel::new(drug, ControlModel::normal(0.9206, 0.0025).unwrap()).unwrap()
    }

    #[test]
    fn non_estimable_drug_part() {
        let model = gouty_normal();
        let d = Design::new(&[(Point::Drug(10.0), 0.5), (Point::Control, 0.5)]).unwrap();
        assert!(matches!(
            phi_p(&d, &model, &KMatrix::identity(4, 2), 0.0),
            Err(Error::NotEstimable { .. })
        ));
        let only_drug = Design::new(&[(Point::Drug(10.0), 0.5), (Point::Drug(100.0), 0.5)]).unwrap();
        assert!(matches!(
            psi_ac(&only_drug, &model),
            Err(Error::NotEstimable { arm: ArmLabel::Control })
        ));
    }

    #[test]
    fn rho_at_zero_is_ratio_of_dimensions() {
        let model = gouty_normal();
        let k = KMatrix::identity(4, 2);
        let induced = InducedDesign::uniform(vec![0.0, 9.81, 300.0]).unwrap();
        assert_eq!(rho_p(&induced, &model, &k, 0.0).unwrap(), 2.0);
        for p in [1e-6, -1e-6] {
            let r = rho_p(&induced, &model, &k, p).unwrap();
            assert!((r - 2.0).abs() <= 1e-4, "{r}");
        }
    }

    #[test]
    fn psi_forms_agree() {
        let model = gouty_normal();
        let d = Design::new(&[(Point::Drug(0.0), 0.2), (Point::Drug(50.0), 0.2), (Point::Drug(300.0), 0.2), (Point::Control, 0.4)])
            .unwrap();
        let a = psi_ac(&d, &model).unwrap();
        let b = psi_ac_alternative(&d, &model).unwrap();
        assert!((a - b).abs() <= 1e-10 * a);
        let (p, k) = Criterion::TargetDose.resolve(&model).unwrap();
        let phi = phi_p(&d, &model, &k, p).unwrap();
        assert!((1.0 / phi - a).abs() <= 1e-9 * a);
    }
}
