//! Dose-response mean functions, response families and per-observation
//! Fisher information for the two arms of an active-controlled trial.
//!
//! The new drug is observed at doses `d ∈ [L, R]` with mean `η(d, ϑ)` given
//! by a Michaelis-Menten or EMAX curve. The active control is a single arm
//! with constant parameter `θ₂`. For every family the dose-dependent part of
//! the drug information is rank one, `f(d) f(d)ᵀ`, where `f` is the
//! *Elfving vector* returned by [`DrugModel::elfving_vector`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::block_diag;

/// Closed dose interval `[L, R]` with `0 ≤ L < R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoseRange {
    lower: f64,
    upper: f64,
}

impl DoseRange {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower < 0.0 || lower >= upper {
            return Err(Error::InvalidParameter(format!(
                "dose range [{lower}, {upper}] must satisfy 0 <= L < R"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, dose: f64) -> bool {
        dose >= self.lower && dose <= self.upper
    }

    pub fn check(&self, dose: f64) -> Result<()> {
        if self.contains(dose) {
            Ok(())
        } else {
            Err(Error::DoseOutOfRange {
                dose,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    /// `n ≥ 2` equally spaced doses including both endpoints.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        let h = self.width() / (n - 1) as f64;
        (0..n)
            .map(|i| if i == n - 1 { self.upper } else { self.lower + h * i as f64 })
            .collect()
    }
}

/// Dose-response curve for the new drug.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanFunction {
    /// `emax · d / (ed50 + d)`
    MichaelisMenten { emax: f64, ed50: f64 },
    /// `e0 + emax · d / (ed50 + d)`
    Emax { e0: f64, emax: f64, ed50: f64 },
}

impl MeanFunction {
    pub fn michaelis_menten(emax: f64, ed50: f64) -> Result<Self> {
        let m = MeanFunction::MichaelisMenten { emax, ed50 };
        m.validate()?;
        Ok(m)
    }

    pub fn emax(e0: f64, emax: f64, ed50: f64) -> Result<Self> {
        let m = MeanFunction::Emax { e0, emax, ed50 };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.parameters().iter().all(|p| p.is_finite()) && self.ed50() > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "mean function parameters {:?} must be finite with ed50 > 0",
                self.parameters()
            )))
        }
    }

    pub fn is_michaelis_menten(&self) -> bool {
        matches!(self, MeanFunction::MichaelisMenten { .. })
    }

    pub fn e0(&self) -> f64 {
        match *self {
            MeanFunction::MichaelisMenten { .. } => 0.0,
            MeanFunction::Emax { e0, .. } => e0,
        }
    }

    pub fn max_effect(&self) -> f64 {
        match *self {
            MeanFunction::MichaelisMenten { emax, .. } | MeanFunction::Emax { emax, .. } => emax,
        }
    }

    pub fn ed50(&self) -> f64 {
        match *self {
            MeanFunction::MichaelisMenten { ed50, .. } | MeanFunction::Emax { ed50, .. } => ed50,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            MeanFunction::MichaelisMenten { .. } => 2,
            MeanFunction::Emax { .. } => 3,
        }
    }

    /// Parameter vector in gradient order.
    pub fn parameters(&self) -> Vec<f64> {
        match *self {
            MeanFunction::MichaelisMenten { emax, ed50 } => vec![emax, ed50],
            MeanFunction::Emax { e0, emax, ed50 } => vec![e0, emax, ed50],
        }
    }

    /// Same curve type with a new parameter vector (gradient order).
    pub fn with_parameters(&self, p: &[f64]) -> Self {
        match self {
            MeanFunction::MichaelisMenten { .. } => MeanFunction::MichaelisMenten { emax: p[0], ed50: p[1] },
            MeanFunction::Emax { .. } => MeanFunction::Emax { e0: p[0], emax: p[1], ed50: p[2] },
        }
    }

    pub fn value(&self, dose: f64) -> f64 {
        self.e0() + self.max_effect() * dose / (self.ed50() + dose)
    }

    /// `∂η/∂ϑ`; EMAX prepends the intercept derivative 1.
    pub fn gradient(&self, dose: f64) -> DVector<f64> {
        let (a, b) = (self.max_effect(), self.ed50());
        let s = b + dose;
        let mm = [dose / s, -a * dose / (s * s)];
        match self {
            MeanFunction::MichaelisMenten { .. } => DVector::from_row_slice(&mm),
            MeanFunction::Emax { .. } => DVector::from_row_slice(&[1.0, mm[0], mm[1]]),
        }
    }

    /// `∂η/∂d`
    pub fn dose_slope(&self, dose: f64) -> f64 {
        let s = self.ed50() + dose;
        self.max_effect() * self.ed50() / (s * s)
    }

    /// Closed-form solution of `η(d) = y`, if the rational equation has one.
    pub fn inverse(&self, y: f64) -> Option<f64> {
        let shifted = y - self.e0();
        let denom = self.max_effect() - shifted;
        if denom == 0.0 {
            return None;
        }
        let d = self.ed50() * shifted / denom;
        d.is_finite().then_some(d)
    }
}

/// Response distribution of the new drug.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DrugFamily {
    /// Normal with unknown variance `σ₁²`, estimated alongside the curve.
    Normal { variance: f64 },
    /// Negative binomial with known number of failures `r₁`; the curve is
    /// the success probability.
    NegativeBinomial { failures: u32 },
    /// Bernoulli; the curve is the success probability.
    Binomial,
    /// Poisson; the curve is the rate.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    Normal,
    NegativeBinomial,
    Binomial,
    Poisson,
}

impl FamilyKind {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::Normal => "normal",
            FamilyKind::NegativeBinomial => "negative-binomial",
            FamilyKind::Binomial => "binomial",
            FamilyKind::Poisson => "poisson",
        }
    }
}

impl DrugFamily {
    pub fn kind(&self) -> FamilyKind {
        match self {
            DrugFamily::Normal { .. } => FamilyKind::Normal,
            DrugFamily::NegativeBinomial { .. } => FamilyKind::NegativeBinomial,
            DrugFamily::Binomial => FamilyKind::Binomial,
            DrugFamily::Poisson => FamilyKind::Poisson,
        }
    }
}

/// Scale on which the expected response is compared between arms.
///
/// Only the negative binomial family distinguishes the two: `Parameter` is
/// the success probability `π`, `Mean` the expected count `r(1 − π)/π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseScale {
    Parameter,
    Mean,
}

const VALIDATION_GRID: usize = 1000;

/// Model for the new drug: family, mean curve and dose range. Houses `θ₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrugModel {
    family: DrugFamily,
    mean: MeanFunction,
    range: DoseRange,
}

impl DrugModel {
    /// Validates the parameters on a 1,000-point grid plus both endpoints.
    pub fn new(family: DrugFamily, mean: MeanFunction, range: DoseRange) -> Result<Self> {
        mean.validate()?;
        match family {
            DrugFamily::Normal { variance } if !(variance > 0.0 && variance.is_finite()) => {
                return Err(Error::InvalidParameter(format!("variance {variance} must be positive")));
            }
            DrugFamily::NegativeBinomial { failures: 0 } => {
                return Err(Error::InvalidParameter("failures r must be at least 1".into()));
            }
            _ => {}
        }
        let mut doses = range.grid(VALIDATION_GRID + 2);
        doses.push(range.lower());
        doses.push(range.upper());
        for d in doses {
            let v = mean.value(d);
            // Michaelis-Menten curves vanish at d = 0; the information has a
            // continuous limit there.
            let zero_ok = mean.is_michaelis_menten() && d == 0.0;
            let bad = match family {
                DrugFamily::Normal { .. } => false,
                DrugFamily::NegativeBinomial { .. } | DrugFamily::Binomial => {
                    v >= 1.0 || v < 0.0 || (v == 0.0 && !zero_ok)
                }
                DrugFamily::Poisson => v < 0.0 || (v == 0.0 && !zero_ok),
            };
            if bad {
                let what = match family {
                    DrugFamily::Poisson => "a positive rate",
                    _ => "a probability in (0, 1)",
                };
                return Err(Error::InvalidParameter(format!(
                    "mean function value {v} at dose {d} is not {what}"
                )));
            }
        }
        Ok(Self { family, mean, range })
    }

    pub fn family(&self) -> DrugFamily {
        self.family
    }

    pub fn mean_function(&self) -> MeanFunction {
        self.mean
    }

    pub fn range(&self) -> DoseRange {
        self.range
    }

    pub fn mean_param_count(&self) -> usize {
        self.mean.param_count()
    }

    /// `s₁`: curve parameters plus the variance for the normal family.
    pub fn param_count(&self) -> usize {
        match self.family {
            DrugFamily::Normal { .. } => self.mean.param_count() + 1,
            _ => self.mean.param_count(),
        }
    }

    /// Same model with a new `θ₁` (curve parameters, then the variance for
    /// the normal family). Used by finite-difference checks.
    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        let k = self.mean.param_count();
        let mean = self.mean.with_parameters(&theta[..k]);
        let family = match self.family {
            DrugFamily::Normal { .. } => DrugFamily::Normal { variance: theta[k] },
            f => f,
        };
        DrugModel::new(family, mean, self.range)
    }

    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.mean.parameters();
        if let DrugFamily::Normal { variance } = self.family {
            t.push(variance);
        }
        t
    }

    /// `η(d, θ₁)`: the mean for the normal family, `π` for the binomial and
    /// negative binomial families, the rate `λ` for Poisson.
    pub fn mean(&self, dose: f64) -> Result<f64> {
        self.range.check(dose)?;
        Ok(self.mean.value(dose))
    }

    /// `∂η/∂ϑ` over the curve parameters.
    pub fn mean_grad(&self, dose: f64) -> Result<DVector<f64>> {
        self.range.check(dose)?;
        Ok(self.mean.gradient(dose))
    }

    /// Vector `f(d)` with `f fᵀ` equal to the curve block of `I₁(d, θ₁)`.
    ///
    /// For Michaelis-Menten curves the gradient factors as
    /// `d/(ϑ₂+d) · (1, −ϑ₁/(ϑ₂+d))`, which gives closed forms that stay finite
    /// at `d = 0` where `π` or `λ` vanish.
    pub fn elfving_vector(&self, dose: f64) -> Result<DVector<f64>> {
        self.range.check(dose)?;
        let m = &self.mean;
        let p = m.value(dose);
        if let MeanFunction::MichaelisMenten { emax, ed50 } = *m {
            let s = ed50 + dose;
            let u = DVector::from_row_slice(&[1.0, -emax / s]);
            let scale = match self.family {
                DrugFamily::Normal { variance } => dose / s / variance.sqrt(),
                DrugFamily::NegativeBinomial { failures } => {
                    (failures as f64).sqrt() / (emax.abs() * (1.0 - p).sqrt())
                }
                DrugFamily::Binomial => (dose / (emax * s * (1.0 - p))).sqrt(),
                DrugFamily::Poisson => (dose / (emax * s)).sqrt(),
            };
            return Ok(u * scale);
        }
        let weight = match self.family {
            DrugFamily::Normal { variance } => 1.0 / variance,
            DrugFamily::NegativeBinomial { failures } => failures as f64 / (p * p * (1.0 - p)),
            DrugFamily::Binomial => 1.0 / (p * (1.0 - p)),
            DrugFamily::Poisson => 1.0 / p,
        };
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::SingularInformation {
                dose,
                reason: format!("mean value {p} sits on the boundary of the parameter space"),
            });
        }
        Ok(m.gradient(dose) * weight.sqrt())
    }

    /// Factor `B` with `I₁(d, θ₁) = B Bᵀ` (columns: Elfving vector, then the
    /// variance direction for the normal family).
    pub fn information_factor(&self, dose: f64) -> Result<DMatrix<f64>> {
        let f = self.elfving_vector(dose)?;
        let s1 = self.param_count();
        let k = f.len();
        match self.family {
            DrugFamily::Normal { variance } => {
                let mut b = DMatrix::zeros(s1, 2);
                b.view_mut((0, 0), (k, 1)).copy_from(&f);
                b[(k, 1)] = 1.0 / (2f64.sqrt() * variance);
                Ok(b)
            }
            _ => Ok(DMatrix::from_column_slice(k, 1, f.as_slice())),
        }
    }

    /// Per-observation Fisher information `I₁(d, θ₁)` (s₁ × s₁).
    pub fn fisher(&self, dose: f64) -> Result<DMatrix<f64>> {
        let f = self.elfving_vector(dose)?;
        let curve = &f * f.transpose();
        match self.family {
            DrugFamily::Normal { variance } => Ok(block_diag(
                &curve,
                &DMatrix::from_element(1, 1, 1.0 / (2.0 * variance * variance)),
            )),
            _ => Ok(curve),
        }
    }

    /// Expected response on the requested scale.
    pub fn response(&self, dose: f64, scale: ResponseScale) -> f64 {
        let p = self.mean.value(dose);
        match (self.family, scale) {
            (DrugFamily::NegativeBinomial { failures }, ResponseScale::Mean) => failures as f64 * (1.0 - p) / p,
            _ => p,
        }
    }

    /// `∂/∂d` of [`Self::response`].
    pub fn response_slope(&self, dose: f64, scale: ResponseScale) -> f64 {
        let slope = self.mean.dose_slope(dose);
        match (self.family, scale) {
            (DrugFamily::NegativeBinomial { failures }, ResponseScale::Mean) => {
                let p = self.mean.value(dose);
                -(failures as f64) / (p * p) * slope
            }
            _ => slope,
        }
    }

    /// `∂/∂θ₁` of [`Self::response`], length `s₁`; the variance entry of the
    /// normal family is zero.
    pub fn response_gradient(&self, dose: f64, scale: ResponseScale) -> DVector<f64> {
        let g = self.mean.gradient(dose);
        let g = match (self.family, scale) {
            (DrugFamily::NegativeBinomial { failures }, ResponseScale::Mean) => {
                let p = self.mean.value(dose);
                g * (-(failures as f64) / (p * p))
            }
            _ => g,
        };
        let mut out = DVector::zeros(self.param_count());
        out.rows_mut(0, g.len()).copy_from(&g);
        out
    }
}

/// Model for the active control arm. Houses `θ₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlModel {
    /// `θ₂ = (μ, σ₂²)`
    Normal { mean: f64, variance: f64 },
    /// `θ₂ = μ`, success probability; `r₂` known.
    NegativeBinomial { failures: u32, prob: f64 },
    /// `θ₂ = μ`, success probability.
    Binomial { prob: f64 },
    /// `θ₂ = μ`, rate.
    Poisson { rate: f64 },
}

impl ControlModel {
    pub fn normal(mean: f64, variance: f64) -> Result<Self> {
        ControlModel::Normal { mean, variance }.validated()
    }

    pub fn negative_binomial(failures: u32, prob: f64) -> Result<Self> {
        ControlModel::NegativeBinomial { failures, prob }.validated()
    }

    pub fn binomial(prob: f64) -> Result<Self> {
        ControlModel::Binomial { prob }.validated()
    }

    pub fn poisson(rate: f64) -> Result<Self> {
        ControlModel::Poisson { rate }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let ok = match self {
            ControlModel::Normal { mean, variance } => mean.is_finite() && variance > 0.0 && variance.is_finite(),
            ControlModel::NegativeBinomial { failures, prob } => failures > 0 && prob > 0.0 && prob < 1.0,
            ControlModel::Binomial { prob } => prob > 0.0 && prob < 1.0,
            ControlModel::Poisson { rate } => rate > 0.0 && rate.is_finite(),
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidParameter(format!("invalid control model {self:?}")))
        }
    }

    pub fn kind(&self) -> FamilyKind {
        match self {
            ControlModel::Normal { .. } => FamilyKind::Normal,
            ControlModel::NegativeBinomial { .. } => FamilyKind::NegativeBinomial,
            ControlModel::Binomial { .. } => FamilyKind::Binomial,
            ControlModel::Poisson { .. } => FamilyKind::Poisson,
        }
    }

    /// `s₂`
    pub fn param_count(&self) -> usize {
        match self {
            ControlModel::Normal { .. } => 2,
            _ => 1,
        }
    }

    pub fn theta(&self) -> Vec<f64> {
        match *self {
            ControlModel::Normal { mean, variance } => vec![mean, variance],
            ControlModel::NegativeBinomial { prob, .. } | ControlModel::Binomial { prob } => vec![prob],
            ControlModel::Poisson { rate } => vec![rate],
        }
    }

    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        match *self {
            ControlModel::Normal { .. } => ControlModel::normal(theta[0], theta[1]),
            ControlModel::NegativeBinomial { failures, .. } => ControlModel::negative_binomial(failures, theta[0]),
            ControlModel::Binomial { .. } => ControlModel::binomial(theta[0]),
            ControlModel::Poisson { .. } => ControlModel::poisson(theta[0]),
        }
    }

    /// Fisher information `I₂(θ₂)` (s₂ × s₂).
    pub fn fisher(&self) -> DMatrix<f64> {
        match *self {
            ControlModel::Normal { variance, .. } => {
                DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0 / variance, 1.0 / (2.0 * variance * variance)]))
            }
            ControlModel::NegativeBinomial { failures, prob } => {
                DMatrix::from_element(1, 1, failures as f64 / (prob * prob * (1.0 - prob)))
            }
            ControlModel::Binomial { prob } => DMatrix::from_element(1, 1, 1.0 / (prob * (1.0 - prob))),
            ControlModel::Poisson { rate } => DMatrix::from_element(1, 1, 1.0 / rate),
        }
    }

    /// Expected control response `Δ = k(θ₂)` on the requested scale.
    pub fn response(&self, scale: ResponseScale) -> f64 {
        match (*self, scale) {
            (ControlModel::NegativeBinomial { failures, prob }, ResponseScale::Mean) => {
                failures as f64 * (1.0 - prob) / prob
            }
            (c, _) => c.theta()[0],
        }
    }

    /// `∂k/∂θ₂` (length `s₂`).
    pub fn response_gradient(&self, scale: ResponseScale) -> DVector<f64> {
        match (*self, scale) {
            (ControlModel::Normal { .. }, _) => DVector::from_row_slice(&[1.0, 0.0]),
            (ControlModel::NegativeBinomial { failures, prob }, ResponseScale::Mean) => {
                DVector::from_element(1, -(failures as f64) / (prob * prob))
            }
            _ => DVector::from_element(1, 1.0),
        }
    }
}

/// A new drug together with its active control; both arms must use the same
/// response family.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialModel {
    pub drug: DrugModel,
    pub control: ControlModel,
}

impl TrialModel {
    pub fn new(drug: DrugModel, control: ControlModel) -> Result<Self> {
        if drug.family().kind() != control.kind() {
            return Err(Error::InvalidParameter(format!(
                "drug family {} does not match control family {}",
                drug.family().kind().name(),
                control.kind().name()
            )));
        }
        Ok(Self { drug, control })
    }

    pub fn kind(&self) -> FamilyKind {
        self.control.kind()
    }

    pub fn range(&self) -> DoseRange {
        self.drug.range()
    }

    pub fn s1(&self) -> usize {
        self.drug.param_count()
    }

    pub fn s2(&self) -> usize {
        self.control.param_count()
    }

    /// Scale on which "same treatment effect" is judged: expected counts for
    /// the negative binomial family, the natural parameter otherwise.
    pub fn comparison_scale(&self) -> ResponseScale {
        ResponseScale::Mean
    }

    /// Smallest dose whose expected response equals the control's, `d* = η⁻¹(Δ)`.
    pub fn target_dose(&self) -> Result<f64> {
        self.target_dose_on(self.comparison_scale())
    }

    pub fn target_dose_on(&self, scale: ResponseScale) -> Result<f64> {
        let range = self.range();
        let mean = self.drug.mean_function();
        // On the mean scale the negative binomial equation
        // r₁(1−π)/π = r₂(1−μ)/μ is solved for π first.
        let target = match (self.drug.family(), self.control, scale) {
            (
                DrugFamily::NegativeBinomial { failures: r1 },
                ControlModel::NegativeBinomial { failures: r2, prob },
                ResponseScale::Mean,
            ) => {
                let (r1, r2) = (r1 as f64, r2 as f64);
                r1 * prob / (r1 * prob + r2 * (1.0 - prob))
            }
            (_, c, _) => c.theta()[0],
        };
        let a = mean.value(range.lower());
        let b = mean.value(range.upper());
        let (low, high) = (a.min(b), a.max(b));
        let slack = 1e-12 * (1.0 + target.abs());
        if !(target >= low - slack && target <= high + slack) {
            return Err(Error::NoTargetDose { target, low, high });
        }
        if mean.max_effect() == 0.0 {
            return Err(Error::DegenerateGradient { dose: range.lower() });
        }
        let tol = 1e-10 * range.width();
        if let Some(d) = mean.inverse(target) {
            if d >= range.lower() - tol && d <= range.upper() + tol {
                return Ok(d.clamp(range.lower(), range.upper()));
            }
        }
        let increasing = b > a;
        Ok(crate::scalar::bisect(
            |d| {
                let v = mean.value(d) - target;
                if increasing {
                    v
                } else {
                    -v
                }
            },
            range.lower(),
            range.upper(),
            tol,
        ))
    }

    /// `(∂d*/∂θ₁, ∂d*/∂θ₂)` by the implicit function theorem, on the
    /// comparison scale. Variance components get exact zeros.
    pub fn target_dose_grad(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        self.target_dose_grad_on(self.comparison_scale())
    }

    pub fn target_dose_grad_on(&self, scale: ResponseScale) -> Result<(DVector<f64>, DVector<f64>)> {
        let d = self.target_dose_on(scale)?;
        let slope = self.drug.response_slope(d, scale);
        let response = self.drug.response(d, scale);
        if !(slope.abs() > 1e-14 * (1.0 + response.abs())) || !slope.is_finite() {
            return Err(Error::DegenerateGradient { dose: d });
        }
        let g2 = self.control.response_gradient(scale) / slope;
        let g1 = -self.drug.response_gradient(d, scale) / slope;
        Ok((g1, g2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm(emax: f64, ed50: f64) -> MeanFunction {
        MeanFunction::michaelis_menten(emax, ed50).unwrap()
    }

    fn range(l: f64, r: f64) -> DoseRange {
        DoseRange::new(l, r).unwrap()
    }

    #[test]
    fn mean_examples() {
        let gout = MeanFunction::emax(0.26, 0.73, 10.5).unwrap();
        assert_eq!(gout.value(0.0), 0.26);
        assert_eq!(mm(0.5, 2.0).value(2.0), 0.25);
        // 0.26 + 0.73 d/(10.5 + d) = 0.9206 at d = 10.5·0.6606/0.0694
        let d = 10.5 * 0.6606 / (0.73 - 0.6606);
        assert!((gout.value(d) - 0.9206).abs() < 1e-12);
        assert!((d - 99.95).abs() < 0.01);
    }

    #[test]
    fn gradient_examples() {
        let g = mm(0.7, 3.0).gradient(0.0);
        assert_eq!(g.as_slice(), &[0.0, 0.0]);
        let g = mm(0.5, 2.0).gradient(2.0);
        assert!((g[0] - 0.5).abs() < 1e-15 && (g[1] + 0.0625).abs() < 1e-15);
        // −ϑ₁d/(ϑ₂+d)² = −1/16
        let g = MeanFunction::emax(0.26, 0.73, 10.5).unwrap().gradient(10.5);
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert!((g[1] - 0.5).abs() < 1e-15);
        assert!((g[2] + 0.73 / 42.0).abs() < 1e-15);
    }

    #[test]
    fn dose_outside_range_is_rejected() {
        let drug = DrugModel::new(DrugFamily::Poisson, mm(1.0, 2.0), range(0.0, 10.0)).unwrap();
        assert!(matches!(drug.mean(11.0), Err(Error::DoseOutOfRange { .. })));
        assert!(matches!(drug.fisher(-1.0), Err(Error::DoseOutOfRange { .. })));
    }

    #[test]
    fn fisher_examples() {
        let pois = DrugModel::new(DrugFamily::Poisson, mm(0.5, 2.0), range(0.0, 50.0)).unwrap();
        assert_eq!(pois.fisher(0.0).unwrap(), DMatrix::zeros(2, 2));

        let normal = DrugModel::new(DrugFamily::Normal { variance: 1.0 }, mm(0.5, 2.0), range(0.0, 50.0)).unwrap();
        let i = normal.fisher(2.0).unwrap();
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[0.25, -0.03125, 0.0, -0.03125, 0.00390625, 0.0, 0.0, 0.0, 0.5],
        );
        assert!((i - expected).abs().max() < 1e-15);

        let bin = DrugModel::new(DrugFamily::Binomial, mm(0.5, 2.0), range(0.0, 50.0)).unwrap();
        let i = bin.fisher(2.0).unwrap();
        assert!((i[(0, 0)] - 0.25 / 0.1875).abs() < 1e-12);
        let g = mm(0.5, 2.0).gradient(2.0);
        assert!((i - &g * g.transpose() / 0.1875).abs().max() < 1e-12);
    }

    #[test]
    fn negative_binomial_limit_at_zero() {
        let (a, b, r) = (0.6, 1.5, 4u32);
        let nb = DrugModel::new(DrugFamily::NegativeBinomial { failures: r }, mm(a, b), range(0.0, 20.0)).unwrap();
        let i0 = nb.fisher(0.0).unwrap();
        let c = r as f64 / (a * a * b * b);
        let expected = DMatrix::from_row_slice(2, 2, &[b * b, -a * b, -a * b, a * a]) * c;
        assert!((&i0 - &expected).abs().max() < 1e-12);
        // continuity
        let i_small = nb.fisher(1e-9).unwrap();
        assert!((i_small - expected).abs().max() < 1e-6);
    }

    #[test]
    fn control_fisher_examples() {
        assert_eq!(ControlModel::binomial(0.5).unwrap().fisher()[(0, 0)], 4.0);
        let p = ControlModel::poisson(0.9206).unwrap().fisher()[(0, 0)];
        assert!((p - 1.0 / 0.9206).abs() < 1e-15);
        assert!((p - 1.08625).abs() < 1e-5);
        let nb = ControlModel::negative_binomial(10, 0.9206).unwrap().fisher()[(0, 0)];
        assert!((nb - 10.0 / (0.9206 * 0.9206 * 0.0794)).abs() < 1e-9);
        assert!((nb - 148.6).abs() < 0.05);
        let n = ControlModel::normal(1.0, 0.25).unwrap().fisher();
        assert_eq!(n[(0, 0)], 4.0);
        assert_eq!(n[(1, 1)], 8.0);
        assert_eq!(n[(0, 1)], 0.0);
    }

    #[test]
    fn validation() {
        // ϑ₁R/(ϑ₂+R) ≥ 1 is not a probability
        assert!(DrugModel::new(DrugFamily::Binomial, mm(1.2, 2.0), range(0.0, 50.0)).is_err());
        assert!(DrugModel::new(DrugFamily::NegativeBinomial { failures: 3 }, mm(1.1, 2.0), range(0.0, 50.0)).is_err());
        assert!(DrugModel::new(DrugFamily::Normal { variance: 0.0 }, mm(1.0, 2.0), range(0.0, 5.0)).is_err());
        assert!(DrugModel::new(DrugFamily::Poisson, MeanFunction::emax(0.0, 1.0, 2.0).unwrap(), range(0.0, 5.0)).is_err());
        assert!(MeanFunction::michaelis_menten(1.0, 0.0).is_err());
        assert!(DoseRange::new(3.0, 3.0).is_err());
        assert!(ControlModel::binomial(1.0).is_err());
        let d = DrugModel::new(DrugFamily::Binomial, mm(0.5, 2.0), range(0.0, 50.0)).unwrap();
        assert!(TrialModel::new(d, ControlModel::poisson(0.4).unwrap()).is_err());
    }

    fn trial(family: DrugFamily, mean: MeanFunction, r: DoseRange, control: ControlModel) -> TrialModel {
        TrialModel::new(DrugModel::new(family, mean, r).unwrap(), control).unwrap()
    }

    #[test]
    fn target_dose_examples() {
        let gout = trial(
            DrugFamily::Binomial,
            MeanFunction::emax(0.26, 0.73, 10.5).unwrap(),
            range(0.0, 300.0),
            ControlModel::binomial(0.9206).unwrap(),
        );
        assert!((gout.target_dose().unwrap() - 100.0).abs() < 0.1);
        let migraine = trial(
            DrugFamily::Binomial,
            MeanFunction::emax(0.098, 0.2052, 12.3).unwrap(),
            range(0.0, 200.0),
            ControlModel::binomial(0.2505).unwrap(),
        );
        assert!((migraine.target_dose().unwrap() - 35.6).abs() < 0.1);
        let half = trial(DrugFamily::Poisson, mm(0.8, 3.0), range(0.0, 10.0), ControlModel::poisson(0.4).unwrap());
        assert!((half.target_dose().unwrap() - 3.0).abs() < 1e-12);
        let none = trial(DrugFamily::Poisson, mm(0.8, 3.0), range(0.0, 10.0), ControlModel::poisson(0.9).unwrap());
        assert!(matches!(none.target_dose(), Err(Error::NoTargetDose { .. })));
    }

    #[test]
    fn negative_binomial_scales_agree_with_equal_failures() {
        let t = trial(
            DrugFamily::NegativeBinomial { failures: 10 },
            MeanFunction::emax(0.26, 0.73, 10.5).unwrap(),
            range(0.0, 300.0),
            ControlModel::negative_binomial(10, 0.9206).unwrap(),
        );
        let a = t.target_dose_on(ResponseScale::Mean).unwrap();
        let b = t.target_dose_on(ResponseScale::Parameter).unwrap();
        assert!((a - b).abs() < 1e-9);
        let (g1m, g2m) = t.target_dose_grad_on(ResponseScale::Mean).unwrap();
        let (g1p, g2p) = t.target_dose_grad_on(ResponseScale::Parameter).unwrap();
        assert!((g1m - g1p).abs().max() < 1e-9);
        assert!((g2m - g2p).abs().max() < 1e-9);
    }

    #[test]
    fn target_dose_gradient_examples() {
        let t = trial(
            DrugFamily::Binomial,
            MeanFunction::emax(0.26, 0.73, 10.5).unwrap(),
            range(0.0, 300.0),
            ControlModel::binomial(0.9206).unwrap(),
        );
        let d = t.target_dose().unwrap();
        let (_, g2) = t.target_dose_grad().unwrap();
        let h = 1e-6;
        let up = t.control.with_theta(&[0.9206 + h]).unwrap();
        let dn = t.control.with_theta(&[0.9206 - h]).unwrap();
        let fd = (TrialModel::new(t.drug.clone(), up).unwrap().target_dose().unwrap()
            - TrialModel::new(t.drug.clone(), dn).unwrap().target_dose().unwrap())
            / (2.0 * h);
        let analytic = 1.0 / t.drug.mean_function().dose_slope(d);
        assert!((g2[0] - analytic).abs() < 1e-12 * analytic);
        assert!((fd - analytic).abs() < 1e-5 * analytic);

        let n = trial(
            DrugFamily::Normal { variance: 0.01 },
            mm(0.5, 2.0),
            range(0.0, 50.0),
            ControlModel::normal(0.25, 0.02).unwrap(),
        );
        let (g1, g2) = n.target_dose_grad().unwrap();
        assert_eq!(g1[2], 0.0);
        assert_eq!(g2[1], 0.0);
        assert!(g1[1] > 0.0);
        // −(∂η/∂ϑ₂)/η'(2) = (0.5·2/16)/(0.5·2/16) = 1
        assert!((g1[1] - 1.0).abs() < 1e-12);
    }
}
