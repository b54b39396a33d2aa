//! c-optimal designs for two-parameter Michaelis-Menten curves via the
//! Elfving set `conv(C ∪ −C)`, `C = {f(d) : d ∈ [L, R]}`.
//!
//! For `c̃ = ∂η/∂ϑ` at a dose `d*` the line through `c̃` either meets the
//! boundary of the Elfving set on the curve itself (a one-point design at
//! `d*`) or on a segment between two curve points, whose location depends on
//! the response family.

use nalgebra::{DVector, Matrix2, Vector2};

use crate::design::InducedDesign;
use crate::error::{Error, Result};
use crate::model::{DrugFamily, DrugModel, MeanFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElfvingCase {
    /// All mass at `d*`.
    OnePoint,
    /// `d*` lies left of the threshold `x*`: support `{x*, R}`.
    LeftThreshold,
    /// `d*` lies right of the threshold `x₂*`: support `{x₂*, R}`.
    RightThreshold,
    /// Support `{L, R}` regardless of `d*`.
    TwoEndpoint,
}

impl ElfvingCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            ElfvingCase::OnePoint => "one-point",
            ElfvingCase::LeftThreshold => "left-threshold",
            ElfvingCase::RightThreshold => "right-threshold",
            ElfvingCase::TwoEndpoint => "two-endpoint",
        }
    }
}

/// c-optimal drug-only design with its Elfving representation
/// `γ c̃ = Σ εᵢ w̃ᵢ f(dᵢ)`.
#[derive(Debug, Clone)]
pub struct ElfvingSolution {
    pub doses: Vec<f64>,
    pub weights: Vec<f64>,
    pub gamma: f64,
    pub signs: Vec<f64>,
    pub case: ElfvingCase,
    /// `δ = c̃ᵀM₁⁻c̃ = 1/γ²`
    pub delta: f64,
    /// Dose at which `c̃` is the mean gradient.
    pub target: f64,
}

impl ElfvingSolution {
    pub fn induced(&self) -> Result<InducedDesign> {
        InducedDesign::new(self.doses.clone(), self.weights.clone())
    }
}

/// `v(d)·d`, the scale of `f(d)` relative to `(1, −ϑ₁/(ϑ₂+d))/(ϑ₂+d)`.
fn radial(drug: &DrugModel, d: f64) -> Result<f64> {
    let (a, b) = mm(drug)?;
    let f = drug.elfving_vector(d)?;
    let u = Vector2::new(1.0, -a / (b + d));
    Ok(Vector2::new(f[0], f[1]).norm() / u.norm() * (b + d))
}

fn mm(drug: &DrugModel) -> Result<(f64, f64)> {
    match drug.mean_function() {
        MeanFunction::MichaelisMenten { emax, ed50 } => Ok((emax, ed50)),
        _ => Err(Error::Unsupported(
            "the Elfving construction needs a two-parameter Michaelis-Menten curve".into(),
        )),
    }
}

/// c-optimal design for `c̃ ∝ ∂η/∂ϑ(d*)` under a Michaelis-Menten curve.
///
/// `c` has the two curve components; a third, zero, variance component is
/// accepted for the normal family.
pub fn c_opt_elfving_2d(drug: &DrugModel, c: &DVector<f64>) -> Result<ElfvingSolution> {
    let (a, b) = mm(drug)?;
    let c = match c.len() {
        2 => Vector2::new(c[0], c[1]),
        3 if matches!(drug.family(), DrugFamily::Normal { .. }) && c[2] == 0.0 => Vector2::new(c[0], c[1]),
        n => return Err(Error::DimensionMismatch { expected: 2, found: n }),
    };
    if c[1] == 0.0 || c[0] == 0.0 {
        return Err(Error::InfeasibleGeometry("c is not a mean gradient at a finite dose".into()));
    }
    let target = -a * c[0] / c[1] - b;
    let range = drug.range();
    let (l, r) = (range.lower(), range.upper());
    let slack = 1e-12 * (1.0 + r);
    if !(target >= l - slack && target <= r + slack) {
        return Err(Error::DoseOutOfRange {
            dose: target,
            lower: l,
            upper: r,
        });
    }
    let target = target.clamp(l, r);

    // support and the segment end used by the closed-form weight
    let (case, doses) = match drug.family() {
        DrugFamily::Normal { .. } => {
            let x = l.max(
                (2f64.sqrt() * r * r * b + (2f64.sqrt() - 1.0) * r * b * b) / (2.0 * r * r + 4.0 * r * b + b * b),
            );
            threshold_case(target, x, r)
        }
        DrugFamily::Poisson => threshold_case(target, l.max(r * b / (3.0 * r + 4.0 * b)), r),
        DrugFamily::NegativeBinomial { .. } => (ElfvingCase::TwoEndpoint, vec![l, r]),
        DrugFamily::Binomial => {
            let s = (1.0 - drug.mean(r)?).sqrt();
            let x1 = l.max(b * (1.0 - s) / (2.0 * a - 1.0 + s));
            let den = 2.0 * a - 1.0 - s;
            let x2 = if den <= 0.0 { r } else { r.min(b * (1.0 + s) / den) };
            if target < x1 {
                (ElfvingCase::LeftThreshold, vec![x1, r])
            } else if target > x2 && x2 < r {
                (ElfvingCase::RightThreshold, vec![x2, r])
            } else {
                (ElfvingCase::OnePoint, vec![target])
            }
        }
    };

    let fs: Vec<Vector2<f64>> = doses
        .iter()
        .map(|&d| drug.elfving_vector(d).map(|f| Vector2::new(f[0], f[1])))
        .collect::<Result<_>>()?;
    let coef: Vec<f64> = if fs.len() == 1 {
        let f = fs[0];
        let k = f.dot(&c) / f.norm_squared();
        if (f * k - c).norm() > 1e-8 * c.norm() {
            return Err(Error::Consistency("c is not parallel to f(d*)".into()));
        }
        vec![k]
    } else {
        let m = Matrix2::from_columns(&[fs[0], fs[1]]);
        let sol = m
            .lu()
            .solve(&c)
            .ok_or_else(|| Error::InfeasibleGeometry("support vectors are parallel".into()))?;
        vec![sol[0], sol[1]]
    };
    let total: f64 = coef.iter().map(|v| v.abs()).sum();
    let weights: Vec<f64> = coef.iter().map(|v| v.abs() / total).collect();
    let signs: Vec<f64> = coef.iter().map(|v| v.signum()).collect();
    let gamma = 1.0 / total;

    if doses.len() == 2 {
        let closed = closed_form_weight(drug, b, target, doses[0], r)?;
        if (closed - weights[0]).abs() > 1e-8 {
            return Err(Error::Consistency(format!(
                "closed-form weight {closed} disagrees with the Elfving representation {}",
                weights[0]
            )));
        }
    }

    Ok(ElfvingSolution {
        doses,
        weights,
        gamma,
        signs,
        case,
        delta: total * total,
        target,
    })
}

fn threshold_case(target: f64, x: f64, r: f64) -> (ElfvingCase, Vec<f64>) {
    if target >= x {
        (ElfvingCase::OnePoint, vec![target])
    } else {
        (ElfvingCase::LeftThreshold, vec![x, r])
    }
}

/// Weight of the lower support point `x` of `{x, R}`:
/// `h(R)|R−d*|(ϑ₂+x)² / (h(R)|R−d*|(ϑ₂+x)² + h(x)|d*−x|(ϑ₂+R)²)`.
fn closed_form_weight(drug: &DrugModel, b: f64, target: f64, x: f64, r: f64) -> Result<f64> {
    let hr = radial(drug, r)?;
    let hx = radial(drug, x)?;
    let num = hr * (r - target).abs() * (b + x).powi(2);
    Ok(num / (num + hx * (target - x).abs() * (b + r).powi(2)))
}
