//! Approximate designs on the joint space `(𝒟 × {0}) ∪ {(C, 1)}`, their
//! information matrices and rounding to patient counts.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{block_diag, SymDecomposition};
use crate::model::{DrugModel, TrialModel};

/// A point of the joint design space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    /// New drug at the given dose (`κ = 0`).
    Drug(f64),
    /// Active control at its fixed dose `C` (`κ = 1`).
    Control,
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Drug(d) => write!(f, "({d}, 0)"),
            Point::Control => f.write_str("(C, 1)"),
        }
    }
}

const SUM_TOLERANCE: f64 = 1e-12;

/// Probability measure with finite support on the joint design space.
///
/// Drug points keep the order they were given in; the control weight is
/// zero when the design has no control point.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    doses: Vec<f64>,
    weights: Vec<f64>,
    control: f64,
}

impl Design {
    pub fn new(points: &[(Point, f64)]) -> Result<Self> {
        let mut doses = Vec::new();
        let mut weights = Vec::new();
        let mut control = None;
        for &(p, w) in points {
            match p {
                Point::Drug(d) => {
                    doses.push(d);
                    weights.push(w);
                }
                Point::Control if control.is_some() => {
                    return Err(Error::InvalidDesign("more than one control point".into()));
                }
                Point::Control => {
                    if !(w > 0.0) {
                        return Err(Error::InvalidDesign(format!("control weight {w} must be positive")));
                    }
                    control = Some(w);
                }
            }
        }
        Self::from_parts(doses, weights, control.unwrap_or(0.0))
    }

    /// Drug doses with their joint weights plus a control weight (zero for no
    /// control point).
    pub fn from_parts(doses: Vec<f64>, weights: Vec<f64>, control: f64) -> Result<Self> {
        if doses.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: doses.len(),
                found: weights.len(),
            });
        }
        if doses.is_empty() && control == 0.0 {
            return Err(Error::InvalidDesign("design has no support points".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidDesign(format!("weight {w} must be positive")));
        }
        if !(control >= 0.0 && control.is_finite()) {
            return Err(Error::InvalidDesign(format!("control weight {control} must be non-negative")));
        }
        if let Some(d) = doses.iter().find(|d| !d.is_finite()) {
            return Err(Error::InvalidDesign(format!("dose {d} is not finite")));
        }
        for i in 0..doses.len() {
            for j in 0..i {
                if doses[i] == doses[j] {
                    return Err(Error::InvalidDesign(format!("dose {} appears twice", doses[i])));
                }
            }
        }
        let total: f64 = weights.iter().sum::<f64>() + control;
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDesign(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { doses, weights, control })
    }

    /// Joint design with drug part `induced` and control weight `control`.
    pub fn compose(induced: &InducedDesign, control: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&control) {
            return Err(Error::InvalidDesign(format!("control weight {control} must lie in [0, 1)")));
        }
        let weights: Vec<f64> = induced.weights.iter().map(|w| w * (1.0 - control)).collect();
        // absorb rounding so the weights sum to one exactly
        let mut design = Self {
            doses: induced.doses.clone(),
            weights,
            control,
        };
        design.fix_sum();
        Ok(design)
    }

    /// Design whose weights are rescaled to sum to one (used for input read
    /// from text, where weights carry only a few digits).
    pub fn normalized(points: &[(Point, f64)]) -> Result<Self> {
        let total: f64 = points.iter().map(|(_, w)| *w).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidDesign("weights sum to zero".into()));
        }
        let scaled: Vec<(Point, f64)> = points.iter().map(|&(p, w)| (p, w / total)).collect();
        let mut fixed = scaled.clone();
        let s: f64 = scaled.iter().map(|(_, w)| *w).sum();
        if let Some(last) = fixed.last_mut() {
            last.1 += 1.0 - s;
        }
        Self::new(&fixed)
    }

    fn fix_sum(&mut self) {
        let total: f64 = self.weights.iter().sum::<f64>() + self.control;
        let err = 1.0 - total;
        if self.control > 0.0 {
            self.control += err;
        } else if let Some(w) = self.weights.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *w += err;
        }
    }

    pub fn doses(&self) -> &[f64] {
        &self.doses
    }

    /// Joint weights of the drug points.
    pub fn drug_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn control_weight(&self) -> f64 {
        self.control
    }

    pub fn has_control(&self) -> bool {
        self.control > 0.0
    }

    pub fn support_size(&self) -> usize {
        self.doses.len() + usize::from(self.has_control())
    }

    /// Support points with weights, drug points first.
    pub fn points(&self) -> Vec<(Point, f64)> {
        let mut out: Vec<(Point, f64)> = self
            .doses
            .iter()
            .zip(&self.weights)
            .map(|(&d, &w)| (Point::Drug(d), w))
            .collect();
        if self.has_control() {
            out.push((Point::Control, self.control));
        }
        out
    }

    /// The drug part `ξ̃` with weights `wᵢ / (1 − w_{k+1})`.
    pub fn induced(&self) -> Result<InducedDesign> {
        if self.doses.is_empty() {
            return Err(Error::InvalidDesign("design has no drug points".into()));
        }
        let total: f64 = self.weights.iter().sum();
        let weights = self.weights.iter().map(|w| w / total).collect();
        Ok(InducedDesign {
            doses: self.doses.clone(),
            weights,
        })
    }

    /// Sorts drug points by dose and merges doses closer than `radius`
    /// (weight-averaged location, summed weight).
    pub fn merged(&self, radius: f64) -> Design {
        let mut pairs: Vec<(f64, f64)> = self.doses.iter().copied().zip(self.weights.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (d, w) in pairs {
            match out.last_mut() {
                Some(last) if d - last.0 <= radius => {
                    let total = last.1 + w;
                    last.0 = (last.0 * last.1 + d * w) / total;
                    last.1 = total;
                }
                _ => out.push((d, w)),
            }
        }
        Design {
            doses: out.iter().map(|p| p.0).collect(),
            weights: out.iter().map(|p| p.1).collect(),
            control: self.control,
        }
    }

    /// Rounds the design to `n` patients; counts follow [`Self::points`].
    pub fn round(&self, n: usize) -> Result<Vec<(Point, usize)>> {
        let points = self.points();
        let weights: Vec<f64> = points.iter().map(|p| p.1).collect();
        let counts = round_weights(&weights, n)?;
        Ok(points.into_iter().map(|p| p.0).zip(counts).collect())
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.points().iter().map(|(p, w)| format!("{p}: {w:.4}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Design `ξ̃` on the dose range of the new drug only.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedDesign {
    doses: Vec<f64>,
    weights: Vec<f64>,
}

impl InducedDesign {
    pub fn new(doses: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let design = Design::from_parts(doses, weights, 0.0)?;
        if design.doses.is_empty() {
            return Err(Error::InvalidDesign("induced design has no doses".into()));
        }
        Ok(Self {
            doses: design.doses,
            weights: design.weights,
        })
    }

    /// Equal weights on the given doses.
    pub fn uniform(doses: Vec<f64>) -> Result<Self> {
        let n = doses.len();
        let mut weights = vec![1.0 / n as f64; n];
        if let Some(w) = weights.last_mut() {
            *w = 1.0 - (n - 1) as f64 / n as f64;
        }
        Self::new(doses, weights)
    }

    pub fn doses(&self) -> &[f64] {
        &self.doses
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Symmetric information matrix together with its numerical rank.
#[derive(Debug, Clone)]
pub struct InfoMatrix {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    pub tolerance: f64,
    decomposition: SymDecomposition,
}

impl InfoMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let decomposition = SymDecomposition::new(&matrix);
        Self {
            matrix,
            rank: decomposition.rank(),
            tolerance: decomposition.tolerance,
            decomposition,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        self.decomposition.pseudo_inverse()
    }

    /// Orthonormal basis of the null space.
    pub fn null_space(&self) -> DMatrix<f64> {
        self.decomposition.null_space()
    }

    /// Whether `Kᵀθ` is estimable, i.e. every column of `k` is in the range.
    pub fn estimable(&self, k: &DMatrix<f64>) -> Result<bool> {
        crate::linalg::in_range(k, &self.matrix)
    }
}

/// `M₁(ξ̃, θ₁) = Σ w̃ᵢ I₁(dᵢ, θ₁)`
pub fn drug_information(induced: &InducedDesign, drug: &DrugModel) -> Result<DMatrix<f64>> {
    weighted_drug_information(&induced.doses, &induced.weights, drug)
}

pub(crate) fn weighted_drug_information(doses: &[f64], weights: &[f64], drug: &DrugModel) -> Result<DMatrix<f64>> {
    let s1 = drug.param_count();
    let mut m = DMatrix::zeros(s1, s1);
    for (&d, &w) in doses.iter().zip(weights) {
        m += drug.fisher(d)? * w;
    }
    Ok(m)
}

/// `M(ξ, θ) = diag((1 − w_{k+1}) M₁(ξ̃, θ₁), w_{k+1} I₂(θ₂))`
pub fn info_matrix(design: &Design, model: &TrialModel) -> Result<InfoMatrix> {
    let upper = weighted_drug_information(&design.doses, &design.weights, &model.drug)?;
    let lower = model.control.fisher() * design.control;
    Ok(InfoMatrix::new(block_diag(&upper, &lower)))
}

/// Efficient apportionment of `n` patients to the given weights.
///
/// Starts from `⌈(n − ℓ/2) wᵢ⌉` and then adds to the point with the smallest
/// `nᵢ/wᵢ` or removes from the point with the largest `(nᵢ − 1)/wᵢ` until the
/// counts sum to `n`. Ties go to the lowest index.
pub fn round_weights(weights: &[f64], n: usize) -> Result<Vec<usize>> {
    let l = weights.len();
    if n < l {
        return Err(Error::InvalidDesign(format!(
            "cannot allocate {n} patients to {l} support points"
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidDesign("rounding needs positive weights".into()));
    }
    let base = n as f64 - l as f64 / 2.0;
    let mut counts: Vec<usize> = weights.iter().map(|w| (base * w).ceil().max(0.0) as usize).collect();
    loop {
        let total: usize = counts.iter().sum();
        if total == n {
            return Ok(counts);
        }
        if total < n {
            let j = argmin(weights.iter().zip(&counts).map(|(w, &c)| c as f64 / w));
            counts[j] += 1;
        } else {
            let j = argmax(
                weights
                    .iter()
                    .zip(&counts)
                    .map(|(w, &c)| if c == 0 { f64::NEG_INFINITY } else { (c as f64 - 1.0) / w }),
            );
            counts[j] -= 1;
        }
    }
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ControlModel, DoseRange, DrugFamily, MeanFunction};

    #[test]
    fn induced_examples() {
        let d = Design::new(&[(Point::Drug(1.0), 0.3), (Point::Drug(5.0), 0.3), (Point::Control, 0.4)]).unwrap();
        let i = d.induced().unwrap();
        assert!((i.weights()[0] - 0.5).abs() < 1e-15 && (i.weights()[1] - 0.5).abs() < 1e-15);
        let one = Design::new(&[(Point::Drug(2.0), 1.0)]).unwrap();
        assert_eq!(one.induced().unwrap().weights(), &[1.0]);
        let q = Design::new(&[
            (Point::Drug(0.0), 0.25),
            (Point::Drug(1.0), 0.25),
            (Point::Drug(2.0), 0.25),
            (Point::Control, 0.25),
        ])
        .unwrap();
        for w in q.induced().unwrap().weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        let c = Design::new(&[(Point::Control, 1.0)]).unwrap();
        assert!(c.induced().is_err());
    }

    #[test]
    fn design_validation() {
        assert!(Design::new(&[(Point::Drug(1.0), 0.5), (Point::Drug(1.0), 0.5)]).is_err());
        assert!(Design::new(&[(Point::Drug(1.0), 0.5), (Point::Control, 0.25), (Point::Control, 0.25)]).is_err());
        assert!(Design::new(&[(Point::Drug(1.0), 0.6), (Point::Drug(2.0), 0.6)]).is_err());
        assert!(Design::new(&[(Point::Drug(1.0), 1.2), (Point::Drug(2.0), -0.2)]).is_err());
        assert!(Design::new(&[]).is_err());
    }

    fn poisson_model() -> TrialModel {
        let drug = DrugModel::new(
            DrugFamily::Poisson,
            MeanFunction::michaelis_menten(0.5, 2.0).unwrap(),
            DoseRange::new(0.0, 50.0).unwrap(),
        )
        .unwrap();
        TrialModel::new(drug, ControlModel::poisson(0.4).unwrap()).unwrap()
    }

    #[test]
    fn information_matrix_blocks() {
        let model = poisson_model();
        let d = Design::new(&[(Point::Drug(100.0 / 106.0), 0.5), (Point::Drug(50.0), 0.5)]).unwrap();
        let m = info_matrix(&d, &model).unwrap();
        assert_eq!(m.matrix[(2, 2)], 0.0);
        assert_eq!(m.matrix[(0, 2)], 0.0);
        let avg = (model.drug.fisher(100.0 / 106.0).unwrap() + model.drug.fisher(50.0).unwrap()) * 0.5;
        assert!((m.matrix.view((0, 0), (2, 2)) - avg).abs().max() < 1e-15);

        let d = Design::new(&[(Point::Drug(1.0), 0.3), (Point::Drug(50.0), 0.3), (Point::Control, 0.4)]).unwrap();
        let m = info_matrix(&d, &model).unwrap();
        let m1 = drug_information(&d.induced().unwrap(), &model.drug).unwrap();
        assert!((m.matrix.view((0, 0), (2, 2)) - m1 * 0.6).abs().max() < 1e-15);
        assert!((m.matrix[(2, 2)] - 0.4 / 0.4).abs() < 1e-15);
    }

    #[test]
    fn estimability_of_one_point_design() {
        let model = poisson_model();
        let d = Design::new(&[(Point::Drug(3.0), 1.0)]).unwrap();
        let m = InfoMatrix::new(drug_information(&d.induced().unwrap(), &model.drug).unwrap());
        let f = model.drug.elfving_vector(3.0).unwrap();
        assert!(m.estimable(&DMatrix::from_column_slice(2, 1, f.as_slice())).unwrap());
        let orth = DMatrix::from_column_slice(2, 1, &[-f[1], f[0]]);
        assert!(!m.estimable(&orth).unwrap());
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(round_weights(&[2.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0, 1.0 / 3.0], 36).unwrap(), vec![8, 8, 8, 12]);
        assert_eq!(round_weights(&[1.0 / 3.0; 3], 100).unwrap(), vec![34, 33, 33]);
        assert_eq!(round_weights(&[0.5, 0.5], 2).unwrap(), vec![1, 1]);
        assert!(round_weights(&[0.5, 0.5], 1).is_err());
    }

    #[test]
    fn merge_and_compose() {
        let d = Design::new(&[(Point::Drug(1.0), 0.2), (Point::Drug(1.0 + 1e-9), 0.2), (Point::Drug(0.5), 0.6)])
            .unwrap()
            .merged(1e-6);
        assert_eq!(d.doses().len(), 2);
        assert_eq!(d.doses()[0], 0.5);
        assert!((d.drug_weights()[1] - 0.4).abs() < 1e-15);
        let induced = InducedDesign::uniform(vec![0.0, 9.8, 300.0]).unwrap();
        let joint = Design::compose(&induced, 1.0 / 3.0).unwrap();
        let total: f64 = joint.drug_weights().iter().sum::<f64>() + joint.control_weight();
        assert_eq!(total, 1.0);
    }
}
