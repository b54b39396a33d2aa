//! Equivalence-theorem checks.
//!
//! For `φ_p` with `p > −∞` the sensitivity at a point `x` of the design space
//! is
//!
//! ```text
//! s(x) = tr(I(x) G K C^{−p−1} Kᵀ Gᵀ) − tr(C^{−p}),   C = KᵀM⁻K,
//! ```
//!
//! and a design is optimal iff `s ≤ 0` on the whole design space for *some*
//! generalized inverse `G` of `M`, with equality on the support. Values here
//! are divided by `tr(C^{−p})`, so they are scale free. For `p = −∞` the
//! middle factor is `C⁻¹ E C⁻¹` with `E = uuᵀ`, `u` the eigenvector of the
//! largest eigenvalue of `C`.
//!
//! When `M` is singular the choice of `G` matters off the support. [`verify`]
//! searches `GK = M⁺K + N Z` over null-space corrections `Z` by Kelley's
//! cutting-plane method, one small linear program per cut round.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::criteria::Criterion;
use crate::design::{info_matrix, Design, Point};
use crate::error::{ArmLabel, Error, Result};
use crate::linalg::symmetrize;
use crate::model::TrialModel;
use crate::scalar::golden_max;
use crate::text::format_sig;

/// Relative eigenvalue gap below which E-optimality is ambiguous.
const E_GAP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Optimal,
    NotOptimal,
    /// The generalized-inverse search could neither certify nor refute.
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Optimal => "optimal",
            Verdict::NotOptimal => "not-optimal",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub grid_size: usize,
    pub tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            grid_size: 512,
            tol: 1e-5,
        }
    }
}

/// Normalised sensitivity over the design space.
#[derive(Debug, Clone)]
pub struct SensitivityReport {
    pub grid_doses: Vec<f64>,
    pub grid_values: Vec<f64>,
    pub control_value: f64,
    /// Sensitivity at every support point.
    pub support_values: Vec<(Point, f64)>,
    /// Location and value of the largest sensitivity found.
    pub argmax: Point,
    pub max_violation: f64,
    pub support_residual: f64,
    /// Whether `G` was searched beyond the Moore-Penrose inverse.
    pub null_space_dim: usize,
    pub verdict: Verdict,
}

impl SensitivityReport {
    pub fn is_optimal(&self) -> bool {
        self.verdict == Verdict::Optimal
    }

    /// `dose,value` rows for the drug arm, 6 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dose,value\n");
        for (d, v) in self.grid_doses.iter().zip(&self.grid_values) {
            out.push_str(&format!("{},{}\n", format_sig(*d, 6), format_sig(*v, 6)));
        }
        out
    }
}

/// Sensitivity function `s̃(x) = tr(B(x)ᵀ H Â Hᵀ B(x)) − 1` with `H = GK`,
/// `Â = A / tr(C^{−p})` and `I(x) = B(x)B(x)ᵀ`.
#[derive(Debug, Clone)]
pub(crate) struct SensitivityFunction<'a> {
    model: &'a TrialModel,
    h0: DMatrix<f64>,
    a: DMatrix<f64>,
    null: DMatrix<f64>,
    control_factor: DMatrix<f64>,
}

impl<'a> SensitivityFunction<'a> {
    pub(crate) fn new(design: &Design, model: &'a TrialModel, k: &DMatrix<f64>, p: f64) -> Result<Self> {
        let m = info_matrix(design, model)?;
        if k.nrows() != m.dim() {
            return Err(Error::DimensionMismatch {
                expected: m.dim(),
                found: k.nrows(),
            });
        }
        if !m.estimable(k)? {
            return Err(Error::NotEstimable { arm: ArmLabel::Joint });
        }
        let pinv = m.pseudo_inverse();
        let h0 = &pinv * k;
        let c = symmetrize(&(k.transpose() * &h0));
        let a = normalised_weight_matrix(&c, p)?;
        let i2 = model.control.fisher();
        let l = Cholesky::new(i2.clone())
            .ok_or_else(|| Error::Consistency("control information is not positive definite".into()))?
            .l();
        Ok(Self {
            model,
            h0,
            a,
            null: m.null_space(),
            control_factor: l,
        })
    }

    pub(crate) fn null_dim(&self) -> usize {
        self.null.ncols()
    }

    fn factor(&self, point: Point) -> Result<DMatrix<f64>> {
        let s1 = self.model.s1();
        let s2 = self.model.s2();
        match point {
            Point::Drug(d) => {
                let b = self.model.drug.information_factor(d)?;
                let mut out = DMatrix::zeros(s1 + s2, b.ncols());
                out.view_mut((0, 0), (s1, b.ncols())).copy_from(&b);
                Ok(out)
            }
            Point::Control => {
                let mut out = DMatrix::zeros(s1 + s2, s2);
                out.view_mut((s1, 0), (s2, s2)).copy_from(&self.control_factor);
                Ok(out)
            }
        }
    }

    fn h(&self, z: &[f64]) -> DMatrix<f64> {
        if z.is_empty() {
            return self.h0.clone();
        }
        let zt = DMatrix::from_column_slice(self.null.ncols(), self.h0.ncols(), z);
        &self.h0 + &self.null * zt
    }

    fn value_with(&self, point: Point, h: &DMatrix<f64>) -> Result<f64> {
        let b = self.factor(point)?;
        let bh = b.transpose() * h;
        Ok((&bh * &self.a * bh.transpose()).trace() - 1.0)
    }

    /// Sensitivity with `G = M⁺`.
    pub(crate) fn value(&self, point: Point) -> Result<f64> {
        self.value_with(point, &self.h0)
    }

    /// Value and gradient in `Z` (column-major) at `z`.
    fn value_and_gradient(&self, point: Point, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let h = self.h(z);
        let b = self.factor(point)?;
        let bbt = &b * b.transpose();
        let v = (b.transpose() * &h * &self.a * h.transpose() * &b).trace() - 1.0;
        let g = self.null.transpose() * bbt * &h * &self.a * 2.0;
        Ok((v, g.as_slice().to_vec()))
    }
}

/// `A / tr(C^{−p})`, computed on `C / λ_max` to avoid overflow.
fn normalised_weight_matrix(c: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(c.clone());
    let n = eig.eigenvalues.len();
    let (imax, lmax) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    if !(lmax > 0.0) {
        return Err(Error::Consistency("KᵀM⁻K has no positive eigenvalue".into()));
    }
    if p == f64::NEG_INFINITY {
        if n > 1 {
            let second = eig
                .eigenvalues
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != imax)
                .fold(f64::NEG_INFINITY, |a, (_, &v)| a.max(v));
            if (lmax - second) / lmax < E_GAP {
                return Err(Error::Unsupported(
                    "E-optimality sensitivity with a repeated extreme eigenvalue".into(),
                ));
            }
        }
        let u = eig.eigenvectors.column(imax);
        return Ok(u * u.transpose() / lmax);
    }
    let scaled: Vec<f64> = eig.eigenvalues.iter().map(|v| v / lmax).collect();
    let denom: f64 = scaled.iter().map(|v| v.powf(-p)).sum();
    let mut a = DMatrix::zeros(n, n);
    for (j, v) in scaled.iter().enumerate() {
        let u = eig.eigenvectors.column(j);
        a += u * u.transpose() * (v.powf(-p - 1.0) / denom / lmax);
    }
    Ok(symmetrize(&a))
}

/// Normalised sensitivity at one point with `G = M⁺`: the left-hand side of
/// the equivalence inequality divided by `tr((KᵀM⁻K)^{−p})`.
pub fn sensitivity(design: &Design, model: &TrialModel, criterion: &Criterion, point: Point) -> Result<f64> {
    let (p, k) = criterion.resolve(model)?;
    SensitivityFunction::new(design, model, k.matrix(), p)?.value(point)
}

/// Kelley cutting planes for `min_Z max_x s̃(x; Z)` over a finite point set.
///
/// Returns `(Z, upper, lower)`: the best correction found, its maximum, and
/// the LP lower bound.
fn search_generalized_inverse(
    f: &SensitivityFunction,
    points: &[Point],
    tol: f64,
) -> Result<(Vec<f64>, f64, f64)> {
    let nvars = f.null.ncols() * f.h0.ncols();
    let eval_max = |z: &[f64]| -> Result<f64> {
        let h = f.h(z);
        let mut m = f64::NEG_INFINITY;
        for &x in points {
            m = m.max(f.value_with(x, &h)?);
        }
        Ok(m)
    };
    let mut z = vec![0.0; nvars];
    let mut best = (z.clone(), eval_max(&z)?);
    let mut lower = -1.0;
    if best.1 <= tol * 1e-2 {
        return Ok((best.0, best.1, lower));
    }
    let bound = 1e3 * (1.0 + crate::linalg::max_abs(&f.h0));
    let mut cuts: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for _round in 0..80 {
        // cuts at the current iterate for the most violated points
        let mut vals: Vec<(f64, Vec<f64>)> = Vec::with_capacity(points.len());
        for &x in points {
            vals.push(f.value_and_gradient(x, &z)?);
        }
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[b].0.total_cmp(&vals[a].0));
        for &i in order.iter().take(24) {
            cuts.push((vals[i].0, vals[i].1.clone(), z.clone()));
        }
        let mut lp = microlp::Problem::new(microlp::OptimizationDirection::Minimize);
        let tau = lp.add_var(1.0, (-1.0, f64::INFINITY));
        let vars: Vec<microlp::Variable> = (0..nvars).map(|_| lp.add_var(0.0, (-bound, bound))).collect();
        for (v, g, z0) in &cuts {
            // v + gᵀ(z − z0) ≤ τ
            let rhs = g.iter().zip(z0).map(|(a, b)| a * b).sum::<f64>() - v;
            let mut expr: Vec<(microlp::Variable, f64)> = vars.iter().copied().zip(g.iter().copied()).collect();
            expr.push((tau, -1.0));
            lp.add_constraint(expr, microlp::ComparisonOp::Le, rhs);
        }
        let solution = match lp.solve().map(|o| o.into_solution()) {
            Ok(Ok(s)) => s,
            _ => break,
        };
        lower = lower.max(solution.objective());
        z = vars.iter().map(|&v| solution[v]).collect();
        let upper = eval_max(&z)?;
        if upper < best.1 {
            best = (z.clone(), upper);
        }
        if best.1 <= tol * 1e-2 || lower > tol || best.1 - lower <= 1e-3 * tol {
            break;
        }
    }
    Ok((best.0, best.1, lower))
}

/// Checks optimality of `design` for `criterion` on a dose grid plus the
/// support, the endpoints and the control point, refining the largest local
/// maxima by golden-section search.
pub fn verify(design: &Design, model: &TrialModel, criterion: &Criterion, opts: VerifyOptions) -> Result<SensitivityReport> {
    if opts.grid_size < 2 {
        return Err(Error::InvalidParameter("grid size must be at least 2".into()));
    }
    let (p, k) = criterion.resolve(model)?;
    let f = SensitivityFunction::new(design, model, k.matrix(), p)?;
    let range = model.range();
    let grid = range.grid(opts.grid_size);
    let support: Vec<Point> = design.points().iter().map(|(pt, _)| *pt).collect();

    let mut points: Vec<Point> = grid.iter().map(|&d| Point::Drug(d)).collect();
    points.extend(support.iter().copied());
    points.push(Point::Control);

    let mut z = Vec::new();
    let mut lower = f64::NEG_INFINITY;
    let mut searched = false;
    let mut grid_values;
    let mut refined: Vec<(f64, f64)>;
    let mut round = 0;
    loop {
        if f.null_dim() > 0 {
            let (zz, _, lb) = search_generalized_inverse(&f, &points, opts.tol)?;
            z = zz;
            lower = lb;
            searched = true;
        }
        let h = f.h(&z);
        grid_values = grid
            .iter()
            .map(|&d| f.value_with(Point::Drug(d), &h))
            .collect::<Result<Vec<f64>>>()?;
        refined = refine_maxima(&f, &h, &grid, &grid_values, range.width())?;
        let worst = refined.iter().fold(f64::NEG_INFINITY, |a, r| a.max(r.1));
        round += 1;
        if !searched || worst <= opts.tol || round >= 4 {
            break;
        }
        let new: Vec<Point> = refined
            .iter()
            .filter(|r| r.1 > opts.tol)
            .map(|r| Point::Drug(r.0))
            .collect();
        if new.is_empty() {
            break;
        }
        points.extend(new);
    }

    let h = f.h(&z);
    let control_value = f.value_with(Point::Control, &h)?;
    let support_values: Vec<(Point, f64)> = support
        .iter()
        .map(|&pt| f.value_with(pt, &h).map(|v| (pt, v)))
        .collect::<Result<_>>()?;
    let support_residual = support_values.iter().fold(0.0_f64, |a, (_, v)| a.max(v.abs()));

    let mut argmax = Point::Control;
    let mut max_violation = control_value;
    let candidates = grid
        .iter()
        .copied()
        .zip(grid_values.iter().copied())
        .chain(refined.iter().copied())
        .chain(support_values.iter().filter_map(|(pt, v)| match pt {
            Point::Drug(d) => Some((*d, *v)),
            Point::Control => None,
        }));
    for (d, v) in candidates {
        if v > max_violation {
            max_violation = v;
            argmax = Point::Drug(d);
        }
    }

    let verdict = if support_residual > opts.tol {
        Verdict::NotOptimal
    } else if max_violation <= opts.tol {
        Verdict::Optimal
    } else if searched && lower <= opts.tol {
        Verdict::Inconclusive
    } else {
        Verdict::NotOptimal
    };
    Ok(SensitivityReport {
        grid_doses: grid,
        grid_values,
        control_value,
        support_values,
        argmax,
        max_violation,
        support_residual,
        null_space_dim: f.null_dim(),
        verdict,
    })
}

/// Golden-section refinement around every local maximum of the grid values.
fn refine_maxima(
    f: &SensitivityFunction,
    h: &DMatrix<f64>,
    grid: &[f64],
    values: &[f64],
    width: f64,
) -> Result<Vec<(f64, f64)>> {
    let n = grid.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| (i == 0 || values[i] >= values[i - 1]) && (i == n - 1 || values[i] >= values[i + 1]))
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    peaks.truncate(8);
    let mut out = Vec::with_capacity(peaks.len());
    for i in peaks {
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(n - 1)];
        let mut err = None;
        let (x, v) = golden_max(
            |d| match f.value_with(Point::Drug(d), h) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            },
            lo,
            hi,
            1e-8 * width,
        );
        if let Some(e) = err {
            return Err(e);
        }
        out.push((x, v.max(values[i])));
    }
    Ok(out)
}
