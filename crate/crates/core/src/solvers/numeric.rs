//! General solver for `φ_p`-optimal designs on the joint space.
//!
//! Vertex exchange on a dose grid plus the control point, then clustering of
//! the grid support, Newton steps on the weights and golden-section
//! refinement of each dose. The result is certified with the equivalence
//! check; points the check flags are added back and the polish repeated.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::criteria::{log_trace_power, Criterion};
use crate::design::{Design, Point};
use crate::equivalence::{verify, VerifyOptions};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, symmetrize, SymDecomposition};
use crate::model::TrialModel;
use crate::scalar::golden_max;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Uniform candidate doses on `[L, R]`.
    pub grid_size: usize,
    /// Exchange iterations per start.
    pub max_iterations: usize,
    /// Weights below this are purged when estimability allows.
    pub weight_tolerance: f64,
    pub multistart: usize,
    pub seed: u64,
    /// Settings of the final equivalence check.
    pub verify: VerifyOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            grid_size: 257,
            max_iterations: 200,
            weight_tolerance: 1e-4,
            multistart: 4,
            seed: 0,
            verify: VerifyOptions::default(),
        }
    }
}

const START_POINTS: usize = 5;
const EXCHANGE_TOL: f64 = 1e-3;
const REPAIR_ROUNDS: usize = 5;
const REFINE_PASSES: usize = 8;
const LIGHT_POINT: f64 = 0.05;
/// Loss in `log φ` accepted when simplifying the support.
const VALUE_SLACK: f64 = 1e-8;

/// Locally `φ_p`-optimal design (or `ψ`-optimal for [`Criterion::TargetDose`]).
///
/// Fails with [`Error::NonConvergence`] when the best design found does not
/// pass [`verify`]; the error carries that design and its violation.
pub fn numeric_solve(model: &TrialModel, criterion: &Criterion, opts: &SolveOptions) -> Result<Design> {
    if opts.grid_size < 2 {
        return Err(Error::InvalidParameter(format!("grid size {} must be at least 2", opts.grid_size)));
    }
    if !(opts.weight_tolerance > 0.0 && opts.weight_tolerance < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "weight tolerance {} must lie in (0, 1)",
            opts.weight_tolerance
        )));
    }
    let (p, k) = criterion.resolve(model)?;
    let problem = Problem::new(model, k.matrix().clone(), p)?;
    let grid = model.range().grid(opts.grid_size);
    let mut candidates: Vec<Atom> = grid
        .iter()
        .map(|&d| problem.atom(Point::Drug(d), 0.0))
        .collect::<Result<_>>()?;
    candidates.push(problem.atom(Point::Control, 0.0)?);

    let mut best: Option<(f64, Vec<Atom>)> = None;
    let starts = opts.multistart.max(1);
    // a single contrast column is a c-optimal problem: its exact solution on
    // the candidate set is a linear program and joins as the last start
    let elfving = if problem.k.ncols() == 1 {
        problem.elfving_weights(&grid)
    } else {
        None
    };
    for start in 0..starts + usize::from(elfving.is_some()) {
        let weights = if start < starts {
            let init = start_indices(grid.len(), start, opts.seed);
            problem.exchange(&candidates, &init, opts)
        } else {
            elfving.clone().expect("present")
        };
        let mut atoms = problem.cluster(&candidates, &weights, &grid);
        let value = problem.optimise_weights(&mut atoms, opts.weight_tolerance, 100);
        // strict improvement keeps the lowest start index on ties
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, atoms));
        }
    }
    let (_, mut atoms) = best.expect("at least one start");
    if !atoms.iter().any(|a| a.weight > 0.0) {
        return Err(Error::NotEstimable {
            arm: crate::error::ArmLabel::Joint,
        });
    }

    let spacing = model.range().width() / (grid.len() - 1) as f64;
    let mut last = None;
    for round in 0..=REPAIR_ROUNDS {
        problem.refine_doses(&mut atoms, spacing, opts.weight_tolerance);
        problem.tidy(&mut atoms, spacing, opts.weight_tolerance);
        let design = to_design(&atoms)?;
        let report = verify(&design, model, criterion, opts.verify)?;
        if report.is_optimal() {
            return Ok(design);
        }
        let violation = report.max_violation;
        last = Some((design, violation));
        if round == REPAIR_ROUNDS {
            break;
        }
        // the flagged point joins with a small weight
        if atoms.iter().any(|a| same_point(a.point, report.argmax, spacing * 1e-9)) {
            break;
        }
        let mut fresh = problem.atom(report.argmax, 0.05)?;
        for a in &mut atoms {
            a.weight *= 0.95;
        }
        fresh.weight = 0.05;
        atoms.push(fresh);
        sort_atoms(&mut atoms);
        problem.optimise_weights(&mut atoms, opts.weight_tolerance, 100);
    }
    let (design, violation) = last.expect("at least one round");
    Err(Error::NonConvergence {
        best: Box::new(design),
        violation,
    })
}

fn same_point(a: Point, b: Point, eps: f64) -> bool {
    match (a, b) {
        (Point::Control, Point::Control) => true,
        (Point::Drug(x), Point::Drug(y)) => (x - y).abs() <= eps,
        _ => false,
    }
}

/// Candidate indices of a start; the control (index `n`) is always included.
fn start_indices(n: usize, start: usize, seed: u64) -> Vec<usize> {
    let m = START_POINTS.min(n);
    let mut idx: Vec<usize> = if start == 0 {
        (0..m).map(|i| if m == 1 { 0 } else { i * (n - 1) / (m - 1) }).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(start as u64));
        rand::seq::index::sample(&mut rng, n, m).into_vec()
    };
    idx.sort_unstable();
    idx.dedup();
    idx.push(n);
    idx
}

#[derive(Debug, Clone)]
struct Atom {
    point: Point,
    weight: f64,
    info: DMatrix<f64>,
}

fn sort_atoms(atoms: &mut [Atom]) {
    atoms.sort_by(|a, b| match (a.point, b.point) {
        (Point::Drug(x), Point::Drug(y)) => x.total_cmp(&y),
        (Point::Drug(_), Point::Control) => std::cmp::Ordering::Less,
        (Point::Control, Point::Drug(_)) => std::cmp::Ordering::Greater,
        (Point::Control, Point::Control) => std::cmp::Ordering::Equal,
    });
}

fn to_design(atoms: &[Atom]) -> Result<Design> {
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    let mut doses = Vec::new();
    let mut weights = Vec::new();
    let mut control = 0.0;
    for a in atoms.iter().filter(|a| a.weight > 0.0) {
        match a.point {
            Point::Drug(d) => {
                doses.push(d);
                weights.push(a.weight / total);
            }
            Point::Control => control = a.weight / total,
        }
    }
    let err = 1.0 - weights.iter().sum::<f64>() - control;
    if control > 0.0 {
        control += err;
    } else if let Some(w) = weights.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *w += err;
    }
    Design::from_parts(doses, weights, control)
}

struct Problem<'a> {
    model: &'a TrialModel,
    k: DMatrix<f64>,
    k_scale: f64,
    p: f64,
    dim: usize,
}

impl<'a> Problem<'a> {
    fn new(model: &'a TrialModel, k: DMatrix<f64>, p: f64) -> Result<Self> {
        let dim = model.s1() + model.s2();
        if k.nrows() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: k.nrows(),
            });
        }
        let k_scale = 1.0 + max_abs(&k);
        Ok(Self {
            model,
            k,
            k_scale,
            p,
            dim,
        })
    }

    fn atom(&self, point: Point, weight: f64) -> Result<Atom> {
        Ok(Atom {
            point,
            weight,
            info: self.info(point)?,
        })
    }

    fn info(&self, point: Point) -> Result<DMatrix<f64>> {
        let s1 = self.model.s1();
        let mut out = DMatrix::zeros(self.dim, self.dim);
        match point {
            Point::Drug(d) => out.view_mut((0, 0), (s1, s1)).copy_from(&self.model.drug.fisher(d)?),
            Point::Control => {
                let s2 = self.model.s2();
                out.view_mut((s1, s1), (s2, s2)).copy_from(&self.model.control.fisher())
            }
        }
        Ok(out)
    }

    /// `B(x)` with `I(x) = B(x)B(x)ᵀ`, embedded in the joint dimension.
    fn factor(&self, point: Point) -> Result<DMatrix<f64>> {
        let s1 = self.model.s1();
        match point {
            Point::Drug(d) => {
                let b = self.model.drug.information_factor(d)?;
                let mut out = DMatrix::zeros(self.dim, b.ncols());
                out.view_mut((0, 0), (s1, b.ncols())).copy_from(&b);
                Ok(out)
            }
            Point::Control => {
                let s2 = self.model.s2();
                let l = self
                    .model
                    .control
                    .fisher()
                    .cholesky()
                    .ok_or_else(|| Error::Consistency("control information is not positive definite".into()))?
                    .l();
                let mut out = DMatrix::zeros(self.dim, s2);
                out.view_mut((s1, 0), (s2, s2)).copy_from(&l);
                Ok(out)
            }
        }
    }

    /// Candidate weights of the c-optimal design from the Elfving linear
    /// program `min Σ|aⱼ|` subject to `Σ aⱼ bⱼ = c` over all columns `bⱼ` of
    /// the candidate factors; `wᵢ ∝ Σ|aⱼ|` over the columns of candidate `i`.
    ///
    /// Exact for rank-one information and for factors whose extra columns
    /// are orthogonal to `c` (the variance parts of the normal model).
    fn elfving_weights(&self, grid: &[f64]) -> Option<Vec<f64>> {
        use microlp::{ComparisonOp, OptimizationDirection, Problem as Lp};
        let points: Vec<Point> = grid.iter().map(|&d| Point::Drug(d)).chain([Point::Control]).collect();
        let factors: Vec<DMatrix<f64>> = points.iter().map(|&p| self.factor(p)).collect::<Result<_>>().ok()?;
        let mut lp = Lp::new(OptimizationDirection::Minimize);
        let mut owner = Vec::new();
        let mut rows: Vec<Vec<(microlp::Variable, f64)>> = vec![Vec::new(); self.dim];
        for (i, b) in factors.iter().enumerate() {
            for col in 0..b.ncols() {
                if b.column(col).iter().all(|v| *v == 0.0) {
                    continue;
                }
                let plus = lp.add_var(1.0, (0.0, f64::INFINITY));
                let minus = lp.add_var(1.0, (0.0, f64::INFINITY));
                for (r, row) in rows.iter_mut().enumerate() {
                    let v = b[(r, col)];
                    if v != 0.0 {
                        row.push((plus, v));
                        row.push((minus, -v));
                    }
                }
                owner.push((i, plus, minus));
            }
        }
        // scale c so the LP works with numbers of order one
        let scale = max_abs(&self.k);
        for (r, row) in rows.into_iter().enumerate() {
            lp.add_constraint(row, ComparisonOp::Eq, self.k[(r, 0)] / scale);
        }
        let solution = lp.solve().ok()?.into_solution().ok()?;
        let mut w = vec![0.0; points.len()];
        for (i, plus, minus) in owner {
            w[i] += solution[plus] + solution[minus];
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        w.iter_mut().for_each(|v| *v /= total);
        Some(w)
    }

    fn assemble(&self, atoms: &[Atom]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for a in atoms.iter().filter(|a| a.weight > 0.0) {
            m += &a.info * a.weight;
        }
        m
    }

    /// Eigenvalues of `C = KᵀM⁺K` and `H = M⁺K`, or `None` when `Kᵀθ` is not
    /// estimable under `m`.
    fn contrast(&self, m: &DMatrix<f64>) -> Option<(SymmetricEigen<f64, nalgebra::Dyn>, DMatrix<f64>)> {
        if m.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let pinv = SymDecomposition::new(m).pseudo_inverse();
        let h = &pinv * &self.k;
        // stricter than the public estimability test: near the band edge
        // the projected criterion is spuriously better than the exact one
        if max_abs(&(&self.k - m * &h)) > 1e-9 * self.k_scale {
            return None;
        }
        let eig = SymmetricEigen::new(symmetrize(&(self.k.transpose() * &h)));
        let max = eig.eigenvalues.max();
        if !(max > 0.0) || eig.eigenvalues.iter().any(|v| !(*v > 1e-14 * max)) {
            return None;
        }
        Some((eig, h))
    }

    fn log_phi_of(&self, values: &[f64]) -> f64 {
        let t = values.len() as f64;
        if self.p == f64::NEG_INFINITY {
            -values.iter().fold(0.0_f64, |a, v| a.max(*v)).ln()
        } else if self.p == 0.0 {
            -values.iter().map(|v| v.ln()).sum::<f64>() / t
        } else {
            (log_trace_power(values, self.p) - t.ln()) / self.p
        }
    }

    /// `log φ_p`, `−∞` when not estimable.
    fn value(&self, m: &DMatrix<f64>) -> f64 {
        match self.contrast(m) {
            Some((eig, _)) => self.log_phi_of(eig.eigenvalues.as_slice()),
            None => f64::NEG_INFINITY,
        }
    }

    /// `Q = HÂHᵀ`, whose inner product with `I(x)` is `1 + s̃(x)`.
    fn eval(&self, m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let (eig, h) = self.contrast(m)?;
        let values = eig.eigenvalues.as_slice();
        let lmax = eig.eigenvalues.max();
        let t = values.len();
        let mut a = DMatrix::zeros(t, t);
        if self.p == f64::NEG_INFINITY {
            // average over the top eigenspace: a supergradient when it is repeated
            let top: Vec<usize> = (0..t).filter(|&j| values[j] >= lmax * (1.0 - 1e-8)).collect();
            for &j in &top {
                let u = eig.eigenvectors.column(j);
                a += u * u.transpose() / (lmax * top.len() as f64);
            }
        } else {
            let scaled: Vec<f64> = values.iter().map(|v| v / lmax).collect();
            let denom: f64 = scaled.iter().map(|v| v.powf(-self.p)).sum();
            for (j, v) in scaled.iter().enumerate() {
                let u = eig.eigenvectors.column(j);
                a += u * u.transpose() * (v.powf(-self.p - 1.0) / denom / lmax);
            }
        }
        Some(&h * a * h.transpose())
    }

    /// Vertex exchange on the candidate set; returns candidate weights.
    fn exchange(&self, candidates: &[Atom], init: &[usize], opts: &SolveOptions) -> Vec<f64> {
        let n = candidates.len();
        let mut w = vec![0.0; n];
        for &i in init {
            w[i] = 1.0 / init.len() as f64;
        }
        let build = |w: &[f64]| {
            let mut m = DMatrix::zeros(self.dim, self.dim);
            for (a, &wi) in candidates.iter().zip(w) {
                if wi > 0.0 {
                    m += &a.info * wi;
                }
            }
            m
        };
        let mut m = build(&w);
        if self.value(&m) == f64::NEG_INFINITY {
            w = vec![1.0 / n as f64; n];
            m = build(&w);
            if self.value(&m) == f64::NEG_INFINITY {
                return w;
            }
        }
        let t = self.k.ncols();
        for _ in 0..opts.max_iterations {
            let Some(ev) = self.eval(&m) else { break };
            let sens: Vec<f64> = candidates.iter().map(|a| a.info.dot(&ev) - 1.0).collect();
            let jmax = argmax(&sens);
            if sens[jmax] <= EXCHANGE_TOL {
                break;
            }
            // step towards the most sensitive candidate
            let dir = &candidates[jmax].info;
            let alpha = if self.p == 0.0 && t == self.dim && SymDecomposition::new(dir).rank() == 1 {
                let d = (sens[jmax] + 1.0) * t as f64;
                (d - t as f64) / (t as f64 * (d - 1.0))
            } else {
                golden_max(|a| self.value(&(&m * (1.0 - a) + dir * a)), 0.0, 1.0 - 1e-9, 1e-6).0
            };
            if alpha > 0.0 && alpha < 1.0 {
                for wi in w.iter_mut() {
                    *wi *= 1.0 - alpha;
                }
                w[jmax] += alpha;
                m = &m * (1.0 - alpha) + dir * alpha;
            }
            // move mass from the least sensitive support point
            if let Some(ev) = self.eval(&m) {
                let sens: Vec<f64> = candidates.iter().map(|a| a.info.dot(&ev) - 1.0).collect();
                let jmax = argmax(&sens);
                let jmin = (0..n)
                    .filter(|&j| w[j] > 0.0)
                    .min_by(|&a, &b| sens[a].total_cmp(&sens[b]))
                    .expect("non-empty support");
                if jmin != jmax {
                    let diff = &candidates[jmax].info - &candidates[jmin].info;
                    let (beta, _) = golden_max(|b| self.value(&(&m + &diff * b)), 0.0, w[jmin], 1e-6 * w[jmin]);
                    if beta > 0.0 {
                        w[jmin] -= beta;
                        w[jmax] += beta;
                        if w[jmin] < 1e-14 {
                            w[jmin] = 0.0;
                        }
                        m = build(&w);
                    }
                }
            }
            // purge small weights when the design stays estimable
            for j in 0..n {
                if w[j] > 0.0 && w[j] < opts.weight_tolerance {
                    let mut trial = w.clone();
                    trial[j] = 0.0;
                    let s: f64 = trial.iter().sum();
                    trial.iter_mut().for_each(|v| *v /= s);
                    let tm = build(&trial);
                    if self.value(&tm) > f64::NEG_INFINITY {
                        w = trial;
                        m = tm;
                    }
                }
            }
        }
        w
    }

    /// Collapses runs of adjacent grid support into single doses.
    fn cluster(&self, candidates: &[Atom], w: &[f64], grid: &[f64]) -> Vec<Atom> {
        let n = grid.len();
        let mut runs: Vec<Vec<usize>> = Vec::new();
        for j in (0..n).filter(|&j| w[j] > 0.0) {
            match runs.last_mut() {
                Some(run) if *run.last().expect("non-empty run") + 1 == j => run.push(j),
                _ => runs.push(vec![j]),
            }
        }
        let control = (w[n] > 0.0).then(|| Atom {
            weight: w[n],
            ..candidates[n].clone()
        });
        let with_control = |mut atoms: Vec<Atom>| {
            if let Some(c) = &control {
                atoms.push(c.clone());
            }
            atoms
        };
        let merged: Vec<Atom> = runs
            .iter()
            .map(|run| {
                let total: f64 = run.iter().map(|&j| w[j]).sum();
                let dose = run.iter().map(|&j| w[j] * grid[j]).sum::<f64>() / total;
                self.atom(Point::Drug(dose), total)
            })
            .collect::<Result<_>>()
            .unwrap_or_default();
        let merged = with_control(merged);
        if self.value(&self.assemble(&merged)) > f64::NEG_INFINITY {
            return merged;
        }
        let ends: Vec<Atom> = runs
            .iter()
            .flat_map(|run| {
                let (first, last) = (run[0], run[run.len() - 1]);
                let total: f64 = run.iter().map(|&j| w[j]).sum();
                if first == last {
                    vec![(first, total)]
                } else {
                    let half = run.len() / 2;
                    let low: f64 = run[..half].iter().map(|&j| w[j]).sum();
                    vec![(first, low), (last, total - low)]
                }
            })
            .map(|(j, wt)| Atom {
                weight: wt,
                ..candidates[j].clone()
            })
            .collect();
        let ends = with_control(ends);
        if self.value(&self.assemble(&ends)) > f64::NEG_INFINITY {
            return ends;
        }
        (0..=n)
            .filter(|&j| w[j] > 0.0)
            .map(|j| Atom {
                weight: w[j],
                ..candidates[j].clone()
            })
            .collect()
    }

    /// Maximises over the weights of a fixed support; returns `log φ`.
    ///
    /// Newton steps in reduced simplex coordinates with a finite-difference
    /// Hessian of the analytic gradient; pairwise exchange for `p = −∞`.
    /// Points whose weight reaches zero are dropped when estimability allows.
    fn optimise_weights(&self, atoms: &mut Vec<Atom>, weight_tol: f64, iterations: usize) -> f64 {
        atoms.retain(|a| a.weight > 0.0);
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        atoms.iter_mut().for_each(|a| a.weight /= total);
        let mut current = self.value(&self.assemble(atoms));
        if current == f64::NEG_INFINITY {
            return current;
        }
        for _ in 0..iterations {
            let k = atoms.len();
            if k == 1 {
                break;
            }
            let improved = if self.p == f64::NEG_INFINITY {
                self.exchange_step(atoms, &mut current)
            } else {
                self.newton_step(atoms, &mut current)
            };
            let dropped = self.drop_small(atoms, weight_tol * 1e-3, &mut current);
            if !improved && !dropped {
                break;
            }
        }
        current
    }

    fn gradient(&self, atoms: &[Atom], m: &DMatrix<f64>) -> Option<Vec<f64>> {
        let ev = self.eval(m)?;
        Some(atoms.iter().map(|a| a.info.dot(&ev)).collect())
    }

    fn newton_step(&self, atoms: &mut [Atom], current: &mut f64) -> bool {
        let k = atoms.len();
        let w: Vec<f64> = atoms.iter().map(|a| a.weight).collect();
        let m = self.assemble(atoms);
        let Some(g) = self.gradient(atoms, &m) else { return false };
        let reduced = |g: &[f64]| -> Vec<f64> { (0..k - 1).map(|i| g[i] - g[k - 1]).collect() };
        let gr = reduced(&g);
        if gr.iter().all(|v| v.abs() < 1e-13) {
            return false;
        }
        let mut hess = DMatrix::zeros(k - 1, k - 1);
        for j in 0..k - 1 {
            let h = 1e-6 * w[j].min(w[k - 1]).max(1e-300);
            let mp = &m + (&atoms[j].info - &atoms[k - 1].info) * h;
            let Some(gp) = self.gradient(atoms, &mp) else { return false };
            let gpr = reduced(&gp);
            for i in 0..k - 1 {
                hess[(i, j)] = (gpr[i] - gr[i]) / h;
            }
        }
        let hess = symmetrize(&hess);
        let grad = nalgebra::DVector::from_vec(gr.clone());
        let step = match (-&hess).cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let mut dir: Vec<f64> = step.iter().copied().collect();
        dir.push(-step.sum());
        // largest step keeping weights non-negative
        let mut t_max = f64::INFINITY;
        for i in 0..k {
            if dir[i] < 0.0 {
                t_max = t_max.min(w[i] / -dir[i]);
            }
        }
        let mut t = t_max.min(1.0);
        for _ in 0..40 {
            let trial: Vec<f64> = (0..k).map(|i| (w[i] + t * dir[i]).max(0.0)).collect();
            let mut tm = DMatrix::zeros(self.dim, self.dim);
            for (a, &wi) in atoms.iter().zip(&trial) {
                tm += &a.info * wi;
            }
            let v = self.value(&tm);
            if v > *current {
                let s: f64 = trial.iter().sum();
                for (a, wi) in atoms.iter_mut().zip(trial) {
                    a.weight = wi / s;
                }
                *current = v;
                return true;
            }
            t *= 0.5;
        }
        false
    }

    fn exchange_step(&self, atoms: &mut [Atom], current: &mut f64) -> bool {
        let m = self.assemble(atoms);
        let Some(g) = self.gradient(atoms, &m) else { return false };
        let hi = argmax(&g);
        let lo = (0..atoms.len())
            .min_by(|&a, &b| g[a].total_cmp(&g[b]))
            .expect("non-empty");
        if hi == lo || g[hi] - g[lo] < 1e-12 {
            return false;
        }
        let diff = &atoms[hi].info - &atoms[lo].info;
        let (beta, v) = golden_max(|b| self.value(&(&m + &diff * b)), 0.0, atoms[lo].weight, 1e-12);
        if v > *current && beta > 0.0 {
            atoms[lo].weight -= beta;
            atoms[hi].weight += beta;
            *current = v;
            return true;
        }
        false
    }

    fn drop_small(&self, atoms: &mut Vec<Atom>, below: f64, current: &mut f64) -> bool {
        let mut changed = false;
        let mut i = 0;
        while i < atoms.len() {
            if atoms.len() > 1 && atoms[i].weight < below {
                let mut trial = atoms.clone();
                trial.remove(i);
                let s: f64 = trial.iter().map(|a| a.weight).sum();
                trial.iter_mut().for_each(|a| a.weight /= s);
                let v = self.value(&self.assemble(&trial));
                if v > f64::NEG_INFINITY {
                    *atoms = trial;
                    *current = v;
                    changed = true;
                    continue;
                }
            }
            i += 1;
        }
        changed
    }

    /// Golden-section search of each dose within one grid spacing, with the
    /// weights re-optimised at every trial dose.
    fn refine_doses(&self, atoms: &mut Vec<Atom>, spacing: f64, weight_tol: f64) {
        let range = self.model.range();
        let (l, r) = (range.lower(), range.upper());
        let tol = 1e-9 * range.width();
        let mut current = self.optimise_weights(atoms, weight_tol, 100);
        for _ in 0..REFINE_PASSES {
            let mut moved = 0.0_f64;
            let mut i = 0;
            while i < atoms.len() {
                let Point::Drug(d) = atoms[i].point else {
                    i += 1;
                    continue;
                };
                let prev = (0..i)
                    .rev()
                    .find_map(|j| match atoms[j].point {
                        Point::Drug(x) => Some(x),
                        Point::Control => None,
                    })
                    .unwrap_or(f64::NEG_INFINITY);
                let next = atoms[i + 1..]
                    .iter()
                    .find_map(|a| match a.point {
                        Point::Drug(x) => Some(x),
                        Point::Control => None,
                    })
                    .unwrap_or(f64::INFINITY);
                let lo = (d - spacing).max(l).max(prev + tol);
                let hi = (d + spacing).min(r).min(next - tol);
                if hi <= lo {
                    i += 1;
                    continue;
                }
                let trial_at = |x: f64| -> Option<(f64, Vec<Atom>)> {
                    let mut trial = atoms.clone();
                    trial[i] = Atom {
                        point: Point::Drug(x),
                        weight: trial[i].weight,
                        info: self.info(Point::Drug(x)).ok()?,
                    };
                    let v = self.optimise_weights_fixed(&mut trial, 30);
                    Some((v, trial))
                };
                // an endpoint stays put when stepping inward loses value
                let at_end = if d == l { Some(lo + 1e-7 * (hi - lo)) } else if d == r { Some(hi - 1e-7 * (hi - lo)) } else { None };
                if let Some(probe) = at_end {
                    if trial_at(probe).is_none_or(|(v, _)| v <= current) {
                        i += 1;
                        continue;
                    }
                }
                let (x, _) = golden_max(
                    |x| trial_at(x).map_or(f64::NEG_INFINITY, |(v, _)| v),
                    lo,
                    hi,
                    tol,
                );
                if let Some((v, mut trial)) = trial_at(x) {
                    if v > current && x != d {
                        let v = self.optimise_weights(&mut trial, weight_tol, 100);
                        if v > current {
                            moved = moved.max((x - d).abs());
                            *atoms = trial;
                            current = v;
                        }
                    }
                }
                i += 1;
            }
            if moved <= 10.0 * tol {
                break;
            }
        }
    }

    /// Weight optimisation that never changes the support (used inside line
    /// searches so trial evaluations are comparable).
    fn optimise_weights_fixed(&self, atoms: &mut [Atom], iterations: usize) -> f64 {
        let mut current = self.value(&self.assemble(atoms));
        if current == f64::NEG_INFINITY || atoms.len() == 1 {
            return current;
        }
        for _ in 0..iterations {
            let improved = if self.p == f64::NEG_INFINITY {
                self.exchange_step(atoms, &mut current)
            } else {
                self.newton_step(atoms, &mut current)
            };
            if !improved {
                break;
            }
        }
        current
    }

    /// Merges near-duplicate doses and removes negligible points; a point
    /// that cannot be removed without losing estimability is absorbed by
    /// moving its neighbour to the dose that restores it.
    fn tidy(&self, atoms: &mut Vec<Atom>, spacing: f64, weight_tol: f64) {
        let range = self.model.range();
        let radius = 1e-6 * range.width();
        let mut current = self.optimise_weights(atoms, weight_tol, 100);
        // merge close doses
        let mut i = 0;
        while i + 1 < atoms.len() {
            if let (Point::Drug(a), Point::Drug(b)) = (atoms[i].point, atoms[i + 1].point) {
                if b - a <= 2.0 * spacing {
                    if let Some((v, trial)) = self.try_merge(atoms, i, spacing, weight_tol) {
                        if b - a <= radius || v >= current - VALUE_SLACK {
                            *atoms = trial;
                            current = v;
                            continue;
                        }
                    }
                }
            }
            i += 1;
        }
        // remove light points when that does not lose criterion value
        let mut i = 0;
        while i < atoms.len() && atoms.len() > 1 {
            if atoms[i].weight < LIGHT_POINT {
                let mut trial = atoms.clone();
                trial.remove(i);
                let v = self.optimise_weights(&mut trial, weight_tol, 100);
                if v > f64::NEG_INFINITY && v >= current - VALUE_SLACK {
                    *atoms = trial;
                    current = v;
                    continue;
                }
                if let Some((v, trial)) = self.absorb(atoms, i, spacing, weight_tol) {
                    if v >= current - VALUE_SLACK {
                        *atoms = trial;
                        current = v;
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    fn try_merge(&self, atoms: &[Atom], i: usize, spacing: f64, weight_tol: f64) -> Option<(f64, Vec<Atom>)> {
        let (Point::Drug(a), Point::Drug(b)) = (atoms[i].point, atoms[i + 1].point) else {
            return None;
        };
        let (wa, wb) = (atoms[i].weight, atoms[i + 1].weight);
        let mut trial = atoms.to_vec();
        let x = (a * wa + b * wb) / (wa + wb);
        trial[i] = self.atom(Point::Drug(x), wa + wb).ok()?;
        trial.remove(i + 1);
        let v = self.optimise_weights(&mut trial, weight_tol, 100);
        if v > f64::NEG_INFINITY {
            return Some((v, trial));
        }
        self.snap(&trial, i, spacing, weight_tol)
    }

    /// Removes point `i` and moves its nearest drug neighbour so the design
    /// stays estimable.
    fn absorb(&self, atoms: &[Atom], i: usize, spacing: f64, weight_tol: f64) -> Option<(f64, Vec<Atom>)> {
        let Point::Drug(d) = atoms[i].point else { return None };
        let mut trial = atoms.to_vec();
        let w = trial.remove(i).weight;
        let j = (0..trial.len())
            .filter_map(|j| match trial[j].point {
                Point::Drug(x) => Some((j, (x - d).abs())),
                Point::Control => None,
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))?
            .0;
        trial[j].weight += w;
        self.snap(&trial, j, spacing, weight_tol)
    }

    /// Searches the dose of point `j` within one grid spacing for the
    /// smallest estimability residual, then re-optimises the weights.
    fn snap(&self, atoms: &[Atom], j: usize, spacing: f64, weight_tol: f64) -> Option<(f64, Vec<Atom>)> {
        let Point::Drug(d) = atoms[j].point else { return None };
        let range = self.model.range();
        let lo = (d - spacing).max(range.lower());
        let hi = (d + spacing).min(range.upper());
        let residual = |x: f64| -> f64 {
            let mut trial = atoms.to_vec();
            match self.info(Point::Drug(x)) {
                Ok(info) => trial[j].info = info,
                Err(_) => return f64::NEG_INFINITY,
            }
            let m = self.assemble(&trial);
            let pinv = SymDecomposition::new(&m).pseudo_inverse();
            -max_abs(&(&self.k - &m * (&pinv * &self.k)))
        };
        let (x, _) = golden_max(residual, lo, hi, 1e-14 * (1.0 + range.width()));
        let mut trial = atoms.to_vec();
        trial[j] = self.atom(Point::Drug(x), trial[j].weight).ok()?;
        let v = self.optimise_weights(&mut trial, weight_tol, 100);
        (v > f64::NEG_INFINITY).then_some((v, trial))
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::{criterion_value, KMatrix};
    use crate::model::{ControlModel, DoseRange, DrugFamily, DrugModel, MeanFunction};
    use crate::solvers::d_opt_mm;

    fn poisson_mm() -> TrialModel {
        TrialModel::new(
            DrugModel::new(
                DrugFamily::Poisson,
                MeanFunction::michaelis_menten(0.5, 2.0).unwrap(),
                DoseRange::new(0.0, 50.0).unwrap(),
            )
            .unwrap(),
            ControlModel::poisson(0.4).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn recovers_closed_form_d_optimal_design() {
        let m = poisson_mm();
        let c = Criterion::d_optimal(&m);
        let numeric = numeric_solve(&m, &c, &SolveOptions::default()).unwrap();
        let exact = d_opt_mm(&m).unwrap();
        assert_eq!(numeric.doses().len(), 2);
        assert!((numeric.doses()[0] - exact.doses()[0]).abs() < 1e-4);
        assert!((numeric.control_weight() - 1.0 / 3.0).abs() < 1e-6);
        let (a, b) = (
            criterion_value(&numeric, &m, &c).unwrap(),
            criterion_value(&exact, &m, &c).unwrap(),
        );
        assert!((a - b).abs() <= 1e-8 * b);
    }

    #[test]
    fn drug_only_contrast_drops_the_control() {
        let m = poisson_mm();
        let k = KMatrix::general(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])).unwrap();
        let d = numeric_solve(&m, &Criterion::phi(0.0, k).unwrap(), &SolveOptions::default()).unwrap();
        assert_eq!(d.control_weight(), 0.0);
        assert_eq!(d.doses().len(), 2);
    }

    #[test]
    fn same_seed_same_design() {
        let m = poisson_mm();
        let k = KMatrix::identity(2, 1);
        let c = Criterion::phi(-1.0, k).unwrap();
        let opts = SolveOptions {
            seed: 7,
            ..SolveOptions::default()
        };
        assert_eq!(numeric_solve(&m, &c, &opts).unwrap(), numeric_solve(&m, &c, &opts).unwrap());
    }

    #[test]
    fn rejects_bad_options() {
        let m = poisson_mm();
        let c = Criterion::d_optimal(&m);
        let opts = SolveOptions {
            grid_size: 1,
            ..SolveOptions::default()
        };
        assert!(matches!(numeric_solve(&m, &c, &opts), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn start_indices_include_control_and_spread() {
        assert_eq!(start_indices(257, 0, 0), vec![0, 64, 128, 192, 256, 257]);
        let a = start_indices(257, 2, 5);
        assert_eq!(a, start_indices(257, 2, 5));
        assert_eq!(*a.last().unwrap(), 257);
    }
}
