//! One-dimensional search used by the solvers and the equivalence check.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the maximum of `f` on `[a, b]`.
///
/// Returns `(argmax, value)`. The endpoints are evaluated as well, so a
/// monotone function reports its boundary maximum exactly.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let fa = f(lo);
    let fb = f(hi);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let tol = tol.max(f64::EPSILON * (lo.abs() + hi.abs()));
    let mut iters = 0;
    while hi - lo > tol && iters < 200 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        iters += 1;
    }
    let (mut best_x, mut best_f) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    // NaN-safe comparisons: a NaN never wins
    if fa > best_f {
        best_x = a.min(b);
        best_f = fa;
    }
    if fb > best_f {
        best_x = a.max(b);
        best_f = fb;
    }
    (best_x, best_f)
}

/// Bisection on a sign-changing bracket. `f(a)` and `f(b)` must differ in sign.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    let (mut lo, mut hi) = (a, b);
    let mut flo = f(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol || mid == lo || mid == hi {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sub-intervals of `[a, b]` (split into `pieces`) on which `f` changes sign.
pub fn sign_changes<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, pieces: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / pieces as f64;
    let mut out = Vec::new();
    let mut x0 = a;
    let mut f0 = f(x0);
    for i in 1..=pieces {
        let x1 = if i == pieces { b } else { a + h * i as f64 };
        let f1 = f(x1);
        // a root exactly on a grid point is reported once, in the interval it closes
        let first_zero = i == 1 && f0 == 0.0;
        if first_zero || f1 == 0.0 || (f0 > 0.0 && f1 < 0.0) || (f0 < 0.0 && f1 > 0.0) {
            out.push((x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}
