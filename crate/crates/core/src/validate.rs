//! Independent numerical oracles used by the test suites.
//!
//! These routines deliberately avoid the discretizations used by the library
//! proper (fitted operators, trapezoid sums on the working grid), so that
//! frozen expected values in tests come from a second, unrelated method:
//! adaptive Simpson quadrature, dense-grid maximization with parabolic
//! refinement, and plain bisection root finding.

/// Neumaier compensated accumulator: running sums stay accurate to a couple
/// of ulps of the final total, independent of term count and ordering.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Recursion depth is capped at 40; the local error estimate uses the
/// standard 1/15 Richardson factor.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, fa, b, fb, fm);
    recurse(f, a, fa, b, fb, fm, whole, tol, 40)
}

/// Bisection root of `f` on `[a, b]`, requiring a sign change.
///
/// Returns `None` when `f(a)` and `f(b)` have the same strict sign; exact
/// zeros at an endpoint are returned immediately.
pub fn bisect_root(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol_x: f64) -> Option<f64> {
    let (mut lo, mut hi) = (a, b);
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol_x || mid == lo || mid == hi {
            return Some(mid);
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Some(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Dense-grid maximization of `f` over `[a, b]` with parabolic refinement.
///
/// Scans `n` uniform samples, then fits a parabola through the best sample
/// and its neighbours to polish the abscissa. Returns `(argmax, max)`.
pub fn max_on_grid(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> (f64, f64) {
    assert!(n >= 3 && b > a);
    let h = (b - a) / (n - 1) as f64;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    let mut vals = Vec::with_capacity(n);
    for i in 0..n {
        let x = a + i as f64 * h;
        let v = f(x);
        vals.push(v);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    if best_i == 0 || best_i == n - 1 {
        return (a + best_i as f64 * h, best);
    }
    let (ym, y0, yp) = (vals[best_i - 1], vals[best_i], vals[best_i + 1]);
    let denom = ym - 2.0 * y0 + yp;
    if denom >= 0.0 {
        return (a + best_i as f64 * h, best);
    }
    let shift = 0.5 * (ym - yp) / denom;
    let x = a + (best_i as f64 + shift.clamp(-1.0, 1.0)) * h;
    let v = f(x);
    if v > best {
        (x, v)
    } else {
        (a + best_i as f64 * h, best)
    }
}

/// Central finite difference (f(x+e) - f(x-e)) / 2e.
pub fn central_diff(f: &dyn Fn(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_plain_summation() {
        // alternating large/small terms that cancel to a known total
        let mut cs = CompensatedSum::new();
        let mut plain = 0.0;
        let terms: Vec<f64> = (0..40_000)
            .flat_map(|k| {
                let big = 1.0e8 + k as f64;
                [big, 1.0e-8, -big]
            })
            .collect();
        for &t in &terms {
            cs.add(t);
            plain += t;
        }
        let want = 40_000.0 * 1.0e-8;
        assert!((cs.total() - want).abs() < 1e-12 * want);
        // the plain sum visibly loses the small terms
        assert!((plain - want).abs() > 1e-6 * want);
    }

    #[test]
    fn compensated_sum_matches_exact_small_case() {
        let mut cs = CompensatedSum::new();
        for &t in &[0.1, 0.2, 0.3, -0.6] {
            cs.add(t);
        }
        assert!(cs.total().abs() < 1e-16);
    }

    #[test]
    fn simpson_polynomial_exact() {
        // Simpson integrates cubics exactly; quartic checks the adaptivity.
        let v = adaptive_simpson(&|x| x * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(&|x| x.powi(4), 0.0, 1.0, 1e-12);
        assert!((v - 0.2).abs() < 1e-11);
    }

    #[test]
    fn simpson_oscillatory() {
        let v = adaptive_simpson(&|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn simpson_empty_interval() {
        assert_eq!(adaptive_simpson(&|x| x, 3.0, 3.0, 1e-12), 0.0);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect_root(&|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-13);
    }

    #[test]
    fn bisect_rejects_no_sign_change() {
        assert!(bisect_root(&|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_none());
    }

    #[test]
    fn max_on_grid_parabola() {
        // max of s(1-s) is 0.25 at 0.5
        let (x, v) = max_on_grid(&|s| s * (1.0 - s), 0.0, 1.0, 1001);
        assert!((x - 0.5).abs() < 1e-6);
        assert!((v - 0.25).abs() < 1e-10);
    }

    #[test]
    fn central_diff_matches_derivative() {
        let d = central_diff(&|x| x.exp(), 1.0, 1e-6);
        assert!((d - 1.0f64.exp()).abs() < 1e-8);
    }
}
