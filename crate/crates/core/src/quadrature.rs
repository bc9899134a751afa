//! Numerical integration over boxes of the unit cube.

/// Recursion limit for [`adaptive_simpson`].
pub const MAX_SIMPSON_DEPTH: u32 = 48;

/// Adaptive Simpson rule on `[a, b]` to absolute tolerance `tol`. Returns
/// `None` if the recursion limit is hit before the error estimate falls
/// below tolerance, or if the integrand is not finite.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Option<f64> {
    if a == b {
        return Some(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, MAX_SIMPSON_DEPTH)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return None;
    }
    if delta.abs() <= 15.0 * tol || m <= a || b <= m {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Some(l + r)
}

/// Iterated adaptive Simpson over the box `[lower, upper)`.
pub fn integrate_box<F: Fn(&[f64]) -> f64>(
    f: &F,
    lower: &[f64],
    upper: &[f64],
    tol: f64,
) -> Option<f64> {
    assert_eq!(lower.len(), upper.len());
    integrate_axis(f, lower, upper, tol, 0, lower)
}

fn integrate_axis<F: Fn(&[f64]) -> f64>(
    f: &F,
    lower: &[f64],
    upper: &[f64],
    tol: f64,
    axis: usize,
    point: &[f64],
) -> Option<f64> {
    if axis == lower.len() {
        return Some(f(point));
    }
    // half the budget goes to the inner integrals, spread over this axis
    let inner_tol = 0.5 * tol / (upper[axis] - lower[axis]).max(f64::MIN_POSITIVE);
    let failed = std::cell::Cell::new(false);
    let section = |x: f64| {
        let mut p = point.to_vec();
        p[axis] = x;
        integrate_axis(f, lower, upper, inner_tol, axis + 1, &p).unwrap_or_else(|| {
            failed.set(true);
            f64::NAN
        })
    };
    let v = adaptive_simpson(&section, lower[axis], upper[axis], 0.5 * tol);
    if failed.get() {
        None
    } else {
        v
    }
}

/// Tanh-sinh (double exponential) quadrature on `[a, b]`. The nodes never
/// touch the endpoints, so integrable endpoint singularities are handled.
/// Refines the step until two successive estimates agree to `tol`.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Option<f64> {
    use std::f64::consts::FRAC_PI_2;
    let half = 0.5 * (b - a);
    // weighted f at the node t; 0 when the node rounds onto an endpoint
    let node = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let weight = FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        // x = centre + half·tanh(u), formed from the nearer endpoint to keep
        // full precision next to it
        let x = if u >= 0.0 {
            b - half * (-u).exp() / u.cosh()
        } else {
            a + half * u.exp() / u.cosh()
        };
        if !(x > a && x < b) || weight == 0.0 {
            return 0.0;
        }
        half * weight * f(x)
    };
    let t_max = 6.5;
    let mut h = 1.0;
    let mut sum = node(0.0);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        let t = k as f64 * h;
        sum += node(t) + node(-t);
        k += 1;
    }
    let mut estimate = sum * h;
    for _ in 0..10 {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= t_max {
            let t = k as f64 * h;
            sum += node(t) + node(-t);
            k += 2;
        }
        let next = sum * h;
        if !next.is_finite() {
            return None;
        }
        if (next - estimate).abs() <= tol {
            return Some(next);
        }
        estimate = next;
    }
    None
}
