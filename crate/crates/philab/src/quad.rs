//! Small numerical helpers shared across modules: adaptive Simpson
//! quadrature and safeguarded root bracketing for monotone functions.

/// Result of an adaptive quadrature that may fail to converge.
#[derive(Debug, Clone, Copy)]
pub(crate) struct QuadFailure {
    pub max_depth: usize,
}

const MAX_DEPTH: usize = 48;

/// Adaptive Simpson integration of `f` over `[a, b]` to relative tolerance
/// `rel_tol` (with a small absolute floor so integrals near zero terminate).
pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<f64, QuadFailure> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let scale = whole.abs().max(1e-300);
    let tol = rel_tol * scale;
    recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64, QuadFailure> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-14 * (a.abs() + b.abs() + 1.0) {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadFailure {
            max_depth: MAX_DEPTH,
        });
    }
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Solve `g(x) = target` for a continuous non-decreasing `g` on `[0, inf)`.
///
/// Brackets by doubling from `x0 > 0`, then bisects to relative tolerance
/// `rel_tol`. Returns `None` if no bracket is found within 200 doublings.
pub(crate) fn invert_monotone<F: Fn(f64) -> f64>(
    g: &F,
    target: f64,
    x0: f64,
    rel_tol: f64,
) -> Option<f64> {
    if target <= 0.0 {
        return Some(0.0);
    }
    let mut lo = 0.0_f64;
    let mut hi = x0.max(1e-300);
    let mut tries = 0;
    while g(hi) < target {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return None;
        }
    }
    // bisect
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * mid.max(1e-300) {
            return Some(mid);
        }
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Least-squares slope of `ys` against `xs`.
pub(crate) fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    num / den
}
