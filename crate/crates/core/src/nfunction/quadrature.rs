//! Adaptive Simpson quadrature and a safeguarded Newton/bisection root finder
//! for strictly increasing functions.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[lo, hi]` with adaptive Simpson.
///
/// The tolerance is mixed: `tol * max(1, |I|)`, so large primitives are resolved
/// to relative accuracy `tol` instead of an unreachable absolute one.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if hi == lo {
        return Ok(0.0);
    }
    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    let eps = tol * whole.abs().max(1.0);
    let mut worst = 0.0_f64;
    let value = recurse(&f, lo, hi, fa, fm, fb, whole, eps, MAX_DEPTH, &mut worst);
    if worst > eps {
        return Err(Error::Numeric {
            what: format!("adaptive Simpson on [{lo:e}, {hi:e}] hit the depth limit"),
            achieved: worst,
        });
    }
    Ok(value)
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
    eps: f64,
    depth: u32,
    worst: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * eps || (b - a) <= f64::EPSILON * a.abs().max(1e-300) {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *worst += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1, worst)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1, worst)
}

/// Integrates `f` over `[0, t]` using the substitution `s = t w^2`, which smooths
/// the `s^alpha` behaviour that N-function densities have at the origin.
pub fn integrate_from_origin<F: Fn(f64) -> f64>(f: F, t: f64, tol: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    adaptive_simpson(|w| 2.0 * t * w * f(t * w * w), 0.0, 1.0, tol)
}

/// Five-point Gauss-Legendre rule on `[lo, hi]`; used for short intervals where
/// the integrand is smooth.
pub fn gauss_legendre5<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let c = 0.5 * (lo + hi);
    let r = 0.5 * (hi - lo);
    X.iter()
        .zip(W.iter())
        .map(|(x, w)| w * f(c + r * x))
        .sum::<f64>()
        * r
}

/// Solves `g(t) = target` for strictly increasing `g` on `[0, inf)` with `g(0) = 0`.
///
/// The bracket starts at `[0, 1]` and the upper end doubles until `g(hi) >= target`.
/// Inside the bracket a Newton step is taken whenever it stays inside, otherwise bisection.
pub fn invert_increasing<G, D>(g: G, dg: D, target: f64) -> Result<f64>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if target == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while g(hi) < target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::Numeric {
                what: format!("bracket expansion failed for target {target:e}"),
                achieved: f64::INFINITY,
            });
        }
    }
    // Shrink towards tiny targets geometrically before Newton takes over.
    while lo == 0.0 && g(0.5 * hi) >= target && hi > 1e-300 {
        hi *= 0.5;
    }
    if lo == 0.0 {
        lo = 0.5 * hi;
        if g(lo) > target {
            lo = 0.0;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..400 {
        let v = g(t) - target;
        if v == 0.0 {
            return Ok(t);
        }
        if v < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi {
            return Ok(0.5 * (lo + hi));
        }
        let d = dg(t);
        let newton = t - v / d;
        t = if d.is_finite() && d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let achieved = (hi - lo) / hi;
    if achieved < 1e-12 {
        Ok(0.5 * (lo + hi))
    } else {
        Err(Error::Numeric {
            what: format!("root finding for target {target:e} stalled"),
            achieved,
        })
    }
}
