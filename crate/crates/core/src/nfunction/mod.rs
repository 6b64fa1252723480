//! N-functions `A(t) = ∫₀ᵗ a(s) ds` and the derived quantities the solvers and
//! analytics need: the inverse density `a⁻¹`, the complementary function
//! `Ã(t) = ∫₀ᵗ a⁻¹(s) ds`, the regularized density `a_ε`, the A-gradient and the
//! Luxembourg norm.
//!
//! Every family must satisfy the structural condition
//! `0 < a0 <= t a'(t) / a(t) <= a1` for all `t > 0`; the constants are measured
//! on construction and stored with the function.

pub mod quadrature;
pub mod tabulated;
pub mod toolbox;

use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use quadrature::{gauss_legendre5, integrate_from_origin, invert_increasing};
pub use tabulated::MonotoneCubic;
pub use toolbox::{
    check_toolbox_inequalities, monotonicity_scan, InequalityStat, MonotonicityScan, ToolboxReport,
};

/// Default absolute (mixed, see [`quadrature::adaptive_simpson`]) quadrature tolerance.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// Gradients with magnitude below `GRADIENT_FLOOR * max(1, scale)` are treated as zero.
pub const GRADIENT_FLOOR: f64 = 1e-14;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A variable exponent `p(t)` together with its derivative, giving `a(t) = t^(p(t)-1)`.
#[derive(Clone)]
pub struct VariableExponent {
    pub label: String,
    p: ScalarFn,
    dp: ScalarFn,
}

impl VariableExponent {
    pub fn new(label: impl Into<String>, p: ScalarFn, dp: ScalarFn) -> Self {
        Self {
            label: label.into(),
            p,
            dp,
        }
    }

    pub fn p(&self, t: f64) -> f64 {
        (self.p)(t)
    }

    pub fn dp(&self, t: f64) -> f64 {
        (self.dp)(t)
    }
}

impl fmt::Debug for VariableExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VariableExponent")
            .field("label", &self.label)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum NFunctionSpec {
    /// `a(t) = t^(p-1)`, the p-Laplacian.
    PowerLaw {
        p: f64,
    },
    VariableExponent(VariableExponent),
    /// `a(t) = t^alpha ln(beta t + gamma)`.
    LogPower {
        alpha: f64,
        beta: f64,
        gamma: f64,
    },
    /// `a(t) = c1 t^alpha` below `t0`, `c2 t^beta + c3` above; C¹ at `t0`.
    PiecewisePower {
        alpha: f64,
        beta: f64,
        t0: f64,
        c1: f64,
        c2: f64,
        c3: f64,
    },
    Tabulated(MonotoneCubic),
    /// `a_eps(t) = t a(sqrt(eps + t^2)) / sqrt(eps + t^2)` built on `base`.
    Regularized {
        base: Box<NFunctionSpec>,
        eps: f64,
    },
}

impl NFunctionSpec {
    fn validate(&self) -> Result<()> {
        match self {
            NFunctionSpec::PowerLaw { p } => {
                if !(p.is_finite() && *p > 1.0) {
                    return domain(format!("power law needs p > 1, got {p}"));
                }
            }
            NFunctionSpec::VariableExponent(_) | NFunctionSpec::Tabulated(_) => {}
            NFunctionSpec::LogPower { alpha, beta, gamma } => {
                if !(*alpha > 0.0 && *beta > 0.0 && *gamma >= 1.0) {
                    return domain("log-power needs alpha > 0, beta > 0 and gamma >= 1");
                }
            }
            NFunctionSpec::PiecewisePower {
                alpha,
                beta,
                t0,
                c1,
                c2,
                c3,
            } => {
                if !(*alpha > 0.0 && *beta > 0.0 && *t0 > 0.0 && *c1 > 0.0 && *c2 > 0.0) {
                    return domain("piecewise power needs alpha, beta, t0, c1, c2 > 0");
                }
                let left = c1 * t0.powf(*alpha);
                let right = c2 * t0.powf(*beta) + c3;
                let dleft = c1 * alpha * t0.powf(alpha - 1.0);
                let dright = c2 * beta * t0.powf(beta - 1.0);
                let tol = 1e-9 * (1.0 + left.abs() + dleft.abs());
                if (left - right).abs() > tol || (dleft - dright).abs() > tol {
                    return domain(format!(
                        "piecewise power is not C1 at t0={t0}: values {left} vs {right}, slopes {dleft} vs {dright}"
                    ));
                }
            }
            NFunctionSpec::Regularized { base, eps } => {
                if !(*eps > 0.0 && eps.is_finite()) {
                    return domain(format!("regularization needs eps > 0, got {eps}"));
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Short human-readable family descriptor.
    pub fn describe(&self) -> String {
        match self {
            NFunctionSpec::PowerLaw { p } => format!("power(p={p})"),
            NFunctionSpec::VariableExponent(v) => format!("variable_exponent({})", v.label),
            NFunctionSpec::LogPower { alpha, beta, gamma } => {
                format!("log_power(alpha={alpha}, beta={beta}, gamma={gamma})")
            }
            NFunctionSpec::PiecewisePower {
                alpha,
                beta,
                t0,
                c1,
                c2,
                c3,
            } => format!(
                "piecewise_power(alpha={alpha}, beta={beta}, t0={t0}, c1={c1}, c2={c2}, c3={c3})"
            ),
            NFunctionSpec::Tabulated(c) => format!("tabulated({} knots)", c.knots().count()),
            NFunctionSpec::Regularized { base, eps } => {
                format!("regularized({}, eps={eps})", base.describe())
            }
        }
    }

    fn a(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        match self {
            NFunctionSpec::PowerLaw { p } => t.powf(p - 1.0),
            NFunctionSpec::VariableExponent(v) => ((v.p(t) - 1.0) * t.ln()).exp(),
            NFunctionSpec::LogPower { alpha, beta, gamma } => {
                t.powf(*alpha) * log_affine(*beta, *gamma, t)
            }
            NFunctionSpec::PiecewisePower {
                alpha,
                beta,
                t0,
                c1,
                c2,
                c3,
            } => {
                if t < *t0 {
                    c1 * t.powf(*alpha)
                } else {
                    c2 * t.powf(*beta) + c3
                }
            }
            NFunctionSpec::Tabulated(c) => c.value(t),
            NFunctionSpec::Regularized { base, eps } => {
                let r = (eps + t * t).sqrt();
                t * base.a(r) / r
            }
        }
    }

    fn da(&self, t: f64) -> f64 {
        match self {
            NFunctionSpec::PowerLaw { p } => {
                if t == 0.0 {
                    if *p > 2.0 {
                        0.0
                    } else if *p == 2.0 {
                        1.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (p - 1.0) * t.powf(p - 2.0)
                }
            }
            NFunctionSpec::VariableExponent(v) => {
                if t == 0.0 {
                    return f64::INFINITY;
                }
                self.a(t) * (v.dp(t) * t.ln() + (v.p(t) - 1.0) / t)
            }
            NFunctionSpec::LogPower { alpha, beta, gamma } => {
                if t == 0.0 {
                    // Near 0, a ~ ln(gamma) t^alpha when gamma > 1 and ~ beta t^(alpha+1) when gamma = 1.
                    let lead = if *gamma > 1.0 { *alpha } else { alpha + 1.0 };
                    return if lead > 1.0 {
                        0.0
                    } else if lead == 1.0 {
                        if *gamma > 1.0 {
                            gamma.ln()
                        } else {
                            *beta
                        }
                    } else {
                        f64::INFINITY
                    };
                }
                alpha * t.powf(alpha - 1.0) * log_affine(*beta, *gamma, t)
                    + t.powf(*alpha) * beta / (beta * t + gamma)
            }
            NFunctionSpec::PiecewisePower {
                alpha,
                beta,
                t0,
                c1,
                c2,
                ..
            } => {
                if t < *t0 {
                    c1 * alpha * t.powf(alpha - 1.0)
                } else {
                    c2 * beta * t.powf(beta - 1.0)
                }
            }
            NFunctionSpec::Tabulated(c) => c.derivative(t),
            NFunctionSpec::Regularized { base, eps } => {
                let r = (eps + t * t).sqrt();
                let ar = base.a(r);
                let kappa = ar / r;
                let dkappa = (base.da(r) * r - ar) / (r * r);
                kappa + t * t * dkappa / r
            }
        }
    }

    /// `t a'(t) / a(t)`, computed in a form that stays accurate near `t = 0`.
    fn ratio(&self, t: f64) -> f64 {
        match self {
            NFunctionSpec::PowerLaw { p } => p - 1.0,
            NFunctionSpec::VariableExponent(v) => t * t.ln() * v.dp(t) + v.p(t) - 1.0,
            NFunctionSpec::LogPower { alpha, beta, gamma } => {
                alpha + beta * t / ((beta * t + gamma) * log_affine(*beta, *gamma, t))
            }
            NFunctionSpec::Regularized { base, eps } => {
                let r2 = eps + t * t;
                1.0 + (t * t / r2) * (base.ratio(r2.sqrt()) - 1.0)
            }
            _ => t * self.da(t) / self.a(t),
        }
    }

    fn primitive_closed(&self, t: f64) -> Option<f64> {
        match self {
            NFunctionSpec::PowerLaw { p } => Some(t.powf(*p) / p),
            NFunctionSpec::PiecewisePower {
                alpha,
                beta,
                t0,
                c1,
                c2,
                c3,
            } => {
                if t < *t0 {
                    Some(c1 * t.powf(alpha + 1.0) / (alpha + 1.0))
                } else {
                    Some(
                        c1 * t0.powf(alpha + 1.0) / (alpha + 1.0)
                            + c2 * (t.powf(beta + 1.0) - t0.powf(beta + 1.0)) / (beta + 1.0)
                            + c3 * (t - t0),
                    )
                }
            }
            NFunctionSpec::Tabulated(c) => Some(c.integral(t)),
            _ => None,
        }
    }

    fn primitive(&self, t: f64, tol: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        if let Some(v) = self.primitive_closed(t) {
            return Ok(v);
        }
        match self {
            NFunctionSpec::Regularized { base, eps } => {
                // A_eps(t) = A(r(t)) - A(sqrt(eps)) after the substitution r = sqrt(eps + s^2).
                // For t small against sqrt(eps) that difference cancels, but a_eps is
                // analytic on [0, t] there and Gauss panels integrate it directly.
                if t * t < 0.25 * eps {
                    let panels = 8;
                    let w = t / panels as f64;
                    Ok((0..panels)
                        .map(|k| gauss_legendre5(|s| self.a(s), k as f64 * w, (k + 1) as f64 * w))
                        .sum())
                } else {
                    let r = (eps + t * t).sqrt();
                    Ok(base.primitive(r, tol)? - base.primitive(eps.sqrt(), tol)?)
                }
            }
            _ => integrate_from_origin(|s| self.a(s), t, tol),
        }
    }

    fn a_inv_closed(&self, s: f64) -> Option<f64> {
        match self {
            NFunctionSpec::PowerLaw { p } => Some(s.powf(1.0 / (p - 1.0))),
            NFunctionSpec::PiecewisePower {
                alpha,
                beta,
                t0,
                c1,
                c2,
                c3,
            } => {
                let knot = c1 * t0.powf(*alpha);
                if s < knot {
                    Some((s / c1).powf(1.0 / alpha))
                } else {
                    Some(((s - c3) / c2).powf(1.0 / beta))
                }
            }
            _ => None,
        }
    }
}

fn log_affine(beta: f64, gamma: f64, t: f64) -> f64 {
    gamma.ln() + (beta * t / gamma).ln_1p()
}

/// Monotonicity of `t -> a(t)/t` on `(0, t_*]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AOverTBranch {
    NonDecreasing,
    NonIncreasing,
    Neither,
}

/// An N-function together with its measured ellipticity bounds.
#[derive(Debug, Clone)]
pub struct NFunction {
    spec: NFunctionSpec,
    a0: f64,
    a1: f64,
    quad_tol: f64,
}

impl NFunction {
    pub fn new(spec: NFunctionSpec) -> Result<Self> {
        spec.validate()?;
        let (a0, a1) = match &spec {
            NFunctionSpec::PowerLaw { p } => (p - 1.0, p - 1.0),
            _ => bounds_for_spec(&spec, &log_grid(1e-8, 1e8, 200))?,
        };
        Ok(Self {
            spec,
            a0,
            a1,
            quad_tol: DEFAULT_QUAD_TOL,
        })
    }

    pub fn power_law(p: f64) -> Result<Self> {
        Self::new(NFunctionSpec::PowerLaw { p })
    }

    pub fn with_quad_tol(mut self, quad_tol: f64) -> Self {
        self.quad_tol = quad_tol;
        self
    }

    pub fn spec(&self) -> &NFunctionSpec {
        &self.spec
    }

    /// Lower ellipticity bound `a0`.
    pub fn a0(&self) -> f64 {
        self.a0
    }

    /// Upper ellipticity bound `a1`.
    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    pub fn describe(&self) -> String {
        self.spec.describe()
    }

    /// `a(t)` without argument checks.
    #[inline]
    pub fn a(&self, t: f64) -> f64 {
        self.spec.a(t)
    }

    /// `a'(t)`.
    #[inline]
    pub fn da(&self, t: f64) -> f64 {
        self.spec.da(t)
    }

    pub fn ellipticity_ratio(&self, t: f64) -> f64 {
        self.spec.ratio(t)
    }

    /// `A(t)`; on quadrature failure returns the best available estimate.
    pub fn primitive(&self, t: f64) -> f64 {
        match self.spec.primitive(t, self.quad_tol) {
            Ok(v) => v,
            Err(_) => {
                integrate_from_origin(|s| self.a(s), t, self.quad_tol * 1e3).unwrap_or(f64::NAN)
            }
        }
    }

    /// `a⁻¹(s)`; returns NaN if the bracket cannot be established.
    pub fn a_inv(&self, s: f64) -> f64 {
        self.eval_a_inv(s).unwrap_or(f64::NAN)
    }

    /// `Ã(t)`; returns NaN on numerical failure.
    pub fn complementary(&self, t: f64) -> f64 {
        self.eval_complementary(t).unwrap_or(f64::NAN)
    }

    pub fn eval_a(&self, t: f64) -> Result<f64> {
        check_arg(t)?;
        Ok(self.a(t))
    }

    pub fn eval_primitive(&self, t: f64) -> Result<f64> {
        check_arg(t)?;
        self.spec.primitive(t, self.quad_tol)
    }

    pub fn eval_a_inv(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        if let Some(t) = self.spec.a_inv_closed(s) {
            return Ok(t);
        }
        invert_increasing(|t| self.a(t), |t| self.da(t), s)
    }

    /// `Ã(t)` from the closed form when available, otherwise through Young's
    /// equality `Ã(s) = s a⁻¹(s) - A(a⁻¹(s))`.
    pub fn eval_complementary(&self, t: f64) -> Result<f64> {
        check_arg(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        if let NFunctionSpec::PowerLaw { p } = self.spec {
            let q = p / (p - 1.0);
            return Ok(t.powf(q) / q);
        }
        let inv = self.eval_a_inv(t)?;
        Ok(t * inv - self.spec.primitive(inv, self.quad_tol)?)
    }

    /// `Ã⁻¹(v)` by bracketing and Newton/bisection on the convex increasing `Ã`.
    pub fn eval_complementary_inv(&self, v: f64) -> Result<f64> {
        check_arg(v)?;
        if let NFunctionSpec::PowerLaw { p } = self.spec {
            let q = p / (p - 1.0);
            return Ok((q * v).powf(1.0 / q));
        }
        invert_increasing(|t| self.complementary(t), |t| self.a_inv(t), v)
    }

    /// The A-gradient `a(|g|) g / |g|`, mapping (near-)zero gradients to zero.
    pub fn a_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        self.a_gradient_scaled(g, 1.0)
    }

    pub fn a_gradient_scaled(&self, g: [f64; 2], scale: f64) -> [f64; 2] {
        let norm = g[0].hypot(g[1]);
        if !(norm >= GRADIENT_FLOOR * scale.max(1.0)) {
            return [0.0, 0.0];
        }
        let k = self.a(norm) / norm;
        [k * g[0], k * g[1]]
    }

    /// Coefficients `(a_eps(t)/t, a_eps'(t))` of the regularized tangent
    /// `D(∇_{A_eps})(g) = κ I + (a' - κ) ĝ ĝᵀ` at `|g| = t`.
    pub fn regularized_tangent(&self, t: f64, eps: f64) -> (f64, f64) {
        let r = (eps + t * t).sqrt();
        let ar = self.a(r);
        let kappa = ar / r;
        let dkappa = (self.da(r) * r - ar) / (r * r);
        (kappa, kappa + t * t * dkappa / r)
    }

    /// The N-function generated by `a_eps`.
    pub fn regularize(&self, eps: f64) -> Result<NFunction> {
        if !(eps > 0.0 && eps.is_finite()) {
            return domain(format!("regularization needs eps > 0, got {eps}"));
        }
        NFunction::new(NFunctionSpec::Regularized {
            base: Box::new(self.spec.clone()),
            eps,
        })
        .map(|nf| nf.with_quad_tol(self.quad_tol))
    }

    /// Luxembourg norm `inf{λ > 0 : Σ A(|uᵢ|/λ) m <= 1}` of sampled values,
    /// each carrying measure `cell_measure`.
    pub fn luxembourg_norm(&self, samples: &[f64], cell_measure: f64) -> Result<f64> {
        if !(cell_measure > 0.0) {
            return domain("cell measure must be positive");
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return domain("luxembourg norm of non-finite samples");
        }
        let peak = samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            return Ok(0.0);
        }
        let modular = |lambda: f64| -> f64 {
            samples
                .iter()
                .map(|v| self.primitive(v.abs() / lambda))
                .sum::<f64>()
                * cell_measure
        };
        let (mut lo, mut hi) = (peak, peak);
        while modular(lo) <= 1.0 {
            lo *= 0.5;
        }
        while modular(hi) > 1.0 {
            hi *= 2.0;
        }
        while (hi - lo) > 1e-15 * hi {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if modular(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    /// Decides which monotonicity branch `a(t)/t` follows on `(0, t_star]`,
    /// sampling ten decades below `t_star`.
    pub fn a_over_t_branch(&self, t_star: f64) -> AOverTBranch {
        let grid = log_grid(t_star * 1e-10, t_star, 40);
        let vals: Vec<f64> = grid.iter().map(|&t| self.a(t) / t).collect();
        let tol = 1e-12;
        let up = vals.windows(2).all(|w| w[1] >= w[0] * (1.0 - tol));
        let down = vals.windows(2).all(|w| w[1] <= w[0] * (1.0 + tol));
        match (up, down) {
            (true, _) => AOverTBranch::NonDecreasing,
            (false, true) => AOverTBranch::NonIncreasing,
            _ => AOverTBranch::Neither,
        }
    }
}

fn check_arg(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return domain(format!("argument must be finite and nonnegative, got {t}"));
    }
    Ok(())
}

/// Log-spaced samples from `lo` to `hi` with `per_decade` points per decade.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    (0..=n)
        .map(|k| lo * 10f64.powf(decades * k as f64 / n as f64))
        .collect()
}

/// `(min, max)` of `t a'(t)/a(t)` over `t_grid`, with interior extrema refined
/// by golden-section search between neighbouring samples.
pub fn estimate_ellipticity_bounds(nf: &NFunction, t_grid: &[f64]) -> Result<(f64, f64)> {
    if t_grid.len() < 2 {
        return domain("ellipticity grid needs at least two samples");
    }
    let lo = t_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t_grid.iter().cloned().fold(0.0, f64::max);
    if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && hi / lo >= 1e6 * (1.0 - 1e-12)) {
        return domain("ellipticity grid must be positive and cover six decades around 1");
    }
    bounds_for_spec(&nf.spec, t_grid)
}

fn bounds_for_spec(spec: &NFunctionSpec, t_grid: &[f64]) -> Result<(f64, f64)> {
    let ratios: Vec<f64> = t_grid.iter().map(|&t| spec.ratio(t)).collect();
    for (t, r) in t_grid.iter().zip(&ratios) {
        if !(r.is_finite() && *r > 0.0) {
            return Err(Error::Structural(format!(
                "t a'(t)/a(t) = {r} at t = {t:e} for {}",
                spec.describe()
            )));
        }
    }
    let mut lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for k in 1..ratios.len().saturating_sub(1) {
        let (l, m, r) = (ratios[k - 1], ratios[k], ratios[k + 1]);
        if m <= l && m <= r {
            lo = lo.min(golden(
                |t| spec.ratio(t),
                t_grid[k - 1],
                t_grid[k + 1],
                false,
            ));
        }
        if m >= l && m >= r {
            hi = hi.max(golden(
                |t| spec.ratio(t),
                t_grid[k - 1],
                t_grid[k + 1],
                true,
            ));
        }
    }
    Ok((lo, hi))
}

fn golden<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, maximize: bool) -> f64 {
    let sign = if maximize { -1.0 } else { 1.0 };
    let g = |x: f64| sign * f(x.exp());
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = g(d);
        }
    }
    sign * fc.min(fd)
}

#[cfg(test)]
mod tests;
