//! Sampled checks of the inequalities that follow from the structural condition,
//! and empirical fits of the monotonicity and Lipschitz constants of `∇_A`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::NFunction;
use crate::error::{domain, Error, Result};

/// Relative violation allowed for every sampled inequality.
pub const TOOLBOX_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct InequalityStat {
    pub name: String,
    pub max_violation: f64,
    pub worst_s: f64,
    pub worst_t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ToolboxReport {
    pub family: String,
    pub a0: f64,
    pub a1: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub inequalities: Vec<InequalityStat>,
    pub max_violation: f64,
}

impl ToolboxReport {
    pub fn passed(&self) -> bool {
        self.max_violation <= TOOLBOX_TOL
    }
}

struct Tracker {
    stats: Vec<InequalityStat>,
}

impl Tracker {
    fn new(names: &[&str]) -> Self {
        Self {
            stats: names
                .iter()
                .map(|n| InequalityStat {
                    name: n.to_string(),
                    max_violation: f64::NEG_INFINITY,
                    worst_s: f64::NAN,
                    worst_t: f64::NAN,
                })
                .collect(),
        }
    }

    /// Records `lhs <= rhs` as a relative violation.
    fn le(&mut self, k: usize, lhs: f64, rhs: f64, s: f64, t: f64) {
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        let v = if lhs.is_nan() || rhs.is_nan() {
            f64::INFINITY
        } else {
            (lhs - rhs) / scale
        };
        let stat = &mut self.stats[k];
        if v > stat.max_violation {
            stat.max_violation = v;
            stat.worst_s = s;
            stat.worst_t = t;
        }
    }
}

fn scale_bounds(s: f64, e0: f64, e1: f64) -> (f64, f64) {
    let (x, y) = (s.powf(e0), s.powf(e1));
    (x.min(y), x.max(y))
}

/// Evaluates every toolbox inequality at `n_samples` random pairs `(s, t)`
/// drawn log-uniformly from `[1e-3, 1e3]`, returning the worst relative
/// violation per inequality.
pub fn measure_toolbox_inequalities(
    nf: &NFunction,
    n_samples: usize,
    seed: u64,
) -> Result<ToolboxReport> {
    if n_samples == 0 {
        return domain("toolbox check needs at least one sample");
    }
    let names = [
        "primitive_lower",
        "primitive_upper",
        "young_type",
        "density_scaling_lower",
        "density_scaling_upper",
        "primitive_scaling_lower",
        "primitive_scaling_upper",
        "inverse_scaling_lower",
        "inverse_scaling_upper",
        "complementary_lower",
        "complementary_upper",
    ];
    let mut tr = Tracker::new(&names);
    let (a0, a1) = (nf.a0(), nf.a1());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ln_lo = (1e-3f64).ln();
    let ln_hi = (1e3f64).ln();
    for _ in 0..n_samples {
        let s = rng.gen_range(ln_lo..ln_hi).exp();
        let t = rng.gen_range(ln_lo..ln_hi).exp();
        let at = nf.a(t);
        let big_a = nf.eval_primitive(t)?;
        tr.le(0, t * at / (1.0 + a1), big_a, s, t);
        tr.le(1, big_a, t * at, s, t);
        tr.le(2, s * at, t * at + s * nf.a(s), s, t);

        let (lo, hi) = scale_bounds(s, a0, a1);
        let ast = nf.a(s * t);
        tr.le(3, lo * at, ast, s, t);
        tr.le(4, ast, hi * at, s, t);

        let (lo, hi) = scale_bounds(s, 1.0 + a0, 1.0 + a1);
        let big_ast = nf.eval_primitive(s * t)?;
        tr.le(5, lo * big_a / (1.0 + a1), big_ast, s, t);
        tr.le(6, big_ast, (1.0 + a1) * hi * big_a, s, t);

        let (lo, hi) = scale_bounds(s, 1.0 / a0, 1.0 / a1);
        let inv_t = nf.eval_a_inv(t)?;
        let inv_st = nf.eval_a_inv(s * t)?;
        tr.le(7, lo * inv_t, inv_st, s, t);
        tr.le(8, inv_st, hi * inv_t, s, t);

        let comp = nf.eval_complementary(t)?;
        tr.le(9, a0 / (1.0 + a0) * t * inv_t, comp, s, t);
        tr.le(10, comp, t * inv_t, s, t);
    }
    let max_violation = tr
        .stats
        .iter()
        .map(|s| s.max_violation)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ToolboxReport {
        family: nf.describe(),
        a0,
        a1,
        n_samples,
        seed,
        inequalities: tr.stats,
        max_violation,
    })
}

/// Like [`measure_toolbox_inequalities`] but fails with the offending pair when
/// any relative violation exceeds [`TOOLBOX_TOL`].
pub fn check_toolbox_inequalities(
    nf: &NFunction,
    n_samples: usize,
    seed: u64,
) -> Result<ToolboxReport> {
    let report = measure_toolbox_inequalities(nf, n_samples, seed)?;
    if let Some(bad) = report
        .inequalities
        .iter()
        .find(|s| !(s.max_violation <= TOOLBOX_TOL))
    {
        return Err(Error::InequalityViolated {
            name: bad.name.clone(),
            s: bad.worst_s,
            t: bad.worst_t,
            violation: bad.max_violation,
        });
    }
    Ok(report)
}

/// Result of sampling `∇_A` at random vector pairs.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityScan {
    pub n_pairs: usize,
    /// Smallest `(∇_A ξ − ∇_A ζ)·(ξ − ζ)`, relative to `|ξ − ζ| (|∇_A ξ| + |∇_A ζ|)`.
    pub min_relative_pairing: f64,
    /// Smallest ratio of the pairing to `|ξ − ζ|² a(ρ)/ρ`, `ρ = sqrt(|ξ|² + |ζ|²)`.
    pub fitted_monotonicity_constant: f64,
    /// Largest ratio of `|∇_A ξ − ∇_A ζ|` to `|ξ − ζ| a(ρ)/ρ`.
    pub fitted_lipschitz_constant: f64,
}

impl MonotonicityScan {
    pub fn weakly_monotone(&self) -> bool {
        self.min_relative_pairing >= -1e-12
    }
}

/// Samples vector pairs with magnitudes log-uniform in `[1e-3, 1e3]` and
/// uniform directions.
pub fn monotonicity_scan(nf: &NFunction, n_pairs: usize, seed: u64) -> MonotonicityScan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ln_lo = (1e-3f64).ln();
    let ln_hi = (1e3f64).ln();
    let draw = |rng: &mut ChaCha8Rng| {
        let m = rng.gen_range(ln_lo..ln_hi).exp();
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        [m * th.cos(), m * th.sin()]
    };
    let mut min_rel = f64::INFINITY;
    let mut c_mono = f64::INFINITY;
    let mut c_lip = 0.0_f64;
    for _ in 0..n_pairs {
        let xi = draw(&mut rng);
        let zeta = draw(&mut rng);
        let (gx, gz) = (nf.a_gradient(xi), nf.a_gradient(zeta));
        let d = [xi[0] - zeta[0], xi[1] - zeta[1]];
        let dg = [gx[0] - gz[0], gx[1] - gz[1]];
        let pairing = dg[0] * d[0] + dg[1] * d[1];
        let dn = d[0].hypot(d[1]);
        if dn == 0.0 {
            continue;
        }
        let scale = dn * (gx[0].hypot(gx[1]) + gz[0].hypot(gz[1]));
        min_rel = min_rel.min(pairing / scale);
        let rho = (xi[0] * xi[0] + xi[1] * xi[1] + zeta[0] * zeta[0] + zeta[1] * zeta[1]).sqrt();
        let weight = nf.a(rho) / rho;
        c_mono = c_mono.min(pairing / (dn * dn * weight));
        c_lip = c_lip.max(dg[0].hypot(dg[1]) / (dn * weight));
    }
    MonotonicityScan {
        n_pairs,
        min_relative_pairing: min_rel,
        fitted_monotonicity_constant: c_mono,
        fitted_lipschitz_constant: c_lip,
    }
}
