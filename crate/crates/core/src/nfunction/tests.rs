use super::quadrature::{adaptive_simpson, integrate_from_origin};
use super::*;
use approx::assert_relative_eq;
use proptest::prelude::*;

fn power(p: f64) -> NFunction {
    NFunction::power_law(p).unwrap()
}

fn log_power(alpha: f64, beta: f64, gamma: f64) -> NFunction {
    NFunction::new(NFunctionSpec::LogPower { alpha, beta, gamma }).unwrap()
}

fn piecewise() -> NFunction {
    NFunction::new(NFunctionSpec::PiecewisePower {
        alpha: 1.0,
        beta: 2.0,
        t0: 1.0,
        c1: 1.0,
        c2: 0.5,
        c3: 0.5,
    })
    .unwrap()
}

fn variable_exponent() -> NFunction {
    // p(t) = 2.5 + 0.5 tanh(ln t), so p runs from 2 to 3 across scales.
    let p: ScalarFn = Arc::new(|t: f64| 2.5 + 0.5 * t.ln().tanh());
    let dp: ScalarFn = Arc::new(|t: f64| {
        let c = t.ln().cosh();
        0.5 / (t * c * c)
    });
    NFunction::new(NFunctionSpec::VariableExponent(VariableExponent::new(
        "tanh", p, dp,
    )))
    .unwrap()
}

fn families() -> Vec<NFunction> {
    vec![
        power(1.5),
        power(3.0),
        variable_exponent(),
        log_power(2.0, 1.0, 2.0),
        piecewise(),
    ]
}

#[test]
fn closed_form_values() {
    assert_eq!(power(2.0).eval_a(3.0).unwrap(), 3.0);
    assert_eq!(power(3.0).eval_a(2.0).unwrap(), 4.0);
    assert_eq!(
        log_power(1.0, 1.0, std::f64::consts::E)
            .eval_a(0.0)
            .unwrap(),
        0.0
    );
    assert_eq!(power(2.0).eval_primitive(2.0).unwrap(), 2.0);
    assert_relative_eq!(power(3.0).eval_primitive(1.0).unwrap(), 1.0 / 3.0);
    assert_eq!(power(3.0).eval_a_inv(4.0).unwrap(), 2.0);
    assert_eq!(power(2.0).eval_a_inv(0.0).unwrap(), 0.0);
    assert_relative_eq!(power(2.0).eval_complementary(1.0).unwrap(), 0.5);
    assert_relative_eq!(
        power(3.0).eval_complementary(4.0).unwrap(),
        16.0 / 3.0,
        max_relative = 1e-14
    );
}

#[test]
fn rejects_bad_arguments() {
    assert!(power(2.0).eval_a(-1.0).is_err());
    assert!(power(2.0).eval_a(f64::NAN).is_err());
    assert!(power(2.0).eval_primitive(f64::INFINITY).is_err());
    assert!(NFunction::power_law(1.0).is_err());
    assert!(power(2.0).regularize(0.0).is_err());
    let broken = NFunctionSpec::PiecewisePower {
        alpha: 1.0,
        beta: 2.0,
        t0: 1.0,
        c1: 1.0,
        c2: 1.0,
        c3: 0.5,
    };
    assert!(NFunction::new(broken).is_err());
}

#[test]
fn log_power_primitive_matches_antiderivative() {
    // ∫₀¹ s ln(1 + s) ds = [(s² - 1)/2 ln(1 + s) - s²/4 + s/2]₀¹ = 1/4.
    let nf = log_power(1.0, 1.0, 1.0);
    let v = nf.eval_primitive(1.0).unwrap();
    assert!((v - 0.25).abs() < 1e-10, "{v}");
}

#[test]
fn piecewise_inverse_at_knot() {
    let nf = piecewise();
    let t = nf.eval_a_inv(1.0).unwrap();
    assert!((t - 1.0).abs() < 1e-14);
    assert!((nf.a(t) - 1.0).abs() < 1e-14);
}

#[test]
fn regularized_density_values() {
    let p2 = power(2.0).regularize(0.3).unwrap();
    for &t in &[0.0, 1e-4, 0.5, 7.0] {
        assert_relative_eq!(p2.a(t), t, max_relative = 1e-14);
    }
    let p3 = power(3.0);
    assert_eq!(p3.regularize(0.01).unwrap().a(0.0), 0.0);
    assert_relative_eq!(
        p3.regularize(1.0).unwrap().a(1.0),
        2f64.sqrt(),
        max_relative = 1e-14
    );
    let (kappa, da) = p3.regularized_tangent(1.0, 1.0);
    let reg = p3.regularize(1.0).unwrap();
    assert_relative_eq!(kappa, reg.a(1.0), max_relative = 1e-14);
    assert_relative_eq!(da, reg.da(1.0), max_relative = 1e-14);
}

#[test]
fn regularized_primitive_matches_quadrature() {
    for nf in families() {
        for &eps in &[1.0, 1e-2, 1e-4] {
            let reg = nf.regularize(eps).unwrap();
            for &t in &[1e-4, 0.05, 0.7, 3.0] {
                let direct = adaptive_simpson(|s| reg.a(s), 0.0, t, 1e-13).unwrap();
                let v = reg.eval_primitive(t).unwrap();
                assert!(
                    (v - direct).abs() <= 1e-9 * direct + 1e-12,
                    "{} eps={eps} t={t}: {v} vs {direct}",
                    nf.describe()
                );
            }
        }
    }
}

#[test]
fn luxembourg_norm_of_constants() {
    // a(t) = 2t gives A(t) = t², so ‖c‖ = c on a unit-measure domain.
    let nf = NFunction::new(NFunctionSpec::Tabulated(
        MonotoneCubic::new(&[(0.0, 0.0), (1.0, 2.0), (2.0, 4.0)]).unwrap(),
    ))
    .unwrap();
    assert_eq!(nf.luxembourg_norm(&[0.0; 16], 1.0 / 16.0).unwrap(), 0.0);
    assert_relative_eq!(
        nf.luxembourg_norm(&[1.0; 16], 1.0 / 16.0).unwrap(),
        1.0,
        max_relative = 1e-12
    );
    assert_relative_eq!(
        nf.luxembourg_norm(&[2.0; 16], 1.0 / 16.0).unwrap(),
        2.0,
        max_relative = 1e-12
    );
    assert!(nf.luxembourg_norm(&[f64::NAN], 1.0).is_err());
}

#[test]
fn ellipticity_bounds() {
    assert_eq!((power(3.0).a0(), power(3.0).a1()), (2.0, 2.0));
    let nf = log_power(2.0, 1.0, 2.0);
    let grid = log_grid(1e-3, 1e3, 50);
    let (lo, hi) = estimate_ellipticity_bounds(&nf, &grid).unwrap();
    // Brute-force oracle on a much finer scan of the closed-form ratio.
    let ratio = |t: f64| 2.0 + t / ((t + 2.0) * (t + 2.0).ln());
    let fine: Vec<f64> = log_grid(1e-3, 1e3, 20_000).into_iter().map(ratio).collect();
    let flo = fine.iter().cloned().fold(f64::INFINITY, f64::min);
    let fhi = fine.iter().cloned().fold(0.0, f64::max);
    assert!(lo >= 2.0);
    assert!(
        (lo - flo).abs() < 1e-6 && (hi - fhi).abs() < 1e-6,
        "{lo} {hi} vs {flo} {fhi}"
    );

    // t ln(t) p'(t) + p(t) - 1 with x = ln t.
    let ve = variable_exponent();
    let ratio = |x: f64| 0.5 * x / (x.cosh() * x.cosh()) + 1.5 + 0.5 * x.tanh();
    let fine: Vec<f64> = (0..=400_000)
        .map(|k| -18.42 + k as f64 * 36.84 / 400_000.0)
        .map(ratio)
        .collect();
    let flo = fine.iter().cloned().fold(f64::INFINITY, f64::min);
    let fhi = fine.iter().cloned().fold(0.0, f64::max);
    assert!(
        (ve.a0() - flo).abs() < 1e-8 && (ve.a1() - fhi).abs() < 1e-8,
        "{} {}",
        ve.a0(),
        ve.a1()
    );
    assert!(estimate_ellipticity_bounds(&nf, &log_grid(0.1, 10.0, 10)).is_err());
}

#[test]
fn regularized_bounds_stay_within_base_range() {
    // a_eps interpolates between linear behaviour near 0 and the base family,
    // so its ratio lies between min(a0, 1) and max(a1, 1).
    for nf in families() {
        for &eps in &[1.0, 1e-2, 1e-4] {
            let reg = nf.regularize(eps).unwrap();
            let (lo, hi) = estimate_ellipticity_bounds(&reg, &log_grid(1e-8, 1e8, 50)).unwrap();
            assert!(
                lo >= nf.a0().min(1.0) - 1e-9,
                "{} eps={eps}: {lo}",
                nf.describe()
            );
            assert!(
                hi <= nf.a1().max(1.0) + 1e-9,
                "{} eps={eps}: {hi}",
                nf.describe()
            );
        }
    }
}

#[test]
fn complementary_matches_quadrature_of_inverse() {
    for nf in families() {
        for &t in &[1e-3, 0.2, 1.0, 5.0, 80.0] {
            let young = nf.eval_complementary(t).unwrap();
            let direct = integrate_from_origin(|s| nf.a_inv(s), t, 1e-13).unwrap();
            assert!(
                (young - direct).abs() <= 1e-8 * direct,
                "{} t={t}: {young} vs {direct}",
                nf.describe()
            );
        }
    }
}

#[test]
fn complementary_inverse_round_trip() {
    for nf in families() {
        for &t in &[1e-4, 0.3, 2.0, 50.0] {
            let v = nf.complementary(t);
            let back = nf.eval_complementary_inv(v).unwrap();
            assert_relative_eq!(back, t, max_relative = 1e-9);
        }
    }
}

#[test]
fn a_gradient_examples() {
    assert_eq!(power(2.0).a_gradient([3.0, 4.0]), [3.0, 4.0]);
    assert_eq!(power(1.5).a_gradient([0.0, 0.0]), [0.0, 0.0]);
    let g = power(3.0).a_gradient([3.0, 4.0]);
    assert_relative_eq!(g[0], 15.0, max_relative = 1e-14);
    assert_relative_eq!(g[1], 20.0, max_relative = 1e-14);
}

#[test]
fn toolbox_power_two_is_tight() {
    let report = check_toolbox_inequalities(&power(2.0), 1000, 7).unwrap();
    assert!(report.max_violation <= 1e-9);
}

#[test]
fn toolbox_holds_for_all_families() {
    for nf in families() {
        let report = check_toolbox_inequalities(&nf, 1000, 11).unwrap();
        assert!(
            report.passed(),
            "{}: {:?}",
            nf.describe(),
            report.inequalities
        );
    }
}

#[test]
fn monotonicity_scan_is_nonnegative() {
    for nf in families() {
        let scan = monotonicity_scan(&nf, 10_000, 3);
        assert!(
            scan.weakly_monotone(),
            "{}: {}",
            nf.describe(),
            scan.min_relative_pairing
        );
        assert!(scan.fitted_monotonicity_constant > 0.0);
        assert!(scan.fitted_lipschitz_constant.is_finite());
    }
}

#[test]
fn a_over_t_branches() {
    assert_eq!(power(3.0).a_over_t_branch(1.0), AOverTBranch::NonDecreasing);
    assert_eq!(power(1.5).a_over_t_branch(1.0), AOverTBranch::NonIncreasing);
}

proptest! {
    #[test]
    fn inverse_round_trip(lt in -6.0f64..6.0, k in 0usize..5) {
        let nf = &families()[k];
        let t = 10f64.powf(lt);
        let back = nf.eval_a_inv(nf.a(t)).unwrap();
        prop_assert!((back - t).abs() <= 1e-8 * t, "{} t={} back={}", nf.describe(), t, back);
    }

    #[test]
    fn density_is_increasing(lt in -6.0f64..6.0, k in 0usize..5) {
        let nf = &families()[k];
        let t = 10f64.powf(lt);
        prop_assert!(nf.a(t * 1.001) > nf.a(t));
        prop_assert!(nf.da(t) > 0.0);
    }

    #[test]
    fn complementary_is_convex(lo in -2.0f64..1.0, k in 0usize..5) {
        let nf = &families()[k];
        let h = 10f64.powf(lo) / 8.0;
        let x0 = 10f64.powf(lo);
        let vals: Vec<f64> = (0..6).map(|i| nf.complementary(x0 + i as f64 * h)).collect();
        for w in vals.windows(3) {
            prop_assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9 * w[1]);
        }
    }

    #[test]
    fn unit_scaling_is_exact(lt in -3.0f64..3.0, k in 0usize..5) {
        let nf = &families()[k];
        let t = 10f64.powf(lt);
        prop_assert_eq!(nf.a(1.0 * t), nf.a(t));
    }
}
