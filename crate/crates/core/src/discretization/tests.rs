use super::*;
use crate::nfunction::NFunction;
use approx::assert_relative_eq;
use proptest::prelude::*;

fn unit(n: usize) -> Grid2D {
    Grid2D::unit(n).unwrap()
}

#[test]
fn gradient_examples() {
    let g = unit(9);
    let v = gradient(&ScalarField::from_fn(g, |x, _| x));
    assert!(v
        .values()
        .iter()
        .all(|w| (w[0] - 1.0).abs() < 1e-13 && w[1].abs() < 1e-13));
    let v = gradient(&ScalarField::constant(g, 3.0));
    assert!(v.values().iter().all(|w| *w == [0.0, 0.0]));
    let v = gradient(&ScalarField::from_fn(g, |x, _| x * x));
    for cj in 0..8 {
        for ci in 0..8 {
            let xc = g.cell_center(ci, cj)[0];
            assert!((v.at(ci, cj)[0] - 2.0 * xc).abs() < 1e-13);
        }
    }
}

#[test]
fn affine_fields_have_zero_laplacian() {
    let g = unit(17);
    let u = ScalarField::from_fn(g, |x, y| 0.3 - 1.2 * x + 0.7 * y);
    for p in [1.5, 2.0, 3.0] {
        let lap = a_laplacian(&NFunction::power_law(p).unwrap(), &u);
        assert!(lap.max_abs() < 1e-10, "p={p}: {}", lap.max_abs());
    }
}

#[test]
fn quadratic_laplacian_is_exact_for_p2() {
    let g = unit(17);
    let u = ScalarField::from_fn(g, |x, y| (x * x + y * y) / 4.0);
    let lap = a_laplacian(&NFunction::power_law(2.0).unwrap(), &u);
    for j in 1..16 {
        for i in 1..16 {
            assert!((lap.at(i, j) - 1.0).abs() < 1e-10);
        }
    }
    assert_eq!(lap.at(0, 3), 0.0);
}

/// Max error of the discrete operator on the profile `Ã((x - b)⁺)`, whose
/// exact A-Laplacian is 1 on `x > b`, over nodes with `x - b > margin`.
fn profile_error(p: f64, n: usize, margin: impl Fn(f64) -> f64) -> f64 {
    let nf = NFunction::power_law(p).unwrap();
    let g = unit(n);
    let b = 0.5;
    let u = ScalarField::from_fn(g, |x, _| nf.complementary((x - b).max(0.0)));
    let lap = a_laplacian(&nf, &u);
    let mut err = 0.0_f64;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            if g.x(i) - b > margin(g.h()) {
                err = err.max((lap.at(i, j) - 1.0).abs());
            }
        }
    }
    err
}

#[test]
fn manufactured_profile_converges_first_order() {
    for p in [1.5, 3.0] {
        let errs: Vec<f64> = [33, 65, 129]
            .iter()
            .map(|&n| profile_error(p, n, |_| 0.125))
            .collect();
        let order = (errs[1] / errs[2]).log2();
        assert!(order >= 1.0 - 0.05, "p={p}: errors {errs:?}, order {order}");
        // Next to the free boundary the error depends on (x - b)/h only: bounded, not decaying.
        for n in [33, 65, 129] {
            let near = profile_error(p, n, |h| 2.0 * h);
            assert!(near < 0.02, "p={p} n={n}: {near}");
        }
    }
}

#[test]
fn energy_examples() {
    let g = unit(11);
    let nf = NFunction::power_law(2.0).unwrap();
    let zero = ScalarField::zeros(g);
    let one = ScalarField::constant(g, 1.0);
    assert_eq!(energy(&nf, &zero, &one).unwrap(), 0.0);
    let x = ScalarField::from_fn(g, |x, _| x);
    assert_relative_eq!(energy(&nf, &x, &zero).unwrap(), 0.5, max_relative = 1e-13);
    assert_relative_eq!(energy(&nf, &one, &one).unwrap(), 1.0, max_relative = 1e-13);
}

#[test]
fn operator_is_negative_energy_gradient() {
    let g = unit(9);
    let nf = NFunction::power_law(3.0).unwrap();
    let zero = ScalarField::zeros(g);
    let u = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() * (2.0 * y + 0.3).cos());
    let lap = a_laplacian(&nf, &u);
    let h2 = g.h() * g.h();
    let step = 1e-6;
    for &(i, j) in &[(1, 1), (4, 3), (7, 7)] {
        let mut up = u.clone();
        let mut dn = u.clone();
        up.set(i, j, u.at(i, j) + step);
        dn.set(i, j, u.at(i, j) - step);
        let fd =
            (energy(&nf, &up, &zero).unwrap() - energy(&nf, &dn, &zero).unwrap()) / (2.0 * step);
        assert_relative_eq!(-lap.at(i, j) * h2, fd, max_relative = 1e-6);
    }
}

#[test]
fn hessian_matches_gradient_differences() {
    let g = unit(9);
    let unk = Unknowns::new(&g);
    for p in [2.0, 3.0] {
        let nf = NFunction::power_law(p).unwrap();
        let u = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() + x * y * y);
        let fixed = vec![false; unk.len()];
        let hess = assemble_hessian(&nf, &u, 1e-14, &unk, &fixed, None);
        let dir: Vec<f64> = (0..unk.len())
            .map(|k| ((k * 7 % 5) as f64 - 2.0) * 0.1)
            .collect();
        let hv = hess.mul(&dir);
        let step = 1e-6;
        let shifted = |s: f64| {
            let mut w = u.clone();
            for (k, &n) in unk.nodes.iter().enumerate() {
                w.values_mut()[n] += s * dir[k];
            }
            let mut d = vec![0.0; g.len()];
            add_energy_gradient(&nf, &w, &mut d);
            d
        };
        let (gp, gm) = (shifted(step), shifted(-step));
        for (k, &n) in unk.nodes.iter().enumerate() {
            let fd = (gp[n] - gm[n]) / (2.0 * step);
            assert!(
                (hv[k] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                "p={p} k={k}: {} vs {fd}",
                hv[k]
            );
        }
    }
}

#[test]
fn truncation_examples() {
    let g = unit(3);
    let u =
        ScalarField::from_values(g, vec![3.0, -5.0, 1.0, 0.0, 2.0, -2.0, 1.5, -0.1, 9.0]).unwrap();
    let t = truncate(&u, 2.0).unwrap();
    assert_eq!(&t.values()[..3], &[2.0, -2.0, 1.0]);
    assert!(truncate(&u, 0.0).is_err());
    assert_eq!(penalty_activation(-1.0, 0.1), 0.0);
    assert_eq!(penalty_activation(0.05, 0.1), 0.05);
    assert_eq!(penalty_activation(1.0, 0.1), 0.1);
}

proptest! {
    #[test]
    fn truncation_is_idempotent(vals in prop::collection::vec(-10.0f64..10.0, 16), s in 0.01f64..5.0) {
        let u = ScalarField::from_values(unit(4), vals).unwrap();
        let once = truncate(&u, s).unwrap();
        prop_assert_eq!(truncate(&once, s).unwrap(), once.clone());
        prop_assert!(once.max_abs() <= s);
    }

    #[test]
    fn summation_by_parts(seed in 0u64..500, pk in 0usize..3) {
        use rand::{Rng, SeedableRng};
        let p = [1.5, 2.0, 3.0][pk];
        let nf = NFunction::power_law(p).unwrap();
        let g = unit(8);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u = ScalarField::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
        let v = ScalarField::from_fn(g, |x, y| {
            if x == 0.0 || y == 0.0 || x >= 1.0 || y >= 1.0 { 0.0 } else { rng.gen_range(-1.0..1.0) }
        });
        let lap = a_laplacian(&nf, &u);
        let h2 = g.h() * g.h();
        let lhs: f64 = lap.values().iter().zip(v.values()).map(|(a, b)| a * b).sum::<f64>() * h2;
        // -Σ_T (h²/4) ∇_A u · ∇v over the triangles.
        let mut rhs = 0.0;
        for cj in 0..g.ny() - 1 {
            for ci in 0..g.nx() - 1 {
                let (cu, _) = corners(u.values(), &g, ci, cj);
                let (cv, _) = corners(v.values(), &g, ci, cj);
                for t in &TRIANGLES {
                    let q = nf.a_gradient(tri_gradient(&cu, t, 1.0 / g.h()));
                    let gv = tri_gradient(&cv, t, 1.0 / g.h());
                    rhs -= 0.25 * h2 * (q[0] * gv[0] + q[1] * gv[1]);
                }
            }
        }
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn laplacian_is_monotone_for_p2(seed in 0u64..200) {
        use rand::{Rng, SeedableRng};
        // u <= v with equality at a node forces Δu <= Δv there.
        let nf = NFunction::power_law(2.0).unwrap();
        let g = unit(6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u = ScalarField::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
        let mut v = u.map(|x| x + 0.0);
        for val in v.values_mut() {
            *val += rng.gen_range(0.0..1.0);
        }
        v.set(2, 3, u.at(2, 3));
        prop_assert!(a_laplacian(&nf, &u).at(2, 3) <= a_laplacian(&nf, &v).at(2, 3) + 1e-12);
    }
}

#[test]
fn node_gradient_matches_the_assembled_one() {
    let g = Grid2D::unit(9).unwrap();
    let u = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() * y + x * x);
    for p in [1.5, 2.0, 3.0] {
        let nf = NFunction::power_law(p).unwrap();
        let mut full = vec![0.0; g.len()];
        add_energy_gradient(&nf, &u, &mut full);
        for (i, j) in [(1, 1), (4, 5), (7, 7)] {
            let local = node_energy_gradient(&nf, &u, i, j, u.at(i, j));
            assert!((local - full[g.idx(i, j)]).abs() < 1e-14, "p={p} ({i},{j})");
        }
    }
}
