//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use aobstacle::discretization::DataBounds;
use aobstacle::freeboundary::{
    growth_fit_gradient, growth_fit_solution, hausdorff_box_estimate, measure_degenerate_set,
    CoincidenceMask, FreeBoundaryCells,
};
use aobstacle::nfunction::toolbox::{measure_toolbox_inequalities, monotonicity_scan};
use aobstacle::nfunction::{ScalarFn, VariableExponent};
use aobstacle::solver::{
    entropy_convergence_experiment, solve, solve_penalty, Method, SolveResult, SolverOptions,
};
use aobstacle::verify::{
    check_l1_contraction, check_lewy_stampacchia, check_penalty_sandwich, CONTRACTION_REL,
};
use aobstacle::{Grid2D, NFunction, NFunctionSpec, ObstacleProblem, ScalarField};
use aobstacle_cli::config;
use aobstacle_cli::output::OutputDir;
use aobstacle_cli::run::{run_experiment, RunOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

const PS: [f64; 3] = [1.5, 2.0, 3.0];
const N: usize = 129;

/// `Ã(t)` for `a(t) = t^(p-1)`, written out independently of the library.
fn a_tilde(p: f64, t: f64) -> f64 {
    (p - 1.0) / p * t.powf(p / (p - 1.0))
}

struct Manufactured {
    p: f64,
    problem: ObstacleProblem,
    exact: ScalarField,
    res: SolveResult,
    elapsed: f64,
}

fn manufactured_problem(p: f64) -> (ObstacleProblem, ScalarField) {
    let g = Grid2D::unit(N).unwrap();
    let exact = ScalarField::from_fn(g, |x, _| a_tilde(p, (x - 0.5).max(0.0)));
    let problem = ObstacleProblem::new(
        NFunction::power_law(p).unwrap(),
        ScalarField::constant(g, 1.0),
        ScalarField::zeros(g),
        exact.clone(),
    )
    .unwrap();
    (problem, exact)
}

fn manufactured(p: f64, method: Method) -> Manufactured {
    let (problem, exact) = manufactured_problem(p);
    let t = Instant::now();
    let res = solve(&problem, &SolverOptions::with_method(method)).unwrap();
    Manufactured {
        p,
        problem,
        exact,
        res,
        elapsed: t.elapsed().as_secs_f64(),
    }
}

fn fb_node(m: &Manufactured) -> [f64; 2] {
    let g = *m.problem.grid();
    let mask = CoincidenceMask::from_values(g, m.res.contact_mask.clone()).unwrap();
    let (i, j) = mask.free_boundary_node().unwrap();
    [g.x(i), g.y(j)]
}

fn fb_cells(m: &Manufactured) -> FreeBoundaryCells {
    let mask = CoincidenceMask::from_values(*m.problem.grid(), m.res.contact_mask.clone()).unwrap();
    FreeBoundaryCells::from_mask(&mask)
}

fn sci(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.1e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

struct Outcome {
    pass: bool,
    detail: String,
    info: Vec<String>,
}

fn ac1() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in PS {
        for method in [
            Method::ProjectedDescent,
            Method::ActiveSet,
            Method::Penalty { eps: 1e-2 },
        ] {
            let m = manufactured(p, method);
            let g = *m.problem.grid();
            let h = g.h();
            let err = m.res.u.max_abs_diff(&m.exact).unwrap();
            // Every free-boundary cell lies within 2h of x = 1/2 and every row of cells has one.
            let fb = fb_cells(&m);
            let far = fb
                .cells()
                .iter()
                .map(|&(ci, cj)| (g.cell_center(ci, cj)[0] - 0.5).abs())
                .fold(0.0, f64::max);
            let rows = (0..g.ny() - 1).all(|cj| fb.cells().iter().any(|c| c.1 == cj));
            let ok = err <= 5e-3 && far <= 2.0 * h && rows && m.elapsed <= 60.0;
            pass &= ok;
            parts.push(format!(
                "p={p} {} err={err:.1e} fb={:.2}h {:.1}s",
                method.name(),
                far / h,
                m.elapsed
            ));
        }
    }
    Outcome {
        pass,
        detail: parts.join("; "),
        info: vec![],
    }
}

fn ac2(ms: &[Manufactured]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in ms {
        let p = m.p;
        let x0 = fb_node(m);
        let fb = fb_cells(m);
        let nf = m.problem.nf();
        // Four dyadic halvings give five radii r = 2^-1 .. 2^-5.
        let s = growth_fit_solution(&m.res.u, &fb, x0, nf, 4).unwrap();
        let d = growth_fit_gradient(&m.res.u, &fb, x0, nf, 4).unwrap();
        let es = (s.fitted_exponent - p / (p - 1.0)).abs() / (p / (p - 1.0));
        let ed = (d.fitted_exponent - 1.0 / (p - 1.0)).abs() / (1.0 / (p - 1.0));
        pass &= s.radii.len() == 5 && es <= 0.10 && ed <= 0.15;
        parts.push(format!(
            "p={p} S-exp={:.3} ({:.1}%) grad-exp={:.3} ({:.1}%)",
            s.fitted_exponent,
            100.0 * es,
            d.fitted_exponent,
            100.0 * ed
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
        info: vec![],
    }
}

fn ac3(ms: &[Manufactured]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in ms {
        let opts = SolverOptions::default();
        let tol = 10.0 * opts.tol_residual * m.problem.scale();
        let runs: Vec<(f64, SolveResult)> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&eps| (eps, solve_penalty(&m.problem, eps, &opts).unwrap()))
            .collect();
        // Direct pointwise evaluation, then the library check as a second route.
        let mut excess = 0.0_f64;
        let mut gaps = Vec::new();
        for (eps, r) in &runs {
            for (&ue, &u) in r.u.values().iter().zip(m.res.u.values()) {
                excess = excess.max(u - ue - tol).max(ue - eps - tol - u);
            }
            gaps.push(r.u.max_abs_diff(&m.res.u).unwrap());
        }
        let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
        let report = check_penalty_sandwich(&m.res, &m.problem, &runs).unwrap();
        let ok = excess <= 0.0 && monotone && report.pass;
        pass &= ok;
        parts.push(format!(
            "p={p} gaps=[{}] excess={excess:.1e} check={}",
            sci(&gaps),
            report.pass,
            p = m.p
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
        info: vec![],
    }
}

/// Random trigonometric obstacle below zero boundary data, and a source in [0.5, 2].
fn trig_instance(rng: &mut ChaCha8Rng, g: Grid2D) -> (ScalarField, ScalarField) {
    let amp = rng.gen_range(0.05..0.2);
    let (k1, k2, ph) = (
        rng.gen_range(1.0..3.0),
        rng.gen_range(1.0..3.0),
        rng.gen_range(0.0..2.0 * PI),
    );
    let (m1, m2, ph2) = (
        rng.gen_range(1.0..4.0),
        rng.gen_range(1.0..4.0),
        rng.gen_range(0.0..2.0 * PI),
    );
    let psi = ScalarField::from_fn(g, |x, y| {
        amp * (PI * x).sin() * (PI * y).sin() * (1.0 + 0.3 * (k1 * PI * x + k2 * PI * y + ph).cos())
            - 0.05
    });
    let f = ScalarField::from_fn(g, |x, y| {
        1.25 + 0.75 * (m1 * x + ph2).sin() * (m2 * y).cos()
    });
    (psi, f)
}

fn ac4() -> Outcome {
    let g = Grid2D::unit(65).unwrap();
    let bounds = DataBounds {
        lambda0: Some(0.5),
        lambda1: Some(2.0),
        m0: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let instances: Vec<_> = (0..20).map(|_| trig_instance(&mut rng, g)).collect();
    let mut pass = true;
    let mut detail = String::new();
    let mut info = Vec::new();
    for p in PS {
        let (mut worst, mut worst_away, mut tol) = (0.0_f64, 0.0_f64, 0.0_f64);
        let mut all = true;
        for (psi, f) in &instances {
            let problem = ObstacleProblem::new(
                NFunction::power_law(p).unwrap(),
                f.clone(),
                psi.clone(),
                ScalarField::zeros(g),
            )
            .and_then(|pr| pr.with_bounds(bounds))
            .unwrap();
            let res = solve(&problem, &SolverOptions::default()).unwrap();
            let rep = check_lewy_stampacchia(&res, &problem).unwrap();
            all &= rep.violation <= 10.0 * SolverOptions::default().tol_residual * problem.scale();
            worst = worst.max(rep.violation);
            worst_away = worst_away.max(rep.constants["violation_off_interface"]);
            tol = tol.max(rep.tolerance);
        }
        if p == 2.0 {
            pass = all;
            detail = format!("p=2 20 instances, max violation {worst:.1e} (tol {tol:.1e})");
        } else {
            info.push(format!(
                "p={p}: all-node violation {worst:.1e}, off-interface {worst_away:.1e} (tol {tol:.1e})"
            ));
        }
    }
    Outcome { pass, detail, info }
}

fn ac5() -> Outcome {
    let g = Grid2D::unit(65).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pass = true;
    let mut parts = Vec::new();
    for p in PS {
        let nf = NFunction::power_law(p).unwrap();
        let data = ScalarField::from_fn(g, |x, _| a_tilde(p, (x - 0.5).max(0.0)));
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..10 {
            let mut source = || {
                let (a, b, c, d) = (
                    rng.gen_range(0.5..2.0),
                    rng.gen_range(0.0..0.5),
                    rng.gen_range(1.0..4.0),
                    rng.gen_range(0.0..2.0 * PI),
                );
                ScalarField::from_fn(g, move |x, y| a + b * (c * x + d).sin() * (c * y).cos())
            };
            let (f1, f2) = (source(), source());
            let p1 =
                ObstacleProblem::new(nf.clone(), f1, ScalarField::zeros(g), data.clone()).unwrap();
            let p2 = p1.with_source(f2).unwrap();
            let opts = SolverOptions::default();
            let (r1, r2) = (solve(&p1, &opts).unwrap(), solve(&p2, &opts).unwrap());
            let rep = check_l1_contraction(&r1, &p1, &r2, &p2).unwrap();
            let tol = 10.0 * opts.tol_residual * p1.scale();
            let slack = rep.measured_lhs - rep.measured_rhs * (1.0 + CONTRACTION_REL) - tol;
            pass &= slack <= 0.0 && rep.pass;
            worst = worst.max(rep.measured_lhs / rep.measured_rhs);
        }
        parts.push(format!("p={p} max lhs/rhs={worst:.4}"));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
        info: vec![],
    }
}

fn ac6(ms: &[Manufactured]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in ms {
        let h = m.problem.grid().h();
        let radii = [1.0 / 8.0, 1.0 / 16.0];
        let est = hausdorff_box_estimate(&fb_cells(m), fb_node(m), &radii, &[h, 2.0 * h, 4.0 * h])
            .unwrap();
        let mut spread = 0.0_f64;
        for r in radii {
            let e: Vec<f64> = est
                .entries
                .iter()
                .filter(|e| e.r == r)
                .map(|e| e.estimate)
                .collect();
            let (lo, hi) = e
                .iter()
                .fold((f64::INFINITY, 0.0_f64), |(a, b), &v| (a.min(v), b.max(v)));
            spread = spread.max(hi / lo);
            pass &= lo > 0.0 && hi / lo <= 2.0 && hi <= 4.0 * r;
        }
        parts.push(format!(
            "p={} spread={spread:.2} max N·δ/r={:.2}",
            m.p, est.fitted_c
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
        info: vec![],
    }
}

fn ac7(ms: &[Manufactured]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in ms {
        let h = m.problem.grid().h();
        let deltas = [4.0 * h, 8.0 * h, 16.0 * h];
        let rep = measure_degenerate_set(
            &m.res.u,
            m.problem.nf(),
            fb_node(m),
            0.25,
            &deltas,
            m.res.contact_tol,
            None,
        )
        .unwrap();
        let ratios: Vec<f64> = rep.entries.iter().map(|e| e.ratio).collect();
        pass &= ratios.len() == 3 && ratios.iter().all(|&q| (1.0..=4.0).contains(&q));
        parts.push(format!("p={} ratios={ratios:.2?}", m.p));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
        info: vec![],
    }
}

fn families() -> Vec<NFunction> {
    let p: ScalarFn = Arc::new(|t: f64| 2.5 + 0.5 * t.ln().tanh());
    let dp: ScalarFn = Arc::new(|t: f64| {
        let c = t.ln().cosh();
        0.5 / (t * c * c)
    });
    vec![
        NFunction::power_law(1.5).unwrap(),
        NFunction::power_law(3.0).unwrap(),
        NFunction::new(NFunctionSpec::LogPower {
            alpha: 2.0,
            beta: 1.0,
            gamma: 2.0,
        })
        .unwrap(),
        NFunction::new(NFunctionSpec::PiecewisePower {
            alpha: 1.0,
            beta: 2.0,
            t0: 1.0,
            c1: 1.0,
            c2: 0.5,
            c3: 0.5,
        })
        .unwrap(),
        NFunction::new(NFunctionSpec::VariableExponent(VariableExponent::new(
            "tanh", p, dp,
        )))
        .unwrap(),
    ]
}

fn ac8() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for nf in families() {
        let rep = measure_toolbox_inequalities(&nf, 1000, 8).unwrap();
        let scan = monotonicity_scan(&nf, 10_000, 8);
        // Independent spot check of the index bounds and the primitive sandwich.
        let (a0, a1) = (nf.a0(), nf.a1());
        let mut direct = 0.0_f64;
        for _ in 0..1000 {
            let t = 10f64.powf(rng.gen_range(-3.0..3.0));
            let q = t * nf.da(t) / nf.a(t);
            direct = direct.max((a0 - q) / a0).max((q - a1) / a1);
            let (lo, hi, prim) = (
                t * nf.a(t) / (1.0 + a1),
                t * nf.a(t) / (1.0 + a0),
                nf.primitive(t),
            );
            direct = direct.max((lo - prim) / prim).max((prim - hi) / prim);
        }
        let ok = rep.max_violation <= 1e-8 && direct <= 1e-8 && scan.min_relative_pairing >= 0.0;
        pass &= ok;
        parts.push(format!(
            "{} viol={:.1e} direct={direct:.1e} pairing={:.1e}",
            rep.family, rep.max_violation, scan.min_relative_pairing
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
        info: vec![],
    }
}

fn ac9() -> Outcome {
    let g = Grid2D::unit(N).unwrap();
    let x0 = [0.5, 0.0];
    let singular = ScalarField::from_fn(g, |x, y| (1.0 / (x - x0[0]).hypot(y - x0[1])).min(1e3));
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [2.0, 3.0] {
        let template = ObstacleProblem::new(
            NFunction::power_law(p).unwrap(),
            singular.clone(),
            ScalarField::constant(g, -0.05),
            ScalarField::zeros(g),
        )
        .unwrap();
        let rep = entropy_convergence_experiment(
            &template,
            &singular,
            &[4.0, 16.0, 64.0, 256.0],
            1.5,
            &SolverOptions::default(),
        )
        .unwrap();
        let d: Vec<f64> = rep
            .levels
            .iter()
            .filter_map(|l| l.distance_to_previous)
            .collect();
        let chi: Vec<f64> = rep.levels.iter().map(|l| l.chi_distance).collect();
        let ratios: Vec<f64> = d.windows(2).map(|w| w[0] / w[1]).collect();
        let ok = d.len() == 3
            && ratios.iter().all(|&q| q >= 2.0)
            && chi.windows(2).all(|w| w[1] <= w[0]);
        pass &= ok;
        parts.push(format!(
            "p={p} distance ratios={ratios:.2?} chi=[{}]",
            sci(&chi)
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
        info: vec![],
    }
}

const SUITE: &str = r#"
name = "suite"
seed = 17

[nfunction]
family = "power"
p = 1.5

[grid]
nx = 33

[fields]
f = "1 + 0.5 * sin(3 * x) * cos(2 * y)"
psi = "0.1 * sin(pi * x) * sin(pi * y) - 0.02"
g = 0

[solver]
method = "projected_descent"

[[checks]]
kind = "lewy_stampacchia"

[[checks]]
kind = "semilinear_form"

[[checks]]
kind = "l1_contraction"
random_pairs = 3

[[checks]]
kind = "penalty_sandwich"

[[analytics]]
kind = "toolbox"
samples = 200
pairs = 500

[[analytics]]
kind = "growth"
n_dyadic = 3
"#;

fn run_json(dir: &std::path::Path) -> serde_json::Value {
    let exp = config::parse(SUITE, dir, "suite", None).unwrap();
    let out = OutputDir::create(dir.join("out")).unwrap();
    run_experiment(&exp, &out, RunOptions::default()).unwrap();
    let mut v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("out/run.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v
}

fn ac10() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ja, jb) = (run_json(a.path()), run_json(b.path()));
    let same_json = ja == jb;
    let tables = ["checks.csv", "metrics.csv", "fields/u.csv"];
    let same_tables = tables.iter().all(|t| {
        std::fs::read(a.path().join("out").join(t)).unwrap()
            == std::fs::read(b.path().join("out").join(t)).unwrap()
    });
    Outcome {
        pass: same_json && same_tables,
        detail: format!("run.json identical: {same_json}, tables identical: {same_tables}"),
        info: vec![],
    }
}

fn main() {
    let start = Instant::now();
    let mut failed = 0;
    let mut report = |id: &str, o: Outcome| {
        println!(
            "{id} {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        for line in o.info {
            println!("{id} INFO: {line}");
        }
        if !o.pass {
            failed += 1;
        }
    };
    report("AC1", ac1());
    let ms: Vec<Manufactured> = PS
        .iter()
        .map(|&p| manufactured(p, Method::ProjectedDescent))
        .collect();
    report("AC2", ac2(&ms));
    report("AC3", ac3(&ms));
    report("AC4", ac4());
    report("AC5", ac5());
    report("AC6", ac6(&ms));
    report("AC7", ac7(&ms));
    report("AC8", ac8());
    report("AC9", ac9());
    report("AC10", ac10());
    println!(
        "acceptance: {} of 10 criteria failed ({:.0}s)",
        failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
