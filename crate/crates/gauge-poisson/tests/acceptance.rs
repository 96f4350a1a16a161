//! End-to-end acceptance suite: one test per shipped guarantee, each
//! printing a single PASS/FAIL line with the measured residual.

use gauge_poisson::averaging::{
    check_ac, check_invariance, haar_average, s1_average, torus_average, FiberwiseAction,
    QuadSpec, SectionField,
};
use gauge_poisson::bundle::{
    averaged_connection, check_ico, check_lpvh1, check_lpvh2, check_lpvh3, generalized_wong_rhs,
    solve_ae_so3, ConnectionPair, SectionFamily,
};
use gauge_poisson::dynamics::{
    hamiltonian_rhs, integrate, kinetic_hamiltonian, monitor, radial_guard, wong_rhs, Metric,
};
use gauge_poisson::expr;
use gauge_poisson::gauge::{GaugeForm, GaugePoissonStructure, LinearGaugePotential};
use gauge_poisson::lie_poisson::{LieAlgebraStructure, PoissonFiber};
use gauge_poisson::numerics::{matrix_rank, DEFAULT_RANK_TOL};
use gauge_poisson::phase::Coord;
use gauge_poisson::rng::SplitMix64;
use gauge_poisson::scenario;
use gauge_poisson::{Field, Phase, PhaseFunction};
use gauge_poisson::averaging::GroupKind;
use nalgebra::DVector;

fn verdict(name: &str, pass: bool, detail: &str) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn v3(a: f64, b: f64, c: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b, c])
}

fn cross(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    v3(
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )
}

fn random_unit_scaled(rng: &mut SplitMix64, lo: f64, hi: f64) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0));
        let norm = v.norm();
        if norm > 0.1 {
            return v * (rng.uniform(lo, hi) / norm);
        }
    }
}

fn radial_action() -> FiberwiseAction {
    FiberwiseAction::section_circle(&SectionField::radial(), &PoissonFiber::so3()).unwrap()
}

fn wu_yang_structure() -> GaugePoissonStructure {
    GaugePoissonStructure::new(PoissonFiber::so3(), GaugeForm::wu_yang()).unwrap()
}

#[test]
fn monopole_reconstruction_matches_closed_form() {
    let action = radial_action();
    let avg = s1_average(&action.moments()[0], &action, true, 256).unwrap();
    let mut rng = SplitMix64::new(11);
    let mut max = 0.0f64;
    for _ in 0..100 {
        let q = random_unit_scaled(&mut rng, 0.5, 3.0);
        let y = DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0));
        let reference = cross(&q, &y) / q.norm_squared();
        for i in 0..3 {
            max = max.max((avg.form.eval(i, &q, &y).unwrap() - reference[i]).abs());
        }
    }
    verdict(
        "monopole reconstruction",
        max <= 1e-10,
        &format!("max componentwise deviation {max:.3e}, tol 1e-10"),
    );
}

fn max_jacobiator(structure: &GaugePoissonStructure, points: &[Phase], tol: f64) -> f64 {
    let (m, n) = (structure.m, structure.n());
    let coords: Vec<PhaseFunction> = (0..m)
        .map(Coord::P)
        .chain((0..m).map(Coord::Q))
        .chain((0..n).map(Coord::Y))
        .map(|c| PhaseFunction::coord(c, m, n))
        .collect();
    let dim = coords.len();
    let mut max = 0.0f64;
    for a in 0..dim {
        for b in (a + 1)..dim {
            for c in (b + 1)..dim {
                for x in points {
                    let r = structure.jacobiator(&coords[a], &coords[b], &coords[c], x).unwrap();
                    max = max.max(r.abs());
                    assert!(r.abs() <= tol, "triple ({a},{b},{c}) residual {r:.3e}");
                }
            }
        }
    }
    max
}

#[test]
fn jacobi_identity_over_all_coordinate_triples() {
    let mut rng = SplitMix64::new(12);
    let points: Vec<Phase> = (0..10)
        .map(|_| {
            Phase::new(
                DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0)),
                random_unit_scaled(&mut rng, 0.6, 1.6),
                DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0)),
            )
        })
        .collect();
    let wu = max_jacobiator(&wu_yang_structure(), &points, 1e-6);
    let generic = LinearGaugePotential::new(3, 3, |q: &DVector<f64>| {
        nalgebra::DMatrix::from_row_slice(
            3,
            3,
            &[q[1], -q[0], 0.3, 0.1 * q[2], q[0] + q[1], -0.2, 0.5, q[2], q[0]],
        )
    });
    let gen_structure =
        GaugePoissonStructure::new(PoissonFiber::so3(), generic.contract()).unwrap();
    let gen = max_jacobiator(&gen_structure, &points, 1e-6);
    let max = wu.max(gen);
    verdict(
        "jacobi identity",
        max <= 1e-6,
        &format!("max jacobiator {max:.3e} over all coordinate triples, tol 1e-6"),
    );
}

#[test]
fn rank_is_two_m_plus_fiber_rank() {
    let structure = wu_yang_structure();
    let mut rng = SplitMix64::new(13);
    let mut ok = true;
    for _ in 0..20 {
        let x = Phase::new(
            DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0)),
            random_unit_scaled(&mut rng, 0.6, 1.6),
            random_unit_scaled(&mut rng, 0.5, 1.5),
        );
        let got = structure.rank_at(&x).unwrap();
        let psi = matrix_rank(&structure.fiber.psi(&x.q, &x.y), DEFAULT_RANK_TOL).unwrap();
        ok = ok && got == 6 + psi && got == 8;
    }
    let zero_leaf = structure
        .rank_at(&Phase::new(v3(0.1, 0.2, 0.3), v3(1.0, 0.5, 0.8), v3(0.0, 0.0, 0.0)))
        .unwrap();
    ok = ok && zero_leaf == 6;
    verdict(
        "rank formula",
        ok,
        &format!("rank 8 at 20 generic points, rank {zero_leaf} on the zero leaf (want 6)"),
    );
}

#[test]
fn structure_invariant_under_generating_action_with_negative_control() {
    let structure = wu_yang_structure();
    let quad = QuadSpec::default();
    let good = check_invariance(&structure, &radial_action(), 20, 21, 1e-8, &quad).unwrap();
    let fixed_axis = FiberwiseAction::section_circle(
        &SectionField::constant(3, v3(0.0, 0.0, 1.0)),
        &PoissonFiber::so3(),
    )
    .unwrap();
    let control = check_invariance(&structure, &fixed_axis, 20, 21, 1e-8, &quad).unwrap();
    verdict(
        "bracket invariance",
        good.pass && !control.pass,
        &format!(
            "pushforward residual {:.3e} (tol 1e-8), fixed-axis control residual {:.3e} (must fail)",
            good.pushforward.max_residual, control.pushforward.max_residual
        ),
    );
}

#[test]
fn conserved_quantities_along_pinned_trajectory() {
    let structure = wu_yang_structure();
    let h = kinetic_hamiltonian(&Metric::euclidean(3));
    let rhs = hamiltonian_rhs(&structure, &h);
    let x0 = Phase::new(v3(0.3, 0.1, -0.2), v3(1.0, 0.5, 0.8), v3(0.2, -0.4, 0.5));
    let guard = radial_guard(1e-3);
    let traj = integrate(&rhs, &x0, 10.0, 1e-3, Some(&guard)).unwrap();
    let monitored = vec![
        h.clone(),
        PhaseFunction::from_qy(
            "|y|^2",
            Field::new(|_q: &DVector<f64>, y: &DVector<f64>| y.norm_squared()),
            3,
            3,
        ),
        PhaseFunction::from_qy(
            "J",
            Field::new(|q: &DVector<f64>, y: &DVector<f64>| q.dot(y) / q.norm()),
            3,
            3,
        ),
        PhaseFunction::coord(Coord::Y(0), 3, 3),
    ];
    let report = monitor(&traj, &monitored);
    let conserved = report.entries[..3].iter().map(|e| e.max_rel_drift).fold(0.0, f64::max);
    let y1_drift = report.entries[3].max_abs_drift;
    verdict(
        "first integrals",
        conserved <= 1e-8 && y1_drift > 1e-3,
        &format!(
            "H, |y|^2, <q/|q|,y> max relative drift {conserved:.3e} (tol 1e-8); \
             y1 drift {y1_drift:.3e} (control, must exceed 1e-3)"
        ),
    );
}

#[test]
fn averaging_condition_for_the_radial_section() {
    let action = radial_action();
    let mut rng = SplitMix64::new(14);
    let samples: Vec<(DVector<f64>, DVector<f64>)> = (0..50)
        .map(|_| {
            (
                random_unit_scaled(&mut rng, 0.6, 1.6),
                DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0)),
            )
        })
        .collect();
    let verdict_ac = check_ac(&action, &QuadSpec::default(), &samples, 1e-8).unwrap();
    verdict(
        "averaging condition",
        verdict_ac.pass,
        &format!("max averaged momentum gradient {:.3e}, tol 1e-8", verdict_ac.max_residual),
    );
}

#[test]
fn specializations_agree() {
    let alg = LieAlgebraStructure::so3();
    let pot = LinearGaugePotential::wu_yang();
    let metric = Metric::euclidean(3);
    let wong = wong_rhs(&pot, &alg, &metric);
    let structure = wu_yang_structure();
    let h = kinetic_hamiltonian(&metric);
    let general = hamiltonian_rhs(&structure, &h);
    let mut rng = SplitMix64::new(15);
    let mut max_wong = 0.0f64;
    for _ in 0..100 {
        let x = Phase::new(
            DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0)),
            random_unit_scaled(&mut rng, 0.6, 1.6),
            DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0)),
        );
        let d = (wong(0.0, &x).unwrap().flatten() - general(0.0, &x).unwrap().flatten()).amax();
        max_wong = max_wong.max(d);
    }
    let pair = ConnectionPair::from_linear_potential(&pot, &alg);
    let chart = generalized_wong_rhs(&pair, &metric);
    let mut max_chart = 0.0f64;
    for _ in 0..20 {
        let x = Phase::new(
            DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0)),
            random_unit_scaled(&mut rng, 0.6, 1.6),
            DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0)),
        );
        let d = (chart(0.0, &x).unwrap().flatten() - wong(0.0, &x).unwrap().flatten()).amax();
        max_chart = max_chart.max(d);
    }
    verdict(
        "dynamics specializations",
        max_wong <= 1e-8 && max_chart <= 1e-12,
        &format!(
            "color equations vs assembled field {max_wong:.3e} (tol 1e-8), \
             chart equations vs color equations {max_chart:.3e} (tol 1e-12)"
        ),
    );
}

#[test]
fn averaged_connection_chain() {
    let alg = LieAlgebraStructure::so3();
    let base = ConnectionPair::flat(3, &alg);
    let family = SectionFamily::circle(SectionField::radial());
    let quad = QuadSpec { circle_nodes: 32, ..QuadSpec::default() };
    let pair = averaged_connection(&base, &family, GroupKind::Circle, &quad).unwrap();
    let mut rng = SplitMix64::new(16);
    let qs: Vec<DVector<f64>> = (0..6).map(|_| random_unit_scaled(&mut rng, 0.6, 1.6)).collect();
    let v1 = check_lpvh1(&pair, &qs).unwrap();
    let v2 = check_lpvh2(&pair, &qs).unwrap();
    let v3r = check_lpvh3(&pair, &qs).unwrap();
    let ico = check_ico(&pair, &family, &qs).unwrap();
    let compat = v1.max_residual.max(v2.max_residual).max(v3r.max_residual);

    let mut max_contract = 0.0f64;
    for q in &qs {
        let coeffs = pair.potential_at(q).unwrap();
        let y = DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0));
        let reference = cross(q, &y) / q.norm_squared();
        for i in 0..3 {
            max_contract = max_contract.max((y.dot(&coeffs.column(i)) - reference[i]).abs());
        }
    }

    let solved = solve_ae_so3(&SectionField::radial()).unwrap();
    let s = SectionField::radial();
    let mut max_ae = 0.0f64;
    for q in &qs {
        let coeffs = solved.coeffs_at(q).unwrap();
        for i in 0..3 {
            let defect = (cross(&s.at(q), &coeffs.column(i).into_owned()) - s.d_at(q, i)).norm();
            max_ae = max_ae.max(defect);
        }
    }
    verdict(
        "averaged connection chain",
        v1.pass && v2.pass && v3r.pass && ico.pass && max_contract <= 1e-8 && max_ae <= 1e-10,
        &format!(
            "compatibility residual {compat:.3e} (tol 1e-6), section invariance {:.3e}, \
             contraction vs closed form {max_contract:.3e} (tol 1e-8), \
             chart solution defect {max_ae:.3e} (tol 1e-10)",
            ico.ad_norm.max_residual
        ),
    );
}

#[test]
fn haar_normalization_and_torus_consistency() {
    let fiber = PoissonFiber::so3();
    let group = FiberwiseAction::so3_group(&fiber, 3).unwrap();
    let quad = QuadSpec::default();
    let one = haar_average(&group, &Field::constant(1.0), &quad).unwrap();
    let mut rng = SplitMix64::new(17);
    let mut max_one = 0.0f64;
    for _ in 0..10 {
        let q = random_unit_scaled(&mut rng, 0.6, 1.6);
        let y = DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0));
        max_one = max_one.max((one.eval(&q, &y) - 1.0).abs());
    }

    let circle = radial_action();
    let torus = FiberwiseAction::torus_from_circles(vec![radial_action()]).unwrap();
    let direct = s1_average(&circle.moments()[0], &circle, true, quad.circle_nodes).unwrap();
    let via_torus = torus_average(&torus, true, &quad).unwrap();
    let mut max_torus = 0.0f64;
    for _ in 0..10 {
        let q = random_unit_scaled(&mut rng, 0.6, 1.6);
        let y = DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0));
        for i in 0..3 {
            let d = (direct.form.eval(i, &q, &y).unwrap() - via_torus.form.eval(i, &q, &y).unwrap())
                .abs();
            max_torus = max_torus.max(d);
        }
    }
    verdict(
        "haar normalization",
        max_one <= 1e-6 && max_torus <= 1e-12,
        &format!(
            "rotation-group average of 1 off by {max_one:.3e} (tol 1e-6), \
             1-torus vs circle averaging {max_torus:.3e} (tol 1e-12)"
        ),
    );
}

#[test]
fn parser_goldens() {
    let eval0 = |src: &str| {
        let e = expr::parse(src, 3, 3).unwrap();
        let ctx = expr::EvalContext::from_qy(&v3(0.3, 0.7, 1.1), &v3(0.0, 0.0, 0.0));
        expr::evaluate(&e, &ctx).unwrap()
    };
    let precedence = eval0("2+3*4^2");
    let unary = eval0("-2^2");
    let trig = eval0("sin(q1)^2 + cos(q1)^2 - 1").abs();
    let parse_fail = expr::parse("2 +* 3", 3, 3).is_err();
    let bad_config = scenario::build(
        scenario::parse_config(
            r#"{"name":"x","m":2,"fiber":{"type":"abelian","n":1},
                "gauge":{"type":"linear","coeffs":[["q9", "0"]]}}"#,
        )
        .unwrap(),
    );
    let config_rejected = matches!(bad_config, Err(gauge_poisson::Error::Config(_)));
    verdict(
        "expression parser goldens",
        precedence == 50.0 && unary == -4.0 && trig <= 1e-15 && parse_fail && config_rejected,
        &format!(
            "2+3*4^2 = {precedence} (want 50), -2^2 = {unary} (want -4), \
             trig identity residual {trig:.3e} (tol 1e-15), malformed input rejected: {parse_fail}, \
             out-of-range variable rejected as config error: {config_rejected}"
        ),
    );
}

#[test]
fn verify_runs_are_byte_identical() {
    let exe = env!("CARGO_BIN_EXE_gauge-poisson");
    let run = || {
        std::process::Command::new(exe)
            .args(["verify", "--config", "wu-yang", "--seed", "42"])
            .output()
            .expect("binary runs")
    };
    let a = run();
    let b = run();
    let identical = a.stdout == b.stdout && a.status.code() == Some(0) && b.status.code() == Some(0);
    verdict(
        "deterministic reports",
        identical,
        &format!(
            "two seeded verify runs: {} bytes vs {} bytes, exit codes {:?}/{:?}",
            a.stdout.len(),
            b.stdout.len(),
            a.status.code(),
            b.status.code()
        ),
    );
}
