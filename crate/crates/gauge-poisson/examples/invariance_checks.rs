//! Run the symmetry checks for the monopole structure under its generating
//! circle action: bracket invariance, the averaging condition, and the
//! momentum-map invariance condition, plus a deliberately broken control.

use gauge_poisson::averaging::{
    check_ac, check_ic1, check_invariance, FiberwiseAction, QuadSpec, SectionField,
};
use gauge_poisson::gauge::{GaugeForm, GaugePoissonStructure};
use gauge_poisson::lie_poisson::PoissonFiber;
use gauge_poisson::rng::SplitMix64;
use nalgebra::DVector;

fn main() {
    let fiber = PoissonFiber::so3();
    let structure = GaugePoissonStructure::new(fiber.clone(), GaugeForm::wu_yang()).unwrap();
    let action = FiberwiseAction::section_circle(&SectionField::radial(), &fiber).unwrap();
    let quad = QuadSpec::default();

    let mut rng = SplitMix64::new(5);
    let samples: Vec<(DVector<f64>, DVector<f64>)> = (0..20)
        .map(|_| {
            (
                DVector::from_fn(3, |_, _| rng.uniform(0.6, 1.6)),
                DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0)),
            )
        })
        .collect();

    let inv = check_invariance(&structure, &action, 20, 5, 1e-8, &quad).unwrap();
    println!(
        "bracket invariance: pushforward {:.3e}, curvature {:.3e} -> {}",
        inv.pushforward.max_residual,
        inv.curvature.max_residual,
        if inv.pass { "pass" } else { "fail" }
    );

    let ac = check_ac(&action, &quad, &samples, 1e-8).unwrap();
    println!(
        "averaging condition: {:.3e} -> {}",
        ac.max_residual,
        if ac.pass { "pass" } else { "fail" }
    );

    let ic1 = check_ic1(&structure.gauge, action.moments(), &fiber, &samples, 1e-6).unwrap();
    println!(
        "momentum invariance: casimir {:.3e}, commutator {:.3e} -> {}",
        ic1.casimir.max_residual,
        ic1.commutator.max_residual,
        if ic1.pass { "pass" } else { "fail" }
    );

    // control: rotations about a fixed axis do not preserve this structure
    let fixed = FiberwiseAction::section_circle(
        &SectionField::constant(3, DVector::from_vec(vec![0.0, 0.0, 1.0])),
        &fiber,
    )
    .unwrap();
    let bad = check_invariance(&structure, &fixed, 20, 5, 1e-8, &quad).unwrap();
    println!(
        "fixed-axis control: pushforward {:.3e} -> {} (expected to fail)",
        bad.pushforward.max_residual,
        if bad.pass { "pass" } else { "fail" }
    );
}
