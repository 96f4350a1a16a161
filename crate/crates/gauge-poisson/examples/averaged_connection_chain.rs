//! Build the averaged connection pair generated by the radial section on
//! the trivial so(3)* bundle, verify the local compatibility conditions,
//! and integrate the associated chart dynamics.

use gauge_poisson::averaging::{GroupKind, QuadSpec, SectionField};
use gauge_poisson::bundle::{
    averaged_connection, check_ico, check_lpvh1, check_lpvh2, check_lpvh3, generalized_wong_rhs,
    ConnectionPair, SectionFamily,
};
use gauge_poisson::dynamics::{integrate, kinetic_hamiltonian, monitor, radial_guard, Metric};
use gauge_poisson::lie_poisson::LieAlgebraStructure;
use gauge_poisson::rng::SplitMix64;
use gauge_poisson::{Field, Phase, PhaseFunction};
use nalgebra::DVector;

fn main() {
    let alg = LieAlgebraStructure::so3();
    let base = ConnectionPair::flat(3, &alg);
    let family = SectionFamily::circle(SectionField::radial());
    let quad = QuadSpec { circle_nodes: 32, ..QuadSpec::default() };
    let pair = averaged_connection(&base, &family, GroupKind::Circle, &quad).unwrap();

    let mut rng = SplitMix64::new(3);
    let qs: Vec<DVector<f64>> =
        (0..6).map(|_| DVector::from_fn(3, |_, _| rng.uniform(0.6, 1.6))).collect();
    let v1 = check_lpvh1(&pair, &qs).unwrap();
    let v2 = check_lpvh2(&pair, &qs).unwrap();
    let v3 = check_lpvh3(&pair, &qs).unwrap();
    let ico = check_ico(&pair, &family, &qs).unwrap();
    println!("compatibility of the averaged pair:");
    println!("  derivation/connection identity: {:.3e}", v1.max_residual);
    println!("  curvature identity:             {:.3e}", v2.max_residual);
    println!("  cyclic differential identity:   {:.3e}", v3.max_residual);
    println!("  section invariance:             {:.3e}", ico.ad_norm.max_residual);

    let metric = Metric::euclidean(3);
    let rhs = generalized_wong_rhs(&pair, &metric);
    let x0 = Phase::from_slices(&[0.3, 0.1, -0.2], &[1.0, 0.5, 0.8], &[0.2, -0.4, 0.5]);
    let guard = radial_guard(1e-3);
    let traj = integrate(&rhs, &x0, 5.0, 1e-3, Some(&guard)).unwrap();
    let monitored = vec![
        kinetic_hamiltonian(&metric),
        PhaseFunction::from_qy(
            "|y|^2",
            Field::new(|_: &DVector<f64>, y: &DVector<f64>| y.norm_squared()),
            3,
            3,
        ),
        PhaseFunction::from_qy("<s,y>", SectionField::radial().moment(), 3, 3),
    ];
    let report = monitor(&traj, &monitored);
    println!();
    println!("chart dynamics to t = 5:");
    for e in &report.entries {
        println!("  {:<8} initial {:>12.8}, relative drift {:.3e}", e.name, e.initial, e.max_rel_drift);
    }
}
