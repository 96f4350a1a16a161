//! Integrate the color-charge equations of motion in the monopole field
//! and monitor the conserved quantities along the way.

use gauge_poisson::dynamics::{integrate, kinetic_hamiltonian, monitor, radial_guard, wong_rhs, Metric};
use gauge_poisson::gauge::LinearGaugePotential;
use gauge_poisson::lie_poisson::LieAlgebraStructure;
use gauge_poisson::{Field, Phase, PhaseFunction};
use nalgebra::DVector;

fn main() {
    let metric = Metric::euclidean(3);
    let rhs = wong_rhs(&LinearGaugePotential::wu_yang(), &LieAlgebraStructure::so3(), &metric);
    let x0 = Phase::from_slices(&[0.3, 0.1, -0.2], &[1.0, 0.5, 0.8], &[0.2, -0.4, 0.5]);
    let guard = radial_guard(1e-3);
    let traj = integrate(&rhs, &x0, 10.0, 1e-3, Some(&guard)).unwrap();
    println!("integrated {} steps to t = {}", traj.states.len() - 1, traj.times.last().unwrap());

    let monitored = vec![
        kinetic_hamiltonian(&metric),
        PhaseFunction::from_qy(
            "|y|^2",
            Field::new(|_: &DVector<f64>, y: &DVector<f64>| y.norm_squared()),
            3,
            3,
        ),
        PhaseFunction::from_qy(
            "<q/|q|, y>",
            Field::new(|q: &DVector<f64>, y: &DVector<f64>| q.dot(y) / q.norm()),
            3,
            3,
        ),
        PhaseFunction::coord(gauge_poisson::phase::Coord::Y(0), 3, 3),
    ];
    let report = monitor(&traj, &monitored);
    println!();
    println!("{:>12} {:>16} {:>14} {:>14}", "quantity", "initial", "abs drift", "rel drift");
    for e in &report.entries {
        println!(
            "{:>12} {:>16.10} {:>14.3e} {:>14.3e}",
            e.name, e.initial, e.max_abs_drift, e.max_rel_drift
        );
    }
    println!();
    println!("the first three are conserved; the single color component y1 is not");
}
