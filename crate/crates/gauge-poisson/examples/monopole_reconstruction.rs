//! Reconstruct the monopole gauge form by circle averaging.
//!
//! The radial section s(q) = q/|q| of the so(3)* fiber generates a circle
//! of fiberwise rotations. Averaging its momentum map against the sawtooth
//! weight produces a gauge 1-form; for this section the result has the
//! closed form A_i = (q x y)_i / |q|^2, which the quadrature reproduces to
//! near machine precision.

use gauge_poisson::averaging::{s1_average, FiberwiseAction, SectionField};
use gauge_poisson::lie_poisson::PoissonFiber;
use nalgebra::DVector;

fn main() {
    let fiber = PoissonFiber::so3();
    let action = FiberwiseAction::section_circle(&SectionField::radial(), &fiber).unwrap();
    let averaged = s1_average(&action.moments()[0], &action, true, 128).unwrap();

    let y = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    println!("averaged gauge form vs closed form at y = (1, 0, 0)");
    println!("{:>24} {:>14} {:>14} {:>12}", "q", "A_2 averaged", "A_2 closed", "delta");
    for k in 0..5 {
        let s = 0.6 + 0.25 * k as f64;
        let q = DVector::from_vec(vec![s, 0.5 * s, 0.8]);
        let got = averaged.form.eval(1, &q, &y).unwrap();
        let reference = (q[2] * y[0] - q[0] * y[2]) / q.norm_squared();
        println!(
            "({:5.2}, {:5.2}, {:5.2}) {:>14.10} {:>14.10} {:>12.3e}",
            q[0],
            q[1],
            q[2],
            got,
            reference,
            (got - reference).abs()
        );
    }

    println!();
    println!("node counts: {:?}, normalized: {}", averaged.node_counts, averaged.normalized);
}
