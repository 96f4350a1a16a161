//! Average momentum maps over larger compact groups: a 2-torus acting on a
//! product fiber and the full rotation group on so(3)*.

use gauge_poisson::averaging::{
    haar_average, so3_group_average, torus_average, FiberwiseAction, QuadSpec, SectionField,
};
use gauge_poisson::lie_poisson::{LieAlgebraStructure, PoissonFiber};
use gauge_poisson::Field;
use nalgebra::DVector;

fn main() {
    // torus: two commuting circles on so(3) + so(3)
    let alg = LieAlgebraStructure::so3().direct_sum(&LieAlgebraStructure::so3());
    let fiber = PoissonFiber::lie_poisson(alg);
    let s1 = SectionField::new(3, 6, |q: &DVector<f64>| {
        let r = q.norm();
        DVector::from_vec(vec![q[0] / r, q[1] / r, q[2] / r, 0.0, 0.0, 0.0])
    });
    let s2 = SectionField::new(3, 6, |q: &DVector<f64>| {
        DVector::from_vec(vec![0.0, 0.0, 0.0, q[0].cos(), q[0].sin(), 0.0])
    });
    let torus = FiberwiseAction::torus_from_circles(vec![
        FiberwiseAction::section_circle(&s1, &fiber).unwrap(),
        FiberwiseAction::section_circle(&s2, &fiber).unwrap(),
    ])
    .unwrap();
    let quad = QuadSpec::default();
    let avg = torus_average(&torus, true, &quad).unwrap();
    let q = DVector::from_vec(vec![1.0, 0.5, 0.8]);
    let y = DVector::from_vec(vec![0.2, -0.4, 0.5, 0.3, 0.1, -0.2]);
    println!("2-torus averaged gauge form at a sample point:");
    for i in 0..3 {
        println!("  A_{} = {:>12.8}", i + 1, avg.form.eval(i, &q, &y).unwrap());
    }

    // rotation group: Haar-weighted ball rule, normalization sanity first
    let so3_fiber = PoissonFiber::so3();
    let group = FiberwiseAction::so3_group(&so3_fiber, 3).unwrap();
    let one = haar_average(&group, &Field::constant(1.0), &quad).unwrap();
    let y3 = DVector::from_vec(vec![0.2, -0.4, 0.5]);
    println!();
    println!("rotation-group Haar average of 1: {:.12}", one.eval(&q, &y3));
    let mean_y = haar_average(&group, &Field::y_coord(0, 3), &quad).unwrap();
    println!("rotation-group Haar average of y1: {:.3e} (zero by symmetry)", mean_y.eval(&q, &y3));

    let avg_group = so3_group_average(&group, true, &quad).unwrap();
    println!("group-averaged gauge form (constant momentum frame, vanishes):");
    for i in 0..3 {
        println!("  A_{} = {:.3e}", i + 1, avg_group.form.eval(i, &q, &y3).unwrap());
    }
}
