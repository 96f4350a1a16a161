//! Assemble the full bracket matrix of the monopole structure at a point,
//! inspect its block layout and rank, and spot-check the Jacobi identity.

use gauge_poisson::gauge::{GaugeForm, GaugePoissonStructure};
use gauge_poisson::lie_poisson::PoissonFiber;
use gauge_poisson::phase::Coord;
use gauge_poisson::{Phase, PhaseFunction};

fn main() {
    let structure = GaugePoissonStructure::new(PoissonFiber::so3(), GaugeForm::wu_yang()).unwrap();
    let x = Phase::from_slices(&[0.3, 0.1, -0.2], &[1.0, 0.5, 0.8], &[0.2, -0.4, 0.5]);

    let mat = structure.assemble(&x).unwrap();
    println!("bracket matrix at the sample point, coordinate order (p, q, y):");
    for r in 0..9 {
        let row: Vec<String> = (0..9).map(|c| format!("{:8.4}", mat[(r, c)])).collect();
        println!("  [{}]", row.join(" "));
    }
    println!();
    println!("rank at y != 0: {} (expected 8 = 2*3 + 2)", structure.rank_at(&x).unwrap());
    let degenerate = Phase::from_slices(&[0.3, 0.1, -0.2], &[1.0, 0.5, 0.8], &[0.0, 0.0, 0.0]);
    println!("rank at y  = 0: {} (expected 6 = 2*3)", structure.rank_at(&degenerate).unwrap());

    println!();
    println!("jacobiator over a few coordinate triples:");
    let coords: Vec<PhaseFunction> = (0..3)
        .map(Coord::P)
        .chain((0..3).map(Coord::Q))
        .chain((0..3).map(Coord::Y))
        .map(|c| PhaseFunction::coord(c, 3, 3))
        .collect();
    for (a, b, c) in [(0, 1, 2), (0, 3, 6), (0, 1, 8), (6, 7, 8)] {
        let r = structure.jacobiator(&coords[a], &coords[b], &coords[c], &x).unwrap();
        println!(
            "  {{{}, {{{}, {}}}}} cyclic: {:.3e}",
            coords[a].name, coords[b].name, coords[c].name, r
        );
    }
}
