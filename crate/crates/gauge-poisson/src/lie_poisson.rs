//! Lie algebra structure constants, the fiber Lie-Poisson tensor,
//! coadjoint operators and flows, and Casimir testing.
//!
//! Sign convention, fixed once here and inherited by everything downstream:
//! `ad*_x y` is defined so that the vertical Hamiltonian vector field of
//! `J = <x, y>` equals `ad*_x y . d/dy`. For the cyclic so(3) constants this
//! gives `ad*_x y = y x x` (cross product).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::field::Field;
use crate::numerics::matrix_exp_action;
use crate::{Error, Result};

/// Structure constants `lambda^{alpha beta}_gamma` of an n-dimensional Lie
/// algebra, stored dense.
#[derive(Debug, Clone)]
pub struct LieAlgebraStructure {
    pub n: usize,
    lambda: Vec<f64>, // [alpha * n * n + beta * n + gamma]
}

/// Well-formedness report for structure constants.
#[derive(Debug, Clone)]
pub struct StructureReport {
    pub max_antisymmetry_violation: f64,
    pub max_jacobi_residual: f64,
    pub pass: bool,
}

impl LieAlgebraStructure {
    pub fn new(n: usize, lambda: Vec<f64>) -> Result<Self> {
        if lambda.len() != n * n * n {
            return Err(Error::Dimension(format!(
                "structure constants need {} entries for n = {n}, got {}",
                n * n * n,
                lambda.len()
            )));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { at: "structure constants".into() });
        }
        Ok(Self { n, lambda })
    }

    /// The cyclic so(3) constants `lambda^{ab}_c = eps_{abc}`.
    pub fn so3() -> Self {
        let mut lambda = vec![0.0; 27];
        for (a, b, c, s) in [
            (0, 1, 2, 1.0),
            (1, 2, 0, 1.0),
            (2, 0, 1, 1.0),
            (1, 0, 2, -1.0),
            (2, 1, 0, -1.0),
            (0, 2, 1, -1.0),
        ] {
            lambda[a * 9 + b * 3 + c] = s;
        }
        Self { n: 3, lambda }
    }

    pub fn abelian(n: usize) -> Self {
        Self { n, lambda: vec![0.0; n * n * n] }
    }

    /// Direct sum: block-diagonal structure constants.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let n = self.n + other.n;
        let mut lambda = vec![0.0; n * n * n];
        for a in 0..self.n {
            for b in 0..self.n {
                for c in 0..self.n {
                    lambda[a * n * n + b * n + c] = self.lambda(a, b, c);
                }
            }
        }
        for a in 0..other.n {
            for b in 0..other.n {
                for c in 0..other.n {
                    lambda[(self.n + a) * n * n + (self.n + b) * n + (self.n + c)] =
                        other.lambda(a, b, c);
                }
            }
        }
        Self { n, lambda }
    }

    #[inline]
    /// Exactly the cyclic so(3) structure constants; used to pick fast
    /// rotation paths for flows.
    pub fn is_so3(&self) -> bool {
        self.n == 3 && self.lambda == Self::so3().lambda
    }

    pub fn lambda(&self, alpha: usize, beta: usize, gamma: usize) -> f64 {
        self.lambda[alpha * self.n * self.n + beta * self.n + gamma]
    }

    /// Lie bracket `[x, w]_gamma = lambda^{alpha beta}_gamma x^alpha w^beta`.
    pub fn bracket(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(x)?;
        self.check_len(w)?;
        let n = self.n;
        Ok(DVector::from_fn(n, |g, _| {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    acc += self.lambda(a, b, g) * x[a] * w[b];
                }
            }
            acc
        }))
    }

    /// Antisymmetry and Jacobi-identity residuals.
    pub fn check(&self) -> StructureReport {
        let n = self.n;
        let mut anti = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                for g in 0..n {
                    anti = anti.max((self.lambda(a, b, g) + self.lambda(b, a, g)).abs());
                }
            }
        }
        let mut jac = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                for g in 0..n {
                    for nu in 0..n {
                        let mut s = 0.0;
                        for mu in 0..n {
                            s += self.lambda(a, b, mu) * self.lambda(mu, g, nu)
                                + self.lambda(b, g, mu) * self.lambda(mu, a, nu)
                                + self.lambda(g, a, mu) * self.lambda(mu, b, nu);
                        }
                        jac = jac.max(s.abs());
                    }
                }
            }
        }
        StructureReport {
            max_antisymmetry_violation: anti,
            max_jacobi_residual: jac,
            pass: anti <= 1e-12 && jac <= 1e-12,
        }
    }

    /// Lie-Poisson tensor `Psi^{ab}(y) = lambda^{ab}_g y^g`.
    pub fn lie_poisson_tensor(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_len(y)?;
        let n = self.n;
        Ok(DMatrix::from_fn(n, n, |a, b| {
            let mut acc = 0.0;
            for g in 0..n {
                acc += self.lambda(a, b, g) * y[g];
            }
            acc
        }))
    }

    /// The coadjoint operator `ad*_x` as a matrix acting on coalgebra
    /// vectors: `(ad*_x y)_alpha = -lambda^{alpha beta}_gamma x^beta y^gamma`.
    pub fn ad_star_matrix(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_len(x)?;
        let n = self.n;
        Ok(DMatrix::from_fn(n, n, |a, g| {
            let mut acc = 0.0;
            for b in 0..n {
                acc -= self.lambda(a, b, g) * x[b];
            }
            acc
        }))
    }

    /// `ad*_x y`; for so(3) this is `y x x`.
    pub fn ad_star(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.ad_star_matrix(x)? * y)
    }

    /// The adjoint operator `ad_x = [x, .]` as a matrix on the algebra.
    pub fn ad_matrix(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_len(x)?;
        let n = self.n;
        Ok(DMatrix::from_fn(n, n, |g, b| {
            let mut acc = 0.0;
            for a in 0..n {
                acc += self.lambda(a, b, g) * x[a];
            }
            acc
        }))
    }

    /// Coadjoint flow `exp(t ad*_x) y0`.
    pub fn coad_flow(&self, x: &DVector<f64>, t: f64, y0: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.ad_star_matrix(x)?;
        matrix_exp_action(&m, t, y0)
    }

    /// Adjoint flow `Ad_{exp(t x)} w = exp(t ad_x) w` on the algebra.
    pub fn ad_flow(&self, x: &DVector<f64>, t: f64, w: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.ad_matrix(x)?;
        matrix_exp_action(&m, t, w)
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::Dimension(format!(
                "expected length {}, got {}",
                self.n,
                v.len()
            )));
        }
        Ok(())
    }
}

/// How the fiber Poisson tensor arises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiberKind {
    LiePoisson,
    General,
}

type PsiFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// The fiber `(N, Psi)` together with registered Casimir functions.
#[derive(Clone)]
pub struct PoissonFiber {
    pub n: usize,
    pub kind: FiberKind,
    pub algebra: Option<LieAlgebraStructure>,
    psi: PsiFn,
    pub casimirs: Vec<NamedCasimir>,
}

#[derive(Clone)]
pub struct NamedCasimir {
    pub name: String,
    pub field: Field,
}

/// Result of a pointwise Casimir test.
#[derive(Debug, Clone)]
pub struct CasimirReport {
    pub max_residual: f64,
    pub pass: bool,
}

impl PoissonFiber {
    /// Lie-Poisson fiber `Psi(y) = lambda^{ab}_g y^g`, independent of `q`.
    pub fn lie_poisson(algebra: LieAlgebraStructure) -> Self {
        let n = algebra.n;
        let alg = algebra.clone();
        Self {
            n,
            kind: FiberKind::LiePoisson,
            algebra: Some(algebra),
            psi: Arc::new(move |_q, y| alg.lie_poisson_tensor(y).expect("fiber dim checked")),
            casimirs: Vec::new(),
        }
    }

    /// The cyclic so(3)* fiber with `|y|^2` registered as a Casimir.
    pub fn so3() -> Self {
        let mut fiber = Self::lie_poisson(LieAlgebraStructure::so3());
        fiber.register_casimir(
            "|y|^2",
            Field::new(|_q, y: &DVector<f64>| y.norm_squared())
                .with_grad_q(|q: &DVector<f64>, _y: &DVector<f64>| DVector::zeros(q.len()))
                .with_grad_y(|_q: &DVector<f64>, y: &DVector<f64>| y * 2.0),
        );
        fiber
    }

    pub fn abelian(n: usize) -> Self {
        Self::lie_poisson(LieAlgebraStructure::abelian(n))
    }

    /// A general fiber from an explicit `Psi(q, y)` map.
    pub fn general<F>(n: usize, psi: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self { n, kind: FiberKind::General, algebra: None, psi: Arc::new(psi), casimirs: Vec::new() }
    }

    pub fn register_casimir(&mut self, name: impl Into<String>, field: Field) {
        self.casimirs.push(NamedCasimir { name: name.into(), field });
    }

    /// `Psi(q, y)`, antisymmetrized exactly.
    pub fn psi(&self, q: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        let m = (self.psi)(q, y);
        (&m - m.transpose()) * 0.5
    }

    /// Fiber bracket `{f, g}_N (q, y) = Psi^{ab} d_a f d_b g`.
    pub fn fiber_bracket(&self, f: &Field, g: &Field) -> Field {
        let fiber = self.clone();
        let f = f.clone();
        let g = g.clone();
        Field::new(move |q, y| {
            let psi = fiber.psi(q, y);
            let df = f.grad_y_at(q, y);
            let dg = g.grad_y_at(q, y);
            (psi * dg).dot(&df)
        })
    }

    /// Max of `|Psi grad_y C|` over the samples; passes iff below `tol`.
    pub fn is_casimir(
        &self,
        c: &Field,
        samples: &[(DVector<f64>, DVector<f64>)],
        tol: f64,
    ) -> CasimirReport {
        let mut max = 0.0f64;
        for (q, y) in samples {
            let psi = self.psi(q, y);
            let grad = c.grad_y_at(q, y);
            max = max.max((psi * grad).norm());
        }
        CasimirReport { max_residual: max, pass: max <= tol }
    }

}

impl std::fmt::Debug for PoissonFiber {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonFiber")
            .field("n", &self.n)
            .field("kind", &self.kind)
            .field("casimirs", &self.casimirs.len())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e(i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(3);
        v[i] = 1.0;
        v
    }

    #[test]
    fn so3_constants_pass_checks() {
        let rep = LieAlgebraStructure::so3().check();
        assert_eq!(rep.max_antisymmetry_violation, 0.0);
        assert_eq!(rep.max_jacobi_residual, 0.0);
        assert!(rep.pass);
        assert!(LieAlgebraStructure::abelian(4).check().pass);
    }

    #[test]
    fn constructed_antisymmetry_violation_fails() {
        let mut lambda = vec![0.0; 27];
        lambda[0 * 9 + 1 * 3 + 2] = 1.0; // lambda^{12}_3 = 1 but lambda^{21}_3 = 0
        let rep = LieAlgebraStructure::new(3, lambda).unwrap().check();
        assert!(!rep.pass);
        assert!(rep.max_antisymmetry_violation >= 1.0);
    }

    #[test]
    fn lie_poisson_tensor_so3() {
        let l = LieAlgebraStructure::so3();
        let psi = l.lie_poisson_tensor(&e(2)).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[0., 1., 0., -1., 0., 0., 0., 0., 0.]);
        assert_abs_diff_eq!(psi, expect, epsilon = 0.0);
        assert_abs_diff_eq!(
            l.lie_poisson_tensor(&DVector::zeros(3)).unwrap(),
            DMatrix::zeros(3, 3),
            epsilon = 0.0
        );
        let ab = LieAlgebraStructure::abelian(3);
        assert_abs_diff_eq!(
            ab.lie_poisson_tensor(&DVector::from_vec(vec![1., 2., 3.])).unwrap(),
            DMatrix::zeros(3, 3),
            epsilon = 0.0
        );
    }

    #[test]
    fn ad_star_is_cross_product_on_so3() {
        let l = LieAlgebraStructure::so3();
        // ad*_x y = y x x
        let got = l.ad_star(&e(2), &e(0)).unwrap();
        assert_abs_diff_eq!(got, DVector::from_vec(vec![0.0, -1.0, 0.0]), epsilon = 0.0);
        assert_abs_diff_eq!(
            l.ad_star(&DVector::zeros(3), &e(1)).unwrap(),
            DVector::zeros(3),
            epsilon = 0.0
        );
        let y = DVector::from_vec(vec![0.4, -1.0, 2.0]);
        assert_abs_diff_eq!(l.ad_star(&(2.0 * &y), &y).unwrap(), DVector::zeros(3), epsilon = 1e-15);
    }

    #[test]
    fn coad_flow_rotates_about_axis() {
        let l = LieAlgebraStructure::so3();
        for t in [0.0, 0.3, 1.7, -2.5] {
            let y = l.coad_flow(&e(2), t, &e(0)).unwrap();
            assert_abs_diff_eq!(y[0], t.cos(), epsilon = 1e-13);
            assert_abs_diff_eq!(y[1], -t.sin(), epsilon = 1e-13);
            assert_abs_diff_eq!(y[2], 0.0, epsilon = 1e-13);
        }
        // norm preserved
        let y0 = DVector::from_vec(vec![0.3, -0.4, 0.8]);
        let x = DVector::from_vec(vec![1.0, 0.5, -0.2]);
        for t in [-10.0, -3.0, 1.0, 10.0] {
            let y = l.coad_flow(&x, t, &y0).unwrap();
            assert_abs_diff_eq!(y.norm(), y0.norm(), epsilon = 1e-10);
        }
    }

    #[test]
    fn coad_flow_preserves_casimir() {
        let fiber = PoissonFiber::so3();
        let l = fiber.algebra.as_ref().unwrap();
        let y0 = DVector::from_vec(vec![1.0, 0.2, -0.7]);
        let x = DVector::from_vec(vec![0.5, -1.0, 0.3]);
        let c0 = y0.norm_squared();
        let mut t = -10.0;
        while t <= 10.0 {
            let y = l.coad_flow(&x, t, &y0).unwrap();
            assert!((y.norm_squared() - c0).abs() <= 1e-10);
            t += 2.5;
        }
    }

    #[test]
    fn fiber_bracket_reproduces_tensor_entries() {
        let fiber = PoissonFiber::so3();
        let y1 = Field::y_coord(0, 3);
        let y2 = Field::y_coord(1, 3);
        let br = fiber.fiber_bracket(&y1, &y2);
        let q = DVector::zeros(3);
        let y = DVector::from_vec(vec![0.3, -1.1, 2.5]);
        // {y^1, y^2} = y^3
        assert_abs_diff_eq!(br.eval(&q, &y), y[2], epsilon = 1e-14);
        // antisymmetry: {f, f} = 0
        let same = fiber.fiber_bracket(&y1, &y1);
        assert_abs_diff_eq!(same.eval(&q, &y), 0.0, epsilon = 0.0);
        // |y|^2 is Casimir: bracket with anything vanishes
        let c = Field::new(|_q, y: &DVector<f64>| y.norm_squared())
            .with_grad_y(|_q: &DVector<f64>, y: &DVector<f64>| y * 2.0);
        let g = Field::new(|_q, y: &DVector<f64>| y[0] * y[1] + y[2].sin());
        let zero = fiber.fiber_bracket(&c, &g);
        assert_abs_diff_eq!(zero.eval(&q, &y), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn jacobi_identity_on_coordinate_triples() {
        let fiber = PoissonFiber::so3();
        let q = DVector::zeros(3);
        let y = DVector::from_vec(vec![0.9, -0.4, 1.3]);
        let coords: Vec<Field> = (0..3).map(|a| Field::y_coord(a, 3)).collect();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let t1 = fiber.fiber_bracket(&coords[a], &fiber.fiber_bracket(&coords[b], &coords[c]));
                    let t2 = fiber.fiber_bracket(&coords[b], &fiber.fiber_bracket(&coords[c], &coords[a]));
                    let t3 = fiber.fiber_bracket(&coords[c], &fiber.fiber_bracket(&coords[a], &coords[b]));
                    let r = t1.eval(&q, &y) + t2.eval(&q, &y) + t3.eval(&q, &y);
                    assert!(r.abs() <= 1e-9, "triple ({a},{b},{c}): {r}");
                }
            }
        }
    }

    #[test]
    fn casimir_reports() {
        let fiber = PoissonFiber::so3();
        let samples: Vec<_> = (0..5)
            .map(|k| {
                let k = k as f64;
                (
                    DVector::from_vec(vec![1.0 + k, 0.5, -k]),
                    DVector::from_vec(vec![0.3 * k - 1.0, 0.7, k * 0.2 + 0.1]),
                )
            })
            .collect();
        let c = &fiber.casimirs[0].field;
        let rep = fiber.is_casimir(c, &samples, 1e-8);
        assert!(rep.pass);
        assert_eq!(rep.max_residual, 0.0);

        let not_casimir = Field::y_coord(0, 3);
        assert!(!fiber.is_casimir(&not_casimir, &samples, 1e-8).pass);

        let abelian = PoissonFiber::abelian(3);
        let any = Field::new(|q: &DVector<f64>, y: &DVector<f64>| q[0] * y.norm() + y[1]);
        assert!(abelian.is_casimir(&any, &samples, 1e-8).pass);
    }

    #[test]
    fn dimension_errors() {
        let l = LieAlgebraStructure::so3();
        let bad = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(l.lie_poisson_tensor(&bad), Err(Error::Dimension(_))));
        assert!(matches!(l.ad_star(&bad, &e(0)), Err(Error::Dimension(_))));
        assert!(LieAlgebraStructure::new(3, vec![0.0; 5]).is_err());
    }
}
