//! Phase-space points `(p, q, y)` and scalar functions on them.
//!
//! The flat coordinate order everywhere is `(p_1..p_m, q^1..q^m, y^1..y^n)`,
//! mirroring the bracket relation blocks.

use std::sync::Arc;

use nalgebra::DVector;

use crate::field::{DiffScheme, Field};

/// A point of the phase space `T*Q x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub p: DVector<f64>,
    pub q: DVector<f64>,
    pub y: DVector<f64>,
}

impl Phase {
    pub fn new(p: DVector<f64>, q: DVector<f64>, y: DVector<f64>) -> Self {
        Self { p, q, y }
    }

    pub fn from_slices(p: &[f64], q: &[f64], y: &[f64]) -> Self {
        Self {
            p: DVector::from_column_slice(p),
            q: DVector::from_column_slice(q),
            y: DVector::from_column_slice(y),
        }
    }

    pub fn m(&self) -> usize {
        self.q.len()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.m() + self.n()
    }

    pub fn flatten(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        let m = self.m();
        v.rows_mut(0, m).copy_from(&self.p);
        v.rows_mut(m, m).copy_from(&self.q);
        v.rows_mut(2 * m, self.n()).copy_from(&self.y);
        v
    }

    pub fn unflatten(v: &DVector<f64>, m: usize, n: usize) -> Self {
        debug_assert_eq!(v.len(), 2 * m + n);
        Self {
            p: v.rows(0, m).into_owned(),
            q: v.rows(m, m).into_owned(),
            y: v.rows(2 * m, n).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.q.iter()).chain(self.y.iter()).all(|v| v.is_finite())
    }
}

/// Which coordinate a [`PhaseFunction::coord`] projects onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    P(usize),
    Q(usize),
    Y(usize),
}

pub type PhaseFn = Arc<dyn Fn(&Phase) -> f64 + Send + Sync>;
pub type PhaseGradFn = Arc<dyn Fn(&Phase) -> DVector<f64> + Send + Sync>;

/// A scalar function of the full phase point with an optional analytic
/// gradient in flat `(p, q, y)` order.
#[derive(Clone)]
pub struct PhaseFunction {
    pub name: String,
    f: PhaseFn,
    grad: Option<PhaseGradFn>,
    scheme: DiffScheme,
}

impl PhaseFunction {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&Phase) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), f: Arc::new(f), grad: None, scheme: DiffScheme::default() }
    }

    pub fn with_grad<G>(mut self, g: G) -> Self
    where
        G: Fn(&Phase) -> DVector<f64> + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(g));
        self
    }

    pub fn has_analytic_grad(&self) -> bool {
        self.grad.is_some()
    }

    /// Override the relative FD step used when no analytic gradient is set.
    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.scheme = DiffScheme { step };
        self
    }

    /// Coordinate projection with exact (constant) gradient.
    pub fn coord(c: Coord, m: usize, n: usize) -> Self {
        let (name, idx) = match c {
            Coord::P(i) => (format!("p{}", i + 1), i),
            Coord::Q(i) => (format!("q{}", i + 1), m + i),
            Coord::Y(a) => (format!("y{}", a + 1), 2 * m + a),
        };
        let dim = 2 * m + n;
        PhaseFunction::new(name, move |x: &Phase| x.flatten()[idx]).with_grad(move |_x: &Phase| {
            let mut g = DVector::zeros(dim);
            g[idx] = 1.0;
            g
        })
    }

    /// Lift a field on `Q x N` to the phase space (constant in `p`).
    pub fn from_qy(name: impl Into<String>, field: Field, m: usize, n: usize) -> Self {
        let f2 = field.clone();
        PhaseFunction::new(name, move |x: &Phase| field.eval(&x.q, &x.y)).with_grad(
            move |x: &Phase| {
                let mut g = DVector::zeros(2 * m + n);
                g.rows_mut(m, m).copy_from(&f2.grad_q_at(&x.q, &x.y));
                g.rows_mut(2 * m, n).copy_from(&f2.grad_y_at(&x.q, &x.y));
                g
            },
        )
    }

    pub fn eval(&self, x: &Phase) -> f64 {
        (self.f)(x)
    }

    /// Gradient in flat order, analytic when available.
    pub fn grad_at(&self, x: &Phase) -> DVector<f64> {
        if let Some(g) = &self.grad {
            return g(x);
        }
        let flat = x.flatten();
        let m = x.m();
        let n = x.n();
        DVector::from_fn(flat.len(), |k, _| {
            let h = self.scheme.step_at(flat[k]);
            let mut fp = flat.clone();
            let mut fm = flat.clone();
            fp[k] += h;
            fm[k] -= h;
            ((self.f)(&Phase::unflatten(&fp, m, n)) - (self.f)(&Phase::unflatten(&fm, m, n)))
                / (2.0 * h)
        })
    }
}

impl std::fmt::Debug for PhaseFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhaseFunction")
            .field("name", &self.name)
            .field("analytic_grad", &self.grad.is_some())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn flatten_roundtrip() {
        let x = Phase::from_slices(&[1., 2., 3.], &[4., 5., 6.], &[7., 8.]);
        let v = x.flatten();
        assert_eq!(Phase::unflatten(&v, 3, 2), x);
    }

    #[test]
    fn coord_gradients_are_unit_vectors() {
        let x = Phase::from_slices(&[1., 2.], &[3., 4.], &[5., 6., 7.]);
        let f = PhaseFunction::coord(Coord::Y(2), 2, 3);
        assert_abs_diff_eq!(f.eval(&x), 7.0);
        let g = f.grad_at(&x);
        assert_abs_diff_eq!(g[6], 1.0);
        assert_abs_diff_eq!(g.norm(), 1.0);
    }

    #[test]
    fn fd_gradient_matches_analytic_lift() {
        let field = Field::new(|q, y| q[0] * y[1] - q[1] * y[0]);
        let lifted = PhaseFunction::from_qy("f", field.clone(), 2, 2);
        let bare = PhaseFunction::new("f", move |x: &Phase| field.eval(&x.q, &x.y));
        let x = Phase::from_slices(&[0.1, -0.2], &[1.0, 2.0], &[3.0, 4.0]);
        assert_abs_diff_eq!(lifted.grad_at(&x), bare.grad_at(&x), epsilon = 1e-8);
    }
}
