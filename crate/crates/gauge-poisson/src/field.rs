//! Scalar fields on `Q x N` with optional analytic partials.

use std::sync::Arc;

use nalgebra::DVector;

use crate::numerics::DEFAULT_FD_STEP;

/// Central second-order finite-difference scheme with a relative step.
#[derive(Debug, Clone, Copy)]
pub struct DiffScheme {
    /// Dimensionless relative step; the actual step at coordinate value `x`
    /// is `step * max(1, |x|)`.
    pub step: f64,
}

impl Default for DiffScheme {
    fn default() -> Self {
        Self { step: DEFAULT_FD_STEP }
    }
}

impl DiffScheme {
    pub fn new(step: f64) -> crate::Result<Self> {
        if !(step > 0.0) {
            return Err(crate::Error::Invalid("DiffScheme step must be > 0".into()));
        }
        Ok(Self { step })
    }

    pub fn step_at(&self, x: f64) -> f64 {
        self.step * x.abs().max(1.0)
    }
}

pub type QyFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
pub type QyGradFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A scalar field `f(q, y)` with optional analytic gradients; missing
/// gradients fall back to central differences.
#[derive(Clone)]
pub struct Field {
    f: QyFn,
    grad_q: Option<QyGradFn>,
    grad_y: Option<QyGradFn>,
    scheme: DiffScheme,
}

impl Field {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        Self { f: Arc::new(f), grad_q: None, grad_y: None, scheme: DiffScheme::default() }
    }

    pub fn from_arc(f: QyFn) -> Self {
        Self { f, grad_q: None, grad_y: None, scheme: DiffScheme::default() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _| c)
    }

    /// Linear coordinate field `y^alpha`.
    pub fn y_coord(alpha: usize, n: usize) -> Self {
        let mut s = Self::new(move |_, y| y[alpha]);
        s.grad_y = Some(Arc::new(move |_q: &DVector<f64>, _y: &DVector<f64>| {
            let mut g = DVector::zeros(n);
            g[alpha] = 1.0;
            g
        }));
        s
    }

    pub fn with_grad_q<G>(mut self, g: G) -> Self
    where
        G: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.grad_q = Some(Arc::new(g));
        self
    }

    pub fn with_grad_y<G>(mut self, g: G) -> Self
    where
        G: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.grad_y = Some(Arc::new(g));
        self
    }

    pub fn with_scheme(mut self, scheme: DiffScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn has_analytic_grads(&self) -> bool {
        self.grad_q.is_some() && self.grad_y.is_some()
    }

    pub fn eval(&self, q: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (self.f)(q, y)
    }

    /// `d f / d q^j`, analytic when available.
    pub fn dq(&self, j: usize, q: &DVector<f64>, y: &DVector<f64>) -> f64 {
        if let Some(g) = &self.grad_q {
            return g(q, y)[j];
        }
        let h = self.scheme.step_at(q[j]);
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[j] += h;
        qm[j] -= h;
        ((self.f)(&qp, y) - (self.f)(&qm, y)) / (2.0 * h)
    }

    /// `d f / d y^alpha`, analytic when available.
    pub fn dy(&self, alpha: usize, q: &DVector<f64>, y: &DVector<f64>) -> f64 {
        if let Some(g) = &self.grad_y {
            return g(q, y)[alpha];
        }
        let h = self.scheme.step_at(y[alpha]);
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[alpha] += h;
        ym[alpha] -= h;
        ((self.f)(q, &yp) - (self.f)(q, &ym)) / (2.0 * h)
    }

    pub fn grad_q_at(&self, q: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        if let Some(g) = &self.grad_q {
            return g(q, y);
        }
        DVector::from_fn(q.len(), |j, _| self.dq(j, q, y))
    }

    pub fn grad_y_at(&self, q: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        if let Some(g) = &self.grad_y {
            return g(q, y);
        }
        DVector::from_fn(y.len(), |a, _| self.dy(a, q, y))
    }

    /// Cross-check analytic partials against finite differences at the given
    /// sample points; errors out on disagreement beyond `tol`.
    pub fn validate_grads(
        &self,
        samples: &[(DVector<f64>, DVector<f64>)],
        tol: f64,
    ) -> crate::Result<()> {
        for (q, y) in samples {
            if let Some(g) = &self.grad_q {
                let analytic = g(q, y);
                let bare = Self { f: self.f.clone(), grad_q: None, grad_y: None, scheme: self.scheme };
                for j in 0..q.len() {
                    let fd = bare.dq(j, q, y);
                    if (analytic[j] - fd).abs() > tol {
                        return Err(crate::Error::Invalid(format!(
                            "analytic dq[{j}] = {} disagrees with FD {} at sample",
                            analytic[j], fd
                        )));
                    }
                }
            }
            if let Some(g) = &self.grad_y {
                let analytic = g(q, y);
                let bare = Self { f: self.f.clone(), grad_q: None, grad_y: None, scheme: self.scheme };
                for a in 0..y.len() {
                    let fd = bare.dy(a, q, y);
                    if (analytic[a] - fd).abs() > tol {
                        return Err(crate::Error::Invalid(format!(
                            "analytic dy[{a}] = {} disagrees with FD {} at sample",
                            analytic[a], fd
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Field")
            .field("analytic_grad_q", &self.grad_q.is_some())
            .field("analytic_grad_y", &self.grad_y.is_some())
            .finish()
    }
}
