//! Hamiltonian vector fields, Wong's equations, RK4 integration, and
//! conservation monitoring.
//!
//! Dynamics convention: with the bracket blocks fixed by `{p_i, q^j} = delta`,
//! the classical equations `dp/dt = -dH/dq`, `dq/dt = dH/dp` correspond to
//! `xdot = {H, x}`, i.e. the transpose contraction `M^T grad H` of the
//! assembled matrix. The explicit component formulas and the matrix path are
//! both implemented and cross-checked in tests.

use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use crate::gauge::{GaugePoissonStructure, LinearGaugePotential};
use crate::lie_poisson::LieAlgebraStructure;
use crate::phase::{Phase, PhaseFunction};
use crate::{Error, Result};

/// A pseudo-Riemannian metric on `Q`, given by `g_{ij}(q)`.
#[derive(Clone)]
pub struct Metric {
    pub m: usize,
    g: Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>,
    /// When true the inverse is computed once and reused.
    q_independent: bool,
    cached_inverse: Arc<Mutex<Option<DMatrix<f64>>>>,
    fd_step: f64,
}

impl Metric {
    pub fn new<F>(m: usize, g: F, q_independent: bool) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            m,
            g: Arc::new(g),
            q_independent,
            cached_inverse: Arc::new(Mutex::new(None)),
            fd_step: crate::numerics::DEFAULT_FD_STEP,
        }
    }

    pub fn euclidean(m: usize) -> Self {
        Self::new(m, move |_| DMatrix::identity(m, m), true)
    }

    pub fn diagonal(diag: Vec<f64>) -> Self {
        let m = diag.len();
        Self::new(m, move |_| DMatrix::from_diagonal(&DVector::from_vec(diag.clone())), true)
    }

    pub fn is_q_independent(&self) -> bool {
        self.q_independent
    }

    pub fn at(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let g = (self.g)(q);
        if g.nrows() != self.m || g.ncols() != self.m {
            return Err(Error::Dimension(format!("metric must be {0}x{0}", self.m)));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { at: format!("metric at q = {q:?}") });
        }
        if (&g - g.transpose()).amax() > 0.0 {
            return Err(Error::Invalid("metric is not exactly symmetric".into()));
        }
        Ok(g)
    }

    /// Inverse `g^{ij}(q)` by LU, memoized when the metric is q-independent.
    pub fn inverse_at(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        if self.q_independent {
            let mut cache = self.cached_inverse.lock().unwrap();
            if let Some(inv) = cache.as_ref() {
                return Ok(inv.clone());
            }
            let inv = self.invert(q)?;
            *cache = Some(inv.clone());
            return Ok(inv);
        }
        self.invert(q)
    }

    fn invert(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let g = self.at(q)?;
        g.lu()
            .try_inverse()
            .ok_or_else(|| Error::Domain(format!("singular metric at q = {q:?}")))
    }

    /// `d g^{jk} / d q^i` by central differences of the inverse; exactly
    /// zero for q-independent metrics.
    pub fn dinverse_dq(&self, q: &DVector<f64>, i: usize) -> Result<DMatrix<f64>> {
        if self.q_independent {
            return Ok(DMatrix::zeros(self.m, self.m));
        }
        let h = self.fd_step * q[i].abs().max(1.0);
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        Ok((self.inverse_at(&qp)? - self.inverse_at(&qm)?) / (2.0 * h))
    }

    /// Verify symmetry and `g g^{-1} = I` within `tol` at sample points.
    pub fn validate(&self, samples: &[DVector<f64>], tol: f64) -> Result<()> {
        for q in samples {
            let g = self.at(q)?;
            let ginv = self.inverse_at(q)?;
            let resid = (&g * &ginv - DMatrix::identity(self.m, self.m)).amax();
            if resid > tol {
                return Err(Error::Invalid(format!(
                    "g * g^-1 deviates from identity by {resid} at q = {q:?}"
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Metric")
            .field("m", &self.m)
            .field("q_independent", &self.q_independent)
            .finish()
    }
}

/// Hamiltonians are plain phase functions; the alias marks intent.
pub type HamiltonianFunction = PhaseFunction;

/// `H = 1/2 g^{ij}(q) p_i p_j` with analytic gradient.
pub fn kinetic_hamiltonian(g: &Metric) -> HamiltonianFunction {
    let m = g.m;
    let g1 = g.clone();
    let g2 = g.clone();
    PhaseFunction::new("kinetic", move |x: &Phase| match g1.inverse_at(&x.q) {
        Ok(ginv) => 0.5 * x.p.dot(&(&ginv * &x.p)),
        Err(_) => f64::NAN,
    })
    .with_grad(move |x: &Phase| {
        let n = x.n();
        let mut grad = DVector::zeros(2 * m + n);
        if let Ok(ginv) = g2.inverse_at(&x.q) {
            grad.rows_mut(0, m).copy_from(&(&ginv * &x.p));
            for i in 0..m {
                if let Ok(dginv) = g2.dinverse_dq(&x.q, i) {
                    grad[m + i] = 0.5 * x.p.dot(&(dginv * &x.p));
                } else {
                    grad[m + i] = f64::NAN;
                }
            }
        } else {
            grad.fill(f64::NAN);
        }
        grad
    })
}

/// A time-dependent right-hand side on phase space.
pub type RhsFn = Arc<dyn Fn(f64, &Phase) -> Result<Phase> + Send + Sync>;

/// Hamiltonian vector field of `H` in the gauge Poisson structure,
/// assembled componentwise:
/// `pdot_j = -dH/dq^j - Psi^{ab} d_aA_j dH/dy^b + F_{ij} dH/dp_i`,
/// `qdot^j = dH/dp_j`,
/// `ydot^b = Psi^{ab} dH/dy^a + dH/dp_i Psi^{ab} d_aA_i`.
pub fn hamiltonian_rhs(s: &GaugePoissonStructure, h: &HamiltonianFunction) -> RhsFn {
    let s = s.clone();
    let h = h.clone();
    Arc::new(move |_t, x: &Phase| {
        let m = s.m;
        let n = s.n();
        if x.m() != m || x.n() != n {
            return Err(Error::Dimension("state dims do not match structure".into()));
        }
        let grad = h.grad_at(x);
        let hp = grad.rows(0, m).into_owned();
        let hq = grad.rows(m, m).into_owned();
        let hy = grad.rows(2 * m, n).into_owned();
        let f = s.field_strength_at(&x.q, &x.y)?;
        let psi = s.fiber.psi(&x.q, &x.y);
        let mut pdot = DVector::zeros(m);
        let mut ydot = DVector::zeros(n);
        for j in 0..m {
            let ga = s.gauge.grad_y(j, &x.q, &x.y);
            // Psi^{ab} d_aA_j dH/dy^b = (Psi^T ga) . hy
            pdot[j] = -hq[j] - (psi.transpose() * &ga).dot(&hy)
                + f.column(j).dot(&hp);
            ydot += (psi.transpose() * ga) * hp[j];
        }
        ydot += psi.transpose() * &hy;
        let out = Phase::new(pdot, hp, ydot);
        if !out.is_finite() {
            return Err(Error::NonFinite { at: "hamiltonian rhs".into() });
        }
        Ok(out)
    })
}

/// The same vector field through the assembled matrix: `xdot = M^T grad H`.
/// Kept as an independent code path for cross-validation.
pub fn matrix_hamiltonian_rhs(s: &GaugePoissonStructure, h: &HamiltonianFunction) -> RhsFn {
    let s = s.clone();
    let h = h.clone();
    Arc::new(move |_t, x: &Phase| {
        let mat = s.assemble(x)?;
        let v = mat.transpose() * h.grad_at(x);
        let out = Phase::unflatten(&v, s.m, s.n());
        if !out.is_finite() {
            return Err(Error::NonFinite { at: "matrix rhs".into() });
        }
        Ok(out)
    })
}

/// Wong's equations for a linear potential, Lie algebra, and metric:
/// `pdot_i = -1/2 dg^{jk}/dq^i p_j p_k - y^a F_{aij} g^{jk} p_k`,
/// `qdot^i = g^{ij} p_j`,
/// `ydot^a = -y^g lambda^{ab}_g A_{bi} g^{ij} p_j`.
pub fn wong_rhs(p: &LinearGaugePotential, l: &LieAlgebraStructure, g: &Metric) -> RhsFn {
    let pot = p.clone();
    let alg = l.clone();
    let g = g.clone();
    Arc::new(move |_t, x: &Phase| {
        let m = pot.m;
        let n = pot.n;
        let ginv = g.inverse_at(&x.q)?;
        let v = &ginv * &x.p; // q-velocity g^{ij} p_j
        let fstr = crate::gauge::linear_field_strength(&pot, &alg, &x.q)?;
        let coeffs = pot.coeffs_at(&x.q)?;
        let mut pdot = DVector::zeros(m);
        for i in 0..m {
            let dginv = g.dinverse_dq(&x.q, i)?;
            let mut fiber_force = 0.0;
            for a in 0..n {
                fiber_force += x.y[a] * fstr[a].row(i).transpose().dot(&v);
            }
            pdot[i] = -0.5 * x.p.dot(&(dginv * &x.p)) - fiber_force;
        }
        // ydot^a = -lambda^{ab}_g y^g A_{bi} v^i = -(ad^*_{A_i v^i})... contract
        // the potential along the velocity, then apply the structure constants
        let a_along = &coeffs * &v; // (A_{b i} v^i)_b
        let mut ydot = DVector::zeros(n);
        for a in 0..n {
            let mut acc = 0.0;
            for b in 0..n {
                for gam in 0..n {
                    acc += x.y[gam] * alg.lambda(a, b, gam) * a_along[b];
                }
            }
            ydot[a] = -acc;
        }
        let out = Phase::new(pdot, v, ydot);
        if !out.is_finite() {
            return Err(Error::NonFinite { at: "wong rhs".into() });
        }
        Ok(out)
    })
}

/// Domain predicate for trajectories near singular potentials.
pub type DomainGuard = Arc<dyn Fn(&Phase) -> bool + Send + Sync>;

/// Default exit radius for fields singular at the origin.
pub const DEFAULT_EXIT_RADIUS: f64 = 1e-6;

pub fn radial_guard(r_min: f64) -> DomainGuard {
    Arc::new(move |x: &Phase| x.q.norm() >= r_min)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TrajectoryMeta {
    pub scenario: String,
    pub step: f64,
    pub method: String,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Phase>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn last(&self) -> &Phase {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

/// Fixed-step RK4 from `t = 0` to `t_end`, storing every step. Halts with a
/// domain-exit error (carrying the exit time) if the guard rejects a state,
/// and with an integration error on non-finite values.
pub fn integrate(
    rhs: &RhsFn,
    x0: &Phase,
    t_end: f64,
    h: f64,
    guard: Option<&DomainGuard>,
) -> Result<Trajectory> {
    if !(h > 0.0) || !t_end.is_finite() || t_end < 0.0 {
        return Err(Error::Invalid(format!("bad integration parameters t_end={t_end}, h={h}")));
    }
    let check = |x: &Phase, t: f64| -> Result<()> {
        if !x.is_finite() {
            return Err(Error::Integration { t, reason: "non-finite state".into() });
        }
        if let Some(g) = guard {
            if !g(x) {
                return Err(Error::DomainExit { t });
            }
        }
        Ok(())
    };
    check(x0, 0.0)?;
    let steps = (t_end / h).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(x0.clone());
    let mut x = x0.flatten();
    let m = x0.m();
    let n = x0.n();
    let eval = |t: f64, v: &DVector<f64>| -> Result<DVector<f64>> {
        let ph = Phase::unflatten(v, m, n);
        if let Some(g) = guard {
            if !g(&ph) {
                return Err(Error::DomainExit { t });
            }
        }
        Ok(rhs(t, &ph)?.flatten())
    };
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = eval(t, &x)?;
        let k2 = eval(t + 0.5 * h, &(&x + &k1 * (0.5 * h)))?;
        let k3 = eval(t + 0.5 * h, &(&x + &k2 * (0.5 * h)))?;
        let k4 = eval(t + h, &(&x + &k3 * h))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let t_next = (k + 1) as f64 * h;
        let ph = Phase::unflatten(&x, m, n);
        check(&ph, t_next)?;
        times.push(t_next);
        states.push(ph);
    }
    Ok(Trajectory {
        times,
        states,
        meta: TrajectoryMeta { scenario: String::new(), step: h, method: "rk4".into() },
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DriftEntry {
    pub name: String,
    pub initial: f64,
    pub max_abs_drift: f64,
    pub max_rel_drift: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConservationReport {
    pub entries: Vec<DriftEntry>,
}

impl ConservationReport {
    pub fn max_rel_drift(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_drift).fold(0.0, f64::max)
    }
}

/// Drift statistics of named functions over a stored trajectory. Relative
/// drift is measured against `|initial|`, or absolutely when the initial
/// value is below `1e-12`.
pub fn monitor(traj: &Trajectory, functions: &[PhaseFunction]) -> ConservationReport {
    let entries = functions
        .iter()
        .map(|f| {
            let initial = f.eval(&traj.states[0]);
            let max_abs = traj
                .states
                .iter()
                .map(|x| (f.eval(x) - initial).abs())
                .fold(0.0, f64::max);
            let denom = if initial.abs() > 1e-12 { initial.abs() } else { 1.0 };
            DriftEntry {
                name: f.name.clone(),
                initial,
                max_abs_drift: max_abs,
                max_rel_drift: max_abs / denom,
            }
        })
        .collect();
    ConservationReport { entries }
}
