//! Fiberwise compact-group actions, Haar averaging of momentum maps into
//! invariant gauge forms, and the invariance / first-integral checks.
//!
//! Supported groups: the circle, tori, and SO(3). All Haar densities are
//! normalized so that averaging a constant returns it. The circle average of
//! a momentum map `J` is
//! `A_i(q, y) = (1/2pi) int_0^{2pi} (t - 2pi) dJ/dq^i(q, Fl^t(y)) dt + C_i`,
//! with the normalized offset `C_i = pi <dJ/dq^i>` (making `<A_i> = 0`)
//! available behind the `normalize` flag. The torus and SO(3) cases follow
//! the r-fold and ball-quadrature forms with the same normalization policy.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{monitor, Trajectory};
use crate::field::{DiffScheme, Field};
use crate::gauge::{cross, GaugeForm, GaugePoissonStructure};
use crate::lie_poisson::PoissonFiber;
use crate::numerics::{
    gauss_legendre_nodes, integrate_periodic, integrate_sawtooth, jacobian_fd, QuadratureRule,
    DEFAULT_PERIODIC_NODES,
};
use crate::phase::{Phase, PhaseFunction};
use crate::rng::SplitMix64;
use crate::{Error, Result};

/// Rotation solving `ydot = y x axis` for time `t`; identical to the
/// coadjoint flow of so(3) in this crate's sign convention, but in closed
/// Rodrigues form instead of a matrix exponential.
pub fn so3_coad_rotate(axis: &DVector<f64>, t: f64, y: &DVector<f64>) -> DVector<f64> {
    let norm = axis.norm();
    if norm == 0.0 || t == 0.0 {
        return y.clone();
    }
    let k = axis / norm;
    let theta = -norm * t;
    let (s, c) = theta.sin_cos();
    y * c + cross(&k, y) * s + &k * (k.dot(y) * (1.0 - c))
}

/// An algebra-valued section `s(q)` generating a fiberwise circle action.
#[derive(Clone)]
pub struct SectionField {
    pub m: usize,
    pub n: usize,
    s: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    ds: Option<Arc<dyn Fn(&DVector<f64>, usize) -> DVector<f64> + Send + Sync>>,
    scheme: DiffScheme,
}

impl SectionField {
    pub fn new<F>(m: usize, n: usize, s: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self { m, n, s: Arc::new(s), ds: None, scheme: DiffScheme::default() }
    }

    pub fn with_ds<G>(mut self, ds: G) -> Self
    where
        G: Fn(&DVector<f64>, usize) -> DVector<f64> + Send + Sync + 'static,
    {
        self.ds = Some(Arc::new(ds));
        self
    }

    /// `s(q) = q / |q|` on punctured 3-space, with analytic derivatives.
    pub fn radial() -> Self {
        Self::new(3, 3, |q: &DVector<f64>| q / q.norm()).with_ds(|q: &DVector<f64>, i| {
            let r = q.norm();
            let mut d = DVector::zeros(3);
            d[i] = 1.0 / r;
            d - q * (q[i] / (r * r * r))
        })
    }

    /// `s(q) = (cos q1, sin q1, 0)`, a unit section with analytic derivatives.
    pub fn azimuthal(m: usize) -> Self {
        Self::new(m, 3, |q: &DVector<f64>| {
            DVector::from_vec(vec![q[0].cos(), q[0].sin(), 0.0])
        })
        .with_ds(|q: &DVector<f64>, i| {
            if i == 0 {
                DVector::from_vec(vec![-q[0].sin(), q[0].cos(), 0.0])
            } else {
                DVector::zeros(3)
            }
        })
    }

    pub fn constant(m: usize, v: DVector<f64>) -> Self {
        let n = v.len();
        let zero_n = n;
        Self::new(m, n, move |_q| v.clone()).with_ds(move |_q, _i| DVector::zeros(zero_n))
    }

    pub fn at(&self, q: &DVector<f64>) -> DVector<f64> {
        (self.s)(q)
    }

    /// `ds/dq^i`, analytic when available.
    pub fn d_at(&self, q: &DVector<f64>, i: usize) -> DVector<f64> {
        if let Some(ds) = &self.ds {
            return ds(q, i);
        }
        let h = self.scheme.step_at(q[i]);
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        ((self.s)(&qp) - (self.s)(&qm)) / (2.0 * h)
    }

    pub fn validate_unit(&self, samples: &[DVector<f64>], tol: f64) -> Result<()> {
        for q in samples {
            let norm = self.at(q).norm();
            if (norm - 1.0).abs() > tol {
                return Err(Error::InvalidAction(format!(
                    "section norm {norm} at q = {q:?} violates the periodicity condition"
                )));
            }
        }
        Ok(())
    }

    /// The momentum map `J(q, y) = <s(q), y>` with analytic gradients.
    pub fn moment(&self) -> Field {
        let s1 = self.clone();
        let s2 = self.clone();
        let s3 = self.clone();
        Field::new(move |q: &DVector<f64>, y: &DVector<f64>| s1.at(q).dot(y))
            .with_grad_q(move |q: &DVector<f64>, y: &DVector<f64>| {
                DVector::from_fn(s2.m, |i, _| s2.d_at(q, i).dot(y))
            })
            .with_grad_y(move |q: &DVector<f64>, _y: &DVector<f64>| s3.at(q))
    }
}

impl std::fmt::Debug for SectionField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SectionField").field("m", &self.m).field("n", &self.n).finish()
    }
}

/// Which compact group acts on the fibers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Circle,
    Torus(usize),
    /// Circle action by rotations about a section axis in so(3)*.
    So3Rotations,
    /// The full coadjoint SO(3)-action.
    So3Group,
}

impl GroupKind {
    pub fn dim_g(self) -> usize {
        match self {
            GroupKind::Circle | GroupKind::So3Rotations => 1,
            GroupKind::Torus(r) => r,
            GroupKind::So3Group => 3,
        }
    }

    pub fn label(self) -> String {
        match self {
            GroupKind::Circle => "circle".into(),
            GroupKind::Torus(r) => format!("torus({r})"),
            GroupKind::So3Rotations => "so3-rotations".into(),
            GroupKind::So3Group => "so3-group".into(),
        }
    }
}

type ActionFlowFn =
    Arc<dyn Fn(&DVector<f64>, &[f64], f64, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;

/// A smooth family of Hamiltonian G-actions on the fibers of `Q x N`,
/// given by momentum-map components and the realized flows
/// `(a, t, y) -> Phi^q_{exp(t a)}(y)`.
#[derive(Clone)]
pub struct FiberwiseAction {
    pub kind: GroupKind,
    pub m: usize,
    pub fiber: PoissonFiber,
    moments: Vec<Field>,
    flow: ActionFlowFn,
}

const PERIODICITY_TOL: f64 = 1e-10;
const PSI_PRESERVATION_TOL: f64 = 1e-8;
const COMMUTATION_TOL: f64 = 1e-8;

impl FiberwiseAction {
    /// Generic constructor; validates flow periodicity (circle and torus
    /// kinds) and fiber Poisson tensor preservation at 5 sampled points.
    pub fn from_parts(
        kind: GroupKind,
        m: usize,
        fiber: PoissonFiber,
        moments: Vec<Field>,
        flow: ActionFlowFn,
    ) -> Result<Self> {
        if moments.len() != kind.dim_g() {
            return Err(Error::InvalidAction(format!(
                "{} needs {} momentum components, got {}",
                kind.label(),
                kind.dim_g(),
                moments.len()
            )));
        }
        let action = Self { kind, m, fiber, moments, flow };
        action.validate()?;
        Ok(action)
    }

    /// The circle action `(q, y) -> (q, Ad*_{exp t s(q)} y)` generated by a
    /// section, with momentum map `<s(q), y>`.
    pub fn section_circle(s: &SectionField, fiber: &PoissonFiber) -> Result<Self> {
        let algebra = fiber
            .algebra
            .clone()
            .ok_or_else(|| Error::InvalidAction("section actions need a Lie-Poisson fiber".into()))?;
        if s.n != fiber.n {
            return Err(Error::Dimension(format!(
                "section dim {} vs fiber dim {}",
                s.n, fiber.n
            )));
        }
        let nonabelian = (0..fiber.n).any(|a| {
            (0..fiber.n).any(|b| (0..fiber.n).any(|g| algebra.lambda(a, b, g) != 0.0))
        });
        if nonabelian {
            let samples = sample_qs(s.m, 5);
            s.validate_unit(&samples, 1e-12)?;
        }
        let kind = if algebra.is_so3() { GroupKind::So3Rotations } else { GroupKind::Circle };
        let fast = algebra.is_so3();
        let sec = s.clone();
        let flow: ActionFlowFn = Arc::new(move |q, a, t, y| {
            let axis = sec.at(q);
            if fast {
                Ok(so3_coad_rotate(&axis, a[0] * t, y))
            } else {
                algebra.coad_flow(&axis, a[0] * t, y)
            }
        });
        Self::from_parts(kind, s.m, fiber.clone(), vec![s.moment()], flow)
    }

    /// Product of commuting circle actions on a shared fiber.
    pub fn torus_from_circles(circles: Vec<FiberwiseAction>) -> Result<Self> {
        let r = circles.len();
        if r == 0 {
            return Err(Error::InvalidAction("torus needs at least one circle factor".into()));
        }
        let m = circles[0].m;
        let fiber = circles[0].fiber.clone();
        for c in &circles {
            if c.kind.dim_g() != 1 {
                return Err(Error::InvalidAction("torus factors must be circle actions".into()));
            }
            if c.m != m || c.fiber.n != fiber.n {
                return Err(Error::Dimension("torus factors live on different spaces".into()));
            }
        }
        let moments = circles.iter().map(|c| c.moments[0].clone()).collect();
        let factors: Vec<ActionFlowFn> = circles.iter().map(|c| c.flow.clone()).collect();
        let flow: ActionFlowFn = Arc::new(move |q, a, t, y| {
            let mut cur = y.clone();
            for (j, f) in factors.iter().enumerate() {
                cur = f(q, &[a[j]], t, &cur)?;
            }
            Ok(cur)
        });
        Self::from_parts(GroupKind::Torus(r), m, fiber, moments, flow)
    }

    /// The coadjoint SO(3)-action with the linear momentum maps `J_j = y_j`.
    pub fn so3_group(fiber: &PoissonFiber, m: usize) -> Result<Self> {
        let moments = (0..3).map(|j| Field::y_coord(j, 3)).collect();
        Self::so3_group_with_moments(fiber, m, moments)
    }

    /// The coadjoint SO(3)-action with caller-supplied momentum maps (e.g.
    /// the linear ones perturbed by Casimir terms).
    pub fn so3_group_with_moments(
        fiber: &PoissonFiber,
        m: usize,
        moments: Vec<Field>,
    ) -> Result<Self> {
        match &fiber.algebra {
            Some(alg) if alg.is_so3() => {}
            _ => {
                return Err(Error::InvalidAction(
                    "the SO(3) group action needs the so(3) Lie-Poisson fiber".into(),
                ))
            }
        }
        let flow: ActionFlowFn = Arc::new(move |_q, a, t, y| {
            let axis = DVector::from_column_slice(a);
            Ok(so3_coad_rotate(&axis, t, y))
        });
        Self::from_parts(GroupKind::So3Group, m, fiber.clone(), moments, flow)
    }

    pub fn dim_g(&self) -> usize {
        self.kind.dim_g()
    }

    pub fn moments(&self) -> &[Field] {
        &self.moments
    }

    /// `Phi^q_{exp(t a)}(y)`.
    pub fn flow(&self, q: &DVector<f64>, a: &[f64], t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        if a.len() != self.dim_g() {
            return Err(Error::Dimension("group parameter has wrong length".into()));
        }
        (self.flow)(q, a, t, y)
    }

    /// `Phi^q_{exp a}(y)`.
    pub fn transform(&self, q: &DVector<f64>, a: &[f64], y: &DVector<f64>) -> Result<DVector<f64>> {
        self.flow(q, a, 1.0, y)
    }

    fn validate(&self) -> Result<()> {
        let samples = sample_qys(self.m, self.fiber.n, 5);
        let scheme = DiffScheme::default();
        // representative group parameters per kind
        let a: Vec<f64> = match self.kind {
            GroupKind::Circle | GroupKind::So3Rotations => vec![0.9],
            GroupKind::Torus(r) => (0..r).map(|j| 0.7 + 0.3 * j as f64).collect(),
            GroupKind::So3Group => vec![0.5, -0.8, 0.3],
        };
        for (q, y) in &samples {
            // periodicity of each basis flow for circle and torus kinds
            if !matches!(self.kind, GroupKind::So3Group) {
                for j in 0..self.dim_g() {
                    let mut e = vec![0.0; self.dim_g()];
                    e[j] = 1.0;
                    let back = self.flow(q, &e, 2.0 * PI, y)?;
                    let err = (&back - y).norm();
                    if err > PERIODICITY_TOL {
                        return Err(Error::InvalidAction(format!(
                            "flow {j} is not 2pi-periodic (defect {err:.3e})"
                        )));
                    }
                }
            }
            // the flow must preserve the fiber Poisson tensor
            let phi_y = self.flow(q, &a, 1.0, y)?;
            let d = jacobian_fd(
                |yy: &DVector<f64>| self.flow(q, &a, 1.0, yy).unwrap_or_else(|_| yy.clone()),
                y,
                &scheme,
            )?;
            let pushed = &d * self.fiber.psi(q, y) * d.transpose();
            let err = (pushed - self.fiber.psi(q, &phi_y)).amax();
            if err > PSI_PRESERVATION_TOL {
                return Err(Error::InvalidAction(format!(
                    "flow does not preserve the fiber Poisson tensor (defect {err:.3e})"
                )));
            }
        }
        Ok(())
    }

    /// Pairwise commutation of the basis flows (torus hypothesis).
    pub fn check_commuting(&self) -> Result<()> {
        let r = self.dim_g();
        if r < 2 {
            return Ok(());
        }
        let samples = sample_qys(self.m, self.fiber.n, 5);
        for (q, y) in &samples {
            for j in 0..r {
                for k in (j + 1)..r {
                    let mut ej = vec![0.0; r];
                    ej[j] = 1.0;
                    let mut ek = vec![0.0; r];
                    ek[k] = 1.0;
                    let jk = self.flow(q, &ek, 1.1, &self.flow(q, &ej, 0.7, y)?)?;
                    let kj = self.flow(q, &ej, 0.7, &self.flow(q, &ek, 1.1, y)?)?;
                    let err = (jk - kj).norm();
                    if err > COMMUTATION_TOL {
                        return Err(Error::InvalidAction(format!(
                            "basis flows {j} and {k} do not commute (defect {err:.3e})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for FiberwiseAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FiberwiseAction")
            .field("kind", &self.kind)
            .field("m", &self.m)
            .field("n", &self.fiber.n)
            .finish()
    }
}

fn sample_qs(m: usize, count: usize) -> Vec<DVector<f64>> {
    let mut rng = SplitMix64::new(0x5EED_CAFE);
    (0..count)
        .map(|_| DVector::from_fn(m, |_, _| rng.uniform(0.6, 1.6)))
        .collect()
}

fn sample_qys(m: usize, n: usize, count: usize) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut rng = SplitMix64::new(0x5EED_CAFE);
    (0..count)
        .map(|_| {
            (
                DVector::from_fn(m, |_, _| rng.uniform(0.6, 1.6)),
                DVector::from_fn(n, |_, _| rng.uniform(-1.0, 1.0)),
            )
        })
        .collect()
}

/// The vertical Hamiltonian vector field of a momentum component,
/// `Y^a = -Psi^{ab} dJ/dy^b`.
pub fn infinitesimal_generator(
    j: &Field,
    fiber: &PoissonFiber,
) -> Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync> {
    let j = j.clone();
    let fiber = fiber.clone();
    Arc::new(move |q, y| -(fiber.psi(q, y) * j.grad_y_at(q, y)))
}

/// Per-axis node counts for the averaging quadratures.
#[derive(Debug, Clone, Copy)]
pub struct QuadSpec {
    pub circle_nodes: usize,
    pub torus_a_nodes: usize,
    pub torus_t_nodes: usize,
    pub so3_radial: usize,
    pub so3_azimuth: usize,
    pub so3_polar: usize,
    pub so3_t: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            circle_nodes: DEFAULT_PERIODIC_NODES,
            torus_a_nodes: 16,
            torus_t_nodes: 24,
            so3_radial: 16,
            so3_azimuth: 16,
            so3_polar: 16,
            so3_t: 16,
        }
    }
}

/// A gauge form produced by group averaging, with provenance.
#[derive(Debug, Clone)]
pub struct AveragedGaugeForm {
    pub form: GaugeForm,
    pub kind: GroupKind,
    pub node_counts: Vec<usize>,
    pub normalized: bool,
    /// The Casimir offsets `C_i` baked into `form`.
    pub offsets: Vec<Field>,
}

/// Circle average of a momentum map into a gauge form. The `normalize` flag
/// switches the weight from `(t - 2pi)` to `(t - pi)`, equivalently adds the
/// offset `C_i = pi <dJ/dq^i>` so that `<A_i> = 0`.
pub fn s1_average(
    j: &Field,
    action: &FiberwiseAction,
    normalize: bool,
    nodes: usize,
) -> Result<AveragedGaugeForm> {
    if action.dim_g() != 1 {
        return Err(Error::InvalidAction("s1_average needs a circle action".into()));
    }
    // spot-check periodicity of the actual flow used (the action may have
    // been built elsewhere)
    for (q, y) in sample_qys(action.m, action.fiber.n, 2) {
        let back = action.flow(&q, &[1.0], 2.0 * PI, &y)?;
        if (back - &y).norm() > PERIODICITY_TOL {
            return Err(Error::InvalidAction("flow is not 2pi-periodic".into()));
        }
    }
    let rule = QuadratureRule::periodic_trapezoid(nodes)?;
    let comps: Vec<Field> = (0..action.m)
        .map(|i| {
            let j = j.clone();
            let action = action.clone();
            let rule = rule.clone();
            Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                // split the (t - 2pi) weight as (t - pi) - pi; the sawtooth
                // part needs the dedicated rule, the constant part is a
                // plain average. Normalizing drops the constant part.
                let g = |t: f64| match action.flow(q, &[1.0], t, y) {
                    Ok(yt) => j.dq(i, q, &yt),
                    Err(_) => f64::NAN,
                };
                let saw = match integrate_sawtooth(g, &rule) {
                    Ok(v) => v,
                    Err(_) => return f64::NAN,
                };
                if normalize {
                    return saw / (2.0 * PI);
                }
                match integrate_periodic(g, &rule) {
                    Ok(mean) => (saw - PI * mean) / (2.0 * PI),
                    Err(_) => f64::NAN,
                }
            })
        })
        .collect();
    let offsets: Vec<Field> = (0..action.m)
        .map(|i| {
            if !normalize {
                return Field::constant(0.0);
            }
            let j = j.clone();
            let action = action.clone();
            let rule = rule.clone();
            Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                let avg = integrate_periodic(
                    |t| match action.flow(q, &[1.0], t, y) {
                        Ok(yt) => j.dq(i, q, &yt),
                        Err(_) => f64::NAN,
                    },
                    &rule,
                );
                match avg {
                    Ok(v) => 0.5 * v,
                    Err(_) => f64::NAN,
                }
            })
        })
        .collect();
    Ok(AveragedGaugeForm {
        form: GaugeForm::new(action.m, action.fiber.n, comps)?,
        kind: action.kind,
        node_counts: vec![nodes],
        normalized: normalize,
        offsets,
    })
}

/// Closed form of the section-generated circle average on so(3)*:
/// `A_i(q, y) = <s(q) x y, ds/dq^i>`, with analytic y-partials.
pub fn so3_section_closed_form(s: &SectionField) -> Result<GaugeForm> {
    if s.n != 3 {
        return Err(Error::Dimension("closed form needs an so(3)* fiber".into()));
    }
    s.validate_unit(&sample_qs(s.m, 5), 1e-12)?;
    let comps: Vec<Field> = (0..s.m)
        .map(|i| {
            let s1 = s.clone();
            let s2 = s.clone();
            Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                cross(&s1.at(q), y).dot(&s1.d_at(q, i))
            })
            .with_grad_y(move |q: &DVector<f64>, _y: &DVector<f64>| {
                cross(&s2.d_at(q, i), &s2.at(q))
            })
        })
        .collect();
    GaugeForm::new(s.m, 3, comps)
}

/// Haar average of a scalar field over the fiberwise action, normalized so
/// that constants are fixed.
pub fn haar_average(action: &FiberwiseAction, f: &Field, quad: &QuadSpec) -> Result<Field> {
    let action = action.clone();
    let f = f.clone();
    match action.kind {
        GroupKind::Circle | GroupKind::So3Rotations => {
            let rule = QuadratureRule::periodic_trapezoid(quad.circle_nodes)?;
            Ok(Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                integrate_periodic(
                    |t| match action.flow(q, &[1.0], t, y) {
                        Ok(yt) => f.eval(q, &yt),
                        Err(_) => f64::NAN,
                    },
                    &rule,
                )
                .map(|v| v / (2.0 * PI))
                .unwrap_or(f64::NAN)
            }))
        }
        GroupKind::Torus(r) => {
            let nodes = quad.torus_a_nodes;
            Ok(Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                let mut idx = vec![0usize; r];
                let mut acc = 0.0;
                loop {
                    let a: Vec<f64> =
                        idx.iter().map(|&k| 2.0 * PI * k as f64 / nodes as f64).collect();
                    match action.flow(q, &a, 1.0, y) {
                        Ok(yt) => acc += f.eval(q, &yt),
                        Err(_) => return f64::NAN,
                    }
                    // advance the multi-index
                    let mut carry = true;
                    for slot in idx.iter_mut() {
                        if carry {
                            *slot += 1;
                            if *slot == nodes {
                                *slot = 0;
                            } else {
                                carry = false;
                            }
                        }
                    }
                    if carry {
                        break;
                    }
                }
                acc / (nodes as f64).powi(r as i32)
            }))
        }
        GroupKind::So3Group => {
            let ball = BallRule::new(quad);
            Ok(Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                ball.integrate(|a| match action.transform(q, a.as_slice(), y) {
                    Ok(yt) => f.eval(q, &yt),
                    Err(_) => f64::NAN,
                })
            }))
        }
    }
}

/// Normalized product quadrature on the ball `|a| < pi` against the SO(3)
/// Haar density `sin^2(|a|/2) / (2 |a|^2)`; the `r^-2` singularity cancels
/// against the spherical volume factor before any node is evaluated.
pub(crate) struct BallRule {
    radial: Vec<(f64, f64)>,
    azimuth: usize,
    polar: Vec<(f64, f64)>,
}

impl BallRule {
    pub(crate) fn new(quad: &QuadSpec) -> Self {
        let (rn, rw) = gauss_legendre_nodes(quad.so3_radial, 0.0, PI);
        let (cn, cw) = gauss_legendre_nodes(quad.so3_polar, -1.0, 1.0);
        Self {
            radial: rn.into_iter().zip(rw).collect(),
            azimuth: quad.so3_azimuth,
            polar: cn.into_iter().zip(cw).collect(),
        }
    }

    /// Vector-valued variant of [`BallRule::integrate`].
    pub(crate) fn integrate_vec<F: Fn(&DVector<f64>) -> DVector<f64>>(
        &self,
        dim: usize,
        g: F,
    ) -> DVector<f64> {
        let dphi = 2.0 * PI / self.azimuth as f64;
        let mut acc = DVector::zeros(dim);
        for &(r, wr) in &self.radial {
            let density = (0.5 * r).sin().powi(2) * 0.5;
            for k in 0..self.azimuth {
                let phi = dphi * k as f64;
                for &(c, wc) in &self.polar {
                    let st = (1.0 - c * c).sqrt();
                    let a = DVector::from_vec(vec![
                        r * st * phi.cos(),
                        r * st * phi.sin(),
                        r * c,
                    ]);
                    acc += g(&a) * (wr * density * dphi * wc);
                }
            }
        }
        acc / (PI * PI)
    }

    /// `(1/pi^2) int w(a) g(a) da`, which is 1 for `g = 1`.
    pub(crate) fn integrate<F: Fn(&DVector<f64>) -> f64>(&self, g: F) -> f64 {
        let dphi = 2.0 * PI / self.azimuth as f64;
        let mut acc = 0.0;
        for &(r, wr) in &self.radial {
            let density = (0.5 * r).sin().powi(2) * 0.5;
            for k in 0..self.azimuth {
                let phi = dphi * k as f64;
                for &(c, wc) in &self.polar {
                    let st = (1.0 - c * c).sqrt();
                    let a = DVector::from_vec(vec![
                        r * st * phi.cos(),
                        r * st * phi.sin(),
                        r * c,
                    ]);
                    acc += wr * density * dphi * wc * g(&a);
                }
            }
        }
        acc / (PI * PI)
    }
}

/// Torus average per the r-fold formula
/// `A_i = -(2pi)^-r int_{[0,2pi]^r} (int_0^1 a^j dJ_j/dq^i(q, Fl^{a t}(y)) dt) da + C_i`.
/// `r = 1` delegates to [`s1_average`] bit for bit.
pub fn torus_average(
    action: &FiberwiseAction,
    normalize: bool,
    quad: &QuadSpec,
) -> Result<AveragedGaugeForm> {
    let r = match action.kind {
        GroupKind::Torus(r) if r >= 1 => r,
        GroupKind::Torus(_) => {
            return Err(Error::InvalidAction("torus of rank 0 is unsupported".into()))
        }
        _ => return Err(Error::InvalidAction("torus_average needs a torus action".into())),
    };
    if r == 1 {
        let circle = FiberwiseAction {
            kind: GroupKind::Circle,
            m: action.m,
            fiber: action.fiber.clone(),
            moments: action.moments.clone(),
            flow: action.flow.clone(),
        };
        let mut avg = s1_average(&action.moments[0], &circle, normalize, quad.circle_nodes)?;
        avg.kind = action.kind;
        return Ok(avg);
    }
    action.check_commuting()?;
    let (an, aw) = gauss_legendre_nodes(quad.torus_a_nodes, 0.0, 2.0 * PI);
    let (tn, tw) = gauss_legendre_nodes(quad.torus_t_nodes, 0.0, 1.0);
    let offsets: Vec<Field> = (0..action.m)
        .map(|i| -> Result<Field> {
            if !normalize {
                return Ok(Field::constant(0.0));
            }
            // C_i = sum_j pi <dJ_j/dq^i>_G, matching the circle-case offset
            let mut avgs = Vec::with_capacity(r);
            for j in 0..r {
                let moment = action.moments[j].clone();
                let dq = Field::new(move |q: &DVector<f64>, y: &DVector<f64>| moment.dq(i, q, y));
                avgs.push(haar_average(action, &dq, quad)?);
            }
            Ok(Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                PI * avgs.iter().map(|a| a.eval(q, y)).sum::<f64>()
            }))
        })
        .collect::<Result<_>>()?;
    let comps: Vec<Field> = (0..action.m)
        .map(|i| {
            let action = action.clone();
            let an = an.clone();
            let aw = aw.clone();
            let tn = tn.clone();
            let tw = tw.clone();
            let offset = offsets[i].clone();
            Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                let mut idx = vec![0usize; r];
                let mut acc = 0.0;
                loop {
                    let a: Vec<f64> = idx.iter().map(|&k| an[k]).collect();
                    let wa: f64 = idx.iter().map(|&k| aw[k]).product();
                    for (&t, &wt) in tn.iter().zip(tw.iter()) {
                        match action.flow(q, &a, t, y) {
                            Ok(yt) => {
                                let mut integrand = 0.0;
                                for (j, aj) in a.iter().enumerate() {
                                    integrand += aj * action.moments[j].dq(i, q, &yt);
                                }
                                acc += wa * wt * integrand;
                            }
                            Err(_) => return f64::NAN,
                        }
                    }
                    let mut carry = true;
                    for slot in idx.iter_mut() {
                        if carry {
                            *slot += 1;
                            if *slot == an.len() {
                                *slot = 0;
                            } else {
                                carry = false;
                            }
                        }
                    }
                    if carry {
                        break;
                    }
                }
                -acc / (2.0 * PI).powi(r as i32) + offset.eval(q, y)
            })
        })
        .collect();
    Ok(AveragedGaugeForm {
        form: GaugeForm::new(action.m, action.fiber.n, comps)?,
        kind: action.kind,
        node_counts: vec![quad.torus_a_nodes, quad.torus_t_nodes],
        normalized: normalize,
        offsets,
    })
}

/// SO(3) group average over the ball `|a| < pi`:
/// `A_i = -<a^j int_0^1 dJ_j/dq^i(q, Phi^q_{exp(t a)}(y)) dt>_G + C_i`.
/// With `normalize`, `C_i = sum_j pi <dJ_j/dq^i>_G` (a Casimir, since
/// G-invariant functions on so(3)* depend only on `|y|`).
pub fn so3_group_average(
    action: &FiberwiseAction,
    normalize: bool,
    quad: &QuadSpec,
) -> Result<AveragedGaugeForm> {
    if action.kind != GroupKind::So3Group {
        return Err(Error::InvalidAction("so3_group_average needs the SO(3) group action".into()));
    }
    let (tn, tw) = gauss_legendre_nodes(quad.so3_t, 0.0, 1.0);
    let offsets: Vec<Field> = (0..action.m)
        .map(|i| -> Result<Field> {
            if !normalize {
                return Ok(Field::constant(0.0));
            }
            let mut avgs = Vec::with_capacity(3);
            for j in 0..3 {
                let moment = action.moments[j].clone();
                let dq = Field::new(move |q: &DVector<f64>, y: &DVector<f64>| moment.dq(i, q, y));
                avgs.push(haar_average(action, &dq, quad)?);
            }
            Ok(Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                PI * avgs.iter().map(|a| a.eval(q, y)).sum::<f64>()
            }))
        })
        .collect::<Result<_>>()?;
    let comps: Vec<Field> = (0..action.m)
        .map(|i| {
            let action = action.clone();
            let quad = *quad;
            let tn = tn.clone();
            let tw = tw.clone();
            let offset = offsets[i].clone();
            Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                let ball = BallRule::new(&quad);
                let avg = ball.integrate(|a| {
                    let mut acc = 0.0;
                    for (&t, &wt) in tn.iter().zip(tw.iter()) {
                        match action.flow(q, a.as_slice(), t, y) {
                            Ok(yt) => {
                                for j in 0..3 {
                                    acc += wt * a[j] * action.moments[j].dq(i, q, &yt);
                                }
                            }
                            Err(_) => return f64::NAN,
                        }
                    }
                    acc
                });
                -avg + offset.eval(q, y)
            })
        })
        .collect();
    Ok(AveragedGaugeForm {
        form: GaugeForm::new(action.m, action.fiber.n, comps)?,
        kind: action.kind,
        node_counts: vec![quad.so3_radial, quad.so3_azimuth, quad.so3_polar, quad.so3_t],
        normalized: normalize,
        offsets,
    })
}

/// Single entry point dispatching on the action's group kind.
pub fn general_average_gauge_form(
    action: &FiberwiseAction,
    normalize: bool,
    quad: &QuadSpec,
) -> Result<AveragedGaugeForm> {
    match action.kind {
        GroupKind::Circle | GroupKind::So3Rotations => {
            s1_average(&action.moments[0], action, normalize, quad.circle_nodes)
        }
        GroupKind::Torus(_) => torus_average(action, normalize, quad),
        GroupKind::So3Group => so3_group_average(action, normalize, quad),
    }
}

/// Outcome of a named verification.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Verdict {
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn new(max_residual: f64, tol: f64) -> Self {
        Self { max_residual, tol, pass: max_residual.is_finite() && max_residual <= tol }
    }
}

/// Report of the invariance condition on a gauge form: for each base index
/// and momentum component, `R_i = dJ_a/dq^i + {A_i, J_a}_N` must be a
/// Casimir. Both the direct Casimir residual and the equivalent horizontal
/// commutator `[hor_i, Y_a]` are evaluated; their verdicts must agree.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Ic1Report {
    pub casimir: Verdict,
    pub commutator: Verdict,
    pub verdicts_agree: bool,
    pub pass: bool,
}

pub fn check_ic1(
    a_form: &GaugeForm,
    moments: &[Field],
    fiber: &PoissonFiber,
    samples: &[(DVector<f64>, DVector<f64>)],
    tol: f64,
) -> Result<Ic1Report> {
    let scheme = DiffScheme::default();
    let mut max_cas = 0.0f64;
    let mut max_comm = 0.0f64;
    for j in moments {
        for i in 0..a_form.m {
            let bracket = fiber.fiber_bracket(a_form.component(i), j);
            let jj = j.clone();
            let residual = Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                jj.dq(i, q, y) + bracket.eval(q, y)
            });
            let gen_j = infinitesimal_generator(j, fiber);
            for (q, y) in samples {
                // Casimir test: Psi grad_y R = 0
                let v = fiber.psi(q, y) * residual.grad_y_at(q, y);
                max_cas = max_cas.max(v.norm());
                // commutator [hor_i, Y_a], vertical part
                let ai = a_form.component(i).clone();
                let fib = fiber.clone();
                let hor = move |qq: &DVector<f64>, yy: &DVector<f64>| -> DVector<f64> {
                    -(fib.psi(qq, yy) * ai.grad_y_at(qq, yy))
                };
                let h = scheme.step_at(q[i]);
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                let dq_gen = (gen_j(&qp, y) - gen_j(&qm, y)) / (2.0 * h);
                let jac_gen = jacobian_fd(|yy| gen_j(q, yy), y, &scheme)?;
                let jac_hor = jacobian_fd(|yy| hor(q, yy), y, &scheme)?;
                let comm = dq_gen + jac_gen * hor(q, y) - jac_hor * gen_j(q, y);
                max_comm = max_comm.max(comm.norm());
            }
        }
    }
    let casimir = Verdict::new(max_cas, tol);
    let commutator = Verdict::new(max_comm, tol);
    let agree = casimir.pass == commutator.pass;
    let pass = casimir.pass && commutator.pass && agree;
    Ok(Ic1Report { casimir, commutator, verdicts_agree: agree, pass })
}

/// Report of the averaging condition `<dJ_a/dq^i>_G = 0`.
pub fn check_ac(
    action: &FiberwiseAction,
    quad: &QuadSpec,
    samples: &[(DVector<f64>, DVector<f64>)],
    tol: f64,
) -> Result<Verdict> {
    let mut max = 0.0f64;
    for j in action.moments() {
        for i in 0..action.m {
            let jj = j.clone();
            let dq = Field::new(move |q: &DVector<f64>, y: &DVector<f64>| jj.dq(i, q, y));
            let avg = haar_average(action, &dq, quad)?;
            for (q, y) in samples {
                let v = avg.eval(q, y);
                if !v.is_finite() {
                    return Err(Error::NonFinite { at: "check_ac average".into() });
                }
                max = max.max(v.abs());
            }
        }
    }
    Ok(Verdict::new(max, tol))
}

/// Report of the G-invariance of the full bracket tensor under the lifted
/// action, plus curvature invariance `<F>_G = F`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InvarianceReport {
    pub pushforward: Verdict,
    pub curvature: Verdict,
    pub pass: bool,
}

fn sample_group_param(action: &FiberwiseAction, rng: &mut SplitMix64) -> Vec<f64> {
    match action.kind {
        GroupKind::Circle | GroupKind::So3Rotations => vec![rng.uniform(0.0, 2.0 * PI)],
        GroupKind::Torus(r) => (0..r).map(|_| rng.uniform(0.0, 2.0 * PI)).collect(),
        GroupKind::So3Group => loop {
            let a: Vec<f64> = (0..3).map(|_| rng.uniform(-PI, PI)).collect();
            if (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt() < PI {
                break a;
            }
        },
    }
}

pub fn check_invariance(
    structure: &GaugePoissonStructure,
    action: &FiberwiseAction,
    pairs: usize,
    seed: u64,
    tol: f64,
    quad: &QuadSpec,
) -> Result<InvarianceReport> {
    let m = structure.m;
    let n = structure.n();
    let scheme = DiffScheme::default();
    let mut rng = SplitMix64::new(seed);
    let mut max_push = 0.0f64;
    let mut max_curv = 0.0f64;
    // averaged curvature components, built once
    let mut avg_f = Vec::new();
    for i in 0..m {
        for jx in (i + 1)..m {
            let s = structure.clone();
            let f_comp = Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                s.field_strength_at(q, y).map(|f| f[(i, jx)]).unwrap_or(f64::NAN)
            });
            avg_f.push(((i, jx), f_comp.clone(), haar_average(action, &f_comp, quad)?));
        }
    }
    for k in 0..pairs {
        let a = sample_group_param(action, &mut rng);
        let x = Phase::new(
            DVector::from_fn(m, |_, _| rng.uniform(-1.0, 1.0)),
            DVector::from_fn(m, |_, _| rng.uniform(0.6, 1.6)),
            DVector::from_fn(n, |_, _| rng.uniform(-1.0, 1.0)),
        );
        // lifted action: (p, q, y) -> (p, q, Phi^q_g(y))
        let y_new = action.transform(&x.q, &a, &x.y)?;
        let phase_new = Phase::new(x.p.clone(), x.q.clone(), y_new);
        let dy_dq = jacobian_fd(
            |qq: &DVector<f64>| {
                action.transform(qq, &a, &x.y).unwrap_or_else(|_| DVector::from_element(n, f64::NAN))
            },
            &x.q,
            &scheme,
        )?;
        let dy_dy = jacobian_fd(
            |yy: &DVector<f64>| {
                action.transform(&x.q, &a, yy).unwrap_or_else(|_| DVector::from_element(n, f64::NAN))
            },
            &x.y,
            &scheme,
        )?;
        let mut d = DMatrix::identity(2 * m + n, 2 * m + n);
        for r in 0..n {
            for c in 0..n {
                d[(2 * m + r, 2 * m + c)] = dy_dy[(r, c)];
            }
            for c in 0..m {
                d[(2 * m + r, m + c)] = dy_dq[(r, c)];
            }
        }
        let pushed = &d * structure.assemble(&x)? * d.transpose();
        let target = structure.assemble(&phase_new)?;
        max_push = max_push.max((pushed - target).amax());
        // curvature invariance at a few of the sampled points
        if k < 5 {
            for ((i, jx), f_comp, avg) in &avg_f {
                let _ = (i, jx);
                let delta = (avg.eval(&x.q, &x.y) - f_comp.eval(&x.q, &x.y)).abs();
                if !delta.is_finite() {
                    return Err(Error::NonFinite { at: "curvature average".into() });
                }
                max_curv = max_curv.max(delta);
            }
        }
    }
    let pushforward = Verdict::new(max_push, tol);
    let curvature = Verdict::new(max_curv, tol);
    let pass = pushforward.pass && curvature.pass;
    Ok(InvarianceReport { pushforward, curvature, pass })
}

/// Report that the momentum components are first integrals: H-invariance
/// under the lifted action, pointwise bracket residual `{H, J_a}`, and the
/// monitored drift along a trajectory.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FirstIntegralReport {
    pub h_invariance: Verdict,
    pub bracket: Verdict,
    pub drift: Verdict,
    pub pass: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn first_integral_check(
    structure: &GaugePoissonStructure,
    h: &PhaseFunction,
    action: &FiberwiseAction,
    traj: &Trajectory,
    samples: &[Phase],
    seed: u64,
    bracket_tol: f64,
    drift_tol: f64,
) -> Result<FirstIntegralReport> {
    let mut rng = SplitMix64::new(seed);
    let mut max_h = 0.0f64;
    let mut max_bracket = 0.0f64;
    let m = structure.m;
    let n = structure.n();
    let lifted: Vec<PhaseFunction> = action
        .moments()
        .iter()
        .enumerate()
        .map(|(a, j)| PhaseFunction::from_qy(format!("J{}", a + 1), j.clone(), m, n))
        .collect();
    for x in samples {
        let a = sample_group_param(action, &mut rng);
        let moved = Phase::new(x.p.clone(), x.q.clone(), action.transform(&x.q, &a, &x.y)?);
        max_h = max_h.max((h.eval(&moved) - h.eval(x)).abs());
        for j in &lifted {
            max_bracket = max_bracket.max(structure.bracket(h, j, x)?.abs());
        }
    }
    let report = monitor(traj, &lifted);
    let max_drift = report.max_rel_drift();
    let h_invariance = Verdict::new(max_h, 1e-10);
    let bracket = Verdict::new(max_bracket, bracket_tol);
    let drift = Verdict::new(max_drift, drift_tol);
    let pass = h_invariance.pass && bracket.pass && drift.pass;
    Ok(FirstIntegralReport { h_invariance, bracket, drift, pass })
}
