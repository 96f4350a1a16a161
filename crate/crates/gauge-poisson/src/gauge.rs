//! Gauge 1-forms, the associated field strength, horizontal lifts, and the
//! assembled gauge Poisson structure with its verification operations.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::field::{DiffScheme, Field};
use crate::lie_poisson::{LieAlgebraStructure, PoissonFiber};
use crate::numerics::{matrix_rank, DEFAULT_RANK_TOL};
use crate::phase::{Phase, PhaseFunction};
use crate::{Error, Result};

/// Relative FD step for nested brackets in the Jacobiator; second-order
/// differencing of first-order brackets loses about four digits, so the
/// verification tolerances are set accordingly.
pub const JACOBIATOR_FD_STEP: f64 = 1e-4;

/// Radius below which singular potentials (Wu-Yang) refuse to evaluate.
pub const SINGULAR_DOMAIN_RADIUS: f64 = 1e-9;

type DomainFn = Arc<dyn Fn(&DVector<f64>) -> Result<()> + Send + Sync>;

pub fn cross(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

/// A gauge 1-form `A = A_i(q, y) dq^i` on `Q x N`.
#[derive(Clone)]
pub struct GaugeForm {
    pub m: usize,
    pub n: usize,
    comps: Vec<Field>,
    domain: Option<DomainFn>,
}

impl GaugeForm {
    pub fn new(m: usize, n: usize, comps: Vec<Field>) -> Result<Self> {
        if comps.len() != m {
            return Err(Error::Dimension(format!(
                "gauge form needs {m} components, got {}",
                comps.len()
            )));
        }
        Ok(Self { m, n, comps, domain: None })
    }

    /// Validate analytic partials against FD at the given sample points.
    pub fn validated(
        self,
        samples: &[(DVector<f64>, DVector<f64>)],
        tol: f64,
    ) -> Result<Self> {
        for c in &self.comps {
            c.validate_grads(samples, tol)?;
        }
        Ok(self)
    }

    pub fn zero(m: usize, n: usize) -> Self {
        Self { m, n, comps: (0..m).map(|_| Field::constant(0.0)).collect(), domain: None }
    }

    pub fn with_domain<D>(mut self, domain: D) -> Self
    where
        D: Fn(&DVector<f64>) -> Result<()> + Send + Sync + 'static,
    {
        self.domain = Some(Arc::new(domain));
        self
    }

    /// Guard for fields singular at the origin.
    pub fn punctured_domain(self) -> Self {
        self.with_domain(|q| {
            if q.norm() < SINGULAR_DOMAIN_RADIUS {
                Err(Error::Domain(format!("|q| = {} below singular radius", q.norm())))
            } else {
                Ok(())
            }
        })
    }

    /// The Wu-Yang contracted gauge form `A_i = (q x y)_i / |q|^2` with
    /// analytic partials.
    pub fn wu_yang() -> Self {
        let comps = (0..3)
            .map(|i| {
                Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                    cross(q, y)[i] / q.norm_squared()
                })
                .with_grad_y(move |q: &DVector<f64>, _y: &DVector<f64>| {
                    let r2 = q.norm_squared();
                    DVector::from_fn(3, |a, _| {
                        let mut ea = DVector::zeros(3);
                        ea[a] = 1.0;
                        cross(q, &ea)[i] / r2
                    })
                })
                .with_grad_q(move |q: &DVector<f64>, y: &DVector<f64>| {
                    let r2 = q.norm_squared();
                    let qxy = cross(q, y);
                    DVector::from_fn(3, |j, _| {
                        let mut ej = DVector::zeros(3);
                        ej[j] = 1.0;
                        cross(&ej, y)[i] / r2 - 2.0 * q[j] * qxy[i] / (r2 * r2)
                    })
                })
            })
            .collect();
        Self { m: 3, n: 3, comps, domain: None }.punctured_domain()
    }

    pub fn check_domain(&self, q: &DVector<f64>) -> Result<()> {
        match &self.domain {
            Some(d) => d(q),
            None => Ok(()),
        }
    }

    pub fn component(&self, i: usize) -> &Field {
        &self.comps[i]
    }

    pub fn eval(&self, i: usize, q: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        self.check_domain(q)?;
        let v = self.comps[i].eval(q, y);
        if !v.is_finite() {
            return Err(Error::NonFinite { at: format!("A_{} at q = {q:?}", i + 1) });
        }
        Ok(v)
    }

    pub fn dq(&self, i: usize, j: usize, q: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.comps[i].dq(j, q, y)
    }

    pub fn grad_y(&self, i: usize, q: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.comps[i].grad_y_at(q, y)
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.comps.iter().all(|c| c.has_analytic_grads())
    }
}

impl std::fmt::Debug for GaugeForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaugeForm").field("m", &self.m).field("n", &self.n).finish()
    }
}

type CoeffFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type CoeffPartialFn = Arc<dyn Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync>;

/// A linear (vector) gauge potential `A_{alpha i}(q)`: an algebra-valued
/// 1-form on `Q`, inducing the gauge form `A_i(q, y) = y^alpha A_{alpha i}`.
#[derive(Clone)]
pub struct LinearGaugePotential {
    pub m: usize,
    pub n: usize,
    /// `coeffs(q)` is the n x m matrix `A_{alpha i}(q)`.
    coeffs: CoeffFn,
    /// Analytic `d coeffs / d q^j` when available.
    dcoeffs: Option<CoeffPartialFn>,
    domain: Option<DomainFn>,
    scheme: DiffScheme,
}

impl LinearGaugePotential {
    pub fn new<F>(m: usize, n: usize, coeffs: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            m,
            n,
            coeffs: Arc::new(coeffs),
            dcoeffs: None,
            domain: None,
            scheme: DiffScheme::default(),
        }
    }

    pub fn with_dcoeffs<F>(mut self, dcoeffs: F) -> Self
    where
        F: Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.dcoeffs = Some(Arc::new(dcoeffs));
        self
    }

    /// The Wu-Yang vector potential in the convention fixed by the averaging
    /// construction: `A_{alpha i}(q) = (e_i x q)_alpha / |q|^2`.
    pub fn wu_yang() -> Self {
        let coeffs = |q: &DVector<f64>| {
            let r2 = q.norm_squared();
            DMatrix::from_fn(3, 3, |a, i| {
                let mut ei = DVector::zeros(3);
                ei[i] = 1.0;
                cross(&ei, q)[a] / r2
            })
        };
        let dcoeffs = |q: &DVector<f64>, j: usize| {
            let r2 = q.norm_squared();
            let mut ej = DVector::zeros(3);
            ej[j] = 1.0;
            DMatrix::from_fn(3, 3, |a, i| {
                let mut ei = DVector::zeros(3);
                ei[i] = 1.0;
                cross(&ei, &ej)[a] / r2 - 2.0 * q[j] * cross(&ei, q)[a] / (r2 * r2)
            })
        };
        let mut p = Self::new(3, 3, coeffs).with_dcoeffs(dcoeffs);
        p.domain = Some(Arc::new(|q: &DVector<f64>| {
            if q.norm() < SINGULAR_DOMAIN_RADIUS {
                Err(Error::Domain(format!("|q| = {} below singular radius", q.norm())))
            } else {
                Ok(())
            }
        }));
        p
    }

    pub fn coeffs_at(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        if let Some(d) = &self.domain {
            d(q)?;
        }
        let c = (self.coeffs)(q);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { at: format!("linear potential at q = {q:?}") });
        }
        Ok(c)
    }

    pub fn dcoeffs_at(&self, q: &DVector<f64>, j: usize) -> Result<DMatrix<f64>> {
        if let Some(d) = &self.dcoeffs {
            return Ok(d(q, j));
        }
        let h = self.scheme.step_at(q[j]);
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[j] += h;
        qm[j] -= h;
        Ok((self.coeffs_at(&qp)? - self.coeffs_at(&qm)?) / (2.0 * h))
    }

    /// Algebra-valued component `A_i(q)` as a vector over alpha.
    pub fn component_at(&self, q: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
        Ok(self.coeffs_at(q)?.column(i).into_owned())
    }

    /// Contract with `y` into a [`GaugeForm`] with analytic partials.
    pub fn contract(&self) -> GaugeForm {
        let comps = (0..self.m)
            .map(|i| {
                let p1 = self.clone();
                let p2 = self.clone();
                let p3 = self.clone();
                Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
                    match p1.coeffs_at(q) {
                        Ok(c) => c.column(i).dot(y),
                        Err(_) => f64::NAN,
                    }
                })
                .with_grad_y(move |q: &DVector<f64>, _y: &DVector<f64>| {
                    p2.coeffs_at(q).map(|c| c.column(i).into_owned()).unwrap_or_else(|_| {
                        DVector::from_element(p2.n, f64::NAN)
                    })
                })
                .with_grad_q(move |q: &DVector<f64>, y: &DVector<f64>| {
                    DVector::from_fn(p3.m, |j, _| match p3.dcoeffs_at(q, j) {
                        Ok(d) => d.column(i).dot(y),
                        Err(_) => f64::NAN,
                    })
                })
            })
            .collect();
        GaugeForm { m: self.m, n: self.n, comps, domain: self.domain.clone() }
    }
}

impl std::fmt::Debug for LinearGaugePotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearGaugePotential").field("m", &self.m).field("n", &self.n).finish()
    }
}

/// The 2-form `F_{ij} = d_i A_j - d_j A_i + Psi^{ab} d_a A_i d_b A_j`,
/// antisymmetrized exactly after evaluation.
#[derive(Clone)]
pub struct FieldStrength {
    pub m: usize,
    eval: Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync>,
}

impl FieldStrength {
    pub fn at(&self, q: &DVector<f64>, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        (self.eval)(q, y)
    }

    /// Same strength multiplied by a constant. Useful for building
    /// deliberately broken structures as negative controls.
    pub fn scaled(&self, factor: f64) -> FieldStrength {
        let inner = self.eval.clone();
        FieldStrength {
            m: self.m,
            eval: Arc::new(move |q, y| Ok(inner(q, y)? * factor)),
        }
    }
}

/// Field strength of a gauge form relative to a Poisson fiber.
pub fn field_strength(gauge: &GaugeForm, fiber: &PoissonFiber) -> FieldStrength {
    let gauge = gauge.clone();
    let fiber = fiber.clone();
    let m = gauge.m;
    FieldStrength {
        m,
        eval: Arc::new(move |q, y| {
            gauge.check_domain(q)?;
            let psi = fiber.psi(q, y);
            let grads: Vec<DVector<f64>> = (0..m).map(|i| gauge.grad_y(i, q, y)).collect();
            let mut f = DMatrix::zeros(m, m);
            for i in 0..m {
                for j in (i + 1)..m {
                    let v = gauge.dq(j, i, q, y) - gauge.dq(i, j, q, y)
                        + grads[i].dot(&(&psi * &grads[j]));
                    if !v.is_finite() {
                        return Err(Error::NonFinite {
                            at: format!("F_{}{} at q = {q:?}", i + 1, j + 1),
                        });
                    }
                    f[(i, j)] = v;
                    f[(j, i)] = -v;
                }
            }
            Ok(f)
        }),
    }
}

/// Algebra-valued field strength `F_{alpha i j}(q)` of a linear potential,
/// returned per point as one m x m matrix for each algebra index.
pub fn linear_field_strength(
    potential: &LinearGaugePotential,
    algebra: &LieAlgebraStructure,
    q: &DVector<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let n = potential.n;
    let m = potential.m;
    let mut partials = Vec::with_capacity(m);
    for j in 0..m {
        partials.push(potential.dcoeffs_at(q, j)?);
    }
    let coeffs = potential.coeffs_at(q)?;
    let mut out = vec![DMatrix::zeros(m, m); n];
    for i in 0..m {
        for j in (i + 1)..m {
            let ai = coeffs.column(i).into_owned();
            let aj = coeffs.column(j).into_owned();
            let comm = algebra.bracket(&ai, &aj)?;
            for a in 0..n {
                let v = partials[i][(a, j)] - partials[j][(a, i)] + comm[a];
                out[a][(i, j)] = v;
                out[a][(j, i)] = -v;
            }
        }
    }
    Ok(out)
}

/// The assembled gauge Poisson structure on `T*Q x N`.
#[derive(Clone)]
pub struct GaugePoissonStructure {
    pub m: usize,
    pub fiber: PoissonFiber,
    pub gauge: GaugeForm,
    strength: FieldStrength,
}

impl GaugePoissonStructure {
    pub fn new(fiber: PoissonFiber, gauge: GaugeForm) -> Result<Self> {
        if gauge.n != fiber.n {
            return Err(Error::Dimension(format!(
                "gauge form fiber dim {} vs fiber dim {}",
                gauge.n, fiber.n
            )));
        }
        let strength = field_strength(&gauge, &fiber);
        Ok(Self { m: gauge.m, fiber, gauge, strength })
    }

    pub fn n(&self) -> usize {
        self.fiber.n
    }

    /// Rescale the `{p, p}` block by a constant, leaving the mixed and fiber
    /// blocks alone. With any factor other than 1 the compatibility between
    /// the blocks is destroyed, which makes this handy as a negative control
    /// for structure checks.
    pub fn with_scaled_strength(mut self, factor: f64) -> Self {
        self.strength = self.strength.scaled(factor);
        self
    }

    pub fn dim(&self) -> usize {
        2 * self.m + self.fiber.n
    }

    pub fn field_strength_at(&self, q: &DVector<f64>, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.strength.at(q, y)
    }

    /// The generators `hor_i = d/dq^i + Psi^{ab} dA_i/dy^a d/dy^b`; returns
    /// the y-part, the q-part being the unit vector `e_i`.
    pub fn horizontal_lift_y_part(
        &self,
        i: usize,
        q: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.gauge.check_domain(q)?;
        let psi = self.fiber.psi(q, y);
        let grad = self.gauge.grad_y(i, q, y);
        // Psi^{ab} d_a A_i = (Psi^T grad)_b = -(Psi grad)_b
        Ok(-(psi * grad))
    }

    /// Full bracket matrix at a point, coordinate order `(p, q, y)`.
    ///
    /// Blocks per the defining relations: `{p,p} = F`, `{p,q} = I`,
    /// `{q,q} = {q,y} = 0`, `{p,y} = -Psi dA/dy`, `{y,y} = Psi`.
    pub fn assemble(&self, x: &Phase) -> Result<DMatrix<f64>> {
        let m = self.m;
        let n = self.fiber.n;
        if x.m() != m || x.n() != n {
            return Err(Error::Dimension("phase point dims do not match structure".into()));
        }
        self.gauge.check_domain(&x.q)?;
        let mut mat = DMatrix::zeros(2 * m + n, 2 * m + n);
        let f = self.strength.at(&x.q, &x.y)?;
        let psi = self.fiber.psi(&x.q, &x.y);
        for i in 0..m {
            for j in 0..m {
                mat[(i, j)] = f[(i, j)];
            }
            mat[(i, m + i)] = 1.0;
            mat[(m + i, i)] = -1.0;
            let py = psi.clone() * self.gauge.grad_y(i, &x.q, &x.y);
            for a in 0..n {
                let v = -py[a];
                if !v.is_finite() {
                    return Err(Error::NonFinite { at: format!("{{p_{}, y}}", i + 1) });
                }
                mat[(i, 2 * m + a)] = v;
                mat[(2 * m + a, i)] = -v;
            }
        }
        for a in 0..n {
            for b in 0..n {
                mat[(2 * m + a, 2 * m + b)] = psi[(a, b)];
            }
        }
        Ok(mat)
    }

    /// `{f, g}(x) = grad f . M(x) . grad g`.
    pub fn bracket(&self, f: &PhaseFunction, g: &PhaseFunction, x: &Phase) -> Result<f64> {
        let mat = self.assemble(x)?;
        let gf = f.grad_at(x);
        let gg = g.grad_at(x);
        Ok(gf.dot(&(mat * gg)))
    }

    /// Numerical rank of the assembled matrix.
    pub fn rank_at(&self, x: &Phase) -> Result<usize> {
        matrix_rank(&self.assemble(x)?, DEFAULT_RANK_TOL)
    }

    /// `{f, {g, h}} + {g, {h, f}} + {h, {f, g}}` with nested FD brackets.
    pub fn jacobiator(
        &self,
        f: &PhaseFunction,
        g: &PhaseFunction,
        h: &PhaseFunction,
        x: &Phase,
    ) -> Result<f64> {
        let term = |a: &PhaseFunction, b: &PhaseFunction, c: &PhaseFunction| -> Result<f64> {
            let s = self.clone();
            let b = b.clone();
            let c = c.clone();
            let inner = PhaseFunction::new("inner", move |x: &Phase| {
                s.bracket(&b, &c, x).unwrap_or(f64::NAN)
            })
            .with_fd_step(JACOBIATOR_FD_STEP);
            self.bracket(a, &inner, x)
        };
        let r = term(f, g, h)? + term(g, h, f)? + term(h, f, g)?;
        if !r.is_finite() {
            return Err(Error::NonFinite { at: "jacobiator".into() });
        }
        Ok(r)
    }
}

impl std::fmt::Debug for GaugePoissonStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaugePoissonStructure")
            .field("m", &self.m)
            .field("n", &self.fiber.n)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::Coord;
    use approx::assert_abs_diff_eq;

    fn v3(a: f64, b: f64, c: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b, c])
    }

    fn wu_yang_structure() -> GaugePoissonStructure {
        GaugePoissonStructure::new(PoissonFiber::so3(), GaugeForm::wu_yang()).unwrap()
    }

    #[test]
    fn wu_yang_analytic_partials_match_fd() {
        let samples = vec![
            (v3(1.0, 0.5, 0.8), v3(0.2, -0.4, 0.5)),
            (v3(-0.7, 1.2, 0.3), v3(1.0, 0.0, -1.0)),
        ];
        GaugeForm::wu_yang().validated(&samples, 1e-6).unwrap();
    }

    #[test]
    fn abelian_field_strength_is_exterior_derivative() {
        // Q = R^2, A = q^2 dq^1, abelian fiber: F_12 = -1
        let fiber = PoissonFiber::abelian(1);
        let a = GaugeForm::new(
            2,
            1,
            vec![Field::new(|q: &DVector<f64>, _| q[1]), Field::constant(0.0)],
        )
        .unwrap();
        let f = field_strength(&a, &fiber);
        let got = f.at(&DVector::from_vec(vec![0.3, -1.0]), &DVector::from_vec(vec![2.0])).unwrap();
        assert_abs_diff_eq!(got[(0, 1)], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(got[(1, 0)], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_gauge_form_zero_field_strength() {
        let fiber = PoissonFiber::so3();
        let f = field_strength(&GaugeForm::zero(3, 3), &fiber);
        let got = f.at(&v3(1.0, 2.0, 3.0), &v3(0.1, 0.2, 0.3)).unwrap();
        assert_abs_diff_eq!(got, DMatrix::zeros(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn wu_yang_field_strength_pinned_value() {
        // hand evaluation at q = y = e3: d_Q part -2, Psi part +1
        let s = wu_yang_structure();
        let f = s.field_strength_at(&v3(0.0, 0.0, 1.0), &v3(0.0, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(f[(0, 1)], -1.0, epsilon = 1e-10);
    }

    #[test]
    fn linear_potential_contraction_consistency() {
        // y^alpha F_{alpha ij}(q) equals the field strength of the contracted form
        let p = LinearGaugePotential::wu_yang();
        let l = LieAlgebraStructure::so3();
        let fiber = PoissonFiber::so3();
        let contracted = p.contract();
        let fs = field_strength(&contracted, &fiber);
        let mut rng = crate::rng::SplitMix64::new(7);
        for _ in 0..20 {
            let q = v3(
                rng.uniform(0.5, 2.0),
                rng.uniform(-1.0, 1.0),
                rng.uniform(-1.0, 1.0),
            );
            let y = v3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
            let f_lin = linear_field_strength(&p, &l, &q).unwrap();
            let f = fs.at(&q, &y).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let contracted_entry: f64 =
                        (0..3).map(|a| y[a] * f_lin[a][(i, j)]).sum();
                    assert_abs_diff_eq!(contracted_entry, f[(i, j)], epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn wu_yang_linear_field_strength_magnitude() {
        // |F_{alpha i j}(q)| = |eps_{ijk} q^k q^alpha| / |q|^4
        let p = LinearGaugePotential::wu_yang();
        let l = LieAlgebraStructure::so3();
        let mut rng = crate::rng::SplitMix64::new(11);
        let eps = |i: usize, j: usize, k: usize| -> f64 {
            match (i, j, k) {
                (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
                (2, 1, 0) | (1, 0, 2) | (0, 2, 1) => -1.0,
                _ => 0.0,
            }
        };
        for _ in 0..20 {
            let q = v3(rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(-2.0, -0.5));
            let r4 = q.norm_squared().powi(2);
            let f = linear_field_strength(&p, &l, &q).unwrap();
            for a in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        let expect: f64 =
                            (0..3).map(|k| eps(i, j, k) * q[k] * q[a]).sum::<f64>() / r4;
                        assert_abs_diff_eq!(f[a][(i, j)].abs(), expect.abs(), epsilon = 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn linear_field_strength_trivial_cases() {
        let l = LieAlgebraStructure::abelian(2);
        let p = LinearGaugePotential::new(3, 2, |_q| DMatrix::from_element(2, 3, 0.7));
        let q = v3(1.0, 2.0, 3.0);
        for fa in linear_field_strength(&p, &l, &q).unwrap() {
            assert_abs_diff_eq!(fa, DMatrix::zeros(3, 3), epsilon = 1e-9);
        }
        let zero = LinearGaugePotential::new(3, 3, |_q| DMatrix::zeros(3, 3));
        for fa in linear_field_strength(&zero, &LieAlgebraStructure::so3(), &q).unwrap() {
            assert_abs_diff_eq!(fa, DMatrix::zeros(3, 3), epsilon = 1e-9);
        }
    }

    #[test]
    fn horizontal_lift_trivial_cases() {
        // A = 0: pure base translation
        let s = GaugePoissonStructure::new(PoissonFiber::so3(), GaugeForm::zero(3, 3)).unwrap();
        let y_part = s.horizontal_lift_y_part(0, &v3(1.0, 0.0, 0.0), &v3(0.3, 0.4, 0.5)).unwrap();
        assert_abs_diff_eq!(y_part, DVector::zeros(3), epsilon = 1e-12);
        // abelian fiber kills the correction regardless of A
        let s = GaugePoissonStructure::new(PoissonFiber::abelian(3), GaugeForm::wu_yang()).unwrap();
        let y_part = s.horizontal_lift_y_part(1, &v3(1.0, 0.5, 0.8), &v3(0.3, 0.4, 0.5)).unwrap();
        assert_abs_diff_eq!(y_part, DVector::zeros(3), epsilon = 1e-12);
    }

    #[test]
    fn horizontal_lift_wu_yang_pinned() {
        // q = e3, y = e1, i = 2: grad_y A_2 = (1,0,0), Psi(e1) kills it
        let s = wu_yang_structure();
        let grad = s.gauge.grad_y(1, &v3(0.0, 0.0, 1.0), &v3(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(grad, v3(1.0, 0.0, 0.0), epsilon = 1e-12);
        let y_part = s.horizontal_lift_y_part(1, &v3(0.0, 0.0, 1.0), &v3(1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(y_part, DVector::zeros(3), epsilon = 1e-12);
    }

    #[test]
    fn assembled_matrix_blocks_and_antisymmetry() {
        let s = wu_yang_structure();
        let x = Phase::from_slices(&[0.3, 0.1, -0.2], &[1.0, 0.5, 0.8], &[0.2, -0.4, 0.5]);
        let m = s.assemble(&x).unwrap();
        // exact antisymmetry
        assert_abs_diff_eq!(&m + m.transpose(), DMatrix::zeros(9, 9), epsilon = 0.0);
        for i in 0..3 {
            for j in 0..3 {
                // {q, q} = 0, {p, q} = delta, {q, y} = 0
                assert_eq!(m[(3 + i, 3 + j)], 0.0);
                assert_eq!(m[(i, 3 + j)], if i == j { 1.0 } else { 0.0 });
                assert_eq!(m[(3 + i, 6 + j)], 0.0);
            }
        }
        // canonical case: A = 0, abelian fiber
        let s0 = GaugePoissonStructure::new(PoissonFiber::abelian(2), GaugeForm::zero(2, 2)).unwrap();
        let x0 = Phase::from_slices(&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]);
        let m0 = s0.assemble(&x0).unwrap();
        let mut expect = DMatrix::zeros(6, 6);
        expect[(0, 2)] = 1.0;
        expect[(1, 3)] = 1.0;
        expect[(2, 0)] = -1.0;
        expect[(3, 1)] = -1.0;
        assert_abs_diff_eq!(m0, expect, epsilon = 0.0);
    }

    #[test]
    fn assembled_pp_entry_equals_field_strength() {
        let s = wu_yang_structure();
        let x = Phase::from_slices(&[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0]);
        let m = s.assemble(&x).unwrap();
        assert_abs_diff_eq!(m[(0, 1)], -1.0, epsilon = 1e-10);
    }

    #[test]
    fn bracket_canonical_pairs() {
        let s = wu_yang_structure();
        let x = Phase::from_slices(&[0.3, 0.1, -0.2], &[1.0, 0.5, 0.8], &[0.2, -0.4, 0.5]);
        let p1 = PhaseFunction::coord(Coord::P(0), 3, 3);
        let q1 = PhaseFunction::coord(Coord::Q(0), 3, 3);
        assert_abs_diff_eq!(s.bracket(&p1, &q1, &x).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.bracket(&p1, &p1, &x).unwrap(), 0.0, epsilon = 1e-12);
        // |y|^2 is a q-independent Casimir of the full structure
        let c = PhaseFunction::new("|y|^2", |x: &Phase| x.y.norm_squared());
        assert_abs_diff_eq!(s.bracket(&c, &p1, &x).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn rank_formula() {
        let s = wu_yang_structure();
        let x = Phase::from_slices(&[0.3, 0.1, -0.2], &[1.0, 0.5, 0.8], &[0.0, 0.0, 1.0]);
        assert_eq!(s.rank_at(&x).unwrap(), 8);
        let x0 = Phase::from_slices(&[0.3, 0.1, -0.2], &[1.0, 0.5, 0.8], &[0.0, 0.0, 0.0]);
        assert_eq!(s.rank_at(&x0).unwrap(), 6);
        let ab = GaugePoissonStructure::new(PoissonFiber::abelian(3), GaugeForm::zero(3, 3)).unwrap();
        let xa = Phase::from_slices(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[1.0, 2.0, 3.0]);
        assert_eq!(ab.rank_at(&xa).unwrap(), 6);
    }

    #[test]
    fn jacobiator_vanishes() {
        let s = wu_yang_structure();
        let x = Phase::from_slices(&[0.3, 0.1, -0.2], &[1.0, 0.5, 0.8], &[0.2, -0.4, 0.5]);
        let q: Vec<_> = (0..3).map(|i| PhaseFunction::coord(Coord::Q(i), 3, 3)).collect();
        // all brackets of q-coordinates are constant: exactly zero
        assert_eq!(s.jacobiator(&q[0], &q[1], &q[2], &x).unwrap(), 0.0);
        // fiber triple with A = 0: structure-constant Jacobi
        let s0 = GaugePoissonStructure::new(PoissonFiber::so3(), GaugeForm::zero(3, 3)).unwrap();
        let y: Vec<_> = (0..3).map(|a| PhaseFunction::coord(Coord::Y(a), 3, 3)).collect();
        assert!(s0.jacobiator(&y[0], &y[1], &y[2], &x).unwrap().abs() <= 1e-12);
        // Wu-Yang momentum triple at random points: FD tolerance
        let p: Vec<_> = (0..3).map(|i| PhaseFunction::coord(Coord::P(i), 3, 3)).collect();
        let mut rng = crate::rng::SplitMix64::new(3);
        for _ in 0..20 {
            let x = Phase::new(
                DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0)),
                DVector::from_fn(3, |_, _| rng.uniform(0.6, 2.0)),
                DVector::from_fn(3, |_, _| rng.uniform(-1.0, 1.0)),
            );
            let r = s.jacobiator(&p[0], &p[1], &p[2], &x).unwrap();
            assert!(r.abs() <= 1e-6, "jacobiator residual {r}");
        }
    }

    #[test]
    fn domain_guard_rejects_origin() {
        let s = wu_yang_structure();
        let x = Phase::from_slices(&[0.0; 3], &[0.0; 3], &[1.0, 0.0, 0.0]);
        assert!(matches!(s.assemble(&x), Err(Error::Domain(_))));
    }
}
