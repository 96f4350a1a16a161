//! Connection pairs on Lie-Poisson bundles in a single local chart.
//!
//! A chart pair is a linear connection `nabla = d_Q + Gamma_i(q) dq^i` on
//! the fiber together with a fiber-valued curvature 2-form `F_ij(q)`. For a
//! gauge potential `A_i(q)` the connection is `nabla = d_Q - ad*_A` and the
//! dual connection on algebra-valued sections is `nabla* = d_Q - Gamma^T`,
//! the unique choice compatible with `<nabla* eta, zeta> + <eta, nabla zeta>
//! = d<eta, zeta>`.
//!
//! With this crate's coadjoint sign (`ad*_x y = y cross x` on so(3)*), the
//! bracket-compatibility identity reads `[nabla_v, ad*_eta] =
//! +ad*_{nabla*_v eta}`; the opposite-sign coadjoint convention flips it.
//! The curvature and covariant-constancy conditions are convention-free:
//! `Curv = -ad*_F` and the cyclic (Bianchi) sum of `nabla_i F_jk`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::averaging::{so3_coad_rotate, BallRule, GroupKind, QuadSpec, SectionField, Verdict};
use crate::dynamics::{Metric, RhsFn};
use crate::field::DiffScheme;
use crate::gauge::{cross, linear_field_strength, LinearGaugePotential};
use crate::lie_poisson::LieAlgebraStructure;
use crate::numerics::{gauss_legendre_nodes, sawtooth_weights};
use crate::phase::Phase;
use crate::rng::SplitMix64;
use crate::{Error, Result};

pub const LPVH_TOL: f64 = 1e-6;
pub const ICO_TOL: f64 = 1e-6;
pub const AE_TOL: f64 = 1e-10;

type LambdaFn = Arc<dyn Fn(&DVector<f64>) -> LieAlgebraStructure + Send + Sync>;
type PotentialFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type GammaFn = Arc<dyn Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync>;
type CurvatureFn = Arc<dyn Fn(&DVector<f64>, usize, usize) -> DVector<f64> + Send + Sync>;

/// A chart connection pair `(nabla, F)` with possibly q-dependent fiber
/// structure constants.
#[derive(Clone)]
pub struct ConnectionPair {
    pub m: usize,
    pub n: usize,
    lambda: LambdaFn,
    gamma: GammaFn,
    /// Gauge potential `A_{alpha i}(q)` when the connection is of ad* type.
    potential: Option<PotentialFn>,
    curvature: CurvatureFn,
    scheme: DiffScheme,
}

impl ConnectionPair {
    /// `nabla = d_Q - ad*_A` with an explicit curvature form.
    pub fn from_potential<L, A, F>(m: usize, n: usize, lambda: L, potential: A, curvature: F) -> Self
    where
        L: Fn(&DVector<f64>) -> LieAlgebraStructure + Send + Sync + 'static,
        A: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        F: Fn(&DVector<f64>, usize, usize) -> DVector<f64> + Send + Sync + 'static,
    {
        let lambda: LambdaFn = Arc::new(lambda);
        let potential: PotentialFn = Arc::new(potential);
        let lam = lambda.clone();
        let pot = potential.clone();
        let gamma: GammaFn = Arc::new(move |q, i| {
            let alg = lam(q);
            let a_i = pot(q).column(i).into_owned();
            -alg.ad_star_matrix(&a_i).expect("potential column matches fiber dim")
        });
        Self {
            m,
            n,
            lambda,
            gamma,
            potential: Some(potential),
            curvature: antisymmetrize(Arc::new(curvature)),
            scheme: DiffScheme::default(),
        }
    }

    /// The trivial-chart pair induced by a linear gauge potential over a
    /// fixed algebra, with `F = dA + 1/2 [A ^ A]`.
    pub fn from_linear_potential(p: &LinearGaugePotential, algebra: &LieAlgebraStructure) -> Self {
        let pot = p.clone();
        let alg = algebra.clone();
        let pot2 = p.clone();
        let alg2 = algebra.clone();
        let n = algebra.n;
        Self::from_potential(
            p.m,
            n,
            move |_q| alg.clone(),
            move |q| pot.coeffs_at(q).expect("potential evaluation"),
            move |q, i, j| {
                let fs = linear_field_strength(&pot2, &alg2, q).expect("field strength");
                DVector::from_fn(n, |a, _| fs[a][(i, j)])
            },
        )
    }

    /// Flat pair: `A = 0`, `F = 0`.
    pub fn flat(m: usize, algebra: &LieAlgebraStructure) -> Self {
        let n = algebra.n;
        let alg = algebra.clone();
        Self::from_potential(
            m,
            n,
            move |_q| alg.clone(),
            move |_q| DMatrix::zeros(n, m),
            move |_q, _i, _j| DVector::zeros(n),
        )
    }

    /// Raw chart connection from coefficient matrices `Gamma_i(q)`, for
    /// connections that are not of ad* type. No gauge potential is attached.
    pub fn from_gamma<L, G, F>(m: usize, n: usize, lambda: L, gamma: G, curvature: F) -> Self
    where
        L: Fn(&DVector<f64>) -> LieAlgebraStructure + Send + Sync + 'static,
        G: Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync + 'static,
        F: Fn(&DVector<f64>, usize, usize) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            m,
            n,
            lambda: Arc::new(lambda),
            gamma: Arc::new(gamma),
            potential: None,
            curvature: antisymmetrize(Arc::new(curvature)),
            scheme: DiffScheme::default(),
        }
    }

    /// Replace the curvature form, keeping the connection.
    pub fn with_curvature<F>(mut self, curvature: F) -> Self
    where
        F: Fn(&DVector<f64>, usize, usize) -> DVector<f64> + Send + Sync + 'static,
    {
        self.curvature = antisymmetrize(Arc::new(curvature));
        self
    }

    pub fn lambda_at(&self, q: &DVector<f64>) -> LieAlgebraStructure {
        (self.lambda)(q)
    }

    pub fn gamma_at(&self, q: &DVector<f64>, i: usize) -> DMatrix<f64> {
        (self.gamma)(q, i)
    }

    pub fn potential_at(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.potential {
            Some(p) => Ok(p(q)),
            None => Err(Error::Invalid("connection has no attached gauge potential".into())),
        }
    }

    pub fn has_potential(&self) -> bool {
        self.potential.is_some()
    }

    /// `F_ij(q)`, antisymmetric in `(i, j)` by construction.
    pub fn curvature_at(&self, q: &DVector<f64>, i: usize, j: usize) -> DVector<f64> {
        (self.curvature)(q, i, j)
    }

    /// Dual-connection derivative `nabla*_i eta = d_i eta - Gamma_i^T eta`
    /// of an algebra-valued section given by value and i-th partial.
    pub fn nabla_star(
        &self,
        q: &DVector<f64>,
        i: usize,
        eta: &DVector<f64>,
        d_eta: &DVector<f64>,
    ) -> DVector<f64> {
        d_eta - self.gamma_at(q, i).transpose() * eta
    }

    /// Structure-constant well-formedness of `lambda(q)` at the samples.
    pub fn validate_lambda(&self, samples: &[DVector<f64>]) -> Result<()> {
        for q in samples {
            let rep = self.lambda_at(q).check();
            if !rep.pass {
                return Err(Error::Invalid(format!(
                    "lambda(q) fails structure checks at q = {q:?} (antisymmetry {:.3e}, jacobi {:.3e})",
                    rep.max_antisymmetry_violation, rep.max_jacobi_residual
                )));
            }
        }
        Ok(())
    }

    fn d_gamma(&self, q: &DVector<f64>, i: usize, k: usize) -> DMatrix<f64> {
        let h = self.scheme.step_at(q[k]);
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[k] += h;
        qm[k] -= h;
        (self.gamma_at(&qp, i) - self.gamma_at(&qm, i)) / (2.0 * h)
    }

    fn d_curvature(&self, q: &DVector<f64>, i: usize, j: usize, k: usize) -> DVector<f64> {
        let h = self.scheme.step_at(q[k]);
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[k] += h;
        qm[k] -= h;
        (self.curvature_at(&qp, i, j) - self.curvature_at(&qm, i, j)) / (2.0 * h)
    }
}

impl std::fmt::Debug for ConnectionPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConnectionPair")
            .field("m", &self.m)
            .field("n", &self.n)
            .field("has_potential", &self.potential.is_some())
            .finish()
    }
}

fn antisymmetrize(raw: CurvatureFn) -> CurvatureFn {
    Arc::new(move |q, i, j| {
        if i == j {
            return raw(q, i, j) * 0.0;
        }
        (raw(q, i, j) - raw(q, j, i)) * 0.5
    })
}

/// Linear family of algebra-valued sections `a -> s_a`, stored by basis
/// images.
#[derive(Debug, Clone)]
pub struct SectionFamily {
    pub sections: Vec<SectionField>,
}

impl SectionFamily {
    pub fn new(sections: Vec<SectionField>) -> Result<Self> {
        if sections.is_empty() {
            return Err(Error::Invalid("section family needs at least one section".into()));
        }
        let (m, n) = (sections[0].m, sections[0].n);
        if sections.iter().any(|s| s.m != m || s.n != n) {
            return Err(Error::Dimension("section family on mismatched spaces".into()));
        }
        Ok(Self { sections })
    }

    pub fn circle(s: SectionField) -> Self {
        Self { sections: vec![s] }
    }

    pub fn dim_g(&self) -> usize {
        self.sections.len()
    }
}

/// Bracket-compatibility residual `[nabla_i, ad*_eta] - ad*_{nabla*_i eta}`
/// on constant basis sections eta, as matrices on the fiber.
pub fn check_lpvh1(c: &ConnectionPair, samples: &[DVector<f64>]) -> Result<Verdict> {
    c.validate_lambda(samples)?;
    let mut max = 0.0f64;
    for q in samples {
        let alg = c.lambda_at(q);
        for beta in 0..c.n {
            let mut e = DVector::zeros(c.n);
            e[beta] = 1.0;
            let m_eta = alg.ad_star_matrix(&e)?;
            for i in 0..c.m {
                // d/dq^i of the ad* matrix of the constant section e
                let h = c.scheme.step_at(q[i]);
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                let dm = (c.lambda_at(&qp).ad_star_matrix(&e)?
                    - c.lambda_at(&qm).ad_star_matrix(&e)?)
                    / (2.0 * h);
                let gamma = c.gamma_at(q, i);
                let lhs = dm + &gamma * &m_eta - &m_eta * &gamma;
                let rhs = alg.ad_star_matrix(&c.nabla_star(q, i, &e, &DVector::zeros(c.n)))?;
                max = max.max((lhs - rhs).amax());
            }
        }
    }
    Ok(Verdict::new(max, LPVH_TOL))
}

/// Curvature condition: `Curv_ij + ad*_{F_ij} = 0` with `Curv` from finite
/// differences of the connection coefficients.
pub fn check_lpvh2(c: &ConnectionPair, samples: &[DVector<f64>]) -> Result<Verdict> {
    let mut max = 0.0f64;
    for q in samples {
        let alg = c.lambda_at(q);
        for i in 0..c.m {
            for j in (i + 1)..c.m {
                let gi = c.gamma_at(q, i);
                let gj = c.gamma_at(q, j);
                let curv = c.d_gamma(q, j, i) - c.d_gamma(q, i, j) + &gi * &gj - &gj * &gi;
                let rhs = alg.ad_star_matrix(&c.curvature_at(q, i, j))?;
                max = max.max((curv + rhs).amax());
            }
        }
    }
    Ok(Verdict::new(max, LPVH_TOL))
}

/// Covariant constancy of `F` as the cyclic (Bianchi) sum
/// `sum_cyc (d_i F_jk + Gamma_i F_jk)` over base index triples.
pub fn check_lpvh3(c: &ConnectionPair, samples: &[DVector<f64>]) -> Result<Verdict> {
    let mut max = 0.0f64;
    for q in samples {
        for i in 0..c.m {
            for j in (i + 1)..c.m {
                for k in (j + 1)..c.m {
                    let mut acc = DVector::zeros(c.n);
                    for (a, b, d) in [(i, j, k), (j, k, i), (k, i, j)] {
                        acc += c.d_curvature(q, b, d, a) + c.gamma_at(q, a) * c.curvature_at(q, b, d);
                    }
                    max = max.max(acc.amax());
                }
            }
        }
    }
    Ok(Verdict::new(max, LPVH_TOL))
}

/// Outcome of the invariance criterion on a section family.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IcoReport {
    /// Operator norm of `ad_{nabla* s_a}` on the fiber, the criterion proper.
    pub ad_norm: Verdict,
    /// Max `|nabla* s_a|`; for semi-simple fibers this is the criterion.
    pub max_direct_norm: f64,
    pub semi_simple: bool,
    pub pass: bool,
}

pub fn check_ico(
    c: &ConnectionPair,
    family: &SectionFamily,
    samples: &[DVector<f64>],
) -> Result<IcoReport> {
    let mut max_ad = 0.0f64;
    let mut max_direct = 0.0f64;
    let mut semi_simple = true;
    for q in samples {
        let alg = c.lambda_at(q);
        semi_simple = semi_simple && alg.is_so3();
        for s in &family.sections {
            for i in 0..c.m {
                let x = c.nabla_star(q, i, &s.at(q), &s.d_at(q, i));
                max_ad = max_ad.max(alg.ad_matrix(&x)?.norm());
                max_direct = max_direct.max(x.norm());
            }
        }
    }
    let ad_norm = Verdict::new(max_ad, ICO_TOL);
    let pass = ad_norm.pass;
    Ok(IcoReport { ad_norm, max_direct_norm: max_direct, semi_simple, pass })
}

/// Chart solution of the invariance equation on the trivial so(3)* bundle:
/// `A_i = -s x d_i s`, which satisfies `s x A_i = d_i s` for unit sections.
pub fn solve_ae_so3(s: &SectionField) -> Result<LinearGaugePotential> {
    if s.n != 3 {
        return Err(Error::Dimension("the chart solution needs an so(3) fiber".into()));
    }
    let samples = sample_qs(s.m, 5);
    s.validate_unit(&samples, 1e-12)?;
    let sec = s.clone();
    let m = s.m;
    let pot = LinearGaugePotential::new(m, 3, move |q: &DVector<f64>| {
        DMatrix::from_fn(3, m, |a, i| -cross(&sec.at(q), &sec.d_at(q, i))[a])
    });
    // the defining identity must close at the samples
    for q in &samples {
        let coeffs = pot.coeffs_at(q)?;
        for i in 0..m {
            let lhs = cross(&s.at(q), &coeffs.column(i).into_owned());
            let err = (lhs - s.d_at(q, i)).norm();
            if err > AE_TOL {
                return Err(Error::Invalid(format!(
                    "chart solution does not close (defect {err:.3e} at q = {q:?})"
                )));
            }
        }
    }
    Ok(pot)
}

/// Adjoint flow `Ad_{exp(u x)} w` at the chart algebra, with the Rodrigues
/// fast path on so(3).
fn ad_flow(alg: &LieAlgebraStructure, x: &DVector<f64>, u: f64, w: &DVector<f64>) -> Result<DVector<f64>> {
    if alg.is_so3() {
        // ad_x w = x cross w rotates by +u about x; the coadjoint rotation
        // helper uses the opposite angle sign
        Ok(so3_coad_rotate(x, -u, w))
    } else {
        alg.ad_flow(x, u, w)
    }
}

/// The averaged gauge potential of the linear construction: for the circle,
/// `A_i = (1/2pi) int_0^{2pi} (u - 2pi) Ad_{exp(u s)} (nabla0*_i s) du`;
/// for the SO(3) group the Haar-weighted ball integral of
/// `a^j int_0^1 Ad_{exp(t s_a)} (nabla0*_i s_j) dt`. Returns the new pair
/// `nabla = nabla0 - ad*_A` with curvature `F = F0 + nabla0 A + [A_i, A_j]`.
pub fn averaged_connection(
    c0: &ConnectionPair,
    family: &SectionFamily,
    kind: GroupKind,
    quad: &QuadSpec,
) -> Result<ConnectionPair> {
    if !c0.has_potential() {
        return Err(Error::Invalid(
            "averaging needs a base connection with an attached gauge potential".into(),
        ));
    }
    let m = c0.m;
    let n = c0.n;
    let avg: PotentialFn = match kind {
        GroupKind::Circle | GroupKind::So3Rotations => {
            if family.dim_g() != 1 {
                return Err(Error::InvalidAction("circle averaging needs a single section".into()));
            }
            let s = family.sections[0].clone();
            let c0 = c0.clone();
            let nodes = quad.circle_nodes;
            let weights = sawtooth_weights(nodes);
            Arc::new(move |q: &DVector<f64>| {
                let alg = c0.lambda_at(q);
                let axis = s.at(q);
                let h = 2.0 * PI / nodes as f64;
                let mut out = DMatrix::zeros(n, m);
                for i in 0..m {
                    let x = c0.nabla_star(q, i, &axis, &s.d_at(q, i));
                    // split the (u - 2pi) weight into sawtooth and mean parts
                    let mut saw = DVector::zeros(n);
                    let mut mean = DVector::zeros(n);
                    for (k, w) in weights.iter().enumerate() {
                        let u = h * k as f64;
                        let moved = ad_flow(&alg, &axis, u, &x)
                            .unwrap_or_else(|_| DVector::from_element(n, f64::NAN));
                        saw += &moved * *w;
                        mean += moved * (h / (2.0 * PI));
                    }
                    out.set_column(i, &(saw / (2.0 * PI) - mean * PI));
                }
                out
            })
        }
        GroupKind::So3Group => {
            if family.dim_g() != 3 {
                return Err(Error::InvalidAction("SO(3) averaging needs three basis sections".into()));
            }
            let sections = family.sections.clone();
            let c0 = c0.clone();
            let quad = *quad;
            let (tn, tw) = gauss_legendre_nodes(quad.so3_t, 0.0, 1.0);
            Arc::new(move |q: &DVector<f64>| {
                let alg = c0.lambda_at(q);
                let ball = BallRule::new(&quad);
                let svals: Vec<DVector<f64>> = sections.iter().map(|s| s.at(q)).collect();
                let mut out = DMatrix::zeros(n, m);
                for i in 0..m {
                    let xs: Vec<DVector<f64>> = sections
                        .iter()
                        .map(|s| c0.nabla_star(q, i, &s.at(q), &s.d_at(q, i)))
                        .collect();
                    let col = ball.integrate_vec(n, |a: &DVector<f64>| {
                        let s_a = &svals[0] * a[0] + &svals[1] * a[1] + &svals[2] * a[2];
                        let x_a = &xs[0] * a[0] + &xs[1] * a[1] + &xs[2] * a[2];
                        let mut acc = DVector::zeros(n);
                        for (&t, &wt) in tn.iter().zip(tw.iter()) {
                            match ad_flow(&alg, &(&s_a * t), 1.0, &x_a) {
                                Ok(v) => acc += v * wt,
                                Err(_) => return DVector::from_element(n, f64::NAN),
                            }
                        }
                        acc
                    });
                    out.set_column(i, &(-col));
                }
                out
            })
        }
        GroupKind::Torus(_) => {
            return Err(Error::InvalidAction(
                "torus averaging of connections is not supported; average per circle factor".into(),
            ))
        }
    };
    let base_pot = Arc::new({
        let c0 = c0.clone();
        move |q: &DVector<f64>| c0.potential_at(q).expect("checked above")
    });
    let total_pot = {
        let avg = avg.clone();
        let base = base_pot.clone();
        move |q: &DVector<f64>| base(q) + avg(q)
    };
    let curvature = {
        let c0 = c0.clone();
        let avg = avg.clone();
        let scheme = DiffScheme::default();
        move |q: &DVector<f64>, i: usize, j: usize| -> DVector<f64> {
            let alg = c0.lambda_at(q);
            let a = avg(q);
            let ai = a.column(i).into_owned();
            let aj = a.column(j).into_owned();
            let d = |k: usize, col: usize| -> DVector<f64> {
                let h = scheme.step_at(q[k]);
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[k] += h;
                qm[k] -= h;
                (avg(&qp).column(col) - avg(&qm).column(col)) / (2.0 * h)
            };
            // F0 + nabla0* A (exterior part) + [A_i, A_j]
            c0.curvature_at(q, i, j)
                + c0.nabla_star(q, i, &aj, &d(i, j))
                - c0.nabla_star(q, j, &ai, &d(j, i))
                + alg.bracket(&ai, &aj).expect("dimensions fixed")
        }
    };
    let lambda = c0.lambda.clone();
    Ok(ConnectionPair::from_potential(
        m,
        n,
        move |q| lambda(q),
        total_pot,
        curvature,
    ))
}

/// Wong's equations for a chart pair: geodesic force from the metric, the
/// Lorentz-type force from `F`, and parallel transport of `y` along the
/// trajectory. Reduces to the trivial-chart Wong system when `lambda` is
/// constant and `F = dA + 1/2 [A ^ A]`.
pub fn generalized_wong_rhs(c: &ConnectionPair, g: &Metric) -> RhsFn {
    let c = c.clone();
    let g = g.clone();
    Arc::new(move |_t, x: &Phase| {
        let m = c.m;
        let ginv = g.inverse_at(&x.q)?;
        let v = &ginv * &x.p;
        // each F_ij can be expensive (quadrature-backed); evaluate the
        // independent pairs once and use antisymmetry
        let mut f_pairs = vec![vec![None::<DVector<f64>>; m]; m];
        for i in 0..m {
            for j in (i + 1)..m {
                f_pairs[i][j] = Some(c.curvature_at(&x.q, i, j));
            }
        }
        let mut pdot = DVector::zeros(m);
        for i in 0..m {
            let dginv = g.dinverse_dq(&x.q, i)?;
            let mut fiber_force = 0.0;
            for j in 0..m {
                let contraction = match i.cmp(&j) {
                    std::cmp::Ordering::Less => x.y.dot(f_pairs[i][j].as_ref().unwrap()),
                    std::cmp::Ordering::Greater => -x.y.dot(f_pairs[j][i].as_ref().unwrap()),
                    std::cmp::Ordering::Equal => 0.0,
                };
                fiber_force += contraction * v[j];
            }
            pdot[i] = -0.5 * x.p.dot(&(dginv * &x.p)) - fiber_force;
        }
        let mut ydot = DVector::zeros(c.n);
        for i in 0..m {
            ydot -= c.gamma_at(&x.q, i) * &x.y * v[i];
        }
        let out = Phase::new(pdot, v, ydot);
        if !out.is_finite() {
            return Err(Error::NonFinite { at: "generalized wong rhs".into() });
        }
        Ok(out)
    })
}

fn sample_qs(m: usize, count: usize) -> Vec<DVector<f64>> {
    let mut rng = SplitMix64::new(0x5EED_CAFE);
    (0..count)
        .map(|_| DVector::from_fn(m, |_, _| rng.uniform(0.6, 1.6)))
        .collect()
}
