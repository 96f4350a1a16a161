//! Scenario configs: JSON descriptions of a fibered phase space, a gauge
//! source, a Hamiltonian and the requested verification or simulation, plus
//! the builder that turns a config into live structures.
//!
//! Unknown fields are rejected on load, so a config that deserializes is
//! structurally schema-valid; dimensional consistency and expression
//! validity are checked by [`build`].

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::averaging::{
    general_average_gauge_form, so3_section_closed_form, AveragedGaugeForm, FiberwiseAction,
    GroupKind, QuadSpec, SectionField,
};
use crate::bundle::{averaged_connection, ConnectionPair, SectionFamily};
use crate::dynamics::{
    hamiltonian_rhs, kinetic_hamiltonian, radial_guard, DomainGuard, HamiltonianFunction, Metric,
    RhsFn,
};
use crate::expr::{self, EvalContext, Expression};
use crate::field::Field;
use crate::gauge::{GaugeForm, GaugePoissonStructure, LinearGaugePotential};
use crate::lie_poisson::{LieAlgebraStructure, PoissonFiber};
use crate::phase::{Phase, PhaseFunction};
use crate::{Error, Result};

/// Top-level scenario description.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Base dimension, `dim Q`.
    pub m: usize,
    pub fiber: FiberSpec,
    #[serde(default)]
    pub metric: MetricSpec,
    pub gauge: GaugeSpec,
    #[serde(default)]
    pub hamiltonian: HamiltonianSpec,
    #[serde(default)]
    pub chart: Option<ChartSpec>,
    #[serde(default)]
    pub simulation: Option<SimulationSpec>,
    #[serde(default)]
    pub verification: Option<VerificationSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FiberSpec {
    /// The cyclic so(3)* fiber with `|y|^2` registered as a Casimir.
    So3,
    Abelian { n: usize },
    /// Direct sum of `copies` so(3) blocks, one quadratic Casimir per block.
    So3Product { copies: usize },
    /// Explicit structure constants, row-major `lambda[a][b][g]`, length n^3.
    Custom { n: usize, lambda: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricSpec {
    #[default]
    Identity,
    /// Diagonal entries as expressions in `q1..qm`.
    Diagonal { entries: Vec<String> },
    /// Full symmetric matrix, row-major expressions in `q1..qm`.
    Full { entries: Vec<Vec<String>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GaugeSpec {
    /// The monopole-type builtin on `R^3 \ {0}` with its generating circle
    /// action. `strength_factor` rescales the `{p,p}` block; anything other
    /// than 1 is a deliberate negative control.
    WuYang {
        #[serde(default = "one")]
        strength_factor: f64,
    },
    Zero,
    /// Explicit linear potential: `coeffs[a][i]` is an expression in `q`
    /// for the component `A^a_i`, shape n rows by m columns.
    Linear { coeffs: Vec<Vec<String>> },
    /// Gauge form reconstructed by averaging momentum maps over a compact
    /// group of fiberwise Poisson maps.
    Averaged {
        group: GroupName,
        /// One section per circle factor, each a vector of n expressions
        /// in `q`. Empty for the full rotation group.
        #[serde(default)]
        sections: Vec<Vec<String>>,
        /// Momentum map components as expressions in `q` and `y`; required
        /// for the full rotation group, ignored for section actions.
        #[serde(default)]
        moments: Option<Vec<String>>,
        #[serde(default)]
        nodes: Option<usize>,
        #[serde(default = "yes")]
        normalize: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupName {
    Circle,
    Torus,
    So3,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HamiltonianSpec {
    /// `H = (1/2) g^{ij}(q) p_i p_j` from the configured metric.
    #[default]
    Kinetic,
    /// Arbitrary expression in `q`, `p`, `y`.
    Expression { expr: String },
}

/// Local-chart connection pair on the associated Lie-Poisson bundle.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    /// Sections as vectors of n expressions in `q`.
    pub sections: Vec<Vec<String>>,
    /// Replace the flat pair by the averaged connection it generates.
    #[serde(default)]
    pub averaged: bool,
    #[serde(default)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub t_end: f64,
    pub step: f64,
    pub initial: InitialState,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationSpec {
    pub checks: Vec<String>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_samples() -> usize {
    10
}

fn default_seed() -> u64 {
    42
}

/// Names shipped with the binary, stable identifiers.
pub const BUILTIN_NAMES: [&str; 8] = [
    "wu-yang",
    "constant-section",
    "torus-product",
    "so3-group-average",
    "flat-chart",
    "averaged-chart",
    "free-particle",
    "broken-sign",
];

/// Raw JSON of a builtin scenario.
pub fn builtin(name: &str) -> Option<&'static str> {
    match name {
        "wu-yang" => Some(include_str!("../../../scenarios/wu-yang.json")),
        "constant-section" => Some(include_str!("../../../scenarios/constant-section.json")),
        "torus-product" => Some(include_str!("../../../scenarios/torus-product.json")),
        "so3-group-average" => Some(include_str!("../../../scenarios/so3-group-average.json")),
        "flat-chart" => Some(include_str!("../../../scenarios/flat-chart.json")),
        "averaged-chart" => Some(include_str!("../../../scenarios/averaged-chart.json")),
        "free-particle" => Some(include_str!("../../../scenarios/free-particle.json")),
        "broken-sign" => Some(include_str!("../../../scenarios/broken-sign.json")),
        _ => None,
    }
}

/// Parse a config, rejecting unknown fields.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("bad scenario config: {e}")))
}

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_expr(src: &str, m: usize, n: usize, what: &str) -> Result<Expression> {
    expr::parse(src, m, n).map_err(|e| cfg(format!("{what}: {e} in '{src}'")))
}

/// Scalar field `(q, y) -> R` backed by an expression.
fn expr_field(src: &str, m: usize, n: usize, what: &str) -> Result<Field> {
    let e = parse_expr(src, m, n, what)?;
    Ok(Field::new(move |q: &DVector<f64>, y: &DVector<f64>| {
        expr::evaluate(&e, &EvalContext::from_qy(q, y)).unwrap_or(f64::NAN)
    }))
}

/// Vector of q-only expressions as a section of the trivial fiber bundle.
fn expr_section(comps: &[String], m: usize, n: usize, what: &str) -> Result<SectionField> {
    if comps.len() != n {
        return Err(cfg(format!("{what}: expected {n} components, got {}", comps.len())));
    }
    let exprs: Vec<Expression> = comps
        .iter()
        .map(|c| parse_expr(c, m, n, what))
        .collect::<Result<_>>()?;
    Ok(SectionField::new(m, n, move |q: &DVector<f64>| {
        let y = DVector::zeros(0);
        DVector::from_iterator(
            exprs.len(),
            exprs.iter().map(|e| expr::evaluate(e, &EvalContext::from_qy(q, &y)).unwrap_or(f64::NAN)),
        )
    }))
}

fn build_fiber(spec: &FiberSpec) -> Result<PoissonFiber> {
    match spec {
        FiberSpec::So3 => Ok(PoissonFiber::so3()),
        FiberSpec::Abelian { n } => {
            if *n == 0 {
                return Err(cfg("abelian fiber needs n >= 1"));
            }
            Ok(PoissonFiber::abelian(*n))
        }
        FiberSpec::So3Product { copies } => {
            if *copies == 0 {
                return Err(cfg("so3-product needs at least one copy"));
            }
            let so3 = LieAlgebraStructure::so3();
            let mut alg = so3.clone();
            for _ in 1..*copies {
                alg = alg.direct_sum(&so3);
            }
            let mut fiber = PoissonFiber::lie_poisson(alg);
            for b in 0..*copies {
                let off = 3 * b;
                fiber.register_casimir(
                    format!("|y_{}|^2", b + 1),
                    Field::new(move |_q: &DVector<f64>, y: &DVector<f64>| {
                        y[off] * y[off] + y[off + 1] * y[off + 1] + y[off + 2] * y[off + 2]
                    }),
                );
            }
            Ok(fiber)
        }
        FiberSpec::Custom { n, lambda } => {
            let alg = LieAlgebraStructure::new(*n, lambda.clone())
                .map_err(|e| cfg(format!("custom fiber: {e}")))?;
            let rep = alg.check();
            if !rep.pass {
                return Err(cfg(format!(
                    "custom structure constants fail the algebra axioms \
                     (antisymmetry {:.2e}, closure {:.2e})",
                    rep.max_antisymmetry_violation, rep.max_jacobi_residual
                )));
            }
            Ok(PoissonFiber::lie_poisson(alg))
        }
    }
}

fn build_metric(spec: &MetricSpec, m: usize, n: usize) -> Result<Metric> {
    match spec {
        MetricSpec::Identity => Ok(Metric::euclidean(m)),
        MetricSpec::Diagonal { entries } => {
            if entries.len() != m {
                return Err(cfg(format!("diagonal metric needs {m} entries")));
            }
            let exprs: Vec<Expression> = entries
                .iter()
                .map(|s| parse_expr(s, m, n, "metric entry"))
                .collect::<Result<_>>()?;
            Ok(Metric::new(
                m,
                move |q: &DVector<f64>| {
                    DMatrix::from_fn(exprs.len(), exprs.len(), |i, j| {
                        if i == j {
                            expr::evaluate(&exprs[i], &EvalContext::from_qy(q, &DVector::zeros(0)))
                                .unwrap_or(f64::NAN)
                        } else {
                            0.0
                        }
                    })
                },
                false,
            ))
        }
        MetricSpec::Full { entries } => {
            if entries.len() != m || entries.iter().any(|r| r.len() != m) {
                return Err(cfg(format!("full metric needs an {m} x {m} expression matrix")));
            }
            let exprs: Vec<Vec<Expression>> = entries
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|s| parse_expr(s, m, n, "metric entry"))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            Ok(Metric::new(
                m,
                move |q: &DVector<f64>| {
                    let ctx = EvalContext::from_qy(q, &DVector::zeros(0));
                    DMatrix::from_fn(exprs.len(), exprs.len(), |i, j| {
                        expr::evaluate(&exprs[i][j], &ctx).unwrap_or(f64::NAN)
                    })
                },
                false,
            ))
        }
    }
}

/// A scenario with all structures built and cross-validated.
pub struct BuiltScenario {
    pub config: ScenarioConfig,
    pub m: usize,
    pub n: usize,
    pub fiber: PoissonFiber,
    pub metric: Metric,
    pub structure: GaugePoissonStructure,
    /// The compact group action behind the gauge source, when there is one.
    pub action: Option<FiberwiseAction>,
    pub averaged: Option<AveragedGaugeForm>,
    /// Closed-form comparison target for averaged circle gauges on so(3)*.
    pub closed_form: Option<GaugeForm>,
    pub hamiltonian: HamiltonianFunction,
    pub guard: Option<DomainGuard>,
    pub chart: Option<BuiltChart>,
    pub quad: QuadSpec,
}

impl std::fmt::Debug for BuiltScenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltScenario")
            .field("name", &self.config.name)
            .field("m", &self.m)
            .field("n", &self.n)
            .finish()
    }
}

pub struct BuiltChart {
    pub base: ConnectionPair,
    pub family: SectionFamily,
    /// The pair the checks run against: averaged when requested, else base.
    pub pair: ConnectionPair,
    pub averaged: bool,
}

impl BuiltScenario {
    /// Right-hand side used by `simulate`: chart dynamics when an averaged
    /// chart is configured, the assembled Hamiltonian field otherwise.
    pub fn rhs(&self) -> RhsFn {
        match &self.chart {
            Some(chart) if chart.averaged => {
                crate::bundle::generalized_wong_rhs(&chart.pair, &self.metric)
            }
            _ => hamiltonian_rhs(&self.structure, &self.hamiltonian),
        }
    }

    /// Conserved candidates to monitor: H, registered fiber Casimirs, and
    /// the momentum components of the configured action.
    pub fn monitored(&self) -> Vec<PhaseFunction> {
        let mut fns = vec![self.hamiltonian.clone()];
        for c in &self.fiber.casimirs {
            fns.push(PhaseFunction::from_qy(c.name.clone(), c.field.clone(), self.m, self.n));
        }
        if let Some(action) = &self.action {
            for (a, j) in action.moments().iter().enumerate() {
                fns.push(PhaseFunction::from_qy(format!("J{}", a + 1), j.clone(), self.m, self.n));
            }
        } else if let Some(chart) = &self.chart {
            for (a, s) in chart.family.sections.iter().enumerate() {
                fns.push(PhaseFunction::from_qy(format!("J{}", a + 1), s.moment(), self.m, self.n));
            }
        }
        fns
    }

    pub fn initial_state(&self) -> Result<Phase> {
        let sim = self
            .config
            .simulation
            .as_ref()
            .ok_or_else(|| cfg("scenario has no simulation block"))?;
        Ok(Phase::from_slices(&sim.initial.p, &sim.initial.q, &sim.initial.y))
    }
}

fn quad_for(group: GroupName, nodes: Option<usize>) -> QuadSpec {
    let mut quad = QuadSpec::default();
    if let Some(k) = nodes {
        match group {
            GroupName::Circle => quad.circle_nodes = k,
            GroupName::Torus => {
                quad.torus_a_nodes = k;
                quad.torus_t_nodes = k;
            }
            GroupName::So3 => {
                quad.so3_radial = k;
                quad.so3_azimuth = k;
                quad.so3_polar = k;
                quad.so3_t = k;
            }
        }
    }
    quad
}

/// Build all structures described by a config. Dimension mismatches and
/// parse failures surface as config errors.
pub fn build(config: ScenarioConfig) -> Result<BuiltScenario> {
    let m = config.m;
    if m == 0 {
        return Err(cfg("base dimension m must be positive"));
    }
    let fiber = build_fiber(&config.fiber)?;
    let n = fiber.n;
    let metric = build_metric(&config.metric, m, n)?;

    let mut action = None;
    let mut averaged = None;
    let mut closed_form = None;
    let mut guard: Option<DomainGuard> = None;
    let mut quad = QuadSpec::default();
    let mut strength_scale = 1.0;

    let form: GaugeForm = match &config.gauge {
        GaugeSpec::WuYang { strength_factor } => {
            if m != 3 || n != 3 || fiber.algebra.as_ref().map(|a| a.is_so3()) != Some(true) {
                return Err(cfg("the wu-yang gauge needs m = 3 and the so(3) fiber"));
            }
            strength_scale = *strength_factor;
            guard = Some(radial_guard(1e-3));
            action = Some(FiberwiseAction::section_circle(&SectionField::radial(), &fiber)?);
            GaugeForm::wu_yang()
        }
        GaugeSpec::Zero => GaugeForm::zero(m, n),
        GaugeSpec::Linear { coeffs } => {
            if coeffs.len() != n || coeffs.iter().any(|r| r.len() != m) {
                return Err(cfg(format!("linear gauge needs an {n} x {m} coefficient matrix")));
            }
            let exprs: Vec<Vec<Expression>> = coeffs
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|s| parse_expr(s, m, n, "gauge coefficient"))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            let pot = LinearGaugePotential::new(m, n, move |q: &DVector<f64>| {
                let ctx = EvalContext::from_qy(q, &DVector::zeros(0));
                DMatrix::from_fn(exprs.len(), exprs[0].len(), |a, i| {
                    expr::evaluate(&exprs[a][i], &ctx).unwrap_or(f64::NAN)
                })
            });
            pot.contract()
        }
        GaugeSpec::Averaged { group, sections, moments, nodes, normalize } => {
            quad = quad_for(*group, *nodes);
            let act = match group {
                GroupName::Circle => {
                    if sections.len() != 1 {
                        return Err(cfg("circle averaging needs exactly one section"));
                    }
                    let s = expr_section(&sections[0], m, n, "section component")?;
                    FiberwiseAction::section_circle(&s, &fiber)?
                }
                GroupName::Torus => {
                    if sections.is_empty() {
                        return Err(cfg("torus averaging needs at least one section"));
                    }
                    let circles = sections
                        .iter()
                        .map(|c| {
                            let s = expr_section(c, m, n, "section component")?;
                            FiberwiseAction::section_circle(&s, &fiber)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    FiberwiseAction::torus_from_circles(circles)?
                }
                GroupName::So3 => {
                    if !sections.is_empty() {
                        return Err(cfg("the rotation group action takes moments, not sections"));
                    }
                    match moments {
                        Some(exprs) => {
                            if exprs.len() != 3 {
                                return Err(cfg("the rotation group needs 3 momentum components"));
                            }
                            let fields = exprs
                                .iter()
                                .map(|s| expr_field(s, m, n, "momentum component"))
                                .collect::<Result<Vec<_>>>()?;
                            FiberwiseAction::so3_group_with_moments(&fiber, m, fields)?
                        }
                        None => FiberwiseAction::so3_group(&fiber, m)?,
                    }
                }
            };
            let avg = general_average_gauge_form(&act, *normalize, &quad)?;
            if matches!(avg.kind, GroupKind::So3Rotations) && sections.len() == 1 {
                let s = expr_section(&sections[0], m, n, "section component")?;
                closed_form = Some(so3_section_closed_form(&s)?);
            }
            let form = avg.form.clone();
            action = Some(act);
            averaged = Some(avg);
            form
        }
    };

    let mut structure = GaugePoissonStructure::new(fiber.clone(), form)?;
    if strength_scale != 1.0 {
        structure = structure.with_scaled_strength(strength_scale);
    }

    let hamiltonian = match &config.hamiltonian {
        HamiltonianSpec::Kinetic => kinetic_hamiltonian(&metric),
        HamiltonianSpec::Expression { expr: src } => {
            let e = parse_expr(src, m, n, "hamiltonian")?;
            PhaseFunction::new("H", move |x: &Phase| {
                expr::evaluate(&e, &EvalContext::new(x.q.clone(), x.p.clone(), x.y.clone(), 0.0))
                    .unwrap_or(f64::NAN)
            })
        }
    };

    let chart = match &config.chart {
        None => None,
        Some(spec) => {
            let alg = fiber
                .algebra
                .clone()
                .ok_or_else(|| cfg("chart connections need a Lie-Poisson fiber"))?;
            let sections = spec
                .sections
                .iter()
                .map(|c| expr_section(c, m, n, "chart section"))
                .collect::<Result<Vec<_>>>()?;
            let family = SectionFamily::new(sections).map_err(|e| cfg(e.to_string()))?;
            let base = ConnectionPair::flat(m, &alg);
            let pair = if spec.averaged {
                let cq = quad_for(GroupName::Circle, spec.nodes);
                averaged_connection(&base, &family, GroupKind::Circle, &cq)?
            } else {
                base.clone()
            };
            Some(BuiltChart { base, family, pair, averaged: spec.averaged })
        }
    };

    if let Some(sim) = &config.simulation {
        if sim.initial.p.len() != m || sim.initial.q.len() != m || sim.initial.y.len() != n {
            return Err(cfg(format!(
                "initial state must have p, q of length {m} and y of length {n}"
            )));
        }
        if !(sim.step > 0.0) || !(sim.t_end > 0.0) {
            return Err(cfg("simulation needs positive t_end and step"));
        }
    }
    if let Some(v) = &config.verification {
        if v.checks.is_empty() {
            return Err(cfg("verification block lists no checks"));
        }
        for c in &v.checks {
            if !KNOWN_CHECKS.contains(&c.as_str()) {
                return Err(cfg(format!(
                    "unknown check '{c}'; known: {}",
                    KNOWN_CHECKS.join(", ")
                )));
            }
        }
    }

    Ok(BuiltScenario {
        m,
        n,
        fiber,
        metric,
        structure,
        action,
        averaged,
        closed_form,
        hamiltonian,
        guard,
        chart,
        quad,
        config,
    })
}

/// Check names accepted in a verification block.
pub const KNOWN_CHECKS: [&str; 9] =
    ["jacobi", "rank", "invariance", "ac", "ic1", "first-integrals", "haar", "lpvh", "ico"];
