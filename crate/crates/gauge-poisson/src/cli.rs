//! Command line front end: `verify`, `average`, `simulate`, `scenarios`.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 config error,
//! 3 runtime or domain error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use crate::averaging::{check_ac, check_ic1, check_invariance, first_integral_check, haar_average, GroupKind};
use crate::bundle::{check_ico, check_lpvh1, check_lpvh2, check_lpvh3};
use crate::dynamics::{integrate, monitor, ConservationReport, Trajectory};
use crate::field::Field;
use crate::numerics::{matrix_rank, DEFAULT_RANK_TOL};
use crate::phase::{Coord, Phase, PhaseFunction};
use crate::report::{sha256_hex, CheckOutcome, RunReport};
use crate::rng::SplitMix64;
use crate::scenario::{self, BuiltScenario};
use crate::{Error, Result};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILURE: i32 = 1;
pub const EXIT_CONFIG_ERROR: i32 = 2;
pub const EXIT_RUNTIME_ERROR: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "gauge-poisson",
    version,
    about = "Gauge Poisson structures on fibered phase spaces: verification, averaging, simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the structural checks requested by the scenario config.
    Verify(RunArgs),
    /// Tabulate the averaged gauge form on a base grid.
    Average(RunArgs),
    /// Integrate the scenario dynamics and monitor conservation.
    Simulate(RunArgs),
    /// List the builtin scenarios.
    Scenarios,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario config: a JSON file path or a builtin scenario name.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; stdout when omitted (simulate also writes a JSON
    /// conservation report next to the CSV).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed; overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Base grid as start:stop:count, either once for every axis or
    /// comma-separated per axis (average only).
    #[arg(long)]
    pub grid: Option<String>,
    /// Fan independent checks out over this many threads (verify only).
    #[arg(long)]
    pub parallel: Option<usize>,
}

/// Map an error to the exit-code contract.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Expr(_)
        | Error::Invalid(_)
        | Error::InvalidAction(_)
        | Error::Dimension(_)
        | Error::Io(_) => EXIT_CONFIG_ERROR,
        Error::Domain(_) | Error::DomainExit { .. } | Error::Integration { .. } | Error::NonFinite { .. } => {
            EXIT_RUNTIME_ERROR
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Verify(args) => cmd_verify(&args),
        Command::Average(args) => cmd_average(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Scenarios => cmd_scenarios(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

/// Raw config bytes: from the file if it exists, else from the builtin
/// catalog when the argument is a known scenario name.
fn load_config_bytes(path: &Path) -> Result<Vec<u8>> {
    if path.exists() {
        return Ok(std::fs::read(path)?);
    }
    if let Some(name) = path.to_str() {
        let bare = name.strip_suffix(".json").unwrap_or(name);
        if let Some(text) = scenario::builtin(bare) {
            return Ok(text.as_bytes().to_vec());
        }
    }
    Err(Error::Config(format!("config '{}' is neither a file nor a builtin scenario", path.display())))
}

struct Loaded {
    bytes: Vec<u8>,
    built: BuiltScenario,
}

fn load(args: &RunArgs) -> Result<Loaded> {
    let bytes = load_config_bytes(&args.config)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| Error::Config("config is not valid UTF-8".into()))?;
    let config = scenario::parse_config(text)?;
    let built = scenario::build(config)?;
    Ok(Loaded { bytes, built })
}

fn effective_seed(args: &RunArgs, built: &BuiltScenario) -> u64 {
    args.seed
        .or_else(|| built.config.verification.as_ref().map(|v| v.seed))
        .unwrap_or(42)
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------- verify

fn sample_phases(built: &BuiltScenario, count: usize, seed: u64) -> Vec<Phase> {
    let mut rng = SplitMix64::new(seed);
    (0..count)
        .map(|_| {
            Phase::new(
                DVector::from_fn(built.m, |_, _| rng.uniform(-1.0, 1.0)),
                DVector::from_fn(built.m, |_, _| rng.uniform(0.6, 1.6)),
                DVector::from_fn(built.n, |_, _| rng.uniform(-1.0, 1.0)),
            )
        })
        .collect()
}

fn sample_qy(built: &BuiltScenario, count: usize, seed: u64) -> Vec<(DVector<f64>, DVector<f64>)> {
    sample_phases(built, count, seed).into_iter().map(|x| (x.q, x.y)).collect()
}

fn sample_q(built: &BuiltScenario, count: usize, seed: u64) -> Vec<DVector<f64>> {
    sample_phases(built, count, seed).into_iter().map(|x| x.q).collect()
}

fn need_action<'a>(built: &'a BuiltScenario, check: &str) -> Result<&'a crate::averaging::FiberwiseAction> {
    built.action.as_ref().ok_or_else(|| {
        Error::Config(format!("check '{check}' needs a gauge source with a group action"))
    })
}

fn check_jacobi(built: &BuiltScenario, samples: usize, seed: u64) -> Result<CheckOutcome> {
    let dim = 2 * built.m + built.n;
    let coords: Vec<PhaseFunction> = (0..built.m)
        .map(|i| Coord::P(i))
        .chain((0..built.m).map(Coord::Q))
        .chain((0..built.n).map(Coord::Y))
        .map(|c| PhaseFunction::coord(c, built.m, built.n))
        .collect();
    let points = sample_phases(built, samples, seed);
    let tol = 1e-6;
    let mut max = 0.0f64;
    for a in 0..dim {
        for b in (a + 1)..dim {
            for c in (b + 1)..dim {
                for x in &points {
                    let r = built.structure.jacobiator(&coords[a], &coords[b], &coords[c], x)?;
                    max = max.max(r.abs());
                }
            }
        }
    }
    Ok(CheckOutcome::new("jacobi", max <= tol, max, tol))
}

fn check_rank(built: &BuiltScenario, samples: usize, seed: u64) -> Result<CheckOutcome> {
    let points = sample_phases(built, samples, seed);
    let mut max_dev = 0usize;
    let mut detail = Vec::new();
    let mut probe = |x: &Phase| -> Result<()> {
        let got = built.structure.rank_at(x)?;
        let psi_rank = matrix_rank(&built.fiber.psi(&x.q, &x.y), DEFAULT_RANK_TOL)?;
        let expected = 2 * built.m + psi_rank;
        max_dev = max_dev.max(expected.abs_diff(got));
        detail.push((expected, got));
        Ok(())
    };
    for x in &points {
        probe(x)?;
    }
    // the degenerate leaf y = 0 must drop to rank 2m for linear fibers
    if let Some(first) = points.first() {
        let mut x = first.clone();
        x.y = DVector::zeros(built.n);
        probe(&x)?;
    }
    let pass = max_dev == 0;
    Ok(CheckOutcome::new("rank", pass, max_dev as f64, 0.0).with_detail(&detail))
}

fn check_invariance_cmd(built: &BuiltScenario, samples: usize, seed: u64) -> Result<CheckOutcome> {
    let action = need_action(built, "invariance")?;
    let report = check_invariance(&built.structure, action, samples, seed, 1e-8, &built.quad)?;
    let max = report.pushforward.max_residual.max(report.curvature.max_residual);
    Ok(CheckOutcome::new("invariance", report.pass, max, 1e-8).with_detail(&report))
}

fn check_ac_cmd(built: &BuiltScenario, samples: usize, seed: u64) -> Result<CheckOutcome> {
    let action = need_action(built, "ac")?;
    // section and torus averages use spectrally accurate periodic rules;
    // the ball rule for the full rotation group is a little coarser
    let tol = match action.kind {
        GroupKind::So3Group => 1e-6,
        _ => 1e-8,
    };
    let verdict = check_ac(action, &built.quad, &sample_qy(built, samples, seed), tol)?;
    Ok(CheckOutcome::new("ac", verdict.pass, verdict.max_residual, tol).with_detail(&verdict))
}

fn check_ic1_cmd(built: &BuiltScenario, samples: usize, seed: u64) -> Result<CheckOutcome> {
    let action = need_action(built, "ic1")?;
    let report = check_ic1(
        &built.structure.gauge,
        action.moments(),
        &built.fiber,
        &sample_qy(built, samples, seed),
        1e-6,
    )?;
    let max = report.casimir.max_residual.max(report.commutator.max_residual);
    Ok(CheckOutcome::new("ic1", report.pass, max, 1e-6).with_detail(&report))
}

fn check_first_integrals(built: &BuiltScenario, samples: usize, seed: u64) -> Result<CheckOutcome> {
    let action = need_action(built, "first-integrals")?;
    let sim = built
        .config
        .simulation
        .as_ref()
        .ok_or_else(|| Error::Config("check 'first-integrals' needs a simulation block".into()))?;
    let traj = integrate(
        &built.rhs(),
        &built.initial_state()?,
        sim.t_end,
        sim.step,
        built.guard.as_ref(),
    )?;
    let report = first_integral_check(
        &built.structure,
        &built.hamiltonian,
        action,
        &traj,
        &sample_phases(built, samples, seed),
        seed,
        1e-8,
        1e-8,
    )?;
    let max = report
        .h_invariance
        .max_residual
        .max(report.bracket.max_residual)
        .max(report.drift.max_residual);
    Ok(CheckOutcome::new("first-integrals", report.pass, max, 1e-8).with_detail(&report))
}

fn check_haar(built: &BuiltScenario, samples: usize, seed: u64) -> Result<CheckOutcome> {
    let action = need_action(built, "haar")?;
    let avg = haar_average(action, &Field::constant(1.0), &built.quad)?;
    let mut max = 0.0f64;
    for (q, y) in sample_qy(built, samples, seed) {
        max = max.max((avg.eval(&q, &y) - 1.0).abs());
    }
    Ok(CheckOutcome::new("haar", max <= 1e-6, max, 1e-6))
}

fn check_lpvh(built: &BuiltScenario, samples: usize, seed: u64) -> Result<CheckOutcome> {
    let chart = built
        .chart
        .as_ref()
        .ok_or_else(|| Error::Config("check 'lpvh' needs a chart block".into()))?;
    let qs = sample_q(built, samples, seed);
    let v1 = check_lpvh1(&chart.pair, &qs)?;
    let v2 = check_lpvh2(&chart.pair, &qs)?;
    let v3 = check_lpvh3(&chart.pair, &qs)?;
    let max = v1.max_residual.max(v2.max_residual).max(v3.max_residual);
    let pass = v1.pass && v2.pass && v3.pass;
    Ok(CheckOutcome::new("lpvh", pass, max, v1.tol).with_detail(&vec![v1, v2, v3]))
}

fn check_ico_cmd(built: &BuiltScenario, samples: usize, seed: u64) -> Result<CheckOutcome> {
    let chart = built
        .chart
        .as_ref()
        .ok_or_else(|| Error::Config("check 'ico' needs a chart block".into()))?;
    let report = check_ico(&chart.pair, &chart.family, &sample_q(built, samples, seed))?;
    let max = report.ad_norm.max_residual;
    let tol = report.ad_norm.tol;
    Ok(CheckOutcome::new("ico", report.pass, max, tol).with_detail(&report))
}

fn run_check(built: &BuiltScenario, name: &str, samples: usize, seed: u64) -> Result<CheckOutcome> {
    match name {
        "jacobi" => check_jacobi(built, samples, seed),
        "rank" => check_rank(built, samples, seed),
        "invariance" => check_invariance_cmd(built, samples, seed),
        "ac" => check_ac_cmd(built, samples, seed),
        "ic1" => check_ic1_cmd(built, samples, seed),
        "first-integrals" => check_first_integrals(built, samples, seed),
        "haar" => check_haar(built, samples, seed),
        "lpvh" => check_lpvh(built, samples, seed),
        "ico" => check_ico_cmd(built, samples, seed),
        other => Err(Error::Config(format!("unknown check '{other}'"))),
    }
}

fn run_checks(
    built: &BuiltScenario,
    names: &[String],
    samples: usize,
    seed: u64,
    parallel: usize,
) -> Result<Vec<CheckOutcome>> {
    // per-check seeds depend only on the position in the list, so serial
    // and parallel runs produce identical reports
    let seeded: Vec<(usize, &str, u64)> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (i, n.as_str(), seed.wrapping_add(i as u64)))
        .collect();
    if parallel <= 1 || names.len() <= 1 {
        return seeded.iter().map(|(_, n, s)| run_check(built, n, samples, *s)).collect();
    }
    let threads = parallel.min(names.len());
    let mut slots: Vec<Option<Result<CheckOutcome>>> = (0..names.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for t in 0..threads {
            let seeded = &seeded;
            handles.push(scope.spawn(move || {
                seeded
                    .iter()
                    .filter(|(i, _, _)| i % threads == t)
                    .map(|(i, n, s)| (*i, run_check(built, n, samples, *s)))
                    .collect::<Vec<_>>()
            }));
        }
        for h in handles {
            for (i, r) in h.join().expect("check worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every check ran")).collect()
}

fn cmd_verify(args: &RunArgs) -> Result<i32> {
    let loaded = load(args)?;
    let built = &loaded.built;
    let verification = built
        .config
        .verification
        .as_ref()
        .ok_or_else(|| Error::Config("scenario has no verification block".into()))?
        .clone();
    let seed = effective_seed(args, built);
    let mut report = RunReport::new(built.config.name.clone(), &loaded.bytes, seed);
    if let Some(avg) = &built.averaged {
        report.quadrature_nodes = avg.node_counts.clone();
    }
    let outcomes = run_checks(
        built,
        &verification.checks,
        verification.samples,
        seed,
        args.parallel.unwrap_or(1),
    )?;
    for outcome in outcomes {
        report.push(outcome);
    }
    write_or_print(&args.out, &report.to_json())?;
    Ok(if report.all_pass { EXIT_PASS } else { EXIT_CHECK_FAILURE })
}

// ---------------------------------------------------------------- average

/// Per-axis grid values from a start:stop:count spec, one spec for all
/// axes or a comma-separated list with one spec per axis.
fn parse_grid(spec: &str, m: usize) -> Result<Vec<Vec<f64>>> {
    let parts: Vec<&str> = spec.split(',').collect();
    let axes: Vec<&str> = if parts.len() == 1 {
        vec![parts[0]; m]
    } else if parts.len() == m {
        parts
    } else {
        return Err(Error::Config(format!(
            "grid needs 1 or {m} axis specs, got {}",
            parts.len()
        )));
    };
    axes.iter()
        .map(|axis| {
            let f: Vec<&str> = axis.split(':').collect();
            if f.len() != 3 {
                return Err(Error::Config(format!("bad grid axis '{axis}', want start:stop:count")));
            }
            let a: f64 = f[0].parse().map_err(|_| Error::Config(format!("bad grid start '{}'", f[0])))?;
            let b: f64 = f[1].parse().map_err(|_| Error::Config(format!("bad grid stop '{}'", f[1])))?;
            let count: usize =
                f[2].parse().map_err(|_| Error::Config(format!("bad grid count '{}'", f[2])))?;
            if count == 0 {
                return Err(Error::Config("grid axis with zero points".into()));
            }
            if count == 1 {
                return Ok(vec![a]);
            }
            let h = (b - a) / (count - 1) as f64;
            Ok((0..count).map(|k| a + h * k as f64).collect())
        })
        .collect()
}

fn fmt_shortest(v: f64) -> String {
    if v == 0.0 {
        // normalize negative zero so grids are stable
        "0".to_string()
    } else {
        format!("{v}")
    }
}

fn cmd_average(args: &RunArgs) -> Result<i32> {
    let loaded = load(args)?;
    let built = &loaded.built;
    let averaged = built
        .averaged
        .as_ref()
        .ok_or_else(|| Error::Config("average needs a scenario with an averaged gauge source".into()))?;
    let grid = parse_grid(args.grid.as_deref().unwrap_or("0.6:1.6:3"), built.m)?;
    let y = match &built.config.simulation {
        Some(sim) => DVector::from_column_slice(&sim.initial.y),
        None => {
            let mut v = DVector::zeros(built.n);
            v[0] = 1.0;
            v
        }
    };

    let mut header: Vec<String> = (1..=built.m).map(|i| format!("q{i}")).collect();
    header.extend((1..=built.n).map(|a| format!("y{a}")));
    header.extend((1..=built.m).map(|i| format!("A{i}")));
    if built.closed_form.is_some() {
        header.extend((1..=built.m).map(|i| format!("A{i}_closed")));
        header.extend((1..=built.m).map(|i| format!("delta{i}")));
    }
    let mut csv = String::new();
    writeln!(csv, "{}", header.join(",")).expect("write to string");

    let total: usize = grid.iter().map(|axis| axis.len()).product();
    for flat in 0..total {
        // last axis fastest
        let mut rem = flat;
        let mut idx = vec![0usize; built.m];
        for axis in (0..built.m).rev() {
            idx[axis] = rem % grid[axis].len();
            rem /= grid[axis].len();
        }
        let q = DVector::from_fn(built.m, |i, _| grid[i][idx[i]]);
        let mut row: Vec<String> = q.iter().map(|v| fmt_shortest(*v)).collect();
        row.extend(y.iter().map(|v| fmt_shortest(*v)));
        let values: Vec<f64> = (0..built.m)
            .map(|i| averaged.form.eval(i, &q, &y))
            .collect::<Result<_>>()?;
        row.extend(values.iter().map(|v| fmt_shortest(*v)));
        if let Some(closed) = &built.closed_form {
            let reference: Vec<f64> =
                (0..built.m).map(|i| closed.eval(i, &q, &y)).collect::<Result<_>>()?;
            row.extend(reference.iter().map(|v| fmt_shortest(*v)));
            row.extend(values.iter().zip(&reference).map(|(a, b)| fmt_shortest((a - b).abs())));
        }
        writeln!(csv, "{}", row.join(",")).expect("write to string");
    }
    write_or_print(&args.out, &csv)?;
    Ok(EXIT_PASS)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Serialize)]
struct SimulationReport {
    scenario: String,
    config_sha256: String,
    seed: u64,
    crate_version: String,
    method: String,
    t_end: f64,
    step: f64,
    rows: usize,
    conservation: ConservationReport,
}

fn trajectory_csv(traj: &Trajectory, m: usize, n: usize) -> String {
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=m).map(|i| format!("p{i}")));
    header.extend((1..=m).map(|i| format!("q{i}")));
    header.extend((1..=n).map(|a| format!("y{a}")));
    let mut csv = String::with_capacity(traj.times.len() * 32);
    writeln!(csv, "{}", header.join(",")).expect("write to string");
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let mut row = Vec::with_capacity(1 + 2 * m + n);
        row.push(format!("{t:.16e}"));
        row.extend(x.p.iter().map(|v| format!("{v:.16e}")));
        row.extend(x.q.iter().map(|v| format!("{v:.16e}")));
        row.extend(x.y.iter().map(|v| format!("{v:.16e}")));
        writeln!(csv, "{}", row.join(",")).expect("write to string");
    }
    csv
}

fn cmd_simulate(args: &RunArgs) -> Result<i32> {
    let loaded = load(args)?;
    let built = &loaded.built;
    let sim = built
        .config
        .simulation
        .as_ref()
        .ok_or_else(|| Error::Config("scenario has no simulation block".into()))?;
    let seed = effective_seed(args, built);
    let traj = integrate(
        &built.rhs(),
        &built.initial_state()?,
        sim.t_end,
        sim.step,
        built.guard.as_ref(),
    )?;
    let conservation = monitor(&traj, &built.monitored());
    let report = SimulationReport {
        scenario: built.config.name.clone(),
        config_sha256: sha256_hex(&loaded.bytes),
        seed,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        method: traj.meta.method.clone(),
        t_end: sim.t_end,
        step: sim.step,
        rows: traj.times.len(),
        conservation,
    };
    let csv = trajectory_csv(&traj, built.m, built.n);
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv)?;
            std::fs::write(path.with_extension("json"), json)?;
        }
        None => {
            print!("{csv}");
            eprint!("{json}");
        }
    }
    Ok(EXIT_PASS)
}

// ---------------------------------------------------------------- scenarios

fn cmd_scenarios() -> Result<i32> {
    for name in scenario::BUILTIN_NAMES {
        let text = scenario::builtin(name).expect("builtin exists");
        let config = scenario::parse_config(text)?;
        println!("{name:<20}{}", config.description);
    }
    Ok(EXIT_PASS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_single_spec_applies_to_all_axes() {
        let g = parse_grid("0:1:3", 3).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g[0], vec![0.0, 0.5, 1.0]);
        assert_eq!(g[2], vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn grid_per_axis_specs() {
        let g = parse_grid("0:1:2,1:2:3,5:5:1", 3).unwrap();
        assert_eq!(g[0], vec![0.0, 1.0]);
        assert_eq!(g[1], vec![1.0, 1.5, 2.0]);
        assert_eq!(g[2], vec![5.0]);
    }

    #[test]
    fn grid_zero_points_is_config_error() {
        assert!(matches!(parse_grid("0:1:0", 3), Err(Error::Config(_))));
    }

    #[test]
    fn grid_wrong_axis_count_is_config_error() {
        assert!(matches!(parse_grid("0:1:2,0:1:2", 3), Err(Error::Config(_))));
    }

    #[test]
    fn exit_codes_partition_the_error_type() {
        assert_eq!(exit_code_for(&Error::Config("x".into())), EXIT_CONFIG_ERROR);
        assert_eq!(exit_code_for(&Error::Domain("x".into())), EXIT_RUNTIME_ERROR);
        assert_eq!(exit_code_for(&Error::DomainExit { t: 1.0 }), EXIT_RUNTIME_ERROR);
        assert_eq!(exit_code_for(&Error::Dimension("x".into())), EXIT_CONFIG_ERROR);
    }

    #[test]
    fn shortest_format_round_trips() {
        for v in [0.5, -1.25, 1.0 / 3.0, 1e-17, 123456.789] {
            assert_eq!(fmt_shortest(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_shortest(-0.0), "0");
    }
}
