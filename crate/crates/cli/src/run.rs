//! Subcommand drivers. Each returns reports, a summary fragment and a trace table.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use fracgame_core::dynamics::{self, Catalog, GameDynamics, Terminal};
use fracgame_core::fraccalc::{beta_identity_check, mittag_leffler};
use fracgame_core::game::{self, ControlSchedule, Mode, TreeValue};
use fracgame_core::library::{freeze_closure, sample_library};
use fracgame_core::report::digest_f64s;
use fracgame_core::testfunc::{self, MuFunctional};
use fracgame_core::viscosity::{self, Affine, DoublingReport, TestFunctional};
use fracgame_core::{vecops, CheckReport, Grade, PathFunctional, PathSpace, SampledPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::Scenario;
use crate::error::CliError;

pub struct Outcome {
    pub reports: Vec<CheckReport>,
    pub details: Value,
    pub trace_header: Vec<String>,
    pub trace: Vec<Vec<String>>,
}

/// Independent stream per task, so results do not depend on scheduling.
fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

const LIBRARY_STREAM: u64 = 0;

fn library(sc: &Scenario) -> Result<Vec<SampledPath>, CliError> {
    Ok(sample_library(
        &sc.space,
        sc.dynamics.dim(),
        sc.dynamics.c_star,
        &sc.config.library,
        &mut rng(sc.seed, LIBRARY_STREAM),
    )?)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn state_header(prefix: &[&str], dim: usize) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    h.extend((0..dim).map(|i| format!("x{i}")));
    h
}

fn path_rows(tag: &[String], x: &SampledPath) -> Vec<Vec<String>> {
    let nodes = x.grid().nodes();
    (0..=x.cells())
        .map(|i| {
            let mut row = tag.to_vec();
            row.push(fmt(nodes[i]));
            row.extend(x.node_state(i).iter().map(|&v| fmt(v)));
            row
        })
        .collect()
}

pub fn validate(sc: &Scenario) -> Result<Outcome, CliError> {
    let lib = library(sc)?;
    let dynamics = &sc.dynamics;
    let horizon = sc.config.horizon;
    let mut reports =
        dynamics::validate_assumptions(dynamics, &sc.config.samples, horizon, &lib, &mut rng(sc.seed, 1));
    reports.extend(dynamics::hamiltonian_properties(
        dynamics,
        &sc.config.samples,
        horizon,
        &mut rng(sc.seed, 2),
    ));
    let k = sc.config.library.k;
    for (i, x) in lib.iter().enumerate() {
        let m = x.xk_check(k, dynamics.c_star);
        reports.push(CheckReport::new(
            "library_in_xk",
            Grade::Assertion,
            m.worst_margin,
            0.0,
            1e-12,
            &[i as f64, k, dynamics.c_star],
        ));
    }
    let p = &sc.params;
    for gamma in [p.alpha, 1.0] {
        for t in [0.0, 0.5 * horizon] {
            reports.push(beta_identity_check(gamma, t, horizon, p.alpha, p.beta, p.q)?);
        }
    }
    let mut trace = Vec::new();
    for (i, x) in lib.iter().enumerate() {
        trace.extend(path_rows(&[i.to_string()], x));
    }
    Ok(Outcome {
        reports,
        details: json!({
            "catalog": dynamics.catalog.id(),
            "c_star": dynamics.c_star,
            "lambda_star": dynamics.lambda_star,
            "separable": dynamics.separable(),
            "library_paths": lib.len(),
        }),
        trace_header: state_header(&["path", "t"], dynamics.dim()),
        trace,
    })
}

/// Relative error at T of the fractional Euler scheme for D^α y = y, y(0) = 1,
/// against E_α(T^α).
pub fn mittag_leffler_error(alpha: f64, horizon: f64, cells: usize) -> Result<f64, CliError> {
    let space = PathSpace::uniform(alpha, horizon, cells)?;
    let dynamics = GameDynamics::new(
        Catalog::LinearScalar {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
            e_u: 0.0,
            e_v: 0.0,
            terminal: Terminal::Linear(vec![1.0]),
        },
        vec![vec![0.0]],
        vec![vec![0.0]],
        None,
        None,
    )?;
    let base = SampledPath::constant(space, vec![1.0])?;
    let sched = ControlSchedule::new(vec![0, cells], vec![0], vec![0])?;
    let y = game::simulate(&dynamics, &base, 0.0, &sched)?;
    let exact = mittag_leffler(alpha, horizon.powf(alpha), 1e-15)?;
    Ok((y.node_state(cells)[0] - exact).abs() / exact.abs())
}

pub fn simulate(sc: &Scenario) -> Result<Outcome, CliError> {
    let dynamics = &sc.dynamics;
    let base = SampledPath::constant(sc.space.clone(), sc.x0.clone())?;
    let steps = sc.decisions.nodes.len() - 1;
    let mut reports = Vec::new();
    let mut trace = Vec::new();
    let mut runs = Vec::new();
    for i in 0..dynamics.p.len() {
        for j in 0..dynamics.q.len() {
            let sched = ControlSchedule::new(sc.decisions.nodes.clone(), vec![i; steps], vec![j; steps])?;
            let y = game::simulate(dynamics, &base, 0.0, &sched)?;
            let c = game::cost(dynamics, &y, 0.0, &sched)?;
            trace.extend(path_rows(&[i.to_string(), j.to_string()], &y));
            runs.push(json!({
                "u": i,
                "v": j,
                "cost": c,
                "terminal_state": y.node_state(y.cells()),
            }));
        }
    }

    // history before the restart node is untouched
    let lib = library(sc)?;
    let m = sc.decisions.nodes[steps / 2];
    let t = sc.space.grid().node(m);
    let bounds = sc.decisions.boundaries_from(m);
    let sched = ControlSchedule::new(bounds.clone(), vec![0; bounds.len() - 1], vec![0; bounds.len() - 1])?;
    for (k, x) in lib.iter().enumerate() {
        let y = game::simulate(dynamics, x, t, &sched)?;
        let worst = (0..=m)
            .map(|i| vecops::dist(x.node_state(i), y.node_state(i)))
            .fold(0.0, f64::max);
        reports.push(CheckReport::new(
            "simulate_history",
            Grade::Assertion,
            worst,
            0.0,
            1e-14,
            &[k as f64, t],
        ));
    }

    let n = sc.config.grid.fine;
    let mut errors = Vec::new();
    for d in [8, 4, 2, 1] {
        if n / d >= 1 {
            let cells = n / d;
            let e = mittag_leffler_error(sc.config.alpha, sc.config.horizon, cells)?;
            reports.push(
                CheckReport::new(
                    "mittag_leffler_error",
                    Grade::Diagnostic,
                    e,
                    0.05,
                    0.0,
                    &[sc.config.alpha, sc.config.horizon, cells as f64],
                )
                .with_detail(format!("cells={cells}")),
            );
            errors.push((cells, e));
        }
    }
    let worst_step = errors
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    if errors.len() > 1 {
        let flat: Vec<f64> = errors.iter().map(|e| e.1).collect();
        let mut r = CheckReport::new("mittag_leffler_monotone", Grade::Assertion, worst_step, 0.0, 0.0, &flat);
        r.pass = worst_step < 0.0;
        reports.push(r);
    }
    Ok(Outcome {
        reports,
        details: json!({
            "runs": runs,
            "mittag_leffler": errors.iter().map(|(c, e)| json!({"cells": c, "relative_error": e})).collect::<Vec<_>>(),
        }),
        trace_header: state_header(&["u", "v", "t"], dynamics.dim()),
        trace,
    })
}

// (path, t, upper, lower, σ(freeze))
type ValueEntry = (usize, f64, f64, f64, f64);

pub fn value(sc: &Scenario) -> Result<Outcome, CliError> {
    let dynamics = &sc.dynamics;
    let mut paths = vec![SampledPath::constant(sc.space.clone(), sc.x0.clone())?];
    paths.extend(library(sc)?);
    let dec = &sc.decisions;
    let k = sc.config.grid.decision;
    let grid = sc.space.grid();

    let entries: Vec<Vec<ValueEntry>> = paths
        .par_iter()
        .enumerate()
        .map(|(pi, x)| {
            dec.nodes
                .iter()
                .map(|&m| {
                    let tree = game::value_on(dynamics, x, &dec.boundaries_from(m))?;
                    let t = grid.node(m);
                    Ok((pi, t, tree.upper_value, tree.lower_value, dynamics.sigma(&x.freeze_at(m))))
                })
                .collect::<Result<Vec<_>, CliError>>()
        })
        .collect::<Result<_, _>>()?;
    let entries: Vec<_> = entries.into_iter().flatten().collect();

    let mut reports = Vec::new();
    let bracket_grade = if dynamics.separable() {
        Grade::Assertion
    } else {
        Grade::Diagnostic
    };
    for &(pi, t, up, lo, _) in &entries {
        reports.push(CheckReport::new(
            "value_bracket",
            bracket_grade,
            (up - lo).abs(),
            0.0,
            1e-9,
            &[pi as f64, t],
        ));
    }
    let dpp: Vec<f64> = paths
        .par_iter()
        .map(|x| game::dpp_residual(dynamics, x, 0.0, k))
        .collect::<Result<_, _>>()?;
    for (pi, r) in dpp.into_iter().enumerate() {
        reports.push(CheckReport::new("dpp_residual", Grade::Assertion, r, 0.0, 1e-12, &[pi as f64]));
    }
    let upper = TreeValue::new(dynamics.clone(), sc.config.grid.fine, k, Mode::Upper)?;
    let lower = TreeValue::new(dynamics.clone(), sc.config.grid.fine, k, Mode::Lower)?;
    for (name, phi) in [("upper", &upper), ("lower", &lower)] {
        let r = viscosity::boundary_residual(phi, dynamics, &paths)?;
        reports.push(
            CheckReport::new("boundary_residual", Grade::Assertion, r, 0.0, 1e-12, &[paths.len() as f64])
                .with_detail(name),
        );
    }

    // replacing the future of x after t leaves V(t, x) unchanged
    let m = dec.nodes[dec.nodes.len() / 2];
    let t = grid.node(m);
    for pi in 0..paths.len() {
        let (x, z) = (&paths[pi], &paths[(pi + 1) % paths.len()]);
        let tail: Vec<Vec<f64>> = (m..x.cells()).map(|j| z.cell(j).to_vec()).collect();
        let x2 = x.extend(t, &tail)?;
        let a = upper.tree(t, x)?;
        let b = upper.tree(t, &x2)?;
        let lhs = (a.upper_value - b.upper_value)
            .abs()
            .max((a.lower_value - b.lower_value).abs());
        reports.push(CheckReport::new(
            "value_non_anticipative",
            Grade::Assertion,
            lhs,
            0.0,
            1e-12,
            &[pi as f64, t],
        ));
    }

    let mut pairs = Vec::new();
    for &m in &dec.nodes {
        for pi in 0..paths.len().saturating_sub(1) {
            pairs.push((grid.node(m), paths[pi].clone(), paths[pi + 1].clone()));
        }
    }
    reports.push(viscosity::lipschitz_l_check(&upper, &pairs, None)?);

    let trace = entries
        .iter()
        .map(|&(pi, t, up, lo, s)| vec![pi.to_string(), fmt(t), fmt(up), fmt(lo), fmt(s)])
        .collect();
    Ok(Outcome {
        reports,
        details: json!({
            "values": entries.iter().map(|&(pi, t, up, lo, s)| json!({
                "path": pi, "t": t, "upper": up, "lower": lo, "sigma_freeze": s,
            })).collect::<Vec<_>>(),
        }),
        trace_header: ["path", "t", "upper", "lower", "sigma_freeze"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        trace,
    })
}

pub fn lemmas(sc: &Scenario) -> Result<Outcome, CliError> {
    let lib = library(sc)?;
    let params = &sc.params;
    let cells = sc.config.grid.fine;
    let grid = sc.space.grid();
    let mut reports = Vec::new();

    let mut r = rng(sc.seed, 10);
    for _ in 0..20 {
        let i = r.gen_range(0..lib.len());
        let t = grid.node(r.gen_range(0..=cells));
        let v = testfunc::nu(params, t, &lib[i], t, &lib[i])?;
        reports.push(CheckReport::new(
            "nu_self_vanishing",
            Grade::Assertion,
            v.abs(),
            0.0,
            1e-10,
            &[i as f64, t, params.eps, params.alpha],
        ));
    }
    let mut r = rng(sc.seed, 11);
    for _ in 0..50 {
        let (i, j) = (r.gen_range(0..lib.len()), r.gen_range(0..lib.len()));
        let (mt, ms) = (r.gen_range(0..=cells), r.gen_range(0..=cells));
        let (mt2, ms2) = (r.gen_range(mt..=cells), r.gen_range(ms..=cells));
        reports.push(testfunc::freeze_invariance_check(
            params,
            grid.node(mt),
            &lib[i],
            grid.node(ms),
            &lib[j],
            grid.node(mt2),
            grid.node(ms2),
        )?);
    }

    let trials: Vec<Vec<CheckReport>> = (0..sc.config.trials)
        .into_par_iter()
        .map(|k| testfunc::lemma_harness(params, &lib, sc.theta, 1, &mut rng(sc.seed, 1000 + k as u64)))
        .collect::<Result<_, _>>()?;
    reports.extend(trials.into_iter().flatten());

    if lib.len() >= 2 {
        let t = grid.node(cells / 2);
        reports.push(testfunc::nu_convergence_sequence(params, t, &lib[0], &lib[1], 8)?);
    }

    // ci-gradient against least-squares finite differences
    let delta_cells = (cells / 16).max(2);
    let delta = grid.node(delta_cells);
    let mut r = rng(sc.seed, 12);
    let mut fd_rows = Vec::new();
    for trial in 0..3 {
        let (i, j) = (r.gen_range(0..lib.len()), r.gen_range(0..lib.len()));
        let mt = r.gen_range(0..=cells - delta_cells);
        let ms = r.gen_range(0..=cells);
        let (t, tau) = (grid.node(mt), grid.node(ms));
        let mu = MuFunctional {
            params: *params,
            tau_star: tau,
            y_star: lib[j].clone(),
        };
        let exact = testfunc::mu_gradient(params, tau, &lib[j], t, &lib[i])?;
        let fd = testfunc::ci_derivative_fd(&mu, t, &lib[i], delta, 1.0)?;
        let mut diff = vec![exact.dt_alpha - fd.pair.dt_alpha];
        diff.extend(vecops::sub(&exact.grad_alpha, &fd.pair.grad_alpha));
        let mut full = vec![exact.dt_alpha];
        full.extend(&exact.grad_alpha);
        let rel = vecops::norm(&diff) / vecops::norm(&full).max(1e-12);
        reports.push(
            CheckReport::new(
                "gradient_vs_fd",
                Grade::Diagnostic,
                rel,
                1e-3,
                0.0,
                &[trial as f64, i as f64, j as f64, t, tau, delta],
            )
            .with_detail(format!("delta={delta} residual={:.3e}", fd.residual)),
        );
        fd_rows.push(vec![
            trial.to_string(),
            fmt(t),
            fmt(tau),
            fmt(delta),
            fmt(rel),
            fmt(fd.residual),
        ]);
    }

    let mut trace = Vec::new();
    for rep in &reports {
        trace.push(vec![
            rep.lemma.clone(),
            rep.inputs_digest.clone(),
            fmt(rep.lhs),
            fmt(rep.rhs),
            rep.pass.to_string(),
        ]);
    }
    Ok(Outcome {
        reports,
        details: json!({
            "params": params,
            "theta": sc.theta,
            "c1": testfunc::c1(params),
            "c2": testfunc::c2(params),
            "c3": testfunc::c3(params, sc.theta)?,
            "a1": testfunc::a1(params, sc.theta)?,
            "c4": testfunc::c4(params, sc.theta)?,
            "fd": fd_rows,
        }),
        trace_header: ["lemma", "inputs_digest", "lhs", "rhs", "pass"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        trace,
    })
}

/// Caches values by (t, path digest); tree values are costly and the
/// viscosity checks revisit the same points.
struct Memo {
    inner: Arc<dyn PathFunctional>,
    cache: Mutex<HashMap<(u64, String), f64>>,
}

impl Memo {
    fn new(inner: Arc<dyn PathFunctional>) -> Self {
        Memo {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

fn path_key(x: &SampledPath) -> String {
    let mut v = x.x0().to_vec();
    v.extend_from_slice(x.caputo_flat());
    digest_f64s(&v)
}

impl PathFunctional for Memo {
    fn value(&self, t: f64, x: &SampledPath) -> fracgame_core::Result<f64> {
        let key = (t.to_bits(), path_key(x));
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let v = self.inner.value(t, x)?;
        self.cache.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }
}

pub fn viscosity(sc: &Scenario) -> Result<Outcome, CliError> {
    let dynamics = &sc.dynamics;
    let lib = library(sc)?;
    let k = sc.config.grid.decision;
    let fine = sc.config.grid.fine;
    let grid = sc.space.grid();
    let closed = freeze_closure(&lib, &sc.nodes);
    let mut reports = Vec::new();
    let mut trace = Vec::new();
    let anchors = lib.len().min(2);
    let tau_star = grid.node(sc.nodes[sc.nodes.len() / 2]);
    for mode in [Mode::Upper, Mode::Lower] {
        let name = match mode {
            Mode::Upper => "upper",
            Mode::Lower => "lower",
        };
        let phi = Memo::new(Arc::new(TreeValue::new(dynamics.clone(), fine, k, mode)?));
        let r = viscosity::boundary_residual(&phi, dynamics, &closed)?;
        reports.push(
            CheckReport::new("boundary_residual", Grade::Assertion, r, 0.0, 1e-12, &[closed.len() as f64])
                .with_detail(name),
        );
        for a in 0..anchors {
            for c in [1.0, -1.0] {
                let psi = TestFunctional {
                    g0: 0.0,
                    g1: 0.0,
                    c,
                    mu: MuFunctional {
                        params: sc.params,
                        tau_star,
                        y_star: lib[a].clone(),
                    },
                };
                for (sign, rep) in [
                    ("plus", viscosity::vplus_check(&phi, &psi, dynamics, &lib, &sc.nodes)?),
                    ("minus", viscosity::vminus_check(&phi, &psi, dynamics, &lib, &sc.nodes)?),
                ] {
                    trace.push(vec![
                        name.to_string(),
                        sign.to_string(),
                        a.to_string(),
                        fmt(c),
                        format!("{:?}", rep.grade).to_lowercase(),
                        fmt(rep.lhs),
                        fmt(rep.rhs),
                        rep.pass.to_string(),
                    ]);
                    let detail = format!("value={name} anchor={a} c={c} {}", rep.detail.clone().unwrap_or_default());
                    reports.push(rep.with_detail(detail));
                }
            }
        }
    }
    Ok(Outcome {
        reports,
        details: json!({
            "library_paths": lib.len(),
            "closed_paths": closed.len(),
            "nodes": sc.nodes,
            "tau_star": tau_star,
        }),
        trace_header: ["value", "sign", "anchor", "c", "grade", "lhs", "rhs", "pass"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        trace,
    })
}

pub fn doubling(sc: &Scenario) -> Result<Outcome, CliError> {
    let dynamics = &sc.dynamics;
    let lib = library(sc)?;
    let value: Arc<dyn PathFunctional> = Arc::new(Memo::new(Arc::new(TreeValue::new(
        dynamics.clone(),
        sc.config.grid.fine,
        sc.config.grid.decision,
        Mode::Upper,
    )?)));
    let h = sc.config.horizon;
    let eta = sc.config.perturbation;
    // value + η(T − t): shifted inside, unchanged at T
    let perturbed = Affine::new(value.clone(), 1.0, eta * h, -eta);
    let run = |phi1: &dyn PathFunctional| -> Result<DoublingReport, CliError> {
        Ok(viscosity::doubling_diagnostic(
            phi1,
            value.as_ref(),
            dynamics,
            &sc.params,
            &sc.config.eps,
            &lib,
            &sc.nodes,
        )?)
    };
    let identical = run(value.as_ref())?;
    let shifted = run(&perturbed)?;
    let mut reports = Vec::new();
    let mut trace = Vec::new();
    for (pair, rep) in [("identical", &identical), ("perturbed", &shifted)] {
        for r in rep.to_reports() {
            let detail = match &r.detail {
                Some(d) => format!("pair={pair} {d}"),
                None => format!("pair={pair}"),
            };
            reports.push(r.with_detail(detail));
        }
        for e in &rep.records {
            trace.push(vec![
                pair.to_string(),
                fmt(e.eps),
                e.x_index.to_string(),
                fmt(e.t),
                e.y_index.to_string(),
                fmt(e.tau),
                fmt(e.phi_max),
                fmt(e.nu),
                e.gap_holds.to_string(),
                e.nu_holds.to_string(),
            ]);
        }
    }
    Ok(Outcome {
        reports,
        details: json!({ "identical": identical, "perturbed": shifted }),
        trace_header: [
            "pair", "eps", "x_index", "t", "y_index", "tau", "phi_max", "nu", "gap_holds", "nu_holds",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        trace,
    })
}
