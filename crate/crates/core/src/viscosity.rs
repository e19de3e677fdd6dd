//! Viscosity-property checks for candidate functionals, condition (L) fitting
//! and the doubling-of-variables diagnostic.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::GameDynamics;
use crate::error::{Error, Result};
use crate::fraccalc::right_singular_weights;
use crate::game::Sign;
use crate::library::freeze_closure;
use crate::paths::{PathFunctional, SampledPath};
use crate::report::{CheckReport, Grade};
use crate::testfunc::{self, lipschitz_lhs, mu_gradient, MuFunctional, NuParams};
use crate::vecops;

/// Evaluates the inner functional on freeze(x, t), which makes any
/// functional non-anticipative.
#[derive(Clone)]
pub struct Frozen(pub Arc<dyn PathFunctional>);

impl PathFunctional for Frozen {
    fn value(&self, t: f64, x: &SampledPath) -> Result<f64> {
        self.0.value(t, &x.freeze(t)?)
    }
}

/// φ(t, x) = σ(freeze(x, t)).
#[derive(Debug, Clone)]
pub struct TerminalFrozen(pub Arc<GameDynamics>);

impl PathFunctional for TerminalFrozen {
    fn value(&self, t: f64, x: &SampledPath) -> Result<f64> {
        Ok(self.0.sigma(&x.freeze(t)?))
    }
}

/// scale·φ(t, x) + offset + slope·t.
#[derive(Clone)]
pub struct Affine {
    pub inner: Arc<dyn PathFunctional>,
    pub scale: f64,
    pub offset: f64,
    pub slope: f64,
}

impl Affine {
    pub fn new(inner: Arc<dyn PathFunctional>, scale: f64, offset: f64, slope: f64) -> Self {
        Affine {
            inner,
            scale,
            offset,
            slope,
        }
    }
}

impl PathFunctional for Affine {
    fn value(&self, t: f64, x: &SampledPath) -> Result<f64> {
        Ok(self.scale * self.inner.value(t, x)? + self.offset + self.slope * t)
    }
}

/// max |φ(T, x) − σ(x)| over the samples.
pub fn boundary_residual(
    phi: &dyn PathFunctional,
    dynamics: &GameDynamics,
    samples: &[SampledPath],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in samples {
        worst = worst.max((phi.value(x.horizon(), x)? - dynamics.sigma(x)).abs());
    }
    Ok(worst)
}

/// ψ(t, x) = g0 + g1·t + c·μ_ε^{(τ*, y*)}(t, x).
#[derive(Debug, Clone)]
pub struct TestFunctional {
    pub g0: f64,
    pub g1: f64,
    pub c: f64,
    pub mu: MuFunctional,
}

impl TestFunctional {
    pub fn derivatives(&self, t: f64, x: &SampledPath) -> Result<testfunc::CiDerivativePair> {
        let g = mu_gradient(&self.mu.params, self.mu.tau_star, &self.mu.y_star, t, x)?;
        Ok(testfunc::CiDerivativePair {
            dt_alpha: self.g1,
            grad_alpha: vecops::scale(self.c, &g.grad_alpha),
        })
    }
}

impl PathFunctional for TestFunctional {
    fn value(&self, t: f64, x: &SampledPath) -> Result<f64> {
        Ok(self.g0 + self.g1 * t + self.c * self.mu.value(t, x)?)
    }
}

/// Values of a functional over library × nodes, row-major by path.
fn tabulate(phi: &dyn PathFunctional, lib: &[SampledPath], nodes: &[usize]) -> Result<Vec<f64>> {
    let m = nodes.len();
    (0..lib.len() * m)
        .into_par_iter()
        .map(|k| {
            let x = &lib[k / m];
            phi.value(x.grid().node(nodes[k % m]), x)
        })
        .collect()
}

fn check_nodes(lib: &[SampledPath], nodes: &[usize]) -> Result<()> {
    if lib.is_empty() {
        return Err(Error::Configuration("empty path library".into()));
    }
    if nodes.is_empty() || nodes.iter().any(|&m| m > lib[0].cells()) {
        return Err(Error::Configuration("node set empty or beyond the grid".into()));
    }
    Ok(())
}

/// Sign test of the viscosity inequality at the extremum of φ − ψ over the
/// freeze-closure of the library × nodes: minimum and ≤ 0 for `Sign::Plus`, maximum and
/// ≥ 0 for `Sign::Minus`. The tolerance is 1e-2·(1 + |H|).
pub fn viscosity_check(
    phi: &dyn PathFunctional,
    psi: &TestFunctional,
    dynamics: &GameDynamics,
    lib: &[SampledPath],
    nodes: &[usize],
    sign: Sign,
) -> Result<CheckReport> {
    check_nodes(lib, nodes)?;
    let lib = &freeze_closure(lib, nodes)[..];
    let name = match sign {
        Sign::Plus => "viscosity_plus",
        Sign::Minus => "viscosity_minus",
    };
    let fphi = tabulate(phi, lib, nodes)?;
    let fpsi = tabulate(psi, lib, nodes)?;
    let dir = match sign {
        Sign::Plus => 1.0,
        Sign::Minus => -1.0,
    };
    let mut best = 0;
    for k in 1..fphi.len() {
        if dir * (fphi[k] - fpsi[k]) < dir * (fphi[best] - fpsi[best]) {
            best = k;
        }
    }
    let m = nodes.len();
    let (x, node) = (&lib[best / m], nodes[best % m]);
    let t = x.grid().node(node);
    let inputs = [
        (best / m) as f64,
        t,
        psi.g0,
        psi.g1,
        psi.c,
        psi.mu.tau_star,
        psi.mu.params.eps,
    ];
    if node == x.cells() {
        return Ok(CheckReport::inconclusive(
            name,
            &inputs,
            "extremum of the difference attained only at t = T",
        ));
    }
    let d = psi.derivatives(t, x)?;
    let h = dynamics.h(t, x.node_state(node), &d.grad_alpha);
    let expr = d.dt_alpha + h;
    let tol = 1e-2 * (1.0 + h.abs());
    Ok(
        CheckReport::new(name, Grade::Diagnostic, dir * expr, 0.0, tol, &inputs).with_detail(
            format!("path={} t={t} dt_psi={} H={h}", best / m, d.dt_alpha),
        ),
    )
}

pub fn vplus_check(
    phi: &dyn PathFunctional,
    psi: &TestFunctional,
    dynamics: &GameDynamics,
    lib: &[SampledPath],
    nodes: &[usize],
) -> Result<CheckReport> {
    viscosity_check(phi, psi, dynamics, lib, nodes, Sign::Plus)
}

pub fn vminus_check(
    phi: &dyn PathFunctional,
    psi: &TestFunctional,
    dynamics: &GameDynamics,
    lib: &[SampledPath],
    nodes: &[usize],
) -> Result<CheckReport> {
    viscosity_check(phi, psi, dynamics, lib, nodes, Sign::Minus)
}

/// Least Λ with |φ(t,x) − φ(t,y)| ≤ Λ(‖a_x(T) − a_y(T)‖ + ∫‖a_x − a_y‖(T−ξ)^{α−1}dξ)
/// over the given (t, x, y) triples. With `bound` the fitted Λ is asserted
/// against it, otherwise it is reported as a diagnostic.
pub fn lipschitz_l_check(
    phi: &dyn PathFunctional,
    pairs: &[(f64, SampledPath, SampledPath)],
    bound: Option<f64>,
) -> Result<CheckReport> {
    let mut lambda: f64 = 0.0;
    let mut digest = Vec::with_capacity(pairs.len());
    for (t, x, y) in pairs {
        let num = (phi.value(*t, x)? - phi.value(*t, y)?).abs();
        let den = lipschitz_lhs(&x.freeze(*t)?, &y.freeze(*t)?)?;
        let ratio = if den > 0.0 {
            num / den
        } else if num > 1e-12 {
            f64::INFINITY
        } else {
            0.0
        };
        lambda = lambda.max(ratio);
        digest.push(*t);
        digest.push(ratio);
    }
    let detail = format!("pairs={} fitted_lambda={lambda:.6e}", pairs.len());
    Ok(match bound {
        Some(b) => CheckReport::new("condition_l", Grade::Assertion, lambda, b, 1e-9, &digest),
        None => CheckReport::new(
            "condition_l",
            Grade::Diagnostic,
            lambda,
            f64::INFINITY,
            0.0,
            &digest,
        ),
    }
    .with_detail(detail))
}

#[derive(Debug, Clone, Serialize)]
pub struct HjRecord {
    /// −ζ + 2(t−τ)/ε^{3/α} + H(t, x(t), ∇μ/ε), nonnegative under (V−).
    pub first: f64,
    /// ζ + 2(t−τ)/ε^{3/α} + H(τ, y(τ), −∇μ'/ε), nonpositive under (V+).
    pub second: f64,
    pub h_first: f64,
    pub h_second: f64,
    pub difference: f64,
    pub two_zeta: f64,
    /// The Hamiltonian difference falls below 2ζ.
    pub engaged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsRecord {
    pub eps: f64,
    pub x_index: usize,
    pub t: f64,
    pub y_index: usize,
    pub tau: f64,
    pub phi_max: f64,
    pub nu: f64,
    pub gap_lhs: f64,
    pub gap_rhs: f64,
    pub gap_holds: bool,
    pub nu_lhs: f64,
    pub nu_rhs: f64,
    pub nu_holds: bool,
    pub gradient_norm: Option<f64>,
    pub gradient_rhs: Option<f64>,
    pub gradient_holds: Option<bool>,
    pub hj: Option<HjRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DoublingReport {
    pub header: String,
    pub library_size: usize,
    pub nodes: Vec<usize>,
    pub kappa: f64,
    pub zeta: f64,
    pub no_contradiction_hypothesis: bool,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub c1: f64,
    pub theta: Option<f64>,
    pub c3: Option<f64>,
    pub records: Vec<EpsRecord>,
}

const DOUBLING_HEADER: &str = "maximizers are taken over a finite freeze-closed path library; \
the bounds are necessary conditions checked on the library only";

impl DoublingReport {
    pub fn to_reports(&self) -> Vec<CheckReport> {
        let mut out = vec![CheckReport::new(
            "doubling_kappa",
            Grade::Diagnostic,
            self.kappa,
            0.0,
            1e-12,
            &[self.kappa, self.library_size as f64],
        )
        .with_detail(if self.no_contradiction_hypothesis {
            "no contradiction hypothesis".to_string()
        } else {
            format!("zeta={:.6e} K1={:.6e} K3={:.6e}", self.zeta, self.k1, self.k3)
        })];
        for r in &self.records {
            let inputs = [r.eps, r.x_index as f64, r.t, r.y_index as f64, r.tau];
            out.push(CheckReport::new(
                "doubling_time_gap",
                Grade::Assertion,
                r.gap_lhs,
                r.gap_rhs,
                1e-12,
                &inputs,
            ));
            out.push(CheckReport::new(
                "doubling_nu_bound",
                Grade::Assertion,
                r.nu_lhs,
                r.nu_rhs,
                1e-12 * (1.0 + r.nu_rhs),
                &inputs,
            ));
            match (r.gradient_norm, r.gradient_rhs) {
                (Some(l), Some(rhs)) => out.push(CheckReport::new(
                    "doubling_gradient_bound",
                    Grade::Assertion,
                    l,
                    rhs,
                    1e-9 * (1.0 + rhs),
                    &inputs,
                )),
                _ => out.push(CheckReport::inconclusive(
                    "doubling_gradient_bound",
                    &inputs,
                    "maximizer outside [0, T-theta] or no admissible theta",
                )),
            }
            match &r.hj {
                Some(h) => out.push(
                    CheckReport::new(
                        "doubling_hamiltonian_gap",
                        Grade::Diagnostic,
                        h.difference,
                        h.two_zeta,
                        0.0,
                        &inputs,
                    )
                    .with_detail(format!("first={:.6e} second={:.6e}", h.first, h.second)),
                ),
                None => out.push(CheckReport::inconclusive(
                    "doubling_hamiltonian_gap",
                    &inputs,
                    "maximizer at t = T",
                )),
            }
        }
        out
    }
}

/// Doubling of variables over the freeze-closure of `library` at `nodes`.
///
/// For each ε the functional
/// Φ = φ₁(t,x) − φ₂(τ,y) − (2T−t−τ)ζ − (t−τ)²ε^{−3/α} − ν_ε/ε
/// is maximized over (library × nodes)²; the proof's bounds and both
/// Hamilton-Jacobi expressions are evaluated at the maximizer.
#[allow(clippy::too_many_arguments)]
pub fn doubling_diagnostic(
    phi1: &dyn PathFunctional,
    phi2: &dyn PathFunctional,
    dynamics: &GameDynamics,
    params: &NuParams,
    eps_list: &[f64],
    library: &[SampledPath],
    nodes: &[usize],
) -> Result<DoublingReport> {
    check_nodes(library, nodes)?;
    let cells = library[0].cells();
    let mut nodes = nodes.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    if *nodes.last().unwrap() != cells {
        nodes.push(cells);
    }
    let lib = freeze_closure(library, &nodes);
    let m = nodes.len();
    let npts = lib.len() * m;
    let grid = lib[0].grid().clone();
    let big_t = grid.horizon();
    let times: Vec<f64> = nodes.iter().map(|&i| grid.node(i)).collect();

    let v1 = tabulate(phi1, &lib, &nodes)?;
    let v2 = tabulate(phi2, &lib, &nodes)?;
    let kappa = (0..npts).map(|k| v1[k] - v2[k]).fold(f64::NEG_INFINITY, f64::max);
    let zeta = kappa / (4.0 * big_t);
    let mut report = DoublingReport {
        header: DOUBLING_HEADER.to_string(),
        library_size: lib.len(),
        nodes: nodes.clone(),
        kappa,
        zeta,
        no_contradiction_hypothesis: kappa <= 1e-12,
        k1: f64::NAN,
        k2: f64::NAN,
        k3: f64::NAN,
        c1: params.c1,
        theta: None,
        c3: None,
        records: Vec::new(),
    };
    if report.no_contradiction_hypothesis {
        return Ok(report);
    }

    // frozen node states per point and squared-distance kernels
    let n = lib[0].dim();
    let frozen: Vec<Vec<f64>> = (0..npts)
        .into_par_iter()
        .map(|k| lib[k / m].freeze_at(nodes[k % m]).node_states().to_vec())
        .collect();
    let weights = right_singular_weights(grid.nodes(), params.p)?;
    let nu_at = |p: &NuParams, i: usize, j: usize| -> f64 {
        let (a, b) = (&frozen[i], &frozen[j]);
        let mut acc = 0.0;
        for (idx, w) in weights.iter().enumerate() {
            let r2 = vecops::dist_sq(&a[idx * n..(idx + 1) * n], &b[idx * n..(idx + 1) * n]);
            let d = p.e0 * (0.5 * p.q * (r2 / p.e2).ln_1p()).exp_m1();
            acc += w * d;
            if idx == cells {
                acc += d;
            }
        }
        acc
    };

    let k1 = (0..npts)
        .flat_map(|i| (0..npts).map(move |j| (i, j)))
        .map(|(i, j)| v1[i] - v2[j])
        .fold(f64::NEG_INFINITY, f64::max);

    let eps_params: Vec<NuParams> = eps_list
        .iter()
        .map(|&e| params.with_eps(e))
        .collect::<Result<_>>()?;
    // K2 over same-node pairs and all ε
    let mut k2: f64 = 0.0;
    for p in &eps_params {
        let part = (0..m)
            .into_par_iter()
            .map(|s| {
                let mut best: f64 = 0.0;
                for xi in 0..lib.len() {
                    for yi in 0..lib.len() {
                        let (i, j) = (xi * m + s, yi * m + s);
                        let num = (v1[i] - v1[j]).abs() + (v2[i] - v2[j]).abs();
                        if num == 0.0 {
                            continue;
                        }
                        let den = (nu_at(p, i, j) + p.c1 * p.e0).powf(1.0 / p.q);
                        best = best.max(num / den);
                    }
                }
                best
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max);
        k2 = k2.max(part);
    }
    let r = (params.q - 1.0) / params.q;
    let k3 = k2 + params.c1.powf(r);
    report.k1 = k1;
    report.k2 = k2;
    report.k3 = k3;

    // θ: largest T − t_s with oscillation ≤ κ/8 on every later candidate node
    let last = m - 1;
    let mut s_min = m - 1;
    for s in (0..m).rev() {
        let osc = (0..lib.len())
            .map(|xi| {
                (v1[xi * m + s] - v1[xi * m + last]).abs() + (v2[xi * m + s] - v2[xi * m + last]).abs()
            })
            .fold(0.0, f64::max);
        if osc <= kappa / 8.0 {
            s_min = s;
        } else {
            break;
        }
    }
    let s_min = s_min.max(1);
    let theta = big_t - times[s_min];
    if theta > 0.0 && theta < big_t {
        report.theta = Some(theta);
        report.c3 = Some(testfunc::c3(params, theta)?);
    }

    for p in &eps_params {
        let e3 = p.eps.powf(3.0 / p.alpha);
        let phi = |i: usize, j: usize| -> f64 {
            let (t, tau) = (times[i % m], times[j % m]);
            v1[i] - v2[j] - (2.0 * big_t - t - tau) * zeta - (t - tau).powi(2) / e3
                - nu_at(p, i, j) / p.eps
        };
        let (bi, bj, bv) = (0..npts)
            .into_par_iter()
            .map(|i| {
                let mut best = (i, 0usize, f64::NEG_INFINITY);
                for j in 0..npts {
                    let v = phi(i, j);
                    if v > best.2 {
                        best = (i, j, v);
                    }
                }
                best
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0, 0, f64::NEG_INFINITY), |acc, b| if b.2 > acc.2 { b } else { acc });
        let (xi, yi) = (bi / m, bj / m);
        let (t, tau) = (times[bi % m], times[bj % m]);
        let nuv = nu_at(p, bi, bj);
        let gap_lhs = (t - tau).powi(2);
        let gap_rhs = k1 * e3;
        let nu_lhs = (nuv + p.c1 * p.e0).powf(r);
        let nu_rhs = k3 * p.eps;
        let mut rec = EpsRecord {
            eps: p.eps,
            x_index: xi,
            t,
            y_index: yi,
            tau,
            phi_max: bv,
            nu: nuv,
            gap_lhs,
            gap_rhs,
            gap_holds: gap_lhs <= gap_rhs + 1e-12,
            nu_lhs,
            nu_rhs,
            nu_holds: nu_lhs <= nu_rhs + 1e-12 * (1.0 + nu_rhs),
            gradient_norm: None,
            gradient_rhs: None,
            gradient_holds: None,
            hj: None,
        };
        if t < big_t && tau < big_t {
            let (x, y) = (&lib[xi], &lib[yi]);
            let g1 = mu_gradient(p, tau, y, t, x)?;
            let g2 = mu_gradient(p, t, x, tau, y)?;
            let s1 = vecops::scale(1.0 / p.eps, &g1.grad_alpha);
            let s2 = vecops::scale(-1.0 / p.eps, &g2.grad_alpha);
            let h1 = dynamics.h(t, x.node_state(nodes[bi % m]), &s1);
            let h2 = dynamics.h(tau, y.node_state(nodes[bj % m]), &s2);
            let lin = 2.0 * (t - tau) / e3;
            let difference = h1 - h2;
            rec.hj = Some(HjRecord {
                first: -zeta + lin + h1,
                second: zeta + lin + h2,
                h_first: h1,
                h_second: h2,
                difference,
                two_zeta: 2.0 * zeta,
                engaged: difference < 2.0 * zeta,
            });
            if let (Some(th), Some(c3)) = (report.theta, report.c3) {
                let lim = big_t - th + 1e-12 * big_t;
                if t <= lim && tau <= lim {
                    let norm = vecops::norm(&s1);
                    let rhs = c3 * k3;
                    rec.gradient_norm = Some(norm);
                    rec.gradient_rhs = Some(rhs);
                    rec.gradient_holds = Some(norm <= rhs + 1e-9 * (1.0 + rhs));
                }
            }
        }
        report.records.push(rec);
    }
    Ok(report)
}
