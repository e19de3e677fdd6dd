//! The penalty functional ν_ε, its ci-gradient, the explicit constants
//! C₁–C₄ and A₁, a finite-difference ci-derivative estimator and the
//! inequality harness built on them.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fraccalc::{beta_fn, gamma_fn, singular_integral, TwoSidedRule};
use crate::paths::{PathFunctional, SampledPath};
use crate::report::{CheckReport, Grade};
use crate::vecops;

/// Quadrature nodes per half of the two-sided gradient rule.
pub const GRADIENT_NODES_PER_HALF: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NuParams {
    pub eps: f64,
    pub alpha: f64,
    pub beta: f64,
    pub q: f64,
    /// Kernel exponent (1−α−β)q of the integral term.
    pub p: f64,
    pub horizon: f64,
    pub c1: f64,
    /// ε^{2/(q−1)}
    pub e2: f64,
    /// ε^{q/(q−1)}
    pub e0: f64,
}

impl NuParams {
    pub fn default_beta(alpha: f64) -> f64 {
        (1.0 - alpha).min(alpha / 2.0) / 2.0
    }

    pub fn new(eps: f64, alpha: f64, beta: Option<f64>, horizon: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("order alpha={alpha} outside (0,1)")));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::domain(format!("eps={eps} must be positive")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::domain(format!("horizon T={horizon} must be positive")));
        }
        let beta = beta.unwrap_or_else(|| Self::default_beta(alpha));
        if !(beta > 0.0 && beta < (1.0 - alpha).min(alpha / 2.0)) {
            return Err(Error::domain(format!(
                "beta={beta} outside (0, min(1-alpha, alpha/2))"
            )));
        }
        let q = 2.0 / (2.0 - alpha);
        let p = (1.0 - alpha - beta) * q;
        if p >= 1.0 || beta * q / (q - 1.0) >= 1.0 {
            return Err(Error::domain("beta violates the exponent constraints"));
        }
        Ok(NuParams {
            eps,
            alpha,
            beta,
            q,
            p,
            horizon,
            c1: 1.0 + horizon.powf(1.0 - p) / (1.0 - p),
            e2: eps.powf(2.0 / (q - 1.0)),
            e0: eps.powf(q / (q - 1.0)),
        })
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        NuParams::new(eps, self.alpha, Some(self.beta), self.horizon)
    }

    /// (e2 + r²)^{q/2} − e0, computed without cancellation.
    fn excess(&self, r2: f64) -> f64 {
        self.e0 * (0.5 * self.q * (r2 / self.e2).ln_1p()).exp_m1()
    }

    fn check_space(&self, x: &SampledPath, y: &SampledPath) -> Result<()> {
        if !x.space().same_as(y.space()) {
            return Err(Error::domain("paths live on different path spaces"));
        }
        if x.dim() != y.dim() {
            return Err(Error::Dimension {
                expected: x.dim(),
                found: y.dim(),
            });
        }
        if (x.alpha() - self.alpha).abs() > 0.0 || (x.horizon() - self.horizon).abs() > 1e-12 {
            return Err(Error::domain("path space order or horizon differs from parameters"));
        }
        Ok(())
    }
}

/// ν_ε(t, x, τ, y). The constant part of the integrand integrates in closed
/// form and cancels against C₁ε^{q/(q−1)}; only the excess over it is
/// integrated numerically.
pub fn nu(params: &NuParams, t: f64, x: &SampledPath, tau: f64, y: &SampledPath) -> Result<f64> {
    params.check_space(x, y)?;
    let a = x.freeze(t)?;
    let b = y.freeze(tau)?;
    nu_frozen(params, &a, &b)
}

/// ν_ε on already frozen paths a = freeze(x, t), b = freeze(y, τ).
pub fn nu_frozen(params: &NuParams, a: &SampledPath, b: &SampledPath) -> Result<f64> {
    params.check_space(a, b)?;
    let d: Vec<f64> = diff_sq(a, b).iter().map(|&r2| params.excess(r2)).collect();
    let tail = singular_integral(a.grid(), &d, params.p)?;
    Ok(d[d.len() - 1] + tail)
}

fn diff_sq(a: &SampledPath, b: &SampledPath) -> Vec<f64> {
    let n = a.dim();
    a.node_states()
        .chunks(n)
        .zip(b.node_states().chunks(n))
        .map(|(u, v)| vecops::dist_sq(u, v))
        .collect()
}

/// |ν(t', freeze(x,t), τ', freeze(y,τ)) − ν(t, x, τ, y)| against 1e-10.
#[allow(clippy::too_many_arguments)]
pub fn freeze_invariance_check(
    params: &NuParams,
    t: f64,
    x: &SampledPath,
    tau: f64,
    y: &SampledPath,
    t2: f64,
    tau2: f64,
) -> Result<CheckReport> {
    if t2 < t || tau2 < tau {
        return Err(Error::domain("later times must not precede the freeze times"));
    }
    let base = nu(params, t, x, tau, y)?;
    let moved = nu(params, t2, &x.freeze(t)?, tau2, &y.freeze(tau)?)?;
    Ok(CheckReport::new(
        "freeze_invariance",
        Grade::Assertion,
        (moved - base).abs(),
        0.0,
        1e-10,
        &[params.eps, params.alpha, params.beta, t, tau, t2, tau2],
    ))
}

fn check_theta(params: &NuParams, theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < params.horizon) {
        return Err(Error::domain(format!(
            "theta={theta} outside (0, T={})",
            params.horizon
        )));
    }
    Ok(())
}

pub fn c1(params: &NuParams) -> f64 {
    params.c1
}

pub fn c2(params: &NuParams) -> f64 {
    let (q, b, t) = (params.q, params.beta, params.horizon);
    let r = (q - 1.0) / q;
    1.0 + t.powf(r - b) / (1.0 - b * q / (q - 1.0)).powf(r)
}

pub fn c3(params: &NuParams, theta: f64) -> Result<f64> {
    check_theta(params, theta)?;
    let (q, a, b, t) = (params.q, params.alpha, params.beta, params.horizon);
    let bf = beta_fn(1.0 - (1.0 - a) * q, 1.0 - params.p)?;
    Ok(q / (gamma_fn(a)? * theta.powf(1.0 - a))
        * (1.0 + t.powf(1.0 / q - 1.0 + a + b) * bf.powf(1.0 / q)))
}

/// Lipschitz constant on [0, T−θ] of t ↦ B(α, 1−p)(T−t)^{α−p}.
pub fn a1(params: &NuParams, theta: f64) -> Result<f64> {
    check_theta(params, theta)?;
    let e = params.alpha - params.p;
    let slope = theta.powf(e - 1.0).max(params.horizon.powf(e - 1.0));
    Ok(e.abs() * beta_fn(params.alpha, 1.0 - params.p)? * slope)
}

pub fn c4(params: &NuParams, theta: f64) -> Result<f64> {
    let a1 = a1(params, theta)?;
    let (q, a, t) = (params.q, params.alpha, params.horizon);
    Ok(q / gamma_fn(a)?
        * ((1.0 - a) * t.powf(1.0 - a) / theta.powf(2.0 - a)
            + a1 * t.powf(1.0 - a)
            + 2.0 / (a * theta.powf(params.p))))
}

/// ci-derivatives of order α of a functional at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiDerivativePair {
    pub dt_alpha: f64,
    pub grad_alpha: Vec<f64>,
}

/// Closed-form ci-derivatives of μ^{(τ*, y*)}(t, x) = ν_ε(t, x, τ*, y*).
pub fn mu_gradient(
    params: &NuParams,
    tau_star: f64,
    y_star: &SampledPath,
    t: f64,
    x: &SampledPath,
) -> Result<CiDerivativePair> {
    params.check_space(x, y_star)?;
    let big_t = params.horizon;
    if t >= big_t - 1e-12 * big_t {
        return Err(Error::domain("the ci-gradient is defined for t < T only"));
    }
    let a = x.freeze(t)?;
    let a_star = y_star.freeze(tau_star)?;
    let n = x.dim();
    let shrink = 1.0 - params.q / 2.0;
    let g = |xi: f64| {
        let d = vecops::sub(&a.eval_unchecked(xi), &a_star.eval_unchecked(xi));
        let den = (params.e2 + vecops::dot(&d, &d)).powf(shrink);
        vecops::scale(1.0 / den, &d)
    };
    let mut grad = vecops::scale((big_t - t).powf(params.alpha - 1.0), &g(big_t));
    let rule = TwoSidedRule::new(t, big_t, 1.0 - params.alpha, params.p, GRADIENT_NODES_PER_HALF)?;
    for (&xi, &w) in rule.nodes.iter().zip(&rule.weights) {
        vecops::axpy(w, &g(xi), &mut grad);
    }
    let c = params.q / gamma_fn(params.alpha)?;
    debug_assert_eq!(grad.len(), n);
    Ok(CiDerivativePair {
        dt_alpha: 0.0,
        grad_alpha: vecops::scale(c, &grad),
    })
}

/// Least-squares ci-derivative estimate with the worst probe residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdEstimate {
    pub pair: CiDerivativePair,
    pub residual: f64,
    pub probes: usize,
}

/// Finite-difference ci-derivatives at (t, x) over the extensions that carry
/// Caputo derivative 0 or ±amplitude·e_i on [t, t+δ] and 0 afterwards.
pub fn ci_derivative_fd(
    phi: &dyn PathFunctional,
    t: f64,
    x: &SampledPath,
    delta: f64,
    amplitude: f64,
) -> Result<FdEstimate> {
    let space = x.space();
    let m = space.node_index(t)?;
    let m2 = space.node_index(t + delta)?;
    if m2 < m + 2 {
        return Err(Error::domain("the step must span at least two grid cells"));
    }
    let n = x.dim();
    let cells = x.cells();
    let nodes = x.grid().nodes();
    let span = nodes[m2] - nodes[m];
    let base = phi.value(t, x)?;

    let mut dirs: Vec<Vec<f64>> = vec![vec![0.0; n]];
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s * amplitude;
            dirs.push(e);
        }
    }
    let mut rows = Vec::with_capacity(dirs.len());
    let mut rhs = Vec::with_capacity(dirs.len());
    for d in &dirs {
        let tail: Vec<Vec<f64>> = (m..cells)
            .map(|j| if j < m2 { d.clone() } else { vec![0.0; n] })
            .collect();
        let y = x.extend(t, &tail)?;
        let mut row = vec![span];
        row.extend(d.iter().map(|v| v * span));
        rows.push(row);
        rhs.push(phi.value(nodes[m2], &y)? - base);
    }
    let sol = least_squares(&rows, &rhs)?;
    let residual = rows
        .iter()
        .zip(&rhs)
        .map(|(r, b)| (vecops::dot(r, &sol) - b).abs())
        .fold(0.0, f64::max);
    Ok(FdEstimate {
        pair: CiDerivativePair {
            dt_alpha: sol[0],
            grad_alpha: sol[1..].to_vec(),
        },
        residual,
        probes: dirs.len(),
    })
}

// Normal equations solved by Gaussian elimination with partial pivoting.
fn least_squares(rows: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let k = rows[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, &b) in rows.iter().zip(rhs) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += r[i] * r[j];
            }
            a[i][k] += r[i] * b;
        }
    }
    let scale = (0..k).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    for c in 0..k {
        let piv = (c..k)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .expect("nonempty");
        if a[piv][c].abs() <= 1e-13 * scale || scale == 0.0 {
            return Err(Error::Conditioning(format!(
                "probe design is rank deficient in column {c}"
            )));
        }
        a.swap(c, piv);
        let (top, rest) = a.split_at_mut(c + 1);
        let pivot = &top[c];
        for row in rest.iter_mut().take(k - c - 1) {
            let f = row[c] / pivot[c];
            for (rj, pj) in row[c..=k].iter_mut().zip(&pivot[c..=k]) {
                *rj -= f * pj;
            }
        }
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][k] - s) / a[i][i];
    }
    Ok(x)
}

/// The μ_ε functional with a fixed anchor (τ*, y*).
#[derive(Debug, Clone)]
pub struct MuFunctional {
    pub params: NuParams,
    pub tau_star: f64,
    pub y_star: SampledPath,
}

impl PathFunctional for MuFunctional {
    fn value(&self, t: f64, x: &SampledPath) -> Result<f64> {
        nu(&self.params, t, x, self.tau_star, &self.y_star)
    }
}

/// Left side of the Lipschitz-via-ν inequality:
/// ‖Δ(T)‖ + ∫₀ᵀ ‖Δ(ξ)‖(T−ξ)^{α−1} dξ with Δ = a_x − a_y.
pub fn lipschitz_lhs(a: &SampledPath, b: &SampledPath) -> Result<f64> {
    let d: Vec<f64> = diff_sq(a, b).iter().map(|r| r.sqrt()).collect();
    Ok(d[d.len() - 1] + singular_integral(a.grid(), &d, 1.0 - a.alpha())?)
}

fn random_node<R: Rng>(rng: &mut R, max: usize) -> usize {
    rng.gen_range(0..=max)
}

/// Lipschitz-via-ν, ν-controls-distance, gradient-bound and gradient-symmetry
/// checks on random pairs from `paths`; gradient checks use t, τ ≤ T−θ.
pub fn lemma_harness<R: Rng>(
    params: &NuParams,
    paths: &[SampledPath],
    theta: f64,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<CheckReport>> {
    if paths.is_empty() {
        return Err(Error::Configuration("empty path sample set".into()));
    }
    let c2v = c2(params);
    let c3v = c3(params, theta)?;
    let c4v = c4(params, theta)?;
    let space = paths[0].space();
    let cells = space.cells();
    let nodes = space.grid().nodes();
    let last_inner = nodes
        .iter()
        .rposition(|&s| s <= params.horizon - theta + 1e-12 * params.horizon)
        .unwrap_or(0);
    let r = (params.q - 1.0) / params.q;
    let mut out = Vec::with_capacity(4 * trials);
    for trial in 0..trials {
        let i = rng.gen_range(0..paths.len());
        let j = rng.gen_range(0..paths.len());
        let (x, y) = (&paths[i], &paths[j]);

        let (mt, ms) = (random_node(rng, cells), random_node(rng, cells));
        let (t, tau) = (nodes[mt], nodes[ms]);
        let (a, b) = (x.freeze_at(mt), y.freeze_at(ms));
        let nuv = nu_frozen(params, &a, &b)?;
        let inputs = [trial as f64, i as f64, j as f64, t, tau, params.eps, params.alpha, params.beta];
        let lhs = lipschitz_lhs(&a, &b)?;
        let rhs = c2v * (nuv + params.c1 * params.e0).powf(1.0 / params.q);
        out.push(
            CheckReport::new("lipschitz_via_nu", Grade::Assertion, lhs, rhs, 1e-9 * (1.0 + rhs), &inputs)
                .with_detail(format!("C2={c2v:.6e} nu={nuv:.6e}")),
        );

        // ∫‖Δ‖^q (T−ξ)^{−p} + ‖Δ(T)‖^q ≤ ν + C₁ε^{q/(q−1)}
        let dq: Vec<f64> = diff_sq(&a, &b).iter().map(|r2| r2.powf(params.q / 2.0)).collect();
        let lhs = dq[dq.len() - 1] + singular_integral(a.grid(), &dq, params.p)?;
        let rhs = nuv + params.c1 * params.e0;
        out.push(CheckReport::new(
            "nu_controls_distance",
            Grade::Assertion,
            lhs,
            rhs,
            1e-12 * (1.0 + rhs),
            &inputs,
        ));

        let (mt, ms) = (random_node(rng, last_inner), random_node(rng, last_inner));
        let (t, tau) = (nodes[mt], nodes[ms]);
        let inputs = [trial as f64, i as f64, j as f64, t, tau, params.eps, params.alpha, theta];
        let g1 = mu_gradient(params, tau, y, t, x)?;
        let g2 = mu_gradient(params, t, x, tau, y)?;
        let (a, b) = (x.freeze_at(mt), y.freeze_at(ms));
        let nuv = nu_frozen(params, &a, &b)?;
        let lhs = vecops::norm(&g1.grad_alpha);
        let rhs = c3v * (nuv + params.c1 * params.e0).powf(r);
        out.push(
            CheckReport::new("gradient_bound", Grade::Assertion, lhs, rhs, 1e-9 * (1.0 + rhs), &inputs)
                .with_detail(format!("C3={c3v:.6e}")),
        );
        let sum: Vec<f64> = g1.grad_alpha.iter().zip(&g2.grad_alpha).map(|(u, v)| u + v).collect();
        let sup = a.sup_distance(&b)?;
        let lhs = vecops::norm(&sum);
        let rhs = c4v * (params.e2 + sup * sup).powf(0.5 * (params.q - 1.0)) * (t - tau).abs().powf(params.alpha);
        out.push(
            CheckReport::new("gradient_symmetry", Grade::Assertion, lhs, rhs, 1e-9 * (1.0 + rhs), &inputs)
                .with_detail(format!("C4={c4v:.6e}")),
        );
    }
    Ok(out)
}

/// Along y_s = x + s(z − x) with ε = s², s = 2^{-k}: reports the number of
/// steps on which the sup-distance of the freezes fails to decrease while ν
/// decreases.
pub fn nu_convergence_sequence(
    params: &NuParams,
    t: f64,
    x: &SampledPath,
    z: &SampledPath,
    steps: usize,
) -> Result<CheckReport> {
    params.check_space(x, z)?;
    let mut nus = Vec::with_capacity(steps);
    let mut dists = Vec::with_capacity(steps);
    for k in 1..=steps {
        let s = 0.5f64.powi(k as i32);
        let x0: Vec<f64> = x.x0().iter().zip(z.x0()).map(|(a, b)| a + s * (b - a)).collect();
        let f: Vec<f64> = x
            .caputo_flat()
            .iter()
            .zip(z.caputo_flat())
            .map(|(a, b)| a + s * (b - a))
            .collect();
        let y = SampledPath::from_flat(x.space().clone(), x0, f)?;
        let p = params.with_eps(s * s)?;
        nus.push(nu(&p, t, x, t, &y)?);
        dists.push(x.freeze(t)?.sup_distance(&y.freeze(t)?)?);
    }
    let bad = (1..steps)
        .filter(|&k| nus[k] < nus[k - 1] && dists[k] > dists[k - 1])
        .count();
    Ok(CheckReport::new(
        "nu_convergence_sequence",
        Grade::Diagnostic,
        bad as f64,
        0.0,
        0.0,
        &[t, params.alpha, params.beta, steps as f64],
    )
    .with_detail(format!("nu={nus:?} sup_dist={dists:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::PathSpace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> NuParams {
        NuParams::new(0.1, 0.5, Some(0.2), 1.0).unwrap()
    }

    fn path(n: usize, seed: f64) -> SampledPath {
        let sp = PathSpace::uniform(0.5, 1.0, n).unwrap();
        SampledPath::new(
            sp,
            vec![seed],
            (0..n).map(|j| vec![(j as f64 * 0.3 + seed).sin()]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn params_validation() {
        let p = params();
        assert!((p.q - 4.0 / 3.0).abs() < 1e-15);
        assert!((p.c1 - (1.0 + 1.0 / 0.6)).abs() < 1e-12);
        assert!(NuParams::new(0.1, 0.5, Some(0.3), 1.0).is_err());
        assert!(NuParams::new(0.0, 0.5, None, 1.0).is_err());
        assert!(NuParams::new(0.1, 1.0, None, 1.0).is_err());
        assert_eq!(NuParams::default_beta(0.5), 0.125);
    }

    #[test]
    fn nu_vanishes_on_diagonal_and_is_symmetric() {
        let p = params();
        let x = path(32, 0.2);
        let y = path(32, 1.1);
        assert_eq!(nu(&p, 0.5, &x, 0.5, &x).unwrap(), 0.0);
        let a = nu(&p, 0.25, &x, 0.75, &y).unwrap();
        let b = nu(&p, 0.75, &y, 0.25, &x).unwrap();
        assert!(a > 0.0);
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn nu_of_constant_offset() {
        // constant Δ = c: ν = ((e2+c²)^{q/2} − e0)·C1 exactly in the closed form
        let p = params();
        let sp = PathSpace::uniform(0.5, 1.0, 16).unwrap();
        let x = SampledPath::constant(sp.clone(), vec![0.0]).unwrap();
        let y = SampledPath::constant(sp, vec![0.3]).unwrap();
        let v = nu(&p, 0.5, &x, 0.5, &y).unwrap();
        let expect = ((p.e2 + 0.09).powf(p.q / 2.0) - p.e0) * p.c1;
        assert!((v - expect).abs() < 1e-12, "{v} {expect}");
    }

    #[test]
    fn freeze_invariance_exact() {
        let p = params();
        let x = path(32, 0.2);
        let y = path(32, 1.1);
        let r = freeze_invariance_check(&p, 0.25, &x, 0.5, &y, 0.25, 0.5).unwrap();
        assert_eq!(r.lhs, 0.0);
        let r = freeze_invariance_check(&p, 0.25, &x, 0.5, &y, 1.0, 1.0).unwrap();
        assert!(r.pass, "{}", r.lhs);
        assert!(freeze_invariance_check(&p, 0.5, &x, 0.5, &y, 0.25, 1.0).is_err());
    }

    #[test]
    fn constants_reference_values() {
        let p = params();
        assert!((c2(&p) - (1.0 + 1.0 / 0.2f64.powf(0.25))).abs() < 1e-12);
        assert!((c2(&p) - 2.4953).abs() < 1e-4);
        assert!(c3(&p, 0.25).unwrap() > c3(&p, 0.5).unwrap());
        assert!(c3(&p, 0.0).is_err());
        assert!(c4(&p, 1.0).is_err());
        assert!(a1(&p, 0.5).unwrap() > 0.0);
    }

    #[test]
    fn gradient_vanishes_when_freezes_agree() {
        let p = params();
        let x = path(32, 0.2);
        let g = mu_gradient(&p, 0.5, &x, 0.5, &x).unwrap();
        assert_eq!(g.dt_alpha, 0.0);
        assert!(vecops::norm(&g.grad_alpha) == 0.0);
        assert!(mu_gradient(&p, 0.5, &x, 1.0, &x).is_err());
    }

    #[test]
    fn fd_constant_and_linear_terminal() {
        let x = path(256, 0.4);
        let c = |_t: f64, _x: &SampledPath| -> Result<f64> { Ok(3.0) };
        let e = ci_derivative_fd(&c, 0.25, &x, 1.0 / 64.0, 1.0).unwrap();
        assert_eq!(e.pair.dt_alpha, 0.0);
        assert_eq!(e.pair.grad_alpha, vec![0.0]);

        // φ = s·a_x(T): gradient s/(Γ(α)(T−t)^{1−α})
        let s = 1.7;
        let phi = move |t: f64, x: &SampledPath| -> Result<f64> { Ok(s * x.freeze(t)?.eval(1.0)?[0]) };
        let e = ci_derivative_fd(&phi, 0.25, &x, 1.0 / 128.0, 1.0).unwrap();
        let exact = s / (gamma_fn(0.5).unwrap() * 0.75f64.sqrt());
        let rel = (e.pair.grad_alpha[0] - exact).abs() / exact;
        assert!(rel < 1e-2, "{rel}");
        assert!(e.pair.dt_alpha.abs() < 1e-9);
    }

    #[test]
    fn fd_rejects_short_step() {
        let x = path(64, 0.4);
        let c = |_t: f64, _x: &SampledPath| -> Result<f64> { Ok(0.0) };
        assert!(ci_derivative_fd(&c, 0.25, &x, 1.0 / 64.0, 1.0).is_err());
        assert!(matches!(
            ci_derivative_fd(&c, 0.25, &x, 1.0 / 32.0, 0.0),
            Err(Error::Conditioning(_))
        ));
    }

    #[test]
    fn harness_has_no_violations() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sp = PathSpace::uniform(0.5, 1.0, 64).unwrap();
        let lib = crate::library::sample_library(
            &sp,
            1,
            1.0,
            &crate::library::LibrarySpec::default(),
            &mut rng,
        )
        .unwrap();
        let reps = lemma_harness(&p, &lib, 0.25, 10, &mut rng).unwrap();
        assert_eq!(reps.len(), 40);
        for r in &reps {
            assert!(r.pass, "{r:?}");
        }
        let d = nu_convergence_sequence(&p, 0.5, &lib[0], &lib[1], 6).unwrap();
        assert_eq!(d.lhs, 0.0, "{d:?}");
    }
}
