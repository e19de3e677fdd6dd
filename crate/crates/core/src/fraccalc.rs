//! Special functions and product-integration rules for weakly singular kernels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{CheckReport, Grade};

/// Term budget of the Mittag-Leffler series.
pub const ML_TERM_BUDGET: usize = 512;

/// Γ(x) for x > 0.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("gamma requires x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::gamma(x))
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// B(a, b) = Γ(a)Γ(b)/Γ(a+b).
pub fn beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(format!(
            "beta requires positive arguments, got ({a}, {b})"
        )));
    }
    if a + b < 150.0 {
        Ok(gamma_fn(a)? * gamma_fn(b)? / gamma_fn(a + b)?)
    } else {
        Ok((ln_gamma(a)? + ln_gamma(b)? - ln_gamma(a + b)?).exp())
    }
}

/// E_α(z) = Σ z^k / Γ(αk + 1).
///
/// Summation stops once the current term is below `tol` (relative to the
/// partial sum when that exceeds one) and the terms have started to decay.
pub fn mittag_leffler(alpha: f64, z: f64, tol: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!(
            "Mittag-Leffler order must lie in (0, 1], got {alpha}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("Mittag-Leffler tolerance must be positive"));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let lz = z.abs().ln();
    let neg = z < 0.0;
    let mut sum = 1.0;
    let mut prev = 1.0;
    for k in 1..ML_TERM_BUDGET {
        let kf = k as f64;
        let mag = (kf * lz - ln_gamma(alpha * kf + 1.0)?).exp();
        let term = if neg && k % 2 == 1 { -mag } else { mag };
        sum += term;
        if mag < tol * sum.abs().max(1.0) && mag <= prev {
            return Ok(sum);
        }
        prev = mag;
    }
    Err(Error::Accuracy(format!(
        "Mittag-Leffler series for alpha={alpha}, z={z} did not reach tol={tol} within {ML_TERM_BUDGET} terms"
    )))
}

/// Strictly increasing time grid 0 = τ_0 < … < τ_N = T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nodes: Vec<f64>,
}

impl Grid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::domain("grid needs at least two nodes"));
        }
        if nodes[0] != 0.0 {
            return Err(Error::domain("first grid node must be exactly 0"));
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("grid nodes must be finite"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("grid nodes must be strictly increasing"));
        }
        Ok(Grid { nodes })
    }

    /// Uniform grid with `n` cells on [0, horizon]; the last node is exactly `horizon`.
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if n == 0 || !(horizon > 0.0) {
            return Err(Error::domain("uniform grid needs n >= 1 and T > 0"));
        }
        let mut nodes: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
        nodes[n] = horizon;
        Grid::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of cells N.
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Index of the node equal to `t` up to 1e-12·T.
    pub fn node_index(&self, t: f64) -> Result<usize> {
        let tol = 1e-12 * self.horizon();
        let i = self.nodes.partition_point(|&v| v < t - tol);
        if i < self.nodes.len() && (self.nodes[i] - t).abs() <= tol {
            Ok(i)
        } else {
            Err(Error::Alignment { time: t })
        }
    }

    /// Index j of the cell [τ_j, τ_{j+1}) containing `t`; `t = T` maps to the last cell.
    pub fn cell_index(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::domain(format!("time {t} outside [0, {horizon}]")));
        }
        let j = self.nodes.partition_point(|&v| v <= t);
        Ok(j.saturating_sub(1).min(self.cells() - 1))
    }
}

/// ((τ − a)^α − (τ − min(b, τ))^α) / Γ(α+1): the Riemann-Liouville integral at τ of
/// the indicator of [a, b).
#[inline]
pub fn cell_moment(alpha: f64, gamma_a1: f64, tau: f64, a: f64, b: f64) -> f64 {
    if tau <= a {
        return 0.0;
    }
    let hi = (tau - a).powf(alpha);
    let lo = if tau > b { (tau - b).powf(alpha) } else { 0.0 };
    (hi - lo) / gamma_a1
}

/// Lower-triangular Riemann-Liouville weights of a grid.
#[derive(Debug, Clone)]
pub struct ConvolutionWeights {
    order: f64,
    // row i holds entries j = 0..i, stored contiguously from offset i(i-1)/2
    data: Vec<f64>,
    rows: usize,
}

impl ConvolutionWeights {
    pub fn new(grid: &Grid, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::domain(format!("order must lie in (0, 1], got {alpha}")));
        }
        let g1 = gamma_fn(alpha + 1.0)?;
        let nodes = grid.nodes();
        let rows = nodes.len();
        let mut data = Vec::with_capacity(rows * (rows - 1) / 2);
        for i in 0..rows {
            let ti = nodes[i];
            for j in 0..i {
                data.push(cell_moment(alpha, g1, ti, nodes[j], nodes[j + 1]));
            }
        }
        Ok(ConvolutionWeights {
            order: alpha,
            data,
            rows,
        })
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    /// Weights w[i][0..i].
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let off = i * i.saturating_sub(1) / 2;
        &self.data[off..off + i]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// Product-integration weights for ∫ g(ξ)(b − ξ)^{-p} dξ over the given nodes,
/// where b is the last node and g is interpolated linearly between nodes.
pub fn right_singular_weights(nodes: &[f64], p: f64) -> Result<Vec<f64>> {
    if p >= 1.0 {
        return Err(Error::DivergentKernel(p));
    }
    let end = nodes[nodes.len() - 1];
    let mut w = vec![0.0; nodes.len()];
    for j in 0..nodes.len() - 1 {
        let (m0, lin) = cell_moments(end - nodes[j], end - nodes[j + 1], p);
        w[j] += m0 - lin;
        w[j + 1] += lin;
    }
    Ok(w)
}

/// Product-integration weights for ∫ g(ξ)(ξ − a)^{-p} dξ over the given nodes,
/// where a is the first node.
pub fn left_singular_weights(nodes: &[f64], p: f64) -> Result<Vec<f64>> {
    if p >= 1.0 {
        return Err(Error::DivergentKernel(p));
    }
    let start = nodes[0];
    let mut w = vec![0.0; nodes.len()];
    for j in 0..nodes.len() - 1 {
        // mirror of the right-endpoint case: the singular point is the left end
        let (m0, lin) = cell_moments(nodes[j + 1] - start, nodes[j] - start, p);
        w[j + 1] += m0 - lin;
        w[j] += lin;
    }
    Ok(w)
}

// For a cell at distance u ∈ [u1, u0] from the singular point (u1 < u0), returns
// M0 = ∫ u^{-p} and the moment of the hat that is 1 at u1 and 0 at u0.
fn cell_moments(u0: f64, u1: f64, p: f64) -> (f64, f64) {
    let h = u0 - u1;
    if h <= 0.0 {
        return (0.0, 0.0);
    }
    let e1 = 1.0 - p;
    let e2 = 2.0 - p;
    let pw = |u: f64, e: f64| if u > 0.0 { u.powf(e) } else { 0.0 };
    let m0 = (pw(u0, e1) - pw(u1, e1)) / e1;
    let m1 = (pw(u0, e2) - pw(u1, e2)) / e2;
    let lin = (u0 * m0 - m1) / h;
    (m0, lin)
}

/// ∫₀ᵀ g(ξ)(T − ξ)^{-p} dξ for node samples `g` on `grid`.
pub fn singular_integral(grid: &Grid, g: &[f64], p: f64) -> Result<f64> {
    if g.len() != grid.nodes().len() {
        return Err(Error::Dimension {
            expected: grid.nodes().len(),
            found: g.len(),
        });
    }
    let w = right_singular_weights(grid.nodes(), p)?;
    Ok(w.iter().zip(g).map(|(a, b)| a * b).sum())
}

/// Quadrature for ∫ₜᵀ G(ξ)(ξ − t)^{-pl}(T − ξ)^{-pr} dξ with sampled G.
///
/// The interval is split at its midpoint; each half uses nodes graded toward
/// its singular end and product weights against the nearer kernel, the other
/// kernel being folded into the weights.
#[derive(Debug, Clone)]
pub struct TwoSidedRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TwoSidedRule {
    pub fn new(t: f64, end: f64, pl: f64, pr: f64, per_half: usize) -> Result<Self> {
        if !(end > t) {
            return Err(Error::domain(format!("empty interval [{t}, {end}]")));
        }
        if pl >= 1.0 {
            return Err(Error::DivergentKernel(pl));
        }
        if pr >= 1.0 {
            return Err(Error::DivergentKernel(pr));
        }
        let m = per_half.max(2);
        let mid = 0.5 * (t + end);
        let half = mid - t;
        let grade = |p: f64| if p > 0.0 { (2.0 / (1.0 - p)).max(2.0) } else { 2.0 };
        let rl = grade(pl);
        let rr = grade(pr);

        let left: Vec<f64> = (0..=m)
            .map(|i| t + half * (i as f64 / m as f64).powf(rl))
            .collect();
        let mut right: Vec<f64> = (0..=m)
            .map(|i| end - (end - mid) * (i as f64 / m as f64).powf(rr))
            .collect();
        right.reverse();
        let mut left = left;
        left[m] = mid;
        right[0] = mid;

        let wl = left_singular_weights(&left, pl)?;
        let wr = right_singular_weights(&right, pr)?;

        let mut nodes = Vec::with_capacity(2 * m + 1);
        let mut weights = Vec::with_capacity(2 * m + 1);
        for (i, &xi) in left.iter().enumerate() {
            let other = if pr == 0.0 { 1.0 } else { (end - xi).powf(-pr) };
            nodes.push(xi);
            weights.push(wl[i] * other);
        }
        for (i, &xi) in right.iter().enumerate() {
            let other = if pl == 0.0 { 1.0 } else { (xi - t).powf(-pl) };
            if i == 0 {
                weights[m] += wr[0] * other;
            } else {
                nodes.push(xi);
                weights.push(wr[i] * other);
            }
        }
        Ok(TwoSidedRule { nodes, weights })
    }

    pub fn apply(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }
}

/// Compares ∫ₜᵀ (ξ−t)^{γ−1}(T−ξ)^{−(1−α−β)q} dξ computed by quadrature with its
/// beta-function closed form.
pub fn beta_identity_check(
    gamma: f64,
    t: f64,
    horizon: f64,
    alpha: f64,
    beta: f64,
    q: f64,
) -> Result<CheckReport> {
    let p = (1.0 - alpha - beta) * q;
    if p >= 1.0 {
        return Err(Error::DivergentKernel(p));
    }
    if !(gamma > 0.0 && gamma <= 1.0) || !(t >= 0.0 && t < horizon) {
        return Err(Error::domain(format!(
            "beta identity needs gamma in (0,1] and t in [0,T), got gamma={gamma}, t={t}"
        )));
    }
    let closed = beta_fn(gamma, 1.0 - p)? * (horizon - t).powf(gamma - p);
    let rule = TwoSidedRule::new(t, horizon, 1.0 - gamma, p, 256)?;
    let quad = rule.apply(|_| 1.0);
    let rel = (quad - closed).abs() / closed.abs();
    Ok(CheckReport::new(
        "beta_identity",
        Grade::Assertion,
        rel,
        1e-4,
        0.0,
        &[gamma, t, horizon, alpha, beta, q],
    )
    .with_detail(format!("quadrature={quad:.15e} closed_form={closed:.15e}")))
}
