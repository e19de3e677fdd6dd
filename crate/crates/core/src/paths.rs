//! The path space AC^α with paths stored through their Caputo derivative.
//!
//! A [`SampledPath`] holds x(0) and one Caputo sample per grid cell, so
//! x(τ) = x(0) + I^α f (τ) is evaluated exactly by cell moments.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraccalc::{cell_moment, gamma_fn, ConvolutionWeights, Grid};
use crate::vecops;

/// Order, grid and the precomputed weights shared by every path on that grid.
#[derive(Debug)]
pub struct PathSpace {
    alpha: f64,
    grid: Grid,
    gamma_a: f64,
    gamma_a1: f64,
    weights: ConvolutionWeights,
}

impl PathSpace {
    pub fn new(alpha: f64, grid: Grid) -> Result<Arc<Self>> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("order must lie in (0, 1), got {alpha}")));
        }
        let weights = ConvolutionWeights::new(&grid, alpha)?;
        Ok(Arc::new(PathSpace {
            alpha,
            gamma_a: gamma_fn(alpha)?,
            gamma_a1: gamma_fn(alpha + 1.0)?,
            grid,
            weights,
        }))
    }

    pub fn uniform(alpha: f64, horizon: f64, cells: usize) -> Result<Arc<Self>> {
        PathSpace::new(alpha, Grid::uniform(horizon, cells)?)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn cells(&self) -> usize {
        self.grid.cells()
    }

    /// Γ(α).
    pub fn gamma_a(&self) -> f64 {
        self.gamma_a
    }

    /// Γ(α + 1).
    pub fn gamma_a1(&self) -> f64 {
        self.gamma_a1
    }

    pub fn weights(&self) -> &ConvolutionWeights {
        &self.weights
    }

    /// Index of the node at time `t`, or an alignment error.
    pub fn node_index(&self, t: f64) -> Result<usize> {
        self.grid.node_index(t)
    }

    pub fn same_as(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other) || (self.alpha == other.alpha && self.grid == other.grid)
    }
}

/// Non-anticipative functional on [0, T] × AC^α.
pub trait PathFunctional: Send + Sync {
    fn value(&self, t: f64, x: &SampledPath) -> Result<f64>;
}

impl<F> PathFunctional for F
where
    F: Fn(f64, &SampledPath) -> Result<f64> + Send + Sync,
{
    fn value(&self, t: f64, x: &SampledPath) -> Result<f64> {
        self(t, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XkMembership {
    pub k: f64,
    pub c_star: f64,
    pub verdict: bool,
    pub worst_margin: f64,
}

#[derive(Debug)]
pub struct SampledPath {
    space: Arc<PathSpace>,
    dim: usize,
    x0: Vec<f64>,
    // cell-major, `dim` entries per cell
    caputo: Vec<f64>,
    states: OnceLock<Vec<f64>>,
}

impl Clone for SampledPath {
    fn clone(&self) -> Self {
        let states = OnceLock::new();
        if let Some(s) = self.states.get() {
            let _ = states.set(s.clone());
        }
        SampledPath {
            space: self.space.clone(),
            dim: self.dim,
            x0: self.x0.clone(),
            caputo: self.caputo.clone(),
            states,
        }
    }
}

impl PartialEq for SampledPath {
    fn eq(&self, other: &Self) -> bool {
        self.space.same_as(&other.space) && self.x0 == other.x0 && self.caputo == other.caputo
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathJson {
    alpha: f64,
    x0: Vec<f64>,
    nodes: Vec<f64>,
    caputo: Vec<Vec<f64>>,
}

impl SampledPath {
    pub fn new(space: Arc<PathSpace>, x0: Vec<f64>, caputo: Vec<Vec<f64>>) -> Result<Self> {
        let dim = x0.len();
        if caputo.len() != space.cells() {
            return Err(Error::Dimension {
                expected: space.cells(),
                found: caputo.len(),
            });
        }
        let mut flat = Vec::with_capacity(dim * caputo.len());
        for f in &caputo {
            if f.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: f.len(),
                });
            }
            flat.extend_from_slice(f);
        }
        SampledPath::from_flat(space, x0, flat)
    }

    pub fn from_flat(space: Arc<PathSpace>, x0: Vec<f64>, caputo: Vec<f64>) -> Result<Self> {
        let dim = x0.len();
        if dim == 0 {
            return Err(Error::domain("state dimension must be positive"));
        }
        if caputo.len() != dim * space.cells() {
            return Err(Error::Dimension {
                expected: dim * space.cells(),
                found: caputo.len(),
            });
        }
        if x0.iter().chain(&caputo).any(|v| !v.is_finite()) {
            return Err(Error::domain("path data must be finite"));
        }
        Ok(SampledPath {
            space,
            dim,
            x0,
            caputo,
            states: OnceLock::new(),
        })
    }

    /// The path with zero Caputo derivative, i.e. constant at `x0`.
    pub fn constant(space: Arc<PathSpace>, x0: Vec<f64>) -> Result<Self> {
        let len = x0.len() * space.cells();
        SampledPath::from_flat(space, x0, vec![0.0; len])
    }

    pub fn space(&self) -> &Arc<PathSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.space.alpha
    }

    pub fn grid(&self) -> &Grid {
        &self.space.grid
    }

    pub fn horizon(&self) -> f64 {
        self.space.horizon()
    }

    pub fn cells(&self) -> usize {
        self.space.cells()
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn caputo_flat(&self) -> &[f64] {
        &self.caputo
    }

    /// Caputo sample f_j of cell j.
    pub fn cell(&self, j: usize) -> &[f64] {
        &self.caputo[j * self.dim..(j + 1) * self.dim]
    }

    // one past the last cell with a nonzero sample
    fn active_cells(&self) -> usize {
        let mut j = self.cells();
        while j > 0 && self.cell(j - 1).iter().all(|&v| v == 0.0) {
            j -= 1;
        }
        j
    }

    /// States at all grid nodes, node-major.
    pub fn node_states(&self) -> &[f64] {
        self.states.get_or_init(|| {
            let n = self.dim;
            let rows = self.cells() + 1;
            let active = self.active_cells();
            let w = self.space.weights();
            let mut out = Vec::with_capacity(rows * n);
            for i in 0..rows {
                let mut x = self.x0.clone();
                let row = w.row(i);
                for (j, &wij) in row.iter().enumerate().take(active) {
                    vecops::axpy(wij, self.cell(j), &mut x);
                }
                out.extend_from_slice(&x);
            }
            out
        })
    }

    /// State at node i.
    pub fn node_state(&self, i: usize) -> &[f64] {
        &self.node_states()[i * self.dim..(i + 1) * self.dim]
    }

    /// Exact value of the representation at any τ ∈ [0, T].
    pub fn eval(&self, tau: f64) -> Result<Vec<f64>> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&tau) {
            return Err(Error::domain(format!("time {tau} outside [0, {horizon}]")));
        }
        Ok(self.eval_unchecked(tau))
    }

    pub(crate) fn eval_unchecked(&self, tau: f64) -> Vec<f64> {
        let nodes = self.grid().nodes();
        let mut x = self.x0.clone();
        let (alpha, g1) = (self.space.alpha, self.space.gamma_a1);
        for j in 0..self.cells().min(self.active_cells()) {
            if nodes[j] >= tau {
                break;
            }
            let m = cell_moment(alpha, g1, tau, nodes[j], nodes[j + 1]);
            vecops::axpy(m, self.cell(j), &mut x);
        }
        x
    }

    /// Stored Caputo derivative on the cell containing τ.
    pub fn caputo(&self, tau: f64) -> Result<&[f64]> {
        Ok(self.cell(self.grid().cell_index(tau)?))
    }

    /// Member of Y(t, x): same Caputo samples before `t`, `tail` on [t, T].
    pub fn extend(&self, t: f64, tail: &[Vec<f64>]) -> Result<SampledPath> {
        let m = self.space.node_index(t)?;
        if tail.len() != self.cells() - m {
            return Err(Error::Dimension {
                expected: self.cells() - m,
                found: tail.len(),
            });
        }
        let mut caputo = self.caputo[..m * self.dim].to_vec();
        for f in tail {
            if f.len() != self.dim {
                return Err(Error::Dimension {
                    expected: self.dim,
                    found: f.len(),
                });
            }
            caputo.extend_from_slice(f);
        }
        SampledPath::from_flat(self.space.clone(), self.x0.clone(), caputo)
    }

    /// The frozen continuation a(· | t, x).
    pub fn freeze(&self, t: f64) -> Result<SampledPath> {
        let m = self.space.node_index(t)?;
        Ok(self.freeze_at(m))
    }

    /// Frozen continuation at node index `m`.
    pub fn freeze_at(&self, m: usize) -> SampledPath {
        let mut caputo = self.caputo.clone();
        for v in &mut caputo[m * self.dim..] {
            *v = 0.0;
        }
        let out = SampledPath {
            space: self.space.clone(),
            dim: self.dim,
            x0: self.x0.clone(),
            caputo,
            states: OnceLock::new(),
        };
        if m == self.cells() {
            if let Some(s) = self.states.get() {
                let _ = out.states.set(s.clone());
            }
        }
        out
    }

    /// Maximum of ‖x(τ_i)‖ over the grid nodes.
    pub fn sup_norm(&self) -> f64 {
        self.max_norm_until(self.cells())
    }

    /// Maximum of ‖x(τ_i)‖ over nodes i ≤ m.
    pub fn max_norm_until(&self, m: usize) -> f64 {
        (0..=m)
            .map(|i| vecops::norm(self.node_state(i)))
            .fold(0.0, f64::max)
    }

    /// Maximum of ‖x(τ)‖ over [0, τ_m] sampled with `sub` points per cell.
    pub fn dense_max_norm_until(&self, m: usize, sub: usize) -> f64 {
        let nodes = self.grid().nodes();
        let mut best = self.max_norm_until(m);
        for j in 0..m {
            for k in 1..sub {
                let tau = nodes[j] + (nodes[j + 1] - nodes[j]) * k as f64 / sub as f64;
                best = best.max(vecops::norm(&self.eval_unchecked(tau)));
            }
        }
        best
    }

    /// Maximum distance over grid nodes; paths on different grids are compared
    /// on the union of both node sets.
    pub fn sup_distance(&self, other: &SampledPath) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: other.dim,
            });
        }
        if self.space.same_as(&other.space) {
            let a = self.node_states();
            let b = other.node_states();
            return Ok(a
                .chunks(self.dim)
                .zip(b.chunks(self.dim))
                .map(|(x, y)| vecops::dist(x, y))
                .fold(0.0, f64::max));
        }
        if self.horizon() != other.horizon() {
            return Err(Error::domain("paths live on different horizons"));
        }
        let mut nodes: Vec<f64> = self
            .grid()
            .nodes()
            .iter()
            .chain(other.grid().nodes())
            .copied()
            .collect();
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        Ok(nodes
            .iter()
            .map(|&t| vecops::dist(&self.eval_unchecked(t), &other.eval_unchecked(t)))
            .fold(0.0, f64::max))
    }

    /// Membership in X_k: ‖x(0)‖ ≤ k and ‖f_j‖ ≤ k c_*(1 + ‖x(τ_j)‖) on every cell.
    pub fn xk_check(&self, k: f64, c_star: f64) -> XkMembership {
        let init = vecops::norm(&self.x0) - k;
        let mut worst = f64::NEG_INFINITY;
        for j in 0..self.cells() {
            let bound = k * c_star * (1.0 + vecops::norm(self.node_state(j)));
            worst = worst.max(vecops::norm(self.cell(j)) - bound);
        }
        XkMembership {
            k,
            c_star,
            verdict: init <= 0.0 && worst <= 0.0,
            worst_margin: worst.max(init),
        }
    }

    pub fn to_json(&self) -> String {
        let doc = PathJson {
            alpha: self.alpha(),
            x0: self.x0.clone(),
            nodes: self.grid().nodes().to_vec(),
            caputo: self.caputo.chunks(self.dim).map(|c| c.to_vec()).collect(),
        };
        serde_json::to_string(&doc).expect("path serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<SampledPath> {
        let doc: PathJson =
            serde_json::from_str(text).map_err(|e| Error::Configuration(e.to_string()))?;
        let space = PathSpace::new(doc.alpha, Grid::new(doc.nodes)?)?;
        SampledPath::new(space, doc.x0, doc.caputo)
    }

    /// Same path placed on a different (but equal) space handle.
    pub fn with_space(&self, space: Arc<PathSpace>) -> Result<SampledPath> {
        if !self.space.same_as(&space) {
            return Err(Error::domain("target space differs in order or grid"));
        }
        SampledPath::from_flat(space, self.x0.clone(), self.caputo.clone())
    }
}
