//! Trajectory simulation and brute-force upper/lower values on control
//! scenario trees.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::GameDynamics;
use crate::error::{Error, Result};
use crate::paths::{PathFunctional, PathSpace, SampledPath};
use crate::vecops;

/// States at or beyond this norm abort the branch.
pub const OVERFLOW_GUARD: f64 = 1e6;

/// Largest admissible number of tree leaves (|P||Q|)^K.
pub const TREE_BUDGET: f64 = 1e7;

/// Per-cell control choices on a coarse decision grid; `boundaries` are fine
/// node indices, `u[k]` and `v[k]` index into P and Q on decision cell k.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ControlSchedule {
    pub boundaries: Vec<usize>,
    pub u: Vec<usize>,
    pub v: Vec<usize>,
}

impl ControlSchedule {
    pub fn new(boundaries: Vec<usize>, u: Vec<usize>, v: Vec<usize>) -> Result<Self> {
        let k = boundaries.len().saturating_sub(1);
        if boundaries.is_empty() || u.len() != k || v.len() != k {
            return Err(Error::Dimension {
                expected: k,
                found: u.len().min(v.len()),
            });
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("decision boundaries must increase"));
        }
        Ok(ControlSchedule { boundaries, u, v })
    }

    pub fn steps(&self) -> usize {
        self.u.len()
    }
}

/// Decision boundaries splitting the fine cells [start, N] into `k` near-equal steps.
pub fn split_boundaries(start: usize, cells: usize, k: usize) -> Result<Vec<usize>> {
    if start > cells {
        return Err(Error::domain("start node beyond the grid"));
    }
    let rem = cells - start;
    if rem == 0 {
        return Ok(vec![cells]);
    }
    if k == 0 || k > rem {
        return Err(Error::domain(format!(
            "cannot split {rem} fine cells into {k} decision steps"
        )));
    }
    Ok((0..=k)
        .map(|i| start + (i * rem + k / 2) / k)
        .map(|b| b.min(cells))
        .collect())
}

/// Global decision grid of `k` steps on [0, T]; the value at node i starts
/// with a partial step up to the next decision node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecisionGrid {
    pub nodes: Vec<usize>,
}

impl DecisionGrid {
    pub fn new(cells: usize, k: usize) -> Result<Self> {
        Ok(DecisionGrid {
            nodes: split_boundaries(0, cells, k)?,
        })
    }

    pub fn boundaries_from(&self, start: usize) -> Vec<usize> {
        let mut b = vec![start];
        b.extend(self.nodes.iter().copied().filter(|&d| d > start));
        b
    }
}

// Mutable simulation state: Caputo samples of cells 0..i and states at nodes 0..=i.
#[derive(Clone)]
struct Trace {
    caputo: Vec<f64>,
    states: Vec<f64>,
}

impl Trace {
    fn from_base(base: &SampledPath, start: usize) -> Self {
        let n = base.dim();
        Trace {
            caputo: base.caputo_flat()[..start * n].to_vec(),
            states: base.node_states()[..(start + 1) * n].to_vec(),
        }
    }

    fn truncate(&mut self, node: usize, n: usize) {
        self.caputo.truncate(node * n);
        self.states.truncate((node + 1) * n);
    }
}

struct Sim<'a> {
    dynamics: &'a GameDynamics,
    space: &'a Arc<PathSpace>,
    x0: &'a [f64],
    n: usize,
}

impl<'a> Sim<'a> {
    fn new(dynamics: &'a GameDynamics, base: &'a SampledPath) -> Result<Self> {
        if base.dim() != dynamics.dim() {
            return Err(Error::Dimension {
                expected: dynamics.dim(),
                found: base.dim(),
            });
        }
        Ok(Sim {
            dynamics,
            space: base.space(),
            x0: base.x0(),
            n: base.dim(),
        })
    }

    // next state x0 + Σ_{j ≤ i} w[i+1][j] f_j
    fn next_state(&self, caputo: &[f64], i: usize) -> Vec<f64> {
        let row = self.space.weights().row(i + 1);
        let mut y = self.x0.to_vec();
        for (j, &w) in row.iter().enumerate() {
            vecops::axpy(w, &caputo[j * self.n..(j + 1) * self.n], &mut y);
        }
        y
    }

    /// Explicit fractional Euler over cells [from, to) with fixed controls;
    /// returns the trapezoid running cost over the segment.
    fn advance(&self, tr: &mut Trace, from: usize, to: usize, u: &[f64], v: &[f64]) -> Result<f64> {
        let n = self.n;
        let nodes = self.space.grid().nodes();
        let mut run = 0.0;
        for i in from..to {
            let t = nodes[i];
            let y = tr.states[i * n..(i + 1) * n].to_vec();
            let f = self.dynamics.f(t, &y, u, v);
            tr.caputo.extend_from_slice(&f);
            let y1 = self.next_state(&tr.caputo, i);
            if y1.iter().any(|v| !v.is_finite()) || vecops::norm(&y1) >= OVERFLOW_GUARD {
                return Err(Error::Divergence(format!(
                    "state norm reached the overflow guard at t={}",
                    nodes[i + 1]
                )));
            }
            let h = nodes[i + 1] - t;
            run += 0.5
                * h
                * (self.dynamics.chi(t, &y, u, v) + self.dynamics.chi(nodes[i + 1], &y1, u, v));
            tr.states.extend_from_slice(&y1);
        }
        Ok(run)
    }

    fn path_of(&self, mut tr: Trace) -> Result<SampledPath> {
        tr.caputo.resize(self.space.cells() * self.n, 0.0);
        SampledPath::from_flat(self.space.clone(), self.x0.to_vec(), tr.caputo)
    }
}

/// Fractional explicit Euler from node `t` under `sched`; the history before
/// `t` is taken from `base` and the realized f samples become the path's
/// Caputo derivative.
pub fn simulate(
    dynamics: &GameDynamics,
    base: &SampledPath,
    t: f64,
    sched: &ControlSchedule,
) -> Result<SampledPath> {
    let start = base.space().node_index(t)?;
    check_schedule(dynamics, base, start, sched)?;
    let sim = Sim::new(dynamics, base)?;
    let mut tr = Trace::from_base(base, start);
    for k in 0..sched.steps() {
        sim.advance(
            &mut tr,
            sched.boundaries[k],
            sched.boundaries[k + 1],
            &dynamics.p[sched.u[k]],
            &dynamics.q[sched.v[k]],
        )?;
    }
    sim.path_of(tr)
}

fn check_schedule(
    dynamics: &GameDynamics,
    base: &SampledPath,
    start: usize,
    sched: &ControlSchedule,
) -> Result<()> {
    if sched.boundaries[0] != start || *sched.boundaries.last().unwrap() != base.cells() {
        return Err(Error::domain(
            "schedule must start at t and end at the final grid node",
        ));
    }
    if sched.u.iter().any(|&i| i >= dynamics.p.len()) || sched.v.iter().any(|&j| j >= dynamics.q.len())
    {
        return Err(Error::domain("control index outside the control grid"));
    }
    Ok(())
}

/// Bolza cost σ(traj) + ∫ₜᵀ χ dτ, the integral by the trapezoid rule on the fine grid.
pub fn cost(
    dynamics: &GameDynamics,
    traj: &SampledPath,
    t: f64,
    sched: &ControlSchedule,
) -> Result<f64> {
    let start = traj.space().node_index(t)?;
    check_schedule(dynamics, traj, start, sched)?;
    let nodes = traj.grid().nodes();
    let mut run = 0.0;
    for k in 0..sched.steps() {
        let (u, v) = (&dynamics.p[sched.u[k]], &dynamics.q[sched.v[k]]);
        for i in sched.boundaries[k]..sched.boundaries[k + 1] {
            let h = nodes[i + 1] - nodes[i];
            run += 0.5
                * h
                * (dynamics.chi(nodes[i], traj.node_state(i), u, v)
                    + dynamics.chi(nodes[i + 1], traj.node_state(i + 1), u, v));
        }
    }
    Ok(dynamics.sigma(traj) + run)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Upper,
    Lower,
}

/// Result of the exhaustive scenario-tree search.
#[derive(Debug, Clone, Serialize)]
pub struct ValueTree {
    pub boundaries: Vec<usize>,
    pub upper_value: f64,
    pub lower_value: f64,
    pub upper_schedule: ControlSchedule,
    pub lower_schedule: ControlSchedule,
    #[serde(skip)]
    pub upper_path: SampledPath,
    #[serde(skip)]
    pub lower_path: SampledPath,
}

impl ValueTree {
    pub fn value(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Upper => self.upper_value,
            Mode::Lower => self.lower_value,
        }
    }

    /// Width of the bracket between the two commitment orders.
    pub fn bracket(&self) -> f64 {
        self.upper_value - self.lower_value
    }
}

struct NodeVal {
    upper: f64,
    lower: f64,
    // principal variations as (u, v) pairs from this node down
    upper_pv: Vec<(usize, usize)>,
    lower_pv: Vec<(usize, usize)>,
}

fn tree_budget(dynamics: &GameDynamics, steps: usize) -> Result<()> {
    let required = ((dynamics.p.len() * dynamics.q.len()) as f64).powi(steps as i32);
    if required > TREE_BUDGET {
        return Err(Error::Budget {
            required,
            limit: TREE_BUDGET,
        });
    }
    Ok(())
}

fn combine(children: Vec<(f64, NodeVal)>, np: usize, nq: usize) -> NodeVal {
    // children in (u, v) row-major order, each with its step cost
    let mut upper = f64::INFINITY;
    let mut up = (0, 0);
    for i in 0..np {
        let mut best = f64::NEG_INFINITY;
        let mut bj = 0;
        for j in 0..nq {
            let (c, ch) = &children[i * nq + j];
            let val = c + ch.upper;
            if val > best {
                best = val;
                bj = j;
            }
        }
        if best < upper {
            upper = best;
            up = (i, bj);
        }
    }
    let mut lower = f64::NEG_INFINITY;
    let mut lo = (0, 0);
    for j in 0..nq {
        let mut best = f64::INFINITY;
        let mut bi = 0;
        for i in 0..np {
            let (c, ch) = &children[i * nq + j];
            let val = c + ch.lower;
            if val < best {
                best = val;
                bi = i;
            }
        }
        if best > lower {
            lower = best;
            lo = (bi, j);
        }
    }
    let mut upper_pv = vec![up];
    upper_pv.extend_from_slice(&children[up.0 * nq + up.1].1.upper_pv);
    let mut lower_pv = vec![lo];
    lower_pv.extend_from_slice(&children[lo.0 * nq + lo.1].1.lower_pv);
    NodeVal {
        upper,
        lower,
        upper_pv,
        lower_pv,
    }
}

fn recurse(sim: &Sim, tr: &mut Trace, bounds: &[usize], parallel: bool) -> Result<NodeVal> {
    let n = sim.n;
    if bounds.len() == 1 {
        let last = bounds[0];
        let sigma = sim
            .dynamics
            .sigma_terminal(&tr.states[last * n..(last + 1) * n]);
        return Ok(NodeVal {
            upper: sigma,
            lower: sigma,
            upper_pv: Vec::new(),
            lower_pv: Vec::new(),
        });
    }
    let (from, to) = (bounds[0], bounds[1]);
    let np = sim.dynamics.p.len();
    let nq = sim.dynamics.q.len();
    let branch = |idx: usize, tr: &mut Trace| -> Result<(f64, NodeVal)> {
        let (i, j) = (idx / nq, idx % nq);
        tr.truncate(from, n);
        let c = sim.advance(tr, from, to, &sim.dynamics.p[i], &sim.dynamics.q[j])?;
        let child = recurse(sim, tr, &bounds[1..], false)?;
        Ok((c, child))
    };
    let children: Vec<(f64, NodeVal)> = if parallel {
        (0..np * nq)
            .into_par_iter()
            .map(|idx| {
                let mut local = tr.clone();
                branch(idx, &mut local)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let mut out = Vec::with_capacity(np * nq);
        for idx in 0..np * nq {
            out.push(branch(idx, tr)?);
        }
        out
    };
    tr.truncate(from, n);
    Ok(combine(children, np, nq))
}

/// Upper and lower values on the tree with the given decision boundaries.
pub fn value_on(
    dynamics: &GameDynamics,
    base: &SampledPath,
    boundaries: &[usize],
) -> Result<ValueTree> {
    if boundaries.is_empty() || *boundaries.last().unwrap() != base.cells() {
        return Err(Error::domain("decision boundaries must end at the final node"));
    }
    tree_budget(dynamics, boundaries.len() - 1)?;
    let sim = Sim::new(dynamics, base)?;
    let mut tr = Trace::from_base(base, boundaries[0]);
    let root = recurse(&sim, &mut tr, boundaries, boundaries.len() > 2)?;
    let sched = |pv: &[(usize, usize)]| ControlSchedule {
        boundaries: boundaries.to_vec(),
        u: pv.iter().map(|p| p.0).collect(),
        v: pv.iter().map(|p| p.1).collect(),
    };
    let upper_schedule = sched(&root.upper_pv);
    let lower_schedule = sched(&root.lower_pv);
    let t = base.grid().node(boundaries[0]);
    let upper_path = simulate(dynamics, base, t, &upper_schedule)?;
    let lower_path = simulate(dynamics, base, t, &lower_schedule)?;
    Ok(ValueTree {
        boundaries: boundaries.to_vec(),
        upper_value: root.upper,
        lower_value: root.lower,
        upper_schedule,
        lower_schedule,
        upper_path,
        lower_path,
    })
}

/// Upper/lower values from node `t` with `k` near-equal decision steps.
pub fn value(dynamics: &GameDynamics, base: &SampledPath, t: f64, k: usize) -> Result<ValueTree> {
    let start = base.space().node_index(t)?;
    let bounds = split_boundaries(start, base.cells(), k)?;
    value_on(dynamics, base, &bounds)
}

/// Recomputes the first step of the recursion from independently built child
/// trees and returns the largest discrepancy over both modes.
pub fn dpp_residual(dynamics: &GameDynamics, base: &SampledPath, t: f64, k: usize) -> Result<f64> {
    let start = base.space().node_index(t)?;
    let bounds = split_boundaries(start, base.cells(), k)?;
    let root = value_on(dynamics, base, &bounds)?;
    if bounds.len() == 1 {
        return Ok((root.upper_value - dynamics.sigma(base)).abs());
    }
    let sim = Sim::new(dynamics, base)?;
    let np = dynamics.p.len();
    let nq = dynamics.q.len();
    let mut children = Vec::with_capacity(np * nq);
    for i in 0..np {
        for j in 0..nq {
            let mut tr = Trace::from_base(base, start);
            let c = sim.advance(&mut tr, bounds[0], bounds[1], &dynamics.p[i], &dynamics.q[j])?;
            let child_path = sim.path_of(tr)?;
            let sub = value_on(dynamics, &child_path, &bounds[1..])?;
            children.push((
                c,
                NodeVal {
                    upper: sub.upper_value,
                    lower: sub.lower_value,
                    upper_pv: Vec::new(),
                    lower_pv: Vec::new(),
                },
            ));
        }
    }
    let re = combine(children, np, nq);
    Ok((root.upper_value - re.upper)
        .abs()
        .max((root.lower_value - re.lower).abs()))
}

/// The tree value as a non-anticipative functional: from node t the tree uses
/// the remaining nodes of a fixed global decision grid.
#[derive(Debug, Clone)]
pub struct TreeValue {
    pub dynamics: Arc<GameDynamics>,
    pub decisions: DecisionGrid,
    pub mode: Mode,
}

impl TreeValue {
    pub fn new(dynamics: Arc<GameDynamics>, cells: usize, k: usize, mode: Mode) -> Result<Self> {
        Ok(TreeValue {
            dynamics,
            decisions: DecisionGrid::new(cells, k)?,
            mode,
        })
    }

    pub fn tree(&self, t: f64, x: &SampledPath) -> Result<ValueTree> {
        let start = x.space().node_index(t)?;
        value_on(&self.dynamics, x, &self.decisions.boundaries_from(start))
    }
}

impl PathFunctional for TreeValue {
    fn value(&self, t: f64, x: &SampledPath) -> Result<f64> {
        Ok(self.tree(t, x)?.value(self.mode))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

/// Greedy search in Y_*(t, x) for the trajectory required by (M+) or (M−).
///
/// Each cell picks, among the realized velocities f(τ, y, u, v) and zero (all
/// scaled into the ball of radius c_*(1 + ‖y‖)), the sample that minimizes
/// (M+) or maximizes (M−) the running quantity
/// φ(τ, y) − ∫ₜ^τ (⟨s, D^α y⟩ − H(ξ, y(ξ), s)) dξ.
/// The residual is the worst violation of the property; a value ≤ 0 verifies it.
pub fn minimax_witness(
    phi: &dyn PathFunctional,
    dynamics: &GameDynamics,
    t: f64,
    base: &SampledPath,
    s: &[f64],
    sign: Sign,
) -> Result<(SampledPath, f64)> {
    let ham = |tau: f64, y: &[f64], s: &[f64]| dynamics.h(tau, y, s);
    let cands = |tau: f64, y: &[f64]| {
        let mut out = Vec::with_capacity(dynamics.p.len() * dynamics.q.len() + 1);
        for u in &dynamics.p {
            for v in &dynamics.q {
                out.push(dynamics.f(tau, y, u, v));
            }
        }
        out.push(vec![0.0; y.len()]);
        out
    };
    minimax_witness_with(phi, &ham, &cands, dynamics.c_star, t, base, s, sign)
}

/// H(t, y, s).
pub type HamiltonianFn<'a> = &'a dyn Fn(f64, &[f64], &[f64]) -> f64;
/// Candidate Caputo values at (t, y).
pub type CandidateFn<'a> = &'a dyn Fn(f64, &[f64]) -> Vec<Vec<f64>>;

/// [`minimax_witness`] with an explicit Hamiltonian and candidate generator.
#[allow(clippy::too_many_arguments)]
pub fn minimax_witness_with(
    phi: &dyn PathFunctional,
    ham: HamiltonianFn<'_>,
    candidates: CandidateFn<'_>,
    c_star: f64,
    t: f64,
    base: &SampledPath,
    s: &[f64],
    sign: Sign,
) -> Result<(SampledPath, f64)> {
    let start = base.space().node_index(t)?;
    let n = base.dim();
    let space = base.space().clone();
    let nodes = space.grid().nodes().to_vec();
    let cells = space.cells();
    let phi0 = phi.value(t, base)?;
    let dir = match sign {
        Sign::Plus => 1.0,
        Sign::Minus => -1.0,
    };
    let mut caputo = base.caputo_flat()[..start * n].to_vec();
    caputo.resize(cells * n, 0.0);
    let mut y_state = base.node_state(start).to_vec();
    let mut integral = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for i in start..cells {
        let tau = nodes[i];
        let h = nodes[i + 1] - tau;
        let cand = candidates(tau, &y_state);
        if cand.is_empty() {
            return Err(Error::Configuration("empty candidate set".into()));
        }
        let bound = c_star * (1.0 + vecops::norm(&y_state));
        let h0 = ham(tau, &y_state, s);
        let mut best: Option<(f64, Vec<f64>, Vec<f64>, f64)> = None;
        for f in cand {
            let nf = vecops::norm(&f);
            let f = if nf > bound { vecops::scale(bound / nf, &f) } else { f };
            caputo[i * n..(i + 1) * n].copy_from_slice(&f);
            let trial = SampledPath::from_flat(space.clone(), base.x0().to_vec(), caputo.clone())?;
            let y1 = trial.node_state(i + 1).to_vec();
            let step = h * vecops::dot(s, &f) - 0.5 * h * (h0 + ham(nodes[i + 1], &y1, s));
            let running = phi.value(nodes[i + 1], &trial)? - (integral + step);
            // Plus minimizes, Minus maximizes; the first candidate wins ties
            let key = dir * running;
            if best.as_ref().is_none_or(|b| key < b.0) {
                best = Some((key, f, y1, step));
            }
        }
        let (key, f, y1, step) = best.expect("candidate set is nonempty");
        caputo[i * n..(i + 1) * n].copy_from_slice(&f);
        integral += step;
        y_state = y1;
        worst = worst.max(key - dir * phi0);
    }
    let path = SampledPath::from_flat(space, base.x0().to_vec(), caputo)?;
    Ok((path, if start == cells { 0.0 } else { worst }))
}
