//! Finite path libraries standing in for the compact sets X_k.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{PathSpace, SampledPath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibrarySpec {
    /// Number of random base paths.
    pub paths: usize,
    /// The index k of X_k.
    pub k: f64,
    /// Piecewise-constant blocks per path.
    #[serde(default = "default_blocks")]
    pub blocks: usize,
}

fn default_blocks() -> usize {
    8
}

impl Default for LibrarySpec {
    fn default() -> Self {
        LibrarySpec {
            paths: 16,
            k: 1.0,
            blocks: default_blocks(),
        }
    }
}

/// A random member of X_k: ‖x(0)‖ ≤ k, Caputo samples constant on `blocks`
/// near-equal blocks of cells with ‖f‖ ≤ k c_*.
pub fn random_path<R: Rng>(
    space: &Arc<PathSpace>,
    dim: usize,
    k: f64,
    c_star: f64,
    blocks: usize,
    rng: &mut R,
) -> Result<SampledPath> {
    if !(k > 0.0) || !(c_star > 0.0) || blocks == 0 || dim == 0 {
        return Err(Error::domain("library needs k, c_*, blocks and dim positive"));
    }
    let cells = space.cells();
    let blocks = blocks.min(cells);
    let x0 = random_in_ball(dim, k, rng);
    let mut caputo = Vec::with_capacity(cells * dim);
    for b in 0..blocks {
        let lo = b * cells / blocks;
        let hi = (b + 1) * cells / blocks;
        let f = random_in_ball(dim, k * c_star, rng);
        for _ in lo..hi {
            caputo.extend_from_slice(&f);
        }
    }
    SampledPath::from_flat(space.clone(), x0, caputo)
}

fn random_in_ball<R: Rng>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let nv = crate::vecops::norm(&v);
    let r = radius * rng.gen::<f64>();
    if nv == 0.0 {
        return v;
    }
    v.iter().map(|x| x * r / nv).collect()
}

/// `spec.paths` random X_k members.
pub fn sample_library<R: Rng>(
    space: &Arc<PathSpace>,
    dim: usize,
    c_star: f64,
    spec: &LibrarySpec,
    rng: &mut R,
) -> Result<Vec<SampledPath>> {
    (0..spec.paths)
        .map(|_| random_path(space, dim, spec.k, c_star, spec.blocks, rng))
        .collect()
}

/// Adds freeze(x, τ_m) for every base path and every node index in `nodes`.
/// The result is closed under freezing at those nodes.
pub fn freeze_closure(base: &[SampledPath], nodes: &[usize]) -> Vec<SampledPath> {
    let mut out: Vec<SampledPath> = base.to_vec();
    for x in base {
        for &m in nodes {
            let a = x.freeze_at(m);
            if !out.contains(&a) {
                out.push(a);
            }
        }
    }
    out
}
