//! Game data (f, χ, σ, P, Q), the Hamiltonian and checks of the standing
//! assumptions on them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::SampledPath;
use crate::report::{CheckReport, Grade};
use crate::vecops;

/// Terminal cost σ(x) as a function of x(T).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    /// ⟨w, x(T)⟩
    Linear(Vec<f64>),
    /// ‖x(T)‖
    Norm,
}

impl Terminal {
    fn eval(&self, xt: &[f64]) -> f64 {
        match self {
            Terminal::Linear(w) => vecops::dot(w, xt),
            Terminal::Norm => vecops::norm(xt),
        }
    }

    fn lipschitz(&self) -> f64 {
        match self {
            Terminal::Linear(w) => vecops::norm(w),
            Terminal::Norm => 1.0,
        }
    }
}

/// Built-in dynamics families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Catalog {
    /// f = a·y + b·u + c·v, χ = d·y + e_u·u + e_v·v.
    LinearScalar {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
        e_u: f64,
        e_v: f64,
        terminal: Terminal,
    },
    /// f = u − v, χ = 0, σ = |x(T)|.
    #[serde(rename = "pursuit_1d")]
    Pursuit1d,
    /// f_i = a_i y_i + b_i u_i + c_i v_i, χ = ⟨d, y⟩.
    #[serde(rename = "decoupled_2d")]
    Decoupled2d {
        a: [f64; 2],
        b: [f64; 2],
        c: [f64; 2],
        d: [f64; 2],
        terminal: Terminal,
    },
    /// f = a·y + b·u·v, χ = 0; controls interact, so the Isaacs condition can fail.
    BilinearScalar { a: f64, b: f64, terminal: Terminal },
}

impl Catalog {
    pub fn id(&self) -> &'static str {
        match self {
            Catalog::LinearScalar { .. } => "linear_scalar",
            Catalog::Pursuit1d => "pursuit_1d",
            Catalog::Decoupled2d { .. } => "decoupled_2d",
            Catalog::BilinearScalar { .. } => "bilinear_scalar",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Catalog::Decoupled2d { .. } => 2,
            _ => 1,
        }
    }

    fn control_dim(&self) -> usize {
        self.dim()
    }

    /// Additive separation of u and v in both f and χ.
    pub fn separable(&self) -> bool {
        !matches!(self, Catalog::BilinearScalar { .. })
    }

    pub fn chi_is_zero(&self) -> bool {
        match self {
            Catalog::LinearScalar { d, e_u, e_v, .. } => *d == 0.0 && *e_u == 0.0 && *e_v == 0.0,
            Catalog::Pursuit1d | Catalog::BilinearScalar { .. } => true,
            Catalog::Decoupled2d { d, .. } => d.iter().all(|&v| v == 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameDynamics {
    pub catalog: Catalog,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub c_star: f64,
    pub lambda_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HamiltonianEval {
    pub value: f64,
    pub argmin_u: usize,
    pub argmax_v: usize,
    /// min-max minus max-min over the control grids.
    pub isaacs_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub samples: usize,
    pub state_radius: f64,
    pub covector_radius: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            samples: 200,
            state_radius: 5.0,
            covector_radius: 5.0,
        }
    }
}

impl GameDynamics {
    /// Builds a game with analytically derived c_* and λ_* unless overridden.
    pub fn new(
        catalog: Catalog,
        p: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        c_star: Option<f64>,
        lambda_star: Option<f64>,
    ) -> Result<Self> {
        if p.is_empty() || q.is_empty() {
            return Err(Error::Configuration("control sets P and Q must be nonempty".into()));
        }
        let cd = catalog.control_dim();
        for u in p.iter().chain(&q) {
            if u.len() != cd {
                return Err(Error::Dimension {
                    expected: cd,
                    found: u.len(),
                });
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::Configuration("control points must be finite".into()));
            }
        }
        let n = catalog.dim();
        match &catalog {
            Catalog::LinearScalar { terminal, .. }
            | Catalog::Decoupled2d { terminal, .. }
            | Catalog::BilinearScalar { terminal, .. } => {
                if let Terminal::Linear(w) = terminal {
                    if w.len() != n {
                        return Err(Error::Dimension {
                            expected: n,
                            found: w.len(),
                        });
                    }
                }
            }
            Catalog::Pursuit1d => {}
        }
        let mut dynamics = GameDynamics {
            catalog,
            p,
            q,
            c_star: 0.0,
            lambda_star: 0.0,
        };
        let (c_auto, l_auto) = dynamics.analytic_constants();
        dynamics.c_star = c_star.unwrap_or(c_auto);
        dynamics.lambda_star = lambda_star.unwrap_or(l_auto);
        if !(dynamics.c_star > 0.0) {
            return Err(Error::Configuration("c_star must be positive".into()));
        }
        if !(dynamics.lambda_star >= 0.0) {
            return Err(Error::Configuration("lambda_star must be non-negative".into()));
        }
        Ok(dynamics)
    }

    /// Scalar controls from plain lists.
    pub fn scalar_controls(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| vec![v]).collect()
    }

    // (c_*, λ_*) read off the catalog formulas
    fn analytic_constants(&self) -> (f64, f64) {
        let mut forcing: f64 = 0.0;
        for u in &self.p {
            for v in &self.q {
                let f = self.f(0.0, &vec![0.0; self.dim()], u, v);
                forcing = forcing.max(vecops::norm(&f));
            }
        }
        let (lin, lip) = match &self.catalog {
            Catalog::LinearScalar { a, d, .. } => (a.abs(), a.abs() + d.abs()),
            Catalog::Pursuit1d => (0.0, 0.0),
            Catalog::Decoupled2d { a, d, .. } => {
                let am = a[0].abs().max(a[1].abs());
                (am, am + vecops::norm(d))
            }
            Catalog::BilinearScalar { a, .. } => (a.abs(), a.abs()),
        };
        let c = lin.max(forcing);
        (if c > 0.0 { c } else { 1.0 }, lip)
    }

    pub fn dim(&self) -> usize {
        self.catalog.dim()
    }

    pub fn separable(&self) -> bool {
        self.catalog.separable()
    }

    pub fn f(&self, _t: f64, x: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.catalog {
            Catalog::LinearScalar { a, b, c, .. } => vec![a * x[0] + b * u[0] + c * v[0]],
            Catalog::Pursuit1d => vec![u[0] - v[0]],
            Catalog::Decoupled2d { a, b, c, .. } => (0..2)
                .map(|i| a[i] * x[i] + b[i] * u[i] + c[i] * v[i])
                .collect(),
            Catalog::BilinearScalar { a, b, .. } => vec![a * x[0] + b * u[0] * v[0]],
        }
    }

    pub fn chi(&self, _t: f64, x: &[f64], u: &[f64], v: &[f64]) -> f64 {
        match &self.catalog {
            Catalog::LinearScalar { d, e_u, e_v, .. } => d * x[0] + e_u * u[0] + e_v * v[0],
            Catalog::Pursuit1d | Catalog::BilinearScalar { .. } => 0.0,
            Catalog::Decoupled2d { d, .. } => vecops::dot(d, x),
        }
    }

    /// σ as a function of the terminal state.
    pub fn sigma_terminal(&self, xt: &[f64]) -> f64 {
        match &self.catalog {
            Catalog::Pursuit1d => xt[0].abs(),
            Catalog::LinearScalar { terminal, .. }
            | Catalog::Decoupled2d { terminal, .. }
            | Catalog::BilinearScalar { terminal, .. } => terminal.eval(xt),
        }
    }

    pub fn sigma(&self, x: &SampledPath) -> f64 {
        self.sigma_terminal(x.node_state(x.cells()))
    }

    /// Lipschitz constant of σ in x(T).
    pub fn sigma_lipschitz(&self) -> f64 {
        match &self.catalog {
            Catalog::Pursuit1d => 1.0,
            Catalog::LinearScalar { terminal, .. }
            | Catalog::Decoupled2d { terminal, .. }
            | Catalog::BilinearScalar { terminal, .. } => terminal.lipschitz(),
        }
    }

    /// ⟨s, f⟩ + χ, evaluated as (state part + u part) + v part for separable
    /// entries so that min-max and max-min coincide in floating point.
    pub fn pairing(&self, t: f64, x: &[f64], s: &[f64], u: &[f64], v: &[f64]) -> f64 {
        match &self.catalog {
            Catalog::LinearScalar {
                a, b, c, d, e_u, e_v, ..
            } => {
                let base = s[0] * a * x[0] + d * x[0];
                (base + (s[0] * b * u[0] + e_u * u[0])) + (s[0] * c * v[0] + e_v * v[0])
            }
            Catalog::Pursuit1d => s[0] * u[0] + (-s[0] * v[0]),
            Catalog::Decoupled2d { a, b, c, d, .. } => {
                let base = s[0] * a[0] * x[0] + s[1] * a[1] * x[1] + vecops::dot(d, x);
                let pu = s[0] * b[0] * u[0] + s[1] * b[1] * u[1];
                let pv = s[0] * c[0] * v[0] + s[1] * c[1] * v[1];
                (base + pu) + pv
            }
            Catalog::BilinearScalar { .. } => {
                vecops::dot(s, &self.f(t, x, u, v)) + self.chi(t, x, u, v)
            }
        }
    }

    /// H(t, x, s) = min over P of max over Q, ties resolved by lowest index.
    pub fn hamiltonian(&self, t: f64, x: &[f64], s: &[f64]) -> HamiltonianEval {
        let np = self.p.len();
        let nq = self.q.len();
        let mut vals = Vec::with_capacity(np * nq);
        for u in &self.p {
            for v in &self.q {
                vals.push(self.pairing(t, x, s, u, v));
            }
        }
        let mut minmax = f64::INFINITY;
        let mut argmin_u = 0;
        let mut argmax_v = 0;
        for i in 0..np {
            let row = &vals[i * nq..(i + 1) * nq];
            let mut best = f64::NEG_INFINITY;
            let mut bj = 0;
            for (j, &r) in row.iter().enumerate() {
                if r > best {
                    best = r;
                    bj = j;
                }
            }
            if best < minmax {
                minmax = best;
                argmin_u = i;
                argmax_v = bj;
            }
        }
        let mut maxmin = f64::NEG_INFINITY;
        for j in 0..nq {
            let col_min = (0..np).map(|i| vals[i * nq + j]).fold(f64::INFINITY, f64::min);
            maxmin = maxmin.max(col_min);
        }
        HamiltonianEval {
            value: minmax,
            argmin_u,
            argmax_v,
            isaacs_gap: minmax - maxmin,
        }
    }

    pub fn h(&self, t: f64, x: &[f64], s: &[f64]) -> f64 {
        self.hamiltonian(t, x, s).value
    }
}

fn random_point<R: Rng>(rng: &mut R, n: usize, radius: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-radius..=radius)).collect()
}

/// Empirical checks of the growth, Lipschitz, Isaacs and terminal-cost
/// conditions on random samples and on a path sample set.
pub fn validate_assumptions<R: Rng>(
    dynamics: &GameDynamics,
    spec: &SampleSpec,
    horizon: f64,
    paths: &[SampledPath],
    rng: &mut R,
) -> Vec<CheckReport> {
    let n = dynamics.dim();
    let mut growth: f64 = 0.0;
    let mut growth_witness = (0.0, Vec::new());
    let mut lip: f64 = 0.0;
    let mut gap: f64 = 0.0;
    for _ in 0..spec.samples {
        let t = rng.gen_range(0.0..=horizon);
        let x = random_point(rng, n, spec.state_radius);
        let y = random_point(rng, n, spec.state_radius);
        let s = random_point(rng, n, spec.covector_radius);
        for u in &dynamics.p {
            for v in &dynamics.q {
                let fx = dynamics.f(t, &x, u, v);
                let ratio = vecops::norm(&fx) / (1.0 + vecops::norm(&x));
                if ratio > growth {
                    growth = ratio;
                    growth_witness = (t, x.clone());
                }
                let dx = vecops::dist(&x, &y);
                if dx > 0.0 {
                    let fy = dynamics.f(t, &y, u, v);
                    let num = vecops::dist(&fx, &fy)
                        + (dynamics.chi(t, &x, u, v) - dynamics.chi(t, &y, u, v)).abs();
                    lip = lip.max(num / dx);
                }
            }
        }
        gap = gap.max(dynamics.hamiltonian(t, &x, &s).isaacs_gap);
    }

    let mut reports = Vec::new();
    let c = dynamics.c_star;
    reports.push(
        CheckReport::new(
            "growth_c_star",
            Grade::Assertion,
            growth,
            c,
            1e-12 * c,
            &[c, spec.samples as f64],
        )
        .with_detail(format!(
            "max |f|/(1+|x|) = {growth:.6e}; witness t={:.6}, x={:?}",
            growth_witness.0, growth_witness.1
        )),
    );
    let l = dynamics.lambda_star;
    reports.push(
        CheckReport::new(
            "lipschitz_lambda_star",
            Grade::Assertion,
            lip,
            l,
            1e-9 * (1.0 + l),
            &[l, spec.samples as f64],
        )
        .with_detail(format!("sampled Lipschitz estimate {lip:.6e}")),
    );
    let grade = if dynamics.separable() {
        Grade::Assertion
    } else {
        Grade::Diagnostic
    };
    reports.push(
        CheckReport::new("isaacs_gap", grade, gap, 0.0, 0.0, &[spec.samples as f64])
            .with_detail(format!("catalog {} separable={}", dynamics.catalog.id(), dynamics.separable())),
    );

    // condition (v): only a lower bound on λ^* can be observed
    let mut lam_up: f64 = 0.0;
    for (i, x) in paths.iter().enumerate() {
        for y in &paths[i + 1..] {
            let xt = x.node_state(x.cells());
            let yt = y.node_state(y.cells());
            let nodes = x.grid().nodes();
            let mut integral = 0.0;
            for k in 0..x.cells() {
                let h = nodes[k + 1] - nodes[k];
                integral += 0.5
                    * h
                    * (vecops::dist(x.node_state(k), y.node_state(k))
                        + vecops::dist(x.node_state(k + 1), y.node_state(k + 1)));
            }
            let denom = vecops::dist(xt, yt) + integral;
            if denom > 0.0 {
                lam_up = lam_up.max((dynamics.sigma(x) - dynamics.sigma(y)).abs() / denom);
            }
        }
    }
    reports.push(
        CheckReport::new(
            "terminal_lambda_upper_estimate",
            Grade::Diagnostic,
            lam_up,
            lam_up,
            0.0,
            &[paths.len() as f64],
        )
        .with_detail("sampled lower bound on the constant of condition (v)"),
    );
    reports
}

/// Checks the Hamiltonian's Lipschitz properties in s and in x, and the
/// invariance of the selected controls under positive scaling of s when χ ≡ 0.
pub fn hamiltonian_properties<R: Rng>(
    dynamics: &GameDynamics,
    spec: &SampleSpec,
    horizon: f64,
    rng: &mut R,
) -> Vec<CheckReport> {
    let n = dynamics.dim();
    let mut in_s: f64 = 0.0;
    let mut in_x: f64 = 0.0;
    let mut selection_changes = 0usize;
    for _ in 0..spec.samples {
        let t = rng.gen_range(0.0..=horizon);
        let x = random_point(rng, n, spec.state_radius);
        let y = random_point(rng, n, spec.state_radius);
        let s = random_point(rng, n, spec.covector_radius);
        let r = random_point(rng, n, spec.covector_radius);
        let hs = dynamics.hamiltonian(t, &x, &s);
        let hr = dynamics.h(t, &x, &r);
        let ds = vecops::dist(&s, &r);
        if ds > 0.0 {
            in_s = in_s.max((hs.value - hr).abs() / ((1.0 + vecops::norm(&x)) * ds));
        }
        let dx = vecops::dist(&x, &y);
        if dx > 0.0 {
            let hy = dynamics.h(t, &y, &s);
            in_x = in_x.max((hs.value - hy).abs() / ((1.0 + vecops::norm(&s)) * dx));
        }
        if dynamics.catalog.chi_is_zero() {
            for scale in [0.5, 2.0, 4.0] {
                let e = dynamics.hamiltonian(t, &x, &vecops::scale(scale, &s));
                if e.argmin_u != hs.argmin_u || e.argmax_v != hs.argmax_v {
                    selection_changes += 1;
                }
            }
        }
    }
    let c = dynamics.c_star;
    let l = dynamics.lambda_star;
    let mut out = vec![
        CheckReport::new(
            "hamiltonian_lipschitz_in_s",
            Grade::Assertion,
            in_s,
            c,
            1e-12 * (1.0 + c),
            &[c, spec.samples as f64],
        ),
        CheckReport::new(
            "hamiltonian_lipschitz_in_x",
            Grade::Assertion,
            in_x,
            l,
            1e-9 * (1.0 + l),
            &[l, spec.samples as f64],
        ),
    ];
    if dynamics.catalog.chi_is_zero() {
        out.push(CheckReport::new(
            "hamiltonian_scaling_selection",
            Grade::Assertion,
            selection_changes as f64,
            0.0,
            0.0,
            &[spec.samples as f64],
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pm1() -> Vec<Vec<f64>> {
        GameDynamics::scalar_controls(&[-1.0, 1.0])
    }

    fn linear(a: f64, b: f64, c: f64, d: f64) -> Catalog {
        Catalog::LinearScalar {
            a,
            b,
            c,
            d,
            e_u: 0.0,
            e_v: 0.0,
            terminal: Terminal::Linear(vec![1.0]),
        }
    }

    #[test]
    fn hamiltonian_examples() {
        let g = GameDynamics::new(linear(0.0, 1.0, 1.0, 0.0), pm1(), pm1(), None, None).unwrap();
        let e = g.hamiltonian(0.0, &[0.3], &[2.0]);
        assert_eq!(e.value, 0.0);
        assert_eq!(e.isaacs_gap, 0.0);

        let single = GameDynamics::new(
            linear(0.5, 1.0, 2.0, 3.0),
            GameDynamics::scalar_controls(&[0.7]),
            GameDynamics::scalar_controls(&[-0.2]),
            None,
            None,
        )
        .unwrap();
        let x = [1.5];
        let s = [0.4];
        let direct = s[0] * single.f(0.0, &x, &[0.7], &[-0.2])[0] + single.chi(0.0, &x, &[0.7], &[-0.2]);
        assert!((single.h(0.0, &x, &s) - direct).abs() < 1e-14);

        let with_chi = GameDynamics::new(
            Catalog::LinearScalar {
                a: 1.0,
                b: 1.0,
                c: 1.0,
                d: 0.0,
                e_u: 1.0,
                e_v: -2.0,
                terminal: Terminal::Norm,
            },
            pm1(),
            pm1(),
            None,
            None,
        )
        .unwrap();
        // s = 0 leaves min max χ = min_u (u + 2) = 1
        assert_eq!(with_chi.h(0.0, &[4.0], &[0.0]), 1.0);
    }

    #[test]
    fn bilinear_has_isaacs_gap() {
        let g = GameDynamics::new(
            Catalog::BilinearScalar {
                a: 0.0,
                b: 1.0,
                terminal: Terminal::Linear(vec![1.0]),
            },
            pm1(),
            pm1(),
            None,
            None,
        )
        .unwrap();
        let e = g.hamiltonian(0.0, &[0.0], &[1.0]);
        assert_eq!(e.value, 1.0);
        assert_eq!(e.isaacs_gap, 2.0);
        assert!(!g.separable());
    }

    #[test]
    fn validation_reports() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let zero = GameDynamics::new(linear(0.0, 0.0, 0.0, 0.0), pm1(), pm1(), None, None).unwrap();
        let reps = validate_assumptions(&zero, &SampleSpec::default(), 1.0, &[], &mut rng);
        assert!(reps.iter().all(|r| !r.is_failure()));
        assert_eq!(reps[0].margin, zero.c_star);

        let pursuit = GameDynamics::new(
            Catalog::Pursuit1d,
            GameDynamics::scalar_controls(&[-1.0, 0.0, 1.0]),
            GameDynamics::scalar_controls(&[-1.0, 0.0, 1.0]),
            None,
            None,
        )
        .unwrap();
        assert_eq!(pursuit.c_star, 2.0);
        let reps = validate_assumptions(&pursuit, &SampleSpec::default(), 1.0, &[], &mut rng);
        assert!(reps.iter().all(|r| !r.is_failure()));
        let gap = reps.iter().find(|r| r.lemma == "isaacs_gap").unwrap();
        assert_eq!(gap.lhs, 0.0);

        let too_small = GameDynamics::new(linear(1.0, 1.0, 1.0, 0.0), pm1(), pm1(), Some(0.5), None).unwrap();
        let reps = validate_assumptions(&too_small, &SampleSpec::default(), 1.0, &[], &mut rng);
        assert!(reps[0].is_failure());
    }

    #[test]
    fn hamiltonian_property_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pursuit = GameDynamics::new(
            Catalog::Pursuit1d,
            GameDynamics::scalar_controls(&[-1.0, -0.5, 0.0, 0.5, 1.0]),
            GameDynamics::scalar_controls(&[-1.0, 0.0, 1.0]),
            Some(2.0),
            None,
        )
        .unwrap();
        let reps = hamiltonian_properties(&pursuit, &SampleSpec::default(), 1.0, &mut rng);
        assert_eq!(reps.len(), 3);
        assert!(reps.iter().all(|r| r.pass), "{reps:?}");
        let dec = GameDynamics::new(
            Catalog::Decoupled2d {
                a: [0.5, -1.0],
                b: [1.0, 0.5],
                c: [0.3, 1.0],
                d: [1.0, 0.0],
                terminal: Terminal::Linear(vec![1.0, -1.0]),
            },
            vec![vec![-1.0, 0.0], vec![1.0, 1.0]],
            vec![vec![0.0, 1.0], vec![1.0, -1.0]],
            None,
            None,
        )
        .unwrap();
        let reps = hamiltonian_properties(&dec, &SampleSpec::default(), 1.0, &mut rng);
        assert!(reps.iter().all(|r| r.pass), "{reps:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = random_point(&mut rng, 2, 4.0);
            let s = random_point(&mut rng, 2, 4.0);
            assert_eq!(dec.hamiltonian(0.3, &x, &s).isaacs_gap, 0.0);
        }
    }

    #[test]
    fn rejects_bad_controls() {
        assert!(GameDynamics::new(Catalog::Pursuit1d, vec![], pm1(), None, None).is_err());
        assert!(GameDynamics::new(Catalog::Pursuit1d, vec![vec![0.0, 1.0]], pm1(), None, None).is_err());
    }
}
