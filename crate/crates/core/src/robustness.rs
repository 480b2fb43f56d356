//! Linear fidelity-versus-violation bounds.
//!
//! Each party's two observables are reduced to one qubit angle α. The target
//! projector is dressed by per-party extraction channels into `K(α)`, and an
//! operator inequality `K(α) ⪰ s·B(α) + μ·1` valid for every α gives the
//! bound `F ≥ s·β + μ`. The slope is the smallest `s` for which the bound
//! reaches fidelity 1 at the quantum maximum.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{classical_bound_formula, quantum_bound_formula, ObservableSet};
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::inequalities::{build_graph_inequality, BellExpression, Family, Setting};
use crate::linalg::{real, sigma_h, sigma_v, sigma_x, sigma_z, Mat2};

/// Dense K(α) is 2^N × 2^N.
pub const ROBUSTNESS_LIMIT: usize = 7;
/// Grid caches above this many stored f64 values are skipped.
const CACHE_LIMIT: usize = 1 << 25;

type RMat = DMatrix<f64>;

/// One Jordan angle per party, each in [0, π/2].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleVector(Vec<f64>);

impl AngleVector {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if let Some(&a) = angles.iter().find(|a| !(0.0..=FRAC_PI_2).contains(*a)) {
            return Err(Error::AngleOutOfRange {
                value: a,
                range: "[0, π/2]",
            });
        }
        Ok(AngleVector(angles))
    }

    pub fn ideal(n: usize) -> Self {
        AngleVector(vec![FRAC_PI_4; n])
    }

    fn clamped(angles: &[f64]) -> Self {
        AngleVector(angles.iter().map(|a| a.clamp(0.0, FRAC_PI_2)).collect())
    }

    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }
}

/// Whether a party's Jordan block is written in the X/Z or the H/V basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartyKind {
    /// Substitution party: A_x = cos α·X ± sin α·Z.
    Substituted,
    /// A_x = cos α·H ± sin α·V with H = (X+Z)/√2, V = (X−Z)/√2.
    Plain,
}

fn basis(kind: PartyKind) -> (Mat2, Mat2) {
    match kind {
        PartyKind::Substituted => (sigma_x(), sigma_z()),
        PartyKind::Plain => (sigma_h(), sigma_v()),
    }
}

fn kinds(n: usize, substituted: &[usize]) -> Vec<PartyKind> {
    (0..n)
        .map(|i| if substituted.contains(&i) { PartyKind::Substituted } else { PartyKind::Plain })
        .collect()
}

/// Jordan-parameterized observables; all angles π/4 gives the canonical set.
pub fn jordan_observables(alpha: &AngleVector, substituted: &[usize]) -> ObservableSet {
    let pairs = kinds(alpha.n(), substituted)
        .into_iter()
        .zip(alpha.angles())
        .map(|(kind, &a)| {
            let (p, q) = basis(kind);
            let (s, c) = a.sin_cos();
            (p * real(c) + q * real(s), p * real(c) - q * real(s))
        })
        .collect();
    ObservableSet::unchecked(pairs)
}

/// `(1+√2)(sin x + cos x − 1)`: 1 at π/4, 0 at both ends.
pub fn gain(x: f64) -> f64 {
    if x == FRAC_PI_4 {
        return 1.0;
    }
    (1.0 + SQRT_2) * (x.sin() + x.cos() - 1.0)
}

/// Correction applied with weight (1 − g)/2 by the extraction channel.
pub fn extraction_operator(kind: PartyKind, x: f64) -> Mat2 {
    let (a, b) = basis(kind);
    if x <= FRAC_PI_4 {
        a
    } else {
        b
    }
}

fn real2(m: &Mat2) -> [[f64; 2]; 2] {
    [[m[(0, 0)].re, m[(0, 1)].re], [m[(1, 0)].re, m[(1, 1)].re]]
}

fn apply_rows(m: &mut RMat, n: usize, q: usize, g: &[[f64; 2]; 2]) {
    let dim = m.nrows();
    let stride = 1usize << (n - 1 - q);
    for col in m.as_mut_slice().chunks_mut(dim) {
        for i in 0..dim {
            if i & stride == 0 {
                let j = i | stride;
                let (a, b) = (col[i], col[j]);
                col[i] = g[0][0] * a + g[0][1] * b;
                col[j] = g[1][0] * a + g[1][1] * b;
            }
        }
    }
}

/// Γ ρ Γ for a symmetric real Γ acting on party `q`.
fn conjugate(rho: &RMat, n: usize, q: usize, g: &[[f64; 2]; 2]) -> RMat {
    let mut t = rho.clone();
    apply_rows(&mut t, n, q, g);
    let mut t = t.transpose();
    apply_rows(&mut t, n, q, g);
    t.transpose()
}

fn real_kron(factors: &[Option<[[f64; 2]; 2]>]) -> RMat {
    let mut acc = RMat::from_element(1, 1, 1.0);
    for f in factors {
        let local = match f {
            Some(m) => RMat::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]]),
            None => RMat::identity(2, 2),
        };
        acc = acc.kronecker(&local);
    }
    acc
}

fn lambda_min(m: &RMat) -> f64 {
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Everything needed to evaluate K(α) and B(α) for one graph inequality.
#[derive(Clone, Debug)]
pub struct RobustnessProblem {
    expression: BellExpression,
    kinds: Vec<PartyKind>,
    substituted: Vec<usize>,
    target: Vec<f64>,
    beta_c: f64,
    beta_q: f64,
    degrees: Vec<usize>,
}

impl RobustnessProblem {
    pub fn new(e: &BellExpression) -> Result<Self> {
        let plan = e
            .plan()
            .ok_or_else(|| Error::NoClosedForm(format!("robustness for family `{}`", e.family())))?;
        let n = e.n();
        if n > ROBUSTNESS_LIMIT {
            return Err(Error::Guard {
                what: "robustness search",
                n,
                limit: ROBUSTNESS_LIMIT,
            });
        }
        let target = e.target_state()?;
        if target.amplitudes().iter().any(|a| a.im != 0.0) {
            return Err(Error::InvalidArgument("robustness requires a real target state".into()));
        }
        Ok(RobustnessProblem {
            expression: e.clone(),
            kinds: kinds(n, &plan.substituted),
            substituted: plan.substituted.clone(),
            target: target.amplitudes().iter().map(|a| a.re).collect(),
            beta_c: classical_bound_formula(e)?,
            beta_q: quantum_bound_formula(e)?,
            degrees: plan.graph.degrees(),
        })
    }

    pub fn from_graph(g: &Graph) -> Result<Self> {
        Self::new(&build_graph_inequality(g)?)
    }

    pub fn n(&self) -> usize {
        self.kinds.len()
    }

    pub fn beta_c(&self) -> f64 {
        self.beta_c
    }

    pub fn beta_q(&self) -> f64 {
        self.beta_q
    }

    pub fn family(&self) -> Family {
        self.expression.family()
    }

    /// Target projector dressed by the extraction channels at angles α.
    pub fn dressed_target(&self, alpha: &AngleVector) -> Result<RMat> {
        self.check(alpha)?;
        let n = self.n();
        let psi = nalgebra::DVector::from_column_slice(&self.target);
        let mut rho = &psi * psi.transpose();
        for (q, (&x, &kind)) in alpha.angles().iter().zip(&self.kinds).enumerate() {
            let p = (1.0 + gain(x)) / 2.0;
            if p == 1.0 {
                continue;
            }
            let g = real2(&extraction_operator(kind, x));
            let flipped = conjugate(&rho, n, q, &g);
            rho = rho * p + flipped * (1.0 - p);
        }
        Ok(rho)
    }

    /// Bell operator for the Jordan observables at angles α.
    pub fn bell_operator(&self, alpha: &AngleVector) -> Result<RMat> {
        self.check(alpha)?;
        let obs = jordan_observables(alpha, &self.substituted);
        let dim = 1usize << self.n();
        let mut b = RMat::zeros(dim, dim);
        for t in self.expression.terms() {
            let factors: Vec<Option<[[f64; 2]; 2]>> = (0..self.n())
                .map(|p| {
                    t.factors.get(&p).map(|s: &Setting| {
                        let (a0, a1) = obs.pair(p);
                        real2(&s.operator(a0, a1))
                    })
                })
                .collect();
            b += real_kron(&factors) * t.coeff;
        }
        Ok(b)
    }

    /// λ_min(K(α) − s·B(α)).
    pub fn margin(&self, alpha: &AngleVector, s: f64) -> Result<f64> {
        Ok(lambda_min(&(self.dressed_target(alpha)? - self.bell_operator(alpha)? * s)))
    }

    fn check(&self, alpha: &AngleVector) -> Result<()> {
        if alpha.n() != self.n() {
            return Err(Error::SizeMismatch {
                expected: self.n(),
                found: alpha.n(),
            });
        }
        Ok(())
    }

    /// Parties sharing an angle under the opt-in symmetry reduction: same
    /// kind and same degree.
    fn angle_classes(&self, symmetric: bool) -> Vec<usize> {
        if !symmetric {
            return (0..self.n()).collect();
        }
        let mut keys: Vec<(PartyKind, usize)> = Vec::new();
        (0..self.n())
            .map(|i| {
                let key = (self.kinds[i], self.degrees[i]);
                match keys.iter().position(|k| k.0 == key.0 && k.1 == key.1) {
                    Some(c) => c,
                    None => {
                        keys.push(key);
                        keys.len() - 1
                    }
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Points per angle axis over [0, π/2]; odd counts include π/4.
    pub grid_points: usize,
    pub refine_iterations: u64,
    pub restarts: usize,
    /// Share angles between parties of equal kind and degree during the grid.
    pub symmetric: bool,
    /// Keep K and B for every grid point across slope evaluations.
    pub cache: bool,
    /// Bisection accepts a slope once s·β_Q + μ ≥ 1 − target_tol.
    pub target_tol: f64,
    /// Relative bisection width on s.
    pub slope_tol: f64,
    pub validity_samples: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            grid_points: 9,
            refine_iterations: 200,
            restarts: 3,
            symmetric: false,
            cache: true,
            target_tol: 1e-9,
            slope_tol: 1e-10,
            validity_samples: 500,
            seed: 0x0b5e,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub slope: f64,
    pub grid_min: f64,
    pub grid_argmin: Vec<f64>,
    pub refined_min: f64,
    pub refined_argmin: Vec<f64>,
    /// False when a refinement run errored; the grid value is kept.
    pub refine_ok: bool,
}

impl MuEstimate {
    pub fn value(&self) -> f64 {
        self.grid_min.min(self.refined_min)
    }
}

/// Grid over [0, π/2]^classes with optional cached operators.
pub struct AngleGrid<'a> {
    problem: &'a RobustnessProblem,
    classes: Vec<usize>,
    axis: Vec<f64>,
    cache: Option<Vec<(RMat, RMat)>>,
}

impl<'a> AngleGrid<'a> {
    pub fn new(problem: &'a RobustnessProblem, cfg: &SearchConfig) -> Result<Self> {
        if cfg.grid_points < 2 {
            return Err(Error::InvalidArgument("grid needs at least 2 points per axis".into()));
        }
        let classes = problem.angle_classes(cfg.symmetric);
        let axis: Vec<f64> = (0..cfg.grid_points)
            .map(|k| FRAC_PI_2 * k as f64 / (cfg.grid_points - 1) as f64)
            .collect();
        let mut grid = AngleGrid {
            problem,
            classes,
            axis,
            cache: None,
        };
        let dim = 1usize << problem.n();
        if cfg.cache && grid.len().saturating_mul(2 * dim * dim) <= CACHE_LIMIT {
            let ops = (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let a = grid.point(i);
                    Ok((problem.dressed_target(&a)?, problem.bell_operator(&a)?))
                })
                .collect::<Result<Vec<_>>>()?;
            grid.cache = Some(ops);
        }
        Ok(grid)
    }

    fn class_count(&self) -> usize {
        self.classes.iter().max().map_or(0, |m| m + 1)
    }

    pub fn len(&self) -> usize {
        self.axis.len().pow(self.class_count() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, mut index: usize) -> AngleVector {
        let g = self.axis.len();
        let mut class_angle = vec![0.0; self.class_count()];
        for c in class_angle.iter_mut() {
            *c = self.axis[index % g];
            index /= g;
        }
        AngleVector(self.classes.iter().map(|&c| class_angle[c]).collect())
    }

    fn margin_at(&self, index: usize, s: f64) -> Result<f64> {
        match &self.cache {
            Some(ops) => {
                let (k, b) = &ops[index];
                Ok(lambda_min(&(k - b * s)))
            }
            None => self.problem.margin(&self.point(index), s),
        }
    }

    /// All grid margins at slope `s`, in index order.
    pub fn margins(&self, s: f64) -> Result<Vec<f64>> {
        (0..self.len()).into_par_iter().map(|i| self.margin_at(i, s)).collect()
    }
}

struct MarginCost<'a> {
    problem: &'a RobustnessProblem,
    slope: f64,
}

impl CostFunction for MarginCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        self.problem
            .margin(&AngleVector::clamped(p), self.slope)
            .map_err(|e| argmin::core::Error::msg(e.to_string()))
    }
}

fn initial_simplex(start: &[f64]) -> Vec<Vec<f64>> {
    const STEP: f64 = 0.1;
    let mut simplex = vec![start.to_vec()];
    for i in 0..start.len() {
        let mut v = start.to_vec();
        v[i] = if v[i] + STEP <= FRAC_PI_2 { v[i] + STEP } else { v[i] - STEP };
        simplex.push(v);
    }
    simplex
}

fn refine(problem: &RobustnessProblem, slope: f64, start: &[f64], iters: u64) -> Option<(f64, Vec<f64>)> {
    let solver = NelderMead::new(initial_simplex(start)).with_sd_tolerance(1e-13).ok()?;
    let res = Executor::new(MarginCost { problem, slope }, solver)
        .configure(|state| state.max_iters(iters))
        .run()
        .ok()?;
    let best = res.state().best_param.clone()?;
    let clamped = AngleVector::clamped(&best);
    let value = problem.margin(&clamped, slope).ok()?;
    Some((value, clamped.0))
}

/// μ(s) = min_α λ_min(K(α) − s·B(α)) by grid search then simplex refinement.
pub fn mu_for_slope(problem: &RobustnessProblem, s: f64, cfg: &SearchConfig) -> Result<MuEstimate> {
    let grid = AngleGrid::new(problem, cfg)?;
    mu_on_grid(problem, &grid, s, cfg)
}

pub fn mu_on_grid(problem: &RobustnessProblem, grid: &AngleGrid<'_>, s: f64, cfg: &SearchConfig) -> Result<MuEstimate> {
    if s.is_nan() || s < 0.0 {
        return Err(Error::InvalidArgument(format!("slope must be non-negative, got {s}")));
    }
    let margins = grid.margins(s)?;
    let mut order: Vec<usize> = (0..margins.len()).collect();
    order.sort_by(|&a, &b| margins[a].total_cmp(&margins[b]).then(a.cmp(&b)));
    let grid_min = margins[order[0]];
    let grid_argmin = grid.point(order[0]).0;
    let starts: Vec<Vec<f64>> = order
        .iter()
        .take(cfg.restarts)
        .map(|&i| grid.point(i).0)
        .collect();
    let runs: Vec<Option<(f64, Vec<f64>)>> = starts
        .par_iter()
        .map(|start| refine(problem, s, start, cfg.refine_iterations))
        .collect();
    let refine_ok = runs.iter().all(Option::is_some);
    let (refined_min, refined_argmin) = runs
        .into_iter()
        .flatten()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap_or((grid_min, grid_argmin.clone()));
    Ok(MuEstimate {
        slope: s,
        grid_min,
        grid_argmin,
        refined_min,
        refined_argmin,
        refine_ok,
    })
}

/// Linear bound F ≥ slope·β + intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessBound {
    pub family: Family,
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    pub beta_c: f64,
    pub beta_q: f64,
    pub grid_points: usize,
    pub symmetric: bool,
    pub grid_mu: f64,
    pub refined_mu: f64,
    /// Interval holding the optimal slope when bisection stopped.
    pub slope_bracket: (f64, f64),
    pub validity: Option<Validity>,
}

impl RobustnessBound {
    pub fn fidelity_at(&self, beta: f64) -> f64 {
        self.slope * beta + self.intercept
    }
}

/// Out-of-sample check of the operator inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    pub samples: usize,
    pub seed: u64,
    /// min over samples of λ_min(K − sB) − μ.
    pub min_margin: f64,
    pub worst_angles: Vec<f64>,
}

impl Validity {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_margin >= -tol
    }
}

/// Smallest slope whose bound reaches fidelity 1 at β_Q (within the target
/// tolerance), followed by a validity check on fresh random angles.
pub fn optimal_slope(problem: &RobustnessProblem, cfg: &SearchConfig) -> Result<RobustnessBound> {
    let grid = AngleGrid::new(problem, cfg)?;
    let beta_q = problem.beta_q();
    let f = |s: f64| -> Result<(f64, MuEstimate)> {
        let mu = mu_on_grid(problem, &grid, s, cfg)?;
        Ok((s * beta_q + mu.value(), mu))
    };
    let ok = |v: f64| v >= 1.0 - cfg.target_tol;

    let mut lo = 0.0;
    let (f0, mu0) = f(0.0)?;
    let (mut hi, mut best) = if ok(f0) {
        (0.0, mu0)
    } else {
        let mut hi = 1.0;
        loop {
            let (v, mu) = f(hi)?;
            if ok(v) {
                break (hi, mu);
            }
            lo = hi;
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::BracketFailure { lo: 0.0, hi });
            }
        }
    };
    while hi > 0.0 && hi - lo > cfg.slope_tol * hi {
        let mid = 0.5 * (lo + hi);
        let (v, mu) = f(mid)?;
        if ok(v) {
            hi = mid;
            best = mu;
        } else {
            lo = mid;
        }
    }
    let mut bound = RobustnessBound {
        family: problem.family(),
        n: problem.n(),
        slope: hi,
        intercept: best.value(),
        beta_c: problem.beta_c(),
        beta_q,
        grid_points: cfg.grid_points,
        symmetric: cfg.symmetric,
        grid_mu: best.grid_min,
        refined_mu: best.refined_min,
        slope_bracket: (lo, hi),
        validity: None,
    };
    if cfg.validity_samples > 0 {
        bound.validity = Some(validate(problem, &bound, cfg.validity_samples, cfg.seed)?);
    }
    Ok(bound)
}

/// Samples uniform angle vectors over the full space (never symmetry-reduced).
pub fn validate(problem: &RobustnessProblem, bound: &RobustnessBound, samples: usize, seed: u64) -> Result<Validity> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<AngleVector> = (0..samples)
        .map(|_| AngleVector((0..problem.n()).map(|_| FRAC_PI_2 * rng.random::<f64>()).collect()))
        .collect();
    let margins = points
        .par_iter()
        .map(|a| Ok(problem.margin(a, bound.slope)? - bound.intercept))
        .collect::<Result<Vec<f64>>>()?;
    let (worst, min_margin) = margins
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, f64::INFINITY));
    Ok(Validity {
        samples,
        seed,
        min_margin,
        worst_angles: points.get(worst).map(|a| a.0.clone()).unwrap_or_default(),
    })
}

/// Rows (relative violation, fidelity bound) for β from β_C to β_Q.
pub fn fidelity_curve(bound: &RobustnessBound, points: usize) -> Result<Vec<(f64, f64)>> {
    if points < 2 {
        return Err(Error::InvalidArgument("curve needs at least 2 points".into()));
    }
    let span = bound.beta_q - bound.beta_c;
    Ok((0..points)
        .map(|k| {
            let r = k as f64 / (points - 1) as f64;
            let beta = if k + 1 == points { bound.beta_q } else { bound.beta_c + r * span };
            (r, bound.fidelity_at(beta))
        })
        .collect())
}

pub fn curve_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("relative_violation,fidelity_bound\n");
    for (r, f) in rows {
        out.push_str(&format!("{r},{f}\n"));
    }
    out
}

/// Per-party channel weights ((1+g)/2, (1−g)/2).
pub fn channel_weights(x: f64) -> (f64, f64) {
    let g = gain(x);
    ((1.0 + g) / 2.0, (1.0 - g) / 2.0)
}
