//! Sum-of-squares certificates for the quantum bounds.
//!
//! For the graph families `β_Q − B = Σ w_i (1 − P_i)²` holds for every choice
//! of unit-square observables; for the tilted family the analogous identity is
//! `2(β_Q − B) = Σ α_i² (1 − S̃_i)²`. Both are checked here by materializing
//! the operators densely and measuring the Frobenius norm of the difference.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::bounds::{bell_operator, canonical_observables, quantum_bound_formula, random_observables, ObservableSet};
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::inequalities::{build_graph_inequality, tilted_mu_sin_cos, BellExpression, Family, StabilizerPlan};
use crate::linalg::{self, frobenius, real, LocalProduct, LocalSum, Mat2, C64};
use crate::pauli_states::{cos_2theta, StateVector};

/// Dense materialization limit for certificate checks.
pub const SOS_LIMIT: usize = 8;

fn guard(n: usize) -> Result<()> {
    if n > SOS_LIMIT {
        return Err(Error::Guard {
            what: "dense SOS check",
            n,
            limit: SOS_LIMIT,
        });
    }
    Ok(())
}

fn check_size(n: usize, obs: &ObservableSet) -> Result<()> {
    if obs.n() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: obs.n(),
        });
    }
    Ok(())
}

/// A weighted square `w (1 − P)²` with P given as a sum of local products.
#[derive(Clone, Debug)]
pub struct SosTerm {
    pub weight: f64,
    pub operator: LocalSum,
}

impl SosTerm {
    fn square_dense(&self) -> DMatrix<C64> {
        let p = self.operator.to_dense();
        let d = p.nrows();
        let one_minus = DMatrix::identity(d, d) - p;
        &one_minus * &one_minus * real(self.weight)
    }

    /// ‖(1 − P)v‖.
    pub fn defect_on(&self, v: &StateVector) -> f64 {
        linalg::distance(v.amplitudes(), &self.operator.apply(v.amplitudes()))
    }
}

/// Squares for a stabilizer plan; observables are indexed in the plan's labelling.
pub fn plan_sos_terms(plan: &StabilizerPlan, obs: &ObservableSet) -> Result<Vec<SosTerm>> {
    let n = plan.n();
    check_size(n, obs)?;
    Ok(plan
        .blocks()
        .into_iter()
        .map(|b| {
            let mut prod = LocalProduct::identity(n);
            for (&p, &s) in &b.factors {
                let (a0, a1) = obs.pair(p);
                let mut m = s.operator(a0, a1);
                if s.is_combination() {
                    m *= real(b.role.operator_scale());
                }
                prod.set(p, m);
            }
            let mut operator = LocalSum::new(n);
            operator.push(1.0, prod);
            SosTerm {
                weight: b.role.sos_weight(),
                operator,
            }
        })
        .collect())
}

/// Squares for the single-substitution graph inequality of `g`.
///
/// The inequality is built on `g` relabelled so that its pivot is vertex 0;
/// `obs` must use that labelling.
pub fn graph_sos_terms(g: &Graph, obs: &ObservableSet) -> Result<Vec<SosTerm>> {
    guard(g.n())?;
    let e = build_graph_inequality(g)?;
    plan_sos_terms(&e.plan().expect("graph family has a plan"), obs)
}

/// Result of one residual evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SosCheck {
    /// Frobenius norm of the identity's left side minus its right side.
    pub residual: f64,
    /// Largest Hermiticity / unit-square defect among the observables.
    pub observable_defect: f64,
}

impl SosCheck {
    /// The identity is only promised for unit-square observables.
    pub fn precondition_violated(&self) -> bool {
        self.observable_defect > 1e-9
    }
}

fn residual_against(lhs_scale: f64, e: &BellExpression, beta_q: f64, obs: &ObservableSet, terms: &[SosTerm]) -> Result<SosCheck> {
    let b = bell_operator(e, obs)?.to_dense();
    let d = b.nrows();
    let mut m = (DMatrix::identity(d, d) * real(beta_q) - b) * real(lhs_scale);
    for t in terms {
        m -= t.square_dense();
    }
    Ok(SosCheck {
        residual: frobenius(&m),
        observable_defect: obs.max_defect(),
    })
}

/// Residual of `β_Q − B − Σ w (1 − P)²` for the graph inequality of `g`.
pub fn sos_residual(g: &Graph, obs: &ObservableSet) -> Result<SosCheck> {
    guard(g.n())?;
    let e = build_graph_inequality(g)?;
    expression_residual(&e, obs)
}

/// Residual of the appropriate identity for any expression with a certificate.
pub fn expression_residual(e: &BellExpression, obs: &ObservableSet) -> Result<SosCheck> {
    guard(e.n())?;
    check_size(e.n(), obs)?;
    let beta_q = quantum_bound_formula(e)?;
    match e.family() {
        Family::TiltedGhz => {
            let theta = e.meta().theta.expect("tilted meta has theta");
            residual_against(2.0, e, beta_q, obs, &tilted_sos_terms(e.n(), theta, obs)?)
        }
        Family::Custom => Err(Error::NoClosedForm(Family::Custom.to_string())),
        _ => residual_against(1.0, e, beta_q, obs, &plan_sos_terms(&e.plan().expect("plan"), obs)?),
    }
}

/// Rotated party-1 operators (X̃₁, Z̃₁) built from its observables.
pub fn tilted_party_one(theta: f64, a0: &Mat2, a1: &Mat2) -> Result<(Mat2, Mat2)> {
    if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_4) {
        return Err(Error::AngleOutOfRange {
            value: theta,
            range: "(0, π/4]",
        });
    }
    let (s, c) = tilted_mu_sin_cos(theta);
    Ok(((a0 + a1) * real(0.5 / s), (a0 - a1) * real(0.5 / c)))
}

/// Squares `α² (1 − S̃)²` for the tilted family (scaled so the left side is 2(β_Q − B)).
pub fn tilted_sos_terms(n: usize, theta: f64, obs: &ObservableSet) -> Result<Vec<SosTerm>> {
    guard(n)?;
    check_size(n, obs)?;
    let (a0, a1) = obs.pair(0);
    let (x1, z1) = tilted_party_one(theta, a0, a1)?;
    let c = cos_2theta(theta);
    let s = (2.0 * theta).sin();

    let mut first = LocalSum::new(n);
    let mut xs = LocalProduct::identity(n);
    xs.set(0, x1);
    for i in 1..n {
        xs.set(i, obs.pair(i).0);
    }
    first.push(s, xs);
    if c != 0.0 {
        let mut zs = LocalProduct::identity(n);
        zs.set(0, z1);
        first.push(c, zs);
    }
    let mut terms = vec![SosTerm {
        weight: SQRT_2 * (n as f64 - 1.0),
        operator: first,
    }];
    for i in 1..n {
        let mut zz = LocalProduct::identity(n);
        zz.set(0, z1);
        zz.set(i, obs.pair(i).1);
        let mut op = LocalSum::new(n);
        op.push(1.0, zz);
        terms.push(SosTerm {
            weight: SQRT_2,
            operator: op,
        });
    }
    Ok(terms)
}

/// Residual of `2(β_Q − B) − Σ α² (1 − S̃)²` for the tilted family.
pub fn tilted_sos_residual(n: usize, theta: f64, obs: &ObservableSet) -> Result<SosCheck> {
    let e = crate::inequalities::build_tilted_ghz(n, theta)?;
    expression_residual(&e, obs)
}

/// SOS terms appropriate for `e`.
pub fn expression_sos_terms(e: &BellExpression, obs: &ObservableSet) -> Result<Vec<SosTerm>> {
    match e.family() {
        Family::TiltedGhz => tilted_sos_terms(e.n(), e.meta().theta.expect("theta"), obs),
        Family::Custom => Err(Error::NoClosedForm(Family::Custom.to_string())),
        _ => plan_sos_terms(&e.plan().expect("plan"), obs),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DrawResidual {
    pub seed: u64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateReport {
    pub family: Family,
    pub n: usize,
    pub beta_q: f64,
    pub weights: Vec<f64>,
    pub canonical_residual: f64,
    /// Largest ‖(1 − P_i)ψ‖ on the target state with canonical observables.
    pub target_defect: f64,
    pub draws: Vec<DrawResidual>,
    pub max_residual: f64,
}

impl CertificateReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual < tol && self.target_defect < tol
    }
}

/// Checks the identity for canonical observables and for `draws` random
/// observable sets; draw `i` uses seed `seed + i`.
pub fn certify(e: &BellExpression, draws: usize, seed: u64) -> Result<CertificateReport> {
    guard(e.n())?;
    let canonical = canonical_observables(e)?;
    let terms = expression_sos_terms(e, &canonical)?;
    let target = e.target_state()?;
    let target_defect = terms.iter().map(|t| t.defect_on(&target)).fold(0.0, f64::max);
    let canonical_residual = expression_residual(e, &canonical)?.residual;
    let draws = (0..draws as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            let obs = random_observables(e.n(), &mut ChaCha8Rng::seed_from_u64(s));
            Ok(DrawResidual {
                seed: s,
                residual: expression_residual(e, &obs)?.residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_residual = draws.iter().map(|d| d.residual).fold(canonical_residual, f64::max);
    Ok(CertificateReport {
        family: e.family(),
        n: e.n(),
        beta_q: quantum_bound_formula(e)?,
        weights: terms.iter().map(|t| t.weight).collect(),
        canonical_residual,
        target_defect,
        draws,
        max_residual,
    })
}
