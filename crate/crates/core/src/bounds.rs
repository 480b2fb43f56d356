//! Classical and quantum values of Bell expressions.
//!
//! Every closed-form bound has an independent numerical route: exhaustive
//! deterministic strategies for the classical value, and the target-state
//! expectation plus the largest eigenvalue of the Bell operator for the
//! quantum one.

use std::f64::consts::SQRT_2;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inequalities::{tilted_classical_bound, tilted_mu_sin_cos, BellExpression, Family};
use crate::linalg::{
    self, hermitian_defect, hermitian_eigenvalues, mat2, sigma_h, sigma_v, sigma_x, sigma_z,
    unit_square_defect, LanczosConfig, LocalProduct, LocalSum, Mat2, C64,
};
use crate::pauli_states::StateVector;

/// Largest party count for exhaustive classical enumeration (4^N strategies).
pub const BRUTE_FORCE_LIMIT: usize = 13;
/// Largest party count for the matrix-free eigensolver.
pub const MATRIX_FREE_LIMIT: usize = 12;
/// Largest party count for dense Bell-operator materialization.
pub const DENSE_LIMIT: usize = 8;

const OBSERVABLE_TOL: f64 = 1e-12;

/// One pair (A0, A1) of dichotomic qubit observables per party.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSet {
    pairs: Vec<(Mat2, Mat2)>,
}

impl ObservableSet {
    /// Checks Hermiticity and A² = 1 for every observable.
    pub fn new(pairs: Vec<(Mat2, Mat2)>) -> Result<Self> {
        for (i, (a0, a1)) in pairs.iter().enumerate() {
            for (x, a) in [a0, a1].into_iter().enumerate() {
                let h = hermitian_defect(a);
                if h > OBSERVABLE_TOL {
                    return Err(Error::InvalidObservables(format!(
                        "party {} A{x} is not Hermitian (defect {h:e})",
                        i + 1
                    )));
                }
                let u = unit_square_defect(a);
                if u > OBSERVABLE_TOL {
                    return Err(Error::InvalidObservables(format!(
                        "party {} A{x} does not square to 1 (defect {u:e})",
                        i + 1
                    )));
                }
            }
        }
        Ok(ObservableSet { pairs })
    }

    /// No validation; used to probe how certificates react to bad inputs.
    pub fn unchecked(pairs: Vec<(Mat2, Mat2)>) -> Self {
        ObservableSet { pairs }
    }

    pub fn n(&self) -> usize {
        self.pairs.len()
    }

    pub fn pair(&self, party: usize) -> &(Mat2, Mat2) {
        &self.pairs[party]
    }

    pub fn pairs(&self) -> &[(Mat2, Mat2)] {
        &self.pairs
    }

    pub fn replace(&mut self, party: usize, pair: (Mat2, Mat2)) {
        self.pairs[party] = pair;
    }

    /// Largest Hermiticity or unit-square defect over all observables.
    pub fn max_defect(&self) -> f64 {
        self.pairs
            .iter()
            .flat_map(|(a, b)| [a, b])
            .map(|m| hermitian_defect(m).max(unit_square_defect(m)))
            .fold(0.0, f64::max)
    }
}

/// Observable `cos φ·Z + sin φ·cos χ·X + sin φ·sin χ·Y`.
pub fn bloch_observable(polar: f64, azimuth: f64) -> Mat2 {
    let (s, c) = polar.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Mat2::new(
        C64::new(c, 0.0),
        C64::new(s * ca, -s * sa),
        C64::new(s * ca, s * sa),
        C64::new(-c, 0.0),
    )
}

/// Independent uniformly random Bloch directions for every observable.
pub fn random_observables<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ObservableSet {
    let mut draw = || {
        let polar = (1.0 - 2.0 * rng.random::<f64>()).acos();
        let azimuth = std::f64::consts::TAU * rng.random::<f64>();
        bloch_observable(polar, azimuth)
    };
    ObservableSet {
        pairs: (0..n).map(|_| (draw(), draw())).collect(),
    }
}

/// Observables reaching the quantum bound on the expression's target state.
pub fn canonical_observables(e: &BellExpression) -> Result<ObservableSet> {
    let n = e.n();
    let plain = (sigma_x(), sigma_z());
    let mut pairs = vec![plain; n];
    match e.family() {
        Family::TiltedGhz => {
            let theta = e.meta().theta.ok_or_else(|| Error::Parse("tilted expression without theta".into()))?;
            let (s, c) = tilted_mu_sin_cos(theta);
            pairs[0] = (mat2(c, s, s, -c), mat2(-c, s, s, c));
        }
        Family::Custom => return Err(Error::NoClosedForm(Family::Custom.to_string())),
        _ => {
            for &j in &e.meta().substituted {
                pairs[j] = (sigma_h(), sigma_v());
            }
        }
    }
    ObservableSet::new(pairs)
}

pub fn classical_bound_formula(e: &BellExpression) -> Result<f64> {
    match e.family() {
        Family::TiltedGhz => Ok(tilted_classical_bound(e.n(), theta(e)?)),
        Family::Custom => Err(Error::NoClosedForm(Family::Custom.to_string())),
        _ => Ok(plan(e)?.classical_bound()),
    }
}

pub fn quantum_bound_formula(e: &BellExpression) -> Result<f64> {
    match e.family() {
        Family::TiltedGhz => Ok(2.0 * SQRT_2 * (e.n() as f64 - 1.0)),
        Family::Custom => Err(Error::NoClosedForm(Family::Custom.to_string())),
        _ => Ok(plan(e)?.quantum_bound()),
    }
}

fn theta(e: &BellExpression) -> Result<f64> {
    e.meta()
        .theta
        .ok_or_else(|| Error::Parse("tilted expression without theta".into()))
}

fn plan(e: &BellExpression) -> Result<crate::inequalities::StabilizerPlan> {
    e.plan()
        .ok_or_else(|| Error::Parse("graph expression without graph metadata".into()))
}

/// Deterministic local strategy: outcomes (a0, a1) ∈ {±1}² for each party.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub outcomes: Vec<[i8; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalOptimum {
    pub value: f64,
    pub strategy: Strategy,
}

/// Value of the expression under a deterministic strategy.
pub fn evaluate_strategy(e: &BellExpression, s: &Strategy) -> f64 {
    e.terms()
        .iter()
        .map(|t| {
            t.coeff
                * t.factors
                    .iter()
                    .map(|(&p, &setting)| {
                        let [a0, a1] = s.outcomes[p];
                        setting.value(a0 as f64, a1 as f64)
                    })
                    .product::<f64>()
        })
        .sum()
}

/// Exact maximum over all 4^N deterministic strategies.
///
/// Strategy index bit 2p is party p's A0 outcome and bit 2p+1 its A1 outcome
/// (bit set means −1). Ties resolve to the lowest index.
pub fn classical_bound_bruteforce(e: &BellExpression) -> Result<ClassicalOptimum> {
    let n = e.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::Guard {
            what: "classical brute force",
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let terms: Vec<(f64, Vec<(usize, crate::inequalities::Setting)>)> = e
        .terms()
        .iter()
        .map(|t| (t.coeff, t.factors.iter().map(|(&p, &s)| (p, s)).collect()))
        .collect();
    let value_of = |idx: u64| -> f64 {
        let sign = |bit: usize| if idx >> bit & 1 == 1 { -1.0 } else { 1.0 };
        terms
            .iter()
            .map(|(c, fs)| {
                c * fs
                    .iter()
                    .map(|&(p, s)| s.value(sign(2 * p), sign(2 * p + 1)))
                    .product::<f64>()
            })
            .sum()
    };
    let total = 1u64 << (2 * n);
    let chunk = 1u64 << 12;
    let (value, index) = (0..total.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut best = (f64::NEG_INFINITY, 0u64);
            for idx in c * chunk..((c + 1) * chunk).min(total) {
                let v = value_of(idx);
                if v > best.0 {
                    best = (v, idx);
                }
            }
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, u64::MAX),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    let outcomes = (0..n)
        .map(|p| {
            let bit = |b: usize| if index >> b & 1 == 1 { -1 } else { 1 };
            [bit(2 * p), bit(2 * p + 1)]
        })
        .collect();
    Ok(ClassicalOptimum {
        value,
        strategy: Strategy { outcomes },
    })
}

/// Bell operator with the given observables substituted, kept in local form.
pub fn bell_operator(e: &BellExpression, obs: &ObservableSet) -> Result<LocalSum> {
    if obs.n() != e.n() {
        return Err(Error::SizeMismatch {
            expected: e.n(),
            found: obs.n(),
        });
    }
    let mut op = LocalSum::new(e.n());
    for t in e.terms() {
        let mut prod = LocalProduct::identity(e.n());
        for (&p, &s) in &t.factors {
            let (a0, a1) = obs.pair(p);
            prod.set(p, s.operator(a0, a1));
        }
        op.push(t.coeff, prod);
    }
    Ok(op)
}

/// ⟨v|B|v⟩ computed matrix-free.
pub fn evaluate_expression(e: &BellExpression, v: &StateVector, obs: &ObservableSet) -> Result<f64> {
    if v.n() != e.n() {
        return Err(Error::SizeMismatch {
            expected: e.n(),
            found: v.n(),
        });
    }
    let b = bell_operator(e, obs)?;
    let value = linalg::inner(v.amplitudes(), &b.apply(v.amplitudes()));
    if value.im.abs() > 1e-9 * (1.0 + value.re.abs()) {
        return Err(Error::NonHermitian(value.im.abs()));
    }
    Ok(value.re)
}

/// Largest eigenvalue of B(obs) by restarted Lanczos on B + c·1.
pub fn max_eigenvalue(e: &BellExpression, obs: &ObservableSet) -> Result<f64> {
    max_eigenvalue_with(e, obs, &LanczosConfig::default())
}

pub fn max_eigenvalue_with(e: &BellExpression, obs: &ObservableSet, cfg: &LanczosConfig) -> Result<f64> {
    if e.n() > MATRIX_FREE_LIMIT {
        return Err(Error::Guard {
            what: "matrix-free eigensolver",
            n: e.n(),
            limit: MATRIX_FREE_LIMIT,
        });
    }
    let b = bell_operator(e, obs)?;
    let shift = b.norm_bound();
    linalg::largest_eigenvalue(b.dim(), shift, |v| b.apply(v), cfg)
}

/// Largest eigenvalue from a dense Hermitian eigensolve.
pub fn max_eigenvalue_dense(e: &BellExpression, obs: &ObservableSet) -> Result<f64> {
    if e.n() > DENSE_LIMIT {
        return Err(Error::Guard {
            what: "dense Bell operator",
            n: e.n(),
            limit: DENSE_LIMIT,
        });
    }
    let b = bell_operator(e, obs)?.to_dense();
    Ok(*hermitian_eigenvalues(&b).last().expect("nonempty spectrum"))
}

/// Cross-checked bounds for one expression.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub family: Family,
    pub beta_c_formula: f64,
    pub beta_c_bruteforce: Option<f64>,
    pub beta_q_formula: f64,
    pub state_value: f64,
    pub lambda_max: Option<f64>,
    pub lambda_max_dense: Option<f64>,
    pub ratio_formula: f64,
    pub ratio_numeric: Option<f64>,
    pub strategy: Option<Strategy>,
    pub deltas: Deltas,
}

/// Absolute differences between the formula values and each numeric route.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Deltas {
    pub classical: Option<f64>,
    pub state: f64,
    pub lambda_max: Option<f64>,
    pub lambda_max_dense: Option<f64>,
}

impl BoundReport {
    /// True when every available numeric route agrees with the formulas.
    pub fn agrees(&self, tol: f64) -> bool {
        let d = &self.deltas;
        d.state <= tol
            && [d.classical, d.lambda_max, d.lambda_max_dense]
                .iter()
                .flatten()
                .all(|&x| x <= tol)
    }
}

/// Which numeric routes to run.
#[derive(Clone, Debug)]
pub struct BoundOptions {
    pub bruteforce: bool,
    pub eigen: bool,
    pub dense: bool,
    pub lanczos: LanczosConfig,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            bruteforce: true,
            eigen: true,
            dense: true,
            lanczos: LanczosConfig::default(),
        }
    }
}

impl BoundOptions {
    /// Enables each route only when the party count is within its guard.
    pub fn for_size(n: usize) -> Self {
        BoundOptions {
            bruteforce: n <= BRUTE_FORCE_LIMIT,
            eigen: n <= MATRIX_FREE_LIMIT,
            dense: n <= DENSE_LIMIT,
            lanczos: LanczosConfig::default(),
        }
    }
}

pub fn bound_report(e: &BellExpression, opts: &BoundOptions) -> Result<BoundReport> {
    let beta_c = classical_bound_formula(e)?;
    let beta_q = quantum_bound_formula(e)?;
    let obs = canonical_observables(e)?;
    let state_value = evaluate_expression(e, &e.target_state()?, &obs)?;
    let classical = opts.bruteforce.then(|| classical_bound_bruteforce(e)).transpose()?;
    let lambda = opts.eigen.then(|| max_eigenvalue_with(e, &obs, &opts.lanczos)).transpose()?;
    let dense = opts.dense.then(|| max_eigenvalue_dense(e, &obs)).transpose()?;
    let beta_c_bruteforce = classical.as_ref().map(|c| c.value);
    Ok(BoundReport {
        n: e.n(),
        family: e.family(),
        beta_c_formula: beta_c,
        beta_c_bruteforce,
        beta_q_formula: beta_q,
        state_value,
        lambda_max: lambda,
        lambda_max_dense: dense,
        ratio_formula: beta_q / beta_c,
        ratio_numeric: beta_c_bruteforce.map(|c| lambda.unwrap_or(state_value) / c),
        strategy: classical.map(|c| c.strategy),
        deltas: Deltas {
            classical: beta_c_bruteforce.map(|c| (c - beta_c).abs()),
            state: (state_value - beta_q).abs(),
            lambda_max: lambda.map(|l| (l - beta_q).abs()),
            lambda_max_dense: dense.map(|l| (l - beta_q).abs()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{Builtin, Graph};
    use crate::inequalities::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6, FRAC_PI_8};

    fn graph_expr(kind: Builtin, n: usize) -> BellExpression {
        build_graph_inequality(&Graph::builtin(kind, n).unwrap()).unwrap()
    }

    fn builtin_exprs(max_n: usize) -> Vec<BellExpression> {
        let mut out = Vec::new();
        for n in 2..=max_n {
            for kind in Builtin::ALL {
                if let Ok(g) = Graph::builtin(kind, n) {
                    out.push(build_graph_inequality(&g).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn classical_examples() {
        assert_eq!(classical_bound_bruteforce(&graph_expr(Builtin::Complete, 2)).unwrap().value, 2.0);
        assert_eq!(classical_bound_bruteforce(&graph_expr(Builtin::Ring, 5)).unwrap().value, 6.0);
        let ring6 = Graph::builtin(Builtin::Ring, 6).unwrap();
        let e = build_multi_substitution(&ring6, &[0, 3]).unwrap();
        assert_eq!(classical_bound_bruteforce(&e).unwrap().value, 8.0);
        assert_eq!(classical_bound_formula(&graph_expr(Builtin::Ring, 7)).unwrap(), 8.0);
        assert_eq!(classical_bound_formula(&graph_expr(Builtin::Star, 7)).unwrap(), 12.0);
        let t = build_tilted_ghz(3, FRAC_PI_6).unwrap();
        let formula = classical_bound_formula(&t).unwrap();
        assert!((formula - 6.0 / 1.25f64.sqrt()).abs() < 1e-12);
        assert!((classical_bound_bruteforce(&t).unwrap().value - formula).abs() < 1e-9);
    }

    #[test]
    fn strategy_reproduces_value() {
        for e in builtin_exprs(6) {
            let opt = classical_bound_bruteforce(&e).unwrap();
            assert_eq!(evaluate_strategy(&e, &opt.strategy), opt.value);
        }
    }

    #[test]
    fn all_ones_attains_graph_bound() {
        for e in builtin_exprs(9) {
            let ones = super::Strategy {
                outcomes: vec![[1, 1]; e.n()],
            };
            assert_eq!(evaluate_strategy(&e, &ones), classical_bound_formula(&e).unwrap());
        }
    }

    #[test]
    fn brute_force_guard() {
        let e = graph_expr(Builtin::Ring, 14);
        assert!(classical_bound_bruteforce(&e).unwrap_err().is_guard());
    }

    #[test]
    fn quantum_examples() {
        for n in 2..8 {
            let star = graph_expr(Builtin::Star, n);
            assert!((quantum_bound_formula(&star).unwrap() - 2.0 * SQRT_2 * (n - 1) as f64).abs() < 1e-12);
        }
        for n in 3..8 {
            let ring = graph_expr(Builtin::Ring, n);
            assert!((quantum_bound_formula(&ring).unwrap() - (n as f64 + 4.0 * SQRT_2 - 3.0)).abs() < 1e-12);
        }
        assert!((quantum_bound_formula(&graph_expr(Builtin::Complete, 2)).unwrap() - 2.0 * SQRT_2).abs() < 1e-15);
        assert!(matches!(
            quantum_bound_formula(&BellExpression::from_json(r#"{"n":1,"terms":[{"coeff":1,"factors":{"1":"A0"}}]}"#).unwrap()),
            Err(Error::NoClosedForm(_))
        ));
    }

    #[test]
    fn canonical_observable_examples() {
        let e = graph_expr(Builtin::Ring, 5);
        let obs = canonical_observables(&e).unwrap();
        let (a0, _) = obs.pair(0);
        assert!((a0 * a0 - Mat2::identity()).norm() < 1e-15);
        let t = build_tilted_ghz(4, FRAC_PI_4).unwrap();
        let tobs = canonical_observables(&t).unwrap();
        let gobs = canonical_observables(&build_ghz_inequality(4).unwrap()).unwrap();
        assert!((tobs.pair(0).0 - gobs.pair(0).0).norm() < 1e-15);
        assert!((tobs.pair(0).1 - gobs.pair(0).1).norm() < 1e-15);
        let t6 = build_tilted_ghz(3, FRAC_PI_6).unwrap();
        assert!((t6.meta().mu.unwrap() - (3.0f64 / 8.0).sqrt().asin()).abs() < 1e-14);
    }

    #[test]
    fn state_values_hit_quantum_bound() {
        let mut exprs = builtin_exprs(8);
        for n in 2..7 {
            exprs.push(build_ghz_inequality(n).unwrap());
            for theta in [FRAC_PI_8, FRAC_PI_6, FRAC_PI_4] {
                exprs.push(build_tilted_ghz(n, theta).unwrap());
            }
        }
        for e in exprs {
            let obs = canonical_observables(&e).unwrap();
            let v = evaluate_expression(&e, &e.target_state().unwrap(), &obs).unwrap();
            let bq = quantum_bound_formula(&e).unwrap();
            assert!((v - bq).abs() < 1e-9, "{} n={}: {v} vs {bq}", e.family(), e.n());
        }
    }

    #[test]
    fn eigenvalues_match_and_dense_agrees() {
        for e in builtin_exprs(7) {
            let obs = canonical_observables(&e).unwrap();
            let bq = quantum_bound_formula(&e).unwrap();
            let l = max_eigenvalue(&e, &obs).unwrap();
            let d = max_eigenvalue_dense(&e, &obs).unwrap();
            assert!((l - bq).abs() < 1e-8, "lanczos {l} vs {bq}");
            assert!((d - bq).abs() < 1e-8, "dense {d} vs {bq}");
        }
    }

    #[test]
    fn random_observables_never_beat_quantum_bound() {
        let e = graph_expr(Builtin::Ring, 5);
        let bq = quantum_bound_formula(&e).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let obs = random_observables(5, &mut rng);
            assert!(max_eigenvalue_dense(&e, &obs).unwrap() <= bq + 1e-9);
        }
    }

    #[test]
    fn nontrivial_and_ring_ratio_monotone() {
        for e in builtin_exprs(9) {
            assert!(quantum_bound_formula(&e).unwrap() > classical_bound_formula(&e).unwrap());
        }
        for n in 6..16 {
            let ring = Graph::builtin(Builtin::Ring, n).unwrap();
            let mut last = 0.0;
            for k in 1..=n / 3 {
                let subs: Vec<usize> = (0..k).map(|i| 3 * i).collect();
                let m = build_multi_substitution(&ring, &subs).unwrap();
                let ratio = m.meta().beta_q.unwrap() / m.meta().beta_c.unwrap();
                assert!(ratio > last);
                last = ratio;
            }
        }
    }

    #[test]
    fn observable_validation() {
        let bad = ObservableSet::new(vec![(sigma_x() * crate::linalg::real(1.1), sigma_z())]);
        assert!(matches!(bad, Err(Error::InvalidObservables(_))));
        let e = graph_expr(Builtin::Ring, 4);
        let obs = canonical_observables(&graph_expr(Builtin::Ring, 5)).unwrap();
        assert!(matches!(bell_operator(&e, &obs), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn report_agrees() {
        let r = bound_report(&graph_expr(Builtin::Ring, 7), &BoundOptions::for_size(7)).unwrap();
        assert!(r.agrees(1e-8));
        assert_eq!(r.beta_c_bruteforce, Some(8.0));
        assert!((r.ratio_formula - (4.0 + 4.0 * SQRT_2) / 8.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn eigen_bounded_by_sos(seed in any::<u64>(), k in 0usize..4, n in 3usize..6) {
            let Ok(g) = Graph::builtin(Builtin::ALL[k], n) else { return Ok(()) };
            let e = build_graph_inequality(&g).unwrap();
            let obs = random_observables(n, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert!(max_eigenvalue(&e, &obs).unwrap() <= quantum_bound_formula(&e).unwrap() + 1e-8);
        }

        #[test]
        fn random_observables_are_valid(seed in any::<u64>()) {
            let obs = random_observables(4, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert!(obs.max_defect() < 1e-12);
        }
    }
}
