//! Symbolic Bell expressions built from stabilizers.
//!
//! Every graph-derived expression comes out of one recipe: take the
//! stabilizer generators of a graph (optionally in a Hadamard-rotated local
//! frame), pick a set of *substitution* vertices, and replace letters by
//! measurement settings. At a substitution vertex X becomes `A0 + A1` and Z
//! becomes `A0 − A1`; everywhere else X becomes `A0` and Z becomes `A1`. The
//! generator owned by a substitution vertex `j` is weighted by `|n(j)|`.
//!
//! The tilted-GHZ family is written out directly from its closed-form
//! coefficients; it is not a Pauli-product stabilizer family.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{transposition, Builtin, Graph};
use crate::linalg::Mat2;
use crate::pauli_states::{
    cos_2theta, ghz_state, graph_state, stabilizer_generators, Letter, PauliWord, StateVector,
};
use crate::linalg::hadamard;

/// What the stated correlator-count claim says, kept for reports.
pub const COUNT_DISCREPANCY_NOTE: &str = "expanded count is N + n_max + 1 atomic correlators; \
the stated figure of N - n_max - 1 expectation values does not match the expansion and is not used";

/// Per-party measurement choice inside a correlator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    A0,
    A1,
    /// A0 + A1
    #[serde(rename = "SUM")]
    Sum,
    /// A0 − A1
    #[serde(rename = "DIFF")]
    Diff,
}

impl Setting {
    /// Value under a deterministic assignment of ±1 outcomes.
    pub fn value(self, a0: f64, a1: f64) -> f64 {
        match self {
            Setting::A0 => a0,
            Setting::A1 => a1,
            Setting::Sum => a0 + a1,
            Setting::Diff => a0 - a1,
        }
    }

    pub fn operator(self, a0: &Mat2, a1: &Mat2) -> Mat2 {
        match self {
            Setting::A0 => *a0,
            Setting::A1 => *a1,
            Setting::Sum => a0 + a1,
            Setting::Diff => a0 - a1,
        }
    }

    /// Atomic expansion as (sign, A0|A1) pairs.
    pub fn atoms(self) -> &'static [(f64, Setting)] {
        match self {
            Setting::A0 => &[(1.0, Setting::A0)],
            Setting::A1 => &[(1.0, Setting::A1)],
            Setting::Sum => &[(1.0, Setting::A0), (1.0, Setting::A1)],
            Setting::Diff => &[(1.0, Setting::A0), (-1.0, Setting::A1)],
        }
    }

    pub fn is_combination(self) -> bool {
        matches!(self, Setting::Sum | Setting::Diff)
    }

    fn symbol(self) -> &'static str {
        match self {
            Setting::A0 => "A0",
            Setting::A1 => "A1",
            Setting::Sum => "SUM",
            Setting::Diff => "DIFF",
        }
    }
}

/// Weighted correlator; parties missing from `factors` are traced out.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub factors: BTreeMap<usize, Setting>,
}

impl Term {
    pub fn new(coeff: f64, factors: impl IntoIterator<Item = (usize, Setting)>) -> Self {
        Term {
            coeff,
            factors: factors.into_iter().collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Single substitution at the pivot.
    Graph,
    MultiSubstitution,
    /// Ring on 3L vertices with every third vertex substituted.
    RingMax,
    TiltedGhz,
    /// Parsed without recognised construction metadata.
    Custom,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Graph => "graph",
            Family::MultiSubstitution => "multi_substitution",
            Family::RingMax => "ring_max",
            Family::TiltedGhz => "tilted_ghz",
            Family::Custom => "custom",
        })
    }
}

/// Construction record carried with an expression. Vertex lists are 0-indexed
/// in the built labelling (pivot at vertex 0).
#[derive(Clone, Debug, PartialEq)]
pub struct Meta {
    pub family: Family,
    pub graph: Option<Graph>,
    /// `permutation[original] = built label`.
    pub permutation: Option<Vec<usize>>,
    pub substituted: Vec<usize>,
    /// Parties whose local frame is Hadamard-rotated (X and Z exchanged).
    pub hadamard: Vec<usize>,
    pub theta: Option<f64>,
    pub mu: Option<f64>,
    pub beta_c: Option<f64>,
    pub beta_q: Option<f64>,
}

impl Meta {
    pub fn custom() -> Self {
        Meta {
            family: Family::Custom,
            graph: None,
            permutation: None,
            substituted: Vec::new(),
            hadamard: Vec::new(),
            theta: None,
            mu: None,
            beta_c: None,
            beta_q: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BellExpression {
    n: usize,
    terms: Vec<Term>,
    meta: Meta,
}

impl BellExpression {
    /// Validate, merge duplicate factor maps, drop zero coefficients and sort.
    pub fn new(n: usize, terms: Vec<Term>, meta: Meta) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("expression needs at least one party".into()));
        }
        let mut merged: BTreeMap<BTreeMap<usize, Setting>, f64> = BTreeMap::new();
        for t in terms {
            if t.factors.is_empty() {
                return Err(Error::InvalidArgument("term without factors".into()));
            }
            if !t.coeff.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite coefficient {}", t.coeff)));
            }
            if let Some(&p) = t.factors.keys().find(|&&p| p >= n) {
                return Err(Error::VertexOutOfRange { vertex: p + 1, n });
            }
            *merged.entry(t.factors).or_insert(0.0) += t.coeff;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(factors, coeff)| Term { coeff, factors })
            .collect();
        Ok(BellExpression { n, terms, meta })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn family(&self) -> Family {
        self.meta.family
    }

    /// Stabilizer recipe that produced this expression, when there is one.
    pub fn plan(&self) -> Option<StabilizerPlan> {
        match self.meta.family {
            Family::Graph | Family::MultiSubstitution | Family::RingMax => {
                Some(StabilizerPlan {
                    graph: self.meta.graph.clone()?,
                    substituted: self.meta.substituted.clone(),
                    hadamard: self.meta.hadamard.clone(),
                })
            }
            _ => None,
        }
    }

    /// State reaching the quantum bound with the canonical observables.
    pub fn target_state(&self) -> Result<StateVector> {
        match self.meta.family {
            Family::TiltedGhz => {
                let theta = self
                    .meta
                    .theta
                    .ok_or_else(|| Error::Parse("tilted expression without theta".into()))?;
                ghz_state(self.n, theta)
            }
            Family::Custom => Err(Error::NoClosedForm(Family::Custom.to_string())),
            _ => self
                .plan()
                .ok_or_else(|| Error::Parse("graph expression without graph metadata".into()))?
                .target_state(),
        }
    }

    /// SUM/DIFF distributed into single-setting correlators, like terms merged.
    pub fn expand_atomic(&self) -> Vec<Term> {
        let mut merged: BTreeMap<BTreeMap<usize, Setting>, f64> = BTreeMap::new();
        for t in &self.terms {
            let mut partial: Vec<(f64, BTreeMap<usize, Setting>)> = vec![(t.coeff, BTreeMap::new())];
            for (&party, &setting) in &t.factors {
                partial = partial
                    .into_iter()
                    .flat_map(|(c, map)| {
                        setting.atoms().iter().map(move |&(sign, atom)| {
                            let mut map = map.clone();
                            map.insert(party, atom);
                            (c * sign, map)
                        })
                    })
                    .collect();
            }
            for (c, map) in partial {
                *merged.entry(map).or_insert(0.0) += c;
            }
        }
        merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(factors, coeff)| Term { coeff, factors })
            .collect()
    }

    /// Exchange A0 and A1 at `parties`; combinations pick up the induced sign.
    pub fn swap_settings(&self, parties: &[usize]) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut coeff = t.coeff;
                let factors = t
                    .factors
                    .iter()
                    .map(|(&p, &s)| {
                        if !parties.contains(&p) {
                            return (p, s);
                        }
                        let swapped = match s {
                            Setting::A0 => Setting::A1,
                            Setting::A1 => Setting::A0,
                            Setting::Sum => Setting::Sum,
                            Setting::Diff => {
                                coeff = -coeff;
                                Setting::Diff
                            }
                        };
                        (p, swapped)
                    })
                    .collect();
                Term { coeff, factors }
            })
            .collect();
        Self::new(self.n, terms, Meta::custom())
    }

    /// True when both expressions have identical term lists.
    pub fn same_terms(&self, other: &BellExpression) -> bool {
        self.n == other.n && self.terms == other.terms
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_value()).expect("expression serializes")
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(ExpressionJson::from(self)).expect("expression serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ExpressionJson = serde_json::from_str(text)?;
        raw.try_into()
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let raw: ExpressionJson = serde_json::from_value(value)?;
        raw.try_into()
    }
}

impl fmt::Display for BellExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, t) in self.terms.iter().enumerate() {
            if k > 0 {
                f.write_str(if t.coeff < 0.0 { " - " } else { " + " })?;
            } else if t.coeff < 0.0 {
                f.write_str("-")?;
            }
            let c = t.coeff.abs();
            if c != 1.0 {
                write!(f, "{c}·")?;
            }
            f.write_str("<")?;
            for (i, (p, s)) in t.factors.iter().enumerate() {
                if i > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{}({})", s.symbol(), p + 1)?;
            }
            f.write_str(">")?;
        }
        Ok(())
    }
}

/// Role of a substituted stabilizer within the expression.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Role {
    /// Generator of substitution vertex `j`; carries weight |n(j)|.
    Owner(usize),
    /// Generator with a Z letter on a substitution vertex.
    Partner,
    Plain,
}

impl Role {
    pub fn coefficient(self) -> f64 {
        match self {
            Role::Owner(deg) => deg as f64,
            Role::Partner | Role::Plain => 1.0,
        }
    }

    /// Weight of (1 − P)² in the sum-of-squares decomposition.
    pub fn sos_weight(self) -> f64 {
        match self {
            Role::Owner(deg) => deg as f64 / SQRT_2,
            Role::Partner => 1.0 / SQRT_2,
            Role::Plain => 0.5,
        }
    }

    /// Normalization turning the correlator into the SOS operator P.
    pub fn operator_scale(self) -> f64 {
        match self {
            Role::Owner(_) | Role::Partner => 1.0 / SQRT_2,
            Role::Plain => 1.0,
        }
    }
}

/// One generator after substitution.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub role: Role,
    pub factors: BTreeMap<usize, Setting>,
}

/// Graph + substitution set + local frame: everything the graph families need.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilizerPlan {
    pub graph: Graph,
    pub substituted: Vec<usize>,
    pub hadamard: Vec<usize>,
}

impl StabilizerPlan {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Generators in the plan's local frame.
    pub fn words(&self) -> Vec<PauliWord> {
        stabilizer_generators(&self.graph)
            .iter()
            .map(|w| w.hadamard_conjugate(&self.hadamard))
            .collect()
    }

    pub fn blocks(&self) -> Vec<Block> {
        self.words()
            .iter()
            .map(|w| {
                let mut role = Role::Plain;
                let mut factors = BTreeMap::new();
                for (q, &letter) in w.letters().iter().enumerate() {
                    let subst = self.substituted.contains(&q);
                    let setting = match (letter, subst) {
                        (Letter::I, _) => continue,
                        (Letter::X, true) => {
                            role = Role::Owner(w.letters().iter().filter(|&&l| l != Letter::I).count() - 1);
                            Setting::Sum
                        }
                        (Letter::Z, true) => {
                            role = Role::Partner;
                            Setting::Diff
                        }
                        (Letter::X, false) => Setting::A0,
                        (Letter::Z, false) => Setting::A1,
                    };
                    factors.insert(q, setting);
                }
                Block { role, factors }
            })
            .collect()
    }

    /// Σ_j |n(j)| over substitution vertices.
    pub fn substituted_degree(&self) -> usize {
        self.substituted.iter().map(|&j| self.graph.degree(j)).sum()
    }

    pub fn classical_bound(&self) -> f64 {
        (self.n() - self.substituted.len() + self.substituted_degree()) as f64
    }

    pub fn quantum_bound(&self) -> f64 {
        (2.0 * SQRT_2 - 1.0) * self.substituted_degree() as f64
            + (self.n() - self.substituted.len()) as f64
    }

    pub fn target_state(&self) -> Result<StateVector> {
        let mut v = graph_state(&self.graph)?;
        for &q in &self.hadamard {
            v = v.with_gate(q, &hadamard())?;
        }
        Ok(v)
    }

    fn expression(&self, family: Family, permutation: Option<Vec<usize>>) -> Result<BellExpression> {
        let terms = self
            .blocks()
            .into_iter()
            .map(|b| Term {
                coeff: b.role.coefficient(),
                factors: b.factors,
            })
            .collect();
        let meta = Meta {
            family,
            graph: Some(self.graph.clone()),
            permutation,
            substituted: self.substituted.clone(),
            hadamard: self.hadamard.clone(),
            theta: None,
            mu: None,
            beta_c: Some(self.classical_bound()),
            beta_q: Some(self.quantum_bound()),
        };
        BellExpression::new(self.n(), terms, meta)
    }
}

/// Single substitution at the pivot (lowest-index vertex of maximal degree).
///
/// The graph is relabelled so the pivot is vertex 0; the permutation is
/// recorded in the metadata.
pub fn build_graph_inequality(g: &Graph) -> Result<BellExpression> {
    build_multi_substitution(g, &[g.pivot()])
}

/// Substitutions at every vertex of `subs` (0-indexed, must include the pivot).
///
/// Substitution vertices must be pairwise non-adjacent and share no neighbour.
pub fn build_multi_substitution(g: &Graph, subs: &[usize]) -> Result<BellExpression> {
    let n = g.n();
    let pivot = g.pivot();
    for &v in subs {
        if v >= n {
            return Err(Error::VertexOutOfRange { vertex: v + 1, n });
        }
    }
    if !subs.contains(&pivot) {
        return Err(Error::PivotNotSubstituted(pivot + 1));
    }
    let mut sorted: Vec<usize> = subs.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for (a, &j) in sorted.iter().enumerate() {
        for &k in &sorted[a + 1..] {
            if g.has_edge(j, k) {
                return Err(Error::InvalidSubstitution(j + 1, k + 1, "are adjacent"));
            }
            let nj = g.neighborhood(j)?;
            if g.neighborhood(k)?.iter().any(|v| nj.contains(v)) {
                return Err(Error::InvalidSubstitution(j + 1, k + 1, "share a neighbour"));
            }
        }
    }
    let perm = transposition(n, 0, pivot);
    let graph = g.relabel(&perm)?;
    let mut substituted: Vec<usize> = sorted.iter().map(|&v| perm[v]).collect();
    substituted.sort_unstable();
    let family = if substituted.len() == 1 {
        Family::Graph
    } else {
        Family::MultiSubstitution
    };
    StabilizerPlan {
        graph,
        substituted,
        hadamard: Vec::new(),
    }
    .expression(family, Some(perm))
}

/// Ring on N = 3L vertices with vertices 1, 4, …, 3L−2 substituted.
pub fn build_ring_max(l: usize) -> Result<BellExpression> {
    if l == 0 {
        return Err(Error::InvalidArgument("ring-max family needs L ≥ 1".into()));
    }
    let n = 3 * l;
    let plan = StabilizerPlan {
        graph: Graph::builtin(Builtin::Ring, n)?,
        substituted: (0..l).map(|i| 3 * i).collect(),
        hadamard: Vec::new(),
    };
    let mut e = plan.expression(Family::RingMax, Some((0..n).collect()))?;
    e.meta.beta_c = Some((n + l) as f64);
    e.meta.beta_q = Some(n as f64 + (4.0 * SQRT_2 - 3.0) * l as f64);
    Ok(e)
}

/// Star graph in the frame where the leaves are Hadamard-rotated, so the
/// target state is GHZ_N and the generators are X…X and Z₁Z_i.
pub fn build_ghz_inequality(n: usize) -> Result<BellExpression> {
    let plan = StabilizerPlan {
        graph: Graph::builtin(Builtin::Star, n)?,
        substituted: vec![0],
        hadamard: (1..n).collect(),
    };
    plan.expression(Family::Graph, Some((0..n).collect()))
}

/// sin μ and cos μ with 2 sin²μ = sin²2θ.
pub fn tilted_mu_sin_cos(theta: f64) -> (f64, f64) {
    let c = cos_2theta(theta);
    ((2.0 * theta).sin() / SQRT_2, ((1.0 + c * c) / 2.0).sqrt())
}

pub fn tilted_classical_bound(n: usize, theta: f64) -> f64 {
    let c = cos_2theta(theta);
    2.0 * (n as f64 - 1.0) * (1.0 + c) / (1.0 + c * c).sqrt()
}

/// Tilted-GHZ family for θ ∈ (0, π/4].
pub fn build_tilted_ghz(n: usize, theta: f64) -> Result<BellExpression> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("tilted GHZ needs n ≥ 2, got {n}")));
    }
    if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_4) {
        return Err(Error::AngleOutOfRange {
            value: theta,
            range: "(0, π/4]",
        });
    }
    let c = cos_2theta(theta);
    let norm = 1.0 / (1.0 + c * c).sqrt();
    let m = n as f64 - 1.0;
    let mut terms = vec![Term::new(
        m,
        std::iter::once((0, Setting::Sum)).chain((1..n).map(|i| (i, Setting::A0))),
    )];
    terms.push(Term::new(m * c * norm, [(0, Setting::A0)]));
    terms.push(Term::new(-m * c * norm, [(0, Setting::A1)]));
    for i in 1..n {
        terms.push(Term::new(norm, [(0, Setting::Diff), (i, Setting::A1)]));
    }
    let (sin_mu, _) = tilted_mu_sin_cos(theta);
    let meta = Meta {
        family: Family::TiltedGhz,
        graph: None,
        permutation: None,
        substituted: vec![0],
        hadamard: Vec::new(),
        theta: Some(theta),
        mu: Some(sin_mu.asin()),
        beta_c: Some(tilted_classical_bound(n, theta)),
        beta_q: Some(2.0 * SQRT_2 * m),
    };
    BellExpression::new(n, terms, meta)
}

// ---------------------------------------------------------------------------
// JSON form (1-indexed parties)

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpressionJson {
    n: usize,
    terms: Vec<TermJson>,
    #[serde(default)]
    meta: Option<MetaJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermJson {
    coeff: f64,
    factors: BTreeMap<String, Setting>,
}

#[derive(Serialize, Deserialize)]
struct MetaJson {
    family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    graph: Option<Graph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    permutation: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    substituted: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    hadamard: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta_q: Option<f64>,
}

fn plus_one(v: &[usize]) -> Vec<usize> {
    v.iter().map(|x| x + 1).collect()
}

fn minus_one(v: &[usize], n: usize) -> Result<Vec<usize>> {
    v.iter()
        .map(|&x| {
            if x == 0 || x > n {
                Err(Error::VertexOutOfRange { vertex: x, n })
            } else {
                Ok(x - 1)
            }
        })
        .collect()
}

impl From<&BellExpression> for ExpressionJson {
    fn from(e: &BellExpression) -> Self {
        let m = &e.meta;
        ExpressionJson {
            n: e.n,
            terms: e
                .terms
                .iter()
                .map(|t| TermJson {
                    coeff: t.coeff,
                    factors: t.factors.iter().map(|(p, s)| ((p + 1).to_string(), *s)).collect(),
                })
                .collect(),
            meta: Some(MetaJson {
                family: m.family,
                graph: m.graph.clone(),
                permutation: m.permutation.as_deref().map(plus_one),
                substituted: plus_one(&m.substituted),
                hadamard: plus_one(&m.hadamard),
                theta: m.theta,
                mu: m.mu,
                beta_c: m.beta_c,
                beta_q: m.beta_q,
            }),
        }
    }
}

impl TryFrom<ExpressionJson> for BellExpression {
    type Error = Error;

    fn try_from(raw: ExpressionJson) -> Result<Self> {
        let n = raw.n;
        let terms = raw
            .terms
            .into_iter()
            .map(|t| {
                let factors = t
                    .factors
                    .into_iter()
                    .map(|(k, s)| {
                        let p: usize = k
                            .parse()
                            .map_err(|_| Error::Parse(format!("party key `{k}` is not an integer")))?;
                        if p == 0 || p > n {
                            return Err(Error::VertexOutOfRange { vertex: p, n });
                        }
                        Ok((p - 1, s))
                    })
                    .collect::<Result<BTreeMap<_, _>>>()?;
                Ok(Term {
                    coeff: t.coeff,
                    factors,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let meta = match raw.meta {
            None => Meta::custom(),
            Some(m) => {
                if let Some(g) = &m.graph {
                    if g.n() != n {
                        return Err(Error::SizeMismatch {
                            expected: n,
                            found: g.n(),
                        });
                    }
                }
                Meta {
                    family: m.family,
                    graph: m.graph,
                    permutation: m.permutation.as_deref().map(|p| minus_one(p, n)).transpose()?,
                    substituted: minus_one(&m.substituted, n)?,
                    hadamard: minus_one(&m.hadamard, n)?,
                    theta: m.theta,
                    mu: m.mu,
                    beta_c: m.beta_c,
                    beta_q: m.beta_q,
                }
            }
        };
        BellExpression::new(n, terms, meta)
    }
}
