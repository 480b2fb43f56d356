//! Real-coefficient Pauli words over {I, X, Z}, dense state vectors and the
//! graph / GHZ / tilted-GHZ constructions built on them.
//!
//! Qubit `q` (0-indexed) is bit `n - 1 - q` of a basis index: vertex 1 in
//! the 1-indexed external numbering is the most significant bit.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::linalg::{self, apply_local, qubit_bit, Mat2, C64, ONE, ZERO};

/// Largest qubit count for which dense states are built by default.
pub const DEFAULT_DENSE_LIMIT: usize = 16;

/// Tag written into state dumps describing the bit convention.
pub const BIT_CONVENTION: &str = "qubit1-msb";

const NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    I,
    X,
    Z,
}

/// Signed tensor product of {I, X, Z} letters.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliWord {
    letters: Vec<Letter>,
    coeff: f64,
}

impl PauliWord {
    pub fn new(letters: Vec<Letter>, coeff: f64) -> Result<Self> {
        if !coeff.is_finite() || coeff == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Pauli word coefficient must be finite and nonzero, got {coeff}"
            )));
        }
        if letters.is_empty() {
            return Err(Error::InvalidArgument("empty Pauli word".into()));
        }
        Ok(PauliWord { letters, coeff })
    }

    /// Single-letter word on `n` qubits.
    pub fn single(n: usize, q: usize, letter: Letter) -> Self {
        let mut letters = vec![Letter::I; n];
        letters[q] = letter;
        PauliWord { letters, coeff: 1.0 }
    }

    /// Parse a string such as `"XZI"`, optionally prefixed by `-`.
    pub fn parse(text: &str) -> Result<Self> {
        let (coeff, body) = match text.strip_prefix('-') {
            Some(rest) => (-1.0, rest),
            None => (1.0, text.strip_prefix('+').unwrap_or(text)),
        };
        let letters = body
            .chars()
            .map(|c| match c {
                'I' => Ok(Letter::I),
                'X' => Ok(Letter::X),
                'Z' => Ok(Letter::Z),
                other => Err(Error::Parse(format!("unknown Pauli letter `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(letters, coeff)
    }

    pub fn n(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.letters.clone(), self.coeff * factor)
    }

    /// Basis-index masks of the X and Z letters.
    pub fn masks(&self) -> (usize, usize) {
        let n = self.n();
        let mut x = 0;
        let mut z = 0;
        for (q, l) in self.letters.iter().enumerate() {
            match l {
                Letter::X => x |= qubit_bit(n, q),
                Letter::Z => z |= qubit_bit(n, q),
                Letter::I => {}
            }
        }
        (x, z)
    }

    /// Two words commute iff the number of sites holding {X, Z} is even.
    pub fn commutes_with(&self, other: &PauliWord) -> bool {
        let clashes = self
            .letters
            .iter()
            .zip(&other.letters)
            .filter(|(a, b)| matches!((a, b), (Letter::X, Letter::Z) | (Letter::Z, Letter::X)))
            .count();
        clashes % 2 == 0
    }

    /// Conjugate by Hadamards on `qubits`, swapping X and Z there.
    pub fn hadamard_conjugate(&self, qubits: &[usize]) -> Self {
        let mut letters = self.letters.clone();
        for &q in qubits {
            letters[q] = match letters[q] {
                Letter::X => Letter::Z,
                Letter::Z => Letter::X,
                Letter::I => Letter::I,
            };
        }
        PauliWord {
            letters,
            coeff: self.coeff,
        }
    }

    /// Single pass: X letters flip bits, Z letters contribute (−1)^bit.
    pub fn apply(&self, v: &StateVector) -> Result<Vec<C64>> {
        self.apply_amplitudes(v.n, &v.amps)
    }

    pub fn apply_amplitudes(&self, n: usize, amps: &[C64]) -> Result<Vec<C64>> {
        if n != self.n() {
            return Err(Error::SizeMismatch {
                expected: self.n(),
                found: n,
            });
        }
        let (x, z) = self.masks();
        let mut out = vec![ZERO; amps.len()];
        // X and Z letters sit on distinct sites, so their order is irrelevant.
        for (i, a) in amps.iter().enumerate() {
            let sign = if (i & z).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
            out[i ^ x] = a * (sign * self.coeff);
        }
        Ok(out)
    }
}

impl fmt::Display for PauliWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeff != 1.0 {
            write!(f, "{}·", self.coeff)?;
        }
        for l in &self.letters {
            f.write_str(match l {
                Letter::I => "I",
                Letter::X => "X",
                Letter::Z => "Z",
            })?;
        }
        Ok(())
    }
}

/// Real linear combination of Pauli words with distinct letter arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliSum {
    n: usize,
    words: Vec<PauliWord>,
}

impl PauliSum {
    /// Merge words with identical letters; words whose coefficients cancel are dropped.
    pub fn new(words: Vec<PauliWord>) -> Result<Self> {
        let n = words
            .first()
            .map(PauliWord::n)
            .ok_or_else(|| Error::InvalidArgument("empty Pauli sum".into()))?;
        let mut merged: Vec<(Vec<Letter>, f64)> = Vec::new();
        for w in words {
            if w.n() != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    found: w.n(),
                });
            }
            match merged.iter_mut().find(|(l, _)| *l == w.letters) {
                Some((_, c)) => *c += w.coeff,
                None => merged.push((w.letters, w.coeff)),
            }
        }
        let words = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(letters, coeff)| PauliWord { letters, coeff })
            .collect();
        Ok(PauliSum { n, words })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn words(&self) -> &[PauliWord] {
        &self.words
    }

    pub fn apply(&self, v: &StateVector) -> Result<Vec<C64>> {
        let mut out = vec![ZERO; v.dim()];
        for w in &self.words {
            for (o, x) in out.iter_mut().zip(w.apply(v)?) {
                *o += x;
            }
        }
        Ok(out)
    }
}

impl From<PauliWord> for PauliSum {
    fn from(w: PauliWord) -> Self {
        PauliSum {
            n: w.n(),
            words: vec![w],
        }
    }
}

/// Unit-norm amplitude vector on `n` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(n: usize, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != 1 << n {
            return Err(Error::SizeMismatch {
                expected: 1 << n,
                found: amps.len(),
            });
        }
        let norm = linalg::norm(&amps);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(StateVector { n, amps })
    }

    /// Normalize arbitrary amplitudes.
    pub fn normalized(n: usize, mut amps: Vec<C64>) -> Result<Self> {
        let norm = linalg::norm(&amps);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized(norm));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Self::new(n, amps)
    }

    pub fn basis(n: usize, index: usize) -> Result<Self> {
        let mut amps = vec![ZERO; 1 << n];
        *amps.get_mut(index).ok_or(Error::SizeMismatch {
            expected: 1 << n,
            found: index,
        })? = ONE;
        Ok(StateVector { n, amps })
    }

    /// |+⟩^{⊗n}.
    pub fn uniform(n: usize) -> Self {
        let d = 1usize << n;
        StateVector {
            n,
            amps: vec![linalg::real(1.0 / (d as f64).sqrt()); d],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        linalg::inner(&self.amps, &other.amps)
    }

    /// |⟨self|other⟩|².
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn apply_local(&self, q: usize, m: &Mat2) -> Vec<C64> {
        let mut out = self.amps.clone();
        apply_local(&mut out, self.n, q, m);
        out
    }

    /// Apply a unitary single-qubit gate, keeping the state normalized.
    pub fn with_gate(&self, q: usize, m: &Mat2) -> Result<Self> {
        Self::normalized(self.n, self.apply_local(q, m))
    }

    /// Write interleaved little-endian (re, im) doubles to `data` and a JSON
    /// header `{"n": .., "convention": ..}` to `header`.
    pub fn write_dump(&self, data: &Path, header: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(data)?);
        for a in &self.amps {
            w.write_all(&a.re.to_le_bytes())?;
            w.write_all(&a.im.to_le_bytes())?;
        }
        w.flush()?;
        let head = DumpHeader {
            n: self.n,
            convention: BIT_CONVENTION.to_string(),
        };
        std::fs::write(header, serde_json::to_string(&head)?)?;
        Ok(())
    }

    pub fn read_dump(data: &Path, header: &Path) -> Result<Self> {
        let head: DumpHeader = serde_json::from_str(&std::fs::read_to_string(header)?)?;
        if head.convention != BIT_CONVENTION {
            return Err(Error::Parse(format!(
                "unsupported bit convention `{}`",
                head.convention
            )));
        }
        let mut bytes = Vec::new();
        BufReader::new(File::open(data)?).read_to_end(&mut bytes)?;
        if bytes.len() != 16 << head.n {
            return Err(Error::SizeMismatch {
                expected: 16 << head.n,
                found: bytes.len(),
            });
        }
        let amps = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                C64::new(re, im)
            })
            .collect();
        Self::new(head.n, amps)
    }
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    n: usize,
    convention: String,
}

/// G_i = X_i ⊗ Z_{n(i)} for every vertex.
pub fn stabilizer_generators(g: &Graph) -> Vec<PauliWord> {
    let n = g.n();
    (0..n)
        .map(|i| {
            let mut letters = vec![Letter::I; n];
            letters[i] = Letter::X;
            for &j in g.neighborhood(i).expect("vertex in range") {
                letters[j] = Letter::Z;
            }
            PauliWord { letters, coeff: 1.0 }
        })
        .collect()
}

pub fn graph_state(g: &Graph) -> Result<StateVector> {
    graph_state_with_limit(g, DEFAULT_DENSE_LIMIT)
}

/// Amplitude of |τ⟩ is 2^{−N/2}·(−1)^{number of edges inside τ}.
pub fn graph_state_with_limit(g: &Graph, limit: usize) -> Result<StateVector> {
    let n = g.n();
    if n > limit {
        return Err(Error::Guard {
            what: "dense graph state",
            n,
            limit,
        });
    }
    let dim = 1usize << n;
    let scale = 1.0 / (dim as f64).sqrt();
    let edge_masks: Vec<usize> = g
        .edges()
        .iter()
        .map(|&(a, b)| qubit_bit(n, a) | qubit_bit(n, b))
        .collect();
    let amps = (0..dim)
        .map(|tau| {
            let inside = edge_masks.iter().filter(|&&m| tau & m == m).count();
            linalg::real(if inside % 2 == 1 { -scale } else { scale })
        })
        .collect();
    Ok(StateVector { n, amps })
}

fn check_theta(theta: f64, allow_zero: bool) -> Result<()> {
    let ok = theta <= FRAC_PI_4 && (theta > 0.0 || (allow_zero && theta == 0.0));
    if ok {
        Ok(())
    } else {
        Err(Error::AngleOutOfRange {
            value: theta,
            range: if allow_zero { "[0, π/4]" } else { "(0, π/4]" },
        })
    }
}

/// cos θ|0…0⟩ + sin θ|1…1⟩.
pub fn ghz_state(n: usize, theta: f64) -> Result<StateVector> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("GHZ state needs n ≥ 2, got {n}")));
    }
    if n > DEFAULT_DENSE_LIMIT {
        return Err(Error::Guard {
            what: "dense GHZ state",
            n,
            limit: DEFAULT_DENSE_LIMIT,
        });
    }
    check_theta(theta, true)?;
    let mut amps = vec![ZERO; 1 << n];
    amps[0] = linalg::real(theta.cos());
    amps[(1 << n) - 1] = linalg::real(theta.sin());
    StateVector::normalized(n, amps)
}

/// cos 2θ computed so that θ = π/4 gives exactly zero.
pub fn cos_2theta(theta: f64) -> f64 {
    (FRAC_PI_2 - 2.0 * theta).sin()
}

/// S₁ = sin2θ·X…X + cos2θ·Z₁ and S_i = Z₁Z_i.
pub fn tilted_stabilizers(n: usize, theta: f64) -> Result<Vec<PauliSum>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("tilted GHZ needs n ≥ 2, got {n}")));
    }
    check_theta(theta, false)?;
    let s = (2.0 * theta).sin();
    let c = cos_2theta(theta);
    let mut first = vec![PauliWord::new(vec![Letter::X; n], s)?];
    if c != 0.0 {
        first.push(PauliWord::single(n, 0, Letter::Z).scaled(c)?);
    }
    let mut out = vec![PauliSum::new(first)?];
    for i in 1..n {
        let mut letters = vec![Letter::I; n];
        letters[0] = Letter::Z;
        letters[i] = Letter::Z;
        out.push(PauliWord::new(letters, 1.0)?.into());
    }
    Ok(out)
}

/// ⟨v|op|v⟩ for a real-coefficient Pauli sum.
pub fn expectation(op: &PauliSum, v: &StateVector) -> Result<f64> {
    if op.n() != v.n() {
        return Err(Error::SizeMismatch {
            expected: op.n(),
            found: v.n(),
        });
    }
    let value = linalg::inner(v.amplitudes(), &op.apply(v)?);
    if value.im.abs() > NORM_TOL {
        return Err(Error::NonHermitian(value.im));
    }
    Ok(value.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::Builtin;
    use crate::linalg::{distance, hadamard, real};
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_6, FRAC_PI_8};

    fn word(s: &str) -> PauliWord {
        PauliWord::parse(s).unwrap()
    }

    fn words_of(g: &Graph) -> Vec<String> {
        stabilizer_generators(g).iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn generators_examples() {
        let k2 = Graph::builtin(Builtin::Complete, 2).unwrap();
        assert_eq!(words_of(&k2), vec!["XZ", "ZX"]);
        let star = Graph::builtin(Builtin::Star, 4).unwrap();
        assert_eq!(words_of(&star), vec!["XZZZ", "ZXII", "ZIXI", "ZIIX"]);
        let ring = Graph::builtin(Builtin::Ring, 5).unwrap();
        assert_eq!(words_of(&ring), vec!["XZIIZ", "ZXZII", "IZXZI", "IIZXZ", "ZIIZX"]);
    }

    #[test]
    fn apply_word_basics() {
        let zero = StateVector::basis(1, 0).unwrap();
        let one = StateVector::basis(1, 1).unwrap();
        assert_eq!(word("X").apply(&zero).unwrap(), one.amplitudes());
        assert_eq!(word("Z").apply(&one).unwrap(), vec![ZERO, -ONE]);
        assert!(word("XZ").apply(&zero).is_err());

        let g = Graph::builtin(Builtin::Ring, 5).unwrap();
        let v = StateVector::normalized(
            5,
            (0..32).map(|i| C64::new(i as f64, (i * i) as f64 * 0.1)).collect(),
        )
        .unwrap();
        for gi in stabilizer_generators(&g) {
            let once = StateVector::new(5, gi.apply(&v).unwrap()).unwrap();
            let twice = gi.apply(&once).unwrap();
            assert!(distance(&twice, v.amplitudes()) < 1e-12);
        }
    }

    #[test]
    fn k2_graph_state() {
        let g = Graph::builtin(Builtin::Complete, 2).unwrap();
        let v = graph_state(&g).unwrap();
        let expected = [0.5, 0.5, 0.5, -0.5].map(real);
        assert!(distance(v.amplitudes(), &expected) < 1e-15);
    }

    #[test]
    fn ring3_signs() {
        // edge parity of every subset of the triangle, τ = 000 … 111
        let g = Graph::builtin(Builtin::Ring, 3).unwrap();
        let signs: Vec<i32> = graph_state(&g)
            .unwrap()
            .amplitudes()
            .iter()
            .map(|a| a.re.signum() as i32)
            .collect();
        assert_eq!(signs, vec![1, 1, 1, -1, 1, -1, -1, -1]);
    }

    #[test]
    fn graph_state_dense_limit() {
        let g = Graph::builtin(Builtin::Ring, 6).unwrap();
        assert!(graph_state_with_limit(&g, 5).unwrap_err().is_guard());
    }

    #[test]
    fn ghz_examples() {
        let v = ghz_state(3, FRAC_PI_4).unwrap();
        assert!((v.amplitudes()[0].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((v.amplitudes()[7].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(v.amplitudes().iter().filter(|a| a.norm() > 0.0).count(), 2);
        let t = ghz_state(4, FRAC_PI_8).unwrap();
        assert!((t.amplitudes()[0].re - FRAC_PI_8.cos()).abs() < 1e-15);
        assert!((t.amplitudes()[15].re - FRAC_PI_8.sin()).abs() < 1e-15);
        assert!(ghz_state(3, 1.0).is_err());
        assert!(ghz_state(3, -0.1).is_err());
    }

    #[test]
    fn tilted_stabilizers_at_pi_over_4_are_hadamard_star() {
        for n in 2..6 {
            let star = Graph::builtin(Builtin::Star, n).unwrap();
            let leaves: Vec<usize> = (1..n).collect();
            let conj: Vec<PauliSum> = stabilizer_generators(&star)
                .iter()
                .map(|w| w.hadamard_conjugate(&leaves).into())
                .collect();
            assert_eq!(tilted_stabilizers(n, FRAC_PI_4).unwrap(), conj);
        }
        assert!(tilted_stabilizers(3, 0.0).is_err());
    }

    #[test]
    fn tilted_stabilizer_two_qubit_matrix() {
        // explicit 4×4 check of S₁ = sin2θ XX + cos2θ Z⊗1 at θ = π/6
        let theta = FRAC_PI_6;
        let (s, c) = ((2.0 * theta).sin(), (2.0 * theta).cos());
        let m = [
            [c, 0.0, 0.0, s],
            [0.0, c, s, 0.0],
            [0.0, s, -c, 0.0],
            [s, 0.0, 0.0, -c],
        ];
        let psi = [theta.cos(), 0.0, 0.0, theta.sin()];
        let image: Vec<f64> = m
            .iter()
            .map(|row| row.iter().zip(&psi).map(|(a, b)| a * b).sum())
            .collect();
        for (a, b) in image.iter().zip(&psi) {
            assert!((a - b).abs() < 1e-15);
        }
        let ghz = ghz_state(2, theta).unwrap();
        let s1 = &tilted_stabilizers(2, theta).unwrap()[0];
        assert!(distance(&s1.apply(&ghz).unwrap(), ghz.amplitudes()) < 1e-15);
    }

    #[test]
    fn tilted_stabilizers_stabilize() {
        for n in 2..7 {
            for theta in [FRAC_PI_8, FRAC_PI_6, FRAC_PI_4, 0.05] {
                let v = ghz_state(n, theta).unwrap();
                for s in tilted_stabilizers(n, theta).unwrap() {
                    assert!((expectation(&s, &v).unwrap() - 1.0).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn expectation_examples() {
        let star = Graph::builtin(Builtin::Star, 5).unwrap();
        let psi = graph_state(&star).unwrap();
        let g1: PauliSum = stabilizer_generators(&star)[0].clone().into();
        assert!((expectation(&g1, &psi).unwrap() - 1.0).abs() < 1e-14);

        let z1: PauliSum = PauliWord::single(4, 0, Letter::Z).into();
        assert!(expectation(&z1, &ghz_state(4, FRAC_PI_4).unwrap()).unwrap().abs() < 1e-15);
        let theta = 0.3;
        let value = expectation(&z1, &ghz_state(4, theta).unwrap()).unwrap();
        let oracle = theta.cos().powi(2) - theta.sin().powi(2);
        assert!((value - oracle).abs() < 1e-15);
    }

    #[test]
    fn hadamard_leaves_of_star_give_ghz() {
        for n in 2..7 {
            let star = Graph::builtin(Builtin::Star, n).unwrap();
            let mut v = graph_state(&star).unwrap();
            for q in 1..n {
                v = v.with_gate(q, &hadamard()).unwrap();
            }
            let ghz = ghz_state(n, FRAC_PI_4).unwrap();
            assert!(distance(v.amplitudes(), ghz.amplitudes()) < 1e-13);
        }
    }

    #[test]
    fn word_commutation() {
        assert!(!word("XI").commutes_with(&word("ZI")));
        assert!(word("XX").commutes_with(&word("ZZ")));
        assert!(word("XZ").commutes_with(&word("ZX")));
    }

    #[test]
    fn pauli_sum_merges() {
        let s = PauliSum::new(vec![word("XZ"), word("XZ"), word("ZZ"), word("-ZZ")]).unwrap();
        assert_eq!(s.words().len(), 1);
        assert_eq!(s.words()[0].coeff(), 2.0);
        assert!(PauliSum::new(vec![word("XZ"), word("X")]).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = ghz_state(3, 0.4).unwrap();
        let (data, header) = (dir.path().join("psi.bin"), dir.path().join("psi.json"));
        v.write_dump(&data, &header).unwrap();
        assert_eq!(std::fs::metadata(&data).unwrap().len(), 8 * 16);
        assert_eq!(StateVector::read_dump(&data, &header).unwrap(), v);
    }
}
