//! Small dense and matrix-free linear algebra shared by the other modules.
//!
//! Basis convention: qubit 0 is the most significant bit of a basis index,
//! so qubit `q` of an `n`-qubit register lives at bit `n - 1 - q`.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn mat2(a: f64, b: f64, c: f64, d: f64) -> Mat2 {
    Mat2::new(real(a), real(b), real(c), real(d))
}

pub fn identity2() -> Mat2 {
    Mat2::identity()
}

pub fn sigma_x() -> Mat2 {
    mat2(0.0, 1.0, 1.0, 0.0)
}

pub fn sigma_z() -> Mat2 {
    mat2(1.0, 0.0, 0.0, -1.0)
}

/// (σX + σZ)/√2.
pub fn sigma_h() -> Mat2 {
    (sigma_x() + sigma_z()).unscale(std::f64::consts::SQRT_2)
}

/// (σX − σZ)/√2.
pub fn sigma_v() -> Mat2 {
    (sigma_x() - sigma_z()).unscale(std::f64::consts::SQRT_2)
}

pub fn hadamard() -> Mat2 {
    sigma_h()
}

/// Largest entry-wise deviation from Hermiticity.
pub fn hermitian_defect(m: &Mat2) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry-wise deviation of `m²` from the identity.
pub fn unit_square_defect(m: &Mat2) -> f64 {
    (m * m - Mat2::identity())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Operator norm of a 2×2 Hermitian matrix (largest |eigenvalue|).
pub fn hermitian_norm(m: &Mat2) -> f64 {
    let a = 0.5 * (m[(0, 0)].re + m[(1, 1)].re);
    let d = 0.5 * (m[(0, 0)].re - m[(1, 1)].re);
    let r = (d * d + m[(0, 1)].norm_sqr()).sqrt();
    a.abs() + r
}

/// Spectral norm of an arbitrary 2×2 matrix.
pub fn operator_norm(m: &Mat2) -> f64 {
    hermitian_norm(&(m.adjoint() * m)).sqrt()
}

#[inline]
pub fn qubit_bit(n: usize, q: usize) -> usize {
    1 << (n - 1 - q)
}

/// Apply a single-qubit matrix to qubit `q` of `amps` in place.
pub fn apply_local(amps: &mut [C64], n: usize, q: usize, m: &Mat2) {
    let bit = qubit_bit(n, q);
    let (m00, m01, m10, m11) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    for i0 in 0..amps.len() {
        if i0 & bit != 0 {
            continue;
        }
        let i1 = i0 | bit;
        let (a0, a1) = (amps[i0], amps[i1]);
        amps[i0] = m00 * a0 + m01 * a1;
        amps[i1] = m10 * a0 + m11 * a1;
    }
}

/// Tensor product of single-qubit factors; `None` is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalProduct {
    factors: Vec<Option<Mat2>>,
}

impl LocalProduct {
    pub fn identity(n: usize) -> Self {
        LocalProduct {
            factors: vec![None; n],
        }
    }

    pub fn from_factors(factors: Vec<Option<Mat2>>) -> Self {
        LocalProduct { factors }
    }

    pub fn n(&self) -> usize {
        self.factors.len()
    }

    pub fn set(&mut self, q: usize, m: Mat2) {
        self.factors[q] = Some(m);
    }

    pub fn factor(&self, q: usize) -> Option<&Mat2> {
        self.factors[q].as_ref()
    }

    pub fn apply_in_place(&self, amps: &mut [C64]) {
        let n = self.n();
        for (q, m) in self.factors.iter().enumerate() {
            if let Some(m) = m {
                apply_local(amps, n, q, m);
            }
        }
    }

    pub fn apply(&self, amps: &[C64]) -> Vec<C64> {
        let mut out = amps.to_vec();
        self.apply_in_place(&mut out);
        out
    }

    /// Upper bound on the operator norm (product of local norms).
    pub fn norm_bound(&self) -> f64 {
        self.factors
            .iter()
            .flatten()
            .map(operator_norm)
            .product()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut acc = DMatrix::from_element(1, 1, ONE);
        for m in &self.factors {
            let local = match m {
                Some(m) => DMatrix::from_fn(2, 2, |r, c| m[(r, c)]),
                None => DMatrix::identity(2, 2),
            };
            acc = acc.kronecker(&local);
        }
        acc
    }
}

/// Weighted sum of local products, applied matrix-free.
#[derive(Clone, Debug)]
pub struct LocalSum {
    n: usize,
    terms: Vec<(f64, LocalProduct)>,
}

impl LocalSum {
    pub fn new(n: usize) -> Self {
        LocalSum {
            n,
            terms: Vec::new(),
        }
    }

    pub fn push(&mut self, coeff: f64, op: LocalProduct) {
        debug_assert_eq!(op.n(), self.n);
        self.terms.push((coeff, op));
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn terms(&self) -> &[(f64, LocalProduct)] {
        &self.terms
    }

    pub fn apply(&self, amps: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; amps.len()];
        for (coeff, op) in &self.terms {
            let v = op.apply(amps);
            for (o, x) in out.iter_mut().zip(v) {
                *o += x * *coeff;
            }
        }
        out
    }

    /// Sum of |coeff| times local norm bounds; dominates the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|(c, op)| c.abs() * op.norm_bound())
            .sum()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut acc = DMatrix::zeros(d, d);
        for (coeff, op) in &self.terms {
            acc += op.to_dense() * real(*coeff);
        }
        acc
    }
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Eigenvalues (ascending) of a dense Hermitian matrix.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn frobenius(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Settings for the restarted Lanczos extremal-eigenvalue solver.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LanczosConfig {
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// Residual tolerance relative to the shifted eigenvalue.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        LanczosConfig {
            krylov_dim: 60,
            max_restarts: 60,
            tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

/// Largest eigenvalue of a Hermitian operator given only its action.
///
/// The operator is shifted by `shift` (which should make it positive
/// semidefinite) before the Krylov iteration. Two starts are run, the
/// normalized all-ones vector and one seeded random vector, and the larger
/// converged estimate is returned.
pub fn largest_eigenvalue<F>(dim: usize, shift: f64, op: F, cfg: &LanczosConfig) -> Result<f64>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let shifted = |v: &[C64]| {
        let mut w = op(v);
        for (wi, vi) in w.iter_mut().zip(v) {
            *wi += vi * shift;
        }
        w
    };
    let ones = vec![real(1.0 / (dim as f64).sqrt()); dim];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let random: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let a = restarted_lanczos(dim, &shifted, ones, cfg)?;
    let b = restarted_lanczos(dim, &shifted, random, cfg)?;
    Ok(a.max(b) - shift)
}

fn restarted_lanczos<F>(dim: usize, op: &F, start: Vec<C64>, cfg: &LanczosConfig) -> Result<f64>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let m = cfg.krylov_dim.min(dim).max(1);
    let mut v0 = start;
    let mut last_residual = f64::INFINITY;
    for _ in 0..=cfg.max_restarts {
        let nv = norm(&v0);
        if nv == 0.0 {
            return Err(Error::InvalidArgument("zero Lanczos start vector".into()));
        }
        v0.iter_mut().for_each(|x| *x /= nv);

        let mut basis: Vec<Vec<C64>> = vec![v0.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        loop {
            let j = basis.len() - 1;
            let mut w = op(&basis[j]);
            alpha.push(inner(&basis[j], &w).re);
            // full reorthogonalization, applied twice
            for _ in 0..2 {
                for b in &basis {
                    let p = inner(b, &w);
                    for (wi, bi) in w.iter_mut().zip(b) {
                        *wi -= bi * p;
                    }
                }
            }
            let bn = norm(&w);
            if basis.len() == m || bn <= 1e-13 * alpha[j].abs().max(1.0) {
                break;
            }
            beta.push(bn);
            w.iter_mut().for_each(|x| *x /= bn);
            basis.push(w);
        }

        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |r, c| {
            if r == c {
                alpha[r]
            } else if r + 1 == c {
                beta[r]
            } else if c + 1 == r {
                beta[c]
            } else {
                0.0
            }
        });
        let eig = t.symmetric_eigen();
        let (idx, theta) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty tridiagonal");
        let y: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let mut ritz = vec![ZERO; dim];
        for (b, &c) in basis.iter().zip(y.iter()) {
            for (r, x) in ritz.iter_mut().zip(b) {
                *r += x * c;
            }
        }
        let av = op(&ritz);
        let residual = av
            .iter()
            .zip(&ritz)
            .map(|(a, x)| (a - x * theta).norm_sqr())
            .sum::<f64>()
            .sqrt();
        last_residual = residual;
        if residual <= cfg.tol * theta.abs().max(1.0) {
            return Ok(theta);
        }
        v0 = ritz;
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_restarts,
        residual: last_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_algebra() {
        let x = sigma_x();
        let z = sigma_z();
        assert!(unit_square_defect(&x) < 1e-15);
        assert!(unit_square_defect(&sigma_h()) < 1e-15);
        assert!(unit_square_defect(&sigma_v()) < 1e-15);
        assert!((x * z + z * x).iter().all(|v| v.norm() < 1e-15));
        assert!((hermitian_norm(&(x + z)) - 2f64.sqrt()).abs() < 1e-15);
        assert!((hermitian_norm(&(x * real(0.7))) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn local_application_matches_dense() {
        let mut p = LocalProduct::identity(3);
        p.set(0, sigma_x());
        p.set(2, sigma_h());
        let v: Vec<C64> = (0..8).map(|i| C64::new(i as f64, 0.5 * i as f64)).collect();
        let dense = p.to_dense() * DVector::from_vec(v.clone());
        let free = p.apply(&v);
        assert!(distance(dense.as_slice(), &free) < 1e-12);
    }

    #[test]
    fn qubit_zero_is_most_significant() {
        let mut v = vec![ZERO; 4];
        v[0] = ONE;
        apply_local(&mut v, 2, 0, &sigma_x());
        assert_eq!(v[2], ONE);
    }

    #[test]
    fn lanczos_matches_dense() {
        let mut sum = LocalSum::new(4);
        for q in 0..4 {
            let mut p = LocalProduct::identity(4);
            p.set(q, sigma_z());
            p.set((q + 1) % 4, sigma_x());
            sum.push(0.3 + q as f64 * 0.1, p);
        }
        let dense = hermitian_eigenvalues(&sum.to_dense());
        let top = largest_eigenvalue(
            sum.dim(),
            sum.norm_bound(),
            |v| sum.apply(v),
            &LanczosConfig::default(),
        )
        .unwrap();
        assert!((top - dense[dense.len() - 1]).abs() < 1e-9);
    }
}
