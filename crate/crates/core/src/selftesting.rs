//! SWAP-isometry extraction of the target state from black-box observables.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::bounds::ObservableSet;
use crate::certificates::tilted_party_one;
use crate::error::{Error, Result};
use crate::inequalities::{BellExpression, Family};
use crate::linalg::{self, apply_local, hermitian_defect, identity2, real, unit_square_defect, Mat2, C64, ZERO};
use crate::pauli_states::StateVector;

/// Largest source size for the isometry (output has 4^N amplitudes).
pub const ISOMETRY_LIMIT: usize = 10;
/// Singular values above this count towards the Schmidt rank.
pub const SCHMIDT_TOL: f64 = 1e-8;

/// Sign function of a 2×2 Hermitian matrix, `m |m|⁻¹`, with the kernel sent to +1.
pub fn regularize(m: &Mat2) -> Mat2 {
    let a = 0.5 * (m[(0, 0)].re + m[(1, 1)].re);
    let bz = 0.5 * (m[(0, 0)].re - m[(1, 1)].re);
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)].conj());
    let r = (bz * bz + off.norm_sqr()).sqrt();
    let scale = a.abs().max(r).max(1.0);
    let zero = 1e-14 * scale;
    let sign = |x: f64| if x < -zero { -1.0 } else { 1.0 };
    if r <= zero {
        return identity2() * real(sign(a));
    }
    // Projectors onto the a ± r eigenspaces are (1 ± n·σ)/2.
    let n_sigma = Mat2::new(real(bz / r), off / r, off.conj() / r, real(-bz / r));
    let (sp, sm) = (sign(a + r), sign(a - r));
    identity2() * real(0.5 * (sp + sm)) + n_sigma * real(0.5 * (sp - sm))
}

/// How the party-level X/Z operators are obtained from the observables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Extraction {
    /// X = reg((A0+A1)/√2), Z = reg((A0−A1)/√2) at substituted parties.
    Graph { substituted: Vec<usize> },
    /// Party 0 uses denominators 2 sin μ and 2 cos μ.
    Tilted { theta: f64 },
}

impl Extraction {
    pub fn for_expression(e: &BellExpression) -> Result<Self> {
        match e.family() {
            Family::TiltedGhz => Ok(Extraction::Tilted {
                theta: e.meta().theta.ok_or_else(|| Error::Parse("tilted expression without theta".into()))?,
            }),
            Family::Custom => Err(Error::NoClosedForm(Family::Custom.to_string())),
            _ => Ok(Extraction::Graph {
                substituted: e.meta().substituted.clone(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedOps {
    pub x: Vec<Mat2>,
    pub z: Vec<Mat2>,
    pub kind: Extraction,
}

impl ExtractedOps {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Largest deviation from Hermitian unitarity.
    pub fn max_defect(&self) -> f64 {
        self.x
            .iter()
            .chain(&self.z)
            .map(|m| hermitian_defect(m).max(unit_square_defect(m)))
            .fold(0.0, f64::max)
    }
}

pub fn extracted_operators(obs: &ObservableSet, kind: &Extraction) -> Result<ExtractedOps> {
    let n = obs.n();
    let mut x: Vec<Mat2> = obs.pairs().iter().map(|p| p.0).collect();
    let mut z: Vec<Mat2> = obs.pairs().iter().map(|p| p.1).collect();
    match kind {
        Extraction::Graph { substituted } => {
            for &j in substituted {
                if j >= n {
                    return Err(Error::VertexOutOfRange { vertex: j + 1, n });
                }
                let (a0, a1) = obs.pair(j);
                x[j] = regularize(&((a0 + a1) * real(1.0 / SQRT_2)));
                z[j] = regularize(&((a0 - a1) * real(1.0 / SQRT_2)));
            }
        }
        Extraction::Tilted { theta } => {
            if n == 0 {
                return Err(Error::EmptyGraph);
            }
            let (a0, a1) = obs.pair(0);
            let (xt, zt) = tilted_party_one(*theta, a0, a1)?;
            x[0] = regularize(&xt);
            z[0] = regularize(&zt);
        }
    }
    Ok(ExtractedOps {
        x,
        z,
        kind: kind.clone(),
    })
}

/// `Σ_τ |τ⟩ ⊗ Π_j X_j^{τ_j} Z_j^{(τ_j)} |v⟩`, normalized, ancillas first.
///
/// `Z^{(τ)} = (1 + (−1)^τ Z)/2`. Output index is `(τ << N) | s`.
pub fn swap_isometry_output(v: &StateVector, ops: &ExtractedOps) -> Result<StateVector> {
    let n = v.n();
    if ops.n() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: ops.n(),
        });
    }
    if n > ISOMETRY_LIMIT {
        return Err(Error::Guard {
            what: "SWAP isometry",
            n,
            limit: ISOMETRY_LIMIT,
        });
    }
    let one = identity2();
    let branch_ops: Vec<[Mat2; 2]> = (0..n)
        .map(|j| {
            let p0 = (one + ops.z[j]) * real(0.5);
            let p1 = (one - ops.z[j]) * real(0.5);
            [p0, ops.x[j] * p1]
        })
        .collect();
    let dim = v.dim();
    let mut out = vec![ZERO; dim * dim];
    out.par_chunks_mut(dim).enumerate().for_each(|(tau, chunk)| {
        chunk.copy_from_slice(v.amplitudes());
        for (j, ops) in branch_ops.iter().enumerate() {
            let bit = tau >> (n - 1 - j) & 1;
            apply_local(chunk, n, j, &ops[bit]);
        }
    });
    StateVector::normalized(2 * n, out)
}

/// `w_s = Σ_a conj(t_a) out[a, s]`; the fidelity is ‖w‖².
fn overlap_with_ancilla(out: &StateVector, target: &StateVector) -> Result<Vec<C64>> {
    let n = target.n();
    if out.n() != 2 * n {
        return Err(Error::SizeMismatch {
            expected: 2 * n,
            found: out.n(),
        });
    }
    let dim = target.dim();
    let amps = out.amplitudes();
    let mut w = vec![ZERO; dim];
    for (a, t) in target.amplitudes().iter().enumerate() {
        let row = &amps[a * dim..(a + 1) * dim];
        let tc = t.conj();
        for (ws, x) in w.iter_mut().zip(row) {
            *ws += tc * x;
        }
    }
    Ok(w)
}

/// `⟨t| ρ_anc |t⟩` with ρ_anc the reduced state of the ancilla register.
pub fn extraction_fidelity(out: &StateVector, target: &StateVector) -> Result<f64> {
    let w = overlap_with_ancilla(out, target)?;
    Ok(w.iter().map(|z| z.norm_sqr()).sum())
}

/// Singular values across the (ancilla | source) cut, descending.
pub fn schmidt_coefficients(out: &StateVector) -> Result<Vec<f64>> {
    if !out.n().is_multiple_of(2) {
        return Err(Error::InvalidArgument("isometry output must have an even qubit count".into()));
    }
    let dim = 1usize << (out.n() / 2);
    let m = DMatrix::from_row_slice(dim, dim, out.amplitudes());
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

pub fn schmidt_rank(out: &StateVector) -> Result<usize> {
    Ok(schmidt_coefficients(out)?.iter().filter(|&&s| s > SCHMIDT_TOL).count())
}

/// Eigenvalues of ρ_anc (squared Schmidt coefficients).
pub fn ancilla_spectrum(out: &StateVector) -> Result<Vec<f64>> {
    Ok(schmidt_coefficients(out)?.into_iter().map(|s| s * s).collect())
}

/// `‖{X_i, Z_i} v‖` for every party.
pub fn anticommutator_norms(v: &StateVector, ops: &ExtractedOps) -> Vec<f64> {
    (0..ops.n())
        .map(|i| {
            let ac = ops.x[i] * ops.z[i] + ops.z[i] * ops.x[i];
            linalg::norm(&v.apply_local(i, &ac))
        })
        .collect()
}

/// Conjugate one party's observables by a rotation of angle `eps` in the XZ plane.
pub fn rotate_party(obs: &ObservableSet, party: usize, eps: f64) -> Result<ObservableSet> {
    let (s, c) = eps.sin_cos();
    let r = linalg::mat2(c, -s, s, c);
    let rt = r.adjoint();
    let (a0, a1) = obs.pair(party);
    let mut out = obs.clone();
    out.replace(party, (r * a0 * rt, r * a1 * rt));
    ObservableSet::new(out.pairs().to_vec())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelfTestReport {
    pub n: usize,
    pub extraction: Extraction,
    pub fidelity: f64,
    pub anticommutator_norms: Vec<f64>,
    pub schmidt_rank: usize,
    pub ancilla_spectrum: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Extract with the operators implied by `e`, compare with its target state.
pub fn selftest_report(e: &BellExpression, v: &StateVector, obs: &ObservableSet, tol: f64) -> Result<SelfTestReport> {
    if let Some(g) = &e.meta().graph {
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
    }
    if v.n() != e.n() {
        return Err(Error::SizeMismatch {
            expected: e.n(),
            found: v.n(),
        });
    }
    let kind = Extraction::for_expression(e)?;
    let ops = extracted_operators(obs, &kind)?;
    let out = swap_isometry_output(v, &ops)?;
    let fidelity = extraction_fidelity(&out, &e.target_state()?)?;
    let norms = anticommutator_norms(v, &ops);
    let spectrum = ancilla_spectrum(&out)?;
    let rank = spectrum.iter().filter(|&&p| p.sqrt() > SCHMIDT_TOL).count();
    let pass = fidelity > 1.0 - tol && norms.iter().all(|&x| x < tol);
    Ok(SelfTestReport {
        n: e.n(),
        extraction: kind,
        fidelity,
        anticommutator_norms: norms,
        schmidt_rank: rank,
        ancilla_spectrum: spectrum,
        tolerance: tol,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::canonical_observables;
    use crate::graphs::{Builtin, Graph};
    use crate::inequalities::{build_ghz_inequality, build_graph_inequality, build_tilted_ghz};
    use crate::linalg::{sigma_h, sigma_x, sigma_z};
    use crate::robustness::{jordan_observables, AngleVector};
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6, FRAC_PI_8};

    fn close(a: &Mat2, b: &Mat2) -> bool {
        (a - b).norm() < 1e-13
    }

    #[test]
    fn regularize_examples() {
        assert!(close(&regularize(&(sigma_x() * real(0.7))), &sigma_x()));
        assert!(close(&regularize(&Mat2::zeros()), &identity2()));
        assert!(close(&regularize(&sigma_h()), &sigma_h()));
        assert!(close(&regularize(&(identity2() * real(-2.0))), &(identity2() * real(-1.0))));
        // rank one: projector onto |0⟩ → kernel |1⟩ sent to +1
        assert!(close(&regularize(&linalg::mat2(1.0, 0.0, 0.0, 0.0)), &identity2()));
        assert!(close(&regularize(&linalg::mat2(2.0, 0.0, 0.0, -0.5)), &sigma_z()));
    }

    #[test]
    fn regularize_is_unitary_hermitian() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let off = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let m = Mat2::new(real(rng.random::<f64>() - 0.5), off, off.conj(), real(rng.random::<f64>() - 0.5));
            let r = regularize(&m);
            assert!(hermitian_defect(&r) < 1e-14 && unit_square_defect(&r) < 1e-13);
            // commutes with m and has the sign of its eigenvalues
            assert!((r * m - m * r).norm() < 1e-13);
            let rm = r * m;
            assert!(linalg::hermitian_eigenvalues(&DMatrix::from_fn(2, 2, |i, j| rm[(i, j)]))[0] >= -1e-13);
        }
    }

    #[test]
    fn extracted_canonical_operators() {
        let e = build_graph_inequality(&Graph::builtin(Builtin::Ring, 5).unwrap()).unwrap();
        let ops = extracted_operators(&canonical_observables(&e).unwrap(), &Extraction::for_expression(&e).unwrap()).unwrap();
        assert!(close(&ops.x[0], &sigma_x()) && close(&ops.z[0], &sigma_z()));
        for theta in [FRAC_PI_8, FRAC_PI_6, FRAC_PI_4] {
            let t = build_tilted_ghz(3, theta).unwrap();
            let ops = extracted_operators(&canonical_observables(&t).unwrap(), &Extraction::for_expression(&t).unwrap()).unwrap();
            assert!(close(&ops.x[0], &sigma_x()) && close(&ops.z[0], &sigma_z()));
        }
    }

    #[test]
    fn single_qubit_isometry() {
        let plus = StateVector::uniform(1);
        let ops = ExtractedOps {
            x: vec![sigma_x()],
            z: vec![sigma_z()],
            kind: Extraction::Graph { substituted: vec![] },
        };
        let out = swap_isometry_output(&plus, &ops).unwrap();
        // |0⟩⊗P0|+⟩ + |1⟩⊗X P1|+⟩ = (|00⟩ + |10⟩)/√2
        let h = 1.0 / SQRT_2;
        let expected = [h, 0.0, h, 0.0];
        for (a, b) in out.amplitudes().iter().zip(expected) {
            assert!((a - real(b)).norm() < 1e-15);
        }
        assert!((extraction_fidelity(&out, &plus).unwrap() - 1.0).abs() < 1e-15);
        assert!(extraction_fidelity(&out, &StateVector::normalized(1, vec![real(1.0), real(-1.0)]).unwrap()).unwrap() < 1e-15);
    }

    #[test]
    fn ideal_graph_and_tilted_self_test() {
        for n in 2..=6 {
            for kind in [Builtin::Star, Builtin::Ring, Builtin::Line] {
                let Ok(g) = Graph::builtin(kind, n) else { continue };
                let e = build_graph_inequality(&g).unwrap();
                let r = selftest_report(&e, &e.target_state().unwrap(), &canonical_observables(&e).unwrap(), 1e-10).unwrap();
                assert!(r.pass, "{kind} {n}: {r:?}");
                assert_eq!(r.schmidt_rank, 1);
            }
            for theta in [FRAC_PI_8, FRAC_PI_6, FRAC_PI_4] {
                let e = build_tilted_ghz(n, theta).unwrap();
                let psi = e.target_state().unwrap();
                let ops = extracted_operators(&canonical_observables(&e).unwrap(), &Extraction::for_expression(&e).unwrap()).unwrap();
                let out = swap_isometry_output(&psi, &ops).unwrap();
                assert!((extraction_fidelity(&out, &psi).unwrap() - 1.0).abs() < 1e-10);
                // source register is left in |0…0⟩
                assert!((out.amplitudes()[0] - psi.amplitudes()[0]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn fidelity_phase_invariant() {
        let e = build_ghz_inequality(4).unwrap();
        let psi = e.target_state().unwrap();
        let ops = extracted_operators(&canonical_observables(&e).unwrap(), &Extraction::for_expression(&e).unwrap()).unwrap();
        let out = swap_isometry_output(&psi, &ops).unwrap();
        let phase = C64::from_polar(1.0, 0.9);
        let shifted = StateVector::new(4, psi.amplitudes().iter().map(|a| a * phase).collect()).unwrap();
        let out_shifted = StateVector::new(8, out.amplitudes().iter().map(|a| a * phase).collect()).unwrap();
        let f = extraction_fidelity(&out, &psi).unwrap();
        assert!((extraction_fidelity(&out, &shifted).unwrap() - f).abs() < 1e-14);
        assert!((extraction_fidelity(&out_shifted, &psi).unwrap() - f).abs() < 1e-14);
    }

    #[test]
    fn degenerate_observables_fail() {
        let e = build_ghz_inequality(5).unwrap();
        let mut obs = canonical_observables(&e).unwrap();
        obs.replace(1, (sigma_x(), sigma_x()));
        let r = selftest_report(&e, &e.target_state().unwrap(), &obs, 1e-10).unwrap();
        assert!(!r.pass);
        assert!(r.anticommutator_norms[1] > 1.0);
        assert!(r.anticommutator_norms[0] < 1e-12);
    }

    #[test]
    fn disconnected_refused() {
        let g = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        let e = build_graph_inequality(&g).unwrap();
        let err = selftest_report(&e, &e.target_state().unwrap(), &canonical_observables(&e).unwrap(), 1e-10);
        assert!(matches!(err, Err(Error::Disconnected)));
    }

    #[test]
    fn rotation_costs_quadratically() {
        let e = build_graph_inequality(&Graph::builtin(Builtin::Ring, 4).unwrap()).unwrap();
        let psi = e.target_state().unwrap();
        let canon = canonical_observables(&e).unwrap();
        let kind = Extraction::for_expression(&e).unwrap();
        let loss = |eps: f64| {
            let obs = rotate_party(&canon, 0, eps).unwrap();
            let out = swap_isometry_output(&psi, &extracted_operators(&obs, &kind).unwrap()).unwrap();
            1.0 - extraction_fidelity(&out, &psi).unwrap()
        };
        let (l1, l2, l4) = (loss(0.01), loss(0.02), loss(0.04));
        assert!(l1 > 0.0);
        assert!((l2 / l1 - 4.0).abs() < 0.05, "{}", l2 / l1);
        assert!((l4 / l2 - 4.0).abs() < 0.05, "{}", l4 / l2);
    }

    #[test]
    fn detuning_degrades_monotonically() {
        let e = build_graph_inequality(&Graph::builtin(Builtin::Star, 4).unwrap()).unwrap();
        let psi = e.target_state().unwrap();
        let kind = Extraction::for_expression(&e).unwrap();
        let mut last = 1.0 + 1e-12;
        for k in 0..=16 {
            let mut angles = vec![FRAC_PI_4; 4];
            angles[1] = FRAC_PI_4 * (1.0 - k as f64 / 16.0);
            let obs = jordan_observables(&AngleVector::new(angles).unwrap(), &[0]);
            let out = swap_isometry_output(&psi, &extracted_operators(&obs, &kind).unwrap()).unwrap();
            let f = extraction_fidelity(&out, &psi).unwrap();
            assert!(f <= last + 1e-12, "step {k}: {f} > {last}");
            last = f;
        }
        assert!(last < 0.99);
    }

    #[test]
    fn guards() {
        let psi = StateVector::uniform(11);
        let ops = ExtractedOps {
            x: vec![sigma_x(); 11],
            z: vec![sigma_z(); 11],
            kind: Extraction::Graph { substituted: vec![] },
        };
        assert!(swap_isometry_output(&psi, &ops).unwrap_err().is_guard());
    }
}
