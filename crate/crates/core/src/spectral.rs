//! Local energy eigenbases and the diagonal/off-diagonal split of the
//! interaction used by the two-point measurement protocols.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::battery::BatteryHamiltonian;
use crate::linalg::{self, CMatrix, CVector, Side};

/// Off-diagonal magnitude below which a local Hamiltonian counts as diagonal
/// in the computational basis.
const DIAGONAL_TOL: f64 = 1e-12;
/// Eigenvalues closer than this are treated as degenerate when ordering.
const DEGENERACY_TOL: f64 = 1e-9;

/// Eigenpairs with a deterministic order and phase.
///
/// A matrix that is diagonal in the computational basis keeps the basis
/// vectors `|0⟩ … |d−1⟩` in index order. Otherwise eigenvectors are sorted by
/// descending eigenvalue, degenerate ones by the index of their
/// largest-magnitude component, and each vector's largest component is made
/// real and positive.
pub fn ordered_eigenbasis(h: &CMatrix) -> (Vec<f64>, Vec<CVector>) {
    let d = h.nrows();
    if linalg::is_diagonal(h, DIAGONAL_TOL) {
        let values = (0..d).map(|i| h[(i, i)].re).collect();
        let vectors = (0..d)
            .map(|i| {
                let mut v = CVector::zeros(d);
                v[i] = Complex64::new(1.0, 0.0);
                v
            })
            .collect();
        return (values, vectors);
    }
    let (values, vecs) = linalg::hermitian_eigen(h);
    let mut pairs: Vec<(f64, CVector, usize)> = (0..d)
        .map(|k| {
            let mut v = vecs.column(k).into_owned();
            let lead = (0..d)
                .max_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm()).then(b.cmp(&a)))
                .unwrap_or(0);
            let phase = v[lead] / v[lead].norm();
            v /= phase;
            (values[k], v, lead)
        })
        .collect();
    pairs.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= DEGENERACY_TOL {
            a.2.cmp(&b.2)
        } else {
            b.0.total_cmp(&a.0)
        }
    });
    pairs.into_iter().map(|(e, v, _)| (e, v)).unzip()
}

/// Same basis as [`ordered_eigenbasis`] but always sorted by descending
/// eigenvalue (ties keep the basis order). Used to pair Schmidt vectors.
pub fn descending_eigenbasis(h: &CMatrix) -> (Vec<f64>, Vec<CVector>) {
    let (values, vectors) = ordered_eigenbasis(h);
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        if (values[a] - values[b]).abs() <= DEGENERACY_TOL {
            a.cmp(&b)
        } else {
            values[b].total_cmp(&values[a])
        }
    });
    (
        idx.iter().map(|&i| values[i]).collect(),
        idx.iter().map(|&i| vectors[i].clone()).collect(),
    )
}

pub(crate) fn projector(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// Rank-one eigenprojectors of the local Hamiltonians and the split
/// `V = Σ D_ij Π_i^A⊗Π_j^B + V_od`.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralDecomposition {
    pub d: usize,
    pub g: f64,
    pub energies_a: Vec<f64>,
    pub energies_b: Vec<f64>,
    #[serde(skip)]
    pub projectors_a: Vec<CMatrix>,
    #[serde(skip)]
    pub projectors_b: Vec<CMatrix>,
    /// `D_ij = tr[V Π_i^A⊗Π_j^B]`.
    pub diag_interaction: DMatrix<f64>,
    /// `E_ij = E_i^A + E_j^B + g D_ij`.
    pub joint_energies: DMatrix<f64>,
    #[serde(skip)]
    pub v_offdiag: CMatrix,
    /// `H_D = H_AB − g V_od`.
    #[serde(skip)]
    pub h_diag: CMatrix,
    pub trace_a: f64,
    pub trace_b: f64,
}

pub fn spectral_decomposition(h: &BatteryHamiltonian) -> SpectralDecomposition {
    let d = h.d();
    let (energies_a, vecs_a) = ordered_eigenbasis(h.h_a());
    let (energies_b, vecs_b) = ordered_eigenbasis(h.h_b());
    let projectors_a: Vec<CMatrix> = vecs_a.iter().map(projector).collect();
    let projectors_b: Vec<CMatrix> = vecs_b.iter().map(projector).collect();
    let v = h.v();
    let mut diag_interaction = DMatrix::zeros(d, d);
    let mut v_diag = CMatrix::zeros(d * d, d * d);
    for (i, pa) in projectors_a.iter().enumerate() {
        for (j, pb) in projectors_b.iter().enumerate() {
            let dij = linalg::trace_with_product(v, pa, pb, d).re;
            diag_interaction[(i, j)] = dij;
            v_diag += linalg::kron(pa, pb).scale(dij);
        }
    }
    let v_offdiag = v - &v_diag;
    let joint_energies = DMatrix::from_fn(d, d, |i, j| {
        energies_a[i] + energies_b[j] + h.g() * diag_interaction[(i, j)]
    });
    let h_diag = h.matrix() - v_offdiag.scale(h.g());
    SpectralDecomposition {
        d,
        g: h.g(),
        energies_a,
        energies_b,
        projectors_a,
        projectors_b,
        diag_interaction,
        joint_energies,
        v_offdiag,
        h_diag,
        trace_a: linalg::trace(h.h_a()).re,
        trace_b: linalg::trace(h.h_b()).re,
    }
}

impl SpectralDecomposition {
    pub fn projectors(&self, side: Side) -> &[CMatrix] {
        match side {
            Side::A => &self.projectors_a,
            Side::B => &self.projectors_b,
        }
    }

    pub fn energies(&self, side: Side) -> &[f64] {
        match side {
            Side::A => &self.energies_a,
            Side::B => &self.energies_b,
        }
    }

    /// `Π_i^A ⊗ Π_j^B`.
    pub fn joint_projector(&self, i: usize, j: usize) -> CMatrix {
        linalg::kron(&self.projectors_a[i], &self.projectors_b[j])
    }

    /// The diagonal Hamiltonian as a battery with `V_od = 0`.
    pub fn diagonal_battery(&self) -> BatteryHamiltonian {
        let d = self.d;
        let mut h_a = CMatrix::zeros(d, d);
        for (e, p) in self.energies_a.iter().zip(&self.projectors_a) {
            h_a += p.scale(*e);
        }
        let mut h_b = CMatrix::zeros(d, d);
        for (e, p) in self.energies_b.iter().zip(&self.projectors_b) {
            h_b += p.scale(*e);
        }
        let mut v = CMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                v += self.joint_projector(i, j).scale(self.diag_interaction[(i, j)]);
            }
        }
        BatteryHamiltonian::new(h_a, h_b, v, self.g)
            .expect("diagonal part of a valid battery is a valid battery")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_battery(d: usize, seed: u64) -> BatteryHamiltonian {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BatteryHamiltonian::new(
            linalg::random_hermitian(d, &mut rng),
            linalg::random_hermitian(d, &mut rng),
            linalg::random_hermitian(d * d, &mut rng),
            0.7,
        )
        .unwrap()
    }

    #[test]
    fn ising_uses_computational_projectors_and_no_offdiagonal_part() {
        let h = BatteryHamiltonian::ising(0.5, 1.0, 0.5, 0.45);
        let s = spectral_decomposition(&h);
        for (i, p) in s.projectors_a.iter().enumerate() {
            assert!((p[(i, i)].re - 1.0).abs() < 1e-15);
            assert!((linalg::trace(p).re - 1.0).abs() < 1e-15);
        }
        assert!(linalg::max_abs(&s.v_offdiag) < 1e-15);
        // E = -J1 twice on the A side (|01⟩ and |10⟩)
        assert!((s.energies_a[1] + 0.5).abs() < 1e-15 && (s.energies_a[2] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn decomposition_invariants_on_random_batteries() {
        for (d, seed) in [(2, 1), (3, 2), (4, 3)] {
            let h = random_battery(d, seed);
            let s = spectral_decomposition(&h);
            let sum_a: CMatrix = s.projectors_a.iter().sum();
            let sum_b: CMatrix = s.projectors_b.iter().sum();
            assert!(linalg::max_abs_diff(&sum_a, &linalg::identity(d)) < 1e-12);
            assert!(linalg::max_abs_diff(&sum_b, &linalg::identity(d)) < 1e-12);
            for i in 0..d {
                for j in 0..d {
                    let t = linalg::trace_with_product(&s.v_offdiag, &s.projectors_a[i], &s.projectors_b[j], d);
                    assert!(t.norm() < 1e-12);
                }
            }
            let rebuilt = &s.h_diag + s.v_offdiag.scale(h.g());
            assert!(linalg::max_abs_diff(&rebuilt, &h.matrix()) < 1e-12);
            let mut from_spectrum = CMatrix::zeros(d * d, d * d);
            for i in 0..d {
                for j in 0..d {
                    from_spectrum += s.joint_projector(i, j).scale(s.joint_energies[(i, j)]);
                }
            }
            assert!(linalg::max_abs_diff(&from_spectrum, &s.h_diag) < 1e-12);
            assert!(linalg::max_abs_diff(&s.diagonal_battery().matrix(), &s.h_diag) < 1e-12);
        }
    }

    #[test]
    fn eigenbasis_is_deterministic_and_descending() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = linalg::random_hermitian(4, &mut rng);
        let (e1, v1) = ordered_eigenbasis(&h);
        let (e2, v2) = ordered_eigenbasis(&h);
        assert_eq!(e1, e2);
        assert_eq!(v1, v2);
        assert!(e1.windows(2).all(|w| w[0] >= w[1]));
        for (e, v) in e1.iter().zip(&v1) {
            let hv = &h * v;
            assert!((hv - v.scale(*e)).camax() < 1e-10);
        }
    }
}
