//! Validated density matrices.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, JsonMatrix, Side};

/// Entrywise Hermiticity and trace tolerance for accepted states.
pub const STATE_TOL: f64 = 1e-9;
/// Smallest eigenvalue still accepted as positive semi-definite.
pub const PSD_TOL: f64 = 1e-9;

/// A density matrix: Hermitian, unit trace, positive semi-definite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    data: CMatrix,
}

impl DensityMatrix {
    /// Validates `data` and wraps it.
    pub fn new(data: CMatrix) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::NotSquare {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        let herm = linalg::hermiticity_error(&data);
        if herm > STATE_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = linalg::trace(&data);
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidTrace(tr.re));
        }
        let min = linalg::min_eigenvalue(&data);
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(Self { data })
    }

    /// Wraps a matrix known to be a state by construction (e.g. a unitary
    /// image or a convex combination of states).
    pub(crate) fn from_trusted(data: CMatrix) -> Self {
        debug_assert!(linalg::hermiticity_error(&data) < 1e-8);
        Self { data }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            data: CMatrix::identity(dim, dim).unscale(dim as f64),
        }
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) nonzero vector.
    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::InvalidTrace(0.0));
        }
        let psi = psi.unscale(norm);
        Ok(Self {
            data: &psi * psi.adjoint(),
        })
    }

    /// `|Φ⁺⟩ = Σ_i |ii⟩/√d`.
    pub fn maximally_entangled(d: usize) -> Self {
        let mut psi = DVector::from_element(d * d, Complex64::new(0.0, 0.0));
        for i in 0..d {
            psi[i * d + i] = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
        }
        Self::pure(&psi).expect("nonzero vector")
    }

    pub fn product(a: &DensityMatrix, b: &DensityMatrix) -> Self {
        Self {
            data: linalg::kron(&a.data, &b.data),
        }
    }

    /// `Σ_k w_k ρ_k`; weights must be non-negative and sum to one.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts.first().ok_or(Error::InvalidTrace(0.0))?;
        let n = first.1.dim();
        let mut acc = CMatrix::zeros(n, n);
        let mut total = 0.0;
        for (w, rho) in parts {
            if *w < 0.0 {
                return Err(Error::OutOfRange {
                    name: "mixture weight",
                    value: *w,
                    range: "[0, 1]",
                });
            }
            linalg::check_square(&rho.data, n)?;
            acc += rho.data.scale(*w);
            total += w;
        }
        if (total - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidTrace(total));
        }
        Ok(Self { data: acc })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    /// `tr[ρ²]`.
    pub fn purity(&self) -> f64 {
        linalg::trace_product(&self.data, &self.data).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.data)
    }

    /// `(U_A ⊗ U_B) ρ (U_A ⊗ U_B)†`.
    pub fn rotate_local(&self, ua: &CMatrix, ub: &CMatrix) -> Self {
        let u = linalg::kron(ua, ub);
        Self::from_trusted(linalg::conjugate(&u, &self.data))
    }

    /// Reduced state on `side`.
    pub fn marginal(&self, d: usize, side: Side) -> Result<Self> {
        Ok(Self::from_trusted(linalg::reduced(&self.data, d, side)?))
    }

    /// `tr[ρ O]`, real part.
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        linalg::trace_product(&self.data, op).re
    }
}

/// Reduced state after tracing out `traced` (so `Side::B` leaves ρ_A).
pub fn partial_trace(rho: &DensityMatrix, traced: Side, d: usize) -> Result<DensityMatrix> {
    Ok(DensityMatrix::from_trusted(linalg::partial_trace(
        rho.matrix(),
        d,
        traced,
    )?))
}

/// Minimum eigenvalue of `ρ^{T_A}`; non-negative means PPT.
pub fn partial_transpose_min_eig(rho: &DensityMatrix, d: usize) -> Result<f64> {
    Ok(linalg::min_eigenvalue(&linalg::partial_transpose_a(
        rho.matrix(),
        d,
    )?))
}

/// Random mixed state `G G† / tr[G G†]` from a Ginibre matrix of the given rank.
pub fn random_state<R: rand::Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> DensityMatrix {
    let g = linalg::ginibre(dim, rng);
    let g = g.columns(0, rank.clamp(1, dim)).into_owned();
    let m = &g * g.adjoint();
    let tr = linalg::trace(&m).re;
    DensityMatrix::from_trusted(m.unscale(tr))
}

/// Random pure state with Gaussian amplitudes.
pub fn random_pure_state<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    random_state(dim, 1, rng)
}

impl Serialize for DensityMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        JsonMatrix(self.data.clone()).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let m = JsonMatrix::deserialize(deserializer)?;
        DensityMatrix::new(m.0).map_err(serde::de::Error::custom)
    }
}
